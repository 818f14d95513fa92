//! Python bindings. Matrices cross the boundary as lists of rows.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use dimred::classifier::{svm_decision_values, svm_train};
use dimred::data::{apply_normalization, fit_normalization};
use dimred::mrmr::{discretize, mrmr_select, Criterion};
use dimred::nca::{nca_fit, NcaConfig};
use dimred::pca::{fit_pca, transform};
use dimred::relieff::{relieff_rank, ReliefFConfig};
use dimred::synthgen::{generate, SynthSpec};
use dimred::{Dataset, FeatureMatrix, LabelVector, NormalizationMode, PipelineConfig, ReducerKind};

fn err(e: dimred::Error) -> PyErr {
    match e {
        dimred::Error::Numerical(_) | dimred::Error::Fold { .. } => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn matrix(rows: Vec<Vec<f64>>) -> PyResult<FeatureMatrix> {
    FeatureMatrix::from_rows(&rows).map_err(err)
}

fn dataset(x: Vec<Vec<f64>>, y: Vec<usize>) -> PyResult<Dataset> {
    Dataset::unnamed(matrix(x)?, LabelVector::new(y).map_err(err)?).map_err(err)
}

fn method(name: &str) -> PyResult<ReducerKind> {
    name.parse().map_err(err)
}

fn pipeline(config_json: Option<&str>) -> PyResult<PipelineConfig> {
    match config_json {
        Some(s) => serde_json::from_str(s).map_err(|e| PyValueError::new_err(e.to_string())),
        None => Ok(PipelineConfig::default()),
    }
}

/// Balanced synthetic data with planted informative columns scaled to [0, 1].
/// Returns `(x, y, planted)`.
#[pyfunction]
#[pyo3(signature = (n, d, informative, separation=2.0, seed=0))]
fn synth(
    n: usize,
    d: usize,
    informative: usize,
    separation: f64,
    seed: u64,
) -> PyResult<(Vec<Vec<f64>>, Vec<usize>, Vec<usize>)> {
    let (ds, planted) = generate(&SynthSpec {
        n_samples: n,
        n_features: d,
        n_informative: informative,
        separation,
        seed,
    })
    .map_err(err)?;
    Ok((ds.features.to_rows(), ds.labels.as_slice().to_vec(), planted))
}

/// Min-max scales each column to [0, 1] using the statistics of `x`.
#[pyfunction]
fn normalize(x: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
    let x = matrix(x)?;
    let p = fit_normalization(&x);
    Ok(apply_normalization(&x, &p).map_err(err)?.to_rows())
}

/// Principal component scores on the first `m` components, plus the
/// eigenvalues in descending order.
#[pyfunction]
fn pca(x: Vec<Vec<f64>>, m: usize) -> PyResult<(Vec<Vec<f64>>, Vec<f64>)> {
    let x = matrix(x)?;
    let model = fit_pca(&x).map_err(err)?;
    let z = transform(&model, &x, m).map_err(err)?;
    Ok((z.to_rows(), model.eigenvalues))
}

/// ReliefF feature weights over a full deterministic pass.
#[pyfunction]
#[pyo3(signature = (x, y, k=10))]
fn relieff(x: Vec<Vec<f64>>, y: Vec<usize>, k: usize) -> PyResult<Vec<f64>> {
    let ds = dataset(x, y)?;
    let cfg = ReliefFConfig {
        k_neighbors: k,
        ..ReliefFConfig::default()
    };
    Ok(relieff_rank(&ds.features, &ds.labels, &cfg).map_err(err)?.weights)
}

/// Greedy mRMR order of `max_m` features on ±σ-discretized columns.
#[pyfunction]
#[pyo3(signature = (x, y, max_m, criterion="miq"))]
fn mrmr(x: Vec<Vec<f64>>, y: Vec<usize>, max_m: usize, criterion: &str) -> PyResult<Vec<usize>> {
    let criterion = match criterion.to_ascii_lowercase().as_str() {
        "miq" => Criterion::Miq,
        "mid" => Criterion::Mid,
        other => return Err(PyValueError::new_err(format!("unknown criterion {other:?}; expected mid|miq"))),
    };
    let ds = dataset(x, y)?;
    let sel = mrmr_select(&discretize(&ds.features), &ds.labels, max_m, criterion).map_err(err)?;
    Ok(sel.order)
}

/// NCA feature weights and the indices covering 95% of the weight mass.
#[pyfunction]
#[pyo3(signature = (x, y, lam=1.0, sigma=1.0))]
fn nca(x: Vec<Vec<f64>>, y: Vec<usize>, lam: f64, sigma: f64) -> PyResult<(Vec<f64>, Vec<usize>)> {
    let ds = dataset(x, y)?;
    let cfg = NcaConfig {
        lambda: lam,
        sigma,
        ..NcaConfig::default()
    };
    let r = nca_fit(&ds, &cfg).map_err(err)?;
    Ok((r.weights, r.selected))
}

/// Leave-one-out accuracy of one reducer followed by the tuned SVM.
#[pyfunction]
#[pyo3(signature = (x, y, method="raw", seed=0, global_scaling=false, config_json=None))]
fn loocv_accuracy(
    x: Vec<Vec<f64>>,
    y: Vec<usize>,
    method: &str,
    seed: u64,
    global_scaling: bool,
    config_json: Option<&str>,
) -> PyResult<f64> {
    let ds = dataset(x, y)?;
    let mut cfg = pipeline(config_json)?;
    if global_scaling {
        cfg.mode = NormalizationMode::Global;
    }
    let kind = self::method(method)?;
    let r = dimred::loocv_evaluate(&ds, kind, &cfg, seed).map_err(err)?;
    Ok(r.accuracy())
}

/// A fitted reducer.
#[pyclass]
struct Reducer {
    inner: dimred::Reducer,
}

#[pymethods]
impl Reducer {
    /// Fits `method` (raw|pca|sfs|relieff|mrmr|nca) on rows already scaled
    /// to [0, 1].
    #[staticmethod]
    #[pyo3(signature = (method, x, y, seed=0, config_json=None))]
    fn fit(method: &str, x: Vec<Vec<f64>>, y: Vec<usize>, seed: u64, config_json: Option<&str>) -> PyResult<Self> {
        let ds = dataset(x, y)?;
        let cfg = pipeline(config_json)?;
        let inner = dimred::Reducer::fit(self::method(method)?, &ds, &cfg, seed).map_err(err)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn from_json(s: &str) -> PyResult<Self> {
        let inner = serde_json::from_str(s).map_err(|e| PyValueError::new_err(e.to_string()))?;
        Ok(Self { inner })
    }

    fn transform(&self, x: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
        Ok(self.inner.apply(&matrix(x)?).map_err(err)?.to_rows())
    }

    #[getter]
    fn method(&self) -> &'static str {
        self.inner.kind().name()
    }

    #[getter]
    fn output_dim(&self) -> usize {
        self.inner.output_dim()
    }

    /// Kept input columns for selection methods, `None` for projections.
    #[getter]
    fn selected(&self) -> Option<Vec<usize>> {
        self.inner.selected_features().map(<[usize]>::to_vec)
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.inner).map_err(|e| PyRuntimeError::new_err(e.to_string()))
    }

    fn __repr__(&self) -> String {
        format!("Reducer(method={:?}, output_dim={})", self.method(), self.output_dim())
    }
}

/// Soft-margin RBF SVM trained on labels in {0, 1}.
#[pyclass]
struct Svm {
    model: dimred::SvmModel,
}

#[pymethods]
impl Svm {
    #[new]
    #[pyo3(signature = (x, y, c=1.0, gamma=None))]
    fn new(x: Vec<Vec<f64>>, y: Vec<usize>, c: f64, gamma: Option<f64>) -> PyResult<Self> {
        let x = matrix(x)?;
        let gamma = gamma.unwrap_or(1.0 / x.n_cols() as f64);
        let pm = dimred::classifier::to_pm(&y).map_err(err)?;
        Ok(Self {
            model: svm_train(&x, &pm, c, gamma).map_err(err)?,
        })
    }

    fn decision_function(&self, x: Vec<Vec<f64>>) -> PyResult<Vec<f64>> {
        svm_decision_values(&self.model, &matrix(x)?).map_err(err)
    }

    fn predict(&self, x: Vec<Vec<f64>>) -> PyResult<Vec<usize>> {
        Ok(self
            .decision_function(x)?
            .into_iter()
            .map(dimred::classifier::from_pm)
            .collect())
    }

    #[getter]
    fn support_indices(&self) -> Vec<usize> {
        self.model.support_indices.clone()
    }

    #[getter]
    fn bias(&self) -> f64 {
        self.model.bias
    }
}

#[pymodule]
fn dimred_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(synth, m)?)?;
    m.add_function(wrap_pyfunction!(normalize, m)?)?;
    m.add_function(wrap_pyfunction!(pca, m)?)?;
    m.add_function(wrap_pyfunction!(relieff, m)?)?;
    m.add_function(wrap_pyfunction!(mrmr, m)?)?;
    m.add_function(wrap_pyfunction!(nca, m)?)?;
    m.add_function(wrap_pyfunction!(loocv_accuracy, m)?)?;
    m.add_class::<Reducer>()?;
    m.add_class::<Svm>()?;
    Ok(())
}
