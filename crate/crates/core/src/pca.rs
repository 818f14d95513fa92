//! Principal component analysis on the scatter matrix `XᵀX` of the
//! mean-centered data (no `1/N` scaling).

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::classifier::ClassifierSpec;
use crate::data::{make_stratified_folds, Dataset, FeatureMatrix};
use crate::error::{invalid, Error, Result};

/// Eigenvalues above this negative floor are rounding noise and clamp to 0.
const NEG_EIGEN_FLOOR: f64 = -1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaModel {
    pub mean: Vec<f64>,
    /// `d x d` row-major; column `k` is the `k`-th principal direction.
    pub components: Vec<f64>,
    /// Descending, non-negative.
    pub eigenvalues: Vec<f64>,
    pub retained_m: usize,
}

impl PcaModel {
    pub fn n_features(&self) -> usize {
        self.mean.len()
    }

    pub fn component(&self, k: usize) -> Vec<f64> {
        let d = self.n_features();
        (0..d).map(|j| self.components[j * d + k]).collect()
    }

    /// Maps `m` score columns back to feature space: `scores · W[:, ..m]ᵀ + mean`.
    pub fn inverse_transform(&self, scores: &FeatureMatrix) -> Result<FeatureMatrix> {
        let d = self.n_features();
        let m = scores.n_cols();
        if m > d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: m,
            });
        }
        let mut values = Vec::with_capacity(scores.n_rows() * d);
        for row in scores.rows() {
            for j in 0..d {
                let w = &self.components[j * d..j * d + m];
                values.push(self.mean[j] + row.iter().zip(w).map(|(s, w)| s * w).sum::<f64>());
            }
        }
        FeatureMatrix::new(scores.n_rows(), d, values)
    }
}

pub fn fit_pca(x: &FeatureMatrix) -> Result<PcaModel> {
    let (n, d) = (x.n_rows(), x.n_cols());
    if n < 2 {
        return invalid(format!("PCA needs at least 2 rows, got {n}"));
    }
    let mut mean = vec![0.0; d];
    for row in x.rows() {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }
    // Accumulated in a fixed order so repeated fits are bit-identical.
    let mut scatter = DMatrix::<f64>::zeros(d, d);
    let mut centered = vec![0.0; d];
    for row in x.rows() {
        for j in 0..d {
            centered[j] = row[j] - mean[j];
        }
        for a in 0..d {
            for b in a..d {
                scatter[(a, b)] += centered[a] * centered[b];
            }
        }
    }
    for a in 0..d {
        for b in 0..a {
            scatter[(a, b)] = scatter[(b, a)];
        }
    }
    let eig = SymmetricEigen::new(scatter);

    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));

    let mut eigenvalues = Vec::with_capacity(d);
    let mut components = vec![0.0; d * d];
    for (k, &src) in order.iter().enumerate() {
        let lambda = eig.eigenvalues[src];
        if !lambda.is_finite() {
            return Err(Error::Numerical("non-finite eigenvalue".into()));
        }
        if lambda < NEG_EIGEN_FLOOR * (1.0 + eig.eigenvalues.amax()) {
            log::warn!("clamping eigenvalue {lambda} to 0");
        }
        eigenvalues.push(lambda.max(0.0));
        let v = eig.eigenvectors.column(src);
        // Largest-magnitude entry positive; first index wins magnitude ties.
        let pivot = (0..d).fold(0, |best, j| if v[j].abs() > v[best].abs() { j } else { best });
        let sign = if v[pivot] < 0.0 { -1.0 } else { 1.0 };
        for j in 0..d {
            components[j * d + k] = sign * v[j];
        }
    }
    Ok(PcaModel {
        mean,
        components,
        eigenvalues,
        retained_m: d,
    })
}

/// Scores on the first `m` components: `(x - mean) · W[:, ..m]`.
pub fn transform(model: &PcaModel, x: &FeatureMatrix, m: usize) -> Result<FeatureMatrix> {
    let d = model.n_features();
    if x.n_cols() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: x.n_cols(),
        });
    }
    if m == 0 || m > d {
        return invalid(format!("m={m} out of range 1..={d}"));
    }
    let mut values = Vec::with_capacity(x.n_rows() * m);
    let mut centered = vec![0.0; d];
    for row in x.rows() {
        for j in 0..d {
            centered[j] = row[j] - model.mean[j];
        }
        for k in 0..m {
            values.push((0..d).map(|j| centered[j] * model.components[j * d + k]).sum());
        }
    }
    FeatureMatrix::new(x.n_rows(), m, values)
}

/// Smallest `m` whose leading eigenvalues carry at least `threshold` of the
/// total.
pub fn select_m_by_variance(model: &PcaModel, threshold: f64) -> Result<usize> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return invalid(format!("threshold {threshold} outside (0, 1]"));
    }
    let total: f64 = model.eigenvalues.iter().sum();
    if total <= 0.0 {
        return invalid("all eigenvalues are zero");
    }
    let mut cum = 0.0;
    for (k, &l) in model.eigenvalues.iter().enumerate() {
        cum += l;
        if cum / total >= threshold - 1e-12 {
            return Ok(k + 1);
        }
    }
    Ok(model.eigenvalues.len())
}

/// Largest `m` the CV sweep considers: beyond `N_train - 1` the centered
/// training scores are numerically zero.
pub fn cv_m_cap(n_samples: usize, n_features: usize, n_folds: usize) -> usize {
    let largest_test = n_samples.div_ceil(n_folds);
    n_features.min(n_samples.saturating_sub(largest_test + 1)).max(1)
}

/// Picks `m` by stratified CV accuracy. PCA is refit on each training fold;
/// ties go to the smaller `m`.
pub fn select_m_by_cv(
    dataset: &Dataset,
    spec: &ClassifierSpec,
    n_folds: usize,
    seed: u64,
) -> Result<usize> {
    let d = dataset.n_features();
    if n_folds < 2 {
        return invalid("n_folds must be at least 2");
    }
    if d == 1 {
        return Ok(1);
    }
    let cap = cv_m_cap(dataset.n_samples(), d, n_folds);
    let curve = cv_accuracy_curve(dataset, spec, n_folds, seed, cap)?;
    Ok(argmax_first(&curve) + 1)
}

/// CV accuracy for `m = 1..=cap`.
pub fn cv_accuracy_curve(
    dataset: &Dataset,
    spec: &ClassifierSpec,
    n_folds: usize,
    seed: u64,
    cap: usize,
) -> Result<Vec<f64>> {
    let labels = dataset.labels.as_slice();
    let plan = make_stratified_folds(labels, n_folds, seed)?;
    // Project each fold once at the cap, then slice leading columns per m.
    let mut folds = Vec::with_capacity(n_folds);
    for (train, test) in plan.splits() {
        let xtr = dataset.features.select_rows(&train)?;
        let model = fit_pca(&xtr)?;
        let ztr = transform(&model, &xtr, cap)?;
        let zte = transform(&model, &dataset.features.select_rows(&test)?, cap)?;
        folds.push((train, test, ztr, zte));
    }
    let mut curve = Vec::with_capacity(cap);
    for m in 1..=cap {
        let cols: Vec<usize> = (0..m).collect();
        let mut total = 0.0;
        for (train, test, ztr, zte) in &folds {
            let ytr: Vec<usize> = train.iter().map(|&i| labels[i]).collect();
            let pred = spec.fit_predict(&ztr.select_columns(&cols)?, &ytr, &zte.select_columns(&cols)?)?;
            let correct = test.iter().zip(&pred).filter(|(&i, &p)| labels[i] == p).count();
            total += correct as f64 / test.len() as f64;
        }
        curve.push(total / n_folds as f64);
    }
    Ok(curve)
}

pub(crate) fn argmax_first(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}
