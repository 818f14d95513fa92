//! Binary RBF-kernel SVM trained with SMO, a k-NN baseline, and
//! cross-validated hyperparameter search.
//!
//! Class labels are `{0, 1}` externally and `{-1, +1}` inside the SVM
//! (0 maps to -1).

use serde::{Deserialize, Serialize};

use crate::data::{make_stratified_folds, Dataset, FeatureMatrix, FoldPlan};
use crate::error::{invalid, Error, Result};

/// Gap between the most violating pair at which SMO stops. Tighter than the
/// 1e-3 KKT residual bar so trained models always clear it.
const SMO_GAP_TOL: f64 = 1e-4;
const TAU: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ClassifierKind {
    SvmRbf,
    Knn,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifierSpec {
    pub kind: ClassifierKind,
    pub c_grid: Vec<f64>,
    pub gamma_grid: Vec<f64>,
    pub knn_k: usize,
    /// Used by the fixed-parameter path (inner selection loops) and, when
    /// set, collapses the corresponding grid axis.
    pub fixed_c: Option<f64>,
    pub fixed_gamma: Option<f64>,
}

impl Default for ClassifierSpec {
    fn default() -> Self {
        Self {
            kind: ClassifierKind::SvmRbf,
            c_grid: [-3, -1, 1, 3, 5, 7].iter().map(|&e| 2f64.powi(e)).collect(),
            gamma_grid: [-7, -5, -3, -1, 1, 3].iter().map(|&e| 2f64.powi(e)).collect(),
            knn_k: 3,
            fixed_c: None,
            fixed_gamma: None,
        }
    }
}

impl ClassifierSpec {
    pub fn knn(k: usize) -> Self {
        Self {
            kind: ClassifierKind::Knn,
            knn_k: k,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.kind == ClassifierKind::SvmRbf {
            if self.fixed_c.is_none() && self.c_grid.is_empty() {
                return invalid("empty C grid");
            }
            if self.fixed_gamma.is_none() && self.gamma_grid.is_empty() {
                return invalid("empty gamma grid");
            }
            let all = self
                .c_grid
                .iter()
                .chain(&self.gamma_grid)
                .chain(self.fixed_c.iter())
                .chain(self.fixed_gamma.iter());
            if all.clone().any(|v| !(v.is_finite() && *v > 0.0)) {
                return invalid("SVM hyperparameters must be positive");
            }
        } else if self.knn_k == 0 {
            return invalid("knn_k must be at least 1");
        }
        Ok(())
    }

    /// Hyperparameters of the fixed-parameter path: `fixed_c` or 1, and
    /// `fixed_gamma` or `1 / n_features`.
    pub fn default_params(&self, n_features: usize) -> (f64, f64) {
        (
            self.fixed_c.unwrap_or(1.0),
            self.fixed_gamma
                .unwrap_or(1.0 / n_features.max(1) as f64),
        )
    }

    /// Trains with fixed hyperparameters and labels `test`. A training set
    /// holding a single class predicts that class.
    pub fn fit_predict(
        &self,
        train: &FeatureMatrix,
        labels: &[usize],
        test: &FeatureMatrix,
    ) -> Result<Vec<usize>> {
        match self.kind {
            ClassifierKind::SvmRbf => {
                let (c, gamma) = self.default_params(train.n_cols());
                svm_fit_predict(train, labels, test, c, gamma)
            }
            ClassifierKind::Knn => knn_predict(train, labels, test, self.knn_k),
        }
    }

    fn c_candidates(&self) -> Vec<f64> {
        sorted_grid(self.fixed_c, &self.c_grid)
    }

    fn gamma_candidates(&self) -> Vec<f64> {
        sorted_grid(self.fixed_gamma, &self.gamma_grid)
    }
}

fn sorted_grid(fixed: Option<f64>, grid: &[f64]) -> Vec<f64> {
    match fixed {
        Some(v) => vec![v],
        None => {
            let mut g = grid.to_vec();
            g.sort_by(f64::total_cmp);
            g.dedup();
            g
        }
    }
}

fn svm_fit_predict(
    train: &FeatureMatrix,
    labels: &[usize],
    test: &FeatureMatrix,
    c: f64,
    gamma: f64,
) -> Result<Vec<usize>> {
    if let Some(only) = single_class(labels) {
        return Ok(vec![only; test.n_rows()]);
    }
    let model = svm_train(train, &to_pm(labels)?, c, gamma)?;
    Ok(svm_predict(&model, test)?.iter().map(|&s| from_pm(s)).collect())
}

fn single_class(labels: &[usize]) -> Option<usize> {
    let first = *labels.first()?;
    labels.iter().all(|&l| l == first).then_some(first)
}

pub fn to_pm(labels: &[usize]) -> Result<Vec<f64>> {
    labels
        .iter()
        .map(|&l| match l {
            0 => Ok(-1.0),
            1 => Ok(1.0),
            _ => invalid(format!("SVM is binary; got label {l}")),
        })
        .collect()
}

pub fn from_pm(s: f64) -> usize {
    usize::from(s > 0.0)
}

pub fn rbf_kernel(a: &[f64], b: &[f64], gamma: f64) -> f64 {
    let sq: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    (-gamma * sq).exp()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    /// Training-row index of each support vector.
    pub support_indices: Vec<usize>,
    pub support_vectors: Vec<Vec<f64>>,
    pub alphas: Vec<f64>,
    pub labels_pm: Vec<f64>,
    pub bias: f64,
    pub gamma: f64,
    pub c: f64,
    /// False when SMO hit its iteration cap before the gap tolerance.
    pub converged: bool,
}

impl SvmModel {
    pub fn decision_value(&self, x: &[f64]) -> f64 {
        self.support_vectors
            .iter()
            .zip(self.alphas.iter().zip(&self.labels_pm))
            .map(|(sv, (a, y))| a * y * rbf_kernel(sv, x, self.gamma))
            .sum::<f64>()
            + self.bias
    }

    pub fn n_features(&self) -> usize {
        self.support_vectors.first().map_or(0, Vec::len)
    }

    /// Dual objective `sum(a) - 1/2 sum_ij a_i a_j y_i y_j K_ij`; non-support
    /// vectors have zero multipliers and drop out.
    pub fn dual_objective(&self) -> f64 {
        let mut quad = 0.0;
        for (i, si) in self.support_vectors.iter().enumerate() {
            for (j, sj) in self.support_vectors.iter().enumerate() {
                quad += self.alphas[i]
                    * self.alphas[j]
                    * self.labels_pm[i]
                    * self.labels_pm[j]
                    * rbf_kernel(si, sj, self.gamma);
            }
        }
        self.alphas.iter().sum::<f64>() - 0.5 * quad
    }
}

/// Soft-margin dual with RBF kernel `exp(-gamma * |a - b|^2)`, solved by SMO
/// with second-order working-set selection.
pub fn svm_train(x: &FeatureMatrix, y: &[f64], c: f64, gamma: f64) -> Result<SvmModel> {
    let n = x.n_rows();
    if y.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: y.len(),
        });
    }
    if !(c.is_finite() && c > 0.0 && gamma.is_finite() && gamma > 0.0) {
        return invalid(format!("need c > 0 and gamma > 0, got c={c}, gamma={gamma}"));
    }
    if y.iter().any(|&v| v != 1.0 && v != -1.0) {
        return invalid("SVM labels must be +1 or -1");
    }
    if !(y.contains(&1.0) && y.contains(&-1.0)) {
        return invalid("SVM training needs both classes");
    }

    let k: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| rbf_kernel(x.row(i), x.row(j), gamma)).collect())
        .collect();
    let q = |i: usize, j: usize| y[i] * y[j] * k[i][j];

    let mut alpha = vec![0.0; n];
    // Gradient of 1/2 a'Qa - e'a.
    let mut grad = vec![-1.0; n];
    let max_iter = (1000 * n).max(100_000);
    let mut converged = false;

    let in_up = |a: f64, yt: f64| (yt > 0.0 && a < c) || (yt < 0.0 && a > 0.0);
    let in_low = |a: f64, yt: f64| (yt > 0.0 && a > 0.0) || (yt < 0.0 && a < c);

    for _ in 0..max_iter {
        let mut g_max = f64::NEG_INFINITY;
        let mut i_sel = usize::MAX;
        for t in 0..n {
            if in_up(alpha[t], y[t]) && -y[t] * grad[t] > g_max {
                g_max = -y[t] * grad[t];
                i_sel = t;
            }
        }
        let mut g_min = f64::INFINITY;
        let mut j_sel = usize::MAX;
        let mut best_obj = f64::INFINITY;
        for t in 0..n {
            if !in_low(alpha[t], y[t]) {
                continue;
            }
            let v = -y[t] * grad[t];
            g_min = g_min.min(v);
            if i_sel != usize::MAX && v < g_max {
                let b = g_max - v;
                let mut a = k[i_sel][i_sel] + k[t][t] - 2.0 * k[i_sel][t];
                if a <= 0.0 {
                    a = TAU;
                }
                let obj = -(b * b) / a;
                if obj < best_obj {
                    best_obj = obj;
                    j_sel = t;
                }
            }
        }
        if i_sel == usize::MAX || j_sel == usize::MAX || g_max - g_min < SMO_GAP_TOL {
            converged = true;
            break;
        }
        let (i, j) = (i_sel, j_sel);
        let (old_i, old_j) = (alpha[i], alpha[j]);
        if y[i] != y[j] {
            let mut quad = q(i, i) + q(j, j) + 2.0 * q(i, j);
            if quad <= 0.0 {
                quad = TAU;
            }
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let mut quad = q(i, i) + q(j, j) - 2.0 * q(i, j);
            if quad <= 0.0 {
                quad = TAU;
            }
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > c {
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }
        let (di, dj) = (alpha[i] - old_i, alpha[j] - old_j);
        for t in 0..n {
            grad[t] += q(i, t) * di + q(j, t) * dj;
        }
    }
    if !converged {
        log::warn!("SMO stopped at its iteration cap ({max_iter}) before reaching the gap tolerance");
    }

    // Bias: average over free vectors, else midpoint of the feasible interval.
    let mut free_sum = 0.0;
    let mut n_free = 0usize;
    let mut ub = f64::INFINITY;
    let mut lb = f64::NEG_INFINITY;
    for t in 0..n {
        let yg = y[t] * grad[t];
        if alpha[t] > 0.0 && alpha[t] < c {
            free_sum += yg;
            n_free += 1;
        } else if (alpha[t] >= c && y[t] < 0.0) || (alpha[t] <= 0.0 && y[t] > 0.0) {
            ub = ub.min(yg);
        } else {
            lb = lb.max(yg);
        }
    }
    let rho = if n_free > 0 {
        free_sum / n_free as f64
    } else {
        (ub + lb) / 2.0
    };

    let mut model = SvmModel {
        support_indices: Vec::new(),
        support_vectors: Vec::new(),
        alphas: Vec::new(),
        labels_pm: Vec::new(),
        bias: -rho,
        gamma,
        c,
        converged,
    };
    for t in 0..n {
        if alpha[t] > 0.0 {
            model.support_indices.push(t);
            model.support_vectors.push(x.row(t).to_vec());
            model.alphas.push(alpha[t]);
            model.labels_pm.push(y[t]);
        }
    }
    Ok(model)
}

/// Decision values `sum a_i y_i K(sv_i, x) + b` per row.
pub fn svm_decision_values(model: &SvmModel, x: &FeatureMatrix) -> Result<Vec<f64>> {
    if model.n_features() != x.n_cols() {
        return Err(Error::DimensionMismatch {
            expected: model.n_features(),
            got: x.n_cols(),
        });
    }
    Ok(x.rows().map(|r| model.decision_value(r)).collect())
}

/// Signs of the decision values; a zero decision value maps to +1.
pub fn svm_predict(model: &SvmModel, x: &FeatureMatrix) -> Result<Vec<f64>> {
    Ok(svm_decision_values(model, x)?
        .into_iter()
        .map(|f| if f >= 0.0 { 1.0 } else { -1.0 })
        .collect())
}

/// Majority vote among the `k` nearest training rows (Euclidean, distance
/// ties by lower index). Class ties go to the class of the nearest
/// neighbor among the tied classes.
pub fn knn_predict(
    train: &FeatureMatrix,
    labels: &[usize],
    test: &FeatureMatrix,
    k: usize,
) -> Result<Vec<usize>> {
    if train.n_cols() != test.n_cols() {
        return Err(Error::DimensionMismatch {
            expected: train.n_cols(),
            got: test.n_cols(),
        });
    }
    if k == 0 || k > train.n_rows() {
        return invalid(format!("k={k} must be in 1..={}", train.n_rows()));
    }
    let n_classes = labels.iter().max().map_or(0, |m| m + 1);
    let predictions = test
        .rows()
        .map(|q| {
            let mut order: Vec<(f64, usize)> = train
                .rows()
                .enumerate()
                .map(|(i, r)| {
                    let d: f64 = r.iter().zip(q).map(|(a, b)| (a - b) * (a - b)).sum();
                    (d, i)
                })
                .collect();
            order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let nearest = &order[..k];
            let mut votes = vec![0usize; n_classes];
            for &(_, i) in nearest {
                votes[labels[i]] += 1;
            }
            let top = *votes.iter().max().unwrap();
            nearest
                .iter()
                .map(|&(_, i)| labels[i])
                .find(|&l| votes[l] == top)
                .unwrap()
        })
        .collect();
    Ok(predictions)
}

/// Mean per-fold accuracy of `fit_predict` under a fold plan.
pub fn cross_val_accuracy<F>(x: &FeatureMatrix, labels: &[usize], plan: &FoldPlan, fit_predict: F) -> Result<f64>
where
    F: Fn(&FeatureMatrix, &[usize], &FeatureMatrix) -> Result<Vec<usize>>,
{
    let mut total = 0.0;
    for (train, test) in plan.splits() {
        let xtr = x.select_rows(&train)?;
        let ytr: Vec<usize> = train.iter().map(|&i| labels[i]).collect();
        let xte = x.select_rows(&test)?;
        let pred = fit_predict(&xtr, &ytr, &xte)?;
        let correct = test
            .iter()
            .zip(&pred)
            .filter(|(&i, &p)| labels[i] == p)
            .count();
        total += correct as f64 / test.len() as f64;
    }
    Ok(total / plan.n_folds as f64)
}

/// CV accuracy of the fixed-parameter classifier restricted to `cols`.
pub fn cv_accuracy_on_columns(
    x: &FeatureMatrix,
    labels: &[usize],
    plan: &FoldPlan,
    spec: &ClassifierSpec,
    cols: &[usize],
) -> Result<f64> {
    cross_val_accuracy(&x.select_columns(cols)?, labels, plan, |tr, ytr, te| {
        spec.fit_predict(tr, ytr, te)
    })
}

/// Result of a hyperparameter sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridChoice {
    pub c: f64,
    pub gamma: f64,
    pub cv_accuracy: f64,
}

/// Sweeps `(c, gamma)` over the spec's grids with stratified CV. Ties go
/// to the smaller `c`, then the smaller `gamma`.
pub fn grid_search_cv(
    dataset: &Dataset,
    spec: &ClassifierSpec,
    n_folds: usize,
    seed: u64,
) -> Result<GridChoice> {
    spec.validate()?;
    let labels = dataset.labels.as_slice();
    let plan = make_stratified_folds(labels, n_folds, seed)?;
    let mut best: Option<GridChoice> = None;
    for &c in &spec.c_candidates() {
        for &gamma in &spec.gamma_candidates() {
            let acc = cross_val_accuracy(&dataset.features, labels, &plan, |tr, ytr, te| {
                svm_fit_predict(tr, ytr, te, c, gamma)
            })?;
            if best.is_none_or(|b| acc > b.cv_accuracy) {
                best = Some(GridChoice {
                    c,
                    gamma,
                    cv_accuracy: acc,
                });
            }
        }
    }
    Ok(best.expect("grids validated non-empty"))
}

/// A classifier that can be trained on one fold of the outer evaluation.
pub trait Classifier: Sync {
    fn train(&self, train: &Dataset, seed: u64) -> Result<Box<dyn TrainedClassifier>>;
}

pub trait TrainedClassifier: Send + Sync {
    fn predict(&self, x: &FeatureMatrix) -> Result<Vec<usize>>;
    /// Serializable snapshot of everything learned during training.
    fn state(&self) -> serde_json::Value;
    /// Hyperparameters picked during training, if any were tuned.
    fn grid_choice(&self) -> Option<GridChoice> {
        None
    }
}

/// Inner CV folds used for the SVM hyperparameter sweep.
pub const GRID_FOLDS: usize = 5;

#[derive(Debug, Clone, Serialize)]
pub struct TrainedSvm {
    pub choice: GridChoice,
    pub model: Option<SvmModel>,
    /// Set when the training fold holds only one class.
    pub constant: Option<usize>,
}

impl TrainedClassifier for TrainedSvm {
    fn predict(&self, x: &FeatureMatrix) -> Result<Vec<usize>> {
        match (&self.model, self.constant) {
            (Some(m), _) => Ok(svm_predict(m, x)?.into_iter().map(from_pm).collect()),
            (None, Some(l)) => Ok(vec![l; x.n_rows()]),
            (None, None) => unreachable!("trained SVM without model"),
        }
    }

    fn state(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("serializable")
    }

    fn grid_choice(&self) -> Option<GridChoice> {
        Some(self.choice)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TrainedKnn {
    pub k: usize,
    pub train: FeatureMatrix,
    pub labels: Vec<usize>,
}

impl TrainedClassifier for TrainedKnn {
    fn predict(&self, x: &FeatureMatrix) -> Result<Vec<usize>> {
        knn_predict(&self.train, &self.labels, x, self.k.min(self.train.n_rows()))
    }

    fn state(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("serializable")
    }
}

/// The evaluation classifier: the SVM is tuned by a stratified grid search
/// on the training fold, then refit on all of it.
impl Classifier for ClassifierSpec {
    fn train(&self, train: &Dataset, seed: u64) -> Result<Box<dyn TrainedClassifier>> {
        match self.kind {
            ClassifierKind::Knn => Ok(Box::new(TrainedKnn {
                k: self.knn_k,
                train: train.features.clone(),
                labels: train.labels.as_slice().to_vec(),
            })),
            ClassifierKind::SvmRbf => {
                let labels = train.labels.as_slice();
                if let Some(only) = single_class(labels) {
                    let (c, gamma) = self.default_params(train.n_features());
                    return Ok(Box::new(TrainedSvm {
                        choice: GridChoice {
                            c,
                            gamma,
                            cv_accuracy: 1.0,
                        },
                        model: None,
                        constant: Some(only),
                    }));
                }
                let n_folds = GRID_FOLDS.min(min_class_count(labels)).max(2);
                let choice = grid_search_cv(train, self, n_folds, seed)?;
                let model = svm_train(&train.features, &to_pm(labels)?, choice.c, choice.gamma)?;
                Ok(Box::new(TrainedSvm {
                    choice,
                    model: Some(model),
                    constant: None,
                }))
            }
        }
    }
}

fn min_class_count(labels: &[usize]) -> usize {
    let n_classes = labels.iter().max().map_or(0, |m| m + 1);
    let mut counts = vec![0; n_classes];
    for &l in labels {
        counts[l] += 1;
    }
    counts.into_iter().filter(|&c| c > 0).min().unwrap_or(0)
}
