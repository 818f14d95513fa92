//! Neighborhood component analysis with a diagonal feature weighting.
//!
//! Weighted distance `d_il = sum_j w_j² |x_ij − x_lj|`, reference-neighbor
//! probabilities `p_il ∝ exp(−d_il / σ)` over `l ≠ i`, and the regularized
//! leave-one-out objective
//!
//! ```text
//! f(w) = sum_i sum_{l≠i} p_il [y_i = y_l] − λ sum_j w_j²
//! ```
//!
//! maximized by gradient ascent with backtracking. With `p_i = sum_l p_il y_il`
//! the gradient is
//!
//! ```text
//! ∂f/∂w_j = (2 w_j / σ) sum_i sum_{l≠i} p_il (p_i − y_il) |x_ij − x_lj| − 2 λ w_j
//! ```

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, FeatureMatrix, LabelVector};
use crate::error::{invalid, Error, Result};

const INITIAL_STEP: f64 = 0.1;
const MIN_STEP: f64 = 1e-20;
/// Armijo sufficient-increase constant.
const ARMIJO: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NcaConfig {
    pub sigma: f64,
    pub lambda: f64,
    pub max_iters: usize,
    pub grad_tol: f64,
    pub init_weight: f64,
}

impl Default for NcaConfig {
    fn default() -> Self {
        Self {
            sigma: 1.0,
            lambda: 1.0,
            max_iters: 500,
            grad_tol: 1e-6,
            init_weight: 1.0,
        }
    }
}

impl NcaConfig {
    fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return invalid(format!("sigma must be positive, got {}", self.sigma));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return invalid(format!("lambda must be non-negative, got {}", self.lambda));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NcaResult {
    pub weights: Vec<f64>,
    pub objective_trace: Vec<f64>,
    pub selected: Vec<usize>,
    pub converged: bool,
}

pub fn nca_distance(w: &[f64], a: &[f64], b: &[f64]) -> f64 {
    w.iter()
        .zip(a.iter().zip(b))
        .map(|(wj, (x, y))| wj * wj * (x - y).abs())
        .sum()
}

/// Row `i` of the probability matrix, computed with the row minimum shifted
/// out before exponentiation.
fn probability_row(w: &[f64], x: &FeatureMatrix, i: usize, sigma: f64, out: &mut [f64]) {
    let xi = x.row(i);
    let mut dmin = f64::INFINITY;
    for (l, o) in out.iter_mut().enumerate() {
        if l == i {
            continue;
        }
        *o = nca_distance(w, xi, x.row(l));
        dmin = dmin.min(*o);
    }
    let mut total = 0.0;
    for (l, o) in out.iter_mut().enumerate() {
        if l == i {
            *o = 0.0;
        } else {
            *o = (-(*o - dmin) / sigma).exp();
            total += *o;
        }
    }
    for o in out.iter_mut() {
        *o /= total;
    }
}

/// `N x N` matrix of `p_il` with zero diagonal; rows sum to 1.
pub fn neighbor_probabilities(w: &[f64], x: &FeatureMatrix, cfg: &NcaConfig) -> Result<Vec<Vec<f64>>> {
    cfg.validate()?;
    check_dims(w, x)?;
    let n = x.n_rows();
    Ok((0..n)
        .map(|i| {
            let mut row = vec![0.0; n];
            probability_row(w, x, i, cfg.sigma, &mut row);
            row
        })
        .collect())
}

fn check_dims(w: &[f64], x: &FeatureMatrix) -> Result<()> {
    if w.len() != x.n_cols() {
        return Err(Error::DimensionMismatch {
            expected: x.n_cols(),
            got: w.len(),
        });
    }
    if x.n_rows() < 2 {
        return invalid("NCA needs at least 2 samples");
    }
    Ok(())
}

pub fn nca_objective(w: &[f64], x: &FeatureMatrix, y: &LabelVector, cfg: &NcaConfig) -> Result<f64> {
    Ok(objective_and_gradient(w, x, y, cfg, false)?.0)
}

pub fn nca_gradient(w: &[f64], x: &FeatureMatrix, y: &LabelVector, cfg: &NcaConfig) -> Result<Vec<f64>> {
    Ok(objective_and_gradient(w, x, y, cfg, true)?.1)
}

pub fn objective_and_gradient(
    w: &[f64],
    x: &FeatureMatrix,
    y: &LabelVector,
    cfg: &NcaConfig,
    with_gradient: bool,
) -> Result<(f64, Vec<f64>)> {
    cfg.validate()?;
    check_dims(w, x)?;
    let (n, d) = (x.n_rows(), x.n_cols());
    if y.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: y.len(),
        });
    }
    let labels = y.as_slice();
    let mut p = vec![0.0; n];
    let mut acc = vec![0.0; d];
    let mut total = 0.0;
    for i in 0..n {
        probability_row(w, x, i, cfg.sigma, &mut p);
        let p_i: f64 = (0..n)
            .filter(|&l| l != i && labels[l] == labels[i])
            .map(|l| p[l])
            .sum();
        total += p_i;
        if with_gradient {
            let xi = x.row(i);
            for l in (0..n).filter(|&l| l != i) {
                let same = if labels[l] == labels[i] { 1.0 } else { 0.0 };
                let coef = p[l] * (p_i - same);
                if coef == 0.0 {
                    continue;
                }
                for (a, (u, v)) in acc.iter_mut().zip(xi.iter().zip(x.row(l))) {
                    *a += coef * (u - v).abs();
                }
            }
        }
    }
    let reg: f64 = w.iter().map(|v| v * v).sum();
    let f = total - cfg.lambda * reg;
    let grad = if with_gradient {
        w.iter()
            .zip(&acc)
            .map(|(wj, a)| 2.0 * wj / cfg.sigma * a - 2.0 * cfg.lambda * wj)
            .collect()
    } else {
        Vec::new()
    };
    Ok((f, grad))
}

/// Gradient ascent from `w_j = init_weight`. Each iteration starts at step
/// 0.1 and halves until the Armijo increase holds; stops at `max_iters`,
/// when `|grad|_inf < grad_tol`, or when no step increases the objective.
pub fn nca_fit(dataset: &Dataset, cfg: &NcaConfig) -> Result<NcaResult> {
    let x = &dataset.features;
    let y = &dataset.labels;
    let mut w = vec![cfg.init_weight; x.n_cols()];
    let (mut f, mut g) = objective_and_gradient(&w, x, y, cfg, true)?;
    if !f.is_finite() {
        return Err(Error::Numerical("non-finite NCA objective at start".into()));
    }
    let mut trace = vec![f];
    let mut converged = false;
    for _ in 0..cfg.max_iters {
        let g_inf = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if g_inf < cfg.grad_tol {
            converged = true;
            break;
        }
        let g_sq: f64 = g.iter().map(|v| v * v).sum();
        let mut step = INITIAL_STEP;
        let mut accepted = None;
        while step >= MIN_STEP {
            let cand: Vec<f64> = w.iter().zip(&g).map(|(wj, gj)| wj + step * gj).collect();
            let fc = nca_objective(&cand, x, y, cfg)?;
            if !fc.is_finite() {
                return Err(Error::Numerical(format!("non-finite NCA objective at step {step}")));
            }
            if fc >= f + ARMIJO * step * g_sq {
                accepted = Some((cand, fc));
                break;
            }
            step /= 2.0;
        }
        let Some((cand, fc)) = accepted else {
            converged = true;
            break;
        };
        w = cand;
        f = fc;
        g = objective_and_gradient(&w, x, y, cfg, true)?.1;
        trace.push(f);
    }
    let selected = nca_select(&w, 0.95)?;
    Ok(NcaResult {
        weights: w,
        objective_trace: trace,
        selected,
        converged,
    })
}

/// Features ranked by descending `w_j²` (ties by index); returns the
/// shortest prefix whose squared mass reaches `mass` of the total.
pub fn nca_select(weights: &[f64], mass: f64) -> Result<Vec<usize>> {
    if !(mass > 0.0 && mass <= 1.0) {
        return invalid(format!("mass {mass} outside (0, 1]"));
    }
    if weights.iter().any(|w| !w.is_finite()) {
        return invalid("non-finite NCA weight");
    }
    let sq: Vec<f64> = weights.iter().map(|w| w * w).collect();
    let total: f64 = sq.iter().sum();
    if total <= 0.0 {
        return invalid("all NCA weights are zero");
    }
    let mut order: Vec<usize> = (0..sq.len()).collect();
    order.sort_by(|&a, &b| sq[b].total_cmp(&sq[a]).then(a.cmp(&b)));
    let target = mass * total * (1.0 - 1e-12);
    let mut cum = 0.0;
    let mut out = Vec::new();
    for j in order {
        cum += sq[j];
        out.push(j);
        if cum >= target {
            break;
        }
    }
    Ok(out)
}
