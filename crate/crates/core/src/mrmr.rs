//! Discrete minimal-redundancy maximal-relevance selection.
//!
//! Continuous columns are binned into three levels around `mean ± std`,
//! mutual information is the plug-in estimate in bits, and subsets grow
//! greedily. At step `t > 1` the candidate `j` is scored on the whole set
//! `S ∪ {j}`:
//!
//! ```text
//! D = 1/|S| · sum_{s in S} I(s; c)
//! R = 1/|S|² · sum_{s, r in S} I(s; r)      (diagonal terms included)
//! ```
//!
//! and maximizes `D - R` (MID) or `D / R` (MIQ).

use std::collections::HashMap;
use std::hash::Hash;

use serde::{Deserialize, Serialize};

use crate::classifier::{cv_accuracy_on_columns, ClassifierSpec};
use crate::data::{make_stratified_folds, Dataset, FeatureMatrix, LabelVector};
use crate::error::{invalid, Error, Result};
use crate::pca::argmax_first;

const MIQ_GUARD: f64 = 1e-12;
/// Candidates scoring within this of the best count as tied.
const TIE_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscretizedMatrix {
    values: Vec<i8>,
    n_rows: usize,
    n_cols: usize,
    /// Per-column `(mean, std)` used for binning.
    pub thresholds: Vec<(f64, f64)>,
}

impl DiscretizedMatrix {
    /// Builds a matrix from precomputed levels (row-major), e.g. for already
    /// categorical data. Thresholds are recorded as NaN.
    pub fn from_levels(n_rows: usize, n_cols: usize, values: Vec<i8>) -> Result<Self> {
        if values.len() != n_rows * n_cols {
            return Err(Error::DimensionMismatch {
                expected: n_rows * n_cols,
                got: values.len(),
            });
        }
        Ok(Self {
            values,
            n_rows,
            n_cols,
            thresholds: vec![(f64::NAN, f64::NAN); n_cols],
        })
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn get(&self, row: usize, col: usize) -> i8 {
        self.values[row * self.n_cols + col]
    }

    pub fn column(&self, j: usize) -> Vec<i8> {
        (0..self.n_rows).map(|i| self.get(i, j)).collect()
    }
}

/// `v > mean + std → 1`, `v < mean − std → −1`, else 0; sample std
/// (`N − 1`). Constant columns become all zeros.
pub fn discretize(x: &FeatureMatrix) -> DiscretizedMatrix {
    let (n, d) = (x.n_rows(), x.n_cols());
    let mut values = vec![0i8; n * d];
    let mut thresholds = Vec::with_capacity(d);
    for j in 0..d {
        let col = x.column(j);
        let mean = col.iter().sum::<f64>() / n as f64;
        let std = if n > 1 {
            (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        thresholds.push((mean, std));
        if std == 0.0 {
            continue;
        }
        for (i, &v) in col.iter().enumerate() {
            values[i * d + j] = if v > mean + std {
                1
            } else if v < mean - std {
                -1
            } else {
                0
            };
        }
    }
    DiscretizedMatrix {
        values,
        n_rows: n,
        n_cols: d,
        thresholds,
    }
}

/// Plug-in mutual information in bits. Terms are summed in sorted order, so
/// `I(a; b)` and `I(b; a)` agree bit for bit.
pub fn mutual_information<A, B>(a: &[A], b: &[B]) -> f64
where
    A: Copy + Eq + Hash,
    B: Copy + Eq + Hash,
{
    assert_eq!(a.len(), b.len(), "mutual_information needs equal lengths");
    let n = a.len();
    if n == 0 {
        return 0.0;
    }
    let mut ca: HashMap<A, usize> = HashMap::new();
    let mut cb: HashMap<B, usize> = HashMap::new();
    let mut cab: HashMap<(A, B), usize> = HashMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *ca.entry(x).or_default() += 1;
        *cb.entry(y).or_default() += 1;
        *cab.entry((x, y)).or_default() += 1;
    }
    let mut terms: Vec<f64> = cab
        .iter()
        .map(|(&(x, y), &nxy)| {
            let ratio = (nxy * n) as f64 / (ca[&x] * cb[&y]) as f64;
            nxy as f64 / n as f64 * ratio.log2()
        })
        .collect();
    terms.sort_by(f64::total_cmp);
    terms.iter().sum::<f64>().max(0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Criterion {
    /// Difference `D - R`.
    Mid,
    /// Quotient `D / R`.
    #[default]
    Miq,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MrmrSelection {
    /// Selected features in greedy order.
    pub order: Vec<usize>,
    /// Criterion value at each step (relevance for the first pick).
    pub scores: Vec<f64>,
    pub chosen_m: usize,
}

impl MrmrSelection {
    pub fn chosen(&self) -> &[usize] {
        &self.order[..self.chosen_m]
    }
}

/// Greedy incremental search for `max_m` features. The first pick is the
/// most relevant feature; later picks maximize the criterion on `S ∪ {j}`.
/// Candidates within `1e-12` of the best score tie, and ties go to the
/// smaller index.
pub fn mrmr_select(
    xd: &DiscretizedMatrix,
    y: &LabelVector,
    max_m: usize,
    criterion: Criterion,
) -> Result<MrmrSelection> {
    let d = xd.n_cols();
    if max_m == 0 {
        return invalid("max_m must be at least 1");
    }
    if max_m > d {
        return invalid(format!("max_m={max_m} exceeds feature count {d}"));
    }
    if y.len() != xd.n_rows() {
        return Err(Error::DimensionMismatch {
            expected: xd.n_rows(),
            got: y.len(),
        });
    }
    let cols: Vec<Vec<i8>> = (0..d).map(|j| xd.column(j)).collect();
    let relevance: Vec<f64> = cols.iter().map(|c| mutual_information(c, y.as_slice())).collect();
    let entropy: Vec<f64> = cols.iter().map(|c| mutual_information(c, c)).collect();

    let first = pick(&relevance);
    let mut order = vec![first];
    let mut scores = vec![relevance[first]];
    let mut selected = vec![false; d];
    selected[first] = true;
    // Sum over s in S of I(j; s), per candidate j.
    let mut cross: Vec<f64> = (0..d).map(|j| mutual_information(&cols[j], &cols[first])).collect();
    let mut rel_sum = relevance[first];
    let mut red_sum = entropy[first];

    while order.len() < max_m {
        let t = (order.len() + 1) as f64;
        let cand: Vec<f64> = (0..d)
            .map(|j| {
                if selected[j] {
                    return f64::NEG_INFINITY;
                }
                let dd = (rel_sum + relevance[j]) / t;
                let rr = (red_sum + 2.0 * cross[j] + entropy[j]) / (t * t);
                match criterion {
                    Criterion::Mid => dd - rr,
                    Criterion::Miq => dd / (rr + MIQ_GUARD),
                }
            })
            .collect();
        let j = pick(&cand);
        order.push(j);
        scores.push(cand[j]);
        selected[j] = true;
        rel_sum += relevance[j];
        red_sum += 2.0 * cross[j] + entropy[j];
        for (k, c) in cross.iter_mut().enumerate() {
            if !selected[k] {
                *c += mutual_information(&cols[k], &cols[j]);
            }
        }
    }
    let chosen_m = order.len();
    Ok(MrmrSelection {
        order,
        scores,
        chosen_m,
    })
}

fn pick(scores: &[f64]) -> usize {
    let best = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    scores.iter().position(|&s| s >= best - TIE_EPS).expect("non-empty scores")
}

/// Chooses `m` in `1..=floor(d/2)` by stratified CV accuracy using the first
/// `m` features of the greedy order on the continuous data. Ties go to the
/// smaller `m`.
pub fn mrmr_choose_m(
    dataset: &Dataset,
    selection: &MrmrSelection,
    spec: &ClassifierSpec,
    seed: u64,
) -> Result<usize> {
    let limit = (dataset.n_features() / 2).max(1).min(selection.order.len());
    if limit == 0 {
        return invalid("empty mRMR selection");
    }
    if limit == 1 {
        return Ok(1);
    }
    let labels = dataset.labels.as_slice();
    let plan = make_stratified_folds(labels, crate::INNER_FOLDS, seed)?;
    let curve = (1..=limit)
        .map(|m| cv_accuracy_on_columns(&dataset.features, labels, &plan, spec, &selection.order[..m]))
        .collect::<Result<Vec<_>>>()?;
    Ok(argmax_first(&curve) + 1)
}

/// Discretize, select `floor(d/2)` features greedily, then choose `m` by CV.
pub fn mrmr_fit(dataset: &Dataset, criterion: Criterion, spec: &ClassifierSpec, seed: u64) -> Result<MrmrSelection> {
    let xd = discretize(&dataset.features);
    let max_m = (dataset.n_features() / 2).max(1);
    let mut sel = mrmr_select(&xd, &dataset.labels, max_m, criterion)?;
    sel.chosen_m = mrmr_choose_m(dataset, &sel, spec, seed)?;
    Ok(sel)
}
