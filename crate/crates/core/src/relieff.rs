//! ReliefF feature weighting with `k` nearest hits and misses, and the
//! ReliefF-then-PCA composite reducer.
//!
//! For each visited sample `x_i`, with `M` visits in total:
//!
//! ```text
//! w_j -= sum_{h in hits}      diff_j(x_i, h) / (M k_hit)
//! w_j += sum_{c != y_i} P(c) / (1 - P(y_i)) * sum_{m in misses(c)} diff_j(x_i, m) / (M k_c)
//! ```
//!
//! `diff` is `|a - b|` for continuous features (inputs normalized to
//! `[0, 1]`) and `[a != b]` for discrete ones. Neighbors are found by the
//! Manhattan distance built from the same per-feature diffs.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::classifier::ClassifierSpec;
use crate::data::{Dataset, FeatureMatrix, LabelVector};
use crate::error::{invalid, Result};
use crate::pca::{fit_pca, select_m_by_cv, PcaModel};
use crate::rng::SplitMix64;

const RANGE_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sampling {
    /// Visit every sample once (`M = N`).
    DeterministicFullPass,
    /// Draw `n_iterations` samples: without replacement when
    /// `n_iterations <= N`, with replacement otherwise.
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReliefFConfig {
    pub k_neighbors: usize,
    pub n_iterations: Option<usize>,
    pub seed: u64,
    pub sampling: Sampling,
    /// Per-feature discrete flags; empty means every feature is continuous.
    pub discrete: Vec<bool>,
}

impl Default for ReliefFConfig {
    fn default() -> Self {
        Self {
            k_neighbors: 10,
            n_iterations: None,
            seed: 0,
            sampling: Sampling::DeterministicFullPass,
            discrete: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureWeights {
    pub weights: Vec<f64>,
    /// Feature indices by descending weight, ties by ascending index.
    pub ranking: Vec<usize>,
}

impl FeatureWeights {
    pub fn from_weights(weights: Vec<f64>) -> Self {
        let mut ranking: Vec<usize> = (0..weights.len()).collect();
        ranking.sort_by(|&a, &b| weights[b].total_cmp(&weights[a]).then(a.cmp(&b)));
        Self { weights, ranking }
    }

    pub fn top(&self, n: usize) -> &[usize] {
        &self.ranking[..n.min(self.ranking.len())]
    }
}

fn lex_cmp(a: &[f64], b: &[f64]) -> Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(Ordering::Equal)
}

pub fn relieff_rank(x: &FeatureMatrix, y: &LabelVector, cfg: &ReliefFConfig) -> Result<FeatureWeights> {
    let (n, d) = (x.n_rows(), x.n_cols());
    if y.len() != n {
        return invalid(format!("{} labels for {n} rows", y.len()));
    }
    if cfg.k_neighbors == 0 {
        return invalid("k_neighbors must be at least 1");
    }
    if !cfg.discrete.is_empty() && cfg.discrete.len() != d {
        return invalid(format!("{} discrete flags for {d} features", cfg.discrete.len()));
    }
    if let Some(v) = x
        .as_slice()
        .iter()
        .find(|&&v| !(-RANGE_SLACK..=1.0 + RANGE_SLACK).contains(&v))
    {
        return invalid(format!("ReliefF needs features normalized to [0, 1]; found {v}"));
    }
    let labels = y.as_slice();
    let counts = y.class_counts();
    if let Some(c) = counts.iter().position(|&c| c < 2) {
        return invalid(format!("class {c} has a single member"));
    }

    let is_discrete = |j: usize| cfg.discrete.get(j).copied().unwrap_or(false);
    let diff = |a: f64, b: f64, j: usize| {
        if is_discrete(j) {
            if a != b {
                1.0
            } else {
                0.0
            }
        } else {
            (a - b).abs()
        }
    };
    let dist = |a: &[f64], b: &[f64]| -> f64 { (0..d).map(|j| diff(a[j], b[j], j)).sum() };

    let k_for: Vec<usize> = counts
        .iter()
        .enumerate()
        .map(|(c, &size)| {
            // Hits exclude the sample itself; misses can use the whole class.
            let cap = size - 1;
            if cap < cfg.k_neighbors {
                log::warn!("class {c} has {size} members; using k={cap} for hits");
            }
            cap.min(cfg.k_neighbors)
        })
        .collect();

    let visits: Vec<usize> = match cfg.sampling {
        Sampling::DeterministicFullPass => (0..n).collect(),
        Sampling::Random => {
            let m = match cfg.n_iterations {
                Some(m) if m > 0 => m,
                _ => return invalid("random sampling needs n_iterations >= 1"),
            };
            let mut rng = SplitMix64::new(cfg.seed);
            if m <= n {
                let mut idx: Vec<usize> = (0..n).collect();
                rng.shuffle(&mut idx);
                idx.truncate(m);
                idx
            } else {
                (0..m).map(|_| rng.below(n as u64) as usize).collect()
            }
        }
    };
    let m_total = visits.len() as f64;
    let priors: Vec<f64> = counts.iter().map(|&c| c as f64 / n as f64).collect();

    let mut weights = vec![0.0; d];
    for &i in &visits {
        let xi = x.row(i);
        let yi = labels[i];
        let mut by_class: Vec<Vec<(f64, usize)>> = vec![Vec::new(); counts.len()];
        for l in (0..n).filter(|&l| l != i) {
            by_class[labels[l]].push((dist(xi, x.row(l)), l));
        }
        for (c, cands) in by_class.iter_mut().enumerate() {
            cands.sort_by(|a, b| {
                a.0.total_cmp(&b.0)
                    .then_with(|| lex_cmp(x.row(a.1), x.row(b.1)))
                    .then(a.1.cmp(&b.1))
            });
            let k = if c == yi {
                k_for[c]
            } else {
                cfg.k_neighbors.min(cands.len())
            };
            let scale = if c == yi {
                -1.0 / (m_total * k as f64)
            } else {
                priors[c] / (1.0 - priors[yi]) / (m_total * k as f64)
            };
            for &(_, l) in &cands[..k] {
                let xl = x.row(l);
                for j in 0..d {
                    weights[j] += scale * diff(xi[j], xl[j], j);
                }
            }
        }
    }
    Ok(FeatureWeights::from_weights(weights))
}

/// Top `floor(d/2)` ReliefF features followed by a PCA on those columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReliefFPca {
    pub weights: FeatureWeights,
    pub features: Vec<usize>,
    pub pca: PcaModel,
}

pub fn relieff_pca_reducer(
    dataset: &Dataset,
    cfg: &ReliefFConfig,
    spec: &ClassifierSpec,
    seed: u64,
) -> Result<ReliefFPca> {
    let d = dataset.n_features();
    if d < 2 {
        return invalid("ReliefF+PCA needs at least 2 features");
    }
    let weights = relieff_rank(&dataset.features, &dataset.labels, cfg)?;
    let features = weights.top(d / 2).to_vec();
    let subset = dataset.select_columns(&features)?;
    let m = select_m_by_cv(&subset, spec, crate::INNER_FOLDS, seed)?;
    let mut pca = fit_pca(&subset.features)?;
    pca.retained_m = m;
    Ok(ReliefFPca {
        weights,
        features,
        pca,
    })
}
