//! Seeded synthetic datasets with planted informative features.
//!
//! Generation order (all draws from one [`SplitMix64`] stream seeded with
//! `seed`):
//!
//! 1. per task: labels `[0; n/2] ++ [1; n - n/2]`, shuffled;
//! 2. column indices `0..d` shuffled; the first `k_1` go to task 1, the next
//!    `k_2` to task 2, and so on; each task's planted set is then sorted;
//! 3. row-major fill: an informative column of task `t` draws
//!    `separation * y_t + N(0, 1)`, a noise column draws `U[0, 1)`;
//! 4. every column is min-max normalized to `[0, 1]` over all rows.

use serde::{Deserialize, Serialize};

use crate::data::{apply_normalization, fit_normalization, Dataset, FeatureMatrix, LabelVector};
use crate::error::{invalid, Result};
use crate::rng::SplitMix64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub n_samples: usize,
    pub n_features: usize,
    pub n_informative: usize,
    /// Class-mean gap in units of the within-class standard deviation.
    pub separation: f64,
    pub seed: u64,
}

/// Several binary tasks sharing one feature matrix, each with its own
/// disjoint planted columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiTaskSpec {
    pub n_samples: usize,
    pub n_features: usize,
    pub informative_per_task: Vec<usize>,
    pub separation: f64,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct MultiTaskData {
    pub features: FeatureMatrix,
    pub feature_names: Vec<String>,
    pub labels: Vec<LabelVector>,
    pub planted: Vec<Vec<usize>>,
}

pub fn generate(spec: &SynthSpec) -> Result<(Dataset, Vec<usize>)> {
    let mut data = generate_multi(&MultiTaskSpec {
        n_samples: spec.n_samples,
        n_features: spec.n_features,
        informative_per_task: vec![spec.n_informative],
        separation: spec.separation,
        seed: spec.seed,
    })?;
    let planted = data.planted.remove(0);
    let ds = Dataset::new(data.features, data.labels.remove(0), data.feature_names)?;
    Ok((ds, planted))
}

pub fn generate_multi(spec: &MultiTaskSpec) -> Result<MultiTaskData> {
    let (n, d) = (spec.n_samples, spec.n_features);
    if n < 2 {
        return invalid(format!("n_samples must be at least 2, got {n}"));
    }
    if d == 0 {
        return invalid("n_features must be at least 1");
    }
    if spec.informative_per_task.is_empty() {
        return invalid("need at least one task");
    }
    let informative: usize = spec.informative_per_task.iter().sum();
    if informative > d {
        return invalid(format!("{informative} informative features exceed n_features={d}"));
    }
    if !(spec.separation >= 0.0 && spec.separation.is_finite()) {
        return invalid("separation must be a non-negative number");
    }
    let mut rng = SplitMix64::new(spec.seed);

    let mut labels = Vec::with_capacity(spec.informative_per_task.len());
    for _ in &spec.informative_per_task {
        let mut y: Vec<usize> = (0..n).map(|i| usize::from(i >= n / 2)).collect();
        rng.shuffle(&mut y);
        labels.push(y);
    }

    let mut columns: Vec<usize> = (0..d).collect();
    rng.shuffle(&mut columns);
    let mut owner: Vec<Option<usize>> = vec![None; d];
    let mut planted = Vec::with_capacity(labels.len());
    let mut next = 0;
    for (t, &k) in spec.informative_per_task.iter().enumerate() {
        let mut cols = columns[next..next + k].to_vec();
        next += k;
        cols.sort_unstable();
        for &c in &cols {
            owner[c] = Some(t);
        }
        planted.push(cols);
    }

    let mut values = Vec::with_capacity(n * d);
    for i in 0..n {
        for task in &owner {
            values.push(match task {
                Some(t) => spec.separation * labels[*t][i] as f64 + rng.standard_normal(),
                None => rng.next_f64(),
            });
        }
    }
    let raw = FeatureMatrix::new(n, d, values)?;
    let features = apply_normalization(&raw, &fit_normalization(&raw))?;
    Ok(MultiTaskData {
        features,
        feature_names: (0..d).map(|j| format!("f{j}")).collect(),
        labels: labels.into_iter().map(LabelVector::new).collect::<Result<_>>()?,
        planted,
    })
}
