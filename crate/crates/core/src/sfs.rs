//! Sequential forward selection wrapped around a classifier.

use serde::{Deserialize, Serialize};

use crate::classifier::{cross_val_accuracy, cv_accuracy_on_columns, ClassifierSpec};
use crate::data::{make_stratified_folds, Dataset};
use crate::error::{invalid, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SfsResult {
    pub selected: Vec<usize>,
    /// CV accuracy after each accepted feature; strictly increasing.
    pub cv_trace: Vec<f64>,
    /// CV accuracy of the majority-class predictor.
    pub baseline: f64,
}

/// Grows the feature set one feature per round. Every candidate is scored by
/// stratified CV on one fold plan shared by all rounds; the best is accepted
/// only if it strictly beats the current accuracy. Candidate ties go to the
/// smaller feature index.
pub fn sfs_select(
    dataset: &Dataset,
    spec: &ClassifierSpec,
    n_folds: usize,
    seed: u64,
    max_features: Option<usize>,
) -> Result<SfsResult> {
    if n_folds < 2 {
        return invalid("n_folds must be at least 2");
    }
    spec.validate()?;
    let d = dataset.n_features();
    let limit = max_features.unwrap_or(d).min(d);
    let labels = dataset.labels.as_slice();
    let plan = make_stratified_folds(labels, n_folds, seed)?;

    let baseline = cross_val_accuracy(&dataset.features, labels, &plan, |_, ytr, te| {
        Ok(vec![majority(ytr); te.n_rows()])
    })?;

    let mut selected: Vec<usize> = Vec::new();
    let mut cv_trace = Vec::new();
    let mut current = baseline;
    while selected.len() < limit {
        let mut best: Option<(usize, f64)> = None;
        for j in (0..d).filter(|j| !selected.contains(j)) {
            let mut cols = selected.clone();
            cols.push(j);
            let acc = cv_accuracy_on_columns(&dataset.features, labels, &plan, spec, &cols)?;
            if best.is_none_or(|(_, b)| acc > b) {
                best = Some((j, acc));
            }
        }
        match best {
            Some((j, acc)) if acc > current => {
                selected.push(j);
                cv_trace.push(acc);
                current = acc;
            }
            _ => break,
        }
    }
    Ok(SfsResult {
        selected,
        cv_trace,
        baseline,
    })
}

/// Most frequent label; ties go to the smaller label.
pub fn majority(labels: &[usize]) -> usize {
    let n_classes = labels.iter().max().map_or(1, |m| m + 1);
    let mut counts = vec![0usize; n_classes];
    for &l in labels {
        counts[l] += 1;
    }
    let top = *counts.iter().max().unwrap();
    counts.iter().position(|&c| c == top).unwrap()
}
