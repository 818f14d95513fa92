//! Leave-one-out evaluation of reducer + classifier pipelines and the
//! accuracy report grid.

use std::fmt;
use std::fmt::Write as _;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifier::{Classifier, ClassifierSpec, GridChoice, TrainedClassifier};
use crate::data::{apply_normalization, fit_normalization, Dataset, FeatureMatrix, LabelVector, NormalizationParams};
use crate::error::{invalid, Error, Result};
use crate::mrmr::{mrmr_fit, Criterion, MrmrSelection};
use crate::nca::{nca_fit, NcaConfig, NcaResult};
use crate::pca::{fit_pca, select_m_by_cv, transform, PcaModel};
use crate::relieff::{relieff_pca_reducer, ReliefFConfig, ReliefFPca};
use crate::rng::derive_seed;
use crate::sfs::{majority, sfs_select, SfsResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ReducerKind {
    Raw,
    Pca,
    Sfs,
    ReliefF,
    Mrmr,
    Nca,
}

impl ReducerKind {
    pub const ALL: [ReducerKind; 6] = [
        ReducerKind::Raw,
        ReducerKind::Pca,
        ReducerKind::Sfs,
        ReducerKind::ReliefF,
        ReducerKind::Mrmr,
        ReducerKind::Nca,
    ];

    /// Lower-case name used on the command line.
    pub fn name(self) -> &'static str {
        match self {
            ReducerKind::Raw => "raw",
            ReducerKind::Pca => "pca",
            ReducerKind::Sfs => "sfs",
            ReducerKind::ReliefF => "relieff",
            ReducerKind::Mrmr => "mrmr",
            ReducerKind::Nca => "nca",
        }
    }

    /// Column heading in reports.
    pub fn label(self) -> &'static str {
        match self {
            ReducerKind::Raw => "Raw",
            ReducerKind::Pca => "PCA",
            ReducerKind::Sfs => "SFS",
            ReducerKind::ReliefF => "ReliefF",
            ReducerKind::Mrmr => "mRMR",
            ReducerKind::Nca => "NCA",
        }
    }
}

impl fmt::Display for ReducerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ReducerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ReducerKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| {
                Error::InvalidInput(format!("unknown method {s:?}; expected raw|pca|sfs|relieff|mrmr|nca"))
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Affect {
    Valence,
    Arousal,
    Dominance,
}

impl Affect {
    pub const ALL: [Affect; 3] = [Affect::Valence, Affect::Arousal, Affect::Dominance];

    pub fn name(self) -> &'static str {
        match self {
            Affect::Valence => "valence",
            Affect::Arousal => "arousal",
            Affect::Dominance => "dominance",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Affect::Valence => "Valence",
            Affect::Arousal => "Arousal",
            Affect::Dominance => "Dominance",
        }
    }
}

impl FromStr for Affect {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Affect::ALL
            .into_iter()
            .find(|a| a.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidInput(format!("unknown affect {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum NormalizationMode {
    /// Min-max statistics come from the training rows of each fold.
    #[default]
    PerFold,
    /// Min-max statistics come from all rows before splitting.
    Global,
}

/// Settings shared by every reducer fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub classifier: ClassifierSpec,
    pub relieff: ReliefFConfig,
    pub nca: NcaConfig,
    pub mrmr_criterion: Criterion,
    pub sfs_max_features: Option<usize>,
    pub mode: NormalizationMode,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            classifier: ClassifierSpec::default(),
            relieff: ReliefFConfig::default(),
            nca: NcaConfig::default(),
            mrmr_criterion: Criterion::Miq,
            sfs_max_features: None,
            mode: NormalizationMode::PerFold,
        }
    }
}

/// A fitted reducer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Reducer {
    Raw { n_features: usize },
    Pca { model: PcaModel },
    Sfs { result: SfsResult },
    ReliefF { model: ReliefFPca },
    Mrmr { selection: MrmrSelection },
    Nca { result: NcaResult },
}

impl Reducer {
    /// Fits `kind` on `train`. Inner model selection uses the fixed-parameter
    /// classifier of `cfg.classifier` with `crate::INNER_FOLDS` folds.
    pub fn fit(kind: ReducerKind, train: &Dataset, cfg: &PipelineConfig, seed: u64) -> Result<Reducer> {
        let spec = &cfg.classifier;
        let seed = derive_seed(seed, kind.name());
        Ok(match kind {
            ReducerKind::Raw => Reducer::Raw {
                n_features: train.n_features(),
            },
            ReducerKind::Pca => {
                let m = select_m_by_cv(train, spec, crate::INNER_FOLDS, seed)?;
                let mut model = fit_pca(&train.features)?;
                model.retained_m = m;
                Reducer::Pca { model }
            }
            ReducerKind::Sfs => Reducer::Sfs {
                result: sfs_select(train, spec, crate::INNER_FOLDS, seed, cfg.sfs_max_features)?,
            },
            ReducerKind::ReliefF => {
                let rcfg = ReliefFConfig {
                    seed,
                    ..cfg.relieff.clone()
                };
                Reducer::ReliefF {
                    model: relieff_pca_reducer(train, &rcfg, spec, seed)?,
                }
            }
            ReducerKind::Mrmr => Reducer::Mrmr {
                selection: mrmr_fit(train, cfg.mrmr_criterion, spec, seed)?,
            },
            ReducerKind::Nca => Reducer::Nca {
                result: nca_fit(train, &cfg.nca)?,
            },
        })
    }

    pub fn kind(&self) -> ReducerKind {
        match self {
            Reducer::Raw { .. } => ReducerKind::Raw,
            Reducer::Pca { .. } => ReducerKind::Pca,
            Reducer::Sfs { .. } => ReducerKind::Sfs,
            Reducer::ReliefF { .. } => ReducerKind::ReliefF,
            Reducer::Mrmr { .. } => ReducerKind::Mrmr,
            Reducer::Nca { .. } => ReducerKind::Nca,
        }
    }

    /// Number of output columns; 0 when SFS accepted no feature.
    pub fn output_dim(&self) -> usize {
        match self {
            Reducer::Raw { n_features } => *n_features,
            Reducer::Pca { model } => model.retained_m,
            Reducer::Sfs { result } => result.selected.len(),
            Reducer::ReliefF { model } => model.pca.retained_m,
            Reducer::Mrmr { selection } => selection.chosen_m,
            Reducer::Nca { result } => result.selected.len(),
        }
    }

    /// Input columns kept by a selection method; `None` for projections.
    pub fn selected_features(&self) -> Option<&[usize]> {
        match self {
            Reducer::Sfs { result } => Some(&result.selected),
            Reducer::Mrmr { selection } => Some(selection.chosen()),
            Reducer::Nca { result } => Some(&result.selected),
            _ => None,
        }
    }

    /// Maps `x` into the reduced space. Errors when the reducer kept no
    /// columns.
    pub fn apply(&self, x: &FeatureMatrix) -> Result<FeatureMatrix> {
        match self {
            Reducer::Raw { n_features } => {
                if x.n_cols() != *n_features {
                    return Err(Error::DimensionMismatch {
                        expected: *n_features,
                        got: x.n_cols(),
                    });
                }
                Ok(x.clone())
            }
            Reducer::Pca { model } => transform(model, x, model.retained_m),
            Reducer::ReliefF { model } => {
                transform(&model.pca, &x.select_columns(&model.features)?, model.pca.retained_m)
            }
            _ => {
                let cols = self.selected_features().expect("selection reducer");
                if cols.is_empty() {
                    return invalid("reducer selected no features");
                }
                x.select_columns(cols)
            }
        }
    }

    /// Names of the output columns.
    pub fn output_names(&self, input_names: &[String]) -> Vec<String> {
        match self.selected_features() {
            Some(cols) => cols.iter().map(|&j| input_names[j].clone()).collect(),
            None => match self {
                Reducer::Raw { .. } => input_names.to_vec(),
                _ => (0..self.output_dim()).map(|k| format!("pc{k}")).collect(),
            },
        }
    }
}

/// Everything fitted for one leave-one-out fold.
pub struct FittedFold {
    pub held_out: usize,
    pub normalization: NormalizationParams,
    pub reducer: Reducer,
    /// `None` when the reducer kept no columns; prediction is then the
    /// training majority.
    pub classifier: Option<Box<dyn TrainedClassifier>>,
    pub majority: usize,
}

impl FittedFold {
    pub fn predict(&self, x: &FeatureMatrix) -> Result<Vec<usize>> {
        match &self.classifier {
            Some(c) => {
                let z = self.reducer.apply(&apply_normalization(x, &self.normalization)?)?;
                c.predict(&z)
            }
            None => Ok(vec![self.majority; x.n_rows()]),
        }
    }

    /// Serialized snapshot of every fitted parameter.
    pub fn state(&self) -> serde_json::Value {
        serde_json::json!({
            "normalization": self.normalization,
            "reducer": self.reducer,
            "classifier": self.classifier.as_ref().map(|c| c.state()),
            "majority": self.majority,
        })
    }
}

/// Fits normalization, reducer and classifier for the fold that holds out
/// row `held_out`. In per-fold mode nothing reads the held-out row; in
/// global mode the normalization statistics include it.
pub fn fit_fold(
    dataset: &Dataset,
    held_out: usize,
    kind: ReducerKind,
    cfg: &PipelineConfig,
    classifier: &dyn Classifier,
    seed: u64,
) -> Result<FittedFold> {
    let n = dataset.n_samples();
    if held_out >= n {
        return invalid(format!("held-out row {held_out} out of range for {n} rows"));
    }
    let train_idx: Vec<usize> = (0..n).filter(|&i| i != held_out).collect();
    let raw_train = dataset.select_rows(&train_idx)?;
    let normalization = match cfg.mode {
        NormalizationMode::PerFold => fit_normalization(&raw_train.features),
        NormalizationMode::Global => fit_normalization(&dataset.features),
    };
    let xtr = apply_normalization(&raw_train.features, &normalization)?;
    let train = raw_train.with_features(xtr, raw_train.feature_names.clone())?;
    let fold_seed = derive_seed(seed, &format!("fold{held_out}"));
    let reducer = Reducer::fit(kind, &train, cfg, fold_seed)?;
    let majority = majority(train.labels.as_slice());
    let classifier = if reducer.output_dim() == 0 {
        None
    } else {
        let z = reducer.apply(&train.features)?;
        let names = reducer.output_names(&train.feature_names);
        let reduced = train.with_features(z, names)?;
        Some(classifier.train(&reduced, derive_seed(fold_seed, "classifier"))?)
    };
    Ok(FittedFold {
        held_out,
        normalization,
        reducer,
        classifier,
        majority,
    })
}

/// Outcome of one leave-one-out fold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldRecord {
    pub fold: usize,
    pub truth: usize,
    pub predicted: usize,
    pub reduced_dim: usize,
    pub choice: Option<GridChoice>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoocvResult {
    pub correct: usize,
    pub n: usize,
    pub folds: Vec<FoldRecord>,
}

impl LoocvResult {
    pub fn accuracy(&self) -> f64 {
        self.correct as f64 / self.n as f64
    }
}

/// Leave-one-out accuracy with the default SVM as final classifier.
pub fn loocv_evaluate(dataset: &Dataset, kind: ReducerKind, cfg: &PipelineConfig, seed: u64) -> Result<LoocvResult> {
    loocv_evaluate_with(dataset, kind, cfg, &cfg.classifier, seed)
}

/// Leave-one-out accuracy with any final classifier. Folds run in
/// parallel; results are collected in fold order.
pub fn loocv_evaluate_with(
    dataset: &Dataset,
    kind: ReducerKind,
    cfg: &PipelineConfig,
    classifier: &dyn Classifier,
    seed: u64,
) -> Result<LoocvResult> {
    let n = dataset.n_samples();
    if n < 3 {
        return invalid(format!("leave-one-out needs at least 3 samples, got {n}"));
    }
    if dataset.labels.n_classes() != 2 {
        return invalid(format!("binary labels required, got {} classes", dataset.labels.n_classes()));
    }
    let folds = (0..n)
        .into_par_iter()
        .map(|i| {
            let run = || -> Result<FoldRecord> {
                let fold = fit_fold(dataset, i, kind, cfg, classifier, seed)?;
                let x = dataset.features.select_rows(&[i])?;
                Ok(FoldRecord {
                    fold: i,
                    truth: dataset.labels.as_slice()[i],
                    predicted: fold.predict(&x)?[0],
                    reduced_dim: fold.reducer.output_dim(),
                    choice: fold.classifier.as_ref().and_then(|c| c.grid_choice()),
                })
            };
            run().map_err(|e| Error::Fold {
                fold: i,
                source: Box::new(e),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let correct = folds.iter().filter(|f| f.truth == f.predicted).count();
    Ok(LoocvResult { correct, n, folds })
}

/// One modality's feature matrix with its affect labels.
#[derive(Debug, Clone)]
pub struct ModalityData {
    pub name: String,
    pub features: FeatureMatrix,
    pub feature_names: Vec<String>,
    pub labels: Vec<(Affect, LabelVector)>,
}

impl ModalityData {
    pub fn dataset(&self, affect: Affect) -> Result<Dataset> {
        let labels = self
            .labels
            .iter()
            .find(|(a, _)| *a == affect)
            .map(|(_, l)| l.clone())
            .ok_or_else(|| Error::InvalidInput(format!("modality {} has no {} labels", self.name, affect.name())))?;
        Dataset::new(self.features.clone(), labels, self.feature_names.clone())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchmarkConfig {
    pub methods: Vec<ReducerKind>,
    pub affects: Vec<Affect>,
    pub seed: u64,
    pub pipeline: PipelineConfig,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        Self {
            methods: ReducerKind::ALL.to_vec(),
            affects: Affect::ALL.to_vec(),
            seed: 0,
            pipeline: PipelineConfig::default(),
        }
    }
}

/// One cell of the accuracy grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub modality: String,
    pub affect: Affect,
    pub method: ReducerKind,
    pub correct: usize,
    pub n: usize,
    pub folds: Vec<FoldRecord>,
}

impl Cell {
    pub fn accuracy(&self) -> f64 {
        self.correct as f64 / self.n as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub modalities: Vec<String>,
    pub affects: Vec<Affect>,
    pub methods: Vec<ReducerKind>,
    pub cells: Vec<Cell>,
    pub seed: u64,
    pub mode: NormalizationMode,
}

impl EvalReport {
    pub fn cell(&self, modality: &str, affect: Affect, method: ReducerKind) -> Option<&Cell> {
        self.cells
            .iter()
            .find(|c| c.modality == modality && c.affect == affect && c.method == method)
    }

    pub fn accuracy(&self, modality: &str, affect: Affect, method: ReducerKind) -> Option<f64> {
        self.cell(modality, affect, method).map(Cell::accuracy)
    }

    /// Mean over the affects of one modality.
    pub fn modality_average(&self, modality: &str, method: ReducerKind) -> Option<f64> {
        mean(self.affects.iter().map(|&a| self.accuracy(modality, a, method)))
    }

    /// Mean over every modality and affect.
    pub fn overall_average(&self, method: ReducerKind) -> Option<f64> {
        mean(
            self.modalities
                .iter()
                .flat_map(|m| self.affects.iter().map(move |&a| (m, a)))
                .map(|(m, a)| self.accuracy(m, a, method)),
        )
    }

    fn check_complete(&self) -> Result<()> {
        if self.modalities.is_empty() || self.affects.is_empty() || self.methods.is_empty() {
            return invalid("report grid is empty");
        }
        for m in &self.modalities {
            for &a in &self.affects {
                for &k in &self.methods {
                    if self.cell(m, a, k).is_none() {
                        return invalid(format!("report grid is missing ({m}, {}, {})", a.label(), k.label()));
                    }
                }
            }
        }
        Ok(())
    }
}

fn mean(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let mut sum = 0.0;
    let mut count = 0;
    for v in values {
        sum += v?;
        count += 1;
    }
    (count > 0).then(|| sum / count as f64)
}

/// Fixed modality order; names outside it follow in input order.
const MODALITY_ORDER: [&str; 3] = ["visual", "audio", "video"];

fn ordered_modalities(names: &[String]) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for known in MODALITY_ORDER {
        out.extend(names.iter().filter(|n| n.eq_ignore_ascii_case(known)).cloned());
    }
    out.extend(
        names
            .iter()
            .filter(|n| !MODALITY_ORDER.iter().any(|k| n.eq_ignore_ascii_case(k)))
            .cloned(),
    );
    out
}

/// Runs every (modality, affect, method) cell.
pub fn run_benchmark(inputs: &[ModalityData], cfg: &BenchmarkConfig) -> Result<EvalReport> {
    if inputs.is_empty() {
        return invalid("no modalities given");
    }
    if cfg.methods.is_empty() || cfg.affects.is_empty() {
        return invalid("need at least one method and one affect");
    }
    let n = inputs[0].features.n_rows();
    if let Some(bad) = inputs.iter().find(|m| m.features.n_rows() != n) {
        return invalid(format!(
            "modality {} has {} rows, expected {n}",
            bad.name,
            bad.features.n_rows()
        ));
    }
    let names: Vec<String> = inputs.iter().map(|m| m.name.clone()).collect();
    let modalities = ordered_modalities(&names);
    let mut affects = cfg.affects.clone();
    affects.sort();
    affects.dedup();
    let mut methods = cfg.methods.clone();
    methods.sort();
    methods.dedup();

    let mut jobs = Vec::new();
    for name in &modalities {
        let input = inputs.iter().find(|m| &m.name == name).expect("known modality");
        for &affect in &affects {
            let dataset = input.dataset(affect)?;
            for &method in &methods {
                jobs.push((name.clone(), affect, method, dataset.clone()));
            }
        }
    }
    let cells = jobs
        .into_par_iter()
        .map(|(modality, affect, method, dataset)| {
            let seed = derive_seed(cfg.seed, &format!("{modality}/{}", affect.name()));
            log::info!("evaluating {modality} / {} / {}", affect.label(), method.label());
            let r = loocv_evaluate(&dataset, method, &cfg.pipeline, seed)?;
            Ok(Cell {
                modality,
                affect,
                method,
                correct: r.correct,
                n: r.n,
                folds: r.folds,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EvalReport {
        modalities,
        affects,
        methods,
        cells,
        seed: cfg.seed,
        mode: cfg.pipeline.mode,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ReportFormat {
    Csv,
    Markdown,
}

struct ReportRow {
    modality: String,
    affect: String,
    values: Vec<String>,
    best: Vec<bool>,
}

fn report_rows(report: &EvalReport) -> Result<Vec<ReportRow>> {
    report.check_complete()?;
    let mut rows = Vec::new();
    let mut push = |modality: String, affect: String, values: Vec<f64>| {
        let values: Vec<String> = values.iter().map(|v| format!("{v:.3}")).collect();
        // Row maxima are compared on the rendered values, so visible ties
        // are all flagged.
        let top = values
            .iter()
            .map(|s| s.parse::<f64>().expect("rendered number"))
            .fold(f64::NEG_INFINITY, f64::max);
        let best = values.iter().map(|s| s.parse::<f64>().unwrap() == top).collect();
        rows.push(ReportRow {
            modality,
            affect,
            values,
            best,
        });
    };
    for m in &report.modalities {
        for &a in &report.affects {
            let v = report
                .methods
                .iter()
                .map(|&k| report.accuracy(m, a, k).unwrap())
                .collect();
            push(m.clone(), a.label().to_string(), v);
        }
        let v = report
            .methods
            .iter()
            .map(|&k| report.modality_average(m, k).unwrap())
            .collect();
        push(m.clone(), "Average".to_string(), v);
    }
    let v = report
        .methods
        .iter()
        .map(|&k| report.overall_average(k).unwrap())
        .collect();
    push("Overall Average".to_string(), String::new(), v);
    Ok(rows)
}

/// Renders the grid with three decimals. Markdown bolds row maxima; CSV
/// lists them in a trailing `best` column.
pub fn emit_report(report: &EvalReport, format: ReportFormat) -> Result<String> {
    let rows = report_rows(report)?;
    let mut out = String::new();
    match format {
        ReportFormat::Markdown => {
            let heads: Vec<&str> = report.methods.iter().map(|k| k.label()).collect();
            writeln!(out, "| Modality | Affect | {} |", heads.join(" | ")).unwrap();
            writeln!(out, "|---|---|{}", "---:|".repeat(heads.len())).unwrap();
            let mut last = String::new();
            for r in &rows {
                let modality = if r.modality == last { "" } else { r.modality.as_str() };
                let cells: Vec<String> = r
                    .values
                    .iter()
                    .zip(&r.best)
                    .map(|(v, &b)| if b { format!("**{v}**") } else { v.clone() })
                    .collect();
                writeln!(out, "| {} | {} | {} |", modality, r.affect, cells.join(" | ")).unwrap();
                last = r.modality.clone();
            }
        }
        ReportFormat::Csv => {
            let heads: Vec<&str> = report.methods.iter().map(|k| k.label()).collect();
            writeln!(out, "modality,affect,{},best", heads.join(",")).unwrap();
            for r in &rows {
                let best: Vec<&str> = report
                    .methods
                    .iter()
                    .zip(&r.best)
                    .filter(|(_, &b)| b)
                    .map(|(k, _)| k.label())
                    .collect();
                writeln!(out, "{},{},{},{}", r.modality, r.affect, r.values.join(","), best.join(";")).unwrap();
            }
        }
    }
    Ok(out)
}
