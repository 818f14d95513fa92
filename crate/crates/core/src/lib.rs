//! Dimensionality reduction and feature selection for small labeled
//! feature matrices: PCA, sequential forward selection, ReliefF, mRMR and
//! NCA, an RBF-kernel SVM, and a leave-one-out benchmark harness.

pub mod classifier;
pub mod data;
pub mod error;
pub mod harness;
pub mod mrmr;
pub mod nca;
pub mod pca;
pub mod relieff;
pub mod rng;
pub mod sfs;
pub mod synthgen;

/// Folds used by every inner model-selection loop.
pub const INNER_FOLDS: usize = 5;

pub use classifier::{Classifier, ClassifierKind, ClassifierSpec, GridChoice, SvmModel, TrainedClassifier};
pub use data::{Dataset, FeatureMatrix, FoldPlan, LabelVector, NormalizationParams};
pub use error::{Error, Result};
pub use harness::{
    emit_report, loocv_evaluate, loocv_evaluate_with, run_benchmark, Affect, BenchmarkConfig, EvalReport,
    ModalityData, NormalizationMode, PipelineConfig, Reducer, ReducerKind, ReportFormat,
};
pub use rng::SplitMix64;
