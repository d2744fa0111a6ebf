//! Leave-one-subject-out evaluation.

mod loso;
mod pipeline;
mod report;

pub use loso::{
    config_hash, leakage_check, loso_split, mean_std, run_loso, seed_session_average, Fold, FoldResult, LosoOptions, RunSummary, SkippedFold,
    LeakageReport,
};
pub use pipeline::{
    ConstantStub, EncoderKind, FoldInput, FittedEncoder, FittedPipeline, FoldOutcome, LatentPipeline, OracleStub, Pipeline, PipelineConfig, RandomStub,
};
pub use report::{write_csv_report, write_json_report};
