//! Error metrics and the end-to-end experiment runner.

mod experiment;
mod metrics;
mod plan;

pub use experiment::{
    fft_length_table, run_experiment, run_experiment_on, run_trial, simulate_fingerprints, trial_seed, CdfRow,
    ExperimentOutput, FftLengthTable, MethodSummary, ResultRow, ResultTable, WeightRecord,
};
pub use metrics::{error_cdf, mspe, percentile, CDF_EPS};
pub use plan::{
    ChannelSpec, ExperimentPlan, FusionSpec, GeometrySpec, RssrSpec, SpectralSpec, SplitSpec, BENCHMARK_NOISE_STD,
};
