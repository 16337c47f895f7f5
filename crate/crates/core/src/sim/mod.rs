//! Simulation lab: samples from the fitted model itself, liability-threshold
//! case-control studies, and the benchmark comparing analysis modes.

pub mod benchmark;
pub mod config;
pub mod generative;
pub mod liability;
pub mod metrics;
pub mod trend;

pub use benchmark::{run_benchmark, BenchmarkConfig, BenchmarkManifest, BenchmarkTable, Mode};
pub use config::SimConfig;
pub use generative::{sample_model, ModelSample};
pub use liability::{simulate_study_pair, SimData, SimTruth};
pub use metrics::{auc, power_and_fdr, PowerFdr};
pub use trend::{assoc_test_1df, GenotypeTable};
