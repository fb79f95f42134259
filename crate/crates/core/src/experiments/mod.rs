//! Simulation harness: data generators, metrics, cross-validation and the
//! replicate runner.

pub mod config;
pub mod cv;
pub mod io;
pub mod metrics;
pub mod rng;
pub mod runner;
pub mod scenario;

pub use config::{parse_config, ConfigFile};
pub use cv::{cross_validate, fold_assignment, lambda_grid, lambda_max, CvResult};
pub use io::{summary_json, write_bench_csv, write_bench_means_csv, write_replicates_csv};
pub use metrics::{compute_metrics, Metrics, SUPPORT_TOL};
pub use rng::{derive_seed, NormalStream};
pub use runner::{
    run_replicates, ExperimentConfig, ExperimentSummary, Method, MethodSummary, ReplicateRecord,
    Scenario, Tuning,
};
pub use scenario::{gen_isotonic, gen_sparse, IsotonicScenario, SparseScenario};
