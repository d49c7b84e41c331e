//! Monte Carlo oracle harness: known densities, exact oracle quantities and
//! risk experiments.

pub mod mc;
pub mod oracle;
pub mod synthetic;

pub use mc::{mc_risk, rate_experiment, structure_recovery, PipelineConfig, RateReport, ReplicateRecord, RiskReport};
pub use oracle::{oracle_risk, true_bias, upsilon, SmoothnessSpec};
pub use synthetic::{Factor, SyntheticDensity};
