//! Experiment harness: SNR sweeps over identity subsets and pairs, umbra and
//! pose reports, CSV tables and SVG charts.

pub mod config;
pub mod plot;
pub mod reports;
pub mod sweep;
pub mod table;

pub use config::{ExperimentConfig, PairConfig, ReportConfig, SweepConfig};
pub use reports::{
    class_means, pair_distance, pearson, predict_test, run_pose_report, run_umbra_report, umbra_summary, PoseReport,
    Predictions, UmbraReport,
};
pub use sweep::{resolve_rank, run_groups, run_pair_analysis, run_snr_sweep, select_pairs, Cell, Group};
pub use table::{ResultRow, ResultTable, TrialKey};
