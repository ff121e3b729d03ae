//! Experiment configuration, seeded runs, CSV/JSON/SVG artifacts and
//! post-run reports.

mod config;
mod curve;
mod experiment;
mod order;
mod report;
mod run;
mod svg;

pub use config::{ExperimentConfig, ExperimentKind, LeastSquaresParams, ModelSpec, ResolvedConfig, RunMode};
pub use curve::{curve_file_name, parse_curve_file_name, Column, CurveRow, LearningCurve, CURVE_COLUMNS};
pub use order::{
    order_check_least_squares, order_check_network, order_check_start, run_order_check, OrderCheckSpec, OrderTarget,
};
pub use report::{
    dist_test, read_ensemble, stability_report, DistCheck, DistTestReport, Reference, SeedComparison,
    StabilityReport, StabilityRow,
};
pub use run::{
    run_config_file, run_experiment, write_seed_plots, ManifestState, RunEntry, RunManifest, RunStatus, RunSummary,
    ENSEMBLE_DIM_CAP, MANIFEST_FILE,
};
pub use svg::{emit_svg, PlotSpec};
