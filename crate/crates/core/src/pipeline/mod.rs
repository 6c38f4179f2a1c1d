//! Configuration-driven experiment runs with cached stage artifacts.
//!
//! [`run_pipeline`] executes snapshots, EDMD, assembly, solve and recovery,
//! storing each artifact under the output directory together with a
//! manifest of input keys and content hashes. A stage whose key is
//! unchanged is loaded instead of recomputed.

mod artifacts;
mod config;
pub mod replicate;
mod report;
mod run;
mod upo;

pub use artifacts::{sha256_hex, stage_key, ArtifactStore, ManifestEntry};
pub use config::{
    BasisConfig, DataConfig, EdmdConfig, ExperimentConfig, ObjectiveConfig, ObjectiveKind, RecoveryConfig,
    ShootingConfig, SolverConfig, SystemConfig, UpoConfig,
};
pub use report::{density_grid_csv, plot_grid, table_report, Table};
pub use run::{
    generate_snapshots, hunt_settings, moment_indices, output_dir, output_root, run_pipeline, run_upo, ArtifactBundle,
    MomentEstimate, Pipeline, Recovered, RunReport, OUTPUT_ROOT_ENV,
};
pub use upo::{diagonal_data, order_cycles, upo_hunt, CatalogEntry, HuntSettings, ObjectiveOutcome, UpoCatalog};
