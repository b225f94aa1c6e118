//! Monte-Carlo harness comparing convex demixing against hybrid-field OMP.
//!
//! A sweep is a grid of `(point, trial)` cells. Each cell draws one channel, one
//! combiner and one noise realization, runs every enabled method on the same
//! observation, and yields a [`TrialRecord`]. Records are written as CSV next to a
//! JSON manifest holding the resolved config and the per-cell seeds.

pub mod config;
pub mod sweep;
pub mod trial;

pub use config::{ExperimentConfig, Method, Sweep};
pub use sweep::{load_config, run_sweep, write_csv, RunManifest, SweepOptions, CSV_HEADER};
pub use trial::{run_trial, MethodOutcome, TrialContext, TrialRecord};
