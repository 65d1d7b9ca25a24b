//! Config-driven experiments: JSON configs, CSV and SVG artefacts, cross-checks.

pub mod config;
pub mod csv;
pub mod experiment;
pub mod svg;

pub use config::{ExperimentConfig, InitialPreset};
pub use experiment::{run_experiment, validate, Experiment, RunSummary, ValidationReport};
pub use svg::{emit_svg, PlotStyle, Series};
