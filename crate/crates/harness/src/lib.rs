//! Configuration, evaluation, reporting and the `wcs` command line.

// `!(x > 0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod config;
pub mod error;
pub mod eval;
pub mod plant;
pub mod report;
pub mod run;

pub use config::{
    cart_pole_preset, EnvConfig, EvalConfig, RunConfig, SamplingConfig, SynthesisConfig, TrainingConfig,
};
pub use error::{HarnessError, Result};
pub use eval::{
    axis_extents, classify_ie_ee, sweep_safety_area, EvalReport, Label, LabelCounts, Probe, SweepSpec,
};
pub use plant::Plant;
pub use report::{format_table, safety_area_svg, summarize, SummaryRow};
pub use run::{evaluate, train, TrainOutcome};
