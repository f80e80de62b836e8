//! Multi-teacher ensemble distillation at desk scale: combiners that turn
//! several teacher scores into one training target (majority-vote
//! gradient-orientation selection, confidence weighting, logistic
//! blending, plain means), a small feed-forward student with its training
//! loops, precision-recall evaluation, and simulation tools for the
//! voting math.

pub mod dataset;
pub mod ensemble;
pub mod error;
pub mod metrics;
pub mod montecarlo;
pub mod numfmt;
pub mod persist;
pub mod rng;
pub mod student;
pub mod synth;
pub mod types;

pub use error::{Error, Result};
pub use types::{Dataset, EnsembleTarget, Label, Orientation, SampleRecord, Score, Strategy};
