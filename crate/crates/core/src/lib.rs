//! Surrogate-loss calibration, disagreement-based active learning with
//! computable risk thresholds, a passive ERM baseline, synthetic problems and
//! brute-force reference oracles.

pub mod batch;
pub mod classes;
pub mod complexity;
pub mod error;
pub mod learners;
pub mod losses;
pub mod oracle;
pub mod synth;

mod numeric;

pub use batch::{derive_seed, rademacher_bit, BatchEntry, Label, Labeled, LabeledBatch, Point};
pub use classes::{
    DisRegion, FiniteClass, Function, FunctionClass, LinearBall, MonotoneGrid, RiskConstraint,
    VersionSpace,
};
pub use complexity::{RecursionState, ThresholdParams, ThresholdVariant};
pub use error::{Error, Result};
pub use learners::{Estimate, TrialRecord, UpdateRecord};
pub use losses::{CalibrationTable, LossKind, SurrogateLoss};
pub use synth::Problem;

/// `Log(x) = max(ln x, 1)`.
pub fn log_floor(x: f64) -> f64 {
    x.ln().max(1.0)
}

/// Sign with the convention `sign(0) = +1`.
pub fn sign(x: f64) -> f64 {
    if x >= 0.0 {
        1.0
    } else {
        -1.0
    }
}
