//! Crate-wide error type.

use thiserror::Error;

use crate::solver::SolveReport;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A metric evaluation produced a matrix that is not symmetric
    /// positive definite; the field definition is invalid.
    #[error("metric is not symmetric positive definite: {0}")]
    MetricNotSPD(String),

    /// The metric has no gradient evaluator but the operation needs one.
    #[error("metric does not provide a gradient evaluator (C1 data required)")]
    MetricNotC1,

    #[error("point ({0}, {1}) lies outside the domain")]
    OutOfDomain(f64, f64),

    #[error("empty sample set")]
    EmptySampleSet,

    #[error("degenerate sample pair at ({0}, {1})")]
    DegeneratePair(f64, f64),

    #[error("refinement level {0} outside supported range 0..=9")]
    RefinementOutOfRange(u32),

    #[error("region does not overlap the mesh")]
    EmptyRegion,

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    /// The iteration did not reach the requested tolerance; the best
    /// iterate found so far is attached.
    #[error("solver diverged after {} iterations (residual {:.3e})", .0.iterations, .0.residual_norm)]
    SolveDiverged(Box<SolveReport>),

    #[error("region too coarse: {interior} interior vertices (need at least {needed})")]
    RegionTooCoarse { interior: usize, needed: usize },

    #[error("unsupported exponent combination: p = {p}, n = {n}")]
    UnsupportedExponentCombo { p: f64, n: usize },

    #[error("need at least 3 scales, got {0}")]
    InsufficientScales(usize),

    #[error("degenerate region (vanishing denominator)")]
    DegenerateRegion,
}
