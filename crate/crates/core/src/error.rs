use thiserror::Error;

use crate::moment_engine::Ordering;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A state parameter or argument is outside its domain.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// The cutoff cap was hit before the tail/moment accuracy target was met.
    #[error(
        "accuracy failure for {family}: cutoff cap {max_cutoff} reached with tail bound {tail_bound:e} \
         and moment change {moment_change:e}"
    )]
    Accuracy {
        family: String,
        max_cutoff: usize,
        tail_bound: f64,
        moment_change: f64,
    },

    /// The modified state has zero norm (e.g. subtracting more photons than a Fock state holds).
    #[error("state annihilated: normalization constant N_{index} is zero")]
    UndefinedState { index: usize },

    #[error("ladder covers indices 0..={available}, but index {needed} was requested")]
    LadderTooShort { needed: usize, available: usize },

    #[error("expected a {expected:?} ladder, got {found:?}")]
    WrongOrdering { expected: Ordering, found: Ordering },

    #[error("moment of order {order} overflows f64")]
    Overflow { order: usize },

    /// The anti-normal reordering sum came out negative beyond rounding.
    #[error("cancellation in alternating sum for x = {order}: value {value:e}, largest term {largest_term:e}")]
    Cancellation {
        order: usize,
        value: f64,
        largest_term: f64,
    },

    /// Two consecutive anti-normal ladder entries coincide; cannot occur for a valid distribution.
    #[error("degenerate anti-normal ladder: N_{index} == N_{next}", next = index + 1)]
    DegenerateLadder { index: usize },
}
