use thiserror::Error;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// The sum of all batch weights is zero, e.g. every particle filter collapsed.
    #[error("normalising sum of weights is zero")]
    ZeroNormaliser,
    #[error("non-finite value encountered: {0}")]
    NonFinite(&'static str),
    #[error("holding time must be at least one")]
    InvalidHoldingTime,
    #[error("negative weight where only non-negative weights are allowed")]
    NegativeWeight,
    #[error("convex combination coefficients must be non-negative and sum to one")]
    BadSimplex,
    #[error("batches must share the same parameter value")]
    ThetaMismatch,
    #[error("batch must contain at least one draw and as many weights as draws")]
    EmptyBatch,
    #[error("proposal innovation has zero norm")]
    DegenerateInnovation,
    #[error("acceptance probability must lie in [0, 1], got {0}")]
    InvalidAcceptance(f64),
    #[error("likelihood estimate is not strictly positive")]
    NonPositiveEstimate,
    #[error("potential evaluated to NaN, +inf or a negative value at time {0}")]
    PotentialNaN(usize),
    #[error("resampling weights do not form a probability vector")]
    BadWeights,
    #[error("model does not provide a Markov potential kernel")]
    MissingMarkovPotential,
    #[error("innovation variance is not positive at time {0}")]
    SingularInnovation(usize),
    #[error("log-density is not strictly concave in the signal at time {0}")]
    NonConcave(usize),
    #[error("Laplace iteration did not converge within {0} iterations")]
    NoConvergence(usize),
    #[error("observation density returned zero")]
    NonPositiveDensity,
    #[error("at least two repeats are needed for a variance estimate")]
    NotEnoughRepeats,
    #[error("invalid model: {0}")]
    InvalidModel(&'static str),
    #[error("invalid argument: {0}")]
    InvalidArgument(&'static str),
}
