use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("no steady state: drift matrix has min Re(eigenvalue) = {min_real_part:e}")]
    NotStable { min_real_part: f64 },

    #[error("linear system is singular to working precision (pivot {pivot:e})")]
    SingularSystem { pivot: f64 },

    #[error("coupling constant is zero; the requested formula is singular at lambda = 0")]
    CouplingZero,

    #[error("|D(omega)| = {magnitude:e} at omega = {omega}: pole on the real axis")]
    PoleOnAxis { omega: f64, magnitude: f64 },

    #[error("poles are degenerate (separation {separation:e}); residues are ill-conditioned")]
    DegeneratePoles { separation: f64 },

    #[error("could not classify the quartic roots by quadrant: {0}")]
    ClassificationFailure(String),

    #[error("overdamped oscillator (omega1 = {omega1}, gamma1/2 = {half_gamma}); small-coupling forms need omega1 > gamma1/2")]
    OverdampedUnsupported { omega1: f64, half_gamma: f64 },

    #[error("oscillators are not identical (m1 = {m1}, m2 = {m2}, w1 = {w1}, w2 = {w2})")]
    NotIdentical { m1: f64, m2: f64, w1: f64, w2: f64 },

    #[error("correlation |r| = {r} is too close to one for a finite mutual information")]
    PerfectCorrelation { r: f64 },

    #[error("decoherence-diffusion trade-off violated: 4 D D0 = {product} < 1")]
    TradeoffViolation { product: f64 },

    #[error("step size too large: dt * max|theta| = {ratio} (hard limit 1)")]
    StepSize { ratio: f64 },

    #[error("configuration error: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter { name, reason: reason.into() }
    }
}
