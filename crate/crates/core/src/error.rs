use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("unknown kernel `{0}`")]
    UnknownKernel(String),
    #[error("parameter `{name}` = {value} out of range for kernel `{kernel}`: {expected}")]
    ParamOutOfRange {
        kernel: String,
        name: String,
        value: f64,
        expected: String,
    },
    #[error("kernel is not anchored at the boundary: g(0) = {g0:e}, g(1) = {g1:e}")]
    NotAnchored { g0: f64, g1: f64 },
    #[error("kernel derivative appears unbounded (grid extremum {coarse:e} -> {fine:e} under refinement)")]
    UnboundedDerivative { coarse: f64, fine: f64 },
    #[error("kernel is identically zero; slope bounds are undefined")]
    DegenerateKernel,
    #[error("cdf pair is not calibrated: max mixture deviation {deviation:e} at u = {at}")]
    NotCalibrated { deviation: f64, at: f64 },
    #[error("cdf is not monotone near u = {at}")]
    NotMonotone { at: f64 },
    #[error("dimension {d} exceeds the supported limit {max}")]
    DimensionTooLarge { d: usize, max: usize },
    #[error("subset must contain at least two distinct indices in 0..{d}")]
    SubsetTooSmall { d: usize },
    #[error("all Bernoulli margins must equal 1/2")]
    MarginsNotHalf,
    #[error("Bernoulli specification is not admissible: {0}")]
    NotAdmissible(String),
    #[error("invalid Bernoulli specification: {0}")]
    InvalidSpec(String),
    #[error("kernel has no analytic derivative")]
    NoDerivative,
    #[error("h(u) diverges as u -> 0")]
    UnboundedAtOrigin,
    #[error("a = {a} is outside the transformed-kernel interval [{lo}, {hi}]")]
    NotAdmissibleForTransformed { a: f64, lo: f64, hi: f64 },
    #[error("batch of {n} rows is too small (need at least {min})")]
    BatchTooSmall { n: usize, min: usize },
    #[error("invalid configuration: {0}")]
    Config(String),
}
