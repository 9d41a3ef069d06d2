use thiserror::Error;

/// Errors raised by the simulator and the oracle layers built on it.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("unknown register `{0}`")]
    UnknownRegister(String),
    #[error("duplicate register name `{0}`")]
    DuplicateRegister(String),
    #[error("register `{name}` has invalid cardinality {cardinality}")]
    BadCardinality { name: String, cardinality: usize },
    #[error("value {value} out of range for register `{name}` (cardinality {cardinality})")]
    OutOfRange {
        name: String,
        value: usize,
        cardinality: usize,
    },
    #[error("label has {got} coordinates, layout has {expected} registers")]
    LabelLength { expected: usize, got: usize },
    #[error("layout needs {bits} packed label bits, at most 128 are supported")]
    LayoutTooWide { bits: u32 },
    #[error("matrix is not unitary (max deviation {deviation:.3e})")]
    NotUnitary { deviation: f64 },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("basis function is not injective: two labels map to {0:?}")]
    NotBijective(Vec<usize>),
    #[error("register `{name}` has cardinality {cardinality}, which is not a power of two")]
    NotPowerOfTwo { name: String, cardinality: usize },
    #[error("states live on different register layouts")]
    LayoutMismatch,
    #[error("register `{name}` is not clean: weight {weight:.3e} on nonzero values")]
    DirtyRegister { name: String, weight: f64 },
    #[error("scratch space left dirty by `{step}`: weight {weight:.3e}")]
    DirtyScratch { step: String, weight: f64 },
    #[error("state dimension {dim} exceeds the guard of {cap}")]
    SizeGuard { dim: u128, cap: u128 },
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
    #[error("group mode xor needs a power-of-two range, got {0}")]
    XorNeedsPowerOfTwo(usize),
    #[error("oracle is in the {actual} picture, operation needs {expected}")]
    PictureMismatch {
        expected: &'static str,
        actual: &'static str,
    },
    #[error("database capacity {capacity} exceeded")]
    CapacityOverflow { capacity: usize },
    #[error("ill-formed database label: {0}")]
    IllFormed(String),
    #[error("operation needs the uniform distribution in xor mode")]
    NotUniformXor,
    #[error("graph is saturated, no fresh inner value can be sampled")]
    Saturated,
    #[error("node {0} already has an outgoing edge")]
    DuplicateEdge(usize),
    #[error("controlled puncturing is only available in deferred mode")]
    ImmediateUnderControl,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("invalid adversary: {0}")]
    InvalidAdversary(String),
}

pub type Result<T> = std::result::Result<T, Error>;
