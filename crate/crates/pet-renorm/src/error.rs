use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("cannot mix sqrt({0}) and sqrt({1}) in one computation")]
    MixedSurd(u32, u32),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("parameter orbit reached the boundary value 1/2 at step {0}")]
    Boundary(usize),
    #[error("index {index} outside explicit window [{lo}, {hi}]")]
    Window { index: i64, lo: i64, hi: i64 },
    #[error("sequence is not zero-collapsible (0 lies inside a \"-+\" pair)")]
    NotZeroCollapsible,
    #[error("sequence looks not unbounded-collapsible: {0}")]
    NotUnboundedCollapsible(String),
    #[error("state is outside the required domain: {0}")]
    OutsideDomain(String),
    #[error("{what} exceeded cap of {cap}")]
    CapExceeded { what: String, cap: u64 },
    #[error("assumption violated: {0}")]
    Assumption(String),
    #[error("internal consistency check failed: {0}")]
    Invariant(String),
}

pub type Result<T> = std::result::Result<T, Error>;
