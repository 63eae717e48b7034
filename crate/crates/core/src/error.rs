use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid kernel: {0}")]
    InvalidKernel(String),

    #[error("kernel is not subcritical: ||h+||_1 = {l1_positive} but must be < 1")]
    NotSubcritical { l1_positive: f64 },

    #[error("kernel must be nonnegative for the cluster representation")]
    SignedKernel,

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("invalid point configuration: {0}")]
    InvalidConfiguration(String),

    #[error("s = {s} is outside the domain of convergence (must exceed the abscissa {bound})")]
    OutsideDomain { s: f64, bound: f64 },

    #[error("quadrature did not converge: achieved estimated error {achieved:e}, requested {requested:e}")]
    Quadrature { achieved: f64, requested: f64 },

    #[error("need at least {needed} complete renewal cycle(s) but found {found}; increase the horizon or the number of replicas")]
    InsufficientCycles { needed: usize, found: usize },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
