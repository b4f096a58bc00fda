use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("index out of range: {what} = {value} (valid {lo}..={hi})")]
    Range {
        what: &'static str,
        value: usize,
        lo: usize,
        hi: usize,
    },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid parameter `{key}`: {reason}")]
    Invalid { key: String, reason: String },

    #[error("numerical instability at layer {layer}: pre-activation norm {norm:e} exceeds {threshold:e}")]
    Instability {
        layer: usize,
        norm: f64,
        threshold: f64,
    },

    #[error("at grid cell (n = {n}, L = {depth}): {source}")]
    AtCell {
        n: usize,
        depth: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub fn invalid(key: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Invalid {
            key: key.into(),
            reason: reason.into(),
        }
    }

    /// True when the root cause is a forward-pass blow-up.
    pub fn is_instability(&self) -> bool {
        match self {
            Error::Instability { .. } => true,
            Error::AtCell { source, .. } => source.is_instability(),
            _ => false,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
