use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Inconsistent shapes, invalid hyperparameters, malformed datasets.
    #[error("configuration error: {0}")]
    Config(String),

    /// A non-finite value showed up where it must not.
    #[error("numeric error in {what}{}", index.map(|i| format!(" (flat index {i})")).unwrap_or_default())]
    Numeric { what: String, index: Option<usize> },

    /// A domain with no examples cannot produce a loss or a gradient.
    #[error("domain {0} has no examples")]
    EmptyDomain(usize),

    /// The input admits no well-defined answer (e.g. a pseudoinverse step
    /// applied to a matrix whose relevant component vanishes).
    #[error("degenerate input: {0}")]
    Degenerate(String),

    /// Training loss blew past the divergence limit.
    #[error("divergence at epoch {epoch}: domain {domain} loss {loss:.3e} exceeds {limit:.1e}")]
    Divergence {
        epoch: usize,
        domain: usize,
        loss: f64,
        limit: f64,
    },
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn numeric(what: impl Into<String>, index: Option<usize>) -> Self {
        Error::Numeric {
            what: what.into(),
            index,
        }
    }
}
