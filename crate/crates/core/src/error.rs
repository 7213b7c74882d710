//! Error type shared by the filters, metrics and simulator.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("{what} is not positive definite")]
    NotPositiveDefinite { what: &'static str },

    /// All posterior cardinality mass underflowed or was truncated away.
    #[error("cardinality distribution has no mass at frame {frame}")]
    CardinalityCollapse { frame: usize },

    #[error("invalid model: {}", .0.join("; "))]
    InvalidModel(Vec<String>),

    #[error("frame {frame}: {source}")]
    AtFrame {
        frame: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn at_frame(self, frame: usize) -> Error {
        match self {
            e @ Error::AtFrame { .. } => e,
            e @ Error::CardinalityCollapse { .. } => e,
            e => Error::AtFrame {
                frame,
                source: Box::new(e),
            },
        }
    }

    /// Frame index carried by the error, if any.
    pub fn frame(&self) -> Option<usize> {
        match self {
            Error::AtFrame { frame, .. } | Error::CardinalityCollapse { frame } => Some(*frame),
            _ => None,
        }
    }
}
