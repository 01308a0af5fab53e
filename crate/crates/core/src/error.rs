use std::fmt;

use thiserror::Error;

/// Location of a grid node: colatitude ring and longitude column.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NodeIndex {
    pub ring: usize,
    pub column: usize,
    pub theta: f64,
    pub phi: f64,
}

impl fmt::Display for NodeIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "node (ring {}, column {}) at theta={:.6}, phi={:.6}",
            self.ring, self.column, self.theta, self.phi
        )
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("surface reaches the horizon: rho={rho} <= horizon radius {horizon} at {node}")]
    BelowHorizon {
        node: NodeIndex,
        rho: f64,
        horizon: f64,
    },

    #[error("graph condition violated: chi={chi:.3e} <= {threshold:.3e} at {node}")]
    GraphCondition {
        node: NodeIndex,
        chi: f64,
        threshold: f64,
    },

    #[error("finite-difference stencil too close to the horizon: needs |y| > {required}, got {actual}")]
    Stencil { required: f64, actual: f64 },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("area-preserving flow undefined: integral of H is {integral} (must be positive)")]
    FlowUndefined { integral: f64 },

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("not applicable: {0}")]
    NotApplicable(String),

    #[error("degenerate data: {0}")]
    Degenerate(String),

    #[error("malformed snapshot {path}: {message}")]
    Snapshot { path: String, message: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// True for failures that mean the surface stopped being a valid radial graph.
    pub fn is_graph_failure(&self) -> bool {
        matches!(self, Error::BelowHorizon { .. } | Error::GraphCondition { .. })
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
