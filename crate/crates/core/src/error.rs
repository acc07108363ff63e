use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parameter {value} outside domain [{lo}, {hi}]")]
    Domain { value: f64, lo: f64, hi: f64 },

    #[error("invalid knot vector: {0}")]
    KnotVector(String),

    #[error("index {index} out of range (size {size})")]
    IndexOutOfRange { index: usize, size: usize },

    #[error("invalid geometry: {0}")]
    Geometry(String),

    #[error("assembly failed: {0}")]
    Assembly(String),

    #[error("inadmissible state: {0}")]
    InvalidState(String),

    #[error("inadmissible state at DOF {dof} (t = {time}): {reason}")]
    InadmissibleDof { dof: usize, time: f64, reason: String },

    #[error("limiter bound violated at DOF {dof} for {variable}: {value} not in [{lo}, {hi}]")]
    BoundViolation { dof: usize, variable: &'static str, value: f64, lo: f64, hi: f64 },

    #[error("boundary flux failed on side {side} at quadrature point {point}: {source}")]
    Boundary { side: String, point: usize, #[source] source: Box<Error> },

    #[error("stage {stage} of the Runge-Kutta step failed: {source}")]
    Stage { stage: usize, #[source] source: Box<Error> },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("I/O error on {}: {source}", path.display())]
    Io { path: PathBuf, #[source] source: std::io::Error },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
