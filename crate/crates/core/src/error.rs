use thiserror::Error;

/// Errors raised by the solver pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("potential model error: {0}")]
    Model(String),

    #[error("eigenvalue search failed for index {index}: {reason} (last bracket [{lo}, {hi}])")]
    EigenSearch { index: usize, reason: String, lo: f64, hi: f64 },

    #[error("quadrature rule construction failed at z1^2 = {z1}, z2^2 = {z2}: {reason}")]
    Quadrature { z1: String, z2: String, reason: String },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("sector {sector}: {source}")]
    InSector {
        sector: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("mesh step {step}: {source}")]
    AtStep {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    pub fn in_sector(self, sector: usize) -> Self {
        Error::InSector { sector, source: Box::new(self) }
    }

    pub fn at_step(self, step: usize) -> Self {
        Error::AtStep { step, source: Box::new(self) }
    }

    /// True for errors caused by user input rather than numerics.
    pub fn is_config(&self) -> bool {
        match self {
            Error::Config(_) | Error::Io(_) => true,
            Error::InSector { source, .. } | Error::AtStep { source, .. } => source.is_config(),
            _ => false,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
