use num_complex::Complex64;
use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parameter {0} outside [0, 1]")]
    Domain(f64),

    #[error("degenerate surface jacobian on patch {patch} at ({u}, {v}): measure {measure:e}")]
    DegenerateJacobian {
        patch: usize,
        u: f64,
        v: f64,
        measure: f64,
    },

    #[error("invalid geometry: {0}")]
    Geometry(String),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("interface mismatch between patch {patch_a} and patch {patch_b}: edge traces differ by {deviation:e}")]
    InterfaceMismatch {
        patch_a: usize,
        patch_b: usize,
        deviation: f64,
    },

    #[error("unsupported degree {0}: divergence-conforming spaces need p >= 1")]
    UnsupportedDegree(usize),

    #[error("{0}")]
    Usage(String),

    #[error("invalid wavenumber {0}")]
    InvalidWavenumber(Complex64),

    #[error("singular system: pivot {index} has magnitude {magnitude:e}")]
    Singular { index: usize, magnitude: f64 },

    #[error("contour node {z} hits the spectrum (pivot {pivot:e}); choose a different contour")]
    ContourTouchesSpectrum { z: Complex64, pivot: f64 },

    #[error("rank overflow: {probes} probe vectors exhausted (maximum {max}); the contour encloses too many eigenvalues")]
    RankOverflow { probes: usize, max: usize },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code used by the command-line driver.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Usage(_) | Error::UnsupportedDegree(_) | Error::InvalidWavenumber(_) => 2,
            Error::Geometry(_)
            | Error::Parse { .. }
            | Error::InterfaceMismatch { .. }
            | Error::DegenerateJacobian { .. } => 4,
            Error::Io(_) => 2,
            _ => 3,
        }
    }
}
