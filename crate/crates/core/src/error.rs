use std::fmt;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Level of the three-level system, used in diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Level {
    Ground,
    Excited,
    Metastable,
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Level::Ground => "ground",
            Level::Excited => "excited",
            Level::Metastable => "metastable",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid rates: {0}")]
    InvalidRates(String),
    #[error("singular rate system: all population is trapped in the {0} state")]
    AbsorbingState(Level),
    #[error("zero pump rate: the correlation function is undefined without excitation")]
    ZeroPump,
    #[error("degenerate eigenvalues of the rate matrix; use kinetics::g2_exact instead")]
    DegenerateEigenvalues,
    #[error("rates outside the bi-exponential g2 regime: {0}")]
    NotBiexponential(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("channel {0} contains no events")]
    EmptyChannel(u8),
    #[error("correlation window {window_ps} ps exceeds stream duration {duration_ps} ps")]
    WindowTooLong { window_ps: u64, duration_ps: u64 },
    #[error("no antibunching signature (minimum smoothed g2 = {min:.3})")]
    NoAntibunching { min: f64 },
    #[error("singular Jacobian: degenerate parameters {}", .0.join(", "))]
    SingularJacobian(Vec<String>),
    #[error("fit failed: {0}")]
    FitFailed(String),
    #[error("peaks cannot be resolved: {0}")]
    UnresolvablePeaks(String),
    #[error("format error at {location}: {message}")]
    Format { location: String, message: String },
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("{stage}: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn format_at_byte(offset: u64, message: impl Into<String>) -> Self {
        Error::Format { location: format!("byte offset {offset}"), message: message.into() }
    }

    pub fn format_at_line(line: usize, message: impl Into<String>) -> Self {
        Error::Format { location: format!("line {line}"), message: message.into() }
    }

    pub fn in_stage(self, stage: &str) -> Self {
        Error::Stage { stage: stage.to_string(), source: Box::new(self) }
    }

    /// Process exit code for this error class. Stable across releases.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Stage { source, .. } => source.exit_code(),
            Error::Config(_) => 3,
            Error::Io(_) | Error::Format { .. } => 4,
            Error::InvalidRates(_)
            | Error::AbsorbingState(_)
            | Error::ZeroPump
            | Error::DegenerateEigenvalues
            | Error::NotBiexponential(_) => 5,
            Error::InvalidInput(_) | Error::EmptyChannel(_) | Error::WindowTooLong { .. } => 6,
            Error::NoAntibunching { .. }
            | Error::SingularJacobian(_)
            | Error::FitFailed(_)
            | Error::UnresolvablePeaks(_) => 7,
        }
    }
}
