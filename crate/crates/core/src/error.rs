use std::fmt;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Pipeline stage that produced an error, used to tag causes that cross
/// module boundaries (fit failure vs. inversion failure, ...).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Synthesis,
    Fit,
    Inversion,
    Thermal,
    Trap,
    Config,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Stage::Synthesis => "synthesis",
            Stage::Fit => "fit",
            Stage::Inversion => "inversion",
            Stage::Thermal => "thermal",
            Stage::Trap => "trap",
            Stage::Config => "config",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("{quantity} = {value} outside admissible range [{min}, {max}]")]
    OutOfRange {
        quantity: &'static str,
        value: f64,
        min: f64,
        max: f64,
    },

    #[error("D = {d_ghz} GHz is not invertible; admissible interval is [{min_ghz}, {max_ghz}] GHz")]
    NonInvertible { d_ghz: f64, min_ghz: f64, max_ghz: f64 },

    #[error("no dip detected in spectrum")]
    NoDip,

    #[error("fit did not converge: {0}")]
    FitFailed(String),

    #[error("thermal runaway: absorbed power {absorbed_w} W exceeds cooling at {t_max_k} K")]
    ThermalRunaway { absorbed_w: f64, t_max_k: f64 },

    #[error("time step {dt} s exceeds resolution limit {limit} s (50 steps per drive period)")]
    Resolution { dt: f64, limit: f64 },

    #[error("configuration is unstable")]
    Unstable,

    #[error("no secular line above noise floor")]
    NoSecularLine,

    #[error("bracket failure: {0}")]
    Bracket(String),

    #[error("{stage} stage: {source}")]
    Stage {
        stage: Stage,
        #[source]
        source: Box<Error>,
    },

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    pub fn at(self, stage: Stage) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// Stage tag of the outermost wrapper, if any.
    pub fn stage(&self) -> Option<Stage> {
        match self {
            Error::Stage { stage, .. } => Some(*stage),
            _ => None,
        }
    }
}
