use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("base phase count {n} does not divide loop count {loops}")]
    LoopsNotMultiple { n: usize, loops: usize },

    #[error("sequence already carries an injected signal")]
    SignalAlreadyInjected,

    #[error("fringe fit is degenerate: {0}")]
    DegenerateFit(String),

    #[error("phase unwrapping is ambiguous between signal amplitudes {from} and {to} (jump {jump} rad)")]
    UnwrapAmbiguity { from: f64, to: f64, jump: f64 },

    #[error("propagation failed at t = {time} s: {reason}")]
    Propagation { time: f64, reason: String },

    #[error("config key `{key}`: {reason}")]
    Config { key: String, reason: String },
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
