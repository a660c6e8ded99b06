use thiserror::Error;

/// Errors raised by the separation engine.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("degenerate model: {0}")]
    Degenerate(String),

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("numerical failure at {context}: {message}")]
    Numerical { context: Location, message: String },

    #[error("dictionary parse error: {0}")]
    Dictionary(String),
}

/// Where in the TF plane / iteration schedule a numerical failure happened.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Location {
    pub bin: Option<usize>,
    pub frame: Option<usize>,
    pub step: Option<usize>,
    pub iteration: Option<usize>,
}

impl Location {
    pub fn at(bin: usize, frame: usize) -> Self {
        Self {
            bin: Some(bin),
            frame: Some(frame),
            ..Self::default()
        }
    }

    pub fn bin(bin: usize) -> Self {
        Self {
            bin: Some(bin),
            ..Self::default()
        }
    }
}

impl std::fmt::Display for Location {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let mut parts = Vec::new();
        if let Some(b) = self.bin {
            parts.push(format!("f={b}"));
        }
        if let Some(n) = self.frame {
            parts.push(format!("n={n}"));
        }
        if let Some(t) = self.step {
            parts.push(format!("t={t}"));
        }
        if let Some(i) = self.iteration {
            parts.push(format!("iter={i}"));
        }
        if parts.is_empty() {
            write!(f, "<unknown>")
        } else {
            write!(f, "{}", parts.join(","))
        }
    }
}

impl Error {
    /// Attach an iteration index to a numerical error.
    pub fn at_iteration(self, iteration: usize) -> Self {
        match self {
            Error::Numerical {
                mut context,
                message,
            } => {
                context.iteration = Some(iteration);
                Error::Numerical { context, message }
            }
            other => other,
        }
    }

    /// Attach an online step index to a numerical error.
    pub fn at_step(self, step: usize) -> Self {
        match self {
            Error::Numerical {
                mut context,
                message,
            } => {
                context.step = Some(step);
                Error::Numerical { context, message }
            }
            other => other,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
