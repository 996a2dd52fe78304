use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("non-physical invariants: {detail} (discriminant {discriminant:.3e})")]
    NonPhysicalInvariants { discriminant: f64, detail: String },

    #[error("inconsistent invariants: {0}")]
    InconsistentInvariants(String),

    #[error("no physical point in the confidence region: {0}")]
    InconsistentRegion(String),

    #[error("no closed form for {kind} at t = {t}")]
    UnsupportedMoment { kind: String, t: u32 },

    #[error("incomplete input, missing: {}", missing.join(", "))]
    IncompleteInput { missing: Vec<String> },

    #[error("insufficient shots: need at least {needed}, got {got}")]
    InsufficientShots { needed: u64, got: u64 },

    #[error("insufficient set size: need at least {needed}, got {got}")]
    InsufficientSet { needed: usize, got: usize },

    #[error("setting {setting} lacks the {basis} basis table")]
    MissingBasis { setting: u64, basis: String },

    #[error("parse error{}: {msg}", line.map(|l| format!(" at line {l}")).unwrap_or_default())]
    Parse { line: Option<usize>, msg: String },

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn parse(msg: impl Into<String>) -> Self {
        Error::Parse { line: None, msg: msg.into() }
    }

    pub fn with_context(self, context: impl Into<String>) -> Self {
        Error::Context { context: context.into(), source: Box::new(self) }
    }

    /// True for data that parsed fine but cannot come from a physical state.
    pub fn is_inconsistent(&self) -> bool {
        match self {
            Error::NonPhysicalInvariants { .. } | Error::InconsistentInvariants(_) | Error::InconsistentRegion(_) => {
                true
            }
            Error::Context { source, .. } => source.is_inconsistent(),
            _ => false,
        }
    }

    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        if self.is_inconsistent() {
            3
        } else {
            2
        }
    }
}

pub(crate) trait ResultExt<T> {
    fn context(self, f: impl FnOnce() -> String) -> Result<T>;
}

impl<T> ResultExt<T> for Result<T> {
    fn context(self, f: impl FnOnce() -> String) -> Result<T> {
        self.map_err(|e| e.with_context(f()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_follow_error_class() {
        assert_eq!(Error::parse("x").exit_code(), 2);
        assert_eq!(Error::InconsistentRegion("empty".into()).exit_code(), 3);
        let wrapped = Error::InconsistentInvariants("x".into()).with_context("run 3");
        assert_eq!(wrapped.exit_code(), 3);
        assert!(wrapped.to_string().starts_with("run 3: "));
    }
}
