//! Error type shared by every module in the crate.

use std::fmt;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// Everything that can go wrong when building models or running experiments.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A scalar parameter is out of its documented range.
    Parameter(String),
    /// Vector or matrix dimensions do not line up.
    Dimension(String),
    /// An input contained NaN or infinity.
    NonFinite(String),
    /// A model fit had nothing to work with (e.g. all-zero responses).
    DegenerateFit(String),
    /// Threshold calibration was asked to work from too little data.
    Calibration(String),
    /// ROC requested on scores that contain only one class.
    UndefinedRoc(String),
    /// Scenario config rejected; lists every violated field at once.
    Validation(Vec<String>),
    /// Text parse failure (schedules, configs, score files).
    Parse { line: usize, message: String },
    /// Filesystem failure with the offending path attached.
    Io { path: String, message: String },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Parameter(m) => write!(f, "parameter error: {m}"),
            Error::Dimension(m) => write!(f, "dimension error: {m}"),
            Error::NonFinite(m) => write!(f, "non-finite input: {m}"),
            Error::DegenerateFit(m) => write!(f, "degenerate fit: {m}"),
            Error::Calibration(m) => write!(f, "calibration error: {m}"),
            Error::UndefinedRoc(m) => write!(f, "undefined ROC: {m}"),
            Error::Validation(fields) => {
                write!(f, "config validation failed ({} problems):", fields.len())?;
                for v in fields {
                    write!(f, "\n  - {v}")?;
                }
                Ok(())
            }
            Error::Parse { line, message } => write!(f, "parse error at line {line}: {message}"),
            Error::Io { path, message } => write!(f, "io error on {path}: {message}"),
        }
    }
}

impl std::error::Error for Error {}

/// True when the error is a config/parameter problem rather than a runtime one.
///
/// The CLI maps validation-class errors to exit code 2 and everything else
/// to exit code 1.
impl Error {
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Parameter(_)
                | Error::Dimension(_)
                | Error::NonFinite(_)
                | Error::Validation(_)
                | Error::Parse { .. }
        )
    }
}

/// Reject non-finite values early with a consistent message.
pub fn ensure_finite(name: &str, value: f64) -> Result<()> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite(format!("{name} = {value}")))
    }
}

/// Reject non-finite slices early with the offending index in the message.
pub fn ensure_all_finite(name: &str, values: &[f64]) -> Result<()> {
    for (i, v) in values.iter().enumerate() {
        if !v.is_finite() {
            return Err(Error::NonFinite(format!("{name}[{i}] = {v}")));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validation_lists_every_field() {
        let e = Error::Validation(vec!["fs_hz must be > 0".into(), "rho outside (0,1)".into()]);
        let msg = e.to_string();
        assert!(msg.contains("2 problems"));
        assert!(msg.contains("fs_hz"));
        assert!(msg.contains("rho"));
    }

    #[test]
    fn classifies_validation_errors() {
        assert!(Error::Parameter("x".into()).is_validation());
        assert!(!Error::Calibration("x".into()).is_validation());
        assert!(!Error::Io { path: "p".into(), message: "m".into() }.is_validation());
    }

    #[test]
    fn ensure_finite_catches_nan() {
        assert!(ensure_finite("sigma", f64::NAN).is_err());
        assert!(ensure_all_finite("y", &[0.0, f64::INFINITY]).is_err());
        assert!(ensure_all_finite("y", &[0.0, 1.0]).is_ok());
    }
}
