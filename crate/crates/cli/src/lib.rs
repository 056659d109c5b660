//! Command implementations behind the `trustnet` binary.

pub mod commands;
pub mod plot;
pub mod spec;

use std::fmt;

pub use commands::{cmd_bounds, cmd_run, cmd_verify, configure_threads, Options};
pub use spec::ExperimentSpec;

/// Failure of a command, mapped onto the process exit code.
#[derive(Debug)]
pub enum CliError {
    /// Bad spec, flag or parameter. Exit 2.
    Config(String),
    /// The simulation broke an internal invariant. Exit 3.
    Invariant(String),
    /// Empirical frequencies exceeded an analytical bound. Exit 4.
    Dominance(Vec<String>),
    /// Reading or writing files failed. Exit 1.
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io(_) => 1,
            CliError::Config(_) => 2,
            CliError::Invariant(_) => 3,
            CliError::Dominance(_) => 4,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Invariant(m) => write!(f, "invariant violation: {m}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
            CliError::Dominance(fails) => {
                write!(f, "{} bound check(s) failed:", fails.len())?;
                for line in fails {
                    write!(f, "\n  {line}")?;
                }
                Ok(())
            }
        }
    }
}

impl std::error::Error for CliError {}

impl From<trustnet::Error> for CliError {
    fn from(e: trustnet::Error) -> Self {
        use trustnet::Error as E;
        match e {
            E::Invariant(_) | E::Protocol(_) | E::Input(_) => CliError::Invariant(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        assert_eq!(CliError::Io("x".into()).exit_code(), 1);
        assert_eq!(CliError::Config("x".into()).exit_code(), 2);
        assert_eq!(CliError::Invariant("x".into()).exit_code(), 3);
        assert_eq!(CliError::Dominance(vec![]).exit_code(), 4);
        let e: CliError = trustnet::Error::Invariant("drift".into()).into();
        assert_eq!(e.exit_code(), 3);
        let e: CliError = trustnet::Error::Config("eta".into()).into();
        assert_eq!(e.exit_code(), 2);
    }

    #[test]
    fn dominance_message_lists_pairs() {
        let e = CliError::Dominance(vec!["concentration_q1 t=25".into(), "tf_tail t=50".into()]);
        let s = e.to_string();
        assert!(s.starts_with("2 bound check(s) failed"));
        assert!(s.contains("concentration_q1 t=25") && s.contains("tf_tail t=50"));
    }
}
