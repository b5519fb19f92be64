use std::fmt;

use serde_json::json;

use reltex_core::Error;

/// Command failure, classified by exit code.
#[derive(Debug)]
pub enum Failure {
    /// Invalid configuration or arguments (exit 2).
    Config(String),
    /// Unreadable or malformed input/output files (exit 3).
    Asset(String),
    /// Predictor, captioner or embedder failure (exit 4).
    Backend(String),
    /// Optimization produced non-finite values too often (exit 5).
    Diverged(String),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Config(_) => 2,
            Failure::Asset(_) => 3,
            Failure::Backend(_) => 4,
            Failure::Diverged(_) => 5,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Failure::Config(_) => "config",
            Failure::Asset(_) => "asset",
            Failure::Backend(_) => "backend",
            Failure::Diverged(_) => "diverged",
        }
    }

    pub fn message(&self) -> &str {
        match self {
            Failure::Config(m) | Failure::Asset(m) | Failure::Backend(m) | Failure::Diverged(m) => m,
        }
    }

    /// One-line JSON record for the error stream.
    pub fn diagnostic(&self, command: &str) -> String {
        json!({
            "error": {
                "kind": self.kind(),
                "exit_code": self.exit_code(),
                "command": command,
                "message": self.message(),
            }
        })
        .to_string()
    }

    pub fn asset(what: impl fmt::Display, err: impl fmt::Display) -> Self {
        Failure::Asset(format!("{what}: {err}"))
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} error: {}", self.kind(), self.message())
    }
}

impl std::error::Error for Failure {}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let msg = e.to_string();
        match e {
            Error::Config(_) | Error::Camera(_) | Error::DegenerateDirection(_) => Failure::Config(msg),
            Error::Io { .. }
            | Error::Mesh(_)
            | Error::MissingUvs(_)
            | Error::Texture(_)
            | Error::Environment(_)
            | Error::Codec(_)
            | Error::Checkpoint(_) => Failure::Asset(msg),
            Error::Backend(_) | Error::Shape { .. } | Error::StalePrefilter { .. } => Failure::Backend(msg),
            Error::Diverged(_) => Failure::Diverged(msg),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn core_errors_map_to_exit_codes() {
        assert_eq!(Failure::from(Error::Config("x".into())).exit_code(), 2);
        assert_eq!(Failure::from(Error::Mesh("x".into())).exit_code(), 3);
        assert_eq!(Failure::from(Error::Backend("x".into())).exit_code(), 4);
        assert_eq!(Failure::from(Error::Diverged("x".into())).exit_code(), 5);
    }

    #[test]
    fn diagnostic_is_one_json_line() {
        let d = Failure::Asset("missing \"kd.png\"".into()).diagnostic("edit");
        assert!(!d.contains('\n'));
        let v: serde_json::Value = serde_json::from_str(&d).unwrap();
        assert_eq!(v["error"]["exit_code"], 3);
        assert_eq!(v["error"]["message"], "missing \"kd.png\"");
    }
}
