use std::fmt::Display;
use std::path::{Path, PathBuf};

use semtraj::config::ConfigError;
use serde_json::json;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Config(ConfigError),
    Data { message: String, path: Option<PathBuf> },
    Backend(String),
}

impl CliError {
    pub fn data(path: &Path, err: impl Display) -> Self {
        CliError::Data {
            message: format!("{}: {err}", path.display()),
            path: Some(path.to_path_buf()),
        }
    }

    pub fn data_msg(msg: impl Into<String>) -> Self {
        CliError::Data { message: msg.into(), path: None }
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) | CliError::Config(_) => 1,
            CliError::Data { .. } => 2,
            CliError::Backend(_) => 3,
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        match self {
            CliError::Usage(m) => json!({"error": "usage", "message": m}),
            CliError::Config(e) => {
                let mut v = json!({"error": "config", "message": e.to_string()});
                match e {
                    ConfigError::Invalid(list) => v["violations"] = json!(list),
                    ConfigError::Io { path, .. } | ConfigError::Syntax { path, .. } => v["path"] = json!(path),
                }
                v
            }
            CliError::Data { message, path } => {
                let mut v = json!({"error": "data", "message": message});
                if let Some(p) = path {
                    v["path"] = json!(p);
                }
                v
            }
            CliError::Backend(m) => json!({"error": "backend", "message": m}),
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e)
    }
}
