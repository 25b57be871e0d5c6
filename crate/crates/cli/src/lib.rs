//! Scene-driven command-line surface over the partube engine.

pub mod check;
pub mod decompose;
pub mod fragment;
pub mod mesh;
pub mod omega;
pub mod report;
pub mod scene;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Core(#[from] partube::Error),
    #[error("verification failed")]
    Failed,
}

impl CliError {
    /// Process exit code: 1 for usage and parse errors, 2 for failed
    /// geometric checks.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Parse(_) => 1,
            CliError::Core(partube::Error::Parse(_)) | CliError::Core(partube::Error::Invalid(_)) => 1,
            CliError::Core(_) | CliError::Failed => 2,
        }
    }
}

pub fn io_error(path: &std::path::Path, e: std::io::Error) -> CliError {
    CliError::Usage(format!("{}: {e}", path.display()))
}

/// Serialises to pretty JSON with a trailing newline.
pub fn to_json<T: serde::Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serialisable report");
    s.push('\n');
    s
}

/// JSON schemas of the scene and report formats, as shipped in `schemas/`.
pub fn schemas() -> [(&'static str, String); 4] {
    let render = |s: schemars::Schema| to_json(&s);
    [
        ("scene.schema.json", render(schemars::schema_for!(scene::Scene))),
        ("report.schema.json", render(schemars::schema_for!(report::Report))),
        ("decompose.schema.json", render(schemars::schema_for!(decompose::DecomposeReport))),
        ("fragment.schema.json", render(schemars::schema_for!(fragment::Fragment))),
    ]
}
