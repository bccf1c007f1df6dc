use serde::{Deserialize, Serialize};

/// Provenance record embedded in every artifact the CLI writes.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub argv: Vec<String>,
    pub cases: Vec<String>,
    pub config: serde_json::Value,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub tool_version: String,
    pub solver: String,
    pub parallel: bool,
    pub solver_diagnostics: Vec<String>,
    /// Unix seconds.
    pub started_at: f64,
    pub finished_at: f64,
}

impl RunManifest {
    pub fn new(command: &str, argv: Vec<String>, cases: Vec<String>, config: serde_json::Value, seed: Option<u64>) -> Self {
        Self {
            command: command.to_string(),
            argv,
            cases,
            config,
            seed,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            solver: "clarabel 0.11".to_string(),
            parallel: cfg!(feature = "parallel"),
            solver_diagnostics: Vec::new(),
            started_at: super::now_secs(),
            finished_at: super::now_secs(),
        }
    }

    pub fn finish(&mut self, started_at: f64, diagnostics: Vec<String>) {
        self.started_at = started_at;
        self.finished_at = super::now_secs();
        self.solver_diagnostics = diagnostics;
    }
}
