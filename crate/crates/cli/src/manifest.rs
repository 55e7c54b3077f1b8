//! Run manifests: every command that writes artifacts drops a JSON
//! manifest next to them with enough context to re-run it exactly.

use std::path::{Path, PathBuf};

pub struct ManifestBuilder {
    command: String,
    config_snapshot: Option<String>,
    seed: Option<u64>,
    started: String,
    outputs: Vec<PathBuf>,
}

impl ManifestBuilder {
    pub fn new(command: &str) -> ManifestBuilder {
        ManifestBuilder {
            command: command.to_string(),
            config_snapshot: None,
            seed: None,
            started: chrono::Utc::now().to_rfc3339(),
            outputs: Vec::new(),
        }
    }

    pub fn config_snapshot(&mut self, text: &str) -> &mut Self {
        self.config_snapshot = Some(text.to_string());
        self
    }

    pub fn seed(&mut self, seed: u64) -> &mut Self {
        self.seed = Some(seed);
        self
    }

    pub fn output(&mut self, path: &Path) -> &mut Self {
        self.outputs.push(path.to_path_buf());
        self
    }

    /// Write `<name>.manifest.json` into `out_dir`.
    pub fn write(&self, out_dir: &Path, name: &str) -> std::io::Result<PathBuf> {
        let manifest = serde_json::json!({
            "command": self.command,
            "config": self.config_snapshot,
            "seed": self.seed,
            "tool_version": env!("CARGO_PKG_VERSION"),
            "started": self.started,
            "finished": chrono::Utc::now().to_rfc3339(),
            "outputs": self.outputs.iter().map(|p| p.display().to_string()).collect::<Vec<_>>(),
        });
        let path = out_dir.join(format!("{name}.manifest.json"));
        std::fs::write(&path, serde_json::to_string_pretty(&manifest)?)?;
        Ok(path)
    }
}
