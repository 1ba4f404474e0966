//! Artifact emission: headered CSV with full-precision decimal values
//! plus a sibling JSON metadata file carrying the resolved config and
//! run diagnostics.  Identical configs produce identical CSV bytes.

use std::fs;
use std::path::PathBuf;

use serde_json::json;

use crate::config::ExperimentConfig;
use crate::CliError;

pub struct Artifacts {
    dir: PathBuf,
    command: String,
    files: Vec<String>,
}

impl Artifacts {
    pub fn new(config: &ExperimentConfig, command: &str) -> Result<Self, CliError> {
        let dir = PathBuf::from(&config.out);
        fs::create_dir_all(&dir)
            .map_err(|e| CliError::Config(format!("cannot create {}: {e}", dir.display())))?;
        Ok(Artifacts {
            dir,
            command: command.to_string(),
            files: Vec::new(),
        })
    }

    fn path(&self, suffix: &str) -> PathBuf {
        self.dir.join(format!("{}{suffix}", self.command))
    }

    /// Write one CSV table; `suffix` distinguishes secondary tables
    /// (empty for the main one).
    pub fn write_csv(
        &mut self,
        suffix: &str,
        header: &[&str],
        rows: &[Vec<String>],
    ) -> Result<PathBuf, CliError> {
        let path = self.path(&format!("{suffix}.csv"));
        let mut text = String::new();
        text.push_str(&header.join(","));
        text.push('\n');
        for row in rows {
            debug_assert_eq!(row.len(), header.len());
            text.push_str(&row.join(","));
            text.push('\n');
        }
        fs::write(&path, text)
            .map_err(|e| CliError::Config(format!("cannot write {}: {e}", path.display())))?;
        self.files
            .push(path.file_name().unwrap().to_string_lossy().into_owned());
        Ok(path)
    }

    /// Write the metadata sibling and report where everything went.
    pub fn finish(
        self,
        config: &ExperimentConfig,
        wall_seconds: f64,
        diagnostics: serde_json::Value,
    ) -> Result<(), CliError> {
        let meta = json!({
            "command": self.command,
            "version": env!("CARGO_PKG_VERSION"),
            "config": config,
            "wall_seconds": wall_seconds,
            "data_files": self.files,
            "diagnostics": diagnostics,
        });
        let path = self.path(".meta.json");
        fs::write(&path, serde_json::to_string_pretty(&meta).unwrap())
            .map_err(|e| CliError::Config(format!("cannot write {}: {e}", path.display())))?;
        eprintln!(
            "wrote {} artifact(s) to {}",
            self.files.len() + 1,
            self.dir.display()
        );
        Ok(())
    }
}
