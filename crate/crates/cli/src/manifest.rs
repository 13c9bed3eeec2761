//! Run manifests: one per invocation that writes output files. The
//! manifest records the command, the resolved configuration, and the
//! produced files. Metadata lives in comment lines, so the file is a
//! valid config — `--config manifest.txt` replays the run byte-for-byte
//! (timestamps aside, outputs depend only on the recorded keys).

use std::fmt::Display;
use std::path::{Path, PathBuf};

use stackpool::Result;

pub struct Manifest {
    command: String,
    started: chrono::DateTime<chrono::Utc>,
    pairs: Vec<(String, String)>,
    outputs: Vec<PathBuf>,
}

impl Manifest {
    pub fn new(command: impl Into<String>) -> Self {
        Self {
            command: command.into(),
            started: chrono::Utc::now(),
            pairs: Vec::new(),
            outputs: Vec::new(),
        }
    }

    /// Records one resolved configuration value.
    pub fn set(&mut self, key: &str, value: impl Display) {
        self.pairs.push((key.replace('_', "-"), value.to_string()));
    }

    pub fn output(&mut self, path: &Path) {
        self.outputs.push(path.to_path_buf());
    }

    pub fn write_to(&self, path: &Path) -> Result<()> {
        let mut text = String::new();
        text.push_str(&format!(
            "# stackpool {} run manifest\n",
            env!("CARGO_PKG_VERSION")
        ));
        text.push_str(&format!("# command: {}\n", self.command));
        text.push_str(&format!(
            "# started: {}\n",
            self.started.format("%Y-%m-%dT%H:%M:%SZ")
        ));
        text.push_str(&format!(
            "# finished: {}\n",
            chrono::Utc::now().format("%Y-%m-%dT%H:%M:%SZ")
        ));
        for out in &self.outputs {
            text.push_str(&format!("# output: {}\n", out.display()));
        }
        for (k, v) in &self.pairs {
            text.push_str(&format!("{k} = {v}\n"));
        }
        std::fs::write(path, text)?;
        Ok(())
    }
}
