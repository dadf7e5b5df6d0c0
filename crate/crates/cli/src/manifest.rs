use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

/// Record written next to every output file, enough to replay the run.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct RunManifest {
    pub command: String,
    pub arguments: BTreeMap<String, String>,
    /// Command line after the program name, as given.
    pub argv: Vec<String>,
    pub seed: u64,
    pub artifact_version: String,
    /// Seconds since the Unix epoch.
    pub timestamp: u64,
    pub output: PathBuf,
}

impl RunManifest {
    pub fn new(command: &str, arguments: BTreeMap<String, String>, argv: &[String], seed: u64, output: &Path) -> Self {
        RunManifest {
            command: command.to_string(),
            arguments,
            argv: argv.to_vec(),
            seed,
            artifact_version: env!("CARGO_PKG_VERSION").to_string(),
            timestamp: SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
            output: output.to_path_buf(),
        }
    }

    pub fn path_for(output: &Path) -> PathBuf {
        let mut s = output.as_os_str().to_owned();
        s.push(".manifest.json");
        PathBuf::from(s)
    }

    pub fn write_next_to(&self, output: &Path) -> std::io::Result<PathBuf> {
        let path = Self::path_for(output);
        let text = serde_json::to_string_pretty(self).map_err(std::io::Error::other)?;
        std::fs::write(&path, text + "\n")?;
        Ok(path)
    }

    pub fn read(path: &Path) -> std::io::Result<RunManifest> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))
    }
}
