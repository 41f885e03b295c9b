use std::collections::BTreeMap;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::RunConfig;
use crate::error::{Error, Result};
use crate::records::write_text;

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// What was run, on which inputs, and how it ended.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub tool_version: String,
    pub seed: u64,
    pub config: RunConfig,
    /// Extra command-line arguments, by name.
    pub args: BTreeMap<String, String>,
    /// SHA-256 of every input file, keyed by path.
    pub input_digests: BTreeMap<String, String>,
    pub outputs: Vec<PathBuf>,
    pub duration_secs: f64,
    pub error: Option<String>,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let mut file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut hasher = Sha256::new();
    let mut buf = [0u8; 64 * 1024];
    loop {
        let n = file.read(&mut buf).map_err(|e| Error::io(path, e))?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hex::encode(hasher.finalize()))
}

/// Collects manifest fields while a command runs.
pub struct ManifestRecorder {
    manifest: RunManifest,
    started: Instant,
}

impl ManifestRecorder {
    pub fn begin(command: &str, config: &RunConfig) -> Self {
        ManifestRecorder {
            manifest: RunManifest {
                command: command.to_string(),
                tool_version: TOOL_VERSION.to_string(),
                seed: config.seed,
                config: config.clone(),
                args: BTreeMap::new(),
                input_digests: BTreeMap::new(),
                outputs: Vec::new(),
                duration_secs: 0.0,
                error: None,
            },
            started: Instant::now(),
        }
    }

    pub fn arg(&mut self, name: &str, value: impl ToString) {
        self.manifest.args.insert(name.to_string(), value.to_string());
    }

    /// Hashes the given inputs. The first missing file is returned as an
    /// error tagged with `stage`.
    pub fn digest_inputs<'a, I>(&mut self, inputs: I) -> Result<()>
    where
        I: IntoIterator<Item = (&'static str, &'a Path)>,
    {
        for (stage, path) in inputs {
            let digest = sha256_file(path).map_err(|e| e.in_stage(stage))?;
            self.manifest
                .input_digests
                .insert(path.display().to_string(), digest);
        }
        Ok(())
    }

    /// Finalises the manifest with the outcome and writes it to `path`.
    pub fn finish<T>(
        mut self,
        outcome: &Result<T>,
        outputs: Vec<PathBuf>,
        path: &Path,
    ) -> Result<RunManifest> {
        self.manifest.duration_secs = self.started.elapsed().as_secs_f64();
        self.manifest.outputs = outputs;
        if let Err(e) = outcome {
            self.manifest.error = Some(e.to_string());
        }
        self.manifest.write(path)?;
        Ok(self.manifest)
    }
}

impl RunManifest {
    pub fn write(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        write_text(path, &(text + "\n"))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::parse(path, e.line(), e.to_string()))
    }

    /// Inputs whose current digest differs from the recorded one.
    pub fn changed_inputs(&self) -> Vec<String> {
        self.input_digests
            .iter()
            .filter(|(path, digest)| {
                sha256_file(Path::new(path)).map_or(true, |d| &d != *digest)
            })
            .map(|(path, _)| path.clone())
            .collect()
    }
}
