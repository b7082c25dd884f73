use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{io_err, CliError, CliResult};
use crate::io::{sha256_hex, write_json};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Artifact {
    /// Relative to the output directory.
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub config: RunConfig,
    pub config_sha256: String,
    pub seed: u64,
    /// Input files by flag name, as given on the command line.
    pub inputs: BTreeMap<String, String>,
    pub artifacts: Vec<Artifact>,
}

pub fn config_hash(cfg: &RunConfig) -> String {
    sha256_hex(&serde_json::to_vec(cfg).expect("config serializes"))
}

/// Collects the files a subcommand writes under its output directory.
pub struct Outputs {
    pub dir: PathBuf,
    files: Vec<PathBuf>,
    inputs: BTreeMap<String, String>,
}

impl Outputs {
    pub fn new(dir: PathBuf) -> CliResult<Self> {
        crate::io::create_dir(&dir)?;
        Ok(Self {
            dir,
            files: Vec::new(),
            inputs: BTreeMap::new(),
        })
    }

    /// Path for a new artifact, creating parent directories as needed.
    pub fn file(&mut self, rel: &str) -> CliResult<PathBuf> {
        let p = self.dir.join(rel);
        if let Some(parent) = p.parent() {
            crate::io::create_dir(parent)?;
        }
        self.files.push(PathBuf::from(rel));
        Ok(p)
    }

    /// Record every file of a directory written by someone else.
    pub fn dir_files(&mut self, rel: &str) -> CliResult<()> {
        let root = self.dir.join(rel);
        let mut names: Vec<String> = std::fs::read_dir(&root)
            .map_err(|e| io_err(&root, e))?
            .filter_map(|e| e.ok())
            .map(|e| e.file_name().to_string_lossy().into_owned())
            .collect();
        names.sort();
        for n in names {
            self.files.push(Path::new(rel).join(n));
        }
        Ok(())
    }

    pub fn input(&mut self, flag: &str, path: &Path) {
        self.inputs.insert(flag.to_string(), path.display().to_string());
    }

    pub fn finish(self, command: &str, cfg: &RunConfig) -> CliResult<Manifest> {
        let mut artifacts = Vec::new();
        for rel in &self.files {
            let p = self.dir.join(rel);
            let bytes = std::fs::read(&p).map_err(|e| io_err(&p, e))?;
            artifacts.push(Artifact {
                path: rel.to_string_lossy().replace('\\', "/"),
                sha256: sha256_hex(&bytes),
            });
        }
        let mut resolved = cfg.clone();
        resolved.output_dir = Some(self.dir.clone());
        let m = Manifest {
            command: command.to_string(),
            config_sha256: config_hash(&resolved),
            seed: resolved.seeds.base,
            config: resolved,
            inputs: self.inputs,
            artifacts,
        };
        write_json(&self.dir.join("manifest.json"), &m)?;
        Ok(m)
    }
}

pub fn read_manifest(dir: &Path) -> CliResult<Manifest> {
    let p = dir.join("manifest.json");
    let text = crate::config::read_text(&p)?;
    serde_json::from_str(&text).map_err(|e| CliError::Validation(format!("{}: {e}", p.display())))
}
