use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use itdloc::Result;

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Serialize)]
pub struct OutputFile {
    /// relative to the output directory
    pub path: String,
    pub sha256: String,
    pub bytes: usize,
}

#[derive(Debug, Serialize)]
pub struct Manifest {
    pub command: String,
    pub version: &'static str,
    pub config_sha256: String,
    pub seed: u64,
    pub outputs: Vec<OutputFile>,
}

/// Collects the files a command writes so they can be listed in its manifest.
pub struct Outputs {
    dir: PathBuf,
    files: Vec<OutputFile>,
}

impl Outputs {
    pub fn new(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<PathBuf> {
        let p = self.path(name);
        fs::write(&p, bytes)?;
        self.record(name, bytes);
        Ok(p)
    }

    /// Registers a file written by someone else.
    pub fn register(&mut self, name: &str) -> Result<()> {
        let bytes = fs::read(self.path(name))?;
        self.record(name, &bytes);
        Ok(())
    }

    fn record(&mut self, name: &str, bytes: &[u8]) {
        self.files.retain(|f| f.path != name);
        self.files.push(OutputFile {
            path: name.to_string(),
            sha256: sha256_hex(bytes),
            bytes: bytes.len(),
        });
    }

    /// Writes `<command>.manifest.json` and returns its path.
    pub fn finish(mut self, command: &str, canonical_config: &str, seed: u64) -> Result<PathBuf> {
        self.files.sort_by(|a, b| a.path.cmp(&b.path));
        let dir = self.dir.clone();
        let m = Manifest {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION"),
            config_sha256: sha256_hex(canonical_config.as_bytes()),
            seed,
            outputs: self.files,
        };
        let p = dir.join(format!("{command}.manifest.json"));
        let mut text = serde_json::to_string_pretty(&m).expect("manifest serializes");
        text.push('\n');
        fs::write(&p, text)?;
        Ok(p)
    }
}
