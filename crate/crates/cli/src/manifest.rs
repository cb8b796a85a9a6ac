use std::fs::{self, File};
use std::io::{BufReader, Read};
use std::path::Path;

use mvflow::error::{Error, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::ScenarioConfig;

pub const MANIFEST_FILE: &str = "manifest.json";

/// Version string of this build, `git describe` style.
pub const VERSION: &str = env!("MVFLOW_VERSION");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Phase {
    pub name: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    /// Relative to the output directory.
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: String,
    pub config: ScenarioConfig,
    pub phases: Vec<Phase>,
    pub files: Vec<FileEntry>,
    /// `None` when the scenario has no pass/fail criterion.
    pub verified: Option<bool>,
    #[serde(default)]
    pub diagnostics: Vec<String>,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let mut reader = BufReader::new(File::open(path)?);
    let mut hasher = Sha256::new();
    let mut buf = [0u8; 1 << 16];
    loop {
        let n = reader.read(&mut buf)?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(format!("{:x}", hasher.finalize()))
}

pub fn file_entry(dir: &Path, name: &str) -> Result<FileEntry> {
    let path = dir.join(name);
    Ok(FileEntry {
        path: name.to_string(),
        sha256: sha256_file(&path)?,
        bytes: fs::metadata(&path)?.len(),
    })
}

impl RunManifest {
    pub fn write(&self, dir: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::Usage(e.to_string()))?;
        fs::write(dir.join(MANIFEST_FILE), text + "\n")?;
        Ok(())
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path)
            .map_err(|_| Error::Usage(format!("no {MANIFEST_FILE} in {}", dir.display())))?;
        serde_json::from_str(&text).map_err(|e| Error::Usage(format!("malformed {}: {e}", path.display())))
    }

    /// Checks that every listed file exists with the recorded checksum.
    pub fn check_files(&self, dir: &Path) -> Result<()> {
        for f in &self.files {
            let path = dir.join(&f.path);
            if !path.is_file() {
                return Err(Error::Usage(format!("listed file {} is missing", f.path)));
            }
            let sum = sha256_file(&path)?;
            if sum != f.sha256 {
                return Err(Error::Usage(format!("checksum mismatch for {}", f.path)));
            }
        }
        Ok(())
    }

    /// `(path, checksum)` pairs, sorted by path.
    pub fn checksums(&self) -> Vec<(String, String)> {
        let mut v: Vec<(String, String)> = self.files.iter().map(|f| (f.path.clone(), f.sha256.clone())).collect();
        v.sort();
        v
    }
}
