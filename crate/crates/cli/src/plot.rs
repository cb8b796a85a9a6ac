use std::fs;
use std::path::{Path, PathBuf};

use mvflow::error::{Error, Result};
use mvflow::measures::io::write_columns;
use serde::{Deserialize, Serialize};

use crate::manifest::RunManifest;

pub const SERIES_FILE: &str = "series.json";

/// A table destined for a gnuplot data file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Series {
    pub name: String,
    pub comments: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Series {
    pub fn new(name: &str, comments: Vec<String>, rows: Vec<Vec<f64>>) -> Self {
        Self {
            name: name.to_string(),
            comments,
            rows,
        }
    }
}

/// Writes one `<name>.dat` file per series recorded by a run, with `#`
/// comment headers and whitespace-separated columns. Needs the manifest.
pub fn emit_plot_data(result_dir: &Path) -> Result<Vec<PathBuf>> {
    let manifest = RunManifest::read(result_dir)?;
    if !manifest.files.iter().any(|f| f.path == SERIES_FILE) {
        return Ok(Vec::new());
    }
    let text = fs::read_to_string(result_dir.join(SERIES_FILE))?;
    let series: Vec<Series> =
        serde_json::from_str(&text).map_err(|e| Error::Usage(format!("malformed {SERIES_FILE}: {e}")))?;
    let mut out = Vec::new();
    for s in &series {
        let path = result_dir.join(format!("{}.dat", s.name));
        write_columns(&path, &s.comments, &s.rows)?;
        out.push(path);
    }
    Ok(out)
}
