//! Reproducible scenario runner for `mvflow`: TOML configuration in,
//! CSV/JSON artifacts, a checksummed manifest and gnuplot data out.

pub mod config;
pub mod manifest;
pub mod plot;
pub mod scenarios;

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use mvflow::error::{Error, Result};

pub use config::{ScenarioConfig, ScenarioKind};
pub use manifest::{RunManifest, VERSION};
pub use plot::emit_plot_data;
pub use scenarios::RunOptions;

/// Environment variable capping the parametrix grid caches, in MiB.
pub const CACHE_ENV: &str = "MV_PARAMETRIX_CACHE_MB";

pub fn cache_mb_from_env() -> Result<Option<usize>> {
    match std::env::var(CACHE_ENV) {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .map(Some)
            .map_err(|_| Error::Usage(format!("{CACHE_ENV} must be a whole number of MiB, got `{v}`"))),
        Err(_) => Ok(None),
    }
}

/// Output directory: the explicit override, else the config's `out`.
pub fn output_dir(cfg: &ScenarioConfig, out: Option<&Path>) -> Result<PathBuf> {
    out.map(Path::to_path_buf)
        .or_else(|| cfg.out.clone())
        .ok_or_else(|| Error::Usage("no output directory: pass --out or set `out` in the config".into()))
}

/// Validates and runs a scenario, writing artifacts and `manifest.json`
/// into `out`.
pub fn run_scenario(cfg: &ScenarioConfig, out: &Path, opts: &RunOptions) -> Result<RunManifest> {
    let start = Instant::now();
    cfg.validate()?;
    fs::create_dir_all(out)?;
    let setup = start.elapsed().as_secs_f64();
    let t = Instant::now();
    let outcome = scenarios::run(cfg, out, opts)?;
    let compute = t.elapsed().as_secs_f64();
    let t = Instant::now();
    let files = outcome
        .files
        .iter()
        .map(|f| manifest::file_entry(out, f))
        .collect::<Result<Vec<_>>>()?;
    let mut verified = outcome.verified;
    if opts.verify_strict && !outcome.diagnostics.is_empty() {
        verified = Some(false);
    }
    let mut m = RunManifest {
        version: VERSION.to_string(),
        config: cfg.clone(),
        phases: vec![
            manifest::Phase { name: "setup".into(), seconds: setup },
            manifest::Phase { name: cfg.scenario.name().into(), seconds: compute },
        ],
        files,
        verified,
        diagnostics: outcome.diagnostics,
    };
    m.phases.push(manifest::Phase {
        name: "checksums".into(),
        seconds: t.elapsed().as_secs_f64(),
    });
    m.write(out)?;
    Ok(m)
}

/// Loads a config file and applies command-line overrides.
pub fn load_config(path: &Path, scenario: Option<ScenarioKind>, seed: Option<u64>) -> Result<ScenarioConfig> {
    let text = fs::read_to_string(path).map_err(|e| Error::Usage(format!("cannot read config {}: {e}", path.display())))?;
    let mut table: toml::Table = text.parse().map_err(|e| Error::Usage(format!("invalid config: {e}")))?;
    if let Some(kind) = scenario {
        match table.get("scenario").and_then(|v| v.as_str()) {
            Some(s) if s != kind.name() => {
                return Err(Error::Usage(format!(
                    "config declares scenario `{s}` but `{}` was requested",
                    kind.name()
                )))
            }
            Some(_) => {}
            None => {
                table.insert("scenario".into(), toml::Value::String(kind.name().into()));
            }
        }
    }
    let mut cfg: ScenarioConfig = table.try_into().map_err(|e: toml::de::Error| Error::Usage(format!("invalid config: {e}")))?;
    if seed.is_some() {
        cfg.seed = seed;
    }
    Ok(cfg)
}
