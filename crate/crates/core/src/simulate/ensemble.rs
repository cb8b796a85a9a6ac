use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measures::EmpiricalMeasure;

/// Recorded particle states: one `N × d` row-major frame per stored time.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleEnsemble {
    dim: usize,
    particles: usize,
    times: Vec<f64>,
    frames: Vec<Vec<f64>>,
    seed: u64,
    streams: Vec<u64>,
}

#[derive(Serialize, Deserialize)]
struct Sidecar {
    /// `[frames, particles, dim]`.
    shape: [usize; 3],
    times: Vec<f64>,
    seed: u64,
    streams: Vec<u64>,
    encoding: String,
}

impl ParticleEnsemble {
    pub fn new(
        dim: usize,
        particles: usize,
        times: Vec<f64>,
        frames: Vec<Vec<f64>>,
        seed: u64,
        streams: Vec<u64>,
    ) -> Result<Self> {
        if times.len() != frames.len() || streams.len() != particles {
            return Err(Error::Usage("ensemble times, frames and streams are inconsistent".into()));
        }
        if frames.iter().any(|f| f.len() != particles * dim) {
            return Err(Error::Usage("ensemble frame has the wrong size".into()));
        }
        if frames.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Domain("ensemble contains non-finite entries".into()));
        }
        Ok(Self { dim, particles, times, frames, seed, streams })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn particles(&self) -> usize {
        self.particles
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn streams(&self) -> &[u64] {
        &self.streams
    }

    pub fn frame(&self, k: usize) -> &[f64] {
        &self.frames[k]
    }

    pub fn frames(&self) -> &[Vec<f64>] {
        &self.frames
    }

    /// Empirical law of frame `k`.
    pub fn law(&self, k: usize) -> Result<EmpiricalMeasure<f64>> {
        EmpiricalMeasure::uniform(self.dim, self.frames[k].clone())
    }

    pub fn terminal(&self) -> Result<EmpiricalMeasure<f64>> {
        self.law(self.frames.len() - 1)
    }

    /// Index of the stored frame at time `t`.
    pub fn frame_at(&self, t: f64) -> Option<usize> {
        self.times.iter().position(|s| (s - t).abs() <= 1e-12 * (1.0 + t.abs()))
    }

    /// Little-endian `f64` frames, row-major, with a JSON sidecar at
    /// `path.json` holding shape, times and seed.
    pub fn write_binary(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        for f in &self.frames {
            for v in f {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        w.flush()?;
        let side = Sidecar {
            shape: [self.frames.len(), self.particles, self.dim],
            times: self.times.clone(),
            seed: self.seed,
            streams: self.streams.clone(),
            encoding: "f64-le row-major".into(),
        };
        std::fs::write(sidecar_path(path), serde_json::to_string_pretty(&side)?)?;
        Ok(())
    }

    pub fn read_binary(path: &Path) -> Result<Self> {
        let side: Sidecar = serde_json::from_str(&std::fs::read_to_string(sidecar_path(path))?)?;
        let [nf, n, d] = side.shape;
        let mut r = BufReader::new(File::open(path)?);
        let mut frames = Vec::with_capacity(nf);
        let mut buf = [0u8; 8];
        for _ in 0..nf {
            let mut f = Vec::with_capacity(n * d);
            for _ in 0..n * d {
                r.read_exact(&mut buf)?;
                f.push(f64::from_le_bytes(buf));
            }
            frames.push(f);
        }
        Self::new(d, n, side.times, frames, side.seed, side.streams)
    }

    /// CSV of every `thin`-th particle: `time, particle, x_1, …, x_d`.
    pub fn write_csv(&self, path: &Path, thin: usize) -> Result<()> {
        let thin = thin.max(1);
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["time".to_string(), "particle".to_string()];
        header.extend((1..=self.dim).map(|k| format!("x{k}")));
        w.write_record(&header)?;
        for (t, f) in self.times.iter().zip(&self.frames) {
            for i in (0..self.particles).step_by(thin) {
                let mut rec = vec![format!("{t:e}"), i.to_string()];
                rec.extend(f[i * self.dim..(i + 1) * self.dim].iter().map(|v| format!("{v:e}")));
                w.write_record(&rec)?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

fn sidecar_path(path: &Path) -> std::path::PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    s.into()
}
