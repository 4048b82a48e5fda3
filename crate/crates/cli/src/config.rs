//! Optional JSON defaults for command options. Flags always win.

use std::fs;
use std::path::Path;

use prnu_core::geometry::Interval;
use prnu_core::imaging::{Denoiser, ResidualConfig};
use prnu_core::optimizer::SwarmConfig;
use prnu_core::{Error, Result};
use serde::Deserialize;

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub denoiser: Option<String>,
    pub scale_range: Option<String>,
    pub theta_range: Option<String>,
    pub pce_threshold: Option<f64>,
    pub delta: Option<usize>,
    pub snapshots: Option<bool>,
    pub strategy: Option<String>,
    pub frames: Option<usize>,
    pub seed: Option<u64>,
    pub threshold: Option<f64>,
    pub particles: Option<usize>,
    pub iterations: Option<usize>,
    pub json: Option<bool>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = fs::read_to_string(path).map_err(|e| Error::Input(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| Error::Input(format!("{}: {e}", path.display())))
    }
}

/// Parses `lo:hi`.
pub fn parse_interval(text: &str) -> Result<Interval> {
    let bad = || Error::Parameter(format!("expected 'lo:hi', got '{text}'"));
    let (lo, hi) = text.split_once(':').ok_or_else(bad)?;
    let lo: f64 = lo.trim().parse().map_err(|_| bad())?;
    let hi: f64 = hi.trim().parse().map_err(|_| bad())?;
    if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
        return Err(bad());
    }
    Ok(Interval::new(lo, hi))
}

pub fn residual_config(name: &str) -> Result<ResidualConfig> {
    let denoiser = match name {
        "gaussian" => Denoiser::default(),
        "wiener" => Denoiser::wiener(),
        other => return Err(Error::Parameter(format!("unknown denoiser '{other}' (gaussian|wiener)"))),
    };
    Ok(ResidualConfig {
        denoiser,
        ..ResidualConfig::default()
    })
}

pub fn swarm(seed: u64, particles: Option<usize>, iterations: Option<usize>) -> Result<SwarmConfig> {
    let mut cfg = SwarmConfig::default().with_seed(seed);
    if let Some(p) = particles {
        cfg.particles = p;
    }
    if let Some(i) = iterations {
        cfg.iterations = i;
    }
    cfg.validate()?;
    Ok(cfg)
}
