//! fan.json: the configuration, the design and the kept launches. Rays are
//! re-traced on load, so the file stays small and carries no stale geometry.

use std::path::Path;

use elastoray_core::xray::{trace_launches, FanCounts, Launch, RayFan};
use elastoray_core::Vec3;
use serde::{Deserialize, Serialize};

use crate::config::{Config, FanConfig, Loaded};
use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LaunchRecord {
    pub id: usize,
    pub seed_index: usize,
    pub dir_index: usize,
    pub x0: [f64; 3],
    pub xi0: [f64; 3],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CountsRecord {
    pub seeds_with_rays: usize,
    pub candidates: usize,
    pub kept: usize,
    pub cap_exit: usize,
    pub trapped: usize,
    pub failed: usize,
}

impl From<FanCounts> for CountsRecord {
    fn from(c: FanCounts) -> Self {
        CountsRecord {
            seeds_with_rays: c.seeds,
            candidates: c.candidates,
            kept: c.kept,
            cap_exit: c.cap_exit,
            trapped: c.trapped,
            failed: c.failed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FanFile {
    pub config: Config,
    pub config_sha256: String,
    pub seeds: usize,
    pub dirs: usize,
    pub rng_seed: u64,
    pub counts: CountsRecord,
    pub launches: Vec<LaunchRecord>,
}

impl FanFile {
    pub fn new(loaded: &Loaded, seeds: usize, dirs: usize, rng_seed: u64, fan: &RayFan) -> Self {
        FanFile {
            config: loaded.config.clone(),
            config_sha256: loaded.sha256.clone(),
            seeds,
            dirs,
            rng_seed,
            counts: fan.counts.into(),
            launches: fan
                .rays
                .iter()
                .map(|r| {
                    let l = r.launch;
                    LaunchRecord { id: l.id, seed_index: l.seed_index, dir_index: l.dir_index, x0: l.x0.0, xi0: l.xi0.0 }
                })
                .collect(),
        }
    }

    pub fn fan_config(&self) -> Result<FanConfig, CliError> {
        self.config.fan.ok_or_else(|| CliError::Config("fan file has no `fan` section".into()))
    }

    pub fn save(&self, path: &Path) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(self).map_err(|e| CliError::Format(e.to_string()))?;
        text.push('\n');
        crate::error::write(path, text.as_bytes())
    }
}

/// A fan file with its configuration rebuilt and its rays re-traced.
pub struct LoadedFan {
    pub file: FanFile,
    pub loaded: Loaded,
    pub fan: RayFan,
}

pub fn load(path: &Path) -> Result<LoadedFan, CliError> {
    let bytes = crate::error::read(path)?;
    let file: FanFile = serde_json::from_slice(&bytes)
        .map_err(|e| CliError::Format(format!("{}: line {}, column {}: {e}", path.display(), e.line(), e.column())))?;
    let loaded = file.config.clone().build(file.config_sha256.clone())?;
    let fc = file.fan_config()?;
    let launches: Vec<Launch> = file
        .launches
        .iter()
        .map(|l| Launch { id: l.id, seed_index: l.seed_index, dir_index: l.dir_index, x0: Vec3(l.x0), xi0: Vec3(l.xi0) })
        .collect();
    let fan = trace_launches(&loaded.model, &loaded.region, &launches, fc.h_ray, fc.max_length)
        .map_err(|e| CliError::stage("fan", e))?;
    if fan.rays.len() != launches.len() {
        return Err(CliError::Format(format!(
            "{}: {} of {} stored launches no longer exit through S",
            path.display(),
            launches.len() - fan.rays.len(),
            launches.len()
        )));
    }
    Ok(LoadedFan { file, loaded, fan })
}
