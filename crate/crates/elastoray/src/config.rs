//! JSON run configuration: medium, lens region, grid and optional fan design.

use std::path::Path;

use elastoray_core::xray::{FanDesign, SeedChart};
use elastoray_core::{Grid3, LensRegion, MediumModel, Vec3};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub model: ModelConfig,
    pub region: RegionConfig,
    pub grid: GridConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fan: Option<FanConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub name: String,
    pub lambda: String,
    pub mu: String,
    pub rho: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionConfig {
    pub theta: String,
    pub xtilde: String,
    pub cap_level: f64,
    pub s_tolerance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub origin: [f64; 3],
    pub spacing: f64,
    pub dims: [usize; 3],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ChartConfig {
    Disk { center: [f64; 3], normal: [f64; 3], radius: f64 },
    Sphere { center: [f64; 3], radius: f64 },
}

/// Fan geometry; seed and direction counts come from the command line.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FanConfig {
    pub chart: ChartConfig,
    #[serde(default = "defaults::min_elevation")]
    pub min_elevation_deg: f64,
    #[serde(default = "defaults::max_elevation")]
    pub max_elevation_deg: f64,
    #[serde(default = "defaults::jitter")]
    pub jitter: f64,
    #[serde(default = "defaults::h_ray")]
    pub h_ray: f64,
    #[serde(default = "defaults::max_length")]
    pub max_length: f64,
}

mod defaults {
    pub fn min_elevation() -> f64 {
        5.0
    }
    pub fn max_elevation() -> f64 {
        85.0
    }
    pub fn jitter() -> f64 {
        1.0
    }
    pub fn h_ray() -> f64 {
        0.02
    }
    pub fn max_length() -> f64 {
        10.0
    }
}

/// A parsed configuration with its evaluable objects.
#[derive(Debug, Clone)]
pub struct Loaded {
    pub config: Config,
    pub model: MediumModel,
    pub region: LensRegion,
    pub grid: Grid3,
    /// SHA-256 of the source bytes, lowercase hex.
    pub sha256: String,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

impl Config {
    pub fn parse(text: &str) -> Result<Config, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Config(format!("line {}, column {}: {e}", e.line(), e.column())))
    }

    pub fn build(self, sha256: String) -> Result<Loaded, CliError> {
        let m = &self.model;
        let model = MediumModel::new(&m.name, &m.lambda, &m.mu, &m.rho).map_err(|e| CliError::Config(e.to_string()))?;
        let r = &self.region;
        let region =
            LensRegion::new(&r.theta, &r.xtilde, r.cap_level, r.s_tolerance).map_err(|e| CliError::Config(e.to_string()))?;
        let g = &self.grid;
        let grid = Grid3::new(g.origin, g.spacing, g.dims).map_err(|e| CliError::Config(format!("grid: {e}")))?;
        Ok(Loaded { config: self, model, region, grid, sha256 })
    }
}

pub fn load(path: &Path) -> Result<Loaded, CliError> {
    let bytes = crate::error::read(path)?;
    let text = std::str::from_utf8(&bytes).map_err(|_| CliError::Config(format!("{} is not UTF-8", path.display())))?;
    Config::parse(text)
        .and_then(|c| c.build(sha256_hex(&bytes)))
        .map_err(|e| match e {
            CliError::Config(msg) => CliError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
}

impl FanConfig {
    pub fn design(&self, seeds: usize, dirs: usize, rng_seed: u64) -> FanDesign {
        let (elevations, azimuths) = FanDesign::split_directions(dirs);
        let chart = match self.chart {
            ChartConfig::Disk { center, normal, radius } => {
                SeedChart::Disk { center: Vec3(center), normal: Vec3(normal), radius }
            }
            ChartConfig::Sphere { center, radius } => SeedChart::Sphere { center: Vec3(center), radius },
        };
        FanDesign {
            chart,
            seeds,
            elevations,
            azimuths,
            min_elevation_deg: self.min_elevation_deg,
            max_elevation_deg: self.max_elevation_deg,
            jitter: self.jitter,
            rng_seed,
            h_ray: self.h_ray,
            max_length: self.max_length,
        }
    }
}
