//! TOML run configuration with `[simulate]` and `[train]` tables. Every field
//! has a default, so an empty file is valid.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gmm::GaussianMixture;
use crate::grid::{GridSpec, DEFAULT_EXTENT};
use crate::io::checkpoint::read_checkpoint;
use crate::optics::CtfParams;
use crate::sim::{db_to_snr, make_phantom, CtfDistribution, NoiseModel, PhantomKind, SimSpec};
use crate::train::TrainConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimOutputs {
    pub stack: PathBuf,
    pub meta: PathBuf,
    pub truth: PathBuf,
}

impl Default for SimOutputs {
    fn default() -> Self {
        Self {
            stack: "particles.mrcs".into(),
            meta: "particles.meta".into(),
            truth: "truth.cgs".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub phantom: PhantomKind,
    pub phantom_gaussians: usize,
    pub phantom_seed: u64,
    /// Use this checkpoint as ground truth instead of a phantom.
    pub truth_checkpoint: Option<PathBuf>,
    pub num_particles: usize,
    pub size: usize,
    pub extent: f64,
    /// Å per pixel.
    pub pixel_size: f64,
    pub ctf: CtfDistribution,
    /// Pixels.
    pub translation_range: f64,
    pub round_translations: bool,
    /// At most one of `snr`, `snr_db`, `noiseless` may be given; the default is snr = 0.1.
    pub snr: Option<f64>,
    pub snr_db: Option<f64>,
    pub noiseless: bool,
    pub noise_seed: u64,
    pub seed: u64,
    pub angular_jitter_deg: Option<f64>,
    pub output: SimOutputs,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            phantom: PhantomKind::Helix,
            phantom_gaussians: 50,
            phantom_seed: 0,
            truth_checkpoint: None,
            num_particles: 5000,
            size: 64,
            extent: DEFAULT_EXTENT,
            pixel_size: 3.0,
            ctf: CtfDistribution::DefocusRange {
                min: 10_000.0,
                max: 25_000.0,
                base: CtfParams::default(),
            },
            translation_range: 0.0,
            round_translations: false,
            snr: None,
            snr_db: None,
            noiseless: false,
            noise_seed: 1,
            seed: 0,
            angular_jitter_deg: None,
            output: SimOutputs::default(),
        }
    }
}

impl SimConfig {
    pub fn grid(&self) -> Result<GridSpec> {
        GridSpec::new(self.size, self.extent, self.pixel_size).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn noise(&self) -> Result<NoiseModel> {
        let given = self.snr.is_some() as u8 + self.snr_db.is_some() as u8 + self.noiseless as u8;
        if given > 1 {
            return Err(Error::Config("give at most one of snr, snr_db and noiseless".into()));
        }
        let snr = match (self.snr, self.snr_db) {
            _ if self.noiseless => f64::INFINITY,
            (Some(s), _) => s,
            (_, Some(db)) => db_to_snr(db),
            _ => 0.1,
        };
        if !(snr > 0.0) {
            return Err(Error::Config(format!("snr must be positive, got {snr}")));
        }
        Ok(NoiseModel {
            snr,
            seed: self.noise_seed,
        })
    }

    pub fn truth(&self) -> Result<GaussianMixture> {
        match &self.truth_checkpoint {
            Some(p) => read_checkpoint(p),
            None => make_phantom(self.phantom, self.phantom_gaussians, self.phantom_seed, self.extent),
        }
    }

    pub fn to_spec(&self) -> Result<SimSpec> {
        let spec = SimSpec {
            truth: self.truth()?,
            num_particles: self.num_particles,
            grid: self.grid()?,
            ctf: self.ctf.clone(),
            translation_range: self.translation_range,
            round_translations: self.round_translations,
            noise: self.noise()?,
            seed: self.seed,
            angular_jitter_deg: self.angular_jitter_deg,
        };
        spec.validate().map_err(|e| Error::Config(e.to_string()))?;
        Ok(spec)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub simulate: SimConfig,
    pub train: TrainConfig,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Full TOML with defaults filled in.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is serializable")
    }
}
