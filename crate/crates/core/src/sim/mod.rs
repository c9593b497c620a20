//! Synthetic particle generator following the forward model
//! `I = shift_t(H ∗ P_W(V)) + ε`.

mod phantom;

pub use phantom::{make_phantom, PhantomKind};

use nalgebra::{UnitQuaternion, Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gmm::GaussianMixture;
use crate::grid::GridSpec;
use crate::image::RenderedImage;
use crate::io::meta::{MetaRow, Orientation};
use crate::optics::{phase_shift_translate, CtfParams};
use crate::splat::Pose;
use crate::train::{render, Dataset, ParticleRecord};

/// `10^(dB/10)`.
pub fn db_to_snr(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    /// Clean-signal variance over noise variance; `inf` disables noise.
    pub snr: f64,
    pub seed: u64,
}

impl NoiseModel {
    pub fn from_db(db: f64, seed: u64) -> Self {
        Self { snr: db_to_snr(db), seed }
    }

    pub fn disabled(seed: u64) -> Self {
        Self { snr: f64::INFINITY, seed }
    }

    /// Noise standard deviation for a measured clean-signal variance.
    pub fn noise_std(&self, signal_variance: f64) -> f64 {
        if self.snr.is_infinite() {
            0.0
        } else {
            (signal_variance / self.snr).sqrt()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum CtfDistribution {
    /// `defocus_u` uniform in `[min, max]` Å, `defocus_v = defocus_u`; other
    /// fields from `base`.
    DefocusRange {
        min: f64,
        max: f64,
        #[serde(default)]
        base: CtfParams,
    },
    /// Cycled in order; allows astigmatic parameters.
    List { params: Vec<CtfParams> },
}

impl CtfDistribution {
    fn validate(&self) -> Result<()> {
        match self {
            CtfDistribution::DefocusRange { min, max, base } => {
                if !(*min > 0.0 && min <= max && max.is_finite()) {
                    return Err(Error::InvalidArgument(format!("defocus range [{min}, {max}] is invalid")));
                }
                base.validate()
            }
            CtfDistribution::List { params } => {
                if params.is_empty() {
                    return Err(Error::InvalidArgument("CTF list is empty".into()));
                }
                params.iter().try_for_each(CtfParams::validate)
            }
        }
    }

    fn sample(&self, index: usize, rng: &mut impl Rng) -> CtfParams {
        match self {
            CtfDistribution::DefocusRange { min, max, base } => {
                let d = if min == max { *min } else { rng.random_range(*min..=*max) };
                CtfParams {
                    defocus_u: d,
                    defocus_v: d,
                    ..*base
                }
            }
            CtfDistribution::List { params } => params[index % params.len()],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimSpec {
    pub truth: GaussianMixture,
    pub num_particles: usize,
    pub grid: GridSpec,
    pub ctf: CtfDistribution,
    /// Translations are uniform in `±translation_range` pixels.
    pub translation_range: f64,
    pub round_translations: bool,
    pub noise: NoiseModel,
    /// Per-record streams use `seed + index`.
    pub seed: u64,
    /// Standard deviation (degrees) of the rotation error written to the
    /// metadata; images are always rendered at the exact pose.
    pub angular_jitter_deg: Option<f64>,
}

impl SimSpec {
    pub fn validate(&self) -> Result<()> {
        if self.num_particles < 2 {
            return Err(Error::InvalidArgument(format!(
                "num_particles must be at least 2, got {}",
                self.num_particles
            )));
        }
        if !(self.noise.snr > 0.0) {
            return Err(Error::InvalidArgument(format!("snr must be positive, got {}", self.noise.snr)));
        }
        if !(self.translation_range >= 0.0 && self.translation_range.is_finite()) {
            return Err(Error::InvalidArgument("translation_range must be finite and non-negative".into()));
        }
        if let Some(j) = self.angular_jitter_deg {
            if !(j >= 0.0 && j.is_finite()) {
                return Err(Error::InvalidArgument("angular_jitter_deg must be finite and non-negative".into()));
            }
        }
        self.ctf.validate()
    }
}

/// Uniform rotation (normalized 4D Gaussian) and a uniform translation in
/// `±translation_range` pixels. Returns the raw quaternion used.
pub fn sample_pose(rng: &mut impl Rng, translation_range: f64, round: bool) -> ([f64; 4], Vector2<f64>) {
    let q = loop {
        let q: [f64; 4] = std::array::from_fn(|_| StandardNormal.sample(rng));
        let n = q.iter().map(|v| v * v).sum::<f64>().sqrt();
        if n > 1e-6 {
            break q.map(|v| v / n);
        }
    };
    let mut t = if translation_range > 0.0 {
        Vector2::new(
            rng.random_range(-translation_range..=translation_range),
            rng.random_range(-translation_range..=translation_range),
        )
    } else {
        Vector2::zeros()
    };
    if round {
        t = t.map(f64::round);
    }
    (q, t)
}

fn jitter(q: [f64; 4], sigma_deg: f64, rng: &mut impl Rng) -> [f64; 4] {
    let axis: Vector3<f64> = Vector3::from_fn(|_, _| StandardNormal.sample(rng));
    let angle = sigma_deg.to_radians() * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng);
    let delta = UnitQuaternion::from_scaled_axis(axis.normalize() * angle);
    let base = UnitQuaternion::from_quaternion(nalgebra::Quaternion::new(q[0], q[1], q[2], q[3]));
    let out = base * delta;
    [out.w, out.i, out.j, out.k]
}

#[derive(Debug, Clone)]
pub struct SimOutput {
    /// Noisy images with the poses/CTFs stored in `meta` (possibly jittered).
    pub dataset: Dataset,
    pub meta: Vec<MetaRow>,
    /// Noise-free images, same order.
    pub clean: Vec<RenderedImage>,
    pub signal_variance: f64,
    pub noise_std: f64,
}

fn variance(images: &[RenderedImage]) -> f64 {
    let n = images.iter().map(|i| i.pixels.len()).sum::<usize>() as f64;
    let mean = images.iter().map(|i| i.sum()).sum::<f64>() / n;
    images
        .iter()
        .flat_map(|i| i.pixels.iter())
        .map(|v| (v - mean) * (v - mean))
        .sum::<f64>()
        / n
}

/// Renders every particle, then adds white noise whose variance is the
/// clean-signal variance over the whole dataset divided by the SNR.
pub fn simulate(spec: &SimSpec) -> Result<SimOutput> {
    spec.validate()?;
    let draws: Vec<(RenderedImage, MetaRow)> = (0..spec.num_particles)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed.wrapping_add(i as u64));
            let (q, t) = sample_pose(&mut rng, spec.translation_range, spec.round_translations);
            let ctf = spec.ctf.sample(i, &mut rng);
            let pose = Pose::from_quaternion(&q, Vector2::zeros())?;
            let mut img = render(&spec.truth, &pose, &ctf, &spec.grid)?;
            if t != Vector2::zeros() {
                img = phase_shift_translate(&img, t)?;
            }
            let recorded = match spec.angular_jitter_deg {
                Some(s) if s > 0.0 => jitter(q, s, &mut rng),
                _ => q,
            };
            Ok((
                img,
                MetaRow {
                    orientation: Orientation::Quaternion(recorded),
                    translation: t,
                    ctf,
                },
            ))
        })
        .collect::<Result<_>>()?;
    let (clean, meta): (Vec<_>, Vec<_>) = draws.into_iter().unzip();
    let signal_variance = variance(&clean);
    let noise_std = spec.noise.noise_std(signal_variance);
    let noisy: Vec<RenderedImage> = clean
        .par_iter()
        .enumerate()
        .map(|(i, img)| {
            if noise_std == 0.0 {
                return img.clone();
            }
            let normal = Normal::new(0.0, noise_std).expect("finite noise level");
            let mut rng = ChaCha8Rng::seed_from_u64(spec.noise.seed.wrapping_add(i as u64));
            RenderedImage {
                grid: img.grid,
                pixels: img.pixels.iter().map(|v| v + normal.sample(&mut rng)).collect(),
            }
        })
        .collect();
    let records = noisy
        .into_iter()
        .zip(&meta)
        .map(|(image, row)| {
            Ok(ParticleRecord {
                image,
                pose: row.pose()?,
                ctf: row.ctf,
                translation: row.translation,
            })
        })
        .collect::<Result<_>>()?;
    Ok(SimOutput {
        dataset: Dataset {
            grid: spec.grid,
            records,
        },
        meta,
        clean,
        signal_variance,
        noise_std,
    })
}
