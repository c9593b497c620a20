//! Reconstruction by gradient descent: render + CTF, mean-squared error
//! against the observed image, and Adam on every raw parameter with a single
//! learning rate that decays by `decay_gamma` at each epoch boundary.

mod adam;

pub use adam::Adam;

use nalgebra::Vector2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, StepContext};
use crate::gmm::{init_random, GaussianMixture, Mode};
use crate::grid::GridSpec;
use crate::image::RenderedImage;
use crate::optics::{apply_filter, ctf_evaluate, phase_shift_translate, CtfParams};
use crate::splat::{rasterize, rasterize_backward, Pose};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub n_gaussians: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Multiplies the learning rate at every epoch boundary.
    pub decay_gamma: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
    pub seed: u64,
    pub mode: Mode,
    /// Abort when a loss exceeds this multiple of the first epoch's median loss.
    pub divergence_factor: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            n_gaussians: 10_000,
            epochs: 5,
            batch_size: 1,
            learning_rate: 1e-3,
            decay_gamma: 0.1,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_epsilon: 1e-8,
            seed: 0,
            mode: Mode::Anisotropic,
            divergence_factor: 1e3,
        }
    }
}

impl TrainConfig {
    /// `lr₀ · γ^epoch`.
    pub fn learning_rate_at(&self, epoch: usize) -> f64 {
        self.learning_rate * self.decay_gamma.powi(epoch as i32)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_gaussians == 0 {
            return Err(Error::InvalidCount(0));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::InvalidArgument("epochs and batch_size must be positive".into()));
        }
        if !(self.learning_rate > 0.0 && self.decay_gamma > 0.0) {
            return Err(Error::InvalidArgument("learning_rate and decay_gamma must be positive".into()));
        }
        Ok(())
    }
}

/// One observed particle image with its known pose and optics.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleRecord {
    pub image: RenderedImage,
    pub pose: Pose,
    pub ctf: CtfParams,
    /// In-plane shift of the particle in the observed image, in pixels.
    pub translation: Vector2<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub grid: GridSpec,
    pub records: Vec<ParticleRecord>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Half {
    Even,
    Odd,
}

impl Dataset {
    /// Records with even (or odd) index, in order.
    pub fn half(&self, half: Half) -> Dataset {
        let offset = match half {
            Half::Even => 0,
            Half::Odd => 1,
        };
        Dataset {
            grid: self.grid,
            records: self.records.iter().skip(offset).step_by(2).cloned().collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

/// Mean over all pixels of the squared difference.
pub fn loss_mse(rendered: &RenderedImage, observed: &RenderedImage) -> Result<f64> {
    rendered.ensure_same_shape(observed)?;
    let n = rendered.pixels.len() as f64;
    Ok(rendered
        .pixels
        .iter()
        .zip(&observed.pixels)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / n)
}

/// Forward model without noise: projection followed by the CTF.
pub fn render(mixture: &GaussianMixture, pose: &Pose, ctf: &CtfParams, grid: &GridSpec) -> Result<RenderedImage> {
    apply_filter(&rasterize(mixture, pose, grid)?, &ctf_evaluate(ctf, grid)?)
}

/// Loss and its gradient with respect to the flat raw parameters.
///
/// `observed` must already be centered (translation removed).
pub fn loss_and_gradient(
    mixture: &GaussianMixture,
    pose: &Pose,
    ctf: &CtfParams,
    observed: &RenderedImage,
) -> Result<(f64, Vec<f64>)> {
    let grid = observed.grid;
    let filter = ctf_evaluate(ctf, &grid)?;
    let predicted = apply_filter(&rasterize(mixture, pose, &grid)?, &filter)?;
    let loss = loss_mse(&predicted, observed)?;
    let scale = 2.0 / grid.num_pixels() as f64;
    let residual = RenderedImage {
        grid,
        pixels: predicted
            .pixels
            .iter()
            .zip(&observed.pixels)
            .map(|(p, o)| scale * (p - o))
            .collect(),
    };
    // the CTF filter is real and even, hence self-adjoint
    let upstream = apply_filter(&residual, &filter)?;
    let grads = rasterize_backward(mixture, pose, &grid, &upstream)?;
    Ok((loss, grads.into_iter().flatten().collect()))
}

pub fn new_optimizer(mixture: &GaussianMixture, config: &TrainConfig) -> Adam {
    Adam::new(mixture.param_count(), config.adam_beta1, config.adam_beta2, config.adam_epsilon)
}

fn centered_observation(record: &ParticleRecord) -> Result<RenderedImage> {
    if record.translation == Vector2::zeros() {
        Ok(record.image.clone())
    } else {
        phase_shift_translate(&record.image, -record.translation)
    }
}

fn apply_update(mixture: &mut GaussianMixture, adam: &mut Adam, grads: &[f64], lr: f64) -> Result<()> {
    let mut flat = mixture.to_flat();
    adam.step(&mut flat, grads, lr);
    mixture.set_flat(&flat)
}

/// One Adam step on a single record. Returns the loss before the update.
pub fn train_step(mixture: &mut GaussianMixture, record: &ParticleRecord, adam: &mut Adam, lr: f64) -> Result<f64> {
    let observed = centered_observation(record)?;
    let (loss, grads) = loss_and_gradient(mixture, &record.pose, &record.ctf, &observed)?;
    if !loss.is_finite() {
        return Err(Error::Divergence { record: 0, loss, context: None });
    }
    apply_update(mixture, adam, &grads, lr)?;
    Ok(loss)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceEntry {
    pub epoch: usize,
    pub step: usize,
    pub loss: f64,
    pub lr: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub mixture: GaussianMixture,
    /// State at the end of every epoch, in order.
    pub snapshots: Vec<GaussianMixture>,
    pub trace: Vec<TraceEntry>,
}

/// Trains a randomly initialized mixture on `dataset`.
pub fn train(dataset: &Dataset, config: &TrainConfig) -> Result<TrainOutput> {
    config.validate()?;
    let init = init_random(config.n_gaussians, config.seed, &dataset.grid, config.mode)?;
    train_from(init, dataset, config)
}

/// Trains starting from `mixture`. Records are shuffled every epoch from a
/// stream seeded by `config.seed`.
pub fn train_from(mut mixture: GaussianMixture, dataset: &Dataset, config: &TrainConfig) -> Result<TrainOutput> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(Error::InvalidArgument("cannot train on an empty dataset".into()));
    }
    if mixture.mode() != config.mode {
        return Err(Error::InvalidArgument("mixture mode does not match the training config".into()));
    }
    // translations are removed once, when the data is loaded
    let observed: Vec<RenderedImage> = dataset
        .records
        .iter()
        .map(|r| {
            dataset.grid.ensure_same(&r.image.grid)?;
            centered_observation(r)
        })
        .collect::<Result<_>>()?;

    let mut adam = new_optimizer(&mixture, config);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(1);
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut trace = Vec::new();
    let mut snapshots = Vec::with_capacity(config.epochs);
    let mut first_epoch_losses = Vec::new();
    let mut ceiling = f64::INFINITY;

    for epoch in 0..config.epochs {
        let lr = config.learning_rate_at(epoch);
        order.shuffle(&mut rng);
        for (step, batch) in order.chunks(config.batch_size).enumerate() {
            let mut loss = 0.0;
            let mut grads = vec![0.0; mixture.param_count()];
            for &idx in batch {
                let r = &dataset.records[idx];
                let context = Some(StepContext { epoch, step });
                let (l, g) = match loss_and_gradient(&mixture, &r.pose, &r.ctf, &observed[idx]) {
                    // updates blew the parameters past what a rotation or splat can represent
                    Err(Error::DegenerateRotation | Error::DegenerateSplat) if !trace.is_empty() => {
                        return Err(Error::Divergence { record: idx, loss: f64::NAN, context });
                    }
                    other => other?,
                };
                if !l.is_finite() || l > ceiling {
                    return Err(Error::Divergence {
                        record: idx,
                        loss: l,
                        context,
                    });
                }
                loss += l;
                grads.iter_mut().zip(g).for_each(|(a, b)| *a += b);
            }
            let inv = 1.0 / batch.len() as f64;
            loss *= inv;
            grads.iter_mut().for_each(|g| *g *= inv);
            apply_update(&mut mixture, &mut adam, &grads, lr)?;
            if epoch == 0 {
                first_epoch_losses.push(loss);
            }
            trace.push(TraceEntry { epoch, step, loss, lr });
        }
        if epoch == 0 {
            ceiling = config.divergence_factor * median(&mut first_epoch_losses);
        }
        snapshots.push(mixture.clone());
    }
    Ok(TrainOutput {
        mixture,
        snapshots,
        trace,
    })
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Chooses the mode-appropriate config variant. Convenience for callers that
/// flip only the Gaussian shape model.
pub fn with_mode(config: &TrainConfig, mode: Mode) -> TrainConfig {
    TrainConfig { mode, ..config.clone() }
}
