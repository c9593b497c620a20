//! Timing of one training iteration (render, CTF, loss, backward) as a
//! function of mixture size and image size.

use std::fmt::Write as _;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::gmm::{init_random, Mode};
use crate::grid::{GridSpec, DEFAULT_EXTENT};
use crate::image::RenderedImage;
use crate::optics::CtfParams;
use crate::sim::sample_pose;
use crate::splat::Pose;
use crate::train::loss_and_gradient;

#[derive(Debug, Clone, PartialEq)]
pub struct BenchConfig {
    pub n_gaussians: Vec<usize>,
    pub sizes: Vec<usize>,
    pub repeats: usize,
    pub warmup: usize,
    pub seed: u64,
    /// Å per pixel; only enters the CTF.
    pub pixel_size: f64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            n_gaussians: vec![2048, 3072, 5120, 10000, 30000],
            sizes: vec![192, 256],
            repeats: 5,
            warmup: 1,
            seed: 0,
            pixel_size: 1.34,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BenchRow {
    pub n_gaussians: usize,
    pub size: usize,
    /// Median wall-clock seconds per forward+backward.
    pub median_seconds: f64,
    /// Images per second, `1 / median_seconds`.
    pub fps: f64,
    pub workers: usize,
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Times `repeats` iterations on a freshly initialized mixture after
/// `warmup` untimed ones.
pub fn bench_one(n: usize, size: usize, cfg: &BenchConfig) -> Result<BenchRow> {
    if cfg.repeats == 0 {
        return Err(Error::InvalidArgument("repeats must be at least 1".into()));
    }
    let grid = GridSpec::new(size, DEFAULT_EXTENT, cfg.pixel_size)?;
    let mixture = init_random(n, cfg.seed, &grid, Mode::Anisotropic)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (q, _) = sample_pose(&mut rng, 0.0, false);
    let pose = Pose::from_quaternion(&q, nalgebra::Vector2::zeros())?;
    let observed = RenderedImage::from_pixels(
        grid,
        (0..grid.num_pixels()).map(|_| StandardNormal.sample(&mut rng)).collect(),
    )?;
    let ctf = CtfParams::default();
    let mut times = Vec::with_capacity(cfg.repeats);
    for i in 0..cfg.warmup + cfg.repeats {
        let start = Instant::now();
        let (loss, grads) = loss_and_gradient(&mixture, &pose, &ctf, &observed)?;
        let elapsed = start.elapsed().as_secs_f64();
        std::hint::black_box((loss, grads));
        if i >= cfg.warmup {
            times.push(elapsed);
        }
    }
    let median_seconds = median(times);
    Ok(BenchRow {
        n_gaussians: n,
        size,
        median_seconds,
        fps: 1.0 / median_seconds,
        workers: rayon::current_num_threads(),
    })
}

pub fn run_bench(cfg: &BenchConfig) -> Result<Vec<BenchRow>> {
    let mut rows = Vec::new();
    for &size in &cfg.sizes {
        for &n in &cfg.n_gaussians {
            rows.push(bench_one(n, size, cfg)?);
        }
    }
    Ok(rows)
}

pub fn format_bench_table(rows: &[BenchRow]) -> String {
    let mut s = String::from("# n_gaussians size median_seconds fps workers\n");
    for r in rows {
        let _ = writeln!(s, "{} {} {:.6} {:.3} {}", r.n_gaussians, r.size, r.median_seconds, r.fps, r.workers);
    }
    s
}

/// `t(N_max) / t(N_min)` for each image size, with whether the times are
/// non-decreasing in N.
pub fn scaling_summary(rows: &[BenchRow]) -> Vec<(usize, f64, bool)> {
    let mut sizes: Vec<usize> = rows.iter().map(|r| r.size).collect();
    sizes.dedup();
    sizes
        .into_iter()
        .map(|size| {
            let mut sel: Vec<&BenchRow> = rows.iter().filter(|r| r.size == size).collect();
            sel.sort_by_key(|r| r.n_gaussians);
            let monotone = sel.windows(2).all(|w| w[1].median_seconds >= w[0].median_seconds);
            let ratio = sel.last().unwrap().median_seconds / sel[0].median_seconds;
            (size, ratio, monotone)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_bench_runs() {
        let cfg = BenchConfig {
            n_gaussians: vec![16, 64],
            sizes: vec![32],
            repeats: 3,
            warmup: 1,
            ..Default::default()
        };
        let rows = run_bench(&cfg).unwrap();
        assert_eq!(rows.len(), 2);
        assert!(rows.iter().all(|r| r.median_seconds > 0.0 && (r.fps * r.median_seconds - 1.0).abs() < 1e-12));
        let table = format_bench_table(&rows);
        assert_eq!(table.lines().count(), 3);
        let summary = scaling_summary(&rows);
        assert_eq!(summary.len(), 1);
        assert!(summary[0].1 > 0.0);
    }

    #[test]
    fn median_of_even_and_odd() {
        assert_eq!(median(vec![3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(vec![4.0, 1.0, 2.0, 3.0]), 2.5);
        assert!(bench_one(4, 16, &BenchConfig { repeats: 0, ..Default::default() }).is_err());
    }
}
