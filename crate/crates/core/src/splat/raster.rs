//! Tile-based rasterization of projected Gaussians on the FFT-aligned grid.
//!
//! Contributions are summed (no alpha compositing, no depth order). Each
//! Gaussian is culled outside the ellipse of Mahalanobis radius
//! `cull_sigma`; the forward and backward passes share the exact same
//! footprint test.

use nalgebra::{Matrix2, Matrix3, Vector2, Vector3};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::gmm::{activate, activate_grad, quaternion_backward, unit_quaternion_matrix, quaternion_norm, GaussianMixture, Mode, PARAMS_PER_GAUSSIAN};
use crate::grid::GridSpec;
use crate::image::RenderedImage;
use crate::splat::{orthographic_project, posed, Pose};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RasterSettings {
    /// Tile edge in pixels.
    pub tile_size: usize,
    /// Culling radius in standard deviations (Mahalanobis distance).
    pub cull_sigma: f64,
}

impl Default for RasterSettings {
    fn default() -> Self {
        Self {
            tile_size: 16,
            cull_sigma: 6.0,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RasterStats {
    /// Splats whose smaller 2D eigenvalue was raised to the `(0.1 px)²` floor.
    pub clamped: usize,
    /// Splats with no pixel inside their footprint.
    pub off_screen: usize,
}

#[derive(Debug, Clone, Copy)]
enum Clamp {
    None,
    /// Both eigenvalues below the floor; covariance replaced by `floor · I`.
    Both,
    /// Only the minor eigenvalue raised: `Σ' = (λmax - f) u uᵀ + f I`.
    Minor {
        u: Vector2<f64>,
        v: Vector2<f64>,
        lmax: f64,
        lmin: f64,
        floor: f64,
    },
}

#[derive(Debug, Clone, Copy)]
struct Footprint {
    mean: Vector2<f64>,
    // inverse covariance entries
    ia: f64,
    ib: f64,
    ic: f64,
    /// `1 / (2π |Σ'|^½)`
    norm: f64,
    amplitude: f64,
    clamp: Clamp,
    cols: (usize, usize),
    rows: (usize, usize),
    visible: bool,
}

impl Footprint {
    /// Normalized Gaussian value and offset at `(x, y)`, or `None` when culled.
    #[inline(always)]
    fn eval(&self, x: f64, y: f64, cull_q: f64) -> Option<(f64, f64, f64)> {
        let dx = x - self.mean.x;
        let dy = y - self.mean.y;
        let q = self.ia * dx * dx + 2.0 * self.ib * dx * dy + self.ic * dy * dy;
        if q > cull_q {
            None
        } else {
            Some((self.norm * (-0.5 * q).exp(), dx, dy))
        }
    }
}

fn clamp_covariance(cov: &Matrix2<f64>, floor: f64) -> (Matrix2<f64>, Clamp) {
    let (a, b, c) = (cov[(0, 0)], cov[(0, 1)], cov[(1, 1)]);
    let mid = 0.5 * (a + c);
    let rad = (0.25 * (a - c) * (a - c) + b * b).sqrt();
    let lmax = mid + rad;
    let lmin = mid - rad;
    if lmin >= floor {
        return (*cov, Clamp::None);
    }
    if lmax <= floor {
        return (Matrix2::from_diagonal_element(floor), Clamp::Both);
    }
    // eigenvector of lmax
    let u = if b.abs() > 0.0 {
        Vector2::new(b, lmax - a).normalize()
    } else if a >= c {
        Vector2::new(1.0, 0.0)
    } else {
        Vector2::new(0.0, 1.0)
    };
    let v = Vector2::new(-u.y, u.x);
    let clamped = (lmax - floor) * u * u.transpose() + Matrix2::from_diagonal_element(floor);
    (clamped, Clamp::Minor { u, v, lmax, lmin, floor })
}

fn clamp_backward(grad: &Matrix2<f64>, clamp: &Clamp) -> Matrix2<f64> {
    match *clamp {
        Clamp::None => *grad,
        Clamp::Both => Matrix2::zeros(),
        Clamp::Minor { u, v, lmax, lmin, floor } => {
            let guu = u.dot(&(grad * u));
            let guv = u.dot(&(grad * v));
            let ratio = (lmax - floor) / (lmax - lmin);
            guu * u * u.transpose() + ratio * guv * (u * v.transpose() + v * u.transpose())
        }
    }
}

fn index_range(lo: f64, hi: f64, grid: &GridSpec) -> Option<(usize, usize)> {
    let a = grid.index_of(lo).ceil();
    let b = grid.index_of(hi).floor();
    let last = (grid.size - 1) as f64;
    if !(a.is_finite() && b.is_finite()) || b < 0.0 || a > last {
        return None;
    }
    let (a, b) = (a.max(0.0), b.min(last));
    (a <= b).then_some((a as usize, b as usize))
}

fn prepare(
    mixture: &GaussianMixture,
    pose: &Pose,
    grid: &GridSpec,
    settings: &RasterSettings,
) -> Result<(Vec<Footprint>, RasterStats)> {
    let floor = (0.1 * grid.pixel_width()).powi(2);
    let k = settings.cull_sigma;
    let mut stats = RasterStats::default();
    let mut out = Vec::with_capacity(mixture.count());
    for (i, p) in mixture.params().iter().enumerate() {
        let cg = posed(&p.mean, &mixture.covariance(i)?, p.amplitude(), pose);
        let splat = orthographic_project(&cg)?;
        let (cov, clamp) = clamp_covariance(&splat.cov, floor);
        if !matches!(clamp, Clamp::None) {
            stats.clamped += 1;
        }
        let det = cov[(0, 0)] * cov[(1, 1)] - cov[(0, 1)] * cov[(1, 0)];
        if !(det > 0.0) {
            return Err(Error::DegenerateSplat);
        }
        let hx = k * cov[(0, 0)].sqrt();
        let hy = k * cov[(1, 1)].sqrt();
        let cols = index_range(splat.mean.x - hx, splat.mean.x + hx, grid);
        let rows = index_range(splat.mean.y - hy, splat.mean.y + hy, grid);
        let visible = cols.is_some() && rows.is_some();
        if !visible {
            stats.off_screen += 1;
        }
        out.push(Footprint {
            mean: splat.mean,
            ia: cov[(1, 1)] / det,
            ib: -cov[(0, 1)] / det,
            ic: cov[(0, 0)] / det,
            norm: 1.0 / (2.0 * std::f64::consts::PI * det.sqrt()),
            amplitude: splat.amplitude,
            clamp,
            cols: cols.unwrap_or((1, 0)),
            rows: rows.unwrap_or((1, 0)),
            visible,
        });
    }
    Ok((out, stats))
}

fn coordinates(grid: &GridSpec) -> Vec<f64> {
    (0..grid.size).map(|i| grid.coord(i)).collect()
}

/// Renders `Σ A_i G̃_i` sampled at pixel centers with default settings.
pub fn rasterize(mixture: &GaussianMixture, pose: &Pose, grid: &GridSpec) -> Result<RenderedImage> {
    rasterize_with(mixture, pose, grid, &RasterSettings::default()).map(|(img, _)| img)
}

pub fn rasterize_with(
    mixture: &GaussianMixture,
    pose: &Pose,
    grid: &GridSpec,
    settings: &RasterSettings,
) -> Result<(RenderedImage, RasterStats)> {
    if settings.tile_size == 0 {
        return Err(Error::InvalidArgument("tile size must be positive".into()));
    }
    let (splats, stats) = prepare(mixture, pose, grid, settings)?;
    let d = grid.size;
    let ts = settings.tile_size;
    let tiles_per_side = d.div_ceil(ts);
    let cull_q = settings.cull_sigma * settings.cull_sigma;
    let coords = coordinates(grid);

    // bin splats into the tiles their bounding boxes touch, in index order
    let mut bins: Vec<Vec<u32>> = vec![Vec::new(); tiles_per_side * tiles_per_side];
    for (k, s) in splats.iter().enumerate().filter(|(_, s)| s.visible) {
        for ty in s.rows.0 / ts..=s.rows.1 / ts {
            for tx in s.cols.0 / ts..=s.cols.1 / ts {
                bins[ty * tiles_per_side + tx].push(k as u32);
            }
        }
    }

    let tiles: Vec<Vec<f64>> = bins
        .par_iter()
        .enumerate()
        .map(|(t, bin)| {
            let (ty, tx) = (t / tiles_per_side, t % tiles_per_side);
            let (r0, c0) = (ty * ts, tx * ts);
            let (r1, c1) = ((r0 + ts).min(d) - 1, (c0 + ts).min(d) - 1);
            let width = c1 - c0 + 1;
            let mut buf = vec![0.0; (r1 - r0 + 1) * width];
            for &k in bin {
                let s = &splats[k as usize];
                for r in s.rows.0.max(r0)..=s.rows.1.min(r1) {
                    let y = coords[r];
                    let row = &mut buf[(r - r0) * width..(r - r0 + 1) * width];
                    for c in s.cols.0.max(c0)..=s.cols.1.min(c1) {
                        if let Some((g, _, _)) = s.eval(coords[c], y, cull_q) {
                            row[c - c0] += s.amplitude * g;
                        }
                    }
                }
            }
            buf
        })
        .collect();

    let mut img = RenderedImage::zeros(*grid);
    for (t, buf) in tiles.iter().enumerate() {
        let (ty, tx) = (t / tiles_per_side, t % tiles_per_side);
        let (r0, c0) = (ty * ts, tx * ts);
        let width = (c0 + ts).min(d) - c0;
        for (lr, chunk) in buf.chunks_exact(width).enumerate() {
            let start = (r0 + lr) * d + c0;
            img.pixels[start..start + width].copy_from_slice(chunk);
        }
    }
    Ok((img, stats))
}

/// Gradient of a scalar loss with respect to every raw parameter, given
/// `∂L/∂pixel`.
///
/// Returns one 11-vector per Gaussian in checkpoint order. In isotropic mode
/// the shared scale's gradient is in slot 3, slots 4 and 5 and the quaternion
/// slots are zero.
pub fn rasterize_backward(
    mixture: &GaussianMixture,
    pose: &Pose,
    grid: &GridSpec,
    grad_pixels: &RenderedImage,
) -> Result<Vec<[f64; PARAMS_PER_GAUSSIAN]>> {
    rasterize_backward_with(mixture, pose, grid, grad_pixels, &RasterSettings::default())
}

pub(crate) fn rasterize_backward_with(
    mixture: &GaussianMixture,
    pose: &Pose,
    grid: &GridSpec,
    grad_pixels: &RenderedImage,
    settings: &RasterSettings,
) -> Result<Vec<[f64; PARAMS_PER_GAUSSIAN]>> {
    grid.ensure_same(&grad_pixels.grid)?;
    let (splats, _) = prepare(mixture, pose, grid, settings)?;
    let cull_q = settings.cull_sigma * settings.cull_sigma;
    let coords = coordinates(grid);
    let d = grid.size;
    let w = pose.rotation();

    Ok(splats
        .par_iter()
        .zip(mixture.params().par_iter())
        .map(|(s, p)| {
            if !s.visible {
                return [0.0; PARAMS_PER_GAUSSIAN];
            }
            // Σ w·g, Σ w·g·d, Σ w·g·d dᵀ over the footprint
            let (mut sg, mut sx, mut sy, mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
            for r in s.rows.0..=s.rows.1 {
                let y = coords[r];
                let grow = &grad_pixels.pixels[r * d..(r + 1) * d];
                for c in s.cols.0..=s.cols.1 {
                    let gp = grow[c];
                    if gp == 0.0 {
                        continue;
                    }
                    if let Some((g, dx, dy)) = s.eval(coords[c], y, cull_q) {
                        let wg = gp * g;
                        sg += wg;
                        sx += wg * dx;
                        sy += wg * dy;
                        sxx += wg * dx * dx;
                        sxy += wg * dx * dy;
                        syy += wg * dy * dy;
                    }
                }
            }
            let inv = Matrix2::new(s.ia, s.ib, s.ib, s.ic);
            let sdd = Matrix2::new(sxx, sxy, sxy, syy);
            let a = s.amplitude;
            let g_mean2 = a * inv * Vector2::new(sx, sy);
            let g_cov2 = clamp_backward(&(0.5 * a * (inv * sdd * inv - sg * inv)), &s.clamp);
            chain_to_raw(p, mixture.mode(), w, sg, &g_mean2, &g_cov2)
        })
        .collect())
}

fn chain_to_raw(
    p: &crate::gmm::GaussianParams,
    mode: Mode,
    w: &Matrix3<f64>,
    g_amplitude: f64,
    g_mean2: &Vector2<f64>,
    g_cov2: &Matrix2<f64>,
) -> [f64; PARAMS_PER_GAUSSIAN] {
    let mut g_cov_cam = Matrix3::zeros();
    g_cov_cam.fixed_view_mut::<2, 2>(0, 0).copy_from(g_cov2);
    let g_cov = w.transpose() * g_cov_cam * w;
    let g_mean = w.transpose() * Vector3::new(g_mean2.x, g_mean2.y, 0.0);

    let mut out = [0.0; PARAMS_PER_GAUSSIAN];
    out[0..3].copy_from_slice(g_mean.as_slice());
    match mode {
        Mode::Anisotropic => {
            let q = &p.quaternion;
            let n = quaternion_norm(q);
            let r = unit_quaternion_matrix(&[q[0] / n, q[1] / n, q[2] / n, q[3] / n]);
            let s = p.scales();
            let s2 = s.component_mul(&s);
            let m = r.transpose() * g_cov * r;
            for i in 0..3 {
                out[3 + i] = 2.0 * s[i] * m[(i, i)] * activate_grad(p.raw_scale[i]);
            }
            let g_r = 2.0 * g_cov * r * Matrix3::from_diagonal(&s2);
            out[6..10].copy_from_slice(&quaternion_backward(q, &g_r));
        }
        Mode::Isotropic => {
            let s = activate(p.raw_scale.x);
            out[3] = 2.0 * s * g_cov.trace() * activate_grad(p.raw_scale.x);
        }
    }
    out[10] = g_amplitude * activate_grad(p.raw_amplitude);
    out
}
