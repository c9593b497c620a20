//! Test-only reference implementations, written independently of the
//! library internals.
#![allow(dead_code)]

use emsplat::{GaussianMixture, GaussianParams, GridSpec, Mode, RenderedImage};
use nalgebra::{Matrix2, Matrix3, Vector2, Vector3};
use rand::Rng;

pub fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        (1.0 + x.exp()).ln()
    }
}

pub fn inv_softplus(y: f64) -> f64 {
    (y.exp() - 1.0).ln()
}

/// Rotation matrix of the normalized quaternion `(w, x, y, z)`.
pub fn quat_to_matrix(q: [f64; 4]) -> Matrix3<f64> {
    let n = (q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]).sqrt();
    let (w, x, y, z) = (q[0] / n, q[1] / n, q[2] / n, q[3] / n);
    Matrix3::new(
        1.0 - 2.0 * (y * y + z * z),
        2.0 * (x * y - w * z),
        2.0 * (x * z + w * y),
        2.0 * (x * y + w * z),
        1.0 - 2.0 * (x * x + z * z),
        2.0 * (y * z - w * x),
        2.0 * (x * z - w * y),
        2.0 * (y * z + w * x),
        1.0 - 2.0 * (x * x + y * y),
    )
}

pub fn covariance(p: &GaussianParams, mode: Mode) -> Matrix3<f64> {
    match mode {
        Mode::Isotropic => Matrix3::identity() * softplus(p.raw_scale.x).powi(2),
        Mode::Anisotropic => {
            let r = quat_to_matrix(p.quaternion);
            let s = Matrix3::from_diagonal(&p.raw_scale.map(|v| softplus(v).powi(2)));
            r * s * r.transpose()
        }
    }
}

/// Double loop over every pixel and every Gaussian, no culling.
pub fn dense_render(m: &GaussianMixture, w: &Matrix3<f64>, grid: &GridSpec) -> RenderedImage {
    let d = grid.size;
    let step = 2.0 * grid.extent / d as f64;
    let coord = |i: usize| (i as f64 - (d / 2) as f64) * step;
    let mut px = vec![0.0; d * d];
    for p in m.params() {
        let mu = w * p.mean;
        let cov3 = w * covariance(p, m.mode()) * w.transpose();
        let cov = Matrix2::new(cov3[(0, 0)], cov3[(0, 1)], cov3[(1, 0)], cov3[(1, 1)]);
        let inv = cov.try_inverse().unwrap();
        let norm = softplus(p.raw_amplitude) / (2.0 * std::f64::consts::PI * cov.determinant().sqrt());
        for r in 0..d {
            for c in 0..d {
                let v = Vector2::new(coord(c) - mu.x, coord(r) - mu.y);
                px[r * d + c] += norm * (-0.5 * v.dot(&(inv * v))).exp();
            }
        }
    }
    RenderedImage::from_pixels(*grid, px).unwrap()
}

pub fn random_quaternion(rng: &mut impl Rng) -> [f64; 4] {
    loop {
        let q: [f64; 4] = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
        let n2: f64 = q.iter().map(|v| v * v).sum();
        if n2 > 0.01 && n2 <= 1.0 {
            return q;
        }
    }
}

/// Random anisotropic mixture with scales in `[smin, smax]` and means kept
/// `margin_sigmas · smax` inside the field of view for every rotation.
pub fn random_mixture(rng: &mut impl Rng, n: usize, smin: f64, smax: f64, extent: f64, margin_sigmas: f64) -> GaussianMixture {
    let reach = (extent - margin_sigmas * smax).max(0.0) / 3f64.sqrt();
    let params = (0..n)
        .map(|_| GaussianParams {
            mean: Vector3::from_fn(|_, _| rng.random_range(-reach..reach)),
            raw_scale: Vector3::from_fn(|_, _| inv_softplus(rng.random_range(smin..smax))),
            quaternion: random_quaternion(rng),
            raw_amplitude: inv_softplus(rng.random_range(0.05..1.0)),
        })
        .collect();
    GaussianMixture::new(Mode::Anisotropic, params).unwrap()
}
