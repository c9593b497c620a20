//! Gaussian mixture volume representation.
//!
//! Each Gaussian is stored as 11 raw (pre-activation) scalars: a mean, three
//! raw scales and an amplitude that pass through softplus, and a quaternion
//! that is normalized before every covariance build. The density is
//!
//! ```text
//! V(r) = Σ A_i · N(r | μ_i, Σ_i),   Σ_i = R(q_i) diag(s_i)² R(q_i)ᵀ
//! ```
//!
//! with unit-mass normalized Gaussians, so `Σ A_i` is the total mass.

use nalgebra::{Matrix3, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::GridSpec;

/// Number of raw scalars per Gaussian.
pub const PARAMS_PER_GAUSSIAN: usize = 11;

/// Overflow-safe softplus, `ln(1 + e^x)`.
#[inline]
pub fn activate(raw: f64) -> f64 {
    raw.max(0.0) + (-raw.abs()).exp().ln_1p()
}

/// Inverse of [`activate`]; `y` must be positive.
#[inline]
pub fn inverse_activate(y: f64) -> f64 {
    // ln(e^y - 1) = y + ln(1 - e^-y)
    y + (-(-y).exp_m1()).ln()
}

/// Derivative of softplus (the logistic function).
#[inline]
pub fn activate_grad(raw: f64) -> f64 {
    if raw >= 0.0 {
        1.0 / (1.0 + (-raw).exp())
    } else {
        let e = raw.exp();
        e / (1.0 + e)
    }
}

/// Rotation matrix of a scalar-first quaternion `(w, x, y, z)`.
///
/// The quaternion is normalized first; a zero-norm quaternion is an error.
pub fn rotation_from_quaternion(q: &[f64; 4]) -> Result<Matrix3<f64>> {
    let n = quaternion_norm(q);
    if !(n > 0.0) || !n.is_finite() {
        return Err(Error::DegenerateRotation);
    }
    Ok(unit_quaternion_matrix(&[q[0] / n, q[1] / n, q[2] / n, q[3] / n]))
}

#[inline]
pub(crate) fn quaternion_norm(q: &[f64; 4]) -> f64 {
    (q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]).sqrt()
}

#[inline]
pub(crate) fn unit_quaternion_matrix(q: &[f64; 4]) -> Matrix3<f64> {
    let [w, x, y, z] = *q;
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

/// Pulls a gradient on the rotation matrix back to the raw (unnormalized) quaternion.
pub(crate) fn quaternion_backward(q: &[f64; 4], grad_r: &Matrix3<f64>) -> [f64; 4] {
    let n = quaternion_norm(q);
    let [w, x, y, z] = [q[0] / n, q[1] / n, q[2] / n, q[3] / n];
    let g = |i: usize, j: usize| grad_r[(i, j)];

    let gw = 2.0 * (-z * g(0, 1) + y * g(0, 2) + z * g(1, 0) - x * g(1, 2) - y * g(2, 0) + x * g(2, 1));
    let gx = 2.0
        * (y * g(0, 1) + z * g(0, 2) + y * g(1, 0) - 2.0 * x * g(1, 1) - w * g(1, 2) + z * g(2, 0) + w * g(2, 1)
            - 2.0 * x * g(2, 2));
    let gy = 2.0
        * (-2.0 * y * g(0, 0) + x * g(0, 1) + w * g(0, 2) + x * g(1, 0) + z * g(1, 2) - w * g(2, 0) + z * g(2, 1)
            - 2.0 * y * g(2, 2));
    let gz = 2.0
        * (-2.0 * z * g(0, 0) - w * g(0, 1) + x * g(0, 2) + w * g(1, 0) - 2.0 * z * g(1, 1) + y * g(1, 2)
            + x * g(2, 0)
            + y * g(2, 1));

    // Project out the radial component and undo the 1/|q| scaling.
    let gu = [gw, gx, gy, gz];
    let u = [w, x, y, z];
    let radial: f64 = gu.iter().zip(u.iter()).map(|(a, b)| a * b).sum();
    [
        (gu[0] - u[0] * radial) / n,
        (gu[1] - u[1] * radial) / n,
        (gu[2] - u[2] * radial) / n,
        (gu[3] - u[3] * radial) / n,
    ]
}

/// `Σ = R diag(softplus(raw_scale))² Rᵀ`.
pub fn build_covariance(q: &[f64; 4], raw_scale: &Vector3<f64>) -> Result<Matrix3<f64>> {
    let r = rotation_from_quaternion(q)?;
    let s = raw_scale.map(activate);
    let d = Matrix3::from_diagonal(&s.component_mul(&s));
    Ok(r * d * r.transpose())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[default]
    Anisotropic,
    Isotropic,
}

impl Mode {
    pub fn as_byte(self) -> u8 {
        match self {
            Mode::Anisotropic => 0,
            Mode::Isotropic => 1,
        }
    }

    pub fn from_byte(b: u8) -> Option<Self> {
        match b {
            0 => Some(Mode::Anisotropic),
            1 => Some(Mode::Isotropic),
            _ => None,
        }
    }
}

/// Raw parameters of one Gaussian.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianParams {
    pub mean: Vector3<f64>,
    pub raw_scale: Vector3<f64>,
    /// Scalar-first `(w, x, y, z)`, stored unnormalized.
    pub quaternion: [f64; 4],
    pub raw_amplitude: f64,
}

impl GaussianParams {
    pub fn scales(&self) -> Vector3<f64> {
        self.raw_scale.map(activate)
    }

    pub fn amplitude(&self) -> f64 {
        activate(self.raw_amplitude)
    }

    pub fn covariance(&self) -> Result<Matrix3<f64>> {
        build_covariance(&self.quaternion, &self.raw_scale)
    }

    /// Serialization order: μx μy μz raw_sx raw_sy raw_sz qw qx qy qz raw_A.
    pub fn to_array(&self) -> [f64; PARAMS_PER_GAUSSIAN] {
        let (m, s, q) = (&self.mean, &self.raw_scale, &self.quaternion);
        [m.x, m.y, m.z, s.x, s.y, s.z, q[0], q[1], q[2], q[3], self.raw_amplitude]
    }

    pub fn from_array(a: &[f64; PARAMS_PER_GAUSSIAN]) -> Self {
        Self {
            mean: Vector3::new(a[0], a[1], a[2]),
            raw_scale: Vector3::new(a[3], a[4], a[5]),
            quaternion: [a[6], a[7], a[8], a[9]],
            raw_amplitude: a[10],
        }
    }
}

/// A fixed-size set of Gaussians. The count never changes after construction.
///
/// In isotropic mode the first raw scale is the single shared scale; the other
/// two slots always mirror it and the quaternion is ignored.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMixture {
    mode: Mode,
    params: Vec<GaussianParams>,
}

impl GaussianMixture {
    pub fn new(mode: Mode, mut params: Vec<GaussianParams>) -> Result<Self> {
        if params.is_empty() {
            return Err(Error::InvalidCount(0));
        }
        if mode == Mode::Isotropic {
            for p in &mut params {
                tie_scales(p);
            }
        }
        Ok(Self { mode, params })
    }

    /// Builds a mixture from `11 * N` raw scalars.
    pub fn from_flat(mode: Mode, flat: &[f64]) -> Result<Self> {
        if flat.is_empty() || flat.len() % PARAMS_PER_GAUSSIAN != 0 {
            return Err(Error::shape(
                format!("a positive multiple of {PARAMS_PER_GAUSSIAN} values"),
                flat.len(),
            ));
        }
        let params = flat
            .chunks_exact(PARAMS_PER_GAUSSIAN)
            .map(|c| GaussianParams::from_array(c.try_into().expect("chunk of 11")))
            .collect();
        Self::new(mode, params)
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.params.iter().flat_map(|p| p.to_array()).collect()
    }

    /// Overwrites every raw parameter from a flat slice of the same length.
    pub fn set_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.param_count() {
            return Err(Error::shape(self.param_count(), flat.len()));
        }
        for (p, c) in self.params.iter_mut().zip(flat.chunks_exact(PARAMS_PER_GAUSSIAN)) {
            *p = GaussianParams::from_array(c.try_into().expect("chunk of 11"));
            if self.mode == Mode::Isotropic {
                tie_scales(p);
            }
        }
        Ok(())
    }

    pub fn count(&self) -> usize {
        self.params.len()
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn params(&self) -> &[GaussianParams] {
        &self.params
    }

    /// Total trainable scalars, `11 * N`.
    pub fn param_count(&self) -> usize {
        PARAMS_PER_GAUSSIAN * self.count()
    }

    pub fn total_amplitude(&self) -> f64 {
        self.params.iter().map(GaussianParams::amplitude).sum()
    }

    /// Covariance of Gaussian `i` under the mixture's mode.
    pub fn covariance(&self, i: usize) -> Result<Matrix3<f64>> {
        let p = &self.params[i];
        match self.mode {
            Mode::Anisotropic => p.covariance(),
            Mode::Isotropic => {
                let s = activate(p.raw_scale.x);
                Ok(Matrix3::from_diagonal_element(s * s))
            }
        }
    }

    /// Concatenates two mixtures of the same mode.
    pub fn union(&self, other: &GaussianMixture) -> Result<GaussianMixture> {
        if self.mode != other.mode {
            return Err(Error::InvalidArgument("cannot join mixtures of different modes".into()));
        }
        let mut params = self.params.clone();
        params.extend_from_slice(&other.params);
        Self::new(self.mode, params)
    }
}

fn tie_scales(p: &mut GaussianParams) {
    let s = p.raw_scale.x;
    p.raw_scale = Vector3::new(s, s, s);
}

/// Standard deviation used to scatter initial means: `0.9 · E / 6`.
pub fn init_mean_std(extent: f64) -> f64 {
    0.9 * extent / 6.0
}

/// Random initialization: means `~ N(0, (0.9E/6)² I)`, scales `0.1 · 0.9E/6`,
/// identity rotations, amplitudes `1/(2N)`.
///
/// Raw values are inverse-softplus of those targets, so activation reproduces
/// them. Deterministic for a given seed.
pub fn init_random(n: usize, seed: u64, grid: &GridSpec, mode: Mode) -> Result<GaussianMixture> {
    if n == 0 {
        return Err(Error::InvalidCount(0));
    }
    let std = init_mean_std(grid.extent);
    let normal = Normal::new(0.0, std).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let raw_scale = inverse_activate(0.1 * std);
    let raw_amplitude = inverse_activate(1.0 / (2.0 * n as f64));
    let params = (0..n)
        .map(|_| GaussianParams {
            mean: Vector3::new(normal.sample(&mut rng), normal.sample(&mut rng), normal.sample(&mut rng)),
            raw_scale: Vector3::new(raw_scale, raw_scale, raw_scale),
            quaternion: [1.0, 0.0, 0.0, 0.0],
            raw_amplitude,
        })
        .collect();
    GaussianMixture::new(mode, params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::SymmetricEigen;
    use proptest::prelude::*;
    use rand::Rng;

    #[test]
    fn softplus_values() {
        assert_relative_eq!(activate(0.0), std::f64::consts::LN_2, epsilon = 1e-15);
        assert_relative_eq!(activate(50.0), 50.0, max_relative = 1e-12);
        assert!(activate(-40.0) > 0.0 && activate(-40.0) < 1e-17);
        assert!(activate(800.0).is_finite());
    }

    #[test]
    fn softplus_round_trip() {
        for i in 0..=200 {
            let x = -10.0 + 0.1 * i as f64;
            assert!((inverse_activate(activate(x)) - x).abs() < 1e-9, "x = {x}");
        }
    }

    #[test]
    fn inverse_softplus_of_small_amplitude() {
        let raw = inverse_activate(5.0e-5);
        assert!((raw - (5.0e-5f64.exp() - 1.0).ln()).abs() < 1e-9);
        assert!((raw - -9.9034).abs() < 1e-4);
    }

    #[test]
    fn activate_grad_matches_finite_difference() {
        for x in [-30.0, -3.0, 0.0, 0.7, 12.0] {
            let h = 1e-6;
            let fd = (activate(x + h) - activate(x - h)) / (2.0 * h);
            assert!((activate_grad(x) - fd).abs() < 1e-8);
        }
    }

    #[test]
    fn identity_quaternion_isotropic_scales() {
        let raw = inverse_activate(0.3);
        let cov = build_covariance(&[1.0, 0.0, 0.0, 0.0], &Vector3::new(raw, raw, raw)).unwrap();
        assert!((cov - Matrix3::from_diagonal_element(0.09)).abs().max() < 1e-15);
    }

    #[test]
    fn z_rotation_permutes_axes() {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let (a, b, c) = (0.1, 0.2, 0.3);
        let raw = Vector3::new(inverse_activate(a), inverse_activate(b), inverse_activate(c));
        let cov = build_covariance(&[h, 0.0, 0.0, h], &raw).unwrap();
        let expected = Matrix3::from_diagonal(&Vector3::new(b * b, a * a, c * c));
        assert!((cov - expected).abs().max() < 1e-14);
    }

    #[test]
    fn zero_quaternion_is_an_error() {
        assert!(matches!(
            build_covariance(&[0.0; 4], &Vector3::zeros()),
            Err(Error::DegenerateRotation)
        ));
    }

    #[test]
    fn covariance_eigenvalues_are_squared_scales() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let q = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
            let raw = Vector3::new(rng.random_range(-3.0..1.0), rng.random_range(-3.0..1.0), rng.random_range(-3.0..1.0));
            let cov = build_covariance(&q, &raw).unwrap();
            let mut eig: Vec<f64> = SymmetricEigen::new(cov).eigenvalues.iter().copied().collect();
            let mut want: Vec<f64> = raw.iter().map(|&r| activate(r).powi(2)).collect();
            eig.sort_by(f64::total_cmp);
            want.sort_by(f64::total_cmp);
            for (e, w) in eig.iter().zip(&want) {
                assert_relative_eq!(e, w, max_relative = 1e-10);
            }
        }
    }

    #[test]
    fn quaternion_backward_matches_finite_difference() {
        let q = [0.3, -0.5, 0.7, 0.2];
        let weights = Matrix3::new(0.3, -1.0, 0.4, 2.0, 0.1, -0.7, 0.5, 0.9, -0.2);
        let f = |q: &[f64; 4]| rotation_from_quaternion(q).unwrap().component_mul(&weights).sum();
        let g = quaternion_backward(&q, &weights);
        for k in 0..4 {
            let h = 1e-6;
            let mut qp = q;
            let mut qm = q;
            qp[k] += h;
            qm[k] -= h;
            let fd = (f(&qp) - f(&qm)) / (2.0 * h);
            assert!((g[k] - fd).abs() < 1e-8, "component {k}: {} vs {fd}", g[k]);
        }
    }

    #[test]
    fn init_values() {
        let grid = GridSpec::new(64, 0.5, 1.0).unwrap();
        assert_relative_eq!(init_mean_std(0.5), 0.075, epsilon = 1e-15);
        let m = init_random(10_000, 3, &grid, Mode::Anisotropic).unwrap();
        assert_eq!(m.count(), 10_000);
        for p in m.params() {
            assert_relative_eq!(p.amplitude(), 5.0e-5, max_relative = 1e-12);
            for s in p.scales().iter() {
                assert_relative_eq!(*s, 0.0075, max_relative = 1e-12);
            }
            assert_eq!(p.quaternion, [1.0, 0.0, 0.0, 0.0]);
        }
        assert_relative_eq!(m.total_amplitude(), 0.5, max_relative = 1e-12);
        let n = m.count() as f64;
        let var = m.params().iter().map(|p| p.mean.norm_squared()).sum::<f64>() / (3.0 * n);
        assert!((var.sqrt() - 0.075).abs() < 0.002, "empirical std {}", var.sqrt());
    }

    #[test]
    fn init_is_deterministic_and_rejects_zero() {
        let grid = GridSpec::new(32, 0.5, 1.0).unwrap();
        let a = init_random(20, 11, &grid, Mode::Anisotropic).unwrap();
        let b = init_random(20, 11, &grid, Mode::Anisotropic).unwrap();
        let c = init_random(20, 12, &grid, Mode::Anisotropic).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!(matches!(init_random(0, 1, &grid, Mode::Anisotropic), Err(Error::InvalidCount(0))));
    }

    #[test]
    fn isotropic_mode_ties_scales_and_ignores_rotation() {
        let grid = GridSpec::new(32, 0.5, 1.0).unwrap();
        let mut m = init_random(3, 1, &grid, Mode::Isotropic).unwrap();
        let mut flat = m.to_flat();
        flat[3] = 0.25;
        flat[4] = 9.0;
        flat[6..10].copy_from_slice(&[0.2, 0.9, -0.3, 0.1]);
        m.set_flat(&flat).unwrap();
        let p = m.params()[0];
        assert_eq!(p.raw_scale, Vector3::new(0.25, 0.25, 0.25));
        let s = activate(0.25);
        assert_eq!(m.covariance(0).unwrap(), Matrix3::from_diagonal_element(s * s));
    }

    proptest! {
        #[test]
        fn covariance_invariant_under_quaternion_sign(
            w in -1.0f64..1.0, x in -1.0f64..1.0, y in -1.0f64..1.0, z in -1.0f64..1.0,
            sx in -4.0f64..2.0, sy in -4.0f64..2.0, sz in -4.0f64..2.0,
        ) {
            prop_assume!(w * w + x * x + y * y + z * z > 1e-3);
            let raw = Vector3::new(sx, sy, sz);
            let a = build_covariance(&[w, x, y, z], &raw).unwrap();
            let b = build_covariance(&[-w, -x, -y, -z], &raw).unwrap();
            prop_assert!((a - b).abs().max() <= 1e-15 * a.abs().max());
            prop_assert!((a - a.transpose()).abs().max() <= 1e-15 * a.abs().max());
        }

        #[test]
        fn activations_stay_positive(raw in -700.0f64..700.0) {
            prop_assert!(activate(raw) > 0.0);
            prop_assert!(activate_grad(raw) >= 0.0);
        }

        #[test]
        fn flat_round_trip(vals in proptest::collection::vec(-5.0f64..5.0, 11..=44)) {
            let n = vals.len() / 11 * 11;
            let m = GaussianMixture::from_flat(Mode::Anisotropic, &vals[..n]).unwrap();
            prop_assert_eq!(m.to_flat(), vals[..n].to_vec());
            prop_assert_eq!(m.param_count(), n);
        }
    }
}
