use std::fmt;
use std::str::FromStr;

use nalgebra::{UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gmm::{inverse_activate, GaussianMixture, GaussianParams, Mode};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PhantomKind {
    Helix,
    BlobCluster,
    TwoLobe,
}

impl FromStr for PhantomKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "helix" => Ok(Self::Helix),
            "blob-cluster" => Ok(Self::BlobCluster),
            "two-lobe" => Ok(Self::TwoLobe),
            other => Err(Error::UnknownPhantom(other.to_string())),
        }
    }
}

impl fmt::Display for PhantomKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Helix => "helix",
            Self::BlobCluster => "blob-cluster",
            Self::TwoLobe => "two-lobe",
        })
    }
}

fn gaussian(mean: Vector3<f64>, scales: [f64; 3], rotation: UnitQuaternion<f64>, amplitude: f64) -> GaussianParams {
    let q = rotation.quaternion();
    GaussianParams {
        mean,
        raw_scale: Vector3::from(scales.map(inverse_activate)),
        quaternion: [q.w, q.i, q.j, q.k],
        raw_amplitude: inverse_activate(amplitude),
    }
}

/// Deterministic structured ground truth with unit total amplitude. Every
/// Gaussian keeps `|μ| + 3·max(scale) ≤ E/2`.
pub fn make_phantom(kind: PhantomKind, n: usize, seed: u64, extent: f64) -> Result<GaussianMixture> {
    if n == 0 {
        return Err(Error::InvalidCount(0));
    }
    if !(extent > 0.0 && extent.is_finite()) {
        return Err(Error::InvalidArgument(format!("extent must be positive, got {extent}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let r = extent / 2.0;
    let amp = 1.0 / n as f64;
    let params = match kind {
        PhantomKind::Helix => {
            // tube of anisotropic Gaussians, long axis along the tangent
            let (radius, half_height, turns) = (0.35 * r, 0.5 * r, 2.5);
            let (along, across) = (0.12 * r, 0.08 * r);
            let phase = rng.random_range(0.0..std::f64::consts::TAU);
            (0..n)
                .map(|i| {
                    let t = if n == 1 { 0.5 } else { i as f64 / (n - 1) as f64 };
                    let a = phase + turns * std::f64::consts::TAU * t;
                    let mean = Vector3::new(radius * a.cos(), radius * a.sin(), half_height * (2.0 * t - 1.0));
                    let tangent = Vector3::new(
                        -radius * turns * std::f64::consts::TAU * a.sin(),
                        radius * turns * std::f64::consts::TAU * a.cos(),
                        2.0 * half_height,
                    );
                    let rot = UnitQuaternion::rotation_between(&Vector3::x(), &tangent).unwrap_or_else(UnitQuaternion::identity);
                    gaussian(mean, [along, across, across], rot, amp)
                })
                .collect()
        }
        PhantomKind::BlobCluster => {
            let max_scale = 0.2 * r;
            let reach = r - 3.0 * max_scale;
            (0..n)
                .map(|_| {
                    let mean = loop {
                        let p = Vector3::new(
                            rng.random_range(-1.0..1.0),
                            rng.random_range(-1.0..1.0),
                            rng.random_range(-1.0..1.0),
                        );
                        if p.norm() <= 1.0 {
                            break p * reach;
                        }
                    };
                    let scales = [0; 3].map(|_| rng.random_range(0.14 * r..max_scale));
                    let axis = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
                    let rot = UnitQuaternion::from_scaled_axis(axis);
                    gaussian(mean, scales, rot, amp * rng.random_range(0.5..1.5))
                })
                .collect::<Vec<_>>()
        }
        PhantomKind::TwoLobe => (0..n)
            .map(|i| {
                let side = if i % 2 == 0 { 1.0 } else { -1.0 };
                let jitter = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
                let mean = Vector3::new(side * 0.4 * r, 0.0, 0.0) + jitter * 0.02 * r;
                gaussian(mean, [0.12 * r; 3], UnitQuaternion::identity(), amp)
            })
            .collect(),
    };
    let mut m = GaussianMixture::new(Mode::Anisotropic, params)?;
    if kind == PhantomKind::BlobCluster {
        // renormalize the randomized amplitudes to a unit total
        let total = m.total_amplitude();
        let mut flat = m.to_flat();
        for (c, p) in flat.chunks_exact_mut(11).zip(m.params()) {
            c[10] = inverse_activate(p.amplitude() / total);
        }
        m.set_flat(&flat)?;
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::voxelize;
    use crate::grid::GridSpec;

    #[test]
    fn all_kinds_stay_inside_the_prior_ball() {
        for kind in [PhantomKind::Helix, PhantomKind::BlobCluster, PhantomKind::TwoLobe] {
            for n in [1, 2, 50] {
                let m = make_phantom(kind, n, 3, 0.5).unwrap();
                assert_eq!(m.count(), n);
                assert!((m.total_amplitude() - 1.0).abs() < 1e-9, "{kind}");
                for p in m.params() {
                    assert!(p.mean.norm() + 3.0 * p.scales().max() <= 0.25 + 1e-12, "{kind}");
                }
            }
        }
    }

    #[test]
    fn helix_means_bounded_and_deterministic() {
        let a = make_phantom(PhantomKind::Helix, 50, 1, 0.5).unwrap();
        assert!(a.params().iter().all(|p| p.mean.norm() <= 0.25));
        assert_eq!(a, make_phantom(PhantomKind::Helix, 50, 1, 0.5).unwrap());
        assert_ne!(a, make_phantom(PhantomKind::Helix, 50, 2, 0.5).unwrap());
    }

    #[test]
    fn helix_long_axis_follows_tangent() {
        let m = make_phantom(PhantomKind::Helix, 50, 0, 0.5).unwrap();
        let p = &m.params()[20];
        let step = m.params()[21].mean - m.params()[19].mean;
        let cov = p.covariance().unwrap();
        let eig = nalgebra::SymmetricEigen::new(cov);
        let (imax, _) = eig.eigenvalues.argmax();
        let axis = eig.eigenvectors.column(imax);
        assert!(axis.dot(&step).abs() / step.norm() > 0.99);
    }

    #[test]
    fn unknown_kind() {
        assert!(matches!("ring".parse::<PhantomKind>(), Err(Error::UnknownPhantom(_))));
        assert_eq!("two-lobe".parse::<PhantomKind>().unwrap(), PhantomKind::TwoLobe);
        assert!(make_phantom(PhantomKind::Helix, 0, 0, 0.5).is_err());
    }

    #[test]
    fn two_lobe_has_two_maxima() {
        let g = GridSpec::new(64, 0.5, 1.0).unwrap();
        let v = voxelize(&make_phantom(PhantomKind::TwoLobe, 20, 5, 0.5).unwrap(), &g).unwrap();
        let half = 0.5 * v.max();
        let d = 64;
        let mut maxima = 0;
        for z in 1..d - 1 {
            for y in 1..d - 1 {
                for x in 1..d - 1 {
                    let c = v.get(x, y, z);
                    if c <= half {
                        continue;
                    }
                    let mut is_max = true;
                    for dz in 0..3 {
                        for dy in 0..3 {
                            for dx in 0..3 {
                                if (dx, dy, dz) != (1, 1, 1) && v.get(x + dx - 1, y + dy - 1, z + dz - 1) >= c {
                                    is_max = false;
                                }
                            }
                        }
                    }
                    maxima += is_max as usize;
                }
            }
        }
        assert_eq!(maxima, 2);
    }
}
