use std::fmt;

use rustfft::num_complex::Complex64;

use super::VoxelVolume;
use crate::error::{Error, Result};
use crate::optics::fft3_centered;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FscShell {
    /// Integer radius in frequency-index units.
    pub index: usize,
    /// Cycles per Å.
    pub frequency: f64,
    pub correlation: f64,
    /// Number of Fourier samples in the shell.
    pub samples: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Resolution {
    /// Å, with the (fractional) shell index where the threshold was crossed.
    Crossed { angstrom: f64, shell: f64 },
    /// The curve stays at or above the threshold up to Nyquist.
    NotReached,
}

impl Resolution {
    pub fn angstrom(&self) -> Option<f64> {
        match self {
            Resolution::Crossed { angstrom, .. } => Some(*angstrom),
            Resolution::NotReached => None,
        }
    }

    /// Crossing position in shell units; `None` when never crossed.
    pub fn shell(&self) -> Option<f64> {
        match self {
            Resolution::Crossed { shell, .. } => Some(*shell),
            Resolution::NotReached => None,
        }
    }

    /// True when the crossing lies strictly beyond `shell` (or never happens).
    pub fn beyond(&self, shell: f64) -> bool {
        self.shell().is_none_or(|s| s > shell)
    }
}

impl fmt::Display for Resolution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Resolution::Crossed { angstrom, shell } => write!(f, "{angstrom:.3} Å (shell {shell:.2})"),
            Resolution::NotReached => write!(f, "Nyquist (threshold never crossed)"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FscCurve {
    pub shells: Vec<FscShell>,
    pub size: usize,
    pub pixel_size: f64,
    pub resolution_0143: Resolution,
    pub resolution_05: Resolution,
    /// Largest |Im(numerator)| / |denominator| over all shells.
    pub max_imaginary_fraction: f64,
}

impl FscCurve {
    /// First crossing below `threshold`, interpolated linearly between
    /// shells, with FSC(0) taken as 1.
    pub fn resolution_at(&self, threshold: f64) -> Resolution {
        resolution(&self.shells, threshold, self.size, self.pixel_size)
    }

    pub fn correlation(&self, index: usize) -> Option<f64> {
        self.shells.iter().find(|s| s.index == index).map(|s| s.correlation)
    }

    /// Minimum correlation over shells `1..=index`.
    pub fn min_up_to(&self, index: usize) -> f64 {
        self.shells
            .iter()
            .filter(|s| s.index <= index)
            .map(|s| s.correlation)
            .fold(f64::INFINITY, f64::min)
    }
}

fn resolution(shells: &[FscShell], threshold: f64, size: usize, pixel_size: f64) -> Resolution {
    let (mut prev_k, mut prev_c) = (0.0, 1.0);
    for s in shells {
        if s.correlation < threshold {
            let k = prev_k + (prev_c - threshold) / (prev_c - s.correlation) * (s.index as f64 - prev_k);
            return Resolution::Crossed {
                angstrom: size as f64 * pixel_size / k,
                shell: k,
            };
        }
        prev_k = s.index as f64;
        prev_c = s.correlation;
    }
    Resolution::NotReached
}

/// Shell index of every centered 3D frequency sample, or `usize::MAX` outside `1..=D/2`.
fn shell_map(d: usize) -> Vec<usize> {
    let c = (d / 2) as f64;
    let half = d / 2;
    let mut out = Vec::with_capacity(d * d * d);
    for z in 0..d {
        let kz = z as f64 - c;
        for y in 0..d {
            let ky = y as f64 - c;
            for x in 0..d {
                let kx = x as f64 - c;
                let s = (kx * kx + ky * ky + kz * kz).sqrt().round() as usize;
                out.push(if s >= 1 && s <= half { s } else { usize::MAX });
            }
        }
    }
    out
}

pub(crate) fn fsc_spectra(fa: &[Complex64], fb: &[Complex64], d: usize, pixel_size: f64) -> FscCurve {
    let half = d / 2;
    let mut num = vec![0.0; half + 1];
    let mut num_im = vec![0.0; half + 1];
    let mut pa = vec![0.0; half + 1];
    let mut pb = vec![0.0; half + 1];
    let mut count = vec![0usize; half + 1];
    for ((a, b), s) in fa.iter().zip(fb).zip(shell_map(d)) {
        if s == usize::MAX {
            continue;
        }
        num[s] += a.re * b.re + a.im * b.im;
        num_im[s] += a.im * b.re - a.re * b.im;
        pa[s] += a.re * a.re + a.im * a.im;
        pb[s] += b.re * b.re + b.im * b.im;
        count[s] += 1;
    }
    let mut max_imag: f64 = 0.0;
    let shells: Vec<FscShell> = (1..=half)
        .map(|s| {
            let den = (pa[s] * pb[s]).sqrt();
            let correlation = if den > 0.0 { (num[s] / den).clamp(-1.0, 1.0) } else { 0.0 };
            if den > 0.0 {
                max_imag = max_imag.max(num_im[s].abs() / den);
            }
            FscShell {
                index: s,
                frequency: s as f64 / (d as f64 * pixel_size),
                correlation,
                samples: count[s],
            }
        })
        .collect();
    FscCurve {
        resolution_0143: resolution(&shells, 0.143, d, pixel_size),
        resolution_05: resolution(&shells, 0.5, d, pixel_size),
        shells,
        size: d,
        pixel_size,
        max_imaginary_fraction: max_imag,
    }
}

/// Fourier shell correlation of two volumes on the same grid, no masking.
pub fn fsc(a: &VoxelVolume, b: &VoxelVolume) -> Result<FscCurve> {
    if a.grid != b.grid {
        return Err(Error::shape(
            format!("volume grid {:?}", a.grid),
            format!("{:?}", b.grid),
        ));
    }
    let d = a.size();
    if d < 2 {
        return Err(Error::InvalidArgument("FSC needs volumes of at least 2³ voxels".into()));
    }
    let fa = fft3_centered(&a.voxels, d);
    let fb = fft3_centered(&b.voxels, d);
    Ok(fsc_spectra(&fa, &fb, d, a.grid.pixel_size))
}

/// Plain-text table `shell_index spatial_freq_per_Å correlation`.
pub fn format_fsc_table(c: &FscCurve) -> String {
    let mut s = String::from("# shell_index spatial_freq_per_Å correlation\n");
    for sh in &c.shells {
        s.push_str(&format!("{} {:?} {:?}\n", sh.index, sh.frequency, sh.correlation));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridSpec;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn noise(d: usize, seed: u64) -> VoxelVolume {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = GridSpec::new(d, 0.5, 1.5).unwrap();
        VoxelVolume::from_voxels(g, (0..d * d * d).map(|_| StandardNormal.sample(&mut rng)).collect()).unwrap()
    }

    #[test]
    fn self_and_negated() {
        let v = noise(16, 1);
        let c = fsc(&v, &v).unwrap();
        assert!(c.shells.iter().all(|s| s.correlation == 1.0));
        assert_eq!(c.resolution_0143, Resolution::NotReached);
        assert_eq!(c.resolution_05.to_string(), "Nyquist (threshold never crossed)");
        let n = fsc(&v, &v.scaled(-1.0)).unwrap();
        assert!(n.shells.iter().all(|s| s.correlation == -1.0));
    }

    #[test]
    fn shells_cover_one_to_nyquist() {
        for d in [16, 17] {
            let c = fsc(&noise(d, 2), &noise(d, 3)).unwrap();
            let idx: Vec<usize> = c.shells.iter().map(|s| s.index).collect();
            assert_eq!(idx, (1..=d / 2).collect::<Vec<_>>());
            assert!((c.shells[3].frequency - 4.0 / (d as f64 * 1.5)).abs() < 1e-15);
            assert!(c.max_imaginary_fraction <= 1e-6);
        }
    }

    #[test]
    fn independent_noise_decorrelates() {
        for seed in 0..3 {
            let c = fsc(&noise(64, 10 + seed), &noise(64, 20 + seed)).unwrap();
            for s in c.shells.iter().filter(|s| s.samples >= 100) {
                assert!(s.correlation.abs() <= 0.1, "shell {} = {}", s.index, s.correlation);
            }
        }
    }

    #[test]
    fn symmetric_and_scale_invariant() {
        let a = noise(16, 4);
        let mut b = noise(16, 5);
        b.voxels.iter_mut().zip(&a.voxels).for_each(|(x, y)| *x += 2.0 * y);
        let ab = fsc(&a, &b).unwrap();
        let ba = fsc(&b, &a).unwrap();
        assert_eq!(ab.shells, ba.shells);
        let scaled = fsc(&a.scaled(3.7), &b).unwrap();
        for (x, y) in ab.shells.iter().zip(&scaled.shells) {
            assert!((x.correlation - y.correlation).abs() <= 1e-12);
        }
    }

    #[test]
    fn grid_mismatch_is_an_error() {
        assert!(matches!(fsc(&noise(16, 1), &noise(8, 1)), Err(Error::ShapeMismatch { .. })));
    }

    #[test]
    fn interpolated_crossing() {
        let shells: Vec<FscShell> = [0.9, 0.7, 0.3, 0.1]
            .iter()
            .enumerate()
            .map(|(i, &c)| FscShell {
                index: i + 1,
                frequency: 0.0,
                correlation: c,
                samples: 10,
            })
            .collect();
        match resolution(&shells, 0.5, 64, 2.0) {
            Resolution::Crossed { angstrom, shell } => {
                assert!((shell - 2.5).abs() < 1e-12);
                assert!((angstrom - 128.0 / 2.5).abs() < 1e-9);
            }
            r => panic!("{r:?}"),
        }
        // below threshold at the first shell: interpolate from FSC(0) = 1
        assert!((resolution(&shells, 0.95, 64, 2.0).shell().unwrap() - 0.5).abs() < 1e-12);
        assert_eq!(resolution(&shells, 0.05, 64, 2.0), Resolution::NotReached);
    }

    #[test]
    fn table_format() {
        let c = fsc(&noise(8, 1), &noise(8, 1)).unwrap();
        let t = format_fsc_table(&c);
        let lines: Vec<&str> = t.lines().collect();
        assert_eq!(lines[0], "# shell_index spatial_freq_per_Å correlation");
        assert_eq!(lines.len(), 5);
        assert!(lines[1].starts_with("1 "));
        assert!(lines[1].ends_with(" 1.0"));
    }
}
