//! Fourier-domain image physics: centered FFTs, the contrast transfer
//! function and sub-pixel translation by phase shifting.

mod fft;

pub use fft::fft3_centered;
pub use rustfft::num_complex::Complex64;

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::GridSpec;
use crate::image::RenderedImage;

/// Microscope parameters for one image.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CtfParams {
    /// Å
    pub defocus_u: f64,
    /// Å
    pub defocus_v: f64,
    /// radians
    pub astigmatism_angle: f64,
    /// kV
    pub voltage: f64,
    /// mm
    pub spherical_aberration: f64,
    pub amplitude_contrast: f64,
    /// radians
    pub phase_shift: f64,
    /// Å²
    pub b_factor: f64,
}

impl Default for CtfParams {
    fn default() -> Self {
        Self {
            defocus_u: 15_000.0,
            defocus_v: 15_000.0,
            astigmatism_angle: 0.0,
            voltage: 300.0,
            spherical_aberration: 2.7,
            amplitude_contrast: 0.1,
            phase_shift: 0.0,
            b_factor: 0.0,
        }
    }
}

impl CtfParams {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.defocus_u,
            self.defocus_v,
            self.astigmatism_angle,
            self.voltage,
            self.spherical_aberration,
            self.amplitude_contrast,
            self.phase_shift,
            self.b_factor,
        ];
        if !all.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidArgument("CTF parameters must be finite".into()));
        }
        if !(self.voltage > 0.0) {
            return Err(Error::InvalidArgument(format!("voltage must be positive, got {}", self.voltage)));
        }
        if !(0.0..1.0).contains(&self.amplitude_contrast) {
            return Err(Error::InvalidArgument(format!(
                "amplitude contrast must lie in [0, 1), got {}",
                self.amplitude_contrast
            )));
        }
        if self.b_factor < 0.0 {
            return Err(Error::InvalidArgument(format!("B-factor must be non-negative, got {}", self.b_factor)));
        }
        Ok(())
    }

    /// Relativistic electron wavelength in Å.
    pub fn wavelength(&self) -> f64 {
        const H: f64 = 6.626_070_15e-34;
        const M0: f64 = 9.109_383_701_5e-31;
        const E: f64 = 1.602_176_634e-19;
        const C: f64 = 299_792_458.0;
        let v = self.voltage * 1e3;
        let metres = H / (2.0 * M0 * E * v * (1.0 + E * v / (2.0 * M0 * C * C))).sqrt();
        metres * 1e10
    }

    /// Defocus along azimuth `theta` (radians).
    pub fn defocus_at(&self, theta: f64) -> f64 {
        0.5 * ((self.defocus_u + self.defocus_v)
            + (self.defocus_u - self.defocus_v) * (2.0 * (theta - self.astigmatism_angle)).cos())
    }

    /// CTF value at spatial frequency `(kx, ky)` in cycles/Å.
    pub fn value_at(&self, kx: f64, ky: f64) -> f64 {
        let lambda = self.wavelength();
        let cs = self.spherical_aberration * 1e7;
        let k2 = kx * kx + ky * ky;
        let defocus = self.defocus_at(ky.atan2(kx));
        let chi = std::f64::consts::PI * lambda * defocus * k2
            - 0.5 * std::f64::consts::PI * cs * lambda.powi(3) * k2 * k2
            + self.phase_shift;
        let w = self.amplitude_contrast;
        let envelope = (-self.b_factor * k2 / 4.0).exp();
        -((1.0 - w * w).sqrt() * chi.sin() + w * chi.cos()) * envelope
    }
}

/// A `D×D` complex spectrum in centered layout.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub grid: GridSpec,
    pub values: Vec<Complex64>,
}

impl Spectrum {
    #[inline]
    pub fn get(&self, row: usize, col: usize) -> Complex64 {
        self.values[row * self.grid.size + col]
    }

    /// Largest `|S(k) - conj(S(-k))|`, skipping frequencies whose mirror is not on the grid.
    pub fn hermitian_error(&self) -> f64 {
        let d = self.grid.size;
        let mut worst: f64 = 0.0;
        for r in 0..d {
            for c in 0..d {
                if let (Some(pr), Some(pc)) = (mirror(r, d), mirror(c, d)) {
                    worst = worst.max((self.get(r, c) - self.get(pr, pc).conj()).norm());
                }
            }
        }
        worst
    }
}

/// Centered index of `-f` for the frequency at centered index `i`, if on the grid.
fn mirror(i: usize, d: usize) -> Option<usize> {
    let m = d / 2;
    (2 * m).checked_sub(i).filter(|&p| p < d)
}

/// Like [`mirror`] but folds the unpaired Nyquist index of even grids onto itself.
fn mirror_wrapped(i: usize, d: usize) -> usize {
    (2 * (d / 2) + d - i) % d
}

fn require_fft_size(grid: &GridSpec) -> Result<()> {
    if grid.size < 4 {
        return Err(Error::InvalidArgument(format!("FFT images need D >= 4, got {}", grid.size)));
    }
    Ok(())
}

pub fn fft_centered(img: &RenderedImage) -> Result<Spectrum> {
    require_fft_size(&img.grid)?;
    let d = img.grid.size;
    let data: Vec<Complex64> = img.pixels.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    Ok(Spectrum {
        grid: img.grid,
        values: fft::fft2_centered_complex(&data, d, false),
    })
}

/// Inverse of [`fft_centered`]; returns the real part.
pub fn ifft_centered(s: &Spectrum) -> Result<RenderedImage> {
    require_fft_size(&s.grid)?;
    let d = s.grid.size;
    if s.values.len() != d * d {
        return Err(Error::shape(d * d, s.values.len()));
    }
    let out = fft::fft2_centered_complex(&s.values, d, true);
    Ok(RenderedImage {
        grid: s.grid,
        pixels: out.iter().map(|c| c.re).collect(),
    })
}

/// Centered frequency of index `i` in cycles/Å.
#[inline]
fn frequency(i: usize, grid: &GridSpec) -> f64 {
    (i as f64 - grid.center_index() as f64) / (grid.size as f64 * grid.pixel_size)
}

/// CTF sampled on the centered frequency grid, row-major.
///
/// The values are averaged with their point reflections so the filter is
/// exactly even, which keeps filtered real images real and the filter
/// self-adjoint (this only matters at the unpaired Nyquist row of even grids
/// with astigmatism; elsewhere it removes rounding noise).
pub fn ctf_evaluate(p: &CtfParams, grid: &GridSpec) -> Result<Vec<f64>> {
    p.validate()?;
    let d = grid.size;
    let raw: Vec<f64> = (0..d * d)
        .map(|k| p.value_at(frequency(k % d, grid), frequency(k / d, grid)))
        .collect();
    Ok((0..d * d)
        .map(|k| {
            let (r, c) = (k / d, k % d);
            0.5 * (raw[k] + raw[mirror_wrapped(r, d) * d + mirror_wrapped(c, d)])
        })
        .collect())
}

/// `F⁻¹(H · F(img))` for a real filter `H` given on the centered grid.
pub fn apply_filter(img: &RenderedImage, filter: &[f64]) -> Result<RenderedImage> {
    require_fft_size(&img.grid)?;
    if filter.len() != img.grid.num_pixels() {
        return Err(Error::shape(
            format!("filter of {} values", img.grid.num_pixels()),
            filter.len(),
        ));
    }
    let mut s = fft_centered(img)?;
    for (v, h) in s.values.iter_mut().zip(filter) {
        *v *= *h;
    }
    ifft_centered(&s)
}

pub fn apply_ctf(img: &RenderedImage, p: &CtfParams) -> Result<RenderedImage> {
    apply_filter(img, &ctf_evaluate(p, &img.grid)?)
}

/// Translates an image by `t = (tx, ty)` pixels (content moves toward +t)
/// by multiplying its spectrum with `exp(-2πi k·t)`.
///
/// Integer shifts are exact circular shifts. On even grids the unpaired
/// Nyquist component cannot carry a fractional shift in a real image; it is
/// moved by the nearest whole pixel instead, which keeps the operation real
/// and exactly invertible by `-t`.
pub fn phase_shift_translate(img: &RenderedImage, t: Vector2<f64>) -> Result<RenderedImage> {
    if !(t.x.is_finite() && t.y.is_finite()) {
        return Err(Error::InvalidArgument("translation must be finite".into()));
    }
    require_fft_size(&img.grid)?;
    let d = img.grid.size;
    let m = d / 2;
    let factor = |i: usize, shift: f64| -> Complex64 {
        let f = i as f64 - m as f64;
        if d % 2 == 0 && i == 0 {
            let sign = if (shift.round() as i64).rem_euclid(2) == 0 { 1.0 } else { -1.0 };
            Complex64::new(sign, 0.0)
        } else {
            Complex64::from_polar(1.0, -2.0 * std::f64::consts::PI * f * shift / d as f64)
        }
    };
    let fx: Vec<Complex64> = (0..d).map(|c| factor(c, t.x)).collect();
    let fy: Vec<Complex64> = (0..d).map(|r| factor(r, t.y)).collect();
    let mut s = fft_centered(img)?;
    for r in 0..d {
        for c in 0..d {
            s.values[r * d + c] *= fy[r] * fx[c];
        }
    }
    ifft_centered(&s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn grid(d: usize) -> GridSpec {
        GridSpec::new(d, 0.5, 1.5).unwrap()
    }

    fn random_image(d: usize, seed: u64) -> RenderedImage {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        RenderedImage::from_pixels(grid(d), (0..d * d).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    fn astigmatic() -> CtfParams {
        CtfParams {
            defocus_u: 12_000.0,
            defocus_v: 18_000.0,
            astigmatism_angle: 0.6,
            amplitude_contrast: 0.07,
            phase_shift: 0.3,
            b_factor: 40.0,
            ..Default::default()
        }
    }

    #[test]
    fn centered_impulse_has_flat_spectrum() {
        for d in [8usize, 9, 16] {
            let mut img = RenderedImage::zeros(grid(d));
            *img.get_mut(d / 2, d / 2) = 1.0;
            let s = fft_centered(&img).unwrap();
            assert!(s.values.iter().all(|v| (v - Complex64::new(1.0, 0.0)).norm() < 1e-12));
        }
    }

    #[test]
    fn constant_image_is_dc_only() {
        let d = 16;
        let img = RenderedImage::from_pixels(grid(d), vec![0.75; d * d]).unwrap();
        let s = fft_centered(&img).unwrap();
        for r in 0..d {
            for c in 0..d {
                let want = if (r, c) == (d / 2, d / 2) { 0.75 * (d * d) as f64 } else { 0.0 };
                assert!((s.get(r, c) - Complex64::new(want, 0.0)).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn round_trip_and_hermitian() {
        for (d, seed) in [(32usize, 1u64), (33, 2)] {
            let img = random_image(d, seed);
            let s = fft_centered(&img).unwrap();
            assert!(s.hermitian_error() < 1e-9);
            let back = ifft_centered(&s).unwrap();
            assert!(back.max_abs_diff(&img) <= 1e-10);
        }
    }

    #[test]
    fn rejects_tiny_images() {
        assert!(fft_centered(&RenderedImage::zeros(grid(3))).is_err());
    }

    #[test]
    fn wavelength_at_300kv() {
        let lambda = CtfParams::default().wavelength();
        assert!((lambda - 0.019_687).abs() < 1e-5, "{lambda}");
    }

    #[test]
    fn ctf_at_zero_frequency() {
        let p = astigmatic();
        let h = ctf_evaluate(&p, &grid(32)).unwrap();
        let zero = ((-(1.0 - 0.07f64 * 0.07).sqrt()) * 0.3f64.sin() - 0.07 * 0.3f64.cos()).abs();
        let plain = CtfParams { phase_shift: 0.0, ..p };
        let h0 = ctf_evaluate(&plain, &grid(32)).unwrap();
        assert!((h0[16 * 32 + 16] + 0.07).abs() < 1e-15);
        assert!((h[16 * 32 + 16].abs() - zero).abs() < 1e-15);
    }

    #[test]
    fn pure_phase_contrast_is_a_sine() {
        let p = CtfParams { amplitude_contrast: 0.0, b_factor: 0.0, ..Default::default() };
        let g = grid(32);
        let h = ctf_evaluate(&p, &g).unwrap();
        assert_eq!(h[16 * 32 + 16], 0.0);
        let lambda = p.wavelength();
        for k in [3usize, 40, 300, 777] {
            let (kx, ky) = (frequency(k % 32, &g), frequency(k / 32, &g));
            let k2 = kx * kx + ky * ky;
            let chi = std::f64::consts::PI * lambda * p.defocus_u * k2
                - 0.5 * std::f64::consts::PI * 2.7e7 * lambda.powi(3) * k2 * k2;
            assert!((h[k] + chi.sin()).abs() < 1e-12);
        }
    }

    #[test]
    fn non_astigmatic_ctf_is_radial() {
        let p = CtfParams { b_factor: 25.0, ..Default::default() };
        let d = 32;
        let h = ctf_evaluate(&p, &grid(d)).unwrap();
        let m = d as i64 / 2;
        let mut by_radius: std::collections::HashMap<i64, f64> = Default::default();
        for r in 0..d as i64 {
            for c in 0..d as i64 {
                let r2 = (r - m).pow(2) + (c - m).pow(2);
                let v = h[(r * d as i64 + c) as usize];
                if let Some(prev) = by_radius.insert(r2, v) {
                    assert!((prev - v).abs() <= 1e-12, "radius² {r2}");
                }
            }
        }
    }

    #[test]
    fn invalid_ctf_params() {
        assert!(CtfParams { voltage: 0.0, ..Default::default() }.validate().is_err());
        assert!(CtfParams { amplitude_contrast: 1.0, ..Default::default() }.validate().is_err());
        assert!(CtfParams { b_factor: -1.0, ..Default::default() }.validate().is_err());
    }

    #[test]
    fn identity_filter() {
        let img = random_image(16, 3);
        let out = apply_filter(&img, &vec![1.0; 256]).unwrap();
        assert!(out.max_abs_diff(&img) <= 1e-12);
        assert!(matches!(apply_filter(&img, &[1.0; 10]), Err(Error::ShapeMismatch { .. })));
    }

    #[test]
    fn ctf_is_linear_and_real() {
        let (x, y) = (random_image(32, 4), random_image(32, 5));
        let p = astigmatic();
        let combo = RenderedImage::from_pixels(
            x.grid,
            x.pixels.iter().zip(&y.pixels).map(|(a, b)| 2.0 * a - 0.5 * b).collect(),
        )
        .unwrap();
        let lhs = apply_ctf(&combo, &p).unwrap();
        let (cx, cy) = (apply_ctf(&x, &p).unwrap(), apply_ctf(&y, &p).unwrap());
        for k in 0..lhs.pixels.len() {
            assert!((lhs.pixels[k] - (2.0 * cx.pixels[k] - 0.5 * cy.pixels[k])).abs() <= 1e-10);
        }
        // imaginary residue of the inverse transform
        let mut s = fft_centered(&x).unwrap();
        let h = ctf_evaluate(&p, &x.grid).unwrap();
        s.values.iter_mut().zip(&h).for_each(|(v, h)| *v *= h);
        let raw = fft::fft2_centered_complex(&s.values, 32, true);
        let peak = raw.iter().fold(0.0f64, |m, v| m.max(v.re.abs()));
        assert!(raw.iter().all(|v| v.im.abs() <= 1e-9 * peak));
    }

    #[test]
    fn ctf_is_self_adjoint() {
        for (d, seed) in [(32usize, 6u64), (31, 7)] {
            let (x, y) = (random_image(d, seed), random_image(d, seed + 100));
            let p = astigmatic();
            let lhs = apply_ctf(&x, &p).unwrap().dot(&y);
            let rhs = x.dot(&apply_ctf(&y, &p).unwrap());
            assert!((lhs - rhs).abs() <= 1e-8 * lhs.abs().max(rhs.abs()));
        }
    }

    #[test]
    fn zero_shift_is_identity() {
        let img = random_image(32, 8);
        let out = phase_shift_translate(&img, Vector2::zeros()).unwrap();
        assert!(out.max_abs_diff(&img) <= 1e-10);
    }

    #[test]
    fn integer_shift_is_circular() {
        for d in [32usize, 33] {
            let img = random_image(d, 9);
            let out = phase_shift_translate(&img, Vector2::new(3.0, 0.0)).unwrap();
            for r in 0..d {
                for c in 0..d {
                    assert!((out.get(r, c) - img.get(r, (c + d - 3) % d)).abs() <= 1e-9);
                }
            }
            let out = phase_shift_translate(&img, Vector2::new(-1.0, 2.0)).unwrap();
            for r in 0..d {
                for c in 0..d {
                    assert!((out.get(r, c) - img.get((r + d - 2) % d, (c + 1) % d)).abs() <= 1e-9);
                }
            }
        }
    }

    #[test]
    fn fractional_shift_inverts() {
        for d in [32usize, 33] {
            let img = random_image(d, 10);
            let t = Vector2::new(0.5, 0.25);
            let there = phase_shift_translate(&img, t).unwrap();
            let back = phase_shift_translate(&there, -t).unwrap();
            assert!(back.max_abs_diff(&img) <= 1e-9);
        }
    }

    #[test]
    fn fractional_shift_moves_a_smooth_blob() {
        let d = 32;
        let g = grid(d);
        let blob = |cx: f64, cy: f64| {
            RenderedImage::from_pixels(
                g,
                (0..d * d)
                    .map(|k| {
                        let (r, c) = ((k / d) as f64, (k % d) as f64);
                        (-((c - cx).powi(2) + (r - cy).powi(2)) / 8.0).exp()
                    })
                    .collect(),
            )
            .unwrap()
        };
        let moved = phase_shift_translate(&blob(16.0, 16.0), Vector2::new(0.4, -1.7)).unwrap();
        assert!(moved.max_abs_diff(&blob(16.4, 14.3)) < 1e-6);
    }
}
