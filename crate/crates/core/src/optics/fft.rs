//! Centered FFTs: the zero frequency (and the spatial origin) sit at index
//! `floor(D/2)` on every axis. Forward transforms are unnormalized, inverse
//! transforms scale by `1/D^dim`.

use std::cell::RefCell;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

thread_local! {
    // plans are cached per worker thread
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn plan(n: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        if inverse {
            p.plan_fft_inverse(n)
        } else {
            p.plan_fft_forward(n)
        }
    })
}

/// Centered index `c` → standard FFT index, per axis.
#[inline]
fn to_standard(c: usize, d: usize) -> usize {
    (c + d - d / 2) % d
}

/// Reorders a centered 2D array to standard FFT layout (origin at index 0).
pub(crate) fn unshift2(centered: &[Complex64], d: usize) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); d * d];
    for r in 0..d {
        let sr = to_standard(r, d);
        for c in 0..d {
            out[sr * d + to_standard(c, d)] = centered[r * d + c];
        }
    }
    out
}

pub(crate) fn shift2(standard: &[Complex64], d: usize) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); d * d];
    for r in 0..d {
        let sr = to_standard(r, d);
        for c in 0..d {
            out[r * d + c] = standard[sr * d + to_standard(c, d)];
        }
    }
    out
}

/// Strided 1D transforms along one axis of a row-major array.
fn transform_axis(data: &mut [Complex64], len: usize, stride: usize, fft: &Arc<dyn Fft<f64>>) {
    let total = data.len();
    let mut line = vec![Complex64::new(0.0, 0.0); len];
    let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    if stride == 1 {
        for chunk in data.chunks_exact_mut(len) {
            fft.process_with_scratch(chunk, &mut scratch);
        }
        return;
    }
    let block = len * stride;
    for outer in (0..total).step_by(block) {
        for inner in 0..stride {
            let base = outer + inner;
            for (k, v) in line.iter_mut().enumerate() {
                *v = data[base + k * stride];
            }
            fft.process_with_scratch(&mut line, &mut scratch);
            for (k, v) in line.iter().enumerate() {
                data[base + k * stride] = *v;
            }
        }
    }
}

/// In-place 2D FFT in standard layout.
pub(crate) fn fft2_standard(data: &mut [Complex64], d: usize, inverse: bool) {
    let f = plan(d, inverse);
    transform_axis(data, d, 1, &f);
    transform_axis(data, d, d, &f);
    if inverse {
        let s = 1.0 / (d * d) as f64;
        data.iter_mut().for_each(|v| *v *= s);
    }
}

/// Centered 2D transform of a centered array.
pub(crate) fn fft2_centered_complex(centered: &[Complex64], d: usize, inverse: bool) -> Vec<Complex64> {
    let mut buf = unshift2(centered, d);
    fft2_standard(&mut buf, d, inverse);
    shift2(&buf, d)
}

/// Centered forward 3D FFT of a real `D³` array (x fastest, then y, then z).
pub fn fft3_centered(values: &[f64], d: usize) -> Vec<Complex64> {
    assert_eq!(values.len(), d * d * d, "fft3_centered expects a D³ array");
    let mut buf = vec![Complex64::new(0.0, 0.0); d * d * d];
    for z in 0..d {
        let sz = to_standard(z, d);
        for y in 0..d {
            let sy = to_standard(y, d);
            for x in 0..d {
                buf[(sz * d + sy) * d + to_standard(x, d)] = Complex64::new(values[(z * d + y) * d + x], 0.0);
            }
        }
    }
    let f = plan(d, false);
    transform_axis(&mut buf, d, 1, &f);
    transform_axis(&mut buf, d, d, &f);
    transform_axis(&mut buf, d, d * d, &f);
    let mut out = vec![Complex64::new(0.0, 0.0); d * d * d];
    for z in 0..d {
        let sz = to_standard(z, d);
        for y in 0..d {
            let sy = to_standard(y, d);
            for x in 0..d {
                out[(z * d + y) * d + x] = buf[(sz * d + sy) * d + to_standard(x, d)];
            }
        }
    }
    out
}
