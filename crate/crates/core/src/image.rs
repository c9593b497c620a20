use crate::error::{Error, Result};
use crate::grid::GridSpec;

/// A `D×D` real image, row-major (row index = y, column index = x).
///
/// For rendered projections, pixels are point samples of the projected density
/// (per unit area, normalized units) at pixel centers.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderedImage {
    pub grid: GridSpec,
    pub pixels: Vec<f64>,
}

impl RenderedImage {
    pub fn zeros(grid: GridSpec) -> Self {
        Self {
            pixels: vec![0.0; grid.num_pixels()],
            grid,
        }
    }

    pub fn from_pixels(grid: GridSpec, pixels: Vec<f64>) -> Result<Self> {
        if pixels.len() != grid.num_pixels() {
            return Err(Error::shape(
                format!("{} pixels ({}x{})", grid.num_pixels(), grid.size, grid.size),
                pixels.len(),
            ));
        }
        if let Some(k) = pixels.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!("non-finite pixel at index {k}")));
        }
        Ok(Self { grid, pixels })
    }

    #[inline]
    pub fn size(&self) -> usize {
        self.grid.size
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.pixels[row * self.grid.size + col]
    }

    #[inline]
    pub fn get_mut(&mut self, row: usize, col: usize) -> &mut f64 {
        &mut self.pixels[row * self.grid.size + col]
    }

    pub fn sum(&self) -> f64 {
        self.pixels.iter().sum()
    }

    pub fn max(&self) -> f64 {
        self.pixels.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.pixels.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `(row, col)` of the largest pixel.
    pub fn argmax(&self) -> (usize, usize) {
        let k = self
            .pixels
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(k, _)| k)
            .unwrap_or(0);
        (k / self.grid.size, k % self.grid.size)
    }

    pub fn dot(&self, other: &RenderedImage) -> f64 {
        self.pixels.iter().zip(&other.pixels).map(|(a, b)| a * b).sum()
    }

    pub fn max_abs_diff(&self, other: &RenderedImage) -> f64 {
        self.pixels
            .iter()
            .zip(&other.pixels)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    /// Total mass, `Σ pixels · pixel_area`.
    pub fn mass(&self) -> f64 {
        self.sum() * self.grid.pixel_area()
    }

    pub(crate) fn ensure_same_shape(&self, other: &RenderedImage) -> Result<()> {
        self.grid.ensure_same(&other.grid)
    }
}
