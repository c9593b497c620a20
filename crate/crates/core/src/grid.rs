use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Square pixel (or cubic voxel) discretization of the domain `[-E, E]`.
///
/// Pixel index `floor(D/2)` sits exactly on coordinate 0, the same origin the
/// FFT uses, for both even and odd `D`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    /// Pixels per side.
    pub size: usize,
    /// Half-width of the domain in normalized units.
    pub extent: f64,
    /// Ångström per pixel; only used when reporting resolution and CTF frequencies.
    pub pixel_size: f64,
}

pub const DEFAULT_EXTENT: f64 = 0.5;

impl GridSpec {
    pub fn new(size: usize, extent: f64, pixel_size: f64) -> Result<Self> {
        if size == 0 {
            return Err(Error::InvalidArgument("grid size must be positive".into()));
        }
        if !(extent.is_finite() && extent > 0.0) {
            return Err(Error::InvalidArgument(format!("grid extent must be positive, got {extent}")));
        }
        if !(pixel_size.is_finite() && pixel_size > 0.0) {
            return Err(Error::InvalidArgument(format!("pixel size must be positive, got {pixel_size}")));
        }
        Ok(Self { size, extent, pixel_size })
    }

    /// Pixel width in normalized units, `2E/D`.
    #[inline]
    pub fn pixel_width(&self) -> f64 {
        2.0 * self.extent / self.size as f64
    }

    #[inline]
    pub fn center_index(&self) -> usize {
        self.size / 2
    }

    /// Continuous coordinate of pixel index `i`.
    #[inline]
    pub fn coord(&self, i: usize) -> f64 {
        (i as f64 - self.center_index() as f64) * self.pixel_width()
    }

    /// Fractional pixel index of a continuous coordinate (inverse of [`GridSpec::coord`]).
    #[inline]
    pub fn index_of(&self, x: f64) -> f64 {
        x / self.pixel_width() + self.center_index() as f64
    }

    pub fn pixel_area(&self) -> f64 {
        let w = self.pixel_width();
        w * w
    }

    pub fn num_pixels(&self) -> usize {
        self.size * self.size
    }

    pub(crate) fn ensure_same(&self, other: &GridSpec) -> Result<()> {
        if self.size != other.size || self.extent != other.extent {
            return Err(Error::shape(
                format!("grid {}px extent {}", self.size, self.extent),
                format!("grid {}px extent {}", other.size, other.extent),
            ));
        }
        Ok(())
    }
}
