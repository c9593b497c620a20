use nalgebra::{Matrix3, Vector3};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::gmm::GaussianMixture;
use crate::grid::GridSpec;
use crate::io::mrc::MrcData;
use crate::splat::{posed, Pose, RasterSettings};

/// `D³` density samples, x fastest, then y, then z.
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelVolume {
    pub grid: GridSpec,
    pub voxels: Vec<f64>,
}

impl VoxelVolume {
    pub fn zeros(grid: GridSpec) -> Self {
        Self {
            grid,
            voxels: vec![0.0; grid.size.pow(3)],
        }
    }

    pub fn from_voxels(grid: GridSpec, voxels: Vec<f64>) -> Result<Self> {
        if voxels.len() != grid.size.pow(3) {
            return Err(Error::shape(format!("{} voxels", grid.size.pow(3)), voxels.len()));
        }
        if voxels.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("volume contains non-finite voxels".into()));
        }
        Ok(Self { grid, voxels })
    }

    pub fn size(&self) -> usize {
        self.grid.size
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        let d = self.grid.size;
        (z * d + y) * d + x
    }

    pub fn get(&self, x: usize, y: usize, z: usize) -> f64 {
        self.voxels[self.index(x, y, z)]
    }

    pub fn sum(&self) -> f64 {
        self.voxels.iter().sum()
    }

    pub fn max(&self) -> f64 {
        self.voxels.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Σ voxels · (2E/D)³.
    pub fn mass(&self) -> f64 {
        self.sum() * self.grid.pixel_width().powi(3)
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            grid: self.grid,
            voxels: self.voxels.iter().map(|v| v * factor).collect(),
        }
    }

    pub fn to_mrc(&self) -> MrcData {
        MrcData::volume(self.size(), self.grid.pixel_size as f32, self.voxels.iter().map(|&v| v as f32).collect())
            .expect("volume dimensions are consistent")
    }

    /// Reads a cubic MRC volume; the normalized extent is not stored in MRC
    /// and must be supplied.
    pub fn from_mrc(m: &MrcData, extent: f64) -> Result<Self> {
        if m.nx != m.ny || m.nx != m.nz {
            return Err(Error::shape(format!("a cubic volume ({0}x{0}x{0})", m.nx), format!("{}x{}x{}", m.nx, m.ny, m.nz)));
        }
        let grid = GridSpec::new(m.nx, extent, m.pixel_size as f64)?;
        Self::from_voxels(grid, m.data.iter().map(|&v| v as f64).collect())
    }

    /// Sum along z, as an image indexed `[y * D + x]`.
    pub fn project_z(&self) -> Vec<f64> {
        let d = self.size();
        let mut out = vec![0.0; d * d];
        for z in 0..d {
            let slab = &self.voxels[z * d * d..(z + 1) * d * d];
            out.iter_mut().zip(slab).for_each(|(o, v)| *o += v);
        }
        out
    }
}

struct Blob {
    mean: Vector3<f64>,
    inv: Matrix3<f64>,
    norm: f64,
    lo: [usize; 3],
    hi: [usize; 3],
}

fn index_window(center: f64, half: f64, grid: &GridSpec) -> Option<(usize, usize)> {
    let lo = grid.index_of(center - half).ceil().max(0.0);
    let hi = grid.index_of(center + half).floor().min(grid.size as f64 - 1.0);
    (lo <= hi).then_some((lo as usize, hi as usize))
}

fn blobs(m: &GaussianMixture, pose: &Pose, grid: &GridSpec, k: f64) -> Result<Vec<Blob>> {
    let mut out = Vec::with_capacity(m.count());
    for (i, p) in m.params().iter().enumerate() {
        let cg = posed(&p.mean, &m.covariance(i)?, p.amplitude(), pose);
        let det = cg.cov.determinant();
        let inv = cg.cov.try_inverse().filter(|_| det > 0.0).ok_or(Error::DegenerateSplat)?;
        let mut lo = [0; 3];
        let mut hi = [0; 3];
        let mut visible = true;
        for a in 0..3 {
            match index_window(cg.mean[a], k * cg.cov[(a, a)].sqrt(), grid) {
                Some((l, h)) => {
                    lo[a] = l;
                    hi[a] = h;
                }
                None => visible = false,
            }
        }
        if visible {
            out.push(Blob {
                mean: cg.mean,
                inv,
                norm: cg.amplitude / ((2.0 * std::f64::consts::PI).powf(1.5) * det.sqrt()),
                lo,
                hi,
            });
        }
    }
    Ok(out)
}

/// Point samples of the mixture density at voxel centers.
pub fn voxelize(m: &GaussianMixture, grid: &GridSpec) -> Result<VoxelVolume> {
    voxelize_posed(m, &Pose::identity(), grid)
}

/// Voxelizes the mixture after applying `pose` (rotation, then translation).
/// Each Gaussian is evaluated inside the same Mahalanobis radius the
/// rasterizer uses.
pub fn voxelize_posed(m: &GaussianMixture, pose: &Pose, grid: &GridSpec) -> Result<VoxelVolume> {
    let k = RasterSettings::default().cull_sigma;
    let blobs = blobs(m, pose, grid, k)?;
    let d = grid.size;
    let cull = k * k;
    let coords: Vec<f64> = (0..d).map(|i| grid.coord(i)).collect();
    let mut voxels = vec![0.0; d * d * d];
    voxels.par_chunks_mut(d * d).enumerate().for_each(|(z, slab)| {
        let cz = coords[z];
        for b in blobs.iter().filter(|b| b.lo[2] <= z && z <= b.hi[2]) {
            let dz = cz - b.mean.z;
            for y in b.lo[1]..=b.hi[1] {
                let dy = coords[y] - b.mean.y;
                let row = &mut slab[y * d..(y + 1) * d];
                for x in b.lo[0]..=b.hi[0] {
                    let r = Vector3::new(coords[x] - b.mean.x, dy, dz);
                    let q = r.dot(&(b.inv * r));
                    if q <= cull {
                        row[x] += b.norm * (-0.5 * q).exp();
                    }
                }
            }
        }
    });
    Ok(VoxelVolume { grid: *grid, voxels })
}
