//! File formats: MRC volumes and stacks, mixture checkpoints, metadata,
//! run configuration and plain-text traces.

pub mod checkpoint;
pub mod config;
pub mod meta;
pub mod mrc;

pub use checkpoint::{param_count, read_checkpoint, write_checkpoint};
pub use config::{RunConfig, SimConfig};
pub use meta::{read_meta, write_meta, MetaRow, Orientation};
pub use mrc::{read_mrc, write_mrc, MrcData};

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::GridSpec;
use crate::image::RenderedImage;
use crate::train::{Dataset, ParticleRecord, TraceEntry};

/// Writes images as an MRC stack (mode 2, `nz` = image count).
pub fn write_stack(path: &Path, images: &[RenderedImage]) -> Result<()> {
    let first = images
        .first()
        .ok_or_else(|| Error::InvalidArgument("cannot write an empty stack".into()))?;
    let d = first.size();
    let mut data = Vec::with_capacity(images.len() * d * d);
    for img in images {
        first.ensure_same_shape(img)?;
        data.extend(img.pixels.iter().map(|&v| v as f32));
    }
    write_mrc(path, &MrcData::stack(d, images.len(), first.grid.pixel_size as f32, data)?)
}

/// Pairs stack images with metadata rows. The counts and image shape are
/// checked before any image is converted.
pub fn dataset_from(stack: &MrcData, rows: &[MetaRow], extent: f64) -> Result<Dataset> {
    if stack.nx != stack.ny {
        return Err(Error::Format(format!("stack images are {}x{}, expected square", stack.nx, stack.ny)));
    }
    if stack.nz != rows.len() {
        return Err(Error::Format(format!(
            "stack holds {} images but metadata has {} rows",
            stack.nz,
            rows.len()
        )));
    }
    let grid = GridSpec::new(stack.nx, extent, stack.pixel_size as f64)?;
    let records = rows
        .iter()
        .enumerate()
        .map(|(k, row)| {
            Ok(ParticleRecord {
                image: RenderedImage::from_pixels(grid, stack.section(k).iter().map(|&v| v as f64).collect())?,
                pose: row.pose()?,
                ctf: row.ctf,
                translation: row.translation,
            })
        })
        .collect::<Result<_>>()?;
    Ok(Dataset { grid, records })
}

pub fn load_dataset(stack: &Path, meta: &Path, extent: f64) -> Result<Dataset> {
    let rows = read_meta(meta)?;
    dataset_from(&read_mrc(stack)?, &rows, extent)
}

/// One line per step: `epoch step loss lr`.
pub fn format_trace(trace: &[TraceEntry]) -> String {
    let mut s = String::from("# epoch step loss lr\n");
    for e in trace {
        let _ = writeln!(s, "{} {} {:?} {:?}", e.epoch, e.step, e.loss, e.lr);
    }
    s
}

pub fn parse_trace(text: &str) -> Result<Vec<TraceEntry>> {
    text.lines()
        .filter(|l| !l.trim().is_empty() && !l.starts_with('#'))
        .map(|l| {
            let c: Vec<&str> = l.split_whitespace().collect();
            let bad = || Error::Format(format!("bad trace line '{l}'"));
            if c.len() != 4 {
                return Err(bad());
            }
            Ok(TraceEntry {
                epoch: c[0].parse().map_err(|_| bad())?,
                step: c[1].parse().map_err(|_| bad())?,
                loss: c[2].parse().map_err(|_| bad())?,
                lr: c[3].parse().map_err(|_| bad())?,
            })
        })
        .collect()
}
