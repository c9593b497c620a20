//! MRC2014 reader/writer, little-endian, mode 2 (float32) only.
//!
//! Volumes and particle stacks share the layout: x fastest, then y, then
//! z (or image index for stacks).

use std::path::Path;

use crate::error::{Error, Result};

pub const HEADER_BYTES: usize = 1024;
const MODE_FLOAT32: i32 = 2;
const MACHINE_STAMP_LE: [u8; 4] = [0x44, 0x44, 0x00, 0x00];
const MAP_TAG: &[u8; 4] = b"MAP ";
const NVERSION: i32 = 20140;

#[derive(Debug, Clone, PartialEq)]
pub struct MrcData {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
    /// Å per pixel, as stored (float32).
    pub pixel_size: f32,
    /// Space group 1 for volumes, 0 for image stacks.
    pub space_group: i32,
    pub data: Vec<f32>,
}

impl MrcData {
    pub fn volume(n: usize, pixel_size: f32, data: Vec<f32>) -> Result<Self> {
        Self::checked(n, n, n, pixel_size, 1, data)
    }

    pub fn stack(d: usize, count: usize, pixel_size: f32, data: Vec<f32>) -> Result<Self> {
        Self::checked(d, d, count, pixel_size, 0, data)
    }

    fn checked(nx: usize, ny: usize, nz: usize, pixel_size: f32, space_group: i32, data: Vec<f32>) -> Result<Self> {
        if nx == 0 || ny == 0 || nz == 0 {
            return Err(Error::InvalidArgument("MRC dimensions must be positive".into()));
        }
        if data.len() != nx * ny * nz {
            return Err(Error::shape(format!("{} samples ({nx}x{ny}x{nz})", nx * ny * nz), data.len()));
        }
        if !(pixel_size > 0.0 && pixel_size.is_finite()) {
            return Err(Error::InvalidArgument(format!("pixel size must be positive, got {pixel_size}")));
        }
        Ok(Self {
            nx,
            ny,
            nz,
            pixel_size,
            space_group,
            data,
        })
    }

    /// Slice `k` along z (one image of a stack).
    pub fn section(&self, k: usize) -> &[f32] {
        let n = self.nx * self.ny;
        &self.data[k * n..(k + 1) * n]
    }
}

fn put_i32(h: &mut [u8], word: usize, v: i32) {
    h[word * 4..word * 4 + 4].copy_from_slice(&v.to_le_bytes());
}

fn put_f32(h: &mut [u8], word: usize, v: f32) {
    h[word * 4..word * 4 + 4].copy_from_slice(&v.to_le_bytes());
}

fn get_i32(h: &[u8], word: usize) -> i32 {
    i32::from_le_bytes(h[word * 4..word * 4 + 4].try_into().unwrap())
}

fn get_f32(h: &[u8], word: usize) -> f32 {
    f32::from_le_bytes(h[word * 4..word * 4 + 4].try_into().unwrap())
}

pub fn encode_mrc(m: &MrcData) -> Vec<u8> {
    let mut h = vec![0u8; HEADER_BYTES];
    let dims = [m.nx, m.ny, m.nz];
    for (w, &n) in dims.iter().enumerate() {
        put_i32(&mut h, w, n as i32);
        // mx, my, mz: sampling equals the dimensions
        put_i32(&mut h, 7 + w, n as i32);
        put_f32(&mut h, 10 + w, (n as f64 * m.pixel_size as f64) as f32);
        put_f32(&mut h, 13 + w, 90.0);
        put_i32(&mut h, 16 + w, w as i32 + 1);
    }
    put_i32(&mut h, 3, MODE_FLOAT32);
    let (mut lo, mut hi, mut sum) = (f32::INFINITY, f32::NEG_INFINITY, 0.0f64);
    for &v in &m.data {
        lo = lo.min(v);
        hi = hi.max(v);
        sum += v as f64;
    }
    let mean = sum / m.data.len() as f64;
    let rms = (m.data.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / m.data.len() as f64).sqrt();
    put_f32(&mut h, 19, lo);
    put_f32(&mut h, 20, hi);
    put_f32(&mut h, 21, mean as f32);
    put_i32(&mut h, 22, m.space_group);
    put_i32(&mut h, 27, NVERSION);
    h[208..212].copy_from_slice(MAP_TAG);
    h[212..216].copy_from_slice(&MACHINE_STAMP_LE);
    put_f32(&mut h, 54, rms as f32);
    h.reserve(m.data.len() * 4);
    for v in &m.data {
        h.extend_from_slice(&v.to_le_bytes());
    }
    h
}

pub fn decode_mrc(bytes: &[u8]) -> Result<MrcData> {
    if bytes.len() < HEADER_BYTES {
        return Err(Error::Format(format!("MRC file truncated: {} bytes, header needs {HEADER_BYTES}", bytes.len())));
    }
    let h = &bytes[..HEADER_BYTES];
    if h[212] == 0x11 {
        return Err(Error::Format("big-endian MRC files are not supported".into()));
    }
    let mode = get_i32(h, 3);
    if mode != MODE_FLOAT32 {
        return Err(Error::UnsupportedMrcMode(mode));
    }
    let dims: Vec<i32> = (0..3).map(|w| get_i32(h, w)).collect();
    if dims.iter().any(|&n| n <= 0) {
        return Err(Error::Format(format!("invalid MRC dimensions {dims:?}")));
    }
    let axes: Vec<i32> = (16..19).map(|w| get_i32(h, w)).collect();
    if axes != [1, 2, 3] && axes != [0, 0, 0] {
        return Err(Error::Format(format!("unsupported MRC axis order {axes:?}")));
    }
    let (nx, ny, nz) = (dims[0] as usize, dims[1] as usize, dims[2] as usize);
    let nsymbt = get_i32(h, 23);
    if nsymbt < 0 {
        return Err(Error::Format(format!("negative extended header size {nsymbt}")));
    }
    let start = HEADER_BYTES + nsymbt as usize;
    let count = nx * ny * nz;
    let end = start + count * 4;
    if bytes.len() < end {
        return Err(Error::Format(format!(
            "MRC file truncated: expected {end} bytes for {nx}x{ny}x{nz}, found {}",
            bytes.len()
        )));
    }
    let data = bytes[start..end]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let mx = get_i32(h, 7);
    let cella = get_f32(h, 10);
    let pixel_size = if mx > 0 && cella > 0.0 {
        (cella as f64 / mx as f64) as f32
    } else {
        1.0
    };
    Ok(MrcData {
        nx,
        ny,
        nz,
        pixel_size,
        space_group: get_i32(h, 22),
        data,
    })
}

pub fn write_mrc(path: &Path, m: &MrcData) -> Result<()> {
    std::fs::write(path, encode_mrc(m)).map_err(|e| Error::io_at(path, e))?;
    Ok(())
}

pub fn read_mrc(path: &Path) -> Result<MrcData> {
    decode_mrc(&std::fs::read(path).map_err(|e| Error::io_at(path, e))?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_volume(n: usize, seed: u64) -> MrcData {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        MrcData::volume(n, 1.34, (0..n * n * n).map(|_| rng.random_range(-5.0f32..5.0)).collect()).unwrap()
    }

    #[test]
    fn volume_round_trip_is_bitwise() {
        let v = random_volume(32, 1);
        let bytes = encode_mrc(&v);
        assert_eq!(bytes.len(), HEADER_BYTES + 4 * 32 * 32 * 32);
        let back = decode_mrc(&bytes).unwrap();
        assert_eq!(back.data.iter().map(|f| f.to_bits()).collect::<Vec<_>>(), v.data.iter().map(|f| f.to_bits()).collect::<Vec<_>>());
        assert_eq!(back, v);
    }

    #[test]
    fn header_layout() {
        let bytes = encode_mrc(&random_volume(8, 2));
        assert_eq!(&bytes[208..212], b"MAP ");
        assert_eq!(&bytes[212..214], &[0x44, 0x44]);
        assert_eq!(get_i32(&bytes, 3), 2);
        assert_eq!(get_i32(&bytes, 0), 8);
        assert_eq!(get_i32(&bytes, 22), 1);
    }

    #[test]
    fn pixel_size_round_trips_at_f32() {
        for n in [16, 32, 33, 64, 100, 128, 256] {
            let back = decode_mrc(&encode_mrc(&random_volume(n, 3).clone())).unwrap();
            assert_eq!(back.pixel_size, 1.34f32, "n = {n}");
        }
    }

    #[test]
    fn other_modes_are_rejected() {
        let mut bytes = encode_mrc(&random_volume(4, 4));
        bytes[12..16].copy_from_slice(&1i32.to_le_bytes());
        let err = decode_mrc(&bytes).unwrap_err();
        assert!(matches!(err, Error::UnsupportedMrcMode(1)));
        assert!(err.to_string().contains("mode 1"));
    }

    #[test]
    fn truncation_and_bad_dimensions() {
        let bytes = encode_mrc(&random_volume(4, 5));
        assert!(matches!(decode_mrc(&bytes[..bytes.len() - 1]), Err(Error::Format(_))));
        assert!(matches!(decode_mrc(&bytes[..100]), Err(Error::Format(_))));
        let mut neg = bytes.clone();
        neg[0..4].copy_from_slice(&(-3i32).to_le_bytes());
        assert!(decode_mrc(&neg).is_err());
        assert!(MrcData::volume(4, 1.0, vec![0.0; 63]).is_err());
    }

    #[test]
    fn stacks_keep_sections() {
        let data: Vec<f32> = (0..3 * 16).map(|v| v as f32).collect();
        let s = MrcData::stack(4, 3, 2.0, data).unwrap();
        let back = decode_mrc(&encode_mrc(&s)).unwrap();
        assert_eq!(back.nz, 3);
        assert_eq!(back.space_group, 0);
        assert_eq!(back.section(2)[0], 32.0);
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("v.mrc");
        let v = random_volume(6, 6);
        write_mrc(&p, &v).unwrap();
        assert_eq!(read_mrc(&p).unwrap(), v);
    }
}
