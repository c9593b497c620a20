//! Binary mixture checkpoint: `"CGS1"`, count (u64), mode (u8), then 11
//! little-endian f64 per Gaussian in flat parameter order.

use std::path::Path;

use crate::error::{Error, Result};
use crate::gmm::{GaussianMixture, Mode, PARAMS_PER_GAUSSIAN};

pub const MAGIC: &[u8; 4] = b"CGS1";
const PREAMBLE: usize = 4 + 8 + 1;

/// Number of stored floats, `11·N`.
pub fn param_count(m: &GaussianMixture) -> usize {
    m.param_count()
}

pub fn encode_checkpoint(m: &GaussianMixture) -> Vec<u8> {
    let flat = m.to_flat();
    let mut out = Vec::with_capacity(PREAMBLE + 8 * flat.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(m.count() as u64).to_le_bytes());
    out.push(m.mode().as_byte());
    for v in flat {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<GaussianMixture> {
    if bytes.len() < PREAMBLE || &bytes[..4] != MAGIC {
        return Err(Error::Format("not a mixture checkpoint (bad magic)".into()));
    }
    let count = u64::from_le_bytes(bytes[4..12].try_into().unwrap());
    let mode = Mode::from_byte(bytes[12]).ok_or_else(|| Error::Format(format!("unknown mode byte {}", bytes[12])))?;
    if count == 0 {
        return Err(Error::Format("checkpoint holds zero Gaussians".into()));
    }
    let expected = usize::try_from(count)
        .ok()
        .and_then(|c| c.checked_mul(PARAMS_PER_GAUSSIAN * 8))
        .and_then(|n| n.checked_add(PREAMBLE))
        .ok_or_else(|| Error::Format(format!("implausible Gaussian count {count}")))?;
    if bytes.len() != expected {
        return Err(Error::Format(format!(
            "checkpoint holds {} bytes, header promises {expected} ({count} Gaussians)",
            bytes.len()
        )));
    }
    let flat: Vec<f64> = bytes[PREAMBLE..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    if flat.iter().any(|v| !v.is_finite()) {
        return Err(Error::Format("checkpoint contains non-finite parameters".into()));
    }
    GaussianMixture::from_flat(mode, &flat)
}

pub fn write_checkpoint(path: &Path, m: &GaussianMixture) -> Result<()> {
    std::fs::write(path, encode_checkpoint(m)).map_err(|e| Error::io_at(path, e))?;
    Ok(())
}

pub fn read_checkpoint(path: &Path) -> Result<GaussianMixture> {
    decode_checkpoint(&std::fs::read(path).map_err(|e| Error::io_at(path, e))?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridSpec;
    use crate::gmm::init_random;

    #[test]
    fn round_trip_is_bitwise() {
        let g = GridSpec::new(32, 0.5, 1.0).unwrap();
        for mode in [Mode::Anisotropic, Mode::Isotropic] {
            let m = init_random(17, 4, &g, mode).unwrap();
            let bytes = encode_checkpoint(&m);
            assert_eq!(&bytes[..4], b"CGS1");
            assert_eq!(bytes.len(), 13 + 8 * param_count(&m));
            let back = decode_checkpoint(&bytes).unwrap();
            assert_eq!(back.mode(), mode);
            let bits = |m: &GaussianMixture| m.to_flat().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(&back), bits(&m));
        }
    }

    #[test]
    fn param_count_is_eleven_per_gaussian() {
        let g = GridSpec::new(16, 0.5, 1.0).unwrap();
        assert_eq!(param_count(&init_random(30000, 0, &g, Mode::Anisotropic).unwrap()), 330000);
        assert_eq!(param_count(&init_random(1, 0, &g, Mode::Anisotropic).unwrap()), 11);
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let g = GridSpec::new(16, 0.5, 1.0).unwrap();
        let bytes = encode_checkpoint(&init_random(3, 0, &g, Mode::Anisotropic).unwrap());
        assert!(decode_checkpoint(&bytes[..bytes.len() - 8]).is_err());
        assert!(decode_checkpoint(b"CGS2").is_err());
        let mut bad_mode = bytes.clone();
        bad_mode[12] = 7;
        assert!(decode_checkpoint(&bad_mode).is_err());
        let mut zero = bytes[..13].to_vec();
        zero[4..12].copy_from_slice(&0u64.to_le_bytes());
        assert!(matches!(decode_checkpoint(&zero), Err(Error::Format(_))));
    }
}
