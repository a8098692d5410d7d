//! Network checkpoints.
//!
//! Layout, all little-endian: magic `GSNW`, `u32` format version, `u32`
//! densify factor, `u32` layer count, per layer `u32` inputs and `u32`
//! outputs, `u64` scalar count, then every layer's weights (row-major) and
//! bias as `f64`.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::net::{Affine, Architecture, NetworkWeights};
use crate::types::PRIMITIVE_DIM;

pub const MAGIC: &[u8; 4] = b"GSNW";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CheckpointManifest {
    pub format_version: u32,
    pub layer_dims: Vec<(usize, usize)>,
    pub densify: usize,
    pub scalar_count: u64,
}

impl CheckpointManifest {
    pub fn for_weights(weights: &NetworkWeights) -> Self {
        CheckpointManifest {
            format_version: FORMAT_VERSION,
            layer_dims: weights.layers.iter().map(|l| (l.inputs, l.outputs)).collect(),
            densify: weights.arch.densify,
            scalar_count: weights.param_count() as u64,
        }
    }

    pub fn expected_scalars(&self) -> u64 {
        self.layer_dims.iter().map(|(i, o)| (i * o + o) as u64).sum()
    }
}

pub fn encode_weights(weights: &NetworkWeights) -> Vec<u8> {
    let m = CheckpointManifest::for_weights(weights);
    let mut out = Vec::with_capacity(32 + 8 * weights.param_count());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&m.format_version.to_le_bytes());
    out.extend_from_slice(&(m.densify as u32).to_le_bytes());
    out.extend_from_slice(&(m.layer_dims.len() as u32).to_le_bytes());
    for (i, o) in &m.layer_dims {
        out.extend_from_slice(&(*i as u32).to_le_bytes());
        out.extend_from_slice(&(*o as u32).to_le_bytes());
    }
    out.extend_from_slice(&m.scalar_count.to_le_bytes());
    for p in weights.params() {
        out.extend_from_slice(&p.to_le_bytes());
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        let end = self.pos.checked_add(n).filter(|e| *e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::CheckpointIncompatible("truncated checkpoint".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn decode_weights(bytes: &[u8]) -> Result<NetworkWeights> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(Error::CheckpointIncompatible("bad magic, not a weights checkpoint".into()));
    }
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return Err(Error::CheckpointIncompatible(format!("format version {version}, expected {FORMAT_VERSION}")));
    }
    let densify = r.u32()? as usize;
    let layers = r.u32()? as usize;
    if layers > 64 {
        return Err(Error::CheckpointIncompatible(format!("implausible layer count {layers}")));
    }
    let mut dims = Vec::with_capacity(layers);
    for _ in 0..layers {
        dims.push((r.u32()? as usize, r.u32()? as usize));
    }
    let manifest = CheckpointManifest { format_version: version, layer_dims: dims, densify, scalar_count: r.u64()? };
    if manifest.scalar_count != manifest.expected_scalars() {
        return Err(Error::CheckpointIncompatible(format!(
            "manifest declares {} scalars but layer dims imply {}",
            manifest.scalar_count,
            manifest.expected_scalars()
        )));
    }
    let arch = Architecture::from_layer_dims(&manifest.layer_dims)?;
    if arch.densify != densify || arch.output_width() != densify * PRIMITIVE_DIM {
        return Err(Error::CheckpointIncompatible(format!(
            "densify factor {densify} does not match output width {}",
            manifest.layer_dims.last().map(|d| d.1).unwrap_or(0)
        )));
    }
    let remaining = bytes.len() - r.pos;
    if remaining as u64 != 8 * manifest.scalar_count {
        return Err(Error::CheckpointIncompatible(format!(
            "parameter block has {remaining} bytes, manifest needs {}",
            8 * manifest.scalar_count
        )));
    }
    let mut weights = NetworkWeights {
        arch,
        layers: manifest.layer_dims.iter().map(|(i, o)| Affine::zeros(*i, *o)).collect(),
    };
    for p in weights.params_mut() {
        *p = f64::from_le_bytes(r.take(8)?.try_into().unwrap());
    }
    if !weights.is_finite() {
        return Err(Error::CheckpointIncompatible("non-finite parameter".into()));
    }
    Ok(weights)
}

pub fn save_weights(weights: &NetworkWeights, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_weights(weights)).map_err(|e| Error::io(path, e))
}

pub fn load_weights(path: impl AsRef<Path>) -> Result<NetworkWeights> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_weights(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bitwise() {
        let w = NetworkWeights::random(Architecture::default(), 9);
        let back = decode_weights(&encode_weights(&w)).unwrap();
        assert_eq!(back.arch, w.arch);
        assert!(back.params().zip(w.params()).all(|(a, b)| a.to_bits() == b.to_bits()));
        assert_eq!(back.param_count(), 6 * 16 + 16 + 64 * 128 + 128 + 128 * 96 + 96 + 96 * 48 + 48 + 48 * 70 + 70);
    }

    #[test]
    fn edited_layer_dims_are_rejected() {
        let w = NetworkWeights::random(Architecture::default(), 9);
        let mut bytes = encode_weights(&w);
        // First layer's output width lives after magic, version, densify, count, inputs.
        bytes[20..24].copy_from_slice(&17u32.to_le_bytes());
        assert!(matches!(decode_weights(&bytes), Err(Error::CheckpointIncompatible(_))));
    }

    #[test]
    fn version_and_magic_checked() {
        let w = NetworkWeights::zeros(Architecture::default());
        let mut bytes = encode_weights(&w);
        bytes[4] = 2;
        assert!(matches!(decode_weights(&bytes), Err(Error::CheckpointIncompatible(_))));
        let mut bytes = encode_weights(&w);
        bytes[0] = b'X';
        assert!(matches!(decode_weights(&bytes), Err(Error::CheckpointIncompatible(_))));
        let bytes = encode_weights(&w);
        assert!(decode_weights(&bytes[..bytes.len() - 1]).is_err());
    }

    #[test]
    fn custom_hidden_widths_round_trip() {
        let arch = Architecture { decoder_hidden: [40, 20], densify: 3, ..Architecture::default() };
        let w = NetworkWeights::random(arch, 1);
        assert_eq!(decode_weights(&encode_weights(&w)).unwrap(), w);
    }
}
