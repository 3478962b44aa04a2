//! Bitstream container: a fixed little-endian header followed by
//! length-prefixed per-patch segments (hyper-latent bytes, then latent
//! bytes).

use crate::error::{Error, Result};
use std::io::Read;
use std::path::Path;

pub const BITSTREAM_MAGIC: &[u8; 4] = b"FPIC";
pub const BITSTREAM_VERSION: u8 = 1;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BitstreamHeader {
    pub version: u8,
    /// Pre-padding preprocessed image dimensions.
    pub width: u16,
    pub height: u16,
    pub d: u16,
    pub grid_rows: u16,
    pub grid_cols: u16,
    pub model_id: [u8; 16],
    pub lambda_index: u8,
    pub patch_size: u16,
    pub patch_count: u16,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PatchSegment {
    pub z: Vec<u8>,
    pub y: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Bitstream {
    pub header: BitstreamHeader,
    pub patches: Vec<PatchSegment>,
}

impl Bitstream {
    /// Container layout, byte-exact:
    /// magic "FPIC" | u8 version | u16 width | u16 height | u16 d |
    /// u16 grid_rows | u16 grid_cols | model_id[16] | u8 lambda_index |
    /// u16 patch_size | u16 patch_count | patch_count segments of
    /// { u32 seg_len | u32 z_len | z bytes | y bytes }.
    pub fn to_bytes(&self) -> Vec<u8> {
        let h = &self.header;
        let mut out = Vec::new();
        out.extend_from_slice(BITSTREAM_MAGIC);
        out.push(h.version);
        out.extend_from_slice(&h.width.to_le_bytes());
        out.extend_from_slice(&h.height.to_le_bytes());
        out.extend_from_slice(&h.d.to_le_bytes());
        out.extend_from_slice(&h.grid_rows.to_le_bytes());
        out.extend_from_slice(&h.grid_cols.to_le_bytes());
        out.extend_from_slice(&h.model_id);
        out.push(h.lambda_index);
        out.extend_from_slice(&h.patch_size.to_le_bytes());
        out.extend_from_slice(&h.patch_count.to_le_bytes());
        for p in &self.patches {
            let seg_len = 4 + p.z.len() + p.y.len();
            out.extend_from_slice(&(seg_len as u32).to_le_bytes());
            out.extend_from_slice(&(p.z.len() as u32).to_le_bytes());
            out.extend_from_slice(&p.z);
            out.extend_from_slice(&p.y);
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Bitstream> {
        let mut cur = std::io::Cursor::new(bytes);
        let mut magic = [0u8; 4];
        cur.read_exact(&mut magic).map_err(|_| Error::stream("bitstream: short header"))?;
        if &magic != BITSTREAM_MAGIC {
            return Err(Error::stream("bitstream: bad magic"));
        }
        let mut b = [0u8; 1];
        let mut u16b = [0u8; 2];
        let mut u32b = [0u8; 4];
        macro_rules! ru8 {
            () => {{
                cur.read_exact(&mut b).map_err(|_| Error::stream("bitstream: short header"))?;
                b[0]
            }};
        }
        macro_rules! ru16 {
            () => {{
                cur.read_exact(&mut u16b).map_err(|_| Error::stream("bitstream: short header"))?;
                u16::from_le_bytes(u16b)
            }};
        }
        macro_rules! ru32 {
            () => {{
                cur.read_exact(&mut u32b).map_err(|_| Error::stream("bitstream: short segment"))?;
                u32::from_le_bytes(u32b)
            }};
        }
        let version = ru8!();
        if version != BITSTREAM_VERSION {
            return Err(Error::stream(format!("bitstream: unsupported version {version}")));
        }
        let width = ru16!();
        let height = ru16!();
        let d = ru16!();
        let grid_rows = ru16!();
        let grid_cols = ru16!();
        let mut model_id = [0u8; 16];
        cur.read_exact(&mut model_id).map_err(|_| Error::stream("bitstream: short header"))?;
        let lambda_index = ru8!();
        let patch_size = ru16!();
        let patch_count = ru16!();
        let mut patches = Vec::with_capacity(usize::from(patch_count));
        for i in 0..patch_count {
            let seg_len = ru32!() as usize;
            let z_len = ru32!() as usize;
            if z_len + 4 > seg_len {
                return Err(Error::stream(format!("bitstream: patch {i}: bad segment lengths")));
            }
            let mut z = vec![0u8; z_len];
            cur.read_exact(&mut z)
                .map_err(|_| Error::stream(format!("bitstream: patch {i}: truncated z segment")))?;
            let mut y = vec![0u8; seg_len - 4 - z_len];
            cur.read_exact(&mut y)
                .map_err(|_| Error::stream(format!("bitstream: patch {i}: truncated y segment")))?;
            patches.push(PatchSegment { z, y });
        }
        let mut rest = Vec::new();
        cur.read_to_end(&mut rest).ok();
        if !rest.is_empty() {
            return Err(Error::stream(format!(
                "bitstream: {} trailing bytes after the last segment",
                rest.len()
            )));
        }
        Ok(Bitstream {
            header: BitstreamHeader {
                version,
                width,
                height,
                d,
                grid_rows,
                grid_cols,
                model_id,
                lambda_index,
                patch_size,
                patch_count,
            },
            patches,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Bitstream> {
        Bitstream::from_bytes(&std::fs::read(path)?)
    }

    /// Total container size in bits (header plus every segment); this is
    /// the bit count that feeds bpp.
    pub fn total_bits(&self) -> u64 {
        self.to_bytes().len() as u64 * 8
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Bitstream {
        Bitstream {
            header: BitstreamHeader {
                version: BITSTREAM_VERSION,
                width: 3168,
                height: 2016,
                d: 48,
                grid_rows: 42,
                grid_cols: 66,
                model_id: [7; 16],
                lambda_index: 3,
                patch_size: 384,
                patch_count: 2,
            },
            patches: vec![
                PatchSegment { z: vec![1, 2, 3], y: vec![4, 5] },
                PatchSegment { z: vec![], y: vec![9; 10] },
            ],
        }
    }

    #[test]
    fn roundtrip_byte_exact() {
        let bs = sample();
        let bytes = bs.to_bytes();
        let back = Bitstream::from_bytes(&bytes).unwrap();
        assert_eq!(bs, back);
        assert_eq!(back.to_bytes(), bytes);
        // fixed header size: 4+1+2*5+16+1+2+2 = 36
        assert_eq!(bytes.len(), 36 + (8 + 3 + 2) + (8 + 10));
        assert_eq!(bs.total_bits(), bytes.len() as u64 * 8);
    }

    #[test]
    fn corruption_detected() {
        let bytes = sample().to_bytes();
        assert!(Bitstream::from_bytes(&bytes[..bytes.len() - 3]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'Z';
        assert!(Bitstream::from_bytes(&bad).is_err());
        let mut extra = bytes;
        extra.push(0);
        assert!(Bitstream::from_bytes(&extra).is_err());
    }
}
