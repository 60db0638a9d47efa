//! Chip file framing.
//!
//! ```text
//! "FCHP" | u16 version = 1 | u16 reserved = 0 | u32 W | u32 H | u32 C | W·H·C × f32
//! ```
//! All integers and floats are little-endian; samples are row-major, channel-last.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const CHIP_MAGIC: [u8; 4] = *b"FCHP";
pub const CHIP_VERSION: u16 = 1;
pub const HEADER_LEN: usize = 20;

/// Appends one frame holding `data` laid out as `height × width × channels`.
pub fn write_frame(out: &mut Vec<u8>, (height, width, channels): (usize, usize, usize), data: &[f32]) {
    debug_assert_eq!(height * width * channels, data.len());
    out.extend_from_slice(&CHIP_MAGIC);
    out.extend_from_slice(&CHIP_VERSION.to_le_bytes());
    out.extend_from_slice(&0u16.to_le_bytes());
    for d in [width, height, channels] {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    out.reserve(data.len() * 4);
    for v in data {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

/// Parses one frame from the front of `bytes`, returning `(H, W, C)`, the data
/// and the number of bytes consumed. `path` only labels errors.
pub fn read_frame(bytes: &[u8], path: &Path) -> Result<((usize, usize, usize), Vec<f32>, usize)> {
    if bytes.len() < 4 || bytes[..4] != CHIP_MAGIC {
        return Err(Error::BadMagic { path: path.into() });
    }
    if bytes.len() < HEADER_LEN {
        return Err(Error::Truncated {
            path: path.into(),
            expected: HEADER_LEN as u64,
            found: bytes.len() as u64,
        });
    }
    let u16_at = |i: usize| u16::from_le_bytes([bytes[i], bytes[i + 1]]);
    let u32_at = |i: usize| u32::from_le_bytes([bytes[i], bytes[i + 1], bytes[i + 2], bytes[i + 3]]) as usize;
    let version = u16_at(4);
    if version != CHIP_VERSION {
        return Err(Error::Version {
            path: path.into(),
            found: version,
            expected: CHIP_VERSION,
        });
    }
    if u16_at(6) != 0 {
        return Err(Error::format(path, "reserved header field is not zero"));
    }
    let (w, h, c) = (u32_at(8), u32_at(12), u32_at(16));
    if w == 0 || h == 0 || c == 0 {
        return Err(Error::format(path, format!("zero extent in header {w}x{h}x{c}")));
    }
    let payload = (w as u64) * (h as u64) * (c as u64) * 4;
    let available = (bytes.len() - HEADER_LEN) as u64;
    if available < payload {
        return Err(Error::Truncated {
            path: path.into(),
            expected: HEADER_LEN as u64 + payload,
            found: bytes.len() as u64,
        });
    }
    let end = HEADER_LEN + payload as usize;
    let data = bytes[HEADER_LEN..end]
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .collect();
    Ok(((h, w, c), data, end))
}

pub fn encode_chip(chip: &Tensor) -> Result<Vec<u8>> {
    let dims = chip.image_dims()?;
    let mut out = Vec::with_capacity(HEADER_LEN + chip.len() * 4);
    write_frame(&mut out, dims, chip.data());
    Ok(out)
}

pub fn save_chip(path: &Path, chip: &Tensor) -> Result<()> {
    let bytes = encode_chip(chip)?;
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&bytes).map_err(|e| Error::io(path, e))
}

pub fn load_chip(path: &Path) -> Result<Tensor> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let ((h, w, c), data, used) = read_frame(&bytes, path)?;
    if used != bytes.len() {
        return Err(Error::format(path, format!("{} trailing bytes after chip", bytes.len() - used)));
    }
    Tensor::new(vec![h, w, c], data)
}
