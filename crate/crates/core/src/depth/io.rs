//! On-disk formats: the native `.dmf` depth container and 16-bit PGM import.
//!
//! `.dmf` layout, little-endian: magic `DMF1`, `u32` height, `u32` width,
//! `height*width` row-major `f32` values, then `height*width` mask bytes
//! (0 or 1). Values round-trip bit-exactly.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};

use super::map::DepthMap;

const MAGIC: &[u8; 4] = b"DMF1";

pub fn save_dmf(path: &Path, d: &DepthMap) -> Result<()> {
    let f = File::create(path)?;
    let mut w = BufWriter::new(f);
    w.write_all(MAGIC)?;
    w.write_all(&(d.height() as u32).to_le_bytes())?;
    w.write_all(&(d.width() as u32).to_le_bytes())?;
    for &v in d.values.iter() {
        w.write_all(&v.to_le_bytes())?;
    }
    for &m in d.mask.iter() {
        w.write_all(&[u8::from(m)])?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_dmf(path: &Path) -> Result<DepthMap> {
    let f = File::open(path)
        .map_err(|e| Error::data(format!("cannot open {}: {e}", path.display())))?;
    let mut r = BufReader::new(f);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)
        .map_err(|_| Error::format("dmf truncated before magic"))?;
    if &magic != MAGIC {
        return Err(Error::format("bad dmf magic"));
    }
    let mut b4 = [0u8; 4];
    r.read_exact(&mut b4)
        .map_err(|_| Error::format("dmf truncated in header"))?;
    let h = u32::from_le_bytes(b4) as usize;
    r.read_exact(&mut b4)
        .map_err(|_| Error::format("dmf truncated in header"))?;
    let w = u32::from_le_bytes(b4) as usize;
    if h == 0 || w == 0 {
        return Err(Error::format("dmf has zero dimension"));
    }
    let n = h * w;
    let mut values = Vec::with_capacity(n);
    for _ in 0..n {
        r.read_exact(&mut b4)
            .map_err(|_| Error::format("dmf shorter than header implies"))?;
        values.push(f32::from_le_bytes(b4));
    }
    let mut mask_bytes = vec![0u8; n];
    r.read_exact(&mut mask_bytes)
        .map_err(|_| Error::format("dmf shorter than header implies"))?;
    let mut mask = Vec::with_capacity(n);
    for b in mask_bytes {
        match b {
            0 => mask.push(false),
            1 => mask.push(true),
            other => return Err(Error::format(format!("dmf mask byte {other} not 0/1"))),
        }
    }
    Ok(DepthMap {
        values: Array2::from_shape_vec((h, w), values).unwrap(),
        mask: Array2::from_shape_vec((h, w), mask).unwrap(),
    })
}

/// Import a binary 16-bit PGM (`P5`, maxval 65535, big-endian samples) as a
/// depth map scaled to `[0, 255]` with an all-true mask.
pub fn load_pgm16(path: &Path) -> Result<DepthMap> {
    let bytes = std::fs::read(path)
        .map_err(|e| Error::data(format!("cannot read {}: {e}", path.display())))?;
    fn skip_ws(bytes: &[u8], pos: &mut usize) {
        loop {
            while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
                *pos += 1;
            }
            if *pos < bytes.len() && bytes[*pos] == b'#' {
                while *pos < bytes.len() && bytes[*pos] != b'\n' {
                    *pos += 1;
                }
            } else {
                break;
            }
        }
    }
    fn token(bytes: &[u8], pos: &mut usize) -> Result<u64> {
        skip_ws(bytes, pos);
        let start = *pos;
        while *pos < bytes.len() && bytes[*pos].is_ascii_digit() {
            *pos += 1;
        }
        if start == *pos {
            return Err(Error::format("pgm header: expected integer"));
        }
        std::str::from_utf8(&bytes[start..*pos])
            .unwrap()
            .parse()
            .map_err(|_| Error::format("pgm header: integer out of range"))
    }

    if bytes.len() < 2 || &bytes[0..2] != b"P5" {
        return Err(Error::format("pgm: not a binary P5 file"));
    }
    let mut pos = 2usize;
    let w = token(&bytes, &mut pos)? as usize;
    let h = token(&bytes, &mut pos)? as usize;
    let maxval = token(&bytes, &mut pos)?;
    if maxval != 65535 {
        return Err(Error::format(format!(
            "pgm: expected 16-bit maxval 65535, got {maxval}"
        )));
    }
    // exactly one whitespace byte separates the header from the raster
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err(Error::format("pgm: missing raster separator"));
    }
    pos += 1;
    let n = h * w;
    if bytes.len() < pos + 2 * n {
        return Err(Error::format("pgm raster shorter than header implies"));
    }
    let scale = 255.0f32 / 65535.0;
    let mut values = Vec::with_capacity(n);
    for k in 0..n {
        let raw = u16::from_be_bytes([bytes[pos + 2 * k], bytes[pos + 2 * k + 1]]);
        values.push(raw as f32 * scale);
    }
    Ok(DepthMap {
        values: Array2::from_shape_vec((h, w), values).unwrap(),
        mask: Array2::from_elem((h, w), true),
    })
}
