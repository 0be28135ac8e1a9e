use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::render::{DepthImage, Image, Mask};
use crate::{Error, Result};

/// Default depth quantum: 0.1 mm per unit.
pub const DEFAULT_DEPTH_SCALE: f64 = 1e-4;

/// Sidecar describing how a 16-bit depth PGM maps to meters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DepthHeader {
    pub width: usize,
    pub height: usize,
    /// Meters per stored unit.
    pub depth_scale: f64,
}

/// Binary PGM (P5) with 8-bit samples when `maxval < 256`, else 16-bit
/// big-endian.
pub fn encode_pgm(width: usize, height: usize, maxval: u16, values: &[u16]) -> Vec<u8> {
    assert_eq!(values.len(), width * height);
    let mut out = format!("P5\n{width} {height}\n{maxval}\n").into_bytes();
    if maxval < 256 {
        out.extend(values.iter().map(|&v| v as u8));
    } else {
        for &v in values {
            out.extend_from_slice(&v.to_be_bytes());
        }
    }
    out
}

pub fn decode_pgm(bytes: &[u8], path: &Path) -> Result<(usize, usize, u16, Vec<u16>)> {
    let err = |m: &str| Error::parse(path, m);
    let mut pos = 0;
    let mut fields = Vec::new();
    while fields.len() < 4 {
        while pos < bytes.len() && (bytes[pos].is_ascii_whitespace() || bytes[pos] == b'#') {
            if bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                pos += 1;
            }
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(err("truncated PGM header"));
        }
        fields.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| err("non-ASCII PGM header"))?);
    }
    if fields[0] != "P5" {
        return Err(err("not a binary PGM (P5)"));
    }
    let num = |s: &str| s.parse::<usize>().map_err(|_| err("bad number in PGM header"));
    let (w, h, maxval) = (num(fields[1])?, num(fields[2])?, num(fields[3])?);
    if maxval == 0 || maxval > 65535 {
        return Err(err("PGM maxval out of range"));
    }
    pos += 1;
    let bpp = if maxval < 256 { 1 } else { 2 };
    let data = bytes.get(pos..).unwrap_or(&[]);
    if data.len() != w * h * bpp {
        return Err(err("PGM payload size does not match header"));
    }
    let values = if bpp == 1 {
        data.iter().map(|&b| b as u16).collect()
    } else {
        data.chunks_exact(2).map(|c| u16::from_be_bytes([c[0], c[1]])).collect()
    };
    Ok((w, h, maxval as u16, values))
}

pub fn write_depth(path: &Path, depth: &DepthImage, depth_scale: f64) -> Result<()> {
    let values: Vec<u16> = depth
        .data
        .iter()
        .map(|&d| {
            let q = (d / depth_scale).round();
            if q > u16::MAX as f64 {
                Err(Error::InvalidImage(format!("depth {d} m exceeds 16-bit range at scale {depth_scale}")))
            } else {
                Ok(q as u16)
            }
        })
        .collect::<Result<_>>()?;
    super::write_atomic(path, &encode_pgm(depth.width, depth.height, u16::MAX, &values))?;
    let header = DepthHeader {
        width: depth.width,
        height: depth.height,
        depth_scale,
    };
    super::write_json(&path.with_extension("json"), &header)
}

pub fn read_depth(path: &Path) -> Result<DepthImage> {
    let header: DepthHeader = super::read_json(&path.with_extension("json"))?;
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let (w, h, _, values) = decode_pgm(&bytes, path)?;
    if (w, h) != (header.width, header.height) {
        return Err(Error::parse(path, "depth sidecar size does not match image"));
    }
    DepthImage::depth(w, h, values.iter().map(|&v| v as f64 * header.depth_scale).collect())
}

/// Label image as PGM (8-bit when all labels fit, else 16-bit).
pub fn write_labels(path: &Path, labels: &Image<u32>) -> Result<()> {
    let max = labels.data.iter().copied().max().unwrap_or(0);
    if max > u16::MAX as u32 {
        return Err(Error::InvalidImage(format!("label {max} does not fit in 16 bits")));
    }
    let maxval = if max < 256 { 255 } else { u16::MAX };
    let values: Vec<u16> = labels.data.iter().map(|&v| v as u16).collect();
    super::write_atomic(path, &encode_pgm(labels.width, labels.height, maxval, &values))
}

pub fn read_labels(path: &Path) -> Result<Image<u32>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let (w, h, _, values) = decode_pgm(&bytes, path)?;
    Image::from_vec(w, h, values.into_iter().map(u32::from).collect())
}

/// Mask as 8-bit PGM with 0/255.
pub fn write_mask(path: &Path, mask: &Mask) -> Result<()> {
    let values: Vec<u16> = mask.data.iter().map(|&b| if b { 255 } else { 0 }).collect();
    super::write_atomic(path, &encode_pgm(mask.width, mask.height, 255, &values))
}

pub fn read_mask(path: &Path) -> Result<Mask> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let (w, h, _, values) = decode_pgm(&bytes, path)?;
    Image::from_vec(w, h, values.into_iter().map(|v| v > 0).collect())
}

/// Header of a raw little-endian `f32` raster.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RasterHeader {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub dtype: RasterType,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RasterType {
    F32le,
}

/// Writes `data` (pixel-major, `channels` values per pixel) to `path` with a
/// `.json` header beside it.
pub fn write_raster(path: &Path, width: usize, height: usize, channels: usize, data: &[f32]) -> Result<()> {
    assert_eq!(data.len(), width * height * channels);
    let bytes: Vec<u8> = data.iter().flat_map(|v| v.to_le_bytes()).collect();
    super::write_atomic(path, &bytes)?;
    super::write_json(
        &path.with_extension("json"),
        &RasterHeader {
            width,
            height,
            channels,
            dtype: RasterType::F32le,
        },
    )
}

pub fn read_raster(path: &Path) -> Result<(RasterHeader, Vec<f32>)> {
    let header: RasterHeader = super::read_json(&path.with_extension("json"))?;
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() != header.width * header.height * header.channels * 4 {
        return Err(Error::parse(path, "raster size does not match header"));
    }
    let data = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    Ok((header, data))
}
