//! Image interchange: binary PGM (P5, 8/16-bit), a lossless raw `f64`
//! container, and luminance loading of common raster formats.

use std::fs;
use std::path::Path;

use super::image::Image;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PgmDepth {
    Eight,
    Sixteen,
}

impl PgmDepth {
    fn maxval(self) -> u32 {
        match self {
            PgmDepth::Eight => 255,
            PgmDepth::Sixteen => 65535,
        }
    }
}

/// Encodes an image as binary PGM. Values are clamped to `[0, 1]` and
/// rounded to the nearest level. 16-bit samples are big-endian.
pub fn encode_pgm(img: &Image, depth: PgmDepth) -> Vec<u8> {
    let maxval = depth.maxval();
    let mut out = format!("P5\n{} {}\n{}\n", img.width(), img.height(), maxval).into_bytes();
    for &p in img.pixels() {
        let level = (p.clamp(0.0, 1.0) * maxval as f64).round() as u32;
        match depth {
            PgmDepth::Eight => out.push(level as u8),
            PgmDepth::Sixteen => out.extend_from_slice(&(level as u16).to_be_bytes()),
        }
    }
    out
}

pub fn decode_pgm(data: &[u8]) -> std::result::Result<Image, String> {
    let mut pos = 0;
    let magic = next_token(data, &mut pos).ok_or("missing magic")?;
    if magic != b"P5" {
        return Err(format!("unsupported magic {:?}", String::from_utf8_lossy(magic)));
    }
    let width = parse_u32(next_token(data, &mut pos))?;
    let height = parse_u32(next_token(data, &mut pos))?;
    let maxval = parse_u32(next_token(data, &mut pos))?;
    if width == 0 || height == 0 {
        return Err("zero image dimension".into());
    }
    if maxval == 0 || maxval > 65535 {
        return Err(format!("maxval {maxval} out of range"));
    }
    // exactly one whitespace byte separates the header from the raster
    pos += 1;
    let n = width as usize * height as usize;
    let bytes_per = if maxval < 256 { 1 } else { 2 };
    let raster = data
        .get(pos..pos + n * bytes_per)
        .ok_or("truncated raster")?;
    let scale = 1.0 / maxval as f64;
    let pixels = if bytes_per == 1 {
        raster.iter().map(|&b| b as f64 * scale).collect()
    } else {
        raster
            .chunks_exact(2)
            .map(|c| u16::from_be_bytes([c[0], c[1]]) as f64 * scale)
            .collect()
    };
    Image::new(height as usize, width as usize, pixels).map_err(|e| e.to_string())
}

fn next_token<'a>(data: &'a [u8], pos: &mut usize) -> Option<&'a [u8]> {
    loop {
        while *pos < data.len() && data[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < data.len() && data[*pos] == b'#' {
            while *pos < data.len() && data[*pos] != b'\n' {
                *pos += 1;
            }
            continue;
        }
        break;
    }
    let start = *pos;
    while *pos < data.len() && !data[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    (start < *pos).then(|| &data[start..*pos])
}

fn parse_u32(tok: Option<&[u8]>) -> std::result::Result<u32, String> {
    let tok = tok.ok_or("truncated header")?;
    std::str::from_utf8(tok)
        .ok()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| format!("bad header field {:?}", String::from_utf8_lossy(tok)))
}

pub fn write_pgm(path: &Path, img: &Image, depth: PgmDepth) -> Result<()> {
    fs::write(path, encode_pgm(img, depth)).map_err(|e| Error::io(path, e))
}

pub fn read_pgm(path: &Path) -> Result<Image> {
    let data = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_pgm(&data).map_err(|reason| Error::Format {
        path: path.to_owned(),
        reason,
    })
}

/// Raw container: little-endian `u32` height, `u32` width, then the pixels
/// as little-endian `f64`, row-major.
pub fn encode_raw(img: &Image) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + 8 * img.len());
    out.extend_from_slice(&(img.height() as u32).to_le_bytes());
    out.extend_from_slice(&(img.width() as u32).to_le_bytes());
    for p in img.pixels() {
        out.extend_from_slice(&p.to_le_bytes());
    }
    out
}

pub fn decode_raw(data: &[u8]) -> std::result::Result<Image, String> {
    if data.len() < 8 {
        return Err("raw header truncated".into());
    }
    let height = u32::from_le_bytes(data[0..4].try_into().unwrap()) as usize;
    let width = u32::from_le_bytes(data[4..8].try_into().unwrap()) as usize;
    let body = &data[8..];
    if body.len() != height * width * 8 {
        return Err(format!(
            "raw body has {} bytes, expected {}",
            body.len(),
            height * width * 8
        ));
    }
    let pixels = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Image::new(height, width, pixels).map_err(|e| e.to_string())
}

pub fn write_raw(path: &Path, img: &Image) -> Result<()> {
    fs::write(path, encode_raw(img)).map_err(|e| Error::io(path, e))
}

pub fn read_raw(path: &Path) -> Result<Image> {
    let data = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_raw(&data).map_err(|reason| Error::Format {
        path: path.to_owned(),
        reason,
    })
}

/// Loads any supported raster as luminance in `[0, 1]`.
///
/// PGM goes through the native decoder; everything else is decoded by the
/// `image` crate and converted with ITU-R BT.601 weights.
pub fn load_luminance(path: &Path) -> Result<Image> {
    let data = fs::read(path).map_err(|e| Error::io(path, e))?;
    if data.starts_with(b"P5") {
        return decode_pgm(&data).map_err(|reason| Error::Format {
            path: path.to_owned(),
            reason,
        });
    }
    let decoded = image::load_from_memory(&data).map_err(|e| Error::Format {
        path: path.to_owned(),
        reason: e.to_string(),
    })?;
    let rgb = decoded.to_rgb32f();
    let (w, h) = rgb.dimensions();
    let pixels = rgb
        .pixels()
        .map(|p| {
            let (r, g, b) = (p[0] as f64, p[1] as f64, p[2] as f64);
            // 0.299 r + 0.587 g + 0.114 b, arranged so gray maps to itself exactly
            (r + 0.587 * (g - r) + 0.114 * (b - r)).clamp(0.0, 1.0)
        })
        .collect();
    Image::new(h as usize, w as usize, pixels)
}
