//! On-disk formats: IMGF images, CPLX measurement vectors, binary PGM masks
//! and log-scale PNG previews. Every write goes through a temporary file in
//! the target directory followed by a rename.

use std::io::Write;
use std::path::Path;

use num_complex::Complex64;
use pnp_buqo::{Error, Image, StructureMask};

use crate::error::{CliError, CliResult};

pub const IMGF_MAGIC: [u8; 4] = *b"IMGF";
pub const CPLX_MAGIC: [u8; 4] = *b"CPLX";
/// Floor applied before taking logs in difference previews.
pub const LOG_FLOOR: f64 = 1e-6;

fn format_err(offset: usize, msg: impl Into<String>) -> CliError {
    CliError::Core(Error::Format { offset, msg: msg.into() })
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> CliResult<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| CliError::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| CliError::io(path, e))?;
    tmp.persist(path).map_err(|e| CliError::io(path, e.error))?;
    Ok(())
}

pub fn read_file(path: &Path) -> CliResult<Vec<u8>> {
    std::fs::read(path).map_err(|e| CliError::io(path, e))
}

fn u32_at(bytes: &[u8], at: usize) -> CliResult<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_le_bytes(b.try_into().unwrap()))
        .ok_or_else(|| format_err(at, "truncated header"))
}

pub fn encode_imgf(x: &Image) -> Vec<u8> {
    let n = x.n() as u32;
    let mut out = Vec::with_capacity(12 + 4 * x.len());
    out.extend_from_slice(&IMGF_MAGIC);
    out.extend_from_slice(&n.to_le_bytes());
    out.extend_from_slice(&n.to_le_bytes());
    for &v in x.as_slice() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    out
}

/// Only square images are accepted.
pub fn decode_imgf(bytes: &[u8]) -> CliResult<Image> {
    if bytes.get(..4) != Some(&IMGF_MAGIC[..]) {
        return Err(format_err(0, "bad IMGF magic"));
    }
    let (w, h) = (u32_at(bytes, 4)? as usize, u32_at(bytes, 8)? as usize);
    if w != h || w == 0 {
        return Err(format_err(4, format!("expected a non-empty square image, got {w}x{h}")));
    }
    let want = 12 + 4 * w * h;
    if bytes.len() != want {
        return Err(format_err(bytes.len().min(want), format!("payload is {} bytes, expected {want}", bytes.len())));
    }
    let mut data = Vec::with_capacity(w * h);
    for (i, c) in bytes[12..].chunks_exact(4).enumerate() {
        let v = f32::from_le_bytes(c.try_into().unwrap());
        if !v.is_finite() {
            return Err(format_err(12 + 4 * i, "non-finite pixel"));
        }
        data.push(v as f64);
    }
    Ok(Image::new(w, data)?)
}

pub fn encode_cplx(y: &[Complex64]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + 8 * y.len());
    out.extend_from_slice(&CPLX_MAGIC);
    out.extend_from_slice(&(y.len() as u32).to_le_bytes());
    for z in y {
        out.extend_from_slice(&(z.re as f32).to_le_bytes());
        out.extend_from_slice(&(z.im as f32).to_le_bytes());
    }
    out
}

pub fn decode_cplx(bytes: &[u8]) -> CliResult<Vec<Complex64>> {
    if bytes.get(..4) != Some(&CPLX_MAGIC[..]) {
        return Err(format_err(0, "bad CPLX magic"));
    }
    let len = u32_at(bytes, 4)? as usize;
    let want = 8 + 8 * len;
    if bytes.len() != want {
        return Err(format_err(bytes.len().min(want), format!("payload is {} bytes, expected {want}", bytes.len())));
    }
    let mut out = Vec::with_capacity(len);
    for (i, c) in bytes[8..].chunks_exact(8).enumerate() {
        let re = f32::from_le_bytes(c[..4].try_into().unwrap());
        let im = f32::from_le_bytes(c[4..].try_into().unwrap());
        if !re.is_finite() || !im.is_finite() {
            return Err(format_err(8 + 8 * i, "non-finite sample"));
        }
        out.push(Complex64::new(re as f64, im as f64));
    }
    Ok(out)
}

/// Binary PGM (P5, maxval 255); 255 marks structure pixels, 0 the rest.
pub fn encode_pgm(pixels: &[bool], n: usize) -> Vec<u8> {
    let mut out = format!("P5\n{n} {n}\n255\n").into_bytes();
    out.extend(pixels.iter().map(|&p| if p { 255u8 } else { 0 }));
    out
}

pub fn encode_mask_pgm(mask: &StructureMask) -> Vec<u8> {
    encode_pgm(mask.pixels(), mask.n())
}

/// Reads a P5 mask. Pixels with value >= 128 are structure; comments are allowed.
pub fn decode_mask_pgm(bytes: &[u8]) -> CliResult<StructureMask> {
    let mut pos = 0usize;
    let mut tokens = Vec::new();
    while tokens.len() < 4 {
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
            return Err(format_err(pos, "truncated PGM header"));
        }
        tokens.push((start, String::from_utf8_lossy(&bytes[start..pos]).into_owned()));
    }
    if tokens[0].1 != "P5" {
        return Err(format_err(0, "only binary PGM (P5) masks are supported"));
    }
    let num = |i: usize| -> CliResult<usize> {
        tokens[i].1.parse().map_err(|_| format_err(tokens[i].0, format!("bad PGM field '{}'", tokens[i].1)))
    };
    let (w, h, maxval) = (num(1)?, num(2)?, num(3)?);
    if w != h || w == 0 {
        return Err(format_err(tokens[1].0, format!("expected a square mask, got {w}x{h}")));
    }
    if maxval != 255 {
        return Err(format_err(tokens[3].0, format!("expected maxval 255, got {maxval}")));
    }
    let data = &bytes[pos + 1..];
    if data.len() != w * h {
        return Err(format_err(pos + 1, format!("mask payload is {} bytes, expected {}", data.len(), w * h)));
    }
    Ok(StructureMask::from_pixels(w, data.iter().map(|&v| v >= 128).collect())?)
}

/// 8-bit grayscale PNG of `log10(max(|d|, LOG_FLOOR))`, mapped linearly
/// from `[log10 LOG_FLOOR, 0]` to `[0, 255]`.
pub fn encode_log_png(diff: &Image) -> CliResult<Vec<u8>> {
    let lo = LOG_FLOOR.log10();
    let pixels: Vec<u8> = diff
        .as_slice()
        .iter()
        .map(|&v| {
            let l = v.abs().max(LOG_FLOOR).log10().min(0.0);
            (255.0 * (l - lo) / -lo).round() as u8
        })
        .collect();
    let mut out = Vec::new();
    {
        let n = diff.n() as u32;
        let mut enc = png::Encoder::new(&mut out, n, n);
        enc.set_color(png::ColorType::Grayscale);
        enc.set_depth(png::BitDepth::Eight);
        let png_err = |e: png::EncodingError| CliError::Config(format!("png encoding failed: {e}"));
        let mut w = enc.write_header().map_err(png_err)?;
        w.write_image_data(&pixels).map_err(png_err)?;
    }
    Ok(out)
}
