//! Binary portable pixmap (P6) sample grids.

use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Black pixels between neighbouring tiles.
pub const GRID_GUTTER: usize = 2;

/// `[−1, 1] → [0, 255]`, rounding halves up.
pub fn quantize(v: f32) -> u8 {
    ((v as f64 + 1.0) * 127.5 + 0.5).floor().clamp(0.0, 255.0) as u8
}

/// Tiles `images: [K, H, W, 3]` row-major into `cols` columns. Returns
/// `(width, height, rgb)`.
pub fn render_grid(images: &Tensor, cols: usize) -> Result<(usize, usize, Vec<u8>)> {
    let [k, h, w, c] = images.dims4()?;
    if c != 3 || cols == 0 {
        return Err(Error::Contract(format!(
            "grid needs RGB images and at least one column, got shape {:?} and {cols} columns",
            images.shape()
        )));
    }
    let cols = cols.min(k);
    let rows = k.div_ceil(cols);
    let width = cols * w + (cols - 1) * GRID_GUTTER;
    let height = rows * h + (rows - 1) * GRID_GUTTER;
    let mut rgb = vec![0u8; width * height * 3];
    for (i, img) in images.data().chunks_exact(h * w * 3).enumerate() {
        let (r, col) = (i / cols, i % cols);
        let (ox, oy) = (col * (w + GRID_GUTTER), r * (h + GRID_GUTTER));
        for y in 0..h {
            let src = &img[y * w * 3..][..w * 3];
            let dst = &mut rgb[((oy + y) * width + ox) * 3..][..w * 3];
            for (d, &s) in dst.iter_mut().zip(src) {
                *d = quantize(s);
            }
        }
    }
    Ok((width, height, rgb))
}

pub fn encode_p6(width: usize, height: usize, rgb: &[u8]) -> Vec<u8> {
    let mut out = format!("P6\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(rgb);
    out
}

/// Parses a P6 file with maxval 255. Returns `(width, height, rgb)`.
pub fn decode_p6(bytes: &[u8]) -> Result<(usize, usize, Vec<u8>)> {
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
            return Err(Error::Format {
                offset: pos as u64,
                reason: "truncated pixmap header".into(),
            });
        }
        fields.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    let bad = |reason: String| Error::Format { offset: 0, reason };
    if fields[0] != "P6" {
        return Err(bad(format!("expected P6 magic, got {:?}", fields[0])));
    }
    let num = |s: &str| s.parse::<usize>().map_err(|_| bad(format!("bad header number {s:?}")));
    let (w, h, maxval) = (num(&fields[1])?, num(&fields[2])?, num(&fields[3])?);
    if maxval != 255 {
        return Err(bad(format!("unsupported maxval {maxval}")));
    }
    // Exactly one whitespace byte separates the header from the raster.
    pos += 1;
    let expected = w * h * 3;
    if bytes.len() < pos || bytes.len() - pos != expected {
        return Err(Error::Format {
            offset: pos as u64,
            reason: format!("raster has {} bytes, expected {expected}", bytes.len().saturating_sub(pos)),
        });
    }
    Ok((w, h, bytes[pos..].to_vec()))
}

pub fn write_sample_grid(images: &Tensor, cols: usize, path: &Path) -> Result<()> {
    let (w, h, rgb) = render_grid(images, cols)?;
    std::fs::write(path, encode_p6(w, h, &rgb))?;
    Ok(())
}
