//! Binary PGM/PPM grids for visual inspection.

use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// White border between cells, in pixels.
pub const GUTTER: usize = 2;

fn to_byte(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Tiles `images` row-major, `cols` per row, with white gutters between
/// cells. Every image is `[C,H,W]` with C = 1 (written as PGM, P5) or
/// C = 3 (PPM, P6) and values in `[0,1]`.
pub fn encode_grid(images: &[Tensor], cols: usize) -> Result<Vec<u8>> {
    let first = images.first().ok_or_else(|| Error::Config("image grid is empty".into()))?;
    if cols == 0 {
        return Err(Error::Config("grid needs at least one column".into()));
    }
    let shape = first.shape().to_vec();
    let (c, h, w) = match shape[..] {
        [c, h, w] if c == 1 || c == 3 => (c, h, w),
        _ => return Err(Error::shape("emit_grid", format!("images must be [1|3,H,W], got {shape:?}"))),
    };
    if let Some(bad) = images.iter().find(|t| t.shape() != shape.as_slice()) {
        return Err(Error::shape("emit_grid", format!("mixed image shapes {shape:?} and {:?}", bad.shape())));
    }
    let cols = cols.min(images.len());
    let rows = images.len().div_ceil(cols);
    let gw = cols * w + (cols - 1) * GUTTER;
    let gh = rows * h + (rows - 1) * GUTTER;
    let mut pix = vec![255u8; gw * gh * c];
    for (i, img) in images.iter().enumerate() {
        let oy = (i / cols) * (h + GUTTER);
        let ox = (i % cols) * (w + GUTTER);
        let d = img.data();
        for y in 0..h {
            for x in 0..w {
                for ch in 0..c {
                    pix[((oy + y) * gw + ox + x) * c + ch] = to_byte(d[(ch * h + y) * w + x]);
                }
            }
        }
    }
    let magic = if c == 1 { "P5" } else { "P6" };
    let mut out = format!("{magic}\n{gw} {gh}\n255\n").into_bytes();
    out.extend(pix);
    Ok(out)
}

pub fn emit_grid(path: &Path, images: &[Tensor], cols: usize) -> Result<()> {
    let bytes = encode_grid(images, cols)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Splits a `[N,C,H,W]` batch into cells.
pub fn cells(batch: &Tensor) -> Result<Vec<Tensor>> {
    if batch.rank() != 4 {
        return Err(Error::shape("cells", format!("expected [N,C,H,W], got {:?}", batch.shape())));
    }
    let s = &batch.shape()[1..];
    (0..batch.batch()).map(|i| Tensor::new(s.to_vec(), batch.item(i).to_vec())).collect()
}
