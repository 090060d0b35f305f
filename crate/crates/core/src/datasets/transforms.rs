//! Deterministic per-image transforms. Images are `[H, W]` planes or
//! `[N, 1, H, W]` batches with values in `[0, 1]`.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const BINARY_THRESHOLD: f64 = 0.5;

pub fn binarize(v: f64) -> f64 {
    if v >= BINARY_THRESHOLD {
        1.0
    } else {
        0.0
    }
}

pub fn negative(img: &Tensor) -> Tensor {
    img.map(|p| 1.0 - p)
}

/// Foreground pixels (after binarization) with at least one background
/// 4-neighbour; pixels outside the image count as background.
pub fn edge_plane(src: &[f64], h: usize, w: usize, dst: &mut [f64]) {
    let fg = |y: isize, x: isize| -> bool {
        y >= 0 && x >= 0 && (y as usize) < h && (x as usize) < w && binarize(src[y as usize * w + x as usize]) == 1.0
    };
    for y in 0..h as isize {
        for x in 0..w as isize {
            let on = fg(y, x) && !(fg(y - 1, x) && fg(y + 1, x) && fg(y, x - 1) && fg(y, x + 1));
            dst[y as usize * w + x as usize] = if on { 1.0 } else { 0.0 };
        }
    }
}

/// Counter-clockwise quarter turn: `out[y][x] = in[x][n-1-y]`.
pub fn rotate90_plane(src: &[f64], n: usize, dst: &mut [f64]) {
    for y in 0..n {
        for x in 0..n {
            dst[y * n + x] = src[x * n + (n - 1 - y)];
        }
    }
}

/// `(count, h, w)` of a plane or a single-channel batch.
fn planes(img: &Tensor, op: &'static str) -> Result<(usize, usize, usize)> {
    match *img.shape() {
        [h, w] => Ok((1, h, w)),
        [n, 1, h, w] => Ok((n, h, w)),
        _ => Err(Error::shape(op, format!("expected [H, W] or [N, 1, H, W], got {:?}", img.shape()))),
    }
}

pub fn edge(img: &Tensor) -> Result<Tensor> {
    let (_, h, w) = planes(img, "edge")?;
    let mut out = Tensor::zeros(img.shape());
    for (s, d) in img.data().chunks(h * w).zip(out.data_mut().chunks_mut(h * w)) {
        edge_plane(s, h, w, d);
    }
    Ok(out)
}

pub fn rotate90(img: &Tensor) -> Result<Tensor> {
    let (_, h, w) = planes(img, "rotate90")?;
    if h != w {
        return Err(Error::shape("rotate90", format!("image must be square, got {h}x{w}")));
    }
    let mut out = Tensor::zeros(img.shape());
    for (s, d) in img.data().chunks(h * w).zip(out.data_mut().chunks_mut(h * w)) {
        rotate90_plane(s, h, d);
    }
    Ok(out)
}

/// Bilinear resampling with pixel centres aligned (`align_corners = false`
/// convention, edge-clamped). Convex combinations keep values in `[0, 1]`.
pub fn resize_bilinear(src: &[f64], h: usize, w: usize, oh: usize, ow: usize) -> Vec<f64> {
    let mut out = vec![0.0; oh * ow];
    let sy = h as f64 / oh as f64;
    let sx = w as f64 / ow as f64;
    for y in 0..oh {
        let fy = ((y as f64 + 0.5) * sy - 0.5).clamp(0.0, (h - 1) as f64);
        let y0 = fy.floor() as usize;
        let y1 = (y0 + 1).min(h - 1);
        let ty = fy - y0 as f64;
        for x in 0..ow {
            let fx = ((x as f64 + 0.5) * sx - 0.5).clamp(0.0, (w - 1) as f64);
            let x0 = fx.floor() as usize;
            let x1 = (x0 + 1).min(w - 1);
            let tx = fx - x0 as f64;
            let top = src[y0 * w + x0] * (1.0 - tx) + src[y0 * w + x1] * tx;
            let bot = src[y1 * w + x0] * (1.0 - tx) + src[y1 * w + x1] * tx;
            out[y * ow + x] = top * (1.0 - ty) + bot * ty;
        }
    }
    out
}

/// Ground-truth relation between the two domains of a task.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Transform {
    Edge,
    Negative,
    Rotate90,
    /// Leaves images unchanged; used by fixtures.
    Identity,
}

impl Transform {
    pub fn apply(self, img: &Tensor) -> Result<Tensor> {
        match self {
            Transform::Edge => edge(img),
            Transform::Negative => {
                planes(img, "negative")?;
                Ok(negative(img))
            }
            Transform::Rotate90 => rotate90(img),
            Transform::Identity => Ok(img.clone()),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Transform::Edge => "edge",
            Transform::Negative => "negative",
            Transform::Rotate90 => "rotate90",
            Transform::Identity => "identity",
        }
    }
}

impl fmt::Display for Transform {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Transform {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "edge" => Ok(Transform::Edge),
            "negative" => Ok(Transform::Negative),
            "rotate90" => Ok(Transform::Rotate90),
            "identity" => Ok(Transform::Identity),
            _ => Err(Error::Config(format!("unknown transform `{s}` (expected edge, negative or rotate90)"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn plane(h: usize, w: usize, v: Vec<f64>) -> Tensor {
        Tensor::new([h, w], v).unwrap()
    }

    #[test]
    fn negative_cases() {
        let x = plane(1, 3, vec![0.3, 0.0, 1.0]);
        let n = negative(&x);
        assert!((n.data()[0] - 0.7).abs() < 1e-15);
        assert_eq!(&n.data()[1..], &[1.0, 0.0]);
        // exact round trip needs dyadic values; 1 - (1 - 0.3) != 0.3 in f64
        let d = plane(1, 3, vec![0.25, 0.0, 0.875]);
        assert_eq!(negative(&negative(&d)).max_abs_diff(&d).unwrap(), 0.0);
    }

    #[test]
    fn edge_cases() {
        assert!(edge(&Tensor::zeros([4, 4])).unwrap().data().iter().all(|&v| v == 0.0));
        let mut one = Tensor::zeros([3, 3]);
        one.data_mut()[4] = 0.9;
        assert_eq!(edge(&one).unwrap().data()[4], 1.0);
        let block = Tensor::from_fn([5, 5], |i| {
            let (y, x) = (i / 5, i % 5);
            if (1..4).contains(&y) && (1..4).contains(&x) {
                1.0
            } else {
                0.0
            }
        });
        let e = edge(&block).unwrap();
        let ring: f64 = e.data().iter().sum();
        assert_eq!(ring, 8.0);
        assert_eq!(e.data()[12], 0.0);
    }

    #[test]
    fn rotate_cases() {
        let r = rotate90(&plane(2, 2, vec![1.0, 2.0, 3.0, 4.0])).unwrap();
        assert_eq!(r.data(), &[2.0, 4.0, 1.0, 3.0]);
        assert!(rotate90(&Tensor::zeros([2, 3])).is_err());
        let x = Tensor::from_fn([1, 1, 5, 5], |i| i as f64 / 25.0);
        let mut y = x.clone();
        for _ in 0..4 {
            y = rotate90(&y).unwrap();
        }
        assert_eq!(x, y);
    }

    #[test]
    fn bilinear_keeps_range_and_constants() {
        let src: Vec<f64> = (0..16).map(|i| (i % 2) as f64).collect();
        let out = resize_bilinear(&src, 4, 4, 7, 7);
        assert!(out.iter().all(|&v| (0.0..=1.0).contains(&v)));
        let c = resize_bilinear(&[0.4; 16 * 16], 16, 16, 28, 28);
        assert!(c.iter().all(|&v| (v - 0.4).abs() < 1e-15));
    }
}
