//! Strided 2-D convolution and its adjoint via im2col / col2im.
//!
//! Both directions share one geometry: a "wide" feature map of extent
//! `h x w` and a "narrow" map of extent `oh x ow` related by
//! `oh = (h + 2p - k) / s + 1`. Convolution maps wide to narrow, the
//! transposed convolution maps narrow to wide.

use crate::error::{Error, Result};
use crate::tensor::{gemm, Mat};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Geometry {
    pub channels: usize,
    pub h: usize,
    pub w: usize,
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
    pub oh: usize,
    pub ow: usize,
}

impl Geometry {
    /// Geometry of a convolution reading a `channels x h x w` map.
    pub fn for_conv(
        op: &'static str,
        channels: usize,
        h: usize,
        w: usize,
        k: usize,
        stride: usize,
        pad: usize,
    ) -> Result<Self> {
        if stride == 0 {
            return Err(Error::Config(format!("{op}: stride must be positive")));
        }
        if h + 2 * pad < k || w + 2 * pad < k {
            return Err(Error::shape(
                op,
                format!("input {h}x{w} (pad {pad}) smaller than kernel {k}x{k}"),
            ));
        }
        Ok(Geometry {
            channels,
            h,
            w,
            k,
            stride,
            pad,
            oh: (h + 2 * pad - k) / stride + 1,
            ow: (w + 2 * pad - k) / stride + 1,
        })
    }

    /// Geometry of a transposed convolution reading an `ih x iw` map; the
    /// wide side is its output.
    pub fn for_transposed(
        op: &'static str,
        channels: usize,
        ih: usize,
        iw: usize,
        k: usize,
        stride: usize,
        pad: usize,
    ) -> Result<Self> {
        if stride == 0 {
            return Err(Error::Config(format!("{op}: stride must be positive")));
        }
        let full_h = (ih - 1) * stride + k;
        let full_w = (iw - 1) * stride + k;
        if ih == 0 || iw == 0 || full_h <= 2 * pad || full_w <= 2 * pad {
            return Err(Error::shape(
                op,
                format!("input {ih}x{iw} with kernel {k}, stride {stride}, pad {pad} has empty output"),
            ));
        }
        Ok(Geometry {
            channels,
            h: full_h - 2 * pad,
            w: full_w - 2 * pad,
            k,
            stride,
            pad,
            oh: ih,
            ow: iw,
        })
    }

    pub fn col_rows(&self) -> usize {
        self.channels * self.k * self.k
    }

    pub fn col_cols(&self) -> usize {
        self.oh * self.ow
    }

    /// Unfolds one wide map (`channels x h x w`) into a
    /// `(channels*k*k) x (oh*ow)` patch matrix.
    pub fn im2col(&self, src: &[f64], cols: &mut [f64]) {
        let Geometry {
            channels,
            h,
            w,
            k,
            stride,
            pad,
            oh,
            ow,
        } = *self;
        let n = oh * ow;
        for c in 0..channels {
            for ky in 0..k {
                for kx in 0..k {
                    let row = ((c * k + ky) * k + kx) * n;
                    for oy in 0..oh {
                        let y = (oy * stride + ky) as isize - pad as isize;
                        let dst = &mut cols[row + oy * ow..row + (oy + 1) * ow];
                        if y < 0 || y >= h as isize {
                            dst.fill(0.0);
                            continue;
                        }
                        let src_row = &src[(c * h + y as usize) * w..(c * h + y as usize + 1) * w];
                        for (ox, d) in dst.iter_mut().enumerate() {
                            let x = (ox * stride + kx) as isize - pad as isize;
                            *d = if x < 0 || x >= w as isize {
                                0.0
                            } else {
                                src_row[x as usize]
                            };
                        }
                    }
                }
            }
        }
    }

    /// Adjoint of [`Geometry::im2col`]: scatter-adds patches back into a
    /// wide map. `dst` is accumulated into, not overwritten.
    pub fn col2im(&self, cols: &[f64], dst: &mut [f64]) {
        let Geometry {
            channels,
            h,
            w,
            k,
            stride,
            pad,
            oh,
            ow,
        } = *self;
        let n = oh * ow;
        for c in 0..channels {
            for ky in 0..k {
                for kx in 0..k {
                    let row = ((c * k + ky) * k + kx) * n;
                    for oy in 0..oh {
                        let y = (oy * stride + ky) as isize - pad as isize;
                        if y < 0 || y >= h as isize {
                            continue;
                        }
                        let base = (c * h + y as usize) * w;
                        let src = &cols[row + oy * ow..row + (oy + 1) * ow];
                        for (ox, v) in src.iter().enumerate() {
                            let x = (ox * stride + kx) as isize - pad as isize;
                            if x >= 0 && x < w as isize {
                                dst[base + x as usize] += v;
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Convolution forward over a batch. `weight` is `out x (in*k*k)`.
/// Returns the output and the per-sample patch matrices for backward.
pub fn conv_forward(
    g: &Geometry,
    batch: usize,
    input: &[f64],
    weight: &[f64],
    bias: &[f64],
    out_ch: usize,
) -> (Vec<f64>, Vec<f64>) {
    let (rows, ncol) = (g.col_rows(), g.col_cols());
    let in_len = g.channels * g.h * g.w;
    let out_len = out_ch * ncol;
    let mut cols = vec![0.0; batch * rows * ncol];
    let mut out = vec![0.0; batch * out_len];
    for n in 0..batch {
        let c = &mut cols[n * rows * ncol..(n + 1) * rows * ncol];
        g.im2col(&input[n * in_len..(n + 1) * in_len], c);
        let o = &mut out[n * out_len..(n + 1) * out_len];
        for (oc, b) in bias.iter().enumerate() {
            o[oc * ncol..(oc + 1) * ncol].fill(*b);
        }
        gemm(
            Mat::new(weight, out_ch, rows),
            Mat::new(c, rows, ncol),
            1.0,
            o,
        );
    }
    (out, cols)
}

/// Convolution backward. Accumulates into `dweight`/`dbias`; returns the
/// input gradient when requested.
#[allow(clippy::too_many_arguments)]
pub fn conv_backward(
    g: &Geometry,
    batch: usize,
    cols: &[f64],
    weight: &[f64],
    out_ch: usize,
    upstream: &[f64],
    mut params: Option<(&mut [f64], &mut [f64])>,
    want_input: bool,
) -> Option<Vec<f64>> {
    let (rows, ncol) = (g.col_rows(), g.col_cols());
    let in_len = g.channels * g.h * g.w;
    let out_len = out_ch * ncol;
    let mut dinput = want_input.then(|| vec![0.0; batch * in_len]);
    let mut dcols = vec![0.0; rows * ncol];
    for n in 0..batch {
        let up = &upstream[n * out_len..(n + 1) * out_len];
        if let Some((dweight, dbias)) = params.as_mut() {
            for (oc, db) in dbias.iter_mut().enumerate() {
                *db += up[oc * ncol..(oc + 1) * ncol].iter().sum::<f64>();
            }
            let c = &cols[n * rows * ncol..(n + 1) * rows * ncol];
            gemm(
                Mat::new(up, out_ch, ncol),
                Mat::new(c, rows, ncol).t(),
                1.0,
                dweight,
            );
        }
        if let Some(dx) = dinput.as_mut() {
            gemm(
                Mat::new(weight, out_ch, rows).t(),
                Mat::new(up, out_ch, ncol),
                0.0,
                &mut dcols,
            );
            g.col2im(&dcols, &mut dx[n * in_len..(n + 1) * in_len]);
        }
    }
    dinput
}

/// Transposed convolution forward. `weight` is `in x (out*k*k)`; `g` is
/// the geometry whose wide side is the output (`g.channels == out`).
pub fn tconv_forward(
    g: &Geometry,
    batch: usize,
    input: &[f64],
    in_ch: usize,
    weight: &[f64],
    bias: &[f64],
) -> Vec<f64> {
    let (rows, ncol) = (g.col_rows(), g.col_cols());
    let in_len = in_ch * ncol;
    let plane = g.h * g.w;
    let out_len = g.channels * plane;
    let mut out = vec![0.0; batch * out_len];
    let mut cols = vec![0.0; rows * ncol];
    for n in 0..batch {
        gemm(
            Mat::new(weight, in_ch, rows).t(),
            Mat::new(&input[n * in_len..(n + 1) * in_len], in_ch, ncol),
            0.0,
            &mut cols,
        );
        let o = &mut out[n * out_len..(n + 1) * out_len];
        g.col2im(&cols, o);
        for (oc, b) in bias.iter().enumerate() {
            o[oc * plane..(oc + 1) * plane]
                .iter_mut()
                .for_each(|v| *v += b);
        }
    }
    out
}

#[allow(clippy::too_many_arguments)]
pub fn tconv_backward(
    g: &Geometry,
    batch: usize,
    input: &[f64],
    in_ch: usize,
    weight: &[f64],
    upstream: &[f64],
    mut params: Option<(&mut [f64], &mut [f64])>,
    want_input: bool,
) -> Option<Vec<f64>> {
    let (rows, ncol) = (g.col_rows(), g.col_cols());
    let in_len = in_ch * ncol;
    let plane = g.h * g.w;
    let out_len = g.channels * plane;
    let mut dinput = want_input.then(|| vec![0.0; batch * in_len]);
    let mut dcols = vec![0.0; rows * ncol];
    for n in 0..batch {
        let up = &upstream[n * out_len..(n + 1) * out_len];
        g.im2col(up, &mut dcols);
        if let Some((dweight, dbias)) = params.as_mut() {
            for (oc, db) in dbias.iter_mut().enumerate() {
                *db += up[oc * plane..(oc + 1) * plane].iter().sum::<f64>();
            }
            let x = &input[n * in_len..(n + 1) * in_len];
            gemm(
                Mat::new(x, in_ch, ncol),
                Mat::new(&dcols, rows, ncol).t(),
                1.0,
                dweight,
            );
        }
        if let Some(dx) = dinput.as_mut() {
            gemm(
                Mat::new(weight, in_ch, rows),
                Mat::new(&dcols, rows, ncol),
                0.0,
                &mut dx[n * in_len..(n + 1) * in_len],
            );
        }
    }
    dinput
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn geometry_sizes() {
        let g = Geometry::for_conv("t", 1, 28, 28, 5, 1, 0).unwrap();
        assert_eq!((g.oh, g.ow), (24, 24));
        let t = Geometry::for_transposed("t", 8, 4, 4, 3, 2, 1).unwrap();
        assert_eq!((t.h, t.w), (7, 7));
        let t = Geometry::for_transposed("t", 1, 25, 25, 6, 1, 1).unwrap();
        assert_eq!((t.h, t.w), (28, 28));
        assert!(Geometry::for_conv("t", 1, 3, 3, 5, 1, 0).is_err());
    }

    #[test]
    fn col2im_is_adjoint_of_im2col() {
        let g = Geometry::for_conv("t", 2, 5, 6, 3, 2, 1).unwrap();
        let x: Vec<f64> = (0..60).map(|v| ((v * 7) % 11) as f64 - 5.0).collect();
        let y: Vec<f64> = (0..g.col_rows() * g.col_cols())
            .map(|v| ((v * 3) % 13) as f64 - 6.0)
            .collect();
        let mut cx = vec![0.0; y.len()];
        g.im2col(&x, &mut cx);
        let mut ty = vec![0.0; x.len()];
        g.col2im(&y, &mut ty);
        let lhs: f64 = cx.iter().zip(&y).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.iter().zip(&ty).map(|(a, b)| a * b).sum();
        assert_eq!(lhs, rhs);
    }
}
