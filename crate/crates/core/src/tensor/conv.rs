//! 2D cross-correlation with zero padding, differentiable in input, weight
//! and bias.
//!
//! Output size follows `floor((n + 2*padding - k) / stride) + 1` per spatial
//! dimension. The kernels accumulate one shifted weight-scaled input plane at
//! a time so the inner loops stream contiguous memory.

use super::tape::{node_id, record, GradSink};
use super::{Scalar, Tensor};

#[derive(Clone, Copy)]
struct ConvDims {
    batch: usize,
    cin: usize,
    h: usize,
    w: usize,
    cout: usize,
    kh: usize,
    kw: usize,
    oh: usize,
    ow: usize,
    stride: usize,
    padding: usize,
}

/// Output spatial extent of a convolution, or `None` when it collapses.
pub fn conv_output_extent(n: usize, k: usize, stride: usize, padding: usize) -> Option<usize> {
    let padded = n + 2 * padding;
    if padded < k {
        return None;
    }
    Some((padded - k) / stride + 1)
}

impl<T: Scalar> Tensor<T> {
    /// Cross-correlation of an `N x Cin x H x W` input with a
    /// `Cout x Cin x kh x kw` weight and a `Cout` bias.
    pub fn conv2d(
        &self,
        weight: &Tensor<T>,
        bias: &Tensor<T>,
        stride: usize,
        padding: usize,
    ) -> Tensor<T> {
        assert!(stride >= 1, "conv2d: stride must be >= 1");
        assert_eq!(self.shape().len(), 4, "conv2d: input must be N x Cin x H x W, got {:?}", self.shape());
        assert_eq!(weight.shape().len(), 4, "conv2d: weight must be Cout x Cin x kh x kw, got {:?}", weight.shape());
        let (batch, cin, h, w) = (self.shape()[0], self.shape()[1], self.shape()[2], self.shape()[3]);
        let (cout, wcin, kh, kw) = (weight.shape()[0], weight.shape()[1], weight.shape()[2], weight.shape()[3]);
        assert_eq!(
            cin, wcin,
            "conv2d: input channels ({cin}) do not match weight input channels ({wcin})"
        );
        assert_eq!(
            bias.shape(),
            &[cout],
            "conv2d: bias shape {:?} does not match output channels ({cout})",
            bias.shape()
        );
        let oh = conv_output_extent(h, kh, stride, padding).unwrap_or(0);
        let ow = conv_output_extent(w, kw, stride, padding).unwrap_or(0);
        assert!(
            oh > 0 && ow > 0,
            "conv2d: spatial output collapsed: input {h}x{w}, kernel {kh}x{kw}, stride {stride}, padding {padding} -> {oh}x{ow}"
        );

        let dims = ConvDims { batch, cin, h, w, cout, kh, kw, oh, ow, stride, padding };
        let out = forward(self.data(), weight.data(), bias.data(), dims);

        let (xid, wid, bid) = (node_id(self), node_id(weight), node_id(bias));
        let (xv, wv) = (self.data_arc(), weight.data_arc());
        record(
            &[self, weight, bias],
            vec![batch, cout, oh, ow],
            out,
            move |go, sink: &mut GradSink<T>| {
                let g = go.data();
                if let Some(id) = xid {
                    sink(id, Tensor::new(vec![dims.batch, dims.cin, dims.h, dims.w], grad_input(g, &wv, dims)));
                }
                if let Some(id) = wid {
                    sink(
                        id,
                        Tensor::new(vec![dims.cout, dims.cin, dims.kh, dims.kw], grad_weight(g, &xv, dims)),
                    );
                }
                if let Some(id) = bid {
                    sink(id, Tensor::new(vec![dims.cout], grad_bias(g, dims)));
                }
            },
        )
    }
}

/// Valid output index range such that `o*stride - padding + k` lies in `[0, n)`.
#[inline]
fn valid_range(o_extent: usize, n: usize, k: usize, stride: usize, padding: usize) -> (usize, usize) {
    let lo_num = padding as isize - k as isize;
    let lo = if lo_num <= 0 { 0 } else { (lo_num as usize + stride - 1) / stride };
    let hi_num = n as isize - 1 + padding as isize - k as isize;
    if hi_num < 0 {
        return (0, 0);
    }
    let hi = (hi_num as usize / stride + 1).min(o_extent);
    (lo.min(hi), hi)
}

/// `out[ow_lo..ow_hi] += wv * in_row[ow*stride + kw - padding]`, bounds-free.
#[inline]
fn axpy_row<T: Scalar>(
    orow: &mut [T],
    irow: &[T],
    wv: T,
    ow_lo: usize,
    ow_hi: usize,
    kw: usize,
    stride: usize,
    padding: usize,
) {
    if ow_lo >= ow_hi {
        return;
    }
    let iw_lo = ow_lo * stride + kw - padding;
    if stride == 1 {
        let n = ow_hi - ow_lo;
        let dst = &mut orow[ow_lo..ow_hi];
        let src = &irow[iw_lo..iw_lo + n];
        for (o, &i) in dst.iter_mut().zip(src) {
            *o += wv * i;
        }
    } else {
        let mut iw = iw_lo;
        for o in &mut orow[ow_lo..ow_hi] {
            *o += wv * irow[iw];
            iw += stride;
        }
    }
}

/// Scatter transpose of [`axpy_row`]: `in_row[..] += wv * out_row[..]`.
#[inline]
fn axpy_row_t<T: Scalar>(
    irow: &mut [T],
    grow: &[T],
    wv: T,
    ow_lo: usize,
    ow_hi: usize,
    kw: usize,
    stride: usize,
    padding: usize,
) {
    if ow_lo >= ow_hi {
        return;
    }
    let iw_lo = ow_lo * stride + kw - padding;
    if stride == 1 {
        let n = ow_hi - ow_lo;
        let dst = &mut irow[iw_lo..iw_lo + n];
        let src = &grow[ow_lo..ow_hi];
        for (i, &g) in dst.iter_mut().zip(src) {
            *i += wv * g;
        }
    } else {
        let mut iw = iw_lo;
        for &g in &grow[ow_lo..ow_hi] {
            irow[iw] += wv * g;
            iw += stride;
        }
    }
}

/// Dot product with eight independent accumulators so the lanes vectorize.
#[inline]
fn dot_row<T: Scalar>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [T::zero(); 8];
    let chunks = a.len() / 8;
    for c in 0..chunks {
        let (x, y) = (&a[c * 8..c * 8 + 8], &b[c * 8..c * 8 + 8]);
        for l in 0..8 {
            acc[l] += x[l] * y[l];
        }
    }
    let mut tail = T::zero();
    for i in chunks * 8..a.len() {
        tail += a[i] * b[i];
    }
    ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7])) + tail
}

/// Strided dot product for stride > 1 backward-weight rows.
#[inline]
fn dot_row_strided<T: Scalar>(g: &[T], i: &[T], start: usize, stride: usize) -> T {
    let mut acc = T::zero();
    let mut iw = start;
    for &gv in g {
        acc += gv * i[iw];
        iw += stride;
    }
    acc
}

fn forward<T: Scalar>(input: &[T], weight: &[T], bias: &[T], d: ConvDims) -> Vec<T> {
    let mut out = vec![T::zero(); d.batch * d.cout * d.oh * d.ow];
    let in_plane = d.h * d.w;
    let out_plane = d.oh * d.ow;
    for n in 0..d.batch {
        for co in 0..d.cout {
            let op = &mut out[(n * d.cout + co) * out_plane..][..out_plane];
            let b = bias[co];
            for v in op.iter_mut() {
                *v = b;
            }
            for ci in 0..d.cin {
                let ip = &input[(n * d.cin + ci) * in_plane..][..in_plane];
                for kh in 0..d.kh {
                    let (oh_lo, oh_hi) = valid_range(d.oh, d.h, kh, d.stride, d.padding);
                    for kw in 0..d.kw {
                        let wv = weight[((co * d.cin + ci) * d.kh + kh) * d.kw + kw];
                        if wv == T::zero() {
                            continue;
                        }
                        let (ow_lo, ow_hi) = valid_range(d.ow, d.w, kw, d.stride, d.padding);
                        for oh in oh_lo..oh_hi {
                            let ih = oh * d.stride + kh - d.padding;
                            axpy_row(
                                &mut op[oh * d.ow..][..d.ow],
                                &ip[ih * d.w..][..d.w],
                                wv,
                                ow_lo,
                                ow_hi,
                                kw,
                                d.stride,
                                d.padding,
                            );
                        }
                    }
                }
            }
        }
    }
    out
}

fn grad_input<T: Scalar>(go: &[T], weight: &[T], d: ConvDims) -> Vec<T> {
    let mut gi = vec![T::zero(); d.batch * d.cin * d.h * d.w];
    let in_plane = d.h * d.w;
    let out_plane = d.oh * d.ow;
    for n in 0..d.batch {
        for co in 0..d.cout {
            let gp = &go[(n * d.cout + co) * out_plane..][..out_plane];
            for ci in 0..d.cin {
                let ip = &mut gi[(n * d.cin + ci) * in_plane..][..in_plane];
                for kh in 0..d.kh {
                    let (oh_lo, oh_hi) = valid_range(d.oh, d.h, kh, d.stride, d.padding);
                    for kw in 0..d.kw {
                        let wv = weight[((co * d.cin + ci) * d.kh + kh) * d.kw + kw];
                        if wv == T::zero() {
                            continue;
                        }
                        let (ow_lo, ow_hi) = valid_range(d.ow, d.w, kw, d.stride, d.padding);
                        for oh in oh_lo..oh_hi {
                            let ih = oh * d.stride + kh - d.padding;
                            axpy_row_t(
                                &mut ip[ih * d.w..][..d.w],
                                &gp[oh * d.ow..][..d.ow],
                                wv,
                                ow_lo,
                                ow_hi,
                                kw,
                                d.stride,
                                d.padding,
                            );
                        }
                    }
                }
            }
        }
    }
    gi
}

fn grad_weight<T: Scalar>(go: &[T], input: &[T], d: ConvDims) -> Vec<T> {
    let mut gw = vec![T::zero(); d.cout * d.cin * d.kh * d.kw];
    let in_plane = d.h * d.w;
    let out_plane = d.oh * d.ow;
    for n in 0..d.batch {
        for co in 0..d.cout {
            let gp = &go[(n * d.cout + co) * out_plane..][..out_plane];
            for ci in 0..d.cin {
                let ip = &input[(n * d.cin + ci) * in_plane..][..in_plane];
                for kh in 0..d.kh {
                    let (oh_lo, oh_hi) = valid_range(d.oh, d.h, kh, d.stride, d.padding);
                    for kw in 0..d.kw {
                        let (ow_lo, ow_hi) = valid_range(d.ow, d.w, kw, d.stride, d.padding);
                        if ow_lo >= ow_hi {
                            continue;
                        }
                        let iw_lo = ow_lo * d.stride + kw - d.padding;
                        let mut acc = T::zero();
                        for oh in oh_lo..oh_hi {
                            let ih = oh * d.stride + kh - d.padding;
                            let grow = &gp[oh * d.ow + ow_lo..oh * d.ow + ow_hi];
                            let irow = &ip[ih * d.w..][..d.w];
                            if d.stride == 1 {
                                acc += dot_row(grow, &irow[iw_lo..iw_lo + grow.len()]);
                            } else {
                                acc += dot_row_strided(grow, irow, iw_lo, d.stride);
                            }
                        }
                        gw[((co * d.cin + ci) * d.kh + kh) * d.kw + kw] += acc;
                    }
                }
            }
        }
    }
    gw
}

fn grad_bias<T: Scalar>(go: &[T], d: ConvDims) -> Vec<T> {
    let out_plane = d.oh * d.ow;
    let mut gb = vec![T::zero(); d.cout];
    for n in 0..d.batch {
        for co in 0..d.cout {
            let gp = &go[(n * d.cout + co) * out_plane..][..out_plane];
            let mut acc = 0f64;
            for v in gp {
                acc += v.as_f64();
            }
            gb[co] += T::of_f64(acc);
        }
    }
    gb
}
