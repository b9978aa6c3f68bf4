//! Elementwise and structural operations.
//!
//! Binary operations accept three shape relations: identical shapes, a rank-0
//! scalar against anything, and the channel-repeat broadcast used by coupling
//! layers: a `C`-channel coefficient applied to an `m*C`-channel stack repeats
//! across the `m` sub-images. Reductions accumulate in `f64` and run in a
//! fixed order, so results are bit-identical across runs.

use super::tape::{node_id, record, GradSink};
use super::record_shared;
use super::{Scalar, Tensor};

#[derive(Clone, Copy, Debug)]
enum BinKind {
    Add,
    Sub,
    Mul,
    Div,
}

fn channel_axis(rank: usize) -> usize {
    match rank {
        3 => 0,
        4 => 1,
        r => panic!("channel-indexed op expects rank 3 or 4, got rank {r}"),
    }
}

/// Output shape of a broadcasting binary op, panicking on incompatibility.
fn broadcast_shape(a: &[usize], b: &[usize]) -> Vec<usize> {
    if a == b {
        return a.to_vec();
    }
    if a.is_empty() {
        return b.to_vec();
    }
    if b.is_empty() {
        return a.to_vec();
    }
    assert_eq!(
        a.len(),
        b.len(),
        "binary op: incompatible ranks for shapes {a:?} and {b:?}"
    );
    let axis = channel_axis(a.len());
    for (d, (&da, &db)) in a.iter().zip(b).enumerate() {
        if d != axis {
            assert_eq!(da, db, "binary op: dimension {d} differs: {a:?} vs {b:?}");
        }
    }
    let (ca, cb) = (a[axis], b[axis]);
    let (small, large) = if ca <= cb { (ca, cb) } else { (cb, ca) };
    assert!(
        small > 0 && large % small == 0,
        "binary op: channel counts {ca} and {cb} are not repeat-compatible ({a:?} vs {b:?})"
    );
    if ca >= cb { a.to_vec() } else { b.to_vec() }
}

/// Repeats `data` of shape `from` into shape `to` (scalar or channel repeat).
fn expand<T: Scalar>(data: &[T], from: &[usize], to: &[usize]) -> Vec<T> {
    if from == to {
        return data.to_vec();
    }
    let numel: usize = to.iter().product();
    if from.is_empty() {
        return vec![data[0]; numel];
    }
    let axis = channel_axis(to.len());
    let c_to = to[axis];
    let c_from = from[axis];
    let plane: usize = to[axis + 1..].iter().product();
    let outer: usize = to[..axis].iter().product();
    let mut out = vec![T::zero(); numel];
    for o in 0..outer {
        for c in 0..c_to {
            let src = (o * c_from + c % c_from) * plane;
            let dst = (o * c_to + c) * plane;
            out[dst..dst + plane].copy_from_slice(&data[src..src + plane]);
        }
    }
    out
}

/// Sums a full-shape gradient back down to `to` (inverse of [`expand`]).
fn reduce<T: Scalar>(full: &[T], full_shape: &[usize], to: &[usize]) -> Vec<T> {
    if full_shape == to {
        return full.to_vec();
    }
    if to.is_empty() {
        let s: f64 = full.iter().map(|v| v.as_f64()).sum();
        return vec![T::of_f64(s)];
    }
    let axis = channel_axis(full_shape.len());
    let c_full = full_shape[axis];
    let c_to = to[axis];
    let plane: usize = full_shape[axis + 1..].iter().product();
    let outer: usize = full_shape[..axis].iter().product();
    let mut acc = vec![0f64; to.iter().product()];
    for o in 0..outer {
        for c in 0..c_full {
            let src = (o * c_full + c) * plane;
            let dst = (o * c_to + c % c_to) * plane;
            for i in 0..plane {
                acc[dst + i] += full[src + i].as_f64();
            }
        }
    }
    acc.into_iter().map(T::of_f64).collect()
}

fn binary<T: Scalar>(lhs: &Tensor<T>, rhs: &Tensor<T>, kind: BinKind) -> Tensor<T> {
    let out_shape = broadcast_shape(lhs.shape(), rhs.shape());
    // Full-size operand views; only an actually-broadcast side gets copied.
    let a: std::sync::Arc<Vec<T>> = if lhs.shape() == out_shape.as_slice() {
        lhs.data_arc()
    } else {
        std::sync::Arc::new(expand(lhs.data(), lhs.shape(), &out_shape))
    };
    let b: std::sync::Arc<Vec<T>> = if rhs.shape() == out_shape.as_slice() {
        rhs.data_arc()
    } else {
        std::sync::Arc::new(expand(rhs.data(), rhs.shape(), &out_shape))
    };

    #[cfg(debug_assertions)]
    if matches!(kind, BinKind::Div) {
        if let Some(i) = b.iter().position(|v| v.as_f64().abs() < 1e-12) {
            panic!("div: numeric hazard, divisor {:?} at flat index {i}", b[i]);
        }
    }

    let out: Vec<T> = a
        .iter()
        .zip(b.iter())
        .map(|(&x, &y)| match kind {
            BinKind::Add => x + y,
            BinKind::Sub => x - y,
            BinKind::Mul => x * y,
            BinKind::Div => x / y,
        })
        .collect();

    let (lid, rid) = (node_id(lhs), node_id(rhs));
    let (lshape, rshape) = (lhs.shape().to_vec(), rhs.shape().to_vec());
    let full = out_shape.clone();
    record(&[lhs, rhs], out_shape, out, move |go, sink: &mut GradSink<T>| {
        let g = go.data();
        if let Some(id) = lid {
            let gl: Vec<T> = match kind {
                BinKind::Add | BinKind::Sub => g.to_vec(),
                BinKind::Mul => g.iter().zip(b.iter()).map(|(&go, &y)| go * y).collect(),
                BinKind::Div => g.iter().zip(b.iter()).map(|(&go, &y)| go / y).collect(),
            };
            sink(id, Tensor::new(lshape.clone(), reduce(&gl, &full, &lshape)));
        }
        if let Some(id) = rid {
            let gr: Vec<T> = match kind {
                BinKind::Add => g.to_vec(),
                BinKind::Sub => g.iter().map(|&go| -go).collect(),
                BinKind::Mul => g.iter().zip(a.iter()).map(|(&go, &x)| go * x).collect(),
                BinKind::Div => g
                    .iter()
                    .zip(a.iter().zip(b.iter()))
                    .map(|(&go, (&x, &y))| -go * x / (y * y))
                    .collect(),
            };
            sink(id, Tensor::new(rshape.clone(), reduce(&gr, &full, &rshape)));
        }
    })
}

/// Unary elementwise op: `f` maps a value, `df(x, y)` is the local derivative
/// given input and output values.
fn unary<T, F, D>(x: &Tensor<T>, f: F, df: D) -> Tensor<T>
where
    T: Scalar,
    F: Fn(T) -> T,
    D: Fn(T, T) -> T + Send + 'static,
{
    let out = std::sync::Arc::new(x.data().iter().map(|&v| f(v)).collect::<Vec<T>>());
    let xid = node_id(x);
    let xv = x.data_arc();
    let shape = x.shape().to_vec();
    let yv = std::sync::Arc::clone(&out);
    record_shared(&[x], shape.clone(), out, move |go, sink: &mut GradSink<T>| {
        if let Some(id) = xid {
            let g: Vec<T> = go
                .data()
                .iter()
                .zip(xv.iter().zip(yv.iter()))
                .map(|(&g, (&x, &y))| g * df(x, y))
                .collect();
            sink(id, Tensor::new(shape.clone(), g));
        }
    })
}

impl<T: Scalar> Tensor<T> {
    pub fn add(&self, rhs: &Tensor<T>) -> Tensor<T> {
        binary(self, rhs, BinKind::Add)
    }

    pub fn sub(&self, rhs: &Tensor<T>) -> Tensor<T> {
        binary(self, rhs, BinKind::Sub)
    }

    pub fn mul(&self, rhs: &Tensor<T>) -> Tensor<T> {
        binary(self, rhs, BinKind::Mul)
    }

    pub fn div(&self, rhs: &Tensor<T>) -> Tensor<T> {
        binary(self, rhs, BinKind::Div)
    }

    pub fn exp(&self) -> Tensor<T> {
        unary(self, |v| v.exp(), |_, y| y)
    }

    pub fn tanh(&self) -> Tensor<T> {
        unary(self, |v| v.tanh(), |_, y| T::one() - y * y)
    }

    pub fn relu(&self) -> Tensor<T> {
        unary(
            self,
            |v| if v > T::zero() { v } else { T::zero() },
            |x, _| if x > T::zero() { T::one() } else { T::zero() },
        )
    }

    /// Leaky ReLU; the gradient is `slope` for negative inputs.
    pub fn lrelu(&self, slope: f64) -> Tensor<T> {
        let s = T::of_f64(slope);
        unary(
            self,
            move |v| if v >= T::zero() { v } else { v * s },
            move |x, _| if x >= T::zero() { T::one() } else { s },
        )
    }

    /// Clamp to `[lo, hi]`; gradient is 1 inside the interval, 0 outside.
    pub fn clamp(&self, lo: f64, hi: f64) -> Tensor<T> {
        let (lo, hi) = (T::of_f64(lo), T::of_f64(hi));
        unary(
            self,
            move |v| v.max(lo).min(hi),
            move |x, _| if x >= lo && x <= hi { T::one() } else { T::zero() },
        )
    }

    pub fn square(&self) -> Tensor<T> {
        unary(self, |v| v * v, |x, _| x + x)
    }

    pub fn abs(&self) -> Tensor<T> {
        unary(
            self,
            |v| v.abs(),
            |x, _| {
                if x > T::zero() {
                    T::one()
                } else if x < T::zero() {
                    -T::one()
                } else {
                    T::zero()
                }
            },
        )
    }

    /// Elementwise square root; subgradient 0 at zero.
    pub fn sqrt(&self) -> Tensor<T> {
        unary(
            self,
            |v| v.sqrt(),
            |_, y| {
                if y > T::zero() {
                    T::one() / (y + y)
                } else {
                    T::zero()
                }
            },
        )
    }

    /// Multiplication by a constant.
    pub fn scale(&self, c: f64) -> Tensor<T> {
        let c = T::of_f64(c);
        unary(self, move |v| v * c, move |_, _| c)
    }

    /// Addition of a constant.
    pub fn offset(&self, c: f64) -> Tensor<T> {
        let c = T::of_f64(c);
        unary(self, move |v| v + c, |_, _| T::one())
    }

    pub fn neg(&self) -> Tensor<T> {
        self.scale(-1.0)
    }

    /// Same data under a new shape with equal element count.
    pub fn reshape(&self, shape: Vec<usize>) -> Tensor<T> {
        let numel: usize = shape.iter().product();
        assert_eq!(
            numel,
            self.numel(),
            "reshape: {:?} -> {:?} changes element count",
            self.shape(),
            shape
        );
        let id = node_id(self);
        let in_shape = self.shape().to_vec();
        record(&[self], shape, self.data().to_vec(), move |go, sink: &mut GradSink<T>| {
            if let Some(id) = id {
                sink(id, Tensor::new(in_shape.clone(), go.data().to_vec()));
            }
        })
    }

    /// Concatenates along the channel axis (dim 0 for rank 3, dim 1 for rank 4).
    pub fn concat_channels(parts: &[&Tensor<T>]) -> Tensor<T> {
        assert!(!parts.is_empty(), "concat_channels of zero tensors");
        let rank = parts[0].shape().len();
        let axis = channel_axis(rank);
        let mut channels = 0usize;
        for p in parts {
            assert_eq!(p.shape().len(), rank, "concat_channels: rank mismatch");
            for d in 0..rank {
                if d != axis {
                    assert_eq!(
                        p.shape()[d],
                        parts[0].shape()[d],
                        "concat_channels: dimension {d} differs: {:?} vs {:?}",
                        p.shape(),
                        parts[0].shape()
                    );
                }
            }
            channels += p.shape()[axis];
        }
        let mut out_shape = parts[0].shape().to_vec();
        out_shape[axis] = channels;

        let plane: usize = out_shape[axis + 1..].iter().product();
        let outer: usize = out_shape[..axis].iter().product();
        let mut out = vec![T::zero(); out_shape.iter().product()];
        for o in 0..outer {
            let mut c0 = 0usize;
            for p in parts {
                let pc = p.shape()[axis];
                let src = o * pc * plane;
                let dst = (o * channels + c0) * plane;
                out[dst..dst + pc * plane].copy_from_slice(&p.data()[src..src + pc * plane]);
                c0 += pc;
            }
        }

        let metas: Vec<(Option<usize>, Vec<usize>)> =
            parts.iter().map(|p| (node_id(p), p.shape().to_vec())).collect();
        record(parts, out_shape, out, move |go, sink: &mut GradSink<T>| {
            let g = go.data();
            let mut c0 = 0usize;
            for (id, shape) in &metas {
                let pc = shape[axis];
                if let Some(id) = id {
                    let mut gp = vec![T::zero(); shape.iter().product()];
                    for o in 0..outer {
                        let src = (o * channels + c0) * plane;
                        let dst = o * pc * plane;
                        gp[dst..dst + pc * plane].copy_from_slice(&g[src..src + pc * plane]);
                    }
                    sink(*id, Tensor::new(shape.clone(), gp));
                }
                c0 += pc;
            }
        })
    }

    /// Channel range `[from, to)` as its own tensor.
    pub fn slice_channels(&self, from: usize, to: usize) -> Tensor<T> {
        let rank = self.shape().len();
        let axis = channel_axis(rank);
        let c = self.shape()[axis];
        assert!(
            from < to && to <= c,
            "slice_channels: range {from}..{to} out of 0..{c} for shape {:?}",
            self.shape()
        );
        let plane: usize = self.shape()[axis + 1..].iter().product();
        let outer: usize = self.shape()[..axis].iter().product();
        let nc = to - from;
        let mut out_shape = self.shape().to_vec();
        out_shape[axis] = nc;

        let mut out = vec![T::zero(); out_shape.iter().product()];
        for o in 0..outer {
            let src = (o * c + from) * plane;
            let dst = o * nc * plane;
            out[dst..dst + nc * plane].copy_from_slice(&self.data()[src..src + nc * plane]);
        }

        let id = node_id(self);
        let in_shape = self.shape().to_vec();
        record(&[self], out_shape, out, move |go, sink: &mut GradSink<T>| {
            if let Some(id) = id {
                let g = go.data();
                let mut gi = vec![T::zero(); in_shape.iter().product()];
                for o in 0..outer {
                    let dst = (o * c + from) * plane;
                    let src = o * nc * plane;
                    gi[dst..dst + nc * plane].copy_from_slice(&g[src..src + nc * plane]);
                }
                sink(id, Tensor::new(in_shape.clone(), gi));
            }
        })
    }

    /// Splits along the channel axis at `at`; the inverse of a two-part concat.
    pub fn split_channels(&self, at: usize) -> (Tensor<T>, Tensor<T>) {
        let axis = channel_axis(self.shape().len());
        let c = self.shape()[axis];
        assert!(at > 0 && at < c, "split_channels: split point {at} out of 1..{c}");
        (self.slice_channels(0, at), self.slice_channels(at, c))
    }

    /// Spatial window `[y0, y0+h) x [x0, x0+w)` of a rank-3/4 tensor.
    pub fn crop_spatial(&self, y0: usize, x0: usize, h: usize, w: usize) -> Tensor<T> {
        let rank = self.shape().len();
        assert!(rank == 3 || rank == 4, "crop_spatial expects rank 3 or 4");
        let (ih, iw) = (self.shape()[rank - 2], self.shape()[rank - 1]);
        assert!(
            h >= 1 && w >= 1 && y0 + h <= ih && x0 + w <= iw,
            "crop_spatial: window ({y0},{x0})+{h}x{w} outside {ih}x{iw}"
        );
        let planes: usize = self.shape()[..rank - 2].iter().product();
        let mut out_shape = self.shape().to_vec();
        out_shape[rank - 2] = h;
        out_shape[rank - 1] = w;

        let src = self.data();
        let mut out = vec![T::zero(); planes * h * w];
        for p in 0..planes {
            for y in 0..h {
                let s = (p * ih + y0 + y) * iw + x0;
                let d = (p * h + y) * w;
                out[d..d + w].copy_from_slice(&src[s..s + w]);
            }
        }

        let id = node_id(self);
        let in_shape = self.shape().to_vec();
        record(&[self], out_shape, out, move |go, sink: &mut GradSink<T>| {
            if let Some(id) = id {
                let g = go.data();
                let mut gi = vec![T::zero(); planes * ih * iw];
                for p in 0..planes {
                    for y in 0..h {
                        let d = (p * ih + y0 + y) * iw + x0;
                        let s = (p * h + y) * w;
                        gi[d..d + w].copy_from_slice(&g[s..s + w]);
                    }
                }
                sink(id, Tensor::new(in_shape.clone(), gi));
            }
        })
    }

    /// Nearest-neighbor 2x spatial upsampling.
    pub fn upsample_nearest_2x(&self) -> Tensor<T> {
        let rank = self.shape().len();
        assert!(rank == 3 || rank == 4, "upsample_nearest_2x expects rank 3 or 4");
        let (h, w) = (self.shape()[rank - 2], self.shape()[rank - 1]);
        let planes: usize = self.shape()[..rank - 2].iter().product();
        let mut out_shape = self.shape().to_vec();
        out_shape[rank - 2] = 2 * h;
        out_shape[rank - 1] = 2 * w;

        let src = self.data();
        let mut out = vec![T::zero(); planes * 4 * h * w];
        for p in 0..planes {
            let sp = p * h * w;
            let dp = p * 4 * h * w;
            for y in 0..h {
                for x in 0..w {
                    let v = src[sp + y * w + x];
                    let base = dp + 2 * y * 2 * w + 2 * x;
                    out[base] = v;
                    out[base + 1] = v;
                    out[base + 2 * w] = v;
                    out[base + 2 * w + 1] = v;
                }
            }
        }

        let id = node_id(self);
        let in_shape = self.shape().to_vec();
        record(&[self], out_shape, out, move |go, sink: &mut GradSink<T>| {
            if let Some(id) = id {
                let g = go.data();
                let mut gi = vec![T::zero(); planes * h * w];
                for p in 0..planes {
                    let sp = p * 4 * h * w;
                    let dp = p * h * w;
                    for y in 0..h {
                        for x in 0..w {
                            let base = sp + 2 * y * 2 * w + 2 * x;
                            gi[dp + y * w + x] =
                                g[base] + g[base + 1] + g[base + 2 * w] + g[base + 2 * w + 1];
                        }
                    }
                }
                sink(id, Tensor::new(in_shape.clone(), gi));
            }
        })
    }

    /// Mean over all elements; `f64` accumulator, fixed order.
    pub fn mean(&self) -> Tensor<T> {
        let n = self.numel();
        assert!(n > 0, "mean of an empty tensor");
        let s: f64 = self.data().iter().map(|v| v.as_f64()).sum();
        let id = node_id(self);
        let shape = self.shape().to_vec();
        let inv = 1.0 / n as f64;
        record(&[self], vec![], vec![T::of_f64(s * inv)], move |go, sink: &mut GradSink<T>| {
            if let Some(id) = id {
                let g = T::of_f64(go.item().as_f64() * inv);
                sink(id, Tensor::full(shape.clone(), g));
            }
        })
    }

    /// Sum over all elements; `f64` accumulator, fixed order.
    pub fn sum(&self) -> Tensor<T> {
        let s: f64 = self.data().iter().map(|v| v.as_f64()).sum();
        let id = node_id(self);
        let shape = self.shape().to_vec();
        record(&[self], vec![], vec![T::of_f64(s)], move |go, sink: &mut GradSink<T>| {
            if let Some(id) = id {
                sink(id, Tensor::full(shape.clone(), go.item()));
            }
        })
    }

    /// Box mean over a `(2r+1)^2` window per channel, reflected borders.
    ///
    /// Reflection factorizes per axis, so the window runs as two separable
    /// 1-D passes over precomputed reflected index tables.
    pub fn box_mean(&self, radius: usize) -> Tensor<T> {
        assert!(radius >= 1, "box_mean: radius must be >= 1");
        let rank = self.shape().len();
        assert!(rank == 3 || rank == 4, "box_mean expects rank 3 or 4");
        let (h, w) = (self.shape()[rank - 2], self.shape()[rank - 1]);
        let planes: usize = self.shape()[..rank - 2].iter().product();

        let out = box_mean_forward(self.data(), planes, h, w, radius);
        let id = node_id(self);
        let shape = self.shape().to_vec();
        record(&[self], shape.clone(), out, move |go, sink: &mut GradSink<T>| {
            if let Some(id) = id {
                // The transpose of a reflected box mean is the scatter of the
                // same window; running the gather over the gradient with the
                // same tables realizes it axis by axis.
                let gi = box_mean_backward(go.data(), planes, h, w, radius);
                sink(id, Tensor::new(shape.clone(), gi));
            }
        })
    }
}

/// Reflected source index for each padded position `0..n+2r` (position `i`
/// maps to offset `i - r`).
fn reflect_table(n: usize, r: usize) -> Vec<usize> {
    (0..n + 2 * r).map(|i| reflect(i as isize - r as isize, n)).collect()
}

fn box_mean_forward<T: Scalar>(src: &[T], planes: usize, h: usize, w: usize, r: usize) -> Vec<T> {
    let tx = reflect_table(w, r);
    let ty = reflect_table(h, r);
    let side = 2 * r + 1;
    let norm = 1.0 / (side * side) as f64;

    // Horizontal pass: window sums per row via prefix sums of the padded row.
    let mut tmp = vec![0f64; planes * h * w];
    let mut prefix = vec![0f64; w + 2 * r + 1];
    for row in 0..planes * h {
        let s = &src[row * w..][..w];
        prefix[0] = 0.0;
        for i in 0..w + 2 * r {
            prefix[i + 1] = prefix[i] + s[tx[i]].as_f64();
        }
        let t = &mut tmp[row * w..][..w];
        for x in 0..w {
            t[x] = prefix[x + side] - prefix[x];
        }
    }

    // Vertical pass: sliding sum over rows of the horizontal result.
    let mut out = vec![T::zero(); planes * h * w];
    let mut acc = vec![0f64; w];
    for p in 0..planes {
        let tp = &tmp[p * h * w..][..h * w];
        acc.iter_mut().for_each(|v| *v = 0.0);
        for d in 0..side {
            let yy = ty[d];
            for x in 0..w {
                acc[x] += tp[yy * w + x];
            }
        }
        let op = &mut out[p * h * w..][..h * w];
        for y in 0..h {
            for x in 0..w {
                op[y * w + x] = T::of_f64(acc[x] * norm);
            }
            if y + 1 < h {
                let add = ty[y + side];
                let sub = ty[y];
                for x in 0..w {
                    acc[x] += tp[add * w + x] - tp[sub * w + x];
                }
            }
        }
    }
    out
}

/// Adjoint of [`box_mean_forward`]: zero-padded sliding sums of the gradient
/// followed by a fold through the reflection tables, vertical then
/// horizontal.
fn box_mean_backward<T: Scalar>(go: &[T], planes: usize, h: usize, w: usize, r: usize) -> Vec<T> {
    let tx = reflect_table(w, r);
    let ty = reflect_table(h, r);
    let side = 2 * r + 1;
    let norm = 1.0 / (side * side) as f64;

    // Transpose of the vertical pass.
    let mut mid = vec![0f64; planes * h * w];
    let mut acc = vec![0f64; w];
    for p in 0..planes {
        let gp = &go[p * h * w..][..h * w];
        let mp = &mut mid[p * h * w..][..h * w];
        acc.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..h + 2 * r {
            if i < h {
                for x in 0..w {
                    acc[x] += gp[i * w + x].as_f64();
                }
            }
            if i >= side {
                let leave = i - side;
                for x in 0..w {
                    acc[x] -= gp[leave * w + x].as_f64();
                }
            }
            let dst = ty[i];
            for x in 0..w {
                mp[dst * w + x] += acc[x];
            }
        }
    }

    // Transpose of the horizontal pass.
    let mut out = vec![0f64; planes * h * w];
    let mut padded = vec![0f64; w + 2 * r];
    for row in 0..planes * h {
        let g = &mid[row * w..][..w];
        let mut running = 0f64;
        for i in 0..w + 2 * r {
            if i < w {
                running += g[i];
            }
            if i >= side {
                running -= g[i - side];
            }
            padded[i] = running;
        }
        let orow = &mut out[row * w..][..w];
        for i in 0..w + 2 * r {
            orow[tx[i]] += padded[i];
        }
    }
    out.into_iter().map(|v| T::of_f64(v * norm)).collect()
}

/// Mirror index without repeating the border sample.
pub(crate) fn reflect(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let mut i = i.rem_euclid(period);
    if i >= n as isize {
        i = period - i;
    }
    i as usize
}

#[cfg(test)]
mod tests {
    use super::super::Tape;
    use super::*;

    fn assert_close(actual: &[f32], expected: &[f32], tol: f32) {
        assert_eq!(actual.len(), expected.len());
        for (i, (a, e)) in actual.iter().zip(expected).enumerate() {
            assert!((a - e).abs() <= tol, "index {i}: {a} vs {e}");
        }
    }

    #[test]
    fn exp_values() {
        let x = Tensor::new(vec![3], vec![0.0f32, 1.0, -1.0]);
        assert_close(x.exp().data(), &[1.0, 2.718_281_8, 0.367_879_4], 1e-6);
    }

    #[test]
    fn clamp_values_and_gradient() {
        let tape = Tape::new();
        let mut x = Tensor::new(vec![3], vec![1.3f32, -0.2, 0.5]);
        tape.watch(&mut x);
        let y = x.clamp(0.0, 1.0);
        assert_close(y.data(), &[1.0, 0.0, 0.5], 0.0);
        let g = y.sum().backward().get(&x);
        // Gradient is 0 outside [lo, hi], 1 inside.
        assert_close(g.data(), &[0.0, 0.0, 1.0], 0.0);
    }

    #[test]
    fn lrelu_negative_slope_gradient() {
        let tape = Tape::new();
        let mut x = Tensor::new(vec![2], vec![-2.0f32, 3.0]);
        tape.watch(&mut x);
        let y = x.lrelu(0.2);
        assert_close(y.data(), &[-0.4, 3.0], 1e-7);
        let g = y.sum().backward().get(&x);
        assert_close(g.data(), &[0.2, 1.0], 0.0);
    }

    #[test]
    fn backward_square() {
        // loss = x^2 at x = 3 -> grad 6
        let tape = Tape::new();
        let mut x = Tensor::scalar(3.0f32);
        tape.watch(&mut x);
        let loss = x.square();
        let g = loss.backward().get(&x);
        assert_eq!(g.item(), 6.0);
    }

    #[test]
    fn backward_mean_exp() {
        // loss = mean(exp(x)) over 4 elements -> grad exp(x)/4
        let tape = Tape::new();
        let mut x = Tensor::new(vec![4], vec![0.0f32, 0.5, -0.5, 1.0]);
        tape.watch(&mut x);
        let loss = x.exp().mean();
        let g = loss.backward().get(&x);
        let expect: Vec<f32> = x.data().iter().map(|v| v.exp() / 4.0).collect();
        assert_close(g.data(), &expect, 1e-7);
    }

    #[test]
    fn gradient_accumulates_across_uses() {
        // loss = x*x + x -> grad 2x + 1
        let tape = Tape::new();
        let mut x = Tensor::scalar(3.0f32);
        tape.watch(&mut x);
        let loss = x.mul(&x).add(&x);
        assert_eq!(loss.backward().get(&x).item(), 7.0);
    }

    #[test]
    fn unused_parameter_gets_zero_gradient() {
        let tape = Tape::new();
        let mut x = Tensor::scalar(2.0f32);
        let mut unused = Tensor::new(vec![2, 2], vec![1.0f32; 4]);
        tape.watch(&mut x);
        tape.watch(&mut unused);
        let g = x.square().backward().get(&unused);
        assert_eq!(g.shape(), &[2, 2]);
        assert!(g.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn channel_broadcast_repeats_coefficient() {
        // 3-channel coefficient against a 6-channel stack repeats per sub-image.
        let coeff = Tensor::new(vec![3, 1, 1], vec![1.0f32, 2.0, 3.0]);
        let stack = Tensor::new(vec![6, 1, 1], vec![1.0f32; 6]);
        let out = stack.mul(&coeff);
        assert_close(out.data(), &[1.0, 2.0, 3.0, 1.0, 2.0, 3.0], 0.0);
    }

    #[test]
    fn channel_broadcast_gradient_sums_repeats() {
        let tape = Tape::new();
        let mut coeff = Tensor::new(vec![3, 1, 1], vec![1.0f32, 2.0, 3.0]);
        tape.watch(&mut coeff);
        let stack = Tensor::new(vec![6, 1, 1], vec![1.0f32, 1.0, 1.0, 2.0, 2.0, 2.0]);
        let loss = stack.mul(&coeff).sum();
        let g = loss.backward().get(&coeff);
        // d/dcoeff sums over both repeats: 1 + 2 = 3 per channel.
        assert_close(g.data(), &[3.0, 3.0, 3.0], 1e-7);
    }

    #[test]
    fn scalar_broadcast() {
        let tape = Tape::new();
        let mut gamma = Tensor::scalar(0.5f32);
        tape.watch(&mut gamma);
        let x = Tensor::new(vec![4], vec![1.0f32, 2.0, 3.0, 4.0]);
        let y = x.mul(&gamma);
        assert_close(y.data(), &[0.5, 1.0, 1.5, 2.0], 0.0);
        let g = y.sum().backward().get(&gamma);
        assert_eq!(g.item(), 10.0);
    }

    #[test]
    #[should_panic(expected = "dimension 1 differs")]
    fn incompatible_shapes_panic() {
        let a = Tensor::<f32>::zeros(vec![3, 4, 4]);
        let b = Tensor::<f32>::zeros(vec![3, 5, 4]);
        let _ = a.add(&b);
    }

    #[test]
    fn split_concat_round_trip_is_exact() {
        let a = Tensor::new(vec![2, 2, 2], (0..8).map(|v| v as f32).collect());
        let b = Tensor::new(vec![1, 2, 2], (8..12).map(|v| v as f32).collect());
        let joined = Tensor::concat_channels(&[&a, &b]);
        let (sa, sb) = joined.split_channels(2);
        assert_eq!(sa.data(), a.data());
        assert_eq!(sb.data(), b.data());
    }

    #[test]
    fn upsample_constant() {
        let t = Tensor::new(vec![1, 1, 1], vec![7.0f32]);
        let u = t.upsample_nearest_2x();
        assert_eq!(u.shape(), &[1, 2, 2]);
        assert_close(u.data(), &[7.0; 4], 0.0);
    }

    #[test]
    fn mean_of_known_values() {
        let t = Tensor::new(vec![4], vec![1.0f32, 2.0, 3.0, 4.0]);
        assert_eq!(t.mean().item(), 2.5);
    }

    #[test]
    fn box_mean_constant_invariance() {
        let t = Tensor::full(vec![2, 5, 6], 3.25f32);
        let b = t.box_mean(2);
        assert_close(b.data(), t.data(), 1e-6);
    }

    #[test]
    fn reflect_indexing() {
        assert_eq!(reflect(-1, 5), 1);
        assert_eq!(reflect(-2, 5), 2);
        assert_eq!(reflect(5, 5), 3);
        assert_eq!(reflect(6, 5), 2);
        assert_eq!(reflect(0, 1), 0);
        assert_eq!(reflect(-3, 1), 0);
    }

    #[test]
    #[should_panic(expected = "numeric hazard")]
    #[cfg(debug_assertions)]
    fn div_by_tiny_is_flagged() {
        let a = Tensor::new(vec![2], vec![1.0f32, 1.0]);
        let b = Tensor::new(vec![2], vec![1.0f32, 1e-20]);
        let _ = a.div(&b);
    }

    #[test]
    #[should_panic(expected = "requires a scalar loss")]
    fn backward_on_non_scalar_panics() {
        let tape = Tape::new();
        let mut x = Tensor::new(vec![2], vec![1.0f32, 2.0]);
        tape.watch(&mut x);
        let y = x.square();
        let _ = y.backward();
    }

    #[test]
    fn determinism_bitwise() {
        let compute = || {
            let x = Tensor::new(vec![32], (0..32).map(|v| (v as f32) * 0.173 - 2.0).collect());
            x.exp().mul(&x.tanh()).mean().item().to_bits()
        };
        assert_eq!(compute(), compute());
    }
}
