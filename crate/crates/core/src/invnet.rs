//! The invertible generator.
//!
//! An input image is squeezed into four half-resolution sub-images following
//! the spatial checkerboard pattern, the sub-images are grouped into an
//! `a`-part and a `b`-part, and `K` affine coupling layers transform the two
//! parts alternately:
//!
//! ```text
//! forward:  x_b' = s_a o x_b + t_a      s_a = exp(h_a(x_a)),  t_a = g_a(x_a)
//!           x_a' = s_b o x_a + t_b      s_b = exp(h_b(x_b')), t_b = g_b(x_b')
//! inverse:  y_a' = (y_a - t_b) / s_b    from h_b, g_b of y_b
//!           y_b' = (y_b - t_a) / s_a    from h_a, g_a of the recovered y_a'
//! ```
//!
//! The same weights serve both directions, so the map is exactly invertible
//! for any parameter values. Each scale/translation subnet is three 3x3
//! convolutions with ReLU between them and a trainable scalar `gamma` on the
//! output; `gamma = 0` makes the whole network the identity, which is the
//! initialization. The per-layer `(s, t)` coefficient maps are recorded in a
//! trace consumed by the progressive enhancer and the consistency loss.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::tensor::{node_id, record, Scalar, Tensor};

/// Standard deviation for convolution weight initialization.
const WEIGHT_STD: f64 = 0.02;

/// Number of squeezed sub-images assigned to the `a`-part.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SplitScheme {
    n: usize,
}

impl SplitScheme {
    pub fn new(n: usize) -> Self {
        assert!((1..=3).contains(&n), "split scheme takes 1..=3 sub-images, got {n}");
        SplitScheme { n }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Channels of the `a`-part (3 per sub-image).
    pub fn a_channels(&self) -> usize {
        3 * self.n
    }

    pub fn b_channels(&self) -> usize {
        3 * (4 - self.n)
    }
}

impl Default for SplitScheme {
    fn default() -> Self {
        SplitScheme::new(2)
    }
}

/// Splits an image into four half-resolution sub-images.
///
/// Sub-image `0` holds the (even row, even col) pixels, `1` (even, odd),
/// `2` (odd, even), `3` (odd, odd). [`unsqueeze`] is the exact inverse.
pub fn squeeze<T: Scalar>(img: &Tensor<T>) -> [Tensor<T>; 4] {
    let rank = img.shape().len();
    assert!(rank == 3 || rank == 4, "squeeze expects rank 3 or 4, got {:?}", img.shape());
    let (h, w) = (img.shape()[rank - 2], img.shape()[rank - 1]);
    assert!(
        h % 2 == 0 && w % 2 == 0,
        "squeeze requires even spatial dims, got {h}x{w}; pad_to_even first"
    );
    let planes: usize = img.shape()[..rank - 2].iter().product();
    let (sh, sw) = (h / 2, w / 2);
    let mut out_shape = img.shape().to_vec();
    out_shape[rank - 2] = sh;
    out_shape[rank - 1] = sw;

    let make = |dy: usize, dx: usize| -> Tensor<T> {
        let src = img.data();
        let mut data = vec![T::zero(); planes * sh * sw];
        for p in 0..planes {
            for y in 0..sh {
                for x in 0..sw {
                    data[(p * sh + y) * sw + x] = src[(p * h + 2 * y + dy) * w + 2 * x + dx];
                }
            }
        }
        let id = node_id(img);
        let in_shape = img.shape().to_vec();
        record(&[img], out_shape.clone(), data, move |go, sink| {
            if let Some(id) = id {
                let g = go.data();
                let mut gi = vec![T::zero(); planes * h * w];
                for p in 0..planes {
                    for y in 0..sh {
                        for x in 0..sw {
                            gi[(p * h + 2 * y + dy) * w + 2 * x + dx] = g[(p * sh + y) * sw + x];
                        }
                    }
                }
                sink(id, Tensor::new(in_shape.clone(), gi));
            }
        })
    };

    [make(0, 0), make(0, 1), make(1, 0), make(1, 1)]
}

/// Recomposes four sub-images into the full-resolution image; exact inverse
/// of [`squeeze`].
pub fn unsqueeze<T: Scalar>(subs: &[Tensor<T>; 4]) -> Tensor<T> {
    let rank = subs[0].shape().len();
    for s in subs {
        assert_eq!(s.shape(), subs[0].shape(), "unsqueeze: sub-image shapes differ");
    }
    let (sh, sw) = (subs[0].shape()[rank - 2], subs[0].shape()[rank - 1]);
    let planes: usize = subs[0].shape()[..rank - 2].iter().product();
    let (h, w) = (2 * sh, 2 * sw);
    let mut out_shape = subs[0].shape().to_vec();
    out_shape[rank - 2] = h;
    out_shape[rank - 1] = w;

    let offsets = [(0usize, 0usize), (0, 1), (1, 0), (1, 1)];
    let mut data = vec![T::zero(); planes * h * w];
    for (s, &(dy, dx)) in subs.iter().zip(&offsets) {
        let src = s.data();
        for p in 0..planes {
            for y in 0..sh {
                for x in 0..sw {
                    data[(p * h + 2 * y + dy) * w + 2 * x + dx] = src[(p * sh + y) * sw + x];
                }
            }
        }
    }

    let ids: Vec<Option<usize>> = subs.iter().map(node_id).collect();
    let sub_shape = subs[0].shape().to_vec();
    let inputs: Vec<&Tensor<T>> = subs.iter().collect();
    record(&inputs, out_shape, data, move |go, sink| {
        let g = go.data();
        for (id, &(dy, dx)) in ids.iter().zip(&offsets) {
            if let Some(id) = id {
                let mut gs = vec![T::zero(); planes * sh * sw];
                for p in 0..planes {
                    for y in 0..sh {
                        for x in 0..sw {
                            gs[(p * sh + y) * sw + x] = g[(p * h + 2 * y + dy) * w + 2 * x + dx];
                        }
                    }
                }
                sink(*id, Tensor::new(sub_shape.clone(), gs));
            }
        }
    })
}

/// Concatenates the four sub-images into the `(a, b)` parts of a split.
pub fn group<T: Scalar>(subs: &[Tensor<T>; 4], split: SplitScheme) -> (Tensor<T>, Tensor<T>) {
    let n = split.n();
    let a: Vec<&Tensor<T>> = subs[..n].iter().collect();
    let b: Vec<&Tensor<T>> = subs[n..].iter().collect();
    (Tensor::concat_channels(&a), Tensor::concat_channels(&b))
}

/// Splits the `(a, b)` parts back into four 3-channel sub-images.
pub fn ungroup<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>, split: SplitScheme) -> [Tensor<T>; 4] {
    let n = split.n();
    let mut out: Vec<Tensor<T>> = Vec::with_capacity(4);
    for i in 0..n {
        out.push(a.slice_channels(3 * i, 3 * i + 3));
    }
    for i in 0..(4 - n) {
        out.push(b.slice_channels(3 * i, 3 * i + 3));
    }
    out.try_into().unwrap_or_else(|_| unreachable!())
}

/// One scale or translation subnet: three 3x3 convolutions with ReLU after
/// the first two, then a trainable scalar multiplier.
#[derive(Clone, Debug)]
pub struct SubNet<T: Scalar = f32> {
    pub w1: Tensor<T>,
    pub b1: Tensor<T>,
    pub w2: Tensor<T>,
    pub b2: Tensor<T>,
    pub w3: Tensor<T>,
    pub b3: Tensor<T>,
    pub gamma: Tensor<T>,
}

impl<T: Scalar> SubNet<T> {
    pub fn init(cin: usize, width: usize, rng: &mut impl Rng) -> Self {
        let normal = Normal::new(0.0, WEIGHT_STD).unwrap();
        let mut conv = |cout: usize, cin: usize| -> (Tensor<T>, Tensor<T>) {
            let w: Vec<T> =
                (0..cout * cin * 9).map(|_| T::of_f64(normal.sample(rng))).collect();
            (Tensor::new(vec![cout, cin, 3, 3], w), Tensor::zeros(vec![cout]))
        };
        let (w1, b1) = conv(width, cin);
        let (w2, b2) = conv(width, width);
        let (w3, b3) = conv(3, width);
        SubNet { w1, b1, w2, b2, w3, b3, gamma: Tensor::scalar(T::zero()) }
    }

    /// Raw map: conv-ReLU-conv-ReLU-conv, optional bounded squash, times gamma.
    ///
    /// `stability_clamp = Some(c)` replaces the raw output by `c*tanh(raw/c)`
    /// before the gamma multiply; scale subnets use it to bound the exponent.
    pub fn eval(&self, x: &Tensor<T>, stability_clamp: Option<f64>) -> Tensor<T> {
        let unbatched = x.shape().len() == 3;
        let x4 = if unbatched {
            let mut s = vec![1usize];
            s.extend_from_slice(x.shape());
            x.reshape(s)
        } else {
            x.clone()
        };
        let t1 = x4.conv2d(&self.w1, &self.b1, 1, 1).relu();
        let t2 = t1.conv2d(&self.w2, &self.b2, 1, 1).relu();
        let mut raw = t2.conv2d(&self.w3, &self.b3, 1, 1);
        if let Some(c) = stability_clamp {
            raw = raw.scale(1.0 / c).tanh().scale(c);
        }
        let out = raw.mul(&self.gamma);
        if unbatched {
            out.reshape(out.shape()[1..].to_vec())
        } else {
            out
        }
    }

    fn for_each_param(&self, f: &mut impl FnMut(&'static str, &Tensor<T>)) {
        f("w1", &self.w1);
        f("b1", &self.b1);
        f("w2", &self.w2);
        f("b2", &self.b2);
        f("w3", &self.w3);
        f("b3", &self.b3);
        f("gamma", &self.gamma);
    }

    fn for_each_param_mut(&mut self, f: &mut impl FnMut(&'static str, &mut Tensor<T>)) {
        f("w1", &mut self.w1);
        f("b1", &mut self.b1);
        f("w2", &mut self.w2);
        f("b2", &mut self.b2);
        f("w3", &mut self.w3);
        f("b3", &mut self.b3);
        f("gamma", &mut self.gamma);
    }
}

/// Scale/translation coefficient maps of one coupling layer, each
/// `3 x H/2 x W/2` (times batch). Scales are exponentials, strictly positive.
#[derive(Clone, Debug)]
pub struct LayerCoeffs<T: Scalar = f32> {
    pub s_a: Tensor<T>,
    pub t_a: Tensor<T>,
    pub s_b: Tensor<T>,
    pub t_b: Tensor<T>,
}

/// Per-layer coefficients captured during one pass, indexed by layer.
pub type CoeffTrace<T> = Vec<LayerCoeffs<T>>;

/// One affine coupling layer; the same parameters serve both directions.
#[derive(Clone, Debug)]
pub struct CouplingLayer<T: Scalar = f32> {
    pub h_a: SubNet<T>,
    pub g_a: SubNet<T>,
    pub h_b: SubNet<T>,
    pub g_b: SubNet<T>,
}

impl<T: Scalar> CouplingLayer<T> {
    pub fn init(split: SplitScheme, width: usize, rng: &mut impl Rng) -> Self {
        CouplingLayer {
            h_a: SubNet::init(split.a_channels(), width, rng),
            g_a: SubNet::init(split.a_channels(), width, rng),
            h_b: SubNet::init(split.b_channels(), width, rng),
            g_b: SubNet::init(split.b_channels(), width, rng),
        }
    }

    /// Forward coupling transform; 3-channel coefficients broadcast over the
    /// sub-images stacked in the other part.
    pub fn forward(
        &self,
        x_a: &Tensor<T>,
        x_b: &Tensor<T>,
        stability_clamp: Option<f64>,
    ) -> (Tensor<T>, Tensor<T>, LayerCoeffs<T>) {
        let s_a = self.h_a.eval(x_a, stability_clamp).exp();
        let t_a = self.g_a.eval(x_a, None);
        let x_b_next = x_b.mul(&s_a).add(&t_a);
        let s_b = self.h_b.eval(&x_b_next, stability_clamp).exp();
        let t_b = self.g_b.eval(&x_b_next, None);
        let x_a_next = x_a.mul(&s_b).add(&t_b);
        (x_a_next, x_b_next, LayerCoeffs { s_a, t_a, s_b, t_b })
    }

    /// Exact algebraic inverse of [`CouplingLayer::forward`].
    pub fn backward(
        &self,
        y_a: &Tensor<T>,
        y_b: &Tensor<T>,
        stability_clamp: Option<f64>,
    ) -> (Tensor<T>, Tensor<T>, LayerCoeffs<T>) {
        let s_b = self.h_b.eval(y_b, stability_clamp).exp();
        let t_b = self.g_b.eval(y_b, None);
        let y_a_prev = y_a.sub(&t_b).div(&s_b);
        let s_a = self.h_a.eval(&y_a_prev, stability_clamp).exp();
        let t_a = self.g_a.eval(&y_a_prev, None);
        let y_b_prev = y_b.sub(&t_a).div(&s_a);
        (y_a_prev, y_b_prev, LayerCoeffs { s_a, t_a, s_b, t_b })
    }

    fn for_each_subnet(&self, f: &mut impl FnMut(&'static str, &SubNet<T>)) {
        f("ha", &self.h_a);
        f("ga", &self.g_a);
        f("hb", &self.h_b);
        f("gb", &self.g_b);
    }

    fn for_each_subnet_mut(&mut self, f: &mut impl FnMut(&'static str, &mut SubNet<T>)) {
        f("ha", &mut self.h_a);
        f("ga", &mut self.g_a);
        f("hb", &mut self.h_b);
        f("gb", &mut self.g_b);
    }
}

/// The invertible generator: `K` coupling layers over a fixed split scheme.
#[derive(Clone, Debug)]
pub struct InvNet<T: Scalar = f32> {
    pub layers: Vec<CouplingLayer<T>>,
    pub split: SplitScheme,
    /// Bound `c` for the scale subnets' raw output, `None` to disable.
    pub stability_clamp: Option<f64>,
    /// Hidden width of the subnets, kept for serialization.
    pub width: usize,
}

impl<T: Scalar> InvNet<T> {
    /// Identity-initialized network: random convolutions, all gammas zero.
    pub fn init(
        k: usize,
        split: SplitScheme,
        width: usize,
        stability_clamp: Option<f64>,
        rng: &mut impl Rng,
    ) -> Self {
        assert!(k >= 1, "invertible net needs at least one coupling layer");
        let layers = (0..k).map(|_| CouplingLayer::init(split, width, rng)).collect();
        InvNet { layers, split, stability_clamp, width }
    }

    /// Randomly parameterized network (nonzero gammas), mainly for
    /// invertibility checks.
    pub fn init_random(
        k: usize,
        split: SplitScheme,
        width: usize,
        stability_clamp: Option<f64>,
        gamma_std: f64,
        rng: &mut impl Rng,
    ) -> Self {
        let mut net = Self::init(k, split, width, stability_clamp, rng);
        let normal = Normal::new(0.0, gamma_std).unwrap();
        net.for_each_param_mut(&mut |name, p| {
            if name.ends_with("gamma") {
                *p = Tensor::scalar(T::of_f64(normal.sample(rng)));
            }
        });
        net
    }

    pub fn k(&self) -> usize {
        self.layers.len()
    }

    /// Enhancement direction: layers in order on the grouped sub-images.
    pub fn forward(&self, subs: &[Tensor<T>; 4]) -> ([Tensor<T>; 4], CoeffTrace<T>) {
        let (mut a, mut b) = group(subs, self.split);
        let mut trace = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let (na, nb, coeffs) = layer.forward(&a, &b, self.stability_clamp);
            a = na;
            b = nb;
            trace.push(coeffs);
        }
        (ungroup(&a, &b, self.split), trace)
    }

    /// Degradation direction: layers in reverse order, exact inverse of
    /// [`InvNet::forward`]. The trace stays indexed by layer.
    pub fn inverse(&self, subs: &[Tensor<T>; 4]) -> ([Tensor<T>; 4], CoeffTrace<T>) {
        let (mut a, mut b) = group(subs, self.split);
        let mut trace: Vec<Option<LayerCoeffs<T>>> = (0..self.layers.len()).map(|_| None).collect();
        for (k, layer) in self.layers.iter().enumerate().rev() {
            let (na, nb, coeffs) = layer.backward(&a, &b, self.stability_clamp);
            a = na;
            b = nb;
            trace[k] = Some(coeffs);
        }
        let trace = trace.into_iter().map(|c| c.unwrap()).collect();
        (ungroup(&a, &b, self.split), trace)
    }

    pub fn for_each_param(&self, f: &mut impl FnMut(String, &Tensor<T>)) {
        for (k, layer) in self.layers.iter().enumerate() {
            layer.for_each_subnet(&mut |sn, subnet| {
                subnet.for_each_param(&mut |pn, t| f(format!("k{k:02}.{sn}.{pn}"), t));
            });
        }
    }

    pub fn for_each_param_mut(&mut self, f: &mut impl FnMut(String, &mut Tensor<T>)) {
        for (k, layer) in self.layers.iter_mut().enumerate() {
            layer.for_each_subnet_mut(&mut |sn, subnet| {
                subnet.for_each_param_mut(&mut |pn, t| f(format!("k{k:02}.{sn}.{pn}"), t));
            });
        }
    }

    /// Clone whose parameters are watched on `tape`; run the pass on the
    /// clone, then look its parameter gradients up by position.
    pub fn watched(&self, tape: &crate::tensor::Tape<T>) -> InvNet<T> {
        let mut copy = self.clone();
        copy.for_each_param_mut(&mut |_, p| tape.watch(p));
        copy
    }

    pub fn param_tensors(&self) -> Vec<Tensor<T>> {
        let mut out = Vec::new();
        self.for_each_param(&mut |_, t| out.push(t.clone()));
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn rng(seed: u64) -> ChaCha20Rng {
        ChaCha20Rng::seed_from_u64(seed)
    }

    fn random_tensor(shape: Vec<usize>, rng: &mut ChaCha20Rng) -> Tensor<f32> {
        let n = shape.iter().product();
        Tensor::new(shape, (0..n).map(|_| rng.random_range(0.0..1.0)).collect())
    }

    /// Subnet with zero convolutions, a chosen last-layer bias and gamma.
    fn bias_subnet(cin: usize, bias: f32, gamma: f32) -> SubNet<f32> {
        SubNet {
            w1: Tensor::zeros(vec![1, cin, 3, 3]),
            b1: Tensor::zeros(vec![1]),
            w2: Tensor::zeros(vec![1, 1, 3, 3]),
            b2: Tensor::zeros(vec![1]),
            w3: Tensor::zeros(vec![3, 1, 3, 3]),
            b3: Tensor::full(vec![3], bias),
            gamma: Tensor::scalar(gamma),
        }
    }

    #[test]
    fn squeeze_two_by_two() {
        // 1-channel 2x2 [[1,2],[3,4]] -> sub-images [1], [2], [3], [4].
        let img = Tensor::new(vec![1, 2, 2], vec![1.0f32, 2.0, 3.0, 4.0]);
        let subs = squeeze(&img);
        for (i, expect) in [1.0, 2.0, 3.0, 4.0].iter().enumerate() {
            assert_eq!(subs[i].data(), &[*expect], "sub-image {i}");
        }
    }

    #[test]
    fn squeeze_ramp_even_indices() {
        // 4x4 ramp: sub-image 0 picks (0,0), (0,2), (2,0), (2,2).
        let img = Tensor::new(vec![1, 4, 4], (0..16).map(|v| v as f32).collect());
        let subs = squeeze(&img);
        assert_eq!(subs[0].data(), &[0.0, 2.0, 8.0, 10.0]);
    }

    #[test]
    fn unsqueeze_squeeze_bit_exact() {
        let mut r = rng(7);
        let img = random_tensor(vec![3, 8, 6], &mut r);
        let back = unsqueeze(&squeeze(&img));
        assert_eq!(back.data(), img.data());
        assert_eq!(back.shape(), img.shape());
    }

    #[test]
    fn subnet_gamma_zero_gives_unit_scale() {
        let mut r = rng(1);
        let net = SubNet::<f32>::init(6, 4, &mut r);
        let x = random_tensor(vec![1, 6, 4, 4], &mut r);
        let raw = net.eval(&x, None);
        assert!(raw.data().iter().all(|&v| v == 0.0));
        let s = raw.exp();
        assert!(s.data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn subnet_zero_weights_bias_only() {
        let net = bias_subnet(3, 0.7, 1.0);
        let x = Tensor::full(vec![1, 3, 4, 4], 0.2f32);
        let raw = net.eval(&x, None);
        assert!(raw.data().iter().all(|&v| (v - 0.7).abs() < 1e-7));
    }

    #[test]
    fn stability_clamp_bounds_raw() {
        // Pre-clamp value 10 with c = 2 squashes to 2*tanh(5).
        let net = bias_subnet(3, 10.0, 1.0);
        let x = Tensor::zeros(vec![1, 3, 4, 4]);
        let raw = net.eval(&x, Some(2.0));
        let expect = 2.0 * 5.0f32.tanh();
        assert!(raw.data().iter().all(|&v| (v - expect).abs() < 1e-6));
        assert!(expect > 1.999 && expect < 2.0);
    }

    #[test]
    fn coupling_identity_when_gammas_zero() {
        let mut r = rng(3);
        let layer = CouplingLayer::<f32>::init(SplitScheme::new(2), 4, &mut r);
        let x_a = random_tensor(vec![1, 6, 4, 4], &mut r);
        let x_b = random_tensor(vec![1, 6, 4, 4], &mut r);
        let (y_a, y_b, coeffs) = layer.forward(&x_a, &x_b, None);
        assert_eq!(y_a.data(), x_a.data());
        assert_eq!(y_b.data(), x_b.data());
        assert!(coeffs.s_a.data().iter().all(|&v| v == 1.0));
        assert!(coeffs.t_a.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn coupling_forward_hand_case() {
        // s_a = 2, t_a = 0.1 forced by bias-only subnets; h_b, g_b inert.
        let layer = CouplingLayer {
            h_a: bias_subnet(6, std::f32::consts::LN_2, 1.0),
            g_a: bias_subnet(6, 0.1, 1.0),
            h_b: bias_subnet(6, 0.0, 0.0),
            g_b: bias_subnet(6, 0.0, 0.0),
        };
        let x_a = Tensor::full(vec![1, 6, 2, 2], 0.5f32);
        let x_b = Tensor::full(vec![1, 6, 2, 2], 0.3f32);
        let (_, y_b, _) = layer.forward(&x_a, &x_b, None);
        assert!(y_b.data().iter().all(|&v| (v - 0.7).abs() < 1e-6), "0.3*2 + 0.1 = 0.7");
    }

    #[test]
    fn coupling_backward_hand_case() {
        // s_b' = 2, t_b' = 0.1: y_a = 0.7 recovers (0.7 - 0.1) / 2 = 0.3.
        let layer = CouplingLayer {
            h_a: bias_subnet(6, 0.0, 0.0),
            g_a: bias_subnet(6, 0.0, 0.0),
            h_b: bias_subnet(6, std::f32::consts::LN_2, 1.0),
            g_b: bias_subnet(6, 0.1, 1.0),
        };
        let y_a = Tensor::full(vec![1, 6, 2, 2], 0.7f32);
        let y_b = Tensor::full(vec![1, 6, 2, 2], 0.4f32);
        let (x_a, _, _) = layer.backward(&y_a, &y_b, None);
        assert!(x_a.data().iter().all(|&v| (v - 0.3).abs() < 1e-6));
    }

    #[test]
    fn coupling_round_trip_f32() {
        let mut r = rng(11);
        let layer = CouplingLayer::<f32>::init(SplitScheme::new(2), 4, &mut r);
        let mut layer = layer;
        // Random gammas so the layer actually transforms.
        for sn in [&mut layer.h_a, &mut layer.g_a, &mut layer.h_b, &mut layer.g_b] {
            sn.gamma = Tensor::scalar(r.random_range(-0.5..0.5));
        }
        let x_a = random_tensor(vec![2, 6, 6, 4], &mut r);
        let x_b = random_tensor(vec![2, 6, 6, 4], &mut r);
        let (y_a, y_b, _) = layer.forward(&x_a, &x_b, Some(2.0));
        let (r_a, r_b, _) = layer.backward(&y_a, &y_b, Some(2.0));
        let max = x_a
            .data()
            .iter()
            .zip(r_a.data())
            .chain(x_b.data().iter().zip(r_b.data()))
            .map(|(a, b)| (a - b).abs())
            .fold(0f32, f32::max);
        assert!(max < 1e-4, "round trip error {max}");
    }

    #[test]
    fn net_round_trip_both_orders_f32_and_f64() {
        let mut r = rng(23);
        let net32 =
            InvNet::<f32>::init_random(4, SplitScheme::new(2), 4, Some(2.0), 0.3, &mut r);
        let img = random_tensor(vec![3, 12, 8], &mut r);
        let subs = squeeze(&img);

        let (enh, _) = net32.forward(&subs);
        let (rec, _) = net32.inverse(&enh);
        let max32 = subs
            .iter()
            .zip(&rec)
            .flat_map(|(a, b)| a.data().iter().zip(b.data()).map(|(x, y)| (x - y).abs()))
            .fold(0f32, f32::max);
        assert!(max32 < 1e-4, "f32 inverse(forward) error {max32}");

        // Other composition order.
        let (deg, _) = net32.inverse(&subs);
        let (rec2, _) = net32.forward(&deg);
        let max32b = subs
            .iter()
            .zip(&rec2)
            .flat_map(|(a, b)| a.data().iter().zip(b.data()).map(|(x, y)| (x - y).abs()))
            .fold(0f32, f32::max);
        assert!(max32b < 1e-4, "f32 forward(inverse) error {max32b}");

        // Same parameters at f64 tighten the bound to 1e-10.
        let mut net64 = InvNet::<f64>::init(4, SplitScheme::new(2), 4, Some(2.0), &mut rng(99));
        let params32 = net32.param_tensors();
        let mut i = 0usize;
        net64.for_each_param_mut(&mut |_, p| {
            *p = params32[i].cast::<f64>();
            i += 1;
        });
        let subs64: [Tensor<f64>; 4] =
            [subs[0].cast(), subs[1].cast(), subs[2].cast(), subs[3].cast()];
        let (enh64, _) = net64.forward(&subs64);
        let (rec64, _) = net64.inverse(&enh64);
        let max64 = subs64
            .iter()
            .zip(&rec64)
            .flat_map(|(a, b)| a.data().iter().zip(b.data()).map(|(x, y)| (x - y).abs()))
            .fold(0f64, f64::max);
        assert!(max64 < 1e-10, "f64 inverse(forward) error {max64}");
    }

    #[test]
    fn identity_net_trace_is_unit() {
        let mut r = rng(5);
        let net = InvNet::<f32>::init(3, SplitScheme::new(2), 4, Some(2.0), &mut r);
        let img = random_tensor(vec![3, 8, 8], &mut r);
        let subs = squeeze(&img);
        let (out, trace) = net.forward(&subs);
        for (o, s) in out.iter().zip(&subs) {
            assert_eq!(o.data(), s.data());
        }
        for coeffs in &trace {
            assert!(coeffs.s_a.data().iter().all(|&v| v == 1.0));
            assert!(coeffs.s_b.data().iter().all(|&v| v == 1.0));
            assert!(coeffs.t_a.data().iter().all(|&v| v == 0.0));
            assert!(coeffs.t_b.data().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn split_scheme_channel_counts() {
        assert_eq!(SplitScheme::new(1).a_channels(), 3);
        assert_eq!(SplitScheme::new(1).b_channels(), 9);
        assert_eq!(SplitScheme::new(2).a_channels(), 6);
        assert_eq!(SplitScheme::new(3).b_channels(), 3);
    }

    #[test]
    fn coefficients_touch_b_subimages_identically() {
        // Permuting the two sub-images inside the b-part commutes with the
        // coefficient application.
        let mut r = rng(31);
        let s_a = random_tensor(vec![1, 3, 4, 4], &mut r).offset(0.5);
        let t_a = random_tensor(vec![1, 3, 4, 4], &mut r);
        let b0 = random_tensor(vec![1, 3, 4, 4], &mut r);
        let b1 = random_tensor(vec![1, 3, 4, 4], &mut r);
        let stacked = Tensor::concat_channels(&[&b0, &b1]);
        let swapped = Tensor::concat_channels(&[&b1, &b0]);
        let applied = stacked.mul(&s_a).add(&t_a);
        let applied_swapped = swapped.mul(&s_a).add(&t_a);
        let (lo, hi) = applied_swapped.split_channels(3);
        let reswapped = Tensor::concat_channels(&[&hi, &lo]);
        assert_eq!(applied.data(), reswapped.data());
    }

    #[test]
    fn positivity_of_traced_scales() {
        let mut r = rng(41);
        let net = InvNet::<f32>::init_random(3, SplitScheme::new(2), 4, None, 0.8, &mut r);
        let img = random_tensor(vec![3, 8, 8], &mut r);
        let (_, trace) = net.forward(&squeeze(&img));
        for coeffs in &trace {
            assert!(coeffs.s_a.data().iter().all(|&v| v > 0.0));
            assert!(coeffs.s_b.data().iter().all(|&v| v > 0.0));
        }
    }

    #[test]
    #[should_panic(expected = "even spatial dims")]
    fn squeeze_rejects_odd() {
        let img = Tensor::<f32>::zeros(vec![3, 5, 4]);
        let _ = squeeze(&img);
    }
}
