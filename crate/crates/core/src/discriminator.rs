//! PatchGAN discriminators.
//!
//! Seven 4x4 convolutions, strides (2,2,2,2,2,1,1), zero-padding 1 on every
//! layer, LReLU(0.2) after the first six, no normalization. Full-width
//! channels run 3 -> 64 -> 128 -> 256 -> 512 -> 512 -> 512 -> 1; a `base`
//! width below 64 scales the whole ladder for desk-scale training and debug
//! gradient checks. With the five stride-2 layers followed by two stride-1
//! 4x4 layers, both input dimensions must be at least 96 for every layer to
//! keep a positive extent.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::tensor::conv_output_extent;
use crate::tensor::{Scalar, Tape, Tensor};

pub const STRIDES: [usize; 7] = [2, 2, 2, 2, 2, 1, 1];
const KERNEL: usize = 4;
const PADDING: usize = 1;
const LRELU_SLOPE: f64 = 0.2;

/// Smallest input extent for which all seven layers stay positive.
pub const MIN_INPUT_EXTENT: usize = 96;

/// Channel ladder for a given base width (64 reproduces the full model).
pub fn channel_ladder(base: usize) -> [usize; 8] {
    assert!(base >= 1, "discriminator base width must be >= 1");
    [3, base, 2 * base, 4 * base, 8 * base, 8 * base, 8 * base, 1]
}

#[derive(Clone, Debug)]
pub struct PatchGan<T: Scalar = f32> {
    pub weights: Vec<Tensor<T>>,
    pub biases: Vec<Tensor<T>>,
    pub base_width: usize,
}

impl<T: Scalar> PatchGan<T> {
    /// Gaussian(0, 0.02) weight init, zero biases.
    pub fn init(base_width: usize, rng: &mut impl Rng) -> Self {
        let normal = Normal::new(0.0, 0.02).unwrap();
        let ladder = channel_ladder(base_width);
        let mut weights = Vec::with_capacity(7);
        let mut biases = Vec::with_capacity(7);
        for l in 0..7 {
            let (cin, cout) = (ladder[l], ladder[l + 1]);
            let w: Vec<T> = (0..cout * cin * KERNEL * KERNEL)
                .map(|_| T::of_f64(normal.sample(rng)))
                .collect();
            weights.push(Tensor::new(vec![cout, cin, KERNEL, KERNEL], w));
            biases.push(Tensor::zeros(vec![cout]));
        }
        PatchGan { weights, biases, base_width }
    }

    /// Patch score map, `N x 1 x h' x w'`.
    ///
    /// Panics with the layer index when a stride collapses a spatial dim;
    /// use [`spatial_trace`] to validate sizes up front.
    pub fn forward(&self, image: &Tensor<T>) -> Tensor<T> {
        assert_eq!(
            image.shape().len(),
            4,
            "discriminator expects N x 3 x h x w, got {:?}",
            image.shape()
        );
        let (mut h, mut w) = (image.shape()[2], image.shape()[3]);
        let mut cur = image.clone();
        for (l, stride) in STRIDES.iter().enumerate() {
            let nh = conv_output_extent(h, KERNEL, *stride, PADDING);
            let nw = conv_output_extent(w, KERNEL, *stride, PADDING);
            let (nh, nw) = match (nh, nw) {
                (Some(a), Some(b)) if a > 0 && b > 0 => (a, b),
                _ => panic!(
                    "discriminator layer {}: spatial dim collapsed ({h}x{w} with kernel {KERNEL}, stride {stride}, padding {PADDING})",
                    l + 1
                ),
            };
            cur = cur.conv2d(&self.weights[l], &self.biases[l], *stride, PADDING);
            if l < 6 {
                cur = cur.lrelu(LRELU_SLOPE);
            }
            h = nh;
            w = nw;
        }
        cur
    }

    pub fn for_each_param(&self, f: &mut impl FnMut(String, &Tensor<T>)) {
        for l in 0..7 {
            f(format!("c{}.w", l + 1), &self.weights[l]);
            f(format!("c{}.b", l + 1), &self.biases[l]);
        }
    }

    pub fn for_each_param_mut(&mut self, f: &mut impl FnMut(String, &mut Tensor<T>)) {
        for l in 0..7 {
            f(format!("c{}.w", l + 1), &mut self.weights[l]);
            f(format!("c{}.b", l + 1), &mut self.biases[l]);
        }
    }

    pub fn watched(&self, tape: &Tape<T>) -> PatchGan<T> {
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

/// Per-layer spatial extents for a given input extent, stopping early with
/// the 1-based index of the first collapsing layer.
pub fn spatial_trace(extent: usize) -> std::result::Result<Vec<usize>, usize> {
    let mut trace = vec![extent];
    let mut n = extent;
    for (l, stride) in STRIDES.iter().enumerate() {
        match conv_output_extent(n, KERNEL, *stride, PADDING) {
            Some(next) if next > 0 => {
                n = next;
                trace.push(n);
            }
            _ => return Err(l + 1),
        }
    }
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    /// Independent shape calculator for one layer.
    fn oracle_extent(n: usize, stride: usize) -> Option<usize> {
        let padded = n as isize + 2 - 4;
        if padded < 0 {
            return None;
        }
        let v = padded as usize / stride + 1;
        (v > 0).then_some(v)
    }

    #[test]
    fn trace_from_96_matches_conv_arithmetic_oracle() {
        let trace = spatial_trace(96).expect("96 must survive all layers");
        let mut n = 96usize;
        let mut expect = vec![96];
        for s in STRIDES {
            n = oracle_extent(n, s).unwrap();
            expect.push(n);
        }
        assert_eq!(trace, expect);
        assert_eq!(trace, vec![96, 48, 24, 12, 6, 3, 2, 1]);
    }

    #[test]
    fn trace_from_64_collapses_at_final_layer() {
        // 64 -> 32 -> 16 -> 8 -> 4 -> 2 -> 1, then layer 7 hits
        // floor((1 + 2 - 4) / 1) + 1 = 0.
        assert_eq!(spatial_trace(64), Err(7));
        // 48 -> 24 -> 12 -> 6 -> 3 -> 1 already collapses at layer 6.
        assert_eq!(spatial_trace(48), Err(6));
        assert!(spatial_trace(97).is_ok());
    }

    #[test]
    fn full_width_ladder() {
        assert_eq!(channel_ladder(64), [3, 64, 128, 256, 512, 512, 512, 1]);
    }

    #[test]
    fn zero_parameters_give_zero_scores() {
        let mut rng = ChaCha20Rng::seed_from_u64(0);
        let mut d = PatchGan::<f32>::init(2, &mut rng);
        for w in &mut d.weights {
            *w = Tensor::zeros(w.shape().to_vec());
        }
        let img = Tensor::full(vec![1, 3, 96, 96], 0.7f32);
        let score = d.forward(&img);
        assert_eq!(score.shape(), &[1, 1, 1, 1]);
        assert!(score.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn zero_input_with_biases_is_input_independent() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let mut d = PatchGan::<f32>::init(2, &mut rng);
        for b in &mut d.biases {
            let n = b.numel();
            *b = Tensor::new(b.shape().to_vec(), (0..n).map(|i| 0.01 * (i as f32 + 1.0)).collect());
        }
        let zero = Tensor::zeros(vec![1, 3, 96, 96]);
        let also_zero = zero.scale(0.0);
        let (s1, s2) = (d.forward(&zero), d.forward(&also_zero));
        assert_eq!(s1.data(), s2.data());
        assert!(s1.data().iter().any(|&v| v != 0.0), "biases must reach the output");
    }

    #[test]
    fn score_map_shape_on_rectangular_input() {
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        let d = PatchGan::<f32>::init(2, &mut rng);
        let img = Tensor::full(vec![2, 3, 192, 128], 0.4f32);
        let score = d.forward(&img);
        // 192 -> 96,48,24,12,6,5,4 and 128 -> 64,32,16,8,4,3,2.
        assert_eq!(score.shape(), &[2, 1, 4, 2]);
    }

    #[test]
    #[should_panic(expected = "layer 7")]
    fn collapse_names_the_layer() {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let d = PatchGan::<f32>::init(1, &mut rng);
        let img = Tensor::zeros(vec![1, 3, 64, 64]);
        let _ = d.forward(&img);
    }

    #[test]
    fn input_gradients_match_finite_differences_sampled() {
        // f64 reduced-width check on the smallest viable input, over a
        // sample of coordinates.
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        let d = PatchGan::<f64>::init(1, &mut rng);
        let n = 3 * 96 * 96;
        let x0 = Tensor::new(
            vec![1, 3, 96, 96],
            (0..n).map(|i| 0.5 + 0.4 * ((i as f64 * 0.7133).sin())).collect::<Vec<f64>>(),
        );
        let loss_of = |x: &Tensor<f64>| d.forward(x).square().mean();

        let tape = Tape::new();
        let mut x = x0.clone();
        tape.watch(&mut x);
        let grads = loss_of(&x).backward();
        let ga = grads.get(&x);

        let h = 1e-5;
        let mut pick = ChaCha20Rng::seed_from_u64(5);
        for _ in 0..24 {
            let j = rand::Rng::random_range(&mut pick, 0..n);
            let mut plus = x0.data().to_vec();
            plus[j] += h;
            let mut minus = x0.data().to_vec();
            minus[j] -= h;
            let lp = loss_of(&Tensor::new(x0.shape().to_vec(), plus)).item();
            let lm = loss_of(&Tensor::new(x0.shape().to_vec(), minus)).item();
            let fd = (lp - lm) / (2.0 * h);
            let ad = ga.data()[j];
            let denom = ad.abs().max(fd.abs()).max(1e-9);
            assert!((fd - ad).abs() / denom < 1e-3, "index {j}: fd {fd} vs ad {ad}");
        }
    }
}
