//! Edge-preserving guided filter.
//!
//! The output is a local linear function of the guide: per window,
//! `a = cov(guide, input) / (var(guide) + eps)` and
//! `b = mean(input) - a * mean(guide)`; the result is
//! `mean(a) * guide + mean(b)` with box means of the configured radius and
//! reflected borders. Channels are filtered independently (guide channel `c`
//! filters input channel `c`). Built entirely from engine operations, so it
//! is differentiable with respect to both arguments.

use crate::tensor::{Scalar, Tensor};

#[derive(Clone, Copy, Debug)]
pub struct GuidedFilterConfig {
    /// Box window half-size.
    pub radius: usize,
    /// Variance regularizer.
    pub epsilon: f64,
}

impl Default for GuidedFilterConfig {
    fn default() -> Self {
        // Tuned for the 96x64 training resolution; scale with resolution.
        GuidedFilterConfig { radius: 4, epsilon: 1e-2 }
    }
}

impl GuidedFilterConfig {
    pub fn new(radius: usize, epsilon: f64) -> Self {
        assert!(radius >= 1, "guided filter radius must be >= 1");
        assert!(epsilon > 0.0, "guided filter epsilon must be > 0");
        GuidedFilterConfig { radius, epsilon }
    }
}

/// Filters `input` guided by `guide`; shapes must match (`C x H x W` or
/// `N x C x H x W`).
pub fn guided_filter<T: Scalar>(
    guide: &Tensor<T>,
    input: &Tensor<T>,
    cfg: GuidedFilterConfig,
) -> Tensor<T> {
    assert_eq!(
        guide.shape(),
        input.shape(),
        "guided_filter: guide {:?} and input {:?} must match",
        guide.shape(),
        input.shape()
    );
    let r = cfg.radius;
    let mean_g = guide.box_mean(r);
    let mean_i = input.box_mean(r);
    let corr_gi = guide.mul(input).box_mean(r);
    let corr_gg = guide.mul(guide).box_mean(r);

    let cov_gi = corr_gi.sub(&mean_g.mul(&mean_i));
    let var_g = corr_gg.sub(&mean_g.mul(&mean_g));

    let a = cov_gi.div(&var_g.offset(cfg.epsilon));
    let b = mean_i.sub(&a.mul(&mean_g));

    a.box_mean(r).mul(guide).add(&b.box_mean(r))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tape;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    fn random_tensor(shape: Vec<usize>, seed: u64, lo: f64, hi: f64) -> Tensor<f64> {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let n = shape.iter().product();
        Tensor::new(shape, (0..n).map(|_| rng.random_range(lo..hi)).collect())
    }

    /// Brute-force oracle: per output pixel, compute window statistics and
    /// the a/b coefficients directly, then average a/b over the window again.
    fn oracle(guide: &Tensor<f64>, input: &Tensor<f64>, r: usize, eps: f64) -> Vec<f64> {
        let (c, h, w) = (guide.shape()[0], guide.shape()[1], guide.shape()[2]);
        let reflect = |i: isize, n: usize| -> usize {
            if n == 1 {
                return 0;
            }
            let p = 2 * (n as isize - 1);
            let mut i = i.rem_euclid(p);
            if i >= n as isize {
                i = p - i;
            }
            i as usize
        };
        let ri = r as isize;
        let count = ((2 * r + 1) * (2 * r + 1)) as f64;
        let mut a = vec![0.0; c * h * w];
        let mut b = vec![0.0; c * h * w];
        for ch in 0..c {
            let g = &guide.data()[ch * h * w..][..h * w];
            let i_ = &input.data()[ch * h * w..][..h * w];
            for y in 0..h as isize {
                for x in 0..w as isize {
                    let (mut sg, mut si, mut sgi, mut sgg) = (0.0, 0.0, 0.0, 0.0);
                    for dy in -ri..=ri {
                        for dx in -ri..=ri {
                            let yy = reflect(y + dy, h);
                            let xx = reflect(x + dx, w);
                            let gv = g[yy * w + xx];
                            let iv = i_[yy * w + xx];
                            sg += gv;
                            si += iv;
                            sgi += gv * iv;
                            sgg += gv * gv;
                        }
                    }
                    let (mg, mi) = (sg / count, si / count);
                    let cov = sgi / count - mg * mi;
                    let var = sgg / count - mg * mg;
                    let av = cov / (var + eps);
                    a[(ch * h + y as usize) * w + x as usize] = av;
                    b[(ch * h + y as usize) * w + x as usize] = mi - av * mg;
                }
            }
        }
        // mean(a) * guide + mean(b)
        let mut out = vec![0.0; c * h * w];
        for ch in 0..c {
            let g = &guide.data()[ch * h * w..][..h * w];
            for y in 0..h as isize {
                for x in 0..w as isize {
                    let (mut sa, mut sb) = (0.0, 0.0);
                    for dy in -ri..=ri {
                        for dx in -ri..=ri {
                            let yy = reflect(y + dy, h);
                            let xx = reflect(x + dx, w);
                            sa += a[(ch * h + yy) * w + xx];
                            sb += b[(ch * h + yy) * w + xx];
                        }
                    }
                    let idx = (ch * h + y as usize) * w + x as usize;
                    out[idx] = sa / count * g[y as usize * w + x as usize] + sb / count;
                }
            }
        }
        out
    }

    #[test]
    fn constant_input_maps_to_itself() {
        let guide = random_tensor(vec![3, 6, 6], 1, 0.0, 1.0);
        let input = Tensor::full(vec![3, 6, 6], 0.42f64);
        let out = guided_filter(&guide, &input, GuidedFilterConfig::new(2, 1e-2));
        for v in out.data() {
            assert!((v - 0.42).abs() < 1e-9, "constant not preserved: {v}");
        }
    }

    #[test]
    fn self_guidance_with_tiny_epsilon_recovers_input() {
        let img = random_tensor(vec![1, 8, 8], 2, 0.0, 1.0);
        let out = guided_filter(&img, &img, GuidedFilterConfig::new(1, 1e-12));
        for (o, i) in out.data().iter().zip(img.data()) {
            assert!((o - i).abs() < 1e-4, "self-guidance drift: {o} vs {i}");
        }
    }

    #[test]
    fn matches_sliding_window_oracle() {
        let guide = random_tensor(vec![1, 7, 7], 3, 0.0, 1.0);
        let input = random_tensor(vec![1, 7, 7], 4, 0.0, 1.0);
        let cfg = GuidedFilterConfig::new(1, 1e-2);
        let got = guided_filter(&guide, &input, cfg);
        let want = oracle(&guide, &input, 1, 1e-2);
        for (g, w) in got.data().iter().zip(&want) {
            assert!((g - w).abs() < 1e-5, "oracle mismatch: {g} vs {w}");
        }
    }

    #[test]
    fn huge_epsilon_approaches_box_mean() {
        let guide = random_tensor(vec![1, 6, 6], 5, 0.0, 1.0);
        let input = random_tensor(vec![1, 6, 6], 6, 0.0, 1.0);
        // epsilon at least 1e3 times the maximum guide variance.
        let out = guided_filter(&guide, &input, GuidedFilterConfig::new(2, 1e3));
        let boxed = input.box_mean(2).box_mean(2);
        for (o, b) in out.data().iter().zip(boxed.data()) {
            assert!((o - b).abs() < 1e-3, "large-eps limit violated: {o} vs {b}");
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let guide0 = random_tensor(vec![1, 5, 5], 7, 0.1, 0.9);
        let input0 = random_tensor(vec![1, 5, 5], 8, 0.1, 0.9);
        let cfg = GuidedFilterConfig::new(1, 1e-2);
        let loss_of = |g: &Tensor<f64>, i: &Tensor<f64>| guided_filter(g, i, cfg).square().mean();

        let tape = Tape::new();
        let (mut g, mut i) = (guide0.clone(), input0.clone());
        tape.watch(&mut g);
        tape.watch(&mut i);
        let grads = loss_of(&g, &i).backward();
        let (ga, gi) = (grads.get(&g), grads.get(&i));

        let h = 1e-6;
        for j in 0..guide0.numel() {
            for (base, other, analytic, flip) in
                [(&guide0, &input0, &ga, false), (&input0, &guide0, &gi, true)]
            {
                let mut plus = base.data().to_vec();
                plus[j] += h;
                let mut minus = base.data().to_vec();
                minus[j] -= h;
                let tp = Tensor::new(base.shape().to_vec(), plus);
                let tm = Tensor::new(base.shape().to_vec(), minus);
                let (lp, lm) = if flip {
                    (loss_of(other, &tp).item(), loss_of(other, &tm).item())
                } else {
                    (loss_of(&tp, other).item(), loss_of(&tm, other).item())
                };
                let fd = (lp - lm) / (2.0 * h);
                let ad = analytic.data()[j];
                let denom = ad.abs().max(fd.abs()).max(1e-4);
                assert!(
                    (fd - ad).abs() / denom < 1e-3,
                    "index {j} flip {flip}: fd {fd} vs ad {ad}"
                );
            }
        }
    }
}
