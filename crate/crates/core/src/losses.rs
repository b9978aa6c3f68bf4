//! Training objectives: least-squares adversarial terms, transformation
//! consistency over the coefficient trace, detail preservation through the
//! guided filter and a fixed feature pyramid, the clamped-round-trip
//! reversibility penalty, and their weighted sum.
//!
//! All norms are normalized by element count (means, not raw sums) so loss
//! magnitudes do not depend on resolution.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::guided::{guided_filter, GuidedFilterConfig};
use crate::invnet::{CoeffTrace, LayerCoeffs};
use crate::tensor::{Scalar, Tensor};

/// Weights of the loss terms in the overall objective.
///
/// `eta`, `lambda`, `mu` follow the training protocol defaults; `adv` scales
/// the adversarial pair and exists so ablations can silence it entirely.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossWeights {
    pub adv: f64,
    pub eta: f64,
    pub lambda: f64,
    pub mu: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights { adv: 1.0, eta: 0.5, lambda: 0.6, mu: 200.0 }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in
            [("adv", self.adv), ("eta", self.eta), ("lambda", self.lambda), ("mu", self.mu)]
        {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("loss weight {name} must be >= 0, got {v}")));
            }
        }
        Ok(())
    }
}

/// Least-squares GAN generator term: `mean((D(fake) - 1)^2)`.
pub fn lsgan_generator_term<T: Scalar>(disc_fake_out: &Tensor<T>) -> Tensor<T> {
    disc_fake_out.offset(-1.0).square().mean()
}

/// Least-squares GAN discriminator term:
/// `mean((D(real) - 1)^2) + mean(D(fake)^2)`.
pub fn lsgan_discriminator_term<T: Scalar>(
    disc_real_out: &Tensor<T>,
    disc_fake_out: &Tensor<T>,
) -> Tensor<T> {
    disc_real_out.offset(-1.0).square().mean().add(&disc_fake_out.square().mean())
}

/// Transformation-consistency loss: per layer, the mean absolute distance
/// between the alternating coefficient pairs, summed over layers.
pub fn tc_loss<T: Scalar>(trace: &CoeffTrace<T>) -> Tensor<T> {
    assert!(!trace.is_empty(), "tc_loss needs a non-empty trace");
    let mut total: Option<Tensor<T>> = None;
    for LayerCoeffs { s_a, t_a, s_b, t_b } in trace {
        let term = s_a.sub(s_b).abs().mean().add(&t_a.sub(t_b).abs().mean());
        total = Some(match total {
            Some(acc) => acc.add(&term),
            None => term,
        });
    }
    total.unwrap()
}

/// One stage of the fixed feature pyramid.
#[derive(Clone, Debug)]
pub struct FeatureStage<T: Scalar = f32> {
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

/// Fixed (non-trainable) conv + ReLU + 2x-downsample pyramid standing in for
/// a pretrained feature backbone; one tap per stage.
///
/// Weights come either from a seed (deterministic) or from a named-tensor
/// container (`phi.s{i}.w` / `phi.s{i}.b`).
#[derive(Clone, Debug)]
pub struct FeatureExtractor<T: Scalar = f32> {
    pub stages: Vec<FeatureStage<T>>,
}

impl<T: Scalar> FeatureExtractor<T> {
    /// Default pyramid: channels 3 -> 16 -> 32 -> 64, stride-2 3x3 convs.
    pub fn seeded(seed: u64) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let widths = [(3usize, 16usize), (16, 32), (32, 64)];
        let stages = widths
            .iter()
            .map(|&(cin, cout)| {
                // He-style scale keeps tap magnitudes comparable across stages.
                let std = (2.0 / (cin as f64 * 9.0)).sqrt();
                let normal = Normal::new(0.0, std).unwrap();
                let w: Vec<T> =
                    (0..cout * cin * 9).map(|_| T::of_f64(normal.sample(&mut rng))).collect();
                FeatureStage {
                    weight: Tensor::new(vec![cout, cin, 3, 3], w),
                    bias: Tensor::zeros(vec![cout]),
                }
            })
            .collect();
        FeatureExtractor { stages }
    }

    pub fn from_stages(stages: Vec<FeatureStage<T>>) -> Self {
        assert!(!stages.is_empty(), "feature extractor needs at least one stage");
        FeatureExtractor { stages }
    }

    /// Feature maps at every tap point, downsampling 2x per stage.
    pub fn features(&self, x: &Tensor<T>) -> Vec<Tensor<T>> {
        let unbatched = x.shape().len() == 3;
        let mut cur = if unbatched {
            let mut s = vec![1usize];
            s.extend_from_slice(x.shape());
            x.reshape(s)
        } else {
            x.clone()
        };
        let mut taps = Vec::with_capacity(self.stages.len());
        for stage in &self.stages {
            cur = cur.conv2d(&stage.weight, &stage.bias, 2, 1).relu();
            taps.push(cur.clone());
        }
        taps
    }
}

/// Detail-preserving loss over the four (original, output) sub-image pairs.
///
/// Each output is regressed onto the original's structure by the guided
/// filter (guide = original, input = output); the loss is the root mean
/// squared feature difference per tap, summed over taps and averaged over
/// sub-images.
pub fn dp_loss<T: Scalar>(
    original_subs: &[Tensor<T>; 4],
    output_subs: &[Tensor<T>; 4],
    phi: &FeatureExtractor<T>,
    gf_cfg: GuidedFilterConfig,
) -> Tensor<T> {
    let mut total: Option<Tensor<T>> = None;
    for (orig, out) in original_subs.iter().zip(output_subs) {
        let filtered = guided_filter(orig, out, gf_cfg);
        let feats_f = phi.features(&filtered);
        let feats_o = phi.features(out);
        for (ff, fo) in feats_f.iter().zip(&feats_o) {
            let term = ff.sub(fo).square().mean().sqrt();
            total = Some(match total {
                Some(acc) => acc.add(&term),
                None => term,
            });
        }
    }
    total.unwrap().scale(0.25)
}

/// Reversibility loss: clamp the outputs to `[0, 1]`, map them back through
/// the opposite direction of the network, and penalize the mean absolute
/// error against the originals, summed over the four sub-images.
pub fn reversibility_loss<T: Scalar>(
    originals: &[Tensor<T>; 4],
    outputs: &[Tensor<T>; 4],
    inverse_fn: impl FnOnce(&[Tensor<T>; 4]) -> [Tensor<T>; 4],
) -> Tensor<T> {
    let clamped: [Tensor<T>; 4] = [
        outputs[0].clamp(0.0, 1.0),
        outputs[1].clamp(0.0, 1.0),
        outputs[2].clamp(0.0, 1.0),
        outputs[3].clamp(0.0, 1.0),
    ];
    let recovered = inverse_fn(&clamped);
    let mut total: Option<Tensor<T>> = None;
    for (orig, rec) in originals.iter().zip(&recovered) {
        let term = orig.sub(rec).abs().mean();
        total = Some(match total {
            Some(acc) => acc.add(&term),
            None => term,
        });
    }
    total.unwrap()
}

/// Scalar loss components of one direction, for reporting.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct DirectionLosses {
    pub adv: f64,
    pub tc: f64,
    pub dp: f64,
    pub r: f64,
}

/// Overall objective
/// `adv*(f+b) + eta*(tc_f+tc_b) + lambda*(dp_f+dp_b) + mu*(r_f+r_b)`,
/// with a divergence error naming the first non-finite component.
pub fn total_loss(
    forward: &DirectionLosses,
    backward: &DirectionLosses,
    weights: &LossWeights,
    iteration: u64,
) -> Result<f64> {
    let parts: [(&'static str, f64); 8] = [
        ("adv_forward", forward.adv),
        ("adv_backward", backward.adv),
        ("tc_forward", forward.tc),
        ("tc_backward", backward.tc),
        ("dp_forward", forward.dp),
        ("dp_backward", backward.dp),
        ("r_forward", forward.r),
        ("r_backward", backward.r),
    ];
    for (component, v) in parts {
        if !v.is_finite() {
            return Err(Error::Diverged { component, iteration });
        }
    }
    Ok(weights.adv * (forward.adv + backward.adv)
        + weights.eta * (forward.tc + backward.tc)
        + weights.lambda * (forward.dp + backward.dp)
        + weights.mu * (forward.r + backward.r))
}
