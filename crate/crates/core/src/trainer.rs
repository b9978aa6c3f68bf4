//! Unpaired adversarial training loop.
//!
//! Each step squeezes one low-light and one normal-light batch, runs the
//! generator forward on the first and inverse on the second, assembles the
//! weighted objective, updates the generator, then updates both
//! discriminators on detached fakes. Sub-images headed for a discriminator
//! are randomly cropped and nearest-upsampled until both dimensions reach the
//! PatchGAN minimum extent.
//!
//! Everything is seeded: identical configuration and data give bit-identical
//! loss trajectories and checkpoint bytes.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::adam::{Adam, AdamConfig};
use crate::checkpoint::Container;
use crate::config::TrainConfig;
use crate::dataset::{iteration_rng, sample_batch, LoadedDataset};
use crate::discriminator::{PatchGan, MIN_INPUT_EXTENT};
use crate::error::{Error, Result};
use crate::guided::GuidedFilterConfig;
use crate::invnet::{squeeze, InvNet, SplitScheme};
use crate::losses::{
    self, dp_loss, lsgan_discriminator_term, lsgan_generator_term, reversibility_loss, tc_loss,
    DirectionLosses, FeatureExtractor,
};
use crate::tensor::{Tape, Tensor};

/// Generator and the two domain discriminators.
#[derive(Clone)]
pub struct Models {
    pub gen: InvNet<f32>,
    pub disc_n: PatchGan<f32>,
    pub disc_l: PatchGan<f32>,
}

impl Models {
    pub fn init(config: &TrainConfig) -> Self {
        let mut base = ChaCha20Rng::seed_from_u64(config.seed);
        let stream = |s: u64| {
            let mut r = base.clone();
            r.set_stream(s);
            r
        };
        let gen = InvNet::init(
            config.coupling_layers,
            SplitScheme::new(config.split_n),
            config.subnet_width,
            config.stability_clamp_opt(),
            &mut stream(1),
        );
        let disc_n = PatchGan::init(config.disc_width, &mut stream(2));
        let disc_l = PatchGan::init(config.disc_width, &mut stream(3));
        let _ = &mut base;
        Models { gen, disc_n, disc_l }
    }
}

/// Loss components of one iteration. The pinned log format sums the two
/// directions; the per-direction values stay available for ablation checks.
#[derive(Clone, Copy, Debug, Default)]
pub struct LossReport {
    pub iteration: u64,
    pub forward: DirectionLosses,
    pub backward: DirectionLosses,
    pub adv_d_n: f64,
    pub adv_d_l: f64,
    pub total: f64,
}

impl LossReport {
    pub fn adv_g(&self) -> f64 {
        self.forward.adv + self.backward.adv
    }

    pub fn adv_d(&self) -> f64 {
        self.adv_d_n + self.adv_d_l
    }

    /// One log line: `iter=<n> adv_g=<f> adv_d=<f> tc=<f> dp=<f> r=<f> total=<f>`.
    pub fn log_line(&self) -> String {
        format!(
            "iter={} adv_g={:.6} adv_d={:.6} tc={:.6} dp={:.6} r={:.6} total={:.6}",
            self.iteration,
            self.adv_g(),
            self.adv_d(),
            self.forward.tc + self.backward.tc,
            self.forward.dp + self.backward.dp,
            self.forward.r + self.backward.r,
            self.total
        )
    }

    /// Parses a line produced by [`LossReport::log_line`].
    pub fn parse_log_line(line: &str) -> Option<(u64, [f64; 6])> {
        let mut iter = None;
        let mut vals = [None; 6];
        for field in line.split_whitespace() {
            let (key, value) = field.split_once('=')?;
            match key {
                "iter" => iter = value.parse().ok(),
                "adv_g" => vals[0] = value.parse().ok(),
                "adv_d" => vals[1] = value.parse().ok(),
                "tc" => vals[2] = value.parse().ok(),
                "dp" => vals[3] = value.parse().ok(),
                "r" => vals[4] = value.parse().ok(),
                "total" => vals[5] = value.parse().ok(),
                _ => return None,
            }
        }
        Some((iter?, [vals[0]?, vals[1]?, vals[2]?, vals[3]?, vals[4]?, vals[5]?]))
    }
}

/// Training state: models, optimizers, the fixed feature pyramid, iteration.
pub struct Trainer {
    pub config: TrainConfig,
    pub models: Models,
    pub opt_gen: Adam,
    pub opt_dn: Adam,
    pub opt_dl: Adam,
    pub phi: FeatureExtractor<f32>,
    pub iteration: u64,
}

impl Trainer {
    pub fn new(config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let models = Models::init(&config);
        let adam_cfg = AdamConfig {
            learning_rate: config.learning_rate,
            beta1: config.adam_beta1,
            beta2: config.adam_beta2,
            epsilon: config.adam_eps,
        };
        let phi = load_phi(&config)?;
        let opt_gen = Adam::new(adam_cfg, &models.gen.param_tensors());
        let opt_dn = Adam::new(adam_cfg, &models.disc_n.param_tensors());
        let opt_dl = Adam::new(adam_cfg, &models.disc_l.param_tensors());
        Ok(Trainer { config, models, opt_gen, opt_dn, opt_dl, phi, iteration: 0 })
    }

    /// Serializes models, optimizer moments, the config snapshot and the
    /// iteration counter.
    pub fn to_container(&self) -> Container {
        let mut c = Container::new();
        self.models.gen.for_each_param(&mut |name, t| c.insert(format!("gen.{name}"), t.clone()));
        self.models.disc_n.for_each_param(&mut |name, t| c.insert(format!("dn.{name}"), t.clone()));
        self.models.disc_l.for_each_param(&mut |name, t| c.insert(format!("dl.{name}"), t.clone()));
        let mut moments = |prefix: &str, opt: &Adam, model_params: Vec<(String, Tensor<f32>)>| {
            for ((name, _), (m, v)) in model_params.iter().zip(opt.m.iter().zip(&opt.v)) {
                c.insert(format!("m.{prefix}.{name}"), m.clone());
                c.insert(format!("v.{prefix}.{name}"), v.clone());
            }
        };
        moments("gen", &self.opt_gen, named(&self.models.gen));
        moments("dn", &self.opt_dn, named_disc(&self.models.disc_n));
        moments("dl", &self.opt_dl, named_disc(&self.models.disc_l));

        for (k, v) in self.config.to_pairs() {
            c.set_meta(k, v);
        }
        c.set_meta("iteration", self.iteration.to_string());
        c.set_meta("adam_step_gen", self.opt_gen.step.to_string());
        c.set_meta("adam_step_dn", self.opt_dn.step.to_string());
        c.set_meta("adam_step_dl", self.opt_dl.step.to_string());
        c
    }

    pub fn from_container(c: &Container) -> Result<Self> {
        let reserved = ["iteration", "adam_step_gen", "adam_step_dn", "adam_step_dl"];
        let config = TrainConfig::from_pairs(
            c.meta
                .iter()
                .filter(|(k, _)| !reserved.contains(&k.as_str()))
                .map(|(k, v)| (k.as_str(), v.as_str())),
        )?;
        let mut trainer = Trainer::new(config)?;

        let restore = |t: &mut Tensor<f32>, name: &str| -> Result<()> {
            let stored = c.tensor(name)?;
            if stored.shape() != t.shape() {
                return Err(Error::Checkpoint(format!(
                    "tensor {name:?} has shape {:?}, expected {:?}",
                    stored.shape(),
                    t.shape()
                )));
            }
            *t = stored.detach();
            Ok(())
        };
        let mut err = None;
        trainer.models.gen.for_each_param_mut(&mut |name, t| {
            if err.is_none() {
                err = restore(t, &format!("gen.{name}")).err();
            }
        });
        trainer.models.disc_n.for_each_param_mut(&mut |name, t| {
            if err.is_none() {
                err = restore(t, &format!("dn.{name}")).err();
            }
        });
        trainer.models.disc_l.for_each_param_mut(&mut |name, t| {
            if err.is_none() {
                err = restore(t, &format!("dl.{name}")).err();
            }
        });
        if let Some(e) = err {
            return Err(e);
        }

        let load_moments = |prefix: &str, opt: &mut Adam, names: Vec<(String, Tensor<f32>)>| -> Result<()> {
            for (i, (name, _)) in names.iter().enumerate() {
                opt.m[i] = c.tensor(&format!("m.{prefix}.{name}"))?.detach();
                opt.v[i] = c.tensor(&format!("v.{prefix}.{name}"))?.detach();
            }
            Ok(())
        };
        load_moments("gen", &mut trainer.opt_gen, named(&trainer.models.gen))?;
        load_moments("dn", &mut trainer.opt_dn, named_disc(&trainer.models.disc_n))?;
        load_moments("dl", &mut trainer.opt_dl, named_disc(&trainer.models.disc_l))?;

        trainer.iteration = parse_meta(c, "iteration")?;
        trainer.opt_gen.step = parse_meta(c, "adam_step_gen")?;
        trainer.opt_dn.step = parse_meta(c, "adam_step_dn")?;
        trainer.opt_dl.step = parse_meta(c, "adam_step_dl")?;
        Ok(trainer)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_container().save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_container(&Container::load(path)?)
    }

    /// One optimization step over a low-light and a normal-light batch.
    pub fn train_step(&mut self, batch_low: &Tensor<f32>, batch_normal: &Tensor<f32>) -> Result<LossReport> {
        let cfg = &self.config;
        let iteration = self.iteration + 1;
        let weights = cfg.weights;
        let gf_cfg = GuidedFilterConfig::new(cfg.gf_radius, cfg.gf_epsilon);
        let mut crop_rng = iteration_rng(cfg.seed ^ 0xd15c, iteration);

        let subs_low = squeeze(batch_low);
        let subs_normal = squeeze(batch_normal);

        // Generator update. Discriminator parameters stay unwatched (frozen).
        let tape = Tape::new();
        let gen_w = self.models.gen.watched(&tape);
        let (enhanced, trace_f) = gen_w.forward(&subs_low);
        let backward_pass = if cfg.forward_only {
            None
        } else {
            Some(gen_w.inverse(&subs_normal))
        };

        let mut fwd = DirectionLosses::default();
        let mut bwd = DirectionLosses::default();
        let mut gen_loss: Option<Tensor<f32>> = None;
        let add_term = |acc: &mut Option<Tensor<f32>>, term: Tensor<f32>, weight: f64| {
            let weighted = term.scale(weight);
            *acc = Some(match acc.take() {
                Some(t) => t.add(&weighted),
                None => weighted,
            });
        };

        if weights.adv > 0.0 {
            let term = adv_generator_term(&self.models.disc_n, &enhanced, &mut crop_rng);
            fwd.adv = term.item() as f64;
            add_term(&mut gen_loss, term, weights.adv);
        }
        if !cfg.no_tc {
            let term = tc_loss(&trace_f);
            fwd.tc = term.item() as f64;
            add_term(&mut gen_loss, term, weights.eta);
        }
        if !cfg.no_dp {
            let term = dp_loss(&subs_low, &enhanced, &self.phi, gf_cfg);
            fwd.dp = term.item() as f64;
            add_term(&mut gen_loss, term, weights.lambda);
        }
        if !cfg.no_r {
            let term = reversibility_loss(&subs_low, &enhanced, |c| gen_w.inverse(c).0);
            fwd.r = term.item() as f64;
            add_term(&mut gen_loss, term, weights.mu);
        }

        if let Some((degraded, trace_b)) = &backward_pass {
            if weights.adv > 0.0 {
                let term = adv_generator_term(&self.models.disc_l, degraded, &mut crop_rng);
                bwd.adv = term.item() as f64;
                add_term(&mut gen_loss, term, weights.adv);
            }
            if !cfg.no_tc {
                let term = tc_loss(trace_b);
                bwd.tc = term.item() as f64;
                add_term(&mut gen_loss, term, weights.eta);
            }
            if !cfg.no_dp {
                let term = dp_loss(&subs_normal, degraded, &self.phi, gf_cfg);
                bwd.dp = term.item() as f64;
                add_term(&mut gen_loss, term, weights.lambda);
            }
            if !cfg.no_r {
                let term = reversibility_loss(&subs_normal, degraded, |c| gen_w.forward(c).0);
                bwd.r = term.item() as f64;
                add_term(&mut gen_loss, term, weights.mu);
            }
        }

        let total = losses::total_loss(&fwd, &bwd, &weights, iteration)?;

        if let Some(loss) = gen_loss {
            let grads = loss.backward();
            let grad_list: Vec<Tensor<f32>> =
                gen_w.param_tensors().iter().map(|p| grads.get(p)).collect();
            let mut params = self.models.gen.param_tensors();
            self.opt_gen.step(&mut params, &grad_list)?;
            let mut i = 0;
            self.models.gen.for_each_param_mut(&mut |_, p| {
                *p = params[i].clone();
                i += 1;
            });
        }

        // Discriminator updates on detached fakes.
        let mut adv_d_n = 0f64;
        let mut adv_d_l = 0f64;
        if weights.adv > 0.0 {
            let detached_enhanced: [Tensor<f32>; 4] = std::array::from_fn(|i| enhanced[i].detach());
            adv_d_n = update_discriminator(
                &mut self.models.disc_n,
                &mut self.opt_dn,
                &subs_normal,
                &detached_enhanced,
                &mut crop_rng,
            )?;
            if let Some((degraded, _)) = &backward_pass {
                let detached_degraded: [Tensor<f32>; 4] =
                    std::array::from_fn(|i| degraded[i].detach());
                adv_d_l = update_discriminator(
                    &mut self.models.disc_l,
                    &mut self.opt_dl,
                    &subs_low,
                    &detached_degraded,
                    &mut crop_rng,
                )?;
            }
        }

        self.iteration = iteration;
        Ok(LossReport { iteration, forward: fwd, backward: bwd, adv_d_n, adv_d_l, total })
    }

    /// Runs until `config.iterations`, invoking the observer after each step.
    /// Returns every report (the observer decides what to log or persist).
    pub fn run(
        &mut self,
        data: &LoadedDataset,
        mut observer: impl FnMut(&LossReport, &Trainer) -> Result<()>,
    ) -> Result<Vec<LossReport>> {
        let mut reports = Vec::new();
        while self.iteration < self.config.iterations {
            let mut rng = iteration_rng(self.config.seed, self.iteration + 1);
            let low = sample_batch(&data.low, self.config.batch_size, &mut rng);
            let normal = sample_batch(&data.normal, self.config.batch_size, &mut rng);
            let report = self.train_step(&low, &normal)?;
            observer(&report, self)?;
            reports.push(report);
        }
        Ok(reports)
    }
}

fn named(gen: &InvNet<f32>) -> Vec<(String, Tensor<f32>)> {
    let mut out = Vec::new();
    gen.for_each_param(&mut |name, t| out.push((name, t.clone())));
    out
}

fn named_disc(d: &PatchGan<f32>) -> Vec<(String, Tensor<f32>)> {
    let mut out = Vec::new();
    d.for_each_param(&mut |name, t| out.push((name, t.clone())));
    out
}

fn parse_meta(c: &Container, key: &str) -> Result<u64> {
    c.meta_value(key)?
        .parse()
        .map_err(|_| Error::Checkpoint(format!("metadata key {key:?} is not an integer")))
}

fn load_phi(config: &TrainConfig) -> Result<FeatureExtractor<f32>> {
    if config.phi_weights.is_empty() {
        return Ok(FeatureExtractor::seeded(config.phi_seed));
    }
    let c = Container::load(Path::new(&config.phi_weights))?;
    let mut stages = Vec::new();
    for i in 1.. {
        let wname = format!("phi.s{i}.w");
        if !c.tensors.contains_key(&wname) {
            break;
        }
        stages.push(losses::FeatureStage {
            weight: c.tensor(&wname)?.detach(),
            bias: c.tensor(&format!("phi.s{i}.b"))?.detach(),
        });
    }
    if stages.is_empty() {
        return Err(Error::Checkpoint(format!(
            "feature weight file {} holds no phi.s1.w",
            config.phi_weights
        )));
    }
    Ok(FeatureExtractor::from_stages(stages))
}

/// Prepares one sub-image stack for a discriminator: random crop, then
/// nearest-neighbor upsampling until both spatial dims reach the PatchGAN
/// minimum extent.
fn disc_prep(sub: &Tensor<f32>, rng: &mut ChaCha20Rng) -> Tensor<f32> {
    let rank = sub.shape().len();
    let (h, w) = (sub.shape()[rank - 2], sub.shape()[rank - 1]);
    let mut factor = 1usize;
    while h.min(w) * factor < MIN_INPUT_EXTENT {
        factor *= 2;
    }
    let mut cur = if factor > 1 {
        let target = MIN_INPUT_EXTENT.div_ceil(factor);
        let (ch, cw) = (target.min(h), target.min(w));
        let y0 = rng.random_range(0..=h - ch);
        let x0 = rng.random_range(0..=w - cw);
        sub.crop_spatial(y0, x0, ch, cw)
    } else {
        sub.clone()
    };
    for _ in 0..factor.trailing_zeros() {
        cur = cur.upsample_nearest_2x();
    }
    cur
}

/// Generator-side adversarial term, averaged over the four sub-images.
fn adv_generator_term(
    disc: &PatchGan<f32>,
    fakes: &[Tensor<f32>; 4],
    rng: &mut ChaCha20Rng,
) -> Tensor<f32> {
    let mut acc: Option<Tensor<f32>> = None;
    for fake in fakes {
        let scores = disc.forward(&disc_prep(fake, rng));
        let term = lsgan_generator_term(&scores);
        acc = Some(match acc {
            Some(t) => t.add(&term),
            None => term,
        });
    }
    acc.unwrap().scale(0.25)
}

/// One LSGAN update of a discriminator on real sub-images versus detached
/// fakes; returns the scalar discriminator loss.
fn update_discriminator(
    disc: &mut PatchGan<f32>,
    opt: &mut Adam,
    reals: &[Tensor<f32>; 4],
    fakes: &[Tensor<f32>; 4],
    rng: &mut ChaCha20Rng,
) -> Result<f64> {
    let tape = Tape::new();
    let disc_w = disc.watched(&tape);
    let mut acc: Option<Tensor<f32>> = None;
    for (real, fake) in reals.iter().zip(fakes) {
        let real_scores = disc_w.forward(&disc_prep(real, rng));
        let fake_scores = disc_w.forward(&disc_prep(fake, rng));
        let term = lsgan_discriminator_term(&real_scores, &fake_scores);
        acc = Some(match acc {
            Some(t) => t.add(&term),
            None => term,
        });
    }
    let loss = acc.unwrap().scale(0.25);
    let value = loss.item() as f64;
    let grads = loss.backward();
    let grad_list: Vec<Tensor<f32>> = disc_w.param_tensors().iter().map(|p| grads.get(p)).collect();
    let mut params = disc.param_tensors();
    opt.step(&mut params, &grad_list)?;
    let mut i = 0;
    disc.for_each_param_mut(&mut |_, p| {
        *p = params[i].clone();
        i += 1;
    });
    Ok(value)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_config() -> TrainConfig {
        let mut cfg = TrainConfig::default();
        cfg.iterations = 2;
        cfg.batch_size = 1;
        cfg.coupling_layers = 2;
        cfg.subnet_width = 4;
        cfg.disc_width = 1;
        cfg.train_width = 32;
        cfg.train_height = 32;
        cfg.gf_radius = 2;
        cfg.seed = 5;
        cfg
    }

    fn batches(cfg: &TrainConfig, seed: u64) -> (Tensor<f32>, Tensor<f32>) {
        let mut rng = iteration_rng(seed, 1);
        let n = cfg.batch_size * 3 * cfg.train_height * cfg.train_width;
        let low = Tensor::new(
            vec![cfg.batch_size, 3, cfg.train_height, cfg.train_width],
            (0..n).map(|_| rng.random_range(0.0..0.3)).collect(),
        );
        let normal = Tensor::new(
            vec![cfg.batch_size, 3, cfg.train_height, cfg.train_width],
            (0..n).map(|_| rng.random_range(0.4..0.9)).collect(),
        );
        (low, normal)
    }

    #[test]
    fn deterministic_step_reports() {
        let cfg = tiny_config();
        let (low, normal) = batches(&cfg, 3);
        let r1 = Trainer::new(cfg.clone()).unwrap().train_step(&low, &normal).unwrap();
        let r2 = Trainer::new(cfg).unwrap().train_step(&low, &normal).unwrap();
        assert_eq!(r1.log_line(), r2.log_line());
    }

    #[test]
    fn zero_weights_leave_generator_unchanged() {
        let mut cfg = tiny_config();
        cfg.weights.adv = 0.0;
        cfg.weights.eta = 0.0;
        cfg.weights.lambda = 0.0;
        cfg.weights.mu = 0.0;
        cfg.no_tc = true;
        cfg.no_dp = true;
        cfg.no_r = true;
        let mut t = Trainer::new(cfg.clone()).unwrap();
        let before: Vec<Vec<f32>> =
            t.models.gen.param_tensors().iter().map(|p| p.data().to_vec()).collect();
        let (low, normal) = batches(&cfg, 4);
        let report = t.train_step(&low, &normal).unwrap();
        let after: Vec<Vec<f32>> =
            t.models.gen.param_tensors().iter().map(|p| p.data().to_vec()).collect();
        assert_eq!(before, after);
        assert_eq!(report.total, 0.0);
    }

    #[test]
    fn forward_only_reports_no_backward_losses() {
        let mut cfg = tiny_config();
        cfg.forward_only = true;
        let mut t = Trainer::new(cfg.clone()).unwrap();
        let (low, normal) = batches(&cfg, 6);
        let report = t.train_step(&low, &normal).unwrap();
        assert_eq!(report.backward, DirectionLosses::default());
        assert_eq!(report.adv_d_l, 0.0);
        assert!(report.forward.r >= 0.0);
    }

    #[test]
    fn ablation_flags_zero_their_component() {
        for (flag, pick) in [
            ("tc", 0usize),
            ("dp", 1),
            ("r", 2),
        ] {
            let mut cfg = tiny_config();
            match flag {
                "tc" => cfg.no_tc = true,
                "dp" => cfg.no_dp = true,
                _ => cfg.no_r = true,
            }
            let mut t = Trainer::new(cfg.clone()).unwrap();
            // The identity-initialized net keeps tc and r exactly zero, so
            // give the generator random gammas to light every component up.
            t.models.gen = crate::invnet::InvNet::init_random(
                cfg.coupling_layers,
                SplitScheme::new(cfg.split_n),
                cfg.subnet_width,
                cfg.stability_clamp_opt(),
                0.4,
                &mut ChaCha20Rng::seed_from_u64(99),
            );
            let (low, normal) = batches(&cfg, 8);
            let r = t.train_step(&low, &normal).unwrap();
            let values = [
                r.forward.tc + r.backward.tc,
                r.forward.dp + r.backward.dp,
                r.forward.r + r.backward.r,
            ];
            assert_eq!(values[pick], 0.0, "{flag} not zeroed");
            for (i, v) in values.iter().enumerate() {
                if i != pick {
                    assert!(*v != 0.0, "{flag}: component {i} unexpectedly zero");
                }
            }
        }
    }

    #[test]
    fn checkpoint_round_trip_is_byte_identical() {
        let cfg = tiny_config();
        let mut t = Trainer::new(cfg.clone()).unwrap();
        let (low, normal) = batches(&cfg, 10);
        t.train_step(&low, &normal).unwrap();
        let bytes = t.to_container().to_bytes();
        let restored = Trainer::from_container(&Container::from_bytes(&bytes).unwrap()).unwrap();
        assert_eq!(restored.iteration, t.iteration);
        assert_eq!(restored.to_container().to_bytes(), bytes);
    }

    #[test]
    fn resumed_trainer_continues_identically() {
        let cfg = tiny_config();
        let (low, normal) = batches(&cfg, 12);

        let mut full = Trainer::new(cfg.clone()).unwrap();
        full.train_step(&low, &normal).unwrap();
        let expected = full.train_step(&low, &normal).unwrap();

        let mut half = Trainer::new(cfg).unwrap();
        half.train_step(&low, &normal).unwrap();
        let container = half.to_container();
        let mut resumed = Trainer::from_container(&container).unwrap();
        let got = resumed.train_step(&low, &normal).unwrap();
        assert_eq!(expected.log_line(), got.log_line());
    }

    #[test]
    fn log_line_round_trips_through_parser() {
        let report = LossReport {
            iteration: 17,
            forward: DirectionLosses { adv: 0.25, tc: 0.5, dp: 0.125, r: 0.0625 },
            backward: DirectionLosses { adv: 0.75, tc: 0.25, dp: 0.375, r: 0.1875 },
            adv_d_n: 0.5,
            adv_d_l: 0.25,
            total: 3.5,
        };
        let line = report.log_line();
        let (iter, vals) = LossReport::parse_log_line(&line).unwrap();
        assert_eq!(iter, 17);
        assert_eq!(vals[0], 1.0);
        assert_eq!(vals[1], 0.75);
        assert_eq!(vals[5], 3.5);
        assert!(LossReport::parse_log_line("iter=3 bogus=1").is_none());
    }
}
