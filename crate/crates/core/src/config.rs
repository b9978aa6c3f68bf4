//! Training configuration and the `key = value` config-file format.
//!
//! Lines hold one `key = value` pair; `#` starts a comment; unknown keys are
//! errors. The same pairs serialize into checkpoint metadata, so a snapshot
//! restores an identical configuration.

use crate::error::{Error, Result};
use crate::losses::LossWeights;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub iterations: u64,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub seed: u64,
    /// Number of coupling layers (K).
    pub coupling_layers: usize,
    /// Sub-images assigned to the a-part (1..=3).
    pub split_n: usize,
    pub subnet_width: usize,
    /// Discriminator base width; 64 is the full model.
    pub disc_width: usize,
    /// Bound for the scale subnets' raw output; 0 disables the clamp.
    pub stability_clamp: f64,
    pub train_width: usize,
    pub train_height: usize,
    pub weights: LossWeights,
    pub gf_radius: usize,
    pub gf_epsilon: f64,
    /// Seed of the fixed feature pyramid (ignored when a weight file is set).
    pub phi_seed: u64,
    /// Optional named-tensor file with feature-pyramid weights.
    pub phi_weights: String,
    pub no_tc: bool,
    pub no_dp: bool,
    pub no_r: bool,
    pub forward_only: bool,
    pub log_every: u64,
    pub checkpoint_every: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            iterations: 1000,
            batch_size: 4,
            learning_rate: 1e-4,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            seed: 0,
            coupling_layers: 8,
            split_n: 2,
            subnet_width: 32,
            disc_width: 64,
            stability_clamp: 2.0,
            train_width: 96,
            train_height: 64,
            weights: LossWeights::default(),
            gf_radius: 4,
            gf_epsilon: 1e-2,
            phi_seed: 101,
            phi_weights: String::new(),
            no_tc: false,
            no_dp: false,
            no_r: false,
            forward_only: false,
            log_every: 10,
            checkpoint_every: 200,
        }
    }
}

impl TrainConfig {
    pub fn stability_clamp_opt(&self) -> Option<f64> {
        (self.stability_clamp > 0.0).then_some(self.stability_clamp)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.iterations < 1 {
            return bad("iterations must be >= 1".into());
        }
        if self.batch_size < 1 {
            return bad("batch_size must be >= 1".into());
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate must be >= 0, got {}", self.learning_rate));
        }
        if self.coupling_layers < 1 {
            return bad("coupling_layers must be >= 1".into());
        }
        if !(1..=3).contains(&self.split_n) {
            return bad(format!("split_n must be 1..=3, got {}", self.split_n));
        }
        if self.subnet_width < 1 || self.disc_width < 1 {
            return bad("widths must be >= 1".into());
        }
        if self.train_width % 2 != 0 || self.train_height % 2 != 0 {
            return bad(format!(
                "training resolution must be even, got {}x{}",
                self.train_width, self.train_height
            ));
        }
        if self.train_width < 8 || self.train_height < 8 {
            return bad("training resolution must be at least 8x8".into());
        }
        if self.gf_radius < 1 {
            return bad("gf_radius must be >= 1".into());
        }
        if !(self.gf_epsilon > 0.0) {
            return bad("gf_epsilon must be > 0".into());
        }
        if self.log_every < 1 || self.checkpoint_every < 1 {
            return bad("log_every and checkpoint_every must be >= 1".into());
        }
        self.weights.validate()
    }

    fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
            value
                .parse()
                .map_err(|_| Error::Config(format!("invalid value {value:?} for key {key:?}")))
        }
        match key {
            "iterations" => self.iterations = parse(key, value)?,
            "batch_size" => self.batch_size = parse(key, value)?,
            "learning_rate" => self.learning_rate = parse(key, value)?,
            "adam_beta1" => self.adam_beta1 = parse(key, value)?,
            "adam_beta2" => self.adam_beta2 = parse(key, value)?,
            "adam_eps" => self.adam_eps = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "coupling_layers" => self.coupling_layers = parse(key, value)?,
            "split_n" => self.split_n = parse(key, value)?,
            "subnet_width" => self.subnet_width = parse(key, value)?,
            "disc_width" => self.disc_width = parse(key, value)?,
            "stability_clamp" => self.stability_clamp = parse(key, value)?,
            "train_width" => self.train_width = parse(key, value)?,
            "train_height" => self.train_height = parse(key, value)?,
            "adv_weight" => self.weights.adv = parse(key, value)?,
            "eta" => self.weights.eta = parse(key, value)?,
            "lambda" => self.weights.lambda = parse(key, value)?,
            "mu" => self.weights.mu = parse(key, value)?,
            "gf_radius" => self.gf_radius = parse(key, value)?,
            "gf_epsilon" => self.gf_epsilon = parse(key, value)?,
            "phi_seed" => self.phi_seed = parse(key, value)?,
            "phi_weights" => self.phi_weights = value.to_string(),
            "no_tc" => self.no_tc = parse(key, value)?,
            "no_dp" => self.no_dp = parse(key, value)?,
            "no_r" => self.no_r = parse(key, value)?,
            "forward_only" => self.forward_only = parse(key, value)?,
            "log_every" => self.log_every = parse(key, value)?,
            "checkpoint_every" => self.checkpoint_every = parse(key, value)?,
            _ => return Err(Error::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    /// Ordered `(key, value)` pairs covering every field.
    pub fn to_pairs(&self) -> Vec<(String, String)> {
        let w = &self.weights;
        [
            ("iterations", self.iterations.to_string()),
            ("batch_size", self.batch_size.to_string()),
            ("learning_rate", self.learning_rate.to_string()),
            ("adam_beta1", self.adam_beta1.to_string()),
            ("adam_beta2", self.adam_beta2.to_string()),
            ("adam_eps", self.adam_eps.to_string()),
            ("seed", self.seed.to_string()),
            ("coupling_layers", self.coupling_layers.to_string()),
            ("split_n", self.split_n.to_string()),
            ("subnet_width", self.subnet_width.to_string()),
            ("disc_width", self.disc_width.to_string()),
            ("stability_clamp", self.stability_clamp.to_string()),
            ("train_width", self.train_width.to_string()),
            ("train_height", self.train_height.to_string()),
            ("adv_weight", w.adv.to_string()),
            ("eta", w.eta.to_string()),
            ("lambda", w.lambda.to_string()),
            ("mu", w.mu.to_string()),
            ("gf_radius", self.gf_radius.to_string()),
            ("gf_epsilon", self.gf_epsilon.to_string()),
            ("phi_seed", self.phi_seed.to_string()),
            ("phi_weights", self.phi_weights.clone()),
            ("no_tc", self.no_tc.to_string()),
            ("no_dp", self.no_dp.to_string()),
            ("no_r", self.no_r.to_string()),
            ("forward_only", self.forward_only.to_string()),
            ("log_every", self.log_every.to_string()),
            ("checkpoint_every", self.checkpoint_every.to_string()),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect()
    }

    pub fn parse_text(text: &str) -> Result<TrainConfig> {
        let mut cfg = TrainConfig::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected `key = value`, got {raw:?}", lineno + 1))
            })?;
            cfg.set(key.trim(), value.trim())
                .map_err(|e| Error::Config(format!("line {}: {e}", lineno + 1)))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<TrainConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_text(&text)
    }

    /// Restores a config from checkpoint metadata pairs.
    pub fn from_pairs<'a>(pairs: impl Iterator<Item = (&'a str, &'a str)>) -> Result<TrainConfig> {
        let mut cfg = TrainConfig::default();
        for (k, v) in pairs {
            cfg.set(k, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_full_file_with_comments() {
        let text = "\
# toy run
iterations = 50
batch_size = 2   # small
learning_rate = 0.0001
mu = 100
no_tc = true
";
        let cfg = TrainConfig::parse_text(text).unwrap();
        assert_eq!(cfg.iterations, 50);
        assert_eq!(cfg.batch_size, 2);
        assert_eq!(cfg.weights.mu, 100.0);
        assert!(cfg.no_tc);
        assert_eq!(cfg.weights.eta, 0.5, "untouched keys keep defaults");
    }

    #[test]
    fn unknown_key_is_an_error() {
        let err = TrainConfig::parse_text("momentum = 0.9").unwrap_err();
        assert!(err.to_string().contains("unknown key"), "{err}");
    }

    #[test]
    fn malformed_line_is_an_error() {
        let err = TrainConfig::parse_text("iterations 50").unwrap_err();
        assert!(err.to_string().contains("key = value"), "{err}");
    }

    #[test]
    fn pairs_round_trip() {
        let mut cfg = TrainConfig::default();
        cfg.iterations = 123;
        cfg.weights.mu = 50.5;
        cfg.forward_only = true;
        let pairs = cfg.to_pairs();
        let back =
            TrainConfig::from_pairs(pairs.iter().map(|(k, v)| (k.as_str(), v.as_str()))).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn validation_rejects_odd_resolution() {
        let err = TrainConfig::parse_text("train_width = 95").unwrap_err();
        assert!(err.to_string().contains("even"), "{err}");
    }
}
