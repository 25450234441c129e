//! Training hyperparameters and the `key=value` config format.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    /// GCN layer count.
    pub layers: usize,
    /// Representation width.
    pub dim: usize,
    /// Projector hidden width.
    pub proj_dim: usize,
    /// Positive parts per node (self plus `positives - 1` neighbors).
    pub positives: usize,
    pub lambda: f64,
    pub tau: f64,
    pub epochs: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            layers: 1,
            dim: 1024,
            proj_dim: 2048,
            positives: 3,
            lambda: 0.001,
            tau: 0.99,
            epochs: 1000,
            lr: 0.005,
            weight_decay: 0.0001,
            seed: 0,
        }
    }
}

/// Config keys in canonical order.
pub const CONFIG_KEYS: [&str; 10] = [
    "L",
    "D",
    "D_q",
    "K",
    "lambda",
    "tau",
    "epochs",
    "lr",
    "weight_decay",
    "seed",
];

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: &str| Err(Error::Invalid(msg.to_string()));
        if self.layers < 1 {
            return fail("L must be >= 1");
        }
        if self.dim < 1 {
            return fail("D must be >= 1");
        }
        if self.proj_dim < 1 {
            return fail("D_q must be >= 1");
        }
        if self.positives < 1 {
            return fail("K must be >= 1");
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return fail("lambda must be >= 0");
        }
        if !(0.0..=1.0).contains(&self.tau) {
            return fail("tau must be in [0, 1]");
        }
        if self.epochs < 1 {
            return fail("epochs must be >= 1");
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return fail("lr must be >= 0");
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return fail("weight_decay must be >= 0");
        }
        Ok(())
    }

    /// Apply one `key=value` assignment.
    pub fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        fn num<T: std::str::FromStr>(key: &str, v: &str) -> std::result::Result<T, String> {
            v.parse().map_err(|_| format!("cannot parse {key}={v:?}"))
        }
        match key {
            "L" => self.layers = num(key, value)?,
            "D" => self.dim = num(key, value)?,
            "D_q" => self.proj_dim = num(key, value)?,
            "K" => self.positives = num(key, value)?,
            "lambda" => self.lambda = num(key, value)?,
            "tau" => self.tau = num(key, value)?,
            "epochs" => self.epochs = num(key, value)?,
            "lr" => self.lr = num(key, value)?,
            "weight_decay" => self.weight_decay = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            _ => return Err(format!("unknown key {key:?}")),
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<String> {
        Some(match key {
            "L" => self.layers.to_string(),
            "D" => self.dim.to_string(),
            "D_q" => self.proj_dim.to_string(),
            "K" => self.positives.to_string(),
            "lambda" => self.lambda.to_string(),
            "tau" => self.tau.to_string(),
            "epochs" => self.epochs.to_string(),
            "lr" => self.lr.to_string(),
            "weight_decay" => self.weight_decay.to_string(),
            "seed" => self.seed.to_string(),
            _ => return None,
        })
    }

    /// Serialize as `key=value` lines. `f64` Display round-trips exactly.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for key in CONFIG_KEYS {
            let _ = writeln!(s, "{key}={}", self.get(key).unwrap());
        }
        s
    }

    /// Parse `key=value` text. Blank lines and `#` comments are skipped;
    /// missing keys keep their defaults; unknown keys are errors.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |message: String| Error::Config { line: n + 1, message };
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| err(format!("expected key=value, got {line:?}")))?;
            cfg.set(k.trim(), v.trim()).map_err(err)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

pub fn parse_config(path: impl AsRef<Path>) -> Result<TrainConfig> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    TrainConfig::parse(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn only_d_uses_defaults() {
        let cfg = TrainConfig::parse("D=1024\n").unwrap();
        assert_eq!(cfg, TrainConfig { dim: 1024, ..TrainConfig::default() });
        assert_eq!(cfg.tau, 0.99);
        assert_eq!(cfg.lr, 0.005);
        assert_eq!(cfg.weight_decay, 0.0001);
    }

    #[test]
    fn wikics_row() {
        let text = "L=2\nD=1024\nD_q=2048\nK=6\nlambda=0.005\nepochs=1000\n";
        let cfg = TrainConfig::parse(text).unwrap();
        assert_eq!(
            (cfg.layers, cfg.dim, cfg.proj_dim, cfg.positives, cfg.lambda, cfg.epochs),
            (2, 1024, 2048, 6, 0.005, 1000)
        );
    }

    #[test]
    fn zero_positives_rejected() {
        let err = TrainConfig::parse("K=0").unwrap_err().to_string();
        assert!(err.contains("K must be >= 1"), "{err}");
    }

    #[test]
    fn unknown_and_unparsable() {
        assert!(TrainConfig::parse("beta=1").unwrap_err().to_string().contains("unknown key"));
        assert!(TrainConfig::parse("D=abc").unwrap_err().to_string().contains("line 1"));
        assert!(TrainConfig::parse("tau=1.5").is_err());
    }

    #[test]
    fn text_round_trip() {
        let cfg = TrainConfig {
            lambda: 0.1 + 0.2,
            tau: 0.987_654_321,
            seed: 99,
            ..TrainConfig::default()
        };
        assert_eq!(TrainConfig::parse(&cfg.to_text()).unwrap(), cfg);
    }
}
