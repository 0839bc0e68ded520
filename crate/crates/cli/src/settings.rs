//! Flat `key = value` configuration shared by every subcommand.
//!
//! Precedence, lowest first: built-in defaults, the `--config` file,
//! `--set key=value` flags in order, then dedicated flags such as `--epochs`.

use std::path::Path;

use ggd_core::discriminate::{config_hash, TrainConfig};
use ggd_core::probe::ProbeConfig;
use ggd_core::sampler::MinibatchConfig;

use crate::error::CliError;

/// Keys outside [`TrainConfig::KEYS`].
const EXTRA_KEYS: [&str; 8] = [
    "batch_size",
    "fanouts",
    "minibatch",
    "power",
    "prefetch",
    "probe_epochs",
    "probe_l2",
    "probe_lr",
];

#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    pub train: TrainConfig,
    pub minibatch: bool,
    pub mb: MinibatchConfig,
    pub power: usize,
    pub probe: ProbeConfig,
}

impl Default for Settings {
    fn default() -> Self {
        Self {
            train: TrainConfig::default(),
            minibatch: false,
            mb: MinibatchConfig::default(),
            power: ggd_core::inference::DEFAULT_POWER,
            probe: ProbeConfig::default(),
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, CliError> {
    value
        .parse()
        .map_err(|_| CliError::Config(format!("{key}: cannot parse {value:?}")))
}

impl Settings {
    pub fn keys() -> Vec<&'static str> {
        let mut k: Vec<&str> = TrainConfig::KEYS.iter().chain(&EXTRA_KEYS).copied().collect();
        k.sort_unstable();
        k
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        if self.train.set(key, value)? {
            return Ok(());
        }
        match key {
            "minibatch" => self.minibatch = parse(key, value)?,
            "batch_size" => self.mb.batch_size = parse(key, value)?,
            "fanouts" => self.mb.fanouts = parse_list(key, value)?,
            "prefetch" => self.mb.prefetch = parse(key, value)?,
            "power" => self.power = parse(key, value)?,
            "probe_lr" => self.probe.lr = parse(key, value)?,
            "probe_epochs" => self.probe.epochs = parse(key, value)?,
            "probe_l2" => self.probe.l2_weight = parse(key, value)?,
            _ => {
                return Err(CliError::Config(format!(
                    "unknown key `{key}` (known: {})",
                    Self::keys().join(", ")
                )))
            }
        }
        Ok(())
    }

    /// Applies `key = value` lines. Blank lines and `#` comments are skipped.
    pub fn apply_text(&mut self, text: &str, origin: &str) -> Result<(), CliError> {
        for (k, line) in text.lines().enumerate() {
            let body = line.trim();
            if body.is_empty() || body.starts_with('#') {
                continue;
            }
            let (key, value) = body
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("{origin}:{}: expected `key = value`", k + 1)))?;
            self.set(key.trim(), value.trim())
                .map_err(|e| CliError::Config(format!("{origin}:{}: {e}", k + 1)))?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<(), CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        self.apply_text(&text, &path.display().to_string())
    }

    /// `KEY=VALUE` pairs from `--set`.
    pub fn apply_overrides(&mut self, pairs: &[String]) -> Result<(), CliError> {
        for p in pairs {
            let (k, v) = p
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("--set expects KEY=VALUE, got {p:?}")))?;
            self.set(k.trim(), v.trim())?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.train.validate()?;
        if self.minibatch {
            if self.mb.batch_size == 0 {
                return Err(CliError::Config("batch_size: must be at least 1".into()));
            }
            if self.mb.fanouts.len() != self.train.num_conv {
                return Err(CliError::Config(format!(
                    "fanouts: {} entries for num_conv = {}",
                    self.mb.fanouts.len(),
                    self.train.num_conv
                )));
            }
        }
        if !(self.probe.lr > 0.0) {
            return Err(CliError::Config("probe_lr: must be positive".into()));
        }
        Ok(())
    }

    /// Every key with its resolved value, sorted by key.
    pub fn to_kv(&self) -> Vec<(String, String)> {
        let mut kv = self.train.to_kv();
        let fanouts: Vec<String> = self.mb.fanouts.iter().map(|f| f.to_string()).collect();
        for (k, v) in [
            ("batch_size", self.mb.batch_size.to_string()),
            ("fanouts", fanouts.join(",")),
            ("minibatch", self.minibatch.to_string()),
            ("power", self.power.to_string()),
            ("prefetch", self.mb.prefetch.to_string()),
            ("probe_epochs", self.probe.epochs.to_string()),
            ("probe_l2", self.probe.l2_weight.to_string()),
            ("probe_lr", self.probe.lr.to_string()),
        ] {
            kv.push((k.to_string(), v));
        }
        kv.sort();
        kv
    }

    pub fn hash(&self) -> String {
        config_hash(&self.to_kv())
    }

    /// Probe settings with the run seed.
    pub fn probe_config(&self) -> ProbeConfig {
        ProbeConfig {
            seed: self.train.seed,
            ..self.probe
        }
    }
}

pub fn parse_list(key: &str, value: &str) -> Result<Vec<usize>, CliError> {
    value
        .split(',')
        .map(|t| parse(key, t.trim()))
        .collect()
}
