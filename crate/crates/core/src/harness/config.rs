//! Plain-text `key = value` configuration.
//!
//! One entry per line, `#` starts a comment, blank lines are ignored. Later entries
//! override earlier ones. The same format is used for run manifests, so a manifest can be
//! fed back as a config to repeat the run.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::gan::{StrategyKind, TrainConfig};
use crate::noise_sources::SourceMode;
use crate::pmmc::{NoiseRegime, NoiseSpec};

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct KvConfig {
    entries: BTreeMap<String, String>,
    context: String,
}

impl KvConfig {
    pub fn new() -> Self {
        Self::default()
    }

    /// Parses `text`; `context` names the source in error messages.
    pub fn parse(text: &str, context: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::parse(
                    format!("{context}:{}", i + 1),
                    format!("expected key = value, got `{line}`"),
                )
            })?;
            let k = k.trim();
            if k.is_empty() || k.contains(char::is_whitespace) {
                return Err(Error::parse(
                    format!("{context}:{}", i + 1),
                    format!("bad key `{k}`"),
                ));
            }
            entries.insert(k.to_string(), v.trim().to_string());
        }
        Ok(Self {
            entries,
            context: context.to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn set(&mut self, key: &str, value: impl Display) {
        self.entries.insert(key.to_string(), value.to_string());
    }

    /// Copies every entry of `other` over this one.
    pub fn merge(&mut self, other: &KvConfig) {
        for (k, v) in &other.entries {
            self.entries.insert(k.clone(), v.clone());
        }
    }

    pub fn get_str(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: Display,
    {
        match self.entries.get(key) {
            None => Ok(None),
            Some(v) => v.parse().map(Some).map_err(|e| {
                Error::parse(
                    format!("{} key `{key}`", self.context),
                    format!("`{v}`: {e}"),
                )
            }),
        }
    }

    pub fn get_or<T: FromStr>(&self, key: &str, default: T) -> Result<T>
    where
        T::Err: Display,
    {
        Ok(self.get(key)?.unwrap_or(default))
    }

    /// Comma-separated list.
    pub fn get_list<T: FromStr>(&self, key: &str) -> Result<Option<Vec<T>>>
    where
        T::Err: Display,
    {
        let Some(v) = self.entries.get(key) else {
            return Ok(None);
        };
        v.split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.parse().map_err(|e| {
                    Error::parse(
                        format!("{} key `{key}`", self.context),
                        format!("`{s}`: {e}"),
                    )
                })
            })
            .collect::<Result<Vec<T>>>()
            .map(Some)
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn to_text(&self) -> String {
        self.entries
            .iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }
}

pub fn parse_regime(s: &str) -> Result<NoiseRegime> {
    match s {
        "fresh" => Ok(NoiseRegime::FreshPerUse),
        "fixed" => Ok(NoiseRegime::FixedPerDeployment),
        other => Err(Error::Config(format!(
            "unknown regime `{other}` (expected fresh or fixed)"
        ))),
    }
}

pub fn regime_name(r: NoiseRegime) -> &'static str {
    match r {
        NoiseRegime::FreshPerUse => "fresh",
        NoiseRegime::FixedPerDeployment => "fixed",
    }
}

pub fn parse_source_mode(s: &str) -> Result<SourceMode> {
    match s {
        "ideal" => Ok(SourceMode::IdealGaussian),
        "ase" => Ok(SourceMode::PhysicalAse),
        other => Err(Error::Config(format!(
            "unknown source mode `{other}` (expected ideal or ase)"
        ))),
    }
}

pub fn source_mode_name(m: SourceMode) -> &'static str {
    match m {
        SourceMode::IdealGaussian => "ideal",
        SourceMode::PhysicalAse => "ase",
    }
}

fn join<T: Display>(v: &[T]) -> String {
    v.iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join(",")
}

/// Every field of `cfg` as config entries.
pub fn train_config_to_kv(cfg: &TrainConfig) -> KvConfig {
    let mut kv = KvConfig::new();
    kv.set("strategy", cfg.strategy.name());
    match cfg.strategy {
        StrategyKind::NF => {}
        StrategyKind::IC { train_sigma } => kv.set("train_sigma", train_sigma),
        StrategyKind::WC { weight_noise_std } => kv.set("weight_noise", weight_noise_std),
        StrategyKind::CR {
            weight_noise_std,
            lambda,
        } => {
            kv.set("weight_noise", weight_noise_std);
            kv.set("lambda", lambda);
        }
    }
    kv.set("epochs", cfg.epochs);
    kv.set("batch", cfg.batch_size);
    kv.set("latent_dim", cfg.latent_dim);
    kv.set("infer_sigma", cfg.infer_sigma);
    kv.set("seed", cfg.seed);
    kv.set("gamma_max", cfg.gamma_max);
    kv.set("write_std", cfg.noise.write_std);
    kv.set("read_std", cfg.noise.read_std);
    kv.set("regime", regime_name(cfg.noise.regime));
    kv.set("latent_mode", source_mode_name(cfg.latent_mode));
    kv.set("lr", cfg.adam.learning_rate);
    kv.set("beta1", cfg.adam.beta1);
    kv.set("beta2", cfg.adam.beta2);
    kv.set("adam_eps", cfg.adam.epsilon);
    kv.set("gen_hidden", join(&cfg.gen_hidden));
    kv.set("disc_hidden", join(&cfg.disc_hidden));
    kv.set("leaky_slope", cfg.leaky_slope);
    kv
}

/// `base` with every key present in `kv` applied, then validated.
pub fn train_config_from_kv(kv: &KvConfig, base: &TrainConfig) -> Result<TrainConfig> {
    let mut cfg = base.clone();
    if let Some(name) = kv.get_str("strategy") {
        cfg.strategy = StrategyKind::from_name(name)?;
    }
    match &mut cfg.strategy {
        StrategyKind::NF => {}
        StrategyKind::IC { train_sigma } => {
            *train_sigma = kv.get_or("train_sigma", *train_sigma)?;
        }
        StrategyKind::WC { weight_noise_std } => {
            *weight_noise_std = kv.get_or("weight_noise", *weight_noise_std)?;
        }
        StrategyKind::CR {
            weight_noise_std,
            lambda,
        } => {
            *weight_noise_std = kv.get_or("weight_noise", *weight_noise_std)?;
            *lambda = kv.get_or("lambda", *lambda)?;
        }
    }
    cfg.epochs = kv.get_or("epochs", cfg.epochs)?;
    cfg.batch_size = kv.get_or("batch", cfg.batch_size)?;
    cfg.latent_dim = kv.get_or("latent_dim", cfg.latent_dim)?;
    cfg.infer_sigma = kv.get_or("infer_sigma", cfg.infer_sigma)?;
    cfg.seed = kv.get_or("seed", cfg.seed)?;
    cfg.gamma_max = kv.get_or("gamma_max", cfg.gamma_max)?;
    let regime = match kv.get_str("regime") {
        Some(r) => parse_regime(r)?,
        None => cfg.noise.regime,
    };
    cfg.noise = NoiseSpec::new(
        kv.get_or("write_std", cfg.noise.write_std)?,
        kv.get_or("read_std", cfg.noise.read_std)?,
        regime,
    )?;
    if let Some(m) = kv.get_str("latent_mode") {
        cfg.latent_mode = parse_source_mode(m)?;
    }
    cfg.adam.learning_rate = kv.get_or("lr", cfg.adam.learning_rate)?;
    cfg.adam.beta1 = kv.get_or("beta1", cfg.adam.beta1)?;
    cfg.adam.beta2 = kv.get_or("beta2", cfg.adam.beta2)?;
    cfg.adam.epsilon = kv.get_or("adam_eps", cfg.adam.epsilon)?;
    if let Some(h) = kv.get_list("gen_hidden")? {
        cfg.gen_hidden = h;
    }
    if let Some(h) = kv.get_list("disc_hidden")? {
        cfg.disc_hidden = h;
    }
    cfg.leaky_slope = kv.get_or("leaky_slope", cfg.leaky_slope)?;
    cfg.validate()?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_overrides() {
        let kv =
            KvConfig::parse("# run\nepochs = 3\n\nlr=2e-4  # faster\nepochs = 5\n", "t").unwrap();
        assert_eq!(kv.get::<usize>("epochs").unwrap(), Some(5));
        assert_eq!(kv.get::<f64>("lr").unwrap(), Some(2e-4));
        assert_eq!(kv.get::<f64>("missing").unwrap(), None);
        assert!(KvConfig::parse("no equals sign", "t").is_err());
        assert!(KvConfig::parse("a b = 1", "t").is_err());
        assert!(kv.get::<usize>("lr").is_err());
    }

    #[test]
    fn train_config_round_trip() {
        let cfg = TrainConfig {
            strategy: StrategyKind::CR {
                weight_noise_std: 0.03,
                lambda: 0.5,
            },
            epochs: 7,
            seed: 42,
            noise: NoiseSpec::new(0.025, 0.001, NoiseRegime::FixedPerDeployment).unwrap(),
            latent_mode: SourceMode::PhysicalAse,
            gen_hidden: vec![32, 48],
            ..TrainConfig::default()
        };
        let kv = train_config_to_kv(&cfg);
        let text = kv.to_text();
        let back = train_config_from_kv(
            &KvConfig::parse(&text, "m").unwrap(),
            &TrainConfig::default(),
        )
        .unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn rejects_invalid_values() {
        let kv = KvConfig::parse("batch = 0", "t").unwrap();
        assert!(train_config_from_kv(&kv, &TrainConfig::default()).is_err());
        let kv = KvConfig::parse("regime = sometimes", "t").unwrap();
        assert!(train_config_from_kv(&kv, &TrainConfig::default()).is_err());
    }
}
