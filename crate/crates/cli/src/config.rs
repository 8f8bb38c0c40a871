//! Flat `key = value` run configuration.
//!
//! Layers, later wins: built-in defaults, the config file, `CATGRAD_*`
//! environment variables, command-line flags.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use catgrad::data::Pattern;
use catgrad::estimators::EstimatorConfig;
use catgrad::run::RunSettings;
use catgrad::{Error, Result};

pub const ENV_PREFIX: &str = "CATGRAD_";

/// Where images come from.
#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    /// Directory with the four standard IDX files.
    Idx(PathBuf),
    Synth { pattern: Pattern, train: usize, test: usize, seed: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub settings: RunSettings,
    pub data: DataSource,
    pub out: PathBuf,
}

const KEYS: &[&str] = &[
    "run_id",
    "estimator",
    "tau",
    "eta",
    "beta",
    "k",
    "cv_conditioning",
    "cv_leading_coeff",
    "rao_second_term",
    "rk2_form",
    "n",
    "latents",
    "encoder_hidden",
    "decoder_hidden",
    "optimizer",
    "lr",
    "epochs",
    "batch_size",
    "seed",
    "binarize",
    "checkpoint_every",
    "data_dir",
    "synth",
    "synth_train",
    "synth_test",
    "synth_seed",
    "out",
];

/// Ordered key/value pairs.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RawConfig(BTreeMap<String, String>);

impl RawConfig {
    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or_default().trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("{origin}:{}: expected key = value", i + 1)))?;
            let key = k.trim().to_ascii_lowercase();
            check_key(&key)?;
            map.insert(key, v.trim().to_string());
        }
        Ok(Self(map))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn set(&mut self, key: &str, value: impl Into<String>) -> Result<()> {
        let key = key.to_ascii_lowercase();
        check_key(&key)?;
        self.0.insert(key, value.into());
        Ok(())
    }

    /// Keys in `other` win.
    pub fn extend(&mut self, other: RawConfig) {
        self.0.extend(other.0);
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.0.get(key).map(String::as_str)
    }

    /// `CATGRAD_<KEY>` for every known key.
    pub fn apply_env(&mut self, vars: impl IntoIterator<Item = (String, String)>) -> Result<()> {
        for (name, value) in vars {
            if let Some(key) = name.strip_prefix(ENV_PREFIX) {
                let key = key.to_ascii_lowercase();
                if KEYS.contains(&key.as_str()) {
                    self.0.insert(key, value);
                }
            }
        }
        Ok(())
    }

    /// `key=value` overrides from the command line.
    pub fn apply_overrides(&mut self, pairs: &[String]) -> Result<()> {
        for pair in pairs {
            let (k, v) = pair.split_once('=').ok_or_else(|| Error::Config(format!("--set expects key=value, got `{pair}`")))?;
            self.set(k.trim(), v.trim())?;
        }
        Ok(())
    }
}

fn check_key(key: &str) -> Result<()> {
    if KEYS.contains(&key) {
        Ok(())
    } else {
        Err(Error::Config(format!("unknown config key `{key}`")))
    }
}

fn parse<T: std::str::FromStr>(raw: &RawConfig, key: &str) -> Result<Option<T>>
where
    T::Err: std::fmt::Display,
{
    raw.get(key)
        .map(|v| v.parse::<T>().map_err(|e| Error::Config(format!("{key} = `{v}`: {e}"))))
        .transpose()
}

fn parse_list(raw: &RawConfig, key: &str) -> Result<Option<Vec<usize>>> {
    raw.get(key)
        .map(|v| {
            v.split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(|s| s.parse().map_err(|e| Error::Config(format!("{key} = `{v}`: {e}"))))
                .collect()
        })
        .transpose()
}

fn parse_bool(raw: &RawConfig, key: &str) -> Result<Option<bool>> {
    raw.get(key)
        .map(|v| match v.to_ascii_lowercase().as_str() {
            "true" | "1" | "yes" | "on" => Ok(true),
            "false" | "0" | "no" | "off" => Ok(false),
            _ => Err(Error::Config(format!("{key} = `{v}` is not a boolean"))),
        })
        .transpose()
}

impl RunConfig {
    pub fn from_raw(raw: &RawConfig) -> Result<Self> {
        let kind = parse(raw, "estimator")?.unwrap_or(catgrad::estimators::EstimatorKind::ReinMax);
        let mut est = EstimatorConfig::new(kind);
        if let Some(tau) = parse::<f64>(raw, "tau")? {
            est = est.with_tau(tau).map_err(|e| Error::Config(format!("tau: {e}")))?;
        }
        if let Some(v) = parse(raw, "eta")? {
            est.eta = v;
        }
        if let Some(v) = parse(raw, "beta")? {
            est.beta = v;
        }
        if let Some(v) = parse(raw, "k")? {
            est.k_samples = v;
        }
        if let Some(v) = parse(raw, "cv_conditioning")? {
            est.cv_conditioning = v;
        }
        if let Some(v) = parse(raw, "cv_leading_coeff")? {
            est.cv_leading_coeff = v;
        }
        if let Some(v) = parse(raw, "rao_second_term")? {
            est.rao_second_term = v;
        }
        if let Some(v) = parse(raw, "rk2_form")? {
            est.rk2_form = v;
        }

        let mut s = RunSettings::new(est);
        if let Some(v) = raw.get("run_id") {
            s.run_id = v.to_string();
        }
        macro_rules! take {
            ($field:ident, $key:literal) => {
                if let Some(v) = parse(raw, $key)? {
                    s.$field = v;
                }
            };
        }
        take!(n, "n");
        take!(latents, "latents");
        take!(optimizer, "optimizer");
        take!(lr, "lr");
        take!(epochs, "epochs");
        take!(batch_size, "batch_size");
        take!(seed, "seed");
        take!(checkpoint_every, "checkpoint_every");
        if let Some(v) = parse_bool(raw, "binarize")? {
            s.binarize = v;
        }
        if let Some(v) = parse_list(raw, "encoder_hidden")? {
            s.encoder_hidden = v;
        }
        if let Some(v) = parse_list(raw, "decoder_hidden")? {
            s.decoder_hidden = v;
        }
        s.validate()?;

        let data = match (raw.get("data_dir"), raw.get("synth")) {
            (Some(dir), None | Some("none")) => DataSource::Idx(PathBuf::from(dir)),
            (_, Some(p)) if p != "none" => DataSource::Synth {
                pattern: p.parse()?,
                train: parse(raw, "synth_train")?.unwrap_or(2000),
                test: parse(raw, "synth_test")?.unwrap_or(500),
                seed: parse(raw, "synth_seed")?.unwrap_or(0),
            },
            _ => DataSource::Idx(PathBuf::from("data")),
        };
        let out = PathBuf::from(raw.get("out").unwrap_or("runs/run"));
        Ok(Self { settings: s, data, out })
    }

    /// Every key, re-loadable with [`RawConfig::parse`].
    pub fn render(&self) -> String {
        let s = &self.settings;
        let e = &s.estimator;
        let list = |v: &[usize]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
        let mut out = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        put("run_id", s.run_id.clone());
        put("estimator", e.kind.to_string());
        put("tau", e.tau.get().to_string());
        put("eta", e.eta.to_string());
        put("beta", e.beta.to_string());
        put("k", e.k_samples.to_string());
        put("cv_conditioning", e.cv_conditioning.to_string());
        put("cv_leading_coeff", e.cv_leading_coeff.to_string());
        put("rao_second_term", e.rao_second_term.to_string());
        put("rk2_form", e.rk2_form.to_string());
        put("n", s.n.to_string());
        put("latents", s.latents.to_string());
        put("encoder_hidden", list(&s.encoder_hidden));
        put("decoder_hidden", list(&s.decoder_hidden));
        put("optimizer", s.optimizer.to_string());
        put("lr", s.lr.to_string());
        put("epochs", s.epochs.to_string());
        put("batch_size", s.batch_size.to_string());
        put("seed", s.seed.to_string());
        put("binarize", s.binarize.to_string());
        put("checkpoint_every", s.checkpoint_every.to_string());
        match &self.data {
            DataSource::Idx(dir) => put("data_dir", dir.display().to_string()),
            DataSource::Synth { pattern, train, test, seed } => {
                put("synth", pattern.to_string());
                put("synth_train", train.to_string());
                put("synth_test", test.to_string());
                put("synth_seed", seed.to_string());
            }
        }
        put("out", self.out.display().to_string());
        out
    }
}
