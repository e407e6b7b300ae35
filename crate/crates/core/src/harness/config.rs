//! Experiment configuration: a TOML file with `[world]`, `[algorithm]` and
//! `[run]` tables, plus `key value` overrides that win over the file.

use std::path::{Path, PathBuf};

use serde::Deserialize;
use toml::{Table, Value};

use crate::baselines::{AlgorithmParams, Baseline};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorldConfig {
    pub n: usize,
    pub m: usize,
    #[serde(alias = "L")]
    pub servers: usize,
    pub d: usize,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default = "default_sigma0")]
    pub sigma0: f64,
    /// Ratings file; when set, preferences come from its factorization.
    #[serde(default)]
    pub ratings: Option<PathBuf>,
    #[serde(default)]
    pub clamp_rewards: bool,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlgorithmConfig {
    #[serde(alias = "T")]
    pub horizon: u64,
    #[serde(alias = "K")]
    pub items: usize,
    #[serde(alias = "U", default = "default_threshold")]
    pub upload: f64,
    #[serde(alias = "D", default = "default_threshold")]
    pub download: f64,
    #[serde(default = "default_alpha1")]
    pub alpha1: f64,
    #[serde(default = "default_alpha2")]
    pub alpha2: f64,
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "default_delta")]
    pub delta: f64,
    /// Failure probability; `1/(8T)` when absent.
    #[serde(default)]
    pub alpha: Option<f64>,
    /// Smallest eigenvalue of the item second moment; `1/d` when absent.
    #[serde(default)]
    pub lambda_x: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum SeedSpec {
    List(Vec<u64>),
    Range(String),
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_seeds")]
    pub seeds: SeedSpec,
    #[serde(default = "default_baselines")]
    pub baselines: Vec<String>,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    #[serde(default)]
    pub dense: bool,
    #[serde(default = "default_true")]
    pub timing: bool,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub world: WorldConfig,
    pub algorithm: AlgorithmConfig,
    #[serde(default = "default_run")]
    pub run: RunConfig,
}

fn default_gamma() -> f64 {
    std::f64::consts::SQRT_2
}
fn default_sigma0() -> f64 {
    0.1
}
fn default_threshold() -> f64 {
    1.01
}
fn default_alpha1() -> f64 {
    1.0
}
fn default_alpha2() -> f64 {
    1.0
}
fn default_lambda() -> f64 {
    1.0
}
fn default_epsilon() -> f64 {
    1.0
}
fn default_delta() -> f64 {
    0.1
}
fn default_true() -> bool {
    true
}
fn default_seeds() -> SeedSpec {
    SeedSpec::List(vec![0])
}
fn default_baselines() -> Vec<String> {
    Baseline::ALL.iter().map(|b| b.as_str().to_string()).collect()
}
fn default_out() -> PathBuf {
    PathBuf::from("results")
}
fn default_run() -> RunConfig {
    RunConfig {
        seeds: default_seeds(),
        baselines: default_baselines(),
        out: default_out(),
        dense: false,
        timing: true,
    }
}

const SECTIONS: [(&str, &[&str]); 3] = [
    ("world", &["n", "m", "servers", "d", "gamma", "sigma0", "ratings", "clamp_rewards"]),
    (
        "algorithm",
        &[
            "horizon", "items", "upload", "download", "alpha1", "alpha2", "lambda", "epsilon", "delta", "alpha",
            "lambda_x",
        ],
    ),
    ("run", &["seeds", "baselines", "out", "dense", "timing"]),
];

const ALIASES: [(&str, &str); 5] = [("L", "servers"), ("T", "horizon"), ("K", "items"), ("U", "upload"), ("D", "download")];

/// Section owning `key` (canonical name or alias), with the canonical name.
pub fn locate_key(key: &str) -> Option<(&'static str, &'static str)> {
    let (section, name) = match key.split_once('.') {
        Some((s, k)) => (Some(s), k),
        None => (None, key),
    };
    let canonical = ALIASES.iter().find(|(a, _)| *a == name).map_or(name, |(_, c)| *c);
    SECTIONS.iter().find_map(|(s, keys)| {
        let hit = keys.iter().find(|k| **k == canonical)?;
        (section.is_none() || section == Some(*s)).then_some((*s, *hit))
    })
}

/// Parses a command-line value as TOML (number, bool, array), falling back
/// to a plain string.
fn parse_value(raw: &str) -> Value {
    let doc = format!("v = {raw}");
    match doc.parse::<Table>() {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| Value::String(raw.to_string())),
        Err(_) => Value::String(raw.to_string()),
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str, overrides: &[(String, String)]) -> Result<Self> {
        let mut table: Table = text.parse().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        for (key, raw) in overrides {
            let (section, name) = locate_key(key).ok_or_else(|| Error::Config(format!("unknown override key '{key}'")))?;
            let entry = table
                .entry(section.to_string())
                .or_insert_with(|| Value::Table(Table::new()));
            let Value::Table(sec) = entry else {
                return Err(Error::Config(format!("[{section}] is not a table")));
            };
            // an alias spelled in the file would shadow the override
            for (alias, canonical) in ALIASES {
                if canonical == name {
                    sec.remove(alias);
                }
            }
            sec.insert(name.to_string(), parse_value(raw));
        }
        let cfg: ExperimentConfig = Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, overrides: &[(String, String)]) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text, overrides)
    }

    pub fn validate(&self) -> Result<()> {
        let a = &self.algorithm;
        let w = &self.world;
        let bad = |m: String| Err(Error::Config(m));
        if !(a.upload > 1.0 && a.download > 1.0) {
            return bad(format!("U and D must exceed 1 (U={}, D={})", a.upload, a.download));
        }
        if !(a.delta > 0.0 && a.delta < 1.0) {
            return bad(format!("delta {} not in (0, 1)", a.delta));
        }
        if !(a.epsilon > 0.0) {
            return bad(format!("epsilon {} must be positive", a.epsilon));
        }
        if a.horizon < 1 || a.items < 1 {
            return bad("T and K must be at least 1".into());
        }
        if !(a.lambda > 0.0) {
            return bad(format!("lambda {} must be positive", a.lambda));
        }
        if let Some(alpha) = a.alpha {
            if !(alpha > 0.0 && alpha < 1.0) {
                return bad(format!("alpha {alpha} not in (0, 1)"));
            }
        }
        if w.n == 0 || w.m == 0 || w.servers == 0 || w.d == 0 {
            return bad("n, m, L and d must be positive".into());
        }
        if self.run.baselines.is_empty() {
            return bad("no baselines selected".into());
        }
        for b in &self.run.baselines {
            b.parse::<Baseline>()?;
        }
        self.seeds()?;
        Ok(())
    }

    pub fn alpha(&self) -> f64 {
        self.algorithm.alpha.unwrap_or(1.0 / (8.0 * self.algorithm.horizon as f64))
    }

    pub fn lambda_x(&self) -> f64 {
        self.algorithm.lambda_x.unwrap_or(1.0 / self.world.d as f64)
    }

    pub fn seeds(&self) -> Result<Vec<u64>> {
        match &self.run.seeds {
            SeedSpec::List(v) if v.is_empty() => Err(Error::Config("empty seed list".into())),
            SeedSpec::List(v) => Ok(v.clone()),
            SeedSpec::Range(s) => parse_seed_range(s),
        }
    }

    pub fn baselines(&self) -> Result<Vec<Baseline>> {
        self.run.baselines.iter().map(|b| b.parse()).collect()
    }

    pub fn params(&self) -> AlgorithmParams {
        let a = &self.algorithm;
        AlgorithmParams {
            horizon: a.horizon,
            num_clusters: self.world.m,
            upload_threshold: a.upload,
            download_threshold: a.download,
            alpha1: a.alpha1,
            alpha2: a.alpha2,
            lambda: a.lambda,
            alpha: self.alpha(),
            sigma0: self.world.sigma0,
            epsilon: a.epsilon,
            delta: a.delta,
        }
    }
}

/// `a..b`, inclusive on both ends.
pub fn parse_seed_range(s: &str) -> Result<Vec<u64>> {
    let bad = || Error::Config(format!("seed range '{s}' is not of the form a..b"));
    let (a, b) = s.split_once("..").ok_or_else(bad)?;
    let a: u64 = a.trim().parse().map_err(|_| bad())?;
    let b: u64 = b.trim().parse().map_err(|_| bad())?;
    if b < a {
        return Err(bad());
    }
    Ok((a..=b).collect())
}
