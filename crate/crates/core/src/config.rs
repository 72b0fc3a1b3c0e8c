//! Declarative experiment configuration, read from and written to TOML.

use crate::error::{Error, Result};
use crate::oscquad::Term;
use serde::{Deserialize, Serialize};
use std::path::PathBuf;

pub const COMMANDS: &[&str] = &["weyl-verify", "statphase", "blowup-demo", "spectrum-dump", "reduced-volume"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub command: String,
    #[serde(default)]
    pub action: Option<String>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub threads: Option<usize>,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    #[serde(default)]
    pub tolerance: Option<f64>,
    #[serde(default)]
    pub weyl: WeylSection,
    #[serde(default)]
    pub oscillatory: OscillatorySection,
    #[serde(default)]
    pub volume: VolumeSection,
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeylSection {
    #[serde(default = "default_weights")]
    pub weights: Vec<i64>,
    #[serde(default = "default_lambda_max")]
    pub lambda_max: f64,
}

fn default_weights() -> Vec<i64> {
    vec![0]
}

fn default_lambda_max() -> f64 {
    1e6
}

impl Default for WeylSection {
    fn default() -> Self {
        WeylSection { weights: default_weights(), lambda_max: default_lambda_max() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OscillatorySection {
    /// Builtin phase name or path of a phase TOML file.
    #[serde(default)]
    pub phase: Option<String>,
    /// μ range; the grid is geometric between the two ends.
    #[serde(default)]
    pub mu: Option<(f64, f64)>,
    #[serde(default = "default_points")]
    pub points: usize,
    /// Fit model as "alpha:k,...".
    #[serde(default)]
    pub terms: Option<String>,
}

fn default_points() -> usize {
    9
}

impl Default for OscillatorySection {
    fn default() -> Self {
        OscillatorySection { phase: None, mu: None, points: default_points(), terms: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VolumeSection {
    #[serde(default = "default_samples")]
    pub samples: u64,
}

fn default_samples() -> u64 {
    100_000
}

impl Default for VolumeSection {
    fn default() -> Self {
        VolumeSection { samples: default_samples() }
    }
}

impl ExperimentConfig {
    pub fn new(command: &str) -> Self {
        ExperimentConfig {
            command: command.to_string(),
            action: None,
            seed: 0,
            threads: None,
            out_dir: default_out_dir(),
            tolerance: None,
            weyl: WeylSection::default(),
            oscillatory: OscillatorySection::default(),
            volume: VolumeSection::default(),
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if !COMMANDS.contains(&self.command.as_str()) {
            return Err(Error::Config(format!("unknown command {:?}; expected one of {}", self.command, COMMANDS.join(", "))));
        }
        if self.seed > i64::MAX as u64 {
            return Err(Error::Config(format!("seed must be at most {} (TOML integers are signed)", i64::MAX)));
        }
        if let Some(t) = self.tolerance {
            if !(t > 0.0 && t.is_finite()) {
                return Err(Error::Config(format!("tolerance must be positive, got {t}")));
            }
        }
        if self.threads == Some(0) {
            return Err(Error::Config("threads must be at least 1".into()));
        }
        if !(self.weyl.lambda_max >= 1.0 && self.weyl.lambda_max.is_finite()) {
            return Err(Error::Config(format!("lambda_max must be finite and at least 1, got {}", self.weyl.lambda_max)));
        }
        if let Some((a, b)) = self.oscillatory.mu {
            if !(a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite()) {
                return Err(Error::Config(format!("mu range must be positive, got {a}..{b}")));
            }
        }
        if self.oscillatory.points == 0 {
            return Err(Error::Config("points must be at least 1".into()));
        }
        if let Some(t) = &self.oscillatory.terms {
            parse_terms(t)?;
        }
        Ok(())
    }
}

/// Parses "a..b" or a single value "a" into a range.
pub fn parse_range(text: &str) -> Result<(f64, f64)> {
    let parse = |s: &str| s.trim().parse::<f64>().map_err(|_| Error::Config(format!("bad number {s:?} in range {text:?}")));
    match text.split_once("..") {
        Some((a, b)) => Ok((parse(a)?, parse(b)?)),
        None => {
            let v = parse(text)?;
            Ok((v, v))
        }
    }
}

/// Parses a comma-separated list of integer weights.
pub fn parse_weights(text: &str) -> Result<Vec<i64>> {
    text.split(',')
        .map(|s| s.trim().parse::<i64>().map_err(|_| Error::Config(format!("bad weight {s:?}"))))
        .collect()
}

/// Parses "alpha:k,..." into fit terms h^alpha log^k(1/h).
pub fn parse_terms(text: &str) -> Result<Vec<Term>> {
    text.split(',')
        .map(|item| {
            let bad = || Error::Config(format!("bad term {item:?}; expected alpha:k"));
            let (a, k) = item.trim().split_once(':').ok_or_else(bad)?;
            let alpha = a.trim().parse::<f64>().map_err(|_| bad())?;
            let k = k.trim().parse::<u32>().map_err(|_| bad())?;
            if !alpha.is_finite() {
                return Err(bad());
            }
            Ok(Term::new(alpha, k))
        })
        .collect()
}
