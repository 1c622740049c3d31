//! Experiment configuration.
//!
//! Configs are TOML files with four optional sections:
//!
//! ```toml
//! [market]
//! source = "gbm"                  # or "csv"
//! initial_caps = [50.0, 100.0, 200.0, 400.0, 800.0]
//! variance = 0.04                 # diagonal covariance shorthand
//! # covariance = [[...], ...]     # full matrix, overrides `variance`
//! # drift = [0.0, ...]            # defaults to zeros
//! horizon = 1.0
//! steps = 252
//! # path = "caps.csv"             # csv source, relative to the config file
//! start_date = "2000-01-03"       # first date of exported CSVs
//!
//! [portfolio]
//! rule = "entropy"                # generator string or buyhold:h=...
//!
//! [experiment]
//! refinements = [252, 504, 1008]
//! seeds = [1, 2, 3]
//! format = "both"                 # json | csv | both
//! output = "out"
//!
//! [leapfrog]
//! caps = [500.0, 400.0, 300.0, 200.0, 100.0]
//! m = 3
//! ```

use std::path::{Path, PathBuf};
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::decomposition::WeightRule;
use crate::error::{Error, Result};
use crate::market::GbmSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Json,
    Csv,
    Both,
}

impl OutputFormat {
    pub fn json(self) -> bool {
        matches!(self, OutputFormat::Json | OutputFormat::Both)
    }

    pub fn csv(self) -> bool {
        matches!(self, OutputFormat::Csv | OutputFormat::Both)
    }
}

impl FromStr for OutputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "json" => Ok(OutputFormat::Json),
            "csv" => Ok(OutputFormat::Csv),
            "both" => Ok(OutputFormat::Both),
            other => Err(Error::Config(format!("format must be json, csv or both, got `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MarketSource {
    Gbm,
    Csv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarketSection {
    pub source: MarketSource,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_caps: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variance: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub covariance: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub drift: Option<Vec<f64>>,
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    #[serde(default = "default_steps")]
    pub steps: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    #[serde(default = "default_start_date")]
    pub start_date: NaiveDate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PortfolioSection {
    pub rule: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    #[serde(default = "default_refinements")]
    pub refinements: Vec<usize>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_format")]
    pub format: OutputFormat,
    #[serde(default = "default_output")]
    pub output: PathBuf,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        Self {
            refinements: default_refinements(),
            seeds: default_seeds(),
            format: default_format(),
            output: default_output(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LeapfrogSection {
    /// Capitalizations before the swap.
    pub caps: Vec<f64>,
    /// Size of the top-m cap-weighted index.
    pub m: usize,
    /// Rank whose stock swaps with the next one down; defaults to `m`
    /// (or `n − 1` when the index is the whole market).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub swap_rank: Option<usize>,
    #[serde(default = "default_swap")]
    pub swap: bool,
    /// Grid spacing in years.
    #[serde(default = "default_dt")]
    pub dt: f64,
}

/// A whole experiment, as read from a config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub market: Option<MarketSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub portfolio: Option<PortfolioSection>,
    #[serde(default)]
    pub experiment: ExperimentSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub leapfrog: Option<LeapfrogSection>,
    /// Directory relative paths are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn default_horizon() -> f64 {
    1.0
}
fn default_steps() -> usize {
    252
}
fn default_start_date() -> NaiveDate {
    NaiveDate::from_ymd_opt(2000, 1, 3).expect("valid date")
}
fn default_refinements() -> Vec<usize> {
    vec![252, 504, 1008]
}
fn default_seeds() -> Vec<u64> {
    vec![1]
}
fn default_format() -> OutputFormat {
    OutputFormat::Both
}
fn default_output() -> PathBuf {
    PathBuf::from("out")
}
fn default_swap() -> bool {
    true
}
fn default_dt() -> f64 {
    1.0 / 252.0
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str, base_dir: impl Into<PathBuf>) -> Result<Self> {
        let mut cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.base_dir = base_dir.into();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_toml_str(&text, base)
    }

    /// The resolved config as TOML, written next to every run's outputs.
    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let exp = &self.experiment;
        if exp.seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        if exp.refinements.is_empty() || exp.refinements.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config("refinements must be non-empty and strictly increasing".into()));
        }
        if exp.refinements[0] == 0 {
            return Err(Error::Config("refinements must be positive".into()));
        }
        if let Some(p) = &self.portfolio {
            p.rule.parse::<WeightRule>()?;
        }
        if let Some(m) = &self.market {
            if m.source == MarketSource::Gbm {
                self.gbm_spec(0)?.validate()?;
            } else if m.path.is_none() {
                return Err(Error::Config("csv market needs `path`".into()));
            }
        }
        Ok(())
    }

    pub fn market(&self) -> Result<&MarketSection> {
        self.market
            .as_ref()
            .ok_or_else(|| Error::Config("missing [market] section".into()))
    }

    pub fn rule(&self) -> Result<WeightRule> {
        self.portfolio
            .as_ref()
            .ok_or_else(|| Error::Config("missing [portfolio] section".into()))?
            .rule
            .parse()
    }

    pub fn leapfrog(&self) -> Result<&LeapfrogSection> {
        self.leapfrog
            .as_ref()
            .ok_or_else(|| Error::Config("missing [leapfrog] section".into()))
    }

    pub fn output_dir(&self) -> PathBuf {
        self.base_dir.join(&self.experiment.output)
    }

    pub fn csv_path(&self) -> Result<PathBuf> {
        let m = self.market()?;
        m.path
            .as_ref()
            .map(|p| self.base_dir.join(p))
            .ok_or_else(|| Error::Config("csv market needs `path`".into()))
    }

    /// GBM spec for one seed at the configured step count.
    pub fn gbm_spec(&self, seed: u64) -> Result<GbmSpec> {
        let m = self.market()?;
        if m.source != MarketSource::Gbm {
            return Err(Error::Config("market source is not gbm".into()));
        }
        let caps = m
            .initial_caps
            .clone()
            .ok_or_else(|| Error::Config("gbm market needs `initial_caps`".into()))?;
        let n = caps.len();
        let covariance = match (&m.covariance, m.variance) {
            (Some(c), _) => c.clone(),
            (None, Some(v)) => (0..n)
                .map(|i| (0..n).map(|j| if i == j { v } else { 0.0 }).collect())
                .collect(),
            (None, None) => return Err(Error::Config("gbm market needs `variance` or `covariance`".into())),
        };
        Ok(GbmSpec {
            drift: m.drift.clone().unwrap_or_else(|| vec![0.0; n]),
            covariance,
            initial_caps: caps,
            horizon: m.horizon,
            steps: m.steps,
            seed,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const DEMO: &str = r#"
        [market]
        source = "gbm"
        initial_caps = [1.0, 2.0, 3.0]
        variance = 0.04
        steps = 10

        [portfolio]
        rule = "diversity:p=0.5"

        [experiment]
        seeds = [3, 4]
        format = "json"
    "#;

    #[test]
    fn parses_demo_config() {
        let cfg = ExperimentConfig::from_toml_str(DEMO, "/tmp/x").unwrap();
        let spec = cfg.gbm_spec(3).unwrap();
        assert_eq!(spec.steps, 10);
        assert_eq!(spec.covariance[1], vec![0.0, 0.04, 0.0]);
        assert_eq!(cfg.experiment.refinements, vec![252, 504, 1008]);
        assert_eq!(cfg.experiment.format, OutputFormat::Json);
        assert_eq!(cfg.output_dir(), PathBuf::from("/tmp/x/out"));
    }

    #[test]
    fn resolved_config_round_trips() {
        let cfg = ExperimentConfig::from_toml_str(DEMO, "").unwrap();
        let back = ExperimentConfig::from_toml_str(&cfg.to_toml_string(), "").unwrap();
        assert_eq!(cfg, back);
    }

    #[test]
    fn rejects_bad_configs() {
        let cases = [
            DEMO.replace("seeds = [3, 4]", "seeds = []"),
            DEMO.replace("format = \"json\"", "refinements = [504, 252]"),
            DEMO.replace("diversity:p=0.5", "rank:k=3"),
            DEMO.replace("variance = 0.04", "covariance = [[1.0, 2.0, 0.0], [2.0, 1.0, 0.0], [0.0, 0.0, 1.0]]"),
            DEMO.replace("steps = 10", "stepz = 10"),
            DEMO.replace("source = \"gbm\"", "source = \"csv\""),
        ];
        for case in cases {
            assert!(ExperimentConfig::from_toml_str(&case, "").is_err(), "accepted:\n{case}");
        }
    }
}
