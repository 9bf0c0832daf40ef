//! TOML sample configuration.
//!
//! ```toml
//! label = "A"
//! seed = 17
//! dead_columns = []
//!
//! [geometry]
//! n = 7
//! dot_width = 50.0
//! dot_length = 70.0
//!
//! [stack]
//! t1 = 15.0
//! delta2 = 4.5
//! delta3 = 0.8
//!
//! [disorder]
//! outlier_prob = 0.1
//! plunger = { strain_coeff_a = 623.1, pelgrom_coeff_b = 2.429, sigma0 = 0.0 }
//!
//! [population]
//! alpha_mean = 0.165
//! ```
//!
//! Every table except `stack.t1` is optional.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::disorder::{DisorderConfig, DotPopulation};
use super::physics::{ArrayGeometry, OxideStack};
use super::sample::SampleSpec;
use crate::error::{Error, Result};

fn default_delta2() -> f64 {
    4.5
}

fn default_delta3() -> f64 {
    0.8
}

/// Oxide stack as written in a config file.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StackConfig {
    pub t1: f64,
    #[serde(default = "default_delta2")]
    pub delta2: f64,
    #[serde(default = "default_delta3")]
    pub delta3: f64,
}

/// One sample of a configuration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleConfig {
    pub label: String,
    /// Explicit seed; when absent it is derived from a master seed.
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub geometry: ArrayGeometry,
    pub stack: StackConfig,
    #[serde(default)]
    pub disorder: DisorderConfig,
    #[serde(default)]
    pub population: DotPopulation,
    #[serde(default)]
    pub dead_columns: Vec<usize>,
}

impl SampleConfig {
    pub fn to_spec(&self) -> Result<SampleSpec<f64>> {
        let s = &self.stack;
        let spec = SampleSpec {
            label: self.label.clone(),
            geometry: self.geometry,
            stack: OxideStack::new(s.t1, s.delta2, s.delta3)?,
            disorder: self.disorder.clone(),
            population: self.population,
            dead_columns: self.dead_columns.clone(),
        };
        spec.validate()?;
        Ok(spec)
    }
}

/// 1-based line of a byte offset.
fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// Parses TOML into `T`, reporting errors with the offending line.
pub fn parse_toml<T: DeserializeOwned>(text: &str, path: &Path) -> Result<T> {
    toml::from_str(text).map_err(|e| Error::Parse {
        path: path.into(),
        line: e.span().map_or(1, |r| line_of(text, r.start)),
        msg: e.message().trim().to_string(),
    })
}

pub fn read_toml<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_toml(&text, path)
}

pub fn parse_sample_config(text: &str, path: &Path) -> Result<SampleConfig> {
    let cfg: SampleConfig = parse_toml(text, path)?;
    cfg.to_spec()?;
    Ok(cfg)
}
