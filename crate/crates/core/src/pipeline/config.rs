//! Campaign configuration.
//!
//! ```toml
//! seed = 2024
//! protocol = "full"
//!
//! [measurement]
//! map_points = 201
//!
//! [statistics]
//! sigma_method = "slope"
//!
//! [[samples]]
//! label = "S15a"
//! stack = { t1 = 15.0 }
//! ```
//!
//! Everything except `seed` and `samples` has defaults.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::extraction::{BarrierMapParams, DiamondParams, SpuriousParams};
use crate::model::{parse_toml, SampleConfig};
use crate::rng::{derive_seed, tag};
use crate::statistics::SigmaMethod;
use crate::transport::TransportConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Protocol {
    /// Turn-on sweeps, barrier maps, Coulomb traces and diamonds.
    #[default]
    Full,
    /// Only the three turn-on sweeps per row; enough for threshold statistics.
    TurnOn,
}

/// Sweep ranges and resolutions of the measurement protocol.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MeasureConfig {
    /// Electron temperature of every sweep (K).
    pub temperature: f64,
    /// Source-drain bias of gate sweeps, and noise reference of bias sweeps (V).
    pub v_sd: f64,
    /// Bias on gates that are held open during turn-on sweeps (V).
    pub open_bias: f64,
    pub plunger_range: (f64, f64),
    pub barrier_range: (f64, f64),
    pub turn_on_points: usize,
    pub map_points: usize,
    /// Half-span of the barrier map around the row's median barrier threshold (V).
    pub map_half_span: f64,
    /// Plunger voltage above the row's highest plunger threshold during the map (V).
    pub map_plunger_margin: f64,
    /// Plunger step of Coulomb traces (V).
    pub coulomb_step: f64,
    /// Span of Coulomb traces above the row's highest plunger threshold (V).
    pub coulomb_span: f64,
    pub coulomb_max_points: usize,
    pub diamond_points: usize,
    /// Largest bias half-range of diamond scans (V).
    pub diamond_vsd: f64,
    /// Smallest bias half-range of diamond scans (V).
    pub diamond_vsd_min: f64,
    /// Bias half-range in units of the tip height estimated from the Coulomb trace.
    pub diamond_reach: f64,
}

impl Default for MeasureConfig {
    fn default() -> Self {
        MeasureConfig {
            temperature: 1.4,
            v_sd: 1e-4,
            open_bias: 2.0,
            plunger_range: (-1.0, 2.5),
            barrier_range: (-1.0, 2.8),
            turn_on_points: 201,
            map_points: 201,
            map_half_span: 0.35,
            map_plunger_margin: 0.2,
            coulomb_step: 4e-4,
            coulomb_span: 0.3,
            coulomb_max_points: 6001,
            diamond_points: 201,
            diamond_vsd: 8e-3,
            diamond_vsd_min: 1e-3,
            diamond_reach: 2.0,
        }
    }
}

impl MeasureConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.temperature > 0.0
            && self.v_sd != 0.0
            && self.plunger_range.1 > self.plunger_range.0
            && self.barrier_range.1 > self.barrier_range.0
            && self.turn_on_points >= 10
            && self.map_points >= 8
            && self.map_half_span > 0.0
            && self.coulomb_step > 0.0
            && self.coulomb_span > 0.0
            && self.coulomb_max_points >= 10
            && self.diamond_points >= 11
            && self.diamond_vsd_min > 0.0
            && self.diamond_vsd >= self.diamond_vsd_min
            && self.diamond_reach > 1.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig("measurement settings out of range".into()))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExtractConfig {
    pub barrier_map: BarrierMapParams,
    pub diamond: DiamondParams,
    pub spurious: SpuriousParams,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StatsConfig {
    pub sigma_method: SigmaMethod,
    /// Drop the outer rows and columns before variability statistics.
    pub central_only: bool,
    /// Dots whose Coulomb trace gives a smaller E_C / k_B T are left out of the
    /// capacitance statistics; their diamond edges are thermally merged.
    pub min_thermal_ratio: f64,
}

impl Default for StatsConfig {
    fn default() -> Self {
        StatsConfig {
            sigma_method: SigmaMethod::Slope,
            central_only: true,
            min_thermal_ratio: 16.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    /// Master seed. Sample and record seeds are derived from it.
    pub seed: u64,
    #[serde(default)]
    pub protocol: Protocol,
    /// Output directory, relative to the working directory.
    #[serde(default)]
    pub out: Option<String>,
    #[serde(default)]
    pub transport: TransportConfig,
    #[serde(default)]
    pub measurement: MeasureConfig,
    #[serde(default)]
    pub extraction: ExtractConfig,
    #[serde(default)]
    pub statistics: StatsConfig,
    pub samples: Vec<SampleConfig>,
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.samples.is_empty() {
            return Err(Error::InvalidConfig("no samples configured".into()));
        }
        let mut labels: Vec<&str> = self.samples.iter().map(|s| s.label.as_str()).collect();
        labels.sort_unstable();
        if let Some(w) = labels.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::InvalidConfig(format!("duplicate sample label {:?}", w[0])));
        }
        if let Some(s) = self
            .samples
            .iter()
            .find(|s| s.label.is_empty() || s.label.contains(['/', '\\']))
        {
            return Err(Error::InvalidConfig(format!(
                "sample label {:?} is not usable as a file name",
                s.label
            )));
        }
        self.measurement.validate()?;
        for s in &self.samples {
            s.to_spec()?.validate()?;
        }
        Ok(())
    }

    /// Synthesis seed of sample `index`: its own seed, else derived from the master seed.
    pub fn sample_seed(&self, index: usize) -> u64 {
        self.samples[index]
            .seed
            .unwrap_or_else(|| derive_seed(self.seed, tag::SAMPLE, index as u64))
    }

    /// Measurement seed of sample `index`.
    pub fn measure_seed(&self, index: usize) -> u64 {
        derive_seed(self.sample_seed(index), tag::RECORD, 0)
    }
}

pub fn parse_pipeline_config(text: &str, path: &Path) -> Result<PipelineConfig> {
    let cfg: PipelineConfig = parse_toml(text, path)?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_pipeline_config(path: &Path) -> Result<PipelineConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_pipeline_config(&text, path)
}
