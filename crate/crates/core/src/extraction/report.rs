use std::path::Path;

use serde::{Deserialize, Serialize};

use super::barrier_map::CommonBiasDecision;
use super::diamond::DiamondFit;
use super::spurious::SpuriousDetection;
use crate::error::{Error, Result};
use crate::model::OxideStack;

pub const EXTRACTION_FORMAT: &str = "qdarray-extraction";
pub const EXTRACTION_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BiasMode {
    Shared,
    Individual,
    Failed,
}

/// Everything extracted for one dot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DotExtraction {
    pub row: usize,
    pub col: usize,
    /// False for dots that were not measured (dead channels).
    pub measured: bool,
    pub vt_plunger: Option<f64>,
    pub vt_bs: Option<f64>,
    pub vt_bd: Option<f64>,
    pub bias_mode: BiasMode,
    pub bias_point: Option<(f64, f64)>,
    pub diamond: Option<DiamondFit>,
    pub spurious: Vec<SpuriousDetection>,
    /// E_C / k_B T from the Coulomb trace (peak spacing over peak width).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub thermal_ratio: Option<f64>,
    /// Reasons for missing values.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl DotExtraction {
    pub fn unmeasured(row: usize, col: usize) -> Self {
        DotExtraction {
            row,
            col,
            measured: false,
            vt_plunger: None,
            vt_bs: None,
            vt_bd: None,
            bias_mode: BiasMode::Failed,
            bias_point: None,
            diamond: None,
            spurious: Vec::new(),
            thermal_ratio: None,
            notes: Vec::new(),
        }
    }

    pub fn c_p(&self) -> Option<f64> {
        self.diamond.map(|d| d.c_p)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowDecision {
    pub row: usize,
    pub decision: CommonBiasDecision,
}

/// Extraction results of one sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractionReport {
    pub format: String,
    pub version: u32,
    pub sample_label: String,
    pub n: usize,
    pub stack: OxideStack<f64>,
    pub rows: Vec<RowDecision>,
    /// Row-major.
    pub dots: Vec<DotExtraction>,
}

impl ExtractionReport {
    pub fn new(sample_label: impl Into<String>, n: usize, stack: OxideStack<f64>) -> Self {
        ExtractionReport {
            format: EXTRACTION_FORMAT.into(),
            version: EXTRACTION_VERSION,
            sample_label: sample_label.into(),
            n,
            stack,
            rows: Vec::new(),
            dots: Vec::new(),
        }
    }

    pub fn dot(&self, row: usize, col: usize) -> Option<&DotExtraction> {
        self.dots.iter().find(|d| d.row == row && d.col == col)
    }

    /// Dots not on the array edge, i.e. rows and columns `2..n`.
    pub fn central(&self) -> impl Iterator<Item = &DotExtraction> {
        let n = self.n;
        self.dots
            .iter()
            .filter(move |d| d.row > 1 && d.row < n && d.col > 1 && d.col < n)
    }
}

pub fn report_to_string(report: &ExtractionReport) -> String {
    let mut s = serde_json::to_string_pretty(report).expect("report serializes");
    s.push('\n');
    s
}

pub fn report_from_str(text: &str, path: &Path) -> Result<ExtractionReport> {
    #[derive(Deserialize)]
    struct Header {
        format: String,
        version: u32,
    }
    let h: Header = serde_json::from_str(text).map_err(|e| Error::json(path, e))?;
    if h.format != EXTRACTION_FORMAT {
        return Err(Error::InvalidInput(format!(
            "{}: not an extraction report (format {:?})",
            path.display(),
            h.format
        )));
    }
    if h.version != EXTRACTION_VERSION {
        return Err(Error::UnsupportedVersion {
            what: "extraction report",
            found: h.version,
            supported: EXTRACTION_VERSION,
        });
    }
    serde_json::from_str(text).map_err(|e| Error::json(path, e))
}

pub fn save_report(report: &ExtractionReport, path: &Path) -> Result<()> {
    std::fs::write(path, report_to_string(report)).map_err(|e| Error::io(path, e))
}

pub fn load_report(path: &Path) -> Result<ExtractionReport> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    report_from_str(&text, path)
}
