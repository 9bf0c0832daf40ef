use std::path::{Path, PathBuf};

use rayon::prelude::*;

use super::config::PipelineConfig;
use super::extract::extract_campaign;
use super::measure::{measure_sample, save_campaign, Campaign};
use super::plots::write_plots;
use super::report::{summarize, write_tables, StudyReport};
use crate::error::{Error, Result};
use crate::extraction::{save_report, ExtractionReport};
use crate::model::{save_sample, synthesize_sample};
use crate::Sample;

pub const SAMPLES_DIR: &str = "samples";
pub const CAMPAIGNS_DIR: &str = "campaigns";
pub const EXTRACTION_DIR: &str = "extraction";
pub const STATS_DIR: &str = "stats";

/// Output locations below a study directory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Layout { root: root.into() }
    }

    pub fn sample(&self, label: &str) -> PathBuf {
        self.root.join(SAMPLES_DIR).join(format!("{label}.json"))
    }

    pub fn campaign(&self, label: &str) -> PathBuf {
        self.root.join(CAMPAIGNS_DIR).join(label)
    }

    pub fn extraction(&self, label: &str) -> PathBuf {
        self.root.join(EXTRACTION_DIR).join(format!("{label}.json"))
    }

    pub fn stats(&self) -> PathBuf {
        self.root.join(STATS_DIR)
    }
}

fn ensure_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(p) => std::fs::create_dir_all(p).map_err(|e| Error::io(p, e)),
        None => Ok(()),
    }
}

/// Synthesizes every configured sample.
pub fn synth_samples(cfg: &PipelineConfig) -> Result<Vec<Sample>> {
    cfg.samples
        .par_iter()
        .enumerate()
        .map(|(i, s)| synthesize_sample(&s.to_spec()?, cfg.sample_seed(i)))
        .collect()
}

pub fn write_sample(layout: &Layout, sample: &Sample) -> Result<()> {
    let path = layout.sample(&sample.label);
    ensure_parent(&path)?;
    save_sample(sample, &path)
}

/// Measures one sample with the seed the configuration assigns to its label.
pub fn measure_configured(cfg: &PipelineConfig, sample: &Sample) -> Result<Campaign> {
    let index = cfg
        .samples
        .iter()
        .position(|s| s.label == sample.label)
        .ok_or_else(|| Error::InvalidInput(format!("sample {:?} is not in the configuration", sample.label)))?;
    measure_sample(
        sample,
        cfg.protocol,
        &cfg.measurement,
        &cfg.extraction,
        &cfg.transport,
        cfg.measure_seed(index),
    )
}

pub fn write_extraction(layout: &Layout, report: &ExtractionReport) -> Result<()> {
    let path = layout.extraction(&report.sample_label);
    ensure_parent(&path)?;
    save_report(report, &path)
}

/// Writes the tables, and the SVG plots if asked for.
pub fn write_stats(dir: &Path, study: &StudyReport, plots: bool) -> Result<()> {
    write_tables(study, dir)?;
    if plots {
        write_plots(study, dir)?;
    }
    Ok(())
}

/// Runs the whole study and writes every intermediate artifact below `layout`.
pub fn run_pipeline(cfg: &PipelineConfig, layout: &Layout, plots: bool) -> Result<StudyReport> {
    cfg.validate()?;
    let reports = cfg
        .samples
        .par_iter()
        .enumerate()
        .map(|(i, s)| {
            let sample = synthesize_sample(&s.to_spec()?, cfg.sample_seed(i))?;
            write_sample(layout, &sample)?;
            let campaign = measure_configured(cfg, &sample)?;
            save_campaign(&campaign, &layout.campaign(&sample.label))?;
            let report = extract_campaign(&campaign, &cfg.extraction)?;
            write_extraction(layout, &report)?;
            Ok(report)
        })
        .collect::<Result<Vec<_>>>()?;
    let study = summarize(&reports, &cfg.statistics)?;
    write_stats(&layout.stats(), &study, plots)?;
    Ok(study)
}
