//! End-to-end study: synthesize, measure, extract, summarize.

mod config;
mod extract;
mod measure;
mod plots;
mod report;
mod run;

pub use config::{
    load_pipeline_config, parse_pipeline_config, ExtractConfig, MeasureConfig, PipelineConfig, Protocol, StatsConfig,
};
pub use extract::extract_campaign;
pub use measure::{
    load_campaign, manifest_from_str, manifest_to_string, measure_sample, save_campaign, Campaign, Manifest,
    ManifestEntry, RowSummary, SkippedDot, MANIFEST_FILE, MANIFEST_FORMAT, MANIFEST_VERSION,
};
pub use plots::{plot_capacitance, plot_cdf, plot_variability, plot_yields, write_plots};
pub use report::{
    gated_capacitances, study_to_string, summarize, threshold_set, write_tables, CapPoint, CdfSeries, SampleStats,
    SigmaSummary, StudyReport, STUDY_FORMAT, STUDY_VERSION,
};
pub use run::{
    measure_configured, run_pipeline, synth_samples, write_extraction, write_sample, write_stats, Layout,
    CAMPAIGNS_DIR, EXTRACTION_DIR, SAMPLES_DIR, STATS_DIR,
};
