//! Per-dot analysis of measurement records.

mod barrier_map;
mod coulomb;
mod diamond;
mod report;
mod spurious;
mod threshold;

pub use barrier_map::{
    analyze_barrier_map, select_common_bias, BarrierMapAnalysis, BarrierMapParams, BiasCandidate, CandidateSet,
    CommonBiasDecision,
};
pub use coulomb::{coulomb_peaks, first_spacing, PeakSpacing};
pub use diamond::{fit_diamond, fit_diamond_grid, DiamondFit, DiamondParams};
pub use report::{
    load_report, report_from_str, report_to_string, save_report, BiasMode, DotExtraction, ExtractionReport,
    RowDecision, EXTRACTION_FORMAT, EXTRACTION_VERSION,
};
pub use spurious::{detect_spurious, SpuriousDetection, SpuriousParams};
pub use threshold::{fit_threshold, SigmoidFit};
