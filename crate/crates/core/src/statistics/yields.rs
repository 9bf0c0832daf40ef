use serde::{Deserialize, Serialize};

use crate::extraction::{BiasMode, ExtractionReport};

/// Outcome of one dot in a measurement campaign.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DotOutcome {
    pub measured: bool,
    pub mode: BiasMode,
    pub diamond_ok: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct YieldReport {
    pub measured: usize,
    pub shared_ok: usize,
    pub individual_ok: usize,
    pub row_shared_yield: f64,
    pub total_yield: f64,
}

/// Counts diamonds extracted under the row-shared bias and under individual
/// bias. Unmeasured dots do not count; with nothing measured both yields are 0.
pub fn yield_metrics(outcomes: &[DotOutcome]) -> YieldReport {
    let measured = outcomes.iter().filter(|o| o.measured).count();
    let ok = |mode| {
        outcomes
            .iter()
            .filter(|o| o.measured && o.diamond_ok && o.mode == mode)
            .count()
    };
    let shared_ok = ok(BiasMode::Shared);
    let individual_ok = ok(BiasMode::Individual);
    let frac = |k: usize| if measured == 0 { 0.0 } else { k as f64 / measured as f64 };
    YieldReport {
        measured,
        shared_ok,
        individual_ok,
        row_shared_yield: frac(shared_ok),
        total_yield: frac(shared_ok + individual_ok),
    }
}

pub fn outcomes(report: &ExtractionReport) -> Vec<DotOutcome> {
    report
        .dots
        .iter()
        .map(|d| DotOutcome {
            measured: d.measured,
            mode: d.bias_mode,
            diamond_ok: d.diamond.is_some(),
        })
        .collect()
}
