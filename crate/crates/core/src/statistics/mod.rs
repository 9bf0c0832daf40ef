//! Array-level statistics over extraction reports.

mod capacitance;
mod etemp;
mod probit;
mod variability;
mod yields;

pub use capacitance::{fit_parallel_plate, CapFitResult};
pub use etemp::{
    electron_temperature, fit_electron_temperature, fit_peak_temperature, ETempConfig, ETempResult, PeakTrace,
    TempPoint,
};
pub use probit::{gaussian_sigma_filtered, probit_transform, ProbitResult, SigmaMethod, TRUNCATED_UNIT_SD};
pub use variability::{variability_curve, GateFamily, ThresholdSet, VariabilityPoint, VariabilityTable};
pub use yields::{outcomes, yield_metrics, DotOutcome, YieldReport};
