use serde::{Deserialize, Serialize};

use super::probit::{gaussian_sigma_filtered, SigmaMethod};
use crate::error::{Error, Result};
use crate::model::OxideStack;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GateFamily {
    Plunger,
    Barrier,
}

impl GateFamily {
    /// Oxide thickness under this gate family (t2 for plungers, t3 for barriers).
    pub fn thickness(self, stack: &OxideStack<f64>) -> f64 {
        match self {
            GateFamily::Plunger => stack.t2(),
            GateFamily::Barrier => stack.t3(),
        }
    }
}

/// Thresholds measured on one sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdSet {
    pub label: String,
    pub stack: OxideStack<f64>,
    pub plunger: Vec<f64>,
    pub barrier: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariabilityPoint {
    pub family: GateFamily,
    /// nm
    pub t_gate: f64,
    /// Sample standard deviation (V).
    pub sigma: f64,
    /// Width of the Gaussian core (V).
    pub sigma_tilde: f64,
    pub count: usize,
    pub samples: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct VariabilityTable {
    pub points: Vec<VariabilityPoint>,
}

impl VariabilityTable {
    pub fn family(&self, family: GateFamily) -> impl Iterator<Item = &VariabilityPoint> {
        self.points.iter().filter(move |p| p.family == family)
    }

    /// Point with the smallest σ̃ of a family.
    pub fn minimum(&self, family: GateFamily) -> Option<&VariabilityPoint> {
        self.family(family)
            .min_by(|a, b| a.sigma_tilde.total_cmp(&b.sigma_tilde))
    }
}

/// σ and σ̃ against gate-oxide thickness. Samples with the same thickness are
/// pooled; plungers are keyed by t2 and barriers by t3.
pub fn variability_curve(sets: &[ThresholdSet], method: SigmaMethod) -> Result<VariabilityTable> {
    if sets.len() < 2 {
        return Err(Error::InsufficientData {
            needed: 2,
            got: sets.len(),
        });
    }
    let mut points = Vec::new();
    for family in [GateFamily::Plunger, GateFamily::Barrier] {
        let mut groups: Vec<(f64, Vec<f64>, Vec<String>)> = Vec::new();
        for s in sets {
            let values = match family {
                GateFamily::Plunger => &s.plunger,
                GateFamily::Barrier => &s.barrier,
            };
            if values.is_empty() {
                continue;
            }
            let t = family.thickness(&s.stack);
            match groups.iter_mut().find(|g| (g.0 - t).abs() <= 1e-9 * t.abs()) {
                Some(g) => {
                    g.1.extend_from_slice(values);
                    g.2.push(s.label.clone());
                }
                None => groups.push((t, values.clone(), vec![s.label.clone()])),
            }
        }
        groups.sort_by(|a, b| a.0.total_cmp(&b.0));
        for (t, values, samples) in groups {
            let r = gaussian_sigma_filtered(&values, method)?;
            points.push(VariabilityPoint {
                family,
                t_gate: t,
                sigma: r.sigma_raw.unwrap_or(0.0),
                sigma_tilde: r.sigma_filtered.unwrap_or(0.0),
                count: values.len(),
                samples,
            });
        }
    }
    Ok(VariabilityTable { points })
}
