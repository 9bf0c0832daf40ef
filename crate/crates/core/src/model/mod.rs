//! Array geometry, oxide stack, disorder laws and sample synthesis.

mod config;
mod disorder;
mod physics;
mod sample;

pub use config::{parse_sample_config, parse_toml, read_toml, SampleConfig, StackConfig};
pub use disorder::{sigma_vt, DisorderConfig, DotPopulation, VariabilityLaw};
pub use physics::{effective_thicknesses, plunger_capacitance, ArrayGeometry, OxideStack, PhysicalConstants};
pub use sample::{
    load_sample, sample_from_str, sample_to_string, save_sample, synthesize_sample, BarrierSide, DotGroundTruth,
    SampleInstance, SampleSpec, SpuriousDotSpec, SAMPLE_FORMAT, SAMPLE_VERSION,
};
