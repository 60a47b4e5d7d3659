//! Files: encounter histories, model configurations and reports.

mod config;
mod history;
pub mod report;

pub use config::{DwellEntry, FamilyValues, ModelConfig, OptimizerConfig, PsiValues, StructureConfig, ValuesConfig};
pub use history::{parse_histories, parse_histories_str, parse_token, write_histories, ParseOptions};
