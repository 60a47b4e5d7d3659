//! Expanded state space: symbols, parameters, aggregate layout and the
//! masked transition and observation matrices.

mod expanded;
mod params;
mod plan;
mod symbols;

pub use expanded::{ExpandedModel, InitOptions};
pub use params::{InitMode, ModelParams};
pub use plan::{build_aggregation, AggregationPlan};
pub use symbols::{ObservationSymbol, TrueState};
