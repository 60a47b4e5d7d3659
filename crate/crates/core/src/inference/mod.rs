//! Maximum-likelihood fitting, uncertainty and model comparison.

mod derived;
mod fit;
mod map;
mod optimize;
mod select;
mod start;

pub use derived::{dwell_pmf_ci, stationary_summary, DwellPmfRow, StationarySummary};
pub use fit::{
    covariance_from_hessian, fit, hessian, observed_information, AggregationOptions, Covariance, FitOptions,
    FitResult, ParameterEstimate, StartDiagnostics,
};
pub use map::{expit, logit, softmax_with_reference, NamedQuantity, ParameterMap, Quantity, Structure, PROB_FLOOR};
pub use optimize::{minimize, Method, OptimOptions, OptimResult};
pub use select::{model_select, Candidate, SelectionRow, SelectionTable};
pub use start::{moment_start, StartStrategy};
