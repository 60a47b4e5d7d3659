//! Quantities derived from a fit: dwell-time intervals and stationary
//! occupancy.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::inference::fit::{numeric_gradient, quadratic_form, FitResult};
use crate::inference::map::{expit, logit, ParameterMap};
use crate::state_space::ExpandedModel;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DwellPmfRow {
    pub r: usize,
    pub d: f64,
    pub lower: f64,
    pub upper: f64,
}

/// Pointwise 95% intervals for `d_k(r)`, `r = 1..=r_max`, by the delta method
/// on the logit scale. Without a covariance the intervals have zero width.
pub fn dwell_pmf_ci(fit: &FitResult, map: &ParameterMap, k: usize, r_max: usize) -> Result<Vec<DwellPmfRow>> {
    const Z: f64 = 1.959963984540054;
    if k >= map.n_states() {
        return Err(Error::validation("state", format!("{} out of range", k + 1)));
    }
    let x = &fit.free_vector;
    (1..=r_max)
        .map(|r| {
            let d = fit.mle.dwell[k].pmf(r as u64)?;
            let se = match &fit.covariance {
                Some(cov) if map.dwell_free[k] => {
                    let g = |v: &[f64]| map.unpack(v).ok().and_then(|p| p.dwell[k].pmf(r as u64).ok());
                    numeric_gradient(&g, x)
                        .map(|grad| quadratic_form(&grad, &cov.matrix).max(0.0).sqrt())
                        .unwrap_or(0.0)
                }
                _ => 0.0,
            };
            let (lower, upper) = if se > 0.0 && d > 0.0 && d < 1.0 {
                let s = se / (d * (1.0 - d));
                (expit(logit(d) - Z * s), expit(logit(d) + Z * s))
            } else {
                (d, d)
            };
            Ok(DwellPmfRow {
                r,
                d,
                lower: lower.clamp(0.0, 1.0).min(d),
                upper: upper.clamp(0.0, 1.0).max(d),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StationarySummary {
    /// State-level stationary probabilities of the restricted chain.
    pub states: Vec<f64>,
    /// Expanded-state stationary vector.
    pub expanded: Vec<f64>,
    /// `max |pi G - pi|` over expanded states.
    pub residual: f64,
}

/// Stationary occupancy of the fitted alive-only chain at the first
/// occasion.
pub fn stationary_summary(fit: &FitResult) -> Result<StationarySummary> {
    let model = ExpandedModel::new(&fit.mle, &fit.plan)?;
    let pi = model.stationary_restricted(0)?;
    let g = model.restricted_matrix(0);
    let n = pi.len();
    let residual = (0..n)
        .map(|j| ((0..n).map(|i| pi[i] * g[(i, j)]).sum::<f64>() - pi[j]).abs())
        .fold(0.0, f64::max);
    let states = (0..model.n_states())
        .map(|k| pi[fit.plan.aggregate(k)].iter().sum())
        .collect();
    Ok(StationarySummary {
        states,
        expanded: pi,
        residual,
    })
}
