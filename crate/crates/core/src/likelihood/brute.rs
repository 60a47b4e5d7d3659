//! Likelihood by explicit summation over expanded-state paths.
//!
//! Slow by construction; it exists to check the forward recursion.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::likelihood::EncounterHistory;
use crate::state_space::{AggregationPlan, ExpandedModel, InitOptions, ModelParams};

/// Largest `a*^(T - t0)` the enumerators accept.
pub const MAX_PATHS: f64 = 1e7;

struct Tables {
    init: Vec<f64>,
    /// `steps[i] = (Gamma, q)` for the transition into occasion `t0 + i + 1`.
    steps: Vec<(DMatrix<f64>, Vec<f64>)>,
}

fn tables(model: &ExpandedModel, history: &EncounterHistory) -> Result<Tables> {
    let t0 = history.first;
    let x = &history.symbols;
    let len = (x.len() - 1 - t0) as f64;
    let paths = (model.plan.total as f64).powf(len);
    if paths > MAX_PATHS {
        return Err(Error::TooLarge(format!(
            "{} expanded states over {} steps gives {paths:.3e} paths",
            model.plan.total, len
        )));
    }
    let init = model.initial_distribution(x[t0], t0, InitOptions::default())?;
    let steps = (t0..x.len() - 1)
        .map(|t| (model.build_tpm(t, x[t], x[t + 1]), model.obs_diagonal(t + 1, x[t + 1])))
        .collect();
    Ok(Tables { init, steps })
}

fn finish(total: f64) -> f64 {
    if total > 0.0 {
        total.ln()
    } else {
        f64::NEG_INFINITY
    }
}

/// Depth-first sum over every path with nonzero prefix probability.
pub fn brute_force_loglik(
    history: &EncounterHistory,
    params: &ModelParams,
    plan: &AggregationPlan,
) -> Result<f64> {
    let model = ExpandedModel::new(params, plan)?;
    let tb = tables(&model, history)?;

    fn descend(tb: &Tables, depth: usize, state: usize, weight: f64) -> f64 {
        if depth == tb.steps.len() {
            return weight;
        }
        let (gamma, q) = &tb.steps[depth];
        let mut acc = 0.0;
        for next in 0..gamma.ncols() {
            let w = weight * gamma[(state, next)] * q[next];
            if w != 0.0 {
                acc += descend(tb, depth + 1, next, w);
            }
        }
        acc
    }

    let total: f64 = tb
        .init
        .iter()
        .enumerate()
        .filter(|(_, w)| **w != 0.0)
        .map(|(s, w)| descend(&tb, 0, s, *w))
        .sum();
    Ok(finish(total))
}

/// Odometer enumeration of all `a*^(steps+1)` paths, last occasion varying
/// fastest; no pruning.
pub fn brute_force_loglik_odometer(
    history: &EncounterHistory,
    params: &ModelParams,
    plan: &AggregationPlan,
) -> Result<f64> {
    let model = ExpandedModel::new(params, plan)?;
    let tb = tables(&model, history)?;
    let n = plan.total;
    let len = tb.steps.len();
    let mut digits = vec![0usize; len + 1];
    let mut total = 0.0;
    loop {
        let mut w = tb.init[digits[0]];
        for (i, (gamma, q)) in tb.steps.iter().enumerate() {
            if w == 0.0 {
                break;
            }
            w *= gamma[(digits[i], digits[i + 1])] * q[digits[i + 1]];
        }
        total += w;
        let mut pos = len;
        loop {
            digits[pos] += 1;
            if digits[pos] < n {
                break;
            }
            digits[pos] = 0;
            if pos == 0 {
                return Ok(finish(total));
            }
            pos -= 1;
        }
    }
}
