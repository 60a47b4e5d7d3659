//! AIC comparison of candidate models on one dataset.

use rayon::prelude::*;
use serde::Serialize;

use crate::dwell::DwellSpec;
use crate::error::{Error, Result};
use crate::inference::fit::{fit, FitOptions};
use crate::inference::map::ParameterMap;
use crate::likelihood::Dataset;

#[derive(Debug, Clone)]
pub struct Candidate {
    pub label: String,
    pub map: ParameterMap,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SelectionRow {
    pub label: String,
    /// Fitted dwell laws; the map's base laws when the fit failed.
    pub dwell: Vec<DwellSpec>,
    pub loglik: f64,
    pub aic: f64,
    /// `None` for failed fits.
    pub delta_aic: Option<f64>,
    pub n_params: usize,
    pub converged: bool,
    pub error: Option<String>,
}

impl SelectionRow {
    /// Dwell laws in compact notation, e.g. `sNB(0.581,0.017) geom(0.409)`.
    pub fn dwell_labels(&self) -> String {
        self.dwell.iter().map(DwellSpec::label).collect::<Vec<_>>().join(" ")
    }
}

/// Rows sorted by AIC, failed fits last.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SelectionTable {
    pub rows: Vec<SelectionRow>,
}

impl SelectionTable {
    pub fn best(&self) -> Option<&SelectionRow> {
        self.rows.first().filter(|r| r.error.is_none())
    }
}

pub fn model_select(data: &Dataset, candidates: &[Candidate], opts: &FitOptions) -> Result<SelectionTable> {
    if candidates.is_empty() {
        return Err(Error::Config("no candidate models".into()));
    }
    let mut rows: Vec<SelectionRow> = candidates
        .par_iter()
        .map(|c| match fit(data, &c.map, opts) {
            Ok(f) => SelectionRow {
                label: c.label.clone(),
                dwell: f.mle.dwell.clone(),
                loglik: f.loglik,
                aic: f.aic,
                delta_aic: None,
                n_params: f.n_params,
                converged: f.converged,
                error: None,
            },
            Err(e) => SelectionRow {
                label: c.label.clone(),
                dwell: c.map.base.dwell.clone(),
                loglik: f64::NAN,
                aic: f64::NAN,
                delta_aic: None,
                n_params: c.map.n_free(),
                converged: false,
                error: Some(e.to_string()),
            },
        })
        .collect();
    // stable: ties keep candidate order
    rows.sort_by(|a, b| match (a.error.is_some(), b.error.is_some()) {
        (false, false) => a.aic.total_cmp(&b.aic),
        (x, y) => x.cmp(&y),
    });
    let min = rows
        .iter()
        .filter(|r| r.error.is_none())
        .map(|r| r.aic)
        .fold(f64::INFINITY, f64::min);
    for r in rows.iter_mut().filter(|r| r.error.is_none()) {
        r.delta_aic = Some(r.aic - min);
    }
    Ok(SelectionTable { rows })
}
