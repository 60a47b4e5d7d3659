//! Dwell-time distributions on the positive integers and their hazards.
//!
//! A dwell time `r` is the number of consecutive occasions an individual
//! spends in one covariate state. Every family here is expressed through its
//! p.m.f. `d(r)`, survival `S(r) = 1 - F(r)` and hazard
//! `c(r) = d(r) / S(r - 1)`; the hazard sequence is what drives the
//! state-aggregate expansion.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

/// Survival mass below which the support counts as exhausted and the hazard
/// is pinned to one. Survival values are tail sums with full relative
/// precision, so the ratio `d(r) / S(r-1)` stays accurate down to underflow.
pub const EXHAUSTED_SUPPORT: f64 = f64::MIN_POSITIVE;

/// Default tail tolerance for choosing aggregate sizes.
pub const DEFAULT_EPSILON: f64 = 1e-6;

/// Default hard cap on the number of expanded states per aggregate.
pub const DEFAULT_MAX_AGGREGATE: usize = 200;

/// A dwell-time distribution with support `{1, 2, ...}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", deny_unknown_fields)]
pub enum DwellSpec {
    #[serde(rename = "geom", alias = "geometric")]
    Geometric { theta: f64 },
    #[serde(rename = "poisson", alias = "spois", alias = "shifted_poisson")]
    ShiftedPoisson { mu: f64 },
    #[serde(rename = "snb", alias = "sNB", alias = "shifted_negbin")]
    ShiftedNegBinomial { nu: f64, theta: f64 },
    /// Explicit masses for `r = 1..=probs.len()`; whatever mass is left over
    /// is spread geometrically beyond the table.
    #[serde(rename = "tabulated", alias = "table")]
    Tabulated {
        probs: Vec<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        tail_rate: Option<f64>,
    },
}

fn open_unit(x: f64) -> bool {
    x.is_finite() && x > 0.0 && x < 1.0
}

impl DwellSpec {
    pub fn geometric(theta: f64) -> Self {
        DwellSpec::Geometric { theta }
    }

    pub fn shifted_poisson(mu: f64) -> Self {
        DwellSpec::ShiftedPoisson { mu }
    }

    pub fn shifted_neg_binomial(nu: f64, theta: f64) -> Self {
        DwellSpec::ShiftedNegBinomial { nu, theta }
    }

    pub fn tabulated(probs: Vec<f64>) -> Self {
        DwellSpec::Tabulated {
            probs,
            tail_rate: None,
        }
    }

    pub fn family_name(&self) -> &'static str {
        match self {
            DwellSpec::Geometric { .. } => "geom",
            DwellSpec::ShiftedPoisson { .. } => "poisson",
            DwellSpec::ShiftedNegBinomial { .. } => "snb",
            DwellSpec::Tabulated { .. } => "tabulated",
        }
    }

    pub fn is_geometric(&self) -> bool {
        matches!(self, DwellSpec::Geometric { .. })
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |reason: String| Err(Error::validation("dwell spec", reason));
        match self {
            DwellSpec::Geometric { theta } => {
                if !open_unit(*theta) {
                    return bad(format!("geometric theta {theta} not in (0,1)"));
                }
            }
            DwellSpec::ShiftedPoisson { mu } => {
                if !(mu.is_finite() && *mu > 0.0) {
                    return bad(format!("poisson mu {mu} must be positive"));
                }
            }
            DwellSpec::ShiftedNegBinomial { nu, theta } => {
                if !(nu.is_finite() && *nu > 0.0) {
                    return bad(format!("snb nu {nu} must be positive"));
                }
                if !open_unit(*theta) {
                    return bad(format!("snb theta {theta} not in (0,1)"));
                }
            }
            DwellSpec::Tabulated { probs, tail_rate } => {
                if probs.is_empty() {
                    return bad("tabulated pmf is empty".into());
                }
                if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
                    return bad("tabulated pmf has a negative or non-finite entry".into());
                }
                let total: f64 = probs.iter().sum();
                if total > 1.0 + 1e-12 {
                    return bad(format!("tabulated pmf sums to {total} > 1"));
                }
                if let Some(rate) = tail_rate {
                    if !(rate.is_finite() && *rate > 0.0 && *rate <= 1.0) {
                        return bad(format!("tail rate {rate} not in (0,1]"));
                    }
                } else if self.tail_mass() > 1e-12 && probs[probs.len() - 1] == 0.0 {
                    return bad("tail mass present but last entry is zero; give tail_rate".into());
                }
            }
        }
        Ok(())
    }

    /// Mass carried beyond the explicit table (zero for parametric families).
    fn tail_mass(&self) -> f64 {
        match self {
            DwellSpec::Tabulated { probs, .. } => {
                let rest = 1.0 - probs.iter().sum::<f64>();
                if rest <= 1e-12 {
                    0.0
                } else {
                    rest
                }
            }
            _ => 0.0,
        }
    }

    /// Geometric rate used beyond the table of a tabulated p.m.f.
    fn tail_rate_value(&self) -> f64 {
        match self {
            DwellSpec::Tabulated { probs, tail_rate } => tail_rate.unwrap_or_else(|| {
                let last = probs[probs.len() - 1];
                let tail = self.tail_mass();
                if tail == 0.0 {
                    1.0
                } else {
                    last / (last + tail)
                }
            }),
            _ => 1.0,
        }
    }

    /// Natural log of `d(r)`; `-inf` off the support.
    pub fn ln_pmf(&self, r: u64) -> f64 {
        debug_assert!(r >= 1);
        let rm1 = (r - 1) as f64;
        match *self {
            DwellSpec::Geometric { theta } => theta.ln() + rm1 * (-theta).ln_1p(),
            DwellSpec::ShiftedPoisson { mu } => -mu + rm1 * mu.ln() - ln_gamma(r as f64),
            DwellSpec::ShiftedNegBinomial { nu, theta } => {
                ln_gamma(rm1 + nu) - ln_gamma(r as f64) - ln_gamma(nu)
                    + nu * theta.ln()
                    + rm1 * (-theta).ln_1p()
            }
            DwellSpec::Tabulated { ref probs, .. } => {
                let table = probs.len() as u64;
                if r <= table {
                    probs[(r - 1) as usize].ln()
                } else {
                    let tail = self.tail_mass();
                    if tail == 0.0 {
                        f64::NEG_INFINITY
                    } else {
                        let rate = self.tail_rate_value();
                        tail.ln() + rate.ln() + (r - table - 1) as f64 * (-rate).ln_1p()
                    }
                }
            }
        }
    }

    /// Probability mass `d(r)` for `r >= 1`.
    pub fn pmf(&self, r: u64) -> Result<f64> {
        if r < 1 {
            return Err(Error::Domain("dwell time must be at least 1".into()));
        }
        self.validate()?;
        Ok(self.ln_pmf(r).exp())
    }

    /// Cumulative distribution `F(r) = d(1) + ... + d(r)`, with `F(0) = 0`.
    pub fn cdf(&self, r: u64) -> Result<f64> {
        self.validate()?;
        if r == 0 {
            return Ok(0.0);
        }
        let table = self.survival_table(r as usize);
        let tail = table[r as usize];
        if tail < 0.5 {
            Ok(1.0 - tail)
        } else {
            Ok((1..=r).map(|s| self.ln_pmf(s).exp()).sum())
        }
    }

    /// Exit hazard `c(r) = d(r) / (1 - F(r-1))`, equal to one once the
    /// support is exhausted.
    pub fn hazard(&self, r: u64) -> Result<f64> {
        if r < 1 {
            return Err(Error::Domain("dwell time must be at least 1".into()));
        }
        self.validate()?;
        Ok(HazardTable::compute(self, r as usize)[(r - 1) as usize])
    }

    /// Survival values `S(0..=n)` with `S(r) = P(D > r)`.
    ///
    /// Tail sums are accumulated from the far end so that small survival
    /// values keep their relative accuracy.
    pub fn survival_table(&self, n: usize) -> Vec<f64> {
        match *self {
            DwellSpec::Geometric { theta } => (0..=n)
                .map(|r| (r as f64 * (-theta).ln_1p()).exp())
                .collect(),
            DwellSpec::Tabulated { ref probs, .. } => {
                let tail = self.tail_mass();
                let rate = self.tail_rate_value();
                let table = probs.len();
                let mut out = vec![0.0; n + 1];
                for (r, slot) in out.iter_mut().enumerate() {
                    *slot = if r >= table {
                        if tail == 0.0 {
                            0.0
                        } else {
                            tail * ((r - table) as f64 * (-rate).ln_1p()).exp()
                        }
                    } else {
                        tail + probs[r..].iter().sum::<f64>()
                    };
                }
                out
            }
            _ => {
                let masses = self.masses_until_negligible(n);
                let mut out = vec![0.0; n + 1];
                let mut acc = 0.0;
                // masses[i] = d(i + 1)
                for r in (0..masses.len()).rev() {
                    acc += masses[r];
                    if r <= n {
                        out[r] = acc;
                    }
                }
                out[0] = 1.0;
                out
            }
        }
    }

    /// `d(1), d(2), ...` generated by the term-ratio recursion, continued past
    /// `n` until the remaining tail cannot affect a double-precision sum.
    fn masses_until_negligible(&self, n: usize) -> Vec<f64> {
        const HARD_LIMIT: usize = 2_000_000;
        let first = self.ln_pmf(1).exp();
        let mut masses = Vec::with_capacity(n + 64);
        masses.push(first);
        let mut ln_term = self.ln_pmf(1);
        let mut tail_beyond_n = 0.0;
        let mut r: u64 = 1;
        loop {
            let ratio_ln = match *self {
                DwellSpec::ShiftedPoisson { mu } => mu.ln() - (r as f64).ln(),
                DwellSpec::ShiftedNegBinomial { nu, theta } => {
                    ((r as f64 - 1.0 + nu) / r as f64).ln() + (-theta).ln_1p()
                }
                _ => unreachable!("closed-form families handled by caller"),
            };
            ln_term += ratio_ln;
            r += 1;
            let term = ln_term.exp();
            masses.push(term);
            if r as usize > n {
                tail_beyond_n += term;
                let decaying = ratio_ln < 0.0;
                if decaying && (term == 0.0 || term <= 1e-20 * tail_beyond_n) {
                    break;
                }
                if tail_beyond_n == 0.0 && decaying && ln_term < -745.0 {
                    break;
                }
            }
            if masses.len() > HARD_LIMIT {
                break;
            }
        }
        masses
    }

    /// Mean dwell time.
    pub fn mean(&self) -> f64 {
        match *self {
            DwellSpec::Geometric { theta } => 1.0 / theta,
            DwellSpec::ShiftedPoisson { mu } => 1.0 + mu,
            DwellSpec::ShiftedNegBinomial { nu, theta } => 1.0 + nu * (1.0 - theta) / theta,
            DwellSpec::Tabulated { ref probs, .. } => {
                let body: f64 = probs
                    .iter()
                    .enumerate()
                    .map(|(i, p)| (i + 1) as f64 * p)
                    .sum();
                let tail = self.tail_mass();
                if tail == 0.0 {
                    body
                } else {
                    body + tail * (probs.len() as f64 + 1.0 / self.tail_rate_value())
                }
            }
        }
    }

    /// Smallest `a` beyond which the hazard is constant, if one exists.
    pub fn exact_size(&self) -> Option<usize> {
        match self {
            DwellSpec::Geometric { .. } => Some(1),
            DwellSpec::Tabulated { probs, .. } => {
                if self.tail_mass() == 0.0 {
                    let last = probs.iter().rposition(|p| *p > 0.0).unwrap_or(0);
                    Some(last + 1)
                } else {
                    let r = probs.len();
                    let hz = HazardTable::compute(self, r + 1);
                    if (hz[r - 1] - hz[r]).abs() <= 1e-15 {
                        Some(r)
                    } else {
                        Some(r + 1)
                    }
                }
            }
            _ => None,
        }
    }

    /// Compact label such as `sNB(0.581,0.017)` or `geom(0.409)`.
    pub fn label(&self) -> String {
        match self {
            DwellSpec::Geometric { theta } => format!("geom({theta:.3})"),
            DwellSpec::ShiftedPoisson { mu } => format!("sPois({mu:.3})"),
            DwellSpec::ShiftedNegBinomial { nu, theta } => format!("sNB({nu:.3},{theta:.3})"),
            DwellSpec::Tabulated { probs, .. } => format!("tab({})", probs.len()),
        }
    }
}

/// Hazards `c(1..=a)` of one dwell distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct HazardTable {
    pub values: Vec<f64>,
    pub source: DwellSpec,
}

impl HazardTable {
    pub fn new(spec: &DwellSpec, length: usize) -> Result<Self> {
        spec.validate()?;
        if length == 0 {
            return Err(Error::validation("hazard table", "length must be positive"));
        }
        Ok(HazardTable {
            values: Self::compute(spec, length),
            source: spec.clone(),
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Hazard values without validation; the caller vouches for `spec`.
    pub(crate) fn compute(spec: &DwellSpec, length: usize) -> Vec<f64> {
        if let DwellSpec::Geometric { theta } = *spec {
            return vec![theta; length];
        }
        let survival = spec.survival_table(length);
        (1..=length)
            .map(|r| {
                let before = survival[r - 1];
                if before < EXHAUSTED_SUPPORT {
                    1.0
                } else {
                    (spec.ln_pmf(r as u64).exp() / before).clamp(0.0, 1.0)
                }
            })
            .collect()
    }

    /// `c(r) * prod_{s<r} (1 - c(s))`, the dwell p.m.f. implied by the table.
    pub fn reconstruct_pmf(&self) -> Vec<f64> {
        let mut stay = 1.0;
        self.values
            .iter()
            .map(|c| {
                let d = c * stay;
                stay *= 1.0 - c;
                d
            })
            .collect()
    }
}

/// Outcome of sizing one aggregate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Truncation {
    pub size: usize,
    /// `1 - F(size)`.
    pub tail_mass: f64,
    /// The cap was hit before the tolerance was met.
    pub capped: bool,
}

/// Smallest `a` with `1 - F(a) <= epsilon`, or the exact representation size
/// when that is smaller, capped at `max_size`.
pub fn truncation_point(spec: &DwellSpec, epsilon: f64, max_size: usize) -> Result<Truncation> {
    spec.validate()?;
    if !(epsilon.is_finite() && (0.0..1.0).contains(&epsilon)) {
        return Err(Error::Domain(format!("epsilon {epsilon} not in [0,1)")));
    }
    if max_size == 0 {
        return Err(Error::Domain("aggregate cap must be positive".into()));
    }
    let survival = spec.survival_table(max_size);
    let scanned = (1..=max_size).find(|&a| survival[a] <= epsilon);
    let exact = spec.exact_size().filter(|&a| a <= max_size);
    let size = match (scanned, exact) {
        (Some(s), Some(e)) => s.min(e),
        (Some(s), None) => s,
        (None, Some(e)) => e,
        (None, None) => max_size,
    };
    Ok(Truncation {
        size,
        tail_mass: survival[size],
        capped: scanned.is_none() && exact.is_none(),
    })
}
