use serde::{Deserialize, Serialize};

use crate::dwell::DwellSpec;
use crate::error::{Error, Result};

/// How the distribution over expanded states at first capture is formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitMode {
    /// Stationary distribution of the restricted (alive-only) expanded chain.
    #[default]
    #[serde(alias = "stationary")]
    StationaryConditional,
    /// Free state-level probabilities, spread within each aggregate by the
    /// aggregate's own stationary weights.
    #[serde(alias = "estimated")]
    EstimatedTopLevel,
    /// Condition on the recorded state; within-aggregate stationary weights.
    #[serde(alias = "conditional")]
    ConditionalOnObserved,
}

/// All model parameters on the natural scale.
///
/// Time-indexed tables hold one row per occasion (zero-based). Survival and
/// transition rows at occasion `t` govern the interval `t -> t+1`; detection,
/// recovery and assignment rows at `t` govern what is recorded at `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub n_states: usize,
    pub n_occasions: usize,
    /// `phi[t][k]`
    pub phi: Vec<Vec<f64>>,
    /// `psi_star[t][j][k]`, zero on the diagonal.
    pub psi_star: Vec<Vec<Vec<f64>>>,
    /// `p[t][k]`
    pub p: Vec<Vec<f64>>,
    /// `lambda[t]`
    pub lambda: Vec<f64>,
    /// `alpha[t][k]`
    pub alpha: Vec<Vec<f64>>,
    pub dwell: Vec<DwellSpec>,
    #[serde(default)]
    pub init_mode: InitMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub init_extra: Option<Vec<f64>>,
}

impl ModelParams {
    /// Time-constant parameters replicated over `n_occasions`.
    #[allow(clippy::too_many_arguments)]
    pub fn time_constant(
        n_occasions: usize,
        phi: &[f64],
        psi_star: &[Vec<f64>],
        p: &[f64],
        lambda: f64,
        alpha: &[f64],
        dwell: Vec<DwellSpec>,
    ) -> Self {
        let n_states = dwell.len();
        ModelParams {
            n_states,
            n_occasions,
            phi: vec![phi.to_vec(); n_occasions],
            psi_star: vec![psi_star.to_vec(); n_occasions],
            p: vec![p.to_vec(); n_occasions],
            lambda: vec![lambda; n_occasions],
            alpha: vec![alpha.to_vec(); n_occasions],
            dwell,
            init_mode: InitMode::default(),
            init_extra: None,
        }
    }

    pub fn with_init(mut self, mode: InitMode, extra: Option<Vec<f64>>) -> Self {
        self.init_mode = mode;
        self.init_extra = extra;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.n_states;
        let t = self.n_occasions;
        let bad = |reason: String| Err(Error::validation("model parameters", reason));
        if k == 0 {
            return bad("no covariate states".into());
        }
        if t == 0 {
            return bad("no occasions".into());
        }
        if self.dwell.len() != k {
            return bad(format!("{} dwell specs for {k} states", self.dwell.len()));
        }
        for d in &self.dwell {
            d.validate()?;
        }
        let check_table = |name: &str, table: &Vec<Vec<f64>>| -> Result<()> {
            if table.len() != t || table.iter().any(|row| row.len() != k) {
                return Err(Error::validation(
                    "model parameters",
                    format!("{name} must be {t} x {k}"),
                ));
            }
            if table.iter().flatten().any(|v| !is_prob(*v)) {
                return Err(Error::validation(
                    "model parameters",
                    format!("{name} has an entry outside [0,1]"),
                ));
            }
            Ok(())
        };
        check_table("phi", &self.phi)?;
        check_table("p", &self.p)?;
        check_table("alpha", &self.alpha)?;
        if self.lambda.len() != t || self.lambda.iter().any(|v| !is_prob(*v)) {
            return bad("lambda must hold one probability per occasion".into());
        }
        if self.psi_star.len() != t {
            return bad("psi_star must have one matrix per occasion".into());
        }
        for (ti, m) in self.psi_star.iter().enumerate() {
            if m.len() != k || m.iter().any(|row| row.len() != k) {
                return bad(format!("psi_star[{ti}] must be {k} x {k}"));
            }
            for (j, row) in m.iter().enumerate() {
                if row.iter().any(|v| !is_prob(*v)) {
                    return bad(format!("psi_star[{ti}] row {} outside [0,1]", j + 1));
                }
                if k >= 2 {
                    if row[j] != 0.0 {
                        return bad(format!("psi_star[{ti}] has nonzero diagonal in row {}", j + 1));
                    }
                    let s: f64 = row.iter().sum();
                    if (s - 1.0).abs() > 1e-12 {
                        return bad(format!("psi_star[{ti}] row {} sums to {s}", j + 1));
                    }
                }
            }
        }
        if self.init_mode == InitMode::EstimatedTopLevel {
            match &self.init_extra {
                Some(v) if v.len() == k && v.iter().all(|x| is_prob(*x)) => {
                    let s: f64 = v.iter().sum();
                    if (s - 1.0).abs() > 1e-12 {
                        return bad(format!("init_extra sums to {s}"));
                    }
                }
                _ => return bad("estimated initial mode needs init_extra over all states".into()),
            }
        }
        Ok(())
    }
}

fn is_prob(v: f64) -> bool {
    v.is_finite() && (0.0..=1.0).contains(&v)
}
