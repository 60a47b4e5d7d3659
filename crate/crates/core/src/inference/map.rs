//! Structured parameterisations and the free optimisation vector.
//!
//! Probabilities are free on the logit scale, positive dwell parameters on
//! the log scale, and each `psi*` row (and the estimated initial vector) on
//! the multinomial-logit scale with the lowest-index category as reference.

use serde::{Deserialize, Serialize};

use crate::dwell::DwellSpec;
use crate::error::{Error, Result};
use crate::state_space::{InitMode, ModelParams};

/// Probabilities are kept inside `[PROB_FLOOR, 1 - PROB_FLOOR]` when packed.
pub const PROB_FLOOR: f64 = 1e-8;

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

pub fn expit(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Probabilities from multinomial logits; the reference category (index 0)
/// has logit zero.
pub fn softmax_with_reference(free: &[f64]) -> Vec<f64> {
    let max = free.iter().copied().fold(0.0f64, f64::max);
    let mut out = Vec::with_capacity(free.len() + 1);
    out.push((-max).exp());
    out.extend(free.iter().map(|x| (x - max).exp()));
    let s: f64 = out.iter().sum();
    out.iter_mut().for_each(|v| *v /= s);
    out
}

/// Structure of a probability family over occasions and states.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Structure {
    /// One value for every occasion and state.
    Constant,
    /// One value per occasion.
    Time,
    /// One value per state.
    State,
    /// `logit v_t(k) = beta_t + gamma_k` with `gamma_1 = 0`.
    TimePlusState,
    /// Held at the base value, or at the given value everywhere.
    Fixed(Option<f64>),
}

impl Structure {
    /// Parses the compact notation `const`, `t`, `c`, `t+c`, `fixed`,
    /// `fixed:0.5`.
    pub fn parse(s: &str) -> Result<Self> {
        let s = s.trim();
        Ok(match s {
            "const" | "constant" | "." => Structure::Constant,
            "t" | "time" => Structure::Time,
            "c" | "k" | "state" => Structure::State,
            "t+c" | "t+k" | "c+t" | "k+t" => Structure::TimePlusState,
            "fixed" => Structure::Fixed(None),
            _ => {
                if let Some(v) = s.strip_prefix("fixed:") {
                    let v: f64 = v
                        .trim()
                        .parse()
                        .map_err(|_| Error::Config(format!("bad fixed value in '{s}'")))?;
                    if !(0.0..=1.0).contains(&v) {
                        return Err(Error::Config(format!("fixed value {v} outside [0,1]")));
                    }
                    Structure::Fixed(Some(v))
                } else {
                    return Err(Error::Config(format!("unknown structure '{s}'")));
                }
            }
        })
    }

    pub fn notation(&self) -> String {
        match self {
            Structure::Constant => "const".into(),
            Structure::Time => "t".into(),
            Structure::State => "c".into(),
            Structure::TimePlusState => "t+c".into(),
            Structure::Fixed(None) => "fixed".into(),
            Structure::Fixed(Some(v)) => format!("fixed:{v}"),
        }
    }

    pub fn is_fixed(&self) -> bool {
        matches!(self, Structure::Fixed(_))
    }
}

/// A probability family laid out on a `[time][state]` table.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Family {
    Phi,
    P,
    Alpha,
}

impl Family {
    fn name(self) -> &'static str {
        match self {
            Family::Phi => "phi",
            Family::P => "p",
            Family::Alpha => "alpha",
        }
    }

    /// Occasions at which the family is used.
    fn occasions(self, n_occasions: usize) -> std::ops::Range<usize> {
        match self {
            Family::Phi => 0..n_occasions.saturating_sub(1),
            Family::P | Family::Alpha => 1.min(n_occasions)..n_occasions,
        }
    }

    fn table(self, prm: &ModelParams) -> &Vec<Vec<f64>> {
        match self {
            Family::Phi => &prm.phi,
            Family::P => &prm.p,
            Family::Alpha => &prm.alpha,
        }
    }

    fn table_mut(self, prm: &mut ModelParams) -> &mut Vec<Vec<f64>> {
        match self {
            Family::Phi => &mut prm.phi,
            Family::P => &mut prm.p,
            Family::Alpha => &mut prm.alpha,
        }
    }
}

/// A natural-scale quantity reported for a fit.
#[derive(Debug, Clone, PartialEq)]
pub enum Quantity {
    Phi { t: usize, k: usize },
    P { t: usize, k: usize },
    Alpha { t: usize, k: usize },
    Lambda { t: usize },
    Psi { t: usize, j: usize, k: usize },
    Dwell { k: usize, family: &'static str, param: &'static str },
    DwellMass { k: usize, r: usize },
    Init { k: usize },
}

impl Quantity {
    pub fn eval(&self, prm: &ModelParams) -> Option<f64> {
        match *self {
            Quantity::Phi { t, k } => Some(prm.phi[t][k]),
            Quantity::P { t, k } => Some(prm.p[t][k]),
            Quantity::Alpha { t, k } => Some(prm.alpha[t][k]),
            Quantity::Lambda { t } => Some(prm.lambda[t]),
            Quantity::Psi { t, j, k } => Some(prm.psi_star[t][j][k]),
            Quantity::Dwell { k, family, param } => {
                let d = &prm.dwell[k];
                if d.family_name() != family {
                    return None;
                }
                match (d, param) {
                    (DwellSpec::Geometric { theta }, "theta") => Some(*theta),
                    (DwellSpec::ShiftedPoisson { mu }, "mu") => Some(*mu),
                    (DwellSpec::ShiftedNegBinomial { nu, .. }, "nu") => Some(*nu),
                    (DwellSpec::ShiftedNegBinomial { theta, .. }, "theta") => Some(*theta),
                    _ => None,
                }
            }
            Quantity::DwellMass { k, r } => match &prm.dwell[k] {
                DwellSpec::Tabulated { probs, .. } => probs.get(r).copied(),
                _ => None,
            },
            Quantity::Init { k } => prm.init_extra.as_ref().map(|v| v[k]),
        }
    }

    /// True for quantities living in `(0, 1)`; the rest are positive reals.
    pub fn is_probability(&self) -> bool {
        !matches!(
            self,
            Quantity::Dwell {
                param: "nu" | "mu",
                ..
            }
        )
    }
}

/// A named natural-scale quantity.
#[derive(Debug, Clone, PartialEq)]
pub struct NamedQuantity {
    pub name: String,
    pub quantity: Quantity,
}

#[derive(Debug, Clone, PartialEq)]
enum Block {
    Table { family: Family, structure: Structure, start: usize, len: usize },
    Lambda { structure: Structure, start: usize, len: usize },
    Psi { time: bool, start: usize, len: usize },
    Dwell { k: usize, start: usize, len: usize },
    Init { start: usize, len: usize },
}

/// Maps a free real vector onto full model parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterMap {
    /// Supplies fixed values, dimensions and dwell families.
    pub base: ModelParams,
    pub phi: Structure,
    pub p: Structure,
    pub lambda: Structure,
    pub psi: Structure,
    pub alpha: Structure,
    pub dwell_free: Vec<bool>,
    pub init_free: bool,
    blocks: Vec<Block>,
    n_free: usize,
}

impl ParameterMap {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        base: ModelParams,
        phi: Structure,
        p: Structure,
        lambda: Structure,
        psi: Structure,
        alpha: Structure,
        dwell_free: Vec<bool>,
        init_free: bool,
    ) -> Result<Self> {
        base.validate()?;
        let k_states = base.n_states;
        let n_occ = base.n_occasions;
        if dwell_free.len() != k_states {
            return Err(Error::Config(format!(
                "{} dwell flags for {k_states} states",
                dwell_free.len()
            )));
        }
        if matches!(lambda, Structure::State | Structure::TimePlusState) {
            return Err(Error::Config("lambda cannot depend on state".into()));
        }
        if matches!(psi, Structure::State | Structure::TimePlusState) {
            return Err(Error::Config("psi structure must be const, t or fixed".into()));
        }
        if init_free && base.init_mode != InitMode::EstimatedTopLevel {
            return Err(Error::Config(
                "init probabilities are free only in the estimated initial mode".into(),
            ));
        }
        let mut blocks = Vec::new();
        let mut at = 0;
        let t_used = n_occ.saturating_sub(1);
        for (family, structure) in [(Family::Phi, phi), (Family::P, p), (Family::Alpha, alpha)] {
            let len = match structure {
                Structure::Constant => 1,
                Structure::Time => t_used,
                Structure::State => k_states,
                Structure::TimePlusState => t_used + k_states - 1,
                Structure::Fixed(_) => 0,
            };
            if len > 0 {
                blocks.push(Block::Table { family, structure, start: at, len });
                at += len;
            }
        }
        let lambda_len = match lambda {
            Structure::Constant => 1,
            Structure::Time => t_used,
            _ => 0,
        };
        if lambda_len > 0 {
            blocks.push(Block::Lambda { structure: lambda, start: at, len: lambda_len });
            at += lambda_len;
        }
        let per_psi = if k_states >= 3 { k_states * (k_states - 2) } else { 0 };
        let psi_len = match psi {
            Structure::Constant => per_psi,
            Structure::Time => per_psi * t_used,
            _ => 0,
        };
        if psi_len > 0 {
            blocks.push(Block::Psi { time: psi == Structure::Time, start: at, len: psi_len });
            at += psi_len;
        }
        for (k, free) in dwell_free.iter().enumerate() {
            if !free {
                continue;
            }
            let len = match &base.dwell[k] {
                DwellSpec::Geometric { .. } | DwellSpec::ShiftedPoisson { .. } => 1,
                DwellSpec::ShiftedNegBinomial { .. } => 2,
                DwellSpec::Tabulated { probs, tail_rate } => {
                    if probs[0] <= 0.0 {
                        return Err(Error::Config(format!(
                            "free tabulated dwell for state {} needs a positive first mass",
                            k + 1
                        )));
                    }
                    let tail = 1.0 - probs.iter().sum::<f64>() > 1e-12;
                    if tail && tail_rate.is_none() {
                        return Err(Error::Config(format!(
                            "free tabulated dwell for state {} with a tail needs tail_rate",
                            k + 1
                        )));
                    }
                    probs.len() - 1 + usize::from(tail)
                }
            };
            if len > 0 {
                blocks.push(Block::Dwell { k, start: at, len });
                at += len;
            }
        }
        if init_free && k_states > 1 {
            blocks.push(Block::Init { start: at, len: k_states - 1 });
            at += k_states - 1;
        }
        Ok(ParameterMap {
            base,
            phi,
            p,
            lambda,
            psi,
            alpha,
            dwell_free,
            init_free,
            blocks,
            n_free: at,
        })
    }

    /// Everything held at the base values.
    pub fn all_fixed(base: ModelParams) -> Result<Self> {
        let k = base.n_states;
        let f = Structure::Fixed(None);
        Self::new(base, f, f, f, f, f, vec![false; k], false)
    }

    pub fn n_free(&self) -> usize {
        self.n_free
    }

    pub fn n_states(&self) -> usize {
        self.base.n_states
    }

    pub fn n_occasions(&self) -> usize {
        self.base.n_occasions
    }

    /// Natural parameters for a free vector.
    pub fn unpack(&self, v: &[f64]) -> Result<ModelParams> {
        if v.len() != self.n_free {
            return Err(Error::validation(
                "free vector",
                format!("length {} but map has {} free parameters", v.len(), self.n_free),
            ));
        }
        let mut prm = self.base.clone();
        let n_occ = prm.n_occasions;
        let k_states = prm.n_states;
        for (family, structure) in [(Family::Phi, self.phi), (Family::P, self.p), (Family::Alpha, self.alpha)] {
            if let Structure::Fixed(Some(x)) = structure {
                for row in family.table_mut(&mut prm) {
                    row.fill(x);
                }
            }
        }
        if let Structure::Fixed(Some(x)) = self.lambda {
            prm.lambda.fill(x);
        }
        for block in &self.blocks {
            match *block {
                Block::Table { family, structure, start, len } => {
                    let free = &v[start..start + len];
                    let used = family.occasions(n_occ);
                    let table = family.table_mut(&mut prm);
                    for t in 0..n_occ {
                        // unused occasions mirror the nearest used one
                        let tu = t.clamp(used.start, used.end.max(used.start + 1) - 1);
                        let ti = tu - used.start;
                        for k in 0..k_states {
                            let x = match structure {
                                Structure::Constant => free[0],
                                Structure::Time => free[ti.min(len - 1)],
                                Structure::State => free[k],
                                Structure::TimePlusState => {
                                    let nt = len - (k_states - 1);
                                    let beta = free[ti.min(nt - 1)];
                                    let gamma = if k == 0 { 0.0 } else { free[nt + k - 1] };
                                    beta + gamma
                                }
                                Structure::Fixed(_) => unreachable!(),
                            };
                            table[t][k] = expit(x);
                        }
                    }
                }
                Block::Lambda { structure, start, len } => {
                    let free = &v[start..start + len];
                    for t in 0..n_occ {
                        let ti = t.max(1) - 1;
                        prm.lambda[t] = expit(match structure {
                            Structure::Constant => free[0],
                            _ => free[ti.min(len - 1)],
                        });
                    }
                }
                Block::Psi { time, start, len } => {
                    let free = &v[start..start + len];
                    let per = k_states * (k_states - 2);
                    for t in 0..n_occ {
                        let ti = if time { t.min(n_occ.saturating_sub(2)) } else { 0 };
                        let chunk = &free[ti * per..ti * per + per];
                        for j in 0..k_states {
                            let probs =
                                softmax_with_reference(&chunk[j * (k_states - 2)..(j + 1) * (k_states - 2)]);
                            let dests = (0..k_states).filter(|&k| k != j);
                            for (k, pr) in dests.zip(probs) {
                                prm.psi_star[t][j][k] = pr;
                            }
                            prm.psi_star[t][j][j] = 0.0;
                        }
                    }
                }
                Block::Dwell { k, start, len } => {
                    let free = &v[start..start + len];
                    prm.dwell[k] = match &self.base.dwell[k] {
                        DwellSpec::Geometric { .. } => DwellSpec::Geometric { theta: expit(free[0]) },
                        DwellSpec::ShiftedPoisson { .. } => DwellSpec::ShiftedPoisson { mu: free[0].exp() },
                        DwellSpec::ShiftedNegBinomial { .. } => DwellSpec::ShiftedNegBinomial {
                            nu: free[0].exp(),
                            theta: expit(free[1]),
                        },
                        DwellSpec::Tabulated { probs, tail_rate } => {
                            let all = softmax_with_reference(free);
                            DwellSpec::Tabulated {
                                probs: all[..probs.len()].to_vec(),
                                tail_rate: *tail_rate,
                            }
                        }
                    };
                }
                Block::Init { start, len } => {
                    prm.init_extra = Some(softmax_with_reference(&v[start..start + len]));
                }
            }
        }
        // keep every probability strictly usable by the dwell validators
        for d in prm.dwell.iter_mut() {
            match d {
                DwellSpec::Geometric { theta } | DwellSpec::ShiftedNegBinomial { theta, .. } => {
                    *theta = theta.clamp(1e-12, 1.0 - 1e-12);
                }
                DwellSpec::ShiftedPoisson { mu } => *mu = mu.clamp(1e-12, 1e12),
                _ => {}
            }
            if let DwellSpec::ShiftedNegBinomial { nu, .. } = d {
                *nu = nu.clamp(1e-12, 1e12);
            }
        }
        Ok(prm)
    }

    /// Free vector for natural parameters consistent with the structures.
    /// Returns the vector and the names of entries that had to be pulled off
    /// the boundary.
    pub fn pack(&self, prm: &ModelParams) -> Result<(Vec<f64>, Vec<String>)> {
        if prm.n_states != self.base.n_states || prm.n_occasions != self.base.n_occasions {
            return Err(Error::validation("parameters", "dimensions differ from the map"));
        }
        let mut clamped = Vec::new();
        let mut lg = |name: String, x: f64| -> f64 {
            let c = x.clamp(PROB_FLOOR, 1.0 - PROB_FLOOR);
            if c != x {
                clamped.push(name);
            }
            logit(c)
        };
        let mut v = vec![0.0; self.n_free];
        let n_occ = prm.n_occasions;
        let k_states = prm.n_states;
        for block in &self.blocks {
            match *block {
                Block::Table { family, structure, start, len } => {
                    let table = family.table(prm);
                    let used = family.occasions(n_occ);
                    let nm = family.name();
                    match structure {
                        Structure::Constant => v[start] = lg(nm.into(), table[used.start][0]),
                        Structure::State => {
                            for k in 0..k_states {
                                v[start + k] = lg(format!("{nm}({})", k + 1), table[used.start][k]);
                            }
                        }
                        Structure::Time => {
                            for (i, t) in used.clone().enumerate().take(len) {
                                v[start + i] = lg(format!("{nm}[{}]", t + 1), table[t][0]);
                            }
                        }
                        Structure::TimePlusState => {
                            let nt = len - (k_states - 1);
                            for (i, t) in used.clone().enumerate().take(nt) {
                                v[start + i] = lg(format!("{nm}[{}](1)", t + 1), table[t][0]);
                            }
                            let t = used.start;
                            for k in 1..k_states {
                                v[start + nt + k - 1] = lg(format!("{nm}[{}]({})", t + 1, k + 1), table[t][k])
                                    - lg(format!("{nm}[{}](1)", t + 1), table[t][0]);
                            }
                        }
                        Structure::Fixed(_) => {}
                    }
                }
                Block::Lambda { structure, start, len } => match structure {
                    Structure::Constant => v[start] = lg("lambda".into(), prm.lambda[1.min(n_occ - 1)]),
                    _ => {
                        for i in 0..len {
                            v[start + i] = lg(format!("lambda[{}]", i + 2), prm.lambda[i + 1]);
                        }
                    }
                },
                Block::Psi { time, start, len } => {
                    let per = k_states * (k_states - 2);
                    let n_t = len / per;
                    for ti in 0..n_t {
                        let t = if time { ti } else { 0 };
                        for j in 0..k_states {
                            let dests: Vec<usize> = (0..k_states).filter(|&k| k != j).collect();
                            let reference = prm.psi_star[t][j][dests[0]].max(PROB_FLOOR);
                            for (i, &k) in dests.iter().enumerate().skip(1) {
                                let x = prm.psi_star[t][j][k].max(PROB_FLOOR);
                                v[start + ti * per + j * (k_states - 2) + i - 1] = (x / reference).ln();
                            }
                        }
                    }
                }
                Block::Dwell { k, start, .. } => match &prm.dwell[k] {
                    DwellSpec::Geometric { theta } => v[start] = lg(format!("theta({})", k + 1), *theta),
                    DwellSpec::ShiftedPoisson { mu } => v[start] = mu.ln(),
                    DwellSpec::ShiftedNegBinomial { nu, theta } => {
                        v[start] = nu.ln();
                        v[start + 1] = lg(format!("theta({})", k + 1), *theta);
                    }
                    DwellSpec::Tabulated { probs, .. } => {
                        let mut cats = probs.clone();
                        let tail = 1.0 - probs.iter().sum::<f64>();
                        if tail > 1e-12 {
                            cats.push(tail);
                        }
                        let reference = cats[0].max(PROB_FLOOR);
                        for i in 1..cats.len() {
                            v[start + i - 1] = (cats[i].max(PROB_FLOOR) / reference).ln();
                        }
                    }
                },
                Block::Init { start, len } => {
                    let extra = prm
                        .init_extra
                        .as_ref()
                        .ok_or_else(|| Error::validation("parameters", "init_extra missing"))?;
                    let reference = extra[0].max(PROB_FLOOR);
                    for i in 0..len {
                        v[start + i] = (extra[i + 1].max(PROB_FLOOR) / reference).ln();
                    }
                }
            }
        }
        for blk in &self.blocks {
            if let Block::Dwell { k, .. } = blk {
                if prm.dwell[*k].family_name() != self.base.dwell[*k].family_name() {
                    return Err(Error::validation(
                        "parameters",
                        format!("dwell family of state {} differs from the map", k + 1),
                    ));
                }
            }
        }
        Ok((v, clamped))
    }

    /// Natural-scale quantities implied by the free parameters.
    pub fn quantities(&self) -> Vec<NamedQuantity> {
        let k_states = self.n_states();
        let n_occ = self.n_occasions();
        let mut out = Vec::new();
        let mut push = |name: String, quantity: Quantity| out.push(NamedQuantity { name, quantity });
        for (family, structure) in [(Family::Phi, self.phi), (Family::P, self.p), (Family::Alpha, self.alpha)] {
            let used = family.occasions(n_occ);
            let nm = family.name();
            let q = |t: usize, k: usize| match family {
                Family::Phi => Quantity::Phi { t, k },
                Family::P => Quantity::P { t, k },
                Family::Alpha => Quantity::Alpha { t, k },
            };
            match structure {
                Structure::Constant => push(nm.to_string(), q(used.start, 0)),
                Structure::State => {
                    for k in 0..k_states {
                        push(format!("{nm}({})", k + 1), q(used.start, k));
                    }
                }
                Structure::Time => {
                    for t in used {
                        push(format!("{nm}[{}]", t + 1), q(t, 0));
                    }
                }
                Structure::TimePlusState => {
                    for t in used {
                        for k in 0..k_states {
                            push(format!("{nm}[{}]({})", t + 1, k + 1), q(t, k));
                        }
                    }
                }
                Structure::Fixed(_) => {}
            }
        }
        match self.lambda {
            Structure::Constant => push("lambda".into(), Quantity::Lambda { t: 1.min(n_occ - 1) }),
            Structure::Time => {
                for t in 1..n_occ {
                    push(format!("lambda[{}]", t + 1), Quantity::Lambda { t });
                }
            }
            _ => {}
        }
        if k_states >= 3 {
            let times: Vec<usize> = match self.psi {
                Structure::Constant => vec![0],
                Structure::Time => (0..n_occ - 1).collect(),
                _ => vec![],
            };
            for &t in &times {
                for j in 0..k_states {
                    for k in (0..k_states).filter(|&k| k != j) {
                        let name = if self.psi == Structure::Time {
                            format!("psi[{}]({},{})", t + 1, j + 1, k + 1)
                        } else {
                            format!("psi({},{})", j + 1, k + 1)
                        };
                        push(name, Quantity::Psi { t, j, k });
                    }
                }
            }
        }
        for (k, free) in self.dwell_free.iter().enumerate() {
            if !free {
                continue;
            }
            let family = self.base.dwell[k].family_name();
            let params: &[&'static str] = match &self.base.dwell[k] {
                DwellSpec::Geometric { .. } => &["theta"],
                DwellSpec::ShiftedPoisson { .. } => &["mu"],
                DwellSpec::ShiftedNegBinomial { .. } => &["nu", "theta"],
                DwellSpec::Tabulated { probs, .. } => {
                    for r in 0..probs.len() {
                        push(format!("d{}({})", k + 1, r + 1), Quantity::DwellMass { k, r });
                    }
                    &[]
                }
            };
            for param in params {
                push(format!("{param}({})", k + 1), Quantity::Dwell { k, family, param });
            }
        }
        if self.init_free {
            for k in 0..k_states {
                push(format!("init({})", k + 1), Quantity::Init { k });
            }
        }
        out
    }
}
