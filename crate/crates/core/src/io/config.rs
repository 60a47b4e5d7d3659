//! JSON model configurations.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dwell::DwellSpec;
use crate::error::{Error, Result};
use crate::inference::{AggregationOptions, FitOptions, Method, OptimOptions, ParameterMap, StartStrategy, Structure};
use crate::state_space::{InitMode, ModelParams};

/// A dwell law and whether its parameters are held fixed.
///
/// In JSON this is the dwell object itself with an optional `"fixed"` key,
/// e.g. `{"family": "snb", "nu": 4, "theta": 0.4, "fixed": false}`.
#[derive(Debug, Clone, PartialEq)]
pub struct DwellEntry {
    pub spec: DwellSpec,
    pub fixed: bool,
}

impl Serialize for DwellEntry {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut v = serde_json::to_value(&self.spec).map_err(serde::ser::Error::custom)?;
        if self.fixed {
            v["fixed"] = serde_json::Value::Bool(true);
        }
        v.serialize(s)
    }
}

impl<'de> Deserialize<'de> for DwellEntry {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let mut v = serde_json::Value::deserialize(d)?;
        let fixed = match v.as_object_mut().and_then(|m| m.remove("fixed")) {
            None => false,
            Some(serde_json::Value::Bool(b)) => b,
            Some(other) => return Err(D::Error::custom(format!("'fixed' must be a boolean, got {other}"))),
        };
        let spec = DwellSpec::deserialize(v).map_err(D::Error::custom)?;
        Ok(DwellEntry { spec, fixed })
    }
}

fn s_state() -> String {
    "c".into()
}

fn s_const() -> String {
    "const".into()
}

fn s_fixed() -> String {
    "fixed".into()
}

/// Structure notation per family: `const`, `t`, `c`, `t+c`, `fixed`,
/// `fixed:<value>`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StructureConfig {
    #[serde(default = "s_state")]
    pub phi: String,
    #[serde(default = "s_state")]
    pub p: String,
    #[serde(default = "s_const")]
    pub lambda: String,
    #[serde(default = "s_const")]
    pub psi: String,
    #[serde(default = "s_fixed")]
    pub alpha: String,
}

impl Default for StructureConfig {
    fn default() -> Self {
        StructureConfig {
            phi: s_state(),
            p: s_state(),
            lambda: s_const(),
            psi: s_const(),
            alpha: s_fixed(),
        }
    }
}

/// Values of a `[time][state]` family: one number, one per state, or a
/// full table with one row per occasion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FamilyValues {
    Scalar(f64),
    Vector(Vec<f64>),
    Table(Vec<Vec<f64>>),
}

/// `psi_star` as one `K x K` matrix or one per occasion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PsiValues {
    Matrix(Vec<Vec<f64>>),
    Series(Vec<Vec<Vec<f64>>>),
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValuesConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phi: Option<FamilyValues>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<FamilyValues>,
    /// One number or one per occasion.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<FamilyValues>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub psi: Option<PsiValues>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<FamilyValues>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerConfig {
    #[serde(default = "d_starts")]
    pub n_starts: usize,
    #[serde(default = "d_tol")]
    pub tol: f64,
    #[serde(default = "d_iter")]
    pub max_iter: usize,
    #[serde(default = "d_seed")]
    pub seed: u64,
    #[serde(default)]
    pub method: Method,
    #[serde(default)]
    pub start: StartStrategy,
    #[serde(default = "d_jitter")]
    pub jitter: f64,
}

fn d_starts() -> usize {
    10
}
fn d_tol() -> f64 {
    1e-9
}
fn d_iter() -> usize {
    2000
}
fn d_seed() -> u64 {
    1
}
fn d_jitter() -> f64 {
    1.0
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            n_starts: d_starts(),
            tol: d_tol(),
            max_iter: d_iter(),
            seed: d_seed(),
            method: Method::Auto,
            start: StartStrategy::Moments,
            jitter: d_jitter(),
        }
    }
}

/// Everything needed to build a model: dimensions, dwell laws, structures,
/// values (start values for free parameters, truth for simulation) and
/// fitting options.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    pub n_states: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_occasions: Option<usize>,
    pub dwell: Vec<DwellEntry>,
    #[serde(default)]
    pub structure: StructureConfig,
    #[serde(default)]
    pub values: ValuesConfig,
    #[serde(default)]
    pub init_mode: InitMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub init_extra: Option<Vec<f64>>,
    /// Estimate `init_extra` (estimated initial mode only).
    #[serde(default)]
    pub init_free: bool,
    #[serde(default)]
    pub aggregation: AggregationOptions,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
}

fn cfg(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

fn expand_table(
    name: &str,
    v: Option<&FamilyValues>,
    default: f64,
    n_occ: usize,
    k_states: usize,
) -> Result<Vec<Vec<f64>>> {
    let table = match v {
        None => vec![vec![default; k_states]; n_occ],
        Some(FamilyValues::Scalar(x)) => vec![vec![*x; k_states]; n_occ],
        Some(FamilyValues::Vector(row)) => {
            if row.len() != k_states {
                return Err(cfg(format!("{name}: {} values for {k_states} states", row.len())));
            }
            vec![row.clone(); n_occ]
        }
        Some(FamilyValues::Table(rows)) => {
            if rows.len() != n_occ || rows.iter().any(|r| r.len() != k_states) {
                return Err(cfg(format!("{name}: table must be {n_occ} rows of {k_states} values")));
            }
            rows.clone()
        }
    };
    if table.iter().flatten().any(|x| !(0.0..=1.0).contains(x)) {
        return Err(cfg(format!("{name}: values must lie in [0, 1]")));
    }
    Ok(table)
}

impl ModelConfig {
    pub fn from_json_str(text: &str) -> Result<Self> {
        let c: ModelConfig = serde_json::from_str(text).map_err(|e| cfg(e.to_string()))?;
        c.check()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| cfg(format!("{}: {e}", path.display())))?;
        Self::from_json_str(&text).map_err(|e| match e {
            Error::Config(m) => cfg(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialises")
    }

    fn check(&self) -> Result<()> {
        if self.n_states == 0 {
            return Err(cfg("n_states must be at least 1"));
        }
        if self.dwell.len() != self.n_states {
            return Err(cfg(format!(
                "{} dwell entries for {} states",
                self.dwell.len(),
                self.n_states
            )));
        }
        for (k, d) in self.dwell.iter().enumerate() {
            d.spec
                .validate()
                .map_err(|e| cfg(format!("dwell for state {}: {e}", k + 1)))?;
        }
        if self.n_occasions == Some(0) {
            return Err(cfg("n_occasions must be at least 1"));
        }
        for s in [&self.structure.phi, &self.structure.p, &self.structure.lambda, &self.structure.psi, &self.structure.alpha] {
            Structure::parse(s)?;
        }
        if self.optimizer.n_starts == 0 {
            return Err(cfg("optimizer.n_starts must be at least 1"));
        }
        if !(self.aggregation.epsilon >= 0.0 && self.aggregation.epsilon < 1.0) {
            return Err(cfg("aggregation.epsilon must lie in [0, 1)"));
        }
        if let Some(sizes) = &self.aggregation.sizes {
            if sizes.len() != self.n_states || sizes.contains(&0) {
                return Err(cfg("aggregation.sizes needs one positive size per state"));
            }
        }
        Ok(())
    }

    /// Resolves the number of occasions against the data's.
    pub fn occasions(&self, data_occasions: Option<usize>) -> Result<usize> {
        match (self.n_occasions, data_occasions) {
            (Some(a), Some(b)) if a != b => Err(cfg(format!(
                "config has n_occasions = {a} but the data have {b}"
            ))),
            (Some(a), _) | (None, Some(a)) => Ok(a),
            (None, None) => Err(cfg("n_occasions not given")),
        }
    }

    /// Natural-scale parameters over `n_occasions`.
    pub fn params(&self, n_occasions: usize) -> Result<ModelParams> {
        let k = self.n_states;
        let v = &self.values;
        let fixed_value = |s: &str| -> Result<Option<f64>> {
            Ok(match Structure::parse(s)? {
                Structure::Fixed(x) => x,
                _ => None,
            })
        };
        let phi = expand_table("phi", v.phi.as_ref(), 0.8, n_occasions, k)?;
        let p = expand_table("p", v.p.as_ref(), 0.5, n_occasions, k)?;
        let alpha_default = fixed_value(&self.structure.alpha)?.unwrap_or(1.0);
        let alpha = expand_table("alpha", v.alpha.as_ref(), alpha_default, n_occasions, k)?;
        let lambda = match &v.lambda {
            None => vec![fixed_value(&self.structure.lambda)?.unwrap_or(0.1); n_occasions],
            Some(FamilyValues::Scalar(x)) => vec![*x; n_occasions],
            Some(FamilyValues::Vector(xs)) if xs.len() == n_occasions => xs.clone(),
            Some(_) => return Err(cfg(format!("lambda: give one value or {n_occasions}"))),
        };
        if lambda.iter().any(|x| !(0.0..=1.0).contains(x)) {
            return Err(cfg("lambda: values must lie in [0, 1]"));
        }
        let uniform: Vec<Vec<f64>> = (0..k)
            .map(|j| {
                (0..k)
                    .map(|i| {
                        if k == 1 || i == j {
                            0.0
                        } else {
                            1.0 / (k - 1) as f64
                        }
                    })
                    .collect()
            })
            .collect();
        let psi_star = match &v.psi {
            None => vec![uniform; n_occasions],
            Some(PsiValues::Matrix(m)) => vec![m.clone(); n_occasions],
            Some(PsiValues::Series(s)) if s.len() == n_occasions => s.clone(),
            Some(_) => return Err(cfg(format!("psi: give one matrix or {n_occasions}"))),
        };
        let prm = ModelParams {
            n_states: k,
            n_occasions,
            phi,
            psi_star,
            p,
            lambda,
            alpha,
            dwell: self.dwell.iter().map(|d| d.spec.clone()).collect(),
            init_mode: self.init_mode,
            init_extra: self.init_extra.clone(),
        };
        prm.validate().map_err(|e| cfg(e.to_string()))?;
        Ok(prm)
    }

    pub fn parameter_map(&self, n_occasions: usize) -> Result<ParameterMap> {
        let s = &self.structure;
        ParameterMap::new(
            self.params(n_occasions)?,
            Structure::parse(&s.phi)?,
            Structure::parse(&s.p)?,
            Structure::parse(&s.lambda)?,
            Structure::parse(&s.psi)?,
            Structure::parse(&s.alpha)?,
            self.dwell.iter().map(|d| !d.fixed).collect(),
            self.init_free,
        )
        .map_err(|e| match e {
            Error::Config(m) => cfg(m),
            other => cfg(other.to_string()),
        })
    }

    pub fn fit_options(&self) -> FitOptions {
        let o = &self.optimizer;
        FitOptions {
            n_starts: o.n_starts,
            seed: o.seed,
            jitter: o.jitter,
            optim: OptimOptions {
                method: o.method,
                tol: o.tol,
                max_iter: o.max_iter,
                ..OptimOptions::default()
            },
            start: o.start,
            aggregation: self.aggregation.clone(),
            ..FitOptions::default()
        }
    }

    /// The same model with every dwell law replaced by a geometric law of
    /// equal mean.
    pub fn first_order(&self) -> ModelConfig {
        let mut c = self.clone();
        for d in c.dwell.iter_mut() {
            d.spec = DwellSpec::geometric((1.0 / d.spec.mean()).clamp(1e-6, 1.0));
        }
        c.aggregation.sizes = None;
        c.label = Some(match &self.label {
            Some(l) => format!("{l} (first-order)"),
            None => "first-order".into(),
        });
        c
    }

    pub fn display_label(&self) -> String {
        self.label.clone().unwrap_or_else(|| {
            self.dwell
                .iter()
                .map(|d| d.spec.family_name())
                .collect::<Vec<_>>()
                .join("/")
        })
    }
}
