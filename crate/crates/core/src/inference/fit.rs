//! Multi-start maximum likelihood and the observed information matrix.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dwell::{truncation_point, DEFAULT_EPSILON, DEFAULT_MAX_AGGREGATE};
use crate::error::{Error, Result};
use crate::inference::map::{expit, logit, ParameterMap, Quantity};
use crate::inference::optimize::{minimize, OptimOptions, OptimResult};
use crate::inference::start::{moment_start, StartStrategy};
use crate::likelihood::{joint_loglik, pattern_loglik, Dataset, ForwardOptions, Patterns};
use crate::state_space::{AggregationPlan, ExpandedModel, ModelParams};

/// How aggregate sizes are chosen for a fit. Sizes stay fixed while the
/// optimiser runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AggregationOptions {
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    /// Explicit sizes; overrides `epsilon`.
    #[serde(default)]
    pub sizes: Option<Vec<usize>>,
    #[serde(default = "default_max_size")]
    pub max_size: usize,
}

fn default_epsilon() -> f64 {
    DEFAULT_EPSILON
}

fn default_max_size() -> usize {
    DEFAULT_MAX_AGGREGATE
}

impl Default for AggregationOptions {
    fn default() -> Self {
        AggregationOptions {
            epsilon: DEFAULT_EPSILON,
            sizes: None,
            max_size: DEFAULT_MAX_AGGREGATE,
        }
    }
}

impl AggregationOptions {
    /// Plan for the given parameters. Without explicit sizes, non-geometric
    /// aggregates are at least as long as the study (capped at `max_size`).
    pub fn plan_for(&self, prm: &ModelParams) -> Result<AggregationPlan> {
        if let Some(sizes) = &self.sizes {
            return crate::state_space::build_aggregation(&prm.dwell, self.epsilon, Some(sizes), self.max_size);
        }
        let mut sizes = Vec::with_capacity(prm.n_states);
        let mut capped = Vec::new();
        for (k, d) in prm.dwell.iter().enumerate() {
            let tr = truncation_point(d, self.epsilon, self.max_size)?;
            let mut a = tr.size;
            if d.exact_size().is_none() && !d.is_geometric() {
                a = a.max(prm.n_occasions.min(self.max_size));
            }
            if tr.capped {
                capped.push(k);
            }
            sizes.push(a);
        }
        let mut plan = AggregationPlan::from_sizes(sizes)?;
        plan.capped = capped;
        Ok(plan)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitOptions {
    pub n_starts: usize,
    pub seed: u64,
    /// Standard deviation of the link-scale jitter for starts after the first.
    pub jitter: f64,
    pub optim: OptimOptions,
    pub start: StartStrategy,
    pub aggregation: AggregationOptions,
    pub forward: ForwardOptions,
    pub covariance: bool,
    /// Re-plan at the optimum and polish if any aggregate grows.
    pub replan: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            n_starts: 10,
            seed: 1,
            jitter: 1.0,
            optim: OptimOptions::default(),
            start: StartStrategy::Moments,
            aggregation: AggregationOptions::default(),
            forward: ForwardOptions::default(),
            covariance: true,
            replan: true,
        }
    }
}

/// Inverse observed information.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Covariance {
    /// Row-major, link scale.
    pub matrix: Vec<Vec<f64>>,
    pub rank: usize,
    /// True when the Hessian was singular or indefinite and a
    /// pseudo-inverse was used.
    pub pseudo_inverse: bool,
}

/// One natural-scale quantity with its Wald interval.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParameterEstimate {
    pub name: String,
    pub estimate: f64,
    pub se: Option<f64>,
    pub lower: Option<f64>,
    pub upper: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StartDiagnostics {
    pub index: usize,
    pub loglik: f64,
    pub converged: bool,
    pub n_evals: usize,
    pub iterations: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitResult {
    pub mle: ModelParams,
    pub free_vector: Vec<f64>,
    pub loglik: f64,
    pub aic: f64,
    pub n_params: usize,
    pub covariance: Option<Covariance>,
    pub converged: bool,
    pub n_evals: usize,
    pub multistart_spread: f64,
    pub estimates: Vec<ParameterEstimate>,
    pub plan: AggregationPlan,
    pub starts: Vec<StartDiagnostics>,
    pub warnings: Vec<String>,
    #[serde(skip)]
    pub forward: ForwardOptions,
}

/// Negative joint log-likelihood on the free scale; infeasible points give
/// `+inf`.
pub(crate) fn objective(map: &ParameterMap, plan: &AggregationPlan, patterns: &Patterns, forward: &ForwardOptions, v: &[f64]) -> f64 {
    let Ok(prm) = map.unpack(v) else {
        return f64::INFINITY;
    };
    let Ok(model) = ExpandedModel::new(&prm, plan) else {
        return f64::INFINITY;
    };
    match pattern_loglik(&model, patterns, forward) {
        Ok(l) if l.is_finite() => -l,
        _ => f64::INFINITY,
    }
}

fn check_inputs(data: &Dataset, map: &ParameterMap) -> Result<()> {
    if data.is_empty() {
        return Err(Error::Fit("empty dataset".into()));
    }
    if data.n_states != map.n_states() || data.n_occasions != map.n_occasions() {
        return Err(Error::Fit(format!(
            "data has K = {}, T = {} but the model has K = {}, T = {}",
            data.n_states,
            data.n_occasions,
            map.n_states(),
            map.n_occasions()
        )));
    }
    Ok(())
}

/// Maximises the joint log-likelihood over the free parameters of `map`.
pub fn fit(data: &Dataset, map: &ParameterMap, opts: &FitOptions) -> Result<FitResult> {
    check_inputs(data, map)?;
    let mut warnings = Vec::new();
    let start = match opts.start {
        StartStrategy::Moments => moment_start(data, map),
        StartStrategy::Config => map.base.clone(),
    };
    let mut plan = opts.aggregation.plan_for(&start)?;
    for &k in &plan.capped {
        warnings.push(format!("aggregate for state {} hit the size cap", k + 1));
    }
    let patterns = Patterns::from_dataset(data);

    if map.n_free() == 0 {
        let j = joint_loglik(data, &map.base, &plan, &opts.forward)?;
        if !j.is_finite() {
            return Err(Error::Fit(format!(
                "histories impossible under the fixed parameters: {}",
                j.impossible.join(", ")
            )));
        }
        return Ok(FitResult {
            mle: map.base.clone(),
            free_vector: vec![],
            loglik: j.total,
            aic: -2.0 * j.total,
            n_params: 0,
            covariance: None,
            converged: true,
            n_evals: 1,
            multistart_spread: 0.0,
            estimates: vec![],
            plan,
            starts: vec![],
            warnings,
            forward: opts.forward,
        });
    }

    let (x0, clamped) = map.pack(&start)?;
    if !clamped.is_empty() {
        warnings.push(format!("start values clamped off the boundary: {}", clamped.join(", ")));
    }
    let starts: Vec<Vec<f64>> = (0..opts.n_starts.max(1))
        .map(|i| {
            if i == 0 {
                return x0.clone();
            }
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
            rng.set_stream(i as u64);
            x0.iter()
                .map(|v| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    v + opts.jitter * z
                })
                .collect()
        })
        .collect();
    let runs: Vec<OptimResult> = {
        let plan = &plan;
        let patterns = &patterns;
        let f = move |v: &[f64]| objective(map, plan, patterns, &opts.forward, v);
        starts.par_iter().map(|x| minimize(&f, x, &opts.optim)).collect()
    };
    let diagnostics: Vec<StartDiagnostics> = runs
        .iter()
        .enumerate()
        .map(|(index, r)| StartDiagnostics {
            index,
            loglik: -r.f,
            converged: r.converged,
            n_evals: r.n_evals,
            iterations: r.iterations,
            message: r.message.clone(),
        })
        .collect();
    let mut n_evals: usize = runs.iter().map(|r| r.n_evals).sum();
    let finite: Vec<&OptimResult> = runs.iter().filter(|r| r.f.is_finite()).collect();
    let Some(best) = finite.iter().copied().min_by(|a, b| a.f.total_cmp(&b.f)) else {
        let detail: Vec<String> = diagnostics
            .iter()
            .map(|d| format!("start {}: {}", d.index, d.message))
            .collect();
        return Err(Error::Fit(format!("no start reached a finite likelihood ({})", detail.join("; "))));
    };
    let worst = finite.iter().map(|r| r.f).fold(f64::NEG_INFINITY, f64::max);
    let multistart_spread = worst - best.f;
    let mut x = best.x.clone();
    let mut fx = best.f;
    let mut converged = best.converged;

    if opts.replan && opts.aggregation.sizes.is_none() {
        let at_mle = map.unpack(&x)?;
        let wider = opts.aggregation.plan_for(&at_mle)?;
        if wider.sizes.iter().zip(&plan.sizes).any(|(a, b)| a > b) {
            let sizes: Vec<usize> = wider.sizes.iter().zip(&plan.sizes).map(|(a, b)| *a.max(b)).collect();
            plan = AggregationPlan::from_sizes(sizes)?;
            plan.capped = wider.capped;
            let f = |v: &[f64]| objective(map, &plan, &patterns, &opts.forward, v);
            let polish = minimize(&f, &x, &opts.optim);
            n_evals += polish.n_evals;
            if polish.f.is_finite() {
                x = polish.x;
                fx = polish.f;
                converged = polish.converged;
            }
        }
    }

    let mle = map.unpack(&x)?;
    let loglik = -fx;
    let n_params = map.n_free();
    let mut result = FitResult {
        mle,
        free_vector: x,
        loglik,
        aic: -2.0 * loglik + 2.0 * n_params as f64,
        n_params,
        covariance: None,
        converged,
        n_evals,
        multistart_spread,
        estimates: vec![],
        plan,
        starts: diagnostics,
        warnings,
        forward: opts.forward,
    };
    if opts.covariance {
        match observed_information(&result, data, map) {
            Ok(cov) => {
                if cov.pseudo_inverse {
                    result.warnings.push(format!(
                        "information matrix has rank {} of {}; pseudo-inverse used",
                        cov.rank, n_params
                    ));
                }
                result.covariance = Some(cov);
            }
            Err(e) => result.warnings.push(format!("no covariance: {e}")),
        }
    }
    result.estimates = estimates(map, &result.free_vector, result.covariance.as_ref())?;
    Ok(result)
}

/// Central finite-difference Hessian with steps `1e-5 * max(1, |x_i|)`.
pub fn hessian(f: &dyn Fn(&[f64]) -> f64, x: &[f64]) -> Vec<Vec<f64>> {
    let n = x.len();
    let h: Vec<f64> = x.iter().map(|v| 1e-5 * v.abs().max(1.0)).collect();
    let f0 = f(x);
    let mut out = vec![vec![0.0; n]; n];
    let mut xp = x.to_vec();
    let eval = |xp: &mut Vec<f64>, di: usize, si: f64, dj: usize, sj: f64| -> f64 {
        xp[di] += si;
        xp[dj] += sj;
        let v = f(xp);
        xp[di] = x[di];
        xp[dj] = x[dj];
        v
    };
    for i in 0..n {
        let fp = eval(&mut xp, i, h[i], i, 0.0);
        let fm = eval(&mut xp, i, -h[i], i, 0.0);
        out[i][i] = (fp - 2.0 * f0 + fm) / (h[i] * h[i]);
        for j in 0..i {
            let fpp = eval(&mut xp, i, h[i], j, h[j]);
            let fpm = eval(&mut xp, i, h[i], j, -h[j]);
            let fmp = eval(&mut xp, i, -h[i], j, h[j]);
            let fmm = eval(&mut xp, i, -h[i], j, -h[j]);
            let v = (fpp - fpm - fmp + fmm) / (4.0 * h[i] * h[j]);
            out[i][j] = v;
            out[j][i] = v;
        }
    }
    out
}

/// Inverse of a symmetric Hessian, falling back to the eigen pseudo-inverse
/// over its positive spectrum.
pub fn covariance_from_hessian(h: &[Vec<f64>]) -> Result<Covariance> {
    let n = h.len();
    if h.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Singular("Hessian has non-finite entries".into()));
    }
    let m = DMatrix::from_fn(n, n, |i, j| 0.5 * (h[i][j] + h[j][i]));
    if let Some(ch) = m.clone().cholesky() {
        let inv = ch.inverse();
        return Ok(Covariance {
            matrix: (0..n).map(|i| (0..n).map(|j| 0.5 * (inv[(i, j)] + inv[(j, i)])).collect()).collect(),
            rank: n,
            pseudo_inverse: false,
        });
    }
    let eig = m.symmetric_eigen();
    let scale = eig.eigenvalues.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let tol = 1e-10 * scale.max(f64::MIN_POSITIVE);
    let mut inv = DMatrix::zeros(n, n);
    let mut rank = 0;
    for (i, &lam) in eig.eigenvalues.iter().enumerate() {
        if lam > tol {
            rank += 1;
            let v = eig.eigenvectors.column(i);
            inv += (v * v.transpose()) / lam;
        }
    }
    Ok(Covariance {
        matrix: (0..n).map(|i| (0..n).map(|j| 0.5 * (inv[(i, j)] + inv[(j, i)])).collect()).collect(),
        rank,
        pseudo_inverse: true,
    })
}

/// Inverse observed information at the fitted free vector.
pub fn observed_information(fit: &FitResult, data: &Dataset, map: &ParameterMap) -> Result<Covariance> {
    check_inputs(data, map)?;
    if fit.free_vector.len() != map.n_free() {
        return Err(Error::Fit("fit and map disagree on the free parameters".into()));
    }
    let patterns = Patterns::from_dataset(data);
    let f = |v: &[f64]| objective(map, &fit.plan, &patterns, &fit.forward, v);
    covariance_from_hessian(&hessian(&f, &fit.free_vector))
}

/// Gradient of `g` by central differences.
pub(crate) fn numeric_gradient(g: &dyn Fn(&[f64]) -> Option<f64>, x: &[f64]) -> Option<Vec<f64>> {
    let mut xp = x.to_vec();
    let mut out = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let h = 1e-6 * x[i].abs().max(1.0);
        xp[i] = x[i] + h;
        let up = g(&xp)?;
        xp[i] = x[i] - h;
        let dn = g(&xp)?;
        xp[i] = x[i];
        out.push((up - dn) / (2.0 * h));
    }
    Some(out)
}

pub(crate) fn quadratic_form(g: &[f64], cov: &[Vec<f64>]) -> f64 {
    g.iter()
        .enumerate()
        .map(|(i, gi)| gi * cov[i].iter().zip(g).map(|(c, gj)| c * gj).sum::<f64>())
        .sum()
}

/// Wald interval on the link scale of a quantity, mapped back.
pub(crate) fn link_interval(q: &Quantity, est: f64, se: f64) -> (f64, f64) {
    const Z: f64 = 1.959963984540054;
    if q.is_probability() {
        if est <= 0.0 || est >= 1.0 {
            return (est, est);
        }
        let s = se / (est * (1.0 - est));
        (expit(logit(est) - Z * s), expit(logit(est) + Z * s))
    } else {
        let s = se / est;
        ((est.ln() - Z * s).exp(), (est.ln() + Z * s).exp())
    }
}

fn estimates(map: &ParameterMap, x: &[f64], cov: Option<&Covariance>) -> Result<Vec<ParameterEstimate>> {
    let prm = map.unpack(x)?;
    Ok(map
        .quantities()
        .into_iter()
        .filter_map(|nq| {
            let estimate = nq.quantity.eval(&prm)?;
            let mut row = ParameterEstimate {
                name: nq.name,
                estimate,
                se: None,
                lower: None,
                upper: None,
            };
            if let Some(cov) = cov {
                let g = |v: &[f64]| map.unpack(v).ok().and_then(|p| nq.quantity.eval(&p));
                if let Some(grad) = numeric_gradient(&g, x) {
                    let se = quadratic_form(&grad, &cov.matrix).max(0.0).sqrt();
                    let (lo, hi) = link_interval(&nq.quantity, estimate, se);
                    row.se = Some(se);
                    row.lower = Some(lo);
                    row.upper = Some(hi);
                }
            }
            Some(row)
        })
        .collect())
}
