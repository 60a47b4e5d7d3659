use rayon::prelude::*;

use crate::error::Result;
use crate::likelihood::{Dataset, EncounterHistory, Patterns};
use crate::state_space::{AggregationPlan, ExpandedModel, InitOptions, ModelParams, ObservationSymbol};

/// Where the observation matrix sits relative to each transition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ProductOrder {
    /// `pi (Gamma_t Q_{t+1}(x_{t+1}))...`: each transition is followed by the
    /// observation made at the occasion it lands on.
    #[default]
    Generative,
    /// `pi (Gamma_t Q_t(x_t))...`: the observation index lags the transition,
    /// exactly as the product is usually typeset. Kept for comparison only.
    Literal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ForwardOptions {
    pub order: ProductOrder,
    pub init: InitOptions,
    /// Renormalise the forward vector every this many steps.
    pub scale_every: usize,
}

impl Default for ForwardOptions {
    fn default() -> Self {
        ForwardOptions {
            order: ProductOrder::Generative,
            init: InitOptions::default(),
            scale_every: 1,
        }
    }
}

impl ExpandedModel<'_> {
    /// `out = v * Gamma_t(pair)` using the block structure directly.
    ///
    /// Equivalent to the dense product with [`ExpandedModel::build_tpm`] but
    /// linear in the number of expanded states.
    pub fn apply_transition(
        &self,
        t: usize,
        pair: (ObservationSymbol, ObservationSymbol),
        v: &[f64],
        out: &mut [f64],
        exits: &mut [f64],
    ) {
        let plan = self.plan;
        let k_states = self.n_states();
        out.fill(0.0);
        let death_open = pair.1.admits_death();
        let mut dying = 0.0;
        for j in 0..k_states {
            let phi = self.params.phi[t][j];
            let off = plan.offsets[j];
            let a = plan.sizes[j];
            let c = &self.hazards[j];
            let stay = Self::stay_open(j, pair);
            let mut exit = 0.0;
            let mut mass = 0.0;
            for r in 0..a {
                let m = v[off + r];
                if m == 0.0 {
                    continue;
                }
                mass += m;
                let live = m * phi;
                if stay {
                    let dest = if r + 1 < a { off + r + 1 } else { off + a - 1 };
                    out[dest] += live * (1.0 - c[r]);
                }
                exit += live * c[r];
            }
            exits[j] = exit;
            if death_open {
                dying += mass * (1.0 - phi);
            }
        }
        for j in 0..k_states {
            if exits[j] == 0.0 {
                continue;
            }
            for k in 0..k_states {
                if Self::move_open(j, k, pair) {
                    let w = self.exit_weight(j, k, t);
                    if w != 0.0 {
                        out[plan.offsets[k]] += w * exits[j];
                    }
                }
            }
        }
        out[plan.recently_dead()] = dying;
        out[plan.long_dead()] = v[plan.recently_dead()] + v[plan.long_dead()];
    }

    /// Multiplies `v` in place by the observation diagonal for `x` at `t`.
    pub fn apply_observation(&self, t: usize, x: ObservationSymbol, v: &mut [f64]) {
        let plan = self.plan;
        let prm = self.params;
        match x {
            ObservationSymbol::Unseen => {
                for k in 0..self.n_states() {
                    let q = 1.0 - prm.p[t][k];
                    v[plan.aggregate(k)].iter_mut().for_each(|m| *m *= q);
                }
                v[plan.recently_dead()] *= 1.0 - prm.lambda[t];
            }
            ObservationSymbol::Seen(s) => {
                for k in 0..self.n_states() {
                    let q = if k == s { prm.p[t][k] * prm.alpha[t][k] } else { 0.0 };
                    v[plan.aggregate(k)].iter_mut().for_each(|m| *m *= q);
                }
                v[plan.recently_dead()] = 0.0;
                v[plan.long_dead()] = 0.0;
            }
            ObservationSymbol::SeenUnknown => {
                for k in 0..self.n_states() {
                    let q = prm.p[t][k] * (1.0 - prm.alpha[t][k]);
                    v[plan.aggregate(k)].iter_mut().for_each(|m| *m *= q);
                }
                v[plan.recently_dead()] = 0.0;
                v[plan.long_dead()] = 0.0;
            }
            ObservationSymbol::RecoveredDead => {
                let keep = v[plan.recently_dead()] * prm.lambda[t];
                v.fill(0.0);
                v[plan.recently_dead()] = keep;
            }
        }
    }

    /// Log-likelihood of one history conditional on its first capture.
    /// Impossible histories give `-inf`.
    pub fn forward_loglik(&self, history: &EncounterHistory, opts: &ForwardOptions) -> Result<f64> {
        let t0 = history.first;
        let x = &history.symbols;
        let n = x.len();
        let mut v = self.initial_distribution(x[t0], t0, opts.init)?;
        let mut next = vec![0.0; v.len()];
        let mut exits = vec![0.0; self.n_states()];
        let every = opts.scale_every.max(1);
        let mut log_scale = 0.0;
        for (step, t) in (t0..n - 1).enumerate() {
            self.apply_transition(t, (x[t], x[t + 1]), &v, &mut next, &mut exits);
            match opts.order {
                ProductOrder::Generative => self.apply_observation(t + 1, x[t + 1], &mut next),
                ProductOrder::Literal => self.apply_observation(t, x[t], &mut next),
            }
            std::mem::swap(&mut v, &mut next);
            if (step + 1) % every == 0 {
                let s: f64 = v.iter().sum();
                if !(s > 0.0) {
                    return Ok(f64::NEG_INFINITY);
                }
                v.iter_mut().for_each(|m| *m /= s);
                log_scale += s.ln();
            }
        }
        let s: f64 = v.iter().sum();
        if !(s > 0.0) {
            return Ok(f64::NEG_INFINITY);
        }
        Ok(log_scale + s.ln())
    }

    /// The same product evaluated with dense matrices from
    /// [`ExpandedModel::build_tpm`] and [`ExpandedModel::build_obs_matrix`].
    pub fn forward_loglik_dense(&self, history: &EncounterHistory, opts: &ForwardOptions) -> Result<f64> {
        use nalgebra::RowDVector;
        let t0 = history.first;
        let x = &history.symbols;
        let mut v = RowDVector::from_vec(self.initial_distribution(x[t0], t0, opts.init)?);
        let mut log_scale = 0.0;
        for t in t0..x.len() - 1 {
            let q = match opts.order {
                ProductOrder::Generative => self.build_obs_matrix(t + 1, x[t + 1]),
                ProductOrder::Literal => self.build_obs_matrix(t, x[t]),
            };
            v = v * self.build_tpm(t, x[t], x[t + 1]) * q;
            let s = v.sum();
            if !(s > 0.0) {
                return Ok(f64::NEG_INFINITY);
            }
            v /= s;
            log_scale += s.ln();
        }
        Ok(log_scale)
    }
}

/// Log-likelihood of one history.
pub fn forward_loglik_individual(
    history: &EncounterHistory,
    params: &ModelParams,
    plan: &AggregationPlan,
) -> Result<f64> {
    ExpandedModel::new(params, plan)?.forward_loglik(history, &ForwardOptions::default())
}

/// Joint log-likelihood with per-individual terms.
#[derive(Debug, Clone, PartialEq)]
pub struct JointLogLik {
    pub total: f64,
    pub per_individual: Vec<f64>,
    /// Ids of histories with zero probability under the parameters.
    pub impossible: Vec<String>,
}

impl JointLogLik {
    pub fn is_finite(&self) -> bool {
        self.total.is_finite()
    }
}

/// Sum of individual log-likelihoods, reduced in history order.
pub fn joint_loglik(
    data: &Dataset,
    params: &ModelParams,
    plan: &AggregationPlan,
    opts: &ForwardOptions,
) -> Result<JointLogLik> {
    let model = ExpandedModel::new(params, plan)?;
    let per_individual = data
        .histories
        .par_iter()
        .map(|h| model.forward_loglik(h, opts))
        .collect::<Result<Vec<_>>>()?;
    let impossible: Vec<String> = data
        .histories
        .iter()
        .zip(&per_individual)
        .filter(|(_, l)| l.is_infinite())
        .map(|(h, _)| h.id.clone())
        .collect();
    let total = if impossible.is_empty() {
        per_individual.iter().sum()
    } else {
        f64::NEG_INFINITY
    };
    Ok(JointLogLik {
        total,
        per_individual,
        impossible,
    })
}

/// Joint log-likelihood over distinct histories weighted by multiplicity.
pub fn pattern_loglik(model: &ExpandedModel, patterns: &Patterns, opts: &ForwardOptions) -> Result<f64> {
    let terms = patterns
        .rows
        .par_iter()
        .map(|h| model.forward_loglik(h, opts))
        .collect::<Result<Vec<_>>>()?;
    let mut total = 0.0;
    for (l, n) in terms.iter().zip(&patterns.counts) {
        if *l == f64::NEG_INFINITY {
            return Ok(f64::NEG_INFINITY);
        }
        total += n * l;
    }
    Ok(total)
}
