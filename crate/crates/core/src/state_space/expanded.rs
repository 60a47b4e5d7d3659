//! The expanded-state hidden Markov representation.
//!
//! Each covariate state `k` becomes an aggregate of `a_k` Markov states. Inside
//! an aggregate the chain walks one position forward per occasion, staying at
//! the last position once it is reached, and leaves from position `r` with the
//! dwell hazard `c_k(r)`. Leaving always enters the first position of the
//! destination aggregate, chosen by `psi_star`.

use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};

use crate::dwell::HazardTable;
use crate::error::{Error, Result};
use crate::state_space::{AggregationPlan, InitMode, ModelParams, ObservationSymbol};

/// Parameters, plan and the hazard tables they imply, ready for building
/// matrices or running the forward recursion.
#[derive(Debug, Clone)]
pub struct ExpandedModel<'a> {
    pub params: &'a ModelParams,
    pub plan: &'a AggregationPlan,
    /// `hazards[k][r - 1] = c_k(r)` for `r = 1..=a_k`.
    pub hazards: Vec<Vec<f64>>,
    stationary: Vec<OnceLock<std::result::Result<Vec<f64>, String>>>,
}

/// Options for the first-capture distribution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InitOptions {
    /// Renormalise the stationary vector after restricting it to the
    /// observed aggregate.
    pub normalize: bool,
}

impl Default for InitOptions {
    fn default() -> Self {
        InitOptions { normalize: true }
    }
}

impl<'a> ExpandedModel<'a> {
    pub fn new(params: &'a ModelParams, plan: &'a AggregationPlan) -> Result<Self> {
        params.validate()?;
        if plan.n_states() != params.n_states {
            return Err(Error::validation(
                "aggregation plan",
                format!(
                    "plan has {} aggregates for {} states",
                    plan.n_states(),
                    params.n_states
                ),
            ));
        }
        let hazards = params
            .dwell
            .iter()
            .zip(&plan.sizes)
            .map(|(d, &a)| HazardTable::compute(d, a))
            .collect();
        Ok(ExpandedModel {
            params,
            plan,
            hazards,
            stationary: (0..params.n_occasions).map(|_| OnceLock::new()).collect(),
        })
    }

    pub fn n_states(&self) -> usize {
        self.params.n_states
    }

    /// Is the self-transition block of state `k` open for this pair?
    pub fn stay_open(k: usize, pair: (ObservationSymbol, ObservationSymbol)) -> bool {
        pair.0.admits_live(k) && pair.1.admits_live(k)
    }

    /// Is the transition block `j -> k` open for this pair?
    pub fn move_open(j: usize, k: usize, pair: (ObservationSymbol, ObservationSymbol)) -> bool {
        pair.0.admits_live(j) && pair.1.admits_live(k)
    }

    /// Leading diagonal block: superdiagonal `1 - c_k(r)` and the self-loop
    /// `1 - c_k(a_k)` in the bottom-right corner.
    pub fn diag_block(
        &self,
        k: usize,
        pair: (ObservationSymbol, ObservationSymbol),
    ) -> DMatrix<f64> {
        let a = self.plan.sizes[k];
        let mut m = DMatrix::zeros(a, a);
        if !Self::stay_open(k, pair) {
            return m;
        }
        let c = &self.hazards[k];
        for r in 0..a - 1 {
            m[(r, r + 1)] = 1.0 - c[r];
        }
        m[(a - 1, a - 1)] = 1.0 - c[a - 1];
        m
    }

    /// Off-diagonal block `j -> k`: first column `psi*_t(j,k) c_j(r)`.
    ///
    /// With a single state the exit mass has nowhere else to go and renews
    /// the stay, which is this block with `j == k` and `psi* = 1`.
    pub fn offdiag_block(
        &self,
        j: usize,
        k: usize,
        t: usize,
        pair: (ObservationSymbol, ObservationSymbol),
    ) -> DMatrix<f64> {
        let (aj, ak) = (self.plan.sizes[j], self.plan.sizes[k]);
        let mut m = DMatrix::zeros(aj, ak);
        if !Self::move_open(j, k, pair) {
            return m;
        }
        let weight = self.exit_weight(j, k, t);
        if weight == 0.0 {
            return m;
        }
        for r in 0..aj {
            m[(r, 0)] = weight * self.hazards[j][r];
        }
        m
    }

    /// Probability of entering `k` given `j` is left at the end of `t`.
    pub fn exit_weight(&self, j: usize, k: usize, t: usize) -> f64 {
        if self.n_states() == 1 {
            1.0
        } else if j == k {
            0.0
        } else {
            self.params.psi_star[t][j][k]
        }
    }

    /// Full masked transition matrix for the interval `t -> t+1`.
    pub fn build_tpm(&self, t: usize, x_t: ObservationSymbol, x_next: ObservationSymbol) -> DMatrix<f64> {
        let plan = self.plan;
        let pair = (x_t, x_next);
        let mut m = DMatrix::zeros(plan.total, plan.total);
        let death_open = x_next.admits_death();
        for j in 0..self.n_states() {
            let phi = self.params.phi[t][j];
            let rows = plan.aggregate(j);
            for k in 0..self.n_states() {
                let cols = plan.aggregate(k);
                let mut block = if j == k {
                    self.diag_block(k, pair)
                } else {
                    self.offdiag_block(j, k, t, pair)
                };
                if j == k && self.n_states() == 1 {
                    block += self.offdiag_block(j, k, t, pair);
                }
                m.view_mut((rows.start, cols.start), (rows.len(), cols.len()))
                    .copy_from(&(block * phi));
            }
            if death_open {
                for r in rows {
                    m[(r, plan.recently_dead())] = 1.0 - phi;
                }
            }
        }
        m[(plan.recently_dead(), plan.long_dead())] = 1.0;
        m[(plan.long_dead(), plan.long_dead())] = 1.0;
        m
    }

    /// Diagonal of the observation matrix for symbol `x` at occasion `t`.
    pub fn obs_diagonal(&self, t: usize, x: ObservationSymbol) -> Vec<f64> {
        let plan = self.plan;
        let prm = self.params;
        let mut d = vec![0.0; plan.total];
        match x {
            ObservationSymbol::Unseen => {
                for k in 0..self.n_states() {
                    let v = 1.0 - prm.p[t][k];
                    d[plan.aggregate(k)].fill(v);
                }
                d[plan.recently_dead()] = 1.0 - prm.lambda[t];
                d[plan.long_dead()] = 1.0;
            }
            ObservationSymbol::Seen(k) => {
                d[plan.aggregate(k)].fill(prm.p[t][k] * prm.alpha[t][k]);
            }
            ObservationSymbol::SeenUnknown => {
                for k in 0..self.n_states() {
                    d[plan.aggregate(k)].fill(prm.p[t][k] * (1.0 - prm.alpha[t][k]));
                }
            }
            ObservationSymbol::RecoveredDead => {
                d[plan.recently_dead()] = prm.lambda[t];
            }
        }
        d
    }

    pub fn build_obs_matrix(&self, t: usize, x: ObservationSymbol) -> DMatrix<f64> {
        DMatrix::from_diagonal(&DVector::from_vec(self.obs_diagonal(t, x)))
    }

    /// Unmasked alive-only chain over the live expanded states, without
    /// survival factors.
    pub fn restricted_matrix(&self, t: usize) -> DMatrix<f64> {
        let open = (ObservationSymbol::Unseen, ObservationSymbol::Unseen);
        let n = self.plan.live_len();
        let mut m = DMatrix::zeros(n, n);
        for j in 0..self.n_states() {
            let rows = self.plan.aggregate(j);
            for k in 0..self.n_states() {
                let cols = self.plan.aggregate(k);
                let mut block = if j == k {
                    self.diag_block(k, open)
                } else {
                    self.offdiag_block(j, k, t, open)
                };
                if j == k && self.n_states() == 1 {
                    block += self.offdiag_block(j, k, t, open);
                }
                m.view_mut((rows.start, cols.start), (rows.len(), cols.len()))
                    .copy_from(&block);
            }
        }
        m
    }

    /// Stationary distribution of the restricted chain at occasion `t`.
    ///
    /// Solves `pi (G - I) = 0` with one balance equation replaced by
    /// `sum(pi) = 1`, then applies one round of iterative refinement.
    pub fn stationary_restricted(&self, t: usize) -> Result<Vec<f64>> {
        match self.stationary.get(t) {
            Some(cell) => cell
                .get_or_init(|| {
                    self.solve_stationary(t).map_err(|e| match e {
                        Error::Singular(m) => m,
                        other => other.to_string(),
                    })
                })
                .clone()
                .map_err(Error::Singular),
            None => self.solve_stationary(t),
        }
    }

    fn solve_stationary(&self, t: usize) -> Result<Vec<f64>> {
        let g = self.restricted_matrix(t);
        let n = g.nrows();
        let mut a = g.transpose() - DMatrix::<f64>::identity(n, n);
        for c in 0..n {
            a[(n - 1, c)] = 1.0;
        }
        let mut b = DVector::zeros(n);
        b[n - 1] = 1.0;
        let lu = a.clone().lu();
        let mut x = lu.solve(&b).ok_or_else(|| {
            Error::Singular(format!(
                "restricted chain at occasion {} has no unique stationary distribution",
                t + 1
            ))
        })?;
        let resid = &b - &a * &x;
        if let Some(dx) = lu.solve(&resid) {
            x += dx;
        }
        if x.iter().any(|v| !v.is_finite() || *v < -1e-9) {
            return Err(Error::Singular(format!(
                "restricted chain at occasion {} is reducible (negative stationary mass)",
                t + 1
            )));
        }
        let mut pi: Vec<f64> = x.iter().map(|v| v.max(0.0)).collect();
        let s: f64 = pi.iter().sum();
        pi.iter_mut().for_each(|v| *v /= s);
        Ok(pi)
    }

    /// Stationary weights within aggregate `k` alone: proportional to the
    /// probability of still being in the stay at each position.
    pub fn within_aggregate_weights(&self, k: usize) -> Result<Vec<f64>> {
        let c = &self.hazards[k];
        let a = c.len();
        let mut w = Vec::with_capacity(a);
        let mut stay = 1.0;
        for (r, &cr) in c.iter().enumerate() {
            if r + 1 < a {
                w.push(stay);
                stay *= 1.0 - cr;
            } else if cr > 0.0 {
                w.push(stay / cr);
            } else {
                return Err(Error::Singular(format!(
                    "aggregate {} never exits its last position",
                    k + 1
                )));
            }
        }
        let s: f64 = w.iter().sum();
        if !(s > 0.0 && s.is_finite()) {
            return Err(Error::Singular(format!("aggregate {} has no mass", k + 1)));
        }
        Ok(w.into_iter().map(|v| v / s).collect())
    }

    /// Distribution over expanded states at first capture.
    pub fn initial_distribution(
        &self,
        first: ObservationSymbol,
        t0: usize,
        opts: InitOptions,
    ) -> Result<Vec<f64>> {
        let plan = self.plan;
        let mut out = vec![0.0; plan.total];
        let observed = match first {
            ObservationSymbol::Seen(k) if k < self.n_states() => Some(k),
            ObservationSymbol::Seen(k) => {
                return Err(Error::validation(
                    "initial distribution",
                    format!("state {} out of range", k + 1),
                ))
            }
            ObservationSymbol::SeenUnknown => None,
            other => {
                return Err(Error::validation(
                    "initial distribution",
                    format!("first capture must be a live sighting, got {other}"),
                ))
            }
        };
        match self.params.init_mode {
            InitMode::StationaryConditional => {
                let pi = self.stationary_restricted(t0)?;
                match observed {
                    Some(k) => {
                        let range = plan.aggregate(k);
                        let mass: f64 = pi[range.clone()].iter().sum();
                        for i in range {
                            out[i] = if opts.normalize { pi[i] / mass } else { pi[i] };
                        }
                    }
                    None => out[..plan.live_len()].copy_from_slice(&pi),
                }
            }
            InitMode::EstimatedTopLevel => {
                let top = self.params.init_extra.as_ref().ok_or_else(|| {
                    Error::validation("initial distribution", "init_extra missing")
                })?;
                for k in 0..self.n_states() {
                    if observed.is_some_and(|o| o != k) {
                        continue;
                    }
                    let w = self.within_aggregate_weights(k)?;
                    for (i, wi) in plan.aggregate(k).zip(w) {
                        out[i] = top[k] * wi;
                    }
                }
            }
            InitMode::ConditionalOnObserved => match observed {
                Some(k) => {
                    let w = self.within_aggregate_weights(k)?;
                    for (i, wi) in plan.aggregate(k).zip(w) {
                        out[i] = wi;
                    }
                }
                None => {
                    let pi = self.stationary_restricted(t0)?;
                    out[..plan.live_len()].copy_from_slice(&pi);
                }
            },
        }
        Ok(out)
    }

    /// State-level marginal of the restricted stationary distribution.
    pub fn stationary_states(&self, t: usize) -> Result<Vec<f64>> {
        let pi = self.stationary_restricted(t)?;
        Ok((0..self.n_states())
            .map(|k| pi[self.plan.aggregate(k)].iter().sum())
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dwell::DwellSpec;
    use ObservationSymbol::*;

    fn two_state(d1: DwellSpec, d2: DwellSpec) -> ModelParams {
        ModelParams::time_constant(
            5,
            &[0.8, 0.7],
            &[vec![0.0, 1.0], vec![1.0, 0.0]],
            &[0.3, 0.4],
            0.2,
            &[1.0, 1.0],
            vec![d1, d2],
        )
    }

    fn assert_mat(m: &DMatrix<f64>, rows: &[&[f64]]) {
        assert_eq!(m.nrows(), rows.len());
        for (i, row) in rows.iter().enumerate() {
            assert_eq!(m.ncols(), row.len());
            for (j, v) in row.iter().enumerate() {
                assert!((m[(i, j)] - v).abs() < 1e-15, "({i},{j}) {} vs {v}", m[(i, j)]);
            }
        }
    }

    #[test]
    fn geometric_diag_block() {
        let prm = two_state(DwellSpec::geometric(0.4), DwellSpec::geometric(0.5));
        let plan = AggregationPlan::from_sizes(vec![1, 1]).unwrap();
        let em = ExpandedModel::new(&prm, &plan).unwrap();
        assert_mat(&em.diag_block(0, (Unseen, Unseen)), &[&[0.6]]);
        assert_mat(&em.diag_block(0, (Seen(1), Seen(0))), &[&[0.0]]);
    }

    #[test]
    fn two_point_table_diag_block() {
        let prm = two_state(
            DwellSpec::tabulated(vec![0.5, 0.5]),
            DwellSpec::geometric(0.5),
        );
        let plan = AggregationPlan::from_sizes(vec![2, 3]).unwrap();
        let em = ExpandedModel::new(&prm, &plan).unwrap();
        assert_mat(&em.diag_block(0, (Unseen, Unseen)), &[&[0.0, 0.5], &[0.0, 0.0]]);
    }

    #[test]
    fn offdiag_blocks() {
        let mut prm = ModelParams::time_constant(
            4,
            &[0.9, 0.9, 0.9],
            &[
                vec![0.0, 0.6, 0.4],
                vec![0.5, 0.0, 0.5],
                vec![0.5, 0.5, 0.0],
            ],
            &[0.5; 3],
            0.1,
            &[1.0; 3],
            vec![
                DwellSpec::tabulated(vec![0.5, 0.5]),
                DwellSpec::geometric(0.3),
                DwellSpec::geometric(0.3),
            ],
        );
        let plan = AggregationPlan::from_sizes(vec![2, 3, 1]).unwrap();
        let em = ExpandedModel::new(&prm, &plan).unwrap();
        assert_mat(
            &em.offdiag_block(0, 1, 0, (Unseen, Unseen)),
            &[&[0.3, 0.0, 0.0], &[0.6, 0.0, 0.0]],
        );
        assert_mat(
            &em.offdiag_block(0, 1, 0, (Seen(1), Seen(0))),
            &[&[0.0, 0.0, 0.0], &[0.0, 0.0, 0.0]],
        );
        prm.dwell[0] = DwellSpec::geometric(0.4);
        let plan1 = AggregationPlan::from_sizes(vec![1, 1, 1]).unwrap();
        let em = ExpandedModel::new(&prm, &plan1).unwrap();
        assert_mat(&em.offdiag_block(0, 1, 0, (Unseen, Unseen)), &[&[0.24]]);
    }

    #[test]
    fn single_state_reduces_to_cjs() {
        let prm = ModelParams::time_constant(
            3,
            &[0.7],
            &[vec![0.0]],
            &[0.2],
            0.2,
            &[1.0],
            vec![DwellSpec::geometric(0.4)],
        );
        let plan = AggregationPlan::from_sizes(vec![1]).unwrap();
        let em = ExpandedModel::new(&prm, &plan).unwrap();
        let m = em.build_tpm(0, Unseen, Unseen);
        assert_mat(&m, &[&[0.7, 0.3, 0.0], &[0.0, 0.0, 1.0], &[0.0, 0.0, 1.0]]);
        let q = em.build_obs_matrix(0, Unseen);
        assert_mat(&q, &[&[0.8, 0.0, 0.0], &[0.0, 0.8, 0.0], &[0.0, 0.0, 1.0]]);
    }

    #[test]
    fn seen_pair_leaves_single_block() {
        let prm = two_state(
            DwellSpec::shifted_neg_binomial(3.0, 0.4),
            DwellSpec::shifted_poisson(2.0),
        );
        let plan = AggregationPlan::from_sizes(vec![4, 3]).unwrap();
        let em = ExpandedModel::new(&prm, &plan).unwrap();
        let m = em.build_tpm(0, Seen(0), Seen(1));
        let live = plan.live_len();
        for i in 0..live {
            for j in 0..live {
                let inside = plan.aggregate(0).contains(&i) && plan.aggregate(1).contains(&j);
                if !inside {
                    assert_eq!(m[(i, j)], 0.0);
                }
            }
            assert_eq!(m[(i, plan.recently_dead())], 0.0);
        }
    }

    #[test]
    fn unmasked_rows_are_stochastic() {
        let prm = two_state(
            DwellSpec::shifted_neg_binomial(3.0, 0.4),
            DwellSpec::shifted_poisson(2.0),
        );
        let plan = AggregationPlan::from_sizes(vec![6, 4]).unwrap();
        let em = ExpandedModel::new(&prm, &plan).unwrap();
        let m = em.build_tpm(1, Unseen, Unseen);
        for i in 0..plan.total {
            let s: f64 = m.row(i).iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn observation_matrices() {
        let mut prm = two_state(DwellSpec::geometric(0.4), DwellSpec::geometric(0.5));
        prm.p = vec![vec![0.3, 0.1]; 5];
        prm.alpha = vec![vec![1.0, 0.9]; 5];
        let plan = AggregationPlan::from_sizes(vec![1, 3]).unwrap();
        let em = ExpandedModel::new(&prm, &plan).unwrap();
        let d = em.obs_diagonal(2, Seen(1));
        let want = [0.0, 0.09, 0.09, 0.09, 0.0, 0.0];
        for (a, b) in d.iter().zip(want) {
            assert!((a - b).abs() < 1e-15);
        }
        prm.alpha = vec![vec![1.0, 1.0]; 5];
        let em = ExpandedModel::new(&prm, &plan).unwrap();
        assert!(em.obs_diagonal(0, SeenUnknown).iter().all(|v| *v == 0.0));
    }

    #[test]
    fn symmetric_stationary() {
        let prm = two_state(DwellSpec::geometric(0.3), DwellSpec::geometric(0.3));
        let plan = AggregationPlan::from_sizes(vec![1, 1]).unwrap();
        let em = ExpandedModel::new(&prm, &plan).unwrap();
        let pi = em.stationary_restricted(0).unwrap();
        assert!((pi[0] - 0.5).abs() < 1e-14 && (pi[1] - 0.5).abs() < 1e-14);
    }

    #[test]
    fn single_state_stationary_is_within_aggregate_shape() {
        let prm = ModelParams::time_constant(
            3,
            &[0.7],
            &[vec![0.0]],
            &[0.2],
            0.2,
            &[1.0],
            vec![DwellSpec::shifted_poisson(3.0)],
        );
        let plan = AggregationPlan::from_sizes(vec![12]).unwrap();
        let em = ExpandedModel::new(&prm, &plan).unwrap();
        let pi = em.stationary_restricted(0).unwrap();
        let w = em.within_aggregate_weights(0).unwrap();
        assert!((pi.iter().sum::<f64>() - 1.0).abs() < 1e-14);
        for (a, b) in pi.iter().zip(&w) {
            assert!((a - b).abs() < 1e-13);
        }
    }

    #[test]
    fn initial_distributions() {
        let mut prm = two_state(
            DwellSpec::shifted_neg_binomial(3.0, 0.4),
            DwellSpec::geometric(0.3),
        );
        let plan = AggregationPlan::from_sizes(vec![5, 1]).unwrap();
        let opts = InitOptions::default();

        prm.init_mode = InitMode::ConditionalOnObserved;
        let unit_plan = AggregationPlan::from_sizes(vec![1, 1]).unwrap();
        let geo = two_state(DwellSpec::geometric(0.2), DwellSpec::geometric(0.3))
            .with_init(InitMode::ConditionalOnObserved, None);
        let em = ExpandedModel::new(&geo, &unit_plan).unwrap();
        assert_eq!(
            em.initial_distribution(Seen(1), 0, opts).unwrap(),
            vec![0.0, 1.0, 0.0, 0.0]
        );

        let em = ExpandedModel::new(&prm, &plan).unwrap();
        let cond = em.initial_distribution(Seen(0), 0, opts).unwrap();
        prm.init_mode = InitMode::StationaryConditional;
        let em = ExpandedModel::new(&prm, &plan).unwrap();
        let stat = em.initial_distribution(Seen(0), 0, opts).unwrap();
        for (a, b) in cond.iter().zip(&stat) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!((stat.iter().sum::<f64>() - 1.0).abs() < 1e-14);
        let raw = em
            .initial_distribution(Seen(0), 0, InitOptions { normalize: false })
            .unwrap();
        let pi = em.stationary_restricted(0).unwrap();
        assert_eq!(&raw[..5], &pi[..5]);
        assert!(em.initial_distribution(RecoveredDead, 0, opts).is_err());

        let prm = prm.with_init(InitMode::EstimatedTopLevel, Some(vec![0.95, 0.05]));
        let em = ExpandedModel::new(&prm, &plan).unwrap();
        let full = em.initial_distribution(SeenUnknown, 0, opts).unwrap();
        let w1 = em.within_aggregate_weights(0).unwrap();
        for i in 0..5 {
            assert!((full[i] - 0.95 * w1[i]).abs() < 1e-15);
        }
        assert!((full[5] - 0.05).abs() < 1e-15);
        assert!((full.iter().sum::<f64>() - 1.0).abs() < 1e-14);
    }
}
