#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use smas::dwell::DwellSpec;
use smas::likelihood::EncounterHistory;
use smas::state_space::{AggregationPlan, ModelParams, ObservationSymbol};

pub use ObservationSymbol::{RecoveredDead as D, SeenUnknown as U, Unseen as Z};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn prob<R: Rng>(rng: &mut R) -> f64 {
    rng.random_range(0.05..0.95)
}

fn psi_rows<R: Rng>(rng: &mut R, k: usize) -> Vec<Vec<f64>> {
    (0..k)
        .map(|j| {
            let w: Vec<f64> = (0..k)
                .map(|i| if i == j { 0.0 } else { rng.random_range(0.1..1.0) })
                .collect();
            let s: f64 = w.iter().sum();
            w.iter().map(|v| if s > 0.0 { v / s } else { 0.0 }).collect()
        })
        .collect()
}

pub fn random_dwell<R: Rng>(rng: &mut R) -> DwellSpec {
    match rng.random_range(0..4) {
        0 => DwellSpec::geometric(prob(rng)),
        1 => DwellSpec::shifted_poisson(rng.random_range(0.3..5.0)),
        2 => DwellSpec::shifted_neg_binomial(rng.random_range(0.5..5.0), prob(rng)),
        _ => {
            let n = rng.random_range(1..5);
            let w: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..1.0)).collect();
            let s: f64 = w.iter().sum();
            DwellSpec::tabulated(w.iter().map(|v| v / s).collect())
        }
    }
}

/// Time-varying parameters with random values everywhere.
pub fn random_params<R: Rng>(rng: &mut R, k: usize, t: usize, dwell: Vec<DwellSpec>) -> ModelParams {
    let row = |rng: &mut R| (0..k).map(|_| prob(rng)).collect::<Vec<_>>();
    ModelParams {
        n_states: k,
        n_occasions: t,
        phi: (0..t).map(|_| row(rng)).collect(),
        psi_star: (0..t).map(|_| psi_rows(rng, k)).collect(),
        p: (0..t).map(|_| row(rng)).collect(),
        lambda: (0..t).map(|_| prob(rng)).collect(),
        alpha: (0..t).map(|_| row(rng)).collect(),
        dwell,
        init_mode: Default::default(),
        init_extra: None,
    }
}

/// A valid history: leading zeros, a live first capture, then random
/// symbols with at most one recovery followed by zeros.
pub fn random_history<R: Rng>(rng: &mut R, k: usize, t: usize) -> EncounterHistory {
    let t0 = rng.random_range(0..t.min(2));
    let mut x = vec![Z; t];
    x[t0] = if rng.random_bool(0.8) {
        ObservationSymbol::Seen(rng.random_range(0..k))
    } else {
        U
    };
    let mut t1 = t0 + 1;
    while t1 < t {
        x[t1] = match rng.random_range(0..10) {
            0..=3 => Z,
            4..=6 => ObservationSymbol::Seen(rng.random_range(0..k)),
            7 | 8 => U,
            _ => {
                x[t1] = D;
                break;
            }
        };
        t1 += 1;
    }
    EncounterHistory::new("h", x, k).unwrap()
}

/// Small instance for exhaustive enumeration: at most 8 live expanded
/// states (10 with the two dead states) and at most 6 transitions.
pub fn random_instance(seed: u64) -> (ModelParams, AggregationPlan, EncounterHistory) {
    let mut rng = rng(seed);
    let k = rng.random_range(1..=3);
    let t = rng.random_range(2..=7);
    let dwell: Vec<DwellSpec> = (0..k).map(|_| random_dwell(&mut rng)).collect();
    let budget = 8 / k;
    let sizes: Vec<usize> = dwell
        .iter()
        .map(|d| match d.exact_size() {
            Some(a) if a <= budget => a,
            _ => rng.random_range(1..=budget),
        })
        .collect();
    let plan = AggregationPlan::from_sizes(sizes).unwrap();
    let prm = random_params(&mut rng, k, t, dwell);
    let h = random_history(&mut rng, k, t);
    (prm, plan, h)
}

/// First-order transition matrix from geometric dwell rates and the
/// conditional transition matrix.
pub fn first_order_psi(prm: &ModelParams, t: usize) -> Vec<Vec<f64>> {
    let k = prm.n_states;
    (0..k)
        .map(|j| {
            let theta = match prm.dwell[j] {
                DwellSpec::Geometric { theta } => theta,
                _ => panic!("first-order oracle needs geometric dwell laws"),
            };
            (0..k)
                .map(|i| {
                    if k == 1 {
                        1.0
                    } else if i == j {
                        1.0 - theta
                    } else {
                        theta * prm.psi_star[t][j][i]
                    }
                })
                .collect()
        })
        .collect()
}

fn power_stationary(m: &[Vec<f64>]) -> Vec<f64> {
    let k = m.len();
    let mut v = vec![1.0 / k as f64; k];
    for _ in 0..1_000_000 {
        let mut w = vec![0.0; k];
        for (j, vj) in v.iter().enumerate() {
            for (i, wi) in w.iter_mut().enumerate() {
                *wi += vj * m[j][i];
            }
        }
        let delta: f64 = w.iter().zip(&v).map(|(a, b)| (a - b).abs()).sum();
        v = w;
        if delta < 1e-17 {
            break;
        }
    }
    v
}

/// Arnason-Schwarz likelihood over `K` live states plus "dead this
/// interval" and "dead earlier", written without any expansion.
pub fn first_order_loglik(h: &EncounterHistory, prm: &ModelParams) -> f64 {
    let k = prm.n_states;
    let x = &h.symbols;
    let t0 = h.first;
    let mut v = vec![0.0; k + 2];
    match x[t0] {
        ObservationSymbol::Seen(s) => v[s] = 1.0,
        _ => v[..k].copy_from_slice(&power_stationary(&first_order_psi(prm, t0))),
    }
    for t in t0..x.len() - 1 {
        let g = first_order_psi(prm, t);
        let mut w = vec![0.0; k + 2];
        for j in 0..k {
            let phi = prm.phi[t][j];
            for i in 0..k {
                w[i] += v[j] * phi * g[j][i];
            }
            w[k] += v[j] * (1.0 - phi);
        }
        w[k + 1] = v[k] + v[k + 1];
        let s = t + 1;
        for (i, wi) in w.iter_mut().enumerate() {
            let like = if i < k {
                let (p, a) = (prm.p[s][i], prm.alpha[s][i]);
                match x[s] {
                    ObservationSymbol::Unseen => 1.0 - p,
                    ObservationSymbol::Seen(o) if o == i => p * a,
                    ObservationSymbol::Seen(_) => 0.0,
                    ObservationSymbol::SeenUnknown => p * (1.0 - a),
                    ObservationSymbol::RecoveredDead => 0.0,
                }
            } else if i == k {
                match x[s] {
                    ObservationSymbol::Unseen => 1.0 - prm.lambda[s],
                    ObservationSymbol::RecoveredDead => prm.lambda[s],
                    _ => 0.0,
                }
            } else if x[s] == ObservationSymbol::Unseen {
                1.0
            } else {
                0.0
            };
            *wi *= like;
        }
        v = w;
    }
    v.iter().sum::<f64>().ln()
}

/// The three-state design with heterogeneous dwell laws.
pub fn three_state_truth(n_occasions: usize) -> ModelParams {
    ModelParams::time_constant(
        n_occasions,
        &[0.8, 0.9, 0.6],
        &[vec![0.0, 0.6, 0.4], vec![0.8, 0.0, 0.2], vec![0.5, 0.5, 0.0]],
        &[0.2, 0.1, 0.5],
        0.2,
        &[1.0, 1.0, 1.0],
        vec![
            DwellSpec::shifted_neg_binomial(4.0, 0.4),
            DwellSpec::shifted_poisson(4.0),
            DwellSpec::geometric(0.4),
        ],
    )
}
