//! Starting values from raw summaries of the data.

use serde::{Deserialize, Serialize};

use crate::dwell::DwellSpec;
use crate::inference::map::{ParameterMap, Structure};
use crate::likelihood::Dataset;
use crate::state_space::{ModelParams, ObservationSymbol};

/// Where the first optimiser start comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StartStrategy {
    /// Raw resighting, transition and recovery frequencies.
    #[default]
    Moments,
    /// The map's base parameters.
    Config,
}

#[derive(Debug, Default)]
struct Tallies {
    interior: f64,
    interior_seen: f64,
    resighted: f64,
    recovered: f64,
    known: f64,
    unknown: f64,
    /// `pairs[j][k]`: state `j` recorded at `t` and `k` at `t + 1`.
    pairs: Vec<Vec<f64>>,
    first: Vec<f64>,
}

fn tally(data: &Dataset) -> Tallies {
    let k_states = data.n_states;
    let mut s = Tallies {
        pairs: vec![vec![0.0; k_states]; k_states],
        first: vec![0.0; k_states],
        ..Default::default()
    };
    for h in &data.histories {
        let x = &h.symbols;
        let t0 = h.first;
        let last = (t0..x.len()).rev().find(|&t| x[t].is_live_sighting()).unwrap_or(t0);
        if last > t0 {
            s.resighted += 1.0;
        }
        s.interior += (last - t0).saturating_sub(1) as f64;
        s.interior_seen += x[t0 + 1..last.max(t0 + 1)]
            .iter()
            .filter(|v| v.is_live_sighting())
            .count() as f64;
        if x.contains(&ObservationSymbol::RecoveredDead) {
            s.recovered += 1.0;
        }
        if let ObservationSymbol::Seen(k) = x[t0] {
            s.first[k] += 1.0;
        }
        for sym in &x[t0..] {
            match sym {
                ObservationSymbol::Seen(_) => s.known += 1.0,
                ObservationSymbol::SeenUnknown => s.unknown += 1.0,
                _ => {}
            }
        }
        for w in x[t0..].windows(2) {
            if let (ObservationSymbol::Seen(j), ObservationSymbol::Seen(k)) = (w[0], w[1]) {
                s.pairs[j][k] += 1.0;
            }
        }
    }
    s
}

/// Natural-scale starting parameters: moment estimates for free families,
/// base values for fixed ones.
pub fn moment_start(data: &Dataset, map: &ParameterMap) -> ModelParams {
    let s = tally(data);
    let k_states = map.n_states();
    let n = data.len().max(1) as f64;
    let p_hat = if s.interior > 0.0 {
        (s.interior_seen / s.interior).clamp(0.05, 0.95)
    } else {
        0.5
    };
    let r = s.resighted / n;
    let phi_hat = (r / (p_hat + r * (1.0 - p_hat))).clamp(0.3, 0.95);
    let lambda_hat = (s.recovered / (n * (1.0 - phi_hat))).clamp(0.01, 0.9);
    let alpha_hat = if s.known + s.unknown > 0.0 {
        (s.known / (s.known + s.unknown)).clamp(0.5, 0.999)
    } else {
        0.9
    };
    let mut prm = map.base.clone();
    let fill = |table: &mut Vec<Vec<f64>>, structure: Structure, v: f64| {
        if !structure.is_fixed() {
            table.iter_mut().for_each(|row| row.fill(v));
        }
    };
    fill(&mut prm.phi, map.phi, phi_hat);
    fill(&mut prm.p, map.p, p_hat);
    fill(&mut prm.alpha, map.alpha, alpha_hat);
    if !map.lambda.is_fixed() {
        prm.lambda.fill(lambda_hat);
    }
    if k_states >= 3 && !map.psi.is_fixed() {
        for j in 0..k_states {
            let row: Vec<f64> = (0..k_states)
                .map(|k| if k == j { 0.0 } else { s.pairs[j][k] + 1.0 })
                .collect();
            let total: f64 = row.iter().sum();
            for psi_t in prm.psi_star.iter_mut() {
                for (k, v) in row.iter().enumerate() {
                    psi_t[j][k] = v / total;
                }
            }
        }
    }
    for k in 0..k_states {
        if !map.dwell_free[k] {
            continue;
        }
        let stays = s.pairs[k][k];
        let moves: f64 = s.pairs[k].iter().sum::<f64>() - stays;
        let theta = if stays + moves > 0.0 {
            ((moves + 0.5) / (stays + moves + 1.0)).clamp(0.05, 0.95)
        } else {
            0.3
        };
        prm.dwell[k] = match &prm.dwell[k] {
            DwellSpec::Geometric { .. } => DwellSpec::Geometric { theta },
            DwellSpec::ShiftedPoisson { .. } => DwellSpec::ShiftedPoisson {
                mu: (1.0 / theta - 1.0).max(0.5),
            },
            // same mean as the geometric guess, less dispersed
            DwellSpec::ShiftedNegBinomial { .. } => DwellSpec::ShiftedNegBinomial {
                nu: 3.0,
                theta: 3.0 / (3.0 + 1.0 / theta - 1.0),
            },
            other => other.clone(),
        };
    }
    if map.init_free {
        let total: f64 = s.first.iter().map(|v| v + 1.0).sum();
        prm.init_extra = Some(s.first.iter().map(|v| (v + 1.0) / total).collect());
    }
    prm
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::likelihood::EncounterHistory;
    use ObservationSymbol::*;

    #[test]
    fn raw_rates() {
        let h = |id: &str, v: Vec<ObservationSymbol>| EncounterHistory::new(id, v, 2).unwrap();
        let data = Dataset::new(
            vec![
                h("a", vec![Seen(0), Unseen, Seen(0), Seen(1)]),
                h("b", vec![Seen(1), Seen(1), Unseen, Unseen]),
                h("c", vec![Unseen, Seen(0), RecoveredDead, Unseen]),
            ],
            4,
            2,
        )
        .unwrap();
        let base = ModelParams::time_constant(
            4,
            &[0.5, 0.5],
            &[vec![0.0, 1.0], vec![1.0, 0.0]],
            &[0.5, 0.5],
            0.5,
            &[1.0, 1.0],
            vec![DwellSpec::geometric(0.5), DwellSpec::shifted_poisson(2.0)],
        );
        let c = Structure::Constant;
        let map = ParameterMap::new(base, c, c, c, Structure::Fixed(None), Structure::Fixed(None), vec![true; 2], false)
            .unwrap();
        let prm = moment_start(&data, &map);
        // interior occasions: a has t=1,2 (one seen); b none
        assert!((prm.p[1][0] - 0.5).abs() < 1e-12);
        assert_eq!(prm.alpha[1][0], 1.0);
        // state 1: one move, no stays
        assert!(matches!(prm.dwell[0], DwellSpec::Geometric { theta } if (theta - 0.75).abs() < 1e-12));
    }
}
