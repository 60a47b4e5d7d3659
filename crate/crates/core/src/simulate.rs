//! Synthetic capture-recapture-recovery data and replicate studies.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Geometric, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dwell::DwellSpec;
use crate::error::{Error, Result};
use crate::inference::{fit, FitOptions, ParameterEstimate, ParameterMap};
use crate::likelihood::{Dataset, EncounterHistory};
use crate::state_space::{AggregationPlan, ExpandedModel, ModelParams, ObservationSymbol, TrueState};

/// Largest number of simulated individuals spent on one dataset.
pub const MAX_ATTEMPTS: u64 = 10_000_000;

/// When individuals become available for capture.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntryPolicy {
    /// Everyone is alive at the first occasion; first capture is the first
    /// successful detection.
    #[default]
    AllAtFirstOccasion,
    /// Entry occasion uniform over the study.
    UniformEntry,
}

/// Time already spent in the state occupied at entry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntryAge {
    /// A new stay starts at entry.
    Fresh,
    /// Stay position drawn from the stationary expanded chain, remaining
    /// stay from the dwell law conditioned on that age.
    #[default]
    Equilibrium,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyDesign {
    pub n_individuals: usize,
    pub n_occasions: usize,
    pub truth: ModelParams,
    pub replicates: usize,
    pub seed: u64,
    #[serde(default)]
    pub entry_policy: EntryPolicy,
    #[serde(default)]
    pub entry_age: EntryAge,
    /// Aggregation used to find the stationary entry distribution.
    #[serde(default = "default_plan_epsilon")]
    pub epsilon: f64,
}

fn default_plan_epsilon() -> f64 {
    crate::dwell::DEFAULT_EPSILON
}

impl StudyDesign {
    pub fn new(truth: ModelParams, n_individuals: usize, replicates: usize, seed: u64) -> Self {
        StudyDesign {
            n_individuals,
            n_occasions: truth.n_occasions,
            truth,
            replicates,
            seed,
            entry_policy: EntryPolicy::default(),
            entry_age: EntryAge::default(),
            epsilon: crate::dwell::DEFAULT_EPSILON,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_individuals == 0 || self.n_occasions == 0 || self.replicates == 0 {
            return Err(Error::validation(
                "study design",
                "individuals, occasions and replicates must all be at least 1",
            ));
        }
        if self.truth.n_occasions != self.n_occasions {
            return Err(Error::validation(
                "study design",
                format!(
                    "truth covers {} occasions but the design has {}",
                    self.truth.n_occasions, self.n_occasions
                ),
            ));
        }
        self.truth.validate()
    }
}

/// Generator for one (seed, replicate, individual) stream.
pub fn stream_rng(seed: u64, replicate: u64, individual: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&replicate.to_le_bytes());
    key[16..24].copy_from_slice(&individual.to_le_bytes());
    ChaCha8Rng::from_seed(key)
}

/// Draws a dwell time (at least 1).
pub fn sample_dwell<R: Rng + ?Sized>(d: &DwellSpec, rng: &mut R) -> Result<u64> {
    Ok(match *d {
        DwellSpec::Geometric { theta } => {
            if theta >= 1.0 {
                1
            } else {
                Geometric::new(theta).map_err(|e| Error::Simulation(e.to_string()))?.sample(rng) + 1
            }
        }
        DwellSpec::ShiftedPoisson { mu } => {
            Poisson::new(mu).map_err(|e| Error::Simulation(e.to_string()))?.sample(rng) as u64 + 1
        }
        DwellSpec::ShiftedNegBinomial { nu, theta } => {
            if theta >= 1.0 {
                1
            } else {
                let lam = Gamma::new(nu, (1.0 - theta) / theta)
                    .map_err(|e| Error::Simulation(e.to_string()))?
                    .sample(rng);
                if lam <= 0.0 {
                    1
                } else {
                    Poisson::new(lam).map_err(|e| Error::Simulation(e.to_string()))?.sample(rng) as u64 + 1
                }
            }
        }
        DwellSpec::Tabulated { .. } => sample_dwell_at_least(d, 1, rng)?,
    })
}

/// Draws `D` conditioned on `D >= r` by inversion.
pub fn sample_dwell_at_least<R: Rng + ?Sized>(d: &DwellSpec, r: u64, rng: &mut R) -> Result<u64> {
    let survival = if r <= 1 { 1.0 } else { 1.0 - d.cdf(r - 1)? };
    if survival <= 0.0 {
        return Ok(r);
    }
    let u: f64 = rng.random::<f64>() * survival;
    let mut acc = 0.0;
    let mut m = r;
    loop {
        acc += d.pmf(m)?;
        if acc >= u || m > r + 100_000 {
            return Ok(m);
        }
        m += 1;
    }
}

/// Latent states of one simulated individual; `None` before entry.
#[derive(Debug, Clone, PartialEq)]
pub struct TruePath {
    pub entry: usize,
    pub states: Vec<Option<TrueState>>,
}

fn pick<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> usize {
    let total: f64 = weights.iter().sum();
    let u = rng.random::<f64>() * total;
    let mut acc = 0.0;
    for (i, w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return i;
        }
    }
    weights.iter().rposition(|w| *w > 0.0).unwrap_or(0)
}

/// Entry distribution over expanded live states, computed once per design.
#[derive(Debug, Clone)]
pub struct EntryTable {
    plan: AggregationPlan,
    /// `stationary[t]` over live expanded states.
    stationary: Vec<Vec<f64>>,
}

impl EntryTable {
    pub fn new(truth: &ModelParams, epsilon: f64) -> Result<Self> {
        let plan = crate::state_space::build_aggregation(&truth.dwell, epsilon, None, crate::dwell::DEFAULT_MAX_AGGREGATE)?;
        let model = ExpandedModel::new(truth, &plan)?;
        let stationary = (0..truth.n_occasions)
            .map(|t| model.stationary_restricted(t))
            .collect::<Result<Vec<_>>>()?;
        Ok(EntryTable { plan, stationary })
    }
}

/// Simulates one individual from `entry` onwards. Returns the latent path
/// and the history, or `None` when it was never captured alive.
pub fn simulate_individual<R: Rng + ?Sized>(
    truth: &ModelParams,
    entry_table: &EntryTable,
    entry: usize,
    entry_age: EntryAge,
    id: &str,
    rng: &mut R,
) -> Result<(TruePath, Option<EncounterHistory>)> {
    let n_occ = truth.n_occasions;
    let k_states = truth.n_states;
    let plan = &entry_table.plan;
    let pos = pick(&entry_table.stationary[entry], rng);
    let mut state = plan.state_of(pos).unwrap_or(0);
    let age = (pos - plan.offsets[state]) as u64 + 1;
    let mut remaining = match entry_age {
        EntryAge::Fresh => sample_dwell(&truth.dwell[state], rng)?,
        EntryAge::Equilibrium => sample_dwell_at_least(&truth.dwell[state], age, rng)? - age + 1,
    };
    let mut states = vec![None; n_occ];
    let mut symbols = vec![ObservationSymbol::Unseen; n_occ];
    let mut alive = true;
    for t in entry..n_occ {
        if alive {
            states[t] = Some(TrueState::Alive(state));
            if rng.random::<f64>() < truth.p[t][state] {
                symbols[t] = if rng.random::<f64>() < truth.alpha[t][state] {
                    ObservationSymbol::Seen(state)
                } else {
                    ObservationSymbol::SeenUnknown
                };
            }
        }
        if t + 1 == n_occ {
            break;
        }
        if !alive {
            states[t + 1] = Some(TrueState::LongDead);
            continue;
        }
        if rng.random::<f64>() >= truth.phi[t][state] {
            alive = false;
            states[t + 1] = Some(TrueState::RecentlyDead);
            if rng.random::<f64>() < truth.lambda[t + 1] {
                symbols[t + 1] = ObservationSymbol::RecoveredDead;
            }
            continue;
        }
        remaining -= 1;
        if remaining == 0 {
            if k_states > 1 {
                state = pick(&truth.psi_star[t][state], rng);
            }
            remaining = sample_dwell(&truth.dwell[state], rng)?;
        }
    }
    let path = TruePath { entry, states };
    let Some(first) = symbols.iter().position(|s| s.is_live_sighting()) else {
        return Ok((path, None));
    };
    // a recovery before first capture cannot happen: death ends sightings
    debug_assert!(symbols[..first].iter().all(|s| *s == ObservationSymbol::Unseen));
    let history = EncounterHistory::new(id, symbols, k_states)?;
    Ok((path, Some(history)))
}

/// One replicate dataset of exactly `n_individuals` first-captured
/// individuals, reproducible from `(seed, replicate)`.
pub fn simulate_dataset(design: &StudyDesign, replicate: usize) -> Result<Dataset> {
    design.validate()?;
    let table = EntryTable::new(&design.truth, design.epsilon)?;
    simulate_with_table(design, &table, replicate)
}

fn simulate_with_table(design: &StudyDesign, table: &EntryTable, replicate: usize) -> Result<Dataset> {
    let n = design.n_individuals;
    let n_occ = design.n_occasions;
    let mut kept: Vec<EncounterHistory> = Vec::with_capacity(n);
    let mut attempts: u64 = 0;
    let batch = (2 * n as u64).max(1024);
    while kept.len() < n {
        let lo = attempts;
        let hi = (attempts + batch).min(MAX_ATTEMPTS);
        if lo >= hi {
            return Err(Error::Simulation(format!(
                "only {} of {n} individuals captured after {MAX_ATTEMPTS} attempts",
                kept.len()
            )));
        }
        let found = (lo..hi)
            .into_par_iter()
            .map(|i| {
                let mut rng = stream_rng(design.seed, replicate as u64, i);
                let entry = match design.entry_policy {
                    EntryPolicy::AllAtFirstOccasion => 0,
                    EntryPolicy::UniformEntry => rng.random_range(0..n_occ),
                };
                simulate_individual(&design.truth, table, entry, design.entry_age, "", &mut rng)
                    .map(|(_, h)| h)
            })
            .collect::<Result<Vec<_>>>()?;
        attempts = hi;
        kept.extend(found.into_iter().flatten().take(n - kept.len()));
        // projected attempts needed at the observed retention rate
        if attempts >= 100_000 {
            let rate = kept.len() as f64 / attempts as f64;
            if rate == 0.0 || n as f64 / rate > MAX_ATTEMPTS as f64 {
                return Err(Error::Simulation(format!(
                    "retention rate {rate:.3e} needs more than {MAX_ATTEMPTS} simulated individuals"
                )));
            }
        }
    }
    let width = n.to_string().len();
    for (i, h) in kept.iter_mut().enumerate() {
        h.id = format!("r{replicate}i{:0width$}", i + 1);
    }
    Dataset::new(kept, n_occ, design.truth.n_states)
}

/// A fit-map under study.
#[derive(Debug, Clone)]
pub struct StudyMap {
    pub label: String,
    pub map: ParameterMap,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplicateFit {
    pub replicate: usize,
    pub map: String,
    pub loglik: f64,
    pub converged: bool,
    pub estimates: Vec<ParameterEstimate>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StudyRow {
    pub map: String,
    pub parameter: String,
    pub truth: f64,
    pub n: usize,
    /// Mean of `(estimate - truth) / truth`.
    pub mrb: f64,
    /// Standard deviation of the estimates across replicates.
    pub msd_sd: f64,
    /// Mean reported standard error.
    pub msd_se: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StudySummary {
    pub rows: Vec<StudyRow>,
    pub fits: Vec<ReplicateFit>,
    /// `(map, replicate, error)` for fits that failed.
    pub failures: Vec<(String, usize, String)>,
}

/// A fitted replicate, or (map, replicate, error) when the fit failed.
type MapOutcome = std::result::Result<ReplicateFit, (String, usize, String)>;

/// Simulates every replicate, fits every map, and summarises bias and
/// spread per parameter.
pub fn run_study(design: &StudyDesign, maps: &[StudyMap], opts: &FitOptions) -> Result<StudySummary> {
    design.validate()?;
    if maps.is_empty() {
        return Err(Error::Config("no fit maps".into()));
    }
    let table = EntryTable::new(&design.truth, design.epsilon)?;
    let per_replicate = (0..design.replicates)
        .into_par_iter()
        .map(|r| -> Result<Vec<MapOutcome>> {
            let data = simulate_with_table(design, &table, r)?;
            Ok(maps
                .iter()
                .map(|m| match fit(&data, &m.map, opts) {
                    Ok(f) => Ok(ReplicateFit {
                        replicate: r,
                        map: m.label.clone(),
                        loglik: f.loglik,
                        converged: f.converged,
                        estimates: f.estimates,
                    }),
                    Err(e) => Err((m.label.clone(), r, e.to_string())),
                })
                .collect())
        })
        .collect::<Result<Vec<_>>>()?;
    let mut fits = Vec::new();
    let mut failures = Vec::new();
    for outcome in per_replicate.into_iter().flatten() {
        match outcome {
            Ok(f) => fits.push(f),
            Err(e) => failures.push(e),
        }
    }
    let mut rows = Vec::new();
    for m in maps {
        for nq in m.map.quantities() {
            let Some(truth) = nq.quantity.eval(&design.truth) else {
                continue;
            };
            let mut est = Vec::new();
            let mut ses = Vec::new();
            for f in fits.iter().filter(|f| f.map == m.label) {
                if let Some(e) = f.estimates.iter().find(|e| e.name == nq.name) {
                    est.push(e.estimate);
                    if let Some(se) = e.se {
                        ses.push(se);
                    }
                }
            }
            if est.is_empty() {
                continue;
            }
            let n = est.len() as f64;
            let mean = est.iter().sum::<f64>() / n;
            let var = if est.len() > 1 {
                est.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
            } else {
                0.0
            };
            rows.push(StudyRow {
                map: m.label.clone(),
                parameter: nq.name.clone(),
                truth,
                n: est.len(),
                mrb: est.iter().map(|v| (v - truth) / truth).sum::<f64>() / n,
                msd_sd: var.sqrt(),
                msd_se: if ses.is_empty() {
                    f64::NAN
                } else {
                    ses.iter().sum::<f64>() / ses.len() as f64
                },
            });
        }
    }
    Ok(StudySummary { rows, fits, failures })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn truth(phi: f64, p: f64, lambda: f64) -> ModelParams {
        ModelParams::time_constant(
            6,
            &[phi, phi],
            &[vec![0.0, 1.0], vec![1.0, 0.0]],
            &[p, p],
            lambda,
            &[1.0, 1.0],
            vec![DwellSpec::shifted_poisson(2.0), DwellSpec::geometric(0.5)],
        )
    }

    #[test]
    fn perfect_detection_reveals_the_path() {
        let t = truth(1.0, 1.0, 0.0);
        let table = EntryTable::new(&t, 1e-6).unwrap();
        let mut rng = stream_rng(3, 0, 0);
        for _ in 0..50 {
            let (path, h) = simulate_individual(&t, &table, 0, EntryAge::Fresh, "a", &mut rng).unwrap();
            let h = h.unwrap();
            for (s, x) in path.states.iter().zip(&h.symbols) {
                match s {
                    Some(TrueState::Alive(k)) => assert_eq!(*x, ObservationSymbol::Seen(*k)),
                    _ => panic!("dead under phi = 1"),
                }
            }
        }
    }

    #[test]
    fn zero_survival_gives_single_sightings() {
        let t = truth(0.0, 1.0, 0.5);
        let design = StudyDesign::new(t, 40, 1, 9);
        let data = simulate_dataset(&design, 0).unwrap();
        for h in &data.histories {
            assert!(h.symbols[1..]
                .iter()
                .all(|s| matches!(s, ObservationSymbol::Unseen | ObservationSymbol::RecoveredDead)));
        }
    }

    #[test]
    fn deterministic_and_sized() {
        let design = StudyDesign::new(truth(0.8, 0.4, 0.2), 60, 2, 11);
        let a = simulate_dataset(&design, 1).unwrap();
        let b = simulate_dataset(&design, 1).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 60);
        assert_ne!(a, simulate_dataset(&design, 0).unwrap());
    }

    #[test]
    fn impossible_retention_is_an_error() {
        let design = StudyDesign::new(truth(0.8, 0.0, 0.0), 5, 1, 1);
        assert!(matches!(simulate_dataset(&design, 0), Err(Error::Simulation(_))));
    }

    #[test]
    fn bad_designs_rejected() {
        let mut d = StudyDesign::new(truth(0.8, 0.4, 0.2), 0, 1, 1);
        assert!(d.validate().is_err());
        d.n_individuals = 5;
        d.replicates = 0;
        assert!(d.validate().is_err());
    }
}
