//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs as a plain binary so the report is visible under `cargo test`.
//! Set `SMAS_BLESS=1` to rewrite the golden selection table and
//! `SMAS_CRITERIA=1,2,3` to run a subset (7 needs 4; 9 needs 1-6).

mod common;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use common::*;
use rand::Rng;
use smas::dwell::DwellSpec;
use smas::inference::{
    dwell_pmf_ci, fit, model_select, stationary_summary, Candidate, FitOptions, ParameterMap, SelectionTable,
};
use smas::io::{report, write_histories, ModelConfig};
use smas::likelihood::{brute_force_loglik, joint_loglik, Dataset, ForwardOptions};
use smas::simulate::{run_study, simulate_dataset, StudyDesign, StudyMap, StudySummary};
use smas::state_space::{build_aggregation, AggregationPlan, ExpandedModel, ModelParams};

const T: usize = 20;
const STUDY_SEED: u64 = 7;

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Outcome {
            pass,
            detail: detail.into(),
        }
    }
}

fn config(name: &str) -> ModelConfig {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name);
    ModelConfig::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

/// Fits in the study criteria use the moment start alone.
fn study_options() -> FitOptions {
    FitOptions {
        n_starts: 1,
        ..Default::default()
    }
}

fn bits(v: &[f64]) -> Vec<u64> {
    v.iter().map(|x| x.to_bits()).collect()
}

// 1 --------------------------------------------------------------------

fn oracle_values() -> (Vec<f64>, Vec<f64>, usize, usize) {
    let mut forward = Vec::new();
    let mut brute = Vec::new();
    let (mut unknown, mut dead) = (0, 0);
    for seed in 0..200 {
        let (prm, plan, h) = random_instance(seed);
        assert!(plan.total <= 10 && h.symbols.len() - h.first <= 7);
        unknown += h.symbols.contains(&U) as usize;
        dead += h.symbols.contains(&D) as usize;
        let model = ExpandedModel::new(&prm, &plan).unwrap();
        forward.push(model.forward_loglik(&h, &ForwardOptions::default()).unwrap());
        brute.push(brute_force_loglik(&h, &prm, &plan).unwrap());
    }
    (forward, brute, unknown, dead)
}

fn criterion_1() -> (Outcome, Vec<f64>) {
    let (forward, brute, unknown, dead) = oracle_values();
    let worst = forward
        .iter()
        .zip(&brute)
        .map(|(a, b)| if a == b { 0.0 } else { (a - b).abs() })
        .fold(0.0, f64::max);
    let finite = forward.iter().filter(|v| v.is_finite()).count();
    let pass = worst <= 1e-10 && unknown > 0 && dead > 0;
    let detail = format!(
        "200 instances ({finite} possible, {unknown} with u, {dead} with D), max |forward - brute| = {worst:.2e}"
    );
    (Outcome::new(pass, detail), forward)
}

// 2 --------------------------------------------------------------------

fn reduction_values() -> Vec<(f64, f64)> {
    (0..50u64)
        .map(|seed| {
            let mut r = rng(seed + 500);
            let k = r.random_range(1..=3);
            let t = r.random_range(5..=10);
            let dwell = (0..k).map(|_| DwellSpec::geometric(r.random_range(0.05..0.95))).collect();
            let prm = random_params(&mut r, k, t, dwell);
            let data = simulate_dataset(&StudyDesign::new(prm.clone(), 40, 1, seed), 0).unwrap();
            let plan = AggregationPlan::from_sizes(vec![1; k]).unwrap();
            let engine = joint_loglik(&data, &prm, &plan, &ForwardOptions::default()).unwrap().total;
            let oracle: f64 = data.histories.iter().map(|h| first_order_loglik(h, &prm)).sum();
            (engine, oracle)
        })
        .collect()
}

fn criterion_2() -> (Outcome, Vec<f64>) {
    let v = reduction_values();
    let worst = v.iter().map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let pass = worst <= 1e-12 && v.iter().all(|(a, _)| a.is_finite());
    (
        Outcome::new(pass, format!("50 datasets, max |semi-Markov - first-order| = {worst:.2e}")),
        v.iter().map(|p| p.0).collect(),
    )
}

// 3 --------------------------------------------------------------------

/// First-passage probabilities out of an aggregate, from the matrix alone.
fn first_passage(d: &DwellSpec, r_max: usize) -> (Vec<f64>, usize) {
    let prm = ModelParams::time_constant(2, &[1.0], &[vec![0.0]], &[0.5], 0.1, &[1.0], vec![d.clone()]);
    let plan = build_aggregation(&prm.dwell, 1e-6, None, 200).unwrap();
    let model = ExpandedModel::new(&prm, &plan).unwrap();
    let b = model.diag_block(0, (Z, Z));
    let a = b.nrows();
    let exit: Vec<f64> = (0..a).map(|i| 1.0 - b.row(i).sum()).collect();
    let mut v = vec![0.0; a];
    v[0] = 1.0;
    let mut out = Vec::with_capacity(r_max);
    for _ in 0..r_max {
        out.push(v.iter().zip(&exit).map(|(x, e)| x * e).sum());
        let mut w = vec![0.0; a];
        for i in 0..a {
            for j in 0..a {
                w[j] += v[i] * b[(i, j)];
            }
        }
        v = w;
    }
    (out, a)
}

fn criterion_3() -> (Outcome, Vec<f64>) {
    let mut worst_head: f64 = 0.0;
    let mut worst_tail: f64 = 0.0;
    let mut sizes = Vec::new();
    let mut all = Vec::new();
    for d in [DwellSpec::shifted_neg_binomial(4.0, 0.4), DwellSpec::shifted_poisson(4.0)] {
        let (f, a) = first_passage(&d, 200);
        let (f, a) = if a + 11 > f.len() { first_passage(&d, a + 11) } else { (f, a) };
        sizes.push(a);
        for r in 1..=a {
            worst_head = worst_head.max((f[r - 1] - d.pmf(r as u64).unwrap()).abs());
        }
        let ratio = 1.0 - d.hazard(a as u64).unwrap();
        for r in a..a + 10 {
            worst_tail = worst_tail.max((f[r] / f[r - 1] - ratio).abs());
        }
        all.extend(f);
    }
    let pass = worst_head <= 1e-12 && worst_tail <= 1e-12;
    let detail = format!(
        "a = {sizes:?}, max |first passage - d(r)| = {worst_head:.2e}, max |tail ratio - (1 - c(a))| = {worst_tail:.2e}"
    );
    (Outcome::new(pass, detail), all)
}

// 4 and 7 --------------------------------------------------------------

fn three_state_study(replicates: usize) -> StudySummary {
    let cfg = config("sim3.json");
    let truth = cfg.params(T).unwrap();
    let design = StudyDesign::new(truth, 500, replicates, STUDY_SEED);
    let maps = [
        StudyMap {
            label: "semi-Markov".into(),
            map: cfg.parameter_map(T).unwrap(),
        },
        StudyMap {
            label: "first-order".into(),
            map: cfg.first_order().parameter_map(T).unwrap(),
        },
    ];
    run_study(&design, &maps, &study_options()).unwrap()
}

fn row<'a>(s: &'a StudySummary, map: &str, name: &str) -> &'a smas::simulate::StudyRow {
    s.rows
        .iter()
        .find(|r| r.map == map && r.parameter == name)
        .unwrap_or_else(|| panic!("no {name} under {map}"))
}

const PHI: [&str; 3] = ["phi(1)", "phi(2)", "phi(3)"];
const PSI: [&str; 6] = ["psi(1,2)", "psi(1,3)", "psi(2,1)", "psi(2,3)", "psi(3,1)", "psi(3,2)"];

fn criterion_4(s: &StudySummary) -> Outcome {
    let sm = |n: &str| row(s, "semi-Markov", n).mrb;
    let fo = |n: &str| row(s, "first-order", n).mrb;
    let phi_worst = PHI.iter().map(|n| sm(n).abs()).fold(0.0, f64::max);
    let psi_worst = PSI.iter().map(|n| sm(n).abs()).fold(0.0, f64::max);
    let signs = (fo("psi(1,2)"), fo("psi(2,1)"), fo("psi(3,1)"));
    let pass = phi_worst <= 0.03
        && psi_worst <= 0.06
        && signs.0 > 0.0
        && signs.1 > 0.0
        && signs.2 < 0.0
        && signs.0.abs() >= 0.08;
    let unconverged = s.fits.iter().filter(|f| !f.converged).count();
    let detail = format!(
        "n = {}, semi-Markov max|MRB| phi {phi_worst:.3} psi {psi_worst:.3}; first-order MRB psi(1,2) {:+.3} psi(2,1) {:+.3} psi(3,1) {:+.3}; {} failed, {unconverged} unconverged fits",
        row(s, "semi-Markov", "phi(1)").n,
        signs.0,
        signs.1,
        signs.2,
        s.failures.len()
    );
    Outcome::new(pass, detail)
}

fn criterion_7(s: &StudySummary) -> Outcome {
    let ratios: Vec<(&str, f64)> = PHI
        .iter()
        .chain(PSI.iter())
        .map(|n| {
            let r = row(s, "semi-Markov", n);
            (*n, r.msd_sd / r.msd_se)
        })
        .collect();
    let pass = ratios.iter().all(|(_, v)| (0.8..=1.25).contains(v));
    let detail = ratios
        .iter()
        .map(|(n, v)| format!("{n} {v:.2}"))
        .collect::<Vec<_>>()
        .join(", ");
    Outcome::new(pass, format!("SD/SE: {detail}"))
}

// 5 --------------------------------------------------------------------

fn large_sample_study(replicates: usize) -> StudySummary {
    large_sample_study_with(replicates, false)
}

/// With `caught_first` everyone is detected at the first occasion, so the
/// stationary start at first capture is exact. Diagnostic only.
fn large_sample_study_with(replicates: usize, caught_first: bool) -> StudySummary {
    let cfg = config("sim3.json");
    let mut truth = cfg.params(T).unwrap();
    if caught_first {
        truth.p[0].iter_mut().for_each(|v| *v = 1.0);
    }
    let design = StudyDesign::new(truth, 5000, replicates, STUDY_SEED + 1);
    let maps = [StudyMap {
        label: "semi-Markov".into(),
        map: cfg.parameter_map(T).unwrap(),
    }];
    let opts = FitOptions {
        covariance: false,
        ..study_options()
    };
    run_study(&design, &maps, &opts).unwrap()
}

fn p_mrb(s: &StudySummary) -> Vec<f64> {
    ["p(1)", "p(2)", "p(3)"]
        .iter()
        .map(|n| row(s, "semi-Markov", n).mrb)
        .collect()
}

fn criterion_5(s: &StudySummary, caught_first: &StudySummary) -> Outcome {
    let mrb = p_mrb(s);
    let pass = mrb.iter().all(|v| v.abs() <= 0.02);
    let exact = p_mrb(caught_first);
    let detail = format!(
        "n = {}, MRB p(1) {:+.4} p(2) {:+.4} p(3) {:+.4} [all caught at occasion 1, not scored: {:+.4} {:+.4} {:+.4}]",
        row(s, "semi-Markov", "p(1)").n,
        mrb[0],
        mrb[1],
        mrb[2],
        exact[0],
        exact[1],
        exact[2]
    );
    Outcome::new(pass, detail)
}

// 6 --------------------------------------------------------------------

const GRID: [&str; 4] = [
    "two_state_geom_geom.json",
    "two_state_geom_snb.json",
    "two_state_snb_geom.json",
    "two_state_snb_snb.json",
];

fn candidates(n_occasions: usize) -> Vec<Candidate> {
    GRID.iter()
        .map(|name| {
            let cfg = config(name);
            Candidate {
                label: cfg.display_label(),
                map: cfg.parameter_map(n_occasions).unwrap(),
            }
        })
        .collect()
}

fn selection_replicate(replicate: usize) -> SelectionTable {
    let truth = config("two_state_snb_geom.json").params(T).unwrap();
    let design = StudyDesign::new(truth, 2000, 20, STUDY_SEED + 2);
    let data = simulate_dataset(&design, replicate).unwrap();
    model_select(&data, &candidates(T), &study_options()).unwrap()
}

fn criterion_6(tables: &[SelectionTable]) -> Outcome {
    let truth = config("two_state_snb_geom.json").display_label();
    let hits = tables
        .iter()
        .filter(|t| t.best().is_some_and(|b| b.label == truth))
        .count();
    let mut wins: Vec<String> = Vec::new();
    for c in candidates(T) {
        let n = tables
            .iter()
            .filter(|t| t.best().is_some_and(|b| b.label == c.label))
            .count();
        wins.push(format!("{} {n}", c.label));
    }
    let pass = hits * 100 >= 60 * tables.len();
    Outcome::new(
        pass,
        format!("truth {truth} selected in {hits}/{} ({})", tables.len(), wins.join(", ")),
    )
}

// 8 --------------------------------------------------------------------

fn golden_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden/select.txt")
}

fn small_two_state_data() -> Dataset {
    let truth = config("two_state_snb_geom.json").params(12).unwrap();
    simulate_dataset(&StudyDesign::new(truth, 300, 1, 3), 0).unwrap()
}

fn criterion_8() -> Outcome {
    let data = small_two_state_data();
    let mut notes = Vec::new();
    let mut pass = true;
    let mut worst_residual: f64 = 0.0;
    let opts = FitOptions {
        n_starts: 2,
        ..Default::default()
    };
    let mut maps: Vec<ParameterMap> = GRID.iter().map(|n| config(n).parameter_map(12).unwrap()).collect();
    // a map with one dwell law held fixed
    let mut held = maps[2].clone();
    held.dwell_free = vec![true, false];
    maps.push(held);
    for map in &maps {
        let f = fit(&data, map, &opts).unwrap();
        worst_residual = worst_residual.max(stationary_summary(&f).unwrap().residual);
        for k in 0..map.n_states() {
            for r in dwell_pmf_ci(&f, map, k, 20).unwrap() {
                if !(r.lower <= r.d && r.d <= r.upper) {
                    pass = false;
                    notes.push(format!("state {} r {} out of order", k + 1, r.r));
                }
                if !map.dwell_free[k] && r.lower != r.upper {
                    pass = false;
                    notes.push(format!("fixed state {} has width", k + 1));
                }
            }
        }
    }
    pass &= worst_residual <= 1e-12;
    let table = model_select(&data, &candidates(12), &opts).unwrap();
    if table.rows.iter().any(|r| r.error.is_some()) {
        pass = false;
        notes.push("a candidate failed to fit".into());
    }
    let text = report::selection_text(&table);
    let path = golden_path();
    if std::env::var_os("SMAS_BLESS").is_some() {
        std::fs::create_dir_all(path.parent().unwrap()).unwrap();
        std::fs::write(&path, &text).unwrap();
    }
    let golden = std::fs::read(&path).unwrap_or_default();
    let same = golden == text.as_bytes();
    let shape = text.lines().count() == 5 && text.starts_with("State 1");
    pass &= same && shape;
    if !same {
        notes.push(format!("select output differs from {}", path.display()));
    }
    let detail = format!(
        "{} fits, max stationary residual {worst_residual:.2e}, dwell CIs {}, golden select table {}{}",
        maps.len(),
        if notes.iter().any(|n| n.contains("state")) { "bad" } else { "ordered" },
        if same { "identical" } else { "different" },
        if notes.is_empty() { String::new() } else { format!(" [{}]", notes.join("; ")) }
    );
    Outcome::new(pass, detail)
}

// 9 --------------------------------------------------------------------

fn fits_json(s: &StudySummary, replicates: usize) -> String {
    let subset: Vec<_> = s.fits.iter().filter(|f| f.replicate < replicates).collect();
    serde_json::to_string(&subset).unwrap()
}

struct Firsts<'a> {
    c1: &'a [f64],
    c2: &'a [f64],
    c3: &'a [f64],
    c4: &'a StudySummary,
    c5: &'a StudySummary,
    c6: &'a [SelectionTable],
}

fn criterion_9(first: &Firsts) -> Outcome {
    let mut same = Vec::new();
    same.push(("1", bits(first.c1) == bits(&criterion_1().1)));
    same.push(("2", bits(first.c2) == bits(&criterion_2().1)));
    same.push(("3", bits(first.c3) == bits(&criterion_3().1)));
    let cfg = config("sim3.json");
    let data = |seed| write_histories(&simulate_dataset(&StudyDesign::new(cfg.params(T).unwrap(), 500, 2, seed), 1).unwrap());
    same.push(("data", data(STUDY_SEED) == data(STUDY_SEED)));
    same.push(("4", fits_json(first.c4, 2) == fits_json(&three_state_study(2), 2)));
    same.push(("5", fits_json(first.c5, 1) == fits_json(&large_sample_study(1), 1)));
    same.push((
        "6",
        report::selection_text(&first.c6[0]) == report::selection_text(&selection_replicate(0))
            && report::selection_csv(&first.c6[0]) == report::selection_csv(&selection_replicate(0)),
    ));
    let pass = same.iter().all(|(_, s)| *s);
    let detail = same
        .iter()
        .map(|(n, s)| format!("{n} {}", if *s { "identical" } else { "DIFFERENT" }))
        .collect::<Vec<_>>()
        .join(", ");
    Outcome::new(
        pass,
        format!("{detail} (4: replicates 0-1 re-fitted, 5: replicate 0, 6: replicate 0)"),
    )
}

fn report_line(n: usize, title: &str, o: &Outcome, started: Instant) -> bool {
    println!(
        "criterion {n} {:<30} {}  ({:.1}s) {}",
        title,
        if o.pass { "PASS" } else { "FAIL" },
        started.elapsed().as_secs_f64(),
        o.detail
    );
    o.pass
}

fn main() -> ExitCode {
    // `cargo test -- --list` and filters other than ours skip the suite
    let args: Vec<String> = std::env::args().skip(1).collect();
    if args.iter().any(|a| a == "--list") {
        println!("acceptance: test");
        return ExitCode::SUCCESS;
    }
    if args.iter().any(|a| !a.starts_with('-') && !"acceptance".contains(a.as_str())) {
        return ExitCode::SUCCESS;
    }
    let only: Option<Vec<usize>> = std::env::var("SMAS_CRITERIA")
        .ok()
        .map(|v| v.split(',').filter_map(|x| x.trim().parse().ok()).collect());
    let wanted = |n: usize| only.as_ref().is_none_or(|o| o.contains(&n));
    println!("\nrunning acceptance criteria");
    let mut ok = true;

    let (mut c1, mut c2, mut c3, mut c4, mut c5, mut c6) = (None, None, None, None, None, None);
    if wanted(1) {
        let t = Instant::now();
        let (o, v) = criterion_1();
        ok &= report_line(1, "oracle equivalence", &o, t);
        c1 = Some(v);
    }
    if wanted(2) {
        let t = Instant::now();
        let (o, v) = criterion_2();
        ok &= report_line(2, "Markov reduction", &o, t);
        c2 = Some(v);
    }
    if wanted(3) {
        let t = Instant::now();
        let (o, v) = criterion_3();
        ok &= report_line(3, "dwell-law fidelity", &o, t);
        c3 = Some(v);
    }
    if wanted(4) || wanted(7) {
        let t = Instant::now();
        let s = three_state_study(100);
        ok &= report_line(4, "three-state recovery", &criterion_4(&s), t);
        c4 = Some(s);
    }
    if wanted(5) {
        let t = Instant::now();
        let s = large_sample_study(20);
        let diag = large_sample_study_with(20, true);
        ok &= report_line(5, "recapture small-sample bias", &criterion_5(&s, &diag), t);
        c5 = Some(s);
    }
    if wanted(6) {
        let t = Instant::now();
        let tables: Vec<SelectionTable> = (0..20).map(selection_replicate).collect();
        ok &= report_line(6, "AIC identification", &criterion_6(&tables), t);
        c6 = Some(tables);
    }
    if let Some(s) = c4.as_ref().filter(|_| wanted(7)) {
        let t = Instant::now();
        ok &= report_line(7, "information calibration", &criterion_7(s), t);
    }
    if wanted(8) {
        let t = Instant::now();
        ok &= report_line(8, "stationary, CIs, select format", &criterion_8(), t);
    }
    if let (true, Some(c1), Some(c2), Some(c3), Some(c4), Some(c5), Some(c6)) = (wanted(9), &c1, &c2, &c3, &c4, &c5, &c6) {
        let t = Instant::now();
        let firsts = Firsts { c1, c2, c3, c4, c5, c6 };
        ok &= report_line(9, "determinism", &criterion_9(&firsts), t);
    }

    if ok {
        println!("acceptance: all criteria PASS\n");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: FAIL\n");
        ExitCode::FAILURE
    }
}
