use std::path::Path;

use anyhow::{bail, Context, Result};
use smas::inference::{self, dwell_pmf_ci, model_select, stationary_summary, Candidate, FitOptions};
use smas::io::{self, report, ModelConfig, ParseOptions};
use smas::likelihood::Dataset;
use smas::simulate::{self, EntryAge, EntryPolicy, StudyDesign, StudyMap};
use smas::state_space::{ExpandedModel, ObservationSymbol};

use crate::output::{sidecar, write_atomic};
use crate::{DumpArgs, Entry, EntryAgeArg, FitArgs, FitFlags, SelectArgs, SimulateArgs, StudyArgs};

pub enum Status {
    Done,
    NotConverged,
}

/// 2 for bad flags or configuration, 3 for unreadable data and failures
/// while running.
pub fn exit_code(e: &anyhow::Error) -> u8 {
    match e.chain().find_map(|c| c.downcast_ref::<smas::Error>()) {
        Some(
            smas::Error::Config(_)
            | smas::Error::Validation { .. }
            | smas::Error::Domain(_)
            | smas::Error::Io(_),
        ) => 2,
        _ => 3,
    }
}

fn load_config(path: &Path) -> Result<ModelConfig> {
    Ok(ModelConfig::load(path)?)
}

fn load_data(path: &Path, config: &ModelConfig) -> Result<Dataset> {
    let opts = ParseOptions {
        n_states: Some(config.n_states),
        n_occasions: config.n_occasions,
        unknown_alias: None,
    };
    io::parse_histories(path, &opts).with_context(|| format!("reading {}", path.display()))
}

fn fit_options(config: &ModelConfig, flags: &FitFlags) -> Result<FitOptions> {
    let mut opts = config.fit_options();
    if let Some(n) = flags.starts {
        if n == 0 {
            return Err(smas::Error::Config("--starts must be at least 1".into()).into());
        }
        opts.n_starts = n;
    }
    if let Some(eps) = flags.epsilon {
        if !(0.0..1.0).contains(&eps) {
            return Err(smas::Error::Config("--epsilon must lie in [0, 1)".into()).into());
        }
        opts.aggregation.epsilon = eps;
    }
    if let Some(m) = flags.max_agg {
        if m == 0 {
            return Err(smas::Error::Config("--max-agg must be positive".into()).into());
        }
        opts.aggregation.max_size = m;
    }
    if let Some(s) = flags.seed {
        opts.seed = s;
    }
    Ok(opts)
}

fn entry(e: Entry, a: EntryAgeArg) -> (EntryPolicy, EntryAge) {
    (
        match e {
            Entry::All => EntryPolicy::AllAtFirstOccasion,
            Entry::Uniform => EntryPolicy::UniformEntry,
        },
        match a {
            EntryAgeArg::Fresh => EntryAge::Fresh,
            EntryAgeArg::Equilibrium => EntryAge::Equilibrium,
        },
    )
}

pub fn simulate(a: &SimulateArgs, quiet: bool) -> Result<Status> {
    let config = load_config(&a.config)?;
    let t = match a.t {
        Some(t) => config.occasions(Some(t))?,
        None => config.occasions(None)?,
    };
    let truth = config.params(t)?;
    let (entry_policy, entry_age) = entry(a.entry, a.entry_age);
    let design = StudyDesign {
        n_individuals: a.n,
        n_occasions: t,
        truth,
        replicates: 1,
        seed: a.seed,
        entry_policy,
        entry_age,
        epsilon: config.aggregation.epsilon,
    };
    design.validate()?;
    let data = simulate::simulate_dataset(&design, a.replicate)?;
    write_atomic(&a.out, &io::write_histories(&data))?;
    let truth_path = sidecar(&a.out, ".truth.json");
    write_atomic(&truth_path, &(serde_json::to_string_pretty(&design.truth)? + "\n"))?;
    if !quiet {
        println!("wrote {} histories to {}", data.len(), a.out.display());
        println!("wrote truth to {}", truth_path.display());
    }
    Ok(Status::Done)
}

pub fn fit(a: &FitArgs, quiet: bool) -> Result<Status> {
    let config = load_config(&a.config)?;
    let data = load_data(&a.data, &config)?;
    let t = config.occasions(Some(data.n_occasions))?;
    let map = config.parameter_map(t)?;
    let opts = fit_options(&config, &a.flags)?;
    let result = inference::fit(&data, &map, &opts)?;
    let stationary = stationary_summary(&result).ok();
    let dwell = (0..map.n_states())
        .map(|k| dwell_pmf_ci(&result, &map, k, a.r_max).map(|rows| (k, rows)))
        .collect::<smas::Result<Vec<_>>>()?;
    write_atomic(&a.out, &(report::fit_json(&result, stationary.as_ref(), &dwell) + "\n"))?;
    let text = report::fit_text(&result, stationary.as_ref(), &dwell);
    write_atomic(&sidecar(&a.out, ".txt"), &text)?;
    write_atomic(&sidecar(&a.out, ".dwell.csv"), &report::dwell_ci_csv(&dwell))?;
    if !quiet {
        print!("{text}");
    }
    Ok(if result.converged {
        Status::Done
    } else {
        Status::NotConverged
    })
}

pub fn select(a: &SelectArgs, quiet: bool) -> Result<Status> {
    let configs = a
        .config
        .iter()
        .map(|p| load_config(p).map(|c| (p, c)))
        .collect::<Result<Vec<_>>>()?;
    let (_, first) = &configs[0];
    if let Some((p, _)) = configs.iter().find(|(_, c)| c.n_states != first.n_states) {
        return Err(smas::Error::Config(format!("{} has a different number of states", p.display())).into());
    }
    let data = load_data(&a.data, first)?;
    let candidates = configs
        .iter()
        .map(|(p, c)| -> Result<Candidate> {
            let t = c.occasions(Some(data.n_occasions))?;
            let label = c.label.clone().unwrap_or_else(|| {
                p.file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_else(|| c.display_label())
            });
            Ok(Candidate {
                label,
                map: c.parameter_map(t)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let opts = fit_options(first, &a.flags)?;
    let table = model_select(&data, &candidates, &opts)?;
    let text = report::selection_text(&table);
    write_atomic(&a.out, &text)?;
    write_atomic(&sidecar(&a.out, ".csv"), &report::selection_csv(&table))?;
    if !quiet {
        print!("{text}");
    }
    if table.best().is_none() {
        bail!("every candidate failed to fit");
    }
    Ok(Status::Done)
}

pub fn study(a: &StudyArgs, quiet: bool) -> Result<Status> {
    let config = load_config(&a.config)?;
    let t = match a.t {
        Some(t) => config.occasions(Some(t))?,
        None => config.occasions(None)?,
    };
    let mut maps = vec![StudyMap {
        label: config.label.clone().unwrap_or_else(|| "semi-Markov".into()),
        map: config.parameter_map(t)?,
    }];
    if a.maps.is_empty() {
        let fo = config.first_order();
        maps.push(StudyMap {
            label: "first-order".into(),
            map: fo.parameter_map(t)?,
        });
    }
    for (i, p) in a.maps.iter().enumerate() {
        let c = load_config(p)?;
        maps.push(StudyMap {
            label: c.label.clone().unwrap_or_else(|| format!("map{}", i + 2)),
            map: c.parameter_map(t)?,
        });
    }
    let (entry_policy, entry_age) = entry(a.entry, a.entry_age);
    let opts = fit_options(&config, &a.flags)?;
    let design = StudyDesign {
        n_individuals: a.n,
        n_occasions: t,
        truth: config.params(t)?,
        replicates: a.replicates,
        seed: a.flags.seed.unwrap_or(config.optimizer.seed),
        entry_policy,
        entry_age,
        epsilon: config.aggregation.epsilon,
    };
    design.validate()?;
    let summary = simulate::run_study(&design, &maps, &opts)?;
    if summary.fits.is_empty() {
        bail!("all {} replicate fits failed", summary.failures.len());
    }
    write_atomic(&a.out, &report::study_csv(&summary))?;
    let text = report::study_text(&summary);
    write_atomic(&sidecar(&a.out, ".txt"), &text)?;
    if !quiet {
        print!("{text}");
    }
    Ok(Status::Done)
}

fn symbol(tok: &str, n_states: usize) -> Result<ObservationSymbol> {
    let x = io::parse_token(tok, &ParseOptions::with_states(n_states)).map_err(smas::Error::Config)?;
    if let ObservationSymbol::Seen(k) = x {
        if k >= n_states {
            return Err(smas::Error::Config(format!("state {} out of range 1..={n_states}", k + 1)).into());
        }
    }
    Ok(x)
}

fn csv_row(values: impl Iterator<Item = f64>) -> String {
    let cells: Vec<String> = values.map(|v| v.to_string()).collect();
    cells.join(",") + "\n"
}

pub fn dump(a: &DumpArgs, quiet: bool) -> Result<Status> {
    let config = load_config(&a.config)?;
    let t = config.occasions(a.t)?;
    if a.occasion == 0 || a.occasion >= t {
        return Err(smas::Error::Config(format!("--occasion must lie in 1..={}", t - 1)).into());
    }
    let (from, to) = (symbol(&a.from, config.n_states)?, symbol(&a.to, config.n_states)?);
    let prm = config.params(t)?;
    let plan = config.aggregation.plan_for(&prm)?;
    let model = ExpandedModel::new(&prm, &plan)?;
    let occ = a.occasion - 1;
    let gamma = model.build_tpm(occ, from, to);
    let matrix: String = (0..gamma.nrows()).map(|i| csv_row(gamma.row(i).iter().copied())).collect();
    write_atomic(&a.out, &matrix)?;
    write_atomic(&sidecar(&a.out, ".q.csv"), &csv_row(model.obs_diagonal(occ + 1, to).into_iter()))?;
    let pi = model.stationary_restricted(occ)?;
    write_atomic(&sidecar(&a.out, ".stationary.csv"), &csv_row(pi.into_iter()))?;
    if !quiet {
        println!("aggregate sizes {:?}, {} expanded states", plan.sizes, plan.total);
        println!("wrote {}", a.out.display());
    }
    Ok(Status::Done)
}
