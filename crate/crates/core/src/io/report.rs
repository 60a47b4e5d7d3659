//! Text, CSV and JSON renderings of fits, selections and studies.

use std::fmt::Write as _;

use serde_json::json;

use crate::inference::{DwellPmfRow, FitResult, SelectionTable, StationarySummary};
use crate::simulate::StudySummary;

fn opt(v: Option<f64>, prec: usize) -> String {
    match v {
        Some(x) if x.is_finite() => format!("{x:.prec$}"),
        _ => "-".into(),
    }
}

/// Plain-text fit report.
pub fn fit_text(
    fit: &FitResult,
    stationary: Option<&StationarySummary>,
    dwell_ci: &[(usize, Vec<DwellPmfRow>)],
) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "log-likelihood  {:.3}", fit.loglik);
    let _ = writeln!(s, "free parameters {}", fit.n_params);
    let _ = writeln!(s, "AIC             {:.3}", fit.aic);
    let _ = writeln!(s, "converged       {}", if fit.converged { "yes" } else { "no" });
    let _ = writeln!(s, "evaluations     {}", fit.n_evals);
    if fit.starts.len() > 1 {
        let _ = writeln!(s, "start spread    {:.3}", fit.multistart_spread);
    }
    let sizes: Vec<String> = fit.plan.sizes.iter().map(|a| a.to_string()).collect();
    let _ = writeln!(s, "aggregates      {}", sizes.join(" "));
    let dwell: Vec<String> = fit.mle.dwell.iter().map(|d| d.label()).collect();
    let _ = writeln!(s, "dwell           {}", dwell.join(" "));
    for w in &fit.warnings {
        let _ = writeln!(s, "warning: {w}");
    }
    if !fit.estimates.is_empty() {
        let _ = writeln!(s);
        let _ = writeln!(s, "{:<14}{:>10}{:>10}{:>10}{:>10}", "parameter", "estimate", "se", "lower", "upper");
        for e in &fit.estimates {
            let _ = writeln!(
                s,
                "{:<14}{:>10.4}{:>10}{:>10}{:>10}",
                e.name,
                e.estimate,
                opt(e.se, 4),
                opt(e.lower, 4),
                opt(e.upper, 4)
            );
        }
    }
    if let Some(st) = stationary {
        let probs: Vec<String> = st.states.iter().map(|v| format!("{v:.3}")).collect();
        let _ = writeln!(s);
        let _ = writeln!(s, "stationary      ({})", probs.join(","));
    }
    for (k, rows) in dwell_ci {
        let _ = writeln!(s);
        let _ = writeln!(s, "dwell state {}", k + 1);
        let _ = writeln!(s, "{:>4}{:>10}{:>10}{:>10}", "r", "d", "lower", "upper");
        for r in rows {
            let _ = writeln!(s, "{:>4}{:>10.4}{:>10.4}{:>10.4}", r.r, r.d, r.lower, r.upper);
        }
    }
    s
}

/// Fit, stationary summary and dwell intervals as one JSON document.
pub fn fit_json(
    fit: &FitResult,
    stationary: Option<&StationarySummary>,
    dwell_ci: &[(usize, Vec<DwellPmfRow>)],
) -> String {
    let dwell: Vec<_> = dwell_ci
        .iter()
        .map(|(k, rows)| json!({ "state": k + 1, "rows": rows }))
        .collect();
    let doc = json!({
        "fit": fit,
        "stationary": stationary.map(|s| &s.states),
        "dwell_ci": dwell,
    });
    serde_json::to_string_pretty(&doc).expect("fit serialises")
}

/// `state,r,d,lo,hi` rows for plotting.
pub fn dwell_ci_csv(dwell_ci: &[(usize, Vec<DwellPmfRow>)]) -> String {
    let mut s = String::from("state,r,d,lo,hi\n");
    for (k, rows) in dwell_ci {
        for r in rows {
            let _ = writeln!(s, "{},{},{:.10},{:.10},{:.10}", k + 1, r.r, r.d, r.lower, r.upper);
        }
    }
    s
}

/// Table of dwell laws per state, AIC and AIC difference, best first.
pub fn selection_text(table: &SelectionTable) -> String {
    let k_states = table.rows.first().map_or(0, |r| r.dwell.len());
    let cells: Vec<Vec<String>> = table
        .rows
        .iter()
        .map(|r| {
            let mut c: Vec<String> = r.dwell.iter().map(|d| d.label()).collect();
            match (&r.error, r.delta_aic) {
                (None, Some(d)) => {
                    c.push(format!("{:.3}", r.aic));
                    c.push(if d == 0.0 { "0.0".into() } else { format!("{d:.3}") });
                }
                _ => {
                    c.push("failed".into());
                    c.push("-".into());
                }
            }
            c
        })
        .collect();
    let mut header: Vec<String> = (1..=k_states).map(|k| format!("State {k}")).collect();
    header.push("AIC".into());
    header.push("dAIC".into());
    let widths: Vec<usize> = (0..header.len())
        .map(|i| {
            cells
                .iter()
                .map(|c| c[i].len())
                .chain([header[i].len()])
                .max()
                .unwrap_or(0)
        })
        .collect();
    let line = |c: &[String]| -> String {
        let mut out = String::new();
        for (i, v) in c.iter().enumerate() {
            if i < k_states {
                let _ = write!(out, "{:<w$}  ", v, w = widths[i]);
            } else {
                let _ = write!(out, "{:>w$}  ", v, w = widths[i]);
            }
        }
        out.trim_end().to_string()
    };
    let mut s = line(&header);
    s.push('\n');
    for c in &cells {
        s.push_str(&line(c));
        s.push('\n');
    }
    s
}

/// Selection table as CSV, one row per candidate.
pub fn selection_csv(table: &SelectionTable) -> String {
    let mut s = String::from("label,dwell,loglik,n_params,aic,delta_aic,converged,error\n");
    for r in &table.rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{}",
            csv_field(&r.label),
            csv_field(&r.dwell_labels()),
            opt(Some(r.loglik), 6),
            r.n_params,
            opt(Some(r.aic), 6),
            opt(r.delta_aic, 6),
            r.converged,
            csv_field(r.error.as_deref().unwrap_or(""))
        );
    }
    s
}

fn csv_field(v: &str) -> String {
    if v.contains([',', '"', '\n']) {
        format!("\"{}\"", v.replace('"', "\"\""))
    } else {
        v.to_string()
    }
}

/// Relative bias and spread per parameter, one column pair per map.
pub fn study_text(summary: &StudySummary) -> String {
    let mut maps: Vec<&str> = Vec::new();
    let mut params: Vec<&str> = Vec::new();
    for r in &summary.rows {
        if !maps.contains(&r.map.as_str()) {
            maps.push(&r.map);
        }
        if !params.contains(&r.parameter.as_str()) {
            params.push(&r.parameter);
        }
    }
    let mut s = String::new();
    let _ = write!(s, "{:<12}", "");
    for m in &maps {
        let _ = write!(s, "  {:^26}", m);
    }
    s = s.trim_end().to_string();
    s.push('\n');
    let _ = write!(s, "{:<12}", "parameter");
    for _ in &maps {
        let _ = write!(s, "  {:>8}{:>9}{:>9}", "MRB", "MSD", "SE");
    }
    s.push('\n');
    for p in &params {
        let _ = write!(s, "{:<12}", p);
        for m in &maps {
            match summary.rows.iter().find(|r| r.map == *m && r.parameter == *p) {
                Some(r) => {
                    let _ = write!(s, "  {:>8.3}{:>9.3}{:>9}", r.mrb, r.msd_sd, opt(Some(r.msd_se), 3));
                }
                None => {
                    let _ = write!(s, "  {:>8}{:>9}{:>9}", "-", "-", "-");
                }
            }
        }
        s = s.trim_end().to_string();
        s.push('\n');
    }
    for (m, r, e) in &summary.failures {
        let _ = writeln!(s, "failed: map {m}, replicate {r}: {e}");
    }
    s
}

/// `parameter,map,MRB,MSD,SE,truth,n` where MSD is the standard deviation of
/// the estimates and SE the mean reported standard error.
pub fn study_csv(summary: &StudySummary) -> String {
    let mut s = String::from("parameter,map,MRB,MSD,SE,truth,n\n");
    for r in &summary.rows {
        let _ = writeln!(
            s,
            "{},{},{:.6},{:.6},{},{},{}",
            csv_field(&r.parameter),
            csv_field(&r.map),
            r.mrb,
            r.msd_sd,
            opt(Some(r.msd_se), 6),
            r.truth,
            r.n
        );
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dwell::DwellSpec;
    use crate::inference::SelectionRow;

    fn row(dwell: Vec<DwellSpec>, aic: f64, delta: f64) -> SelectionRow {
        SelectionRow {
            label: "m".into(),
            dwell,
            loglik: -aic / 2.0,
            aic,
            delta_aic: Some(delta),
            n_params: 0,
            converged: true,
            error: None,
        }
    }

    #[test]
    fn selection_layout() {
        let t = SelectionTable {
            rows: vec![
                row(
                    vec![DwellSpec::shifted_neg_binomial(0.581, 0.017), DwellSpec::geometric(0.409)],
                    5538.585,
                    0.0,
                ),
                row(vec![DwellSpec::geometric(0.028), DwellSpec::geometric(0.382)], 5539.211, 0.626),
            ],
        };
        let text = selection_text(&t);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "State 1           State 2           AIC   dAIC");
        assert_eq!(lines[1], "sNB(0.581,0.017)  geom(0.409)  5538.585    0.0");
        assert_eq!(lines[2], "geom(0.028)       geom(0.382)  5539.211  0.626");
    }

    #[test]
    fn csv_quoting() {
        assert_eq!(csv_field("a,b"), "\"a,b\"");
        assert_eq!(csv_field("plain"), "plain");
    }
}
