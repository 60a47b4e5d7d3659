//! Unconstrained minimisers over the free parameter vector.
//!
//! Objectives may return `+inf` (or NaN) for infeasible points; both methods
//! treat such points as rejected steps.

use serde::{Deserialize, Serialize};

/// Minimiser selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Nelder-Mead for at most eight parameters, BFGS otherwise.
    #[default]
    Auto,
    NelderMead,
    Bfgs,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimOptions {
    pub method: Method,
    /// Relative tolerance on the objective.
    pub tol: f64,
    /// Absolute tolerance on the gradient (BFGS).
    pub grad_tol: f64,
    /// Iteration budget.
    pub max_iter: usize,
}

impl Default for OptimOptions {
    fn default() -> Self {
        OptimOptions {
            method: Method::Auto,
            tol: 1e-9,
            grad_tol: 1e-4,
            max_iter: 2000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimResult {
    pub x: Vec<f64>,
    pub f: f64,
    pub n_evals: usize,
    pub iterations: usize,
    pub converged: bool,
    /// Best objective after each accepted iteration.
    pub trace: Vec<f64>,
    pub message: String,
}

fn clean(v: f64) -> f64 {
    if v.is_nan() {
        f64::INFINITY
    } else {
        v
    }
}

struct Counted<'a> {
    f: &'a (dyn Fn(&[f64]) -> f64 + Sync),
    n: usize,
}

impl Counted<'_> {
    fn eval(&mut self, x: &[f64]) -> f64 {
        self.n += 1;
        clean((self.f)(x))
    }
}

/// Minimises `f` from `x0`.
pub fn minimize(f: &(dyn Fn(&[f64]) -> f64 + Sync), x0: &[f64], opts: &OptimOptions) -> OptimResult {
    let mut obj = Counted { f, n: 0 };
    if x0.is_empty() {
        let v = obj.eval(x0);
        return OptimResult {
            x: vec![],
            f: v,
            n_evals: 1,
            iterations: 0,
            converged: v.is_finite(),
            trace: vec![v],
            message: "no free parameters".into(),
        };
    }
    let method = match opts.method {
        Method::Auto if x0.len() <= 8 => Method::NelderMead,
        Method::Auto => Method::Bfgs,
        m => m,
    };
    match method {
        Method::NelderMead => nelder_mead(&mut obj, x0, opts),
        _ => bfgs(&mut obj, x0, opts),
    }
}

fn nelder_mead(obj: &mut Counted, x0: &[f64], opts: &OptimOptions) -> OptimResult {
    let n = x0.len();
    let nf = n as f64;
    // dimension-adaptive coefficients
    let (alpha, beta, gamma, delta) = (1.0, 1.0 + 2.0 / nf, 0.75 - 1.0 / (2.0 * nf), 1.0 - 1.0 / nf);
    let f0 = obj.eval(x0);
    if !f0.is_finite() {
        return fail(x0, f0, obj.n, "objective not finite at the start");
    }
    let mut trace = vec![f0];
    let mut best_x = x0.to_vec();
    let mut best_f = f0;
    let mut iterations = 0;
    let mut converged = false;
    // up to two restarts around the incumbent to guard against collapse
    for _restart in 0..3 {
        let mut simplex: Vec<(Vec<f64>, f64)> = vec![(best_x.clone(), best_f)];
        for i in 0..n {
            let mut x = best_x.clone();
            x[i] += if x[i].abs() > 1.0 { 0.25 * x[i].abs() } else { 0.25 };
            let fx = obj.eval(&x);
            simplex.push((x, fx));
        }
        let mut local_converged = false;
        while iterations < opts.max_iter {
            iterations += 1;
            simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
            let fb = simplex[0].1;
            let fw = simplex[n].1;
            let size = simplex[1..]
                .iter()
                .map(|(x, _)| {
                    x.iter()
                        .zip(&simplex[0].0)
                        .map(|(a, b)| (a - b).abs())
                        .fold(0.0, f64::max)
                })
                .fold(0.0, f64::max);
            if fw.is_finite() && (fw - fb) <= opts.tol * (1.0 + fb.abs()) && size < 1e-5 {
                local_converged = true;
                break;
            }
            let centroid: Vec<f64> = (0..n)
                .map(|d| simplex[..n].iter().map(|(x, _)| x[d]).sum::<f64>() / nf)
                .collect();
            let along = |t: f64| -> Vec<f64> {
                centroid
                    .iter()
                    .zip(&simplex[n].0)
                    .map(|(c, w)| c + t * (c - w))
                    .collect()
            };
            let xr = along(alpha);
            let fr = obj.eval(&xr);
            if fr < simplex[0].1 {
                let xe = along(beta);
                let fe = obj.eval(&xe);
                simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
            } else if fr < simplex[n - 1].1 {
                simplex[n] = (xr, fr);
            } else {
                let (xc, fc) = if fr < simplex[n].1 {
                    let xc = along(gamma);
                    let fc = obj.eval(&xc);
                    (xc, fc)
                } else {
                    let xc = along(-gamma);
                    let fc = obj.eval(&xc);
                    (xc, fc)
                };
                if fc < simplex[n].1.min(fr) {
                    simplex[n] = (xc, fc);
                } else {
                    let x_best = simplex[0].0.clone();
                    for (x, fx) in simplex.iter_mut().skip(1) {
                        for (xi, bi) in x.iter_mut().zip(&x_best) {
                            *xi = bi + delta * (*xi - bi);
                        }
                        *fx = obj.eval(x);
                    }
                }
            }
            let cur = simplex.iter().map(|s| s.1).fold(f64::INFINITY, f64::min);
            trace.push(cur.min(*trace.last().unwrap()));
        }
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let improved = simplex[0].1 < best_f - opts.tol * (1.0 + best_f.abs());
        if simplex[0].1 <= best_f {
            best_x = simplex[0].0.clone();
            best_f = simplex[0].1;
        }
        if !local_converged {
            break;
        }
        converged = true;
        if !improved {
            break;
        }
    }
    OptimResult {
        x: best_x,
        f: best_f,
        n_evals: obj.n,
        iterations,
        converged,
        trace,
        message: if converged {
            "simplex converged".into()
        } else {
            "iteration limit reached".into()
        },
    }
}

fn fail(x: &[f64], f: f64, n: usize, msg: &str) -> OptimResult {
    OptimResult {
        x: x.to_vec(),
        f,
        n_evals: n,
        iterations: 0,
        converged: false,
        trace: vec![f],
        message: msg.into(),
    }
}

/// Central-difference gradient, falling back to one-sided differences next
/// to infeasible points.
fn gradient(obj: &mut Counted, x: &[f64], fx: f64) -> Vec<f64> {
    let mut g = vec![0.0; x.len()];
    let mut xp = x.to_vec();
    for i in 0..x.len() {
        let h = 1e-5 * x[i].abs().max(1.0);
        xp[i] = x[i] + h;
        let fp = obj.eval(&xp);
        xp[i] = x[i] - h;
        let fm = obj.eval(&xp);
        xp[i] = x[i];
        g[i] = match (fp.is_finite(), fm.is_finite()) {
            (true, true) => (fp - fm) / (2.0 * h),
            (true, false) => (fp - fx) / h,
            (false, true) => (fx - fm) / h,
            (false, false) => 0.0,
        };
    }
    g
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn bfgs(obj: &mut Counted, x0: &[f64], opts: &OptimOptions) -> OptimResult {
    let n = x0.len();
    let mut x = x0.to_vec();
    let mut fx = obj.eval(&x);
    if !fx.is_finite() {
        return fail(x0, fx, obj.n, "objective not finite at the start");
    }
    let mut g = gradient(obj, &x, fx);
    let identity = |scale: f64| -> Vec<Vec<f64>> {
        (0..n)
            .map(|i| (0..n).map(|j| if i == j { scale } else { 0.0 }).collect())
            .collect()
    };
    let mut h = identity(1.0);
    let mut fresh = true;
    let mut trace = vec![fx];
    let mut converged = false;
    let mut message = String::from("iteration limit reached");
    let mut iterations = 0;
    let mut small_steps = 0;
    while iterations < opts.max_iter {
        iterations += 1;
        let gmax = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if gmax <= opts.grad_tol {
            converged = true;
            message = "gradient below tolerance".into();
            break;
        }
        let mut d: Vec<f64> = h.iter().map(|row| -dot(row, &g)).collect();
        let mut slope = dot(&g, &d);
        if !(slope < 0.0) {
            h = identity(1.0);
            fresh = true;
            d = g.iter().map(|v| -v).collect();
            slope = -dot(&g, &g);
        }
        let dmax = d.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if dmax > 5.0 {
            let s = 5.0 / dmax;
            d.iter_mut().for_each(|v| *v *= s);
            slope *= s;
        }
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..50 {
            let xn: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + step * b).collect();
            let fnew = obj.eval(&xn);
            if fnew.is_finite() && fnew <= fx + 1e-4 * step * slope {
                accepted = Some((xn, fnew));
                break;
            }
            step *= 0.5;
        }
        let Some((xn, fnew)) = accepted else {
            if fresh {
                converged = gmax <= 1e3 * opts.grad_tol;
                message = "line search failed".into();
                break;
            }
            h = identity(1.0);
            fresh = true;
            continue;
        };
        let gn = gradient(obj, &xn, fnew);
        let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() && sy > 0.0 {
            if fresh {
                h = identity(sy / dot(&y, &y));
            }
            let hy: Vec<f64> = h.iter().map(|row| dot(row, &y)).collect();
            let yhy = dot(&y, &hy);
            let rho = 1.0 / sy;
            for i in 0..n {
                for j in 0..n {
                    h[i][j] += rho * ((1.0 + rho * yhy) * s[i] * s[j] - hy[i] * s[j] - s[i] * hy[j]);
                }
            }
            fresh = false;
        }
        let df = fx - fnew;
        x = xn;
        fx = fnew;
        g = gn;
        trace.push(fx);
        if df <= opts.tol * (1.0 + fx.abs()) {
            small_steps += 1;
            let gmax = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if small_steps >= 3 && gmax <= 1e3 * opts.grad_tol {
                converged = true;
                message = "objective change below tolerance".into();
                break;
            }
        } else {
            small_steps = 0;
        }
    }
    OptimResult {
        x,
        f: fx,
        n_evals: obj.n,
        iterations,
        converged,
        trace,
        message,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rosenbrock(x: &[f64]) -> f64 {
        x.windows(2)
            .map(|w| 100.0 * (w[1] - w[0] * w[0]).powi(2) + (1.0 - w[0]).powi(2))
            .sum()
    }

    #[test]
    fn nelder_mead_finds_rosenbrock_minimum() {
        let r = minimize(&rosenbrock, &[-1.2, 1.0], &OptimOptions::default());
        assert!(r.converged, "{}", r.message);
        assert!((r.x[0] - 1.0).abs() < 1e-3 && (r.x[1] - 1.0).abs() < 1e-3, "{:?}", r.x);
    }

    #[test]
    fn bfgs_finds_rosenbrock_minimum() {
        let opts = OptimOptions {
            method: Method::Bfgs,
            ..Default::default()
        };
        let r = minimize(&rosenbrock, &[-1.2, 1.0], &opts);
        assert!(r.converged, "{}", r.message);
        for v in &r.x {
            assert!((v - 1.0).abs() < 1e-3, "{:?}", r.x);
        }
    }

    #[test]
    fn traces_never_increase() {
        for method in [Method::NelderMead, Method::Bfgs] {
            let opts = OptimOptions {
                method,
                ..Default::default()
            };
            let r = minimize(&rosenbrock, &[0.3, -0.4, 2.0], &opts);
            assert!(r.trace.windows(2).all(|w| w[1] <= w[0]));
        }
    }

    #[test]
    fn infeasible_regions_are_avoided() {
        let f = |x: &[f64]| if x[0] < 0.5 { f64::INFINITY } else { (x[0] - 0.2).powi(2) + x[1] * x[1] };
        for method in [Method::NelderMead, Method::Bfgs] {
            let opts = OptimOptions {
                method,
                ..Default::default()
            };
            let r = minimize(&f, &[2.0, 1.0], &opts);
            assert!(r.f.is_finite());
            assert!(r.x[0] >= 0.5 && r.x[0] < 0.51, "{:?}", r.x);
        }
    }

    #[test]
    fn infeasible_start_fails() {
        let r = minimize(&|_x: &[f64]| f64::NAN, &[0.0], &OptimOptions::default());
        assert!(!r.converged);
    }
}
