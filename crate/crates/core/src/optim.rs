//! Limited-memory BFGS with a weak Wolfe bracketing line search.
//!
//! The bracketing search only needs the Armijo and curvature tests, so it
//! behaves on objectives with kinks; the objective may return `+∞` to mark
//! points outside its domain, which the search treats as a failed Armijo test.

use std::collections::VecDeque;

#[derive(Debug, Clone)]
pub struct LbfgsOptions {
    pub memory: usize,
    pub max_iter: usize,
    /// Stop when `‖g‖ <= grad_tol · max(1, |f|)`.
    pub grad_tol: f64,
    /// Stop after `stall_window` consecutive iterations whose relative
    /// decrease is below `stall_tol`.
    pub stall_tol: f64,
    pub stall_window: usize,
    /// Stop when the last `plateau_window` iterations together decreased
    /// `f` by less than `plateau_tol` relative. Catches the slow creep on
    /// objectives whose minimizer sits on a kink.
    pub plateau_tol: f64,
    pub plateau_window: usize,
    pub max_line_search: usize,
}

impl Default for LbfgsOptions {
    fn default() -> Self {
        Self {
            memory: 20,
            max_iter: 5000,
            grad_tol: 1e-8,
            stall_tol: 1e-13,
            stall_window: 12,
            plateau_tol: 5e-5,
            plateau_window: 500,
            max_line_search: 60,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StopReason {
    GradientTolerance,
    Stalled,
    Plateau,
    LineSearchFailed,
    IterationCap,
}

#[derive(Debug, Clone)]
pub struct LbfgsReport {
    pub x: Vec<f64>,
    pub f: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub history: Vec<f64>,
    pub stop: StopReason,
}

impl LbfgsReport {
    /// Everything except running into the iteration cap counts as converged.
    pub fn converged(&self) -> bool {
        self.stop != StopReason::IterationCap
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Minimizes `f`, which returns the value and writes the gradient.
pub fn minimize<F>(mut f: F, x0: &[f64], opts: &LbfgsOptions) -> LbfgsReport
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    let n = x0.len();
    let mut x = x0.to_vec();
    let mut g = vec![0.0; n];
    let mut fx = f(&x, &mut g);
    let mut evaluations = 1;
    let mut history = vec![fx];
    let mut pairs: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::new();
    let mut d = vec![0.0; n];
    let mut x_new = vec![0.0; n];
    let mut g_new = vec![0.0; n];
    let mut stall = 0;
    let mut iterations = 0;
    let mut alpha_buf = vec![0.0; opts.memory];

    let stop = loop {
        let gnorm = norm(&g);
        if !fx.is_finite() {
            break StopReason::LineSearchFailed;
        }
        if gnorm <= opts.grad_tol * fx.abs().max(1.0) {
            break StopReason::GradientTolerance;
        }
        if iterations >= opts.max_iter {
            break StopReason::IterationCap;
        }
        iterations += 1;

        // Two-loop recursion.
        d.copy_from_slice(&g);
        for (k, (s, y, rho)) in pairs.iter().enumerate().rev() {
            let a = rho * dot(s, &d);
            alpha_buf[k] = a;
            d.iter_mut().zip(y).for_each(|(di, yi)| *di -= a * yi);
        }
        let gamma = match pairs.back() {
            Some((s, y, _)) => dot(s, y) / dot(y, y),
            None => 1.0 / gnorm,
        };
        d.iter_mut().for_each(|di| *di *= gamma);
        for (k, (s, y, rho)) in pairs.iter().enumerate() {
            let b = rho * dot(y, &d);
            let a = alpha_buf[k];
            d.iter_mut().zip(s).for_each(|(di, si)| *di += (a - b) * si);
        }
        d.iter_mut().for_each(|di| *di = -*di);
        let mut slope = dot(&g, &d);
        if !(slope < 0.0) {
            pairs.clear();
            d.iter_mut().zip(&g).for_each(|(di, gi)| *di = -gi / gnorm);
            slope = dot(&g, &d);
        }

        // Weak Wolfe bracketing.
        let (c1, c2) = (1e-4, 0.9);
        let (mut lo, mut hi) = (0.0_f64, f64::INFINITY);
        let mut step = 1.0;
        let mut accepted = None;
        let mut best_armijo: Option<(f64, f64)> = None;
        for _ in 0..opts.max_line_search {
            x_new
                .iter_mut()
                .zip(x.iter().zip(&d))
                .for_each(|(xn, (xi, di))| *xn = xi + step * di);
            let f_new = f(&x_new, &mut g_new);
            evaluations += 1;
            if !(f_new.is_finite() && f_new <= fx + c1 * step * slope) {
                hi = step;
            } else {
                if best_armijo.is_none_or(|(_, fb)| f_new < fb) {
                    best_armijo = Some((step, f_new));
                }
                if dot(&g_new, &d) < c2 * slope {
                    lo = step;
                } else {
                    accepted = Some(f_new);
                    break;
                }
            }
            step = if hi.is_finite() { 0.5 * (lo + hi) } else { 2.0 * lo.max(step) };
            if hi.is_finite() && hi - lo < 1e-18 * (1.0 + hi) {
                break;
            }
        }

        let f_new = match accepted {
            Some(v) => v,
            None => match best_armijo {
                // Accept the best sufficient-decrease point without a curvature pair.
                Some((s, fb)) => {
                    x_new
                        .iter_mut()
                        .zip(x.iter().zip(&d))
                        .for_each(|(xn, (xi, di))| *xn = xi + s * di);
                    f(&x_new, &mut g_new);
                    evaluations += 1;
                    pairs.clear();
                    fb
                }
                None => {
                    if pairs.is_empty() {
                        break StopReason::LineSearchFailed;
                    }
                    pairs.clear();
                    continue;
                }
            },
        };

        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if accepted.is_some() && sy > 1e-14 * norm(&s) * norm(&y) {
            if pairs.len() == opts.memory {
                pairs.pop_front();
            }
            pairs.push_back((s, y, 1.0 / sy));
        }

        let rel = (fx - f_new) / fx.abs().max(1e-300);
        x.copy_from_slice(&x_new);
        g.copy_from_slice(&g_new);
        fx = f_new;
        history.push(fx);
        if rel < opts.stall_tol {
            stall += 1;
            if stall >= opts.stall_window {
                break StopReason::Stalled;
            }
        } else {
            stall = 0;
        }
        if history.len() > opts.plateau_window {
            let old = history[history.len() - 1 - opts.plateau_window];
            if (old - fx) / fx.abs().max(1e-300) < opts.plateau_tol {
                break StopReason::Plateau;
            }
        }
    };

    LbfgsReport {
        grad_norm: norm(&g),
        x,
        f: fx,
        iterations,
        evaluations,
        history,
        stop,
    }
}

/// Nelder–Mead simplex minimization for small derivative-free problems.
pub fn nelder_mead<F>(mut f: F, x0: &[f64], scale: f64, max_evals: usize, tol: f64) -> (Vec<f64>, f64)
where
    F: FnMut(&[f64]) -> f64,
{
    let n = x0.len();
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    simplex.push((x0.to_vec(), f(x0)));
    for i in 0..n {
        let mut v = x0.to_vec();
        v[i] += scale;
        let fv = f(&v);
        simplex.push((v, fv));
    }
    let mut evals = n + 1;
    let order = |s: &mut Vec<(Vec<f64>, f64)>| s.sort_by(|a, b| a.1.total_cmp(&b.1));
    while evals < max_evals {
        order(&mut simplex);
        let spread = simplex[n].1 - simplex[0].1;
        let size = simplex
            .iter()
            .skip(1)
            .map(|(v, _)| v.iter().zip(&simplex[0].0).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
            .fold(0.0, f64::max);
        if spread.abs() <= tol && size <= tol {
            break;
        }
        let mut centroid = vec![0.0; n];
        for (v, _) in simplex.iter().take(n) {
            centroid.iter_mut().zip(v).for_each(|(c, x)| *c += x / n as f64);
        }
        let along = |coef: f64, worst: &[f64]| -> Vec<f64> {
            centroid.iter().zip(worst).map(|(c, w)| c + coef * (w - c)).collect()
        };
        let worst = simplex[n].0.clone();
        let xr = along(-1.0, &worst);
        let fr = f(&xr);
        evals += 1;
        if fr < simplex[0].1 {
            let xe = along(-2.0, &worst);
            let fe = f(&xe);
            evals += 1;
            simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < simplex[n - 1].1 {
            simplex[n] = (xr, fr);
        } else {
            let (xc, fc) = if fr < simplex[n].1 {
                let xc = along(-0.5, &worst);
                let fc = f(&xc);
                (xc, fc)
            } else {
                let xc = along(0.5, &worst);
                let fc = f(&xc);
                (xc, fc)
            };
            evals += 1;
            if fc < simplex[n].1.min(fr) {
                simplex[n] = (xc, fc);
            } else {
                let best = simplex[0].0.clone();
                for (v, fv) in simplex.iter_mut().skip(1) {
                    v.iter_mut().zip(&best).for_each(|(x, b)| *x = b + 0.5 * (*x - b));
                    *fv = f(v);
                    evals += 1;
                }
            }
        }
    }
    order(&mut simplex);
    simplex.swap_remove(0)
}

/// Golden-section maximization of a unimodal function on `[a, b]`.
pub fn golden_max<F: FnMut(f64) -> f64>(mut f: F, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while (b - a).abs() > tol {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
    }
    let x = 0.5 * (a + b);
    (x, f(x))
}

/// Root of a continuous `g` on `[a, b]` with a sign change, by bisection.
pub fn bisect<G: FnMut(f64) -> f64>(mut g: G, mut a: f64, mut b: f64, tol: f64) -> Option<f64> {
    let (mut ga, gb) = (g(a), g(b));
    if ga == 0.0 {
        return Some(a);
    }
    if gb == 0.0 {
        return Some(b);
    }
    if ga.signum() == gb.signum() {
        return None;
    }
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        let gm = g(m);
        if gm == 0.0 || (b - a).abs() <= tol {
            return Some(m);
        }
        if gm.signum() == ga.signum() {
            a = m;
            ga = gm;
        } else {
            b = m;
        }
    }
    Some(0.5 * (a + b))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rosenbrock() {
        let rep = minimize(
            |x, g| {
                let (a, b) = (x[0], x[1]);
                g[0] = -2.0 * (1.0 - a) - 400.0 * a * (b - a * a);
                g[1] = 200.0 * (b - a * a);
                (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2)
            },
            &[-1.2, 1.0],
            &LbfgsOptions::default(),
        );
        assert!(rep.converged());
        assert!((rep.x[0] - 1.0).abs() < 1e-6 && (rep.x[1] - 1.0).abs() < 1e-6, "{:?}", rep.x);
    }

    #[test]
    fn kinked_objective() {
        // max of two quadratics; the minimizer sits on the kink.
        let rep = minimize(
            |x, g| {
                let f1 = (x[0] - 1.0).powi(2) + x[1] * x[1];
                let f2 = (x[0] + 1.0).powi(2) + x[1] * x[1];
                if f1 >= f2 {
                    g[0] = 2.0 * (x[0] - 1.0);
                    g[1] = 2.0 * x[1];
                    f1
                } else {
                    g[0] = 2.0 * (x[0] + 1.0);
                    g[1] = 2.0 * x[1];
                    f2
                }
            },
            &[3.0, 2.0],
            &LbfgsOptions::default(),
        );
        assert!((rep.f - 1.0).abs() < 1e-6, "{}", rep.f);
    }

    #[test]
    fn simplex_and_scalar_helpers() {
        let (x, fx) = nelder_mead(
            |v| (v[0] - 2.0).powi(2) + 3.0 * (v[1] + 1.0).powi(2),
            &[0.0, 0.0],
            0.5,
            2000,
            1e-12,
        );
        assert!(fx < 1e-16 && (x[0] - 2.0).abs() < 1e-7);
        let (xm, _) = golden_max(|x| -(x - 0.3).powi(2), 0.0, 1.0, 1e-10);
        assert!((xm - 0.3).abs() < 1e-8);
        let r = bisect(|x| x * x - 2.0, 0.0, 2.0, 1e-14).unwrap();
        assert!((r - 2f64.sqrt()).abs() < 1e-12);
        assert!(bisect(|x| x * x + 1.0, 0.0, 1.0, 1e-9).is_none());
    }
}
