//! Limited-memory BFGS with a strong-Wolfe line search (Nocedal & Wright,
//! algorithms 7.4, 3.5 and 3.6).
//!
//! Only steps that do not increase the objective are accepted, so the trace
//! of accepted values is non-increasing.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const C1: f64 = 1e-4;
const C2: f64 = 0.9;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LbfgsOptions {
    /// Initial trial step of every line search.
    pub step_scale: f64,
    pub history: usize,
    /// Stop once `max_i |g_i|` falls to this value.
    pub grad_tol: f64,
    pub max_evals_per_iter: usize,
    /// Outer iterations (accepted updates).
    pub max_iters: usize,
    /// Stop when an accepted step changes `f` by at most
    /// `tolerance_change·max(1, |f|)`.
    pub tolerance_change: f64,
}

impl Default for LbfgsOptions {
    fn default() -> Self {
        LbfgsOptions {
            step_scale: 1.0,
            history: 10,
            grad_tol: 1e-7,
            max_evals_per_iter: 20,
            max_iters: 100,
            tolerance_change: 1e-12,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    GradientTolerance,
    MaxIterations,
    SmallChange,
    LineSearchFailed,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LbfgsResult {
    pub x: Vec<f64>,
    pub f: f64,
    pub gradient: Vec<f64>,
    /// Objective at the start, then after every accepted iteration.
    pub trace: Vec<f64>,
    pub iterations: usize,
    pub evaluations: usize,
    pub termination: Termination,
}

impl LbfgsResult {
    pub fn converged(&self) -> bool {
        matches!(
            self.termination,
            Termination::GradientTolerance | Termination::SmallChange
        )
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn max_abs(a: &[f64]) -> f64 {
    a.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

struct Point {
    t: f64,
    f: f64,
    g: Vec<f64>,
    /// Directional derivative.
    d: f64,
}

struct Evaluator<'f, F> {
    f: &'f mut F,
    count: usize,
}

impl<F> Evaluator<'_, F>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    /// Failed or non-finite evaluations read as `+∞` so the line search
    /// backs off.
    fn at(&mut self, x: &[f64], dir: &[f64], t: f64) -> Point {
        self.count += 1;
        let xt: Vec<f64> = x.iter().zip(dir).map(|(a, b)| a + t * b).collect();
        match (self.f)(&xt) {
            Ok((f, g)) if f.is_finite() && g.iter().all(|v| v.is_finite()) => {
                let d = dot(&g, dir);
                Point { t, f, g, d }
            }
            _ => Point {
                t,
                f: f64::INFINITY,
                g: Vec::new(),
                d: f64::NAN,
            },
        }
    }
}

/// Minimizer of the cubic interpolating two points, clamped to `bounds`;
/// falls back to bisection when the cubic has no real minimizer.
fn cubic_interpolate(a: &Point, b: &Point, bounds: (f64, f64)) -> f64 {
    let (lo, hi) = if bounds.0 <= bounds.1 { bounds } else { (bounds.1, bounds.0) };
    if !(a.f.is_finite() && b.f.is_finite() && a.d.is_finite() && b.d.is_finite()) {
        return 0.5 * (lo + hi);
    }
    let d1 = a.d + b.d - 3.0 * (a.f - b.f) / (a.t - b.t);
    let disc = d1 * d1 - a.d * b.d;
    if disc < 0.0 {
        return 0.5 * (lo + hi);
    }
    let d2 = disc.sqrt();
    let t = if a.t <= b.t {
        b.t - (b.t - a.t) * ((b.d + d2 - d1) / (b.d - a.d + 2.0 * d2))
    } else {
        a.t - (a.t - b.t) * ((a.d + d2 - d1) / (a.d - b.d + 2.0 * d2))
    };
    if t.is_finite() {
        t.clamp(lo, hi)
    } else {
        0.5 * (lo + hi)
    }
}

enum Search {
    Wolfe(Point),
    /// Budget exhausted; best point with a strict decrease, if any.
    Partial(Option<Point>),
}

fn strong_wolfe<F>(
    eval: &mut Evaluator<'_, F>,
    x: &[f64],
    dir: &[f64],
    origin: &Point,
    t0: f64,
    budget: usize,
) -> Search
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    let mut best: Option<Point> = None;
    let keep_best = |p: &Point, best: &mut Option<Point>| {
        if p.f < origin.f && best.as_ref().is_none_or(|b| p.f < b.f) {
            *best = Some(Point {
                t: p.t,
                f: p.f,
                g: p.g.clone(),
                d: p.d,
            });
        }
    };
    let armijo = |p: &Point| p.f <= origin.f + C1 * p.t * origin.d;
    let curvature = |p: &Point| p.d.abs() <= -C2 * origin.d;

    let mut used = 0;
    let mut prev = Point {
        t: 0.0,
        f: origin.f,
        g: origin.g.clone(),
        d: origin.d,
    };
    let mut t = t0;
    let (mut lo, mut hi);
    loop {
        if used >= budget {
            return Search::Partial(best);
        }
        let p = eval.at(x, dir, t);
        used += 1;
        keep_best(&p, &mut best);
        if !armijo(&p) || (prev.t > 0.0 && p.f >= prev.f) {
            lo = prev;
            hi = p;
            break;
        }
        if curvature(&p) {
            return Search::Wolfe(p);
        }
        if p.d >= 0.0 {
            lo = p;
            hi = prev;
            break;
        }
        let next = cubic_interpolate(&prev, &p, (p.t + 0.01 * (p.t - prev.t), 10.0 * p.t));
        prev = p;
        t = next;
    }

    // zoom: `lo` satisfies Armijo and has the lowest value seen in the bracket
    loop {
        if used >= budget {
            return Search::Partial(best);
        }
        let (a, b) = (lo.t.min(hi.t), lo.t.max(hi.t));
        if (b - a) * max_abs(dir) < 1e-16 {
            return Search::Partial(best);
        }
        let mut t = cubic_interpolate(&lo, &hi, (a, b));
        // keep away from the bracket ends
        let margin = 0.1 * (b - a);
        if (t - a) < margin || (b - t) < margin {
            t = 0.5 * (a + b);
        }
        let p = eval.at(x, dir, t);
        used += 1;
        keep_best(&p, &mut best);
        if !armijo(&p) || p.f >= lo.f {
            hi = p;
        } else {
            if curvature(&p) {
                return Search::Wolfe(p);
            }
            if p.d * (hi.t - lo.t) >= 0.0 {
                hi = lo;
            }
            lo = p;
        }
    }
}

/// Two-loop recursion: `-H·g`.
fn direction(g: &[f64], history: &VecDeque<(Vec<f64>, Vec<f64>, f64)>) -> Vec<f64> {
    let mut q: Vec<f64> = g.iter().map(|v| -v).collect();
    let mut alphas = Vec::with_capacity(history.len());
    for (s, y, rho) in history.iter().rev() {
        let a = rho * dot(s, &q);
        q.iter_mut().zip(y).for_each(|(qi, yi)| *qi -= a * yi);
        alphas.push(a);
    }
    if let Some((s, y, _)) = history.back() {
        let gamma = dot(s, y) / dot(y, y);
        q.iter_mut().for_each(|v| *v *= gamma);
    }
    for ((s, y, rho), a) in history.iter().zip(alphas.iter().rev()) {
        let b = rho * dot(y, &q);
        q.iter_mut().zip(s).for_each(|(qi, si)| *qi += (a - b) * si);
    }
    q
}

/// Minimizes `f`, which returns the value and gradient at a point.
pub fn lbfgs_minimize<F>(mut f: F, x0: &[f64], opts: &LbfgsOptions) -> Result<LbfgsResult>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    if !(opts.step_scale > 0.0) {
        return Err(Error::Config(format!("step scale must be positive, got {}", opts.step_scale)));
    }
    if opts.max_evals_per_iter == 0 || opts.history == 0 {
        return Err(Error::Config("history and evaluation budget must be at least 1".into()));
    }
    let (mut fx, mut g) = f(x0)?;
    if !fx.is_finite() {
        return Err(Error::Input(format!("objective is not finite at the start point ({fx})")));
    }
    if let Some(i) = g.iter().position(|v| !v.is_finite()) {
        return Err(Error::Numerical {
            index: i,
            context: "gradient at the start point".into(),
        });
    }
    let mut x = x0.to_vec();
    let mut eval = Evaluator { f: &mut f, count: 1 };
    let mut trace = vec![fx];
    let mut history: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(opts.history);
    let mut iterations = 0;

    let termination = loop {
        if max_abs(&g) <= opts.grad_tol {
            break Termination::GradientTolerance;
        }
        if iterations >= opts.max_iters {
            break Termination::MaxIterations;
        }

        let mut dir = direction(&g, &history);
        let mut slope = dot(&g, &dir);
        if !(slope < 0.0) {
            history.clear();
            dir = g.iter().map(|v| -v).collect();
            slope = -dot(&g, &g);
        }
        let t0 = if history.is_empty() {
            opts.step_scale * (1.0 / g.iter().map(|v| v.abs()).sum::<f64>()).min(1.0)
        } else {
            opts.step_scale
        };
        let origin = Point {
            t: 0.0,
            f: fx,
            g: g.clone(),
            d: slope,
        };

        let accepted = match strong_wolfe(&mut eval, &x, &dir, &origin, t0, opts.max_evals_per_iter) {
            Search::Wolfe(p) => Some(p),
            Search::Partial(p) => p,
        };
        let Some(p) = accepted else {
            if history.is_empty() {
                break Termination::LineSearchFailed;
            }
            // retry from steepest descent before giving up
            history.clear();
            continue;
        };

        let s: Vec<f64> = dir.iter().map(|d| p.t * d).collect();
        let y: Vec<f64> = p.g.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-10 * dot(&y, &y).max(f64::MIN_POSITIVE) {
            if history.len() == opts.history {
                history.pop_front();
            }
            history.push_back((s.clone(), y, 1.0 / sy));
        }
        x.iter_mut().zip(&s).for_each(|(xi, si)| *xi += si);
        let change = fx - p.f;
        fx = p.f;
        g = p.g;
        trace.push(fx);
        iterations += 1;
        if change <= opts.tolerance_change * fx.abs().max(1.0) {
            break Termination::SmallChange;
        }
    };

    let evaluations = eval.count;
    Ok(LbfgsResult {
        x,
        f: fx,
        gradient: g,
        trace,
        iterations,
        evaluations,
        termination,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quadratic(c: Vec<f64>) -> impl FnMut(&[f64]) -> Result<(f64, Vec<f64>)> {
        move |x: &[f64]| {
            let g: Vec<f64> = x.iter().zip(&c).map(|(a, b)| 2.0 * (a - b)).collect();
            Ok((g.iter().map(|v| v * v / 4.0).sum(), g))
        }
    }

    fn rosenbrock(x: &[f64]) -> Result<(f64, Vec<f64>)> {
        let (a, b) = (x[0], x[1]);
        let f = (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2);
        let g = vec![
            -2.0 * (1.0 - a) - 400.0 * a * (b - a * a),
            200.0 * (b - a * a),
        ];
        Ok((f, g))
    }

    fn non_increasing(trace: &[f64]) -> bool {
        trace.windows(2).all(|w| w[1] <= w[0])
    }

    #[test]
    fn quadratic_converges_quickly() {
        let c = vec![3.0, -1.0, 0.5, 10.0];
        let opts = LbfgsOptions {
            max_iters: 20,
            grad_tol: 1e-10,
            tolerance_change: 0.0,
            ..Default::default()
        };
        let r = lbfgs_minimize(quadratic(c.clone()), &[0.0, 7.0, -4.0, 1.0], &opts).unwrap();
        assert!(r.iterations <= 20);
        for (a, b) in r.x.iter().zip(&c) {
            assert!((a - b).abs() < 1e-8, "{:?}", r.x);
        }
        assert!(non_increasing(&r.trace));
    }

    #[test]
    fn rosenbrock_from_standard_start() {
        let opts = LbfgsOptions {
            max_iters: 200,
            grad_tol: 1e-9,
            tolerance_change: 0.0,
            ..Default::default()
        };
        let r = lbfgs_minimize(rosenbrock, &[-1.2, 1.0], &opts).unwrap();
        assert!(r.f < 1e-6, "f = {} after {} iterations ({:?})", r.f, r.iterations, r.termination);
        assert!(non_increasing(&r.trace));
    }

    #[test]
    fn zero_gradient_returns_start() {
        let r = lbfgs_minimize(quadratic(vec![1.0, 2.0]), &[1.0, 2.0], &LbfgsOptions::default()).unwrap();
        assert_eq!(r.x, vec![1.0, 2.0]);
        assert_eq!(r.iterations, 0);
        assert_eq!(r.evaluations, 1);
        assert_eq!(r.termination, Termination::GradientTolerance);
    }

    #[test]
    fn non_finite_start_is_an_error() {
        let f = |_: &[f64]| Ok((f64::NAN, vec![0.0]));
        assert!(matches!(
            lbfgs_minimize(f, &[0.0], &LbfgsOptions::default()),
            Err(Error::Input(_))
        ));
    }

    #[test]
    fn walls_are_handled_by_backtracking() {
        // f = x² on x > -1, infinite beyond
        let f = |x: &[f64]| {
            if x[0] <= -1.0 {
                Ok((f64::INFINITY, vec![0.0]))
            } else {
                Ok(((x[0] - 5.0).powi(2) - (x[0] + 1.0).ln(), vec![2.0 * (x[0] - 5.0) - 1.0 / (x[0] + 1.0)]))
            }
        };
        let r = lbfgs_minimize(f, &[-0.5], &LbfgsOptions::default()).unwrap();
        assert!(non_increasing(&r.trace));
        assert!(r.gradient[0].abs() < 1e-6);
    }

    #[test]
    fn respects_iteration_budget() {
        let opts = LbfgsOptions {
            max_iters: 3,
            tolerance_change: 0.0,
            ..Default::default()
        };
        let r = lbfgs_minimize(rosenbrock, &[-1.2, 1.0], &opts).unwrap();
        assert_eq!(r.iterations, 3);
        assert_eq!(r.trace.len(), 4);
        assert_eq!(r.termination, Termination::MaxIterations);
    }
}
