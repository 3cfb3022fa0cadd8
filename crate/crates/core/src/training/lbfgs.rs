//! Limited-memory BFGS with a strong-Wolfe line search, minimizing `f`.

use std::collections::VecDeque;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LbfgsSettings {
    pub memory: usize,
    pub max_iterations: usize,
    /// Stop when `max_k |∂f/∂x_k|` falls to this value.
    pub gradient_tolerance: f64,
    pub c1: f64,
    pub c2: f64,
    pub max_line_search: usize,
}

impl Default for LbfgsSettings {
    fn default() -> Self {
        Self {
            memory: 10,
            max_iterations: 500,
            gradient_tolerance: 1e-5,
            c1: 1e-4,
            c2: 0.9,
            max_line_search: 40,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LbfgsOutcome {
    pub x: Vec<f64>,
    pub value: f64,
    pub gradient: Vec<f64>,
    pub iterations: usize,
    /// `f` after initialization and after every accepted step.
    pub trace: Vec<f64>,
    pub converged: bool,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

struct Point {
    alpha: f64,
    value: f64,
    slope: f64,
    gradient: Vec<f64>,
}

/// Minimizer of the cubic through two points with values and slopes,
/// falling back to bisection when it is undefined or leaves the bracket.
fn cubic_step(lo: &Point, hi: &Point) -> f64 {
    let (a, b) = (lo.alpha, hi.alpha);
    let d1 = lo.slope + hi.slope - 3.0 * (lo.value - hi.value) / (a - b);
    let disc = d1 * d1 - lo.slope * hi.slope;
    let mid = 0.5 * (a + b);
    if disc < 0.0 || !disc.is_finite() {
        return mid;
    }
    let d2 = (b - a).signum() * disc.sqrt();
    let step = b - (b - a) * (hi.slope + d2 - d1) / (hi.slope - lo.slope + 2.0 * d2);
    let (left, right) = (a.min(b), a.max(b));
    let margin = 0.1 * (right - left);
    if step.is_finite() && step > left + margin && step < right - margin {
        step
    } else {
        mid
    }
}

pub fn minimize<F>(mut f: F, x0: Vec<f64>, settings: &LbfgsSettings) -> Result<LbfgsOutcome>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    let n = x0.len();
    let mut x = x0;
    let (mut value, mut grad) = f(&x)?;
    if !value.is_finite() {
        return Err(Error::NonFiniteObjective {
            iteration: 0,
            theta: x,
        });
    }
    let mut trace = vec![value];
    let mut history: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::new();
    let mut iterations = 0;
    let mut converged = max_abs(&grad) <= settings.gradient_tolerance;
    let mut trial = vec![0.0; n];

    while !converged && iterations < settings.max_iterations {
        // two-loop recursion
        let mut dir: Vec<f64> = grad.iter().map(|g| -g).collect();
        let mut coeffs = Vec::with_capacity(history.len());
        for (s, y, rho) in history.iter().rev() {
            let a = rho * dot(s, &dir);
            dir.iter_mut().zip(y).for_each(|(d, yv)| *d -= a * yv);
            coeffs.push(a);
        }
        if let Some((s, y, _)) = history.back() {
            let gamma = dot(s, y) / dot(y, y);
            dir.iter_mut().for_each(|d| *d *= gamma);
        }
        for ((s, y, rho), a) in history.iter().zip(coeffs.iter().rev()) {
            let b = rho * dot(y, &dir);
            dir.iter_mut().zip(s).for_each(|(d, sv)| *d += (a - b) * sv);
        }
        let mut slope0 = dot(&grad, &dir);
        if !(slope0 < 0.0) {
            history.clear();
            dir = grad.iter().map(|g| -g).collect();
            slope0 = -dot(&grad, &grad);
        }
        let initial = if history.is_empty() {
            (1.0 / dot(&dir, &dir).sqrt()).min(1.0)
        } else {
            1.0
        };

        let mut eval = |alpha: f64, trial: &mut Vec<f64>| -> Result<Point> {
            for ((t, xv), d) in trial.iter_mut().zip(&x).zip(&dir) {
                *t = xv + alpha * d;
            }
            let (v, g) = f(trial)?;
            if !v.is_finite() || g.iter().any(|gv| !gv.is_finite()) {
                return Err(Error::NonFiniteObjective {
                    iteration: iterations + 1,
                    theta: trial.clone(),
                });
            }
            Ok(Point {
                alpha,
                slope: dot(&g, &dir),
                value: v,
                gradient: g,
            })
        };

        let origin = Point {
            alpha: 0.0,
            value,
            slope: slope0,
            gradient: grad.clone(),
        };
        let sufficient = |p: &Point| p.value <= value + settings.c1 * p.alpha * slope0;
        let curvature = |p: &Point| p.slope.abs() <= -settings.c2 * slope0;

        let mut accepted: Option<Point> = None;
        let mut prev = origin;
        let mut alpha = initial;
        let mut bracket: Option<(Point, Point)> = None;
        for i in 0..settings.max_line_search {
            let p = eval(alpha, &mut trial)?;
            if !sufficient(&p) || (i > 0 && p.value >= prev.value) {
                bracket = Some((prev, p));
                break;
            }
            if curvature(&p) {
                accepted = Some(p);
                break;
            }
            if p.slope >= 0.0 {
                bracket = Some((p, prev));
                break;
            }
            alpha *= 2.0;
            prev = p;
        }
        if accepted.is_none() {
            if let Some((mut lo, mut hi)) = bracket {
                for _ in 0..settings.max_line_search {
                    let a = cubic_step(&lo, &hi);
                    if (a - lo.alpha).abs() <= 1e-16 * a.abs().max(1.0) {
                        break;
                    }
                    let p = eval(a, &mut trial)?;
                    if !sufficient(&p) || p.value >= lo.value {
                        hi = p;
                    } else {
                        if curvature(&p) {
                            accepted = Some(p);
                            break;
                        }
                        if p.slope * (hi.alpha - lo.alpha) >= 0.0 {
                            hi = lo;
                        }
                        lo = p;
                    }
                }
                if accepted.is_none() && lo.alpha > 0.0 && lo.value < value {
                    accepted = Some(lo);
                }
            }
        }
        let Some(step) = accepted else {
            break;
        };

        let s: Vec<f64> = dir.iter().map(|d| step.alpha * d).collect();
        let y: Vec<f64> = step.gradient.iter().zip(&grad).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        x.iter_mut().zip(&s).for_each(|(xv, sv)| *xv += sv);
        let decrease = value - step.value;
        value = step.value;
        grad = step.gradient;
        iterations += 1;
        trace.push(value);
        if sy > 1e-12 * dot(&y, &y).sqrt() * dot(&s, &s).sqrt() {
            if history.len() == settings.memory {
                history.pop_front();
            }
            history.push_back((s, y, 1.0 / sy));
        }
        converged = max_abs(&grad) <= settings.gradient_tolerance;
        if !converged && decrease <= 4.0 * f64::EPSILON * value.abs().max(1.0) {
            break;
        }
    }
    Ok(LbfgsOutcome {
        x,
        value,
        gradient: grad,
        iterations,
        trace,
        converged,
    })
}
