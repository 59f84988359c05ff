// SPDX-License-Identifier: Apache-2.0

//! Dense BFGS on the inverse Hessian with a strong-Wolfe line search
//! (bracketing + cubic-interpolation zoom).

use crate::error::Result;

const C1: f64 = 1e-4;
const C2: f64 = 0.9;
const MAX_BRACKET: usize = 40;
const MAX_ZOOM: usize = 40;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BfgsOptions {
    pub max_iterations: usize,
    /// Stop when `‖g‖ < gtol`.
    pub gtol: f64,
    /// Stop when an accepted step changes `f` by less than `ftol`.
    pub ftol: f64,
    /// Stop as soon as `f` drops below this value.
    pub stop_below: Option<f64>,
}

impl Default for BfgsOptions {
    fn default() -> Self {
        Self {
            max_iterations: 2000,
            gtol: 1e-9,
            ftol: 1e-12,
            stop_below: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BfgsStatus {
    GradientTolerance,
    FunctionTolerance,
    TargetReached,
    MaxIterations,
    LineSearchFailed,
}

#[derive(Debug, Clone)]
pub struct BfgsOutcome {
    pub x: Vec<f64>,
    pub f: f64,
    pub gradient_norm: f64,
    pub iterations: usize,
    pub evaluations: usize,
    /// `(iteration, f)` after every accepted step, starting with iteration 0.
    pub trace: Vec<(usize, f64)>,
    pub status: BfgsStatus,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

struct Point {
    alpha: f64,
    f: f64,
    dphi: f64,
    g: Vec<f64>,
}

struct Searcher<'a, F> {
    fg: &'a mut F,
    x: &'a [f64],
    p: &'a [f64],
    evaluations: usize,
}

impl<F> Searcher<'_, F>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    fn eval(&mut self, alpha: f64) -> Result<Point> {
        let xt: Vec<f64> = self.x.iter().zip(self.p).map(|(x, p)| x + alpha * p).collect();
        self.evaluations += 1;
        let (f, g) = (self.fg)(&xt)?;
        let dphi = dot(&g, self.p);
        Ok(Point { alpha, f, dphi, g })
    }
}

/// Minimizer of the cubic through `(a, fa, da)` and `(b, fb, db)`, kept
/// inside the central 80% of the bracket.
fn cubic_step(lo: &Point, hi: &Point) -> f64 {
    let (a, b) = (lo.alpha, hi.alpha);
    let d1 = lo.dphi + hi.dphi - 3.0 * (lo.f - hi.f) / (a - b);
    let disc = d1 * d1 - lo.dphi * hi.dphi;
    let mid = 0.5 * (a + b);
    let mut t = if disc >= 0.0 {
        let d2 = (b - a).signum() * disc.sqrt();
        b - (b - a) * (hi.dphi + d2 - d1) / (hi.dphi - lo.dphi + 2.0 * d2)
    } else {
        mid
    };
    if !t.is_finite() {
        t = mid;
    }
    let (left, right) = if a < b { (a, b) } else { (b, a) };
    let margin = 0.1 * (right - left);
    t.clamp(left + margin, right - margin)
}

/// Strong-Wolfe step along `p`. Returns the accepted point, or the best
/// sufficient-decrease point when the curvature condition cannot be met.
fn line_search<F>(s: &mut Searcher<'_, F>, f0: f64, d0: f64, alpha0: f64) -> Result<Option<Point>>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    let armijo = |pt: &Point| pt.f <= f0 + C1 * pt.alpha * d0;
    let curvature = |pt: &Point| pt.dphi.abs() <= -C2 * d0;
    let mut prev = Point {
        alpha: 0.0,
        f: f0,
        dphi: d0,
        g: Vec::new(),
    };
    let mut alpha = alpha0;
    let mut fallback: Option<Point> = None;
    for i in 0..MAX_BRACKET {
        let cur = s.eval(alpha)?;
        if !cur.f.is_finite() || !armijo(&cur) || (i > 0 && cur.f >= prev.f) {
            return zoom(s, f0, d0, prev, cur, fallback);
        }
        if curvature(&cur) {
            return Ok(Some(cur));
        }
        if cur.dphi >= 0.0 {
            return zoom(s, f0, d0, cur, prev, fallback);
        }
        alpha *= 2.0;
        prev = cur;
        fallback = Some(Point {
            alpha: prev.alpha,
            f: prev.f,
            dphi: prev.dphi,
            g: prev.g.clone(),
        });
    }
    Ok(fallback)
}

fn zoom<F>(
    s: &mut Searcher<'_, F>,
    f0: f64,
    d0: f64,
    mut lo: Point,
    mut hi: Point,
    mut fallback: Option<Point>,
) -> Result<Option<Point>>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    if !hi.f.is_finite() {
        hi.f = f64::MAX;
        hi.dphi = 0.0;
    }
    for _ in 0..MAX_ZOOM {
        let alpha = if hi.f == f64::MAX {
            0.5 * (lo.alpha + hi.alpha)
        } else {
            cubic_step(&lo, &hi)
        };
        if (hi.alpha - lo.alpha).abs() < 1e-16 * lo.alpha.abs().max(1.0) {
            break;
        }
        let cur = s.eval(alpha)?;
        if !cur.f.is_finite() || cur.f > f0 + C1 * cur.alpha * d0 || cur.f >= lo.f {
            hi = cur;
            if !hi.f.is_finite() {
                hi.f = f64::MAX;
                hi.dphi = 0.0;
            }
        } else {
            if cur.dphi.abs() <= -C2 * d0 {
                return Ok(Some(cur));
            }
            if cur.dphi * (hi.alpha - lo.alpha) >= 0.0 {
                hi = lo;
            }
            lo = cur;
            if lo.alpha > 0.0 && fallback.as_ref().is_none_or(|fb| lo.f < fb.f) {
                fallback = Some(Point {
                    alpha: lo.alpha,
                    f: lo.f,
                    dphi: lo.dphi,
                    g: lo.g.clone(),
                });
            }
        }
    }
    Ok(fallback.filter(|p| p.f < f0))
}

/// Minimizes `f` from `x0`; `fg` returns the value and gradient.
pub fn minimize<F>(mut fg: F, x0: &[f64], options: &BfgsOptions) -> Result<BfgsOutcome>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    let n = x0.len();
    let mut x = x0.to_vec();
    let (mut f, mut g) = fg(&x)?;
    let mut evaluations = 1;
    let mut trace = vec![(0, f)];
    let mut h = identity(n);
    let mut h_is_identity = true;
    let mut iterations = 0;

    let status = loop {
        if options.stop_below.is_some_and(|t| f < t) {
            break BfgsStatus::TargetReached;
        }
        if norm(&g) < options.gtol {
            break BfgsStatus::GradientTolerance;
        }
        if iterations >= options.max_iterations {
            break BfgsStatus::MaxIterations;
        }
        let mut p = mat_vec_neg(&h, &g, n);
        let mut d0 = dot(&g, &p);
        if d0 >= 0.0 {
            h = identity(n);
            h_is_identity = true;
            p = g.iter().map(|v| -v).collect();
            d0 = dot(&g, &p);
        }
        let alpha0 = if h_is_identity { (1.0 / norm(&g)).min(1.0) } else { 1.0 };
        let mut searcher = Searcher {
            fg: &mut fg,
            x: &x,
            p: &p,
            evaluations: 0,
        };
        let found = line_search(&mut searcher, f, d0, alpha0)?;
        evaluations += searcher.evaluations;
        let Some(pt) = found else {
            if h_is_identity {
                break BfgsStatus::LineSearchFailed;
            }
            h = identity(n);
            h_is_identity = true;
            continue;
        };
        iterations += 1;
        let s: Vec<f64> = p.iter().map(|v| pt.alpha * v).collect();
        let y: Vec<f64> = pt.g.iter().zip(&g).map(|(a, b)| a - b).collect();
        let df = f - pt.f;
        for (xi, si) in x.iter_mut().zip(&s) {
            *xi += si;
        }
        f = pt.f;
        g = pt.g;
        trace.push((iterations, f));

        let sy = dot(&s, &y);
        if sy > 1e-300 {
            if h_is_identity {
                // rescale the initial guess to the observed curvature
                let gamma = sy / dot(&y, &y);
                for v in h.iter_mut() {
                    *v *= gamma;
                }
            }
            bfgs_update(&mut h, &s, &y, sy, n);
            h_is_identity = false;
        }
        if df.abs() < options.ftol {
            break BfgsStatus::FunctionTolerance;
        }
    };
    Ok(BfgsOutcome {
        gradient_norm: norm(&g),
        x,
        f,
        iterations,
        evaluations,
        trace,
        status,
    })
}

fn identity(n: usize) -> Vec<f64> {
    let mut h = vec![0.0; n * n];
    for i in 0..n {
        h[i * n + i] = 1.0;
    }
    h
}

fn mat_vec_neg(h: &[f64], g: &[f64], n: usize) -> Vec<f64> {
    (0..n).map(|i| -dot(&h[i * n..(i + 1) * n], g)).collect()
}

/// `H ← (I − ρ s yᵀ) H (I − ρ y sᵀ) + ρ s sᵀ`.
fn bfgs_update(h: &mut [f64], s: &[f64], y: &[f64], sy: f64, n: usize) {
    let rho = 1.0 / sy;
    let hy: Vec<f64> = (0..n).map(|i| dot(&h[i * n..(i + 1) * n], y)).collect();
    let yhy = dot(y, &hy);
    let coef = (1.0 + rho * yhy) * rho;
    for i in 0..n {
        for j in 0..n {
            h[i * n + j] += coef * s[i] * s[j] - rho * (hy[i] * s[j] + s[i] * hy[j]);
        }
    }
}
