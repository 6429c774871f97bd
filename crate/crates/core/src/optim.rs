//! Small dense unconstrained minimisers: BFGS with a strong-Wolfe line
//! search, and Nelder–Mead.
//!
//! Objectives may return non-finite or penalty values outside their feasible
//! region; the line search treats those as failed sufficient-decrease checks
//! and shrinks the step.

use alloc::vec;
use alloc::vec::Vec;
#[allow(unused_imports)] // inherent f64 methods shadow these when std is linked
use num_traits::Float;

/// Outcome of a minimisation run.
#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BfgsOptions {
    pub max_iter: usize,
    /// Converged when `‖∇f‖∞ ≤ grad_tol · (1 + |f|)`.
    pub grad_tol: f64,
}

impl Default for BfgsOptions {
    fn default() -> Self {
        BfgsOptions { max_iter: 500, grad_tol: 1e-6 }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn inf_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Minimise `f` given `fg(x) -> Some((f, ∇f))`, or `None` where the gradient
/// is undefined (infeasible points).
pub fn bfgs<F>(mut fg: F, x0: &[f64], opts: BfgsOptions) -> Minimum
where
    F: FnMut(&[f64]) -> Option<(f64, Vec<f64>)>,
{
    let n = x0.len();
    let mut evaluations = 0;
    let mut x = x0.to_vec();
    let (mut f, mut g) = match fg(&x) {
        Some(v) => v,
        None => return Minimum { x, value: f64::INFINITY, iterations: 0, evaluations: 1, converged: false },
    };
    evaluations += 1;

    // inverse Hessian approximation, row-major
    let mut h = identity(n);
    let mut first_step = true;
    let mut iterations = 0;
    let mut converged = inf_norm(&g) <= opts.grad_tol * (1.0 + f.abs());

    while !converged && iterations < opts.max_iter {
        iterations += 1;
        let mut d = mat_vec(&h, &g);
        for v in d.iter_mut() {
            *v = -*v;
        }
        let mut slope = dot(&d, &g);
        if !(slope < 0.0) {
            // lost descent: reset curvature
            h = identity(n);
            d = g.iter().map(|v| -v).collect();
            slope = dot(&d, &g);
            first_step = true;
        }
        let alpha0 = if first_step { (1.0 / inf_norm(&g).max(1e-300)).min(1.0) } else { 1.0 };
        let ls = wolfe_search(&mut fg, &x, f, &d, slope, alpha0, &mut evaluations);
        let Some((alpha, f_new, g_new)) = ls else {
            if first_step {
                break;
            }
            h = identity(n);
            first_step = true;
            continue;
        };
        let s: Vec<f64> = d.iter().map(|v| alpha * v).collect();
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        for (xi, si) in x.iter_mut().zip(&s) {
            *xi += si;
        }
        let f_old = f;
        f = f_new;
        g = g_new;
        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() {
            if first_step {
                // scale the initial inverse Hessian
                let scale = sy / dot(&y, &y);
                for (k, v) in h.iter_mut().enumerate() {
                    *v = if k % (n + 1) == 0 { scale } else { 0.0 };
                }
            }
            bfgs_update(&mut h, &s, &y, sy);
            first_step = false;
        }
        converged = inf_norm(&g) <= opts.grad_tol * (1.0 + f.abs());
        if !converged && (f_old - f).abs() <= f64::EPSILON * f.abs() && inf_norm(&s) == 0.0 {
            break;
        }
    }
    Minimum { x, value: f, iterations, evaluations, converged }
}

fn identity(n: usize) -> Vec<f64> {
    let mut h = vec![0.0; n * n];
    for i in 0..n {
        h[i * n + i] = 1.0;
    }
    h
}

fn mat_vec(h: &[f64], v: &[f64]) -> Vec<f64> {
    let n = v.len();
    (0..n).map(|i| dot(&h[i * n..(i + 1) * n], v)).collect()
}

/// `H ← (I − ρ s yᵀ) H (I − ρ y sᵀ) + ρ s sᵀ`.
fn bfgs_update(h: &mut [f64], s: &[f64], y: &[f64], sy: f64) {
    let n = s.len();
    let rho = 1.0 / sy;
    let hy = mat_vec(h, y);
    let yhy = dot(y, &hy);
    for i in 0..n {
        for j in 0..n {
            h[i * n + j] += -rho * (s[i] * hy[j] + hy[i] * s[j]) + (rho * rho * yhy + rho) * s[i] * s[j];
        }
    }
}

const C1: f64 = 1e-4;
const C2: f64 = 0.9;

type Trial = (f64, Vec<f64>, f64);

/// Strong-Wolfe line search: bracketing, then zoom with safeguarded cubic
/// interpolation.
fn wolfe_search<F>(
    fg: &mut F,
    x: &[f64],
    f0: f64,
    d: &[f64],
    slope0: f64,
    alpha0: f64,
    evals: &mut usize,
) -> Option<(f64, f64, Vec<f64>)>
where
    F: FnMut(&[f64]) -> Option<(f64, Vec<f64>)>,
{
    let mut eval = |alpha: f64| -> Option<Trial> {
        *evals += 1;
        let xt: Vec<f64> = x.iter().zip(d).map(|(a, b)| a + alpha * b).collect();
        let (f, g) = fg(&xt)?;
        if !f.is_finite() || g.iter().any(|v| !v.is_finite()) {
            return None;
        }
        let slope = dot(&g, d);
        Some((f, g, slope))
    };

    let mut prev = (0.0, f0, slope0);
    let mut alpha = alpha0;
    for i in 0..40 {
        let Some((f, g, slope)) = eval(alpha) else {
            // infeasible: treat like an Armijo failure
            return zoom(&mut eval, f0, slope0, prev, (alpha, f64::INFINITY, f64::NAN));
        };
        if f > f0 + C1 * alpha * slope0 || (i > 0 && f >= prev.1) {
            return zoom(&mut eval, f0, slope0, prev, (alpha, f, slope));
        }
        if slope.abs() <= -C2 * slope0 {
            return Some((alpha, f, g));
        }
        if slope >= 0.0 {
            return zoom(&mut eval, f0, slope0, (alpha, f, slope), prev);
        }
        prev = (alpha, f, slope);
        alpha *= 2.0;
    }
    None
}

/// Each bracket end is `(alpha, f, slope)`; `lo` always satisfies the
/// sufficient-decrease condition.
fn zoom<E>(
    eval: &mut E,
    f0: f64,
    slope0: f64,
    mut lo: (f64, f64, f64),
    mut hi: (f64, f64, f64),
) -> Option<(f64, f64, Vec<f64>)>
where
    E: FnMut(f64) -> Option<Trial>,
{
    let mut best: Option<(f64, f64, Vec<f64>)> = None;
    for _ in 0..60 {
        let (a, b) = if lo.0 < hi.0 { (lo.0, hi.0) } else { (hi.0, lo.0) };
        if b - a <= 1e-14 * b.max(1e-300) {
            break;
        }
        let margin = 0.1 * (b - a);
        let alpha = match cubic_min(lo, hi) {
            Some(t) if t > a + margin && t < b - margin => t,
            _ => 0.5 * (lo.0 + hi.0),
        };
        match eval(alpha) {
            None => hi = (alpha, f64::INFINITY, f64::NAN),
            Some((f, g, slope)) => {
                if f > f0 + C1 * alpha * slope0 || f >= lo.1 {
                    hi = (alpha, f, slope);
                } else {
                    if slope.abs() <= -C2 * slope0 {
                        return Some((alpha, f, g));
                    }
                    if slope * (hi.0 - lo.0) >= 0.0 {
                        hi = lo;
                    }
                    lo = (alpha, f, slope);
                    best = Some((alpha, f, g));
                }
            }
        }
    }
    // accept sufficient decrease even if the curvature condition never held
    best
}

/// Minimiser of the cubic through two points with slopes, if it exists.
fn cubic_min(p: (f64, f64, f64), q: (f64, f64, f64)) -> Option<f64> {
    let (a, fa, da) = p;
    let (b, fb, db) = q;
    if !(fa.is_finite() && fb.is_finite() && da.is_finite() && db.is_finite()) {
        return None;
    }
    let d1 = da + db - 3.0 * (fa - fb) / (a - b);
    let disc = d1 * d1 - da * db;
    if disc < 0.0 {
        return None;
    }
    let d2 = (b - a).signum() * disc.sqrt();
    let t = b - (b - a) * (db + d2 - d1) / (db - da + 2.0 * d2);
    t.is_finite().then_some(t)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NelderMeadOptions {
    pub max_evals: usize,
    /// Stop when the spread of simplex values is below
    /// `f_tol · (1 + |f_best|)` and the simplex diameter below `x_tol`.
    pub f_tol: f64,
    pub x_tol: f64,
    /// Relative size of the initial simplex.
    pub initial_step: f64,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        NelderMeadOptions { max_evals: 20_000, f_tol: 1e-12, x_tol: 1e-10, initial_step: 0.05 }
    }
}

/// Nelder–Mead with dimension-adaptive coefficients.
pub fn nelder_mead<F>(mut f: F, x0: &[f64], opts: NelderMeadOptions) -> Minimum
where
    F: FnMut(&[f64]) -> f64,
{
    let n = x0.len();
    let nf = n as f64;
    let (alpha, beta, gamma, delta) = (1.0, 1.0 + 2.0 / nf, 0.75 - 0.5 / nf, 1.0 - 1.0 / nf);
    let mut evaluations = 0;
    let mut eval = |x: &[f64], evaluations: &mut usize| {
        *evaluations += 1;
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };

    let scale = x0.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-3);
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    simplex.push((x0.to_vec(), eval(x0, &mut evaluations)));
    for i in 0..n {
        let mut x = x0.to_vec();
        let step = if x[i] != 0.0 { opts.initial_step * x[i].abs() } else { opts.initial_step * 0.1 * scale };
        x[i] += step;
        let v = eval(&x, &mut evaluations);
        simplex.push((x, v));
    }

    let mut iterations = 0;
    let mut converged = false;
    while evaluations < opts.max_evals {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let best = simplex[0].1;
        let worst = simplex[n].1;
        let diameter = simplex[1..]
            .iter()
            .map(|(x, _)| x.iter().zip(&simplex[0].0).fold(0.0f64, |m, (a, b)| m.max((a - b).abs())))
            .fold(0.0f64, f64::max);
        if (worst - best).abs() <= opts.f_tol * (1.0 + best.abs()) && diameter <= opts.x_tol * (1.0 + scale) {
            converged = true;
            break;
        }
        iterations += 1;

        let mut centroid = vec![0.0; n];
        for (x, _) in &simplex[..n] {
            for (c, v) in centroid.iter_mut().zip(x) {
                *c += v / nf;
            }
        }
        let along = |t: f64| -> Vec<f64> { centroid.iter().zip(&simplex[n].0).map(|(c, w)| c + t * (c - w)).collect() };

        let xr = along(alpha);
        let fr = eval(&xr, &mut evaluations);
        if fr < simplex[0].1 {
            let xe = along(alpha * beta);
            let fe = eval(&xe, &mut evaluations);
            simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
            continue;
        }
        if fr < simplex[n - 1].1 {
            simplex[n] = (xr, fr);
            continue;
        }
        let (xc, fc) = if fr < worst {
            let xc = along(alpha * gamma);
            let fc = eval(&xc, &mut evaluations);
            (xc, fc)
        } else {
            let xc = along(-gamma);
            let fc = eval(&xc, &mut evaluations);
            (xc, fc)
        };
        if fc < fr.min(worst) {
            simplex[n] = (xc, fc);
            continue;
        }
        // shrink towards the best vertex
        let x_best = simplex[0].0.clone();
        for vertex in simplex[1..].iter_mut() {
            for (v, b) in vertex.0.iter_mut().zip(&x_best) {
                *v = b + delta * (*v - b);
            }
            vertex.1 = eval(&vertex.0, &mut evaluations);
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    let (x, value) = simplex.swap_remove(0);
    Minimum { x, value, iterations, evaluations, converged }
}
