//! Limited-memory BFGS with box bounds and an Armijo backtracking search.
//!
//! Steps are projected onto the box and only accepted on sufficient decrease,
//! so the objective never increases between accepted iterates.

use std::collections::VecDeque;

const HISTORY: usize = 8;
const ARMIJO_C: f64 = 1e-4;
const MAX_BACKTRACK: usize = 40;

#[derive(Debug, Clone)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub f: f64,
    /// Objective at the start point and after every accepted step.
    pub trace: Vec<f64>,
}

fn project(x: &mut [f64], lo: &[f64], hi: &[f64]) {
    for ((v, &l), &h) in x.iter_mut().zip(lo).zip(hi) {
        *v = v.clamp(l, h);
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Components pinned at a bound with the gradient pushing outward.
fn pinned(x: &[f64], g: &[f64], lo: &[f64], hi: &[f64]) -> Vec<bool> {
    (0..x.len())
        .map(|i| (x[i] <= lo[i] && g[i] > 0.0) || (x[i] >= hi[i] && g[i] < 0.0))
        .collect()
}

/// Minimizes `f` over the box `[lo, hi]`. `f` returns `None` where it cannot
/// be evaluated; such points are treated as infinitely bad.
///
/// Returns `None` only if the start point itself cannot be evaluated.
pub fn minimize<F>(
    mut f: F,
    x0: &[f64],
    lo: &[f64],
    hi: &[f64],
    max_iter: usize,
    grad_tol: f64,
) -> Option<Minimum>
where
    F: FnMut(&[f64]) -> Option<(f64, Vec<f64>)>,
{
    let mut x = x0.to_vec();
    project(&mut x, lo, hi);
    let (mut fx, mut g) = f(&x)?;
    let mut trace = vec![fx];
    let mut hist: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::new();

    for _ in 0..max_iter {
        let pin = pinned(&x, &g, lo, hi);
        let gfree: Vec<f64> = g
            .iter()
            .zip(&pin)
            .map(|(&gi, &p)| if p { 0.0 } else { gi })
            .collect();
        if gfree.iter().fold(0.0f64, |m, v| m.max(v.abs())) < grad_tol {
            break;
        }

        let mut accepted = None;
        for attempt in 0..2 {
            if attempt == 1 {
                if hist.is_empty() {
                    break;
                }
                hist.clear();
            }
            let mut d = two_loop(&gfree, &hist);
            for (di, &p) in d.iter_mut().zip(&pin) {
                if p {
                    *di = 0.0;
                }
            }
            if dot(&d, &gfree) >= 0.0 {
                d = gfree.iter().map(|v| -v).collect();
            }
            let mut step = if hist.is_empty() {
                1.0f64.min(1.0 / gfree.iter().fold(0.0f64, |m, v| m.max(v.abs())))
            } else {
                1.0
            };
            for _ in 0..MAX_BACKTRACK {
                let mut xn: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + step * b).collect();
                project(&mut xn, lo, hi);
                let dx: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
                let slope = dot(&g, &dx);
                if dx.iter().all(|&v| v == 0.0) || slope >= 0.0 {
                    break;
                }
                if let Some((fnew, gnew)) = f(&xn) {
                    if fnew.is_finite() && fnew <= fx + ARMIJO_C * slope {
                        accepted = Some((xn, fnew, gnew, dx));
                        break;
                    }
                }
                step *= 0.5;
            }
            if accepted.is_some() {
                break;
            }
        }

        let Some((xn, fnew, gnew, s)) = accepted else {
            break;
        };
        let yv: Vec<f64> = gnew.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &yv);
        if sy > 1e-12 * dot(&yv, &yv).sqrt() * dot(&s, &s).sqrt() && sy > 0.0 {
            if hist.len() == HISTORY {
                hist.pop_front();
            }
            hist.push_back((s, yv, 1.0 / sy));
        }
        let converged = (fx - fnew).abs() <= 1e-12 * fx.abs().max(1.0);
        x = xn;
        fx = fnew;
        g = gnew;
        trace.push(fx);
        if converged {
            break;
        }
    }
    Some(Minimum { x, f: fx, trace })
}

/// `-H g` from the stored curvature pairs.
fn two_loop(g: &[f64], hist: &VecDeque<(Vec<f64>, Vec<f64>, f64)>) -> Vec<f64> {
    let mut q = g.to_vec();
    let mut alphas = Vec::with_capacity(hist.len());
    for (s, y, rho) in hist.iter().rev() {
        let a = rho * dot(s, &q);
        q.iter_mut().zip(y).for_each(|(qi, yi)| *qi -= a * yi);
        alphas.push(a);
    }
    if let Some((s, y, _)) = hist.back() {
        let gamma = dot(s, y) / dot(y, y);
        q.iter_mut().for_each(|v| *v *= gamma);
    }
    for ((s, y, rho), a) in hist.iter().zip(alphas.into_iter().rev()) {
        let b = rho * dot(y, &q);
        q.iter_mut().zip(s).for_each(|(qi, si)| *qi += (a - b) * si);
    }
    q.iter_mut().for_each(|v| *v = -*v);
    q
}
