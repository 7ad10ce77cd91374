//! Adaptive Gauss–Legendre quadrature on bounded intervals.
//!
//! A 16-point Gauss–Legendre rule is refined by interval bisection: a segment
//! is accepted once its one-panel estimate agrees with the sum of its two
//! half-panel estimates within the segment's share of the error budget.
//! Refinement order is fixed, so results are bitwise deterministic.

use once_cell::sync::Lazy;

use crate::error::{Error, Result};

/// Default absolute tolerance used by moment integrals.
pub const DEFAULT_TOL: f64 = 1e-10;
/// Maximum bisection depth before giving up.
pub const MAX_DEPTH: u32 = 30;

/// Value of an integral together with an accumulated error bound.
#[derive(Debug, Clone, Copy)]
pub struct Quadrature {
    pub value: f64,
    pub error_bound: f64,
    pub panels: usize,
}

const GL_POINTS: usize = 16;

/// Nodes and weights of the n-point Gauss–Legendre rule on [-1, 1],
/// computed by Newton iteration on the Legendre recurrence.
fn legendre_rule(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        // Tricomi-style initial guess for the i-th positive root.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre_eval(n, x);
            let step = p / dp;
            x -= step;
            if step.abs() < 1e-15 {
                break;
            }
        }
        let (_, dp) = legendre_eval(n, x);
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// Legendre polynomial P_n and its derivative at x via the three-term recurrence.
fn legendre_eval(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

static GL16: Lazy<(Vec<f64>, Vec<f64>)> = Lazy::new(|| legendre_rule(GL_POINTS));

fn gl16_panel<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> f64 {
    let (nodes, weights) = &*GL16;
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    let mut sum = 0.0;
    for (x, w) in nodes.iter().zip(weights.iter()) {
        sum += w * f(mid + half * x);
    }
    sum * half
}

/// Integrate `f` over `[a, b]` to absolute tolerance `tol`.
///
/// `min_depth` forces an initial uniform refinement of 2^min_depth segments
/// before any acceptance test, which protects against integrands whose
/// support is much narrower than the interval.
pub fn integrate_with<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    tol: f64,
    min_depth: u32,
) -> Result<Quadrature> {
    if !(b > a) {
        return Ok(Quadrature {
            value: 0.0,
            error_bound: 0.0,
            panels: 0,
        });
    }
    let total_len = b - a;
    struct Seg {
        a: f64,
        b: f64,
        est: f64,
        depth: u32,
    }
    let mut stack = vec![Seg {
        a,
        b,
        est: gl16_panel(f, a, b),
        depth: 0,
    }];
    let mut value = 0.0;
    let mut error_bound = 0.0;
    let mut panels = 0usize;
    let mut failed = false;
    while let Some(seg) = stack.pop() {
        let mid = 0.5 * (seg.a + seg.b);
        let left = gl16_panel(f, seg.a, mid);
        let right = gl16_panel(f, mid, seg.b);
        let refined = left + right;
        let err = (refined - seg.est).abs();
        let budget = tol * (seg.b - seg.a) / total_len;
        if seg.depth >= min_depth && err <= budget {
            value += refined;
            error_bound += err;
            panels += 2;
        } else if seg.depth >= MAX_DEPTH {
            value += refined;
            error_bound += err;
            panels += 2;
            failed = true;
        } else {
            // Right pushed first so the left half is processed next:
            // segments are accepted strictly left to right.
            stack.push(Seg {
                a: mid,
                b: seg.b,
                est: right,
                depth: seg.depth + 1,
            });
            stack.push(Seg {
                a: seg.a,
                b: mid,
                est: left,
                depth: seg.depth + 1,
            });
        }
    }
    if failed {
        return Err(Error::QuadratureDidNotConverge {
            estimate: value,
            bound: error_bound,
            requested: tol,
            max_depth: MAX_DEPTH,
        });
    }
    Ok(Quadrature {
        value,
        error_bound,
        panels,
    })
}

/// Integrate with the default minimum refinement (4 base segments).
pub fn integrate<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> Result<Quadrature> {
    integrate_with(f, a, b, tol, 2)
}
