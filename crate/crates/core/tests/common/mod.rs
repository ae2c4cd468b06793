//! Independent reference computations shared by the oracle and acceptance
//! targets.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

const NEG_INF: f64 = f64::NEG_INFINITY;

/// Raw log densities for a random q = 2 instance; no row is all -inf.
pub fn random_two_column(rng: &mut ChaCha8Rng) -> (usize, Vec<f64>) {
    let p = rng.random_range(1..=6);
    let mut raw = Vec::with_capacity(2 * p);
    for _ in 0..p {
        let mut row = [rng.random_range(-20.0..0.0), rng.random_range(-20.0..0.0)];
        if rng.random_bool(0.15) {
            row[rng.random_range(0..2)] = NEG_INF;
        }
        raw.extend(row);
    }
    (p, raw)
}

/// `-(1/p) sum_j log(a e^{L_j1} + (1-a) e^{L_j2})`, computed directly.
pub fn two_atom_objective(raw: &[f64], a: f64) -> f64 {
    let p = raw.len() / 2;
    let mut total = 0.0;
    for row in raw.chunks(2) {
        let m = row[0].max(row[1]);
        let s = a * (row[0] - m).exp() + (1.0 - a) * (row[1] - m).exp();
        total += m + s.ln();
    }
    -total / p as f64
}

/// Golden-section search on [0, 1] for the convex one-dimensional problem.
pub fn brute_force_minimum(raw: &[f64]) -> f64 {
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for _ in 0..200 {
        let a = hi - phi * (hi - lo);
        let b = lo + phi * (hi - lo);
        if two_atom_objective(raw, a) <= two_atom_objective(raw, b) {
            hi = b;
        } else {
            lo = a;
        }
    }
    let mid = 0.5 * (lo + hi);
    [0.0, 1.0, mid]
        .iter()
        .map(|&a| two_atom_objective(raw, a))
        .fold(f64::INFINITY, f64::min)
}

/// Log density of `FS_2..FS_n` given `FS_1` from the explicit joint
/// covariance, plus `E[alpha_n | FS_1..FS_n]`.
pub fn dense_oracle(fs: &[f64], x: &[f64], tau: f64, sigma: f64) -> (f64, f64) {
    let n = fs.len();
    let (t2, s2) = (tau * tau, sigma * sigma);
    // Given FS_1 with a flat prior, alpha_1 ~ N(FS_1 / x_1, sigma^2 / x_1^2),
    // and Var(alpha_i) grows by tau^2 per step.
    let a1 = fs[0] / x[0];
    let v1 = s2 / (x[0] * x[0]);
    let var_alpha = |i: usize| v1 + t2 * i as f64;
    let m = n - 1;
    let mut cov = DMatrix::zeros(m, m);
    let mut mean = DVector::zeros(m);
    let mut cross = DVector::zeros(m);
    for a in 0..m {
        let i = a + 1;
        mean[a] = x[i] * a1;
        cross[a] = x[i] * var_alpha(i.min(n - 1));
        for b in 0..m {
            let j = b + 1;
            cov[(a, b)] = x[i] * x[j] * var_alpha(i.min(j));
            if a == b {
                cov[(a, b)] += s2;
            }
        }
    }
    let resid = DVector::from_iterator(m, (1..n).map(|i| fs[i])) - &mean;
    let chol = cov.clone().cholesky().expect("positive definite");
    let solved = chol.solve(&resid);
    let log_det = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    let ll = -0.5 * (m as f64 * (2.0 * std::f64::consts::PI).ln() + log_det + resid.dot(&solved));
    let filtered = a1 + cross.dot(&solved);
    (ll, filtered)
}


/// Cross product of `b - a` and `c - a`.
fn cross(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
    (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
}

/// Whether `x` lies in some triangle of `pts`, which for planar points is
/// membership in their convex hull.
pub fn in_hull_brute_force(pts: &[[f64; 2]], x: [f64; 2], eps: f64) -> bool {
    let n = pts.len();
    for i in 0..n {
        for j in i..n {
            if on_segment_linf(pts[i], pts[j], x) <= eps {
                return true;
            }
            for k in j + 1..n {
                let (a, b, c) = (pts[i], pts[j], pts[k]);
                let d1 = cross(a, b, x);
                let d2 = cross(b, c, x);
                let d3 = cross(c, a, x);
                let neg = d1 < -eps || d2 < -eps || d3 < -eps;
                let pos = d1 > eps || d2 > eps || d3 > eps;
                if !(neg && pos) && cross(a, b, c).abs() > eps {
                    return true;
                }
            }
        }
    }
    false
}

/// Chebyshev distance from `x` to the segment `[a, b]`.
pub fn on_segment_linf(a: [f64; 2], b: [f64; 2], x: [f64; 2]) -> f64 {
    let at = |t: f64| {
        let px = a[0] + t * (b[0] - a[0]);
        let py = a[1] + t * (b[1] - a[1]);
        (px - x[0]).abs().max((py - x[1]).abs())
    };
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for _ in 0..100 {
        let m1 = lo + (hi - lo) / 3.0;
        let m2 = hi - (hi - lo) / 3.0;
        if at(m1) <= at(m2) {
            hi = m2;
        } else {
            lo = m1;
        }
    }
    at(0.5 * (lo + hi)).min(at(0.0)).min(at(1.0))
}

/// Chebyshev distance from `x` to the convex hull of `pts`, after dividing
/// each coordinate by `scale`.
pub fn linf_distance_to_hull(pts: &[[f64; 2]], x: [f64; 2], scale: [f64; 2]) -> f64 {
    let s = |p: [f64; 2]| [p[0] / scale[0], p[1] / scale[1]];
    let scaled: Vec<[f64; 2]> = pts.iter().map(|&p| s(p)).collect();
    let xs = s(x);
    if in_hull_brute_force(&scaled, xs, 1e-12) {
        return 0.0;
    }
    let mut best = f64::INFINITY;
    for i in 0..scaled.len() {
        for j in i..scaled.len() {
            best = best.min(on_segment_linf(scaled[i], scaled[j], xs));
        }
    }
    best
}
