//! Evaluation metrics shared by the studies.

use crate::error::{Error, Result};

fn same_len(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::Incompatible { expected: b, found: a });
    }
    Ok(())
}

/// Total squared error `sum (estimate - truth)^2`.
pub fn tse(estimates: &[f64], truth: &[f64]) -> Result<f64> {
    same_len(estimates.len(), truth.len())?;
    Ok(estimates.iter().zip(truth).map(|(e, t)| (e - t).powi(2)).sum())
}

/// Variance-stabilized batting average `arcsin sqrt((H + 1/4) / (A + 1/2))`.
pub fn stabilize(at_bats: u64, hits: u64) -> f64 {
    ((hits as f64 + 0.25) / (at_bats as f64 + 0.5)).sqrt().asin()
}

/// `sum_j (estimate_j - W_j)^2 - 1/(4 A_j)` against held-out `(A, H)` pairs.
/// Can be negative for an estimator close to the held-out truth.
pub fn baseball_tse(estimates: &[f64], test: &[(u64, u64)]) -> Result<f64> {
    same_len(estimates.len(), test.len())?;
    Ok(estimates
        .iter()
        .zip(test)
        .map(|(e, &(a, h))| (e - stabilize(a, h)).powi(2) - 1.0 / (4.0 * a as f64))
        .sum())
}

/// `sign(x) max(|x| - t, 0)`.
pub fn soft_threshold(x: f64, t: f64) -> f64 {
    x.signum() * (x.abs() - t).max(0.0)
}

/// TSE-minimizing threshold over `t = 0, s, 2s, .., max|muhat|` with
/// `s = max|muhat| / 1000`. Returns `(t*, TSE*)`; ties keep the smaller t.
pub fn soft_threshold_oracle(muhat: &[f64], truth: &[f64]) -> Result<(f64, f64)> {
    same_len(muhat.len(), truth.len())?;
    let top = muhat.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let eval = |t: f64| -> f64 {
        muhat
            .iter()
            .zip(truth)
            .map(|(x, m)| (soft_threshold(*x, t) - m).powi(2))
            .sum()
    };
    let mut best = (0.0, eval(0.0));
    if top > 0.0 {
        let step = top / 1000.0;
        for i in 1..=1000 {
            let t = step * i as f64;
            let v = eval(t);
            if v < best.1 {
                best = (t, v);
            }
        }
    }
    Ok(best)
}

/// Mean squared error.
pub fn mse(predictions: &[f64], truth: &[f64]) -> Result<f64> {
    same_len(predictions.len(), truth.len())?;
    if predictions.is_empty() {
        return Err(Error::InvalidObservation("no points to score".into()));
    }
    Ok(tse(predictions, truth)? / predictions.len() as f64)
}

/// Sample mean and standard deviation (n - 1 denominator; 0 for one value).
pub fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}
