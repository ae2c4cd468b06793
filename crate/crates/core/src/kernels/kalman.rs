//! Scalar Kalman filter for the random-walk sensitivity model
//!
//! ```text
//! FS_i    = alpha_i * ISIG_i + sigma * eps_i
//! alpha_i = alpha_{i-1} + tau * delta_{i-1}
//! ```
//!
//! The initial state has a diffuse prior, so the filter conditions on the
//! first observation (posterior mean `FS_1 / ISIG_1`, variance
//! `sigma^2 / ISIG_1^2`) and the likelihood covers observations `2..n` only.

use std::f64::consts::PI;

use super::obs::SeriesObs;
use crate::error::{Error, Result};

/// Search box for `(log tau, log sigma)` maximum likelihood.
pub const SS_SEARCH_LO: f64 = -8.0;
pub const SS_SEARCH_HI: f64 = 4.0;
const SS_COARSE_STEP: f64 = 0.1;
const SS_REFINEMENTS: usize = 4;
const SS_MAX_RECENTER: usize = 200;

#[derive(Debug, Clone, PartialEq)]
pub struct FilterOutput {
    /// `E[alpha_i | FS_1..FS_i]`.
    pub filtered_means: Vec<f64>,
    /// `Var[alpha_i | FS_1..FS_i]`.
    pub filtered_vars: Vec<f64>,
    /// One-step-ahead `E[alpha_i | FS_1..FS_{i-1}]`; NaN at `i = 0`.
    pub predicted_means: Vec<f64>,
    /// Conditional log-likelihood of observations `2..=i+1`; 0 at `i = 0`.
    pub cumulative_log_lik: Vec<f64>,
    /// Log density of `FS_2..FS_n` given `FS_1`.
    pub cond_log_lik: f64,
}

fn check_series(obs: &SeriesObs) -> Result<()> {
    if obs.len() < 2 {
        return Err(Error::InsufficientSeries { len: obs.len(), min: 2 });
    }
    if obs.covariates.len() != obs.len() {
        return Err(Error::InvalidObservation("responses and covariates differ in length".into()));
    }
    Ok(())
}

fn check_atom(atom: &[f64]) -> Result<(f64, f64)> {
    match atom {
        [log_tau, log_sigma] if log_tau.is_finite() && log_sigma.is_finite() => Ok((*log_tau, *log_sigma)),
        _ => Err(Error::Domain {
            kernel: "local-level-ss",
            reason: format!("expected finite (log tau, log sigma), got {atom:?}"),
        }),
    }
}

/// Runs the filter for `atom = (log tau, log sigma)`.
pub fn ss_filter(obs: &SeriesObs, atom: &[f64]) -> Result<FilterOutput> {
    check_series(obs)?;
    let (log_tau, log_sigma) = check_atom(atom)?;
    let tau2 = (2.0 * log_tau).exp();
    let sigma2 = (2.0 * log_sigma).exp();
    let n = obs.len();

    let mut out = FilterOutput {
        filtered_means: Vec::with_capacity(n),
        filtered_vars: Vec::with_capacity(n),
        predicted_means: Vec::with_capacity(n),
        cumulative_log_lik: Vec::with_capacity(n),
        cond_log_lik: 0.0,
    };
    let x0 = obs.covariates[0];
    let mut mean = obs.responses[0] / x0;
    let mut var = sigma2 / (x0 * x0);
    out.filtered_means.push(mean);
    out.filtered_vars.push(var);
    out.predicted_means.push(f64::NAN);
    out.cumulative_log_lik.push(0.0);

    let mut ll = 0.0;
    for i in 1..n {
        let x = obs.covariates[i];
        let y = obs.responses[i];
        let prior_var = var + tau2;
        out.predicted_means.push(mean);
        let s = x * x * prior_var + sigma2;
        let resid = y - x * mean;
        ll += -0.5 * ((2.0 * PI * s).ln() + resid * resid / s);
        let gain = prior_var * x / s;
        mean += gain * resid;
        var = prior_var * sigma2 / s;
        out.filtered_means.push(mean);
        out.filtered_vars.push(var);
        out.cumulative_log_lik.push(ll);
    }
    out.cond_log_lik = ll;
    Ok(out)
}

/// Conditional log-likelihood only; allocation free.
pub fn ss_log_lik(obs: &SeriesObs, log_tau: f64, log_sigma: f64) -> f64 {
    let tau2 = (2.0 * log_tau).exp();
    let sigma2 = (2.0 * log_sigma).exp();
    let x0 = obs.covariates[0];
    let mut mean = obs.responses[0] / x0;
    let mut var = sigma2 / (x0 * x0);
    let mut ll = 0.0;
    for (&x, &y) in obs.covariates.iter().zip(&obs.responses).skip(1) {
        let prior_var = var + tau2;
        let s = x * x * prior_var + sigma2;
        let resid = y - x * mean;
        ll += -0.5 * ((2.0 * PI * s).ln() + resid * resid / s);
        mean += prior_var * x / s * resid;
        var = prior_var * sigma2 / s;
    }
    ll
}

fn axis(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let count = ((hi - lo) / step).round() as usize;
    (0..=count).map(|i| lo + step * i as f64).collect()
}

/// Coarse-to-fine grid search for the maximizer of `objective` over
/// `[SS_SEARCH_LO, SS_SEARCH_HI]^2`. A 0.1 lattice locates the basin; each
/// refinement scans a 21 x 21 window at a tenth of the previous step,
/// re-centring on the incumbent until it stops moving, so ridges that leave
/// the window are followed. The final step is 1e-5. Ties keep the first
/// point visited.
pub fn maximize_log_scale_2d<F>(objective: F) -> (f64, f64)
where
    F: Fn(f64, f64) -> f64,
{
    let mut best = (SS_SEARCH_LO, SS_SEARCH_LO);
    let mut best_val = f64::NEG_INFINITY;
    let coarse = axis(SS_SEARCH_LO, SS_SEARCH_HI, SS_COARSE_STEP);
    for &a in &coarse {
        for &b in &coarse {
            let v = objective(a, b);
            if v > best_val {
                best_val = v;
                best = (a, b);
            }
        }
    }
    let mut step = SS_COARSE_STEP;
    for _ in 0..SS_REFINEMENTS {
        let fine = step / 10.0;
        for _ in 0..SS_MAX_RECENTER {
            let (ca, cb) = best;
            for ia in -10i32..=10 {
                let a = (ca + fine * ia as f64).clamp(SS_SEARCH_LO, SS_SEARCH_HI);
                for ib in -10i32..=10 {
                    let b = (cb + fine * ib as f64).clamp(SS_SEARCH_LO, SS_SEARCH_HI);
                    let v = objective(a, b);
                    if v > best_val {
                        best_val = v;
                        best = (a, b);
                    }
                }
            }
            if best == (ca, cb) {
                break;
            }
        }
        step = fine;
    }
    best
}

/// Maximum conditional-likelihood `(log tau, log sigma)` for one series.
pub fn ss_mle(obs: &SeriesObs) -> Result<(f64, f64)> {
    check_series(obs)?;
    if obs.len() < 3 {
        return Err(Error::InsufficientSeries { len: obs.len(), min: 3 });
    }
    Ok(maximize_log_scale_2d(|a, b| ss_log_lik(obs, a, b)))
}
