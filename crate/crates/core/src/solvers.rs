//! EM and Frank-Wolfe solvers for the fixed-grid simplex program.
//!
//! Both stop when the relative change of the objective between successive
//! iterates falls to `tol`, or after `max_iter` iterations. The objective
//! used for stopping is the shifted one stored in the matrix, so adding
//! constants to rows never changes an iterate.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{kkt_gap, mixture_sweep, neg_log_likelihood, FitResult, LogLikelihoodMatrix, MixingWeights, SolverId};

pub const DEFAULT_TOL: f64 = 1e-6;
pub const DEFAULT_EM_MAX_ITER: usize = 50_000;
pub const DEFAULT_FW_MAX_ITER: usize = 20_000;

const MONOTONE_SLACK: f64 = 1e-12;
const LINE_SEARCH_WIDTH: f64 = 1e-10;
/// Weights below this are set to zero before they turn subnormal.
const WEIGHT_FLOOR: f64 = 1e-300;

#[derive(Debug, Clone, PartialEq, Default)]
pub enum Init {
    #[default]
    Uniform,
    /// Custom starting weights. EM never revives a zero weight, so entries
    /// meant to stay reachable must be positive.
    Custom(MixingWeights),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub tol: f64,
    pub max_iter: usize,
    pub init: Init,
    /// Stream `iteration,objective,kkt_gap` CSV lines to stderr.
    pub trace: bool,
}

impl SolverConfig {
    pub fn em() -> Self {
        SolverConfig::for_solver(SolverId::Em)
    }

    pub fn frank_wolfe() -> Self {
        SolverConfig::for_solver(SolverId::FrankWolfe)
    }

    pub fn for_solver(solver: SolverId) -> Self {
        SolverConfig {
            tol: DEFAULT_TOL,
            max_iter: default_max_iter(solver),
            init: Init::Uniform,
            trace: false,
        }
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn with_max_iter(mut self, max_iter: usize) -> Self {
        self.max_iter = max_iter;
        self
    }

    pub fn with_init(mut self, init: MixingWeights) -> Self {
        self.init = Init::Custom(init);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0 && self.tol < 1.0) {
            return Err(Error::InvalidConfig(format!("tol must lie in (0, 1), got {}", self.tol)));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidConfig("max_iter must be at least 1".into()));
        }
        Ok(())
    }

    fn start(&self, q: usize) -> Result<Vec<f64>> {
        match &self.init {
            Init::Uniform => Ok(MixingWeights::uniform(q).as_slice().to_vec()),
            Init::Custom(w) if w.len() == q => Ok(w.as_slice().to_vec()),
            Init::Custom(w) => Err(Error::Incompatible {
                expected: q,
                found: w.len(),
            }),
        }
    }
}

pub fn default_max_iter(solver: SolverId) -> usize {
    match solver {
        SolverId::Em => DEFAULT_EM_MAX_ITER,
        SolverId::FrankWolfe => DEFAULT_FW_MAX_ITER,
    }
}

/// One row of a solver trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub iteration: usize,
    pub objective: f64,
    pub kkt_gap: f64,
}

impl TraceRecord {
    pub const CSV_HEADER: &'static str = "iteration,objective,kkt_gap";

    pub fn csv_line(&self) -> String {
        format!("{},{:.17e},{:.17e}", self.iteration, self.objective, self.kkt_gap)
    }
}

fn stderr_trace() -> impl FnMut(&TraceRecord) {
    let mut first = true;
    move |rec: &TraceRecord| {
        let mut err = std::io::stderr().lock();
        if first {
            let _ = writeln!(err, "{}", TraceRecord::CSV_HEADER);
            first = false;
        }
        let _ = writeln!(err, "{}", rec.csv_line());
    }
}

/// Runs the selected solver.
pub fn solve(l: &LogLikelihoodMatrix, solver: SolverId, cfg: &SolverConfig) -> Result<FitResult> {
    match solver {
        SolverId::Em => solve_em(l, cfg),
        SolverId::FrankWolfe => solve_frank_wolfe(l, cfg),
    }
}

/// EM fixed-point iteration `w_k <- w_k (1/p) sum_j f_jk / (f_j . w)`.
pub fn solve_em(l: &LogLikelihoodMatrix, cfg: &SolverConfig) -> Result<FitResult> {
    if cfg.trace {
        solve_em_traced(l, cfg, &mut stderr_trace())
    } else {
        solve_em_traced(l, cfg, &mut |_| {})
    }
}

/// Frank-Wolfe with vertex directions and exact line search.
pub fn solve_frank_wolfe(l: &LogLikelihoodMatrix, cfg: &SolverConfig) -> Result<FitResult> {
    if cfg.trace {
        solve_frank_wolfe_traced(l, cfg, &mut stderr_trace())
    } else {
        solve_frank_wolfe_traced(l, cfg, &mut |_| {})
    }
}

fn finish(l: &LogLikelihoodMatrix, w: Vec<f64>, iterations: usize, converged: bool, solver: SolverId) -> Result<FitResult> {
    let weights = MixingWeights::normalized(w)?;
    Ok(FitResult {
        neg_log_lik: neg_log_likelihood(l, &weights)?,
        kkt_gap: kkt_gap(l, &weights)?,
        weights,
        iterations,
        converged,
        solver,
    })
}

fn renormalize(w: &mut [f64], iteration: usize) -> Result<()> {
    let total: f64 = w.iter().sum();
    if !total.is_finite() || !(total > 0.0) {
        return Err(Error::NonFinite { iteration });
    }
    for v in w.iter_mut() {
        *v /= total;
        if *v < WEIGHT_FLOOR {
            *v = 0.0;
        }
    }
    Ok(())
}

fn gap_from_ratios(ratios: &[f64], p: f64) -> f64 {
    ratios.iter().fold(f64::NEG_INFINITY, |m, &r| m.max(r)) / p - 1.0
}

fn relative_change(previous: f64, current: f64) -> f64 {
    let diff = (current - previous).abs();
    if diff == 0.0 {
        0.0
    } else {
        diff / previous.abs()
    }
}

pub fn solve_em_traced(
    l: &LogLikelihoodMatrix,
    cfg: &SolverConfig,
    trace: &mut dyn FnMut(&TraceRecord),
) -> Result<FitResult> {
    cfg.validate()?;
    let (p, q) = (l.rows(), l.cols());
    let mut w = cfg.start(q)?;
    if q == 1 {
        return finish(l, w, 0, true, SolverId::Em);
    }
    let pf = p as f64;
    let mut log_mix = vec![0.0; p];
    let mut ratios = vec![0.0; q];
    let mut obj = mixture_sweep(l, &w, &mut log_mix, &mut ratios)?;
    trace(&TraceRecord {
        iteration: 0,
        objective: obj,
        kkt_gap: gap_from_ratios(&ratios, pf),
    });

    let mut iterations = 0;
    let mut converged = false;
    while iterations < cfg.max_iter {
        for (wk, r) in w.iter_mut().zip(&ratios) {
            *wk *= r / pf;
        }
        iterations += 1;
        renormalize(&mut w, iterations)?;
        let next = mixture_sweep(l, &w, &mut log_mix, &mut ratios)?;
        if !next.is_finite() {
            return Err(Error::NonFinite { iteration: iterations });
        }
        if next > obj + MONOTONE_SLACK * obj.abs().max(1.0) {
            return Err(Error::MonotonicityViolated {
                iteration: iterations,
                previous: obj,
                current: next,
            });
        }
        trace(&TraceRecord {
            iteration: iterations,
            objective: next,
            kkt_gap: gap_from_ratios(&ratios, pf),
        });
        let rel = relative_change(obj, next);
        obj = next;
        if rel <= cfg.tol {
            converged = true;
            break;
        }
    }
    finish(l, w, iterations, converged, SolverId::Em)
}

/// Derivative of `phi(gamma) = -(1/p) sum_j log((1 - gamma) d_j + gamma F_jk)`
/// along the segment from the current mixture densities `d` towards vertex
/// `k`. `phi` is convex, so its minimizer is where the slope changes sign.
struct Segment<'a> {
    l: &'a LogLikelihoodMatrix,
    k: usize,
    log_mix: &'a [f64],
    linear: Option<(Vec<f64>, Vec<f64>)>,
}

impl<'a> Segment<'a> {
    fn new(l: &'a LogLikelihoodMatrix, k: usize, log_mix: &'a [f64]) -> Self {
        let min = log_mix.iter().copied().fold(f64::INFINITY, f64::min);
        let linear = (min > -600.0).then(|| {
            let d = log_mix.iter().map(|v| v.exp()).collect();
            let f = (0..l.rows()).map(|j| l.density_row(j)[k]).collect();
            (d, f)
        });
        Segment { l, k, log_mix, linear }
    }

    fn slope(&self, gamma: f64) -> f64 {
        let p = self.l.rows();
        let mut total = 0.0;
        match &self.linear {
            Some((d, f)) => {
                for (dj, fj) in d.iter().zip(f) {
                    total += (fj - dj) / ((1.0 - gamma) * dj + gamma * fj);
                }
            }
            None => {
                let (a, b) = ((1.0 - gamma).ln(), gamma.ln());
                for j in 0..p {
                    let (lm, lf) = (self.log_mix[j], self.l.entry(j, self.k));
                    let (x, y) = (a + lm, b + lf);
                    let m = x.max(y);
                    let log_seg = if m == f64::NEG_INFINITY {
                        f64::NEG_INFINITY
                    } else {
                        m + ((x - m).exp() + (y - m).exp()).ln()
                    };
                    let top = lm.max(lf);
                    total += ((lf - top).exp() - (lm - top).exp()) * (top - log_seg).exp();
                }
            }
        }
        -total / p as f64
    }
}

/// Exact line search on `[0, 1]` by bisection on the slope, to a bracket
/// width of 1e-10.
fn line_search(seg: &Segment<'_>) -> f64 {
    if !(seg.slope(0.0) < 0.0) {
        return 0.0;
    }
    if seg.slope(1.0) <= 0.0 {
        return 1.0;
    }
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    while hi - lo > LINE_SEARCH_WIDTH {
        let mid = 0.5 * (lo + hi);
        if seg.slope(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

pub fn solve_frank_wolfe_traced(
    l: &LogLikelihoodMatrix,
    cfg: &SolverConfig,
    trace: &mut dyn FnMut(&TraceRecord),
) -> Result<FitResult> {
    cfg.validate()?;
    let (p, q) = (l.rows(), l.cols());
    let mut w = cfg.start(q)?;
    if q == 1 {
        return finish(l, w, 0, true, SolverId::FrankWolfe);
    }
    let pf = p as f64;
    let mut log_mix = vec![0.0; p];
    let mut ratios = vec![0.0; q];
    let mut obj = mixture_sweep(l, &w, &mut log_mix, &mut ratios)?;
    let mut iterations = 0;
    let mut converged = false;
    loop {
        let gap = gap_from_ratios(&ratios, pf);
        trace(&TraceRecord {
            iteration: iterations,
            objective: obj,
            kkt_gap: gap,
        });
        if gap <= cfg.tol * 1e-2 {
            converged = true;
            break;
        }
        if iterations >= cfg.max_iter {
            break;
        }
        // vertex with the most negative gradient entry, lowest index on ties
        let mut k_star = 0;
        for (k, &r) in ratios.iter().enumerate() {
            if r > ratios[k_star] {
                k_star = k;
            }
        }
        let gamma = line_search(&Segment::new(l, k_star, &log_mix));
        for v in w.iter_mut() {
            *v *= 1.0 - gamma;
        }
        w[k_star] += gamma;
        iterations += 1;
        renormalize(&mut w, iterations)?;
        let next = mixture_sweep(l, &w, &mut log_mix, &mut ratios)?;
        if !next.is_finite() {
            return Err(Error::NonFinite { iteration: iterations });
        }
        let rel = relative_change(obj, next);
        obj = next;
        if rel <= cfg.tol {
            trace(&TraceRecord {
                iteration: iterations,
                objective: obj,
                kkt_gap: gap_from_ratios(&ratios, pf),
            });
            converged = true;
            break;
        }
    }
    finish(l, w, iterations, converged, SolverId::FrankWolfe)
}

/// `baseline.neg_log_lik - result.neg_log_lik`; positive when `result` fits
/// better than the baseline.
pub fn delta_log_lik(result: &FitResult, baseline: &FitResult) -> Result<f64> {
    if result.weights.len() != baseline.weights.len() {
        return Err(Error::Incompatible {
            expected: baseline.weights.len(),
            found: result.weights.len(),
        });
    }
    Ok(baseline.neg_log_lik - result.neg_log_lik)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    const NEG_INF: f64 = f64::NEG_INFINITY;

    fn matrix(rows: usize, cols: usize, v: Vec<f64>) -> LogLikelihoodMatrix {
        LogLikelihoodMatrix::from_log_densities(rows, cols, v).unwrap()
    }

    #[test]
    fn em_fixed_point_in_one_iteration() {
        let l = matrix(2, 2, vec![0.0, NEG_INF, NEG_INF, 0.0]);
        let fit = solve_em(&l, &SolverConfig::em()).unwrap();
        assert_eq!(fit.weights.as_slice(), &[0.5, 0.5]);
        assert_eq!(fit.iterations, 1);
        assert_eq!(fit.kkt_gap, 0.0);
        assert!(fit.converged);
    }

    #[test]
    fn em_moves_all_mass_after_one_update() {
        let l = matrix(2, 2, vec![0.0, NEG_INF, 0.0, NEG_INF]);
        let one = solve_em(&l, &SolverConfig::em().with_max_iter(1)).unwrap();
        assert_eq!(one.weights.as_slice(), &[1.0, 0.0]);
        let fit = solve_em(&l, &SolverConfig::em()).unwrap();
        assert_eq!(fit.weights.as_slice(), &[1.0, 0.0]);
        assert!(fit.converged);
    }

    #[test]
    fn single_atom_is_immediately_optimal() {
        let l = matrix(3, 1, vec![-1.0, -2.0, -3.0]);
        for solver in [SolverId::Em, SolverId::FrankWolfe] {
            let fit = solve(&l, solver, &SolverConfig::for_solver(solver)).unwrap();
            assert_eq!(fit.weights.as_slice(), &[1.0]);
            assert_eq!(fit.iterations, 0);
            assert!(fit.converged);
        }
    }

    #[test]
    fn frank_wolfe_exact_line_search_example() {
        let l = matrix(2, 2, vec![0.0, NEG_INF, NEG_INF, 0.0]);
        let start = MixingWeights::new(vec![0.9, 0.1]).unwrap();
        let fit = solve_frank_wolfe(&l, &SolverConfig::frank_wolfe().with_init(start.clone())).unwrap();
        assert_eq!(fit.iterations, 1);
        assert_relative_eq!(fit.weights.as_slice()[0], 0.5, epsilon = 1e-9);
        assert!(fit.converged);

        // the step itself: gamma = 4/9 towards the second vertex
        let log_mix = [0.9f64.ln(), 0.1f64.ln()];
        let gamma = line_search(&Segment::new(&l, 1, &log_mix));
        assert_relative_eq!(gamma, 4.0 / 9.0, epsilon = 1e-9);
    }

    #[test]
    fn frank_wolfe_returns_at_optimum() {
        let l = matrix(2, 2, vec![0.0, NEG_INF, NEG_INF, 0.0]);
        let fit = solve_frank_wolfe(&l, &SolverConfig::frank_wolfe()).unwrap();
        assert_eq!(fit.iterations, 0);
        assert_eq!(fit.weights.as_slice(), &[0.5, 0.5]);
    }

    #[test]
    fn log_space_slope_matches_linear() {
        let l = matrix(3, 2, vec![0.0, -2.0, -1.0, 0.0, 0.0, -0.5]);
        let log_mix = [-0.7, -0.4, -0.2];
        let lin = Segment::new(&l, 1, &log_mix);
        let mut log = Segment::new(&l, 1, &log_mix);
        log.linear = None;
        for g in [0.0, 0.3, 0.77, 1.0] {
            assert_relative_eq!(lin.slope(g), log.slope(g), epsilon = 1e-12);
        }
    }

    #[test]
    fn delta_log_lik_is_antisymmetric() {
        let l = matrix(2, 2, vec![0.0, -1.0, -3.0, 0.0]);
        let em = solve_em(&l, &SolverConfig::em()).unwrap();
        let fw = solve_frank_wolfe(&l, &SolverConfig::frank_wolfe().with_max_iter(1)).unwrap();
        assert_eq!(delta_log_lik(&em, &em).unwrap(), 0.0);
        assert_eq!(delta_log_lik(&em, &fw).unwrap(), -delta_log_lik(&fw, &em).unwrap());
        let other = solve_em(&matrix(1, 3, vec![0.0, 0.0, 0.0]), &SolverConfig::em()).unwrap();
        assert!(matches!(delta_log_lik(&other, &em), Err(Error::Incompatible { .. })));
    }

    #[test]
    fn config_validation() {
        let l = matrix(1, 2, vec![0.0, 0.0]);
        assert!(solve_em(&l, &SolverConfig::em().with_tol(0.0)).is_err());
        assert!(solve_em(&l, &SolverConfig::em().with_tol(1.0)).is_err());
        assert!(solve_em(&l, &SolverConfig::em().with_max_iter(0)).is_err());
        let bad = MixingWeights::uniform(3);
        assert!(matches!(
            solve_em(&l, &SolverConfig::em().with_init(bad)),
            Err(Error::Incompatible { .. })
        ));
    }

    #[test]
    fn trace_records_every_iteration() {
        let l = matrix(3, 3, vec![0.0, -1.0, -2.0, -2.0, 0.0, -1.0, -1.0, -2.0, 0.0]);
        let mut recs = Vec::new();
        let fit = solve_em_traced(&l, &SolverConfig::em(), &mut |r| recs.push(*r)).unwrap();
        assert_eq!(recs.len(), fit.iterations + 1);
        assert!(recs.windows(2).all(|w| w[1].objective <= w[0].objective + 1e-12));
        assert_eq!(recs[0].csv_line().split(',').count(), 3);
    }
}
