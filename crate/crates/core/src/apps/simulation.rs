//! Gaussian location-scale simulation study: data generation, the competing
//! estimators of the mean vector, and the summary tables.

use std::fmt::{self, Write as _};
use std::io::Write;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{mean_sd, soft_threshold, soft_threshold_oracle, tse};
use crate::error::{Error, Result};
use crate::grid::{default_counts, BoundsMode, GridSpec};
use crate::kernels::{KernelId, KnownVarObs, Observation, ReplicateObs};
use crate::model::SolverId;
use crate::pipeline::{fit_npmle, NpmleFit};
use crate::solvers::{delta_log_lik, SolverConfig, DEFAULT_EM_MAX_ITER, DEFAULT_FW_MAX_ITER, DEFAULT_TOL};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MixingId {
    /// `sigma = 4`, `mu` in {0, 5} with equal probability.
    Dist1,
    /// `(mu, sigma)` in {(0, 5), (5, 3)} with equal probability.
    Dist2,
}

impl MixingId {
    fn draw(self, component: bool) -> (f64, f64) {
        match (self, component) {
            (MixingId::Dist1, false) => (0.0, 4.0),
            (MixingId::Dist1, true) => (5.0, 4.0),
            (MixingId::Dist2, false) => (0.0, 5.0),
            (MixingId::Dist2, true) => (5.0, 3.0),
        }
    }
}

impl FromStr for MixingId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dist1" | "1" => Ok(MixingId::Dist1),
            "dist2" | "2" => Ok(MixingId::Dist2),
            _ => Err(Error::InvalidConfig(format!("unknown mixing distribution '{s}' (dist1|dist2)"))),
        }
    }
}

impl fmt::Display for MixingId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MixingId::Dist1 => "dist1",
            MixingId::Dist2 => "dist2",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub p: usize,
    pub n: usize,
    pub mixing: MixingId,
    pub reps: usize,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            p: 1000,
            n: 16,
            mixing: MixingId::Dist1,
            reps: 100,
            seed: 0,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.p == 0 || self.n < 2 || self.reps == 0 {
            return Err(Error::InvalidConfig("need p >= 1, n >= 2 and reps >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimData {
    pub data: Vec<Observation>,
    pub truth_mu: Vec<f64>,
    pub truth_sigma: Vec<f64>,
}

impl SimData {
    /// Per-observation sample means.
    pub fn sample_means(&self) -> Vec<f64> {
        self.data
            .iter()
            .map(|o| match o {
                Observation::Replicates(r) => r.values.iter().sum::<f64>() / r.values.len() as f64,
                _ => f64::NAN,
            })
            .collect()
    }

    /// Per-observation MLE standard deviations (divisor n).
    pub fn sample_sds(&self) -> Vec<f64> {
        self.data
            .iter()
            .map(|o| match o {
                Observation::Replicates(r) => {
                    let n = r.values.len() as f64;
                    let m = r.values.iter().sum::<f64>() / n;
                    (r.values.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n).sqrt()
                }
                _ => f64::NAN,
            })
            .collect()
    }
}

/// The generator for replication `rep`: the master seed with `rep` as the
/// ChaCha stream, so every replication is reproducible on its own.
pub fn replication_rng(seed: u64, rep: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(rep);
    rng
}

/// Replication 0 of the configured design.
pub fn simulate_gls(cfg: &SimConfig) -> Result<SimData> {
    simulate_replication(cfg, 0)
}

pub fn simulate_replication(cfg: &SimConfig, rep: u64) -> Result<SimData> {
    cfg.validate()?;
    let mut rng = replication_rng(cfg.seed, rep);
    let mut out = SimData {
        data: Vec::with_capacity(cfg.p),
        truth_mu: Vec::with_capacity(cfg.p),
        truth_sigma: Vec::with_capacity(cfg.p),
    };
    for _ in 0..cfg.p {
        let (mu, sigma) = cfg.mixing.draw(rng.random_bool(0.5));
        let values = (0..cfg.n)
            .map(|_| mu + sigma * rng.sample::<f64, _>(StandardNormal))
            .collect();
        out.data.push(ReplicateObs::new(values).into());
        out.truth_mu.push(mu);
        out.truth_sigma.push(sigma);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Estimator {
    /// Per-observation sample mean.
    Mle,
    /// Soft thresholding of the sample means at the TSE-minimizing threshold.
    SoftThreshold,
    /// 1-d NPMLE on the sample means with variance `sigma_hat^2 / n`.
    UnivariatePlugin,
    /// 1-d NPMLE on the sample means with the true variance `sigma^2 / n`.
    UnivariateKnown,
    /// 2-d location-scale NPMLE fitted by EM.
    BivariateEm,
    /// 2-d location-scale NPMLE fitted by Frank-Wolfe.
    BivariateFw,
}

impl Estimator {
    pub const ALL: [Estimator; 6] = [
        Estimator::Mle,
        Estimator::SoftThreshold,
        Estimator::UnivariatePlugin,
        Estimator::UnivariateKnown,
        Estimator::BivariateEm,
        Estimator::BivariateFw,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Estimator::Mle => "mle",
            Estimator::SoftThreshold => "soft-threshold",
            Estimator::UnivariatePlugin => "npmle-1d-plugin",
            Estimator::UnivariateKnown => "npmle-1d-known",
            Estimator::BivariateEm => "npmle-2d-em",
            Estimator::BivariateFw => "npmle-2d-fw",
        }
    }
}

impl FromStr for Estimator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Estimator::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown estimator '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyConfig {
    pub sim: SimConfig,
    pub estimators: Vec<Estimator>,
    /// Counts for the bivariate grid.
    pub grid: Vec<usize>,
    pub bounds_mode: BoundsMode,
    /// Grid size for the univariate fits; the default rule when `None`.
    pub univariate_q: Option<usize>,
    pub tol: f64,
    pub em_max_iter: usize,
    pub fw_max_iter: usize,
}

impl StudyConfig {
    pub fn new(sim: SimConfig) -> Self {
        StudyConfig {
            sim,
            estimators: Estimator::ALL.to_vec(),
            grid: vec![30, 30],
            bounds_mode: BoundsMode::BoundingBox,
            univariate_q: None,
            tol: DEFAULT_TOL,
            em_max_iter: DEFAULT_EM_MAX_ITER,
            fw_max_iter: DEFAULT_FW_MAX_ITER,
        }
    }

    fn solver_config(&self, solver: SolverId) -> SolverConfig {
        let max_iter = match solver {
            SolverId::Em => self.em_max_iter,
            SolverId::FrankWolfe => self.fw_max_iter,
        };
        SolverConfig::for_solver(solver).with_tol(self.tol).with_max_iter(max_iter)
    }
}

/// One estimator on one replication.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellResult {
    pub estimator: Estimator,
    pub tse: f64,
    /// Against the EM fit on the same likelihood matrix.
    pub delta_log_lik: Option<f64>,
    pub seconds: Option<f64>,
    pub kkt_gap: Option<f64>,
    pub iterations: Option<usize>,
    pub converged: Option<bool>,
}

impl CellResult {
    fn plain(estimator: Estimator, tse: f64) -> Self {
        CellResult {
            estimator,
            tse,
            delta_log_lik: None,
            seconds: None,
            kkt_gap: None,
            iterations: None,
            converged: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplicationResult {
    pub rep: usize,
    pub cells: Vec<CellResult>,
}

fn univariate_fit(means: &[f64], variances: &[f64], q: usize, cfg: &StudyConfig) -> Result<NpmleFit> {
    let data: Vec<Observation> = means
        .iter()
        .zip(variances)
        .map(|(&m, &v)| KnownVarObs::scalar(m, v).into())
        .collect();
    let spec = GridSpec::new(vec![q]);
    fit_npmle(KernelId::GaussianLocation, &data, &spec, SolverId::Em, &cfg.solver_config(SolverId::Em))
}

fn npmle_cell(estimator: Estimator, fit: &NpmleFit, truth: &[f64], delta: f64) -> Result<CellResult> {
    let est = fit.posterior_means(|a| a[0])?;
    Ok(CellResult {
        estimator,
        tse: tse(&est, truth)?,
        delta_log_lik: Some(delta),
        seconds: Some(fit.solve_seconds),
        kkt_gap: Some(fit.fit.kkt_gap),
        iterations: Some(fit.fit.iterations),
        converged: Some(fit.fit.converged),
    })
}

/// Simulates replication `rep` and evaluates every requested estimator.
pub fn run_replication(cfg: &StudyConfig, rep: usize) -> Result<ReplicationResult> {
    let sim = simulate_replication(&cfg.sim, rep as u64)?;
    let means = sim.sample_means();
    let truth = &sim.truth_mu;
    let n = cfg.sim.n as f64;
    let uni_q = match cfg.univariate_q {
        Some(q) => q,
        None => default_counts(1, cfg.sim.p)?[0],
    };
    let wants = |e: Estimator| cfg.estimators.contains(&e);

    let mut cells = Vec::new();
    if wants(Estimator::Mle) {
        cells.push(CellResult::plain(Estimator::Mle, tse(&means, truth)?));
    }
    if wants(Estimator::SoftThreshold) {
        let (t, _) = soft_threshold_oracle(&means, truth)?;
        let est: Vec<f64> = means.iter().map(|&x| soft_threshold(x, t)).collect();
        cells.push(CellResult::plain(Estimator::SoftThreshold, tse(&est, truth)?));
    }
    if wants(Estimator::UnivariatePlugin) {
        let vars: Vec<f64> = sim.sample_sds().iter().map(|s| s * s / n).collect();
        let fit = univariate_fit(&means, &vars, uni_q, cfg)?;
        cells.push(npmle_cell(Estimator::UnivariatePlugin, &fit, truth, 0.0)?);
    }
    if wants(Estimator::UnivariateKnown) {
        let vars: Vec<f64> = sim.truth_sigma.iter().map(|s| s * s / n).collect();
        let fit = univariate_fit(&means, &vars, uni_q, cfg)?;
        cells.push(npmle_cell(Estimator::UnivariateKnown, &fit, truth, 0.0)?);
    }
    if wants(Estimator::BivariateEm) || wants(Estimator::BivariateFw) {
        let spec = GridSpec::new(cfg.grid.clone()).with_mode(cfg.bounds_mode);
        let em = fit_npmle(
            KernelId::GaussianLocationScale,
            &sim.data,
            &spec,
            SolverId::Em,
            &cfg.solver_config(SolverId::Em),
        )?;
        if wants(Estimator::BivariateEm) {
            cells.push(npmle_cell(Estimator::BivariateEm, &em, truth, 0.0)?);
        }
        if wants(Estimator::BivariateFw) {
            let (fw_fit, secs) = em.resolve(SolverId::FrankWolfe, &cfg.solver_config(SolverId::FrankWolfe))?;
            let delta = delta_log_lik(&fw_fit, &em.fit)?;
            let fw = NpmleFit {
                fit: fw_fit,
                solve_seconds: secs,
                ..em
            };
            cells.push(npmle_cell(Estimator::BivariateFw, &fw, truth, delta)?);
        }
    }
    Ok(ReplicationResult { rep, cells })
}

/// Runs every replication (in parallel) and stops at the first failure.
pub fn run_sim_study(cfg: &StudyConfig) -> Result<StudyReport> {
    cfg.sim.validate()?;
    let replications = (0..cfg.sim.reps)
        .into_par_iter()
        .map(|rep| {
            run_replication(cfg, rep).map_err(|e| Error::Replication {
                rep,
                source: Box::new(e),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(StudyReport {
        config: cfg.clone(),
        replications,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub estimator: Estimator,
    pub reps: usize,
    pub tse_mean: f64,
    pub tse_sd: f64,
    pub delta_log_lik_mean: Option<f64>,
    pub delta_log_lik_sd: Option<f64>,
    pub seconds_mean: Option<f64>,
    pub seconds_sd: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyReport {
    pub config: StudyConfig,
    pub replications: Vec<ReplicationResult>,
}

impl StudyReport {
    /// All cells of one estimator, in replication order.
    pub fn cells(&self, estimator: Estimator) -> Vec<&CellResult> {
        self.replications
            .iter()
            .flat_map(|r| r.cells.iter().filter(move |c| c.estimator == estimator))
            .collect()
    }

    pub fn summary(&self) -> Vec<SummaryRow> {
        let opt_stats = |v: Vec<Option<f64>>| -> (Option<f64>, Option<f64>) {
            let v: Option<Vec<f64>> = v.into_iter().collect();
            match v {
                Some(v) if !v.is_empty() => {
                    let (m, s) = mean_sd(&v);
                    (Some(m), Some(s))
                }
                _ => (None, None),
            }
        };
        self.config
            .estimators
            .iter()
            .map(|&e| {
                let cells = self.cells(e);
                let (tse_mean, tse_sd) = mean_sd(&cells.iter().map(|c| c.tse).collect::<Vec<_>>());
                let (dm, ds) = opt_stats(cells.iter().map(|c| c.delta_log_lik).collect());
                let (sm, ss) = opt_stats(cells.iter().map(|c| c.seconds).collect());
                SummaryRow {
                    estimator: e,
                    reps: cells.len(),
                    tse_mean,
                    tse_sd,
                    delta_log_lik_mean: dm,
                    delta_log_lik_sd: ds,
                    seconds_mean: sm,
                    seconds_sd: ss,
                }
            })
            .collect()
    }

    /// Per-replication CSV: one row per (replication, estimator).
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["rep", "estimator", "tse", "delta_log_lik", "seconds", "kkt_gap", "iterations", "converged"])?;
        let opt = |v: Option<String>| v.unwrap_or_default();
        for r in &self.replications {
            for c in &r.cells {
                w.write_record([
                    r.rep.to_string(),
                    c.estimator.name().to_string(),
                    format!("{}", c.tse),
                    opt(c.delta_log_lik.map(|v| v.to_string())),
                    opt(c.seconds.map(|v| v.to_string())),
                    opt(c.kkt_gap.map(|v| v.to_string())),
                    opt(c.iterations.map(|v| v.to_string())),
                    opt(c.converged.map(|v| v.to_string())),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Mean (SD) table; the log-likelihood column is scaled by 1e4.
    pub fn text_table(&self) -> String {
        let c = &self.config;
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{} p={} n={} reps={} seed={} grid={}",
            c.sim.mixing,
            c.sim.p,
            c.sim.n,
            c.sim.reps,
            c.sim.seed,
            c.grid.iter().map(|q| q.to_string()).collect::<Vec<_>>().join("x")
        );
        let _ = writeln!(s, "{:<18} {:>18} {:>20} {:>16}", "estimator", "TSE", "dloglik x1e4", "time (s)");
        let pair = |m: Option<f64>, sd: Option<f64>, scale: f64, prec: usize| match (m, sd) {
            (Some(m), Some(sd)) => format!("{:.*} ({:.*})", prec, m * scale, prec, sd * scale),
            _ => "-".to_string(),
        };
        for row in self.summary() {
            let _ = writeln!(
                s,
                "{:<18} {:>18} {:>20} {:>16}",
                row.estimator.name(),
                pair(Some(row.tse_mean), Some(row.tse_sd), 1.0, 1),
                pair(row.delta_log_lik_mean, row.delta_log_lik_sd, 1e4, 0),
                pair(row.seconds_mean, row.seconds_sd, 1.0, 2),
            );
        }
        let _ = writeln!(s, "{:<18} {:>18}", "james-stein", "unavailable");
        let _ = writeln!(s, "{:<18} {:>18}", "sure", "unavailable");
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dist1_sigma_is_constant() {
        let cfg = SimConfig {
            p: 200,
            reps: 1,
            seed: 3,
            ..SimConfig::default()
        };
        let sim = simulate_gls(&cfg).unwrap();
        assert!(sim.truth_sigma.iter().all(|&s| s == 4.0));
        assert!(sim.truth_mu.iter().all(|&m| m == 0.0 || m == 5.0));
        assert_eq!(simulate_gls(&cfg).unwrap(), sim);
    }

    #[test]
    fn dist2_takes_two_values() {
        let cfg = SimConfig {
            p: 200,
            mixing: MixingId::Dist2,
            reps: 1,
            seed: 3,
            ..SimConfig::default()
        };
        let sim = simulate_gls(&cfg).unwrap();
        for (m, s) in sim.truth_mu.iter().zip(&sim.truth_sigma) {
            assert!((*m, *s) == (0.0, 5.0) || (*m, *s) == (5.0, 3.0));
        }
    }

    #[test]
    fn replications_use_distinct_streams() {
        let cfg = SimConfig {
            p: 5,
            reps: 2,
            ..SimConfig::default()
        };
        assert_ne!(simulate_replication(&cfg, 0).unwrap(), simulate_replication(&cfg, 1).unwrap());
    }

    #[test]
    fn small_study_is_deterministic() {
        let mut cfg = StudyConfig::new(SimConfig {
            p: 60,
            reps: 2,
            seed: 11,
            ..SimConfig::default()
        });
        cfg.grid = vec![8, 8];
        let a = run_sim_study(&cfg).unwrap();
        let b = run_sim_study(&cfg).unwrap();
        let strip = |r: &StudyReport| {
            r.replications
                .iter()
                .flat_map(|x| x.cells.iter().map(|c| (c.tse, c.delta_log_lik)))
                .collect::<Vec<_>>()
        };
        assert_eq!(strip(&a), strip(&b));
        for c in a.cells(Estimator::BivariateEm) {
            assert_eq!(c.delta_log_lik, Some(0.0));
        }
        assert!(a.text_table().contains("npmle-2d-fw"));
    }
}
