//! Mixture kernels `f(X | theta)`: log densities and per-observation MLEs.
//!
//! | id                        | atom                   | observation      |
//! |---------------------------|------------------------|------------------|
//! | `gaussian-location`       | `(mu_1, .., mu_d)`     | [`KnownVarObs`]  |
//! | `gaussian-location-scale` | `(mu, sigma)`          | [`ReplicateObs`] |
//! | `poisson-binomial`        | `(lambda, pi)`         | [`CountPairObs`] |
//! | `two-class-gaussian`      | `(mu_0, mu_1)`         | [`TwoClassObs`]  |
//! | `linear-regression`       | `(mu, beta, log sigma)`| [`RegressionObs`]|
//! | `local-level-ss`          | `(log tau, log sigma)` | [`SeriesObs`]    |
//!
//! The two-class and regression kernels drop normalizing constants that do
//! not depend on the atom; the others return exact log densities.

pub mod kalman;
pub mod obs;

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

pub use kalman::{maximize_log_scale_2d, ss_filter, ss_log_lik, ss_mle, FilterOutput};
pub use obs::{
    CountPairObs, KnownVarObs, Observation, RegressionObs, RegressionStats, ReplicateObs, SeriesObs,
    TwoClassObs, TwoClassStats,
};

use crate::error::{Error, Result};
use crate::model::{Atom, Grid, LogLikelihoodMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KernelId {
    GaussianLocation,
    GaussianLocationScale,
    PoissonBinomial,
    TwoClassGaussian,
    LinearRegression,
    #[serde(rename = "local-level-ss")]
    LocalLevelStateSpace,
}

impl KernelId {
    pub const ALL: [KernelId; 6] = [
        KernelId::GaussianLocation,
        KernelId::GaussianLocationScale,
        KernelId::PoissonBinomial,
        KernelId::TwoClassGaussian,
        KernelId::LinearRegression,
        KernelId::LocalLevelStateSpace,
    ];

    pub fn name(self) -> &'static str {
        match self {
            KernelId::GaussianLocation => "gaussian-location",
            KernelId::GaussianLocationScale => "gaussian-location-scale",
            KernelId::PoissonBinomial => "poisson-binomial",
            KernelId::TwoClassGaussian => "two-class-gaussian",
            KernelId::LinearRegression => "linear-regression",
            KernelId::LocalLevelStateSpace => "local-level-ss",
        }
    }

    /// Nominal atom dimension. The location kernel takes its dimension from
    /// the observations (1 for scalar measurements).
    pub fn atom_dim(self) -> usize {
        match self {
            KernelId::GaussianLocation => 1,
            KernelId::LinearRegression => 3,
            _ => 2,
        }
    }

    /// Column labels for atom coordinates of dimension `dim`.
    pub fn coord_names(self, dim: usize) -> Vec<String> {
        let fixed: &[&str] = match self {
            KernelId::GaussianLocation if dim == 1 => &["mu"],
            KernelId::GaussianLocation => {
                return (1..=dim).map(|i| format!("mu{i}")).collect();
            }
            KernelId::GaussianLocationScale => &["mu", "sigma"],
            KernelId::PoissonBinomial => &["lambda", "pi"],
            KernelId::TwoClassGaussian => &["mu0", "mu1"],
            KernelId::LinearRegression => &["mu", "beta", "log_sigma"],
            KernelId::LocalLevelStateSpace => &["log_tau", "log_sigma"],
        };
        fixed.iter().map(|s| s.to_string()).collect()
    }

    /// `log f(obs | atom)`.
    pub fn log_density(self, obs: &Observation, atom: &[f64]) -> Result<f64> {
        Prepared::new(self, obs)?.eval(atom)
    }

    /// `log f(obs | t_k)` for every atom of the grid.
    pub fn log_density_row(self, obs: &Observation, grid: &Grid) -> Result<Vec<f64>> {
        let prepared = Prepared::new(self, obs)?;
        grid.atoms().iter().map(|a| prepared.eval(a.coords())).collect()
    }

    /// Per-observation maximum likelihood estimate.
    pub fn mle(self, obs: &Observation) -> Result<MleEstimate> {
        match (self, obs) {
            (KernelId::GaussianLocation, Observation::KnownVar(o)) => {
                o.validate()?;
                Ok(MleEstimate::interior(Atom::new(o.values.clone())?))
            }
            (KernelId::GaussianLocationScale, Observation::Replicates(o)) => {
                if o.values.len() < 2 {
                    return Err(Error::InvalidObservation(
                        "location-scale kernel needs at least 2 replicates".into(),
                    ));
                }
                let (n, mean, ss) = o.moments();
                let sigma = (ss / n as f64).sqrt();
                Ok(MleEstimate {
                    atom: Atom::new(vec![mean, sigma])?,
                    boundary: ss == 0.0,
                })
            }
            (KernelId::PoissonBinomial, Observation::CountPair(o)) => {
                if o.at_bats == 0 {
                    return Err(Error::InvalidObservation("MLE needs at least one at-bat".into()));
                }
                let pi = o.hits as f64 / o.at_bats as f64;
                Ok(MleEstimate {
                    atom: Atom::new(vec![o.at_bats as f64, pi])?,
                    boundary: o.hits == 0 || o.hits == o.at_bats,
                })
            }
            (KernelId::TwoClassGaussian, Observation::TwoClass(o)) => {
                let s = o.stats();
                if s.counts[0] == 0 || s.counts[1] == 0 {
                    return Err(Error::InvalidObservation("both classes must be present".into()));
                }
                Ok(MleEstimate::interior(Atom::new(s.means.to_vec())?))
            }
            (KernelId::LinearRegression, Observation::Regression(o)) => {
                let s = o.stats();
                if s.n < 4 {
                    return Err(Error::InvalidObservation(format!(
                        "regression needs at least 4 points, got {}",
                        s.n
                    )));
                }
                let (mu, beta, rss) = s
                    .least_squares()
                    .ok_or_else(|| Error::InvalidObservation("covariate is constant".into()))?;
                if !(rss > 0.0) {
                    return Err(Error::InvalidObservation("zero residual variance".into()));
                }
                let log_sigma = 0.5 * (rss / s.n as f64).ln();
                Ok(MleEstimate::interior(Atom::new(vec![mu, beta, log_sigma])?))
            }
            (KernelId::LocalLevelStateSpace, Observation::Series(o)) => {
                let (a, b) = ss_mle(o)?;
                let on_edge = |v: f64| v <= kalman::SS_SEARCH_LO || v >= kalman::SS_SEARCH_HI;
                Ok(MleEstimate {
                    atom: Atom::new(vec![a, b])?,
                    boundary: on_edge(a) || on_edge(b),
                })
            }
            (k, o) => Err(Error::KernelMismatch {
                kernel: k.name(),
                found: o.type_name(),
            }),
        }
    }

    /// Restricts grid bounds to the interior of the parameter domain.
    ///
    /// For the Poisson-binomial kernel the hit rate is clamped to
    /// `[1/(2 max A), 1 - 1/(2 max A)]`, with `max A` the largest at-bat MLE.
    pub(crate) fn restrict_bounds(self, bounds: &mut [[f64; 2]], cloud: &[Atom]) -> Result<()> {
        match self {
            KernelId::PoissonBinomial => {
                let max_a = cloud.iter().map(|a| a[0]).fold(1.0, f64::max);
                let eps = 1.0 / (2.0 * max_a);
                let b = &mut bounds[1];
                b[0] = b[0].clamp(eps, 1.0 - eps);
                b[1] = b[1].clamp(eps, 1.0 - eps);
                if bounds[0][0] <= 0.0 {
                    bounds[0][0] = bounds[0][1].min(0.5);
                }
            }
            KernelId::GaussianLocationScale => {
                if bounds[1][0] <= 0.0 {
                    let smallest = cloud.iter().map(|a| a[1]).filter(|s| *s > 0.0).fold(f64::INFINITY, f64::min);
                    if !smallest.is_finite() {
                        return Err(Error::InvalidGrid("every replicate vector is constant".into()));
                    }
                    bounds[1][0] = smallest;
                }
            }
            _ => {}
        }
        Ok(())
    }
}

impl fmt::Display for KernelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for KernelId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        KernelId::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown kernel '{s}'")))
    }
}

/// A per-observation MLE. `boundary` flags estimates on the edge of the
/// parameter space (zero spread, zero or all hits, search-box edge).
#[derive(Debug, Clone, PartialEq)]
pub struct MleEstimate {
    pub atom: Atom,
    pub boundary: bool,
}

impl MleEstimate {
    fn interior(atom: Atom) -> Self {
        MleEstimate { atom, boundary: false }
    }
}

/// Observation reduced to what its kernel needs, so that evaluating a whole
/// grid row costs O(1) per atom where sufficient statistics exist.
enum Prepared<'a> {
    Location(&'a KnownVarObs),
    LocationScale { n: f64, mean: f64, ss: f64 },
    Counts { a: f64, h: f64, log_binom: f64 },
    TwoClass(TwoClassStats),
    Regression(RegressionStats),
    Series(&'a SeriesObs),
}

fn domain(kernel: KernelId, reason: String) -> Error {
    Error::Domain {
        kernel: kernel.name(),
        reason,
    }
}

fn expect_dim(kernel: KernelId, atom: &[f64], dim: usize) -> Result<()> {
    if atom.len() != dim {
        return Err(domain(kernel, format!("expected a {dim}-d atom, got {}", atom.len())));
    }
    Ok(())
}

impl<'a> Prepared<'a> {
    fn new(kernel: KernelId, obs: &'a Observation) -> Result<Self> {
        Ok(match (kernel, obs) {
            (KernelId::GaussianLocation, Observation::KnownVar(o)) => {
                o.validate()?;
                Prepared::Location(o)
            }
            (KernelId::GaussianLocationScale, Observation::Replicates(o)) => {
                if o.values.is_empty() {
                    return Err(Error::InvalidObservation("empty replicate vector".into()));
                }
                let (n, mean, ss) = o.moments();
                Prepared::LocationScale { n: n as f64, mean, ss }
            }
            (KernelId::PoissonBinomial, Observation::CountPair(o)) => {
                let (a, h) = (o.at_bats as f64, o.hits as f64);
                Prepared::Counts {
                    a,
                    h,
                    log_binom: -ln_gamma(h + 1.0) - ln_gamma(a - h + 1.0),
                }
            }
            (KernelId::TwoClassGaussian, Observation::TwoClass(o)) => Prepared::TwoClass(o.stats()),
            (KernelId::LinearRegression, Observation::Regression(o)) => Prepared::Regression(o.stats()),
            (KernelId::LocalLevelStateSpace, Observation::Series(o)) => {
                if o.len() < 2 {
                    return Err(Error::InsufficientSeries { len: o.len(), min: 2 });
                }
                Prepared::Series(o)
            }
            (k, o) => {
                return Err(Error::KernelMismatch {
                    kernel: k.name(),
                    found: o.type_name(),
                })
            }
        })
    }

    fn eval(&self, atom: &[f64]) -> Result<f64> {
        match self {
            Prepared::Location(o) => {
                expect_dim(KernelId::GaussianLocation, atom, o.values.len())?;
                Ok(o.values
                    .iter()
                    .zip(&o.variances)
                    .zip(atom)
                    .map(|((x, v), mu)| -0.5 * (2.0 * PI * v).ln() - (x - mu).powi(2) / (2.0 * v))
                    .sum())
            }
            Prepared::LocationScale { n, mean, ss } => {
                expect_dim(KernelId::GaussianLocationScale, atom, 2)?;
                let (mu, sigma) = (atom[0], atom[1]);
                if !(sigma > 0.0) {
                    return Err(domain(KernelId::GaussianLocationScale, format!("sigma = {sigma}")));
                }
                Ok(-0.5 * n * (2.0 * PI).ln() - n * sigma.ln() - (ss + n * (mean - mu).powi(2)) / (2.0 * sigma * sigma))
            }
            Prepared::Counts { a, h, log_binom } => {
                expect_dim(KernelId::PoissonBinomial, atom, 2)?;
                let (lambda, pi) = (atom[0], atom[1]);
                if !(lambda > 0.0) || !(pi > 0.0 && pi < 1.0) {
                    return Err(domain(KernelId::PoissonBinomial, format!("lambda = {lambda}, pi = {pi}")));
                }
                let mut v = -lambda + log_binom;
                if *a > 0.0 {
                    v += a * lambda.ln();
                }
                if *h > 0.0 {
                    v += h * pi.ln();
                }
                if a > h {
                    v += (a - h) * (-pi).ln_1p();
                }
                Ok(v)
            }
            Prepared::TwoClass(s) => {
                expect_dim(KernelId::TwoClassGaussian, atom, 2)?;
                let mut ss = s.within_ss;
                for c in 0..2 {
                    if s.counts[c] > 0 {
                        ss += s.counts[c] as f64 * (s.means[c] - atom[c]).powi(2);
                    }
                }
                Ok(-0.5 * ss)
            }
            Prepared::Regression(s) => {
                expect_dim(KernelId::LinearRegression, atom, 3)?;
                let (mu, beta, log_sigma) = (atom[0], atom[1], atom[2]);
                let rss = s.rss(mu, beta);
                Ok(-(s.n as f64) * log_sigma - rss / (2.0 * (2.0 * log_sigma).exp()))
            }
            Prepared::Series(o) => {
                expect_dim(KernelId::LocalLevelStateSpace, atom, 2)?;
                if !atom.iter().all(|v| v.is_finite()) {
                    return Err(domain(KernelId::LocalLevelStateSpace, format!("{atom:?}")));
                }
                Ok(ss_log_lik(o, atom[0], atom[1]))
            }
        }
    }
}

/// Fills the p x q log-likelihood matrix for `data` on `grid`; rows are
/// computed in parallel and assembled in observation order.
pub fn likelihood_matrix(kernel: KernelId, data: &[Observation], grid: &Grid) -> Result<LogLikelihoodMatrix> {
    let rows: Vec<Vec<f64>> = data
        .par_iter()
        .enumerate()
        .map(|(j, obs)| kernel.log_density_row(obs, grid).map_err(|e| Error::at(j, e)))
        .collect::<Result<_>>()?;
    let raw: Vec<f64> = rows.into_iter().flatten().collect();
    LogLikelihoodMatrix::from_log_densities(data.len(), grid.len(), raw)
}

/// Linear-model prediction `mu + beta * covariate`.
pub fn lm_predict(mu: f64, beta: f64, covariate: f64) -> f64 {
    mu + beta * covariate
}
