use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `n` replicates drawn from one latent parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateObs {
    pub values: Vec<f64>,
}

impl ReplicateObs {
    pub fn new(values: Vec<f64>) -> Self {
        ReplicateObs { values }
    }

    pub(crate) fn moments(&self) -> (usize, f64, f64) {
        let n = self.values.len();
        let mean = self.values.iter().sum::<f64>() / n as f64;
        let ss = self.values.iter().map(|x| (x - mean).powi(2)).sum::<f64>();
        (n, mean, ss)
    }
}

/// Gaussian measurements with known variances, one per coordinate of the
/// location parameter. The scalar case is the usual normal-means model;
/// longer vectors give a location model with diagonal known covariance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnownVarObs {
    pub values: Vec<f64>,
    pub variances: Vec<f64>,
}

impl KnownVarObs {
    pub fn scalar(value: f64, variance: f64) -> Self {
        KnownVarObs {
            values: vec![value],
            variances: vec![variance],
        }
    }

    pub fn new(values: Vec<f64>, variances: Vec<f64>) -> Self {
        KnownVarObs { values, variances }
    }

    pub(crate) fn validate(&self) -> Result<()> {
        if self.values.is_empty() || self.values.len() != self.variances.len() {
            return Err(Error::InvalidObservation(
                "known-variance observation needs one variance per value".into(),
            ));
        }
        if self.variances.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(Error::InvalidObservation("variances must be positive".into()));
        }
        if self.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidObservation("non-finite value".into()));
        }
        Ok(())
    }
}

/// At-bats and hits for one player.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountPairObs {
    pub at_bats: u64,
    pub hits: u64,
}

impl CountPairObs {
    pub fn new(at_bats: u64, hits: u64) -> Result<Self> {
        if hits > at_bats {
            return Err(Error::InvalidObservation(format!("{hits} hits exceed {at_bats} at-bats")));
        }
        Ok(CountPairObs { at_bats, hits })
    }
}

/// Expression values of one feature across labelled subjects. Missing values
/// are encoded as NaN and skipped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoClassObs {
    pub values: Vec<f64>,
    pub labels: Vec<u8>,
}

/// Per-class counts, means and the pooled within-class sum of squares.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoClassStats {
    pub counts: [usize; 2],
    pub means: [f64; 2],
    pub within_ss: f64,
}

impl TwoClassObs {
    pub fn new(values: Vec<f64>, labels: Vec<u8>) -> Result<Self> {
        if values.len() != labels.len() {
            return Err(Error::InvalidObservation("values and labels differ in length".into()));
        }
        if labels.iter().any(|&y| y > 1) {
            return Err(Error::InvalidObservation("labels must be 0 or 1".into()));
        }
        Ok(TwoClassObs { values, labels })
    }

    pub fn stats(&self) -> TwoClassStats {
        let mut counts = [0usize; 2];
        let mut sums = [0.0f64; 2];
        for (x, &y) in self.values.iter().zip(&self.labels) {
            if x.is_nan() {
                continue;
            }
            counts[y as usize] += 1;
            sums[y as usize] += x;
        }
        let means = [0, 1].map(|c| if counts[c] > 0 { sums[c] / counts[c] as f64 } else { f64::NAN });
        let within_ss = self
            .values
            .iter()
            .zip(&self.labels)
            .filter(|(x, _)| !x.is_nan())
            .map(|(x, &y)| (x - means[y as usize]).powi(2))
            .sum();
        TwoClassStats {
            counts,
            means,
            within_ss,
        }
    }
}

/// Paired fingerstick responses and sensor covariates for a regression fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionObs {
    pub responses: Vec<f64>,
    pub covariates: Vec<f64>,
}

/// Sufficient statistics of a simple linear regression.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RegressionStats {
    pub n: usize,
    pub sum_x: f64,
    pub sum_y: f64,
    pub sum_xx: f64,
    pub sum_xy: f64,
    pub sum_yy: f64,
}

impl RegressionStats {
    pub fn push(&mut self, x: f64, y: f64) {
        self.n += 1;
        self.sum_x += x;
        self.sum_y += y;
        self.sum_xx += x * x;
        self.sum_xy += x * y;
        self.sum_yy += y * y;
    }

    pub fn merge(&mut self, other: &RegressionStats) {
        self.n += other.n;
        self.sum_x += other.sum_x;
        self.sum_y += other.sum_y;
        self.sum_xx += other.sum_xx;
        self.sum_xy += other.sum_xy;
        self.sum_yy += other.sum_yy;
    }

    /// Residual sum of squares of the line `y = mu + beta x`.
    pub fn rss(&self, mu: f64, beta: f64) -> f64 {
        let n = self.n as f64;
        let rss = self.sum_yy - 2.0 * mu * self.sum_y - 2.0 * beta * self.sum_xy
            + n * mu * mu
            + 2.0 * mu * beta * self.sum_x
            + beta * beta * self.sum_xx;
        rss.max(0.0)
    }

    /// Least-squares `(mu, beta, rss)`; `None` when the covariate is constant.
    pub fn least_squares(&self) -> Option<(f64, f64, f64)> {
        let n = self.n as f64;
        let mx = self.sum_x / n;
        let my = self.sum_y / n;
        let sxx = self.sum_xx - n * mx * mx;
        let sxy = self.sum_xy - n * mx * my;
        if !(sxx > 1e-12 * self.sum_xx.abs().max(1e-300)) {
            return None;
        }
        let beta = sxy / sxx;
        let mu = my - beta * mx;
        Some((mu, beta, self.rss(mu, beta)))
    }
}

impl RegressionObs {
    pub fn new(responses: Vec<f64>, covariates: Vec<f64>) -> Result<Self> {
        if responses.len() != covariates.len() {
            return Err(Error::InvalidObservation("responses and covariates differ in length".into()));
        }
        Ok(RegressionObs { responses, covariates })
    }

    pub fn stats(&self) -> RegressionStats {
        let mut s = RegressionStats::default();
        for (&y, &x) in self.responses.iter().zip(&self.covariates) {
            s.push(x, y);
        }
        s
    }
}

/// A time-ordered series of fingerstick responses and sensor covariates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesObs {
    pub responses: Vec<f64>,
    pub covariates: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timestamps: Option<Vec<String>>,
}

impl SeriesObs {
    pub fn new(responses: Vec<f64>, covariates: Vec<f64>) -> Result<Self> {
        if responses.len() != covariates.len() {
            return Err(Error::InvalidObservation("responses and covariates differ in length".into()));
        }
        if covariates.iter().any(|&x| x == 0.0 || !x.is_finite()) {
            return Err(Error::InvalidObservation("series covariates must be finite and nonzero".into()));
        }
        if responses.iter().any(|y| !y.is_finite()) {
            return Err(Error::InvalidObservation("non-finite series response".into()));
        }
        Ok(SeriesObs {
            responses,
            covariates,
            timestamps: None,
        })
    }

    pub fn len(&self) -> usize {
        self.responses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.responses.is_empty()
    }

    /// Splits into the first `n_train` points and the rest.
    pub fn split_at(&self, n_train: usize) -> (SeriesObs, SeriesObs) {
        let ts = self.timestamps.as_ref().map(|t| t.split_at(n_train));
        (
            SeriesObs {
                responses: self.responses[..n_train].to_vec(),
                covariates: self.covariates[..n_train].to_vec(),
                timestamps: ts.map(|t| t.0.to_vec()),
            },
            SeriesObs {
                responses: self.responses[n_train..].to_vec(),
                covariates: self.covariates[n_train..].to_vec(),
                timestamps: ts.map(|t| t.1.to_vec()),
            },
        )
    }
}

/// A single observation X_j for any supported kernel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Observation {
    Replicates(ReplicateObs),
    KnownVar(KnownVarObs),
    CountPair(CountPairObs),
    TwoClass(TwoClassObs),
    Regression(RegressionObs),
    Series(SeriesObs),
}

impl Observation {
    pub fn type_name(&self) -> &'static str {
        match self {
            Observation::Replicates(_) => "replicate",
            Observation::KnownVar(_) => "known-variance",
            Observation::CountPair(_) => "count-pair",
            Observation::TwoClass(_) => "two-class",
            Observation::Regression(_) => "regression",
            Observation::Series(_) => "series",
        }
    }
}

impl From<ReplicateObs> for Observation {
    fn from(o: ReplicateObs) -> Self {
        Observation::Replicates(o)
    }
}

impl From<KnownVarObs> for Observation {
    fn from(o: KnownVarObs) -> Self {
        Observation::KnownVar(o)
    }
}

impl From<CountPairObs> for Observation {
    fn from(o: CountPairObs) -> Self {
        Observation::CountPair(o)
    }
}

impl From<TwoClassObs> for Observation {
    fn from(o: TwoClassObs) -> Self {
        Observation::TwoClass(o)
    }
}

impl From<RegressionObs> for Observation {
    fn from(o: RegressionObs) -> Self {
        Observation::Regression(o)
    }
}

impl From<SeriesObs> for Observation {
    fn from(o: SeriesObs) -> Self {
        Observation::Series(o)
    }
}
