//! Empirical Bayes two-class classifier for many independent standardized
//! features.
//!
//! Each feature j carries class means `(mu_j0, mu_j1)`. The joint variant
//! fits one bivariate NPMLE for the pairs on a shared grid; the independent
//! variant fits one univariate NPMLE per class. A new subject is scored by
//! the sum over features of the log posterior-predictive density ratio plus
//! the training log prior odds.

use log::warn;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::GridSpec;
use crate::kernels::{KernelId, KnownVarObs, Observation, TwoClassObs};
use crate::model::{log_sum_exp, Grid, MixingWeights};
use crate::pipeline::FitOptions;
use crate::posterior::posterior_rows;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassifierKind {
    /// One bivariate mixing distribution for `(mu_0, mu_1)`.
    Joint,
    /// Separate univariate mixing distributions for `mu_0` and `mu_1`.
    Independent,
}

impl std::str::FromStr for ClassifierKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "joint" => Ok(ClassifierKind::Joint),
            "independent" => Ok(ClassifierKind::Independent),
            _ => Err(Error::InvalidConfig(format!("unknown classifier kind '{s}' (joint|independent)"))),
        }
    }
}

impl std::fmt::Display for ClassifierKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ClassifierKind::Joint => "joint",
            ClassifierKind::Independent => "independent",
        })
    }
}

/// Posterior-predictive mixture for one class of one feature: unit-variance
/// normals at `locations` with log weights `log_weights`.
#[derive(Debug, Clone, PartialEq)]
struct ClassMixture {
    locations: Vec<f64>,
    log_weights: Vec<f64>,
}

impl ClassMixture {
    /// Collapses `(location, weight)` pairs onto distinct locations.
    fn collapse(mut pairs: Vec<(f64, f64)>) -> Self {
        pairs.retain(|(_, w)| *w > 0.0);
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut locations: Vec<f64> = Vec::new();
        let mut weights: Vec<f64> = Vec::new();
        for (t, w) in pairs {
            match locations.last() {
                Some(&last) if last == t => *weights.last_mut().unwrap() += w,
                _ => {
                    locations.push(t);
                    weights.push(w);
                }
            }
        }
        ClassMixture {
            locations,
            log_weights: weights.iter().map(|w| w.ln()).collect(),
        }
    }

    /// `log sum_k w_k exp(-(x - t_k)^2 / 2)`; the Gaussian constant is
    /// dropped because it cancels between classes.
    fn log_density(&self, x: f64) -> f64 {
        let terms: Vec<f64> = self
            .locations
            .iter()
            .zip(&self.log_weights)
            .map(|(t, lw)| lw - 0.5 * (x - t).powi(2))
            .collect();
        log_sum_exp(&terms).unwrap_or(f64::NEG_INFINITY)
    }
}

#[derive(Debug, Clone)]
pub struct ClassifierModel {
    pub kind: ClassifierKind,
    /// Number of columns expected in a subject vector.
    pub n_features: usize,
    /// Columns that took part in the fit.
    pub features: Vec<usize>,
    pub class_counts: [usize; 2],
    pub log_prior_odds: f64,
    /// Fitted mixing distributions: one for the joint variant, two (class 0
    /// then class 1) for the independent variant.
    pub priors: Vec<(Grid, MixingWeights)>,
    mixtures: Vec<[ClassMixture; 2]>,
}

fn column(train: &[Vec<f64>], j: usize) -> Vec<f64> {
    train.iter().map(|row| row[j]).collect()
}

fn check_matrix(train: &[Vec<f64>], labels: &[u8]) -> Result<(usize, [usize; 2])> {
    if train.len() != labels.len() {
        return Err(Error::Incompatible {
            expected: train.len(),
            found: labels.len(),
        });
    }
    let p = train.first().map(Vec::len).unwrap_or(0);
    if p == 0 {
        return Err(Error::InvalidObservation("training matrix has no features".into()));
    }
    if let Some(i) = train.iter().position(|r| r.len() != p) {
        return Err(Error::at(
            i,
            Error::Incompatible {
                expected: p,
                found: train[i].len(),
            },
        ));
    }
    if labels.iter().any(|&y| y > 1) {
        return Err(Error::InvalidObservation("labels must be 0 or 1".into()));
    }
    let n1 = labels.iter().filter(|&&y| y == 1).count();
    let counts = [labels.len() - n1, n1];
    if counts.contains(&0) {
        return Err(Error::InvalidObservation("both classes must be present in the training labels".into()));
    }
    Ok((p, counts))
}

/// Per-feature observations, skipping features with a class that has no
/// observed values.
fn feature_observations(train: &[Vec<f64>], labels: &[u8], p: usize) -> Result<(Vec<usize>, Vec<TwoClassObs>)> {
    let mut kept = Vec::with_capacity(p);
    let mut obs = Vec::with_capacity(p);
    for j in 0..p {
        let o = TwoClassObs::new(column(train, j), labels.to_vec())?;
        let s = o.stats();
        if s.counts.contains(&0) {
            warn!("feature {j} has no observations in one class; excluded");
            continue;
        }
        kept.push(j);
        obs.push(o);
    }
    if kept.is_empty() {
        return Err(Error::InvalidObservation("every feature was excluded".into()));
    }
    Ok((kept, obs))
}

/// Fits the classifier. `opts.grid` must be two-dimensional; the independent
/// variant uses its two counts for the class-0 and class-1 grids.
pub fn fit_classifier(
    train: &[Vec<f64>],
    labels: &[u8],
    kind: ClassifierKind,
    opts: &FitOptions,
) -> Result<ClassifierModel> {
    let (p, class_counts) = check_matrix(train, labels)?;
    if opts.grid.per_dim_counts.len() != 2 {
        return Err(Error::InvalidGrid(format!(
            "classifier grid must be two-dimensional, got {:?}",
            opts.grid.per_dim_counts
        )));
    }
    let (features, obs) = feature_observations(train, labels, p)?;
    let (priors, mixtures) = match kind {
        ClassifierKind::Joint => fit_joint(&obs, opts)?,
        ClassifierKind::Independent => fit_independent(&obs, opts)?,
    };
    Ok(ClassifierModel {
        kind,
        n_features: p,
        features,
        class_counts,
        log_prior_odds: (class_counts[1] as f64 / class_counts[0] as f64).ln(),
        priors,
        mixtures,
    })
}

type Fitted = (Vec<(Grid, MixingWeights)>, Vec<[ClassMixture; 2]>);

fn fit_joint(obs: &[TwoClassObs], opts: &FitOptions) -> Result<Fitted> {
    let data: Vec<Observation> = obs.iter().cloned().map(Observation::TwoClass).collect();
    let fit = opts.fit(KernelId::TwoClassGaussian, &data)?;
    let posts = posterior_rows(&fit.matrix, &fit.fit.weights)?;
    let atoms = fit.grid.atoms();
    let mixtures = posts
        .iter()
        .map(|row| {
            [0, 1].map(|c| {
                ClassMixture::collapse(row.as_slice().iter().zip(atoms).map(|(w, a)| (a[c], *w)).collect())
            })
        })
        .collect();
    Ok((vec![(fit.grid, fit.fit.weights)], mixtures))
}

fn fit_independent(obs: &[TwoClassObs], opts: &FitOptions) -> Result<Fitted> {
    let stats: Vec<_> = obs.iter().map(TwoClassObs::stats).collect();
    let mut priors = Vec::with_capacity(2);
    let mut per_class: Vec<Vec<ClassMixture>> = Vec::with_capacity(2);
    for c in 0..2 {
        let data: Vec<Observation> = stats
            .iter()
            .map(|s| KnownVarObs::scalar(s.means[c], 1.0 / s.counts[c] as f64).into())
            .collect();
        let spec = GridSpec {
            per_dim_counts: vec![opts.grid.per_dim_counts[c]],
            bounds_mode: opts.grid.bounds_mode,
            explicit_bounds: opts.grid.explicit_bounds.as_ref().map(|b| vec![b[c]]),
        };
        let fit = FitOptions { grid: spec, ..opts.clone() }.fit(KernelId::GaussianLocation, &data)?;
        let posts = posterior_rows(&fit.matrix, &fit.fit.weights)?;
        per_class.push(
            posts
                .iter()
                .map(|row| {
                    ClassMixture::collapse(
                        row.as_slice().iter().zip(fit.grid.atoms()).map(|(w, a)| (a[0], *w)).collect(),
                    )
                })
                .collect(),
        );
        priors.push((fit.grid, fit.fit.weights));
    }
    let class1 = per_class.pop().unwrap();
    let class0 = per_class.pop().unwrap();
    let mixtures = class0.into_iter().zip(class1).map(|(a, b)| [a, b]).collect();
    Ok((priors, mixtures))
}

impl ClassifierModel {
    /// Log posterior odds of class 1. Missing (NaN) values are skipped.
    pub fn score(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.n_features {
            return Err(Error::Incompatible {
                expected: self.n_features,
                found: x.len(),
            });
        }
        let mut s = self.log_prior_odds;
        for (&j, [m0, m1]) in self.features.iter().zip(&self.mixtures) {
            let v = x[j];
            if v.is_nan() {
                continue;
            }
            s += m1.log_density(v) - m0.log_density(v);
        }
        Ok(s)
    }

    /// Class 1 iff the score is nonnegative.
    pub fn classify(&self, x: &[f64]) -> Result<u8> {
        Ok(u8::from(self.score(x)? >= 0.0))
    }

    pub fn classify_all(&self, rows: &[Vec<f64>]) -> Result<Vec<u8>> {
        rows.iter()
            .enumerate()
            .map(|(i, r)| self.classify(r).map_err(|e| Error::at(i, e)))
            .collect()
    }
}

/// Counts of (truth, prediction) pairs.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct Confusion {
    pub true_negative: usize,
    pub false_positive: usize,
    pub false_negative: usize,
    pub true_positive: usize,
}

impl Confusion {
    pub fn from_labels(truth: &[u8], predicted: &[u8]) -> Result<Self> {
        if truth.len() != predicted.len() {
            return Err(Error::Incompatible {
                expected: truth.len(),
                found: predicted.len(),
            });
        }
        let mut c = Confusion::default();
        for (&t, &p) in truth.iter().zip(predicted) {
            match (t, p) {
                (0, 0) => c.true_negative += 1,
                (0, _) => c.false_positive += 1,
                (_, 0) => c.false_negative += 1,
                _ => c.true_positive += 1,
            }
        }
        Ok(c)
    }

    pub fn total(&self) -> usize {
        self.true_negative + self.false_positive + self.false_negative + self.true_positive
    }

    pub fn errors(&self) -> usize {
        self.false_positive + self.false_negative
    }

    pub fn error_rate(&self) -> f64 {
        self.errors() as f64 / self.total() as f64
    }

    pub fn text_table(&self) -> String {
        format!(
            "            pred 0  pred 1\ntrue 0  {:>8}{:>8}\ntrue 1  {:>8}{:>8}\nerrors  {} of {} ({:.1}%)\n",
            self.true_negative,
            self.false_positive,
            self.false_negative,
            self.true_positive,
            self.errors(),
            self.total(),
            100.0 * self.error_rate()
        )
    }
}

/// Synthetic expression data with known class means.
///
/// Class-0 means are `mean_sd * N(0, 1)` per feature; class-1 means equal
/// them plus `shift` on a random `informative_share` of features. With
/// `mean_sd = 0` this is the shifted-feature design; with `mean_sd > 0` the
/// two class means are strongly correlated across features.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassifierDesign {
    pub features: usize,
    pub informative_share: f64,
    pub shift: f64,
    pub mean_sd: f64,
    pub train_per_class: usize,
    pub test_per_class: usize,
}

impl ClassifierDesign {
    pub fn shifted() -> Self {
        ClassifierDesign {
            features: 500,
            informative_share: 0.1,
            shift: 2.0,
            mean_sd: 0.0,
            train_per_class: 30,
            test_per_class: 50,
        }
    }

    pub fn correlated() -> Self {
        ClassifierDesign {
            shift: 1.0,
            mean_sd: 1.0,
            ..Self::shifted()
        }
    }
}

/// Labelled train and test matrices (rows are subjects).
#[derive(Debug, Clone, PartialEq)]
pub struct LabelledData {
    pub train: Vec<Vec<f64>>,
    pub train_labels: Vec<u8>,
    pub test: Vec<Vec<f64>>,
    pub test_labels: Vec<u8>,
}

pub fn synthetic_classification(design: &ClassifierDesign, seed: u64) -> Result<LabelledData> {
    if design.features == 0 || design.train_per_class == 0 || design.test_per_class == 0 {
        return Err(Error::InvalidConfig("design sizes must be positive".into()));
    }
    if !(0.0..=1.0).contains(&design.informative_share) || !(design.mean_sd >= 0.0) {
        return Err(Error::InvalidConfig("informative_share must be in [0, 1] and mean_sd >= 0".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut means = Vec::with_capacity(design.features);
    for _ in 0..design.features {
        let z: f64 = rng.sample(StandardNormal);
        let m0 = design.mean_sd * z;
        let m1 = if rng.random_bool(design.informative_share) { m0 + design.shift } else { m0 };
        means.push([m0, m1]);
    }
    let mut draw = |per_class: usize| -> (Vec<Vec<f64>>, Vec<u8>) {
        let mut rows = Vec::with_capacity(2 * per_class);
        let mut labels = Vec::with_capacity(2 * per_class);
        for i in 0..2 * per_class {
            let y = (i % 2) as u8;
            rows.push(
                means
                    .iter()
                    .map(|m| m[y as usize] + rng.sample::<f64, _>(StandardNormal))
                    .collect(),
            );
            labels.push(y);
        }
        (rows, labels)
    };
    let (train, train_labels) = draw(design.train_per_class);
    let (test, test_labels) = draw(design.test_per_class);
    Ok(LabelledData {
        train,
        train_labels,
        test,
        test_labels,
    })
}
