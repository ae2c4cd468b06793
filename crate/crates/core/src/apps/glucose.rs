//! Fingerstick glucose prediction from sensor current.
//!
//! Two per-subject models relate fingerstick glucose `FS` to sensor current
//! `ISIG`: a linear regression `FS = mu + beta ISIG + sigma eps` and the
//! random-walk sensitivity model of [`crate::kernels::kalman`]. Each is fitted
//! three ways: one parameter for everyone (combined), one per subject
//! (individual), or a mixing distribution over subjects (NPMLE). The first
//! half of every series trains the model and the second half is predicted
//! one point at a time, using everything observed before that point plus the
//! current `ISIG`.

use std::fmt::{self, Write as _};
use std::io::Write;
use std::str::FromStr;

use log::warn;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::mse;
use crate::error::{Error, Result};
use crate::grid::GridSpec;
use crate::kernels::kalman::{maximize_log_scale_2d, ss_filter, ss_log_lik, ss_mle};
use crate::kernels::{lm_predict, KernelId, Observation, RegressionObs, RegressionStats, SeriesObs};
use crate::model::{log_sum_exp, Grid, MixingWeights};
use crate::pipeline::FitOptions;

#[derive(Debug, Clone, PartialEq)]
pub struct Subject {
    pub id: String,
    /// Paired `(FS, ISIG)` readings in time order.
    pub series: SeriesObs,
    /// Baseline sensor estimate at each reading, when available.
    pub cgm: Option<Vec<f64>>,
}

impl Subject {
    /// Readings used for training; the rest are predicted.
    pub fn n_train(&self) -> usize {
        self.series.len() / 2
    }

    fn train(&self) -> SeriesObs {
        self.series.split_at(self.n_train()).0
    }

    fn test_truth(&self) -> &[f64] {
        &self.series.responses[self.n_train()..]
    }

    fn test_cgm(&self) -> Option<&[f64]> {
        self.cgm.as_ref().map(|c| &c[self.n_train()..])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GlucoseModel {
    /// Linear regression on ISIG.
    Lm,
    /// Random-walk sensitivity (Kalman filter).
    Ss,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GlucoseMode {
    Combined,
    Individual,
    Npmle,
}

impl GlucoseModel {
    pub const ALL: [GlucoseModel; 2] = [GlucoseModel::Lm, GlucoseModel::Ss];

    fn min_train(self) -> usize {
        match self {
            GlucoseModel::Lm => 4,
            GlucoseModel::Ss => 3,
        }
    }
}

impl GlucoseMode {
    pub const ALL: [GlucoseMode; 3] = [GlucoseMode::Combined, GlucoseMode::Individual, GlucoseMode::Npmle];
}

impl fmt::Display for GlucoseModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GlucoseModel::Lm => "lm",
            GlucoseModel::Ss => "ss",
        })
    }
}

impl fmt::Display for GlucoseMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GlucoseMode::Combined => "combined",
            GlucoseMode::Individual => "individual",
            GlucoseMode::Npmle => "npmle",
        })
    }
}

impl FromStr for GlucoseModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lm" => Ok(GlucoseModel::Lm),
            "ss" => Ok(GlucoseModel::Ss),
            _ => Err(Error::InvalidConfig(format!("unknown glucose model '{s}' (lm|ss)"))),
        }
    }
}

impl FromStr for GlucoseMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "combined" => Ok(GlucoseMode::Combined),
            "individual" => Ok(GlucoseMode::Individual),
            "npmle" => Ok(GlucoseMode::Npmle),
            _ => Err(Error::InvalidConfig(format!(
                "unknown glucose mode '{s}' (combined|individual|npmle)"
            ))),
        }
    }
}

/// Fit settings for the two NPMLE variants.
#[derive(Debug, Clone, PartialEq)]
pub struct GlucoseOptions {
    /// Three-dimensional grid over `(mu, beta, log sigma)`.
    pub lm: FitOptions,
    /// Two-dimensional grid over `(log tau, log sigma)`.
    pub ss: FitOptions,
}

impl Default for GlucoseOptions {
    fn default() -> Self {
        GlucoseOptions {
            lm: FitOptions::new(GridSpec::new(vec![30, 30, 30])),
            ss: FitOptions::new(GridSpec::new(vec![30, 30])),
        }
    }
}

/// Subjects with enough readings for `model`; the rest are dropped with a
/// warning.
pub fn usable_subjects(subjects: &[Subject], model: GlucoseModel) -> Vec<&Subject> {
    subjects
        .iter()
        .filter(|s| {
            let ok = s.n_train() >= model.min_train() && s.series.len() > s.n_train();
            let ok = ok
                && match model {
                    GlucoseModel::Lm => lm_stats(&s.train()).least_squares().is_some(),
                    GlucoseModel::Ss => true,
                };
            if !ok {
                warn!("subject {} has too few usable readings for the {model} model; excluded", s.id);
            }
            ok
        })
        .collect()
}

fn lm_stats(series: &SeriesObs) -> RegressionStats {
    let mut st = RegressionStats::default();
    for (&x, &y) in series.covariates.iter().zip(&series.responses) {
        st.push(x, y);
    }
    st
}

fn test_isig(s: &Subject) -> &[f64] {
    &s.series.covariates[s.n_train()..]
}

/// One-step-ahead Kalman predictions `E[alpha_i | F_{i-1}] ISIG_i` for the
/// test readings of `s` at a single `(log tau, log sigma)`.
pub fn kalman_predictions(s: &Subject, atom: &[f64]) -> Result<Vec<f64>> {
    let out = ss_filter(&s.series, atom)?;
    let n0 = s.n_train();
    Ok((n0..s.series.len())
        .map(|i| out.predicted_means[i] * s.series.covariates[i])
        .collect())
}

/// Predictions averaged over the mixing distribution `(grid, w)`: atom
/// weights are updated with every reading before the predicted one.
pub fn mixture_kalman_predictions(s: &Subject, grid: &Grid, w: &MixingWeights) -> Result<Vec<f64>> {
    let support = w.support();
    let filters = support
        .iter()
        .map(|&k| ss_filter(&s.series, grid.atoms()[k].coords()))
        .collect::<Result<Vec<_>>>()?;
    let log_w: Vec<f64> = support.iter().map(|&k| w.as_slice()[k].ln()).collect();
    let n0 = s.n_train();
    let mut preds = Vec::with_capacity(s.series.len() - n0);
    let mut log_post = vec![0.0; support.len()];
    for i in n0..s.series.len() {
        for (m, f) in filters.iter().enumerate() {
            log_post[m] = log_w[m] + f.cumulative_log_lik[i - 1];
        }
        let norm = log_sum_exp(&log_post)?;
        let alpha: f64 = filters
            .iter()
            .zip(&log_post)
            .map(|(f, lp)| (lp - norm).exp() * f.predicted_means[i])
            .sum();
        preds.push(alpha * s.series.covariates[i]);
    }
    Ok(preds)
}

/// Linear-model predictions averaged over `(grid, w)`, with atom weights
/// updated by the training readings and every test reading before the
/// predicted one.
pub fn mixture_lm_predictions(s: &Subject, grid: &Grid, w: &MixingWeights) -> Result<Vec<f64>> {
    let support = w.support();
    let atoms: Vec<&[f64]> = support.iter().map(|&k| grid.atoms()[k].coords()).collect();
    let train = lm_stats(&s.train());
    let mut log_post: Vec<f64> = support
        .iter()
        .zip(&atoms)
        .map(|(&k, a)| {
            let (mu, beta, log_sigma) = (a[0], a[1], a[2]);
            w.as_slice()[k].ln() - train.n as f64 * log_sigma
                - train.rss(mu, beta) / (2.0 * (2.0 * log_sigma).exp())
        })
        .collect();
    let n0 = s.n_train();
    let mut preds = Vec::with_capacity(s.series.len() - n0);
    for i in n0..s.series.len() {
        let x = s.series.covariates[i];
        let norm = log_sum_exp(&log_post)?;
        let pred: f64 = atoms
            .iter()
            .zip(&log_post)
            .map(|(a, lp)| (lp - norm).exp() * lm_predict(a[0], a[1], x))
            .sum();
        preds.push(pred);
        let y = s.series.responses[i];
        for (lp, a) in log_post.iter_mut().zip(&atoms) {
            let r = y - lm_predict(a[0], a[1], x);
            *lp += -a[2] - r * r / (2.0 * (2.0 * a[2]).exp());
        }
    }
    Ok(preds)
}

/// Test predictions for every subject in `subjects`, in order.
pub fn glucose_predictions(
    subjects: &[&Subject],
    model: GlucoseModel,
    mode: GlucoseMode,
    opts: &GlucoseOptions,
) -> Result<Vec<Vec<f64>>> {
    if subjects.is_empty() {
        return Err(Error::EmptyCohort("no subject has enough readings".into()));
    }
    let indexed = |f: &(dyn Fn(&Subject) -> Result<Vec<f64>> + Sync)| -> Result<Vec<Vec<f64>>> {
        subjects
            .par_iter()
            .enumerate()
            .map(|(j, s)| f(s).map_err(|e| Error::at(j, e)))
            .collect()
    };
    match (model, mode) {
        (GlucoseModel::Lm, GlucoseMode::Combined) => {
            let mut pooled = RegressionStats::default();
            for s in subjects {
                pooled.merge(&lm_stats(&s.train()));
            }
            let (mu, beta, _) = pooled
                .least_squares()
                .ok_or_else(|| Error::InvalidObservation("pooled ISIG is constant".into()))?;
            indexed(&|s| Ok(test_isig(s).iter().map(|&x| lm_predict(mu, beta, x)).collect()))
        }
        (GlucoseModel::Lm, GlucoseMode::Individual) => indexed(&|s| {
            let (mu, beta, _) = lm_stats(&s.train())
                .least_squares()
                .ok_or_else(|| Error::InvalidObservation("ISIG is constant".into()))?;
            Ok(test_isig(s).iter().map(|&x| lm_predict(mu, beta, x)).collect())
        }),
        (GlucoseModel::Lm, GlucoseMode::Npmle) => {
            let data = subjects
                .iter()
                .map(|s| {
                    let t = s.train();
                    RegressionObs::new(t.responses, t.covariates).map(Observation::from)
                })
                .collect::<Result<Vec<_>>>()?;
            let fit = opts.lm.fit(KernelId::LinearRegression, &data)?;
            indexed(&|s| mixture_lm_predictions(s, &fit.grid, &fit.fit.weights))
        }
        (GlucoseModel::Ss, GlucoseMode::Combined) => {
            let trains: Vec<SeriesObs> = subjects.iter().map(|s| s.train()).collect();
            let (a, b) = maximize_log_scale_2d(|a, b| trains.iter().map(|t| ss_log_lik(t, a, b)).sum());
            indexed(&|s| kalman_predictions(s, &[a, b]))
        }
        (GlucoseModel::Ss, GlucoseMode::Individual) => indexed(&|s| {
            let (a, b) = ss_mle(&s.train())?;
            kalman_predictions(s, &[a, b])
        }),
        (GlucoseModel::Ss, GlucoseMode::Npmle) => {
            let data: Vec<Observation> = subjects.iter().map(|s| Observation::Series(s.train())).collect();
            let fit = opts.ss.fit(KernelId::LocalLevelStateSpace, &data)?;
            indexed(&|s| mixture_kalman_predictions(s, &fit.grid, &fit.fit.weights))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GlucoseResult {
    pub model: GlucoseModel,
    pub mode: GlucoseMode,
    pub subjects: usize,
    pub test_points: usize,
    pub mse: f64,
    /// MSE of the baseline column over the same points, when every test
    /// reading has one.
    pub baseline_mse: Option<f64>,
}

impl GlucoseResult {
    /// MSE relative to the baseline, or the absolute MSE without one.
    pub fn relative(&self) -> f64 {
        self.baseline_mse.map_or(self.mse, |b| self.mse / b)
    }
}

pub fn glucose_pipeline(
    subjects: &[Subject],
    model: GlucoseModel,
    mode: GlucoseMode,
    opts: &GlucoseOptions,
) -> Result<GlucoseResult> {
    let used = usable_subjects(subjects, model);
    let preds = glucose_predictions(&used, model, mode, opts)?;
    let mut all_pred = Vec::new();
    let mut truth = Vec::new();
    let mut cgm = Some(Vec::new());
    for (s, p) in used.iter().zip(preds) {
        all_pred.extend(p);
        truth.extend_from_slice(s.test_truth());
        cgm = match (cgm, s.test_cgm()) {
            (Some(mut acc), Some(c)) if c.iter().all(|v| v.is_finite()) => {
                acc.extend_from_slice(c);
                Some(acc)
            }
            _ => None,
        };
    }
    Ok(GlucoseResult {
        model,
        mode,
        subjects: used.len(),
        test_points: truth.len(),
        mse: mse(&all_pred, &truth)?,
        baseline_mse: cgm.map(|c| mse(&c, &truth)).transpose()?,
    })
}

#[derive(Debug, Clone)]
pub struct GlucoseReport {
    pub results: Vec<GlucoseResult>,
}

/// Every model and mode.
pub fn glucose_report(subjects: &[Subject], opts: &GlucoseOptions) -> Result<GlucoseReport> {
    let mut results = Vec::new();
    for model in GlucoseModel::ALL {
        for mode in GlucoseMode::ALL {
            results.push(glucose_pipeline(subjects, model, mode, opts)?);
        }
    }
    Ok(GlucoseReport { results })
}

impl GlucoseReport {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["model", "mode", "subjects", "test_points", "mse", "baseline_mse", "relative_mse"])?;
        for r in &self.results {
            w.write_record([
                r.model.to_string(),
                r.mode.to_string(),
                r.subjects.to_string(),
                r.test_points.to_string(),
                format!("{:.6}", r.mse),
                r.baseline_mse.map(|b| format!("{b:.6}")).unwrap_or_default(),
                format!("{:.6}", r.relative()),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn text_table(&self) -> String {
        let relative = self.results.iter().all(|r| r.baseline_mse.is_some());
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{}",
            if relative { "MSE relative to the baseline" } else { "MSE" }
        );
        let _ = writeln!(s, "{:<8}{:>12}{:>12}{:>12}", "model", "combined", "individual", "npmle");
        for model in GlucoseModel::ALL {
            let _ = write!(s, "{:<8}", model.to_string());
            for mode in GlucoseMode::ALL {
                match self.results.iter().find(|r| r.model == model && r.mode == mode) {
                    Some(r) if relative => {
                        let _ = write!(s, "{:>12.3}", r.relative());
                    }
                    Some(r) => {
                        let _ = write!(s, "{:>12.2}", r.mse);
                    }
                    None => {
                        let _ = write!(s, "{:>12}", "-");
                    }
                }
            }
            s.push('\n');
        }
        s
    }
}

/// Subjects whose `(log tau, log sigma)` come from a two-atom mixture.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubjectDesign {
    pub subjects: usize,
    pub readings: usize,
    /// `(log tau, log sigma)` of the two subject types, taken with equal
    /// probability.
    pub atoms: [(f64, f64); 2],
    pub initial_sensitivity: f64,
    pub isig_range: (f64, f64),
    /// Noise SD of the synthetic baseline column around the true glucose.
    pub baseline_sd: f64,
}

impl Default for SubjectDesign {
    fn default() -> Self {
        SubjectDesign {
            subjects: 40,
            readings: 60,
            atoms: [(0.01f64.ln(), 20f64.ln()), (0.4f64.ln(), 5f64.ln())],
            initial_sensitivity: 6.0,
            isig_range: (10.0, 40.0),
            baseline_sd: 8.0,
        }
    }
}

pub fn synthetic_subjects(design: &SubjectDesign, seed: u64) -> Result<Vec<Subject>> {
    if design.subjects == 0 || design.readings < 2 {
        return Err(Error::InvalidConfig("need at least one subject with two readings".into()));
    }
    let (lo, hi) = design.isig_range;
    if !(lo > 0.0 && hi > lo) {
        return Err(Error::InvalidConfig("ISIG range must be positive and increasing".into()));
    }
    let baseline =
        Normal::new(0.0, design.baseline_sd).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(design.subjects);
    for j in 0..design.subjects {
        let (log_tau, log_sigma) = design.atoms[usize::from(rng.random_bool(0.5))];
        let (tau, sigma) = (log_tau.exp(), log_sigma.exp());
        let mut alpha = design.initial_sensitivity;
        let mut fs = Vec::with_capacity(design.readings);
        let mut isig = Vec::with_capacity(design.readings);
        let mut cgm = Vec::with_capacity(design.readings);
        for i in 0..design.readings {
            if i > 0 {
                alpha += tau * rng.sample::<f64, _>(StandardNormal);
            }
            let x = rng.random_range(lo..hi);
            let glucose = alpha * x;
            fs.push(glucose + sigma * rng.sample::<f64, _>(StandardNormal));
            isig.push(x);
            cgm.push(glucose + baseline.sample(&mut rng));
        }
        out.push(Subject {
            id: format!("s{j:03}"),
            series: SeriesObs::new(fs, isig)?,
            cgm: Some(cgm),
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Atom;
    use approx::assert_relative_eq;

    fn small() -> Vec<Subject> {
        synthetic_subjects(
            &SubjectDesign {
                subjects: 6,
                readings: 20,
                ..Default::default()
            },
            2,
        )
        .unwrap()
    }

    #[test]
    fn combined_with_one_subject_is_individual() {
        let subjects = small();
        let one = vec![&subjects[0]];
        let opts = GlucoseOptions::default();
        for model in GlucoseModel::ALL {
            let a = glucose_predictions(&one, model, GlucoseMode::Combined, &opts).unwrap();
            let b = glucose_predictions(&one, model, GlucoseMode::Individual, &opts).unwrap();
            for (x, y) in a[0].iter().zip(&b[0]) {
                assert_relative_eq!(x, y, epsilon = 1e-8, max_relative = 1e-10);
            }
        }
    }

    #[test]
    fn point_mass_mixture_is_the_plain_filter() {
        let subjects = small();
        let grid = Grid::new(vec![
            Atom::new(vec![-1.0, 2.0]).unwrap(),
            Atom::new(vec![-3.0, 1.5]).unwrap(),
        ])
        .unwrap();
        let w = MixingWeights::point_mass(2, 1);
        for s in &subjects {
            let mixed = mixture_kalman_predictions(s, &grid, &w).unwrap();
            let plain = kalman_predictions(s, &[-3.0, 1.5]).unwrap();
            for (a, b) in mixed.iter().zip(&plain) {
                assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
            }
        }
    }

    #[test]
    fn one_atom_lm_mixture_is_that_line() {
        let s = &small()[0];
        let grid = Grid::new(vec![Atom::new(vec![3.0, 5.0, 2.0]).unwrap()]).unwrap();
        let preds = mixture_lm_predictions(s, &grid, &MixingWeights::uniform(1)).unwrap();
        for (p, x) in preds.iter().zip(test_isig(s)) {
            assert_relative_eq!(*p, 3.0 + 5.0 * x, epsilon = 1e-9);
        }
    }

    #[test]
    fn report_covers_every_cell() {
        let report = glucose_report(&small(), &GlucoseOptions {
            lm: FitOptions::new(GridSpec::new(vec![8, 8, 8])),
            ss: FitOptions::new(GridSpec::new(vec![10, 10])),
        })
        .unwrap();
        assert_eq!(report.results.len(), 6);
        for r in &report.results {
            assert_eq!(r.subjects, 6);
            assert_eq!(r.test_points, 60);
            assert!(r.baseline_mse.is_some() && r.relative() > 0.0);
        }
        assert!(report.text_table().contains("relative"));
    }

    #[test]
    fn short_subjects_are_excluded() {
        let mut subjects = small();
        subjects[1].series = SeriesObs::new(vec![100.0, 110.0, 120.0], vec![20.0, 21.0, 22.0]).unwrap();
        subjects[1].cgm = None;
        assert_eq!(usable_subjects(&subjects, GlucoseModel::Ss).len(), 5);
        assert_eq!(usable_subjects(&subjects, GlucoseModel::Lm).len(), 5);
    }
}
