//! Batting averages under the Poisson-binomial mixture.
//!
//! First-half at-bats and hits `(A, H)` train a bivariate NPMLE over
//! `(lambda, pi)`; each player's second-half average is predicted by the
//! posterior mean of `pi`. Accuracy is measured by [`baseball_tse`] on the
//! arcsine-root scale, relative to the first-half MLE.

use std::fmt::{self, Write as _};
use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Poisson};
use serde::{Deserialize, Serialize};

use super::metrics::{baseball_tse, stabilize};
use crate::error::{Error, Result};
use crate::grid::GridSpec;
use crate::kernels::{CountPairObs, KernelId, Observation};
use crate::pipeline::{FitOptions, NpmleFit};

/// Players need more than this many at-bats in a half to be used.
pub const MIN_AT_BATS: u64 = 10;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BaseballRecord {
    pub player_id: String,
    pub is_pitcher: bool,
    pub ab1: u64,
    pub h1: u64,
    pub ab2: u64,
    pub h2: u64,
}

impl BaseballRecord {
    pub fn validate(&self) -> Result<()> {
        if self.h1 > self.ab1 || self.h2 > self.ab2 {
            return Err(Error::InvalidObservation(format!(
                "player {}: more hits than at-bats",
                self.player_id
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Cohort {
    All,
    Pitchers,
    NonPitchers,
}

impl Cohort {
    pub const ALL: [Cohort; 3] = [Cohort::All, Cohort::Pitchers, Cohort::NonPitchers];

    pub fn contains(self, r: &BaseballRecord) -> bool {
        match self {
            Cohort::All => true,
            Cohort::Pitchers => r.is_pitcher,
            Cohort::NonPitchers => !r.is_pitcher,
        }
    }
}

impl fmt::Display for Cohort {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Cohort::All => "all",
            Cohort::Pitchers => "pitchers",
            Cohort::NonPitchers => "non-pitchers",
        })
    }
}

/// Prediction for one training player.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlayerEstimate {
    pub player_id: String,
    pub pi_hat: f64,
    /// First-half MLE `H / A`.
    pub pi_mle: f64,
    /// Whether the player also qualifies for evaluation.
    pub evaluated: bool,
}

#[derive(Debug, Clone)]
pub struct CohortResult {
    pub cohort: Cohort,
    pub n_train: usize,
    pub n_test: usize,
    pub players: Vec<PlayerEstimate>,
    pub tse_mle: f64,
    pub tse_grand_mean: f64,
    pub tse_npmle: f64,
    pub fit: NpmleFit,
}

impl CohortResult {
    pub fn relative_grand_mean(&self) -> f64 {
        self.tse_grand_mean / self.tse_mle
    }

    pub fn relative_npmle(&self) -> f64 {
        self.tse_npmle / self.tse_mle
    }
}

/// Default options: EM on a 30 x 30 grid.
pub fn default_options() -> FitOptions {
    FitOptions::new(GridSpec::new(vec![30, 30]))
}

/// Fits one cohort and scores the three estimators on its test players.
pub fn baseball_pipeline(records: &[BaseballRecord], cohort: Cohort, opts: &FitOptions) -> Result<CohortResult> {
    for r in records {
        r.validate()?;
    }
    let train: Vec<&BaseballRecord> = records
        .iter()
        .filter(|r| cohort.contains(r) && r.ab1 > MIN_AT_BATS)
        .collect();
    if train.is_empty() {
        return Err(Error::EmptyCohort(format!("no {cohort} with more than {MIN_AT_BATS} first-half at-bats")));
    }
    let data = train
        .iter()
        .map(|r| CountPairObs::new(r.ab1, r.h1).map(Observation::from))
        .collect::<Result<Vec<_>>>()?;
    let fit = opts.fit(KernelId::PoissonBinomial, &data)?;
    let pi_hat = fit.posterior_means(|a| a[1])?;

    let w_mle: Vec<f64> = train.iter().map(|r| stabilize(r.ab1, r.h1)).collect();
    let grand_mean = w_mle.iter().sum::<f64>() / w_mle.len() as f64;

    let test_idx: Vec<usize> = (0..train.len()).filter(|&j| train[j].ab2 > MIN_AT_BATS).collect();
    if test_idx.is_empty() {
        return Err(Error::EmptyCohort(format!("no {cohort} with more than {MIN_AT_BATS} second-half at-bats")));
    }
    let held_out: Vec<(u64, u64)> = test_idx.iter().map(|&j| (train[j].ab2, train[j].h2)).collect();
    let pick = |v: &dyn Fn(usize) -> f64| test_idx.iter().map(|&j| v(j)).collect::<Vec<f64>>();
    let tse_mle = baseball_tse(&pick(&|j| w_mle[j]), &held_out)?;
    let tse_grand_mean = baseball_tse(&pick(&|_| grand_mean), &held_out)?;
    let tse_npmle = baseball_tse(&pick(&|j| pi_hat[j].sqrt().asin()), &held_out)?;

    let players = train
        .iter()
        .zip(&pi_hat)
        .map(|(r, &p)| PlayerEstimate {
            player_id: r.player_id.clone(),
            pi_hat: p,
            pi_mle: r.h1 as f64 / r.ab1 as f64,
            evaluated: r.ab2 > MIN_AT_BATS,
        })
        .collect();
    Ok(CohortResult {
        cohort,
        n_train: train.len(),
        n_test: test_idx.len(),
        players,
        tse_mle,
        tse_grand_mean,
        tse_npmle,
        fit,
    })
}

/// TSE relative to the MLE for every cohort.
#[derive(Debug, Clone)]
pub struct BaseballReport {
    pub cohorts: Vec<CohortResult>,
}

impl BaseballReport {
    fn rows(&self) -> Vec<(&'static str, Vec<f64>)> {
        vec![
            ("MLE", self.cohorts.iter().map(|c| c.tse_mle / c.tse_mle).collect()),
            ("Grand mean", self.cohorts.iter().map(CohortResult::relative_grand_mean).collect()),
            ("NPMLE", self.cohorts.iter().map(CohortResult::relative_npmle).collect()),
        ]
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["method".to_string()];
        header.extend(self.cohorts.iter().map(|c| c.cohort.to_string()));
        w.write_record(&header)?;
        for (name, vals) in self.rows() {
            let mut rec = vec![name.to_string()];
            rec.extend(vals.iter().map(|v| format!("{v:.6}")));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn text_table(&self) -> String {
        let mut s = String::new();
        let _ = write!(s, "{:<12}", "Method");
        for c in &self.cohorts {
            let _ = write!(s, "{:>14}", c.cohort.to_string());
        }
        s.push('\n');
        for (name, vals) in self.rows() {
            let _ = write!(s, "{name:<12}");
            for v in vals {
                let _ = write!(s, "{v:>14.3}");
            }
            s.push('\n');
        }
        let _ = write!(s, "{:<12}", "players");
        for c in &self.cohorts {
            let _ = write!(s, "{:>14}", format!("{}/{}", c.n_train, c.n_test));
        }
        s.push('\n');
        s
    }
}

/// Runs every cohort in [`Cohort::ALL`]. Cohorts without players fail the
/// whole report.
pub fn baseball_report(records: &[BaseballRecord], opts: &FitOptions) -> Result<BaseballReport> {
    let cohorts = Cohort::ALL
        .iter()
        .map(|&c| baseball_pipeline(records, c, opts))
        .collect::<Result<Vec<_>>>()?;
    Ok(BaseballReport { cohorts })
}

/// A two-atom `(lambda, pi)` population used when no real data is at hand.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoAtomDesign {
    pub players: usize,
    /// Share of players drawn from the pitcher atom.
    pub pitcher_share: f64,
    pub pitcher: (f64, f64),
    pub hitter: (f64, f64),
}

impl Default for TwoAtomDesign {
    fn default() -> Self {
        TwoAtomDesign {
            players: 600,
            pitcher_share: 0.2,
            pitcher: (30.0, 0.15),
            hitter: (150.0, 0.27),
        }
    }
}

/// Simulates both halves of a season: `A ~ Poisson(lambda)`,
/// `H | A ~ Binomial(A, pi)`, independently per half.
pub fn synthetic_two_atom(design: &TwoAtomDesign, seed: u64) -> Result<Vec<BaseballRecord>> {
    let check = |(l, p): (f64, f64)| l > 0.0 && p > 0.0 && p < 1.0;
    if !check(design.pitcher) || !check(design.hitter) || !(0.0..=1.0).contains(&design.pitcher_share) {
        return Err(Error::InvalidConfig("two-atom design needs lambda > 0, 0 < pi < 1 and a share in [0, 1]".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pitcher_draw = rand_distr::Bernoulli::new(design.pitcher_share)
        .map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let mut out = Vec::with_capacity(design.players);
    for j in 0..design.players {
        let is_pitcher = pitcher_draw.sample(&mut rng);
        let (lambda, pi) = if is_pitcher { design.pitcher } else { design.hitter };
        let poisson = Poisson::new(lambda).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        let mut half = || -> Result<(u64, u64)> {
            let a = poisson.sample(&mut rng) as u64;
            let h = Binomial::new(a, pi)
                .map_err(|e| Error::InvalidConfig(e.to_string()))?
                .sample(&mut rng);
            Ok((a, h))
        };
        let (ab1, h1) = half()?;
        let (ab2, h2) = half()?;
        out.push(BaseballRecord {
            player_id: format!("p{j:04}"),
            is_pitcher,
            ab1,
            h1,
            ab2,
            h2,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn mle_row_is_one_and_grand_mean_is_constant() {
        let records = synthetic_two_atom(&TwoAtomDesign { players: 200, ..Default::default() }, 3).unwrap();
        let res = baseball_pipeline(&records, Cohort::All, &default_options()).unwrap();
        let report = BaseballReport { cohorts: vec![res] };
        let rows = report.rows();
        assert_eq!(rows[0].1, vec![1.0]);
        assert!(rows[1].1[0] > 0.0);
        let table = report.text_table();
        assert!(table.contains("NPMLE"));
    }

    #[test]
    fn npmle_beats_mle_on_two_atom_population() {
        let records = synthetic_two_atom(&TwoAtomDesign::default(), 11).unwrap();
        let res = baseball_pipeline(&records, Cohort::All, &default_options()).unwrap();
        assert!(res.relative_npmle() < 1.0, "{}", res.relative_npmle());
        assert!(res.tse_mle > 0.0);
        for p in &res.players {
            assert!(p.pi_hat > 0.0 && p.pi_hat < 1.0);
        }
    }

    #[test]
    fn empty_cohort_is_an_error() {
        let records = vec![BaseballRecord {
            player_id: "a".into(),
            is_pitcher: false,
            ab1: 50,
            h1: 10,
            ab2: 50,
            h2: 12,
        }];
        assert!(matches!(
            baseball_pipeline(&records, Cohort::Pitchers, &default_options()),
            Err(Error::EmptyCohort(_))
        ));
    }

    #[test]
    fn invalid_record_is_rejected() {
        let r = BaseballRecord {
            player_id: "x".into(),
            is_pitcher: true,
            ab1: 3,
            h1: 4,
            ab2: 0,
            h2: 0,
        };
        assert!(r.validate().is_err());
    }

    #[test]
    fn synthetic_records_are_seeded() {
        let d = TwoAtomDesign { players: 50, ..Default::default() };
        assert_eq!(synthetic_two_atom(&d, 1).unwrap(), synthetic_two_atom(&d, 1).unwrap());
        assert_ne!(synthetic_two_atom(&d, 1).unwrap(), synthetic_two_atom(&d, 2).unwrap());
        let pitchers = synthetic_two_atom(&TwoAtomDesign { players: 4000, ..d }, 5)
            .unwrap()
            .iter()
            .filter(|r| r.is_pitcher)
            .count();
        assert_relative_eq!(pitchers as f64 / 4000.0, 0.2, epsilon = 3.0 * (0.16f64 / 4000.0).sqrt());
    }
}
