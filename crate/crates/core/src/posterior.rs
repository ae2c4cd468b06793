//! Empirical-Bayes quantities under a fitted discrete mixing distribution.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Normal, Poisson};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kernels::{CountPairObs, KernelId, KnownVarObs, Observation, ReplicateObs, TwoClassObs};
use crate::model::{log_sum_exp_iter, Atom, Grid, LogLikelihoodMatrix, MixingWeights};

/// Posterior probabilities of the grid atoms given one observation.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorRow(Vec<f64>);

impl PosteriorRow {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    #[cfg(test)]
    pub(crate) fn from_vec(v: Vec<f64>) -> Self {
        PosteriorRow(v)
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

/// `weights_k ∝ exp(L_row_k) w_k`, normalized in log space.
pub fn posterior_row(l_row: &[f64], w: &MixingWeights) -> Result<PosteriorRow> {
    posterior_from_log(l_row, w.as_slice())
}

fn posterior_from_log(l_row: &[f64], mix: &[f64]) -> Result<PosteriorRow> {
    if l_row.len() != mix.len() {
        return Err(Error::Incompatible {
            expected: mix.len(),
            found: l_row.len(),
        });
    }
    let log_post: Vec<f64> = l_row
        .iter()
        .zip(mix)
        .map(|(l, &m)| if m > 0.0 { l + m.ln() } else { f64::NEG_INFINITY })
        .collect();
    let top = log_post.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if top == f64::NEG_INFINITY || top.is_nan() {
        return Err(Error::DegenerateRow { row: 0 });
    }
    let mut post: Vec<f64> = log_post.iter().map(|v| (v - top).exp()).collect();
    let total: f64 = post.iter().sum();
    post.iter_mut().for_each(|v| *v /= total);
    Ok(PosteriorRow(post))
}

/// Posterior rows for every observation of `l`.
pub fn posterior_rows(l: &LogLikelihoodMatrix, w: &MixingWeights) -> Result<Vec<PosteriorRow>> {
    (0..l.rows())
        .into_par_iter()
        .map(|j| posterior_row(l.row(j), w).map_err(|_| Error::DegenerateRow { row: j }))
        .collect()
}

/// `sum_k row_k coord(t_k)`.
pub fn posterior_mean<F>(row: &PosteriorRow, grid: &Grid, coord: F) -> Result<f64>
where
    F: Fn(&Atom) -> f64,
{
    if row.len() != grid.len() {
        return Err(Error::Incompatible {
            expected: grid.len(),
            found: row.len(),
        });
    }
    Ok(row
        .as_slice()
        .iter()
        .zip(grid.atoms())
        .filter(|(p, _)| **p > 0.0)
        .map(|(p, a)| p * coord(a))
        .sum())
}

/// Which mixing distribution to integrate a new observation against.
#[derive(Debug, Clone, Copy)]
pub enum Mixing<'a> {
    /// The fitted prior weights.
    Prior,
    /// A per-observation posterior row.
    Posterior(&'a PosteriorRow),
}

/// `log sum_k mix_k f(new_obs | t_k)`.
pub fn predictive_log_density(
    kernel: KernelId,
    grid: &Grid,
    w: &MixingWeights,
    mixing: Mixing<'_>,
    new_obs: &Observation,
) -> Result<f64> {
    let mix = match mixing {
        Mixing::Prior => w.as_slice(),
        Mixing::Posterior(row) => row.as_slice(),
    };
    if mix.len() != grid.len() {
        return Err(Error::Incompatible {
            expected: grid.len(),
            found: mix.len(),
        });
    }
    let densities = kernel.log_density_row(new_obs, grid)?;
    log_sum_exp_iter(
        densities
            .iter()
            .zip(mix)
            .filter(|(_, m)| **m > 0.0)
            .map(|(d, m)| d + m.ln()),
    )
}

/// Mass of each distinct value of coordinate `dim`, in increasing order of
/// value.
pub fn marginalize(grid: &Grid, w: &MixingWeights, dim: usize) -> Result<Vec<(f64, f64)>> {
    if dim >= grid.dim() {
        return Err(Error::InvalidConfig(format!(
            "dimension {dim} out of range for {}-d atoms",
            grid.dim()
        )));
    }
    if w.len() != grid.len() {
        return Err(Error::Incompatible {
            expected: grid.len(),
            found: w.len(),
        });
    }
    let mut pairs: Vec<(f64, f64)> = grid.atoms().iter().map(|a| a[dim]).zip(w.as_slice().iter().copied()).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut out: Vec<(f64, f64)> = Vec::new();
    for (v, m) in pairs {
        match out.last_mut() {
            Some(last) if last.0 == v => last.1 += m,
            _ => out.push((v, m)),
        }
    }
    Ok(out)
}

/// Shape of simulated observations for kernels with several values per draw.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleOptions {
    /// Replicates per draw (location-scale), or subjects per class
    /// (two-class).
    pub replicates: usize,
    /// Measurement variance for the location and two-class kernels.
    pub variance: f64,
}

impl Default for SampleOptions {
    fn default() -> Self {
        SampleOptions {
            replicates: 16,
            variance: 1.0,
        }
    }
}

/// Draws `(atom index, observation)` pairs from the fitted mixture.
///
/// Each draw picks atom `k` with probability `w_k` and then an observation
/// from `f(. | t_k)`. The stream is a ChaCha8 generator seeded with `seed`.
pub fn sample_mixture_indexed(
    kernel: KernelId,
    grid: &Grid,
    w: &MixingWeights,
    n_draws: usize,
    seed: u64,
    opts: &SampleOptions,
) -> Result<Vec<(usize, Observation)>> {
    if matches!(kernel, KernelId::LinearRegression | KernelId::LocalLevelStateSpace) {
        return Err(Error::Unsupported(format!("kernel {kernel} has no sampler")));
    }
    if n_draws == 0 {
        return Err(Error::InvalidConfig("n_draws must be at least 1".into()));
    }
    if w.len() != grid.len() {
        return Err(Error::Incompatible {
            expected: grid.len(),
            found: w.len(),
        });
    }
    if opts.replicates == 0 || !(opts.variance > 0.0) {
        return Err(Error::InvalidConfig("replicates and variance must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let atoms = WeightedIndex::new(w.as_slice()).map_err(|e| Error::InvalidWeights(e.to_string()))?;
    let noise = |sd: f64| Normal::new(0.0, sd).map_err(|e| Error::Domain {
        kernel: kernel.name(),
        reason: e.to_string(),
    });
    let unit = noise(opts.variance.sqrt())?;

    let mut out = Vec::with_capacity(n_draws);
    for _ in 0..n_draws {
        let k = atoms.sample(&mut rng);
        let t = grid.atoms()[k].coords();
        let obs: Observation = match kernel {
            KernelId::PoissonBinomial => {
                let lambda = Poisson::new(t[0]).map_err(|e| Error::Domain {
                    kernel: kernel.name(),
                    reason: e.to_string(),
                })?;
                let a = lambda.sample(&mut rng) as u64;
                let h = Binomial::new(a, t[1])
                    .map_err(|e| Error::Domain {
                        kernel: kernel.name(),
                        reason: e.to_string(),
                    })?
                    .sample(&mut rng);
                CountPairObs::new(a, h)?.into()
            }
            KernelId::GaussianLocationScale => {
                let eps = noise(t[1])?;
                let values = (0..opts.replicates).map(|_| t[0] + eps.sample(&mut rng)).collect();
                ReplicateObs::new(values).into()
            }
            KernelId::GaussianLocation => {
                let values = t.iter().map(|mu| mu + unit.sample(&mut rng)).collect();
                KnownVarObs::new(values, vec![opts.variance; t.len()]).into()
            }
            KernelId::TwoClassGaussian => {
                let mut values = Vec::with_capacity(2 * opts.replicates);
                let mut labels = Vec::with_capacity(2 * opts.replicates);
                for c in 0..2u8 {
                    for _ in 0..opts.replicates {
                        values.push(t[c as usize] + unit.sample(&mut rng));
                        labels.push(c);
                    }
                }
                TwoClassObs::new(values, labels)?.into()
            }
            KernelId::LinearRegression | KernelId::LocalLevelStateSpace => unreachable!(),
        };
        out.push((k, obs));
    }
    Ok(out)
}

/// [`sample_mixture_indexed`] without the atom indices.
pub fn sample_mixture(
    kernel: KernelId,
    grid: &Grid,
    w: &MixingWeights,
    n_draws: usize,
    seed: u64,
    opts: &SampleOptions,
) -> Result<Vec<Observation>> {
    Ok(sample_mixture_indexed(kernel, grid, w, n_draws, seed, opts)?
        .into_iter()
        .map(|(_, o)| o)
        .collect())
}
