//! Grid, mixing weights and the log-likelihood matrix, together with the
//! objective, gradient and optimality gap of the fixed-grid program
//!
//! ```text
//! minimize   l(w) = -(1/p) sum_j log( sum_k f(X_j | t_k) w_k )
//! subject to w in the probability simplex.
//! ```
//!
//! The likelihood matrix is held in log space with every row shifted so its
//! maximum is exactly zero. The shifts are kept for bookkeeping only; the
//! objective reported everywhere in this crate excludes them, so two weight
//! vectors on the same matrix can always be compared directly.

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Weights at or below this value are treated as zero when enumerating the
/// support of a fitted mixing distribution.
pub const SUPPORT_THRESHOLD: f64 = 1e-12;

/// Tolerance on `|sum(w) - 1|` for a weight vector to count as a point of
/// the simplex.
pub const SIMPLEX_TOLERANCE: f64 = 1e-10;

/// Rows whose linear-space mixture density falls below this are recomputed
/// in log space.
const UNDERFLOW_GUARD: f64 = 1e-280;

/// A candidate support point of the mixing distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Atom {
    coords: Vec<f64>,
}

impl Atom {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::InvalidAtom("atom has no coordinates".into()));
        }
        if let Some(bad) = coords.iter().find(|c| !c.is_finite()) {
            return Err(Error::InvalidAtom(format!("non-finite coordinate {bad}")));
        }
        Ok(Atom { coords })
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn into_coords(self) -> Vec<f64> {
        self.coords
    }
}

impl std::ops::Index<usize> for Atom {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.coords[i]
    }
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, c) in self.coords.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, ")")
    }
}

/// The finite support set of candidate atoms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    atoms: Vec<Atom>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    per_dim_counts: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    bounds: Option<Vec<[f64; 2]>>,
}

impl Grid {
    /// An unstructured grid from an explicit atom list.
    pub fn new(atoms: Vec<Atom>) -> Result<Self> {
        let grid = Grid {
            atoms,
            per_dim_counts: None,
            bounds: None,
        };
        grid.validate()?;
        Ok(grid)
    }

    /// A grid produced from a regular lattice, possibly filtered.
    pub fn regular(atoms: Vec<Atom>, per_dim_counts: Vec<usize>, bounds: Vec<[f64; 2]>) -> Result<Self> {
        let grid = Grid {
            atoms,
            per_dim_counts: Some(per_dim_counts),
            bounds: Some(bounds),
        };
        grid.validate()?;
        Ok(grid)
    }

    /// Checks every structural invariant; used after deserialization.
    pub fn validate(&self) -> Result<()> {
        let first = self
            .atoms
            .first()
            .ok_or_else(|| Error::InvalidGrid("grid has no atoms".into()))?;
        let dim = first.dim();
        let mut seen = HashSet::with_capacity(self.atoms.len());
        for atom in &self.atoms {
            if atom.dim() != dim {
                return Err(Error::InvalidGrid(format!(
                    "mixed atom dimensions {} and {}",
                    dim,
                    atom.dim()
                )));
            }
            if let Some(bad) = atom.coords().iter().find(|c| !c.is_finite()) {
                return Err(Error::InvalidGrid(format!("non-finite coordinate {bad}")));
            }
            let key: Vec<u64> = atom.coords().iter().map(|c| (c + 0.0).to_bits()).collect();
            if !seen.insert(key) {
                return Err(Error::InvalidGrid(format!("duplicate atom {atom}")));
            }
        }
        if let Some(counts) = &self.per_dim_counts {
            if counts.len() != dim {
                return Err(Error::InvalidGrid(format!(
                    "{} per-dimension counts for dimension {}",
                    counts.len(),
                    dim
                )));
            }
            let full: usize = counts.iter().product();
            if self.atoms.len() > full {
                return Err(Error::InvalidGrid(format!(
                    "{} atoms exceed the lattice size {}",
                    self.atoms.len(),
                    full
                )));
            }
        }
        if let Some(bounds) = &self.bounds {
            if bounds.len() != dim {
                return Err(Error::InvalidGrid("bounds do not match dimension".into()));
            }
        }
        Ok(())
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.atoms[0].dim()
    }

    pub fn per_dim_counts(&self) -> Option<&[usize]> {
        self.per_dim_counts.as_deref()
    }

    pub fn bounds(&self) -> Option<&[[f64; 2]]> {
        self.bounds.as_deref()
    }

    /// Lattice spacing per dimension for regular grids; zero for collapsed
    /// dimensions.
    pub fn spacing(&self) -> Option<Vec<f64>> {
        let counts = self.per_dim_counts.as_ref()?;
        let bounds = self.bounds.as_ref()?;
        Some(
            counts
                .iter()
                .zip(bounds)
                .map(|(&q, b)| if q > 1 { (b[1] - b[0]) / (q - 1) as f64 } else { 0.0 })
                .collect(),
        )
    }
}

/// A point of the probability simplex: one weight per grid atom.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct MixingWeights(Vec<f64>);

impl MixingWeights {
    pub fn new(w: Vec<f64>) -> Result<Self> {
        if w.is_empty() {
            return Err(Error::InvalidWeights("empty weight vector".into()));
        }
        if let Some((k, v)) = w.iter().enumerate().find(|(_, v)| !(**v >= 0.0) || !v.is_finite()) {
            return Err(Error::InvalidWeights(format!("w[{k}] = {v} is not a nonnegative number")));
        }
        let total: f64 = w.iter().sum();
        if (total - 1.0).abs() > SIMPLEX_TOLERANCE {
            return Err(Error::InvalidWeights(format!("weights sum to {total}")));
        }
        Ok(MixingWeights(w))
    }

    pub fn uniform(q: usize) -> Self {
        assert!(q > 0, "uniform weights need at least one atom");
        MixingWeights(vec![1.0 / q as f64; q])
    }

    pub fn point_mass(q: usize, k: usize) -> Self {
        let mut w = vec![0.0; q];
        w[k] = 1.0;
        MixingWeights(w)
    }

    /// Rescales a nonnegative vector with positive total onto the simplex.
    pub fn normalized(mut w: Vec<f64>) -> Result<Self> {
        let total: f64 = w.iter().sum();
        if !(total > 0.0) || !total.is_finite() {
            return Err(Error::InvalidWeights(format!("cannot normalize total {total}")));
        }
        for v in &mut w {
            *v /= total;
        }
        MixingWeights::new(w)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Indices of atoms carrying weight above [`SUPPORT_THRESHOLD`].
    pub fn support(&self) -> Vec<usize> {
        self.0
            .iter()
            .enumerate()
            .filter(|(_, &v)| v > SUPPORT_THRESHOLD)
            .map(|(k, _)| k)
            .collect()
    }

    /// Zeroes weights at or below [`SUPPORT_THRESHOLD`] and renormalizes.
    pub fn sparsified(&self) -> Self {
        let w: Vec<f64> = self
            .0
            .iter()
            .map(|&v| if v > SUPPORT_THRESHOLD { v } else { 0.0 })
            .collect();
        MixingWeights::normalized(w).unwrap_or_else(|_| self.clone())
    }
}

impl TryFrom<Vec<f64>> for MixingWeights {
    type Error = Error;

    fn try_from(w: Vec<f64>) -> Result<Self> {
        MixingWeights::new(w)
    }
}

impl From<MixingWeights> for Vec<f64> {
    fn from(w: MixingWeights) -> Self {
        w.0
    }
}

/// Dense p x q matrix of `log f(X_j | t_k)`, row-shifted so each row peaks at 0.
#[derive(Debug, Clone)]
pub struct LogLikelihoodMatrix {
    rows: usize,
    cols: usize,
    log_entries: Vec<f64>,
    densities: Vec<f64>,
    row_shifts: Vec<f64>,
}

impl LogLikelihoodMatrix {
    /// Builds the matrix from raw row-major log densities. `-inf` entries are
    /// allowed; NaN, `+inf` and all-`-inf` rows are rejected.
    pub fn from_log_densities(rows: usize, cols: usize, mut raw: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Incompatible {
                expected: 1,
                found: 0,
            });
        }
        if raw.len() != rows * cols {
            return Err(Error::Incompatible {
                expected: rows * cols,
                found: raw.len(),
            });
        }
        let mut row_shifts = Vec::with_capacity(rows);
        for (j, row) in raw.chunks_exact_mut(cols).enumerate() {
            if row.iter().any(|v| v.is_nan() || *v == f64::INFINITY) {
                return Err(Error::InvalidObservation(format!(
                    "row {j} has a NaN or unbounded log density"
                )));
            }
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if max == f64::NEG_INFINITY {
                return Err(Error::DegenerateRow { row: j });
            }
            for v in row.iter_mut() {
                *v -= max;
            }
            row_shifts.push(max);
        }
        Ok(Self::assemble(rows, cols, raw, row_shifts))
    }

    /// Builds the matrix from entries that are already shifted (each row's
    /// maximum exactly 0) and the shifts that were removed.
    pub fn from_shifted(rows: usize, cols: usize, entries: Vec<f64>, row_shifts: Vec<f64>) -> Result<Self> {
        if entries.len() != rows * cols || row_shifts.len() != rows || cols == 0 {
            return Err(Error::Incompatible {
                expected: rows * cols,
                found: entries.len(),
            });
        }
        for (j, row) in entries.chunks_exact(cols).enumerate() {
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if max != 0.0 || row.iter().any(|v| v.is_nan()) {
                return Err(Error::InvalidObservation(format!("row {j} is not shifted to a maximum of 0")));
            }
        }
        Ok(Self::assemble(rows, cols, entries, row_shifts))
    }

    fn assemble(rows: usize, cols: usize, log_entries: Vec<f64>, row_shifts: Vec<f64>) -> Self {
        // flush subnormals
        let densities = log_entries
            .iter()
            .map(|v| {
                let d = v.exp();
                if d < 1e-300 {
                    0.0
                } else {
                    d
                }
            })
            .collect();
        LogLikelihoodMatrix {
            rows,
            cols,
            log_entries,
            densities,
            row_shifts,
        }
    }

    /// Same stored entries, different recorded shifts.
    pub fn with_row_shifts(&self, row_shifts: Vec<f64>) -> Result<Self> {
        if row_shifts.len() != self.rows {
            return Err(Error::Incompatible {
                expected: self.rows,
                found: row_shifts.len(),
            });
        }
        Ok(LogLikelihoodMatrix {
            row_shifts,
            ..self.clone()
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, j: usize) -> &[f64] {
        &self.log_entries[j * self.cols..(j + 1) * self.cols]
    }

    pub(crate) fn density_row(&self, j: usize) -> &[f64] {
        &self.densities[j * self.cols..(j + 1) * self.cols]
    }

    pub fn entry(&self, j: usize, k: usize) -> f64 {
        self.log_entries[j * self.cols + k]
    }

    pub fn row_shifts(&self) -> &[f64] {
        &self.row_shifts
    }

    /// Mean of the removed row shifts; add to a reported objective's negative
    /// to recover the absolute average log-likelihood.
    pub fn mean_shift(&self) -> f64 {
        self.row_shifts.iter().sum::<f64>() / self.rows as f64
    }
}

/// Which algorithm produced a fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SolverId {
    #[serde(rename = "em")]
    Em,
    #[serde(rename = "fw")]
    FrankWolfe,
}

impl fmt::Display for SolverId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SolverId::Em => write!(f, "em"),
            SolverId::FrankWolfe => write!(f, "fw"),
        }
    }
}

impl std::str::FromStr for SolverId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "em" => Ok(SolverId::Em),
            "fw" => Ok(SolverId::FrankWolfe),
            _ => Err(Error::InvalidConfig(format!("unknown solver '{s}' (em|fw)"))),
        }
    }
}

/// Converged (or budget-exhausted) weights plus diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub weights: MixingWeights,
    /// Per-observation negative log-likelihood, excluding row shifts.
    pub neg_log_lik: f64,
    pub iterations: usize,
    pub kkt_gap: f64,
    pub converged: bool,
    pub solver: SolverId,
}

/// `log(sum(exp(values)))`, stabilized by the maximum entry.
pub fn log_sum_exp(values: &[f64]) -> Result<f64> {
    log_sum_exp_iter(values.iter().copied())
}

pub(crate) fn log_sum_exp_iter<I>(values: I) -> Result<f64>
where
    I: Iterator<Item = f64> + Clone,
{
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY || max.is_nan() {
        return Err(Error::DegenerateRow { row: 0 });
    }
    if max == f64::INFINITY {
        return Ok(f64::INFINITY);
    }
    let sum: f64 = values.map(|v| (v - max).exp()).sum();
    Ok(max + sum.ln())
}

fn check_cols(l: &LogLikelihoodMatrix, w: &MixingWeights) -> Result<()> {
    if l.cols() != w.len() {
        return Err(Error::Incompatible {
            expected: l.cols(),
            found: w.len(),
        });
    }
    Ok(())
}

/// `log(sum_k exp(L_jk) w_k)` for one stored row, in log space.
pub(crate) fn row_log_mixture(row: &[f64], log_w: &[f64], j: usize) -> Result<f64> {
    log_sum_exp_iter(
        row.iter()
            .zip(log_w)
            .filter(|(_, lw)| **lw > f64::NEG_INFINITY)
            .map(|(l, lw)| l + lw),
    )
    .map_err(|_| Error::DegenerateRow { row: j })
}

fn log_weights(w: &MixingWeights) -> Vec<f64> {
    w.as_slice().iter().map(|v| v.ln()).collect()
}

/// Per-observation average negative log mixture likelihood.
pub fn neg_log_likelihood(l: &LogLikelihoodMatrix, w: &MixingWeights) -> Result<f64> {
    check_cols(l, w)?;
    let log_w = log_weights(w);
    let mut total = 0.0;
    for j in 0..l.rows() {
        total += row_log_mixture(l.row(j), &log_w, j)?;
    }
    Ok(-total / l.rows() as f64)
}

/// Exact gradient of [`neg_log_likelihood`] with respect to the weights.
pub fn mixture_gradient(l: &LogLikelihoodMatrix, w: &MixingWeights) -> Result<Vec<f64>> {
    check_cols(l, w)?;
    let log_w = log_weights(w);
    let mut grad = vec![0.0; l.cols()];
    for j in 0..l.rows() {
        let row = l.row(j);
        let log_mix = row_log_mixture(row, &log_w, j)?;
        for (g, v) in grad.iter_mut().zip(row) {
            *g -= (v - log_mix).exp();
        }
    }
    let p = l.rows() as f64;
    for g in &mut grad {
        *g /= p;
    }
    Ok(grad)
}

/// First-order optimality gap: `max_k (1/p) sum_j f_jk / (f_j . w) - 1`.
///
/// Nonnegative on the simplex, zero exactly at a minimizer, and an upper
/// bound on `l(w) - min l` by convexity.
pub fn kkt_gap(l: &LogLikelihoodMatrix, w: &MixingWeights) -> Result<f64> {
    let grad = mixture_gradient(l, w)?;
    Ok(grad.iter().map(|g| -g).fold(f64::NEG_INFINITY, f64::max) - 1.0)
}

fn dot8(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 8];
    let ca = a.chunks_exact(8);
    let cb = b.chunks_exact(8);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for i in 0..8 {
            acc[i] += x[i] * y[i];
        }
    }
    let mut s = ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]));
    for (x, y) in ra.iter().zip(rb) {
        s += x * y;
    }
    s
}

/// One sweep over the matrix at weights `w`: fills `log_mix[j]` with the log
/// mixture density of row j and `ratio_sums[k]` with `sum_j f_jk / (f_j . w)`.
/// Returns the objective at `w`.
///
/// Rows are evaluated in linear space from the cached densities unless the
/// mixture density underflows, in which case the row is redone in log space.
/// Summation order is fixed, so results are reproducible bit for bit.
pub(crate) fn mixture_sweep(
    l: &LogLikelihoodMatrix,
    w: &[f64],
    log_mix: &mut [f64],
    ratio_sums: &mut [f64],
) -> Result<f64> {
    debug_assert_eq!(w.len(), l.cols());
    ratio_sums.iter_mut().for_each(|r| *r = 0.0);
    let mut log_w: Option<Vec<f64>> = None;
    let mut total = 0.0;
    for j in 0..l.rows() {
        let dens = l.density_row(j);
        let d = dot8(dens, w);
        if d > UNDERFLOW_GUARD && d.is_finite() {
            let inv = 1.0 / d;
            for (r, f) in ratio_sums.iter_mut().zip(dens) {
                *r += f * inv;
            }
            log_mix[j] = d.ln();
        } else {
            let log_w = log_w.get_or_insert_with(|| w.iter().map(|v| v.ln()).collect());
            let row = l.row(j);
            let lm = row_log_mixture(row, log_w, j)?;
            for (r, v) in ratio_sums.iter_mut().zip(row) {
                *r += (v - lm).exp();
            }
            log_mix[j] = lm;
        }
        total += log_mix[j];
    }
    Ok(-total / l.rows() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    const NEG_INF: f64 = f64::NEG_INFINITY;

    fn two_row_disjoint() -> LogLikelihoodMatrix {
        LogLikelihoodMatrix::from_log_densities(2, 2, vec![0.0, NEG_INF, NEG_INF, 0.0]).unwrap()
    }

    #[test]
    fn log_sum_exp_examples() {
        assert_relative_eq!(log_sum_exp(&[0.0, 0.0]).unwrap(), 2f64.ln(), epsilon = 1e-15);
        assert_relative_eq!(
            log_sum_exp(&[-1000.0, -1000.0]).unwrap(),
            -1000.0 + 2f64.ln(),
            epsilon = 1e-12
        );
        // oracle: direct summation
        let direct = (0.2f64 + 0.4).ln();
        assert_relative_eq!(log_sum_exp(&[0.2f64.ln(), 0.4f64.ln()]).unwrap(), direct, epsilon = 1e-15);
        assert!(matches!(log_sum_exp(&[NEG_INF, NEG_INF]), Err(Error::DegenerateRow { .. })));
        assert!(matches!(log_sum_exp(&[]), Err(Error::DegenerateRow { .. })));
    }

    #[test]
    fn neg_log_likelihood_examples() {
        let l = LogLikelihoodMatrix::from_log_densities(1, 2, vec![0.2f64.ln(), 0.4f64.ln()]).unwrap();
        let w = MixingWeights::new(vec![0.5, 0.5]).unwrap();
        let shifted = neg_log_likelihood(&l, &w).unwrap();
        let absolute = shifted - l.mean_shift();
        assert_relative_eq!(absolute, -(0.3f64.ln()), epsilon = 1e-12);
        assert_relative_eq!(absolute, 1.203973, epsilon = 1e-6);

        let w = MixingWeights::new(vec![0.5, 0.5]).unwrap();
        assert_relative_eq!(neg_log_likelihood(&two_row_disjoint(), &w).unwrap(), 2f64.ln(), epsilon = 1e-15);
    }

    #[test]
    fn single_atom_objective_is_mean_log_density() {
        let raw = vec![-1.5, -0.25, -3.0];
        let l = LogLikelihoodMatrix::from_log_densities(3, 1, raw.clone()).unwrap();
        let w = MixingWeights::new(vec![1.0]).unwrap();
        let absolute = neg_log_likelihood(&l, &w).unwrap() - l.mean_shift();
        assert_relative_eq!(absolute, -raw.iter().sum::<f64>() / 3.0, epsilon = 1e-15);
        assert_eq!(kkt_gap(&l, &w).unwrap(), 0.0);
    }

    #[test]
    fn gradient_examples() {
        let l = LogLikelihoodMatrix::from_log_densities(1, 2, vec![0.2f64.ln(), 0.4f64.ln()]).unwrap();
        let w = MixingWeights::new(vec![0.5, 0.5]).unwrap();
        let g = mixture_gradient(&l, &w).unwrap();
        // absolute-scale gradient: f_k / (f . w) with f = (0.2, 0.4)
        assert_relative_eq!(g[0], -2.0 / 3.0, epsilon = 1e-12);
        assert_relative_eq!(g[1], -4.0 / 3.0, epsilon = 1e-12);

        let g = mixture_gradient(&two_row_disjoint(), &w).unwrap();
        assert_eq!(g, vec![-1.0, -1.0]);

        let l = LogLikelihoodMatrix::from_log_densities(2, 2, vec![-1.0, -1.0, -4.0, -4.0]).unwrap();
        let w = MixingWeights::new(vec![0.3, 0.7]).unwrap();
        let g = mixture_gradient(&l, &w).unwrap();
        assert_eq!(g[0], g[1]);
    }

    #[test]
    fn kkt_gap_examples() {
        let l = two_row_disjoint();
        let w = MixingWeights::new(vec![0.5, 0.5]).unwrap();
        assert_eq!(kkt_gap(&l, &w).unwrap(), 0.0);
        let w = MixingWeights::new(vec![0.9, 0.1]).unwrap();
        assert_relative_eq!(kkt_gap(&l, &w).unwrap(), 4.0, epsilon = 1e-12);
    }

    #[test]
    fn degenerate_rows_are_rejected() {
        let err = LogLikelihoodMatrix::from_log_densities(2, 2, vec![0.0, 0.0, NEG_INF, NEG_INF]);
        assert!(matches!(err, Err(Error::DegenerateRow { row: 1 })));

        let l = two_row_disjoint();
        let w = MixingWeights::new(vec![1.0, 0.0]).unwrap();
        assert!(matches!(neg_log_likelihood(&l, &w), Err(Error::DegenerateRow { row: 1 })));
        assert!(matches!(kkt_gap(&l, &w), Err(Error::DegenerateRow { row: 1 })));

        assert!(LogLikelihoodMatrix::from_log_densities(1, 2, vec![0.0, f64::NAN]).is_err());
        assert!(LogLikelihoodMatrix::from_log_densities(1, 2, vec![0.0, f64::INFINITY]).is_err());
    }

    #[test]
    fn shifted_rows_peak_at_zero() {
        let l = LogLikelihoodMatrix::from_log_densities(2, 3, vec![-5.0, -2.0, -9.0, 3.0, NEG_INF, 1.0]).unwrap();
        assert_eq!(l.row(0), &[-3.0, 0.0, -7.0]);
        assert_eq!(l.row(1), &[0.0, NEG_INF, -2.0]);
        assert_eq!(l.row_shifts(), &[-2.0, 3.0]);
    }

    #[test]
    fn sweep_matches_exact_functions() {
        let l = LogLikelihoodMatrix::from_log_densities(
            3,
            4,
            vec![-1.0, -2.0, -800.0, -0.5, -3.0, NEG_INF, -1.0, -2.0, -0.1, -0.2, -0.3, -900.0],
        )
        .unwrap();
        let w = MixingWeights::new(vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        let mut log_mix = vec![0.0; 3];
        let mut ratios = vec![0.0; 4];
        let obj = mixture_sweep(&l, w.as_slice(), &mut log_mix, &mut ratios).unwrap();
        assert_relative_eq!(obj, neg_log_likelihood(&l, &w).unwrap(), epsilon = 1e-14);
        let grad = mixture_gradient(&l, &w).unwrap();
        for (r, g) in ratios.iter().zip(&grad) {
            assert_relative_eq!(r / 3.0, -g, epsilon = 1e-14);
        }
    }

    #[test]
    fn sweep_falls_back_to_log_space_on_underflow() {
        // the only atom with non-negligible likelihood for row 0 carries
        // almost no weight, so the linear-space density underflows
        let l = LogLikelihoodMatrix::from_log_densities(2, 2, vec![0.0, -700.0, -1.0, 0.0]).unwrap();
        let w = vec![1e-300, 1.0 - 1e-300];
        let mut log_mix = vec![0.0; 2];
        let mut ratios = vec![0.0; 2];
        let obj = mixture_sweep(&l, &w, &mut log_mix, &mut ratios).unwrap();
        let expected0 = log_sum_exp(&[(1e-300f64).ln(), -700.0]).unwrap();
        assert_relative_eq!(log_mix[0], expected0, epsilon = 1e-12);
        assert!(obj.is_finite());
        assert!(ratios.iter().all(|r| r.is_finite()));
    }

    #[test]
    fn weights_validation_and_support() {
        assert!(MixingWeights::new(vec![0.5, 0.6]).is_err());
        assert!(MixingWeights::new(vec![-0.1, 1.1]).is_err());
        assert!(MixingWeights::new(vec![]).is_err());
        let w = MixingWeights::new(vec![0.5, 1e-13, 0.5 - 1e-13]).unwrap();
        assert_eq!(w.support(), vec![0, 2]);
        let s = w.sparsified();
        assert_eq!(s.as_slice()[1], 0.0);
        assert!((s.as_slice().iter().sum::<f64>() - 1.0).abs() <= 1e-15);
    }

    #[test]
    fn grid_rejects_duplicates_and_mixed_dims() {
        let a = Atom::new(vec![0.0, 1.0]).unwrap();
        let b = Atom::new(vec![1.0]).unwrap();
        assert!(Grid::new(vec![a.clone(), a.clone()]).is_err());
        assert!(Grid::new(vec![a.clone(), b]).is_err());
        assert!(Grid::new(vec![]).is_err());
        assert!(Atom::new(vec![f64::NAN]).is_err());
        let g = Grid::regular(vec![a], vec![1, 1], vec![[0.0, 0.0], [1.0, 1.0]]).unwrap();
        assert_eq!(g.spacing().unwrap(), vec![0.0, 0.0]);
    }
}
