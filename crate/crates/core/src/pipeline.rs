//! Data to fitted mixing distribution in one call.

use std::time::Instant;

use crate::error::Result;
use crate::grid::{build_grid, mle_cloud, GridSpec, MleCloud};
use crate::kernels::{likelihood_matrix, KernelId, Observation};
use crate::model::{Atom, FitResult, Grid, LogLikelihoodMatrix, SolverId};
use crate::posterior::{posterior_mean, posterior_rows};
use crate::solvers::{solve, SolverConfig};

/// Grid, solver and solver settings for one fit.
#[derive(Debug, Clone, PartialEq)]
pub struct FitOptions {
    pub grid: GridSpec,
    pub solver: SolverId,
    pub config: SolverConfig,
}

impl FitOptions {
    /// EM with default settings on `grid`.
    pub fn new(grid: GridSpec) -> Self {
        FitOptions {
            grid,
            solver: SolverId::Em,
            config: SolverConfig::em(),
        }
    }

    /// Switches solver and resets the iteration cap to that solver's default.
    pub fn with_solver(mut self, solver: SolverId) -> Self {
        self.solver = solver;
        self.config = SolverConfig::for_solver(solver).with_tol(self.config.tol);
        self
    }

    pub fn fit(&self, kernel: KernelId, data: &[Observation]) -> Result<NpmleFit> {
        fit_npmle(kernel, data, &self.grid, self.solver, &self.config)
    }
}

/// A fitted mixing distribution together with what produced it.
#[derive(Debug, Clone)]
pub struct NpmleFit {
    pub kernel: KernelId,
    pub cloud: MleCloud,
    pub grid: Grid,
    pub matrix: LogLikelihoodMatrix,
    pub fit: FitResult,
    /// Wall-clock seconds spent inside the solver.
    pub solve_seconds: f64,
}

impl NpmleFit {
    /// Posterior mean of `coord` for every observation.
    pub fn posterior_means<F>(&self, coord: F) -> Result<Vec<f64>>
    where
        F: Fn(&Atom) -> f64 + Copy,
    {
        posterior_rows(&self.matrix, &self.fit.weights)?
            .iter()
            .map(|row| posterior_mean(row, &self.grid, coord))
            .collect()
    }

    /// Refit on the same matrix with another solver or configuration.
    pub fn resolve(&self, solver: SolverId, cfg: &SolverConfig) -> Result<(FitResult, f64)> {
        timed_solve(&self.matrix, solver, cfg)
    }
}

pub fn timed_solve(l: &LogLikelihoodMatrix, solver: SolverId, cfg: &SolverConfig) -> Result<(FitResult, f64)> {
    let start = Instant::now();
    let fit = solve(l, solver, cfg)?;
    Ok((fit, start.elapsed().as_secs_f64()))
}

/// MLE cloud, grid, likelihood matrix and solver, in that order.
pub fn fit_npmle(
    kernel: KernelId,
    data: &[Observation],
    spec: &GridSpec,
    solver: SolverId,
    cfg: &SolverConfig,
) -> Result<NpmleFit> {
    let cloud = mle_cloud(kernel, data)?;
    let grid = build_grid(kernel, &cloud.atoms, spec)?;
    fit_on_grid(kernel, data, cloud, grid, solver, cfg)
}

/// As [`fit_npmle`] but on a caller-supplied grid.
pub fn fit_on_grid(
    kernel: KernelId,
    data: &[Observation],
    cloud: MleCloud,
    grid: Grid,
    solver: SolverId,
    cfg: &SolverConfig,
) -> Result<NpmleFit> {
    let matrix = likelihood_matrix(kernel, data, &grid)?;
    let (fit, solve_seconds) = timed_solve(&matrix, solver, cfg)?;
    Ok(NpmleFit {
        kernel,
        cloud,
        grid,
        matrix,
        fit,
        solve_seconds,
    })
}
