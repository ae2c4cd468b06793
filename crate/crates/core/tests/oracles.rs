//! Solvers, kernels and filters checked against independent computations.

mod common;

use approx::assert_relative_eq;
use common::{brute_force_minimum, dense_oracle, random_two_column, two_atom_objective};
use npmle::apps::simulation::{simulate_gls, MixingId, SimConfig};
use npmle::kernels::{
    ss_filter, CountPairObs, KernelId, KnownVarObs, Observation, ReplicateObs, SeriesObs,
};
use npmle::model::{
    kkt_gap, mixture_gradient, neg_log_likelihood, Grid, LogLikelihoodMatrix, MixingWeights, SolverId, Atom,
};
use npmle::posterior::{posterior_rows, sample_mixture, SampleOptions};
use npmle::solvers::{solve, SolverConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{Binomial, Continuous, Discrete, Normal, Poisson};

#[test]
fn both_solvers_match_brute_force_on_two_atoms() {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    for instance in 0..100 {
        let (p, raw) = random_two_column(&mut rng);
        let l = LogLikelihoodMatrix::from_log_densities(p, 2, raw.clone()).unwrap();
        let best = brute_force_minimum(&raw);
        for solver in [SolverId::Em, SolverId::FrankWolfe] {
            let cfg = SolverConfig::for_solver(solver).with_tol(1e-12).with_max_iter(1_000_000);
            let fit = solve(&l, solver, &cfg).unwrap();
            let absolute = fit.neg_log_lik - l.mean_shift();
            assert!(
                (absolute - best).abs() <= 1e-6,
                "instance {instance} {solver}: {absolute} vs brute force {best}"
            );
        }
    }
}

#[test]
fn objective_matches_direct_evaluation() {
    let mut rng = ChaCha8Rng::seed_from_u64(102);
    for _ in 0..50 {
        let (p, raw) = random_two_column(&mut rng);
        let l = LogLikelihoodMatrix::from_log_densities(p, 2, raw.clone()).unwrap();
        let a: f64 = rng.random_range(0.01..0.99);
        let w = MixingWeights::new(vec![a, 1.0 - a]).unwrap();
        let got = neg_log_likelihood(&l, &w).unwrap() - l.mean_shift();
        assert_relative_eq!(got, two_atom_objective(&raw, a), max_relative = 1e-12, epsilon = 1e-12);
    }
}

#[test]
fn gradient_matches_finite_differences_along_the_simplex() {
    let mut rng = ChaCha8Rng::seed_from_u64(103);
    let h = 1e-6;
    for _ in 0..30 {
        let (p, q) = (rng.random_range(1..8), rng.random_range(2..6));
        let raw: Vec<f64> = (0..p * q).map(|_| rng.random_range(-5.0..0.0)).collect();
        let l = LogLikelihoodMatrix::from_log_densities(p, q, raw).unwrap();
        let w = MixingWeights::normalized((0..q).map(|_| rng.random_range(0.2..1.0)).collect()).unwrap();
        let g = mixture_gradient(&l, &w).unwrap();
        let (a, b) = (0, q - 1);
        let shifted = |t: f64| {
            let mut v = w.as_slice().to_vec();
            v[a] += t;
            v[b] -= t;
            neg_log_likelihood(&l, &MixingWeights::new(v).unwrap()).unwrap()
        };
        let fd = (shifted(h) - shifted(-h)) / (2.0 * h);
        assert_relative_eq!(g[a] - g[b], fd, max_relative = 1e-5, epsilon = 1e-8);
    }
}

#[test]
fn kkt_gap_vanishes_at_the_brute_force_optimum() {
    let mut rng = ChaCha8Rng::seed_from_u64(104);
    for _ in 0..20 {
        let p = 4;
        let raw: Vec<f64> = (0..2 * p).map(|_| rng.random_range(-3.0..0.0)).collect();
        let l = LogLikelihoodMatrix::from_log_densities(p, 2, raw.clone()).unwrap();
        let fit = solve(&l, SolverId::Em, &SolverConfig::em().with_tol(1e-14).with_max_iter(1_000_000)).unwrap();
        let gap = kkt_gap(&l, &fit.weights).unwrap();
        assert!(gap >= -1e-12);
        assert!((fit.neg_log_lik - l.mean_shift() - brute_force_minimum(&raw)).abs() < 1e-9);
    }
}

#[test]
fn em_fixed_point_is_the_average_posterior() {
    let sim = simulate_gls(&SimConfig {
        p: 200,
        reps: 1,
        seed: 5,
        ..SimConfig::default()
    })
    .unwrap();
    let atoms: Vec<Atom> = [(0.0, 4.0), (5.0, 4.0), (2.5, 3.0), (0.0, 6.0)]
        .iter()
        .map(|&(m, s)| Atom::new(vec![m, s]).unwrap())
        .collect();
    let grid = Grid::new(atoms).unwrap();
    let l = npmle::kernels::likelihood_matrix(KernelId::GaussianLocationScale, &sim.data, &grid).unwrap();
    let fit = solve(&l, SolverId::Em, &SolverConfig::em().with_tol(1e-15).with_max_iter(1_000_000)).unwrap();
    let rows = posterior_rows(&l, &fit.weights).unwrap();
    for k in 0..grid.len() {
        let avg = rows.iter().map(|r| r.as_slice()[k]).sum::<f64>() / rows.len() as f64;
        assert!((avg - fit.weights.as_slice()[k]).abs() < 1e-8, "atom {k}");
    }
}

#[test]
fn kalman_filter_matches_dense_gaussian_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(105);
    for series in 0..50 {
        let n = rng.random_range(2..=5);
        let tau: f64 = rng.random_range(0.05..2.0);
        let sigma: f64 = rng.random_range(0.5..5.0);
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(1.0..10.0)).collect();
        let fs: Vec<f64> = (0..n).map(|_| rng.random_range(-20.0..60.0)).collect();
        let obs = SeriesObs::new(fs.clone(), x.clone()).unwrap();
        let out = ss_filter(&obs, &[tau.ln(), sigma.ln()]).unwrap();
        let (ll, filtered) = dense_oracle(&fs, &x, tau, sigma);
        assert!((out.cond_log_lik - ll).abs() < 1e-8, "series {series}: {} vs {ll}", out.cond_log_lik);
        assert!((out.filtered_means[n - 1] - filtered).abs() < 1e-8, "series {series}");
        let via_kernel = KernelId::LocalLevelStateSpace
            .log_density(&Observation::Series(obs), &[tau.ln(), sigma.ln()])
            .unwrap();
        assert!((via_kernel - ll).abs() < 1e-8);
    }
}

#[test]
fn kalman_two_point_example() {
    let (ll, filtered) = dense_oracle(&[1.0, 1.0], &[1.0, 1.0], 1.0, 1.0);
    let direct = Normal::new(1.0, 3f64.sqrt()).unwrap().ln_pdf(1.0);
    assert_relative_eq!(ll, direct, epsilon = 1e-12);
    assert_relative_eq!(filtered, 1.0, epsilon = 1e-12);
    let obs = SeriesObs::new(vec![1.0, 1.0], vec![1.0, 1.0]).unwrap();
    let out = ss_filter(&obs, &[0.0, 0.0]).unwrap();
    assert_relative_eq!(out.cond_log_lik, direct, epsilon = 1e-12);
    assert_eq!(out.filtered_means, vec![1.0, 1.0]);
}

#[test]
fn kernel_densities_match_reference_distributions() {
    let mut rng = ChaCha8Rng::seed_from_u64(106);
    for _ in 0..50 {
        let mu: f64 = rng.random_range(-5.0..5.0);
        let sigma: f64 = rng.random_range(0.3..4.0);
        let values: Vec<f64> = (0..rng.random_range(2..6)).map(|_| rng.random_range(-8.0..8.0)).collect();
        let normal = Normal::new(mu, sigma).unwrap();
        let expected: f64 = values.iter().map(|&v| normal.ln_pdf(v)).sum();
        let obs = Observation::Replicates(ReplicateObs::new(values));
        let got = KernelId::GaussianLocationScale.log_density(&obs, &[mu, sigma]).unwrap();
        assert_relative_eq!(got, expected, max_relative = 1e-12);

        let var: f64 = rng.random_range(0.1..3.0);
        let x: f64 = rng.random_range(-8.0..8.0);
        let obs = Observation::KnownVar(KnownVarObs::scalar(x, var));
        let got = KernelId::GaussianLocation.log_density(&obs, &[mu]).unwrap();
        assert_relative_eq!(got, Normal::new(mu, var.sqrt()).unwrap().ln_pdf(x), max_relative = 1e-12);

        let lambda: f64 = rng.random_range(1.0..200.0);
        let pi: f64 = rng.random_range(0.05..0.95);
        let a: u64 = rng.random_range(1..300);
        let h = rng.random_range(0..=a);
        let expected = Poisson::new(lambda).unwrap().ln_pmf(a) + Binomial::new(pi, a).unwrap().ln_pmf(h);
        let obs = Observation::CountPair(CountPairObs::new(a, h).unwrap());
        let got = KernelId::PoissonBinomial.log_density(&obs, &[lambda, pi]).unwrap();
        assert_relative_eq!(got, expected, max_relative = 1e-10);
    }
}

#[test]
fn poisson_binomial_example_value() {
    let direct = (4f64.powi(4) * (-4f64).exp() / 24.0 * 6.0 * 0.5f64.powi(4)).ln();
    let obs = Observation::CountPair(CountPairObs::new(4, 2).unwrap());
    let got = KernelId::PoissonBinomial.log_density(&obs, &[4.0, 0.5]).unwrap();
    assert_relative_eq!(got, direct, epsilon = 1e-12);
    assert!((got - -2.6137).abs() < 1e-4);
}

/// Composite Simpson rule on `[lo, hi]` with `n` (even) panels.
fn simpson<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, n: usize) -> f64 {
    let h = (hi - lo) / n as f64;
    let mut s = f(lo) + f(hi);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(lo + h * i as f64);
    }
    s * h / 3.0
}

#[test]
fn kernel_densities_are_normalized() {
    let loc = simpson(
        |x| {
            let obs = Observation::KnownVar(KnownVarObs::scalar(x, 2.0));
            KernelId::GaussianLocation.log_density(&obs, &[1.0]).unwrap().exp()
        },
        -20.0,
        22.0,
        2000,
    );
    assert!((loc - 1.0).abs() < 1e-9, "location {loc}");

    let ls = simpson(
        |x1| {
            simpson(
                |x2| {
                    let obs = Observation::Replicates(ReplicateObs::new(vec![x1, x2]));
                    KernelId::GaussianLocationScale.log_density(&obs, &[0.5, 1.5]).unwrap().exp()
                },
                -12.0,
                13.0,
                400,
            )
        },
        -12.0,
        13.0,
        400,
    );
    assert!((ls - 1.0).abs() < 1e-7, "location-scale {ls}");

    let mut pb = 0.0;
    for a in 0..200u64 {
        for h in 0..=a {
            let obs = Observation::CountPair(CountPairObs::new(a, h).unwrap());
            pb += KernelId::PoissonBinomial.log_density(&obs, &[30.0, 0.27]).unwrap().exp();
        }
    }
    assert!((pb - 1.0).abs() < 1e-10, "poisson-binomial {pb}");

    let ss = simpson(
        |y| {
            let obs = Observation::Series(SeriesObs::new(vec![50.0, y], vec![10.0, 12.0]).unwrap());
            KernelId::LocalLevelStateSpace
                .log_density(&obs, &[0.1f64.ln(), 3f64.ln()])
                .unwrap()
                .exp()
        },
        -40.0,
        160.0,
        4000,
    );
    assert!((ss - 1.0).abs() < 1e-9, "state space {ss}");
}

#[test]
fn dist1_mean_frequency_is_one_half() {
    let p = 100_000;
    let sim = simulate_gls(&SimConfig {
        p,
        n: 2,
        mixing: MixingId::Dist1,
        reps: 1,
        seed: 17,
    })
    .unwrap();
    let freq = sim.truth_mu.iter().filter(|&&m| m == 5.0).count() as f64 / p as f64;
    assert!((freq - 0.5).abs() <= 3.0 * (0.25 / p as f64).sqrt(), "{freq}");
    assert!(sim.truth_sigma.iter().all(|&s| s == 4.0));
}

#[test]
fn poisson_binomial_draws_have_the_atom_rate() {
    let grid = Grid::new(vec![Atom::new(vec![20.0, 0.3]).unwrap()]).unwrap();
    let w = MixingWeights::new(vec![1.0]).unwrap();
    let draws = sample_mixture(KernelId::PoissonBinomial, &grid, &w, 100_000, 8, &SampleOptions::default()).unwrap();
    let rates: Vec<f64> = draws
        .iter()
        .filter_map(|o| match o {
            Observation::CountPair(c) if c.at_bats > 0 => Some(c.hits as f64 / c.at_bats as f64),
            _ => None,
        })
        .collect();
    let n = rates.len() as f64;
    let mean = rates.iter().sum::<f64>() / n;
    let sd = (rates.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    assert!((mean - 0.3).abs() <= 3.0 * sd / n.sqrt(), "mean {mean}, se {}", sd / n.sqrt());
}
