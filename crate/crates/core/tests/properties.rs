use npmle::grid::{parse_counts, regular_grid, BoundsMode, ConvexHull, GridSpec};
use npmle::kernels::KernelId;
use npmle::model::{
    kkt_gap, log_sum_exp, neg_log_likelihood, Atom, Grid, LogLikelihoodMatrix, MixingWeights, SolverId,
    SIMPLEX_TOLERANCE,
};
use npmle::posterior::{marginalize, posterior_mean, posterior_rows, sample_mixture, sample_mixture_indexed, SampleOptions};
use npmle::solvers::{solve, solve_em_traced, solve_frank_wolfe_traced, SolverConfig, TraceRecord};
use proptest::prelude::*;

/// A `p x q` log-density matrix in which every row has a finite entry.
fn matrix() -> impl Strategy<Value = (usize, usize, Vec<f64>)> {
    (1usize..25, 1usize..12).prop_flat_map(|(p, q)| {
        let cell = prop_oneof![9 => -40.0f64..5.0, 1 => Just(f64::NEG_INFINITY)];
        (
            Just(p),
            Just(q),
            proptest::collection::vec(cell, p * q),
            proptest::collection::vec(0..q, p),
        )
            .prop_map(|(p, q, mut v, keep)| {
                for (j, &k) in keep.iter().enumerate() {
                    if v[j * q + k] == f64::NEG_INFINITY {
                        v[j * q + k] = -1.0;
                    }
                }
                (p, q, v)
            })
    })
}

fn build((p, q, v): &(usize, usize, Vec<f64>)) -> LogLikelihoodMatrix {
    LogLikelihoodMatrix::from_log_densities(*p, *q, v.clone()).unwrap()
}

fn on_simplex(w: &MixingWeights) -> bool {
    let s: f64 = w.as_slice().iter().sum();
    w.as_slice().iter().all(|&x| x >= 0.0 && x.is_finite()) && (s - 1.0).abs() <= SIMPLEX_TOLERANCE
}

fn slack(obj: f64) -> f64 {
    1e-12 * obj.abs().max(1.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn em_objective_never_increases(m in matrix()) {
        let l = build(&m);
        let mut trace: Vec<TraceRecord> = Vec::new();
        let fit = solve_em_traced(&l, &SolverConfig::em().with_max_iter(2000), &mut |r| trace.push(*r)).unwrap();
        for pair in trace.windows(2) {
            prop_assert!(pair[1].objective <= pair[0].objective + slack(pair[0].objective),
                "iteration {}: {} -> {}", pair[1].iteration, pair[0].objective, pair[1].objective);
        }
        prop_assert!(on_simplex(&fit.weights));
    }

    #[test]
    fn frank_wolfe_objective_never_increases(m in matrix()) {
        let l = build(&m);
        let mut trace: Vec<TraceRecord> = Vec::new();
        let fit = solve_frank_wolfe_traced(&l, &SolverConfig::frank_wolfe().with_max_iter(2000), &mut |r| trace.push(*r)).unwrap();
        for pair in trace.windows(2) {
            prop_assert!(pair[1].objective <= pair[0].objective + slack(pair[0].objective));
        }
        prop_assert!(on_simplex(&fit.weights));
    }

    #[test]
    fn reported_diagnostics_match_the_weights(m in matrix(), fw in any::<bool>()) {
        let l = build(&m);
        let solver = if fw { SolverId::FrankWolfe } else { SolverId::Em };
        let fit = solve(&l, solver, &SolverConfig::for_solver(solver)).unwrap();
        prop_assert_eq!(fit.neg_log_lik, neg_log_likelihood(&l, &fit.weights).unwrap());
        prop_assert_eq!(fit.kkt_gap, kkt_gap(&l, &fit.weights).unwrap());
        prop_assert!(fit.kkt_gap >= -1e-12);
    }

    #[test]
    fn kkt_gap_bounds_suboptimality(m in matrix()) {
        let l = build(&m);
        let best = solve(&l, SolverId::Em, &SolverConfig::em().with_tol(1e-12).with_max_iter(200_000)).unwrap();
        let w = MixingWeights::uniform(l.cols());
        let excess = neg_log_likelihood(&l, &w).unwrap() - best.neg_log_lik;
        prop_assert!(excess <= kkt_gap(&l, &w).unwrap() + 1e-9);
    }

    #[test]
    fn row_shifts_do_not_change_the_fit(m in matrix(), shift in proptest::collection::vec(-50.0f64..50.0, 25)) {
        let l = build(&m);
        let (p, q, v) = &m;
        let moved: Vec<f64> = v.iter().enumerate().map(|(i, x)| x + shift[i / q]).collect();
        let l2 = LogLikelihoodMatrix::from_log_densities(*p, *q, moved).unwrap();
        let a = solve(&l, SolverId::Em, &SolverConfig::em()).unwrap();
        let b = solve(&l2, SolverId::Em, &SolverConfig::em()).unwrap();
        for (x, y) in a.weights.as_slice().iter().zip(b.weights.as_slice()) {
            prop_assert!((x - y).abs() < 1e-9);
        }
        prop_assert!((a.neg_log_lik - l.mean_shift() - (b.neg_log_lik - l2.mean_shift()) - shift[..*p].iter().sum::<f64>() / *p as f64).abs() < 1e-8);
    }

    #[test]
    fn row_order_does_not_change_the_objective(m in matrix(), seed in any::<u64>()) {
        let (p, q, v) = &m;
        let mut order: Vec<usize> = (0..*p).collect();
        let mut s = seed;
        for i in (1..*p).rev() {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            order.swap(i, (s >> 33) as usize % (i + 1));
        }
        let permuted: Vec<f64> = order.iter().flat_map(|&j| v[j * q..(j + 1) * q].to_vec()).collect();
        let a = solve(&build(&m), SolverId::Em, &SolverConfig::em()).unwrap();
        let b = solve(&LogLikelihoodMatrix::from_log_densities(*p, *q, permuted).unwrap(), SolverId::Em, &SolverConfig::em()).unwrap();
        prop_assert!((a.neg_log_lik - b.neg_log_lik).abs() <= 1e-9 * a.neg_log_lik.abs().max(1.0));
    }

    #[test]
    fn log_sum_exp_is_bracketed(v in proptest::collection::vec(-700.0f64..700.0, 1..50)) {
        let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let s = log_sum_exp(&v).unwrap();
        prop_assert!(s >= m && s <= m + (v.len() as f64).ln() + 1e-12);
    }

    #[test]
    fn posterior_rows_are_distributions_and_means_are_bounded(m in matrix()) {
        let l = build(&m);
        let q = l.cols();
        let grid = Grid::new((0..q).map(|k| Atom::new(vec![k as f64 * 1.5 - 3.0]).unwrap()).collect()).unwrap();
        let fit = solve(&l, SolverId::Em, &SolverConfig::em()).unwrap();
        for row in posterior_rows(&l, &fit.weights).unwrap() {
            let s: f64 = row.as_slice().iter().sum();
            prop_assert!((s - 1.0).abs() < 1e-12);
            prop_assert!(row.as_slice().iter().all(|&x| x >= 0.0));
            let mean = posterior_mean(&row, &grid, |a| a[0]).unwrap();
            prop_assert!((-3.0 - 1e-12..=-3.0 + 1.5 * (q - 1) as f64 + 1e-12).contains(&mean));
        }
    }

    #[test]
    fn marginals_conserve_mass(
        counts in (1usize..6, 1usize..6, 1usize..4),
        raw in proptest::collection::vec(0.0f64..1.0, 100),
    ) {
        let (a, b, c) = counts;
        let atoms: Vec<Atom> = (0..a * b * c)
            .map(|i| Atom::new(vec![(i / (b * c)) as f64, ((i / c) % b) as f64 * 0.5, (i % c) as f64]).unwrap())
            .collect();
        let grid = Grid::new(atoms).unwrap();
        let mut w: Vec<f64> = raw[..grid.len()].to_vec();
        w[0] += 1e-3;
        let w = MixingWeights::normalized(w).unwrap();
        for d in 0..3 {
            let total: f64 = marginalize(&grid, &w, d).unwrap().iter().map(|(_, m)| m).sum();
            prop_assert!((total - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn sampling_is_deterministic_and_stays_on_the_support(seed in any::<u64>(), k in 0usize..4) {
        let grid = Grid::new((0..4).map(|i| Atom::new(vec![10.0 * (i + 1) as f64, 0.25]).unwrap()).collect()).unwrap();
        let w = MixingWeights::point_mass(4, k);
        let a = sample_mixture(KernelId::PoissonBinomial, &grid, &w, 50, seed, &SampleOptions::default()).unwrap();
        let b = sample_mixture(KernelId::PoissonBinomial, &grid, &w, 50, seed, &SampleOptions::default()).unwrap();
        prop_assert_eq!(a, b);
        let indexed = sample_mixture_indexed(KernelId::PoissonBinomial, &grid, &w, 50, seed, &SampleOptions::default()).unwrap();
        prop_assert!(indexed.iter().all(|(i, _)| *i == k));
    }

    #[test]
    fn box_grid_stays_inside_the_cloud_and_hull_is_a_subset(
        pts in proptest::collection::vec((-10.0f64..10.0, -10.0f64..10.0), 3..40),
        q in 2usize..15,
    ) {
        let cloud: Vec<Atom> = pts.iter().map(|&(x, y)| Atom::new(vec![x, y]).unwrap()).collect();
        let lo = |d: usize| cloud.iter().map(|a| a[d]).fold(f64::INFINITY, f64::min);
        let hi = |d: usize| cloud.iter().map(|a| a[d]).fold(f64::NEG_INFINITY, f64::max);
        let boxed = regular_grid(&cloud, &GridSpec::new(vec![q, q])).unwrap();
        for a in boxed.atoms() {
            for d in 0..2 {
                prop_assert!(a[d] >= lo(d) && a[d] <= hi(d));
            }
        }
        if let Ok(hull_grid) = regular_grid(&cloud, &GridSpec::new(vec![q, q]).with_mode(BoundsMode::ConvexHullFilter)) {
            let hull = ConvexHull::new(&pts.iter().map(|&(x, y)| [x, y]).collect::<Vec<_>>());
            for a in hull_grid.atoms() {
                prop_assert!(boxed.atoms().contains(a));
                prop_assert!(hull.contains([a[0], a[1]]));
            }
        }
    }

    #[test]
    fn grid_counts_round_trip(counts in proptest::collection::vec(1usize..500, 1..4)) {
        let text = counts.iter().map(|c| c.to_string()).collect::<Vec<_>>().join("x");
        prop_assert_eq!(parse_counts(&text).unwrap(), counts);
    }

    // both solvers stall under the relative stopping rule before these bounds hold
    #[test]
    #[ignore = "known failure: Frank-Wolfe stops up to ~5e-5 above EM, EM gap up to ~2e-4"]
    fn em_and_frank_wolfe_agree_at_tight_tolerance(m in small_dense()) {
        let l = build(&m);
        let em = solve(&l, SolverId::Em, &SolverConfig::em().with_tol(1e-10).with_max_iter(1_000_000)).unwrap();
        let fw = solve(&l, SolverId::FrankWolfe, &SolverConfig::frank_wolfe().with_tol(1e-10).with_max_iter(1_000_000)).unwrap();
        prop_assert!((em.neg_log_lik - fw.neg_log_lik).abs() <= 1e-6, "{} vs {}", em.neg_log_lik, fw.neg_log_lik);
        prop_assert!(em.kkt_gap <= 1e-4 && fw.kkt_gap <= 1e-4, "gaps {} {}", em.kkt_gap, fw.kkt_gap);
    }

    #[test]
    fn fits_are_bit_for_bit_reproducible(m in matrix(), fw in any::<bool>()) {
        let l = build(&m);
        let solver = if fw { SolverId::FrankWolfe } else { SolverId::Em };
        let a = solve(&l, solver, &SolverConfig::for_solver(solver)).unwrap();
        let b = solve(&l, solver, &SolverConfig::for_solver(solver)).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn every_cloud_point_is_near_a_box_atom(
        pts in proptest::collection::vec((-10.0f64..10.0, -10.0f64..10.0), 2..30),
        q in 2usize..12,
    ) {
        let cloud: Vec<Atom> = pts.iter().map(|&(x, y)| Atom::new(vec![x, y]).unwrap()).collect();
        let grid = regular_grid(&cloud, &GridSpec::new(vec![q, q])).unwrap();
        let spacing = grid.spacing().unwrap();
        for c in &cloud {
            let near = grid.atoms().iter().any(|a| (0..2).all(|d| (a[d] - c[d]).abs() <= spacing[d] / 2.0 + 1e-12));
            prop_assert!(near);
        }
    }

    #[test]
    fn grid_ignores_cloud_order(
        pts in proptest::collection::vec((-10.0f64..10.0, -10.0f64..10.0), 3..30),
        q in 2usize..12,
        hull in any::<bool>(),
    ) {
        let mode = if hull { BoundsMode::ConvexHullFilter } else { BoundsMode::BoundingBox };
        let spec = GridSpec::new(vec![q, q]).with_mode(mode);
        let cloud: Vec<Atom> = pts.iter().map(|&(x, y)| Atom::new(vec![x, y]).unwrap()).collect();
        let mut reversed = cloud.clone();
        reversed.reverse();
        prop_assert_eq!(regular_grid(&cloud, &spec).ok(), regular_grid(&reversed, &spec).ok());
    }
}

/// Dense instances with p <= 50 and q <= 20.
fn small_dense() -> impl Strategy<Value = (usize, usize, Vec<f64>)> {
    (1usize..=50, 1usize..=20).prop_flat_map(|(p, q)| {
        (Just(p), Just(q), proptest::collection::vec(-10.0f64..0.0, p * q))
    })
}
