//! EM against Frank-Wolfe on the same likelihood matrix.

use npmle::apps::simulation::{simulate_gls, SimConfig};
use npmle::grid::GridSpec;
use npmle::kernels::KernelId;
use npmle::model::SolverId;
use npmle::pipeline::FitOptions;
use npmle::solvers::{delta_log_lik, SolverConfig};

fn main() -> npmle::Result<()> {
    let sim = simulate_gls(&SimConfig {
        reps: 1,
        seed: 11,
        ..SimConfig::default()
    })?;
    let em = FitOptions::new(GridSpec::new(vec![30, 30])).fit(KernelId::GaussianLocationScale, &sim.data)?;
    let (fw, fw_secs) = em.resolve(SolverId::FrankWolfe, &SolverConfig::frank_wolfe())?;
    let (tight, tight_secs) = em.resolve(SolverId::Em, &SolverConfig::em().with_tol(1e-10).with_max_iter(200_000))?;

    println!("{:<14}{:>8}{:>10}{:>12}{:>14}", "solver", "iters", "seconds", "kkt gap", "dloglik/obs");
    for (name, fit, secs) in [
        ("em 1e-6", &em.fit, em.solve_seconds),
        ("fw 1e-6", &fw, fw_secs),
        ("em 1e-10", &tight, tight_secs),
    ] {
        println!(
            "{:<14}{:>8}{:>10.3}{:>12.2e}{:>14.3e}",
            name,
            fit.iterations,
            secs,
            fit.kkt_gap,
            delta_log_lik(fit, &em.fit)?
        );
    }
    Ok(())
}
