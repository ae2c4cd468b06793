//! Fit the bivariate (mu, sigma) mixing distribution to simulated replicates
//! and compare posterior-mean estimates of mu with the sample means.

use npmle::apps::metrics::tse;
use npmle::apps::simulation::{simulate_gls, MixingId, SimConfig};
use npmle::grid::GridSpec;
use npmle::kernels::KernelId;
use npmle::pipeline::FitOptions;

fn main() -> npmle::Result<()> {
    let sim = simulate_gls(&SimConfig {
        mixing: MixingId::Dist2,
        reps: 1,
        seed: 7,
        ..SimConfig::default()
    })?;
    let fitted = FitOptions::new(GridSpec::new(vec![30, 30])).fit(KernelId::GaussianLocationScale, &sim.data)?;
    let r = &fitted.fit;
    println!(
        "EM: {} iterations in {:.3}s, kkt gap {:.2e}, {} support atoms",
        r.iterations,
        fitted.solve_seconds,
        r.kkt_gap,
        r.weights.support().len()
    );

    let mut heavy: Vec<_> = r.weights.support().into_iter().map(|k| (r.weights.as_slice()[k], k)).collect();
    heavy.sort_by(|a, b| b.0.total_cmp(&a.0));
    println!("largest atoms (mu, sigma, weight):");
    for (w, k) in heavy.into_iter().take(6) {
        let a = &fitted.grid.atoms()[k];
        println!("  {:7.3} {:7.3}  {:.4}", a[0], a[1], w);
    }

    let post = fitted.posterior_means(|a| a[0])?;
    println!("TSE sample means  {:8.1}", tse(&sim.sample_means(), &sim.truth_mu)?);
    println!("TSE NPMLE         {:8.1}", tse(&post, &sim.truth_mu)?);
    Ok(())
}
