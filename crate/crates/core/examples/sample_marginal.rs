//! Marginal distribution of pi from a batting fit, and fresh draws of
//! (at-bats, average) from the fitted mixture.

use npmle::apps::baseball::{synthetic_two_atom, TwoAtomDesign};
use npmle::grid::GridSpec;
use npmle::kernels::{CountPairObs, KernelId, Observation};
use npmle::pipeline::FitOptions;
use npmle::posterior::{marginalize, sample_mixture, SampleOptions};

fn main() -> npmle::Result<()> {
    let records = synthetic_two_atom(&TwoAtomDesign::default(), 1)?;
    let data: Vec<Observation> = records
        .iter()
        .filter(|r| r.ab1 > 10)
        .map(|r| CountPairObs::new(r.ab1, r.h1).map(Into::into))
        .collect::<npmle::Result<_>>()?;
    let fitted = FitOptions::new(GridSpec::new(vec![30, 30])).fit(KernelId::PoissonBinomial, &data)?;

    println!("marginal of pi (mass > 0.01):");
    for (pi, mass) in marginalize(&fitted.grid, &fitted.fit.weights, 1)? {
        if mass > 0.01 {
            println!("  {pi:.3}  {mass:.3}");
        }
    }

    let draws = sample_mixture(
        KernelId::PoissonBinomial,
        &fitted.grid,
        &fitted.fit.weights,
        20_000,
        42,
        &SampleOptions::default(),
    )?;
    let averages: Vec<f64> = draws
        .iter()
        .filter_map(|o| match o {
            Observation::CountPair(c) if c.at_bats > 0 => Some(c.hits as f64 / c.at_bats as f64),
            _ => None,
        })
        .collect();
    let mean = averages.iter().sum::<f64>() / averages.len() as f64;
    println!("{} draws with at-bats, mean H/A {:.4}", averages.len(), mean);
    Ok(())
}
