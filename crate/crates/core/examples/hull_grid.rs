//! Box grid against hull-filtered grid for paired location observations.

use npmle::grid::{BoundsMode, GridSpec};
use npmle::kernels::{KernelId, KnownVarObs, Observation};
use npmle::pipeline::FitOptions;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> npmle::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    // Means along a diagonal band, so the bounding box wastes its corners.
    let data: Vec<Observation> = (0..400)
        .map(|_| {
            let t: f64 = rng.random_range(-3.0..3.0);
            let x = t + rng.random_range(-0.5..0.5);
            let y = t + rng.random_range(-0.5..0.5);
            KnownVarObs::new(vec![x, y], vec![0.25, 0.25]).into()
        })
        .collect();
    for mode in [BoundsMode::BoundingBox, BoundsMode::ConvexHullFilter] {
        let fitted = FitOptions::new(GridSpec::new(vec![40, 40]).with_mode(mode)).fit(KernelId::GaussianLocation, &data)?;
        println!(
            "{mode:>4}: {} atoms, {} iterations, {:.3}s, support {}",
            fitted.grid.len(),
            fitted.fit.iterations,
            fitted.solve_seconds,
            fitted.fit.weights.support().len()
        );
    }
    Ok(())
}
