//! A short run of the location-scale simulation study. The first argument
//! sets the number of replications (default 5).

use npmle::apps::simulation::{run_sim_study, MixingId, SimConfig, StudyConfig};

fn main() -> npmle::Result<()> {
    let reps = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(5);
    for mixing in [MixingId::Dist1, MixingId::Dist2] {
        let study = StudyConfig::new(SimConfig {
            mixing,
            reps,
            seed: 1,
            ..SimConfig::default()
        });
        let report = run_sim_study(&study)?;
        println!("{mixing}, {reps} replications");
        print!("{}", report.text_table());
        println!();
    }
    Ok(())
}
