//! Batting averages on synthetic two-half seasons. Pass a CSV path with
//! columns `player_id,is_pitcher,ab1,h1,ab2,h2` to use real data instead.

use npmle::apps::baseball::{baseball_report, default_options, synthetic_two_atom, TwoAtomDesign};
use npmle::io::read_baseball;

fn main() -> npmle::Result<()> {
    let records = match std::env::args().nth(1) {
        Some(path) => read_baseball(path.as_ref())?,
        None => synthetic_two_atom(&TwoAtomDesign::default(), 2024)?,
    };
    let report = baseball_report(&records, &default_options())?;
    println!("TSE relative to the MLE");
    print!("{}", report.text_table());

    let all = &report.cohorts[0];
    println!("\nfirst players (pi_mle -> pi_hat):");
    for p in all.players.iter().take(5) {
        println!("  {}  {:.3} -> {:.3}", p.player_id, p.pi_mle, p.pi_hat);
    }
    Ok(())
}
