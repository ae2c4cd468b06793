//! Local level filter on one simulated sensor series, with the parameter
//! MLE and one-step-ahead predictions.

use npmle::kernels::{ss_filter, ss_mle, SeriesObs};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};

fn main() -> npmle::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (tau, sigma) = (0.2_f64, 4.0_f64);
    let isig_dist = Uniform::new(10.0, 40.0).expect("valid range");
    let mut alpha = 6.0;
    let (mut fs, mut isig) = (Vec::new(), Vec::new());
    for _ in 0..80 {
        alpha += Normal::new(0.0, tau).expect("valid sd").sample(&mut rng);
        let x = isig_dist.sample(&mut rng);
        fs.push(alpha * x + Normal::new(0.0, sigma).expect("valid sd").sample(&mut rng));
        isig.push(x);
    }
    let series = SeriesObs::new(fs.clone(), isig.clone())?;
    let (log_tau, log_sigma) = ss_mle(&series)?;
    println!("true tau {tau}, sigma {sigma}; MLE tau {:.3}, sigma {:.3}", log_tau.exp(), log_sigma.exp());

    let out = ss_filter(&series, &[log_tau, log_sigma])?;
    println!("conditional log-likelihood {:.3}", out.cond_log_lik);
    println!("  t      FS   predicted");
    for t in 1..8 {
        println!("{t:3} {:7.1} {:11.1}", fs[t], out.predicted_means[t] * isig[t]);
    }
    Ok(())
}
