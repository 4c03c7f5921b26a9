//! Small Monte Carlo comparing Gaussian and Laplace quasi-likelihood on
//! Laplace-distributed data. Use more reps for stable ratios.

use garch_qle::innovations::{InnovationDist, ScalingConvention};
use garch_qle::likelihood::ScoreFamily;
use garch_qle::mc::{run_mc, McConfig};
use garch_qle::model::GarchParams;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let params = GarchParams::new(0.1, &[0.1], &[0.8])?;
    let dist = InnovationDist::laplace().rescale_to(ScalingConvention::SecondMomentOne)?;
    let mut config = McConfig::new(params, dist, vec![ScoreFamily::Gaussian, ScoreFamily::Laplace], 2000, 40, 3);
    config.reference_len = 100_000;
    let summary = run_mc(&config)?;
    for fam in &summary.families {
        println!("{}: tau^2 = {:.4} ({}), successes {}/{}", fam.family, fam.tau_sq, fam.tau_sq_source, fam.n_success, summary.n_reps);
        println!("  rmse {:?}", fam.rmse);
        println!("  coverage {:?}", fam.coverage);
    }
    for r in &summary.variance_ratios {
        println!("var {}/{}: empirical {:?}, theoretical {:?}", r.numerator, r.denominator, r.empirical, r.theoretical);
    }
    Ok(())
}
