//! Estimates the top Lyapunov exponent for a few parameter settings.
//! A GARCH(1, 1) with `alpha + beta > 1` can still be strictly stationary.

use garch_qle::innovations::InnovationDist;
use garch_qle::model::GarchParams;
use garch_qle::stationarity::{garch11_criterion, lyapunov_exponent};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dist = InnovationDist::standard_normal();
    let cases = [
        GarchParams::new(0.1, &[0.1], &[0.8])?,
        GarchParams::new(0.1, &[0.3], &[0.75])?,
        GarchParams::new(0.1, &[1.0], &[0.6])?,
        GarchParams::new(0.1, &[0.05, 0.05], &[0.5, 0.3])?,
    ];
    for params in &cases {
        let est = lyapunov_exponent(params, &dist, 200_000, 1)?;
        print!("alpha {:?} beta {:?}: gamma = {:+.4} (se {:.4}) {:?}", params.alpha(), params.beta(), est.gamma, est.std_error, est.verdict);
        if params.order().p() == 1 && params.order().q() == 1 {
            let c = garch11_criterion(params, &dist, 200_000, 2)?;
            print!(", E log(beta + alpha eps^2) = {:+.4}", c.gamma);
        }
        println!();
    }
    Ok(())
}
