//! Simulates a GARCH(1, 1) path with unit-variance Laplace innovations and
//! prints summary statistics.

use garch_qle::innovations::{InnovationDist, ScalingConvention};
use garch_qle::model::GarchParams;
use garch_qle::simulate::{simulate, SimConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let params = GarchParams::new(0.1, &[0.1], &[0.8])?;
    let dist = InnovationDist::laplace().rescale_to(ScalingConvention::SecondMomentOne)?;
    let out = simulate(&SimConfig::new(params, dist, 5000, 42))?;
    let y = out.series.values();
    let mean_sigma_sq = out.sigma_sq.iter().sum::<f64>() / out.sigma_sq.len() as f64;
    let max_abs = y.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    println!("n = {}", y.len());
    println!("mean y^2 = {:.4}", out.series.mean_square());
    println!("mean sigma^2 = {:.4}", mean_sigma_sq);
    println!("max |y| = {:.4}", max_abs);
    println!("first values: {:?}", &y[..5]);
    Ok(())
}
