//! Fits a GARCH(1, 1) by Gaussian and Laplace quasi-likelihood and prints
//! estimates with standard errors.

use garch_qle::inference::full_inference;
use garch_qle::innovations::InnovationDist;
use garch_qle::likelihood::ScoreFamily;
use garch_qle::model::{GarchParams, ParamSpace};
use garch_qle::optimize::{fit, FitOptions};
use garch_qle::simulate::{simulate, SimConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let truth = GarchParams::new(0.1, &[0.1], &[0.8])?;
    let y = simulate(&SimConfig::new(truth.clone(), InnovationDist::standard_normal(), 3000, 7))?.series;
    let space = ParamSpace::default_for(truth.order());
    println!("truth: {:?}", truth.as_slice());
    for family in [ScoreFamily::Gaussian, ScoreFamily::Laplace] {
        let res = fit(&y, &space, &family, &FitOptions::default().with_seed(1))?;
        let theta = res.theta_hat.clone();
        let inf = full_inference(&y, &theta, &family)?;
        println!("\nfamily {}", family.name());
        println!("  objective {:.6}, converged {}, iterations {}", res.objective_value, res.converged, res.n_iters);
        for (name, (est, se)) in ["omega", "alpha1", "beta1"].iter().zip(theta.as_slice().iter().zip(&inf.std_errors)) {
            println!("  {name:>7} = {est:.4} (se {se:.4})");
        }
        println!("  tau^2 = {:.4}, d_hat = {:.4}", inf.tau_sq_hat, inf.d_hat);
    }
    Ok(())
}
