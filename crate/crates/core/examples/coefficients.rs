//! Prints the ARCH(infinity) coefficients of a GARCH(2, 2) point and their geometric decay.

use garch_qle::coeffs::coeff_sequence;
use garch_qle::model::EstimationPoint;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let u = EstimationPoint::from_parts(0.2, &[0.1, 0.05], &[0.5, 0.3])?;
    let table = coeff_sequence(&u, u.order(), 30)?;
    println!("c_0 = {:.6}", table.c[0]);
    for (i, c) in table.c.iter().enumerate().skip(1).step_by(3) {
        println!("c_{i:<2} = {c:.3e}");
    }
    Ok(())
}
