//! Existence of a stationary solution: the top Lyapunov exponent of the
//! companion-matrix products, and the GARCH(1, 1) criterion
//! `E log(beta_1 + alpha_1 eps^2) < 0`.

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{GarchError, Result};
use crate::innovations::InnovationDist;
use crate::model::GarchParams;
use crate::rng;

const BATCHES: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Stationary,
    Nonstationary,
    Inconclusive,
}

impl Verdict {
    /// Two-standard-error band around zero.
    pub fn from_estimate(gamma: f64, std_error: f64) -> Self {
        if gamma + 2.0 * std_error < 0.0 {
            Verdict::Stationary
        } else if gamma - 2.0 * std_error > 0.0 {
            Verdict::Nonstationary
        } else {
            Verdict::Inconclusive
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LyapunovEstimate {
    pub gamma: f64,
    pub std_error: f64,
    pub n_products: usize,
    pub verdict: Verdict,
}

impl LyapunovEstimate {
    fn new(gamma: f64, std_error: f64, n_products: usize) -> Self {
        LyapunovEstimate { gamma, std_error, n_products, verdict: Verdict::from_estimate(gamma, std_error) }
    }
}

/// Coefficients padded so that `p' = max(p, 2)` and `q' = max(q, 2)`.
fn padded(params: &GarchParams) -> (Vec<f64>, Vec<f64>) {
    let mut alpha = params.alpha().to_vec();
    let mut beta = params.beta().to_vec();
    alpha.resize(alpha.len().max(2), 0.0);
    beta.resize(beta.len().max(2), 0.0);
    (alpha, beta)
}

/// The `(p' + q' - 1)`-square matrix
///
/// ```text
/// [ tau_n   beta_q  alpha_(2..p-1)  alpha_p ]
/// [ I_(q-1)   0         0             0    ]
/// [ xi_n      0         0             0    ]
/// [   0       0      I_(p-2)          0    ]
/// ```
///
/// with `tau_n = (beta_1 + alpha_1 eps^2, beta_2, ..., beta_(q-1))` and
/// `xi_n = (eps^2, 0, ..., 0)`.
pub fn companion_matrix(params: &GarchParams, eps_sq: f64) -> DMatrix<f64> {
    let (alpha, beta) = padded(params);
    let (p, q) = (alpha.len(), beta.len());
    let side = p + q - 1;
    let mut m = DMatrix::zeros(side, side);
    m[(0, 0)] = beta[0] + alpha[0] * eps_sq;
    for j in 1..q {
        m[(0, j)] = beta[j];
    }
    for i in 1..p {
        m[(0, q - 1 + i)] = alpha[i];
    }
    for i in 1..q {
        m[(i, i - 1)] = 1.0;
    }
    m[(q, 0)] = eps_sq;
    for i in 1..p - 1 {
        m[(q + i, q + i - 1)] = 1.0;
    }
    m
}

/// `out = A(eps_sq) v` using the sparsity of the companion matrix.
fn apply_companion(alpha: &[f64], beta: &[f64], eps_sq: f64, v: &[f64], out: &mut [f64]) {
    let q = beta.len();
    let mut first = (beta[0] + alpha[0] * eps_sq) * v[0];
    for j in 1..q {
        first += beta[j] * v[j];
    }
    for i in 1..alpha.len() {
        first += alpha[i] * v[q - 1 + i];
    }
    out[0] = first;
    for i in 1..v.len() {
        out[i] = if i == q { eps_sq * v[0] } else { v[i - 1] };
    }
}

/// Spectral radius of the companion matrix of `beta`: the positive root of
/// `sum_j beta_j r^(-j) = 1` (Perron root for nonnegative coefficients).
fn beta_spectral_radius(beta: &[f64]) -> f64 {
    let active: Vec<(usize, f64)> =
        beta.iter().enumerate().filter(|(_, b)| **b > 0.0).map(|(j, b)| (j + 1, *b)).collect();
    match active.as_slice() {
        [] => 0.0,
        [(1, b)] => *b,
        _ => {
            let f = |r: f64| active.iter().map(|(j, b)| b * r.powi(-(*j as i32))).sum::<f64>() - 1.0;
            let mut hi = 1.0f64;
            while f(hi) > 0.0 {
                hi *= 2.0;
            }
            let mut lo = 0.5 * hi;
            while f(lo) < 0.0 {
                lo *= 0.5;
            }
            loop {
                let mid = 0.5 * (lo + hi);
                if mid <= lo || mid >= hi {
                    break;
                }
                if f(mid) > 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            0.5 * (lo + hi)
        }
    }
}

/// Top Lyapunov exponent by power iteration with per-step renormalization.
///
/// The standard error comes from 30 batch means of the log growth factors.
/// When every `alpha_i` is zero the product is deterministic in its leading
/// block and the exponent is `log` of the spectral radius of the `beta`
/// companion matrix, returned exactly with zero standard error.
pub fn lyapunov_exponent(
    params: &GarchParams,
    dist: &InnovationDist,
    n_products: usize,
    seed: u64,
) -> Result<LyapunovEstimate> {
    if n_products < 1000 {
        return Err(GarchError::InvalidParameter(format!("n_products must be at least 1000, got {n_products}")));
    }
    let (alpha, beta) = padded(params);
    if alpha.iter().all(|a| *a == 0.0) {
        let rho = beta_spectral_radius(&beta);
        return Ok(LyapunovEstimate::new(rho.ln(), 0.0, n_products));
    }

    let side = alpha.len() + beta.len() - 1;
    let mut rng = rng::stream(seed, 0);
    let start: Vec<f64> = (0..side).map(|_| StandardNormal.sample(&mut rng)).collect();
    let mut v = DVector::from_vec(start).normalize();
    let mut next = DVector::zeros(side);

    let mut batch_sums = vec![0.0; BATCHES];
    for k in 0..n_products {
        let eps = dist.draw(&mut rng);
        apply_companion(&alpha, &beta, eps * eps, v.as_slice(), next.as_mut_slice());
        let growth = next.norm();
        if growth == 0.0 {
            return Ok(LyapunovEstimate::new(f64::NEG_INFINITY, 0.0, n_products));
        }
        if !growth.is_finite() {
            return Ok(LyapunovEstimate::new(f64::INFINITY, 0.0, n_products));
        }
        batch_sums[k * BATCHES / n_products] += growth.ln();
        v.copy_from(&next);
        v /= growth;
    }
    let batch_means: Vec<f64> = batch_sums
        .iter()
        .enumerate()
        .map(|(b, s)| {
            let len = (b + 1) * n_products / BATCHES - b * n_products / BATCHES;
            s / len as f64
        })
        .collect();
    let gamma = batch_sums.iter().sum::<f64>() / n_products as f64;
    let mean_b = batch_means.iter().sum::<f64>() / BATCHES as f64;
    let var_b = batch_means.iter().map(|m| (m - mean_b).powi(2)).sum::<f64>() / (BATCHES - 1) as f64;
    Ok(LyapunovEstimate::new(gamma, (var_b / BATCHES as f64).sqrt(), n_products))
}

/// Monte Carlo mean of `log(beta_1 + alpha_1 eps^2)` for GARCH(1, 1).
pub fn garch11_criterion(
    params: &GarchParams,
    dist: &InnovationDist,
    n_draws: usize,
    seed: u64,
) -> Result<LyapunovEstimate> {
    let order = params.order();
    if order.p() != 1 || order.q() != 1 {
        return Err(GarchError::InvalidParameter(format!(
            "closed-form criterion needs p = q = 1, got p = {}, q = {}",
            order.p(),
            order.q()
        )));
    }
    if n_draws < 10_000 {
        return Err(GarchError::InvalidParameter(format!("n_draws must be at least 10^4, got {n_draws}")));
    }
    let (a, b) = (params.alpha()[0], params.beta()[0]);
    if a == 0.0 {
        return Ok(LyapunovEstimate::new(b.ln(), 0.0, n_draws));
    }
    let mut rng = rng::stream(seed, 0);
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for _ in 0..n_draws {
        let e = dist.draw(&mut rng);
        let l = (b + a * e * e).ln();
        if l == f64::NEG_INFINITY {
            return Ok(LyapunovEstimate::new(f64::NEG_INFINITY, 0.0, n_draws));
        }
        sum += l;
        sum_sq += l * l;
    }
    let n = n_draws as f64;
    let mean = sum / n;
    let var = ((sum_sq - n * mean * mean) / (n - 1.0)).max(0.0);
    Ok(LyapunovEstimate::new(mean, (var / n).sqrt(), n_draws))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn companion_p2_q2() {
        let params = GarchParams::new(0.1, &[0.1, 0.05], &[0.2, 0.1]).unwrap();
        let m = companion_matrix(&params, 1.0);
        let want = DMatrix::from_row_slice(3, 3, &[0.3, 0.1, 0.05, 1.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
        assert!((m - want).abs().max() < 1e-15);
        let m0 = companion_matrix(&params, 0.0);
        assert_eq!(m0[(0, 0)], 0.2);
    }

    #[test]
    fn companion_padding_garch11() {
        let params = GarchParams::new(0.1, &[0.3], &[0.6]).unwrap();
        let m = companion_matrix(&params, 2.0);
        let want = DMatrix::from_row_slice(3, 3, &[1.2, 0.0, 0.0, 1.0, 0.0, 0.0, 2.0, 0.0, 0.0]);
        assert_eq!(m, want);
    }

    #[test]
    fn companion_larger_blocks() {
        // p = 3, q = 3: side 5, identity blocks at (1,0),(2,1) and (4,3)
        let params = GarchParams::new(0.1, &[0.1, 0.02, 0.03], &[0.3, 0.2, 0.1]).unwrap();
        let m = companion_matrix(&params, 0.5);
        assert_eq!(m.nrows(), 5);
        let row0: Vec<f64> = m.row(0).iter().copied().collect();
        assert_eq!(row0, vec![0.3 + 0.05, 0.2, 0.1, 0.02, 0.03]);
        assert_eq!(m[(1, 0)], 1.0);
        assert_eq!(m[(2, 1)], 1.0);
        assert_eq!(m[(3, 0)], 0.5);
        assert_eq!(m[(4, 3)], 1.0);
        assert_eq!(m.iter().filter(|v| **v != 0.0).count(), 5 + 4);
    }

    #[test]
    fn sparse_product_matches_dense() {
        let mut rng = rng::stream(1, 0);
        for (p, q) in [(1, 1), (2, 1), (1, 3), (3, 2), (4, 4)] {
            let alpha: Vec<f64> = (0..p).map(|_| rng.random_range(0.0..0.3)).collect();
            let beta: Vec<f64> = (0..q).map(|_| rng.random_range(0.0..0.3)).collect();
            let params = GarchParams::new(0.1, &alpha, &beta).unwrap();
            let e2: f64 = rng.random_range(0.0..3.0);
            let dense = companion_matrix(&params, e2);
            let v = DVector::from_fn(dense.nrows(), |_, _| rng.random_range(-1.0..1.0));
            let mut out = vec![0.0; v.len()];
            let (pa, pb) = padded(&params);
            apply_companion(&pa, &pb, e2, v.as_slice(), &mut out);
            let want = &dense * &v;
            for (a, b) in out.iter().zip(want.iter()) {
                assert!((a - b).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn stable_parameters_give_contracting_mean_matrix() {
        let mut rng = rng::stream(2, 0);
        for _ in 0..50 {
            let p = rng.random_range(1..4);
            let q = rng.random_range(1..4);
            let mut raw: Vec<f64> = (0..p + q).map(|_| rng.random_range(0.0..1.0)).collect();
            let total: f64 = raw.iter().sum();
            let target = rng.random_range(0.1..0.98);
            raw.iter_mut().for_each(|v| *v *= target / total);
            let params = GarchParams::new(0.1, &raw[..p], &raw[p..]).unwrap();
            let m = companion_matrix(&params, 1.0);
            let radius = m.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max);
            assert!(radius < 1.0, "radius {radius} for {params:?}");
        }
    }

    #[test]
    fn deterministic_exponents() {
        let n = InnovationDist::standard_normal();
        let params = GarchParams::new(0.1, &[0.0], &[1.05]).unwrap();
        let est = lyapunov_exponent(&params, &n, 1000, 0).unwrap();
        assert!((est.gamma - 1.05f64.ln()).abs() < 1e-12);
        assert_eq!(est.verdict, Verdict::Nonstationary);

        let params = GarchParams::new(0.1, &[0.0], &[0.9]).unwrap();
        let est = garch11_criterion(&params, &n, 10_000, 0).unwrap();
        assert_eq!(est.gamma, 0.9f64.ln());
        assert_eq!(est.verdict, Verdict::Stationary);

        // beta = (0.5, 0.3): root of r^2 - 0.5 r - 0.3
        let params = GarchParams::new(0.1, &[0.0, 0.0], &[0.5, 0.3]).unwrap();
        let est = lyapunov_exponent(&params, &n, 1000, 0).unwrap();
        let root = (0.5 + (0.25f64 + 1.2).sqrt()) / 2.0;
        assert!((est.gamma - root.ln()).abs() < 1e-12);
    }

    #[test]
    fn garch11_stationary_example_against_independent_average() {
        let n = InnovationDist::standard_normal();
        let params = GarchParams::new(0.1, &[0.1], &[0.8]).unwrap();
        let est = lyapunov_exponent(&params, &n, 1_000_000, 4).unwrap();
        assert_eq!(est.verdict, Verdict::Stationary);
        // independent oracle: plain average of log(0.8 + 0.1 Z^2) over 10^6 draws
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(99);
        let oracle: f64 = (0..1_000_000)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                (0.8 + 0.1 * z * z).ln()
            })
            .sum::<f64>()
            / 1e6;
        assert!(oracle < 0.0);
        assert!((est.gamma - oracle).abs() < 5.0 * est.std_error.max(1e-4), "{} vs {oracle}", est.gamma);
        let crit = garch11_criterion(&params, &n, 1_000_000, 4).unwrap();
        assert_eq!(crit.verdict, est.verdict);
    }

    #[test]
    fn integrated_garch_is_strictly_stationary() {
        let n = InnovationDist::standard_normal();
        let params = GarchParams::new(0.1, &[0.15], &[0.85]).unwrap();
        let est = garch11_criterion(&params, &n, 1_000_000, 8).unwrap();
        assert!(est.gamma < 0.0);
        assert_eq!(est.verdict, Verdict::Stationary);
    }

    /// `E log Z^2` for a standard normal by quadrature, split at 1 for the
    /// log singularity at the origin.
    fn expected_log_normal_square() -> f64 {
        let f = |z: f64| 2.0 * (z * z).ln() * (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
        let a = quadrature::double_exponential::integrate(f, 0.0, 1.0, 1e-14).integral;
        let b = quadrature::double_exponential::integrate(f, 1.0, 40.0, 1e-14).integral;
        a + b
    }

    #[test]
    fn pure_arch_criterion_against_quadrature() {
        let elog = expected_log_normal_square();
        assert!((elog + 0.577_215_664_901_532_9 + 2f64.ln()).abs() < 1e-10);
        let n = InnovationDist::standard_normal();
        // log 3 + E log Z^2 = -0.1718: strictly stationary although E(3 Z^2) = 3
        let params = GarchParams::new(0.1, &[3.0], &[0.0]).unwrap();
        let est = garch11_criterion(&params, &n, 1_000_000, 2).unwrap();
        assert!((est.gamma - (3f64.ln() + elog)).abs() < 4.0 * est.std_error);
        assert_eq!(est.verdict, Verdict::Stationary);
        let lyap = lyapunov_exponent(&params, &n, 1_000_000, 2).unwrap();
        assert_eq!(lyap.verdict, Verdict::Stationary);

        let params = GarchParams::new(0.1, &[4.0], &[0.0]).unwrap();
        let est = garch11_criterion(&params, &n, 1_000_000, 3).unwrap();
        assert!((est.gamma - (4f64.ln() + elog)).abs() < 4.0 * est.std_error);
        assert_eq!(est.verdict, Verdict::Nonstationary);
    }

    #[test]
    fn argument_guards() {
        let n = InnovationDist::standard_normal();
        let p22 = GarchParams::new(0.1, &[0.1, 0.1], &[0.3, 0.2]).unwrap();
        assert!(garch11_criterion(&p22, &n, 100_000, 0).is_err());
        let p11 = GarchParams::new(0.1, &[0.1], &[0.8]).unwrap();
        assert!(garch11_criterion(&p11, &n, 10, 0).is_err());
        assert!(lyapunov_exponent(&p11, &n, 999, 0).is_err());
    }

    #[test]
    fn seed_reproducible() {
        let n = InnovationDist::laplace();
        let params = GarchParams::new(0.1, &[0.2, 0.05], &[0.5]).unwrap();
        let a = lyapunov_exponent(&params, &n, 20_000, 77).unwrap();
        let b = lyapunov_exponent(&params, &n, 20_000, 77).unwrap();
        assert_eq!(a.gamma.to_bits(), b.gamma.to_bits());
    }

    #[test]
    fn verdict_band() {
        assert_eq!(Verdict::from_estimate(-0.1, 0.01), Verdict::Stationary);
        assert_eq!(Verdict::from_estimate(0.1, 0.01), Verdict::Nonstationary);
        assert_eq!(Verdict::from_estimate(0.01, 0.01), Verdict::Inconclusive);
    }

    use rand::SeedableRng;
}
