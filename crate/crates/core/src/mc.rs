//! Replicated simulate-then-fit experiments.
//!
//! Each replication simulates one path under the configured law and fits it
//! with every score family (common random numbers). A family whose moment
//! convention differs from the configured law sees the same path described by
//! `(r^2 omega, r^2 alpha, beta)`, where `r` is the ratio of the family's
//! scale divisor to the configured one, so every arm has its own truth while
//! the `beta` block is shared.

use rayon::prelude::*;
use serde::Serialize;
use statrs::function::erf::erfc;

use crate::error::{GarchError, Result};
use crate::inference::{convention_map, full_inference, information_matrix, tau_sq_analytic, tau_sq_sample};
use crate::innovations::{InnovationDist, ScalingConvention};
use crate::likelihood::ScoreFamily;
use crate::model::{GarchParams, ParamSpace};
use crate::optimize::{fit, FitOptions};
use crate::rng;
use crate::simulate::{simulate, SimConfig, DEFAULT_BURN_IN};

pub const DEFAULT_REFERENCE_LEN: usize = 1_000_000;
const TAU_DRAWS: usize = 1_000_000;
const UNRELIABLE_SHARE: f64 = 0.2;
const Z_975: f64 = 1.959_963_984_540_054;

// stream ids outside the replication range
const REFERENCE_STREAM: u64 = u64::MAX;
const TAU_STREAM: u64 = u64::MAX - 1;

#[derive(Debug, Clone)]
pub struct McConfig {
    pub params: GarchParams,
    pub dist: InnovationDist,
    pub families: Vec<ScoreFamily>,
    pub n: usize,
    pub n_reps: usize,
    pub seed: u64,
    pub space: ParamSpace,
    pub burn_in: usize,
    /// Length of the path used for the reference information matrix.
    pub reference_len: usize,
    /// Optimizer settings; the seed is replaced per replication.
    pub fit: FitOptions,
}

impl McConfig {
    pub fn new(
        params: GarchParams,
        dist: InnovationDist,
        families: Vec<ScoreFamily>,
        n: usize,
        n_reps: usize,
        seed: u64,
    ) -> Self {
        let space = ParamSpace::default_for(params.order());
        McConfig {
            params,
            dist,
            families,
            n,
            n_reps,
            seed,
            space,
            burn_in: DEFAULT_BURN_IN,
            reference_len: DEFAULT_REFERENCE_LEN,
            fit: FitOptions::default(),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n_reps < 2 {
            return Err(GarchError::InsufficientReplications { needed: 2, got: self.n_reps });
        }
        if self.families.is_empty() {
            return Err(GarchError::InvalidParameter("at least one score family is required".into()));
        }
        if self.space.order() != self.params.order() {
            return Err(GarchError::DimensionMismatch { expected: self.params.order().dim(), got: self.space.order().dim() });
        }
        if self.reference_len < 10 * self.params.order().dim() {
            return Err(GarchError::SeriesTooShort { needed: 10 * self.params.order().dim(), got: self.reference_len });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum RepStatus {
    Ok,
    NotConverged,
    Boundary,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RepRecord {
    pub rep: usize,
    pub status: RepStatus,
    pub theta_hat: Option<Vec<f64>>,
    pub std_errors: Option<Vec<f64>>,
    pub objective: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FamilySummary {
    pub family: String,
    /// Parameters of the simulated process under this family's convention.
    pub theta_true: Vec<f64>,
    pub tau_sq: f64,
    pub tau_sq_source: &'static str,
    pub n_success: usize,
    pub failures: usize,
    pub unreliable: bool,
    pub mean: Vec<f64>,
    pub bias: Vec<f64>,
    pub rmse: Vec<f64>,
    /// Sample covariance of `sqrt(n)(theta_hat - theta)` over successful reps.
    pub empirical_cov: Vec<Vec<f64>>,
    /// `4 tau^2 A^{-1}` with `A` from the reference path.
    pub theoretical_cov: Vec<Vec<f64>>,
    /// Share of successful reps whose 95% interval covers the truth.
    pub coverage: Vec<f64>,
    pub reps: Vec<RepRecord>,
}

impl FamilySummary {
    fn successes(&self) -> impl Iterator<Item = &Vec<f64>> {
        self.reps.iter().filter(|r| r.status == RepStatus::Ok).filter_map(|r| r.theta_hat.as_ref())
    }
}

/// Per-coordinate `var_numerator / var_denominator` on reps where both arms succeeded.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VarianceRatio {
    pub numerator: String,
    pub denominator: String,
    pub paired_reps: usize,
    pub empirical: Vec<f64>,
    pub theoretical: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McSummary {
    pub p: usize,
    pub q: usize,
    pub params: Vec<f64>,
    pub dist: String,
    pub n: usize,
    pub n_reps: usize,
    pub seed: u64,
    pub families: Vec<FamilySummary>,
    pub variance_ratios: Vec<VarianceRatio>,
}

struct Arm {
    family: ScoreFamily,
    truth: GarchParams,
    tau_sq: f64,
    tau_source: &'static str,
    theory: nalgebra::DMatrix<f64>,
}

fn build_arm(config: &McConfig, fi: usize, reference: &crate::model::TimeSeries) -> Result<Arm> {
    let family = config.families[fi].clone();
    let conv = family.convention();
    let arm_dist = config.dist.rescale_to(conv)?;
    let r = match conv {
        ScalingConvention::AsIs => 1.0,
        _ => arm_dist.scale_divisor() / config.dist.scale_divisor(),
    };
    let order = config.params.order();
    let m = convention_map(order, 1.0 / r);
    let coords = config.params.as_slice().iter().zip(m.iter()).map(|(v, s)| v * s).collect();
    let truth = GarchParams::from_flat(order, coords)?;

    let (tau_sq, tau_source) = match tau_sq_analytic(&family, &arm_dist) {
        Ok(t) => (t, "analytic"),
        Err(GarchError::NoClosedForm { .. }) => {
            let mut g = rng::stream(rng::derive_seed(config.seed, &[TAU_STREAM, fi as u64]), 0);
            (tau_sq_sample(&family, &arm_dist.sample(&mut g, TAU_DRAWS))?, "empirical")
        }
        Err(e) => return Err(e),
    };
    let a = information_matrix(reference, &truth)?;
    let a_inv = a.cholesky().ok_or(GarchError::SingularInformation { ratio: 0.0 })?.inverse();
    Ok(Arm { family, truth, tau_sq, tau_source, theory: a_inv * (4.0 * tau_sq) })
}

fn run_rep(config: &McConfig, arms: &[Arm], rep: usize) -> Vec<RepRecord> {
    let sim_seed = rng::derive_seed(config.seed, &[rep as u64]);
    let sim = SimConfig::new(config.params.clone(), config.dist.clone(), config.n, sim_seed)
        .with_burn_in(config.burn_in);
    let series = match simulate(&sim) {
        Ok(out) => out.series,
        Err(e) => {
            let rec = RepRecord {
                rep,
                status: RepStatus::Failed,
                theta_hat: None,
                std_errors: None,
                objective: None,
                error: Some(e.to_string()),
            };
            return vec![rec; arms.len()];
        }
    };
    arms.iter()
        .enumerate()
        .map(|(fi, arm)| {
            let opts = config.fit.with_seed(rng::derive_seed(config.seed, &[rep as u64, fi as u64]));
            let fitted = fit(&series, &config.space, &arm.family, &opts);
            let mut rec = RepRecord { rep, status: RepStatus::Failed, theta_hat: None, std_errors: None, objective: None, error: None };
            match fitted {
                Err(e) => rec.error = Some(e.to_string()),
                Ok(res) => {
                    rec.theta_hat = Some(res.theta_hat.as_slice().to_vec());
                    rec.objective = Some(res.objective_value);
                    rec.status = if !res.converged {
                        RepStatus::NotConverged
                    } else if res.at_boundary {
                        RepStatus::Boundary
                    } else {
                        RepStatus::Ok
                    };
                    if rec.status == RepStatus::Ok {
                        match full_inference(&series, &res.theta_hat, &arm.family) {
                            Ok(inf) => rec.std_errors = Some(inf.std_errors),
                            Err(e) => {
                                rec.status = RepStatus::Failed;
                                rec.error = Some(e.to_string());
                            }
                        }
                    }
                }
            }
            rec
        })
        .collect()
}

fn summarize(config: &McConfig, arm: &Arm, reps: Vec<RepRecord>) -> FamilySummary {
    let truth = arm.truth.as_slice();
    let dim = truth.len();
    let ok: Vec<&RepRecord> = reps.iter().filter(|r| r.status == RepStatus::Ok).collect();
    let m = ok.len() as f64;
    let est: Vec<&Vec<f64>> = ok.iter().filter_map(|r| r.theta_hat.as_ref()).collect();

    let mean: Vec<f64> = (0..dim).map(|j| est.iter().map(|e| e[j]).sum::<f64>() / m).collect();
    let bias = mean.iter().zip(truth).map(|(a, b)| a - b).collect();
    let rmse = (0..dim).map(|j| (est.iter().map(|e| (e[j] - truth[j]).powi(2)).sum::<f64>() / m).sqrt()).collect();
    let empirical_cov = (0..dim)
        .map(|a| {
            (0..dim)
                .map(|b| {
                    est.iter().map(|e| (e[a] - mean[a]) * (e[b] - mean[b])).sum::<f64>() * config.n as f64
                        / (m - 1.0)
                })
                .collect()
        })
        .collect();
    let coverage = (0..dim)
        .map(|j| {
            let hits = ok
                .iter()
                .filter(|r| {
                    let (th, se) = (r.theta_hat.as_ref().unwrap(), r.std_errors.as_ref().unwrap());
                    (th[j] - truth[j]).abs() <= Z_975 * se[j]
                })
                .count();
            hits as f64 / m
        })
        .collect();
    let theoretical_cov = (0..dim).map(|a| (0..dim).map(|b| arm.theory[(a, b)]).collect()).collect();
    let failures = reps.len() - ok.len();
    FamilySummary {
        family: arm.family.name(),
        theta_true: truth.to_vec(),
        tau_sq: arm.tau_sq,
        tau_sq_source: arm.tau_source,
        n_success: ok.len(),
        failures,
        unreliable: failures as f64 > UNRELIABLE_SHARE * reps.len() as f64,
        mean,
        bias,
        rmse,
        empirical_cov,
        theoretical_cov,
        coverage,
        reps,
    }
}

fn paired_ratio(a: &FamilySummary, b: &FamilySummary) -> VarianceRatio {
    let pairs: Vec<(&Vec<f64>, &Vec<f64>)> = a
        .reps
        .iter()
        .zip(&b.reps)
        .filter(|(x, y)| x.status == RepStatus::Ok && y.status == RepStatus::Ok)
        .map(|(x, y)| (x.theta_hat.as_ref().unwrap(), y.theta_hat.as_ref().unwrap()))
        .collect();
    let dim = a.theta_true.len();
    let var = |vals: Vec<f64>| {
        let m = vals.len() as f64;
        let mu = vals.iter().sum::<f64>() / m;
        vals.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / (m - 1.0)
    };
    let empirical = (0..dim)
        .map(|j| var(pairs.iter().map(|p| p.0[j]).collect()) / var(pairs.iter().map(|p| p.1[j]).collect()))
        .collect();
    let theoretical = (0..dim).map(|j| a.theoretical_cov[j][j] / b.theoretical_cov[j][j]).collect();
    VarianceRatio {
        numerator: a.family.clone(),
        denominator: b.family.clone(),
        paired_reps: pairs.len(),
        empirical,
        theoretical,
    }
}

pub fn run_mc(config: &McConfig) -> Result<McSummary> {
    config.validate()?;
    let reference = simulate(
        &SimConfig::new(
            config.params.clone(),
            config.dist.clone(),
            config.reference_len,
            rng::derive_seed(config.seed, &[REFERENCE_STREAM]),
        )
        .with_burn_in(config.burn_in),
    )?
    .series;
    let arms: Vec<Arm> = (0..config.families.len()).map(|fi| build_arm(config, fi, &reference)).collect::<Result<_>>()?;
    drop(reference);

    let per_rep: Vec<Vec<RepRecord>> = (0..config.n_reps).into_par_iter().map(|rep| run_rep(config, &arms, rep)).collect();
    let mut by_arm: Vec<Vec<RepRecord>> = vec![Vec::with_capacity(config.n_reps); arms.len()];
    for recs in per_rep {
        for (fi, rec) in recs.into_iter().enumerate() {
            by_arm[fi].push(rec);
        }
    }
    let families: Vec<FamilySummary> =
        arms.iter().zip(by_arm).map(|(arm, reps)| summarize(config, arm, reps)).collect();
    let mut variance_ratios = Vec::new();
    for i in 0..families.len() {
        for j in i + 1..families.len() {
            variance_ratios.push(paired_ratio(&families[i], &families[j]));
        }
    }
    let order = config.params.order();
    Ok(McSummary {
        p: order.p(),
        q: order.q(),
        params: config.params.as_slice().to_vec(),
        dist: config.dist.to_string(),
        n: config.n,
        n_reps: config.n_reps,
        seed: config.seed,
        families,
        variance_ratios,
    })
}

/// Flat per-replication table: `family,rep,status,<coords>,<std errors>`.
pub fn per_rep_csv(summary: &McSummary) -> String {
    let mut names = vec!["omega".to_string()];
    names.extend((1..=summary.p).map(|i| format!("alpha{i}")));
    names.extend((1..=summary.q).map(|j| format!("beta{j}")));
    let mut out = String::from("family,rep,status");
    for n in &names {
        out.push(',');
        out.push_str(n);
    }
    for n in &names {
        out.push_str(",se_");
        out.push_str(n);
    }
    out.push('\n');
    let cell = |v: Option<&Vec<f64>>, j: usize| v.map(|x| x[j].to_string()).unwrap_or_default();
    for fam in &summary.families {
        for r in &fam.reps {
            let status = serde_json::to_value(r.status).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default();
            out.push_str(&format!("{},{},{}", fam.family, r.rep, status));
            for j in 0..names.len() {
                out.push(',');
                out.push_str(&cell(r.theta_hat.as_ref(), j));
            }
            for j in 0..names.len() {
                out.push(',');
                out.push_str(&cell(r.std_errors.as_ref(), j));
            }
            out.push('\n');
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NormalityReport {
    pub coordinate: usize,
    pub n: usize,
    pub ks_distance: f64,
    pub critical_5: f64,
    pub critical_1: f64,
    pub q025: f64,
    pub q975: f64,
}

impl NormalityReport {
    fn from_sample(coordinate: usize, mut z: Vec<f64>) -> Self {
        let n = z.len();
        let ks_distance = ks_normal(&z);
        z.sort_by(f64::total_cmp);
        let rn = (n as f64).sqrt();
        NormalityReport {
            coordinate,
            n,
            ks_distance,
            critical_5: 1.358 / rn,
            critical_1: 1.628 / rn,
            q025: quantile_sorted(&z, 0.025),
            q975: quantile_sorted(&z, 0.975),
        }
    }
}

pub const MIN_NORMALITY_REPS: usize = 100;

/// KS test of `sqrt(n)(theta_hat_c - theta_c) / sd_c` against `N(0, 1)`,
/// with `sd_c` the theoretical standard deviation.
pub fn normality_check(summary: &McSummary, family: usize, coordinate: usize) -> Result<NormalityReport> {
    let fam = summary
        .families
        .get(family)
        .ok_or(GarchError::CoordinateOutOfRange { index: family, dim: summary.families.len() })?;
    let dim = fam.theta_true.len();
    if coordinate >= dim {
        return Err(GarchError::CoordinateOutOfRange { index: coordinate, dim });
    }
    let sd = fam.theoretical_cov[coordinate][coordinate].sqrt();
    let sqrt_n = (summary.n as f64).sqrt();
    let z: Vec<f64> = fam.successes().map(|e| sqrt_n * (e[coordinate] - fam.theta_true[coordinate]) / sd).collect();
    if z.len() < MIN_NORMALITY_REPS {
        return Err(GarchError::InsufficientReplications { needed: MIN_NORMALITY_REPS, got: z.len() });
    }
    Ok(NormalityReport::from_sample(coordinate, z))
}

/// The same report for draws that are already standardized.
pub fn normality_of_sample(z: Vec<f64>) -> Result<NormalityReport> {
    if z.len() < MIN_NORMALITY_REPS {
        return Err(GarchError::InsufficientReplications { needed: MIN_NORMALITY_REPS, got: z.len() });
    }
    Ok(NormalityReport::from_sample(0, z))
}

fn std_normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// `sup_x |F_n(x) - Phi(x)|`.
pub fn ks_normal(sample: &[f64]) -> f64 {
    let mut z = sample.to_vec();
    z.sort_by(f64::total_cmp);
    let n = z.len() as f64;
    z.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = std_normal_cdf(x);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max)
}

fn quantile_sorted(z: &[f64], p: f64) -> f64 {
    let h = (z.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(z.len() - 1);
    z[lo] + (h - lo as f64) * (z[hi] - z[lo])
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, StandardNormal};

    fn small_config(n_reps: usize) -> McConfig {
        let params = GarchParams::new(0.1, &[0.1], &[0.8]).unwrap();
        let mut cfg = McConfig::new(
            params,
            InnovationDist::laplace().with_divisor(std::f64::consts::SQRT_2).unwrap(),
            vec![ScoreFamily::Gaussian, ScoreFamily::Laplace],
            600,
            n_reps,
            11,
        );
        cfg.reference_len = 20_000;
        cfg
    }

    #[test]
    fn deterministic_and_arm_truths() {
        let cfg = small_config(4);
        let a = run_mc(&cfg).unwrap();
        assert_eq!(a, run_mc(&cfg).unwrap());
        assert_eq!(a.families[0].theta_true, vec![0.1, 0.1, 0.8]);
        // E|eps| = 1/sqrt(2) under the configured law, so the laplace arm sees omega/2
        let t = &a.families[1].theta_true;
        assert!((t[0] - 0.05).abs() < 1e-12 && (t[1] - 0.05).abs() < 1e-12 && t[2] == 0.8);
        assert_eq!(a.families[0].tau_sq_source, "analytic");
        assert!((a.families[0].tau_sq - 1.25).abs() < 1e-12);
        assert_eq!(a.variance_ratios.len(), 1);
        let csv = per_rep_csv(&a);
        assert_eq!(csv.lines().count(), 1 + 2 * 4);
        assert!(csv.starts_with("family,rep,status,omega,alpha1,beta1,se_omega"));
    }

    #[test]
    fn empirical_tau_for_families_without_formula() {
        let mut cfg = small_config(2);
        cfg.families = vec![ScoreFamily::poly_tail(6.0).unwrap()];
        let s = run_mc(&cfg).unwrap();
        assert_eq!(s.families[0].tau_sq_source, "empirical");
        assert!(s.families[0].tau_sq > 0.0);
    }

    #[test]
    fn invalid_configs() {
        assert!(matches!(run_mc(&small_config(1)), Err(GarchError::InsufficientReplications { .. })));
        let mut cfg = small_config(3);
        cfg.families.clear();
        assert!(run_mc(&cfg).is_err());
    }

    #[test]
    fn normality_needs_enough_reps() {
        let s = run_mc(&small_config(3)).unwrap();
        assert!(matches!(normality_check(&s, 0, 2), Err(GarchError::InsufficientReplications { .. })));
        assert!(matches!(normality_check(&s, 0, 3), Err(GarchError::CoordinateOutOfRange { .. })));
    }

    #[test]
    fn ks_self_test() {
        let mut r = rng::stream(5, 0);
        let z: Vec<f64> = (0..2000).map(|_| StandardNormal.sample(&mut r)).collect();
        let rep = normality_of_sample(z).unwrap();
        assert!(rep.ks_distance < rep.critical_5, "{rep:?}");
        assert!((rep.q025 + 1.96).abs() < 0.2 && (rep.q975 - 1.96).abs() < 0.2);
        let shifted: Vec<f64> = (0..2000).map(|_| { let x: f64 = StandardNormal.sample(&mut r); 0.5 + x }).collect();
        let rep = normality_of_sample(shifted).unwrap();
        assert!(rep.ks_distance > rep.critical_1);
    }

    #[test]
    fn ks_exact_small_case() {
        // one point at 0: F = 0.5, distance 0.5
        assert!((ks_normal(&[0.0]) - 0.5).abs() < 1e-15);
    }
}
