//! Maximization of `L_hat_n(u)` over the feasible set `U`.
//!
//! Each start runs a projected ascent. The preferred direction is a scoring
//! step `B^{-1} grad` with `B = (kappa / 4) mean(z z^T)`, `z = w_hat'/w_hat`
//! and `kappa = -mean(g1 + g2)` at the current residuals, restricted to the
//! coordinates not pinned at a box face. That matrix is the expected negative
//! Hessian of the objective up to sampling noise, which makes the iteration
//! invariant to rescaling the data. Plain projected gradient steps and a
//! Nelder-Mead polish take over when the scoring step fails the Armijo test.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;

use crate::error::{GarchError, Result};
use crate::likelihood::{evaluate, Evaluation, ScoreFamily};
use crate::model::{project_to_space, EstimationPoint, GarchParams, ParamSpace, TimeSeries};
use crate::rng;

const ARMIJO: f64 = 1e-4;
const MAX_BACKTRACKS: usize = 60;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub max_iters: usize,
    pub tol_grad: f64,
    pub tol_step: f64,
    pub n_starts: usize,
    pub seed: u64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions { max_iters: 500, tol_grad: 1e-6, tol_step: 1e-10, n_starts: 3, seed: 0 }
    }
}

impl FitOptions {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_starts(mut self, n_starts: usize) -> Self {
        self.n_starts = n_starts;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.max_iters == 0 || self.n_starts == 0 || !(self.tol_grad > 0.0) || !(self.tol_step > 0.0) {
            return Err(GarchError::InvalidParameter(format!("invalid fit options {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub theta_hat: GarchParams,
    pub objective_value: f64,
    /// Projected-gradient norm `|P(u + grad) - u|` is at most `tol_grad (1 + |objective|)`.
    pub converged: bool,
    pub n_iters: usize,
    /// Norm of the projected gradient at `theta_hat`; zero at a KKT point.
    pub grad_norm: f64,
    pub at_boundary: bool,
    /// Index of the winning start in [`multistart_points`] order.
    pub start_index: usize,
    /// Objective values of the accepted iterates of the winning start.
    pub history: Vec<f64>,
}

/// Starting points, all inside `U`.
///
/// The first is `x = 0.1 * scale_hint`, `s_i = 0.2/p`, `t_j = 0.7/q`, which
/// matches a process with persistence 0.9 and variance `scale_hint` (pass
/// the sample second moment). The rest are seeded uniform draws over the box.
pub fn multistart_points(space: &ParamSpace, n_starts: usize, seed: u64, scale_hint: f64) -> Vec<EstimationPoint> {
    let order = space.order();
    let (p, q) = (order.p(), order.q());
    let mut points = Vec::with_capacity(n_starts);
    let mut center = vec![0.1 * scale_hint];
    center.extend(std::iter::repeat(0.2 / p as f64).take(p));
    center.extend(std::iter::repeat(0.7 / q as f64).take(q));
    let center = EstimationPoint::new(order, center).expect("dimension fixed by order");
    points.push(project_to_space(&center, space).expect("same order"));
    for i in 1..n_starts {
        let mut r = rng::stream(seed, i as u64);
        let coords: Vec<f64> = (0..order.dim()).map(|_| r.random_range(space.u_low()..=space.u_high())).collect();
        let u = EstimationPoint::new(order, coords).expect("dimension fixed by order");
        points.push(project_to_space(&u, space).expect("same order"));
    }
    points
}

/// `theta_hat = argmax_{u in U} L_hat_n(u)`.
pub fn fit(series: &TimeSeries, space: &ParamSpace, family: &ScoreFamily, opts: &FitOptions) -> Result<FitResult> {
    opts.validate()?;
    let order = space.order();
    series.require_len(10 * order.dim())?;
    let starts = multistart_points(space, opts.n_starts, opts.seed, series.mean_square());

    let outcomes: Vec<Result<Option<FitResult>>> = starts
        .par_iter()
        .enumerate()
        .map(|(i, u0)| ascend(u0.clone(), i, series, space, family, opts))
        .collect();

    let mut best: Option<FitResult> = None;
    let mut first_err = None;
    for outcome in outcomes {
        match outcome {
            Ok(Some(res)) => {
                if best.as_ref().is_none_or(|b| res.objective_value > b.objective_value) {
                    best = Some(res);
                }
            }
            Ok(None) => {}
            Err(e) => {
                first_err.get_or_insert(e);
            }
        }
    }
    match (best, first_err) {
        (Some(b), _) => Ok(b),
        (None, Some(e)) => Err(e),
        (None, None) => Err(GarchError::DegenerateObjective),
    }
}

struct Problem<'a> {
    series: &'a TimeSeries,
    space: &'a ParamSpace,
    family: &'a ScoreFamily,
}

impl Problem<'_> {
    fn eval(&self, u: &EstimationPoint) -> Result<Evaluation> {
        evaluate(u, self.series, self.family)
    }

    fn project(&self, coords: Vec<f64>) -> EstimationPoint {
        let u = EstimationPoint::new(self.space.order(), coords).expect("dimension fixed by order");
        project_to_space(&u, self.space).expect("same order")
    }

    fn value_at(&self, coords: &[f64]) -> f64 {
        let u = self.project(coords.to_vec());
        evaluate(&u, self.series, self.family).map(|e| e.value).unwrap_or(f64::NEG_INFINITY)
    }

    /// `|P(u + grad) - u|`.
    fn projected_grad_norm(&self, u: &EstimationPoint, grad: &[f64]) -> f64 {
        let moved: Vec<f64> = u.as_slice().iter().zip(grad).map(|(a, g)| a + g).collect();
        let p = self.project(moved);
        dist(p.as_slice(), u.as_slice())
    }

    fn at_boundary(&self, u: &EstimationPoint, tol: f64) -> bool {
        let s = self.space;
        let near_box = u.as_slice().iter().any(|&c| c - s.u_low() <= tol || s.u_high() - c <= tol);
        near_box || u.t().iter().sum::<f64>() >= s.rho0() - tol
    }

    /// Armijo backtracking along the projection arc `P(u + a d)`.
    fn line_search(
        &self,
        u: &EstimationPoint,
        cur: &Evaluation,
        dir: &[f64],
        alpha0: f64,
    ) -> Result<Option<(EstimationPoint, Evaluation, f64)>> {
        let mut alpha = alpha0;
        for _ in 0..MAX_BACKTRACKS {
            let moved: Vec<f64> = u.as_slice().iter().zip(dir).map(|(a, d)| a + alpha * d).collect();
            let cand = self.project(moved);
            let pred: f64 = cand.as_slice().iter().zip(u.as_slice()).zip(&cur.grad).map(|((c, a), g)| g * (c - a)).sum();
            if cand == *u {
                return Ok(None);
            }
            if pred > 0.0 {
                let ev = self.eval(&cand)?;
                if ev.value >= cur.value + ARMIJO * pred {
                    return Ok(Some((cand, ev, alpha)));
                }
            }
            alpha *= 0.5;
        }
        Ok(None)
    }

    /// Scoring direction on the free coordinates (those not held at a box
    /// face by a gradient pointing outward).
    fn scoring_direction(&self, u: &EstimationPoint, ev: &Evaluation, tol: f64) -> Option<Vec<f64>> {
        let s = self.space;
        let free: Vec<usize> = (0..u.as_slice().len())
            .filter(|&j| {
                let c = u.as_slice()[j];
                let g = ev.grad[j];
                !((c - s.u_low() <= tol && g < 0.0) || (s.u_high() - c <= tol && g > 0.0))
            })
            .collect();
        if free.is_empty() {
            return None;
        }
        let kappa = if -ev.curvature > 1e-8 { -ev.curvature } else { 1.0 };
        let k = free.len();
        let mut b = DMatrix::<f64>::zeros(k, k);
        for (a, &i) in free.iter().enumerate() {
            for (c, &j) in free.iter().enumerate() {
                b[(a, c)] = 0.25 * kappa * ev.outer[(i, j)];
            }
        }
        let ridge = 1e-12 * b.trace().max(f64::MIN_POSITIVE);
        for a in 0..k {
            b[(a, a)] += ridge;
        }
        let rhs = DVector::from_iterator(k, free.iter().map(|&j| ev.grad[j]));
        let sol = b.cholesky()?.solve(&rhs);
        if sol.iter().any(|v| !v.is_finite()) {
            return None;
        }
        let mut dir = vec![0.0; u.as_slice().len()];
        for (a, &j) in free.iter().enumerate() {
            dir[j] = sol[a];
        }
        Some(dir)
    }

    /// Nelder-Mead on `-L_hat_n(P(v))` started around `u`.
    fn polish(&self, u: &EstimationPoint, f0: f64, max_evals: usize) -> Option<EstimationPoint> {
        let x0 = u.as_slice().to_vec();
        let dim = x0.len();
        let mut simplex: Vec<Vec<f64>> = vec![x0.clone()];
        for j in 0..dim {
            let mut v = x0.clone();
            let step = 0.05 * v[j].abs().max(self.space.u_low());
            v[j] = if v[j] + step <= self.space.u_high() { v[j] + step } else { v[j] - step };
            simplex.push(v);
        }
        let mut cost: Vec<f64> = simplex.iter().map(|v| -self.value_at(v)).collect();
        let mut evals = dim + 1;
        while evals < max_evals {
            let mut idx: Vec<usize> = (0..=dim).collect();
            idx.sort_by(|&a, &b| cost[a].total_cmp(&cost[b]));
            simplex = idx.iter().map(|&i| simplex[i].clone()).collect();
            cost = idx.iter().map(|&i| cost[i]).collect();
            if (cost[dim] - cost[0]).abs() <= 1e-15 * (1.0 + cost[0].abs()) {
                break;
            }
            let centroid: Vec<f64> =
                (0..dim).map(|j| simplex[..dim].iter().map(|v| v[j]).sum::<f64>() / dim as f64).collect();
            let along = |coef: f64| -> Vec<f64> {
                centroid.iter().zip(&simplex[dim]).map(|(c, w)| c + coef * (c - w)).collect()
            };
            let refl = along(1.0);
            let fr = -self.value_at(&refl);
            evals += 1;
            if fr < cost[0] {
                let exp = along(2.0);
                let fe = -self.value_at(&exp);
                evals += 1;
                if fe < fr {
                    simplex[dim] = exp;
                    cost[dim] = fe;
                } else {
                    simplex[dim] = refl;
                    cost[dim] = fr;
                }
            } else if fr < cost[dim - 1] {
                simplex[dim] = refl;
                cost[dim] = fr;
            } else {
                let (con, fc) = if fr < cost[dim] {
                    let c = along(0.5);
                    let f = -self.value_at(&c);
                    (c, f)
                } else {
                    let c = along(-0.5);
                    let f = -self.value_at(&c);
                    (c, f)
                };
                evals += 1;
                if fc < cost[dim].min(fr) {
                    simplex[dim] = con;
                    cost[dim] = fc;
                } else {
                    let best = simplex[0].clone();
                    for i in 1..=dim {
                        simplex[i] = best.iter().zip(&simplex[i]).map(|(b, v)| b + 0.5 * (v - b)).collect();
                        cost[i] = -self.value_at(&simplex[i]);
                    }
                    evals += dim;
                }
            }
        }
        let (best_i, best_cost) =
            cost.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1)).map(|(i, c)| (i, *c))?;
        (-best_cost > f0).then(|| self.project(simplex[best_i].clone()))
    }
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

fn norm(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn ascend(
    start: EstimationPoint,
    start_index: usize,
    series: &TimeSeries,
    space: &ParamSpace,
    family: &ScoreFamily,
    opts: &FitOptions,
) -> Result<Option<FitResult>> {
    let prob = Problem { series, space, family };
    let mut u = start;
    let mut ev = prob.eval(&u)?;
    if ev.value == f64::NEG_INFINITY {
        return Ok(None);
    }
    let mut history = vec![ev.value];
    let mut grad_alpha: Option<f64> = None;
    let mut n_iters = 0;
    let mut polished_at: Option<usize> = None;

    for iter in 1..=opts.max_iters {
        n_iters = iter;
        if ev.grad.iter().any(|g| !g.is_finite()) {
            return Err(GarchError::NonFiniteGradient { iter, point: u.as_slice().to_vec() });
        }
        let pg = prob.projected_grad_norm(&u, &ev.grad);
        let small_grad = pg <= opts.tol_grad * (1.0 + ev.value.abs());

        let mut step = None;
        if let Some(dir) = prob.scoring_direction(&u, &ev, opts.tol_step) {
            step = prob.line_search(&u, &ev, &dir, 1.0)?;
        }
        if step.is_none() {
            let gmax = ev.grad.iter().fold(0.0f64, |m, g| m.max(g.abs()));
            if gmax > 0.0 {
                let alpha0 = grad_alpha.unwrap_or(0.1 / gmax);
                step = prob.line_search(&u, &ev, &ev.grad.clone(), alpha0)?;
                if let Some((_, _, a)) = &step {
                    grad_alpha = Some(if *a == alpha0 { 2.0 * a } else { *a });
                }
            }
        }
        match step {
            Some((next, next_ev, _)) => {
                let moved = dist(next.as_slice(), u.as_slice());
                u = next;
                ev = next_ev;
                history.push(ev.value);
                if moved <= opts.tol_step * (1.0 + norm(u.as_slice())) {
                    break;
                }
            }
            None => {
                // stalled; polish once per stall point unless already stationary
                if small_grad || polished_at == Some(history.len()) {
                    break;
                }
                polished_at = Some(history.len());
                match prob.polish(&u, ev.value, 400 * u.as_slice().len()) {
                    Some(better) => {
                        u = better;
                        ev = prob.eval(&u)?;
                        history.push(ev.value);
                    }
                    None => break,
                }
            }
        }
    }

    if ev.grad.iter().any(|g| !g.is_finite()) {
        return Err(GarchError::NonFiniteGradient { iter: n_iters, point: u.as_slice().to_vec() });
    }
    let grad_norm = prob.projected_grad_norm(&u, &ev.grad);
    let converged = grad_norm <= opts.tol_grad * (1.0 + ev.value.abs());
    let at_boundary = prob.at_boundary(&u, opts.tol_step);
    Ok(Some(FitResult {
        theta_hat: u.to_params()?,
        objective_value: ev.value,
        converged,
        n_iters,
        grad_norm,
        at_boundary,
        start_index,
        history,
    }))
}
