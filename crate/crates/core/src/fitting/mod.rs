//! Nonlinear least-squares engine and model-specific fitters.
//!
//! The engine is a damped Gauss–Newton scheme with multiplicative
//! Levenberg-style damping on the scaled normal equations: the damping factor
//! grows on rejected steps and shrinks on accepted ones, and box bounds are
//! enforced by projection. Jacobians default to central finite differences
//! (relative step with an absolute floor); model fitters supply analytic
//! Jacobians where they are cheap.

mod models;

pub use models::{
    FringeFit, G2FitPriors, LorentzianFit, VisibilityDecayFit, Weighting, fit_fringe,
    fit_g2_histogram, fit_lorentzian_scan, fit_visibility_decay,
};

use serde_json::json;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FitError {
    #[error(
        "inconsistent bounds or initial point: parameter {index} has lo {lo}, init {init}, hi {hi}"
    )]
    InconsistentBounds {
        index: usize,
        lo: f64,
        init: f64,
        hi: f64,
    },
    #[error("residual dimension {residuals} smaller than free parameter count {params}")]
    Underdetermined { residuals: usize, params: usize },
    #[error("non-finite residual at parameters {params:?}")]
    NonFiniteResidual { params: Vec<f64> },
    #[error("{0}")]
    InsufficientData(String),
}

/// Why the iteration stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    GradientTolerance,
    StepTolerance,
    CostTolerance,
    MaxIterations,
    /// Damping grew past its ceiling without an acceptable step.
    Stalled,
    /// Input data cannot constrain the model (e.g. a constant series).
    DegenerateInput,
}

impl StopReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            StopReason::GradientTolerance => "gradient tolerance",
            StopReason::StepTolerance => "step tolerance",
            StopReason::CostTolerance => "cost tolerance",
            StopReason::MaxIterations => "maximum iterations",
            StopReason::Stalled => "damping stalled",
            StopReason::DegenerateInput => "degenerate input",
        }
    }
}

#[derive(Debug, Clone)]
pub struct FitOptions {
    pub max_iterations: usize,
    /// Relative decrease of the cost below which an accepted step converges.
    pub cost_tol: f64,
    /// Relative step size below which an accepted step converges.
    pub step_tol: f64,
    /// Scale-free gradient criterion (cosine of residual against Jacobian columns).
    pub gradient_tol: f64,
    pub initial_damping: f64,
    pub damping_increase: f64,
    pub damping_decrease: f64,
    /// Relative finite-difference step.
    pub fd_relative_step: f64,
    /// Absolute floor of the finite-difference step.
    pub fd_absolute_floor: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            max_iterations: 400,
            cost_tol: 1e-7,
            step_tol: 1e-10,
            gradient_tol: 1e-10,
            initial_damping: 1e-3,
            damping_increase: 10.0,
            damping_decrease: 1.0 / 3.0,
            fd_relative_step: 1e-6,
            fd_absolute_floor: 1e-9,
        }
    }
}

type Residual<'a> = Box<dyn Fn(&[f64]) -> Vec<f64> + 'a>;
type Jacobian<'a> = Box<dyn Fn(&[f64]) -> Vec<Vec<f64>> + 'a>;

/// A bounded nonlinear least-squares problem.
pub struct FitProblem<'a> {
    names: Vec<String>,
    init: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    fixed: Vec<bool>,
    residual: Residual<'a>,
    jacobian: Option<Jacobian<'a>>,
    options: FitOptions,
}

impl<'a> FitProblem<'a> {
    pub fn new<R>(names: &[&str], init: &[f64], residual: R) -> Self
    where
        R: Fn(&[f64]) -> Vec<f64> + 'a,
    {
        let n = init.len();
        assert_eq!(names.len(), n, "one name per parameter");
        Self {
            names: names.iter().map(|s| s.to_string()).collect(),
            init: init.to_vec(),
            lower: vec![f64::NEG_INFINITY; n],
            upper: vec![f64::INFINITY; n],
            fixed: vec![false; n],
            residual: Box::new(residual),
            jacobian: None,
            options: FitOptions::default(),
        }
    }

    pub fn with_bounds(mut self, lower: &[f64], upper: &[f64]) -> Self {
        assert_eq!(lower.len(), self.init.len());
        assert_eq!(upper.len(), self.init.len());
        self.lower = lower.to_vec();
        self.upper = upper.to_vec();
        self
    }

    /// Marks parameters that stay at their initial value.
    pub fn with_fixed(mut self, fixed: &[bool]) -> Self {
        assert_eq!(fixed.len(), self.init.len());
        self.fixed = fixed.to_vec();
        self
    }

    /// Analytic Jacobian: rows are residuals, columns parameters.
    pub fn with_jacobian<J>(mut self, jacobian: J) -> Self
    where
        J: Fn(&[f64]) -> Vec<Vec<f64>> + 'a,
    {
        self.jacobian = Some(Box::new(jacobian));
        self
    }

    pub fn with_options(mut self, options: FitOptions) -> Self {
        self.options = options;
        self
    }

    fn project(&self, p: &mut [f64]) {
        for (i, v) in p.iter_mut().enumerate() {
            *v = v.clamp(self.lower[i], self.upper[i]);
        }
    }

    fn eval_jacobian(&self, p: &[f64]) -> Result<Vec<Vec<f64>>, FitError> {
        if let Some(jac) = &self.jacobian {
            return Ok(jac(p));
        }
        // central finite differences, one-sided at an active bound
        let r0 = (self.residual)(p);
        let m = r0.len();
        let n = p.len();
        let mut cols: Vec<Vec<f64>> = Vec::with_capacity(n);
        for i in 0..n {
            if self.fixed[i] {
                cols.push(vec![0.0; m]);
                continue;
            }
            let h =
                (self.options.fd_relative_step * p[i].abs()).max(self.options.fd_absolute_floor);
            let hi_ok = p[i] + h <= self.upper[i];
            let lo_ok = p[i] - h >= self.lower[i];
            let mut pp = p.to_vec();
            let col = match (hi_ok, lo_ok) {
                (true, true) => {
                    pp[i] = p[i] + h;
                    let rp = (self.residual)(&pp);
                    pp[i] = p[i] - h;
                    let rm = (self.residual)(&pp);
                    rp.iter()
                        .zip(&rm)
                        .map(|(a, b)| (a - b) / (2.0 * h))
                        .collect()
                }
                (true, false) => {
                    pp[i] = p[i] + h;
                    let rp = (self.residual)(&pp);
                    rp.iter().zip(&r0).map(|(a, b)| (a - b) / h).collect()
                }
                _ => {
                    pp[i] = p[i] - h;
                    let rm = (self.residual)(&pp);
                    r0.iter().zip(&rm).map(|(a, b)| (a - b) / h).collect()
                }
            };
            cols.push(col);
        }
        // transpose to row-major m×n
        let mut jac = vec![vec![0.0; n]; m];
        for (j, col) in cols.iter().enumerate() {
            for (i, v) in col.iter().enumerate() {
                jac[i][j] = *v;
            }
        }
        Ok(jac)
    }
}

/// Recovered parameters and fit diagnostics.
#[derive(Debug, Clone)]
pub struct FitResult {
    pub names: Vec<String>,
    pub params: Vec<f64>,
    /// Standard errors from the residual-variance-scaled inverse of JᵀJ;
    /// zero for fixed parameters.
    pub stderr: Vec<f64>,
    /// Full parameter covariance (zero rows/columns for fixed parameters).
    pub covariance: Vec<Vec<f64>>,
    /// Final sum of squared residuals.
    pub cost: f64,
    pub iterations: usize,
    pub converged: bool,
    pub reason: StopReason,
    /// Cost after every accepted step, starting with the initial cost.
    pub cost_history: Vec<f64>,
}

impl FitResult {
    pub fn value(&self, name: &str) -> Option<f64> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| self.params[i])
    }

    pub fn stderr_of(&self, name: &str) -> Option<f64> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| self.stderr[i])
    }

    /// JSON report: `{params:{name:{value,stderr}}, cost, iterations, converged, reason}`.
    pub fn to_json(&self) -> String {
        let mut params = serde_json::Map::new();
        for (i, name) in self.names.iter().enumerate() {
            params.insert(
                name.clone(),
                json!({"value": self.params[i], "stderr": self.stderr[i]}),
            );
        }
        serde_json::to_string_pretty(&json!({
            "params": params,
            "cost": self.cost,
            "iterations": self.iterations,
            "converged": self.converged,
            "reason": self.reason.as_str(),
        }))
        .expect("serializable report")
    }
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

/// Cholesky solve of `A x = b` for symmetric positive definite `A`;
/// `None` if the factorization breaks down.
fn cholesky_solve(a: &[Vec<f64>], b: &[f64]) -> Option<Vec<f64>> {
    let n = b.len();
    let mut l = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[i][j];
            s -= l[i][..j]
                .iter()
                .zip(&l[j][..j])
                .map(|(x, y)| x * y)
                .sum::<f64>();
            if i == j {
                if s <= 0.0 || !s.is_finite() {
                    return None;
                }
                l[i][j] = s.sqrt();
            } else {
                l[i][j] = s / l[j][j];
            }
        }
    }
    // forward then backward substitution
    let mut y = vec![0.0; n];
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i][k] * y[k];
        }
        y[i] = s / l[i][i];
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in i + 1..n {
            s -= l[k][i] * x[k];
        }
        x[i] = s / l[i][i];
    }
    Some(x)
}

fn invert_spd(a: &[Vec<f64>]) -> Option<Vec<Vec<f64>>> {
    let n = a.len();
    let mut inv = vec![vec![0.0; n]; n];
    for j in 0..n {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        let col = cholesky_solve(a, &e)?;
        for i in 0..n {
            inv[i][j] = col[i];
        }
    }
    Some(inv)
}

/// Minimizes `‖residual(p)‖²` subject to the problem's box bounds.
///
/// Running out of iterations yields a non-converged result, not an error;
/// a non-finite residual is a hard error carrying the parameter snapshot.
pub fn least_squares(problem: &FitProblem<'_>) -> Result<FitResult, FitError> {
    let n = problem.init.len();
    for i in 0..n {
        if !(problem.lower[i] <= problem.init[i] && problem.init[i] <= problem.upper[i]) {
            return Err(FitError::InconsistentBounds {
                index: i,
                lo: problem.lower[i],
                init: problem.init[i],
                hi: problem.upper[i],
            });
        }
    }
    let free: Vec<usize> = (0..n).filter(|&i| !problem.fixed[i]).collect();
    let nf = free.len();

    let mut p = problem.init.clone();
    problem.project(&mut p);
    let mut r = (problem.residual)(&p);
    if r.iter().any(|x| !x.is_finite()) {
        return Err(FitError::NonFiniteResidual { params: p });
    }
    if r.len() < nf {
        return Err(FitError::Underdetermined {
            residuals: r.len(),
            params: nf,
        });
    }
    let mut cost = norm2(&r);
    let mut history = vec![cost];
    let opts = &problem.options;
    let mut damping = opts.initial_damping;
    let mut iterations = 0;
    let mut converged = false;
    let mut reason = StopReason::MaxIterations;

    'outer: while iterations < opts.max_iterations {
        iterations += 1;
        let jac = problem.eval_jacobian(&p)?;

        // reduced gradient and normal matrix over free parameters
        let mut g = vec![0.0; nf];
        let mut a = vec![vec![0.0; nf]; nf];
        let mut col_norm = vec![0.0; nf];
        for (fi, &i) in free.iter().enumerate() {
            for (row, rv) in jac.iter().zip(&r) {
                g[fi] += row[i] * rv;
                col_norm[fi] += row[i] * row[i];
            }
            for (fj, &j) in free.iter().enumerate().take(fi + 1) {
                let s: f64 = jac.iter().map(|row| row[i] * row[j]).sum();
                a[fi][fj] = s;
                a[fj][fi] = s;
            }
        }

        // scale-free gradient criterion
        let rnorm = cost.sqrt();
        if rnorm == 0.0 {
            converged = true;
            reason = StopReason::GradientTolerance;
            break;
        }
        let gmax = (0..nf)
            .map(|i| {
                if col_norm[i] > 0.0 {
                    g[i].abs() / (col_norm[i].sqrt() * rnorm)
                } else {
                    0.0
                }
            })
            .fold(0.0f64, f64::max);
        if gmax <= opts.gradient_tol {
            converged = true;
            reason = StopReason::GradientTolerance;
            break;
        }

        // try steps, inflating the damping until one is accepted
        loop {
            let mut damped = a.clone();
            for i in 0..nf {
                let d = if a[i][i] > 0.0 { a[i][i] } else { 1.0 };
                damped[i][i] += damping * d;
            }
            let rhs: Vec<f64> = g.iter().map(|x| -x).collect();
            let delta = match cholesky_solve(&damped, &rhs) {
                Some(d) => d,
                None => {
                    damping = if damping == 0.0 {
                        1e-10
                    } else {
                        damping * opts.damping_increase
                    };
                    if damping > 1e14 {
                        reason = StopReason::Stalled;
                        break 'outer;
                    }
                    continue;
                }
            };
            let mut p_new = p.clone();
            for (fi, &i) in free.iter().enumerate() {
                p_new[i] += delta[fi];
            }
            problem.project(&mut p_new);
            let r_new = (problem.residual)(&p_new);
            if r_new.iter().any(|x| !x.is_finite()) {
                return Err(FitError::NonFiniteResidual { params: p_new });
            }
            let cost_new = norm2(&r_new);
            if cost_new < cost {
                let step_small = free.iter().enumerate().all(|(fi, &i)| {
                    delta[fi].abs() <= opts.step_tol * (p[i].abs() + opts.step_tol)
                });
                let cost_small = (cost - cost_new) <= opts.cost_tol * cost;
                p = p_new;
                r = r_new;
                cost = cost_new;
                history.push(cost);
                damping = (damping * opts.damping_decrease).max(1e-14);
                if cost_small {
                    converged = true;
                    reason = StopReason::CostTolerance;
                    break 'outer;
                }
                if step_small {
                    converged = true;
                    reason = StopReason::StepTolerance;
                    break 'outer;
                }
                break;
            }
            damping = if damping == 0.0 {
                1e-10
            } else {
                damping * opts.damping_increase
            };
            if damping > 1e14 {
                reason = StopReason::Stalled;
                break 'outer;
            }
        }
    }

    // covariance at the solution: σ²·(JᵀJ)⁻¹ over free parameters
    let jac = problem.eval_jacobian(&p)?;
    let m = jac.len();
    let mut a = vec![vec![0.0; nf]; nf];
    for (fi, &i) in free.iter().enumerate() {
        for (fj, &j) in free.iter().enumerate().take(fi + 1) {
            let s: f64 = jac.iter().map(|row| row[i] * row[j]).sum();
            a[fi][fj] = s;
            a[fj][fi] = s;
        }
    }
    let dof = m.saturating_sub(nf).max(1);
    let sigma2 = cost / dof as f64;
    let mut covariance = vec![vec![0.0; n]; n];
    let mut stderr = vec![0.0; n];
    if let Some(inv) = invert_spd(&a) {
        for (fi, &i) in free.iter().enumerate() {
            for (fj, &j) in free.iter().enumerate() {
                covariance[i][j] = sigma2 * inv[fi][fj];
            }
            stderr[i] = covariance[i][i].max(0.0).sqrt();
        }
    }

    Ok(FitResult {
        names: problem.names.clone(),
        params: p,
        stderr,
        covariance,
        cost,
        iterations,
        converged,
        reason,
        cost_history: history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn linear_model_exact_recovery() {
        let xs: Vec<f64> = (0..20).map(|i| i as f64 / 4.0).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 2.5 * x - 1.25).collect();
        let problem = FitProblem::new(&["a", "b"], &[0.0, 0.0], |p| {
            xs.iter()
                .zip(&ys)
                .map(|(x, y)| p[0] * x + p[1] - y)
                .collect()
        });
        let fit = least_squares(&problem).unwrap();
        assert!(fit.converged);
        assert!((fit.value("a").unwrap() - 2.5).abs() < 1e-10);
        assert!((fit.value("b").unwrap() + 1.25).abs() < 1e-10);
    }

    #[test]
    fn rosenbrock_valley() {
        let problem = FitProblem::new(&["x", "y"], &[-1.2, 1.0], |p| {
            vec![10.0 * (p[1] - p[0] * p[0]), 1.0 - p[0]]
        });
        let fit = least_squares(&problem).unwrap();
        assert!(fit.converged, "reason {:?}", fit.reason);
        assert!(fit.iterations <= 200);
        assert!((fit.value("x").unwrap() - 1.0).abs() < 1e-6);
        assert!((fit.value("y").unwrap() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn quadratic_cost_single_gauss_newton_step() {
        let xs: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 3.0 * x + 7.0).collect();
        let problem = FitProblem::new(&["a", "b"], &[-5.0, 40.0], |p| {
            xs.iter()
                .zip(&ys)
                .map(|(x, y)| p[0] * x + p[1] - y)
                .collect()
        })
        .with_options(FitOptions {
            initial_damping: 0.0,
            ..FitOptions::default()
        });
        let fit = least_squares(&problem).unwrap();
        // the first accepted step of an undamped Gauss–Newton iteration on a
        // linear residual lands on the minimum
        assert!(
            fit.cost_history[1] <= 1e-15 * fit.cost_history[0],
            "history {:?}",
            fit.cost_history
        );
        assert!((fit.value("a").unwrap() - 3.0).abs() < 1e-10);
    }

    #[test]
    fn cost_history_non_increasing() {
        let xs: Vec<f64> = (0..40).map(|i| i as f64 / 10.0).collect();
        let ys: Vec<f64> = xs.iter().map(|x| (-(1.7 * x)).exp() + 0.3).collect();
        let problem = FitProblem::new(&["k", "c"], &[0.2, 0.0], |p| {
            xs.iter()
                .zip(&ys)
                .map(|(x, y)| (-(p[0] * x)).exp() + p[1] - y)
                .collect()
        });
        let fit = least_squares(&problem).unwrap();
        assert!(fit.converged);
        for w in fit.cost_history.windows(2) {
            assert!(w[1] <= w[0]);
        }
        assert!((fit.value("k").unwrap() - 1.7).abs() < 1e-6);
    }

    #[test]
    fn bounds_are_respected() {
        let problem =
            FitProblem::new(&["x"], &[0.5], |p| vec![p[0] - 3.0]).with_bounds(&[0.0], &[1.0]);
        let fit = least_squares(&problem).unwrap();
        assert!(fit.value("x").unwrap() <= 1.0);
        assert!((fit.value("x").unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn fixed_parameters_do_not_move() {
        let xs: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 2.0 * x + 5.0).collect();
        let problem = FitProblem::new(&["a", "b"], &[1.0, 5.0], |p| {
            xs.iter()
                .zip(&ys)
                .map(|(x, y)| p[0] * x + p[1] - y)
                .collect()
        })
        .with_fixed(&[false, true]);
        let fit = least_squares(&problem).unwrap();
        assert_eq!(fit.value("b").unwrap(), 5.0);
        assert_eq!(fit.stderr_of("b").unwrap(), 0.0);
        assert!((fit.value("a").unwrap() - 2.0).abs() < 1e-9);
    }

    #[test]
    fn max_iterations_is_not_an_error() {
        let problem = FitProblem::new(&["x"], &[5.0], |p| vec![(p[0].abs() + 1.0).ln()])
            .with_options(FitOptions {
                max_iterations: 2,
                cost_tol: 0.0,
                step_tol: 0.0,
                gradient_tol: 0.0,
                ..FitOptions::default()
            });
        let fit = least_squares(&problem).unwrap();
        assert!(!fit.converged);
    }

    #[test]
    fn non_finite_residual_is_diagnosed() {
        let problem = FitProblem::new(&["x"], &[-1.0], |p| vec![p[0].sqrt()]);
        let err = least_squares(&problem).unwrap_err();
        assert!(matches!(err, FitError::NonFiniteResidual { .. }));
    }

    #[test]
    fn inconsistent_bounds_rejected() {
        let problem = FitProblem::new(&["x"], &[5.0], |p| vec![p[0]]).with_bounds(&[0.0], &[1.0]);
        assert!(matches!(
            least_squares(&problem),
            Err(FitError::InconsistentBounds { .. })
        ));
    }

    #[test]
    fn deterministic_for_identical_input() {
        let xs: Vec<f64> = (0..30).map(|i| i as f64 / 7.0).collect();
        let ys: Vec<f64> = xs.iter().map(|x| (0.9 * x).sin() + 0.1 * x).collect();
        let run = || {
            let problem = FitProblem::new(&["w", "s"], &[1.2, 0.3], |p| {
                xs.iter()
                    .zip(&ys)
                    .map(|(x, y)| (p[0] * x).sin() + p[1] * x - y)
                    .collect()
            });
            least_squares(&problem).unwrap()
        };
        let a = run();
        let b = run();
        assert_eq!(a.params, b.params);
        assert_eq!(a.cost, b.cost);
        assert_eq!(a.iterations, b.iterations);
    }

    #[test]
    fn json_report_shape() {
        let problem = FitProblem::new(&["a"], &[1.0], |p| vec![p[0] - 2.0, p[0] - 2.0]);
        let fit = least_squares(&problem).unwrap();
        let report: serde_json::Value = serde_json::from_str(&fit.to_json()).unwrap();
        assert!(report["params"]["a"]["value"].is_f64());
        assert!(report["params"]["a"]["stderr"].is_f64());
        assert!(report["converged"].is_boolean());
        assert!(report["reason"].is_string());
        assert!(report["cost"].is_f64());
        assert!(report["iterations"].is_u64());
    }

    proptest! {
        #[test]
        fn stderr_nonnegative(slope in -5.0f64..5.0, noise_seed in 0u64..50) {
            let xs: Vec<f64> = (0..25).map(|i| i as f64 / 5.0).collect();
            let ys: Vec<f64> = xs
                .iter()
                .enumerate()
                .map(|(i, x)| slope * x + 1.0 + 0.01 * (((i as u64 * 2654435761) ^ noise_seed) % 100) as f64 / 100.0)
                .collect();
            let problem = FitProblem::new(&["a", "b"], &[0.0, 0.0], |p| {
                xs.iter().zip(&ys).map(|(x, y)| p[0] * x + p[1] - y).collect()
            });
            let fit = least_squares(&problem).unwrap();
            prop_assert!(fit.stderr.iter().all(|s| *s >= 0.0));
        }
    }
}
