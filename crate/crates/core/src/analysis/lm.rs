//! Damped Gauss–Newton (Levenberg–Marquardt) least squares for small models.
//!
//! Minimizes `½ Σ wᵢ (yᵢ - f(xᵢ; p))²`. The damping term is `λ·diag(JᵀWJ)`,
//! which makes the iteration insensitive to the very different scales of the
//! parameters (seconds next to photon counts). `λ` is divided by 10 after an
//! accepted step and multiplied by 10 after a rejected one. Iteration stops when
//! the largest relative parameter step falls below `1e-10` or after 200
//! iterations.

use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, Error, Result};

pub trait Model {
    fn param_names(&self) -> &'static [&'static str];

    fn eval(&self, x: f64, p: &[f64]) -> f64;

    /// Partial derivatives `∂f/∂pⱼ` at `x`, written into `row`.
    fn jacobian_row(&self, x: f64, p: &[f64], row: &mut [f64]);

    fn n_params(&self) -> usize {
        self.param_names().len()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct LmOptions {
    pub max_iterations: usize,
    pub relative_step: f64,
    pub initial_lambda: f64,
    /// Gradient reduction, relative to the starting point, required for convergence.
    pub gradient_ratio: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        LmOptions {
            max_iterations: 200,
            relative_step: 1e-10,
            initial_lambda: 1e-3,
            gradient_ratio: 1e-6,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LmReport {
    pub params: Vec<f64>,
    /// Scaled covariance (residual variance × inverse normal matrix); zero rows for frozen parameters.
    pub covariance: DMatrix<f64>,
    /// Weighted sum of squared residuals.
    pub chi2: f64,
    /// Unweighted RMS residual.
    pub residual_rms: f64,
    pub iterations: usize,
    pub converged: bool,
    pub initial_gradient_norm: f64,
    pub final_gradient_norm: f64,
}

impl LmReport {
    pub fn sigma(&self, i: usize) -> f64 {
        self.covariance[(i, i)].max(0.0).sqrt()
    }
}

/// Borrowed view of a weighted curve-fitting problem.
pub struct Problem<'a, M: Model> {
    pub model: &'a M,
    pub x: &'a [f64],
    pub y: &'a [f64],
    /// Per-point weights `1/σᵢ²`; unit weights when `None`.
    pub weights: Option<&'a [f64]>,
    /// Which parameters are optimized; the rest stay at their initial value.
    pub free: &'a [bool],
}

impl<M: Model> Problem<'_, M> {
    fn weight(&self, i: usize) -> f64 {
        self.weights.map_or(1.0, |w| w[i])
    }

    fn check(&self, p: &[f64]) -> Result<()> {
        let n = self.model.n_params();
        if p.len() != n || self.free.len() != n {
            return invalid(format!("expected {n} parameters"));
        }
        if self.x.len() != self.y.len() {
            return invalid("x and y lengths differ");
        }
        if let Some(w) = self.weights {
            if w.len() != self.x.len() {
                return invalid("weights length differs from data length");
            }
            if w.iter().any(|w| !(*w > 0.0 && w.is_finite())) {
                return invalid("weights must be finite and > 0");
            }
        }
        if self.x.iter().chain(self.y).any(|v| !v.is_finite()) {
            return invalid("data must be finite");
        }
        let n_free = self.free.iter().filter(|f| **f).count();
        if n_free == 0 {
            return invalid("no free parameters");
        }
        if self.x.len() < n_free {
            return Err(Error::DegenerateFit(format!(
                "{} points cannot determine {n_free} parameters",
                self.x.len()
            )));
        }
        Ok(())
    }

    /// `½ Σ wᵢ rᵢ²`.
    pub fn objective(&self, p: &[f64]) -> f64 {
        0.5 * self.chi2(p)
    }

    fn chi2(&self, p: &[f64]) -> f64 {
        self.x
            .iter()
            .zip(self.y)
            .enumerate()
            .map(|(i, (&x, &y))| {
                let r = y - self.model.eval(x, p);
                self.weight(i) * r * r
            })
            .sum()
    }

    /// Gradient of [`Problem::objective`] with respect to all parameters.
    pub fn gradient(&self, p: &[f64]) -> Vec<f64> {
        let n = self.model.n_params();
        let mut g = vec![0.0; n];
        let mut row = vec![0.0; n];
        for (i, (&x, &y)) in self.x.iter().zip(self.y).enumerate() {
            let r = y - self.model.eval(x, p);
            self.model.jacobian_row(x, p, &mut row);
            for j in 0..n {
                g[j] -= self.weight(i) * r * row[j];
            }
        }
        g
    }

    fn free_indices(&self) -> Vec<usize> {
        (0..self.free.len()).filter(|&j| self.free[j]).collect()
    }

    /// Normal matrix `JᵀWJ` and right-hand side `JᵀWr` over the free parameters.
    fn normal_equations(&self, p: &[f64], idx: &[usize]) -> (DMatrix<f64>, DVector<f64>) {
        let k = idx.len();
        let mut a = DMatrix::zeros(k, k);
        let mut b = DVector::zeros(k);
        let mut row = vec![0.0; self.model.n_params()];
        for (i, (&x, &y)) in self.x.iter().zip(self.y).enumerate() {
            let w = self.weight(i);
            let r = y - self.model.eval(x, p);
            self.model.jacobian_row(x, p, &mut row);
            for (a_i, &ji) in idx.iter().enumerate() {
                b[a_i] += w * row[ji] * r;
                for (a_j, &jj) in idx.iter().enumerate() {
                    a[(a_i, a_j)] += w * row[ji] * row[jj];
                }
            }
        }
        (a, b)
    }

    fn free_gradient_norm(&self, p: &[f64]) -> f64 {
        let g = self.gradient(p);
        self.free_indices().iter().map(|&j| g[j] * g[j]).sum::<f64>().sqrt()
    }
}

/// Runs damped Gauss–Newton from `p0`.
pub fn minimize<M: Model>(problem: &Problem<'_, M>, p0: &[f64], opts: &LmOptions) -> Result<LmReport> {
    problem.check(p0)?;
    let idx = problem.free_indices();
    let mut p = p0.to_vec();
    let mut chi2 = problem.chi2(&p);
    if !chi2.is_finite() {
        return Err(Error::DegenerateFit(
            "objective is not finite at the initial guess".into(),
        ));
    }
    let g0 = problem.free_gradient_norm(&p);
    let mut lambda = opts.initial_lambda;
    let mut iterations = 0;
    let mut step_converged = false;

    'outer: while iterations < opts.max_iterations {
        iterations += 1;
        let (a, b) = problem.normal_equations(&p, &idx);
        loop {
            let mut damped = a.clone();
            for d in 0..idx.len() {
                let diag = a[(d, d)];
                damped[(d, d)] += lambda * if diag > 0.0 { diag } else { 1.0 };
            }
            let step = damped.cholesky().map(|c| c.solve(&b));
            if let Some(step) = step {
                let mut trial = p.clone();
                for (k, &j) in idx.iter().enumerate() {
                    trial[j] += step[k];
                }
                let trial_chi2 = problem.chi2(&trial);
                if trial_chi2.is_finite() && trial_chi2 <= chi2 {
                    let rel = idx
                        .iter()
                        .enumerate()
                        .map(|(k, &j)| step[k].abs() / (p[j].abs() + f64::MIN_POSITIVE))
                        .fold(0.0, f64::max);
                    p = trial;
                    chi2 = trial_chi2;
                    lambda = (lambda / 10.0).max(1e-15);
                    if rel < opts.relative_step {
                        step_converged = true;
                        break 'outer;
                    }
                    continue 'outer;
                }
            }
            lambda *= 10.0;
            if lambda > 1e16 {
                // no downhill step left at any damping
                step_converged = true;
                break 'outer;
            }
        }
    }

    let (a, _) = problem.normal_equations(&p, &idx);
    let inv = a
        .clone()
        .cholesky()
        .map(|c| c.inverse())
        .ok_or_else(|| Error::DegenerateFit("singular normal equations at the optimum".into()))?;
    let dof = problem.x.len().saturating_sub(idx.len()).max(1) as f64;
    let scale = chi2 / dof;
    let n = problem.model.n_params();
    let mut covariance = DMatrix::zeros(n, n);
    for (a_i, &i) in idx.iter().enumerate() {
        for (a_j, &j) in idx.iter().enumerate() {
            covariance[(i, j)] = scale * inv[(a_i, a_j)];
        }
    }

    let g = problem.free_gradient_norm(&p);
    let residual_rms = (problem
        .x
        .iter()
        .zip(problem.y)
        .map(|(&x, &y)| (y - problem.model.eval(x, &p)).powi(2))
        .sum::<f64>()
        / problem.x.len() as f64)
        .sqrt();
    let gradient_met = g <= opts.gradient_ratio * g0 || g == 0.0 || chi2 <= 1e-28 * weighted_norm(problem);
    Ok(LmReport {
        params: p,
        covariance,
        chi2,
        residual_rms,
        iterations,
        converged: step_converged && gradient_met,
        initial_gradient_norm: g0,
        final_gradient_norm: g,
    })
}

fn weighted_norm<M: Model>(problem: &Problem<'_, M>) -> f64 {
    problem
        .y
        .iter()
        .enumerate()
        .map(|(i, y)| problem.weight(i) * y * y)
        .sum()
}
