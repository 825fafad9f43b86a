//! Small derivative-free and Gauss-Newton type optimizers shared by the
//! fitting routines.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OptimError {
    #[error("objective returned a non-finite value at the initial point")]
    NonFiniteStart,
    #[error("least-squares problem has {residuals} residuals for {params} parameters")]
    Underdetermined { residuals: usize, params: usize },
}

/// Golden-section minimization of a unimodal scalar function on `[a, b]`.
///
/// Returns `(x_min, f(x_min), evaluations)`.
pub fn golden_section<F>(mut f: F, a: f64, b: f64, tol: f64, max_iter: usize) -> (f64, f64, usize)
where
    F: FnMut(f64) -> f64,
{
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut lo, mut hi) = if a <= b { (a, b) } else { (b, a) };
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    let mut evals = 2;
    for _ in 0..max_iter {
        if (hi - lo).abs() <= tol * (1.0 + x1.abs().max(x2.abs())) {
            break;
        }
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = f(x2);
        }
        evals += 1;
    }
    // endpoints are candidates too: the minimum may sit on the bracket edge
    let mut best = if f1 <= f2 { (x1, f1) } else { (x2, f2) };
    for x in [lo, hi] {
        let fx = f(x);
        evals += 1;
        if fx < best.1 {
            best = (x, fx);
        }
    }
    (best.0, best.1, evals)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LmOptions {
    pub max_iterations: usize,
    /// Relative reduction of the cost below which the iteration stops.
    pub ftol: f64,
    /// Relative step size below which the iteration stops.
    pub xtol: f64,
    /// Infinity norm of the gradient below which the iteration stops.
    pub gtol: f64,
    /// Relative finite-difference step for the central-difference Jacobian.
    pub fd_step: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        Self { max_iterations: 500, ftol: 1e-15, xtol: 1e-13, gtol: 1e-15, fd_step: 1e-6 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    SmallCostReduction,
    SmallStep,
    SmallGradient,
    ZeroResidual,
    MaxIterations,
    Stalled,
}

#[derive(Debug, Clone)]
pub struct LmReport {
    pub params: Vec<f64>,
    pub residuals: Vec<f64>,
    /// Sum of squared residuals.
    pub cost: f64,
    pub iterations: usize,
    pub termination: Termination,
    /// `(JᵀJ)⁻¹ · cost/(m − n)` at the solution, when invertible.
    pub covariance: Option<DMatrix<f64>>,
}

impl LmReport {
    pub fn converged(&self) -> bool {
        !matches!(self.termination, Termination::MaxIterations | Termination::Stalled)
    }
}

fn sum_sq(r: &[f64]) -> f64 {
    r.iter().map(|v| v * v).sum()
}

/// Levenberg-Marquardt minimization of `Σ rᵢ(x)²` with a central-difference
/// Jacobian. `residual(x, out)` fills `out` (length `m`). Non-finite
/// residuals at a trial point are treated as a rejected step.
pub fn levenberg_marquardt<F>(mut residual: F, x0: &[f64], m: usize, opts: &LmOptions) -> Result<LmReport, OptimError>
where
    F: FnMut(&[f64], &mut [f64]),
{
    let n = x0.len();
    if m < n {
        return Err(OptimError::Underdetermined { residuals: m, params: n });
    }
    let mut x = x0.to_vec();
    let mut r = vec![0.0; m];
    residual(&x, &mut r);
    if r.iter().any(|v| !v.is_finite()) {
        return Err(OptimError::NonFiniteStart);
    }
    let mut cost = sum_sq(&r);
    let mut jac = DMatrix::<f64>::zeros(m, n);
    let mut rp = vec![0.0; m];
    let mut rm = vec![0.0; m];
    let mut mu = -1.0;
    let mut nu = 2.0;
    let mut termination = Termination::MaxIterations;
    let mut iterations = 0;

    let jacobian = |x: &[f64], jac: &mut DMatrix<f64>, rp: &mut [f64], rm: &mut [f64], residual: &mut F| {
        let mut xt = x.to_vec();
        for j in 0..n {
            let h = opts.fd_step * x[j].abs().max(1e-3);
            xt[j] = x[j] + h;
            residual(&xt, rp);
            xt[j] = x[j] - h;
            residual(&xt, rm);
            xt[j] = x[j];
            for i in 0..m {
                jac[(i, j)] = (rp[i] - rm[i]) / (2.0 * h);
            }
        }
    };

    if cost == 0.0 {
        termination = Termination::ZeroResidual;
    } else {
        'outer: while iterations < opts.max_iterations {
            iterations += 1;
            jacobian(&x, &mut jac, &mut rp, &mut rm, &mut residual);
            let jtj = jac.transpose() * &jac;
            let g = jac.transpose() * DVector::from_column_slice(&r);
            if g.amax() <= opts.gtol * cost.max(f64::MIN_POSITIVE).sqrt().max(1e-300) {
                termination = Termination::SmallGradient;
                break;
            }
            if mu < 0.0 {
                let max_diag = (0..n).map(|i| jtj[(i, i)]).fold(0.0, f64::max);
                mu = 1e-3 * max_diag.max(1e-300);
            }
            loop {
                let mut a = jtj.clone();
                for i in 0..n {
                    a[(i, i)] += mu * jtj[(i, i)].max(1e-12 * (1.0 + jtj[(i, i)]));
                }
                let step = match a.cholesky() {
                    Some(ch) => ch.solve(&(-&g)),
                    None => {
                        mu *= nu;
                        nu *= 2.0;
                        if mu > 1e300 {
                            termination = Termination::Stalled;
                            break 'outer;
                        }
                        continue;
                    }
                };
                let x_new: Vec<f64> = x.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
                residual(&x_new, &mut rp);
                let cost_new = if rp.iter().all(|v| v.is_finite()) { sum_sq(&rp) } else { f64::INFINITY };
                let predicted = -(step.dot(&g) * 2.0) - step.dot(&(&jtj * &step));
                let rho = if predicted > 0.0 { (cost - cost_new) / predicted } else { -1.0 };
                let step_norm = step.norm();
                let x_norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
                if rho > 0.0 && cost_new < cost {
                    let reduction = (cost - cost_new) / cost;
                    x = x_new;
                    r.copy_from_slice(&rp);
                    cost = cost_new;
                    mu *= (1.0f64 / 3.0).max(1.0 - (2.0 * rho - 1.0).powi(3));
                    nu = 2.0;
                    if cost == 0.0 {
                        termination = Termination::ZeroResidual;
                        break 'outer;
                    }
                    if reduction < opts.ftol {
                        termination = Termination::SmallCostReduction;
                        break 'outer;
                    }
                    if step_norm <= opts.xtol * (x_norm + opts.xtol) {
                        termination = Termination::SmallStep;
                        break 'outer;
                    }
                    break;
                } else {
                    if step_norm <= opts.xtol * (x_norm + opts.xtol) {
                        termination = Termination::SmallStep;
                        break 'outer;
                    }
                    mu *= nu;
                    nu *= 2.0;
                    if mu > 1e300 {
                        termination = Termination::Stalled;
                        break 'outer;
                    }
                }
            }
        }
    }

    jacobian(&x, &mut jac, &mut rp, &mut rm, &mut residual);
    let jtj = jac.transpose() * &jac;
    let dof = (m - n).max(1) as f64;
    let covariance = jtj.try_inverse().map(|inv| inv * (cost / dof));
    Ok(LmReport { params: x, residuals: r, cost, iterations, termination, covariance })
}
