//! A small dense Levenberg–Marquardt solver.
//!
//! The damping follows the classic multiplicative schedule: start at
//! `initial_damping`, multiply by `damping_increase` after a rejected step and
//! divide by `damping_decrease` after an accepted one. The normal equations are
//! scaled by the diagonal of `JᵀJ` (Marquardt scaling).

use nalgebra::{DMatrix, DVector};

/// A nonlinear least-squares problem `min ½‖r(x)‖²`.
///
/// Returning `None` from either method marks `x` as infeasible; the solver then
/// treats the trial step as rejected.
pub trait LeastSquaresProblem {
    fn residuals(&self, x: &DVector<f64>) -> Option<DVector<f64>>;
    fn jacobian(&self, x: &DVector<f64>) -> Option<DMatrix<f64>>;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LmConfig {
    pub initial_damping: f64,
    pub damping_increase: f64,
    pub damping_decrease: f64,
    /// Relative decrease of the objective below which an accepted step stops the solver.
    pub ftol: f64,
    /// Bound on the scaled gradient `max_i |J_iᵀ r| / (‖J_i‖ ‖r‖)`.
    pub gtol: f64,
    pub max_iterations: usize,
    /// Damping above which no further progress is attempted.
    pub max_damping: f64,
}

impl Default for LmConfig {
    fn default() -> Self {
        Self {
            initial_damping: 1e-3,
            damping_increase: 10.0,
            damping_decrease: 10.0,
            ftol: 1e-12,
            gtol: 1e-12,
            max_iterations: 200,
            max_damping: 1e16,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    /// Residual vector is (numerically) orthogonal to the Jacobian columns, or zero.
    Gradient,
    /// An accepted step improved the objective by less than `ftol` relative.
    ObjectiveDecrease,
    /// Every trial step failed to decrease the objective; the iterate sits at the rounding floor.
    Stagnation,
    MaxIterations,
    /// The initial point is infeasible.
    InvalidStart,
}

#[derive(Debug, Clone)]
pub struct LmReport {
    pub x: DVector<f64>,
    /// Sum of squared residuals at `x`.
    pub objective: f64,
    pub initial_objective: f64,
    pub iterations: usize,
    pub termination: Termination,
}

impl LmReport {
    pub fn converged(&self) -> bool {
        matches!(
            self.termination,
            Termination::Gradient | Termination::ObjectiveDecrease | Termination::Stagnation
        )
    }
}

fn scaled_gradient(jac: &DMatrix<f64>, r: &DVector<f64>) -> f64 {
    let rn = r.norm();
    if rn == 0.0 {
        return 0.0;
    }
    let g = jac.tr_mul(r);
    jac.column_iter()
        .zip(g.iter())
        .map(|(col, gi)| {
            let cn = col.norm();
            if cn == 0.0 {
                0.0
            } else {
                gi.abs() / (cn * rn)
            }
        })
        .fold(0.0, f64::max)
}

/// Minimizes the sum of squared residuals of `problem` starting from `x0`.
pub fn minimize<P: LeastSquaresProblem + ?Sized>(problem: &P, x0: DVector<f64>, cfg: &LmConfig) -> LmReport {
    let mut x = x0;
    let (mut r, mut jac) = match (problem.residuals(&x), problem.jacobian(&x)) {
        (Some(r), Some(j)) if r.iter().all(|v| v.is_finite()) => (r, j),
        _ => {
            return LmReport {
                x,
                objective: f64::INFINITY,
                initial_objective: f64::INFINITY,
                iterations: 0,
                termination: Termination::InvalidStart,
            }
        }
    };
    let mut f = r.norm_squared();
    let initial_objective = f;
    let mut mu = cfg.initial_damping;
    let n = x.len();

    for it in 0..cfg.max_iterations {
        if f == 0.0 || scaled_gradient(&jac, &r) <= cfg.gtol {
            return LmReport {
                x,
                objective: f,
                initial_objective,
                iterations: it,
                termination: Termination::Gradient,
            };
        }
        let jtj = jac.tr_mul(&jac);
        let g = jac.tr_mul(&r);
        let diag: Vec<f64> = (0..n).map(|i| jtj[(i, i)].max(1e-300)).collect();

        // Inner loop: raise the damping until a step decreases the objective.
        loop {
            let mut a = jtj.clone();
            for (i, d) in diag.iter().enumerate() {
                a[(i, i)] += mu * d;
            }
            let step = a.cholesky().map(|ch| ch.solve(&(-&g)));
            let accepted = step.and_then(|dx| {
                let trial = &x + &dx;
                let rt = problem.residuals(&trial)?;
                let ft = rt.norm_squared();
                (ft.is_finite() && ft < f).then_some((trial, rt, ft))
            });
            match accepted {
                Some((trial, rt, ft)) => {
                    let Some(jt) = problem.jacobian(&trial) else {
                        mu *= cfg.damping_increase;
                        if mu > cfg.max_damping {
                            return LmReport {
                                x,
                                objective: f,
                                initial_objective,
                                iterations: it + 1,
                                termination: Termination::Stagnation,
                            };
                        }
                        continue;
                    };
                    let rel = (f - ft) / f;
                    x = trial;
                    r = rt;
                    jac = jt;
                    f = ft;
                    mu = (mu / cfg.damping_decrease).max(1e-300);
                    if rel < cfg.ftol {
                        return LmReport {
                            x,
                            objective: f,
                            initial_objective,
                            iterations: it + 1,
                            termination: Termination::ObjectiveDecrease,
                        };
                    }
                    break;
                }
                None => {
                    mu *= cfg.damping_increase;
                    if mu > cfg.max_damping {
                        return LmReport {
                            x,
                            objective: f,
                            initial_objective,
                            iterations: it + 1,
                            termination: Termination::Stagnation,
                        };
                    }
                }
            }
        }
    }
    LmReport {
        x,
        objective: f,
        initial_objective,
        iterations: cfg.max_iterations,
        termination: Termination::MaxIterations,
    }
}
