//! Identification of the quasi-static parameters from polarization curves.
//!
//! `j0`, `jn`, `β` and `jlim` are estimated by Levenberg–Marquardt on the
//! log-transformed parameters; the ohmic resistance at every point comes from
//! the measured resistance profile and is not a free parameter.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::electrochem::{losses_unchecked, PhysicalConstants, QuasiStaticParams};
use crate::error::{Error, Result};
use crate::lm::{self, LeastSquaresProblem, LmConfig};

/// Current density at which the scalar `r_ohm` of a fit result is reported, A/cm².
pub const REFERENCE_CURRENT_DENSITY: f64 = 1.0;

/// Floor applied to `jn` before taking its logarithm.
const JN_FLOOR: f64 = 1e-30;

const MIN_POINTS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    /// Current density, A/cm².
    pub j: f64,
    /// Cell voltage, V.
    pub u: f64,
}

/// One polarization characterization with its ohmic resistance profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolarizationCurve {
    /// Characterization time, h.
    pub t: f64,
    pub points: Vec<CurvePoint>,
    /// `(j, r_ohm)` pairs, Ω·cm², sorted by `j`.
    pub r_ohm_profile: Vec<(f64, f64)>,
}

impl PolarizationCurve {
    pub fn validate(&self) -> Result<()> {
        if self.points.is_empty() || self.r_ohm_profile.is_empty() {
            return Err(Error::Invalid(format!(
                "curve at t = {} h has no points or no resistance profile",
                self.t
            )));
        }
        if self.points.windows(2).any(|w| !(w[1].j > w[0].j)) {
            return Err(Error::Invalid(format!(
                "curve at t = {} h: current densities must be strictly increasing",
                self.t
            )));
        }
        if self.points.iter().any(|p| !(p.u > 0.0) || !(p.j >= 0.0)) {
            return Err(Error::Invalid(format!(
                "curve at t = {} h: voltages must be > 0 and current densities >= 0",
                self.t
            )));
        }
        if self.r_ohm_profile.windows(2).any(|w| !(w[1].0 > w[0].0)) {
            return Err(Error::Invalid(format!(
                "curve at t = {} h: resistance profile must be sorted by current density",
                self.t
            )));
        }
        let (lo, hi) = (self.points[0].j, self.points[self.points.len() - 1].j);
        let (plo, phi) = (
            self.r_ohm_profile[0].0,
            self.r_ohm_profile[self.r_ohm_profile.len() - 1].0,
        );
        if plo > lo || phi < hi {
            return Err(Error::Coverage(format!(
                "curve at t = {} h: resistance profile [{plo}, {phi}] does not cover [{lo}, {hi}]",
                self.t
            )));
        }
        Ok(())
    }

    /// Ohmic resistance at `j`, linear interpolation clamped at the profile ends.
    pub fn r_ohm_at(&self, j: f64) -> f64 {
        interpolate_clamped(&self.r_ohm_profile, j)
    }

    pub fn max_current_density(&self) -> f64 {
        self.points.last().map_or(0.0, |p| p.j)
    }

    /// Default starting point: `j0 = 1e-6`, `jn = 1e-3`, `β = 0.3`, `jlim = 1.2 · max j`.
    pub fn default_initial_guess(&self) -> QuasiStaticParams {
        QuasiStaticParams {
            j0: 1e-6,
            jn: 1e-3,
            beta: 0.3,
            jlim: 1.2 * self.max_current_density(),
            r_ohm: self.r_ohm_at(REFERENCE_CURRENT_DENSITY),
        }
    }
}

pub(crate) fn interpolate_clamped(table: &[(f64, f64)], x: f64) -> f64 {
    match table {
        [] => f64::NAN,
        [(_, y)] => *y,
        _ => {
            if x <= table[0].0 {
                return table[0].1;
            }
            let last = table[table.len() - 1];
            if x >= last.0 {
                return last.1;
            }
            let i = table.partition_point(|(t, _)| *t <= x);
            let (x0, y0) = table[i - 1];
            let (x1, y1) = table[i];
            y0 + (y1 - y0) * (x - x0) / (x1 - x0)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub params: QuasiStaticParams,
    /// Root mean square voltage residual, V.
    pub rmse: f64,
    pub n_iterations: usize,
    pub converged: bool,
}

struct CurveProblem<'a> {
    j: Vec<f64>,
    u: Vec<f64>,
    r: Vec<f64>,
    c: &'a PhysicalConstants,
    /// `Some(beta)` when β is held fixed.
    fixed_beta: Option<f64>,
}

impl CurveProblem<'_> {
    fn unpack(&self, x: &DVector<f64>) -> (f64, f64, f64, f64) {
        match self.fixed_beta {
            Some(beta) => (x[0].exp(), x[1].exp(), beta, x[2].exp()),
            None => (x[0].exp(), x[1].exp(), x[2].exp(), x[3].exp()),
        }
    }

    fn params_at(&self, x: &DVector<f64>, i: usize) -> Option<QuasiStaticParams> {
        let (j0, jn, beta, jlim) = self.unpack(x);
        let ok = j0.is_finite() && jn.is_finite() && beta.is_finite() && jlim.is_finite();
        (ok && self.j[i] < jlim && self.j[i] + jn > 0.0).then_some(QuasiStaticParams {
            j0,
            jn,
            beta,
            jlim,
            r_ohm: self.r[i],
        })
    }
}

impl LeastSquaresProblem for CurveProblem<'_> {
    fn residuals(&self, x: &DVector<f64>) -> Option<DVector<f64>> {
        let mut out = DVector::zeros(self.j.len());
        for i in 0..self.j.len() {
            let p = self.params_at(x, i)?;
            let l = losses_unchecked(self.j[i], &p, self.c);
            out[i] = self.c.e_rev - l.total() - self.u[i];
        }
        Some(out)
    }

    fn jacobian(&self, x: &DVector<f64>) -> Option<DMatrix<f64>> {
        let ncol = x.len();
        let mut jac = DMatrix::zeros(self.j.len(), ncol);
        let act = self.c.activation_prefactor();
        for i in 0..self.j.len() {
            let p = self.params_at(x, i)?;
            let j = self.j[i];
            let diff_pref = self.c.diffusion_prefactor(p.beta);
            // dU/dln(j0), dU/dln(jn)
            jac[(i, 0)] = act;
            jac[(i, 1)] = -act * p.jn / (j + p.jn);
            let d_lnjlim = diff_pref * j / (p.jlim - j);
            match self.fixed_beta {
                Some(_) => jac[(i, 2)] = d_lnjlim,
                None => {
                    // dU/dln(β) = +η_diff
                    jac[(i, 2)] = diff_pref * (-j / p.jlim).ln_1p().abs();
                    jac[(i, 3)] = d_lnjlim;
                }
            }
        }
        Some(jac)
    }
}

/// Fits one polarization curve. With `free_beta == false`, β stays at `init.beta`.
pub fn fit_single_curve(
    curve: &PolarizationCurve,
    c: &PhysicalConstants,
    init: &QuasiStaticParams,
    free_beta: bool,
) -> Result<FitResult> {
    fit_single_curve_with(curve, c, init, free_beta, &LmConfig::default())
}

pub fn fit_single_curve_with(
    curve: &PolarizationCurve,
    c: &PhysicalConstants,
    init: &QuasiStaticParams,
    free_beta: bool,
    lm_cfg: &LmConfig,
) -> Result<FitResult> {
    curve.validate()?;
    init.validate()?;
    let n_free = if free_beta { 4 } else { 3 };
    let needed = MIN_POINTS.max(n_free);
    if curve.points.len() < needed {
        return Err(Error::InsufficientData {
            what: "polarization curve points",
            needed,
            got: curve.points.len(),
        });
    }
    let j: Vec<f64> = curve.points.iter().map(|p| p.j).collect();
    let u: Vec<f64> = curve.points.iter().map(|p| p.u).collect();
    let r: Vec<f64> = j.iter().map(|&j| curve.r_ohm_at(j)).collect();
    let jlim0 = init.jlim.max(1.0001 * curve.max_current_density());
    let problem = CurveProblem {
        j,
        u,
        r,
        c,
        fixed_beta: (!free_beta).then_some(init.beta),
    };
    let mut x0 = vec![init.j0.ln(), init.jn.max(JN_FLOOR).ln()];
    if free_beta {
        x0.push(init.beta.ln());
    }
    x0.push(jlim0.ln());

    let rep = lm::minimize(&problem, DVector::from_vec(x0), lm_cfg);
    if rep.objective.is_infinite() {
        return Err(Error::Numerical(format!(
            "initial guess is infeasible for curve at t = {} h",
            curve.t
        )));
    }
    let (j0, jn, beta, jlim) = problem.unpack(&rep.x);
    let params = QuasiStaticParams {
        j0,
        jn,
        beta,
        jlim,
        r_ohm: curve.r_ohm_at(REFERENCE_CURRENT_DENSITY),
    };
    Ok(FitResult {
        params,
        rmse: (rep.objective / problem.j.len() as f64).sqrt(),
        n_iterations: rep.iterations,
        converged: rep.converged(),
    })
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Two-stage identification with one diffusion coefficient shared by all curves.
///
/// Stage one fits every curve with β free; stage two fixes β to the median of
/// the stage-one values and refits `j0`, `jn` and `jlim`. Curves are processed
/// in parallel; results keep the input order.
pub fn fit_curve_set(curves: &[PolarizationCurve], c: &PhysicalConstants) -> Result<Vec<FitResult>> {
    if curves.is_empty() {
        return Err(Error::InsufficientData {
            what: "polarization curves",
            needed: 1,
            got: 0,
        });
    }
    let stage1: Vec<FitResult> = curves
        .par_iter()
        .map(|curve| fit_single_curve(curve, c, &curve.default_initial_guess(), true))
        .collect::<Result<_>>()?;
    if curves.len() == 1 {
        return Ok(stage1);
    }
    let beta = median(stage1.iter().map(|f| f.params.beta).collect());
    curves
        .par_iter()
        .zip(stage1.par_iter())
        .map(|(curve, first)| {
            let init = QuasiStaticParams { beta, ..first.params };
            fit_single_curve(curve, c, &init, false)
        })
        .collect()
}

/// Root mean square difference between two equally long series.
pub fn rmse(model_u: &[f64], data_u: &[f64]) -> Result<f64> {
    if model_u.len() != data_u.len() {
        return Err(Error::Invalid(format!(
            "length mismatch: {} vs {}",
            model_u.len(),
            data_u.len()
        )));
    }
    if model_u.is_empty() {
        return Err(Error::InsufficientData {
            what: "rmse samples",
            needed: 1,
            got: 0,
        });
    }
    let ss: f64 = model_u.iter().zip(data_u).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok((ss / model_u.len() as f64).sqrt())
}
