//! Extended Kalman filter over `θ = (j0, jn, r_ohm)` with `jlim` as an exogenous input.
//!
//! The state model is linear, `θ_{k+1} = F θ_k + f`, with
//! `F = diag(exp(-k0 Δt), exp(kn Δt), 1)` and `f = (0, 0, k_ohm Δt)`.
//! Only the voltage observation is nonlinear.

use nalgebra::{Matrix3, RowVector3, Vector3};
use serde::{Deserialize, Serialize};

use crate::aging_laws::AgingLaws;
use crate::electrochem::{cell_voltage, PhysicalConstants, QuasiStaticParams};
use crate::error::{ensure, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransitionModel {
    pub k0: f64,
    pub kn: f64,
    pub k_ohm: f64,
    /// Step size in normalized time; `1 / t_max` for hourly steps.
    pub dt_norm: f64,
}

impl TransitionModel {
    pub fn from_laws(laws: &AgingLaws) -> Self {
        Self {
            k0: laws.k0,
            kn: laws.kn,
            k_ohm: laws.k_ohm,
            dt_norm: 1.0 / laws.t_max,
        }
    }

    pub fn f_matrix(&self) -> Matrix3<f64> {
        Matrix3::from_diagonal(&Vector3::new(
            (-self.k0 * self.dt_norm).exp(),
            (self.kn * self.dt_norm).exp(),
            1.0,
        ))
    }

    pub fn offset(&self) -> Vector3<f64> {
        Vector3::new(0.0, 0.0, self.k_ohm * self.dt_norm)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EkfState {
    /// `(j0, jn, r_ohm)`.
    pub theta: Vector3<f64>,
    pub p: Matrix3<f64>,
    /// Hours since the start of the record.
    pub k: usize,
}

impl EkfState {
    pub fn new(theta: Vector3<f64>, p: Matrix3<f64>) -> Self {
        Self { theta, p, k: 0 }
    }

    pub fn min_eigenvalue(&self) -> f64 {
        let sym = (self.p + self.p.transpose()) * 0.5;
        sym.symmetric_eigenvalues().min()
    }

    pub fn asymmetry(&self) -> f64 {
        (self.p - self.p.transpose()).abs().max()
    }
}

/// Filter noise and initialization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseConfig {
    /// Process covariance per hourly step.
    pub q: Matrix3<f64>,
    /// Measurement variance, V².
    pub r: f64,
    pub p0: Matrix3<f64>,
    pub theta0: Vector3<f64>,
}

/// Scale-relative noise levels from which a [`NoiseConfig`] is built.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseSettings {
    /// Measurement variance, V².
    pub r: f64,
    /// Process standard deviation per hour relative to `θ0`.
    pub q_rel: f64,
    /// Initial standard deviation relative to `θ0`.
    pub p0_rel: f64,
}

impl Default for NoiseSettings {
    fn default() -> Self {
        Self {
            r: 1e-8,
            q_rel: 1e-4,
            p0_rel: 1e-2,
        }
    }
}

impl NoiseSettings {
    pub fn validate(&self) -> Result<()> {
        ensure(self.r > 0.0 && self.r.is_finite(), || {
            format!("measurement variance r must be > 0, got {}", self.r)
        })?;
        ensure(self.q_rel >= 0.0 && self.q_rel.is_finite(), || {
            format!("q_rel must be >= 0, got {}", self.q_rel)
        })?;
        ensure(self.p0_rel >= 0.0 && self.p0_rel.is_finite(), || {
            format!("p0_rel must be >= 0, got {}", self.p0_rel)
        })
    }

    pub fn build(&self, theta0: Vector3<f64>) -> NoiseConfig {
        let diag = |rel: f64| Matrix3::from_diagonal(&theta0.map(|v| (rel * v).powi(2)));
        NoiseConfig {
            q: diag(self.q_rel),
            r: self.r,
            p0: diag(self.p0_rel),
            theta0,
        }
    }
}

impl NoiseConfig {
    pub fn validate(&self) -> Result<()> {
        ensure(self.r > 0.0, || {
            format!("measurement variance must be > 0, got {}", self.r)
        })?;
        for (name, m) in [("Q", &self.q), ("P0", &self.p0)] {
            let asym = (m - m.transpose()).abs().max();
            let min_eig = m.symmetric_eigenvalues().min();
            ensure(asym <= 1e-12 * (1.0 + m.abs().max()) && min_eig >= -1e-12, || {
                format!("{name} must be symmetric positive semidefinite")
            })?;
        }
        ensure(self.theta0.iter().all(|v| *v > 0.0), || {
            format!("theta0 components must be positive, got {:?}", self.theta0.as_slice())
        })
    }

    pub fn initial_state(&self) -> EkfState {
        EkfState::new(self.theta0, self.p0)
    }
}

/// Fixed inputs of the voltage observation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    pub constants: PhysicalConstants,
    pub beta: f64,
    /// Operating current density, A/cm².
    pub j: f64,
}

impl Observation {
    fn params(&self, theta: &Vector3<f64>, jlim: f64) -> QuasiStaticParams {
        QuasiStaticParams {
            j0: theta[0],
            jn: theta[1],
            beta: self.beta,
            jlim,
            r_ohm: theta[2],
        }
    }
}

/// Predicted cell voltage for state `theta` and limiting current density `jlim`.
pub fn observation(theta: &Vector3<f64>, jlim: f64, obs: &Observation) -> Result<f64> {
    if theta.iter().any(|v| !(*v > 0.0)) {
        return Err(Error::Domain(format!(
            "state must be positive, got {:?}",
            theta.as_slice()
        )));
    }
    cell_voltage(obs.j, &obs.params(theta, jlim), &obs.constants)
}

/// Gradient of [`observation`] with respect to `(j0, jn, r_ohm)`.
pub fn observation_jacobian(theta: &Vector3<f64>, jlim: f64, obs: &Observation) -> Result<RowVector3<f64>> {
    observation(theta, jlim, obs)?;
    let a = obs.constants.activation_prefactor();
    Ok(RowVector3::new(a / theta[0], -a / (obs.j + theta[1]), -obs.j))
}

pub fn predict(state: &EkfState, m: &TransitionModel, q: &Matrix3<f64>) -> EkfState {
    let f = m.f_matrix();
    let p = f * state.p * f.transpose() + q;
    EkfState {
        theta: f * state.theta + m.offset(),
        p: (p + p.transpose()) * 0.5,
        k: state.k + 1,
    }
}

/// Result of one measurement update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpdateOutcome {
    pub state: EkfState,
    /// Voltage predicted before the update, V.
    pub predicted: f64,
    pub innovation: f64,
    /// The observation was singular; `state` is the input state unchanged.
    pub rejected: bool,
}

/// Scalar-measurement update with the Joseph covariance form.
pub fn update(state: &EkfState, y: f64, jlim: f64, obs: &Observation, r: f64) -> UpdateOutcome {
    let reject = || UpdateOutcome {
        state: *state,
        predicted: f64::NAN,
        innovation: f64::NAN,
        rejected: true,
    };
    let (Ok(pred), Ok(h)) = (
        observation(&state.theta, jlim, obs),
        observation_jacobian(&state.theta, jlim, obs),
    ) else {
        return reject();
    };
    let innovation = y - pred;
    if !innovation.is_finite() {
        return reject();
    }
    let ph = state.p * h.transpose();
    let s = (h * ph)[0] + r;
    let k = ph / s;
    let ikh = Matrix3::identity() - k * h;
    let p = ikh * state.p * ikh.transpose() + k * k.transpose() * r;
    UpdateOutcome {
        state: EkfState {
            theta: state.theta + k * innovation,
            p: (p + p.transpose()) * 0.5,
            k: state.k,
        },
        predicted: pred,
        innovation,
        rejected: false,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub k: usize,
    /// Hours.
    pub t: f64,
    pub j0: f64,
    pub jn: f64,
    pub r_ohm: f64,
    pub predicted_v: f64,
    pub innovation: f64,
}

#[derive(Debug, Clone)]
pub struct FilterRun {
    pub trace: Vec<TraceRow>,
    pub final_state: EkfState,
    /// Hours whose update was rejected.
    pub rejected: Vec<usize>,
}

/// Alternates update and predict over hourly measurements; entry `k` is hour `k`.
///
/// Hour 0 is updated from the initial state, every later hour is predicted
/// from the previous one first.
pub fn run_filter(
    measurements: &[f64],
    jlim_series: &[f64],
    m: &TransitionModel,
    noise: &NoiseConfig,
    obs: &Observation,
) -> Result<FilterRun> {
    if measurements.len() != jlim_series.len() {
        return Err(Error::Invalid(format!(
            "{} voltage samples but {} jlim samples",
            measurements.len(),
            jlim_series.len()
        )));
    }
    ensure(!measurements.is_empty(), || "no measurements to filter".into())?;
    noise.validate()?;
    ensure(m.dt_norm > 0.0, || format!("dt_norm must be > 0, got {}", m.dt_norm))?;

    let mut state = noise.initial_state();
    let mut trace = Vec::with_capacity(measurements.len());
    let mut rejected = Vec::new();
    for (k, (&y, &jlim)) in measurements.iter().zip(jlim_series).enumerate() {
        if k > 0 {
            state = predict(&state, m, &noise.q);
        }
        let out = update(&state, y, jlim, obs, noise.r);
        if out.rejected {
            rejected.push(k);
        }
        state = out.state;
        trace.push(TraceRow {
            k,
            t: k as f64,
            j0: state.theta[0],
            jn: state.theta[1],
            r_ohm: state.theta[2],
            predicted_v: out.predicted,
            innovation: out.innovation,
        });
    }
    Ok(FilterRun {
        trace,
        final_state: state,
        rejected,
    })
}

/// Prediction-only state path: entry `i` is the state `i + 1` steps after `state`.
pub fn propagate(state: &EkfState, m: &TransitionModel, q: &Matrix3<f64>, steps: usize) -> Vec<EkfState> {
    let mut out = Vec::with_capacity(steps);
    let mut s = *state;
    for _ in 0..steps {
        s = predict(&s, m, q);
        out.push(s);
    }
    out
}
