//! Noiseless synthetic aging database with a planted `jlim` breakpoint.

use serde::{Deserialize, Serialize};

use crate::aging_laws::{normalize_time, JlimModel, DEFAULT_T_MAX};
use crate::electrochem::{cell_voltage, OperatingConditions, PhysicalConstants, QuasiStaticParams};
use crate::error::{ensure, Error, Result};
use crate::identification::{CurvePoint, PolarizationCurve};
use crate::scenario::{extend_p2, JlimCurve, Quadratic};

/// Planted limiting-current-density trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PlantedJlim {
    /// Quadratic `j_start + slope τ + curvature τ²` in normalized time `τ`,
    /// accelerated by `lambda` after `t_c` hours.
    Accelerated {
        j_start: f64,
        slope: f64,
        curvature: f64,
        /// Breakpoint, h.
        t_c: f64,
        lambda: f64,
    },
    /// Double-exponential law; the coefficients are in normalized time.
    Law(JlimModel),
}

impl PlantedJlim {
    /// `jlim` at normalized time `tn`.
    pub fn eval(&self, tn: f64, t_max: f64) -> f64 {
        match *self {
            PlantedJlim::Accelerated {
                j_start,
                slope,
                curvature,
                t_c,
                lambda,
            } => {
                let q = Quadratic {
                    t0: 0.0,
                    c0: j_start,
                    c1: slope,
                    c2: curvature,
                };
                let tc = t_c / t_max;
                if tn <= tc {
                    q.value(tn)
                } else {
                    extend_p2(&q, tc, lambda, tn)
                }
            }
            PlantedJlim::Law(m) => m.eval(tn),
        }
    }

    /// Start of the accelerated regime, h.
    pub fn breakpoint(&self, t_max: f64) -> Option<f64> {
        match *self {
            PlantedJlim::Accelerated { t_c, .. } => Some(t_c),
            PlantedJlim::Law(JlimModel::Model2 { t_c, .. }) => Some(t_c * t_max),
            PlantedJlim::Law(JlimModel::Model1 { .. }) => None,
        }
    }
}

/// Planted laws and generation settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GroundTruth {
    pub a0: f64,
    pub k0: f64,
    pub an: f64,
    pub kn: f64,
    pub r_ohm0: f64,
    pub k_ohm: f64,
    pub beta: f64,
    pub jlim: PlantedJlim,
    /// Normalization horizon of the laws, h.
    pub t_max: f64,
    pub constants: PhysicalConstants,
    pub conditions: OperatingConditions,
    /// Characterization cadence, h.
    pub cadence: f64,
    /// Last hour of the record.
    pub horizon: usize,
    /// Operating current density, A/cm².
    pub j_op: f64,
    pub grid_points: usize,
    /// Lowest current density of each polarization curve, A/cm².
    pub grid_min: f64,
    /// Highest current density as a fraction of `jlim(t)`.
    pub grid_max_fraction: f64,
}

impl Default for GroundTruth {
    fn default() -> Self {
        Self {
            a0: 1e-6,
            k0: 0.8,
            an: 1e-3,
            kn: 1.5,
            r_ohm0: 0.08,
            k_ohm: 0.02,
            beta: 0.25,
            jlim: PlantedJlim::Accelerated {
                j_start: 1.8,
                slope: -0.002,
                curvature: -0.39,
                t_c: 30_000.0,
                lambda: 1.5,
            },
            t_max: DEFAULT_T_MAX,
            constants: PhysicalConstants::default(),
            conditions: OperatingConditions::default(),
            cadence: 500.0,
            horizon: 38_072,
            j_op: 1.0,
            grid_points: 30,
            grid_min: 0.02,
            grid_max_fraction: 0.97,
        }
    }
}

impl GroundTruth {
    /// True parameters at `t` hours.
    pub fn params_at(&self, t: f64) -> QuasiStaticParams {
        let tn = normalize_time(t, self.t_max);
        QuasiStaticParams {
            j0: self.a0 * (-self.k0 * tn).exp(),
            jn: self.an * (self.kn * tn).exp(),
            beta: self.beta,
            jlim: self.jlim.eval(tn, self.t_max),
            r_ohm: self.r_ohm0 + self.k_ohm * tn,
        }
    }

    /// Hourly true `jlim` on `[0, horizon]`.
    pub fn jlim_hourly(&self) -> Vec<f64> {
        (0..=self.horizon).map(|h| self.params_at(h as f64).jlim).collect()
    }

    /// Characterization times `0, cadence, 2 cadence, …` up to the horizon.
    pub fn characterization_times(&self) -> Vec<f64> {
        let n = (self.horizon as f64 / self.cadence).floor() as usize;
        (0..=n).map(|i| i as f64 * self.cadence).collect()
    }

    pub fn validate(&self) -> Result<()> {
        self.constants.validate()?;
        self.conditions.validate()?;
        ensure(
            self.a0 > 0.0 && self.an > 0.0 && self.r_ohm0 > 0.0 && self.beta > 0.0,
            || "a0, an, r_ohm0 and beta must be positive".into(),
        )?;
        ensure([self.k0, self.kn, self.k_ohm].iter().all(|k| k.is_finite()), || {
            "law rates must be finite".into()
        })?;
        ensure(self.t_max > 0.0 && self.cadence > 0.0 && self.horizon > 0, || {
            "t_max, cadence and horizon must be positive".into()
        })?;
        ensure(self.j_op > 0.0, || format!("j_op must be positive, got {}", self.j_op))?;
        ensure(self.grid_points >= 5, || {
            format!("grid_points must be at least 5, got {}", self.grid_points)
        })?;
        ensure(
            self.grid_min >= 0.0 && self.grid_max_fraction > 0.0 && self.grid_max_fraction < 1.0,
            || "grid must satisfy grid_min >= 0 and 0 < grid_max_fraction < 1".into(),
        )?;
        if let PlantedJlim::Law(m) = self.jlim {
            let laws = crate::aging_laws::AgingLaws {
                a0: self.a0,
                k0: self.k0,
                an: self.an,
                kn: self.kn,
                r_ohm0: self.r_ohm0,
                k_ohm: self.k_ohm,
                jlim_model: m,
                t_max: self.t_max,
            };
            laws.validate()?;
        }
        if let PlantedJlim::Accelerated { lambda, .. } = self.jlim {
            ensure(lambda >= 1.0, || {
                format!("planted lambda must be at least 1, got {lambda}")
            })?;
        }
        if let Some(t_c) = self.jlim.breakpoint(self.t_max) {
            ensure(t_c > 0.0 && t_c < self.horizon as f64, || {
                format!(
                    "planted breakpoint t_c = {t_c} h must lie strictly inside the horizon (0, {}) h",
                    self.horizon
                )
            })?;
        }
        if let Some(h) = (0..=self.horizon).find(|&h| {
            let jl = self.params_at(h as f64).jlim;
            !(jl > self.j_op) || jl * self.grid_max_fraction <= self.grid_min
        }) {
            return Err(Error::Invalid(format!(
                "planted jlim falls to the operating current density at t = {h} h"
            )));
        }
        Ok(())
    }
}

/// Polarization curves every `cadence` hours and the hourly voltage at `j_op`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Database {
    pub curves: Vec<PolarizationCurve>,
    /// Entry `k` is the voltage at hour `k`, V.
    pub voltage: Vec<f64>,
}

impl Database {
    /// Copy restricted to `[0, t_n]`.
    pub fn truncated(&self, t_n: usize) -> Result<Database> {
        if t_n >= self.voltage.len() {
            return Err(Error::Coverage(format!(
                "t_n = {t_n} h is beyond the last voltage sample at {} h",
                self.voltage.len().saturating_sub(1)
            )));
        }
        Ok(Database {
            curves: self.curves.iter().filter(|c| c.t <= t_n as f64).cloned().collect(),
            voltage: self.voltage[..=t_n].to_vec(),
        })
    }

    /// Last hour with a voltage sample.
    pub fn last_hour(&self) -> Option<usize> {
        self.voltage.len().checked_sub(1)
    }
}

fn curve_at(gt: &GroundTruth, t: f64) -> Result<PolarizationCurve> {
    let p = gt.params_at(t);
    let hi = gt.grid_max_fraction * p.jlim;
    let n = gt.grid_points;
    let points = (0..n)
        .map(|i| {
            let j = gt.grid_min + (hi - gt.grid_min) * i as f64 / (n - 1) as f64;
            Ok(CurvePoint {
                j,
                u: cell_voltage(j, &p, &gt.constants)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PolarizationCurve {
        t,
        r_ohm_profile: vec![(0.0, p.r_ohm), (p.jlim, p.r_ohm)],
        points,
    })
}

/// Generates the noiseless database; `seed` is reserved for noise extensions.
pub fn generate_database(gt: &GroundTruth, _seed: u64) -> Result<Database> {
    gt.validate()?;
    let curves = gt
        .characterization_times()
        .into_iter()
        .map(|t| curve_at(gt, t))
        .collect::<Result<Vec<_>>>()?;
    let voltage = (0..=gt.horizon)
        .map(|h| cell_voltage(gt.j_op, &gt.params_at(h as f64), &gt.constants))
        .collect::<Result<Vec<_>>>()?;
    Ok(Database { curves, voltage })
}
