//! Quasi-static voltage model of a PEM fuel cell.
//!
//! The cell voltage at current density `j` is the reversible voltage minus
//! three irreversible losses:
//!
//! ```text
//! U(j)     = E_rev - η_act(j) - η_diff(j) - η_ohm(j)
//! η_act    = RT / (2αF) · ln((j + jn) / j0)
//! η_diff   = RT / (2βF) · |ln(1 - j / jlim)|
//! η_ohm    = r_ohm · j
//! ```
//!
//! Current densities are in A/cm², resistances in Ω·cm², voltages in V.

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};

/// Offset between degrees Celsius and Kelvin.
pub const KELVIN_OFFSET: f64 = 273.15;

/// Converts a temperature from °C to K.
pub fn celsius_to_kelvin(celsius: f64) -> f64 {
    celsius + KELVIN_OFFSET
}

/// Constants of the voltage model that are not identified from data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhysicalConstants {
    /// Faraday constant, C/mol.
    pub faraday: f64,
    /// Universal gas constant, J/(K·mol).
    pub gas_constant: f64,
    /// Cell temperature, K.
    pub temperature: f64,
    /// Charge transfer coefficient.
    pub alpha: f64,
    /// Reversible (Nernst) voltage, V.
    pub e_rev: f64,
}

impl Default for PhysicalConstants {
    fn default() -> Self {
        Self {
            faraday: 96485.33,
            gas_constant: 8.314,
            temperature: celsius_to_kelvin(75.0),
            alpha: 0.5,
            e_rev: 1.18,
        }
    }
}

impl PhysicalConstants {
    /// Constants at `temperature` (K) with reversible voltage `e_rev` (V), other fields default.
    pub fn new(temperature: f64, e_rev: f64) -> Result<Self> {
        let c = Self {
            temperature,
            e_rev,
            ..Self::default()
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        ensure(self.faraday > 0.0, || {
            format!("faraday must be > 0, got {}", self.faraday)
        })?;
        ensure(self.gas_constant > 0.0, || {
            format!("gas_constant must be > 0, got {}", self.gas_constant)
        })?;
        ensure(self.temperature > 0.0, || {
            format!("temperature must be > 0 K, got {}", self.temperature)
        })?;
        ensure(self.alpha > 0.0 && self.alpha <= 1.0, || {
            format!("alpha must lie in (0, 1], got {}", self.alpha)
        })?;
        ensure(self.e_rev > 0.0, || format!("e_rev must be > 0, got {}", self.e_rev))
    }

    /// RT/F, V.
    pub fn thermal_voltage(&self) -> f64 {
        self.gas_constant * self.temperature / self.faraday
    }

    /// Tafel prefactor RT/(2αF) of the activation loss, V.
    pub fn activation_prefactor(&self) -> f64 {
        self.thermal_voltage() / (2.0 * self.alpha)
    }

    /// Prefactor RT/(2βF) of the diffusion loss, V.
    pub fn diffusion_prefactor(&self, beta: f64) -> f64 {
        self.thermal_voltage() / (2.0 * beta)
    }
}

/// Parameter vector of the quasi-static model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuasiStaticParams {
    /// Exchange current density, A/cm².
    pub j0: f64,
    /// Parasitic current density, A/cm².
    pub jn: f64,
    /// Diffusion coefficient.
    pub beta: f64,
    /// Limiting current density, A/cm².
    pub jlim: f64,
    /// Ohmic resistance density, Ω·cm².
    pub r_ohm: f64,
}

impl QuasiStaticParams {
    pub fn validate(&self) -> Result<()> {
        let ok = self.j0 > 0.0
            && self.jn >= 0.0
            && self.beta > 0.0
            && self.jlim > 0.0
            && self.r_ohm >= 0.0
            && [self.j0, self.jn, self.beta, self.jlim, self.r_ohm]
                .iter()
                .all(|v| v.is_finite());
        ensure(ok, || format!("invalid quasi-static parameters {self:?}"))
    }
}

/// Fixed operating conditions of an aging test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OperatingConditions {
    /// °C.
    pub temperature: f64,
    /// bara.
    pub pressure: f64,
    /// Relative humidity on the air side, %.
    pub rh_air: f64,
    pub stoich_air: f64,
    /// Relative humidity on the hydrogen side, %.
    pub rh_h2: f64,
    pub stoich_h2: f64,
}

impl Default for OperatingConditions {
    fn default() -> Self {
        Self {
            temperature: 75.0,
            pressure: 2.0,
            rh_air: 30.0,
            stoich_air: 2.5,
            rh_h2: 50.0,
            stoich_h2: 1.5,
        }
    }
}

impl OperatingConditions {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            self.temperature,
            self.pressure,
            self.rh_air,
            self.stoich_air,
            self.rh_h2,
            self.stoich_h2,
        ]
        .iter()
        .all(|v| *v > 0.0 && v.is_finite());
        ensure(positive, || format!("operating conditions must be positive: {self:?}"))?;
        ensure(self.rh_air <= 100.0 && self.rh_h2 <= 100.0, || {
            format!(
                "relative humidities must lie in (0, 100], got air {} and h2 {}",
                self.rh_air, self.rh_h2
            )
        })
    }

    pub fn temperature_kelvin(&self) -> f64 {
        celsius_to_kelvin(self.temperature)
    }
}

/// The three voltage losses at one current density.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Losses {
    pub activation: f64,
    pub diffusion: f64,
    pub ohmic: f64,
}

impl Losses {
    pub fn total(&self) -> f64 {
        self.activation + self.diffusion + self.ohmic
    }
}

/// Activation, diffusion and ohmic losses at current density `j`.
pub fn loss_components(j: f64, p: &QuasiStaticParams, c: &PhysicalConstants) -> Result<Losses> {
    if !(j >= 0.0) {
        return Err(Error::Domain(format!("current density must be >= 0, got {j}")));
    }
    if j >= p.jlim {
        return Err(Error::Domain(format!(
            "current density {j} reaches the limiting current density {}",
            p.jlim
        )));
    }
    if j + p.jn <= 0.0 {
        return Err(Error::Domain(format!("j + jn must be > 0, got {}", j + p.jn)));
    }
    Ok(losses_unchecked(j, p, c))
}

/// Loss evaluation without domain checks; callers guarantee `0 <= j < jlim`.
#[inline]
pub(crate) fn losses_unchecked(j: f64, p: &QuasiStaticParams, c: &PhysicalConstants) -> Losses {
    Losses {
        activation: c.activation_prefactor() * ((j + p.jn) / p.j0).ln(),
        diffusion: c.diffusion_prefactor(p.beta) * (-j / p.jlim).ln_1p().abs(),
        ohmic: p.r_ohm * j,
    }
}

/// Cell voltage at current density `j`.
pub fn cell_voltage(j: f64, p: &QuasiStaticParams, c: &PhysicalConstants) -> Result<f64> {
    let l = loss_components(j, p, c)?;
    Ok(c.e_rev - l.activation - l.diffusion - l.ohmic)
}
