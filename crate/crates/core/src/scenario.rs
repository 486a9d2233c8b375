//! Monte Carlo scenarios for the future limiting current density.
//!
//! Each scenario draws a breakpoint `t_c` and an acceleration factor `λ`,
//! continues the learning curve with a quadratic `P1` up to `t_c` and with the
//! accelerated extension `P2` afterwards.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::changepoint::{ChangeDetection, ConstrainedSpline, Taylor2, DEFAULT_LAMBDA0, DEFAULT_TAU};
use crate::error::{ensure, Error, Result};

/// Attempts per scenario before a singular `P1` aborts generation.
pub const MAX_RESAMPLES: usize = 100;

/// Inverse CDF of the exponential distribution with scale `mu` truncated to `[t_n, t_max]`.
///
/// Maps `u = 0` to `t_n` and `u = 1` to `t_max` exactly; strictly increasing in between.
pub fn sample_truncated_exponential(u: f64, mu: f64, t_n: f64, t_max: f64) -> f64 {
    if u <= 0.0 {
        return t_n;
    }
    if u >= 1.0 {
        return t_max;
    }
    let t = t_n - mu * ((-(t_max - t_n) / mu).exp_m1() * u).ln_1p();
    t.clamp(t_n, t_max)
}

/// CDF of the truncated exponential on `[t_n, t_max]`.
pub fn truncated_exponential_cdf(t: f64, mu: f64, t_n: f64, t_max: f64) -> f64 {
    if t <= t_n {
        0.0
    } else if t >= t_max {
        1.0
    } else {
        (-(t - t_n) / mu).exp_m1() / (-(t_max - t_n) / mu).exp_m1()
    }
}

/// Pareto deviate with unit location: `u^(-1/s)`.
pub fn sample_pareto(u: f64, s: f64) -> Result<f64> {
    ensure(u > 0.0 && u <= 1.0, || {
        format!("pareto uniform must lie in (0, 1], got {u}")
    })?;
    ensure(s > 0.0, || format!("pareto shape must be positive, got {s}"))?;
    Ok(u.powf(-1.0 / s))
}

/// CDF of the unit-location Pareto distribution with shape `s`.
pub fn pareto_cdf(x: f64, s: f64) -> f64 {
    if x <= 1.0 {
        0.0
    } else {
        1.0 - x.powf(-s)
    }
}

/// A curve with value and slope, usable as the base of an accelerated extension.
pub trait JlimCurve {
    fn value(&self, t: f64) -> f64;
    fn derivative(&self, t: f64) -> f64;
}

impl JlimCurve for Taylor2 {
    fn value(&self, t: f64) -> f64 {
        self.eval(t)
    }
    fn derivative(&self, t: f64) -> f64 {
        Taylor2::derivative(self, t)
    }
}

/// Quadratic `c0 + c1 (t - t0) + c2 (t - t0)²`.
///
/// The centred form keeps the coefficients well scaled for `t` in hours.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quadratic {
    pub t0: f64,
    pub c0: f64,
    pub c1: f64,
    pub c2: f64,
}

impl Quadratic {
    /// Coefficients `(a, b, c)` of `a t² + b t + c`.
    pub fn global(&self) -> (f64, f64, f64) {
        let Quadratic { t0, c0, c1, c2 } = *self;
        (c2, c1 - 2.0 * c2 * t0, c0 - c1 * t0 + c2 * t0 * t0)
    }

    pub fn second_derivative(&self) -> f64 {
        2.0 * self.c2
    }
}

impl JlimCurve for Quadratic {
    fn value(&self, t: f64) -> f64 {
        let x = t - self.t0;
        self.c0 + x * (self.c1 + x * self.c2)
    }
    fn derivative(&self, t: f64) -> f64 {
        self.c1 + 2.0 * self.c2 * (t - self.t0)
    }
}

/// Quadratic continuation of the learning curve from `(t_n, jlim_n, slope_n)`
/// whose short-run decrease over `[t_c, t_c + τ]` is `λ0` times the long-run
/// decrease from `jlim_0` over `[0, t_c]`.
pub fn build_p1(
    t_n: f64,
    jlim_n: f64,
    slope_n: f64,
    jlim_0: f64,
    t_c: f64,
    tau: f64,
    lambda0: f64,
) -> Result<Quadratic> {
    let d = t_c - t_n;
    let den = lambda0 * d * d - t_c * (2.0 * d + tau);
    let num = lambda0 * (jlim_0 - slope_n * d - jlim_n) + slope_n * t_c;
    let scale = lambda0 * d * d + t_c * (2.0 * d + tau).abs();
    if !(den.abs() > 1e-12 * scale) || !den.is_finite() {
        return Err(Error::Numerical(format!(
            "P1 system is singular for t_c = {t_c} h (t_n = {t_n} h)"
        )));
    }
    Ok(Quadratic {
        t0: t_n,
        c0: jlim_n,
        c1: slope_n,
        c2: num / den,
    })
}

/// Accelerated extension of `p1` beyond `t_c`:
/// `(1 - λ) P1(t_c) + λ P1(t) + (1 - λ) P1'(t_c) (t - t_c)`.
pub fn extend_p2<C: JlimCurve + ?Sized>(p1: &C, t_c: f64, lambda: f64, t: f64) -> f64 {
    let (v, d) = (p1.value(t_c), p1.derivative(t_c));
    (1.0 - lambda) * v + lambda * p1.value(t) + (1.0 - lambda) * d * (t - t_c)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    /// Scale of the breakpoint distribution, h.
    pub mu: f64,
    /// Shape of the acceleration-factor distribution.
    pub s: f64,
    pub n_scenarios: usize,
    /// End of the prediction horizon, h.
    pub t_max: f64,
    pub tau: f64,
    pub lambda0: f64,
    pub seed: u64,
    /// Trajectories are held at this value once they reach it, A/cm².
    pub jlim_floor: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            mu: 10_000.0,
            s: 3.0,
            n_scenarios: 500,
            t_max: 38_000.0,
            tau: DEFAULT_TAU,
            lambda0: DEFAULT_LAMBDA0,
            seed: 42,
            jlim_floor: 1.05,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        ensure(self.mu > 0.0 && self.mu.is_finite(), || {
            format!("mu must be positive, got {}", self.mu)
        })?;
        ensure(self.s > 0.0 && self.s.is_finite(), || {
            format!("s must be positive, got {}", self.s)
        })?;
        ensure(self.n_scenarios >= 1, || "n_scenarios must be at least 1".into())?;
        ensure(self.t_max > 0.0 && self.t_max.fract() == 0.0, || {
            format!("t_max must be a positive whole number of hours, got {}", self.t_max)
        })?;
        ensure(self.tau >= 1.0 && self.tau.fract() == 0.0, || {
            format!("tau must be a positive whole number of hours, got {}", self.tau)
        })?;
        ensure(self.lambda0 > 0.0, || {
            format!("lambda0 must be positive, got {}", self.lambda0)
        })?;
        ensure(self.jlim_floor > 0.0, || {
            format!("jlim_floor must be positive, got {}", self.jlim_floor)
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioCase {
    /// No breakpoint in the learning window; `t_c` is sampled.
    Undetected,
    /// The breakpoint was detected before `t_n`; only `λ` is sampled.
    Detected,
}

/// The curve accelerated after the pivot time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BaseCurve {
    Quadratic(Quadratic),
    /// Quadratic model of the learning spline at `t_n`, curvature averaged over the last interval.
    Taylor(Taylor2),
}

impl JlimCurve for BaseCurve {
    fn value(&self, t: f64) -> f64 {
        match self {
            BaseCurve::Quadratic(q) => q.value(t),
            BaseCurve::Taylor(q) => JlimCurve::value(q, t),
        }
    }
    fn derivative(&self, t: f64) -> f64 {
        match self {
            BaseCurve::Quadratic(q) => q.derivative(t),
            BaseCurve::Taylor(q) => JlimCurve::derivative(q, t),
        }
    }
}

/// One future `jlim` trajectory on `(t_n, t_max]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JlimScenario {
    pub index: usize,
    pub case: ScenarioCase,
    /// Breakpoint, h. Sampled in [`ScenarioCase::Undetected`], detected otherwise.
    pub t_c: f64,
    pub lambda: f64,
    pub base: BaseCurve,
    /// Acceleration starts after this time: `t_c` or `t_n`.
    pub pivot: f64,
    pub t_n: f64,
    pub t_max: f64,
    pub floor: f64,
    /// First hour at which the floor is active.
    pub floor_from: Option<f64>,
}

impl JlimScenario {
    #[allow(clippy::too_many_arguments)]
    fn new(
        index: usize,
        case: ScenarioCase,
        t_c: f64,
        lambda: f64,
        base: BaseCurve,
        pivot: f64,
        t_n: f64,
        cfg: &ScenarioConfig,
    ) -> Self {
        let mut sc = Self {
            index,
            case,
            t_c,
            lambda,
            base,
            pivot,
            t_n,
            t_max: cfg.t_max,
            floor: cfg.jlim_floor,
            floor_from: None,
        };
        sc.floor_from = sc.hours().find(|&t| sc.raw(t as f64) <= sc.floor).map(|t| t as f64);
        sc
    }

    /// Undetected case with given breakpoint and acceleration.
    pub fn undetected(
        index: usize,
        learning: &LearningWindow<'_>,
        t_c: f64,
        lambda: f64,
        cfg: &ScenarioConfig,
    ) -> Result<Self> {
        ensure(lambda >= 1.0, || format!("lambda must be at least 1, got {lambda}"))?;
        ensure(t_c >= learning.t_n && t_c <= cfg.t_max, || {
            format!("breakpoint {t_c} h outside [{}, {}] h", learning.t_n, cfg.t_max)
        })?;
        let (jn, sn) = learning.spline.eval(learning.t_n)?;
        let j0 = learning.spline.value(learning.spline.t_start())?;
        let p1 = build_p1(learning.t_n, jn, sn, j0, t_c, cfg.tau, cfg.lambda0)?;
        Ok(Self::new(
            index,
            ScenarioCase::Undetected,
            t_c,
            lambda,
            BaseCurve::Quadratic(p1),
            t_c,
            learning.t_n,
            cfg,
        ))
    }

    /// Detected case: the spline's Taylor model at `t_n` accelerated by `lambda`.
    pub fn detected(
        index: usize,
        learning: &LearningWindow<'_>,
        t_c: f64,
        lambda: f64,
        cfg: &ScenarioConfig,
    ) -> Result<Self> {
        ensure(lambda >= 1.0, || format!("lambda must be at least 1, got {lambda}"))?;
        let tay = learning.spline.backward_taylor(learning.t_n)?;
        Ok(Self::new(
            index,
            ScenarioCase::Detected,
            t_c,
            lambda,
            BaseCurve::Taylor(tay),
            learning.t_n,
            learning.t_n,
            cfg,
        ))
    }

    fn hours(&self) -> impl Iterator<Item = usize> {
        (self.t_n as usize + 1)..=(self.t_max as usize)
    }

    fn raw(&self, t: f64) -> f64 {
        if t <= self.pivot {
            self.base.value(t)
        } else {
            extend_p2(&self.base, self.pivot, self.lambda, t)
        }
    }

    /// `jlim` at `t` hours, including the floor.
    pub fn eval(&self, t: f64) -> f64 {
        match self.floor_from {
            Some(f) if t >= f => self.floor,
            _ => self.raw(t),
        }
    }

    /// Hourly values at `t_n + 1, …, t_max`.
    pub fn trajectory(&self) -> Vec<f64> {
        self.hours().map(|t| self.eval(t as f64)).collect()
    }
}

/// What scenario generation needs from the learning phase.
#[derive(Debug, Clone, Copy)]
pub struct LearningWindow<'a> {
    pub spline: &'a ConstrainedSpline,
    pub detection: &'a ChangeDetection,
    /// End of the learning window, h.
    pub t_n: f64,
}

fn scenario_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

/// A uniform deviate in `(0, 1]`.
fn open_unit(rng: &mut ChaCha8Rng) -> f64 {
    1.0 - rng.random::<f64>()
}

fn generate_one(index: usize, learning: &LearningWindow<'_>, cfg: &ScenarioConfig) -> Result<JlimScenario> {
    let mut rng = scenario_rng(cfg.seed, index);
    match learning.detection.t_c {
        Some(t_c) if t_c < learning.t_n => {
            let lambda = sample_pareto(open_unit(&mut rng), cfg.s)?;
            JlimScenario::detected(index, learning, t_c, lambda, cfg)
        }
        _ => {
            let mut last = None;
            for _ in 0..MAX_RESAMPLES {
                let t_c = sample_truncated_exponential(rng.random(), cfg.mu, learning.t_n, cfg.t_max);
                let lambda = sample_pareto(open_unit(&mut rng), cfg.s)?;
                match JlimScenario::undetected(index, learning, t_c, lambda, cfg) {
                    Err(e @ Error::Numerical(_)) => last = Some(e),
                    other => return other,
                }
            }
            Err(Error::Numerical(format!(
                "scenario {index}: P1 singular after {MAX_RESAMPLES} resamples ({})",
                last.map(|e| e.to_string()).unwrap_or_default()
            )))
        }
    }
}

/// Draws `cfg.n_scenarios` scenarios; deterministic in `cfg.seed` and ordered by index.
pub fn generate_scenarios(learning: &LearningWindow<'_>, cfg: &ScenarioConfig) -> Result<Vec<JlimScenario>> {
    cfg.validate()?;
    ensure(learning.t_n.fract() == 0.0 && learning.t_n >= 0.0, || {
        format!("t_n must be a whole number of hours, got {}", learning.t_n)
    })?;
    ensure(learning.t_n < cfg.t_max, || {
        format!("t_n = {} h must be before t_max = {} h", learning.t_n, cfg.t_max)
    })?;
    if learning.spline.t_start() > 0.0 || learning.spline.t_end() < learning.t_n {
        return Err(Error::Coverage(format!(
            "learning spline covers [{}, {}] h but [0, {}] h is needed",
            learning.spline.t_start(),
            learning.spline.t_end(),
            learning.t_n
        )));
    }
    (0..cfg.n_scenarios)
        .into_par_iter()
        .map(|i| generate_one(i, learning, cfg))
        .collect()
}
