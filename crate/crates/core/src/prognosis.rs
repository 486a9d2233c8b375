//! Learning on `[0, t_n]`, ensemble voltage prediction to `t_max`, and end-of-life estimates.

use nalgebra::Vector3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::aging_laws::{
    fit_exponential_law, fit_jlim_model1, fit_linear_law, normalize_time, AgingLaws, JlimModel, Trend,
};
use crate::changepoint::{detect_change, spline_hourly, ChangeDetection, ConstrainedSpline};
use crate::ekf::{
    observation, propagate, run_filter, FilterRun, NoiseConfig, NoiseSettings, Observation, TransitionModel,
};
use crate::electrochem::PhysicalConstants;
use crate::error::{ensure, Error, Result};
use crate::identification::{fit_curve_set, FitResult};
use crate::scenario::{generate_scenarios, JlimScenario, LearningWindow, ScenarioConfig};
use crate::synthdata::Database;

/// Minimum number of characterizations in the learning window.
pub const MIN_CHARACTERIZATIONS: usize = 3;

/// Default cumulative RMSE windows after `t_n`, h.
pub const HORIZON_WINDOWS: [usize; 6] = [500, 1000, 1500, 2000, 2500, 3000];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PrognosisConfig {
    /// End of the learning window, h.
    pub t_n: f64,
    /// Operating current density, A/cm².
    pub j_op: f64,
    /// End of life is the first hour with voltage at or below this fraction of the initial voltage.
    pub eol_fraction: f64,
    pub constants: PhysicalConstants,
    pub scenario: ScenarioConfig,
    pub noise: NoiseSettings,
}

impl Default for PrognosisConfig {
    fn default() -> Self {
        Self {
            t_n: 30_000.0,
            j_op: 1.0,
            eol_fraction: 0.9,
            constants: PhysicalConstants::default(),
            scenario: ScenarioConfig::default(),
            noise: NoiseSettings::default(),
        }
    }
}

impl PrognosisConfig {
    pub fn validate(&self) -> Result<()> {
        self.constants.validate()?;
        self.scenario.validate()?;
        self.noise.validate()?;
        ensure(self.t_n >= 0.0 && self.t_n.fract() == 0.0, || {
            format!("t_n must be a whole number of hours, got {}", self.t_n)
        })?;
        ensure(self.t_n < self.scenario.t_max, || {
            format!("t_n = {} h must be before t_max = {} h", self.t_n, self.scenario.t_max)
        })?;
        ensure(self.j_op > 0.0, || format!("j_op must be positive, got {}", self.j_op))?;
        ensure(self.eol_fraction > 0.0 && self.eol_fraction < 1.0, || {
            format!("eol_fraction must lie in (0, 1), got {}", self.eol_fraction)
        })?;
        ensure(self.scenario.jlim_floor > self.j_op, || {
            format!(
                "jlim_floor = {} must exceed the operating current density {}",
                self.scenario.jlim_floor, self.j_op
            )
        })
    }

    fn t_n_hours(&self) -> usize {
        self.t_n as usize
    }
}

/// Everything the prediction phase needs from the learning window.
#[derive(Debug, Clone)]
pub struct Trained {
    pub t_n: f64,
    pub fits: Vec<FitResult>,
    /// Shared diffusion coefficient.
    pub beta: f64,
    /// Aging laws; `jlim_model` is the single-exponential law.
    pub laws: AgingLaws,
    pub spline: ConstrainedSpline,
    /// Hourly interpolated `jlim` on `[0, t_n]`.
    pub jlim_hourly: Vec<f64>,
    pub detection: ChangeDetection,
    pub filter: FilterRun,
    pub model: TransitionModel,
    pub noise: NoiseConfig,
    pub observation: Observation,
    /// Measured voltage on `[0, t_n]`.
    pub measured: Vec<f64>,
}

impl Trained {
    /// Initial voltage `Y_0`.
    pub fn y0(&self) -> f64 {
        self.measured[0]
    }
}

/// Fits the exponential, linear and single-exponential `jlim` laws to identified
/// parameters at characterization times `times` (h).
pub fn fit_laws(fits: &[FitResult], times: &[f64], t_max: f64) -> Result<AgingLaws> {
    ensure(fits.len() == times.len(), || {
        format!("{} fits but {} times", fits.len(), times.len())
    })?;
    let series = |f: fn(&FitResult) -> f64| -> Vec<(f64, f64)> {
        fits.iter()
            .zip(times)
            .map(|(r, t)| (normalize_time(*t, t_max), f(r)))
            .collect()
    };
    let (a0, k0) = fit_exponential_law(&series(|r| r.params.j0), Trend::Decay)?;
    let (an, kn) = fit_exponential_law(&series(|r| r.params.jn), Trend::Growth)?;
    let (r_ohm0, k_ohm) = fit_linear_law(&series(|r| r.params.r_ohm))?;
    let (a1, k1) = fit_jlim_model1(&series(|r| r.params.jlim))?;
    let laws = AgingLaws {
        a0,
        k0,
        an,
        kn,
        r_ohm0,
        k_ohm,
        jlim_model: JlimModel::Model1 { a1, k1 },
        t_max,
    };
    laws.validate()?;
    Ok(laws)
}

/// Identification, law fitting, `jlim` interpolation, breakpoint detection and
/// a filtering pass, all restricted to `[0, t_n]`.
pub fn train(database: &Database, cfg: &PrognosisConfig) -> Result<Trained> {
    cfg.validate()?;
    let t_n = cfg.t_n_hours();
    let db = database.truncated(t_n)?;
    if db.curves.len() < MIN_CHARACTERIZATIONS {
        return Err(Error::InsufficientData {
            what: "characterizations in the learning window",
            needed: MIN_CHARACTERIZATIONS,
            got: db.curves.len(),
        });
    }
    let fits = fit_curve_set(&db.curves, &cfg.constants)?;
    let times: Vec<f64> = db.curves.iter().map(|c| c.t).collect();
    let laws = fit_laws(&fits, &times, cfg.scenario.t_max)?;
    let beta = fits[0].params.beta;

    let knots: Vec<(f64, f64)> = times.iter().zip(&fits).map(|(t, f)| (*t, f.params.jlim)).collect();
    let spline = ConstrainedSpline::fit(&knots)?;
    let jlim_hourly = spline_hourly(&spline, t_n)?;
    let detection = detect_change(&jlim_hourly, cfg.scenario.tau, cfg.scenario.lambda0)?;

    let v0 = laws.eval(0.0);
    let noise = cfg.noise.build(Vector3::new(v0.j0, v0.jn, v0.r_ohm));
    let model = TransitionModel::from_laws(&laws);
    let obs = Observation {
        constants: cfg.constants,
        beta,
        j: cfg.j_op,
    };
    let filter = run_filter(&db.voltage, &jlim_hourly, &model, &noise, &obs)?;
    Ok(Trained {
        t_n: cfg.t_n,
        fits,
        beta,
        laws,
        spline,
        jlim_hourly,
        detection,
        filter,
        model,
        noise,
        observation: obs,
        measured: db.voltage,
    })
}

/// Prediction-only states for hours `t_n + 1, …, t_max`.
pub fn state_path(trained: &Trained, t_max: f64) -> Vec<Vector3<f64>> {
    let steps = (t_max - trained.t_n) as usize;
    propagate(&trained.filter.final_state, &trained.model, &trained.noise.q, steps)
        .into_iter()
        .map(|s| s.theta)
        .collect()
}

/// Predicted voltage for an exogenous `jlim` trajectory aligned with `states`.
pub fn predict_voltage(trained: &Trained, states: &[Vector3<f64>], jlim: &[f64]) -> Result<Vec<f64>> {
    if states.len() != jlim.len() {
        return Err(Error::Invalid(format!(
            "{} predicted states but {} jlim values",
            states.len(),
            jlim.len()
        )));
    }
    states
        .iter()
        .zip(jlim)
        .map(|(th, jl)| observation(th, *jl, &trained.observation))
        .collect()
}

/// First hour `k` with `voltage[k] <= eol_fraction · y0`.
pub fn estimate_eol(voltage: &[f64], y0: f64, eol_fraction: f64) -> Option<usize> {
    let thr = eol_fraction * y0;
    voltage.iter().position(|v| *v <= thr)
}

pub fn estimate_rul(t_eol: f64, t_n: f64) -> Result<f64> {
    ensure(t_eol >= t_n, || format!("t_EOL = {t_eol} h precedes t_n = {t_n} h"))?;
    Ok(t_eol - t_n)
}

/// Absolute percentage error of a remaining-useful-life estimate.
pub fn ape(rul_pred: f64, rul_true: f64) -> Result<f64> {
    if rul_true == 0.0 {
        return Err(Error::Numerical("APE is undefined for a true RUL of 0".into()));
    }
    Ok(100.0 * ((rul_true - rul_pred) / rul_true).abs())
}

fn eol_of(measured: &[f64], predicted: &[f64], y0: f64, fraction: f64) -> Option<usize> {
    estimate_eol(measured, y0, fraction).or_else(|| estimate_eol(predicted, y0, fraction).map(|i| measured.len() + i))
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = q * (n - 1) as f64;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    Some(quantile_sorted(&v, 0.5))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantileRow {
    pub t: f64,
    pub min: f64,
    pub q05: f64,
    pub q25: f64,
    pub median: f64,
    pub q75: f64,
    pub q95: f64,
    pub max: f64,
    pub mean: f64,
}

impl QuantileRow {
    fn from_values(t: f64, values: &mut [f64]) -> Self {
        values.sort_by(f64::total_cmp);
        let n = values.len();
        Self {
            t,
            min: values[0],
            q05: quantile_sorted(values, 0.05),
            q25: quantile_sorted(values, 0.25),
            median: quantile_sorted(values, 0.5),
            q75: quantile_sorted(values, 0.75),
            q95: quantile_sorted(values, 0.95),
            max: values[n - 1],
            mean: values.iter().sum::<f64>() / n as f64,
        }
    }

    pub fn is_ordered(&self) -> bool {
        let q = [self.min, self.q05, self.q25, self.median, self.q75, self.q95, self.max];
        q.windows(2).all(|w| w[0] <= w[1]) && self.mean >= self.min && self.mean <= self.max
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenarioOutcome {
    pub index: usize,
    pub t_c: f64,
    pub lambda: f64,
    /// End of life, h; `None` when not reached by `t_max`.
    pub t_eol: Option<f64>,
    pub rul: Option<f64>,
    /// The observation was singular somewhere on this trajectory.
    pub failed: bool,
}

#[derive(Debug, Clone)]
pub struct PrognosisResult {
    pub t_n: f64,
    pub t_max: f64,
    pub y0: f64,
    pub scenarios: Vec<JlimScenario>,
    pub outcomes: Vec<ScenarioOutcome>,
    /// Hourly predicted voltage on `(t_n, t_max]` per scenario; empty for failed ones.
    pub voltages: Vec<Vec<f64>>,
    pub quantiles: Vec<QuantileRow>,
    /// Median RUL over scenarios reaching end of life, h.
    pub rul_median: Option<f64>,
    pub rul_mean: Option<f64>,
    pub n_reached_eol: usize,
    pub n_failed: usize,
}

/// Runs every scenario through the prediction-only filter and aggregates the ensemble.
pub fn predict_ensemble(trained: &Trained, cfg: &PrognosisConfig) -> Result<PrognosisResult> {
    cfg.validate()?;
    ensure(trained.t_n == cfg.t_n, || {
        format!("trained at t_n = {} h but configured for {} h", trained.t_n, cfg.t_n)
    })?;
    let learning = LearningWindow {
        spline: &trained.spline,
        detection: &trained.detection,
        t_n: trained.t_n,
    };
    let scenarios = generate_scenarios(&learning, &cfg.scenario)?;
    let states = state_path(trained, cfg.scenario.t_max);
    let y0 = trained.y0();

    let runs: Vec<(ScenarioOutcome, Vec<f64>)> = scenarios
        .par_iter()
        .map(|sc| {
            let v = predict_voltage(trained, &states, &sc.trajectory())
                .ok()
                .filter(|v| v.iter().all(|x| x.is_finite()));
            let t_eol = v
                .as_ref()
                .and_then(|v| eol_of(&trained.measured, v, y0, cfg.eol_fraction))
                .map(|k| k as f64);
            let outcome = ScenarioOutcome {
                index: sc.index,
                t_c: sc.t_c,
                lambda: sc.lambda,
                t_eol,
                rul: t_eol.map(|t| (t - trained.t_n).max(0.0)),
                failed: v.is_none(),
            };
            (outcome, v.unwrap_or_default())
        })
        .collect();
    let (outcomes, voltages): (Vec<_>, Vec<_>) = runs.into_iter().unzip();
    let n_failed = outcomes.iter().filter(|o| o.failed).count();
    if n_failed == outcomes.len() {
        return Err(Error::Numerical(format!(
            "all {n_failed} scenarios produced a singular voltage observation"
        )));
    }

    let ok: Vec<&Vec<f64>> = voltages.iter().filter(|v| !v.is_empty()).collect();
    let quantiles = (0..states.len())
        .into_par_iter()
        .map(|i| {
            let mut col: Vec<f64> = ok.iter().map(|v| v[i]).collect();
            QuantileRow::from_values(trained.t_n + 1.0 + i as f64, &mut col)
        })
        .collect();

    let ruls: Vec<f64> = outcomes.iter().filter_map(|o| o.rul).collect();
    let rul_mean = (!ruls.is_empty()).then(|| ruls.iter().sum::<f64>() / ruls.len() as f64);
    Ok(PrognosisResult {
        t_n: trained.t_n,
        t_max: cfg.scenario.t_max,
        y0,
        scenarios,
        outcomes,
        voltages,
        quantiles,
        rul_median: median(&ruls),
        rul_mean,
        n_reached_eol: ruls.len(),
        n_failed,
    })
}

/// Single trajectory from the fitted single-exponential `jlim` law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Model1Prediction {
    pub t_eol: Option<f64>,
    pub rul: Option<f64>,
    #[serde(skip)]
    pub voltage: Vec<f64>,
}

pub fn predict_model1(trained: &Trained, cfg: &PrognosisConfig) -> Result<Model1Prediction> {
    let states = state_path(trained, cfg.scenario.t_max);
    let floor = cfg.scenario.jlim_floor;
    let mut floored = false;
    let jlim: Vec<f64> = (0..states.len())
        .map(|i| {
            let t = trained.t_n + 1.0 + i as f64;
            let tn = normalize_time(t, trained.laws.t_max);
            let v = trained.laws.jlim_model.eval(tn);
            floored |= v <= floor;
            if floored {
                floor
            } else {
                v
            }
        })
        .collect();
    let voltage = predict_voltage(trained, &states, &jlim)?;
    let t_eol = eol_of(&trained.measured, &voltage, trained.y0(), cfg.eol_fraction).map(|k| k as f64);
    Ok(Model1Prediction {
        t_eol,
        rul: t_eol.map(|t| (t - trained.t_n).max(0.0)),
        voltage,
    })
}

/// Ground truth for scoring a prediction.
#[derive(Debug, Clone)]
pub struct Truth {
    /// Hourly voltage on `(t_n, t_max]`.
    pub future_voltage: Vec<f64>,
    pub t_eol: Option<f64>,
    pub rul: Option<f64>,
}

impl Truth {
    /// Truth from a full-horizon database.
    pub fn from_database(db: &Database, cfg: &PrognosisConfig) -> Result<Self> {
        let t_n = cfg.t_n_hours();
        let t_max = cfg.scenario.t_max as usize;
        if db.voltage.len() <= t_max {
            return Err(Error::Coverage(format!(
                "truth needs voltage up to {t_max} h, database ends at {} h",
                db.voltage.len().saturating_sub(1)
            )));
        }
        let y0 = db.voltage[0];
        let t_eol = estimate_eol(&db.voltage[..=t_max], y0, cfg.eol_fraction).map(|k| k as f64);
        Ok(Self {
            future_voltage: db.voltage[t_n + 1..=t_max].to_vec(),
            t_eol,
            rul: t_eol.map(|t| (t - cfg.t_n).max(0.0)),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HorizonRmse {
    /// Window length after `t_n`, h.
    pub window: usize,
    pub rmse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub rmse_by_horizon: Vec<HorizonRmse>,
    /// RMSE over the whole prediction horizon, V.
    pub rmse_total: f64,
    /// Mean absolute percentage voltage error, %.
    pub mape: f64,
    pub ape_median: Option<f64>,
    pub ape_mean: Option<f64>,
    pub rul_true: Option<f64>,
    pub rul_median: Option<f64>,
    pub rul_mean: Option<f64>,
}

/// Cumulative-window RMSE and MAPE of `predicted` against `truth`.
pub fn voltage_metrics(predicted: &[f64], truth: &[f64], windows: &[usize]) -> Result<(Vec<HorizonRmse>, f64, f64)> {
    if predicted.len() != truth.len() || predicted.is_empty() {
        return Err(Error::Invalid(format!(
            "prediction has {} samples but truth has {}",
            predicted.len(),
            truth.len()
        )));
    }
    let sq: Vec<f64> = predicted.iter().zip(truth).map(|(p, t)| (p - t) * (p - t)).collect();
    let rmse = |n: usize| (sq[..n].iter().sum::<f64>() / n as f64).sqrt();
    let by_h = windows
        .iter()
        .filter(|w| **w <= sq.len())
        .map(|w| HorizonRmse {
            window: *w,
            rmse: rmse(*w),
        })
        .collect();
    let mape = 100.0
        * predicted
            .iter()
            .zip(truth)
            .map(|(p, t)| ((p - t) / t).abs())
            .sum::<f64>()
        / predicted.len() as f64;
    Ok((by_h, rmse(sq.len()), mape))
}

/// Scores the ensemble median trajectory and the RUL estimates.
pub fn metrics(result: &PrognosisResult, truth: &Truth) -> Result<Metrics> {
    let median_curve: Vec<f64> = result.quantiles.iter().map(|q| q.median).collect();
    let (rmse_by_horizon, rmse_total, mape) = voltage_metrics(&median_curve, &truth.future_voltage, &HORIZON_WINDOWS)?;
    let score = |pred: Option<f64>| match (pred, truth.rul) {
        (Some(p), Some(t)) if t > 0.0 => ape(p, t).ok(),
        _ => None,
    };
    Ok(Metrics {
        rmse_by_horizon,
        rmse_total,
        mape,
        ape_median: score(result.rul_median),
        ape_mean: score(result.rul_mean),
        rul_true: truth.rul,
        rul_median: result.rul_median,
        rul_mean: result.rul_mean,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn eol_examples() {
        assert_eq!(estimate_eol(&[0.7; 100], 0.7, 0.9), None);
        let mut v = vec![0.7; 40_000];
        for x in v.iter_mut().skip(35_966) {
            *x = 0.62;
        }
        assert_eq!(estimate_eol(&v, 0.7, 0.9), Some(35_966));
    }

    #[test]
    fn rul_examples() {
        assert_eq!(estimate_rul(35_966.0, 30_000.0).unwrap(), 5966.0);
        assert_eq!(estimate_rul(10_000.0, 10_000.0).unwrap(), 0.0);
        assert_eq!(estimate_rul(38_000.0, 10_000.0).unwrap(), 28_000.0);
        assert!(estimate_rul(9_000.0, 10_000.0).is_err());
    }

    #[test]
    fn ape_examples() {
        assert_relative_eq!(ape(5000.0, 5966.0).unwrap(), 100.0 * 966.0 / 5966.0, epsilon = 1e-12);
        assert!((ape(5000.0, 5966.0).unwrap() - 16.192).abs() < 1e-3);
        assert_eq!(ape(100.0, 100.0).unwrap(), 0.0);
        assert!(ape(1.0, 0.0).is_err());
    }

    #[test]
    fn perfect_prediction_scores_zero() {
        let v: Vec<f64> = (0..4000).map(|i| 0.7 - 1e-6 * i as f64).collect();
        let (h, total, mape) = voltage_metrics(&v, &v, &HORIZON_WINDOWS).unwrap();
        assert!(h.iter().all(|w| w.rmse == 0.0));
        assert_eq!(h.len(), 6);
        assert_eq!((total, mape), (0.0, 0.0));
        let (h, _, _) = voltage_metrics(&v[..1200], &v[..1200], &HORIZON_WINDOWS).unwrap();
        assert_eq!(h.len(), 2);
        assert!(voltage_metrics(&v, &v[1..], &HORIZON_WINDOWS).is_err());
    }

    #[test]
    fn quantiles_interpolate_linearly() {
        let s = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile_sorted(&s, 0.0), 1.0);
        assert_eq!(quantile_sorted(&s, 1.0), 4.0);
        assert_relative_eq!(quantile_sorted(&s, 0.5), 2.5);
        assert_relative_eq!(quantile_sorted(&s, 0.25), 1.75);
        let mut v = vec![3.0, 1.0, 4.0, 1.5, 9.0];
        let row = QuantileRow::from_values(0.0, &mut v);
        assert!(row.is_ordered());
        assert_eq!(row.median, 3.0);
        assert_eq!(median(&[5.0, 1.0, 3.0]), Some(3.0));
        assert_eq!(median(&[]), None);
    }

    #[test]
    fn config_validation() {
        assert!(PrognosisConfig::default().validate().is_ok());
        assert!(PrognosisConfig {
            eol_fraction: 1.0,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(PrognosisConfig {
            t_n: 38_000.0,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(PrognosisConfig {
            t_n: 100.5,
            ..Default::default()
        }
        .validate()
        .is_err());
    }
}
