//! Constrained cubic spline interpolation of `jlim` and breakpoint detection.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default short-run window, h.
pub const DEFAULT_TAU: f64 = 10.0;
/// Default ratio of short-run to long-run decrease that marks a breakpoint.
pub const DEFAULT_LAMBDA0: f64 = 2.0;
/// Long-run rates at or below this are treated as flat and skipped.
pub const FLAT_RATE: f64 = 1e-15;

/// Piecewise cubic Hermite interpolant with constrained (no-overshoot) slopes.
///
/// Interval `i` holds `c[i] = [c0, c1, c2, c3]` in the local coordinate
/// `x = t - t[i]`: `S(t) = c0 + c1 x + c2 x² + c3 x³`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstrainedSpline {
    t: Vec<f64>,
    y: Vec<f64>,
    slopes: Vec<f64>,
    coeffs: Vec<[f64; 4]>,
}

/// Value, first and second derivative at a point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Taylor2 {
    pub t: f64,
    pub value: f64,
    pub d1: f64,
    pub d2: f64,
}

impl Taylor2 {
    pub fn eval(&self, t: f64) -> f64 {
        let x = t - self.t;
        self.value + self.d1 * x + 0.5 * self.d2 * x * x
    }

    pub fn derivative(&self, t: f64) -> f64 {
        self.d1 + self.d2 * (t - self.t)
    }
}

fn constrained_slope(left: f64, right: f64) -> f64 {
    if left * right <= 0.0 {
        0.0
    } else {
        2.0 / (1.0 / left + 1.0 / right)
    }
}

impl ConstrainedSpline {
    /// Fits the spline through `knots`, which must have strictly increasing times.
    ///
    /// Two knots give the straight line through them.
    pub fn fit(knots: &[(f64, f64)]) -> Result<Self> {
        if knots.len() < 2 {
            return Err(Error::InsufficientData {
                what: "spline knots",
                needed: 2,
                got: knots.len(),
            });
        }
        if knots.iter().any(|(t, y)| !t.is_finite() || !y.is_finite()) {
            return Err(Error::Invalid("spline knots must be finite".into()));
        }
        if let Some(w) = knots.windows(2).find(|w| w[1].0 <= w[0].0) {
            return Err(Error::Invalid(format!(
                "spline knot times must be strictly increasing, got {} then {}",
                w[0].0, w[1].0
            )));
        }
        let t: Vec<f64> = knots.iter().map(|k| k.0).collect();
        let y: Vec<f64> = knots.iter().map(|k| k.1).collect();
        let n = t.len();
        let secants: Vec<f64> = (0..n - 1).map(|i| (y[i + 1] - y[i]) / (t[i + 1] - t[i])).collect();

        let mut slopes = vec![0.0; n];
        if n == 2 {
            slopes.fill(secants[0]);
        } else {
            for i in 1..n - 1 {
                slopes[i] = constrained_slope(secants[i - 1], secants[i]);
            }
            slopes[0] = 1.5 * secants[0] - 0.5 * slopes[1];
            slopes[n - 1] = 1.5 * secants[n - 2] - 0.5 * slopes[n - 2];
        }

        let coeffs = (0..n - 1)
            .map(|i| {
                let h = t[i + 1] - t[i];
                let (d0, d1, s) = (slopes[i], slopes[i + 1], secants[i]);
                [y[i], d0, (3.0 * s - 2.0 * d0 - d1) / h, (d0 + d1 - 2.0 * s) / (h * h)]
            })
            .collect();
        Ok(Self { t, y, slopes, coeffs })
    }

    pub fn knots(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.t.iter().copied().zip(self.y.iter().copied())
    }

    pub fn knot_slopes(&self) -> &[f64] {
        &self.slopes
    }

    /// Local cubic coefficients `[c0, c1, c2, c3]` of each interval.
    pub fn coefficients(&self) -> &[[f64; 4]] {
        &self.coeffs
    }

    pub fn t_start(&self) -> f64 {
        self.t[0]
    }

    pub fn t_end(&self) -> f64 {
        self.t[self.t.len() - 1]
    }

    fn interval(&self, t: f64) -> Result<usize> {
        if !(t >= self.t_start() && t <= self.t_end()) {
            return Err(Error::Domain(format!(
                "spline evaluated at t = {t} outside [{}, {}]",
                self.t_start(),
                self.t_end()
            )));
        }
        let i = self.t.partition_point(|&k| k <= t);
        Ok(i.saturating_sub(1).min(self.coeffs.len() - 1))
    }

    /// Returns `(S(t), S'(t))`.
    pub fn eval(&self, t: f64) -> Result<(f64, f64)> {
        let i = self.interval(t)?;
        let [c0, c1, c2, c3] = self.coeffs[i];
        let x = t - self.t[i];
        Ok((c0 + x * (c1 + x * (c2 + x * c3)), c1 + x * (2.0 * c2 + x * 3.0 * c3)))
    }

    pub fn value(&self, t: f64) -> Result<f64> {
        self.eval(t).map(|v| v.0)
    }

    /// Value, slope and second derivative at `t`, taken from the interval to the
    /// left of `t` when `t` is a knot.
    pub fn taylor_at(&self, t: f64) -> Result<Taylor2> {
        let mut i = self.interval(t)?;
        if i > 0 && t == self.t[i] {
            i -= 1;
        }
        let [c0, c1, c2, c3] = self.coeffs[i];
        let x = t - self.t[i];
        let value = if t == self.t[i + 1] {
            self.y[i + 1]
        } else {
            c0 + x * (c1 + x * (c2 + x * c3))
        };
        Ok(Taylor2 {
            t,
            value,
            d1: c1 + x * (2.0 * c2 + x * 3.0 * c3),
            d2: 2.0 * c2 + 6.0 * c3 * x,
        })
    }

    /// Taylor data at the last knot.
    ///
    /// The end-slope rule zeroes the one-sided second derivative there.
    pub fn terminal_taylor(&self) -> Taylor2 {
        let t = self.t_end();
        self.taylor_at(t).expect("last knot is in range")
    }

    /// Value and slope at `t` with the mean second derivative of the interval
    /// ending at `t` (or containing it).
    pub fn backward_taylor(&self, t: f64) -> Result<Taylor2> {
        let mut tay = self.taylor_at(t)?;
        let mut i = self.interval(t)?;
        if i > 0 && t == self.t[i] {
            i -= 1;
        }
        let left = self.t[i];
        tay.d2 = if t > left {
            (tay.d1 - self.slopes[i]) / (t - left)
        } else {
            2.0 * self.coeffs[i][2]
        };
        Ok(tay)
    }
}

pub fn fit_constrained_spline(knots: &[(f64, f64)]) -> Result<ConstrainedSpline> {
    ConstrainedSpline::fit(knots)
}

pub fn eval_spline(s: &ConstrainedSpline, t: f64) -> Result<(f64, f64)> {
    s.eval(t)
}

/// Outcome of a breakpoint scan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChangeDetection {
    pub detected: bool,
    /// Breakpoint, h. `Some` exactly when `detected`.
    pub t_c: Option<f64>,
    /// `(t, short-run rate / long-run rate)` at every scanned hour with a non-flat history.
    pub lambda_actual_trace: Vec<(f64, f64)>,
}

/// Short-run over long-run decrease ratio at hour `t`, or `None` for a flat history.
fn rate_ratio(series: &[f64], t: usize, tau: usize) -> Option<f64> {
    let short = ((series[t - tau] - series[t]) / tau as f64).abs();
    let long = ((series[0] - series[t - tau]) / (t - tau) as f64).abs();
    (long > FLAT_RATE).then(|| short / long)
}

fn whole_hours(tau: f64) -> Result<usize> {
    if tau >= 1.0 && tau.fract() == 0.0 && tau.is_finite() {
        Ok(tau as usize)
    } else {
        Err(Error::Invalid(format!(
            "tau must be a positive whole number of hours, got {tau}"
        )))
    }
}

/// Scans an hourly series (index = hour) for the first instant whose
/// decrease over the last `tau` hours is `lambda0` times the long-run rate.
///
/// The reported breakpoint is `t - tau` for the first hit `t ≥ 3 tau`.
pub fn detect_change(series: &[f64], tau: f64, lambda0: f64) -> Result<ChangeDetection> {
    let tau_h = whole_hours(tau)?;
    if !(lambda0 > 0.0) {
        return Err(Error::Invalid(format!("lambda0 must be positive, got {lambda0}")));
    }
    if series.len() < 3 * tau_h + 1 {
        return Err(Error::InsufficientData {
            what: "hourly samples for change detection",
            needed: 3 * tau_h + 1,
            got: series.len(),
        });
    }
    let mut trace = Vec::with_capacity(series.len() - 3 * tau_h);
    let mut t_c = None;
    for t in 3 * tau_h..series.len() {
        if let Some(ratio) = rate_ratio(series, t, tau_h) {
            trace.push((t as f64, ratio));
            if t_c.is_none() && ratio >= lambda0 {
                t_c = Some((t - tau_h) as f64);
            }
        }
    }
    Ok(ChangeDetection {
        detected: t_c.is_some(),
        t_c,
        lambda_actual_trace: trace,
    })
}

/// Evaluates the constrained spline through `identified` at every hour of `[0, t_n]`.
pub fn interpolate_jlim_hourly(identified: &[(f64, f64)], t_n: usize) -> Result<Vec<f64>> {
    let spline = ConstrainedSpline::fit(identified)?;
    spline_hourly(&spline, t_n)
}

pub(crate) fn spline_hourly(spline: &ConstrainedSpline, t_n: usize) -> Result<Vec<f64>> {
    if spline.t_start() > 0.0 || spline.t_end() < t_n as f64 {
        return Err(Error::Coverage(format!(
            "jlim samples cover [{}, {}] h but [0, {t_n}] h is needed",
            spline.t_start(),
            spline.t_end()
        )));
    }
    (0..=t_n).map(|h| spline.value(h as f64)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn line_is_reproduced() {
        let knots: Vec<_> = (0..6).map(|i| (i as f64 * 2.0, 3.0 - 0.5 * i as f64 * 2.0)).collect();
        let s = fit_constrained_spline(&knots).unwrap();
        for c in s.coefficients() {
            assert!(c[2].abs() < 1e-15 && c[3].abs() < 1e-15);
        }
        for k in 0..=100 {
            let t = k as f64 * 0.1;
            let (v, d) = s.eval(t).unwrap();
            assert_relative_eq!(v, 3.0 - 0.5 * t, epsilon = 1e-14);
            assert_relative_eq!(d, -0.5, epsilon = 1e-14);
        }
    }

    #[test]
    fn sign_change_gives_zero_slope() {
        let s = fit_constrained_spline(&[(0.0, 1.0), (1.0, 1.0), (2.0, 0.0)]).unwrap();
        assert_eq!(s.knot_slopes()[1], 0.0);
        for k in 0..=20 {
            assert_eq!(s.value(k as f64 / 20.0).unwrap(), 1.0);
        }
    }

    #[test]
    fn harmonic_mean_interior_slope() {
        let s = fit_constrained_spline(&[(0.0, 0.0), (1.0, 1.0), (2.0, 4.0)]).unwrap();
        assert_relative_eq!(s.knot_slopes()[1], 2.0 / (1.0 + 1.0 / 3.0), epsilon = 1e-15);
        assert_relative_eq!(s.knot_slopes()[0], 1.5 - 0.75, epsilon = 1e-15);
    }

    #[test]
    fn out_of_range_is_an_error() {
        let s = fit_constrained_spline(&[(0.0, 1.0), (1.0, 2.0), (2.0, 0.0)]).unwrap();
        assert!(s.eval(-1e-9).is_err());
        assert!(s.eval(2.0 + 1e-9).is_err());
        assert!(s.eval(f64::NAN).is_err());
        assert_eq!(s.value(2.0).unwrap(), 0.0);
    }

    #[test]
    fn bad_knots_are_rejected() {
        assert!(fit_constrained_spline(&[(0.0, 1.0)]).is_err());
        assert!(fit_constrained_spline(&[(0.0, 1.0), (0.0, 2.0), (1.0, 0.0)]).is_err());
        assert!(fit_constrained_spline(&[(0.0, 1.0), (2.0, 2.0), (1.0, 0.0)]).is_err());
    }

    #[test]
    fn terminal_taylor_matches_last_cubic() {
        let knots = [(0.0, 2.0), (1.0, 1.9), (2.0, 1.7), (3.0, 1.2)];
        let s = fit_constrained_spline(&knots).unwrap();
        let tay = s.terminal_taylor();
        let h = 1e-4;
        let (v, d) = s.eval(3.0).unwrap();
        let (_, dm) = s.eval(3.0 - h).unwrap();
        assert_eq!(tay.value, v);
        assert_relative_eq!(tay.d1, d, epsilon = 1e-14);
        assert!((tay.d2 - (d - dm) / h).abs() < 1e-3);
        assert!(tay.d2.abs() < 1e-12);
        let back = s.backward_taylor(3.0).unwrap();
        assert_eq!((back.value, back.d1), (tay.value, tay.d1));
        assert_relative_eq!(back.d2, s.knot_slopes()[3] - s.knot_slopes()[2], epsilon = 1e-15);
        assert!(back.d2 < 0.0);
        let mid = s.taylor_at(1.5).unwrap();
        let (v, d) = s.eval(1.5).unwrap();
        assert_relative_eq!(mid.value, v, epsilon = 1e-15);
        assert_relative_eq!(mid.d1, d, epsilon = 1e-15);
    }

    fn brute_force_scan(series: &[f64], tau: usize, lambda0: f64) -> Option<f64> {
        (3 * tau..series.len()).find_map(|t| {
            let short = (series[t - tau] - series[t]) / tau as f64;
            let long = (series[0] - series[t - tau]) / (t - tau) as f64;
            (long.abs() > FLAT_RATE && short.abs() / long.abs() >= lambda0).then_some((t - tau) as f64)
        })
    }

    #[test]
    fn constant_and_linear_series_do_not_trigger() {
        let c = vec![1.7; 2000];
        assert!(!detect_change(&c, 10.0, 2.0).unwrap().detected);
        let l: Vec<f64> = (0..2000).map(|t| 1.8 - 1e-5 * t as f64).collect();
        let d = detect_change(&l, 10.0, 2.0).unwrap();
        assert!(!d.detected && d.t_c.is_none());
        assert!(d.lambda_actual_trace.iter().all(|(_, r)| (r - 1.0).abs() < 1e-6));
    }

    #[test]
    fn piecewise_linear_breakpoint() {
        let m = 1e-5;
        let series: Vec<f64> = (0..=38_000)
            .map(|t| {
                let t = t as f64;
                if t <= 30_000.0 {
                    1.8 - m * t
                } else {
                    1.8 - m * 30_000.0 - 2.5 * m * (t - 30_000.0)
                }
            })
            .collect();
        let d = detect_change(&series, 10.0, 2.0).unwrap();
        let oracle = brute_force_scan(&series, 10, 2.0).unwrap();
        let t_c = d.t_c.unwrap();
        assert!((t_c - oracle).abs() <= 10.0);
        assert!((t_c - 30_000.0).abs() <= 10.0, "{t_c}");
    }

    #[test]
    fn short_series_is_rejected() {
        assert!(detect_change(&[1.0; 30], 10.0, 2.0).is_err());
        assert!(detect_change(&[1.0; 31], 10.0, 2.0).is_ok());
        assert!(detect_change(&[1.0; 100], 2.5, 2.0).is_err());
    }

    #[test]
    fn hourly_interpolation() {
        let h = interpolate_jlim_hourly(&[(0.0, 1.8), (500.0, 1.75)], 500).unwrap();
        assert_eq!(h.len(), 501);
        for (t, v) in h.iter().enumerate() {
            assert_relative_eq!(*v, 1.8 - 1e-4 * t as f64, epsilon = 1e-14);
        }
        let knots: Vec<_> = (0..=10)
            .map(|i| (i as f64 * 500.0, 1.8 - 1e-9 * (i as f64 * 500.0).powi(2)))
            .collect();
        let h = interpolate_jlim_hourly(&knots, 5000).unwrap();
        for (t, y) in &knots {
            assert_eq!(h[*t as usize], *y);
        }
        assert!(matches!(interpolate_jlim_hourly(&knots, 5001), Err(Error::Coverage(_))));
        assert!(matches!(
            interpolate_jlim_hourly(&knots[1..], 5000),
            Err(Error::Coverage(_))
        ));
    }

    fn knot_strategy() -> impl Strategy<Value = Vec<(f64, f64)>> {
        prop::collection::vec((0.1f64..5.0, -3.0f64..3.0), 3..12).prop_map(|v| {
            let mut t = 0.0;
            v.into_iter()
                .map(|(dt, y)| {
                    t += dt;
                    (t, y)
                })
                .collect()
        })
    }

    proptest! {
        #[test]
        fn interpolates_without_overshoot(knots in knot_strategy()) {
            let s = fit_constrained_spline(&knots).unwrap();
            for (t, y) in &knots {
                prop_assert!((s.value(*t).unwrap() - y).abs() <= 1e-12 * (1.0 + y.abs()));
            }
            for w in knots.windows(2) {
                let (lo, hi) = (w[0].1.min(w[1].1), w[0].1.max(w[1].1));
                let tol = 1e-12 * (1.0 + hi.abs().max(lo.abs()));
                for k in 0..1000 {
                    let t = w[0].0 + (w[1].0 - w[0].0) * k as f64 / 999.0;
                    let v = s.value(t).unwrap();
                    prop_assert!(v >= lo - tol && v <= hi + tol, "{v} outside [{lo}, {hi}]");
                }
            }
        }

        #[test]
        fn c1_at_interior_knots(knots in knot_strategy()) {
            let s = fit_constrained_spline(&knots).unwrap();
            let c = s.coefficients();
            for i in 1..knots.len() - 1 {
                let h = knots[i].0 - knots[i - 1].0;
                let [a0, a1, a2, a3] = c[i - 1];
                let left_v = a0 + a1 * h + a2 * h * h + a3 * h * h * h;
                let left_d = a1 + 2.0 * a2 * h + 3.0 * a3 * h * h;
                prop_assert!((left_v - c[i][0]).abs() < 1e-10);
                prop_assert!((left_d - c[i][1]).abs() < 1e-9 * (1.0 + left_d.abs()));
            }
        }

        #[test]
        fn matches_coefficient_evaluation(knots in knot_strategy(), frac in 0.0f64..1.0) {
            let s = fit_constrained_spline(&knots).unwrap();
            let t = s.t_start() + frac * (s.t_end() - s.t_start());
            let i = knots.iter().rposition(|k| k.0 <= t).unwrap().min(knots.len() - 2);
            let x = t - knots[i].0;
            let c = s.coefficients()[i];
            let brute = c[0] + c[1] * x + c[2] * x.powi(2) + c[3] * x.powi(3);
            prop_assert!((s.value(t).unwrap() - brute).abs() < 1e-12 * (1.0 + brute.abs()));
        }

        #[test]
        fn detection_scale_invariance_and_monotonicity(
            curv in 1e-10f64..1e-8, slope in 1e-7f64..1e-5, gamma in 0.1f64..10.0, l0 in 1.2f64..3.0,
        ) {
            let series: Vec<f64> = (0..=6000).map(|t| {
                let t = t as f64;
                2.0 - slope * t - curv * t * t
            }).collect();
            let a = detect_change(&series, 10.0, l0).unwrap();
            let scaled: Vec<f64> = series.iter().map(|v| v * gamma).collect();
            let b = detect_change(&scaled, 10.0, l0).unwrap();
            prop_assert_eq!(a.t_c, b.t_c);
            let lower = detect_change(&series, 10.0, l0 * 0.8).unwrap();
            if let Some(tc) = a.t_c {
                prop_assert!(lower.t_c.unwrap() <= tc);
            }
            let oracle = brute_force_scan(&series, 10, l0);
            prop_assert_eq!(a.t_c, oracle);
            if let Some(tc) = a.t_c {
                prop_assert!((20.0..=6000.0 - 10.0).contains(&tc));
            }
        }
    }
}
