//! Degradation modelling and remaining-useful-life prognostics for PEM fuel cells.
//!
//! The pipeline runs in two phases:
//!
//! 1. **Learning** on `[0, t_n]`: each polarization curve is fitted with the
//!    quasi-static voltage model ([`identification`]), the identified parameters
//!    are fitted with time laws ([`aging_laws`]), the limiting current density is
//!    interpolated hourly and scanned for an acceleration breakpoint
//!    ([`changepoint`]), and an extended Kalman filter corrects the state over the
//!    measured voltage ([`ekf`]).
//! 2. **Prediction** on `(t_n, t_max]`: Monte Carlo `jlim` scenarios
//!    ([`scenario`]) drive the filter in prediction-only mode, and the ensemble
//!    yields voltage quantiles and end-of-life estimates ([`prognosis`]).
//!
//! [`synthdata`] generates a noiseless database with known ground truth and
//! [`io`] reads and writes it.
//!
//! ```
//! use pemfc_prognostics::electrochem::{cell_voltage, PhysicalConstants, QuasiStaticParams};
//!
//! let c = PhysicalConstants::default();
//! let p = QuasiStaticParams { j0: 1e-6, jn: 1e-3, beta: 0.25, jlim: 1.8, r_ohm: 0.08 };
//! let u = cell_voltage(1.0, &p, &c).unwrap();
//! assert!(u > 0.6 && u < 0.7);
//! ```

// Negated comparisons reject NaN together with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod aging_laws;
pub mod changepoint;
pub mod ekf;
pub mod electrochem;
pub mod error;
pub mod identification;
pub mod io;
pub mod lm;
pub mod prognosis;
pub mod scenario;
pub mod synthdata;

pub use error::{Error, Result};

#[cfg(doctest)]
mod guide {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/voltage_model.md")]
    mod voltage_model {}
    #[doc = include_str!("../../../book/src/identification.md")]
    mod identification {}
    #[doc = include_str!("../../../book/src/aging_laws.md")]
    mod aging_laws {}
    #[doc = include_str!("../../../book/src/breakpoint.md")]
    mod breakpoint {}
    #[doc = include_str!("../../../book/src/scenarios.md")]
    mod scenarios {}
    #[doc = include_str!("../../../book/src/filtering.md")]
    mod filtering {}
    #[doc = include_str!("../../../book/src/prognosis.md")]
    mod prognosis {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
