use std::path::{Path, PathBuf};

use pemfc_prognostics::aging_laws::{fit_jlim_model2, normalize_time, AgingLaws, Model2Fit};
use pemfc_prognostics::changepoint::{detect_change, interpolate_jlim_hourly};
use pemfc_prognostics::identification::{fit_curve_set, FitResult};
use pemfc_prognostics::io::{read_database, write_atomic, write_database, write_json, CsvBuffer, TRUTH_FILE};
use pemfc_prognostics::prognosis::{
    ape, estimate_eol, fit_laws, metrics, predict_ensemble, predict_model1, train, Metrics, PrognosisResult, Truth,
};
use pemfc_prognostics::scenario::ScenarioCase;
use pemfc_prognostics::synthdata::{generate_database, Database, GroundTruth};
use pemfc_prognostics::{Error, Result};
use serde::Serialize;

use crate::config::RunConfig;

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

#[derive(Serialize)]
struct TruthFile {
    ground_truth: GroundTruth,
    seed: u64,
    /// Voltage at hour 0, V.
    initial_voltage: f64,
    eol_fraction: f64,
    /// First hour at or below `eol_fraction` of the initial voltage.
    eol_hour: Option<usize>,
    planted_breakpoint_h: Option<f64>,
    /// Breakpoint found by the detector on the true hourly `jlim`.
    detected_breakpoint_h: Option<f64>,
}

pub fn synth(cfg: &RunConfig, out: &Path) -> Result<()> {
    let gt = cfg.synth;
    let db = generate_database(&gt, cfg.seed())?;
    let det = detect_change(
        &gt.jlim_hourly(),
        cfg.prognosis.scenario.tau,
        cfg.prognosis.scenario.lambda0,
    )?;
    write_database(out, &db)?;
    let truth = TruthFile {
        ground_truth: gt,
        seed: cfg.seed(),
        initial_voltage: db.voltage[0],
        eol_fraction: cfg.prognosis.eol_fraction,
        eol_hour: estimate_eol(&db.voltage, db.voltage[0], cfg.prognosis.eol_fraction),
        planted_breakpoint_h: gt.jlim.breakpoint(gt.t_max),
        detected_breakpoint_h: det.t_c,
    };
    write_json(&out.join(TRUTH_FILE), &truth)
}

/// Learning-window end: `--tn` when given, otherwise the last characterization.
fn learning_end(db: &Database, tn: Option<f64>) -> Result<f64> {
    let t = match tn {
        Some(t) => t,
        None => db
            .curves
            .last()
            .map(|c| c.t)
            .ok_or_else(|| Error::Invalid("database has no characterizations".into()))?,
    };
    if !(t >= 0.0 && t.fract() == 0.0) {
        return Err(Error::Invalid(format!("t_n must be a whole number of hours, got {t}")));
    }
    let last = db.last_hour().unwrap_or(0) as f64;
    if t > last {
        return Err(Error::Coverage(format!(
            "t_n = {t} h is beyond the database horizon of {last} h"
        )));
    }
    Ok(t)
}

fn identify_window(cfg: &RunConfig, db: &Database, t_n: f64) -> Result<(Vec<f64>, Vec<FitResult>)> {
    let curves: Vec<_> = db.curves.iter().filter(|c| c.t <= t_n).cloned().collect();
    let fits = fit_curve_set(&curves, &cfg.prognosis.constants)?;
    Ok((curves.iter().map(|c| c.t).collect(), fits))
}

pub fn identify(cfg: &RunConfig, db_dir: &Path, out: &Path, tn: Option<f64>) -> Result<()> {
    let db = read_database(db_dir)?;
    let t_n = learning_end(&db, tn)?;
    let (times, fits) = identify_window(cfg, &db, t_n)?;
    let mut csv = CsvBuffer::new(&[
        "t_h",
        "j0_A_cm2",
        "jn_A_cm2",
        "beta",
        "jlim_A_cm2",
        "r_ohm_cm2",
        "rmse_V",
        "iterations",
        "converged",
    ]);
    for (t, f) in times.iter().zip(&fits) {
        let p = f.params;
        csv.row([
            t.to_string(),
            p.j0.to_string(),
            p.jn.to_string(),
            p.beta.to_string(),
            p.jlim.to_string(),
            p.r_ohm.to_string(),
            f.rmse.to_string(),
            f.n_iterations.to_string(),
            f.converged.to_string(),
        ]);
    }
    write_atomic(&out.join("params.csv"), &csv.into_bytes())
}

#[derive(Serialize)]
struct LawsFile {
    t_n: f64,
    n_characterizations: usize,
    /// Exponential, linear and single-exponential `jlim` laws.
    laws: AgingLaws,
    jlim_model2: Option<Model2Fit>,
    jlim_model2_error: Option<String>,
}

pub fn fitlaws(cfg: &RunConfig, db_dir: &Path, out: &Path, tn: Option<f64>) -> Result<()> {
    let db = read_database(db_dir)?;
    let t_n = learning_end(&db, tn)?;
    let (times, fits) = identify_window(cfg, &db, t_n)?;
    let t_max = cfg.prognosis.scenario.t_max;
    let laws = fit_laws(&fits, &times, t_max)?;
    let samples: Vec<(f64, f64)> = times
        .iter()
        .zip(&fits)
        .map(|(t, f)| (normalize_time(*t, t_max), f.params.jlim))
        .collect();
    let (jlim_model2, jlim_model2_error) = match fit_jlim_model2(&samples) {
        Ok(m) => (Some(m), None),
        Err(e) => (None, Some(e.to_string())),
    };
    write_json(
        &out.join("laws.json"),
        &LawsFile {
            t_n,
            n_characterizations: times.len(),
            laws,
            jlim_model2,
            jlim_model2_error,
        },
    )
}

#[derive(Serialize)]
struct DetectionFile {
    t_n: f64,
    tau: f64,
    lambda0: f64,
    detected: bool,
    t_c: Option<f64>,
}

pub fn detect(cfg: &RunConfig, db_dir: &Path, out: &Path, tn: Option<f64>) -> Result<()> {
    let db = read_database(db_dir)?;
    let t_n = learning_end(&db, tn)?;
    let (times, fits) = identify_window(cfg, &db, t_n)?;
    let knots: Vec<(f64, f64)> = times.iter().zip(&fits).map(|(t, f)| (*t, f.params.jlim)).collect();
    let hourly = interpolate_jlim_hourly(&knots, t_n as usize)?;
    let sc = &cfg.prognosis.scenario;
    let det = detect_change(&hourly, sc.tau, sc.lambda0)?;
    let mut trace = CsvBuffer::new(&["t_h", "ratio"]);
    for (t, r) in &det.lambda_actual_trace {
        trace.floats(&[*t, *r]);
    }
    write_atomic(&out.join("lambda_trace.csv"), &trace.into_bytes())?;
    write_json(
        &out.join("detection.json"),
        &DetectionFile {
            t_n,
            tau: sc.tau,
            lambda0: sc.lambda0,
            detected: det.detected,
            t_c: det.t_c,
        },
    )
}

pub struct PredictArgs {
    pub db_dir: PathBuf,
    pub out: PathBuf,
    pub tn: Option<f64>,
    pub compare_model1: bool,
    pub dump_scenarios: bool,
}

#[derive(Serialize)]
struct ScenarioEntry {
    index: usize,
    case: ScenarioCase,
    t_c: f64,
    lambda: f64,
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'static str,
    database: String,
    config: &'a RunConfig,
    seed: u64,
    case: Option<ScenarioCase>,
    detected_t_c: Option<f64>,
    scenarios: Vec<ScenarioEntry>,
}

#[derive(Serialize)]
struct Model1Summary {
    t_eol: Option<f64>,
    rul: Option<f64>,
    ape: Option<f64>,
}

#[derive(Serialize)]
struct MetricsFile {
    t_n: f64,
    n_scenarios: usize,
    n_reached_eol: usize,
    n_not_reaching_eol: usize,
    n_failed: usize,
    rul_median: Option<f64>,
    rul_mean: Option<f64>,
    /// Present when the database directory holds a truth file and covers `t_max`.
    truth: Option<Metrics>,
    model1: Option<Model1Summary>,
}

fn write_result(out: &Path, result: &PrognosisResult) -> Result<()> {
    let mut q = CsvBuffer::new(&["t_h", "min", "q05", "q25", "median", "q75", "q95", "max", "mean"]);
    for r in &result.quantiles {
        q.floats(&[r.t, r.min, r.q05, r.q25, r.median, r.q75, r.q95, r.max, r.mean]);
    }
    write_atomic(&out.join("quantiles.csv"), &q.into_bytes())?;
    let mut r = CsvBuffer::new(&["scenario", "case", "t_c_h", "lambda", "t_eol_h", "rul_h"]);
    for (o, s) in result.outcomes.iter().zip(&result.scenarios) {
        let case = match s.case {
            ScenarioCase::Undetected => "undetected",
            ScenarioCase::Detected => "detected",
        };
        r.row([
            o.index.to_string(),
            case.to_string(),
            o.t_c.to_string(),
            o.lambda.to_string(),
            opt(o.t_eol),
            opt(o.rul),
        ]);
    }
    write_atomic(&out.join("ruls.csv"), &r.into_bytes())
}

pub fn predict(cfg: &RunConfig, args: &PredictArgs) -> Result<()> {
    let db = read_database(&args.db_dir)?;
    let mut cfg = *cfg;
    if let Some(t) = args.tn {
        cfg.prognosis.t_n = t;
    }
    let p = cfg.prognosis;
    learning_end(&db, Some(p.t_n))?;
    let trained = train(&db, &p)?;
    let result = predict_ensemble(&trained, &p)?;

    let truth = if args.db_dir.join(TRUTH_FILE).is_file() && db.voltage.len() as f64 > p.scenario.t_max {
        Some(Truth::from_database(&db, &p)?)
    } else {
        None
    };
    let scored = truth.as_ref().map(|t| metrics(&result, t)).transpose()?;
    let model1 = if args.compare_model1 {
        let m = predict_model1(&trained, &p)?;
        let ape = match (m.rul, truth.as_ref().and_then(|t| t.rul)) {
            (Some(pr), Some(tr)) if tr > 0.0 => Some(ape(pr, tr)?),
            _ => None,
        };
        Some(Model1Summary {
            t_eol: m.t_eol,
            rul: m.rul,
            ape,
        })
    } else {
        None
    };

    write_result(&args.out, &result)?;
    let mut trace = CsvBuffer::new(&[
        "k",
        "t_h",
        "j0_A_cm2",
        "jn_A_cm2",
        "r_ohm_cm2",
        "predicted_V",
        "innovation_V",
    ]);
    for r in &trained.filter.trace {
        trace.floats(&[r.k as f64, r.t, r.j0, r.jn, r.r_ohm, r.predicted_v, r.innovation]);
    }
    write_atomic(&args.out.join("filter_trace.csv"), &trace.into_bytes())?;
    if args.dump_scenarios {
        let dir = args.out.join("scenarios");
        for s in &result.scenarios {
            let mut c = CsvBuffer::new(&["t_h", "jlim_A_cm2"]);
            for (i, v) in s.trajectory().iter().enumerate() {
                c.floats(&[p.t_n + 1.0 + i as f64, *v]);
            }
            write_atomic(&dir.join(format!("scenario_{:04}.csv", s.index)), &c.into_bytes())?;
        }
    }
    write_json(
        &args.out.join("metrics.json"),
        &MetricsFile {
            t_n: p.t_n,
            n_scenarios: result.outcomes.len(),
            n_reached_eol: result.n_reached_eol,
            n_not_reaching_eol: result.outcomes.len() - result.n_reached_eol - result.n_failed,
            n_failed: result.n_failed,
            rul_median: result.rul_median,
            rul_mean: result.rul_mean,
            truth: scored,
            model1,
        },
    )?;
    write_json(
        &args.out.join("manifest.json"),
        &Manifest {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command: "predict",
            database: args.db_dir.display().to_string(),
            config: &cfg,
            seed: cfg.seed(),
            case: result.scenarios.first().map(|s| s.case),
            detected_t_c: trained.detection.t_c,
            scenarios: result
                .scenarios
                .iter()
                .map(|s| ScenarioEntry {
                    index: s.index,
                    case: s.case,
                    t_c: s.t_c,
                    lambda: s.lambda,
                })
                .collect(),
        },
    )
}
