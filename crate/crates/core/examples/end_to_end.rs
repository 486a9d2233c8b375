//! Generates the synthetic database, then learns and predicts at several horizons.

use std::time::Instant;

use pemfc_prognostics::prognosis::{metrics, predict_ensemble, predict_model1, train, PrognosisConfig, Truth};
use pemfc_prognostics::scenario::ScenarioConfig;
use pemfc_prognostics::synthdata::{generate_database, GroundTruth};

fn main() -> pemfc_prognostics::Result<()> {
    let db = generate_database(&GroundTruth::default(), 0)?;
    for t_n in [10_000.0, 20_000.0, 25_000.0, 30_000.0, 35_000.0] {
        let start = Instant::now();
        let cfg = PrognosisConfig {
            t_n,
            scenario: ScenarioConfig {
                n_scenarios: 100,
                ..Default::default()
            },
            ..Default::default()
        };
        let trained = train(&db, &cfg)?;
        let result = predict_ensemble(&trained, &cfg)?;
        let truth = Truth::from_database(&db, &cfg)?;
        let m = metrics(&result, &truth)?;
        let m1 = predict_model1(&trained, &cfg)?;
        let ape1 = match (m1.rul, truth.rul) {
            (Some(p), Some(t)) => Some(100.0 * (p - t).abs() / t),
            _ => None,
        };
        println!(
            "t_n = {t_n:>6}: detected {:?}, RUL true {:?} median {:?}, APE {:?}, model1 APE {:?}, rmse {:.2e}, {:.2?}",
            trained.detection.t_c,
            truth.rul,
            m.rul_median,
            m.ape_median,
            ape1,
            m.rmse_total,
            start.elapsed()
        );
    }
    Ok(())
}
