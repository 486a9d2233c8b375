use pemfc_prognostics::io::{read_database, write_database};
use pemfc_prognostics::prognosis::{metrics, predict_ensemble, train, PrognosisConfig, Truth};
use pemfc_prognostics::scenario::ScenarioCase;
use pemfc_prognostics::synthdata::{generate_database, GroundTruth};

fn config(t_n: f64, n: usize) -> PrognosisConfig {
    let mut cfg = PrognosisConfig {
        t_n,
        ..PrognosisConfig::default()
    };
    cfg.scenario.n_scenarios = n;
    cfg
}

#[test]
fn database_survives_disk_round_trip_and_trains_identically() {
    let db = generate_database(&GroundTruth::default(), 0).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_database(dir.path(), &db).unwrap();
    let back = read_database(dir.path()).unwrap();
    assert_eq!(back.voltage, db.voltage);
    assert_eq!(back.curves.len(), db.curves.len());

    let cfg = config(20_000.0, 10);
    let a = train(&db, &cfg).unwrap();
    let b = train(&back, &cfg).unwrap();
    assert_eq!(a.laws, b.laws);
    assert_eq!(a.filter.final_state.theta, b.filter.final_state.theta);
}

#[test]
fn training_ignores_data_after_the_learning_window() {
    let db = generate_database(&GroundTruth::default(), 0).unwrap();
    let cfg = config(15_000.0, 10);
    let full = train(&db, &cfg).unwrap();
    let cut = train(&db.truncated(15_000).unwrap(), &cfg).unwrap();
    assert_eq!(full.laws, cut.laws);
    assert_eq!(full.jlim_hourly, cut.jlim_hourly);
    assert_eq!(full.filter.final_state.theta, cut.filter.final_state.theta);
}

#[test]
fn ensemble_is_reproducible_and_ordered() {
    let db = generate_database(&GroundTruth::default(), 0).unwrap();
    let cfg = config(25_000.0, 40);
    let trained = train(&db, &cfg).unwrap();
    let a = predict_ensemble(&trained, &cfg).unwrap();
    let b = predict_ensemble(&trained, &cfg).unwrap();
    assert_eq!(a.outcomes, b.outcomes);
    assert!(a.quantiles.iter().all(|q| q.is_ordered()));
    assert!(a.scenarios.iter().all(|s| s.case == ScenarioCase::Undetected));
    assert!(a
        .scenarios
        .iter()
        .all(|s| s.t_c > 25_000.0 && s.t_c <= 38_000.0 && s.lambda >= 1.0));

    let m = metrics(&a, &Truth::from_database(&db, &cfg).unwrap()).unwrap();
    assert_eq!(m.rul_true, Some(10_914.0));
    assert!(m.ape_median.unwrap() < 5.0);
}

#[test]
fn late_learning_window_switches_to_the_detected_case() {
    let db = generate_database(&GroundTruth::default(), 0).unwrap();
    let cfg = config(35_000.0, 20);
    let trained = train(&db, &cfg).unwrap();
    let t_c = trained.detection.t_c.expect("breakpoint inside the window");
    assert!((t_c - 30_000.0).abs() < 500.0);
    let r = predict_ensemble(&trained, &cfg).unwrap();
    assert!(r
        .scenarios
        .iter()
        .all(|s| s.case == ScenarioCase::Detected && s.t_c == t_c));
}

#[test]
fn seed_changes_the_ensemble() {
    let db = generate_database(&GroundTruth::default(), 0).unwrap();
    let mut cfg = config(20_000.0, 20);
    let trained = train(&db, &cfg).unwrap();
    let a = predict_ensemble(&trained, &cfg).unwrap();
    cfg.scenario.seed += 1;
    let b = predict_ensemble(&trained, &cfg).unwrap();
    assert_ne!(a.outcomes, b.outcomes);
}
