use sparse_hc::calibration::{CalibrationRecord, NullRecords, NullRunConfig};
use sparse_hc::detector::DetectorKind;
use sparse_hc::harness::{
    calibrate_cells, localization_demo, phase_transition_sweep, rolling_detection_probability,
    run_arl_experiment, run_edd_experiment, ExperimentConfig, PValueMode, CSV_HEADER,
};
use sparse_hc::model::{Shift, Sparsity};
use sparse_hc::pvalue::NullTableCache;

fn base() -> ExperimentConfig {
    ExperimentConfig {
        n: vec![50],
        affected: Some(vec![5]),
        mu: Some(vec![1.5]),
        horizon: 400,
        b: Some(3.0),
        reps: 40,
        seed: 5,
        pvalue: PValueMode::Asymptotic,
        ..Default::default()
    }
}

#[test]
fn edd_run_is_deterministic_and_accounted() {
    let cfg = ExperimentConfig {
        affected: Some(vec![1, 5, 10]),
        ..base()
    };
    let a = run_edd_experiment(&cfg).unwrap();
    let b = run_edd_experiment(&cfg).unwrap();
    assert_eq!(a.to_csv(), b.to_csv());
    assert!(a.to_csv().starts_with(CSV_HEADER));
    for c in &a.cells {
        assert_eq!(c.n_alarms + c.n_censored, c.n_reps);
        assert_eq!(c.delays.len(), c.n_reps);
    }
    let other = run_edd_experiment(&ExperimentConfig { seed: 6, ..cfg }).unwrap();
    assert_ne!(other.to_csv(), a.to_csv());
}

#[test]
fn every_detector_runs() {
    for kind in DetectorKind::ALL {
        let cfg = ExperimentConfig {
            detector: kind,
            reps: 8,
            horizon: 150,
            b: Some(1e9),
            window: 20,
            ..base()
        };
        let res = run_edd_experiment(&cfg).unwrap();
        assert_eq!(res.cells[0].n_censored, 8, "{kind}");
        assert!(res.to_csv().lines().nth(1).unwrap().contains(",--,--,8,"));
    }
}

#[test]
fn huge_shift_everywhere_alarms_within_three_ticks() {
    let cfg = ExperimentConfig {
        n: vec![500],
        affected: Some(vec![500]),
        mu: Some(vec![10.0]),
        tau: 51,
        horizon: 100,
        b: Some(5.0),
        reps: 1000,
        ..base()
    };
    let res = run_edd_experiment(&cfg).unwrap();
    let quick = res.cells[0]
        .delays
        .iter()
        .filter(|d| matches!(d, Some(v) if *v <= 3))
        .count();
    assert!(quick as f64 >= 0.99 * 1000.0, "{quick} of 1000");
}

#[test]
fn null_runs_mostly_quiet_at_b5() {
    let cfg = ExperimentConfig {
        n: vec![500],
        affected: Some(vec![0]),
        mu: Some(vec![0.35]),
        pvalue: PValueMode::Table,
        table_samples: 10_000,
        ..base()
    };
    let cache = NullTableCache::in_memory();
    let cell = cfg.cells().unwrap()[0];
    let det = cfg.detector(&cell, &cache).unwrap();
    let recs = NullRecords::simulate(
        &det,
        &NullRunConfig {
            horizon: 4000,
            n_trials: 20,
            t_start: 0,
            seed: 1,
        },
    )
    .unwrap();
    let quiet = (0..20)
        .filter(|&i| recs.first_passage(i, 5.0).is_none())
        .count();
    assert!(quiet > 10, "{quiet} of 20 runs never crossed");
}

#[test]
fn zero_shift_delay_matches_null_run_length() {
    let cfg = ExperimentConfig {
        n: vec![50],
        mu: Some(vec![0.0]),
        assumed_mu: Some(1.0),
        horizon: 20_000,
        b: Some(1.8),
        reps: 400,
        ..base()
    };
    let edd = &run_edd_experiment(&cfg).unwrap().cells[0];
    assert_eq!(edd.n_censored, 0);
    let cell = cfg.cells().unwrap()[0];
    let sweep = phase_transition_sweep(&cfg, &cell, &[1.8]).unwrap();
    assert_eq!(sweep[0].null_censored, 0);
    let pooled = (edd.edd_se.unwrap().powi(2) + sweep[0].arl_se.powi(2)).sqrt();
    assert!(
        (edd.edd.unwrap() - sweep[0].arl).abs() <= 3.0 * pooled,
        "{:?} vs {:?}",
        edd.edd,
        sweep[0]
    );
}

#[test]
fn sweep_is_monotone_in_threshold() {
    let cfg = ExperimentConfig {
        horizon: 1500,
        reps: 30,
        ..base()
    };
    let cell = cfg.cells().unwrap()[0];
    let bs: Vec<f64> = (0..12).map(|i| 1.5 + 0.25 * i as f64).collect();
    let pts = phase_transition_sweep(&cfg, &cell, &bs).unwrap();
    for w in pts.windows(2) {
        assert!(w[1].arl >= w[0].arl);
        assert!(w[1].edd >= w[0].edd);
        assert!(w[1].null_censored >= w[0].null_censored);
    }
}

#[test]
fn rolling_probability_is_level_under_null() {
    let cfg = ExperimentConfig {
        n: vec![40],
        mu: Some(vec![0.0]),
        assumed_mu: Some(1.0),
        horizon: 150,
        reps: 600,
        ..base()
    };
    let cell = cfg.cells().unwrap()[0];
    let curve = rolling_detection_probability(&cfg, &cell, 0.95).unwrap();
    let late: Vec<f64> = curve
        .points
        .iter()
        .filter(|p| p.t > 20)
        .map(|p| p.probability)
        .collect();
    let mean = late.iter().sum::<f64>() / late.len() as f64;
    assert!((mean - 0.05).abs() < 0.015, "mean exceedance {mean}");
    assert!(curve.marker.is_none());
}

#[test]
fn rolling_marker_at_theory_delay() {
    let cfg = ExperimentConfig {
        n: vec![100],
        affected: None,
        mu: None,
        beta: Some(vec![0.7]),
        r: Some(vec![0.1]),
        tau: 10,
        horizon: 30,
        reps: 50,
        ..base()
    };
    let cell = cfg.cells().unwrap()[0];
    assert_eq!(cell.sparsity, Sparsity::Beta(0.7));
    assert_eq!(cell.shift, Shift::R(0.1));
    let curve = rolling_detection_probability(&cfg, &cell, 0.95).unwrap();
    assert_eq!(curve.marker, Some(12));
    assert_eq!(
        curve.to_csv().lines().filter(|l| l.ends_with(",1")).count(),
        1
    );
}

#[test]
fn localization_recovers_strong_streams() {
    let cfg = ExperimentConfig {
        n: vec![200],
        affected: Some(vec![20]),
        mu: Some(vec![4.0]),
        tau: 20,
        horizon: 200,
        ..base()
    };
    let cell = cfg.cells().unwrap()[0];
    let loc = localization_demo(&cfg, &cell, 4.0, 3).unwrap();
    assert!(loc.alarm_time.unwrap() >= 20);
    let found = loc
        .affected
        .iter()
        .filter(|i| loc.selected.contains(i))
        .count();
    assert!(found as f64 >= 0.8 * loc.affected.len() as f64, "{loc:?}");
    assert!(2 * found >= loc.selected.len(), "{loc:?}");
}

#[test]
fn calibration_records_round_trip() {
    let cfg = ExperimentConfig {
        n: vec![30],
        b: None,
        target_arl: Some(300.0),
        cal_horizon: 3000,
        cal_trials: 200,
        ..base()
    };
    let recs = calibrate_cells(&cfg).unwrap();
    assert_eq!(recs.len(), 1);
    let text = recs[0].to_toml_string().unwrap();
    assert_eq!(CalibrationRecord::from_toml_str(&text).unwrap(), recs[0]);
    let arl = run_arl_experiment(&ExperimentConfig {
        b: Some(recs[0].b),
        target_arl: None,
        ..cfg.clone()
    })
    .unwrap();
    let est = arl.cells[0].arl_est.unwrap();
    assert!(
        (est / 300.0 - 1.0).abs() < 0.15,
        "ARL at calibrated b: {est}"
    );
}

#[test]
fn config_round_trip_and_rejects_unknown_keys() {
    let cfg = ExperimentConfig {
        beta: Some(vec![0.6, 0.7]),
        affected: None,
        r: Some(vec![0.1]),
        mu: None,
        ..base()
    };
    let text = cfg.to_toml_string().unwrap();
    assert_eq!(ExperimentConfig::from_toml_str(&text).unwrap(), cfg);
    assert!(ExperimentConfig::from_toml_str("nonsense = 3\n").is_err());
    assert!(ExperimentConfig::from_toml_str("I = [1]\nmu = [1.0]\nb = 2.0\n").is_ok());
    assert!(ExperimentConfig { tau: 0, ..base() }.validate().is_err());
}
