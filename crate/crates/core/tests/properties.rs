//! Cross-module invariants as property tests.

use ionbath::collision_mc::run_ensemble;
use ionbath::config::{Profile, RunConfig};
use ionbath::detection::{CountRecord, DetectionModel};
use ionbath::estimate::lm::LmOptions;
use ionbath::estimate::synth::{expected_two_level, TwoLevelTruth, NOISELESS_TRIALS};
use ionbath::estimate::{fit_fringe, fit_two_level, FringeOptions};
use ionbath::io;
use ionbath::ramsey::{fringe_probability, RamseySettings};
use ionbath::rate_model::{decompose_rates, two_level_steady_state};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn ensemble_is_worker_independent(seed in any::<u64>(), workers in 2usize..6) {
        let cfg = Profile::Yb171F2P2.defaults();
        let grid = [0.0, 0.5, 1.0, 3.0];
        let init = cfg.initial_trajectory().unwrap();
        let b = cfg.branching().unwrap();
        let one = run_ensemble(&init, &b, &grid, 2100, seed, 1).unwrap();
        let many = run_ensemble(&init, &b, &grid, 2100, seed, workers).unwrap();
        prop_assert_eq!(one, many);
    }

    #[test]
    fn config_hash_tracks_content(seed in 0u64..(i64::MAX as u64), density in 1e16f64..1e19) {
        let doc = format!("seed = {seed}\n[bath]\ndensity_m3 = {density:e}\n");
        let a = RunConfig::from_toml_str(&doc).unwrap();
        let b = RunConfig::from_toml_str(&a.to_toml()).unwrap();
        prop_assert_eq!(a.hash(), b.hash());
        let mut c = a.clone();
        c.seed = seed.wrapping_add(1);
        prop_assert_ne!(a.hash(), c.hash());
    }

    #[test]
    fn noiseless_two_level_fit_is_exact(p0 in 0.6f64..0.99, p_inf in 0.05f64..0.5, t1 in 0.8f64..4.0) {
        let det = DetectionModel::new(0.95, 0.03).unwrap();
        let truth = TwoLevelTruth { p0, p_inf, t1 };
        let times: Vec<f64> = (0..25).map(|k| 0.5 * k as f64).collect();
        let fit = fit_two_level(&expected_two_level(&times, &truth, &det), &det, &LmOptions::default()).unwrap();
        prop_assert!((fit.value("T1").unwrap() - t1).abs() < 1e-8 * t1);
        prop_assert!((fit.value("p_inf").unwrap() - p_inf).abs() < 1e-8);
        prop_assert!((fit.value("p0").unwrap() - p0).abs() < 1e-8);
    }

    #[test]
    fn noiseless_fringe_center_has_no_spurious_shift(nu0 in -5.0f64..5.0, contrast in 0.3f64..0.9) {
        let s = RamseySettings {
            wait_time: 27e-3,
            contrast0: contrast,
            phase: -std::f64::consts::TAU * nu0 * 27e-3,
            ..Default::default()
        };
        let scan: Vec<(f64, CountRecord)> = (0..41)
            .map(|k| {
                let d = -60.0 + 3.0 * k as f64;
                let p = fringe_probability(d, &s);
                (d, CountRecord::new(NOISELESS_TRIALS, (p * NOISELESS_TRIALS as f64).round() as u64).unwrap())
            })
            .collect();
        let fit = fit_fringe(&scan, &FringeOptions::default()).unwrap();
        prop_assert!((fit.value("center_hz").unwrap() - nu0).abs() < 1e-9);
        prop_assert!((fit.value("contrast").unwrap() - contrast).abs() < 1e-9);
    }

    #[test]
    fn decomposition_reproduces_its_inputs(t1 in 0.5f64..5.0, p in 0.5f64..1.0) {
        let r = decompose_rates(t1, p, true).unwrap();
        prop_assert!((r.t1().unwrap() - t1).abs() < 1e-12 * t1);
        prop_assert!((two_level_steady_state(&r).unwrap() - p).abs() < 1e-12);
    }

    #[test]
    fn relaxation_csv_round_trips(
        rows in proptest::collection::vec((0.0f64..100.0, 1u64..1_000_000, 0.0f64..1.0), 1..30),
    ) {
        let mut t = 0.0;
        let records = rows
            .iter()
            .map(|(dt, n, f)| {
                t += dt + 1e-3;
                ionbath::estimate::TimedRecord {
                    t_over_tl: t,
                    record: CountRecord::new(*n, (f * *n as f64) as u64).unwrap(),
                }
            })
            .collect();
        let set = ionbath::estimate::MeasurementSet::new(records, Default::default()).unwrap();
        let mut buf = Vec::new();
        io::relaxation_table(&set).write(&mut buf, &io::Provenance::new("h", 0)).unwrap();
        prop_assert_eq!(io::read_measurement_set(buf.as_slice()).unwrap(), set);
    }
}
