//! Simulate, write, read back and fit, through the public API only.

use ionbath::collision_mc::run_ensemble;
use ionbath::config::{Profile, RunConfig};
use ionbath::estimate::lm::LmOptions;
use ionbath::estimate::relax::Readout;
use ionbath::estimate::synth::synthesize_four_level;
use ionbath::estimate::{
    fit_contrast_decay, fit_four_level, fit_fringe, fit_two_level, ContrastOptions, FourLevelFitOptions, FringeOptions,
};
use ionbath::io::{self, FitReport, Provenance};
use ionbath::ramsey::{synthesize_fringe_scan, RamseySettings};
use ionbath::rate_model::SpinPopulation;
use ionbath::reproduce::{expected_dark, mc_contrast_points, ramsey_t2, sample_counts, time_grid};

fn prov(cfg: &RunConfig) -> Provenance {
    Provenance::new(&cfg.hash(), cfg.seed)
}

fn through_csv(t: &io::Table, p: &Provenance) -> Vec<u8> {
    let mut buf = Vec::new();
    t.write(&mut buf, p).unwrap();
    buf
}

#[test]
fn relaxation_counts_survive_the_csv_and_fit_back() {
    let cfg = RunConfig::default();
    let times = time_grid(&cfg);
    let data = sample_counts(&times, &expected_dark(&cfg, &times).unwrap(), 3000, 5).unwrap();
    let buf = through_csv(&io::relaxation_table(&data), &prov(&cfg));
    let back = io::read_measurement_set(buf.as_slice()).unwrap();
    assert_eq!(back, data);
    let fit = fit_two_level(&back, &cfg.detection_model().unwrap(), &LmOptions::default()).unwrap();
    let (t1, s) = (fit.value("T1").unwrap(), fit.sigma("T1").unwrap());
    assert!((t1 - 2.50).abs() < 4.0 * s, "T1 {t1} +- {s}");
    let p = fit.value("p_inf").unwrap();
    assert!((p - 0.609).abs() < 4.0 * fit.sigma("p_inf").unwrap());
}

#[test]
fn four_level_series_with_readout_column() {
    let cfg = Profile::Yb171F2P2.defaults();
    let rules = cfg.rules().unwrap();
    let rates = cfg.kinetics.four_level.unwrap();
    let init = SpinPopulation::pure(4, 1);
    let times: Vec<f64> = (0..16).map(|k| 0.5 * k as f64).collect();
    // the two edge transfers are only distinguishable with an edge readout
    let readouts = [Readout::Manifold, Readout::Sublevel("|1,0>".into()), Readout::Sublevel("|1,-1>".into())];
    let det = cfg.detection_model().unwrap();
    let series = synthesize_four_level(&rates, &rules, &init, &times, &readouts, &det, None, 0).unwrap();

    let mut table = io::Table::new(&["t_over_tL", "n_trials", "n_dark", "readout"]);
    for s in &series {
        let label = match &s.readout {
            Readout::Manifold => "manifold".to_string(),
            Readout::Sublevel(l) => l.clone(),
        };
        for r in &s.data.records {
            table.rows.push(vec![
                io::fmt_f64(r.t_over_tl),
                r.record.n_trials.to_string(),
                r.record.n_dark.to_string(),
                label.clone(),
            ]);
        }
    }
    let buf = through_csv(&table, &prov(&cfg));
    let back = io::read_relaxation(buf.as_slice()).unwrap();
    assert_eq!(back, series);

    let mut opts = FourLevelFitOptions::new(rules, init);
    opts.steady_upper = Some(0.163);
    let fit = fit_four_level(&back, &det, &opts).unwrap();
    for (name, want) in [
        ("decay_from_center", rates.decay_from_center),
        ("transfer_back", rates.transfer_back),
        ("transfer_to_minus", rates.transfer_to_minus),
    ] {
        let got = fit.value(name).unwrap();
        assert!((got - want).abs() < 1e-5 * want.max(1.0), "{name}: {got} vs {want}");
    }
}

#[test]
fn fringe_scan_round_trip_recovers_the_period() {
    let cfg = Profile::Yb171F2P2.defaults();
    let s = RamseySettings { wait_time: 27e-3, contrast0: 0.55, ..Default::default() };
    let det: Vec<f64> = (0..41).map(|k| -60.0 + 3.0 * k as f64).collect();
    let scan = synthesize_fringe_scan(&s, &det, 3000, 9).unwrap();
    let buf = through_csv(&io::fringe_table(&scan), &prov(&cfg));
    let text = String::from_utf8(buf.clone()).unwrap();
    assert!(text.lines().nth(1).unwrap().starts_with("detuning_hz,n_trials,n_dark,p_dark,stderr"));
    let back = io::read_fringe(buf.as_slice()).unwrap();
    assert_eq!(back, scan);
    let fit = fit_fringe(&back, &FringeOptions::default()).unwrap();
    let period = fit.derived_value("period_hz").unwrap();
    assert!((period.value - 1.0 / 27e-3).abs() < 4.0 * period.sigma);
}

#[test]
fn ramsey_contrast_csv_feeds_the_contrast_fit() {
    let mut cfg = Profile::Yb171F2P2.defaults();
    cfg.ramsey.size = 20_000;
    let (mc, direct) = ramsey_t2(&cfg, 3, 2).unwrap();
    let buf = through_csv(&io::contrast_table(&mc_contrast_points(&mc)), &prov(&cfg));
    let pts = io::read_contrast(buf.as_slice()).unwrap();
    let refit = fit_contrast_decay(&pts, &ContrastOptions::default()).unwrap();
    assert_eq!(refit.value("T2"), direct.value("T2"));
    let t2 = refit.value("T2").unwrap();
    assert!((t2 - 1.4).abs() < 4.0 * refit.sigma("T2").unwrap());
}

#[test]
fn ensemble_csv_has_documented_columns() {
    let mut cfg = Profile::Yb171F1M1.defaults();
    cfg.ensemble.size = 500;
    let stats = run_ensemble(
        &cfg.initial_trajectory().unwrap(),
        &cfg.branching().unwrap(),
        &time_grid(&cfg),
        cfg.ensemble.size,
        cfg.seed,
        1,
    )
    .unwrap();
    let text = String::from_utf8(through_csv(&io::ensemble_table(&stats), &prov(&cfg))).unwrap();
    let mut lines = text.lines();
    let head = lines.next().unwrap();
    assert!(head.starts_with("# ionbath ") && head.contains(&cfg.hash()));
    assert_eq!(
        lines.next().unwrap(),
        "t_over_tL,p_1_m1,p_1_0,p_1_p1,p_0_0,stderr_1_m1,stderr_1_0,stderr_1_p1,stderr_0_0,mean_Ekin_mK,stderr_Ekin_mK"
    );
    assert_eq!(lines.count(), cfg.ensemble.n_points);
}

#[test]
fn fit_report_json_layout_is_stable() {
    let cfg = RunConfig::default();
    let times = time_grid(&cfg);
    let data = sample_counts(&times, &expected_dark(&cfg, &times).unwrap(), 3000, 1).unwrap();
    let fit = fit_two_level(&data, &cfg.detection_model().unwrap(), &LmOptions::default()).unwrap();
    let rep = FitReport { provenance: prov(&cfg), input: "x.csv".into(), fit };
    let v = serde_json::to_value(&rep).unwrap();
    let keys = |o: &serde_json::Value| {
        let mut k: Vec<String> = o.as_object().unwrap().keys().cloned().collect();
        k.sort();
        k
    };
    assert_eq!(keys(&v), ["fit", "input", "provenance"]);
    assert_eq!(keys(&v["provenance"]), ["config_sha256", "seed", "tool", "version"]);
    assert_eq!(
        keys(&v["fit"]),
        ["covariance", "derived", "flags", "model", "n_iterations", "parameters", "reduced_chi_square", "residuals"]
    );
    assert_eq!(keys(&v["fit"]["parameters"][0]), ["name", "sigma", "value"]);
    assert_eq!(v["fit"]["parameters"][2]["name"], "T1");
}

#[test]
fn manifold_only_four_level_fit_is_flagged_weak() {
    let cfg = Profile::Yb171F2P2.defaults();
    let rules = cfg.rules().unwrap();
    let rates = cfg.kinetics.four_level.unwrap();
    let init = SpinPopulation::pure(4, 1);
    let times: Vec<f64> = (0..41).map(|k| 0.25 * k as f64).collect();
    let det = cfg.detection_model().unwrap();
    let series =
        synthesize_four_level(&rates, &rules, &init, &times, &[Readout::Manifold], &det, Some(3000), 4).unwrap();
    let fit = fit_four_level(&series, &det, &FourLevelFitOptions::new(rules, init)).unwrap();
    assert!(fit.flags.iter().any(|f| f.starts_with("weakly_constrained")), "{:?}", fit.flags);
}
