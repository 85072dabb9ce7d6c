use fesim_core::noise_model::*;
use fesim_core::shaping::PulseShape;
use proptest::prelude::*;

const Q: f64 = 1.602_176_634e-19;
const K_B: f64 = 1.380_649e-23;

fn shape(tp: f64) -> PulseShape {
    PulseShape::cr_rc(3, tp).unwrap()
}

// A_p and A_s of CR-RC³ from the Γ-function closed forms
fn ap3() -> f64 {
    6f64.exp() * 720.0 / 6f64.powi(7)
}

fn as3() -> f64 {
    9.0 * 6f64.exp() * (24.0 / 6f64.powi(5) - 240.0 / 6f64.powi(6) + 720.0 / 6f64.powi(7))
}

#[test]
fn parallel_enc_independent_formula() {
    for (i_ua, tp) in [(1.0, 4.0), (3.0, 8.0), (0.5, 5.3)] {
        let expected = (Q * i_ua * 1e-6 * ap3() * tp * 1e-9).sqrt() / Q;
        let got = enc_parallel(i_ua, &shape(tp)).unwrap();
        assert!((got - expected).abs() / expected < 1e-8, "{got} vs {expected}");
    }
    // 3 µA, 8 ns
    let e = enc_parallel(3.0, &shape(8.0)).unwrap();
    assert!((e - 394.2).abs() < 0.1, "{e}");
    assert_eq!(enc_parallel(0.0, &shape(8.0)).unwrap(), 0.0);
    assert!(enc_parallel(-1.0, &shape(8.0)).is_err());
}

#[test]
fn series_enc_independent_formula() {
    let tr = InputTransistor::default();
    let t: f64 = 253.15;
    let ut = K_B * t / Q;
    let ic: f64 = 2e-3 / (0.5e-6 * 2000.0 / 0.2);
    let gm = 2e-3 / (1.3 * ut * (0.5 + (0.25 + ic).sqrt()));
    let en2 = 4.0 * K_B * t * 0.8 / gm;
    let cg = 2.0 / 3.0 * 2000.0 * 0.2 * 10.0e-15;
    let c = 5e-12 + cg;
    let expected = (en2 * c * c * as3() / (2.0 * 8e-9)).sqrt() / Q;
    let got = enc_series(5.0, &tr, &shape(8.0)).unwrap();
    assert!((got - expected).abs() / expected < 1e-8, "{got} vs {expected}");
    assert!((gm_ekv(&tr) - gm * 1e3).abs() / (gm * 1e3) < 1e-12);
    assert!((tr.gate_capacitance() - cg * 1e12).abs() < 1e-12);
}

#[test]
fn scaling_laws() {
    let tr = InputTransistor::default();
    let r = enc_parallel(2.0, &shape(8.0)).unwrap() / enc_parallel(2.0, &shape(4.0)).unwrap();
    assert!((r - 2f64.sqrt()).abs() < 1e-9);
    let r = enc_parallel(4.0, &shape(6.0)).unwrap() / enc_parallel(1.0, &shape(6.0)).unwrap();
    assert!((r - 2.0).abs() < 1e-9);
    let r = enc_series(3.0, &tr, &shape(4.0)).unwrap() / enc_series(3.0, &tr, &shape(8.0)).unwrap();
    assert!((r - 2f64.sqrt()).abs() < 1e-9);
    let mut bare = tr;
    bare.process.include_gate_capacitance = false;
    let r = enc_series(6.0, &bare, &shape(5.0)).unwrap() / enc_series(3.0, &bare, &shape(5.0)).unwrap();
    assert!((r - 2.0).abs() < 1e-9);
    assert_eq!(enc_series(0.0, &bare, &shape(5.0)).unwrap(), 0.0);
}

#[test]
fn total_is_quadrature_sum_and_unimodal() {
    let tr = InputTransistor::default();
    let mut sensor = SensorModel::pad_150um();
    sensor.capacitance = 3.0;
    let tps = linear_grid(1.0, 30.0, 0.1).unwrap();
    let totals: Vec<f64> = tps
        .iter()
        .map(|&tp| {
            let b = enc_total(&sensor, &tr, &shape(tp), 2.0).unwrap();
            assert!((b.enc_total - b.enc_parallel.hypot(b.enc_series)).abs() < 1e-9);
            b.enc_total
        })
        .collect();
    let k = argmin_first(&totals).unwrap();
    assert!(totals[..=k].windows(2).all(|w| w[1] < w[0]));
    assert!(totals[k..].windows(2).all(|w| w[1] > w[0]));
    let (tp_opt, _) = optimal_peaking_time(&sensor, &tr, 3, &tps, 2.0).unwrap();
    assert_eq!(tp_opt, tps[k]);
}

#[test]
fn optimum_matches_analytic_balance() {
    // ENC² = a·tp + b/tp is minimised at tp = sqrt(b/a), where the parallel
    // and series contributions are equal
    let tr = InputTransistor::default();
    let mut sensor = SensorModel::pad_150um();
    sensor.capacitance = 5.0;
    let a = enc_parallel(1.0, &shape(1.0)).unwrap().powi(2);
    let b = enc_series(5.0, &tr, &shape(1.0)).unwrap().powi(2);
    let tp_star = (b / a).sqrt();
    let tps = linear_grid(2.0, 20.0, 0.01).unwrap();
    let (tp_opt, budget) = optimal_peaking_time(&sensor, &tr, 3, &tps, 1.0).unwrap();
    assert!((tp_opt - tp_star).abs() <= 0.01, "{tp_opt} vs {tp_star}");
    assert!((budget.enc_parallel / budget.enc_series - 1.0).abs() < 0.01);
}

#[test]
fn leakage_pipeline() {
    let s = SensorModel::pad_150um().with_fluence(2.5e15);
    let i20 = leakage_from_fluence(&s, DEFAULT_ALPHA).unwrap();
    assert!((i20 - 4e-17 * 2.5e15 * 0.17 * 0.17 * 0.015 * 1e6).abs() < 1e-9);
    let (t0, t1) = (293.15f64, 253.15f64);
    let factor = (t1 / t0).powi(2) * (-1.21 / (2.0 * 8.617_333_262e-5) * (1.0 / t1 - 1.0 / t0)).exp();
    let i = scale_leakage_temperature(i20, t0, t1, DEFAULT_EG_EFF).unwrap();
    assert!((i - i20 * factor).abs() < 1e-12);
    assert!(i > 2.0 / 3.0 && i < 6.0, "{i}");
    let back = scale_leakage_temperature(i, t1, t0, DEFAULT_EG_EFF).unwrap();
    assert!((back - i20).abs() < 1e-9);
    assert!(scale_leakage_temperature(1.0, 293.15, 0.0, 1.21).is_err());
}

#[test]
fn snr_budget() {
    let tr = InputTransistor::default();
    let sensor = SensorModel::pad_150um();
    let b = enc_total(&sensor, &tr, &shape(8.0), 1.0).unwrap();
    // 150 µm of silicon, ~1.8 fC most-probable
    let s = snr(1.8, 1.0, &b).unwrap();
    assert!((s - 1.8 * 6241.5 / b.enc_total).abs() < 1e-9);
    assert!(snr(1.8, 0.5, &b).unwrap() < s);
    assert!(snr(0.0, 1.0, &b).is_err());
}

#[test]
fn sweep_layout_and_optima() {
    let sweep = EncSweep {
        order: 3,
        peaking_times: linear_grid(3.0, 12.0, 0.5).unwrap(),
        capacitances: vec![3.0, 5.0],
        leakages: vec![1.0, 2.0],
    };
    let r = sweep.run(&InputTransistor::default()).unwrap();
    assert_eq!(r.points.len(), 19 * 4);
    assert_eq!(r.optima.len(), 4);
    assert_eq!(r.points[0].c_pf, 3.0);
    assert_eq!(r.points[19].i_ua, 2.0);
    for o in &r.optima {
        let slice: Vec<&EncGridPoint> = r
            .points
            .iter()
            .filter(|p| p.c_pf == o.c_pf && p.i_ua == o.i_ua)
            .collect();
        let min = slice.iter().map(|p| p.enc_tot).fold(f64::MAX, f64::min);
        assert_eq!(min, o.enc_tot);
    }
    let mut buf = Vec::new();
    r.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert!(text.starts_with("tp_ns,c_pf,i_ua,enc_p,enc_s,enc_tot\n"));
    assert_eq!(text.lines().count(), 1 + 76);
    let empty = EncSweep {
        capacitances: vec![],
        ..sweep
    };
    assert!(empty.run(&InputTransistor::default()).is_err());
}

#[test]
fn process_validation() {
    let mut tr = InputTransistor::default();
    tr.process.flicker_kf = 1e-25;
    assert!(tr.validate().is_err());
    let mut tr = InputTransistor::default();
    tr.width = 0.0;
    assert!(enc_series(5.0, &tr, &shape(8.0)).is_err());
}

proptest! {
    #[test]
    fn parallel_scales_as_sqrt_tp_i(i in 0.01f64..10.0, tp in 1.0f64..20.0, k in 0.1f64..10.0) {
        let a = enc_parallel(i, &shape(tp)).unwrap();
        let b = enc_parallel(i * k, &shape(tp * k)).unwrap();
        prop_assert!((b / a - k).abs() < 1e-6 * k);
    }

    #[test]
    fn series_grows_with_capacitance(c in 0.0f64..20.0, dc in 0.01f64..5.0, tp in 1.0f64..20.0) {
        let tr = InputTransistor::default();
        prop_assert!(enc_series(c + dc, &tr, &shape(tp)).unwrap() > enc_series(c, &tr, &shape(tp)).unwrap());
    }

    #[test]
    fn gm_increases_with_current(id in 0.01f64..10.0, w in 100.0f64..5000.0) {
        let tr = InputTransistor { drain_current: id, width: w, ..InputTransistor::default() };
        let tr2 = InputTransistor { drain_current: id * 1.1, ..tr };
        prop_assert!(gm_ekv(&tr2) > gm_ekv(&tr));
        // gm/Id never exceeds the weak-inversion limit 1/(n·U_T)
        let ut = 1.380_649e-23 * tr.process.temperature / 1.602_176_634e-19;
        prop_assert!(gm_ekv(&tr) / id <= 1.0 / (1.3 * ut) + 1e-9);
    }
}
