use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use spinpol::kinetics::{
    concentrations, correlation, eas_solve, global_fit, mixed_time_axis, synthesize, synthetic_eas,
    KineticFitSettings, SequentialModel, TADataset,
};

fn wavelengths(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 450.0 + 300.0 * i as f64 / (n - 1) as f64)
        .collect()
}

fn noisy_dataset(
    model: &SequentialModel<f64>,
    times: Vec<f64>,
    noise: f64,
    seed: u64,
) -> (TADataset<f64>, DMatrix<f64>) {
    let wl = wavelengths(60);
    let eas = synthetic_eas(model.n_compartments(), &wl);
    let clean = synthesize(model, &times, &eas).unwrap();
    let peak = clean.amax();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = Normal::new(0.0, noise * peak).unwrap();
    let data = clean.map(|v| v + n.sample(&mut rng));
    (TADataset::new(times, wl, data).unwrap(), eas)
}

#[test]
fn single_exponential_without_irf() {
    let m = SequentialModel::new(vec![1.0], 0.0, 0.0);
    let t: Vec<f64> = (0..50).map(|i| i as f64 * 0.1).collect();
    let c = concentrations(&m, &t).unwrap();
    for (i, t) in t.iter().enumerate() {
        assert!((c[(i, 0)] - (-t).exp()).abs() < 1e-15);
    }
}

#[test]
fn two_compartments_match_bateman_formula() {
    let (t1, t2) = (1.0, 2.0);
    let m = SequentialModel::new(vec![t1, t2], 0.0, 0.0);
    let t: Vec<f64> = (0..80).map(|i| i as f64 * 0.125).collect();
    let c = concentrations(&m, &t).unwrap();
    for (i, t) in t.iter().enumerate() {
        let want = t2 / (t2 - t1) * ((-t / t2).exp() - (-t / t1).exp());
        assert!((c[(i, 1)] - want).abs() < 1e-14, "t = {t}");
    }
}

#[test]
fn irf_rise_has_max_slope_at_t0() {
    let step = 0.01;
    let m = SequentialModel::new(vec![1000.0], 0.5, 2.0);
    let t: Vec<f64> = (0..500).map(|i| i as f64 * step).collect();
    let c = concentrations(&m, &t).unwrap();
    let (mut best, mut at) = (0.0, 0.0);
    for i in 1..t.len() {
        let s = c[(i, 0)] - c[(i - 1, 0)];
        if s > best {
            best = s;
            at = 0.5 * (t[i] + t[i - 1]);
        }
    }
    assert!((at - 2.0).abs() <= step, "max slope at {at}");
}

#[test]
fn coincident_lifetimes_are_rejected() {
    let m = SequentialModel::new(vec![5.0, 5.0 * (1.0 + 1e-12)], 0.0, 0.0);
    assert!(concentrations(&m, &[0.0, 1.0]).is_err());
}

#[test]
fn exact_eas_recovery_and_normal_equations() {
    let m = SequentialModel::new(vec![1.3, 17.0, 240.0], 0.3, 0.0);
    let times = mixed_time_axis(-1.0, 5.0, 60, 2000.0, 60);
    let wl = wavelengths(40);
    let truth = synthetic_eas(3, &wl);
    let c = concentrations(&m, &times).unwrap();
    let data = TADataset::new(times.clone(), wl.clone(), &c * &truth).unwrap();
    let eas = eas_solve(&c, &data).unwrap();
    assert!((&eas - &truth).amax() < 1e-10);

    let (noisy, _) = noisy_dataset(&m, times, 0.01, 3);
    let e = eas_solve(&c, &noisy).unwrap();
    let normal = c.transpose() * (&noisy.delta_a - &c * &e);
    assert!(normal.amax() < 1e-8, "{}", normal.amax());
}

#[test]
fn rank_deficient_concentrations_rejected() {
    let c = DMatrix::from_fn(10, 2, |i, _| i as f64);
    let data = TADataset::new(
        (0..10).map(f64::from).collect(),
        vec![500.0, 510.0],
        DMatrix::zeros(10, 2),
    )
    .unwrap();
    let err = eas_solve(&c, &data).unwrap_err().to_string();
    assert!(err.contains("condition number"), "{err}");
}

#[test]
fn noisy_three_compartment_eas_correlates_with_truth() {
    let m = SequentialModel::new(vec![2.9, 1500.0, 1.6e8], 0.2, 0.0);
    let times = mixed_time_axis(-2.0, 10.0, 120, 5e8, 120);
    let (data, truth) = noisy_dataset(&m, times.clone(), 0.01, 5);
    let c = concentrations(&m, &times).unwrap();
    let eas = eas_solve(&c, &data).unwrap();
    for k in 0..3 {
        let r = correlation(
            eas.row(k).transpose().as_slice(),
            truth.row(k).transpose().as_slice(),
        );
        assert!(r > 0.99, "compartment {k}: {r}");
    }
}

fn check_round_trip(
    truth: SequentialModel<f64>,
    start: SequentialModel<f64>,
    times: Vec<f64>,
    seed: u64,
) {
    let (data, eas) = noisy_dataset(&truth, times, 0.01, seed);
    let fit = global_fit(&data, &start, &KineticFitSettings::default()).unwrap();
    for (got, want) in fit.model.lifetimes.iter().zip(&truth.lifetimes) {
        assert!(
            (got / want - 1.0).abs() < 0.02,
            "{:?} vs {:?}",
            fit.model.lifetimes,
            truth.lifetimes
        );
    }
    for k in 0..truth.n_compartments() {
        let r = correlation(
            fit.eas.row(k).transpose().as_slice(),
            eas.row(k).transpose().as_slice(),
        );
        assert!(r > 0.99, "compartment {k}: {r}");
    }
    assert!(!fit.flat_objective);
    assert!(fit.converged, "{}", fit.report());
}

#[test]
fn room_temperature_two_step_round_trip() {
    check_round_trip(
        SequentialModel::new(vec![1.1, 46.3e6], 0.15, 0.0),
        SequentialModel::new(vec![0.7, 80e6], 0.25, 0.1),
        mixed_time_axis(-2.0, 8.0, 120, 2e8, 120),
        21,
    );
}

#[test]
fn low_temperature_three_step_round_trip() {
    check_round_trip(
        SequentialModel::new(vec![2.90, 1500.0, 160e6], 0.15, 0.0),
        SequentialModel::new(vec![2.0, 900.0, 250e6], 0.2, 0.05),
        mixed_time_axis(-2.0, 10.0, 120, 6e8, 160),
        22,
    );
}

#[test]
fn zero_data_flags_flat_objective() {
    let times = mixed_time_axis(-1.0, 5.0, 20, 100.0, 20);
    let data = TADataset::new(
        times.clone(),
        wavelengths(5),
        DMatrix::zeros(times.len(), 5),
    )
    .unwrap();
    let fit = global_fit(
        &data,
        &SequentialModel::new(vec![1.0, 10.0], 0.2, 0.0),
        &KineticFitSettings::default(),
    )
    .unwrap();
    assert!(fit.flat_objective);
    assert_eq!(fit.residual_norm, 0.0);
    assert!(fit.eas.iter().all(|v| *v == 0.0));
}

#[test]
fn global_fit_is_deterministic() {
    let truth = SequentialModel::new(vec![3.0, 300.0], 0.2, 0.0);
    let (data, _) = noisy_dataset(&truth, mixed_time_axis(-1.0, 10.0, 60, 3000.0, 60), 0.01, 9);
    let s = KineticFitSettings {
        max_iterations: 600,
        ..Default::default()
    };
    let a = global_fit(&data, &SequentialModel::new(vec![2.0, 500.0], 0.3, 0.0), &s).unwrap();
    let b = global_fit(&data, &SequentialModel::new(vec![2.0, 500.0], 0.3, 0.0), &s).unwrap();
    assert_eq!(a, b);
}

#[test]
fn solvent_component_adds_irf_column() {
    let mut m = SequentialModel::<f64>::new(vec![1.0, 10.0], 0.4, 0.0);
    m.solvent_component = true;
    let c = concentrations(&m, &[-1.0, 0.0, 1.0]).unwrap();
    assert_eq!(c.ncols(), 3);
    assert!((c[(1, 2)] - 1.0).abs() < 1e-15);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn concentrations_nonnegative_and_total_nonincreasing(
        l1 in -1.0f64..6.0, l2 in -1.0f64..6.0, l3 in -1.0f64..6.0,
        irf in 0.0f64..1.0, t0 in -1.0f64..1.0,
    ) {
        let taus = vec![10f64.powf(l1), 10f64.powf(l2), 10f64.powf(l3)];
        prop_assume!((taus[0] - taus[1]).abs() > 1e-3 * taus[0] && (taus[1] - taus[2]).abs() > 1e-3 * taus[1] && (taus[0] - taus[2]).abs() > 1e-3 * taus[0]);
        let m = SequentialModel::new(taus, irf, t0);
        let times = mixed_time_axis(-3.0, 5.0, 80, 1e7, 120);
        let c = concentrations(&m, &times).unwrap();
        prop_assert!(c.iter().all(|v| *v >= -1e-12));
        let mut prev = f64::INFINITY;
        for (i, t) in times.iter().enumerate() {
            let total: f64 = c.row(i).iter().sum();
            if *t > t0 + 3.0 * irf {
                prop_assert!(total <= prev + 1e-12, "t = {}", t);
                prev = total;
            }
        }
    }

    #[test]
    fn projection_is_stationary(seed in 0u64..1000, i in 0usize..2, j in 0usize..8, delta in -1.0f64..1.0) {
        prop_assume!(delta.abs() > 1e-3);
        let m = SequentialModel::new(vec![2.0, 40.0], 0.3, 0.0);
        let times = mixed_time_axis(-1.0, 6.0, 40, 400.0, 40);
        let wl = wavelengths(8);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = Normal::new(0.0, 1.0).unwrap();
        let data = TADataset::new(times.clone(), wl, DMatrix::from_fn(times.len(), 8, |_, _| n.sample(&mut rng))).unwrap();
        let c = concentrations(&m, &times).unwrap();
        let eas = eas_solve(&c, &data).unwrap();
        let base = (&data.delta_a - &c * &eas).norm_squared();
        let mut moved = eas.clone();
        moved[(i, j)] += delta * 1e-4;
        let after = (&data.delta_a - &c * &moved).norm_squared();
        prop_assert!(after >= base - 1e-8 * base.max(1.0));
    }
}
