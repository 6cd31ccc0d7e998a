mod common;

use ndarray::Array2;
use shadowleak::dataset::{generate_dataset, mean_signal_power, LabeledDataset, ObservationMeta};
use shadowleak::experiments::{
    pearson, predict_test, run_pair_analysis, run_pose_report, run_snr_sweep, run_umbra_report, select_pairs, Cell,
    Predictions, SweepConfig, TrialKey,
};
use shadowleak::mlclass::Classifier;

fn sweep_config() -> SweepConfig {
    SweepConfig {
        snr_start: -40.0,
        snr_stop: 60.0,
        snr_step: 25.0,
        subsets: vec![2, 4],
        trials: 3,
        rank: Some(2),
        ..Default::default()
    }
}

fn dataset() -> LabeledDataset {
    common::small_config(4, 200, 21).generate().unwrap()
}

#[test]
fn sweep_is_deterministic_across_thread_counts() {
    let ds = common::small_config(3, 40, 2).generate().unwrap();
    let cfg = SweepConfig {
        subsets: vec![2, 3],
        trials: 2,
        ..sweep_config()
    };
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| run_snr_sweep(&ds, &cfg).unwrap().to_csv_string())
    };
    let once = run(1);
    assert_eq!(once, run(3));
    assert_eq!(once, run(1));
    let other_seed = run_snr_sweep(&ds, &SweepConfig { seed: 99, ..cfg.clone() }).unwrap();
    assert_ne!(once, other_seed.to_csv_string());
}

#[test]
fn sweep_spans_chance_to_perfect() {
    let ds = dataset();
    let table = run_snr_sweep(&ds, &sweep_config()).unwrap();
    for (m, chance) in [("2", 0.5), ("4", 0.25)] {
        let curve = table.curve("sweep", m);
        assert_eq!(curve.len(), 5);
        assert!((curve[0].1 - chance).abs() < 0.15, "M={m} at {} dB: {}", curve[0].0, curve[0].1);
        assert!(curve[4].1 >= 0.9, "M={m} at {} dB: {}", curve[4].0, curve[4].1);
    }
    let rows = table.rows.iter().filter(|r| r.trial == TrialKey::Mean).count();
    assert_eq!(rows, 10);
}

#[test]
fn sweep_agrees_with_a_standalone_classifier() {
    let ds = dataset();
    let cfg = SweepConfig {
        subsets: vec![4],
        ..sweep_config()
    };
    let table = run_snr_sweep(&ds, &cfg).unwrap();
    let power = mean_signal_power(&ds).unwrap();
    for snr in [-15.0, 10.0, 35.0] {
        for trial in 0..3u32 {
            let cell = Cell::new(power, snr, trial, cfg.seed).unwrap();
            let clf: Classifier = cell.fit_classifier(&ds, &ds.classes(), 2, cfg.policy).unwrap();
            let direct = predict_test(&ds, &clf, snr, trial, cfg.seed).unwrap().accuracy();
            let row = table
                .rows
                .iter()
                .find(|r| r.snr_db == snr && r.trial == TrialKey::Trial(trial))
                .unwrap();
            assert_eq!(row.accuracy, direct, "{snr} dB trial {trial}");
        }
    }
}

#[test]
fn oversized_subset_is_rejected() {
    let ds = common::small_config(3, 20, 1).generate().unwrap();
    let cfg = SweepConfig {
        subsets: vec![2, 4],
        ..sweep_config()
    };
    assert!(run_snr_sweep(&ds, &cfg).is_err());
}

#[test]
fn duplicated_identity_is_indistinguishable() {
    let cfg = common::small_config(2, 200, 4);
    let scene = cfg.build_scene().unwrap();
    let mut identities = scene.identities.clone();
    let mut twin = identities[0].clone();
    twin.label = 3;
    identities.push(twin);
    let ds = generate_dataset(&scene.model, &identities, &cfg.scene, &scene.transport, 200, 0.9, 4).unwrap();
    let table = run_pair_analysis(&ds, &[(1, 3), (1, 2)], &sweep_config()).unwrap();
    let twin_curve = table.curve("pairs", "1-3");
    let mean = twin_curve.iter().map(|p| p.1).sum::<f64>() / twin_curve.len() as f64;
    assert!((mean - 0.5).abs() < 0.1, "twin pair accuracy {mean}");
    let d = |key: &str| table.rows.iter().find(|r| r.subset_or_pair == key).unwrap().d_ij.unwrap();
    assert!(d("1-3") < 0.1 * d("1-2"), "twin distance {} vs {}", d("1-3"), d("1-2"));
    assert!(table.curve("pairs", "1-2").last().unwrap().1 >= 0.95);
    assert!(run_pair_analysis(&ds, &[(1, 1), (1, 2)], &sweep_config()).is_err());
}

#[test]
fn selected_pairs_cover_the_distance_range() {
    let ds = common::small_config(6, 20, 9).generate().unwrap();
    let pairs = select_pairs(&ds, 4).unwrap();
    assert_eq!(pairs.len(), 4);
    assert!(pairs.windows(2).all(|w| w[0].2 <= w[1].2));
    let means = shadowleak::experiments::class_means(&ds).unwrap();
    let mut all = Vec::new();
    for (a, ma) in &means {
        for (b, mb) in &means {
            if a < b {
                all.push(shadowleak::experiments::pair_distance(ma.view(), mb.view()));
            }
        }
    }
    let lo = all.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = all.iter().cloned().fold(0.0, f64::max);
    assert_eq!((pairs[0].2, pairs[3].2), (lo, hi));
}

/// Four 2×2 images with 0, 1, 2 and 4 black pixels; two test rows per class.
fn hand_built() -> (LabeledDataset, Predictions) {
    let signals = Array2::from_shape_vec(
        (4, 4),
        vec![
            1.0, 1.0, 1.0, 1.0, //
            0.0, 1.0, 1.0, 1.0, //
            0.0, 0.0, 1.0, 1.0, //
            0.0, 0.0, 0.0, 0.0,
        ],
    )
    .unwrap();
    let meta: Vec<ObservationMeta> = (0..4)
        .map(|i| ObservationMeta {
            elevation_deg: i as f64,
            azimuth_deg: -(i as f64),
            light_coef: i as f64 * 0.25,
            sample_index: i as f64,
        })
        .collect();
    let ds = LabeledDataset {
        signals,
        labels: vec![1, 1, 2, 2],
        meta,
        train: vec![],
        test: vec![0, 1, 2, 3],
        side: 2,
        seed: 0,
        config: None,
    };
    let predictions = Predictions {
        rows: vec![0, 1, 2, 3],
        truth: vec![1, 1, 2, 2],
        predicted: vec![1, 2, 2, 1],
        cell: Cell::new(1.0, 100.0, 0, 0).unwrap(),
    };
    (ds, predictions)
}

#[test]
fn umbra_report_on_known_images() {
    let (ds, predictions) = hand_built();
    let report = run_umbra_report(&ds, &predictions, 0.0, None).unwrap();
    let [correct, incorrect, all] = &report.partitions;
    assert_eq!((correct.count, incorrect.count, all.count), (2, 2, 4));
    assert_eq!(correct.count + incorrect.count, ds.test.len());
    assert_eq!(correct.mean, Some((0.0 + 0.5) / 2.0));
    assert_eq!(incorrect.mean, Some((0.25 + 1.0) / 2.0));
    assert_eq!(all.mean, Some(1.75 / 4.0));
    assert!(run_umbra_report(&ds, &predictions, -1.0, None).is_err());
}

#[test]
fn pose_report_partitions_and_correlation() {
    let (ds, predictions) = hand_built();
    let report = run_pose_report(&ds, &predictions).unwrap();
    let [correct, incorrect, all] = &report.partitions;
    assert_eq!(correct.count + incorrect.count, all.count);
    assert_eq!(correct.mean_elevation_deg, Some(1.0));
    assert_eq!(incorrect.mean_azimuth_deg, Some(-2.0));
    assert!((all.light_azimuth_corr.unwrap() + 1.0).abs() < 1e-12);
}

fn two_pass_pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let syy: f64 = y.iter().map(|b| (b - my) * (b - my)).sum();
    sxy / (sxx * syy).sqrt()
}

proptest::proptest! {
    #[test]
    fn pearson_matches_two_pass_formula(
        pairs in proptest::collection::vec((-1e3..1e3f64, -1e3..1e3f64), 3..60),
    ) {
        let (x, y): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        if let Some(r) = pearson(&x, &y) {
            proptest::prop_assert!((r - two_pass_pearson(&x, &y)).abs() < 1e-9);
            proptest::prop_assert!(r.abs() <= 1.0 + 1e-12);
        }
    }
}
