mod common;

use common::{brute_force_knn, random_tree, reference_data, small_data};
use hhar::diffcore::seed_rng;
use hhar::harness::knn::knn_predictions;
use hhar::harness::mlp::baseline_config;
use hhar::harness::report::Status;
use hhar::harness::{ablation_report, evaluate, knn_baseline, knn_predict, train_mlp, Report, Row, Variant};
use hhar::model::Widths;
use hhar::objectives::{LossTerms, TrainConfig};
use hhar::{generate_synthetic, train, Dataset, Split, SyntheticSpec};
use rand::Rng as _;

fn random_points(n: usize, dim: usize, seed: u64) -> Dataset {
    let mut rng = seed_rng(seed);
    let h = random_tree(8, &mut rng);
    // coarse grid values make exact distance ties common
    let features = (0..n * dim).map(|_| f64::from(rng.random_range(-3i32..=3))).collect();
    let terminals = (0..n).map(|_| rng.random_range(0..h.len())).collect();
    Dataset::new(h, dim, features, terminals).unwrap().split([0.5, 0.0, 0.5], seed).unwrap()
}

#[test]
fn knn_matches_all_pairs_oracle() {
    for seed in 0..10 {
        let data = random_points(200, 3, seed);
        let train_idx = data.indices(Split::Train);
        let rows: Vec<Vec<f64>> = train_idx.iter().map(|&i| data.row(i).to_vec()).collect();
        let terms: Vec<usize> = train_idx.iter().map(|&i| data.terminal(i)).collect();
        for k in [1, 2, 7, 15] {
            let got = knn_predictions(&data, k, Split::Test).unwrap();
            for (&i, g) in data.indices(Split::Test).iter().zip(got) {
                assert_eq!(g, brute_force_knn(&rows, &terms, data.hierarchy.len(), data.row(i), k));
            }
        }
    }
}

#[test]
fn knn_on_noise_free_data_is_perfect() {
    let spec = SyntheticSpec { sigma: 0.0, per_leaf: 10, ..Default::default() };
    let data = generate_synthetic(&spec).unwrap().split([0.8, 0.0, 0.2], 1).unwrap();
    let m = knn_baseline(&data, 7, Split::Test).unwrap();
    assert_eq!((m.single_label_accuracy, m.exact_match), (1.0, 1.0));
}

#[test]
fn knn_k_exceeding_train_size_fails() {
    let data = Dataset::new(common::four_node(), 1, vec![0.0, 1.0, 2.0], vec![0, 1, 2]).unwrap();
    assert!(knn_baseline(&data, 3, Split::Train).is_ok());
    assert!(knn_baseline(&data, 4, Split::Train).unwrap_err().is_validation());
    assert_eq!(knn_predict(&[0.0, 1.0, 2.0], &[0, 1, 2], 1, 4, &[2.0], 1).unwrap(), 2);
}

#[test]
fn metrics_are_bounded_and_exact_match_implies_a_path() {
    let data = small_data(3);
    for seed in 0..5 {
        let cfg = TrainConfig { epochs: 2, batch_size: 8, seed, ..Default::default() };
        let mut mc = hhar::ModelConfig::new(data.dim());
        mc.widths = Widths::uniform(4);
        let t = train(&data, mc, &cfg).unwrap();
        for split in [Split::Val, Split::Test] {
            let m = evaluate(&t.model, &data, split).unwrap();
            for v in [m.single_label_accuracy, m.exact_match, m.micro_accuracy, m.path_consistency] {
                assert!((0.0..=1.0).contains(&v));
            }
            assert!(m.exact_match <= m.path_consistency);
        }
    }
}

#[test]
fn evaluate_rejects_an_empty_split() {
    let data = small_data(1).split([1.0, 0.0, 0.0], 0).unwrap();
    let (mlp, _) = train_mlp(&data, 4, &TrainConfig { epochs: 1, ..Default::default() }).unwrap();
    assert!(evaluate(&mlp, &data, Split::Test).unwrap_err().is_validation());
}

#[test]
fn mlp_is_deterministic_and_learns_separable_data() {
    let data = reference_data(0);
    let cfg = baseline_config(11);
    let (a, _) = train_mlp(&data, 64, &cfg).unwrap();
    let (b, _) = train_mlp(&data, 64, &cfg).unwrap();
    assert_eq!(a, b);
    let m = evaluate(&a, &data, Split::Test).unwrap();
    assert!(m.single_label_accuracy > 0.95, "{m:?}");
}

#[test]
fn mlp_tracks_the_flat_cross_entropy_variant() {
    let variant = Variant::NoGraph;
    let mut gaps = Vec::new();
    for seed in 0..5 {
        let data = reference_data(seed);
        let (mlp, _) = train_mlp(&data, 64, &baseline_config(seed)).unwrap();
        let mlp_acc = evaluate(&mlp, &data, Split::Test).unwrap().single_label_accuracy;
        let mut mc = variant.model_config(data.dim(), Widths::default());
        mc.feature_propagation = false;
        let flat_cfg = TrainConfig { seed, terms: LossTerms::parse("ce").unwrap(), ..Default::default() };
        let flat = train(&data, mc, &flat_cfg).unwrap();
        let flat_acc = evaluate(&flat.model, &data, Split::Test).unwrap().single_label_accuracy;
        gaps.push(flat_acc - mlp_acc);
    }
    let mean = gaps.iter().sum::<f64>() / gaps.len() as f64;
    assert!(mean.abs() < 0.05, "gaps {gaps:?}");
}

#[test]
fn ablation_covers_the_grid_and_matches_a_standalone_run() {
    let data = small_data(4);
    let widths = Widths::uniform(4);
    let base = TrainConfig { epochs: 3, batch_size: 8, ..Default::default() };
    let fractions = [0.5, 0.25, 0.25];
    let report = ablation_report(&data, fractions, widths, &base, &Variant::ALL, &[6], Split::Test).unwrap();
    assert_eq!(report.rows.len(), 8);
    let names: Vec<&str> = report.rows.iter().map(|r| r.name.as_str()).collect();
    for v in Variant::ALL {
        assert!(names.contains(&v.name()));
    }
    assert!(report.rows.iter().all(|r| r.status == Status::Ok));

    let split = data.clone().split(fractions, 6).unwrap();
    let mut mc = hhar::ModelConfig::new(split.dim());
    mc.widths = widths;
    let standalone = train(&split, mc, &TrainConfig { seed: 6, ..base }).unwrap();
    let m = evaluate(&standalone.model, &split, Split::Test).unwrap();
    assert_eq!(report.row("full").unwrap().metrics, Some(m));
    assert_eq!(report.row("full").unwrap().final_loss, standalone.log.last().map(|e| e.total));

    let back = Report::from_json(&report.to_json().unwrap()).unwrap();
    assert_eq!(back, report);
}

#[test]
fn failures_are_recorded_per_row() {
    let ok = hhar::harness::score(
        &common::four_node(),
        &[0],
        &[hhar::model::Prediction { terminal: Some(0), labels: vec![true, false, false, false] }],
        &[hhar::model::Prediction { terminal: Some(0), labels: vec![true, false, false, false] }],
    )
    .unwrap();
    let row = Row::from_runs("x", vec![Ok((ok, 1.0)), Err(hhar::Error::Validation("boom".into()))]);
    assert_eq!(row.status, Status::Failed);
    assert_eq!(row.metrics, Some(ok));
    assert!(row.error.as_deref().unwrap().contains("boom"));
    let table = Report::new("ablate", vec![row]).to_table(false);
    assert!(table.contains("failed") && table.contains("boom"));
}
