use super::*;
use crate::data::{synthetic, Graph, PerturbMode, Target, Task};
use crate::tensor::Tensor;

fn quick(seed: u64) -> TrainSpec {
    TrainSpec {
        hidden: 8,
        max_epochs: 15,
        patience: 5,
        batch_size: 8,
        lr: 0.01,
        seed,
        ..TrainSpec::default()
    }
}

fn toy() -> GraphDataset {
    // class 0: attribute [1, 0] on a path; class 1: [0, 1] on a triangle
    let graphs = (0..8)
        .map(|i| {
            let c = i % 2;
            let (n, edges) = if c == 0 {
                (3, vec![(0, 1), (1, 2)])
            } else {
                (3, vec![(0, 1), (1, 2), (0, 2)])
            };
            let mut x = Tensor::zeros(n, 2);
            for v in 0..n {
                x.set(v, c, 1.0);
            }
            Graph::new(n, edges, x, Target::Class(c)).unwrap()
        })
        .collect();
    GraphDataset {
        name: "toy".into(),
        graphs,
        attr_kind: crate::data::AttrKind::Attributed,
        attr_dim: 2,
        task: Task::Classification { num_classes: 2 },
    }
}

#[test]
fn sample_std_matches_direct_formula() {
    let v = [0.7, 0.8, 0.75, 0.9];
    let (m, s) = mean_std(&v);
    assert!((m - 0.7875).abs() < 1e-15);
    let direct = ((0.0875f64.powi(2) + 0.0125f64.powi(2) + 0.0375f64.powi(2) + 0.1125f64.powi(2)) / 3.0).sqrt();
    assert!((s - direct).abs() < 1e-15);
    assert_eq!(mean_std(&[0.5]), (0.5, 0.0));
}

#[test]
fn constant_loss_stops_at_patience() {
    let ds = toy();
    let ids: Vec<usize> = (0..8).collect();
    let spec = TrainSpec {
        lr: 0.0,
        weight_decay: 0.0,
        max_epochs: 300,
        ..quick(1)
    };
    let spec = TrainSpec { patience: 50, ..spec };
    let out = train_one(&ds, &ids, &ids, &spec).unwrap();
    assert_eq!(out.history.len(), 51);
    assert_eq!(out.best_epoch, 1);
}

#[test]
fn separable_toy_reaches_full_training_accuracy() {
    let ds = toy();
    let ids: Vec<usize> = (0..8).collect();
    let spec = TrainSpec {
        hidden: 16,
        max_epochs: 300,
        patience: 300,
        ..quick(2)
    };
    let out = train_one(&ds, &ids, &ids, &spec).unwrap();
    assert!(out.history.iter().any(|r| r.val_metric == 1.0));
}

#[test]
fn training_is_deterministic_and_returns_best_epoch() {
    let ds = synthetic::classification(30, 3).unwrap();
    let train: Vec<usize> = (0..20).collect();
    let val: Vec<usize> = (20..30).collect();
    let spec = TrainSpec {
        dropout: 0.5,
        ..quick(3)
    };
    let a = train_one(&ds, &train, &val, &spec).unwrap();
    let b = train_one(&ds, &train, &val, &spec).unwrap();
    assert_eq!(a.history, b.history);
    assert_eq!(a.params, b.params);
    let min = a.history.iter().map(|r| r.val_loss).fold(f64::INFINITY, f64::min);
    assert_eq!(a.best_val_loss, min);
    let first_min = a.history.iter().find(|r| r.val_loss == min).unwrap().epoch;
    assert_eq!(a.best_epoch, first_min);
    let (val_loss, _) = evaluate_ids(&a.params, &a.config, &ds, &val).unwrap();
    assert_eq!(val_loss, a.best_val_loss);
}

#[test]
fn single_point_grid_is_plain_kfold() {
    let ds = synthetic::classification(30, 4).unwrap();
    let spec = quick(0);
    let report = grid_search_cv(&ds, &Grid::single(&spec), &spec, 3, 11, 1).unwrap();
    let splits = crate::data::stratified_kfold(&ds, 3, 11).unwrap();
    for (f, split) in splits.iter().enumerate() {
        let direct = run_fold(
            &ds,
            split,
            &spec.with_seed(crate::rng::derive(11, &[crate::rng::TAG_FOLD, f as u64])),
        )
        .unwrap();
        assert_eq!(report.folds[f], direct);
    }
    assert_eq!(report.folds.len(), 3);
    let tests: Vec<f64> = report.folds.iter().map(|f| f.test_metric).collect();
    assert_eq!((report.mean, report.std), mean_std(&tests));
}

#[test]
fn parallel_and_serial_grids_agree() {
    let ds = synthetic::classification(24, 5).unwrap();
    let spec = TrainSpec {
        max_epochs: 4,
        ..quick(0)
    };
    let grid = Grid {
        lr: vec![0.01, 0.001],
        ..Grid::single(&spec)
    };
    let a = grid_search_cv(&ds, &grid, &spec, 3, 2, 1).unwrap();
    let b = grid_search_cv(&ds, &grid, &spec, 3, 2, 3).unwrap();
    assert_eq!(a.folds, b.folds);
    assert_eq!(a.grid, b.grid);
    let best = a.grid.iter().map(|g| g.mean_val_metric).fold(f64::NEG_INFINITY, f64::max);
    let first = a.grid.iter().find(|g| g.mean_val_metric == best).unwrap();
    assert_eq!(a.spec, first.spec);
}

#[test]
fn grids_have_expected_sizes() {
    assert_eq!(Grid::full().len(), 48);
    assert_eq!(Grid::fast().len(), 8);
    let specs = Grid::full().specs(&TrainSpec::default());
    assert_eq!(specs.len(), 48);
    assert_eq!((specs[0].lr, specs[0].dropout), (0.005, 0.0));
    assert_eq!(specs[1].dropout, 0.5);
}

#[test]
fn perturbation_table_has_one_row_per_ratio() {
    let ds = synthetic::classification(18, 6).unwrap();
    let settings = CvSettings {
        grid: Grid::single(&quick(0)),
        base: TrainSpec {
            max_epochs: 2,
            ..quick(0)
        },
        k: 3,
        seed: 9,
        jobs: 1,
    };
    let report = run_perturbation(&ds, PerturbMode::Drop, &perturbation_ratios(), &settings).unwrap();
    assert_eq!(report.rows.len(), 6);
    assert!(report.rows.iter().all(|r| r.mean.is_finite() && r.std.is_finite()));
    let csv = table_csv(&report.rows);
    assert_eq!(csv.lines().count(), 7);
    assert!(csv.starts_with("key,mean,std,seed\ndrop-0.0,"));
    let baseline = grid_search_cv(&ds, &settings.grid, &settings.base, 3, 9, 1).unwrap();
    assert_eq!(report.runs[0].folds, baseline.folds);
}

#[test]
fn regression_reports_baseline_column() {
    let ds = synthetic::regression(40, 7).unwrap();
    let spec = TrainSpec {
        max_epochs: 3,
        ..regression_spec(&quick(0))
    };
    let r = run_regression(&ds, &spec, 2, 5, 1).unwrap();
    assert_eq!(r.runs.len(), 2);
    let rows = r.rows();
    assert_eq!(rows[1].key, "regress-mean-baseline");
    assert!(rows.iter().all(|row| row.mean.is_finite()));
    assert!(run_regression(&synthetic::classification(20, 0).unwrap(), &spec, 1, 0, 1).is_err());
}

#[test]
fn synthetic_names_resolve() {
    let ds = load_dataset("SYNTH-CLS:12", None, 1).unwrap();
    assert_eq!(ds.len(), 12);
    assert!(load_dataset("PROTEINS", None, 1).is_err());
    assert!(load_dataset("SYNTH-REG:x", None, 1).is_err());
}
