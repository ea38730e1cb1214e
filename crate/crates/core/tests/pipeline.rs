//! Ingest to report on synthetic skeleton files.

use std::fs;
use std::path::{Path, PathBuf};

use glds::dataset::{ingest, make_split, DatasetKind, DatasetManifest, Protocol, SplitSpec};
use glds::experiment::{
    emit_report, evaluate, prepare_features, run_experiment, split_for, sweep_csv, sweep_dimension, EvaluationReport,
    ExperimentConfig, FeatureCache, FeatureSet,
};
use glds::synthetic::{toy_dataset, write_toy_skeletons, ToyOptions};

const TOY: ToyOptions = ToyOptions {
    classes: 3,
    subjects: 4,
    trials: 2,
    frame_shape: [6, 4],
    state_dim: 3,
    frames: 40,
    noise: 0.005,
};

/// Writes toy skeletons plus a manifest and returns a config pointing at them.
fn setup(dir: &Path, representation: &str) -> ExperimentConfig {
    let data = dir.join("data");
    write_toy_skeletons(&data, &TOY, 11).unwrap();
    let manifest = ingest(&data, DatasetKind::Generic, None, &[]).unwrap();
    let path = dir.join("manifest.json");
    manifest.save(&path).unwrap();
    let mut cfg = ExperimentConfig::new(path);
    cfg.output_dir = dir.join("out");
    cfg.data.representation = representation.into();
    cfg.model.state_dim = 3;
    cfg
}

#[test]
fn synthetic_skeletons_are_classified_perfectly() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = setup(dir.path(), "3JP");
    let report = run_experiment(&cfg).unwrap();
    assert_eq!(report.classes, vec![1, 2, 3]);
    assert_eq!(report.overall_accuracy, 1.0, "{:?}", report.confusion);
    // odd subjects train, even subjects test
    assert_eq!(report.folds[0].train_size, 12);
    assert_eq!(report.folds[0].test_size, 12);
    assert!(report.load_failures.is_empty());
}

#[test]
fn reruns_are_bit_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = setup(dir.path(), "3RB");
    let a = run_experiment(&cfg).unwrap();
    fs::remove_dir_all(&cfg.output_dir).unwrap();
    let b = run_experiment(&cfg).unwrap();
    assert_eq!(a.fingerprint().unwrap(), b.fingerprint().unwrap());

    let manifest = DatasetManifest::load(&cfg.data.manifest).unwrap();
    let s1 = split_for(&cfg, &manifest.records).unwrap().to_json().unwrap();
    let s2 = split_for(&cfg, &manifest.records).unwrap().to_json().unwrap();
    assert_eq!(s1, s2);
}

#[test]
fn emitted_files_are_consistent() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = setup(dir.path(), "3JP");
    let report = run_experiment(&cfg).unwrap();
    let files = emit_report(&report, &cfg.output_dir).unwrap();

    let back: EvaluationReport = serde_json::from_str(&fs::read_to_string(&files.report).unwrap()).unwrap();
    assert_eq!(back, report);

    let csv = fs::read_to_string(&files.confusion).unwrap();
    let rows: Vec<&str> = csv.lines().collect();
    assert_eq!(rows.len(), report.classes.len() + 1);
    assert_eq!(rows[0], "truth,1,2,3");
    for (row, pc) in rows[1..].iter().zip(&report.per_class) {
        let counts: usize = row.split(',').skip(1).map(|v| v.parse::<usize>().unwrap()).sum();
        assert_eq!(counts, pc.total);
    }

    let cfg_back = ExperimentConfig::from_toml(&fs::read_to_string(&files.config).unwrap()).unwrap();
    assert_eq!(cfg_back, cfg);
}

#[test]
fn sweep_agrees_with_single_runs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = setup(dir.path(), "3JP");
    let rows = sweep_dimension(&cfg, &[2, 4, 8]).unwrap();
    assert_eq!(rows.iter().map(|r| r.d).collect::<Vec<_>>(), vec![2, 4, 8]);
    for row in &rows {
        let mut single = cfg.clone();
        single.model.state_dim = row.d;
        let report = run_experiment(&single).unwrap();
        assert_eq!(row.accuracy, Some(report.overall_accuracy), "d={}", row.d);
    }
    let csv = sweep_csv(&rows).unwrap();
    assert_eq!(csv.lines().count(), 4);
    assert!(csv.starts_with("d,accuracy,error\n"));
    assert!(sweep_dimension(&cfg, &[]).is_err());
    assert!(sweep_dimension(&cfg, &[0, 2]).is_err());
}

#[test]
fn classifier_changes_reuse_the_feature_cache() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = setup(dir.path(), "3RB");
    let cache = FeatureCache::new(cfg.output_dir.join("cache"));
    let (first, hit) = prepare_features(&cfg, &cache).unwrap();
    assert!(!hit);

    let mut other = cfg.clone();
    other.classifier.lambda = Some(0.5);
    other.classifier.kind = "nn".into();
    other.model.state_dim = 2;
    let (second, hit) = prepare_features(&other, &cache).unwrap();
    assert!(hit);
    assert_eq!(first.key, second.key);
    for (a, b) in first.items.iter().zip(&second.items) {
        assert_eq!(a.record, b.record);
        assert_eq!(a.series.tensor(), b.series.tensor());
    }

    other.data.representation = "3JP".into();
    assert!(!prepare_features(&other, &cache).unwrap().1);
}

#[test]
fn training_on_the_test_set_memorizes_it() {
    let items = toy_dataset(&TOY, 5).unwrap();
    let features = FeatureSet::in_memory(items);
    let mut cfg = ExperimentConfig::new("unused.json");
    cfg.model.state_dim = 3;
    cfg.classifier.lambda = Some(1e-4);
    let records = features.records();
    let mut split = split_for(&cfg, &records).unwrap();
    let all: Vec<String> = records.iter().map(|r| r.id.clone()).collect();
    split.folds[0].train = all.clone();
    split.folds[0].test = all;
    let report = glds::experiment::evaluate_split(&cfg, &features, &split).unwrap();
    assert_eq!(report.overall_accuracy, 1.0);
    cfg.classifier.kind = "nn".into();
    let report = glds::experiment::evaluate_split(&cfg, &features, &split).unwrap();
    assert_eq!(report.overall_accuracy, 1.0);
}

#[test]
fn a_corrupt_file_is_reported_not_fatal() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = setup(dir.path(), "3JP");
    let bad = dir.path().join("data").join("a01_s05_e01.csv");
    fs::write(&bad, "frame,joint,x,y,z\n0,0,1.0,oops,2.0\n").unwrap();
    let manifest = ingest(&dir.path().join("data"), DatasetKind::Generic, None, &[]).unwrap();
    manifest.save(&cfg.data.manifest).unwrap();

    let report = run_experiment(&cfg).unwrap();
    assert_eq!(report.load_failures.len(), 1);
    assert_eq!(report.load_failures[0].id, "a01_s05_e01");
    assert_eq!(report.overall_accuracy, 1.0);

    let mut strict = cfg.clone();
    strict.data.fail_fast = true;
    strict.output_dir = dir.path().join("strict");
    let err = run_experiment(&strict).unwrap_err().to_string();
    assert!(err.contains("a01_s05_e01"), "{err}");
}

#[test]
fn an_empty_dataset_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("empty");
    fs::create_dir_all(&data).unwrap();
    let manifest = ingest(&data, DatasetKind::Generic, None, &[]).unwrap();
    assert!(manifest.records.is_empty());
    let path = dir.path().join("manifest.json");
    manifest.save(&path).unwrap();
    let mut cfg = ExperimentConfig::new(path);
    cfg.output_dir = dir.path().join("out");
    assert!(run_experiment(&cfg).is_err());
}

#[test]
fn invalid_configs_fail_before_touching_files() {
    let mut cfg = ExperimentConfig::new(PathBuf::from("/nonexistent/manifest.json"));
    cfg.model.margin = 1.5;
    let err = run_experiment(&cfg).unwrap_err().to_string();
    assert!(err.contains("margin"), "{err}");
}

#[test]
fn splits_never_leak_and_respect_action_sets() {
    let items = toy_dataset(&ToyOptions { classes: 4, subjects: 6, ..TOY }, 2).unwrap();
    let records: Vec<_> = items.into_iter().map(|i| i.record).collect();
    let spec = SplitSpec { protocol: Protocol::CrossSubject { train_subjects: None }, actions: Some(vec![1, 3]) };
    let split = make_split(&records, &spec, 0).unwrap();
    let subject = |id: &String| records.iter().find(|r| &r.id == id).unwrap().subject;
    let action = |id: &String| records.iter().find(|r| &r.id == id).unwrap().action;
    let fold = &split.folds[0];
    for id in fold.train.iter().chain(&fold.test) {
        assert!([1, 3].contains(&action(id)));
    }
    for a in &fold.train {
        assert!(!fold.test.contains(a));
        assert!(fold.test.iter().all(|b| subject(a) != subject(b)));
        assert_eq!(subject(a) % 2, 1);
    }
    assert_eq!(fold.train.len() + fold.test.len(), 2 * 6 * TOY.trials as usize);

    let loocv = make_split(&records, &SplitSpec { protocol: Protocol::Loocv, actions: None }, 0).unwrap();
    assert_eq!(loocv.folds.len(), records.len());
    for f in &loocv.folds {
        assert_eq!(f.test.len(), 1);
        assert!(!f.train.contains(&f.test[0]));
    }

    // the bundled AS1 list drives the same filter through the config
    let mut cfg = ExperimentConfig::new("unused.json");
    cfg.protocol.action_set = Some("AS1".into());
    let as1 = split_for(&cfg, &records).unwrap();
    assert_eq!(as1.actions, Some(vec![2, 3, 5, 6, 10, 13, 18, 20]));
    assert!(as1.folds[0].test.iter().all(|id| [2, 3].contains(&action(id))));
}

#[test]
fn evaluate_on_memory_features_matches_split_path() {
    let features = FeatureSet::in_memory(toy_dataset(&TOY, 9).unwrap());
    let mut cfg = ExperimentConfig::new("unused.json");
    cfg.model.state_dim = 3;
    let a = evaluate(&cfg, &features).unwrap();
    let split = split_for(&cfg, &features.records()).unwrap();
    let b = glds::experiment::evaluate_split(&cfg, &features, &split).unwrap();
    assert_eq!(a.fingerprint().unwrap(), b.fingerprint().unwrap());
    assert!(a.overall_accuracy >= 0.9, "{}", a.overall_accuracy);
}
