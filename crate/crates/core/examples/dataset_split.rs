//! Ingest a skeleton dataset and print its evaluation splits.
//!
//! `cargo run --example dataset_split -- <root> <msr3d|utkinect|nucla|generic>`
//! With no arguments a small synthetic dataset is written to a temporary directory.
use glds::dataset::{ingest, load_dataset, make_split, msr_action_sets, DatasetKind, Protocol, SplitSpec};
use glds::synthetic::{write_toy_skeletons, ToyOptions};

fn main() -> glds::error::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let tmp;
    let (root, kind) = match args.as_slice() {
        [root, kind] => (std::path::PathBuf::from(root), kind.parse::<DatasetKind>()?),
        _ => {
            tmp = std::env::temp_dir().join("glds-dataset-split");
            let opts = ToyOptions { classes: 3, subjects: 6, trials: 2, ..Default::default() };
            write_toy_skeletons(&tmp, &opts, 1)?;
            (tmp.clone(), DatasetKind::Generic)
        }
    };
    let manifest = ingest(&root, kind, None, &[])?;
    println!("{} samples, actions {:?}", manifest.records.len(), manifest.actions);
    let loaded = load_dataset(&manifest, false)?;
    println!("{} parsed, {} failed", loaded.samples.len(), loaded.failures.len());
    for f in &loaded.failures {
        println!("  {}: {}", f.id, f.error);
    }

    let cross = SplitSpec { protocol: Protocol::CrossSubject { train_subjects: None }, actions: None };
    let split = make_split(&manifest.records, &cross, 0)?;
    println!("cross-subject: {} train / {} test", split.folds[0].train.len(), split.folds[0].test.len());
    let loocv = make_split(&manifest.records, &SplitSpec { protocol: Protocol::Loocv, actions: None }, 0)?;
    println!("leave-one-out: {} folds", loocv.folds.len());
    if kind == DatasetKind::Msr3d {
        for (name, actions) in msr_action_sets() {
            let spec = SplitSpec { protocol: Protocol::CrossSubject { train_subjects: None }, actions: Some(actions) };
            let s = make_split(&manifest.records, &spec, 0)?;
            println!("{name}: {} train / {} test", s.folds[0].train.len(), s.folds[0].test.len());
        }
    }
    Ok(())
}
