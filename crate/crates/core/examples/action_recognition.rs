//! Full pipeline on a synthetic skeleton dataset: ingest, 3RB features,
//! per-sequence gLDS subspaces, SRC over the training subjects, reports,
//! and a small dimension sweep.
//!
//! Pass a config file to run it on real data instead:
//! `cargo run --release --example action_recognition -- experiment.toml`
use glds::dataset::{ingest, DatasetKind};
use glds::experiment::{emit_report, run_experiment, sweep_csv, sweep_dimension, ExperimentConfig};
use glds::synthetic::{write_toy_skeletons, ToyOptions};

fn main() -> glds::error::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let config = match std::env::args().nth(1) {
        Some(path) => ExperimentConfig::load(path.as_ref())?,
        None => {
            let dir = std::env::temp_dir().join("glds-action-recognition");
            let opts = ToyOptions { classes: 4, subjects: 4, trials: 2, state_dim: 4, frames: 40, ..Default::default() };
            write_toy_skeletons(&dir.join("data"), &opts, 42)?;
            let manifest = ingest(&dir.join("data"), DatasetKind::Generic, None, &[])?;
            let path = dir.join("manifest.json");
            manifest.save(&path)?;
            let mut c = ExperimentConfig::new(path);
            c.output_dir = dir.join("out");
            c.model.state_dim = 4;
            c
        }
    };
    let report = run_experiment(&config)?;
    println!("overall accuracy {:.2}%", 100.0 * report.overall_accuracy);
    for c in &report.per_class {
        println!("  action {:2}: {}/{}", c.class, c.correct, c.total);
    }
    print!("{}", report.confusion_csv());
    let files = emit_report(&report, &config.output_dir)?;
    println!("report written to {}", files.report.display());

    let rows = sweep_dimension(&config, &[2, 3, 4, 6])?;
    print!("{}", sweep_csv(&rows)?);
    Ok(())
}
