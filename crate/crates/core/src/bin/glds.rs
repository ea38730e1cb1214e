use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::{error, info, warn};

use glds::dataset::{ingest, DatasetKind};
use glds::error::{Error, Result};
use glds::experiment::{
    build_model_store, emit_report, evaluate_split, prepare_features, run_bench, split_for, sweep_csv,
    sweep_on_features, with_threads, write_split, ExperimentConfig, FeatureCache,
};
use glds::skeleton::Topology;

#[derive(Parser)]
#[command(name = "glds", version, about = "gLDS subspace features and skeleton action recognition")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Scan a dataset directory and write its manifest.
    Ingest {
        #[arg(long)]
        root: PathBuf,
        /// msr3d, utkinect, nucla or generic
        #[arg(long)]
        kind: DatasetKind,
        #[arg(long)]
        out: PathBuf,
        /// Skeleton topology file; the dataset default otherwise.
        #[arg(long)]
        topology: Option<PathBuf>,
        /// Sample ids to leave out, one per line.
        #[arg(long)]
        exclude: Option<PathBuf>,
    },
    /// Extract and cache the configured representation.
    Features {
        #[arg(long)]
        config: PathBuf,
    },
    /// Fit every sequence and store the subspaces.
    Fit {
        #[arg(long)]
        config: PathBuf,
        /// Defaults to `<output_dir>/models.json`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the configured protocol and write the report.
    Eval {
        #[arg(long)]
        config: PathBuf,
    },
    /// Evaluate over a list of subspace dimensions.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "2,4,6,8,10,12,14,16,18,20")]
        d: Vec<usize>,
    },
    /// Time the tensor and subspace kernels.
    Bench {
        #[arg(long, default_value_t = 20)]
        reps: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "bench.csv")]
        out: PathBuf,
    },
}

fn write(path: &Path, text: String) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::Io { path: dir.into(), source: e })?;
    }
    fs::write(path, text).map_err(|e| Error::Io { path: path.into(), source: e })
}

fn read_exclusions(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path).map_err(|e| Error::Io { path: path.into(), source: e })?;
    Ok(text
        .lines()
        .map(|l| l.split('#').next().unwrap_or("").trim())
        .filter(|l| !l.is_empty())
        .map(String::from)
        .collect())
}

/// Ok(true) when everything succeeded, Ok(false) on partial failure.
fn run(cmd: Command) -> Result<bool> {
    match cmd {
        Command::Ingest { root, kind, out, topology, exclude } => {
            let topology = topology.map(|p| Topology::load(&p)).transpose()?;
            let exclude = exclude.map(|p| read_exclusions(&p)).transpose()?.unwrap_or_default();
            let manifest = ingest(&root, kind, topology, &exclude)?;
            manifest.validate()?;
            manifest.save(&out)?;
            info!("{} samples, {} actions -> {}", manifest.records.len(), manifest.actions.len(), out.display());
            Ok(true)
        }
        Command::Features { config } => {
            let cfg = ExperimentConfig::load(&config)?;
            let (set, hit) = with_threads(cfg.threads, || {
                prepare_features(&cfg, &FeatureCache::new(cfg.output_dir.join("cache")))
            })??;
            info!("{} series ({}), key {}", set.items.len(), if hit { "cached" } else { "extracted" }, set.key);
            Ok(set.failures.is_empty())
        }
        Command::Fit { config, out } => {
            let cfg = ExperimentConfig::load(&config)?;
            let (set, store) = with_threads(cfg.threads, || -> Result<_> {
                let (set, _) = prepare_features(&cfg, &FeatureCache::new(cfg.output_dir.join("cache")))?;
                let store = build_model_store(&cfg, &set)?;
                Ok((set, store))
            })??;
            let out = out.unwrap_or_else(|| cfg.output_dir.join("models.json"));
            write(&out, serde_json::to_string(&store)?)?;
            info!("{} subspaces -> {}", store.ids.len(), out.display());
            Ok(set.failures.is_empty())
        }
        Command::Eval { config } => {
            let cfg = ExperimentConfig::load(&config)?;
            let report = with_threads(cfg.threads, || -> Result<_> {
                let t = std::time::Instant::now();
                let (set, _) = prepare_features(&cfg, &FeatureCache::new(cfg.output_dir.join("cache")))?;
                let split = split_for(&cfg, &set.records())?;
                fs::create_dir_all(&cfg.output_dir)
                    .map_err(|e| Error::Io { path: cfg.output_dir.clone(), source: e })?;
                write_split(&split, &cfg.output_dir.join("split.json"))?;
                let mut report = evaluate_split(&cfg, &set, &split)?;
                report.timings.insert("total".into(), t.elapsed().as_secs_f64());
                Ok(report)
            })??;
            let files = emit_report(&report, &cfg.output_dir)?;
            info!(
                "accuracy {:.2}% over {} folds -> {}",
                100.0 * report.overall_accuracy,
                report.folds.len(),
                files.report.display()
            );
            Ok(report.load_failures.is_empty())
        }
        Command::Sweep { config, d } => {
            let cfg = ExperimentConfig::load(&config)?;
            if d.is_empty() || d.contains(&0) {
                return Err(Error::Config("sweep needs positive dimensions".into()));
            }
            let (set, rows) = with_threads(cfg.threads, || -> Result<_> {
                let (set, _) = prepare_features(&cfg, &FeatureCache::new(cfg.output_dir.join("cache")))?;
                let rows = sweep_on_features(&cfg, &set, &d);
                Ok((set, rows))
            })??;
            let out = cfg.output_dir.join("sweep.csv");
            write(&out, sweep_csv(&rows)?)?;
            let failed = rows.iter().filter(|r| r.error.is_some()).count();
            if failed > 0 {
                warn!("{failed} of {} dimensions failed", rows.len());
            }
            info!("sweep -> {}", out.display());
            Ok(failed == 0 && set.failures.is_empty())
        }
        Command::Bench { reps, seed, out } => {
            let rows = run_bench(reps, seed)?;
            let mut text = String::from("op,shape,reps,mean_ms\n");
            for r in &rows {
                text.push_str(&format!("\"{}\",\"{}\",{},{:.6}\n", r.op, r.shape, r.reps, r.mean_ms));
                eprintln!("{:<28} {:>12} {:>10.3} ms", r.op, r.shape, r.mean_ms);
            }
            write(&out, text)?;
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            warn!("finished with per-sample failures");
            ExitCode::from(2)
        }
        Err(e) => {
            error!("{e}");
            ExitCode::FAILURE
        }
    }
}
