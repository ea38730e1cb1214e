//! End-to-end experiments: features, per-sequence subspaces, dictionary
//! classification, reports and the subspace-dimension sweep.
//!
//! # Config format
//!
//! TOML. Only `[data].manifest` is required.
//!
//! ```toml
//! seed = 0
//! threads = 0              # 0: one worker per core
//! output_dir = "out"
//!
//! [data]
//! manifest = "msr/manifest.json"
//! representation = "3RB"   # 2JP 2RB 3JP 3RB 3SM 4RB
//! normalize = true         # hip-centre every frame
//! fail_fast = false
//!
//! [model]
//! method = "glds"          # or "lds" (vectorized frames)
//! ranks = []               # per frame mode; empty keeps every mode at full size
//! state_dim = 5            # temporal rank and subspace dimension d
//! # truncation = 5         # highest power m in the observability matrix; default d
//! margin = 0.01
//! tucker_iters = 25
//! tucker_tol = 1e-7
//!
//! [classifier]
//! kind = "src"             # or "nn"
//! # lambda = 0.05          # default 0.01 * d
//! tol = 1e-8
//! max_iter = 1000
//! affine = false
//!
//! [protocol]
//! kind = "cross_subject"   # loocv, cross_view
//! # train_subjects = [1, 3, 5, 7, 9]
//! # action_set = "AS1"
//! ```
//!
//! `GLDS_OUTPUT_DIR` and `GLDS_THREADS` override the file.
//!
//! # Output files
//!
//! * `report.json`: [`EvaluationReport`].
//! * `confusion.csv`: header `truth,<class>...`, then one row per true class.
//! * `config.toml`: the resolved config.
//! * `split.json`: [`SplitFile`].
//! * `sweep.csv`: `d,accuracy,error`.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::{info, warn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::{
    load_dataset, make_split, msr_action_sets, parse_action_sets, DatasetManifest, LoadFailure, Protocol,
    SampleRecord, SplitFile, SplitSpec,
};
use crate::dynamics::{fit_glds, lds_subspace, FitOptions, TensorSeries};
use crate::error::{Error, Result};
use crate::grassmann::{
    chordal_distance, classify_src, nearest_neighbor, sparse_code, GrassmannDictionary, GrassmannPoint,
    SparseCodingOptions,
};
use crate::skeleton::{extract, extract_multiview, normalize, MultiviewSequence, Representation};
use crate::synthetic::{random_model, random_state, LabeledSeries};
use crate::tensor::{mode_product, tucker, unfold, DenseTensor, TuckerOptions};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub threads: usize,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    pub data: DataConfig,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub classifier: ClassifierConfig,
    #[serde(default)]
    pub protocol: ProtocolConfig,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    pub manifest: PathBuf,
    pub representation: String,
    pub normalize: bool,
    pub fail_fast: bool,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            manifest: PathBuf::from("manifest.json"),
            representation: "3RB".into(),
            normalize: true,
            fail_fast: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub method: String,
    pub ranks: Vec<usize>,
    pub state_dim: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub truncation: Option<usize>,
    pub margin: f64,
    pub tucker_iters: usize,
    pub tucker_tol: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            method: "glds".into(),
            ranks: Vec::new(),
            state_dim: 5,
            truncation: None,
            margin: 0.01,
            tucker_iters: 25,
            tucker_tol: 1e-7,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClassifierConfig {
    pub kind: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    pub tol: f64,
    pub max_iter: usize,
    pub affine: bool,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self {
            kind: "src".into(),
            lambda: None,
            tol: 1e-8,
            max_iter: 1000,
            affine: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProtocolConfig {
    pub kind: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub train_subjects: Option<Vec<u32>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub train_views: Option<Vec<u32>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub test_views: Option<Vec<u32>>,
    /// Explicit action filter; takes precedence over `action_set`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub actions: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub action_set: Option<String>,
    /// TOML file of named action sets; the bundled MSR sets when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub action_sets_file: Option<PathBuf>,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        Self {
            kind: "cross_subject".into(),
            train_subjects: None,
            train_views: None,
            test_views: None,
            actions: None,
            action_set: None,
            action_sets_file: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Glds,
    Lds,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClassifierKind {
    Src,
    Nn,
}

fn bad(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

impl ExperimentConfig {
    pub fn new(manifest: impl Into<PathBuf>) -> Self {
        Self {
            seed: 0,
            threads: 0,
            output_dir: default_output_dir(),
            data: DataConfig {
                manifest: manifest.into(),
                ..Default::default()
            },
            model: ModelConfig::default(),
            classifier: ClassifierConfig::default(),
            protocol: ProtocolConfig::default(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| bad(e.to_string()))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| bad(e.to_string()))
    }

    /// Reads, applies environment overrides and validates.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml(&text)?;
        cfg.apply_env()?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn apply_env(&mut self) -> Result<()> {
        if let Ok(dir) = std::env::var("GLDS_OUTPUT_DIR") {
            self.output_dir = PathBuf::from(dir);
        }
        if let Ok(t) = std::env::var("GLDS_THREADS") {
            self.threads = t.trim().parse().map_err(|_| bad(format!("GLDS_THREADS='{t}'")))?;
        }
        Ok(())
    }

    /// Range checks; touches no files.
    pub fn validate(&self) -> Result<()> {
        self.representation()?;
        self.method()?;
        self.classifier_kind()?;
        let m = &self.model;
        if m.state_dim == 0 {
            return Err(bad("model.state_dim must be at least 1"));
        }
        if m.truncation == Some(0) {
            return Err(bad("model.truncation must be at least 1"));
        }
        if m.ranks.contains(&0) {
            return Err(bad("model.ranks must be positive"));
        }
        if !(0.0..1.0).contains(&m.margin) {
            return Err(bad(format!("model.margin {} outside [0, 1)", m.margin)));
        }
        if !(m.tucker_tol >= 0.0 && m.tucker_tol.is_finite()) {
            return Err(bad("model.tucker_tol must be finite and non-negative"));
        }
        let c = &self.classifier;
        if let Some(l) = c.lambda {
            if !(l >= 0.0 && l.is_finite()) {
                return Err(bad(format!("classifier.lambda {l}")));
            }
        }
        if !(c.tol > 0.0 && c.tol.is_finite()) {
            return Err(bad("classifier.tol must be positive"));
        }
        if c.max_iter == 0 {
            return Err(bad("classifier.max_iter must be at least 1"));
        }
        let p = &self.protocol;
        match p.kind.as_str() {
            "cross_subject" | "loocv" => {}
            "cross_view" => {
                if p.train_views.is_none() || p.test_views.is_none() {
                    return Err(bad("cross_view needs train_views and test_views"));
                }
            }
            k => return Err(bad(format!("unknown protocol '{k}'"))),
        }
        if let (Some(name), None, None) = (&p.action_set, &p.actions, &p.action_sets_file) {
            if !msr_action_sets().contains_key(name) {
                return Err(bad(format!("unknown action set '{name}'")));
            }
        }
        Ok(())
    }

    pub fn representation(&self) -> Result<Representation> {
        self.data.representation.parse()
    }

    pub fn method(&self) -> Result<Method> {
        match self.model.method.to_ascii_lowercase().as_str() {
            "glds" => Ok(Method::Glds),
            "lds" => Ok(Method::Lds),
            m => Err(bad(format!("unknown model method '{m}'"))),
        }
    }

    pub fn classifier_kind(&self) -> Result<ClassifierKind> {
        match self.classifier.kind.to_ascii_lowercase().as_str() {
            "src" => Ok(ClassifierKind::Src),
            "nn" => Ok(ClassifierKind::Nn),
            k => Err(bad(format!("unknown classifier '{k}'"))),
        }
    }

    pub fn truncation(&self) -> usize {
        self.model.truncation.unwrap_or(self.model.state_dim)
    }

    pub fn fit_options(&self) -> FitOptions {
        FitOptions {
            margin: self.model.margin,
            tucker: TuckerOptions {
                max_iter: self.model.tucker_iters,
                tol: self.model.tucker_tol,
            },
            // residual covariances are not used downstream
            estimate_noise: false,
            ..FitOptions::default()
        }
    }

    pub fn coding_options(&self) -> SparseCodingOptions {
        let mut o = SparseCodingOptions::for_dim(self.model.state_dim);
        if let Some(l) = self.classifier.lambda {
            o.lambda = l;
        }
        o.tol = self.classifier.tol;
        o.max_iter = self.classifier.max_iter;
        o.affine = self.classifier.affine;
        o
    }

    pub fn split_spec(&self) -> Result<SplitSpec> {
        let p = &self.protocol;
        let protocol = match p.kind.as_str() {
            "cross_subject" => Protocol::CrossSubject {
                train_subjects: p.train_subjects.clone(),
            },
            "loocv" => Protocol::Loocv,
            "cross_view" => Protocol::CrossView {
                train_views: p.train_views.clone().unwrap_or_default(),
                test_views: p.test_views.clone().unwrap_or_default(),
            },
            k => return Err(bad(format!("unknown protocol '{k}'"))),
        };
        let actions = match (&p.actions, &p.action_set) {
            (Some(a), _) => Some(a.clone()),
            (None, Some(name)) => {
                let sets = match &p.action_sets_file {
                    Some(path) => {
                        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
                        parse_action_sets(&text)?
                    }
                    None => msr_action_sets(),
                };
                Some(sets.get(name).cloned().ok_or_else(|| bad(format!("unknown action set '{name}'")))?)
            }
            (None, None) => None,
        };
        Ok(SplitSpec { protocol, actions })
    }
}

/// Runs `f` on a pool of `threads` workers (`0`: rayon's default).
pub fn with_threads<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    if threads == 0 {
        return Ok(f());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| bad(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

/// Extracted tensor series for every usable sample of a manifest.
#[derive(Debug, Clone)]
pub struct FeatureSet {
    pub key: String,
    pub items: Vec<LabeledSeries>,
    pub failures: Vec<LoadFailure>,
}

impl FeatureSet {
    pub fn in_memory(items: Vec<LabeledSeries>) -> Self {
        Self {
            key: String::new(),
            items,
            failures: Vec::new(),
        }
    }

    pub fn records(&self) -> Vec<SampleRecord> {
        self.items.iter().map(|i| i.record.clone()).collect()
    }
}

/// Cache key: hash of the manifest contents, representation and normalization.
pub fn feature_key(manifest: &DatasetManifest, repr: Representation, normalize: bool) -> Result<String> {
    let mut h = Sha256::new();
    h.update(serde_json::to_vec(manifest)?);
    h.update(repr.name().as_bytes());
    h.update([normalize as u8]);
    Ok(h.finalize().iter().map(|b| format!("{b:02x}")).collect())
}

/// Parses the manifest's files and extracts one representation.
pub fn extract_features(manifest: &DatasetManifest, repr: Representation, norm: bool, fail_fast: bool) -> Result<FeatureSet> {
    let key = feature_key(manifest, repr, norm)?;
    let loaded = load_dataset(manifest, fail_fast).map_err(|e| e.at_stage("load"))?;
    let mut failures = loaded.failures;
    let hip = manifest.topology.hip_index;
    let prep = |s: &crate::skeleton::SkeletonSequence| if norm { normalize(s, hip) } else { Ok(s.clone()) };

    let results: Vec<(SampleRecord, Result<TensorSeries>)> = if repr.is_multiview() {
        let views: BTreeSet<u32> = loaded.samples.iter().filter_map(|s| s.record.view).collect();
        let mut groups: BTreeMap<(usize, u32, u32), Vec<&crate::dataset::LoadedSample>> = BTreeMap::new();
        for s in &loaded.samples {
            let r = &s.record;
            groups.entry((r.action, r.subject, r.trial)).or_default().push(s);
        }
        let complete: Vec<_> = groups
            .into_iter()
            .filter_map(|((a, s, t), mut members)| {
                let id = format!("a{a:02}_s{s:02}_e{t:02}");
                if members.len() != views.len() {
                    warn!("{id}: {} of {} views, skipped", members.len(), views.len());
                    failures.push(LoadFailure {
                        id,
                        path: PathBuf::new(),
                        error: format!("{} of {} views present", members.len(), views.len()),
                    });
                    return None;
                }
                members.sort_by_key(|m| m.record.view);
                let record = SampleRecord {
                    id,
                    path: PathBuf::new(),
                    view: None,
                    ..members[0].record.clone()
                };
                Some((record, members))
            })
            .collect();
        complete
            .into_par_iter()
            .map(|(record, members)| {
                let series = members
                    .iter()
                    .map(|m| prep(&m.sequence))
                    .collect::<Result<Vec<_>>>()
                    .and_then(MultiviewSequence::new)
                    .and_then(|mv| extract_multiview(&mv, repr));
                (record, series)
            })
            .collect()
    } else {
        loaded
            .samples
            .par_iter()
            .map(|s| (s.record.clone(), prep(&s.sequence).and_then(|q| extract(&q, repr))))
            .collect()
    };

    let mut items = Vec::with_capacity(results.len());
    for (record, res) in results {
        match res {
            Ok(series) => items.push(LabeledSeries { record, series }),
            Err(e) if fail_fast => return Err(e.for_sample(record.id).at_stage("features")),
            Err(e) => {
                warn!("{}: {e}", record.id);
                failures.push(LoadFailure {
                    id: record.id,
                    path: record.path,
                    error: e.to_string(),
                });
            }
        }
    }
    Ok(FeatureSet { key, items, failures })
}

#[derive(Serialize, Deserialize)]
struct CachedItem {
    record: SampleRecord,
    shape: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct CacheIndex {
    key: String,
    items: Vec<CachedItem>,
    failures: Vec<LoadFailure>,
}

/// On-disk feature store: `<key>.json` holds records and shapes,
/// `<key>.bin` the concatenated little-endian `f64` data.
#[derive(Debug, Clone)]
pub struct FeatureCache {
    dir: PathBuf,
}

impl FeatureCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    fn paths(&self, key: &str) -> (PathBuf, PathBuf) {
        (self.dir.join(format!("{key}.json")), self.dir.join(format!("{key}.bin")))
    }

    pub fn get(&self, key: &str) -> Result<Option<FeatureSet>> {
        let (jp, bp) = self.paths(key);
        if !jp.exists() || !bp.exists() {
            return Ok(None);
        }
        let index: CacheIndex =
            serde_json::from_str(&fs::read_to_string(&jp).map_err(|e| Error::io(&jp, e))?)?;
        let bytes = fs::read(&bp).map_err(|e| Error::io(&bp, e))?;
        let mut values = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")));
        let mut items = Vec::with_capacity(index.items.len());
        for it in index.items {
            let n: usize = it.shape.iter().product();
            let data: Vec<f64> = values.by_ref().take(n).collect();
            if data.len() != n {
                return Err(bad(format!("feature cache {} is truncated", bp.display())));
            }
            items.push(LabeledSeries {
                record: it.record,
                series: TensorSeries::new(DenseTensor::new(it.shape, data)?)?,
            });
        }
        Ok(Some(FeatureSet {
            key: index.key,
            items,
            failures: index.failures,
        }))
    }

    pub fn put(&self, set: &FeatureSet) -> Result<()> {
        fs::create_dir_all(&self.dir).map_err(|e| Error::io(&self.dir, e))?;
        let (jp, bp) = self.paths(&set.key);
        let mut bytes = Vec::new();
        for it in &set.items {
            for v in it.series.tensor().as_slice() {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
        }
        let index = CacheIndex {
            key: set.key.clone(),
            items: set
                .items
                .iter()
                .map(|i| CachedItem {
                    record: i.record.clone(),
                    shape: i.series.tensor().shape().to_vec(),
                })
                .collect(),
            failures: set.failures.clone(),
        };
        fs::write(&bp, bytes).map_err(|e| Error::io(&bp, e))?;
        fs::write(&jp, serde_json::to_string(&index)?).map_err(|e| Error::io(&jp, e))
    }
}

/// Features for `config`, from `cache` when present. The flag reports a hit.
pub fn prepare_features(config: &ExperimentConfig, cache: &FeatureCache) -> Result<(FeatureSet, bool)> {
    let repr = config.representation()?;
    let manifest = DatasetManifest::load(&config.data.manifest).map_err(|e| e.at_stage("ingest"))?;
    let key = feature_key(&manifest, repr, config.data.normalize)?;
    if let Some(set) = cache.get(&key).map_err(|e| e.at_stage("features"))? {
        info!("features {repr}: cache hit ({} series)", set.items.len());
        return Ok((set, true));
    }
    let set = extract_features(&manifest, repr, config.data.normalize, config.data.fail_fast)?;
    cache.put(&set).map_err(|e| e.at_stage("features"))?;
    info!("features {repr}: extracted {} series, {} failures", set.items.len(), set.failures.len());
    Ok((set, false))
}

/// Subspace descriptor of one series under the configured model.
pub fn fit_subspace(config: &ExperimentConfig, series: &TensorSeries) -> Result<GrassmannPoint> {
    let d = config.model.state_dim;
    let m = config.truncation();
    let opts = config.fit_options();
    match config.method()? {
        Method::Glds => {
            let ranks = if config.model.ranks.is_empty() {
                series.frame_shape().to_vec()
            } else {
                config.model.ranks.clone()
            };
            fit_glds(series, &ranks, d, m, &opts).map(|(_, p)| p)
        }
        Method::Lds => lds_subspace(&series.observation_matrix(), d, m, &opts).map(|(_, p)| p),
    }
}

/// Fits every series in parallel; order follows the input.
pub fn fit_subspaces(config: &ExperimentConfig, items: &[LabeledSeries]) -> Result<Vec<GrassmannPoint>> {
    items
        .par_iter()
        .map(|it| fit_subspace(config, &it.series).map_err(|e| e.for_sample(it.record.id.clone())))
        .collect::<Result<Vec<_>>>()
        .map_err(|e| e.at_stage("fit"))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prediction {
    pub id: String,
    pub truth: usize,
    pub predicted: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub train_size: usize,
    pub test_size: usize,
    pub correct: usize,
    pub accuracy: f64,
    pub predictions: Vec<Prediction>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassAccuracy {
    pub class: usize,
    pub total: usize,
    pub correct: usize,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    /// Row and column order of `confusion`.
    pub classes: Vec<usize>,
    pub overall_accuracy: f64,
    pub per_class: Vec<ClassAccuracy>,
    /// `confusion[truth][predicted]` counts.
    pub confusion: Vec<Vec<usize>>,
    pub folds: Vec<FoldResult>,
    pub load_failures: Vec<LoadFailure>,
    /// Wall-clock seconds per stage; excluded from [`EvaluationReport::fingerprint`].
    pub timings: BTreeMap<String, f64>,
    pub config: ExperimentConfig,
}

impl EvaluationReport {
    pub fn new(
        folds: Vec<FoldResult>,
        load_failures: Vec<LoadFailure>,
        timings: BTreeMap<String, f64>,
        config: ExperimentConfig,
    ) -> Result<Self> {
        let preds: Vec<&Prediction> = folds.iter().flat_map(|f| &f.predictions).collect();
        if preds.is_empty() {
            return Err(bad("no test predictions"));
        }
        let classes: Vec<usize> = preds
            .iter()
            .flat_map(|p| [p.truth, p.predicted])
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let pos: HashMap<usize, usize> = classes.iter().enumerate().map(|(i, &c)| (c, i)).collect();
        let k = classes.len();
        let mut confusion = vec![vec![0usize; k]; k];
        for p in &preds {
            confusion[pos[&p.truth]][pos[&p.predicted]] += 1;
        }
        let per_class: Vec<ClassAccuracy> = classes
            .iter()
            .map(|&class| {
                let total = preds.iter().filter(|p| p.truth == class).count();
                let correct = preds.iter().filter(|p| p.truth == class && p.predicted == class).count();
                ClassAccuracy {
                    class,
                    total,
                    correct,
                    accuracy: if total == 0 { 0.0 } else { correct as f64 / total as f64 },
                }
            })
            .collect();
        let correct = preds.iter().filter(|p| p.truth == p.predicted).count();
        let overall_accuracy = correct as f64 / preds.len() as f64;

        let trace: usize = (0..k).map(|i| confusion[i][i]).sum();
        let total: usize = confusion.iter().flatten().sum();
        for (row, pc) in confusion.iter().zip(&per_class) {
            assert_eq!(row.iter().sum::<usize>(), pc.total, "confusion row of class {}", pc.class);
        }
        assert_eq!(overall_accuracy, trace as f64 / total as f64, "overall accuracy != trace / total");

        Ok(Self {
            classes,
            overall_accuracy,
            per_class,
            confusion,
            folds,
            load_failures,
            timings,
            config,
        })
    }

    /// SHA-256 of the JSON report with timings removed.
    pub fn fingerprint(&self) -> Result<String> {
        let mut r = self.clone();
        r.timings.clear();
        let mut h = Sha256::new();
        h.update(serde_json::to_vec(&r)?);
        Ok(h.finalize().iter().map(|b| format!("{b:02x}")).collect())
    }

    pub fn confusion_csv(&self) -> String {
        let mut out = String::from("truth");
        for c in &self.classes {
            out.push_str(&format!(",{c}"));
        }
        out.push('\n');
        for (c, row) in self.classes.iter().zip(&self.confusion) {
            out.push_str(&c.to_string());
            for v in row {
                out.push_str(&format!(",{v}"));
            }
            out.push('\n');
        }
        out
    }
}

pub fn split_for(config: &ExperimentConfig, records: &[SampleRecord]) -> Result<SplitFile> {
    make_split(records, &config.split_spec()?, config.seed).map_err(|e| e.at_stage("split"))
}

fn elapsed(t: Instant) -> f64 {
    t.elapsed().as_secs_f64()
}

/// Fit, build the dictionary and classify, on already extracted features.
pub fn evaluate(config: &ExperimentConfig, features: &FeatureSet) -> Result<EvaluationReport> {
    config.validate()?;
    let split = split_for(config, &features.records())?;
    evaluate_split(config, features, &split)
}

pub fn evaluate_split(config: &ExperimentConfig, features: &FeatureSet, split: &SplitFile) -> Result<EvaluationReport> {
    let kind = config.classifier_kind()?;
    let coding = config.coding_options();
    let mut timings = BTreeMap::new();

    let index: HashMap<&str, usize> = features
        .items
        .iter()
        .enumerate()
        .map(|(i, it)| (it.record.id.as_str(), i))
        .collect();
    let lookup = |id: &String| index.get(id.as_str()).copied().ok_or_else(|| bad(format!("split names unknown sample {id}")));
    let used: BTreeSet<usize> = split
        .folds
        .iter()
        .flat_map(|f| f.train.iter().chain(&f.test))
        .map(lookup)
        .collect::<Result<_>>()?;
    let used: Vec<usize> = used.into_iter().collect();
    let slot: HashMap<usize, usize> = used.iter().enumerate().map(|(s, &i)| (i, s)).collect();

    let t = Instant::now();
    let chosen: Vec<LabeledSeries> = used.iter().map(|&i| features.items[i].clone()).collect();
    let points = fit_subspaces(config, &chosen)?;
    timings.insert("fit".to_string(), elapsed(t));

    let t = Instant::now();
    let labels: Vec<usize> = chosen.iter().map(|c| c.record.action).collect();
    let full = GrassmannDictionary::new(points.clone(), labels).map_err(|e| e.at_stage("dictionary"))?;
    timings.insert("dictionary".to_string(), elapsed(t));

    let t = Instant::now();
    let mut folds = Vec::with_capacity(split.folds.len());
    for fold in &split.folds {
        let train: Vec<usize> = fold.train.iter().map(|id| lookup(id).map(|i| slot[&i])).collect::<Result<_>>()?;
        let dict = full.subset(&train).map_err(|e| e.at_stage("dictionary"))?;
        let predictions = fold
            .test
            .par_iter()
            .map(|id| {
                let s = slot[&lookup(id)?];
                let q = &points[s];
                let predicted = match kind {
                    ClassifierKind::Src => classify_src(q, &dict, &coding).map(|d| d.label),
                    ClassifierKind::Nn => nearest_neighbor(q, &dict),
                }
                .map_err(|e| e.for_sample(id.clone()).at_stage("classify"))?;
                Ok(Prediction {
                    id: id.clone(),
                    truth: chosen[s].record.action,
                    predicted,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let correct = predictions.iter().filter(|p| p.truth == p.predicted).count();
        folds.push(FoldResult {
            train_size: fold.train.len(),
            test_size: predictions.len(),
            correct,
            accuracy: correct as f64 / predictions.len() as f64,
            predictions,
        });
    }
    timings.insert("classify".to_string(), elapsed(t));
    EvaluationReport::new(folds, features.failures.clone(), timings, config.clone())
}

/// Config to report: validate, load and extract (through the cache in
/// `output_dir/cache`), fit, classify.
pub fn run_experiment(config: &ExperimentConfig) -> Result<EvaluationReport> {
    config.validate()?;
    with_threads(config.threads, || {
        let t = Instant::now();
        let cache = FeatureCache::new(config.output_dir.join("cache"));
        let (features, _) = prepare_features(config, &cache)?;
        let feature_time = elapsed(t);
        let mut report = evaluate(config, &features)?;
        report.timings.insert("features".to_string(), feature_time);
        report.timings.insert("total".to_string(), elapsed(t));
        Ok(report)
    })?
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReportFiles {
    pub report: PathBuf,
    pub confusion: PathBuf,
    pub config: PathBuf,
}

/// Writes `report.json`, `confusion.csv` and `config.toml` into `dir`.
pub fn emit_report(report: &EvaluationReport, dir: &Path) -> Result<ReportFiles> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let files = ReportFiles {
        report: dir.join("report.json"),
        confusion: dir.join("confusion.csv"),
        config: dir.join("config.toml"),
    };
    let write = |p: &PathBuf, s: String| fs::write(p, s).map_err(|e| Error::io(p, e));
    write(&files.report, serde_json::to_string_pretty(report)?)?;
    write(&files.confusion, report.confusion_csv())?;
    write(&files.config, report.config.to_toml()?)?;
    Ok(files)
}

pub fn write_split(split: &SplitFile, path: &Path) -> Result<()> {
    fs::write(path, split.to_json()?).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub d: usize,
    pub accuracy: Option<f64>,
    pub error: Option<String>,
}

/// One evaluation per `d` on shared features. Unless the config pins the
/// truncation, `m` follows `d`. Failures are recorded and the sweep goes on.
pub fn sweep_on_features(config: &ExperimentConfig, features: &FeatureSet, d_values: &[usize]) -> Vec<SweepRow> {
    d_values
        .iter()
        .map(|&d| {
            let mut cfg = config.clone();
            cfg.model.state_dim = d;
            match evaluate(&cfg, features) {
                Ok(r) => {
                    info!("d={d}: accuracy {:.4}", r.overall_accuracy);
                    SweepRow { d, accuracy: Some(r.overall_accuracy), error: None }
                }
                Err(e) => {
                    warn!("d={d}: {e}");
                    SweepRow { d, accuracy: None, error: Some(e.to_string()) }
                }
            }
        })
        .collect()
}

pub fn sweep_dimension(config: &ExperimentConfig, d_values: &[usize]) -> Result<Vec<SweepRow>> {
    if d_values.is_empty() || d_values.contains(&0) {
        return Err(bad("sweep needs positive dimensions"));
    }
    config.validate()?;
    with_threads(config.threads, || {
        let cache = FeatureCache::new(config.output_dir.join("cache"));
        let (features, _) = prepare_features(config, &cache)?;
        Ok(sweep_on_features(config, &features, d_values))
    })?
}

pub fn sweep_csv(rows: &[SweepRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| bad(format!("csv: {e}"));
    w.write_record(["d", "accuracy", "error"]).map_err(io)?;
    for r in rows {
        let acc = r.accuracy.map(|a| a.to_string()).unwrap_or_default();
        w.write_record([r.d.to_string(), acc, r.error.clone().unwrap_or_default()])
            .map_err(io)?;
    }
    let bytes = w.into_inner().map_err(|e| bad(format!("csv: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Per-sequence subspaces with their ids, as written by `glds fit`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelStore {
    pub ids: Vec<String>,
    pub dictionary: crate::grassmann::DictionaryRecord,
}

pub fn build_model_store(config: &ExperimentConfig, features: &FeatureSet) -> Result<ModelStore> {
    let points = fit_subspaces(config, &features.items)?;
    let labels = features.items.iter().map(|i| i.record.action).collect();
    let dict = GrassmannDictionary::new(points, labels)?;
    Ok(ModelStore {
        ids: features.items.iter().map(|i| i.record.id.clone()).collect(),
        dictionary: dict.to_record(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub op: String,
    pub shape: String,
    pub reps: usize,
    pub mean_ms: f64,
}

fn time_op(reps: usize, mut f: impl FnMut()) -> f64 {
    f();
    let t = Instant::now();
    for _ in 0..reps {
        f();
    }
    t.elapsed().as_secs_f64() * 1e3 / reps as f64
}

/// Micro-benchmarks of the tensor and subspace kernels at skeleton sizes.
pub fn run_bench(reps: usize, seed: u64) -> Result<Vec<BenchRow>> {
    let reps = reps.max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shape = vec![19usize, 9, 60];
    let x = DenseTensor::from_fn(shape.clone(), |_| rand_distr::Distribution::sample(&rand_distr::StandardNormal, &mut rng))?;
    let u = crate::synthetic::gaussian_matrix(5, 9, &mut rng);
    let label = format!("{shape:?}");
    let mut rows = Vec::new();
    let mut push = |op: &str, shape: &str, ms: f64| {
        rows.push(BenchRow { op: op.into(), shape: shape.into(), reps, mean_ms: ms })
    };

    push("unfold(mode 1)", &label, time_op(reps, || {
        unfold(&x, 1).expect("valid mode");
    }));
    push("mode_product(5x9, mode 1)", &label, time_op(reps, || {
        mode_product(&x, &u, 1).expect("valid shapes");
    }));
    push("tucker(full, d=5)", &label, time_op(reps, || {
        tucker(&x, &[19, 9, 5], TuckerOptions::default()).expect("valid ranks");
    }));

    let model = random_model(&[19, 9], 5, &mut rng)?;
    let x0 = random_state(5, &mut rng);
    let series = crate::dynamics::simulate_lds(&model, &x0, 60, 0.01, seed)?;
    let fit = |d: usize| fit_glds(&series, &[19, 9], d, 5, &FitOptions::default()).map(|(_, p)| p);
    push("fit_glds(d=5, m=5)", "19x9x60", time_op(reps, || {
        fit(5).expect("fit");
    }));

    let a = fit(5)?;
    let b = GrassmannPoint::from_span(&crate::synthetic::gaussian_matrix(a.ambient_dim(), 5, &mut rng), 5)?;
    push("chordal_distance", &format!("{}x5", a.ambient_dim()), time_op(reps, || {
        chordal_distance(&a, &b).expect("same shape");
    }));

    let atoms: Vec<GrassmannPoint> = (0..40)
        .map(|_| GrassmannPoint::from_span(&crate::synthetic::gaussian_matrix(a.ambient_dim(), 5, &mut rng), 5))
        .collect::<Result<_>>()?;
    let labels = (0..40).map(|i| i % 4).collect();
    let dict = GrassmannDictionary::new(atoms, labels)?;
    let opts = SparseCodingOptions::for_dim(5);
    push("sparse_code(40 atoms)", &format!("{}x5", a.ambient_dim()), time_op(reps, || {
        sparse_code(&a, &dict, &opts).expect("code");
    }));
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic::{toy_dataset, ToyOptions};

    fn toy_config() -> ExperimentConfig {
        let mut c = ExperimentConfig::new("unused.json");
        c.model.state_dim = 3;
        c
    }

    #[test]
    fn config_round_trips() {
        let mut c = toy_config();
        c.model.truncation = Some(4);
        c.classifier.lambda = Some(0.125);
        c.protocol.action_set = Some("AS2".into());
        let text = c.to_toml().unwrap();
        assert_eq!(ExperimentConfig::from_toml(&text).unwrap(), c);
    }

    #[test]
    fn minimal_config_gets_defaults() {
        let c = ExperimentConfig::from_toml("[data]\nmanifest = \"m.json\"\n").unwrap();
        assert_eq!(c.data.representation, "3RB");
        assert_eq!(c.truncation(), 5);
        assert!(c.validate().is_ok());
        assert!(ExperimentConfig::from_toml("[data]\nmanifest = \"m\"\nbogus = 1\n").is_err());
    }

    #[test]
    fn validation_rejects_before_io() {
        let mut c = ExperimentConfig::new("/nonexistent/manifest.json");
        c.data.representation = "5XY".into();
        let err = run_experiment(&c).unwrap_err();
        assert!(matches!(err, Error::Config(_)), "{err}");
        let mut c = toy_config();
        c.model.margin = 1.0;
        assert!(c.validate().is_err());
        let mut c = toy_config();
        c.protocol.kind = "cross_view".into();
        assert!(c.validate().is_err());
    }

    #[test]
    fn toy_is_separable() {
        let items = toy_dataset(&ToyOptions::default(), 1).unwrap();
        let report = evaluate(&toy_config(), &FeatureSet::in_memory(items)).unwrap();
        assert_eq!(report.overall_accuracy, 1.0);
        assert_eq!(report.classes, vec![1, 2]);
        assert_eq!(report.confusion, vec![vec![4, 0], vec![0, 4]]);
    }

    #[test]
    fn confusion_csv_shape() {
        let items = toy_dataset(&ToyOptions { classes: 3, ..Default::default() }, 2).unwrap();
        let report = evaluate(&toy_config(), &FeatureSet::in_memory(items)).unwrap();
        let csv = report.confusion_csv();
        assert_eq!(csv.lines().count(), 4);
        assert!(csv.lines().all(|l| l.split(',').count() == 4));
    }

    #[test]
    fn sweep_csv_rows() {
        let rows = vec![
            SweepRow { d: 2, accuracy: Some(0.5), error: None },
            SweepRow { d: 90, accuracy: None, error: Some("bad, rank".into()) },
        ];
        let csv = sweep_csv(&rows).unwrap();
        assert_eq!(csv, "d,accuracy,error\n2,0.5,\n90,,\"bad, rank\"\n");
    }
}
