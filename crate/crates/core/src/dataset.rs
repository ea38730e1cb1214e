//! Skeleton dataset ingestion and evaluation splits.
//!
//! Supported layouts (paths relative to the dataset root):
//!
//! * **MSR3D**: `aXX_sYY_eZZ_skeleton3D.txt` (or `_skeleton.txt`), one joint
//!   per line as `x y z confidence`, 20 lines per frame.
//! * **UTKinect**: `joints/joints_sXX_eYY.txt` with rows of a frame index
//!   followed by 60 coordinates, plus `actionLabel.txt` giving the clip
//!   boundaries of each action inside every sequence.
//! * **NUCLA**: `view_V/aXX_sYY_eZZ/` directories holding one
//!   `frame_K_*skeletons.txt` file per frame with one joint per row.
//! * **generic**: `aXX_sYY_eZZ[_vW].csv` files with the header
//!   `frame,joint,x,y,z` (0-based frame and joint indices).

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::skeleton::{Joint, SequenceMeta, SkeletonSequence, Topology};

pub const MSR_JOINTS: usize = 20;

/// UTKinect action names in label-file spelling; ids are 1-based positions.
pub const UTKINECT_ACTIONS: [&str; 10] = [
    "walk", "sitDown", "standUp", "pickUp", "carry", "throw", "push", "pull", "waveHands", "clapHands",
];

const MSR_ACTION_SETS: &str = include_str!("../config/msr_action_sets.toml");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DatasetKind {
    #[serde(rename = "MSR3D")]
    Msr3d,
    #[serde(rename = "UTKinect")]
    UtKinect,
    #[serde(rename = "NUCLA")]
    Nucla,
    #[serde(rename = "generic")]
    Generic,
}

impl std::str::FromStr for DatasetKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "msr3d" | "msr" => Ok(Self::Msr3d),
            "utkinect" => Ok(Self::UtKinect),
            "nucla" => Ok(Self::Nucla),
            "generic" => Ok(Self::Generic),
            _ => Err(Error::Config(format!("unknown dataset kind '{s}'"))),
        }
    }
}

impl DatasetKind {
    pub fn default_topology(self) -> Topology {
        match self {
            DatasetKind::Msr3d => Topology::msr_action3d(),
            _ => Topology::kinect_sdk(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub id: String,
    /// Relative to the manifest root.
    pub path: PathBuf,
    pub action: usize,
    pub subject: u32,
    pub trial: u32,
    pub view: Option<u32>,
    /// Inclusive frame-index range inside the file, for clip-segmented sources.
    pub frames: Option<(usize, usize)>,
}

impl SampleRecord {
    pub fn meta(&self) -> SequenceMeta {
        SequenceMeta {
            action: self.action,
            subject: self.subject,
            trial: self.trial,
            view: self.view,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub root: PathBuf,
    pub kind: DatasetKind,
    pub topology: Topology,
    /// Declared action ids; every record's label must be one of these.
    pub actions: Vec<usize>,
    pub records: Vec<SampleRecord>,
}

impl DatasetManifest {
    pub fn new(root: PathBuf, kind: DatasetKind, topology: Topology, records: Vec<SampleRecord>) -> Self {
        let actions: BTreeSet<usize> = records.iter().map(|r| r.action).collect();
        Self {
            root,
            kind,
            topology,
            actions: actions.into_iter().collect(),
            records,
        }
    }

    /// Checks label membership, id uniqueness and that every file exists.
    pub fn validate(&self) -> Result<()> {
        let declared: BTreeSet<usize> = self.actions.iter().copied().collect();
        let mut ids = BTreeSet::new();
        for r in &self.records {
            if !declared.contains(&r.action) {
                return Err(Error::Config(format!("{}: action {} not declared", r.id, r.action)));
            }
            if !ids.insert(r.id.as_str()) {
                return Err(Error::Config(format!("duplicate sample id {}", r.id)));
            }
            let p = self.root.join(&r.path);
            if !p.exists() {
                return Err(Error::io(p, std::io::Error::from(std::io::ErrorKind::NotFound)));
            }
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn record(&self, id: &str) -> Option<&SampleRecord> {
        self.records.iter().find(|r| r.id == id)
    }
}

fn parse_err(path: &str, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_string(),
        line,
        message: message.into(),
    }
}

fn parse_floats(path: &str, line_no: usize, line: &str) -> Result<Vec<f64>> {
    line.split(|c: char| c.is_whitespace() || c == ',')
        .filter(|t| !t.is_empty())
        .map(|t| {
            t.parse::<f64>()
                .map_err(|_| parse_err(path, line_no, format!("non-numeric token '{t}'")))
        })
        .collect()
}

/// Parses an MSR-Action3D skeleton file: `x y z confidence` per line, one
/// frame per 20 consecutive lines. Blank lines are ignored.
pub fn parse_msr_skeleton(text: &str, source: &str, topology: Arc<Topology>, meta: SequenceMeta) -> Result<SkeletonSequence> {
    let joints = topology.joint_count;
    let mut rows = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let vals = parse_floats(source, ln + 1, line)?;
        if vals.len() != 4 {
            return Err(parse_err(source, ln + 1, format!("expected 4 values, found {}", vals.len())));
        }
        rows.push(vals);
    }
    if rows.len() % joints != 0 {
        return Err(Error::FrameMisalignment {
            path: source.to_string(),
            lines: rows.len(),
            joints,
        });
    }
    let n_frames = rows.len() / joints;
    if n_frames < 2 {
        return Err(Error::TooFewFrames {
            frames: n_frames,
            min: 2,
        });
    }
    let mut frames = Vec::with_capacity(n_frames);
    let mut confidence = Vec::with_capacity(n_frames);
    for chunk in rows.chunks(joints) {
        frames.push(chunk.iter().map(|r| [r[0], r[1], r[2]]).collect());
        confidence.push(chunk.iter().map(|r| r[3]).collect());
    }
    let mut seq = SkeletonSequence::new(frames, topology, meta)?;
    seq.confidence = Some(confidence);
    Ok(seq)
}

/// Frame index to joints, from a UTKinect `joints_sXX_eYY.txt` file.
pub fn parse_utkinect_joints(text: &str, source: &str, joints: usize) -> Result<BTreeMap<usize, Vec<Joint>>> {
    let mut out = BTreeMap::new();
    for (ln, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let vals = parse_floats(source, ln + 1, line)?;
        if vals.len() != 1 + 3 * joints {
            return Err(parse_err(
                source,
                ln + 1,
                format!("expected {} values, found {}", 1 + 3 * joints, vals.len()),
            ));
        }
        let frame = vals[0];
        if frame < 0.0 || frame.fract() != 0.0 {
            return Err(parse_err(source, ln + 1, format!("bad frame index {frame}")));
        }
        let pts = vals[1..].chunks(3).map(|c| [c[0], c[1], c[2]]).collect();
        // the release repeats a few frame indices; keep the first
        out.entry(frame as usize).or_insert(pts);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UtClip {
    /// Sequence key such as `s01_e01`.
    pub sequence: String,
    pub action: usize,
    pub start: usize,
    pub end: usize,
}

/// Parses `actionLabel.txt`: a sequence key line followed by
/// `action: start end` lines. Clips with non-numeric bounds are skipped.
pub fn parse_utkinect_labels(text: &str, source: &str) -> Result<Vec<UtClip>> {
    let mut clips = Vec::new();
    let mut current: Option<String> = None;
    for (ln, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        match line.split_once(':') {
            None => current = Some(line.to_string()),
            Some((name, range)) => {
                let seq = current
                    .clone()
                    .ok_or_else(|| parse_err(source, ln + 1, "clip before any sequence key"))?;
                let name = name.trim();
                let action = UTKINECT_ACTIONS
                    .iter()
                    .position(|a| a.eq_ignore_ascii_case(name))
                    .ok_or_else(|| parse_err(source, ln + 1, format!("unknown action '{name}'")))?
                    + 1;
                let bounds: Vec<&str> = range.split_whitespace().collect();
                if bounds.len() != 2 {
                    return Err(parse_err(source, ln + 1, "expected start and end frame"));
                }
                match (bounds[0].parse::<usize>(), bounds[1].parse::<usize>()) {
                    (Ok(start), Ok(end)) if start <= end => clips.push(UtClip {
                        sequence: seq,
                        action,
                        start,
                        end,
                    }),
                    _ => warn!("{source}:{}: skipping clip '{name}' with bounds {range:?}", ln + 1),
                }
            }
        }
    }
    Ok(clips)
}

/// Cuts one clip out of a parsed UTKinect joint file.
pub fn utkinect_clip(
    joints: &BTreeMap<usize, Vec<Joint>>,
    range: (usize, usize),
    source: &str,
    topology: Arc<Topology>,
    meta: SequenceMeta,
) -> Result<SkeletonSequence> {
    let frames: Vec<Vec<Joint>> = joints.range(range.0..=range.1).map(|(_, j)| j.clone()).collect();
    if frames.len() < 2 {
        return Err(parse_err(
            source,
            0,
            format!("clip {}..={} holds {} frames", range.0, range.1, frames.len()),
        ));
    }
    SkeletonSequence::new(frames, topology, meta)
}

/// Joint rows of one N-UCLA frame file. Lines with fewer than three numbers
/// (such as a leading body count) are skipped; the first `joints` rows are used.
pub fn parse_nucla_frame(text: &str, source: &str, joints: usize) -> Result<Vec<Joint>> {
    let mut out = Vec::with_capacity(joints);
    for (ln, line) in text.lines().enumerate() {
        if out.len() == joints {
            break;
        }
        if line.trim().is_empty() {
            continue;
        }
        let vals = parse_floats(source, ln + 1, line)?;
        if vals.len() >= 3 {
            out.push([vals[0], vals[1], vals[2]]);
        }
    }
    if out.len() != joints {
        return Err(parse_err(source, 0, format!("found {} joint rows, expected {joints}", out.len())));
    }
    Ok(out)
}

fn frame_number(name: &str) -> Option<usize> {
    let rest = name.strip_prefix("frame_")?;
    rest.split(|c: char| !c.is_ascii_digit()).next()?.parse().ok()
}

/// Reads an N-UCLA sample directory, one file per frame in frame order.
pub fn parse_nucla_sample(dir: &Path, topology: Arc<Topology>, meta: SequenceMeta) -> Result<SkeletonSequence> {
    let mut files: Vec<(usize, PathBuf)> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok())
        .filter_map(|e| {
            let name = e.file_name().to_string_lossy().into_owned();
            (name.contains("skeleton") && name.ends_with(".txt"))
                .then(|| frame_number(&name).map(|k| (k, e.path())))
                .flatten()
        })
        .collect();
    files.sort();
    let frames = files
        .iter()
        .map(|(_, p)| {
            let text = fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            parse_nucla_frame(&text, &p.display().to_string(), topology.joint_count)
        })
        .collect::<Result<Vec<_>>>()?;
    SkeletonSequence::new(frames, topology, meta)
}

#[derive(Debug, Deserialize)]
struct CsvRow {
    frame: usize,
    joint: usize,
    x: f64,
    y: f64,
    z: f64,
}

/// Generic CSV with header `frame,joint,x,y,z`; every (frame, joint) pair
/// must appear exactly once.
pub fn parse_generic_csv(text: &str, source: &str, topology: Arc<Topology>, meta: SequenceMeta) -> Result<SkeletonSequence> {
    let n = topology.joint_count;
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let mut cells: BTreeMap<usize, Vec<Option<Joint>>> = BTreeMap::new();
    for (k, row) in reader.deserialize::<CsvRow>().enumerate() {
        let line = k + 2;
        let row = row.map_err(|e| parse_err(source, line, e.to_string()))?;
        if row.joint >= n {
            return Err(parse_err(source, line, format!("joint {} out of {n}", row.joint)));
        }
        let slot = &mut cells.entry(row.frame).or_insert_with(|| vec![None; n])[row.joint];
        if slot.is_some() {
            return Err(parse_err(source, line, format!("duplicate frame {} joint {}", row.frame, row.joint)));
        }
        *slot = Some([row.x, row.y, row.z]);
    }
    let mut frames = Vec::with_capacity(cells.len());
    for (expect, (frame, joints)) in cells.into_iter().enumerate() {
        if frame != expect {
            return Err(parse_err(source, 0, format!("frame {expect} missing")));
        }
        let full: Option<Vec<Joint>> = joints.into_iter().collect();
        frames.push(full.ok_or_else(|| parse_err(source, 0, format!("frame {frame} lacks joints")))?);
    }
    SkeletonSequence::new(frames, topology, meta)
}

/// Writes a sequence in the generic CSV layout.
pub fn write_generic_csv(seq: &SkeletonSequence) -> String {
    let mut out = String::from("frame,joint,x,y,z\n");
    for (t, f) in seq.frames().iter().enumerate() {
        for (j, v) in f.iter().enumerate() {
            out.push_str(&format!("{t},{j},{:?},{:?},{:?}\n", v[0], v[1], v[2]));
        }
    }
    out
}

/// `aXX_sYY_eZZ[_vW]` prefix of a file or directory name.
pub fn parse_sample_name(name: &str) -> Option<(usize, u32, u32, Option<u32>)> {
    let mut parts = name.split(['_', '.']);
    let num = |p: Option<&str>, tag: char| -> Option<u32> { p?.strip_prefix(tag)?.parse().ok() };
    let a = num(parts.next(), 'a')?;
    let s = num(parts.next(), 's')?;
    let e = num(parts.next(), 'e')?;
    let v = parts.next().and_then(|p| p.strip_prefix('v')).and_then(|p| p.parse().ok());
    Some((a as usize, s, e, v))
}

fn sorted_entries(dir: &Path) -> Result<Vec<fs::DirEntry>> {
    let mut entries: Vec<fs::DirEntry> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .collect::<std::io::Result<_>>()
        .map_err(|e| Error::io(dir, e))?;
    entries.sort_by_key(|e| e.file_name());
    Ok(entries)
}

/// Scans a dataset root and builds its manifest. Sample ids listed in
/// `exclude` are dropped (known-corrupt files are configuration, not code).
pub fn ingest(root: &Path, kind: DatasetKind, topology: Option<Topology>, exclude: &[String]) -> Result<DatasetManifest> {
    let topology = topology.unwrap_or_else(|| kind.default_topology());
    let mut records = match kind {
        DatasetKind::Msr3d => ingest_msr(root)?,
        DatasetKind::UtKinect => ingest_utkinect(root)?,
        DatasetKind::Nucla => ingest_nucla(root)?,
        DatasetKind::Generic => ingest_generic(root)?,
    };
    records.retain(|r| !exclude.iter().any(|x| x == &r.id));
    records.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(DatasetManifest::new(root.to_path_buf(), kind, topology, records))
}

fn ingest_msr(root: &Path) -> Result<Vec<SampleRecord>> {
    let mut by_id: BTreeMap<String, SampleRecord> = BTreeMap::new();
    for e in sorted_entries(root)? {
        let name = e.file_name().to_string_lossy().into_owned();
        if !name.ends_with(".txt") || !name.contains("skeleton") {
            continue;
        }
        let Some((a, s, t, _)) = parse_sample_name(&name) else { continue };
        let id = format!("a{a:02}_s{s:02}_e{t:02}");
        let real = name.contains("skeleton3D");
        let rec = SampleRecord {
            id: id.clone(),
            path: PathBuf::from(&name),
            action: a,
            subject: s,
            trial: t,
            view: None,
            frames: None,
        };
        // prefer real-world coordinates when both variants exist
        match by_id.get(&id) {
            Some(prev) if prev.path.to_string_lossy().contains("skeleton3D") && !real => {}
            _ => {
                by_id.insert(id, rec);
            }
        }
    }
    Ok(by_id.into_values().collect())
}

fn ingest_utkinect(root: &Path) -> Result<Vec<SampleRecord>> {
    let label_path = root.join("actionLabel.txt");
    let text = fs::read_to_string(&label_path).map_err(|e| Error::io(&label_path, e))?;
    let clips = parse_utkinect_labels(&text, &label_path.display().to_string())?;
    clips
        .into_iter()
        .map(|c| {
            let (s, e) = c
                .sequence
                .split_once('_')
                .and_then(|(s, e)| Some((s.strip_prefix('s')?.parse().ok()?, e.strip_prefix('e')?.parse().ok()?)))
                .ok_or_else(|| Error::Config(format!("bad UTKinect sequence key '{}'", c.sequence)))?;
            Ok(SampleRecord {
                id: format!("{}_{}", c.sequence, UTKINECT_ACTIONS[c.action - 1]),
                path: PathBuf::from("joints").join(format!("joints_{}.txt", c.sequence)),
                action: c.action,
                subject: s,
                trial: e,
                view: None,
                frames: Some((c.start, c.end)),
            })
        })
        .collect()
}

fn ingest_nucla(root: &Path) -> Result<Vec<SampleRecord>> {
    let mut out = Vec::new();
    for v in sorted_entries(root)? {
        let vname = v.file_name().to_string_lossy().into_owned();
        let Some(view) = vname.strip_prefix("view_").and_then(|x| x.parse::<u32>().ok()) else { continue };
        for s in sorted_entries(&v.path())? {
            let sname = s.file_name().to_string_lossy().into_owned();
            if !s.path().is_dir() {
                continue;
            }
            let Some((a, subj, trial, _)) = parse_sample_name(&sname) else { continue };
            out.push(SampleRecord {
                id: format!("a{a:02}_s{subj:02}_e{trial:02}_v{view:02}"),
                path: PathBuf::from(&vname).join(&sname),
                action: a,
                subject: subj,
                trial,
                view: Some(view),
                frames: None,
            });
        }
    }
    Ok(out)
}

fn ingest_generic(root: &Path) -> Result<Vec<SampleRecord>> {
    let mut out = Vec::new();
    for e in sorted_entries(root)? {
        let name = e.file_name().to_string_lossy().into_owned();
        if !name.ends_with(".csv") {
            continue;
        }
        let Some((a, s, t, v)) = parse_sample_name(&name) else { continue };
        out.push(SampleRecord {
            id: name.trim_end_matches(".csv").to_string(),
            path: PathBuf::from(&name),
            action: a,
            subject: s,
            trial: t,
            view: v,
            frames: None,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct LoadedSample {
    pub record: SampleRecord,
    pub sequence: SkeletonSequence,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoadFailure {
    pub id: String,
    pub path: PathBuf,
    pub error: String,
}

#[derive(Debug, Clone, Default)]
pub struct LoadReport {
    pub samples: Vec<LoadedSample>,
    pub failures: Vec<LoadFailure>,
}

pub fn load_record(manifest: &DatasetManifest, topology: &Arc<Topology>, rec: &SampleRecord) -> Result<SkeletonSequence> {
    let path = manifest.root.join(&rec.path);
    let source = path.display().to_string();
    let read = || fs::read_to_string(&path).map_err(|e| Error::io(&path, e));
    match manifest.kind {
        DatasetKind::Msr3d => parse_msr_skeleton(&read()?, &source, topology.clone(), rec.meta()),
        DatasetKind::Generic => parse_generic_csv(&read()?, &source, topology.clone(), rec.meta()),
        DatasetKind::Nucla => parse_nucla_sample(&path, topology.clone(), rec.meta()),
        DatasetKind::UtKinect => {
            let joints = parse_utkinect_joints(&read()?, &source, topology.joint_count)?;
            let range = rec
                .frames
                .ok_or_else(|| Error::Config(format!("{}: UTKinect record without frame range", rec.id)))?;
            utkinect_clip(&joints, range, &source, topology.clone(), rec.meta())
        }
    }
}

/// Parses every record. Failures are collected per file; with `fail_fast`
/// the first failure (in record order) is returned as an error instead.
pub fn load_dataset(manifest: &DatasetManifest, fail_fast: bool) -> Result<LoadReport> {
    let topology = Arc::new(manifest.topology.clone());
    let results: Vec<(SampleRecord, Result<SkeletonSequence>)> = manifest
        .records
        .par_iter()
        .map(|r| (r.clone(), load_record(manifest, &topology, r)))
        .collect();
    let mut report = LoadReport::default();
    for (record, res) in results {
        match res {
            Ok(sequence) => report.samples.push(LoadedSample { record, sequence }),
            Err(e) => {
                if fail_fast {
                    return Err(e);
                }
                warn!("{}: {e}", record.id);
                report.failures.push(LoadFailure {
                    id: record.id.clone(),
                    path: record.path.clone(),
                    error: e.to_string(),
                });
            }
        }
    }
    Ok(report)
}

/// Named action subsets (`AS1`, `AS2`, ...).
pub type ActionSets = BTreeMap<String, Vec<usize>>;

pub fn parse_action_sets(text: &str) -> Result<ActionSets> {
    toml::from_str(text).map_err(|e| Error::Config(format!("action sets: {e}")))
}

/// The conventional MSR-Action3D subsets, shipped as `config/msr_action_sets.toml`.
pub fn msr_action_sets() -> ActionSets {
    parse_action_sets(MSR_ACTION_SETS).expect("bundled action sets parse")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Protocol {
    /// Disjoint subjects; defaults to odd subjects for training.
    CrossSubject {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        train_subjects: Option<Vec<u32>>,
    },
    /// Leave one sequence out: one fold per sample.
    Loocv,
    CrossView { train_views: Vec<u32>, test_views: Vec<u32> },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub protocol: Protocol,
    /// Restrict to these actions before splitting.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub actions: Option<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    pub train: Vec<String>,
    pub test: Vec<String>,
}

/// Split file contents; field order is part of the format.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitFile {
    pub protocol: Protocol,
    pub seed: u64,
    pub actions: Option<Vec<usize>>,
    pub folds: Vec<Fold>,
}

impl SplitFile {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Materializes a protocol over the given records. Every protocol here is
/// deterministic; `seed` is recorded alongside the folds.
pub fn make_split(records: &[SampleRecord], spec: &SplitSpec, seed: u64) -> Result<SplitFile> {
    let selected: Vec<&SampleRecord> = records
        .iter()
        .filter(|r| spec.actions.as_ref().is_none_or(|a| a.contains(&r.action)))
        .collect();
    if selected.is_empty() {
        return Err(Error::Config("no samples left after action filtering".into()));
    }
    let ids = |pred: &dyn Fn(&SampleRecord) -> bool| -> Vec<String> {
        selected.iter().filter(|r| pred(r)).map(|r| r.id.clone()).collect()
    };
    let folds = match &spec.protocol {
        Protocol::CrossSubject { train_subjects } => {
            let present: BTreeSet<u32> = selected.iter().map(|r| r.subject).collect();
            let train: BTreeSet<u32> = match train_subjects {
                Some(list) => {
                    if let Some(s) = list.iter().find(|s| !present.contains(s)) {
                        return Err(Error::Config(format!("unknown subject {s}")));
                    }
                    list.iter().copied().collect()
                }
                None => present.iter().copied().filter(|s| s % 2 == 1).collect(),
            };
            vec![Fold {
                train: ids(&|r| train.contains(&r.subject)),
                test: ids(&|r| !train.contains(&r.subject)),
            }]
        }
        Protocol::Loocv => {
            let all = ids(&|_| true);
            (0..all.len())
                .map(|k| Fold {
                    train: all.iter().enumerate().filter(|(i, _)| *i != k).map(|(_, s)| s.clone()).collect(),
                    test: vec![all[k].clone()],
                })
                .collect()
        }
        Protocol::CrossView { train_views, test_views } => {
            if let Some(v) = train_views.iter().find(|v| test_views.contains(v)) {
                return Err(Error::Config(format!("view {v} on both sides")));
            }
            let in_views = |views: &Vec<u32>, r: &SampleRecord| r.view.is_some_and(|v| views.contains(&v));
            vec![Fold {
                train: ids(&|r| in_views(train_views, r)),
                test: ids(&|r| in_views(test_views, r)),
            }]
        }
    };
    for f in &folds {
        if f.train.is_empty() || f.test.is_empty() {
            return Err(Error::Config("split leaves one side empty".into()));
        }
    }
    Ok(SplitFile {
        protocol: spec.protocol.clone(),
        seed,
        actions: spec.actions.clone(),
        folds,
    })
}
