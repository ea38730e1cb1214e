//! Skeleton sequences and their tensor time-series representations.
//!
//! | kind | frame shape          | content                                        |
//! |------|----------------------|------------------------------------------------|
//! | 2JP  | `3N`                 | `x, y, z` of each joint, joint after joint     |
//! | 2RB  | `9(N-1)`             | vec of the 3RB frame                           |
//! | 3JP  | `N x 3`              | joint positions                                |
//! | 3RB  | `(N-1) x 9`          | per rigid body `[v_i, v_j, v_i - v_j]`         |
//! | 3SM  | `(N-1)(N-2) x 6`     | se(3) log of the relative motion per body pair |
//! | 4RB  | `(N-1) x 9 x V`      | 3RB stacked over views                         |

use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use log::warn;
use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::dynamics::TensorSeries;
use crate::error::{Error, Result};
use crate::tensor::DenseTensor;

pub type Joint = [f64; 3];

/// Joint graph of a skeleton: `N` joints, `N - 1` rigid bodies.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Topology {
    pub name: String,
    pub joint_count: usize,
    pub hip_index: usize,
    /// Rigid bodies as `(i, j)` joint pairs, 0-based.
    pub edges: Vec<(usize, usize)>,
}

const MSR_TOPOLOGY: &str = include_str!("../config/msr_action3d.topology");
const KINECT_TOPOLOGY: &str = include_str!("../config/kinect_sdk.topology");

impl Topology {
    pub fn new(name: impl Into<String>, joint_count: usize, hip_index: usize, edges: Vec<(usize, usize)>) -> Result<Self> {
        if joint_count < 2 {
            return Err(Error::Config(format!("skeleton needs at least 2 joints, got {joint_count}")));
        }
        if hip_index >= joint_count {
            return Err(Error::Config(format!("hip index {hip_index} out of {joint_count} joints")));
        }
        if edges.len() != joint_count - 1 {
            return Err(Error::Config(format!(
                "{} rigid bodies for {joint_count} joints, expected {}",
                edges.len(),
                joint_count - 1
            )));
        }
        if let Some(&(i, j)) = edges.iter().find(|&&(i, j)| i >= joint_count || j >= joint_count || i == j) {
            return Err(Error::Config(format!("invalid rigid body ({i}, {j})")));
        }
        Ok(Self {
            name: name.into(),
            joint_count,
            hip_index,
            edges,
        })
    }

    /// MSR-Action3D joint order (hip center is joint 7, 1-based).
    pub fn msr_action3d() -> Self {
        Self::parse(MSR_TOPOLOGY).expect("bundled topology parses")
    }

    /// Kinect SDK v1 joint order, used by UTKinect and Northwestern-UCLA.
    pub fn kinect_sdk() -> Self {
        Self::parse(KINECT_TOPOLOGY).expect("bundled topology parses")
    }

    pub fn rigid_bodies(&self) -> usize {
        self.edges.len()
    }

    /// Parses the `key = value` topology format:
    ///
    /// ```text
    /// # comment
    /// name = kinect_sdk
    /// joints = 20
    /// hip = 0
    /// edges = 0-1 1-2 2-3
    /// ```
    ///
    /// Indices are 0-based. `edges` may repeat; entries accumulate.
    pub fn parse(text: &str) -> Result<Self> {
        let mut name = String::from("custom");
        let mut joints = None;
        let mut hip = None;
        let mut edges = Vec::new();
        for (ln, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("topology line {}: expected key = value", ln + 1)))?;
            let value = value.trim();
            let bad = |what: &str| Error::Config(format!("topology line {}: bad {what} '{value}'", ln + 1));
            match key.trim() {
                "name" => name = value.to_string(),
                "joints" => joints = Some(value.parse::<usize>().map_err(|_| bad("joint count"))?),
                "hip" => hip = Some(value.parse::<usize>().map_err(|_| bad("hip index"))?),
                "edges" => {
                    for tok in value.split_whitespace() {
                        let (a, b) = tok.split_once('-').ok_or_else(|| bad("edge"))?;
                        let a = a.parse::<usize>().map_err(|_| bad("edge"))?;
                        let b = b.parse::<usize>().map_err(|_| bad("edge"))?;
                        edges.push((a, b));
                    }
                }
                other => return Err(Error::Config(format!("topology line {}: unknown key '{other}'", ln + 1))),
            }
        }
        let joints = joints.ok_or_else(|| Error::Config("topology missing 'joints'".into()))?;
        let hip = hip.ok_or_else(|| Error::Config("topology missing 'hip'".into()))?;
        Self::new(name, joints, hip, edges)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn to_text(&self) -> String {
        let edges: Vec<String> = self.edges.iter().map(|(a, b)| format!("{a}-{b}")).collect();
        format!(
            "name = {}\njoints = {}\nhip = {}\nedges = {}\n",
            self.name,
            self.joint_count,
            self.hip_index,
            edges.join(" ")
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SequenceMeta {
    pub action: usize,
    pub subject: u32,
    pub trial: u32,
    pub view: Option<u32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SkeletonSequence {
    frames: Vec<Vec<Joint>>,
    topology: Arc<Topology>,
    /// Per-frame, per-joint tracking confidence when the source has one.
    pub confidence: Option<Vec<Vec<f64>>>,
    pub meta: SequenceMeta,
}

impl SkeletonSequence {
    pub fn new(frames: Vec<Vec<Joint>>, topology: Arc<Topology>, meta: SequenceMeta) -> Result<Self> {
        if frames.len() < 2 {
            return Err(Error::TooFewFrames {
                frames: frames.len(),
                min: 2,
            });
        }
        if let Some((t, f)) = frames.iter().enumerate().find(|(_, f)| f.len() != topology.joint_count) {
            return Err(Error::dims(format!(
                "frame {t} has {} joints, topology '{}' has {}",
                f.len(),
                topology.name,
                topology.joint_count
            )));
        }
        Ok(Self {
            frames,
            topology,
            confidence: None,
            meta,
        })
    }

    pub fn frames(&self) -> &[Vec<Joint>] {
        &self.frames
    }

    pub fn topology(&self) -> &Arc<Topology> {
        &self.topology
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn joint_count(&self) -> usize {
        self.topology.joint_count
    }
}

/// Translates every frame so the given joint sits at the origin.
pub fn normalize(seq: &SkeletonSequence, hip_index: usize) -> Result<SkeletonSequence> {
    if hip_index >= seq.joint_count() {
        return Err(Error::InvalidArgument(format!(
            "hip index {hip_index} out of {} joints",
            seq.joint_count()
        )));
    }
    let frames = seq
        .frames
        .iter()
        .map(|f| {
            let h = f[hip_index];
            f.iter().map(|v| [v[0] - h[0], v[1] - h[1], v[2] - h[2]]).collect()
        })
        .collect();
    Ok(SkeletonSequence {
        frames,
        topology: seq.topology.clone(),
        confidence: seq.confidence.clone(),
        meta: seq.meta.clone(),
    })
}

/// Linear resampling onto `target_tau` uniformly spaced frames; the first and
/// last frames are kept exactly.
pub fn resample(seq: &SkeletonSequence, target_tau: usize) -> Result<SkeletonSequence> {
    if target_tau < 2 {
        return Err(Error::TooFewFrames {
            frames: target_tau,
            min: 2,
        });
    }
    let tau = seq.len();
    if tau == target_tau {
        return Ok(seq.clone());
    }
    let n = seq.joint_count();
    let scale = (tau - 1) as f64 / (target_tau - 1) as f64;
    let frames = (0..target_tau)
        .map(|k| {
            if k == target_tau - 1 {
                return seq.frames[tau - 1].clone();
            }
            let pos = k as f64 * scale;
            let lo = (pos.floor() as usize).min(tau - 1);
            let hi = (lo + 1).min(tau - 1);
            let w = pos - lo as f64;
            (0..n)
                .map(|j| {
                    let a = seq.frames[lo][j];
                    let b = seq.frames[hi][j];
                    [
                        a[0] + w * (b[0] - a[0]),
                        a[1] + w * (b[1] - a[1]),
                        a[2] + w * (b[2] - a[2]),
                    ]
                })
                .collect()
        })
        .collect();
    let mut out = SkeletonSequence::new(frames, seq.topology.clone(), seq.meta.clone())?;
    out.confidence = None;
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Representation {
    #[serde(rename = "2JP")]
    Jp2,
    #[serde(rename = "2RB")]
    Rb2,
    #[serde(rename = "3JP")]
    Jp3,
    #[serde(rename = "3RB")]
    Rb3,
    #[serde(rename = "3SM")]
    Sm3,
    #[serde(rename = "4RB")]
    Rb4,
}

impl Representation {
    pub const ALL: [Representation; 6] = [
        Representation::Jp2,
        Representation::Rb2,
        Representation::Jp3,
        Representation::Rb3,
        Representation::Sm3,
        Representation::Rb4,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Representation::Jp2 => "2JP",
            Representation::Rb2 => "2RB",
            Representation::Jp3 => "3JP",
            Representation::Rb3 => "3RB",
            Representation::Sm3 => "3SM",
            Representation::Rb4 => "4RB",
        }
    }

    pub fn is_multiview(self) -> bool {
        self == Representation::Rb4
    }
}

impl fmt::Display for Representation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Representation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|r| r.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown representation '{s}'")))
    }
}

fn rigid_body_frame(frame: &[Joint], edges: &[(usize, usize)]) -> Vec<f64> {
    // (N-1) x 9, first index fastest
    let m = edges.len();
    let mut out = vec![0.0; m * 9];
    for (e, &(i, j)) in edges.iter().enumerate() {
        let (vi, vj) = (frame[i], frame[j]);
        for c in 0..3 {
            out[e + c * m] = vi[c];
            out[e + (3 + c) * m] = vj[c];
            out[e + (6 + c) * m] = vi[c] - vj[c];
        }
    }
    out
}

/// Builds the tensor time series of one representation.
pub fn extract(seq: &SkeletonSequence, kind: Representation) -> Result<TensorSeries> {
    let n = seq.joint_count();
    let tau = seq.len();
    let edges = &seq.topology.edges;
    let m = edges.len();
    let (frame_shape, data): (Vec<usize>, Vec<f64>) = match kind {
        Representation::Jp2 => (
            vec![3 * n],
            seq.frames.iter().flat_map(|f| f.iter().flat_map(|v| v.iter().copied())).collect(),
        ),
        Representation::Jp3 => {
            let mut data = Vec::with_capacity(3 * n * tau);
            for f in &seq.frames {
                for c in 0..3 {
                    data.extend(f.iter().map(|v| v[c]));
                }
            }
            (vec![n, 3], data)
        }
        Representation::Rb2 | Representation::Rb3 => {
            let data = seq.frames.iter().flat_map(|f| rigid_body_frame(f, edges)).collect();
            let shape = if kind == Representation::Rb2 { vec![9 * m] } else { vec![m, 9] };
            (shape, data)
        }
        Representation::Sm3 => {
            let pairs = m * (m - 1);
            let mut data = Vec::with_capacity(pairs * 6 * tau);
            let mut degenerate = 0usize;
            for f in &seq.frames {
                let mut frame = vec![0.0; pairs * 6];
                let mut p = 0;
                for a in 0..m {
                    for b in 0..m {
                        if a == b {
                            continue;
                        }
                        match relative_motion(f, edges[a], edges[b]) {
                            Some(xi) => {
                                for (c, v) in xi.iter().enumerate() {
                                    frame[p + c * pairs] = *v;
                                }
                            }
                            None => degenerate += 1,
                        }
                        p += 1;
                    }
                }
                data.extend(frame);
            }
            if degenerate > 0 {
                warn!("3SM: {degenerate} body pairs with a zero-length segment were left at zero");
            }
            (vec![pairs, 6], data)
        }
        Representation::Rb4 => {
            return Err(Error::InvalidArgument("4RB needs a multiview sequence".into()));
        }
    };
    let mut shape = frame_shape;
    shape.push(tau);
    TensorSeries::new(DenseTensor::new(shape, data)?)
}

fn sub(a: Joint, b: Joint) -> Vector3<f64> {
    Vector3::new(a[0] - b[0], a[1] - b[1], a[2] - b[2])
}

fn skew(w: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -w.z, w.y, w.z, 0.0, -w.x, -w.y, w.x, 0.0)
}

/// Unit vector perpendicular to `v`; odd in `v`.
fn perpendicular(v: &Vector3<f64>) -> Vector3<f64> {
    let a = v.abs();
    let e = if a.x <= a.y && a.x <= a.z {
        Vector3::x()
    } else if a.y <= a.z {
        Vector3::y()
    } else {
        Vector3::z()
    };
    v.cross(&e).normalize()
}

/// Minimal rotation taking direction `from` onto `to`, as an axis-angle vector.
pub fn align_rotation_log(from: &Vector3<f64>, to: &Vector3<f64>) -> Vector3<f64> {
    let u = from.normalize();
    let v = to.normalize();
    let cross = u.cross(&v);
    let s = cross.norm();
    let c = u.dot(&v);
    let angle = s.atan2(c);
    if s > 1e-12 {
        cross * (angle / s)
    } else if c > 0.0 {
        Vector3::zeros()
    } else {
        perpendicular(&u) * std::f64::consts::PI
    }
}

/// Inverse of the SE(3) left Jacobian `V(omega)`, applied to `t`.
pub fn se3_translation_log(omega: &Vector3<f64>, t: &Vector3<f64>) -> Vector3<f64> {
    let theta = omega.norm();
    let w = skew(omega);
    let coeff = if theta < 1e-6 {
        1.0 / 12.0 + theta * theta / 720.0
    } else {
        let half = theta / 2.0;
        (1.0 - half * half.cos() / half.sin()) / (theta * theta)
    };
    let v_inv = Matrix3::identity() - w * 0.5 + w * w * coeff;
    v_inv * t
}

/// se(3) coordinates `[omega, rho]` of the motion carrying body `a` onto body
/// `b`: the minimal rotation aligning their directions, and the translation
/// between their start joints. `None` when either segment has zero length.
pub fn relative_motion(frame: &[Joint], a: (usize, usize), b: (usize, usize)) -> Option<[f64; 6]> {
    let da = sub(frame[a.1], frame[a.0]);
    let db = sub(frame[b.1], frame[b.0]);
    if da.norm() < 1e-12 || db.norm() < 1e-12 {
        return None;
    }
    let omega = align_rotation_log(&da, &db);
    let t = sub(frame[b.0], frame[a.0]);
    let rho = se3_translation_log(&omega, &t);
    Some([omega.x, omega.y, omega.z, rho.x, rho.y, rho.z])
}

/// The same action seen from several views, aligned to a common length.
#[derive(Debug, Clone)]
pub struct MultiviewSequence {
    views: Vec<SkeletonSequence>,
}

impl MultiviewSequence {
    /// Resamples all views to the longest view's length.
    pub fn new(views: Vec<SkeletonSequence>) -> Result<Self> {
        let first = views.first().ok_or_else(|| Error::InvalidArgument("no views".into()))?;
        if views.iter().any(|v| v.topology() != first.topology()) {
            return Err(Error::dims("views use different skeleton topologies"));
        }
        let tau = views.iter().map(SkeletonSequence::len).max().expect("non-empty");
        let views = views.iter().map(|v| resample(v, tau)).collect::<Result<Vec<_>>>()?;
        Ok(Self { views })
    }

    pub fn views(&self) -> &[SkeletonSequence] {
        &self.views
    }

    pub fn len(&self) -> usize {
        self.views[0].len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// 4RB: `(N-1) x 9 x V x tau`; the slice at view `v` is that view's 3RB.
pub fn extract_multiview(mv: &MultiviewSequence, kind: Representation) -> Result<TensorSeries> {
    if kind != Representation::Rb4 {
        return Err(Error::InvalidArgument(format!("{kind} is not a multiview representation")));
    }
    let tau = mv.len();
    if mv.views.iter().any(|v| v.len() != tau) {
        return Err(Error::dims("views differ in length"));
    }
    let edges = &mv.views[0].topology.edges;
    let m = edges.len();
    let nv = mv.views.len();
    let mut data = Vec::with_capacity(m * 9 * nv * tau);
    for t in 0..tau {
        for view in &mv.views {
            data.extend(rigid_body_frame(&view.frames[t], edges));
        }
    }
    TensorSeries::new(DenseTensor::new(vec![m, 9, nv, tau], data)?)
}
