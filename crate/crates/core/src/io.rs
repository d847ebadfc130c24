//! On-disk formats: motion, annotation and manifest JSON plus CSV time series.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::autolabel::{FrameRange, LabelConfig, WeightlessAnnotation};
use crate::error::{check_len, Error, Result};
use crate::motion::MotionSequence;
use crate::motion_model::{KinematicTree, Pose};
use crate::rewards::RewardBreakdown;
use crate::sim::TrajectoryRow;

pub const MOTION_FORMAT_VERSION: u32 = 1;
pub const ANNOTATION_FORMAT_VERSION: u32 = 1;
pub const MANIFEST_FORMAT_VERSION: u32 = 1;

fn byte_offset(text: &str, line: usize, column: usize) -> usize {
    if line == 0 {
        return 0;
    }
    let start: usize = text.split_inclusive('\n').take(line - 1).map(str::len).sum();
    (start + column.saturating_sub(1)).min(text.len())
}

/// Parses JSON text, reporting failures with a byte offset.
pub fn parse_json<T: DeserializeOwned>(text: &str, path: &Path) -> Result<T> {
    serde_json::from_str(text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        offset: if e.is_eof() { text.len() } else { byte_offset(text, e.line(), e.column()) },
        message: e.to_string(),
    })
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_json(&text, path)
}

/// Pretty JSON with a trailing newline.
pub fn to_json_string<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, to_json_string(value)?).map_err(|e| Error::io(path, e))
}

fn check_version(what: &'static str, found: u32, supported: u32) -> Result<()> {
    if found == 0 || found > supported {
        return Err(Error::UnknownVersion { what, found, supported });
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameFile {
    pub root_position: [f64; 3],
    /// Unit quaternion `[w, x, y, z]`.
    pub root_orientation: [f64; 4],
    pub q: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MotionFile {
    pub format_version: u32,
    pub fps: f64,
    pub joint_count: usize,
    pub frames: Vec<FrameFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub velocities: Option<Vec<Vec<f64>>>,
}

impl MotionFile {
    pub fn from_sequence(seq: &MotionSequence) -> Self {
        let frames = seq
            .frames
            .iter()
            .map(|f| {
                let p = f.root_position;
                let o = f.root_orientation.quaternion();
                FrameFile { root_position: [p.x, p.y, p.z], root_orientation: [o.w, o.i, o.j, o.k], q: f.q.clone() }
            })
            .collect();
        Self {
            format_version: MOTION_FORMAT_VERSION,
            fps: seq.fps,
            joint_count: seq.dof(),
            frames,
            velocities: seq.velocities.clone(),
        }
    }

    pub fn into_sequence(self) -> Result<MotionSequence> {
        check_version("motion file", self.format_version, MOTION_FORMAT_VERSION)?;
        let mut frames = Vec::with_capacity(self.frames.len());
        for f in self.frames {
            check_len("frame joint count", self.joint_count, f.q.len())?;
            frames.push(Pose::from_raw(f.root_position, f.root_orientation, f.q)?);
        }
        let seq = MotionSequence::new(self.fps, frames)?;
        match self.velocities {
            Some(v) => seq.with_velocities(v),
            None => Ok(seq),
        }
    }
}

pub fn load_motion(path: &Path) -> Result<MotionSequence> {
    read_json::<MotionFile>(path)?.into_sequence()
}

/// Loads a motion and checks its joint count against `tree`.
pub fn load_motion_for(path: &Path, tree: &KinematicTree) -> Result<MotionSequence> {
    let seq = load_motion(path)?;
    check_len("motion joint count vs tree", tree.dof(), seq.dof())?;
    Ok(seq)
}

pub fn save_motion(path: &Path, seq: &MotionSequence) -> Result<()> {
    write_json(path, &MotionFile::from_sequence(seq))
}

/// Run of identical label rows; `bits[k]` is `'1'` when DoF `k` is weightless.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelRun {
    pub bits: String,
    pub count: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActiveRun {
    pub joints: Vec<usize>,
    pub count: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnnotationFile {
    pub format_version: u32,
    pub frame_count: usize,
    pub dof: usize,
    pub seed: u64,
    pub config: LabelConfig,
    pub raw_intervals: Vec<FrameRange>,
    pub intervals: Vec<FrameRange>,
    pub labels: Vec<LabelRun>,
    pub active_sets: Vec<ActiveRun>,
}

fn rle<T: PartialEq + Clone>(rows: &[T]) -> Vec<(T, usize)> {
    let mut out: Vec<(T, usize)> = Vec::new();
    for r in rows {
        match out.last_mut() {
            Some((v, n)) if v == r => *n += 1,
            _ => out.push((r.clone(), 1)),
        }
    }
    out
}

impl AnnotationFile {
    pub fn from_annotation(a: &WeightlessAnnotation) -> Self {
        let labels = rle(&a.labels)
            .into_iter()
            .map(|(row, count)| LabelRun { bits: row.iter().map(|&b| if b == 1 { '1' } else { '0' }).collect(), count })
            .collect();
        let active_sets = rle(&a.active_sets)
            .into_iter()
            .map(|(set, count)| ActiveRun { joints: set.into_iter().collect(), count })
            .collect();
        Self {
            format_version: ANNOTATION_FORMAT_VERSION,
            frame_count: a.frame_count,
            dof: a.dof,
            seed: a.seed,
            config: a.config.clone(),
            raw_intervals: a.raw_intervals.clone(),
            intervals: a.intervals.clone(),
            labels,
            active_sets,
        }
    }

    pub fn into_annotation(self) -> Result<WeightlessAnnotation> {
        check_version("annotation file", self.format_version, ANNOTATION_FORMAT_VERSION)?;
        let bad = |m: String| Error::Malformed { what: "annotation file", message: m };
        let mut labels = Vec::with_capacity(self.frame_count);
        for run in &self.labels {
            check_len("label run width", self.dof, run.bits.len())?;
            let row = run
                .bits
                .chars()
                .map(|c| match c {
                    '0' => Ok(0u8),
                    '1' => Ok(1u8),
                    other => Err(bad(format!("label bit {other:?}"))),
                })
                .collect::<Result<Vec<u8>>>()?;
            labels.extend(std::iter::repeat(row).take(run.count));
        }
        let mut active_sets = Vec::with_capacity(self.frame_count);
        for run in &self.active_sets {
            let set: BTreeSet<usize> = run.joints.iter().copied().collect();
            active_sets.extend(std::iter::repeat(set).take(run.count));
        }
        check_len("label frames", self.frame_count, labels.len())?;
        check_len("active-set frames", self.frame_count, active_sets.len())?;
        Ok(WeightlessAnnotation {
            frame_count: self.frame_count,
            dof: self.dof,
            raw_intervals: self.raw_intervals,
            intervals: self.intervals,
            labels,
            active_sets,
            seed: self.seed,
            config: self.config,
        })
    }
}

pub fn save_annotation(path: &Path, a: &WeightlessAnnotation) -> Result<()> {
    write_json(path, &AnnotationFile::from_annotation(a))
}

pub fn load_annotation(path: &Path) -> Result<WeightlessAnnotation> {
    read_json::<AnnotationFile>(path)?.into_annotation()
}

/// Paths (relative to the manifest) and the global seed of a project.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProjectManifest {
    pub format_version: u32,
    #[serde(default)]
    pub tree: Option<PathBuf>,
    #[serde(default)]
    pub scenes: Vec<PathBuf>,
    #[serde(default)]
    pub motions: Vec<PathBuf>,
    #[serde(default)]
    pub annotations: Vec<PathBuf>,
    #[serde(default)]
    pub checkpoints: Vec<PathBuf>,
    #[serde(default)]
    pub seed: u64,
}

impl ProjectManifest {
    /// Loads the manifest and resolves every path against its directory,
    /// failing if any referenced file is missing.
    pub fn load(path: &Path) -> Result<Self> {
        let mut m: Self = read_json(path)?;
        check_version("project manifest", m.format_version, MANIFEST_FORMAT_VERSION)?;
        let dir = path.parent().unwrap_or(Path::new("."));
        let resolve = |p: &mut PathBuf| -> Result<()> {
            if p.is_relative() {
                *p = dir.join(&*p);
            }
            if !p.exists() {
                return Err(Error::io(p.clone(), std::io::Error::from(std::io::ErrorKind::NotFound)));
            }
            Ok(())
        };
        if let Some(t) = m.tree.as_mut() {
            resolve(t)?;
        }
        for p in m.scenes.iter_mut().chain(&mut m.motions).chain(&mut m.annotations).chain(&mut m.checkpoints) {
            resolve(p)?;
        }
        Ok(m)
    }
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    let f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Writer::from_writer(f))
}

fn fmt(v: f64) -> String {
    // Shortest representation that parses back to the same value.
    format!("{v:?}")
}

/// Per-frame relaxation trace: `frame,time,w_0..w_{K-1}` plus `target_*` columns when given.
pub fn write_w_trace(path: &Path, fps: f64, w: &[Vec<f64>], targets: Option<&[Vec<f64>]>) -> Result<()> {
    let mut wr = csv_writer(path)?;
    let k = w.first().map_or(0, Vec::len);
    let mut header = vec!["frame".to_string(), "time".to_string()];
    header.extend((0..k).map(|j| format!("w_{j}")));
    if targets.is_some() {
        header.extend((0..k).map(|j| format!("target_{j}")));
    }
    wr.write_record(&header)?;
    for (t, row) in w.iter().enumerate() {
        let mut rec = vec![t.to_string(), fmt(t as f64 / fps)];
        rec.extend(row.iter().map(|&v| fmt(v)));
        if let Some(tg) = targets {
            rec.extend(tg[t].iter().map(|&v| fmt(v)));
        }
        wr.write_record(&rec)?;
    }
    wr.flush().map_err(|e| Error::io(path, e))
}

/// One row per frame, one column per reward term (weighted) plus the total.
pub fn write_reward_csv(path: &Path, rows: &[RewardBreakdown]) -> Result<()> {
    let mut wr = csv_writer(path)?;
    let mut header = vec!["frame".to_string()];
    if let Some(first) = rows.first() {
        header.extend(first.rows.iter().map(|r| r.term.name().to_string()));
    }
    header.push("total".into());
    wr.write_record(&header)?;
    for (t, b) in rows.iter().enumerate() {
        let mut rec = vec![t.to_string()];
        rec.extend(b.rows.iter().map(|r| fmt(r.weighted)));
        rec.push(fmt(b.total));
        wr.write_record(&rec)?;
    }
    wr.flush().map_err(|e| Error::io(path, e))
}

/// `time, x, z, pitch, q_*, v_*, w_*, tau_*, box_contact, contacts`.
pub fn write_trajectory_csv(path: &Path, rows: &[TrajectoryRow]) -> Result<()> {
    let mut wr = csv_writer(path)?;
    let n = rows.first().map_or(0, |r| r.q.len().saturating_sub(3));
    let mut header: Vec<String> = ["time", "x", "z", "pitch"].iter().map(|s| s.to_string()).collect();
    header.extend((0..n).map(|j| format!("q_{j}")));
    header.extend(["vx", "vz", "vpitch"].iter().map(|s| s.to_string()));
    header.extend((0..n).map(|j| format!("qd_{j}")));
    header.extend((0..n).map(|j| format!("w_{j}")));
    header.extend((0..n).map(|j| format!("tau_{j}")));
    header.extend(["box_contact".to_string(), "contacts".to_string()]);
    wr.write_record(&header)?;
    for r in rows {
        let mut rec = vec![fmt(r.time)];
        rec.extend(r.q.iter().chain(&r.v).map(|&v| fmt(v)));
        let pad = |v: &[f64]| (0..n).map(|j| fmt(v.get(j).copied().unwrap_or(f64::NAN))).collect::<Vec<_>>();
        rec.extend(pad(&r.w));
        rec.extend(pad(&r.torque));
        rec.push(u8::from(r.box_contact).to_string());
        rec.push(r.contacts.to_string());
        wr.write_record(&rec)?;
    }
    wr.flush().map_err(|e| Error::io(path, e))
}
