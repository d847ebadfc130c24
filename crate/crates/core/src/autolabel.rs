//! Automatic labeling of weightless intervals and weightless joints.
//!
//! A frame is weightless when the ground projection of the center of mass
//! leaves the support polygon while some non-foot body part touches the
//! environment. Inside those intervals the joints that stay active are the
//! waist and every ancestor chain from a contact joint up to the waist; all
//! other actuated joints are labeled weightless.

use std::collections::BTreeSet;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::contact_geometry::{
    detect_contacts, point_in_polygon, support_polygon, ContactSet, Point2, SupportPolygon,
    TerrainScene, DEFAULT_CONTACT_EPS,
};
use crate::error::{check_len, Error, Result};
use crate::motion::MotionSequence;
use crate::motion_model::{
    center_of_mass, forward_kinematics, gravity_projection, KinematicTree, Pose,
};

/// Half-open range of frame indices `[start, end)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FrameRange {
    pub start: usize,
    pub end: usize,
}

impl FrameRange {
    pub fn new(start: usize, end: usize) -> Self {
        Self { start, end }
    }

    pub fn len(&self) -> usize {
        self.end.saturating_sub(self.start)
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }

    pub fn contains(&self, t: usize) -> bool {
        self.start <= t && t < self.end
    }
}

/// Which contacts feed C(t).
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContactMode {
    /// Only body parts other than the feet count.
    #[default]
    ExcludeFeet,
    /// Every contact joint counts, feet included.
    IncludeFeet,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabelConfig {
    pub eps: f64,
    /// Maximum random shift of interval boundaries, frames.
    pub delta_t: usize,
    #[serde(default)]
    pub contact_mode: ContactMode,
}

impl Default for LabelConfig {
    fn default() -> Self {
        Self {
            eps: DEFAULT_CONTACT_EPS,
            delta_t: 20,
            contact_mode: ContactMode::ExcludeFeet,
        }
    }
}

impl LabelConfig {
    fn validate(&self) -> Result<()> {
        if !(self.eps > 0.0) {
            return Err(Error::InvalidArgument(format!("eps must be positive, got {}", self.eps)));
        }
        Ok(())
    }
}

/// Everything the labeler derives from one pose.
#[derive(Clone, Debug)]
pub struct FrameEvaluation {
    pub com_projection: Point2,
    pub support: SupportPolygon,
    /// All detected contacts.
    pub contacts: ContactSet,
    /// Contacts selected by the [`ContactMode`].
    pub labeling_contacts: ContactSet,
}

impl FrameEvaluation {
    pub fn com_outside_support(&self) -> bool {
        !point_in_polygon(&self.com_projection, &self.support)
    }

    pub fn is_weightless(&self) -> bool {
        self.com_outside_support() && !self.labeling_contacts.is_empty()
    }
}

pub fn evaluate_frame(
    tree: &KinematicTree,
    pose: &Pose,
    scene: &TerrainScene,
    eps: f64,
    mode: ContactMode,
) -> Result<FrameEvaluation> {
    let fk = forward_kinematics(tree, pose)?;
    let com = center_of_mass(tree, &fk)?;
    let contacts = detect_contacts(tree, &fk, scene, eps);
    let labeling_contacts = match mode {
        ContactMode::IncludeFeet => contacts.clone(),
        ContactMode::ExcludeFeet => contacts
            .iter()
            .copied()
            .filter(|c| !tree.feet().contains(c))
            .collect(),
    };
    Ok(FrameEvaluation {
        com_projection: gravity_projection(&com),
        support: support_polygon(tree, &fk, scene, eps),
        contacts,
        labeling_contacts,
    })
}

fn evaluate_sequence(
    seq: &MotionSequence,
    tree: &KinematicTree,
    scene: &TerrainScene,
    cfg: &LabelConfig,
) -> Result<Vec<FrameEvaluation>> {
    cfg.validate()?;
    if seq.is_empty() {
        return Err(Error::InvalidArgument("motion sequence has no frames".into()));
    }
    check_len("motion dof", tree.dof(), seq.dof())?;
    seq.frames
        .iter()
        .map(|pose| evaluate_frame(tree, pose, scene, cfg.eps, cfg.contact_mode))
        .collect()
}

/// Maximal runs of `true`.
pub fn runs(flags: &[bool]) -> Vec<FrameRange> {
    let mut out = Vec::new();
    let mut start = None;
    for (t, &f) in flags.iter().enumerate() {
        match (f, start) {
            (true, None) => start = Some(t),
            (false, Some(s)) => {
                out.push(FrameRange::new(s, t));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        out.push(FrameRange::new(s, flags.len()));
    }
    out
}

pub fn weightless_interval(
    seq: &MotionSequence,
    tree: &KinematicTree,
    scene: &TerrainScene,
    cfg: &LabelConfig,
) -> Result<Vec<FrameRange>> {
    let evals = evaluate_sequence(seq, tree, scene, cfg)?;
    let flags: Vec<bool> = evals.iter().map(FrameEvaluation::is_weightless).collect();
    Ok(runs(&flags))
}

/// Shifts each range boundary by an independent uniform integer in
/// `[-delta_t, delta_t]`, clamps to `[0, frame_count]`, drops empty results
/// and merges overlaps.
pub fn perturb_interval<R: Rng + ?Sized>(
    ranges: &[FrameRange],
    delta_t: usize,
    frame_count: usize,
    rng: &mut R,
) -> Vec<FrameRange> {
    let d = delta_t as i64;
    let n = frame_count as i64;
    let mut out: Vec<FrameRange> = ranges
        .iter()
        .filter_map(|r| {
            let ds = if d > 0 { rng.gen_range(-d..=d) } else { 0 };
            let de = if d > 0 { rng.gen_range(-d..=d) } else { 0 };
            let s = (r.start as i64 + ds).clamp(0, n);
            let e = (r.end as i64 + de).clamp(0, n);
            (s < e).then(|| FrameRange::new(s as usize, e as usize))
        })
        .collect();
    out.sort();
    let mut merged: Vec<FrameRange> = Vec::with_capacity(out.len());
    for r in out {
        match merged.last_mut() {
            Some(last) if r.start <= last.end => last.end = last.end.max(r.end),
            _ => merged.push(r),
        }
    }
    merged
}

/// A(t): the waist chain plus every ancestor path from a contact joint up to
/// the waist (or the root, for limbs that do not hang below the waist).
pub fn active_joints(tree: &KinematicTree, contacts: &ContactSet) -> Result<BTreeSet<usize>> {
    let waist = tree.waist_chain();
    let mut active = waist.clone();
    for &c in contacts {
        if c >= tree.len() {
            return Err(Error::InvalidArgument(format!(
                "contact joint {c} is not in the tree"
            )));
        }
        let mut cur = Some(c);
        while let Some(j) = cur {
            if waist.contains(&j) {
                break;
            }
            active.insert(j);
            cur = tree.parent(j);
        }
    }
    Ok(active)
}

/// W(t): actuated joints outside the active set.
pub fn weightless_joints(tree: &KinematicTree, active: &BTreeSet<usize>) -> BTreeSet<usize> {
    (1..tree.len()).filter(|j| !active.contains(j)).collect()
}

/// Per-DoF label vector: 1 for weightless joints.
pub fn label_vector(tree: &KinematicTree, active: &BTreeSet<usize>) -> Vec<u8> {
    (1..tree.len())
        .map(|j| u8::from(!active.contains(&j)))
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct WeightlessAnnotation {
    pub frame_count: usize,
    pub dof: usize,
    /// Intervals before the random boundary shift.
    pub raw_intervals: Vec<FrameRange>,
    /// Intervals the labels were produced from.
    pub intervals: Vec<FrameRange>,
    /// `labels[t][k] == 1` when DoF `k` is weightless at frame `t`.
    pub labels: Vec<Vec<u8>>,
    /// A(t) as joint indices (root included when active).
    pub active_sets: Vec<BTreeSet<usize>>,
    pub seed: u64,
    pub config: LabelConfig,
}

impl WeightlessAnnotation {
    /// Annotation without any weightless interval, for a tree of `dof + 1` joints.
    pub fn all_active(frame_count: usize, dof: usize, config: LabelConfig) -> Self {
        Self {
            frame_count,
            dof,
            raw_intervals: Vec::new(),
            intervals: Vec::new(),
            labels: vec![vec![0; dof]; frame_count],
            active_sets: vec![(0..=dof).collect(); frame_count],
            seed: 0,
            config,
        }
    }

    pub fn in_interval(&self, t: usize) -> bool {
        self.intervals.iter().any(|r| r.contains(t))
    }

    /// Training target: 1 for active, 0 for weightless.
    pub fn activation_targets(&self) -> Vec<Vec<f64>> {
        self.labels
            .iter()
            .map(|row| row.iter().map(|&l| 1.0 - f64::from(l)).collect())
            .collect()
    }
}

pub fn annotate_sequence(
    seq: &MotionSequence,
    tree: &KinematicTree,
    scene: &TerrainScene,
    cfg: &LabelConfig,
    seed: u64,
) -> Result<WeightlessAnnotation> {
    let evals = evaluate_sequence(seq, tree, scene, cfg)?;
    let n = evals.len();
    let flags: Vec<bool> = evals.iter().map(FrameEvaluation::is_weightless).collect();
    let raw_intervals = runs(&flags);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let intervals = perturb_interval(&raw_intervals, cfg.delta_t, n, &mut rng);

    let with_contacts: Vec<usize> = (0..n)
        .filter(|&t| !evals[t].labeling_contacts.is_empty())
        .collect();
    let all: BTreeSet<usize> = (0..tree.len()).collect();
    let empty = ContactSet::new();

    let mut labels = Vec::with_capacity(n);
    let mut active_sets = Vec::with_capacity(n);
    for t in 0..n {
        if !intervals.iter().any(|r| r.contains(t)) {
            labels.push(vec![0; tree.dof()]);
            active_sets.push(all.clone());
            continue;
        }
        let contacts = if !evals[t].labeling_contacts.is_empty() {
            &evals[t].labeling_contacts
        } else {
            // nearest frame with contacts; ties resolve to the earlier frame
            with_contacts
                .iter()
                .min_by_key(|&&s| (s.abs_diff(t), s))
                .map_or(&empty, |&s| &evals[s].labeling_contacts)
        };
        let active = active_joints(tree, contacts)?;
        labels.push(label_vector(tree, &active));
        active_sets.push(active);
    }
    Ok(WeightlessAnnotation {
        frame_count: n,
        dof: tree.dof(),
        raw_intervals,
        intervals,
        labels,
        active_sets,
        seed,
        config: cfg.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn runs_of_flags() {
        let f = [false, true, true, false, true];
        assert_eq!(runs(&f), vec![FrameRange::new(1, 3), FrameRange::new(4, 5)]);
        assert!(runs(&[false; 4]).is_empty());
    }

    #[test]
    fn zero_shift_is_identity() {
        let r = vec![FrameRange::new(3, 9), FrameRange::new(20, 40)];
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(perturb_interval(&r, 0, 50, &mut rng), r);
    }

    #[test]
    fn shifts_stay_within_delta_and_bounds() {
        let r = vec![FrameRange::new(100, 200)];
        for seed in 0..200 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let out = perturb_interval(&r, 20, 210, &mut rng);
            assert_eq!(out.len(), 1);
            assert!(out[0].start.abs_diff(100) <= 20);
            assert!(out[0].end.abs_diff(200) <= 20);
            assert!(out[0].end <= 210);
        }
    }

    #[test]
    fn perturbation_is_seeded() {
        let r = vec![FrameRange::new(10, 30), FrameRange::new(60, 90)];
        let a = perturb_interval(&r, 5, 100, &mut ChaCha8Rng::seed_from_u64(3));
        let b = perturb_interval(&r, 5, 100, &mut ChaCha8Rng::seed_from_u64(3));
        assert_eq!(a, b);
    }

    #[test]
    fn empty_contacts_leave_only_waist_active() {
        let tree = KinematicTree::example_g1();
        let active = active_joints(&tree, &ContactSet::new()).unwrap();
        assert_eq!(active, tree.waist_chain());
        let w = weightless_joints(&tree, &active);
        assert_eq!(w.len(), 23 - 3);
    }

    #[test]
    fn left_elbow_and_foot_case() {
        let tree = KinematicTree::example_g1();
        let elbow = tree.index_of("left_elbow").unwrap();
        let foot = tree.index_of("left_ankle_roll").unwrap();
        let active = active_joints(&tree, &[elbow, foot].into_iter().collect()).unwrap();
        let names: BTreeSet<&str> = active.iter().map(|&j| tree.joint(j).name.as_str()).collect();
        for n in [
            "pelvis",
            "waist_yaw",
            "waist_roll",
            "waist_pitch",
            "left_shoulder_pitch",
            "left_shoulder_roll",
            "left_shoulder_yaw",
            "left_elbow",
            "left_hip_pitch",
            "left_hip_roll",
            "left_hip_yaw",
            "left_knee",
            "left_ankle_pitch",
            "left_ankle_roll",
        ] {
            assert!(names.contains(n), "{n} should be active");
        }
        let weightless: Vec<&str> = weightless_joints(&tree, &active)
            .iter()
            .map(|&j| tree.joint(j).name.as_str())
            .collect();
        assert_eq!(weightless.len(), 10);
        assert!(weightless.iter().all(|n| n.starts_with("right_")));
    }

    #[test]
    fn unknown_contact_rejected() {
        let tree = KinematicTree::example_g1();
        assert!(active_joints(&tree, &[99].into_iter().collect()).is_err());
    }
}
