//! Tracking rewards and actor/critic observation assembly.

use std::collections::VecDeque;
use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use nalgebra::{UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::motion_model::Vec3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardTerm {
    KeypointPosition,
    RootRotation,
    RootVelocity,
    JointPositionWithoutFeet,
    JointVelocityWithoutFeet,
    Termination,
    JointAcceleration,
    JointVelocity,
    ActionRate,
    Torque,
    FeetOrientation,
    FeetHeading,
}

impl RewardTerm {
    pub const ALL: [RewardTerm; 12] = [
        Self::KeypointPosition,
        Self::RootRotation,
        Self::RootVelocity,
        Self::JointPositionWithoutFeet,
        Self::JointVelocityWithoutFeet,
        Self::Termination,
        Self::JointAcceleration,
        Self::JointVelocity,
        Self::ActionRate,
        Self::Torque,
        Self::FeetOrientation,
        Self::FeetHeading,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::KeypointPosition => "keypoint_position",
            Self::RootRotation => "root_rotation",
            Self::RootVelocity => "root_velocity",
            Self::JointPositionWithoutFeet => "joint_position_without_feet",
            Self::JointVelocityWithoutFeet => "joint_velocity_without_feet",
            Self::Termination => "termination",
            Self::JointAcceleration => "joint_acceleration",
            Self::JointVelocity => "joint_velocity",
            Self::ActionRate => "action_rate",
            Self::Torque => "torque",
            Self::FeetOrientation => "feet_orientation",
            Self::FeetHeading => "feet_heading",
        }
    }

    /// Tracking terms (including termination) as opposed to regularizers.
    pub fn is_task(self) -> bool {
        (self as usize) < 6
    }
}

impl fmt::Display for RewardTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for RewardTerm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL.into_iter().find(|t| t.name() == s).ok_or_else(|| Error::UnknownTerm(s.to_string()))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardWeights {
    pub keypoint_position: f64,
    pub root_rotation: f64,
    pub root_velocity: f64,
    pub joint_position_without_feet: f64,
    pub joint_velocity_without_feet: f64,
    pub termination: f64,
    pub joint_acceleration: f64,
    pub joint_velocity: f64,
    pub action_rate: f64,
    pub torque: f64,
    pub feet_orientation: f64,
    pub feet_heading: f64,
}

impl Default for RewardWeights {
    fn default() -> Self {
        Self {
            keypoint_position: 3.0,
            root_rotation: 0.5,
            root_velocity: 0.75,
            joint_position_without_feet: 32.0,
            joint_velocity_without_feet: 0.5,
            termination: -200.0,
            joint_acceleration: -2.5e-8,
            joint_velocity: -0.001,
            action_rate: -0.5,
            torque: -1e-6,
            feet_orientation: -62.5,
            feet_heading: -1e-5,
        }
    }
}

impl RewardWeights {
    pub fn get(&self, term: RewardTerm) -> f64 {
        *self.slot(term)
    }

    pub fn set(&mut self, term: RewardTerm, value: f64) {
        *self.slot_mut(term) = value;
    }

    fn slot(&self, term: RewardTerm) -> &f64 {
        use RewardTerm::*;
        match term {
            KeypointPosition => &self.keypoint_position,
            RootRotation => &self.root_rotation,
            RootVelocity => &self.root_velocity,
            JointPositionWithoutFeet => &self.joint_position_without_feet,
            JointVelocityWithoutFeet => &self.joint_velocity_without_feet,
            Termination => &self.termination,
            JointAcceleration => &self.joint_acceleration,
            JointVelocity => &self.joint_velocity,
            ActionRate => &self.action_rate,
            Torque => &self.torque,
            FeetOrientation => &self.feet_orientation,
            FeetHeading => &self.feet_heading,
        }
    }

    fn slot_mut(&mut self, term: RewardTerm) -> &mut f64 {
        use RewardTerm::*;
        match term {
            KeypointPosition => &mut self.keypoint_position,
            RootRotation => &mut self.root_rotation,
            RootVelocity => &mut self.root_velocity,
            JointPositionWithoutFeet => &mut self.joint_position_without_feet,
            JointVelocityWithoutFeet => &mut self.joint_velocity_without_feet,
            Termination => &mut self.termination,
            JointAcceleration => &mut self.joint_acceleration,
            JointVelocity => &mut self.joint_velocity,
            ActionRate => &mut self.action_rate,
            Torque => &mut self.torque,
            FeetOrientation => &mut self.feet_orientation,
            FeetHeading => &mut self.feet_heading,
        }
    }
}

/// Measured robot state at one control step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameState {
    pub q: Vec<f64>,
    pub qd: Vec<f64>,
    pub qdd: Vec<f64>,
    pub root_position: Vec3,
    pub root_orientation: UnitQuaternion<f64>,
    pub root_velocity: Vec3,
    pub root_angular_velocity: Vec3,
    pub keypoints: Vec<Vec3>,
    pub action: Vec<f64>,
    pub prev_action: Vec<f64>,
    pub torque: Vec<f64>,
    pub feet_orientations: Vec<UnitQuaternion<f64>>,
    pub terminated: bool,
}

impl FrameState {
    /// All-zero state with identity orientations.
    pub fn zero(dof: usize, keypoints: usize, feet: usize) -> Self {
        Self {
            q: vec![0.0; dof],
            qd: vec![0.0; dof],
            qdd: vec![0.0; dof],
            root_position: Vec3::zeros(),
            root_orientation: UnitQuaternion::identity(),
            root_velocity: Vec3::zeros(),
            root_angular_velocity: Vec3::zeros(),
            keypoints: vec![Vec3::zeros(); keypoints],
            action: vec![0.0; dof],
            prev_action: vec![0.0; dof],
            torque: vec![0.0; dof],
            feet_orientations: vec![UnitQuaternion::identity(); feet],
            terminated: false,
        }
    }

    pub fn dof(&self) -> usize {
        self.q.len()
    }

    /// World gravity direction expressed in the root frame.
    pub fn projected_gravity(&self) -> Vec3 {
        self.root_orientation.inverse_transform_vector(&-Vector3::z())
    }
}

/// Reference motion quantities the state is tracked against.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReferenceFrame {
    pub keypoints: Vec<Vec3>,
    pub root_orientation: UnitQuaternion<f64>,
    pub root_velocity: Vec3,
    /// Full joint vectors; excluded (feet) joints are dropped when forming d.
    pub q: Vec<f64>,
    pub qd: Vec<f64>,
}

impl ReferenceFrame {
    /// The reference that `state` tracks perfectly.
    pub fn matching(state: &FrameState) -> Self {
        Self {
            keypoints: state.keypoints.clone(),
            root_orientation: state.root_orientation,
            root_velocity: state.root_velocity,
            q: state.q.clone(),
            qd: state.qd.clone(),
        }
    }
}

fn norm(v: impl IntoIterator<Item = f64>) -> f64 {
    v.into_iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn sq_dist_excluding(a: &[f64], b: &[f64], excluded: &[usize]) -> f64 {
    a.iter()
        .zip(b)
        .enumerate()
        .filter(|(i, _)| !excluded.contains(i))
        .map(|(_, (x, y))| (x - y) * (x - y))
        .sum()
}

/// Heading of the body x axis about world z.
pub fn yaw(q: &UnitQuaternion<f64>) -> f64 {
    let x = q.transform_vector(&Vector3::x());
    x.y.atan2(x.x)
}

fn wrap_angle(a: f64) -> f64 {
    let w = (a + std::f64::consts::PI).rem_euclid(std::f64::consts::TAU) - std::f64::consts::PI;
    if w == -std::f64::consts::PI {
        std::f64::consts::PI
    } else {
        w
    }
}

fn check_frame(state: &FrameState, reference: &ReferenceFrame) -> Result<()> {
    let k = state.dof();
    for (what, len) in [
        ("qd", state.qd.len()),
        ("qdd", state.qdd.len()),
        ("action", state.action.len()),
        ("previous action", state.prev_action.len()),
        ("torque", state.torque.len()),
        ("reference q", reference.q.len()),
        ("reference qd", reference.qd.len()),
    ] {
        check_len(what, k, len)?;
    }
    check_len("reference keypoints", state.keypoints.len(), reference.keypoints.len())
}

/// Unweighted value of one reward row. `excluded` lists the DoF indices
/// dropped from the "without feet" rows.
pub fn reward_term(term: RewardTerm, state: &FrameState, reference: &ReferenceFrame, excluded: &[usize]) -> Result<f64> {
    check_frame(state, reference)?;
    use RewardTerm::*;
    Ok(match term {
        KeypointPosition => {
            let e: f64 = state.keypoints.iter().zip(&reference.keypoints).map(|(p, r)| (p - r).norm_squared()).sum();
            (-0.1 * e).exp()
        }
        RootRotation => (-state.root_orientation.angle_to(&reference.root_orientation)).exp(),
        RootVelocity => (-(state.root_velocity - reference.root_velocity).norm()).exp(),
        JointPositionWithoutFeet => (-sq_dist_excluding(&state.q, &reference.q, excluded)).exp(),
        JointVelocityWithoutFeet => (-sq_dist_excluding(&state.qd, &reference.qd, excluded)).exp(),
        Termination => f64::from(u8::from(state.terminated)),
        JointAcceleration => norm(state.qdd.iter().copied()),
        JointVelocity => norm(state.qd.iter().copied()),
        ActionRate => norm(state.action.iter().zip(&state.prev_action).map(|(a, b)| a - b)),
        Torque => norm(state.torque.iter().copied()),
        FeetOrientation => norm(state.feet_orientations.iter().flat_map(|f| {
            let g = f.inverse_transform_vector(&-Vector3::z());
            [g.x, g.y]
        })),
        FeetHeading => {
            let root = yaw(&state.root_orientation);
            norm(state.feet_orientations.iter().map(|f| wrap_angle(yaw(f) - root)))
        }
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RewardRow {
    pub term: RewardTerm,
    pub value: f64,
    pub weighted: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub total: f64,
    pub rows: Vec<RewardRow>,
}

impl RewardBreakdown {
    pub fn weighted(&self, term: RewardTerm) -> f64 {
        self.rows.iter().find(|r| r.term == term).map_or(0.0, |r| r.weighted)
    }
}

pub fn total_reward(
    state: &FrameState,
    reference: &ReferenceFrame,
    weights: &RewardWeights,
    excluded: &[usize],
) -> Result<RewardBreakdown> {
    let mut rows = Vec::with_capacity(RewardTerm::ALL.len());
    let mut total = 0.0;
    for term in RewardTerm::ALL {
        let value = reward_term(term, state, reference, excluded)?;
        let weighted = weights.get(term) * value;
        total += weighted;
        rows.push(RewardRow { term, value, weighted });
    }
    Ok(RewardBreakdown { total, rows })
}

pub const OBS_LAYOUT_VERSION: u32 = 1;
pub const HEIGHT_MAP_LEN: usize = crate::contact_geometry::HEIGHT_MAP_LEN;
pub const PRIVILEGED_LEN: usize = 7;
pub const DEFAULT_HISTORY: usize = 5;

/// One single-step observation block.
#[derive(Clone, Debug, PartialEq)]
pub struct ObsBlock {
    pub q: Vec<f64>,
    pub qd: Vec<f64>,
    pub root_angular_velocity: [f64; 3],
    pub gravity: [f64; 3],
    pub prev_action: Vec<f64>,
    pub ref_q: Vec<f64>,
    pub ref_qd: Vec<f64>,
    pub height_map: [f64; HEIGHT_MAP_LEN],
}

impl ObsBlock {
    pub fn from_state(state: &FrameState, reference: &ReferenceFrame, height_map: &[f64; HEIGHT_MAP_LEN]) -> Result<Self> {
        check_frame(state, reference)?;
        let w = state.root_angular_velocity;
        let g = state.projected_gravity();
        Ok(Self {
            q: state.q.clone(),
            qd: state.qd.clone(),
            root_angular_velocity: [w.x, w.y, w.z],
            gravity: [g.x, g.y, g.z],
            prev_action: state.prev_action.clone(),
            ref_q: reference.q.clone(),
            ref_qd: reference.qd.clone(),
            height_map: *height_map,
        })
    }

    pub fn write_into(&self, out: &mut Vec<f64>) {
        out.extend_from_slice(&self.q);
        out.extend_from_slice(&self.qd);
        out.extend_from_slice(&self.root_angular_velocity);
        out.extend_from_slice(&self.gravity);
        out.extend_from_slice(&self.prev_action);
        out.extend_from_slice(&self.ref_q);
        out.extend_from_slice(&self.ref_qd);
        out.extend_from_slice(&self.height_map);
    }

    fn read(s: &[f64], layout: &ObsLayout) -> Self {
        let r = |name: &str| &s[layout.block_field(name)];
        let arr3 = |v: &[f64]| [v[0], v[1], v[2]];
        let mut hm = [0.0; HEIGHT_MAP_LEN];
        hm.copy_from_slice(r("height_map"));
        Self {
            q: r("q").to_vec(),
            qd: r("qd").to_vec(),
            root_angular_velocity: arr3(r("root_angular_velocity")),
            gravity: arr3(r("gravity")),
            prev_action: r("prev_action").to_vec(),
            ref_q: r("ref_q").to_vec(),
            ref_qd: r("ref_qd").to_vec(),
            height_map: hm,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Privileged {
    pub root_velocity: [f64; 3],
    pub friction: f64,
    pub external_force: [f64; 3],
}

impl Privileged {
    pub const ZERO: Privileged = Privileged { root_velocity: [0.0; 3], friction: 0.0, external_force: [0.0; 3] };
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub name: String,
    pub start: usize,
    pub len: usize,
}

/// Flat observation layout: current block, then `history` past blocks
/// (oldest first), then the privileged tail for the critic.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObsLayout {
    pub version: u32,
    pub dof: usize,
    pub history: usize,
}

impl ObsLayout {
    pub fn new(dof: usize, history: usize) -> Self {
        Self { version: OBS_LAYOUT_VERSION, dof, history }
    }

    fn block_fields(&self) -> [(&'static str, usize); 8] {
        let k = self.dof;
        [
            ("q", k),
            ("qd", k),
            ("root_angular_velocity", 3),
            ("gravity", 3),
            ("prev_action", k),
            ("ref_q", k),
            ("ref_qd", k),
            ("height_map", HEIGHT_MAP_LEN),
        ]
    }

    fn block_field(&self, name: &str) -> Range<usize> {
        let mut start = 0;
        for (n, len) in self.block_fields() {
            if n == name {
                return start..start + len;
            }
            start += len;
        }
        unreachable!("unknown observation field {name}")
    }

    pub fn block_len(&self) -> usize {
        5 * self.dof + 6 + HEIGHT_MAP_LEN
    }

    pub fn actor_len(&self) -> usize {
        self.block_len() * (1 + self.history)
    }

    pub fn critic_len(&self) -> usize {
        self.actor_len() + PRIVILEGED_LEN
    }

    pub fn actor_segments(&self) -> Vec<Segment> {
        let mut out = Vec::new();
        let mut start = 0;
        for b in 0..=self.history {
            let prefix = if b == 0 { String::new() } else { format!("history[{}].", b - 1) };
            for (name, len) in self.block_fields() {
                out.push(Segment { name: format!("{prefix}{name}"), start, len });
                start += len;
            }
        }
        out
    }

    pub fn critic_segments(&self) -> Vec<Segment> {
        let mut out = self.actor_segments();
        let a = self.actor_len();
        out.push(Segment { name: "privileged.root_velocity".into(), start: a, len: 3 });
        out.push(Segment { name: "privileged.friction".into(), start: a + 3, len: 1 });
        out.push(Segment { name: "privileged.external_force".into(), start: a + 4, len: 3 });
        out
    }

    pub fn parse_actor(&self, obs: &[f64]) -> Result<(ObsBlock, Vec<ObsBlock>)> {
        check_len("actor observation", self.actor_len(), obs.len())?;
        let b = self.block_len();
        let current = ObsBlock::read(&obs[..b], self);
        let history = (1..=self.history).map(|i| ObsBlock::read(&obs[i * b..(i + 1) * b], self)).collect();
        Ok((current, history))
    }

    pub fn parse_critic(&self, obs: &[f64]) -> Result<(ObsBlock, Vec<ObsBlock>, Privileged)> {
        check_len("critic observation", self.critic_len(), obs.len())?;
        let a = self.actor_len();
        let (cur, hist) = self.parse_actor(&obs[..a])?;
        let p = &obs[a..];
        let privileged =
            Privileged { root_velocity: [p[0], p[1], p[2]], friction: p[3], external_force: [p[4], p[5], p[6]] };
        Ok((cur, hist, privileged))
    }
}

/// Rolling buffer of past single-step blocks. Unfilled slots read as zeros.
#[derive(Clone, Debug, PartialEq)]
pub struct ObsHistory {
    layout: ObsLayout,
    blocks: VecDeque<Vec<f64>>,
}

impl ObsHistory {
    pub fn new(layout: ObsLayout) -> Self {
        Self { layout, blocks: VecDeque::new() }
    }

    pub fn layout(&self) -> &ObsLayout {
        &self.layout
    }

    pub fn is_warm(&self) -> bool {
        self.blocks.len() == self.layout.history
    }

    pub fn push(&mut self, block: Vec<f64>) -> Result<()> {
        check_len("observation block", self.layout.block_len(), block.len())?;
        if self.layout.history == 0 {
            return Ok(());
        }
        if self.blocks.len() == self.layout.history {
            self.blocks.pop_front();
        }
        self.blocks.push_back(block);
        Ok(())
    }

    pub fn clear(&mut self) {
        self.blocks.clear();
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ActorObs {
    pub data: Vec<f64>,
    /// False while the history buffer still has zero-filled slots.
    pub history_complete: bool,
}

/// `[o_t, o_{t-n}, …, o_{t-1}]`; the caller pushes the current block afterwards.
pub fn build_actor_obs(
    state: &FrameState,
    reference: &ReferenceFrame,
    height_map: &[f64; HEIGHT_MAP_LEN],
    history: &ObsHistory,
) -> Result<ActorObs> {
    let layout = &history.layout;
    check_len("state dof", layout.dof, state.dof())?;
    let mut data = Vec::with_capacity(layout.actor_len());
    ObsBlock::from_state(state, reference, height_map)?.write_into(&mut data);
    let missing = layout.history - history.blocks.len();
    data.resize(data.len() + missing * layout.block_len(), 0.0);
    for b in &history.blocks {
        data.extend_from_slice(b);
    }
    Ok(ActorObs { data, history_complete: missing == 0 })
}

pub fn build_critic_obs(actor_obs: &[f64], privileged: &Privileged) -> Vec<f64> {
    let mut out = Vec::with_capacity(actor_obs.len() + PRIVILEGED_LEN);
    out.extend_from_slice(actor_obs);
    out.extend_from_slice(&privileged.root_velocity);
    out.push(privileged.friction);
    out.extend_from_slice(&privileged.external_force);
    out
}
