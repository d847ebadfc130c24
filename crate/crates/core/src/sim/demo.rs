use serde::{Deserialize, Serialize};

use super::chain::{step, ContactBody, PlanarChain, SimState};
use crate::contact_geometry::TerrainScene;
use crate::control::{modulate, pd_torque};
use crate::error::{check_len, Error, Result};
use crate::motion::MotionSequence;
use crate::wm::OnlineWm;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DemoConfig {
    pub duration: f64,
    pub control_hz: f64,
    pub substeps: usize,
    /// Joint speed bound for settling, rad/s.
    pub settle_speed: f64,
    /// How long the bound must hold, s.
    pub settle_window: f64,
    /// Base height under which the chain counts as fallen when off the boxes.
    pub fall_height: f64,
}

impl Default for DemoConfig {
    fn default() -> Self {
        Self { duration: 5.0, control_hz: 50.0, substeps: 20, settle_speed: 0.05, settle_window: 0.5, fall_height: 0.25 }
    }
}

/// Source of the per-tick relaxation vector w.
#[derive(Clone, Debug)]
pub enum Relaxation {
    Constant(f64),
    /// One vector per control tick; the last one is held.
    PerTick(Vec<Vec<f64>>),
    /// Online network fed with measured history/current and reference future frames.
    Network(Box<OnlineWm>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub time: f64,
    pub q: Vec<f64>,
    pub v: Vec<f64>,
    pub w: Vec<f64>,
    pub torque: Vec<f64>,
    pub box_contact: bool,
    pub contacts: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DemoReport {
    /// First time any site touched a box.
    pub contact_time: Option<f64>,
    /// Start of the box contact that lasts to the end of the run.
    pub persistent_contact_time: Option<f64>,
    /// Start of the first quiet window after the last change of w.
    pub settle_time: Option<f64>,
    pub fell: bool,
    pub min_base_height: f64,
    pub final_base: [f64; 3],
}

#[derive(Clone, Debug)]
pub struct DemoResult {
    pub trajectory: Vec<TrajectoryRow>,
    pub report: DemoReport,
}

fn reference_q(reference: &MotionSequence, tick: usize) -> &[f64] {
    &reference.frames[tick.min(reference.len() - 1)].q
}

/// Closed loop at the control rate: PD toward the reference, torques scaled
/// by w, `substeps` integration steps per tick.
pub fn run_weightless_demo(
    chain: &PlanarChain,
    scene: &TerrainScene,
    reference: &MotionSequence,
    mut relaxation: Relaxation,
    cfg: &DemoConfig,
) -> Result<DemoResult> {
    chain.validate()?;
    if reference.is_empty() {
        return Err(Error::InvalidArgument("reference motion has no frames".into()));
    }
    check_len("reference dof", chain.dof(), reference.dof())?;
    if !(cfg.control_hz > 0.0) || cfg.substeps == 0 || !(cfg.duration > 0.0) {
        return Err(Error::InvalidArgument("control rate, substeps and duration must be positive".into()));
    }
    let n = chain.dof();
    let dt = 1.0 / (cfg.control_hz * cfg.substeps as f64);
    let ticks = (cfg.duration * cfg.control_hz).round() as usize;
    let limits = chain.torque_limits();
    let strength = vec![1.0; n];

    let q0 = chain.generalized(&reference.frames[0])?;
    let mut state = SimState::new([q0[0], q0[1], q0[2]], &q0.as_slice()[3..]);
    let mut history: Vec<Vec<f64>> = vec![state.joint_q().to_vec(); 4];
    let mut trajectory = Vec::with_capacity(ticks + 1);
    let mut report = DemoReport {
        contact_time: None,
        persistent_contact_time: None,
        settle_time: None,
        fell: false,
        min_base_height: state.q[1],
        final_base: state.base(),
    };
    let mut contact_since: Option<f64> = None;
    let mut quiet_since: Option<f64> = None;
    let mut last_w: Option<Vec<f64>> = None;
    let mut torque = vec![0.0; n];

    for tick in 0..ticks {
        let q_ref = reference_q(reference, tick);
        let w = match &mut relaxation {
            Relaxation::Constant(c) => vec![*c; n],
            Relaxation::PerTick(ws) => {
                let w = ws.get(tick).or(ws.last()).cloned().unwrap_or_else(|| vec![1.0; n]);
                check_len("relaxation vector", n, w.len())?;
                w
            }
            Relaxation::Network(net) => {
                let future: Vec<Vec<f64>> = (0..5).map(|i| reference_q(reference, tick + i).to_vec()).collect();
                net.infer(&history, state.joint_q(), &future)?
            }
        };
        if last_w.as_ref() != Some(&w) {
            // Settling is judged only after the last change of the command.
            quiet_since = None;
            report.settle_time = None;
            last_w = Some(w.clone());
        }
        trajectory.push(row(&state, &w, &torque));
        for _ in 0..cfg.substeps {
            let tau = pd_torque(&chain.gains, q_ref, state.joint_q(), state.joint_v(), &limits, &strength)?;
            torque = modulate(&tau, &w)?;
            state = step(chain, &state, &torque, scene, dt)?;
            let t = state.time;
            let on_box = state.contacts.iter().any(|c| matches!(c.body, ContactBody::Box(_)));
            if on_box {
                report.contact_time.get_or_insert(t);
                contact_since.get_or_insert(t);
            } else {
                contact_since = None;
            }
            report.min_base_height = report.min_base_height.min(state.q[1]);
            if state.q[1] < cfg.fall_height && !on_box {
                report.fell = true;
            }
            let quiet = state.joint_v().iter().all(|v| v.abs() < cfg.settle_speed);
            if quiet {
                let start = *quiet_since.get_or_insert(t);
                if report.settle_time.is_none() && t - start >= cfg.settle_window - 1e-9 {
                    report.settle_time = Some(start);
                }
            } else {
                quiet_since = None;
            }
        }
        history.remove(0);
        history.push(state.joint_q().to_vec());
    }
    trajectory.push(row(&state, last_w.as_deref().unwrap_or(&[]), &torque));
    report.persistent_contact_time = contact_since;
    report.final_base = state.base();
    Ok(DemoResult { trajectory, report })
}

fn row(state: &SimState, w: &[f64], torque: &[f64]) -> TrajectoryRow {
    TrajectoryRow {
        time: state.time,
        q: state.q.as_slice().to_vec(),
        v: state.v.as_slice().to_vec(),
        w: w.to_vec(),
        torque: torque.to_vec(),
        box_contact: state.contacts.iter().any(|c| matches!(c.body, ContactBody::Box(_))),
        contacts: state.contacts.len(),
    }
}
