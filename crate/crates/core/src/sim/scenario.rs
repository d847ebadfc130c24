//! The planar sitter: chain, seat scene, hover reference and the synthetic
//! sit-down corpus used for labeling and network training.

use std::collections::BTreeSet;
use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::{DVector, Vector2};
use rand::Rng;

use super::chain::{ContactParams, PlanarChain, PlanarLink, BASE_DOF};
use crate::autolabel::{active_joints, annotate_sequence, label_vector, LabelConfig, WeightlessAnnotation};
use crate::contact_geometry::{BoxObstacle, TerrainScene};
use crate::control::PdGains;
use crate::error::{Error, Result};
use crate::motion::MotionSequence;
use crate::seed::{derive_seed, stage_rng};

type V2 = Vector2<f64>;

pub const SITTER_FPS: f64 = 50.0;
const THIGH: f64 = 0.4;
const SHANK: f64 = 0.4;
const HEEL_X: f64 = -0.05;
const TOE_X: f64 = 0.2;
const PELVIS_SITE_DROP: f64 = 0.06;

/// Base (pelvis) plus torso, thigh, shank and foot; joints waist, hip, knee, ankle.
pub fn sitter_chain() -> PlanarChain {
    let link = |name: &str, parent, length, mass, rest_angle, limit, damping| PlanarLink {
        name: String::from(name),
        parent,
        length,
        mass,
        rest_angle,
        extra_sites: vec![],
        torque_limit: limit,
        damping,
    };
    let mut foot = link("ankle", Some(2), TOE_X, 1.0, FRAC_PI_2, 60.0, 0.5);
    foot.extra_sites.push([HEEL_X, 0.0]);
    PlanarChain {
        name: "planar_sitter".into(),
        base_mass: 4.0,
        base_inertia: 0.05,
        base_sites: vec![[-0.08, -PELVIS_SITE_DROP], [0.16, -PELVIS_SITE_DROP]],
        links: vec![
            link("waist", None, 0.5, 8.0, 0.0, 200.0, 0.5),
            link("hip", None, THIGH, 4.0, FRAC_PI_2, 200.0, 1.0),
            link("knee", Some(1), SHANK, 3.0, PI, 200.0, 1.0),
            foot,
        ],
        gains: PdGains::new(vec![800.0, 1000.0, 1000.0, 300.0], vec![10.0, 15.0, 15.0, 3.0]).unwrap(),
        contact: ContactParams::default(),
        waist_link: 0,
        foot_links: vec![3],
        contact_links: vec![3],
        fixed_base: false,
    }
}

/// A seat slab whose top is at `top`, spanning `x_range` fore-aft.
pub fn seat_scene(top: f64, x_range: (f64, f64)) -> TerrainScene {
    let thickness = 0.05;
    let cx = 0.5 * (x_range.0 + x_range.1);
    let hx = 0.5 * (x_range.1 - x_range.0);
    let slab = BoxObstacle::new([cx, 0.0, top - thickness / 2.0], [hx, 0.5, thickness / 2.0], 0.0);
    TerrainScene::new(0.0, vec![slab]).expect("valid seat scene")
}

fn wrap(a: f64) -> f64 {
    let w = (a + PI).rem_euclid(2.0 * PI) - PI;
    if w == -PI {
        PI
    } else {
        w
    }
}

/// Joint angles placing the pelvis at `pelvis` (upright) with the ankle at the
/// origin, the foot flat and the torso leaning by `lean`.
pub fn sitter_pose(pelvis: V2, lean: f64) -> Result<[f64; 4]> {
    let d = -pelvis;
    let dist = d.norm();
    if dist > THIGH + SHANK || dist < (THIGH - SHANK).abs() + 1e-9 {
        return Err(Error::InvalidArgument(format!("pelvis {pelvis:?} out of leg reach")));
    }
    let a = (THIGH * THIGH - SHANK * SHANK + dist * dist) / (2.0 * dist);
    let h = (THIGH * THIGH - a * a).max(0.0).sqrt();
    let mid = pelvis + d * (a / dist);
    let n = V2::new(d.y, -d.x) / dist;
    let n = if n.x >= 0.0 { n } else { -n };
    let knee = mid + n * h;
    let angle = |v: V2| v.x.atan2(v.y);
    let phi_thigh = angle(knee - pelvis);
    let phi_shank = angle(-knee);
    let hip = wrap(phi_thigh - FRAC_PI_2);
    let knee_q = wrap(phi_shank - PI - hip);
    let ankle = wrap(-(hip + knee_q));
    Ok([lean, hip, knee_q, ankle])
}

fn generalized(pelvis: V2, joints: &[f64; 4]) -> DVector<f64> {
    let mut q = DVector::zeros(BASE_DOF + 4);
    q[0] = pelvis.x;
    q[1] = pelvis.y;
    q.as_mut_slice()[BASE_DOF..].copy_from_slice(joints);
    q
}

/// Torso lean that puts the center of mass at `target_x` for a given pelvis position.
fn balancing_lean(chain: &PlanarChain, pelvis: V2, target_x: f64) -> Result<f64> {
    let com_x = |lean: f64| -> Result<f64> {
        Ok(chain.center_of_mass(&generalized(pelvis, &sitter_pose(pelvis, lean)?)).x)
    };
    let (mut lo, mut hi) = (-1.0, 1.0);
    if (com_x(lo)? - target_x) * (com_x(hi)? - target_x) > 0.0 {
        return Err(Error::InvalidArgument("no torso lean balances this pelvis position".into()));
    }
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if (com_x(mid)? - target_x) * (com_x(lo)? - target_x) <= 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Hover-over-the-seat demo setup.
#[derive(Clone, Debug)]
pub struct SitScenario {
    pub chain: PlanarChain,
    pub scene: TerrainScene,
    /// Constant hover pose at the control rate.
    pub reference: MotionSequence,
    /// First frame at which the legs are labeled weightless.
    pub critical_frame: usize,
    /// Per-frame relaxation levels from the labels (1 active, 0 weightless).
    pub relaxation: Vec<Vec<f64>>,
}

pub const HOVER_GAP: f64 = 0.06;

/// Seat and hover placement for [`sit_scenario_with`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SitGeometry {
    pub seat_top: f64,
    pub seat_x: (f64, f64),
    /// Pelvis x during the hover, relative to the ankle.
    pub pelvis_x: f64,
    pub hover_gap: f64,
}

impl Default for SitGeometry {
    fn default() -> Self {
        Self { seat_top: 0.40, seat_x: (-0.3, 0.6), pelvis_x: 0.0, hover_gap: HOVER_GAP }
    }
}

pub fn sit_scenario(duration: f64) -> Result<SitScenario> {
    sit_scenario_with(duration, &SitGeometry::default())
}

pub fn sit_scenario_with(duration: f64, g: &SitGeometry) -> Result<SitScenario> {
    let chain = sitter_chain();
    let pelvis = V2::new(g.pelvis_x, g.seat_top + PELVIS_SITE_DROP + g.hover_gap);
    let lean = balancing_lean(&chain, pelvis, 0.5 * (HEEL_X + TOE_X))?;
    let joints = sitter_pose(pelvis, lean)?;
    let scene = seat_scene(g.seat_top, g.seat_x);
    let frames = (duration * SITTER_FPS).round() as usize + 1;
    let pose = chain.pose(&generalized(pelvis, &joints));
    let reference = MotionSequence::new(SITTER_FPS, vec![pose; frames])?;

    let tree = chain.to_kinematic_tree()?;
    let seated = active_joints(&tree, &BTreeSet::from([0]))?;
    let weightless: Vec<f64> = label_vector(&tree, &seated).iter().map(|&l| 1.0 - f64::from(l)).collect();
    let critical_frame = (0.5 * SITTER_FPS) as usize;
    let relaxation =
        (0..frames).map(|t| if t < critical_frame { vec![1.0; chain.dof()] } else { weightless.clone() }).collect();
    Ok(SitScenario { chain, scene, reference, critical_frame, relaxation })
}

fn smoothstep(s: f64) -> f64 {
    let s = s.clamp(0.0, 1.0);
    s * s * (3.0 - 2.0 * s)
}

/// One labeled sit-down sequence with its seat.
#[derive(Clone, Debug)]
pub struct SitSample {
    pub sequence: MotionSequence,
    pub scene: TerrainScene,
    pub annotation: WeightlessAnnotation,
}

/// Stand, sit down onto a seat of random height and position, stay seated.
/// Feet stay planted and flat; annotations use the autolabeler with no
/// boundary jitter.
pub fn synthetic_sit_corpus(count: usize, frames: usize, seed: u64) -> Result<Vec<SitSample>> {
    let chain = sitter_chain();
    let tree = chain.to_kinematic_tree()?;
    let mut rng = stage_rng(seed, "sit-corpus");
    let cfg = LabelConfig { delta_t: 0, ..LabelConfig::default() };
    let mut out = Vec::with_capacity(count);
    for i in 0..count {
        let seat_top = rng.gen_range(0.38..0.46);
        let seat_x = rng.gen_range(-0.28..-0.22);
        let stand = V2::new(rng.gen_range(0.0..0.08), rng.gen_range(0.74..0.77));
        let lean_max = rng.gen_range(0.25..0.5);
        let stand_frames = rng.gen_range(15..35usize);
        let descent_frames = rng.gen_range(40..70usize);
        let upright_frames = rng.gen_range(10..20usize);
        let seated = V2::new(seat_x, seat_top + PELVIS_SITE_DROP);
        let mut poses = Vec::with_capacity(frames);
        for t in 0..frames {
            let s = (t as f64 - stand_frames as f64) / descent_frames as f64;
            let pelvis = stand + (seated - stand) * smoothstep(s);
            let lean = if s < 1.0 {
                lean_max * smoothstep(2.0 * s)
            } else {
                let u = (t - stand_frames - descent_frames) as f64 / upright_frames as f64;
                lean_max * (1.0 - smoothstep(u))
            };
            let joints = sitter_pose(pelvis, lean)?;
            poses.push(chain.pose(&generalized(pelvis, &joints)));
        }
        let sequence = MotionSequence::new(SITTER_FPS, poses)?;
        let scene = seat_scene(seat_top, (seat_x - 0.2, seat_x + 0.12));
        let annotation = annotate_sequence(&sequence, &tree, &scene, &cfg, derive_seed(seed, &format!("sit-label-{i}")))?;
        out.push(SitSample { sequence, scene, annotation });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::motion_model::forward_kinematics;

    #[test]
    fn pose_keeps_foot_planted_and_flat() {
        let chain = sitter_chain();
        let tree = chain.to_kinematic_tree().unwrap();
        for pelvis in [V2::new(0.05, 0.76), V2::new(-0.25, 0.48), V2::new(0.0, 0.52)] {
            let j = sitter_pose(pelvis, 0.3).unwrap();
            let fk = forward_kinematics(&tree, &chain.pose(&generalized(pelvis, &j))).unwrap();
            let sites = fk.sites(&tree, 4);
            assert!((sites[0].x - TOE_X).abs() < 1e-12 && sites[0].z.abs() < 1e-12);
            assert!((sites[1].x - HEEL_X).abs() < 1e-12 && sites[1].z.abs() < 1e-12);
        }
    }

    #[test]
    fn hover_is_balanced_and_clear_of_seat() {
        let sc = sit_scenario(1.0).unwrap();
        let q = sc.chain.generalized(&sc.reference.frames[0]).unwrap();
        let com = sc.chain.center_of_mass(&q);
        assert!((com.x - 0.075).abs() < 1e-9);
        let sites = sc.chain.site_positions(&q);
        assert!((sites[0].y - 0.46).abs() < 1e-12);
        assert_eq!(sc.relaxation[sc.critical_frame], vec![1.0, 0.0, 0.0, 0.0]);
        assert_eq!(sc.relaxation[0], vec![1.0; 4]);
    }

    #[test]
    fn corpus_has_one_trailing_interval_each() {
        let corpus = synthetic_sit_corpus(4, 150, 3).unwrap();
        for s in &corpus {
            assert_eq!(s.annotation.intervals.len(), 1, "{:?}", s.annotation.intervals);
            let iv = s.annotation.intervals[0];
            assert_eq!(iv.end, 150);
            assert!(iv.start > 40 && iv.start < 140, "{iv:?}");
            assert_eq!(s.annotation.labels[iv.start], vec![0, 1, 1, 1]);
            assert_eq!(s.annotation.labels[iv.start - 1], vec![0; 4]);
        }
    }
}
