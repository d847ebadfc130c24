use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::motion::{differentiate, MotionSequence};
use crate::motion_model::{forward_kinematics, KinematicTree, Vec3};

/// Tracking errors between an executed motion and its reference.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrackingMetrics {
    /// Mean per-joint global position error, m.
    pub e_mpjpe: f64,
    /// Mean per-DoF angle error, rad.
    pub e_mpjae: f64,
    /// Mean per-joint global velocity error, m/s.
    pub e_mpjve: f64,
    pub e_root_p: f64,
    /// Geodesic root rotation error, rad.
    pub e_root_r: f64,
    pub e_root_v: f64,
}

/// Joint positions relative to the root, in world orientation.
fn relative_positions(tree: &KinematicTree, seq: &MotionSequence) -> Result<Vec<Vec<Vec3>>> {
    seq.frames
        .iter()
        .map(|p| {
            let mut at_origin = p.clone();
            at_origin.root_position = Vec3::zeros();
            Ok(forward_kinematics(tree, &at_origin)?.world_positions)
        })
        .collect()
}

fn velocities(positions: &[Vec<Vec3>], fps: f64) -> Vec<Vec<Vec3>> {
    let flat: Vec<Vec<f64>> = positions.iter().map(|f| f.iter().flat_map(|p| [p.x, p.y, p.z]).collect()).collect();
    let refs: Vec<&[f64]> = flat.iter().map(Vec::as_slice).collect();
    differentiate(&refs, fps)
        .into_iter()
        .map(|f| f.chunks(3).map(|c| Vec3::new(c[0], c[1], c[2])).collect())
        .collect()
}

/// Running mean; a constant input comes back unchanged.
fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let mut m = 0.0;
    for (k, v) in values.enumerate() {
        m += (v - m) / (k + 1) as f64;
    }
    m
}

/// Mean distance between `root_a[t] + rel_a[t][j]` and `root_b[t] + rel_b[t][j]`.
/// Root and relative parts are differenced separately so a pure root offset
/// is reproduced without rounding from the absolute positions.
fn mean_dist(root_a: &[Vec3], rel_a: &[Vec<Vec3>], root_b: &[Vec3], rel_b: &[Vec<Vec3>]) -> f64 {
    mean(root_a.iter().zip(rel_a).zip(root_b.iter().zip(rel_b)).flat_map(|((ra, fa), (rb, fb))| {
        let dr = ra - rb;
        fa.iter().zip(fb).map(move |(pa, pb)| (dr + (pa - pb)).norm())
    }))
}

pub fn compute_metrics(tree: &KinematicTree, result: &MotionSequence, reference: &MotionSequence) -> Result<TrackingMetrics> {
    check_len("result frames", reference.len(), result.len())?;
    check_len("result dof", reference.dof(), result.dof())?;
    if result.fps != reference.fps {
        return Err(Error::InvalidArgument(format!("fps differ: {} vs {}", result.fps, reference.fps)));
    }
    if result.is_empty() {
        return Err(Error::InvalidArgument("sequences have no frames".into()));
    }
    let pa = relative_positions(tree, result)?;
    let pb = relative_positions(tree, reference)?;
    let va = velocities(&pa, result.fps);
    let vb = velocities(&pb, reference.fps);
    let roots = |s: &MotionSequence| -> Vec<Vec3> { s.frames.iter().map(|f| f.root_position).collect() };
    let root_vel = |r: &[Vec3], fps: f64| -> Vec<Vec3> {
        velocities(&r.iter().map(|p| vec![*p]).collect::<Vec<_>>(), fps).into_iter().map(|f| f[0]).collect()
    };
    let (ra, rb) = (roots(result), roots(reference));
    let (rva, rvb) = (root_vel(&ra, result.fps), root_vel(&rb, reference.fps));
    let origin = vec![vec![Vec3::zeros()]; result.len()];
    let n = result.len() as f64;
    let dof = result.dof().max(1) as f64;
    let e_mpjae = result
        .frames
        .iter()
        .zip(&reference.frames)
        .map(|(a, b)| a.q.iter().zip(&b.q).map(|(x, y)| (x - y).abs()).sum::<f64>() / dof)
        .sum::<f64>()
        / n;
    let e_root_r = result
        .frames
        .iter()
        .zip(&reference.frames)
        .map(|(a, b)| a.root_orientation.angle_to(&b.root_orientation))
        .sum::<f64>()
        / n;
    Ok(TrackingMetrics {
        e_mpjpe: mean_dist(&ra, &pa, &rb, &pb),
        e_mpjae,
        e_mpjve: mean_dist(&rva, &va, &rvb, &vb),
        e_root_p: mean_dist(&ra, &origin, &rb, &origin),
        e_root_r,
        e_root_v: mean_dist(&rva, &origin, &rvb, &origin),
    })
}
