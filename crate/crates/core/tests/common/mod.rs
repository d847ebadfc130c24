//! Independent reference implementations used by the integration and
//! acceptance tests. Nothing here calls into the code it checks.

#![allow(dead_code)]

use nalgebra::{DVector, UnitQuaternion, Vector2};
use wmkit::contact_geometry::TerrainScene;
use wmkit::motion::MotionSequence;
use wmkit::sim::{seat_scene, sitter_chain, sitter_pose, PlanarChain};

pub type P2 = Vector2<f64>;

// ---------------------------------------------------------------- LSTM ---

fn sig(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Scalar forward pass of a stacked LSTM with an affine sigmoid head.
///
/// Per layer the flat vector holds W_x (4H x I, row-major), W_h (4H x H) and
/// b (4H), rows ordered input, forget, cell, output gate. The head is
/// W (K x H_last) then b (K).
pub fn lstm_forward(input: usize, hidden: &[usize], output: usize, params: &[f64], xs: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut h: Vec<Vec<f64>> = hidden.iter().map(|&n| vec![0.0; n]).collect();
    let mut c = h.clone();
    let mut out = Vec::new();
    for x in xs {
        let mut inp = x.clone();
        let mut off = 0;
        let mut isz = input;
        for (l, &hs) in hidden.iter().enumerate() {
            let wx = off;
            let wh = wx + 4 * hs * isz;
            let b = wh + 4 * hs * hs;
            off = b + 4 * hs;
            let mut a = vec![0.0; 4 * hs];
            for (r, a_r) in a.iter_mut().enumerate() {
                let mut s = params[b + r];
                for k in 0..isz {
                    s += params[wx + r * isz + k] * inp[k];
                }
                for k in 0..hs {
                    s += params[wh + r * hs + k] * h[l][k];
                }
                *a_r = s;
            }
            for j in 0..hs {
                let (i, f, g, o) = (sig(a[j]), sig(a[hs + j]), a[2 * hs + j].tanh(), sig(a[3 * hs + j]));
                c[l][j] = f * c[l][j] + i * g;
                h[l][j] = o * c[l][j].tanh();
            }
            inp = h[l].clone();
            isz = hs;
        }
        let y = (0..output)
            .map(|k| {
                let mut s = params[off + output * isz + k];
                for j in 0..isz {
                    s += params[off + k * isz + j] * inp[j];
                }
                sig(s)
            })
            .collect();
        out.push(y);
    }
    out
}

/// Mean BCE (clamped at 1e-7) plus lambda/K times the summed squared frame differences.
pub fn sequence_loss(pred: &[Vec<f64>], target: &[Vec<f64>], lambda: f64) -> f64 {
    let k = pred[0].len() as f64;
    let mut bce = 0.0;
    for (p, y) in pred.iter().zip(target) {
        for (&p, &y) in p.iter().zip(y) {
            let p = p.clamp(1e-7, 1.0 - 1e-7);
            bce -= y * p.ln() + (1.0 - y) * (1.0 - p).ln();
        }
    }
    let mut smooth = 0.0;
    for t in 1..pred.len() {
        for j in 0..pred[t].len() {
            smooth += (pred[t][j] - pred[t - 1][j]).powi(2);
        }
    }
    bce / (pred.len() as f64 * k) + lambda * smooth / k
}

// ------------------------------------------------------------ geometry ---

fn orient(o: P2, a: P2, b: P2) -> f64 {
    (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x)
}

fn on_closed_segment(p: P2, a: P2, b: P2) -> bool {
    orient(a, b, p) == 0.0
        && p.x >= a.x.min(b.x)
        && p.x <= a.x.max(b.x)
        && p.y >= a.y.min(b.y)
        && p.y <= a.y.max(b.y)
}

/// Extreme points by the cubic edge test: a directed pair (a, b) is a hull
/// edge when every point lies strictly left of it or on the segment itself.
pub fn hull_vertices_brute(points: &[P2]) -> Vec<P2> {
    let mut uniq: Vec<P2> = Vec::new();
    for p in points {
        if !uniq.contains(p) {
            uniq.push(*p);
        }
    }
    if uniq.len() <= 1 {
        return uniq;
    }
    let mut verts: Vec<P2> = Vec::new();
    for &a in &uniq {
        for &b in &uniq {
            if a == b {
                continue;
            }
            let edge = uniq.iter().all(|&q| orient(a, b, q) > 0.0 || on_closed_segment(q, a, b));
            if edge {
                for v in [a, b] {
                    if !verts.contains(&v) {
                        verts.push(v);
                    }
                }
            }
        }
    }
    verts.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    verts
}

/// Even-odd ray casting toward +x; meaningful only away from the boundary.
pub fn ray_cast_inside(p: P2, poly: &[P2]) -> bool {
    let n = poly.len();
    let mut inside = false;
    for i in 0..n {
        let (a, b) = (poly[i], poly[(i + 1) % n]);
        if (a.y > p.y) != (b.y > p.y) {
            let x = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
            if p.x < x {
                inside = !inside;
            }
        }
    }
    inside
}

pub fn boundary_distance(p: P2, poly: &[P2]) -> f64 {
    let n = poly.len();
    (0..n)
        .map(|i| {
            let (a, b) = (poly[i], poly[(i + 1) % n]);
            let ab = b - a;
            let t = ((p - a).dot(&ab) / ab.norm_squared()).clamp(0.0, 1.0);
            (p - (a + ab * t)).norm()
        })
        .fold(f64::INFINITY, f64::min)
}

// ---------------------------------------------------------- parent walk --

/// Active joints from a transitive-closure ancestor matrix:
/// the waist's ancestors-or-self plus every contact's ancestors-or-self.
pub fn active_set_closure(parents: &[Option<usize>], waist: usize, contacts: &[usize]) -> Vec<usize> {
    let n = parents.len();
    let mut anc = vec![vec![false; n]; n];
    for i in 0..n {
        anc[i][i] = true;
        if let Some(p) = parents[i] {
            anc[i][p] = true;
        }
    }
    for k in 0..n {
        for i in 0..n {
            if anc[i][k] {
                for j in 0..n {
                    if anc[k][j] {
                        anc[i][j] = true;
                    }
                }
            }
        }
    }
    (0..n).filter(|&j| anc[waist][j] || contacts.iter().any(|&c| anc[c][j])).collect()
}

// -------------------------------------------------------------- rewards --

pub struct RewardOracleInput<'a> {
    pub q: &'a [f64],
    pub qd: &'a [f64],
    pub qdd: &'a [f64],
    pub action: &'a [f64],
    pub prev_action: &'a [f64],
    pub torque: &'a [f64],
    pub keypoints: &'a [[f64; 3]],
    pub ref_keypoints: &'a [[f64; 3]],
    /// (w, x, y, z)
    pub root_rot: [f64; 4],
    pub ref_root_rot: [f64; 4],
    pub root_vel: [f64; 3],
    pub ref_root_vel: [f64; 3],
    pub ref_q: &'a [f64],
    pub ref_qd: &'a [f64],
    pub feet_rot: &'a [[f64; 4]],
    pub terminated: bool,
    pub excluded: &'a [usize],
}

fn normalize(q: [f64; 4]) -> [f64; 4] {
    let n = q.iter().map(|v| v * v).sum::<f64>().sqrt();
    q.map(|v| v / n)
}

/// Rotation matrix of a (w, x, y, z) quaternion.
fn rot(q: [f64; 4]) -> [[f64; 3]; 3] {
    let [w, x, y, z] = normalize(q);
    [
        [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y)],
        [2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x)],
        [2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y)],
    ]
}

fn heading(q: [f64; 4]) -> f64 {
    let r = rot(q);
    r[1][0].atan2(r[0][0])
}

fn wrap(a: f64) -> f64 {
    let mut w = a;
    while w > std::f64::consts::PI {
        w -= std::f64::consts::TAU;
    }
    while w <= -std::f64::consts::PI {
        w += std::f64::consts::TAU;
    }
    w
}

fn l2(v: impl Iterator<Item = f64>) -> f64 {
    v.map(|x| x * x).sum::<f64>().sqrt()
}

/// The twelve unweighted rows in table order.
pub fn reward_rows(s: &RewardOracleInput) -> [f64; 12] {
    let kp: f64 = s
        .keypoints
        .iter()
        .zip(s.ref_keypoints)
        .map(|(a, b)| (0..3).map(|i| (a[i] - b[i]).powi(2)).sum::<f64>())
        .sum();
    // relative rotation conj(a) * b; angle = 2 atan2(|v|, |w|)
    let [aw, ax, ay, az] = normalize(s.root_rot);
    let [bw, bx, by, bz] = normalize(s.ref_root_rot);
    let rw = aw * bw + ax * bx + ay * by + az * bz;
    let rx = aw * bx - ax * bw - ay * bz + az * by;
    let ry = aw * by + ax * bz - ay * bw - az * bx;
    let rz = aw * bz - ax * by + ay * bx - az * bw;
    let angle = 2.0 * (rx * rx + ry * ry + rz * rz).sqrt().atan2(rw.abs());
    let dv = l2((0..3).map(|i| s.root_vel[i] - s.ref_root_vel[i]));
    let masked = |a: &[f64], b: &[f64]| -> f64 {
        (0..a.len()).filter(|i| !s.excluded.contains(i)).map(|i| (a[i] - b[i]).powi(2)).sum()
    };
    let root_yaw = heading(s.root_rot);
    [
        (-0.1 * kp).exp(),
        (-angle).exp(),
        (-dv).exp(),
        (-masked(s.q, s.ref_q)).exp(),
        (-masked(s.qd, s.ref_qd)).exp(),
        if s.terminated { 1.0 } else { 0.0 },
        l2(s.qdd.iter().copied()),
        l2(s.qd.iter().copied()),
        l2(s.action.iter().zip(s.prev_action).map(|(a, b)| a - b)),
        l2(s.torque.iter().copied()),
        // gravity in the foot frame is -R^T e_z, whose xy part is -(R20, R21)
        l2(s.feet_rot.iter().flat_map(|f| {
            let r = rot(*f);
            [-r[2][0], -r[2][1]]
        })),
        l2(s.feet_rot.iter().map(|f| wrap(heading(*f) - root_yaw))),
    ]
}

pub const TABLE_WEIGHTS: [f64; 12] = [3.0, 0.5, 0.75, 32.0, 0.5, -200.0, -2.5e-8, -0.001, -0.5, -1e-6, -62.5, -1e-5];

pub fn quat(q: [f64; 4]) -> UnitQuaternion<f64> {
    UnitQuaternion::from_quaternion(nalgebra::Quaternion::new(q[0], q[1], q[2], q[3]))
}

// ------------------------------------------------------- sit fixture -----

pub const FIXTURE_FRAMES: usize = 200;
pub const FIXTURE_EPS: f64 = 0.02;
pub const FIXTURE_SEAT_TOP: f64 = 0.40;
pub const FIXTURE_SEAT_X: (f64, f64) = (-0.55, -0.05);

pub fn fixture_pelvis(t: usize) -> P2 {
    match t {
        0..=79 => P2::new(0.05, 0.76),
        80..=99 => P2::new(-0.25, 0.60 - 0.005 * (t - 80) as f64),
        _ => P2::new(-0.25, 0.47),
    }
}

fn fixture_q(chain: &PlanarChain, t: usize) -> DVector<f64> {
    let pelvis = fixture_pelvis(t);
    let joints = sitter_pose(pelvis, 0.0).expect("reachable");
    let mut q = DVector::zeros(3 + chain.dof());
    q[0] = pelvis.x;
    q[1] = pelvis.y;
    q.as_mut_slice()[3..].copy_from_slice(&joints);
    q
}

/// Stand, step back over the seat without touching it, then rest on it.
pub fn sit_fixture() -> (PlanarChain, TerrainScene, MotionSequence) {
    let chain = sitter_chain();
    let frames = (0..FIXTURE_FRAMES).map(|t| chain.pose(&fixture_q(&chain, t))).collect();
    let seq = MotionSequence::new(50.0, frames).unwrap();
    (chain, seat_scene(FIXTURE_SEAT_TOP, FIXTURE_SEAT_X), seq)
}

/// 2-D distance from `p` (x, z) to the seat slab or the ground.
fn surface_distance(p: P2) -> f64 {
    let ground = p.y;
    let (x0, x1) = FIXTURE_SEAT_X;
    let (z0, z1) = (FIXTURE_SEAT_TOP - 0.05, FIXTURE_SEAT_TOP);
    let dx = (x0 - p.x).max(p.x - x1);
    let dz = (z0 - p.y).max(p.y - z1);
    let slab = if dx <= 0.0 && dz <= 0.0 { dx.max(dz) } else { P2::new(dx.max(0.0), dz.max(0.0)).norm() };
    ground.min(slab)
}

/// Brute-force labels for the fixture from planar site positions and the
/// planar center of mass: (weightless flag, per-DoF labels) per frame.
///
/// Joint numbering: 0 pelvis, 1 waist, 2 hip, 3 knee, 4 ankle. The pelvis and
/// the foot carry contact sites; the foot alone forms the support.
pub fn fixture_oracle() -> Vec<(bool, Vec<u8>)> {
    let chain = sitter_chain();
    let parents = [None, Some(0), Some(0), Some(2), Some(3)];
    (0..FIXTURE_FRAMES)
        .map(|t| {
            let q = fixture_q(&chain, t);
            let sites = chain.site_positions(&q);
            // base sites 0,1; waist tip 2; hip tip 3; knee tip 4; toe 5; heel 6
            let near = |i: usize| surface_distance(sites[i]) <= FIXTURE_EPS;
            let pelvis_contact = near(0) || near(1);
            let foot: Vec<f64> = [5, 6].into_iter().filter(|&i| near(i)).map(|i| sites[i].x).collect();
            let com = chain.center_of_mass(&q).x;
            let supported = !foot.is_empty()
                && com >= foot.iter().cloned().fold(f64::INFINITY, f64::min)
                && com <= foot.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let weightless = !supported && pelvis_contact;
            let labels = if weightless {
                let active = active_set_closure(&parents, 1, &[0]);
                (1..5).map(|j| u8::from(!active.contains(&j))).collect()
            } else {
                vec![0; 4]
            };
            (weightless, labels)
        })
        .collect()
}
