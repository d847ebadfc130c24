use nalgebra::{DMatrix, DVector, UnitQuaternion, Vector2};
use serde::{Deserialize, Serialize};

use crate::contact_geometry::TerrainScene;
use crate::control::PdGains;
use crate::error::{check_len, Error, Result};
use crate::motion_model::{Joint, KinematicTree, Pose, Vec3};

pub const GRAVITY: f64 = 9.81;
/// Number of floating base coordinates (x, z, pitch).
pub const BASE_DOF: usize = 3;

type V2 = Vector2<f64>;

fn dir(angle: f64) -> V2 {
    V2::new(angle.sin(), angle.cos())
}

/// Rotates a frame-local `(x, z)` offset by `angle` (positive tilts +z toward +x).
fn rotate(angle: f64, local: [f64; 2]) -> V2 {
    let (s, c) = angle.sin_cos();
    V2::new(local[0] * c + local[1] * s, -local[0] * s + local[1] * c)
}

/// Derivative of a world offset under a unit rotation rate.
fn perp(v: V2) -> V2 {
    V2::new(v.y, -v.x)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlanarLink {
    pub name: String,
    /// Parent link; `None` attaches at the base origin.
    pub parent: Option<usize>,
    pub length: f64,
    pub mass: f64,
    /// Direction of the link inside its joint frame (0 = +z, π/2 = +x).
    pub rest_angle: f64,
    /// Extra contact sites in the joint frame, besides the distal end.
    #[serde(default)]
    pub extra_sites: Vec<[f64; 2]>,
    #[serde(default = "infinite")]
    pub torque_limit: f64,
    /// Passive viscous joint damping, N·m·s/rad.
    #[serde(default)]
    pub damping: f64,
}

fn infinite() -> f64 {
    f64::INFINITY
}

impl PlanarLink {
    pub fn distal_local(&self) -> [f64; 2] {
        let d = dir(self.rest_angle) * self.length;
        [d.x, d.y]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContactParams {
    pub stiffness: f64,
    pub damping: f64,
    pub friction: f64,
    /// Spring pulling a sticking site back to where it first touched.
    pub tangential_stiffness: f64,
    /// Viscous tangential coefficient below the Coulomb bound.
    pub tangential_damping: f64,
}

impl Default for ContactParams {
    fn default() -> Self {
        Self { stiffness: 2e4, damping: 200.0, friction: 1.0, tangential_stiffness: 2e4, tangential_damping: 500.0 }
    }
}

/// Floating-base planar tree in the x-z plane.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlanarChain {
    pub name: String,
    pub base_mass: f64,
    pub base_inertia: f64,
    /// Base contact sites in the base frame.
    pub base_sites: Vec<[f64; 2]>,
    pub links: Vec<PlanarLink>,
    pub gains: PdGains,
    pub contact: ContactParams,
    /// Link driven by the waist joint.
    pub waist_link: usize,
    pub foot_links: Vec<usize>,
    /// Links whose sites count as labeling contact candidates (the base always does).
    pub contact_links: Vec<usize>,
    /// Pins the base in place (base accelerations forced to zero).
    #[serde(default)]
    pub fixed_base: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ContactBody {
    Ground,
    Box(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContactReport {
    /// Index into [`PlanarChain::contact_sites`].
    pub site: usize,
    pub body: ContactBody,
    pub normal_force: f64,
    pub penetration: f64,
    /// Stick point of the tangential spring; slides when friction saturates.
    pub anchor: [f64; 2],
}

/// Generalized state `[x, z, pitch, q_1..q_N]` and its rate.
#[derive(Clone, Debug, PartialEq)]
pub struct SimState {
    pub time: f64,
    pub q: DVector<f64>,
    pub v: DVector<f64>,
    pub contacts: Vec<ContactReport>,
}

impl SimState {
    pub fn new(base: [f64; 3], joints: &[f64]) -> Self {
        let mut q = DVector::zeros(BASE_DOF + joints.len());
        q.as_mut_slice()[..3].copy_from_slice(&base);
        q.as_mut_slice()[3..].copy_from_slice(joints);
        let v = DVector::zeros(q.len());
        Self { time: 0.0, q, v, contacts: Vec::new() }
    }

    pub fn joint_q(&self) -> &[f64] {
        &self.q.as_slice()[BASE_DOF..]
    }

    pub fn joint_v(&self) -> &[f64] {
        &self.v.as_slice()[BASE_DOF..]
    }

    pub fn base(&self) -> [f64; 3] {
        [self.q[0], self.q[1], self.q[2]]
    }

    pub fn is_finite(&self) -> bool {
        self.q.iter().chain(self.v.iter()).all(|x| x.is_finite())
    }
}

/// Owner frame of a point: the base (`None`) or a link.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SitePoint {
    pub owner: Option<usize>,
    pub local: [f64; 2],
}

struct Frames {
    angle: Vec<f64>,
    rate: Vec<f64>,
    origin: Vec<V2>,
}

impl PlanarChain {
    pub fn dof(&self) -> usize {
        self.links.len()
    }

    pub fn total_mass(&self) -> f64 {
        self.base_mass + self.links.iter().map(|l| l.mass).sum::<f64>()
    }

    pub fn torque_limits(&self) -> Vec<f64> {
        self.links.iter().map(|l| l.torque_limit).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.links.is_empty() {
            return bad("planar chain needs at least one link".into());
        }
        if !(self.base_mass > 0.0 && self.base_inertia > 0.0) {
            return bad("base mass and inertia must be positive".into());
        }
        for (i, l) in self.links.iter().enumerate() {
            if !(l.length > 0.0 && l.mass > 0.0) {
                return bad(format!("link {i} needs positive length and mass"));
            }
            if l.parent.is_some_and(|p| p >= i) {
                return bad(format!("link {i} must come after its parent"));
            }
            if !(l.damping >= 0.0 && l.torque_limit > 0.0) {
                return bad(format!("link {i} has negative damping or non-positive torque limit"));
            }
        }
        check_len("planar gains", self.dof(), self.gains.dof())?;
        let n = self.dof();
        if self.waist_link >= n || self.foot_links.iter().chain(&self.contact_links).any(|&l| l >= n) {
            return bad("waist/foot/contact link index out of range".into());
        }
        Ok(())
    }

    fn ancestors_or_self(&self, link: usize) -> impl Iterator<Item = usize> + '_ {
        std::iter::successors(Some(link), move |&l| self.links[l].parent)
    }

    /// Every contact site: base sites first, then per link its distal end and extras.
    pub fn contact_sites(&self) -> Vec<SitePoint> {
        let mut out: Vec<SitePoint> = self.base_sites.iter().map(|&local| SitePoint { owner: None, local }).collect();
        for (i, l) in self.links.iter().enumerate() {
            out.push(SitePoint { owner: Some(i), local: l.distal_local() });
            out.extend(l.extra_sites.iter().map(|&local| SitePoint { owner: Some(i), local }));
        }
        out
    }

    fn frames(&self, q: &DVector<f64>, v: &DVector<f64>) -> Frames {
        let n = self.dof();
        let mut angle = vec![0.0; n + 1];
        let mut rate = vec![0.0; n + 1];
        let mut origin = vec![V2::zeros(); n + 1];
        angle[0] = q[2];
        rate[0] = v[2];
        origin[0] = V2::new(q[0], q[1]);
        for (i, l) in self.links.iter().enumerate() {
            let p = l.parent.map_or(0, |p| p + 1);
            angle[i + 1] = angle[p] + q[BASE_DOF + i];
            rate[i + 1] = rate[p] + v[BASE_DOF + i];
            origin[i + 1] = match l.parent {
                None => origin[0],
                Some(pl) => origin[p] + rotate(angle[p], self.links[pl].distal_local()),
            };
        }
        Frames { angle, rate, origin }
    }

    fn point_world(&self, f: &Frames, s: &SitePoint) -> V2 {
        let k = s.owner.map_or(0, |l| l + 1);
        f.origin[k] + rotate(f.angle[k], s.local)
    }

    /// World position, 2×n Jacobian and velocity-product acceleration of a point.
    fn point_terms(&self, f: &Frames, s: &SitePoint) -> (V2, DMatrix<f64>, V2) {
        let n = BASE_DOF + self.dof();
        let p = self.point_world(f, s);
        let mut j = DMatrix::zeros(2, n);
        j[(0, 0)] = 1.0;
        j[(1, 1)] = 1.0;
        let base_arm = perp(p - f.origin[0]);
        j[(0, 2)] = base_arm.x;
        j[(1, 2)] = base_arm.y;
        let mut bias = V2::zeros();
        let mut tip = p;
        let mut frame = s.owner;
        loop {
            let k = frame.map_or(0, |l| l + 1);
            let seg = tip - f.origin[k];
            bias -= f.rate[k] * f.rate[k] * seg;
            tip = f.origin[k];
            match frame {
                Some(l) => {
                    let arm = perp(p - f.origin[k]);
                    j[(0, BASE_DOF + l)] = arm.x;
                    j[(1, BASE_DOF + l)] = arm.y;
                    frame = self.links[l].parent;
                }
                None => break,
            }
        }
        (p, j, bias)
    }

    pub fn site_positions(&self, q: &DVector<f64>) -> Vec<V2> {
        let f = self.frames(q, &DVector::zeros(q.len()));
        self.contact_sites().iter().map(|s| self.point_world(&f, s)).collect()
    }

    pub fn center_of_mass(&self, q: &DVector<f64>) -> V2 {
        let f = self.frames(q, &DVector::zeros(q.len()));
        let mut c = f.origin[0] * self.base_mass;
        for (i, l) in self.links.iter().enumerate() {
            let d = l.distal_local();
            c += l.mass * self.point_world(&f, &SitePoint { owner: Some(i), local: [d[0] / 2.0, d[1] / 2.0] });
        }
        c / self.total_mass()
    }

    fn mass_matrix_and_forces(&self, q: &DVector<f64>, v: &DVector<f64>) -> (DMatrix<f64>, DVector<f64>) {
        let n = BASE_DOF + self.dof();
        let f = self.frames(q, v);
        let mut m = DMatrix::zeros(n, n);
        let mut h = DVector::zeros(n);
        m[(0, 0)] += self.base_mass;
        m[(1, 1)] += self.base_mass;
        m[(2, 2)] += self.base_inertia;
        h[1] -= self.base_mass * GRAVITY;
        for (i, l) in self.links.iter().enumerate() {
            let d = l.distal_local();
            let mid = SitePoint { owner: Some(i), local: [d[0] / 2.0, d[1] / 2.0] };
            let (_, j, bias) = self.point_terms(&f, &mid);
            m += l.mass * j.transpose() * &j;
            let force = l.mass * (V2::new(0.0, -GRAVITY) - bias);
            h += j.transpose() * force;
            let inertia = l.mass * l.length * l.length / 12.0;
            let mut jw = DVector::zeros(n);
            jw[2] = 1.0;
            for a in self.ancestors_or_self(i) {
                jw[BASE_DOF + a] = 1.0;
            }
            m += inertia * &jw * jw.transpose();
        }
        (m, h)
    }

    fn contact_forces(
        &self,
        q: &DVector<f64>,
        v: &DVector<f64>,
        scene: &TerrainScene,
        previous: &[ContactReport],
    ) -> (DVector<f64>, Vec<ContactReport>) {
        let n = BASE_DOF + self.dof();
        let f = self.frames(q, v);
        let mut h = DVector::zeros(n);
        let mut reports = Vec::new();
        let c = &self.contact;
        for (idx, site) in self.contact_sites().iter().enumerate() {
            let p = self.point_world(&f, site);
            let (dist, normal, body) = closest_surface(scene, p);
            if dist >= 0.0 {
                continue;
            }
            let (_, j, _) = self.point_terms(&f, site);
            let vel = &j * v;
            let vel = V2::new(vel[0], vel[1]);
            let pen = -dist;
            let fn_ = (c.stiffness * pen - c.damping * vel.dot(&normal)).max(0.0);
            let tangent = perp(normal);
            let bound = c.friction * fn_;
            let anchor = previous
                .iter()
                .find(|r| r.site == idx && r.body == body)
                .map_or(p, |r| V2::new(r.anchor[0], r.anchor[1]));
            let stretch = (p - anchor).dot(&tangent);
            let trial = -c.tangential_stiffness * stretch - c.tangential_damping * vel.dot(&tangent);
            let ft = trial.clamp(-bound, bound);
            let anchor = if ft == trial || c.tangential_stiffness <= 0.0 {
                anchor
            } else {
                p + tangent * (ft / c.tangential_stiffness)
            };
            let force = fn_ * normal + ft * tangent;
            h += j.transpose() * force;
            reports.push(ContactReport {
                site: idx,
                body,
                normal_force: fn_,
                penetration: pen,
                anchor: [anchor.x, anchor.y],
            });
        }
        (h, reports)
    }

    /// Kinetic + gravitational + contact-spring energy.
    pub fn mechanical_energy(&self, state: &SimState, scene: &TerrainScene) -> f64 {
        let (m, _) = self.mass_matrix_and_forces(&state.q, &DVector::zeros(state.v.len()));
        let ke = 0.5 * state.v.dot(&(&m * &state.v));
        let f = self.frames(&state.q, &state.v);
        let mut pe = self.base_mass * GRAVITY * state.q[1];
        for (i, l) in self.links.iter().enumerate() {
            let d = l.distal_local();
            let mid = self.point_world(&f, &SitePoint { owner: Some(i), local: [d[0] / 2.0, d[1] / 2.0] });
            pe += l.mass * GRAVITY * mid.y;
        }
        for p in self.site_positions(&state.q) {
            let (dist, _, _) = closest_surface(scene, p);
            if dist < 0.0 {
                pe += 0.5 * self.contact.stiffness * dist * dist;
            }
        }
        ke + pe
    }

    /// Labeling tree with the base as root (joint 0) and link `i` as joint `i + 1`,
    /// all joints rotating about +y.
    pub fn to_kinematic_tree(&self) -> Result<KinematicTree> {
        let site3 = |s: &[f64; 2]| Vec3::new(s[0], 0.0, s[1]);
        let mut joints = vec![Joint {
            name: "base".into(),
            parent: None,
            local_offset: Vec3::zeros(),
            axis: Vec3::y_axis(),
            mass: self.base_mass,
            com_local: Vec3::zeros(),
            torque_limit: f64::INFINITY,
            sites: self.base_sites.iter().map(site3).collect(),
        }];
        for l in &self.links {
            let offset = l.parent.map_or(Vec3::zeros(), |p| site3(&self.links[p].distal_local()));
            let tip = site3(&l.distal_local());
            let mut sites = vec![tip];
            sites.extend(l.extra_sites.iter().map(site3));
            joints.push(Joint {
                name: l.name.clone(),
                parent: Some(l.parent.map_or(0, |p| p + 1)),
                local_offset: offset,
                axis: Vec3::y_axis(),
                mass: l.mass,
                com_local: tip / 2.0,
                torque_limit: l.torque_limit,
                sites,
            });
        }
        let mut contacts = vec![0];
        contacts.extend(self.contact_links.iter().map(|l| l + 1));
        contacts.sort_unstable();
        contacts.dedup();
        KinematicTree::new(
            self.name.clone(),
            joints,
            self.waist_link + 1,
            self.foot_links.iter().map(|l| l + 1).collect(),
            contacts,
        )
    }

    /// 3-D pose of a generalized position (base pitch about +y).
    pub fn pose(&self, q: &DVector<f64>) -> Pose {
        let rot = UnitQuaternion::from_axis_angle(&Vec3::y_axis(), q[2]);
        Pose::new(Vec3::new(q[0], 0.0, q[1]), rot, q.as_slice()[BASE_DOF..].to_vec())
    }

    /// Inverse of [`pose`](Self::pose) for planar poses.
    pub fn generalized(&self, pose: &Pose) -> Result<DVector<f64>> {
        check_len("pose dof", self.dof(), pose.q.len())?;
        let up = pose.root_orientation.transform_vector(&Vec3::z());
        let pitch = up.x.atan2(up.z);
        let mut q = DVector::zeros(BASE_DOF + self.dof());
        q[0] = pose.root_position.x;
        q[1] = pose.root_position.z;
        q[2] = pitch;
        q.as_mut_slice()[BASE_DOF..].copy_from_slice(&pose.q);
        Ok(q)
    }
}

/// Signed distance, outward normal in the x-z plane and the surface it belongs to.
fn closest_surface(scene: &TerrainScene, p: V2) -> (f64, V2, ContactBody) {
    let mut best = (p.y - scene.ground_height, V2::new(0.0, 1.0), ContactBody::Ground);
    let p3 = Vec3::new(p.x, 0.0, p.y);
    for (i, b) in scene.boxes.iter().enumerate() {
        let (d, n) = b.distance_and_normal(&p3);
        if d < best.0 {
            let n2 = V2::new(n.x, n.z);
            let n2 = if n2.norm() > 1e-12 { n2.normalize() } else { V2::new(0.0, 1.0) };
            best = (d, n2, ContactBody::Box(i));
        }
    }
    best
}

/// One semi-implicit Euler step: velocities first, then positions.
pub fn step(chain: &PlanarChain, state: &SimState, torques: &[f64], scene: &TerrainScene, dt: f64) -> Result<SimState> {
    if !(dt > 0.0 && dt <= 0.01) {
        return Err(Error::InvalidArgument(format!("dt = {dt} outside (0, 0.01]")));
    }
    check_len("torques", chain.dof(), torques.len())?;
    if torques.iter().any(|t| !t.is_finite()) {
        return Err(Error::InvalidArgument("non-finite torque".into()));
    }
    check_len("generalized state", BASE_DOF + chain.dof(), state.q.len())?;
    let (m, mut h) = chain.mass_matrix_and_forces(&state.q, &state.v);
    let (hc, contacts) = chain.contact_forces(&state.q, &state.v, scene, &state.contacts);
    h += hc;
    for (i, l) in chain.links.iter().enumerate() {
        h[BASE_DOF + i] += torques[i] - l.damping * state.v[BASE_DOF + i];
    }
    let time = state.time + dt;
    let acc = if chain.fixed_base {
        let n = chain.dof();
        let mj = m.view((BASE_DOF, BASE_DOF), (n, n)).into_owned();
        let hj = h.rows(BASE_DOF, n).into_owned();
        let aj = mj.cholesky().ok_or(Error::Diverged { time })?.solve(&hj);
        let mut acc = DVector::zeros(BASE_DOF + n);
        acc.rows_mut(BASE_DOF, n).copy_from(&aj);
        acc
    } else {
        m.cholesky().ok_or(Error::Diverged { time })?.solve(&h)
    };
    let v = &state.v + acc * dt;
    let q = &state.q + &v * dt;
    let next = SimState { time, q, v, contacts };
    if !next.is_finite() {
        return Err(Error::Diverged { time });
    }
    Ok(next)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pendulum(damping: f64) -> PlanarChain {
        PlanarChain {
            name: "pendulum".into(),
            base_mass: 1.0,
            base_inertia: 0.1,
            base_sites: vec![],
            links: vec![PlanarLink {
                name: "rod".into(),
                parent: None,
                length: 0.5,
                mass: 1.0,
                rest_angle: std::f64::consts::PI,
                extra_sites: vec![],
                torque_limit: 10.0,
                damping,
            }],
            gains: PdGains::uniform(1, 0.0, 0.0).unwrap(),
            contact: ContactParams::default(),
            waist_link: 0,
            foot_links: vec![],
            contact_links: vec![],
            fixed_base: false,
        }
    }

    #[test]
    fn damped_pendulum_hangs_down() {
        let mut c = pendulum(0.5);
        c.fixed_base = true;
        let scene = TerrainScene::flat(-100.0);
        let mut s = SimState::new([0.0, 1.0, 0.0], &[1.2]);
        for _ in 0..20000 {
            s = step(&c, &s, &[0.0], &scene, 1e-3).unwrap();
        }
        assert!(s.joint_q()[0].abs() < 1e-3, "{}", s.joint_q()[0]);
        assert_eq!(s.base(), [0.0, 1.0, 0.0]);
    }

    #[test]
    fn free_fall_velocity() {
        let c = pendulum(0.0);
        let scene = TerrainScene::flat(-100.0);
        let mut s = SimState::new([0.0, 10.0, 0.0], &[0.0]);
        for _ in 0..1000 {
            s = step(&c, &s, &[0.0], &scene, 1e-3).unwrap();
        }
        assert!((s.v[1] + 9.81).abs() < 1e-6, "{}", s.v[1]);
        assert!(s.v[0].abs() < 1e-12 && s.v[3].abs() < 1e-12);
    }

    #[test]
    fn jacobian_matches_finite_difference() {
        let mut c = pendulum(0.0);
        c.links.push(PlanarLink { parent: Some(0), rest_angle: 1.0, ..c.links[0].clone() });
        c.gains = PdGains::uniform(2, 0.0, 0.0).unwrap();
        let q = DVector::from_vec(vec![0.3, 1.1, 0.4, -0.7, 1.3]);
        let site = SitePoint { owner: Some(1), local: [0.1, 0.2] };
        let f = c.frames(&q, &DVector::zeros(5));
        let (p, j, _) = c.point_terms(&f, &site);
        for k in 0..5 {
            let mut qp = q.clone();
            qp[k] += 1e-7;
            let fp = c.frames(&qp, &DVector::zeros(5));
            let d = (c.point_world(&fp, &site) - p) / 1e-7;
            assert!((d.x - j[(0, k)]).abs() < 1e-6 && (d.y - j[(1, k)]).abs() < 1e-6);
        }
    }

    #[test]
    fn tree_matches_planar_kinematics() {
        let mut c = pendulum(0.0);
        c.links.push(PlanarLink { parent: Some(0), rest_angle: 2.0, extra_sites: vec![[0.05, -0.02]], ..c.links[0].clone() });
        c.gains = PdGains::uniform(2, 0.0, 0.0).unwrap();
        let tree = c.to_kinematic_tree().unwrap();
        let q = DVector::from_vec(vec![0.2, 0.9, -0.3, 0.8, -1.1]);
        let fk = crate::motion_model::forward_kinematics(&tree, &c.pose(&q)).unwrap();
        let planar = c.site_positions(&q);
        let mut from_tree = Vec::new();
        for j in 1..tree.len() {
            from_tree.extend(fk.sites(&tree, j));
        }
        for (a, b) in planar.iter().zip(&from_tree) {
            assert!((a.x - b.x).abs() < 1e-12 && (a.y - b.z).abs() < 1e-12 && b.y.abs() < 1e-12);
        }
        let com = crate::motion_model::center_of_mass(&tree, &fk).unwrap();
        let pc = c.center_of_mass(&q);
        assert!((com.x - pc.x).abs() < 1e-12 && (com.z - pc.y).abs() < 1e-12);
    }

    #[test]
    fn invalid_dt_rejected() {
        let c = pendulum(0.0);
        let s = SimState::new([0.0; 3], &[0.0]);
        assert!(step(&c, &s, &[0.0], &TerrainScene::flat(-1.0), 0.02).is_err());
        assert!(step(&c, &s, &[f64::NAN], &TerrainScene::flat(-1.0), 1e-3).is_err());
    }
}
