//! Kinematic trees, forward kinematics, center of mass and its ground projection.
//!
//! A tree is an ordered list of joints in topological order: entry 0 is the
//! floating root and every other entry is a single-axis revolute joint whose
//! angle is one component of the pose vector `q` (joint `j` ↔ `q[j - 1]`).

use std::collections::BTreeSet;
use std::path::Path;

use nalgebra::{Isometry3, Translation3, Unit, UnitQuaternion, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};

pub type Vec3 = Vector3<f64>;

pub const TREE_FORMAT_VERSION: u32 = 1;

const EXAMPLE_G1: &str = include_str!("../assets/g1_23dof.json");

#[derive(Clone, Debug, PartialEq)]
pub struct Joint {
    pub name: String,
    pub parent: Option<usize>,
    /// Joint origin in the parent joint frame.
    pub local_offset: Vec3,
    pub axis: Unit<Vec3>,
    /// Mass of the link moved by this joint.
    pub mass: f64,
    /// Link center of mass in this joint's frame.
    pub com_local: Vec3,
    /// Symmetric motor torque limit in N·m (infinite when the file gives none).
    pub torque_limit: f64,
    /// Contact sites in this joint's frame. Empty means the joint origin.
    pub sites: Vec<Vec3>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct KinematicTree {
    name: String,
    joints: Vec<Joint>,
    waist: usize,
    feet: Vec<usize>,
    contact_points: Vec<usize>,
    children: Vec<Vec<usize>>,
}

impl KinematicTree {
    pub fn new(
        name: impl Into<String>,
        joints: Vec<Joint>,
        waist: usize,
        feet: Vec<usize>,
        contact_points: Vec<usize>,
    ) -> Result<Self> {
        if joints.is_empty() {
            return Err(Error::InvalidTree("no joints".into()));
        }
        for (i, j) in joints.iter().enumerate() {
            match (i, j.parent) {
                (0, None) => {}
                (0, Some(_)) => {
                    return Err(Error::InvalidTree("entry 0 must be the root".into()));
                }
                (_, None) => {
                    return Err(Error::InvalidTree(format!(
                        "joint {i} (`{}`) has no parent; only entry 0 may be the root",
                        j.name
                    )));
                }
                (_, Some(p)) if p >= i => {
                    return Err(Error::InvalidTree(format!(
                        "joint {i} (`{}`) has parent {p}, which is not an earlier entry",
                        j.name
                    )));
                }
                _ => {}
            }
            if !(j.mass >= 0.0) || !j.mass.is_finite() {
                return Err(Error::InvalidTree(format!(
                    "joint `{}` has invalid mass {}",
                    j.name, j.mass
                )));
            }
            if !(j.torque_limit > 0.0) {
                return Err(Error::InvalidTree(format!(
                    "joint `{}` has non-positive torque limit",
                    j.name
                )));
            }
        }
        if !joints.iter().any(|j| j.mass > 0.0) {
            return Err(Error::InvalidTree("all masses are zero".into()));
        }
        let n = joints.len();
        let check = |what: &str, idx: usize| {
            if idx < n {
                Ok(())
            } else {
                Err(Error::InvalidTree(format!("{what} index {idx} out of range")))
            }
        };
        check("waist", waist)?;
        for &f in &feet {
            check("foot", f)?;
        }
        for &c in &contact_points {
            check("contact point", c)?;
        }
        let mut children = vec![Vec::new(); n];
        for (i, j) in joints.iter().enumerate().skip(1) {
            children[j.parent.unwrap()].push(i);
        }
        Ok(Self {
            name: name.into(),
            joints,
            waist,
            feet,
            contact_points,
            children,
        })
    }

    /// The shipped 23-DoF humanoid description.
    pub fn example_g1() -> Self {
        TreeFile::from_json(EXAMPLE_G1)
            .and_then(TreeFile::into_tree)
            .expect("bundled tree is valid")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        crate::io::read_json::<TreeFile>(path.as_ref())?.into_tree()
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn joints(&self) -> &[Joint] {
        &self.joints
    }

    pub fn joint(&self, index: usize) -> &Joint {
        &self.joints[index]
    }

    pub fn len(&self) -> usize {
        self.joints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.joints.is_empty()
    }

    /// Number of actuated joints, K.
    pub fn dof(&self) -> usize {
        self.joints.len() - 1
    }

    pub fn waist(&self) -> usize {
        self.waist
    }

    pub fn feet(&self) -> &[usize] {
        &self.feet
    }

    pub fn contact_points(&self) -> &[usize] {
        &self.contact_points
    }

    pub fn children(&self, index: usize) -> &[usize] {
        &self.children[index]
    }

    pub fn parent(&self, index: usize) -> Option<usize> {
        self.joints[index].parent
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.joints.iter().position(|j| j.name == name)
    }

    /// Position in `q` of the given joint, `None` for the root.
    pub fn dof_index(&self, joint: usize) -> Option<usize> {
        joint.checked_sub(1)
    }

    pub fn total_mass(&self) -> f64 {
        self.joints.iter().map(|j| j.mass).sum()
    }

    pub fn torque_limits(&self) -> Vec<f64> {
        self.joints[1..].iter().map(|j| j.torque_limit).collect()
    }

    /// The waist joint and every joint between it and the root.
    pub fn waist_chain(&self) -> BTreeSet<usize> {
        let mut out = BTreeSet::new();
        let mut cur = Some(self.waist);
        while let Some(j) = cur {
            out.insert(j);
            cur = self.joints[j].parent;
        }
        out
    }

    /// `q` indices of joints that belong to the feet.
    pub fn feet_dofs(&self) -> Vec<usize> {
        self.feet.iter().filter_map(|&f| self.dof_index(f)).collect()
    }

    /// Copy with every link mass multiplied by the matching scale.
    pub fn with_mass_scales(&self, scales: &[f64]) -> Result<Self> {
        check_len("mass scales", self.joints.len(), scales.len())?;
        let mut out = self.clone();
        for (j, s) in out.joints.iter_mut().zip(scales) {
            j.mass *= s;
        }
        Ok(out)
    }

    pub fn to_file(&self) -> TreeFile {
        TreeFile {
            format_version: TREE_FORMAT_VERSION,
            name: self.name.clone(),
            joints: self
                .joints
                .iter()
                .map(|j| JointFile {
                    name: j.name.clone(),
                    parent_index: j.parent,
                    local_offset: j.local_offset.into(),
                    axis: (*j.axis).into(),
                    mass: j.mass,
                    com_local: Some(j.com_local.into()),
                    torque_limit: j.torque_limit.is_finite().then_some(j.torque_limit),
                    sites: j.sites.iter().map(|s| (*s).into()).collect(),
                })
                .collect(),
            waist_index: self.waist,
            feet_indices: self.feet.clone(),
            contact_point_indices: self.contact_points.clone(),
        }
    }
}

/// On-disk form of a [`KinematicTree`].
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TreeFile {
    pub format_version: u32,
    #[serde(default)]
    pub name: String,
    pub joints: Vec<JointFile>,
    pub waist_index: usize,
    pub feet_indices: Vec<usize>,
    pub contact_point_indices: Vec<usize>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct JointFile {
    pub name: String,
    pub parent_index: Option<usize>,
    #[serde(default)]
    pub local_offset: [f64; 3],
    #[serde(default = "default_axis")]
    pub axis: [f64; 3],
    pub mass: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub com_local: Option<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub torque_limit: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub sites: Vec<[f64; 3]>,
}

fn default_axis() -> [f64; 3] {
    [0.0, 0.0, 1.0]
}

impl TreeFile {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn into_tree(self) -> Result<KinematicTree> {
        if self.format_version == 0 || self.format_version > TREE_FORMAT_VERSION {
            return Err(Error::UnknownVersion {
                what: "kinematic tree",
                found: self.format_version,
                supported: TREE_FORMAT_VERSION,
            });
        }
        let mut joints = Vec::with_capacity(self.joints.len());
        for jf in &self.joints {
            let axis = Vec3::from(jf.axis);
            let norm = axis.norm();
            if jf.parent_index.is_some() && !(norm > 1e-12) {
                return Err(Error::InvalidTree(format!("joint `{}` has a zero axis", jf.name)));
            }
            joints.push(Joint {
                name: jf.name.clone(),
                parent: jf.parent_index,
                local_offset: jf.local_offset.into(),
                axis: Unit::new_normalize(if norm > 1e-12 { axis } else { Vec3::z() }),
                mass: jf.mass,
                com_local: Vec3::zeros(),
                torque_limit: jf.torque_limit.unwrap_or(f64::INFINITY),
                sites: jf.sites.iter().map(|&s| s.into()).collect(),
            });
        }
        // Absent link CoM: midpoint of the offset to the first child.
        for (i, jf) in self.joints.iter().enumerate() {
            joints[i].com_local = match jf.com_local {
                Some(c) => c.into(),
                None => self
                    .joints
                    .iter()
                    .find(|c| c.parent_index == Some(i))
                    .map(|c| Vec3::from(c.local_offset) * 0.5)
                    .unwrap_or_else(Vec3::zeros),
            };
        }
        KinematicTree::new(
            self.name,
            joints,
            self.waist_index,
            self.feet_indices,
            self.contact_point_indices,
        )
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Pose {
    pub root_position: Vec3,
    pub root_orientation: UnitQuaternion<f64>,
    pub q: Vec<f64>,
}

impl Pose {
    pub fn new(root_position: Vec3, root_orientation: UnitQuaternion<f64>, q: Vec<f64>) -> Self {
        Self {
            root_position,
            root_orientation,
            q,
        }
    }

    /// Identity root at the origin with all joints at zero.
    pub fn zero(dof: usize) -> Self {
        Self::new(Vec3::zeros(), UnitQuaternion::identity(), vec![0.0; dof])
    }

    /// Builds a pose from a raw `[w, x, y, z]` quaternion, which must already be unit length.
    pub fn from_raw(root_position: [f64; 3], wxyz: [f64; 4], q: Vec<f64>) -> Result<Self> {
        let quat = nalgebra::Quaternion::new(wxyz[0], wxyz[1], wxyz[2], wxyz[3]);
        let norm = quat.norm();
        if !((norm - 1.0).abs() <= 1e-9) {
            return Err(Error::InvalidArgument(format!(
                "root orientation norm {norm} is not 1"
            )));
        }
        Ok(Self::new(
            root_position.into(),
            UnitQuaternion::new_unchecked(quat),
            q,
        ))
    }

    pub fn root_isometry(&self) -> Isometry3<f64> {
        Isometry3::from_parts(Translation3::from(self.root_position), self.root_orientation)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FkResult {
    pub world_positions: Vec<Vec3>,
    pub world_orientations: Vec<UnitQuaternion<f64>>,
}

impl FkResult {
    pub fn frame(&self, joint: usize) -> Isometry3<f64> {
        Isometry3::from_parts(
            Translation3::from(self.world_positions[joint]),
            self.world_orientations[joint],
        )
    }

    /// World position of a point given in a joint frame.
    pub fn point(&self, joint: usize, local: &Vec3) -> Vec3 {
        self.world_positions[joint] + self.world_orientations[joint] * local
    }

    /// World contact sites of a joint (the origin when it has none).
    pub fn sites(&self, tree: &KinematicTree, joint: usize) -> Vec<Vec3> {
        let sites = &tree.joint(joint).sites;
        if sites.is_empty() {
            vec![self.world_positions[joint]]
        } else {
            sites.iter().map(|s| self.point(joint, s)).collect()
        }
    }
}

pub fn forward_kinematics(tree: &KinematicTree, pose: &Pose) -> Result<FkResult> {
    check_len("pose q", tree.dof(), pose.q.len())?;
    let n = tree.len();
    let mut positions = Vec::with_capacity(n);
    let mut orientations = Vec::with_capacity(n);
    positions.push(pose.root_position);
    orientations.push(pose.root_orientation);
    for (i, joint) in tree.joints().iter().enumerate().skip(1) {
        let p = joint.parent.expect("non-root joint has a parent");
        let parent_rot = orientations[p];
        let pos = positions[p] + parent_rot * joint.local_offset;
        let rot = parent_rot * UnitQuaternion::from_axis_angle(&joint.axis, pose.q[i - 1]);
        positions.push(pos);
        orientations.push(rot);
    }
    Ok(FkResult {
        world_positions: positions,
        world_orientations: orientations,
    })
}

pub fn center_of_mass(tree: &KinematicTree, fk: &FkResult) -> Result<Vec3> {
    check_len("fk result", tree.len(), fk.world_positions.len())?;
    let mut total = 0.0;
    let mut acc = Vec3::zeros();
    for (i, joint) in tree.joints().iter().enumerate() {
        if joint.mass == 0.0 {
            continue;
        }
        acc += fk.point(i, &joint.com_local) * joint.mass;
        total += joint.mass;
    }
    if total <= 0.0 {
        return Err(Error::ZeroMass);
    }
    Ok(acc / total)
}

/// Ground projection of a point under gravity along -z.
pub fn gravity_projection(com: &Vec3) -> Vector2<f64> {
    Vector2::new(com.x, com.y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    fn joint(name: &str, parent: Option<usize>, offset: [f64; 3], axis: Vec3, mass: f64) -> Joint {
        Joint {
            name: name.into(),
            parent,
            local_offset: offset.into(),
            axis: Unit::new_normalize(axis),
            mass,
            com_local: Vec3::zeros(),
            torque_limit: f64::INFINITY,
            sites: Vec::new(),
        }
    }

    #[test]
    fn zero_angle_chain_composes_offsets() {
        let tree = KinematicTree::new(
            "chain",
            vec![
                joint("root", None, [0.0; 3], Vec3::z(), 1.0),
                joint("a", Some(0), [0.0, 0.0, 0.1], Vec3::y(), 1.0),
                joint("b", Some(1), [0.0, 0.0, 0.1], Vec3::y(), 1.0),
            ],
            0,
            vec![],
            vec![],
        )
        .unwrap();
        let fk = forward_kinematics(&tree, &Pose::zero(2)).unwrap();
        assert!((fk.world_positions[2] - Vec3::new(0.0, 0.0, 0.2)).norm() < 1e-15);
    }

    #[test]
    fn quarter_turn_about_y() {
        let tree = KinematicTree::new(
            "hinge",
            vec![
                joint("root", None, [0.0; 3], Vec3::z(), 1.0),
                joint("hinge", Some(0), [0.0; 3], Vec3::y(), 1.0),
                joint("child", Some(1), [0.1, 0.0, 0.0], Vec3::y(), 1.0),
            ],
            0,
            vec![],
            vec![],
        )
        .unwrap();
        let pose = Pose::new(Vec3::zeros(), UnitQuaternion::identity(), vec![FRAC_PI_2, 0.0]);
        let fk = forward_kinematics(&tree, &pose).unwrap();
        assert!((fk.world_positions[2] - Vec3::new(0.0, 0.0, -0.1)).norm() < 1e-12);
    }

    #[test]
    fn weighted_com() {
        let mut a = joint("root", None, [0.0; 3], Vec3::z(), 1.0);
        let mut b = joint("b", Some(0), [0.0, 0.0, 1.0], Vec3::y(), 3.0);
        a.com_local = Vec3::zeros();
        b.com_local = Vec3::zeros();
        let tree = KinematicTree::new("t", vec![a, b], 0, vec![], vec![]).unwrap();
        let fk = forward_kinematics(&tree, &Pose::zero(1)).unwrap();
        let com = center_of_mass(&tree, &fk).unwrap();
        assert!((com - Vec3::new(0.0, 0.0, 0.75)).norm() < 1e-15);
    }

    #[test]
    fn projection_drops_height() {
        assert_eq!(gravity_projection(&Vec3::new(1.0, 2.0, 3.0)), Vector2::new(1.0, 2.0));
        assert_eq!(gravity_projection(&Vec3::zeros()), Vector2::zeros());
    }

    #[test]
    fn rejects_bad_trees() {
        let r = KinematicTree::new(
            "bad",
            vec![
                joint("root", None, [0.0; 3], Vec3::z(), 1.0),
                joint("a", Some(2), [0.0; 3], Vec3::y(), 1.0),
                joint("b", Some(0), [0.0; 3], Vec3::y(), 1.0),
            ],
            0,
            vec![],
            vec![],
        );
        assert!(matches!(r, Err(Error::InvalidTree(_))));
        let r = KinematicTree::new(
            "massless",
            vec![joint("root", None, [0.0; 3], Vec3::z(), 0.0)],
            0,
            vec![],
            vec![],
        );
        assert!(r.is_err());
        let r = KinematicTree::new(
            "waist",
            vec![joint("root", None, [0.0; 3], Vec3::z(), 1.0)],
            3,
            vec![],
            vec![],
        );
        assert!(r.is_err());
    }

    #[test]
    fn dimension_mismatch() {
        let tree = KinematicTree::example_g1();
        assert!(matches!(
            forward_kinematics(&tree, &Pose::zero(3)),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn example_tree_layout() {
        let tree = KinematicTree::example_g1();
        assert_eq!(tree.dof(), 23);
        assert_eq!(tree.feet().len(), 2);
        let waist = tree.waist_chain();
        assert_eq!(waist.len(), 4, "root plus three waist joints");
        // standing: soles touch z = 0 with the root at the nominal pelvis height
        let pose = Pose::new(Vec3::new(0.0, 0.0, 0.781), UnitQuaternion::identity(), vec![0.0; 23]);
        let fk = forward_kinematics(&tree, &pose).unwrap();
        for &f in tree.feet() {
            for s in fk.sites(&tree, f) {
                assert!(s.z.abs() < 1e-9, "sole site at {}", s.z);
            }
        }
    }

    #[test]
    fn com_default_is_child_midpoint() {
        let text = r#"{"format_version":1,"joints":[
            {"name":"root","parent_index":null,"mass":1.0},
            {"name":"a","parent_index":0,"axis":[0,1,0],"mass":1.0},
            {"name":"b","parent_index":1,"local_offset":[0,0,0.4],"axis":[0,1,0],"mass":1.0}],
            "waist_index":0,"feet_indices":[],"contact_point_indices":[]}"#;
        let tree = TreeFile::from_json(text).unwrap().into_tree().unwrap();
        assert_eq!(tree.joint(1).com_local, Vec3::new(0.0, 0.0, 0.2));
        assert_eq!(tree.joint(2).com_local, Vec3::zeros());
    }

    #[test]
    fn future_version_rejected() {
        let text = r#"{"format_version":9,"joints":[{"name":"root","parent_index":null,"mass":1.0}],
            "waist_index":0,"feet_indices":[],"contact_point_indices":[]}"#;
        let err = TreeFile::from_json(text).unwrap().into_tree().unwrap_err();
        assert!(matches!(err, Error::UnknownVersion { found: 9, .. }));
    }
}
