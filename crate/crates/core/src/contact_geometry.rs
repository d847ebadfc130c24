//! Support polygons, closed point containment, proximity contacts and the
//! terrain height map sampled around the robot base.

use std::collections::BTreeSet;
use std::path::Path;

use nalgebra::{Rotation3, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::motion_model::{gravity_projection, FkResult, KinematicTree, Vec3};

pub type Point2 = Vector2<f64>;

pub const SCENE_FORMAT_VERSION: u32 = 1;
/// Default proximity threshold for contacts, meters.
pub const DEFAULT_CONTACT_EPS: f64 = 0.02;
/// Containment tolerance for degenerate (point/segment) polygons, meters.
pub const DEGENERATE_TOL: f64 = 1e-9;

pub const HEIGHT_MAP_ROWS: usize = 8;
pub const HEIGHT_MAP_COLS: usize = 4;
pub const HEIGHT_MAP_LEN: usize = HEIGHT_MAP_ROWS * HEIGHT_MAP_COLS;
pub const HEIGHT_MAP_EXTENT: f64 = 0.5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxObstacle {
    pub center: [f64; 3],
    pub half_extents: [f64; 3],
    #[serde(default)]
    pub yaw: f64,
}

impl BoxObstacle {
    pub fn new(center: [f64; 3], half_extents: [f64; 3], yaw: f64) -> Self {
        Self {
            center,
            half_extents,
            yaw,
        }
    }

    pub fn top(&self) -> f64 {
        self.center[2] + self.half_extents[2]
    }

    fn to_local(&self, p: &Vec3) -> Vec3 {
        let d = p - Vec3::from(self.center);
        Rotation3::from_axis_angle(&Vec3::z_axis(), -self.yaw) * d
    }

    /// Signed distance from `p` to the box surface (negative inside).
    pub fn signed_distance(&self, p: &Vec3) -> f64 {
        self.distance_and_normal(p).0
    }

    /// Signed distance and outward unit normal at the closest surface point.
    pub fn distance_and_normal(&self, p: &Vec3) -> (f64, Vec3) {
        let local = self.to_local(p);
        let h = Vec3::from(self.half_extents);
        let q = local.abs() - h;
        let outside = q.map(|v| v.max(0.0));
        let rot = Rotation3::from_axis_angle(&Vec3::z_axis(), self.yaw);
        if outside.norm() > 0.0 {
            let n_local = outside.component_mul(&local.map(f64::signum));
            let d = n_local.norm();
            (d, rot * (n_local / d))
        } else {
            // inside: nearest face
            let (axis, depth) = (0..3)
                .map(|i| (i, q[i]))
                .fold((0, f64::NEG_INFINITY), |acc, c| if c.1 > acc.1 { c } else { acc });
            let mut n_local = Vec3::zeros();
            n_local[axis] = if local[axis] >= 0.0 { 1.0 } else { -1.0 };
            (depth, rot * n_local)
        }
    }

    /// Closed containment of `(x, y)` in the box footprint.
    pub fn covers_xy(&self, x: f64, y: f64) -> bool {
        let local = self.to_local(&Vec3::new(x, y, self.center[2]));
        local.x.abs() <= self.half_extents[0] && local.y.abs() <= self.half_extents[1]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TerrainScene {
    #[serde(default = "scene_version")]
    pub format_version: u32,
    pub ground_height: f64,
    #[serde(default)]
    pub boxes: Vec<BoxObstacle>,
}

fn scene_version() -> u32 {
    SCENE_FORMAT_VERSION
}

impl TerrainScene {
    pub fn new(ground_height: f64, boxes: Vec<BoxObstacle>) -> Result<Self> {
        let scene = Self {
            format_version: SCENE_FORMAT_VERSION,
            ground_height,
            boxes,
        };
        scene.validate()?;
        Ok(scene)
    }

    pub fn flat(ground_height: f64) -> Self {
        Self {
            format_version: SCENE_FORMAT_VERSION,
            ground_height,
            boxes: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.format_version == 0 || self.format_version > SCENE_FORMAT_VERSION {
            return Err(Error::UnknownVersion {
                what: "terrain scene",
                found: self.format_version,
                supported: SCENE_FORMAT_VERSION,
            });
        }
        for (i, b) in self.boxes.iter().enumerate() {
            if b.half_extents.iter().any(|&h| !(h > 0.0)) {
                return Err(Error::InvalidArgument(format!(
                    "box {i} has non-positive half extents"
                )));
            }
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let scene: Self = crate::io::read_json(path.as_ref())?;
        scene.validate()?;
        Ok(scene)
    }

    /// Signed distance to the nearest surface (ground half-space or box).
    pub fn signed_distance(&self, p: &Vec3) -> f64 {
        self.boxes
            .iter()
            .map(|b| b.signed_distance(p))
            .fold(p.z - self.ground_height, f64::min)
    }

    /// Height of the tallest surface under `(x, y)`.
    pub fn height_at(&self, x: f64, y: f64) -> f64 {
        self.boxes
            .iter()
            .filter(|b| b.covers_xy(x, y))
            .map(BoxObstacle::top)
            .fold(self.ground_height, f64::max)
    }

    /// Copy rotated about the world z axis through the origin.
    pub fn rotated(&self, yaw: f64) -> Self {
        let rot = Rotation3::from_axis_angle(&Vec3::z_axis(), yaw);
        Self {
            format_version: self.format_version,
            ground_height: self.ground_height,
            boxes: self
                .boxes
                .iter()
                .map(|b| BoxObstacle {
                    center: (rot * Vec3::from(b.center)).into(),
                    half_extents: b.half_extents,
                    yaw: b.yaw + yaw,
                })
                .collect(),
        }
    }
}

/// Joints touching the environment at one frame, C(t).
pub type ContactSet = BTreeSet<usize>;

/// Counter-clockwise convex polygon; may also be empty, a point or a segment.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct SupportPolygon {
    vertices: Vec<Point2>,
}

impl SupportPolygon {
    pub fn vertices(&self) -> &[Point2] {
        &self.vertices
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn contains(&self, p: &Point2) -> bool {
        point_in_polygon(p, self)
    }

    pub fn area(&self) -> f64 {
        let v = &self.vertices;
        if v.len() < 3 {
            return 0.0;
        }
        0.5 * (0..v.len())
            .map(|i| cross(&v[i], &v[(i + 1) % v.len()]))
            .sum::<f64>()
    }
}

fn cross(a: &Point2, b: &Point2) -> f64 {
    a.x * b.y - a.y * b.x
}

fn orient(o: &Point2, a: &Point2, b: &Point2) -> f64 {
    (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x)
}

/// Andrew's monotone chain; collinear and duplicate points are pruned.
pub fn convex_hull(points: &[Point2]) -> SupportPolygon {
    let mut pts: Vec<Point2> = points.to_vec();
    pts.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    pts.dedup();
    if pts.len() <= 2 {
        return SupportPolygon { vertices: pts };
    }
    let mut hull: Vec<Point2> = Vec::with_capacity(2 * pts.len());
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &Point2>> = if pass == 0 {
            Box::new(pts.iter())
        } else {
            Box::new(pts.iter().rev())
        };
        for p in iter {
            while hull.len() >= start + 2
                && orient(&hull[hull.len() - 2], &hull[hull.len() - 1], p) <= 0.0
            {
                hull.pop();
            }
            hull.push(*p);
        }
        hull.pop();
    }
    if hull.len() == 2 && hull[0] == hull[1] {
        hull.pop();
    }
    SupportPolygon { vertices: hull }
}

fn segment_distance(p: &Point2, a: &Point2, b: &Point2) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_squared();
    if len2 == 0.0 {
        return (p - a).norm();
    }
    let t = ((p - a).dot(&ab) / len2).clamp(0.0, 1.0);
    (p - (a + ab * t)).norm()
}

/// Closed containment: boundary points count as inside.
pub fn point_in_polygon(p: &Point2, poly: &SupportPolygon) -> bool {
    let v = &poly.vertices;
    match v.len() {
        0 => false,
        1 => (p - v[0]).norm() <= DEGENERATE_TOL,
        2 => segment_distance(p, &v[0], &v[1]) <= DEGENERATE_TOL,
        n => (0..n).all(|i| {
            let a = &v[i];
            let b = &v[(i + 1) % n];
            let len = (b - a).norm();
            orient(a, b, p) >= -DEGENERATE_TOL * len
        }),
    }
}

/// Joints whose contact sites lie within `eps` of any surface.
pub fn detect_contacts(
    tree: &KinematicTree,
    fk: &FkResult,
    scene: &TerrainScene,
    eps: f64,
) -> ContactSet {
    tree.contact_points()
        .iter()
        .copied()
        .filter(|&j| {
            fk.sites(tree, j)
                .iter()
                .any(|s| scene.signed_distance(s) <= eps)
        })
        .collect()
}

/// Hull of the ground projections of foot sites that are in contact.
pub fn support_polygon(
    tree: &KinematicTree,
    fk: &FkResult,
    scene: &TerrainScene,
    eps: f64,
) -> SupportPolygon {
    let pts: Vec<Point2> = tree
        .feet()
        .iter()
        .flat_map(|&f| fk.sites(tree, f))
        .filter(|s| scene.signed_distance(s) <= eps)
        .map(|s| gravity_projection(&s))
        .collect();
    convex_hull(&pts)
}

/// Local `(forward, lateral)` offsets of the height-map grid, in output order.
///
/// Row-major: 8 rows along the base forward axis (back to front), 4 columns
/// along the lateral axis (right to left), cell centers of a 0.5 m square.
pub fn height_map_offsets() -> [(f64, f64); HEIGHT_MAP_LEN] {
    let mut out = [(0.0, 0.0); HEIGHT_MAP_LEN];
    let half = HEIGHT_MAP_EXTENT / 2.0;
    for r in 0..HEIGHT_MAP_ROWS {
        for c in 0..HEIGHT_MAP_COLS {
            let fwd = -half + (r as f64 + 0.5) * HEIGHT_MAP_EXTENT / HEIGHT_MAP_ROWS as f64;
            let lat = -half + (c as f64 + 0.5) * HEIGHT_MAP_EXTENT / HEIGHT_MAP_COLS as f64;
            out[r * HEIGHT_MAP_COLS + c] = (fwd, lat);
        }
    }
    out
}

pub fn sample_height_map(
    scene: &TerrainScene,
    base_position: &Vec3,
    base_yaw: f64,
) -> [f64; HEIGHT_MAP_LEN] {
    let (s, c) = base_yaw.sin_cos();
    let mut out = [0.0; HEIGHT_MAP_LEN];
    for (h, (fwd, lat)) in out.iter_mut().zip(height_map_offsets()) {
        let x = base_position.x + c * fwd - s * lat;
        let y = base_position.y + s * fwd + c * lat;
        *h = scene.height_at(x, y);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(x: f64, y: f64) -> Point2 {
        Point2::new(x, y)
    }

    #[test]
    fn square_hull_drops_center() {
        let hull = convex_hull(&[p(0., 0.), p(1., 0.), p(1., 1.), p(0., 1.), p(0.5, 0.5)]);
        assert_eq!(hull.vertices().len(), 4);
        assert!((hull.area() - 1.0).abs() < 1e-15, "ccw orientation");
    }

    #[test]
    fn collinear_points_give_segment() {
        let hull = convex_hull(&[p(0., 0.), p(2., 2.), p(1., 1.)]);
        assert_eq!(hull.vertices(), &[p(0., 0.), p(2., 2.)]);
        assert!(convex_hull(&[]).is_empty());
        assert_eq!(convex_hull(&[p(1., 1.), p(1., 1.)]).vertices().len(), 1);
    }

    #[test]
    fn containment() {
        let sq = convex_hull(&[p(0., 0.), p(1., 0.), p(1., 1.), p(0., 1.)]);
        assert!(point_in_polygon(&p(0.5, 0.5), &sq));
        assert!(point_in_polygon(&p(1.0, 0.5), &sq), "boundary is inside");
        assert!(!point_in_polygon(&p(2., 2.), &sq));
        assert!(!point_in_polygon(&p(0., 0.), &SupportPolygon::default()));
        let seg = convex_hull(&[p(0., 0.), p(1., 0.)]);
        assert!(point_in_polygon(&p(0.3, 0.0), &seg));
        assert!(!point_in_polygon(&p(0.3, 1e-6), &seg));
    }

    #[test]
    fn box_distance() {
        let b = BoxObstacle::new([0.0, 0.0, 0.5], [0.5, 0.5, 0.5], 0.3);
        assert!((b.signed_distance(&Vec3::new(0.0, 0.0, 1.2)) - 0.2).abs() < 1e-12);
        assert!((b.signed_distance(&Vec3::new(0.0, 0.0, 0.5)) + 0.5).abs() < 1e-12);
        let (d, n) = b.distance_and_normal(&Vec3::new(0.0, 0.0, 1.0));
        assert!(d.abs() < 1e-12);
        assert!((n - Vec3::z()).norm() < 1e-12);
    }

    #[test]
    fn flat_and_covered_height_maps() {
        let flat = TerrainScene::flat(0.0);
        assert_eq!(sample_height_map(&flat, &Vec3::zeros(), 0.4), [0.0; 32]);
        let covered = TerrainScene::new(0.0, vec![BoxObstacle::new([0.0, 0.0, 0.15], [1.0, 1.0, 0.15], 0.0)]).unwrap();
        assert!(sample_height_map(&covered, &Vec3::zeros(), 1.0)
            .iter()
            .all(|&h| (h - 0.3).abs() < 1e-15));
    }

    #[test]
    fn grid_layout_is_row_major_forward() {
        let offs = height_map_offsets();
        assert!(offs[0].0 < offs[4].0, "rows advance forward");
        assert!(offs[0].1 < offs[1].1, "columns advance left");
        assert!((offs[31].0 - 0.21875).abs() < 1e-15 && (offs[31].1 - 0.1875).abs() < 1e-15);
    }

    #[test]
    fn rejects_degenerate_boxes() {
        assert!(TerrainScene::new(0.0, vec![BoxObstacle::new([0.0; 3], [1.0, 0.0, 1.0], 0.0)]).is_err());
    }
}
