//! 8-node hexahedral meshes.
//!
//! Node ordering (shared by geometry, transfer and the FE solver): bottom
//! face counter-clockwise seen from above, then the top face in the same order.
//!
//! ```text
//!        7-------6
//!       /|      /|
//!      / |     / |
//!     4-------5  |        ζ
//!     |  3----|--2        |  η
//!     | /     | /         | /
//!     |/      |/          |/
//!     0-------1           +---- ξ
//! ```
//!
//! Node `a` sits at natural coordinates `NATURAL_CORNERS[a]` in `[-1, 1]³`.

use crate::raster::{check_direction, VoxelGrid};
use crate::{Mat3, Vec3};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MeshError {
    #[error("element {element} references node {node} but the mesh has {count} nodes")]
    NodeOutOfRange { element: usize, node: usize, count: usize },
    #[error("element {0} repeats a node")]
    DegenerateElement(usize),
    #[error("part label count {got} does not match element count {expected}")]
    PartCount { expected: usize, got: usize },
    #[error("node set {set:?} references node {node} out of range")]
    NodeSetOutOfRange { set: String, node: usize },
    #[error("element id {0} out of range")]
    BadElement(usize),
    #[error("element {element} has a non-positive corner Jacobian ({min_jacobian:e})")]
    NonPositiveJacobian { element: usize, min_jacobian: f64 },
    #[error("rotation is not a proper orthonormal matrix (det = {0})")]
    BadRotation(f64),
    #[error("mesh text line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

/// Anatomical part an element belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Part {
    FemoralCartilage,
    TibialCartilage,
    Meniscus,
    #[default]
    Other,
}

impl Part {
    pub fn is_cartilage(self) -> bool {
        matches!(self, Part::FemoralCartilage | Part::TibialCartilage)
    }

    pub fn label(self) -> &'static str {
        match self {
            Part::FemoralCartilage => "femoral-cartilage",
            Part::TibialCartilage => "tibial-cartilage",
            Part::Meniscus => "meniscus",
            Part::Other => "other",
        }
    }

    pub fn from_label(s: &str) -> Option<Self> {
        [Part::FemoralCartilage, Part::TibialCartilage, Part::Meniscus, Part::Other]
            .into_iter()
            .find(|p| p.label() == s)
    }
}

pub const NATURAL_CORNERS: [[f64; 3]; 8] = [
    [-1.0, -1.0, -1.0],
    [1.0, -1.0, -1.0],
    [1.0, 1.0, -1.0],
    [-1.0, 1.0, -1.0],
    [-1.0, -1.0, 1.0],
    [1.0, -1.0, 1.0],
    [1.0, 1.0, 1.0],
    [-1.0, 1.0, 1.0],
];

/// Six tetrahedra around the 0–6 diagonal. Each tet is positively oriented
/// for a positively oriented hex, and every face diagonal is shared
/// consistently between neighbouring tets.
pub const HEX_TETS: [[usize; 4]; 6] = [
    [0, 1, 2, 6],
    [0, 2, 3, 6],
    [0, 3, 7, 6],
    [0, 7, 4, 6],
    [0, 4, 5, 6],
    [0, 5, 1, 6],
];

/// Local node indices of the six quadrilateral faces, outward normals.
pub const HEX_FACES: [[usize; 4]; 6] = [
    [0, 3, 2, 1],
    [4, 5, 6, 7],
    [0, 1, 5, 4],
    [1, 2, 6, 5],
    [2, 3, 7, 6],
    [3, 0, 4, 7],
];

/// 2×2×2 Gauss rule on `[-1, 1]³`; every weight is 1.
pub fn gauss_points() -> [[f64; 3]; 8] {
    let g = 1.0 / 3f64.sqrt();
    NATURAL_CORNERS.map(|c| [c[0] * g, c[1] * g, c[2] * g])
}

/// Trilinear shape functions.
pub fn shape_functions(xi: [f64; 3]) -> [f64; 8] {
    NATURAL_CORNERS.map(|c| {
        0.125 * (1.0 + c[0] * xi[0]) * (1.0 + c[1] * xi[1]) * (1.0 + c[2] * xi[2])
    })
}

/// Shape-function derivatives with respect to natural coordinates.
pub fn shape_gradients(xi: [f64; 3]) -> [[f64; 3]; 8] {
    NATURAL_CORNERS.map(|c| {
        let a = 1.0 + c[0] * xi[0];
        let b = 1.0 + c[1] * xi[1];
        let d = 1.0 + c[2] * xi[2];
        [0.125 * c[0] * b * d, 0.125 * a * c[1] * d, 0.125 * a * b * c[2]]
    })
}

/// Jacobian `∂x/∂ξ` of the trilinear map (columns are ∂x/∂ξ, ∂x/∂η, ∂x/∂ζ).
pub fn jacobian(corners: &[Vec3; 8], xi: [f64; 3]) -> Mat3 {
    let dn = shape_gradients(xi);
    let mut j = Mat3::zeros();
    for (x, g) in corners.iter().zip(dn.iter()) {
        for c in 0..3 {
            for r in 0..3 {
                j[(r, c)] += x[r] * g[c];
            }
        }
    }
    j
}

/// `det J` evaluated at each of the eight corners.
pub fn corner_jacobians(corners: &[Vec3; 8]) -> [f64; 8] {
    NATURAL_CORNERS.map(|c| jacobian(corners, c).determinant())
}

/// Scaled Jacobian at each corner: `det` of the three unit edge vectors leaving it.
pub fn scaled_corner_jacobians(corners: &[Vec3; 8]) -> [f64; 8] {
    const EDGE_NEIGHBOURS: [[usize; 3]; 8] = [
        [1, 3, 4],
        [2, 0, 5],
        [3, 1, 6],
        [0, 2, 7],
        [7, 5, 0],
        [4, 6, 1],
        [5, 7, 2],
        [6, 4, 3],
    ];
    std::array::from_fn(|a| {
        let [i, j, k] = EDGE_NEIGHBOURS[a];
        let e = |n: usize| (corners[n] - corners[a]).normalize();
        Mat3::from_columns(&[e(i), e(j), e(k)]).determinant()
    })
}

/// Volume of the trilinear image of `[-1, 1]³` by 2×2×2 Gauss quadrature of
/// `det J` (exact: `det J` is at most quadratic in each natural coordinate).
pub fn hex_volume(corners: &[Vec3; 8]) -> f64 {
    gauss_points().iter().map(|&g| jacobian(corners, g).determinant()).sum()
}

/// Signed volume of a tetrahedron.
#[inline]
pub fn tet_signed_volume(a: &Vec3, b: &Vec3, c: &Vec3, d: &Vec3) -> f64 {
    (b - a).dot(&(c - a).cross(&(d - a))) / 6.0
}

/// Volume of the fixed six-tetrahedron decomposition ([`HEX_TETS`]).
/// Equals [`hex_volume`] when all faces are planar.
pub fn hex_tet_volume(corners: &[Vec3; 8]) -> f64 {
    HEX_TETS
        .iter()
        .map(|t| tet_signed_volume(&corners[t[0]], &corners[t[1]], &corners[t[2]], &corners[t[3]]))
        .sum()
}

#[derive(Clone, Debug, PartialEq)]
pub struct HexMesh {
    nodes: Vec<Vec3>,
    elements: Vec<[usize; 8]>,
    parts: Vec<Part>,
    node_sets: BTreeMap<String, Vec<usize>>,
}

impl HexMesh {
    pub fn new(
        nodes: Vec<Vec3>,
        elements: Vec<[usize; 8]>,
        parts: Vec<Part>,
        node_sets: BTreeMap<String, Vec<usize>>,
    ) -> Result<Self, MeshError> {
        if parts.len() != elements.len() {
            return Err(MeshError::PartCount { expected: elements.len(), got: parts.len() });
        }
        for (e, conn) in elements.iter().enumerate() {
            for &n in conn {
                if n >= nodes.len() {
                    return Err(MeshError::NodeOutOfRange { element: e, node: n, count: nodes.len() });
                }
            }
            let mut sorted = *conn;
            sorted.sort_unstable();
            if sorted.windows(2).any(|w| w[0] == w[1]) {
                return Err(MeshError::DegenerateElement(e));
            }
        }
        for (name, ids) in &node_sets {
            if let Some(&n) = ids.iter().find(|&&n| n >= nodes.len()) {
                return Err(MeshError::NodeSetOutOfRange { set: name.clone(), node: n });
            }
        }
        Ok(Self { nodes, elements, parts, node_sets })
    }

    /// Regular `n[0]×n[1]×n[2]` block of hexes spanning `origin + [0, size]`.
    /// Nodes are numbered x-fastest. Node sets `xmin`, `xmax`, `ymin`, `ymax`,
    /// `zmin`, `zmax` hold the boundary faces.
    pub fn block(n: [usize; 3], origin: Vec3, size: Vec3, part: Part) -> Self {
        let [nx, ny, nz] = n;
        let node_id = |i: usize, j: usize, k: usize| i + (nx + 1) * (j + (ny + 1) * k);
        let mut nodes = Vec::with_capacity((nx + 1) * (ny + 1) * (nz + 1));
        let mut sets: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        for k in 0..=nz {
            for j in 0..=ny {
                for i in 0..=nx {
                    let f = Vec3::new(i as f64 / nx as f64, j as f64 / ny as f64, k as f64 / nz as f64);
                    nodes.push(origin + f.component_mul(&size));
                    let id = node_id(i, j, k);
                    for (name, on) in [
                        ("xmin", i == 0),
                        ("xmax", i == nx),
                        ("ymin", j == 0),
                        ("ymax", j == ny),
                        ("zmin", k == 0),
                        ("zmax", k == nz),
                    ] {
                        if on {
                            sets.entry(name.to_string()).or_default().push(id);
                        }
                    }
                }
            }
        }
        let mut elements = Vec::with_capacity(nx * ny * nz);
        for k in 0..nz {
            for j in 0..ny {
                for i in 0..nx {
                    elements.push([
                        node_id(i, j, k),
                        node_id(i + 1, j, k),
                        node_id(i + 1, j + 1, k),
                        node_id(i, j + 1, k),
                        node_id(i, j, k + 1),
                        node_id(i + 1, j, k + 1),
                        node_id(i + 1, j + 1, k + 1),
                        node_id(i, j + 1, k + 1),
                    ]);
                }
            }
        }
        let parts = vec![part; elements.len()];
        Self { nodes, elements, parts, node_sets: sets }
    }

    pub fn nodes(&self) -> &[Vec3] {
        &self.nodes
    }
    pub fn elements(&self) -> &[[usize; 8]] {
        &self.elements
    }
    pub fn parts(&self) -> &[Part] {
        &self.parts
    }
    pub fn node_sets(&self) -> &BTreeMap<String, Vec<usize>> {
        &self.node_sets
    }
    pub fn node_set(&self, name: &str) -> Option<&[usize]> {
        self.node_sets.get(name).map(|v| v.as_slice())
    }
    pub fn element_count(&self) -> usize {
        self.elements.len()
    }
    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn set_parts(&mut self, parts: Vec<Part>) -> Result<(), MeshError> {
        if parts.len() != self.elements.len() {
            return Err(MeshError::PartCount { expected: self.elements.len(), got: parts.len() });
        }
        self.parts = parts;
        Ok(())
    }

    pub fn insert_node_set(&mut self, name: &str, ids: Vec<usize>) -> Result<(), MeshError> {
        if let Some(&n) = ids.iter().find(|&&n| n >= self.nodes.len()) {
            return Err(MeshError::NodeSetOutOfRange { set: name.to_string(), node: n });
        }
        self.node_sets.insert(name.to_string(), ids);
        Ok(())
    }

    /// Mutable node coordinates (e.g. for perturbation in tests); topology is fixed.
    pub fn nodes_mut(&mut self) -> &mut [Vec3] {
        &mut self.nodes
    }

    #[inline]
    pub fn corners(&self, e: usize) -> [Vec3; 8] {
        self.elements[e].map(|n| self.nodes[n])
    }

    fn check_id(&self, e: usize) -> Result<(), MeshError> {
        if e < self.elements.len() {
            Ok(())
        } else {
            Err(MeshError::BadElement(e))
        }
    }

    pub fn element_centroid(&self, e: usize) -> Result<Vec3, MeshError> {
        self.check_id(e)?;
        Ok(self.corners(e).iter().sum::<Vec3>() / 8.0)
    }

    pub fn element_volume(&self, e: usize) -> Result<f64, MeshError> {
        self.check_id(e)?;
        let c = self.corners(e);
        let min_jacobian = corner_jacobians(&c).into_iter().fold(f64::INFINITY, f64::min);
        if !(min_jacobian > 0.0) {
            return Err(MeshError::NonPositiveJacobian { element: e, min_jacobian });
        }
        Ok(hex_volume(&c))
    }

    /// Elements with any corner Jacobian `≤ 0`, in ascending order.
    pub fn check_jacobians(&self) -> Vec<usize> {
        (0..self.elements.len())
            .filter(|&e| corner_jacobians(&self.corners(e)).iter().any(|&j| !(j > 0.0)))
            .collect()
    }

    /// Element pairs sharing a quadrilateral face: `neighbours[e]` is sorted.
    pub fn face_neighbours(&self) -> Vec<Vec<usize>> {
        let mut owners: HashMap<[usize; 4], Vec<usize>> = HashMap::new();
        for (e, conn) in self.elements.iter().enumerate() {
            for f in HEX_FACES {
                let mut key = f.map(|l| conn[l]);
                key.sort_unstable();
                owners.entry(key).or_default().push(e);
            }
        }
        let mut out = vec![Vec::new(); self.elements.len()];
        for shared in owners.values() {
            for &a in shared {
                for &b in shared {
                    if a != b {
                        out[a].push(b);
                    }
                }
            }
        }
        for n in &mut out {
            n.sort_unstable();
            n.dedup();
        }
        out
    }
}

/// Proper rigid motion `x ↦ R x + t`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RigidTransformRepr", into = "RigidTransformRepr")]
pub struct RigidTransform {
    rotation: Mat3,
    translation: Vec3,
}

#[derive(Serialize, Deserialize)]
struct RigidTransformRepr {
    /// Row-major 3×3.
    rotation: [f64; 9],
    translation_mm: [f64; 3],
}

impl TryFrom<RigidTransformRepr> for RigidTransform {
    type Error = MeshError;
    fn try_from(r: RigidTransformRepr) -> Result<Self, MeshError> {
        RigidTransform::new(Mat3::from_row_slice(&r.rotation), Vec3::from(r.translation_mm))
    }
}

impl From<RigidTransform> for RigidTransformRepr {
    fn from(t: RigidTransform) -> Self {
        let r = t.rotation;
        RigidTransformRepr {
            rotation: std::array::from_fn(|i| r[(i / 3, i % 3)]),
            translation_mm: [t.translation.x, t.translation.y, t.translation.z],
        }
    }
}

impl RigidTransform {
    pub fn new(rotation: Mat3, translation: Vec3) -> Result<Self, MeshError> {
        check_direction(&rotation).map_err(MeshError::BadRotation)?;
        let det = rotation.determinant();
        if (det - 1.0).abs() > 1e-9 {
            return Err(MeshError::BadRotation(det));
        }
        Ok(Self { rotation, translation })
    }

    pub fn identity() -> Self {
        Self { rotation: Mat3::identity(), translation: Vec3::zeros() }
    }

    pub fn translation(t: Vec3) -> Self {
        Self { rotation: Mat3::identity(), translation: t }
    }

    pub fn from_axis_angle(axis: Vec3, angle: f64, translation: Vec3) -> Self {
        let axis = nalgebra::Unit::new_normalize(axis);
        let rotation = nalgebra::Rotation3::from_axis_angle(&axis, angle).into_inner();
        Self { rotation, translation }
    }

    pub fn rotation(&self) -> &Mat3 {
        &self.rotation
    }
    pub fn translation_mm(&self) -> Vec3 {
        self.translation
    }

    #[inline]
    pub fn apply(&self, p: &Vec3) -> Vec3 {
        self.rotation * p + self.translation
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        Self { rotation: rt, translation: -(rt * self.translation) }
    }

    /// `self ∘ other`: apply `other` first.
    pub fn compose(&self, other: &RigidTransform) -> Self {
        Self {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }
}

/// Objects that can be moved by a rigid pose.
pub trait ApplyPose: Sized {
    fn apply_pose(&self, t: &RigidTransform) -> Self;
}

impl ApplyPose for HexMesh {
    fn apply_pose(&self, t: &RigidTransform) -> Self {
        let mut out = self.clone();
        for x in &mut out.nodes {
            *x = t.apply(x);
        }
        out
    }
}

/// Moves the grid's pose; voxel values are never resampled.
impl ApplyPose for VoxelGrid {
    fn apply_pose(&self, t: &RigidTransform) -> Self {
        let mut out = self.clone();
        out.set_pose(t.apply(&self.origin()), t.rotation * self.direction());
        out
    }
}
