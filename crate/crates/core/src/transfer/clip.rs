//! Exact overlap volume between a hexahedron and an axis-aligned box.
//!
//! The hex is split into the six tetrahedra of [`HEX_TETS`]. Each tetrahedron
//! is clipped by the box's half-spaces one at a time; a tetrahedron cut by a
//! plane leaves either a smaller tetrahedron or a triangular prism, and the
//! prism is split back into three tetrahedra, so the working set is always a
//! list of tetrahedra whose volumes sum to the clipped volume.

use crate::mesh::{tet_signed_volume, HEX_TETS};
use crate::Vec3;

pub type Tet = [Vec3; 4];

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Aabb {
    pub min: Vec3,
    pub max: Vec3,
}

impl Aabb {
    pub fn new(min: Vec3, max: Vec3) -> Self {
        Self { min, max }
    }

    pub fn of_points(points: &[Vec3]) -> Self {
        let mut min = Vec3::repeat(f64::INFINITY);
        let mut max = Vec3::repeat(f64::NEG_INFINITY);
        for p in points {
            min = min.inf(p);
            max = max.sup(p);
        }
        Self { min, max }
    }

    pub fn volume(&self) -> f64 {
        let d = self.max - self.min;
        d.x.max(0.0) * d.y.max(0.0) * d.z.max(0.0)
    }

    #[inline]
    fn disjoint(&self, other: &Aabb) -> bool {
        (0..3).any(|a| self.max[a] <= other.min[a] || self.min[a] >= other.max[a])
    }

    #[inline]
    fn contains(&self, other: &Aabb) -> bool {
        (0..3).all(|a| self.min[a] <= other.min[a] && other.max[a] <= self.max[a])
    }
}

/// Reusable tetrahedron buffers for clipping.
#[derive(Default, Debug)]
pub struct ClipWorkspace {
    front: Vec<Tet>,
    back: Vec<Tet>,
}

#[inline]
fn tet_volume(t: &Tet) -> f64 {
    tet_signed_volume(&t[0], &t[1], &t[2], &t[3]).abs()
}

/// A tetrahedron with its cached bounding box and volume.
#[derive(Clone, Copy, Debug)]
pub struct BoundedTet {
    pub tet: Tet,
    pub bounds: Aabb,
    pub volume: f64,
}

impl BoundedTet {
    pub fn new(tet: Tet) -> Self {
        Self { bounds: Aabb::of_points(&tet), volume: tet_volume(&tet), tet }
    }
}

/// The six tetrahedra of a hex, in [`HEX_TETS`] order.
pub fn hex_tets(corners: &[Vec3; 8]) -> [BoundedTet; 6] {
    HEX_TETS.map(|t| BoundedTet::new(t.map(|i| corners[i])))
}

/// Keeps the part of every tet in `src` with `side · (p[axis] − value) ≤ 0`.
fn clip_plane(src: &[Tet], dst: &mut Vec<Tet>, axis: usize, value: f64, side: f64) {
    dst.clear();
    for t in src {
        let s = t.map(|p| side * (p[axis] - value));
        let mut inside = [0usize; 4];
        let mut outside = [0usize; 4];
        let (mut ni, mut no) = (0, 0);
        for (v, &sv) in s.iter().enumerate() {
            if sv <= 0.0 {
                inside[ni] = v;
                ni += 1;
            } else {
                outside[no] = v;
                no += 1;
            }
        }
        let cut = |a: usize, b: usize| {
            let t_ab = s[a] / (s[a] - s[b]);
            let mut p = t[a] + (t[b] - t[a]) * t_ab;
            p[axis] = value;
            p
        };
        match ni {
            0 => {}
            4 => dst.push(*t),
            1 => {
                let a = inside[0];
                dst.push([t[a], cut(a, outside[0]), cut(a, outside[1]), cut(a, outside[2])]);
            }
            2 => {
                let (a, b) = (inside[0], inside[1]);
                let (c, d) = (outside[0], outside[1]);
                push_prism(dst, [t[a], cut(a, c), cut(a, d)], [t[b], cut(b, c), cut(b, d)]);
            }
            _ => {
                let (a, b, c) = (inside[0], inside[1], inside[2]);
                let d = outside[0];
                push_prism(dst, [t[a], t[b], t[c]], [cut(a, d), cut(b, d), cut(c, d)]);
            }
        }
    }
}

/// Triangular prism with corresponding vertices `p[i] — q[i]`.
#[inline]
fn push_prism(dst: &mut Vec<Tet>, p: [Vec3; 3], q: [Vec3; 3]) {
    dst.push([p[0], p[1], p[2], q[0]]);
    dst.push([p[1], p[2], q[0], q[1]]);
    dst.push([p[2], q[0], q[1], q[2]]);
}

/// Volume of `tet ∩ bx`.
pub fn clip_tet_volume(tet: &BoundedTet, bx: &Aabb, ws: &mut ClipWorkspace) -> f64 {
    if bx.disjoint(&tet.bounds) {
        return 0.0;
    }
    if bx.contains(&tet.bounds) {
        return tet.volume;
    }
    ws.front.clear();
    ws.front.push(tet.tet);
    for axis in 0..3 {
        if tet.bounds.min[axis] < bx.min[axis] {
            clip_plane(&ws.front, &mut ws.back, axis, bx.min[axis], -1.0);
            std::mem::swap(&mut ws.front, &mut ws.back);
        }
        if tet.bounds.max[axis] > bx.max[axis] {
            clip_plane(&ws.front, &mut ws.back, axis, bx.max[axis], 1.0);
            std::mem::swap(&mut ws.front, &mut ws.back);
        }
        if ws.front.is_empty() {
            return 0.0;
        }
    }
    ws.front.iter().map(tet_volume).sum()
}

/// Overlap volume of a hex (given by its six tets) and a box.
pub fn tets_box_overlap(tets: &[BoundedTet; 6], bx: &Aabb, ws: &mut ClipWorkspace) -> f64 {
    tets.iter().map(|t| clip_tet_volume(t, bx, ws)).sum()
}
