//! Voxel → element transfer of T₂ values.
//!
//! Two rules are provided:
//!
//! * **nearest neighbour** — the element takes the value of the voxel whose
//!   centre is nearest its centroid (rounded continuous index);
//! * **volume weighted** — `T2e = Σ T2_v · f_V(v) / Σ f_V(v)` over valid voxels,
//!   where `f_V(v)` is the fraction of the element's volume lying in voxel `v`.
//!
//! Overlaps are computed exactly by clipping the element's six-tetrahedron
//! decomposition against each candidate voxel box, in the grid's own frame
//! (so arbitrarily posed grids are handled without resampling). Candidate
//! voxels come from the element's index-space bounding box; per element the
//! voxels are visited in ascending linear index so every result is
//! reproducible bit for bit whatever the parallel schedule.

pub mod clip;
mod stats;

pub use stats::{agreement, texture_stats, AgreementStats, Texture};

use crate::mesh::{corner_jacobians, tet_signed_volume, HexMesh, MeshError, HEX_TETS};
use crate::par::{self, Execution};
use crate::raster::VoxelGrid;
use crate::Vec3;
use clip::{hex_tets, tets_box_overlap, Aabb, BoundedTet, ClipWorkspace};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum TransferError {
    #[error("grid has no voxels")]
    EmptyGrid,
    #[error("every voxel in the grid is invalid")]
    AllInvalid,
    #[error("no element overlaps any valid voxel")]
    NoCoverage,
    #[error("element {0} is inverted")]
    InvertedElement(usize),
    #[error("hexahedron is inverted")]
    InvertedHex,
    #[error("field lengths differ ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("field has {0} entries for a mesh with {1} elements")]
    FieldSize(usize, usize),
    #[error("agreement needs at least 3 pairs, got {0}")]
    TooFewPairs(usize),
    #[error("no elements selected")]
    EmptySelection,
    #[error(transparent)]
    Mesh(#[from] MeshError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FieldUnit {
    Ms,
    Pa,
    Dimensionless,
}

impl FieldUnit {
    pub fn label(self) -> &'static str {
        match self {
            FieldUnit::Ms => "ms",
            FieldUnit::Pa => "Pa",
            FieldUnit::Dimensionless => "dimensionless",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    NearestNeighbor,
    VolumeWeighted,
    Derived,
}

impl Method {
    pub fn label(self) -> &'static str {
        match self {
            Method::NearestNeighbor => "nearest-neighbor",
            Method::VolumeWeighted => "volume-weighted",
            Method::Derived => "derived",
        }
    }

    pub fn from_label(s: &str) -> Option<Self> {
        [Method::NearestNeighbor, Method::VolumeWeighted, Method::Derived]
            .into_iter()
            .find(|m| m.label() == s)
    }
}

/// One scalar per element plus the fraction of the element covered by
/// valid voxels.
#[derive(Clone, Debug, PartialEq)]
pub struct ElementField {
    pub values: Vec<f64>,
    pub coverage: Vec<f64>,
    pub unit: FieldUnit,
    pub method: Method,
}

impl ElementField {
    /// Derived field (moduli, stress metrics…) with full coverage.
    pub fn derived(values: Vec<f64>, unit: FieldUnit) -> Self {
        let coverage = vec![1.0; values.len()];
        Self { values, coverage, unit, method: Method::Derived }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn map(&self, unit: FieldUnit, f: impl Fn(f64) -> f64) -> Self {
        Self {
            values: self.values.iter().map(|&v| f(v)).collect(),
            coverage: self.coverage.clone(),
            unit,
            method: Method::Derived,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TransferOptions {
    /// Elements whose valid coverage is below this fall back to nearest neighbour.
    pub coverage_floor: f64,
    pub execution: Execution,
}

impl Default for TransferOptions {
    fn default() -> Self {
        Self { coverage_floor: 0.01, execution: Execution::Parallel }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Assignment {
    pub field: ElementField,
    /// Elements that needed the nearest-valid-voxel fallback.
    pub fallbacks: usize,
}

fn check_grid(grid: &VoxelGrid) -> Result<(), TransferError> {
    if grid.is_empty() {
        return Err(TransferError::EmptyGrid);
    }
    if grid.valid_count() == 0 {
        return Err(TransferError::AllInvalid);
    }
    Ok(())
}

/// Value at the voxel nearest `p`, falling back to the nearest valid voxel
/// centre. Returns `(value, direct_hit)`.
fn nearest_value(grid: &VoxelGrid, p: &Vec3) -> (f64, bool) {
    let hit = grid.world_to_index(p);
    if hit.in_bounds {
        let [i, j, k] = hit.index.map(|x| x as usize);
        let lin = grid.linear_index(i, j, k);
        if grid.is_valid(lin) {
            return (grid.values()[lin], true);
        }
    }
    // check_grid guarantees at least one valid voxel
    let (lin, _) = grid.nearest_valid(p).expect("grid has a valid voxel");
    (grid.values()[lin], false)
}

fn field_unit(grid: &VoxelGrid) -> FieldUnit {
    match grid.unit() {
        crate::raster::Unit::Ms => FieldUnit::Ms,
        crate::raster::Unit::ArbitrarySignal => FieldUnit::Dimensionless,
    }
}

/// Nearest-neighbour assignment by centroid. Coverage is 1 for a direct hit
/// on a valid voxel and 0 when the fallback search was needed.
pub fn assign_nearest_neighbor(
    mesh: &HexMesh,
    grid: &VoxelGrid,
    exec: Execution,
) -> Result<Assignment, TransferError> {
    check_grid(grid)?;
    let results = par::map_indexed(mesh.element_count(), exec, |e| {
        let c = mesh.corners(e).iter().sum::<Vec3>() / 8.0;
        nearest_value(grid, &c)
    });
    let fallbacks = results.iter().filter(|r| !r.1).count();
    let (values, coverage) = results.into_iter().map(|(v, hit)| (v, f64::from(u8::from(hit)))).unzip();
    Ok(Assignment {
        field: ElementField { values, coverage, unit: field_unit(grid), method: Method::NearestNeighbor },
        fallbacks,
    })
}

/// One voxel's share of an element.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VoxelOverlap {
    pub voxel: usize,
    /// Overlap volume in mm³.
    pub volume: f64,
    /// Overlap volume over the element's (six-tetrahedron) volume.
    pub fraction: f64,
}

/// Element geometry expressed in the grid frame.
struct LocalElement {
    tets: [BoundedTet; 6],
    volume: f64,
    lo: [usize; 3],
    hi: [usize; 3],
    empty: bool,
}

fn local_element(mesh: &HexMesh, grid: &VoxelGrid, e: usize) -> LocalElement {
    let corners = mesh.corners(e).map(|p| grid.to_grid_frame(&p));
    let tets = hex_tets(&corners);
    let volume = tets.iter().map(|t| t.volume).sum();
    let bounds = Aabb::of_points(&corners);
    let h = grid.spacing();
    let dims = grid.dims();
    let mut lo = [0usize; 3];
    let mut hi = [0usize; 3];
    let mut empty = false;
    for a in 0..3 {
        // voxel i spans [(i - 1/2) h, (i + 1/2) h]
        let first = (bounds.min[a] / h[a] + 0.5).floor() as i64;
        let last = (bounds.max[a] / h[a] + 0.5).floor() as i64;
        if last < 0 || first >= dims[a] as i64 {
            empty = true;
        }
        lo[a] = first.clamp(0, dims[a] as i64 - 1) as usize;
        hi[a] = last.clamp(0, dims[a] as i64 - 1) as usize;
    }
    LocalElement { tets, volume, lo, hi, empty }
}

fn visit_overlaps(
    grid: &VoxelGrid,
    el: &LocalElement,
    ws: &mut ClipWorkspace,
    mut visit: impl FnMut(usize, f64),
) {
    if el.empty {
        return;
    }
    let h = grid.spacing();
    for k in el.lo[2]..=el.hi[2] {
        for j in el.lo[1]..=el.hi[1] {
            for i in el.lo[0]..=el.hi[0] {
                let centre = Vec3::new(i as f64, j as f64, k as f64).component_mul(&h);
                let bx = Aabb::new(centre - h * 0.5, centre + h * 0.5);
                let v = tets_box_overlap(&el.tets, &bx, ws);
                if v > 0.0 {
                    visit(grid.linear_index(i, j, k), v);
                }
            }
        }
    }
}

fn check_element(mesh: &HexMesh, e: usize) -> Result<(), TransferError> {
    if e >= mesh.element_count() {
        return Err(MeshError::BadElement(e).into());
    }
    if corner_jacobians(&mesh.corners(e)).iter().any(|&j| !(j > 0.0)) {
        return Err(TransferError::InvertedElement(e));
    }
    Ok(())
}

/// Every voxel overlapping element `e`, valid or not, in ascending voxel order.
pub fn overlap_fractions(
    mesh: &HexMesh,
    grid: &VoxelGrid,
    e: usize,
) -> Result<Vec<VoxelOverlap>, TransferError> {
    check_element(mesh, e)?;
    let el = local_element(mesh, grid, e);
    let mut out = Vec::new();
    visit_overlaps(grid, &el, &mut ClipWorkspace::default(), |voxel, volume| {
        out.push(VoxelOverlap { voxel, volume, fraction: volume / el.volume })
    });
    Ok(out)
}

/// Overlap volume of a hex given by its 8 corners and an axis-aligned box.
pub fn hex_box_overlap_volume(corners: &[Vec3; 8], bx: &Aabb) -> Result<f64, TransferError> {
    if corner_jacobians(corners).iter().any(|&j| !(j > 0.0)) {
        return Err(TransferError::InvertedHex);
    }
    Ok(tets_box_overlap(&hex_tets(corners), bx, &mut ClipWorkspace::default()))
}

/// Monte-Carlo estimate of the same overlap from `samples` uniform points in
/// the box, with its standard error. Uses point-in-tetrahedron tests only, so
/// it checks the clipper independently.
pub fn sample_overlap_volume(corners: &[Vec3; 8], bx: &Aabb, samples: usize, seed: u64) -> (f64, f64) {
    use rand::{Rng, SeedableRng};
    let tets: Vec<[Vec3; 4]> = HEX_TETS.iter().map(|t| t.map(|i| corners[i])).collect();
    let inside = |p: &Vec3| {
        tets.iter().any(|t| {
            let s = tet_signed_volume(&t[0], &t[1], &t[2], &t[3]).signum();
            [
                tet_signed_volume(p, &t[1], &t[2], &t[3]),
                tet_signed_volume(&t[0], p, &t[2], &t[3]),
                tet_signed_volume(&t[0], &t[1], p, &t[3]),
                tet_signed_volume(&t[0], &t[1], &t[2], p),
            ]
            .iter()
            .all(|&v| v * s >= 0.0)
        })
    };
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let hits = (0..samples)
        .filter(|_| inside(&Vec3::from_fn(|a, _| rng.random_range(bx.min[a]..bx.max[a]))))
        .count();
    let p = hits as f64 / samples as f64;
    let v = bx.volume();
    (v * p, v * (p * (1.0 - p) / samples as f64).sqrt())
}

/// Volume-weighted assignment, renormalised over valid coverage.
pub fn assign_volume_weighted(
    mesh: &HexMesh,
    grid: &VoxelGrid,
    opts: &TransferOptions,
) -> Result<Assignment, TransferError> {
    check_grid(grid)?;
    if let Some(&bad) = mesh.check_jacobians().first() {
        return Err(TransferError::InvertedElement(bad));
    }
    let values = grid.values();
    let results = par::map_indexed_with(mesh.element_count(), opts.execution, ClipWorkspace::default, |ws, e| {
        let el = local_element(mesh, grid, e);
        let (mut weight, mut weighted) = (0.0, 0.0);
        visit_overlaps(grid, &el, ws, |voxel, v| {
            let t2 = values[voxel];
            if t2.is_finite() {
                weight += v;
                weighted += v * t2;
            }
        });
        let coverage = (weight / el.volume).min(1.0);
        if coverage >= opts.coverage_floor && weight > 0.0 {
            (weighted / weight, coverage, false)
        } else {
            let c = mesh.corners(e).iter().sum::<Vec3>() / 8.0;
            (nearest_value(grid, &c).0, coverage, true)
        }
    });
    if results.iter().all(|r| r.1 == 0.0) {
        return Err(TransferError::NoCoverage);
    }
    let fallbacks = results.iter().filter(|r| r.2).count();
    let mut values = Vec::with_capacity(results.len());
    let mut coverage = Vec::with_capacity(results.len());
    for (v, c, _) in results {
        values.push(v);
        coverage.push(c);
    }
    Ok(Assignment {
        field: ElementField { values, coverage, unit: field_unit(grid), method: Method::VolumeWeighted },
        fallbacks,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{ApplyPose, Part, RigidTransform};
    use crate::raster::Unit;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::collections::BTreeMap;

    #[test]
    fn sampled_overlap_agrees_with_clipping() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let hex = crate::mesh::NATURAL_CORNERS
            .map(|c| Vec3::from(c) * 0.5 + Vec3::from_fn(|_, _| rng.random_range(-0.1..0.1)));
        let bx = Aabb::new(Vec3::new(-0.2, -0.7, 0.0), Vec3::new(0.6, 0.3, 0.9));
        let exact = hex_box_overlap_volume(&hex, &bx).unwrap();
        let (est, se) = sample_overlap_volume(&hex, &bx, 200_000, 5);
        assert!((est - exact).abs() < 4.0 * se, "{est} vs {exact} (se {se})");
        assert_eq!(sample_overlap_volume(&hex, &bx, 1000, 9), sample_overlap_volume(&hex, &bx, 1000, 9));
    }

    fn grid(dims: [usize; 3], spacing: Vec3, values: Vec<f64>) -> VoxelGrid {
        VoxelGrid::axis_aligned(dims, spacing, Vec3::zeros(), values, Unit::Ms).unwrap()
    }

    fn one_element(lo: Vec3, size: Vec3) -> HexMesh {
        HexMesh::block([1, 1, 1], lo, size, Part::TibialCartilage)
    }

    #[test]
    fn nearest_neighbor_direct_hits_and_rounding() {
        let mut vals = vec![10.0; 27];
        vals[13] = 52.0; // (1,1,1)
        vals[14] = 77.0; // (2,1,1)
        let g = grid([3, 3, 3], Vec3::repeat(1.0), vals);
        // centroid at voxel (1,1,1)
        let m = one_element(Vec3::repeat(0.5), Vec3::repeat(1.0));
        let a = assign_nearest_neighbor(&m, &g, Execution::Sequential).unwrap();
        assert_eq!(a.field.values, vec![52.0]);
        assert_eq!(a.field.coverage, vec![1.0]);
        assert_eq!(a.fallbacks, 0);
        // centroid 0.6 voxel from (1,1,1) toward (2,1,1)
        let m = one_element(Vec3::new(1.1, 0.5, 0.5), Vec3::repeat(1.0));
        assert_eq!(assign_nearest_neighbor(&m, &g, Execution::Sequential).unwrap().field.values, vec![77.0]);
    }

    #[test]
    fn nearest_neighbor_outside_falls_back_to_boundary() {
        let vals: Vec<f64> = (0..27).map(f64::from).collect();
        let g = grid([3, 3, 3], Vec3::repeat(1.0), vals);
        // centroid at (-1, 1, 1): one voxel outside, nearest is (0,1,1)
        let m = one_element(Vec3::new(-1.5, 0.5, 0.5), Vec3::repeat(1.0));
        let a = assign_nearest_neighbor(&m, &g, Execution::Sequential).unwrap();
        assert_eq!(a.field.values, vec![12.0]);
        assert_eq!(a.field.coverage, vec![0.0]);
        assert_eq!(a.fallbacks, 1);
    }

    #[test]
    fn grid_errors() {
        let m = one_element(Vec3::zeros(), Vec3::repeat(1.0));
        let g = grid([2, 2, 2], Vec3::repeat(1.0), vec![f64::NAN; 8]);
        assert_eq!(assign_nearest_neighbor(&m, &g, Execution::Sequential).unwrap_err(), TransferError::AllInvalid);
        assert_eq!(assign_volume_weighted(&m, &g, &TransferOptions::default()).unwrap_err(), TransferError::AllInvalid);
        let far = one_element(Vec3::repeat(100.0), Vec3::repeat(1.0));
        let g = grid([2, 2, 2], Vec3::repeat(1.0), vec![1.0; 8]);
        assert_eq!(assign_volume_weighted(&far, &g, &TransferOptions::default()).unwrap_err(), TransferError::NoCoverage);
    }

    #[test]
    fn weighted_inside_one_voxel() {
        let g = grid([3, 3, 3], Vec3::repeat(2.0), vec![40.0; 27]);
        let m = one_element(Vec3::new(1.2, 1.3, 1.1), Vec3::new(1.0, 0.5, 0.7));
        let a = assign_volume_weighted(&m, &g, &TransferOptions::default()).unwrap();
        assert_eq!(a.field.values, vec![40.0]);
        assert!((a.field.coverage[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn weighted_half_and_quarter_splits() {
        // voxels along x: index 0 spans [-0.5, 0.5], index 1 spans [0.5, 1.5]
        let g = grid([2, 1, 1], Vec3::repeat(1.0), vec![30.0, 50.0]);
        let m = one_element(Vec3::new(0.0, -0.5, -0.5), Vec3::repeat(1.0));
        let a = assign_volume_weighted(&m, &g, &TransferOptions::default()).unwrap();
        assert!((a.field.values[0] - 40.0).abs() < 1e-12);

        let g = grid([2, 1, 1], Vec3::repeat(1.0), vec![20.0, 60.0]);
        let m = one_element(Vec3::new(0.25, -0.5, -0.5), Vec3::repeat(1.0));
        let a = assign_volume_weighted(&m, &g, &TransferOptions::default()).unwrap();
        let f = overlap_fractions(&m, &g, 0).unwrap();
        assert!((f[0].fraction - 0.25).abs() < 1e-14 && (f[1].fraction - 0.75).abs() < 1e-14);
        assert!((a.field.values[0] - (0.25 * 20.0 + 0.75 * 60.0)).abs() < 1e-12);
    }

    #[test]
    fn invalid_voxels_are_renormalised_and_floor_triggers_fallback() {
        let g = grid([2, 1, 1], Vec3::repeat(1.0), vec![f64::NAN, 60.0]);
        let m = one_element(Vec3::new(0.25, -0.5, -0.5), Vec3::repeat(1.0));
        let a = assign_volume_weighted(&m, &g, &TransferOptions::default()).unwrap();
        assert!((a.field.values[0] - 60.0).abs() < 1e-12);
        assert!((a.field.coverage[0] - 0.75).abs() < 1e-12);
        let strict = TransferOptions { coverage_floor: 0.8, ..Default::default() };
        let b = assign_volume_weighted(&m, &g, &strict).unwrap();
        assert_eq!(b.fallbacks, 1);
        assert_eq!(b.field.values[0], 60.0);
    }

    #[test]
    fn inverted_hex_rejected() {
        let mut c = one_element(Vec3::zeros(), Vec3::repeat(1.0)).corners(0);
        c.swap(0, 1);
        let b = Aabb::new(Vec3::zeros(), Vec3::repeat(1.0));
        assert_eq!(hex_box_overlap_volume(&c, &b), Err(TransferError::InvertedHex));
    }

    fn noisy_grid(rng: &mut ChaCha8Rng, dims: [usize; 3], spacing: Vec3) -> VoxelGrid {
        let n = dims.iter().product();
        let vals = (0..n).map(|_| rng.random_range(15.0..75.0)).collect();
        VoxelGrid::axis_aligned(dims, spacing, Vec3::new(-1.0, -2.0, -3.0), vals, Unit::Ms).unwrap()
    }

    fn jittered_block(rng: &mut ChaCha8Rng) -> HexMesh {
        let mut m = HexMesh::block([3, 3, 2], Vec3::new(0.3, -0.4, 0.2), Vec3::new(3.0, 2.7, 2.2), Part::FemoralCartilage);
        for p in m.nodes_mut() {
            *p += Vec3::from_fn(|_, _| rng.random_range(-0.15..0.15));
        }
        m
    }

    #[test]
    fn parallel_and_sequential_identical() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let g = noisy_grid(&mut rng, [20, 20, 8], Vec3::new(0.3125, 0.3125, 0.9));
        let m = jittered_block(&mut rng);
        let seq = assign_volume_weighted(&m, &g, &TransferOptions { execution: Execution::Sequential, ..Default::default() }).unwrap();
        let par = assign_volume_weighted(&m, &g, &TransferOptions::default()).unwrap();
        assert_eq!(seq, par);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn constant_grid_reproduces_constant(seed in 0u64..10_000, c in 1.0f64..100.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let g = grid([16, 16, 8], Vec3::new(0.4, 0.35, 0.8), vec![c; 16 * 16 * 8]);
            let m = jittered_block(&mut rng);
            let a = assign_volume_weighted(&m, &g, &TransferOptions::default()).unwrap();
            for v in &a.field.values {
                prop_assert!((v - c).abs() <= 1e-12 * c);
            }
        }

        #[test]
        fn weighted_value_is_convex_combination(seed in 0u64..10_000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let g = noisy_grid(&mut rng, [16, 16, 8], Vec3::new(0.4, 0.35, 0.8));
            let m = jittered_block(&mut rng);
            let a = assign_volume_weighted(&m, &g, &TransferOptions::default()).unwrap();
            for e in 0..m.element_count() {
                let ov = overlap_fractions(&m, &g, e).unwrap();
                let (lo, hi) = ov.iter().fold((f64::MAX, f64::MIN), |(l, h), o| {
                    let v = g.values()[o.voxel];
                    (l.min(v), h.max(v))
                });
                prop_assert!(a.field.values[e] >= lo - 1e-12 && a.field.values[e] <= hi + 1e-12);
                let total: f64 = ov.iter().map(|o| o.fraction).sum();
                prop_assert!((total - 1.0).abs() <= 1e-9);
            }
        }

        #[test]
        fn joint_rigid_motion_leaves_assignment_unchanged(seed in 0u64..10_000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let g = noisy_grid(&mut rng, [16, 16, 8], Vec3::new(0.4, 0.35, 0.8));
            let m = jittered_block(&mut rng);
            let axis = Vec3::from_fn(|_, _| rng.random_range(-1.0..1.0)) + Vec3::new(0.0, 0.0, 0.05);
            let pose = RigidTransform::from_axis_angle(axis, rng.random_range(-3.0..3.0),
                                                       Vec3::from_fn(|_, _| rng.random_range(-20.0..20.0)));
            let opts = TransferOptions::default();
            let w0 = assign_volume_weighted(&m, &g, &opts).unwrap();
            let w1 = assign_volume_weighted(&m.apply_pose(&pose), &g.apply_pose(&pose), &opts).unwrap();
            let n0 = assign_nearest_neighbor(&m, &g, Execution::Parallel).unwrap();
            let n1 = assign_nearest_neighbor(&m.apply_pose(&pose), &g.apply_pose(&pose), Execution::Parallel).unwrap();
            for e in 0..m.element_count() {
                prop_assert!((w0.field.values[e] - w1.field.values[e]).abs() <= 1e-9);
                prop_assert!((n0.field.values[e] - n1.field.values[e]).abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn out_of_range_element_id() {
        let g = grid([2, 2, 2], Vec3::repeat(1.0), vec![1.0; 8]);
        let m = HexMesh::new(vec![], vec![], vec![], BTreeMap::new()).unwrap();
        assert!(matches!(overlap_fractions(&m, &g, 0), Err(TransferError::Mesh(MeshError::BadElement(0)))));
    }
}
