//! Deterministic synthetic inputs.
//!
//! The demo slab is a 12×12×3 block of tibial-cartilage hexes (1.5×1.5×1 mm)
//! under a noisy T₂ raster whose mean rises linearly from 15 ms to 75 ms along
//! x. The bottom face is fixed and the top face is pushed down by 10% of the
//! thickness through a gait-like table curve. A larger curved sheet paired
//! with a 384×384×40 raster matches clinical element and voxel counts.

use crate::fem::{Boundary, FEModel, FixedBc, LoadCurve, PrescribedDisplacement, StepSchedule};
use crate::io::{FixedSpec, MaterialSpec, ModelFile, NodeRef, PrescribedSpec};
use crate::material::{ElasticConstants, LinearRelation, CARTILAGE_POISSON};
use crate::mesh::{HexMesh, Part};
use crate::raster::{EchoSeries, Unit, VoxelGrid};
use crate::Vec3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use std::collections::BTreeMap;

pub const DEMO_SEED: u64 = 20_240_601;
pub const DEMO_ELEMENTS: [usize; 3] = [12, 12, 3];
pub const DEMO_ELEMENT_SIZE_MM: [f64; 3] = [1.5, 1.5, 1.0];
/// Top-face displacement, 10% of the slab thickness.
pub const DEMO_COMPRESSION_MM: f64 = -0.3;
pub const DEMO_VOXEL_MM: [f64; 3] = [0.3125, 0.3125, 0.75];
pub const DEMO_T2_RANGE_MS: (f64, f64) = (15.0, 75.0);
pub const DEMO_NOISE_SD_MS: f64 = 6.0;
/// Share of voxels marked invalid.
pub const DEMO_INVALID_FRACTION: f64 = 0.005;
pub const DEMO_ECHO_TIMES_MS: [f64; 6] = [10.0, 20.0, 30.0, 40.0, 50.0, 60.0];
pub const DEMO_S0: f64 = 1000.0;

pub const LARGE_GRID_DIMS: [usize; 3] = [384, 384, 40];
pub const LARGE_GRID_SPACING_MM: [f64; 3] = [0.3125, 0.3125, 3.48];

fn demo_extent() -> Vec3 {
    Vec3::from_fn(|a, _| DEMO_ELEMENTS[a] as f64 * DEMO_ELEMENT_SIZE_MM[a])
}

pub fn demo_mesh() -> HexMesh {
    HexMesh::block(DEMO_ELEMENTS, Vec3::zeros(), demo_extent(), Part::TibialCartilage)
}

/// Noise-free mean T₂ at a point of the slab.
pub fn demo_t2_trend(p: &Vec3) -> f64 {
    let (lo, hi) = DEMO_T2_RANGE_MS;
    let s = (p.x / demo_extent().x).clamp(0.0, 1.0);
    lo + (hi - lo) * s
}

/// Noisy T₂ raster (ms) covering the slab with a margin; voxel boundaries
/// are deliberately offset from element boundaries.
pub fn demo_t2_grid(seed: u64) -> VoxelGrid {
    let ext = demo_extent();
    let h = Vec3::from(DEMO_VOXEL_MM);
    let origin = Vec3::new(-0.4, -0.4, -0.3);
    let dims: [usize; 3] = std::array::from_fn(|a| ((ext[a] + 0.8) / h[a]).ceil() as usize + 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, DEMO_NOISE_SD_MS).expect("positive sd");
    let (lo, hi) = DEMO_T2_RANGE_MS;
    let mut values = Vec::with_capacity(dims.iter().product());
    for k in 0..dims[2] {
        for j in 0..dims[1] {
            for i in 0..dims[0] {
                let p = origin + Vec3::new(i as f64, j as f64, k as f64).component_mul(&h);
                let v = (demo_t2_trend(&p) + noise.sample(&mut rng)).clamp(0.5 * lo, 1.5 * hi);
                let invalid = rng.random::<f64>() < DEMO_INVALID_FRACTION;
                values.push(if invalid { f64::NAN } else { v });
            }
        }
    }
    VoxelGrid::axis_aligned(dims, h, origin, values, Unit::Ms).expect("demo grid is valid")
}

/// Noise-free multi-echo magnitudes `S0·exp(−TE/T2)` for every valid voxel
/// of `t2`; invalid voxels get a zero signal.
pub fn echo_series_from_t2(t2: &VoxelGrid, echo_times: &[f64], s0: f64) -> EchoSeries {
    let grids = echo_times
        .iter()
        .map(|&te| {
            let v = t2.values().iter().map(|&t| if t.is_finite() { s0 * (-te / t).exp() } else { 0.0 }).collect();
            t2.with_values(v, Unit::ArbitrarySignal).expect("same geometry")
        })
        .collect();
    EchoSeries::new(echo_times.to_vec(), grids).expect("valid echo series")
}

pub fn demo_schedule() -> StepSchedule {
    let markers = BTreeMap::from([
        ("heel-strike".to_string(), 0.1),
        ("midstance".to_string(), 0.5),
        ("heel-off".to_string(), 0.9),
    ]);
    StepSchedule::new(vec![0.05, 0.1, 0.5, 0.9], markers).expect("demo schedule is valid")
}

/// Compression scale over pseudo-time: half at heel strike, full at heel off.
pub fn demo_curve() -> LoadCurve {
    LoadCurve::Table { points: vec![[0.0, 0.0], [0.1, 0.5], [0.5, 0.75], [0.9, 1.0], [1.0, 1.0]] }
}

/// The demo model file, referencing `mesh.json` beside it.
pub fn demo_model_file() -> ModelFile {
    ModelFile {
        mesh: "mesh.json".into(),
        modulus_field: None,
        materials: MaterialSpec::default(),
        fixed: vec![FixedSpec { nodes: NodeRef::Set("zmin".into()), components: [true; 3] }],
        prescribed: vec![PrescribedSpec {
            nodes: NodeRef::Set("zmax".into()),
            component: 2,
            value_mm: DEMO_COMPRESSION_MM,
            curve: demo_curve(),
        }],
        loads: Vec::new(),
        springs: Vec::new(),
        steps: demo_schedule(),
    }
}

/// Demo model with cartilage moduli from `t2` (one value per element).
pub fn demo_model(t2: &[f64], relation: &LinearRelation) -> FEModel {
    let mesh = demo_mesh();
    let materials =
        t2.iter().map(|&t| ElasticConstants::new(relation.e_d_from_t2(t), CARTILAGE_POISSON).expect("valid")).collect();
    let boundary = Boundary {
        fixed: vec![FixedBc { nodes: mesh.node_set("zmin").expect("block set").to_vec(), components: [true; 3] }],
        prescribed: vec![PrescribedDisplacement {
            nodes: mesh.node_set("zmax").expect("block set").to_vec(),
            component: 2,
            value_mm: DEMO_COMPRESSION_MM,
            curve: demo_curve(),
        }],
        ..Boundary::default()
    };
    FEModel::new(mesh, materials, boundary, demo_schedule()).expect("demo model is valid")
}

/// Gently curved cartilage-like sheet of `n[0]·n[1]·n[2]` hexes, 2×2 mm in
/// plane and 3 mm thick, placed inside the large raster's field of view.
pub fn cartilage_sheet(n: [usize; 3]) -> HexMesh {
    let size = Vec3::new(2.0 * n[0] as f64, 2.0 * n[1] as f64, 3.0);
    let mut mesh = HexMesh::block(n, Vec3::zeros(), size, Part::FemoralCartilage);
    let centre = Vec3::new(60.0 - 0.5 * size.x, 60.0 - 0.5 * size.y, 60.0);
    for p in mesh.nodes_mut() {
        let bulge = 6.0 * (std::f64::consts::PI * p.x / size.x).sin() * (std::f64::consts::PI * p.y / size.y).sin();
        *p = centre + Vec3::new(p.x, p.y, p.z + bulge);
    }
    mesh
}

/// 384×384×40 raster at clinical spacing with a smooth T₂ pattern plus noise.
pub fn large_t2_grid(seed: u64) -> VoxelGrid {
    let [nx, ny, nz] = LARGE_GRID_DIMS;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = Vec::with_capacity(nx * ny * nz);
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                let trend = 45.0 + 20.0 * ((i as f64) / 40.0).sin() * ((j as f64) / 55.0).cos() + (k as f64) * 0.25;
                values.push(trend + rng.random_range(-5.0..5.0));
            }
        }
    }
    VoxelGrid::axis_aligned(LARGE_GRID_DIMS, Vec3::from(LARGE_GRID_SPACING_MM), Vec3::zeros(), values, Unit::Ms)
        .expect("large grid is valid")
}
