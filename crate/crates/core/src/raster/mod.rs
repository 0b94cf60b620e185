//! Oriented raster volumes.
//!
//! A [`VoxelGrid`] follows the usual medical-imaging pose convention:
//!
//! ```text
//! world = origin + direction · diag(spacing) · index
//! ```
//!
//! `origin` is the centre of voxel (0,0,0) and the columns of `direction` are
//! the world axes of the three index axes. Values are stored x-fastest and a
//! non-finite value marks an invalid voxel.

mod diffusion;
mod fit;

pub use diffusion::{smooth_anisotropic_diffusion, DiffusionParams};
pub use fit::{fit_t2, FitOptions, T2Fit};

use crate::{Mat3, Vec3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum RasterError {
    #[error("dims {0:?} must all be positive")]
    EmptyDims([usize; 3]),
    #[error("spacing {0:?} must be strictly positive")]
    BadSpacing([f64; 3]),
    #[error("direction matrix is not orthonormal (|det| = {0})")]
    BadDirection(f64),
    #[error("value count {got} does not match dims product {expected}")]
    ValueCount { expected: usize, got: usize },
    #[error("echo grids do not share geometry (echo {0})")]
    GeometryMismatch(usize),
    #[error("need at least 3 usable echoes, got {0}")]
    TooFewEchoes(usize),
    #[error("echo times must be strictly increasing")]
    EchoTimesNotIncreasing,
    #[error("echo count {times} does not match grid count {grids}")]
    EchoCount { times: usize, grids: usize },
    #[error("invalid diffusion parameter: {0}")]
    DiffusionParam(String),
}

/// Physical meaning of grid values.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Unit {
    #[default]
    Ms,
    ArbitrarySignal,
}

#[derive(Clone, Debug, PartialEq)]
pub struct VoxelGrid {
    dims: [usize; 3],
    spacing: Vec3,
    origin: Vec3,
    direction: Mat3,
    values: Vec<f64>,
    unit: Unit,
}

/// Result of mapping a world point onto the grid.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct IndexLookup {
    pub index: [i64; 3],
    pub in_bounds: bool,
}

pub(crate) fn check_direction(direction: &Mat3) -> Result<(), f64> {
    let det = direction.determinant();
    let gram = direction.transpose() * direction;
    if (det.abs() - 1.0).abs() > 1e-9 || (gram - Mat3::identity()).abs().max() > 1e-9 {
        return Err(det);
    }
    Ok(())
}

impl VoxelGrid {
    pub fn new(
        dims: [usize; 3],
        spacing: Vec3,
        origin: Vec3,
        direction: Mat3,
        values: Vec<f64>,
        unit: Unit,
    ) -> Result<Self, RasterError> {
        if dims.contains(&0) {
            return Err(RasterError::EmptyDims(dims));
        }
        if spacing.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
            return Err(RasterError::BadSpacing([spacing.x, spacing.y, spacing.z]));
        }
        check_direction(&direction).map_err(RasterError::BadDirection)?;
        let expected = dims[0] * dims[1] * dims[2];
        if values.len() != expected {
            return Err(RasterError::ValueCount { expected, got: values.len() });
        }
        Ok(Self { dims, spacing, origin, direction, values, unit })
    }

    /// Axis-aligned grid with identity direction.
    pub fn axis_aligned(
        dims: [usize; 3],
        spacing: Vec3,
        origin: Vec3,
        values: Vec<f64>,
        unit: Unit,
    ) -> Result<Self, RasterError> {
        Self::new(dims, spacing, origin, Mat3::identity(), values, unit)
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }
    pub fn spacing(&self) -> Vec3 {
        self.spacing
    }
    pub fn origin(&self) -> Vec3 {
        self.origin
    }
    pub fn direction(&self) -> &Mat3 {
        &self.direction
    }
    pub fn values(&self) -> &[f64] {
        &self.values
    }
    pub fn unit(&self) -> Unit {
        self.unit
    }
    pub fn len(&self) -> usize {
        self.values.len()
    }
    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Same geometry, new values.
    pub fn with_values(&self, values: Vec<f64>, unit: Unit) -> Result<Self, RasterError> {
        Self::new(self.dims, self.spacing, self.origin, self.direction, values, unit)
    }

    pub(crate) fn set_pose(&mut self, origin: Vec3, direction: Mat3) {
        self.origin = origin;
        self.direction = direction;
    }

    pub fn same_geometry(&self, other: &VoxelGrid) -> bool {
        self.dims == other.dims
            && self.spacing == other.spacing
            && self.origin == other.origin
            && self.direction == other.direction
    }

    #[inline]
    pub fn linear_index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.dims[0] * (j + self.dims[1] * k)
    }

    #[inline]
    pub fn unravel(&self, lin: usize) -> [usize; 3] {
        let nx = self.dims[0];
        let ny = self.dims[1];
        [lin % nx, (lin / nx) % ny, lin / (nx * ny)]
    }

    #[inline]
    pub fn value(&self, i: usize, j: usize, k: usize) -> f64 {
        self.values[self.linear_index(i, j, k)]
    }

    #[inline]
    pub fn is_valid(&self, lin: usize) -> bool {
        self.values[lin].is_finite()
    }

    pub fn valid_count(&self) -> usize {
        self.values.iter().filter(|v| v.is_finite()).count()
    }

    pub fn in_bounds(&self, idx: [i64; 3]) -> bool {
        (0..3).all(|a| idx[a] >= 0 && (idx[a] as usize) < self.dims[a])
    }

    /// World position of a (possibly fractional) index.
    pub fn index_to_world(&self, idx: Vec3) -> Vec3 {
        self.origin + self.direction * idx.component_mul(&self.spacing)
    }

    /// Point expressed in the grid's own frame: millimetres along the index
    /// axes, measured from the centre of voxel (0,0,0).
    #[inline]
    pub fn to_grid_frame(&self, p: &Vec3) -> Vec3 {
        self.direction.tr_mul(&(p - self.origin))
    }

    pub fn continuous_index(&self, p: &Vec3) -> Vec3 {
        self.to_grid_frame(p).component_div(&self.spacing)
    }

    /// Nearest voxel index of a world point, ties rounded half up.
    pub fn world_to_index(&self, p: &Vec3) -> IndexLookup {
        let c = self.continuous_index(p);
        let index = [round_half_up(c.x), round_half_up(c.y), round_half_up(c.z)];
        IndexLookup { index, in_bounds: self.in_bounds(index) }
    }

    /// Nearest valid voxel centre to `p` by Euclidean distance, with its
    /// squared distance. Ties go to the lowest linear index.
    pub fn nearest_valid(&self, p: &Vec3) -> Option<(usize, f64)> {
        let local = self.to_grid_frame(p);
        let c = local.component_div(&self.spacing);
        let centre: [i64; 3] = std::array::from_fn(|a| {
            round_half_up(c[a]).clamp(0, self.dims[a] as i64 - 1)
        });
        let hmin = self.spacing.min();
        let max_radius = *self.dims.iter().max().unwrap() as i64;
        let mut best: Option<(usize, f64)> = None;
        for r in 0..=max_radius {
            if let Some((_, d2)) = best {
                let bound = (r as f64 - 0.5) * hmin;
                if bound > 0.0 && bound * bound > d2 {
                    break;
                }
            }
            let lo: [i64; 3] = std::array::from_fn(|a| (centre[a] - r).max(0));
            let hi: [i64; 3] =
                std::array::from_fn(|a| (centre[a] + r).min(self.dims[a] as i64 - 1));
            for k in lo[2]..=hi[2] {
                for j in lo[1]..=hi[1] {
                    for i in lo[0]..=hi[0] {
                        let shell = (i - centre[0])
                            .abs()
                            .max((j - centre[1]).abs())
                            .max((k - centre[2]).abs());
                        if shell != r {
                            continue;
                        }
                        let lin = self.linear_index(i as usize, j as usize, k as usize);
                        if !self.is_valid(lin) {
                            continue;
                        }
                        let v = Vec3::new(i as f64, j as f64, k as f64).component_mul(&self.spacing);
                        let d2 = (v - local).norm_squared();
                        let better = match best {
                            None => true,
                            Some((bl, bd)) => d2 < bd || (d2 == bd && lin < bl),
                        };
                        if better {
                            best = Some((lin, d2));
                        }
                    }
                }
            }
        }
        best
    }
}

#[inline]
pub(crate) fn round_half_up(x: f64) -> i64 {
    (x + 0.5).floor() as i64
}

/// Multi-echo acquisition sharing one geometry.
#[derive(Clone, Debug)]
pub struct EchoSeries {
    echo_times: Vec<f64>,
    grids: Vec<VoxelGrid>,
}

impl EchoSeries {
    pub fn new(echo_times: Vec<f64>, grids: Vec<VoxelGrid>) -> Result<Self, RasterError> {
        if echo_times.len() != grids.len() {
            return Err(RasterError::EchoCount { times: echo_times.len(), grids: grids.len() });
        }
        if echo_times.len() < 3 {
            return Err(RasterError::TooFewEchoes(echo_times.len()));
        }
        if echo_times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(RasterError::EchoTimesNotIncreasing);
        }
        for (n, g) in grids.iter().enumerate().skip(1) {
            if !g.same_geometry(&grids[0]) {
                return Err(RasterError::GeometryMismatch(n));
            }
        }
        Ok(Self { echo_times, grids })
    }

    pub fn echo_times(&self) -> &[f64] {
        &self.echo_times
    }
    pub fn grids(&self) -> &[VoxelGrid] {
        &self.grids
    }
}
