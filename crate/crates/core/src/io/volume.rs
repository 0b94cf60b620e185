//! Volume header (JSON) plus sibling raw file of little-endian `f32`.

use super::{read_bytes, read_json, write_bytes, write_json, IoError};
use crate::raster::{EchoSeries, Unit, VoxelGrid};
use crate::{Mat3, Vec3};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VolumeHeader {
    pub dims: [usize; 3],
    pub spacing_mm: [f64; 3],
    pub origin_mm: [f64; 3],
    /// Row-major 3×3; columns are the world axes of the index axes.
    pub direction: [f64; 9],
    pub unit: Unit,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub echo_time_ms: Option<f64>,
}

/// `scan.json` → `scan.raw`.
pub fn raw_path(header: &Path) -> PathBuf {
    header.with_extension("raw")
}

pub fn read_volume(path: &Path) -> Result<(VoxelGrid, Option<f64>), IoError> {
    let h: VolumeHeader = read_json(path)?;
    let raw = raw_path(path);
    let bytes = read_bytes(&raw)?;
    let n: usize = h.dims.iter().product();
    if bytes.len() != 4 * n {
        return Err(IoError::format(&raw, format!("expected {} bytes for dims {:?}, found {}", 4 * n, h.dims, bytes.len())));
    }
    let values = bytes
        .chunks_exact(4)
        .map(|c| f64::from(f32::from_le_bytes([c[0], c[1], c[2], c[3]])))
        .collect();
    let direction = Mat3::from_row_slice(&h.direction);
    let grid = VoxelGrid::new(h.dims, Vec3::from(h.spacing_mm), Vec3::from(h.origin_mm), direction, values, h.unit)
        .map_err(|e| IoError::format(path, e))?;
    Ok((grid, h.echo_time_ms))
}

/// Values are narrowed to `f32`; invalid voxels are written as quiet NaN.
pub fn write_volume(path: &Path, grid: &VoxelGrid, echo_time_ms: Option<f64>) -> Result<(), IoError> {
    let d = grid.direction();
    let header = VolumeHeader {
        dims: grid.dims(),
        spacing_mm: grid.spacing().into(),
        origin_mm: grid.origin().into(),
        direction: std::array::from_fn(|i| d[(i / 3, i % 3)]),
        unit: grid.unit(),
        echo_time_ms,
    };
    let mut bytes = Vec::with_capacity(4 * grid.len());
    for &v in grid.values() {
        let x = if v.is_finite() { v as f32 } else { f32::NAN };
        bytes.extend_from_slice(&x.to_le_bytes());
    }
    write_json(path, &header)?;
    write_bytes(&raw_path(path), &bytes)
}

/// Each header must carry `echo_time_ms`; files are taken in the given order.
pub fn read_echo_series(paths: &[PathBuf]) -> Result<EchoSeries, IoError> {
    let mut times = Vec::with_capacity(paths.len());
    let mut grids = Vec::with_capacity(paths.len());
    for p in paths {
        let (g, te) = read_volume(p)?;
        times.push(te.ok_or_else(|| IoError::format(p, "echo volume header lacks echo_time_ms"))?);
        grids.push(g);
    }
    let anchor = paths.first().map(PathBuf::as_path).unwrap_or(Path::new("<echo series>"));
    EchoSeries::new(times, grids).map_err(|e| IoError::format(anchor, e))
}
