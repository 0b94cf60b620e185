//! On-disk formats.
//!
//! Every writer is deterministic: maps are ordered, floats are printed with
//! the shortest representation that round-trips, and nothing records a
//! timestamp. Errors always name the offending file.

mod field;
mod mesh;
mod model;
mod report;
mod volume;

pub use field::{read_field, write_field, write_key_values};
pub use mesh::{mesh_from_text, read_mesh, write_mesh, MeshFile};
pub use model::{
    read_model_file, FixedSpec, LoadSpec, MaterialSpec, ModelFile, NodeRef, PartConstants, PrescribedSpec,
    SpringSpec,
};
pub use report::{write_report, write_solution};
pub use volume::{raw_path, read_echo_series, read_volume, write_volume, VolumeHeader};

use serde::de::DeserializeOwned;
use serde::Serialize;
use std::fmt::Display;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{}: {msg}", path.display())]
    Format { path: PathBuf, msg: String },
}

impl IoError {
    pub fn path(&self) -> &Path {
        match self {
            IoError::Io { path, .. } | IoError::Format { path, .. } => path,
        }
    }

    /// Whether the file was missing rather than malformed.
    pub fn is_not_found(&self) -> bool {
        matches!(self, IoError::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound)
    }

    pub(crate) fn format(path: &Path, msg: impl Display) -> Self {
        IoError::Format { path: path.to_path_buf(), msg: msg.to_string() }
    }

    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        IoError::Io { path: path.to_path_buf(), source }
    }
}

pub(crate) fn read_bytes(path: &Path) -> Result<Vec<u8>, IoError> {
    std::fs::read(path).map_err(|e| IoError::io(path, e))
}

pub(crate) fn write_bytes(path: &Path, bytes: &[u8]) -> Result<(), IoError> {
    std::fs::write(path, bytes).map_err(|e| IoError::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, IoError> {
    let bytes = read_bytes(path)?;
    serde_json::from_slice(&bytes).map_err(|e| IoError::format(path, e))
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<(), IoError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| IoError::format(path, e))?;
    text.push('\n');
    write_bytes(path, text.as_bytes())
}

pub fn read_relation(path: &Path) -> Result<crate::material::LinearRelation, IoError> {
    let r: crate::material::LinearRelation = read_json(path)?;
    r.validate().map_err(|e| IoError::format(path, e))?;
    Ok(r)
}

pub fn write_relation(path: &Path, relation: &crate::material::LinearRelation) -> Result<(), IoError> {
    write_json(path, relation)
}

/// Resolves `p` against the directory holding `anchor` unless it is absolute.
pub fn resolve_relative(anchor: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        anchor.parent().unwrap_or(Path::new("")).join(p)
    }
}

/// Shortest round-trip decimal; non-finite values print as `NaN`, `inf`, `-inf`.
pub(crate) fn fmt_f64(v: f64) -> String {
    format!("{v}")
}
