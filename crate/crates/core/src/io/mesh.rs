//! Mesh JSON and the whitespace text listing.

use super::{read_bytes, read_json, write_json, IoError};
use crate::mesh::{HexMesh, MeshError, Part};
use crate::Vec3;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshFile {
    pub nodes: Vec<[f64; 3]>,
    pub elements: Vec<[usize; 8]>,
    /// Empty means every element is `other`.
    #[serde(default)]
    pub parts: Vec<Part>,
    #[serde(default)]
    pub node_sets: BTreeMap<String, Vec<usize>>,
}

impl MeshFile {
    pub fn into_mesh(self) -> Result<HexMesh, MeshError> {
        let parts = if self.parts.is_empty() { vec![Part::Other; self.elements.len()] } else { self.parts };
        HexMesh::new(self.nodes.into_iter().map(Vec3::from).collect(), self.elements, parts, self.node_sets)
    }

    pub fn from_mesh(mesh: &HexMesh) -> Self {
        Self {
            nodes: mesh.nodes().iter().map(|&p| p.into()).collect(),
            elements: mesh.elements().to_vec(),
            parts: mesh.parts().to_vec(),
            node_sets: mesh.node_sets().clone(),
        }
    }
}

/// Reads a `.json` mesh; any other extension is parsed as a text listing.
pub fn read_mesh(path: &Path) -> Result<HexMesh, IoError> {
    if path.extension().is_some_and(|e| e == "json") {
        let f: MeshFile = read_json(path)?;
        f.into_mesh().map_err(|e| IoError::format(path, e))
    } else {
        let bytes = read_bytes(path)?;
        let text = String::from_utf8(bytes).map_err(|e| IoError::format(path, e))?;
        mesh_from_text(&text).map_err(|e| IoError::format(path, e))
    }
}

pub fn write_mesh(path: &Path, mesh: &HexMesh) -> Result<(), IoError> {
    write_json(path, &MeshFile::from_mesh(mesh))
}

/// Parses a line-oriented listing. Ids are implicit and 0-based in order of
/// appearance; `#` starts a comment.
///
/// ```text
/// node x y z
/// element n0 n1 n2 n3 n4 n5 n6 n7 [part-label]
/// set name id id …
/// ```
pub fn mesh_from_text(text: &str) -> Result<HexMesh, MeshError> {
    let mut nodes = Vec::new();
    let mut elements = Vec::new();
    let mut parts = Vec::new();
    let mut sets: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let err = |msg: String| MeshError::Parse { line, msg };
        let content = raw.split('#').next().unwrap_or("");
        let mut tok = content.split_whitespace();
        let Some(kind) = tok.next() else { continue };
        let rest: Vec<&str> = tok.collect();
        match kind {
            "node" => {
                if rest.len() != 3 {
                    return Err(err(format!("node needs 3 coordinates, got {}", rest.len())));
                }
                let mut p = [0.0; 3];
                for (slot, t) in p.iter_mut().zip(&rest) {
                    *slot = t.parse().map_err(|_| err(format!("bad coordinate '{t}'")))?;
                }
                nodes.push(Vec3::from(p));
            }
            "element" => {
                if rest.len() != 8 && rest.len() != 9 {
                    return Err(err(format!("element needs 8 node ids and an optional part, got {} fields", rest.len())));
                }
                let mut conn = [0usize; 8];
                for (slot, t) in conn.iter_mut().zip(&rest) {
                    *slot = t.parse().map_err(|_| err(format!("bad node id '{t}'")))?;
                }
                let part = match rest.get(8) {
                    Some(l) => Part::from_label(l).ok_or_else(|| err(format!("unknown part '{l}'")))?,
                    None => Part::Other,
                };
                elements.push(conn);
                parts.push(part);
            }
            "set" => {
                let Some((name, ids)) = rest.split_first() else {
                    return Err(err("set needs a name".into()));
                };
                let entry = sets.entry(name.to_string()).or_default();
                for t in ids {
                    entry.push(t.parse().map_err(|_| err(format!("bad node id '{t}'")))?);
                }
            }
            other => return Err(err(format!("unknown record '{other}'"))),
        }
    }
    HexMesh::new(nodes, elements, parts, sets)
}
