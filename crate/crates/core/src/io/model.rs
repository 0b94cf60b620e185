//! Model file: mesh reference, optional modulus field, per-part constants,
//! boundary tables and steps. Node lists may name a node set of the mesh.

use super::{read_field, read_json, read_mesh, resolve_relative, IoError};
use crate::fem::{Boundary, FEModel, FixedBc, LoadCurve, NodalLoad, PrescribedDisplacement, Spring, StepSchedule};
use crate::material::{ElasticConstants, LinearRelation, CARTILAGE_POISSON, MENISCUS_POISSON, MENISCUS_YOUNG_PA};
use crate::mesh::{HexMesh, Part};
use crate::transfer::{ElementField, FieldUnit};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

/// Explicit node ids or the name of a mesh node set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum NodeRef {
    Set(String),
    Ids(Vec<usize>),
}

impl NodeRef {
    fn resolve(&self, mesh: &HexMesh) -> Result<Vec<usize>, String> {
        match self {
            NodeRef::Ids(ids) => Ok(ids.clone()),
            NodeRef::Set(name) => {
                mesh.node_set(name).map(<[usize]>::to_vec).ok_or_else(|| format!("unknown node set '{name}'"))
            }
        }
    }
}

fn all_components() -> [bool; 3] {
    [true; 3]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FixedSpec {
    pub nodes: NodeRef,
    #[serde(default = "all_components")]
    pub components: [bool; 3],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PrescribedSpec {
    pub nodes: NodeRef,
    pub component: usize,
    pub value_mm: f64,
    #[serde(default)]
    pub curve: LoadCurve,
}

/// `force_n` is applied to each listed node.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoadSpec {
    pub nodes: NodeRef,
    pub force_n: [f64; 3],
    #[serde(default)]
    pub curve: LoadCurve,
}

/// One grounded spring per listed node.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpringSpec {
    pub nodes: NodeRef,
    pub stiffness_n_per_mm: f64,
    #[serde(default)]
    pub direction: Option<[f64; 3]>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartConstants {
    pub young_pa: f64,
    pub poisson: f64,
}

/// Cartilage moduli come from the modulus field (or a T₂ relation) with
/// ν = 0.45; the other parts are homogeneous.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MaterialSpec {
    pub meniscus: PartConstants,
    pub other: PartConstants,
}

impl Default for MaterialSpec {
    fn default() -> Self {
        Self {
            meniscus: PartConstants { young_pa: MENISCUS_YOUNG_PA, poisson: MENISCUS_POISSON },
            other: PartConstants { young_pa: MENISCUS_YOUNG_PA, poisson: MENISCUS_POISSON },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    /// Relative paths resolve against the model file's directory.
    pub mesh: PathBuf,
    /// Element modulus CSV in Pa; required by `build` but not by studies.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub modulus_field: Option<PathBuf>,
    #[serde(default)]
    pub materials: MaterialSpec,
    #[serde(default)]
    pub fixed: Vec<FixedSpec>,
    #[serde(default)]
    pub prescribed: Vec<PrescribedSpec>,
    #[serde(default)]
    pub loads: Vec<LoadSpec>,
    #[serde(default)]
    pub springs: Vec<SpringSpec>,
    pub steps: StepSchedule,
}

pub fn read_model_file(path: &Path) -> Result<ModelFile, IoError> {
    read_json(path)
}

impl ModelFile {
    pub fn mesh_path(&self, model_path: &Path) -> PathBuf {
        resolve_relative(model_path, &self.mesh)
    }

    pub fn modulus_path(&self, model_path: &Path) -> Option<PathBuf> {
        self.modulus_field.as_deref().map(|p| resolve_relative(model_path, p))
    }

    pub fn boundary(&self, mesh: &HexMesh) -> Result<Boundary, String> {
        let mut b = Boundary::default();
        for f in &self.fixed {
            b.fixed.push(FixedBc { nodes: f.nodes.resolve(mesh)?, components: f.components });
        }
        for p in &self.prescribed {
            b.prescribed.push(PrescribedDisplacement {
                nodes: p.nodes.resolve(mesh)?,
                component: p.component,
                value_mm: p.value_mm,
                curve: p.curve.clone(),
            });
        }
        for l in &self.loads {
            b.loads.push(NodalLoad { nodes: l.nodes.resolve(mesh)?, force_n: l.force_n, curve: l.curve.clone() });
        }
        for s in &self.springs {
            for node in s.nodes.resolve(mesh)? {
                b.springs.push(Spring { node, stiffness_n_per_mm: s.stiffness_n_per_mm, direction: s.direction });
            }
        }
        Ok(b)
    }

    /// Per-element constants. Without a modulus field cartilage takes the
    /// relation's value at its midpoint T₂ as a placeholder.
    pub fn materials(&self, mesh: &HexMesh, modulus: Option<&ElementField>) -> Result<Vec<ElasticConstants>, String> {
        if let Some(f) = modulus {
            if f.len() != mesh.element_count() {
                return Err(format!("modulus field has {} values for {} elements", f.len(), mesh.element_count()));
            }
        }
        let base = LinearRelation::baseline();
        let placeholder = base.e_d_from_t2(base.midpoint_t2());
        let m = &self.materials;
        let cst = |c: PartConstants| ElasticConstants::new(c.young_pa, c.poisson).map_err(|e| e.to_string());
        mesh.parts()
            .iter()
            .enumerate()
            .map(|(e, part)| match part {
                Part::FemoralCartilage | Part::TibialCartilage => {
                    let young = modulus.map_or(placeholder, |f| f.values[e]);
                    ElasticConstants::new(young, CARTILAGE_POISSON).map_err(|err| format!("element {e}: {err}"))
                }
                Part::Meniscus => cst(m.meniscus),
                Part::Other => cst(m.other),
            })
            .collect()
    }

    /// Reads the mesh and, when `with_modulus`, the modulus field, and
    /// assembles a validated model.
    pub fn build(&self, model_path: &Path, with_modulus: bool) -> Result<FEModel, IoError> {
        let mesh = read_mesh(&self.mesh_path(model_path))?;
        let modulus = match (with_modulus, self.modulus_path(model_path)) {
            (false, _) => None,
            (true, Some(p)) => Some(read_field(&p, FieldUnit::Pa)?),
            (true, None) => return Err(IoError::format(model_path, "model has no modulus_field")),
        };
        let fail = |msg: String| IoError::format(model_path, msg);
        let materials = self.materials(&mesh, modulus.as_ref()).map_err(fail)?;
        let boundary = self.boundary(&mesh).map_err(fail)?;
        FEModel::new(mesh, materials, boundary, self.steps.clone()).map_err(|e| fail(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::{write_field, write_json, write_mesh};
    use crate::Vec3;

    fn model_json(extra: &str) -> String {
        format!(
            r#"{{
                "mesh": "m.json",
                "modulus_field": "e.csv",
                "fixed": [{{"nodes": "zmin"}}],
                "prescribed": [{{"nodes": "zmax", "component": 2, "value_mm": -0.1}}]{extra},
                "steps": {{"times": [0.5, 1.0], "markers": {{"end": 1.0}}}}
            }}"#
        )
    }

    #[test]
    fn builds_a_model_from_named_sets() {
        let dir = tempfile::tempdir().unwrap();
        let mesh = HexMesh::block([2, 2, 1], Vec3::zeros(), Vec3::new(2.0, 2.0, 1.0), Part::TibialCartilage);
        write_mesh(&dir.path().join("m.json"), &mesh).unwrap();
        write_field(&dir.path().join("e.csv"), &ElementField::derived(vec![4.0e6; 4], FieldUnit::Pa)).unwrap();
        let path = dir.path().join("model.json");
        std::fs::write(&path, model_json("")).unwrap();
        let file = read_model_file(&path).unwrap();
        let model = file.build(&path, true).unwrap();
        assert_eq!(model.boundary.fixed[0].nodes, mesh.node_set("zmin").unwrap());
        assert_eq!(model.materials[0].young, 4.0e6);
        assert_eq!(model.materials[0].poisson, CARTILAGE_POISSON);
        assert_eq!(model.schedule.times(), &[0.1, 0.5, 1.0]);

        // serialization round trip
        write_json(&path, &file).unwrap();
        assert_eq!(read_model_file(&path).unwrap(), file);
    }

    #[test]
    fn unknown_set_and_missing_mesh_are_reported() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        std::fs::write(&path, model_json("")).unwrap();
        let err = read_model_file(&path).unwrap().build(&path, true).unwrap_err();
        assert!(err.is_not_found() && err.path().ends_with("m.json"), "{err}");

        let mesh = HexMesh::block([1, 1, 1], Vec3::zeros(), Vec3::repeat(1.0), Part::Other);
        write_mesh(&dir.path().join("m.json"), &mesh).unwrap();
        std::fs::write(&path, model_json(r#", "loads": [{"nodes": "top", "force_n": [0, 0, 1]}]"#)).unwrap();
        let err = read_model_file(&path).unwrap().build(&path, false).unwrap_err();
        assert!(err.to_string().contains("unknown node set 'top'"), "{err}");
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        std::fs::write(&path, model_json(r#", "sprngs": []"#)).unwrap();
        assert!(read_model_file(&path).is_err());
    }
}
