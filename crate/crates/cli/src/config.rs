//! Pipeline configuration. Relative paths resolve against the config file's
//! directory; command-line flags override the file.

use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use t2fe::io::resolve_relative;
use t2fe::material::LinearRelation;
use t2fe::raster::DiffusionParams;
use t2fe::sensitivity::StudyConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum MethodArg {
    Nn,
    Weighted,
}

impl MethodArg {
    pub fn label(self) -> &'static str {
        match self {
            MethodArg::Nn => "nn",
            MethodArg::Weighted => "weighted",
        }
    }

    pub fn other(self) -> Self {
        match self {
            MethodArg::Nn => MethodArg::Weighted,
            MethodArg::Weighted => MethodArg::Nn,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitConfig {
    pub drop_first_echo: bool,
    pub nonlinear_refinement: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SmoothConfig {
    /// Smooth the T₂ volume before assignment.
    pub enabled: bool,
    pub iterations: usize,
    pub time_step: f64,
    pub conductance: f64,
}

impl Default for SmoothConfig {
    fn default() -> Self {
        let d = DiffusionParams::default();
        Self { enabled: true, iterations: d.iterations, time_step: d.time_step, conductance: d.conductance }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AssignConfig {
    pub method: MethodArg,
    pub coverage_floor: f64,
}

impl Default for AssignConfig {
    fn default() -> Self {
        Self { method: MethodArg::Weighted, coverage_floor: 0.01 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub out: PathBuf,
    /// Multi-echo volumes in increasing echo time.
    pub echoes: Vec<PathBuf>,
    /// T₂ volume; defaults to the output of `fit-t2`.
    pub t2_volume: Option<PathBuf>,
    /// Mesh used for assignment; defaults to the model's mesh.
    pub mesh: Option<PathBuf>,
    /// Rigid pose taking mesh coordinates into the volume's world frame.
    pub transform: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub fit: FitConfig,
    pub smooth: SmoothConfig,
    pub assign: AssignConfig,
    pub relation: LinearRelation,
    pub study: StudyConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            out: PathBuf::from("out"),
            echoes: Vec::new(),
            t2_volume: None,
            mesh: None,
            transform: None,
            model: None,
            fit: FitConfig::default(),
            smooth: SmoothConfig::default(),
            assign: AssignConfig::default(),
            relation: LinearRelation::baseline(),
            study: StudyConfig::default(),
        }
    }
}

impl PipelineConfig {
    /// Rewrites every path relative to the config file.
    pub fn anchor(mut self, config_path: &Path) -> Self {
        let fix = |p: &Path| resolve_relative(config_path, p);
        self.out = fix(&self.out);
        self.echoes = self.echoes.iter().map(|p| fix(p)).collect();
        for p in [&mut self.t2_volume, &mut self.mesh, &mut self.transform, &mut self.model].into_iter().flatten() {
            *p = fix(p);
        }
        self
    }

    pub fn diffusion(&self) -> DiffusionParams {
        DiffusionParams {
            iterations: self.smooth.iterations,
            time_step: self.smooth.time_step,
            conductance: self.smooth.conductance,
            ..DiffusionParams::default()
        }
    }
}

/// Parses `"-0.1,0,0.25"`.
pub fn parse_fractions(s: &str) -> Result<Vec<f64>, String> {
    s.split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|_| format!("'{t}' is not a number")))
        .collect::<Result<Vec<_>, _>>()
        .and_then(|v| if v.is_empty() { Err("empty fraction list".into()) } else { Ok(v) })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fractions_parse_and_reject_garbage() {
        assert_eq!(parse_fractions("-0.1, 0,0.5").unwrap(), vec![-0.1, 0.0, 0.5]);
        assert!(parse_fractions("0.1,x").is_err());
    }

    #[test]
    fn empty_config_takes_defaults_and_anchors_paths() {
        let c: PipelineConfig = serde_json::from_str(r#"{"model": "m.json"}"#).unwrap();
        let c = c.anchor(Path::new("/data/study/config.json"));
        assert_eq!(c.model.as_deref(), Some(Path::new("/data/study/m.json")));
        assert_eq!(c.out, Path::new("/data/study/out"));
        assert_eq!(c.assign.method, MethodArg::Weighted);
        assert!(serde_json::from_str::<PipelineConfig>(r#"{"modle": "m.json"}"#).is_err());
    }
}
