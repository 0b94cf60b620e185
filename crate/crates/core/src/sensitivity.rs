//! Baseline-versus-perturbed studies of the T₂→E_D relation.
//!
//! The "top 1%" of a field is the set of elements whose oriented value is at
//! or above the linearly interpolated 99th percentile. Compressive metrics
//! are negated before ranking, so the top set of a third principal stress
//! holds its most negative values. Percent change is
//! `100 · (perturbed − baseline) / |baseline|`.

use crate::fem::{solve_static, FEModel, FemError, Principal, SolutionState, SolverOptions};
use crate::material::{ElasticConstants, LinearRelation, MaterialError, CARTILAGE_POISSON};
use crate::mesh::Part;
use crate::par::{map_indexed, Execution};
use crate::transfer::ElementField;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Fields smaller than this get a warning: their top 1% has under one element.
pub const RECOMMENDED_MIN_ELEMENTS: usize = 100;
const TOP_PERCENTILE: f64 = 0.99;

#[derive(Debug, Error, PartialEq)]
pub enum SensitivityError {
    #[error("field is empty")]
    EmptyField,
    #[error("field has a non-finite value at element {0}")]
    NonFinite(usize),
    #[error("T₂ field has {got} values for {expected} elements")]
    FieldSize { expected: usize, got: usize },
    #[error("duplicate fraction {0}")]
    DuplicateFraction(f64),
    #[error("no fractions to run")]
    NoFractions,
    #[error("unknown marker '{0}'")]
    UnknownMarker(String),
    #[error("baseline solve failed: {0}")]
    Baseline(FemError),
    #[error(transparent)]
    Material(#[from] MaterialError),
}

/// Which tail of a field counts as extreme.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Orientation {
    /// Largest values.
    Tensile,
    /// Most negative values.
    Compressive,
}

impl Orientation {
    #[inline]
    pub fn orient(self, v: f64) -> f64 {
        match self {
            Orientation::Tensile => v,
            Orientation::Compressive => -v,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Metric {
    P1Stress,
    P3Stress,
    TauStress,
    P1Strain,
    P3Strain,
    TauStrain,
}

impl Metric {
    pub const ALL: [Metric; 6] =
        [Metric::P1Stress, Metric::P3Stress, Metric::TauStress, Metric::P1Strain, Metric::P3Strain, Metric::TauStrain];

    pub fn label(self) -> &'static str {
        match self {
            Metric::P1Stress => "p1-stress",
            Metric::P3Stress => "p3-stress",
            Metric::TauStress => "tau-stress",
            Metric::P1Strain => "p1-strain",
            Metric::P3Strain => "p3-strain",
            Metric::TauStrain => "tau-strain",
        }
    }

    pub fn from_label(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.label() == s)
    }

    pub fn orientation(self) -> Orientation {
        match self {
            Metric::P3Stress | Metric::P3Strain => Orientation::Compressive,
            _ => Orientation::Tensile,
        }
    }

    pub fn is_stress(self) -> bool {
        matches!(self, Metric::P1Stress | Metric::P3Stress | Metric::TauStress)
    }

    fn pick(self, p: &Principal) -> f64 {
        match self {
            Metric::P1Stress | Metric::P1Strain => p.p1,
            Metric::P3Stress | Metric::P3Strain => p.p3,
            Metric::TauStress | Metric::TauStrain => p.tau_max,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    ModulusShift,
    AlteredSlope,
}

impl Family {
    pub fn label(self) -> &'static str {
        match self {
            Family::ModulusShift => "shift",
            Family::AlteredSlope => "slope",
        }
    }

    pub fn from_label(s: &str) -> Option<Self> {
        match s {
            "shift" | "modulus-shift" => Some(Family::ModulusShift),
            "slope" | "altered-slope" => Some(Family::AlteredSlope),
            _ => None,
        }
    }

    pub fn apply(self, base: &LinearRelation, f: f64) -> Result<LinearRelation, MaterialError> {
        match self {
            Family::ModulusShift => Ok(base.shift_modulus(f)),
            Family::AlteredSlope => base.alter_slope(f),
        }
    }
}

/// Threshold and mean of the top 1%, both in the field's original sign.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TopStats {
    pub threshold: f64,
    pub mean: f64,
    pub count: usize,
    /// Fewer than [`RECOMMENDED_MIN_ELEMENTS`] values.
    pub small_sample: bool,
}

/// Linearly interpolated order statistic at `q ∈ [0, 1]` of sorted values.
fn interpolated_quantile(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    let frac = h - lo as f64;
    if frac == 0.0 {
        sorted[lo]
    } else {
        sorted[lo] + frac * (sorted[hi] - sorted[lo])
    }
}

pub fn top1_threshold_and_mean(values: &[f64], orientation: Orientation) -> Result<TopStats, SensitivityError> {
    if values.is_empty() {
        return Err(SensitivityError::EmptyField);
    }
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(SensitivityError::NonFinite(i));
    }
    let mut oriented: Vec<f64> = values.iter().map(|&v| orientation.orient(v)).collect();
    oriented.sort_by(f64::total_cmp);
    let t = interpolated_quantile(&oriented, TOP_PERCENTILE);
    let start = oriented.partition_point(|&v| v < t);
    let top = &oriented[start..];
    let mean = top.iter().sum::<f64>() / top.len() as f64;
    Ok(TopStats {
        threshold: orientation.orient(t),
        mean: orientation.orient(mean),
        count: top.len(),
        small_sample: values.len() < RECOMMENDED_MIN_ELEMENTS,
    })
}

/// Elements at or beyond `threshold` (original sign) in the oriented sense.
pub fn exceedance_count(values: &[f64], threshold: f64, orientation: Orientation) -> usize {
    let t = orientation.orient(threshold);
    values.iter().filter(|&&v| orientation.orient(v) >= t).count()
}

/// `None` when the baseline is zero.
pub fn percent_change(perturbed: f64, baseline: f64) -> Option<f64> {
    (baseline != 0.0).then(|| 100.0 * (perturbed - baseline) / baseline.abs())
}

/// Per-element constants: cartilage from the relation with ν = 0.45, meniscus
/// at its fixed constants, other parts unchanged from `template`.
pub fn materials_from_t2(
    parts: &[Part],
    t2: &[f64],
    relation: &LinearRelation,
    template: &[ElasticConstants],
) -> Result<Vec<ElasticConstants>, SensitivityError> {
    if t2.len() != parts.len() {
        return Err(SensitivityError::FieldSize { expected: parts.len(), got: t2.len() });
    }
    parts
        .iter()
        .zip(t2)
        .zip(template)
        .enumerate()
        .map(|(e, ((part, &t), tpl))| match part {
            Part::FemoralCartilage | Part::TibialCartilage => {
                if !t.is_finite() {
                    return Err(SensitivityError::NonFinite(e));
                }
                Ok(ElasticConstants::new(relation.e_d_from_t2(t), CARTILAGE_POISSON)?)
            }
            Part::Meniscus => Ok(ElasticConstants::meniscus()),
            Part::Other => Ok(*tpl),
        })
        .collect()
}

/// Default perturbation grid: −0.10 to +0.50 in steps of 0.10.
pub fn default_fractions() -> Vec<f64> {
    (-1..=5).map(|i| i as f64 / 10.0).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StudyConfig {
    pub family: Family,
    pub fractions: Vec<f64>,
    /// Empty means every marker of the schedule.
    pub markers: Vec<String>,
    pub metrics: Vec<Metric>,
    pub histogram_metrics: Vec<Metric>,
    pub histogram_bins: usize,
    pub solver: SolverOptions,
    /// How independent fraction runs are spread over threads.
    pub execution: Execution,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            family: Family::ModulusShift,
            fractions: default_fractions(),
            markers: Vec::new(),
            metrics: Metric::ALL.to_vec(),
            histogram_metrics: vec![Metric::P3Stress, Metric::TauStress],
            histogram_bins: 20,
            solver: SolverOptions::default(),
            execution: Execution::default(),
        }
    }
}

impl StudyConfig {
    pub fn validate(&self) -> Result<(), SensitivityError> {
        if self.fractions.is_empty() {
            return Err(SensitivityError::NoFractions);
        }
        for (i, f) in self.fractions.iter().enumerate() {
            if self.fractions[..i].contains(f) {
                return Err(SensitivityError::DuplicateFraction(*f));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaselineRow {
    pub marker: String,
    pub metric: Metric,
    pub top: TopStats,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub fraction: f64,
    pub marker: String,
    pub metric: Metric,
    pub baseline_top_mean: f64,
    /// `None` when the perturbed run failed.
    pub perturbed_top_mean: Option<f64>,
    /// `None` when the run failed or the baseline mean is zero.
    pub percent_change: Option<f64>,
    /// Perturbed elements at or beyond the baseline threshold.
    pub exceedance: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FractionFailure {
    pub fraction: f64,
    pub message: String,
}

/// Counts of one metric at one marker over bins shared by the baseline and
/// every perturbed run. Bin edges are in the metric's original sign.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub marker: String,
    pub metric: Metric,
    pub edges: Vec<f64>,
    pub baseline: Vec<usize>,
    /// `(fraction, counts)` for each successful run, in fraction order.
    pub perturbed: Vec<(f64, Vec<usize>)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StudyReport {
    pub family: Family,
    pub fractions: Vec<f64>,
    pub markers: Vec<String>,
    pub metrics: Vec<Metric>,
    pub element_count: usize,
    /// Elements entering the statistics (cartilage when present).
    pub evaluated_elements: usize,
    pub baseline: Vec<BaselineRow>,
    /// Ordered by fraction, then marker, then metric.
    pub rows: Vec<ReportRow>,
    pub failures: Vec<FractionFailure>,
    pub warnings: Vec<String>,
    pub histograms: Vec<Histogram>,
}

impl StudyReport {
    pub fn row(&self, fraction: f64, marker: &str, metric: Metric) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.fraction == fraction && r.marker == marker && r.metric == metric)
    }

    pub fn is_complete(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Metric values over the evaluated elements of one step.
fn metric_values(sol: &SolutionState, marker: &str, metric: Metric, selection: &[usize]) -> Vec<f64> {
    let step = sol.at_marker(marker).expect("validated marker");
    let tensors = if metric.is_stress() { &step.stress } else { &step.strain };
    selection.iter().map(|&e| metric.pick(&crate::fem::principal_and_shear(&tensors[e]))).collect()
}

fn histogram_edges(lo: f64, hi: f64, bins: usize) -> Vec<f64> {
    let (lo, hi) = if hi > lo { (lo, hi) } else { (lo - 0.5, lo + 0.5) };
    (0..=bins).map(|i| lo + (hi - lo) * i as f64 / bins as f64).collect()
}

fn histogram_counts(values: &[f64], edges: &[f64]) -> Vec<usize> {
    let bins = edges.len() - 1;
    let (lo, hi) = (edges[0], edges[bins]);
    let mut counts = vec![0; bins];
    for &v in values {
        let b = (((v - lo) / (hi - lo)) * bins as f64).floor();
        counts[(b.max(0.0) as usize).min(bins - 1)] += 1;
    }
    counts
}

/// Solves the baseline, then one model per fraction with the perturbed
/// relation mapped onto the same T₂ field. A failed fraction is recorded and
/// the study continues.
pub fn run_study(
    model: &FEModel,
    t2: &ElementField,
    relation: &LinearRelation,
    config: &StudyConfig,
) -> Result<StudyReport, SensitivityError> {
    config.validate()?;
    let parts = model.mesh.parts();
    let markers: Vec<String> = if config.markers.is_empty() {
        model.schedule.markers().keys().cloned().collect()
    } else {
        config.markers.clone()
    };
    if let Some(m) = markers.iter().find(|m| model.schedule.step_of_marker(m).is_none()) {
        return Err(SensitivityError::UnknownMarker(m.clone()));
    }
    let mut selection: Vec<usize> = (0..parts.len()).filter(|&e| parts[e].is_cartilage()).collect();
    let mut warnings = Vec::new();
    if selection.is_empty() {
        selection = (0..parts.len()).collect();
        warnings.push("no cartilage elements; statistics use every element".to_string());
    }
    if selection.len() < RECOMMENDED_MIN_ELEMENTS {
        warnings.push(format!(
            "{} evaluated elements is below the recommended {RECOMMENDED_MIN_ELEMENTS}; the top 1% holds few elements",
            selection.len()
        ));
    }

    let solve_with = |rel: &LinearRelation| -> Result<SolutionState, String> {
        let materials = materials_from_t2(parts, &t2.values, rel, &model.materials).map_err(|e| e.to_string())?;
        let m = FEModel { materials, ..model.clone() };
        solve_static(&m, &config.solver).map_err(|e| e.to_string())
    };
    let materials = materials_from_t2(parts, &t2.values, relation, &model.materials)?;
    let base_model = FEModel { materials, ..model.clone() };
    let baseline = solve_static(&base_model, &config.solver).map_err(SensitivityError::Baseline)?;

    let runs: Vec<Result<Option<SolutionState>, String>> = map_indexed(config.fractions.len(), config.execution, |i| {
        let f = config.fractions[i];
        let rel = config.family.apply(relation, f).map_err(|e| e.to_string())?;
        // an unchanged line reuses the baseline so its row is exactly zero
        if rel.slope == relation.slope && rel.intercept == relation.intercept {
            return Ok(None);
        }
        solve_with(&rel).map(Some)
    });

    let mut base_rows = Vec::new();
    let mut base_values = Vec::new();
    for marker in &markers {
        for &metric in &config.metrics {
            let v = metric_values(&baseline, marker, metric, &selection);
            let top = top1_threshold_and_mean(&v, metric.orientation())?;
            base_rows.push(BaselineRow { marker: marker.clone(), metric, top });
            base_values.push(v);
        }
    }

    let mut rows = Vec::new();
    let mut failures = Vec::new();
    let mut run_values: Vec<Option<Vec<Vec<f64>>>> = Vec::new();
    for (f, run) in config.fractions.iter().zip(&runs) {
        let sol = match run {
            Ok(Some(s)) => Some(s),
            Ok(None) => Some(&baseline),
            Err(msg) => {
                failures.push(FractionFailure { fraction: *f, message: msg.clone() });
                None
            }
        };
        let mut per_metric = Vec::new();
        for (k, b) in base_rows.iter().enumerate() {
            let (perturbed_top_mean, percent, exceedance) = match sol {
                Some(s) => {
                    let v = if std::ptr::eq(s, &baseline) {
                        base_values[k].clone()
                    } else {
                        metric_values(s, &b.marker, b.metric, &selection)
                    };
                    let top = top1_threshold_and_mean(&v, b.metric.orientation())?;
                    let exc = exceedance_count(&v, b.top.threshold, b.metric.orientation());
                    per_metric.push(v);
                    (Some(top.mean), percent_change(top.mean, b.top.mean), Some(exc))
                }
                None => (None, None, None),
            };
            rows.push(ReportRow {
                fraction: *f,
                marker: b.marker.clone(),
                metric: b.metric,
                baseline_top_mean: b.top.mean,
                perturbed_top_mean,
                percent_change: percent,
                exceedance,
            });
        }
        run_values.push(sol.map(|_| per_metric));
    }
    if rows.iter().any(|r| r.perturbed_top_mean.is_some() && r.percent_change.is_none()) {
        warnings.push("some baseline top-1% means are zero; their percent changes are undefined".to_string());
    }

    let mut histograms = Vec::new();
    if config.histogram_bins > 0 {
        for (k, b) in base_rows.iter().enumerate() {
            if !config.histogram_metrics.contains(&b.metric) {
                continue;
            }
            let all = std::iter::once(&base_values[k])
                .chain(run_values.iter().flatten().map(|pm| &pm[k]))
                .flatten()
                .copied();
            let (lo, hi) = all.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
            let edges = histogram_edges(lo, hi, config.histogram_bins);
            let perturbed = config
                .fractions
                .iter()
                .zip(&run_values)
                .filter_map(|(f, pm)| pm.as_ref().map(|pm| (*f, histogram_counts(&pm[k], &edges))))
                .collect();
            histograms.push(Histogram {
                marker: b.marker.clone(),
                metric: b.metric,
                baseline: histogram_counts(&base_values[k], &edges),
                edges,
                perturbed,
            });
        }
    }

    Ok(StudyReport {
        family: config.family,
        fractions: config.fractions.clone(),
        markers,
        metrics: config.metrics.clone(),
        element_count: parts.len(),
        evaluated_elements: selection.len(),
        baseline: base_rows,
        rows,
        failures,
        warnings,
        histograms,
    })
}
