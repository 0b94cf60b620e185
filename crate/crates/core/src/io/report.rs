//! Solution and study exports. Writers return the files they created.

use super::field::write_table;
use super::{fmt_f64, write_json, IoError};
use crate::fem::{principal_and_shear, SolutionState, StepDiagnostics};
use crate::sensitivity::StudyReport;
use serde::Serialize;
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

const SOLUTION_HEADER: [&str; 19] = [
    "element_id", "s_xx", "s_yy", "s_zz", "s_xy", "s_yz", "s_xz", "e_xx", "e_yy", "e_zz", "e_xy", "e_yz", "e_xz",
    "p1", "p3", "tau_max", "e_p1", "e_p3", "e_tau_max",
];

#[derive(Serialize)]
struct StepEntry<'a> {
    step: usize,
    file: String,
    markers: Vec<&'a str>,
    #[serde(flatten)]
    diagnostics: StepDiagnostics,
}

#[derive(Serialize)]
struct Diagnostics<'a> {
    element_count: usize,
    steps: Vec<StepEntry<'a>>,
    markers: &'a BTreeMap<String, usize>,
}

/// `step_NN.csv` per converged step (stress in Pa, Green–Lagrange strain,
/// principal values of both) and `diagnostics.json`.
pub fn write_solution(dir: &Path, state: &SolutionState) -> Result<Vec<PathBuf>, IoError> {
    let mut written = Vec::new();
    let mut entries = Vec::new();
    for (i, step) in state.steps.iter().enumerate() {
        let name = format!("step_{i:02}.csv");
        let path = dir.join(&name);
        let rows: Vec<Vec<String>> = step
            .stress
            .iter()
            .zip(&step.strain)
            .enumerate()
            .map(|(e, (s, g))| {
                let (ps, pg) = (principal_and_shear(s), principal_and_shear(g));
                let mut r = vec![e.to_string()];
                for m in [s, g] {
                    for (a, b) in [(0, 0), (1, 1), (2, 2), (0, 1), (1, 2), (0, 2)] {
                        r.push(fmt_f64(m[(a, b)]));
                    }
                }
                for v in [ps.p1, ps.p3, ps.tau_max, pg.p1, pg.p3, pg.tau_max] {
                    r.push(fmt_f64(v));
                }
                r
            })
            .collect();
        let header: Vec<String> = SOLUTION_HEADER.iter().map(|s| s.to_string()).collect();
        write_table(&path, &header, &rows)?;
        written.push(path);
        let markers = state.markers.iter().filter(|(_, &s)| s == i).map(|(m, _)| m.as_str()).collect();
        entries.push(StepEntry { step: i, file: name, markers, diagnostics: step.diagnostics });
    }
    let path = dir.join("diagnostics.json");
    let element_count = state.steps.first().map_or(0, |s| s.stress.len());
    write_json(&path, &Diagnostics { element_count, steps: entries, markers: &state.markers })?;
    written.push(path);
    Ok(written)
}

fn fraction_tag(f: f64) -> String {
    format!("{f:+.4}")
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), fmt_f64)
}

/// `report.json`, `percent_change_<metric>.csv` (rows = fractions, columns =
/// markers, `NA` where undefined) and `histogram_<metric>_<marker>_<run>.csv`
/// with bin centres and counts.
pub fn write_report(dir: &Path, report: &StudyReport) -> Result<Vec<PathBuf>, IoError> {
    let mut written = Vec::new();
    let path = dir.join("report.json");
    write_json(&path, report)?;
    written.push(path);

    for &metric in &report.metrics {
        let path = dir.join(format!("percent_change_{}.csv", metric.label()));
        let mut header = vec!["fraction".to_string()];
        header.extend(report.markers.iter().cloned());
        let rows: Vec<Vec<String>> = report
            .fractions
            .iter()
            .map(|&f| {
                let mut r = vec![fmt_f64(f)];
                for m in &report.markers {
                    r.push(opt(report.row(f, m, metric).and_then(|row| row.percent_change)));
                }
                r
            })
            .collect();
        write_table(&path, &header, &rows)?;
        written.push(path);
    }

    let header = vec!["bin".to_string(), "count".to_string()];
    for h in &report.histograms {
        let centres: Vec<String> = h.edges.windows(2).map(|w| fmt_f64(0.5 * (w[0] + w[1]))).collect();
        let runs = std::iter::once(("baseline".to_string(), &h.baseline))
            .chain(h.perturbed.iter().map(|(f, c)| (format!("f{}", fraction_tag(*f)), c)));
        for (tag, counts) in runs {
            let path = dir.join(format!("histogram_{}_{}_{tag}.csv", h.metric.label(), h.marker));
            let rows: Vec<Vec<String>> =
                centres.iter().zip(counts).map(|(c, n)| vec![c.clone(), n.to_string()]).collect();
            write_table(&path, &header, &rows)?;
            written.push(path);
        }
    }
    Ok(written)
}
