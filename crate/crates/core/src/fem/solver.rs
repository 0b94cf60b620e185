//! Newton–Raphson with backtracking and load bisection.
//!
//! Each step starts with a predictor that moves prescribed dofs to their new
//! values and corrects free dofs through the coupling block `K_fc Δu_c`.
//! Element contributions are computed in parallel chunks and scattered in
//! element order, so results do not depend on the thread count.

use super::element::{evaluate, min_volume_ratio, recover, ElementGeometry, NDOF};
use super::model::{Dof, FEModel};
use super::principal::{principal_and_shear, Principal};
use super::FemError;
use crate::par::{map_indexed, Execution};
use crate::{Mat3, Vec3};
use nalgebra::DMatrix;
use nalgebra_sparse::factorization::CscCholesky;
use nalgebra_sparse::pattern::SparsityPattern;
use nalgebra_sparse::CscMatrix;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

const PA_PER_MPA: f64 = 1.0e6;
const CHUNK: usize = 2048;
const MIN_STEP_LENGTH: f64 = 1.0 / 64.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverOptions {
    pub max_iterations: usize,
    pub max_bisections: u32,
    /// Relative to `‖external‖ + ‖reactions‖`.
    pub rel_tol: f64,
    /// Newtons.
    pub abs_tol: f64,
    pub execution: Execution,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { max_iterations: 25, max_bisections: 4, rel_tol: 1e-8, abs_tol: 1e-10, execution: Execution::default() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepDiagnostics {
    pub time: f64,
    /// Linear solves over all substeps.
    pub iterations: usize,
    pub substeps: usize,
    /// Final free-dof residual norm, N.
    pub residual_n: f64,
    /// `‖external‖ + ‖reactions‖`, N.
    pub force_scale_n: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepResult {
    pub time: f64,
    /// Nodal displacements, mm.
    pub displacements: Vec<Vec3>,
    /// Element Cauchy stress, Pa.
    pub stress: Vec<Mat3>,
    /// Element Green–Lagrange strain.
    pub strain: Vec<Mat3>,
    pub diagnostics: StepDiagnostics,
}

impl StepResult {
    pub fn stress_principal(&self) -> Vec<Principal> {
        self.stress.iter().map(principal_and_shear).collect()
    }

    pub fn strain_principal(&self) -> Vec<Principal> {
        self.strain.iter().map(principal_and_shear).collect()
    }
}

/// Converged steps in schedule order. Immutable once solved.
#[derive(Clone, Debug, PartialEq)]
pub struct SolutionState {
    pub steps: Vec<StepResult>,
    /// Marker name to step index.
    pub markers: BTreeMap<String, usize>,
}

impl SolutionState {
    pub fn at_marker(&self, name: &str) -> Option<&StepResult> {
        self.markers.get(name).map(|&i| &self.steps[i])
    }
}

enum Failure {
    Inverted(usize),
    NotConverged { element: usize, residual: f64 },
    Singular(usize),
}

struct Evaluation {
    /// `f_int − f_ext` over all dofs.
    residual: Vec<f64>,
    /// `K_fc Δu_c` over free dofs; empty unless requested.
    coupling: Vec<f64>,
    /// Free-free tangent in the solver's CSC layout; empty unless requested.
    values: Vec<f64>,
    energy: f64,
}

#[derive(Default, Clone, Copy)]
struct Progress {
    iterations: usize,
    substeps: usize,
    residual: f64,
    scale: f64,
}

struct Solver<'a> {
    model: &'a FEModel,
    opts: SolverOptions,
    dofs: Vec<Dof>,
    free: Vec<usize>,
    geoms: Vec<ElementGeometry>,
    /// `(mu, lambda)` in MPa.
    lame: Vec<(f64, f64)>,
    springs: Vec<(usize, Mat3)>,
    pattern: Option<SparsityPattern>,
    chol: Option<CscCholesky<f64>>,
    first_element: Vec<usize>,
}

impl<'a> Solver<'a> {
    fn new(model: &'a FEModel, opts: SolverOptions, with_pattern: bool) -> Result<Self, FemError> {
        model.validate()?;
        let dofs = model.dof_map()?;
        let mut free = vec![0; dofs.iter().filter(|d| matches!(d, Dof::Free(_))).count()];
        for (g, d) in dofs.iter().enumerate() {
            if let Dof::Free(k) = d {
                free[*k] = g;
            }
        }
        let mesh = &model.mesh;
        let geoms = (0..mesh.element_count())
            .map(|e| {
                ElementGeometry::new(&mesh.corners(e))
                    .map_err(|_| FemError::Invalid(format!("element {e} has a non-positive Gauss-point Jacobian")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let lame = model.materials.iter().map(|k| (k.mu / PA_PER_MPA, k.lambda / PA_PER_MPA)).collect();
        let springs = model.boundary.springs.iter().map(|s| (s.node, s.matrix())).collect();
        let mut first_element = vec![usize::MAX; mesh.node_count()];
        for (e, conn) in mesh.elements().iter().enumerate() {
            for &n in conn {
                first_element[n] = first_element[n].min(e);
            }
        }
        let mut s = Self { model, opts, dofs, free, geoms, lame, springs, pattern: None, chol: None, first_element };
        if with_pattern {
            s.pattern = Some(s.build_pattern());
        }
        Ok(s)
    }

    fn free_index(&self, g: usize) -> Option<usize> {
        match self.dofs[g] {
            Dof::Free(k) => Some(k),
            Dof::Constrained(_) => None,
        }
    }

    fn build_pattern(&self) -> SparsityPattern {
        let n = self.free.len();
        let mut cols: Vec<Vec<usize>> = vec![Vec::new(); n];
        let mut block = |nodes: &[usize]| {
            let ids: Vec<usize> = nodes
                .iter()
                .flat_map(|&nd| (0..3).map(move |c| 3 * nd + c))
                .filter_map(|g| self.free_index(g))
                .collect();
            for &c in &ids {
                cols[c].extend_from_slice(&ids);
            }
        };
        for conn in self.model.mesh.elements() {
            block(conn);
        }
        for &(node, _) in &self.springs {
            block(&[node]);
        }
        let mut offsets = Vec::with_capacity(n + 1);
        let mut indices = Vec::new();
        offsets.push(0);
        for mut c in cols {
            c.sort_unstable();
            c.dedup();
            indices.extend(c);
            offsets.push(indices.len());
        }
        SparsityPattern::try_from_offsets_and_indices(n, n, offsets, indices).expect("sorted, in-range pattern")
    }

    #[inline]
    fn slot(pattern: &SparsityPattern, col: usize, row: usize) -> usize {
        let lane = pattern.lane(col);
        let at = lane.binary_search(&row).expect("entry in pattern");
        pattern.major_offsets()[col] + at
    }

    fn gather(&self, e: usize, u: &[f64]) -> [Vec3; 8] {
        self.model.mesh.elements()[e].map(|n| Vec3::new(u[3 * n], u[3 * n + 1], u[3 * n + 2]))
    }

    /// Residual and optionally tangent at `u`; fails with the lowest-numbered inverted element.
    fn assemble(&self, u: &[f64], f_ext: &[f64], du_c: Option<&[f64]>, with_tangent: bool) -> Result<Evaluation, usize> {
        let nfree = self.free.len();
        let mut residual = vec![0.0; u.len()];
        let mut coupling = if du_c.is_some() { vec![0.0; nfree] } else { Vec::new() };
        let pattern = self.pattern.as_ref().filter(|_| with_tangent);
        let mut values = pattern.map_or_else(Vec::new, |p| vec![0.0; p.nnz()]);
        let mut energy = 0.0;
        let ne = self.geoms.len();
        let need_tangent = with_tangent || du_c.is_some();
        let exec = self.opts.execution;
        for start in (0..ne).step_by(CHUNK) {
            let count = CHUNK.min(ne - start);
            let responses = map_indexed(count, exec, |i| {
                let e = start + i;
                let (mu, lambda) = self.lame[e];
                evaluate(&self.geoms[e], &self.gather(e, u), mu, lambda, need_tangent).map_err(|_| e)
            });
            for (i, r) in responses.into_iter().enumerate() {
                let r = r?;
                let conn = &self.model.mesh.elements()[start + i];
                let g: [usize; NDOF] = std::array::from_fn(|a| 3 * conn[a / 3] + a % 3);
                energy += r.energy;
                for a in 0..NDOF {
                    residual[g[a]] += r.force[a];
                }
                let Some(k) = r.tangent.as_ref() else { continue };
                for a in 0..NDOF {
                    let Some(ra) = self.free_index(g[a]) else { continue };
                    for b in 0..NDOF {
                        let kab = k[a * NDOF + b];
                        match self.free_index(g[b]) {
                            Some(cb) => {
                                if let Some(p) = pattern {
                                    values[Self::slot(p, cb, ra)] += kab;
                                }
                            }
                            None => {
                                if let Some(d) = du_c {
                                    coupling[ra] += kab * d[g[b]];
                                }
                            }
                        }
                    }
                }
            }
        }
        for &(node, ks) in &self.springs {
            let un = Vec3::new(u[3 * node], u[3 * node + 1], u[3 * node + 2]);
            let f = ks * un;
            energy += 0.5 * un.dot(&f);
            for a in 0..3 {
                residual[3 * node + a] += f[a];
                let Some(ra) = self.free_index(3 * node + a) else { continue };
                for b in 0..3 {
                    match self.free_index(3 * node + b) {
                        Some(cb) => {
                            if let Some(p) = pattern {
                                values[Self::slot(p, cb, ra)] += ks[(a, b)];
                            }
                        }
                        None => {
                            if let Some(d) = du_c {
                                coupling[ra] += ks[(a, b)] * d[3 * node + b];
                            }
                        }
                    }
                }
            }
        }
        for (r, f) in residual.iter_mut().zip(f_ext) {
            *r -= f;
        }
        Ok(Evaluation { residual, coupling, values, energy })
    }

    fn norms(&self, ev: &Evaluation, f_ext: &[f64]) -> (f64, f64) {
        let (mut free, mut reactions) = (0.0, 0.0);
        for (g, r) in ev.residual.iter().enumerate() {
            match self.dofs[g] {
                Dof::Free(_) => free += r * r,
                Dof::Constrained(_) => reactions += r * r,
            }
        }
        let ext = f_ext.iter().map(|f| f * f).sum::<f64>().sqrt();
        (free.sqrt(), ext + reactions.sqrt())
    }

    fn converged(&self, residual: f64, scale: f64) -> bool {
        residual <= self.opts.rel_tol * scale || residual <= self.opts.abs_tol
    }

    fn linear_solve(&mut self, u: &[f64], values: &[f64], rhs: Vec<f64>) -> Result<Vec<f64>, Failure> {
        if rhs.is_empty() {
            return Ok(rhs);
        }
        let ok = match self.chol.as_mut() {
            Some(c) => c.refactor(values).is_ok(),
            None => {
                let pattern = self.pattern.clone().expect("pattern built");
                let k = CscMatrix::try_from_pattern_and_values(pattern, values.to_vec()).expect("values match pattern");
                CscCholesky::factor(&k).map(|c| self.chol = Some(c)).is_ok()
            }
        };
        if !ok {
            // a failed refactor leaves the factor unusable
            self.chol = None;
            return Err(Failure::Singular(self.most_compressed_element(u)));
        }
        let mut b = DMatrix::from_vec(rhs.len(), 1, rhs);
        self.chol.as_ref().expect("factored").solve_mut(&mut b);
        Ok(b.data.into())
    }

    fn most_compressed_element(&self, u: &[f64]) -> usize {
        let dets = map_indexed(self.geoms.len(), self.opts.execution, |e| min_volume_ratio(&self.geoms[e], &self.gather(e, u)));
        dets.iter().enumerate().fold((0, f64::INFINITY), |best, (e, &d)| if d < best.1 { (e, d) } else { best }).0
    }

    /// Free dof with the largest residual, reported through its lowest-numbered element.
    fn worst_element(&self, ev: &Evaluation) -> usize {
        let mut worst = (0.0, 0);
        for &g in &self.free {
            if ev.residual[g].abs() > worst.0 {
                worst = (ev.residual[g].abs(), g / 3);
            }
        }
        let e = self.first_element[worst.1];
        if e == usize::MAX { 0 } else { e }
    }

    fn increment(&mut self, u0: &[f64], t1: f64) -> Result<(Vec<f64>, Progress), Failure> {
        let f_ext = self.model.external_forces(t1);
        let mut u = u0.to_vec();
        let du_c: Vec<f64> = self
            .dofs
            .iter()
            .enumerate()
            .map(|(g, d)| match d {
                Dof::Free(_) => 0.0,
                Dof::Constrained(None) => -u[g],
                Dof::Constrained(Some(i)) => self.model.prescribed_value(*i, t1) - u[g],
            })
            .collect();

        let ev = self.assemble(&u, &f_ext, Some(&du_c), true).map_err(Failure::Inverted)?;
        let rhs: Vec<f64> = self.free.iter().enumerate().map(|(k, &g)| -(ev.residual[g] + ev.coupling[k])).collect();
        let du = self.linear_solve(&u, &ev.values, rhs)?;
        for (g, d) in du_c.iter().enumerate() {
            u[g] += d;
        }
        for (k, &g) in self.free.iter().enumerate() {
            u[g] += du[k];
        }
        let mut cur = self.assemble(&u, &f_ext, None, true).map_err(Failure::Inverted)?;
        let mut iterations = 1;
        loop {
            let (norm, scale) = self.norms(&cur, &f_ext);
            if self.converged(norm, scale) {
                return Ok((u, Progress { iterations, substeps: 1, residual: norm, scale }));
            }
            if iterations >= self.opts.max_iterations {
                return Err(Failure::NotConverged { element: self.worst_element(&cur), residual: norm });
            }
            let rhs: Vec<f64> = self.free.iter().map(|&g| -cur.residual[g]).collect();
            let du = self.linear_solve(&u, &cur.values, rhs)?;
            iterations += 1;
            let mut alpha = 1.0;
            loop {
                let mut trial = u.clone();
                for (k, &g) in self.free.iter().enumerate() {
                    trial[g] += alpha * du[k];
                }
                match self.assemble(&trial, &f_ext, None, true) {
                    Ok(ev) => {
                        if self.norms(&ev, &f_ext).0 <= norm || alpha <= MIN_STEP_LENGTH {
                            u = trial;
                            cur = ev;
                            break;
                        }
                    }
                    Err(e) if alpha <= MIN_STEP_LENGTH => return Err(Failure::Inverted(e)),
                    Err(_) => {}
                }
                alpha *= 0.5;
            }
        }
    }

    fn advance(&mut self, u0: &[f64], t0: f64, t1: f64, depth: u32) -> Result<(Vec<f64>, Progress), Failure> {
        match self.increment(u0, t1) {
            Ok(r) => Ok(r),
            Err(_) if depth < self.opts.max_bisections => {
                let tm = 0.5 * (t0 + t1);
                let (um, a) = self.advance(u0, t0, tm, depth + 1)?;
                let (u1, b) = self.advance(&um, tm, t1, depth + 1)?;
                Ok((
                    u1,
                    Progress {
                        iterations: a.iterations + b.iterations,
                        substeps: a.substeps + b.substeps,
                        residual: b.residual,
                        scale: b.scale,
                    },
                ))
            }
            Err(f) => Err(f),
        }
    }

    fn recover_step(&self, u: &[f64], time: f64, step: usize) -> Result<(Vec<Mat3>, Vec<Mat3>), FemError> {
        let out = map_indexed(self.geoms.len(), self.opts.execution, |e| {
            let (mu, lambda) = self.lame[e];
            recover(&self.geoms[e], &self.gather(e, u), mu, lambda).map_err(|_| e)
        });
        let mut stress = Vec::with_capacity(out.len());
        let mut strain = Vec::with_capacity(out.len());
        for r in out {
            let (s, e) = r.map_err(|element| FemError::ElementInversion { step, time, element })?;
            stress.push(s * PA_PER_MPA);
            strain.push(e);
        }
        Ok((stress, strain))
    }
}

fn to_vec3(u: &[f64]) -> Vec<Vec3> {
    u.chunks_exact(3).map(|c| Vec3::new(c[0], c[1], c[2])).collect()
}

fn flatten(u: &[Vec3]) -> Vec<f64> {
    u.iter().flat_map(|v| [v.x, v.y, v.z]).collect()
}

/// Solves every step of the schedule in order.
pub fn solve_static(model: &FEModel, opts: &SolverOptions) -> Result<SolutionState, FemError> {
    let mut solver = Solver::new(model, *opts, true)?;
    let mut u = vec![0.0; 3 * model.mesh.node_count()];
    let mut t0 = 0.0;
    let mut steps = Vec::with_capacity(model.schedule.times().len());
    for (step, &time) in model.schedule.times().iter().enumerate() {
        let (u1, p) = solver.advance(&u, t0, time, 0).map_err(|f| match f {
            Failure::Inverted(element) => FemError::ElementInversion { step, time, element },
            Failure::NotConverged { element, residual } => FemError::NonConvergence { step, time, element, residual },
            Failure::Singular(element) => FemError::Singular { step, time, element },
        })?;
        let (stress, strain) = solver.recover_step(&u1, time, step)?;
        steps.push(StepResult {
            time,
            displacements: to_vec3(&u1),
            stress,
            strain,
            diagnostics: StepDiagnostics {
                time,
                iterations: p.iterations,
                substeps: p.substeps,
                residual_n: p.residual,
                force_scale_n: p.scale,
            },
        });
        u = u1;
        t0 = time;
    }
    let markers = model
        .schedule
        .markers()
        .keys()
        .map(|name| (name.clone(), model.schedule.step_of_marker(name).expect("validated marker")))
        .collect();
    Ok(SolutionState { steps, markers })
}

/// Internal nodal forces (elements plus springs) at the given displacements, N.
pub fn internal_forces(model: &FEModel, displacements: &[Vec3]) -> Result<Vec<Vec3>, FemError> {
    let s = Solver::new(model, SolverOptions::default(), false)?;
    let u = flatten(displacements);
    let zero = vec![0.0; u.len()];
    let ev = s.assemble(&u, &zero, None, false).map_err(|element| FemError::ElementInversion { step: 0, time: 0.0, element })?;
    Ok(to_vec3(&ev.residual))
}

/// Stored energy of elements and springs, N·mm.
pub fn strain_energy(model: &FEModel, displacements: &[Vec3]) -> Result<f64, FemError> {
    let s = Solver::new(model, SolverOptions::default(), false)?;
    let u = flatten(displacements);
    let zero = vec![0.0; u.len()];
    s.assemble(&u, &zero, None, false)
        .map(|ev| ev.energy)
        .map_err(|element| FemError::ElementInversion { step: 0, time: 0.0, element })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::{cauchy_stress, Boundary, FixedBc, LoadCurve, NodalLoad, PrescribedDisplacement, Spring, StepSchedule};
    use crate::material::ElasticConstants;
    use crate::mesh::{HexMesh, Part};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn schedule(times: &[f64]) -> StepSchedule {
        StepSchedule::new(times.to_vec(), BTreeMap::new()).unwrap()
    }

    fn uniform(n: usize, e: f64, nu: f64) -> Vec<ElasticConstants> {
        vec![ElasticConstants::new(e, nu).unwrap(); n]
    }

    fn set(m: &HexMesh, name: &str) -> Vec<usize> {
        m.node_set(name).unwrap().to_vec()
    }

    fn compressed_slab(mats: Vec<ElasticConstants>, n: [usize; 3], strain: f64) -> FEModel {
        let size = Vec3::new(3.0, 3.0, 2.0);
        let m = HexMesh::block(n, Vec3::zeros(), size, Part::TibialCartilage);
        let b = Boundary {
            fixed: vec![FixedBc { nodes: set(&m, "zmin"), components: [true; 3] }],
            prescribed: vec![PrescribedDisplacement {
                nodes: set(&m, "zmax"),
                component: 2,
                value_mm: strain * size.z,
                curve: LoadCurve::Ramp,
            }],
            ..Default::default()
        };
        FEModel::new(m, mats, b, schedule(&[0.05, 0.1, 0.5, 1.0])).unwrap()
    }

    fn heterogeneous(n: usize, seed: u64) -> Vec<ElasticConstants> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| ElasticConstants::new(rng.random_range(1.0e6..8.0e6), 0.45).unwrap()).collect()
    }

    #[test]
    fn zero_loading_gives_zero_displacement() {
        let m = compressed_slab(uniform(18, 4.5e6, 0.45), [3, 3, 2], 0.0);
        let s = solve_static(&m, &SolverOptions::default()).unwrap();
        for step in &s.steps {
            assert!(step.displacements.iter().all(|u| *u == Vec3::zeros()));
            assert!(step.stress.iter().all(|t| *t == Mat3::zeros()));
        }
        assert_eq!(s.markers["ramp-end"], 1);
    }

    #[test]
    fn isolated_spring_node_moves_f_over_k() {
        let mut m = HexMesh::block([1, 1, 1], Vec3::zeros(), Vec3::repeat(1.0), Part::Meniscus);
        let mut nodes = m.nodes().to_vec();
        nodes.push(Vec3::new(5.0, 5.0, 5.0));
        m = HexMesh::new(nodes, m.elements().to_vec(), m.parts().to_vec(), m.node_sets().clone()).unwrap();
        let (k, f) = (20.0, Vec3::new(3.0, -1.0, 0.5));
        let b = Boundary {
            fixed: vec![FixedBc { nodes: (0..8).collect(), components: [true; 3] }],
            loads: vec![NodalLoad { nodes: vec![8], force_n: f.into(), curve: LoadCurve::Linear }],
            springs: vec![Spring { node: 8, stiffness_n_per_mm: k, direction: None }],
            ..Default::default()
        };
        let model = FEModel::new(m, vec![ElasticConstants::meniscus()], b, schedule(&[0.5, 1.0])).unwrap();
        let s = solve_static(&model, &SolverOptions::default()).unwrap();
        assert!((s.steps[2].displacements[8] - f / k).norm() < 1e-12);
        assert!((s.steps[1].displacements[8] - f * 0.5 / k).norm() < 1e-12);
    }

    #[test]
    fn directional_spring_resists_only_along_its_axis() {
        let mut m = HexMesh::block([1, 1, 1], Vec3::zeros(), Vec3::repeat(1.0), Part::Other);
        let mut nodes = m.nodes().to_vec();
        nodes.push(Vec3::new(5.0, 0.0, 0.0));
        m = HexMesh::new(nodes, m.elements().to_vec(), m.parts().to_vec(), Default::default()).unwrap();
        let b = Boundary {
            fixed: vec![
                FixedBc { nodes: (0..8).collect(), components: [true; 3] },
                FixedBc { nodes: vec![8], components: [false, true, true] },
            ],
            loads: vec![NodalLoad { nodes: vec![8], force_n: [4.0, 0.0, 0.0], curve: LoadCurve::Ramp }],
            springs: vec![Spring { node: 8, stiffness_n_per_mm: 8.0, direction: Some([2.0, 0.0, 0.0]) }],
            ..Default::default()
        };
        let model = FEModel::new(m, uniform(1, 1e6, 0.3), b, schedule(&[1.0])).unwrap();
        let s = solve_static(&model, &SolverOptions::default()).unwrap();
        assert!((s.steps.last().unwrap().displacements[8].x - 0.5).abs() < 1e-12);
    }

    /// Lateral stretch `s` with `σ₂₂ = 0`: `μ(s² − 1) + λ ln(λ₁ s²) = 0`, by bisection.
    fn uniaxial_oracle(stretch: f64, mu: f64, lambda: f64) -> (f64, f64) {
        let g = |s: f64| mu * (s * s - 1.0) + lambda * (stretch * s * s).ln();
        let (mut lo, mut hi) = (1e-3, 3.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if g(mid) > 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        let s = 0.5 * (lo + hi);
        let j = stretch * s * s;
        (s, (mu * (stretch * stretch - 1.0) + lambda * j.ln()) / j)
    }

    fn uniaxial_model(stretch: f64, k: ElasticConstants) -> FEModel {
        let m = HexMesh::block([1, 1, 1], Vec3::zeros(), Vec3::repeat(1.0), Part::Other);
        let b = Boundary {
            fixed: vec![
                FixedBc { nodes: set(&m, "xmin"), components: [true, false, false] },
                FixedBc { nodes: set(&m, "ymin"), components: [false, true, false] },
                FixedBc { nodes: set(&m, "zmin"), components: [false, false, true] },
            ],
            prescribed: vec![PrescribedDisplacement {
                nodes: set(&m, "xmax"),
                component: 0,
                value_mm: stretch - 1.0,
                curve: LoadCurve::Linear,
            }],
            ..Default::default()
        };
        FEModel::new(m, vec![k], b, schedule(&[0.25, 0.5, 0.75, 1.0])).unwrap()
    }

    #[test]
    fn uniaxial_stretch_matches_scalar_oracle() {
        for (stretch, e, nu) in [(1.2, 4.5e6, 0.45), (0.8, 1.0e6, 0.3), (1.5, 8.0e6, 0.45)] {
            let k = ElasticConstants::new(e, nu).unwrap();
            let s = solve_static(&uniaxial_model(stretch, k), &SolverOptions::default()).unwrap();
            let last = s.steps.last().unwrap();
            let (lat, sigma) = uniaxial_oracle(stretch, k.mu, k.lambda);
            // node 6 is the (1,1,1) corner
            let u6 = last.displacements[6];
            assert!((1.0 + u6.y - lat).abs() <= 1e-6 * lat, "lateral {} vs {lat}", 1.0 + u6.y);
            assert!((1.0 + u6.z - lat).abs() <= 1e-6 * lat);
            assert!((last.stress[0][(0, 0)] - sigma).abs() <= 1e-6 * sigma.abs());
            assert!(last.stress[0][(1, 1)].abs() <= 1e-6 * sigma.abs());
        }
    }

    #[test]
    fn patch_test_reproduces_affine_deformation() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let mut m = HexMesh::block([2, 2, 2], Vec3::zeros(), Vec3::repeat(2.0), Part::Other);
        // 13 is the interior node
        m.nodes_mut()[13] += Vec3::new(0.15, -0.1, 0.2);
        let g = Mat3::from_fn(|_, _| rng.random_range(-0.1..0.1));
        let interior = [13usize];
        let mut prescribed = Vec::new();
        for n in (0..m.node_count()).filter(|n| !interior.contains(n)) {
            let u = g * m.nodes()[n];
            for c in 0..3 {
                prescribed.push(PrescribedDisplacement { nodes: vec![n], component: c, value_mm: u[c], curve: LoadCurve::Linear });
            }
        }
        // a uniform material; stress jumps would load the interior node
        let mats = uniform(8, 3.0e6, 0.4);
        let b = Boundary { prescribed, ..Default::default() };
        let model = FEModel::new(m.clone(), mats.clone(), b, schedule(&[0.5, 1.0])).unwrap();
        let s = solve_static(&model, &SolverOptions::default()).unwrap();
        let last = s.steps.last().unwrap();
        assert!((last.displacements[13] - g * m.nodes()[13]).norm() < 1e-10);
        let f = Mat3::identity() + g;
        for (e, k) in mats.iter().enumerate() {
            let want = cauchy_stress(&f, k.mu, k.lambda).unwrap();
            assert!((last.stress[e] - want).norm() <= 1e-10 * want.norm());
            assert!((last.strain[e] - crate::fem::green_lagrange(&f)).norm() < 1e-10);
        }
    }

    #[test]
    fn scaling_moduli_scales_stress_only() {
        let mats = heterogeneous(18, 9);
        let base = compressed_slab(mats, [3, 3, 2], -0.1);
        let s1 = solve_static(&base, &SolverOptions::default()).unwrap();
        for c in [2.0, 3.7] {
            let sc = solve_static(&base.with_scaled_materials(c), &SolverOptions::default()).unwrap();
            for (a, b) in s1.steps.iter().zip(&sc.steps) {
                let umax = a.displacements.iter().map(|v| v.norm()).fold(0.0, f64::max);
                for (ua, ub) in a.displacements.iter().zip(&b.displacements) {
                    assert!((ua - ub).norm() <= 1e-8 * umax.max(1e-30));
                }
                for (sa, sb) in a.stress.iter().zip(&b.stress) {
                    assert!((sa * c - sb).norm() <= 1e-8 * (sa * c).norm().max(1e-30));
                }
            }
        }
    }

    fn random_block(rng: &mut ChaCha8Rng) -> FEModel {
        let mut m = HexMesh::block([2, 2, 2], Vec3::zeros(), Vec3::repeat(2.0), Part::Other);
        for p in m.nodes_mut() {
            *p += Vec3::from_fn(|_, _| rng.random_range(-0.1..0.1));
        }
        let b = Boundary {
            fixed: vec![FixedBc { nodes: set(&m, "zmin"), components: [true; 3] }],
            springs: vec![Spring { node: 26, stiffness_n_per_mm: 3.0, direction: None }],
            ..Default::default()
        };
        FEModel::new(m, heterogeneous(8, rng.random()), b, schedule(&[1.0])).unwrap()
    }

    #[test]
    fn internal_force_is_energy_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..3 {
            let model = random_block(&mut rng);
            let u: Vec<Vec3> = (0..27).map(|_| Vec3::from_fn(|_, _| rng.random_range(-0.1..0.1))).collect();
            let f = internal_forces(&model, &u).unwrap();
            let h = 1e-6;
            let mut fd = vec![Vec3::zeros(); 27];
            for n in 0..27 {
                for c in 0..3 {
                    let (mut up, mut um) = (u.clone(), u.clone());
                    up[n][c] += h;
                    um[n][c] -= h;
                    fd[n][c] = (strain_energy(&model, &up).unwrap() - strain_energy(&model, &um).unwrap()) / (2.0 * h);
                }
            }
            let err: f64 = f.iter().zip(&fd).map(|(a, b)| (a - b).norm_squared()).sum::<f64>().sqrt();
            let norm: f64 = f.iter().map(|a| a.norm_squared()).sum::<f64>().sqrt();
            assert!(err <= 1e-6 * norm, "{err} vs {norm}");
        }
    }

    #[test]
    fn rigid_rotation_of_a_converged_state_is_objective() {
        let model = compressed_slab(heterogeneous(18, 2), [3, 3, 2], -0.1);
        let s = solve_static(&model, &SolverOptions::default()).unwrap();
        let u = &s.steps.last().unwrap().displacements;
        let r = nalgebra::Rotation3::from_axis_angle(&nalgebra::Unit::new_normalize(Vec3::new(1.0, 2.0, -0.5)), 0.7);
        let x: Vec<Vec3> = model.mesh.nodes().iter().zip(u).map(|(p, d)| p + d).collect();
        let ur: Vec<Vec3> = model.mesh.nodes().iter().zip(&x).map(|(p, y)| r * y - p).collect();
        let w = strain_energy(&model, u).unwrap();
        assert!((strain_energy(&model, &ur).unwrap() - w).abs() <= 1e-10 * w);
    }

    #[test]
    fn thread_count_does_not_change_results() {
        let model = compressed_slab(heterogeneous(18, 3), [3, 3, 2], -0.12);
        let seq = SolverOptions { execution: Execution::Sequential, ..Default::default() };
        let a = solve_static(&model, &seq).unwrap();
        let b = solve_static(&model, &SolverOptions::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn crushing_load_fails_naming_step_and_element() {
        let model = compressed_slab(uniform(18, 4.5e6, 0.45), [3, 3, 2], -1.2);
        let opts = SolverOptions { max_bisections: 1, ..Default::default() };
        match solve_static(&model, &opts) {
            Err(FemError::ElementInversion { step, element, .. })
            | Err(FemError::NonConvergence { step, element, .. })
            | Err(FemError::Singular { step, element, .. }) => {
                assert!(element < 18);
                assert!(step < 4);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn compression_converges_with_small_residual() {
        let model = compressed_slab(heterogeneous(18, 5), [3, 3, 2], -0.15);
        let s = solve_static(&model, &SolverOptions::default()).unwrap();
        for step in &s.steps {
            let d = step.diagnostics;
            assert!(d.residual_n <= 1e-8 * d.force_scale_n || d.residual_n <= 1e-10);
            assert!(d.iterations <= 25 * d.substeps);
            for t in &step.stress {
                assert!((t - t.transpose()).norm() <= 1e-12 * t.norm());
            }
        }
        let top = s.steps.last().unwrap();
        let mean_szz: f64 = top.stress.iter().map(|t| t[(2, 2)]).sum::<f64>() / 18.0;
        assert!(mean_szz < 0.0);
    }
}
