//! Model definition: mesh, materials, boundary conditions and step schedule.

use super::FemError;
use crate::material::ElasticConstants;
use crate::mesh::HexMesh;
use crate::{Mat3, Vec3};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// End of the loading ramp in pseudo-time.
pub const RAMP_END: f64 = 0.1;
pub const RAMP_END_MARKER: &str = "ramp-end";

/// Load-scale multiplier as a function of pseudo-time `t ∈ [0, 1]`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum LoadCurve {
    /// 0 → 1 over `[0, RAMP_END]`, then held.
    #[default]
    Ramp,
    /// `t` itself.
    Linear,
    /// Piecewise linear through `(t, scale)` points, held beyond the ends.
    Table { points: Vec<[f64; 2]> },
}

impl LoadCurve {
    pub fn scale(&self, t: f64) -> f64 {
        match self {
            LoadCurve::Ramp => (t / RAMP_END).clamp(0.0, 1.0),
            LoadCurve::Linear => t,
            LoadCurve::Table { points } => {
                let Some(first) = points.first() else { return 0.0 };
                if t <= first[0] {
                    return first[1];
                }
                for w in points.windows(2) {
                    let ([t0, s0], [t1, s1]) = (w[0], w[1]);
                    if t <= t1 {
                        return s0 + (s1 - s0) * (t - t0) / (t1 - t0);
                    }
                }
                points[points.len() - 1][1]
            }
        }
    }

    fn validate(&self) -> Result<(), String> {
        if let LoadCurve::Table { points } = self {
            if points.is_empty() {
                return Err("load table is empty".into());
            }
            if points.windows(2).any(|w| !(w[1][0] > w[0][0])) {
                return Err("load table times must increase strictly".into());
            }
            if points.iter().flatten().any(|v| !v.is_finite()) {
                return Err("load table has a non-finite entry".into());
            }
        }
        Ok(())
    }
}

/// Zero displacement on the selected components of every node in `nodes`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FixedBc {
    pub nodes: Vec<usize>,
    #[serde(default = "all_components")]
    pub components: [bool; 3],
}

fn all_components() -> [bool; 3] {
    [true; 3]
}

/// Displacement `value_mm · curve(t)` on one component.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrescribedDisplacement {
    pub nodes: Vec<usize>,
    pub component: usize,
    pub value_mm: f64,
    #[serde(default)]
    pub curve: LoadCurve,
}

/// Force `force_n · curve(t)` applied to each listed node.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodalLoad {
    pub nodes: Vec<usize>,
    pub force_n: [f64; 3],
    #[serde(default)]
    pub curve: LoadCurve,
}

/// Linear spring from a node to ground. Isotropic when `direction` is absent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Spring {
    pub node: usize,
    pub stiffness_n_per_mm: f64,
    #[serde(default)]
    pub direction: Option<[f64; 3]>,
}

impl Spring {
    /// 3×3 stiffness block in N/mm.
    pub fn matrix(&self) -> Mat3 {
        match self.direction {
            None => Mat3::identity() * self.stiffness_n_per_mm,
            Some(d) => {
                let d = Vec3::from(d).normalize();
                d * d.transpose() * self.stiffness_n_per_mm
            }
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Boundary {
    #[serde(default)]
    pub fixed: Vec<FixedBc>,
    #[serde(default)]
    pub prescribed: Vec<PrescribedDisplacement>,
    #[serde(default)]
    pub loads: Vec<NodalLoad>,
    #[serde(default)]
    pub springs: Vec<Spring>,
}

/// Output pseudo-times and named markers. Every marker names one step time,
/// and `ramp-end` is always present.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ScheduleRepr", into = "ScheduleRepr")]
pub struct StepSchedule {
    times: Vec<f64>,
    markers: BTreeMap<String, f64>,
}

#[derive(Serialize, Deserialize)]
struct ScheduleRepr {
    times: Vec<f64>,
    #[serde(default)]
    markers: BTreeMap<String, f64>,
}

impl TryFrom<ScheduleRepr> for StepSchedule {
    type Error = FemError;
    fn try_from(r: ScheduleRepr) -> Result<Self, FemError> {
        StepSchedule::new(r.times, r.markers)
    }
}

impl From<StepSchedule> for ScheduleRepr {
    fn from(s: StepSchedule) -> Self {
        ScheduleRepr { times: s.times, markers: s.markers }
    }
}

impl StepSchedule {
    /// Adds the ramp end to `times` and `markers` when missing.
    pub fn new(mut times: Vec<f64>, mut markers: BTreeMap<String, f64>) -> Result<Self, FemError> {
        if times.iter().any(|t| !(*t > 0.0 && *t <= 1.0)) {
            return Err(FemError::Schedule("step times must lie in (0, 1]".into()));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(FemError::Schedule("step times must increase strictly".into()));
        }
        if let Err(at) = times.binary_search_by(|t| t.total_cmp(&RAMP_END)) {
            times.insert(at, RAMP_END);
        }
        markers.entry(RAMP_END_MARKER.to_string()).or_insert(RAMP_END);
        for (name, t) in &markers {
            if !times.contains(t) {
                return Err(FemError::Schedule(format!("marker '{name}' at t = {t} is not a step time")));
            }
        }
        if markers[RAMP_END_MARKER] != RAMP_END {
            return Err(FemError::Schedule(format!("'{RAMP_END_MARKER}' must sit at t = {RAMP_END}")));
        }
        Ok(Self { times, markers })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn markers(&self) -> &BTreeMap<String, f64> {
        &self.markers
    }

    pub fn step_of_marker(&self, name: &str) -> Option<usize> {
        let t = self.markers.get(name)?;
        self.times.iter().position(|x| x == t)
    }
}

/// Hexahedral neo-Hookean model with per-element constants (Pa), lengths in
/// mm, forces in N and spring stiffness in N/mm.
#[derive(Clone, Debug)]
pub struct FEModel {
    pub mesh: HexMesh,
    pub materials: Vec<ElasticConstants>,
    pub boundary: Boundary,
    pub schedule: StepSchedule,
}

/// What happens to one degree of freedom.
#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) enum Dof {
    Free(usize),
    /// Index into the prescribed list, or `None` for zero displacement.
    Constrained(Option<usize>),
}

impl FEModel {
    pub fn new(mesh: HexMesh, materials: Vec<ElasticConstants>, boundary: Boundary, schedule: StepSchedule) -> Result<Self, FemError> {
        let m = Self { mesh, materials, boundary, schedule };
        m.validate()?;
        Ok(m)
    }

    /// Same model with every element's Lamé parameters multiplied by `c`.
    pub fn with_scaled_materials(&self, c: f64) -> Self {
        let mut m = self.clone();
        m.materials.iter_mut().for_each(|k| *k = k.scaled(c));
        m
    }

    pub fn validate(&self) -> Result<(), FemError> {
        let ne = self.mesh.element_count();
        let nn = self.mesh.node_count();
        if self.materials.len() != ne {
            return Err(FemError::Invalid(format!("{} material entries for {ne} elements", self.materials.len())));
        }
        for (e, k) in self.materials.iter().enumerate() {
            if !(k.mu > 0.0 && k.lambda > 0.0 && k.mu.is_finite() && k.lambda.is_finite()) {
                return Err(FemError::Invalid(format!("element {e} has non-positive moduli")));
            }
        }
        if let Some(&e) = self.mesh.check_jacobians().first() {
            return Err(FemError::Invalid(format!("element {e} has a non-positive Jacobian in the reference configuration")));
        }
        let b = &self.boundary;
        let check = |what: &str, ids: &[usize]| match ids.iter().find(|&&n| n >= nn) {
            Some(n) => Err(FemError::Invalid(format!("{what} references node {n} but the mesh has {nn} nodes"))),
            None => Ok(()),
        };
        for f in &b.fixed {
            check("fixed set", &f.nodes)?;
        }
        for p in &b.prescribed {
            check("prescribed displacement", &p.nodes)?;
            if p.component > 2 || !p.value_mm.is_finite() {
                return Err(FemError::Invalid(format!("bad prescribed displacement component {} / value {}", p.component, p.value_mm)));
            }
            p.curve.validate().map_err(FemError::Invalid)?;
        }
        for l in &b.loads {
            check("nodal load", &l.nodes)?;
            if l.force_n.iter().any(|v| !v.is_finite()) {
                return Err(FemError::Invalid("non-finite nodal load".into()));
            }
            l.curve.validate().map_err(FemError::Invalid)?;
        }
        for s in &b.springs {
            check("spring", &[s.node])?;
            if !(s.stiffness_n_per_mm > 0.0) || !s.stiffness_n_per_mm.is_finite() {
                return Err(FemError::Invalid(format!("spring at node {} has non-positive stiffness", s.node)));
            }
            if let Some(d) = s.direction {
                if !(Vec3::from(d).norm() > 0.0) {
                    return Err(FemError::Invalid(format!("spring at node {} has a zero direction", s.node)));
                }
            }
        }
        self.dof_map()?;
        self.check_rigid_modes()
    }

    /// Classifies every degree of freedom; free ones are numbered in `order`.
    pub(crate) fn dof_map(&self) -> Result<Vec<Dof>, FemError> {
        let nn = self.mesh.node_count();
        let mut dofs: Vec<Option<Dof>> = vec![None; 3 * nn];
        for f in &self.boundary.fixed {
            for &n in &f.nodes {
                for c in (0..3).filter(|&c| f.components[c]) {
                    dofs[3 * n + c] = Some(Dof::Constrained(None));
                }
            }
        }
        for (i, p) in self.boundary.prescribed.iter().enumerate() {
            for &n in &p.nodes {
                let slot = &mut dofs[3 * n + p.component];
                if let Some(Dof::Constrained(Some(j))) = slot {
                    if *j != i {
                        return Err(FemError::Invalid(format!("node {n} component {} is prescribed twice", p.component)));
                    }
                }
                if *slot == Some(Dof::Constrained(None)) {
                    return Err(FemError::Invalid(format!("node {n} component {} is both fixed and prescribed", p.component)));
                }
                *slot = Some(Dof::Constrained(Some(i)));
            }
        }
        // nodes outside every element and spring carry no stiffness
        let mut used = vec![false; nn];
        self.mesh.elements().iter().flatten().for_each(|&n| used[n] = true);
        self.boundary.springs.iter().for_each(|s| used[s.node] = true);
        for l in &self.boundary.loads {
            if let Some(&n) = l.nodes.iter().find(|&&n| !used[n]) {
                return Err(FemError::Invalid(format!("load on node {n}, which has no element or spring")));
            }
        }
        let mut out = Vec::with_capacity(3 * nn);
        for (d, slot) in dofs.into_iter().enumerate() {
            out.push(match slot {
                Some(s) => s,
                None if !used[d / 3] => Dof::Constrained(None),
                None => Dof::Free(0),
            });
        }
        let order = node_ordering(&self.mesh);
        let mut next = 0;
        for n in order {
            for c in 0..3 {
                if let Dof::Free(ref mut k) = out[3 * n + c] {
                    *k = next;
                    next += 1;
                }
            }
        }
        Ok(out)
    }

    /// Each connected piece of the model must have its six rigid-body modes
    /// (three for an isolated spring node) removed by constraints or springs.
    fn check_rigid_modes(&self) -> Result<(), FemError> {
        let nn = self.mesh.node_count();
        let mut uf = UnionFind::new(nn);
        for conn in self.mesh.elements() {
            for &n in &conn[1..] {
                uf.union(conn[0], n);
            }
        }
        let mut in_element = vec![false; nn];
        self.mesh.elements().iter().flatten().for_each(|&n| in_element[n] = true);

        // per component: Σ r rᵀ with r = [d, p × d] for each constraint direction d at p
        let mut gram: BTreeMap<usize, nalgebra::Matrix6<f64>> = BTreeMap::new();
        let nodes = self.mesh.nodes();
        let mut add = |n: usize, d: Vec3| {
            let root = uf.find(n);
            let p = nodes[n] - nodes[root];
            let pc = p.cross(&d);
            let r = nalgebra::Vector6::new(d.x, d.y, d.z, pc.x, pc.y, pc.z);
            *gram.entry(root).or_insert_with(nalgebra::Matrix6::zeros) += r * r.transpose();
        };
        let axes = [Vec3::x(), Vec3::y(), Vec3::z()];
        for f in &self.boundary.fixed {
            for &n in &f.nodes {
                (0..3).filter(|&c| f.components[c]).for_each(|c| add(n, axes[c]));
            }
        }
        for p in &self.boundary.prescribed {
            p.nodes.iter().for_each(|&n| add(n, axes[p.component]));
        }
        for s in &self.boundary.springs {
            match s.direction {
                None => axes.iter().for_each(|&d| add(s.node, d)),
                Some(d) => add(s.node, Vec3::from(d).normalize()),
            }
        }
        let mut roots: Vec<usize> = (0..nn).filter(|&n| in_element[n]).map(|n| uf.find(n)).collect();
        roots.sort_unstable();
        roots.dedup();
        for root in roots {
            let Some(g) = gram.get(&root) else {
                return Err(FemError::RigidBody { node: root });
            };
            let eig = g.symmetric_eigenvalues();
            let max = eig.max();
            // scale-free rank test; lengths enter the rotational rows
            if !(eig.min() > 1e-10 * max) {
                return Err(FemError::RigidBody { node: root });
            }
        }
        // isolated spring nodes only need their translations held
        for s in &self.boundary.springs {
            let n = s.node;
            if in_element[n] {
                continue;
            }
            let k: Mat3 = self.boundary.springs.iter().filter(|o| o.node == n).map(Spring::matrix).sum();
            let free: Vec<usize> = (0..3).filter(|&c| self.dof_map_component_mask(n)[c]).collect();
            if free.is_empty() {
                continue;
            }
            let reduced = nalgebra::DMatrix::from_fn(free.len(), free.len(), |a, b| k[(free[a], free[b])]);
            let eig = reduced.symmetric_eigenvalues();
            if !(eig.min() > 1e-12 * eig.max()) {
                return Err(FemError::RigidBody { node: n });
            }
        }
        Ok(())
    }

    fn dof_map_component_mask(&self, n: usize) -> [bool; 3] {
        let mut free = [true; 3];
        for f in &self.boundary.fixed {
            if f.nodes.contains(&n) {
                (0..3).filter(|&c| f.components[c]).for_each(|c| free[c] = false);
            }
        }
        for p in &self.boundary.prescribed {
            if p.nodes.contains(&n) {
                free[p.component] = false;
            }
        }
        free
    }

    /// Prescribed value of constraint `i` at pseudo-time `t`.
    pub(crate) fn prescribed_value(&self, i: usize, t: f64) -> f64 {
        let p = &self.boundary.prescribed[i];
        p.value_mm * p.curve.scale(t)
    }

    /// Assembled external nodal forces at pseudo-time `t`, length `3·nodes`.
    pub(crate) fn external_forces(&self, t: f64) -> Vec<f64> {
        let mut f = vec![0.0; 3 * self.mesh.node_count()];
        for l in &self.boundary.loads {
            let s = l.curve.scale(t);
            for &n in &l.nodes {
                for c in 0..3 {
                    f[3 * n + c] += l.force_n[c] * s;
                }
            }
        }
        f
    }
}

struct UnionFind(Vec<usize>);

impl UnionFind {
    fn new(n: usize) -> Self {
        Self((0..n).collect())
    }
    fn find(&mut self, mut a: usize) -> usize {
        while self.0[a] != a {
            self.0[a] = self.0[self.0[a]];
            a = self.0[a];
        }
        a
    }
    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            let (lo, hi) = (ra.min(rb), ra.max(rb));
            self.0[hi] = lo;
        }
    }
}

/// Reverse Cuthill–McKee ordering of the node graph. Keeps the Cholesky
/// factor banded; ties break on node id so the order is deterministic.
pub(crate) fn node_ordering(mesh: &HexMesh) -> Vec<usize> {
    let nn = mesh.node_count();
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); nn];
    for conn in mesh.elements() {
        for &a in conn {
            adj[a].extend(conn.iter().copied().filter(|&b| b != a));
        }
    }
    for a in adj.iter_mut() {
        a.sort_unstable();
        a.dedup();
    }
    let degree: Vec<usize> = adj.iter().map(Vec::len).collect();
    let mut visited = vec![false; nn];
    let mut order = Vec::with_capacity(nn);
    let mut by_degree: Vec<usize> = (0..nn).collect();
    by_degree.sort_by_key(|&n| (degree[n], n));
    for &seed in &by_degree {
        if visited[seed] {
            continue;
        }
        let start = pseudo_peripheral(seed, &adj, &degree);
        let mut queue = std::collections::VecDeque::from([start]);
        visited[start] = true;
        while let Some(n) = queue.pop_front() {
            order.push(n);
            let mut next: Vec<usize> = adj[n].iter().copied().filter(|&m| !visited[m]).collect();
            next.sort_by_key(|&m| (degree[m], m));
            for m in next {
                visited[m] = true;
                queue.push_back(m);
            }
        }
    }
    order.reverse();
    order
}

/// Repeated BFS to a node of maximal eccentricity within `seed`'s component.
fn pseudo_peripheral(seed: usize, adj: &[Vec<usize>], degree: &[usize]) -> usize {
    let mut current = seed;
    let mut best_ecc = 0;
    let mut level = vec![usize::MAX; adj.len()];
    let mut touched = Vec::new();
    for _ in 0..8 {
        for &n in &touched {
            level[n] = usize::MAX;
        }
        touched.clear();
        let mut queue = std::collections::VecDeque::from([current]);
        level[current] = 0;
        touched.push(current);
        let mut last_level = Vec::new();
        let mut ecc = 0;
        while let Some(n) = queue.pop_front() {
            if level[n] > ecc {
                ecc = level[n];
                last_level.clear();
            }
            last_level.push(n);
            for &m in &adj[n] {
                if level[m] == usize::MAX {
                    level[m] = level[n] + 1;
                    touched.push(m);
                    queue.push_back(m);
                }
            }
        }
        let candidate = *last_level.iter().min_by_key(|&&n| (degree[n], n)).unwrap_or(&current);
        if ecc <= best_ecc && best_ecc > 0 {
            break;
        }
        best_ecc = ecc;
        current = candidate;
    }
    current
}
