//! Quasi-static compressible neo-Hookean solver on trilinear hexahedra.
//!
//! Lengths are mm, forces N, spring stiffness N/mm. Element moduli and all
//! reported stresses are Pa; the solver works internally in MPa (N/mm²).
//! Pseudo-time `t ∈ [0, 1]` only scales loads.

mod constitutive;
mod element;
mod model;
mod principal;
mod solver;

pub use constitutive::{cauchy_stress, first_piola, green_lagrange, strain_energy_density, tangent};
pub use model::{
    Boundary, FEModel, FixedBc, LoadCurve, NodalLoad, PrescribedDisplacement, Spring, StepSchedule, RAMP_END,
    RAMP_END_MARKER,
};
pub use principal::{principal_and_shear, Principal};
pub use solver::{
    internal_forces, solve_static, strain_energy, SolutionState, SolverOptions, StepDiagnostics, StepResult,
};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FemError {
    #[error("deformation gradient has non-positive determinant {det}")]
    Inverted { det: f64 },
    #[error("invalid model: {0}")]
    Invalid(String),
    #[error("invalid step schedule: {0}")]
    Schedule(String),
    #[error("rigid-body motion is unconstrained in the part of the model containing node {node}")]
    RigidBody { node: usize },
    #[error("step {step} (t = {time}): no convergence, residual {residual:.3e} N, worst element {element}")]
    NonConvergence { step: usize, time: f64, element: usize, residual: f64 },
    #[error("step {step} (t = {time}): element {element} inverted")]
    ElementInversion { step: usize, time: f64, element: usize },
    #[error("step {step} (t = {time}): stiffness matrix is not positive definite, most compressed element {element}")]
    Singular { step: usize, time: f64, element: usize },
}
