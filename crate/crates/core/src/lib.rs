//! Image-informed hexahedral finite-element models.
//!
//! The pipeline maps a T₂ relaxation-time raster onto an 8-node hexahedral
//! mesh, converts element T₂ to a dynamic modulus through a clamped linear
//! relation, perturbs that relation, solves compressible neo-Hookean statics
//! and summarizes how the top 1% of stress and strain respond.
//!
//! | module          | contents                                                     |
//! |-----------------|--------------------------------------------------------------|
//! | [`raster`]      | oriented voxel grids, T₂ fitting, anisotropic diffusion      |
//! | [`mesh`]        | hexahedral meshes, trilinear geometry, rigid poses           |
//! | [`transfer`]    | nearest-neighbor and volume-weighted voxel→element transfer  |
//! | [`material`]    | T₂→E_D relation and its perturbation families                |
//! | [`fem`]         | Newton solver for neo-Hookean hexahedral models              |
//! | [`sensitivity`] | top-1% statistics, exceedance counts, percent-change studies |
//! | [`io`]          | on-disk formats shared by the command-line driver            |
//!
//! Data-parallel loops go through [`par`], which dispatches to rayon when the
//! `parallel` feature is enabled and falls back to plain iteration otherwise.

// NaN-rejecting guards are written as negated comparisons.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod fem;
pub mod fixture;
pub mod io;
pub mod material;
pub mod mesh;
pub mod par;
pub mod raster;
pub mod sensitivity;
pub mod transfer;

pub use nalgebra::{Matrix3, Vector3};

/// Millimetre-space point or vector.
pub type Vec3 = Vector3<f64>;
/// 3×3 real matrix (rotations, deformation gradients, stress tensors).
pub type Mat3 = Matrix3<f64>;
