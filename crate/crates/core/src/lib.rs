//! Joint mesh denoising and segmentation with preferred normals.
//!
//! Every face of a triangle mesh is softly assigned to one of a finite set of
//! unit "label" normals while the vertex positions are smoothed towards a
//! piecewise-flat surface whose normals agree with their labels. The
//! nonsmooth problem is split by ADMM ([`admm::run`]); the vertex update is a
//! globalized shape-Newton step ([`shapeopt::shape_step`]).

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod admm;
pub mod energy;
pub mod exec;
pub mod gen;
pub mod mesh;
pub mod prox;
pub mod shapeopt;
pub mod sparse;

pub use admm::{run, AdmmError, IterationMetrics, RunOutcome};
pub use energy::{AdmmState, DualUpdate, LabelSet, ModelParams};
pub use exec::Exec;
pub use mesh::{build_mesh, MeshError, SurfaceMesh, Vec3};
