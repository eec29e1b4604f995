//! Spectral shape analysis of triangle meshes.
//!
//! The crate computes Laplace-Beltrami spectra with the cotangent scheme,
//! per-vertex spectral graph wavelet signatures, their area-weighted global
//! descriptor, and two-group population statistics (PCA, MANOVA and a
//! permutation test) over collections of shapes.
//!
//! ```no_run
//! use gsgw_core::prelude::*;
//!
//! let mesh = make_synthetic(ShapeKind::BumpySphere, 3, &ShapeParams::default(), 7)?;
//! let lap = cotangent_weights(&mesh)?;
//! let es = solve_smallest(&lap, 31)?;
//! let cfg = KernelConfig::from_eigensystem(&es, 30)?;
//! let sig = signature_matrix(&es, &cfg)?;
//! let g = aggregate(&sig, lap.areas(), &mesh.content_hash())?;
//! assert_eq!(g.len(), 495);
//! # Ok::<(), gsgw_core::Error>(())
//! ```

// `!(x > 0.0)` is used on purpose so NaN takes the rejecting branch.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cache;
pub mod eigen;
pub mod error;
pub mod gsgw;
pub mod laplacian;
pub mod mesh_io;
pub mod pipeline;
pub mod reconstruct;
pub mod sgws;
pub mod sparse;
pub mod stats;

pub use error::{Error, Result, Stage};
/// Linear-algebra types used in the public API.
pub use nalgebra;

pub mod prelude {
    pub use crate::eigen::{solve_dense, solve_smallest, solve_smallest_with, spectrum_bounds, EigenSystem, SolverMethod, SolverOptions};
    pub use crate::error::{Error, Result};
    pub use crate::gsgw::{aggregate, gsgw_distance, GsgwVector};
    pub use crate::laplacian::{cotangent_weights, cotangent_weights_with, AreaScheme, LaplacianPair};
    pub use crate::mesh_io::{load_mesh, make_synthetic, rigid_transform, MeshFormat, ShapeKind, ShapeParams, TriangleMesh};
    pub use crate::pipeline::{parameter_sweep, run_group_comparison, run_group_comparison_on_shapes, ComparisonReport, DatasetManifest, RunConfig, Runner, ShapeInput, Side, StratumKey};
    pub use crate::reconstruct::{nmse_curve, spectral_reconstruct, ReconstructionReport};
    pub use crate::stats::{compare_groups, manova_two_group, pca_reduce, permutation_test, DataMatrix, GroupComparison};
    pub use crate::sgws::{mexican_hat, scaling_kernel, signature_matrix, vertex_signature, wavelet_scales, Kernel, KernelConfig, SignatureMatrix};
}
