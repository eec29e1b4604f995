//! Shared fixtures for the benchmarks.

use gsgw_core::mesh_io::{make_synthetic, ShapeKind, ShapeParams, TriangleMesh};

/// Seeded bumpy sphere with `10 * 4^subdivisions + 2` vertices.
pub fn bumpy_sphere(subdivisions: u32, seed: u64) -> TriangleMesh {
    make_synthetic(ShapeKind::BumpySphere, subdivisions, &ShapeParams::default(), seed)
        .expect("valid synthetic parameters")
}
