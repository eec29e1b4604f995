//! Triangle mesh data model, file formats and synthetic generators.

mod io;
mod synthetic;

use std::collections::HashMap;

use nalgebra::{Matrix3, Point3, Vector3};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub use io::{load_mesh, load_mesh_with_provenance, parse_mesh, save_mesh, write_off, OffPrecision};
pub use synthetic::{make_synthetic, ShapeKind, ShapeParams};

/// Triangles whose area falls below this fraction of their longest squared
/// edge are treated as zero-area.
const DEGENERATE_AREA_RATIO: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MeshFormat {
    Off,
    Obj,
    PlyAscii,
    Synthetic,
}

impl MeshFormat {
    pub fn from_extension(ext: &str) -> Option<Self> {
        match ext.to_ascii_lowercase().as_str() {
            "off" => Some(MeshFormat::Off),
            "obj" => Some(MeshFormat::Obj),
            "ply" => Some(MeshFormat::PlyAscii),
            _ => None,
        }
    }
}

/// Where a mesh came from. The label is carried through the pipeline untouched.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeshProvenance {
    pub source_path: String,
    pub format: MeshFormat,
    pub label: Option<String>,
}

/// A validated triangle mesh with `f64` vertex positions.
///
/// Construction through [`TriangleMesh::new`] enforces index ranges, distinct
/// corners, non-zero triangle areas, at most two faces per edge and the absence
/// of isolated vertices. The mesh is immutable afterwards.
#[derive(Debug, Clone, PartialEq)]
pub struct TriangleMesh {
    vertices: Vec<Point3<f64>>,
    triangles: Vec<[usize; 3]>,
}

impl TriangleMesh {
    pub fn new(vertices: Vec<Point3<f64>>, triangles: Vec<[usize; 3]>) -> Result<Self> {
        validate(&vertices, &triangles)?;
        Ok(TriangleMesh {
            vertices,
            triangles,
        })
    }

    /// Replaces vertex positions while keeping already validated connectivity.
    /// Used for derived geometry (reconstructions) where collapsed triangles
    /// are legitimate output.
    pub(crate) fn with_positions_unchecked(&self, vertices: Vec<Point3<f64>>) -> Self {
        debug_assert_eq!(vertices.len(), self.vertices.len());
        TriangleMesh {
            vertices,
            triangles: self.triangles.clone(),
        }
    }

    pub fn vertices(&self) -> &[Point3<f64>] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn triangle_count(&self) -> usize {
        self.triangles.len()
    }

    pub fn triangle_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangles[t];
        triangle_area(&self.vertices[a], &self.vertices[b], &self.vertices[c])
    }

    pub fn surface_area(&self) -> f64 {
        (0..self.triangles.len()).map(|t| self.triangle_area(t)).sum()
    }

    /// Undirected edges as sorted `(lo, hi)` pairs with their incident face count.
    pub fn edge_incidence(&self) -> Vec<((usize, usize), usize)> {
        let mut counts = edge_counts(&self.triangles);
        let mut edges: Vec<_> = counts.drain().collect();
        edges.sort_unstable();
        edges
    }

    pub fn edges(&self) -> Vec<(usize, usize)> {
        self.edge_incidence().into_iter().map(|(e, _)| e).collect()
    }

    pub fn boundary_edges(&self) -> Vec<(usize, usize)> {
        self.edge_incidence()
            .into_iter()
            .filter(|&(_, n)| n == 1)
            .map(|(e, _)| e)
            .collect()
    }

    pub fn is_closed(&self) -> bool {
        self.edge_incidence().iter().all(|&(_, n)| n == 2)
    }

    /// SHA-256 over vertex bit patterns and connectivity, hex encoded.
    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(b"trimesh\0");
        h.update((self.vertices.len() as u64).to_le_bytes());
        h.update((self.triangles.len() as u64).to_le_bytes());
        for v in &self.vertices {
            for c in v.iter() {
                h.update(c.to_bits().to_le_bytes());
            }
        }
        for t in &self.triangles {
            for &i in t {
                h.update((i as u64).to_le_bytes());
            }
        }
        hex::encode(h.finalize())
    }

    /// Uniformly scales all vertex positions about the origin.
    pub fn scaled(&self, s: f64) -> Result<Self> {
        if !(s.is_finite() && s > 0.0) {
            return Err(Error::InvalidParam(format!("scale factor must be positive, got {s}")));
        }
        let vertices = self.vertices.iter().map(|p| Point3::from(p.coords * s)).collect();
        TriangleMesh::new(vertices, self.triangles.clone())
    }
}

/// Applies `x -> R x + t`. `R` must be orthogonal to within 1e-10; reflections are allowed.
pub fn rigid_transform(
    mesh: &TriangleMesh,
    rotation: &Matrix3<f64>,
    translation: &Vector3<f64>,
) -> Result<TriangleMesh> {
    let defect = (rotation.transpose() * rotation - Matrix3::identity()).amax();
    if !(defect <= 1e-10) {
        return Err(Error::InvalidParam(format!(
            "rotation is not orthogonal (max |R^T R - I| = {defect:.3e})"
        )));
    }
    if translation.iter().any(|c| !c.is_finite()) {
        return Err(Error::InvalidParam("translation must be finite".into()));
    }
    let vertices = mesh
        .vertices
        .iter()
        .map(|p| Point3::from(rotation * p.coords + translation))
        .collect();
    Ok(TriangleMesh {
        vertices,
        triangles: mesh.triangles.clone(),
    })
}

pub(crate) fn triangle_area(a: &Point3<f64>, b: &Point3<f64>, c: &Point3<f64>) -> f64 {
    0.5 * (b - a).cross(&(c - a)).norm()
}

fn edge_counts(triangles: &[[usize; 3]]) -> HashMap<(usize, usize), usize> {
    let mut counts = HashMap::with_capacity(triangles.len() * 3 / 2 + 1);
    for t in triangles {
        for k in 0..3 {
            let (i, j) = (t[k], t[(k + 1) % 3]);
            *counts.entry((i.min(j), i.max(j))).or_insert(0) += 1;
        }
    }
    counts
}

fn validate(vertices: &[Point3<f64>], triangles: &[[usize; 3]]) -> Result<()> {
    let m = vertices.len();
    if m < 3 {
        return Err(Error::Validation(format!("mesh needs at least 3 vertices, has {m}")));
    }
    if triangles.is_empty() {
        return Err(Error::Validation("mesh has no triangles".into()));
    }
    if let Some(i) = vertices.iter().position(|p| p.iter().any(|c| !c.is_finite())) {
        return Err(Error::Validation(format!("vertex {i} has a non-finite coordinate")));
    }
    let mut used = vec![false; m];
    for (t, tri) in triangles.iter().enumerate() {
        for &i in tri {
            if i >= m {
                return Err(Error::Validation(format!(
                    "triangle {t} references vertex {i}, but the mesh has {m} vertices"
                )));
            }
            used[i] = true;
        }
        let [a, b, c] = *tri;
        if a == b || b == c || a == c {
            return Err(Error::Validation(format!("triangle {t} repeats a vertex: {tri:?}")));
        }
        let (pa, pb, pc) = (&vertices[a], &vertices[b], &vertices[c]);
        let longest = (pb - pa)
            .norm_squared()
            .max((pc - pb).norm_squared())
            .max((pa - pc).norm_squared());
        if triangle_area(pa, pb, pc) <= DEGENERATE_AREA_RATIO * longest {
            return Err(Error::Validation(format!("triangle {t} has zero area")));
        }
    }
    if let Some(i) = used.iter().position(|u| !u) {
        return Err(Error::Validation(format!("vertex {i} is not referenced by any triangle")));
    }
    let counts = edge_counts(triangles);
    let mut bad: Vec<_> = counts.iter().filter(|(_, &n)| n > 2).collect();
    if !bad.is_empty() {
        bad.sort_unstable();
        let ((i, j), n) = bad[0];
        return Err(Error::Validation(format!(
            "non-manifold edge ({i}, {j}) is shared by {n} triangles"
        )));
    }
    Ok(())
}
