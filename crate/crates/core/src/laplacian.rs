//! Cotangent discretization of the Laplace-Beltrami operator.
//!
//! The stiffness matrix is `W = diag(sum_k c_ik) - (c_ij)` with edge weights
//! `c_ij = (cot a_ij + cot b_ij) / 2` taken from the two angles opposite the
//! edge (a single angle on boundary edges). The mass matrix is diagonal and
//! holds per-vertex Voronoi areas, so `L = A^-1 W`.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh_io::TriangleMesh;
use crate::sparse::CsrMatrix;

/// Angles below this (radians) make cotangents numerically meaningless.
pub const MIN_ANGLE: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AreaScheme {
    /// Mixed finite-element/finite-volume Voronoi areas with the obtuse-triangle rule.
    #[default]
    MixedVoronoi,
    /// One third of each incident triangle's area.
    Barycentric,
}

impl AreaScheme {
    pub fn id(&self) -> &'static str {
        match self {
            AreaScheme::MixedVoronoi => "mixed",
            AreaScheme::Barycentric => "barycentric",
        }
    }
}

impl std::str::FromStr for AreaScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mixed" | "mixed-voronoi" | "voronoi" => Ok(AreaScheme::MixedVoronoi),
            "barycentric" => Ok(AreaScheme::Barycentric),
            other => Err(Error::InvalidParam(format!("unknown area scheme {other:?}"))),
        }
    }
}

/// Stiffness matrix `W` and diagonal mass matrix `A` of a mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct LaplacianPair {
    stiffness: CsrMatrix,
    areas: Vec<f64>,
    scheme: AreaScheme,
}

impl LaplacianPair {
    pub fn stiffness(&self) -> &CsrMatrix {
        &self.stiffness
    }

    pub fn areas(&self) -> &[f64] {
        &self.areas
    }

    pub fn scheme(&self) -> AreaScheme {
        self.scheme
    }

    pub fn dim(&self) -> usize {
        self.areas.len()
    }

    /// Cotangent edge weight `c_ij` (zero when `i` and `j` are not adjacent).
    pub fn edge_weight(&self, i: usize, j: usize) -> f64 {
        if i == j {
            0.0
        } else {
            -self.stiffness.get(i, j)
        }
    }

    /// Evaluates `A^-1 W f`.
    pub fn apply_operator(&self, f: &[f64]) -> Result<Vec<f64>> {
        if f.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: f.len(),
            });
        }
        let mut out = self.stiffness.mul_vec(f);
        for (o, a) in out.iter_mut().zip(&self.areas) {
            *o /= a;
        }
        Ok(out)
    }

    /// Writes `W` followed by `A` as whitespace separated `i j value` lines.
    /// Mass entries are written with `i == j` under a `# mass` marker.
    pub fn write_coo<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "# stiffness {} {}", self.dim(), self.stiffness.nnz())?;
        for (i, j, v) in self.stiffness.triplets() {
            writeln!(out, "{i} {j} {v:?}")?;
        }
        writeln!(out, "# mass {}", self.dim())?;
        for (i, a) in self.areas.iter().enumerate() {
            writeln!(out, "{i} {i} {a:?}")?;
        }
        Ok(())
    }
}

pub fn cotangent_weights(mesh: &TriangleMesh) -> Result<LaplacianPair> {
    cotangent_weights_with(mesh, AreaScheme::MixedVoronoi)
}

/// Assembles `W` and `A` triangle by triangle in a fixed order, so the result
/// is bitwise reproducible.
pub fn cotangent_weights_with(mesh: &TriangleMesh, scheme: AreaScheme) -> Result<LaplacianPair> {
    let m = mesh.vertex_count();
    let v = mesh.vertices();
    let mut triplets = Vec::with_capacity(mesh.triangle_count() * 6 + m);
    let mut areas = vec![0.0; m];

    for (t, tri) in mesh.triangles().iter().enumerate() {
        let p = [v[tri[0]], v[tri[1]], v[tri[2]]];
        let area = mesh.triangle_area(t);
        let mut cot = [0.0; 3];
        let mut obtuse = None;
        for k in 0..3 {
            // Angle at corner k, opposite the edge (k+1, k+2).
            let e1 = p[(k + 1) % 3] - p[k];
            let e2 = p[(k + 2) % 3] - p[k];
            let dot = e1.dot(&e2);
            let cross = e1.cross(&e2).norm();
            let angle = cross.atan2(dot);
            if angle < MIN_ANGLE || std::f64::consts::PI - angle < MIN_ANGLE {
                return Err(Error::Numerical(format!(
                    "triangle {t} has a near-degenerate angle of {angle:.3e} rad"
                )));
            }
            cot[k] = dot / cross;
            if dot < 0.0 {
                obtuse = Some(k);
            }
        }
        for k in 0..3 {
            let (i, j) = (tri[(k + 1) % 3], tri[(k + 2) % 3]);
            let w = 0.5 * cot[k];
            triplets.push((i, j, -w));
            triplets.push((j, i, -w));
        }

        match scheme {
            AreaScheme::Barycentric => {
                for &i in tri {
                    areas[i] += area / 3.0;
                }
            }
            AreaScheme::MixedVoronoi => match obtuse {
                None => {
                    for k in 0..3 {
                        let (b, c) = ((k + 1) % 3, (k + 2) % 3);
                        // Voronoi share: (|PR|^2 cot Q + |PQ|^2 cot R) / 8.
                        let pq = (p[b] - p[k]).norm_squared();
                        let pr = (p[c] - p[k]).norm_squared();
                        areas[tri[k]] += (pr * cot[b] + pq * cot[c]) / 8.0;
                    }
                }
                Some(o) => {
                    for k in 0..3 {
                        areas[tri[k]] += if k == o { area / 2.0 } else { area / 4.0 };
                    }
                }
            },
        }
    }

    // Off-diagonal sums in the order the CSR rows store them.
    let offdiag = CsrMatrix::from_triplets(m, triplets);
    let mut full: Vec<(usize, usize, f64)> = offdiag.triplets().collect();
    for i in 0..m {
        let s: f64 = offdiag.row(i).map(|(_, w)| -w).sum();
        full.push((i, i, s));
    }
    let stiffness = CsrMatrix::from_triplets(m, full);

    if let Some((i, &a)) = areas.iter().enumerate().find(|(_, a)| !(**a > 0.0)) {
        return Err(Error::Numerical(format!("vertex {i} has non-positive area {a}")));
    }
    Ok(LaplacianPair {
        stiffness,
        areas,
        scheme,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh_io::{make_synthetic, rigid_transform, ShapeKind, ShapeParams};
    use nalgebra::{Matrix3, Point3, Rotation3, Vector3};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn two_equilateral() -> TriangleMesh {
        let h = 3f64.sqrt() / 2.0;
        let v = vec![
            Point3::new(0.0, 0.0, 0.0),
            Point3::new(1.0, 0.0, 0.0),
            Point3::new(0.5, h, 0.0),
            Point3::new(0.5, -h, 0.0),
        ];
        TriangleMesh::new(v, vec![[0, 1, 2], [1, 0, 3]]).unwrap()
    }

    fn planar_grid(w: usize) -> TriangleMesh {
        let mut v = Vec::new();
        for r in 0..w {
            for c in 0..w {
                // A slight shear keeps the triangles irregular.
                v.push(Point3::new(c as f64 + 0.3 * r as f64, r as f64 * 0.9, 0.0));
            }
        }
        let mut t = Vec::new();
        for r in 0..w - 1 {
            for c in 0..w - 1 {
                let i = r * w + c;
                t.push([i, i + 1, i + w + 1]);
                t.push([i, i + w + 1, i + w]);
            }
        }
        TriangleMesh::new(v, t).unwrap()
    }

    fn sphere(sub: u32) -> TriangleMesh {
        make_synthetic(ShapeKind::UnitSphere, sub, &ShapeParams::default(), 0).unwrap()
    }

    fn bumpy() -> TriangleMesh {
        let p = ShapeParams { amplitude: 0.15, axes: [1.2, 1.0, 0.8], bumps: 5 };
        make_synthetic(ShapeKind::BumpySphere, 2, &p, 11).unwrap()
    }

    #[test]
    fn shared_edge_weight_of_two_equilateral_triangles() {
        let lap = cotangent_weights(&two_equilateral()).unwrap();
        let expected = 1.0 / 3f64.sqrt();
        assert!((lap.edge_weight(0, 1) - expected).abs() < 1e-14);
        // Boundary edge: a single 60 degree angle.
        assert!((lap.edge_weight(0, 2) - expected / 2.0).abs() < 1e-14);
        assert_eq!(lap.edge_weight(2, 3), 0.0);
    }

    #[test]
    fn constants_are_in_the_kernel() {
        for mesh in [sphere(2), bumpy(), planar_grid(6)] {
            let lap = cotangent_weights(&mesh).unwrap();
            let out = lap.stiffness().mul_vec(&vec![1.0; mesh.vertex_count()]);
            let tol = 1e-10 * lap.stiffness().max_abs();
            assert!(out.iter().all(|x| x.abs() < tol));
            let op = lap.apply_operator(&vec![3.5; mesh.vertex_count()]).unwrap();
            assert!(op.iter().all(|x| x.abs() < 1e-9));
        }
    }

    #[test]
    fn stiffness_is_exactly_symmetric_with_edge_support() {
        let mesh = bumpy();
        let lap = cotangent_weights(&mesh).unwrap();
        let edges: std::collections::HashSet<_> = mesh.edges().into_iter().collect();
        for (i, j, v) in lap.stiffness().triplets() {
            assert_eq!(v, lap.stiffness().get(j, i));
            if i != j && v != 0.0 {
                assert!(edges.contains(&(i.min(j), i.max(j))));
            }
        }
    }

    #[test]
    fn areas_partition_surface() {
        for scheme in [AreaScheme::MixedVoronoi, AreaScheme::Barycentric] {
            for mesh in [sphere(3), bumpy(), planar_grid(5)] {
                let lap = cotangent_weights_with(&mesh, scheme).unwrap();
                let total: f64 = lap.areas().iter().sum();
                let exact = mesh.surface_area();
                assert!(((total - exact) / exact).abs() < 1e-10);
                assert!(lap.areas().iter().all(|&a| a > 0.0));
            }
        }
    }

    #[test]
    fn icosphere_area_near_four_pi() {
        let lap = cotangent_weights(&sphere(3)).unwrap();
        let total: f64 = lap.areas().iter().sum();
        let four_pi = 4.0 * std::f64::consts::PI;
        assert!(((total - four_pi) / four_pi).abs() < 0.01);
    }

    #[test]
    fn linear_function_is_harmonic_on_planar_interior() {
        let w = 7;
        let mesh = planar_grid(w);
        let lap = cotangent_weights(&mesh).unwrap();
        let f: Vec<f64> = mesh.vertices().iter().map(|p| p.x).collect();
        let g: Vec<f64> = mesh.vertices().iter().map(|p| p.y).collect();
        let lf = lap.apply_operator(&f).unwrap();
        let lg = lap.apply_operator(&g).unwrap();
        for r in 1..w - 1 {
            for c in 1..w - 1 {
                let i = r * w + c;
                assert!(lf[i].abs() < 1e-12, "{}", lf[i]);
                assert!(lg[i].abs() < 1e-12);
            }
        }
    }

    #[test]
    fn dimension_mismatch() {
        let lap = cotangent_weights(&two_equilateral()).unwrap();
        assert!(matches!(lap.apply_operator(&[1.0; 3]), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn stiffness_is_positive_semidefinite() {
        let lap = cotangent_weights(&bumpy()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let v: Vec<f64> = (0..lap.dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let wv = lap.stiffness().mul_vec(&v);
            let q: f64 = v.iter().zip(&wv).map(|(a, b)| a * b).sum();
            let n2: f64 = v.iter().map(|x| x * x).sum();
            assert!(q >= -1e-10 * n2);
        }
    }

    #[test]
    fn uniform_scaling_scales_areas_only() {
        let mesh = bumpy();
        let s = 3.0;
        let a = cotangent_weights(&mesh).unwrap();
        let b = cotangent_weights(&mesh.scaled(s).unwrap()).unwrap();
        for ((i, j, wa), (_, _, wb)) in a.stiffness().triplets().zip(b.stiffness().triplets()) {
            assert!((wa - wb).abs() <= 1e-12 * wa.abs().max(1.0), "W[{i},{j}]");
        }
        for (x, y) in a.areas().iter().zip(b.areas()) {
            assert!((y - s * s * x).abs() <= 1e-12 * y);
        }
    }

    #[test]
    fn rigid_motion_leaves_operator_unchanged() {
        let mesh = bumpy();
        let r = Rotation3::from_euler_angles(0.3, -1.1, 2.0).into_inner();
        let moved = rigid_transform(&mesh, &r, &Vector3::new(4.0, -2.0, 0.5)).unwrap();
        let a = cotangent_weights(&mesh).unwrap();
        let b = cotangent_weights(&moved).unwrap();
        for ((_, _, wa), (_, _, wb)) in a.stiffness().triplets().zip(b.stiffness().triplets()) {
            assert!((wa - wb).abs() < 1e-12);
        }
        for (x, y) in a.areas().iter().zip(b.areas()) {
            assert!((x - y).abs() < 1e-12);
        }
        let flip = Matrix3::from_diagonal(&Vector3::new(-1.0, 1.0, 1.0));
        let mirrored = rigid_transform(&mesh, &flip, &Vector3::zeros()).unwrap();
        let c = cotangent_weights(&mirrored).unwrap();
        for (x, y) in a.areas().iter().zip(c.areas()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn obtuse_triangle_uses_half_and_quarter_split() {
        let v = vec![Point3::new(0.0, 0.0, 0.0), Point3::new(4.0, 0.0, 0.0), Point3::new(0.5, 0.5, 0.0)];
        let mesh = TriangleMesh::new(v, vec![[0, 1, 2]]).unwrap();
        let lap = cotangent_weights(&mesh).unwrap();
        let area = mesh.surface_area();
        assert!((lap.areas()[2] - area / 2.0).abs() < 1e-15);
        assert!((lap.areas()[0] - area / 4.0).abs() < 1e-15);
        // Negative weight opposite the obtuse angle is kept.
        assert!(lap.edge_weight(0, 1) < 0.0);
    }

    #[test]
    fn sliver_angle_is_numerical_error() {
        let v = vec![Point3::new(0.0, 0.0, 0.0), Point3::new(1.0, 0.0, 0.0), Point3::new(0.5, 1e-10, 0.0)];
        // Passes the relative area test only if its ratio exceeds 1e-12.
        let mesh = TriangleMesh::new(v, vec![[0, 1, 2]]).unwrap();
        assert!(matches!(cotangent_weights(&mesh), Err(Error::Numerical(_))));
    }

    #[test]
    fn coo_dump_lists_all_entries() {
        let lap = cotangent_weights(&two_equilateral()).unwrap();
        let mut buf = Vec::new();
        lap.write_coo(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let data_lines = text.lines().filter(|l| !l.starts_with('#')).count();
        assert_eq!(data_lines, lap.stiffness().nnz() + 4);
    }
}
