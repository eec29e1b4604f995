//! Geometry reconstruction from a truncated eigenbasis and its normalized error.

use nalgebra::{Point3, Vector3};
use serde::{Deserialize, Serialize};

use crate::eigen::EigenSystem;
use crate::error::{Error, Result};
use crate::mesh_io::TriangleMesh;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NmseWeighting {
    /// Area-weighted norms centred at the area-weighted centroid; NMSE(1) = 1.
    #[default]
    Area,
    /// Plain vertex sums centred at the plain vertex mean.
    Uniform,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReconstructionReport {
    pub ks: Vec<usize>,
    pub nmse: Vec<f64>,
    /// Reconstructed meshes, when requested.
    pub meshes: Vec<(usize, TriangleMesh)>,
}

impl ReconstructionReport {
    pub fn write_csv<W: std::io::Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "k,nmse")?;
        for (k, e) in self.ks.iter().zip(&self.nmse) {
            writeln!(out, "{k},{e:.11e}")?;
        }
        Ok(())
    }
}

/// Projection of the vertex coordinates onto an eigenbasis.
struct Projection<'a> {
    es: &'a EigenSystem,
    centroid: Vector3<f64>,
    /// A-inner products with each eigenfunction. When the first eigenfunction is
    /// the constant mode it is represented exactly by `centroid` and its entry is zero.
    coefficients: Vec<Vector3<f64>>,
    constant_mode: bool,
}

impl<'a> Projection<'a> {
    fn new(mesh: &TriangleMesh, es: &'a EigenSystem) -> Result<Self> {
        if mesh.vertex_count() != es.vertex_count() {
            return Err(Error::DimensionMismatch {
                expected: mesh.vertex_count(),
                found: es.vertex_count(),
            });
        }
        let a = es.mass();
        let total: f64 = a.iter().sum();
        let centroid = mesh
            .vertices()
            .iter()
            .zip(a)
            .fold(Vector3::zeros(), |acc, (v, ai)| acc + v.coords * *ai)
            / total;
        let phi = es.eigenfunctions();
        let first = phi.column(0);
        let mean = first.mean();
        let constant_mode = mean.abs() > 0.0 && first.iter().all(|x| (x - mean).abs() <= 1e-6 * mean.abs());

        let coefficients = (0..es.k())
            .map(|l| {
                if l == 0 && constant_mode {
                    return Vector3::zeros();
                }
                mesh.vertices().iter().enumerate().fold(Vector3::zeros(), |acc, (i, v)| {
                    let x = if constant_mode { v.coords - centroid } else { v.coords };
                    acc + x * (a[i] * phi[(i, l)])
                })
            })
            .collect();
        Ok(Projection {
            es,
            centroid,
            coefficients,
            constant_mode,
        })
    }

    /// Offset from the centroid (constant mode) or absolute position (otherwise).
    fn partial(&self, i: usize, k: usize) -> Vector3<f64> {
        let phi = self.es.eigenfunctions();
        let start = usize::from(self.constant_mode);
        (start..k).fold(Vector3::zeros(), |acc, l| acc + self.coefficients[l] * phi[(i, l)])
    }

    fn position(&self, i: usize, k: usize) -> Point3<f64> {
        if self.constant_mode {
            Point3::from(self.centroid + self.partial(i, k))
        } else {
            Point3::from(self.partial(i, k))
        }
    }
}

fn check_k(k: usize, es: &EigenSystem) -> Result<()> {
    if k == 0 || k > es.k() {
        return Err(Error::InvalidParam(format!(
            "reconstruction order {k} outside 1..={}",
            es.k()
        )));
    }
    Ok(())
}

/// Replaces each coordinate function by its A-orthogonal projection onto the
/// first `k` eigenfunctions. Connectivity is kept, so low orders can contain
/// collapsed triangles.
pub fn spectral_reconstruct(mesh: &TriangleMesh, es: &EigenSystem, k: usize) -> Result<TriangleMesh> {
    check_k(k, es)?;
    let proj = Projection::new(mesh, es)?;
    let vertices = (0..mesh.vertex_count()).map(|i| proj.position(i, k)).collect();
    Ok(mesh.with_positions_unchecked(vertices))
}

pub fn nmse_curve(mesh: &TriangleMesh, es: &EigenSystem, ks: &[usize]) -> Result<ReconstructionReport> {
    nmse_curve_with(mesh, es, ks, NmseWeighting::Area, false)
}

pub fn nmse_curve_with(
    mesh: &TriangleMesh,
    es: &EigenSystem,
    ks: &[usize],
    weighting: NmseWeighting,
    keep_meshes: bool,
) -> Result<ReconstructionReport> {
    for &k in ks {
        check_k(k, es)?;
    }
    let proj = Projection::new(mesh, es)?;
    let m = mesh.vertex_count();
    let weights: Vec<f64> = match weighting {
        NmseWeighting::Area => es.mass().to_vec(),
        NmseWeighting::Uniform => vec![1.0; m],
    };
    let center = match weighting {
        NmseWeighting::Area => proj.centroid,
        NmseWeighting::Uniform => {
            mesh.vertices().iter().fold(Vector3::zeros(), |acc, v| acc + v.coords) / m as f64
        }
    };
    let denom: f64 = mesh
        .vertices()
        .iter()
        .zip(&weights)
        .map(|(v, w)| w * (v.coords - center).norm_squared())
        .sum();
    if !(denom > 0.0) {
        return Err(Error::Numerical("mesh has zero spread about its centroid".into()));
    }

    let mut nmse = Vec::with_capacity(ks.len());
    let mut meshes = Vec::new();
    for &k in ks {
        let mut num = 0.0;
        for (i, v) in mesh.vertices().iter().enumerate() {
            let r = if proj.constant_mode && weighting == NmseWeighting::Area {
                // Same operations as the denominator when k = 1.
                (v.coords - proj.centroid) - proj.partial(i, k)
            } else {
                v.coords - proj.position(i, k).coords
            };
            num += weights[i] * r.norm_squared();
        }
        nmse.push(num / denom);
        if keep_meshes {
            let vertices = (0..m).map(|i| proj.position(i, k)).collect();
            meshes.push((k, mesh.with_positions_unchecked(vertices)));
        }
    }
    Ok(ReconstructionReport {
        ks: ks.to_vec(),
        nmse,
        meshes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eigen::{solve_dense, solve_smallest};
    use crate::laplacian::cotangent_weights;
    use crate::mesh_io::{make_synthetic, rigid_transform, ShapeKind, ShapeParams};
    use nalgebra::Rotation3;

    fn bumpy(sub: u32) -> TriangleMesh {
        let p = ShapeParams { amplitude: 0.1, axes: [1.2, 1.0, 0.9], bumps: 4 };
        make_synthetic(ShapeKind::BumpySphere, sub, &p, 21).unwrap()
    }

    #[test]
    fn order_one_is_centroid_and_unit_error() {
        let mesh = bumpy(2);
        let lap = cotangent_weights(&mesh).unwrap();
        let es = solve_smallest(&lap, 5).unwrap();
        let rec = spectral_reconstruct(&mesh, &es, 1).unwrap();
        let a = lap.areas();
        let total: f64 = a.iter().sum();
        let c = mesh.vertices().iter().zip(a).fold(Vector3::zeros(), |s, (v, w)| s + v.coords * *w) / total;
        for v in rec.vertices() {
            assert!((v.coords - c).norm() < 1e-14);
        }
        assert_eq!(nmse_curve(&mesh, &es, &[1]).unwrap().nmse, vec![1.0]);
    }

    #[test]
    fn full_basis_is_exact() {
        let mesh = bumpy(1);
        let lap = cotangent_weights(&mesh).unwrap();
        let m = mesh.vertex_count();
        let es = solve_dense(&lap, m).unwrap();
        let rec = spectral_reconstruct(&mesh, &es, m).unwrap();
        for (a, b) in rec.vertices().iter().zip(mesh.vertices()) {
            assert!((a - b).norm() < 1e-8);
        }
        assert!(nmse_curve(&mesh, &es, &[m]).unwrap().nmse[0] < 1e-12);
    }

    #[test]
    fn sphere_order_four_is_near_exact() {
        let mesh = make_synthetic(ShapeKind::UnitSphere, 2, &ShapeParams::default(), 0).unwrap();
        let es = solve_smallest(&cotangent_weights(&mesh).unwrap(), 4).unwrap();
        assert!(nmse_curve(&mesh, &es, &[4]).unwrap().nmse[0] < 0.05);
    }

    #[test]
    fn curve_is_monotone() {
        let mesh = bumpy(3);
        let es = solve_smallest(&cotangent_weights(&mesh).unwrap(), 50).unwrap();
        let ks: Vec<usize> = (1..=50).collect();
        let r = nmse_curve(&mesh, &es, &ks).unwrap();
        assert!(r.nmse.windows(2).all(|w| w[1] <= w[0] + 1e-12));
        assert!(r.nmse.iter().all(|&e| (0.0..=1.0 + 1e-12).contains(&e)));
    }

    #[test]
    fn rigid_motion_equivariance() {
        let mesh = bumpy(2);
        let rot = Rotation3::from_euler_angles(0.4, 0.9, -0.2).into_inner();
        let t = Vector3::new(1.0, 2.0, -3.0);
        let moved = rigid_transform(&mesh, &rot, &t).unwrap();
        let es = solve_smallest(&cotangent_weights(&mesh).unwrap(), 12).unwrap();
        let es_moved = solve_smallest(&cotangent_weights(&moved).unwrap(), 12).unwrap();
        // Only complete eigenspaces are basis-independent; 12 falls in a gap here.
        let a = spectral_reconstruct(&mesh, &es, 12).unwrap();
        let b = spectral_reconstruct(&moved, &es_moved, 12).unwrap();
        for (p, q) in a.vertices().iter().zip(b.vertices()) {
            assert!((rot * p.coords + t - q.coords).norm() < 1e-8);
        }
    }

    #[test]
    fn order_beyond_basis_is_invalid() {
        let mesh = bumpy(1);
        let es = solve_smallest(&cotangent_weights(&mesh).unwrap(), 3).unwrap();
        assert!(matches!(spectral_reconstruct(&mesh, &es, 4), Err(Error::InvalidParam(_))));
        assert!(matches!(nmse_curve(&mesh, &es, &[0]), Err(Error::InvalidParam(_))));
    }

    #[test]
    fn uniform_weighting_variant() {
        let mesh = bumpy(2);
        let es = solve_smallest(&cotangent_weights(&mesh).unwrap(), 20).unwrap();
        let r = nmse_curve_with(&mesh, &es, &[1, 10, 20], NmseWeighting::Uniform, true).unwrap();
        assert_eq!(r.meshes.len(), 3);
        assert!(r.nmse[2] < r.nmse[0]);
    }
}
