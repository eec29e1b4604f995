//! Deterministic synthetic surfaces: icospheres, ellipsoids and bumpy spheres.

use std::collections::HashMap;
use std::f64::consts::TAU;

use nalgebra::{Point3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::TriangleMesh;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ShapeKind {
    UnitSphere,
    Ellipsoid,
    BumpySphere,
}

impl std::str::FromStr for ShapeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "unit-sphere" | "sphere" => Ok(ShapeKind::UnitSphere),
            "ellipsoid" => Ok(ShapeKind::Ellipsoid),
            "bumpy-sphere" | "bumpy" => Ok(ShapeKind::BumpySphere),
            other => Err(Error::InvalidParam(format!("unknown shape kind {other:?}"))),
        }
    }
}

/// Shape parameters. `axes` applies to ellipsoids and bumpy spheres,
/// `amplitude`/`bumps` only to bumpy spheres.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapeParams {
    pub axes: [f64; 3],
    /// Maximum relative radial deviation.
    pub amplitude: f64,
    /// Number of superposed smooth radial waves.
    pub bumps: usize,
}

impl Default for ShapeParams {
    fn default() -> Self {
        ShapeParams {
            axes: [1.0, 1.0, 1.0],
            amplitude: 0.05,
            bumps: 6,
        }
    }
}

/// Generates a synthetic closed surface on an icosphere with
/// `10 * 4^subdivisions + 2` vertices. Output is a pure function of the arguments.
pub fn make_synthetic(
    kind: ShapeKind,
    subdivisions: u32,
    params: &ShapeParams,
    seed: u64,
) -> Result<TriangleMesh> {
    if subdivisions > 8 {
        return Err(Error::InvalidParam(format!("subdivisions {subdivisions} is too large (max 8)")));
    }
    let (mut vertices, triangles) = icosphere(subdivisions);
    match kind {
        ShapeKind::UnitSphere => {}
        ShapeKind::Ellipsoid => scale_axes(&mut vertices, params)?,
        ShapeKind::BumpySphere => {
            if !(0.0..0.5).contains(&params.amplitude) {
                return Err(Error::InvalidParam(format!(
                    "bump amplitude must lie in [0, 0.5), got {}",
                    params.amplitude
                )));
            }
            if params.bumps == 0 {
                return Err(Error::InvalidParam("bumpy sphere needs at least one bump".into()));
            }
            perturb_radially(&mut vertices, params, seed);
            scale_axes(&mut vertices, params)?;
        }
    }
    TriangleMesh::new(vertices, triangles)
}

fn scale_axes(vertices: &mut [Point3<f64>], params: &ShapeParams) -> Result<()> {
    if let Some(a) = params.axes.iter().find(|a| !(a.is_finite() && **a > 0.0)) {
        return Err(Error::InvalidParam(format!("axis lengths must be positive, got {a}")));
    }
    let s = Vector3::from(params.axes);
    for p in vertices {
        p.coords.component_mul_assign(&s);
    }
    Ok(())
}

/// Radius becomes `1 + amplitude * sum_q w_q sin(f_q <n, d_q> + phase_q)` with
/// `sum_q |w_q| = 1`, so the deviation never exceeds the amplitude.
fn perturb_radially(vertices: &mut [Point3<f64>], params: &ShapeParams, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let waves: Vec<(Vector3<f64>, f64, f64, f64)> = (0..params.bumps)
        .map(|_| {
            let z: f64 = rng.random_range(-1.0..1.0);
            let az: f64 = rng.random_range(0.0..TAU);
            let r = (1.0 - z * z).sqrt();
            let dir = Vector3::new(r * az.cos(), r * az.sin(), z);
            let freq = rng.random_range(1.0..3.0);
            let phase = rng.random_range(0.0..TAU);
            let weight = rng.random_range(0.2..1.0);
            (dir, freq, phase, weight)
        })
        .collect();
    let total: f64 = waves.iter().map(|w| w.3).sum();
    for p in vertices {
        let n = p.coords.normalize();
        let bump: f64 = waves
            .iter()
            .map(|(d, f, ph, w)| w * (f * n.dot(d) + ph).sin())
            .sum::<f64>()
            / total;
        p.coords = n * (1.0 + params.amplitude * bump);
    }
}

/// Icosahedron subdivided by edge midpoints, projected to the unit sphere.
fn icosphere(subdivisions: u32) -> (Vec<Point3<f64>>, Vec<[usize; 3]>) {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let mut vertices: Vec<Point3<f64>> = [
        (-1.0, t, 0.0),
        (1.0, t, 0.0),
        (-1.0, -t, 0.0),
        (1.0, -t, 0.0),
        (0.0, -1.0, t),
        (0.0, 1.0, t),
        (0.0, -1.0, -t),
        (0.0, 1.0, -t),
        (t, 0.0, -1.0),
        (t, 0.0, 1.0),
        (-t, 0.0, -1.0),
        (-t, 0.0, 1.0),
    ]
    .iter()
    .map(|&(x, y, z)| Point3::from(Vector3::new(x, y, z).normalize()))
    .collect();
    let mut triangles: Vec<[usize; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    for _ in 0..subdivisions {
        let mut midpoints: HashMap<(usize, usize), usize> = HashMap::new();
        let mut midpoint = |a: usize, b: usize, vertices: &mut Vec<Point3<f64>>| -> usize {
            *midpoints.entry((a.min(b), a.max(b))).or_insert_with(|| {
                let mid = (vertices[a].coords + vertices[b].coords).normalize();
                vertices.push(Point3::from(mid));
                vertices.len() - 1
            })
        };
        let mut next = Vec::with_capacity(triangles.len() * 4);
        for &[a, b, c] in &triangles {
            let ab = midpoint(a, b, &mut vertices);
            let bc = midpoint(b, c, &mut vertices);
            let ca = midpoint(c, a, &mut vertices);
            next.extend_from_slice(&[[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        triangles = next;
    }
    (vertices, triangles)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn icosahedron_counts() {
        let m = make_synthetic(ShapeKind::UnitSphere, 0, &ShapeParams::default(), 0).unwrap();
        assert_eq!((m.vertex_count(), m.triangle_count()), (12, 20));
        assert!(m.is_closed());
    }

    #[test]
    fn vertex_count_formula() {
        for s in 0..5u32 {
            let m = make_synthetic(ShapeKind::UnitSphere, s, &ShapeParams::default(), 0).unwrap();
            assert_eq!(m.vertex_count(), 10 * 4usize.pow(s) + 2);
            assert_eq!(m.triangle_count(), 20 * 4usize.pow(s));
        }
        let m = make_synthetic(ShapeKind::UnitSphere, 3, &ShapeParams::default(), 0).unwrap();
        assert_eq!(m.vertex_count(), 642);
    }

    #[test]
    fn sphere_vertices_are_on_unit_sphere() {
        let m = make_synthetic(ShapeKind::UnitSphere, 3, &ShapeParams::default(), 0).unwrap();
        for p in m.vertices() {
            assert!((p.coords.norm() - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn bumpy_sphere_is_deterministic() {
        let p = ShapeParams { amplitude: 0.05, ..ShapeParams::default() };
        let a = make_synthetic(ShapeKind::BumpySphere, 2, &p, 7).unwrap();
        let b = make_synthetic(ShapeKind::BumpySphere, 2, &p, 7).unwrap();
        let c = make_synthetic(ShapeKind::BumpySphere, 2, &p, 8).unwrap();
        assert_eq!(a.content_hash(), b.content_hash());
        assert_ne!(a.content_hash(), c.content_hash());
        for v in a.vertices() {
            let r = v.coords.norm();
            assert!((r - 1.0).abs() <= 0.05 + 1e-12);
        }
    }

    #[test]
    fn ellipsoid_axes() {
        let p = ShapeParams { axes: [1.3, 1.0, 0.5], ..ShapeParams::default() };
        let m = make_synthetic(ShapeKind::Ellipsoid, 2, &p, 0).unwrap();
        let max_x = m.vertices().iter().map(|v| v.x).fold(f64::MIN, f64::max);
        let max_z = m.vertices().iter().map(|v| v.z).fold(f64::MIN, f64::max);
        assert!(max_x <= 1.3 + 1e-12 && max_x > 1.2);
        assert!(max_z <= 0.5 + 1e-12);
    }

    #[test]
    fn negative_axis_is_invalid() {
        let p = ShapeParams { axes: [1.0, -1.0, 1.0], ..ShapeParams::default() };
        assert!(matches!(
            make_synthetic(ShapeKind::Ellipsoid, 1, &p, 0),
            Err(Error::InvalidParam(_))
        ));
    }
}
