//! Seeded two-group populations of synthetic shapes, in memory or on disk.

use std::path::Path;
use std::sync::Arc;

use super::manifest::{DatasetManifest, ManifestEntry, Side, StratumKey};
use super::{ShapeInput, ShapeSource};
use crate::error::{Error, Result};
use crate::mesh_io::{make_synthetic, save_mesh, OffPrecision, ShapeKind, ShapeParams};

#[derive(Debug, Clone, PartialEq)]
pub struct PopulationSpec {
    pub per_group: usize,
    pub subdivisions: u32,
    /// Relative bump amplitude applied to every shape.
    pub amplitude: f64,
    /// Semi-axes of the second group; the first group is always spherical.
    /// Equal to `[1, 1, 1]` for a null population.
    pub axes_b: [f64; 3],
    pub bone: String,
    pub side: Side,
}

impl PopulationSpec {
    /// Bumpy spheres against bumpy 1.3:1:1 ellipsoids.
    pub fn separated(per_group: usize, subdivisions: u32) -> Self {
        PopulationSpec {
            per_group,
            subdivisions,
            amplitude: 0.05,
            axes_b: [1.3, 1.0, 1.0],
            bone: "synthetic".into(),
            side: Side::Left,
        }
    }

    /// Both groups drawn from the same bumpy-sphere distribution.
    pub fn null(per_group: usize, subdivisions: u32) -> Self {
        PopulationSpec {
            axes_b: [1.0, 1.0, 1.0],
            ..Self::separated(per_group, subdivisions)
        }
    }
}

/// Shape `i` of the population uses its own seed derived from `seed`, so
/// every shape is an independent draw. Groups are labelled `a` and `b`.
pub fn synthetic_population(spec: &PopulationSpec, seed: u64) -> Result<Vec<ShapeInput>> {
    if spec.per_group < 2 {
        return Err(Error::InvalidParam("each group needs at least 2 shapes".into()));
    }
    let stratum = StratumKey {
        bone: spec.bone.clone(),
        side: spec.side,
    };
    (0..2 * spec.per_group)
        .map(|i| {
            let in_b = i >= spec.per_group;
            let params = ShapeParams {
                axes: if in_b { spec.axes_b } else { [1.0; 3] },
                amplitude: spec.amplitude,
                ..ShapeParams::default()
            };
            let shape_seed = seed.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(i as u64);
            let mesh = make_synthetic(ShapeKind::BumpySphere, spec.subdivisions, &params, shape_seed)?;
            Ok(ShapeInput {
                id: format!("s{i:03}"),
                group: if in_b { "b" } else { "a" }.to_string(),
                stratum: stratum.clone(),
                source: ShapeSource::Mesh(Arc::new(mesh)),
            })
        })
        .collect()
}

/// Writes in-memory shapes as exact-precision OFF files plus `manifest.csv`.
pub fn write_dataset(shapes: &[ShapeInput], dir: &Path) -> Result<DatasetManifest> {
    std::fs::create_dir_all(dir)?;
    let mut entries = Vec::with_capacity(shapes.len());
    for s in shapes {
        let ShapeSource::Mesh(mesh) = &s.source else {
            return Err(Error::InvalidParam(format!("shape {} is not in memory", s.id)));
        };
        let file = format!("{}_{}_{}_{}.off", s.stratum.bone, s.stratum.side, s.group, s.id);
        save_mesh(mesh, dir.join(&file), OffPrecision::Exact)?;
        entries.push(ManifestEntry {
            path: file.into(),
            subject: s.id.clone(),
            group: s.group.clone(),
            bone: s.stratum.bone.clone(),
            side: s.stratum.side,
        });
    }
    let manifest = DatasetManifest::new(dir, entries)?;
    let mut buf = Vec::new();
    manifest.write_csv(&mut buf)?;
    crate::cache::write_atomic(&dir.join("manifest.csv"), &buf)?;
    Ok(manifest)
}
