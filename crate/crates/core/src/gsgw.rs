//! Global descriptor: the signature matrix weighted by the vertex area vector, `g = S a`.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sgws::{signature_length, SignatureMatrix};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GsgwVector {
    pub values: Vec<f64>,
    pub resolution: usize,
    pub mesh_hash: String,
}

impl GsgwVector {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Divides by the total surface area, for comparisons across tessellations.
    pub fn normalized_by_area(&self, total_area: f64) -> Result<GsgwVector> {
        if !(total_area > 0.0) {
            return Err(Error::InvalidParam(format!("total area must be positive, got {total_area}")));
        }
        Ok(GsgwVector {
            values: self.values.iter().map(|v| v / total_area).collect(),
            ..self.clone()
        })
    }
}

pub fn aggregate(sig: &SignatureMatrix, areas: &[f64], mesh_hash: &str) -> Result<GsgwVector> {
    let s = sig.matrix();
    if areas.len() != s.ncols() {
        return Err(Error::DimensionMismatch {
            expected: s.ncols(),
            found: areas.len(),
        });
    }
    let values = s
        .row_iter()
        .map(|row| row.iter().zip(areas).map(|(x, a)| x * a).sum())
        .collect();
    Ok(GsgwVector {
        values,
        resolution: sig.resolution(),
        mesh_hash: mesh_hash.to_string(),
    })
}

pub fn gsgw_distance(a: &GsgwVector, b: &GsgwVector) -> Result<f64> {
    if a.resolution != b.resolution || a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            found: b.len(),
        });
    }
    Ok(a.values
        .iter()
        .zip(&b.values)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt())
}

/// One descriptor row for CSV export.
#[derive(Debug, Clone, PartialEq)]
pub struct GsgwRow {
    pub id: String,
    pub label: String,
    pub gsgw: GsgwVector,
}

/// Writes `id,label,g1..gp` rows with a header; all rows must share one resolution.
pub fn write_gsgw_csv<W: Write>(rows: &[GsgwRow], out: W) -> Result<()> {
    let Some(first) = rows.first() else {
        return Err(Error::InvalidParam("no descriptors to write".into()));
    };
    let p = signature_length(first.gsgw.resolution);
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["id".to_string(), "label".to_string()];
    header.extend((1..=p).map(|i| format!("g{i}")));
    w.write_record(&header)?;
    for row in rows {
        if row.gsgw.len() != p {
            return Err(Error::DimensionMismatch {
                expected: p,
                found: row.gsgw.len(),
            });
        }
        let mut rec = vec![row.id.clone(), row.label.clone()];
        rec.extend(row.gsgw.values.iter().map(|v| format!("{v:.11e}")));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads rows produced by [`write_gsgw_csv`].
pub fn read_gsgw_csv<R: std::io::Read>(input: R) -> Result<Vec<GsgwRow>> {
    let mut r = csv::Reader::from_reader(input);
    let p = r.headers()?.len().saturating_sub(2);
    let resolution = (1..=64)
        .find(|&res| signature_length(res) == p)
        .ok_or_else(|| Error::InvalidParam(format!("{p} descriptor columns is not a valid signature length")))?;
    let mut rows = Vec::new();
    for (n, rec) in r.records().enumerate() {
        let rec = rec?;
        let values = rec
            .iter()
            .skip(2)
            .map(|v| v.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::parse(n + 2, e.to_string()))?;
        rows.push(GsgwRow {
            id: rec[0].to_string(),
            label: rec[1].to_string(),
            gsgw: GsgwVector {
                values,
                resolution,
                mesh_hash: String::new(),
            },
        });
    }
    Ok(rows)
}
