//! Run reports in JSON and CSV form.

use std::io::Write;

use serde::{Deserialize, Serialize};

use super::manifest::Side;
use super::RunConfig;
use crate::error::{Error, Result};
use crate::stats::GroupComparison;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StratumStatus {
    Ok,
    /// The stratum lacks one of the two groups.
    Skipped,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratumError {
    pub kind: String,
    pub message: String,
    pub numerical: bool,
}

impl From<&Error> for StratumError {
    fn from(e: &Error) -> Self {
        StratumError {
            kind: e.kind().to_string(),
            message: e.to_string(),
            numerical: e.is_numerical(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratumReport {
    pub bone: String,
    pub side: Side,
    pub status: StratumStatus,
    pub n_shapes: usize,
    pub comparison: Option<GroupComparison>,
    /// Why the stratum was skipped, when it was.
    pub note: Option<String>,
    pub error: Option<StratumError>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub config: RunConfig,
    pub strata: Vec<StratumReport>,
}

fn fmt_p(x: f64) -> String {
    format!("{x:.6e}")
}

impl ComparisonReport {
    pub fn completed(&self) -> impl Iterator<Item = (&StratumReport, &GroupComparison)> {
        self.strata.iter().filter_map(|s| s.comparison.as_ref().map(|c| (s, c)))
    }

    pub fn write_json<W: Write>(&self, mut out: W) -> Result<()> {
        serde_json::to_writer_pretty(&mut out, self)?;
        out.write_all(b"\n")?;
        Ok(())
    }

    /// One row per stratum; the significance columns mark p < 0.05.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "bone",
            "side",
            "status",
            "group_a",
            "group_b",
            "n_a",
            "n_b",
            "wilks_lambda",
            "manova_p",
            "permutation_p",
            "manova_significant",
            "permutation_significant",
            "pca_dims",
            "n_permutations",
            "seed",
            "message",
        ])?;
        for s in &self.strata {
            let status = serde_json::to_value(s.status)?.as_str().unwrap_or_default().to_string();
            let message = s
                .error
                .as_ref()
                .map(|e| e.message.clone())
                .or_else(|| s.note.clone())
                .unwrap_or_default();
            let mut row = vec![s.bone.clone(), s.side.to_string(), status];
            match &s.comparison {
                Some(c) => row.extend([
                    c.groups[0].clone(),
                    c.groups[1].clone(),
                    c.sizes[0].to_string(),
                    c.sizes[1].to_string(),
                    fmt_p(c.wilks_lambda),
                    fmt_p(c.manova_p),
                    fmt_p(c.permutation_p),
                    c.manova_significant().to_string(),
                    c.permutation_significant().to_string(),
                    c.pca_dims.to_string(),
                    c.n_permutations.to_string(),
                    c.seed.to_string(),
                ]),
                None => row.extend(std::iter::repeat_n(String::new(), 12)),
            }
            row.push(message);
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Fixed-width table for terminals; significant p-values get a `*`.
    pub fn summary_table(&self) -> String {
        let mut out = format!(
            "{:<16} {:<6} {:<8} {:>12} {:>13} {:>13}\n",
            "bone", "side", "status", "wilks", "manova_p", "perm_p"
        );
        for s in &self.strata {
            let status = match s.status {
                StratumStatus::Ok => "ok",
                StratumStatus::Skipped => "skipped",
                StratumStatus::Failed => "failed",
            };
            match &s.comparison {
                Some(c) => {
                    let star = |sig: bool| if sig { "*" } else { " " };
                    out.push_str(&format!(
                        "{:<16} {:<6} {:<8} {:>12.4e} {:>12.4e}{} {:>12.4e}{}\n",
                        s.bone,
                        s.side.to_string(),
                        status,
                        c.wilks_lambda,
                        c.manova_p,
                        star(c.manova_significant()),
                        c.permutation_p,
                        star(c.permutation_significant())
                    ));
                }
                None => {
                    let why = s.error.as_ref().map(|e| e.message.as_str()).or(s.note.as_deref()).unwrap_or("");
                    out.push_str(&format!("{:<16} {:<6} {:<8} {}\n", s.bone, s.side.to_string(), status, why));
                }
            }
        }
        out.push_str("* p < 0.05\n");
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub bone: String,
    pub side: Side,
    pub resolution: usize,
    pub k: usize,
    pub comparison: Option<GroupComparison>,
    pub error: Option<StratumError>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepGrid {
    pub config: RunConfig,
    pub resolutions: Vec<usize>,
    pub ks: Vec<usize>,
    pub rows: Vec<SweepRow>,
}

impl SweepGrid {
    pub fn write_json<W: Write>(&self, mut out: W) -> Result<()> {
        serde_json::to_writer_pretty(&mut out, self)?;
        out.write_all(b"\n")?;
        Ok(())
    }

    /// Columns `bone,side,resolution,k,wilks_lambda,manova_p,permutation_p,message`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["bone", "side", "resolution", "k", "wilks_lambda", "manova_p", "permutation_p", "message"])?;
        for r in &self.rows {
            let mut row = vec![r.bone.clone(), r.side.to_string(), r.resolution.to_string(), r.k.to_string()];
            match &r.comparison {
                Some(c) => row.extend([fmt_p(c.wilks_lambda), fmt_p(c.manova_p), fmt_p(c.permutation_p), String::new()]),
                None => row.extend([
                    String::new(),
                    String::new(),
                    String::new(),
                    r.error.as_ref().map(|e| e.message.clone()).unwrap_or_default(),
                ]),
            }
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}
