//! Dataset manifests: one CSV record per mesh with header `path,subject,group,bone,side`.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Side::Left => "left",
            Side::Right => "right",
        })
    }
}

impl std::str::FromStr for Side {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "left" | "l" => Ok(Side::Left),
            "right" | "r" => Ok(Side::Right),
            other => Err(Error::Manifest(format!("side must be left or right, got {other:?}"))),
        }
    }
}

/// A (bone, side) pair; each stratum is compared independently.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct StratumKey {
    pub bone: String,
    pub side: Side,
}

impl fmt::Display for StratumKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.bone, self.side)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    /// As written in the manifest; relative paths are resolved against the root.
    pub path: PathBuf,
    pub subject: String,
    pub group: String,
    pub bone: String,
    pub side: Side,
}

impl ManifestEntry {
    pub fn stratum(&self) -> StratumKey {
        StratumKey {
            bone: self.bone.clone(),
            side: self.side,
        }
    }
}

#[derive(Debug, Deserialize)]
struct Record {
    path: String,
    subject: String,
    group: String,
    bone: String,
    side: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    root: PathBuf,
    entries: Vec<ManifestEntry>,
}

const HEADER: [&str; 5] = ["path", "subject", "group", "bone", "side"];

impl DatasetManifest {
    /// Validates the entries: non-empty, unique (subject, bone, side), and every
    /// mesh path exists.
    pub fn new(root: impl Into<PathBuf>, entries: Vec<ManifestEntry>) -> Result<Self> {
        let manifest = DatasetManifest {
            root: root.into(),
            entries,
        };
        if manifest.entries.is_empty() {
            return Err(Error::Manifest("manifest has no entries".into()));
        }
        let mut seen = HashSet::new();
        for e in &manifest.entries {
            for (name, v) in [("subject", &e.subject), ("group", &e.group), ("bone", &e.bone)] {
                if v.trim().is_empty() {
                    return Err(Error::Manifest(format!("empty {name} for {}", e.path.display())));
                }
            }
            if !seen.insert((e.subject.as_str(), e.bone.as_str(), e.side)) {
                return Err(Error::Manifest(format!(
                    "duplicate entry for subject {} bone {} side {}",
                    e.subject, e.bone, e.side
                )));
            }
            let p = manifest.resolve(e);
            if !p.is_file() {
                return Err(Error::Manifest(format!("mesh file not found: {}", p.display())));
            }
        }
        Ok(manifest)
    }

    /// Reads a manifest file; relative mesh paths are taken relative to its directory.
    pub fn from_csv_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Manifest(format!("cannot read {}: {e}", path.display())))?;
        let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_csv_str(&text, root)
    }

    pub fn from_csv_str(text: &str, root: impl Into<PathBuf>) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
        let headers = reader
            .headers()
            .map_err(|e| Error::Manifest(format!("unreadable header: {e}")))?
            .clone();
        if headers.iter().collect::<Vec<_>>() != HEADER {
            return Err(Error::Manifest(format!(
                "header must be {:?}, got {:?}",
                HEADER.join(","),
                headers.iter().collect::<Vec<_>>().join(",")
            )));
        }
        let mut entries = Vec::new();
        for (i, rec) in reader.deserialize::<Record>().enumerate() {
            let rec = rec.map_err(|e| Error::Manifest(format!("record {}: {e}", i + 1)))?;
            entries.push(ManifestEntry {
                path: PathBuf::from(rec.path),
                subject: rec.subject,
                group: rec.group,
                bone: rec.bone,
                side: rec.side.parse()?,
            });
        }
        Self::new(root, entries)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(HEADER)?;
        for e in &self.entries {
            let path = e.path.to_string_lossy();
            let side = e.side.to_string();
            w.write_record([path.as_ref(), &e.subject, &e.group, &e.bone, &side])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn entries(&self) -> &[ManifestEntry] {
        &self.entries
    }

    pub fn resolve(&self, entry: &ManifestEntry) -> PathBuf {
        if entry.path.is_absolute() {
            entry.path.clone()
        } else {
            self.root.join(&entry.path)
        }
    }

    /// Entries grouped by (bone, side), in sorted stratum order and manifest
    /// order within each stratum.
    pub fn strata(&self) -> BTreeMap<StratumKey, Vec<&ManifestEntry>> {
        let mut out: BTreeMap<StratumKey, Vec<&ManifestEntry>> = BTreeMap::new();
        for e in &self.entries {
            out.entry(e.stratum()).or_default().push(e);
        }
        out
    }

    /// A copy without the given stratum.
    pub fn without_stratum(&self, key: &StratumKey) -> Result<Self> {
        let entries = self.entries.iter().filter(|e| &e.stratum() != key).cloned().collect();
        Self::new(self.root.clone(), entries)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn touch(dir: &Path, name: &str) {
        std::fs::write(dir.join(name), "OFF\n3 1 0\n0 0 0\n1 0 0\n0 1 0\n3 0 1 2\n").unwrap();
    }

    #[test]
    fn parses_and_groups() {
        let dir = tempfile::tempdir().unwrap();
        for n in ["a.off", "b.off", "c.off"] {
            touch(dir.path(), n);
        }
        let text = "path,subject,group,bone,side\na.off,s1,f,scaphoid,left\nb.off,s2,m,scaphoid,left\nc.off,s1,f,lunate,R\n";
        let m = DatasetManifest::from_csv_str(text, dir.path()).unwrap();
        assert_eq!(m.entries().len(), 3);
        let strata = m.strata();
        let keys: Vec<String> = strata.keys().map(|k| k.to_string()).collect();
        assert_eq!(keys, ["lunate/right", "scaphoid/left"]);
        let mut buf = Vec::new();
        m.write_csv(&mut buf).unwrap();
        let again = DatasetManifest::from_csv_str(std::str::from_utf8(&buf).unwrap(), dir.path()).unwrap();
        assert_eq!(again, m);
    }

    #[test]
    fn rejects_bad_manifests() {
        let dir = tempfile::tempdir().unwrap();
        touch(dir.path(), "a.off");
        let root = dir.path();
        let cases = [
            "path,subject,group,bone,side\n",
            "file,subject,group,bone,side\na.off,s1,f,x,left\n",
            "path,subject,group,bone,side\nmissing.off,s1,f,x,left\n",
            "path,subject,group,bone,side\na.off,s1,f,x,up\n",
            "path,subject,group,bone,side\na.off,s1,f,x,left\na.off,s1,m,x,left\n",
            "path,subject,group,bone,side\na.off,s1,,x,left\n",
        ];
        for text in cases {
            let err = DatasetManifest::from_csv_str(text, root).unwrap_err();
            assert!(matches!(err, Error::Manifest(_)), "{text:?} gave {err}");
        }
    }
}
