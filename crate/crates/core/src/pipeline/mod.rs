//! Batch orchestration: manifest → per-shape descriptors → per-stratum group comparison.
//!
//! Each (bone, side) stratum is processed independently, and failures stay
//! local to their stratum. Eigensystems are memoised in memory for the life of
//! a [`Runner`] and, when a cache directory is configured, persisted on disk
//! keyed by mesh content hash.

mod manifest;
mod report;
mod synthetic;

use std::collections::{BTreeMap, HashMap};
use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use manifest::{DatasetManifest, ManifestEntry, Side, StratumKey};
pub use synthetic::{synthetic_population, write_dataset, PopulationSpec};
pub use report::{ComparisonReport, StratumError, StratumReport, StratumStatus, SweepGrid, SweepRow};

use crate::cache::CacheDir;
use crate::eigen::{solve_smallest, EigenSystem, DEFAULT_K};
use crate::error::{Error, Result, Stage};
use crate::gsgw::{aggregate, GsgwRow, GsgwVector};
use crate::laplacian::{cotangent_weights_with, AreaScheme};
use crate::mesh_io::{load_mesh, TriangleMesh};
use crate::sgws::{signature_matrix, Kernel, KernelConfig, DEFAULT_RESOLUTION};
use crate::stats::{compare_groups, DataMatrix, GroupComparison, DEFAULT_PCA_DIMS, DEFAULT_PERMUTATIONS};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub k: usize,
    pub resolution: usize,
    pub pca_dims: usize,
    pub n_perm: usize,
    pub seed: u64,
    pub kernel: Kernel,
    pub area_scheme: AreaScheme,
    /// Weight vertex signatures by the squared vertex area.
    pub area_factor: bool,
    /// Divide each descriptor by the shape's total area.
    pub normalize_by_area: bool,
    pub cache_dir: Option<PathBuf>,
    /// Also persist signature matrices (large: `p x m` doubles per shape).
    pub cache_signatures: bool,
    /// Worker threads; `None` uses the global pool.
    pub jobs: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            k: DEFAULT_K,
            resolution: DEFAULT_RESOLUTION,
            pca_dims: DEFAULT_PCA_DIMS,
            n_perm: DEFAULT_PERMUTATIONS,
            seed: 0,
            kernel: Kernel::default(),
            area_scheme: AreaScheme::default(),
            area_factor: true,
            normalize_by_area: false,
            cache_dir: None,
            cache_signatures: false,
            jobs: None,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k < 2 {
            return Err(Error::InvalidParam(format!("k must be at least 2, got {}", self.k)));
        }
        if self.resolution == 0 {
            return Err(Error::InvalidParam("resolution must be at least 1".into()));
        }
        if self.pca_dims == 0 {
            return Err(Error::InvalidParam("pca_dims must be at least 1".into()));
        }
        if self.n_perm == 0 {
            return Err(Error::InvalidParam("n_perm must be at least 1".into()));
        }
        if self.jobs == Some(0) {
            return Err(Error::InvalidParam("jobs must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub enum ShapeSource {
    File(PathBuf),
    Mesh(Arc<TriangleMesh>),
}

/// One shape of a comparison, from a manifest or built in memory.
#[derive(Debug, Clone)]
pub struct ShapeInput {
    pub id: String,
    pub group: String,
    pub stratum: StratumKey,
    pub source: ShapeSource,
}

impl ShapeInput {
    pub fn from_mesh(id: impl Into<String>, group: impl Into<String>, stratum: StratumKey, mesh: TriangleMesh) -> Self {
        ShapeInput {
            id: id.into(),
            group: group.into(),
            stratum,
            source: ShapeSource::Mesh(Arc::new(mesh)),
        }
    }

    /// One input per manifest entry, identified by subject.
    pub fn from_manifest(manifest: &DatasetManifest) -> Vec<ShapeInput> {
        manifest
            .entries()
            .iter()
            .map(|e| ShapeInput {
                id: e.subject.clone(),
                group: e.group.clone(),
                stratum: e.stratum(),
                source: ShapeSource::File(manifest.resolve(e)),
            })
            .collect()
    }

    fn load(&self) -> Result<Arc<TriangleMesh>> {
        match &self.source {
            ShapeSource::Mesh(m) => Ok(m.clone()),
            ShapeSource::File(p) => Ok(Arc::new(load_mesh(p, None)?)),
        }
    }
}


/// Memoised eigensystems, backed by an optional on-disk cache. A stored
/// eigensystem with at least the requested number of pairs is a hit and is
/// truncated.
#[derive(Debug)]
pub struct SpectrumStore {
    memory: Mutex<HashMap<(String, AreaScheme), Arc<EigenSystem>>>,
    disk: Option<CacheDir>,
    solves: AtomicUsize,
    disk_hits: AtomicUsize,
}

impl SpectrumStore {
    pub fn new(disk: Option<CacheDir>) -> Self {
        SpectrumStore {
            memory: Mutex::new(HashMap::new()),
            disk,
            solves: AtomicUsize::new(0),
            disk_hits: AtomicUsize::new(0),
        }
    }

    /// Eigensolves performed so far.
    pub fn solves(&self) -> usize {
        self.solves.load(Ordering::SeqCst)
    }

    pub fn disk_hits(&self) -> usize {
        self.disk_hits.load(Ordering::SeqCst)
    }

    fn remembered(&self, key: &(String, AreaScheme), k: usize) -> Option<Arc<EigenSystem>> {
        let memory = self.memory.lock().unwrap_or_else(|e| e.into_inner());
        memory.get(key).filter(|es| es.k() >= k).cloned()
    }

    fn remember(&self, key: (String, AreaScheme), es: Arc<EigenSystem>) {
        let mut memory = self.memory.lock().unwrap_or_else(|e| e.into_inner());
        let keep = memory.get(&key).is_some_and(|old| old.k() >= es.k());
        if !keep {
            memory.insert(key, es);
        }
    }

    /// Returns exactly `k` eigenpairs of `mesh`, solving only on a miss.
    pub fn get(&self, mesh: &TriangleMesh, hash: &str, scheme: AreaScheme, k: usize) -> Result<EigenSystem> {
        let key = (hash.to_string(), scheme);
        if let Some(es) = self.remembered(&key, k) {
            return es.truncated(k);
        }
        if let Some(disk) = &self.disk {
            let cached = disk
                .load_eigensystem(hash, scheme.id())
                .map_err(|e| e.at(hash, Stage::Cache))?;
            if let Some(es) = cached.filter(|es| es.k() >= k) {
                self.disk_hits.fetch_add(1, Ordering::SeqCst);
                let es = Arc::new(es);
                self.remember(key, es.clone());
                return es.truncated(k);
            }
        }
        let lap = cotangent_weights_with(mesh, scheme).map_err(|e| e.at(hash, Stage::Laplacian))?;
        let es = solve_smallest(&lap, k).map_err(|e| e.at(hash, Stage::Eigen))?;
        self.solves.fetch_add(1, Ordering::SeqCst);
        if let Some(disk) = &self.disk {
            disk.store_eigensystem(hash, scheme.id(), &es)
                .map_err(|e| e.at(hash, Stage::Cache))?;
        }
        self.remember(key, Arc::new(es.clone()));
        Ok(es)
    }
}

struct LoadedShape {
    id: String,
    group: String,
    mesh: Arc<TriangleMesh>,
    hash: String,
}

/// Holds a configuration, its worker pool and the spectrum store, so that
/// repeated runs reuse eigensystems.
#[derive(Debug)]
pub struct Runner {
    cfg: RunConfig,
    store: SpectrumStore,
    pool: Option<rayon::ThreadPool>,
}

impl Runner {
    pub fn new(cfg: RunConfig) -> Result<Self> {
        cfg.validate()?;
        let pool = match cfg.jobs {
            Some(n) => Some(
                rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build()
                    .map_err(|e| Error::InvalidParam(format!("cannot start {n} worker threads: {e}")))?,
            ),
            None => None,
        };
        let disk = cfg.cache_dir.clone().map(CacheDir::new);
        Ok(Runner {
            cfg,
            store: SpectrumStore::new(disk),
            pool,
        })
    }

    pub fn config(&self) -> &RunConfig {
        &self.cfg
    }

    pub fn store(&self) -> &SpectrumStore {
        &self.store
    }

    fn install<T: Send>(&self, f: impl FnOnce() -> T + Send) -> T {
        match &self.pool {
            Some(pool) => pool.install(f),
            None => f(),
        }
    }

    pub fn compare_manifest(&self, manifest: &DatasetManifest) -> Result<ComparisonReport> {
        self.compare_shapes(&ShapeInput::from_manifest(manifest))
    }

    pub fn compare_shapes(&self, shapes: &[ShapeInput]) -> Result<ComparisonReport> {
        if shapes.is_empty() {
            return Err(Error::Manifest("no shapes to compare".into()));
        }
        let strata = group_by_stratum(shapes);
        let strata: Vec<StratumReport> = self.install(|| {
            strata
                .par_iter()
                .map(|(key, members)| self.stratum_report(key, members))
                .collect()
        });
        Ok(ComparisonReport {
            config: self.cfg.clone(),
            strata,
        })
    }

    /// Runs the comparison for every (R, k) pair. Each shape is solved once
    /// at the largest k and truncated for smaller values.
    pub fn sweep_manifest(&self, manifest: &DatasetManifest, resolutions: &[usize], ks: &[usize]) -> Result<SweepGrid> {
        self.sweep_shapes(&ShapeInput::from_manifest(manifest), resolutions, ks)
    }

    pub fn sweep_shapes(&self, shapes: &[ShapeInput], resolutions: &[usize], ks: &[usize]) -> Result<SweepGrid> {
        if resolutions.is_empty() || ks.is_empty() {
            return Err(Error::InvalidParam("sweep grid is empty".into()));
        }
        if let Some(r) = resolutions.iter().find(|&&r| r == 0) {
            return Err(Error::InvalidParam(format!("invalid resolution {r}")));
        }
        if let Some(k) = ks.iter().find(|&&k| k < 2) {
            return Err(Error::InvalidParam(format!("k must be at least 2, got {k}")));
        }
        if shapes.is_empty() {
            return Err(Error::Manifest("no shapes to compare".into()));
        }
        let k_max = *ks.iter().max().expect("non-empty");
        let strata = group_by_stratum(shapes);
        let rows: Vec<Vec<SweepRow>> = self.install(|| {
            strata
                .par_iter()
                .map(|(key, members)| {
                    let row = |resolution: usize, k: usize, result: Result<GroupComparison>| {
                        let (comparison, error) = match result {
                            Ok(c) => (Some(c), None),
                            Err(e) => (None, Some(StratumError::from(&e))),
                        };
                        SweepRow {
                            bone: key.bone.clone(),
                            side: key.side,
                            resolution,
                            k,
                            comparison,
                            error,
                        }
                    };
                    let prepared = self
                        .load_stratum(members)
                        .and_then(|loaded| self.spectra(&loaded, k_max).map(|es| (loaded, es)));
                    let mut out = Vec::new();
                    for &resolution in resolutions {
                        for &k in ks {
                            let result = match &prepared {
                                Ok((loaded, spectra)) => self
                                    .descriptors(loaded, spectra, k, resolution)
                                    .and_then(|data| self.compare(&data)),
                                Err(e) => Err(clone_error(e)),
                            };
                            out.push(row(resolution, k, result));
                        }
                    }
                    out
                })
                .collect()
        });
        Ok(SweepGrid {
            config: self.cfg.clone(),
            resolutions: resolutions.to_vec(),
            ks: ks.to_vec(),
            rows: rows.into_iter().flatten().collect(),
        })
    }

    /// Descriptor rows (one GSGW vector per shape) for every stratum.
    pub fn descriptor_rows(&self, shapes: &[ShapeInput]) -> Result<BTreeMap<StratumKey, Vec<GsgwRow>>> {
        let strata = group_by_stratum(shapes);
        self.install(|| {
            strata
                .into_par_iter()
                .map(|(key, members)| {
                    let loaded = self.load_stratum(&members)?;
                    let spectra = self.spectra(&loaded, self.cfg.k)?;
                    let rows = loaded
                        .par_iter()
                        .zip(spectra.par_iter())
                        .map(|(s, es)| {
                            Ok(GsgwRow {
                                id: s.id.clone(),
                                label: s.group.clone(),
                                gsgw: self.descriptor(s, es, self.cfg.k, self.cfg.resolution)?,
                            })
                        })
                        .collect::<Result<Vec<_>>>()?;
                    Ok((key, rows))
                })
                .collect()
        })
    }

    fn stratum_report(&self, key: &StratumKey, members: &[ShapeInput]) -> StratumReport {
        let mut report = StratumReport {
            bone: key.bone.clone(),
            side: key.side,
            status: StratumStatus::Ok,
            n_shapes: members.len(),
            comparison: None,
            note: None,
            error: None,
        };
        let mut groups: Vec<&str> = members.iter().map(|s| s.group.as_str()).collect();
        groups.sort_unstable();
        groups.dedup();
        if groups.len() < 2 {
            report.status = StratumStatus::Skipped;
            report.note = Some(format!("only group {:?} present; two groups are required", groups.join(",")));
            return report;
        }
        let result = self
            .load_stratum(members)
            .and_then(|loaded| {
                let spectra = self.spectra(&loaded, self.cfg.k)?;
                self.descriptors(&loaded, &spectra, self.cfg.k, self.cfg.resolution)
            })
            .and_then(|data| self.compare(&data));
        match result {
            Ok(c) => report.comparison = Some(c),
            Err(e) => {
                report.status = StratumStatus::Failed;
                report.error = Some(StratumError::from(&e));
            }
        }
        report
    }

    fn load_stratum(&self, members: &[ShapeInput]) -> Result<Vec<LoadedShape>> {
        members
            .par_iter()
            .map(|s| {
                let mesh = s.load().map_err(|e| e.at(&s.id, Stage::Load))?;
                let hash = mesh.content_hash();
                Ok(LoadedShape {
                    id: s.id.clone(),
                    group: s.group.clone(),
                    mesh,
                    hash,
                })
            })
            .collect()
    }

    fn spectra(&self, shapes: &[LoadedShape], k: usize) -> Result<Vec<EigenSystem>> {
        shapes
            .par_iter()
            .map(|s| {
                self.store.get(&s.mesh, &s.hash, self.cfg.area_scheme, k).map_err(|e| match e {
                    Error::Stage { stage, source, .. } => source.at(&s.id, stage),
                    other => other.at(&s.id, Stage::Eigen),
                })
            })
            .collect()
    }

    fn descriptor(&self, shape: &LoadedShape, full: &EigenSystem, k: usize, resolution: usize) -> Result<GsgwVector> {
        let wrap = |e: Error| e.at(&shape.id, Stage::Signature);
        let es = full.truncated(k).map_err(wrap)?;
        let cfg = KernelConfig::from_eigensystem(&es, resolution)
            .map_err(wrap)?
            .with_kernel(self.cfg.kernel)
            .with_area_factor(self.cfg.area_factor);
        let kernel_id = cfg.kernel_id();
        let disk = self.cfg.cache_dir.as_ref().filter(|_| self.cfg.cache_signatures).map(CacheDir::new);
        let cached = match &disk {
            Some(d) => d
                .load_signature(&shape.hash, &kernel_id, k, resolution)
                .map_err(|e| e.at(&shape.id, Stage::Cache))?,
            None => None,
        };
        let sig = match cached {
            Some(s) => s,
            None => {
                let s = signature_matrix(&es, &cfg).map_err(wrap)?;
                if let Some(d) = &disk {
                    d.store_signature(&shape.hash, &kernel_id, k, &s)
                        .map_err(|e| e.at(&shape.id, Stage::Cache))?;
                }
                s
            }
        };
        let g = aggregate(&sig, es.mass(), &shape.hash).map_err(wrap)?;
        let g = if self.cfg.normalize_by_area {
            g.normalized_by_area(shape.mesh.surface_area()).map_err(wrap)?
        } else {
            g
        };
        Ok(g)
    }

    fn descriptors(&self, shapes: &[LoadedShape], spectra: &[EigenSystem], k: usize, resolution: usize) -> Result<DataMatrix> {
        let rows: Vec<Vec<f64>> = shapes
            .par_iter()
            .zip(spectra.par_iter())
            .map(|(s, es)| self.descriptor(s, es, k, resolution).map(|g| g.values))
            .collect::<Result<_>>()?;
        let p = rows[0].len();
        let x = DMatrix::from_fn(rows.len(), p, |i, j| rows[i][j]);
        DataMatrix::new(
            x,
            shapes.iter().map(|s| s.group.clone()).collect(),
            shapes.iter().map(|s| s.id.clone()).collect(),
        )
        .map_err(|e| e.at("stratum", Stage::Statistics))
    }

    fn compare(&self, data: &DataMatrix) -> Result<GroupComparison> {
        compare_groups(data, Some(self.cfg.pca_dims), self.cfg.n_perm, self.cfg.seed)
            .map_err(|e| e.at("stratum", Stage::Statistics))
    }
}

fn group_by_stratum(shapes: &[ShapeInput]) -> BTreeMap<StratumKey, Vec<ShapeInput>> {
    let mut out: BTreeMap<StratumKey, Vec<ShapeInput>> = BTreeMap::new();
    for s in shapes {
        out.entry(s.stratum.clone()).or_default().push(s.clone());
    }
    out
}

/// Errors are not `Clone`; sweep rows sharing a failed preparation step get
/// an equivalent error carrying the same kind and message.
fn clone_error(e: &Error) -> Error {
    match e {
        Error::Stage { shape, stage, source } => clone_error(source).at(shape.clone(), *stage),
        other if other.is_numerical() => Error::Numerical(other.to_string()),
        Error::Validation(m) => Error::Validation(m.clone()),
        Error::InvalidParam(m) => Error::InvalidParam(m.clone()),
        Error::GroupCount(m) => Error::GroupCount(m.clone()),
        Error::Manifest(m) => Error::Manifest(m.clone()),
        Error::Parse { line, message } => Error::Parse {
            line: *line,
            message: message.clone(),
        },
        other => Error::Validation(other.to_string()),
    }
}

/// Per-stratum comparison of a manifest under `cfg`.
pub fn run_group_comparison(manifest: &DatasetManifest, cfg: &RunConfig) -> Result<ComparisonReport> {
    Runner::new(cfg.clone())?.compare_manifest(manifest)
}

/// As [`run_group_comparison`] for shapes already in memory.
pub fn run_group_comparison_on_shapes(shapes: &[ShapeInput], cfg: &RunConfig) -> Result<ComparisonReport> {
    Runner::new(cfg.clone())?.compare_shapes(shapes)
}

/// Comparison over the grid `resolutions x ks`, row-major in resolution.
pub fn parameter_sweep(manifest: &DatasetManifest, cfg: &RunConfig, resolutions: &[usize], ks: &[usize]) -> Result<SweepGrid> {
    Runner::new(cfg.clone())?.sweep_manifest(manifest, resolutions, ks)
}
