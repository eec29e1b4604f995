//! `gsgw`: spectral graph wavelet descriptors and group comparison for triangle meshes.

mod plot;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use gsgw_core::eigen::{solve_smallest_with, SolverMethod, SolverOptions};
use gsgw_core::gsgw::{aggregate, read_gsgw_csv, write_gsgw_csv, GsgwRow};
use gsgw_core::laplacian::{cotangent_weights_with, AreaScheme};
use gsgw_core::mesh_io::{load_mesh, make_synthetic, save_mesh, OffPrecision, ShapeKind, ShapeParams};
use gsgw_core::pipeline::{
    synthetic_population, write_dataset, DatasetManifest, PopulationSpec, RunConfig, Runner, ShapeInput, Side,
};
use gsgw_core::reconstruct::{nmse_curve_with, NmseWeighting};
use gsgw_core::sgws::{signature_matrix, Kernel, KernelConfig};

#[derive(Parser, Debug)]
#[command(name = "gsgw", version, about = "Laplace-Beltrami spectra, wavelet signatures and two-group shape statistics")]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true, value_parser = clap::value_parser!(u32).range(1..))]
    jobs: Option<u32>,
    /// On failure, also print a JSON error object to stderr.
    #[arg(long, global = true)]
    error_json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Smallest eigenpairs of the cotangent Laplacian.
    Eigen(EigenArgs),
    /// Per-vertex signature matrix (p rows x m vertex columns).
    Signature(SignatureArgs),
    /// Area-aggregated global descriptor of one or more shapes.
    Gsgw(GsgwArgs),
    /// Spectral reconstruction error curve.
    Reconstruct(ReconstructArgs),
    /// Per-stratum two-group comparison of a manifest.
    Compare(CompareArgs),
    /// Comparison over a grid of resolutions and eigenpair counts.
    Sweep(SweepArgs),
    /// Generate synthetic meshes or datasets.
    #[command(subcommand)]
    Synth(SynthCommand),
    /// Render CSV outputs as standalone SVG.
    #[command(subcommand)]
    Plot(PlotCommand),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum AreaArg {
    Mixed,
    Barycentric,
}

impl From<AreaArg> for AreaScheme {
    fn from(a: AreaArg) -> Self {
        match a {
            AreaArg::Mixed => AreaScheme::MixedVoronoi,
            AreaArg::Barycentric => AreaScheme::Barycentric,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum KernelArg {
    MexicanHat,
    GaussianDerivative,
}

impl From<KernelArg> for Kernel {
    fn from(k: KernelArg) -> Self {
        match k {
            KernelArg::MexicanHat => Kernel::MexicanHat,
            KernelArg::GaussianDerivative => Kernel::GaussianDerivative,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SolverArg {
    Auto,
    Sparse,
    Dense,
}

impl From<SolverArg> for SolverMethod {
    fn from(s: SolverArg) -> Self {
        match s {
            SolverArg::Auto => SolverMethod::Auto,
            SolverArg::Sparse => SolverMethod::Sparse,
            SolverArg::Dense => SolverMethod::Dense,
        }
    }
}

#[derive(Args, Debug)]
struct SpectrumArgs {
    /// Number of eigenpairs.
    #[arg(long, default_value_t = 31, value_parser = clap::value_parser!(u32).range(1..))]
    k: u32,
    /// Vertex area scheme for the mass matrix.
    #[arg(long, value_enum, default_value_t = AreaArg::Mixed)]
    area_scheme: AreaArg,
    #[arg(long, value_enum, default_value_t = SolverArg::Auto)]
    solver: SolverArg,
}

impl SpectrumArgs {
    fn solve(&self, mesh: &gsgw_core::mesh_io::TriangleMesh) -> gsgw_core::Result<gsgw_core::eigen::EigenSystem> {
        let lap = cotangent_weights_with(mesh, self.area_scheme.into())?;
        let opts = SolverOptions {
            method: self.solver.into(),
            ..SolverOptions::default()
        };
        solve_smallest_with(&lap, self.k as usize, &opts)
    }
}

#[derive(Args, Debug)]
struct KernelArgs {
    /// Resolution R; the signature has (R+1)(R+2)/2 - 1 entries.
    #[arg(long, default_value_t = 30, value_parser = clap::value_parser!(u32).range(1..))]
    resolution: u32,
    #[arg(long, value_enum, default_value_t = KernelArg::MexicanHat)]
    kernel: KernelArg,
    /// Drop the squared vertex-area weight from signatures.
    #[arg(long)]
    no_area_factor: bool,
}

impl KernelArgs {
    fn config(&self, es: &gsgw_core::eigen::EigenSystem) -> gsgw_core::Result<KernelConfig> {
        Ok(KernelConfig::from_eigensystem(es, self.resolution as usize)?
            .with_kernel(self.kernel.into())
            .with_area_factor(!self.no_area_factor))
    }
}

#[derive(Args, Debug)]
struct EigenArgs {
    mesh: PathBuf,
    #[command(flatten)]
    spectrum: SpectrumArgs,
    /// Output directory for eigenvalues.csv and eigenfunctions.csv.
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct SignatureArgs {
    mesh: PathBuf,
    #[command(flatten)]
    spectrum: SpectrumArgs,
    #[command(flatten)]
    kernel: KernelArgs,
    #[arg(long, default_value = "signature.csv")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct GsgwArgs {
    /// Mesh files; ignored with --manifest.
    meshes: Vec<PathBuf>,
    /// Compute descriptors for every manifest entry instead.
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Label written for every mesh given on the command line.
    #[arg(long, default_value = "")]
    label: String,
    #[command(flatten)]
    spectrum: SpectrumArgs,
    #[command(flatten)]
    kernel: KernelArgs,
    /// Divide each descriptor by the total surface area.
    #[arg(long)]
    normalize_by_area: bool,
    #[arg(long, default_value = "gsgw.csv")]
    out: PathBuf,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum WeightingArg {
    Area,
    Uniform,
}

#[derive(Args, Debug)]
struct ReconstructArgs {
    mesh: PathBuf,
    /// Basis sizes to evaluate, e.g. `1,5,10`; defaults to 1..=k.
    #[arg(long, value_delimiter = ',')]
    ks: Vec<usize>,
    #[command(flatten)]
    spectrum: SpectrumArgs,
    #[arg(long, value_enum, default_value_t = WeightingArg::Area)]
    weighting: WeightingArg,
    #[arg(long, default_value = "nmse.csv")]
    out: PathBuf,
    /// Also write each reconstructed mesh as OFF into this directory.
    #[arg(long)]
    meshes_out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct RunArgs {
    /// Eigenpairs per shape.
    #[arg(long, default_value_t = 31, value_parser = clap::value_parser!(u32).range(2..))]
    k: u32,
    /// Signature resolution R.
    #[arg(long, default_value_t = 30, value_parser = clap::value_parser!(u32).range(1..))]
    resolution: u32,
    /// PCA dimensions retained before MANOVA.
    #[arg(long, default_value_t = 18, value_parser = clap::value_parser!(u32).range(1..))]
    pca_dims: u32,
    /// Label permutations.
    #[arg(long, default_value_t = 1000, value_parser = clap::value_parser!(u32).range(1..))]
    n_perm: u32,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = KernelArg::MexicanHat)]
    kernel: KernelArg,
    #[arg(long, value_enum, default_value_t = AreaArg::Mixed)]
    area_scheme: AreaArg,
    #[arg(long)]
    no_area_factor: bool,
    #[arg(long)]
    normalize_by_area: bool,
    /// Directory for cached eigensystems.
    #[arg(long)]
    cache_dir: Option<PathBuf>,
    /// Also cache signature matrices.
    #[arg(long, requires = "cache_dir")]
    cache_signatures: bool,
}

impl RunArgs {
    fn config(&self, jobs: Option<u32>) -> RunConfig {
        RunConfig {
            k: self.k as usize,
            resolution: self.resolution as usize,
            pca_dims: self.pca_dims as usize,
            n_perm: self.n_perm as usize,
            seed: self.seed,
            kernel: self.kernel.into(),
            area_scheme: self.area_scheme.into(),
            area_factor: !self.no_area_factor,
            normalize_by_area: self.normalize_by_area,
            cache_dir: self.cache_dir.clone(),
            cache_signatures: self.cache_signatures,
            jobs: jobs.map(|j| j as usize),
        }
    }
}

#[derive(Args, Debug)]
struct CompareArgs {
    manifest: PathBuf,
    #[command(flatten)]
    run: RunArgs,
    /// Output directory for report.json and report.csv.
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct SweepArgs {
    manifest: PathBuf,
    #[command(flatten)]
    run: RunArgs,
    #[arg(long, value_delimiter = ',', default_value = "1,5,10,20,30")]
    resolutions: Vec<usize>,
    #[arg(long = "ks", value_delimiter = ',', default_value = "10,20,31")]
    ks: Vec<usize>,
    /// Output directory for sweep.json and sweep.csv.
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum KindArg {
    Sphere,
    Ellipsoid,
    Bumpy,
}

#[derive(Subcommand, Debug)]
enum SynthCommand {
    /// One synthetic mesh as OFF.
    Shape {
        #[arg(long, value_enum, default_value_t = KindArg::Bumpy)]
        kind: KindArg,
        #[arg(long, default_value_t = 3, value_parser = clap::value_parser!(u32).range(0..=8))]
        subdivisions: u32,
        /// Semi-axes `a,b,c`.
        #[arg(long, value_delimiter = ',', default_value = "1,1,1")]
        axes: Vec<f64>,
        #[arg(long, default_value_t = 0.05)]
        amplitude: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Two-group dataset of bumpy spheres vs bumpy 1.3:1:1 ellipsoids, with manifest.csv.
    Dataset {
        #[arg(long, default_value_t = 10, value_parser = clap::value_parser!(u32).range(2..))]
        per_group: u32,
        #[arg(long, default_value_t = 3, value_parser = clap::value_parser!(u32).range(0..=8))]
        subdivisions: u32,
        /// Draw both groups from the same distribution.
        #[arg(long)]
        null: bool,
        /// Bone names; one stratum per bone and side.
        #[arg(long, value_delimiter = ',', default_value = "synthetic")]
        bones: Vec<String>,
        #[arg(long, value_delimiter = ',', default_value = "left")]
        sides: Vec<String>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Subcommand, Debug)]
enum PlotCommand {
    /// NMSE curve from `reconstruct` output (log scale).
    Nmse {
        input: PathBuf,
        #[arg(long, default_value = "nmse.svg")]
        out: PathBuf,
    },
    /// Overlay of descriptor rows from `gsgw` output.
    Gsgw {
        input: PathBuf,
        #[arg(long, default_value = "gsgw.svg")]
        out: PathBuf,
    },
    /// Heat map of p-values from `sweep` output.
    Sweep {
        input: PathBuf,
        #[arg(long, value_enum, default_value_t = PValue::Manova)]
        value: PValue,
        /// Stratum as `bone/side`; defaults to the first in the file.
        #[arg(long)]
        stratum: Option<String>,
        #[arg(long, default_value = "sweep.svg")]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum PValue {
    Manova,
    Permutation,
}

struct Failure {
    code: u8,
    kind: String,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Failure {
            code: 2,
            kind: "usage".into(),
            message: message.into(),
        }
    }
}

impl From<gsgw_core::Error> for Failure {
    fn from(e: gsgw_core::Error) -> Self {
        Failure {
            code: if e.is_numerical() { 3 } else { 2 },
            kind: e.kind().into(),
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure {
            code: 2,
            kind: "io".into(),
            message: e.to_string(),
        }
    }
}

impl From<csv::Error> for Failure {
    fn from(e: csv::Error) -> Self {
        Failure {
            code: 2,
            kind: "csv".into(),
            message: e.to_string(),
        }
    }
}

type CliResult = Result<(), Failure>;

fn create(path: &Path) -> Result<fs::File, Failure> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::File::create(path).map_err(|e| Failure::usage(format!("cannot create {}: {e}", path.display())))
}

fn load(path: &Path) -> Result<gsgw_core::mesh_io::TriangleMesh, Failure> {
    load_mesh(path, None).map_err(|e| {
        let mut f = Failure::from(e);
        f.message = format!("{}: {}", path.display(), f.message);
        f
    })
}

fn cmd_eigen(args: &EigenArgs) -> CliResult {
    let mesh = load(&args.mesh)?;
    let es = args.spectrum.solve(&mesh)?;
    fs::create_dir_all(&args.out)?;
    let mut w = csv::Writer::from_writer(create(&args.out.join("eigenvalues.csv"))?);
    w.write_record(["index", "eigenvalue"])?;
    for (i, v) in es.eigenvalues().iter().enumerate() {
        w.write_record([(i + 1).to_string(), format!("{v:?}")])?;
    }
    w.flush()?;
    let mut w = csv::Writer::from_writer(create(&args.out.join("eigenfunctions.csv"))?);
    let mut header = vec!["vertex".to_string(), "area".to_string()];
    header.extend((1..=es.k()).map(|l| format!("phi_{l}")));
    w.write_record(&header)?;
    let phi = es.eigenfunctions();
    for (i, a) in es.mass().iter().enumerate() {
        let mut row = vec![i.to_string(), format!("{a:?}")];
        row.extend((0..es.k()).map(|l| format!("{:?}", phi[(i, l)])));
        w.write_record(&row)?;
    }
    w.flush()?;
    println!(
        "{} eigenpairs of {} ({} vertices) written to {}",
        es.k(),
        args.mesh.display(),
        mesh.vertex_count(),
        args.out.display()
    );
    Ok(())
}

fn cmd_signature(args: &SignatureArgs) -> CliResult {
    let mesh = load(&args.mesh)?;
    let es = args.spectrum.solve(&mesh)?;
    let cfg = args.kernel.config(&es)?;
    let sig = signature_matrix(&es, &cfg)?;
    sig.write_csv(create(&args.out)?)?;
    println!("{} x {} signature matrix written to {}", sig.len(), sig.vertex_count(), args.out.display());
    Ok(())
}

fn cmd_gsgw(args: &GsgwArgs, jobs: Option<u32>) -> CliResult {
    let rows = match &args.manifest {
        Some(path) => {
            let manifest = DatasetManifest::from_csv_path(path)?;
            let cfg = RunConfig {
                k: args.spectrum.k as usize,
                resolution: args.kernel.resolution as usize,
                kernel: args.kernel.kernel.into(),
                area_scheme: args.spectrum.area_scheme.into(),
                area_factor: !args.kernel.no_area_factor,
                normalize_by_area: args.normalize_by_area,
                jobs: jobs.map(|j| j as usize),
                ..RunConfig::default()
            };
            let per_stratum = Runner::new(cfg)?.descriptor_rows(&ShapeInput::from_manifest(&manifest))?;
            per_stratum
                .into_iter()
                .flat_map(|(key, rows)| {
                    rows.into_iter().map(move |mut r| {
                        r.id = format!("{}@{}", r.id, key);
                        r
                    })
                })
                .collect()
        }
        None => {
            if args.meshes.is_empty() {
                return Err(Failure::usage("no meshes given (pass mesh files or --manifest)"));
            }
            let mut rows = Vec::new();
            for path in &args.meshes {
                let mesh = load(path)?;
                let es = args.spectrum.solve(&mesh)?;
                let cfg = args.kernel.config(&es)?;
                let sig = signature_matrix(&es, &cfg)?;
                let mut g = aggregate(&sig, es.mass(), &mesh.content_hash())?;
                if args.normalize_by_area {
                    g = g.normalized_by_area(mesh.surface_area())?;
                }
                let id = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
                rows.push(GsgwRow {
                    id,
                    label: args.label.clone(),
                    gsgw: g,
                });
            }
            rows
        }
    };
    write_gsgw_csv(&rows, create(&args.out)?)?;
    println!("{} descriptors written to {}", rows.len(), args.out.display());
    Ok(())
}

fn cmd_reconstruct(args: &ReconstructArgs) -> CliResult {
    let mesh = load(&args.mesh)?;
    let ks: Vec<usize> = if args.ks.is_empty() {
        (1..=args.spectrum.k as usize).collect()
    } else {
        args.ks.clone()
    };
    let k_max = *ks.iter().max().expect("non-empty");
    let spectrum = SpectrumArgs {
        k: k_max.max(args.spectrum.k as usize) as u32,
        ..args.spectrum
    };
    let es = spectrum.solve(&mesh)?;
    let weighting = match args.weighting {
        WeightingArg::Area => NmseWeighting::Area,
        WeightingArg::Uniform => NmseWeighting::Uniform,
    };
    let report = nmse_curve_with(&mesh, &es, &ks, weighting, args.meshes_out.is_some())?;
    report.write_csv(create(&args.out)?)?;
    if let Some(dir) = &args.meshes_out {
        fs::create_dir_all(dir)?;
        for (k, m) in &report.meshes {
            save_mesh(m, dir.join(format!("reconstruction_k{k:03}.off")), OffPrecision::Significant12)?;
        }
    }
    let last = report.nmse.last().copied().unwrap_or(f64::NAN);
    println!("NMSE at k={}: {last:.4e}; curve written to {}", ks[ks.len() - 1], args.out.display());
    Ok(())
}

fn print_config(cfg: &RunConfig) {
    let json = serde_json::to_string(cfg).unwrap_or_default();
    eprintln!("resolved config: {json}");
}

fn warn_dimensions(manifest: &DatasetManifest, cfg: &RunConfig) {
    for (key, entries) in manifest.strata() {
        let n = entries.len();
        if 2 * cfg.pca_dims > n {
            eprintln!(
                "warning: {key}: pca_dims={} exceeds n/2 for n={n}; the MANOVA F test has {} denominator degrees of freedom",
                cfg.pca_dims,
                n as i64 - cfg.pca_dims as i64 - 1
            );
        }
    }
}

fn failure_of(errors: impl Iterator<Item = (String, gsgw_core::pipeline::StratumError)>) -> Option<Failure> {
    let mut worst: Option<Failure> = None;
    for (stratum, e) in errors {
        eprintln!("error: {stratum}: {}", e.message);
        let code = if e.numerical { 3 } else { 2 };
        if worst.as_ref().is_none_or(|w| code > w.code) {
            worst = Some(Failure {
                code,
                kind: e.kind.clone(),
                message: format!("{stratum}: {}", e.message),
            });
        }
    }
    worst
}

fn cmd_compare(args: &CompareArgs, jobs: Option<u32>) -> CliResult {
    let cfg = args.run.config(jobs);
    print_config(&cfg);
    let manifest = DatasetManifest::from_csv_path(&args.manifest)?;
    warn_dimensions(&manifest, &cfg);
    let report = Runner::new(cfg)?.compare_manifest(&manifest)?;
    fs::create_dir_all(&args.out)?;
    report.write_json(create(&args.out.join("report.json"))?)?;
    report.write_csv(create(&args.out.join("report.csv"))?)?;
    print!("{}", report.summary_table());
    std::io::stdout().flush()?;
    let errors = report
        .strata
        .iter()
        .filter_map(|s| s.error.clone().map(|e| (format!("{}/{}", s.bone, s.side), e)));
    match failure_of(errors) {
        Some(f) => Err(f),
        None => Ok(()),
    }
}

fn cmd_sweep(args: &SweepArgs, jobs: Option<u32>) -> CliResult {
    let cfg = args.run.config(jobs);
    print_config(&cfg);
    eprintln!("grid: resolutions {:?} x k {:?}", args.resolutions, args.ks);
    let manifest = DatasetManifest::from_csv_path(&args.manifest)?;
    warn_dimensions(&manifest, &cfg);
    let grid = Runner::new(cfg)?.sweep_manifest(&manifest, &args.resolutions, &args.ks)?;
    fs::create_dir_all(&args.out)?;
    grid.write_json(create(&args.out.join("sweep.json"))?)?;
    grid.write_csv(create(&args.out.join("sweep.csv"))?)?;
    let done = grid.rows.iter().filter(|r| r.comparison.is_some()).count();
    println!("{done}/{} grid cells completed; results in {}", grid.rows.len(), args.out.display());
    let errors = grid.rows.iter().filter_map(|r| {
        r.error
            .clone()
            .map(|e| (format!("{}/{} R={} k={}", r.bone, r.side, r.resolution, r.k), e))
    });
    match failure_of(errors) {
        Some(f) => Err(f),
        None => Ok(()),
    }
}

fn cmd_synth(cmd: &SynthCommand) -> CliResult {
    match cmd {
        SynthCommand::Shape {
            kind,
            subdivisions,
            axes,
            amplitude,
            seed,
            out,
        } => {
            let kind = match kind {
                KindArg::Sphere => ShapeKind::UnitSphere,
                KindArg::Ellipsoid => ShapeKind::Ellipsoid,
                KindArg::Bumpy => ShapeKind::BumpySphere,
            };
            let &[a, b, c] = axes.as_slice() else {
                return Err(Failure::usage(format!("--axes needs 3 values, got {}", axes.len())));
            };
            let params = ShapeParams {
                axes: [a, b, c],
                amplitude: *amplitude,
                ..ShapeParams::default()
            };
            let mesh = make_synthetic(kind, *subdivisions, &params, *seed)?;
            save_mesh(&mesh, out, OffPrecision::Exact)?;
            println!("{} vertices written to {}", mesh.vertex_count(), out.display());
        }
        SynthCommand::Dataset {
            per_group,
            subdivisions,
            null,
            bones,
            sides,
            seed,
            out,
        } => {
            let mut shapes = Vec::new();
            let mut stratum_seed = *seed;
            for bone in bones {
                for side in sides {
                    let side: Side = side.parse()?;
                    let base = if *null {
                        PopulationSpec::null(*per_group as usize, *subdivisions)
                    } else {
                        PopulationSpec::separated(*per_group as usize, *subdivisions)
                    };
                    let spec = PopulationSpec {
                        bone: bone.clone(),
                        side,
                        ..base
                    };
                    shapes.extend(synthetic_population(&spec, stratum_seed)?);
                    stratum_seed = stratum_seed.wrapping_add(1);
                }
            }
            let manifest = write_dataset(&shapes, out)?;
            println!(
                "{} meshes and manifest.csv written to {}",
                manifest.entries().len(),
                out.display()
            );
        }
    }
    Ok(())
}

fn read_table(path: &Path) -> Result<(Vec<String>, Vec<csv::StringRecord>), Failure> {
    let file = fs::File::open(path).map_err(|e| Failure::usage(format!("cannot open {}: {e}", path.display())))?;
    let mut r = csv::Reader::from_reader(file);
    let header = r.headers()?.iter().map(str::to_string).collect();
    let rows = r.records().collect::<Result<Vec<_>, _>>()?;
    Ok((header, rows))
}

fn column(header: &[String], name: &str, path: &Path) -> Result<usize, Failure> {
    header
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| Failure::usage(format!("{}: missing column {name:?}", path.display())))
}

fn number<T: std::str::FromStr>(s: &str, what: &str, line: usize) -> Result<T, Failure> {
    s.trim()
        .parse()
        .map_err(|_| Failure::usage(format!("row {line}: bad {what} {s:?}")))
}

fn write_svg(path: &Path, svg: Result<String, String>) -> CliResult {
    let svg = svg.map_err(Failure::usage)?;
    create(path)?.write_all(svg.as_bytes())?;
    println!("wrote {}", path.display());
    Ok(())
}

fn cmd_plot(cmd: &PlotCommand) -> CliResult {
    match cmd {
        PlotCommand::Nmse { input, out } => {
            let (header, rows) = read_table(input)?;
            let (ck, ce) = (column(&header, "k", input)?, column(&header, "nmse", input)?);
            let points = rows
                .iter()
                .enumerate()
                .map(|(i, r)| Ok((number::<f64>(&r[ck], "k", i + 1)?, number::<f64>(&r[ce], "nmse", i + 1)?)))
                .collect::<Result<Vec<_>, Failure>>()?;
            let series = [plot::Series {
                name: "NMSE".into(),
                points,
            }];
            write_svg(out, plot::line_plot(&series, "Reconstruction error", "eigenfunctions k", "NMSE", true))
        }
        PlotCommand::Gsgw { input, out } => {
            let file = fs::File::open(input).map_err(|e| Failure::usage(format!("cannot open {}: {e}", input.display())))?;
            let rows = read_gsgw_csv(file)?;
            let series: Vec<plot::Series> = rows
                .iter()
                .map(|r| plot::Series {
                    name: if r.label.is_empty() { r.id.clone() } else { format!("{} ({})", r.id, r.label) },
                    points: r.gsgw.values.iter().enumerate().map(|(i, v)| ((i + 1) as f64, *v)).collect(),
                })
                .collect();
            write_svg(out, plot::line_plot(&series, "GSGW descriptors", "entry", "value", false))
        }
        PlotCommand::Sweep {
            input,
            value,
            stratum,
            out,
        } => {
            let (header, rows) = read_table(input)?;
            let cb = column(&header, "bone", input)?;
            let cs = column(&header, "side", input)?;
            let cr = column(&header, "resolution", input)?;
            let ck = column(&header, "k", input)?;
            let name = match value {
                PValue::Manova => "manova_p",
                PValue::Permutation => "permutation_p",
            };
            let cp = column(&header, name, input)?;
            let wanted = match stratum {
                Some(s) => s.clone(),
                None => rows
                    .first()
                    .map(|r| format!("{}/{}", &r[cb], &r[cs]))
                    .ok_or_else(|| Failure::usage(format!("{}: no rows", input.display())))?,
            };
            let mut cells = Vec::new();
            for (i, r) in rows.iter().enumerate() {
                if format!("{}/{}", &r[cb], &r[cs]) != wanted {
                    continue;
                }
                let res: usize = number(&r[cr], "resolution", i + 1)?;
                let k: usize = number(&r[ck], "k", i + 1)?;
                let p: Option<f64> = if r[cp].trim().is_empty() { None } else { Some(number(&r[cp], name, i + 1)?) };
                cells.push((res, k, p));
            }
            if cells.is_empty() {
                return Err(Failure::usage(format!("no rows for stratum {wanted}")));
            }
            let mut rs: Vec<usize> = cells.iter().map(|c| c.0).collect();
            let mut ks: Vec<usize> = cells.iter().map(|c| c.1).collect();
            rs.sort_unstable();
            rs.dedup();
            ks.sort_unstable();
            ks.dedup();
            let mut grid = vec![vec![None; ks.len()]; rs.len()];
            for (r, k, p) in cells {
                let (i, j) = (rs.binary_search(&r).unwrap(), ks.binary_search(&k).unwrap());
                grid[i][j] = p;
            }
            let rl: Vec<String> = rs.iter().map(|r| r.to_string()).collect();
            let kl: Vec<String> = ks.iter().map(|k| k.to_string()).collect();
            let title = format!("{name} for {wanted}");
            write_svg(out, plot::heatmap(&grid, &rl, &kl, &title, "resolution R", "eigenfunctions k"))
        }
    }
}

fn run(cli: &Cli) -> CliResult {
    if let Some(n) = cli.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n as usize)
            .build_global()
            .map_err(|e| Failure::usage(format!("cannot start worker threads: {e}")))?;
    }
    match &cli.command {
        Command::Eigen(a) => {
            eprintln!("resolved config: {a:?}");
            cmd_eigen(a)
        }
        Command::Signature(a) => {
            eprintln!("resolved config: {a:?}");
            cmd_signature(a)
        }
        Command::Gsgw(a) => {
            eprintln!("resolved config: {a:?}");
            cmd_gsgw(a, cli.jobs)
        }
        Command::Reconstruct(a) => {
            eprintln!("resolved config: {a:?}");
            cmd_reconstruct(a)
        }
        Command::Compare(a) => cmd_compare(a, cli.jobs),
        Command::Sweep(a) => cmd_sweep(a, cli.jobs),
        Command::Synth(c) => {
            eprintln!("resolved config: {c:?}");
            cmd_synth(c)
        }
        Command::Plot(c) => cmd_plot(c),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            if cli.error_json {
                let obj = serde_json::json!({ "error": f.kind, "message": f.message, "exit_code": f.code });
                eprintln!("{obj}");
            }
            ExitCode::from(f.code)
        }
    }
}
