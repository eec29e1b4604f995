//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::path::Path;
use std::time::{Duration, Instant};

use gsgw_core::eigen::{solve_dense, solve_smallest, solve_smallest_with, EigenSystem, SolverMethod, SolverOptions};
use gsgw_core::laplacian::cotangent_weights;
use gsgw_core::mesh_io::{make_synthetic, rigid_transform, ShapeKind, ShapeParams, TriangleMesh};
use gsgw_core::pipeline::{
    run_group_comparison, run_group_comparison_on_shapes, synthetic_population, write_dataset, PopulationSpec,
    RunConfig,
};
use gsgw_core::reconstruct::nmse_curve;
use gsgw_core::sgws::{signature_matrix, KernelConfig};
use gsgw_core::stats::{manova_two_group, permutation_test, DataMatrix};
use gsgw_core::gsgw::aggregate;
use nalgebra::{DMatrix, DVector, Matrix3, Point3, Rotation3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use statrs::distribution::{ContinuousCDF, StudentsT};

type Outcome = Result<String, String>;

fn check(cond: bool, detail: String) -> Outcome {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn sphere(subdivisions: u32) -> TriangleMesh {
    make_synthetic(ShapeKind::UnitSphere, subdivisions, &ShapeParams::default(), 0).unwrap()
}

fn bumpy(subdivisions: u32, axes: [f64; 3], seed: u64) -> TriangleMesh {
    let params = ShapeParams {
        axes,
        ..ShapeParams::default()
    };
    make_synthetic(ShapeKind::BumpySphere, subdivisions, &params, seed).unwrap()
}

fn random_rotation(rng: &mut impl Rng) -> Rotation3<f64> {
    let axis = Vector3::new(
        StandardNormal.sample(rng),
        StandardNormal.sample(rng),
        StandardNormal.sample(rng),
    );
    let angle = rng.random_range(0.0..std::f64::consts::PI);
    Rotation3::from_scaled_axis(axis.normalize() * angle)
}

fn gaussian_data(n1: usize, n2: usize, d: usize, shift: f64, rng: &mut impl Rng) -> DataMatrix {
    let n = n1 + n2;
    let x = DMatrix::from_fn(n, d, |i, j| {
        let z: f64 = StandardNormal.sample(rng);
        z + if i >= n1 && j == 0 { shift } else { 0.0 }
    });
    let labels = (0..n).map(|i| if i < n1 { "a" } else { "b" }.to_string()).collect();
    let ids = (0..n).map(|i| format!("x{i}")).collect();
    DataMatrix::new(x, labels, ids).unwrap()
}

/// 1: eigenvalues of the unit icosphere cluster at l(l+1) with multiplicity 2l+1.
fn sphere_spectrum() -> Outcome {
    let mesh = sphere(3);
    let start = Instant::now();
    let lap = cotangent_weights(&mesh).map_err(|e| e.to_string())?;
    let es = solve_smallest(&lap, 15).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let lambda = es.eigenvalues();
    // With k = 15 the l = 3 cluster is cut after 6 of its 7 members.
    let groups: [(f64, usize); 4] = [(0.0, 1), (2.0, 3), (6.0, 5), (12.0, 6)];
    let mut idx = 0;
    let mut worst: f64 = 0.0;
    for (target, count) in groups {
        for _ in 0..count {
            let err = if target == 0.0 { lambda[idx].abs() } else { (lambda[idx] - target).abs() / target };
            if target == 0.0 && err > 1e-8 {
                return Err(format!("lambda_1 = {:e}", lambda[idx]));
            }
            if target > 0.0 {
                worst = worst.max(err);
            }
            idx += 1;
        }
    }
    // The full l = 3 cluster, and the start of l = 4, from one more pair.
    let es16 = solve_smallest(&lap, 17).map_err(|e| e.to_string())?;
    let l3: Vec<f64> = es16.eigenvalues()[9..16].to_vec();
    let l3_ok = l3.iter().all(|v| (v - 12.0).abs() / 12.0 < 0.05) && (es16.eigenvalues()[16] - 20.0).abs() / 20.0 < 0.05;
    check(
        worst < 0.05 && l3_ok && elapsed < Duration::from_secs(5),
        format!(
            "m={}, multiplicities 1/3/5/7 confirmed, worst rel. error {:.3}%, k=15 solve {:.2?}",
            mesh.vertex_count(),
            worst * 100.0,
            elapsed
        ),
    )
}

fn open_grid(n: usize) -> TriangleMesh {
    let mut vertices = Vec::new();
    for i in 0..n {
        for j in 0..n {
            let (x, y) = (i as f64 / (n - 1) as f64, j as f64 / (n - 1) as f64);
            vertices.push(Point3::new(x + 0.1 * y * y, y, 0.2 * (3.0 * x).sin() * y));
        }
    }
    let mut triangles = Vec::new();
    for i in 0..n - 1 {
        for j in 0..n - 1 {
            let v = i * n + j;
            triangles.push([v, v + n, v + 1]);
            triangles.push([v + 1, v + n, v + n + 1]);
        }
    }
    TriangleMesh::new(vertices, triangles).unwrap()
}

/// 2: the sparse solver agrees with the dense generalized eigendecomposition.
fn dense_oracle() -> Outcome {
    let meshes = [
        ("icosphere", sphere(2)),
        ("bumpy sphere", bumpy(2, [1.0; 3], 11)),
        ("ellipsoid", make_synthetic(ShapeKind::Ellipsoid, 2, &ShapeParams { axes: [1.5, 1.0, 0.7], ..ShapeParams::default() }, 0).unwrap()),
        ("bumpy ellipsoid", bumpy(2, [1.3, 1.0, 1.0], 12)),
        ("open patch", open_grid(20)),
    ];
    let opts = SolverOptions {
        method: SolverMethod::Sparse,
        ..SolverOptions::default()
    };
    let mut worst_value: f64 = 0.0;
    let mut worst_orth: f64 = 0.0;
    for (name, mesh) in &meshes {
        if mesh.vertex_count() > 600 {
            return Err(format!("{name} has {} vertices", mesh.vertex_count()));
        }
        let lap = cotangent_weights(mesh).map_err(|e| e.to_string())?;
        let sparse = solve_smallest_with(&lap, 20, &opts).map_err(|e| format!("{name}: {e}"))?;
        let dense = solve_dense(&lap, 20).map_err(|e| format!("{name}: {e}"))?;
        for (a, b) in sparse.eigenvalues().iter().zip(dense.eigenvalues()) {
            worst_value = worst_value.max((a - b).abs());
        }
        worst_orth = worst_orth.max(sparse.a_orthonormality_error());
    }
    check(
        worst_value <= 1e-9 && worst_orth <= 1e-6,
        format!("max |lambda_sparse - lambda_dense| = {worst_value:.2e}, max A-orthonormality residual = {worst_orth:.2e}"),
    )
}

/// 3: signature lengths for R = 1, 2, 5, 30.
fn signature_dimensions() -> Outcome {
    let mesh = sphere(2);
    let lap = cotangent_weights(&mesh).unwrap();
    let es = solve_smallest(&lap, 31).unwrap();
    let mut got = Vec::new();
    for r in [1, 2, 5, 30] {
        let cfg = KernelConfig::from_eigensystem(&es, r).map_err(|e| e.to_string())?;
        let sig = signature_matrix(&es, &cfg).map_err(|e| e.to_string())?;
        if sig.vertex_count() != mesh.vertex_count() {
            return Err(format!("R={r}: {} columns", sig.vertex_count()));
        }
        got.push(sig.len());
    }
    check(got == [2, 5, 20, 495], format!("lengths {got:?}"))
}

fn gsgw_of(mesh: &TriangleMesh) -> Vec<f64> {
    let lap = cotangent_weights(mesh).unwrap();
    let es = solve_smallest(&lap, 31).unwrap();
    let cfg = KernelConfig::from_eigensystem(&es, 30).unwrap();
    let sig = signature_matrix(&es, &cfg).unwrap();
    aggregate(&sig, es.mass(), "").unwrap().values
}

/// 4: GSGW vectors are invariant under rigid motions.
fn isometry_invariance() -> Outcome {
    let mesh = bumpy(3, [1.0; 3], 21);
    let base = gsgw_of(&mesh);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst: f64 = 0.0;
    for _ in 0..10 {
        let rot = random_rotation(&mut rng);
        let t = Vector3::new(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0));
        let moved = rigid_transform(&mesh, rot.matrix(), &t).map_err(|e| e.to_string())?;
        for (a, b) in base.iter().zip(gsgw_of(&moved)) {
            worst = worst.max((a - b).abs() / a.abs().max(b.abs()));
        }
    }
    check(worst <= 1e-8, format!("10 transforms, max entrywise relative difference {worst:.2e}"))
}

/// 5: rotating within the degenerate l = 1 eigenspace leaves every signature entry unchanged.
fn eigenspace_rotation() -> Outcome {
    let mesh = sphere(3);
    let lap = cotangent_weights(&mesh).unwrap();
    let es = solve_smallest(&lap, 31).unwrap();
    let cfg = KernelConfig::from_eigensystem(&es, 30).unwrap();
    let base = signature_matrix(&es, &cfg).unwrap();
    let scale = base.matrix().amax();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut worst_abs, mut worst_rel): (f64, f64) = (0.0, 0.0);
    for _ in 0..25 {
        let q: Matrix3<f64> = *random_rotation(&mut rng).matrix();
        let mut phi = es.eigenfunctions().clone();
        let block = es.eigenfunctions().columns(1, 3) * q;
        phi.columns_mut(1, 3).copy_from(&block);
        let rotated = EigenSystem::from_parts(es.eigenvalues().to_vec(), phi, es.mass().to_vec()).map_err(|e| e.to_string())?;
        let sig = signature_matrix(&rotated, &cfg).unwrap();
        let diff = (sig.matrix() - base.matrix()).amax();
        worst_abs = worst_abs.max(diff);
        worst_rel = worst_rel.max(diff / scale);
    }
    check(
        worst_abs <= 1e-10 && worst_rel <= 1e-10,
        format!("25 rotations, max |delta S| = {worst_abs:.2e} ({worst_rel:.2e} of max entry)"),
    )
}

/// 6: a three-vertex system against direct evaluation of the kernel sums.
fn hand_oracle() -> Outcome {
    let areas = [0.5, 1.0, 1.5];
    let lambdas = [0.0, 1.5, 4.0];
    // Orthonormal Q whose first column is sqrt(a)/|sqrt(a)|, then phi = A^{-1/2} Q.
    let s = DVector::from_iterator(3, areas.iter().map(|a: &f64| a.sqrt()));
    let q1 = s.normalize();
    let mut q2 = DVector::from_vec(vec![1.0, -1.0, 0.5]);
    q2 -= &q1 * q1.dot(&q2);
    q2 = q2.normalize();
    let q3 = DVector::from_vec(vec![
        q1[1] * q2[2] - q1[2] * q2[1],
        q1[2] * q2[0] - q1[0] * q2[2],
        q1[0] * q2[1] - q1[1] * q2[0],
    ]);
    let phi = DMatrix::from_fn(3, 3, |i, l| [&q1, &q2, &q3][l][i] / areas[i].sqrt());
    let es = EigenSystem::from_parts(lambdas.to_vec(), phi.clone(), areas.to_vec()).map_err(|e| e.to_string())?;
    let resolution = 3;
    let cfg = KernelConfig::from_eigensystem(&es, resolution).map_err(|e| e.to_string())?;
    let sig = signature_matrix(&es, &cfg).map_err(|e| e.to_string())?;

    let (lmax, lmin) = (4.0_f64, 4.0 / 20.0);
    let g = |x: f64| x * (-x).exp();
    let h = |x: f64| (-1.0_f64).exp() * (-(x / (0.6 * lmin)).powi(4)).exp();
    let mut worst: f64 = 0.0;
    for j in 0..3 {
        let w = areas[j] * areas[j];
        let mut expected = Vec::new();
        for level in 1..=resolution {
            for i in 0..level {
                let t = if level == 1 {
                    2.0 / lmin
                } else {
                    let (hi, lo) = ((2.0 / lmin).ln(), (2.0 / lmax).ln());
                    (hi + (lo - hi) * i as f64 / (level - 1) as f64).exp()
                };
                expected.push(w * (0..3).map(|l| g(t * lambdas[l]) * phi[(j, l)].powi(2)).sum::<f64>());
            }
            expected.push(w * (0..3).map(|l| h(lambdas[l]) * phi[(j, l)].powi(2)).sum::<f64>());
        }
        for (r, e) in expected.iter().enumerate() {
            worst = worst.max((sig.matrix()[(r, j)] - e).abs());
        }
    }
    check(worst <= 1e-12, format!("9 entries x 3 vertices, max |difference| = {worst:.2e}"))
}

/// 7: NMSE anchors and decay.
fn nmse_anchors() -> Outcome {
    let shape = bumpy(3, [1.0; 3], 31);
    let lap = cotangent_weights(&shape).unwrap();
    let es = solve_smallest(&lap, 50).unwrap();
    let ks: Vec<usize> = (1..=50).collect();
    let curve = nmse_curve(&shape, &es, &ks).map_err(|e| e.to_string())?;
    if curve.nmse[0] != 1.0 {
        return Err(format!("NMSE(1) = {:e}", curve.nmse[0]));
    }
    if let Some(w) = curve.nmse.windows(2).position(|w| w[1] > w[0]) {
        return Err(format!("NMSE increases from k={} to k={}", w + 1, w + 2));
    }
    let small = bumpy(1, [1.0; 3], 32);
    let lap = cotangent_weights(&small).unwrap();
    let full = solve_dense(&lap, small.vertex_count()).unwrap();
    let full_nmse = nmse_curve(&small, &full, &[small.vertex_count()]).unwrap().nmse[0];
    if full_nmse >= 1e-12 {
        return Err(format!("NMSE(m) = {full_nmse:e}"));
    }
    let mut at30 = Vec::new();
    for mesh in [sphere(3), bumpy(3, [1.3, 1.0, 1.0], 33), shape.clone()] {
        let lap = cotangent_weights(&mesh).unwrap();
        let es = solve_smallest(&lap, 30).unwrap();
        at30.push(nmse_curve(&mesh, &es, &[30]).unwrap().nmse[0]);
    }
    check(
        at30.iter().all(|&v| v < 0.1),
        format!(
            "NMSE(1)=1, NMSE(m={})={full_nmse:.1e}, monotone over 1..50, NMSE(30) = {:.1e}/{:.1e}/{:.1e}",
            small.vertex_count(),
            at30[0],
            at30[1],
            at30[2]
        ),
    )
}

fn hotelling_t2(data: &DataMatrix, n1: usize) -> f64 {
    let x = data.x();
    let (n, d) = (x.nrows(), x.ncols());
    let mean = |rows: std::ops::Range<usize>| {
        let len = rows.len() as f64;
        rows.fold(DVector::zeros(d), |acc: DVector<f64>, i| acc + x.row(i).transpose()) / len
    };
    let (m1, m2) = (mean(0..n1), mean(n1..n));
    let mut pooled = DMatrix::zeros(d, d);
    for i in 0..n {
        let r = x.row(i).transpose() - if i < n1 { &m1 } else { &m2 };
        pooled += &r * r.transpose();
    }
    pooled /= (n - 2) as f64;
    let diff = m1 - m2;
    (n1 * (n - n1)) as f64 / n as f64 * (diff.transpose() * pooled.try_inverse().unwrap() * &diff)[(0, 0)]
}

fn ks_uniform(mut ps: Vec<f64>) -> f64 {
    ps.sort_by(f64::total_cmp);
    let n = ps.len() as f64;
    ps.iter()
        .enumerate()
        .map(|(i, &p)| ((i + 1) as f64 / n - p).max(p - i as f64 / n))
        .fold(0.0, f64::max)
}

/// 8: Wilks-Hotelling identity, univariate reduction and null calibration.
fn statistics() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut worst_identity: f64 = 0.0;
    for _ in 0..100 {
        let n1 = rng.random_range(3..15);
        let n2 = rng.random_range(3..15);
        let d = rng.random_range(1..=(n1 + n2 - 2).min(8));
        let shift = rng.random_range(0.0..2.0);
        let data = gaussian_data(n1, n2, d, shift, &mut rng);
        let lambda = manova_two_group(&data).map_err(|e| e.to_string())?.wilks_lambda;
        let t2 = hotelling_t2(&data, n1);
        let from_lambda = (n1 + n2 - 2) as f64 * (1.0 - lambda) / lambda;
        worst_identity = worst_identity.max((from_lambda - t2).abs() / t2.max(1.0));
    }
    let mut worst_t: f64 = 0.0;
    for _ in 0..20 {
        let (n1, n2) = (rng.random_range(2..12), rng.random_range(2..12));
        let data = gaussian_data(n1, n2, 1, 0.8, &mut rng);
        let p = manova_two_group(&data).unwrap().p_value;
        let x = data.x().column(0);
        let (a, b): (Vec<f64>, Vec<f64>) = (x.iter().take(n1).copied().collect(), x.iter().skip(n1).copied().collect());
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let ss = |v: &[f64]| v.iter().map(|x| (x - mean(v)).powi(2)).sum::<f64>();
        let df = (n1 + n2 - 2) as f64;
        let sp2 = (ss(&a) + ss(&b)) / df;
        let t = (mean(&a) - mean(&b)) / (sp2 * (1.0 / n1 as f64 + 1.0 / n2 as f64)).sqrt();
        let p_t = 2.0 * StudentsT::new(0.0, 1.0, df).unwrap().sf(t.abs());
        worst_t = worst_t.max((p - p_t).abs());
    }
    let mut ps = Vec::new();
    for trial in 0..200u64 {
        let mut data_rng = ChaCha8Rng::seed_from_u64(80_000 + trial);
        let data = gaussian_data(10, 10, 3, 0.0, &mut data_rng);
        ps.push(permutation_test(&data, 199, trial).map_err(|e| e.to_string())?.p_value);
    }
    let ks = ks_uniform(ps);
    let elapsed = start.elapsed();
    check(
        worst_identity <= 1e-10 && worst_t <= 1e-10 && ks < 0.1 && elapsed < Duration::from_secs(60),
        format!(
            "identity err {worst_identity:.1e} (100 sets), |p_manova - p_t| {worst_t:.1e}, null KS {ks:.3} (200 x 199 perms), {elapsed:.1?}"
        ),
    )
}

fn paper_defaults(seed: u64) -> RunConfig {
    RunConfig {
        seed,
        ..RunConfig::default()
    }
}

/// 9: separated classes are detected; null populations mostly are not.
fn end_to_end(work: &Path) -> Outcome {
    let start = Instant::now();
    let shapes = synthetic_population(&PopulationSpec::separated(10, 3), 2024).unwrap();
    let manifest = write_dataset(&shapes, &work.join("separated")).map_err(|e| e.to_string())?;
    let report = run_group_comparison(&manifest, &paper_defaults(7)).map_err(|e| e.to_string())?;
    let (_, c) = report.completed().next().ok_or("separated stratum did not complete")?;
    let separated = format!("separated: manova p={:.2e}, perm p={:.2e}", c.manova_p, c.permutation_p);
    if !(c.manova_p < 0.05 && c.permutation_p < 0.05) {
        return Err(separated);
    }
    let (mut manova_ok, mut perm_ok) = (0, 0);
    for seed in 0..50u64 {
        let shapes = synthetic_population(&PopulationSpec::null(10, 3), 10_000 + seed).unwrap();
        let report = run_group_comparison_on_shapes(&shapes, &paper_defaults(seed)).map_err(|e| e.to_string())?;
        let (_, c) = report.completed().next().ok_or_else(|| format!("null seed {seed} did not complete"))?;
        manova_ok += usize::from(c.manova_p >= 0.05);
        perm_ok += usize::from(c.permutation_p >= 0.05);
    }
    let elapsed = start.elapsed();
    check(
        manova_ok >= 45 && perm_ok >= 45 && elapsed < Duration::from_secs(600),
        format!("{separated}; null non-significant manova {manova_ok}/50, perm {perm_ok}/50; {elapsed:.1?}"),
    )
}

fn dir_contents(root: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(root).unwrap().display().to_string();
                out.push((rel, std::fs::read(&path).unwrap()));
            }
        }
    }
    out.sort();
    out
}

/// 10: two identical runs give byte-identical reports and caches.
fn determinism(work: &Path) -> Outcome {
    let shapes = synthetic_population(&PopulationSpec::separated(10, 2), 99).unwrap();
    let manifest = write_dataset(&shapes, &work.join("determinism")).map_err(|e| e.to_string())?;
    let mut outputs = Vec::new();
    for run in 0..2 {
        let cache = work.join(format!("cache{run}"));
        let cfg = RunConfig {
            cache_dir: Some(cache.clone()),
            cache_signatures: true,
            ..paper_defaults(11)
        };
        let report = run_group_comparison(&manifest, &cfg).map_err(|e| e.to_string())?;
        let mut report = serde_json::to_value(&report).unwrap();
        // The cache location is the one intended difference between the runs.
        report["config"]["cache_dir"] = serde_json::Value::Null;
        let mut json = serde_json::to_vec_pretty(&report).unwrap();
        let parsed: gsgw_core::pipeline::ComparisonReport = serde_json::from_value(report).unwrap();
        parsed.write_csv(&mut json).unwrap();
        outputs.push((json, dir_contents(&cache)));
    }
    let files = outputs[0].1.len();
    check(
        outputs[0] == outputs[1] && files == 40,
        format!("reports identical, {files} cache files byte-identical"),
    )
}

type Check<'a> = Box<dyn Fn() -> Outcome + 'a>;

fn main() {
    let work = tempfile::tempdir().expect("temp dir");
    let criteria: Vec<(&str, Check<'_>)> = vec![
        ("1 sphere spectrum", Box::new(sphere_spectrum)),
        ("2 dense-oracle equivalence", Box::new(dense_oracle)),
        ("3 signature dimensions", Box::new(signature_dimensions)),
        ("4 isometry invariance", Box::new(isometry_invariance)),
        ("5 eigenspace-rotation invariance", Box::new(eigenspace_rotation)),
        ("6 hand-oracle signature", Box::new(hand_oracle)),
        ("7 NMSE anchors", Box::new(nmse_anchors)),
        ("8 statistics correctness", Box::new(statistics)),
        ("9 end-to-end discrimination", Box::new(|| end_to_end(work.path()))),
        ("10 determinism", Box::new(|| determinism(work.path()))),
    ];
    let mut failed = 0;
    for (name, run) in criteria {
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(std::panic::AssertUnwindSafe(run))
            .unwrap_or_else(|_| Err("panicked".to_string()));
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS [{name}] {detail} ({secs:.1}s)"),
            Err(detail) => {
                failed += 1;
                println!("FAIL [{name}] {detail} ({secs:.1}s)");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", 10 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
