//! Smallest eigenpairs of the generalized problem `W phi = lambda A phi`.
//!
//! With diagonal `A` the problem is reduced to the standard symmetric problem
//! `B u = lambda u`, `B = A^-1/2 W A^-1/2`, and mapped back through
//! `phi = A^-1/2 u`, which makes the eigenfunctions A-orthonormal.
//! The sparse path runs shift-inverted subspace iteration with Rayleigh-Ritz
//! projection on `B`, factoring `B + shift I` once with an envelope Cholesky.
//! A block method is used because symmetric meshes have exactly repeated
//! eigenvalues, which single-vector Krylov methods cannot resolve.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::laplacian::LaplacianPair;
use crate::sparse::{CsrMatrix, EnvelopeCholesky};

/// Eigenpair count used when none is given.
pub const DEFAULT_K: usize = 31;
pub const DEFAULT_TOLERANCE: f64 = 1e-10;

const START_SEED: u64 = 0x6c62_6f5f_7374_6172;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolverMethod {
    /// Dense for problems so small that the block covers most of the space.
    #[default]
    Auto,
    Sparse,
    Dense,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub method: SolverMethod,
    /// Residual tolerance on the standard problem, relative to the spectral scale.
    pub tolerance: f64,
    /// Defaults to `50 * k`.
    pub max_iterations: Option<usize>,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            method: SolverMethod::Auto,
            tolerance: DEFAULT_TOLERANCE,
            max_iterations: None,
        }
    }
}

/// Ascending eigenvalues with A-orthonormal eigenfunctions stored as columns.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenSystem {
    eigenvalues: Vec<f64>,
    eigenfunctions: DMatrix<f64>,
    mass: Vec<f64>,
}

impl EigenSystem {
    pub fn from_parts(eigenvalues: Vec<f64>, eigenfunctions: DMatrix<f64>, mass: Vec<f64>) -> Result<Self> {
        if eigenfunctions.ncols() != eigenvalues.len() {
            return Err(Error::DimensionMismatch {
                expected: eigenvalues.len(),
                found: eigenfunctions.ncols(),
            });
        }
        if eigenfunctions.nrows() != mass.len() {
            return Err(Error::DimensionMismatch {
                expected: mass.len(),
                found: eigenfunctions.nrows(),
            });
        }
        if eigenvalues.is_empty() {
            return Err(Error::InvalidParam("eigensystem needs at least one eigenpair".into()));
        }
        check_mass(&mass)?;
        if eigenvalues.iter().any(|l| !l.is_finite()) || eigenfunctions.iter().any(|x| !x.is_finite()) {
            return Err(Error::Numerical("eigensystem contains non-finite values".into()));
        }
        Ok(EigenSystem {
            eigenvalues,
            eigenfunctions,
            mass,
        })
    }

    pub fn k(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn vertex_count(&self) -> usize {
        self.mass.len()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// `m x k` matrix whose column `l` is the eigenfunction `phi_l`.
    pub fn eigenfunctions(&self) -> &DMatrix<f64> {
        &self.eigenfunctions
    }

    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    /// The first `k` eigenpairs.
    pub fn truncated(&self, k: usize) -> Result<EigenSystem> {
        if k == 0 || k > self.k() {
            return Err(Error::InvalidParam(format!(
                "cannot truncate {} eigenpairs to {k}",
                self.k()
            )));
        }
        Ok(EigenSystem {
            eigenvalues: self.eigenvalues[..k].to_vec(),
            eigenfunctions: self.eigenfunctions.columns(0, k).into_owned(),
            mass: self.mass.clone(),
        })
    }

    /// Largest entry of `|Phi^T A Phi - I|`.
    pub fn a_orthonormality_error(&self) -> f64 {
        let mut weighted = self.eigenfunctions.clone();
        for (i, a) in self.mass.iter().enumerate() {
            weighted.row_mut(i).scale_mut(*a);
        }
        let gram = self.eigenfunctions.transpose() * weighted;
        (gram - DMatrix::identity(self.k(), self.k())).amax()
    }

    /// `||W phi - lambda A phi|| / ||A phi||` for every eigenpair.
    pub fn residuals(&self, lap: &LaplacianPair) -> Vec<f64> {
        (0..self.k())
            .map(|l| {
                let phi: Vec<f64> = self.eigenfunctions.column(l).iter().copied().collect();
                let w = lap.stiffness().mul_vec(&phi);
                let (mut num, mut den) = (0.0, 0.0);
                for i in 0..phi.len() {
                    let aphi = lap.areas()[i] * phi[i];
                    num += (w[i] - self.eigenvalues[l] * aphi).powi(2);
                    den += aphi * aphi;
                }
                (num / den).sqrt()
            })
            .collect()
    }
}

fn check_mass(mass: &[f64]) -> Result<()> {
    match mass.iter().position(|a| !(*a > 0.0 && a.is_finite())) {
        Some(index) => Err(Error::DegenerateMass {
            index,
            value: mass[index],
        }),
        None => Ok(()),
    }
}

pub fn solve_smallest(lap: &LaplacianPair, k: usize) -> Result<EigenSystem> {
    solve_smallest_with(lap, k, &SolverOptions::default())
}

pub fn solve_smallest_with(lap: &LaplacianPair, k: usize, opts: &SolverOptions) -> Result<EigenSystem> {
    let m = lap.dim();
    if k == 0 || k > m {
        return Err(Error::InvalidParam(format!("k must lie in 1..={m}, got {k}")));
    }
    check_mass(lap.areas())?;
    let inv_sqrt: Vec<f64> = lap.areas().iter().map(|a| 1.0 / a.sqrt()).collect();
    let b = lap.stiffness().scale_symmetric(&inv_sqrt);

    let method = match opts.method {
        SolverMethod::Auto if m <= 3 * block_size(k, m) => SolverMethod::Dense,
        SolverMethod::Auto => SolverMethod::Sparse,
        other => other,
    };
    let (values, mut u) = match method {
        SolverMethod::Dense => dense_smallest(&b, k),
        _ => subspace_iteration(&b, k, opts)?,
    };
    for (i, s) in inv_sqrt.iter().enumerate() {
        u.row_mut(i).scale_mut(*s);
    }
    fix_signs(&mut u);
    EigenSystem::from_parts(values, u, lap.areas().to_vec())
}

/// Dense reference path through a full symmetric eigendecomposition of `B`.
pub fn solve_dense(lap: &LaplacianPair, k: usize) -> Result<EigenSystem> {
    let opts = SolverOptions {
        method: SolverMethod::Dense,
        ..SolverOptions::default()
    };
    solve_smallest_with(lap, k, &opts)
}

/// Returns `(lambda_max / 20, lambda_max)` with `lambda_max` the largest computed eigenvalue.
pub fn spectrum_bounds(es: &EigenSystem) -> Result<(f64, f64)> {
    if es.k() < 2 {
        return Err(Error::InvalidParam(format!(
            "spectrum bounds need at least 2 eigenpairs, got {}",
            es.k()
        )));
    }
    let lmax = es.eigenvalues()[es.k() - 1];
    if !(lmax > 0.0) {
        return Err(Error::Numerical(format!("largest eigenvalue {lmax} is not positive")));
    }
    Ok((lmax / 20.0, lmax))
}

fn block_size(k: usize, m: usize) -> usize {
    (2 * k).max(k + 8).min(m)
}

fn sorted_eigen(h: DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let eig = SymmetricEigen::new(h);
    let mut idx: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    idx.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]).then(a.cmp(&b)));
    let values = idx.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_columns(&idx.iter().map(|&i| eig.eigenvectors.column(i)).collect::<Vec<_>>());
    (values, vectors)
}

fn dense_smallest(b: &CsrMatrix, k: usize) -> (Vec<f64>, DMatrix<f64>) {
    let mut dense = b.to_dense();
    dense = (&dense + dense.transpose()) * 0.5;
    let (values, vectors) = sorted_eigen(dense);
    (values[..k].to_vec(), vectors.columns(0, k).into_owned())
}

fn sparse_times_dense(b: &CsrMatrix, x: &DMatrix<f64>) -> DMatrix<f64> {
    let cols: Vec<DVector<f64>> = (0..x.ncols())
        .into_par_iter()
        .map(|c| DVector::from_vec(b.mul_vec(x.column(c).as_slice())))
        .collect();
    DMatrix::from_columns(&cols)
}

fn subspace_iteration(b: &CsrMatrix, k: usize, opts: &SolverOptions) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let m = b.dim();
    let p = block_size(k, m);
    let diag = b.diagonal();
    let diag_mean = diag.iter().sum::<f64>() / m as f64;
    if !(diag_mean > 0.0) {
        return Err(Error::Numerical("stiffness matrix has a non-positive diagonal".into()));
    }
    // B is singular (constants); a small negative shift makes B - shift SPD.
    let shift = 1e-4 * diag_mean;
    let shifted = CsrMatrix::from_triplets(
        m,
        b.triplets()
            .map(|(i, j, v)| (i, j, if i == j { v + shift } else { v }))
            .collect(),
    );
    let chol = EnvelopeCholesky::factor(&shifted)?;

    let mut rng = ChaCha8Rng::seed_from_u64(START_SEED);
    let mut x = DMatrix::from_fn(m, p, |_, _| rng.random_range(-1.0..1.0));
    let max_iter = opts.max_iterations.unwrap_or(50 * k).max(1);
    let mut worst = f64::INFINITY;

    for _ in 0..max_iter {
        let q = orthonormalize(chol.solve_many(&x));
        let bq = sparse_times_dense(b, &q);
        let h = q.transpose() * &bq;
        let h = (&h + h.transpose()) * 0.5;
        let (theta, v) = sorted_eigen(h);
        x = &q * &v;
        let bx = bq * &v;

        let scale = theta[k - 1].abs().max(1e-2 * diag_mean);
        worst = (0..k)
            .map(|c| (bx.column(c) - x.column(c) * theta[c]).norm())
            .fold(0.0, f64::max);
        if worst <= opts.tolerance * scale {
            return Ok((theta[..k].to_vec(), x.columns(0, k).into_owned()));
        }
    }
    Err(Error::Convergence {
        iterations: max_iter,
        residual: worst,
    })
}

/// Orthonormal basis of the column space of `y`. Uses two passes of
/// Cholesky QR on the column-normalised block when its Gram matrix is well
/// conditioned (the usual case once the iteration settles), and Householder
/// QR otherwise.
fn orthonormalize(mut y: DMatrix<f64>) -> DMatrix<f64> {
    for mut col in y.column_iter_mut() {
        let norm = col.norm();
        if norm > 0.0 {
            col /= norm;
        }
    }
    let chol_qr = |y: &DMatrix<f64>| -> Option<DMatrix<f64>> {
        let l = (y.transpose() * y).cholesky()?.unpack();
        let d = l.diagonal();
        if !(d.min() > 1e-4 * d.max()) {
            return None;
        }
        Some(l.solve_lower_triangular(&y.transpose())?.transpose())
    };
    match chol_qr(&y).and_then(|q| chol_qr(&q)) {
        Some(q) => q,
        None => y.qr().q(),
    }
}

/// Makes the entry of largest magnitude in each column positive. Near-ties
/// resolve to the lowest index.
fn fix_signs(u: &mut DMatrix<f64>) {
    for mut col in u.column_iter_mut() {
        let big = col.amax();
        if let Some(i) = col.iter().position(|x| x.abs() >= big * (1.0 - 1e-9)) {
            if col[i] < 0.0 {
                col.neg_mut();
            }
        }
    }
}
