//! Two-group comparison of shape descriptors: PCA reduction, one-way MANOVA
//! with the exact two-group F test, and a seeded permutation test on Wilks' lambda.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, FisherSnedecor};

use crate::error::{Error, Result};

pub const DEFAULT_PCA_DIMS: usize = 18;
pub const DEFAULT_PERMUTATIONS: usize = 1000;
/// A comparison is flagged significant below this p-value.
pub const SIGNIFICANCE_LEVEL: f64 = 0.05;

/// Rows are shapes, columns are features.
#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrix {
    x: DMatrix<f64>,
    labels: Vec<String>,
    ids: Vec<String>,
}

impl DataMatrix {
    pub fn new(x: DMatrix<f64>, labels: Vec<String>, ids: Vec<String>) -> Result<Self> {
        let n = x.nrows();
        if labels.len() != n {
            return Err(Error::DimensionMismatch { expected: n, found: labels.len() });
        }
        if ids.len() != n {
            return Err(Error::DimensionMismatch { expected: n, found: ids.len() });
        }
        if n < 4 {
            return Err(Error::GroupCount(format!("need at least 4 shapes, got {n}")));
        }
        if x.ncols() == 0 {
            return Err(Error::InvalidParam("data matrix has no feature columns".into()));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("data matrix contains non-finite entries".into()));
        }
        Ok(DataMatrix { x, labels, ids })
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    /// Splits the rows into exactly two groups, named in sorted order.
    pub fn two_groups(&self) -> Result<GroupSplit> {
        let mut names: Vec<&String> = self.labels.iter().collect();
        names.sort();
        names.dedup();
        if names.len() != 2 {
            return Err(Error::GroupCount(format!(
                "expected exactly two group labels, found {}",
                names.len()
            )));
        }
        let in_first: Vec<bool> = self.labels.iter().map(|l| l == names[0]).collect();
        let n1 = in_first.iter().filter(|&&b| b).count();
        let sizes = [n1, self.n() - n1];
        if sizes.iter().any(|&s| s < 2) {
            return Err(Error::GroupCount(format!("each group needs at least 2 members, sizes are {sizes:?}")));
        }
        Ok(GroupSplit {
            names: [names[0].clone(), names[1].clone()],
            sizes,
            in_first,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupSplit {
    pub names: [String; 2],
    pub sizes: [usize; 2],
    pub in_first: Vec<bool>,
}

#[derive(Debug, Clone)]
pub struct Pca {
    /// All singular values of the centred data, descending.
    pub singular_values: Vec<f64>,
    /// `p x d` principal directions.
    pub loadings: DMatrix<f64>,
    /// `n x d` projections of the centred data.
    pub scores: DMatrix<f64>,
}

impl Pca {
    /// Fraction of total variance captured by the retained components.
    pub fn explained_variance_ratio(&self) -> f64 {
        let d = self.loadings.ncols();
        let total: f64 = self.singular_values.iter().map(|s| s * s).sum();
        self.singular_values[..d].iter().map(|s| s * s).sum::<f64>() / total
    }
}

pub fn pca_fit(data: &DataMatrix, d: usize) -> Result<Pca> {
    let (n, p) = (data.n(), data.p());
    if d == 0 || d > (n - 1).min(p) {
        return Err(Error::InvalidParam(format!(
            "PCA dimension {d} outside 1..={}",
            (n - 1).min(p)
        )));
    }
    let mut centred = data.x.clone();
    for mut col in centred.column_iter_mut() {
        let mean = col.mean();
        col.add_scalar_mut(-mean);
    }
    let svd = centred.clone().svd(false, true);
    let v_t = svd.v_t.as_ref().expect("requested right singular vectors");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]).then(a.cmp(&b)));
    let singular_values: Vec<f64> = order.iter().map(|&i| svd.singular_values[i]).collect();

    let mut loadings = DMatrix::zeros(p, d);
    for (c, &i) in order.iter().take(d).enumerate() {
        let mut dir = v_t.row(i).transpose();
        let big = dir.amax();
        if let Some(j) = dir.iter().position(|x| x.abs() >= big * (1.0 - 1e-9)) {
            if dir[j] < 0.0 {
                dir.neg_mut();
            }
        }
        loadings.set_column(c, &dir);
    }
    let scores = centred * &loadings;
    Ok(Pca {
        singular_values,
        loadings,
        scores,
    })
}

/// Projects onto the top `d` principal directions; labels and ids are kept.
pub fn pca_reduce(data: &DataMatrix, d: usize) -> Result<DataMatrix> {
    let pca = pca_fit(data, d)?;
    DataMatrix::new(pca.scores, data.labels.clone(), data.ids.clone())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ManovaResult {
    pub wilks_lambda: f64,
    pub f_statistic: f64,
    pub df1: f64,
    pub df2: f64,
    pub p_value: f64,
}

/// Computes Wilks' lambda for arbitrary two-way splits of a fixed data set.
/// Columns are rescaled by their total standard deviation, which leaves
/// lambda unchanged and keeps the scatter matrices well conditioned.
struct WilksEvaluator {
    x: DMatrix<f64>,
    log_det_total: f64,
}

impl WilksEvaluator {
    fn new(x: &DMatrix<f64>) -> Result<Self> {
        let mut x = x.clone();
        for mut col in x.column_iter_mut() {
            let mean = col.mean();
            col.add_scalar_mut(-mean);
            let norm = col.norm();
            if !(norm > 0.0) {
                return Err(Error::SingularScatter("a feature column is constant".into()));
            }
            col.scale_mut(1.0 / norm);
        }
        let total = x.transpose() * &x;
        let log_det_total = log_det_spd(total)
            .ok_or_else(|| Error::SingularScatter("total scatter matrix is singular".into()))?;
        Ok(WilksEvaluator { x, log_det_total })
    }

    fn group_scatter(&self, in_first: &[bool], first: bool) -> DMatrix<f64> {
        let d = self.x.ncols();
        let rows: Vec<usize> = (0..self.x.nrows()).filter(|&i| in_first[i] == first).collect();
        let mut mean = DVector::zeros(d);
        for &i in &rows {
            mean += self.x.row(i).transpose();
        }
        mean /= rows.len() as f64;
        let mut s = DMatrix::zeros(d, d);
        for &i in &rows {
            let r = self.x.row(i).transpose() - &mean;
            s.ger(1.0, &r, &r, 1.0);
        }
        s
    }

    /// `None` when the within-group scatter is singular.
    fn lambda(&self, in_first: &[bool]) -> Option<f64> {
        let within = self.group_scatter(in_first, true) + self.group_scatter(in_first, false);
        log_det_spd(within).map(|ld| (ld - self.log_det_total).exp().min(1.0))
    }
}

fn log_det_spd(m: DMatrix<f64>) -> Option<f64> {
    let d = m.nrows();
    let scale = m.diagonal().amax();
    let chol = m.cholesky()?;
    let l = chol.l_dirty();
    let mut sum = 0.0;
    for i in 0..d {
        let piv = l[(i, i)];
        if !(piv * piv > 1e-13 * scale) {
            return None;
        }
        sum += 2.0 * piv.ln();
    }
    Some(sum)
}

fn manova_from_lambda(lambda: f64, n: usize, d: usize) -> Result<ManovaResult> {
    let df1 = d as f64;
    let df2 = (n - d - 1) as f64;
    let f_statistic = if lambda >= 1.0 {
        0.0
    } else {
        (df2 / df1) * (1.0 - lambda) / lambda
    };
    let dist = FisherSnedecor::new(df1, df2).map_err(|e| Error::Numerical(e.to_string()))?;
    let p_value = if f_statistic == 0.0 { 1.0 } else { dist.sf(f_statistic).clamp(0.0, 1.0) };
    Ok(ManovaResult {
        wilks_lambda: lambda,
        f_statistic,
        df1,
        df2,
        p_value,
    })
}

fn check_dims(data: &DataMatrix, split: &GroupSplit) -> Result<()> {
    let n = split.sizes[0] + split.sizes[1];
    if data.p() + 2 > n {
        return Err(Error::InvalidParam(format!(
            "MANOVA needs at most n - 2 = {} features, got {}",
            n - 2,
            data.p()
        )));
    }
    Ok(())
}

/// One-way MANOVA for two groups with the exact F transformation of Wilks' lambda.
pub fn manova_two_group(data: &DataMatrix) -> Result<ManovaResult> {
    let split = data.two_groups()?;
    check_dims(data, &split)?;
    let eval = WilksEvaluator::new(&data.x)?;
    let lambda = eval.lambda(&split.in_first).ok_or_else(|| {
        Error::SingularScatter(format!(
            "within-group scatter of {} features is not invertible; use fewer PCA dimensions",
            data.p()
        ))
    })?;
    manova_from_lambda(lambda, data.n(), data.p())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PermutationResult {
    pub observed: f64,
    pub p_value: f64,
    /// Relabellings evaluated (all of them when `exhaustive`).
    pub n_permutations: usize,
    pub exhaustive: bool,
}

fn binomial(n: usize, k: usize) -> Option<usize> {
    let k = k.min(n - k);
    let mut acc: usize = 1;
    for i in 0..k {
        acc = acc.checked_mul(n - i)? / (i + 1);
    }
    Some(acc)
}

/// All ways to place `k` members among `n` slots, in lexicographic order.
fn all_memberships(n: usize, k: usize) -> Vec<Vec<bool>> {
    let mut out = Vec::new();
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        let mut v = vec![false; n];
        for &i in &idx {
            v[i] = true;
        }
        out.push(v);
        let Some(pos) = (0..k).rev().find(|&i| idx[i] != i + n - k) else {
            return out;
        };
        idx[pos] += 1;
        for j in pos + 1..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// Permutation test on Wilks' lambda.
///
/// Replicate `r` shuffles the labels with a generator seeded by `seed` on
/// stream `r + 1`, so the result does not depend on thread scheduling. The
/// p-value is `(1 + #{lambda_perm <= lambda_obs}) / (n_perm + 1)`. When there
/// are no more distinct relabellings than `n_perm`, all of them are evaluated
/// and the p-value is the exact fraction with `lambda <= lambda_obs`.
pub fn permutation_test(data: &DataMatrix, n_perm: usize, seed: u64) -> Result<PermutationResult> {
    if n_perm == 0 {
        return Err(Error::InvalidParam("need at least one permutation".into()));
    }
    let split = data.two_groups()?;
    check_dims(data, &split)?;
    let eval = WilksEvaluator::new(&data.x)?;
    let observed = eval.lambda(&split.in_first).ok_or_else(|| {
        Error::SingularScatter(format!(
            "within-group scatter of {} features is not invertible; use fewer PCA dimensions",
            data.p()
        ))
    })?;
    let threshold = observed * (1.0 + 1e-12);
    // A singular within-group scatter means lambda = 0.
    let stat = |m: &[bool]| eval.lambda(m).unwrap_or(0.0);

    let n = data.n();
    if let Some(total) = binomial(n, split.sizes[0]).filter(|&t| t <= n_perm) {
        let hits = all_memberships(n, split.sizes[0])
            .par_iter()
            .filter(|m| stat(m) <= threshold)
            .count();
        return Ok(PermutationResult {
            observed,
            p_value: hits as f64 / total as f64,
            n_permutations: total,
            exhaustive: true,
        });
    }

    let hits = (0..n_perm)
        .into_par_iter()
        .filter(|&r| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(r as u64 + 1);
            let mut membership = split.in_first.clone();
            membership.shuffle(&mut rng);
            stat(&membership) <= threshold
        })
        .count();
    Ok(PermutationResult {
        observed,
        p_value: (1 + hits) as f64 / (n_perm + 1) as f64,
        n_permutations: n_perm,
        exhaustive: false,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupComparison {
    pub groups: [String; 2],
    pub sizes: [usize; 2],
    pub wilks_lambda: f64,
    pub manova_p: f64,
    pub permutation_p: f64,
    pub pca_dims: usize,
    pub n_permutations: usize,
    pub exhaustive: bool,
    pub seed: u64,
}

impl GroupComparison {
    pub fn manova_significant(&self) -> bool {
        self.manova_p < SIGNIFICANCE_LEVEL
    }

    pub fn permutation_significant(&self) -> bool {
        self.permutation_p < SIGNIFICANCE_LEVEL
    }
}

/// PCA to `pca_dims` (skipped when `None`), then MANOVA and the permutation test.
pub fn compare_groups(
    data: &DataMatrix,
    pca_dims: Option<usize>,
    n_perm: usize,
    seed: u64,
) -> Result<GroupComparison> {
    let split = data.two_groups()?;
    let reduced = match pca_dims {
        Some(d) => pca_reduce(data, d)?,
        None => data.clone(),
    };
    let manova = manova_two_group(&reduced)?;
    let perm = permutation_test(&reduced, n_perm, seed)?;
    Ok(GroupComparison {
        groups: split.names,
        sizes: split.sizes,
        wilks_lambda: manova.wilks_lambda,
        manova_p: manova.p_value,
        permutation_p: perm.p_value,
        pca_dims: reduced.p(),
        n_permutations: perm.n_permutations,
        exhaustive: perm.exhaustive,
        seed,
    })
}
