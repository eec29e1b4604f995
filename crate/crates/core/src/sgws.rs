//! Spectral graph wavelet signatures.
//!
//! For a unit impulse at vertex `j`, the wavelet coefficient at scale `t` is
//! `sum_l a_j^2 g(t lambda_l) phi_l(j)^2` and the scaling coefficient is
//! `sum_l a_j^2 h(lambda_l) phi_l(j)^2`, both summed over every computed
//! eigenpair. Level `L` contributes `L` wavelet coefficients at scales
//! log-spaced from `2 / lambda_min` down to `2 / lambda_max`, followed by the
//! scaling coefficient. Levels `1..=R` are concatenated in order, giving
//! `(R + 1)(R + 2) / 2 - 1` entries per vertex.

use std::io::Write;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::eigen::{spectrum_bounds, EigenSystem};
use crate::error::{Error, Result};

pub const DEFAULT_RESOLUTION: usize = 30;

/// Band-pass generating kernel `g`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Kernel {
    /// `g(x) = x exp(-x)`.
    #[default]
    MexicanHat,
    /// `g(x) = x^2 exp(-x^2)`.
    GaussianDerivative,
}

impl Kernel {
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Kernel::MexicanHat => mexican_hat(x),
            Kernel::GaussianDerivative => x * x * (-x * x).exp(),
        }
    }

    /// `max_x g(x)`; both kernels peak at `x = 1` with value `1/e`.
    pub fn max_value(&self) -> f64 {
        (-1f64).exp()
    }

    pub fn id(&self) -> &'static str {
        match self {
            Kernel::MexicanHat => "mexican-hat",
            Kernel::GaussianDerivative => "gaussian-derivative",
        }
    }
}

impl std::str::FromStr for Kernel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mexican-hat" | "mexican_hat" => Ok(Kernel::MexicanHat),
            "gaussian-derivative" | "gaussian_derivative" => Ok(Kernel::GaussianDerivative),
            other => Err(Error::InvalidParam(format!("unknown kernel {other:?}"))),
        }
    }
}

/// `g(x) = x e^-x`, peaking at `x = 1` with value `1/e`.
pub fn mexican_hat(x: f64) -> f64 {
    x * (-x).exp()
}

pub fn signature_length(resolution: usize) -> usize {
    (resolution + 1) * (resolution + 2) / 2 - 1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelConfig {
    pub resolution: usize,
    pub kernel: Kernel,
    /// Scaling function height, `h(0)`.
    pub gamma: f64,
    pub lambda_min: f64,
    pub lambda_max: f64,
    /// Multiply coefficients by `a_j^2`. Disable only for sensitivity studies.
    pub area_factor: bool,
}

impl KernelConfig {
    pub fn new(resolution: usize, lambda_min: f64, lambda_max: f64) -> Result<Self> {
        if resolution == 0 {
            return Err(Error::InvalidParam("resolution must be at least 1".into()));
        }
        if !(lambda_min > 0.0 && lambda_min < lambda_max && lambda_max.is_finite()) {
            return Err(Error::InvalidParam(format!(
                "need 0 < lambda_min < lambda_max, got {lambda_min} and {lambda_max}"
            )));
        }
        let kernel = Kernel::default();
        Ok(KernelConfig {
            resolution,
            kernel,
            gamma: kernel.max_value(),
            lambda_min,
            lambda_max,
            area_factor: true,
        })
    }

    /// Bounds taken from the eigensystem: `lambda_max = lambda_k`, `lambda_min = lambda_max / 20`.
    pub fn from_eigensystem(es: &EigenSystem, resolution: usize) -> Result<Self> {
        let (lo, hi) = spectrum_bounds(es)?;
        KernelConfig::new(resolution, lo, hi)
    }

    pub fn with_kernel(mut self, kernel: Kernel) -> Self {
        self.kernel = kernel;
        self.gamma = kernel.max_value();
        self
    }

    pub fn with_area_factor(mut self, on: bool) -> Self {
        self.area_factor = on;
        self
    }

    pub fn signature_length(&self) -> usize {
        signature_length(self.resolution)
    }

    /// Identifier for cache keys and reports.
    pub fn kernel_id(&self) -> String {
        if self.area_factor {
            self.kernel.id().to_string()
        } else {
            format!("{}-noarea", self.kernel.id())
        }
    }
}

/// `h(x) = gamma exp(-(x / (0.6 lambda_min))^4)`.
pub fn scaling_kernel(x: f64, cfg: &KernelConfig) -> f64 {
    cfg.gamma * (-(x / (0.6 * cfg.lambda_min)).powi(4)).exp()
}

/// `levels` scales log-equispaced from `2 / lambda_min` down to `2 / lambda_max`.
pub fn wavelet_scales(levels: usize, lambda_min: f64, lambda_max: f64) -> Result<Vec<f64>> {
    if levels == 0 {
        return Err(Error::InvalidParam("need at least one scale".into()));
    }
    if !(lambda_min > 0.0 && lambda_min < lambda_max) {
        return Err(Error::InvalidParam(format!(
            "need 0 < lambda_min < lambda_max, got {lambda_min} and {lambda_max}"
        )));
    }
    let (hi, lo) = ((2.0 / lambda_min).ln(), (2.0 / lambda_max).ln());
    if levels == 1 {
        return Ok(vec![2.0 / lambda_min]);
    }
    Ok((0..levels)
        .map(|k| (hi + k as f64 / (levels - 1) as f64 * (lo - hi)).exp())
        .collect())
}

/// Spectral filter values, one row per signature entry and one column per eigenvalue.
fn filter_bank(eigenvalues: &[f64], cfg: &KernelConfig) -> Result<DMatrix<f64>> {
    let p = cfg.signature_length();
    let mut bank = DMatrix::zeros(p, eigenvalues.len());
    let mut row = 0;
    for level in 1..=cfg.resolution {
        for t in wavelet_scales(level, cfg.lambda_min, cfg.lambda_max)? {
            for (l, lam) in eigenvalues.iter().enumerate() {
                bank[(row, l)] = cfg.kernel.eval(t * lam.max(0.0));
            }
            row += 1;
        }
        for (l, lam) in eigenvalues.iter().enumerate() {
            bank[(row, l)] = scaling_kernel(lam.max(0.0), cfg);
        }
        row += 1;
    }
    debug_assert_eq!(row, p);
    Ok(bank)
}

fn check(es: &EigenSystem, cfg: &KernelConfig) -> Result<()> {
    if es.k() < 2 {
        return Err(Error::InvalidParam(format!(
            "signatures need at least 2 eigenpairs, got {}",
            es.k()
        )));
    }
    KernelConfig::new(cfg.resolution, cfg.lambda_min, cfg.lambda_max).map(|_| ())
}

fn column(es: &EigenSystem, cfg: &KernelConfig, bank: &DMatrix<f64>, j: usize) -> Vec<f64> {
    let a = es.mass()[j];
    let weight = if cfg.area_factor { a * a } else { 1.0 };
    let phi = es.eigenfunctions();
    (0..bank.nrows())
        .map(|r| {
            (0..es.k())
                .map(|l| weight * bank[(r, l)] * phi[(j, l)] * phi[(j, l)])
                .sum()
        })
        .collect()
}

/// Signature of a single vertex, in level-major order.
pub fn vertex_signature(es: &EigenSystem, cfg: &KernelConfig, j: usize) -> Result<Vec<f64>> {
    check(es, cfg)?;
    if j >= es.vertex_count() {
        return Err(Error::InvalidParam(format!(
            "vertex {j} out of range for {} vertices",
            es.vertex_count()
        )));
    }
    let bank = filter_bank(es.eigenvalues(), cfg)?;
    Ok(column(es, cfg, &bank, j))
}

/// `p x m` matrix whose column `j` is the signature of vertex `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct SignatureMatrix {
    resolution: usize,
    s: DMatrix<f64>,
}

impl SignatureMatrix {
    pub fn from_matrix(resolution: usize, s: DMatrix<f64>) -> Result<Self> {
        if resolution == 0 {
            return Err(Error::InvalidParam("resolution must be at least 1".into()));
        }
        let p = signature_length(resolution);
        if s.nrows() != p {
            return Err(Error::DimensionMismatch {
                expected: p,
                found: s.nrows(),
            });
        }
        Ok(SignatureMatrix { resolution, s })
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.s
    }

    pub fn len(&self) -> usize {
        self.s.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.s.is_empty()
    }

    pub fn vertex_count(&self) -> usize {
        self.s.ncols()
    }

    /// `p` rows by `m` columns, twelve significant digits.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        for row in self.s.row_iter() {
            let line: Vec<String> = row.iter().map(|v| format!("{v:.11e}")).collect();
            writeln!(out, "{}", line.join(","))?;
        }
        Ok(())
    }
}

pub fn signature_matrix(es: &EigenSystem, cfg: &KernelConfig) -> Result<SignatureMatrix> {
    check(es, cfg)?;
    let bank = filter_bank(es.eigenvalues(), cfg)?;
    let cols: Vec<Vec<f64>> = (0..es.vertex_count())
        .into_par_iter()
        .map(|j| column(es, cfg, &bank, j))
        .collect();
    let p = bank.nrows();
    let s = DMatrix::from_fn(p, cols.len(), |r, c| cols[c][r]);
    SignatureMatrix::from_matrix(cfg.resolution, s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::E;

    #[test]
    fn mexican_hat_values() {
        assert_eq!(mexican_hat(0.0), 0.0);
        assert!((mexican_hat(1.0) - 1.0 / E).abs() < 1e-15);
        // 5 e^-5 evaluated independently.
        assert!((mexican_hat(5.0) - 0.033_689_734_995_427_34).abs() < 1e-15);
    }

    #[test]
    fn scaling_kernel_values() {
        let cfg = KernelConfig::new(1, 1.0, 20.0).unwrap();
        assert_eq!(scaling_kernel(0.0, &cfg), 1.0 / E);
        assert!((scaling_kernel(0.6, &cfg) - (-2f64).exp()).abs() < 1e-15);
        let expected = (-1f64).exp() * (-16f64).exp();
        assert!((scaling_kernel(1.2, &cfg) - expected).abs() < 1e-20);
        assert!((expected - 4.14e-8).abs() < 1e-10);
    }

    #[test]
    fn gamma_matches_kernel_peak() {
        for k in [Kernel::MexicanHat, Kernel::GaussianDerivative] {
            let peak = (0..100_000).map(|i| k.eval(i as f64 * 1e-4)).fold(0.0, f64::max);
            assert!((peak - k.max_value()).abs() < 1e-9);
        }
    }

    #[test]
    fn scales() {
        assert_eq!(wavelet_scales(1, 1.0, 20.0).unwrap(), vec![2.0]);
        let two = wavelet_scales(2, 1.0, 20.0).unwrap();
        assert!((two[0] - 2.0).abs() < 1e-15 && (two[1] - 0.1).abs() < 1e-15);
        let three = wavelet_scales(3, 1.0, 20.0).unwrap();
        assert!((three[1] - (2.0f64 * 0.1).sqrt()).abs() < 1e-14);
        assert!((three[1] - 0.447_213_595_5).abs() < 1e-9);
        for l in 2..40 {
            let s = wavelet_scales(l, 0.3, 17.0).unwrap();
            assert!(s.windows(2).all(|w| w[0] > w[1]));
        }
        assert!(matches!(wavelet_scales(3, 2.0, 2.0), Err(Error::InvalidParam(_))));
    }

    #[test]
    fn lengths() {
        let expected = [(1, 2), (2, 5), (5, 20), (30, 495)];
        for (r, p) in expected {
            assert_eq!(signature_length(r), p);
        }
        for r in 1..=30 {
            let cfg = KernelConfig::new(r, 1.0, 20.0).unwrap();
            assert_eq!(filter_bank(&[0.0, 3.0], &cfg).unwrap().nrows(), (r + 1) * (r + 2) / 2 - 1);
        }
    }

    #[test]
    fn toy_system_by_hand() {
        // Three unit-area vertices, lambda = (0, 4).
        let c = 1.0 / 3f64.sqrt();
        let s = 1.0 / 2f64.sqrt();
        let phi = DMatrix::from_row_slice(3, 2, &[c, s, c, -s, c, 0.0]);
        let es = EigenSystem::from_parts(vec![0.0, 4.0], phi, vec![1.0; 3]).unwrap();
        let cfg = KernelConfig::new(1, 0.2, 4.0).unwrap();
        let t1 = 2.0 / 0.2;
        let h = |x: f64| (-1f64).exp() * (-(x / 0.12f64).powi(4)).exp();
        let g = |x: f64| x * (-x).exp();
        let sig = vertex_signature(&es, &cfg, 0).unwrap();
        let w = g(0.0) * c * c + g(t1 * 4.0) * s * s;
        let sc = h(0.0) * c * c + h(4.0) * s * s;
        assert_eq!(sig.len(), 2);
        assert!((sig[0] - w).abs() < 1e-12);
        assert!((sig[1] - sc).abs() < 1e-12);
    }

    #[test]
    fn columns_match_vertex_signatures() {
        let phi = DMatrix::from_fn(5, 4, |i, j| ((i * 7 + j * 3) as f64).sin());
        let es = EigenSystem::from_parts(vec![0.0, 1.5, 2.0, 7.0], phi, vec![0.5, 1.0, 2.0, 0.7, 1.1]).unwrap();
        let cfg = KernelConfig::from_eigensystem(&es, 5).unwrap();
        let s = signature_matrix(&es, &cfg).unwrap();
        assert_eq!(s.len(), 20);
        for j in 0..5 {
            let v = vertex_signature(&es, &cfg, j).unwrap();
            assert_eq!(s.matrix().column(j).iter().copied().collect::<Vec<_>>(), v);
            assert!(v.iter().all(|x| x.is_finite() && *x >= 0.0));
        }
    }

    #[test]
    fn area_factor_flag() {
        let phi = DMatrix::from_fn(3, 2, |i, j| 0.3 + (i + j) as f64 * 0.1);
        let es = EigenSystem::from_parts(vec![0.0, 2.0], phi, vec![2.0, 1.0, 1.0]).unwrap();
        let cfg = KernelConfig::from_eigensystem(&es, 2).unwrap();
        let with = vertex_signature(&es, &cfg, 0).unwrap();
        let without = vertex_signature(&es, &cfg.clone().with_area_factor(false), 0).unwrap();
        for (a, b) in with.iter().zip(&without) {
            assert!((a - 4.0 * b).abs() < 1e-14);
        }
        assert_eq!(cfg.with_area_factor(false).kernel_id(), "mexican-hat-noarea");
    }

    #[test]
    fn needs_two_eigenpairs() {
        let es = EigenSystem::from_parts(vec![0.0], DMatrix::from_element(3, 1, 0.5), vec![1.0; 3]).unwrap();
        let cfg = KernelConfig::new(1, 1.0, 20.0).unwrap();
        assert!(vertex_signature(&es, &cfg, 0).is_err());
    }
}
