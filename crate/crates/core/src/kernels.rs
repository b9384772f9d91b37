//! Subdiagonal kernels of the counting matrix family.
//!
//! `A_{α,β}` is the lower-triangular Toeplitz matrix with subdiagonals
//! `a_k = (α^{k+1} − β^{k+1})/(α − β)`. Its square root `B_{α,β}` is again
//! lower-triangular Toeplitz, with subdiagonals
//! `b_j = Σ_{i≤j} α^{j−i} γ(j−i) γ(i) β^i` where `γ(k) = C(2k,k)/4^k`, and the
//! inverse `B_{α,β}⁻¹` has subdiagonals `s_k = Σ_{i≤k} β^i α^{k−i} γ′(i) γ′(k−i)`.

use std::sync::OnceLock;

use crate::binning::RowSource;
use crate::error::{Error, Result};

/// `γ(k) = C(2k, k) / 4^k`, via `γ(k) = γ(k−1)·(2k−1)/(2k)`.
pub fn gamma(k: usize) -> f64 {
    let mut g = 1.0;
    for m in 1..=k {
        g *= (2 * m - 1) as f64 / (2 * m) as f64;
    }
    g
}

/// `γ′(0) = 1`, `γ′(k) = γ(k) − γ(k−1) = −γ(k)/(2k−1)` for `k ≥ 1`.
pub fn gamma_prime(k: usize) -> f64 {
    if k == 0 {
        1.0
    } else {
        -gamma(k) / (2 * k - 1) as f64
    }
}

/// `γ(0), …, γ(len−1)`.
pub fn gamma_table(len: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(len);
    let mut g = 1.0;
    for k in 0..len {
        if k > 0 {
            g *= (2 * k - 1) as f64 / (2 * k) as f64;
        }
        out.push(g);
    }
    out
}

/// `γ′(0), …, γ′(len−1)`.
pub fn gamma_prime_table(len: usize) -> Vec<f64> {
    gamma_table(len)
        .into_iter()
        .enumerate()
        .map(|(k, g)| if k == 0 { 1.0 } else { -g / (2 * k - 1) as f64 })
        .collect()
}

/// Parameters `(α, β, n)` of the counting matrix `A_{α,β} ∈ R^{n×n}`.
///
/// Coefficient prefixes are computed on first use and cached; the cache is
/// thread-safe so a spec can be shared across workers.
#[derive(Debug, Clone)]
pub struct ToeplitzSpec {
    alpha: f64,
    beta: f64,
    n: usize,
    counting: OnceLock<Vec<f64>>,
    sqrt: OnceLock<Vec<f64>>,
    inv_sqrt: OnceLock<Vec<f64>>,
}

impl PartialEq for ToeplitzSpec {
    fn eq(&self, other: &Self) -> bool {
        self.alpha == other.alpha && self.beta == other.beta && self.n == other.n
    }
}

impl ToeplitzSpec {
    /// Requires `0 ≤ β < α ≤ 1` and `n ≥ 1`.
    pub fn new(alpha: f64, beta: f64, n: usize) -> Result<Self> {
        if !(alpha.is_finite() && beta.is_finite()) {
            return Err(Error::param("alpha and beta must be finite"));
        }
        if !(0.0 <= beta && beta < alpha && alpha <= 1.0) {
            return Err(Error::param(format!(
                "require 0 <= beta < alpha <= 1 (alpha > beta strictly), got alpha={alpha}, beta={beta}"
            )));
        }
        if n == 0 {
            return Err(Error::param("n must be at least 1"));
        }
        Ok(Self {
            alpha,
            beta,
            n,
            counting: OnceLock::new(),
            sqrt: OnceLock::new(),
            inv_sqrt: OnceLock::new(),
        })
    }

    /// Plain counting: `α = 1`, `β = 0`, whose square root is the Bennett matrix.
    pub fn bennett(n: usize) -> Result<Self> {
        Self::new(1.0, 0.0, n)
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn n(&self) -> usize {
        self.n
    }

    fn check_index(&self, k: usize) -> Result<()> {
        if k >= self.n {
            Err(Error::IndexOutOfRange {
                index: k,
                dim: self.n,
            })
        } else {
            Ok(())
        }
    }

    /// `a_k`, the k-th subdiagonal of `A_{α,β}`.
    pub fn counting_coeff(&self, k: usize) -> Result<f64> {
        self.check_index(k)?;
        Ok(self.counting_coeffs()[k])
    }

    /// `b_j`, the j-th subdiagonal of `B_{α,β}`.
    pub fn sqrt_coeff(&self, j: usize) -> Result<f64> {
        self.check_index(j)?;
        Ok(self.sqrt_coeffs()[j])
    }

    /// `s_k`, the k-th subdiagonal of `B_{α,β}⁻¹`.
    pub fn inv_sqrt_coeff(&self, k: usize) -> Result<f64> {
        self.check_index(k)?;
        Ok(self.inv_sqrt_coeffs()[k])
    }

    /// `a_0 … a_{n−1}`. Uses `a_k = α·a_{k−1} + β^k`, which equals the closed
    /// form without the cancellation in `α^{k+1} − β^{k+1}`.
    pub fn counting_coeffs(&self) -> &[f64] {
        self.counting.get_or_init(|| {
            let mut out = Vec::with_capacity(self.n);
            let mut a = 0.0;
            let mut beta_pow = 1.0;
            for _ in 0..self.n {
                a = self.alpha * a + beta_pow;
                beta_pow *= self.beta;
                out.push(a);
            }
            out
        })
    }

    /// `b_0 … b_{n−1}`.
    pub fn sqrt_coeffs(&self) -> &[f64] {
        self.sqrt.get_or_init(|| {
            let g = gamma_table(self.n);
            let alpha_part = weighted(&g, self.alpha);
            if self.beta == 0.0 {
                return alpha_part;
            }
            convolve_prefix(&alpha_part, &weighted(&g, self.beta))
        })
    }

    /// `s_0 … s_{n−1}`.
    pub fn inv_sqrt_coeffs(&self) -> &[f64] {
        self.inv_sqrt.get_or_init(|| {
            let gp = gamma_prime_table(self.n);
            let alpha_part = weighted(&gp, self.alpha);
            if self.beta == 0.0 {
                return alpha_part;
            }
            convolve_prefix(&alpha_part, &weighted(&gp, self.beta))
        })
    }

    /// Row accessor over `B_{α,β}` for the binning scan and streaming evaluator.
    pub fn sqrt_rows(&self) -> ToeplitzRows {
        ToeplitzRows::new(self.sqrt_coeffs().to_vec())
    }
}

/// `x_k · w^k`.
fn weighted(x: &[f64], w: f64) -> Vec<f64> {
    let mut p = 1.0;
    x.iter()
        .map(|&v| {
            let out = v * p;
            p *= w;
            out
        })
        .collect()
}

/// First `u.len()` terms of the discrete convolution `u * v`.
fn convolve_prefix(u: &[f64], v: &[f64]) -> Vec<f64> {
    let n = u.len().min(v.len());
    (0..n)
        .map(|j| (0..=j).map(|i| u[j - i] * v[i]).sum())
        .collect()
}

/// Constant-time row access into a lower-triangular Toeplitz matrix given by
/// its subdiagonals: `entry(i, j) = coeffs[i − j]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ToeplitzRows {
    coeffs: Vec<f64>,
}

impl ToeplitzRows {
    pub fn new(coeffs: Vec<f64>) -> Self {
        Self { coeffs }
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }
}

impl RowSource for ToeplitzRows {
    fn dim(&self) -> usize {
        self.coeffs.len()
    }

    fn entry(&self, i: usize, j: usize) -> f64 {
        debug_assert!(1 <= j && j <= i && i <= self.coeffs.len());
        self.coeffs[i - j]
    }
}
