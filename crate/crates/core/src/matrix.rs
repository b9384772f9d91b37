//! Dense lower-triangular matrices.
//!
//! Everything the offline analysis touches (`A`, `B`, `L̂`, `R̂`, their
//! inverses) is lower-triangular and square, so a single row-major `n×n`
//! type covers it. Storage is 0-indexed.

use std::fmt;
use std::ops::Index;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::kernels::ToeplitzSpec;

/// Iteration cap for [`LowerTriangularMatrix::operator_norm`].
pub const POWER_ITERATION_CAP: usize = 100_000;

/// Default relative tolerance for [`LowerTriangularMatrix::operator_norm`].
pub const DEFAULT_OPNORM_TOL: f64 = 1e-8;

const POWER_ITERATION_SEED: u64 = 0x5eed_0fb1;

#[derive(Clone, PartialEq)]
pub struct LowerTriangularMatrix {
    n: usize,
    data: Vec<f64>,
}

impl fmt::Debug for LowerTriangularMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut list = f.debug_list();
        for i in 0..self.n {
            list.entry(&&self.row(i)[..=i]);
        }
        list.finish()
    }
}

impl Index<(usize, usize)> for LowerTriangularMatrix {
    type Output = f64;

    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        assert!(i < self.n && j < self.n, "index ({i}, {j}) out of range");
        &self.data[i * self.n + j]
    }
}

impl LowerTriangularMatrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_fn(n, |i, j| if i == j { 1.0 } else { 0.0 })
    }

    /// `f` is queried for `j ≤ i` only.
    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            for j in 0..=i {
                m.data[i * n + j] = f(i, j);
            }
        }
        m
    }

    /// Builds from full rows; entries above the diagonal must be zero.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let mut m = Self::zeros(n);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    actual: row.len(),
                });
            }
            if row[i + 1..].iter().any(|&v| v != 0.0) {
                return Err(Error::contract(format!(
                    "row {i} has entries above the diagonal"
                )));
            }
            m.data[i * n..(i + 1) * n].copy_from_slice(row);
        }
        Ok(m)
    }

    /// Lower-triangular Toeplitz matrix with `entries[i][j] = coeff(i − j)`.
    pub fn build_toeplitz(n: usize, coeff: impl Fn(usize) -> f64) -> Self {
        Self::from_fn(n, |i, j| coeff(i - j))
    }

    pub fn from_toeplitz_coeffs(coeffs: &[f64]) -> Self {
        Self::build_toeplitz(coeffs.len(), |k| coeffs[k])
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Full row `i` (length `n`, zero past the diagonal).
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        assert!(
            j <= i && i < self.n,
            "({i}, {j}) is not in the lower triangle"
        );
        self.data[i * self.n + j] = value;
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.n).map(|i| self[(i, j)]).collect()
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if len == self.n {
            Ok(())
        } else {
            Err(Error::DimensionMismatch {
                expected: self.n,
                actual: len,
            })
        }
    }

    pub fn matvec(&self, z: &[f64]) -> Result<Vec<f64>> {
        self.check_len(z.len())?;
        Ok((0..self.n)
            .map(|i| dot(&self.row(i)[..=i], &z[..=i]))
            .collect())
    }

    /// `Mᵀ y`.
    pub fn transpose_matvec(&self, y: &[f64]) -> Result<Vec<f64>> {
        self.check_len(y.len())?;
        let mut out = vec![0.0; self.n];
        for (i, &yi) in y.iter().enumerate() {
            if yi == 0.0 {
                continue;
            }
            for (o, &m) in out[..=i].iter_mut().zip(&self.row(i)[..=i]) {
                *o += m * yi;
            }
        }
        Ok(out)
    }

    pub fn matmul(&self, other: &Self) -> Result<Self> {
        self.check_len(other.n)?;
        let n = self.n;
        let mut out = Self::zeros(n);
        for i in 0..n {
            let (head, _) = out.data.split_at_mut((i + 1) * n);
            let out_row = &mut head[i * n..];
            for k in 0..=i {
                let m = self.data[i * n + k];
                if m == 0.0 {
                    continue;
                }
                for (o, &v) in out_row[..=k].iter_mut().zip(&other.row(k)[..=k]) {
                    *o += m * v;
                }
            }
        }
        Ok(out)
    }

    /// Solves `self · X = y` for lower-triangular `X`.
    ///
    /// Works column by column: column `j` of `X` only depends on rows `j..n`,
    /// and each step is a dot product of a contiguous row slice of `self`
    /// with the partially solved column.
    pub fn forward_substitute(&self, y: &Self) -> Result<Self> {
        self.check_len(y.n)?;
        let n = self.n;
        if let Some(row) = (0..n).find(|&i| self[(i, i)] == 0.0) {
            return Err(Error::Singular { row });
        }
        let mut out = Self::zeros(n);
        let mut col = vec![0.0; n];
        for j in 0..n {
            for i in j..n {
                let acc = dot(&self.row(i)[j..i], &col[j..i]);
                col[i] = (y.data[i * n + j] - acc) / self.data[i * n + i];
            }
            for (i, &v) in col.iter().enumerate().skip(j) {
                out.data[i * n + j] = v;
            }
        }
        Ok(out)
    }

    pub fn inverse(&self) -> Result<Self> {
        self.forward_substitute(&Self::identity(self.n))
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Squared ℓ2 norm of every row.
    pub fn row_norms_sq(&self) -> Vec<f64> {
        (0..self.n)
            .map(|i| self.row(i)[..=i].iter().map(|v| v * v).sum())
            .collect()
    }

    /// Squared ℓ2 norm of every column.
    pub fn col_norms_sq(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        for i in 0..self.n {
            for (o, v) in out[..=i].iter_mut().zip(&self.row(i)[..=i]) {
                *o += v * v;
            }
        }
        out
    }

    /// `‖M‖_{2→∞}`, the largest row ℓ2 norm.
    pub fn row_max_norm(&self) -> f64 {
        self.row_norms_sq().into_iter().fold(0.0, f64::max).sqrt()
    }

    /// `‖M‖_{1→2}`, the largest column ℓ2 norm. For a right factor this is the
    /// sensitivity.
    pub fn col_max_norm(&self) -> f64 {
        self.col_norms_sq().into_iter().fold(0.0, f64::max).sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn max_abs_diff(&self, other: &Self) -> Result<f64> {
        self.check_len(other.n)?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs())))
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.check_len(other.n)?;
        Ok(Self {
            n: self.n,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a - b)
                .collect(),
        })
    }

    /// Largest singular value by power iteration on `MᵀM`, stopping once the
    /// estimate changes by less than `tol` relative between iterations.
    pub fn operator_norm(&self, tol: f64) -> Result<f64> {
        if tol.is_nan() || tol <= 0.0 {
            return Err(Error::param("tolerance must be positive"));
        }
        let n = self.n;
        if n == 0 || self.max_abs() == 0.0 {
            return Ok(0.0);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(POWER_ITERATION_SEED);
        let mut v: Vec<f64> = (0..n).map(|_| rng.random_range(0.5..1.5)).collect();
        normalize(&mut v);
        let mut sigma = 0.0;
        for _ in 0..POWER_ITERATION_CAP {
            let mv = self.matvec(&v)?;
            let next_sigma = norm(&mv);
            let mut w = self.transpose_matvec(&mv)?;
            if norm(&w) == 0.0 {
                return Ok(next_sigma);
            }
            normalize(&mut w);
            v = w;
            if (next_sigma - sigma).abs() <= tol * next_sigma {
                return Ok(next_sigma);
            }
            sigma = next_sigma;
        }
        Err(Error::NoConvergence {
            iterations: POWER_ITERATION_CAP,
        })
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    // Four independent accumulators so the loop vectorizes.
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        let base = c * 4;
        for lane in 0..4 {
            acc[lane] += a[base + lane] * b[base + lane];
        }
    }
    let mut tail = 0.0;
    for k in chunks * 4..a.len() {
        tail += a[k] * b[k];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn normalize(v: &mut [f64]) {
    let s = norm(v);
    if s > 0.0 {
        v.iter_mut().for_each(|x| *x /= s);
    }
}

/// `Σ |q_i|`, an upper bound on the operator norm of the lower-triangular
/// Toeplitz matrix with subdiagonals `q`.
pub fn toeplitz_opnorm_bound(coeffs: &[f64]) -> f64 {
    coeffs.iter().map(|q| q.abs()).sum()
}

/// Closed-form bound on `‖B_{α,β}‖₂`: `(2√n − 1)/(1 − β)` when `α = 1`,
/// otherwise `1/((1 − β/α)(1 − α))`.
pub fn sqrt_opnorm_closed_form(spec: &ToeplitzSpec) -> f64 {
    let (alpha, beta) = (spec.alpha(), spec.beta());
    if alpha == 1.0 {
        (2.0 * (spec.n() as f64).sqrt() - 1.0) / (1.0 - beta)
    } else {
        1.0 / ((1.0 - beta / alpha) * (1.0 - alpha))
    }
}

/// Upper bound `κ̄ ≥ κ(B_{α,β})`: the smaller of the two bounds on `‖B‖₂`
/// times `Σ|s_k| ≥ ‖B⁻¹‖₂`.
pub fn condition_upper_bound(spec: &ToeplitzSpec) -> f64 {
    let forward = toeplitz_opnorm_bound(spec.sqrt_coeffs()).min(sqrt_opnorm_closed_form(spec));
    let inverse = toeplitz_opnorm_bound(spec.inv_sqrt_coeffs());
    (forward * inverse).max(1.0)
}
