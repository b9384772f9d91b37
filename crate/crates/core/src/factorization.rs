//! Factorizations `A = L·R` and their exact error.
//!
//! For the Gaussian factorization mechanism with left factor `L` and right
//! factor `R`, the per-step output variance is `C_{ε,δ}·‖R‖²_{1→2}·‖L_{t,·}‖²`.
//! Reports here use `C_{ε,δ} = 1`; every comparison is a ratio, so the
//! constant cancels.

use serde::{Deserialize, Serialize};

use crate::binned::BinnedMatrixView;
use crate::binning::{build_binning, Binning, BinningParams};
use crate::error::{Error, Result};
use crate::kernels::{ToeplitzRows, ToeplitzSpec};
use crate::matrix::{condition_upper_bound, LowerTriangularMatrix, DEFAULT_OPNORM_TOL};

/// Solves `L̂·R̂ = product` for the right factor.
pub fn right_factor(
    lhat: &LowerTriangularMatrix,
    product: &LowerTriangularMatrix,
) -> Result<LowerTriangularMatrix> {
    lhat.forward_substitute(product)
}

/// `‖L‖_F² · ‖R‖²_{1→2} / n`.
pub fn mean_se(l: &LowerTriangularMatrix, r: &LowerTriangularMatrix) -> Result<f64> {
    check_same(l, r)?;
    let sens = r.col_max_norm();
    Ok(l.frobenius_norm().powi(2) * sens * sens / l.n() as f64)
}

/// `‖L‖²_{2→∞} · ‖R‖²_{1→2}`.
pub fn max_se(l: &LowerTriangularMatrix, r: &LowerTriangularMatrix) -> Result<f64> {
    check_same(l, r)?;
    let sens = r.col_max_norm();
    Ok(l.row_max_norm().powi(2) * sens * sens)
}

fn check_same(l: &LowerTriangularMatrix, r: &LowerTriangularMatrix) -> Result<()> {
    if l.n() != r.n() {
        return Err(Error::DimensionMismatch {
            expected: l.n(),
            actual: r.n(),
        });
    }
    Ok(())
}

/// `(MeanSE(candidate)/MeanSE(baseline), MaxSE(candidate)/MaxSE(baseline))`.
pub fn error_ratios(
    candidate: (&LowerTriangularMatrix, &LowerTriangularMatrix),
    baseline: (&LowerTriangularMatrix, &LowerTriangularMatrix),
) -> Result<(f64, f64)> {
    if candidate.0.n() != baseline.0.n() {
        return Err(Error::DimensionMismatch {
            expected: baseline.0.n(),
            actual: candidate.0.n(),
        });
    }
    let base_mean = mean_se(baseline.0, baseline.1)?;
    let base_max = max_se(baseline.0, baseline.1)?;
    if base_mean == 0.0 || base_max == 0.0 {
        return Err(Error::param("baseline factorization has zero error"));
    }
    Ok((
        mean_se(candidate.0, candidate.1)? / base_mean,
        max_se(candidate.0, candidate.1)? / base_max,
    ))
}

/// True iff `|L̂_{i,j} − L_{i,j}| ≤ η·|L_{i,j}| + μ` everywhere.
pub fn verify_perturbation(
    l: &LowerTriangularMatrix,
    lhat: &LowerTriangularMatrix,
    eta: f64,
    mu: f64,
) -> bool {
    perturbation_slack(l, lhat, eta, mu).is_some_and(|slack| slack >= 0.0)
}

/// Smallest `η·|L_{i,j}| + μ − |L̂_{i,j} − L_{i,j}|` over all entries, or
/// `None` on a dimension mismatch.
pub fn perturbation_slack(
    l: &LowerTriangularMatrix,
    lhat: &LowerTriangularMatrix,
    eta: f64,
    mu: f64,
) -> Option<f64> {
    if l.n() != lhat.n() {
        return None;
    }
    let n = l.n();
    let mut slack = f64::INFINITY;
    for i in 0..n {
        for (a, b) in l.row(i).iter().zip(lhat.row(i)) {
            slack = slack.min(eta * a.abs() + mu - (b - a).abs());
        }
    }
    Some(slack)
}

/// Binning parameters that guarantee both error ratios are at most `1 + ξ`:
/// `c = exp(−ξ/(576κ))`, `τ = ξ‖L‖₂/(144nκ)`.
///
/// `kappa_bound` may be any upper bound on `κ(L)` and `opnorm` any lower
/// bound on `‖L‖₂`; both only shrink `c` and `τ`.
pub fn theorem_params(xi: f64, kappa_bound: f64, opnorm: f64, n: usize) -> Result<BinningParams> {
    if !(xi > 0.0 && xi <= 24.0) {
        return Err(Error::param(format!("xi must lie in (0, 24], got {xi}")));
    }
    if kappa_bound.is_nan() || kappa_bound < 1.0 {
        return Err(Error::param(format!(
            "kappa bound must be >= 1, got {kappa_bound}"
        )));
    }
    if opnorm.is_nan() || opnorm <= 0.0 || n == 0 {
        return Err(Error::param("operator norm and n must be positive"));
    }
    let c = (-xi / (576.0 * kappa_bound)).exp();
    let tau = xi * opnorm / (144.0 * n as f64 * kappa_bound);
    BinningParams::new(c, tau)
}

/// How `κ(B_{α,β})` and `‖B_{α,β}‖₂` are obtained for [`theorem_params`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum KappaMode {
    /// Analytic upper bound on κ and the largest row/column norm as a lower
    /// bound on the operator norm. Cheap.
    #[default]
    Bound,
    /// Power iteration on `B` and `B⁻¹`.
    Exact,
}

/// The binary-tree (Fenwick) factorization of the all-ones counting matrix.
///
/// Row `t` of `R` is the indicator of the dyadic block `[t − lowbit(t) + 1, t]`;
/// row `t` of `L` selects the blocks `t, t − lowbit(t), …` whose union is
/// `[1, t]`. At most `⌈log₂(t+1)⌉` blocks are live at once.
pub fn binary_mechanism_factorization(n: usize) -> (LowerTriangularMatrix, LowerTriangularMatrix) {
    let mut l = LowerTriangularMatrix::zeros(n);
    let mut r = LowerTriangularMatrix::zeros(n);
    for t in 1..=n {
        let low = t & t.wrapping_neg();
        for j in (t - low + 1)..=t {
            r.set(t - 1, j - 1, 1.0);
        }
        let mut node = t;
        while node > 0 {
            l.set(t - 1, node - 1, 1.0);
            node -= node & node.wrapping_neg();
        }
    }
    (l, r)
}

/// Dyadic levels the binary mechanism keeps live: `⌊log₂ n⌋ + 1`.
pub fn binary_mechanism_space(n: usize) -> usize {
    if n == 0 {
        0
    } else {
        (usize::BITS - n.leading_zeros()) as usize
    }
}

/// `(MeanSE, MaxSE)` from the left factor and the sensitivity.
fn errors_of(left: &LowerTriangularMatrix, sensitivity: f64) -> (f64, f64) {
    let s2 = sensitivity * sensitivity;
    (
        left.frobenius_norm().powi(2) * s2 / left.n() as f64,
        left.row_max_norm().powi(2) * s2,
    )
}

/// Error summary of one factorization of `A_{α,β}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorizationReport {
    pub n: usize,
    pub alpha: f64,
    pub beta: f64,
    pub c: Option<f64>,
    pub tau: Option<f64>,
    pub bin_size: usize,
    pub frobenius_l: f64,
    pub row_max_l: f64,
    pub sensitivity: f64,
    pub mean_se: f64,
    pub max_se: f64,
    pub mean_se_ratio: f64,
    pub max_se_ratio: f64,
}

/// The square-root factorization `A = B·B` of a spec together with its
/// error, reused as the baseline for every binned variant.
#[derive(Debug, Clone)]
pub struct SqrtFactorization {
    spec: ToeplitzSpec,
    sqrt: LowerTriangularMatrix,
    counting: LowerTriangularMatrix,
    mean_se: f64,
    max_se: f64,
}

/// A binned factorization `A = L̂·R̂`.
#[derive(Debug, Clone)]
pub struct BinnedFactorization {
    pub binning: Binning,
    pub left: LowerTriangularMatrix,
    pub right: LowerTriangularMatrix,
    pub report: FactorizationReport,
}

impl SqrtFactorization {
    pub fn new(spec: ToeplitzSpec) -> Result<Self> {
        let sqrt = LowerTriangularMatrix::from_toeplitz_coeffs(spec.sqrt_coeffs());
        let counting = LowerTriangularMatrix::from_toeplitz_coeffs(spec.counting_coeffs());
        let (mean, max) = errors_of(&sqrt, sqrt.col_max_norm());
        Ok(Self {
            spec,
            sqrt,
            counting,
            mean_se: mean,
            max_se: max,
        })
    }

    pub fn spec(&self) -> &ToeplitzSpec {
        &self.spec
    }

    /// `B_{α,β}`.
    pub fn sqrt(&self) -> &LowerTriangularMatrix {
        &self.sqrt
    }

    /// `A_{α,β}`.
    pub fn counting(&self) -> &LowerTriangularMatrix {
        &self.counting
    }

    pub fn rows(&self) -> ToeplitzRows {
        self.spec.sqrt_rows()
    }

    /// Report for the unbinned factorization itself (ratios 1).
    pub fn baseline_report(&self) -> FactorizationReport {
        self.report_for(None, self.spec.n(), &self.sqrt, self.sqrt.col_max_norm())
    }

    /// Report for an arbitrary factorization of `A_{α,β}` against this baseline.
    pub fn compare(
        &self,
        left: &LowerTriangularMatrix,
        right: &LowerTriangularMatrix,
        params: Option<&BinningParams>,
        bin_size: usize,
    ) -> Result<FactorizationReport> {
        check_same(left, &self.sqrt)?;
        check_same(right, &self.sqrt)?;
        Ok(self.report_for(params, bin_size, left, right.col_max_norm()))
    }

    fn report_for(
        &self,
        params: Option<&BinningParams>,
        bin_size: usize,
        left: &LowerTriangularMatrix,
        sensitivity: f64,
    ) -> FactorizationReport {
        let n = self.spec.n();
        let frobenius_l = left.frobenius_norm();
        let row_max_l = left.row_max_norm();
        let (mean, max) = errors_of(left, sensitivity);
        FactorizationReport {
            n,
            alpha: self.spec.alpha(),
            beta: self.spec.beta(),
            c: params.map(BinningParams::c),
            tau: params.map(BinningParams::tau),
            bin_size,
            frobenius_l,
            row_max_l,
            sensitivity,
            mean_se: mean,
            max_se: max,
            mean_se_ratio: mean / self.mean_se,
            max_se_ratio: max / self.max_se,
        }
    }

    /// Bins `B_{α,β}` with `params` and solves for the matching right factor.
    pub fn binned(&self, params: &BinningParams) -> Result<BinnedFactorization> {
        let rows = self.rows();
        let binning = build_binning(&rows, params);
        let view = BinnedMatrixView::new(&rows, binning)?;
        let left = view.materialize();
        let right = right_factor(&left, &self.counting)?;
        let report = self.compare(&left, &right, Some(params), view.space_complexity())?;
        Ok(BinnedFactorization {
            binning: view.binning().clone(),
            left,
            right,
            report,
        })
    }

    /// Parameters from [`theorem_params`] for this spec.
    pub fn theorem_params(&self, xi: f64, mode: KappaMode) -> Result<BinningParams> {
        let n = self.spec.n();
        let (kappa, opnorm) = match mode {
            KappaMode::Bound => (
                condition_upper_bound(&self.spec),
                self.sqrt.row_max_norm().max(self.sqrt.col_max_norm()),
            ),
            KappaMode::Exact => {
                let inv = LowerTriangularMatrix::from_toeplitz_coeffs(self.spec.inv_sqrt_coeffs());
                let forward = self.sqrt.operator_norm(DEFAULT_OPNORM_TOL)?;
                let backward = inv.operator_norm(DEFAULT_OPNORM_TOL)?;
                // Power iteration approaches σ_max from below; pad κ so it
                // stays an upper bound and shrink ‖B‖ so it stays a lower one.
                let pad = 1.0 + 1e-6;
                ((forward * backward * pad).max(1.0), forward / pad)
            }
        };
        theorem_params(xi, kappa, opnorm, n)
    }
}
