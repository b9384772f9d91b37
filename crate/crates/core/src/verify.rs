//! Runnable invariant suites.
//!
//! Each check reports whether it held and the measured margin, so the CLI can
//! print a table and integration tests can assert on the same code paths.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::binned::{BinnedMatrixView, StreamingEvaluator};
use crate::binning::{
    build_binning_with, verify_binning, Binning, BinningParams, MergeTrigger, Partition, RowSource,
};
use crate::error::{Error, Result};
use crate::factorization::{perturbation_slack, KappaMode, SqrtFactorization};
use crate::kernels::{gamma_prime_table, gamma_table, ToeplitzRows, ToeplitzSpec};
use crate::matrix::{LowerTriangularMatrix, DEFAULT_OPNORM_TOL};
use crate::mechanism::{run_private_counter, NoiseSource, PrivacyParams};

/// `(α, β)` pairs exercised by the suites.
pub const ALPHA_BETA_GRID: [(f64, f64); 4] = [(1.0, 0.0), (1.0, 0.9), (0.99, 0.0), (0.99, 0.95)];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Kernels,
    Binning,
    Perturbation,
    Streaming,
    All,
}

impl Suite {
    fn parts(self) -> &'static [Suite] {
        match self {
            Suite::Kernels => &[Suite::Kernels],
            Suite::Binning => &[Suite::Binning],
            Suite::Perturbation => &[Suite::Perturbation],
            Suite::Streaming => &[Suite::Streaming],
            Suite::All => &[
                Suite::Kernels,
                Suite::Binning,
                Suite::Perturbation,
                Suite::Streaming,
            ],
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Suite::Kernels => "kernels",
            Suite::Binning => "binning",
            Suite::Perturbation => "perturbation",
            Suite::Streaming => "streaming",
            Suite::All => "all",
        })
    }
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "kernels" => Ok(Suite::Kernels),
            "binning" => Ok(Suite::Binning),
            "perturbation" => Ok(Suite::Perturbation),
            "streaming" => Ok(Suite::Streaming),
            "all" => Ok(Suite::All),
            other => Err(Error::param(format!("unknown suite {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub suite: Suite,
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "[{}] {:<13} {}: {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.suite,
            self.name,
            self.detail
        )
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct VerifyOptions {
    /// Makes the merge trigger inclusive (`≥ c`) so the binning suite can be
    /// shown to catch the change.
    #[doc(hidden)]
    pub inject_merge_fault: bool,
}

impl VerifyOptions {
    fn trigger(&self) -> MergeTrigger {
        if self.inject_merge_fault {
            MergeTrigger::Inclusive
        } else {
            MergeTrigger::Strict
        }
    }
}

struct Recorder {
    suite: Suite,
    checks: Vec<Check>,
}

impl Recorder {
    fn new(suite: Suite) -> Self {
        Self {
            suite,
            checks: Vec::new(),
        }
    }

    fn push(&mut self, name: impl Into<String>, passed: bool, detail: impl Into<String>) {
        self.checks.push(Check {
            suite: self.suite,
            name: name.into(),
            passed,
            detail: detail.into(),
        });
    }

    /// A check whose outcome is `margin ≥ 0`.
    fn margin(&mut self, name: impl Into<String>, margin: f64) {
        self.push(name, margin >= 0.0, format!("min slack {margin:.3e}"));
    }

    fn result(&mut self, name: impl Into<String>, outcome: Result<(bool, String)>) {
        match outcome {
            Ok((passed, detail)) => self.push(name, passed, detail),
            Err(e) => self.push(name, false, format!("error: {e}")),
        }
    }
}

pub fn run_suite(suite: Suite, options: &VerifyOptions) -> Vec<Check> {
    suite
        .parts()
        .iter()
        .flat_map(|part| match part {
            Suite::Kernels => kernels(),
            Suite::Binning => binning(options),
            Suite::Perturbation => perturbation(),
            Suite::Streaming => streaming(),
            Suite::All => unreachable!(),
        })
        .collect()
}

fn kernels() -> Vec<Check> {
    let mut rec = Recorder::new(Suite::Kernels);
    let max_k = 10_000;

    let g = gamma_table(max_k + 1);
    let slack = (1..=max_k)
        .map(|k| {
            let kf = k as f64;
            let lo = g[k] - 1.0 / (2.0 * kf.sqrt());
            let hi = 1.0 / (std::f64::consts::PI * kf).sqrt() - g[k];
            lo.min(hi) / g[k]
        })
        .fold(f64::INFINITY, f64::min);
    rec.margin("gamma bounds, k <= 1e4", slack);

    let gp = gamma_prime_table(max_k + 1);
    let slack = (1..=max_k)
        .map(|k| {
            let kf = k as f64;
            let d = 2.0 * kf - 1.0;
            let lo = gp[k] + 1.0 / ((std::f64::consts::PI * kf).sqrt() * d);
            let hi = -1.0 / (2.0 * kf.sqrt() * d) - gp[k];
            lo.min(hi) / gp[k].abs()
        })
        .fold(f64::INFINITY, f64::min);
    rec.margin("gamma' bounds, k <= 1e4", slack);

    for (alpha, beta) in ALPHA_BETA_GRID {
        let spec = ToeplitzSpec::new(alpha, beta, max_k + 1).expect("grid is valid");
        let b = spec.sqrt_coeffs();
        rec.margin(
            format!("b_j bounds ({alpha}, {beta}), j <= 1e4"),
            sqrt_coeff_bound_slack(&spec),
        );
        let mono = b
            .windows(2)
            .map(|w| w[0] - w[1])
            .fold(f64::INFINITY, f64::min);
        rec.margin(format!("b_j nonincreasing ({alpha}, {beta})"), mono);

        let short = ToeplitzSpec::new(alpha, beta, 256).expect("grid is valid");
        let (s, b) = (short.inv_sqrt_coeffs(), short.sqrt_coeffs());
        let worst = (0..256)
            .map(|k| {
                let conv: f64 = (0..=k).map(|i| s[i] * b[k - i]).sum();
                (conv - if k == 0 { 1.0 } else { 0.0 }).abs()
            })
            .fold(0.0, f64::max);
        rec.margin(
            format!("s * b = impulse ({alpha}, {beta}), k < 256"),
            1e-10 - worst,
        );
    }

    for n in [16, 128, 512] {
        for (alpha, beta) in ALPHA_BETA_GRID {
            let spec = ToeplitzSpec::new(alpha, beta, n).expect("grid is valid");
            let b = LowerTriangularMatrix::from_toeplitz_coeffs(spec.sqrt_coeffs());
            let a = LowerTriangularMatrix::from_toeplitz_coeffs(spec.counting_coeffs());
            rec.result(
                format!("B^2 = A ({alpha}, {beta}), n={n}"),
                b.matmul(&b)
                    .and_then(|sq| sq.max_abs_diff(&a))
                    .map(|err| (err <= 1e-9, format!("max error {err:.3e}"))),
            );
        }
    }

    for (alpha, beta) in ALPHA_BETA_GRID {
        let spec = ToeplitzSpec::new(alpha, beta, 64).expect("grid is valid");
        let b = LowerTriangularMatrix::from_toeplitz_coeffs(spec.sqrt_coeffs());
        let ok = crate::binning::is_mrm(&b, 1e-12);
        rec.push(format!("B is an MRM ({alpha}, {beta}), n=64"), ok, "");
    }
    rec.checks
}

/// Smallest relative slack in `α^j/(2√(j+1)) ≤ b_j ≤ α^j/((1−β/α)√(j+1))`.
pub fn sqrt_coeff_bound_slack(spec: &ToeplitzSpec) -> f64 {
    let (alpha, beta) = (spec.alpha(), spec.beta());
    let mut alpha_pow = 1.0;
    let mut worst = f64::INFINITY;
    for (j, &b) in spec.sqrt_coeffs().iter().enumerate() {
        let root = ((j + 1) as f64).sqrt();
        let lo = alpha_pow / (2.0 * root);
        let hi = alpha_pow / ((1.0 - beta / alpha) * root);
        worst = worst.min((b - lo).min(hi - b) / b);
        alpha_pow *= alpha;
    }
    worst
}

fn binning(options: &VerifyOptions) -> Vec<Check> {
    let mut rec = Recorder::new(Suite::Binning);
    let trigger = options.trigger();
    let bennett = |n: usize| ToeplitzSpec::bennett(n).expect("valid").sqrt_rows();
    let params = |c: f64, tau: f64| BinningParams::new(c, tau).expect("valid");

    let b3 = build_binning_with(bennett(3), &params(0.5, 0.01), trigger);
    let expect: Vec<Partition> = (1..=3).map(Partition::trivial).collect();
    rec.push(
        "ties at c stay unmerged (Bennett n=3, c=0.5)",
        b3.partitions() == expect.as_slice(),
        format!("B^3 = {}", b3.partition(3)),
    );

    let b5 = build_binning_with(bennett(5), &params(0.75, 0.01), trigger);
    rec.push(
        "hand trace (Bennett n=5, c=0.75, tau=0.01)",
        b5.partition(5).to_string() == "1-2,3-3,4-4,5-5" && b5.size() == 4,
        format!("B^5 = {}, |B| = {}", b5.partition(5), b5.size()),
    );

    let b50 = build_binning_with(bennett(50), &params(0.75, 0.02), trigger);
    rec.push(
        "|B| = 8 (Bennett n=50, c=0.75, tau=0.02)",
        b50.size() == 8,
        format!("|B| = {}", b50.size()),
    );

    // Valid binnings for arbitrary positive rows, MRM or not.
    let mut rng = ChaCha8Rng::seed_from_u64(0xb1);
    let mut all_valid = true;
    for _ in 0..20 {
        let n = rng.random_range(1..80);
        let m = LowerTriangularMatrix::from_fn(n, |_, _| rng.random_range(0.001..1.0));
        let c = rng.random_range(0.05..0.99);
        let tau = rng.random_range(0.001..0.5);
        all_valid &= verify_binning(&build_binning_with(&m, &params(c, tau), trigger));
    }
    rec.push(
        "valid binning on random positive matrices",
        all_valid,
        "20 instances",
    );

    let c_grid = [0.5, 0.75, 0.9, 0.99];
    let mut all_valid = true;
    let mut ratio_slack = f64::INFINITY;
    for (alpha, beta) in ALPHA_BETA_GRID {
        let n = 256;
        let rows = ToeplitzSpec::new(alpha, beta, n)
            .expect("valid")
            .sqrt_rows();
        for c in c_grid {
            for tau in [1.0 / n as f64, 0.02, 0.1] {
                let p = params(c, tau);
                let binning = build_binning_with(&rows, &p, trigger);
                all_valid &= verify_binning(&binning);
                ratio_slack = ratio_slack.min(interval_ratio_slack(&rows, &binning, &p));
            }
        }
    }
    rec.push("valid binning on B_{alpha,beta}, n=256 grid", all_valid, "");
    rec.margin("interval ratio >= c^2 above tau, n=256 grid", ratio_slack);

    // Space scaling: squaring τ doubles log(1/τ), which should at most double
    // |B| up to an additive constant.
    let mut worst: f64 = f64::INFINITY;
    let mut detail = String::new();
    for (alpha, beta) in [(0.99, 0.0), (0.99, 0.95), (1.0, 0.0)] {
        let rows = ToeplitzSpec::new(alpha, beta, 2048)
            .expect("valid")
            .sqrt_rows();
        for c in [0.5, 0.75, 0.9] {
            for tau in [1e-2, 1e-3] {
                let coarse = build_binning_with(&rows, &params(c, tau), trigger).size();
                let fine = build_binning_with(&rows, &params(c, tau * tau), trigger).size();
                let margin = (2 * coarse + 4) as f64 - fine as f64;
                if margin < worst {
                    worst = margin;
                    detail = format!("({alpha},{beta}) c={c} tau={tau}: |B|={coarse} -> {fine}");
                }
            }
        }
    }
    rec.push("|B| scales with log(1/tau)", worst >= 0.0, detail);
    rec.checks
}

/// For intervals `[a, b]`, `b < i`, whose right end exceeds τ, the smallest
/// value of `L_{i,a}/L_{i,b} − c²`.
pub fn interval_ratio_slack<S: RowSource>(
    source: &S,
    binning: &Binning,
    params: &BinningParams,
) -> f64 {
    let c_sq = params.c() * params.c();
    let mut worst = f64::INFINITY;
    for (idx, p) in binning.partitions().iter().enumerate() {
        let i = idx + 1;
        for iv in p {
            if iv.end < i && source.entry(i, iv.end) > params.tau() {
                let ratio = source.entry(i, iv.start) / source.entry(i, iv.end);
                worst = worst.min(ratio - c_sq);
            }
        }
    }
    worst
}

fn perturbation() -> Vec<Check> {
    let mut rec = Recorder::new(Suite::Perturbation);
    for n in [64, 256] {
        for (alpha, beta) in ALPHA_BETA_GRID {
            let spec = ToeplitzSpec::new(alpha, beta, n).expect("valid");
            let base = match SqrtFactorization::new(spec.clone()) {
                Ok(b) => b,
                Err(e) => {
                    rec.push(
                        format!("setup ({alpha},{beta}) n={n}"),
                        false,
                        e.to_string(),
                    );
                    continue;
                }
            };
            let l = base.sqrt();
            let l_inv = LowerTriangularMatrix::from_toeplitz_coeffs(spec.inv_sqrt_coeffs());
            let l_op = l.operator_norm(DEFAULT_OPNORM_TOL);
            let l_inv_op = l_inv.operator_norm(DEFAULT_OPNORM_TOL);
            let (l_op, l_inv_op) = match (l_op, l_inv_op) {
                (Ok(a), Ok(b)) => (a, b),
                _ => {
                    rec.push(
                        format!("operator norms ({alpha},{beta}) n={n}"),
                        false,
                        "no convergence",
                    );
                    continue;
                }
            };
            let sens = l.col_max_norm();
            let mut pert = f64::INFINITY;
            let mut frob = f64::INFINITY;
            let mut rowmax = f64::INFINITY;
            let mut opnorm = f64::INFINITY;
            let mut sensitivity = f64::INFINITY;
            let mut recon = f64::INFINITY;
            let mut failures = Vec::new();
            for c in [0.5, 0.75, 0.9, 0.99] {
                for tau in [1.0 / n as f64, 0.02, 0.1] {
                    let params = BinningParams::new(c, tau).expect("valid");
                    let f = match base.binned(&params) {
                        Ok(f) => f,
                        Err(e) => {
                            failures.push(e.to_string());
                            continue;
                        }
                    };
                    let eta = 1.0 / (c * c) - 1.0;
                    let nf = n as f64;
                    pert = pert
                        .min(perturbation_slack(l, &f.left, eta, tau).unwrap_or(f64::NEG_INFINITY));
                    frob = frob
                        .min((1.0 + eta) * l.frobenius_norm() + tau * nf - f.left.frobenius_norm());
                    rowmax = rowmax.min(
                        (1.0 + eta) * l.row_max_norm() + tau * nf.sqrt() - f.left.row_max_norm(),
                    );
                    let p = f.left.sub(l).expect("same size");
                    match p.operator_norm(DEFAULT_OPNORM_TOL) {
                        Ok(p_op) => {
                            // Power iteration underestimates; compare with a small pad.
                            let p_op = p_op * (1.0 + 1e-6);
                            opnorm = opnorm.min(eta * l_op + tau * nf - p_op);
                            if l_inv_op * p_op <= 0.5 {
                                let bound = (1.0 + 2.0 * p_op * l_inv_op) * sens;
                                sensitivity = sensitivity.min(bound - f.report.sensitivity);
                            }
                        }
                        Err(e) => failures.push(e.to_string()),
                    }
                    let resid = f
                        .left
                        .matmul(&f.right)
                        .and_then(|m| m.max_abs_diff(base.counting()))
                        .unwrap_or(f64::INFINITY);
                    recon = recon.min(1e-8 * nf - resid);
                }
            }
            let tag = format!("({alpha},{beta}) n={n}");
            rec.margin(format!("(1/c^2-1, tau)-perturbation {tag}"), pert);
            rec.margin(format!("Frobenius bound {tag}"), frob);
            rec.margin(format!("row-norm bound {tag}"), rowmax);
            rec.margin(format!("operator-norm bound {tag}"), opnorm);
            rec.margin(format!("sensitivity bound {tag}"), sensitivity);
            rec.margin(format!("reconstruction <= 1e-8 n {tag}"), recon);
            if !failures.is_empty() {
                rec.push(format!("grid evaluation {tag}"), false, failures.join("; "));
            }
        }
    }

    for n in [64, 128] {
        let base = SqrtFactorization::new(ToeplitzSpec::bennett(n).expect("valid")).expect("valid");
        rec.result(
            format!("xi=0.5 guarantee, Bennett n={n}"),
            base.theorem_params(0.5, KappaMode::Bound)
                .and_then(|p| base.binned(&p))
                .map(|f| {
                    let worst = f.report.mean_se_ratio.max(f.report.max_se_ratio);
                    (
                        worst <= 1.5,
                        format!("worst ratio {worst:.4}, |B| = {}", f.report.bin_size),
                    )
                }),
        );
    }
    rec.checks
}

fn streaming() -> Vec<Check> {
    let mut rec = Recorder::new(Suite::Streaming);
    let n = 256;
    let mut rng = ChaCha8Rng::seed_from_u64(0x57);
    for (alpha, beta) in ALPHA_BETA_GRID {
        let rows = ToeplitzSpec::new(alpha, beta, n)
            .expect("valid")
            .sqrt_rows();
        for (c, tau) in [(0.75, 0.02), (0.9, 1.0 / n as f64), (0.99, 1e-3)] {
            let params = BinningParams::new(c, tau).expect("valid");
            let outcome = stream_vs_dense(&rows, &params, 20, &mut rng).map(|(err, peak, size)| {
                (
                    err <= 1e-10 && peak == size,
                    format!("max rel error {err:.3e}, peak buffer {peak}, |B| {size}"),
                )
            });
            rec.result(
                format!("stream = dense ({alpha},{beta}) c={c} tau={tau:.4}"),
                outcome,
            );
        }
    }

    let rows = ToeplitzSpec::bennett(64).expect("valid").sqrt_rows();
    let params = BinningParams::new(0.85, 1.0 / 64.0).expect("valid");
    let privacy = PrivacyParams::new(0.5, 1e-6, 7).expect("valid");
    let stream: Vec<f64> = (0..64).map(|t| ((t * 7) % 3 == 0) as u8 as f64).collect();
    rec.result(
        "zero-noise counter is exact",
        run_private_counter(&stream, &rows, params, 0.0, &privacy).map(|out| {
            let exact = out.iter().all(|o| o.noisy_prefix == o.true_prefix);
            (exact, format!("{} steps", out.len()))
        }),
    );
    rec.result(
        "counter noise = dense L-hat z",
        run_private_counter(&vec![0.0; 64], &rows, params, 1.0, &privacy).and_then(|out| {
            let sigma = privacy.gaussian_constant().sqrt();
            let z = NoiseSource::new(privacy.seed, sigma).vector(64);
            let binning = crate::binning::build_binning(&rows, &params);
            let dense = BinnedMatrixView::new(&rows, binning)?
                .materialize()
                .matvec(&z)?;
            let err = out
                .iter()
                .zip(&dense)
                .map(|(o, d)| (o.noise_component - d).abs() / d.abs().max(1.0))
                .fold(0.0, f64::max);
            Ok((err <= 1e-10, format!("max rel error {err:.3e}")))
        }),
    );
    rec.checks
}

/// Streams `trials` random vectors through the evaluator and compares with the
/// dense product. Returns `(max relative error, peak buffer, |B|)`.
pub fn stream_vs_dense(
    rows: &ToeplitzRows,
    params: &BinningParams,
    trials: usize,
    rng: &mut impl Rng,
) -> Result<(f64, usize, usize)> {
    let n = rows.dim();
    let view = BinnedMatrixView::new(rows, crate::binning::build_binning(rows, params))?;
    let dense = view.materialize();
    let mut worst = 0.0f64;
    let mut peak = 0;
    for _ in 0..trials {
        let z: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let expect = dense.matvec(&z)?;
        let (got, state) = StreamingEvaluator::new(rows, *params).run(&z)?;
        for (g, e) in got.iter().zip(&expect) {
            worst = worst.max((g - e).abs() / e.abs().max(f64::MIN_POSITIVE));
        }
        peak = peak.max(state.peak_len());
    }
    Ok((worst, peak, view.space_complexity()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_names_round_trip() {
        for s in [
            Suite::Kernels,
            Suite::Binning,
            Suite::Perturbation,
            Suite::Streaming,
            Suite::All,
        ] {
            assert_eq!(s.to_string().parse::<Suite>().unwrap(), s);
        }
        assert!("bogus".parse::<Suite>().is_err());
    }

    #[test]
    fn kernel_suite_passes() {
        let checks = run_suite(Suite::Kernels, &VerifyOptions::default());
        for c in &checks {
            assert!(c.passed, "{c}");
        }
    }

    #[test]
    fn binning_suite_passes_and_detects_fault() {
        let checks = run_suite(Suite::Binning, &VerifyOptions::default());
        for c in &checks {
            assert!(c.passed, "{c}");
        }
        let faulty = run_suite(
            Suite::Binning,
            &VerifyOptions {
                inject_merge_fault: true,
            },
        );
        assert!(faulty.iter().any(|c| !c.passed));
    }
}
