//! Acceptance gate: one PASS/FAIL line per criterion, nonzero exit on any
//! failure. Runtime limits assume the optimized test profile.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use dpbin_core::verify::{
    interval_ratio_slack, sqrt_coeff_bound_slack, stream_vs_dense, ALPHA_BETA_GRID,
};
use dpbin_core::{
    gamma, gamma_prime, verify_binning, verify_perturbation, BinningParams, KappaMode,
    PrivacyParams, PrivateCounter, SqrtFactorization, ToeplitzSpec,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        passed,
        detail: detail.into(),
    }
}

fn baseline(alpha: f64, beta: f64, n: usize) -> SqrtFactorization {
    SqrtFactorization::new(ToeplitzSpec::new(alpha, beta, n).expect("valid spec")).expect("valid")
}

fn params(c: f64, tau: f64) -> BinningParams {
    BinningParams::new(c, tau).expect("valid params")
}

/// Criterion 1: the n = 50 reference point.
fn reference_point() -> Outcome {
    let f = baseline(1.0, 0.0, 50)
        .binned(&params(0.75, 0.02))
        .expect("factorizes");
    let r = &f.report;
    let ok = r.bin_size == 8
        && (r.mean_se_ratio - 0.9965).abs() <= 5e-4
        && (r.max_se_ratio - 0.9951).abs() <= 5e-4;
    outcome(
        ok,
        format!(
            "|B|={} mean={:.4} max={:.4}",
            r.bin_size, r.mean_se_ratio, r.max_se_ratio
        ),
    )
}

/// Criterion 2: `B² = A`.
fn square_root_identity() -> Outcome {
    let mut worst = 0.0f64;
    for n in [16, 128, 512] {
        for (alpha, beta) in ALPHA_BETA_GRID {
            let base = baseline(alpha, beta, n);
            let err = base
                .sqrt()
                .matmul(base.sqrt())
                .expect("square")
                .max_abs_diff(base.counting())
                .expect("square");
            worst = worst.max(err);
        }
    }
    outcome(worst <= 1e-9, format!("max |B^2 - A| = {worst:.3e}"))
}

/// Criterion 3: coefficient bounds for `k ≤ 10⁴`.
fn coefficient_bounds() -> Outcome {
    let pi = std::f64::consts::PI;
    let mut gamma_ok = true;
    for k in 1..=10_000usize {
        let kf = k as f64;
        let (g, gp) = (gamma(k), gamma_prime(k));
        let d = 2.0 * kf - 1.0;
        gamma_ok &= 1.0 / (2.0 * kf.sqrt()) <= g && g <= 1.0 / (pi * kf).sqrt();
        gamma_ok &= -1.0 / ((pi * kf).sqrt() * d) <= gp && gp <= -1.0 / (2.0 * kf.sqrt() * d);
    }
    let slack = ALPHA_BETA_GRID
        .iter()
        .map(|&(a, b)| sqrt_coeff_bound_slack(&ToeplitzSpec::new(a, b, 10_001).expect("valid")))
        .fold(f64::INFINITY, f64::min);
    outcome(
        gamma_ok && slack >= 0.0,
        format!("gamma/gamma' bounds hold: {gamma_ok}, min b_j slack {slack:.3e}"),
    )
}

const C_GRID: [f64; 4] = [0.5, 0.75, 0.9, 0.99];

/// Criterion 4: entrywise perturbation bound over the parameter grid.
fn perturbation_grid() -> Outcome {
    let mut failures = 0;
    let mut points = 0;
    for n in [64, 256] {
        for (alpha, beta) in ALPHA_BETA_GRID {
            let base = baseline(alpha, beta, n);
            for c in C_GRID {
                for tau in [1.0 / n as f64, 0.02, 0.1] {
                    let p = params(c, tau);
                    let f = base.binned(&p).expect("factorizes");
                    let valid = verify_binning(&f.binning)
                        && interval_ratio_slack(&base.rows(), &f.binning, &p) >= 0.0;
                    if !(valid
                        && verify_perturbation(base.sqrt(), &f.left, 1.0 / (c * c) - 1.0, tau))
                    {
                        failures += 1;
                    }
                    points += 1;
                }
            }
        }
    }
    outcome(
        failures == 0,
        format!("{failures} of {points} grid points violate"),
    )
}

/// Criterion 5: theorem parameters keep both ratios within `1 + ξ`.
fn theorem_guarantee() -> Outcome {
    let xi = 0.5;
    let mut worst: f64 = 0.0;
    let mut detail = Vec::new();
    for n in [128, 512, 1024] {
        let base = baseline(1.0, 0.0, n);
        let p = base.theorem_params(xi, KappaMode::Bound).expect("params");
        let r = base.binned(&p).expect("factorizes").report;
        worst = worst.max(r.mean_se_ratio).max(r.max_se_ratio);
        detail.push(format!(
            "n={n}: |B|={} mean={:.4} max={:.4}",
            r.bin_size, r.mean_se_ratio, r.max_se_ratio
        ));
    }
    outcome(worst <= 1.0 + xi, detail.join("; "))
}

/// Criterion 6: streamed output equals the dense product.
fn streaming_equivalence() -> Outcome {
    let n = 256;
    let rows = ToeplitzSpec::bennett(n).expect("valid").sqrt_rows();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let (err, peak, size) =
        stream_vs_dense(&rows, &params(0.9, 1.0 / n as f64), 20, &mut rng).expect("streams");
    outcome(
        err <= 1e-10 && peak == size,
        format!("max rel error {err:.3e}, peak buffer {peak}, |B| {size}"),
    )
}

/// Criterion 7: reconstruction `L̂R̂ = A`.
fn reconstruction() -> Outcome {
    let mut worst_scaled = 0.0f64;
    for n in [64, 256, 1024, 2048] {
        let ds: &[f64] = if n >= 2048 {
            &[4.0, 16.0]
        } else {
            &[2.0, 8.0, 32.0]
        };
        for (alpha, beta) in ALPHA_BETA_GRID {
            let base = baseline(alpha, beta, n);
            for &d in ds {
                let f = base
                    .binned(&params(1.0 - 1.0 / d, 1.0 / n as f64))
                    .expect("factorizes");
                let err = f
                    .left
                    .matmul(&f.right)
                    .expect("square")
                    .max_abs_diff(base.counting())
                    .expect("square");
                worst_scaled = worst_scaled.max(err / n as f64);
            }
        }
    }
    outcome(
        worst_scaled <= 1e-8,
        format!("max |LR - A| / n = {worst_scaled:.3e}"),
    )
}

/// Criterion 8: at n = 4096 a small binning beats the exact factorization,
/// and the sweep shows the expected trends.
fn large_n_tradeoff() -> Outcome {
    let n = 4096;
    let base = baseline(1.0, 0.0, n);
    let mut rows = Vec::new();
    for d in [2.0, 4.0, 8.0, 16.0, 32.0] {
        let r = base
            .binned(&params(1.0 - 1.0 / d, 1.0 / n as f64))
            .expect("factorizes")
            .report;
        rows.push((d, r.bin_size, r.mean_se_ratio));
    }
    let beats = rows
        .iter()
        .any(|&(_, size, ratio)| ratio < 1.0 && size < n / 4);
    let sizes_monotone = rows.windows(2).all(|w| w[0].1 <= w[1].1);
    let (first, last) = (rows[0], rows[rows.len() - 1]);
    let ratio_trend = last.2 <= first.2;
    let detail = rows
        .iter()
        .map(|(d, s, r)| format!("d={d}:|B|={s},mean={r:.4}"))
        .collect::<Vec<_>>()
        .join(" ");
    outcome(beats && sizes_monotone && ratio_trend, detail)
}

/// Criterion 9: Monte-Carlo variance of the streamed noise.
fn monte_carlo_variance() -> Outcome {
    let n = 64;
    let runs = 10_000u64;
    let base = baseline(1.0, 0.0, n);
    let p = params(0.85, 1.0 / n as f64);
    let f = base.binned(&p).expect("factorizes");
    let sensitivity = f.report.sensitivity;
    let privacy = PrivacyParams::new(0.5, 1e-6, 0).expect("valid");
    let expected: Vec<f64> = f
        .left
        .row_norms_sq()
        .iter()
        .map(|r| privacy.gaussian_constant() * sensitivity * sensitivity * r)
        .collect();
    let mut sum = vec![0.0; n];
    let mut sum_sq = vec![0.0; n];
    for seed in 0..runs {
        let privacy = PrivacyParams { seed, ..privacy };
        let mut counter =
            PrivateCounter::new(base.rows(), p, sensitivity, &privacy).expect("valid");
        for t in 0..n {
            let v = counter.push(0.0).expect("in range").noise_component;
            sum[t] += v;
            sum_sq[t] += v * v;
        }
    }
    let m = runs as f64;
    let worst = (0..n)
        .map(|t| {
            let mean = sum[t] / m;
            let var = (sum_sq[t] - m * mean * mean) / (m - 1.0);
            (var / expected[t] - 1.0).abs()
        })
        .fold(0.0, f64::max);
    outcome(
        worst <= 0.05,
        format!("max relative variance deviation {worst:.4} over {n} steps"),
    )
}

/// Criterion 10: other `(α, β)` at n = 50 with `|B| = 8`.
fn other_kernels_at_fixed_size() -> Outcome {
    let n = 50;
    let tau = 0.02;
    let mut ok = true;
    let mut detail = Vec::new();
    for (alpha, beta) in [(1.0, 0.9), (1.0, 0.95), (0.99, 0.0), (0.99, 0.95)] {
        let base = baseline(alpha, beta, n);
        let hit = (0..=2000)
            .map(|k| 1.1 + k as f64 * (30.0 - 1.1) / 2000.0)
            .map(|d| 1.0 - 1.0 / d)
            .find_map(|c| {
                let r = base.binned(&params(c, tau)).expect("factorizes").report;
                (r.bin_size == 8).then_some(r)
            });
        match hit {
            Some(r) => {
                if alpha == 1.0 {
                    ok &= r.mean_se_ratio < 1.02;
                }
                detail.push(format!(
                    "({alpha},{beta}) c={:.4} mean={:.4}",
                    r.c.unwrap_or(f64::NAN),
                    r.mean_se_ratio
                ));
            }
            None => {
                ok &= alpha != 1.0;
                detail.push(format!("({alpha},{beta}) no c gives |B|=8"));
            }
        }
    }
    outcome(ok, detail.join("; "))
}

type Criterion = (&'static str, fn() -> Outcome, Option<Duration>);

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        (
            "1 reference point n=50",
            reference_point,
            Some(Duration::from_secs(1)),
        ),
        (
            "2 B^2 = A",
            square_root_identity,
            Some(Duration::from_secs(10)),
        ),
        (
            "3 coefficient bounds",
            coefficient_bounds,
            Some(Duration::from_secs(5)),
        ),
        ("4 perturbation bound", perturbation_grid, None),
        ("5 theorem parameters", theorem_guarantee, None),
        ("6 streaming = dense", streaming_equivalence, None),
        ("7 reconstruction", reconstruction, None),
        ("8 large-n tradeoff", large_n_tradeoff, None),
        (
            "9 Monte-Carlo variance",
            monte_carlo_variance,
            Some(Duration::from_secs(60)),
        ),
        ("10 other kernels", other_kernels_at_fixed_size, None),
    ];
    let mut failed = 0;
    for (name, run, limit) in criteria {
        let start = Instant::now();
        let result = run();
        let elapsed = start.elapsed();
        let in_time = limit.is_none_or(|l| elapsed <= l);
        let passed = result.passed && in_time;
        if !passed {
            failed += 1;
        }
        let budget = limit
            .map(|l| format!(" (limit {:.0}s)", l.as_secs_f64()))
            .unwrap_or_default();
        println!(
            "{} criterion {name}: {} [{:.2}s{budget}]",
            if passed { "PASS" } else { "FAIL" },
            result.detail,
            elapsed.as_secs_f64()
        );
    }
    if failed == 0 {
        println!("acceptance: all criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: {failed} criteria failed");
        ExitCode::FAILURE
    }
}
