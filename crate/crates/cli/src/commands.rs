//! Subcommand implementations.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{Context, Result};
use dpbin_core::factorization::binary_mechanism_space;
use dpbin_core::verify::{run_suite, Suite, VerifyOptions};
use dpbin_core::{
    binary_mechanism_factorization, build_binning, BinningParams, FactorizationReport, KappaMode,
    LowerTriangularMatrix, PrivacyParams, PrivateCounter, SqrtFactorization, ToeplitzSpec,
};
use serde::Serialize;

use crate::output::{open, resolve, write_csv};
use crate::{
    CoeffKind, CoeffsArgs, FactorizeArgs, ReportFormat, SpecArgs, StreamArgs, SuiteArg, SweepArgs,
    VerifyArgs,
};

/// A problem with the invocation itself rather than with the computation.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

/// An invariant that failed at run time.
#[derive(Debug)]
pub struct InvariantFailure(pub String);

impl fmt::Display for InvariantFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for InvariantFailure {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

/// 2 for bad parameters or input, 1 for everything else.
pub fn exit_code_for(err: &anyhow::Error) -> ExitCode {
    use dpbin_core::Error as E;
    let is_usage = err.chain().any(|cause| {
        cause.is::<UsageError>()
            || matches!(
                cause.downcast_ref::<E>(),
                Some(
                    E::InvalidParameter(_)
                        | E::StreamTooLong { .. }
                        | E::InputOutOfRange { .. }
                        | E::DimensionMismatch { .. }
                )
            )
    });
    ExitCode::from(if is_usage { 2 } else { 1 })
}

fn spec_of(args: &SpecArgs) -> Result<ToeplitzSpec> {
    Ok(ToeplitzSpec::new(args.alpha, args.beta, args.n)?)
}

#[derive(Serialize)]
struct CoeffRow {
    k: usize,
    value: f64,
}

pub fn coeffs(args: &CoeffsArgs) -> Result<ExitCode> {
    let spec = spec_of(&args.spec)?;
    let values = match args.kind {
        CoeffKind::A => spec.counting_coeffs(),
        CoeffKind::B => spec.sqrt_coeffs(),
        CoeffKind::S => spec.inv_sqrt_coeffs(),
    };
    let rows: Vec<CoeffRow> = values
        .iter()
        .enumerate()
        .map(|(k, &value)| CoeffRow { k, value })
        .collect();
    let dest = resolve(args.out.as_deref(), "coeffs.csv");
    write_csv(open(dest.as_deref())?, &["k", "value"], &rows)?;
    Ok(ExitCode::SUCCESS)
}

/// Column order of a serialized [`FactorizationReport`].
pub const REPORT_HEADER: [&str; 13] = [
    "n",
    "alpha",
    "beta",
    "c",
    "tau",
    "bin_size",
    "frobenius_l",
    "row_max_l",
    "sensitivity",
    "mean_se",
    "max_se",
    "mean_se_ratio",
    "max_se_ratio",
];

pub fn factorize(args: &FactorizeArgs) -> Result<ExitCode> {
    let base = SqrtFactorization::new(spec_of(&args.spec)?)?;
    let params = match (args.c, args.tau, args.xi) {
        (Some(c), Some(tau), None) => BinningParams::new(c, tau)?,
        (None, None, Some(xi)) => {
            let mode = if args.exact_kappa {
                KappaMode::Exact
            } else {
                KappaMode::Bound
            };
            base.theorem_params(xi, mode)?
        }
        _ => return Err(usage("give either --c and --tau, or --xi")),
    };
    let f = base.binned(&params)?;
    log::info!(
        "c = {}, tau = {}, |B| = {}",
        params.c(),
        params.tau(),
        f.report.bin_size
    );

    let format =
        args.format
            .unwrap_or_else(|| match args.out.as_deref().and_then(Path::extension) {
                Some(ext) if ext.eq_ignore_ascii_case("json") => ReportFormat::Json,
                _ => ReportFormat::Csv,
            });
    let default_name = match format {
        ReportFormat::Csv => "factorize.csv",
        ReportFormat::Json => "factorize.json",
    };
    let mut dest = open(resolve(args.out.as_deref(), default_name).as_deref())?;
    match format {
        ReportFormat::Csv => write_csv(dest, &REPORT_HEADER, std::slice::from_ref(&f.report))?,
        ReportFormat::Json => {
            serde_json::to_writer_pretty(&mut dest, &f.report)?;
            writeln!(dest)?;
            dest.flush()?;
        }
    }

    if let Some(path) = &args.dump_binning {
        let mut dump = open(resolve(Some(path), "binning.txt").as_deref())?;
        for (i, p) in f.binning.partitions().iter().enumerate() {
            writeln!(dump, "{}: {}", i + 1, p)?;
        }
        dump.flush()?;
    }
    Ok(ExitCode::SUCCESS)
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub method: &'static str,
    pub n: usize,
    pub alpha: f64,
    pub beta: f64,
    pub c: Option<f64>,
    pub tau: Option<f64>,
    pub d: Option<f64>,
    pub bin_size: usize,
    pub mean_se_ratio: f64,
    pub max_se_ratio: f64,
    pub wall_time_ms: f64,
}

const SWEEP_HEADER: [&str; 11] = [
    "method",
    "n",
    "alpha",
    "beta",
    "c",
    "tau",
    "d",
    "bin_size",
    "mean_se_ratio",
    "max_se_ratio",
    "wall_time_ms",
];

/// `steps` values of `d` from `min` to `max` inclusive, ascending.
pub fn d_grid(min: f64, max: f64, steps: usize, log_spacing: bool) -> Result<Vec<f64>> {
    if !(min > 1.0 && max >= min && max.is_finite()) {
        return Err(usage(format!(
            "need 1 < d-min <= d-max, got {min} and {max}"
        )));
    }
    if steps == 0 {
        return Err(usage("d-steps must be at least 1"));
    }
    if steps == 1 {
        return Ok(vec![min]);
    }
    let last = (steps - 1) as f64;
    Ok((0..steps)
        .map(|k| {
            let t = k as f64 / last;
            if log_spacing {
                min * (max / min).powf(t)
            } else {
                min + t * (max - min)
            }
        })
        .collect())
}

pub fn sweep(args: &SweepArgs) -> Result<ExitCode> {
    let ds = d_grid(args.d_min, args.d_max, args.d_steps, args.log_spacing)?;
    let mut ns = args.n_list.clone();
    ns.sort_unstable();
    ns.dedup();
    let classic = args.alpha == 1.0 && args.beta == 0.0;
    if args.baseline && !classic {
        log::warn!(
            "baseline rows factorize the all-ones matrix; skipped for alpha != 1 or beta != 0"
        );
    }

    let mut rows = Vec::new();
    for &n in &ns {
        let spec = ToeplitzSpec::new(args.alpha, args.beta, n)?;
        let base = SqrtFactorization::new(spec)?;
        for &d in &ds {
            let start = Instant::now();
            let params = BinningParams::new(1.0 - 1.0 / d, 1.0 / n as f64)?;
            let report = base.binned(&params)?.report;
            let elapsed = start.elapsed().as_secs_f64() * 1e3;
            rows.push(sweep_row(
                "binned",
                &report,
                Some(d),
                elapsed,
                args.no_timing,
            ));
        }
        if args.baseline && classic {
            let start = Instant::now();
            let (l, r) = binary_mechanism_factorization(n);
            let report = base.compare(&l, &r, None, binary_mechanism_space(n))?;
            let elapsed = start.elapsed().as_secs_f64() * 1e3;
            rows.push(sweep_row("binary", &report, None, elapsed, args.no_timing));

            let start = Instant::now();
            let id = LowerTriangularMatrix::identity(n);
            let report = base.compare(base.counting(), &id, None, 1)?;
            let elapsed = start.elapsed().as_secs_f64() * 1e3;
            rows.push(sweep_row(
                "identity",
                &report,
                None,
                elapsed,
                args.no_timing,
            ));
        }
        log::info!("n = {n} done");
    }
    let dest = resolve(args.out.as_deref(), "sweep.csv");
    write_csv(open(dest.as_deref())?, &SWEEP_HEADER, &rows)?;
    Ok(ExitCode::SUCCESS)
}

fn sweep_row(
    method: &'static str,
    report: &FactorizationReport,
    d: Option<f64>,
    elapsed_ms: f64,
    no_timing: bool,
) -> SweepRow {
    SweepRow {
        method,
        n: report.n,
        alpha: report.alpha,
        beta: report.beta,
        c: report.c,
        tau: report.tau,
        d,
        bin_size: report.bin_size,
        mean_se_ratio: report.mean_se_ratio,
        max_se_ratio: report.max_se_ratio,
        wall_time_ms: if no_timing { 0.0 } else { elapsed_ms },
    }
}

/// Reads one value per line, taking the first comma-separated field. Blank
/// lines are skipped; a non-numeric first line is a header.
pub fn read_stream(path: &Path) -> Result<Vec<f64>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut values = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let field = line.split(',').next().unwrap_or("").trim();
        if field.is_empty() {
            continue;
        }
        match field.parse::<f64>() {
            Ok(v) => values.push(v),
            Err(_) if idx == 0 => continue,
            Err(_) => {
                return Err(usage(format!(
                    "{}:{}: not a number: {field:?}",
                    path.display(),
                    idx + 1
                )))
            }
        }
    }
    Ok(values)
}

#[derive(Serialize)]
struct StreamRow {
    step: usize,
    true_prefix: f64,
    noisy_prefix: f64,
}

pub fn stream(args: &StreamArgs) -> Result<ExitCode> {
    let input = read_stream(&args.input)?;
    let spec = spec_of(&args.spec)?;
    if input.len() > spec.n() {
        return Err(usage(format!(
            "input has {} values but --n is {}",
            input.len(),
            spec.n()
        )));
    }
    let params = BinningParams::new(args.c, args.tau)?;
    let privacy = PrivacyParams::new(args.epsilon, args.delta, args.seed)?;
    let bin_size = build_binning(spec.sqrt_rows(), &params).size();
    let sensitivity = if args.zero_noise {
        0.0
    } else {
        // Exact sensitivity needs the dense right factor; this is the offline
        // part of the mechanism.
        SqrtFactorization::new(spec.clone())?
            .binned(&params)?
            .report
            .sensitivity
    };

    let mut counter = PrivateCounter::new(spec.sqrt_rows(), params, sensitivity, &privacy)?;
    let mut rows = Vec::with_capacity(input.len());
    for &x in &input {
        let o = counter.push(x)?;
        rows.push(StreamRow {
            step: o.step,
            true_prefix: o.true_prefix,
            noisy_prefix: o.noisy_prefix,
        });
    }
    let peak = counter.state().peak_len();
    eprintln!(
        "memory audit: peak buffer {peak} reals, bin size {bin_size}, {} steps, sensitivity {sensitivity:.6}",
        rows.len()
    );
    let dest = resolve(args.out.as_deref(), "stream.csv");
    write_csv(
        open(dest.as_deref())?,
        &["step", "true_prefix", "noisy_prefix"],
        &rows,
    )?;
    if peak > bin_size {
        return Err(
            InvariantFailure(format!("peak buffer {peak} exceeds bin size {bin_size}")).into(),
        );
    }
    Ok(ExitCode::SUCCESS)
}

pub fn verify(args: &VerifyArgs) -> Result<ExitCode> {
    let suite = match args.suite {
        SuiteArg::Kernels => Suite::Kernels,
        SuiteArg::Binning => Suite::Binning,
        SuiteArg::Perturbation => Suite::Perturbation,
        SuiteArg::Streaming => Suite::Streaming,
        SuiteArg::All => Suite::All,
    };
    let options = VerifyOptions {
        inject_merge_fault: args.inject_fault,
    };
    let start = Instant::now();
    let checks = run_suite(suite, &options);
    for check in &checks {
        println!("{check}");
    }
    let failed = checks.iter().filter(|c| !c.passed).count();
    println!(
        "{} passed, {failed} failed ({:.1}s)",
        checks.len() - failed,
        start.elapsed().as_secs_f64()
    );

    if args.dump_binning {
        let rows = ToeplitzSpec::bennett(50)?.sqrt_rows();
        let params = BinningParams::new(0.75, 0.02)?;
        let binning = build_binning(&rows, &params);
        println!(
            "reference binning (n=50, c=0.75, tau=0.02), |B| = {}",
            binning.size()
        );
        for (i, p) in binning.partitions().iter().enumerate() {
            println!("{}: {}", i + 1, p);
        }
    }
    Ok(if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn d_grid_examples() {
        assert_eq!(
            d_grid(2.0, 8.0, 4, false).unwrap(),
            vec![2.0, 4.0, 6.0, 8.0]
        );
        let g = d_grid(2.0, 32.0, 5, true).unwrap();
        for (got, want) in g.iter().zip([2.0, 4.0, 8.0, 16.0, 32.0]) {
            assert!((got - want).abs() < 1e-12);
        }
        assert_eq!(d_grid(3.0, 3.0, 1, false).unwrap(), vec![3.0]);
        assert!(d_grid(1.0, 4.0, 3, false).is_err());
        assert!(d_grid(4.0, 2.0, 3, false).is_err());
        assert!(d_grid(2.0, 4.0, 0, false).is_err());
    }

    #[test]
    fn report_header_matches_fields() {
        let base = SqrtFactorization::new(ToeplitzSpec::bennett(4).unwrap()).unwrap();
        let json = serde_json::to_value(base.baseline_report()).unwrap();
        let keys: Vec<&str> = json
            .as_object()
            .unwrap()
            .keys()
            .map(String::as_str)
            .collect();
        let mut header = REPORT_HEADER.to_vec();
        let mut sorted = keys.clone();
        header.sort_unstable();
        sorted.sort_unstable();
        assert_eq!(header, sorted);
    }

    #[test]
    fn exit_codes() {
        let bad = anyhow::Error::from(dpbin_core::Error::InvalidParameter("x".into()));
        assert_eq!(exit_code_for(&bad), ExitCode::from(2));
        assert_eq!(exit_code_for(&usage("x")), ExitCode::from(2));
        let singular = anyhow::Error::from(dpbin_core::Error::Singular { row: 0 });
        assert_eq!(exit_code_for(&singular), ExitCode::from(1));
    }
}
