//! The `saa` command-line tool.
//!
//! Exit status: 0 on success, 2 for invalid input or specifications, 3 for
//! numerical failures (including lemma checks that report violations).

use std::ffi::OsString;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use saa_core::harness::{self, SweepSpec};
use saa_core::imaging::{self, ImagingConfig};
use saa_core::synthetic::{gen_instance, relative_error, InstanceSpec, DEFAULT_SUCCESS_THRESHOLD};
use saa_core::theory::{self, BoundVariant};
use saa_core::{
    bound_report, mutual_coherence, solve, BlockDictionary, Error, Problem, Result, SolverConfig,
    SolverKind,
};

pub const EXIT_SPEC: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

/// Largest image (in pixels) accepted by `image`; the dense blocks are
/// `pixels/2` square.
const MAX_IMAGE_PIXELS: usize = 1 << 14;

#[derive(Debug, Parser)]
#[command(name = "saa", version, about = "Splitting alternating sparse solvers and experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Mutual coherence of a dictionary and the sparsity levels it certifies.
    Coherence {
        /// Dictionary container file.
        file: Option<PathBuf>,
        /// Generate a random dictionary instead: `seed,m,p`.
        #[arg(long = "gen", value_name = "SEED,M,P", conflicts_with = "file")]
        generate: Option<String>,
    },
    /// Solve one random instance and print the result as JSON.
    Solve {
        #[arg(long, default_value = "TSAA")]
        solver: SolverKind,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 200)]
        m: usize,
        #[arg(long, default_value_t = 2)]
        p: usize,
        #[arg(long = "K", short = 'k')]
        k: usize,
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
        #[arg(long)]
        tau: Option<usize>,
        #[arg(long)]
        max_iters: Option<usize>,
        /// Include the per-iteration trace.
        #[arg(long)]
        trace: bool,
    },
    /// Success rates over a grid of sparsity levels, as CSV.
    Sweep {
        spec: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Success rates after a fixed number of iterations, as CSV.
    FewIt {
        spec: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "3,4,5,6,7")]
        budgets: Vec<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Randomized checks of the inequalities behind the guarantees.
    VerifyLemmas {
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Recovery conditions and contraction ratio for given parameters.
    Bounds {
        #[arg(long)]
        mu: f64,
        #[arg(long)]
        m: usize,
        #[arg(long)]
        p: usize,
        #[arg(long = "K", short = 'k')]
        k: usize,
    },
    /// Reconstruct a PGM image from compressive wavelet measurements.
    Image {
        input: PathBuf,
        output: PathBuf,
        /// Iterations to run; PSNR is reported after each.
        #[arg(long, default_value_t = 10)]
        iters: usize,
        #[arg(long, default_value = "TSAA")]
        solver: SolverKind,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = imaging::DEFAULT_LEVELS)]
        levels: usize,
        /// Write the PSNR trace here instead of stdout.
        #[arg(long)]
        psnr_csv: Option<PathBuf>,
    },
    /// Write the 64×64 test phantom.
    Phantom { output: PathBuf },
    /// Write a random dictionary container.
    GenMatrix {
        output: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        m: usize,
        #[arg(long, default_value_t = 2)]
        p: usize,
    },
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    run_with_output(args, &mut io::stdout().lock())
}

/// Like [`run`], but anything destined for stdout goes to `out`.
pub fn run_with_output<I, T>(args: I, out: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_SPEC } else { 0 };
        }
    };
    match execute(cli.command, out) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_spec_error() {
                EXIT_SPEC
            } else {
                EXIT_NUMERICAL
            }
        }
    }
}

fn output<'a>(path: Option<&Path>, out: &'a mut dyn Write) -> Result<Box<dyn Write + 'a>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(out),
    })
}

fn print_json(out: &mut dyn Write, value: serde_json::Value) -> Result<()> {
    serde_json::to_writer_pretty(&mut *out, &value)?;
    writeln!(out)?;
    Ok(())
}

fn block_seeds(seed: u64, p: usize) -> Vec<u64> {
    (0..p)
        .map(|i| saa_core::seed::derive_seed(seed, saa_core::seed::stream::BLOCK_BASE + i as u64))
        .collect()
}

fn parse_generate(text: &str) -> Result<(u64, usize, usize)> {
    let parts: Vec<&str> = text.split(',').map(str::trim).collect();
    let bad = || Error::InvalidArgument(format!("expected SEED,M,P, got {text:?}"));
    if parts.len() != 3 {
        return Err(bad());
    }
    Ok((
        parts[0].parse().map_err(|_| bad())?,
        parts[1].parse().map_err(|_| bad())?,
        parts[2].parse().map_err(|_| bad())?,
    ))
}

fn execute(command: Command, out: &mut dyn Write) -> Result<i32> {
    match command {
        Command::Coherence { file, generate } => {
            let dict = match (file, generate) {
                (Some(path), _) => harness::read_dictionary(io::BufReader::new(File::open(path)?))?,
                (None, Some(g)) => {
                    let (seed, m, p) = parse_generate(&g)?;
                    BlockDictionary::from_block_seeds(&block_seeds(seed, p), m)?
                }
                (None, None) => {
                    return Err(Error::InvalidArgument("give a dictionary file or --gen".into()))
                }
            };
            let mu = mutual_coherence(&dict);
            let (m, p) = (dict.m(), dict.p());
            let mut report = serde_json::json!({
                "m": m,
                "p": p,
                "mu": mu,
                "uniqueness_bound": theory::uniqueness_bound(mu)?,
                "msaa_rhs": theory::msaa_condition_rhs(mu, m, p, BoundVariant::Proof)?,
            });
            if p == 2 {
                report["tsaa_rhs"] = theory::tsaa_condition_rhs(mu, m)?.into();
            }
            print_json(out, report)?;
        }
        Command::Solve {
            solver,
            seed,
            m,
            p,
            k,
            noise,
            tau,
            max_iters,
            trace,
        } => {
            let spec = InstanceSpec::new(seed, m, p, k, noise);
            let inst = gen_instance(&spec)?;
            let mut cfg = SolverConfig::new(k)
                .with_max_iters(max_iters.unwrap_or_else(|| solver.default_max_iters()))
                .with_trace(trace);
            if let Some(t) = tau {
                cfg = cfg.with_tau(t);
            }
            let problem = Problem::new(&inst.dict, &inst.y).with_truth(&inst.x_star);
            let result = solve(solver, problem, &cfg)?;
            let err = relative_error(&result.x_hat, &inst.x_star);
            print_json(out, serde_json::json!({
                "instance": spec,
                "relative_error": err,
                "success": err <= DEFAULT_SUCCESS_THRESHOLD,
                "result": result,
            }))?;
        }
        Command::Sweep { spec, out: out_path } => {
            let spec = SweepSpec::from_path(&spec)?;
            let report = harness::run_sweep(&spec)?;
            let mut w = output(out_path.as_deref(), out)?;
            report.write_csv(&mut w)?;
            w.flush()?;
        }
        Command::FewIt { spec, budgets, out: out_path } => {
            let spec = SweepSpec::from_path(&spec)?;
            let report = harness::run_few_iteration_study(&spec, &budgets)?;
            let mut w = output(out_path.as_deref(), out)?;
            report.write_csv(&mut w)?;
            w.flush()?;
        }
        Command::VerifyLemmas { trials, seed } => {
            let mut reports = vec![
                theory::check_hk_bound(trials, 32, 5, seed)?,
                theory::check_row_bound(trials, 7, 12, 0.4, seed)?,
            ];
            for p in [2, 3, 5] {
                let mut r = theory::check_offdiag_bound(trials, 16, p, None, seed)?;
                r.name = format!("{} (p = {p})", r.name);
                reports.push(r);
            }
            for p in [2, 3] {
                let mut r = theory::check_ls_error_bound(trials, 16, p, 1, seed)?;
                r.name = format!("{} (p = {p})", r.name);
                reports.push(r);
            }
            for r in &reports {
                writeln!(
                    out,
                    "{:<24} trials={:<6} skipped={:<6} violations={:<4} max_ratio={:.6}",
                    r.name, r.trials, r.skipped, r.violations, r.max_ratio
                )?;
            }
            if reports.iter().any(|r| !r.passed()) {
                writeln!(out, "FAILED")?;
                return Ok(EXIT_NUMERICAL);
            }
            writeln!(out, "all checks passed")?;
        }
        Command::Bounds { mu, m, p, k } => {
            print_json(out, serde_json::to_value(bound_report(mu, m, p, k)?)?)?;
        }
        Command::Image {
            input,
            output: image_path,
            iters,
            solver,
            seed,
            levels,
            psnr_csv,
        } => {
            let img = imaging::read_pgm(&input)?.center_crop(levels)?;
            let pixels = img.width * img.height;
            if pixels > MAX_IMAGE_PIXELS {
                return Err(Error::TooLarge(format!(
                    "{}x{} image has {pixels} pixels; limit is {MAX_IMAGE_PIXELS}",
                    img.width, img.height
                )));
            }
            let dict = imaging::imaging_dictionary(seed, pixels)?;
            let cfg = ImagingConfig {
                levels,
                solver,
                sparsity: None,
                record_at: (1..=iters).collect(),
            };
            let rec = imaging::reconstruct_image(&img, &dict, &cfg)?;
            imaging::write_pgm(&rec.image, &image_path)?;
            let mut w = output(psnr_csv.as_deref(), out)?;
            w.write_all(rec.trace_csv().as_bytes())?;
            w.flush()?;
        }
        Command::Phantom { output: path } => {
            imaging::write_pgm(&imaging::phantom(), &path)?;
        }
        Command::GenMatrix { output: path, seed, m, p } => {
            let dict = BlockDictionary::from_block_seeds(&block_seeds(seed, p), m)?;
            harness::write_dictionary(&dict, BufWriter::new(File::create(path)?))?;
        }
    }
    Ok(0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn saa(args: &[&str]) -> (i32, String) {
        let mut out = Vec::new();
        let code = run_with_output(std::iter::once("saa").chain(args.iter().copied()), &mut out);
        (code, String::from_utf8(out).unwrap())
    }

    fn json(text: &str) -> serde_json::Value {
        serde_json::from_str(text).unwrap()
    }

    #[test]
    fn bounds_reports_condition_and_ratio() {
        let (code, out) = saa(&["bounds", "--mu", "0.01", "--m", "100", "--p", "2", "--K", "4"]);
        assert_eq!(code, 0);
        let v = json(&out);
        assert_eq!(v["condition_holds"], true);
        assert!((v["ratio"].as_f64().unwrap() - 0.5446111305958579).abs() < 1e-12);
    }

    #[test]
    fn invalid_input_exits_with_spec_status() {
        assert_eq!(saa(&["sweep", "/nonexistent/spec.json"]).0, EXIT_SPEC);
        assert_eq!(saa(&["solve", "--solver", "LASSO", "--K", "3"]).0, EXIT_SPEC);
        assert_eq!(saa(&["frobnicate"]).0, EXIT_SPEC);
        assert_eq!(saa(&["coherence", "--gen", "1,16"]).0, EXIT_SPEC);
        assert_eq!(saa(&["solve", "--solver", "TSAA", "--p", "3", "--m", "8", "--K", "1"]).0, EXIT_SPEC);
        assert_eq!(saa(&["--help"]).0, 0);
    }

    #[test]
    fn generated_and_stored_dictionaries_agree() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("dict.bin");
        let (code, _) = saa(&["gen-matrix", file.to_str().unwrap(), "--seed", "5", "--m", "16", "--p", "3"]);
        assert_eq!(code, 0);
        let (_, from_file) = saa(&["coherence", file.to_str().unwrap()]);
        let (_, generated) = saa(&["coherence", "--gen", "5,16,3"]);
        assert_eq!(json(&from_file), json(&generated));
        let v = json(&generated);
        let mu = v["mu"].as_f64().unwrap();
        assert!((0.25 - 1e-12..=1.0).contains(&mu));
        assert!(v.get("tsaa_rhs").is_none());
    }

    #[test]
    fn solve_recovers_an_easy_instance() {
        let (code, out) = saa(&["solve", "--m", "64", "--K", "5", "--seed", "3", "--trace"]);
        assert_eq!(code, 0);
        let v = json(&out);
        assert_eq!(v["success"], true);
        assert!(!v["result"]["trace"].as_array().unwrap().is_empty());
    }

    #[test]
    fn sweep_and_few_iteration_csv() {
        let dir = tempfile::tempdir().unwrap();
        let spec = dir.path().join("spec.json");
        std::fs::write(
            &spec,
            r#"{"m": 32, "p": 2, "K_grid": [2, 4], "trials_per_K": 4, "solvers": ["TSAA", "HTP"],
                "master_seed": 1, "timing": false}"#,
        )
        .unwrap();
        let spec = spec.to_str().unwrap();
        let (code, first) = saa(&["sweep", spec]);
        assert_eq!(code, 0);
        assert_eq!(saa(&["sweep", spec]).1, first);
        let mut lines = first.lines();
        assert_eq!(lines.next(), Some("solver,K,trials,successes,success_rate,mean_time_s,mean_iters"));
        assert_eq!(lines.count(), 4);

        let (code, few) = saa(&["few-it", spec, "--budgets", "1,3"]);
        assert_eq!(code, 0);
        assert_eq!(few.lines().count(), 1 + 2 * 2 * 2);
    }

    #[test]
    fn sweep_spec_without_solvers_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let spec = dir.path().join("spec.json");
        std::fs::write(&spec, r#"{"m": 32, "p": 2, "solvers": []}"#).unwrap();
        assert_eq!(saa(&["sweep", spec.to_str().unwrap()]).0, EXIT_SPEC);
    }

    #[test]
    fn verify_lemmas_passes() {
        let (code, out) = saa(&["verify-lemmas", "--trials", "100"]);
        assert_eq!(code, 0, "{out}");
        assert!(out.ends_with("all checks passed\n"));
    }

    #[test]
    fn image_round_trip_writes_pgm_and_trace() {
        let dir = tempfile::tempdir().unwrap();
        let input = dir.path().join("in.pgm");
        let output_path = dir.path().join("out.pgm");
        imaging::write_pgm(&imaging::phantom_sized(16), &input).unwrap();
        let (code, trace) = saa(&[
            "image",
            input.to_str().unwrap(),
            output_path.to_str().unwrap(),
            "--levels",
            "2",
            "--iters",
            "3",
        ]);
        assert_eq!(code, 0);
        assert_eq!(trace.lines().next(), Some("iteration,psnr_db"));
        assert_eq!(trace.lines().count(), 4);
        let rec = imaging::read_pgm(&output_path).unwrap();
        assert_eq!((rec.width, rec.height), (16, 16));
    }
}
