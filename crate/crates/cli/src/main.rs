//! Command-line front end for the rate-distortion-perception workbench.
//!
//! Subcommands wrap the library crate one to one: `solve` and `curve` call
//! the constrained-rate solver, `simulate` runs the codebook scheme,
//! `softcover` tabulates output-law synthesis gaps, and `converse` audits
//! small codes against the solver bound.
//!
//! Output contract: the primary artifact goes to `--out` when given
//! (written atomically), otherwise to standard output. Every run also
//! emits a [`io::RunManifest`]; with `--out` it lands next to the artifact
//! as `<stem>.manifest.json`, otherwise it goes to standard error. Equal
//! manifests guarantee byte-identical artifacts. All numbers print in
//! round-trip precision.
//!
//! Exit codes: 0 success, 1 input error, 2 finished without convergence
//! (solutions are still printed), 3 infeasible budgets.

mod io;
mod problem;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde_json::json;

use rdp_core::coding::{monte_carlo, run_trial, CodeConfig, Codebook};
use rdp_core::converse::{exhaustive_check, sampled_check, ConverseSummary};
use rdp_core::prob::Channel;
use rdp_core::soft_covering::rate_sweep;
use rdp_core::solver::{
    solve_conditional_rd, solve_empirical_rdp, solve_perfect_realism, solve_strong_rdp,
    RdpSolution, SolverOptions,
};
use rdp_core::Error as CoreError;

use crate::io::{manifest_path, parse_grid, write_atomic, RunManifest};
use crate::problem::ProblemFile;

#[derive(Parser)]
#[command(
    name = "rdp",
    version,
    about = "Finite-alphabet rate-distortion-perception workbench"
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Solve one budget point and print the solution as JSON
    Solve(SolveArgs),
    /// Sweep a budget grid and emit the rate surface as CSV
    Curve(CurveArgs),
    /// Monte Carlo run of the random-codebook scheme from the problem file
    Simulate(SimulateArgs),
    /// Exact synthesis gap of seeded codebooks across block lengths
    Softcover(SoftcoverArgs),
    /// Audit small deterministic codes against the solver bound
    Converse(ConverseArgs),
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum Flavor {
    /// distortion only, marginal unconstrained
    Rd,
    /// distortion plus empirical-distribution budget
    Empirical,
    /// distortion with an exactly matching reconstruction marginal
    Realism,
    /// lower bound for the order-sensitive block constraint
    StrongBound,
}

impl Flavor {
    fn name(self) -> &'static str {
        match self {
            Flavor::Rd => "rd",
            Flavor::Empirical => "empirical",
            Flavor::Realism => "realism",
            Flavor::StrongBound => "strong-bound",
        }
    }
}

#[derive(Args)]
struct SolveArgs {
    /// Problem file (JSON)
    #[arg(long)]
    problem: PathBuf,
    /// Expected distortion budget
    #[arg(long)]
    delta: f64,
    /// Total-variation budget
    #[arg(long, default_value_t = 1.0)]
    pi: f64,
    #[arg(long, value_enum, default_value_t = Flavor::Empirical)]
    flavor: Flavor,
    /// Convergence gap target in bits
    #[arg(long)]
    tol: Option<f64>,
    /// Also write the solution JSON here
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CurveArgs {
    #[arg(long)]
    problem: PathBuf,
    /// Distortion grid, `V` or `A:B:STEP` inclusive
    #[arg(long)]
    grid_delta: String,
    /// Total-variation grid, `V` or `A:B:STEP` inclusive
    #[arg(long)]
    grid_pi: String,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    /// Problem file with a scheme block
    #[arg(long)]
    problem: PathBuf,
    /// Block length
    #[arg(long)]
    n: usize,
    /// Message rate, bits per symbol
    #[arg(long)]
    rate: f64,
    /// Common-randomness rate, bits per symbol
    #[arg(long, default_value_t = 0.0)]
    r0: f64,
    #[arg(long)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Report JSON path; the trial table lands at `<stem>.trials.csv`
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SoftcoverArgs {
    /// Problem file with a scheme block
    #[arg(long)]
    problem: PathBuf,
    /// Largest block length; the table covers 1..=n
    #[arg(long)]
    n: usize,
    /// Description rate, bits per symbol
    #[arg(long)]
    rate: f64,
    /// Number of independently seeded codebooks per cell
    #[arg(long, default_value_t = 50)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum ConverseMode {
    Exhaustive,
    Sampled,
}

#[derive(Args)]
struct ConverseArgs {
    #[arg(long)]
    problem: PathBuf,
    /// Block length of the audited codes
    #[arg(long)]
    n: usize,
    /// Message count of the audited codes
    #[arg(long, default_value_t = 2)]
    messages: usize,
    #[arg(long, value_enum)]
    mode: ConverseMode,
    /// Sample count for `--mode sampled`
    #[arg(long, default_value_t = 10_000)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Audit slack on `rate >= bound`
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Failure with a process exit code per the output contract.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn input(message: impl Into<String>) -> Self {
        Failure {
            code: 1,
            message: message.into(),
        }
    }

    fn from_core(e: CoreError) -> Self {
        let code = match &e {
            CoreError::Infeasible(_) => 3,
            CoreError::AllTrialsFailed => 2,
            _ => 1,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

impl From<String> for Failure {
    fn from(message: String) -> Self {
        Failure::input(message)
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(code) => code,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn run() -> Result<ExitCode, Failure> {
    if let Ok(v) = std::env::var("RDP_THREADS") {
        let threads: usize = v
            .parse()
            .ok()
            .filter(|&t| t >= 1)
            .ok_or_else(|| Failure::input("RDP_THREADS must be a positive integer"))?;
        // a second initialization in-process is harmless
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global();
    }
    let cli = Cli::try_parse().map_err(|e| Failure {
        code: 1,
        message: e.render().to_string(),
    })?;
    match cli.command {
        Cmd::Solve(a) => cmd_solve(a),
        Cmd::Curve(a) => cmd_curve(a),
        Cmd::Simulate(a) => cmd_simulate(a),
        Cmd::Softcover(a) => cmd_softcover(a),
        Cmd::Converse(a) => cmd_converse(a),
    }
}

fn solver_options(tol: Option<f64>) -> Result<SolverOptions, Failure> {
    let mut opts = SolverOptions::default();
    if let Some(t) = tol {
        if !(t.is_finite() && t > 0.0) {
            return Err(Failure::input(format!(
                "--tol must be positive and finite, got {t}"
            )));
        }
        opts.gap_target = t;
    }
    Ok(opts)
}

/// Primary artifact to `--out` or stdout; manifest to the sibling file or
/// stderr.
fn emit(out: Option<&Path>, artifact: &str, manifest: &RunManifest) -> Result<(), Failure> {
    match out {
        Some(path) => {
            write_atomic(path, artifact.as_bytes())
                .map_err(|e| Failure::input(format!("cannot write {}: {e}", path.display())))?;
            let mp = manifest_path(path);
            write_atomic(&mp, manifest.render().as_bytes())
                .map_err(|e| Failure::input(format!("cannot write {}: {e}", mp.display())))?;
        }
        None => {
            print!("{artifact}");
            eprint!("{}", manifest.render());
        }
    }
    Ok(())
}

#[derive(serde::Serialize)]
struct SolutionOut {
    rate: f64,
    distortion: f64,
    perception: f64,
    lambda: f64,
    nu: f64,
    dual_bound: f64,
    gap: f64,
    converged: bool,
    inner_iterations: usize,
    /// reconstruction rows per `(x, z)` cell, x-major; null where the
    /// source cell has no mass
    kernel: Vec<Option<Vec<f64>>>,
}

fn kernel_rows(ch: &Channel) -> Vec<Option<Vec<f64>>> {
    (0..ch.n_rows())
        .map(|r| ch.try_row(r).ok().map(|row| row.to_vec()))
        .collect()
}

impl SolutionOut {
    fn new(sol: &RdpSolution) -> Self {
        SolutionOut {
            rate: sol.rate,
            distortion: sol.distortion,
            perception: sol.perception,
            lambda: sol.lambda,
            nu: sol.nu,
            dual_bound: sol.dual_bound,
            gap: sol.gap,
            converged: sol.converged,
            inner_iterations: sol.inner_iterations,
            kernel: kernel_rows(&sol.kernel),
        }
    }
}

fn pretty(v: &impl serde::Serialize) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s
}

fn cmd_solve(args: SolveArgs) -> Result<ExitCode, Failure> {
    let (pf, digest) = ProblemFile::load(&args.problem)?;
    let prob = pf.rdp_problem()?;
    let opts = solver_options(args.tol)?;
    let sol = match args.flavor {
        Flavor::Rd => solve_conditional_rd(&prob, args.delta, &opts),
        Flavor::Empirical => solve_empirical_rdp(&prob, args.delta, args.pi, &opts),
        Flavor::Realism => solve_perfect_realism(&prob, args.delta, &opts),
        Flavor::StrongBound => solve_strong_rdp(&prob, args.delta, args.pi, &opts),
    }
    .map_err(Failure::from_core)?;

    let manifest = RunManifest::new(
        "solve",
        digest,
        None,
        json!({
            "delta": args.delta,
            "pi": args.pi,
            "flavor": args.flavor.name(),
            "gap_target": opts.gap_target,
            "constraint_tol": opts.constraint_tol,
        }),
    );
    let body = pretty(&SolutionOut::new(&sol));
    // the solution always shows on stdout, file or not
    if args.out.is_some() {
        print!("{body}");
    }
    emit(args.out.as_deref(), &body, &manifest)?;
    Ok(if sol.converged {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(2)
    })
}

fn cmd_curve(args: CurveArgs) -> Result<ExitCode, Failure> {
    let (pf, digest) = ProblemFile::load(&args.problem)?;
    let prob = pf.rdp_problem()?;
    let opts = solver_options(args.tol)?;
    let deltas = parse_grid("--grid-delta", &args.grid_delta)?;
    let pis = parse_grid("--grid-pi", &args.grid_pi)?;

    let cells: Vec<(f64, f64)> = deltas
        .iter()
        .flat_map(|&d| pis.iter().map(move |&p| (d, p)))
        .collect();
    let rows: Vec<Result<String, CoreError>> = cells
        .par_iter()
        .map(|&(delta, pi)| match solve_empirical_rdp(&prob, delta, pi, &opts) {
            Ok(sol) => Ok((
                delta,
                pi,
                sol.rate,
                sol.distortion,
                sol.perception,
                sol.converged,
            )),
            // unattainable budgets keep their grid row
            Err(CoreError::Infeasible(_)) => {
                Ok((delta, pi, f64::INFINITY, f64::NAN, f64::NAN, true))
            }
            Err(e) => Err(e),
        })
        .map(|r| r.map(|(d, p, rate, ad, tv, c)| format!("{d},{p},{rate},{ad},{tv},{c}\n")))
        .collect();

    let mut csv = String::from("delta,pi,rate,achieved_distortion,achieved_tv,converged\n");
    let mut all_converged = true;
    for row in rows {
        let row = row.map_err(Failure::from_core)?;
        all_converged &= row.trim_end().ends_with("true");
        csv.push_str(&row);
    }

    let manifest = RunManifest::new(
        "curve",
        digest,
        None,
        json!({
            "grid_delta": deltas,
            "grid_pi": pis,
            "gap_target": opts.gap_target,
            "constraint_tol": opts.constraint_tol,
        }),
    );
    emit(args.out.as_deref(), &csv, &manifest)?;
    Ok(if all_converged {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(2)
    })
}

fn cmd_simulate(args: SimulateArgs) -> Result<ExitCode, Failure> {
    let (pf, digest) = ProblemFile::load(&args.problem)?;
    let scheme = pf.scheme_spec()?;
    let config = CodeConfig {
        n: args.n,
        rate: args.rate,
        r0: args.r0,
        master_seed: args.seed,
        trials: args.trials,
    };
    let cb = Codebook::new(&scheme, config, args.seed).map_err(Failure::from_core)?;
    let report = monte_carlo(&cb).map_err(Failure::from_core)?;

    let mut csv = String::from("trial,distortion,empirical_tv,message,m0\n");
    for t in 0..args.trials as u64 {
        match run_trial(&cb, t) {
            Ok(r) => csv.push_str(&format!(
                "{t},{},{},{},{}\n",
                r.distortion, r.empirical_tv, r.message, r.common_randomness
            )),
            // unencodable blocks show up in the report's failure count,
            // the row table keeps reconstructions only
            Err(CoreError::EncodingFailure) => {}
            Err(e) => return Err(Failure::from_core(e)),
        }
    }

    let manifest = RunManifest::new(
        "simulate",
        digest,
        Some(args.seed),
        json!({
            "n": args.n,
            "rate": args.rate,
            "r0": args.r0,
            "trials": args.trials,
        }),
    );
    let body = pretty(&report);
    print!("{body}");
    let trials_path = args.out.with_extension("trials.csv");
    write_atomic(&trials_path, csv.as_bytes())
        .map_err(|e| Failure::input(format!("cannot write {}: {e}", trials_path.display())))?;
    emit(Some(&args.out), &body, &manifest)?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_softcover(args: SoftcoverArgs) -> Result<ExitCode, Failure> {
    let (pf, digest) = ProblemFile::load(&args.problem)?;
    let spec = pf.synthesis_spec()?;
    if args.n == 0 {
        return Err(Failure::input("--n must be at least 1"));
    }
    // the side sequence cycles through the side alphabet
    let pattern: Vec<usize> = (0..spec.w_size()).collect();
    let ns: Vec<usize> = (1..=args.n).collect();
    let seeds: Vec<u64> = (0..args.trials as u64).map(|i| args.seed + i).collect();
    let rows =
        rate_sweep(&spec, &pattern, &ns, &[args.rate], &seeds).map_err(Failure::from_core)?;

    let mut csv = String::from("n,R,threshold,mean_tv,seed_count\n");
    for r in &rows {
        csv.push_str(&format!(
            "{},{},{},{},{}\n",
            r.n,
            r.rate,
            r.threshold,
            r.mean_tv,
            seeds.len()
        ));
    }

    let manifest = RunManifest::new(
        "softcover",
        digest,
        Some(args.seed),
        json!({
            "n": args.n,
            "rate": args.rate,
            "trials": args.trials,
        }),
    );
    emit(args.out.as_deref(), &csv, &manifest)?;
    Ok(ExitCode::SUCCESS)
}

#[derive(serde::Serialize)]
struct ViolationOut {
    rate: f64,
    distortion: f64,
    perception: f64,
    solver_bound: f64,
}

#[derive(serde::Serialize)]
struct ConverseOut {
    codes_checked: usize,
    solver_calls: usize,
    worst_margin: f64,
    violations: Vec<ViolationOut>,
}

impl ConverseOut {
    fn new(s: &ConverseSummary) -> Self {
        ConverseOut {
            codes_checked: s.codes,
            solver_calls: s.solver_calls,
            worst_margin: s.worst_margin,
            violations: s
                .violations
                .iter()
                .map(|v| ViolationOut {
                    rate: v.rate,
                    distortion: v.distortion,
                    perception: v.perception,
                    solver_bound: v.bound,
                })
                .collect(),
        }
    }
}

fn cmd_converse(args: ConverseArgs) -> Result<ExitCode, Failure> {
    let (pf, digest) = ProblemFile::load(&args.problem)?;
    let prob = pf.rdp_problem()?;
    let summary = match args.mode {
        ConverseMode::Exhaustive => exhaustive_check(&prob, args.n, args.messages, args.tol),
        ConverseMode::Sampled => {
            sampled_check(&prob, args.n, args.messages, args.trials, args.seed, args.tol)
        }
    }
    .map_err(Failure::from_core)?;

    let mode = match args.mode {
        ConverseMode::Exhaustive => "exhaustive",
        ConverseMode::Sampled => "sampled",
    };
    let manifest = RunManifest::new(
        "converse",
        digest,
        Some(args.seed),
        json!({
            "n": args.n,
            "messages": args.messages,
            "mode": mode,
            "trials": args.trials,
            "tol": args.tol,
        }),
    );
    let body = pretty(&ConverseOut::new(&summary));
    if args.out.is_some() {
        print!("{body}");
    }
    emit(args.out.as_deref(), &body, &manifest)?;
    Ok(ExitCode::SUCCESS)
}
