//! The reference experiment: logistic regression with `n = 107` clients and
//! `μ = 10⁻⁴ L`, comparing TAMUNA, Scaffold and GD for several cohort sizes.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::thread;

use fedsim_core::analysis::{solve_reference, ReferencePoint, REFERENCE_TOL};
use fedsim_core::datasets::synthesize_logistic;
use fedsim_core::engine::{
    AlgoParams, Algorithm, FederatedState, RunSummary, Simulation, StopReason,
};
use fedsim_core::objective::Problem;

use crate::config::{MuRule, PartitionRule};
use crate::runner::{load_libsvm, logistic_problem};
use crate::trace::TraceWriter;
use crate::CliError;

pub const CLIENTS: usize = 107;
pub const COHORTS: [usize; 4] = [107, 50, 10, 2];
pub const MU_FACTOR: f64 = 1e-4;

/// Shape of the synthetic stand-in for `a1a`: rows, features and nonzeros
/// per row.
pub const FALLBACK_SHAPE: (usize, usize, usize) = (1605, 123, 14);

#[derive(Debug, Clone)]
pub struct SuiteOptions {
    pub cohorts: Vec<usize>,
    pub target: f64,
    /// Round budget for TAMUNA and Scaffnew.
    pub rounds: u64,
    /// Round budget for Scaffold and GD; `None` gives each cohort the number
    /// of rounds TAMUNA used.
    pub baseline_rounds: Option<u64>,
    pub seed: u64,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        Self {
            cohorts: COHORTS.to_vec(),
            target: 1e-6,
            rounds: 100_000,
            baseline_rounds: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteEntry {
    pub algorithm: &'static str,
    pub s: usize,
    pub local_steps_per_round: f64,
    pub summary: RunSummary,
    pub path: PathBuf,
}

impl SuiteEntry {
    pub fn reached(&self) -> bool {
        self.summary.stop == StopReason::TargetReached
    }
}

/// The experiment problem: `a1a` from `dataset` if given, otherwise the
/// synthetic fallback of the same shape.
pub fn problem(dataset: Option<&Path>, data_seed: u64) -> Result<Problem, CliError> {
    let ds = match dataset {
        Some(path) => load_libsvm(path)?,
        None => {
            let (m, d, nnz) = FALLBACK_SHAPE;
            synthesize_logistic(m, d, nnz, data_seed)?
        }
    };
    logistic_problem(
        &ds,
        CLIENTS,
        MuRule::Relative(MU_FACTOR),
        PartitionRule::Contiguous,
    )
}

fn run_to_file(
    problem: &Problem,
    reference: &ReferencePoint,
    algorithm: Algorithm,
    params: AlgoParams,
    target: f64,
    path: &Path,
) -> Result<RunSummary, CliError> {
    let state = FederatedState::new(problem, &vec![0.0; problem.dim()])?;
    let mut sim = Simulation::new(problem, reference, algorithm, params, state)?;
    let mut writer = TraceWriter::new(BufWriter::new(File::create(path)?))?;
    let mut io_error = None;
    let result = sim.run(target, |t| {
        if io_error.is_none() {
            io_error = writer.row(t).err();
        }
    });
    writer.finish()?;
    if let Some(e) = io_error {
        return Err(e.into());
    }
    Ok(result?)
}

fn run_cohort(
    problem: &Problem,
    reference: &ReferencePoint,
    s: usize,
    opts: &SuiteOptions,
    out_dir: &Path,
) -> Result<Vec<SuiteEntry>, CliError> {
    let base = AlgoParams::recommended(problem, s)?.with_seed(opts.seed);
    let mut entries = Vec::new();
    let mut push = |algorithm: &'static str, local: f64, summary: RunSummary, path: PathBuf| {
        entries.push(SuiteEntry {
            algorithm,
            s,
            local_steps_per_round: local,
            summary,
            path,
        })
    };

    let path = out_dir.join(format!("tamuna_s{s}.csv"));
    let tamuna = run_to_file(
        problem,
        reference,
        Algorithm::Tamuna,
        base.with_rounds(opts.rounds),
        opts.target,
        &path,
    )?;
    let budget = opts.baseline_rounds.unwrap_or(tamuna.last.comm_rounds);
    push("tamuna", 1.0 / base.p, tamuna, path);

    if s == problem.n() {
        let path = out_dir.join(format!("scaffnew_s{s}.csv"));
        let summary = run_to_file(
            problem,
            reference,
            Algorithm::SingleLoop,
            base.with_rounds(opts.rounds),
            opts.target,
            &path,
        )?;
        push("scaffnew", 1.0 / base.p, summary, path);
    }

    // Matched expected local steps: K = ⌊1/p⌋.
    let k = ((1.0 / base.p).floor() as u64).max(1);
    let path = out_dir.join(format!("scaffold_s{s}.csv"));
    let summary = run_to_file(
        problem,
        reference,
        Algorithm::scaffold_default(problem, k),
        base.with_rounds(budget),
        opts.target,
        &path,
    )?;
    push("scaffold", k as f64, summary, path);

    let path = out_dir.join(format!("gd_s{s}.csv"));
    let summary = run_to_file(
        problem,
        reference,
        Algorithm::Gd,
        base.with_rounds(budget),
        opts.target,
        &path,
    )?;
    push("gd", 1.0, summary, path);
    Ok(entries)
}

/// Runs every cohort concurrently and writes one trace per (algorithm, s)
/// plus `summary.csv` into `out_dir`.
pub fn run_suite(
    problem: &Problem,
    out_dir: &Path,
    opts: &SuiteOptions,
) -> Result<Vec<SuiteEntry>, CliError> {
    for &s in &opts.cohorts {
        if s < 2 || s > problem.n() {
            return Err(CliError::Config(format!(
                "cohort size {s} outside 2..={}",
                problem.n()
            )));
        }
    }
    std::fs::create_dir_all(out_dir)?;
    let reference = solve_reference(problem, REFERENCE_TOL)?;
    let results: Vec<Result<Vec<SuiteEntry>, CliError>> = thread::scope(|scope| {
        let handles: Vec<_> = opts
            .cohorts
            .iter()
            .map(|&s| {
                let reference = &reference;
                scope.spawn(move || run_cohort(problem, reference, s, opts, out_dir))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("cohort thread panicked"))
            .collect()
    });
    let mut entries = Vec::new();
    for r in results {
        entries.extend(r?);
    }
    write_summary(&out_dir.join("summary.csv"), &entries)?;
    Ok(entries)
}

fn write_summary(path: &Path, entries: &[SuiteEntry]) -> Result<(), CliError> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(
        out,
        "algorithm,s,local_steps_per_round,comm_rounds,sq_dist_rel,reached_target"
    )?;
    for e in entries {
        writeln!(
            out,
            "{},{},{:e},{},{:e},{}",
            e.algorithm,
            e.s,
            e.local_steps_per_round,
            e.summary.last.comm_rounds,
            e.summary.last.sq_dist_rel,
            e.reached()
        )?;
    }
    out.flush()?;
    Ok(())
}
