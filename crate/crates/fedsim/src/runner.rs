//! Turns a [`RunConfig`] into a problem, parameters and a trace file.

use std::fs::File;
use std::io::{BufWriter, Write};

use fedsim_core::analysis::{
    chi_max, choose_p, solve_reference, RateReport, ReferencePoint, REFERENCE_TOL,
};
use fedsim_core::datasets::{
    logistic_problem_from, parse_libsvm, partition, synthesize_logistic, synthesize_quadratic,
    SparseDataset,
};
use fedsim_core::engine::{AlgoParams, Algorithm, FederatedState, RunSummary, Simulation};
use fedsim_core::objective::Problem;

use crate::config::{
    AlgorithmKind, DatasetSpec, LocalSteps, MuRule, PartitionRule, RunConfig, Setting,
};
use crate::trace::TraceWriter;
use crate::CliError;

/// Reads a LIBSVM file; any failure maps to the dataset exit code.
pub fn load_libsvm(path: &std::path::Path) -> Result<SparseDataset, CliError> {
    let bytes =
        std::fs::read(path).map_err(|e| CliError::Dataset(format!("{}: {e}", path.display())))?;
    parse_libsvm(&bytes).map_err(|e| CliError::Dataset(format!("{}: {e}", path.display())))
}

/// A logistic problem from a dataset, regularized per `mu`.
pub fn logistic_problem(
    ds: &SparseDataset,
    n: usize,
    mu: MuRule,
    partition_rule: PartitionRule,
) -> Result<Problem, CliError> {
    if ds.len() < n {
        return Err(CliError::Dataset(format!(
            "{} rows cannot feed {n} clients",
            ds.len()
        )));
    }
    let shuffle = match partition_rule {
        PartitionRule::Contiguous => None,
        PartitionRule::Shuffled(seed) => Some(seed),
    };
    let bare = partition(ds, n, 0.0, shuffle).map_err(|e| CliError::Dataset(e.to_string()))?;
    let mut l0: f64 = 0.0;
    for c in &bare {
        l0 = l0.max(c.smoothness_constant()?);
    }
    let mu = match mu {
        MuRule::Absolute(v) => v,
        MuRule::Relative(f) => f * l0,
    };
    Ok(logistic_problem_from(bare, l0, mu)?)
}

pub fn build_problem(cfg: &RunConfig) -> Result<Problem, CliError> {
    match &cfg.dataset {
        DatasetSpec::Libsvm { path } => {
            logistic_problem(&load_libsvm(path)?, cfg.n, cfg.mu, cfg.partition)
        }
        DatasetSpec::SyntheticQuadratic { d, kappa } => {
            synthesize_quadratic(cfg.n, *d, *kappa, cfg.data_seed)
                .map_err(|e| CliError::Config(e.to_string()))
        }
        DatasetSpec::SyntheticLogistic { d, samples, nnz } => {
            let ds = synthesize_logistic(*samples, *d, *nnz, cfg.data_seed)
                .map_err(|e| CliError::Config(e.to_string()))?;
            logistic_problem(&ds, cfg.n, cfg.mu, cfg.partition)
        }
    }
}

/// Everything a run needs besides the output file.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub problem: Problem,
    pub reference: ReferencePoint,
    pub algorithm: Algorithm,
    pub params: AlgoParams,
    /// Absent when `μ = 0`.
    pub report: Option<RateReport>,
    /// Stop once `sq_dist_rel` falls to this value.
    pub target: f64,
}

/// Resolves `auto` settings against the problem.
///
/// `γ = 2/(L+μ)` (`1/L` when `μ = 0`); `p = min(√(n/(sκ)), 1)`; `χ` at its
/// upper bound; `η = pχ`. Fixed local steps replace `p` by `1/K`. Scaffold
/// runs `K` local steps (`K = ⌊1/p⌋` unless fixed) with stepsize
/// `1/(81 L K)` unless `gamma` is given.
pub fn resolve(cfg: &RunConfig, problem: &Problem) -> Result<(Algorithm, AlgoParams), CliError> {
    let conf = |e: fedsim_core::Error| CliError::Config(e.to_string());
    let (n, s) = (problem.n(), cfg.s);
    let l = problem.smoothness();
    let mu = problem.mu();
    let p = match cfg.p {
        Setting::Value(p) => p,
        Setting::Auto => match problem.kappa() {
            Some(kappa) => choose_p(n, s, kappa).map_err(conf)?,
            None => {
                return Err(CliError::Config(
                    "p = auto needs mu > 0; give p explicitly".into(),
                ))
            }
        },
    };
    let chi = match cfg.chi {
        Setting::Value(c) => c,
        Setting::Auto => chi_max(n, s).map_err(conf)?,
    };
    let default_gamma = if mu > 0.0 { 2.0 / (l + mu) } else { 1.0 / l };
    let algo_gamma = match (cfg.algorithm, cfg.gamma) {
        (AlgorithmKind::Scaffold, _) | (_, Setting::Auto) => default_gamma,
        (_, Setting::Value(g)) => g,
    };
    let mut params = AlgoParams::new(problem, algo_gamma, p, chi, s)
        .map_err(conf)?
        .with_rounds(cfg.rounds)
        .with_seed(cfg.resolved_seed()?);
    if let LocalSteps::Fixed(k) = cfg.local_steps {
        params = params.with_fixed_local_steps(k).map_err(conf)?;
    }
    if let Setting::Value(eta) = cfg.eta {
        params = params.with_eta(eta).map_err(conf)?;
    }
    let algorithm = match cfg.algorithm {
        AlgorithmKind::Tamuna => Algorithm::Tamuna,
        AlgorithmKind::SingleLoop => Algorithm::SingleLoop,
        AlgorithmKind::Gd => Algorithm::Gd,
        AlgorithmKind::Scaffold => {
            let k = match cfg.local_steps {
                LocalSteps::Fixed(k) => k,
                LocalSteps::Geometric => ((1.0 / p).floor() as u64).max(1),
            };
            match cfg.gamma {
                Setting::Auto => Algorithm::scaffold_default(problem, k),
                Setting::Value(g) => Algorithm::Scaffold {
                    local_steps: k,
                    stepsize: g,
                },
            }
        }
    };
    Ok((algorithm, params))
}

pub fn prepare(cfg: &RunConfig) -> Result<Prepared, CliError> {
    cfg.validate()?;
    let problem = build_problem(cfg)?;
    prepare_with(cfg, problem)
}

/// Like [`prepare`] for an already built problem.
pub fn prepare_with(cfg: &RunConfig, problem: Problem) -> Result<Prepared, CliError> {
    if problem.n() != cfg.n {
        return Err(CliError::Config(format!(
            "problem has {} clients, config says {}",
            problem.n(),
            cfg.n
        )));
    }
    let (algorithm, params) = resolve(cfg, &problem)?;
    let reference = solve_reference(&problem, REFERENCE_TOL)?;
    let report = match problem.kappa() {
        // Rates are stated on the problem rescaled to μ = 1.
        Some(kappa) => Some(
            RateReport::new(
                cfg.n,
                cfg.s,
                kappa,
                params.p,
                params.gamma * problem.mu(),
                params.chi,
            )
            .map_err(|e| CliError::Config(e.to_string()))?,
        ),
        None => None,
    };
    Ok(Prepared {
        problem,
        reference,
        algorithm,
        params,
        report,
        target: cfg.target,
    })
}

/// Runs from `x⁰ = 0` with zero controls, streaming rows to `out`.
pub fn run_prepared<W: Write>(prepared: &Prepared, out: W) -> Result<RunSummary, CliError> {
    let state = FederatedState::new(&prepared.problem, &vec![0.0; prepared.problem.dim()])?;
    let mut sim = Simulation::new(
        &prepared.problem,
        &prepared.reference,
        prepared.algorithm,
        prepared.params,
        state,
    )?;
    let mut writer = TraceWriter::new(out)?;
    let mut io_error = None;
    let result = sim.run(prepared.target, |t| {
        if io_error.is_none() {
            io_error = writer.row(t).err();
        }
    });
    // Keep the rows written before a divergence.
    writer.finish()?;
    if let Some(e) = io_error {
        return Err(e.into());
    }
    Ok(result?)
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub summary: RunSummary,
    pub report: Option<RateReport>,
}

/// Builds everything from `cfg` and writes the trace to `cfg.output`.
pub fn run(cfg: &RunConfig) -> Result<RunOutcome, CliError> {
    let prepared = prepare(cfg)?;
    let file = File::create(&cfg.output)
        .map_err(|e| std::io::Error::new(e.kind(), format!("{}: {e}", cfg.output.display())))?;
    let summary = run_prepared(&prepared, BufWriter::new(file))?;
    Ok(RunOutcome {
        summary,
        report: prepared.report,
    })
}
