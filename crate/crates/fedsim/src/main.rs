use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fedsim::config::SEED_ENV;
use fedsim::figure1::{self, SuiteOptions};
use fedsim::runner;
use fedsim::{CliError, RunConfig};
use fedsim_core::analysis::{choose_p, RateReport};

#[derive(Parser, Debug)]
#[command(
    name = "fedsim",
    version,
    about = "Federated optimization with local training and client sampling"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one algorithm and write a CSV trace.
    ///
    /// Any config key can be overridden with `--key value`.
    Run {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(trailing_var_arg = true, allow_hyphen_values = true)]
        overrides: Vec<String>,
    },
    /// Reproduce the logistic regression comparison for s in {107, 50, 10, 2}.
    Figure1 {
        /// LIBSVM file; a synthetic set of the same shape is used if absent.
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1e-6)]
        target: f64,
        #[arg(long, default_value_t = 100_000)]
        rounds: u64,
        /// Scaffold and GD budget; defaults to TAMUNA's rounds per cohort.
        #[arg(long)]
        baseline_rounds: Option<u64>,
        #[arg(long, env = SEED_ENV, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0)]
        data_seed: u64,
    },
    /// Print the closed-form rate quantities for a problem with μ = 1, L = κ.
    Rates {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        s: usize,
        #[arg(long)]
        kappa: f64,
        /// Defaults to min(√(n/(sκ)), 1).
        #[arg(long)]
        p: Option<f64>,
    },
}

fn print_report(r: &RateReport) {
    println!(
        "# n={} s={} kappa={:e} p={:e} gamma={:e} chi={:e}",
        r.n, r.s, r.kappa, r.p, r.gamma, r.chi
    );
    println!(
        "# nu={:e} omega={:e} chi_max={:e}",
        r.nu, r.omega, r.chi_max
    );
    println!(
        "# gd_factor={:e} control_factor={:e} c={:e}",
        r.gd_factor, r.control_factor, r.c
    );
    println!(
        "# expected_local_steps={:e} iteration_complexity={:e} communication_complexity={:e}",
        r.expected_local_steps, r.iteration_complexity, r.communication_complexity
    );
}

fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run { config, overrides } => {
            let text = match &config {
                Some(path) => std::fs::read_to_string(path)
                    .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?,
                None => String::new(),
            };
            let cfg = RunConfig::parse_with_overrides(&text, &overrides)?;
            let prepared = runner::prepare(&cfg)?;
            if let Some(r) = &prepared.report {
                print_report(r);
            }
            let file = std::fs::File::create(&cfg.output)?;
            let summary = runner::run_prepared(&prepared, std::io::BufWriter::new(file))?;
            println!(
                "{:?} after {} communication rounds, sq_dist_rel={:e}, trace in {}",
                summary.stop,
                summary.last.comm_rounds,
                summary.last.sq_dist_rel,
                cfg.output.display()
            );
        }
        Command::Figure1 {
            dataset,
            out,
            target,
            rounds,
            baseline_rounds,
            seed,
            data_seed,
        } => {
            let problem = figure1::problem(dataset.as_deref(), data_seed)?;
            let opts = SuiteOptions {
                target,
                rounds,
                baseline_rounds,
                seed,
                ..SuiteOptions::default()
            };
            for e in figure1::run_suite(&problem, &out, &opts)? {
                println!(
                    "{:<9} s={:<3} rounds={:<7} sq_dist_rel={:e} {}",
                    e.algorithm,
                    e.s,
                    e.summary.last.comm_rounds,
                    e.summary.last.sq_dist_rel,
                    e.path.display()
                );
            }
        }
        Command::Rates { n, s, kappa, p } => {
            let conf = |e: fedsim_core::Error| CliError::Config(e.to_string());
            let p = match p {
                Some(p) => p,
                None => choose_p(n, s, kappa).map_err(conf)?,
            };
            print_report(&RateReport::for_experiment(n, s, kappa, p).map_err(conf)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
