use std::path::PathBuf;
use std::process::Command;

use fedsim::config::{AlgorithmKind, DatasetSpec, LocalSteps, MuRule, PartitionRule, Setting};
use fedsim::figure1::{self, SuiteOptions};
use fedsim::runner;
use fedsim::trace::{read_trace, HEADER};
use fedsim::RunConfig;
use proptest::prelude::*;

fn setting() -> impl Strategy<Value = Setting> {
    prop_oneof![
        Just(Setting::Auto),
        (1e-9f64..10.0).prop_map(Setting::Value)
    ]
}

fn config() -> impl Strategy<Value = RunConfig> {
    let algorithm = prop_oneof![
        Just(AlgorithmKind::Tamuna),
        Just(AlgorithmKind::SingleLoop),
        Just(AlgorithmKind::Gd),
        Just(AlgorithmKind::Scaffold)
    ];
    let dataset = prop_oneof![
        "[a-z0-9_/.]{1,20}".prop_map(|p| DatasetSpec::Libsvm {
            path: PathBuf::from(p)
        }),
        (1usize..50, 1.0f64..1e6)
            .prop_map(|(d, kappa)| DatasetSpec::SyntheticQuadratic { d, kappa }),
        (20usize..200, 1usize..20).prop_map(|(d, nnz)| DatasetSpec::SyntheticLogistic {
            d,
            samples: 500,
            nnz
        }),
    ];
    let mu = prop_oneof![
        (0.0f64..1.0).prop_map(MuRule::Absolute),
        (0.0f64..1.0).prop_map(MuRule::Relative)
    ];
    let local = prop_oneof![
        Just(LocalSteps::Geometric),
        (1u64..1000).prop_map(LocalSteps::Fixed)
    ];
    let partition = prop_oneof![
        Just(PartitionRule::Contiguous),
        any::<u64>().prop_map(PartitionRule::Shuffled)
    ];
    (
        (algorithm, dataset, 2usize..300, 0.0f64..=1.0, mu),
        (
            setting(),
            (1e-6f64..=1.0).prop_map(Setting::Value),
            setting(),
            setting(),
            local,
        ),
        (
            any::<u64>(),
            0.0f64..1.0,
            any::<Option<u64>>(),
            any::<u64>(),
            partition,
            "[a-z0-9_]{1,12}\\.csv",
        ),
    )
        .prop_map(
            |(
                (algorithm, dataset, n, frac, mu),
                (gamma, p, chi, eta, local_steps),
                (rounds, target, seed, data_seed, partition, out),
            )| {
                let s = 2 + ((n - 2) as f64 * frac) as usize;
                RunConfig {
                    algorithm,
                    dataset,
                    n,
                    s,
                    mu,
                    gamma,
                    p,
                    chi,
                    eta,
                    local_steps,
                    rounds,
                    target,
                    seed,
                    data_seed,
                    partition,
                    output: PathBuf::from(out),
                }
            },
        )
}

proptest! {
    #[test]
    fn config_round_trips(cfg in config()) {
        let text = cfg.to_string();
        prop_assert_eq!(RunConfig::parse(&text).unwrap(), cfg);
    }
}

fn quadratic_config(dir: &std::path::Path, name: &str) -> RunConfig {
    RunConfig::parse_with_overrides(
        "dataset = synthetic_quadratic\nn = 8\ns = 4\nd = 5\nkappa = 100\nrounds = 300\ntarget = 1e-12\nseed = 3\n",
        &["--output".into(), dir.join(name).display().to_string()],
    )
    .unwrap()
}

#[test]
fn identical_configs_give_identical_trace_files() {
    let dir = tempfile::tempdir().unwrap();
    for algorithm in ["tamuna", "single_loop", "gd", "scaffold"] {
        let mut a = quadratic_config(dir.path(), "a.csv");
        a.algorithm = algorithm.parse().unwrap();
        let mut b = a.clone();
        b.output = dir.path().join("b.csv");
        runner::run(&a).unwrap();
        runner::run(&b).unwrap();
        let ta = std::fs::read(&a.output).unwrap();
        assert_eq!(ta, std::fs::read(&b.output).unwrap(), "{algorithm}");
        let rows = read_trace(std::str::from_utf8(&ta).unwrap()).unwrap();
        assert!(rows
            .iter()
            .all(|r| r.sq_dist.is_finite() && r.lyapunov.is_finite()));
        assert_eq!(rows[0].sq_dist_rel, 1.0);
    }
}

#[test]
fn tamuna_trace_matches_scaffnew_mode_with_full_participation() {
    let dir = tempfile::tempdir().unwrap();
    let base = "dataset = synthetic_logistic\nn = 20\nsamples = 300\nd = 30\nnnz = 5\nmu = relative:1e-3\nrounds = 200\ntarget = 0\nseed = 8\n";
    let run = |algorithm: &str| {
        let out = dir.path().join(format!("{algorithm}.csv"));
        let cfg = RunConfig::parse_with_overrides(
            base,
            &[
                "--algorithm".into(),
                algorithm.into(),
                "--output".into(),
                out.display().to_string(),
            ],
        )
        .unwrap();
        runner::run(&cfg).unwrap();
        read_trace(&std::fs::read_to_string(out).unwrap()).unwrap()
    };
    let a = run("tamuna");
    let b = run("scaffnew");
    assert_eq!(a.len(), 201);
    assert_eq!(a.len(), b.len());
    for (x, y) in a.iter().zip(&b) {
        assert_eq!(x.total_local_steps, y.total_local_steps);
        assert!((x.sq_dist - y.sq_dist).abs() <= 1e-12 * x.sq_dist.max(1e-300) + 1e-300);
    }
}

#[test]
fn gd_on_unit_condition_number_finishes_in_one_round() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("gd.csv");
    let cfg = RunConfig::parse(&format!(
        "algorithm = gd\ndataset = synthetic_quadratic\nkappa = 1\nn = 3\nd = 4\ngamma = 1\ntarget = 1e-12\noutput = {}\n",
        out.display()
    ))
    .unwrap();
    let outcome = runner::run(&cfg).unwrap();
    assert_eq!(outcome.summary.last.comm_rounds, 1);
    assert_eq!(outcome.report.unwrap().c, 0.0);
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_fedsim"))
}

#[test]
fn exit_codes_distinguish_failures() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("t.csv").display().to_string();
    let code = |args: &[&str]| {
        bin()
            .args(args)
            .current_dir(dir.path())
            .output()
            .unwrap()
            .status
            .code()
    };

    assert_eq!(
        code(&[
            "run",
            "--dataset",
            "libsvm",
            "--dataset_path",
            "/definitely/missing",
            "--n",
            "3"
        ]),
        Some(2)
    );
    std::fs::write(dir.path().join("bad.svm"), "1 3:1 2:1\n").unwrap();
    assert_eq!(
        code(&[
            "run",
            "--dataset",
            "libsvm",
            "--dataset_path",
            "bad.svm",
            "--n",
            "2"
        ]),
        Some(2)
    );
    assert_eq!(code(&["run", "--n", "5", "--s", "9"]), Some(3));
    assert_eq!(code(&["run", "--no_such_key", "1"]), Some(3));
    let diverge = [
        "run",
        "--dataset",
        "synthetic_quadratic",
        "--n",
        "4",
        "--d",
        "2",
        "--kappa",
        "10",
        "--eta",
        "50",
        "--rounds",
        "1000",
        "--output",
        &out,
    ];
    assert_eq!(code(&diverge), Some(4));
    let ok = [
        "run",
        "--dataset",
        "synthetic_quadratic",
        "--n",
        "4",
        "--d",
        "2",
        "--kappa",
        "10",
        "--rounds",
        "20",
        "--output",
        &out,
    ];
    assert_eq!(code(&ok), Some(0));
    assert!(std::fs::read_to_string(&out).unwrap().starts_with(HEADER));
}

#[test]
fn config_file_and_env_seed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("run.cfg");
    let write = |name: &str| {
        std::fs::write(
            &cfg_path,
            format!(
                "# quadratic smoke run\ndataset = synthetic_quadratic\nn = 5\ns = 2\nd = 3\nkappa = 50\nrounds = 40\noutput = {name}\n"
            ),
        )
        .unwrap();
    };
    let run = |seed: &str, name: &str| {
        write(name);
        let status = bin()
            .args(["run", "--config", cfg_path.to_str().unwrap()])
            .env("FEDSIM_SEED", seed)
            .current_dir(dir.path())
            .status()
            .unwrap();
        assert!(status.success());
        std::fs::read(dir.path().join(name)).unwrap()
    };
    let a = run("11", "a.csv");
    let b = run("11", "b.csv");
    let c = run("12", "c.csv");
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn rates_command_prints_the_report() {
    let out = bin()
        .args(["rates", "--n", "107", "--s", "50", "--kappa", "1e4"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("p=1.46287"), "{text}");
    assert!(text.contains("chi_max=9.8924"), "{text}");
}

#[test]
fn figure1_suite_writes_one_trace_per_algorithm_and_cohort() {
    let dir = tempfile::tempdir().unwrap();
    let problem = figure1::problem(None, 0).unwrap();
    let opts = SuiteOptions {
        cohorts: vec![2, 10],
        target: 1e-2,
        ..SuiteOptions::default()
    };
    let entries = figure1::run_suite(&problem, dir.path(), &opts).unwrap();
    assert_eq!(entries.len(), 6);
    for e in &entries {
        assert!(e.path.exists());
    }
    let scaffold = entries
        .iter()
        .find(|e| e.algorithm == "scaffold" && e.s == 2)
        .unwrap();
    let tamuna = entries
        .iter()
        .find(|e| e.algorithm == "tamuna" && e.s == 2)
        .unwrap();
    assert_eq!(
        scaffold.local_steps_per_round,
        tamuna.local_steps_per_round.floor()
    );
    assert!(dir.path().join("summary.csv").exists());
}
