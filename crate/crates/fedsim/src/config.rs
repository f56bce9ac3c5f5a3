//! Flat `key = value` run configuration.
//!
//! Blank lines are ignored and `#` starts a comment. Every key can also be
//! given on the command line as `--key value` or `--key=value`; command-line
//! values win over the file.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AlgorithmKind {
    Tamuna,
    SingleLoop,
    Gd,
    Scaffold,
}

impl AlgorithmKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Tamuna => "tamuna",
            Self::SingleLoop => "single_loop",
            Self::Gd => "gd",
            Self::Scaffold => "scaffold",
        }
    }
}

impl FromStr for AlgorithmKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "tamuna" => Ok(Self::Tamuna),
            "single_loop" | "scaffnew" => Ok(Self::SingleLoop),
            "gd" => Ok(Self::Gd),
            "scaffold" => Ok(Self::Scaffold),
            _ => Err(format!("unknown algorithm `{s}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DatasetSpec {
    Libsvm {
        path: PathBuf,
    },
    SyntheticQuadratic {
        d: usize,
        kappa: f64,
    },
    /// Binary sparse rows shaped like `a1a`.
    SyntheticLogistic {
        d: usize,
        samples: usize,
        nnz: usize,
    },
}

/// Regularization of logistic problems.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MuRule {
    Absolute(f64),
    /// `μ = factor · L₀` where `L₀` is the unregularized smoothness constant.
    Relative(f64),
}

/// `Auto` picks the experiment default for the parameter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Setting {
    Auto,
    Value(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LocalSteps {
    Geometric,
    Fixed(u64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PartitionRule {
    Contiguous,
    Shuffled(u64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub algorithm: AlgorithmKind,
    pub dataset: DatasetSpec,
    pub n: usize,
    pub s: usize,
    pub mu: MuRule,
    /// `Auto` is `2/(L+μ)`, or `1/(81 L K)` for Scaffold.
    pub gamma: Setting,
    /// `Auto` is `min(√(n/(sκ)), 1)`.
    pub p: Setting,
    /// `Auto` is the upper bound `n(s−1)/(s(n−1))`.
    pub chi: Setting,
    /// `Auto` is `pχ`.
    pub eta: Setting,
    pub local_steps: LocalSteps,
    pub rounds: u64,
    pub target: f64,
    /// Falls back to `FEDSIM_SEED`, then 0.
    pub seed: Option<u64>,
    pub data_seed: u64,
    pub partition: PartitionRule,
    pub output: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            algorithm: AlgorithmKind::Tamuna,
            dataset: DatasetSpec::SyntheticLogistic {
                d: 123,
                samples: 1605,
                nnz: 14,
            },
            n: 107,
            s: 107,
            mu: MuRule::Relative(1e-4),
            gamma: Setting::Auto,
            p: Setting::Auto,
            chi: Setting::Auto,
            eta: Setting::Auto,
            local_steps: LocalSteps::Geometric,
            rounds: 10_000,
            target: 1e-10,
            seed: None,
            data_seed: 0,
            partition: PartitionRule::Contiguous,
            output: PathBuf::from("trace.csv"),
        }
    }
}

pub const SEED_ENV: &str = "FEDSIM_SEED";

/// Keys accepted in files and as `--key` flags.
pub const KEYS: &[&str] = &[
    "algorithm",
    "dataset",
    "dataset_path",
    "n",
    "s",
    "d",
    "kappa",
    "samples",
    "nnz",
    "mu",
    "gamma",
    "p",
    "chi",
    "eta",
    "local_steps",
    "rounds",
    "target",
    "seed",
    "data_seed",
    "partition",
    "output",
];

fn bad(key: &str, value: &str, why: impl fmt::Display) -> CliError {
    CliError::Config(format!("{key} = {value}: {why}"))
}

fn num<T: FromStr>(key: &str, value: &str) -> Result<T, CliError>
where
    T::Err: fmt::Display,
{
    value.parse().map_err(|e| bad(key, value, e))
}

fn setting(key: &str, value: &str, auto: &str) -> Result<Setting, CliError> {
    if value == auto {
        Ok(Setting::Auto)
    } else {
        num(key, value).map(Setting::Value)
    }
}

fn show_setting(s: Setting, auto: &str) -> String {
    match s {
        Setting::Auto => auto.to_string(),
        Setting::Value(v) => v.to_string(),
    }
}

/// Raw key/value pairs before they are folded into a [`RunConfig`].
#[derive(Debug, Default, Clone)]
struct Entries(Vec<(String, String)>);

impl Entries {
    fn get(&self, key: &str) -> Option<&str> {
        self.0
            .iter()
            .rev()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }
}

impl RunConfig {
    /// Parses a config file body.
    pub fn parse(text: &str) -> Result<Self, CliError> {
        Self::from_entries(&parse_entries(text)?)
    }

    /// Parses a file body, then applies `--key value` overrides.
    pub fn parse_with_overrides(text: &str, overrides: &[String]) -> Result<Self, CliError> {
        let mut entries = parse_entries(text)?;
        entries.0.extend(parse_overrides(overrides)?.0);
        Self::from_entries(&entries)
    }

    fn from_entries(e: &Entries) -> Result<Self, CliError> {
        let mut c = Self::default();
        if let Some(v) = e.get("algorithm") {
            c.algorithm = v.parse().map_err(|why| bad("algorithm", v, why))?;
        }
        let kind = e.get("dataset").unwrap_or("synthetic_logistic");
        c.dataset = match kind {
            "libsvm" => DatasetSpec::Libsvm {
                path: e.get("dataset_path").map(PathBuf::from).ok_or_else(|| {
                    CliError::Config("dataset = libsvm needs dataset_path".into())
                })?,
            },
            "synthetic_quadratic" => DatasetSpec::SyntheticQuadratic {
                d: e.get("d").map_or(Ok(10), |v| num("d", v))?,
                kappa: e.get("kappa").map_or(Ok(100.0), |v| num("kappa", v))?,
            },
            "synthetic_logistic" => DatasetSpec::SyntheticLogistic {
                d: e.get("d").map_or(Ok(123), |v| num("d", v))?,
                samples: e.get("samples").map_or(Ok(1605), |v| num("samples", v))?,
                nnz: e.get("nnz").map_or(Ok(14), |v| num("nnz", v))?,
            },
            other => {
                return Err(bad(
                    "dataset",
                    other,
                    "expected libsvm, synthetic_quadratic or synthetic_logistic",
                ))
            }
        };
        if let Some(v) = e.get("n") {
            c.n = num("n", v)?;
        }
        c.s = match e.get("s") {
            Some(v) => num("s", v)?,
            None => c.n,
        };
        if let Some(v) = e.get("mu") {
            c.mu = match v.split_once(':') {
                Some(("relative", f)) => MuRule::Relative(num("mu", f)?),
                Some(("absolute", f)) => MuRule::Absolute(num("mu", f)?),
                _ => {
                    return Err(bad(
                        "mu",
                        v,
                        "expected relative:<factor> or absolute:<value>",
                    ))
                }
            };
        }
        if let Some(v) = e.get("gamma") {
            c.gamma = setting("gamma", v, "auto")?;
        }
        if let Some(v) = e.get("p") {
            c.p = setting("p", v, "auto")?;
        }
        if let Some(v) = e.get("chi") {
            c.chi = setting("chi", v, "max")?;
        }
        if let Some(v) = e.get("eta") {
            c.eta = setting("eta", v, "auto")?;
        }
        if let Some(v) = e.get("local_steps") {
            c.local_steps = if v == "geometric" {
                LocalSteps::Geometric
            } else {
                LocalSteps::Fixed(num("local_steps", v)?)
            };
        }
        if let Some(v) = e.get("rounds") {
            c.rounds = num("rounds", v)?;
        }
        if let Some(v) = e.get("target") {
            c.target = num("target", v)?;
        }
        if let Some(v) = e.get("seed") {
            c.seed = Some(num("seed", v)?);
        }
        if let Some(v) = e.get("data_seed") {
            c.data_seed = num("data_seed", v)?;
        }
        if let Some(v) = e.get("partition") {
            c.partition = match v.split_once(':') {
                None if v == "contiguous" => PartitionRule::Contiguous,
                Some(("shuffled", seed)) => PartitionRule::Shuffled(num("partition", seed)?),
                _ => {
                    return Err(bad(
                        "partition",
                        v,
                        "expected contiguous or shuffled:<seed>",
                    ))
                }
            };
        }
        if let Some(v) = e.get("output") {
            c.output = PathBuf::from(v);
        }
        c.validate()?;
        Ok(c)
    }

    /// Consistency checks that need no data.
    pub fn validate(&self) -> Result<(), CliError> {
        let fail = |m: String| Err(CliError::Config(m));
        if self.n < 2 {
            return fail(format!("n = {} must be at least 2", self.n));
        }
        if self.s < 2 || self.s > self.n {
            return fail(format!(
                "s = {} must satisfy 2 <= s <= n = {}",
                self.s, self.n
            ));
        }
        if !(self.target.is_finite() && self.target >= 0.0) {
            return fail(format!("target = {} must be finite and >= 0", self.target));
        }
        if self.local_steps == LocalSteps::Fixed(0) {
            return fail("local_steps must be at least 1".into());
        }
        match self.mu {
            MuRule::Absolute(v) | MuRule::Relative(v) if !(v.is_finite() && v >= 0.0) => {
                return fail(format!("mu = {v} must be finite and >= 0"));
            }
            _ => {}
        }
        if let Setting::Value(p) = self.p {
            if !(p > 0.0 && p <= 1.0) {
                return fail(format!("p = {p} must lie in (0, 1]"));
            }
        }
        match &self.dataset {
            DatasetSpec::SyntheticQuadratic { d, kappa } if *d == 0 || kappa.is_nan() || *kappa < 1.0 => {
                fail(format!("synthetic_quadratic needs d >= 1 and kappa >= 1 (d = {d}, kappa = {kappa})"))
            }
            DatasetSpec::SyntheticLogistic { d, samples, nnz } if *nnz == 0 || nnz > d || samples < &self.n => fail(
                format!("synthetic_logistic needs 1 <= nnz <= d and samples >= n (d = {d}, samples = {samples}, nnz = {nnz})"),
            ),
            _ => Ok(()),
        }
    }

    /// The seed to use: the config value, then `FEDSIM_SEED`, then 0.
    pub fn resolved_seed(&self) -> Result<u64, CliError> {
        match self.seed {
            Some(s) => Ok(s),
            None => match std::env::var(SEED_ENV) {
                Ok(v) => num(SEED_ENV, v.trim()),
                Err(_) => Ok(0),
            },
        }
    }
}

impl fmt::Display for RunConfig {
    /// Serializes to the file format; [`RunConfig::parse`] reads it back.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "algorithm = {}", self.algorithm.name())?;
        match &self.dataset {
            DatasetSpec::Libsvm { path } => {
                writeln!(f, "dataset = libsvm")?;
                writeln!(f, "dataset_path = {}", path.display())?;
            }
            DatasetSpec::SyntheticQuadratic { d, kappa } => {
                writeln!(f, "dataset = synthetic_quadratic")?;
                writeln!(f, "d = {d}")?;
                writeln!(f, "kappa = {kappa}")?;
            }
            DatasetSpec::SyntheticLogistic { d, samples, nnz } => {
                writeln!(f, "dataset = synthetic_logistic")?;
                writeln!(f, "d = {d}")?;
                writeln!(f, "samples = {samples}")?;
                writeln!(f, "nnz = {nnz}")?;
            }
        }
        writeln!(f, "n = {}", self.n)?;
        writeln!(f, "s = {}", self.s)?;
        match self.mu {
            MuRule::Absolute(v) => writeln!(f, "mu = absolute:{v}")?,
            MuRule::Relative(v) => writeln!(f, "mu = relative:{v}")?,
        }
        writeln!(f, "gamma = {}", show_setting(self.gamma, "auto"))?;
        writeln!(f, "p = {}", show_setting(self.p, "auto"))?;
        writeln!(f, "chi = {}", show_setting(self.chi, "max"))?;
        writeln!(f, "eta = {}", show_setting(self.eta, "auto"))?;
        match self.local_steps {
            LocalSteps::Geometric => writeln!(f, "local_steps = geometric")?,
            LocalSteps::Fixed(k) => writeln!(f, "local_steps = {k}")?,
        }
        writeln!(f, "rounds = {}", self.rounds)?;
        writeln!(f, "target = {}", self.target)?;
        if let Some(seed) = self.seed {
            writeln!(f, "seed = {seed}")?;
        }
        writeln!(f, "data_seed = {}", self.data_seed)?;
        match self.partition {
            PartitionRule::Contiguous => writeln!(f, "partition = contiguous")?,
            PartitionRule::Shuffled(seed) => writeln!(f, "partition = shuffled:{seed}")?,
        }
        writeln!(f, "output = {}", self.output.display())
    }
}

fn check_key(key: &str) -> Result<(), CliError> {
    if KEYS.contains(&key) {
        Ok(())
    } else {
        Err(CliError::Config(format!("unknown key `{key}`")))
    }
}

fn parse_entries(text: &str) -> Result<Entries, CliError> {
    let mut out = Entries::default();
    for (k, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("line {}: expected key = value", k + 1)))?;
        let key = key.trim();
        check_key(key).map_err(|e| CliError::Config(format!("line {}: {e}", k + 1)))?;
        out.0.push((key.to_string(), value.trim().to_string()));
    }
    Ok(out)
}

fn parse_overrides(args: &[String]) -> Result<Entries, CliError> {
    let mut out = Entries::default();
    let mut it = args.iter();
    while let Some(arg) = it.next() {
        let flag = arg
            .strip_prefix("--")
            .ok_or_else(|| CliError::Config(format!("expected --key, got `{arg}`")))?;
        let (key, value) = match flag.split_once('=') {
            Some((k, v)) => (k.to_string(), v.to_string()),
            None => {
                let v = it
                    .next()
                    .ok_or_else(|| CliError::Config(format!("--{flag} needs a value")))?;
                (flag.to_string(), v.clone())
            }
        };
        check_key(&key)?;
        out.0.push((key, value));
    }
    Ok(out)
}
