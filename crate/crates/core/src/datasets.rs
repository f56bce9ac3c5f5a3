//! LIBSVM text parsing, client partitioning and synthetic problems.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Write;

use crate::objective::{ClientObjective, Logistic, Problem, Quadratic, Sample, SparseVector};
use crate::randomness::{stream, SeededGenerator};
use crate::{Error, Result};

/// A labeled row. Feature indices are one-based and strictly increasing, as
/// in the file format.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledRow {
    pub label: f64,
    pub features: Vec<(usize, f64)>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SparseDataset {
    rows: Vec<LabeledRow>,
    dim: usize,
}

impl SparseDataset {
    /// Validates rows and infers the dimension from the largest index.
    pub fn new(rows: Vec<LabeledRow>) -> Result<Self> {
        let mut dim = 0;
        for (k, row) in rows.iter().enumerate() {
            if row.label != 1.0 && row.label != -1.0 {
                return Err(Error::Parse {
                    line: k + 1,
                    reason: format!("label {} is not -1 or +1", row.label),
                });
            }
            if row.features.first().is_some_and(|(i, _)| *i == 0)
                || row.features.windows(2).any(|w| w[0].0 >= w[1].0)
            {
                return Err(Error::Parse {
                    line: k + 1,
                    reason: "indices not strictly increasing".into(),
                });
            }
            dim = dim.max(row.features.last().map_or(0, |f| f.0));
        }
        Ok(Self { rows, dim })
    }

    pub fn rows(&self) -> &[LabeledRow] {
        &self.rows
    }

    /// Model dimension `d` (largest feature index seen).
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of rows `M`.
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Renders the dataset back to LIBSVM text, one row per line.
    pub fn to_libsvm(&self) -> String {
        let mut out = String::new();
        for row in &self.rows {
            out.push_str(if row.label > 0.0 { "+1" } else { "-1" });
            for (i, v) in &row.features {
                let _ = write!(out, " {i}:{v}");
            }
            out.push('\n');
        }
        out
    }

    fn sample(&self, k: usize) -> Sample {
        let row = &self.rows[k];
        let (indices, values) = row.features.iter().map(|(i, v)| (i - 1, *v)).unzip();
        Sample {
            label: row.label,
            features: SparseVector::new(indices, values)
                .expect("rows are validated at construction"),
        }
    }
}

/// Parses LIBSVM text: `<label> <idx>:<val> ...` per line, `#` starts a
/// comment, blank lines are skipped. Labels `+1`, `1`, `-1` and `0` are
/// accepted and `0` maps to `-1`.
pub fn parse_libsvm(text: &[u8]) -> Result<SparseDataset> {
    let mut rows = Vec::new();
    let mut dim = 0;
    for (k, raw) in text.split(|b| *b == b'\n').enumerate() {
        let line = k + 1;
        let raw = core::str::from_utf8(raw).map_err(|_| Error::Parse {
            line,
            reason: "invalid UTF-8".into(),
        })?;
        let content = raw.split('#').next().unwrap_or_default();
        let mut tokens = content.split_ascii_whitespace();
        let Some(label_tok) = tokens.next() else {
            continue;
        };
        let label = match label_tok.parse::<f64>() {
            Ok(1.0) => 1.0,
            Ok(v) if v == -1.0 || v == 0.0 => -1.0,
            Ok(v) => {
                return Err(Error::Parse {
                    line,
                    reason: format!("label {v} is not one of -1, 0, +1"),
                })
            }
            Err(_) => {
                return Err(Error::Parse {
                    line,
                    reason: format!("non-numeric label '{label_tok}'"),
                })
            }
        };
        let mut features: Vec<(usize, f64)> = Vec::new();
        for tok in tokens {
            let malformed = || Error::Parse {
                line,
                reason: format!("malformed feature token '{tok}'"),
            };
            let (idx, val) = tok.split_once(':').ok_or_else(malformed)?;
            let idx: usize = idx.parse().map_err(|_| malformed())?;
            let val: f64 = val.parse().map_err(|_| malformed())?;
            if idx == 0 || !val.is_finite() {
                return Err(malformed());
            }
            if features.last().is_some_and(|(prev, _)| *prev >= idx) {
                return Err(Error::Parse {
                    line,
                    reason: "indices not strictly increasing".into(),
                });
            }
            features.push((idx, val));
        }
        dim = dim.max(features.last().map_or(0, |f| f.0));
        rows.push(LabeledRow { label, features });
    }
    Ok(SparseDataset { rows, dim })
}

/// Block sizes for splitting `m` rows over `n` clients: `⌊m/n⌋` each, the
/// first `m mod n` clients receiving one extra row.
pub fn partition_sizes(m: usize, n: usize) -> Result<Vec<usize>> {
    if n < 2 {
        return Err(Error::InvalidCohort { n, s: n });
    }
    if m < n {
        return Err(Error::TooFewSamples {
            samples: m,
            clients: n,
        });
    }
    let (base, extra) = (m / n, m % n);
    Ok((0..n).map(|i| base + usize::from(i < extra)).collect())
}

/// Row indices held by each client. Contiguous blocks in file order, or
/// blocks of a seeded permutation when `shuffle_seed` is given.
pub fn partition_rows(m: usize, n: usize, shuffle_seed: Option<u64>) -> Result<Vec<Vec<usize>>> {
    let sizes = partition_sizes(m, n)?;
    let mut order: Vec<usize> = (0..m).collect();
    if let Some(seed) = shuffle_seed {
        SeededGenerator::with_stream(seed, stream::DATA).shuffle(&mut order);
    }
    let mut blocks = Vec::with_capacity(n);
    let mut start = 0;
    for size in sizes {
        blocks.push(order[start..start + size].to_vec());
        start += size;
    }
    Ok(blocks)
}

/// Splits the dataset into `n` logistic clients with regularization `mu`.
pub fn partition(
    ds: &SparseDataset,
    n: usize,
    mu: f64,
    shuffle_seed: Option<u64>,
) -> Result<Vec<ClientObjective>> {
    partition_rows(ds.len(), n, shuffle_seed)?
        .into_iter()
        .map(|block| {
            let samples = block.into_iter().map(|k| ds.sample(k)).collect();
            Logistic::new(ds.dim(), samples, mu).map(ClientObjective::Logistic)
        })
        .collect()
}

/// Heterogeneous diagonal quadratics `f_i(x) = ½ (x − b_i)ᵀ D_i (x − b_i)`
/// with curvatures log-uniform in `[1, kappa]` and offsets uniform in
/// `[−1, 1]^d`. Client 0 attains curvature 1 and client 1 attains `kappa` on
/// the first coordinate, so `μ = 1` and `L = kappa` exactly.
pub fn synthesize_quadratic(n: usize, d: usize, kappa: f64, seed: u64) -> Result<Problem> {
    if n < 2 {
        return Err(Error::InvalidProblem(format!("need n >= 2, got {n}")));
    }
    if d == 0 {
        return Err(Error::InvalidProblem("need d >= 1".into()));
    }
    if !(kappa.is_finite() && kappa >= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "kappa={kappa} must be >= 1"
        )));
    }
    let mut rng = SeededGenerator::with_stream(seed, stream::DATA);
    let log_kappa = libm::log(kappa);
    let mut clients = Vec::with_capacity(n);
    for i in 0..n {
        let mut diag: Vec<f64> = (0..d)
            .map(|_| libm::exp(rng.uniform() * log_kappa))
            .collect();
        match i {
            0 => diag[0] = 1.0,
            1 => diag[0] = kappa,
            _ => {}
        }
        let offset: Vec<f64> = (0..d).map(|_| 2.0 * rng.uniform() - 1.0).collect();
        clients.push(ClientObjective::Quadratic(Quadratic::diagonal(
            diag, offset,
        )?));
    }
    Problem::with_constants(clients, kappa, 1.0)
}

/// Binary sparse classification data shaped like the LIBSVM `a1a` set: each
/// row switches on `nnz_per_row` distinct features with value 1, and labels
/// come from a random linear model with Gaussian label noise.
pub fn synthesize_logistic(
    m: usize,
    d: usize,
    nnz_per_row: usize,
    seed: u64,
) -> Result<SparseDataset> {
    if d == 0 || nnz_per_row == 0 || nnz_per_row > d {
        return Err(Error::InvalidParameter(format!(
            "need 1 <= nnz_per_row={nnz_per_row} <= d={d}"
        )));
    }
    let mut rng = SeededGenerator::with_stream(seed, stream::DATA);
    let weights: Vec<f64> = (0..d).map(|_| rng.standard_normal()).collect();
    let mut rows = Vec::with_capacity(m);
    for _ in 0..m {
        let mut idx: Vec<usize> = (0..d).collect();
        for k in 0..nnz_per_row {
            let j = k + rng.below(d - k);
            idx.swap(k, j);
        }
        idx.truncate(nnz_per_row);
        idx.sort_unstable();
        let score: f64 =
            idx.iter().map(|&j| weights[j]).sum::<f64>() / libm::sqrt(nnz_per_row as f64);
        let label = if score + rng.standard_normal() > 0.0 {
            1.0
        } else {
            -1.0
        };
        rows.push(LabeledRow {
            label,
            features: idx.into_iter().map(|j| (j + 1, 1.0)).collect(),
        });
    }
    let mut ds = SparseDataset::new(rows)?;
    ds.dim = d;
    Ok(ds)
}

/// Convenience: the dimension-`d` problem from a dataset, with the
/// regularization chosen relative to the unregularized smoothness constant.
///
/// Returns the problem and the unregularized constant `L₀`. The problem's
/// `L` is `L₀ + μ` and `μ = mu_factor · L₀`.
pub fn logistic_problem_relative_mu(
    ds: &SparseDataset,
    n: usize,
    mu_factor: f64,
    shuffle_seed: Option<u64>,
) -> Result<(Problem, f64)> {
    let bare = partition(ds, n, 0.0, shuffle_seed)?;
    let mut l0: f64 = 0.0;
    for c in &bare {
        l0 = l0.max(c.smoothness_constant()?);
    }
    let mu = mu_factor * l0;
    let problem = logistic_problem_from(bare, l0, mu)?;
    Ok((problem, l0))
}

/// Rebuilds unregularized logistic clients with regularization `mu`; the
/// problem's smoothness constant is `l0 + mu`.
pub fn logistic_problem_from(bare: Vec<ClientObjective>, l0: f64, mu: f64) -> Result<Problem> {
    let clients = bare
        .into_iter()
        .map(|c| match c {
            ClientObjective::Logistic(l) => l.with_mu(mu).map(ClientObjective::Logistic),
            other => Ok(other),
        })
        .collect::<Result<Vec<_>>>()?;
    Problem::with_constants(clients, l0 + mu, mu)
}

/// Every row exactly once: the multiset of row indices across blocks.
#[doc(hidden)]
pub fn flatten_blocks(blocks: &[Vec<usize>]) -> Vec<usize> {
    let mut all: Vec<usize> = blocks.iter().flatten().copied().collect();
    all.sort_unstable();
    all
}
