//! Client objectives and the federated problem they make up.
//!
//! Two families are supported: quadratics `f(x) = ½ (x − b)ᵀ A (x − b)` with
//! a diagonal or dense symmetric positive semidefinite curvature `A`, and
//! L2-regularized logistic losses over labeled sparse samples
//!
//! ```text
//! f(x) = (1/M) Σ_m log(1 + exp(−b_m a_mᵀ x)) + (μ/2) ‖x‖²
//! ```

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::linalg::{axpy, dot, norm_sq};
use crate::{Error, Result};

/// Relative change of the Rayleigh quotient at which power iteration stops.
pub const POWER_ITERATION_TOL: f64 = 1e-9;
/// Iteration cap for power iteration.
pub const POWER_ITERATION_CAP: usize = 10_000;

/// Sparse feature vector with strictly increasing zero-based indices.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseVector {
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl SparseVector {
    pub fn new(indices: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        if indices.len() != values.len() {
            return Err(Error::DimensionMismatch {
                expected: indices.len(),
                got: values.len(),
            });
        }
        if indices.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidProblem(
                "sparse indices must be strictly increasing".into(),
            ));
        }
        Ok(Self { indices, values })
    }

    pub fn from_dense(dense: &[f64]) -> Self {
        let (indices, values) = dense
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(i, v)| (i, *v))
            .unzip();
        Self { indices, values }
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    /// One past the largest index, or zero when empty.
    pub fn min_dim(&self) -> usize {
        self.indices.last().map_or(0, |i| i + 1)
    }

    #[inline]
    pub fn dot(&self, x: &[f64]) -> f64 {
        self.indices
            .iter()
            .zip(&self.values)
            .map(|(&i, v)| v * x[i])
            .sum()
    }

    /// `y += alpha * self`
    #[inline]
    pub fn axpy_into(&self, alpha: f64, y: &mut [f64]) {
        for (&i, v) in self.indices.iter().zip(&self.values) {
            y[i] += alpha * v;
        }
    }
}

/// One labeled logistic-regression sample; the label is −1 or +1.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub label: f64,
    pub features: SparseVector,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Curvature {
    Diagonal(Vec<f64>),
    /// Row-major symmetric matrix.
    Dense(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Quadratic {
    curvature: Curvature,
    offset: Vec<f64>,
}

impl Quadratic {
    pub fn diagonal(diag: Vec<f64>, offset: Vec<f64>) -> Result<Self> {
        if diag.len() != offset.len() {
            return Err(Error::DimensionMismatch {
                expected: offset.len(),
                got: diag.len(),
            });
        }
        if diag.iter().any(|d| !(d.is_finite() && *d >= 0.0)) {
            return Err(Error::InvalidProblem(
                "quadratic curvature must be finite and nonnegative".into(),
            ));
        }
        Ok(Self {
            curvature: Curvature::Diagonal(diag),
            offset,
        })
    }

    /// Dense symmetric curvature in row-major order. Positive semidefiniteness
    /// is the caller's responsibility; symmetry is checked.
    pub fn dense(matrix: Vec<f64>, offset: Vec<f64>) -> Result<Self> {
        let d = offset.len();
        if matrix.len() != d * d {
            return Err(Error::DimensionMismatch {
                expected: d * d,
                got: matrix.len(),
            });
        }
        for i in 0..d {
            for j in 0..i {
                let (a, b) = (matrix[i * d + j], matrix[j * d + i]);
                if (a - b).abs() > 1e-12 * (1.0 + a.abs().max(b.abs())) {
                    return Err(Error::InvalidProblem(
                        "quadratic curvature must be symmetric".into(),
                    ));
                }
            }
        }
        Ok(Self {
            curvature: Curvature::Dense(matrix),
            offset,
        })
    }

    pub fn curvature(&self) -> &Curvature {
        &self.curvature
    }

    pub fn offset(&self) -> &[f64] {
        &self.offset
    }

    fn apply(&self, v: &[f64], out: &mut [f64]) {
        match &self.curvature {
            Curvature::Diagonal(diag) => {
                for ((o, a), x) in out.iter_mut().zip(diag).zip(v) {
                    *o = a * x;
                }
            }
            Curvature::Dense(m) => {
                let d = v.len();
                for (i, o) in out.iter_mut().enumerate() {
                    *o = dot(&m[i * d..(i + 1) * d], v);
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Logistic {
    dim: usize,
    samples: Vec<Sample>,
    mu: f64,
}

impl Logistic {
    pub fn new(dim: usize, samples: Vec<Sample>, mu: f64) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::InvalidProblem(
                "a logistic client needs at least one sample".into(),
            ));
        }
        if !(mu.is_finite() && mu >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "regularization mu={mu} must be finite and >= 0"
            )));
        }
        for s in &samples {
            if s.label != 1.0 && s.label != -1.0 {
                return Err(Error::InvalidProblem(format!(
                    "logistic labels must be -1 or +1, got {}",
                    s.label
                )));
            }
            if s.features.min_dim() > dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: s.features.min_dim(),
                });
            }
        }
        Ok(Self { dim, samples, mu })
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    /// Same data with a different regularization weight.
    pub fn with_mu(&self, mu: f64) -> Result<Self> {
        Self::new(self.dim, self.samples.clone(), mu)
    }
}

/// `log(1 + exp(-t))` without overflow.
#[inline]
fn log1p_exp_neg(t: f64) -> f64 {
    if t > 0.0 {
        libm::log1p(libm::exp(-t))
    } else {
        -t + libm::log1p(libm::exp(t))
    }
}

/// `σ(−t) = 1 / (1 + exp(t))`, branching on the sign of `t`.
#[inline]
fn sigmoid_neg(t: f64) -> f64 {
    if t >= 0.0 {
        let e = libm::exp(-t);
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + libm::exp(t))
    }
}

/// A differentiable client objective `f_i`. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub enum ClientObjective {
    Quadratic(Quadratic),
    Logistic(Logistic),
}

impl ClientObjective {
    pub fn dim(&self) -> usize {
        match self {
            Self::Quadratic(q) => q.offset.len(),
            Self::Logistic(l) => l.dim,
        }
    }

    fn check_dim(&self, got: usize) -> Result<()> {
        let expected = self.dim();
        if expected != got {
            return Err(Error::DimensionMismatch { expected, got });
        }
        Ok(())
    }

    pub fn value(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x.len())?;
        Ok(match self {
            Self::Quadratic(q) => {
                let diff: Vec<f64> = x.iter().zip(&q.offset).map(|(a, b)| a - b).collect();
                let mut ad = vec![0.0; diff.len()];
                q.apply(&diff, &mut ad);
                0.5 * dot(&diff, &ad)
            }
            Self::Logistic(l) => {
                let loss: f64 = l
                    .samples
                    .iter()
                    .map(|s| log1p_exp_neg(s.label * s.features.dot(x)))
                    .sum();
                loss / l.samples.len() as f64 + 0.5 * l.mu * norm_sq(x)
            }
        })
    }

    pub fn grad(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.dim()];
        self.grad_into(x, &mut out)?;
        Ok(out)
    }

    /// Writes `∇f_i(x)` into `out`.
    pub fn grad_into(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        self.check_dim(x.len())?;
        self.check_dim(out.len())?;
        match self {
            Self::Quadratic(q) => {
                let diff: Vec<f64> = x.iter().zip(&q.offset).map(|(a, b)| a - b).collect();
                q.apply(&diff, out);
            }
            Self::Logistic(l) => {
                for (o, xi) in out.iter_mut().zip(x) {
                    *o = l.mu * xi;
                }
                let inv_m = 1.0 / l.samples.len() as f64;
                for s in &l.samples {
                    let t = s.label * s.features.dot(x);
                    s.features.axpy_into(-s.label * sigmoid_neg(t) * inv_m, out);
                }
            }
        }
        Ok(())
    }

    /// Lipschitz constant of the gradient.
    ///
    /// Exact for diagonal quadratics. Otherwise the largest eigenvalue of the
    /// curvature bound is found by power iteration from the all-ones vector;
    /// for logistic clients that bound is `AᵀA / (4M) + μI`.
    pub fn smoothness_constant(&self) -> Result<f64> {
        match self {
            Self::Quadratic(q) => match &q.curvature {
                Curvature::Diagonal(diag) => Ok(diag.iter().copied().fold(0.0, f64::max)),
                Curvature::Dense(_) => power_iteration(q.offset.len(), |v, out| q.apply(v, out)),
            },
            Self::Logistic(l) => {
                let gram_top = power_iteration(l.dim, |v, out| {
                    out.iter_mut().for_each(|o| *o = 0.0);
                    for s in &l.samples {
                        s.features.axpy_into(s.features.dot(v), out);
                    }
                })?;
                Ok(gram_top / (4.0 * l.samples.len() as f64) + l.mu)
            }
        }
    }
}

/// Largest eigenvalue of a symmetric positive semidefinite operator.
fn power_iteration<F>(dim: usize, mut apply: F) -> Result<f64>
where
    F: FnMut(&[f64], &mut [f64]),
{
    if dim == 0 {
        return Ok(0.0);
    }
    let mut v = vec![1.0; dim];
    let mut w = vec![0.0; dim];
    let mut quotient = f64::NAN;
    for _ in 0..POWER_ITERATION_CAP {
        apply(&v, &mut w);
        let next = dot(&v, &w) / norm_sq(&v);
        let w_norm = libm::sqrt(norm_sq(&w));
        if w_norm == 0.0 {
            // The start vector lies in the kernel; for a PSD operator with a
            // positive start vector this only happens for the zero operator.
            return Ok(0.0);
        }
        if (next - quotient).abs() <= POWER_ITERATION_TOL * next.abs() {
            return Ok(next);
        }
        quotient = next;
        for (vi, wi) in v.iter_mut().zip(&w) {
            *vi = wi / w_norm;
        }
    }
    Err(Error::PowerIterationNotConverged {
        iterations: POWER_ITERATION_CAP,
        last: quotient,
    })
}

/// The finite-sum problem `min_x (1/n) Σ_i f_i(x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Problem {
    clients: Vec<ClientObjective>,
    dim: usize,
    smoothness: f64,
    mu: f64,
}

impl Problem {
    /// Builds the problem; `L` is the largest per-client smoothness constant
    /// and `mu` is the strong-convexity constant shared by every client.
    pub fn new(clients: Vec<ClientObjective>, mu: f64) -> Result<Self> {
        if clients.len() < 2 {
            return Err(Error::InvalidProblem(format!(
                "need at least 2 clients, got {}",
                clients.len()
            )));
        }
        let dim = clients[0].dim();
        if let Some(c) = clients.iter().find(|c| c.dim() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: c.dim(),
            });
        }
        let mut smoothness: f64 = 0.0;
        for c in &clients {
            smoothness = smoothness.max(c.smoothness_constant()?);
        }
        Self::with_constants(clients, smoothness, mu)
    }

    /// Builds the problem with known constants.
    pub fn with_constants(clients: Vec<ClientObjective>, smoothness: f64, mu: f64) -> Result<Self> {
        if clients.len() < 2 {
            return Err(Error::InvalidProblem(format!(
                "need at least 2 clients, got {}",
                clients.len()
            )));
        }
        let dim = clients[0].dim();
        if let Some(c) = clients.iter().find(|c| c.dim() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: c.dim(),
            });
        }
        if !(smoothness.is_finite() && smoothness > 0.0) {
            return Err(Error::InvalidProblem(format!(
                "smoothness constant {smoothness} must be positive"
            )));
        }
        if !(mu.is_finite() && mu >= 0.0 && mu <= smoothness) {
            return Err(Error::InvalidProblem(format!(
                "strong convexity {mu} must lie in [0, L={smoothness}]"
            )));
        }
        Ok(Self {
            clients,
            dim,
            smoothness,
            mu,
        })
    }

    pub fn clients(&self) -> &[ClientObjective] {
        &self.clients
    }

    pub fn n(&self) -> usize {
        self.clients.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Global smoothness constant `L`.
    pub fn smoothness(&self) -> f64 {
        self.smoothness
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    /// `L / μ`, defined when `μ > 0`.
    pub fn kappa(&self) -> Option<f64> {
        (self.mu > 0.0).then(|| self.smoothness / self.mu)
    }

    pub fn value(&self, x: &[f64]) -> Result<f64> {
        let mut total = 0.0;
        for c in &self.clients {
            total += c.value(x)?;
        }
        Ok(total / self.n() as f64)
    }

    /// `∇f(x) = (1/n) Σ_i ∇f_i(x)`, summed pairwise in client order.
    pub fn grad(&self, x: &[f64]) -> Result<Vec<f64>> {
        let grads = self
            .clients
            .iter()
            .map(|c| c.grad(x))
            .collect::<Result<Vec<_>>>()?;
        Ok(crate::linalg::pairwise_mean(
            grads.iter().map(Vec::as_slice),
            self.dim,
        ))
    }

    /// Closed-form minimizer `(Σ D_i)⁻¹ Σ D_i b_i` when every client is a
    /// diagonal quadratic with positive total curvature.
    pub fn diagonal_quadratic_minimizer(&self) -> Option<Vec<f64>> {
        let mut num = vec![0.0; self.dim];
        let mut den = vec![0.0; self.dim];
        for c in &self.clients {
            match c {
                ClientObjective::Quadratic(Quadratic {
                    curvature: Curvature::Diagonal(diag),
                    offset,
                }) => {
                    for j in 0..self.dim {
                        num[j] += diag[j] * offset[j];
                        den[j] += diag[j];
                    }
                }
                _ => return None,
            }
        }
        if den.iter().any(|d| *d <= 0.0) {
            return None;
        }
        Some(num.iter().zip(&den).map(|(a, b)| a / b).collect())
    }
}

/// One local step `x ← x − γ ∇f_i(x) + γ h` using `scratch` for the gradient.
pub(crate) fn local_gradient_step(
    objective: &ClientObjective,
    x: &mut [f64],
    control: &[f64],
    gamma: f64,
    scratch: &mut [f64],
) -> Result<()> {
    objective.grad_into(x, scratch)?;
    axpy(-gamma, scratch, x);
    axpy(gamma, control, x);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::randomness::SeededGenerator;
    use alloc::vec::Vec;

    fn logistic(samples: &[(&[f64], f64)], mu: f64) -> ClientObjective {
        let dim = samples[0].0.len();
        let samples = samples
            .iter()
            .map(|(a, b)| Sample {
                label: *b,
                features: SparseVector::from_dense(a),
            })
            .collect();
        ClientObjective::Logistic(Logistic::new(dim, samples, mu).unwrap())
    }

    fn random_logistic(rng: &mut SeededGenerator, m: usize, d: usize, mu: f64) -> ClientObjective {
        let rows: Vec<(Vec<f64>, f64)> = (0..m)
            .map(|_| {
                let a: Vec<f64> = (0..d).map(|_| 2.0 * rng.uniform() - 1.0).collect();
                let b = if rng.uniform() < 0.5 { -1.0 } else { 1.0 };
                (a, b)
            })
            .collect();
        let refs: Vec<(&[f64], f64)> = rows.iter().map(|(a, b)| (a.as_slice(), *b)).collect();
        logistic(&refs, mu)
    }

    #[test]
    fn logistic_gradient_at_origin() {
        let f = logistic(&[(&[1.0, 0.0], 1.0)], 0.0);
        assert_eq!(f.grad(&[0.0, 0.0]).unwrap(), vec![-0.5, 0.0]);
    }

    #[test]
    fn quadratic_gradient_and_value() {
        let f = ClientObjective::Quadratic(Quadratic::diagonal(vec![1.0], vec![3.0]).unwrap());
        assert_eq!(f.grad(&[0.0]).unwrap(), vec![-3.0]);
        assert_eq!(f.value(&[3.0]).unwrap(), 0.0);
    }

    #[test]
    fn logistic_value_at_origin_is_log2() {
        let f = logistic(&[(&[1.0, -2.0], 1.0), (&[0.3, 0.1], -1.0)], 0.0);
        assert!((f.value(&[0.0, 0.0]).unwrap() - core::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let f = logistic(&[(&[1.0, 0.0], 1.0)], 0.0);
        assert!(matches!(
            f.grad(&[0.0]),
            Err(Error::DimensionMismatch {
                expected: 2,
                got: 1
            })
        ));
        assert!(f.value(&[0.0; 3]).is_err());
    }

    #[test]
    fn logistic_gradient_matches_central_differences() {
        let mut rng = SeededGenerator::new(11);
        let f = random_logistic(&mut rng, 5, 3, 0.0);
        let x = [0.3, -0.7, 1.1];
        let g = f.grad(&x).unwrap();
        let h = 1e-6;
        for j in 0..3 {
            let mut xp = x;
            let mut xm = x;
            xp[j] += h;
            xm[j] -= h;
            let fd = (f.value(&xp).unwrap() - f.value(&xm).unwrap()) / (2.0 * h);
            let rel = (fd - g[j]).abs() / g[j].abs().max(1e-3);
            assert!(rel <= 1e-5, "coordinate {j}: fd={fd} grad={}", g[j]);
        }
    }

    #[test]
    fn value_decreases_along_negative_gradient() {
        let mut rng = SeededGenerator::new(5);
        let f = random_logistic(&mut rng, 8, 4, 0.01);
        let x = [0.5, 0.5, -0.5, 1.0];
        let g = f.grad(&x).unwrap();
        let step: Vec<f64> = x.iter().zip(&g).map(|(a, b)| a - 1e-3 * b).collect();
        assert!(f.value(&step).unwrap() < f.value(&x).unwrap());
    }

    #[test]
    fn large_margins_do_not_overflow() {
        let f = logistic(&[(&[1.0], 1.0), (&[1.0], -1.0)], 0.0);
        for x in [1e4, -1e4] {
            let v = f.value(&[x]).unwrap();
            let g = f.grad(&[x]).unwrap();
            assert!(v.is_finite() && g[0].is_finite());
        }
    }

    #[test]
    fn rank_one_smoothness_is_norm_squared_over_four() {
        let f = logistic(&[(&[2.0, 0.0], 1.0)], 0.0);
        assert!((f.smoothness_constant().unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn diagonal_quadratic_smoothness_is_max_curvature() {
        let f = ClientObjective::Quadratic(
            Quadratic::diagonal(vec![1.0, 4.0], vec![0.0, 0.0]).unwrap(),
        );
        assert_eq!(f.smoothness_constant().unwrap(), 4.0);
        let dense = ClientObjective::Quadratic(
            Quadratic::dense(vec![1.0, 0.0, 0.0, 4.0], vec![0.0, 0.0]).unwrap(),
        );
        assert!((dense.smoothness_constant().unwrap() - 4.0).abs() < 1e-8);
    }

    #[test]
    fn problem_requires_two_clients_of_equal_dimension() {
        let a = ClientObjective::Quadratic(Quadratic::diagonal(vec![1.0], vec![0.0]).unwrap());
        let b =
            ClientObjective::Quadratic(Quadratic::diagonal(vec![1.0; 2], vec![0.0; 2]).unwrap());
        assert!(Problem::new(vec![a.clone()], 1.0).is_err());
        assert!(Problem::new(vec![a.clone(), b], 1.0).is_err());
        let p = Problem::new(vec![a.clone(), a], 1.0).unwrap();
        assert_eq!(p.kappa(), Some(1.0));
    }

    #[test]
    fn symmetric_closed_form_minimizer() {
        let a = ClientObjective::Quadratic(Quadratic::diagonal(vec![1.0], vec![-1.0]).unwrap());
        let b = ClientObjective::Quadratic(Quadratic::diagonal(vec![1.0], vec![1.0]).unwrap());
        let p = Problem::new(vec![a, b], 1.0).unwrap();
        assert_eq!(p.diagonal_quadratic_minimizer().unwrap(), vec![0.0]);
    }
}
