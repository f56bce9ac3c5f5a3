//! Closed-form quantities from the convergence theory, the reference solver
//! that produces `(x*, h*)`, and ergodic averaging.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::linalg::{dist_sq, norm_sq, pairwise_sum};
use crate::objective::Problem;
use crate::randomness::{check_cohort, check_probability};
use crate::{Error, Result};

/// Subsampling variance factor `ν = (n−s) / (s(n−1))`.
pub fn nu(n: usize, s: usize) -> Result<f64> {
    check_cohort(n, s)?;
    Ok((n - s) as f64 / (s as f64 * (n - 1) as f64))
}

/// Largest admissible `χ`: `n(s−1) / (s(n−1)) = 1 − ν`.
pub fn chi_max(n: usize, s: usize) -> Result<f64> {
    check_cohort(n, s)?;
    Ok((n as f64 * (s - 1) as f64) / (s as f64 * (n - 1) as f64))
}

/// Relative variance of the consensus estimator: `ω = (n−1)/(p(s−1)) − 1`.
pub fn omega_var(n: usize, s: usize, p: f64) -> Result<f64> {
    check_cohort(n, s)?;
    check_probability(p)?;
    Ok((n - 1) as f64 / (p * (s - 1) as f64) - 1.0)
}

/// `p = min(√(n/(sκ)), 1)`.
pub fn choose_p(n: usize, s: usize, kappa: f64) -> Result<f64> {
    check_cohort(n, s)?;
    if kappa.is_nan() || kappa < 1.0 {
        return Err(Error::InvalidParameter(format!(
            "kappa={kappa} must be >= 1"
        )));
    }
    Ok(libm::sqrt(n as f64 / (s as f64 * kappa)).min(1.0))
}

/// Stepsize and randomization parameters that enter the rate and the
/// Lyapunov functions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TheoryParams {
    pub gamma: f64,
    pub p: f64,
    pub chi: f64,
    pub n: usize,
    pub s: usize,
}

impl TheoryParams {
    /// Weight of the control-variate term in both Lyapunov functions:
    /// `γ/(p²χ) · (n−1)/(s−1)`, which equals `γ(1+ω)/(pχ)`.
    pub fn control_weight(&self) -> f64 {
        self.gamma / (self.p * self.p * self.chi) * (self.n - 1) as f64 / (self.s - 1) as f64
    }
}

/// Per-iteration contraction factor
/// `c = max((1−γμ)², (γL−1)², 1 − p²χ(s−1)/(n−1))`.
///
/// Fails, naming the violated condition, unless `0 < γ < 2/L`,
/// `0 < χ ≤ n(s−1)/(s(n−1))`, `p ∈ (0, 1]` and `0 < μ ≤ L`.
pub fn contraction_rate(
    gamma: f64,
    mu: f64,
    l: f64,
    p: f64,
    chi: f64,
    n: usize,
    s: usize,
) -> Result<f64> {
    Ok(rate_terms(gamma, mu, l, p, chi, n, s)?.max())
}

#[derive(Debug, Clone, Copy)]
struct RateTerms {
    gd: f64,
    control: f64,
}

impl RateTerms {
    fn max(&self) -> f64 {
        self.gd.max(self.control)
    }
}

fn rate_terms(
    gamma: f64,
    mu: f64,
    l: f64,
    p: f64,
    chi: f64,
    n: usize,
    s: usize,
) -> Result<RateTerms> {
    check_cohort(n, s)?;
    check_probability(p)?;
    if !(l > 0.0 && mu > 0.0 && mu <= l) {
        return Err(Error::InvalidParameter(format!(
            "need 0 < mu <= L, got mu={mu}, L={l}"
        )));
    }
    if !(gamma > 0.0 && gamma < 2.0 / l) {
        return Err(Error::InvalidParameter(format!(
            "stepsize condition 0 < gamma < 2/L violated: gamma={gamma}, 2/L={}",
            2.0 / l
        )));
    }
    let bound = chi_max(n, s)?;
    if !(chi > 0.0 && chi <= bound * (1.0 + 1e-15)) {
        return Err(Error::InvalidParameter(format!(
            "condition 0 < chi <= n(s-1)/(s(n-1)) violated: chi={chi}, bound={bound}"
        )));
    }
    let a = 1.0 - gamma * mu;
    let b = gamma * l - 1.0;
    Ok(RateTerms {
        gd: (a * a).max(b * b),
        control: 1.0 - p * p * chi * (s - 1) as f64 / (n - 1) as f64,
    })
}

/// Every closed-form rate quantity for one parameter setting, with the
/// complexity expressions evaluated rather than left asymptotic.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateReport {
    pub n: usize,
    pub s: usize,
    pub kappa: f64,
    pub p: f64,
    pub gamma: f64,
    pub chi: f64,
    pub nu: f64,
    pub omega: f64,
    pub chi_max: f64,
    pub gd_factor: f64,
    pub control_factor: f64,
    pub c: f64,
    /// `1/p`.
    pub expected_local_steps: f64,
    /// `κ + n/(s p²)`, the coefficient of `log ε⁻¹` in the iteration count.
    pub iteration_complexity: f64,
    /// `p κ + n/(s p)`, the coefficient of `log ε⁻¹` in the round count.
    pub communication_complexity: f64,
}

impl RateReport {
    /// Report for a problem normalized to `μ = 1`, `L = κ`, with the
    /// experimental choices `γ = 2/(L+μ)` and `χ = chi_max(n, s)`.
    pub fn for_experiment(n: usize, s: usize, kappa: f64, p: f64) -> Result<Self> {
        let chi = chi_max(n, s)?;
        Self::new(n, s, kappa, p, 2.0 / (kappa + 1.0), chi)
    }

    /// Report for explicit `γ` and `χ` on a problem with `μ = 1`, `L = κ`.
    pub fn new(n: usize, s: usize, kappa: f64, p: f64, gamma: f64, chi: f64) -> Result<Self> {
        if kappa.is_nan() || kappa < 1.0 {
            return Err(Error::InvalidParameter(format!(
                "kappa={kappa} must be >= 1"
            )));
        }
        let terms = rate_terms(gamma, 1.0, kappa, p, chi, n, s)?;
        let ratio = n as f64 / s as f64;
        Ok(Self {
            n,
            s,
            kappa,
            p,
            gamma,
            chi,
            nu: nu(n, s)?,
            omega: omega_var(n, s, p)?,
            chi_max: chi_max(n, s)?,
            gd_factor: terms.gd,
            control_factor: terms.control,
            c: terms.max(),
            expected_local_steps: 1.0 / p,
            iteration_complexity: kappa + ratio / (p * p),
            communication_complexity: p * kappa + ratio / p,
        })
    }
}

/// The solution `x*` and the optimal control variates `h*_i = ∇f_i(x*)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferencePoint {
    pub x_star: Vec<f64>,
    pub h_star: Vec<Vec<f64>>,
    /// `‖∇f(x*)‖` at return.
    pub grad_norm: f64,
    pub iterations: usize,
}

/// Default relative tolerance for [`solve_reference`].
pub const REFERENCE_TOL: f64 = 1e-12;
/// Iteration cap for [`solve_reference`].
pub const REFERENCE_ITERATION_CAP: usize = 2_000_000;

/// Minimizes `f` to `‖∇f(x)‖ ≤ tol · L · max(1, ‖x‖)` starting from zero.
pub fn solve_reference(problem: &Problem, tol: f64) -> Result<ReferencePoint> {
    solve_reference_from(problem, &vec![0.0; problem.dim()], tol)
}

/// [`solve_reference`] from a given starting point.
///
/// Accelerated gradient descent with stepsize `1/L`, momentum
/// `(√κ−1)/(√κ+1)` when `μ > 0` (the FISTA sequence otherwise), and a restart
/// whenever the momentum direction opposes the gradient.
pub fn solve_reference_from(problem: &Problem, start: &[f64], tol: f64) -> Result<ReferencePoint> {
    if start.len() != problem.dim() {
        return Err(Error::DimensionMismatch {
            expected: problem.dim(),
            got: start.len(),
        });
    }
    let l = problem.smoothness();
    let step = 1.0 / l;
    let strong_momentum = problem.kappa().map(|k| {
        let r = libm::sqrt(k);
        (r - 1.0) / (r + 1.0)
    });
    let threshold = |x: &[f64]| tol * l * libm::sqrt(norm_sq(x)).max(1.0);

    let mut x = start.to_vec();
    let mut g = problem.grad(&x)?;
    let mut iterations = 0;
    if libm::sqrt(norm_sq(&g)) > threshold(&x) {
        let mut y = x.clone();
        let mut gy = g.clone();
        let mut t = 1.0_f64;
        loop {
            if iterations >= REFERENCE_ITERATION_CAP {
                return Err(Error::IterationCap {
                    iterations,
                    grad_norm: libm::sqrt(norm_sq(&g)),
                });
            }
            iterations += 1;
            let next: Vec<f64> = y.iter().zip(&gy).map(|(yi, gi)| yi - step * gi).collect();
            let t_next = 0.5 * (1.0 + libm::sqrt(1.0 + 4.0 * t * t));
            let beta = strong_momentum.unwrap_or((t - 1.0) / t_next);
            // Restart when the last step moved against the gradient at y.
            let moved_against: f64 = gy
                .iter()
                .zip(next.iter().zip(&x))
                .map(|(gi, (ni, xi))| gi * (ni - xi))
                .sum();
            let restart = moved_against > 0.0;
            y = if restart {
                next.clone()
            } else {
                next.iter()
                    .zip(&x)
                    .map(|(ni, xi)| ni + beta * (ni - xi))
                    .collect()
            };
            t = if restart { 1.0 } else { t_next };
            x = next;
            g = problem.grad(&x)?;
            if libm::sqrt(norm_sq(&g)) <= threshold(&x) {
                break;
            }
            gy = if restart {
                g.clone()
            } else {
                problem.grad(&y)?
            };
        }
    }
    let h_star = problem
        .clients()
        .iter()
        .map(|c| c.grad(&x))
        .collect::<Result<Vec<_>>>()?;
    Ok(ReferencePoint {
        grad_norm: libm::sqrt(norm_sq(&g)),
        x_star: x,
        h_star,
        iterations,
    })
}

fn check_reference(reference: &ReferencePoint, controls: &[Vec<f64>]) -> Result<()> {
    if reference.h_star.len() != controls.len() {
        return Err(Error::DimensionMismatch {
            expected: reference.h_star.len(),
            got: controls.len(),
        });
    }
    Ok(())
}

/// Round-level Lyapunov function
/// `Ψ̄ = (n/γ)‖x̄ − x*‖² + γ/(p²χ) · (n−1)/(s−1) · Σ_i ‖h_i − h*_i‖²`.
pub fn lyapunov(
    xbar: &[f64],
    controls: &[Vec<f64>],
    params: &TheoryParams,
    reference: &ReferencePoint,
) -> Result<f64> {
    check_reference(reference, controls)?;
    let model = params.n as f64 / params.gamma * dist_sq(xbar, &reference.x_star);
    Ok(model + params.control_weight() * control_error(controls, reference))
}

/// Iteration-level Lyapunov function over all local models
/// `Ψ = (1/γ) Σ_i ‖x_i − x*‖² + γ(1+ω)/(pχ) Σ_i ‖h_i − h*_i‖²`.
pub fn single_loop_lyapunov(
    models: &[Vec<f64>],
    controls: &[Vec<f64>],
    params: &TheoryParams,
    reference: &ReferencePoint,
) -> Result<f64> {
    check_reference(reference, controls)?;
    if models.len() != controls.len() {
        return Err(Error::DimensionMismatch {
            expected: controls.len(),
            got: models.len(),
        });
    }
    let omega = omega_var(params.n, params.s, params.p)?;
    let model: f64 = models.iter().map(|x| dist_sq(x, &reference.x_star)).sum();
    let weight = params.gamma * (1.0 + omega) / (params.p * params.chi);
    Ok(model / params.gamma + weight * control_error(controls, reference))
}

fn control_error(controls: &[Vec<f64>], reference: &ReferencePoint) -> f64 {
    controls
        .iter()
        .zip(&reference.h_star)
        .map(|(h, hs)| dist_sq(h, hs))
        .sum()
}

/// Running arithmetic means `x̃_i = (1/(T+1)) Σ_t x_i^t`, one per client,
/// updated incrementally.
#[derive(Debug, Clone, PartialEq)]
pub struct ErgodicTracker {
    means: Vec<Vec<f64>>,
    counts: Vec<u64>,
}

impl ErgodicTracker {
    pub fn new(clients: usize, dim: usize) -> Self {
        Self {
            means: vec![vec![0.0; dim]; clients],
            counts: vec![0; clients],
        }
    }

    pub fn push(&mut self, client: usize, x: &[f64]) {
        self.counts[client] += 1;
        let inv = 1.0 / self.counts[client] as f64;
        for (m, v) in self.means[client].iter_mut().zip(x) {
            *m += (v - *m) * inv;
        }
    }

    pub fn push_all(&mut self, models: &[Vec<f64>]) {
        for (i, x) in models.iter().enumerate() {
            self.push(i, x);
        }
    }

    pub fn mean(&self, client: usize) -> &[f64] {
        &self.means[client]
    }

    pub fn means(&self) -> &[Vec<f64>] {
        &self.means
    }

    pub fn count(&self, client: usize) -> u64 {
        self.counts[client]
    }

    /// `Σ_i ‖∇f(x̃_i)‖²` for the global objective `f`.
    pub fn grad_metric(&self, problem: &Problem) -> Result<f64> {
        let mut total = 0.0;
        for m in &self.means {
            total += norm_sq(&problem.grad(m)?);
        }
        Ok(total)
    }
}

/// `‖Σ_i h_i‖ / max(1, max_i ‖h_i‖)`: the normalized defect of the
/// zero-sum control-variate invariant.
pub fn control_sum_defect(controls: &[Vec<f64>]) -> f64 {
    let dim = controls.first().map_or(0, Vec::len);
    let sum = pairwise_sum(controls.iter().map(Vec::as_slice), dim);
    let scale = controls
        .iter()
        .map(|h| libm::sqrt(norm_sq(h)))
        .fold(1.0, f64::max);
    libm::sqrt(norm_sq(&sum)) / scale
}
