//! Algorithms that advance a [`FederatedState`]: the two-loop TAMUNA round,
//! its single-loop form, distributed gradient descent and Scaffold, plus a
//! [`Simulation`] driver that draws the randomness and emits one
//! [`StepTrace`] per communication round.
//!
//! Client vectors are aggregated in ascending client order with pairwise
//! summation, so runs are reproducible bit for bit.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::analysis::{
    chi_max, choose_p, control_sum_defect, lyapunov, single_loop_lyapunov, ReferencePoint,
    TheoryParams,
};
use crate::linalg::{dist_sq, norm_sq, pairwise_mean};
use crate::objective::{local_gradient_step, Problem};
use crate::randomness::{
    check_cohort, check_probability, enumerate_subsets, ParticipationPlan, RandomStreams,
    SeededGenerator, GEOMETRIC_CAP,
};
use crate::{Error, Result};

/// Sq-dist growth factor, relative to the initial squared distance, at which
/// a run is declared divergent.
pub const DIVERGENCE_FACTOR: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LocalStepsMode {
    /// `L^(r)` drawn from the geometric law of mean `1/p`.
    Geometric,
    /// Exactly `K` local steps per round.
    Fixed(u64),
}

/// Tunables shared by the algorithms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlgoParams {
    pub gamma: f64,
    pub eta: f64,
    pub chi: f64,
    pub p: f64,
    pub s: usize,
    pub rounds: u64,
    pub seed: u64,
    pub local_steps: LocalStepsMode,
}

impl AlgoParams {
    /// Checks `0 < γ < 2/L`, `p ∈ (0, 1]`, `2 ≤ s ≤ n` and
    /// `0 < χ ≤ n(s−1)/(s(n−1))`, and sets `η = pχ`.
    pub fn new(problem: &Problem, gamma: f64, p: f64, chi: f64, s: usize) -> Result<Self> {
        let n = problem.n();
        check_cohort(n, s)?;
        check_probability(p)?;
        check_stepsize(problem, gamma)?;
        let bound = chi_max(n, s)?;
        if !(chi > 0.0 && chi <= bound * (1.0 + 1e-15)) {
            return Err(Error::InvalidParameter(format!(
                "condition 0 < chi <= n(s-1)/(s(n-1)) violated: chi={chi}, bound={bound}"
            )));
        }
        Ok(Self {
            gamma,
            eta: p * chi,
            chi,
            p,
            s,
            rounds: 0,
            seed: 0,
            local_steps: LocalStepsMode::Geometric,
        })
    }

    /// `γ = 2/(L+μ)`, `p = min(√(n/(sκ)), 1)`, `χ = n(s−1)/(s(n−1))`, so that
    /// `η = p·n(s−1)/(s(n−1))`. Needs `μ > 0`.
    pub fn recommended(problem: &Problem, s: usize) -> Result<Self> {
        let kappa = problem
            .kappa()
            .ok_or_else(|| Error::InvalidParameter("recommended parameters need mu > 0".into()))?;
        let gamma = 2.0 / (problem.smoothness() + problem.mu());
        let p = choose_p(problem.n(), s, kappa)?;
        let chi = chi_max(problem.n(), s)?;
        Self::new(problem, gamma, p, chi, s)
    }

    /// Overrides `η`. Any finite `η ≥ 0` is accepted; values other than `pχ`
    /// fall outside the convergence guarantee.
    pub fn with_eta(mut self, eta: f64) -> Result<Self> {
        if !(eta.is_finite() && eta >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "eta={eta} must be finite and >= 0"
            )));
        }
        self.eta = eta;
        Ok(self)
    }

    /// Fixed `K` local steps per round; `p` is replaced by `1/K` and `η` by
    /// `χ/K`.
    pub fn with_fixed_local_steps(mut self, k: u64) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidParameter(
                "need at least one local step".into(),
            ));
        }
        self.local_steps = LocalStepsMode::Fixed(k);
        self.p = 1.0 / k as f64;
        self.eta = self.p * self.chi;
        Ok(self)
    }

    pub fn with_rounds(mut self, rounds: u64) -> Self {
        self.rounds = rounds;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn theory(&self, n: usize) -> TheoryParams {
        TheoryParams {
            gamma: self.gamma,
            p: self.p,
            chi: self.chi,
            n,
            s: self.s,
        }
    }
}

fn check_stepsize(problem: &Problem, gamma: f64) -> Result<()> {
    let limit = 2.0 / problem.smoothness();
    if gamma > 0.0 && gamma < limit {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "stepsize condition 0 < gamma < 2/L violated: gamma={gamma}, 2/L={limit}"
        )))
    }
}

/// Work done by one client: gradient evaluations and vectors sent to
/// (uplink) and received from (downlink) the server.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ClientActivity {
    pub grad_evals: u64,
    pub uplink: u64,
    pub downlink: u64,
}

impl ClientActivity {
    pub fn is_idle(&self) -> bool {
        *self == Self::default()
    }

    fn add(&mut self, other: &Self) {
        self.grad_evals += other.grad_evals;
        self.uplink += other.uplink;
        self.downlink += other.downlink;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClientState {
    /// Local model `x_i`.
    pub x: Vec<f64>,
    /// Control variate `h_i` (Scaffold's `c_i`).
    pub h: Vec<f64>,
    /// Cumulative activity since the state was created.
    pub activity: ClientActivity,
}

/// Server estimate plus per-client models and control variates.
#[derive(Debug, Clone, PartialEq)]
pub struct FederatedState {
    pub xbar: Vec<f64>,
    pub clients: Vec<ClientState>,
    /// Server control variate; only Scaffold uses it.
    pub server_control: Vec<f64>,
    /// Completed rounds.
    pub round: u64,
    /// Total local steps `t`.
    pub local_steps: u64,
    pub comm_rounds: u64,
}

/// Relative tolerance of the zero-sum check on initial control variates.
pub const CONTROL_SUM_TOL: f64 = 1e-10;

impl FederatedState {
    /// Every model at `x0`, all controls zero.
    pub fn new(problem: &Problem, x0: &[f64]) -> Result<Self> {
        let controls = vec![vec![0.0; problem.dim()]; problem.n()];
        Self::with_controls(problem, x0, controls)
    }

    /// Every model at `x0` with the given controls, which must sum to zero.
    pub fn with_controls(problem: &Problem, x0: &[f64], controls: Vec<Vec<f64>>) -> Result<Self> {
        let d = problem.dim();
        if x0.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: x0.len(),
            });
        }
        if controls.len() != problem.n() {
            return Err(Error::DimensionMismatch {
                expected: problem.n(),
                got: controls.len(),
            });
        }
        if let Some(h) = controls.iter().find(|h| h.len() != d) {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: h.len(),
            });
        }
        let defect = control_sum_defect(&controls);
        if defect > CONTROL_SUM_TOL {
            return Err(Error::InvalidParameter(format!(
                "initial control variates must sum to zero (relative defect {defect})"
            )));
        }
        Ok(Self {
            xbar: x0.to_vec(),
            clients: controls
                .into_iter()
                .map(|h| ClientState {
                    x: x0.to_vec(),
                    h,
                    activity: ClientActivity::default(),
                })
                .collect(),
            server_control: vec![0.0; d],
            round: 0,
            local_steps: 0,
            comm_rounds: 0,
        })
    }

    pub fn n(&self) -> usize {
        self.clients.len()
    }

    pub fn dim(&self) -> usize {
        self.xbar.len()
    }

    pub fn controls(&self) -> Vec<Vec<f64>> {
        self.clients.iter().map(|c| c.h.clone()).collect()
    }

    pub fn models(&self) -> Vec<Vec<f64>> {
        self.clients.iter().map(|c| c.x.clone()).collect()
    }

    /// Normalized `‖Σ_i h_i‖`; see [`control_sum_defect`].
    pub fn control_sum_defect(&self) -> f64 {
        control_sum_defect(&self.controls())
    }

    fn check_problem(&self, problem: &Problem) -> Result<()> {
        if self.n() != problem.n() {
            return Err(Error::DimensionMismatch {
                expected: problem.n(),
                got: self.n(),
            });
        }
        if self.dim() != problem.dim() {
            return Err(Error::DimensionMismatch {
                expected: problem.dim(),
                got: self.dim(),
            });
        }
        Ok(())
    }
}

/// Per-client activity during one call.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundReport {
    pub activity: Vec<ClientActivity>,
    pub communicated: bool,
}

impl RoundReport {
    fn new(n: usize) -> Self {
        Self {
            activity: vec![ClientActivity::default(); n],
            communicated: false,
        }
    }

    fn commit(self, state: &mut FederatedState) -> Self {
        for (c, a) in state.clients.iter_mut().zip(&self.activity) {
            c.activity.add(a);
        }
        self
    }
}

fn mean_over(
    state: &FederatedState,
    omega: &[usize],
    pick: impl Fn(&ClientState) -> &[f64],
) -> Vec<f64> {
    pairwise_mean(omega.iter().map(|&i| pick(&state.clients[i])), state.dim())
}

/// One TAMUNA round.
///
/// Each client in `Ω` starts from `x̄`, runs `L` steps
/// `x_i ← x_i − γ∇f_i(x_i) + γh_i` and uploads its result; the server
/// averages them into the new `x̄`, and each participant updates
/// `h_i ← h_i + (η/γ)(x̄⁺ − x_i)`. Clients outside `Ω` do nothing.
pub fn tamuna_round(
    state: &mut FederatedState,
    problem: &Problem,
    params: &AlgoParams,
    plan: &ParticipationPlan,
) -> Result<RoundReport> {
    state.check_problem(problem)?;
    let n = state.n();
    if plan.omega().last().is_some_and(|&i| i >= n) {
        return Err(Error::InvalidCohort { n, s: plan.size() });
    }
    let gamma = params.gamma;
    let mut report = RoundReport::new(n);
    let mut scratch = vec![0.0; state.dim()];
    for &i in plan.omega() {
        let client = &mut state.clients[i];
        client.x.copy_from_slice(&state.xbar);
        for _ in 0..plan.local_steps() {
            local_gradient_step(
                &problem.clients()[i],
                &mut client.x,
                &client.h,
                gamma,
                &mut scratch,
            )?;
        }
        let a = &mut report.activity[i];
        a.downlink += 1;
        a.grad_evals += plan.local_steps();
        a.uplink += 1;
    }
    let xbar = mean_over(state, plan.omega(), |c| &c.x);
    let scale = params.eta / gamma;
    for &i in plan.omega() {
        let client = &mut state.clients[i];
        for ((h, xb), xi) in client.h.iter_mut().zip(&xbar).zip(&client.x) {
            *h += scale * (xb - xi);
        }
        report.activity[i].downlink += 1;
    }
    state.xbar = xbar;
    state.round += 1;
    state.local_steps += plan.local_steps();
    state.comm_rounds += 1;
    report.communicated = true;
    Ok(report.commit(state))
}

/// One iteration of the single-loop form.
///
/// Every client computes `x̂_i = x_i − γ∇f_i(x_i) + γh_i`. Without
/// communication (`θ = 0`) it keeps `x_i = x̂_i`. With communication the
/// server averages `x̂` over `Ω` into `x̄`, participants update
/// `h_i ← h_i + (pχ/γ)(x̄ − x̂_i)`, and every client, participating or not,
/// is overwritten with `x̄`. `omega` must be given exactly when `theta`.
pub fn single_loop_step(
    state: &mut FederatedState,
    problem: &Problem,
    params: &AlgoParams,
    theta: bool,
    omega: Option<&[usize]>,
) -> Result<RoundReport> {
    state.check_problem(problem)?;
    let n = state.n();
    let omega = match (theta, omega) {
        (true, Some(o)) => {
            ParticipationPlan::new(n, o.to_vec(), 1)?;
            Some(o)
        }
        (false, None) => None,
        (true, None) => {
            return Err(Error::InvalidParameter(
                "communication step needs a cohort".into(),
            ))
        }
        (false, Some(_)) => {
            return Err(Error::InvalidParameter(
                "a cohort was given for a step without communication".into(),
            ))
        }
    };
    let gamma = params.gamma;
    let mut report = RoundReport::new(n);
    let mut scratch = vec![0.0; state.dim()];
    for (i, client) in state.clients.iter_mut().enumerate() {
        local_gradient_step(
            &problem.clients()[i],
            &mut client.x,
            &client.h,
            gamma,
            &mut scratch,
        )?;
        report.activity[i].grad_evals += 1;
    }
    state.local_steps += 1;
    if let Some(omega) = omega {
        let xbar = mean_over(state, omega, |c| &c.x);
        let scale = params.eta / gamma;
        for &i in omega {
            let client = &mut state.clients[i];
            for ((h, xb), xi) in client.h.iter_mut().zip(&xbar).zip(&client.x) {
                *h += scale * (xb - xi);
            }
            report.activity[i].uplink += 1;
        }
        for (client, a) in state.clients.iter_mut().zip(report.activity.iter_mut()) {
            client.x.copy_from_slice(&xbar);
            a.downlink += 1;
        }
        state.xbar = xbar;
        state.round += 1;
        state.comm_rounds += 1;
        report.communicated = true;
    }
    Ok(report.commit(state))
}

/// One step of distributed gradient descent,
/// `x̄ ← x̄ − (γ/n) Σ_i ∇f_i(x̄)`, with full participation.
pub fn gd_step(state: &mut FederatedState, problem: &Problem, gamma: f64) -> Result<RoundReport> {
    state.check_problem(problem)?;
    check_stepsize(problem, gamma)?;
    let n = state.n();
    let grads = problem
        .clients()
        .iter()
        .map(|c| c.grad(&state.xbar))
        .collect::<Result<Vec<_>>>()?;
    let mean = pairwise_mean(grads.iter().map(Vec::as_slice), state.dim());
    for (x, g) in state.xbar.iter_mut().zip(&mean) {
        *x -= gamma * g;
    }
    let mut report = RoundReport::new(n);
    for (client, a) in state.clients.iter_mut().zip(report.activity.iter_mut()) {
        client.x.copy_from_slice(&state.xbar);
        *a = ClientActivity {
            grad_evals: 1,
            uplink: 1,
            downlink: 1,
        };
    }
    state.round += 1;
    state.local_steps += 1;
    state.comm_rounds += 1;
    report.communicated = true;
    Ok(report.commit(state))
}

/// One Scaffold round with control variates updated by the second option of
/// the original method.
///
/// Each client in `Ω` starts from `x̄`, runs `K` steps
/// `y ← y − γ_l(∇f_i(y) − c_i + c)`, then sets
/// `c_i⁺ = c_i − c + (x̄ − y)/(Kγ_l)`. The server moves to the mean of the
/// `y_i` and sets `c ← c + (1/n) Σ_{i∈Ω} (c_i⁺ − c_i)`. The client controls
/// `c_i` are stored in `h_i`.
pub fn scaffold_round(
    state: &mut FederatedState,
    problem: &Problem,
    stepsize: f64,
    k: u64,
    omega: &[usize],
) -> Result<RoundReport> {
    state.check_problem(problem)?;
    let n = state.n();
    ParticipationPlan::new(n, omega.to_vec(), k.max(1))?;
    if k == 0 {
        return Err(Error::InvalidParameter(
            "Scaffold needs K >= 1 local steps".into(),
        ));
    }
    if !(stepsize > 0.0 && stepsize.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "stepsize={stepsize} must be positive"
        )));
    }
    let d = state.dim();
    let mut report = RoundReport::new(n);
    let mut scratch = vec![0.0; d];
    let mut correction = vec![0.0; d];
    let mut control_delta_sum: Vec<Vec<f64>> = Vec::with_capacity(omega.len());
    let server_control = state.server_control.clone();
    for &i in omega {
        let client = &mut state.clients[i];
        client.x.copy_from_slice(&state.xbar);
        // Local step uses ∇f_i(y) − (c_i − c).
        for ((corr, ci), c) in correction.iter_mut().zip(&client.h).zip(&server_control) {
            *corr = ci - c;
        }
        for _ in 0..k {
            local_gradient_step(
                &problem.clients()[i],
                &mut client.x,
                &correction,
                stepsize,
                &mut scratch,
            )?;
        }
        let inv = 1.0 / (k as f64 * stepsize);
        let delta: Vec<f64> = state
            .xbar
            .iter()
            .zip(&client.x)
            .zip(&server_control)
            .map(|((xb, y), c)| -c + (xb - y) * inv)
            .collect();
        for (h, dh) in client.h.iter_mut().zip(&delta) {
            *h += dh;
        }
        control_delta_sum.push(delta);
        report.activity[i] = ClientActivity {
            grad_evals: k,
            uplink: 1,
            downlink: 1,
        };
    }
    let xbar = mean_over(state, omega, |c| &c.x);
    let summed = crate::linalg::pairwise_sum(control_delta_sum.iter().map(Vec::as_slice), d);
    for (c, s) in state.server_control.iter_mut().zip(&summed) {
        *c += s / n as f64;
    }
    state.xbar = xbar;
    state.round += 1;
    state.local_steps += k;
    state.comm_rounds += 1;
    report.communicated = true;
    Ok(report.commit(state))
}

/// Exact conditional expectation of the single-loop Lyapunov function after
/// one [`single_loop_step`] from `state`: the no-communication branch with
/// weight `1 − p`, plus every `s`-subset with weight `p / C(n, s)`.
pub fn expected_single_loop_lyapunov(
    state: &FederatedState,
    problem: &Problem,
    params: &AlgoParams,
    reference: &ReferencePoint,
) -> Result<f64> {
    let theory = params.theory(problem.n());
    let psi =
        |s: &FederatedState| single_loop_lyapunov(&s.models(), &s.controls(), &theory, reference);
    let mut expected = 0.0;
    if params.p < 1.0 {
        let mut next = state.clone();
        single_loop_step(&mut next, problem, params, false, None)?;
        expected += (1.0 - params.p) * psi(&next)?;
    }
    let subsets = enumerate_subsets(problem.n(), params.s)?;
    let weight = params.p / subsets.len() as f64;
    for omega in &subsets {
        let mut next = state.clone();
        single_loop_step(&mut next, problem, params, true, Some(omega))?;
        expected += weight * psi(&next)?;
    }
    Ok(expected)
}

/// Metrics recorded after each communication round.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepTrace {
    pub round: u64,
    pub total_local_steps: u64,
    pub comm_rounds: u64,
    /// `‖x̄ − x*‖²`.
    pub sq_dist: f64,
    /// `sq_dist` divided by its value at round 0.
    pub sq_dist_rel: f64,
    pub lyapunov: f64,
    /// `‖∇f(x̄)‖²`.
    pub grad_norm_sq: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Algorithm {
    Tamuna,
    /// The single-loop form; with `s = n` this is Scaffnew.
    SingleLoop,
    Gd,
    Scaffold {
        local_steps: u64,
        stepsize: f64,
    },
}

impl Algorithm {
    /// Scaffold with `K` local steps and stepsize `1/(81 L K)`.
    pub fn scaffold_default(problem: &Problem, local_steps: u64) -> Self {
        Self::Scaffold {
            local_steps,
            stepsize: 1.0 / (81.0 * problem.smoothness() * local_steps as f64),
        }
    }
}

/// Why a run stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    TargetReached,
    BudgetExhausted,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunSummary {
    pub stop: StopReason,
    pub last: StepTrace,
}

/// Number of Bernoulli(`p`) flips up to and including the first success,
/// which follows the geometric law of mean `1/p`.
fn flips_until_heads(coins: &mut SeededGenerator, p: f64) -> Result<u64> {
    for k in 1..=GEOMETRIC_CAP {
        if coins.bernoulli(p)? {
            return Ok(k);
        }
    }
    Err(Error::GeometricCapExceeded {
        cap: GEOMETRIC_CAP,
        p,
    })
}

/// Drives one algorithm, drawing every random quantity at the top of each
/// round from seed-derived streams.
///
/// TAMUNA's local-step count is drawn by flipping the same coins the
/// single-loop form flips, so both produce the same trajectory at
/// communication times for a shared seed.
#[derive(Debug, Clone)]
pub struct Simulation<'a> {
    problem: &'a Problem,
    reference: &'a ReferencePoint,
    algorithm: Algorithm,
    params: AlgoParams,
    state: FederatedState,
    streams: RandomStreams,
    initial_sq_dist: f64,
}

impl<'a> Simulation<'a> {
    pub fn new(
        problem: &'a Problem,
        reference: &'a ReferencePoint,
        algorithm: Algorithm,
        params: AlgoParams,
        state: FederatedState,
    ) -> Result<Self> {
        state.check_problem(problem)?;
        if reference.x_star.len() != problem.dim() || reference.h_star.len() != problem.n() {
            return Err(Error::InvalidParameter(
                "reference point does not match the problem".into(),
            ));
        }
        if let Algorithm::Scaffold { local_steps: 0, .. } = algorithm {
            return Err(Error::InvalidParameter(
                "Scaffold needs K >= 1 local steps".into(),
            ));
        }
        let initial_sq_dist = dist_sq(&state.xbar, &reference.x_star);
        Ok(Self {
            problem,
            reference,
            algorithm,
            streams: RandomStreams::from_seed(params.seed),
            params,
            state,
            initial_sq_dist,
        })
    }

    pub fn state(&self) -> &FederatedState {
        &self.state
    }

    pub fn params(&self) -> &AlgoParams {
        &self.params
    }

    pub fn algorithm(&self) -> Algorithm {
        self.algorithm
    }

    /// Parameters used in the Lyapunov column.
    fn theory(&self) -> TheoryParams {
        let n = self.problem.n();
        match self.algorithm {
            Algorithm::Scaffold {
                local_steps,
                stepsize,
            } => TheoryParams {
                gamma: stepsize,
                p: 1.0 / local_steps as f64,
                chi: self.params.chi,
                n,
                s: self.params.s,
            },
            _ => self.params.theory(n),
        }
    }

    /// Metrics of the current state.
    pub fn trace(&self) -> Result<StepTrace> {
        let sq_dist = dist_sq(&self.state.xbar, &self.reference.x_star);
        let n = self.problem.n() as f64;
        let lyap = match self.algorithm {
            // No control variates: only the model term.
            Algorithm::Gd => n / self.params.gamma * sq_dist,
            _ => lyapunov(
                &self.state.xbar,
                &self.state.controls(),
                &self.theory(),
                self.reference,
            )?,
        };
        Ok(StepTrace {
            round: self.state.round,
            total_local_steps: self.state.local_steps,
            comm_rounds: self.state.comm_rounds,
            sq_dist,
            sq_dist_rel: if self.initial_sq_dist > 0.0 {
                sq_dist / self.initial_sq_dist
            } else {
                0.0
            },
            lyapunov: lyap,
            grad_norm_sq: norm_sq(&self.problem.grad(&self.state.xbar)?),
        })
    }

    /// Advances to the next communication round and returns its metrics.
    pub fn advance(&mut self) -> Result<RoundReport> {
        let n = self.problem.n();
        let s = self.params.s;
        let report = match self.algorithm {
            Algorithm::Tamuna => {
                let plan = match self.params.local_steps {
                    LocalStepsMode::Geometric => {
                        let local_steps =
                            flips_until_heads(&mut self.streams.coins, self.params.p)?;
                        let omega = self.streams.subsets.sample_subset(n, s)?;
                        ParticipationPlan::new(n, omega, local_steps)?
                    }
                    LocalStepsMode::Fixed(k) => {
                        ParticipationPlan::draw_fixed(&mut self.streams, n, s, k)?
                    }
                };
                tamuna_round(&mut self.state, self.problem, &self.params, &plan)?
            }
            Algorithm::SingleLoop => {
                let mut total = RoundReport::new(n);
                let mut iterations = 0u64;
                loop {
                    iterations += 1;
                    if iterations > GEOMETRIC_CAP {
                        return Err(Error::GeometricCapExceeded {
                            cap: GEOMETRIC_CAP,
                            p: self.params.p,
                        });
                    }
                    let theta = self.streams.coins.bernoulli(self.params.p)?;
                    let omega = if theta {
                        Some(self.streams.subsets.sample_subset(n, s)?)
                    } else {
                        None
                    };
                    let r = single_loop_step(
                        &mut self.state,
                        self.problem,
                        &self.params,
                        theta,
                        omega.as_deref(),
                    )?;
                    for (t, a) in total.activity.iter_mut().zip(&r.activity) {
                        t.add(a);
                    }
                    if theta {
                        total.communicated = true;
                        break total;
                    }
                }
            }
            Algorithm::Gd => gd_step(&mut self.state, self.problem, self.params.gamma)?,
            Algorithm::Scaffold {
                local_steps,
                stepsize,
            } => {
                let omega = self.streams.subsets.sample_subset(n, s)?;
                scaffold_round(&mut self.state, self.problem, stepsize, local_steps, &omega)?
            }
        };
        let sq_dist = dist_sq(&self.state.xbar, &self.reference.x_star);
        let limit = DIVERGENCE_FACTOR * self.initial_sq_dist;
        if !sq_dist.is_finite() || (self.initial_sq_dist > 0.0 && sq_dist > limit) {
            return Err(Error::Diverged { sq_dist, limit });
        }
        Ok(report)
    }

    /// Runs until `sq_dist_rel ≤ target` or `params.rounds` communication
    /// rounds, calling `on_trace` for round 0 and after every round.
    pub fn run<F>(&mut self, target: f64, mut on_trace: F) -> Result<RunSummary>
    where
        F: FnMut(&StepTrace),
    {
        let mut last = self.trace()?;
        on_trace(&last);
        loop {
            if last.sq_dist_rel <= target {
                return Ok(RunSummary {
                    stop: StopReason::TargetReached,
                    last,
                });
            }
            if self.state.comm_rounds >= self.params.rounds {
                return Ok(RunSummary {
                    stop: StopReason::BudgetExhausted,
                    last,
                });
            }
            self.advance()?;
            last = self.trace()?;
            on_trace(&last);
        }
    }
}
