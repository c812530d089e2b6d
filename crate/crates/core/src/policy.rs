//! Arm-selection policies: the robust OMD agent and its baselines.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::{compute_kappa, compute_tau0, EstimatorState, ScheduleParams, SigmaBranch};
use crate::linalg::{Metric, SpdState, Vector, DEFAULT_PROJECTION_TOL};
use crate::loss::{pseudo_huber_deriv, pseudo_huber_second, pseudo_huber_value};

/// Index of the largest score; ties go to the lowest index.
pub fn argmax_lowest(scores: impl IntoIterator<Item = f64>) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, s) in scores.into_iter().enumerate() {
        match best {
            Some((_, b)) if s <= b => {}
            _ => best = Some((i, s)),
        }
    }
    best.map(|(i, _)| i)
}

/// Quantities recorded for the most recent `observe`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PolicyDiagnostics {
    pub sigma: Option<f64>,
    pub w: Option<f64>,
    pub tau: Option<f64>,
    pub beta: Option<f64>,
    pub branch: Option<SigmaBranch>,
    pub solver_iterations: Option<usize>,
    pub solver_converged: Option<bool>,
}

/// Common contract of every policy driven by the harness.
pub trait Policy: Send {
    fn kind(&self) -> PolicyKind;

    /// Deterministic choice; ties broken by lowest index.
    fn select(&self, decision_set: &[Vector]) -> Result<usize>;

    /// Feed back the reward of the chosen action and advance one round.
    fn observe(&mut self, x: &Vector, reward: f64, nu_t: f64) -> Result<()>;

    fn estimate(&self) -> &Vector;

    fn diagnostics(&self) -> PolicyDiagnostics;

    /// Step-size and potential checks, for the estimators that track them.
    fn estimator(&self) -> Option<&EstimatorState> {
        None
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolicyKind {
    Crhvt,
    Hvtucb,
    Oful,
    Gadaoful,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 4] = [
        PolicyKind::Crhvt,
        PolicyKind::Hvtucb,
        PolicyKind::Oful,
        PolicyKind::Gadaoful,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PolicyKind::Crhvt => "crhvt",
            PolicyKind::Hvtucb => "hvtucb",
            PolicyKind::Oful => "oful",
            PolicyKind::Gadaoful => "gadaoful",
        }
    }

    /// Whether runs of this policy report the OMD invariant checks.
    pub fn tracks_invariants(self) -> bool {
        matches!(self, PolicyKind::Crhvt | PolicyKind::Hvtucb)
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PolicyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PolicyKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown policy {s:?}")))
    }
}

fn check_nonempty(decision_set: &[Vector]) -> Result<()> {
    if decision_set.is_empty() {
        return Err(Error::invalid("empty decision set"));
    }
    Ok(())
}

/// The corruption- and heavy-tail-robust OMD agent.
#[derive(Debug, Clone)]
pub struct CrHvtPolicy {
    kind: PolicyKind,
    params: ScheduleParams,
    state: EstimatorState,
}

impl CrHvtPolicy {
    pub fn new(params: ScheduleParams) -> Result<Self> {
        Ok(Self {
            kind: PolicyKind::Crhvt,
            state: EstimatorState::new(&params)?,
            params,
        })
    }

    /// The heavy-tail-only agent: the same estimator with zero corruption level.
    pub fn hvtucb(mut params: ScheduleParams) -> Result<Self> {
        params.corruption_budget = 0.0;
        let mut p = Self::new(params)?;
        p.kind = PolicyKind::Hvtucb;
        Ok(p)
    }

    pub fn params(&self) -> &ScheduleParams {
        &self.params
    }

    pub fn state(&self) -> &EstimatorState {
        &self.state
    }
}

impl Policy for CrHvtPolicy {
    fn kind(&self) -> PolicyKind {
        self.kind
    }

    fn select(&self, decision_set: &[Vector]) -> Result<usize> {
        check_nonempty(decision_set)?;
        let scores = decision_set
            .iter()
            .map(|x| self.state.ucb_score(x))
            .collect::<Result<Vec<_>>>()?;
        Ok(argmax_lowest(scores).expect("nonempty"))
    }

    fn observe(&mut self, x: &Vector, reward: f64, nu_t: f64) -> Result<()> {
        self.state.observe(x, reward, nu_t, &self.params)
    }

    fn estimate(&self) -> &Vector {
        &self.state.theta_hat
    }

    fn diagnostics(&self) -> PolicyDiagnostics {
        let d = self.state.last;
        PolicyDiagnostics {
            sigma: Some(d.sigma),
            w: Some(d.w),
            tau: Some(d.tau),
            beta: Some(d.beta),
            branch: d.branch,
            ..Default::default()
        }
    }

    fn estimator(&self) -> Option<&EstimatorState> {
        Some(&self.state)
    }
}

/// Ridge-regression UCB without any robustification.
#[derive(Debug, Clone)]
pub struct OfulPolicy {
    noise_scale: f64,
    lambda: f64,
    delta: f64,
    action_bound: f64,
    param_bound: f64,
    gram: SpdState,
    moment: Vector,
    theta: Vector,
    rounds: usize,
}

impl OfulPolicy {
    pub fn new(params: &ScheduleParams, noise_scale: f64) -> Result<Self> {
        params.validate()?;
        if !(noise_scale.is_finite() && noise_scale > 0.0) {
            return Err(Error::invalid(format!(
                "OFUL noise scale must be positive, got {noise_scale}"
            )));
        }
        Ok(Self {
            noise_scale,
            lambda: params.lambda,
            delta: params.delta,
            action_bound: params.action_bound,
            param_bound: params.param_bound,
            gram: SpdState::new(params.lambda, params.dim)?,
            moment: Vector::zeros(params.dim),
            theta: Vector::zeros(params.dim),
            rounds: 0,
        })
    }

    /// `R sqrt(d ln((1 + t L^2 / lambda) / delta)) + sqrt(lambda) S` after `t` rounds.
    pub fn radius(&self) -> f64 {
        let d = self.gram.dim() as f64;
        let t = self.rounds as f64;
        let l2 = self.action_bound * self.action_bound;
        self.noise_scale * (d * ((1.0 + t * l2 / self.lambda) / self.delta).ln()).sqrt()
            + self.lambda.sqrt() * self.param_bound
    }

    pub fn gram(&self) -> &SpdState {
        &self.gram
    }
}

impl Policy for OfulPolicy {
    fn kind(&self) -> PolicyKind {
        PolicyKind::Oful
    }

    fn select(&self, decision_set: &[Vector]) -> Result<usize> {
        check_nonempty(decision_set)?;
        let beta = self.radius();
        let scores = decision_set
            .iter()
            .map(|x| Ok(x.dot(&self.theta) + beta * self.gram.norm(x, Metric::Inverse)?))
            .collect::<Result<Vec<_>>>()?;
        Ok(argmax_lowest(scores).expect("nonempty"))
    }

    fn observe(&mut self, x: &Vector, reward: f64, _nu_t: f64) -> Result<()> {
        self.gram.rank_one_update(x, 1.0)?;
        self.moment += x * reward;
        self.theta = self.gram.inverse() * &self.moment;
        self.rounds += 1;
        Ok(())
    }

    fn estimate(&self) -> &Vector {
        &self.theta
    }

    fn diagnostics(&self) -> PolicyDiagnostics {
        PolicyDiagnostics {
            beta: Some(self.radius()),
            ..Default::default()
        }
    }
}

/// One retained observation of the full re-solve baseline.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub x: Vector,
    pub reward: f64,
    pub sigma: f64,
    pub tau: f64,
}

/// Backtracking projected gradient settings for the full re-solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverSettings {
    pub grad_tol: f64,
    pub max_iterations: usize,
    pub armijo: f64,
    pub shrink: f64,
}

impl SolverSettings {
    /// Tolerance `1e-8`, at most `500 * ceil(ln T)` iterations.
    pub fn for_horizon(horizon: usize) -> Self {
        let logs = (horizon.max(2) as f64).ln().ceil() as usize;
        Self {
            grad_tol: 1e-8,
            max_iterations: 500 * logs.max(1),
            armijo: 1e-4,
            shrink: 0.5,
        }
    }
}

/// Outcome of one full re-solve.
#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub iterations: usize,
    pub converged: bool,
    /// Objective value at every accepted iterate, starting from the warm start.
    pub objective_trace: Vec<f64>,
}

/// Full-history pseudo-Huber regression re-solved every round.
///
/// A structural replica of the corruption-robust weighted OFUL baseline:
/// per-round cost grows linearly with the history length.
#[derive(Debug, Clone)]
pub struct GAdaOfulPolicy {
    params: ScheduleParams,
    settings: SolverSettings,
    history: Vec<Observation>,
    gram: SpdState,
    theta: Vector,
    tau0: f64,
    last_sigma: f64,
    last_tau: f64,
    last_report: Option<SolveReport>,
    failed_to_converge: usize,
}

impl GAdaOfulPolicy {
    pub fn new(params: ScheduleParams) -> Result<Self> {
        params.validate()?;
        // Finite-variance schedule: thresholds tau0 * sqrt(s) with the eps = 1 tau0.
        let mut fv = params.clone();
        fv.epsilon = 1.0;
        let tau0 = compute_tau0(&fv, compute_kappa(&fv));
        Ok(Self {
            settings: SolverSettings::for_horizon(params.horizon),
            history: Vec::with_capacity(params.horizon),
            gram: SpdState::new(params.lambda, params.dim)?,
            theta: Vector::zeros(params.dim),
            tau0,
            last_sigma: 0.0,
            last_tau: 0.0,
            last_report: None,
            failed_to_converge: 0,
            params,
        })
    }

    pub fn history(&self) -> &[Observation] {
        &self.history
    }

    pub fn last_report(&self) -> Option<&SolveReport> {
        self.last_report.as_ref()
    }

    pub fn failed_to_converge(&self) -> usize {
        self.failed_to_converge
    }

    pub fn settings_mut(&mut self) -> &mut SolverSettings {
        &mut self.settings
    }

    /// Confidence radius after `t` rounds in the `1/sigma^2`-weighted geometry.
    pub fn radius(&self) -> f64 {
        let p = &self.params;
        let d = p.dim as f64;
        let t = self.history.len() as f64;
        let l2 = p.action_bound * p.action_bound;
        let growth = 1.0 + t * l2 / (d * p.lambda * p.sigma_min * p.sigma_min);
        (d * (growth / p.delta).ln()).sqrt() + p.lambda.sqrt() * p.param_bound
    }

    /// Objective `sum_s phi_{tau_s}((r_s - <x_s, theta>) / sigma_s) + lambda/2 ||theta||^2`
    /// and its gradient.
    pub fn objective(&self, theta: &Vector) -> (f64, Vector) {
        let mut value = 0.5 * self.params.lambda * theta.norm_squared();
        let mut grad = theta * self.params.lambda;
        for o in &self.history {
            let z = (o.reward - o.x.dot(theta)) / o.sigma;
            value += pseudo_huber_value(z, o.tau);
            grad.axpy(-pseudo_huber_deriv(z, o.tau) / o.sigma, &o.x, 1.0);
        }
        (value, grad)
    }

    /// Hessian of [`Self::objective`] at `theta`, bounded below by `lambda I`.
    pub fn hessian(&self, theta: &Vector) -> Result<SpdState> {
        let d = self.params.dim;
        let mut h = DMatrix::from_diagonal_element(d, d, self.params.lambda);
        for o in &self.history {
            let z = (o.reward - o.x.dot(theta)) / o.sigma;
            let c = pseudo_huber_second(z, o.tau) / (o.sigma * o.sigma);
            h.syger(c, &o.x, &o.x, 1.0);
        }
        h.fill_upper_triangle_with_lower_triangle();
        SpdState::from_matrix(h, self.params.lambda)
    }

    /// Re-solve the full objective from the current estimate by projected Newton:
    /// the Newton step is projected onto the ball in the Hessian metric, then
    /// shortened until the Armijo condition holds.
    pub fn solve(&mut self) -> Result<SolveReport> {
        let SolverSettings {
            grad_tol,
            max_iterations,
            armijo,
            shrink,
        } = self.settings;
        let radius = self.params.param_bound;
        let mut theta = self.theta.clone();
        let (mut f, mut g) = self.objective(&theta);
        let mut trace = vec![f];
        let mut converged = false;
        let mut iterations = 0;

        while iterations < max_iterations {
            let h = self.hessian(&theta)?;
            let newton = &theta - h.inverse() * &g;
            let full = h.project_onto_ball(&newton, radius, DEFAULT_PROJECTION_TOL)?;
            let delta = &full - &theta;
            if delta.norm() <= grad_tol {
                converged = true;
                break;
            }
            let decrease = g.dot(&delta);
            let mut step = 1.0;
            let (cand, next_f, next_g) = loop {
                let cand = &theta + &delta * step;
                let (cf, cg) = self.objective(&cand);
                if cf <= f + armijo * step * decrease || step < 1e-20 {
                    break (cand, cf, cg);
                }
                step *= shrink;
            };
            iterations += 1;
            if next_f > f {
                // Backtracking exhausted at round-off level; keep the best iterate.
                break;
            }
            let stalled = next_f == f;
            theta = cand;
            f = next_f;
            g = next_g;
            trace.push(f);
            if stalled {
                converged = true;
                break;
            }
        }

        self.theta = theta;
        if !converged {
            self.failed_to_converge += 1;
        }
        Ok(SolveReport {
            iterations,
            converged,
            objective_trace: trace,
        })
    }
}

impl Policy for GAdaOfulPolicy {
    fn kind(&self) -> PolicyKind {
        PolicyKind::Gadaoful
    }

    fn select(&self, decision_set: &[Vector]) -> Result<usize> {
        check_nonempty(decision_set)?;
        let beta = self.radius();
        let scores = decision_set
            .iter()
            .map(|x| Ok(x.dot(&self.theta) + beta * self.gram.norm(x, Metric::Inverse)?))
            .collect::<Result<Vec<_>>>()?;
        Ok(argmax_lowest(scores).expect("nonempty"))
    }

    fn observe(&mut self, x: &Vector, reward: f64, nu_t: f64) -> Result<()> {
        let p = &self.params;
        let s = self.history.len() + 1;
        let nu = match p.moment {
            crate::estimator::MomentMode::PerRound => nu_t,
            crate::estimator::MomentMode::GlobalBound { nu } => nu,
        };
        let xnorm = self.gram.norm(x, Metric::Inverse)?;
        let corruption = p.corruption_budget.sqrt() * (p.dim as f64).powf(-0.25) * xnorm.sqrt();
        let sigma = nu.max(p.sigma_min).max(corruption);
        let tau = self.tau0 * (s as f64).sqrt();

        self.gram.rank_one_update(x, 1.0 / (sigma * sigma))?;
        self.history.push(Observation {
            x: x.clone(),
            reward,
            sigma,
            tau,
        });
        self.last_sigma = sigma;
        self.last_tau = tau;
        let report = self.solve()?;
        if self.theta.iter().any(|v| !v.is_finite()) {
            return Err(Error::numeric(format!("non-finite estimate at round {s}")));
        }
        self.last_report = Some(report);
        Ok(())
    }

    fn estimate(&self) -> &Vector {
        &self.theta
    }

    fn diagnostics(&self) -> PolicyDiagnostics {
        PolicyDiagnostics {
            sigma: Some(self.last_sigma),
            tau: Some(self.last_tau),
            beta: Some(self.radius()),
            solver_iterations: self.last_report.as_ref().map(|r| r.iterations),
            solver_converged: self.last_report.as_ref().map(|r| r.converged),
            ..Default::default()
        }
    }
}

/// Policy factory used by the harness. `oful_noise_scale` is OFUL's `R`.
pub fn build_policy(
    kind: PolicyKind,
    params: &ScheduleParams,
    oful_noise_scale: f64,
) -> Result<Box<dyn Policy>> {
    Ok(match kind {
        PolicyKind::Crhvt => Box::new(CrHvtPolicy::new(params.clone())?),
        PolicyKind::Hvtucb => Box::new(CrHvtPolicy::hvtucb(params.clone())?),
        PolicyKind::Oful => Box::new(OfulPolicy::new(params, oful_noise_scale)?),
        PolicyKind::Gadaoful => Box::new(GAdaOfulPolicy::new(params.clone())?),
    })
}
