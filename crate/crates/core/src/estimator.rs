//! Parameter schedules and the two-step online mirror descent estimator.
//!
//! Round `t` (1-based) uses `V_{t-1}` and `beta_{t-1}` to set the residual
//! scale `sigma_t`, the auxiliary `w_t` and the Huber threshold `tau_t`, then
//! updates `V_t = V_{t-1} + x x' / (alpha sigma_t^2)`, takes a preconditioned
//! gradient step on the Huber loss and projects back onto `||theta||_2 <= S`
//! in the `V_t`-norm. Everything is O(d^2) per round plus the projection.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{Metric, SpdState, Vector, DEFAULT_PROJECTION_TOL};
use crate::loss::loss_gradient;

/// Leading constant of the confidence radius.
pub const BETA_CONSTANT: f64 = 409.0;

/// Value returned by [`compute_tau`] when `w_t = 0`. It is never consumed:
/// a zero action makes the loss gradient zero regardless of the threshold.
pub const TAU_SENTINEL: f64 = f64::INFINITY;

/// Where the moment bound entering `sigma_t` comes from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum MomentMode {
    /// The per-round `nu_t` observed with the reward.
    #[default]
    PerRound,
    /// A single global upper bound replacing every `nu_t`.
    GlobalBound { nu: f64 },
}

/// Denominator used inside the log of `kappa`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum KappaVariant {
    /// `sigma_min^2 * lambda * alpha * d`, as in the algorithm listing.
    #[default]
    Algorithm,
    /// `4 * sigma_min^2 * lambda * d`, as in the confidence-radius lemma.
    Lemma,
}

/// Every scalar hyperparameter of the agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleParams {
    pub horizon: usize,
    pub dim: usize,
    pub epsilon: f64,
    /// Bound `L` on action norms.
    pub action_bound: f64,
    /// Bound `S` on the parameter norm.
    pub param_bound: f64,
    pub delta: f64,
    pub lambda: f64,
    pub alpha: f64,
    pub sigma_min: f64,
    /// The corruption level `C`, or an upper bound on it.
    pub corruption_budget: f64,
    #[serde(default)]
    pub moment: MomentMode,
    #[serde(default)]
    pub kappa_variant: KappaVariant,
}

impl ScheduleParams {
    /// `lambda = d`, `sigma_min = 1/sqrt(T)`, `delta = 1/(8T)`, `alpha = 8`,
    /// `L = S = 1`, known corruption level `corruption_budget`.
    pub fn theorem_defaults(
        horizon: usize,
        dim: usize,
        epsilon: f64,
        corruption_budget: f64,
    ) -> Self {
        let t = horizon.max(1) as f64;
        Self {
            horizon,
            dim,
            epsilon,
            action_bound: 1.0,
            param_bound: 1.0,
            delta: 1.0 / (8.0 * t),
            lambda: dim as f64,
            alpha: 8.0,
            sigma_min: 1.0 / t.sqrt(),
            corruption_budget,
            moment: MomentMode::PerRound,
            kappa_variant: KappaVariant::Algorithm,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::invalid(format!("{name} must be positive, got {v}")))
            }
        };
        if self.horizon == 0 {
            return Err(Error::invalid("horizon must be at least 1"));
        }
        if self.dim == 0 {
            return Err(Error::invalid("dimension must be at least 1"));
        }
        if !(self.epsilon > 0.0 && self.epsilon <= 1.0) {
            return Err(Error::invalid(format!(
                "epsilon must lie in (0, 1], got {}",
                self.epsilon
            )));
        }
        if !(self.delta > 0.0 && self.delta < 0.25) {
            return Err(Error::invalid(format!(
                "delta must lie in (0, 1/4), got {}",
                self.delta
            )));
        }
        positive("action_bound", self.action_bound)?;
        positive("param_bound", self.param_bound)?;
        positive("lambda", self.lambda)?;
        positive("alpha", self.alpha)?;
        positive("sigma_min", self.sigma_min)?;
        if !(self.corruption_budget.is_finite() && self.corruption_budget >= 0.0) {
            return Err(Error::invalid(format!(
                "corruption_budget must be nonnegative, got {}",
                self.corruption_budget
            )));
        }
        if let MomentMode::GlobalBound { nu } = self.moment {
            positive("nu", nu)?;
        }
        Ok(())
    }

    /// `(1 - eps) / (2 (1 + eps))`, the growth exponent shared by `beta_t`,
    /// `sigma_t` and `tau_t`.
    pub fn growth_exponent(&self) -> f64 {
        (1.0 - self.epsilon) / (2.0 * (1.0 + self.epsilon))
    }

    /// `log(2 T^2 / delta)`.
    pub fn log_confidence(&self) -> f64 {
        let t = self.horizon as f64;
        (2.0 * t * t / self.delta).ln()
    }

    fn growth(&self, t: usize) -> f64 {
        (t as f64).powf(self.growth_exponent())
    }
}

/// `kappa = d log(1 + L^2 T / denom)`.
pub fn compute_kappa(p: &ScheduleParams) -> f64 {
    let d = p.dim as f64;
    let denom = match p.kappa_variant {
        KappaVariant::Algorithm => p.sigma_min * p.sigma_min * p.lambda * p.alpha * d,
        KappaVariant::Lemma => 4.0 * p.sigma_min * p.sigma_min * p.lambda * d,
    };
    d * (p.action_bound * p.action_bound * p.horizon as f64 / denom).ln_1p()
}

pub fn compute_tau0(p: &ScheduleParams, kappa: f64) -> f64 {
    let t = p.horizon as f64;
    (2.0 * kappa).sqrt() * (3.0 * t).ln().powf(p.growth_exponent())
        / p.log_confidence().powf(1.0 / (1.0 + p.epsilon))
}

/// Confidence radius `beta_t`; `beta_0 = sqrt(lambda (2 + 4 S^2))`.
pub fn compute_beta(t: usize, p: &ScheduleParams, tau0: f64) -> f64 {
    let base = (p.lambda * (2.0 + 4.0 * p.param_bound * p.param_bound)).sqrt();
    if t == 0 {
        return base;
    }
    BETA_CONSTANT * p.log_confidence() * tau0 * p.growth(t) + base
}

/// Huber threshold `tau_t = tau0 sqrt(1 + w^2) / w * t^{exp}`.
pub fn compute_tau(t: usize, w: f64, tau0: f64, p: &ScheduleParams) -> f64 {
    if w == 0.0 {
        return TAU_SENTINEL;
    }
    tau0 * (1.0 + w * w).sqrt() / w * p.growth(t)
}

/// Which candidate attains the maximum in `sigma_t`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SigmaBranch {
    Nu,
    SigmaMin,
    Confidence,
    Corruption,
}

impl SigmaBranch {
    pub fn as_str(self) -> &'static str {
        match self {
            SigmaBranch::Nu => "nu",
            SigmaBranch::SigmaMin => "sigma_min",
            SigmaBranch::Confidence => "confidence",
            SigmaBranch::Corruption => "corruption",
        }
    }
}

/// `sigma_t` with its four candidate terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SigmaEval {
    pub sigma: f64,
    pub branch: SigmaBranch,
    /// `[nu_t, sigma_min, confidence term, corruption term]`
    pub terms: [f64; 4],
}

/// Per-round quantities of the most recent update.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RoundDiagnostics {
    pub sigma: f64,
    pub w: f64,
    pub tau: f64,
    pub beta: f64,
    pub branch: Option<SigmaBranch>,
}

/// Running checks of the step-size and potential identities over a run.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct InvariantTracker {
    pub sum_w_sq: f64,
    pub max_alpha_w_sq: f64,
    /// Largest relative gap of `||x/sigma||^2_{V_t^-1} = alpha w^2 / (1 + w^2)`.
    pub max_w_identity_err: f64,
    pub max_theta_norm: f64,
    pub beta_monotone: bool,
}

/// Round-indexed belief of the agent.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorState {
    /// Number of completed rounds; the next round is `round + 1`.
    pub round: usize,
    pub theta_hat: Vector,
    /// `V_{round}`.
    pub gram: SpdState,
    /// `beta_{round}`.
    pub beta_prev: f64,
    pub kappa: f64,
    pub tau0: f64,
    pub last: RoundDiagnostics,
    pub checks: InvariantTracker,
}

impl EstimatorState {
    pub fn new(p: &ScheduleParams) -> Result<Self> {
        p.validate()?;
        let kappa = compute_kappa(p);
        let tau0 = compute_tau0(p, kappa);
        Ok(Self {
            round: 0,
            theta_hat: Vector::zeros(p.dim),
            gram: SpdState::new(p.lambda, p.dim)?,
            beta_prev: compute_beta(0, p, tau0),
            kappa,
            tau0,
            last: RoundDiagnostics::default(),
            checks: InvariantTracker {
                beta_monotone: true,
                ..Default::default()
            },
        })
    }

    /// UCB score `<x, theta_hat> + beta_{t-1} ||x||_{V_{t-1}^-1}`.
    pub fn ucb_score(&self, x: &Vector) -> Result<f64> {
        Ok(x.dot(&self.theta_hat) + self.beta_prev * self.gram.norm(x, Metric::Inverse)?)
    }

    /// Four-way max defining `sigma_t` for the upcoming round.
    pub fn compute_sigma(&self, x: &Vector, nu_t: f64, p: &ScheduleParams) -> Result<SigmaEval> {
        let t = self.round + 1;
        let nu = match p.moment {
            MomentMode::PerRound => nu_t,
            MomentMode::GlobalBound { nu } => nu,
        };
        if !(nu.is_finite() && nu > 0.0) {
            return Err(Error::invalid(format!(
                "moment bound must be positive, got {nu}"
            )));
        }
        let xnorm = self.gram.norm(x, Metric::Inverse)?;
        let confidence =
            (2.0 * self.beta_prev / (self.tau0 * p.alpha.sqrt() * p.growth(t))).sqrt() * xnorm;
        let corruption = p.corruption_budget.sqrt() * self.kappa.powf(-0.25) * xnorm.sqrt();
        let terms = [nu, p.sigma_min, confidence, corruption];
        let branches = [
            SigmaBranch::Nu,
            SigmaBranch::SigmaMin,
            SigmaBranch::Confidence,
            SigmaBranch::Corruption,
        ];
        let mut best = 0;
        for k in 1..4 {
            if terms[k] > terms[best] {
                best = k;
            }
        }
        Ok(SigmaEval {
            sigma: terms[best],
            branch: branches[best],
            terms,
        })
    }

    /// `w_t = ||x / sigma||_{V_{t-1}^-1} / sqrt(alpha)`.
    pub fn compute_w(&self, x: &Vector, sigma: f64, p: &ScheduleParams) -> Result<f64> {
        Ok(self.gram.norm(x, Metric::Inverse)? / (sigma * p.alpha.sqrt()))
    }

    /// Update `V`, take the Huber gradient step, project, and advance `beta`.
    pub fn omd_step(
        &mut self,
        x: &Vector,
        r: f64,
        sigma: f64,
        tau: f64,
        p: &ScheduleParams,
    ) -> Result<()> {
        let t = self.round + 1;
        let alpha_w_sq = self.gram.quad_form(x, Metric::Inverse)? / (sigma * sigma);

        self.gram
            .rank_one_update(x, 1.0 / (p.alpha * sigma * sigma))?;

        let post = self.gram.quad_form(x, Metric::Inverse)? / (sigma * sigma);
        let w_sq = alpha_w_sq / p.alpha;
        let expected = p.alpha * w_sq / (1.0 + w_sq);
        if expected > 0.0 {
            let err = (post - expected).abs() / expected;
            self.checks.max_w_identity_err = self.checks.max_w_identity_err.max(err);
        }

        if tau.is_finite() {
            let grad = loss_gradient(&self.theta_hat, x, r, sigma, tau).gradient;
            let tilde = &self.theta_hat - self.gram.inverse() * grad;
            self.theta_hat =
                self.gram
                    .project_onto_ball(&tilde, p.param_bound, DEFAULT_PROJECTION_TOL)?;
        } else if x.iter().any(|&v| v != 0.0) {
            return Err(Error::numeric(
                "non-finite Huber threshold on a nonzero action",
            ));
        }
        if self.theta_hat.iter().any(|v| !v.is_finite()) {
            return Err(Error::numeric(format!("non-finite estimate at round {t}")));
        }

        let beta = compute_beta(t, p, self.tau0);
        if beta < self.beta_prev {
            self.checks.beta_monotone = false;
        }
        self.beta_prev = beta;
        self.round = t;

        self.checks.sum_w_sq += w_sq;
        self.checks.max_alpha_w_sq = self.checks.max_alpha_w_sq.max(alpha_w_sq);
        self.checks.max_theta_norm = self.checks.max_theta_norm.max(self.theta_hat.norm());
        Ok(())
    }

    /// One full round after the action is chosen: sigma, w, tau, then the OMD step.
    pub fn observe(&mut self, x: &Vector, r: f64, nu_t: f64, p: &ScheduleParams) -> Result<()> {
        let t = self.round + 1;
        let sigma = self.compute_sigma(x, nu_t, p)?;
        let w = self.compute_w(x, sigma.sigma, p)?;
        let tau = compute_tau(t, w, self.tau0, p);
        self.omd_step(x, r, sigma.sigma, tau, p)?;
        self.last = RoundDiagnostics {
            sigma: sigma.sigma,
            w,
            tau,
            beta: self.beta_prev,
            branch: Some(sigma.branch),
        };
        Ok(())
    }
}
