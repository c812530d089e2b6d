//! Synthetic linear contextual bandit with heavy-tailed noise and a
//! sign-flipping corruption adversary.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Pareto, StandardNormal, StudentT};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Vector;

/// Independent RNG streams derived from one run seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Theta = 1,
    Contexts = 2,
    Noise = 3,
}

pub fn stream_rng(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}

/// Uniform draw from the unit sphere in `R^d`.
pub fn random_unit_vector<R: Rng + ?Sized>(rng: &mut R, d: usize) -> Vector {
    loop {
        let g = Vector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
        let n = g.norm();
        if n > 0.0 {
            return g / n;
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub theta_star: Vector,
    pub dim: usize,
    pub arms: usize,
    pub seed: u64,
}

impl Instance {
    pub const ACTION_BOUND: f64 = 1.0;
    pub const PARAM_BOUND: f64 = 1.0;
}

pub fn sample_instance(seed: u64, dim: usize, arms: usize) -> Result<Instance> {
    if dim == 0 || arms == 0 {
        return Err(Error::invalid("instance needs d >= 1 and K >= 1"));
    }
    let mut rng = stream_rng(seed, Stream::Theta);
    Ok(Instance {
        theta_star: random_unit_vector(&mut rng, dim),
        dim,
        arms,
        seed,
    })
}

pub fn sample_decision_set<R: Rng + ?Sized>(rng: &mut R, dim: usize, arms: usize) -> Vec<Vector> {
    (0..arms).map(|_| random_unit_vector(rng, dim)).collect()
}

/// Noise distribution. The Pareto variant is shifted by its population mean
/// so it is zero-mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseKind {
    StudentT { df: f64 },
    CenteredPareto { shape: f64, x_min: f64 },
    Gaussian { sd: f64 },
    None,
}

/// Noise distribution plus the `(epsilon, nu)` pair declared to the learner.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    #[serde(flatten)]
    pub kind: NoiseKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nu: Option<f64>,
    /// Optional per-round `nu_t` sequence; must cover the horizon.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nu_schedule: Option<Vec<f64>>,
}

/// Declared bound for a zero-noise stream.
pub const NOISELESS_NU: f64 = 1e-6;
/// Default moment order for Pareto noise.
pub const PARETO_DEFAULT_EPSILON: f64 = 0.4;

impl NoiseSpec {
    pub fn new(kind: NoiseKind) -> Self {
        Self {
            kind,
            epsilon: None,
            nu: None,
            nu_schedule: None,
        }
    }

    pub fn student_t3() -> Self {
        Self::new(NoiseKind::StudentT { df: 3.0 })
    }

    pub fn pareto_1_5() -> Self {
        Self::new(NoiseKind::CenteredPareto {
            shape: 1.5,
            x_min: 1.0,
        })
    }

    pub fn none() -> Self {
        Self::new(NoiseKind::None)
    }

    /// Declared `(epsilon, nu)`.
    ///
    /// Student-t(df > 2) declares the standard deviation with `epsilon = 1`.
    /// Pareto declares `nu = E[X^{1+eps}]^{1/(1+eps)}` of the uncentered
    /// variable, which for shape 1.5, `x_min = 1`, `eps = 0.4` is `15^{1/1.4}`.
    pub fn declared(&self) -> Result<(f64, f64)> {
        let (eps_default, nu_default) = match self.kind {
            NoiseKind::StudentT { df } => {
                let nu = if df > 2.0 {
                    Some((df / (df - 2.0)).sqrt())
                } else {
                    None
                };
                (1.0, nu)
            }
            NoiseKind::CenteredPareto { shape, x_min } => {
                let eps = self.epsilon.unwrap_or(PARETO_DEFAULT_EPSILON);
                let p = 1.0 + eps;
                let nu = if shape > p {
                    Some((shape * x_min.powf(p) / (shape - p)).powf(1.0 / p))
                } else {
                    None
                };
                (PARETO_DEFAULT_EPSILON, nu)
            }
            NoiseKind::Gaussian { sd } => (1.0, Some(sd)),
            NoiseKind::None => (1.0, Some(NOISELESS_NU)),
        };
        let eps = self.epsilon.unwrap_or(eps_default);
        let nu = self
            .nu
            .or(nu_default)
            .ok_or_else(|| Error::Config(format!("noise {:?} needs an explicit nu", self.kind)))?;
        if !(eps > 0.0 && eps <= 1.0) || !(nu.is_finite() && nu > 0.0) {
            return Err(Error::Config(format!(
                "invalid declared noise bound ({eps}, {nu})"
            )));
        }
        Ok((eps, nu))
    }

    /// `nu_t` emitted with the reward of (1-based) round `t`.
    pub fn nu_at(&self, t: usize) -> Result<f64> {
        match &self.nu_schedule {
            Some(s) => s
                .get(t - 1)
                .copied()
                .ok_or_else(|| Error::Config(format!("nu_schedule has no entry for round {t}"))),
            None => self.declared().map(|(_, nu)| nu),
        }
    }

    pub fn sampler(&self) -> Result<NoiseSampler> {
        let s = match self.kind {
            NoiseKind::StudentT { df } => NoiseSampler::StudentT(
                StudentT::new(df).map_err(|e| Error::Config(format!("student_t: {e}")))?,
            ),
            NoiseKind::CenteredPareto { shape, x_min } => {
                if shape <= 1.0 {
                    return Err(Error::Config("centered Pareto needs shape > 1".into()));
                }
                let mean = shape * x_min / (shape - 1.0);
                NoiseSampler::Pareto(
                    Pareto::new(x_min, shape).map_err(|e| Error::Config(format!("pareto: {e}")))?,
                    mean,
                )
            }
            NoiseKind::Gaussian { sd } => NoiseSampler::Gaussian(
                Normal::new(0.0, sd).map_err(|e| Error::Config(format!("gaussian: {e}")))?,
            ),
            NoiseKind::None => NoiseSampler::None,
        };
        Ok(s)
    }
}

#[derive(Debug, Clone, Copy)]
pub enum NoiseSampler {
    StudentT(StudentT<f64>),
    Pareto(Pareto<f64>, f64),
    Gaussian(Normal<f64>),
    None,
}

impl NoiseSampler {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            NoiseSampler::StudentT(d) => d.sample(rng),
            NoiseSampler::Pareto(d, mean) => d.sample(rng) - mean,
            NoiseSampler::Gaussian(d) => d.sample(rng),
            NoiseSampler::None => 0.0,
        }
    }
}

/// Corruption mechanism.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CorruptionSpec {
    /// Replace `<x, theta*>` by its negative while the budget covers it.
    ThetaFlip { budget: f64 },
    #[default]
    None,
}

impl CorruptionSpec {
    pub fn budget(&self) -> f64 {
        match *self {
            CorruptionSpec::ThetaFlip { budget } => budget,
            CorruptionSpec::None => 0.0,
        }
    }
}

/// Remaining budget and the running total of applied `|c_t|`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdversaryState {
    pub spec: CorruptionSpec,
    pub budget: f64,
    pub ledger: f64,
    pub corrupted_rounds: usize,
}

impl AdversaryState {
    pub fn new(spec: CorruptionSpec) -> Result<Self> {
        let budget = spec.budget();
        if !(budget.is_finite() && budget >= 0.0) {
            return Err(Error::Config(format!(
                "corruption budget must be nonnegative, got {budget}"
            )));
        }
        Ok(Self {
            spec,
            budget,
            ledger: 0.0,
            corrupted_rounds: 0,
        })
    }

    pub fn remaining(&self) -> f64 {
        self.budget - self.ledger
    }

    /// Returns `(r, c)`. A flip is applied only when it fits in the budget;
    /// partial flips are never made.
    pub fn apply_corruption(
        &mut self,
        x: &Vector,
        theta_star: &Vector,
        r_prime: f64,
    ) -> (f64, f64) {
        match self.spec {
            CorruptionSpec::None => (r_prime, 0.0),
            CorruptionSpec::ThetaFlip { .. } => {
                let c = -2.0 * x.dot(theta_star);
                if c != 0.0 && self.ledger + c.abs() <= self.budget {
                    self.ledger += c.abs();
                    self.corrupted_rounds += 1;
                    (r_prime + c, c)
                } else {
                    (r_prime, 0.0)
                }
            }
        }
    }
}

/// Gap between the best arm's mean reward and the chosen arm's.
pub fn regret_increment(decision_set: &[Vector], chosen: usize, theta_star: &Vector) -> f64 {
    let best = decision_set
        .iter()
        .map(|x| x.dot(theta_star))
        .fold(f64::NEG_INFINITY, f64::max);
    (best - decision_set[chosen].dot(theta_star)).max(0.0)
}

/// Everything the environment produces for one pulled arm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardDraw {
    pub reward: f64,
    pub clean_reward: f64,
    pub noise: f64,
    pub corruption: f64,
    pub nu_t: f64,
}

/// A single simulated run: instance, context and noise streams, adversary.
#[derive(Debug, Clone)]
pub struct Environment {
    pub instance: Instance,
    pub noise: NoiseSpec,
    pub adversary: AdversaryState,
    sampler: NoiseSampler,
    contexts: ChaCha8Rng,
    noise_rng: ChaCha8Rng,
    round: usize,
}

impl Environment {
    pub fn new(
        seed: u64,
        dim: usize,
        arms: usize,
        noise: NoiseSpec,
        corruption: CorruptionSpec,
    ) -> Result<Self> {
        noise.declared()?;
        Ok(Self {
            instance: sample_instance(seed, dim, arms)?,
            sampler: noise.sampler()?,
            noise,
            adversary: AdversaryState::new(corruption)?,
            contexts: stream_rng(seed, Stream::Contexts),
            noise_rng: stream_rng(seed, Stream::Noise),
            round: 0,
        })
    }

    /// Fresh decision set for the next round.
    pub fn decision_set(&mut self) -> Vec<Vector> {
        sample_decision_set(&mut self.contexts, self.instance.dim, self.instance.arms)
    }

    /// Reward for pulling `x`; advances the round.
    pub fn pull(&mut self, x: &Vector) -> Result<RewardDraw> {
        self.round += 1;
        let mean = x.dot(&self.instance.theta_star);
        let noise = self.sampler.sample(&mut self.noise_rng);
        let clean = mean + noise;
        let (reward, corruption) =
            self.adversary
                .apply_corruption(x, &self.instance.theta_star, clean);
        Ok(RewardDraw {
            reward,
            clean_reward: clean,
            noise,
            corruption,
            nu_t: self.noise.nu_at(self.round)?,
        })
    }
}
