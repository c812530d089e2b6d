//! Seeded experiment runner: single runs, multi-seed suites, aggregation.

use std::collections::BTreeMap;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::env::Environment;
use crate::error::Result;
use crate::estimator::SigmaBranch;
use crate::policy::{build_policy, Policy, PolicyKind};

/// Slack on the step-size cap `alpha w_t^2 <= 1/8`.
pub const STEP_CAP_SLACK: f64 = 1e-9;
/// Relative tolerance on the post-update `w_t` identity.
pub const W_IDENTITY_TOL: f64 = 1e-8;

/// One row of per-round output.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoundRecord {
    pub round: usize,
    pub instant_regret: f64,
    pub cum_regret: f64,
    /// Wall time of `select` plus `observe` only.
    pub per_round_time_ns: u64,
    pub sigma_t: Option<f64>,
    pub w_t: Option<f64>,
    pub tau_t: Option<f64>,
    pub beta_t: Option<f64>,
    pub active_sigma_branch: Option<SigmaBranch>,
    pub c_t_applied: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunFailure {
    pub round: usize,
    pub message: String,
}

/// Run-level invariant checks. The OMD-specific fields are present only for
/// the policies that run the OMD estimator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunInvariants {
    pub corruption_ledger: f64,
    pub corruption_budget: f64,
    pub ledger_within_budget: bool,
    pub regret_monotone: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub omd: Option<OmdInvariants>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OmdInvariants {
    pub sum_w_sq: f64,
    pub two_kappa: f64,
    pub potential_ok: bool,
    pub max_alpha_w_sq: f64,
    pub step_cap_ok: bool,
    pub max_w_identity_err: f64,
    pub w_identity_ok: bool,
    pub max_theta_norm: f64,
    pub feasible: bool,
    pub beta_monotone: bool,
}

impl OmdInvariants {
    pub fn passed(&self) -> bool {
        self.potential_ok
            && self.step_cap_ok
            && self.w_identity_ok
            && self.feasible
            && self.beta_monotone
    }
}

impl RunInvariants {
    pub fn passed(&self) -> bool {
        self.ledger_within_budget
            && self.regret_monotone
            && self.omd.as_ref().is_none_or(|o| o.passed())
    }
}

/// Output of one `(algo, seed)` run.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub algo: PolicyKind,
    pub seed: u64,
    pub records: Vec<RoundRecord>,
    pub failure: Option<RunFailure>,
    pub invariants: RunInvariants,
}

impl RunResult {
    pub fn ok(&self) -> bool {
        self.failure.is_none() && self.invariants.passed()
    }

    pub fn final_cum_regret(&self) -> f64 {
        self.records.last().map_or(0.0, |r| r.cum_regret)
    }

    pub fn total_policy_time_ns(&self) -> u64 {
        self.records.iter().map(|r| r.per_round_time_ns).sum()
    }
}

/// Run one seed of one policy. `observer` sees the policy after every round.
pub fn run_single_observed(
    config: &ExperimentConfig,
    algo: PolicyKind,
    seed: u64,
    observer: &mut dyn FnMut(usize, &dyn Policy),
) -> Result<RunResult> {
    config.validate()?;
    let params = config.schedule_params()?;
    let mut env = Environment::new(
        seed,
        config.d,
        config.arms,
        config.noise.clone(),
        config.corruption,
    )?;
    let mut policy = build_policy(algo, &params, config.oful_noise_scale()?)?;

    let mut records = Vec::with_capacity(config.horizon);
    let mut cum = 0.0;
    let mut failure = None;
    let mut regret_monotone = true;

    for t in 1..=config.horizon {
        let set = env.decision_set();

        let start = Instant::now();
        let chosen = match policy.select(&set) {
            Ok(k) => k,
            Err(e) => {
                failure = Some(RunFailure {
                    round: t,
                    message: e.to_string(),
                });
                break;
            }
        };
        let select_time = start.elapsed();

        let x = &set[chosen];
        let draw = env.pull(x)?;
        let instant = crate::env::regret_increment(&set, chosen, &env.instance.theta_star);

        let start = Instant::now();
        let observed = policy.observe(x, draw.reward, draw.nu_t);
        let observe_time = start.elapsed();
        if let Err(e) = observed {
            failure = Some(RunFailure {
                round: t,
                message: e.to_string(),
            });
            break;
        }

        let next = cum + instant;
        regret_monotone &= next >= cum;
        cum = next;
        let diag = policy.diagnostics();
        let nanos = (select_time + observe_time).as_nanos().max(1);
        records.push(RoundRecord {
            round: t,
            instant_regret: instant,
            cum_regret: cum,
            per_round_time_ns: u64::try_from(nanos).unwrap_or(u64::MAX),
            sigma_t: diag.sigma,
            w_t: diag.w,
            tau_t: diag.tau,
            beta_t: diag.beta,
            active_sigma_branch: diag.branch,
            c_t_applied: draw.corruption,
        });
        observer(t, policy.as_ref());
    }

    let omd = policy.estimator().map(|s| {
        let c = s.checks;
        let two_kappa = 2.0 * s.kappa;
        OmdInvariants {
            sum_w_sq: c.sum_w_sq,
            two_kappa,
            potential_ok: c.sum_w_sq <= two_kappa,
            max_alpha_w_sq: c.max_alpha_w_sq,
            step_cap_ok: c.max_alpha_w_sq <= 0.125 + STEP_CAP_SLACK,
            max_w_identity_err: c.max_w_identity_err,
            w_identity_ok: c.max_w_identity_err <= W_IDENTITY_TOL,
            max_theta_norm: c.max_theta_norm,
            feasible: c.max_theta_norm <= params.param_bound * (1.0 + 1e-9),
            beta_monotone: c.beta_monotone,
        }
    });
    let adv = env.adversary;
    Ok(RunResult {
        algo,
        seed,
        records,
        failure,
        invariants: RunInvariants {
            corruption_ledger: adv.ledger,
            corruption_budget: adv.budget,
            ledger_within_budget: adv.ledger <= adv.budget,
            regret_monotone,
            omd,
        },
    })
}

pub fn run_single(config: &ExperimentConfig, algo: PolicyKind, seed: u64) -> Result<RunResult> {
    run_single_observed(config, algo, seed, &mut |_, _| {})
}

/// How the independent runs of a suite are scheduled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    #[cfg_attr(not(feature = "parallel"), default)]
    Sequential,
    /// Worker pool capped by `BENCH_THREADS` when set.
    #[cfg(feature = "parallel")]
    #[default]
    Parallel,
}

/// Environment variable capping the number of concurrent runs.
pub const THREADS_ENV: &str = "BENCH_THREADS";

fn run_jobs(
    config: &ExperimentConfig,
    jobs: &[(PolicyKind, u64)],
    exec: Execution,
) -> Result<Vec<RunResult>> {
    match exec {
        Execution::Sequential => jobs
            .iter()
            .map(|&(a, s)| run_single(config, a, s))
            .collect(),
        #[cfg(feature = "parallel")]
        Execution::Parallel => {
            use rayon::prelude::*;
            let work = || {
                jobs.par_iter()
                    .map(|&(a, s)| run_single(config, a, s))
                    .collect::<Result<Vec<_>>>()
            };
            match std::env::var(THREADS_ENV)
                .ok()
                .and_then(|v| v.parse::<usize>().ok())
            {
                Some(n) if n > 0 => rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build()
                    .map_err(|e| crate::Error::Config(format!("thread pool: {e}")))?
                    .install(work),
                _ => work(),
            }
        }
    }
}

/// Per-round mean and population standard deviation across seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct SeriesStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl SeriesStats {
    pub fn from_series<'a>(series: impl IntoIterator<Item = &'a [f64]>) -> Self {
        let series: Vec<&[f64]> = series.into_iter().collect();
        let Some(len) = series.iter().map(|s| s.len()).min() else {
            return Self::default();
        };
        let n = series.len() as f64;
        let mut mean = Vec::with_capacity(len);
        let mut std = Vec::with_capacity(len);
        for t in 0..len {
            let m = series.iter().map(|s| s[t]).sum::<f64>() / n;
            let v = series.iter().map(|s| (s[t] - m).powi(2)).sum::<f64>() / n;
            mean.push(m);
            std.push(v.sqrt());
        }
        Self { mean, std }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub algo: PolicyKind,
    pub seed: u64,
    pub rounds_completed: usize,
    pub final_cum_regret: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub failure: Option<RunFailure>,
    pub invariants: RunInvariants,
    pub invariants_passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlgoAggregate {
    pub seeds: Vec<u64>,
    pub cum_regret: SeriesStats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlgoTiming {
    pub per_round_time_ns: SeriesStats,
    pub total_policy_time_ns: Vec<u64>,
}

/// Everything written to `summary.json`. `timing` is the only
/// non-deterministic section.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub config: ExperimentConfig,
    pub runs: Vec<RunSummary>,
    pub aggregates: BTreeMap<PolicyKind, AlgoAggregate>,
    pub all_passed: bool,
    pub timing: BTreeMap<PolicyKind, AlgoTiming>,
}

impl Summary {
    pub fn from_runs(config: &ExperimentConfig, runs: &[RunResult]) -> Self {
        let mut aggregates = BTreeMap::new();
        let mut timing = BTreeMap::new();
        for &algo in &config.algo {
            let ok: Vec<&RunResult> = runs
                .iter()
                .filter(|r| r.algo == algo && r.failure.is_none())
                .collect();
            if ok.is_empty() {
                continue;
            }
            let regret: Vec<Vec<f64>> = ok
                .iter()
                .map(|r| r.records.iter().map(|x| x.cum_regret).collect())
                .collect();
            let times: Vec<Vec<f64>> = ok
                .iter()
                .map(|r| {
                    r.records
                        .iter()
                        .map(|x| x.per_round_time_ns as f64)
                        .collect()
                })
                .collect();
            aggregates.insert(
                algo,
                AlgoAggregate {
                    seeds: ok.iter().map(|r| r.seed).collect(),
                    cum_regret: SeriesStats::from_series(regret.iter().map(Vec::as_slice)),
                },
            );
            timing.insert(
                algo,
                AlgoTiming {
                    per_round_time_ns: SeriesStats::from_series(times.iter().map(Vec::as_slice)),
                    total_policy_time_ns: ok.iter().map(|r| r.total_policy_time_ns()).collect(),
                },
            );
        }
        let summaries: Vec<RunSummary> = runs
            .iter()
            .map(|r| RunSummary {
                algo: r.algo,
                seed: r.seed,
                rounds_completed: r.records.len(),
                final_cum_regret: r.final_cum_regret(),
                failure: r.failure.clone(),
                invariants: r.invariants.clone(),
                invariants_passed: r.invariants.passed(),
            })
            .collect();
        Self {
            config: config.clone(),
            all_passed: runs.iter().all(RunResult::ok),
            runs: summaries,
            aggregates,
            timing,
        }
    }
}

/// All runs of a suite plus their aggregate.
#[derive(Debug, Clone)]
pub struct Suite {
    pub runs: Vec<RunResult>,
    pub summary: Summary,
}

/// Run every `(algo, seed)` pair; results are ordered by algo, then seed order.
pub fn run_suite_with(config: &ExperimentConfig, exec: Execution) -> Result<Suite> {
    config.validate()?;
    let jobs: Vec<(PolicyKind, u64)> = config
        .algo
        .iter()
        .flat_map(|&a| config.seeds.iter().map(move |&s| (a, s)))
        .collect();
    let runs = run_jobs(config, &jobs, exec)?;
    let summary = Summary::from_runs(config, &runs);
    Ok(Suite { runs, summary })
}

pub fn run_suite(config: &ExperimentConfig) -> Result<Suite> {
    run_suite_with(config, Execution::default())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::NoiseSpec;

    fn tiny(algo: PolicyKind, horizon: usize) -> ExperimentConfig {
        let mut c = ExperimentConfig::desk_scale(algo, NoiseSpec::none(), 0.0);
        c.horizon = horizon;
        c.seeds = vec![3];
        c
    }

    #[test]
    fn one_round_record() {
        let r = run_single(&tiny(PolicyKind::Crhvt, 1), PolicyKind::Crhvt, 3).unwrap();
        assert_eq!(r.records.len(), 1);
        let rec = r.records[0];
        assert!((0.0..=2.0).contains(&rec.instant_regret));
        assert_eq!(rec.cum_regret, rec.instant_regret);
        assert!(rec.per_round_time_ns > 0);
    }

    #[test]
    fn single_seed_std_is_zero() {
        let s = run_suite(&tiny(PolicyKind::Oful, 50)).unwrap();
        let agg = &s.summary.aggregates[&PolicyKind::Oful];
        assert!(agg.cum_regret.std.iter().all(|&v| v == 0.0));
        let run = &s.runs[0];
        for (m, r) in agg.cum_regret.mean.iter().zip(&run.records) {
            assert_eq!(*m, r.cum_regret);
        }
    }

    #[test]
    fn seeds_vary_decision_streams() {
        let mut c = tiny(PolicyKind::Crhvt, 40);
        c.seeds = (0..4).collect();
        let s = run_suite(&c).unwrap();
        let agg = &s.summary.aggregates[&PolicyKind::Crhvt];
        assert!(agg.cum_regret.std.last().copied().unwrap() > 0.0);
    }

    #[test]
    fn sequential_and_default_agree() {
        let mut c = tiny(PolicyKind::Crhvt, 60);
        c.algo = vec![PolicyKind::Crhvt, PolicyKind::Oful];
        c.seeds = vec![5, 1, 9];
        let a = run_suite_with(&c, Execution::Sequential).unwrap();
        let b = run_suite(&c).unwrap();
        let order: Vec<(PolicyKind, u64)> = b.runs.iter().map(|r| (r.algo, r.seed)).collect();
        assert_eq!(
            order,
            vec![
                (PolicyKind::Crhvt, 5),
                (PolicyKind::Crhvt, 1),
                (PolicyKind::Crhvt, 9),
                (PolicyKind::Oful, 5),
                (PolicyKind::Oful, 1),
                (PolicyKind::Oful, 9)
            ]
        );
        assert_eq!(a.summary.aggregates, b.summary.aggregates);
        assert_eq!(a.summary.runs, b.summary.runs);
    }

    #[test]
    fn prefix_sums() {
        let r = run_single(&tiny(PolicyKind::Hvtucb, 300), PolicyKind::Hvtucb, 3).unwrap();
        let mut acc = 0.0;
        for rec in &r.records {
            acc += rec.instant_regret;
            assert!((rec.cum_regret - acc).abs() <= 1e-9 * acc.max(1.0));
        }
    }
}
