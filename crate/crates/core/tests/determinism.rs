mod common;

use common::{small, summary_without_timing};
use crhvt_core::env::NoiseSpec;
use crhvt_core::{run_suite, run_suite_with, Execution, PolicyKind};

const ALL: [PolicyKind; 4] = [
    PolicyKind::Crhvt,
    PolicyKind::Hvtucb,
    PolicyKind::Oful,
    PolicyKind::Gadaoful,
];

#[test]
fn summary_is_stable_across_invocations() {
    let cfg = small(&ALL, NoiseSpec::pareto_1_5(), 20.0, 150, &[4, 1, 9]);
    let a = summary_without_timing(&run_suite(&cfg).unwrap().summary);
    let b = summary_without_timing(&run_suite(&cfg).unwrap().summary);
    assert_eq!(a, b);
}

#[test]
fn sequential_and_default_execution_agree() {
    let cfg = small(&ALL, NoiseSpec::student_t3(), 5.0, 120, &[0, 1, 2, 3]);
    let seq = run_suite_with(&cfg, Execution::Sequential).unwrap();
    let def = run_suite_with(&cfg, Execution::default()).unwrap();
    assert_eq!(
        summary_without_timing(&seq.summary),
        summary_without_timing(&def.summary)
    );
    let order: Vec<_> = def.runs.iter().map(|r| (r.algo, r.seed)).collect();
    let expected: Vec<_> = ALL
        .iter()
        .flat_map(|&a| [0u64, 1, 2, 3].map(|s| (a, s)))
        .collect();
    assert_eq!(order, expected);
}

#[test]
fn one_seed_has_zero_spread() {
    let cfg = small(&[PolicyKind::Crhvt], NoiseSpec::student_t3(), 0.0, 80, &[5]);
    let suite = run_suite(&cfg).unwrap();
    let agg = &suite.summary.aggregates[&PolicyKind::Crhvt];
    let traj: Vec<f64> = suite.runs[0].records.iter().map(|r| r.cum_regret).collect();
    assert_eq!(agg.cum_regret.mean, traj);
    assert!(agg.cum_regret.std.iter().all(|&s| s == 0.0));
}

#[test]
fn per_seed_streams_spread_noiseless_runs() {
    let cfg = small(
        &[PolicyKind::Crhvt],
        NoiseSpec::none(),
        0.0,
        60,
        &(0..10).collect::<Vec<_>>(),
    );
    let suite = run_suite(&cfg).unwrap();
    let std = &suite.summary.aggregates[&PolicyKind::Crhvt].cum_regret.std;
    assert!(std.last().copied().unwrap() > 0.0);
}
