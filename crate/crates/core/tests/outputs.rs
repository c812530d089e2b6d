mod common;

use std::fs;
use std::path::Path;

use common::{mask_timing_column, small, summary_without_timing};
use crhvt_core::env::NoiseSpec;
use crhvt_core::harness::Summary;
use crhvt_core::output::{
    emit_outputs, mean_regret_from_csvs, prepare_output_dir, read_run_csv, run_file_name,
    CSV_COLUMNS, CSV_HEADER,
};
use crhvt_core::{run_suite, Error, PolicyKind, Suite};

const GOLDEN_DIR: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/golden");

#[test]
fn aggregates_match_recomputation_from_csvs() {
    let algos = [PolicyKind::Crhvt, PolicyKind::Oful];
    let seeds = [3u64, 7, 11];
    let cfg = small(&algos, NoiseSpec::student_t3(), 10.0, 200, &seeds);
    let suite = run_suite(&cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let written = emit_outputs(&suite, dir.path(), false).unwrap();
    assert_eq!(written.len(), algos.len() * seeds.len() + 1);

    for algo in algos {
        let from_disk = mean_regret_from_csvs(dir.path(), algo, &seeds).unwrap();
        let in_memory = &suite.summary.aggregates[&algo].cum_regret.mean;
        assert_eq!(from_disk.len(), in_memory.len());
        for (a, b) in from_disk.iter().zip(in_memory) {
            assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0), "{a} vs {b}");
        }
    }
    for run in &suite.runs {
        let back = read_run_csv(&dir.path().join(run_file_name(run.algo, run.seed))).unwrap();
        assert_eq!(back, run.records);
    }
    let summary: Summary =
        serde_json::from_str(&fs::read_to_string(dir.path().join("summary.json")).unwrap())
            .unwrap();
    assert_eq!(summary, suite.summary);
}

#[test]
fn every_csv_row_has_ten_columns() {
    let cfg = small(
        &[PolicyKind::Crhvt, PolicyKind::Gadaoful],
        NoiseSpec::pareto_1_5(),
        50.0,
        60,
        &[2],
    );
    let dir = tempfile::tempdir().unwrap();
    emit_outputs(&run_suite(&cfg).unwrap(), dir.path(), true).unwrap();
    for algo in [PolicyKind::Crhvt, PolicyKind::Gadaoful] {
        let text = fs::read_to_string(dir.path().join(run_file_name(algo, 2))).unwrap();
        assert!(text.starts_with(CSV_HEADER));
        assert_eq!(text.lines().count(), 61);
        assert!(text.lines().all(|l| l.split(',').count() == CSV_COLUMNS));
    }
    for svg in ["regret.svg", "runtime.svg"] {
        let body = fs::read_to_string(dir.path().join(svg)).unwrap();
        assert!(body.starts_with("<svg") && body.contains("crhvt") && body.contains("gadaoful"));
    }
}

#[test]
fn empty_run_list_writes_only_the_summary() {
    let cfg = small(&[PolicyKind::Crhvt], NoiseSpec::none(), 0.0, 10, &[0]);
    let summary = Summary::from_runs(&cfg, &[]);
    assert!(summary.aggregates.is_empty() && summary.runs.is_empty());
    let dir = tempfile::tempdir().unwrap();
    let written = emit_outputs(
        &Suite {
            runs: vec![],
            summary,
        },
        dir.path(),
        false,
    )
    .unwrap();
    assert_eq!(written, vec![dir.path().join("summary.json")]);
    let entries: Vec<_> = fs::read_dir(dir.path()).unwrap().collect();
    assert_eq!(entries.len(), 1);
}

#[test]
fn unwritable_destination_fails_fast() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("occupied");
    fs::write(&file, "x").unwrap();
    let target = file.join("results");
    assert!(matches!(prepare_output_dir(&target), Err(Error::Io { .. })));

    let cfg = small(&[PolicyKind::Crhvt], NoiseSpec::none(), 0.0, 5, &[0]);
    let suite = run_suite(&cfg).unwrap();
    assert!(matches!(
        emit_outputs(&suite, &target, false),
        Err(Error::Io { .. })
    ));
}

fn check_golden(name: &str, actual: &str) {
    let path = Path::new(GOLDEN_DIR).join(name);
    if std::env::var_os("BLESS").is_some() {
        fs::create_dir_all(GOLDEN_DIR).unwrap();
        fs::write(&path, actual).unwrap();
    }
    let expected = fs::read_to_string(&path)
        .unwrap_or_else(|_| panic!("missing {}; rerun with BLESS=1", path.display()));
    assert!(expected == actual, "{name} differs from the golden copy");
}

#[test]
fn golden_outputs_with_timing_masked() {
    let cfg = small(
        &[PolicyKind::Crhvt, PolicyKind::Oful],
        NoiseSpec::student_t3(),
        3.0,
        40,
        &[17],
    );
    let suite = run_suite(&cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    emit_outputs(&suite, dir.path(), false).unwrap();
    for algo in [PolicyKind::Crhvt, PolicyKind::Oful] {
        let name = run_file_name(algo, 17);
        let text = fs::read_to_string(dir.path().join(&name)).unwrap();
        check_golden(&name, &mask_timing_column(&text));
    }
    check_golden(
        "summary.json",
        &(summary_without_timing(&suite.summary) + "\n"),
    );
}
