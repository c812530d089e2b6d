//! Per-seed CSV files, `summary.json`, and optional SVG charts.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::estimator::SigmaBranch;
use crate::harness::{RoundRecord, Suite, Summary};
use crate::policy::PolicyKind;
use crate::svg::{line_chart, Series};

pub const CSV_HEADER: &str =
    "round,instant_regret,cum_regret,per_round_time_ns,sigma_t,w_t,tau_t,beta_t,active_sigma_branch,c_t_applied";
pub const CSV_COLUMNS: usize = 10;

pub fn run_file_name(algo: PolicyKind, seed: u64) -> String {
    format!("run_{algo}_{seed}.csv")
}

/// Create `dir` and check that it is writable, before any run starts.
pub fn prepare_output_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let probe = dir.join(".write_probe");
    fs::write(&probe, b"").map_err(|e| Error::io(&probe, e))?;
    fs::remove_file(&probe).map_err(|e| Error::io(&probe, e))?;
    Ok(())
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn format_records(records: &[RoundRecord]) -> String {
    let mut out = String::with_capacity(records.len() * 96 + CSV_HEADER.len() + 1);
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in records {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            r.round,
            r.instant_regret,
            r.cum_regret,
            r.per_round_time_ns,
            opt(r.sigma_t),
            opt(r.w_t),
            opt(r.tau_t),
            opt(r.beta_t),
            r.active_sigma_branch.map(SigmaBranch::as_str).unwrap_or(""),
            r.c_t_applied,
        );
    }
    out
}

fn parse_branch(s: &str) -> Result<Option<SigmaBranch>> {
    Ok(match s {
        "" => None,
        "nu" => Some(SigmaBranch::Nu),
        "sigma_min" => Some(SigmaBranch::SigmaMin),
        "confidence" => Some(SigmaBranch::Confidence),
        "corruption" => Some(SigmaBranch::Corruption),
        other => return Err(Error::Config(format!("unknown sigma branch {other:?}"))),
    })
}

/// Parse a per-seed CSV written by [`format_records`].
pub fn parse_records(text: &str) -> Result<Vec<RoundRecord>> {
    let mut lines = text.lines();
    if lines.next() != Some(CSV_HEADER) {
        return Err(Error::Config("unexpected CSV header".into()));
    }
    let bad = |line: &str| Error::Config(format!("malformed CSV row {line:?}"));
    lines
        .map(|line| {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != CSV_COLUMNS {
                return Err(bad(line));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|_| bad(line));
            let opt_num = |s: &str| {
                if s.is_empty() {
                    Ok(None)
                } else {
                    num(s).map(Some)
                }
            };
            Ok(RoundRecord {
                round: f[0].parse().map_err(|_| bad(line))?,
                instant_regret: num(f[1])?,
                cum_regret: num(f[2])?,
                per_round_time_ns: f[3].parse().map_err(|_| bad(line))?,
                sigma_t: opt_num(f[4])?,
                w_t: opt_num(f[5])?,
                tau_t: opt_num(f[6])?,
                beta_t: opt_num(f[7])?,
                active_sigma_branch: parse_branch(f[8])?,
                c_t_applied: num(f[9])?,
            })
        })
        .collect()
}

pub fn read_run_csv(path: &Path) -> Result<Vec<RoundRecord>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_records(&text)
}

/// Pretty JSON of the summary; byte-stable apart from the `timing` section.
pub fn summary_json(summary: &Summary) -> Result<String> {
    let mut s = serde_json::to_string_pretty(summary)?;
    s.push('\n');
    Ok(s)
}

/// Cumulative-regret chart, one series per algo.
pub fn regret_chart(summary: &Summary) -> String {
    let series: Vec<Series> = summary
        .aggregates
        .iter()
        .map(|(algo, agg)| Series {
            name: algo.to_string(),
            points: agg
                .cum_regret
                .mean
                .iter()
                .enumerate()
                .map(|(i, &y)| ((i + 1) as f64, y))
                .collect(),
        })
        .collect();
    line_chart(
        "Cumulative regret",
        "round",
        "mean cumulative regret",
        &series,
    )
}

/// Cumulative policy time (milliseconds), one series per algo.
pub fn runtime_chart(summary: &Summary) -> String {
    let series: Vec<Series> = summary
        .timing
        .iter()
        .map(|(algo, t)| {
            let mut acc = 0.0;
            Series {
                name: algo.to_string(),
                points: t
                    .per_round_time_ns
                    .mean
                    .iter()
                    .enumerate()
                    .map(|(i, &ns)| {
                        acc += ns * 1e-6;
                        ((i + 1) as f64, acc)
                    })
                    .collect(),
            }
        })
        .collect();
    line_chart("Policy runtime", "round", "cumulative time (ms)", &series)
}

/// Write every per-seed CSV, `summary.json`, and the charts when `plot` is set.
/// Returns the paths written.
pub fn emit_outputs(suite: &Suite, out_dir: &Path, plot: bool) -> Result<Vec<PathBuf>> {
    prepare_output_dir(out_dir)?;
    let mut written = Vec::new();
    let mut write = |name: String, body: String| -> Result<()> {
        let path = out_dir.join(name);
        fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
        written.push(path);
        Ok(())
    };
    for run in &suite.runs {
        write(
            run_file_name(run.algo, run.seed),
            format_records(&run.records),
        )?;
    }
    write("summary.json".into(), summary_json(&suite.summary)?)?;
    if plot {
        write("regret.svg".into(), regret_chart(&suite.summary))?;
        write("runtime.svg".into(), runtime_chart(&suite.summary))?;
    }
    Ok(written)
}

/// Recompute per-algo mean cumulative regret from per-seed CSVs on disk.
pub fn mean_regret_from_csvs(out_dir: &Path, algo: PolicyKind, seeds: &[u64]) -> Result<Vec<f64>> {
    let series = seeds
        .iter()
        .map(|&s| read_run_csv(&out_dir.join(run_file_name(algo, s))))
        .collect::<Result<Vec<_>>>()?;
    let len = series.iter().map(Vec::len).min().unwrap_or(0);
    Ok((0..len)
        .map(|t| series.iter().map(|r| r[t].cum_regret).sum::<f64>() / series.len() as f64)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn branch() -> impl Strategy<Value = Option<SigmaBranch>> {
        prop_oneof![
            Just(None),
            Just(Some(SigmaBranch::Nu)),
            Just(Some(SigmaBranch::SigmaMin)),
            Just(Some(SigmaBranch::Confidence)),
            Just(Some(SigmaBranch::Corruption)),
        ]
    }

    fn finite() -> impl Strategy<Value = f64> {
        prop_oneof![-1e6f64..1e6, 1e-12f64..1e-6, Just(0.0)]
    }

    prop_compose! {
        fn record()(round in 1usize..100_000, a in finite(), b in finite(), ns in 1u64..u64::MAX,
                    s in proptest::option::of(finite()), w in proptest::option::of(finite()),
                    tau in proptest::option::of(prop_oneof![finite(), Just(f64::INFINITY)]),
                    beta in proptest::option::of(finite()), br in branch(), c in finite()) -> RoundRecord {
            RoundRecord { round, instant_regret: a, cum_regret: b, per_round_time_ns: ns, sigma_t: s,
                          w_t: w, tau_t: tau, beta_t: beta, active_sigma_branch: br, c_t_applied: c }
        }
    }

    proptest! {
        #[test]
        fn csv_round_trips(recs in proptest::collection::vec(record(), 0..20)) {
            let text = format_records(&recs);
            prop_assert!(!text.contains('\r'));
            for line in text.lines() {
                prop_assert_eq!(line.split(',').count(), CSV_COLUMNS);
                for (i, field) in line.split(',').enumerate() {
                    if i != 8 && !line.starts_with("round") {
                        prop_assert!(!field.contains('e') || field == "inf", "{}", field);
                    }
                }
            }
            prop_assert_eq!(parse_records(&text).unwrap(), recs);
        }
    }

    #[test]
    fn header_is_fixed() {
        assert_eq!(CSV_HEADER.split(',').count(), CSV_COLUMNS);
        assert_eq!(format_records(&[]), format!("{CSV_HEADER}\n"));
    }

    #[test]
    fn rejects_malformed() {
        assert!(parse_records("nope\n").is_err());
        assert!(parse_records(&format!("{CSV_HEADER}\n1,2,3\n")).is_err());
    }
}
