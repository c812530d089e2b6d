use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use crhvt_core::env::{CorruptionSpec, NoiseSpec};
use crhvt_core::harness::RunSummary;
use crhvt_core::output::{emit_outputs, prepare_output_dir};
use crhvt_core::{run_suite, ExperimentConfig, PolicyKind, Summary};

#[derive(Parser)]
#[command(
    name = "bench",
    version,
    about = "Seeded bandit experiments with CSV/JSON/SVG output"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every (algo, seed) pair and write per-seed CSVs and summary.json.
    Run {
        #[command(flatten)]
        common: Common,
        /// Also write regret.svg and runtime.svg.
        #[arg(long)]
        plot: bool,
        /// Output directory; overrides `output_dir` in the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the suite and report only the invariant checks; writes nothing.
    Verify {
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Comma-separated policy names.
    #[arg(long, value_delimiter = ',')]
    algo: Option<Vec<PolicyKind>>,
    /// Horizon.
    #[arg(long = "T")]
    horizon: Option<usize>,
    /// Corruption budget; 0 disables the adversary.
    #[arg(long = "C")]
    budget: Option<f64>,
    /// `t3`, `pareto`, `none`, or an inline JSON noise object.
    #[arg(long)]
    noise: Option<String>,
    /// Comma-separated seeds.
    #[arg(long, value_delimiter = ',')]
    seed: Option<Vec<u64>>,
}

fn parse_noise(s: &str) -> Result<NoiseSpec> {
    Ok(match s {
        "t3" | "student_t" => NoiseSpec::student_t3(),
        "pareto" => NoiseSpec::pareto_1_5(),
        "none" => NoiseSpec::none(),
        json if json.trim_start().starts_with('{') => {
            serde_json::from_str(json).with_context(|| format!("bad noise object {json}"))?
        }
        other => {
            bail!("unknown noise preset {other:?} (expected t3, pareto, none or a JSON object)")
        }
    })
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig> {
        let mut cfg = ExperimentConfig::load(&self.config)
            .with_context(|| format!("loading {}", self.config.display()))?;
        if let Some(a) = &self.algo {
            cfg.algo = a.clone();
        }
        if let Some(t) = self.horizon {
            cfg.horizon = t;
        }
        if let Some(c) = self.budget {
            cfg.corruption = if c > 0.0 {
                CorruptionSpec::ThetaFlip { budget: c }
            } else {
                CorruptionSpec::None
            };
        }
        if let Some(n) = &self.noise {
            cfg.noise = parse_noise(n)?;
        }
        if let Some(s) = &self.seed {
            cfg.seeds = s.clone();
        }
        cfg.validate()
            .context("invalid configuration after overrides")?;
        Ok(cfg)
    }
}

fn report_run(r: &RunSummary) {
    let status = if r.failure.is_none() && r.invariants_passed {
        "ok"
    } else {
        "FAIL"
    };
    let mut line = format!(
        "{status:4} {:8} seed {:<6} rounds {:<6} regret {:.3}  ledger {:.3}/{:.3}",
        r.algo,
        r.seed,
        r.rounds_completed,
        r.final_cum_regret,
        r.invariants.corruption_ledger,
        r.invariants.corruption_budget,
    );
    if let Some(o) = &r.invariants.omd {
        line += &format!(
            "  sum_w2 {:.4}/{:.4}  max_aw2 {:.5}  w_id {:.1e}",
            o.sum_w_sq, o.two_kappa, o.max_alpha_w_sq, o.max_w_identity_err
        );
    }
    if let Some(f) = &r.failure {
        line += &format!("  failed at round {}: {}", f.round, f.message);
    }
    println!("{line}");
}

fn report(summary: &Summary) {
    for r in &summary.runs {
        report_run(r);
    }
    for (algo, agg) in &summary.aggregates {
        let last = agg.cum_regret.mean.len().saturating_sub(1);
        println!(
            "{algo}: mean final regret {:.3} (std {:.3}) over {} seeds",
            agg.cum_regret.mean.get(last).copied().unwrap_or(0.0),
            agg.cum_regret.std.get(last).copied().unwrap_or(0.0),
            agg.seeds.len()
        );
    }
}

fn execute(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Run { common, plot, out } => {
            let cfg = common.load()?;
            let dir = out.unwrap_or_else(|| cfg.output_dir.clone());
            prepare_output_dir(&dir)?;
            let suite = run_suite(&cfg)?;
            report(&suite.summary);
            let written = emit_outputs(&suite, &dir, plot)?;
            println!("wrote {} files to {}", written.len(), dir.display());
            Ok(suite.summary.all_passed)
        }
        Command::Verify { common } => {
            let cfg = common.load()?;
            let suite = run_suite(&cfg)?;
            report(&suite.summary);
            Ok(suite.summary.all_passed)
        }
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("bench: some runs or invariant checks failed");
            ExitCode::FAILURE
        }
        Err(e) => {
            eprintln!("bench: {e:#}");
            ExitCode::from(2)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crhvt_core::env::NoiseKind;

    #[test]
    fn noise_presets_and_inline_json() {
        assert_eq!(parse_noise("t3").unwrap(), NoiseSpec::student_t3());
        assert_eq!(parse_noise("pareto").unwrap(), NoiseSpec::pareto_1_5());
        assert_eq!(parse_noise("none").unwrap(), NoiseSpec::none());
        let g = parse_noise(r#"{"kind": "gaussian", "sd": 0.5}"#).unwrap();
        assert_eq!(g.kind, NoiseKind::Gaussian { sd: 0.5 });
        assert!(parse_noise("cauchy").is_err());
        assert!(parse_noise("{not json").is_err());
    }

    #[test]
    fn cli_shape() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
        let cli = Cli::try_parse_from([
            "bench",
            "run",
            "--config",
            "x.json",
            "--T",
            "9",
            "--algo",
            "crhvt,oful",
        ])
        .unwrap();
        match cli.command {
            Command::Run { common, plot, out } => {
                assert_eq!(common.horizon, Some(9));
                assert_eq!(common.algo, Some(vec![PolicyKind::Crhvt, PolicyKind::Oful]));
                assert!(!plot && out.is_none());
            }
            Command::Verify { .. } => panic!("expected run"),
        }
    }
}
