use std::path::{Path, PathBuf};
use std::process::ExitCode;

use ampg::config::ExperimentConfig;
use ampg::format::{
    constants_to_json, decs, read_game, read_json, read_policy, write_game, write_json, Dec,
    GeneratorSpecFile, ReportFile,
};
use ampg::{run_experiment, HarnessError};
use ampg_core::constants::{estimate_constants, ConstantsConfig};
use ampg_core::oracle::{self, OracleReport};
use ampg_core::verification::{run_suite, Suite};
use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

#[derive(Parser)]
#[command(
    name = "ampg",
    version,
    about = "Policy optimization in average-reward Markov potential games"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum SuiteArg {
    Fast,
    Full,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a random game from a JSON generator spec.
    Generate {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run an experiment config over its seeds.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory, overriding the config.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Seeds, as `0,1,5` or `0..7`.
        #[arg(long)]
        seeds: Option<String>,
        #[arg(long)]
        threads: Option<usize>,
        #[arg(long)]
        eval_every: Option<usize>,
    },
    /// Property-test the theory on a game.
    Verify {
        #[arg(long)]
        game: PathBuf,
        #[arg(long, value_enum, default_value = "fast")]
        suite: SuiteArg,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write the JSON report here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Nash gap of a joint policy (uniform when no policy is given).
    Gap {
        #[arg(long)]
        game: PathBuf,
        #[arg(long)]
        policy: Option<PathBuf>,
        /// Include the full oracle report.
        #[arg(long)]
        report: bool,
    },
    /// Estimate the structural constants of a game.
    Constants {
        #[arg(long)]
        game: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn parse_seeds(s: &str) -> Result<Vec<u64>, HarnessError> {
    let bad = || HarnessError::Config(format!("cannot parse seeds {s:?}"));
    if let Some((a, b)) = s.split_once("..") {
        let (a, b): (u64, u64) = (
            a.trim().parse().map_err(|_| bad())?,
            b.trim().parse().map_err(|_| bad())?,
        );
        return Ok((a..b).collect());
    }
    s.split(',')
        .map(|x| x.trim().parse().map_err(|_| bad()))
        .collect()
}

fn emit(value: &serde_json::Value, out: Option<&Path>) -> Result<(), HarnessError> {
    match out {
        Some(p) => write_json(p, value),
        None => {
            println!("{}", serde_json::to_string_pretty(value).unwrap());
            Ok(())
        }
    }
}

fn run(cli: Cli) -> Result<(), HarnessError> {
    match cli.command {
        Command::Generate { spec, out } => {
            let game = read_json::<GeneratorSpecFile>(&spec)?.build()?;
            write_game(&out, &game)
        }
        Command::Run {
            config,
            out,
            seeds,
            threads,
            eval_every,
        } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if let Some(o) = out {
                cfg.out_dir = o;
            }
            if let Some(s) = seeds {
                cfg.seeds = parse_seeds(&s)?;
            }
            if threads.is_some() {
                cfg.threads = threads;
            }
            if let Some(e) = eval_every {
                cfg.eval_every = e;
            }
            cfg.validate()?;
            for c in cfg.expand() {
                let outcome = run_experiment(&c)?;
                println!("{}", outcome.dir.join("summary.json").display());
            }
            Ok(())
        }
        Command::Verify {
            game,
            suite,
            seed,
            out,
        } => {
            let g = read_game(&game)?;
            let constants = estimate_constants(&g, &ConstantsConfig::default(), &[])?;
            let suite = match suite {
                SuiteArg::Fast => Suite::Fast,
                SuiteArg::Full => Suite::Full,
            };
            let id = game.display().to_string();
            let report = run_suite(&g, &id, &constants, suite, seed)?;
            println!(
                "{:<34} {:>7} {:>24} {:>24}  verdict",
                "property", "probes", "max violation", "tolerance"
            );
            for r in &report.results {
                println!(
                    "{:<34} {:>7} {:>24} {:>24}  {}",
                    r.property,
                    r.probes,
                    ampg::format::fmt_f64(r.max_violation),
                    ampg::format::fmt_f64(r.tolerance),
                    r.verdict.as_str()
                );
            }
            let value = json!({
                "game": id,
                "constants_exact": constants.is_exact(),
                "passed": report.passed(),
                "results": report.results.iter().map(|r| json!({
                    "property": r.property,
                    "game": r.game,
                    "probes": r.probes,
                    "max_violation": Dec(r.max_violation),
                    "tolerance": Dec(r.tolerance),
                    "verdict": r.verdict.as_str(),
                })).collect::<Vec<_>>(),
            });
            if let Some(p) = out {
                write_json(&p, &value)?;
            }
            if report.passed() {
                Ok(())
            } else {
                Err(HarnessError::Format("verification suite failed".into()))
            }
        }
        Command::Gap {
            game,
            policy,
            report,
        } => {
            let g = read_game(&game)?;
            let pol = match policy {
                Some(p) => read_policy(&p)?,
                None => ampg_core::JointPolicy::uniform(&g),
            };
            let rep = OracleReport::evaluate(&g, &pol)?;
            let gap = oracle::nash_gap_with_gains(&g, &pol, &rep.rho)?;
            let mut value = json!({
                "nash_gap": Dec(gap.gap),
                "per_agent": decs(&gap.per_agent),
                "rho": decs(&rep.rho),
                "best_response_gain": gap.best_responses.iter().map(|b| Dec(b.gain)).collect::<Vec<_>>(),
            });
            if report {
                value["report"] = serde_json::to_value(ReportFile::from_report(&rep)).unwrap();
            }
            emit(&value, None)
        }
        Command::Constants { game, config, out } => {
            let g = read_game(&game)?;
            let cfg: ConstantsConfig = match config {
                Some(p) => read_json::<ampg::config::ConstantsOptions>(&p)?.into(),
                None => ConstantsConfig::default(),
            };
            let c = estimate_constants(&g, &cfg, &[])?;
            emit(&constants_to_json(&c), out.as_deref())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("AMPG_LOG", "warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let record = json!({ "error": e.kind(), "message": e.to_string() });
            eprintln!("{record}");
            ExitCode::FAILURE
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seed_lists() {
        assert_eq!(parse_seeds("0..3").unwrap(), vec![0, 1, 2]);
        assert_eq!(parse_seeds("4, 9").unwrap(), vec![4, 9]);
        assert!(parse_seeds("x").is_err());
    }
}
