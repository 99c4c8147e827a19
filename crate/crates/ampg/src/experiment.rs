//! Multi-seed experiment runs and the reference equilibrium.

use std::path::PathBuf;

use ampg_core::algorithms::{npg_update, run_oracle_algorithm, RunOptions, RunTrace};
use ampg_core::constants::estimate_constants;
use ampg_core::oracle::{self, OracleReport};
use ampg_core::sampling::{run_sampled_pg, run_sampled_proxq};
use ampg_core::{Error, JointPolicy, MarkovGame, Policy};
use rayon::prelude::*;

use crate::config::{AlgorithmId, ExperimentConfig};
use crate::format::{fmt_f64, write_json, Dec};
use crate::trace::{summarize, write_trace_file, Failure, Summary};
use crate::HarnessError;

pub const REFERENCE_GAP: f64 = 1e-10;
pub const REFERENCE_MAX_ITERS: usize = 1_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct ReferencePolicy {
    pub policy: JointPolicy,
    pub gap: f64,
    pub iterations: usize,
}

/// Each agent's most likely action in every state (lowest index on ties).
fn purify(game: &MarkovGame, policy: &JointPolicy) -> JointPolicy {
    JointPolicy::new(
        policy
            .agents()
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let acts: Vec<usize> = (0..game.num_states())
                    .map(|s| {
                        let row = p.row(s);
                        let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                        row.iter().position(|&x| x == m).unwrap()
                    })
                    .collect();
                Policy::deterministic(game.num_actions(i), &acts)
            })
            .collect(),
    )
}

/// Runs oracle NPG from `warm_start` (uniform when `None`) until the Nash
/// gap is at most `1e-10`. The step starts at `beta` and is halved whenever
/// it would lower a certified potential. When the rounded deterministic
/// policy is at least as good an equilibrium it is returned instead.
pub fn reference_policy(
    game: &MarkovGame,
    warm_start: Option<&JointPolicy>,
    beta: f64,
) -> Result<ReferencePolicy, Error> {
    let mut pol = warm_start
        .cloned()
        .unwrap_or_else(|| JointPolicy::uniform(game));
    pol.check_shape(game)?;
    let certified = oracle::has_potential(game);
    let mut beta = beta;
    let mut gap = f64::INFINITY;
    for it in 0..=REFERENCE_MAX_ITERS {
        let report = OracleReport::evaluate(game, &pol)?;
        gap = oracle::nash_gap_with_gains(game, &pol, &report.rho)?.gap;
        if gap <= REFERENCE_GAP {
            let pure = purify(game, &pol);
            let pure_gap = oracle::nash_gap(game, &pure)?.gap;
            if pure_gap <= gap {
                return Ok(ReferencePolicy {
                    policy: pure,
                    gap: pure_gap,
                    iterations: it,
                });
            }
            return Ok(ReferencePolicy {
                policy: pol,
                gap,
                iterations: it,
            });
        }
        if it == REFERENCE_MAX_ITERS {
            break;
        }
        let phi = if certified {
            oracle::potential_from_report(game, &pol, &report)?
        } else {
            f64::NAN
        };
        loop {
            let next = npg_update(&pol, &report, beta)?.policy;
            if certified && beta > 1e-12 && oracle::potential_value(game, &next)? < phi {
                beta *= 0.5;
                continue;
            }
            pol = next;
            break;
        }
    }
    Err(Error::NoConvergence {
        iterations: REFERENCE_MAX_ITERS,
        residual: gap,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutcome {
    pub dir: PathBuf,
    pub traces: Vec<RunTrace>,
    pub summary: Summary,
}

fn run_one(
    cfg: &ExperimentConfig,
    game: &MarkovGame,
    step: &ampg_core::algorithms::StepSize,
    seed: u64,
    reference: Option<&JointPolicy>,
) -> Result<RunTrace, Error> {
    let options = RunOptions {
        eval_every: cfg.eval_every,
        seed,
        reference: reference.cloned(),
        initial: None,
    };
    let initial = cfg.initial_state.to_initial();
    let t = cfg.iterations;
    match cfg.algorithm {
        AlgorithmId::Pg | AlgorithmId::Proxq | AlgorithmId::Npg => {
            run_oracle_algorithm(game, cfg.algorithm.base(), t, step, &options)
        }
        AlgorithmId::SampledPg => {
            let e = cfg.estimator.expect("validated");
            let params = cfg.gradient_params().expect("validated");
            run_sampled_pg(game, t, step, &params, e.alpha.0, &initial, &options)
        }
        AlgorithmId::SampledProxq => {
            let e = cfg.estimator.expect("validated");
            run_sampled_proxq(game, t, step, e.b, e.n1, e.alpha.0, &initial, &options)
        }
    }
}

/// Runs every seed of `cfg` on a bounded worker pool and writes
/// `<out>/<name>/seed-<k>.csv` plus `summary.json`. Failed runs are listed
/// in `errors.json`; the traces of the other seeds are still written.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutcome, HarnessError> {
    cfg.validate()?;
    if cfg.expand().len() > 1 {
        return Err(HarnessError::Config(
            "expand a sweep before running it".into(),
        ));
    }
    let game = cfg.game.load()?;
    let dir = cfg.out_dir.join(&cfg.name);
    std::fs::create_dir_all(&dir).map_err(|e| HarnessError::io(&dir, e))?;
    write_json(&dir.join("config.json"), cfg)?;

    let constants = match cfg.rate {
        crate::config::RateConfig::Theorem => {
            Some(estimate_constants(&game, &cfg.constants.into(), &[])?)
        }
        _ => None,
    };
    let (step, rule) = cfg.step_size(constants.as_ref())?;
    let reference = if cfg.reference {
        let r = reference_policy(&game, None, 1.0)?;
        log::info!(
            "reference policy: gap {:e} after {} NPG steps",
            r.gap,
            r.iterations
        );
        Some(r)
    } else {
        None
    };

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads.unwrap_or(0))
        .build()
        .map_err(|e| HarnessError::Config(format!("thread pool: {e}")))?;
    let results: Vec<(u64, Result<RunTrace, HarnessError>)> = pool.install(|| {
        cfg.seeds
            .par_iter()
            .map(|&seed| {
                let run = run_one(
                    cfg,
                    &game,
                    &step,
                    seed,
                    reference.as_ref().map(|r| &r.policy),
                )
                .map_err(HarnessError::from)
                .and_then(|mut trace| {
                    trace.rate_provenance =
                        rule.and_then(|r| constants.as_ref().and_then(|c| r.provenance(c)));
                    let path = dir.join(format!("seed-{seed}.csv"));
                    write_trace_file(&path, &trace, cfg.algorithm, cfg.estimator.as_ref())?;
                    log::debug!("seed {seed}: wrote {}", path.display());
                    Ok(trace)
                });
                (seed, run)
            })
            .collect()
    });

    let mut traces = Vec::new();
    let mut failures = Vec::new();
    for (seed, r) in results {
        match r {
            Ok(trace) => {
                if let Some(reason) = &trace.abort {
                    failures.push(Failure {
                        seed,
                        kind: "ergodicity".into(),
                        message: reason.clone(),
                    });
                }
                traces.push(trace);
            }
            Err(e) => failures.push(Failure {
                seed,
                kind: e.kind().into(),
                message: e.to_string(),
            }),
        }
    }

    let (t, count, nash_gap, phi, l1_distance, nash_regret_star) = summarize(&traces);
    let summary = Summary {
        name: cfg.name.clone(),
        algorithm: cfg.algorithm.as_str().into(),
        seeds: cfg.seeds.clone(),
        iterations: cfg.iterations,
        beta: Dec(step.at(0)),
        rate_rule: rule.map_or("manual", |r| r.as_str()).into(),
        rate_provenance: rule
            .and_then(|r| constants.as_ref().and_then(|c| r.provenance(c)))
            .map(|p| p.as_str().into()),
        reference_gap: reference.as_ref().map(|r| Dec(r.gap)),
        t,
        count,
        nash_gap,
        phi,
        l1_distance,
        nash_regret_star,
        failures: failures.clone(),
    };
    write_json(&dir.join("summary.json"), &summary)?;
    let errors = dir.join("errors.json");
    if !failures.is_empty() {
        write_json(&errors, &failures)?;
        return Err(HarnessError::RunsFailed {
            failed: failures.len(),
            total: cfg.seeds.len(),
            record: errors,
        });
    }
    if errors.exists() {
        std::fs::remove_file(&errors).map_err(|e| HarnessError::io(&errors, e))?;
    }
    log::info!(
        "{}: {} seeds, final mean gap {}",
        cfg.name,
        traces.len(),
        summary
            .nash_gap
            .mean
            .last()
            .map_or("n/a".into(), |d| fmt_f64(d.0))
    );
    Ok(ExperimentOutcome {
        dir,
        traces,
        summary,
    })
}
