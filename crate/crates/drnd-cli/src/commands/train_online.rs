//! On-policy training runs on the toy hard-exploration environments, one
//! independent run per seed.
//!
//! CSV outputs:
//! - `curve_seed{S}.csv`: `iteration,episodes_completed,mean_return,intrinsic_mean,intrinsic_max,policy_loss,value_loss,distill_loss`
//! - `returns_seed{S}.csv`: `episode,return`
//! - `summary.csv`: `seed,episodes,solved,episodes_to_solve`
//!   (`episodes_to_solve` is empty for unsolved runs).

use std::path::Path;

use drnd_core::envs::ToyEnv;
use drnd_core::error::Result;
use drnd_core::online::{rollout_train, TrainingCurve};
use rayon::prelude::*;

use crate::config::TrainOnlineCliConfig;
use crate::manifest::{fmt_f64, RunManifest, RunRecorder};

pub fn run(cfg: &TrainOnlineCliConfig, out_dir: &Path) -> Result<RunManifest> {
    cfg.validate()?;
    let mut rec = RunRecorder::new(out_dir, "train-online", cfg, &cfg.seeds)?;

    let results: Vec<(u64, Result<TrainingCurve>)> = cfg
        .seeds
        .par_iter()
        .map(|&seed| {
            let env = ToyEnv::new(cfg.env, cfg.size)?;
            Ok((seed, rollout_train(&cfg.ppo, &env, cfg.iterations, seed)))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut summary = Vec::new();
    for (seed, outcome) in results {
        match outcome {
            Ok(curve) => {
                let rows: Vec<String> = curve
                    .iterations
                    .iter()
                    .map(|it| {
                        format!(
                            "{},{},{},{},{},{},{},{}",
                            it.iteration,
                            it.episodes_completed,
                            fmt_f64(it.mean_return),
                            fmt_f64(it.intrinsic_mean),
                            fmt_f64(it.intrinsic_max),
                            fmt_f64(it.policy_loss),
                            fmt_f64(it.value_loss),
                            fmt_f64(it.distill_loss),
                        )
                    })
                    .collect();
                rec.write_csv(
                    &format!("curve_seed{seed}.csv"),
                    "iteration,episodes_completed,mean_return,intrinsic_mean,intrinsic_max,policy_loss,value_loss,distill_loss",
                    &rows,
                )?;
                let ret_rows: Vec<String> = curve
                    .episode_returns
                    .iter()
                    .enumerate()
                    .map(|(i, r)| format!("{i},{}", fmt_f64(*r)))
                    .collect();
                rec.write_csv(
                    &format!("returns_seed{seed}.csv"),
                    "episode,return",
                    &ret_rows,
                )?;
                summary.push(format!(
                    "{seed},{},{},{}",
                    curve.episode_returns.len(),
                    curve.solved(),
                    curve
                        .episodes_to_solve
                        .map(|e| e.to_string())
                        .unwrap_or_default(),
                ));
            }
            Err(e) => rec.record_error(&format!("seed {seed}"), &e),
        }
    }
    rec.write_csv(
        "summary.csv",
        "seed,episodes,solved,episodes_to_solve",
        &summary,
    )?;
    rec.finish()
}
