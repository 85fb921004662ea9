//! Offline pipeline: generate the narrow-coverage line-walk dataset, run the
//! two-phase training (distillation pre-training, then penalized
//! actor-critic) per seed, and audit the learned policy's bonus against the
//! dataset's own.
//!
//! CSV output `summary.csv`:
//! `seed,mean_return,policy_mean_bonus,dataset_mean_bonus,bonus_ratio,entropy_coef`

use std::path::Path;

use drnd_core::envs::LineWalkEnv;
use drnd_core::error::Result;
use drnd_core::offline::{generate_offline_dataset, train_offline, EvalReport};
use rayon::prelude::*;

use crate::config::TrainOfflineCliConfig;
use crate::manifest::{fmt_f64, RunManifest, RunRecorder};

pub fn run(cfg: &TrainOfflineCliConfig, out_dir: &Path) -> Result<RunManifest> {
    cfg.validate()?;
    let mut rec = RunRecorder::new(out_dir, "train-offline", cfg, &cfg.seeds)?;

    let env = LineWalkEnv::default();
    let dataset = generate_offline_dataset(
        &env,
        cfg.behavior_low,
        cfg.behavior_high,
        cfg.dataset_size,
        cfg.dataset_seed,
    )?;

    let results: Vec<(u64, Result<EvalReport>)> = cfg
        .seeds
        .par_iter()
        .map(|&seed| (seed, train_offline(&cfg.sac, &dataset, cfg.iterations, seed)))
        .collect();

    let mut summary = Vec::new();
    for (seed, outcome) in results {
        match outcome {
            Ok(report) => {
                let ratio = report.policy_mean_bonus / report.dataset_mean_bonus;
                summary.push(format!(
                    "{seed},{},{},{},{},{}",
                    fmt_f64(report.mean_return),
                    fmt_f64(report.policy_mean_bonus),
                    fmt_f64(report.dataset_mean_bonus),
                    fmt_f64(ratio),
                    fmt_f64(report.entropy_coef),
                ));
                if let Some(limit) = cfg.bonus_ratio_limit {
                    rec.check(
                        &format!("policy_stays_on_support_seed{seed}"),
                        ratio <= limit,
                        format!("policy/dataset bonus ratio {ratio} <= {limit}"),
                    );
                }
            }
            Err(e) => rec.record_error(&format!("seed {seed}"), &e),
        }
    }
    rec.write_csv(
        "summary.csv",
        "seed,mean_return,policy_mean_bonus,dataset_mean_bonus,bonus_ratio,entropy_coef",
        &summary,
    )?;
    rec.finish()
}
