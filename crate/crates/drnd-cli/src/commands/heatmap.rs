//! 2-D bonus landscape: sample a mixture dataset on the unit square, train
//! the predictor on it, and emit the bonus on a regular lattice before and
//! after training.
//!
//! CSV outputs per seed:
//! - `heatmap_before_seed{S}.csv` / `heatmap_after_seed{S}.csv`:
//!   `x,y,bonus` (lattice cell centers).

use std::path::Path;

use drnd_core::error::Result;
use drnd_core::inconsistency::{run_heatmap, GridDataset, HeatmapConfig, MixtureComponent};
use drnd_core::rng::derive_seed;

use crate::config::HeatmapCliConfig;
use crate::manifest::{fmt_f64, RunManifest, RunRecorder};

pub fn run(cfg: &HeatmapCliConfig, out_dir: &Path) -> Result<RunManifest> {
    cfg.validate()?;
    let mut rec = RunRecorder::new(out_dir, "heatmap", cfg, &cfg.seeds)?;

    let components: Vec<MixtureComponent> = cfg
        .components
        .iter()
        .map(|c| MixtureComponent {
            weight: c.weight,
            mean: c.mean,
            std: c.std,
        })
        .collect();

    for &seed in &cfg.seeds {
        let grid = GridDataset::from_mixture(
            &components,
            cfg.n_points,
            cfg.resolution,
            derive_seed(seed, 1),
        )?;
        let run_cfg = HeatmapConfig {
            n_targets: cfg.n_targets,
            alpha: cfg.alpha,
            train_epochs: cfg.train_epochs,
            batch_size: cfg.batch_size,
            lr: cfg.lr,
            width: cfg.width,
            target_gain: cfg.target_gain,
            seed: derive_seed(seed, 2),
        };
        match run_heatmap(&grid, &run_cfg) {
            Ok(result) => {
                let to_rows = |lat: &[(f64, f64, f64)]| -> Vec<String> {
                    lat.iter()
                        .map(|(x, y, b)| {
                            format!("{},{},{}", fmt_f64(*x), fmt_f64(*y), fmt_f64(*b))
                        })
                        .collect()
                };
                rec.write_csv(
                    &format!("heatmap_before_seed{seed}.csv"),
                    "x,y,bonus",
                    &to_rows(&result.before),
                )?;
                rec.write_csv(
                    &format!("heatmap_after_seed{seed}.csv"),
                    "x,y,bonus",
                    &to_rows(&result.after),
                )?;
                if let Some(target) = cfg.expected_min {
                    let (mut bx, mut by, mut best) = (0.0, 0.0, f64::INFINITY);
                    for &(x, y, b) in &result.after {
                        if b < best {
                            best = b;
                            bx = x;
                            by = y;
                        }
                    }
                    let dist = ((bx - target[0]).powi(2) + (by - target[1]).powi(2)).sqrt();
                    rec.check(
                        &format!("trained_min_near_data_seed{seed}"),
                        dist <= cfg.min_tolerance,
                        format!(
                            "argmin ({bx}, {by}) is {dist} from ({}, {})",
                            target[0], target[1]
                        ),
                    );
                }
            }
            Err(e) => rec.record_error(&format!("seed {seed}"), &e),
        }
    }

    rec.finish()
}
