//! Distribution-shape experiment on the one-hot dataset plus the
//! initial-spread sweep over ensemble sizes.
//!
//! CSV outputs:
//! - `summary.csv`: `method,kl_before_mean,kl_before_std,kl_after_mean,kl_after_std,pearson_after_median`
//! - `per_seed.csv`: `method,seed,kl_before,kl_after,pearson_after,slope_after,r2_after`
//! - `spread.csv`: `n_targets,seed,spread`
//! - `spread_medians.csv`: `n_targets,median_spread`

use std::path::Path;

use drnd_core::error::{DrndError, Result};
use drnd_core::inconsistency::{
    run_inconsistency_experiment, run_spread_experiment, InconsistencyConfig, Method,
    SpreadConfig,
};

use crate::config::InconsistencyCliConfig;
use crate::manifest::{fmt_f64, RunManifest, RunRecorder};

pub fn run(cfg: &InconsistencyCliConfig, out_dir: &Path) -> Result<RunManifest> {
    cfg.validate()?;
    let mut rec = RunRecorder::new(out_dir, "inconsistency", cfg, &cfg.seeds)?;

    let core_cfg = InconsistencyConfig {
        m: cfg.m,
        seeds: cfg.seeds.clone(),
        train_epochs: cfg.train_epochs,
        batch_size: cfg.batch_size,
        lr: cfg.lr,
        n_targets: cfg.n_targets,
        alpha: cfg.alpha,
        width: cfg.width,
        target_gain: cfg.target_gain,
        ratio_lower_clamp: cfg.ratio_lower_clamp,
        ratio_upper_clamp: cfg.ratio_upper_clamp,
        mean_to_variance_limit: cfg.mean_to_variance_limit,
    };
    let report = run_inconsistency_experiment(&core_cfg)?;

    let mut per_seed = Vec::new();
    for o in &report.outcomes {
        if let Some(err) = &o.error {
            rec.record_error(&format!("seed {}", o.seed), &DrndError::Config(err.clone()));
            continue;
        }
        for m in &o.methods {
            per_seed.push(format!(
                "{},{},{},{},{},{},{}",
                m.method.as_str(),
                o.seed,
                fmt_f64(m.kl_before_vs_uniform),
                fmt_f64(m.kl_after_vs_invsqrt),
                fmt_f64(m.pearson_after),
                fmt_f64(m.slope_after),
                fmt_f64(m.r2_after),
            ));
        }
    }
    rec.write_csv(
        "per_seed.csv",
        "method,seed,kl_before,kl_after,pearson_after,slope_after,r2_after",
        &per_seed,
    )?;

    let summary_rows: Vec<String> = report
        .summary
        .iter()
        .map(|s| {
            format!(
                "{},{},{},{},{},{}",
                s.method.as_str(),
                fmt_f64(s.kl_before_mean),
                fmt_f64(s.kl_before_std),
                fmt_f64(s.kl_after_mean),
                fmt_f64(s.kl_after_std),
                fmt_f64(s.pearson_after_median),
            )
        })
        .collect();
    rec.write_csv(
        "summary.csv",
        "method,kl_before_mean,kl_before_std,kl_after_mean,kl_after_std,pearson_after_median",
        &summary_rows,
    )?;

    let find = |m: Method| report.summary.iter().find(|s| s.method == m);
    if let (Some(rnd), Some(drnd), Some(b1), Some(b2)) = (
        find(Method::Rnd),
        find(Method::Drnd),
        find(Method::B1Only),
        find(Method::B2Only),
    ) {
        rec.check(
            "combined_flatter_than_single_before",
            drnd.kl_before_mean < rnd.kl_before_mean,
            format!("{} < {}", drnd.kl_before_mean, rnd.kl_before_mean),
        );
        rec.check(
            "combined_tracks_counts_better_after",
            drnd.kl_after_mean < rnd.kl_after_mean,
            format!("{} < {}", drnd.kl_after_mean, rnd.kl_after_mean),
        );
        rec.check(
            "distance_term_flatter_before",
            b1.kl_before_mean < b2.kl_before_mean,
            format!("{} < {}", b1.kl_before_mean, b2.kl_before_mean),
        );
        rec.check(
            "ratio_term_tracks_counts_better_after",
            b2.kl_after_mean < b1.kl_after_mean,
            format!("{} < {}", b2.kl_after_mean, b1.kl_after_mean),
        );
        rec.check(
            "combined_correlation_exceeds_single",
            drnd.pearson_after_median > rnd.pearson_after_median,
            format!(
                "{} > {}",
                drnd.pearson_after_median, rnd.pearson_after_median
            ),
        );
    } else {
        rec.check("summary_complete", false, "missing method summary".into());
    }

    // Initial-spread sweep over ensemble sizes.
    let spread_cfg = SpreadConfig {
        m: cfg.m,
        n_list: cfg.spread_n_list.clone(),
        seeds: cfg.spread_seeds.clone(),
        width: cfg.width,
        target_gain: cfg.target_gain,
    };
    let spread = run_spread_experiment(&spread_cfg)?;
    let spread_rows: Vec<String> = spread
        .rows
        .iter()
        .map(|(n, s, v)| format!("{n},{s},{}", fmt_f64(*v)))
        .collect();
    rec.write_csv("spread.csv", "n_targets,seed,spread", &spread_rows)?;
    let median_rows: Vec<String> = spread
        .medians
        .iter()
        .map(|(n, v)| format!("{n},{}", fmt_f64(*v)))
        .collect();
    rec.write_csv("spread_medians.csv", "n_targets,median_spread", &median_rows)?;
    let non_increasing = spread
        .medians
        .windows(2)
        .all(|w| w[1].1 <= w[0].1 + 1e-12);
    rec.check(
        "initial_spread_median_non_increasing",
        non_increasing,
        format!("{:?}", spread.medians),
    );

    rec.finish()
}
