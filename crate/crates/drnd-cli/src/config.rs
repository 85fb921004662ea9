//! TOML run configurations, one schema per subcommand.
//!
//! Every schema rejects unknown and duplicate keys; range violations name
//! the offending key in the error message.

use drnd_core::envs::ToyEnvKind;
use drnd_core::error::{DrndError, Result};
use drnd_core::inconsistency::{DEFAULT_TARGET_GAIN, TOY_WIDTH};
use drnd_core::offline::SacConfig;
use drnd_core::online::PpoConfig;
use serde::{Deserialize, Serialize};

fn range_err(key: &str, detail: String) -> DrndError {
    DrndError::Config(format!("{key}: {detail}"))
}

fn require(cond: bool, key: &str, detail: &str) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(range_err(key, detail.to_string()))
    }
}

/// Estimator-lab verification suite settings.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifyLemmasConfig {
    /// Monte-Carlo trials for the mean-ratio and linear-MSE checks.
    pub mc_trials: u64,
    pub seeds: Vec<u64>,
}

impl Default for VerifyLemmasConfig {
    fn default() -> Self {
        VerifyLemmasConfig {
            mc_trials: 1_000_000,
            seeds: vec![0],
        }
    }
}

impl VerifyLemmasConfig {
    pub fn validate(&self) -> Result<()> {
        require(self.mc_trials >= 1000, "mc_trials", "must be >= 1000")?;
        require(!self.seeds.is_empty(), "seeds", "must not be empty")
    }
}

/// Distribution-shape experiment over the one-hot dataset, plus the
/// initial-spread-vs-ensemble-size sweep.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InconsistencyCliConfig {
    pub m: usize,
    pub seeds: Vec<u64>,
    pub train_epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub n_targets: usize,
    pub alpha: f64,
    pub width: usize,
    pub target_gain: f64,
    pub ratio_lower_clamp: Option<f64>,
    pub ratio_upper_clamp: Option<f64>,
    pub mean_to_variance_limit: Option<f64>,
    pub spread_n_list: Vec<usize>,
    pub spread_seeds: Vec<u64>,
}

impl Default for InconsistencyCliConfig {
    fn default() -> Self {
        InconsistencyCliConfig {
            m: 100,
            seeds: (0..20).collect(),
            train_epochs: 1500,
            batch_size: 256,
            lr: 3e-4,
            n_targets: 10,
            alpha: 0.9,
            width: TOY_WIDTH,
            target_gain: DEFAULT_TARGET_GAIN,
            ratio_lower_clamp: None,
            ratio_upper_clamp: None,
            mean_to_variance_limit: Some(0.02),
            spread_n_list: vec![1, 2, 4, 8, 16, 32],
            spread_seeds: (0..10).collect(),
        }
    }
}

impl InconsistencyCliConfig {
    pub fn validate(&self) -> Result<()> {
        require(self.m >= 2, "m", "must be >= 2")?;
        require(self.seeds.len() >= 2, "seeds", "need at least 2 seeds")?;
        require(self.train_epochs >= 1, "train_epochs", "must be >= 1")?;
        require(self.batch_size >= 1, "batch_size", "must be >= 1")?;
        require(self.lr > 0.0 && self.lr.is_finite(), "lr", "must be > 0")?;
        require(self.n_targets >= 2, "n_targets", "must be >= 2")?;
        require(
            (0.0..=1.0).contains(&self.alpha),
            "alpha",
            "must be in [0, 1]",
        )?;
        require(self.width >= 1, "width", "must be >= 1")?;
        require(
            self.target_gain > 0.0,
            "target_gain",
            "must be > 0",
        )?;
        if let Some(l) = self.mean_to_variance_limit {
            require(l > 0.0, "mean_to_variance_limit", "must be > 0")?;
        }
        require(
            !self.spread_n_list.is_empty(),
            "spread_n_list",
            "must not be empty",
        )?;
        require(
            !self.spread_seeds.is_empty(),
            "spread_seeds",
            "must not be empty",
        )
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixtureComponentConfig {
    pub weight: f64,
    pub mean: [f64; 2],
    pub std: f64,
}

/// 2-D bonus-landscape run: sample a mixture dataset on the unit square,
/// train, and emit the bonus on a regular lattice before and after.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HeatmapCliConfig {
    pub resolution: usize,
    pub n_points: usize,
    pub components: Vec<MixtureComponentConfig>,
    pub seeds: Vec<u64>,
    pub train_epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub n_targets: usize,
    pub alpha: f64,
    pub width: usize,
    pub target_gain: f64,
    /// When set, check that the trained-lattice argmin lands within
    /// `min_tolerance` of this point (the data-dense region).
    pub expected_min: Option<[f64; 2]>,
    pub min_tolerance: f64,
}

impl Default for HeatmapCliConfig {
    fn default() -> Self {
        HeatmapCliConfig {
            resolution: 32,
            n_points: 512,
            components: vec![MixtureComponentConfig {
                weight: 1.0,
                mean: [0.5, 0.5],
                std: 0.05,
            }],
            seeds: vec![0],
            train_epochs: 500,
            batch_size: 256,
            lr: 1e-4,
            n_targets: 10,
            alpha: 0.9,
            width: TOY_WIDTH,
            target_gain: DEFAULT_TARGET_GAIN,
            expected_min: None,
            min_tolerance: 0.1,
        }
    }
}

impl HeatmapCliConfig {
    pub fn validate(&self) -> Result<()> {
        require(self.resolution >= 8, "resolution", "must be >= 8")?;
        require(self.n_points >= 1, "n_points", "must be >= 1")?;
        require(
            !self.components.is_empty(),
            "components",
            "must not be empty",
        )?;
        for (i, c) in self.components.iter().enumerate() {
            require(
                c.weight > 0.0,
                &format!("components[{i}].weight"),
                "must be > 0",
            )?;
            require(
                c.std > 0.0,
                &format!("components[{i}].std"),
                "must be > 0",
            )?;
        }
        require(!self.seeds.is_empty(), "seeds", "must not be empty")?;
        require(self.train_epochs >= 1, "train_epochs", "must be >= 1")?;
        require(self.batch_size >= 1, "batch_size", "must be >= 1")?;
        require(self.lr > 0.0 && self.lr.is_finite(), "lr", "must be > 0")?;
        require(self.n_targets >= 1, "n_targets", "must be >= 1")?;
        require(
            (0.0..=1.0).contains(&self.alpha),
            "alpha",
            "must be in [0, 1]",
        )?;
        require(
            self.min_tolerance > 0.0,
            "min_tolerance",
            "must be > 0",
        )
    }
}

/// On-policy training run on a toy hard-exploration environment.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainOnlineCliConfig {
    pub env: ToyEnvKind,
    pub size: usize,
    /// Upper bound on training iterations; the episode budget and solve
    /// criterion inside `ppo` may stop a run earlier.
    pub iterations: usize,
    pub seeds: Vec<u64>,
    pub ppo: PpoConfig,
}

impl Default for TrainOnlineCliConfig {
    fn default() -> Self {
        TrainOnlineCliConfig {
            env: ToyEnvKind::DeepSea,
            size: 10,
            iterations: 2000,
            seeds: vec![0, 1, 2, 3, 4],
            ppo: PpoConfig::default(),
        }
    }
}

impl TrainOnlineCliConfig {
    pub fn validate(&self) -> Result<()> {
        require(self.size >= 2, "size", "must be >= 2")?;
        require(self.iterations >= 1, "iterations", "must be >= 1")?;
        require(!self.seeds.is_empty(), "seeds", "must not be empty")?;
        require(
            (0.0..=1.0).contains(&self.ppo.alpha),
            "ppo.alpha",
            "must be in [0, 1]",
        )?;
        self.ppo.validate()
    }
}

/// Offline dataset generation plus actor-critic training with the
/// anti-exploration penalty.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainOfflineCliConfig {
    pub dataset_size: usize,
    /// Behavior-policy action interval (a sub-interval of the env's range
    /// gives narrow coverage).
    pub behavior_low: f64,
    pub behavior_high: f64,
    pub dataset_seed: u64,
    pub iterations: usize,
    pub seeds: Vec<u64>,
    /// When set, check policy_mean_bonus <= limit * dataset_mean_bonus.
    pub bonus_ratio_limit: Option<f64>,
    pub sac: SacConfig,
}

impl Default for TrainOfflineCliConfig {
    fn default() -> Self {
        TrainOfflineCliConfig {
            dataset_size: 4000,
            behavior_low: -0.5,
            behavior_high: 0.5,
            dataset_seed: 7,
            iterations: 3000,
            seeds: vec![0, 1, 2],
            bonus_ratio_limit: None,
            sac: SacConfig::default(),
        }
    }
}

impl TrainOfflineCliConfig {
    pub fn validate(&self) -> Result<()> {
        require(
            self.dataset_size >= 1000,
            "dataset_size",
            "must be >= 1000",
        )?;
        require(
            self.behavior_low < self.behavior_high,
            "behavior_low",
            "must be < behavior_high",
        )?;
        require(self.iterations >= 1, "iterations", "must be >= 1")?;
        require(!self.seeds.is_empty(), "seeds", "must not be empty")?;
        if let Some(l) = self.bonus_ratio_limit {
            require(l > 0.0, "bonus_ratio_limit", "must be > 0")?;
        }
        require(
            (0.0..=1.0).contains(&self.sac.alpha),
            "sac.alpha",
            "must be in [0, 1]",
        )?;
        self.sac.validate()
    }
}

/// Parse one subcommand's TOML text. Unknown keys, duplicate keys, and type
/// mismatches surface as config errors with the key path in the message.
pub fn parse_toml<T: serde::de::DeserializeOwned>(text: &str) -> Result<T> {
    toml::from_str(text).map_err(|e| DrndError::Config(e.to_string()))
}

/// Parse the `--seeds` override: a comma-separated list of u64 values.
pub fn parse_seed_list(text: &str) -> Result<Vec<u64>> {
    let seeds: Vec<u64> = text
        .split(',')
        .map(|s| {
            s.trim()
                .parse::<u64>()
                .map_err(|_| DrndError::Usage(format!("invalid seed '{s}' in --seeds")))
        })
        .collect::<Result<_>>()?;
    if seeds.is_empty() {
        return Err(DrndError::Usage("--seeds list is empty".into()));
    }
    Ok(seeds)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_online_config_gets_documented_defaults() {
        let cfg: TrainOnlineCliConfig = parse_toml("").unwrap();
        assert_eq!(cfg.ppo.n_targets, 10);
        assert!((cfg.ppo.alpha - 0.9).abs() < 1e-15);
        assert!((cfg.ppo.gamma - 0.99).abs() < 1e-15);
        assert!((cfg.ppo.clip - 0.1).abs() < 1e-15);
        assert!((cfg.ppo.lam_gae - 0.95).abs() < 1e-15);
        cfg.validate().unwrap();
    }

    #[test]
    fn unknown_key_rejected() {
        let err = parse_toml::<InconsistencyCliConfig>("not_a_key = 3").unwrap_err();
        assert!(err.to_string().contains("not_a_key"));
    }

    #[test]
    fn duplicate_key_rejected() {
        assert!(parse_toml::<InconsistencyCliConfig>("m = 3\nm = 4").is_err());
    }

    #[test]
    fn range_error_names_key() {
        let cfg: InconsistencyCliConfig = parse_toml("alpha = 1.5").unwrap();
        let err = cfg.validate().unwrap_err();
        assert!(err.to_string().contains("alpha"));
        let cfg: TrainOfflineCliConfig = parse_toml("dataset_size = 10").unwrap();
        let err = cfg.validate().unwrap_err();
        assert!(err.to_string().contains("dataset_size"));
    }

    #[test]
    fn seed_list_parsing() {
        assert_eq!(parse_seed_list("0, 1,2").unwrap(), vec![0, 1, 2]);
        assert!(parse_seed_list("1,x").is_err());
    }

    #[test]
    fn nested_ppo_table_parses() {
        let cfg: TrainOnlineCliConfig =
            parse_toml("env = \"sparse_chain\"\n[ppo]\nmethod = \"rnd\"\nn_targets = 1\nalpha = 1.0\n")
                .unwrap();
        assert_eq!(cfg.env, ToyEnvKind::SparseChain);
        cfg.validate().unwrap();
    }
}
