//! Shared fixtures for the criterion benchmarks.

use drnd_core::bonus::{BonusConfig, PredictorState, TargetEnsemble, TargetMode};
use drnd_core::error::Result;
use drnd_core::nn::{Activation, MlpSpec};
use drnd_core::rng::Rng64;

pub struct BonusFixture {
    pub pred: PredictorState,
    pub ens: TargetEnsemble,
    pub cfg: BonusConfig,
    pub input: Vec<f64>,
}

/// A mid-sized predictor/ensemble pair with a random probe input.
pub fn bonus_fixture(input_dim: usize, width: usize, n_targets: usize) -> Result<BonusFixture> {
    let pred_spec = MlpSpec::new(vec![input_dim, width, width, width], Activation::Relu, 11);
    let target_spec = MlpSpec::with_gain(vec![input_dim, width, width], Activation::Relu, 12, 3.0);
    let pred = PredictorState::new(&pred_spec, 1e-4)?;
    let ens = TargetEnsemble::init(&target_spec, n_targets, TargetMode::RandomMlp, 13)?;
    let mut rng = Rng64::new(7);
    let input = (0..input_dim).map(|_| rng.normal()).collect();
    Ok(BonusFixture {
        pred,
        ens,
        cfg: BonusConfig::default(),
        input,
    })
}
