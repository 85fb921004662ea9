//! DRND engine: frozen target ensemble, predictor distillation, moments,
//! and the two-term bonus.
//!
//! The target ensemble defines, for every input `x`, a discrete distribution
//! over the N target outputs. The predictor is trained with MSE against
//! samples from that distribution; its distance to the ensemble mean gives
//! the first bonus, and a variance-normalized ratio gives the second
//! (pseudo-count) bonus.

use serde::{Deserialize, Serialize};

use crate::error::{DrndError, Result};
use crate::nn::{
    adam_step, mlp_backward, mlp_backward_cached, mlp_forward, mlp_forward_cached, AdamState,
    MlpParams, MlpSpec,
};
use crate::rng::Rng64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetMode {
    /// N independently initialized random MLPs.
    RandomMlp,
    /// Two constant targets emitting all -1 and all +1 (the CFN reduction).
    Rademacher,
}

/// N frozen random networks defining the distribution of c(x).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TargetEnsemble {
    pub spec: MlpSpec,
    pub mode: TargetMode,
    targets: Vec<MlpParams>,
    n: usize,
}

impl TargetEnsemble {
    pub fn init(spec: &MlpSpec, n: usize, mode: TargetMode, seed: u64) -> Result<Self> {
        spec.validate()?;
        match mode {
            TargetMode::RandomMlp => {
                if n == 0 {
                    return Err(DrndError::Config(
                        "target ensemble needs at least one network".into(),
                    ));
                }
                let targets = (0..n)
                    .map(|i| {
                        let mut s = spec.clone();
                        s.seed = crate::rng::derive_seed(seed, i as u64);
                        crate::nn::mlp_init(&s)
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok(TargetEnsemble {
                    spec: spec.clone(),
                    mode,
                    targets,
                    n,
                })
            }
            TargetMode::Rademacher => {
                if n != 2 {
                    return Err(DrndError::Config(format!(
                        "rademacher mode requires N=2 (got {n})"
                    )));
                }
                Ok(TargetEnsemble {
                    spec: spec.clone(),
                    mode,
                    targets: Vec::new(),
                    n: 2,
                })
            }
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn input_dim(&self) -> usize {
        self.spec.input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.spec.output_dim()
    }

    /// Output of target i at x.
    pub fn target_output(&self, i: usize, x: &[f64]) -> Result<Vec<f64>> {
        match self.mode {
            TargetMode::RandomMlp => mlp_forward(&self.targets[i], x),
            TargetMode::Rademacher => {
                if x.len() != self.input_dim() {
                    return Err(DrndError::Shape(format!(
                        "input length {} does not match ensemble input dim {}",
                        x.len(),
                        self.input_dim()
                    )));
                }
                let v = if i == 0 { -1.0 } else { 1.0 };
                Ok(vec![v; self.output_dim()])
            }
        }
    }

    /// Combined hash over all frozen parameters.
    pub fn content_hash(&self) -> u64 {
        let mut h = 0u64;
        for t in &self.targets {
            h = h.rotate_left(1) ^ t.content_hash();
        }
        h ^ (self.n as u64)
    }
}

/// Per-input first and second raw moments of c(x), element-wise.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentSet {
    pub mu: Vec<f64>,
    pub b2: Vec<f64>,
}

/// mu = mean over targets, b2 = mean of element-wise squares.
pub fn moments(ens: &TargetEnsemble, x: &[f64]) -> Result<MomentSet> {
    let d = ens.output_dim();
    let mut mu = vec![0.0; d];
    let mut b2 = vec![0.0; d];
    for i in 0..ens.len() {
        let out = ens.target_output(i, x)?;
        for j in 0..d {
            mu[j] += out[j];
            b2[j] += out[j] * out[j];
        }
    }
    let inv = 1.0 / ens.len() as f64;
    for j in 0..d {
        mu[j] *= inv;
        b2[j] *= inv;
    }
    Ok(MomentSet { mu, b2 })
}

/// Draw c(x) = output of a uniformly chosen target. Consumes exactly one
/// RNG event for the index.
pub fn sample_c(ens: &TargetEnsemble, x: &[f64], rng: &mut Rng64) -> Result<Vec<f64>> {
    let i = rng.index(ens.len());
    ens.target_output(i, x)
}

/// Bonus shaping knobs. alpha mixes the two bonus terms;
/// the rest guards the pseudo-count ratio.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BonusConfig {
    pub alpha: f64,
    pub denom_epsilon: f64,
    pub clamp_negative_numerator: bool,
    /// Per-dimension floor on the pseudo-count ratio. Truncates the
    /// negative half of the estimator noise at high visit counts.
    pub ratio_lower_clamp: Option<f64>,
    pub ratio_upper_clamp: Option<f64>,
    /// Drop output dimensions whose squared ensemble mean exceeds this
    /// multiple of the ensemble variance. Those dimensions contribute pure
    /// estimator noise to the ratio (their noise scales with mu^2/var while
    /// the count signal does not), so trimming them sharpens the trained
    /// ratio without biasing it. Ignored if it would leave no dimensions.
    pub mean_to_variance_limit: Option<f64>,
    /// Scale applied by consumers (agents), not inside bonus_total.
    pub lambda: f64,
}

impl Default for BonusConfig {
    fn default() -> Self {
        BonusConfig {
            alpha: 0.9,
            denom_epsilon: 1e-8,
            clamp_negative_numerator: false,
            ratio_lower_clamp: None,
            ratio_upper_clamp: None,
            mean_to_variance_limit: None,
            lambda: 1.0,
        }
    }
}

impl BonusConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(DrndError::Config(format!(
                "alpha must be in [0,1], got {}",
                self.alpha
            )));
        }
        if self.denom_epsilon <= 0.0 {
            return Err(DrndError::Config(format!(
                "denom_epsilon must be > 0, got {}",
                self.denom_epsilon
            )));
        }
        Ok(())
    }
}

/// Trainable predictor plus its optimizer state.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PredictorState {
    pub spec: MlpSpec,
    pub params: MlpParams,
    pub adam: AdamState,
}

impl PredictorState {
    pub fn new(spec: &MlpSpec, lr: f64) -> Result<Self> {
        let params = crate::nn::mlp_init(spec)?;
        let adam = AdamState::new(&params, lr);
        Ok(PredictorState {
            spec: spec.clone(),
            params,
            adam,
        })
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        mlp_forward(&self.params, x)
    }
}

/// One MSE distillation step on a batch of (x, c) pairs.
/// Loss is the batch mean of ||f_theta(x) - c||^2; one Adam update applied.
pub fn distill_step(pred: &mut PredictorState, batch: &[(Vec<f64>, Vec<f64>)]) -> Result<f64> {
    if batch.is_empty() {
        return Err(DrndError::Argument("distill batch is empty".into()));
    }
    let mut total = pred.params.zeros_like();
    let mut loss = 0.0;
    for (x, c) in batch {
        let cache = mlp_forward_cached(&pred.params, x)?;
        let f = cache.output();
        if f.len() != c.len() {
            return Err(DrndError::Shape(format!(
                "target sample length {} does not match predictor output dim {}",
                c.len(),
                f.len()
            )));
        }
        let mut upstream = vec![0.0; f.len()];
        for j in 0..f.len() {
            let e = f[j] - c[j];
            loss += e * e;
            upstream[j] = 2.0 * e / batch.len() as f64;
        }
        let (g, _) = mlp_backward_cached(&pred.params, &cache, &upstream)?;
        total.add_assign(&g);
    }
    loss /= batch.len() as f64;
    if !loss.is_finite() {
        return Err(DrndError::NonFinite("distillation loss".into()));
    }
    adam_step(&mut pred.adam, &mut pred.params, &total)?;
    Ok(loss)
}

/// First bonus: squared distance of the predictor output to the ensemble
/// mean, summed over output dimensions.
pub fn b1_from_outputs(f: &[f64], mu: &[f64]) -> f64 {
    f.iter().zip(mu).map(|(a, b)| (a - b) * (a - b)).sum()
}

pub fn bonus_b1(pred: &PredictorState, mom: &MomentSet, x: &[f64]) -> Result<f64> {
    let f = pred.forward(x)?;
    if f.len() != mom.mu.len() {
        return Err(DrndError::Shape(
            "predictor output dim does not match moment dim".into(),
        ));
    }
    Ok(b1_from_outputs(&f, &mom.mu))
}

/// Second bonus: sqrt of the pseudo-count ratio, averaged per output
/// dimension: mean_j (f_j^2 - mu_j^2) / (B2_j - mu_j^2).
/// Dimensions whose target variance falls below `denom_epsilon` carry no
/// count information and are excluded. Per-dimension numerators stay signed
/// by default (the ratio statistic is unbiased only in signed form); the
/// final mean ratio is floored at zero before the sqrt. Optional knobs clamp
/// negative numerators at zero per dimension or cap per-dimension ratios at
/// `ratio_upper_clamp`.
pub fn b2_from_outputs(f: &[f64], mom: &MomentSet, cfg: &BonusConfig) -> Result<f64> {
    let keep = ratio_dims(f.len(), mom, cfg);
    let mut sum = 0.0;
    let mut valid = 0usize;
    for j in 0..f.len() {
        if !keep[j] {
            continue;
        }
        let v = mom.b2[j] - mom.mu[j] * mom.mu[j];
        let mut num = f[j] * f[j] - mom.mu[j] * mom.mu[j];
        if num < 0.0 && cfg.clamp_negative_numerator {
            num = 0.0;
        }
        let mut y = num / v;
        if let Some(lo) = cfg.ratio_lower_clamp {
            y = y.max(lo);
        }
        if let Some(cap) = cfg.ratio_upper_clamp {
            y = y.min(cap);
        }
        sum += y;
        valid += 1;
    }
    if valid == 0 {
        return Err(DrndError::DegenerateEnsemble(
            "all per-dimension target variances below denom_epsilon".into(),
        ));
    }
    let ratio = (sum / valid as f64).max(0.0);
    Ok(ratio.sqrt())
}

/// Dimensions that enter the pseudo-count ratio: variance at least
/// `denom_epsilon`, optionally restricted to dimensions whose squared mean
/// stays within `mean_to_variance_limit` times the variance. The restriction
/// is dropped if it would exclude every dimension.
fn ratio_dims(d: usize, mom: &MomentSet, cfg: &BonusConfig) -> Vec<bool> {
    let mut keep: Vec<bool> = (0..d)
        .map(|j| mom.b2[j] - mom.mu[j] * mom.mu[j] >= cfg.denom_epsilon)
        .collect();
    if let Some(limit) = cfg.mean_to_variance_limit {
        let trimmed: Vec<bool> = (0..d)
            .map(|j| {
                keep[j] && mom.mu[j] * mom.mu[j] <= limit * (mom.b2[j] - mom.mu[j] * mom.mu[j])
            })
            .collect();
        if trimmed.iter().any(|&k| k) {
            keep = trimmed;
        }
    }
    keep
}

pub fn bonus_b2(
    pred: &PredictorState,
    mom: &MomentSet,
    x: &[f64],
    cfg: &BonusConfig,
) -> Result<f64> {
    let f = pred.forward(x)?;
    if f.len() != mom.mu.len() {
        return Err(DrndError::Shape(
            "predictor output dim does not match moment dim".into(),
        ));
    }
    b2_from_outputs(&f, mom, cfg)
}

/// Total bonus alpha * b1 + (1 - alpha) * b2. Lambda scaling is left to the
/// consuming agent.
pub fn bonus_total(b1: f64, b2: f64, cfg: &BonusConfig) -> f64 {
    cfg.alpha * b1 + (1.0 - cfg.alpha) * b2
}

/// Convenience: both bonus terms and their combination at x.
pub fn bonus(
    pred: &PredictorState,
    ens: &TargetEnsemble,
    x: &[f64],
    cfg: &BonusConfig,
) -> Result<(f64, f64, f64)> {
    let mom = moments(ens, x)?;
    let f = pred.forward(x)?;
    let b1 = b1_from_outputs(&f, &mom.mu);
    // At alpha = 1 the ratio term is weighted out entirely; skipping it keeps
    // single-target (plain distillation) configurations valid.
    let b2 = if cfg.alpha == 1.0 {
        0.0
    } else {
        b2_from_outputs(&f, &mom, cfg)?
    };
    Ok((b1, b2, bonus_total(b1, b2, cfg)))
}

/// Gradient of the total bonus with respect to the input vector x.
/// Needed by the offline actor, which differentiates the penalty through the
/// action. Clamped regions (negative numerator, floored denominator, upper
/// ratio clamp) get the zero subgradient.
pub fn bonus_input_grad(
    pred: &PredictorState,
    ens: &TargetEnsemble,
    x: &[f64],
    cfg: &BonusConfig,
) -> Result<Vec<f64>> {
    let d_in = x.len();
    let mom = moments(ens, x)?;
    let f = pred.forward(x)?;
    let n = ens.len() as f64;
    let d_out = f.len();

    // J_f^T v for the predictor.
    let jf_t = |v: &[f64]| -> Result<Vec<f64>> {
        let (_, gx) = mlp_backward(&pred.params, x, v)?;
        Ok(gx)
    };
    // sum_i J_{fbar_i}^T v_i, averaged by 1/N outside.
    let jtargets_t = |per_target: &dyn Fn(usize, &[f64]) -> Vec<f64>| -> Result<Vec<f64>> {
        let mut acc = vec![0.0; d_in];
        if ens.mode == TargetMode::Rademacher {
            return Ok(acc); // constant targets, zero Jacobian
        }
        for i in 0..ens.len() {
            let out = ens.target_output(i, x)?;
            let v = per_target(i, &out);
            let (_, gx) = mlp_backward(ens_target_params(ens, i), x, &v)?;
            for (a, g) in acc.iter_mut().zip(gx) {
                *a += g;
            }
        }
        Ok(acc)
    };

    // b1 = sum_j (f_j - mu_j)^2
    // d b1/dx = J_f^T 2(f - mu) - (1/N) sum_i J_i^T 2(f - mu)
    let resid: Vec<f64> = f.iter().zip(&mom.mu).map(|(a, b)| 2.0 * (a - b)).collect();
    let mut grad_b1 = jf_t(&resid)?;
    let via_mu = jtargets_t(&|_i, _out| resid.clone())?;
    for (g, v) in grad_b1.iter_mut().zip(&via_mu) {
        *g -= v / n;
    }

    // b2 = sqrt(R) with R = mean_j y_j over valid dims,
    // y_j = (f_j^2 - mu_j^2) / (B2_j - mu_j^2).
    let mut var_j = vec![0.0; d_out];
    let mut num_j = vec![0.0; d_out];
    // Active dims contribute gradient: valid variance and unclamped numerator.
    let mut active = vec![false; d_out];
    let keep = ratio_dims(d_out, &mom, cfg);
    let mut sum = 0.0;
    let mut valid = 0usize;
    for j in 0..d_out {
        var_j[j] = mom.b2[j] - mom.mu[j] * mom.mu[j];
        num_j[j] = f[j] * f[j] - mom.mu[j] * mom.mu[j];
        if !keep[j] {
            continue;
        }
        valid += 1;
        if num_j[j] < 0.0 && cfg.clamp_negative_numerator {
            continue;
        }
        let y = num_j[j] / var_j[j];
        if let Some(lo) = cfg.ratio_lower_clamp {
            if y <= lo {
                sum += lo;
                continue; // floored dim, zero subgradient
            }
        }
        if let Some(cap) = cfg.ratio_upper_clamp {
            if y >= cap {
                sum += cap;
                continue; // saturated dim, zero subgradient
            }
        }
        active[j] = true;
        sum += y;
    }
    let ratio = if valid == 0 { 0.0 } else { sum / valid as f64 };
    let grad_b2 = if cfg.alpha == 1.0 || valid == 0 || ratio <= 0.0 {
        vec![0.0; d_in]
    } else {
        let m = valid as f64;
        // dR/dx = (1/m) sum_active [2 f_j grad f_j - 2 mu_j grad mu_j] / v_j
        //         - (n_j / v_j^2) (grad B2_j - 2 mu_j grad mu_j)
        // expressed as one predictor pullback plus one pullback per target.
        let a: Vec<f64> = (0..d_out)
            .map(|j| {
                if active[j] {
                    2.0 * f[j] / (m * var_j[j])
                } else {
                    0.0
                }
            })
            .collect();
        let mut dratio = jf_t(&a)?;
        let via = jtargets_t(&|_i, out| {
            (0..d_out)
                .map(|j| {
                    if active[j] {
                        let v = var_j[j];
                        (-2.0 * mom.mu[j] / v
                            - 2.0 * num_j[j] / (v * v) * (out[j] - mom.mu[j]))
                            / (m * n)
                    } else {
                        0.0
                    }
                })
                .collect()
        })?;
        for (g, v) in dratio.iter_mut().zip(&via) {
            *g += v;
        }
        let b2v = ratio.sqrt();
        dratio.iter().map(|dr| dr / (2.0 * b2v)).collect()
    };

    let mut out = vec![0.0; d_in];
    for j in 0..d_in {
        out[j] = cfg.alpha * grad_b1[j] + (1.0 - cfg.alpha) * grad_b2[j];
    }
    Ok(out)
}

fn ens_target_params(ens: &TargetEnsemble, i: usize) -> &MlpParams {
    &ens.targets[i]
}

/// Welford accumulator over the discounted intrinsic return; rewards are
/// divided by the running standard deviation (floored).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunningNormalizer {
    pub gamma: f64,
    ret: f64,
    count: u64,
    mean: f64,
    m2: f64,
    std_floor: f64,
}

impl RunningNormalizer {
    pub fn new(gamma: f64) -> Self {
        RunningNormalizer {
            gamma,
            ret: 0.0,
            count: 0,
            mean: 0.0,
            m2: 0.0,
            std_floor: 1e-8,
        }
    }

    pub fn std(&self) -> f64 {
        if self.count < 2 {
            return self.std_floor;
        }
        (self.m2 / self.count as f64).sqrt().max(self.std_floor)
    }

    /// Divide each reward by the running std of the discounted intrinsic
    /// return, updating the accumulators in order.
    pub fn normalize(&mut self, rewards: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(rewards.len());
        for &r in rewards {
            self.ret = self.gamma * self.ret + r;
            self.count += 1;
            let delta = self.ret - self.mean;
            self.mean += delta / self.count as f64;
            self.m2 += delta * (self.ret - self.mean);
            out.push(r / self.std());
        }
        out
    }
}

/// Per-dimension running mean/std input normalizer with clipping, standard
/// for distillation inputs in agent loops.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ObsNormalizer {
    mean: Vec<f64>,
    m2: Vec<f64>,
    count: u64,
    clip: f64,
}

impl ObsNormalizer {
    pub fn new(dim: usize) -> Self {
        ObsNormalizer {
            mean: vec![0.0; dim],
            m2: vec![0.0; dim],
            count: 0,
            clip: 5.0,
        }
    }

    pub fn update(&mut self, x: &[f64]) {
        self.count += 1;
        for j in 0..x.len() {
            let delta = x[j] - self.mean[j];
            self.mean[j] += delta / self.count as f64;
            self.m2[j] += delta * (x[j] - self.mean[j]);
        }
    }

    pub fn normalize(&self, x: &[f64]) -> Vec<f64> {
        if self.count < 2 {
            return x.to_vec();
        }
        x.iter()
            .enumerate()
            .map(|(j, &v)| {
                let std = (self.m2[j] / self.count as f64).sqrt().max(1e-8);
                ((v - self.mean[j]) / std).clamp(-self.clip, self.clip)
            })
            .collect()
    }
}
