//! Offline actor-critic with an anti-exploration penalty: the distillation
//! bonus, pre-trained on the static dataset's (state, action) pairs, is
//! subtracted from both the critic target and the actor objective so the
//! learned policy stays inside the dataset's action support.
//!
//! The task is a 1-D continuous line-walk; the behavior policy covers only a
//! sub-interval of the action space, so out-of-support actions carry a high
//! bonus and get penalized.

use serde::{Deserialize, Serialize};

use crate::bonus::{
    bonus, bonus_input_grad, distill_step, sample_c, BonusConfig, PredictorState, TargetEnsemble,
    TargetMode,
};
use crate::envs::LineWalkEnv;
use crate::error::{DrndError, Result};
use crate::nn::{
    adam_step, mlp_backward_cached, mlp_forward, mlp_forward_cached, Activation, AdamState,
    MlpParams, MlpSpec,
};
use crate::rng::{derive_seed, Rng64};

/// One stored transition of the offline dataset.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OfflineTransition {
    pub s: f64,
    pub a: f64,
    pub r: f64,
    pub s_next: f64,
    pub done: bool,
}

/// Static dataset plus provenance metadata.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OfflineDataset {
    pub transitions: Vec<OfflineTransition>,
    pub behavior: String,
    /// Declared action support of the behavior policy.
    pub action_low: f64,
    pub action_high: f64,
    pub env: LineWalkEnv,
}

impl OfflineDataset {
    pub fn validate(&self) -> Result<()> {
        if self.transitions.is_empty() {
            return Err(DrndError::Config("offline dataset is empty".into()));
        }
        if self
            .transitions
            .iter()
            .any(|t| t.a < self.action_low - 1e-12 || t.a > self.action_high + 1e-12)
        {
            return Err(DrndError::Config(
                "dataset action outside declared bounds".into(),
            ));
        }
        Ok(())
    }
}

/// Roll out a uniform-random behavior policy confined to
/// [action_low, action_high] and record every transition.
pub fn generate_offline_dataset(
    env: &LineWalkEnv,
    action_low: f64,
    action_high: f64,
    size: usize,
    seed: u64,
) -> Result<OfflineDataset> {
    if size < 1000 {
        return Err(DrndError::Config(format!(
            "offline dataset needs at least 1000 transitions, got {size}"
        )));
    }
    if !(action_low < action_high && action_low >= -1.0 && action_high <= 1.0) {
        return Err(DrndError::Config(format!(
            "behavior action interval [{action_low}, {action_high}] invalid"
        )));
    }
    let mut rng = Rng64::new(seed);
    let mut transitions = Vec::with_capacity(size);
    let mut s = rng.uniform_range(-1.0, 1.0);
    let mut t_in_ep = 0usize;
    while transitions.len() < size {
        let a = rng.uniform_range(action_low, action_high);
        let (s2, r) = env.transition(s, a);
        t_in_ep += 1;
        let done = t_in_ep >= env.episode_len;
        transitions.push(OfflineTransition {
            s,
            a,
            r,
            s_next: s2,
            done,
        });
        if done {
            s = rng.uniform_range(-1.0, 1.0);
            t_in_ep = 0;
        } else {
            s = s2;
        }
    }
    Ok(OfflineDataset {
        transitions,
        behavior: format!("uniform actions in [{action_low}, {action_high}]"),
        action_low,
        action_high,
        env: env.clone(),
    })
}

/// Offline agent hyperparameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SacConfig {
    pub gamma: f64,
    /// Soft-update rate for the target critics.
    pub tau: f64,
    /// Penalty weight in the actor objective.
    pub lambda_actor: f64,
    /// Penalty weight inside the critic target.
    pub lambda_critic: f64,
    pub lr_actor: f64,
    pub lr_critic: f64,
    pub lr_distill: f64,
    pub lr_entropy: f64,
    pub batch_size: usize,
    /// Distillation pre-training epochs over the dataset.
    pub pretrain_epochs: usize,
    pub alpha: f64,
    pub n_targets: usize,
    pub hidden: usize,
    pub target_gain: f64,
    /// Evaluation episodes per evaluation point.
    pub eval_episodes: usize,
}

impl Default for SacConfig {
    fn default() -> Self {
        SacConfig {
            gamma: 0.99,
            tau: 0.005,
            lambda_actor: 1.0,
            lambda_critic: 1.0,
            lr_actor: 3e-4,
            lr_critic: 3e-4,
            lr_distill: 3e-4,
            lr_entropy: 3e-4,
            batch_size: 256,
            pretrain_epochs: 100,
            alpha: 0.9,
            n_targets: 10,
            hidden: 64,
            target_gain: 1.0,
            eval_episodes: 10,
        }
    }
}

impl SacConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 < self.tau && self.tau <= 1.0) {
            return Err(DrndError::Config(format!(
                "tau must be in (0,1], got {}",
                self.tau
            )));
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(DrndError::Config(format!(
                "gamma must be in [0,1), got {}",
                self.gamma
            )));
        }
        if self.lambda_actor < 0.0 || self.lambda_critic < 0.0 {
            return Err(DrndError::Config("lambda weights must be >= 0".into()));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(DrndError::Config(format!(
                "alpha must be in [0,1], got {}",
                self.alpha
            )));
        }
        if self.batch_size == 0 || self.hidden == 0 || self.n_targets == 0 {
            return Err(DrndError::Config(
                "batch_size, hidden and n_targets must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Final evaluation summary.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub mean_return: f64,
    /// Mean bonus of the trained policy's mean action on dataset states.
    pub policy_mean_bonus: f64,
    /// Mean bonus of the dataset's own (s, a) pairs.
    pub dataset_mean_bonus: f64,
    pub entropy_coef: f64,
}

/// Squashed-Gaussian actor: a tanh of a reparameterized Gaussian whose mean
/// and log-std come from a two-headed MLP.
#[derive(Debug, Clone)]
pub struct Actor {
    pub params: MlpParams,
    pub adam: AdamState,
}

const LOG_STD_MIN: f64 = -5.0;
const LOG_STD_MAX: f64 = 2.0;

impl Actor {
    pub fn new(hidden: usize, lr: f64, seed: u64) -> Result<Self> {
        // Input: state (1-D); outputs: (mean, log_std).
        let spec = MlpSpec::new(vec![1, hidden, hidden, 2], Activation::Relu, seed);
        let params = crate::nn::mlp_init(&spec)?;
        let adam = AdamState::new(&params, lr);
        Ok(Actor { params, adam })
    }

    /// (pre-squash mean, clamped log std).
    pub fn head(&self, s: f64) -> Result<(f64, f64)> {
        let out = mlp_forward(&self.params, &[s])?;
        Ok((out[0], out[1].clamp(LOG_STD_MIN, LOG_STD_MAX)))
    }

    /// Reparameterized sample: a = tanh(mean + std * eps) with the standard
    /// squash-corrected log density.
    pub fn sample(&self, s: f64, eps: f64) -> Result<SquashedSample> {
        let (mean, log_std) = self.head(s)?;
        let std = log_std.exp();
        let u = mean + std * eps;
        let a = u.tanh();
        let logp = gaussian_logp(u, mean, std) - tanh_correction(u);
        Ok(SquashedSample {
            mean,
            log_std,
            eps,
            u,
            a,
            logp,
        })
    }

    /// Deterministic (mean) action.
    pub fn mean_action(&self, s: f64) -> Result<f64> {
        let (mean, _) = self.head(s)?;
        Ok(mean.tanh())
    }
}

/// Everything needed to differentiate through one squashed draw.
#[derive(Debug, Clone, Copy)]
pub struct SquashedSample {
    pub mean: f64,
    pub log_std: f64,
    pub eps: f64,
    pub u: f64,
    pub a: f64,
    pub logp: f64,
}

fn gaussian_logp(u: f64, mean: f64, std: f64) -> f64 {
    let z = (u - mean) / std;
    -0.5 * z * z - std.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln()
}

/// log(1 - tanh(u)^2) computed stably.
fn tanh_correction(u: f64) -> f64 {
    // 1 - tanh(u)^2 = 4 / (e^u + e^-u)^2 = 4 e^{2u} / (e^{2u}+1)^2
    2.0 * ((2.0f64).ln() + u - softplus_2u(u))
}

/// softplus(2u) = ln(1 + e^{2u}), stable for large |u|.
fn softplus_2u(u: f64) -> f64 {
    let x = 2.0 * u;
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

/// Scalar-output critic Q(s, a).
#[derive(Debug, Clone)]
pub struct Critic {
    pub params: MlpParams,
    pub adam: AdamState,
}

impl Critic {
    pub fn new(hidden: usize, lr: f64, seed: u64) -> Result<Self> {
        let spec = MlpSpec::new(vec![2, hidden, hidden, 1], Activation::Relu, seed);
        let params = crate::nn::mlp_init(&spec)?;
        let adam = AdamState::new(&params, lr);
        Ok(Critic { params, adam })
    }

    pub fn q(&self, s: f64, a: f64) -> Result<f64> {
        Ok(mlp_forward(&self.params, &[s, a])?[0])
    }
}

/// Exact soft update: target = (1 - tau) * target + tau * online.
pub fn soft_update(target: &mut MlpParams, online: &MlpParams, tau: f64) {
    for (lt, lo) in target.layers.iter_mut().zip(&online.layers) {
        for (wt, wo) in lt.w.iter_mut().zip(&lo.w) {
            *wt = (1.0 - tau) * *wt + tau * *wo;
        }
        for (bt, bo) in lt.b.iter_mut().zip(&lo.b) {
            *bt = (1.0 - tau) * *bt + tau * *bo;
        }
    }
}

/// Distillation machinery over (s, a) inputs.
pub struct OfflineBonus {
    pub pred: PredictorState,
    pub ens: TargetEnsemble,
    pub cfg: BonusConfig,
}

impl OfflineBonus {
    pub fn new(cfg: &SacConfig, seed: u64) -> Result<Self> {
        let targ_spec = MlpSpec::with_gain(
            vec![2, cfg.hidden, cfg.hidden],
            Activation::Relu,
            derive_seed(seed, 1),
            cfg.target_gain,
        );
        let ens = TargetEnsemble::init(
            &targ_spec,
            cfg.n_targets,
            TargetMode::RandomMlp,
            derive_seed(seed, 2),
        )?;
        let pred_spec = MlpSpec::new(
            vec![2, cfg.hidden, cfg.hidden, cfg.hidden],
            Activation::Relu,
            derive_seed(seed, 3),
        );
        let pred = PredictorState::new(&pred_spec, cfg.lr_distill)?;
        let bcfg = BonusConfig {
            alpha: cfg.alpha,
            ..Default::default()
        };
        Ok(OfflineBonus {
            pred,
            ens,
            cfg: bcfg,
        })
    }

    pub fn bonus_at(&self, s: f64, a: f64) -> Result<f64> {
        Ok(bonus(&self.pred, &self.ens, &[s, a], &self.cfg)?.2)
    }

    /// d bonus / d action (the second input coordinate).
    pub fn bonus_action_grad(&self, s: f64, a: f64) -> Result<f64> {
        Ok(bonus_input_grad(&self.pred, &self.ens, &[s, a], &self.cfg)?[1])
    }
}

/// Distill the predictor on dataset (s, a) pairs for `epochs` shuffled
/// minibatch passes. Returns per-epoch mean losses.
pub fn pretrain_drnd(
    model: &mut OfflineBonus,
    dataset: &OfflineDataset,
    batch_size: usize,
    epochs: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    dataset.validate()?;
    let mut rng = Rng64::derive(seed, 100);
    let inputs: Vec<Vec<f64>> = dataset
        .transitions
        .iter()
        .map(|t| vec![t.s, t.a])
        .collect();
    let mut losses = Vec::with_capacity(epochs);
    let mut order: Vec<usize> = (0..inputs.len()).collect();
    for _ in 0..epochs {
        rng.shuffle(&mut order);
        let mut epoch_loss = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(batch_size.max(1)) {
            let mut pairs = Vec::with_capacity(chunk.len());
            for &i in chunk {
                let c = sample_c(&model.ens, &inputs[i], &mut rng)?;
                pairs.push((inputs[i].clone(), c));
            }
            epoch_loss += distill_step(&mut model.pred, &pairs)?;
            batches += 1;
        }
        losses.push(epoch_loss / batches.max(1) as f64);
    }
    Ok(losses)
}

/// Critic target: r + gamma * (1-done) * (min_i Q'_i(s', a') - beta logp(a')
/// - lambda_critic * b(s', a')) with a' drawn from the current policy.
#[allow(clippy::too_many_arguments)]
pub fn critic_target(
    r: f64,
    s_next: f64,
    done: bool,
    q1_t: &MlpParams,
    q2_t: &MlpParams,
    next_action: &SquashedSample,
    next_bonus: f64,
    beta: f64,
    cfg: &SacConfig,
) -> Result<f64> {
    if done {
        return Ok(r);
    }
    let x = [s_next, next_action.a];
    let q = mlp_forward(q1_t, &x)?[0].min(mlp_forward(q2_t, &x)?[0]);
    Ok(r + cfg.gamma * (q - beta * next_action.logp - cfg.lambda_critic * next_bonus))
}

/// Full offline training state.
pub struct OfflineAgent {
    pub cfg: SacConfig,
    pub actor: Actor,
    pub q1: Critic,
    pub q2: Critic,
    pub q1_target: MlpParams,
    pub q2_target: MlpParams,
    pub bonus_model: OfflineBonus,
    /// log of the entropy temperature beta, auto-tuned toward the target
    /// entropy (-action_dim = -1).
    pub log_beta: f64,
    rng: Rng64,
}

impl OfflineAgent {
    pub fn new(cfg: &SacConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let actor = Actor::new(cfg.hidden, cfg.lr_actor, derive_seed(seed, 10))?;
        let q1 = Critic::new(cfg.hidden, cfg.lr_critic, derive_seed(seed, 11))?;
        let q2 = Critic::new(cfg.hidden, cfg.lr_critic, derive_seed(seed, 12))?;
        let q1_target = q1.params.clone();
        let q2_target = q2.params.clone();
        let bonus_model = OfflineBonus::new(cfg, derive_seed(seed, 13))?;
        Ok(OfflineAgent {
            cfg: cfg.clone(),
            actor,
            q1,
            q2,
            q1_target,
            q2_target,
            bonus_model,
            log_beta: 0.0, // beta starts at 1
            rng: Rng64::derive(seed, 14),
        })
    }

    fn beta(&self) -> f64 {
        self.log_beta.exp()
    }

    /// One gradient step on a sampled minibatch. Returns (critic loss,
    /// actor loss).
    pub fn update(&mut self, dataset: &OfflineDataset) -> Result<(f64, f64)> {
        let n = dataset.transitions.len();
        let bs = self.cfg.batch_size.min(n);
        let idx: Vec<usize> = (0..bs).map(|_| self.rng.index(n)).collect();
        let eps: Vec<f64> = (0..bs).map(|_| self.rng.normal()).collect();
        let eps_next: Vec<f64> = (0..bs).map(|_| self.rng.normal()).collect();
        let beta = self.beta();

        // Critic regression to the penalized soft target.
        let mut targets = Vec::with_capacity(bs);
        for (k, &i) in idx.iter().enumerate() {
            let t = &dataset.transitions[i];
            let na = self.actor.sample(t.s_next, eps_next[k])?;
            let nb = self.bonus_model.bonus_at(t.s_next, na.a)?;
            targets.push(critic_target(
                t.r,
                t.s_next,
                t.done,
                &self.q1_target,
                &self.q2_target,
                &na,
                nb,
                beta,
                &self.cfg,
            )?);
        }
        let mut critic_loss = 0.0;
        for (critic, _) in [(&mut self.q1, 0), (&mut self.q2, 1)] {
            let mut grads = critic.params.zeros_like();
            let mut loss = 0.0;
            for (k, &i) in idx.iter().enumerate() {
                let t = &dataset.transitions[i];
                let cache = mlp_forward_cached(&critic.params, &[t.s, t.a])?;
                let err = cache.output()[0] - targets[k];
                loss += err * err;
                let up = vec![2.0 * err / bs as f64];
                let (g, _) = mlp_backward_cached(&critic.params, &cache, &up)?;
                grads.add_assign(&g);
            }
            loss /= bs as f64;
            if !loss.is_finite() {
                return Err(DrndError::NonFinite("critic loss".into()));
            }
            critic_loss += 0.5 * loss;
            adam_step(&mut critic.adam, &mut critic.params, &grads)?;
        }

        // Actor: ascend min_i Q(s, a) - beta logp(a) - lambda_actor b(s, a)
        // through the reparameterized squashed sample. The distillation
        // networks are constants here; only d bonus / d action flows.
        let mut grads = self.actor.params.zeros_like();
        let mut actor_loss = 0.0;
        let mut entropy_sum = 0.0;
        for (k, &i) in idx.iter().enumerate() {
            let t = &dataset.transitions[i];
            let smp = self.actor.sample(t.s, eps[k])?;
            let q1v = self.q1.q(t.s, smp.a)?;
            let q2v = self.q2.q(t.s, smp.a)?;
            let b = self.bonus_model.bonus_at(t.s, smp.a)?;
            let obj = q1v.min(q2v) - beta * smp.logp - self.cfg.lambda_actor * b;
            actor_loss -= obj;
            entropy_sum += -smp.logp;

            // dQ/da from the active (min) critic.
            let active = if q1v <= q2v { &self.q1 } else { &self.q2 };
            let cache = mlp_forward_cached(&active.params, &[t.s, smp.a])?;
            let (_, gin) = mlp_backward_cached(&active.params, &cache, &[1.0])?;
            let dq_da = gin[1];
            let db_da = self.bonus_model.bonus_action_grad(t.s, smp.a)?;

            // Chain through a = tanh(u), u = mean + std * eps.
            let sech2 = 1.0 - smp.a * smp.a;
            let da_dmean = sech2;
            let da_dlogstd = sech2 * smp.log_std.exp() * smp.eps;
            // logp(a) as a function of (mean, log_std) at fixed eps:
            // gaussian term depends on log_std only; squash correction
            // depends on u.
            let dcorr_du = -2.0 * smp.a; // d tanh_correction/du = 2(1 - tanh) ... exact: 2 - 2*sigmoid(2u)*2 = -2 tanh(u)
            let dlogp_dmean = -dcorr_du;
            let dlogp_dlogstd = -1.0 + -dcorr_du * smp.log_std.exp() * smp.eps;

            let dobj_da = dq_da - self.cfg.lambda_actor * db_da;
            let dobj_dmean = dobj_da * da_dmean - beta * dlogp_dmean;
            let dobj_dlogstd = dobj_da * da_dlogstd - beta * dlogp_dlogstd;

            // Minimize the negated objective; log_std head is clamped, so
            // zero its gradient when saturated.
            let cache = mlp_forward_cached(&self.actor.params, &[t.s])?;
            let raw_log_std = cache.output()[1];
            let logstd_active = (LOG_STD_MIN..=LOG_STD_MAX).contains(&raw_log_std);
            let up = vec![
                -dobj_dmean / bs as f64,
                if logstd_active {
                    -dobj_dlogstd / bs as f64
                } else {
                    0.0
                },
            ];
            let (g, _) = mlp_backward_cached(&self.actor.params, &cache, &up)?;
            grads.add_assign(&g);
        }
        actor_loss /= bs as f64;
        if !actor_loss.is_finite() {
            return Err(DrndError::NonFinite("actor loss".into()));
        }
        adam_step(&mut self.actor.adam, &mut self.actor.params, &grads)?;

        // Entropy temperature: gradient step on the standard temperature
        // loss; beta shrinks while entropy exceeds the target -action_dim.
        let target_entropy = -1.0;
        let mean_entropy = entropy_sum / bs as f64;
        self.log_beta -= self.cfg.lr_entropy * (mean_entropy - target_entropy).clamp(-10.0, 10.0);
        self.log_beta = self.log_beta.clamp(-10.0, 5.0);

        soft_update(&mut self.q1_target, &self.q1.params, self.cfg.tau);
        soft_update(&mut self.q2_target, &self.q2.params, self.cfg.tau);
        Ok((critic_loss, actor_loss))
    }

    /// Deterministic evaluation of the mean policy.
    pub fn evaluate(&self, env: &LineWalkEnv, episodes: usize, seed: u64) -> Result<f64> {
        let mut rng = Rng64::derive(seed, 999);
        let mut total = 0.0;
        for _ in 0..episodes {
            let mut s = rng.uniform_range(-1.0, 1.0);
            let mut ep = 0.0;
            for _ in 0..env.episode_len {
                let a = self.actor.mean_action(s)?;
                let (s2, r) = env.transition(s, a);
                ep += r;
                s = s2;
            }
            total += ep;
        }
        Ok(total / episodes as f64)
    }
}

/// Full offline pipeline: distillation pre-training, SAC iterations, final
/// evaluation and bonus audit.
pub fn train_offline(
    cfg: &SacConfig,
    dataset: &OfflineDataset,
    iterations: usize,
    seed: u64,
) -> Result<EvalReport> {
    cfg.validate()?;
    dataset.validate()?;
    let mut agent = OfflineAgent::new(cfg, seed)?;
    pretrain_drnd(
        &mut agent.bonus_model,
        dataset,
        cfg.batch_size,
        cfg.pretrain_epochs,
        derive_seed(seed, 50),
    )?;
    let distill_hash = agent.bonus_model.pred.params.content_hash();
    for _ in 0..iterations {
        agent.update(dataset)?;
    }
    debug_assert_eq!(
        distill_hash,
        agent.bonus_model.pred.params.content_hash(),
        "distillation networks must stay frozen during policy optimization"
    );
    let mean_return = agent.evaluate(&dataset.env, cfg.eval_episodes, derive_seed(seed, 60))?;

    // Bonus audit on dataset states: policy mean action vs stored action.
    let mut policy_bonus = 0.0;
    let mut data_bonus = 0.0;
    for t in &dataset.transitions {
        let pa = agent.actor.mean_action(t.s)?;
        policy_bonus += agent.bonus_model.bonus_at(t.s, pa)?;
        data_bonus += agent.bonus_model.bonus_at(t.s, t.a)?;
    }
    let n = dataset.transitions.len() as f64;
    Ok(EvalReport {
        mean_return,
        policy_mean_bonus: policy_bonus / n,
        dataset_mean_bonus: data_bonus / n,
        entropy_coef: agent.beta(),
    })
}
