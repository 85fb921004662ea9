//! On-policy exploration agent: clipped-surrogate policy optimization with
//! separate extrinsic/intrinsic advantage streams and a distillation-based
//! novelty bonus on next observations.
//!
//! The agent runs a fixed number of parallel environment copies, collects a
//! rollout with a frozen policy snapshot, scores every next observation with
//! the ensemble bonus, normalizes intrinsic rewards by the running standard
//! deviation of the discounted intrinsic return, computes one advantage
//! estimate per reward stream with its own value head, and ascends the
//! clipped surrogate on the summed advantages. The predictor is distilled on
//! the visited observations between iterations.

use serde::{Deserialize, Serialize};

use crate::bonus::{
    bonus, distill_step, sample_c, BonusConfig, ObsNormalizer, PredictorState, RunningNormalizer,
    TargetEnsemble, TargetMode,
};
use crate::envs::ToyEnv;
use crate::error::{DrndError, Result};
use crate::nn::{
    adam_step, mlp_backward_cached, mlp_forward, mlp_forward_cached, Activation, AdamState,
    MlpParams, MlpSpec,
};
use crate::rng::{derive_seed, Rng64};

/// Which novelty signal drives the intrinsic stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BonusMethod {
    /// Ensemble bonus: alpha-weighted mix of distillation error and the
    /// pseudo-count ratio over N random targets.
    Drnd,
    /// Single random target, distillation error only (alpha = 1, N = 1).
    Rnd,
    /// Constant +-1 targets, ratio term only (alpha = 0).
    Cfn,
    /// No intrinsic stream; plain on-policy baseline.
    None,
}

impl BonusMethod {
    pub fn as_str(&self) -> &'static str {
        match self {
            BonusMethod::Drnd => "drnd",
            BonusMethod::Rnd => "rnd",
            BonusMethod::Cfn => "cfn",
            BonusMethod::None => "none",
        }
    }
}

/// Agent hyperparameters. Defaults are the desk-scale working set:
/// clip 0.1, GAE 0.95, gamma 0.99, 4 surrogate epochs, intrinsic
/// coefficient 1, 16 parallel environment copies.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PpoConfig {
    pub method: BonusMethod,
    pub gamma: f64,
    pub lam_gae: f64,
    pub clip: f64,
    pub surrogate_epochs: usize,
    pub ent_coef: f64,
    /// Weight of the normalized intrinsic reward. Zero disables the
    /// intrinsic stream entirely (bit-identical to the `none` method).
    pub intrinsic_coef: f64,
    pub alpha: f64,
    pub n_targets: usize,
    pub lr_policy: f64,
    pub lr_critic: f64,
    pub lr_distill: f64,
    pub hidden: usize,
    pub n_envs: usize,
    pub rollout_len: usize,
    pub distill_batch: usize,
    /// Normalize bonus-network inputs with running per-dimension statistics.
    pub normalize_obs: bool,
    /// Init gain for the frozen targets relative to the framework default.
    pub target_gain: f64,
    /// Stop collecting once the solve criterion fires (saves wall clock;
    /// the curve keeps everything recorded up to that point).
    pub stop_when_solved: bool,
    /// Hard cap on completed episodes across all environment copies.
    pub max_episodes: usize,
    /// An episode counts as solved support once the trailing mean return
    /// over `solve_window` completed episodes reaches `solve_threshold`.
    pub solve_window: usize,
    pub solve_threshold: f64,
}

impl Default for PpoConfig {
    fn default() -> Self {
        PpoConfig {
            method: BonusMethod::Drnd,
            gamma: 0.99,
            lam_gae: 0.95,
            clip: 0.1,
            surrogate_epochs: 4,
            ent_coef: 0.01,
            intrinsic_coef: 1.0,
            alpha: 0.9,
            n_targets: 10,
            lr_policy: 3e-4,
            lr_critic: 3e-4,
            lr_distill: 3e-4,
            hidden: 64,
            n_envs: 16,
            rollout_len: 64,
            distill_batch: 128,
            normalize_obs: true,
            target_gain: 1.0,
            stop_when_solved: true,
            max_episodes: 2000,
            solve_window: 20,
            solve_threshold: 0.8,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(DrndError::Config(format!(
                "gamma must be in [0,1), got {}",
                self.gamma
            )));
        }
        if !(0.0 < self.clip && self.clip < 1.0) {
            return Err(DrndError::Config(format!(
                "clip must be in (0,1), got {}",
                self.clip
            )));
        }
        if !(0.0..=1.0).contains(&self.lam_gae) {
            return Err(DrndError::Config(format!(
                "lam_gae must be in [0,1], got {}",
                self.lam_gae
            )));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(DrndError::Config(format!(
                "alpha must be in [0,1], got {}",
                self.alpha
            )));
        }
        if self.intrinsic_coef < 0.0 {
            return Err(DrndError::Config(format!(
                "intrinsic_coef must be >= 0, got {}",
                self.intrinsic_coef
            )));
        }
        if self.n_envs == 0 || self.rollout_len == 0 || self.hidden == 0 {
            return Err(DrndError::Config(
                "n_envs, rollout_len and hidden must be positive".into(),
            ));
        }
        if self.method != BonusMethod::None && self.intrinsic_coef > 0.0 {
            match self.method {
                BonusMethod::Rnd if self.n_targets != 1 || self.alpha != 1.0 => {
                    return Err(DrndError::Config(
                        "rnd method requires n_targets = 1 and alpha = 1".into(),
                    ))
                }
                BonusMethod::Cfn if self.alpha != 0.0 => {
                    return Err(DrndError::Config("cfn method requires alpha = 0".into()))
                }
                BonusMethod::Drnd if self.n_targets < 2 => {
                    return Err(DrndError::Config(
                        "drnd method requires n_targets >= 2".into(),
                    ))
                }
                _ => {}
            }
        }
        if self.solve_window == 0 {
            return Err(DrndError::Config("solve_window must be positive".into()));
        }
        Ok(())
    }
}

/// One environment step as stored in the rollout buffer.
#[derive(Debug, Clone)]
pub struct Transition {
    pub s: Vec<f64>,
    pub a: usize,
    pub logp: f64,
    pub r_ext: f64,
    /// Raw (unnormalized) intrinsic bonus of the next observation.
    pub b_int: f64,
    pub s_next: Vec<f64>,
    pub done: bool,
    pub v_ext: f64,
    pub v_int: f64,
}

/// Per-iteration statistics plus the episode-level record.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IterationStats {
    pub iteration: usize,
    pub episodes_completed: usize,
    /// Mean return over episodes completed during this iteration (NaN-free:
    /// zero when no episode finished).
    pub mean_return: f64,
    pub intrinsic_mean: f64,
    pub intrinsic_max: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub distill_loss: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainingCurve {
    pub iterations: Vec<IterationStats>,
    pub episode_returns: Vec<f64>,
    /// Number of completed episodes at the first time the trailing-window
    /// mean return reached the solve threshold, if it ever did.
    pub episodes_to_solve: Option<usize>,
}

impl TrainingCurve {
    pub fn solved(&self) -> bool {
        self.episodes_to_solve.is_some()
    }
}

/// Generalized advantage estimation over one environment's step sequence.
/// `bootstrap` is the value of the state after the final step and is masked
/// when that step terminated. Returns (advantages, returns) with
/// returns = advantages + values.
pub fn gae(
    rewards: &[f64],
    values: &[f64],
    dones: &[bool],
    bootstrap: f64,
    gamma: f64,
    lam: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let t = rewards.len();
    if values.len() != t || dones.len() != t {
        return Err(DrndError::Shape(format!(
            "gae length mismatch: rewards {t}, values {}, dones {}",
            values.len(),
            dones.len()
        )));
    }
    let mut adv = vec![0.0; t];
    let mut acc = 0.0;
    for i in (0..t).rev() {
        let next_v = if i == t - 1 { bootstrap } else { values[i + 1] };
        let mask = if dones[i] { 0.0 } else { 1.0 };
        let delta = rewards[i] + gamma * mask * next_v - values[i];
        acc = delta + gamma * lam * mask * acc;
        adv[i] = acc;
    }
    let ret: Vec<f64> = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    Ok((adv, ret))
}

/// Categorical policy head over raw observations.
#[derive(Debug, Clone)]
pub struct PolicyNet {
    pub params: MlpParams,
    pub adam: AdamState,
}

impl PolicyNet {
    pub fn new(obs_dim: usize, hidden: usize, n_actions: usize, lr: f64, seed: u64) -> Result<Self> {
        let spec = MlpSpec::new(
            vec![obs_dim, hidden, hidden, n_actions],
            Activation::Relu,
            seed,
        );
        let params = crate::nn::mlp_init(&spec)?;
        let adam = AdamState::new(&params, lr);
        Ok(PolicyNet { params, adam })
    }

    pub fn action_probs(&self, obs: &[f64]) -> Result<Vec<f64>> {
        let logits = mlp_forward(&self.params, obs)?;
        Ok(softmax(&logits))
    }
}

/// Value network with one output per reward stream (extrinsic, intrinsic)
/// on a shared trunk.
#[derive(Debug, Clone)]
pub struct CriticNet {
    pub params: MlpParams,
    pub adam: AdamState,
}

impl CriticNet {
    pub fn new(obs_dim: usize, hidden: usize, lr: f64, seed: u64) -> Result<Self> {
        let spec = MlpSpec::new(vec![obs_dim, hidden, hidden, 2], Activation::Relu, seed);
        let params = crate::nn::mlp_init(&spec)?;
        let adam = AdamState::new(&params, lr);
        Ok(CriticNet { params, adam })
    }

    /// (extrinsic value, intrinsic value).
    pub fn values(&self, obs: &[f64]) -> Result<(f64, f64)> {
        let out = mlp_forward(&self.params, obs)?;
        Ok((out[0], out[1]))
    }
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - m).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.iter().map(|e| e / sum).collect()
}

/// Intrinsic-bonus machinery; absent when the intrinsic stream is disabled.
struct IntrinsicModel {
    pred: PredictorState,
    ens: TargetEnsemble,
    cfg: BonusConfig,
    obs_norm: Option<ObsNormalizer>,
    rew_norm: RunningNormalizer,
    rng: Rng64,
}

impl IntrinsicModel {
    fn bonus_input(&self, obs: &[f64]) -> Vec<f64> {
        match &self.obs_norm {
            Some(n) => n.normalize(obs),
            None => obs.to_vec(),
        }
    }
}

/// Full agent state across iterations.
pub struct OnlineAgent {
    pub cfg: PpoConfig,
    policy: PolicyNet,
    critic: CriticNet,
    intrinsic: Option<IntrinsicModel>,
    envs: Vec<ToyEnv>,
    obs: Vec<Vec<f64>>,
    episode_return: Vec<f64>,
    action_rng: Rng64,
}

impl OnlineAgent {
    pub fn new(cfg: &PpoConfig, env: &ToyEnv, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let obs_dim = env.obs_dim();
        let n_actions = env.n_actions();
        let policy = PolicyNet::new(obs_dim, cfg.hidden, n_actions, cfg.lr_policy, derive_seed(seed, 1))?;
        let critic = CriticNet::new(obs_dim, cfg.hidden, cfg.lr_critic, derive_seed(seed, 2))?;
        let use_intrinsic = cfg.method != BonusMethod::None && cfg.intrinsic_coef > 0.0;
        let intrinsic = if use_intrinsic {
            let (mode, n) = match cfg.method {
                BonusMethod::Cfn => (TargetMode::Rademacher, 2),
                _ => (TargetMode::RandomMlp, cfg.n_targets),
            };
            let targ_spec = MlpSpec::with_gain(
                vec![obs_dim, cfg.hidden, cfg.hidden],
                Activation::Relu,
                derive_seed(seed, 3),
                cfg.target_gain,
            );
            let ens = TargetEnsemble::init(&targ_spec, n, mode, derive_seed(seed, 4))?;
            let pred_spec = MlpSpec::new(
                vec![obs_dim, cfg.hidden, cfg.hidden, cfg.hidden],
                Activation::Relu,
                derive_seed(seed, 5),
            );
            let pred = PredictorState::new(&pred_spec, cfg.lr_distill)?;
            let bcfg = BonusConfig {
                alpha: cfg.alpha,
                ..Default::default()
            };
            Some(IntrinsicModel {
                pred,
                ens,
                cfg: bcfg,
                obs_norm: cfg.normalize_obs.then(|| ObsNormalizer::new(obs_dim)),
                rew_norm: RunningNormalizer::new(cfg.gamma),
                rng: Rng64::derive(seed, 6),
            })
        } else {
            None
        };
        let mut envs = Vec::with_capacity(cfg.n_envs);
        let mut obs = Vec::with_capacity(cfg.n_envs);
        for _ in 0..cfg.n_envs {
            let mut e = env.clone();
            obs.push(e.reset());
            envs.push(e);
        }
        Ok(OnlineAgent {
            cfg: cfg.clone(),
            policy,
            critic,
            intrinsic,
            envs,
            obs,
            episode_return: vec![0.0; cfg.n_envs],
            action_rng: Rng64::derive(seed, 7),
        })
    }

    /// Collect one rollout of `rollout_len` steps per environment copy.
    /// Returns the per-env transition sequences and the returns of episodes
    /// completed during collection, in completion order.
    fn collect(&mut self) -> Result<(Vec<Vec<Transition>>, Vec<f64>)> {
        let mut buffers: Vec<Vec<Transition>> = vec![Vec::new(); self.cfg.n_envs];
        let mut finished = Vec::new();
        for _ in 0..self.cfg.rollout_len {
            for e in 0..self.cfg.n_envs {
                let s = self.obs[e].clone();
                let probs = self.policy.action_probs(&s)?;
                let a = sample_categorical(&probs, &mut self.action_rng);
                let logp = probs[a].max(1e-300).ln();
                let (v_ext, v_int) = self.critic.values(&s)?;
                let (s_next, r_ext, done) = self.envs[e].step(a)?;
                self.episode_return[e] += r_ext;
                if let Some(im) = self.intrinsic.as_mut() {
                    if let Some(n) = im.obs_norm.as_mut() {
                        n.update(&s_next);
                    }
                }
                let b_int = match self.intrinsic.as_ref() {
                    Some(im) => {
                        let x = im.bonus_input(&s_next);
                        bonus(&im.pred, &im.ens, &x, &im.cfg)?.2
                    }
                    None => 0.0,
                };
                buffers[e].push(Transition {
                    s,
                    a,
                    logp,
                    r_ext,
                    b_int,
                    s_next: s_next.clone(),
                    done,
                    v_ext,
                    v_int,
                });
                if done {
                    finished.push(self.episode_return[e]);
                    self.episode_return[e] = 0.0;
                    self.obs[e] = self.envs[e].reset();
                } else {
                    self.obs[e] = s_next;
                }
            }
        }
        Ok((buffers, finished))
    }

    /// One full iteration: collect, estimate advantages, update policy and
    /// critic, distill the predictor. Returns iteration stats (without the
    /// iteration index and episode counter, which the caller owns).
    fn iterate(&mut self) -> Result<(IterationStats, Vec<f64>)> {
        let (buffers, finished) = self.collect()?;
        let use_intrinsic = self.intrinsic.is_some();

        // Normalize intrinsic rewards env-by-env in step order so the
        // discounted-return accumulator sees coherent sequences.
        let mut r_int: Vec<Vec<f64>> = Vec::with_capacity(buffers.len());
        let mut intrinsic_mean = 0.0f64;
        let mut intrinsic_max = 0.0f64;
        if let Some(im) = self.intrinsic.as_mut() {
            let mut count = 0usize;
            for buf in &buffers {
                let raw: Vec<f64> = buf.iter().map(|t| t.b_int).collect();
                for &b in &raw {
                    intrinsic_mean += b;
                    intrinsic_max = intrinsic_max.max(b);
                    count += 1;
                }
                let normed = im.rew_norm.normalize(&raw);
                r_int.push(
                    normed
                        .iter()
                        .map(|r| self.cfg.intrinsic_coef * r)
                        .collect(),
                );
            }
            if count > 0 {
                intrinsic_mean /= count as f64;
            }
        } else {
            for buf in &buffers {
                r_int.push(vec![0.0; buf.len()]);
            }
        }

        // Per-env dual-stream GAE against each env's own bootstrap value.
        let mut flat: Vec<&Transition> = Vec::new();
        let mut adv = Vec::new();
        let mut ret_ext = Vec::new();
        let mut ret_int = Vec::new();
        for (e, buf) in buffers.iter().enumerate() {
            let rewards_e: Vec<f64> = buf.iter().map(|t| t.r_ext).collect();
            let values_e: Vec<f64> = buf.iter().map(|t| t.v_ext).collect();
            let values_i: Vec<f64> = buf.iter().map(|t| t.v_int).collect();
            let dones: Vec<bool> = buf.iter().map(|t| t.done).collect();
            let (bv_e, bv_i) = self.critic.values(&self.obs[e])?;
            let (a_e, r_e) = gae(
                &rewards_e,
                &values_e,
                &dones,
                bv_e,
                self.cfg.gamma,
                self.cfg.lam_gae,
            )?;
            let (a_i, r_i) = gae(
                &r_int[e],
                &values_i,
                &dones,
                bv_i,
                self.cfg.gamma,
                self.cfg.lam_gae,
            )?;
            for (k, t) in buf.iter().enumerate() {
                flat.push(t);
                adv.push(if use_intrinsic { a_e[k] + a_i[k] } else { a_e[k] });
                ret_ext.push(r_e[k]);
                ret_int.push(r_i[k]);
            }
        }

        // Batch-normalize the combined advantage.
        let n = adv.len() as f64;
        let mean = adv.iter().sum::<f64>() / n;
        let var = adv.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / n;
        let std = var.sqrt().max(1e-8);
        for a in adv.iter_mut() {
            *a = (*a - mean) / std;
        }

        let policy_loss = self.update_policy(&flat, &adv)?;
        let value_loss = self.update_critic(&flat, &ret_ext, &ret_int, use_intrinsic)?;
        let distill_loss = self.distill(&flat)?;

        let mean_return = if finished.is_empty() {
            0.0
        } else {
            finished.iter().sum::<f64>() / finished.len() as f64
        };
        Ok((
            IterationStats {
                iteration: 0,
                episodes_completed: 0,
                mean_return,
                intrinsic_mean,
                intrinsic_max,
                policy_loss,
                value_loss,
                distill_loss,
            },
            finished,
        ))
    }

    /// Clipped-surrogate ascent with entropy regularization; loss returned
    /// is the negated objective of the final epoch.
    fn update_policy(&mut self, batch: &[&Transition], adv: &[f64]) -> Result<f64> {
        let n = batch.len() as f64;
        let mut last_loss = 0.0;
        for _ in 0..self.cfg.surrogate_epochs {
            let mut grads = self.policy.params.zeros_like();
            let mut objective = 0.0;
            for (t, &a_hat) in batch.iter().zip(adv) {
                let cache = mlp_forward_cached(&self.policy.params, &t.s)?;
                let probs = softmax(cache.output());
                let logp = probs[t.a].max(1e-300).ln();
                let rho = (logp - t.logp).exp();
                let unclipped = rho * a_hat;
                let clipped = rho.clamp(1.0 - self.cfg.clip, 1.0 + self.cfg.clip) * a_hat;
                let entropy: f64 = -probs
                    .iter()
                    .map(|&p| if p > 0.0 { p * p.ln() } else { 0.0 })
                    .sum::<f64>();
                objective += unclipped.min(clipped) + self.cfg.ent_coef * entropy;
                // d objective / d logits, accumulated as the gradient of the
                // (negated) loss: surrogate term only flows when the
                // unclipped branch is active.
                let mut up = vec![0.0; probs.len()];
                if unclipped <= clipped {
                    for (k, &p) in probs.iter().enumerate() {
                        let ind = if k == t.a { 1.0 } else { 0.0 };
                        up[k] += rho * a_hat * (ind - p);
                    }
                }
                for (k, &p) in probs.iter().enumerate() {
                    let lp = if p > 0.0 { p.ln() } else { 0.0 };
                    up[k] += self.cfg.ent_coef * (-p * (lp + entropy));
                }
                // Ascent: accumulate the negated gradient and minimize.
                for u in up.iter_mut() {
                    *u = -*u / n;
                }
                let (g, _) = mlp_backward_cached(&self.policy.params, &cache, &up)?;
                grads.add_assign(&g);
            }
            last_loss = -objective / n;
            if !last_loss.is_finite() {
                return Err(DrndError::NonFinite("policy surrogate loss".into()));
            }
            adam_step(&mut self.policy.adam, &mut self.policy.params, &grads)?;
        }
        Ok(last_loss)
    }

    /// Regress both value heads to their stream returns. The intrinsic head
    /// gets zero gradient when the intrinsic stream is disabled so the
    /// shared trunk evolves exactly as in a build without it.
    fn update_critic(
        &mut self,
        batch: &[&Transition],
        ret_ext: &[f64],
        ret_int: &[f64],
        use_intrinsic: bool,
    ) -> Result<f64> {
        let n = batch.len() as f64;
        let mut last_loss = 0.0;
        for _ in 0..self.cfg.surrogate_epochs {
            let mut grads = self.critic.params.zeros_like();
            let mut loss = 0.0;
            for (i, t) in batch.iter().enumerate() {
                let cache = mlp_forward_cached(&self.critic.params, &t.s)?;
                let out = cache.output();
                let e_err = out[0] - ret_ext[i];
                loss += e_err * e_err;
                let mut up = vec![2.0 * e_err / n, 0.0];
                if use_intrinsic {
                    let i_err = out[1] - ret_int[i];
                    loss += i_err * i_err;
                    up[1] = 2.0 * i_err / n;
                }
                let (g, _) = mlp_backward_cached(&self.critic.params, &cache, &up)?;
                grads.add_assign(&g);
            }
            last_loss = loss / n;
            if !last_loss.is_finite() {
                return Err(DrndError::NonFinite("value loss".into()));
            }
            adam_step(&mut self.critic.adam, &mut self.critic.params, &grads)?;
        }
        Ok(last_loss)
    }

    /// One shuffled pass of predictor distillation over the rollout's next
    /// observations with freshly drawn target samples.
    fn distill(&mut self, batch: &[&Transition]) -> Result<f64> {
        let Some(im) = self.intrinsic.as_mut() else {
            return Ok(0.0);
        };
        let mut order: Vec<usize> = (0..batch.len()).collect();
        im.rng.shuffle(&mut order);
        let mut last = 0.0;
        for chunk in order.chunks(self.cfg.distill_batch.max(1)) {
            let mut pairs = Vec::with_capacity(chunk.len());
            for &i in chunk {
                let x = im.bonus_input(&batch[i].s_next);
                let c = sample_c(&im.ens, &x, &mut im.rng)?;
                pairs.push((x, c));
            }
            last = distill_step(&mut im.pred, &pairs)?;
        }
        Ok(last)
    }
}

/// Run the full training loop: up to `total_iterations` iterations or until
/// the episode budget or solve criterion is hit.
pub fn rollout_train(
    cfg: &PpoConfig,
    env: &ToyEnv,
    total_iterations: usize,
    seed: u64,
) -> Result<TrainingCurve> {
    let mut agent = OnlineAgent::new(cfg, env, seed)?;
    let mut curve = TrainingCurve {
        iterations: Vec::new(),
        episode_returns: Vec::new(),
        episodes_to_solve: None,
    };
    for it in 0..total_iterations {
        let (mut stats, finished) = agent.iterate()?;
        for r in finished {
            curve.episode_returns.push(r);
            if curve.episodes_to_solve.is_none() {
                let w = cfg.solve_window;
                let n = curve.episode_returns.len();
                if n >= w {
                    let tail = &curve.episode_returns[n - w..];
                    if tail.iter().sum::<f64>() / w as f64 >= cfg.solve_threshold {
                        curve.episodes_to_solve = Some(n);
                    }
                }
            }
        }
        stats.iteration = it;
        stats.episodes_completed = curve.episode_returns.len();
        curve.iterations.push(stats);
        if cfg.stop_when_solved && curve.episodes_to_solve.is_some() {
            break;
        }
        if curve.episode_returns.len() >= cfg.max_episodes {
            break;
        }
    }
    Ok(curve)
}

fn sample_categorical(probs: &[f64], rng: &mut Rng64) -> usize {
    let u = rng.uniform();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::ToyEnvKind;

    #[test]
    fn gae_single_terminal_step() {
        let (a, r) = gae(&[1.0], &[0.0], &[true], 0.7, 0.99, 0.95).unwrap();
        assert_eq!(a, vec![1.0]);
        assert_eq!(r, vec![1.0]);
    }

    #[test]
    fn gae_gamma_zero_collapses() {
        let rewards = [0.3, -0.2, 0.9];
        let values = [0.1, 0.4, -0.5];
        let dones = [false, false, false];
        let (a, _) = gae(&rewards, &values, &dones, 2.0, 0.0, 0.95).unwrap();
        for i in 0..3 {
            assert!((a[i] - (rewards[i] - values[i])).abs() < 1e-12);
        }
    }

    #[test]
    fn gae_two_step_hand_unroll() {
        // r=[0,1], v=[0.5,0.5], terminal after step 2, gamma=0.99, lam=0.95.
        let (a, r) = gae(&[0.0, 1.0], &[0.5, 0.5], &[false, true], 0.0, 0.99, 0.95).unwrap();
        let delta1 = 1.0 - 0.5;
        let delta0 = 0.0 + 0.99 * 0.5 - 0.5;
        let a1 = delta1;
        let a0 = delta0 + 0.99 * 0.95 * a1;
        assert!((a[1] - a1).abs() < 1e-12);
        assert!((a[0] - a0).abs() < 1e-12);
        assert!((r[0] - (a0 + 0.5)).abs() < 1e-12);
    }

    #[test]
    fn gae_length_mismatch_errors() {
        assert!(gae(&[1.0], &[0.0, 0.0], &[true], 0.0, 0.99, 0.95).is_err());
    }

    #[test]
    fn config_validation() {
        let mut cfg = PpoConfig::default();
        assert!(cfg.validate().is_ok());
        cfg.clip = 1.5;
        assert!(cfg.validate().is_err());
        let cfg = PpoConfig {
            method: BonusMethod::Rnd,
            n_targets: 3,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn zero_coef_matches_none_bit_exact() {
        let env = ToyEnv::new(ToyEnvKind::DeepSea, 4).unwrap();
        let a = PpoConfig {
            method: BonusMethod::Drnd,
            intrinsic_coef: 0.0,
            n_envs: 4,
            rollout_len: 16,
            ..Default::default()
        };
        let b = PpoConfig {
            method: BonusMethod::None,
            n_envs: 4,
            rollout_len: 16,
            ..Default::default()
        };
        let ca = rollout_train(&a, &env, 3, 9).unwrap();
        let cb = rollout_train(&b, &env, 3, 9).unwrap();
        assert_eq!(
            serde_json::to_string(&ca.iterations).unwrap(),
            serde_json::to_string(&cb.iterations).unwrap()
        );
        assert_eq!(ca.episode_returns, cb.episode_returns);
    }

    #[test]
    fn determinism_same_seed() {
        let env = ToyEnv::new(ToyEnvKind::DeepSea, 4).unwrap();
        let cfg = PpoConfig {
            n_envs: 4,
            ..Default::default()
        };
        let c1 = rollout_train(&cfg, &env, 2, 5).unwrap();
        let c2 = rollout_train(&cfg, &env, 2, 5).unwrap();
        assert_eq!(
            serde_json::to_string(&c1).unwrap(),
            serde_json::to_string(&c2).unwrap()
        );
    }

    #[test]
    fn rollout_records_episodes() {
        let env = ToyEnv::new(ToyEnvKind::DeepSea, 3).unwrap();
        let cfg = PpoConfig {
            n_envs: 2,
            rollout_len: 12,
            ..Default::default()
        };
        let c = rollout_train(&cfg, &env, 2, 1).unwrap();
        // 2 envs x 12 steps x 2 iterations / 3 steps per episode = 16 episodes.
        assert_eq!(c.episode_returns.len(), 16);
        assert_eq!(c.iterations.len(), 2);
        assert!(c.iterations.iter().all(|s| s.policy_loss.is_finite()));
    }

    #[test]
    fn rnd_arm_runs_and_scores_bonuses() {
        let env = ToyEnv::new(ToyEnvKind::SparseChain, 3).unwrap();
        let cfg = PpoConfig {
            method: BonusMethod::Rnd,
            n_targets: 1,
            alpha: 1.0,
            n_envs: 2,
            rollout_len: 9,
            ..Default::default()
        };
        let c = rollout_train(&cfg, &env, 2, 3).unwrap();
        assert!(c.iterations.iter().any(|s| s.intrinsic_max > 0.0));
    }

    #[test]
    fn cfn_arm_runs() {
        let env = ToyEnv::new(ToyEnvKind::SparseChain, 3).unwrap();
        let cfg = PpoConfig {
            method: BonusMethod::Cfn,
            alpha: 0.0,
            n_envs: 2,
            rollout_len: 9,
            ..Default::default()
        };
        let c = rollout_train(&cfg, &env, 2, 3).unwrap();
        assert!(c.iterations.iter().all(|s| s.distill_loss.is_finite()));
    }
}
