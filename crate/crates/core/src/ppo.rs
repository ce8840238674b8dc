//! Clipped-surrogate PPO baseline with a tanh-squashed Gaussian action head.
//!
//! Shares the state encoder, action codec, reward signal and evaluation
//! protocol with the diffusion policy.

use ndarray::{Array1, Array2, ArrayView2};
use rand::seq::SliceRandom;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::curves::CurveRow;
use crate::eval::{evaluate_policy, ContractPolicy, EvalSet, EvalStats};
use crate::market::{
    action_to_menu, encode_state, reward_signal, sample_state, ContractMenu, EconParams,
    MarketError, MarketState, SamplerConfig,
};
use crate::nn::checkpoint::{Checkpoint, CheckpointError};
use crate::nn::{Activation, Adam, AdamConfig, DenseNet, Gradients, NnError, VecAdam};
use crate::persist;

pub const ALGO_TAG: &str = "ppo";
pub const LOG_STD_MIN: f64 = -5.0;
pub const LOG_STD_MAX: f64 = 2.0;

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_7;

#[derive(Debug, Error)]
pub enum PpoError {
    #[error("invalid ppo config `{field}`: {reason}")]
    Config { field: &'static str, reason: String },
    #[error("rollout is empty")]
    EmptyRollout,
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Market(#[from] MarketError),
}

pub type Result<T> = std::result::Result<T, PpoError>;

/// Actor mean network, state-independent log-std, and a value network.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPolicy {
    pub actor: DenseNet,
    pub value: DenseNet,
    log_std: Vec<f64>,
}

impl GaussianPolicy {
    pub fn new<R: Rng + ?Sized>(
        state_dim: usize,
        action_dim: usize,
        hidden: &[usize],
        init_log_std: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let sizes = |out: usize| {
            let mut v = vec![state_dim];
            v.extend_from_slice(hidden);
            v.push(out);
            v
        };
        let actor = DenseNet::new(&sizes(action_dim), Activation::Tanh, Activation::Identity, rng)?;
        let value = DenseNet::new(&sizes(1), Activation::Tanh, Activation::Identity, rng)?;
        Self::from_parts(actor, value, vec![init_log_std; action_dim])
    }

    pub fn from_parts(actor: DenseNet, value: DenseNet, log_std: Vec<f64>) -> Result<Self> {
        if actor.input_dim() != value.input_dim() || value.output_dim() != 1 {
            return Err(PpoError::Config { field: "value", reason: "network shape mismatch".into() });
        }
        if log_std.len() != actor.output_dim() || log_std.iter().any(|v| v.is_nan()) {
            return Err(PpoError::Config { field: "log_std", reason: "one finite entry per action".into() });
        }
        let mut p = Self { actor, value, log_std: Vec::new() };
        p.set_log_std(&log_std);
        Ok(p)
    }

    pub fn log_std(&self) -> &[f64] {
        &self.log_std
    }

    /// Stores `v` clamped to `[LOG_STD_MIN, LOG_STD_MAX]`.
    pub fn set_log_std(&mut self, v: &[f64]) {
        self.log_std = v.iter().map(|x| x.clamp(LOG_STD_MIN, LOG_STD_MAX)).collect();
    }

    pub fn state_dim(&self) -> usize {
        self.actor.input_dim()
    }

    pub fn action_dim(&self) -> usize {
        self.actor.output_dim()
    }

    pub fn deterministic_action(&self, state_enc: &[f64]) -> Result<Vec<f64>> {
        Ok(self.actor.forward(state_enc)?.into_iter().map(f64::tanh).collect())
    }

    pub fn value_of(&self, state_enc: &[f64]) -> Result<f64> {
        Ok(self.value.forward(state_enc)?[0])
    }
}

/// `sum_i log(1 - tanh(u_i)^2)`, evaluated without cancellation.
pub fn squash_correction(u: &[f64]) -> f64 {
    u.iter()
        .map(|&x| 2.0 * (std::f64::consts::LN_2 - x - softplus(-2.0 * x)))
        .sum()
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Diagonal Gaussian log density of `u`.
pub fn gaussian_log_density(u: &[f64], mean: &[f64], log_std: &[f64]) -> f64 {
    u.iter()
        .zip(mean)
        .zip(log_std)
        .map(|((&u, &m), &ls)| {
            let z = (u - m) * (-ls).exp();
            -0.5 * z * z - ls - HALF_LN_2PI
        })
        .sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActSample {
    /// `tanh(u)`, in `[-1, 1]`.
    pub action: Vec<f64>,
    pub pre_squash: Vec<f64>,
    pub log_prob: f64,
    pub value: f64,
}

/// Samples `u ~ N(mean, std)` and returns `tanh(u)` with the log density
/// of the squashed action.
pub fn act<R: Rng + ?Sized>(policy: &GaussianPolicy, state_enc: &[f64], rng: &mut R) -> Result<ActSample> {
    let mean = policy.actor.forward(state_enc)?;
    let value = policy.value_of(state_enc)?;
    let pre_squash: Vec<f64> = mean
        .iter()
        .zip(&policy.log_std)
        .map(|(&m, &ls)| {
            let z: f64 = StandardNormal.sample(rng);
            m + ls.exp() * z
        })
        .collect();
    let log_prob = gaussian_log_density(&pre_squash, &mean, &policy.log_std) - squash_correction(&pre_squash);
    let action = pre_squash.iter().map(|u| u.tanh().clamp(-1.0, 1.0)).collect();
    Ok(ActSample { action, pre_squash, log_prob, value })
}

/// Generalized advantage estimates and lambda-returns for one trajectory,
/// bootstrapped with `bootstrap` (the value after the last step).
pub fn compute_gae(
    rewards: &[f64],
    values: &[f64],
    bootstrap: f64,
    gamma: f64,
    lambda: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if rewards.is_empty() {
        return Err(PpoError::EmptyRollout);
    }
    assert_eq!(rewards.len(), values.len(), "one value per reward");
    let n = rewards.len();
    let mut adv = vec![0.0; n];
    let mut ret = vec![0.0; n];
    let (mut next_v, mut next_adv, mut next_ret) = (bootstrap, 0.0, bootstrap);
    for t in (0..n).rev() {
        let delta = rewards[t] + gamma * next_v - values[t];
        adv[t] = delta + gamma * lambda * next_adv;
        ret[t] = rewards[t] + gamma * ((1.0 - lambda) * next_v + lambda * next_ret);
        next_v = values[t];
        next_adv = adv[t];
        next_ret = ret[t];
    }
    Ok((adv, ret))
}

/// Shifts and scales to zero mean and unit variance. Constant inputs are
/// only centered.
pub fn normalize(v: &mut [f64]) {
    let n = v.len().max(1) as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    let std = var.sqrt();
    for x in v.iter_mut() {
        *x -= mean;
        if std > 1e-12 {
            *x /= std;
        }
    }
}

/// One on-policy rollout with its advantages.
#[derive(Debug, Clone, PartialEq)]
pub struct RolloutBatch {
    pub states: Array2<f64>,
    pub pre_squash: Array2<f64>,
    pub actions: Array2<f64>,
    pub log_probs: Vec<f64>,
    pub rewards: Vec<f64>,
    pub values: Vec<f64>,
    /// Normalized per batch.
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
}

impl RolloutBatch {
    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }
}

/// Accumulates steps until the rollout is cut.
#[derive(Debug, Clone, Default)]
pub struct RolloutBuilder {
    states: Vec<f64>,
    pre_squash: Vec<f64>,
    actions: Vec<f64>,
    log_probs: Vec<f64>,
    rewards: Vec<f64>,
    values: Vec<f64>,
}

impl RolloutBuilder {
    pub fn push(&mut self, state_enc: &[f64], sample: &ActSample, reward: f64) {
        self.states.extend_from_slice(state_enc);
        self.pre_squash.extend_from_slice(&sample.pre_squash);
        self.actions.extend_from_slice(&sample.action);
        self.log_probs.push(sample.log_prob);
        self.rewards.push(reward);
        self.values.push(sample.value);
    }

    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    /// Computes advantages and empties the builder.
    pub fn finish(&mut self, bootstrap: f64, gamma: f64, lambda: f64) -> Result<RolloutBatch> {
        let b = std::mem::take(self);
        let n = b.rewards.len();
        let (mut advantages, returns) = compute_gae(&b.rewards, &b.values, bootstrap, gamma, lambda)?;
        normalize(&mut advantages);
        let rows = |v: Vec<f64>| {
            let w = v.len() / n;
            Array2::from_shape_vec((n, w), v).expect("rectangular rollout")
        };
        Ok(RolloutBatch {
            states: rows(b.states),
            pre_squash: rows(b.pre_squash),
            actions: rows(b.actions),
            log_probs: b.log_probs,
            rewards: b.rewards,
            values: b.values,
            advantages,
            returns,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PpoConfig {
    /// Environment interactions.
    pub steps: usize,
    pub rollout_len: usize,
    pub epochs: usize,
    pub minibatch: usize,
    pub clip_eps: f64,
    pub gamma: f64,
    pub gae_lambda: f64,
    pub lr: f64,
    pub entropy_coef: f64,
    pub value_coef: f64,
    pub hidden: Vec<usize>,
    pub init_log_std: f64,
    pub reward_scale: f64,
    pub max_grad_norm: Option<f64>,
    pub eval_every: usize,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            steps: 50_000,
            rollout_len: 2048,
            epochs: 10,
            minibatch: 256,
            clip_eps: 0.2,
            gamma: 0.95,
            gae_lambda: 0.95,
            lr: 3e-4,
            entropy_coef: 0.01,
            value_coef: 0.5,
            hidden: vec![256, 256],
            init_log_std: 0.0,
            reward_scale: 1e-5,
            max_grad_norm: Some(0.5),
            eval_every: 1000,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<()> {
        let err = |field: &'static str, reason: &str| Err(PpoError::Config { field, reason: reason.into() });
        if self.steps == 0 {
            return err("steps", "must be positive");
        }
        if self.rollout_len == 0 {
            return err("rollout_len", "must be positive");
        }
        if self.epochs == 0 {
            return err("epochs", "must be positive");
        }
        if self.minibatch == 0 {
            return err("minibatch", "must be positive");
        }
        if !(self.clip_eps >= 0.0 && self.clip_eps < 1.0) {
            return err("clip_eps", "must lie in [0, 1)");
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return err("gamma", "must lie in [0, 1)");
        }
        if !(0.0..=1.0).contains(&self.gae_lambda) {
            return err("gae_lambda", "must lie in [0, 1]");
        }
        if !(self.lr >= 0.0) {
            return err("lr", "must be non-negative");
        }
        if !(self.entropy_coef >= 0.0 && self.value_coef >= 0.0) {
            return err("entropy_coef", "coefficients must be non-negative");
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return err("hidden", "needs at least one non-empty layer");
        }
        if !(LOG_STD_MIN..=LOG_STD_MAX).contains(&self.init_log_std) {
            return err("init_log_std", "must lie in [-5, 2]");
        }
        if !(self.reward_scale > 0.0) {
            return err("reward_scale", "must be positive");
        }
        if self.max_grad_norm.is_some_and(|g| !(g > 0.0)) {
            return err("max_grad_norm", "must be positive");
        }
        if self.eval_every == 0 {
            return err("eval_every", "must be positive");
        }
        Ok(())
    }
}

/// Optimizer state for every trained parameter of a [`GaussianPolicy`].
#[derive(Debug, Clone, PartialEq)]
pub struct PpoOptimizer {
    pub actor: Adam,
    pub log_std: VecAdam,
    pub value: Adam,
}

impl PpoOptimizer {
    pub fn new(policy: &GaussianPolicy, lr: f64) -> Self {
        let cfg = AdamConfig::with_lr(lr);
        Self {
            actor: Adam::new(&policy.actor, cfg),
            log_std: VecAdam::new(policy.action_dim(), cfg),
            value: Adam::new(&policy.value, cfg),
        }
    }
}

/// Clipped surrogate (with entropy bonus) on one minibatch.
#[derive(Debug, Clone)]
pub struct PolicyLoss {
    pub loss: f64,
    pub actor: Gradients,
    pub log_std: Vec<f64>,
    pub ratios: Vec<f64>,
    pub entropy: f64,
    /// Mean of `old_log_prob - new_log_prob`.
    pub approx_kl: f64,
    pub clip_fraction: f64,
}

/// `-mean(min(r A, clip(r, 1-eps, 1+eps) A)) - entropy_coef * H` and its
/// gradients. The unclipped branch carries gradient only when it is
/// strictly smaller or the ratio is strictly inside the clip band, so a tie
/// (e.g. `eps = 0` at `r = 1`) passes none.
pub fn policy_loss_and_grad(
    policy: &GaussianPolicy,
    states: ArrayView2<f64>,
    pre_squash: ArrayView2<f64>,
    old_log_probs: &[f64],
    advantages: &[f64],
    clip_eps: f64,
    entropy_coef: f64,
) -> Result<PolicyLoss> {
    let b = states.nrows();
    let ad = policy.action_dim();
    let cache = policy.actor.forward_cached(states)?;
    let mean = &cache.output;
    let inv_var: Vec<f64> = policy.log_std.iter().map(|ls| (-2.0 * ls).exp()).collect();
    let mut up = Array2::zeros((b, ad));
    let mut g_ls = vec![0.0; ad];
    let (mut surr_sum, mut kl, mut clipped) = (0.0, 0.0, 0usize);
    let mut ratios = Vec::with_capacity(b);
    for i in 0..b {
        let u = pre_squash.row(i);
        let u = u.as_slice().expect("contiguous rows");
        let m = mean.row(i);
        let new_lp = gaussian_log_density(u, m.as_slice().expect("contiguous rows"), &policy.log_std)
            - squash_correction(u);
        let ratio = (new_lp - old_log_probs[i]).exp();
        kl += old_log_probs[i] - new_lp;
        let a = advantages[i];
        let clipped_ratio = ratio.clamp(1.0 - clip_eps, 1.0 + clip_eps);
        let (unclipped_obj, clipped_obj) = (ratio * a, clipped_ratio * a);
        surr_sum += unclipped_obj.min(clipped_obj);
        let inside = ratio > 1.0 - clip_eps && ratio < 1.0 + clip_eps;
        if !inside {
            clipped += 1;
        }
        if inside || unclipped_obj < clipped_obj {
            // d loss / d log_prob for this row.
            let w = -a * ratio / b as f64;
            for j in 0..ad {
                let d = u[j] - m[j];
                up[[i, j]] = w * d * inv_var[j];
                g_ls[j] += w * (d * d * inv_var[j] - 1.0);
            }
        }
        ratios.push(ratio);
    }
    let entropy: f64 = policy.log_std.iter().map(|ls| ls + 0.5 + HALF_LN_2PI).sum();
    for g in &mut g_ls {
        *g -= entropy_coef;
    }
    let (actor, _) = policy.actor.backward(&cache, up.view())?;
    Ok(PolicyLoss {
        loss: -surr_sum / b as f64 - entropy_coef * entropy,
        actor,
        log_std: g_ls,
        ratios,
        entropy,
        approx_kl: kl / b as f64,
        clip_fraction: clipped as f64 / b as f64,
    })
}

/// `value_coef * mean((V - returns)^2)` and its gradient.
pub fn value_loss_and_grad(
    policy: &GaussianPolicy,
    states: ArrayView2<f64>,
    returns: &[f64],
    value_coef: f64,
) -> Result<(f64, Gradients)> {
    let b = states.nrows() as f64;
    let cache = policy.value.forward_cached(states)?;
    let v = cache.output.column(0);
    let resid = &v - &Array1::from(returns.to_vec());
    let loss = value_coef * resid.dot(&resid) / b;
    let up = (resid * (2.0 * value_coef / b)).insert_axis(ndarray::Axis(1));
    let (g, _) = policy.value.backward(&cache, up.view())?;
    Ok((loss, g))
}

#[derive(Debug, Clone, PartialEq)]
pub struct UpdateDiagnostics {
    /// Largest `|ratio - 1|` on the first minibatch of the first epoch.
    pub first_ratio_deviation: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub approx_kl: f64,
    pub clip_fraction: f64,
}

/// Shuffled-minibatch epochs of the clipped surrogate and value regression.
pub fn ppo_update<R: Rng + ?Sized>(
    policy: &mut GaussianPolicy,
    opt: &mut PpoOptimizer,
    batch: &RolloutBatch,
    cfg: &PpoConfig,
    rng: &mut R,
) -> Result<UpdateDiagnostics> {
    if batch.is_empty() {
        return Err(PpoError::EmptyRollout);
    }
    let n = batch.len();
    let mut order: Vec<usize> = (0..n).collect();
    let mut diag = UpdateDiagnostics {
        first_ratio_deviation: f64::NAN,
        policy_loss: 0.0,
        value_loss: 0.0,
        entropy: 0.0,
        approx_kl: 0.0,
        clip_fraction: 0.0,
    };
    let mut count = 0usize;
    for _ in 0..cfg.epochs {
        order.shuffle(rng);
        for idx in order.chunks(cfg.minibatch) {
            let states = batch.states.select(ndarray::Axis(0), idx);
            let pre = batch.pre_squash.select(ndarray::Axis(0), idx);
            let old: Vec<f64> = idx.iter().map(|&i| batch.log_probs[i]).collect();
            let adv: Vec<f64> = idx.iter().map(|&i| batch.advantages[i]).collect();
            let ret: Vec<f64> = idx.iter().map(|&i| batch.returns[i]).collect();

            let mut pl = policy_loss_and_grad(policy, states.view(), pre.view(), &old, &adv, cfg.clip_eps, cfg.entropy_coef)?;
            let (vl, mut vg) = value_loss_and_grad(policy, states.view(), &ret, cfg.value_coef)?;
            if count == 0 {
                diag.first_ratio_deviation = pl.ratios.iter().map(|r| (r - 1.0).abs()).fold(0.0, f64::max);
            }
            if let Some(limit) = cfg.max_grad_norm {
                let norm = (pl.actor.norm().powi(2) + pl.log_std.iter().map(|g| g * g).sum::<f64>()).sqrt();
                if norm > limit {
                    let s = limit / norm;
                    pl.actor.scale(s);
                    pl.log_std.iter_mut().for_each(|g| *g *= s);
                }
                vg.clip_norm(limit);
            }
            opt.actor.step(&mut policy.actor, &pl.actor)?;
            let mut ls = policy.log_std.clone();
            opt.log_std.step(&mut ls, &pl.log_std)?;
            policy.set_log_std(&ls);
            opt.value.step(&mut policy.value, &vg)?;

            diag.policy_loss += pl.loss;
            diag.value_loss += vl;
            diag.entropy += pl.entropy;
            diag.approx_kl += pl.approx_kl;
            diag.clip_fraction += pl.clip_fraction;
            count += 1;
        }
    }
    let c = count as f64;
    diag.policy_loss /= c;
    diag.value_loss /= c;
    diag.entropy /= c;
    diag.approx_kl /= c;
    diag.clip_fraction /= c;
    Ok(diag)
}

/// Trained policy plus its market; evaluates with `tanh(mean)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PpoPolicy {
    pub policy: GaussianPolicy,
    pub sampler: SamplerConfig,
    pub params: EconParams,
}

impl PpoPolicy {
    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut c = Checkpoint::new();
        c.meta.insert("kind".into(), ALGO_TAG.into());
        c.vectors.insert("log_std".into(), self.policy.log_std.clone());
        persist::write_market(&mut c, &self.sampler, &self.params);
        c.nets.insert("actor".into(), self.policy.actor.clone());
        c.nets.insert("value".into(), self.policy.value.clone());
        c
    }

    pub fn from_checkpoint(c: &Checkpoint) -> std::result::Result<Self, CheckpointError> {
        if c.meta("kind")? != ALGO_TAG {
            return Err(CheckpointError::Missing(format!("kind = {ALGO_TAG}")));
        }
        let policy = GaussianPolicy::from_parts(
            c.net("actor")?.clone(),
            c.net("value")?.clone(),
            c.vector("log_std")?.to_vec(),
        )
        .map_err(|e| CheckpointError::Missing(format!("consistent policy ({e})")))?;
        let (sampler, params) = persist::read_market(c)?;
        Ok(Self { policy, sampler, params })
    }
}

impl ContractPolicy for PpoPolicy {
    fn propose(&self, state: &MarketState, _rng: &mut dyn RngCore) -> ContractMenu {
        let enc = encode_state(state, &self.sampler);
        let a = self.policy.deterministic_action(&enc).expect("policy shaped for this market");
        action_to_menu(&a, state, &self.params)
    }
}

#[derive(Debug, Clone)]
pub struct PpoOutcome {
    pub curves: Vec<CurveRow>,
    pub policy: PpoPolicy,
    pub final_eval: Option<EvalStats>,
    pub last_update: Option<UpdateDiagnostics>,
}

/// Alternates rollout collection over i.i.d. market states with
/// [`ppo_update`]. The last rollout is cut short so the total number of
/// environment interactions is exactly `cfg.steps`.
pub fn train_ppo(
    sampler: &SamplerConfig,
    params: &EconParams,
    cfg: &PpoConfig,
    eval: &EvalSet,
    seed: u64,
    mut on_row: impl FnMut(&CurveRow),
) -> Result<PpoOutcome> {
    cfg.validate()?;
    sampler.validate()?;
    params.validate()?;

    let mut init_rng = ChaCha8Rng::seed_from_u64(seed);
    let mut env_rng = init_rng.clone();
    env_rng.set_stream(1);
    let mut act_rng = init_rng.clone();
    act_rng.set_stream(2);

    let state_dim = sampler.encoding_len();
    let action_dim = 2 * sampler.types();
    let mut policy = GaussianPolicy::new(state_dim, action_dim, &cfg.hidden, cfg.init_log_std, &mut init_rng)?;
    let mut opt = PpoOptimizer::new(&policy, cfg.lr);
    let mut rollout = RolloutBuilder::default();

    let mut curves = Vec::new();
    let mut final_eval = None;
    let mut last_update = None;
    let (mut window_reward, mut window_len) = (0.0, 0usize);

    let mut state = sample_state(&mut env_rng, sampler)?;
    for step in 1..=cfg.steps {
        let enc = encode_state(&state, sampler);
        let sample = act(&policy, &enc, &mut act_rng)?;
        let menu = action_to_menu(&sample.action, &state, params);
        let reward = reward_signal(&state, &menu, params)?;
        window_reward += reward;
        window_len += 1;
        rollout.push(&enc, &sample, reward * cfg.reward_scale);
        state = sample_state(&mut env_rng, sampler)?;

        if rollout.len() == cfg.rollout_len || step == cfg.steps {
            let bootstrap = policy.value_of(&encode_state(&state, sampler))?;
            let batch = rollout.finish(bootstrap, cfg.gamma, cfg.gae_lambda)?;
            last_update = Some(ppo_update(&mut policy, &mut opt, &batch, cfg, &mut act_rng)?);
        }

        if step % cfg.eval_every == 0 || step == cfg.steps {
            let current = PpoPolicy { policy: policy.clone(), sampler: sampler.clone(), params: params.clone() };
            let stats = evaluate_policy(&current, eval, params)?;
            let row = CurveRow {
                step: step as u64,
                seed,
                algo: ALGO_TAG.into(),
                train_reward: window_reward / window_len.max(1) as f64,
                eval_reward: stats.mean_reward,
                eval_feasibility: stats.feasibility_rate,
                eval_utility: stats.mean_utility,
                eval_oracle_ratio: stats.mean_oracle_ratio,
            };
            on_row(&row);
            curves.push(row);
            final_eval = Some(stats);
            window_reward = 0.0;
            window_len = 0;
        }
    }

    if !policy.actor.is_finite() || !policy.value.is_finite() {
        return Err(PpoError::Config { field: "lr", reason: "training diverged to non-finite parameters".into() });
    }
    let policy = PpoPolicy { policy, sampler: sampler.clone(), params: params.clone() };
    Ok(PpoOutcome { curves, policy, final_eval, last_update })
}
