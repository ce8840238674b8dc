use ndarray::Array2;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::critic::stack;
use super::{
    actor_update, critic_targets, critic_update, denoiser_net, make_schedule, sample_action,
    CriticPair, DiffusionError, DiffusionSchedule, ReplayBuffer, Result, Transition,
};
use crate::curves::CurveRow;
use crate::eval::{evaluate_policy, ContractPolicy, EvalSet, EvalStats};
use crate::market::{
    action_to_menu, encode_state, reward_signal, sample_state, ContractMenu, EconParams,
    MarketState, SamplerConfig,
};
use crate::nn::checkpoint::{Checkpoint, CheckpointError};
use crate::nn::{Adam, AdamConfig, DenseNet};
use crate::persist;

pub const ALGO_TAG: &str = "diffusion";

#[derive(Debug, Clone, PartialEq)]
pub struct DiffusionConfig {
    /// Environment interactions.
    pub steps: usize,
    pub batch_size: usize,
    pub buffer_capacity: usize,
    pub gamma: f64,
    pub tau: f64,
    pub lr_actor: f64,
    pub lr_critic: f64,
    /// Denoising steps `T`.
    pub diffusion_steps: usize,
    pub beta_start: f64,
    pub beta_end: f64,
    pub hidden: Vec<usize>,
    pub critic_hidden: Vec<usize>,
    /// Multiplies rewards before they enter the replay buffer.
    pub reward_scale: f64,
    /// Std of extra Gaussian noise on training actions (0 disables).
    pub exploration_noise: f64,
    /// Updates start once the buffer holds this many transitions.
    pub warmup: usize,
    pub eval_every: usize,
    pub max_grad_norm: Option<f64>,
}

impl Default for DiffusionConfig {
    fn default() -> Self {
        Self {
            steps: 50_000,
            batch_size: 256,
            buffer_capacity: 100_000,
            gamma: 0.95,
            tau: 0.005,
            lr_actor: 3e-4,
            lr_critic: 3e-4,
            diffusion_steps: 8,
            beta_start: 0.05,
            beta_end: 0.5,
            hidden: vec![256, 256],
            critic_hidden: vec![256, 256],
            reward_scale: 1e-5,
            exploration_noise: 0.0,
            warmup: 256,
            eval_every: 1000,
            max_grad_norm: None,
        }
    }
}

impl DiffusionConfig {
    pub fn validate(&self) -> Result<()> {
        let err = |field: &'static str, reason: &str| {
            Err(DiffusionError::Config { field, reason: reason.to_string() })
        };
        if self.steps == 0 {
            return err("steps", "must be positive");
        }
        if self.batch_size == 0 {
            return err("batch_size", "must be positive");
        }
        if self.buffer_capacity < self.batch_size {
            return err("buffer_capacity", "must hold at least one batch");
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return err("gamma", "must lie in [0, 1)");
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return err("tau", "must lie in (0, 1]");
        }
        if !(self.lr_actor >= 0.0 && self.lr_critic >= 0.0) {
            return err("lr", "must be non-negative");
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return err("hidden", "needs at least one non-empty layer");
        }
        if self.critic_hidden.is_empty() || self.critic_hidden.contains(&0) {
            return err("critic_hidden", "needs at least one non-empty layer");
        }
        if !(self.reward_scale > 0.0) {
            return err("reward_scale", "must be positive");
        }
        if !(self.exploration_noise >= 0.0) {
            return err("exploration_noise", "must be non-negative");
        }
        if self.eval_every == 0 {
            return err("eval_every", "must be positive");
        }
        if self.diffusion_steps == 0 {
            return err("diffusion_steps", "must be positive");
        }
        make_schedule(self.diffusion_steps, self.beta_start, self.beta_end)?;
        Ok(())
    }
}

/// Trained denoiser plus what it needs to act in a market.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffusionPolicy {
    pub denoiser: DenseNet,
    pub schedule: DiffusionSchedule,
    pub sampler: SamplerConfig,
    pub params: EconParams,
}

impl DiffusionPolicy {
    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut c = Checkpoint::new();
        c.meta.insert("kind".into(), ALGO_TAG.into());
        c.meta.insert("schedule.steps".into(), self.schedule.steps().to_string());
        c.vectors.insert("schedule.beta".into(), self.schedule.betas().to_vec());
        persist::write_market(&mut c, &self.sampler, &self.params);
        c.nets.insert("denoiser".into(), self.denoiser.clone());
        c
    }

    pub fn from_checkpoint(c: &Checkpoint) -> std::result::Result<Self, CheckpointError> {
        if c.meta("kind")? != ALGO_TAG {
            return Err(CheckpointError::Missing(format!("kind = {ALGO_TAG}")));
        }
        let beta = c.vector("schedule.beta")?.to_vec();
        let schedule = DiffusionSchedule::from_betas(beta)
            .map_err(|e| CheckpointError::Missing(format!("valid schedule ({e})")))?;
        let (sampler, params) = persist::read_market(c)?;
        let denoiser = c.net("denoiser")?.clone();
        Ok(Self { denoiser, schedule, sampler, params })
    }

    pub fn action(&self, state: &MarketState, rng: &mut dyn RngCore, deterministic: bool) -> Vec<f64> {
        let enc = encode_state(state, &self.sampler);
        sample_action(&enc, &self.denoiser, &self.schedule, rng, deterministic)
            .expect("denoiser shaped for this market")
    }
}

impl ContractPolicy for DiffusionPolicy {
    fn propose(&self, state: &MarketState, rng: &mut dyn RngCore) -> ContractMenu {
        action_to_menu(&self.action(state, rng, true), state, &self.params)
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub curves: Vec<CurveRow>,
    pub policy: DiffusionPolicy,
    pub critics: CriticPair,
    pub final_eval: Option<EvalStats>,
    pub critic_loss: f64,
    pub actor_loss: f64,
}

/// Online diffusion Q-learning over i.i.d. market states.
///
/// Each environment step samples a state, draws an action from the
/// stochastic chain, scores it with [`reward_signal`], stores the
/// transition, then runs one critic and one actor update. Every
/// `eval_every` steps the deterministic chain is scored on `eval`.
pub fn train(
    sampler: &SamplerConfig,
    params: &EconParams,
    cfg: &DiffusionConfig,
    eval: &EvalSet,
    seed: u64,
    mut on_row: impl FnMut(&CurveRow),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let market_err = |e: crate::market::MarketError| DiffusionError::Config {
        field: "market",
        reason: e.to_string(),
    };
    sampler.validate().map_err(market_err)?;
    params.validate().map_err(market_err)?;

    let mut init_rng = ChaCha8Rng::seed_from_u64(seed);
    let mut env_rng = init_rng.clone();
    env_rng.set_stream(1);
    let mut act_rng = init_rng.clone();
    act_rng.set_stream(2);

    let state_dim = sampler.encoding_len();
    let action_dim = 2 * sampler.types();
    let schedule = make_schedule(cfg.diffusion_steps, cfg.beta_start, cfg.beta_end)?;
    let mut denoiser = denoiser_net(state_dim, action_dim, &cfg.hidden, &mut init_rng)?;
    let mut actor_opt = Adam::new(&denoiser, AdamConfig::with_lr(cfg.lr_actor));
    let mut critics = CriticPair::new(state_dim, action_dim, &cfg.critic_hidden, cfg.lr_critic, &mut init_rng)?;
    critics.max_grad_norm = cfg.max_grad_norm;
    let mut buffer = ReplayBuffer::new(cfg.buffer_capacity);

    let mut curves = Vec::new();
    let mut final_eval = None;
    let (mut window_reward, mut window_len) = (0.0, 0usize);
    let (mut critic_loss, mut actor_loss) = (f64::NAN, f64::NAN);

    let mut state = sample_state(&mut env_rng, sampler).map_err(market_err)?;
    for step in 1..=cfg.steps {
        let enc = encode_state(&state, sampler);
        let mut action = sample_action(&enc, &denoiser, &schedule, &mut act_rng, false)?;
        if cfg.exploration_noise > 0.0 {
            for a in &mut action {
                let z: f64 = StandardNormal.sample(&mut act_rng);
                *a = (*a + cfg.exploration_noise * z).clamp(-1.0, 1.0);
            }
        }
        let menu = action_to_menu(&action, &state, params);
        let reward = reward_signal(&state, &menu, params).map_err(market_err)?;
        window_reward += reward;
        window_len += 1;

        let next = sample_state(&mut env_rng, sampler).map_err(market_err)?;
        buffer.push(Transition {
            s: enc,
            a: action,
            r: reward * cfg.reward_scale,
            s_next: encode_state(&next, sampler),
        });
        state = next;

        if buffer.len() >= cfg.warmup.max(cfg.batch_size) {
            let batch = buffer.sample(cfg.batch_size, &mut act_rng);
            let y = critic_targets(&batch, &denoiser, &critics, &schedule, cfg.gamma, &mut act_rng)?;
            let (la, lb) = critic_update(&batch, &mut critics, &y, cfg.tau)?;
            critic_loss = 0.5 * (la + lb);
            let states: Array2<f64> = stack(batch.iter().map(|t| t.s.as_slice()), state_dim);
            actor_loss = actor_update(
                states.view(),
                &mut denoiser,
                &mut actor_opt,
                &critics,
                &schedule,
                &mut act_rng,
                cfg.max_grad_norm,
            )?;
        }

        if step % cfg.eval_every == 0 || step == cfg.steps {
            let policy = DiffusionPolicy {
                denoiser: denoiser.clone(),
                schedule: schedule.clone(),
                sampler: sampler.clone(),
                params: params.clone(),
            };
            let stats = evaluate_policy(&policy, eval, params).map_err(market_err)?;
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

    if !denoiser.is_finite() || !critics.q_a.is_finite() || !critics.q_b.is_finite() {
        return Err(DiffusionError::Config {
            field: "lr",
            reason: "training diverged to non-finite parameters".into(),
        });
    }
    let policy = DiffusionPolicy { denoiser, schedule, sampler: sampler.clone(), params: params.clone() };
    Ok(TrainOutcome { curves, policy, critics, final_eval, critic_loss, actor_loss })
}

