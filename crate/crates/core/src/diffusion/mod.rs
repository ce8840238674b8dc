//! Conditional denoising chain that turns Gaussian noise into a contract
//! action, trained by maximizing a clipped double-Q critic.
//!
//! The denoiser predicts the injected noise `eps(s, c_t, t)`; one reverse
//! step is
//!
//! ```text
//! c_{t-1} = (c_t - beta_t / sqrt(1 - alpha_bar_t) * eps) / sqrt(alpha_t) + sigma_t * z
//! ```
//!
//! with `sigma_t` the posterior standard deviation (zero at `t = 1`). The
//! final `c_0` is clipped to `[-1, 1]`. Every reverse step is differentiable
//! in the denoiser parameters, so the actor loss backpropagates through the
//! whole chain with the noise held fixed.

mod buffer;
mod critic;
mod train;

pub use buffer::ReplayBuffer;
pub use critic::{critic_targets, critic_update, CriticPair, Transition};
pub use train::{train, ALGO_TAG, DiffusionConfig, DiffusionPolicy, TrainOutcome};

use ndarray::{s, Array2, ArrayView2, Axis};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::nn::{Activation, Adam, DenseNet, ForwardCache, Gradients, NnError};

/// Width of the sinusoidal timestep embedding fed to the denoiser.
pub const TIME_EMBED_DIM: usize = 8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DiffusionError {
    #[error("invalid schedule: {0}")]
    Schedule(String),
    #[error("invalid diffusion config `{field}`: {reason}")]
    Config { field: &'static str, reason: String },
    #[error(transparent)]
    Nn(#[from] NnError),
}

pub type Result<T> = std::result::Result<T, DiffusionError>;

/// Noise variances `beta_1..beta_T` and their running products.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffusionSchedule {
    beta: Vec<f64>,
    alpha_bar: Vec<f64>,
}

/// Linearly spaced `beta` from `beta_start` to `beta_end` over `steps`.
pub fn make_schedule(steps: usize, beta_start: f64, beta_end: f64) -> Result<DiffusionSchedule> {
    if steps == 0 {
        return Err(DiffusionError::Schedule("step count must be at least 1".into()));
    }
    if !(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0) {
        return Err(DiffusionError::Schedule(format!(
            "need 0 < beta_start <= beta_end < 1, got {beta_start}, {beta_end}"
        )));
    }
    let beta: Vec<f64> = (0..steps)
        .map(|i| {
            if steps == 1 {
                beta_start
            } else {
                beta_start + (beta_end - beta_start) * i as f64 / (steps - 1) as f64
            }
        })
        .collect();
    DiffusionSchedule::from_betas(beta)
}

impl DiffusionSchedule {
    pub fn from_betas(beta: Vec<f64>) -> Result<Self> {
        if beta.is_empty() || beta.iter().any(|&b| !(b > 0.0 && b < 1.0)) {
            return Err(DiffusionError::Schedule("every beta must lie in (0, 1)".into()));
        }
        let mut alpha_bar = Vec::with_capacity(beta.len());
        let mut prod = 1.0;
        for b in &beta {
            prod *= 1.0 - b;
            alpha_bar.push(prod);
        }
        Ok(Self { beta, alpha_bar })
    }

    pub fn steps(&self) -> usize {
        self.beta.len()
    }

    pub fn betas(&self) -> &[f64] {
        &self.beta
    }

    /// `beta_t` for `t` in `1..=T`.
    pub fn beta(&self, t: usize) -> f64 {
        self.beta[t - 1]
    }

    pub fn alpha(&self, t: usize) -> f64 {
        1.0 - self.beta[t - 1]
    }

    /// `alpha_bar_t`, with `alpha_bar_0 = 1`.
    pub fn alpha_bar(&self, t: usize) -> f64 {
        if t == 0 {
            1.0
        } else {
            self.alpha_bar[t - 1]
        }
    }

    /// Standard deviation of the reverse-kernel noise at step `t`.
    pub fn posterior_std(&self, t: usize) -> f64 {
        let var = self.beta(t) * (1.0 - self.alpha_bar(t - 1)) / (1.0 - self.alpha_bar(t));
        var.max(0.0).sqrt()
    }

    // Coefficient on the predicted noise, `beta_t / sqrt(1 - alpha_bar_t)`.
    fn eps_coef(&self, t: usize) -> f64 {
        self.beta(t) / (1.0 - self.alpha_bar(t)).sqrt()
    }
}

pub fn time_embedding(t: usize, steps: usize) -> [f64; TIME_EMBED_DIM] {
    let x = t as f64 / steps as f64;
    let mut out = [0.0; TIME_EMBED_DIM];
    for k in 0..TIME_EMBED_DIM / 2 {
        let w = std::f64::consts::PI * (1u32 << k) as f64;
        out[2 * k] = (w * x).sin();
        out[2 * k + 1] = (w * x).cos();
    }
    out
}

/// Denoiser input is `state ⊕ noisy action ⊕ time embedding`; output is
/// the predicted noise.
pub fn denoiser_net<R: Rng + ?Sized>(
    state_dim: usize,
    action_dim: usize,
    hidden: &[usize],
    rng: &mut R,
) -> Result<DenseNet> {
    let mut sizes = vec![state_dim + action_dim + TIME_EMBED_DIM];
    sizes.extend_from_slice(hidden);
    sizes.push(action_dim);
    Ok(DenseNet::new(&sizes, Activation::Relu, Activation::Identity, rng)?)
}

fn action_dim_of(denoiser: &DenseNet) -> usize {
    denoiser.output_dim()
}

fn denoiser_input(states: ArrayView2<f64>, x: &Array2<f64>, t: usize, steps: usize) -> Array2<f64> {
    let (b, sd) = states.dim();
    let ad = x.ncols();
    let emb = time_embedding(t, steps);
    let mut input = Array2::zeros((b, sd + ad + TIME_EMBED_DIM));
    input.slice_mut(s![.., ..sd]).assign(&states);
    input.slice_mut(s![.., sd..sd + ad]).assign(x);
    for mut row in input.slice_mut(s![.., sd + ad..]).rows_mut() {
        for (v, e) in row.iter_mut().zip(emb) {
            *v = e;
        }
    }
    input
}

fn standard_normal<R: Rng + ?Sized>(rng: &mut R, shape: (usize, usize)) -> Array2<f64> {
    Array2::from_shape_simple_fn(shape, || StandardNormal.sample(rng))
}

/// Everything needed to backpropagate through one batched chain run.
#[derive(Debug, Clone)]
pub struct ChainTrace {
    /// Denoiser caches in execution order (`t = T` first).
    caches: Vec<ForwardCache>,
    /// `c_0` before clipping.
    pub pre_clip: Array2<f64>,
    /// Clipped actions.
    pub actions: Array2<f64>,
    state_dim: usize,
}

/// One action per state row. Draws `c_T` row-major, then (unless
/// `deterministic`) one noise matrix per step `t = T..2`.
pub fn sample_batch<R: Rng + ?Sized>(
    states: ArrayView2<f64>,
    denoiser: &DenseNet,
    schedule: &DiffusionSchedule,
    rng: &mut R,
    deterministic: bool,
) -> Result<Array2<f64>> {
    Ok(run_chain(states, denoiser, schedule, rng, deterministic, false, |_| {})?.actions)
}

pub fn sample_batch_traced<R: Rng + ?Sized>(
    states: ArrayView2<f64>,
    denoiser: &DenseNet,
    schedule: &DiffusionSchedule,
    rng: &mut R,
    deterministic: bool,
) -> Result<ChainTrace> {
    run_chain(states, denoiser, schedule, rng, deterministic, true, |_| {})
}

/// Single-state form of [`sample_batch`].
pub fn sample_action<R: Rng + ?Sized>(
    state_enc: &[f64],
    denoiser: &DenseNet,
    schedule: &DiffusionSchedule,
    rng: &mut R,
    deterministic: bool,
) -> Result<Vec<f64>> {
    let s = ArrayView2::from_shape((1, state_enc.len()), state_enc).expect("row vector");
    Ok(sample_batch(s, denoiser, schedule, rng, deterministic)?.into_raw_vec_and_offset().0)
}

/// Every iterate `c_T, c_{T-1}, ..., c_0` of the chain for one state, before
/// clipping. Uses the same draws as [`sample_action`].
pub fn chain_path<R: Rng + ?Sized>(
    state_enc: &[f64],
    denoiser: &DenseNet,
    schedule: &DiffusionSchedule,
    rng: &mut R,
    deterministic: bool,
) -> Result<Vec<Vec<f64>>> {
    let s = ArrayView2::from_shape((1, state_enc.len()), state_enc).expect("row vector");
    let mut path = Vec::with_capacity(schedule.steps() + 1);
    run_chain(s, denoiser, schedule, rng, deterministic, false, |x| path.push(x.row(0).to_vec()))?;
    Ok(path)
}

#[allow(clippy::too_many_arguments)]
fn run_chain<R: Rng + ?Sized>(
    states: ArrayView2<f64>,
    denoiser: &DenseNet,
    schedule: &DiffusionSchedule,
    rng: &mut R,
    deterministic: bool,
    keep: bool,
    mut visit: impl FnMut(&Array2<f64>),
) -> Result<ChainTrace> {
    let (b, sd) = states.dim();
    let ad = action_dim_of(denoiser);
    let steps = schedule.steps();
    let mut x = standard_normal(rng, (b, ad));
    visit(&x);
    let mut caches = Vec::with_capacity(if keep { steps } else { 0 });
    for t in (1..=steps).rev() {
        let input = denoiser_input(states, &x, t, steps);
        let eps = if keep {
            let cache = denoiser.forward_cached(input.view())?;
            let out = cache.output.clone();
            caches.push(cache);
            out
        } else {
            denoiser.forward_batch(input.view())?
        };
        let inv_sqrt_alpha = 1.0 / schedule.alpha(t).sqrt();
        x.scaled_add(-schedule.eps_coef(t), &eps);
        x *= inv_sqrt_alpha;
        if t > 1 && !deterministic {
            let z = standard_normal(rng, (b, ad));
            x.scaled_add(schedule.posterior_std(t), &z);
        }
        visit(&x);
    }
    let actions = x.mapv(|v| v.clamp(-1.0, 1.0));
    Ok(ChainTrace { caches, pre_clip: x, actions, state_dim: sd })
}

/// Accumulates into `grads` the denoiser gradient of `sum(grad_actions * a)`
/// for a traced chain. Clipped coordinates pass no gradient.
pub fn chain_backward(
    denoiser: &DenseNet,
    schedule: &DiffusionSchedule,
    trace: &ChainTrace,
    grad_actions: ArrayView2<f64>,
    grads: &mut Gradients,
) -> Result<()> {
    let steps = schedule.steps();
    let ad = action_dim_of(denoiser);
    let sd = trace.state_dim;
    let mut g = grad_actions.to_owned();
    ndarray::Zip::from(&mut g).and(&trace.pre_clip).for_each(|g, &x| {
        if !(-1.0..=1.0).contains(&x) {
            *g = 0.0;
        }
    });
    // caches[i] belongs to step t = T - i; walk t = 1..T.
    for t in 1..=steps {
        let cache = &trace.caches[steps - t];
        let inv_sqrt_alpha = 1.0 / schedule.alpha(t).sqrt();
        let upstream = &g * (-schedule.eps_coef(t) * inv_sqrt_alpha);
        let dx_input = denoiser.backward_into(cache, upstream.view(), grads)?;
        g *= inv_sqrt_alpha;
        g += &dx_input.slice(s![.., sd..sd + ad]);
    }
    Ok(())
}

/// Clipped double-Q actor objective `-mean(min(Q_A, Q_B))` through the full
/// reparameterized chain, followed by one optimizer step on the denoiser.
/// Returns the loss before the step.
pub fn actor_update<R: Rng + ?Sized>(
    states: ArrayView2<f64>,
    denoiser: &mut DenseNet,
    optimizer: &mut Adam,
    critics: &CriticPair,
    schedule: &DiffusionSchedule,
    rng: &mut R,
    max_grad_norm: Option<f64>,
) -> Result<f64> {
    let (loss, mut grads) = actor_loss_and_grad(states, denoiser, critics, schedule, rng, false)?;
    if let Some(limit) = max_grad_norm {
        grads.clip_norm(limit);
    }
    optimizer.step(denoiser, &grads)?;
    Ok(loss)
}

/// Actor loss and its denoiser gradient.
pub fn actor_loss_and_grad<R: Rng + ?Sized>(
    states: ArrayView2<f64>,
    denoiser: &DenseNet,
    critics: &CriticPair,
    schedule: &DiffusionSchedule,
    rng: &mut R,
    deterministic: bool,
) -> Result<(f64, Gradients)> {
    let b = states.nrows();
    let trace = sample_batch_traced(states, denoiser, schedule, rng, deterministic)?;
    let (q_min, grad_a) = critics.min_q_action_grad(states, trace.actions.view())?;
    let loss = -q_min.sum() / b as f64;
    let mut grads = Gradients::zeros_like(denoiser);
    let upstream = grad_a * (-1.0 / b as f64);
    chain_backward(denoiser, schedule, &trace, upstream.view(), &mut grads)?;
    Ok((loss, grads))
}

/// Mean Euclidean norm of a batch of actions.
pub fn mean_action_norm(actions: &Array2<f64>) -> f64 {
    let n = actions.nrows().max(1) as f64;
    actions.map_axis(Axis(1), |r| r.dot(&r).sqrt()).sum() / n
}
