use ndarray::{s, Array1, Array2, ArrayView2};
use rand::Rng;

use super::{sample_batch, DiffusionSchedule, Result};
use crate::nn::{soft_update, Activation, Adam, AdamConfig, DenseNet};

/// One environment interaction.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub s: Vec<f64>,
    pub a: Vec<f64>,
    pub r: f64,
    pub s_next: Vec<f64>,
}

/// Two action-value networks `Q(s, a)` with slow-moving targets.
#[derive(Debug, Clone, PartialEq)]
pub struct CriticPair {
    pub q_a: DenseNet,
    pub q_b: DenseNet,
    pub target_a: DenseNet,
    pub target_b: DenseNet,
    pub opt_a: Adam,
    pub opt_b: Adam,
    pub max_grad_norm: Option<f64>,
    action_dim: usize,
}

impl CriticPair {
    pub fn new<R: Rng + ?Sized>(
        state_dim: usize,
        action_dim: usize,
        hidden: &[usize],
        lr: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let mut sizes = vec![state_dim + action_dim];
        sizes.extend_from_slice(hidden);
        sizes.push(1);
        let q_a = DenseNet::new(&sizes, Activation::Relu, Activation::Identity, rng)?;
        let q_b = DenseNet::new(&sizes, Activation::Relu, Activation::Identity, rng)?;
        Ok(Self::from_nets(q_a, q_b, action_dim, lr))
    }

    /// Targets start as exact copies of the online nets.
    pub fn from_nets(q_a: DenseNet, q_b: DenseNet, action_dim: usize, lr: f64) -> Self {
        let cfg = AdamConfig::with_lr(lr);
        Self {
            opt_a: Adam::new(&q_a, cfg),
            opt_b: Adam::new(&q_b, cfg),
            target_a: q_a.clone(),
            target_b: q_b.clone(),
            q_a,
            q_b,
            max_grad_norm: None,
            action_dim,
        }
    }

    pub fn action_dim(&self) -> usize {
        self.action_dim
    }

    pub fn state_dim(&self) -> usize {
        self.q_a.input_dim() - self.action_dim
    }

    /// `min(Q_A_target, Q_B_target)` per row.
    pub fn target_min(&self, states: ArrayView2<f64>, actions: ArrayView2<f64>) -> Result<Array1<f64>> {
        let x = join(states, actions);
        let a = self.target_a.forward_batch(x.view())?;
        let b = self.target_b.forward_batch(x.view())?;
        Ok(ndarray::Zip::from(a.column(0)).and(b.column(0)).map_collect(|&a, &b| a.min(b)))
    }

    /// Online `(Q_A, Q_B)` per row.
    pub fn online(&self, states: ArrayView2<f64>, actions: ArrayView2<f64>) -> Result<(Array1<f64>, Array1<f64>)> {
        let x = join(states, actions);
        let a = self.q_a.forward_batch(x.view())?;
        let b = self.q_b.forward_batch(x.view())?;
        Ok((a.column(0).to_owned(), b.column(0).to_owned()))
    }

    /// Row-wise `min(Q_A, Q_B)` of the online nets and its gradient with
    /// respect to the actions (through whichever net attains the min).
    pub fn min_q_action_grad(
        &self,
        states: ArrayView2<f64>,
        actions: ArrayView2<f64>,
    ) -> Result<(Array1<f64>, Array2<f64>)> {
        let sd = states.ncols();
        let x = join(states, actions);
        let ca = self.q_a.forward_cached(x.view())?;
        let cb = self.q_b.forward_cached(x.view())?;
        let b = x.nrows();
        let mut up_a = Array2::zeros((b, 1));
        let mut up_b = Array2::zeros((b, 1));
        let mut q_min = Array1::zeros(b);
        for i in 0..b {
            let (qa, qb) = (ca.output[[i, 0]], cb.output[[i, 0]]);
            if qa <= qb {
                q_min[i] = qa;
                up_a[[i, 0]] = 1.0;
            } else {
                q_min[i] = qb;
                up_b[[i, 0]] = 1.0;
            }
        }
        let (_, da) = self.q_a.backward(&ca, up_a.view())?;
        let (_, db) = self.q_b.backward(&cb, up_b.view())?;
        let grad = &da.slice(s![.., sd..]) + &db.slice(s![.., sd..]);
        Ok((q_min, grad))
    }
}

fn join(states: ArrayView2<f64>, actions: ArrayView2<f64>) -> Array2<f64> {
    ndarray::concatenate(ndarray::Axis(1), &[states, actions]).expect("equal batch sizes")
}

pub(crate) fn stack<'a>(rows: impl Iterator<Item = &'a [f64]>, width: usize) -> Array2<f64> {
    let flat: Vec<f64> = rows.flat_map(|r| r.iter().copied()).collect();
    let n = flat.len() / width.max(1);
    Array2::from_shape_vec((n, width), flat).expect("rectangular batch")
}

/// Clipped double-Q Bellman targets `r + gamma * min(Q_A', Q_B')(s', a')`
/// with `a'` drawn from the current stochastic chain at `s'`.
pub fn critic_targets<R: Rng + ?Sized>(
    batch: &[Transition],
    denoiser: &DenseNet,
    critics: &CriticPair,
    schedule: &DiffusionSchedule,
    gamma: f64,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if gamma == 0.0 {
        return Ok(batch.iter().map(|t| t.r).collect());
    }
    let sd = critics.state_dim();
    let next = stack(batch.iter().map(|t| t.s_next.as_slice()), sd);
    let a_next = sample_batch(next.view(), denoiser, schedule, rng, false)?;
    let q_next = critics.target_min(next.view(), a_next.view())?;
    Ok(batch.iter().zip(q_next.iter()).map(|(t, q)| t.r + gamma * q).collect())
}

/// One optimizer step of both online critics on mean squared error to `y`,
/// then a `tau` soft update of both targets. Returns `(loss_a, loss_b)`
/// before the step.
pub fn critic_update(
    batch: &[Transition],
    critics: &mut CriticPair,
    y: &[f64],
    tau: f64,
) -> Result<(f64, f64)> {
    let sd = critics.state_dim();
    let ad = critics.action_dim();
    let states = stack(batch.iter().map(|t| t.s.as_slice()), sd);
    let actions = stack(batch.iter().map(|t| t.a.as_slice()), ad);
    let x = join(states.view(), actions.view());
    let b = batch.len() as f64;
    let mut losses = [0.0; 2];
    let max_norm = critics.max_grad_norm;
    for (which, loss) in losses.iter_mut().enumerate() {
        let (net, opt) = if which == 0 {
            (&mut critics.q_a, &mut critics.opt_a)
        } else {
            (&mut critics.q_b, &mut critics.opt_b)
        };
        let cache = net.forward_cached(x.view())?;
        let mut up = Array2::zeros((batch.len(), 1));
        let mut sq = 0.0;
        for (i, &target) in y.iter().enumerate() {
            let err = cache.output[[i, 0]] - target;
            sq += err * err;
            up[[i, 0]] = 2.0 * err / b;
        }
        *loss = sq / b;
        let (mut grads, _) = net.backward(&cache, up.view())?;
        if let Some(limit) = max_norm {
            grads.clip_norm(limit);
        }
        opt.step(net, &grads)?;
    }
    soft_update(&mut critics.target_a, &critics.q_a, tau)?;
    soft_update(&mut critics.target_b, &critics.q_b, tau)?;
    Ok((losses[0], losses[1]))
}
