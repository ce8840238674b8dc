//! Small feed-forward networks with hand-written reverse-mode gradients.
//!
//! Everything runs in `f64`. Batches are row-major `(batch, features)`
//! matrices; a layer stores its weight as `(out, in)`.

mod adam;
pub mod checkpoint;

pub use adam::{Adam, AdamConfig, VecAdam};

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NnError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("architecture mismatch: {0:?} vs {1:?}")]
    Architecture(Vec<usize>, Vec<usize>),
    #[error("a network needs at least an input and an output size, got {0:?}")]
    Sizes(Vec<usize>),
    #[error("unknown activation `{0}`")]
    UnknownActivation(String),
}

pub type Result<T> = std::result::Result<T, NnError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Identity,
    Relu,
    Tanh,
}

impl Activation {
    pub fn tag(self) -> &'static str {
        match self {
            Activation::Identity => "identity",
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
        }
    }

    pub fn from_tag(tag: &str) -> Result<Self> {
        match tag {
            "identity" => Ok(Activation::Identity),
            "relu" => Ok(Activation::Relu),
            "tanh" => Ok(Activation::Tanh),
            other => Err(NnError::UnknownActivation(other.to_string())),
        }
    }

    fn apply(self, x: &mut Array2<f64>) {
        match self {
            Activation::Identity => {}
            Activation::Relu => x.mapv_inplace(|v| v.max(0.0)),
            Activation::Tanh => x.mapv_inplace(f64::tanh),
        }
    }

    // Multiplies `grad` by the derivative, given pre-activation `pre` and output `out`.
    fn backprop(self, grad: &mut Array2<f64>, pre: &Array2<f64>, out: &Array2<f64>) {
        match self {
            Activation::Identity => {}
            Activation::Relu => {
                ndarray::Zip::from(grad).and(pre).for_each(|g, &p| {
                    if p <= 0.0 {
                        *g = 0.0;
                    }
                });
            }
            Activation::Tanh => {
                ndarray::Zip::from(grad).and(out).for_each(|g, &y| *g *= 1.0 - y * y);
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    /// `(out, in)`
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseNet {
    layers: Vec<DenseLayer>,
    hidden: Activation,
    output: Activation,
}

/// Per-layer intermediates from a batched forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    inputs: Vec<Array2<f64>>,
    pre: Vec<Array2<f64>>,
    pub output: Array2<f64>,
}

/// Parameter-shaped gradient (or moment) buffers.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<DenseLayer>,
}

impl DenseNet {
    /// Uniform `±1/sqrt(fan_in)` initialization.
    pub fn new<R: Rng + ?Sized>(
        sizes: &[usize],
        hidden: Activation,
        output: Activation,
        rng: &mut R,
    ) -> Result<Self> {
        check_sizes(sizes)?;
        let layers = sizes
            .windows(2)
            .map(|w| {
                let bound = 1.0 / (w[0] as f64).sqrt();
                let mut draw = || rng.random_range(-bound..bound);
                DenseLayer {
                    weight: Array2::from_shape_simple_fn((w[1], w[0]), &mut draw),
                    bias: Array1::from_shape_simple_fn(w[1], &mut draw),
                }
            })
            .collect();
        Ok(Self { layers, hidden, output })
    }

    pub fn zeros(sizes: &[usize], hidden: Activation, output: Activation) -> Result<Self> {
        check_sizes(sizes)?;
        let layers = sizes
            .windows(2)
            .map(|w| DenseLayer { weight: Array2::zeros((w[1], w[0])), bias: Array1::zeros(w[1]) })
            .collect();
        Ok(Self { layers, hidden, output })
    }

    pub fn from_layers(layers: Vec<DenseLayer>, hidden: Activation, output: Activation) -> Result<Self> {
        if layers.is_empty() {
            return Err(NnError::Sizes(Vec::new()));
        }
        for w in layers.windows(2) {
            if w[0].weight.nrows() != w[1].weight.ncols() {
                return Err(NnError::Dimension {
                    expected: w[0].weight.nrows(),
                    got: w[1].weight.ncols(),
                });
            }
        }
        for l in &layers {
            if l.bias.len() != l.weight.nrows() {
                return Err(NnError::Dimension { expected: l.weight.nrows(), got: l.bias.len() });
            }
        }
        Ok(Self { layers, hidden, output })
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [DenseLayer] {
        &mut self.layers
    }

    pub fn hidden_activation(&self) -> Activation {
        self.hidden
    }

    pub fn output_activation(&self) -> Activation {
        self.output
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![self.input_dim()];
        s.extend(self.layers.iter().map(|l| l.weight.nrows()));
        s
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weight.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].weight.nrows()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        let x = ArrayView2::from_shape((1, input.len()), input).expect("row vector");
        Ok(self.forward_batch(x)?.into_raw_vec_and_offset().0)
    }

    pub fn forward_batch(&self, input: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_input(input.ncols())?;
        let last = self.layers.len() - 1;
        let mut x = input.to_owned();
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = x.dot(&layer.weight.t());
            z += &layer.bias;
            let act = if i == last { self.output } else { self.hidden };
            act.apply(&mut z);
            x = z;
        }
        Ok(x)
    }

    pub fn forward_cached(&self, input: ArrayView2<f64>) -> Result<ForwardCache> {
        self.check_input(input.ncols())?;
        let last = self.layers.len() - 1;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut x = input.to_owned();
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = x.dot(&layer.weight.t());
            z += &layer.bias;
            let mut y = z.clone();
            let act = if i == last { self.output } else { self.hidden };
            act.apply(&mut y);
            inputs.push(x);
            pre.push(z);
            x = y;
        }
        Ok(ForwardCache { inputs, pre, output: x })
    }

    /// Gradients of `sum(upstream * output)` for the cached pass.
    pub fn backward(
        &self,
        cache: &ForwardCache,
        upstream: ArrayView2<f64>,
    ) -> Result<(Gradients, Array2<f64>)> {
        let mut grads = Gradients::zeros_like(self);
        let dx = self.backward_into(cache, upstream, &mut grads)?;
        Ok((grads, dx))
    }

    /// Like [`backward`](Self::backward), accumulating into `grads`.
    pub fn backward_into(
        &self,
        cache: &ForwardCache,
        upstream: ArrayView2<f64>,
        grads: &mut Gradients,
    ) -> Result<Array2<f64>> {
        if upstream.dim() != cache.output.dim() {
            return Err(NnError::Dimension {
                expected: cache.output.len(),
                got: upstream.len(),
            });
        }
        let last = self.layers.len() - 1;
        let mut g = upstream.to_owned();
        for i in (0..self.layers.len()).rev() {
            let act = if i == last { self.output } else { self.hidden };
            let out = if i == last { &cache.output } else { &cache.inputs[i + 1] };
            act.backprop(&mut g, &cache.pre[i], out);
            let slot = &mut grads.layers[i];
            ndarray::linalg::general_mat_mul(1.0, &g.t(), &cache.inputs[i], 1.0, &mut slot.weight);
            slot.bias += &g.sum_axis(Axis(0));
            g = g.dot(&self.layers[i].weight);
        }
        Ok(g)
    }

    pub fn params_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for l in &self.layers {
            out.extend(l.weight.iter());
            out.extend(l.bias.iter());
        }
        out
    }

    pub fn set_params_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.param_count() {
            return Err(NnError::Dimension { expected: self.param_count(), got: flat.len() });
        }
        let mut it = flat.iter().copied();
        for l in &mut self.layers {
            l.weight.iter_mut().for_each(|w| *w = it.next().expect("length checked"));
            l.bias.iter_mut().for_each(|b| *b = it.next().expect("length checked"));
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weight.iter().all(|w| w.is_finite()) && l.bias.iter().all(|b| b.is_finite()))
    }

    fn check_input(&self, got: usize) -> Result<()> {
        if got != self.input_dim() {
            return Err(NnError::Dimension { expected: self.input_dim(), got });
        }
        Ok(())
    }

    fn same_architecture(&self, other: &DenseNet) -> Result<()> {
        if self.sizes() != other.sizes() {
            return Err(NnError::Architecture(self.sizes(), other.sizes()));
        }
        Ok(())
    }
}

fn check_sizes(sizes: &[usize]) -> Result<()> {
    if sizes.len() < 2 || sizes.contains(&0) {
        return Err(NnError::Sizes(sizes.to_vec()));
    }
    Ok(())
}

impl Gradients {
    pub fn zeros_like(net: &DenseNet) -> Self {
        Self {
            layers: net
                .layers
                .iter()
                .map(|l| DenseLayer {
                    weight: Array2::zeros(l.weight.raw_dim()),
                    bias: Array1::zeros(l.bias.len()),
                })
                .collect(),
        }
    }

    pub fn flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for l in &self.layers {
            out.extend(l.weight.iter());
            out.extend(l.bias.iter());
        }
        out
    }

    pub fn norm(&self) -> f64 {
        self.layers
            .iter()
            .map(|l| l.weight.iter().chain(l.bias.iter()).map(|g| g * g).sum::<f64>())
            .sum::<f64>()
            .sqrt()
    }

    pub fn scale(&mut self, factor: f64) {
        for l in &mut self.layers {
            l.weight *= factor;
            l.bias *= factor;
        }
    }

    /// Rescales to at most `max_norm` in global L2 norm.
    pub fn clip_norm(&mut self, max_norm: f64) {
        let n = self.norm();
        if n > max_norm && n.is_finite() {
            self.scale(max_norm / n);
        }
    }
}

/// `target <- (1 - tau) * target + tau * online`, per parameter.
pub fn soft_update(target: &mut DenseNet, online: &DenseNet, tau: f64) -> Result<()> {
    target.same_architecture(online)?;
    for (t, o) in target.layers.iter_mut().zip(&online.layers) {
        if tau == 1.0 {
            t.weight.assign(&o.weight);
            t.bias.assign(&o.bias);
            continue;
        }
        ndarray::Zip::from(&mut t.weight).and(&o.weight).for_each(|t, &o| *t += tau * (o - *t));
        ndarray::Zip::from(&mut t.bias).and(&o.bias).for_each(|t, &o| *t += tau * (o - *t));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn zero_net_outputs_zero() {
        let net = DenseNet::zeros(&[3, 5, 2], Activation::Relu, Activation::Identity).unwrap();
        assert_eq!(net.forward(&[1.0, -2.0, 3.0]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn identity_layer_passes_input() {
        let mut net = DenseNet::zeros(&[3, 3], Activation::Relu, Activation::Identity).unwrap();
        net.layers_mut()[0].weight = Array2::eye(3);
        assert_eq!(net.forward(&[1.5, -2.0, 0.25]).unwrap(), vec![1.5, -2.0, 0.25]);
    }

    #[test]
    fn forward_is_deterministic() {
        let net = DenseNet::new(&[4, 8, 8, 2], Activation::Tanh, Activation::Identity, &mut rng(1))
            .unwrap();
        let x = [0.1, 0.2, -0.3, 0.9];
        assert_eq!(net.forward(&x).unwrap(), net.forward(&x).unwrap());
        assert!(matches!(net.forward(&[1.0]), Err(NnError::Dimension { expected: 4, got: 1 })));
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let net = DenseNet::new(&[3, 6, 2], Activation::Relu, Activation::Identity, &mut rng(2))
            .unwrap();
        let x = Array2::from_shape_vec((2, 3), vec![0.3, -0.1, 0.5, 1.0, 2.0, -1.0]).unwrap();
        let cache = net.forward_cached(x.view()).unwrap();
        let (g, dx) = net.backward(&cache, Array2::zeros((2, 2)).view()).unwrap();
        assert!(g.flat().iter().all(|&v| v == 0.0));
        assert!(dx.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn linear_net_input_gradient_is_transpose_product() {
        let net = DenseNet::new(&[3, 2], Activation::Relu, Activation::Identity, &mut rng(3))
            .unwrap();
        let x = Array2::from_shape_vec((1, 3), vec![0.3, -0.1, 0.5]).unwrap();
        let up = Array2::from_shape_vec((1, 2), vec![0.7, -1.3]).unwrap();
        let cache = net.forward_cached(x.view()).unwrap();
        let (_, dx) = net.backward(&cache, up.view()).unwrap();
        let expected = up.dot(&net.layers()[0].weight);
        assert_eq!(dx, expected);
    }

    /// Central differences of `sum(upstream * f(x))` against backward.
    pub(crate) fn finite_difference_check(net: &DenseNet, x: &Array2<f64>, up: &Array2<f64>) -> f64 {
        let cache = net.forward_cached(x.view()).unwrap();
        let (g, _) = net.backward(&cache, up.view()).unwrap();
        let analytic = g.flat();
        let base = net.params_flat();
        let h = 1e-5;
        let mut worst: f64 = 0.0;
        let mut probe = net.clone();
        for i in 0..base.len() {
            let mut p = base.clone();
            p[i] += h;
            probe.set_params_flat(&p).unwrap();
            let plus = (&probe.forward_batch(x.view()).unwrap() * up).sum();
            p[i] -= 2.0 * h;
            probe.set_params_flat(&p).unwrap();
            let minus = (&probe.forward_batch(x.view()).unwrap() * up).sum();
            let numeric = (plus - minus) / (2.0 * h);
            let denom = numeric.abs().max(analytic[i].abs()).max(1e-6);
            worst = worst.max((numeric - analytic[i]).abs() / denom);
        }
        worst
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut r = rng(4);
        for act in [Activation::Tanh, Activation::Relu] {
            for out in [Activation::Identity, Activation::Tanh] {
                let net = DenseNet::new(&[3, 7, 5, 2], act, out, &mut r).unwrap();
                let x = Array2::from_shape_simple_fn((4, 3), || r.random_range(-1.0..1.0));
                let up = Array2::from_shape_simple_fn((4, 2), || r.random_range(-1.0..1.0));
                let err = finite_difference_check(&net, &x, &up);
                assert!(err < 1e-4, "{act:?}/{out:?}: {err}");
            }
        }
    }

    #[test]
    fn soft_update_examples() {
        let mut r = rng(5);
        let online = DenseNet::new(&[2, 3, 1], Activation::Relu, Activation::Identity, &mut r)
            .unwrap();
        let original = DenseNet::new(&[2, 3, 1], Activation::Relu, Activation::Identity, &mut r)
            .unwrap();

        let mut t = original.clone();
        soft_update(&mut t, &online, 1.0).unwrap();
        assert_eq!(t, online);

        let mut t = original.clone();
        soft_update(&mut t, &online, 0.0).unwrap();
        assert_eq!(t, original);

        let mut zero = DenseNet::zeros(&[2, 3, 1], Activation::Relu, Activation::Identity).unwrap();
        let mut two = zero.clone();
        two.set_params_flat(&vec![2.0; two.param_count()]).unwrap();
        soft_update(&mut zero, &two, 0.5).unwrap();
        assert!(zero.params_flat().iter().all(|&v| v == 1.0));

        let other = DenseNet::zeros(&[2, 4, 1], Activation::Relu, Activation::Identity).unwrap();
        assert!(matches!(soft_update(&mut zero, &other, 0.5), Err(NnError::Architecture(..))));
    }

    #[test]
    fn soft_update_contracts_distance() {
        let mut r = rng(6);
        for _ in 0..50 {
            let online = DenseNet::new(&[3, 4, 2], Activation::Relu, Activation::Identity, &mut r)
                .unwrap();
            let mut target = DenseNet::new(&[3, 4, 2], Activation::Relu, Activation::Identity, &mut r)
                .unwrap();
            let dist = |a: &DenseNet, b: &DenseNet| {
                a.params_flat().iter().zip(b.params_flat()).map(|(x, y)| (x - y).powi(2)).sum::<f64>()
            };
            let before = dist(&target, &online);
            let tau = r.random_range(0.01..0.99);
            soft_update(&mut target, &online, tau).unwrap();
            assert!(dist(&target, &online) < before);
        }
    }
}
