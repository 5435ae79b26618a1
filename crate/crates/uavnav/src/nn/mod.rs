//! Minimal dense network engine: forward with inverted dropout, exact
//! backward, Adam, and the two losses the pipeline trains with. No external
//! ML dependency; everything is plain `f64` vectors.

pub mod io;
pub mod loss;
mod train;

pub use train::{adam_step, AdamState, TrainConfig};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Identity,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Identity => x,
        }
    }

    fn derivative(self, pre_act: f64) -> f64 {
        match self {
            Activation::Relu => {
                if pre_act > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }
}

/// How dropout behaves during a forward pass.
///
/// Dropout masks are *inverted*: surviving units are scaled by
/// `1/(1-rate)` at mask time, so a dropout-off pass needs no rescaling.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ForwardMode {
    /// Training pass; dropout active.
    TrainDropout,
    /// Stochastic inference pass (Monte Carlo dropout); dropout active.
    EvalDropoutOn,
    /// Deterministic inference; dropout disabled.
    EvalDropoutOff,
}

impl ForwardMode {
    fn dropout_active(self) -> bool {
        !matches!(self, ForwardMode::EvalDropoutOff)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Layer {
    /// Row-major `[out_dim x in_dim]`.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub in_dim: usize,
    pub out_dim: usize,
    pub activation: Activation,
}

impl Layer {
    fn matvec_into(&self, input: &[f64], out: &mut Vec<f64>) {
        out.clear();
        for o in 0..self.out_dim {
            let row = &self.weights[o * self.in_dim..(o + 1) * self.in_dim];
            let mut acc = self.bias[o];
            for (w, x) in row.iter().zip(input.iter()) {
                acc += w * x;
            }
            out.push(acc);
        }
    }
}

/// Where dropout masks apply within the network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DropoutPlacement {
    /// After every hidden activation.
    #[default]
    AllHidden,
    /// A single dropout layer after the last hidden activation.
    LastHiddenOnly,
}

/// Fully-connected feed-forward network with per-layer activations and a
/// single dropout rate applied after hidden activations per
/// [`DropoutPlacement`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DenseNet {
    layers: Vec<Layer>,
    dropout_rate: f64,
    #[serde(default)]
    dropout_placement: DropoutPlacement,
}

/// Per-layer record of a forward pass; enough for an exact backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    traces: Vec<LayerTrace>,
}

#[derive(Debug, Clone)]
struct LayerTrace {
    /// Input fed to this layer (post-dropout output of the previous one).
    input: Vec<f64>,
    /// Pre-activation values.
    pre_act: Vec<f64>,
    /// Dropout multiplier applied to this layer's activation
    /// (`0` or `1/(1-rate)`); `None` when no dropout was applied.
    mask: Option<Vec<f64>>,
}

/// Gradients with the same shapes as the network parameters.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub layers: Vec<LayerGrads>,
}

#[derive(Debug, Clone)]
pub struct LayerGrads {
    pub d_weights: Vec<f64>,
    pub d_bias: Vec<f64>,
}

impl Gradients {
    pub fn zeros_like(net: &DenseNet) -> Self {
        Gradients {
            layers: net
                .layers
                .iter()
                .map(|l| LayerGrads {
                    d_weights: vec![0.0; l.weights.len()],
                    d_bias: vec![0.0; l.bias.len()],
                })
                .collect(),
        }
    }

    pub fn accumulate(&mut self, other: &Gradients) {
        for (a, b) in self.layers.iter_mut().zip(other.layers.iter()) {
            for (x, y) in a.d_weights.iter_mut().zip(b.d_weights.iter()) {
                *x += y;
            }
            for (x, y) in a.d_bias.iter_mut().zip(b.d_bias.iter()) {
                *x += y;
            }
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for l in &mut self.layers {
            for x in &mut l.d_weights {
                *x *= factor;
            }
            for x in &mut l.d_bias {
                *x *= factor;
            }
        }
    }
}

impl DenseNet {
    /// Zero-initialized network. `dims` lists layer widths input-first, so
    /// `dims.len() == activations.len() + 1`.
    pub fn zeros(dims: &[usize], activations: &[Activation], dropout_rate: f64) -> Result<Self> {
        if dims.len() < 2 || activations.len() != dims.len() - 1 {
            return Err(Error::invalid(format!(
                "layer dims/activations mismatch: {} dims, {} activations",
                dims.len(),
                activations.len()
            )));
        }
        if !(0.0..1.0).contains(&dropout_rate) {
            return Err(Error::invalid("dropout_rate must be in [0,1)"));
        }
        let layers = dims
            .windows(2)
            .zip(activations.iter())
            .map(|(w, &activation)| Layer {
                weights: vec![0.0; w[0] * w[1]],
                bias: vec![0.0; w[1]],
                in_dim: w[0],
                out_dim: w[1],
                activation,
            })
            .collect();
        Ok(DenseNet {
            layers,
            dropout_rate,
            dropout_placement: DropoutPlacement::default(),
        })
    }

    /// He-style random initialization (scaled by fan-in), biases at zero.
    pub fn init(
        dims: &[usize],
        activations: &[Activation],
        dropout_rate: f64,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        let mut net = Self::zeros(dims, activations, dropout_rate)?;
        for layer in &mut net.layers {
            let gain = match layer.activation {
                Activation::Relu => 2.0_f64,
                Activation::Identity => 1.0,
            };
            let std = (gain / layer.in_dim as f64).sqrt();
            for w in &mut layer.weights {
                *w = std * standard_normal(rng);
            }
        }
        Ok(net)
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn dropout_rate(&self) -> f64 {
        self.dropout_rate
    }

    pub fn dropout_placement(&self) -> DropoutPlacement {
        self.dropout_placement
    }

    pub fn set_dropout_placement(&mut self, placement: DropoutPlacement) {
        self.dropout_placement = placement;
    }

    fn dropout_applies(&self, layer_idx: usize) -> bool {
        let last = self.layers.len() - 1;
        match self.dropout_placement {
            DropoutPlacement::AllHidden => layer_idx != last,
            DropoutPlacement::LastHiddenOnly => last > 0 && layer_idx == last - 1,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().out_dim
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .sum()
    }

    pub fn validate(&self) -> Result<()> {
        for pair in self.layers.windows(2) {
            if pair[0].out_dim != pair[1].in_dim {
                return Err(Error::Format(format!(
                    "layer dimensions do not chain: {} -> {}",
                    pair[0].out_dim, pair[1].in_dim
                )));
            }
        }
        for l in &self.layers {
            if l.weights.len() != l.in_dim * l.out_dim || l.bias.len() != l.out_dim {
                return Err(Error::Format("layer buffer sizes inconsistent".into()));
            }
            if !l.weights.iter().chain(l.bias.iter()).all(|w| w.is_finite()) {
                return Err(Error::NonFinite("network weights"));
            }
        }
        Ok(())
    }

    /// Forward pass. `rng` is required whenever dropout is active
    /// (`dropout_rate > 0` and mode is not `EvalDropoutOff`).
    pub fn forward(
        &self,
        input: &[f64],
        mode: ForwardMode,
        mut rng: Option<&mut ChaCha8Rng>,
    ) -> Result<(Vec<f64>, ForwardCache)> {
        self.check_input(input)?;
        let dropout_on = mode.dropout_active() && self.dropout_rate > 0.0;
        if dropout_on && rng.is_none() {
            return Err(Error::contract(
                "forward with dropout active requires an RNG",
            ));
        }

        let keep = 1.0 - self.dropout_rate;
        let mut traces = Vec::with_capacity(self.layers.len());
        let mut activation: Vec<f64> = input.to_vec();

        for (idx, layer) in self.layers.iter().enumerate() {
            let mut pre_act = Vec::with_capacity(layer.out_dim);
            layer.matvec_into(&activation, &mut pre_act);
            let mut out: Vec<f64> = pre_act.iter().map(|&z| layer.activation.apply(z)).collect();

            let mask = if dropout_on && self.dropout_applies(idx) {
                let rng = rng.as_deref_mut().unwrap();
                let mask: Vec<f64> = (0..layer.out_dim)
                    .map(|_| {
                        if rng.random::<f64>() < self.dropout_rate {
                            0.0
                        } else {
                            1.0 / keep
                        }
                    })
                    .collect();
                for (o, m) in out.iter_mut().zip(mask.iter()) {
                    *o *= m;
                }
                Some(mask)
            } else {
                None
            };

            traces.push(LayerTrace {
                input: std::mem::replace(&mut activation, out),
                pre_act,
                mask,
            });
        }

        Ok((activation, ForwardCache { traces }))
    }

    /// Forward pass without keeping a cache (inference hot path).
    pub fn infer(
        &self,
        input: &[f64],
        mode: ForwardMode,
        mut rng: Option<&mut ChaCha8Rng>,
    ) -> Result<Vec<f64>> {
        self.check_input(input)?;
        let dropout_on = mode.dropout_active() && self.dropout_rate > 0.0;
        if dropout_on && rng.is_none() {
            return Err(Error::contract(
                "forward with dropout active requires an RNG",
            ));
        }
        let keep = 1.0 - self.dropout_rate;
        let mut activation: Vec<f64> = input.to_vec();
        let mut scratch: Vec<f64> = Vec::new();
        for (idx, layer) in self.layers.iter().enumerate() {
            layer.matvec_into(&activation, &mut scratch);
            for z in &mut scratch {
                *z = layer.activation.apply(*z);
            }
            if dropout_on && self.dropout_applies(idx) {
                let rng = rng.as_deref_mut().unwrap();
                for z in &mut scratch {
                    if rng.random::<f64>() < self.dropout_rate {
                        *z = 0.0;
                    } else {
                        *z /= keep;
                    }
                }
            }
            std::mem::swap(&mut activation, &mut scratch);
        }
        Ok(activation)
    }

    /// Exact backward pass through the cached forward, honoring its dropout
    /// masks. `output_grad` is the loss gradient w.r.t. the network output.
    pub fn backward(&self, cache: &ForwardCache, output_grad: &[f64]) -> Result<Gradients> {
        if cache.traces.len() != self.layers.len() {
            return Err(Error::contract("cache does not match network depth"));
        }
        for (trace, layer) in cache.traces.iter().zip(self.layers.iter()) {
            if trace.input.len() != layer.in_dim || trace.pre_act.len() != layer.out_dim {
                return Err(Error::contract("cache does not match layer shapes"));
            }
        }
        if output_grad.len() != self.output_dim() {
            return Err(Error::ShapeMismatch {
                what: "output_grad",
                expected: self.output_dim(),
                got: output_grad.len(),
            });
        }

        let mut grads = Gradients::zeros_like(self);
        let mut upstream: Vec<f64> = output_grad.to_vec();

        for (idx, layer) in self.layers.iter().enumerate().rev() {
            let trace = &cache.traces[idx];
            if let Some(mask) = &trace.mask {
                for (g, m) in upstream.iter_mut().zip(mask.iter()) {
                    *g *= m;
                }
            }
            let lg = &mut grads.layers[idx];
            let mut downstream = vec![0.0; layer.in_dim];
            for o in 0..layer.out_dim {
                let gz = upstream[o] * layer.activation.derivative(trace.pre_act[o]);
                lg.d_bias[o] = gz;
                let row = &mut lg.d_weights[o * layer.in_dim..(o + 1) * layer.in_dim];
                let wrow = &layer.weights[o * layer.in_dim..(o + 1) * layer.in_dim];
                for i in 0..layer.in_dim {
                    row[i] = gz * trace.input[i];
                    downstream[i] += wrow[i] * gz;
                }
            }
            upstream = downstream;
        }
        Ok(grads)
    }

    fn check_input(&self, input: &[f64]) -> Result<()> {
        if input.len() != self.input_dim() {
            return Err(Error::ShapeMismatch {
                what: "network input",
                expected: self.input_dim(),
                got: input.len(),
            });
        }
        if !input.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("network input"));
        }
        Ok(())
    }
}

/// One standard-normal draw. All Gaussian sampling in the crate funnels
/// through here so streams stay reproducible across call sites.
pub fn standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    use rand_distr::{Distribution, StandardNormal};
    StandardNormal.sample(rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeds;

    fn one_layer(w: f64, b: f64, act: Activation) -> DenseNet {
        let mut net = DenseNet::zeros(&[1, 1], &[act], 0.0).unwrap();
        net.layers_mut()[0].weights[0] = w;
        net.layers_mut()[0].bias[0] = b;
        net
    }

    #[test]
    fn zero_weight_net_outputs_bias() {
        let mut net = DenseNet::zeros(&[3, 2], &[Activation::Identity], 0.0).unwrap();
        net.layers_mut()[0].bias.copy_from_slice(&[0.5, -1.25]);
        let (out, _) = net
            .forward(&[10.0, -3.0, 0.1], ForwardMode::EvalDropoutOff, None)
            .unwrap();
        assert_eq!(out, vec![0.5, -1.25]);
    }

    #[test]
    fn relu_single_layer_hand_value() {
        // W=[[2]], b=[1], relu, input [3] -> 7
        let net = one_layer(2.0, 1.0, Activation::Relu);
        let (out, _) = net
            .forward(&[3.0], ForwardMode::EvalDropoutOff, None)
            .unwrap();
        assert_eq!(out, vec![7.0]);
    }

    #[test]
    fn zero_dropout_modes_are_bit_identical() {
        let mut rng = seeds::rng_from(3);
        let net = DenseNet::init(
            &[4, 6, 2],
            &[Activation::Relu, Activation::Identity],
            0.0,
            &mut rng,
        )
        .unwrap();
        let input = [0.3, -1.0, 2.0, 0.7];
        let mut r1 = seeds::rng_from(9);
        let (on, _) = net
            .forward(&input, ForwardMode::EvalDropoutOn, Some(&mut r1))
            .unwrap();
        let (off, _) = net.forward(&input, ForwardMode::EvalDropoutOff, None).unwrap();
        assert_eq!(on, off);
    }

    #[test]
    fn dropout_requires_rng() {
        let net = DenseNet::zeros(&[2, 2, 1], &[Activation::Relu, Activation::Identity], 0.5)
            .unwrap();
        let err = net.forward(&[1.0, 1.0], ForwardMode::EvalDropoutOn, None);
        assert!(matches!(err, Err(Error::Contract(_))));
    }

    #[test]
    fn input_shape_and_finiteness_checked() {
        let net = one_layer(1.0, 0.0, Activation::Identity);
        assert!(matches!(
            net.forward(&[1.0, 2.0], ForwardMode::EvalDropoutOff, None),
            Err(Error::ShapeMismatch { .. })
        ));
        assert!(matches!(
            net.forward(&[f64::NAN], ForwardMode::EvalDropoutOff, None),
            Err(Error::NonFinite(_))
        ));
    }

    #[test]
    fn backward_identity_hand_chain_rule() {
        // W=[[1]], b=[0], input [x], output_grad [g] -> dW=[[g*x]], db=[g]
        let net = one_layer(1.0, 0.0, Activation::Identity);
        let (_, cache) = net.forward(&[2.5], ForwardMode::EvalDropoutOff, None).unwrap();
        let grads = net.backward(&cache, &[3.0]).unwrap();
        assert_eq!(grads.layers[0].d_weights, vec![3.0 * 2.5]);
        assert_eq!(grads.layers[0].d_bias, vec![3.0]);
    }

    #[test]
    fn zero_output_grad_gives_zero_gradients() {
        let mut rng = seeds::rng_from(5);
        let net = DenseNet::init(
            &[3, 5, 2],
            &[Activation::Relu, Activation::Identity],
            0.0,
            &mut rng,
        )
        .unwrap();
        let (_, cache) = net
            .forward(&[0.2, 0.4, -0.6], ForwardMode::EvalDropoutOff, None)
            .unwrap();
        let grads = net.backward(&cache, &[0.0, 0.0]).unwrap();
        for l in &grads.layers {
            assert!(l.d_weights.iter().all(|&g| g == 0.0));
            assert!(l.d_bias.iter().all(|&g| g == 0.0));
        }
    }

    #[test]
    fn stale_cache_is_rejected() {
        let net_a = one_layer(1.0, 0.0, Activation::Identity);
        let net_b =
            DenseNet::zeros(&[2, 2, 1], &[Activation::Relu, Activation::Identity], 0.0).unwrap();
        let (_, cache) = net_a.forward(&[1.0], ForwardMode::EvalDropoutOff, None).unwrap();
        assert!(matches!(
            net_b.backward(&cache, &[1.0]),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn inverted_dropout_mean_matches_dropout_off() {
        // Empirical mean over masks of a hidden activation equals the
        // dropout-off activation, within 3 standard errors.
        let mut rng = seeds::rng_from(11);
        let net = DenseNet::init(
            &[2, 4, 1],
            &[Activation::Relu, Activation::Identity],
            0.35,
            &mut rng,
        )
        .unwrap();
        let input = [0.8, -0.2];
        let (off, _) = net.forward(&input, ForwardMode::EvalDropoutOff, None).unwrap();
        let n = 20_000;
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        let mut mask_rng = seeds::rng_from(12);
        for _ in 0..n {
            let (out, _) = net
                .forward(&input, ForwardMode::EvalDropoutOn, Some(&mut mask_rng))
                .unwrap();
            sum += out[0];
            sumsq += out[0] * out[0];
        }
        let mean = sum / n as f64;
        let var = (sumsq / n as f64 - mean * mean).max(0.0);
        let se = (var / n as f64).sqrt();
        assert!(
            (mean - off[0]).abs() <= 3.0 * se + 1e-12,
            "mean {mean} vs off {} (se {se})",
            off[0]
        );
    }

    #[test]
    fn infer_matches_forward() {
        let mut rng = seeds::rng_from(21);
        let net = DenseNet::init(
            &[4, 8, 3],
            &[Activation::Relu, Activation::Identity],
            0.2,
            &mut rng,
        )
        .unwrap();
        let input = [0.1, 0.2, -0.3, 0.4];
        // Same RNG stream -> identical masks -> identical outputs.
        let mut r1 = seeds::rng_from(77);
        let mut r2 = seeds::rng_from(77);
        let (a, _) = net
            .forward(&input, ForwardMode::EvalDropoutOn, Some(&mut r1))
            .unwrap();
        let b = net
            .infer(&input, ForwardMode::EvalDropoutOn, Some(&mut r2))
            .unwrap();
        assert_eq!(a, b);
    }
}
