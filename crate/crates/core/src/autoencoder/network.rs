use std::sync::atomic::{AtomicU64, Ordering};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::activation::{Activation, BCE_EPS};
use crate::error::{Error, Result};

pub const LATENT_DIM: usize = 3;

/// Geometry of one dense layer inside the flat parameter vector. Weights are
/// `outputs x inputs`, row-major, followed by the bias.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerShape {
    pub inputs: usize,
    pub outputs: usize,
    pub activation: Activation,
}

impl LayerShape {
    fn n_params(&self) -> usize {
        self.outputs * (self.inputs + 1)
    }
}

static NEXT_STATE_ID: AtomicU64 = AtomicU64::new(1);

fn fresh_state_id() -> u64 {
    NEXT_STATE_ID.fetch_add(1, Ordering::Relaxed)
}

/// Fully connected autoencoder. The first `encoder_depth` layers map the
/// input to the bottleneck; the rest decode back to input width.
#[derive(Debug)]
pub struct MlpNetwork {
    layers: Vec<LayerShape>,
    offsets: Vec<usize>,
    params: Vec<f64>,
    encoder_depth: usize,
    seed: u64,
    // changes whenever parameters change; ties a forward cache to one state
    state_id: u64,
}

impl Clone for MlpNetwork {
    fn clone(&self) -> Self {
        MlpNetwork {
            layers: self.layers.clone(),
            offsets: self.offsets.clone(),
            params: self.params.clone(),
            encoder_depth: self.encoder_depth,
            seed: self.seed,
            state_id: fresh_state_id(),
        }
    }
}

impl PartialEq for MlpNetwork {
    fn eq(&self, other: &Self) -> bool {
        self.layers == other.layers
            && self.encoder_depth == other.encoder_depth
            && self.seed == other.seed
            && self.params.len() == other.params.len()
            && self
                .params
                .iter()
                .zip(&other.params)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

/// Per-layer activations kept by [`MlpNetwork::forward`] for backprop.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    n: usize,
    state_id: u64,
    /// `activations[0]` is the input batch; `activations[l + 1]` is the
    /// output of layer `l`.
    activations: Vec<Vec<f64>>,
    pre_activations: Vec<Vec<f64>>,
}

impl ForwardCache {
    pub fn output(&self) -> &[f64] {
        self.activations.last().expect("cache has an output")
    }

    pub fn rows(&self) -> usize {
        self.n
    }
}

/// Gradients laid out exactly like the network's flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub flat: Vec<f64>,
    pub loss: f64,
}

/// Default mirrored sizes for input width `p`: encoder hidden widths
/// 24, 16, 8, 5 at `p = 28`, scaled proportionally otherwise and never
/// narrower than the bottleneck.
pub fn default_architecture(p: usize) -> Vec<usize> {
    let hidden: Vec<usize> = [24.0, 16.0, 8.0, 5.0]
        .iter()
        .map(|h: &f64| ((h * p as f64 / 28.0).round() as usize).max(LATENT_DIM))
        .collect();
    let mut enc = vec![p];
    enc.extend(&hidden);
    enc.push(LATENT_DIM);
    let mut sizes = enc.clone();
    sizes.extend(enc.iter().rev().skip(1));
    sizes
}

fn validate_sizes(sizes: &[usize]) -> Result<()> {
    if sizes.len() < 3 || sizes.len().is_multiple_of(2) {
        return Err(Error::Architecture(format!(
            "need an odd number (>= 3) of layer sizes, got {sizes:?}"
        )));
    }
    if sizes.contains(&0) {
        return Err(Error::Architecture(format!("zero-width layer in {sizes:?}")));
    }
    if sizes[0] != sizes[sizes.len() - 1] {
        return Err(Error::Architecture(format!(
            "input width {} differs from output width {}",
            sizes[0],
            sizes[sizes.len() - 1]
        )));
    }
    if sizes[sizes.len() / 2] != LATENT_DIM {
        return Err(Error::Architecture(format!(
            "bottleneck must have {LATENT_DIM} units, got {}",
            sizes[sizes.len() / 2]
        )));
    }
    Ok(())
}

impl MlpNetwork {
    /// LeCun-normal initialization (variance `1 / fan_in`), zero biases.
    /// Hidden layers use SELU and the reconstruction layer uses sigmoid.
    pub fn init(sizes: &[usize], seed: u64) -> Result<Self> {
        validate_sizes(sizes)?;
        let n_layers = sizes.len() - 1;
        let layers: Vec<LayerShape> = (0..n_layers)
            .map(|l| LayerShape {
                inputs: sizes[l],
                outputs: sizes[l + 1],
                activation: if l + 1 == n_layers {
                    Activation::Sigmoid
                } else {
                    Activation::Selu
                },
            })
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Vec::new();
        for layer in &layers {
            let normal = Normal::new(0.0, (1.0 / layer.inputs as f64).sqrt()).expect("valid std");
            params.extend((0..layer.inputs * layer.outputs).map(|_| normal.sample(&mut rng)));
            params.extend(std::iter::repeat_n(0.0, layer.outputs));
        }
        MlpNetwork::from_parts(layers, params, n_layers / 2, seed)
    }

    /// Assembles a network from explicit layers and parameters.
    pub fn from_parts(
        layers: Vec<LayerShape>,
        params: Vec<f64>,
        encoder_depth: usize,
        seed: u64,
    ) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Architecture("network has no layers".into()));
        }
        for w in layers.windows(2) {
            if w[0].outputs != w[1].inputs {
                return Err(Error::Architecture(format!(
                    "layer of width {} feeds a layer expecting {}",
                    w[0].outputs, w[1].inputs
                )));
            }
        }
        if layers.iter().any(|l| l.inputs == 0 || l.outputs == 0) {
            return Err(Error::Architecture("zero-width layer".into()));
        }
        if layers.last().map(|l| l.activation) != Some(Activation::Sigmoid) {
            return Err(Error::Architecture(
                "reconstruction layer must use sigmoid".into(),
            ));
        }
        if encoder_depth == 0 || encoder_depth > layers.len() {
            return Err(Error::Architecture(format!(
                "encoder depth {encoder_depth} exceeds {} layers",
                layers.len()
            )));
        }
        let mut offsets = Vec::with_capacity(layers.len());
        let mut total = 0;
        for l in &layers {
            offsets.push(total);
            total += l.n_params();
        }
        if params.len() != total {
            return Err(Error::Architecture(format!(
                "expected {total} parameters, got {}",
                params.len()
            )));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::Numeric("non-finite network parameter".into()));
        }
        Ok(MlpNetwork {
            layers,
            offsets,
            params,
            encoder_depth,
            seed,
            state_id: fresh_state_id(),
        })
    }

    pub fn layers(&self) -> &[LayerShape] {
        &self.layers
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut s = vec![self.layers[0].inputs];
        s.extend(self.layers.iter().map(|l| l.outputs));
        s
    }

    pub fn input_width(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn latent_width(&self) -> usize {
        self.layers[self.encoder_depth - 1].outputs
    }

    pub fn encoder_depth(&self) -> usize {
        self.encoder_depth
    }

    pub fn decoder_depth(&self) -> usize {
        self.layers.len() - self.encoder_depth
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    /// Mutable access to the flat parameters; invalidates forward caches.
    pub fn params_mut(&mut self) -> &mut [f64] {
        self.state_id = fresh_state_id();
        &mut self.params
    }

    pub fn weights(&self, layer: usize) -> &[f64] {
        let l = &self.layers[layer];
        let o = self.offsets[layer];
        &self.params[o..o + l.inputs * l.outputs]
    }

    pub fn bias(&self, layer: usize) -> &[f64] {
        let l = &self.layers[layer];
        let o = self.offsets[layer] + l.inputs * l.outputs;
        &self.params[o..o + l.outputs]
    }

    fn run_layers(&self, range: std::ops::Range<usize>, input: &[f64], n: usize, mut keep: impl FnMut(Vec<f64>, Vec<f64>)) -> Vec<f64> {
        let mut a = input.to_vec();
        for li in range {
            let l = self.layers[li];
            let w = self.weights(li);
            let b = self.bias(li);
            let mut z = vec![0.0; n * l.outputs];
            for r in 0..n {
                let x = &a[r * l.inputs..(r + 1) * l.inputs];
                for o in 0..l.outputs {
                    let row = &w[o * l.inputs..(o + 1) * l.inputs];
                    let mut s = b[o];
                    for (wi, xi) in row.iter().zip(x) {
                        s += wi * xi;
                    }
                    z[r * l.outputs + o] = s;
                }
            }
            let out: Vec<f64> = z.iter().map(|&v| l.activation.apply(v)).collect();
            keep(z, a);
            a = out;
        }
        a
    }

    fn check_width(&self, data: &[f64], width: usize) -> Result<usize> {
        if !data.len().is_multiple_of(width) {
            return Err(Error::Shape(format!(
                "{} values are not a whole number of rows of width {width}",
                data.len()
            )));
        }
        Ok(data.len() / width)
    }

    /// Full pass over a row-major batch; returns the reconstruction cache.
    pub fn forward(&self, batch: &[f64]) -> Result<ForwardCache> {
        let n = self.check_width(batch, self.input_width())?;
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        let mut pre = Vec::with_capacity(self.layers.len());
        let out = self.run_layers(0..self.layers.len(), batch, n, |z, a| {
            pre.push(z);
            activations.push(a);
        });
        activations.push(out);
        Ok(ForwardCache {
            n,
            state_id: self.state_id,
            activations,
            pre_activations: pre,
        })
    }

    pub fn reconstruct(&self, batch: &[f64]) -> Result<Vec<f64>> {
        let n = self.check_width(batch, self.input_width())?;
        Ok(self.run_layers(0..self.layers.len(), batch, n, |_, _| {}))
    }

    /// Bottleneck activations for a row-major batch.
    pub fn encode_rows(&self, batch: &[f64]) -> Result<Vec<f64>> {
        let n = self.check_width(batch, self.input_width())?;
        Ok(self.run_layers(0..self.encoder_depth, batch, n, |_, _| {}))
    }

    pub fn decode_rows(&self, latent: &[f64]) -> Result<Vec<f64>> {
        let n = self.check_width(latent, self.latent_width())?;
        Ok(self.run_layers(self.encoder_depth..self.layers.len(), latent, n, |_, _| {}))
    }

    /// Exact gradients of the mean binary cross entropy between the
    /// reconstruction and the input batch.
    pub fn backward(&self, batch: &[f64], cache: &ForwardCache) -> Result<Gradients> {
        if cache.state_id != self.state_id {
            return Err(Error::StaleCache("parameters changed since forward".into()));
        }
        if cache.activations[0].len() != batch.len()
            || cache.activations[0]
                .iter()
                .zip(batch)
                .any(|(a, b)| a.to_bits() != b.to_bits())
        {
            return Err(Error::StaleCache("cache was computed on a different batch".into()));
        }
        let n = cache.n;
        if n == 0 {
            return Err(Error::InvalidArgument("gradient of an empty batch".into()));
        }
        let out = cache.output();
        let loss = super::activation::bce_loss(out, batch)?;
        let scale = 1.0 / out.len() as f64;

        // sigmoid + BCE: dL/dz = (p - t) / N inside the clamp, 0 outside
        let mut delta: Vec<f64> = out
            .iter()
            .zip(batch)
            .map(|(&p, &t)| {
                if (BCE_EPS..=1.0 - BCE_EPS).contains(&p) {
                    (p - t) * scale
                } else {
                    0.0
                }
            })
            .collect();

        let mut grad = vec![0.0; self.params.len()];
        for li in (0..self.layers.len()).rev() {
            let l = self.layers[li];
            let a_in = &cache.activations[li];
            let off = self.offsets[li];
            let (gw, gb) = grad[off..off + l.n_params()].split_at_mut(l.inputs * l.outputs);
            for r in 0..n {
                let d = &delta[r * l.outputs..(r + 1) * l.outputs];
                let x = &a_in[r * l.inputs..(r + 1) * l.inputs];
                for o in 0..l.outputs {
                    let dv = d[o];
                    gb[o] += dv;
                    let row = &mut gw[o * l.inputs..(o + 1) * l.inputs];
                    for (g, xi) in row.iter_mut().zip(x) {
                        *g += dv * xi;
                    }
                }
            }
            if li == 0 {
                break;
            }
            let below = self.layers[li - 1];
            let w = self.weights(li);
            let z_below = &cache.pre_activations[li - 1];
            let mut next = vec![0.0; n * l.inputs];
            for r in 0..n {
                let d = &delta[r * l.outputs..(r + 1) * l.outputs];
                for o in 0..l.outputs {
                    let dv = d[o];
                    let row = &w[o * l.inputs..(o + 1) * l.inputs];
                    let acc = &mut next[r * l.inputs..(r + 1) * l.inputs];
                    for (s, wi) in acc.iter_mut().zip(row) {
                        *s += dv * wi;
                    }
                }
                for i in 0..l.inputs {
                    let k = r * l.inputs + i;
                    next[k] *= below.activation.derivative(z_below[k], a_in[k]);
                }
            }
            delta = next;
        }
        Ok(Gradients { flat: grad, loss })
    }
}
