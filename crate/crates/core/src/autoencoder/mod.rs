//! Fully connected SELU autoencoder trained with Adam on binary cross
//! entropy, used to compress quantile-coded features to a 3-dimensional
//! latent representation.
//!
//! Training only ever sees a [`NormalizedMatrix`]; survival outcomes have no
//! path into this module.

mod activation;
mod adam;
mod network;

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{parse_err, Error, Result};
use crate::matrix::FeatureMatrix;
use crate::normalize::NormalizedMatrix;

pub use activation::{bce_loss, selu, sigmoid, Activation, BCE_EPS, SELU_ALPHA, SELU_LAMBDA};
pub use adam::{AdamParams, AdamState};
pub use network::{default_architecture, ForwardCache, Gradients, LayerShape, MlpNetwork, LATENT_DIM};

/// n x 3 bottleneck activations, one row per patient.
pub type LatentMatrix = FeatureMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Loss {
    Bce,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    /// Seeds mini-batch shuffling.
    pub seed: u64,
    pub loss: Loss,
    pub adam: AdamParams,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 400,
            batch_size: 64,
            seed: 0,
            loss: Loss::Bce,
            adam: AdamParams::default(),
        }
    }
}

impl TrainConfig {
    pub fn with_seed(seed: u64) -> Self {
        TrainConfig {
            seed,
            ..TrainConfig::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::InvalidArgument("epochs must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidArgument("batch size must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Trained {
    pub net: MlpNetwork,
    /// Sample-weighted mean mini-batch loss of each epoch.
    pub losses: Vec<f64>,
}

/// Runs `epochs * ceil(n / batch)` Adam steps over seeded shuffles of the
/// rows. Identical inputs give bitwise-identical results.
pub fn train(mut net: MlpNetwork, data: &NormalizedMatrix, cfg: &TrainConfig) -> Result<Trained> {
    cfg.validate()?;
    let m = data.matrix();
    let (n, p) = (m.nrows(), m.ncols());
    if n == 0 {
        return Err(Error::InvalidArgument("cannot train on an empty matrix".into()));
    }
    if p != net.input_width() {
        return Err(Error::Shape(format!(
            "data has {p} columns, network expects {}",
            net.input_width()
        )));
    }
    let mut adam = AdamState::new(net.params().len(), cfg.adam)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..n).collect();
    let mut losses = Vec::with_capacity(cfg.epochs);
    let mut batch = Vec::with_capacity(cfg.batch_size * p);

    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            batch.clear();
            for &i in chunk {
                batch.extend_from_slice(m.row(i));
            }
            let cache = net.forward(&batch)?;
            let grads = net.backward(&batch, &cache)?;
            adam.step(net.params_mut(), &grads.flat)?;
            epoch_loss += grads.loss * chunk.len() as f64;
        }
        let epoch_loss = epoch_loss / n as f64;
        if !epoch_loss.is_finite() {
            return Err(Error::Numeric("training loss diverged".into()));
        }
        losses.push(epoch_loss);
    }
    if net.params().iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite parameters after training".into()));
    }
    Ok(Trained { net, losses })
}

/// Mean binary cross entropy of the reconstructions of `data`.
pub fn reconstruction_loss(net: &MlpNetwork, data: &NormalizedMatrix) -> Result<f64> {
    let m = data.matrix();
    bce_loss(&net.reconstruct(m.data())?, m.data())
}

/// Seeded random split into `(train, holdout)` with
/// `round(fraction * n)` holdout rows; both keep the original row order.
pub fn holdout_split(
    data: &NormalizedMatrix,
    fraction: f64,
    seed: u64,
) -> Result<(NormalizedMatrix, NormalizedMatrix)> {
    let n = data.matrix().nrows();
    let k = (fraction * n as f64).round() as usize;
    if !(0.0..1.0).contains(&fraction) || k == 0 || k >= n {
        return Err(Error::InvalidArgument(format!(
            "holdout fraction {fraction} leaves no rows on one side of {n}"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut held = order[..k].to_vec();
    let mut kept = order[k..].to_vec();
    held.sort_unstable();
    kept.sort_unstable();
    let pick = |idx: &[usize]| NormalizedMatrix::from_matrix(data.matrix().select_rows(idx)?);
    Ok((pick(&kept)?, pick(&held)?))
}

/// `epoch,loss`, epochs counted from 1.
pub fn loss_history_csv(losses: &[f64]) -> String {
    let mut out = String::from("epoch,loss\n");
    for (e, l) in losses.iter().enumerate() {
        out.push_str(&format!("{},{l}\n", e + 1));
    }
    out
}

pub fn latent_names(width: usize) -> Vec<String> {
    (0..width).map(|k| format!("latent_{k}")).collect()
}

/// Encoder half only; row ids carry over.
pub fn encode(net: &MlpNetwork, data: &FeatureMatrix) -> Result<LatentMatrix> {
    if data.ncols() != net.input_width() {
        return Err(Error::Shape(format!(
            "data has {} columns, network expects {}",
            data.ncols(),
            net.input_width()
        )));
    }
    let z = net.encode_rows(data.data())?;
    FeatureMatrix::new(data.ids().to_vec(), latent_names(net.latent_width()), z)
}

pub fn decode(net: &MlpNetwork, latent: &LatentMatrix, columns: &[String]) -> Result<FeatureMatrix> {
    let out = net.decode_rows(latent.data())?;
    FeatureMatrix::new(latent.ids().to_vec(), columns.to_vec(), out)
}

const CHECKPOINT_FORMAT: &str = "phenoclust-autoencoder";
const CHECKPOINT_VERSION: u32 = 1;

/// Text (JSON) checkpoint of a network and how it was trained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    format: String,
    version: u32,
    pub layer_sizes: Vec<usize>,
    pub layers: Vec<LayerShape>,
    pub encoder_depth: usize,
    pub init_seed: u64,
    pub train: Option<TrainConfig>,
    pub columns: Vec<String>,
    pub params: Vec<f64>,
}

impl Checkpoint {
    pub fn new(net: &MlpNetwork, train: Option<TrainConfig>, columns: Vec<String>) -> Self {
        Checkpoint {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            layer_sizes: net.layer_sizes(),
            layers: net.layers().to_vec(),
            encoder_depth: net.encoder_depth(),
            init_seed: net.seed(),
            train,
            columns,
            params: net.params().to_vec(),
        }
    }

    pub fn network(&self) -> Result<MlpNetwork> {
        MlpNetwork::from_parts(
            self.layers.clone(),
            self.params.clone(),
            self.encoder_depth,
            self.init_seed,
        )
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("checkpoint serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let ck: Checkpoint =
            serde_json::from_str(text).map_err(|e| parse_err("<checkpoint>", e.to_string()))?;
        if ck.format != CHECKPOINT_FORMAT || ck.version != CHECKPOINT_VERSION {
            return Err(parse_err(
                "<checkpoint>",
                format!("unsupported format {} v{}", ck.format, ck.version),
            ));
        }
        if ck.columns.len() != ck.layer_sizes.first().copied().unwrap_or(0) {
            return Err(parse_err("<checkpoint>", "column names do not match input width"));
        }
        ck.network()?;
        Ok(ck)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Checkpoint::from_json(&std::fs::read_to_string(path)?).map_err(|e| match e {
            Error::Parse { msg, .. } => parse_err(path, msg),
            other => other,
        })
    }
}
