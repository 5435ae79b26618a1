//! Weight persistence: a versioned JSON document with explicit layer
//! dimensions so loads can validate chaining before touching any math.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Activation, DenseNet, DropoutPlacement};
use crate::error::{Error, Result};

pub const WEIGHTS_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
pub struct WeightsFile {
    pub format_version: u32,
    /// Layer widths, input first: `[in, hidden..., out]`.
    pub layer_dims: Vec<usize>,
    pub activations: Vec<Activation>,
    pub dropout_rate: f64,
    #[serde(default)]
    pub dropout_placement: DropoutPlacement,
    /// Row-major `[out x in]` per layer.
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

impl WeightsFile {
    pub fn from_net(net: &DenseNet) -> Self {
        let mut layer_dims = vec![net.input_dim()];
        layer_dims.extend(net.layers().iter().map(|l| l.out_dim));
        WeightsFile {
            format_version: WEIGHTS_FORMAT_VERSION,
            layer_dims,
            activations: net.layers().iter().map(|l| l.activation).collect(),
            dropout_rate: net.dropout_rate(),
            dropout_placement: net.dropout_placement(),
            weights: net.layers().iter().map(|l| l.weights.clone()).collect(),
            biases: net.layers().iter().map(|l| l.bias.clone()).collect(),
        }
    }

    pub fn into_net(self) -> Result<DenseNet> {
        if self.format_version != WEIGHTS_FORMAT_VERSION {
            return Err(Error::Format(format!(
                "unsupported weights format_version {}",
                self.format_version
            )));
        }
        if self.weights.len() != self.activations.len()
            || self.biases.len() != self.activations.len()
        {
            return Err(Error::Format("layer count mismatch".into()));
        }
        let mut net = DenseNet::zeros(&self.layer_dims, &self.activations, self.dropout_rate)?;
        net.set_dropout_placement(self.dropout_placement);
        for (layer, (w, b)) in net
            .layers_mut()
            .iter_mut()
            .zip(self.weights.into_iter().zip(self.biases.into_iter()))
        {
            if w.len() != layer.weights.len() || b.len() != layer.bias.len() {
                return Err(Error::Format(
                    "weight buffer does not match declared dims".into(),
                ));
            }
            layer.weights = w;
            layer.bias = b;
        }
        net.validate()?;
        Ok(net)
    }
}

pub fn save_net(net: &DenseNet, path: &Path) -> Result<()> {
    let file = WeightsFile::from_net(net);
    let json = serde_json::to_string_pretty(&file)?;
    std::fs::write(path, json)?;
    Ok(())
}

pub fn load_net(path: &Path) -> Result<DenseNet> {
    let data = std::fs::read_to_string(path)?;
    let file: WeightsFile = serde_json::from_str(&data)?;
    file.into_net()
}
