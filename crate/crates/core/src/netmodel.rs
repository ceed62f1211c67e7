//! Network data model and ANN forward inference.

use serde::{Deserialize, Serialize};

use crate::error::{LsoError, Result};
use crate::matrix::Matrix;
use crate::neuron::NeuronParams;
use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Softmax,
    Identity,
}

impl Activation {
    pub fn name(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Softmax => "softmax",
            Activation::Identity => "identity",
        }
    }
}

/// Dense layer: `A = f(X · W)` with `W` shaped `in_dim × out_dim`.
#[derive(Clone, Debug, PartialEq)]
pub struct AnnLayer<T> {
    pub weights: Matrix<T>,
    pub activation: Activation,
}

impl<T: Real> AnnLayer<T> {
    pub fn new(weights: Matrix<T>, activation: Activation) -> Self {
        Self {
            weights,
            activation,
        }
    }

    pub fn in_dim(&self) -> usize {
        self.weights.rows()
    }

    pub fn out_dim(&self) -> usize {
        self.weights.cols()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AnnNetwork<T> {
    layers: Vec<AnnLayer<T>>,
}

impl<T: Real> AnnNetwork<T> {
    /// Validate layer chaining and activation placement.
    pub fn new(layers: Vec<AnnLayer<T>>) -> Result<Self> {
        if layers.is_empty() {
            return Err(LsoError::InvalidNetwork("network has no layers".into()));
        }
        let last = layers.len() - 1;
        for (i, layer) in layers.iter().enumerate() {
            if i != last && layer.activation != Activation::Relu {
                return Err(LsoError::InvalidNetwork(format!(
                    "layer {i}: {} activation is only permitted on the final layer",
                    layer.activation.name()
                )));
            }
            if layer.in_dim() == 0 || layer.out_dim() == 0 {
                return Err(LsoError::InvalidNetwork(format!(
                    "layer {i}: empty weight matrix {}x{}",
                    layer.in_dim(),
                    layer.out_dim()
                )));
            }
            layer
                .weights
                .check_finite("weights")
                .map_err(|e| e.in_layer(i))?;
        }
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[0].out_dim() != pair[1].in_dim() {
                return Err(LsoError::InvalidNetwork(format!(
                    "layer {i} outputs {} values but layer {} expects {}",
                    pair[0].out_dim(),
                    i + 1,
                    pair[1].in_dim()
                )));
            }
        }
        Ok(Self { layers })
    }

    pub fn layers(&self) -> &[AnnLayer<T>] {
        &self.layers
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn out_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim()
    }

    /// Widths of the hidden layers (every layer but the last).
    pub fn hidden_widths(&self) -> Vec<usize> {
        self.layers[..self.layers.len() - 1]
            .iter()
            .map(AnnLayer::out_dim)
            .collect()
    }
}

/// Pre-activation `y` and activation `a` of one layer for a batch.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerOutput<T> {
    pub y: Matrix<T>,
    pub a: Matrix<T>,
}

/// Run the ANN on `x` (samples × in_dim), returning every layer's `(Y, A)`.
///
/// The final layer's `A` is its raw pre-activation output: softmax layers
/// yield logits here, use [`softmax_rows`] for probabilities.
pub fn ann_forward<T: Real>(net: &AnnNetwork<T>, x: &Matrix<T>) -> Result<Vec<LayerOutput<T>>> {
    let mut outputs: Vec<LayerOutput<T>> = Vec::with_capacity(net.layers.len());
    for (i, layer) in net.layers.iter().enumerate() {
        let input = outputs.last().map_or(x, |o| &o.a);
        if input.cols() != layer.in_dim() {
            return Err(LsoError::dimension(
                format!("ann_forward layer {i} input"),
                format!("{} columns", layer.in_dim()),
                format!("{} columns", input.cols()),
            ));
        }
        let y = input.matmul(&layer.weights)?;
        let a = match layer.activation {
            Activation::Relu => y.map(|v| v.max(T::zero())),
            Activation::Softmax | Activation::Identity => y.clone(),
        };
        outputs.push(LayerOutput { y, a });
    }
    Ok(outputs)
}

/// Row-wise softmax, stabilised by subtracting the row maximum.
pub fn softmax_rows<T: Real>(logits: &Matrix<T>) -> Matrix<T> {
    let mut out = logits.clone();
    for i in 0..out.rows() {
        let row = out.row_mut(i);
        let m = row.iter().copied().fold(T::neg_infinity(), T::max);
        let mut total = T::zero();
        for v in row.iter_mut() {
            *v = (*v - m).exp();
            total = total + *v;
        }
        for v in row.iter_mut() {
            *v = *v / total;
        }
    }
    out
}

/// One spiking layer: decoders map the previous layer's rates to this layer's
/// input currents. The output layer has no neurons; its decoders produce the
/// network output directly.
#[derive(Clone, Debug, PartialEq)]
pub struct SnnLayer<T> {
    pub decoders: Matrix<T>,
    pub neuron: NeuronParams<T>,
    pub is_output: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SnnNetwork<T> {
    layers: Vec<SnnLayer<T>>,
    tau_syn: T,
    layer_scales: Vec<T>,
}

impl<T: Real> SnnNetwork<T> {
    pub fn new(layers: Vec<SnnLayer<T>>, tau_syn: T, layer_scales: Vec<T>) -> Result<Self> {
        if layers.is_empty() {
            return Err(LsoError::InvalidNetwork("network has no layers".into()));
        }
        if !(tau_syn > T::zero()) || !tau_syn.is_finite() {
            return Err(LsoError::InvalidNetwork(format!(
                "tau_syn must be positive, got {tau_syn}"
            )));
        }
        let last = layers.len() - 1;
        for (i, layer) in layers.iter().enumerate() {
            if layer.is_output != (i == last) {
                return Err(LsoError::InvalidNetwork(format!(
                    "layer {i}: exactly the last layer must be the output layer"
                )));
            }
            layer.neuron.validate().map_err(|e| e.in_layer(i))?;
            layer
                .decoders
                .check_finite("decoders")
                .map_err(|e| e.in_layer(i))?;
        }
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[0].decoders.cols() != pair[1].decoders.rows() {
                return Err(LsoError::InvalidNetwork(format!(
                    "layer {i} outputs {} values but layer {} expects {}",
                    pair[0].decoders.cols(),
                    i + 1,
                    pair[1].decoders.rows()
                )));
            }
        }
        if layer_scales.len() != layers.len() {
            return Err(LsoError::InvalidNetwork(format!(
                "{} layer scales for {} layers",
                layer_scales.len(),
                layers.len()
            )));
        }
        if layer_scales.iter().any(|s| !s.is_finite()) {
            return Err(LsoError::InvalidNetwork("non-finite layer scale".into()));
        }
        Ok(Self {
            layers,
            tau_syn,
            layer_scales,
        })
    }

    pub fn layers(&self) -> &[SnnLayer<T>] {
        &self.layers
    }

    pub fn hidden_layers(&self) -> &[SnnLayer<T>] {
        &self.layers[..self.layers.len() - 1]
    }

    pub fn output_layer(&self) -> &SnnLayer<T> {
        &self.layers[self.layers.len() - 1]
    }

    pub fn tau_syn(&self) -> T {
        self.tau_syn
    }

    pub fn layer_scales(&self) -> &[T] {
        &self.layer_scales
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].decoders.rows()
    }

    pub fn out_dim(&self) -> usize {
        self.output_layer().decoders.cols()
    }

    /// Number of spiking neurons (all layers except the output).
    pub fn neuron_count(&self) -> usize {
        self.hidden_layers().iter().map(|l| l.decoders.cols()).sum()
    }
}
