//! Layer-wise synapse optimization (LSO).
//!
//! Converts trained feed-forward networks into rate-coded spiking networks of
//! leaky integrate-and-fire neurons. Each layer's post-neuron decoders are the
//! least-squares solution that makes the spiking layer's firing rates reproduce
//! the source network's activations. Layers may be compressed by optimal
//! low-rank truncation of the target currents.
//!
//! The numerical core is generic over the scalar type (see [`Real`]); file
//! formats and the command-line front end work in `f64`. The aliases below name
//! the common concrete instantiations.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod error;
pub mod flatten;
pub mod io;
pub mod matrix;
pub mod netmodel;
pub mod neuron;
pub mod numerics;
pub mod scalar;
pub mod simulate;
pub mod translate;

pub use error::{LsoError, Result};
pub use matrix::Matrix;
pub use netmodel::{ann_forward, Activation, AnnLayer, AnnNetwork, LayerOutput, SnnLayer, SnnNetwork};
pub use neuron::{inv_lif, lif_rate, lif_step, signed_inv_lif, LifState, NeuronParams};
pub use scalar::Real;

pub type Matrix64 = Matrix<f64>;
pub type Matrix32 = Matrix<f32>;
pub type AnnNetwork64 = AnnNetwork<f64>;
pub type AnnNetwork32 = AnnNetwork<f32>;
pub type SnnNetwork64 = SnnNetwork<f64>;
pub type SnnNetwork32 = SnnNetwork<f32>;
pub type NeuronParams64 = NeuronParams<f64>;
pub type NeuronParams32 = NeuronParams<f32>;
pub type ConvSpec64 = flatten::ConvSpec<f64>;
pub type SvdFactors64 = numerics::SvdFactors<f64>;
