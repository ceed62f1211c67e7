//! Execution of translated networks and ANN/SNN agreement metrics.
//!
//! [`run_spiking`] is a clocked simulation: each sample is presented as a
//! constant input, every inter-layer signal passes through a first-order
//! synaptic low-pass filter, and the decoded output is time-averaged after a
//! settle window. [`run_rate`] is the analytic steady-state counterpart.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{LsoError, Result};
use crate::matrix::Matrix;
use crate::netmodel::SnnNetwork;
use crate::neuron::{lif_rate, lif_step, LifState};
use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    /// Time step (s).
    pub dt: f64,
    /// Presentation time per sample (s).
    pub t_total: f64,
    /// Leading fraction of `t_total` excluded from the output average.
    pub settle_frac: f64,
    /// Unused by the deterministic neuron; kept for stochastic variants.
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            t_total: 0.5,
            settle_frac: 0.1,
            seed: 0,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || !(self.t_total >= self.dt) || !self.t_total.is_finite() {
            return Err(LsoError::InvalidArgument(format!(
                "simulation needs 0 < dt <= t_total (dt = {}, t_total = {})",
                self.dt, self.t_total
            )));
        }
        if !(0.0..1.0).contains(&self.settle_frac) {
            return Err(LsoError::InvalidArgument(format!(
                "settle fraction must lie in [0, 1), got {}",
                self.settle_frac
            )));
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        ((self.t_total / self.dt).round() as usize).max(1)
    }

    /// First step whose output enters the average.
    pub fn settle_steps(&self) -> usize {
        let n = self.steps();
        ((self.settle_frac * n as f64).round() as usize).min(n - 1)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimResult<T> {
    /// Time-averaged decoded outputs, samples × out_dim.
    pub outputs: Matrix<T>,
    /// Total spikes per hidden layer over all samples.
    pub spike_counts: Vec<u64>,
    pub samples: usize,
    pub steps_per_sample: usize,
    pub averaged_steps: usize,
    pub simulated_seconds: f64,
}

fn check_input<T: Real>(snn: &SnnNetwork<T>, x: &Matrix<T>) -> Result<()> {
    if x.cols() != snn.in_dim() {
        return Err(LsoError::dimension(
            "network input",
            format!("{} columns", snn.in_dim()),
            format!("{} columns", x.cols()),
        ));
    }
    Ok(())
}

/// Spiking run of one sample: (averaged output, spikes per hidden layer).
fn simulate_sample<T: Real>(snn: &SnnNetwork<T>, input: &[T], cfg: &SimConfig) -> (Vec<T>, Vec<u64>) {
    let dt = T::lit(cfg.dt);
    let decay = (-dt / snn.tau_syn()).exp();
    let gain = T::one() - decay;
    let spike_height = T::one() / dt;
    let hidden = snn.hidden_layers();
    let out_layer = snn.output_layer();

    let mut filtered_in = vec![T::zero(); input.len()];
    let mut states: Vec<Vec<LifState<T>>> = hidden
        .iter()
        .map(|l| vec![LifState::default(); l.decoders.cols()])
        .collect();
    let mut filtered: Vec<Vec<T>> = hidden.iter().map(|l| vec![T::zero(); l.decoders.cols()]).collect();
    let mut currents: Vec<Vec<T>> = hidden.iter().map(|l| vec![T::zero(); l.decoders.cols()]).collect();
    let mut counts = vec![0u64; hidden.len()];
    let mut out = vec![T::zero(); out_layer.decoders.cols()];
    let mut acc = vec![T::zero(); out.len()];

    let steps = cfg.steps();
    let settle = cfg.settle_steps();
    for step in 0..steps {
        for (f, &x) in filtered_in.iter_mut().zip(input) {
            *f = *f * decay + gain * x;
        }
        for (l, layer) in hidden.iter().enumerate() {
            let (prev, rest) = filtered.split_at_mut(l);
            let presyn: &[T] = if l == 0 { &filtered_in } else { &prev[l - 1] };
            layer.decoders.left_mul_vec(presyn, &mut currents[l]);
            let p = &layer.neuron;
            for ((state, &i), f) in states[l].iter_mut().zip(&currents[l]).zip(rest[0].iter_mut()) {
                let (next, spiked) = lif_step(*state, i + p.i_bias, dt, p);
                *state = next;
                let s = if spiked {
                    counts[l] += 1;
                    spike_height
                } else {
                    T::zero()
                };
                *f = *f * decay + gain * s;
            }
        }
        if step >= settle {
            let presyn: &[T] = filtered.last().map_or(&filtered_in, |v| v.as_slice());
            out_layer.decoders.left_mul_vec(presyn, &mut out);
            for (a, &o) in acc.iter_mut().zip(&out) {
                *a = *a + o;
            }
        }
    }
    let n = T::from_usize_lossy(steps - settle);
    acc.iter_mut().for_each(|a| *a = *a / n);
    (acc, counts)
}

fn collect<T: Real>(
    snn: &SnnNetwork<T>,
    x: &Matrix<T>,
    cfg: &SimConfig,
    per_sample: Vec<(Vec<T>, Vec<u64>)>,
) -> Result<SimResult<T>> {
    let mut data = Vec::with_capacity(x.rows() * snn.out_dim());
    let mut spike_counts = vec![0u64; snn.hidden_layers().len()];
    for (out, counts) in per_sample {
        data.extend(out);
        for (t, c) in spike_counts.iter_mut().zip(counts) {
            *t += c;
        }
    }
    let outputs = Matrix::new(x.rows(), snn.out_dim(), data)?;
    Ok(SimResult {
        outputs,
        spike_counts,
        samples: x.rows(),
        steps_per_sample: cfg.steps(),
        averaged_steps: cfg.steps() - cfg.settle_steps(),
        simulated_seconds: cfg.steps() as f64 * cfg.dt * x.rows() as f64,
    })
}

/// Spiking simulation, one sample after another.
pub fn run_spiking<T: Real>(snn: &SnnNetwork<T>, x: &Matrix<T>, cfg: &SimConfig) -> Result<SimResult<T>> {
    cfg.validate()?;
    check_input(snn, x)?;
    let per_sample = (0..x.rows()).map(|i| simulate_sample(snn, x.row(i), cfg)).collect();
    collect(snn, x, cfg, per_sample)
}

/// Spiking simulation with samples spread over the rayon pool. Results are
/// identical to [`run_spiking`]: samples share no state.
pub fn run_spiking_parallel<T: Real>(
    snn: &SnnNetwork<T>,
    x: &Matrix<T>,
    cfg: &SimConfig,
) -> Result<SimResult<T>> {
    cfg.validate()?;
    check_input(snn, x)?;
    let per_sample = (0..x.rows())
        .into_par_iter()
        .map(|i| simulate_sample(snn, x.row(i), cfg))
        .collect();
    collect(snn, x, cfg, per_sample)
}

/// Steady-state rate cascade: `r ← lif_rate(r·φ + i_bias)` per hidden layer,
/// then `r·φ_out`.
pub fn run_rate<T: Real>(snn: &SnnNetwork<T>, x: &Matrix<T>) -> Result<Matrix<T>> {
    check_input(snn, x)?;
    let mut r = x.clone();
    for layer in snn.hidden_layers() {
        let p = layer.neuron;
        r = r.matmul(&layer.decoders)?.map(|c| lif_rate(c + p.i_bias, &p));
    }
    r.matmul(&snn.output_layer().decoders)
}

/// Per-sample RMSE between ANN and SNN outputs, raw and divided by the ANN
/// output range over the batch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Disagreement {
    pub per_sample: Vec<f64>,
    pub mean: f64,
    pub std: f64,
    pub normalized_per_sample: Vec<f64>,
    pub normalized_mean: f64,
    pub normalized_std: f64,
    /// `max − min` of the ANN outputs; 1 when the outputs are constant.
    pub range: f64,
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

pub fn disagreement<T: Real>(ann_out: &Matrix<T>, snn_out: &Matrix<T>) -> Result<Disagreement> {
    if ann_out.shape() != snn_out.shape() {
        return Err(LsoError::dimension(
            "disagreement",
            format!("{}x{}", ann_out.rows(), ann_out.cols()),
            format!("{}x{}", snn_out.rows(), snn_out.cols()),
        ));
    }
    if ann_out.rows() == 0 || ann_out.cols() == 0 {
        return Err(LsoError::InvalidArgument("disagreement of empty outputs".into()));
    }
    let per_sample: Vec<f64> = (0..ann_out.rows())
        .map(|i| {
            let ss: f64 = ann_out
                .row(i)
                .iter()
                .zip(snn_out.row(i))
                .map(|(&a, &s)| {
                    let d = (a - s).to_f64_lossy();
                    d * d
                })
                .sum();
            (ss / ann_out.cols() as f64).sqrt()
        })
        .collect();
    let lo = ann_out.min().map_or(0.0, |v| v.to_f64_lossy());
    let hi = ann_out.max().map_or(0.0, |v| v.to_f64_lossy());
    let range = if hi > lo { hi - lo } else { 1.0 };
    let normalized_per_sample: Vec<f64> = per_sample.iter().map(|v| v / range).collect();
    let (mean, std) = mean_std(&per_sample);
    let (normalized_mean, normalized_std) = mean_std(&normalized_per_sample);
    Ok(Disagreement {
        per_sample,
        mean,
        std,
        normalized_per_sample,
        normalized_mean,
        normalized_std,
        range,
    })
}

/// Fraction of rows whose argmax (lowest index on ties) equals the label.
pub fn accuracy<T: Real>(outputs: &Matrix<T>, labels: &[usize]) -> Result<f64> {
    if outputs.rows() != labels.len() {
        return Err(LsoError::dimension(
            "accuracy labels",
            format!("{} labels", outputs.rows()),
            labels.len(),
        ));
    }
    if labels.is_empty() {
        return Err(LsoError::InvalidArgument("accuracy of an empty batch".into()));
    }
    let mut hits = 0usize;
    for (i, &label) in labels.iter().enumerate() {
        if label >= outputs.cols() {
            return Err(LsoError::InvalidArgument(format!(
                "label {label} at row {i} outside 0..{}",
                outputs.cols()
            )));
        }
        let row = outputs.row(i);
        let mut best = 0;
        for (j, &v) in row.iter().enumerate().skip(1) {
            if v > row[best] {
                best = j;
            }
        }
        if best == label {
            hits += 1;
        }
    }
    Ok(hits as f64 / labels.len() as f64)
}
