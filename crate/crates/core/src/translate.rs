//! Layer-by-layer translation of an ANN into a rate-coded spiking network.
//!
//! For every hidden layer the ANN's clean activations are scaled into the
//! neurons' rate range, mapped to the input currents that would produce them,
//! optionally compressed to a lower rank, and matched by least-squares
//! decoders acting on the spiking network's own rates from the previous
//! layer. The output layer's decoders fit the ANN's raw outputs directly.

use serde::{Deserialize, Serialize};

use crate::error::{LsoError, Result};
use crate::matrix::Matrix;
use crate::netmodel::{ann_forward, AnnNetwork, SnnLayer, SnnNetwork};
use crate::neuron::{lif_rate_matrix, signed_inv_lif, NeuronParams};
use crate::numerics::{
    lstsq_pinv_with, sample_noise, select_spanning_columns, truncate_with_energy, NoiseModel,
    NoiseStream, DEFAULT_RCOND,
};
use crate::scalar::Real;

/// Fraction of the refractory rate limit used as the scaling target when
/// `f_max` sits exactly on that limit (where the inverse rate curve diverges).
pub const RATE_LIMIT_HEADROOM: f64 = 0.95;

/// Per-layer SNN widths.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerSizes {
    /// Same width as the ANN.
    Full,
    /// `floor(fraction · width)`, at least 1, applied to every hidden layer.
    Fraction(f64),
    /// Explicit neuron count per hidden layer.
    Absolute(Vec<usize>),
}

impl LayerSizes {
    pub fn resolve(&self, widths: &[usize]) -> Result<Vec<usize>> {
        let sizes = match self {
            LayerSizes::Full => widths.to_vec(),
            LayerSizes::Fraction(f) => {
                if !(*f > 0.0 && *f <= 1.0) {
                    return Err(LsoError::InvalidArgument(format!(
                        "size fraction must lie in (0, 1], got {f}"
                    )));
                }
                widths
                    .iter()
                    .map(|&w| ((w as f64 * f).floor() as usize).max(1))
                    .collect()
            }
            LayerSizes::Absolute(v) => {
                if v.len() != widths.len() {
                    return Err(LsoError::InvalidArgument(format!(
                        "{} layer sizes given for {} hidden layers",
                        v.len(),
                        widths.len()
                    )));
                }
                v.clone()
            }
        };
        for (i, (&s, &w)) in sizes.iter().zip(widths).enumerate() {
            if s < 1 || s > w {
                return Err(LsoError::InvalidArgument(format!(
                    "hidden layer {i}: size {s} outside 1..={w}"
                )));
            }
        }
        Ok(sizes)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScalePolicy {
    /// Shrink activations so the largest equals the maximum rate; never enlarge.
    MaxToFmax,
    None,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TranslationConfig {
    /// Number of stacked copies of the sample set.
    pub rep: usize,
    pub sizes: LayerSizes,
    pub noise: NoiseModel,
    pub seed: u64,
    pub scale_policy: ScalePolicy,
}

impl Default for TranslationConfig {
    fn default() -> Self {
        Self {
            rep: 1,
            sizes: LayerSizes::Full,
            noise: NoiseModel::default(),
            seed: 0,
            scale_policy: ScalePolicy::MaxToFmax,
        }
    }
}

/// Diagnostics for one translated layer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerReport {
    pub layer: usize,
    pub is_output: bool,
    pub ann_width: usize,
    pub snn_width: usize,
    /// ANN neurons kept in the SNN layer (all of them unless compressed).
    pub kept_neurons: Vec<usize>,
    /// Fraction of squared singular-value energy of the target currents kept.
    pub energy_fraction: f64,
    /// `‖X·φ − target‖_F` over the replicated design.
    pub residual: f64,
    pub scale: f64,
    pub design_rows: usize,
    pub design_rank: usize,
    pub condition: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TranslationReport {
    pub layers: Vec<LayerReport>,
}

/// Vertically stack `rep` copies of the sample set.
pub fn replicate<T: Real>(samples: &Matrix<T>, rep: usize) -> Matrix<T> {
    samples.repeat_rows(rep.max(1))
}

/// Rate the largest activation is scaled to under [`ScalePolicy::MaxToFmax`].
pub fn scale_target<T: Real>(p: &NeuronParams<T>) -> T {
    if p.f_max < p.rate_limit() {
        p.f_max
    } else {
        p.rate_limit() * T::lit(RATE_LIMIT_HEADROOM)
    }
}

/// Scale factor in (0, 1] for a layer whose largest activation is `max_a`.
pub fn layer_scale<T: Real>(policy: ScalePolicy, max_a: T, p: &NeuronParams<T>) -> T {
    match policy {
        ScalePolicy::None => T::one(),
        ScalePolicy::MaxToFmax => {
            let target = scale_target(p);
            if max_a > target {
                target / max_a
            } else {
                T::one()
            }
        }
    }
}

fn validate<T: Real>(
    ann: &AnnNetwork<T>,
    samples: &Matrix<T>,
    cfg: &TranslationConfig,
    p: &NeuronParams<T>,
    tau_syn: T,
) -> Result<Vec<usize>> {
    if samples.rows() == 0 {
        return Err(LsoError::InvalidArgument("sample set has no rows".into()));
    }
    if samples.cols() != ann.in_dim() {
        return Err(LsoError::dimension(
            "translation samples",
            format!("{} columns (ANN input)", ann.in_dim()),
            format!("{} columns", samples.cols()),
        ));
    }
    samples.check_finite("samples")?;
    if cfg.rep < 1 {
        return Err(LsoError::InvalidArgument("rep must be at least 1".into()));
    }
    if !(tau_syn > T::zero()) {
        return Err(LsoError::InvalidArgument(format!(
            "tau_syn must be positive, got {tau_syn}"
        )));
    }
    p.validate()?;
    cfg.noise.validate()?;
    cfg.sizes.resolve(&ann.hidden_widths())
}

/// Translate `ann` into a spiking network using `samples` (rows) as the
/// representative input set.
pub fn translate<T: Real>(
    ann: &AnnNetwork<T>,
    samples: &Matrix<T>,
    cfg: &TranslationConfig,
    p: &NeuronParams<T>,
    tau_syn: T,
) -> Result<(SnnNetwork<T>, TranslationReport)> {
    let sizes = validate(ann, samples, cfg, p, tau_syn)?;
    let targets = ann_forward(ann, samples)?;
    let n_layers = ann.layers().len();
    let rcond = T::lit(DEFAULT_RCOND);

    let mut x = replicate(samples, cfg.rep);
    let mut layers = Vec::with_capacity(n_layers);
    let mut scales = Vec::with_capacity(n_layers);
    let mut reports = Vec::with_capacity(n_layers);

    for (i, target) in targets.iter().enumerate().take(n_layers - 1) {
        let ann_width = target.a.cols();
        let max_a = target.a.max().unwrap_or(T::zero());
        let scale = layer_scale(cfg.scale_policy, max_a, p);
        let scaled = if scale == T::one() {
            target.a.clone()
        } else {
            target.a.scale(scale)
        };
        let currents = signed_inv_lif(&scaled, p).map_err(|e| e.in_layer(i))?;
        let (truncated, energy) =
            truncate_with_energy(&currents, sizes[i]).map_err(|e| e.in_layer(i))?;
        let kept = select_spanning_columns(&truncated, sizes[i]);
        let goal = if kept.len() == ann_width {
            truncated
        } else {
            truncated.select_columns(&kept)
        };
        let goal = replicate(&goal, cfg.rep);

        let (phi, diag) = lstsq_pinv_with(&x, &goal, rcond).map_err(|e| e.in_layer(i))?;
        let drive = x.matmul(&phi)?;
        let residual = drive.sub(&goal)?.frobenius_norm();

        let rates = lif_rate_matrix(&drive, p);
        let mut stream = NoiseStream::new(cfg.seed, i as u64);
        let noise = sample_noise(&cfg.noise, samples, rates.shape(), &mut stream)
            .map_err(|e| e.in_layer(i))?;
        x = rates.add(&noise)?;

        reports.push(LayerReport {
            layer: i,
            is_output: false,
            ann_width,
            snn_width: kept.len(),
            kept_neurons: kept,
            energy_fraction: energy.to_f64_lossy(),
            residual: residual.to_f64_lossy(),
            scale: scale.to_f64_lossy(),
            design_rows: diag.design_rows,
            design_rank: diag.rank,
            condition: diag.condition.to_f64_lossy(),
        });
        layers.push(SnnLayer {
            decoders: phi,
            neuron: *p,
            is_output: false,
        });
        scales.push(scale);
    }

    let last = n_layers - 1;
    let out = &targets[last];
    let goal = replicate(&out.y, cfg.rep);
    let (phi, diag) = lstsq_pinv_with(&x, &goal, rcond).map_err(|e| e.in_layer(last))?;
    let residual = x.matmul(&phi)?.sub(&goal)?.frobenius_norm();
    reports.push(LayerReport {
        layer: last,
        is_output: true,
        ann_width: out.y.cols(),
        snn_width: out.y.cols(),
        kept_neurons: (0..out.y.cols()).collect(),
        energy_fraction: 1.0,
        residual: residual.to_f64_lossy(),
        scale: 1.0,
        design_rows: diag.design_rows,
        design_rank: diag.rank,
        condition: diag.condition.to_f64_lossy(),
    });
    layers.push(SnnLayer {
        decoders: phi,
        neuron: *p,
        is_output: true,
    });
    scales.push(T::one());

    let snn = SnnNetwork::new(layers, tau_syn, scales)?;
    Ok((snn, TranslationReport { layers: reports }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netmodel::{Activation, AnnLayer};
    use crate::numerics::NoiseKind;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn net(seed: u64, dims: &[usize], gain: f64) -> AnnNetwork<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = dims.len() - 1;
        let layers = dims
            .windows(2)
            .enumerate()
            .map(|(i, d)| {
                let sd = (2.0 / d[0] as f64).sqrt() * if i == 0 { gain } else { 1.0 };
                let w = Matrix::from_fn(d[0], d[1], |_, _| rng.random_range(-1.0..1.0) * sd);
                let act = if i + 1 == n { Activation::Identity } else { Activation::Relu };
                AnnLayer::new(w, act)
            })
            .collect();
        AnnNetwork::new(layers).unwrap()
    }

    fn samples(seed: u64, rows: usize, cols: usize) -> Matrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Matrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
    }

    fn quiet() -> TranslationConfig {
        TranslationConfig {
            noise: NoiseModel::none(),
            ..TranslationConfig::default()
        }
    }

    #[test]
    fn replicate_orders_copies() {
        let a = Matrix::from_rows(&[[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]]);
        assert_eq!(replicate(&a, 1), a);
        let r = replicate(&a, 2);
        assert_eq!(r.shape(), (4, 3));
        assert_eq!([r.row(0), r.row(1), r.row(2), r.row(3)], [a.row(0), a.row(1), a.row(0), a.row(1)]);
    }

    #[test]
    fn sizes_resolve() {
        let w = [16, 16, 8];
        assert_eq!(LayerSizes::Fraction(0.25).resolve(&w).unwrap(), vec![4, 4, 2]);
        assert_eq!(LayerSizes::Fraction(0.01).resolve(&w).unwrap(), vec![1, 1, 1]);
        assert_eq!(LayerSizes::Full.resolve(&w).unwrap(), w.to_vec());
        assert!(LayerSizes::Absolute(vec![4, 4]).resolve(&w).is_err());
        assert!(LayerSizes::Absolute(vec![4, 17, 2]).resolve(&w).is_err());
        assert!(LayerSizes::Fraction(1.5).resolve(&w).is_err());
    }

    #[test]
    fn design_rows_scale_with_rep() {
        let ann = net(1, &[3, 6, 2], 100.0);
        let s = samples(2, 10, 3);
        let cfg = TranslationConfig { rep: 3, ..TranslationConfig::default() };
        let (_, report) = translate(&ann, &s, &cfg, &NeuronParams::default(), 1e-3).unwrap();
        assert!(report.layers.iter().all(|l| l.design_rows == 30));
    }

    #[test]
    fn replication_without_noise_is_bit_identical() {
        let ann = net(3, &[4, 8, 8, 2], 150.0);
        let s = samples(4, 40, 4);
        let p = NeuronParams::default();
        let (one, _) = translate(&ann, &s, &quiet(), &p, 1e-3).unwrap();
        let (five, _) = translate(&ann, &s, &TranslationConfig { rep: 5, ..quiet() }, &p, 1e-3).unwrap();
        assert_eq!(one, five);

        let noisy = TranslationConfig { rep: 5, noise: NoiseModel { kind: NoiseKind::Diagonal, scale: 100.0 }, ..TranslationConfig::default() };
        let (n5, _) = translate(&ann, &s, &noisy, &p, 1e-3).unwrap();
        assert_ne!(one, n5);
    }

    #[test]
    fn deterministic_for_seed() {
        let ann = net(5, &[4, 8, 2], 150.0);
        let s = samples(6, 30, 4);
        let p = NeuronParams::default();
        let cfg = TranslationConfig { rep: 2, seed: 42, ..TranslationConfig::default() };
        let a = translate(&ann, &s, &cfg, &p, 1e-3).unwrap();
        let b = translate(&ann, &s, &cfg, &p, 1e-3).unwrap();
        assert_eq!(a, b);
        let c = translate(&ann, &s, &TranslationConfig { seed: 43, ..cfg }, &p, 1e-3).unwrap();
        assert_ne!(a.0, c.0);
    }

    #[test]
    fn scales_shrink_only() {
        let p = NeuronParams::default();
        let ann = net(7, &[4, 8, 8, 2], 4000.0);
        let s = samples(8, 50, 4);
        let (snn, report) = translate(&ann, &s, &quiet(), &p, 1e-3).unwrap();
        let fwd = ann_forward(&ann, &s).unwrap();
        for (i, l) in report.layers.iter().filter(|l| !l.is_output).enumerate() {
            assert!(l.scale > 0.0 && l.scale <= 1.0);
            let max_a = fwd[i].a.max().unwrap();
            let want = max_a.min(scale_target(&p));
            assert!((max_a * l.scale - want).abs() <= 1e-9 * want);
            assert_eq!(snn.layer_scales()[i], l.scale);
        }
        // small activations are left alone
        let ann = net(7, &[4, 8, 2], 1.0);
        let (_, report) = translate(&ann, &s, &quiet(), &p, 1e-3).unwrap();
        assert_eq!(report.layers[0].scale, 1.0);
    }

    #[test]
    fn compressed_layers_have_requested_width() {
        let ann = net(9, &[4, 16, 16, 8, 2], 150.0);
        let s = samples(10, 60, 4);
        let cfg = TranslationConfig { sizes: LayerSizes::Fraction(0.25), ..quiet() };
        let (snn, report) = translate(&ann, &s, &cfg, &NeuronParams::default(), 1e-3).unwrap();
        let widths: Vec<usize> = snn.hidden_layers().iter().map(|l| l.decoders.cols()).collect();
        assert_eq!(widths, vec![4, 4, 2]);
        assert_eq!(snn.out_dim(), 2);
        assert!(report.layers[..3].iter().all(|l| l.energy_fraction < 1.0));
    }

    #[test]
    fn full_size_solution_beats_perturbations() {
        let ann = net(11, &[4, 8, 2], 150.0);
        let s = samples(12, 80, 4);
        let p = NeuronParams::default();
        let (snn, report) = translate(&ann, &s, &quiet(), &p, 1e-3).unwrap();
        let fwd = ann_forward(&ann, &s).unwrap();
        let goal = signed_inv_lif(&fwd[0].a.scale(report.layers[0].scale), &p).unwrap();
        let phi = &snn.layers()[0].decoders;
        let best = s.matmul(phi).unwrap().sub(&goal).unwrap().frobenius_norm();
        assert!((best - report.layers[0].residual).abs() < 1e-9 * best.max(1.0));
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..100 {
            let alt = Matrix::from_fn(phi.rows(), phi.cols(), |i, j| phi.get(i, j) + rng.random_range(-0.05..0.05));
            let r = s.matmul(&alt).unwrap().sub(&goal).unwrap().frobenius_norm();
            assert!(best <= r);
        }
    }

    #[test]
    fn errors_name_problem() {
        let ann = net(1, &[3, 4, 2], 1.0);
        let p = NeuronParams::default();
        assert!(translate(&ann, &Matrix::zeros(0, 3), &quiet(), &p, 1e-3).is_err());
        assert!(translate(&ann, &samples(1, 5, 2), &quiet(), &p, 1e-3).is_err());
        let cfg = TranslationConfig { rep: 0, ..quiet() };
        assert!(translate(&ann, &samples(1, 5, 3), &cfg, &p, 1e-3).is_err());
        // activations at the refractory limit cannot be inverted
        let ann = net(1, &[3, 4, 2], 1e5);
        let cfg = TranslationConfig { scale_policy: ScalePolicy::None, ..quiet() };
        let err = translate(&ann, &samples(1, 20, 3), &cfg, &p, 1e-3).unwrap_err();
        assert!(matches!(err, LsoError::Layer { layer: 0, .. }), "{err}");
    }
}
