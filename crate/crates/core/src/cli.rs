//! Command-line front end.
//!
//! Exit codes: 0 success, 1 data or model error, 2 argument error.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::error::LsoError;
use crate::flatten::load_conv;
use crate::io::{
    load_ann, load_labels_csv, load_matrix_csv, load_snn, read_json, save_ann, save_matrix_csv,
    save_snn, write_json_pretty,
};
use crate::matrix::Matrix;
use crate::netmodel::{ann_forward, AnnNetwork, SnnNetwork};
use crate::neuron::NeuronParams;
use crate::numerics::{NoiseKind, NoiseModel};
use crate::simulate::{
    accuracy, disagreement, run_rate, run_spiking_parallel, Disagreement, SimConfig,
};
use crate::translate::{translate, LayerSizes, TranslationConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_DATA: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

pub const DEFAULT_TAU_SYN: f64 = 0.001;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(LsoError),
}

impl From<LsoError> for CliError {
    fn from(e: LsoError) -> Self {
        CliError::Data(e)
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Data(_) => EXIT_DATA,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "argument error: {m}"),
            CliError::Data(e) => write!(f, "{e}"),
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

#[derive(Parser, Debug)]
#[command(name = "lso", version, about = "Translate ANNs into rate-coded LIF spiking networks")]
pub struct Cli {
    /// JSON run configuration; command-line flags take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Build an SNN from an ANN and a sample set.
    Translate(TranslateArgs),
    /// Clocked spiking simulation of an SNN.
    Simulate(SimulateArgs),
    /// Steady-state rate evaluation of an SNN.
    Rate(RateArgs),
    /// Disagreement (and accuracy) between an ANN and an SNN.
    Compare(CompareArgs),
    /// Convert a convolutional network into a dense ANN.
    Flatten(FlattenArgs),
}

#[derive(Args, Debug, Default)]
pub struct NeuronArgs {
    #[arg(long)]
    pub tau_m: Option<f64>,
    #[arg(long = "resistance")]
    pub r: Option<f64>,
    #[arg(long)]
    pub v_th: Option<f64>,
    #[arg(long)]
    pub delta_ref: Option<f64>,
    #[arg(long)]
    pub i_bias: Option<f64>,
    #[arg(long)]
    pub f_max: Option<f64>,
}

#[derive(Args, Debug)]
pub struct TranslateArgs {
    #[arg(long)]
    pub ann: Option<PathBuf>,
    #[arg(long)]
    pub samples: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// `NN%` for every hidden layer, or a comma list of neuron counts.
    #[arg(long)]
    pub sizes: Option<String>,
    #[arg(long)]
    pub rep: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// none | diagonal | full
    #[arg(long)]
    pub noise: Option<String>,
    #[arg(long)]
    pub noise_scale: Option<f64>,
    #[arg(long)]
    pub tau_syn: Option<f64>,
    #[command(flatten)]
    pub neuron: NeuronArgs,
}

#[derive(Args, Debug)]
pub struct SimArgs {
    /// Presentation time per sample (s).
    #[arg(long)]
    pub time: Option<f64>,
    #[arg(long)]
    pub dt: Option<f64>,
    #[arg(long)]
    pub settle: Option<f64>,
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    #[arg(long)]
    pub snn: Option<PathBuf>,
    #[arg(long)]
    pub inputs: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// JSON run statistics.
    #[arg(long)]
    pub stats: Option<PathBuf>,
    #[command(flatten)]
    pub sim: SimArgs,
}

#[derive(Args, Debug)]
pub struct RateArgs {
    #[arg(long)]
    pub snn: Option<PathBuf>,
    #[arg(long)]
    pub inputs: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct CompareArgs {
    #[arg(long)]
    pub ann: Option<PathBuf>,
    #[arg(long)]
    pub inputs: Option<PathBuf>,
    /// Precomputed SNN outputs (CSV).
    #[arg(long, conflicts_with = "snn")]
    pub snn_outputs: Option<PathBuf>,
    /// SNN to evaluate on the inputs.
    #[arg(long)]
    pub snn: Option<PathBuf>,
    /// Evaluate the SNN in rate mode instead of spiking.
    #[arg(long)]
    pub rate: bool,
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// e.g. `time=10,50,100,500ms`
    #[arg(long)]
    pub sweep: Option<String>,
    /// JSON report, or the sweep CSV when `--sweep` is given.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub sim: SimArgs,
}

#[derive(Args, Debug)]
pub struct FlattenArgs {
    #[arg(long)]
    pub conv: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Optional neuron constants from a config file.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NeuronOverrides {
    pub tau_m: Option<f64>,
    #[serde(rename = "R")]
    pub r: Option<f64>,
    pub v_th: Option<f64>,
    pub delta_ref: Option<f64>,
    pub i_bias: Option<f64>,
    pub f_max: Option<f64>,
}

/// Settings read from `--config`. Every field is optional.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub ann: Option<PathBuf>,
    pub conv: Option<PathBuf>,
    pub samples: Option<PathBuf>,
    pub snn: Option<PathBuf>,
    pub inputs: Option<PathBuf>,
    pub snn_outputs: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub report: Option<PathBuf>,
    pub stats: Option<PathBuf>,
    pub sizes: Option<String>,
    pub rep: Option<usize>,
    pub seed: Option<u64>,
    pub noise: Option<String>,
    pub noise_scale: Option<f64>,
    pub tau_syn: Option<f64>,
    pub time: Option<f64>,
    pub dt: Option<f64>,
    pub settle: Option<f64>,
    pub threads: Option<usize>,
    pub sweep: Option<String>,
    pub neuron: NeuronOverrides,
}

fn pick<T>(flag: Option<T>, config: &Option<T>) -> Option<T>
where
    T: Clone,
{
    flag.or_else(|| config.clone())
}

fn required(value: Option<PathBuf>, name: &str) -> CliResult<PathBuf> {
    value.ok_or_else(|| usage(format!("--{name} is required")))
}

/// Parse `25%` or `8,4,2`.
pub fn parse_sizes(s: &str) -> CliResult<LayerSizes> {
    let s = s.trim();
    if let Some(pct) = s.strip_suffix('%') {
        let v: f64 = pct
            .trim()
            .parse()
            .map_err(|_| usage(format!("bad size percentage {s:?}")))?;
        if !(v > 0.0 && v <= 100.0) {
            return Err(usage(format!("size percentage must lie in (0, 100], got {s}")));
        }
        return Ok(if v == 100.0 {
            LayerSizes::Full
        } else {
            LayerSizes::Fraction(v / 100.0)
        });
    }
    s.split(',')
        .map(|t| {
            t.trim()
                .parse::<usize>()
                .map_err(|_| usage(format!("bad layer size {t:?} in {s:?}")))
        })
        .collect::<CliResult<Vec<_>>>()
        .map(LayerSizes::Absolute)
}

pub fn parse_noise(kind: &str, scale: f64) -> CliResult<NoiseModel> {
    let kind = match kind {
        "none" => NoiseKind::None,
        "diagonal" | "diag" => NoiseKind::Diagonal,
        "full" | "full_covariance" => NoiseKind::FullCovariance,
        other => return Err(usage(format!("unknown noise kind {other:?}"))),
    };
    if !(scale >= 0.0 && scale.is_finite()) {
        return Err(usage(format!("noise scale must be finite and >= 0, got {scale}")));
    }
    Ok(NoiseModel { kind, scale })
}

/// Parse `time=10,50,100,500ms` into seconds. Units: `s` (default) or `ms`.
pub fn parse_sweep(s: &str) -> CliResult<Vec<f64>> {
    let list = s
        .strip_prefix("time=")
        .ok_or_else(|| usage(format!("sweep must look like time=10,50ms, got {s:?}")))?;
    let (list, unit) = if let Some(l) = list.strip_suffix("ms") {
        (l, 1e-3)
    } else if let Some(l) = list.strip_suffix('s') {
        (l, 1.0)
    } else {
        (list, 1.0)
    };
    let times = list
        .split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .ok()
                .filter(|v| *v > 0.0 && v.is_finite())
                .map(|v| v * unit)
                .ok_or_else(|| usage(format!("bad sweep time {t:?}")))
        })
        .collect::<CliResult<Vec<_>>>()?;
    if times.is_empty() {
        return Err(usage("empty sweep"));
    }
    Ok(times)
}

fn neuron_params(flags: &NeuronArgs, cfg: &NeuronOverrides) -> CliResult<NeuronParams<f64>> {
    let d = NeuronParams::<f64>::default();
    let p = NeuronParams {
        tau_m: flags.tau_m.or(cfg.tau_m).unwrap_or(d.tau_m),
        r: flags.r.or(cfg.r).unwrap_or(d.r),
        v_th: flags.v_th.or(cfg.v_th).unwrap_or(d.v_th),
        delta_ref: flags.delta_ref.or(cfg.delta_ref).unwrap_or(d.delta_ref),
        i_bias: flags.i_bias.or(cfg.i_bias).unwrap_or(d.i_bias),
        f_max: flags.f_max.or(cfg.f_max).unwrap_or(d.f_max),
    };
    p.validate().map_err(|e| usage(e.to_string()))?;
    Ok(p)
}

fn sim_config(flags: &SimArgs, cfg: &RunConfig) -> CliResult<SimConfig> {
    let d = SimConfig::default();
    let sim = SimConfig {
        dt: pick(flags.dt, &cfg.dt).unwrap_or(d.dt),
        t_total: pick(flags.time, &cfg.time).unwrap_or(d.t_total),
        settle_frac: pick(flags.settle, &cfg.settle).unwrap_or(d.settle_frac),
        seed: cfg.seed.unwrap_or(0),
    };
    sim.validate().map_err(|e| usage(e.to_string()))?;
    Ok(sim)
}

fn thread_pool(flags: &SimArgs, cfg: &RunConfig) -> CliResult<rayon::ThreadPool> {
    let threads = pick(flags.threads, &cfg.threads).unwrap_or(0);
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| usage(format!("cannot start {threads} worker threads: {e}")))
}

fn cmd_translate(a: TranslateArgs, cfg: &RunConfig) -> CliResult<()> {
    let ann_path = required(pick(a.ann, &cfg.ann), "ann")?;
    let samples_path = required(pick(a.samples, &cfg.samples), "samples")?;
    let out = required(pick(a.out, &cfg.out), "out")?;
    let report = pick(a.report, &cfg.report);
    let sizes = match pick(a.sizes, &cfg.sizes) {
        Some(s) => parse_sizes(&s)?,
        None => LayerSizes::Full,
    };
    let rep = pick(a.rep, &cfg.rep).unwrap_or(1);
    if rep < 1 {
        return Err(usage("--rep must be at least 1"));
    }
    let noise = parse_noise(
        pick(a.noise, &cfg.noise).as_deref().unwrap_or("diagonal"),
        pick(a.noise_scale, &cfg.noise_scale).unwrap_or(1.0),
    )?;
    let tau_syn = pick(a.tau_syn, &cfg.tau_syn).unwrap_or(DEFAULT_TAU_SYN);
    if !(tau_syn > 0.0 && tau_syn.is_finite()) {
        return Err(usage(format!("--tau-syn must be positive, got {tau_syn}")));
    }
    let p = neuron_params(&a.neuron, &cfg.neuron)?;
    let tcfg = TranslationConfig {
        rep,
        sizes,
        noise,
        seed: pick(a.seed, &cfg.seed).unwrap_or(0),
        ..TranslationConfig::default()
    };

    let ann = load_ann(&ann_path)?;
    let samples = load_matrix_csv(&samples_path)?;
    let (snn, rep) = translate(&ann, &samples, &tcfg, &p, tau_syn)?;
    save_snn(&out, &snn)?;
    for l in &rep.layers {
        println!(
            "layer {}: {} -> {} neurons, residual {:.6e}, energy kept {:.6}, scale {:.6}",
            l.layer, l.ann_width, l.snn_width, l.residual, l.energy_fraction, l.scale
        );
    }
    if let Some(path) = report {
        write_json_pretty(&path, &rep)?;
    }
    Ok(())
}

fn load_inputs(snn: &SnnNetwork<f64>, path: &Path) -> CliResult<Matrix<f64>> {
    let x = load_matrix_csv(path)?;
    if x.cols() != snn.in_dim() {
        return Err(LsoError::dimension(
            format!("inputs {}", path.display()),
            format!("{} columns", snn.in_dim()),
            format!("{} columns", x.cols()),
        )
        .into());
    }
    Ok(x)
}

#[derive(Serialize)]
struct SimStats {
    mode: &'static str,
    samples: usize,
    outputs: usize,
    dt: f64,
    t_total: f64,
    settle_frac: f64,
    steps_per_sample: usize,
    averaged_steps: usize,
    spike_counts: Vec<u64>,
    mean_rates: Vec<f64>,
}

fn cmd_simulate(a: SimulateArgs, cfg: &RunConfig) -> CliResult<()> {
    let sim = sim_config(&a.sim, cfg)?;
    let snn_path = required(pick(a.snn, &cfg.snn), "snn")?;
    let inputs = required(pick(a.inputs, &cfg.inputs), "inputs")?;
    let out = required(pick(a.out, &cfg.out), "out")?;
    let stats = pick(a.stats, &cfg.stats);
    let pool = thread_pool(&a.sim, cfg)?;

    let snn = load_snn(&snn_path)?;
    let x = load_inputs(&snn, &inputs)?;
    let res = pool.install(|| run_spiking_parallel(&snn, &x, &sim))?;
    save_matrix_csv(&out, &res.outputs)?;
    if let Some(path) = stats {
        let mean_rates = res
            .spike_counts
            .iter()
            .zip(snn.hidden_layers())
            .map(|(&c, l)| c as f64 / (l.decoders.cols() as f64 * res.simulated_seconds))
            .collect();
        write_json_pretty(
            &path,
            &SimStats {
                mode: "spiking",
                samples: res.samples,
                outputs: snn.out_dim(),
                dt: sim.dt,
                t_total: sim.t_total,
                settle_frac: sim.settle_frac,
                steps_per_sample: res.steps_per_sample,
                averaged_steps: res.averaged_steps,
                spike_counts: res.spike_counts,
                mean_rates,
            },
        )?;
    }
    println!("simulated {} samples, {} steps each", res.samples, res.steps_per_sample);
    Ok(())
}

fn cmd_rate(a: RateArgs, cfg: &RunConfig) -> CliResult<()> {
    let snn_path = required(pick(a.snn, &cfg.snn), "snn")?;
    let inputs = required(pick(a.inputs, &cfg.inputs), "inputs")?;
    let out = required(pick(a.out, &cfg.out), "out")?;
    let snn = load_snn(&snn_path)?;
    let x = load_inputs(&snn, &inputs)?;
    save_matrix_csv(&out, &run_rate(&snn, &x)?)?;
    println!("evaluated {} samples", x.rows());
    Ok(())
}

#[derive(Serialize)]
struct CompareReport {
    disagreement: Disagreement,
    #[serde(skip_serializing_if = "Option::is_none")]
    ann_accuracy: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    snn_accuracy: Option<f64>,
}

fn ann_outputs(ann: &AnnNetwork<f64>, x: &Matrix<f64>) -> CliResult<Matrix<f64>> {
    Ok(ann_forward(ann, x)?.pop().expect("non-empty network").y)
}

fn cmd_compare(a: CompareArgs, cfg: &RunConfig) -> CliResult<()> {
    let ann_path = required(pick(a.ann, &cfg.ann), "ann")?;
    let inputs = required(pick(a.inputs, &cfg.inputs), "inputs")?;
    let snn_outputs = pick(a.snn_outputs, &cfg.snn_outputs);
    let snn_path = pick(a.snn, &cfg.snn);
    let labels_path = pick(a.labels, &cfg.labels);
    let out = pick(a.out, &cfg.out);
    let sweep = pick(a.sweep, &cfg.sweep).map(|s| parse_sweep(&s)).transpose()?;
    let sim = sim_config(&a.sim, cfg)?;
    let pool = thread_pool(&a.sim, cfg)?;
    if snn_outputs.is_some() && snn_path.is_some() {
        return Err(usage("give either --snn-outputs or --snn, not both"));
    }
    if snn_outputs.is_none() && snn_path.is_none() {
        return Err(usage("one of --snn-outputs or --snn is required"));
    }
    if sweep.is_some() && snn_path.is_none() {
        return Err(usage("--sweep needs --snn"));
    }

    let ann = load_ann(&ann_path)?;
    let x = load_matrix_csv(&inputs)?;
    let expected = ann_outputs(&ann, &x)?;

    if let Some(times) = sweep {
        let snn = load_snn(snn_path.as_ref().expect("checked above"))?;
        let mut csv = String::new();
        for t in times {
            let sc = SimConfig { t_total: t, ..sim };
            sc.validate().map_err(|e| usage(e.to_string()))?;
            let got = pool.install(|| run_spiking_parallel(&snn, &x, &sc))?.outputs;
            let d = disagreement(&expected, &got)?;
            println!(
                "time {:.4} s: normalized {:.6} ± {:.6}, raw {:.6} ± {:.6}",
                t, d.normalized_mean, d.normalized_std, d.mean, d.std
            );
            csv.push_str(&format!("{t:?},{:?},{:?}\n", d.normalized_mean, d.normalized_std));
        }
        if let Some(path) = out {
            std::fs::write(&path, csv).map_err(|e| LsoError::io(&path, e))?;
        }
        return Ok(());
    }

    let got = match (&snn_outputs, &snn_path) {
        (Some(path), _) => load_matrix_csv(path)?,
        (None, Some(path)) => {
            let snn = load_snn(path)?;
            if snn.in_dim() != x.cols() {
                return Err(LsoError::dimension(
                    format!("inputs {}", inputs.display()),
                    format!("{} columns", snn.in_dim()),
                    format!("{} columns", x.cols()),
                )
                .into());
            }
            if a.rate {
                run_rate(&snn, &x)?
            } else {
                pool.install(|| run_spiking_parallel(&snn, &x, &sim))?.outputs
            }
        }
        (None, None) => unreachable!(),
    };
    let d = disagreement(&expected, &got)?;
    println!(
        "disagreement: raw {:.6} ± {:.6}, normalized {:.6} ± {:.6}",
        d.mean, d.std, d.normalized_mean, d.normalized_std
    );
    let (ann_accuracy, snn_accuracy) = match labels_path {
        Some(path) => {
            let labels = load_labels_csv(&path)?;
            let ann_acc = accuracy(&expected, &labels)?;
            let snn_acc = accuracy(&got, &labels)?;
            println!("accuracy: ann {ann_acc:.6}, snn {snn_acc:.6}");
            (Some(ann_acc), Some(snn_acc))
        }
        None => (None, None),
    };
    if let Some(path) = out {
        write_json_pretty(
            &path,
            &CompareReport {
                disagreement: d,
                ann_accuracy,
                snn_accuracy,
            },
        )?;
    }
    Ok(())
}

fn cmd_flatten(a: FlattenArgs, cfg: &RunConfig) -> CliResult<()> {
    let conv = required(pick(a.conv, &cfg.conv), "conv")?;
    let out = required(pick(a.out, &cfg.out), "out")?;
    let ann = load_conv(&conv)?.flatten()?;
    for (i, l) in ann.layers().iter().enumerate() {
        let zeros = l.weights.zero_fraction();
        println!(
            "layer {i}: {}x{} {}, {:.2}% zeros, density {:.4}",
            l.in_dim(),
            l.out_dim(),
            l.activation.name(),
            100.0 * zeros,
            1.0 - zeros
        );
    }
    save_ann(&out, &ann)?;
    Ok(())
}

fn dispatch(cli: Cli) -> CliResult<()> {
    let cfg = match &cli.config {
        Some(path) => read_json::<RunConfig>(path)?,
        None => RunConfig::default(),
    };
    match cli.command {
        Command::Translate(a) => cmd_translate(a, &cfg),
        Command::Simulate(a) => cmd_simulate(a, &cfg),
        Command::Rate(a) => cmd_rate(a, &cfg),
        Command::Compare(a) => cmd_compare(a, &cfg),
        Command::Flatten(a) => cmd_flatten(a, &cfg),
    }
}

/// Parse `args` (including the program name) and run; returns the exit code.
pub fn run<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {}", e.to_string().replace('\n', " "));
            e.exit_code()
        }
    }
}
