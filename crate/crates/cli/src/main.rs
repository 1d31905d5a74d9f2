//! `deap`: reproducible experiments on the photonic convolution simulator.

mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use deap_core::io::config::{load_run_config, RunConfig};
use deap_core::mrr::EquationMode;
use deap_core::quant::QuantSpec;

#[derive(Debug, Parser)]
#[command(name = "deap", version, about = "Photonic convolution accelerator simulator")]
pub struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
pub struct Global {
    /// Run configuration (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for every random choice.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Which form of the ring equations to use.
    #[arg(long, global = true, value_enum)]
    mode: Option<Mode>,
    /// Driver precision in bits; 0 turns quantization off.
    #[arg(long, global = true)]
    quant_bits: Option<u8>,
    /// Directory for every file a command writes.
    #[arg(long, global = true, default_value = "out")]
    output_dir: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Mode {
    Verbatim,
    Consistent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BackendArg {
    Digital,
    Photonic,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample the ring transmissions over one free spectral range.
    DeviceCurve {
        #[arg(long, default_value_t = 1000)]
        samples: usize,
    },
    /// Dot product on a single weight bank.
    Dot {
        /// Comma-separated weights.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
        weights: Vec<f64>,
        /// Comma-separated envelopes in [0, 1], or signed values with --signed.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
        inputs: Vec<f64>,
        /// Treat inputs as signed values in [-1, 1].
        #[arg(long)]
        signed: bool,
    },
    /// Convolve a tensor file with a kernel file.
    Convolve {
        /// `H x W x D` tensor JSON.
        #[arg(long)]
        input: PathBuf,
        /// `R_h x R_w x D x K` tensor JSON.
        #[arg(long)]
        kernels: PathBuf,
        #[arg(long, default_value_t = 1)]
        stride: usize,
        /// Zero padding added on every side.
        #[arg(long, default_value_t = 0)]
        pad: usize,
        #[arg(long)]
        n_conv: Option<usize>,
        #[arg(long, value_enum, default_value = "photonic")]
        backend: BackendArg,
    },
    /// Train the reference network on MNIST.
    Train {
        #[arg(long)]
        mnist_dir: Option<PathBuf>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        batch_size: Option<usize>,
        #[arg(long)]
        learning_rate: Option<f64>,
        /// Use only the first N training images.
        #[arg(long)]
        train_size: Option<usize>,
        /// Where to write the model; defaults to `<output-dir>/model.json`.
        #[arg(long)]
        model_out: Option<PathBuf>,
    },
    /// Class scores for one test image.
    Infer {
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        mnist_dir: Option<PathBuf>,
        /// Index into the test split.
        #[arg(long, default_value_t = 0)]
        index: usize,
        #[arg(long, value_enum, default_value = "photonic")]
        backend: BackendArg,
    },
    /// Accuracy on the test split.
    Evaluate {
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        mnist_dir: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "photonic")]
        backend: BackendArg,
        #[arg(long, default_value_t = 500)]
        test_size: usize,
        /// Exit with status 2 below this accuracy.
        #[arg(long, default_value_t = 0.97)]
        min_accuracy: f64,
    },
    /// Compare runtime estimates with GPU benchmarks.
    Bench {
        #[arg(long)]
        deepbench: Option<PathBuf>,
        #[arg(long, value_delimiter = ',', default_value = "1,2")]
        n_conv: Vec<usize>,
        /// Power of one unit in watts.
        #[arg(long, default_value_t = 110.0)]
        unit_power: f64,
        /// Exit with status 2 unless every shape has GPU data and the
        /// estimates scale exactly with the unit count.
        #[arg(long)]
        check: bool,
    },
    /// Power of one unit, per component.
    Power {
        #[arg(long)]
        r: usize,
        #[arg(long)]
        d: usize,
        /// symmetric, literal or modulator-dacs; defaults to the config.
        #[arg(long)]
        count_model: Option<String>,
        /// Table every count model.
        #[arg(long)]
        all_models: bool,
        #[arg(long)]
        modulator_budget: Option<usize>,
    },
    /// Headline numbers of the performance model.
    Report {
        #[arg(long)]
        deepbench: Option<PathBuf>,
    },
}

/// How a successful command ended.
pub enum Outcome {
    Done,
    CheckFailed(String),
}

/// Effective configuration after applying command-line overrides.
pub struct RunContext {
    pub config: RunConfig,
    pub config_path: Option<PathBuf>,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub args: Vec<String>,
}

fn build_context(global: &Global, args: Vec<String>) -> Result<RunContext> {
    let mut config = match &global.config {
        Some(path) => load_run_config(path).with_context(|| format!("loading {}", path.display()))?,
        None => RunConfig::default(),
    };
    if let Some(mode) = global.mode {
        config.device.mode = match mode {
            Mode::Verbatim => EquationMode::Verbatim,
            Mode::Consistent => EquationMode::Consistent,
        };
    }
    if let Some(bits) = global.quant_bits {
        config.quant = if bits == 0 { QuantSpec::off() } else { QuantSpec::new(bits)? };
    }
    let seed = global.seed.unwrap_or(config.train.seed);
    config.train.seed = seed;
    config.validate()?;
    Ok(RunContext {
        config,
        config_path: global.config.clone(),
        seed,
        output_dir: global.output_dir.clone(),
        args,
    })
}

fn configure_threads() -> Result<()> {
    if let Ok(value) = std::env::var("DEAP_SIM_THREADS") {
        let n: usize = value
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .with_context(|| format!("DEAP_SIM_THREADS must be a positive integer, found `{value}`"))?;
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn run(cli: Cli, args: Vec<String>) -> Result<Outcome> {
    configure_threads()?;
    let ctx = build_context(&cli.global, args)?;
    commands::dispatch(&ctx, cli.command)
}

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli, args.into_iter().skip(1).collect()) {
        Ok(Outcome::Done) => ExitCode::SUCCESS,
        Ok(Outcome::CheckFailed(msg)) => {
            eprintln!("check failed: {msg}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
