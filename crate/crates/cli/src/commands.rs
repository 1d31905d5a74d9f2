use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use deap_core::cnn::{self, argmax, deap_infer, evaluate, train_reference_with, Backend};
use deap_core::conv::{deap_convolve, oracle_convolve, output_dims, zero_pad, ConvShape};
use deap_core::io::deepbench::load_deepbench;
use deap_core::io::mnist::{load_split, split_paths, Split};
use deap_core::io::model::{load_model, model_to_string};
use deap_core::mrr::{adddrop_drop, adddrop_through, allpass_transmission, Phase};
use deap_core::perf::{
    compare_report, estimate_runtime, propagation_time, system_throughput, unit_power, CountModel, PerfConfig,
};
use deap_core::pwb::{encode_signed_inputs, EnvelopeVector, PwbConfig, WeightBank};
use deap_core::tensor::{Tensor3, Tensor4};
use serde_json::json;

use crate::manifest::Manifest;
use crate::{BackendArg, Command, Outcome, RunContext};

const DEFAULT_MNIST_DIR: &str = "data/mnist";
const DEFAULT_MODEL: &str = "models/mnist_reference.json";
const DEFAULT_DEEPBENCH: &str = "fixtures/table3.csv";

pub fn dispatch(ctx: &RunContext, command: Command) -> Result<Outcome> {
    let config_json = serde_json::to_string(&ctx.config)?;
    let name = command_name(&command);
    let mut m = Manifest::new(name, ctx.args.clone(), ctx.seed, &config_json, &ctx.output_dir)?;
    if let Some(path) = &ctx.config_path {
        m.input(path)?;
    }
    let outcome = match command {
        Command::DeviceCurve { samples } => device_curve(ctx, &mut m, samples),
        Command::Dot { weights, inputs, signed } => dot(ctx, &mut m, weights, inputs, signed),
        Command::Convolve {
            input,
            kernels,
            stride,
            pad,
            n_conv,
            backend,
        } => convolve(ctx, &mut m, &input, &kernels, stride, pad, n_conv, backend),
        Command::Train {
            mnist_dir,
            epochs,
            batch_size,
            learning_rate,
            train_size,
            model_out,
        } => train(ctx, &mut m, mnist_dir, epochs, batch_size, learning_rate, train_size, model_out),
        Command::Infer {
            model,
            mnist_dir,
            index,
            backend,
        } => infer(ctx, &mut m, model, mnist_dir, index, backend),
        Command::Evaluate {
            model,
            mnist_dir,
            backend,
            test_size,
            min_accuracy,
        } => evaluate_cmd(ctx, &mut m, model, mnist_dir, backend, test_size, min_accuracy),
        Command::Bench {
            deepbench,
            n_conv,
            unit_power,
            check,
        } => bench(ctx, &mut m, deepbench, &n_conv, unit_power, check),
        Command::Power {
            r,
            d,
            count_model,
            all_models,
            modulator_budget,
        } => power(ctx, &mut m, r, d, count_model, all_models, modulator_budget),
        Command::Report { deepbench } => report(ctx, &mut m, deepbench),
    }?;
    m.finish()?;
    Ok(outcome)
}

fn command_name(command: &Command) -> &'static str {
    match command {
        Command::DeviceCurve { .. } => "device-curve",
        Command::Dot { .. } => "dot",
        Command::Convolve { .. } => "convolve",
        Command::Train { .. } => "train",
        Command::Infer { .. } => "infer",
        Command::Evaluate { .. } => "evaluate",
        Command::Bench { .. } => "bench",
        Command::Power { .. } => "power",
        Command::Report { .. } => "report",
    }
}

impl RunContext {
    fn mnist_dir(&self, arg: Option<PathBuf>) -> PathBuf {
        arg.or_else(|| self.config.paths.mnist_dir.clone())
            .unwrap_or_else(|| PathBuf::from(DEFAULT_MNIST_DIR))
    }

    fn model_path(&self, arg: Option<PathBuf>) -> PathBuf {
        arg.or_else(|| self.config.paths.model.clone())
            .unwrap_or_else(|| PathBuf::from(DEFAULT_MODEL))
    }

    fn deepbench_path(&self, arg: Option<PathBuf>) -> PathBuf {
        arg.or_else(|| self.config.paths.deepbench.clone())
            .unwrap_or_else(|| PathBuf::from(DEFAULT_DEEPBENCH))
    }

    fn backend(&self, arg: BackendArg) -> Backend {
        match arg {
            BackendArg::Digital => Backend::Digital,
            BackendArg::Photonic => Backend::Photonic(self.config.deap_config()),
        }
    }
}

fn json_line(value: &serde_json::Value) -> Result<String> {
    Ok(serde_json::to_string_pretty(value)? + "\n")
}

fn device_curve(ctx: &RunContext, m: &mut Manifest, samples: usize) -> Result<Outcome> {
    if samples < 2 {
        bail!("need at least 2 samples, found {samples}");
    }
    let p = ctx.config.device;
    let mode = p.mode.to_string();
    let mut csv = String::from("phi,T_n,T_p,T_d,mode\n");
    let mut non_physical = 0usize;
    for i in 0..samples {
        let phi = Phase(2.0 * std::f64::consts::PI * i as f64 / (samples - 1) as f64);
        let mut value = |r: deap_core::Result<f64>| match r {
            Ok(v) => v,
            Err(_) => {
                non_physical += 1;
                f64::NAN
            }
        };
        let tp = value(adddrop_through(phi, &p));
        let td = value(adddrop_drop(phi, &p));
        let tn = allpass_transmission(phi, &p);
        writeln!(csv, "{},{},{},{},{}", phi.radians(), tn, tp, td, mode)?;
    }
    if non_physical > 0 {
        eprintln!("warning: {non_physical} add-drop values fall in the non-physical band and are written as NaN");
    }
    let path = m.output("device_curve.csv", csv)?;
    println!("wrote {samples} samples to {}", path.display());
    Ok(Outcome::Done)
}

fn dot(ctx: &RunContext, m: &mut Manifest, weights: Vec<f64>, inputs: Vec<f64>, signed: bool) -> Result<Outcome> {
    let deap = ctx.config.deap_config();
    let cfg = PwbConfig::new(weights.clone())
        .with_quant(deap.quant)
        .with_params(deap.device)
        .with_path(deap.path);
    if inputs.len() != weights.len() {
        bail!("{} inputs for {} weights", inputs.len(), weights.len());
    }
    let bank = WeightBank::program(&cfg)?;
    let (value, exact) = if signed {
        encode_signed_inputs(&inputs)?;
        let exact: f64 = inputs.iter().zip(&weights).map(|(x, w)| x * w).sum();
        (bank.signed_dot(&inputs)?, exact)
    } else {
        let mu = EnvelopeVector::new(inputs.clone())?;
        let exact: f64 = inputs.iter().zip(&weights).map(|(x, w)| x * w).sum();
        (bank.dot(&mu)?, exact)
    };
    let phases: Vec<f64> = bank.phases().iter().map(|p| p.radians()).collect();
    let doc = json!({
        "value": value,
        "exact": exact,
        "g_tia": bank.g_tia(),
        "tia_gain": bank.tia_gain(),
        "ring_weights": bank.ring_weights(),
        "phases": phases,
        "signed": signed,
    });
    m.output("dot.json", json_line(&doc)?)?;
    println!("{value}");
    Ok(Outcome::Done)
}

fn read_json<T: serde::de::DeserializeOwned>(m: &mut Manifest, path: &Path) -> Result<T> {
    m.input(path)?;
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

#[allow(clippy::too_many_arguments)]
fn convolve(
    ctx: &RunContext,
    m: &mut Manifest,
    input: &Path,
    kernels: &Path,
    stride: usize,
    pad: usize,
    n_conv: Option<usize>,
    backend: BackendArg,
) -> Result<Outcome> {
    let a: Tensor3 = read_json(m, input)?;
    let f: Tensor4 = read_json(m, kernels)?;
    let a = zero_pad(&a, pad);
    let mut cfg = ctx.config.deap_config();
    if let Some(n) = n_conv {
        cfg = cfg.with_n_conv(n);
    }
    let dims = output_dims(&ConvShape::of(&a, &f, stride))?;
    let (out, cycles) = match backend {
        BackendArg::Digital => (oracle_convolve(&a, &f, stride)?, None),
        BackendArg::Photonic => {
            let o = deap_convolve(&a, &f, stride, &cfg)?;
            (o.out, Some(o.cycles))
        }
    };
    let doc = json!({
        "backend": match backend { BackendArg::Digital => "digital", BackendArg::Photonic => "photonic" },
        "dims": dims,
        "cycles": cycles,
        "output": out,
    });
    m.output("convolve.json", json_line(&doc)?)?;
    println!(
        "{}x{}x{} output{}",
        dims.rows,
        dims.cols,
        dims.k,
        cycles.map(|c| format!(", {c} cycles")).unwrap_or_default()
    );
    Ok(Outcome::Done)
}

fn hash_split(m: &mut Manifest, dir: &Path, split: Split) -> Result<()> {
    let (images, labels) = split_paths(dir, split);
    m.input(&images)?;
    m.input(&labels)
}

#[allow(clippy::too_many_arguments)]
fn train(
    ctx: &RunContext,
    m: &mut Manifest,
    mnist_dir: Option<PathBuf>,
    epochs: Option<usize>,
    batch_size: Option<usize>,
    learning_rate: Option<f64>,
    train_size: Option<usize>,
    model_out: Option<PathBuf>,
) -> Result<Outcome> {
    let dir = ctx.mnist_dir(mnist_dir);
    let mut data = load_split(&dir, Split::Train).with_context(|| format!("loading MNIST from {}", dir.display()))?;
    hash_split(m, &dir, Split::Train)?;
    if let Some(n) = train_size {
        data = data.head(n);
    }
    let mut cfg = ctx.config.train;
    cfg.epochs = epochs.unwrap_or(cfg.epochs);
    cfg.batch_size = batch_size.unwrap_or(cfg.batch_size);
    cfg.learning_rate = learning_rate.unwrap_or(cfg.learning_rate);
    eprintln!("training on {} images for {} epochs", data.len(), cfg.epochs);
    let (model, report) = train_reference_with(&data, &cfg, |epoch, loss| {
        eprintln!("epoch {}: mean loss {loss:.5}", epoch + 1);
    })?;

    let text = model_to_string(&model)?;
    match model_out {
        Some(path) => {
            std::fs::write(&path, &text).with_context(|| format!("writing {}", path.display()))?;
            m.output("model.json", &text)?;
            println!("wrote {}", path.display());
        }
        None => {
            let path = m.output("model.json", &text)?;
            println!("wrote {}", path.display());
        }
    }
    let batches_per_epoch = data.len().div_ceil(cfg.batch_size);
    let mut csv = String::from("epoch,batch,loss\n");
    for (i, loss) in report.batch_losses.iter().enumerate() {
        writeln!(csv, "{},{},{}", i / batches_per_epoch + 1, i % batches_per_epoch + 1, loss)?;
    }
    m.output("train_losses.csv", csv)?;
    m.output(
        "train_report.json",
        json_line(&json!({ "config": cfg, "images": data.len(), "epoch_losses": report.epoch_losses }))?,
    )?;
    Ok(Outcome::Done)
}

fn infer(
    ctx: &RunContext,
    m: &mut Manifest,
    model: Option<PathBuf>,
    mnist_dir: Option<PathBuf>,
    index: usize,
    backend: BackendArg,
) -> Result<Outcome> {
    let model_path = ctx.model_path(model);
    let model = load_model(&model_path).with_context(|| format!("loading {}", model_path.display()))?;
    m.input(&model_path)?;
    let dir = ctx.mnist_dir(mnist_dir);
    let data = load_split(&dir, Split::Test).with_context(|| format!("loading MNIST from {}", dir.display()))?;
    hash_split(m, &dir, Split::Test)?;
    let Some(image) = data.images.get(index) else {
        bail!("test split has {} images, index {index} is out of range", data.len());
    };
    let scores = deap_infer(&model, image, &ctx.backend(backend))?;
    let predicted = argmax(&scores);
    let doc = json!({
        "index": index,
        "backend": ctx.backend(backend).name(),
        "scores": scores,
        "predicted": predicted,
        "label": data.labels[index],
    });
    m.output("infer.json", json_line(&doc)?)?;
    println!("predicted {predicted} (label {})", data.labels[index]);
    Ok(Outcome::Done)
}

fn evaluate_cmd(
    ctx: &RunContext,
    m: &mut Manifest,
    model: Option<PathBuf>,
    mnist_dir: Option<PathBuf>,
    backend: BackendArg,
    test_size: usize,
    min_accuracy: f64,
) -> Result<Outcome> {
    let model_path = ctx.model_path(model);
    let model = load_model(&model_path).with_context(|| format!("loading {}", model_path.display()))?;
    m.input(&model_path)?;
    let dir = ctx.mnist_dir(mnist_dir);
    let data = load_split(&dir, Split::Test)
        .with_context(|| format!("loading MNIST from {}", dir.display()))?
        .head(test_size);
    hash_split(m, &dir, Split::Test)?;
    let backend = ctx.backend(backend);
    let result = evaluate(&model, &data, &backend)?;
    let doc = json!({
        "backend": backend.name(),
        "quant": ctx.config.quant,
        "correct": result.correct,
        "total": result.total,
        "accuracy": result.accuracy,
        "min_accuracy": min_accuracy,
    });
    m.output("evaluation.json", json_line(&doc)?)?;
    let mut csv = String::from("index,label,predicted\n");
    for (i, (l, p)) in data.labels.iter().zip(&result.predictions).enumerate() {
        writeln!(csv, "{i},{l},{p}")?;
    }
    m.output("predictions.csv", csv)?;
    println!(
        "{} accuracy {:.4} ({}/{})",
        backend.name(),
        result.accuracy,
        result.correct,
        result.total
    );
    if result.accuracy < min_accuracy {
        return Ok(Outcome::CheckFailed(format!(
            "accuracy {:.4} is below {min_accuracy}",
            result.accuracy
        )));
    }
    Ok(Outcome::Done)
}

fn bench(
    ctx: &RunContext,
    m: &mut Manifest,
    deepbench: Option<PathBuf>,
    n_conv: &[usize],
    unit_power_w: f64,
    check: bool,
) -> Result<Outcome> {
    let path = ctx.deepbench_path(deepbench);
    let data = load_deepbench(&path).with_context(|| format!("loading {}", path.display()))?;
    m.input(&path)?;
    for w in &data.warnings {
        eprintln!("warning: {w}");
    }
    let pixel_time = system_throughput(&ctx.config.perf).pixel_time_s;
    let report = compare_report(&data, n_conv, unit_power_w, pixel_time)?;
    m.output("bench.csv", report.to_csv()?)?;
    m.output("bench_summary.json", report.summary_json()?)?;
    m.output("bench.svg", report.to_svg())?;
    for s in &report.summaries {
        let span = match (s.min_speedup, s.max_speedup) {
            (Some(lo), Some(hi)) => format!("speedup over mean GPU {lo:.2}x to {hi:.2}x"),
            _ => "no GPU runtimes".to_string(),
        };
        println!(
            "n_conv={}: {:.0} W, {:.3} of mean GPU power, {span}",
            s.n_conv, s.deap_power_w, s.power_ratio
        );
    }
    if !check {
        return Ok(Outcome::Done);
    }
    let missing: Vec<&String> = report.flags.iter().filter(|f| f.contains("no GPU")).collect();
    if !missing.is_empty() {
        return Ok(Outcome::CheckFailed(format!("{} shapes lack GPU data", missing.len())));
    }
    for shape in data.shapes() {
        let base = estimate_runtime(&shape, 1, pixel_time)?;
        for &n in n_conv {
            let t = estimate_runtime(&shape, n, pixel_time)?;
            if ((t * n as f64) - base).abs() > 1e-12 * base {
                return Ok(Outcome::CheckFailed(format!("estimate for n_conv={n} is not base/{n}")));
            }
        }
    }
    Ok(Outcome::Done)
}

fn power(
    ctx: &RunContext,
    m: &mut Manifest,
    r: usize,
    d: usize,
    count_model: Option<String>,
    all_models: bool,
    modulator_budget: Option<usize>,
) -> Result<Outcome> {
    let mut cfg: PerfConfig = ctx.config.perf;
    if let Some(model) = count_model {
        cfg.count_model = model.parse()?;
    }
    if let Some(budget) = modulator_budget {
        cfg.modulator_budget = budget;
    }
    let models: Vec<CountModel> = if all_models { CountModel::ALL.to_vec() } else { vec![cfg.count_model] };
    let mut csv = String::from("count_model,r,d,component,count,unit_w,watts\n");
    let mut totals = Vec::new();
    for model in models {
        let b = unit_power(r, d, &PerfConfig { count_model: model, ..cfg })?;
        for c in &b.components {
            writeln!(csv, "{},{r},{d},{},{},{},{}", model.name(), c.name, c.count, c.unit_w, c.watts)?;
        }
        println!("{}: {:.3} W", model.name(), b.total_w);
        totals.push(b);
    }
    m.output("power.csv", csv)?;
    m.output("power.json", json_line(&serde_json::to_value(&totals)?)?)?;
    Ok(Outcome::Done)
}

fn report(ctx: &RunContext, m: &mut Manifest, deepbench: Option<PathBuf>) -> Result<Outcome> {
    let cfg = ctx.config.perf;
    let t_prop = propagation_time(cfg.mrr_count_per_path, cfg.mrr_radius_m, &cfg);
    let throughput = system_throughput(&cfg);
    let mut edges = Vec::new();
    for (r, d) in [(3, 113), (10, 12)] {
        let entry = match unit_power(r, d, &cfg) {
            Ok(b) => json!({ "r": r, "d": d, "total_w": b.total_w, "within_budget": true }),
            Err(_) => {
                let relaxed = PerfConfig { modulator_budget: r * r * d, ..cfg };
                let b = unit_power(r, d, &relaxed)?;
                json!({ "r": r, "d": d, "total_w": b.total_w, "within_budget": false })
            }
        };
        edges.push(entry);
    }
    let path = ctx.deepbench_path(deepbench);
    let mut runtimes = Vec::new();
    if path.exists() {
        m.input(&path)?;
        for shape in load_deepbench(&path)?.shapes() {
            runtimes.push(json!({
                "shape": shape,
                "runtime_s": estimate_runtime(&shape, 1, throughput.pixel_time_s)?,
            }));
        }
    }
    let doc = json!({
        "propagation_time_s": t_prop,
        "propagation_rate_sps": 1.0 / t_prop,
        "throughput_sps": throughput.samples_per_s,
        "bottleneck": throughput.bottleneck(),
        "pixel_time_s": throughput.pixel_time_s,
        "unit_power": edges,
        "mean_gpu_power_w": deap_core::io::deepbench::mean_gpu_power(),
        "runtimes_single_unit": runtimes,
        "architecture": {
            "conv1": [cnn::KERNEL_SIDE, cnn::KERNEL_SIDE, 1, cnn::FEATURES],
            "conv2": [cnn::KERNEL_SIDE, cnn::KERNEL_SIDE, cnn::FEATURES, cnn::FEATURES],
            "fc1": [cnn::HIDDEN, cnn::FLAT],
            "fc2": [cnn::CLASSES, cnn::HIDDEN],
        },
    });
    m.output("report.json", json_line(&doc)?)?;
    println!(
        "t_prop {:.2} ps, throughput {:.1} GS/s ({}), pixel time {:.0} ps",
        t_prop * 1e12,
        throughput.samples_per_s / 1e9,
        throughput.bottleneck(),
        throughput.pixel_time_s * 1e12
    );
    Ok(Outcome::Done)
}
