//! Analytical speed and power model of a convolutional unit.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::conv::{cycle_count, output_dims, ConvShape};
use crate::error::{Error, Result};
use crate::io::deepbench::{mean_gpu_power, DeepBench};

/// Default time to produce one output pixel.
pub const PIXEL_TIME_S: f64 = 200e-12;

/// How many of each component a unit carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CountModel {
    /// `R^2 D` modulator rings and `R^2 D` weight rings, each with its own DAC.
    #[default]
    Symmetric,
    /// `R^2` modulator rings with DACs, `R^2 D` weight rings without DACs.
    Literal,
    /// `R^2 D` modulator rings with DACs, `R^2 D` weight rings without DACs.
    ModulatorDacs,
}

impl CountModel {
    pub const ALL: [CountModel; 3] = [CountModel::Symmetric, CountModel::Literal, CountModel::ModulatorDacs];

    pub fn name(self) -> &'static str {
        match self {
            CountModel::Symmetric => "symmetric",
            CountModel::Literal => "literal",
            CountModel::ModulatorDacs => "modulator-dacs",
        }
    }
}

impl std::str::FromStr for CountModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        CountModel::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::config(format!("unknown count model `{s}`")))
    }
}

/// Unit prices and component speeds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PerfConfig {
    pub laser_w: f64,
    pub mrr_w: f64,
    pub dac_w: f64,
    pub tia_w: f64,
    pub adc_w: f64,
    /// Samples per second.
    pub pd_sps: f64,
    pub tia_sps: f64,
    pub dac_sps: f64,
    pub adc_sps: f64,
    pub mrr_mod_sps: f64,
    pub mrr_radius_m: f64,
    /// Rings a signal passes on its way to the photodiodes.
    pub mrr_count_per_path: usize,
    pub light_speed: f64,
    /// Modulator rings available to one unit.
    pub modulator_budget: usize,
    pub count_model: CountModel,
}

impl Default for PerfConfig {
    fn default() -> Self {
        PerfConfig {
            laser_w: 0.100,
            mrr_w: 0.0195,
            dac_w: 0.026,
            tia_w: 0.017,
            adc_w: 0.076,
            pd_sps: 25e9,
            tia_sps: 10e9,
            dac_sps: 5e9,
            adc_sps: 5e9,
            mrr_mod_sps: 128e9,
            mrr_radius_m: 10e-6,
            mrr_count_per_path: 100,
            light_speed: 299_792_458.0,
            modulator_budget: 1024,
            count_model: CountModel::Symmetric,
        }
    }
}

impl PerfConfig {
    pub fn validate(&self) -> Result<()> {
        let reals = [
            ("laser_w", self.laser_w),
            ("mrr_w", self.mrr_w),
            ("dac_w", self.dac_w),
            ("tia_w", self.tia_w),
            ("adc_w", self.adc_w),
            ("pd_sps", self.pd_sps),
            ("tia_sps", self.tia_sps),
            ("dac_sps", self.dac_sps),
            ("adc_sps", self.adc_sps),
            ("mrr_mod_sps", self.mrr_mod_sps),
            ("mrr_radius_m", self.mrr_radius_m),
            ("light_speed", self.light_speed),
        ];
        for (name, v) in reals {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(format!("{name} = {v} must be positive")));
            }
        }
        if self.mrr_count_per_path == 0 || self.modulator_budget == 0 {
            return Err(Error::config("ring counts must be positive"));
        }
        Ok(())
    }
}

/// Time for light to pass `k` rings of radius `radius_m`: `k 2 pi r / c`.
pub fn propagation_time(k: usize, radius_m: f64, cfg: &PerfConfig) -> f64 {
    k as f64 * 2.0 * std::f64::consts::PI * radius_m / cfg.light_speed
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Throughput {
    pub samples_per_s: f64,
    /// Every stage running at exactly the minimum rate.
    pub bottlenecks: Vec<&'static str>,
    pub pixel_time_s: f64,
}

impl Throughput {
    /// Bottleneck names joined by `/`, e.g. `dac/adc`.
    pub fn bottleneck(&self) -> String {
        self.bottlenecks.join("/")
    }
}

/// The slowest stage of the signal chain sets the pixel rate.
pub fn system_throughput(cfg: &PerfConfig) -> Throughput {
    let stages = [
        ("propagation", 1.0 / propagation_time(cfg.mrr_count_per_path, cfg.mrr_radius_m, cfg)),
        ("pd", cfg.pd_sps),
        ("tia", cfg.tia_sps),
        ("dac", cfg.dac_sps),
        ("adc", cfg.adc_sps),
        ("mrr_mod", cfg.mrr_mod_sps),
    ];
    let rate = stages.iter().map(|s| s.1).fold(f64::INFINITY, f64::min);
    Throughput {
        samples_per_s: rate,
        bottlenecks: stages.iter().filter(|s| s.1 == rate).map(|s| s.0).collect(),
        pixel_time_s: 1.0 / rate,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Component {
    pub name: &'static str,
    pub count: usize,
    pub unit_w: f64,
    pub watts: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PowerBreakdown {
    pub r: usize,
    pub d: usize,
    pub count_model: CountModel,
    pub components: Vec<Component>,
    pub total_w: f64,
}

/// Power of one unit with an `r x r` kernel over `d` channels.
pub fn unit_power(r: usize, d: usize, cfg: &PerfConfig) -> Result<PowerBreakdown> {
    cfg.validate()?;
    if r == 0 || d == 0 {
        return Err(Error::config(format!("R = {r} and D = {d} must be positive")));
    }
    let r2 = r * r;
    let r2d = r2 * d;
    if r2d > cfg.modulator_budget {
        return Err(Error::config(format!(
            "R^2 D = {r2d} modulators exceeds the budget of {}",
            cfg.modulator_budget
        )));
    }
    let (modulators, weight_dacs) = match cfg.count_model {
        CountModel::Symmetric => (r2d, r2d),
        CountModel::Literal => (r2, 0),
        CountModel::ModulatorDacs => (r2d, 0),
    };
    let parts = [
        ("laser", r2, cfg.laser_w),
        ("modulator_mrr", modulators, cfg.mrr_w),
        ("modulator_dac", modulators, cfg.dac_w),
        ("weight_mrr", r2d, cfg.mrr_w),
        ("weight_dac", weight_dacs, cfg.dac_w),
        ("tia", d, cfg.tia_w),
        ("adc", 1, cfg.adc_w),
    ];
    let components: Vec<Component> = parts
        .into_iter()
        .map(|(name, count, unit_w)| Component {
            name,
            count,
            unit_w,
            watts: count as f64 * unit_w,
        })
        .collect();
    Ok(PowerBreakdown {
        r,
        d,
        count_model: cfg.count_model,
        total_w: components.iter().map(|c| c.watts).sum(),
        components,
    })
}

/// Runtime of `shape` on `n_conv` units from the closed-form estimate
/// `pixel_time N K / n_conv ((H - R_h) / S + 1) ((W - R_w) / S + 1)`,
/// with real-valued factors.
pub fn estimate_runtime(shape: &ConvShape, n_conv: usize, pixel_time_s: f64) -> Result<f64> {
    shape.validate()?;
    if n_conv == 0 {
        return Err(Error::config("n_conv must be positive"));
    }
    let f = |v: usize| v as f64;
    let rows = f(shape.h - shape.rh) / f(shape.s) + 1.0;
    let cols = f(shape.w - shape.rw) / f(shape.s) + 1.0;
    Ok(pixel_time_s * (f(shape.n) * f(shape.k) / f(n_conv)) * rows * cols)
}

/// Runtime from whole scheduling cycles over the pixels actually produced.
pub fn estimate_runtime_cycles(shape: &ConvShape, n_conv: usize, pixel_time_s: f64) -> Result<f64> {
    if n_conv == 0 {
        return Err(Error::config("n_conv must be positive"));
    }
    let pixels = output_dims(shape)?.pixels();
    let cycles = shape.n as u64 * cycle_count(shape.k, pixels, n_conv);
    Ok(pixel_time_s * cycles as f64)
}

/// One line of the comparison table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportRow {
    pub w: usize,
    pub h: usize,
    pub d: usize,
    pub n: usize,
    pub k: usize,
    pub r_w: usize,
    pub r_h: usize,
    pub s: usize,
    pub n_conv: usize,
    pub deap_runtime_s: f64,
    pub deap_cycle_runtime_s: f64,
    pub deap_power_w: f64,
    pub gpu: String,
    pub gpu_power_w: Option<f64>,
    pub gpu_runtime_s: Option<f64>,
    /// GPU runtime over DEAP runtime.
    pub speedup: Option<f64>,
    /// DEAP energy over GPU energy for this convolution.
    pub energy_ratio: Option<f64>,
}

/// Aggregate over all shapes for one unit count.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub n_conv: usize,
    pub deap_power_w: f64,
    /// DEAP power over the mean GPU power.
    pub power_ratio: f64,
    /// Extremes over shapes of mean GPU runtime over DEAP runtime.
    pub min_speedup: Option<f64>,
    pub max_speedup: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompareReport {
    pub pixel_time_s: f64,
    pub unit_power_w: f64,
    pub mean_gpu_power_w: f64,
    pub summaries: Vec<Summary>,
    pub rows: Vec<ReportRow>,
    /// Missing or incomplete data.
    pub flags: Vec<String>,
}

/// Compare DEAP estimates with the GPU measurements in `bench`.
///
/// Each unit draws `unit_power_w`; `n` units draw `n` times as much and run
/// `n` times faster.
pub fn compare_report(
    bench: &DeepBench,
    n_convs: &[usize],
    unit_power_w: f64,
    pixel_time_s: f64,
) -> Result<CompareReport> {
    if n_convs.is_empty() || n_convs.contains(&0) {
        return Err(Error::config("n_conv list must hold positive counts"));
    }
    if !(unit_power_w > 0.0 && pixel_time_s > 0.0) {
        return Err(Error::config("unit power and pixel time must be positive"));
    }
    let mean_power = mean_gpu_power();
    let mut report = CompareReport {
        pixel_time_s,
        unit_power_w,
        mean_gpu_power_w: mean_power,
        summaries: Vec::new(),
        rows: Vec::new(),
        flags: bench.warnings.clone(),
    };
    let shapes = bench.shapes();
    if shapes.is_empty() {
        report.flags.push("no benchmark shapes".into());
    }
    for &n_conv in n_convs {
        let deap_power = unit_power_w * n_conv as f64;
        let mut speedups = Vec::new();
        for shape in &shapes {
            let t = estimate_runtime(shape, n_conv, pixel_time_s)?;
            let t_cycles = estimate_runtime_cycles(shape, n_conv, pixel_time_s)?;
            let row = |gpu: String, power: Option<f64>, runtime: Option<f64>| ReportRow {
                w: shape.w,
                h: shape.h,
                d: shape.d,
                n: shape.n,
                k: shape.k,
                r_w: shape.rw,
                r_h: shape.rh,
                s: shape.s,
                n_conv,
                deap_runtime_s: t,
                deap_cycle_runtime_s: t_cycles,
                deap_power_w: deap_power,
                gpu,
                gpu_power_w: power,
                gpu_runtime_s: runtime,
                speedup: runtime.map(|g| g / t),
                energy_ratio: runtime.zip(power).map(|(g, p)| deap_power * t / (p * g)),
            };
            let gpus = bench.gpus_for(shape);
            if gpus.is_empty() {
                if n_conv == n_convs[0] {
                    report.flags.push(format!("no GPU runtimes for shape {}", shape_label(shape)));
                }
                report.rows.push(row(String::new(), None, None));
                continue;
            }
            let mean_runtime = gpus.iter().map(|g| g.runtime_s).sum::<f64>() / gpus.len() as f64;
            speedups.push(mean_runtime / t);
            for g in gpus {
                report.rows.push(row(g.name.clone(), g.power_w, Some(g.runtime_s)));
            }
        }
        report.summaries.push(Summary {
            n_conv,
            deap_power_w: deap_power,
            power_ratio: deap_power / mean_power,
            min_speedup: speedups.iter().copied().reduce(f64::min),
            max_speedup: speedups.iter().copied().reduce(f64::max),
        });
    }
    Ok(report)
}

fn shape_label(s: &ConvShape) -> String {
    format!("{}x{}x{} N={} K={} R={}x{} S={}", s.w, s.h, s.d, s.n, s.k, s.rw, s.rh, s.s)
}

impl CompareReport {
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for row in &self.rows {
            w.serialize(row)
                .map_err(|e| Error::contract(format!("csv encoding: {e}")))?;
        }
        let bytes = w
            .into_inner()
            .map_err(|e| Error::contract(format!("csv encoding: {e}")))?;
        Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
    }

    /// Everything except the per-row table.
    pub fn summary_json(&self) -> Result<String> {
        let value = serde_json::json!({
            "pixel_time_s": self.pixel_time_s,
            "unit_power_w": self.unit_power_w,
            "mean_gpu_power_w": self.mean_gpu_power_w,
            "summaries": self.summaries,
            "flags": self.flags,
        });
        Ok(serde_json::to_string_pretty(&value)? + "\n")
    }

    /// Grouped bar chart of runtimes per shape on a log axis.
    pub fn to_svg(&self) -> String {
        let mut groups: Vec<(String, Vec<(String, f64)>)> = Vec::new();
        for row in &self.rows {
            let label = format!("{}x{}x{} K={}", row.w, row.h, row.d, row.k);
            let idx = match groups.iter().position(|g| g.0 == label) {
                Some(i) => i,
                None => {
                    groups.push((label, Vec::new()));
                    groups.len() - 1
                }
            };
            let bars = &mut groups[idx].1;
            let deap = format!("DEAP x{}", row.n_conv);
            if !bars.iter().any(|b| b.0 == deap) {
                bars.push((deap, row.deap_runtime_s));
            }
            if let Some(t) = row.gpu_runtime_s {
                if !bars.iter().any(|b| b.0 == row.gpu) {
                    bars.push((row.gpu.clone(), t));
                }
            }
        }
        let values: Vec<f64> = groups.iter().flat_map(|g| g.1.iter().map(|b| b.1)).collect();
        let lo = values.iter().copied().fold(f64::INFINITY, f64::min).log10().floor();
        let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max).log10().ceil();
        let (lo, hi) = if values.is_empty() { (-6.0, -3.0) } else { (lo, hi.max(lo + 1.0)) };

        let (bar, gap, plot_h, left, top) = (18.0, 30.0, 300.0, 70.0, 20.0);
        let width = left
            + groups
                .iter()
                .map(|g| g.1.len() as f64 * bar + gap)
                .sum::<f64>()
            + 20.0;
        let height = top + plot_h + 120.0;
        let y = |v: f64| top + plot_h * (hi - v.log10()) / (hi - lo);
        let palette = ["#1b9e77", "#d95f02", "#7570b3", "#e7298a", "#66a61e", "#e6ab02", "#a6761d"];

        let mut svg = String::new();
        let _ = writeln!(
            svg,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{height:.0}" font-family="sans-serif" font-size="11">"#
        );
        for e in (lo as i32)..=(hi as i32) {
            let yy = y(10f64.powi(e));
            let _ = writeln!(
                svg,
                r##"<line x1="{left}" x2="{:.1}" y1="{yy:.1}" y2="{yy:.1}" stroke="#ddd"/><text x="{}" y="{:.1}" text-anchor="end">1e{e} s</text>"##,
                width - 20.0,
                left - 6.0,
                yy + 4.0
            );
        }
        let mut names: Vec<&str> = Vec::new();
        let mut x = left + gap / 2.0;
        for (label, bars) in &groups {
            let start = x;
            for (name, t) in bars {
                let color = match names.iter().position(|n| n == name) {
                    Some(i) => palette[i % palette.len()],
                    None => {
                        names.push(name);
                        palette[(names.len() - 1) % palette.len()]
                    }
                };
                let yy = y(*t);
                let _ = writeln!(
                    svg,
                    r#"<rect x="{x:.1}" y="{yy:.1}" width="{:.1}" height="{:.1}" fill="{color}"><title>{name}: {t:e} s</title></rect>"#,
                    bar - 2.0,
                    top + plot_h - yy
                );
                x += bar;
            }
            let _ = writeln!(
                svg,
                r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{label}</text>"#,
                (start + x) / 2.0,
                top + plot_h + 16.0
            );
            x += gap;
        }
        for (i, name) in names.iter().enumerate() {
            let yy = top + plot_h + 36.0 + 14.0 * i as f64;
            let _ = writeln!(
                svg,
                r#"<rect x="{left}" y="{:.1}" width="10" height="10" fill="{}"/><text x="{}" y="{:.1}">{name}</text>"#,
                yy - 9.0,
                palette[i % palette.len()],
                left + 14.0,
                yy
            );
        }
        svg.push_str("</svg>\n");
        svg
    }
}
