//! GPU convolution benchmarks in a DeepBench-style CSV.
//!
//! Header `w,h,d,n,k,r_w,r_h,s,gpu,runtime_s`; lines starting with `#` are
//! comments. A row with empty `gpu` and `runtime_s` declares a shape with no
//! measurement.

use std::path::Path;

use serde::Serialize;

use crate::conv::ConvShape;
use crate::error::{Error, Result};

pub const HEADER: [&str; 10] = ["w", "h", "d", "n", "k", "r_w", "r_h", "s", "gpu", "runtime_s"];

/// Rings a modulator array can hold; every benchmark shape must fit.
pub const MODULATOR_BUDGET: usize = 1024;

/// Board power of the benchmarked GPUs, in watts.
pub const GPU_POWER_W: [(&str, f64); 4] = [
    ("AMD Vega FE", 375.0),
    ("AMD MI25", 300.0),
    ("NVIDIA Tesla P100", 250.0),
    ("NVIDIA GTX 1080 Ti", 250.0),
];

/// Case-insensitive lookup in [`GPU_POWER_W`].
pub fn gpu_power(name: &str) -> Option<f64> {
    GPU_POWER_W
        .iter()
        .find(|(n, _)| n.eq_ignore_ascii_case(name.trim()))
        .map(|&(_, w)| w)
}

/// Mean of [`GPU_POWER_W`].
pub fn mean_gpu_power() -> f64 {
    GPU_POWER_W.iter().map(|(_, w)| w).sum::<f64>() / GPU_POWER_W.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GpuRecord {
    pub name: String,
    /// `None` for GPUs missing from the power table.
    pub power_w: Option<f64>,
    pub runtime_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRecord {
    pub shape: ConvShape,
    pub gpu: Option<GpuRecord>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct DeepBench {
    pub records: Vec<BenchRecord>,
    pub warnings: Vec<String>,
}

impl DeepBench {
    /// Distinct shapes in order of first appearance.
    pub fn shapes(&self) -> Vec<ConvShape> {
        let mut out: Vec<ConvShape> = Vec::new();
        for r in &self.records {
            if !out.contains(&r.shape) {
                out.push(r.shape);
            }
        }
        out
    }

    /// Measurements recorded for `shape`.
    pub fn gpus_for(&self, shape: &ConvShape) -> Vec<&GpuRecord> {
        self.records
            .iter()
            .filter(|r| r.shape == *shape)
            .filter_map(|r| r.gpu.as_ref())
            .collect()
    }
}

fn line_error(line: u64, message: impl Into<String>) -> Error {
    Error::ParseLine {
        line,
        message: message.into(),
    }
}

pub fn parse_deepbench(text: &str) -> Result<DeepBench> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(text.as_bytes());
    let header = reader
        .headers()
        .map_err(|e| line_error(e.position().map_or(1, |p| p.line()), e.to_string()))?
        .clone();
    let mut bench = DeepBench::default();
    if header.is_empty() {
        bench.warnings.push("benchmark file is empty".into());
        return Ok(bench);
    }
    let header_line = header.position().map_or(1, |p| p.line());
    if header.iter().ne(HEADER.iter().copied()) {
        return Err(line_error(
            header_line,
            format!("expected header `{}`", HEADER.join(",")),
        ));
    }
    for record in reader.records() {
        let record = record.map_err(|e| line_error(e.position().map_or(0, |p| p.line()), e.to_string()))?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != HEADER.len() {
            return Err(line_error(
                line,
                format!("expected {} fields, found {}", HEADER.len(), record.len()),
            ));
        }
        let int = |i: usize| -> Result<usize> {
            match record[i].parse::<usize>() {
                Ok(v) if v > 0 => Ok(v),
                _ => Err(line_error(
                    line,
                    format!("`{}` must be a positive integer, found `{}`", HEADER[i], &record[i]),
                )),
            }
        };
        let shape = ConvShape {
            w: int(0)?,
            h: int(1)?,
            d: int(2)?,
            n: int(3)?,
            k: int(4)?,
            rw: int(5)?,
            rh: int(6)?,
            s: int(7)?,
        };
        shape
            .validate()
            .map_err(|e| line_error(line, e.to_string()))?;
        let rings = shape.modulator_count();
        if rings > MODULATOR_BUDGET {
            return Err(Error::config(format!(
                "line {line}: R_w R_h D = {rings} exceeds the {MODULATOR_BUDGET}-ring budget"
            )));
        }
        let gpu = match (&record[8], &record[9]) {
            ("", "") => {
                bench.warnings.push(format!("line {line}: shape without GPU data"));
                None
            }
            ("", _) | (_, "") => {
                return Err(line_error(line, "`gpu` and `runtime_s` must both be set or both be empty"))
            }
            (name, runtime) => {
                let runtime_s = match runtime.parse::<f64>() {
                    Ok(v) if v > 0.0 && v.is_finite() => v,
                    _ => {
                        return Err(line_error(
                            line,
                            format!("`runtime_s` must be a positive number, found `{runtime}`"),
                        ))
                    }
                };
                let power_w = gpu_power(name);
                if power_w.is_none() {
                    bench.warnings.push(format!("line {line}: no power figure for GPU `{name}`"));
                }
                Some(GpuRecord {
                    name: name.to_string(),
                    power_w,
                    runtime_s,
                })
            }
        };
        bench.records.push(BenchRecord { shape, gpu });
    }
    if bench.records.is_empty() {
        bench.warnings.push("benchmark file has no rows".into());
    }
    Ok(bench)
}

pub fn load_deepbench(path: &Path) -> Result<DeepBench> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_deepbench(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    const TABLE: &str = "\
# shapes only
w,h,d,n,k,r_w,r_h,s,gpu,runtime_s
700,161,1,4,32,5,20,2,,
112,112,64,8,128,3,3,1,,
7,7,832,16,256,1,1,1,,
";

    #[test]
    fn three_benchmark_shapes() {
        let b = parse_deepbench(TABLE).unwrap();
        let shapes = b.shapes();
        assert_eq!(shapes.len(), 3);
        assert_eq!(shapes[0], ConvShape { n: 4, h: 161, w: 700, d: 1, rh: 20, rw: 5, k: 32, s: 2 });
        assert_eq!(shapes[2], ConvShape::square(16, 7, 7, 832, 1, 256, 1));
        assert_eq!(b.warnings.len(), 3);
    }

    #[test]
    fn over_budget_row() {
        let text = "w,h,d,n,k,r_w,r_h,s,gpu,runtime_s\n20,20,11,1,1,10,10,1,,\n";
        assert!(matches!(parse_deepbench(text), Err(Error::Config(_))));
    }

    #[test]
    fn empty_file_warns() {
        let b = parse_deepbench("").unwrap();
        assert!(b.records.is_empty());
        assert_eq!(b.warnings.len(), 1);
        let b = parse_deepbench("w,h,d,n,k,r_w,r_h,s,gpu,runtime_s\n").unwrap();
        assert!(b.records.is_empty());
        assert_eq!(b.warnings.len(), 1);
    }

    #[test]
    fn malformed_rows_report_their_line() {
        let text = "w,h,d,n,k,r_w,r_h,s,gpu,runtime_s\n# note\n7,7,8,1,1,1,1,1,AMD MI25,1e-5\n7,x,8,1,1,1,1,1,,\n";
        assert!(matches!(parse_deepbench(text), Err(Error::ParseLine { line: 4, .. })));
        let text = "w,h,d,n,k,r_w,r_h,s,gpu,runtime_s\n7,7,8,1,1,1,1,1,AMD MI25,-1\n";
        assert!(matches!(parse_deepbench(text), Err(Error::ParseLine { line: 2, .. })));
        let text = "w,h,d,n,k,r_w,r_h,s,gpu,runtime_s\n7,7,8,1,1,1,1,1\n";
        assert!(matches!(parse_deepbench(text), Err(Error::ParseLine { line: 2, .. })));
        assert!(matches!(parse_deepbench("a,b\n1,2\n"), Err(Error::ParseLine { line: 1, .. })));
    }

    #[test]
    fn gpu_power_table() {
        assert_eq!(gpu_power("nvidia tesla p100"), Some(250.0));
        assert_eq!(gpu_power("Unknown"), None);
        assert_eq!(mean_gpu_power(), 293.75);
        let text = "w,h,d,n,k,r_w,r_h,s,gpu,runtime_s\n7,7,8,1,1,1,1,1,AMD MI25,2e-5\n7,7,8,1,1,1,1,1,Mystery,1e-5\n";
        let b = parse_deepbench(text).unwrap();
        let gpus = b.gpus_for(&b.shapes()[0]);
        assert_eq!(gpus.len(), 2);
        assert_eq!(gpus[0].power_w, Some(300.0));
        assert_eq!(gpus[1].power_w, None);
        assert_eq!(b.warnings.len(), 1);
    }
}
