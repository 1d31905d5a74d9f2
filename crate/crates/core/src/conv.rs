//! Strided convolution on simulated photonic hardware, and the direct-loop
//! digital reference it is checked against.
//!
//! A convolutional unit holds `D_m` weight banks, one per input channel, each
//! with `R_m^2` rings. For one output pixel, line `c` carries the `R x R`
//! window of channel `c` on `R^2` wavelengths, its weight bank forms the dot
//! product with the matching kernel slice, and a voltage adder sums the lines.
//! Rings and lines beyond the kernel's extent are driven with zeros.
//!
//! A full convolution reloads the banks once per kernel and then strides the
//! window across the input. With `n_conv` units, consecutive output pixels
//! are dealt round-robin so each cycle yields up to `n_conv` pixels.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mrr::MrrParams;
use crate::pwb::{PwbConfig, WeightBank, WeightPath, MAX_CHANNELS};
use crate::quant::QuantSpec;
use crate::tensor::{Tensor3, Tensor4};

/// Convolution parameters `(N, H, W, D, R_h, R_w, K, S)`. `H` and `W`
/// include any padding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvShape {
    pub n: usize,
    pub h: usize,
    pub w: usize,
    pub d: usize,
    pub rh: usize,
    pub rw: usize,
    pub k: usize,
    pub s: usize,
}

impl ConvShape {
    /// Shape with a square `r x r` kernel.
    pub fn square(n: usize, h: usize, w: usize, d: usize, r: usize, k: usize, s: usize) -> Self {
        ConvShape {
            n,
            h,
            w,
            d,
            rh: r,
            rw: r,
            k,
            s,
        }
    }

    /// Shape of convolving one image `a` with kernels `f` at stride `s`.
    pub fn of(a: &Tensor3, f: &Tensor4, s: usize) -> Self {
        let (h, w, d) = a.dims();
        let (rh, rw, _, k) = f.dims();
        ConvShape {
            n: 1,
            h,
            w,
            d,
            rh,
            rw,
            k,
            s,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ConvShape { n, h, w, d, rh, rw, k, s } = *self;
        if [n, h, w, d, rh, rw, k, s].contains(&0) {
            return Err(Error::contract(format!("convolution parameters must be positive: {self:?}")));
        }
        if rh > h || rw > w {
            return Err(Error::contract(format!(
                "{rh}x{rw} kernel does not fit a {h}x{w} input"
            )));
        }
        Ok(())
    }

    /// Modulators one unit needs: `R_h R_w D`.
    pub fn modulator_count(&self) -> usize {
        self.rh * self.rw * self.d
    }
}

/// Output extent of a convolution.
///
/// `ceil_*` use the ceiling form `ceil((H - R) / S + 1)`; `rows`/`cols` use
/// the strided loop bounds `floor((H - R) / S) + 1` that the simulator
/// actually visits. They agree whenever `S` divides `H - R`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct OutputDims {
    pub ceil_rows: usize,
    pub ceil_cols: usize,
    pub rows: usize,
    pub cols: usize,
    pub k: usize,
}

impl OutputDims {
    /// Output pixels per kernel on the simulated grid.
    pub fn pixels(&self) -> usize {
        self.rows * self.cols
    }
}

pub fn output_dims(shape: &ConvShape) -> Result<OutputDims> {
    shape.validate()?;
    let ConvShape { h, w, rh, rw, s, k, .. } = *shape;
    Ok(OutputDims {
        ceil_rows: (h - rh).div_ceil(s) + 1,
        ceil_cols: (w - rw).div_ceil(s) + 1,
        rows: (h - rh) / s + 1,
        cols: (w - rw) / s + 1,
        k,
    })
}

/// Bounding parameters of one hardware build.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DeapBounds {
    /// Largest kernel edge `R_m`.
    pub r_m: usize,
    /// Largest channel count `D_m`.
    pub d_m: usize,
    /// Parallel convolutional units.
    pub n_conv: usize,
    /// Modulator rings that can be manufactured.
    pub mrr_budget: usize,
}

impl Default for DeapBounds {
    fn default() -> Self {
        DeapBounds {
            r_m: 10,
            d_m: 10,
            n_conv: 1,
            mrr_budget: 1024,
        }
    }
}

impl DeapBounds {
    pub fn validate(&self) -> Result<()> {
        if self.r_m == 0 || self.d_m == 0 || self.n_conv == 0 {
            return Err(Error::config(format!("bounds must be positive: {self:?}")));
        }
        if self.r_m * self.r_m > MAX_CHANNELS {
            return Err(Error::config(format!(
                "R_m = {} needs {} wavelengths per line, more than {MAX_CHANNELS}",
                self.r_m,
                self.r_m * self.r_m
            )));
        }
        if self.r_m * self.r_m * self.d_m > self.mrr_budget {
            return Err(Error::config(format!(
                "R_m^2 D_m = {} modulators exceeds the budget of {}",
                self.r_m * self.r_m * self.d_m,
                self.mrr_budget
            )));
        }
        Ok(())
    }

    fn check_kernel(&self, rh: usize, rw: usize, d: usize) -> Result<()> {
        if rh > self.r_m || rw > self.r_m {
            return Err(Error::config(format!(
                "{rh}x{rw} kernel exceeds R_m = {}",
                self.r_m
            )));
        }
        if d > self.d_m {
            return Err(Error::config(format!("{d} channels exceed D_m = {}", self.d_m)));
        }
        Ok(())
    }
}

/// Everything needed to build a convolutional unit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DeapConfig {
    pub bounds: DeapBounds,
    pub quant: QuantSpec,
    pub device: MrrParams,
    pub path: WeightPath,
    pub field_scale_e0: f64,
    pub responsivity_r0: f64,
}

impl Default for DeapConfig {
    fn default() -> Self {
        DeapConfig {
            bounds: DeapBounds::default(),
            quant: QuantSpec::default(),
            device: MrrParams::default(),
            path: WeightPath::Device,
            field_scale_e0: 1.0,
            responsivity_r0: 1.0,
        }
    }
}

impl DeapConfig {
    pub fn with_quant(mut self, quant: QuantSpec) -> Self {
        self.quant = quant;
        self
    }

    pub fn with_n_conv(mut self, n_conv: usize) -> Self {
        self.bounds.n_conv = n_conv;
        self
    }

    fn line_config(&self, weights: Vec<f64>) -> PwbConfig {
        PwbConfig {
            weights_f: weights,
            params: self.device,
            responsivity_r0: self.responsivity_r0,
            field_scale_e0: self.field_scale_e0,
            quant: self.quant,
            path: self.path,
        }
    }
}

/// Direct-loop digital convolution without implicit padding:
/// `O[i, j, k] = sum_{m, n, c} F[m, n, c, k] A[i S + m, j S + n, c]`.
pub fn oracle_convolve(a: &Tensor3, f: &Tensor4, s: usize) -> Result<Tensor3> {
    let shape = ConvShape::of(a, f, s);
    check_depth(a, f)?;
    let dims = output_dims(&shape)?;
    let (rh, rw, d, _) = f.dims();
    let mut out = Tensor3::zeros(dims.rows, dims.cols, dims.k);
    for kk in 0..dims.k {
        for i in 0..dims.rows {
            for j in 0..dims.cols {
                let mut acc = 0.0;
                for c in 0..d {
                    for m in 0..rh {
                        for n in 0..rw {
                            acc += f.get(m, n, c, kk) * a.get(i * s + m, j * s + n, c);
                        }
                    }
                }
                out.set(i, j, kk, acc);
            }
        }
    }
    Ok(out)
}

/// Surround `a` with `pad` rows and columns of zeros on every side.
pub fn zero_pad(a: &Tensor3, pad: usize) -> Tensor3 {
    let (h, w, d) = a.dims();
    Tensor3::from_fn(h + 2 * pad, w + 2 * pad, d, |i, j, c| {
        if i < pad || j < pad || i >= h + pad || j >= w + pad {
            0.0
        } else {
            a.get(i - pad, j - pad, c)
        }
    })
}

fn check_depth(a: &Tensor3, f: &Tensor4) -> Result<()> {
    if a.depth() != f.dims().2 {
        return Err(Error::contract(format!(
            "input has {} channels but kernels have {}",
            a.depth(),
            f.dims().2
        )));
    }
    Ok(())
}

fn check_envelopes(a: &Tensor3) -> Result<()> {
    if let Some(v) = a.data().iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::contract(format!(
            "input value {v} cannot be encoded as an optical envelope in [0, 1]"
        )));
    }
    Ok(())
}

/// One convolutional unit with a kernel loaded into its weight banks.
#[derive(Debug, Clone)]
pub struct ConvolutionalUnit {
    /// One bank per line, `D_m` of them, each with `R_m^2` rings.
    banks: Vec<WeightBank>,
    r_m: usize,
    rh: usize,
    rw: usize,
    d: usize,
}

impl ConvolutionalUnit {
    /// Program the banks with an `R_h x R_w x D` kernel. Rings outside the
    /// kernel and lines beyond `D` hold zero weights.
    pub fn load(kernel: &Tensor3, cfg: &DeapConfig) -> Result<Self> {
        cfg.bounds.validate()?;
        let (rh, rw, d) = kernel.dims();
        cfg.bounds.check_kernel(rh, rw, d)?;
        let r_m = cfg.bounds.r_m;
        let banks = (0..cfg.bounds.d_m)
            .map(|c| {
                let mut weights = vec![0.0; r_m * r_m];
                if c < d {
                    for m in 0..rh {
                        for n in 0..rw {
                            weights[m * r_m + n] = kernel.get(m, n, c);
                        }
                    }
                }
                WeightBank::program(&cfg.line_config(weights))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(ConvolutionalUnit {
            banks,
            r_m,
            rh,
            rw,
            d,
        })
    }

    /// Output of each line's TIA before the voltage adder.
    pub fn line_outputs(&self, window: &Tensor3) -> Result<Vec<f64>> {
        if window.dims() != (self.rh, self.rw, self.d) {
            return Err(Error::contract(format!(
                "window {:?} does not match the loaded {}x{}x{} kernel",
                window.dims(),
                self.rh,
                self.rw,
                self.d
            )));
        }
        check_envelopes(window)?;
        Ok(self
            .banks
            .iter()
            .enumerate()
            .map(|(c, bank)| {
                let mut mu = vec![0.0; self.r_m * self.r_m];
                if c < self.d {
                    for m in 0..self.rh {
                        for n in 0..self.rw {
                            mu[m * self.r_m + n] = window.get(m, n, c);
                        }
                    }
                }
                bank.tia_gain() * bank.photocurrent(&mu)
            })
            .collect())
    }

    /// Voltage-adder output for one window.
    pub fn pixel(&self, window: &Tensor3) -> Result<f64> {
        Ok(self.line_outputs(window)?.into_iter().sum())
    }

    /// Same sum as [`pixel`](Self::pixel), reading the window at `(i0, j0)`
    /// of an input whose envelopes are already quantized. Zero rings and
    /// lines are skipped since they add exactly zero.
    fn pixel_at(&self, input: &Tensor3, i0: usize, j0: usize) -> f64 {
        let mut total = 0.0;
        for (c, bank) in self.banks.iter().take(self.d).enumerate() {
            let rings = bank.ring_weights();
            let e0_r0 = bank.e0_r0();
            let mut current = 0.0;
            for m in 0..self.rh {
                let row = &rings[m * self.r_m..m * self.r_m + self.rw];
                for (n, w) in row.iter().enumerate() {
                    current += e0_r0 * input.get(i0 + m, j0 + n, c) * w;
                }
            }
            total += bank.tia_gain() * current;
        }
        total
    }
}

/// One convolved pixel from an `R x R x D` window and kernel.
pub fn single_pixel(window: &Tensor3, kernel: &Tensor3, cfg: &DeapConfig) -> Result<f64> {
    ConvolutionalUnit::load(kernel, cfg)?.pixel(window)
}

/// Hardware cycles to produce `pixels` outputs for each of `kernels`
/// kernels on `n_conv` units: `K * ceil(P / n_conv)`.
pub fn cycle_count(kernels: usize, pixels: usize, n_conv: usize) -> u64 {
    (kernels as u64) * (pixels.div_ceil(n_conv.max(1)) as u64)
}

/// `(unit, cycle)` that computes output pixel `p` (row-major within a kernel).
pub fn pixel_schedule(p: usize, n_conv: usize) -> (usize, usize) {
    (p % n_conv, p / n_conv)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvOutput {
    pub out: Tensor3,
    pub cycles: u64,
}

/// Full strided convolution of a pre-padded input on simulated hardware.
///
/// Input values are optical envelopes and must lie in `[0, 1]`.
pub fn deap_convolve(a: &Tensor3, f: &Tensor4, s: usize, cfg: &DeapConfig) -> Result<ConvOutput> {
    let shape = ConvShape::of(a, f, s);
    check_depth(a, f)?;
    let dims = output_dims(&shape)?;
    cfg.bounds.validate()?;
    cfg.bounds.check_kernel(shape.rh, shape.rw, shape.d)?;
    check_envelopes(a)?;

    // Each modulator quantizes its own drive value, so quantizing the whole
    // input once is equivalent.
    let quantized = a.map(|v| cfg.quant.quantize_unit(v));
    let mut out = Tensor3::zeros(dims.rows, dims.cols, dims.k);
    for kk in 0..dims.k {
        let unit = ConvolutionalUnit::load(&f.kernel(kk), cfg)?;
        let pixels: Vec<f64> = (0..dims.pixels())
            .into_par_iter()
            .map(|p| {
                let (i, j) = (p / dims.cols, p % dims.cols);
                unit.pixel_at(&quantized, i * s, j * s)
            })
            .collect();
        for (p, v) in pixels.into_iter().enumerate() {
            out.set(p / dims.cols, p % dims.cols, kk, v);
        }
    }
    Ok(ConvOutput {
        out,
        cycles: cycle_count(dims.k, dims.pixels(), cfg.bounds.n_conv),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn exact() -> DeapConfig {
        DeapConfig::default().with_quant(QuantSpec::off())
    }

    #[test]
    fn oracle_examples() {
        let a = Tensor3::from_vec(2, 2, 1, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let f = Tensor4::from_vec(2, 2, 1, 1, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let o = oracle_convolve(&a, &f, 1).unwrap();
        assert_eq!(o.dims(), (1, 1, 1));
        assert_eq!(o.get(0, 0, 0), 5.0);

        let ones = Tensor3::from_fn(3, 3, 1, |_, _, _| 1.0);
        let avg = Tensor4::from_fn(2, 2, 1, 1, |_, _, _, _| 0.25);
        let o = oracle_convolve(&ones, &avg, 1).unwrap();
        assert_eq!(o.dims(), (2, 2, 1));
        assert!(o.data().iter().all(|&v| v == 1.0));

        let mnist = Tensor3::zeros(28, 28, 1);
        let k = Tensor4::zeros(5, 5, 1, 8);
        assert_eq!(oracle_convolve(&mnist, &k, 1).unwrap().dims(), (24, 24, 8));
    }

    #[test]
    fn oracle_rejects_mismatched_depth() {
        let a = Tensor3::zeros(4, 4, 2);
        let f = Tensor4::zeros(2, 2, 3, 1);
        assert!(matches!(oracle_convolve(&a, &f, 1), Err(Error::Contract(_))));
        let f = Tensor4::zeros(5, 5, 2, 1);
        assert!(matches!(oracle_convolve(&a, &f, 1), Err(Error::Contract(_))));
    }

    #[test]
    fn padding() {
        let a = Tensor3::from_vec(1, 1, 1, vec![5.0]).unwrap();
        assert_eq!(zero_pad(&a, 0), a);
        let p = zero_pad(&a, 1);
        assert_eq!(p.dims(), (3, 3, 1));
        assert_eq!(p.get(1, 1, 0), 5.0);
        assert_eq!(p.data().iter().sum::<f64>(), 5.0);

        for r in [1, 3, 5] {
            let a = Tensor3::zeros(7, 9, 2);
            let f = Tensor4::zeros(r, r, 2, 1);
            let o = oracle_convolve(&zero_pad(&a, r / 2), &f, 1).unwrap();
            assert_eq!((o.height(), o.width()), (7, 9));
        }
    }

    #[test]
    fn dims_formulas() {
        let d = output_dims(&ConvShape::square(1, 28, 28, 1, 5, 8, 1)).unwrap();
        assert_eq!((d.rows, d.cols, d.ceil_rows, d.ceil_cols), (24, 24, 24, 24));

        let d = output_dims(&ConvShape::square(1, 161, 161, 1, 20, 1, 2)).unwrap();
        assert_eq!(d.ceil_rows, 72);
        assert_eq!(d.rows, 71);

        for h in 1..40 {
            for r in 1..=h.min(7) {
                let d = output_dims(&ConvShape::square(1, h, h, 1, r, 1, 1)).unwrap();
                assert_eq!(d.rows, d.ceil_rows);
            }
        }
        assert!(output_dims(&ConvShape::square(1, 4, 4, 1, 5, 1, 1)).is_err());
    }

    #[test]
    fn single_pixel_examples() {
        let window = Tensor3::from_fn(3, 3, 2, |i, j, c| 0.1 * (i + j + c) as f64);
        let kernel = Tensor3::from_fn(3, 3, 2, |i, j, c| (i as f64) - (j as f64) * 0.5 + c as f64);
        let got = single_pixel(&window, &kernel, &exact()).unwrap();
        let expected: f64 = window.data().iter().zip(kernel.data()).map(|(a, b)| a * b).sum();
        assert!((got - expected).abs() < 1e-9);

        let zero = Tensor3::zeros(3, 3, 2);
        assert_eq!(single_pixel(&window, &zero, &exact()).unwrap(), 0.0);

        let ones = Tensor3::from_fn(2, 2, 2, |_, _, _| 1.0);
        let got = single_pixel(&ones, &ones, &exact()).unwrap();
        assert!((got - 8.0).abs() < 1e-9);
    }

    #[test]
    fn unused_lines_contribute_exactly_zero() {
        let cfg = DeapConfig::default();
        let window = Tensor3::from_fn(2, 3, 2, |i, j, c| 0.2 + 0.1 * (i * j + c) as f64);
        let kernel = Tensor3::from_fn(2, 3, 2, |i, j, c| 1.0 - (i + 2 * j + c) as f64 * 0.3);
        let unit = ConvolutionalUnit::load(&kernel, &cfg).unwrap();
        let lines = unit.line_outputs(&window).unwrap();
        assert_eq!(lines.len(), cfg.bounds.d_m);
        assert!(lines[..2].iter().all(|v| *v != 0.0));
        assert!(lines[2..].iter().all(|v| *v == 0.0));
    }

    #[test]
    fn bound_violations() {
        let cfg = DeapConfig {
            bounds: DeapBounds {
                r_m: 3,
                d_m: 2,
                ..DeapBounds::default()
            },
            ..exact()
        };
        let too_big = Tensor3::zeros(4, 4, 1);
        assert!(matches!(single_pixel(&too_big, &too_big, &cfg), Err(Error::Config(_))));
        let too_deep = Tensor3::zeros(2, 2, 3);
        assert!(matches!(single_pixel(&too_deep, &too_deep, &cfg), Err(Error::Config(_))));

        let over_budget = DeapBounds {
            r_m: 10,
            d_m: 11,
            ..DeapBounds::default()
        };
        assert!(over_budget.validate().is_err());
        let too_many_wavelengths = DeapBounds {
            r_m: 11,
            d_m: 1,
            mrr_budget: 10_000,
            ..DeapBounds::default()
        };
        assert!(too_many_wavelengths.validate().is_err());
    }

    #[test]
    fn convolution_matches_oracle_and_single_pixel() {
        let a = Tensor3::from_fn(9, 8, 3, |i, j, c| ((i * 7 + j * 3 + c) % 11) as f64 / 10.0);
        let f = Tensor4::from_fn(3, 2, 3, 2, |m, n, c, k| (m as f64 - n as f64 * 0.7 + c as f64 * 0.2) * (k as f64 - 0.5));
        for s in 1..=3 {
            let cfg = exact();
            let got = deap_convolve(&a, &f, s, &cfg).unwrap();
            let want = oracle_convolve(&a, &f, s).unwrap();
            assert!(got.out.max_abs_diff(&want) < 1e-9);

            // spot-check the strided fast path against the full unit model
            let kernel = f.kernel(1);
            let window = Tensor3::from_fn(3, 2, 3, |m, n, c| a.get(s + m, s + n, c));
            let single = single_pixel(&window, &kernel, &cfg).unwrap();
            assert_eq!(single, got.out.get(1, 1, 1));
        }
    }

    #[test]
    fn quantized_pixels_match_single_pixel_bitwise() {
        let cfg = DeapConfig::default();
        let a = Tensor3::from_fn(6, 6, 2, |i, j, c| ((i * 5 + j + c * 3) % 7) as f64 / 6.3);
        let f = Tensor4::from_fn(3, 3, 2, 1, |m, n, c, _| (m * 3 + n) as f64 * 0.1 - c as f64 * 0.45);
        let got = deap_convolve(&a, &f, 1, &cfg).unwrap();
        let window = Tensor3::from_fn(3, 3, 2, |m, n, c| a.get(2 + m, 1 + n, c));
        let single = single_pixel(&window, &f.kernel(0), &cfg).unwrap();
        assert_eq!(single, got.out.get(2, 1, 0));
    }

    #[test]
    fn envelopes_must_be_in_unit_interval() {
        let a = Tensor3::from_fn(3, 3, 1, |_, _, _| 1.5);
        let f = Tensor4::zeros(2, 2, 1, 1);
        assert!(matches!(deap_convolve(&a, &f, 1, &exact()), Err(Error::Contract(_))));
    }

    #[test]
    fn cycles() {
        let a = Tensor3::zeros(28, 28, 1);
        let f = Tensor4::zeros(5, 5, 1, 8);
        let one = deap_convolve(&a, &f, 1, &exact()).unwrap();
        assert_eq!(one.cycles, 4608);
        let two = deap_convolve(&a, &f, 1, &exact().with_n_conv(2)).unwrap();
        assert_eq!(two.cycles, 2304);
        assert_eq!(cycle_count(3, 7, 2), 12);
        assert_eq!(pixel_schedule(5, 2), (1, 2));
    }
}
