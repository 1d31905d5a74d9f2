//! Photonic weight bank: a wavelength-multiplexed line of add-drop rings
//! feeding a balanced photodiode and a transimpedance amplifier (TIA).
//!
//! Each wavelength `i` carries a power envelope `mu_i` in `[0, 1]`. Ring `i`
//! splits that channel between its through and drop ports, and the balanced
//! photodiode subtracts them, so the channel contributes
//! `E_0 R_0 mu_i (2 T_d(phi_i) - 1)` to the photocurrent. The TIA gain scales
//! the current back to the caller's weight units.
//!
//! Arbitrary real weights are normalized by their largest magnitude
//! ([`normalize_weights`]), which becomes the TIA gain. A ring cannot reach a
//! balanced weight of exactly `-1` (that would need `T_d = 0`), so on the
//! device path the normalized weights are programmed at `span * f*`, with
//! `span` the largest symmetric interval the ring can realize, and the TIA
//! gain grows by `1 / span` to compensate.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mrr::{self, MrrParams, Phase};
use crate::quant::QuantSpec;

/// Wavelengths a single multiplexed line can carry.
pub const MAX_CHANNELS: usize = 100;

/// How normalized weights reach the photodiode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WeightPath {
    /// Invert each weight to a ring phase and evaluate the drop port there.
    #[default]
    Device,
    /// Use the normalized weights directly.
    Fast,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PwbConfig {
    /// Unnormalized weights `F_i`, one per wavelength.
    pub weights_f: Vec<f64>,
    pub params: MrrParams,
    /// Detector responsivity `R_0`.
    pub responsivity_r0: f64,
    /// Source field amplitude `E_0`.
    pub field_scale_e0: f64,
    pub quant: QuantSpec,
    pub path: WeightPath,
}

impl PwbConfig {
    /// Default rings, unit `E_0 R_0`, 7-bit drivers, device path.
    pub fn new(weights_f: Vec<f64>) -> Self {
        PwbConfig {
            weights_f,
            params: MrrParams::default(),
            responsivity_r0: 1.0,
            field_scale_e0: 1.0,
            quant: QuantSpec::default(),
            path: WeightPath::Device,
        }
    }

    pub fn with_quant(mut self, quant: QuantSpec) -> Self {
        self.quant = quant;
        self
    }

    pub fn with_params(mut self, params: MrrParams) -> Self {
        self.params = params;
        self
    }

    pub fn with_path(mut self, path: WeightPath) -> Self {
        self.path = path;
        self
    }
}

/// Power envelopes `mu_i`, each in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvelopeVector(Vec<f64>);

impl EnvelopeVector {
    pub fn new(mu: Vec<f64>) -> Result<Self> {
        if let Some((i, v)) = mu.iter().enumerate().find(|(_, v)| !(0.0..=1.0).contains(*v)) {
            return Err(Error::contract(format!("envelope mu[{i}] = {v} is outside [0, 1]")));
        }
        Ok(EnvelopeVector(mu))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedWeights {
    /// Weights scaled into `[-1, 1]`.
    pub f_star: Vec<f64>,
    /// `max |F_i|`; zero when every weight is zero.
    pub g_tia: f64,
}

/// Split `weights` into a gain `max |F_i|` and weights in `[-1, 1]`.
pub fn normalize_weights(weights: &[f64]) -> NormalizedWeights {
    let g_tia = weights.iter().fold(0.0f64, |m, w| m.max(w.abs()));
    let f_star = if g_tia > 0.0 {
        weights.iter().map(|w| w / g_tia).collect()
    } else {
        vec![0.0; weights.len()]
    };
    NormalizedWeights { f_star, g_tia }
}

/// A weight bank with its rings already tuned.
///
/// Programming inverts every weight once; [`WeightBank::dot`] can then be
/// evaluated for any number of input vectors.
#[derive(Debug, Clone)]
pub struct WeightBank {
    /// Balanced weight `2 T_d - 1` each ring actually produces.
    ring_weights: Vec<f64>,
    phases: Vec<Phase>,
    g_tia: f64,
    tia_gain: f64,
    e0_r0: f64,
    quant: QuantSpec,
}

impl WeightBank {
    pub fn program(cfg: &PwbConfig) -> Result<Self> {
        if cfg.weights_f.len() > MAX_CHANNELS {
            return Err(Error::config(format!(
                "{} weights exceed the {MAX_CHANNELS} wavelengths of one line",
                cfg.weights_f.len()
            )));
        }
        if let Some(w) = cfg.weights_f.iter().find(|w| !w.is_finite()) {
            return Err(Error::contract(format!("weight {w} is not finite")));
        }
        cfg.quant.validate()?;
        let NormalizedWeights { f_star, g_tia } = normalize_weights(&cfg.weights_f);
        let targets = f_star.iter().map(|&f| cfg.quant.quantize_signed(f));

        let (ring_weights, phases, span) = match cfg.path {
            WeightPath::Fast => (targets.collect(), Vec::new(), 1.0),
            WeightPath::Device => {
                cfg.params.validate()?;
                let span = cfg.params.weight_span()?;
                let mut ring_weights = Vec::with_capacity(f_star.len());
                let mut phases = Vec::with_capacity(f_star.len());
                for target in targets {
                    let phi = mrr::drop_phase_for_weight(span * target, &cfg.params)?;
                    ring_weights.push(mrr::balanced_weight(phi, &cfg.params)?);
                    phases.push(phi);
                }
                (ring_weights, phases, span)
            }
        };

        Ok(WeightBank {
            ring_weights,
            phases,
            g_tia,
            tia_gain: g_tia / span,
            e0_r0: cfg.field_scale_e0 * cfg.responsivity_r0,
            quant: cfg.quant,
        })
    }

    pub fn len(&self) -> usize {
        self.ring_weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ring_weights.is_empty()
    }

    /// Normalization gain `max |F_i|`.
    pub fn g_tia(&self) -> f64 {
        self.g_tia
    }

    /// Gain actually applied by the TIA, including the device span correction.
    pub fn tia_gain(&self) -> f64 {
        self.tia_gain
    }

    pub fn ring_weights(&self) -> &[f64] {
        &self.ring_weights
    }

    /// Tuned ring phases; empty on the fast path.
    pub fn phases(&self) -> &[Phase] {
        &self.phases
    }

    /// Effective weights `tia_gain * ring_weight` seen by the inputs.
    pub fn effective_weights(&self) -> Vec<f64> {
        self.ring_weights.iter().map(|w| self.tia_gain * w).collect()
    }

    /// Balanced photocurrent for envelopes `mu` after driver quantization.
    pub fn photocurrent(&self, mu: &[f64]) -> f64 {
        mu.iter()
            .zip(&self.ring_weights)
            .map(|(&m, &w)| self.e0_r0 * self.quant.quantize_unit(m) * w)
            .sum()
    }

    /// `E_0 R_0`
    pub fn e0_r0(&self) -> f64 {
        self.e0_r0
    }

    /// TIA output for the envelopes `inputs`.
    pub fn dot(&self, inputs: &EnvelopeVector) -> Result<f64> {
        self.check_len(inputs.len())?;
        Ok(self.tia_gain * self.photocurrent(inputs.as_slice()))
    }

    /// Bias current `sum E_0 R_0 / 2 * w_i` added by the signed-input encoding.
    pub fn signed_bias(&self) -> f64 {
        self.ring_weights.iter().map(|w| 0.5 * self.e0_r0 * w).sum()
    }

    /// Dot product with inputs in `[-1, 1]` via the encoding `mu = (x + 1) / 2`.
    ///
    /// The bias current is subtracted after detection and the TIA gain is
    /// doubled so the result is `x . F` rather than `(x . F) / 2`.
    pub fn signed_dot(&self, x: &[f64]) -> Result<f64> {
        self.check_len(x.len())?;
        let mu = encode_signed_inputs(x)?;
        let current = self.photocurrent(mu.as_slice()) - self.signed_bias();
        Ok(2.0 * self.tia_gain * current)
    }

    fn check_len(&self, n: usize) -> Result<()> {
        if n != self.ring_weights.len() {
            return Err(Error::contract(format!(
                "{n} inputs for a bank of {} weights",
                self.ring_weights.len()
            )));
        }
        Ok(())
    }
}

/// Weighted sum `sum mu_i F_i` computed through a simulated weight bank.
pub fn pwb_dot(inputs: &EnvelopeVector, cfg: &PwbConfig) -> Result<f64> {
    if inputs.len() != cfg.weights_f.len() {
        return Err(Error::contract(format!(
            "{} inputs for {} weights",
            inputs.len(),
            cfg.weights_f.len()
        )));
    }
    WeightBank::program(cfg)?.dot(inputs)
}

/// Map signed inputs `x_i` in `[-1, 1]` to envelopes `(x_i + 1) / 2`.
pub fn encode_signed_inputs(x: &[f64]) -> Result<EnvelopeVector> {
    if let Some((i, v)) = x.iter().enumerate().find(|(_, v)| !(-1.0..=1.0).contains(*v)) {
        return Err(Error::contract(format!("signed input x[{i}] = {v} is outside [-1, 1]")));
    }
    EnvelopeVector::new(x.iter().map(|v| 0.5 * (v + 1.0)).collect())
}

/// Signed dot product `sum x_i F_i` with `x_i` in `[-1, 1]`.
pub fn signed_pwb_dot(x: &[f64], cfg: &PwbConfig) -> Result<f64> {
    if x.len() != cfg.weights_f.len() {
        return Err(Error::contract(format!(
            "{} inputs for {} weights",
            x.len(),
            cfg.weights_f.len()
        )));
    }
    WeightBank::program(cfg)?.signed_dot(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mrr::EquationMode;

    fn exact(weights: &[f64]) -> PwbConfig {
        PwbConfig::new(weights.to_vec()).with_quant(QuantSpec::off())
    }

    fn env(mu: &[f64]) -> EnvelopeVector {
        EnvelopeVector::new(mu.to_vec()).unwrap()
    }

    #[test]
    fn normalization() {
        let n = normalize_weights(&[2.0, -4.0, 1.0]);
        assert_eq!(n.f_star, vec![0.5, -1.0, 0.25]);
        assert_eq!(n.g_tia, 4.0);

        let n = normalize_weights(&[0.0, 0.0]);
        assert_eq!(n.f_star, vec![0.0, 0.0]);
        assert_eq!(n.g_tia, 0.0);

        let n = normalize_weights(&[0.3]);
        assert_eq!(n.f_star, vec![1.0]);
        assert_eq!(n.g_tia, 0.3);
    }

    #[test]
    fn dot_examples() {
        let got = pwb_dot(&env(&[0.5, 0.25]), &exact(&[1.0, -1.0])).unwrap();
        assert!((got - 0.25).abs() < 1e-9, "{got}");

        let got = pwb_dot(&env(&[0.3, 0.9, 0.1]), &exact(&[0.0, 0.0, 0.0])).unwrap();
        assert_eq!(got, 0.0);

        let got = pwb_dot(&env(&[1.0, 1.0, 1.0]), &exact(&[2.0, -4.0, 1.0])).unwrap();
        assert!((got + 1.0).abs() < 1e-9, "{got}");
    }

    #[test]
    fn device_and_fast_paths_agree() {
        let weights = [0.7, -1.3, 0.0, 2.2, -2.2];
        let mu = env(&[0.1, 0.9, 0.5, 0.33, 1.0]);
        let device = pwb_dot(&mu, &exact(&weights)).unwrap();
        let fast = pwb_dot(&mu, &exact(&weights).with_path(WeightPath::Fast)).unwrap();
        assert!((device - fast).abs() < 1e-10, "{device} vs {fast}");
    }

    #[test]
    fn device_phases_are_physical() {
        let bank = WeightBank::program(&exact(&[1.0, -1.0, 0.0])).unwrap();
        for phi in bank.phases() {
            assert!((0.0..=std::f64::consts::PI).contains(&phi.radians()));
            assert!(mrr::adddrop_drop(*phi, &MrrParams::default()).unwrap() >= 0.0);
        }
        assert!(bank.tia_gain() > bank.g_tia());
    }

    #[test]
    fn verbatim_rings_cannot_hold_signed_weights() {
        let cfg = exact(&[1.0, -1.0]).with_params(MrrParams::default().with_mode(EquationMode::Verbatim));
        assert!(matches!(pwb_dot(&env(&[0.5, 0.5]), &cfg), Err(Error::Range { .. })));
    }

    #[test]
    fn length_and_domain_checks() {
        assert!(matches!(pwb_dot(&env(&[0.5]), &exact(&[1.0, 2.0])), Err(Error::Contract(_))));
        assert!(EnvelopeVector::new(vec![1.5]).is_err());
        assert!(matches!(
            WeightBank::program(&exact(&vec![1.0; MAX_CHANNELS + 1])),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn e0_r0_scale_the_current_not_the_weights() {
        let mut cfg = exact(&[1.0, -0.5]);
        cfg.field_scale_e0 = 2.0;
        cfg.responsivity_r0 = 0.5;
        let unit = pwb_dot(&env(&[0.4, 0.8]), &exact(&[1.0, -0.5])).unwrap();
        assert!((pwb_dot(&env(&[0.4, 0.8]), &cfg).unwrap() - unit).abs() < 1e-12);
        cfg.responsivity_r0 = 2.0;
        assert!((pwb_dot(&env(&[0.4, 0.8]), &cfg).unwrap() - 4.0 * unit).abs() < 1e-12);
    }

    #[test]
    fn signed_encoding() {
        assert_eq!(encode_signed_inputs(&[-1.0, 0.0, 1.0]).unwrap().as_slice(), &[0.0, 0.5, 1.0]);
        assert_eq!(encode_signed_inputs(&[0.5]).unwrap().as_slice(), &[0.75]);
        assert!(encode_signed_inputs(&[1.01]).is_err());
    }

    #[test]
    fn signed_dot_examples() {
        let got = signed_pwb_dot(&[1.0, -1.0], &exact(&[1.0, 1.0])).unwrap();
        assert!(got.abs() < 1e-9);

        let weights = [0.4, -2.5, 1.1, 3.0];
        let got = signed_pwb_dot(&[-1.0; 4], &exact(&weights)).unwrap();
        assert!((got + weights.iter().sum::<f64>()).abs() < 1e-9, "{got}");

        let got = signed_pwb_dot(&[0.5, -0.25], &exact(&[2.0, 4.0])).unwrap();
        assert!(got.abs() < 1e-9);
    }

    #[test]
    fn quantized_dot_is_close() {
        let weights = [0.31, -0.77, 0.05];
        let mu = [0.2, 0.61, 0.97];
        let q = pwb_dot(&env(&mu), &PwbConfig::new(weights.to_vec())).unwrap();
        let exact: f64 = mu.iter().zip(&weights).map(|(m, w)| m * w).sum();
        let eps = 2f64.powi(-7);
        assert!((q - exact).abs() <= 0.77 * 3.0 * (2.0 * eps + eps * eps));
        assert!(q != exact);
    }
}
