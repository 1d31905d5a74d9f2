//! Microring resonator (MRR) transfer functions and the phase inversions used
//! to program them.
//!
//! Two ring geometries are modelled. The all-pass ring (one bus waveguide)
//! attenuates a single wavelength and is used as an input modulator. The
//! add-drop ring (two bus waveguides) splits light between a through port and
//! a drop port; feeding both into a balanced photodiode yields a signed weight
//! `2 T_d - 1`.
//!
//! Every function comes in two [`EquationMode`]s. `Consistent` is the
//! self-consistent algebra and the default. `Verbatim` keeps the published
//! formulas character for character, which is useful for showing where they
//! disagree with each other (see the `verbatim_*` tests below).

use std::f64::consts::{PI, TAU};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Denominators at or below this are treated as a pole.
pub const DENOMINATOR_FLOOR: f64 = 1e-15;

/// Slack allowed on an `arccos` argument before it counts as out of range.
const ARCCOS_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EquationMode {
    /// Formulas exactly as printed, including their inconsistencies.
    Verbatim,
    /// Minimal corrections so that every inversion round-trips with its
    /// forward transfer function.
    #[default]
    Consistent,
}

impl fmt::Display for EquationMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EquationMode::Verbatim => "verbatim",
            EquationMode::Consistent => "consistent",
        })
    }
}

impl FromStr for EquationMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "verbatim" => Ok(EquationMode::Verbatim),
            "consistent" => Ok(EquationMode::Consistent),
            other => Err(Error::contract(format!(
                "unknown equation mode `{other}` (expected `verbatim` or `consistent`)"
            ))),
        }
    }
}

/// Physical parameters shared by every ring model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MrrParams {
    /// Self-coupling coefficient, `0 < r < 1`.
    pub r: f64,
    /// Single-pass amplitude transmission, `0 < a <= 1`.
    pub a: f64,
    /// Ring radius in meters.
    pub radius_m: f64,
    /// Effective refractive index. Only used by [`phase_from_wavelength`].
    pub n_eff: f64,
    pub mode: EquationMode,
}

impl Default for MrrParams {
    fn default() -> Self {
        MrrParams {
            r: 0.99,
            a: 0.99,
            radius_m: 10e-6,
            n_eff: 2.4,
            mode: EquationMode::Consistent,
        }
    }
}

impl MrrParams {
    /// Default ring with the given coupling and loss.
    pub fn new(r: f64, a: f64) -> Result<Self> {
        let params = MrrParams {
            r,
            a,
            ..MrrParams::default()
        };
        params.validate()?;
        Ok(params)
    }

    pub fn with_mode(mut self, mode: EquationMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.r > 0.0 && self.r < 1.0) {
            return Err(Error::config(format!("ring self-coupling r = {} must lie in (0, 1)", self.r)));
        }
        if !(self.a > 0.0 && self.a <= 1.0) {
            return Err(Error::config(format!("ring loss a = {} must lie in (0, 1]", self.a)));
        }
        if !(self.radius_m > 0.0 && self.radius_m.is_finite()) {
            return Err(Error::config(format!("ring radius {} m must be positive", self.radius_m)));
        }
        if !(self.n_eff > 0.0 && self.n_eff.is_finite()) {
            return Err(Error::config(format!("effective index {} must be positive", self.n_eff)));
        }
        Ok(())
    }

    /// Interval of all-pass intensities reachable by phase tuning,
    /// `[T_n(0), T_n(pi)]`.
    pub fn intensity_range(&self) -> (f64, f64) {
        (
            allpass_transmission(Phase(0.0), self),
            allpass_transmission(Phase(PI), self),
        )
    }

    /// Interval of balanced-detector weights `2 T_d - 1` that the weight
    /// inversion can reach, intersected with `[-1, 1]`.
    pub fn weight_range(&self) -> (f64, f64) {
        let (numerator, divisor) = self.drop_coefficients();
        let base = 1.0 + (self.r * self.r * self.a).powi(2);
        let lo = 2.0 * numerator / (base + divisor) - 1.0;
        let at_resonance = base - divisor;
        let hi = if at_resonance > DENOMINATOR_FLOOR {
            (2.0 * numerator / at_resonance - 1.0).min(1.0)
        } else {
            1.0
        };
        (lo.max(-1.0), hi)
    }

    /// Largest `s` such that every weight in `[-s, s]` is realizable.
    ///
    /// Fails when the realizable interval does not straddle zero, which is
    /// the case for the verbatim drop-port equations.
    pub fn weight_span(&self) -> Result<f64> {
        let (lo, hi) = self.weight_range();
        if lo < 0.0 && hi > 0.0 {
            Ok(hi.min(-lo))
        } else {
            Err(Error::Range {
                quantity: "signed weight span",
                value: 0.0,
                lo,
                hi,
            })
        }
    }

    /// `(numerator, cos-term divisor)` of the drop-port weight inversion.
    fn drop_coefficients(&self) -> (f64, f64) {
        let (r, a) = (self.r, self.a);
        match self.mode {
            EquationMode::Consistent => ((1.0 - r * r).powi(2) * a, 2.0 * r * r),
            EquationMode::Verbatim => ((1.0 - r).powi(2) * a, 2.0 * r * r * a),
        }
    }
}

/// Round-trip phase of a ring in radians.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Phase(pub f64);

impl Phase {
    pub fn radians(self) -> f64 {
        self.0
    }
}

impl From<f64> for Phase {
    fn from(phi: f64) -> Self {
        Phase(phi)
    }
}

/// Intensity transmission of an all-pass ring.
///
/// `T_n = (a^2 - 2ra cos(phi) + r^2) / (1 - 2ra cos(phi) + (ar)^2)`. The
/// denominator is bounded below by `(1 - ar)^2 > 0`, so this is total.
pub fn allpass_transmission(phi: Phase, p: &MrrParams) -> f64 {
    let (r, a) = (p.r, p.a);
    let c = phi.0.cos();
    (a * a - 2.0 * r * a * c + r * r) / (1.0 - 2.0 * r * a * c + (a * r).powi(2))
}

/// Unreduced round-trip phase `4 pi^2 d n_eff / lambda`, with `d` the radius.
pub fn raw_phase_from_wavelength(lambda_m: f64, p: &MrrParams) -> Result<f64> {
    if !(lambda_m > 0.0 && lambda_m.is_finite()) {
        return Err(Error::contract(format!("wavelength {lambda_m} m must be positive")));
    }
    Ok(4.0 * PI * PI * p.radius_m * p.n_eff / lambda_m)
}

/// Round-trip phase at `lambda_m`, reduced into `[0, 2 pi)`.
pub fn phase_from_wavelength(lambda_m: f64, p: &MrrParams) -> Result<Phase> {
    raw_phase_from_wavelength(lambda_m, p).map(|phi| Phase(phi.rem_euclid(TAU)))
}

/// Phase that programs an all-pass ring to transmit `target` intensity.
///
/// Returns the principal branch in `[0, pi]`.
pub fn allpass_phase_for_intensity(target: f64, p: &MrrParams) -> Result<Phase> {
    let (lo, hi) = p.intensity_range();
    let out_of_range = || Error::Range {
        quantity: "all-pass intensity",
        value: target,
        lo,
        hi,
    };
    if !target.is_finite() || target >= 1.0 {
        return Err(out_of_range());
    }
    let (r, a) = (p.r, p.a);
    let consistent = (a * a + r * r - target * (1.0 + (a * r).powi(2))) / (2.0 * r * a * (1.0 - target));
    let arg = match p.mode {
        EquationMode::Consistent => consistent,
        // The printed inversion has the numerator sign flipped.
        EquationMode::Verbatim => -consistent,
    };
    principal_arccos(arg).ok_or_else(out_of_range)
}

fn adddrop_denominator(phi: Phase, p: &MrrParams) -> f64 {
    let r2 = p.r * p.r;
    1.0 - 2.0 * r2 * phi.0.cos() + (r2 * p.a).powi(2)
}

fn guarded_denominator(phi: Phase, p: &MrrParams, quantity: &'static str) -> Result<f64> {
    let denominator = adddrop_denominator(phi, p);
    if denominator <= DENOMINATOR_FLOOR {
        return Err(Error::NonPhysical {
            quantity,
            phi: phi.0,
            denominator,
        });
    }
    Ok(denominator)
}

/// Through-port intensity transmission of an add-drop ring.
///
/// Same in both modes. Fails with [`Error::NonPhysical`] where the
/// denominator `1 - 2r^2 cos(phi) + (r^2 a)^2` is not positive, which happens
/// close to resonance whenever `a < 1`.
pub fn adddrop_through(phi: Phase, p: &MrrParams) -> Result<f64> {
    let denominator = guarded_denominator(phi, p, "through-port transmission")?;
    let (r, a) = (p.r, p.a);
    let r2 = r * r;
    Ok(((a * r).powi(2) - 2.0 * r2 * phi.0.cos() + r2) / denominator)
}

/// Drop-port intensity transmission of an add-drop ring.
///
/// The verbatim numerator `(1 - r)^2 a` caps the drop port near 0.25; the
/// consistent numerator `(1 - r^2)^2 a` makes `T_p + T_d = 1` when `a = 1`.
pub fn adddrop_drop(phi: Phase, p: &MrrParams) -> Result<f64> {
    let denominator = guarded_denominator(phi, p, "drop-port transmission")?;
    let (numerator, _) = p.drop_coefficients();
    Ok(numerator / denominator)
}

/// Balanced-detector weight `2 T_d(phi) - 1` produced by an add-drop ring.
pub fn balanced_weight(phi: Phase, p: &MrrParams) -> Result<f64> {
    adddrop_drop(phi, p).map(|t| 2.0 * t - 1.0)
}

/// Phase that programs an add-drop ring to the balanced weight `f_star`.
///
/// Returns the principal branch in `[0, pi]`. `f_star = -1` is a pole of the
/// inversion and is always rejected.
pub fn drop_phase_for_weight(f_star: f64, p: &MrrParams) -> Result<Phase> {
    let (lo, hi) = p.weight_range();
    let out_of_range = || Error::Range {
        quantity: "drop-port weight",
        value: f_star,
        lo,
        hi,
    };
    if !(f_star > -1.0 && f_star <= 1.0) {
        return Err(out_of_range());
    }
    let (numerator, divisor) = p.drop_coefficients();
    let arg = (1.0 + (p.r * p.r * p.a).powi(2) - 2.0 * numerator / (f_star + 1.0)) / divisor;
    principal_arccos(arg).ok_or_else(out_of_range)
}

fn principal_arccos(arg: f64) -> Option<Phase> {
    if !arg.is_finite() || arg.abs() > 1.0 + ARCCOS_SLACK {
        return None;
    }
    Some(Phase(arg.clamp(-1.0, 1.0).acos()))
}
