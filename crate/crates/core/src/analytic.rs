//! Closed-form oracles for the lossy scissors and teleportation schemes.
//!
//! The normalization and fidelity expressions are evaluated exactly as
//! printed in the original derivation, including the places where they are
//! known to misbehave (the truncation fidelity exceeds one for perfect
//! detectors and lossy splitters). Out-of-range values are flagged, never
//! clamped; the numeric simulator in [`crate::apparatus`] is the reference.
//!
//! The printed normalizations contain an exponent in `|alpha|^2`; `alpha` is
//! read as the coherent drive amplitude `gamma`.

use serde::Serialize;

use crate::channels::BeamSplitterSpec;
use crate::error::{Error, Result};

/// Inputs shared by every oracle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NoiseParams {
    pub eta: f64,
    pub gamma_bs: f64,
    pub ratio_r: f64,
    pub gamma_amp: f64,
    pub norm_c2: f64,
}

impl NoiseParams {
    /// Parameters for a coherent drive of amplitude `|gamma| = gamma_amp`.
    pub fn from_drive(eta: f64, gamma_bs: f64, gamma_amp: f64) -> Result<Self> {
        if !(gamma_amp.is_finite() && gamma_amp > 0.0) {
            return Err(Error::InvalidState(format!(
                "drive amplitude {gamma_amp} must be positive"
            )));
        }
        let x = gamma_amp * gamma_amp;
        let params = Self {
            eta,
            gamma_bs,
            ratio_r: 1.0 / x,
            gamma_amp,
            norm_c2: (-x).exp() * (1.0 + x),
        };
        params.validate()?;
        Ok(params)
    }

    /// Parameters for a given vacuum-to-one-photon weight ratio `R = 1/|gamma|^2`.
    pub fn from_ratio(eta: f64, gamma_bs: f64, ratio_r: f64) -> Result<Self> {
        if !(ratio_r.is_finite() && ratio_r > 0.0) {
            return Err(Error::InvalidState(format!(
                "ratio R = {ratio_r} must be positive"
            )));
        }
        Self::from_drive(eta, gamma_bs, ratio_r.recip().sqrt())
    }

    fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.eta) {
            return Err(Error::InvalidState(format!(
                "eta {} outside [0, 1]",
                self.eta
            )));
        }
        if !(0.0..1.0).contains(&self.gamma_bs) {
            return Err(Error::InvalidState(format!(
                "damping {} outside [0, 1)",
                self.gamma_bs
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FormulaId {
    ScissorsNorm,
    ScissorsFidelity,
    TeleportNorm,
    TeleportFidelity,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OracleReport {
    pub value: f64,
    pub formula: FormulaId,
    pub inputs: NoiseParams,
    /// Set when a fidelity leaves [0, 1] or a normalization is not positive.
    pub out_of_range: bool,
}

impl OracleReport {
    fn new(value: f64, formula: FormulaId, inputs: NoiseParams) -> Result<Self> {
        if !value.is_finite() {
            return Err(Error::Invariant(format!(
                "{formula:?} evaluated to {value}"
            )));
        }
        let out_of_range = match formula {
            FormulaId::ScissorsFidelity | FormulaId::TeleportFidelity => {
                !(0.0..=1.0).contains(&value)
            }
            FormulaId::ScissorsNorm | FormulaId::TeleportNorm => value <= 0.0,
        };
        Ok(Self {
            value,
            formula,
            inputs,
            out_of_range,
        })
    }
}

/// Combined noise strength of a lossy splitter followed by an inefficient
/// detector: `eta Gamma + (1 - eta)`.
pub fn combined_damping(eta: f64, gamma_bs: f64) -> f64 {
    eta * gamma_bs + (1.0 - eta)
}

/// Vacuum moment `<L^n L^dagger^m> = delta_nm n! d^n` for a noise mode with
/// `[L, L^dagger] = d`.
pub fn wick_moment(n: u32, m: u32, d: f64) -> f64 {
    if n != m {
        return 0.0;
    }
    (1..=n).fold(1.0, |acc, k| acc * k as f64 * d)
}

fn check_damping(gamma_bs: f64) -> Result<()> {
    if gamma_bs >= 1.0 {
        return Err(Error::InvalidState(
            "damping 1 makes the formula singular".into(),
        ));
    }
    Ok(())
}

/// Normalization of the engineered state.
pub fn truncation_norm(params: &NoiseParams, bs: &BeamSplitterSpec) -> Result<OracleReport> {
    let t2 = bs.t().norm_sqr();
    let r2 = bs.r().norm_sqr();
    if r2 == 0.0 {
        return Err(Error::InvalidState("reflection coefficient is zero".into()));
    }
    let NoiseParams {
        eta,
        gamma_bs: g,
        gamma_amp,
        norm_c2,
        ..
    } = *params;
    let x = gamma_amp * gamma_amp;
    let gamma1_sq = (-x).exp() * x;
    let exponent = combined_damping(eta, g) * x;
    let bracket = norm_c2 * t2 + (eta * g + g / r2 + (1.0 - eta)) * r2 * gamma1_sq;
    let inv = exponent.exp() * eta * r2 * bracket;
    OracleReport::new(inv.recip(), FormulaId::ScissorsNorm, *params)
}

/// Fidelity of the engineered state against `(gamma_0|0> + gamma_1|1>)/C`.
pub fn truncation_fidelity(params: &NoiseParams) -> Result<OracleReport> {
    check_damping(params.gamma_bs)?;
    let NoiseParams {
        eta,
        gamma_bs: g,
        ratio_r: r,
        ..
    } = *params;
    let c = 1.0 - eta * (1.0 + g * g) / (1.0 - g);
    let value = 1.0 - c / ((1.0 + r) * (1.0 + r * c));
    OracleReport::new(value, FormulaId::ScissorsFidelity, *params)
}

/// Normalization of the teleported state.
pub fn teleport_norm(params: &NoiseParams) -> Result<OracleReport> {
    check_damping(params.gamma_bs)?;
    let NoiseParams {
        eta,
        gamma_bs: g,
        ratio_r: r,
        gamma_amp,
        ..
    } = *params;
    let x = gamma_amp * gamma_amp;
    let half = (1.0 - g) / 2.0;
    let bracket = 1.0 + (4.0 / (1.0 - g) - 3.0 * eta * (1.0 - g)) / r;
    let inv = (-eta * (1.0 - g) * x).exp() * eta * half * half * bracket;
    OracleReport::new(inv.recip(), FormulaId::TeleportNorm, *params)
}

/// End-to-end teleportation fidelity with both stages lossy.
pub fn teleport_fidelity(params: &NoiseParams) -> Result<OracleReport> {
    check_damping(params.gamma_bs)?;
    let NoiseParams {
        eta,
        gamma_bs: g,
        ratio_r: r,
        ..
    } = *params;
    let numerator = (3.0 + g) / (1.0 - g) - 3.0 * eta * (1.0 - g);
    let inner = 4.0 / (1.0 - g) - 3.0 * eta * (1.0 - g);
    let value = 1.0 - numerator / ((1.0 + r) * (1.0 + r * inner));
    OracleReport::new(value, FormulaId::TeleportFidelity, *params)
}
