//! Unit conversions at the configuration/report boundary.
//!
//! Everything inside the crate is strict SI: Hz, W, s, m.

use std::f64::consts::{LN_10, PI};

use crate::error::{Error, Result};

/// Speed of light in vacuum (m/s).
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
/// Planck constant (J·s).
pub const PLANCK: f64 = 6.626_070_15e-34;

pub fn dbm_to_watt(p_dbm: f64) -> f64 {
    1e-3 * 10f64.powf(p_dbm / 10.0)
}

pub fn watt_to_dbm(p_w: f64) -> f64 {
    10.0 * (p_w / 1e-3).log10()
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(lin: f64) -> f64 {
    10.0 * lin.log10()
}

/// Converts a power attenuation figure in dB/km into the field-loss
/// coefficient α (1/m), so that `exp(-2αL)` is the span power transmission.
pub fn attenuation_to_field_loss(alpha_db_per_km: f64) -> Result<f64> {
    if !(alpha_db_per_km > 0.0) || !alpha_db_per_km.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "attenuation must be positive, got {alpha_db_per_km} dB/km"
        )));
    }
    Ok(alpha_db_per_km * LN_10 / 20.0 / 1000.0)
}

/// Inverse of [`attenuation_to_field_loss`].
pub fn field_loss_to_attenuation(alpha_field: f64) -> f64 {
    20.0 * alpha_field * 1000.0 / LN_10
}

/// Group-velocity dispersion β2 (s²/m) from the dispersion parameter
/// D (s/m²) at the reference frequency `f_ref` (Hz): β2 = −D·λ²/(2πc).
pub fn dispersion_to_beta2(d: f64, f_ref: f64) -> Result<f64> {
    if !(f_ref > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "reference frequency must be positive, got {f_ref} Hz"
        )));
    }
    let lambda = SPEED_OF_LIGHT / f_ref;
    Ok(-d * lambda * lambda / (2.0 * PI * SPEED_OF_LIGHT))
}

/// ps/(nm·km) → s/m².
pub fn ps_per_nm_km(d: f64) -> f64 {
    d * 1e-12 / (1e-9 * 1e3)
}

/// ps²/km → s²/m.
pub fn ps2_per_km(beta2: f64) -> f64 {
    beta2 * 1e-24 / 1e3
}

/// s²/m → ps²/km.
pub fn to_ps2_per_km(beta2: f64) -> f64 {
    beta2 * 1e24 * 1e3
}

/// A constellation point with its probability.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightedPoint {
    pub re: f64,
    pub im: f64,
    pub prob: f64,
}

/// Excess fourth- and sixth-order moments (Φ, Ψ) of a constellation.
///
/// With μk = E[|a|^k]: Φ = μ4/μ2² − 2 and Ψ = μ6/μ2³ − 9·μ4/μ2² + 12.
/// Both vanish for circular Gaussian symbols.
pub fn excess_moments(points: &[WeightedPoint]) -> Result<(f64, f64)> {
    let total: f64 = points.iter().map(|p| p.prob).sum();
    if points.is_empty() || (total - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!(
            "constellation probabilities must sum to 1 (got {total})"
        )));
    }
    if points.iter().any(|p| p.prob < 0.0) {
        return Err(Error::InvalidArgument("negative probability".into()));
    }
    let moment = |k: i32| -> f64 {
        points
            .iter()
            .map(|p| p.prob * (p.re * p.re + p.im * p.im).powi(k / 2))
            .sum()
    };
    let m2 = moment(2);
    if !(m2 > 0.0) {
        return Err(Error::InvalidArgument(
            "degenerate constellation (all points at the origin)".into(),
        ));
    }
    let r4 = moment(4) / (m2 * m2);
    let r6 = moment(6) / (m2 * m2 * m2);
    Ok((r4 - 2.0, r6 - 9.0 * r4 + 12.0))
}

/// Equiprobable square M-QAM (M a perfect square) or M-PSK constellations.
pub fn square_qam(m: usize) -> Vec<WeightedPoint> {
    let side = (m as f64).sqrt().round() as usize;
    assert_eq!(side * side, m, "square QAM needs a perfect-square order");
    let prob = 1.0 / m as f64;
    let mut out = Vec::with_capacity(m);
    for i in 0..side {
        for q in 0..side {
            out.push(WeightedPoint {
                re: 2.0 * i as f64 - (side as f64 - 1.0),
                im: 2.0 * q as f64 - (side as f64 - 1.0),
                prob,
            });
        }
    }
    out
}

pub fn psk(m: usize) -> Vec<WeightedPoint> {
    let prob = 1.0 / m as f64;
    (0..m)
        .map(|k| {
            let th = 2.0 * PI * k as f64 / m as f64 + PI / m as f64;
            WeightedPoint {
                re: th.cos(),
                im: th.sin(),
                prob,
            }
        })
        .collect()
}
