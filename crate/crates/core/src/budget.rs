//! Link budget: ASE, nonlinear interference, SNR, margins and rates.

use std::fmt::Write as _;

use statrs::function::erf::{erfc, erfc_inv};

use crate::config::SystemConfig;
use crate::error::{Error, Result};
use crate::tables::NliTables;
use crate::units::{linear_to_db, watt_to_dbm};

/// Per-channel launch powers, kept in both linear and log form.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerAllocation {
    /// Watts.
    pub x: Vec<f64>,
    /// `ln x`.
    pub y: Vec<f64>,
}

impl PowerAllocation {
    pub fn from_watts(x: Vec<f64>) -> Result<Self> {
        if let Some(bad) = x.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
            return Err(Error::InvalidArgument(format!(
                "launch powers must be positive and finite, got {bad}"
            )));
        }
        let y = x.iter().map(|v| v.ln()).collect();
        Ok(Self { x, y })
    }

    pub fn from_log(y: Vec<f64>) -> Result<Self> {
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("log-powers must be finite".into()));
        }
        let x = y.iter().map(|v| v.exp()).collect();
        Ok(Self { x, y })
    }

    pub fn from_dbm(p: &[f64]) -> Result<Self> {
        Self::from_watts(p.iter().map(|&d| crate::units::dbm_to_watt(d)).collect())
    }

    pub fn flat(n: usize, watts: f64) -> Result<Self> {
        Self::from_watts(vec![watts; n])
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn dbm(&self) -> Vec<f64> {
        self.x.iter().map(|&v| watt_to_dbm(v)).collect()
    }

    /// Every power multiplied by `a`.
    pub fn scaled(&self, a: f64) -> Result<Self> {
        Self::from_watts(self.x.iter().map(|v| v * a).collect())
    }
}

/// ASE power accumulated over the link in channel `c`'s symbol bandwidth:
/// `R·h·f·(e^{2αL} − 1)·Ns·F`.
pub fn ase_power(_c: usize, cfg: &SystemConfig) -> f64 {
    let amp = &cfg.amplifier;
    let gain = 1.0 / cfg.fiber.span_transmission();
    cfg.grid.symbol_rate
        * amp.planck_h
        * amp.ref_frequency
        * (gain - 1.0)
        * cfg.fiber.num_spans as f64
        * amp.noise_factor
}

fn check_dims(x: &[f64], t: &NliTables) -> Result<()> {
    if x.len() != t.num_channels {
        return Err(Error::Dimension {
            expected: t.num_channels,
            got: x.len(),
        });
    }
    Ok(())
}

/// Nonlinear interference on channel `c` (1-based) for raw powers `x`.
pub fn nli_power_raw(c: usize, x: &[f64], t: &NliTables) -> Result<f64> {
    check_dims(x, t)?;
    if c == 0 || c > x.len() {
        return Err(Error::InvalidArgument(format!("channel {c} out of range")));
    }
    let xc = x[c - 1];
    let mut p = xc * xc * xc * t.d1(c);
    for (i, &xn) in x.iter().enumerate() {
        let n = i + 1;
        if n == c {
            continue;
        }
        p += xc * xn * xn * t.d2(c, n) + xc * xc * xn * t.d3(c, n) + xn * xn * xn * t.d4(c, n);
    }
    Ok(p)
}

pub fn nli_power(c: usize, x: &PowerAllocation, t: &NliTables) -> Result<f64> {
    nli_power_raw(c, &x.x, t)
}

pub fn snr(c: usize, x: &PowerAllocation, t: &NliTables, cfg: &SystemConfig) -> Result<f64> {
    Ok(x.x[c - 1] / (ase_power(c, cfg) + nli_power(c, x, t)?))
}

pub fn margin(c: usize, x: &PowerAllocation, t: &NliTables, cfg: &SystemConfig) -> Result<f64> {
    Ok(snr(c, x, t, cfg)? / cfg.modulation[c - 1].snr_req)
}

/// Per-channel budget for one allocation.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkBudget {
    pub p_ase: Vec<f64>,
    pub p_nl: Vec<f64>,
    pub snr: Vec<f64>,
    pub margin: Vec<f64>,
    /// Bits per symbol slot, `pol_factor·log2(1 + snr)`.
    pub rate: Vec<f64>,
    pub pol_factor: u8,
}

impl LinkBudget {
    pub fn evaluate(x: &PowerAllocation, t: &NliTables, cfg: &SystemConfig) -> Result<Self> {
        check_dims(&x.x, t)?;
        let n = x.len();
        let mut b = LinkBudget {
            p_ase: Vec::with_capacity(n),
            p_nl: Vec::with_capacity(n),
            snr: Vec::with_capacity(n),
            margin: Vec::with_capacity(n),
            rate: Vec::with_capacity(n),
            pol_factor: cfg.pol_factor,
        };
        for c in 1..=n {
            let ase = ase_power(c, cfg);
            let nl = nli_power(c, x, t)?;
            let s = x.x[c - 1] / (ase + nl);
            b.p_ase.push(ase);
            b.p_nl.push(nl);
            b.snr.push(s);
            b.margin.push(s / cfg.modulation[c - 1].snr_req);
            b.rate.push(channel_rate(s, cfg.pol_factor));
        }
        Ok(b)
    }

    pub fn min_margin(&self) -> f64 {
        self.margin.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn aggregate_rate(&self) -> f64 {
        self.rate.iter().sum()
    }

    /// CSV with one row per channel.
    pub fn to_csv(&self, x: &PowerAllocation, cfg: &SystemConfig) -> String {
        let mut s = String::from(
            "channel,f_center_hz,power_dbm,p_ase_dbm,p_nl_dbm,snr_db,margin_db,rate_bits_per_symbol\n",
        );
        for c in 1..=x.len() {
            let i = c - 1;
            let _ = writeln!(
                s,
                "{c},{:.6e},{:.4},{:.4},{:.4},{:.4},{:.4},{:.6}",
                cfg.grid.center_frequency(c),
                watt_to_dbm(x.x[i]),
                watt_to_dbm(self.p_ase[i]),
                watt_to_dbm(self.p_nl[i]),
                linear_to_db(self.snr[i]),
                linear_to_db(self.margin[i]),
                self.rate[i]
            );
        }
        s
    }
}

pub fn channel_rate(snr: f64, pol_factor: u8) -> f64 {
    pol_factor as f64 * (1.0 + snr).log2()
}

/// Sum-rate summary.
#[derive(Debug, Clone, PartialEq)]
pub struct RateReport {
    /// Bits per symbol slot.
    pub per_channel: Vec<f64>,
    pub aggregate: f64,
    /// `aggregate·R / (N·Δf)`, bits/s/Hz of occupied grid.
    pub spectral_efficiency: f64,
    pub pol_factor: u8,
}

pub fn total_rate(x: &PowerAllocation, t: &NliTables, cfg: &SystemConfig) -> Result<RateReport> {
    let b = LinkBudget::evaluate(x, t, cfg)?;
    let aggregate = b.aggregate_rate();
    Ok(RateReport {
        spectral_efficiency: aggregate * cfg.grid.symbol_rate
            / (cfg.num_channels() as f64 * cfg.grid.delta_f),
        per_channel: b.rate,
        aggregate,
        pol_factor: cfg.pol_factor,
    })
}

/// SNR after adding transmitter noise: `1/(1/snr + 1/snr_input)`.
pub fn combine_with_input_snr(snr: f64, snr_input: f64) -> f64 {
    1.0 / (1.0 / snr + 1.0 / snr_input)
}

/// PM-QPSK bit error ratio, `½·erfc(√(snr/2))`.
pub fn ber_from_snr(snr: f64) -> Result<f64> {
    if !(snr > 0.0) {
        return Err(Error::InvalidArgument(format!("SNR must be positive, got {snr}")));
    }
    Ok(0.5 * erfc((0.5 * snr).sqrt()))
}

/// Exact inverse of [`ber_from_snr`]: `snr = 2·(erfc⁻¹(2·ber))²`.
pub fn snr_from_ber(ber: f64) -> Result<f64> {
    if !(ber > 0.0 && ber < 0.5) {
        return Err(Error::InvalidArgument(format!(
            "BER must lie in (0, 0.5), got {ber}"
        )));
    }
    let mut z = erfc_inv(2.0 * ber);
    // one Newton polish on erfc(z) = 2·ber
    let r = erfc(z) - 2.0 * ber;
    z += r / (2.0 / std::f64::consts::PI.sqrt() * (-z * z).exp());
    Ok(2.0 * z * z)
}
