//! Physical parameter types and the JSON configuration schema.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::units::{self, PLANCK};

/// Fiber and span parameters, SI units.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FiberParams {
    /// Field-loss coefficient α (1/m); span power loss is `exp(-2αL)`.
    pub alpha_field: f64,
    /// Group-velocity dispersion (s²/m).
    pub beta2: f64,
    /// Third-order dispersion (s³/m). Carried, not used by the kernel.
    pub beta3: f64,
    /// Nonlinearity coefficient (1/(W·m)).
    pub gamma: f64,
    /// Span length (m).
    pub span_length: f64,
    pub num_spans: u32,
}

impl FiberParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha_field > 0.0) {
            return Err(Error::Config("fiber loss must be positive".into()));
        }
        if !(self.gamma >= 0.0) {
            return Err(Error::Config("gamma must be non-negative".into()));
        }
        if !(self.span_length > 0.0) {
            return Err(Error::Config("span length must be positive".into()));
        }
        if self.num_spans < 1 {
            return Err(Error::Config("at least one span is required".into()));
        }
        if !self.beta2.is_finite() {
            return Err(Error::Config("beta2 must be finite".into()));
        }
        Ok(())
    }

    /// Span power transmission `exp(-2αL)`.
    pub fn span_transmission(&self) -> f64 {
        (-2.0 * self.alpha_field * self.span_length).exp()
    }
}

/// Uniform channel grid. Channel indices are 1-based, as in the link model.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChannelGrid {
    /// Lowest available frequency (Hz).
    pub f0: f64,
    /// Slot width Δf (Hz).
    pub delta_f: f64,
    pub num_channels: usize,
    /// Per-channel symbol rate R (Hz).
    pub symbol_rate: f64,
}

impl ChannelGrid {
    pub fn validate(&self) -> Result<()> {
        if self.num_channels == 0 {
            return Err(Error::Config("grid needs at least one channel".into()));
        }
        if !(self.symbol_rate > 0.0) || !(self.delta_f > 0.0) {
            return Err(Error::Config("baud and slot width must be positive".into()));
        }
        if self.symbol_rate > self.delta_f * (1.0 + 1e-12) {
            return Err(Error::Config(format!(
                "symbol rate {} Hz exceeds slot width {} Hz",
                self.symbol_rate, self.delta_f
            )));
        }
        Ok(())
    }

    /// Centre frequency of channel `c` (1-based).
    pub fn center_frequency(&self, c: usize) -> f64 {
        self.f0 + self.delta_f / 2.0 + (c as f64 - 1.0) * self.delta_f
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModulationSpec {
    pub name: String,
    /// Excess fourth moment Φ.
    pub phi: f64,
    /// Excess sixth moment Ψ.
    pub psi: f64,
    /// Required SNR (linear).
    pub snr_req: f64,
}

impl ModulationSpec {
    pub fn gaussian(snr_req: f64) -> Self {
        Self {
            name: "gaussian".into(),
            phi: 0.0,
            psi: 0.0,
            snr_req,
        }
    }

    /// Looks up (Φ, Ψ) for a named format by brute-force moment sums.
    pub fn moments_for(name: &str) -> Option<(f64, f64)> {
        let pts = match name.to_ascii_lowercase().as_str() {
            "gaussian" | "gauss" => return Some((0.0, 0.0)),
            "qpsk" | "pm-qpsk" | "dp-qpsk" | "bpsk" | "pm-bpsk" => units::psk(4),
            "8psk" | "pm-8psk" => units::psk(8),
            "16qam" | "pm-16qam" | "16-qam" => units::square_qam(16),
            "64qam" | "pm-64qam" | "64-qam" => units::square_qam(64),
            _ => return None,
        };
        units::excess_moments(&pts).ok()
    }
}

/// How `n_sp` maps onto the noise factor `F` of the ASE formula.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseFigureRule {
    /// `F` given directly (from `nf_db`).
    Direct,
    /// `F = 2·n_sp`.
    Double,
    /// `F = n_sp`.
    Equal,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AmplifierSpec {
    /// Noise factor F (linear).
    pub noise_factor: f64,
    pub n_sp: Option<f64>,
    pub rule: NoiseFigureRule,
    pub planck_h: f64,
    /// Optical carrier used for the `h·f` photon energy (Hz).
    pub ref_frequency: f64,
}

impl AmplifierSpec {
    pub fn from_nsp(n_sp: f64, rule: NoiseFigureRule, ref_frequency: f64) -> Self {
        let noise_factor = match rule {
            NoiseFigureRule::Equal => n_sp,
            _ => 2.0 * n_sp,
        };
        Self {
            noise_factor,
            n_sp: Some(n_sp),
            rule: if rule == NoiseFigureRule::Equal {
                NoiseFigureRule::Equal
            } else {
                NoiseFigureRule::Double
            },
            planck_h: PLANCK,
            ref_frequency,
        }
    }

    pub fn from_noise_figure_db(nf_db: f64, ref_frequency: f64) -> Self {
        Self {
            noise_factor: units::db_to_linear(nf_db),
            n_sp: None,
            rule: NoiseFigureRule::Direct,
            planck_h: PLANCK,
            ref_frequency,
        }
    }

    /// The same amplifier under the other `n_sp` reading, if `n_sp` was given.
    pub fn with_rule(&self, rule: NoiseFigureRule) -> Self {
        match self.n_sp {
            Some(nsp) if rule != NoiseFigureRule::Direct => {
                Self::from_nsp(nsp, rule, self.ref_frequency)
            }
            _ => self.clone(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.noise_factor >= 1.0) {
            return Err(Error::Config(format!(
                "noise factor must be >= 1, got {}",
                self.noise_factor
            )));
        }
        if !(self.ref_frequency > 0.0) {
            return Err(Error::Config("reference frequency must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelMode {
    Egn,
    Gn,
}

/// Which modulation-dependent cross-channel corrections enter `D2..D4`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorrectionMode {
    Full,
    Dominant,
    Off,
}

/// Width of the receiver band the NLI PSD is integrated over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OuterBand {
    /// `[f_c − R/2, f_c + R/2]`.
    Symbol,
    /// `[f_c − Δf/2, f_c + Δf/2]`.
    Slot,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SystemConfig {
    pub fiber: FiberParams,
    pub grid: ChannelGrid,
    /// One entry per channel.
    pub modulation: Vec<ModulationSpec>,
    pub amplifier: AmplifierSpec,
    pub model_mode: ModelMode,
    pub corrections: CorrectionMode,
    pub outer_band: OuterBand,
    /// Polarizations counted in the rate (1 or 2).
    pub pol_factor: u8,
    /// True when Δf was not given and the 50 GHz default was used.
    pub delta_f_defaulted: bool,
}

impl SystemConfig {
    pub fn validate(&self) -> Result<()> {
        self.fiber.validate()?;
        self.grid.validate()?;
        self.amplifier.validate()?;
        if self.modulation.len() != self.grid.num_channels {
            return Err(Error::Config(format!(
                "{} modulation entries for {} channels",
                self.modulation.len(),
                self.grid.num_channels
            )));
        }
        for m in &self.modulation {
            if !(m.snr_req > 0.0) {
                return Err(Error::Config("required SNR must be positive".into()));
            }
            if !m.phi.is_finite() || !m.psi.is_finite() {
                return Err(Error::Config("phi/psi must be finite".into()));
            }
        }
        if self.pol_factor != 1 && self.pol_factor != 2 {
            return Err(Error::Config("pol_factor must be 1 or 2".into()));
        }
        Ok(())
    }

    pub fn num_channels(&self) -> usize {
        self.grid.num_channels
    }

    /// (Φ, Ψ) of channel `c` (1-based) as seen by the kernel integrals:
    /// GN mode forces both to zero.
    pub fn kernel_moments(&self, c: usize) -> (f64, f64) {
        match self.model_mode {
            ModelMode::Gn => (0.0, 0.0),
            ModelMode::Egn => {
                let m = &self.modulation[c - 1];
                (m.phi, m.psi)
            }
        }
    }

    /// Integration band half-width around each channel centre.
    pub fn outer_half_width(&self) -> f64 {
        match self.outer_band {
            OuterBand::Symbol => self.grid.symbol_rate / 2.0,
            OuterBand::Slot => self.grid.delta_f / 2.0,
        }
    }

    pub fn with_model(&self, mode: ModelMode) -> Self {
        let mut c = self.clone();
        c.model_mode = mode;
        c
    }

    pub fn with_channels(&self, n: usize) -> Self {
        let mut c = self.clone();
        let m = self.modulation[0].clone();
        c.grid.num_channels = n;
        c.modulation = vec![m; n];
        c
    }

    /// 64-bit digest of everything that influences the NLI tables.
    pub fn table_hash(&self) -> u64 {
        #[derive(Serialize)]
        struct TableKey<'a> {
            fiber: &'a FiberParams,
            grid: &'a ChannelGrid,
            moments: Vec<(f64, f64)>,
            model_mode: ModelMode,
            corrections: CorrectionMode,
            outer_band: OuterBand,
        }
        let key = TableKey {
            fiber: &self.fiber,
            grid: &self.grid,
            moments: (1..=self.num_channels())
                .map(|c| self.kernel_moments(c))
                .collect(),
            model_mode: self.model_mode,
            corrections: self.corrections,
            outer_band: self.outer_band,
        };
        digest64(serde_json::to_vec(&key).expect("serializable").as_slice())
    }

    /// 64-bit digest of the whole canonical configuration.
    pub fn config_hash(&self) -> u64 {
        digest64(serde_json::to_vec(self).expect("serializable").as_slice())
    }

    /// The reference instance: 30 channels, 40×120 km, PM-QPSK.
    pub fn reference() -> Self {
        ConfigFile::reference()
            .into_config()
            .expect("reference configuration is valid")
    }
}

pub(crate) fn digest64(bytes: &[u8]) -> u64 {
    let d = Sha256::digest(bytes);
    let mut b = [0u8; 8];
    b.copy_from_slice(&d[..8]);
    u64::from_le_bytes(b)
}

// ---------------------------------------------------------------------------
// JSON schema
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FiberFile {
    pub alpha_db_per_km: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dispersion_ps_nm_km: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta2_ps2_km: Option<f64>,
    pub gamma_w_km: f64,
    pub span_km: f64,
    pub spans: u32,
    /// Optical reference frequency for dispersion and photon energy.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ref_freq_thz: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridFile {
    pub f0_thz: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta_f_ghz: Option<f64>,
    pub channels: usize,
    pub baud_gbd: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModulationFile {
    pub name: String,
    pub snr_req_db: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phi: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub psi: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AmplifierFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nf_db: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_sp: Option<f64>,
    /// `double` (F = 2·n_sp, default) or `equal` (F = n_sp).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_sp_rule: Option<NoiseFigureRule>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub mode: ModelMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub corrections: Option<CorrectionMode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outer_band: Option<OuterBand>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pol_factor: Option<u8>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub fiber: FiberFile,
    pub grid: GridFile,
    pub modulation: ModulationFile,
    pub amplifier: AmplifierFile,
    pub model: ModelFile,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn into_config(self) -> Result<SystemConfig> {
        let f_ref = self.fiber.ref_freq_thz.unwrap_or(193.0) * 1e12;
        let beta2 = match (self.fiber.dispersion_ps_nm_km, self.fiber.beta2_ps2_km) {
            (Some(d), None) => units::dispersion_to_beta2(units::ps_per_nm_km(d), f_ref)?,
            (None, Some(b)) => units::ps2_per_km(b),
            _ => {
                return Err(Error::Config(
                    "fiber needs exactly one of dispersion_ps_nm_km, beta2_ps2_km".into(),
                ))
            }
        };
        let alpha_field = units::attenuation_to_field_loss(self.fiber.alpha_db_per_km)
            .map_err(|e| Error::Config(e.to_string()))?;
        let fiber = FiberParams {
            alpha_field,
            beta2,
            beta3: 0.0,
            gamma: self.fiber.gamma_w_km * 1e-3,
            span_length: self.fiber.span_km * 1e3,
            num_spans: self.fiber.spans,
        };
        let grid = ChannelGrid {
            f0: self.grid.f0_thz * 1e12,
            delta_f: self.grid.delta_f_ghz.unwrap_or(50.0) * 1e9,
            num_channels: self.grid.channels,
            symbol_rate: self.grid.baud_gbd * 1e9,
        };
        let (phi, psi) = match (self.modulation.phi, self.modulation.psi) {
            (Some(p), Some(q)) => (p, q),
            (None, None) => ModulationSpec::moments_for(&self.modulation.name).ok_or_else(|| {
                Error::Config(format!(
                    "unknown modulation '{}': give phi and psi explicitly",
                    self.modulation.name
                ))
            })?,
            _ => return Err(Error::Config("give both phi and psi, or neither".into())),
        };
        let modulation = vec![
            ModulationSpec {
                name: self.modulation.name.clone(),
                phi,
                psi,
                snr_req: units::db_to_linear(self.modulation.snr_req_db),
            };
            grid.num_channels
        ];
        let amplifier = match (self.amplifier.nf_db, self.amplifier.n_sp) {
            (Some(nf), None) => {
                if self.amplifier.n_sp_rule.is_some() {
                    return Err(Error::Config("n_sp_rule needs n_sp".into()));
                }
                AmplifierSpec::from_noise_figure_db(nf, f_ref)
            }
            (None, Some(nsp)) => AmplifierSpec::from_nsp(
                nsp,
                self.amplifier.n_sp_rule.unwrap_or(NoiseFigureRule::Double),
                f_ref,
            ),
            _ => {
                return Err(Error::Config(
                    "amplifier needs exactly one of nf_db, n_sp".into(),
                ))
            }
        };
        let cfg = SystemConfig {
            fiber,
            grid,
            modulation,
            amplifier,
            model_mode: self.model.mode,
            corrections: self.model.corrections.unwrap_or(CorrectionMode::Full),
            outer_band: self.model.outer_band.unwrap_or(OuterBand::Symbol),
            pol_factor: self.model.pol_factor.unwrap_or(2),
            delta_f_defaulted: self.grid.delta_f_ghz.is_none(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// The reference instance in file form.
    pub fn reference() -> Self {
        ConfigFile {
            fiber: FiberFile {
                alpha_db_per_km: 0.2,
                dispersion_ps_nm_km: Some(16.75),
                beta2_ps2_km: None,
                gamma_w_km: 1.31,
                span_km: 120.0,
                spans: 40,
                ref_freq_thz: Some(193.0),
            },
            grid: GridFile {
                f0_thz: 192.25,
                delta_f_ghz: None,
                channels: 30,
                baud_gbd: 27.5,
            },
            modulation: ModulationFile {
                name: "pm-qpsk".into(),
                snr_req_db: 8.45,
                phi: None,
                psi: None,
            },
            amplifier: AmplifierFile {
                nf_db: None,
                n_sp: Some(1.77),
                n_sp_rule: None,
            },
            model: ModelFile {
                mode: ModelMode::Egn,
                corrections: None,
                outer_band: None,
                pol_factor: None,
            },
        }
    }
}

pub fn load_config(path: &std::path::Path) -> Result<SystemConfig> {
    let text = std::fs::read_to_string(path)?;
    ConfigFile::parse(&text)?.into_config()
}
