//! Reports behind the command-line workbench: manifests, sweeps, model
//! comparisons, figure datasets and ASE calibration.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use serde_json::{json, Value};

use crate::budget::{ber_from_snr, combine_with_input_snr, LinkBudget, PowerAllocation};
use crate::config::{ModelMode, NoiseFigureRule, SystemConfig};
use crate::error::{Error, Result};
use crate::optimizer::{self, BarrierSettings, Objective, Solution};
use crate::quadrature::QuadratureSpec;
use crate::tables::{self, NliTables};
use crate::units::{db_to_linear, dbm_to_watt, linear_to_db, watt_to_dbm};

/// Flat-power SNR the calibration aims for.
pub const REFERENCE_FLAT_SNR_DB: f64 = 8.8;

/// Provenance embedded in every report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config_hash: String,
    pub table_hash: String,
    pub table_cache: Option<String>,
    pub seed: u64,
    pub settings: Value,
    pub config: Value,
    pub timestamp_unix: u64,
    pub tool_version: String,
}

impl RunManifest {
    pub fn new(
        command: &str,
        cfg: &SystemConfig,
        q: &QuadratureSpec,
        table_cache: Option<&Path>,
        settings: Value,
    ) -> Self {
        Self {
            command: command.to_string(),
            config_hash: format!("{:016x}", cfg.config_hash()),
            table_hash: format!("{:016x}", cfg.table_hash()),
            table_cache: table_cache.map(|p| p.display().to_string()),
            seed: q.base_seed,
            settings,
            config: serde_json::to_value(cfg).expect("serializable"),
            timestamp_unix: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
        }
    }

    /// Comment lines for CSV outputs.
    pub fn csv_header(&self) -> String {
        let text = serde_json::to_string(self).expect("serializable");
        format!("# manifest {text}\n")
    }
}

/// Loads tables from `cache` when it exists, otherwise builds them (and
/// writes the cache if a path was given).
pub fn obtain_tables(
    cfg: &SystemConfig,
    q: &QuadratureSpec,
    cache: Option<&Path>,
    progress: Option<&(dyn Fn(usize, usize) + Sync)>,
) -> Result<NliTables> {
    if let Some(p) = cache {
        if p.exists() {
            return NliTables::load(p, cfg);
        }
    }
    let t = tables::build_tables_with_progress(cfg, q, progress)?;
    if let Some(p) = cache {
        t.save(p)?;
    }
    Ok(t)
}

/// Cache file name for a configuration inside `dir`.
pub fn default_cache_path(dir: &Path, cfg: &SystemConfig, q: &QuadratureSpec) -> PathBuf {
    dir.join(format!(
        "tables-{:016x}-{:016x}.nlit",
        cfg.table_hash(),
        q.digest()
    ))
}

pub fn solve(
    kind: Objective,
    flat: bool,
    t: &NliTables,
    cfg: &SystemConfig,
    st: &BarrierSettings,
) -> Result<Solution> {
    match (kind, flat) {
        (k, true) => optimizer::solve_flat(k, t, cfg, st),
        (Objective::Margin, false) => optimizer::solve_min_max_margin(t, cfg, st),
        (Objective::Rate, false) => optimizer::solve_max_rate(t, cfg, st),
    }
}

/// JSON solution report.
pub fn solution_report(sol: &Solution, cfg: &SystemConfig, manifest: &RunManifest) -> Value {
    json!({
        "manifest": manifest,
        "objective_kind": sol.objective_kind,
        "flat": sol.flat,
        "objective": sol.objective,
        "objective_db": match sol.objective_kind {
            Objective::Margin => Some(linear_to_db(sol.objective)),
            Objective::Rate => None,
        },
        "pol_factor": cfg.pol_factor,
        "allocation_dbm": sol.allocation.dbm(),
        "snr_db": sol.snr.iter().map(|&s| linear_to_db(s)).collect::<Vec<_>>(),
        "margins_db": sol.margins_db(),
        "outer_iterations": sol.outer_iterations,
        "inner_iterations": sol.inner_iterations,
        "converged": sol.converged,
        "config_hash": manifest.config_hash,
        "table_hash": manifest.table_hash,
    })
}

/// Parses `a:b:step` (dBm).
pub fn parse_power_range(s: &str) -> Result<(f64, f64, f64)> {
    let parts: Vec<&str> = s.split(':').collect();
    let bad = || Error::InvalidArgument(format!("power range must be a:b:step, got '{s}'"));
    if parts.len() != 3 {
        return Err(bad());
    }
    let v: Vec<f64> = parts
        .iter()
        .map(|p| p.trim().parse::<f64>().map_err(|_| bad()))
        .collect::<Result<_>>()?;
    let (a, b, step) = (v[0], v[1], v[2]);
    if !(a.is_finite() && b.is_finite() && step > 0.0 && b >= a) {
        return Err(bad());
    }
    Ok((a, b, step))
}

/// One row of a flat-power sweep.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub power_dbm: f64,
    pub channel: usize,
    pub snr_db: f64,
    pub snr_with_tx_noise_db: f64,
    pub ber: f64,
}

/// Flat-power sweep; `input_snr_db` adds transmitter noise.
pub fn sweep(
    cfg: &SystemConfig,
    t: &NliTables,
    (a, b, step): (f64, f64, f64),
    input_snr_db: Option<f64>,
) -> Result<Vec<SweepRow>> {
    t.ensure_matches(cfg)?;
    let n = cfg.num_channels();
    let count = ((b - a) / step + 1e-9).floor() as usize + 1;
    let tx = input_snr_db.map(db_to_linear);
    let mut rows = Vec::with_capacity(count * n);
    for k in 0..count {
        let p = a + step * k as f64;
        let alloc = PowerAllocation::flat(n, dbm_to_watt(p))?;
        let budget = LinkBudget::evaluate(&alloc, t, cfg)?;
        for c in 1..=n {
            let s = budget.snr[c - 1];
            let combined = tx.map_or(s, |x| combine_with_input_snr(s, x));
            rows.push(SweepRow {
                power_dbm: p,
                channel: c,
                snr_db: linear_to_db(s),
                snr_with_tx_noise_db: linear_to_db(combined),
                ber: ber_from_snr(combined)?,
            });
        }
    }
    Ok(rows)
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut s = String::from("power_dbm,channel,snr_db,snr_with_tx_noise_db,ber\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{:.4},{},{:.6},{:.6},{:.6e}",
            r.power_dbm, r.channel, r.snr_db, r.snr_with_tx_noise_db, r.ber
        );
    }
    s
}

/// Side-by-side EGN/GN optimization.
#[derive(Debug, Clone)]
pub struct Comparison {
    pub egn: Solution,
    pub gn: Solution,
    /// Mean per-channel launch power difference, EGN − GN (dB).
    pub power_gap_db: f64,
    /// Centre-channel SNR difference, EGN − GN (dB).
    pub snr_gap_db: f64,
    /// Aggregate rate difference, EGN − GN (bits per symbol slot).
    pub rate_gap: f64,
}

pub fn compare(
    egn_tables: &NliTables,
    gn_tables: &NliTables,
    cfg: &SystemConfig,
    kind: Objective,
    flat: bool,
    st: &BarrierSettings,
) -> Result<Comparison> {
    let egn_cfg = cfg.with_model(ModelMode::Egn);
    let gn_cfg = cfg.with_model(ModelMode::Gn);
    let egn = solve(kind, flat, egn_tables, &egn_cfg, st)?;
    let gn = solve(kind, flat, gn_tables, &gn_cfg, st)?;
    let n = cfg.num_channels();
    let mean = |s: &Solution| s.allocation.dbm().iter().sum::<f64>() / n as f64;
    let mid = n.div_ceil(2) - 1;
    let rate = |s: &Solution, t: &NliTables, c: &SystemConfig| -> Result<f64> {
        Ok(LinkBudget::evaluate(&s.allocation, t, c)?.aggregate_rate())
    };
    Ok(Comparison {
        power_gap_db: mean(&egn) - mean(&gn),
        snr_gap_db: linear_to_db(egn.snr[mid]) - linear_to_db(gn.snr[mid]),
        rate_gap: rate(&egn, egn_tables, &egn_cfg)? - rate(&gn, gn_tables, &gn_cfg)?,
        egn,
        gn,
    })
}

pub fn comparison_report(cmp: &Comparison, cfg: &SystemConfig, manifest: &RunManifest) -> Value {
    json!({
        "manifest": manifest,
        "egn": solution_report(&cmp.egn, &cfg.with_model(ModelMode::Egn), manifest),
        "gn": solution_report(&cmp.gn, &cfg.with_model(ModelMode::Gn), manifest),
        "power_gap_db": cmp.power_gap_db,
        "snr_gap_db": cmp.snr_gap_db,
        "rate_gap_bits_per_symbol": cmp.rate_gap,
    })
}

/// Datasets that can be reproduced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Figure {
    /// Launch power per channel.
    Fig3,
    /// Rate per channel under sum-rate optimization.
    Fig5,
    /// SNR per channel.
    Fig6,
}

impl std::str::FromStr for Figure {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fig3" => Ok(Figure::Fig3),
            "fig5" => Ok(Figure::Fig5),
            "fig6" => Ok(Figure::Fig6),
            _ => Err(Error::InvalidArgument(format!(
                "unknown figure '{s}' (expected fig3, fig5 or fig6)"
            ))),
        }
    }
}

/// CSV dataset for `fig`; one row per channel with both models.
pub fn reproduce(
    fig: Figure,
    egn_tables: &NliTables,
    gn_tables: &NliTables,
    cfg: &SystemConfig,
    st: &BarrierSettings,
    manifest: &RunManifest,
) -> Result<String> {
    let egn_cfg = cfg.with_model(ModelMode::Egn);
    let gn_cfg = cfg.with_model(ModelMode::Gn);
    let kind = match fig {
        Figure::Fig5 => Objective::Rate,
        _ => Objective::Margin,
    };
    let runs = [
        solve(kind, false, egn_tables, &egn_cfg, st)?,
        solve(kind, false, gn_tables, &gn_cfg, st)?,
        solve(kind, true, egn_tables, &egn_cfg, st)?,
        solve(kind, true, gn_tables, &gn_cfg, st)?,
    ];
    let budgets = [
        LinkBudget::evaluate(&runs[0].allocation, egn_tables, &egn_cfg)?,
        LinkBudget::evaluate(&runs[1].allocation, gn_tables, &gn_cfg)?,
        LinkBudget::evaluate(&runs[2].allocation, egn_tables, &egn_cfg)?,
        LinkBudget::evaluate(&runs[3].allocation, gn_tables, &gn_cfg)?,
    ];
    let what = match fig {
        Figure::Fig3 => "power_dbm",
        Figure::Fig5 => "rate_bits_per_symbol",
        Figure::Fig6 => "snr_db",
    };
    let value = |r: usize, c: usize| match fig {
        Figure::Fig3 => watt_to_dbm(runs[r].allocation.x[c]),
        Figure::Fig5 => budgets[r].rate[c],
        Figure::Fig6 => linear_to_db(budgets[r].snr[c]),
    };
    let mut s = manifest.csv_header();
    let _ = writeln!(
        s,
        "channel,f_center_hz,{what}_egn,{what}_gn,{what}_egn_flat,{what}_gn_flat"
    );
    for c in 0..cfg.num_channels() {
        let _ = writeln!(
            s,
            "{},{:.6e},{:.6},{:.6},{:.6},{:.6}",
            c + 1,
            cfg.grid.center_frequency(c + 1),
            value(0, c),
            value(1, c),
            value(2, c),
            value(3, c)
        );
    }
    Ok(s)
}

/// ASE and flat optimum under one noise-factor reading.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CalibrationRow {
    pub rule: NoiseFigureRule,
    pub noise_factor: f64,
    pub ase_dbm: f64,
    pub flat_optimum_dbm: Option<f64>,
    pub flat_snr_db: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Calibration {
    pub rows: Vec<CalibrationRow>,
    /// Reading whose flat-optimum SNR is closest to [`REFERENCE_FLAT_SNR_DB`].
    pub chosen: Option<NoiseFigureRule>,
}

/// Evaluates ASE under both `n_sp` readings; with tables, also the flat
/// optimum, and picks the reading that best matches the reference SNR.
pub fn calibrate(
    cfg: &SystemConfig,
    t: Option<&NliTables>,
    st: &BarrierSettings,
) -> Result<Calibration> {
    let rules = if cfg.amplifier.n_sp.is_some() {
        vec![NoiseFigureRule::Double, NoiseFigureRule::Equal]
    } else {
        vec![cfg.amplifier.rule]
    };
    let mut rows = Vec::new();
    for rule in rules {
        let mut c = cfg.clone();
        c.amplifier = cfg.amplifier.with_rule(rule);
        let ase = crate::budget::ase_power(1, &c);
        let (mut opt, mut snr) = (None, None);
        if let Some(t) = t {
            let sol = optimizer::solve_flat(Objective::Margin, t, &c, st)?;
            let mid = c.num_channels().div_ceil(2) - 1;
            opt = Some(watt_to_dbm(sol.allocation.x[mid]));
            snr = Some(linear_to_db(sol.snr[mid]));
        }
        rows.push(CalibrationRow {
            rule,
            noise_factor: c.amplifier.noise_factor,
            ase_dbm: watt_to_dbm(ase),
            flat_optimum_dbm: opt,
            flat_snr_db: snr,
        });
    }
    let chosen = rows
        .iter()
        .filter_map(|r| r.flat_snr_db.map(|s| (r.rule, (s - REFERENCE_FLAT_SNR_DB).abs())))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(r, _)| r);
    Ok(Calibration { rows, chosen })
}
