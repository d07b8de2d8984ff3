use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use egnopt::config::load_config;
use egnopt::workbench::{self, Figure, RunManifest};
use egnopt::{
    BarrierSettings, Error, ModelMode, NliTables, Objective, QuadratureSpec, Result, SystemConfig,
};
use serde_json::json;

#[derive(Parser, Debug)]
#[command(name = "egnopt", version, about = "EGN/GN nonlinear-interference tables and launch-power optimization")]
struct Cli {
    /// JSON system configuration (defaults to the built-in reference link).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Table cache to read (or, for `tables`, to write).
    #[arg(long, global = true)]
    tables: Option<PathBuf>,
    /// Base seed of the quadrature rules.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    /// Format printed on stdout.
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
    /// Gauss–Legendre order of the outer rules.
    #[arg(long, global = true)]
    gl_order: Option<usize>,
    /// Quadrature nodes per kernel lobe.
    #[arg(long, global = true)]
    nodes_per_lobe: Option<usize>,
    /// Kernel table cells per lobe.
    #[arg(long, global = true)]
    cells_per_lobe: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ObjectiveArg {
    Margin,
    Rate,
}

impl From<ObjectiveArg> for Objective {
    fn from(o: ObjectiveArg) -> Self {
        match o {
            ObjectiveArg::Margin => Objective::Margin,
            ObjectiveArg::Rate => Objective::Rate,
        }
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build the NLI tables and write the cache file.
    Tables,
    /// Optimize launch powers.
    Optimize {
        #[arg(long, value_enum, default_value_t = ObjectiveArg::Margin)]
        objective: ObjectiveArg,
        /// Single common power for all channels.
        #[arg(long)]
        flat: bool,
    },
    /// Flat-power sweep of SNR and BER.
    Sweep {
        /// `start:stop:step` in dBm.
        #[arg(long, allow_hyphen_values = true)]
        power_range: String,
        /// Transmitter SNR ceiling (dB).
        #[arg(long)]
        input_snr: Option<f64>,
    },
    /// Optimize under EGN and GN tables and report the differences.
    Compare {
        #[arg(long, value_enum, default_value_t = ObjectiveArg::Margin)]
        objective: ObjectiveArg,
        #[arg(long)]
        flat: bool,
        /// Comma-separated models; must be `egn,gn`.
        #[arg(long, default_value = "egn,gn")]
        models: String,
    },
    /// Emit the CSV dataset of a figure.
    Reproduce {
        figure: String,
        /// Number of channels (at most the configured count).
        #[arg(long)]
        scale: Option<usize>,
    },
    /// Print ASE under both noise-factor readings of `n_sp`.
    Calibrate,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numerical() { 3 } else { 2 })
        }
    }
}

fn quadrature(cli: &Cli) -> Result<QuadratureSpec> {
    let mut q = QuadratureSpec::default();
    if let Some(s) = cli.seed {
        q = q.with_seed(s);
    }
    if let Some(v) = cli.gl_order {
        q.gl_order = v;
    }
    if let Some(v) = cli.nodes_per_lobe {
        q.nodes_per_lobe = v;
    }
    if let Some(v) = cli.cells_per_lobe {
        q.cells_per_lobe = v;
    }
    q.validate()?;
    Ok(q)
}

fn config(cli: &Cli) -> Result<SystemConfig> {
    let cfg = match &cli.config {
        Some(p) => load_config(p)?,
        None => SystemConfig::reference(),
    };
    if cfg.delta_f_defaulted {
        eprintln!(
            "note: channel spacing not given; using {} GHz",
            cfg.grid.delta_f / 1e9
        );
    }
    Ok(cfg)
}

fn progress(done: usize, total: usize) {
    eprint!("\rtables: {done}/{total} integrals");
    if done == total {
        eprintln!();
    }
}

/// Tables for `cfg`: the `--tables` cache when given, otherwise a cache in
/// the output directory (built on first use).
fn tables_for(cli: &Cli, cfg: &SystemConfig, q: &QuadratureSpec, explicit: bool) -> Result<(NliTables, PathBuf)> {
    let path = match (&cli.tables, explicit) {
        (Some(p), true) => p.clone(),
        _ => workbench::default_cache_path(&cli.out, cfg, q),
    };
    if explicit && cli.tables.is_some() && !path.exists() {
        return Err(Error::InvalidArgument(format!(
            "table cache {} does not exist",
            path.display()
        )));
    }
    let t = workbench::obtain_tables(cfg, q, Some(&path), Some(&progress))?;
    report_warnings(&t);
    Ok((t, path))
}

fn report_warnings(t: &NliTables) {
    for w in &t.warnings {
        eprintln!("warning: {w}");
    }
}

fn write(dir: &Path, name: &str, body: &str) -> Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let p = dir.join(name);
    std::fs::write(&p, body)?;
    Ok(p)
}

fn emit(text: &str) {
    let mut out = std::io::stdout().lock();
    let _ = out.write_all(text.as_bytes());
    if !text.ends_with('\n') {
        let _ = out.write_all(b"\n");
    }
}

fn run(cli: &Cli) -> Result<ExitCode> {
    let cfg = config(cli)?;
    let q = quadrature(cli)?;
    let st = BarrierSettings::default();
    match &cli.command {
        Command::Tables => {
            let path = cli
                .tables
                .clone()
                .unwrap_or_else(|| workbench::default_cache_path(&cli.out, &cfg, &q));
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir)?;
            }
            let t = egnopt::tables::build_tables_with_progress(&cfg, &q, Some(&progress))?;
            report_warnings(&t);
            t.save(&path)?;
            let m = RunManifest::new("tables", &cfg, &q, Some(&path), json!({ "quadrature": q }));
            emit(&serde_json::to_string_pretty(&json!({
                "manifest": m,
                "channels": t.num_channels,
                "warnings": t.warnings.len(),
            }))?);
            Ok(ExitCode::SUCCESS)
        }
        Command::Optimize { objective, flat } => {
            let (t, path) = tables_for(cli, &cfg, &q, true)?;
            let kind = Objective::from(*objective);
            let sol = workbench::solve(kind, *flat, &t, &cfg, &st)?;
            let m = RunManifest::new(
                "optimize",
                &cfg,
                &q,
                Some(&path),
                json!({ "objective": kind, "flat": flat, "barrier": st }),
            );
            let report = serde_json::to_string_pretty(&workbench::solution_report(&sol, &cfg, &m))?;
            let budget = egnopt::LinkBudget::evaluate(&sol.allocation, &t, &cfg)?;
            let csv = m.csv_header() + &budget.to_csv(&sol.allocation, &cfg);
            write(&cli.out, "solution.json", &report)?;
            write(&cli.out, "budget.csv", &csv)?;
            emit(match cli.format {
                Format::Json => &report,
                Format::Csv => &csv,
            });
            if !sol.converged {
                eprintln!("error: optimizer did not converge; best iterate reported");
                return Ok(ExitCode::from(3));
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Sweep {
            power_range,
            input_snr,
        } => {
            let range = workbench::parse_power_range(power_range)?;
            let (t, path) = tables_for(cli, &cfg, &q, true)?;
            let rows = workbench::sweep(&cfg, &t, range, *input_snr)?;
            let m = RunManifest::new(
                "sweep",
                &cfg,
                &q,
                Some(&path),
                json!({ "power_range": power_range, "input_snr_db": input_snr }),
            );
            let csv = m.csv_header() + &workbench::sweep_csv(&rows);
            write(&cli.out, "sweep.csv", &csv)?;
            emit(&match cli.format {
                Format::Csv => csv,
                Format::Json => serde_json::to_string_pretty(&json!({ "manifest": m, "rows": rows }))?,
            });
            Ok(ExitCode::SUCCESS)
        }
        Command::Compare {
            objective,
            flat,
            models,
        } => {
            let mut names: Vec<&str> = models.split(',').map(str::trim).collect();
            names.sort_unstable();
            if names != ["egn", "gn"] {
                return Err(Error::InvalidArgument(format!(
                    "--models must list egn and gn, got '{models}'"
                )));
            }
            let egn_cfg = cfg.with_model(ModelMode::Egn);
            let gn_cfg = cfg.with_model(ModelMode::Gn);
            let (te, _) = tables_for(cli, &egn_cfg, &q, false)?;
            let (tg, _) = tables_for(cli, &gn_cfg, &q, false)?;
            let kind = Objective::from(*objective);
            let cmp = workbench::compare(&te, &tg, &cfg, kind, *flat, &st)?;
            let m = RunManifest::new(
                "compare",
                &cfg,
                &q,
                None,
                json!({ "objective": kind, "flat": flat, "barrier": st }),
            );
            let report = serde_json::to_string_pretty(&workbench::comparison_report(&cmp, &cfg, &m))?;
            write(&cli.out, "compare.json", &report)?;
            emit(&match cli.format {
                Format::Json => report,
                Format::Csv => format!(
                    "power_gap_db,snr_gap_db,rate_gap_bits_per_symbol\n{:.6},{:.6},{:.6}",
                    cmp.power_gap_db, cmp.snr_gap_db, cmp.rate_gap
                ),
            });
            Ok(ExitCode::SUCCESS)
        }
        Command::Reproduce { figure, scale } => {
            let fig: Figure = figure.parse()?;
            let n = scale.unwrap_or(cfg.num_channels());
            if n == 0 || n > cfg.num_channels() {
                return Err(Error::InvalidArgument(format!(
                    "--scale must lie in 1..={}",
                    cfg.num_channels()
                )));
            }
            let cfg = cfg.with_channels(n);
            let egn_cfg = cfg.with_model(ModelMode::Egn);
            let gn_cfg = cfg.with_model(ModelMode::Gn);
            let (te, _) = tables_for(cli, &egn_cfg, &q, false)?;
            let (tg, _) = tables_for(cli, &gn_cfg, &q, false)?;
            let m = RunManifest::new(
                "reproduce",
                &cfg,
                &q,
                None,
                json!({ "figure": figure, "scale": n, "barrier": st }),
            );
            let csv = workbench::reproduce(fig, &te, &tg, &cfg, &st, &m)?;
            write(&cli.out, &format!("{figure}.csv"), &csv)?;
            emit(&csv);
            Ok(ExitCode::SUCCESS)
        }
        Command::Calibrate => {
            let t = match &cli.tables {
                Some(p) => Some(NliTables::load(p, &cfg)?),
                None => None,
            };
            let cal = workbench::calibrate(&cfg, t.as_ref(), &st)?;
            emit(&match cli.format {
                Format::Json => serde_json::to_string_pretty(&cal)?,
                Format::Csv => {
                    let mut s = String::from("rule,noise_factor,ase_dbm,flat_optimum_dbm,flat_snr_db\n");
                    for r in &cal.rows {
                        let opt = |v: Option<f64>| v.map(|x| format!("{x:.4}")).unwrap_or_default();
                        s += &format!(
                            "{:?},{:.4},{:.4},{},{}\n",
                            r.rule,
                            r.noise_factor,
                            r.ase_dbm,
                            opt(r.flat_optimum_dbm),
                            opt(r.flat_snr_db)
                        );
                    }
                    s
                }
            });
            Ok(ExitCode::SUCCESS)
        }
    }
}
