//! Discretized NLI lookup tables `D1..D4`.
//!
//! With rectangular spectra and no multi-channel terms, every entry
//! involves at most two bands: the channel of interest (C) and one
//! interferer (I). On a uniform grid the integrals therefore depend only
//! on `|n − c|`, so each distinct offset is integrated once and scattered
//! into the matrices; the per-channel moments are applied afterwards.

mod cache;
mod islands;
mod primitive;

use std::sync::atomic::{AtomicUsize, Ordering};

use rayon::prelude::*;
use serde::Serialize;

use crate::config::{CorrectionMode, ModelMode, SystemConfig};
use crate::error::{Error, Result};
use crate::kernel::KernelContext;
use crate::quadrature::QuadratureSpec;

pub use cache::{CACHE_MAGIC, CACHE_VERSION};
pub use islands::Band;
pub use primitive::KernelPrimitive;

use islands::IslandIntegrator;

/// Per-channel SCI and per-pair XCI coefficients, in 1/W².
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NliTables {
    pub num_channels: usize,
    pub d1: Vec<f64>,
    /// Row-major `N×N`, indexed `(c, n)`; zero diagonal.
    pub d2: Vec<f64>,
    pub d3: Vec<f64>,
    pub d4: Vec<f64>,
    pub err_d1: Vec<f64>,
    pub err_d2: Vec<f64>,
    pub err_d3: Vec<f64>,
    pub err_d4: Vec<f64>,
    pub table_hash: u64,
    pub model_mode: ModelMode,
    pub corrections: CorrectionMode,
    pub quadrature: QuadratureSpec,
    /// Non-convergence and clamping notes, one per affected entry.
    pub warnings: Vec<String>,
}

impl NliTables {
    /// `D1(c)`, 1-based.
    pub fn d1(&self, c: usize) -> f64 {
        self.d1[c - 1]
    }

    fn idx(&self, c: usize, n: usize) -> usize {
        (c - 1) * self.num_channels + (n - 1)
    }

    pub fn d2(&self, c: usize, n: usize) -> f64 {
        self.d2[self.idx(c, n)]
    }

    pub fn d3(&self, c: usize, n: usize) -> f64 {
        self.d3[self.idx(c, n)]
    }

    pub fn d4(&self, c: usize, n: usize) -> f64 {
        self.d4[self.idx(c, n)]
    }

    /// Checks that the tables were built for `cfg`.
    pub fn ensure_matches(&self, cfg: &SystemConfig) -> Result<()> {
        if self.num_channels != cfg.num_channels() {
            return Err(Error::Dimension {
                expected: cfg.num_channels(),
                got: self.num_channels,
            });
        }
        if self.table_hash != cfg.table_hash() {
            return Err(Error::Cache(format!(
                "tables were built for configuration {:016x}, not {:016x}",
                self.table_hash,
                cfg.table_hash()
            )));
        }
        Ok(())
    }

    /// Smallest entry over all tables.
    pub fn min_entry(&self) -> f64 {
        self.d1
            .iter()
            .chain(&self.d2)
            .chain(&self.d3)
            .chain(&self.d4)
            .copied()
            .fold(f64::INFINITY, f64::min)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, cache::encode(self))?;
        Ok(())
    }

    /// Loads a cache and rejects it unless it matches `cfg`.
    pub fn load(path: &std::path::Path, cfg: &SystemConfig) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        let tables = cache::decode(&bytes)?;
        tables.ensure_matches(cfg)?;
        Ok(tables)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        cache::encode(self)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        cache::decode(bytes)
    }
}

/// Value with an absolute error estimate.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Coefficient {
    pub value: f64,
    pub error: f64,
}

impl Coefficient {
    fn add_weighted(&mut self, w: f64, other: Coefficient) {
        if w != 0.0 {
            self.value += w * other.value;
            self.error += w.abs() * other.error;
        }
    }

    pub fn converged(&self, rel_tol: f64) -> bool {
        self.error <= rel_tol * self.value.abs() || self.error <= f64::MIN_POSITIVE
    }
}

/// The distinct island integrals.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Term {
    /// Main term, ordered assignment of (f1, f2, f1+f2−f) to bands; `true` = interferer.
    Main(bool, bool, bool),
    /// Fourth moment, pump `f1` paired in the first band, rest in the second.
    PairedPump(bool, bool),
    /// Fourth moment, idler paired in the first band, pumps in the second.
    PairedIdler(bool, bool),
    /// Sixth moment, everything in one band.
    Sixth(bool),
}

impl Term {
    fn id(self) -> i64 {
        let b = |x: bool| x as i64;
        match self {
            Term::Main(a, c, d) => 4 * b(a) + 2 * b(c) + b(d),
            Term::PairedPump(a, c) => 8 + 2 * b(a) + b(c),
            Term::PairedIdler(a, c) => 12 + 2 * b(a) + b(c),
            Term::Sixth(a) => 16 + b(a),
        }
    }

    fn uses_primitive(self) -> bool {
        !matches!(self, Term::PairedIdler(..))
    }
}

/// Band geometry for one channel offset.
#[derive(Debug, Clone, Copy)]
struct Geometry {
    coi: Band,
    int: Band,
    out: Band,
    rate: f64,
}

impl Geometry {
    fn new(cfg: &SystemConfig, offset: usize) -> Self {
        let r = cfg.grid.symbol_rate;
        let h = cfg.outer_half_width();
        Self {
            coi: Band::centered(0.0, r),
            int: Band::centered(offset as f64 * cfg.grid.delta_f, r),
            out: Band { lo: -h, hi: h },
            rate: r,
        }
    }

    fn band(&self, interferer: bool) -> Band {
        if interferer {
            self.int
        } else {
            self.coi
        }
    }

    /// Largest kernel argument the term needs from the primitive table.
    fn product_bound(&self, term: Term) -> f64 {
        let b = |x| self.band(x);
        let (b1, b2, b3) = match term {
            Term::Main(x, y, z) => (b(x), b(y), b(z)),
            Term::PairedPump(p, q) => (b(p), b(q), b(q)),
            Term::Sixth(x) => (b(x), b(x), b(x)),
            Term::PairedIdler(..) => return 0.0,
        };
        if islands::triplet_reaches(b1, b2, b3, self.out) {
            islands::product_bound(b1, b2, self.out)
        } else {
            0.0
        }
    }
}

/// Terms needed for the SCI entry.
fn sci_terms(egn: bool) -> Vec<(Term, usize)> {
    let mut t = vec![(Term::Main(false, false, false), 0)];
    if egn {
        t.extend([
            (Term::PairedPump(false, false), 0),
            (Term::PairedIdler(false, false), 0),
            (Term::Sixth(false), 0),
        ]);
    }
    t
}

/// Terms needed for the XCI entries at a given offset.
fn xci_terms(offset: usize, egn: bool, corrections: CorrectionMode) -> Vec<(Term, usize)> {
    let mut t: Vec<Term> = vec![
        Term::Main(true, false, true),
        Term::Main(true, true, false),
        Term::Main(false, false, true),
        Term::Main(true, false, false),
        Term::Main(true, true, true),
    ];
    if egn {
        match corrections {
            CorrectionMode::Full => t.extend([
                Term::PairedPump(false, true),
                Term::PairedIdler(false, true),
                Term::PairedPump(true, false),
                Term::PairedIdler(true, false),
                Term::PairedPump(true, true),
                Term::PairedIdler(true, true),
                Term::Sixth(true),
            ]),
            CorrectionMode::Dominant => t.extend([
                Term::PairedPump(false, true),
                Term::PairedPump(true, false),
                Term::PairedIdler(true, false),
                Term::Sixth(true),
            ]),
            CorrectionMode::Off => {}
        }
    }
    t.into_iter().map(|x| (x, offset)).collect()
}

/// Shared integration state for one build.
struct Engine<'a> {
    cfg: &'a SystemConfig,
    spec: &'a QuadratureSpec,
    coarse: QuadratureSpec,
    fine_prim: KernelPrimitive,
    coarse_prim: KernelPrimitive,
}

impl<'a> Engine<'a> {
    fn new(cfg: &'a SystemConfig, spec: &'a QuadratureSpec, jobs: &[(Term, usize)]) -> Result<Self> {
        cfg.validate()?;
        spec.validate()?;
        let u_max = jobs
            .iter()
            .filter(|(t, _)| t.uses_primitive())
            .map(|&(t, off)| Geometry::new(cfg, off).product_bound(t))
            .fold(0.0, f64::max);
        let ctx = KernelContext::new(&cfg.fiber);
        let coarse = QuadratureSpec {
            gl_order: (spec.gl_order * 2 / 3).max(4),
            panels: (spec.panels / 2).max(1),
            nodes_per_lobe: (spec.nodes_per_lobe / 2).max(2),
            cells_per_lobe: (spec.cells_per_lobe / 2).max(2),
            ..spec.clone()
        };
        Ok(Self {
            cfg,
            spec,
            fine_prim: KernelPrimitive::new(ctx, u_max, spec.cells_per_lobe)?,
            coarse_prim: KernelPrimitive::new(ctx, u_max, coarse.cells_per_lobe)?,
            coarse,
        })
    }

    fn run(&self, term: Term, offset: usize) -> Coefficient {
        let geo = Geometry::new(self.cfg, offset);
        let seed = self.spec.derive_seed(&[offset as i64, term.id()]);
        let eval = |prim: &KernelPrimitive, spec: &QuadratureSpec| {
            let it = IslandIntegrator::new(prim, spec, geo.rate, geo.out, seed);
            let b = |x| geo.band(x);
            match term {
                Term::Main(x, y, z) => it.main(b(x), b(y), b(z)),
                Term::PairedPump(p, q) => it.paired_pump(b(p), b(q)),
                Term::PairedIdler(p, q) => it.paired_idler(b(p), b(q)),
                Term::Sixth(x) => it.sixth(b(x)),
            }
        };
        let fine = eval(&self.fine_prim, self.spec);
        let coarse = eval(&self.coarse_prim, &self.coarse);
        Coefficient {
            value: fine,
            error: (fine - coarse).abs(),
        }
    }
}

/// Raw integrals keyed by (term, offset).
struct TermValues(Vec<((Term, usize), Coefficient)>);

impl TermValues {
    fn get(&self, term: Term, offset: usize) -> Coefficient {
        self.0
            .iter()
            .find(|((t, o), _)| *t == term && *o == offset)
            .map(|(_, v)| *v)
            .unwrap_or_default()
    }
}

fn evaluate(engine: &Engine, jobs: &[(Term, usize)], progress: Option<&(dyn Fn(usize, usize) + Sync)>) -> TermValues {
    let done = AtomicUsize::new(0);
    let values = jobs
        .par_iter()
        .map(|&(t, off)| {
            let v = engine.run(t, off);
            if let Some(p) = progress {
                p(done.fetch_add(1, Ordering::Relaxed) + 1, jobs.len());
            }
            ((t, off), v)
        })
        .collect();
    TermValues(values)
}

fn assemble_sci(v: &TermValues, phi: f64, psi: f64) -> Coefficient {
    let mut d = v.get(Term::Main(false, false, false), 0);
    d.add_weighted(phi, v.get(Term::PairedPump(false, false), 0));
    d.add_weighted(phi, v.get(Term::PairedIdler(false, false), 0));
    d.add_weighted(psi, v.get(Term::Sixth(false), 0));
    d
}

/// `(D2, D3, D4)` for a COI with moments `coi` and interferer with `int`.
fn assemble_xci(
    v: &TermValues,
    off: usize,
    (phi_c, _psi_c): (f64, f64),
    (phi_n, psi_n): (f64, f64),
) -> [Coefficient; 3] {
    let g = |t| v.get(t, off);
    let mut d2 = Coefficient::default();
    d2.add_weighted(2.0, g(Term::Main(true, false, true)));
    d2.add_weighted(1.0, g(Term::Main(true, true, false)));
    d2.add_weighted(phi_n, g(Term::PairedPump(false, true)));
    d2.add_weighted(phi_n, g(Term::PairedIdler(false, true)));

    let mut d3 = Coefficient::default();
    d3.add_weighted(1.0, g(Term::Main(false, false, true)));
    d3.add_weighted(2.0, g(Term::Main(true, false, false)));
    d3.add_weighted(phi_c, g(Term::PairedPump(true, false)));
    d3.add_weighted(phi_c, g(Term::PairedIdler(true, false)));

    let mut d4 = g(Term::Main(true, true, true));
    d4.add_weighted(phi_n, g(Term::PairedPump(true, true)));
    d4.add_weighted(phi_n, g(Term::PairedIdler(true, true)));
    d4.add_weighted(psi_n, g(Term::Sixth(true)));
    [d2, d3, d4]
}

/// Rejects negative entries; tiny negatives inside the error bar are zeroed.
fn checked(
    table: &'static str,
    c: usize,
    n: usize,
    mut x: Coefficient,
    rel_tol: f64,
    warnings: &mut Vec<String>,
) -> Result<Coefficient> {
    if !x.value.is_finite() {
        return Err(Error::Numerical(format!("{table}({c},{n}) is not finite")));
    }
    if x.value < 0.0 {
        if -x.value <= x.error {
            warnings.push(format!(
                "{table}({c},{n}) = {:e} is within its error estimate {:e} of zero; clamped",
                x.value, x.error
            ));
            x.value = 0.0;
        } else {
            return Err(Error::NegativeEntry {
                table,
                c,
                n,
                value: x.value,
            });
        }
    }
    if !x.converged(rel_tol) {
        warnings.push(format!(
            "{table}({c},{n}) error estimate {:e} exceeds {rel_tol} relative (value {:e})",
            x.error, x.value
        ));
    }
    Ok(x)
}

fn is_egn(cfg: &SystemConfig) -> bool {
    cfg.model_mode == ModelMode::Egn
}

/// `D1(c)` with its error estimate.
pub fn sci_coefficient(c: usize, cfg: &SystemConfig, q: &QuadratureSpec) -> Result<Coefficient> {
    check_index(c, cfg)?;
    let (phi, psi) = cfg.kernel_moments(c);
    let jobs = nonzero(sci_terms(is_egn(cfg)), phi != 0.0 || psi != 0.0);
    let engine = Engine::new(cfg, q, &jobs)?;
    let v = evaluate(&engine, &jobs, None);
    checked("D1", c, c, assemble_sci(&v, phi, psi), q.target_rel_tol, &mut Vec::new())
}

/// `(D2, D3, D4)(c, n)` with error estimates.
pub fn xci_coefficients(
    c: usize,
    n: usize,
    cfg: &SystemConfig,
    q: &QuadratureSpec,
) -> Result<[Coefficient; 3]> {
    check_index(c, cfg)?;
    check_index(n, cfg)?;
    if c == n {
        return Err(Error::InvalidArgument(
            "XCI needs two distinct channels".into(),
        ));
    }
    let off = c.abs_diff(n);
    let (mc, mn) = (cfg.kernel_moments(c), cfg.kernel_moments(n));
    let any = mc != (0.0, 0.0) || mn != (0.0, 0.0);
    let jobs = nonzero(xci_terms(off, is_egn(cfg), cfg.corrections), any);
    let engine = Engine::new(cfg, q, &jobs)?;
    let v = evaluate(&engine, &jobs, None);
    let mut w = Vec::new();
    let [d2, d3, d4] = assemble_xci(&v, off, mc, mn);
    Ok([
        checked("D2", c, n, d2, q.target_rel_tol, &mut w)?,
        checked("D3", c, n, d3, q.target_rel_tol, &mut w)?,
        checked("D4", c, n, d4, q.target_rel_tol, &mut w)?,
    ])
}

fn check_index(c: usize, cfg: &SystemConfig) -> Result<()> {
    if c == 0 || c > cfg.num_channels() {
        return Err(Error::InvalidArgument(format!(
            "channel {c} outside 1..={}",
            cfg.num_channels()
        )));
    }
    Ok(())
}

/// Drops correction terms when every moment is zero, so that such builds
/// reproduce GN tables exactly.
fn nonzero(jobs: Vec<(Term, usize)>, keep_corrections: bool) -> Vec<(Term, usize)> {
    jobs.into_iter()
        .filter(|(t, _)| keep_corrections || matches!(t, Term::Main(..)))
        .collect()
}

pub fn build_tables(cfg: &SystemConfig, q: &QuadratureSpec) -> Result<NliTables> {
    build_tables_with_progress(cfg, q, None)
}

/// As [`build_tables`], reporting `(done, total)` after each integral.
pub fn build_tables_with_progress(
    cfg: &SystemConfig,
    q: &QuadratureSpec,
    progress: Option<&(dyn Fn(usize, usize) + Sync)>,
) -> Result<NliTables> {
    cfg.validate()?;
    let n_ch = cfg.num_channels();
    let egn = is_egn(cfg);
    let moments: Vec<(f64, f64)> = (1..=n_ch).map(|c| cfg.kernel_moments(c)).collect();
    let any = moments.iter().any(|&m| m != (0.0, 0.0));
    let mut jobs = sci_terms(egn);
    for off in 1..n_ch {
        jobs.extend(xci_terms(off, egn, cfg.corrections));
    }
    let jobs = nonzero(jobs, any);
    let engine = Engine::new(cfg, q, &jobs)?;
    let v = evaluate(&engine, &jobs, progress);

    let mut warnings = Vec::new();
    let tol = q.target_rel_tol;
    let mut t = NliTables {
        num_channels: n_ch,
        d1: vec![0.0; n_ch],
        d2: vec![0.0; n_ch * n_ch],
        d3: vec![0.0; n_ch * n_ch],
        d4: vec![0.0; n_ch * n_ch],
        err_d1: vec![0.0; n_ch],
        err_d2: vec![0.0; n_ch * n_ch],
        err_d3: vec![0.0; n_ch * n_ch],
        err_d4: vec![0.0; n_ch * n_ch],
        table_hash: cfg.table_hash(),
        model_mode: cfg.model_mode,
        corrections: cfg.corrections,
        quadrature: q.clone(),
        warnings: Vec::new(),
    };
    for c in 1..=n_ch {
        let (phi, psi) = moments[c - 1];
        let d1 = checked("D1", c, c, assemble_sci(&v, phi, psi), tol, &mut warnings)?;
        t.d1[c - 1] = d1.value;
        t.err_d1[c - 1] = d1.error;
        for n in (1..=n_ch).filter(|&n| n != c) {
            let off = c.abs_diff(n);
            let [d2, d3, d4] = assemble_xci(&v, off, moments[c - 1], moments[n - 1]);
            let i = (c - 1) * n_ch + (n - 1);
            for (name, d, val, err) in [
                ("D2", d2, &mut t.d2, &mut t.err_d2),
                ("D3", d3, &mut t.d3, &mut t.err_d3),
                ("D4", d4, &mut t.d4, &mut t.err_d4),
            ] {
                let d = checked(name, c, n, d, tol, &mut warnings)?;
                val[i] = d.value;
                err[i] = d.error;
            }
        }
    }
    t.warnings = warnings;
    Ok(t)
}

/// Tables with reference-like magnitudes decaying with channel distance,
/// for tests that do not need real integrals.
#[cfg(test)]
pub(crate) fn synthetic_tables(n: usize, gamma_scale: f64) -> (NliTables, SystemConfig) {
    let cfg = SystemConfig::reference().with_channels(n);
    let mut d2 = vec![0.0; n * n];
    let mut d3 = vec![0.0; n * n];
    let mut d4 = vec![0.0; n * n];
    for c in 0..n {
        for m in (0..n).filter(|&m| m != c) {
            let k = c.abs_diff(m) as f64;
            d2[c * n + m] = gamma_scale * 2.7e3 / k;
            d3[c * n + m] = gamma_scale * if k == 1.0 { 0.47 } else { 0.0 };
            d4[c * n + m] = gamma_scale * if k == 1.0 { 0.15 } else { 0.0 };
        }
    }
    let t = NliTables {
        num_channels: n,
        d1: vec![gamma_scale * 1.43e4; n],
        err_d1: vec![0.0; n],
        err_d2: vec![0.0; n * n],
        err_d3: vec![0.0; n * n],
        err_d4: vec![0.0; n * n],
        d2,
        d3,
        d4,
        table_hash: cfg.table_hash(),
        model_mode: ModelMode::Egn,
        corrections: CorrectionMode::Full,
        quadrature: QuadratureSpec::default(),
        warnings: Vec::new(),
    };
    (t, cfg)
}
