//! Launch-power optimization in log-power variables.
//!
//! With `y = ln x`, each `log(P_ASE + P_NL(e^y))` is a log-sum-exp of affine
//! functions of `y` (all table entries are non-negative), so the max-min
//! margin problem becomes
//!
//! ```text
//! minimize s  subject to  log SNRreq_c + log(P_ASE,c + P_NL,c(e^y)) − y_c − s ≤ 0
//! ```
//!
//! which is solved with a log-barrier interior-point method and damped
//! Newton steps. The high-SNR sum-rate problem maximizes
//! `Σ (y_c − log(P_ASE,c + P_NL,c(e^y)))`, concave in `y`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::budget::{ase_power, LinkBudget, PowerAllocation};
use crate::config::SystemConfig;
use crate::error::{Error, Result};
use crate::tables::NliTables;
use crate::units::{dbm_to_watt, linear_to_db, watt_to_dbm};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BarrierSettings {
    pub t0: f64,
    pub t_growth: f64,
    /// Stop once (number of barrier terms)/t falls below this.
    pub duality_gap_tol: f64,
    /// Newton decrement `λ²/2` at which an inner solve is considered done.
    pub newton_grad_tol: f64,
    pub max_outer: usize,
    pub max_inner: usize,
    pub ls_accept: f64,
    pub ls_shrink: f64,
    /// Per-channel power bounds (W).
    pub x_min: f64,
    pub x_max: f64,
    /// Starting flat power (W).
    pub x_start: f64,
}

impl Default for BarrierSettings {
    fn default() -> Self {
        Self {
            t0: 1.0,
            t_growth: 10.0,
            duality_gap_tol: 1e-8,
            newton_grad_tol: 1e-12,
            max_outer: 60,
            max_inner: 200,
            ls_accept: 0.3,
            ls_shrink: 0.5,
            x_min: dbm_to_watt(-30.0),
            x_max: dbm_to_watt(15.0),
            x_start: dbm_to_watt(-2.0),
        }
    }
}

impl BarrierSettings {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(format!("barrier settings: {m}")));
        if !(self.t0 > 0.0) {
            return bad("t0 must be positive");
        }
        if !(self.t_growth > 1.0) {
            return bad("t_growth must exceed 1");
        }
        if !(self.ls_accept > 0.0 && self.ls_accept < 0.5) {
            return bad("ls_accept must lie in (0, 0.5)");
        }
        if !(self.ls_shrink > 0.0 && self.ls_shrink < 1.0) {
            return bad("ls_shrink must lie in (0, 1)");
        }
        if !(self.duality_gap_tol > 0.0 && self.newton_grad_tol > 0.0) {
            return bad("tolerances must be positive");
        }
        if !(self.x_min > 0.0 && self.x_max > self.x_min) {
            return bad("power bounds must satisfy 0 < x_min < x_max");
        }
        if self.max_outer == 0 || self.max_inner == 0 {
            return bad("iteration caps must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Objective {
    /// Maximize the minimum SNR margin.
    Margin,
    /// Maximize the aggregate rate.
    Rate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub objective_kind: Objective,
    pub flat: bool,
    pub allocation: PowerAllocation,
    /// Minimum margin (linear) or aggregate rate (bits per symbol slot),
    /// re-evaluated exactly at the returned allocation.
    pub objective: f64,
    pub snr: Vec<f64>,
    pub margins: Vec<f64>,
    pub outer_iterations: usize,
    pub inner_iterations: usize,
    pub converged: bool,
    /// Exact objective after each outer iteration (or search step).
    pub history: Vec<f64>,
}

impl Solution {
    fn finish(
        kind: Objective,
        flat: bool,
        allocation: PowerAllocation,
        tables: &NliTables,
        cfg: &SystemConfig,
    ) -> Result<Self> {
        let b = LinkBudget::evaluate(&allocation, tables, cfg)?;
        Ok(Self {
            objective_kind: kind,
            flat,
            objective: exact_objective(kind, &b),
            snr: b.snr,
            margins: b.margin,
            allocation,
            outer_iterations: 0,
            inner_iterations: 0,
            converged: true,
            history: Vec::new(),
        })
    }

    pub fn margins_db(&self) -> Vec<f64> {
        self.margins.iter().map(|&m| linear_to_db(m)).collect()
    }
}

fn exact_objective(kind: Objective, b: &LinkBudget) -> f64 {
    match kind {
        Objective::Margin => b.min_margin(),
        Objective::Rate => b.aggregate_rate(),
    }
}

/// Table data and constants for the log-domain problems.
struct Problem {
    n: usize,
    d1: Vec<f64>,
    d2: Vec<f64>,
    d3: Vec<f64>,
    d4: Vec<f64>,
    ase: Vec<f64>,
    log_req: Vec<f64>,
}

/// `h_c = log(P_ASE,c + P_NL,c(e^y))` with derivatives in `y`.
struct LogNoise {
    value: Vec<f64>,
    /// Row `c` is `∇h_c`.
    grad: DMatrix<f64>,
    /// `∇²h_c`, one per channel (only filled when requested).
    hess: Vec<DMatrix<f64>>,
}

impl Problem {
    fn new(tables: &NliTables, cfg: &SystemConfig) -> Result<Self> {
        tables.ensure_matches(cfg)?;
        let min = tables.min_entry();
        if min < 0.0 {
            return Err(Error::Numerical(format!(
                "tables contain a negative entry ({min:e}); the problem is not convex"
            )));
        }
        let n = tables.num_channels;
        Ok(Self {
            n,
            d1: tables.d1.clone(),
            d2: tables.d2.clone(),
            d3: tables.d3.clone(),
            d4: tables.d4.clone(),
            ase: (1..=n).map(|c| ase_power(c, cfg)).collect(),
            log_req: cfg.modulation.iter().map(|m| m.snr_req.ln()).collect(),
        })
    }

    fn log_noise(&self, y: &[f64], with_hessian: bool) -> LogNoise {
        let n = self.n;
        let x: Vec<f64> = y.iter().map(|v| v.exp()).collect();
        let mut value = vec![0.0; n];
        let mut grad = DMatrix::zeros(n, n);
        let mut hess = Vec::new();
        for c in 0..n {
            let xc = x[c];
            let xc2 = xc * xc;
            let t1 = xc2 * xc * self.d1[c];
            let mut p = t1;
            let mut g = vec![0.0; n];
            let mut h_diag = vec![0.0; n];
            let mut h_cross = vec![0.0; n];
            g[c] = 3.0 * t1;
            h_diag[c] = 9.0 * t1;
            for m in (0..n).filter(|&m| m != c) {
                let k = c * n + m;
                let xm = x[m];
                let a = xc * xm * xm * self.d2[k];
                let b = xc2 * xm * self.d3[k];
                let d = xm * xm * xm * self.d4[k];
                p += a + b + d;
                g[c] += a + 2.0 * b;
                g[m] = 2.0 * a + b + 3.0 * d;
                h_diag[c] += a + 4.0 * b;
                h_diag[m] = 4.0 * a + b + 9.0 * d;
                h_cross[m] = 2.0 * a + 2.0 * b;
            }
            let q = self.ase[c] + p;
            value[c] = q.ln();
            for m in 0..n {
                grad[(c, m)] = g[m] / q;
            }
            if with_hessian {
                let mut h = DMatrix::zeros(n, n);
                for m in 0..n {
                    h[(m, m)] = h_diag[m] / q;
                    if m != c {
                        h[(c, m)] = h_cross[m] / q;
                        h[(m, c)] = h_cross[m] / q;
                    }
                }
                for i in 0..n {
                    for j in 0..n {
                        h[(i, j)] -= g[i] * g[j] / (q * q);
                    }
                }
                hess.push(h);
            }
        }
        LogNoise { value, grad, hess }
    }

    /// `g_c(y, s)`.
    fn constraints(&self, y: &[f64], s: f64) -> Vec<f64> {
        let h = self.log_noise(y, false);
        (0..self.n)
            .map(|c| self.log_req[c] + h.value[c] - y[c] - s)
            .collect()
    }
}

/// Box barrier `−Σ log(y − lo) + log(hi − y)` and its derivatives.
fn box_barrier(y: &[f64], lo: f64, hi: f64) -> Option<(f64, Vec<f64>, Vec<f64>)> {
    let mut v = 0.0;
    let mut g = Vec::with_capacity(y.len());
    let mut h = Vec::with_capacity(y.len());
    for &yi in y {
        let (a, b) = (yi - lo, hi - yi);
        if !(a > 0.0 && b > 0.0) {
            return None;
        }
        v -= a.ln() + b.ln();
        g.push(-1.0 / a + 1.0 / b);
        h.push(1.0 / (a * a) + 1.0 / (b * b));
    }
    Some((v, g, h))
}

/// Value, gradient and Hessian of the barrier function at `z`.
type Eval = (f64, DVector<f64>, DMatrix<f64>);

struct Barrier<'a> {
    p: &'a Problem,
    kind: Objective,
    lo: f64,
    hi: f64,
}

impl Barrier<'_> {
    fn dim(&self) -> usize {
        match self.kind {
            Objective::Margin => self.p.n + 1,
            Objective::Rate => self.p.n,
        }
    }

    fn terms(&self) -> usize {
        match self.kind {
            Objective::Margin => 3 * self.p.n,
            Objective::Rate => 2 * self.p.n,
        }
    }

    /// `None` outside the domain.
    fn eval(&self, z: &[f64], t: f64, with_hessian: bool) -> Option<Eval> {
        let n = self.p.n;
        let y = &z[..n];
        let (bv, bg, bh) = box_barrier(y, self.lo, self.hi)?;
        let dim = self.dim();
        let mut grad = DVector::zeros(dim);
        let mut hess = DMatrix::zeros(dim, dim);
        for i in 0..n {
            grad[i] = bg[i];
            hess[(i, i)] = bh[i];
        }
        let h = self.p.log_noise(y, with_hessian);
        let mut value = bv;
        match self.kind {
            Objective::Margin => {
                let s = z[n];
                value += t * s;
                grad[n] += t;
                for c in 0..n {
                    let g = self.p.log_req[c] + h.value[c] - y[c] - s;
                    if !(g < 0.0) {
                        return None;
                    }
                    let w = -1.0 / g;
                    value -= (-g).ln();
                    // ∇g_c = (∇h_c − e_c, −1)
                    let mut dg = DVector::zeros(dim);
                    for m in 0..n {
                        dg[m] = h.grad[(c, m)];
                    }
                    dg[c] -= 1.0;
                    dg[n] = -1.0;
                    grad.axpy(w, &dg, 1.0);
                    if with_hessian {
                        hess.view_mut((0, 0), (n, n)).add_assign_scaled(&h.hess[c], w);
                        hess.ger(w * w, &dg, &dg, 1.0);
                    }
                }
            }
            Objective::Rate => {
                for c in 0..n {
                    value -= t * (y[c] - h.value[c]);
                    grad[c] -= t;
                    for m in 0..n {
                        grad[m] += t * h.grad[(c, m)];
                    }
                    if with_hessian {
                        hess.view_mut((0, 0), (n, n)).add_assign_scaled(&h.hess[c], t);
                    }
                }
            }
        }
        value.is_finite().then_some((value, grad, hess))
    }
}

trait AddScaled {
    fn add_assign_scaled(&mut self, m: &DMatrix<f64>, w: f64);
}

impl<S> AddScaled for nalgebra::Matrix<f64, nalgebra::Dyn, nalgebra::Dyn, S>
where
    S: nalgebra::StorageMut<f64, nalgebra::Dyn, nalgebra::Dyn>,
{
    fn add_assign_scaled(&mut self, m: &DMatrix<f64>, w: f64) {
        for j in 0..m.ncols() {
            for i in 0..m.nrows() {
                self[(i, j)] += w * m[(i, j)];
            }
        }
    }
}

/// Newton direction, regularizing the Hessian if it is not positive definite.
fn newton_step(grad: &DVector<f64>, hess: &DMatrix<f64>) -> DVector<f64> {
    let scale = hess.diagonal().amax().max(1.0);
    let mut shift = 0.0;
    loop {
        let mut h = hess.clone();
        for i in 0..h.nrows() {
            h[(i, i)] += shift;
        }
        if let Some(ch) = h.cholesky() {
            return -ch.solve(grad);
        }
        shift = if shift == 0.0 { 1e-12 * scale } else { shift * 10.0 };
    }
}

struct Run {
    z: Vec<f64>,
    outer: usize,
    inner: usize,
    converged: bool,
    history: Vec<Vec<f64>>,
}

fn barrier_solve(b: &Barrier, z0: Vec<f64>, st: &BarrierSettings) -> Result<Run> {
    let mut z = z0;
    let mut t = st.t0;
    let mut run = Run {
        z: Vec::new(),
        outer: 0,
        inner: 0,
        converged: false,
        history: Vec::new(),
    };
    for _ in 0..st.max_outer {
        run.outer += 1;
        let mut inner_ok = false;
        for _ in 0..st.max_inner {
            run.inner += 1;
            let (f, g, h) = b
                .eval(&z, t, true)
                .ok_or_else(|| Error::Numerical("iterate left the barrier domain".into()))?;
            let dz = newton_step(&g, &h);
            let decrement = -g.dot(&dz);
            if decrement / 2.0 <= st.newton_grad_tol {
                inner_ok = true;
                break;
            }
            let mut step = 1.0;
            loop {
                let trial: Vec<f64> = z.iter().zip(dz.iter()).map(|(a, d)| a + step * d).collect();
                if let Some((ft, ..)) = b.eval(&trial, t, false) {
                    if ft <= f - st.ls_accept * step * decrement {
                        z = trial;
                        break;
                    }
                }
                step *= st.ls_shrink;
                if step < 1e-20 {
                    break;
                }
            }
            if step < 1e-20 {
                // no progress possible at this precision
                inner_ok = true;
                break;
            }
        }
        run.history.push(z.clone());
        let gap = b.terms() as f64 / t;
        if inner_ok && gap < st.duality_gap_tol {
            run.converged = true;
            break;
        }
        t *= st.t_growth;
    }
    run.z = z;
    Ok(run)
}

fn start_point(p: &Problem, st: &BarrierSettings) -> Vec<f64> {
    let (lo, hi) = (st.x_min.ln(), st.x_max.ln());
    let y0 = st.x_start.ln();
    let y0 = if y0 > lo && y0 < hi { y0 } else { 0.5 * (lo + hi) };
    vec![y0; p.n]
}

fn finish_run(
    run: Run,
    kind: Objective,
    p: &Problem,
    tables: &NliTables,
    cfg: &SystemConfig,
) -> Result<Solution> {
    let n = p.n;
    let alloc = PowerAllocation::from_log(run.z[..n].to_vec())?;
    let mut sol = Solution::finish(kind, false, alloc, tables, cfg)?;
    sol.outer_iterations = run.outer;
    sol.inner_iterations = run.inner;
    sol.converged = run.converged;
    for z in &run.history {
        let a = PowerAllocation::from_log(z[..n].to_vec())?;
        let b = LinkBudget::evaluate(&a, tables, cfg)?;
        sol.history.push(exact_objective(kind, &b));
    }
    Ok(sol)
}

/// Max-min SNR margin over per-channel powers.
pub fn solve_min_max_margin(
    tables: &NliTables,
    cfg: &SystemConfig,
    st: &BarrierSettings,
) -> Result<Solution> {
    st.validate()?;
    let p = Problem::new(tables, cfg)?;
    let b = Barrier {
        p: &p,
        kind: Objective::Margin,
        lo: st.x_min.ln(),
        hi: st.x_max.ln(),
    };
    let mut z = start_point(&p, st);
    let worst = p
        .constraints(&z, 0.0)
        .into_iter()
        .fold(f64::NEG_INFINITY, f64::max);
    z.push(worst + 1.0);
    let run = barrier_solve(&b, z, st)?;
    finish_run(run, Objective::Margin, &p, tables, cfg)
}

/// Max aggregate rate (high-SNR surrogate) over per-channel powers.
pub fn solve_max_rate(
    tables: &NliTables,
    cfg: &SystemConfig,
    st: &BarrierSettings,
) -> Result<Solution> {
    st.validate()?;
    let p = Problem::new(tables, cfg)?;
    let b = Barrier {
        p: &p,
        kind: Objective::Rate,
        lo: st.x_min.ln(),
        hi: st.x_max.ln(),
    };
    let run = barrier_solve(&b, start_point(&p, st), st)?;
    finish_run(run, Objective::Rate, &p, tables, cfg)
}

/// Best common launch power: coarse dB grid, then golden-section search.
pub fn solve_flat(
    kind: Objective,
    tables: &NliTables,
    cfg: &SystemConfig,
    st: &BarrierSettings,
) -> Result<Solution> {
    st.validate()?;
    tables.ensure_matches(cfg)?;
    let n = tables.num_channels;
    let f = |dbm: f64| -> Result<f64> {
        let a = PowerAllocation::flat(n, dbm_to_watt(dbm))?;
        Ok(exact_objective(kind, &LinkBudget::evaluate(&a, tables, cfg)?))
    };
    let (lo, hi) = (watt_to_dbm(st.x_min), watt_to_dbm(st.x_max));
    let step = 0.5;
    let mut history = Vec::new();
    let mut best = (lo, f(lo)?);
    let mut p = lo;
    while p < hi {
        p = (p + step).min(hi);
        let v = f(p)?;
        history.push(v);
        if v > best.1 {
            best = (p, v);
        }
    }
    let (mut a, mut b) = ((best.0 - step).max(lo), (best.0 + step).min(hi));
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = b - r * (b - a);
    let mut x2 = a + r * (b - a);
    let (mut f1, mut f2) = (f(x1)?, f(x2)?);
    let mut iters = 0;
    while b - a > 1e-7 {
        iters += 1;
        if f1 >= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - r * (b - a);
            f1 = f(x1)?;
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + r * (b - a);
            f2 = f(x2)?;
        }
        history.push(f1.max(f2));
    }
    let x = if f1 >= f2 { x1 } else { x2 };
    let x = if f(x)? >= best.1 { x } else { best.0 };
    let alloc = PowerAllocation::flat(n, dbm_to_watt(x))?;
    let mut sol = Solution::finish(kind, true, alloc, tables, cfg)?;
    sol.outer_iterations = 1;
    sol.inner_iterations = iters;
    sol.history = history;
    Ok(sol)
}

/// `g_c(y, s) = log SNRreq_c + log(P_ASE,c + P_NL,c(e^y)) − y_c − s`.
pub fn margin_constraint_values(
    y: &[f64],
    s: f64,
    tables: &NliTables,
    cfg: &SystemConfig,
) -> Result<Vec<f64>> {
    let p = Problem::new(tables, cfg)?;
    if y.len() != p.n {
        return Err(Error::Dimension {
            expected: p.n,
            got: y.len(),
        });
    }
    Ok(p.constraints(y, s))
}

/// Objective value and gradient.
///
/// With `t = None` this is the plain problem objective: `s` for the margin
/// problem (gradient over `(y, s)`), and the high-SNR rate surrogate
/// `Σ (y_c − log(P_ASE,c + P_NL,c))` for the rate problem. With `Some(t)`
/// it is the barrier function minimized by the solver, including the
/// power-bound terms of `settings`.
pub fn objective_value_and_gradient(
    kind: Objective,
    y: &[f64],
    s: Option<f64>,
    tables: &NliTables,
    cfg: &SystemConfig,
    t: Option<f64>,
    settings: &BarrierSettings,
) -> Result<(f64, Vec<f64>)> {
    let p = Problem::new(tables, cfg)?;
    let n = p.n;
    if y.len() != n {
        return Err(Error::Dimension {
            expected: n,
            got: y.len(),
        });
    }
    let s_val = || s.ok_or_else(|| Error::InvalidArgument("margin objective needs s".into()));
    match t {
        None => match kind {
            Objective::Margin => {
                let mut g = vec![0.0; n + 1];
                g[n] = 1.0;
                Ok((s_val()?, g))
            }
            Objective::Rate => {
                let h = p.log_noise(y, false);
                let v = (0..n).map(|c| y[c] - h.value[c]).sum();
                let g = (0..n)
                    .map(|m| 1.0 - (0..n).map(|c| h.grad[(c, m)]).sum::<f64>())
                    .collect();
                Ok((v, g))
            }
        },
        Some(t) => {
            let b = Barrier {
                p: &p,
                kind,
                lo: settings.x_min.ln(),
                hi: settings.x_max.ln(),
            };
            let mut z = y.to_vec();
            if kind == Objective::Margin {
                z.push(s_val()?);
            }
            let (v, g, _) = b
                .eval(&z, t, false)
                .ok_or_else(|| Error::InvalidArgument("point outside the barrier domain".into()))?;
            Ok((v, g.iter().copied().collect()))
        }
    }
}
