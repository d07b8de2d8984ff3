//! Antiderivatives of the link kernel along the frequency product.
//!
//! Because μ depends only on `u = (f1 − f)(f2 − f)`, every inner integral
//! along a line of constant `f1 − f = a` is a difference of antiderivatives:
//!
//! ```text
//! ∫_{va}^{vb} μ(a·v) dv = (M(a·vb) − M(a·va)) / a ,   M' = μ
//! ∫_{va}^{vb} |μ(a·v)|² dv = (F(a·vb) − F(a·va)) / a , F' = |μ|²
//! ```
//!
//! `F` and `M` are tabulated on a uniform grid fine enough to resolve every
//! phased-array lobe and interpolated with cubic Hermite polynomials using
//! the exact derivatives.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::kernel::KernelContext;
use crate::quadrature::GaussLegendre;

/// Node budget for one table (~50 MB).
const MAX_NODES: usize = 1 << 20;

#[derive(Debug, Clone)]
pub struct KernelPrimitive {
    ctx: KernelContext,
    step: f64,
    half: usize,
    abs2: Vec<f64>,
    field: Vec<Complex64>,
    d_abs2: Vec<f64>,
    d_field: Vec<Complex64>,
    /// Spans (in `u`) shorter than this are integrated directly.
    direct_span: f64,
    direct: GaussLegendre,
}

impl KernelPrimitive {
    /// Tabulates `F` and `M` on `[-u_max, u_max]`.
    pub fn new(ctx: KernelContext, u_max: f64, cells_per_lobe: usize) -> Result<Self> {
        let u_max = u_max.max(1.0);
        let c = ctx.phase_per_product().abs();
        let lobe_u = if c > 0.0 {
            ctx.structure_scale() / c
        } else {
            u_max
        };
        let mut step = lobe_u / cells_per_lobe as f64;
        let mut half = (u_max / step).ceil() as usize + 1;
        if 2 * half + 1 > MAX_NODES {
            return Err(Error::Numerical(format!(
                "kernel table would need {} nodes (limit {MAX_NODES}); the link is too dispersive \
                 for the requested resolution",
                2 * half + 1
            )));
        }
        if half < 4 {
            half = 4;
            step = u_max / (half - 1) as f64;
        }
        let n = 2 * half + 1;
        let gl = GaussLegendre::new(6);
        let node = |i: usize| (i as f64 - half as f64) * step;
        let d_field: Vec<Complex64> = (0..n).map(|i| ctx.mu_of_product(node(i))).collect();
        let d_abs2: Vec<f64> = d_field.iter().map(|m| m.norm_sqr()).collect();
        let mut abs2 = vec![0.0; n];
        let mut field = vec![Complex64::new(0.0, 0.0); n];
        for i in half..n - 1 {
            let (a, b) = (node(i), node(i + 1));
            let (fa, ma) = gl.integrate(a, b, |u| {
                let m = ctx.mu_of_product(u);
                Pair(m.norm_sqr(), m)
            })
            .into();
            abs2[i + 1] = abs2[i] + fa;
            field[i + 1] = field[i] + ma;
        }
        for i in (1..=half).rev() {
            let (a, b) = (node(i - 1), node(i));
            let (fa, ma) = gl.integrate(a, b, |u| {
                let m = ctx.mu_of_product(u);
                Pair(m.norm_sqr(), m)
            })
            .into();
            abs2[i - 1] = abs2[i] - fa;
            field[i - 1] = field[i] - ma;
        }
        Ok(Self {
            ctx,
            step,
            half,
            abs2,
            field,
            d_abs2,
            d_field,
            direct_span: 2.0 * lobe_u.min(u_max),
            direct: GaussLegendre::new(8),
        })
    }

    pub fn u_max(&self) -> f64 {
        (self.half - 1) as f64 * self.step
    }

    pub fn context(&self) -> &KernelContext {
        &self.ctx
    }

    #[inline]
    fn locate(&self, u: f64) -> (usize, f64) {
        let pos = u / self.step + self.half as f64;
        debug_assert!(
            pos >= 0.0 && pos <= (2 * self.half) as f64,
            "u = {u:e} outside the kernel table (u_max = {:e})",
            self.u_max()
        );
        let i = (pos.floor() as usize).min(2 * self.half - 1);
        (i, pos - i as f64)
    }

    /// `F(u) = ∫_0^u |μ|²`.
    #[inline]
    pub fn abs2_antiderivative(&self, u: f64) -> f64 {
        let (i, t) = self.locate(u);
        let (h00, h10, h01, h11) = hermite(t);
        h00 * self.abs2[i]
            + h10 * self.step * self.d_abs2[i]
            + h01 * self.abs2[i + 1]
            + h11 * self.step * self.d_abs2[i + 1]
    }

    /// `M(u) = ∫_0^u μ`.
    #[inline]
    pub fn field_antiderivative(&self, u: f64) -> Complex64 {
        let (i, t) = self.locate(u);
        let (h00, h10, h01, h11) = hermite(t);
        self.field[i] * h00
            + self.d_field[i] * (h10 * self.step)
            + self.field[i + 1] * h01
            + self.d_field[i + 1] * (h11 * self.step)
    }

    fn direct_panels(&self, span: f64) -> usize {
        ((span / self.direct_span * 4.0).ceil() as usize).clamp(1, 8)
    }

    /// `∫_{va}^{vb} |μ(a·v)|² dv`.
    #[inline]
    pub fn line_abs2(&self, a: f64, va: f64, vb: f64) -> f64 {
        let span = (a * (vb - va)).abs();
        if span < self.direct_span {
            let p = self.direct_panels(span);
            return self
                .direct
                .integrate_panels(va, vb, p, |v| self.ctx.mu_of_product(a * v).norm_sqr());
        }
        (self.abs2_antiderivative(a * vb) - self.abs2_antiderivative(a * va)) / a
    }

    /// `∫_{va}^{vb} μ(a·v) dv`.
    #[inline]
    pub fn line_field(&self, a: f64, va: f64, vb: f64) -> Complex64 {
        let span = (a * (vb - va)).abs();
        if span < self.direct_span {
            let p = self.direct_panels(span);
            return self
                .direct
                .integrate_panels(va, vb, p, |v| self.ctx.mu_of_product(a * v));
        }
        (self.field_antiderivative(a * vb) - self.field_antiderivative(a * va)) / a
    }
}

#[inline]
fn hermite(t: f64) -> (f64, f64, f64, f64) {
    let t2 = t * t;
    let t3 = t2 * t;
    (
        2.0 * t3 - 3.0 * t2 + 1.0,
        t3 - 2.0 * t2 + t,
        -2.0 * t3 + 3.0 * t2,
        t3 - t2,
    )
}

/// (|μ|², μ) accumulated together.
#[derive(Debug, Clone, Copy, Default)]
struct Pair(f64, Complex64);

impl std::ops::Add for Pair {
    type Output = Pair;
    fn add(self, o: Pair) -> Pair {
        Pair(self.0 + o.0, self.1 + o.1)
    }
}

impl std::ops::Mul<f64> for Pair {
    type Output = Pair;
    fn mul(self, w: f64) -> Pair {
        Pair(self.0 * w, self.1 * w)
    }
}

impl From<Pair> for (f64, Complex64) {
    fn from(p: Pair) -> Self {
        (p.0, p.1)
    }
}
