//! Island integrals of the EGN kernel for rectangular channel spectra.
//!
//! All frequencies are relative to the centre of the channel of interest.
//! Each spectral factor of the FWM triplet `(f1, f2, f1 + f2 − f)` is
//! confined to one channel band, which turns every integral into nested
//! one-dimensional integrals with analytically clipped limits:
//!
//! * main (GN) term: `(16/27)/R³ ∫df ∫df1 ∫df2 |μ|²`
//! * fourth-moment term with a paired `f1`: `(80/81)/R⁴ ∫df ∫df1 |∫df2 μ|²`
//! * fourth-moment term with a paired `f1 + f2 − f`:
//!   `(16/81)/R⁴ ∫df ∫dν |∫df1 μ(f1, ν − f1, f)|²`
//! * sixth-moment term: `(16/81)/R⁵ ∫df |∫df1 ∫df2 μ|²`
//!
//! The rectangular pulse has `|s(f)|² = 1/R` inside its band.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::primitive::KernelPrimitive;
use crate::quadrature::{GaussLegendre, QuadratureSpec};

/// Closed frequency interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Band {
    pub lo: f64,
    pub hi: f64,
}

impl Band {
    pub fn centered(center: f64, width: f64) -> Self {
        Self {
            lo: center - width / 2.0,
            hi: center + width / 2.0,
        }
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    fn intersect(&self, lo: f64, hi: f64) -> Option<(f64, f64)> {
        let a = self.lo.max(lo);
        let b = self.hi.min(hi);
        (b - a > 1e-9 * self.width()).then_some((a, b))
    }
}

pub const MAIN_COEF: f64 = 16.0 / 27.0;
pub const PAIRED_PUMP_COEF: f64 = 80.0 / 81.0;
pub const PAIRED_IDLER_COEF: f64 = 16.0 / 81.0;
pub const SIXTH_COEF: f64 = 16.0 / 81.0;

/// True when `f1 + f2 − f3` with `fi ∈ bi` can land in `out`.
pub fn triplet_reaches(b1: Band, b2: Band, b3: Band, out: Band) -> bool {
    out.intersect(b1.lo + b2.lo - b3.hi, b1.hi + b2.hi - b3.lo)
        .is_some()
}

/// Largest `|(f1 − f)(f2 − f)|` reachable with `f1 ∈ b1`, `f2 ∈ b2`, `f ∈ out`.
pub fn product_bound(b1: Band, b2: Band, out: Band) -> f64 {
    let a = (b1.hi - out.lo).abs().max((b1.lo - out.hi).abs());
    let v = (b2.hi - out.lo).abs().max((b2.lo - out.hi).abs());
    a * v
}

/// Bound on `|∂u/∂f| = |f1 − f + f2 − f|` for `f1 ∈ b1`, `f2 ∈ b2`, `f ∈ out`.
fn du_df(b1: Band, b2: Band, out: Band) -> f64 {
    let a = (b1.hi - out.lo).abs().max((b1.lo - out.hi).abs());
    let v = (b2.hi - out.lo).abs().max((b2.lo - out.hi).abs());
    a + v
}

/// Nested quadrature over the clipped island supports.
pub struct IslandIntegrator<'a> {
    prim: &'a KernelPrimitive,
    outer: GaussLegendre,
    inner: GaussLegendre,
    panels: usize,
    nodes_per_lobe: usize,
    rate: f64,
    out: Band,
    /// Per-term jitter seed for the outermost panel layout.
    seed: u64,
}

/// Geometric grading ratio toward integrable peaks.
const GRADE_RATIO: f64 = 0.35;
/// Smallest graded panel relative to the segment length.
const GRADE_FLOOR: f64 = 1e-5;
/// Interior panel boundaries of the outermost integral move by up to this
/// fraction of a panel width, depending on the seed.
const JITTER: f64 = 0.3;
/// Cap on panels per piece of a line integral.
const MAX_PANELS: usize = 2048;
/// Cap on panels per segment of the outermost integral.
const MAX_OUTER_PANELS: usize = 64;

impl<'a> IslandIntegrator<'a> {
    pub fn new(
        prim: &'a KernelPrimitive,
        spec: &QuadratureSpec,
        rate: f64,
        out: Band,
        seed: u64,
    ) -> Self {
        Self {
            prim,
            outer: GaussLegendre::new(spec.gl_order),
            inner: GaussLegendre::new(8),
            panels: spec.panels,
            nodes_per_lobe: spec.nodes_per_lobe,
            rate,
            out,
            seed,
        }
    }

    /// Integrates `g` over `[lo, hi]` split at `breaks`. Panels are graded
    /// geometrically toward `peak` when it lies on or next to a segment, and
    /// every panel is subdivided so that each piece sweeps at most a few
    /// kernel lobes (`lobes(a, b)` counts them).
    fn integrate_1d<T, G, S>(
        &self,
        lo: f64,
        hi: f64,
        breaks: &[f64],
        peak: Option<f64>,
        lobes: S,
        mut g: G,
    ) -> T
    where
        T: std::ops::Add<Output = T> + std::ops::Mul<f64, Output = T> + Default,
        G: FnMut(f64) -> T,
        S: Fn(f64, f64) -> f64,
    {
        let mut acc = T::default();
        for (a, b) in segments(lo, hi, breaks, peak) {
            let len = b - a;
            let toward = peak.and_then(|p| {
                let (da, db) = ((p - a).abs(), (p - b).abs());
                (da.min(db) < len).then_some(da <= db)
            });
            let pieces = match toward {
                Some(toward_lo) => graded_edges(a, b, toward_lo),
                None => vec![(a, b)],
            };
            for (pa, pb) in pieces {
                let nodes = self.nodes_per_lobe as f64 * lobes(pa, pb);
                let panels = ((nodes / self.outer.order() as f64).ceil() as usize)
                    .clamp(self.panels, MAX_PANELS);
                acc = acc + self.outer.integrate_panels(pa, pb, panels, &mut g);
            }
        }
        acc
    }

    /// Outermost integral over the receiver band, with seeded jitter.
    /// `du_df` bounds `|∂u/∂f|` and sets the panel density.
    fn integrate_outer<G>(&self, breaks: &[f64], du_df: f64, mut g: G) -> f64
    where
        G: FnMut(f64) -> f64,
    {
        let ctx = self.prim.context();
        let per_hz = ctx.phase_per_product().abs() * du_df / ctx.structure_scale();
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut acc = 0.0;
        for (a, b) in segments(self.out.lo, self.out.hi, breaks, None) {
            let nodes = self.nodes_per_lobe as f64 * per_hz * (b - a);
            let panels = ((nodes / self.outer.order() as f64).ceil() as usize)
                .clamp(self.panels, MAX_OUTER_PANELS);
            let h = (b - a) / panels as f64;
            let mut edges: Vec<f64> = (0..=panels).map(|k| a + h * k as f64).collect();
            for e in edges.iter_mut().take(panels).skip(1) {
                *e += JITTER * h * (2.0 * rng.gen::<f64>() - 1.0);
            }
            for w in edges.windows(2) {
                acc += self.outer.integrate(w[0], w[1], &mut g);
            }
        }
        acc
    }

    /// For fixed `f`, integrates `line(a, va, vb)` over `f1 ∈ b1`, where
    /// `a = f1 − f` and `[va, vb]` is the admissible range of `f2 − f`
    /// with `f2 ∈ b2`, `f1 + f2 − f ∈ b3`.
    fn over_pump<T, L>(&self, f: f64, b1: Band, b2: Band, b3: Band, line: L) -> T
    where
        T: std::ops::Add<Output = T> + std::ops::Mul<f64, Output = T> + Default,
        L: Fn(f64, f64, f64) -> T,
    {
        let Some((lo, hi)) = b1.intersect(b3.lo + f - b2.hi, b3.hi + f - b2.lo) else {
            return T::default();
        };
        let breaks = [f + b3.lo - b2.lo, f + b3.hi - b2.hi];
        let limits = |f1: f64| {
            (
                b2.lo.max(b3.lo + f - f1) - f,
                b2.hi.min(b3.hi + f - f1) - f,
            )
        };
        let ctx = self.prim.context();
        let (c, lobe) = (ctx.phase_per_product().abs(), ctx.structure_scale());
        let lobes = |x: f64, y: f64| {
            let ((xa, xb), (ya, yb)) = (limits(x), limits(y));
            let (ax, ay) = (x - f, y - f);
            let sweep = (ax * xa - ay * ya).abs().max((ax * xb - ay * yb).abs());
            c * sweep / lobe
        };
        self.integrate_1d(lo, hi, &breaks, Some(f), lobes, |f1| {
            let (v_lo, v_hi) = limits(f1);
            if v_hi > v_lo {
                line(f1 - f, v_lo, v_hi)
            } else {
                T::default()
            }
        })
    }

    fn outer_breaks(&self, b1: Band, b2: Band, b3: Band) -> Vec<f64> {
        let ks = [
            b3.lo - b2.hi,
            b3.hi - b2.lo,
            b3.lo - b2.lo,
            b3.hi - b2.hi,
            0.0,
        ];
        ks.iter().flat_map(|k| [b1.lo - k, b1.hi - k]).collect()
    }

    /// Main term for the ordered assignment `(b1, b2, b3)`.
    pub fn main(&self, b1: Band, b2: Band, b3: Band) -> f64 {
        if !triplet_reaches(b1, b2, b3, self.out) {
            return 0.0;
        }
        let breaks = self.outer_breaks(b1, b2, b3);
        let prim = self.prim;
        let total = self.integrate_outer(&breaks, du_df(b1, b2, self.out), |f| {
            self.over_pump(f, b1, b2, b3, |a, va, vb| prim.line_abs2(a, va, vb))
        });
        MAIN_COEF * total / self.rate.powi(3)
    }

    /// Fourth-moment term: `f1` paired within `pair`, the other factors in `cum`.
    pub fn paired_pump(&self, pair: Band, cum: Band) -> f64 {
        if !triplet_reaches(pair, cum, cum, self.out) {
            return 0.0;
        }
        let breaks = self.outer_breaks(pair, cum, cum);
        let prim = self.prim;
        let total = self.integrate_outer(&breaks, du_df(pair, cum, self.out), |f| {
            self.over_pump(f, pair, cum, cum, |a, va, vb| prim.line_field(a, va, vb).norm_sqr())
        });
        PAIRED_PUMP_COEF * total / self.rate.powi(4)
    }

    /// Sixth-moment term, all factors in `band`.
    pub fn sixth(&self, band: Band) -> f64 {
        if !triplet_reaches(band, band, band, self.out) {
            return 0.0;
        }
        let breaks = self.outer_breaks(band, band, band);
        let prim = self.prim;
        let total = self.integrate_outer(&breaks, du_df(band, band, self.out), |f| {
            let z: Complex64 =
                self.over_pump(f, band, band, band, |a, va, vb| prim.line_field(a, va, vb));
            z.norm_sqr()
        });
        SIXTH_COEF * total / self.rate.powi(5)
    }

    /// Fourth-moment term: idler `f1 + f2 − f` paired within `pair`, pumps in `cum`.
    pub fn paired_idler(&self, pair: Band, cum: Band) -> f64 {
        if !triplet_reaches(cum, cum, pair, self.out) {
            return 0.0;
        }
        let x = cum;
        let outer_breaks: Vec<f64> = [
            2.0 * x.lo - pair.lo,
            2.0 * x.lo - pair.hi,
            2.0 * x.hi - pair.lo,
            2.0 * x.hi - pair.hi,
            x.lo + x.hi - pair.lo,
            x.lo + x.hi - pair.hi,
            pair.lo,
            pair.hi,
            x.lo,
            x.hi,
            0.5 * (x.lo + x.hi),
        ]
        .to_vec();
        let total = self.integrate_outer(&outer_breaks, 0.0, |f| {
            // ν = f1 + f2 ranges over (f + pair) ∩ (2·x)
            let Some((lo, hi)) = Band {
                lo: f + pair.lo,
                hi: f + pair.hi,
            }
            .intersect(2.0 * x.lo, 2.0 * x.hi) else {
                return 0.0;
            };
            let sum_breaks = [x.lo + x.hi, 2.0 * f];
            self.integrate_sum(lo, hi, &sum_breaks, f, |nu| {
                self.idler_line(f, nu, x).norm_sqr()
            })
        });
        PAIRED_IDLER_COEF * total / self.rate.powi(4)
    }

    /// Integral over the pump sum ν, panelled by how fast `(ν − 2f)²/4`
    /// sweeps through kernel lobes.
    fn integrate_sum<G>(&self, lo: f64, hi: f64, breaks: &[f64], f: f64, mut g: G) -> f64
    where
        G: FnMut(f64) -> f64,
    {
        let ctx = self.prim.context();
        let c = ctx.phase_per_product().abs();
        let lobe = ctx.structure_scale();
        let mut acc = 0.0;
        for (a, b) in segments(lo, hi, breaks, None) {
            let wa = a - 2.0 * f;
            let wb = b - 2.0 * f;
            let sweep = c * (wa * wa - wb * wb).abs() / 4.0;
            let nodes = 0.5 * self.nodes_per_lobe as f64 * sweep / lobe;
            let panels = ((nodes / self.outer.order() as f64).ceil() as usize)
                .max(self.panels)
                .min(4096);
            acc += self.outer.integrate_panels(a, b, panels, &mut g);
        }
        acc
    }

    /// `∫ μ(f1, ν − f1, f) df1` over `f1 ∈ x ∩ (ν − x)`.
    fn idler_line(&self, f: f64, nu: f64, x: Band) -> Complex64 {
        let lo = x.lo.max(nu - x.hi);
        let hi = x.hi.min(nu - x.lo);
        if hi <= lo {
            return Complex64::default();
        }
        let ctx = self.prim.context();
        let c = ctx.phase_per_product().abs();
        let lobe = ctx.structure_scale();
        let vertex = 0.5 * nu;
        let u = |f1: f64| (f1 - f) * (nu - f - f1);
        let mut acc = Complex64::default();
        let mut pieces = vec![(lo, hi)];
        if vertex > lo && vertex < hi {
            pieces = vec![(lo, vertex), (vertex, hi)];
        }
        for (a, b) in pieces {
            let sweep = c * (u(a) - u(b)).abs();
            // the phase is quadratic, so lobes crowd toward the far end
            let nodes = self.nodes_per_lobe as f64 * sweep / lobe;
            let panels = ((nodes / self.inner.order() as f64).ceil() as usize).clamp(1, 1 << 16);
            acc += self
                .inner
                .integrate_panels(a, b, panels, |f1| ctx.mu_of_product(u(f1)));
        }
        acc
    }
}

/// Geometric partition of `[a, b]` refining toward one end.
fn graded_edges(a: f64, b: f64, toward_lo: bool) -> Vec<(f64, f64)> {
    let len = b - a;
    let mut widths = Vec::new();
    let mut w = len;
    while w > GRADE_FLOOR * len {
        widths.push(w);
        w *= GRADE_RATIO;
    }
    widths.push(0.0);
    widths
        .windows(2)
        .map(|p| {
            let (far, near) = (p[0], p[1]);
            if toward_lo {
                (a + near, a + far)
            } else {
                (b - far, b - near)
            }
        })
        .collect()
}

/// Splits `[lo, hi]` at every breakpoint strictly inside it.
fn segments(lo: f64, hi: f64, breaks: &[f64], peak: Option<f64>) -> Vec<(f64, f64)> {
    let tol = 1e-9 * (hi - lo).abs().max(1.0);
    let mut pts: Vec<f64> = breaks
        .iter()
        .copied()
        .chain(peak)
        .filter(|&b| b > lo + tol && b < hi - tol)
        .collect();
    pts.push(lo);
    pts.push(hi);
    pts.sort_by(|a, b| a.partial_cmp(b).expect("finite breakpoints"));
    pts.dedup_by(|a, b| (*a - *b).abs() <= tol);
    pts.windows(2).map(|w| (w[0], w[1])).collect()
}
