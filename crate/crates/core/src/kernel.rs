//! Multi-span four-wave-mixing link kernel μ(f1, f2, f).
//!
//! For lumped amplification and `Ns` identical spans the kernel depends on
//! the frequencies only through the product `u = (f1 − f)(f2 − f)`:
//!
//! ```text
//! μ = γ · (1 − e^{−2αL} e^{jφL}) / (2α − jφ) · PA(φL/2) ,  φ = 4π²β2·u
//! PA(x) = e^{jx(Ns−1)} · sin(Ns·x)/sin(x) = Σ_{k<Ns} e^{j2kx}
//! ```

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::config::FiberParams;

/// Width of the window around multiples of π where `PA` takes its limit.
pub const SINGULARITY_GUARD: f64 = 1e-9;

/// Immutable per-fiber constants used by every kernel evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelContext {
    pub two_alpha: f64,
    pub four_pi2_beta2: f64,
    pub gamma: f64,
    pub span_length: f64,
    pub num_spans: u32,
    /// `exp(-2αL)`.
    pub span_transmission: f64,
}

impl KernelContext {
    pub fn new(fiber: &FiberParams) -> Self {
        Self {
            two_alpha: 2.0 * fiber.alpha_field,
            four_pi2_beta2: 4.0 * PI * PI * fiber.beta2,
            gamma: fiber.gamma,
            span_length: fiber.span_length,
            num_spans: fiber.num_spans,
            span_transmission: fiber.span_transmission(),
        }
    }

    /// Phased-array argument per unit of `u`: `x = 2π²β2·L·u`.
    pub fn phase_per_product(&self) -> f64 {
        0.5 * self.four_pi2_beta2 * self.span_length
    }

    /// Kernel as a function of the frequency product `u = (f1−f)(f2−f)`.
    #[inline]
    pub fn mu_of_product(&self, u: f64) -> Complex64 {
        let phi = self.four_pi2_beta2 * u;
        let phi_l = phi * self.span_length;
        let numer = Complex64::new(1.0, 0.0) - Complex64::from_polar(self.span_transmission, phi_l);
        let denom = Complex64::new(self.two_alpha, -phi);
        self.gamma * numer / denom * phased_array(0.5 * phi_l, self.num_spans)
    }

    /// `μ(f1, f2, f)`.
    #[inline]
    pub fn mu(&self, f1: f64, f2: f64, f: f64) -> Complex64 {
        self.mu_of_product((f1 - f) * (f2 - f))
    }

    /// Peak value `γ·Ns·(1 − e^{−2αL})/(2α)` at phase matching.
    pub fn phase_matched(&self) -> f64 {
        self.gamma * self.num_spans as f64 * (1.0 - self.span_transmission) / self.two_alpha
    }

    /// Scale (in `x`) of the finest structure of |μ|: the phased-array
    /// lobe width, or the single-span oscillation period.
    pub fn structure_scale(&self) -> f64 {
        PI / (self.num_spans.max(1) as f64).max(2.0)
    }
}

/// Reduces `x` to `r = x − kπ` with `|r| ≤ π/2`.
#[inline]
fn reduce(x: f64) -> f64 {
    x - PI * (x / PI).round()
}

/// `e^{jx(Ns−1)}·sin(Ns·x)/sin(x)`, i.e. the coherent sum of `Ns` span
/// contributions. Periodic in `x` with period π.
#[inline]
pub fn phased_array(x: f64, num_spans: u32) -> Complex64 {
    if num_spans == 1 {
        return Complex64::new(1.0, 0.0);
    }
    let r = reduce(x);
    let ns = num_spans as f64;
    let magnitude = if r.abs() < SINGULARITY_GUARD {
        ns
    } else {
        (ns * r).sin() / r.sin()
    };
    Complex64::from_polar(magnitude, r * (ns - 1.0))
}

/// `|sin(Ns·x)/sin(x)|²` with the limit `Ns²` at multiples of π.
pub fn phased_array_power(x: f64, num_spans: u32) -> f64 {
    let ns = num_spans as f64;
    let r = reduce(x);
    if r.abs() < SINGULARITY_GUARD {
        return ns * ns;
    }
    let ratio = (ns * r).sin() / r.sin();
    ratio * ratio
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::SystemConfig;

    #[test]
    fn phased_array_limits() {
        assert_eq!(phased_array_power(0.0, 7), 49.0);
        assert_eq!(phased_array_power(3.0 * PI, 7), 49.0);
        for x in [0.1, 1.3, 2.7, 100.0] {
            assert!((phased_array_power(x, 1) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn phased_array_matches_geometric_sum() {
        let x = 0.3;
        let sum: Complex64 = (0..5).map(|k| Complex64::from_polar(1.0, 2.0 * k as f64 * x)).sum();
        let pa = phased_array(x, 5);
        assert!((pa - sum).norm() / sum.norm() < 1e-12);
        assert!((phased_array_power(x, 5) - sum.norm_sqr()).abs() / sum.norm_sqr() < 1e-12);
    }

    #[test]
    fn phase_matched_value_is_real() {
        let ctx = KernelContext::new(&SystemConfig::reference().fiber);
        let m = ctx.mu(193e12, 193.1e12, 193e12);
        assert!(m.im.abs() < 1e-15 * m.re.abs());
        assert!((m.re - ctx.phase_matched()).abs() / m.re < 1e-14);
    }

    #[test]
    fn guard_continuity() {
        let ctx = KernelContext::new(&SystemConfig::reference().fiber);
        let c = ctx.phase_per_product();
        let at_guard = ctx.mu_of_product(1.0001 * SINGULARITY_GUARD / c).norm();
        let at_zero = ctx.mu_of_product(0.0).norm();
        assert!((at_guard - at_zero).abs() / at_zero < 1e-6);
        let k = 17.0 * PI;
        let near = ctx.mu_of_product((k + 1.0001 * SINGULARITY_GUARD) / c).norm();
        let limit = ctx.mu_of_product(k / c).norm();
        assert!((near - limit).abs() / limit < 1e-6);
    }
}

#[cfg(test)]
mod props {
    use super::*;
    use crate::config::SystemConfig;
    use proptest::prelude::*;

    proptest! {
        // integer-Hz frequencies keep the differences exact
        #[test]
        fn pump_swap_shift_and_reflection(
            f1 in -300_000_000_000i64..300_000_000_000,
            f2 in -300_000_000_000i64..300_000_000_000,
            f in -30_000_000_000i64..30_000_000_000,
            d in -2_000_000_000_000i64..2_000_000_000_000,
        ) {
            let ctx = KernelContext::new(&SystemConfig::reference().fiber);
            let (a, b, c, s) = (f1 as f64, f2 as f64, f as f64, d as f64);
            let m = ctx.mu(a, b, c);
            prop_assert_eq!(m, ctx.mu(b, a, c));
            prop_assert_eq!(m, ctx.mu(a + s, b + s, c + s));
            prop_assert_eq!(m, ctx.mu(-a, -b, -c));
        }
    }
}
