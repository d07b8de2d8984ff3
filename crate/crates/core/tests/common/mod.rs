//! Shared fixtures and the plain Monte Carlo oracle.
#![allow(dead_code)]

use egnopt::{KernelContext, SystemConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Reference fiber shortened to `spans` spans on a Nyquist grid.
pub fn toy_config(channels: usize, spans: u32) -> SystemConfig {
    let mut cfg = SystemConfig::reference().with_channels(channels);
    cfg.fiber.num_spans = spans;
    cfg.grid.delta_f = cfg.grid.symbol_rate;
    cfg
}

/// Monte Carlo mean and its standard error.
#[derive(Debug, Clone, Copy, Default)]
pub struct McValue {
    pub mean: f64,
    pub sigma: f64,
}

impl McValue {
    fn scaled(self, a: f64) -> Self {
        Self {
            mean: a * self.mean,
            sigma: a.abs() * self.sigma,
        }
    }

    pub fn add(self, w: f64, o: McValue) -> Self {
        Self {
            mean: self.mean + w * o.mean,
            sigma: (self.sigma.powi(2) + (w * o.sigma).powi(2)).sqrt(),
        }
    }

    /// `|x − mean| ≤ max(rel·|mean|, k·σ)`.
    pub fn accepts(&self, x: f64, rel: f64, k: f64) -> bool {
        (x - self.mean).abs() <= (rel * self.mean.abs()).max(k * self.sigma)
    }
}

#[derive(Debug, Clone, Copy)]
struct Interval {
    lo: f64,
    hi: f64,
}

impl Interval {
    fn width(self) -> f64 {
        self.hi - self.lo
    }

    fn contains(self, x: f64) -> bool {
        x >= self.lo && x <= self.hi
    }

    fn draw(self, rng: &mut ChaCha8Rng) -> f64 {
        self.lo + self.width() * rng.gen::<f64>()
    }
}

fn estimate<F>(samples: usize, seed: u64, volume: f64, mut draw: F) -> McValue
where
    F: FnMut(&mut ChaCha8Rng) -> f64,
{
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut s1, mut s2) = (0.0, 0.0);
    for _ in 0..samples {
        let v = draw(&mut rng);
        s1 += v;
        s2 += v * v;
    }
    let n = samples as f64;
    let mean = s1 / n;
    let var = (s2 / n - mean * mean).max(0.0);
    McValue {
        mean: volume * mean,
        sigma: volume * (var / (n - 1.0)).sqrt(),
    }
}

/// Unweighted Monte Carlo estimates of the table entries between the COI
/// (channel 1) and the interferer at channel `1 + offset`, straight from
/// the multidimensional integrals with rectangular spectra and indicator
/// functions.
pub struct MonteCarloOracle {
    ctx: KernelContext,
    rate: f64,
    coi: Interval,
    int: Interval,
    out: Interval,
    samples: usize,
    seed: u64,
}

/// Oracle estimates of one SCI and one XCI entry set.
#[derive(Debug, Clone, Copy)]
pub struct OracleEntries {
    pub d1: McValue,
    pub d2: McValue,
    pub d3: McValue,
    pub d4: McValue,
}

impl MonteCarloOracle {
    pub fn new(cfg: &SystemConfig, offset: usize, samples: usize, seed: u64) -> Self {
        let r = cfg.grid.symbol_rate;
        let centre = offset as f64 * cfg.grid.delta_f;
        Self {
            ctx: KernelContext::new(&cfg.fiber),
            rate: r,
            coi: Interval { lo: -r / 2.0, hi: r / 2.0 },
            int: Interval { lo: centre - r / 2.0, hi: centre + r / 2.0 },
            out: Interval { lo: -r / 2.0, hi: r / 2.0 },
            samples,
            seed,
        }
    }

    /// Coefficients of `P_c³, P_c·P_i², P_c²·P_i, P_i³` in the GN main
    /// term. Pumps are drawn over the union of both bands, so the
    /// multiplicity of each power monomial comes out of the sampling.
    fn main_polynomial(&self) -> [McValue; 4] {
        let (coi, int, out) = (self.coi, self.int, self.out);
        let union_width = coi.width() + int.width();
        let volume = out.width() * union_width * union_width;
        let pick = |rng: &mut ChaCha8Rng| {
            if rng.gen::<f64>() < coi.width() / union_width {
                (coi.draw(rng), false)
            } else {
                (int.draw(rng), true)
            }
        };
        let scale = 16.0 / 27.0 / self.rate.powi(3);
        let mut out_vals = [McValue::default(); 4];
        for (slot, target) in [(0usize, 0u32), (1, 2), (2, 1), (3, 3)] {
            let v = estimate(self.samples, self.seed ^ (slot as u64 + 1), volume, |rng| {
                let f = out.draw(rng);
                let (f1, i1) = pick(rng);
                let (f2, i2) = pick(rng);
                let f3 = f1 + f2 - f;
                let i3 = if coi.contains(f3) {
                    false
                } else if int.contains(f3) {
                    true
                } else {
                    return 0.0;
                };
                if i1 as u32 + i2 as u32 + i3 as u32 != target {
                    return 0.0;
                }
                self.ctx.mu(f1, f2, f).norm_sqr()
            });
            out_vals[slot] = v.scaled(scale);
        }
        out_vals
    }

    /// Fourth-moment term with the pump `f1` paired inside `pair`.
    fn paired_pump(&self, pair: Interval, cum: Interval, tag: u64) -> McValue {
        let out = self.out;
        let volume = out.width() * pair.width() * cum.width() * cum.width();
        estimate(self.samples, self.seed ^ (0x100 + tag), volume, |rng| {
            let f = out.draw(rng);
            let f1 = pair.draw(rng);
            let f2 = cum.draw(rng);
            let g2 = cum.draw(rng);
            if !cum.contains(f1 + f2 - f) || !cum.contains(f1 + g2 - f) {
                return 0.0;
            }
            (self.ctx.mu(f1, f2, f) * self.ctx.mu(f1, g2, f).conj()).re
        })
        .scaled(80.0 / 81.0 / self.rate.powi(4))
    }

    /// Fourth-moment term with the idler paired inside `pair`.
    fn paired_idler(&self, pair: Interval, cum: Interval, tag: u64) -> McValue {
        let out = self.out;
        let volume = out.width() * cum.width().powi(3);
        estimate(self.samples, self.seed ^ (0x200 + tag), volume, |rng| {
            let f = out.draw(rng);
            let f1 = cum.draw(rng);
            let f2 = cum.draw(rng);
            let g2 = cum.draw(rng);
            let g1 = f1 + f2 - g2;
            if !pair.contains(f1 + f2 - f) || !cum.contains(g1) {
                return 0.0;
            }
            (self.ctx.mu(f1, f2, f) * self.ctx.mu(g1, g2, f).conj()).re
        })
        .scaled(16.0 / 81.0 / self.rate.powi(4))
    }

    /// Sixth-moment term, every factor inside `band`.
    fn sixth(&self, band: Interval, tag: u64) -> McValue {
        let out = self.out;
        let volume = out.width() * band.width().powi(4);
        estimate(self.samples, self.seed ^ (0x300 + tag), volume, |rng| {
            let f = out.draw(rng);
            let (f1, f2, g1, g2) = (band.draw(rng), band.draw(rng), band.draw(rng), band.draw(rng));
            if !band.contains(f1 + f2 - f) || !band.contains(g1 + g2 - f) {
                return 0.0;
            }
            (self.ctx.mu(f1, f2, f) * self.ctx.mu(g1, g2, f).conj()).re
        })
        .scaled(16.0 / 81.0 / self.rate.powi(5))
    }

    /// Entries for moments `(Φ, Ψ)` shared by both channels.
    pub fn entries(&self, phi: f64, psi: f64) -> OracleEntries {
        let (c, i) = (self.coi, self.int);
        let [m_ccc, m_cii, m_cci, m_iii] = self.main_polynomial();
        let d1 = m_ccc
            .add(phi, self.paired_pump(c, c, 0))
            .add(phi, self.paired_idler(c, c, 0))
            .add(psi, self.sixth(c, 0));
        let d2 = m_cii
            .add(phi, self.paired_pump(c, i, 1))
            .add(phi, self.paired_idler(c, i, 1));
        let d3 = m_cci
            .add(phi, self.paired_pump(i, c, 2))
            .add(phi, self.paired_idler(i, c, 2));
        let d4 = m_iii
            .add(phi, self.paired_pump(i, i, 3))
            .add(phi, self.paired_idler(i, i, 3))
            .add(psi, self.sixth(i, 3));
        OracleEntries { d1, d2, d3, d4 }
    }
}

/// Direct per-span sum: `γ Σ_k e^{jkφL} ∫_0^L e^{(−2α + jφ)z} dz`.
pub fn coherent_span_sum(cfg: &SystemConfig, f1: f64, f2: f64, f: f64) -> num_complex::Complex64 {
    use num_complex::Complex64;
    let fb = &cfg.fiber;
    let phi = 4.0 * std::f64::consts::PI.powi(2) * fb.beta2 * (f1 - f) * (f2 - f);
    let a = Complex64::new(-2.0 * fb.alpha_field, phi);
    let one_span = ((a * fb.span_length).exp() - 1.0) / a;
    let mut sum = Complex64::new(0.0, 0.0);
    for k in 0..fb.num_spans {
        sum += Complex64::from_polar(1.0, phi * fb.span_length * k as f64);
    }
    fb.gamma * one_span * sum
}
