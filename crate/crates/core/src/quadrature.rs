//! Integration engines: Gauss–Legendre rules (tensor and composite) and
//! randomized quasi–Monte Carlo for higher-dimensional boxes.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::digest64;
use crate::error::{Error, Result};

/// Numerical settings for table construction and the generic engine.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadratureSpec {
    /// Gauss–Legendre order of each panel of the outer integrals.
    pub gl_order: usize,
    /// Panels per smooth segment of the outer integrals.
    pub panels: usize,
    /// Gauss–Legendre nodes per kernel lobe for directly resolved
    /// oscillatory inner integrals.
    pub nodes_per_lobe: usize,
    /// Antiderivative-table cells per kernel lobe.
    pub cells_per_lobe: usize,
    /// Starting sample count of the quasi–Monte Carlo engine.
    pub qmc_samples: usize,
    /// Independent random shifts used to estimate the QMC error.
    pub qmc_replicates: usize,
    pub base_seed: u64,
    /// Relative error above which an estimate is flagged as unconverged.
    pub target_rel_tol: f64,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self {
            gl_order: 10,
            panels: 2,
            nodes_per_lobe: 6,
            cells_per_lobe: 8,
            qmc_samples: 200_000,
            qmc_replicates: 8,
            base_seed: 0x5eed,
            target_rel_tol: 1e-2,
        }
    }
}

impl QuadratureSpec {
    pub fn validate(&self) -> Result<()> {
        if self.gl_order < 8 {
            return Err(Error::InvalidArgument("gl_order must be >= 8".into()));
        }
        if self.qmc_samples < 10_000 {
            return Err(Error::InvalidArgument("qmc_samples must be >= 1e4".into()));
        }
        if self.panels == 0 || self.nodes_per_lobe < 2 || self.cells_per_lobe < 2 {
            return Err(Error::InvalidArgument("panel/lobe resolutions too small".into()));
        }
        if self.qmc_replicates < 2 {
            return Err(Error::InvalidArgument("need at least 2 QMC replicates".into()));
        }
        if !(self.target_rel_tol > 0.0) {
            return Err(Error::InvalidArgument("target_rel_tol must be positive".into()));
        }
        Ok(())
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self {
            base_seed: seed,
            ..self.clone()
        }
    }

    /// Derived seed for one integration task.
    pub fn derive_seed(&self, parts: &[i64]) -> u64 {
        let mut bytes = self.base_seed.to_le_bytes().to_vec();
        for p in parts {
            bytes.extend_from_slice(&p.to_le_bytes());
        }
        digest64(&bytes)
    }

    /// Short digest of the settings, stored in table caches.
    pub fn digest(&self) -> u64 {
        digest64(serde_json::to_vec(self).expect("serializable").as_slice())
    }
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(order: usize) -> Self {
        assert!(order >= 1);
        let n = order;
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        for i in 0..n.div_ceil(2) {
            let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre(n, x);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
        Self { nodes, weights }
    }

    pub fn order(&self) -> usize {
        self.nodes.len()
    }

    /// ∫_a^b f.
    #[inline]
    pub fn integrate<T, F>(&self, a: f64, b: f64, mut f: F) -> T
    where
        T: std::ops::Add<Output = T> + std::ops::Mul<f64, Output = T> + Default,
        F: FnMut(f64) -> T,
    {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        let mut acc = T::default();
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            acc = acc + f(mid + half * x) * (w * half);
        }
        acc
    }

    /// Composite rule with `panels` equal panels.
    pub fn integrate_panels<T, F>(&self, a: f64, b: f64, panels: usize, mut f: F) -> T
    where
        T: std::ops::Add<Output = T> + std::ops::Mul<f64, Output = T> + Default,
        F: FnMut(f64) -> T,
    {
        let h = (b - a) / panels as f64;
        let mut acc = T::default();
        for k in 0..panels {
            let lo = a + h * k as f64;
            let hi = if k + 1 == panels { b } else { lo + h };
            acc = acc + self.integrate(lo, hi, &mut f);
        }
        acc
    }
}

/// Legendre polynomial `P_n(x)` and its derivative.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// An integral value with its error estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub error: f64,
    pub converged: bool,
}

const PRIMES: [u64; 4] = [2, 3, 5, 7];

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut r = 0.0;
    while i > 0 {
        r += f * (i % base) as f64;
        i /= base;
        f *= inv;
    }
    r
}

/// Integrates `f` over the box `[lo, hi]` in 2, 3 or 4 dimensions.
///
/// Two dimensions use a tensor Gauss–Legendre rule of order `gl_order`,
/// checked against order `2·gl_order`. Three and four dimensions use a
/// Halton sequence with independent Cranley–Patterson shifts; the sample
/// count is doubled (up to 64×) until the replicate standard error meets
/// `target_rel_tol`. Unconverged results are returned with
/// `converged = false`.
pub fn integrate<F>(lo: &[f64], hi: &[f64], spec: &QuadratureSpec, f: F) -> Result<Estimate>
where
    F: Fn(&[f64]) -> f64,
{
    let dim = lo.len();
    if hi.len() != dim {
        return Err(Error::Dimension {
            expected: dim,
            got: hi.len(),
        });
    }
    if !(2..=4).contains(&dim) {
        return Err(Error::InvalidArgument(format!(
            "integrate supports 2..=4 dimensions, got {dim}"
        )));
    }
    if lo.iter().chain(hi).any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("integration box must be finite".into()));
    }
    spec.validate()?;

    if dim == 2 {
        let tensor = |order: usize| {
            let gl = GaussLegendre::new(order);
            gl.integrate(lo[0], hi[0], |x| {
                gl.integrate(lo[1], hi[1], |y| f(&[x, y]))
            })
        };
        let coarse = tensor(spec.gl_order);
        let fine = tensor(2 * spec.gl_order);
        let error = (fine - coarse).abs();
        return Ok(Estimate {
            value: fine,
            error,
            converged: error <= spec.target_rel_tol * fine.abs() || error == 0.0,
        });
    }

    let volume: f64 = lo.iter().zip(hi).map(|(a, b)| b - a).product();
    let reps = spec.qmc_replicates;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.derive_seed(&[dim as i64, 0x51]));
    let shifts: Vec<Vec<f64>> = (0..reps)
        .map(|_| (0..dim).map(|_| rng.gen::<f64>()).collect())
        .collect();
    let mut n = spec.qmc_samples;
    let mut point = vec![0.0; dim];
    loop {
        let mut means = Vec::with_capacity(reps);
        for shift in &shifts {
            let mut acc = 0.0;
            for i in 1..=n as u64 {
                for d in 0..dim {
                    let u = (radical_inverse(i, PRIMES[d]) + shift[d]).fract();
                    point[d] = lo[d] + u * (hi[d] - lo[d]);
                }
                acc += f(&point);
            }
            means.push(volume * acc / n as f64);
        }
        let mean = means.iter().sum::<f64>() / reps as f64;
        let var = means.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / (reps - 1) as f64;
        let error = (var / reps as f64).sqrt();
        let converged = error <= spec.target_rel_tol * mean.abs() || error == 0.0;
        if converged || n >= 64 * spec.qmc_samples {
            return Ok(Estimate {
                value: mean,
                error,
                converged,
            });
        }
        n *= 2;
    }
}
