//! Limiting transport objects: energy-shell quadrature, the Born collision
//! kernel `Σ₂`, and the pairings `⟨L₀(t)a, b⟩`, `⟨L₂(t)a, b⟩`.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{BoltzError, Result};
use crate::numerics::{gauss_legendre, NeumaierSum};
use crate::phasespace::{free_evolve_symbol, hs_pairing};
use crate::symbolcalc::{ComplexGaussian, GaussianPotential, GaussianProduct, SymbolPair};
use crate::theta::{potential_squared, shell_double_integral};

/// Nodes and weights on the unit sphere `S^{d−1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct ShellQuadrature {
    d: usize,
    nodes: Vec<Vec<f64>>,
    weights: Vec<f64>,
}

impl ShellQuadrature {
    /// `n` equally spaced angles on the circle; exact for trigonometric
    /// polynomials of degree below `n`.
    pub fn circle(n: usize) -> Result<Self> {
        if n < 3 {
            return Err(BoltzError::InvalidArgument(format!(
                "circle rule needs at least 3 nodes, got {n}"
            )));
        }
        let w = 2.0 * PI / n as f64;
        let nodes = (0..n)
            .map(|k| {
                let (s, c) = (2.0 * PI * k as f64 / n as f64).sin_cos();
                vec![c, s]
            })
            .collect();
        Ok(Self {
            d: 2,
            nodes,
            weights: vec![w; n],
        })
    }

    /// The 26-point octahedral rule on `S²` (degree 7).
    pub fn lebedev26() -> Self {
        let mut nodes = Vec::with_capacity(26);
        let mut weights = Vec::with_capacity(26);
        let scale = 4.0 * PI;
        for axis in 0..3 {
            for s in [-1.0, 1.0] {
                let mut p = vec![0.0; 3];
                p[axis] = s;
                nodes.push(p);
                weights.push(scale / 21.0);
            }
        }
        let h = 1.0 / 2f64.sqrt();
        for (i, j) in [(0, 1), (0, 2), (1, 2)] {
            for si in [-h, h] {
                for sj in [-h, h] {
                    let mut p = vec![0.0; 3];
                    p[i] = si;
                    p[j] = sj;
                    nodes.push(p);
                    weights.push(scale * 4.0 / 105.0);
                }
            }
        }
        let c = 1.0 / 3f64.sqrt();
        for sx in [-c, c] {
            for sy in [-c, c] {
                for sz in [-c, c] {
                    nodes.push(vec![sx, sy, sz]);
                    weights.push(scale * 9.0 / 280.0);
                }
            }
        }
        Self { d: 3, nodes, weights }
    }

    /// Gauss-Legendre in `cos θ` times `2n` uniform azimuths on `S²`;
    /// exact for spherical harmonics of degree below `2n`.
    pub fn product(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(BoltzError::InvalidArgument(format!(
                "product rule needs at least 2 polar nodes, got {n}"
            )));
        }
        let gl = gauss_legendre(n);
        let naz = 2 * n;
        let mut nodes = Vec::with_capacity(n * naz);
        let mut weights = Vec::with_capacity(n * naz);
        for (ct, wt) in gl.nodes.iter().zip(&gl.weights) {
            let st = (1.0 - ct * ct).max(0.0).sqrt();
            for k in 0..naz {
                let (s, c) = (2.0 * PI * (k as f64 + 0.5) / naz as f64).sin_cos();
                nodes.push(vec![st * c, st * s, *ct]);
                weights.push(wt * 2.0 * PI / naz as f64);
            }
        }
        Ok(Self { d: 3, nodes, weights })
    }

    /// Default rule: 64 angles for `d = 2`, a 16 × 32 product rule for `d = 3`.
    pub fn default_for(d: usize) -> Result<Self> {
        match d {
            2 => Self::circle(64),
            3 => Self::product(16),
            _ => Err(BoltzError::InvalidArgument(format!(
                "shell quadrature is available for d = 2, 3, got {d}"
            ))),
        }
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn nodes(&self) -> &[Vec<f64>] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// `Σ wᵢ g(ωᵢ)`.
    pub fn integrate<F>(&self, mut g: F) -> Complex64
    where
        F: FnMut(&[f64]) -> Complex64,
    {
        let mut acc = NeumaierSum::new();
        for (p, w) in self.nodes.iter().zip(&self.weights) {
            acc.add(g(p) * *w);
        }
        acc.value()
    }
}

/// `∫ g(y₁) δ(‖y₁‖² − ‖y‖²) dy₁ = ½‖y‖^{d−2} ∫_{S^{d−1}} g(‖y‖ω) dω`.
pub fn shell_integral<F>(quad: &ShellQuadrature, mut g: F, y: &[f64]) -> Result<Complex64>
where
    F: FnMut(&[f64]) -> Complex64,
{
    if y.len() != quad.d {
        return Err(BoltzError::Dimension {
            expected: quad.d,
            found: y.len(),
        });
    }
    let rho = y.iter().map(|v| v * v).sum::<f64>().sqrt();
    if rho == 0.0 {
        // measure-zero shell; the d = 2 density ½ is not meaningful here
        return Ok(Complex64::new(0.0, 0.0));
    }
    let mut point = vec![0.0; quad.d];
    let total = quad.integrate(|w| {
        for (p, wi) in point.iter_mut().zip(w) {
            *p = rho * wi;
        }
        g(&point)
    });
    Ok(total * (0.5 * rho.powi(quad.d as i32 - 2)))
}

/// Smoothed-δ Monte Carlo estimate of `∫ g(y₁) δ(‖y₁‖² − ‖y‖²) dy₁`.
///
/// `δ` is replaced by a centred normal density of width `width` in
/// `u = ‖y₁‖²`; `u` and the direction are sampled independently, with the
/// direction used together with its antipode. Returns the mean and its
/// standard error.
pub fn shell_integral_mc<F>(g: F, y: &[f64], width: f64, samples: usize, seed: u64) -> Result<(Complex64, f64)>
where
    F: Fn(&[f64]) -> Complex64 + Sync,
{
    let d = y.len();
    if !(2..=3).contains(&d) || !(width > 0.0) || samples == 0 {
        return Err(BoltzError::InvalidArgument(format!(
            "Monte Carlo shell integral needs d ∈ {{2, 3}}, positive width and samples, got d = {d}"
        )));
    }
    let rho2: f64 = y.iter().map(|v| v * v).sum();
    let area = if d == 2 { 2.0 * PI } else { 4.0 * PI };
    const CHUNK: usize = 1 << 14;
    let chunks = samples.div_ceil(CHUNK);
    let parts: Vec<(NeumaierSum, f64, usize)> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(c as u64);
            let n = CHUNK.min(samples - c * CHUNK);
            let mut acc = NeumaierSum::new();
            let mut sq = 0.0;
            let mut p = vec![0.0; d];
            let mut q = vec![0.0; d];
            for _ in 0..n {
                let (z1, z2): (f64, f64) = (rng.random(), rng.random());
                let t = width * (-2.0 * (1.0 - z1).ln()).sqrt() * (2.0 * PI * z2).cos();
                let u = rho2 + t;
                if u <= 0.0 {
                    acc.add(Complex64::new(0.0, 0.0));
                    continue;
                }
                let s = u.sqrt();
                // uniform direction
                let omega: Vec<f64> = if d == 2 {
                    let a = 2.0 * PI * rng.random::<f64>();
                    vec![a.cos(), a.sin()]
                } else {
                    let zc = 2.0 * rng.random::<f64>() - 1.0;
                    let a = 2.0 * PI * rng.random::<f64>();
                    let st = (1.0 - zc * zc).sqrt();
                    vec![st * a.cos(), st * a.sin(), zc]
                };
                for i in 0..d {
                    p[i] = s * omega[i];
                    q[i] = -s * omega[i];
                }
                let val = (g(&p) + g(&q)) * (0.25 * area * s.powi(d as i32 - 2));
                acc.add(val);
                sq += val.norm_sqr();
            }
            (acc, sq, n)
        })
        .collect();
    let mut acc = NeumaierSum::new();
    let mut sq = 0.0;
    let mut n = 0usize;
    for (a, s2, k) in parts {
        acc.merge(&a);
        sq += s2;
        n += k;
    }
    let mean = acc.value() / n as f64;
    let var = (sq / n as f64 - mean.norm_sqr()).max(0.0);
    Ok((mean, (var / n as f64).sqrt()))
}

/// Born collision density `8π² |Ŵ(y − y')|²` for `y, y'` on a common
/// energy shell.
pub fn sigma2_density(y: &[f64], y_prime: &[f64], potential: &GaussianPotential) -> Result<f64> {
    if y.len() != y_prime.len() {
        return Err(BoltzError::Dimension {
            expected: y.len(),
            found: y_prime.len(),
        });
    }
    let n1 = y.iter().map(|v| v * v).sum::<f64>().sqrt();
    let n2 = y_prime.iter().map(|v| v * v).sum::<f64>().sqrt();
    if (n1 - n2).abs() > 1e-9 * n1.max(1.0) {
        return Err(BoltzError::InvalidArgument(format!(
            "momenta are off the energy shell: |y| = {n1}, |y'| = {n2}"
        )));
    }
    let diff: Vec<f64> = y.iter().zip(y_prime).map(|(a, b)| a - b).collect();
    let w = potential.fourier(1.0, &diff);
    Ok(8.0 * PI * PI * w * w)
}

/// `⟨L₀(t)a, b⟩` in closed form.
pub fn l0_pairing(t: f64, pair: &SymbolPair) -> Result<Complex64> {
    hs_pairing(&free_evolve_symbol(&pair.a, t)?, &pair.b)
}

/// Gain and loss parts of `⟨L₂(t)a, b⟩ = gain − loss`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CollisionPairing {
    pub gain: Complex64,
    pub loss: Complex64,
}

impl CollisionPairing {
    pub fn value(&self) -> Complex64 {
        self.gain - self.loss
    }
}

/// Default Gauss-Legendre order for the `s`-integral of the gain term.
pub const GAIN_TIME_ORDER: usize = 24;

/// `(y', y) ↦ |Ŵ(y − y')|² ∫ a(x − c(y', y), ·) conj(b(x, y)) dx` with
/// `c = s y + (t − s) y'` and `a` taken at momentum `y'` (gain) or
/// `c = t y` and `a` at `y` (loss).
fn collision_integrand(pair: &SymbolPair, w2: &ComplexGaussian, t: f64, s: Option<f64>) -> Result<ComplexGaussian> {
    let d = pair.d;
    let k = 3 * d;
    let (x, yp, y) = (0, d, 2 * d);
    let mut prod = GaussianProduct::new(k);
    let mut pa = vec![0.0; 2 * d * k];
    let mut pb = vec![0.0; 2 * d * k];
    let mut pw = vec![0.0; d * k];
    for i in 0..d {
        pa[i * k + x + i] = 1.0;
        match s {
            Some(s) => {
                pa[i * k + y + i] = -s;
                pa[i * k + yp + i] = -(t - s);
                pa[(d + i) * k + yp + i] = 1.0;
            }
            None => {
                pa[i * k + y + i] = -t;
                pa[(d + i) * k + y + i] = 1.0;
            }
        }
        pb[i * k + x + i] = 1.0;
        pb[(d + i) * k + y + i] = 1.0;
        pw[i * k + y + i] = 1.0;
        pw[i * k + yp + i] = -1.0;
    }
    prod.factor(&pair.a, &pa, &vec![0.0; 2 * d])?;
    prod.factor(&pair.b.conj(), &pb, &vec![0.0; 2 * d])?;
    prod.factor(w2, &pw, &vec![0.0; d])?;
    let xs: Vec<usize> = (0..d).collect();
    prod.finish()?.marginal(&xs)
}

/// `⟨L₂(t)a, b⟩` with
/// `L₂(t)a(x,y) = ∫_0^t ∫ Σ₂(y,y')[a(x − sy − (t−s)y', y') − a(x − ty, y)] dy' ds`.
/// The `x`-integral is closed form, the shell pair by [`shell_double_integral`]
/// and the gain `s`-integral by Gauss-Legendre of order `time_order`.
pub fn l2_pairing(
    t: f64,
    pair: &SymbolPair,
    potential: &GaussianPotential,
    quad: &ShellQuadrature,
    time_order: usize,
) -> Result<CollisionPairing> {
    if !(t > 0.0) {
        return Err(BoltzError::InvalidArgument(format!("t must be positive, got {t}")));
    }
    if quad.d() != pair.d {
        return Err(BoltzError::Dimension {
            expected: pair.d,
            found: quad.d(),
        });
    }
    let zero = Complex64::new(0.0, 0.0);
    if potential.amplitude == 0.0 {
        return Ok(CollisionPairing { gain: zero, loss: zero });
    }
    let w2 = potential_squared(potential, pair.d)?;
    let c = 8.0 * PI * PI;
    let rule = gauss_legendre(time_order).mapped(0.0, t);
    let gains: Vec<Result<Complex64>> = rule
        .nodes
        .par_iter()
        .zip(rule.weights.par_iter())
        .map(|(&s, &w)| Ok(shell_double_integral(&[collision_integrand(pair, &w2, t, Some(s))?], quad)? * w))
        .collect();
    let mut gain = NeumaierSum::new();
    for g in gains {
        gain.add(g?);
    }
    let loss = shell_double_integral(&[collision_integrand(pair, &w2, t, None)?], quad)? * t;
    Ok(CollisionPairing {
        gain: gain.value() * c,
        loss: loss * c,
    })
}
