//! Boltzmann-Grad rescaling, free transport of symbols, the `L²` pairing
//! of symbols and wavepacket symbols.

use num_complex::Complex64;

use crate::error::{BoltzError, Result};
use crate::symbolcalc::{Block, ComplexGaussian, GaussianProduct, SymbolPair};

/// Scaling parameters `(d, r, h, λ, t)` with `h = r`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalingParams {
    pub d: usize,
    pub r: f64,
    pub h: f64,
    pub lambda: f64,
    pub t: f64,
}

impl ScalingParams {
    pub fn new(d: usize, r: f64, lambda: f64, t: f64) -> Result<Self> {
        if d < 2 {
            return Err(BoltzError::InvalidArgument(format!(
                "dimension must be at least 2, got {d}"
            )));
        }
        if !(r > 0.0 && r <= 1.0) {
            return Err(BoltzError::InvalidArgument(format!(
                "scattering radius must lie in (0, 1], got {r}"
            )));
        }
        if !(t > 0.0) || !t.is_finite() {
            return Err(BoltzError::InvalidArgument(format!(
                "time must be positive, got {t}"
            )));
        }
        if !lambda.is_finite() {
            return Err(BoltzError::InvalidArgument("coupling must be finite".into()));
        }
        Ok(Self {
            d,
            r,
            h: r,
            lambda,
            t,
        })
    }

    /// Same parameters with a different coupling.
    pub fn with_lambda(&self, lambda: f64) -> Self {
        Self { lambda, ..*self }
    }

    /// `λ' = λ / h²`, the coupling seen by the unscaled propagator.
    pub fn lambda_prime(&self) -> f64 {
        self.lambda / (self.h * self.h)
    }

    /// `r^{d−1}`.
    pub fn r_dm1(&self) -> f64 {
        self.r.powi(self.d as i32 - 1)
    }

    /// Side of the time box, `t·h·r^{1−d}`.
    pub fn time_box(&self) -> f64 {
        self.t * self.h / self.r_dm1()
    }
}

fn check_phase_space(a: &ComplexGaussian, d: usize) -> Result<()> {
    if a.dim() != 2 * d {
        return Err(BoltzError::Dimension {
            expected: 2 * d,
            found: a.dim(),
        });
    }
    Ok(())
}

/// `D_{r,h}a(x,y) = r^{d(d−1)/2} h^{d/2} a(r^{d−1}x, hy)`.
pub fn bg_rescale(a: &ComplexGaussian, params: &ScalingParams) -> Result<ComplexGaussian> {
    let d = params.d;
    check_phase_space(a, d)?;
    let n = 2 * d;
    let mut p = vec![0.0; n * n];
    for i in 0..d {
        p[i * n + i] = params.r_dm1();
        p[(d + i) * n + d + i] = params.h;
    }
    let amp = params.r.powf((d * (d - 1)) as f64 / 2.0) * params.h.powf(d as f64 / 2.0);
    Ok(a.pullback(&p, n)?.scaled(Complex64::new(amp, 0.0)))
}

/// `L₀(t)a(x,y) = a(x − ty, y)`.
pub fn free_evolve_symbol(a: &ComplexGaussian, t: f64) -> Result<ComplexGaussian> {
    if a.dim() % 2 != 0 {
        return Err(BoltzError::InvalidArgument(
            "phase-space symbol needs an even dimension".into(),
        ));
    }
    let d = a.dim() / 2;
    let n = 2 * d;
    let mut p = vec![0.0; n * n];
    for i in 0..n {
        p[i * n + i] = 1.0;
    }
    for i in 0..d {
        p[i * n + d + i] = -t;
    }
    a.pullback(&p, n)
}

/// `⟨a, b⟩ = ∫ a · conj(b)`.
pub fn hs_pairing(a: &ComplexGaussian, b: &ComplexGaussian) -> Result<Complex64> {
    Ok(a.product(&b.conj())?.integral())
}

/// Partial Fourier transforms `ã = 𝓕ₓ[L₀(t)a]` and `b̃ = 𝓕ₓ[conj b]`, both
/// as Gaussians in `(η, y)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PairTransforms {
    pub a_tilde: ComplexGaussian,
    pub b_tilde: ComplexGaussian,
    pub d: usize,
}

impl PairTransforms {
    pub fn new(pair: &SymbolPair, t: f64) -> Result<Self> {
        let a_tilde = free_evolve_symbol(&pair.a, t)?.partial_fourier(Block::First)?;
        let b_tilde = pair.b.conj().partial_fourier(Block::First)?;
        Ok(Self {
            a_tilde,
            b_tilde,
            d: pair.d,
        })
    }
}

/// Wavepacket data: envelope `φ` (unit `L²` norm), launch momentum `p`
/// and momentum weight `w`.
#[derive(Debug, Clone, PartialEq)]
pub struct WavepacketSpec {
    envelope: ComplexGaussian,
    momentum: Vec<f64>,
    weight: ComplexGaussian,
}

impl WavepacketSpec {
    pub fn new(envelope: ComplexGaussian, momentum: Vec<f64>, weight: ComplexGaussian) -> Result<Self> {
        let d = envelope.dim();
        if weight.dim() != d || momentum.len() != d {
            return Err(BoltzError::Dimension {
                expected: d,
                found: weight.dim(),
            });
        }
        let norm = envelope.norm_sq();
        if (norm - 1.0).abs() > 1e-12 {
            return Err(BoltzError::InvalidArgument(format!(
                "envelope must have unit L2 norm, has {norm:.15}"
            )));
        }
        Ok(Self {
            envelope,
            momentum,
            weight,
        })
    }

    /// `φ(x) = 2^{d/4} exp(−π‖x‖²/σ²) / σ^{d/2}` and a Gaussian momentum
    /// window of width `window` centred at `p`.
    pub fn gaussian(d: usize, sigma: f64, p: Vec<f64>, window: f64) -> Result<Self> {
        let amp = 2f64.powf(d as f64 / 4.0) / sigma.powf(d as f64 / 2.0);
        let zero = vec![Complex64::new(0.0, 0.0); d];
        let envelope = ComplexGaussian::diagonal(Complex64::new(amp, 0.0), &vec![sigma; d], zero.clone())?;
        let weight = ComplexGaussian::diagonal(Complex64::new(1.0, 0.0), &vec![window; d], zero)?.shifted(&p);
        Self::new(envelope, p, weight)
    }

    pub fn dim(&self) -> usize {
        self.envelope.dim()
    }

    pub fn envelope(&self) -> &ComplexGaussian {
        &self.envelope
    }

    pub fn weight(&self) -> &ComplexGaussian {
        &self.weight
    }

    pub fn momentum(&self) -> &[f64] {
        &self.momentum
    }
}

/// `a(x, y) = |φ(x)|² w(y)`.
pub fn wavepacket_symbol(spec: &WavepacketSpec) -> Result<ComplexGaussian> {
    let density = spec.envelope.product(&spec.envelope.conj())?;
    Ok(density.tensor(&spec.weight))
}

/// `r^{−d(d−1)/2} h^{−d/2} ∫ ⟨f⁽ᵖ⁾, Op_{r,h}(b) f⁽ᵖ⁾⟩ w(p) dp` for the
/// launched packets `f⁽ᵖ⁾(x) = r^{d(d−1)/2} φ(r^{d−1}x) e(p·x/h)`, as one
/// Gaussian integral over `(x, x', ξ, p)`. The pairing is linear in the
/// packet and antilinear in `Op(b) f`.
pub fn wavepacket_overlap(
    spec: &WavepacketSpec,
    b: &ComplexGaussian,
    params: &ScalingParams,
) -> Result<Complex64> {
    let d = spec.dim();
    if params.d != d {
        return Err(BoltzError::Dimension {
            expected: params.d,
            found: d,
        });
    }
    check_phase_space(b, d)?;
    let scaled_b = bg_rescale(b, params)?.conj();
    let k = 4 * d;
    let (ox, oxp, oy, op) = (0, d, 2 * d, 3 * d);
    let rd = params.r_dm1();
    let mut prod = GaussianProduct::new(k);
    let zero_d = vec![0.0; d];
    let mut px = vec![0.0; d * k];
    let mut pxp = vec![0.0; d * k];
    let mut pp = vec![0.0; d * k];
    for i in 0..d {
        px[i * k + ox + i] = rd;
        pxp[i * k + oxp + i] = rd;
        pp[i * k + op + i] = 1.0;
    }
    prod.factor(&spec.envelope, &px, &zero_d)?;
    prod.factor(&spec.envelope.conj(), &pxp, &zero_d)?;
    prod.factor(&spec.weight, &pp, &zero_d)?;
    // conj(D b) at ((x + x')/2, ξ)
    let n = 2 * d;
    let mut pb = vec![0.0; n * k];
    for i in 0..d {
        pb[i * k + ox + i] = 0.5;
        pb[i * k + oxp + i] = 0.5;
        pb[(d + i) * k + oy + i] = 1.0;
    }
    prod.factor(&scaled_b, &pb, &vec![0.0; n])?;
    // e(−(x − x')·ξ) from conj of the Weyl kernel, e(p·(x − x')/h) from the packets
    let mut bq = vec![0.0; k * k];
    for i in 0..d {
        bq[(ox + i) * k + oy + i] = -1.0;
        bq[(oxp + i) * k + oy + i] = 1.0;
        bq[(op + i) * k + ox + i] = 1.0 / params.h;
        bq[(op + i) * k + oxp + i] = -1.0 / params.h;
    }
    prod.quadratic_phase(&bq);
    let packet_norm = params.r.powf((d * (d - 1)) as f64);
    let prefactor = params.r.powf(-((d * (d - 1)) as f64) / 2.0) * params.h.powf(-(d as f64) / 2.0);
    prod.scale(Complex64::new(packet_norm * prefactor, 0.0));
    Ok(prod.finish()?.integral())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::smallmat::CMat;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn skewed(d: usize, s: &[f64]) -> ComplexGaussian {
        let n = 2 * d;
        let m = CMat::from_fn(n, n, |i, j| {
            let k = (i + j) % s.len();
            if i == j {
                c(1.2 + s[k].abs(), 0.3 * s[(k + 1) % s.len()])
            } else {
                c(0.1 * s[k], 0.15 * s[(k + 2) % s.len()])
            }
        })
        .symmetrized();
        let w = (0..n).map(|i| c(0.4 * s[i % s.len()], 0.6 * s[(i + 1) % s.len()])).collect();
        ComplexGaussian::new(c(0.7, -0.3), m, w).unwrap()
    }

    #[test]
    fn scaling_params_conventions() {
        let p = ScalingParams::new(2, 0.1, 0.5, 0.5).unwrap();
        assert_eq!(p.h, 0.1);
        assert!((p.lambda_prime() - 50.0).abs() < 1e-12);
        assert!((p.time_box() - 0.5).abs() < 1e-15);
        let p3 = ScalingParams::new(3, 0.5, 0.0, 1.0).unwrap();
        assert!((p3.time_box() - 2.0).abs() < 1e-15);
        assert!(ScalingParams::new(2, 0.0, 0.0, 1.0).is_err());
        assert!(ScalingParams::new(2, 0.5, 0.0, 0.0).is_err());
        assert!(ScalingParams::new(1, 0.5, 0.0, 1.0).is_err());
    }

    #[test]
    fn rescaling_examples() {
        let a = ComplexGaussian::standard(4);
        let unit = ScalingParams::new(2, 1.0, 0.0, 1.0).unwrap();
        assert_eq!(bg_rescale(&a, &unit).unwrap(), a);
        let p = ScalingParams::new(2, 0.3, 0.0, 1.0).unwrap();
        let da = bg_rescale(&a, &p).unwrap();
        assert!((da.norm_sq().sqrt() - 0.5).abs() < 1e-13);
        assert!((a.norm_sq().sqrt() - 0.5).abs() < 1e-15);
        let half = ScalingParams::new(2, 0.5, 0.0, 1.0).unwrap();
        let peak = bg_rescale(&a, &half).unwrap().eval(&[0.0; 4]).unwrap();
        assert!((peak.re - 0.25).abs() < 1e-15);
    }

    #[test]
    fn free_evolution_examples() {
        let a = ComplexGaussian::standard(2);
        assert_eq!(free_evolve_symbol(&a, 0.0).unwrap(), a);
        let a1 = free_evolve_symbol(&a, 1.0).unwrap();
        assert!((a1.eval(&[1.0, 1.0]).unwrap().re - (-std::f64::consts::PI).exp()).abs() < 1e-15);
        let (f, g) = (skewed(2, &[0.3, -0.5, 0.8, 0.1]), skewed(2, &[-0.2, 0.6, 0.4]));
        let lhs = hs_pairing(&free_evolve_symbol(&f, 2.7).unwrap(), &free_evolve_symbol(&g, 2.7).unwrap()).unwrap();
        let rhs = hs_pairing(&f, &g).unwrap();
        assert!((lhs - rhs).norm() <= 1e-12 * rhs.norm());
    }

    #[test]
    fn pairing_examples() {
        let a2 = ComplexGaussian::standard(4);
        assert!((hs_pairing(&a2, &a2).unwrap() - 0.25).norm() < 1e-15);
        let a3 = ComplexGaussian::standard(6);
        assert!((hs_pairing(&a3, &a3).unwrap() - 0.125).norm() < 1e-15);
        // b(x, y) = a(−x, y) with a real and centred off the origin
        let a = ComplexGaussian::standard(4).shifted(&[0.7, -0.2, 0.1, 0.3]);
        let b = a.pullback(&[-1.0, 0.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0], 4).unwrap();
        assert!(hs_pairing(&a, &b).unwrap().im.abs() < 1e-16);
    }

    #[test]
    fn wavepacket_symbol_examples() {
        let spec = WavepacketSpec::gaussian(2, 1.0, vec![0.5, 0.0], 0.8).unwrap();
        assert!((spec.envelope().norm_sq() - 1.0).abs() < 1e-13);
        let a = wavepacket_symbol(&spec).unwrap();
        // |φ|² has doubled quadratic coefficient
        assert!((a.quadratic()[(0, 0)].re - 2.0).abs() < 1e-15);
        let v = a.eval(&[0.0, 0.0, 0.5, 0.0]).unwrap();
        assert!((v.re - 2.0).abs() < 1e-13);
        assert!(WavepacketSpec::new(ComplexGaussian::standard(2), vec![0.0; 2], ComplexGaussian::standard(2)).is_err());
    }

    #[test]
    fn wavepacket_overlap_matches_pairing_to_leading_order() {
        let spec = WavepacketSpec::gaussian(2, 1.0, vec![0.3, -0.2], 0.9).unwrap();
        let a = wavepacket_symbol(&spec).unwrap();
        let b = ComplexGaussian::standard(4).shifted(&[0.2, 0.0, 0.4, 0.1]);
        let mut devs = Vec::new();
        for r in [0.4, 0.2, 0.1] {
            let p = ScalingParams::new(2, r, 0.0, 1.0).unwrap();
            let lhs = wavepacket_overlap(&spec, &b, &p).unwrap();
            let rhs = hs_pairing(&a, &b).unwrap();
            devs.push((lhs - rhs).norm());
        }
        // deviation is bounded by O(r^{d−1} h) = O(r²); for these real
        // symbols the first-order remainder cancels and the decay is faster
        assert!(devs[2] < 0.05 * hs_pairing(&a, &b).unwrap().norm());
        let slope = (devs[0] / devs[2]).ln() / 4f64.ln();
        assert!(slope > 1.8, "slope {slope}");
    }

    proptest! {
        #[test]
        fn rescaling_is_an_isometry(r in 0.05f64..1.0, s in proptest::collection::vec(-1.0f64..1.0, 5)) {
            let a = skewed(2, &s);
            let b = skewed(2, &[s[1], s[3], s[0], -s[2]]);
            let p = ScalingParams::new(2, r, 0.0, 1.0).unwrap();
            let lhs = hs_pairing(&bg_rescale(&a, &p).unwrap(), &bg_rescale(&b, &p).unwrap()).unwrap();
            let rhs = hs_pairing(&a, &b).unwrap();
            prop_assert!((lhs - rhs).norm() <= 1e-11 * rhs.norm().max(1e-12));
        }

        #[test]
        fn egorov_consistency(t in -3.0f64..3.0, s in proptest::collection::vec(-1.0f64..1.0, 5)) {
            let a = skewed(2, &s);
            let b = skewed(2, &[s[4], s[2], -s[0]]);
            let lhs = hs_pairing(&free_evolve_symbol(&a, t).unwrap(), &b).unwrap();
            let rhs = hs_pairing(&a, &free_evolve_symbol(&b, -t).unwrap()).unwrap();
            prop_assert!((lhs - rhs).norm() <= 1e-12 * rhs.norm().max(1e-300));
        }

        #[test]
        fn free_evolution_is_a_group(s in -2.0f64..2.0, t in -2.0f64..2.0) {
            let a = skewed(2, &[0.2, -0.4, 0.9]);
            let two = free_evolve_symbol(&free_evolve_symbol(&a, t).unwrap(), s).unwrap();
            let one = free_evolve_symbol(&a, s + t).unwrap();
            let scale = one.quadratic().max_abs();
            prop_assert!(two.quadratic().sub(one.quadratic()).max_abs() <= 1e-14 * scale);
            prop_assert_eq!(two.amplitude(), one.amplitude());
        }
    }
}
