//! The group `G = SL(2,ℝ) ⋉ ℝ^{2d}` in Iwasawa coordinates, reduction
//! modulo `Γ` into the fundamental domain, and the cusp functions
//! `Ψ^β_{R,f}` and `X_R`.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{BoltzError, Result};

pub type Mat2 = [[f64; 2]; 2];
pub type IMat2 = [[i64; 2]; 2];

const TAU: f64 = 2.0 * PI;

/// `(τ, φ, ξ)` with `τ = u + iv`, `φ ∈ [0, 2π)`, `ξ = (x, y) ∈ ℝᵈ × ℝᵈ`.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupElement {
    pub tau: Complex64,
    pub phi: f64,
    pub xi: Vec<f64>,
}

impl GroupElement {
    pub fn new(tau: Complex64, phi: f64, xi: Vec<f64>) -> Result<Self> {
        if !(tau.im > 0.0) || !tau.re.is_finite() || !tau.im.is_finite() {
            return Err(BoltzError::InvalidArgument(format!(
                "τ must lie in the upper half plane, got {tau}"
            )));
        }
        if xi.len() % 2 != 0 || xi.is_empty() {
            return Err(BoltzError::InvalidArgument(
                "ξ must have even positive length".into(),
            ));
        }
        Ok(Self {
            tau,
            phi: normalize_angle(phi),
            xi,
        })
    }

    pub fn identity(d: usize) -> Self {
        Self {
            tau: Complex64::new(0.0, 1.0),
            phi: 0.0,
            xi: vec![0.0; 2 * d],
        }
    }

    /// `(u + iv, 0, (0, y))`, the horocycle point used by every mean-value
    /// experiment.
    pub fn horocycle(u: f64, v: f64, y: &[f64]) -> Result<Self> {
        let mut xi = vec![0.0; y.len()];
        xi.extend_from_slice(y);
        Self::new(Complex64::new(u, v), 0.0, xi)
    }

    pub fn d(&self) -> usize {
        self.xi.len() / 2
    }

    pub fn u(&self) -> f64 {
        self.tau.re
    }

    pub fn v(&self) -> f64 {
        self.tau.im
    }

    pub fn x(&self) -> &[f64] {
        &self.xi[..self.d()]
    }

    pub fn y(&self) -> &[f64] {
        &self.xi[self.d()..]
    }

    /// `n₋(u) Φ^{−log v} R(φ)`.
    pub fn matrix(&self) -> Mat2 {
        let (u, v) = (self.tau.re, self.tau.im);
        let sv = v.sqrt();
        let (s, c) = self.phi.sin_cos();
        // n(u) D(v) = [[√v, u/√v], [0, 1/√v]]
        let nd = [[sv, u / sv], [0.0, 1.0 / sv]];
        let rot = [[c, -s], [s, c]];
        mat_mul(&nd, &rot)
    }

    pub fn from_matrix(m: &Mat2, xi: Vec<f64>) -> Result<Self> {
        let (tau, phi) = iwasawa(m)?;
        Self::new(tau, phi, xi)
    }
}

pub fn normalize_angle(phi: f64) -> f64 {
    let p = phi.rem_euclid(TAU);
    if p >= TAU {
        0.0
    } else {
        p
    }
}

pub fn mat_mul(a: &Mat2, b: &Mat2) -> Mat2 {
    [
        [
            a[0][0] * b[0][0] + a[0][1] * b[1][0],
            a[0][0] * b[0][1] + a[0][1] * b[1][1],
        ],
        [
            a[1][0] * b[0][0] + a[1][1] * b[1][0],
            a[1][0] * b[0][1] + a[1][1] * b[1][1],
        ],
    ]
}

/// Blockwise action `M(x, y) = (ax + by, cx + dy)`.
pub fn act(m: &Mat2, xi: &[f64]) -> Vec<f64> {
    let d = xi.len() / 2;
    let (x, y) = xi.split_at(d);
    let mut out = Vec::with_capacity(2 * d);
    out.extend((0..d).map(|i| m[0][0] * x[i] + m[0][1] * y[i]));
    out.extend((0..d).map(|i| m[1][0] * x[i] + m[1][1] * y[i]));
    out
}

/// Iwasawa coordinates `(τ, φ)` of a unimodular matrix.
pub fn iwasawa(m: &Mat2) -> Result<(Complex64, f64)> {
    let [[a, b], [c, d]] = *m;
    let det = a * d - b * c;
    if !((det - 1.0).abs() <= 1e-12 * (1.0 + a.abs().max(b.abs()).max(c.abs()).max(d.abs()).powi(2))) {
        return Err(BoltzError::InvalidArgument(format!(
            "matrix must have determinant 1, has {det}"
        )));
    }
    let n2 = c * c + d * d;
    let v = 1.0 / n2;
    let u = (a * c + b * d) / n2;
    let phi = normalize_angle(c.atan2(d));
    Ok((Complex64::new(u, v), phi))
}

/// `(M, ξ)(M', ξ') = (MM', ξ + Mξ')`.
pub fn group_mul(g1: &GroupElement, g2: &GroupElement) -> Result<GroupElement> {
    if g1.xi.len() != g2.xi.len() {
        return Err(BoltzError::Dimension {
            expected: g1.xi.len(),
            found: g2.xi.len(),
        });
    }
    let m1 = g1.matrix();
    let m = mat_mul(&m1, &g2.matrix());
    let shifted = act(&m1, &g2.xi);
    let xi = g1.xi.iter().zip(&shifted).map(|(a, b)| a + b).collect();
    GroupElement::from_matrix(&m, xi)
}

/// Element `(γ, (ab s, cd s) + m)` of `Γ`, with `s = (½, …, ½)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GammaElement {
    pub gamma: IMat2,
    pub m: Vec<i64>,
}

impl GammaElement {
    pub fn new(gamma: IMat2, m: Vec<i64>) -> Result<Self> {
        let det = gamma[0][0] * gamma[1][1] - gamma[0][1] * gamma[1][0];
        if det != 1 {
            return Err(BoltzError::InvalidArgument(format!(
                "integer matrix must have determinant 1, has {det}"
            )));
        }
        Ok(Self { gamma, m })
    }

    pub fn identity(d: usize) -> Self {
        Self {
            gamma: [[1, 0], [0, 1]],
            m: vec![0; 2 * d],
        }
    }

    /// `((1 1; 0 1), (s, 0))`.
    pub fn translation(d: usize) -> Self {
        Self {
            gamma: [[1, 1], [0, 1]],
            m: vec![0; 2 * d],
        }
    }

    /// `((0 −1; 1 0), 0)`.
    pub fn inversion(d: usize) -> Self {
        Self {
            gamma: [[0, -1], [1, 0]],
            m: vec![0; 2 * d],
        }
    }

    pub fn d(&self) -> usize {
        self.m.len() / 2
    }

    pub fn shift(&self) -> Vec<f64> {
        let d = self.d();
        let [[a, b], [c, dd]] = self.gamma;
        let mut xi = Vec::with_capacity(2 * d);
        xi.extend(self.m[..d].iter().map(|&k| (a * b) as f64 * 0.5 + k as f64));
        xi.extend(self.m[d..].iter().map(|&k| (c * dd) as f64 * 0.5 + k as f64));
        xi
    }

    pub fn matrix(&self) -> Mat2 {
        let g = self.gamma;
        [
            [g[0][0] as f64, g[0][1] as f64],
            [g[1][0] as f64, g[1][1] as f64],
        ]
    }

    /// Left action `γ·g`, computed as `(γM, ξ_γ + γξ)` with `τ` moved by
    /// the Möbius map and `φ` by the argument of the automorphy factor.
    pub fn apply(&self, g: &GroupElement) -> Result<GroupElement> {
        let m = self.matrix();
        let [[a, b], [c, d]] = m;
        let tau = g.tau;
        let j = c * tau + d;
        let new_tau = (a * tau + b) / j;
        // γ n(u)D(v) = n(u')D(v')R(arg j)
        let phi = g.phi + j.arg();
        let moved = act(&m, &g.xi);
        let xi = self.shift().iter().zip(&moved).map(|(p, q)| p + q).collect();
        GroupElement::new(new_tau, phi, xi)
    }

    pub fn as_group_element(&self) -> Result<GroupElement> {
        GroupElement::from_matrix(&self.matrix(), self.shift())
    }
}

/// Outcome of [`reduce_to_fundamental`]: `g = γ · g₀`.
#[derive(Debug, Clone, PartialEq)]
pub struct Reduction {
    pub gamma: GammaElement,
    pub reduced: GroupElement,
    pub steps: usize,
}

/// Upper bound on flip steps; the number of steps grows like `log(1/v)`.
pub const MAX_REDUCTION_STEPS: usize = 10_000;

/// `a·x + b·y` as an unevaluated sum `hi + lo`.
fn dot2(a: f64, x: f64, b: f64, y: f64) -> (f64, f64) {
    let p1 = a * x;
    let e1 = a.mul_add(x, -p1);
    let p2 = b * y;
    let e2 = b.mul_add(y, -p2);
    let (s, e3) = two_sum(p1, p2);
    (s, e1 + e2 + e3)
}

fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

fn imat_mul(a: &IMat2, b: &IMat2) -> IMat2 {
    [
        [
            a[0][0] * b[0][0] + a[0][1] * b[1][0],
            a[0][0] * b[0][1] + a[0][1] * b[1][1],
        ],
        [
            a[1][0] * b[0][0] + a[1][1] * b[1][0],
            a[1][0] * b[0][1] + a[1][1] * b[1][1],
        ],
    ]
}

/// Find `γ ∈ Γ` and `g₀` with `g = γ g₀`, `|Re τ₀| ≤ ½`, `|τ₀| ≥ 1` and
/// `ξ₀ ∈ [0, 1)^{2d}`.
pub fn reduce_to_fundamental(g: &GroupElement) -> Result<Reduction> {
    let mut tau = g.tau;
    let mut phi = g.phi;
    // B with τ₀ = B τ
    let mut bmat: IMat2 = [[1, 0], [0, 1]];
    let mut steps = 0;
    loop {
        let n = tau.re.round();
        if n != 0.0 {
            tau.re -= n;
            let ni = n as i64;
            bmat = imat_mul(&[[1, -ni], [0, 1]], &bmat);
        }
        if tau.norm_sqr() < 1.0 - 1e-14 {
            phi += tau.arg();
            tau = -1.0 / tau;
            bmat = imat_mul(&[[0, -1], [1, 0]], &bmat);
            steps += 1;
            if steps > MAX_REDUCTION_STEPS {
                return Err(BoltzError::Internal(format!(
                    "fundamental-domain reduction did not terminate for τ = {}",
                    g.tau
                )));
            }
        } else {
            break;
        }
    }
    // γ = B⁻¹
    let [[p, q], [r, s]] = bmat;
    let gamma: IMat2 = [[s, -q], [-r, p]];
    let d = g.d();
    let [[a, b], [c, dd]] = gamma;
    // z = B ξ − B(ab s, cd s); the second part is an exact half-integer and
    // the first is carried in double-double so that frac(z) stays accurate
    // when B is large.
    let (sx, sy) = ((a * b) as f64 * 0.5, (c * dd) as f64 * 0.5);
    let shift = [p as f64 * sx + q as f64 * sy, r as f64 * sx + s as f64 * sy];
    let mut floors = vec![0i64; 2 * d];
    let mut xi0 = vec![0.0; 2 * d];
    for i in 0..d {
        let (x, y) = (g.xi[i], g.xi[d + i]);
        for (row, (bx, by)) in [(p, q), (r, s)].into_iter().enumerate() {
            let (hi, lo) = dot2(bx as f64, x, by as f64, y);
            let (hi, e) = two_sum(hi, -shift[row]);
            let mut fl = hi.floor();
            let mut frac = (hi - fl) + (lo + e);
            if frac < 0.0 {
                frac += 1.0;
                fl -= 1.0;
            } else if frac >= 1.0 {
                frac -= 1.0;
                fl += 1.0;
            }
            if frac >= 1.0 {
                frac = 0.0;
                fl += 1.0;
            }
            let k = row * d + i;
            floors[k] = fl as i64;
            xi0[k] = frac;
        }
    }
    // m = γ ⌊z⌋
    let mut m = vec![0i64; 2 * d];
    for i in 0..d {
        m[i] = a * floors[i] + b * floors[d + i];
        m[d + i] = c * floors[i] + dd * floors[d + i];
    }
    Ok(Reduction {
        gamma: GammaElement::new(gamma, m)?,
        reduced: GroupElement::new(tau, phi, xi0)?,
        steps,
    })
}

/// Radial majorant `f̄(y) = (1 + ‖y‖)^{−2T}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadialMajorant {
    pub decay: f64,
}

impl RadialMajorant {
    pub fn new(decay: f64, d: usize) -> Result<Self> {
        if !(decay > d as f64) {
            return Err(BoltzError::InvalidArgument(format!(
                "majorant exponent T = {decay} must exceed d = {d}"
            )));
        }
        Ok(Self { decay })
    }

    #[inline]
    pub fn eval_norm(&self, norm: f64) -> f64 {
        (1.0 + norm).powf(-2.0 * self.decay)
    }

    /// `Σ_{m ∈ ℤᵈ} f̄((y + m) s)` truncated to `‖m + y‖ ≤ M` with the
    /// remainder bounded by the tail integral.
    pub fn lattice_sum(&self, y: &[f64], s: f64, tol: f64) -> (f64, f64) {
        let d = y.len();
        let two_t = 2.0 * self.decay;
        let area = sphere_area(d);
        // ∫_{‖z‖>M} (s‖z‖)^{−2T} dz = area · s^{−2T} M^{d−2T} / (2T − d)
        let tail_at = |m: f64| area * s.powf(-two_t) * m.powf(d as f64 - two_t) / (two_t - d as f64);
        let mut radius = 2.0;
        while tail_at(radius - (d as f64).sqrt()) > tol && radius < 64.0 {
            radius *= 1.5;
        }
        let frac: Vec<f64> = y.iter().map(|v| v - v.round()).collect();
        let span = radius.ceil() as i64 + 1;
        let mut total = 0.0;
        let mut idx = vec![-span; d];
        'outer: loop {
            let norm2: f64 = idx.iter().zip(&frac).map(|(m, f)| (*m as f64 + f).powi(2)).sum();
            if norm2 <= radius * radius {
                total += self.eval_norm(norm2.sqrt() * s);
            }
            for j in 0..d {
                idx[j] += 1;
                if idx[j] <= span {
                    continue 'outer;
                }
                idx[j] = -span;
            }
            break;
        }
        (total, tail_at(radius - (d as f64).sqrt()).max(0.0))
    }
}

pub fn sphere_area(d: usize) -> f64 {
    match d {
        1 => 2.0,
        2 => TAU,
        3 => 4.0 * PI,
        _ => {
            // 2π^{d/2} / Γ(d/2)
            let half = d as f64 / 2.0;
            2.0 * PI.powf(half) / libm::tgamma(half)
        }
    }
}

fn gcd(a: i64, b: i64) -> i64 {
    let (mut a, mut b) = (a.abs(), b.abs());
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a
}

/// Coprime `(c, d)` up to overall sign with `v / |cτ + d|² ≥ R`,
/// returned as `(c, d, v_γ)`.
pub fn cusp_pairs(tau: Complex64, cutoff: f64) -> Vec<(i64, i64, f64)> {
    let (u, v) = (tau.re, tau.im);
    let bound = v / cutoff;
    let cmax = (1.0 / (v * cutoff)).sqrt().floor() as i64;
    let mut out = Vec::new();
    if bound >= 1.0 {
        out.push((0, 1, v));
    }
    for c in 1..=cmax {
        let cf = c as f64;
        let rem = bound - cf * cf * v * v;
        if rem < 0.0 {
            continue;
        }
        let half = rem.sqrt();
        let lo = (-cf * u - half).ceil() as i64;
        let hi = (-cf * u + half).floor() as i64;
        for d in lo..=hi {
            if gcd(c, d) != 1 {
                continue;
            }
            let j2 = (cf * u + d as f64).powi(2) + cf * cf * v * v;
            let vg = v / j2;
            if vg >= cutoff {
                out.push((c, d, vg));
            }
        }
    }
    out
}

/// `X_R(τ)`: number of cosets `(Γ_∞ ∪ −Γ_∞)γ` with `Im γτ ≥ R`.
pub fn x_r(tau: Complex64, cutoff: f64) -> usize {
    cusp_pairs(tau, cutoff).len()
}

/// `Ψ^β_{R,f̄}(τ, ξ) = Σ_{γ ∈ Γ_∞\SL(2,ℤ)} Σ_m f̄((y_γ + m) v_γ^{1/2}) v_γ^{βd/2} χ_R(v_γ)`
/// with `y_γ = cx + dy`. Returns the value and a bound on the truncated
/// part of the `m`-sums.
pub fn psi_beta(
    tau: Complex64,
    xi: &[f64],
    cutoff: f64,
    beta: f64,
    fbar: &RadialMajorant,
) -> Result<(f64, f64)> {
    if !(cutoff >= 1.0) {
        return Err(BoltzError::InvalidArgument(format!(
            "cutoff R must be at least 1, got {cutoff}"
        )));
    }
    if !(0.0..=1.0).contains(&beta) {
        return Err(BoltzError::InvalidArgument(format!(
            "β must lie in [0, 1], got {beta}"
        )));
    }
    if xi.len() % 2 != 0 {
        return Err(BoltzError::InvalidArgument("ξ must have even length".into()));
    }
    let d = xi.len() / 2;
    let (x, y) = xi.split_at(d);
    let mut total = 0.0;
    let mut tail = 0.0;
    for (c, dd, vg) in cusp_pairs(tau, cutoff) {
        let yg: Vec<f64> = (0..d).map(|i| c as f64 * x[i] + dd as f64 * y[i]).collect();
        let (s, t) = fbar.lattice_sum(&yg, vg.sqrt(), 1e-12);
        let weight = vg.powf(beta * d as f64 / 2.0);
        // (c, d) and (−c, −d) give equal terms for a radial majorant
        total += 2.0 * weight * s;
        tail += 2.0 * weight * t;
    }
    Ok((total, tail))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn close(a: &GroupElement, b: &GroupElement, tol: f64) -> bool {
        let dphi = {
            let p = (a.phi - b.phi).rem_euclid(TAU);
            p.min(TAU - p)
        };
        (a.tau - b.tau).norm() <= tol
            && dphi <= tol
            && a.xi.iter().zip(&b.xi).all(|(p, q)| (p - q).abs() <= tol)
    }

    fn random_element(rng: &mut ChaCha8Rng, d: usize, vmin: f64) -> GroupElement {
        let logv = rng.random_range(vmin.ln()..3.0f64);
        let xi = (0..2 * d).map(|_| rng.random_range(-2.0..2.0)).collect();
        GroupElement::new(
            Complex64::new(rng.random_range(-5.0..5.0), logv.exp()),
            rng.random_range(0.0..TAU),
            xi,
        )
        .unwrap()
    }

    #[test]
    fn iwasawa_examples() {
        let (tau, phi) = iwasawa(&[[1.0, 0.0], [0.0, 1.0]]).unwrap();
        assert!((tau - Complex64::new(0.0, 1.0)).norm() < 1e-15 && phi == 0.0);
        let p0 = 1.1;
        let (s, c) = f64::sin_cos(p0);
        let (tau, phi) = iwasawa(&[[c, -s], [s, c]]).unwrap();
        assert!((tau - Complex64::new(0.0, 1.0)).norm() < 1e-15 && (phi - p0).abs() < 1e-15);
        // n(0.3) Φ^{−log 4} = [[2, 0.15], [0, 0.5]]
        let m = [[2.0, 0.3 / 2.0], [0.0, 0.5]];
        let (tau, phi) = iwasawa(&m).unwrap();
        assert!((tau - Complex64::new(0.3, 4.0)).norm() < 1e-13 && phi == 0.0);
        let g = GroupElement::new(tau, phi, vec![0.0; 2]).unwrap();
        let back = g.matrix();
        for i in 0..2 {
            for j in 0..2 {
                assert!((back[i][j] - m[i][j]).abs() < 1e-13);
            }
        }
        assert!(iwasawa(&[[1.0, 1.0], [1.0, 1.0]]).is_err());
    }

    #[test]
    fn group_law_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let g = random_element(&mut rng, 2, 0.05);
            let e = GroupElement::identity(2);
            assert!(close(&group_mul(&g, &e).unwrap(), &g, 1e-14 * (1.0 + g.tau.norm())));
        }
        // (1, (0, y)) n(u) Φ^{−2 log r} = (u + i r², 0, (0, y))
        let (u, r, y) = (0.37, 0.05, [0.41, 0.73]);
        let left = GroupElement::new(Complex64::new(0.0, 1.0), 0.0, vec![0.0, 0.0, y[0], y[1]]).unwrap();
        let right = GroupElement::from_matrix(&[[r, u / r], [0.0, 1.0 / r]], vec![0.0; 4]).unwrap();
        let prod = group_mul(&left, &right).unwrap();
        assert!(close(&prod, &GroupElement::horocycle(u, r * r, &y).unwrap(), 1e-13));
    }

    #[test]
    fn associativity() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let (a, b, c) = (
                random_element(&mut rng, 2, 0.2),
                random_element(&mut rng, 2, 0.2),
                random_element(&mut rng, 2, 0.2),
            );
            let l = group_mul(&group_mul(&a, &b).unwrap(), &c).unwrap();
            let r = group_mul(&a, &group_mul(&b, &c).unwrap()).unwrap();
            let scale = 1.0 + l.tau.norm() + l.xi.iter().map(|x| x.abs()).sum::<f64>();
            assert!(close(&l, &r, 1e-12 * scale));
        }
    }

    #[test]
    fn gamma_action_matches_group_multiplication() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for gen in [GammaElement::translation(2), GammaElement::inversion(2), GammaElement::new([[2, 1], [5, 3]], vec![1, -2, 0, 3]).unwrap()] {
            for _ in 0..20 {
                let g = random_element(&mut rng, 2, 0.1);
                let via_apply = gen.apply(&g).unwrap();
                let via_mul = group_mul(&gen.as_group_element().unwrap(), &g).unwrap();
                assert!(close(&via_apply, &via_mul, 1e-11 * (1.0 + via_mul.tau.norm())));
            }
        }
    }

    #[test]
    fn reduction_examples() {
        let g = GroupElement::new(Complex64::new(0.3, 2.0), 0.4, vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        let red = reduce_to_fundamental(&g).unwrap();
        assert_eq!(red.gamma, GammaElement::identity(2));
        assert!(close(&red.reduced, &g, 1e-15));

        let r: f64 = 0.05;
        let g = GroupElement::horocycle(0.37, r * r, &[0.41, 0.73]).unwrap();
        let red = reduce_to_fundamental(&g).unwrap();
        assert!(red.reduced.v() >= 3f64.sqrt() / 2.0);
        assert!(red.reduced.u().abs() <= 0.5 + 1e-12);
        let back = red.gamma.apply(&red.reduced).unwrap();
        assert!(close(&back, &g, 1e-10));

        // τ → τ + 1 through the Γ translation generator
        let moved = GammaElement::translation(2).apply(&g).unwrap();
        let red2 = reduce_to_fundamental(&moved).unwrap();
        assert!(close(&red.reduced, &red2.reduced, 1e-9));
        let t = GammaElement::translation(2).gamma;
        assert_eq!(imat_mul(&t, &red.gamma.gamma), red2.gamma.gamma);
    }

    #[test]
    fn reduction_round_trip_on_random_inputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        for _ in 0..10_000 {
            let g = random_element(&mut rng, 2, 1e-6);
            let red = reduce_to_fundamental(&g).unwrap();
            let g0 = &red.reduced;
            assert!(g0.v() >= 3f64.sqrt() / 2.0 - 1e-9, "v0 = {}", g0.v());
            assert!(g0.u().abs() <= 0.5 + 1e-9);
            assert!(g0.xi.iter().all(|x| (0.0..1.0).contains(x)));
            let back = red.gamma.apply(g0).unwrap();
            assert!(close(&back, &g, 1e-10), "{g:?} vs {back:?}");
        }
    }

    #[test]
    fn psi_examples() {
        let fbar = RadialMajorant::new(3.0, 2).unwrap();
        // v ≥ R, y near a lattice point: the (0, ±1) term dominates
        let tau = Complex64::new(0.1, 9.0);
        let xi = [0.0, 0.0, 0.02, -0.01];
        let (val, _) = psi_beta(tau, &xi, 4.0, 1.0, &fbar).unwrap();
        let lead = 2.0 * 9.0f64.powf(1.0) * fbar.eval_norm((0.02f64.hypot(0.01)) * 3.0);
        assert!((val - lead).abs() < 0.01 * lead, "{val} vs {lead}");
        // v far below R with |τ| bounded away from 0: nothing survives
        let (val, _) = psi_beta(Complex64::new(0.45, 0.01), &xi, 4.0, 1.0, &fbar).unwrap();
        assert_eq!(val, 0.0);
        assert!(psi_beta(tau, &xi, 0.5, 1.0, &fbar).is_err());
    }

    #[test]
    fn x_r_counts_cusps() {
        // τ = i·v with v ≥ R: only the identity coset
        assert_eq!(x_r(Complex64::new(0.0, 3.0), 2.0), 1);
        // small v near 0: the inversion coset (1, 0) has v/|τ|² = 1/v
        assert_eq!(x_r(Complex64::new(0.0, 0.1), 2.0), 1);
        assert_eq!(x_r(Complex64::new(0.3, 0.5), 2.0), 0);
    }

    #[test]
    fn psi_averaged_bound_decreases_with_cutoff() {
        // α-average of r^{d−2} ∫ Ψ^β(u + i r², (0, −α)) w(r^{d−2}u) du, d = 2
        let fbar = RadialMajorant::new(3.0, 2).unwrap();
        let beta = 0.5;
        let r: f64 = 0.03;
        let v = r * r;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let alphas: Vec<[f64; 2]> = (0..32).map(|_| [rng.random::<f64>(), rng.random::<f64>()]).collect();
        let nodes = 2000;
        let mut means = Vec::new();
        for cutoff in [1.0, 4.0, 16.0] {
            let mut acc = 0.0;
            for a in &alphas {
                for k in 0..nodes {
                    let u = -1.0 + (k as f64 + 0.5) * 2.0 / nodes as f64;
                    let xi = [0.0, 0.0, -a[0], -a[1]];
                    acc += psi_beta(Complex64::new(u, v), &xi, cutoff, beta, &fbar).unwrap().0;
                }
            }
            means.push(acc * 2.0 / nodes as f64 / alphas.len() as f64);
        }
        assert!(means[0] > means[1] && means[1] > means[2], "{means:?}");
        let slope = (means[2] / means[0]).ln() / 16f64.ln();
        // bound R^{(β−1)d/2} = R^{−1/2}
        assert!(slope <= -0.5 + 0.25, "slope {slope}, means {means:?}");
    }

    proptest! {
        #[test]
        fn psi_is_invariant_under_unimodular_translation(
            u in -2.0f64..2.0, lv in -5.0f64..1.0,
            x in proptest::collection::vec(-1.0f64..1.0, 4),
        ) {
            let fbar = RadialMajorant::new(2.5, 2).unwrap();
            let tau = Complex64::new(u, lv.exp());
            let (a, _) = psi_beta(tau, &x, 1.0, 0.7, &fbar).unwrap();
            // (τ, (x, y)) → (τ + 1, (x + y, y))
            let moved = [x[0] + x[2], x[1] + x[3], x[2], x[3]];
            let (b, _) = psi_beta(tau + 1.0, &moved, 1.0, 0.7, &fbar).unwrap();
            prop_assert!((a - b).abs() <= 1e-10 * a.abs().max(1e-300));
        }

        #[test]
        fn psi_is_monotone_in_cutoff(u in -1.0f64..1.0, lv in -6.0f64..0.0, r1 in 1.0f64..5.0, dr in 0.0f64..5.0) {
            let fbar = RadialMajorant::new(2.5, 2).unwrap();
            let tau = Complex64::new(u, lv.exp());
            let xi = [0.3, 0.1, -0.2, 0.45];
            let (a, _) = psi_beta(tau, &xi, r1, 1.0, &fbar).unwrap();
            let (b, _) = psi_beta(tau, &xi, r1 + dr, 1.0, &fbar).unwrap();
            prop_assert!(b <= a);
        }
    }
}
