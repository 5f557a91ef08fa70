//! Theta functions `Θ_f` on `G` for Gaussian test functions, horocycle
//! averages, closed-form limit values, and the second-order test
//! functions with their `η`-integrated profiles `F_{u'}`.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::boltzmann::{shell_integral, ShellQuadrature};
use crate::error::{BoltzError, Result};
use crate::lattice::{enumerate, gaussian_lattice_sum};
use crate::modular::{reduce_to_fundamental, GroupElement};
use crate::numerics::{composite_gauss_legendre, e, gauss_legendre, NeumaierSum, QuadratureRule};
use crate::phasespace::PairTransforms;
use crate::smallmat::CMat;
use crate::symbolcalc::{ComplexGaussian, GaussianPotential, GaussianProduct};

/// Relative cutoff for theta lattice sums.
pub const THETA_EPS: f64 = 1e-17;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThetaValue {
    pub value: Complex64,
    pub tail: f64,
    pub terms: usize,
}

impl ThetaValue {
    fn zero() -> Self {
        Self {
            value: Complex64::new(0.0, 0.0),
            tail: 0.0,
            terms: 0,
        }
    }

    fn add(&mut self, other: &ThetaValue) {
        self.value += other.value;
        self.tail += other.tail;
        self.terms += other.terms;
    }
}

fn check_dims(f: &ComplexGaussian, g: &GroupElement) -> Result<usize> {
    let d = g.d();
    if f.dim() != 2 * d {
        return Err(BoltzError::Dimension {
            expected: 2 * d,
            found: f.dim(),
        });
    }
    Ok(d)
}

/// `Θ_f(g)` summed directly at `g`, without reduction. Cheap only when
/// `Im τ` is of order one.
pub fn theta_at(f: &ComplexGaussian, g: &GroupElement, eps: f64) -> Result<ThetaValue> {
    check_dims(f, g)?;
    let fphi = f.metaplectic(g.phi)?;
    theta_sum(&fphi, g.tau, g.x(), g.y(), eps)
}

/// `Θ_f(g)` after reduction of `g` into the fundamental domain.
pub fn theta_eval(f: &ComplexGaussian, g: &GroupElement, eps: f64) -> Result<ThetaValue> {
    check_dims(f, g)?;
    if f.amplitude() == Complex64::new(0.0, 0.0) {
        return Ok(ThetaValue::zero());
    }
    let red = reduce_to_fundamental(g)?;
    theta_at(f, &red.reduced, eps)
}

/// `v^{d/2} Σ_{n ∈ ℤ^{2d} − (y,y)} f_φ(√v n) e(½u(‖n₁‖²−‖n₂‖²) + x·(n₁−n₂))`
/// as a Gaussian lattice sum.
fn theta_sum(fphi: &ComplexGaussian, tau: Complex64, x: &[f64], y: &[f64], eps: f64) -> Result<ThetaValue> {
    let d = x.len();
    let n = 2 * d;
    let (u, v) = (tau.re, tau.im);
    let sv = v.sqrt();
    let m = fphi.quadratic();
    let q = CMat::from_fn(n, n, |i, j| {
        let mut z = m[(i, j)] * v;
        if i == j {
            let sign = if i < d { 1.0 } else { -1.0 };
            z -= Complex64::new(0.0, u * sign);
        }
        z
    });
    let two_pi_i = Complex64::new(0.0, 2.0 * std::f64::consts::PI);
    let l: Vec<Complex64> = fphi
        .linear()
        .iter()
        .enumerate()
        .map(|(i, w)| {
            let xs = if i < d { x[i] } else { -x[i - d] };
            w * sv + two_pi_i * xs
        })
        .collect();
    let shift: Vec<f64> = y.iter().chain(y.iter()).map(|v| -v).collect();
    let s = gaussian_lattice_sum(&q, &l, &shift, eps)?;
    let pre = fphi.amplitude() * v.powf(d as f64 / 2.0);
    Ok(ThetaValue {
        value: pre * s.value,
        tail: pre.norm() * s.tail,
        terms: s.terms,
    })
}

/// Brute-force `Θ_f(g)` over the box `‖mᵢ − y‖_∞ ≤ radius`, evaluating
/// `f_φ` pointwise. Used as an oracle at moderate `v`.
pub fn theta_direct(f: &ComplexGaussian, g: &GroupElement, radius: f64) -> Result<Complex64> {
    let d = check_dims(f, g)?;
    let fphi = f.metaplectic(g.phi)?;
    let (u, v) = (g.u(), g.v());
    let sv = v.sqrt();
    let (x, y) = (g.x(), g.y());
    let ranges: Vec<(i64, i64)> = y
        .iter()
        .map(|&c| ((c - radius).ceil() as i64, (c + radius).floor() as i64))
        .collect();
    let points = lattice_box(&ranges);
    let mut acc = NeumaierSum::new();
    let mut z = vec![0.0; 2 * d];
    for m1 in &points {
        for m2 in &points {
            let mut phase = 0.0;
            for i in 0..d {
                let n1 = m1[i] as f64 - y[i];
                let n2 = m2[i] as f64 - y[i];
                z[i] = sv * n1;
                z[d + i] = sv * n2;
                phase += 0.5 * u * (n1 * n1 - n2 * n2) + x[i] * (n1 - n2);
            }
            acc.add(fphi.eval_unchecked(&z) * e(phase));
        }
    }
    Ok(acc.value() * v.powf(d as f64 / 2.0))
}

fn lattice_box(ranges: &[(i64, i64)]) -> Vec<Vec<i64>> {
    let mut out: Vec<Vec<i64>> = vec![Vec::new()];
    for &(lo, hi) in ranges {
        let mut next = Vec::new();
        for p in &out {
            for k in lo..=hi {
                let mut q = p.clone();
                q.push(k);
                next.push(q);
            }
        }
        out = next;
    }
    out
}

/// Diagonal part `v^{d/2} Σ_m f_φ(√v(m−y), √v(m−y))`, the leading term at
/// large `v`.
pub fn theta_leading(f: &ComplexGaussian, g: &GroupElement, eps: f64) -> Result<ThetaValue> {
    let d = check_dims(f, g)?;
    let fphi = f.metaplectic(g.phi)?;
    let diag = diagonal_restriction(&fphi, d)?;
    let v = g.v();
    let sv = v.sqrt();
    let q = diag.quadratic().scale(Complex64::new(v, 0.0));
    let l: Vec<Complex64> = diag.linear().iter().map(|w| w * sv).collect();
    let shift: Vec<f64> = g.y().iter().map(|c| -c).collect();
    let s = gaussian_lattice_sum(&q, &l, &shift, eps)?;
    let pre = diag.amplitude() * v.powf(d as f64 / 2.0);
    Ok(ThetaValue {
        value: pre * s.value,
        tail: pre.norm() * s.tail,
        terms: s.terms,
    })
}

/// `y ↦ f(y, y)`.
pub fn diagonal_restriction(f: &ComplexGaussian, d: usize) -> Result<ComplexGaussian> {
    let mut p = vec![0.0; 2 * d * d];
    for i in 0..d {
        p[i * d + i] = 1.0;
        p[(d + i) * d + i] = 1.0;
    }
    f.pullback(&p, d)
}

/// Higher-order theta `Θ^{(k)}_f` at points `g₁, …, g_k` with `φⱼ = 0`,
/// for `f` over `(Y, Y')` ordered as `(y₁, …, y_k, y'₁, …, y'_k)`. The
/// `2dk`-dimensional sum is enumerated as one block.
pub fn theta_k_at_zero_angle(f: &ComplexGaussian, gs: &[GroupElement], eps: f64) -> Result<ThetaValue> {
    let k = gs.len();
    if k == 0 {
        return Err(BoltzError::InvalidArgument("need at least one group element".into()));
    }
    let d = gs[0].d();
    let n = 2 * d * k;
    if f.dim() != n {
        return Err(BoltzError::Dimension {
            expected: n,
            found: f.dim(),
        });
    }
    if gs.iter().any(|g| g.phi != 0.0 || g.d() != d) {
        return Err(BoltzError::InvalidArgument(
            "higher-order theta is implemented at φ = 0 only".into(),
        ));
    }
    // coordinate index → (copy j, primed?, component)
    let slot = |idx: usize| -> (usize, bool, usize) {
        let primed = idx >= d * k;
        let rest = idx % (d * k);
        (rest / d, primed, rest % d)
    };
    let m = f.quadratic();
    let q = CMat::from_fn(n, n, |a, b| {
        let (ja, _, _) = slot(a);
        let (jb, _, _) = slot(b);
        let mut z = m[(a, b)] * (gs[ja].v().sqrt() * gs[jb].v().sqrt());
        if a == b {
            let (_, primed, _) = slot(a);
            let sign = if primed { -1.0 } else { 1.0 };
            z -= Complex64::new(0.0, gs[ja].u() * sign);
        }
        z
    });
    let two_pi_i = Complex64::new(0.0, 2.0 * std::f64::consts::PI);
    let mut l = Vec::with_capacity(n);
    let mut shift = Vec::with_capacity(n);
    for (a, w) in f.linear().iter().enumerate() {
        let (j, primed, c) = slot(a);
        let x = gs[j].x()[c];
        l.push(w * gs[j].v().sqrt() + two_pi_i * if primed { -x } else { x });
        shift.push(-gs[j].y()[c]);
    }
    let s = enumerate(&q, &l, &shift, eps)?;
    let pre = f.amplitude() * gs.iter().map(|g| g.v().powf(d as f64 / 2.0)).product::<f64>();
    Ok(ThetaValue {
        value: pre * s.value,
        tail: pre.norm() * s.tail,
        terms: s.terms,
    })
}

/// Which family a test function belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TestKind {
    /// A fixed Gaussian, independent of `(u, η)`.
    Generic,
    /// `(t−|u|) e(½(u+|u|)(y₂−y₁)·η) |Ŵ(y₂−y₁)|² ã(η,y₂) b̃(−η,y₂)`.
    Light,
    /// `½∫_{|u|}^{2t−|u|} e(½(u−u')η·(y₂−y₁)) du' |Ŵ(y₁−y₂)|² ã(η,y₁) b̃(−η,y₂)`.
    Light2,
}

#[derive(Debug, Clone)]
enum Spec {
    Generic(ComplexGaussian),
    Order2 {
        t: f64,
        transforms: PairTransforms,
        w2: ComplexGaussian,
        inner: QuadratureRule,
    },
}

/// Test function `f(y₁, y₂, u, η)` whose slices are finite sums of
/// complex Gaussians.
#[derive(Debug, Clone)]
pub struct ThetaTestFunction {
    kind: TestKind,
    d: usize,
    spec: Spec,
}

/// Default number of Gauss-Legendre nodes for the inner `u'` integral of
/// the `Light2` family.
pub const LIGHT2_INNER_ORDER: usize = 16;

/// `|Ŵ(ξ)|²` as a Gaussian over `ℝᵈ`.
pub fn potential_squared(potential: &GaussianPotential, d: usize) -> Result<ComplexGaussian> {
    let sigma = potential.width;
    let amp = potential.amplitude * potential.amplitude * sigma.powi(2 * d as i32);
    ComplexGaussian::new(
        Complex64::new(amp, 0.0),
        CMat::from_real_diag(&vec![2.0 * sigma * sigma; d]),
        vec![Complex64::new(0.0, 0.0); d],
    )
}

impl ThetaTestFunction {
    pub fn generic(f: ComplexGaussian) -> Result<Self> {
        if f.dim() % 2 != 0 {
            return Err(BoltzError::InvalidArgument(
                "test function needs an even dimension".into(),
            ));
        }
        Ok(Self {
            kind: TestKind::Generic,
            d: f.dim() / 2,
            spec: Spec::Generic(f),
        })
    }

    pub fn order2(
        kind: TestKind,
        transforms: &PairTransforms,
        potential: &GaussianPotential,
        t: f64,
        inner_order: usize,
    ) -> Result<Self> {
        if kind == TestKind::Generic {
            return Err(BoltzError::InvalidArgument(
                "order-two builder needs kind Light or Light2".into(),
            ));
        }
        if !(t > 0.0) {
            return Err(BoltzError::InvalidArgument(format!("t must be positive, got {t}")));
        }
        let d = transforms.d;
        Ok(Self {
            kind,
            d,
            spec: Spec::Order2 {
                t,
                transforms: transforms.clone(),
                w2: potential_squared(potential, d)?,
                inner: gauss_legendre(inner_order.max(1)),
            },
        })
    }

    pub fn kind(&self) -> TestKind {
        self.kind
    }

    pub fn d(&self) -> usize {
        self.d
    }

    /// Support `[−t, t]` of the `u`-dependence, if any.
    pub fn support(&self) -> Option<(f64, f64)> {
        match &self.spec {
            Spec::Generic(_) => None,
            Spec::Order2 { t, .. } => Some((-t, *t)),
        }
    }

    /// `(phase coefficient κ, weight)` pairs with
    /// `f = Σ weight · e(κ (y₂−y₁)·η) · kernel`.
    fn phase_terms(&self, u: f64) -> Vec<(f64, f64)> {
        match &self.spec {
            Spec::Generic(_) => vec![(0.0, 1.0)],
            Spec::Order2 { t, inner, .. } => {
                if u.abs() > *t {
                    return Vec::new();
                }
                match self.kind {
                    TestKind::Light => vec![(u.max(0.0), t - u.abs())],
                    TestKind::Light2 => {
                        let (lo, hi) = (u.abs(), 2.0 * t - u.abs());
                        if hi <= lo {
                            return Vec::new();
                        }
                        let rule = inner.mapped(lo, hi);
                        rule.nodes
                            .iter()
                            .zip(&rule.weights)
                            .map(|(s, w)| (0.5 * (u - s), 0.5 * w))
                            .collect()
                    }
                    TestKind::Generic => unreachable!(),
                }
            }
        }
    }

    /// Joint Gaussian over `(z₁, z₂, η)` for one phase term, with
    /// `yᵢ = zᵢ − shift·η`.
    fn joint(&self, kappa: f64, weight: f64, shift: f64) -> Result<ComplexGaussian> {
        let Spec::Order2 { transforms, w2, .. } = &self.spec else {
            return Err(BoltzError::Internal("joint profile of a generic test function".into()));
        };
        let d = self.d;
        let k = 3 * d;
        let (z1, z2, eta) = (0, d, 2 * d);
        let mut prod = GaussianProduct::new(k);
        let mut p = vec![0.0; d * k];
        for i in 0..d {
            p[i * k + z1 + i] = -1.0;
            p[i * k + z2 + i] = 1.0;
        }
        prod.factor(w2, &p, &vec![0.0; d])?;
        let a_at = if self.kind == TestKind::Light { z2 } else { z1 };
        for (g, a_sign, y_at) in [(&transforms.a_tilde, 1.0, a_at), (&transforms.b_tilde, -1.0, z2)] {
            let mut p = vec![0.0; 2 * d * k];
            for i in 0..d {
                p[i * k + eta + i] = a_sign;
                p[(d + i) * k + y_at + i] = 1.0;
                p[(d + i) * k + eta + i] = -shift;
            }
            prod.factor(g, &p, &vec![0.0; 2 * d])?;
        }
        if kappa != 0.0 {
            let mut b = vec![0.0; k * k];
            for i in 0..d {
                b[(z2 + i) * k + eta + i] = kappa;
                b[(z1 + i) * k + eta + i] = -kappa;
            }
            prod.quadratic_phase(&b);
        }
        prod.scale(Complex64::new(weight, 0.0));
        prod.finish()
    }

    /// Slice `f(·, ·, u, η)` as a sum of Gaussians over `(y₁, y₂)`.
    pub fn slice(&self, u: f64, eta: &[f64]) -> Result<Vec<ComplexGaussian>> {
        if let Spec::Generic(f) = &self.spec {
            return Ok(vec![f.clone()]);
        }
        if eta.len() != self.d {
            return Err(BoltzError::Dimension {
                expected: self.d,
                found: eta.len(),
            });
        }
        let fixed: Vec<usize> = (2 * self.d..3 * self.d).collect();
        self.phase_terms(u)
            .into_iter()
            .map(|(kappa, w)| self.joint(kappa, w, 0.0)?.section(&fixed, eta))
            .collect()
    }

    /// `F_u(z₁, z₂) = ∫ f(z₁ − ½r^dη, z₂ − ½r^dη, u, η) dη`, so that
    /// `F_r(g, u) = Θ_{F_u}(g)`. With `r = 0` this is the plain
    /// `η`-marginal.
    pub fn profile(&self, u: f64, r: f64) -> Result<Vec<ComplexGaussian>> {
        if let Spec::Generic(f) = &self.spec {
            return Ok(vec![f.clone()]);
        }
        let shift = 0.5 * r.powi(self.d as i32);
        let out: Vec<usize> = (2 * self.d..3 * self.d).collect();
        self.phase_terms(u)
            .into_iter()
            .map(|(kappa, w)| self.joint(kappa, w, shift)?.marginal(&out))
            .collect()
    }
}

/// Sum of `Θ` over the Gaussian pieces of a test-function slice.
pub fn theta_eval_sum(pieces: &[ComplexGaussian], g: &GroupElement, eps: f64) -> Result<ThetaValue> {
    if pieces.is_empty() {
        return Ok(ThetaValue::zero());
    }
    let red = reduce_to_fundamental(g)?;
    let mut total = ThetaValue::zero();
    for f in pieces {
        check_dims(f, g)?;
        total.add(&theta_at(f, &red.reduced, eps)?);
    }
    Ok(total)
}

/// Horocycle average `r^σ ∫ Θ_{f(·, r^σ u)}((u + i r², 0, (0, y))) du` over
/// `u ∈ [a, b]/r^σ`, where `[a, b]` is the support of the weight.
#[derive(Debug, Clone, PartialEq)]
pub struct HorocycleExperiment {
    pub y: Vec<f64>,
    pub r: f64,
    pub sigma: f64,
    pub support: (f64, f64),
    /// Panel width in units of `v = r²`, capped at `max_panel`.
    pub panel_in_v: f64,
    pub max_panel: f64,
    pub order: usize,
    pub eps: f64,
}

impl HorocycleExperiment {
    pub fn new(y: Vec<f64>, r: f64, sigma: f64, support: (f64, f64)) -> Result<Self> {
        if !(r > 0.0 && r <= 1.0) {
            return Err(BoltzError::InvalidArgument(format!("r must lie in (0, 1], got {r}")));
        }
        if !(support.0 < support.1) || !support.0.is_finite() || !support.1.is_finite() {
            return Err(BoltzError::InvalidArgument(format!(
                "weight support must be a bounded interval, got {support:?}"
            )));
        }
        Ok(Self {
            y,
            r,
            sigma,
            support,
            panel_in_v: 1.0,
            max_panel: 0.01,
            order: 12,
            eps: THETA_EPS,
        })
    }

    pub fn v(&self) -> f64 {
        self.r * self.r
    }

    /// `u`-quadrature with panels of width `min(panel_in_v · v, max_panel)`
    /// and a break at `u = 0`.
    pub fn rule(&self) -> QuadratureRule {
        let scale = self.r.powf(self.sigma);
        let (a, b) = (self.support.0 / scale, self.support.1 / scale);
        let width = (self.panel_in_v * self.v()).min(self.max_panel);
        composite_gauss_legendre(a, b, &[0.0], width, self.order)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HorocycleMean {
    pub value: Complex64,
    pub tail: f64,
    pub nodes: usize,
}

/// Evaluate the horocycle average for a test function given as
/// `u' ↦ Gaussian pieces` (weight already included), where `u' = r^σ u`.
pub fn horocycle_mean<F>(exp: &HorocycleExperiment, integrand: F) -> Result<HorocycleMean>
where
    F: Fn(f64) -> Result<Vec<ComplexGaussian>> + Sync,
{
    let rule = exp.rule();
    let scale = exp.r.powf(exp.sigma);
    let v = exp.v();
    let vals: Vec<Result<(Complex64, f64)>> = rule
        .nodes
        .par_iter()
        .zip(rule.weights.par_iter())
        .map(|(&u, &w)| {
            let pieces = integrand(scale * u)?;
            let g = GroupElement::horocycle(u, v, &exp.y)?;
            let th = theta_eval_sum(&pieces, &g, exp.eps).map_err(|e| e.at(format!("u = {u}")))?;
            Ok((th.value * w, th.tail * w.abs()))
        })
        .collect();
    let mut acc = NeumaierSum::new();
    let mut tail = 0.0;
    for item in vals {
        let (z, t) = item?;
        acc.add(z);
        tail += t;
    }
    Ok(HorocycleMean {
        value: acc.value() * scale,
        tail: tail * scale,
        nodes: rule.len(),
    })
}

/// The two closed-form pieces of a mean-value limit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThetaLimit {
    /// `2 w(0) ∫∫ f δ(‖y₁‖²−‖y₂‖²)`.
    pub shell: Complex64,
    /// `∫ f(y, y) dy · ∫ w` (or its `u`-dependent analogue).
    pub diagonal: Complex64,
}

impl ThetaLimit {
    pub fn value(&self) -> Complex64 {
        self.shell + self.diagonal
    }
}

/// `∫∫ f(y₁, y₂) δ(‖y₁‖² − ‖y₂‖²) dy₁ dy₂` by polar coordinates in `y₂`
/// and the shell rule in `y₁`.
pub fn shell_double_integral(pieces: &[ComplexGaussian], quad: &ShellQuadrature) -> Result<Complex64> {
    let d = quad.d();
    for f in pieces {
        if f.dim() != 2 * d {
            return Err(BoltzError::Dimension {
                expected: 2 * d,
                found: f.dim(),
            });
        }
    }
    let eval = |z: &[f64]| -> Complex64 { pieces.iter().map(|f| f.eval_unchecked(z)).sum() };
    let radial = |rho: f64| -> Result<Complex64> {
        if rho == 0.0 {
            return Ok(Complex64::new(0.0, 0.0));
        }
        let mut z = vec![0.0; 2 * d];
        let mut acc = NeumaierSum::new();
        for (w2, wt2) in quad.nodes().iter().zip(quad.weights()) {
            let y2: Vec<f64> = w2.iter().map(|c| rho * c).collect();
            z[d..].copy_from_slice(&y2);
            let inner = shell_integral(
                quad,
                |y1| {
                    z[..d].copy_from_slice(y1);
                    eval(&z)
                },
                &y2,
            )?;
            acc.add(inner * *wt2);
        }
        Ok(acc.value() * rho.powi(d as i32 - 1))
    };
    let rho_max = radial_extent(&radial)?;
    let rule = composite_gauss_legendre(0.0, rho_max, &[], rho_max / 12.0, 16);
    let mut acc = NeumaierSum::new();
    for (rho, w) in rule.nodes.iter().zip(&rule.weights) {
        acc.add(radial(*rho)? * *w);
    }
    Ok(acc.value())
}

/// Smallest radius beyond which a radial profile is negligible.
fn radial_extent(radial: &dyn Fn(f64) -> Result<Complex64>) -> Result<f64> {
    let mut peak: f64 = 0.0;
    let step = 0.25;
    let mut last_big = step;
    for k in 1..=160 {
        let rho = k as f64 * step;
        let mag = radial(rho)?.norm();
        peak = peak.max(mag);
        if mag > 1e-17 * peak {
            last_big = rho;
        }
        if rho > last_big + 3.0 {
            break;
        }
    }
    Ok(last_big + 1.0)
}

/// `∫ f(y, y) dy` summed over pieces.
pub fn diagonal_integral(pieces: &[ComplexGaussian]) -> Result<Complex64> {
    let mut total = Complex64::new(0.0, 0.0);
    for f in pieces {
        if f.dim() % 2 != 0 {
            return Err(BoltzError::InvalidArgument("test function needs an even dimension".into()));
        }
        total += diagonal_restriction(f, f.dim() / 2)?.integral();
    }
    Ok(total)
}

/// Limit value `2 w(0) ∫∫ f δ(‖y₁‖²−‖y₂‖²) + ∫ f(y,y) dy · ∫ w` for a
/// `u`-independent test function.
pub fn theta_limit(
    pieces: &[ComplexGaussian],
    w_at_zero: f64,
    w_integral: f64,
    quad: &ShellQuadrature,
) -> Result<ThetaLimit> {
    let shell = if w_at_zero == 0.0 {
        Complex64::new(0.0, 0.0)
    } else {
        shell_double_integral(pieces, quad)? * (2.0 * w_at_zero)
    };
    Ok(ThetaLimit {
        shell,
        diagonal: diagonal_integral(pieces)? * w_integral,
    })
}

/// Limit value for a `(u, η)`-dependent test function:
/// `2 w(0) ∫ f(y₁,y₂,0,η) δ(…) + ∫ f(y,y,u,η) w(u) dy du dη`, with the
/// `u`-integral over `support` by composite Gauss-Legendre.
pub fn theta_limit_family<W>(
    test: &ThetaTestFunction,
    w: W,
    support: (f64, f64),
    quad: &ShellQuadrature,
) -> Result<ThetaLimit>
where
    W: Fn(f64) -> f64,
{
    let w0 = w(0.0);
    let shell = if w0 == 0.0 {
        Complex64::new(0.0, 0.0)
    } else {
        shell_double_integral(&test.profile(0.0, 0.0)?, quad)? * (2.0 * w0)
    };
    let (a, b) = support;
    let rule = composite_gauss_legendre(a, b, &[0.0], (b - a) / 16.0, 16);
    let mut acc = NeumaierSum::new();
    for (u, wt) in rule.nodes.iter().zip(&rule.weights) {
        let wu = w(*u);
        if wu != 0.0 {
            acc.add(diagonal_integral(&test.profile(*u, 0.0)?)? * (wu * wt));
        }
    }
    Ok(ThetaLimit {
        shell,
        diagonal: acc.value(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::modular::{psi_beta, GammaElement, RadialMajorant};
    use crate::numerics::{gaussian_line_rule, tensor_rule};
    use crate::symbolcalc::SymbolPair;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn test_gaussian(d: usize) -> ComplexGaussian {
        let n = 2 * d;
        let m = CMat::from_fn(n, n, |i, j| {
            if i == j {
                c(1.2 + 0.1 * i as f64, 0.3 - 0.1 * i as f64)
            } else {
                c(0.1, 0.05 * (i + j) as f64)
            }
        });
        let w = (0..n).map(|i| c(0.2 - 0.1 * i as f64, 0.4 + 0.3 * i as f64)).collect();
        ComplexGaussian::new(c(0.8, -0.3), m.symmetrized(), w).unwrap()
    }

    fn random_point(rng: &mut ChaCha8Rng, d: usize, vmin: f64, vmax: f64) -> GroupElement {
        let xi = (0..2 * d).map(|_| rng.random_range(-1.0..1.0)).collect();
        GroupElement::new(
            c(rng.random_range(-1.0..1.0), rng.random_range(vmin..vmax)),
            rng.random_range(0.0..2.0 * PI),
            xi,
        )
        .unwrap()
    }

    #[test]
    fn leading_term_at_large_v() {
        let f = ComplexGaussian::standard(4);
        let g = GroupElement::new(c(0.0, 100.0), 0.0, vec![0.0; 4]).unwrap();
        let th = theta_eval(&f, &g, THETA_EPS).unwrap();
        assert!((th.value - 100.0).norm() <= 1e-10 * 100.0, "{}", th.value);
        let zero = ComplexGaussian::new(c(0.0, 0.0), CMat::identity(4), vec![c(0.0, 0.0); 4]).unwrap();
        assert_eq!(theta_eval(&zero, &g, THETA_EPS).unwrap().value, c(0.0, 0.0));
    }

    #[test]
    fn lattice_sum_matches_direct_summation() {
        let f = test_gaussian(2);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..10 {
            let g = random_point(&mut rng, 2, 0.6, 2.0);
            let fast = theta_at(&f, &g, THETA_EPS).unwrap().value;
            let slow = theta_direct(&f, &g, 9.0).unwrap();
            assert!((fast - slow).norm() <= 1e-11 * slow.norm().max(1.0), "{fast} vs {slow}");
        }
    }

    #[test]
    fn gamma_invariance_for_both_generators() {
        let f = test_gaussian(2);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let gens = [GammaElement::translation(2), GammaElement::inversion(2)];
        for _ in 0..100 {
            let g = random_point(&mut rng, 2, 0.3, 3.0);
            let base = theta_eval(&f, &g, THETA_EPS).unwrap().value;
            for gen in &gens {
                let moved = gen.apply(&g).unwrap();
                let val = theta_eval(&f, &moved, THETA_EPS).unwrap().value;
                assert!((val - base).norm() <= 1e-8 * base.norm().max(1e-3), "{val} vs {base}");
            }
        }
    }

    #[test]
    fn gamma_invariance_against_unreduced_oracle() {
        // both sides summed directly at their own (moderate) points
        let f = test_gaussian(2);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10 {
            let g = random_point(&mut rng, 2, 0.8, 1.5);
            let lhs = theta_direct(&f, &g, 8.0).unwrap();
            for gen in [GammaElement::translation(2), GammaElement::inversion(2)] {
                let moved = gen.apply(&g).unwrap();
                if moved.v() < 0.3 {
                    continue;
                }
                let rhs = theta_direct(&f, &moved, 12.0).unwrap();
                assert!((lhs - rhs).norm() <= 1e-9 * lhs.norm().max(1e-3), "{lhs} vs {rhs}");
            }
        }
    }

    #[test]
    fn leading_order_for_large_v() {
        let f = test_gaussian(2);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        // off-diagonal pairs m₁ ≠ m₂ contribute O(v^{d/2} e^{−πλv/4}), which
        // drops below 1e-8 once v is a few dozen
        for _ in 0..50 {
            let g = random_point(&mut rng, 2, 40.0, 400.0);
            let full = theta_at(&f, &g, THETA_EPS).unwrap().value;
            let lead = theta_leading(&f, &g, THETA_EPS).unwrap().value;
            assert!((full - lead).norm() <= 1e-8, "{full} vs {lead}");
        }
        // at v ≥ 4 the gap shrinks exponentially
        let mut g = GroupElement::new(c(0.3, 4.0), 0.7, vec![0.2, 0.4, 0.5, 0.5]).unwrap();
        let mut gaps = Vec::new();
        for v in [4.0, 8.0, 16.0] {
            g.tau.im = v;
            let full = theta_at(&f, &g, THETA_EPS).unwrap().value;
            let lead = theta_leading(&f, &g, THETA_EPS).unwrap().value;
            gaps.push((full - lead).norm());
        }
        assert!(gaps[1] < 0.2 * gaps[0] && gaps[2] < 0.05 * gaps[1], "{gaps:?}");
    }

    #[test]
    fn domination_by_psi() {
        let f = test_gaussian(2);
        let fbar = RadialMajorant::new(3.0, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let ratio = |g: &GroupElement| {
            let th = theta_eval(&f, g, THETA_EPS).unwrap().value.norm();
            let red = reduce_to_fundamental(g).unwrap().reduced;
            let (psi, _) = psi_beta(red.tau, &red.xi, 1.0, 1.0, &fbar).unwrap();
            th / (1.0 + psi)
        };
        let fit: f64 = (0..1000)
            .map(|_| {
                let mut g = random_point(&mut rng, 2, 0.87, 30.0);
                g.tau.re = rng.random_range(-0.5..0.5);
                ratio(&g)
            })
            .fold(0.0, f64::max);
        assert!(fit.is_finite() && fit > 0.0);
        // held-out points deeper in the cusp obey the same bound
        for _ in 0..200 {
            let mut g = random_point(&mut rng, 2, 30.0, 3000.0);
            g.tau.re = rng.random_range(-0.5..0.5);
            assert!(ratio(&g) <= 1.5 * fit, "{} vs {fit}", ratio(&g));
        }
    }

    #[test]
    fn higher_order_theta_factorizes_for_products() {
        let d = 1;
        let f1 = test_gaussian(d);
        let f2 = ComplexGaussian::new(c(1.1, 0.2), CMat::from_real_diag(&[0.9, 1.4]), vec![c(0.1, 0.3), c(-0.2, 0.5)]).unwrap();
        // reorder (y₁, y'₁, y₂, y'₂) → (y₁, y₂, y'₁, y'₂)
        let joint = f1.tensor(&f2);
        let perm = [0usize, 2, 1, 3];
        let mut p = vec![0.0; 16];
        for (row, &col) in perm.iter().enumerate() {
            p[row * 4 + col] = 1.0;
        }
        let f = joint.pullback(&p, 4).unwrap();
        let g1 = GroupElement::new(c(0.3, 1.2), 0.0, vec![0.2, -0.4]).unwrap();
        let g2 = GroupElement::new(c(-0.7, 0.9), 0.0, vec![0.5, 0.1]).unwrap();
        let both = theta_k_at_zero_angle(&f, &[g1.clone(), g2.clone()], THETA_EPS).unwrap().value;
        let prod = theta_at(&f1, &g1, THETA_EPS).unwrap().value * theta_at(&f2, &g2, THETA_EPS).unwrap().value;
        assert!((both - prod).norm() <= 1e-9 * prod.norm(), "{both} vs {prod}");
    }

    #[test]
    fn theta_limit_closed_forms() {
        let q3 = ShellQuadrature::default_for(3).unwrap();
        let f3 = ComplexGaussian::standard(6);
        let lim = theta_limit(std::slice::from_ref(&f3), 1.0, 2.0, &q3).unwrap();
        assert!((lim.value().re - (2.0 + 2f64.powf(-1.5) * 2.0)).abs() < 1e-9, "{:?}", lim);
        assert!((lim.value().re - 2.70711).abs() < 1e-5);
        let q2 = ShellQuadrature::default_for(2).unwrap();
        let lim = theta_limit(&[ComplexGaussian::standard(4)], 1.0, 2.0, &q2).unwrap();
        assert!((lim.value().re - (PI + 1.0)).abs() < 1e-9);
        // weight vanishing at 0: only the diagonal term survives
        let lim = theta_limit(&[f3], 0.0, 2.0, &q3).unwrap();
        assert_eq!(lim.shell, c(0.0, 0.0));
        assert!((lim.diagonal.re - 2f64.powf(-1.5) * 2.0).abs() < 1e-12);
    }

    #[test]
    fn shell_term_matches_independent_radial_quadrature() {
        // 16π² ∫ρ³ e^{−2πρ²} dρ = 1 for the d = 3 isotropic Gaussian
        let rule = composite_gauss_legendre(0.0, 6.0, &[], 0.25, 20);
        let radial: f64 = rule
            .nodes
            .iter()
            .zip(&rule.weights)
            .map(|(r, w)| w * r.powi(3) * (-2.0 * PI * r * r).exp())
            .sum();
        let want = 16.0 * PI * PI * radial * 0.5;
        let got = shell_double_integral(&[ComplexGaussian::standard(6)], &ShellQuadrature::default_for(3).unwrap()).unwrap();
        assert!((got.re - want).abs() < 1e-10, "{got} vs {want}");
    }

    #[test]
    fn odd_test_function_has_no_shell_term() {
        let g = ComplexGaussian::diagonal(c(1.0, 0.0), &[1.0, 0.8, 1.1, 0.9], vec![c(0.0, 0.0); 4]).unwrap();
        let plus = g.shifted(&[0.4, -0.2, 0.0, 0.0]);
        let minus = plus.pullback(&[-1.0, 0.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0], 4).unwrap();
        let pieces = [plus, minus.scaled(c(-1.0, 0.0))];
        let shell = shell_double_integral(&pieces, &ShellQuadrature::default_for(2).unwrap()).unwrap();
        assert!(shell.norm() < 1e-13, "{shell}");
    }

    fn order2_fixture(kind: TestKind, t: f64) -> ThetaTestFunction {
        let pair = SymbolPair::isotropic(2);
        let tr = PairTransforms::new(&pair, t).unwrap();
        ThetaTestFunction::order2(kind, &tr, &GaussianPotential::default(), t, LIGHT2_INNER_ORDER).unwrap()
    }

    #[test]
    fn light_slice_at_zero_is_plain_gaussian_product() {
        let t = 0.5;
        let f = order2_fixture(TestKind::Light, t);
        let pair = SymbolPair::isotropic(2);
        let tr = PairTransforms::new(&pair, t).unwrap();
        let w2 = potential_squared(&GaussianPotential::default(), 2).unwrap();
        let eta = [0.3, -0.2];
        let pieces = f.slice(0.0, &eta).unwrap();
        assert_eq!(pieces.len(), 1);
        for z in [[0.1, 0.2, -0.3, 0.4], [0.5, -0.1, 0.0, 0.7]] {
            let got = pieces[0].eval(&z).unwrap();
            let d = [z[2] - z[0], z[3] - z[1]];
            let want = t
                * w2.eval(&d).unwrap()
                * tr.a_tilde.eval(&[eta[0], eta[1], z[2], z[3]]).unwrap()
                * tr.b_tilde.eval(&[-eta[0], -eta[1], z[2], z[3]]).unwrap();
            assert!((got - want).norm() < 1e-14, "{got} vs {want}");
        }
        assert!(f.slice(0.6, &eta).unwrap().is_empty());
    }

    #[test]
    fn light2_inner_integral_on_diagonal() {
        // y₁ = y₂: the phase is 1 and the inner integral is 2(t−|u|)·½
        let t = 0.5;
        let u = 0.2;
        let f = order2_fixture(TestKind::Light2, t);
        let eta = [0.4, 0.1];
        let pieces = f.slice(u, &eta).unwrap();
        let pair = SymbolPair::isotropic(2);
        let tr = PairTransforms::new(&pair, t).unwrap();
        let y = [0.3, -0.6];
        let z = [y[0], y[1], y[0], y[1]];
        let got: Complex64 = pieces.iter().map(|p| p.eval(&z).unwrap()).sum();
        let want = (t - u)
            * tr.a_tilde.eval(&[eta[0], eta[1], y[0], y[1]]).unwrap()
            * tr.b_tilde.eval(&[-eta[0], -eta[1], y[0], y[1]]).unwrap();
        assert!((got - want).norm() < 1e-13 * want.norm(), "{got} vs {want}");
        // off-diagonal: compare the inner integral with a fine midpoint rule
        let z = [0.3, -0.6, -0.2, 0.5];
        let got: Complex64 = pieces.iter().map(|p| p.eval(&z).unwrap()).sum();
        let dy = [z[2] - z[0], z[3] - z[1]];
        let dot = eta[0] * dy[0] + eta[1] * dy[1];
        let n = 20000;
        let (lo, hi) = (u, 2.0 * t - u);
        let h = (hi - lo) / n as f64;
        let inner: Complex64 = (0..n).map(|k| e(0.5 * (u - (lo + (k as f64 + 0.5) * h)) * dot) * h).sum();
        let w2 = potential_squared(&GaussianPotential::default(), 2).unwrap();
        let want = 0.5
            * inner
            * w2.eval(&dy).unwrap()
            * tr.a_tilde.eval(&[eta[0], eta[1], z[0], z[1]]).unwrap()
            * tr.b_tilde.eval(&[-eta[0], -eta[1], z[2], z[3]]).unwrap();
        assert!((got - want).norm() < 1e-8 * want.norm(), "{got} vs {want}");
    }

    /// `∫ dη Θ_{f(·,u,η)}(g (1, (0, ½r^dη)))` by tensor quadrature in `η`.
    fn f_r_brute(test: &ThetaTestFunction, g: &GroupElement, u: f64, r: f64) -> Complex64 {
        let d = test.d();
        let line = gaussian_line_rule(28, 0.8);
        let (pts, wts) = tensor_rule(&vec![line; d]);
        let mut acc = NeumaierSum::new();
        for (eta, w) in pts.iter().zip(&wts) {
            let mut xi = vec![0.0; 2 * d];
            for i in 0..d {
                xi[d + i] = 0.5 * r.powi(d as i32) * eta[i];
            }
            let h = GroupElement::new(c(0.0, 1.0), 0.0, xi).unwrap();
            let gh = crate::modular::group_mul(g, &h).unwrap();
            let pieces = test.slice(u, eta).unwrap();
            acc.add(theta_eval_sum(&pieces, &gh, THETA_EPS).unwrap().value * *w);
        }
        acc.value()
    }

    #[test]
    fn f_r_profile_matches_eta_quadrature() {
        let r = 0.6;
        for (kind, u) in [(TestKind::Light, 0.15), (TestKind::Light, -0.2), (TestKind::Light2, 0.1)] {
            let test = order2_fixture(kind, 0.5);
            for g in [
                GroupElement::horocycle(0.31, 0.7, &[-0.41, -0.73]).unwrap(),
                GroupElement::new(c(0.2, 1.1), 0.9, vec![0.1, -0.3, 0.25, 0.6]).unwrap(),
            ] {
                let closed = theta_eval_sum(&test.profile(u, r).unwrap(), &g, THETA_EPS).unwrap().value;
                let brute = f_r_brute(&test, &g, u, r);
                assert!((closed - brute).norm() <= 1e-7 * brute.norm().max(1e-6), "{kind:?} φ={} {closed} vs {brute}", g.phi);
            }
        }
    }

    #[test]
    fn f_r_converges_to_f_0() {
        let test = order2_fixture(TestKind::Light, 0.5);
        let g = GroupElement::new(c(0.2, 1.1), 0.0, vec![0.1, -0.3, 0.25, 0.6]).unwrap();
        let u = 0.1;
        let f0 = theta_eval_sum(&test.profile(u, 0.0).unwrap(), &g, THETA_EPS).unwrap().value;
        let devs: Vec<f64> = [0.4, 0.2, 0.1]
            .iter()
            .map(|&r| (theta_eval_sum(&test.profile(u, r).unwrap(), &g, THETA_EPS).unwrap().value - f0).norm())
            .collect();
        assert!(devs[0] > devs[1] && devs[1] > devs[2], "{devs:?}");
        let slope = (devs[2] / devs[0]).ln() / (0.25f64).ln();
        assert!(slope >= 2.0 - 0.3, "slope {slope}, {devs:?}");
    }

    #[test]
    fn horocycle_mean_of_zero_weight_is_zero() {
        let exp = HorocycleExperiment::new(vec![0.1, 0.2], 0.5, 0.0, (-1.0, 1.0)).unwrap();
        let m = horocycle_mean(&exp, |_| Ok(Vec::new())).unwrap();
        assert_eq!(m.value, c(0.0, 0.0));
    }

    #[test]
    fn horocycle_mean_matches_one_dimensional_theta_product() {
        // for f = exp(−π‖z‖²) at x = 0 the theta function is |θ(τ)|^{2}
        // per coordinate with θ(τ) = Σ e^{iπτ(m+α)²}
        let alpha = [2f64.sqrt().fract(), 3f64.sqrt().fract()];
        let r = 0.5;
        let exp = HorocycleExperiment::new(vec![-alpha[0], -alpha[1]], r, 0.0, (-1.0, 1.0)).unwrap();
        let f = ComplexGaussian::standard(4);
        let got = horocycle_mean(&exp, |_| Ok(vec![f.clone()])).unwrap().value;
        let rule = exp.rule();
        let mut want = 0.0;
        for (u, w) in rule.nodes.iter().zip(&rule.weights) {
            let tau = c(*u, r * r);
            let mut prod = 1.0;
            for a in alpha {
                let th: Complex64 = (-40..=40)
                    .map(|m| {
                        let z = m as f64 + a;
                        (Complex64::i() * PI * tau * z * z).exp()
                    })
                    .sum();
                prod *= th.norm_sqr();
            }
            want += w * prod * r * r;
        }
        assert!((got.re - want).abs() <= 1e-9 * want, "{got} vs {want}");
        assert!(got.im.abs() <= 1e-9 * want);
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(64))]
        #[test]
        fn gamma_invariance_holds_at_random_points(
            u in -1.0f64..1.0,
            v in 0.3f64..3.0,
            phi in 0.0f64..(2.0 * PI),
            xi in proptest::collection::vec(-1.0f64..1.0, 4),
        ) {
            let f = test_gaussian(2);
            let g = GroupElement::new(c(u, v), phi, xi).unwrap();
            let base = theta_eval(&f, &g, THETA_EPS).unwrap().value;
            for gen in [GammaElement::translation(2), GammaElement::inversion(2)] {
                let moved = theta_eval(&f, &gen.apply(&g).unwrap(), THETA_EPS).unwrap().value;
                proptest::prop_assert!((moved - base).norm() <= 1e-8 * base.norm().max(1e-3));
            }
        }
    }
}
