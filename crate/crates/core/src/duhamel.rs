//! Duhamel coefficients `𝓘_{ℓ,n}` (`n ≤ 2`) in Boltzmann-Grad scaling and
//! the assembled expansion coefficients `Q₀, Q₁, Q₂`.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::bloch::{LatticeWindow, QuasiMomentum, WINDOW_MARGIN};
use crate::error::{BoltzError, Result};
use crate::lattice::upper_gamma_half_integer;
use crate::numerics::{composite_gauss_legendre, e, gauss_legendre, gaussian_line_rule, NeumaierSum, QuadratureRule};
use crate::phasespace::{PairTransforms, ScalingParams};
use crate::symbolcalc::{ComplexGaussian, GaussianPotential, GaussianProduct, SymbolPair};
use crate::boltzmann::ShellQuadrature;
use crate::theta::{horocycle_mean, theta_limit_family, HorocycleExperiment, TestKind, ThetaTestFunction, LIGHT2_INNER_ORDER};

/// Where a value came from.
#[derive(Debug, Clone, PartialEq)]
pub struct DuhamelMeta {
    /// Index `ℓ`; `None` for assembled coefficients.
    pub l: Option<Term>,
    pub n: usize,
    pub r: f64,
    pub alpha: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DuhamelValue {
    pub value: Complex64,
    pub tail: f64,
    pub meta: DuhamelMeta,
}

/// Index `ℓ` of `𝓘_{ℓ,n}`, with `Plus` the combined `𝓘_{+,2}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Term {
    L0,
    L1,
    L2,
    Plus,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    /// Lattice sums with the time integrals done in closed form.
    Direct,
    /// Pointwise `𝓘_{ℓ,2}` on a 2-D Gauss-Legendre grid in `(s₁, s₂)`.
    TimeQuadrature,
    /// Horocycle averages of theta functions.
    Theta,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DuhamelSettings {
    /// Gauss-Hermite order per `η` axis.
    pub eta_order: usize,
    pub eps_trunc: f64,
    /// Relative cut on `|Ŵ(rΔ)|²` for the momentum transfers kept.
    pub eps_transfer: f64,
    /// Gauss-Legendre order per panel for time integrals.
    pub time_order: usize,
    /// Panels per unit of `(box side) × (largest retained frequency)`.
    pub time_panels_per_cycle: f64,
    pub potential: GaussianPotential,
    /// Theta route: horocycle panel width in units of `v = r²`.
    pub theta_panel_in_v: f64,
    pub theta_order: usize,
    pub light2_inner_order: usize,
}

impl Default for DuhamelSettings {
    fn default() -> Self {
        Self {
            eta_order: 24,
            eps_trunc: 1e-10,
            eps_transfer: 1e-16,
            time_order: 16,
            time_panels_per_cycle: 1.0,
            potential: GaussianPotential::default(),
            theta_panel_in_v: 1.0,
            theta_order: 12,
            light2_inner_order: LIGHT2_INNER_ORDER,
        }
    }
}

fn reflect_first(g: &ComplexGaussian, d: usize) -> Result<ComplexGaussian> {
    let n = 2 * d;
    let mut p = vec![0.0; n * n];
    for i in 0..n {
        p[i * n + i] = if i < d { -1.0 } else { 1.0 };
    }
    g.pullback(&p, n)
}

/// `ã(−η, y)`, `b̃(η, y)` and their product `P`, over `(η, y)`.
struct Densities {
    a: ComplexGaussian,
    b: ComplexGaussian,
    p: ComplexGaussian,
}

impl Densities {
    fn new(tr: &PairTransforms) -> Result<Self> {
        let a = reflect_first(&tr.a_tilde, tr.d)?;
        let p = a.product(&tr.b_tilde)?;
        Ok(Self {
            a,
            b: tr.b_tilde.clone(),
            p,
        })
    }
}

/// Window for the lattice sums over `m`: covers the `y`-envelopes of
/// `ã(−η, ·)`, `b̃(η, ·)` and their product.
pub fn duhamel_window(tr: &PairTransforms, params: &ScalingParams, eps_trunc: f64) -> Result<LatticeWindow> {
    let d = params.d;
    let dens = Densities::new(tr)?;
    let envp = dens.p.envelope();
    let mut win = LatticeWindow::for_profile(&envp.center[d..], envp.width, params.h, eps_trunc)?;
    let k = ((1.0 / eps_trunc).ln() / PI).sqrt();
    for g in [&dens.a, &dens.b] {
        let env = g.envelope();
        let off = env.center[d..]
            .iter()
            .zip(&win.center)
            .map(|(c, m)| (c / params.h - m).powi(2))
            .sum::<f64>()
            .sqrt();
        let need = off + env.width / params.h * k + WINDOW_MARGIN;
        if need > win.radius {
            win.radius = need;
        }
    }
    win.formula = format!("{} covering both factors", win.formula);
    Ok(win)
}

/// Tensor Gauss-Hermite rule in `η`, kept per axis so that separable
/// phases can be tabulated.
struct EtaGrid {
    d: usize,
    axes: Vec<QuadratureRule>,
}

impl EtaGrid {
    fn new(center: &[f64], width: f64, order: usize) -> Self {
        let line = gaussian_line_rule(order, width);
        let axes = center
            .iter()
            .map(|c| QuadratureRule {
                nodes: line.nodes.iter().map(|x| x + c).collect(),
                weights: line.weights.clone(),
            })
            .collect();
        Self { d: center.len(), axes }
    }

    fn len(&self) -> usize {
        self.axes.iter().map(|a| a.len()).product()
    }

    /// Node and weight for a flat index (last axis fastest).
    fn node(&self, mut k: usize, eta: &mut [f64]) -> f64 {
        let mut w = 1.0;
        for i in (0..self.d).rev() {
            let n = self.axes[i].len();
            let j = k % n;
            k /= n;
            eta[i] = self.axes[i].nodes[j];
            w *= self.axes[i].weights[j];
        }
        w
    }

    fn axis_index(&self, mut k: usize, out: &mut [usize]) {
        for i in (0..self.d).rev() {
            let n = self.axes[i].len();
            out[i] = k % n;
            k /= n;
        }
    }
}

/// Tables `A[m][η] = w_η ã(−η, Y_m)`, `B[m][η] = b̃(η, Y_m)` on the window
/// points, `Y_m = h(m + α + ½r^{d−1}η)`.
struct Tables {
    d: usize,
    alpha: Vec<f64>,
    points: Vec<Vec<i64>>,
    energies: Vec<f64>,
    grid: EtaGrid,
    a: Vec<Complex64>,
    b: Vec<Complex64>,
    /// Dense index over the bounding box of `points`.
    lo: Vec<i64>,
    side: Vec<usize>,
    lookup: Vec<usize>,
    mass_p: f64,
    window_tail: f64,
    p: ComplexGaussian,
    h: f64,
    rd: f64,
}

const ABSENT: usize = usize::MAX;

impl Tables {
    fn build(
        tr: &PairTransforms,
        alpha: &QuasiMomentum,
        params: &ScalingParams,
        win: &LatticeWindow,
        eta_order: usize,
    ) -> Result<Self> {
        let d = params.d;
        if tr.d != d || alpha.d() != d || win.d() != d {
            return Err(BoltzError::Dimension {
                expected: d,
                found: if tr.d != d { tr.d } else { alpha.d() },
            });
        }
        let dens = Densities::new(tr)?;
        let envp = dens.p.envelope();
        let grid = EtaGrid::new(&envp.center[..d], envp.width, eta_order);
        let al = alpha.alpha();
        let points = win.points(al);
        let energies = points
            .iter()
            .map(|m| m.iter().zip(al).map(|(&m, a)| (m as f64 + a).powi(2)).sum())
            .collect();
        let ne = grid.len();
        let rd = params.r_dm1();
        let h = params.h;
        let rows: Vec<(Vec<Complex64>, Vec<Complex64>)> = points
            .par_iter()
            .map(|m| {
                let mut eta = vec![0.0; d];
                let mut z = vec![0.0; 2 * d];
                let mut ra = Vec::with_capacity(ne);
                let mut rb = Vec::with_capacity(ne);
                for k in 0..ne {
                    let w = grid.node(k, &mut eta);
                    for i in 0..d {
                        z[i] = eta[i];
                        z[d + i] = h * (m[i] as f64 + al[i] + 0.5 * rd * eta[i]);
                    }
                    ra.push(dens.a.eval_unchecked(&z) * w);
                    rb.push(dens.b.eval_unchecked(&z));
                }
                (ra, rb)
            })
            .collect();
        let mut a = Vec::with_capacity(points.len() * ne);
        let mut b = Vec::with_capacity(points.len() * ne);
        for (ra, rb) in rows {
            a.extend(ra);
            b.extend(rb);
        }
        let mut lo = vec![i64::MAX; d];
        let mut hi = vec![i64::MIN; d];
        for m in &points {
            for i in 0..d {
                lo[i] = lo[i].min(m[i]);
                hi[i] = hi[i].max(m[i]);
            }
        }
        let side: Vec<usize> = if points.is_empty() {
            vec![0; d]
        } else {
            (0..d).map(|i| (hi[i] - lo[i] + 1) as usize).collect()
        };
        let mut lookup = vec![ABSENT; side.iter().product()];
        let mut out = Self {
            d,
            alpha: al.to_vec(),
            points,
            energies,
            grid,
            a,
            b,
            lo,
            side,
            lookup: Vec::new(),
            mass_p: 0.0,
            window_tail: 0.0,
            p: dens.p.clone(),
            h,
            rd,
        };
        for (idx, m) in out.points.iter().enumerate() {
            if let Some(flat) = out.flat(m) {
                lookup[flat] = idx;
            }
        }
        out.lookup = lookup;
        // |P| mass over (η, y) and the part the window misses
        let s = envp.width / h;
        out.mass_p = envp.peak * envp.width.powi(2 * d as i32);
        let c: Vec<f64> = envp.center[d..].iter().map(|y| y / h).collect();
        let eta_c = envp.center[..d].iter().map(|x| x * x).sum::<f64>().sqrt();
        let slack = 0.5 * rd * (eta_c + 4.0 * envp.width);
        out.window_tail = win.gaussian_tail(out.mass_p, &c, s, slack);
        Ok(out)
    }

    fn ne(&self) -> usize {
        self.grid.len()
    }

    fn energy(&self, m: &[i64]) -> f64 {
        m.iter().zip(&self.alpha).map(|(&m, a)| (m as f64 + a).powi(2)).sum()
    }

    fn flat(&self, m: &[i64]) -> Option<usize> {
        let mut k = 0usize;
        for i in 0..self.d {
            let off = m[i] - self.lo[i];
            if off < 0 || off as usize >= self.side[i] {
                return None;
            }
            k = k * self.side[i] + off as usize;
        }
        Some(k)
    }

    fn index(&self, m: &[i64]) -> Option<usize> {
        self.flat(m).map(|k| self.lookup[k]).filter(|&i| i != ABSENT)
    }

    fn row_a(&self, i: usize) -> &[Complex64] {
        let ne = self.ne();
        &self.a[i * ne..(i + 1) * ne]
    }

    fn row_b(&self, i: usize) -> &[Complex64] {
        let ne = self.ne();
        &self.b[i * ne..(i + 1) * ne]
    }

    /// `η ↦ P(η, Y_m)` as a Gaussian product over `ℝᵈ`.
    fn p_slice(&self, i: usize) -> Result<GaussianProduct> {
        let d = self.d;
        let n = 2 * d;
        let mut l = vec![0.0; n * d];
        let mut c = vec![0.0; n];
        for j in 0..d {
            l[j * d + j] = 1.0;
            l[(d + j) * d + j] = 0.5 * self.h * self.rd;
            c[d + j] = self.h * (self.points[i][j] as f64 + self.alpha[j]);
        }
        let mut g = GaussianProduct::new(d);
        g.factor(&self.p, &l, &c)?;
        Ok(g)
    }

    /// `∫ P(η, Y_m) dη` in closed form.
    fn p_integral(&self, i: usize) -> Result<Complex64> {
        Ok(self.p_slice(i)?.finish()?.integral())
    }

    /// `∫ P(η, Y_m) e(−½s|m+β|²) e(½s|m+β|²) dη`, `β = α + r^{d−1}η`,
    /// with both chirps carried as Gaussian factors.
    fn p_integral_chirped(&self, i: usize, s: f64) -> Result<Complex64> {
        let d = self.d;
        let v: Vec<f64> = (0..d).map(|j| self.points[i][j] as f64 + self.alpha[j]).collect();
        let v2: f64 = v.iter().map(|x| x * x).sum();
        let mut g = self.p_slice(i)?;
        for sign in [-1.0, 1.0] {
            let c = sign * 0.5 * s;
            let mut b = vec![0.0; d * d];
            for j in 0..d {
                b[j * d + j] = c * self.rd * self.rd;
            }
            let q: Vec<f64> = v.iter().map(|x| 2.0 * c * self.rd * x).collect();
            g.quadratic_phase(&b).linear_phase(&q).scale(e(c * v2));
        }
        Ok(g.finish()?.integral())
    }
}

/// Momentum transfers `Δ` with `|Ŵ(rΔ)|² ≥ ε|Ŵ(0)|²` and their weights.
struct Transfers {
    deltas: Vec<Vec<i64>>,
    w2: Vec<f64>,
    /// `Σ_Δ |Ŵ(rΔ)|²` over the kept set, and a bound on the rest.
    total: f64,
    tail: f64,
    max_abs: i64,
}

impl Transfers {
    fn new(params: &ScalingParams, potential: &GaussianPotential, eps: f64) -> Self {
        let d = params.d;
        let r = params.r;
        let sigma = potential.width;
        let radius = ((1.0 / eps).ln() / (2.0 * PI)).sqrt() / (r * sigma);
        let win = LatticeWindow::new(vec![0.0; d], radius, 1.0).expect("valid radius");
        let deltas = win.points(&vec![0.0; d]);
        let w2: Vec<f64> = deltas
            .iter()
            .map(|dl| {
                let q: f64 = dl.iter().map(|&x| (x as f64 * r).powi(2)).sum();
                potential.fourier_norm_sq(q, d).powi(2)
            })
            .collect();
        let total = w2.iter().sum();
        // |Ŵ(rΔ)|² = |Ŵ(0)|² exp(−π|Δ|²/s²) with s = 1/(√2 σ r)
        let w0 = potential.fourier_norm_sq(0.0, d).powi(2);
        let s = 1.0 / (2f64.sqrt() * sigma * r);
        let inner = (radius - (d as f64).sqrt() / 2.0).max(0.0);
        let tail = w0 * s.powi(d as i32) * upper_gamma_half_integer(d, PI * inner * inner / (s * s));
        let max_abs = deltas.iter().flat_map(|v| v.iter().map(|x| x.abs())).max().unwrap_or(0);
        Self {
            deltas,
            w2,
            total,
            tail,
            max_abs,
        }
    }
}

/// `∫_0^T ∫_0^{s₂} e(½ν(s₂−s₁)) ds₁ ds₂`.
pub fn psi_time(nu: f64, big_t: f64) -> Complex64 {
    let k = PI * nu;
    let x = k * big_t;
    if x.abs() < 1e-2 {
        // Σ (ikT)^n T² / (n+2)!
        let z = Complex64::new(0.0, x);
        let mut term = Complex64::new(0.5, 0.0);
        let mut acc = term;
        for n in 1..10 {
            term = term * z / (n as f64 + 2.0);
            acc += term;
        }
        return acc * big_t * big_t;
    }
    let i = Complex64::new(0.0, 1.0);
    -big_t / (i * k) - (Complex64::from_polar(1.0, x) - 1.0) / (k * k)
}

/// `∫_0^T e(½νs) ds`.
pub fn phi_time(nu: f64, big_t: f64) -> Complex64 {
    let k = PI * nu;
    let x = k * big_t;
    if x.abs() < 1e-2 {
        let z = Complex64::new(0.0, x);
        let mut term = Complex64::new(1.0, 0.0);
        let mut acc = term;
        for n in 1..10 {
            term = term * z / (n as f64 + 1.0);
            acc += term;
        }
        return acc * big_t;
    }
    (Complex64::from_polar(1.0, x) - 1.0) / Complex64::new(0.0, k)
}

/// Same as [`psi_time`] and [`phi_time`] with `e^{ikT}` supplied.
#[inline]
fn psi_with(k: f64, big_t: f64, eikt: Complex64) -> Complex64 {
    if (k * big_t).abs() < 1e-2 {
        return psi_time(k / PI, big_t);
    }
    let inv = 1.0 / k;
    Complex64::new(0.0, big_t * inv) - (eikt - 1.0) * (inv * inv)
}

#[inline]
fn phi_with(k: f64, big_t: f64, eikt: Complex64) -> Complex64 {
    if (k * big_t).abs() < 1e-2 {
        return phi_time(k / PI, big_t);
    }
    (eikt - 1.0) * Complex64::new(0.0, -1.0 / k)
}

fn meta(l: Option<Term>, n: usize, params: &ScalingParams, alpha: &QuasiMomentum) -> DuhamelMeta {
    DuhamelMeta {
        l,
        n,
        r: params.r,
        alpha: alpha.alpha().to_vec(),
    }
}

fn check_tail(tail: f64, eps: f64, what: &str) -> Result<()> {
    if tail > eps {
        return Err(BoltzError::Truncation {
            tail,
            tolerance: eps,
            context: what.into(),
        });
    }
    Ok(())
}

fn ordered_sum<F>(n: usize, term: F) -> Result<Complex64>
where
    F: Fn(usize) -> Result<Complex64> + Sync + Send,
{
    let parts: Vec<Result<Complex64>> = (0..n).into_par_iter().map(term).collect();
    let mut acc = NeumaierSum::new();
    for z in parts {
        acc.add(z?);
    }
    Ok(acc.value())
}

fn zero_order_sum(tab: &Tables, params: &ScalingParams) -> Result<Complex64> {
    Ok(ordered_sum(tab.points.len(), |i| tab.p_integral(i))? * params.h.powi(params.d as i32))
}

/// `𝓘_{0,0} = h^d Σ_m ∫ ã(−η, Y_m) b̃(η, Y_m) dη` for the un-evolved pair.
pub fn eval_i00(
    pair: &SymbolPair,
    alpha: &QuasiMomentum,
    params: &ScalingParams,
    win: &LatticeWindow,
    settings: &DuhamelSettings,
) -> Result<DuhamelValue> {
    let tr = PairTransforms::new(pair, 0.0)?;
    i00_from(&tr, alpha, params, win, settings)
}

fn i00_from(
    tr: &PairTransforms,
    alpha: &QuasiMomentum,
    params: &ScalingParams,
    win: &LatticeWindow,
    settings: &DuhamelSettings,
) -> Result<DuhamelValue> {
    let tab = Tables::build(tr, alpha, params, win, settings.eta_order)?;
    let tail = tab.window_tail * params.h.powi(params.d as i32);
    check_tail(tail, win.eps_trunc, "zeroth-order lattice window")?;
    Ok(DuhamelValue {
        value: zero_order_sum(&tab, params)?,
        tail,
        meta: meta(Some(Term::L0), 0, params, alpha),
    })
}

/// `𝓘_{1,1}(s₁)` or `𝓘_{0,1}(s₁)` for the un-evolved pair.
pub fn eval_i1(
    l: Term,
    s1: f64,
    pair: &SymbolPair,
    alpha: &QuasiMomentum,
    params: &ScalingParams,
    win: &LatticeWindow,
    settings: &DuhamelSettings,
) -> Result<DuhamelValue> {
    let tr = PairTransforms::new(pair, 0.0)?;
    let tab = Tables::build(&tr, alpha, params, win, settings.eta_order)?;
    i1_from(&tab, l, s1, alpha, params, win, settings)
}

fn i1_from(
    tab: &Tables,
    l: Term,
    s1: f64,
    alpha: &QuasiMomentum,
    params: &ScalingParams,
    win: &LatticeWindow,
    settings: &DuhamelSettings,
) -> Result<DuhamelValue> {
    let d = params.d;
    let w0 = settings.potential.fourier_norm_sq(0.0, d);
    let pref = params.r.powi(d as i32) * params.h.powi(d as i32) * w0;
    let value = match l {
        Term::L1 => ordered_sum(tab.points.len(), |i| {
            let ph = 0.5 * s1 * tab.energies[i];
            Ok(tab.p_integral(i)? * e(-ph) * e(ph))
        })?,
        Term::L0 => ordered_sum(tab.points.len(), |i| tab.p_integral_chirped(i, s1))?,
        _ => {
            return Err(BoltzError::InvalidArgument(format!(
                "first-order term needs ℓ ∈ {{0, 1}}, got {l:?}"
            )))
        }
    };
    let tail = pref * tab.window_tail;
    check_tail(tail, win.eps_trunc, "first-order lattice window")?;
    Ok(DuhamelValue {
        value: value * pref,
        tail,
        meta: meta(Some(l), 1, params, alpha),
    })
}

/// Pointwise second-order coefficient `𝓘_{ℓ,2}(s₁, s₂)` (or `𝓘_{+,2}`)
/// for the un-evolved pair.
#[allow(clippy::too_many_arguments)]
pub fn eval_i2(
    l: Term,
    s1: f64,
    s2: f64,
    pair: &SymbolPair,
    alpha: &QuasiMomentum,
    params: &ScalingParams,
    win: &LatticeWindow,
    settings: &DuhamelSettings,
) -> Result<DuhamelValue> {
    let tr = PairTransforms::new(pair, 0.0)?;
    let tab = Tables::build(&tr, alpha, params, win, settings.eta_order)?;
    let tf = Transfers::new(params, &settings.potential, settings.eps_transfer);
    let mut out = i2_from(&tab, &tf, l, &[(s1, s2, 1.0)], params, win.eps_trunc)?;
    out.meta = meta(Some(l), 2, params, alpha);
    Ok(out)
}

/// `Σ_j w_j 𝓘_{ℓ,2}(s₁ⱼ, s₂ⱼ)` for a list of time nodes, sharing tables.
fn i2_from(
    tab: &Tables,
    tf: &Transfers,
    l: Term,
    times: &[(f64, f64, f64)],
    params: &ScalingParams,
    eps: f64,
) -> Result<DuhamelValue> {
    let d = params.d;
    let rd = params.r_dm1();
    let ne = tab.ne();
    let pref = params.r.powi(2 * d as i32) * params.h.powi(d as i32);
    let parts: Vec<Complex64> = (0..tab.points.len())
        .into_par_iter()
        .map(|i2| {
            let m2 = &tab.points[i2];
            let (ra2, rb2) = (tab.row_a(i2), tab.row_b(i2));
            let e2 = tab.energies[i2];
            let mut eta = vec![0.0; d];
            let mut m1 = vec![0i64; d];
            let mut acc = NeumaierSum::new();
            for (dl, w2) in tf.deltas.iter().zip(&tf.w2) {
                for j in 0..d {
                    m1[j] = m2[j] - dl[j];
                }
                let e1 = tab.energy(&m1);
                let de = e2 - e1;
                let i1 = if l == Term::L1 { tab.index(&m1) } else { None };
                if l == Term::L1 && i1.is_none() {
                    continue;
                }
                let mut inner = NeumaierSum::new();
                for k in 0..ne {
                    tab.grid.node(k, &mut eta);
                    let kappa: f64 = rd * (0..d).map(|j| dl[j] as f64 * eta[j]).sum::<f64>();
                    let (amp, ph) = match l {
                        Term::L2 => (ra2[k] * rb2[k], times.iter().map(|&(s1, s2, w)| e(0.5 * (s2 - s1) * de) * w).sum::<Complex64>()),
                        Term::L0 => (ra2[k] * rb2[k], times.iter().map(|&(s1, s2, w)| e(-0.5 * (s1 - s2) * (de + 2.0 * kappa)) * w).sum()),
                        Term::L1 => (
                            tab.row_a(i1.unwrap())[k] * rb2[k],
                            times
                                .iter()
                                .map(|&(s1, s2, w)| e(-0.5 * s1 * de) * e(0.5 * s2 * (de + 2.0 * kappa)) * w)
                                .sum(),
                        ),
                        Term::Plus => (
                            ra2[k] * rb2[k],
                            times
                                .iter()
                                .map(|&(s1, s2, w)| {
                                    e(-0.5 * (s2 - s1).abs() * kappa) * e(0.5 * (s2 - s1) * (de + kappa)) * w
                                })
                                .sum(),
                        ),
                    };
                    inner.add(amp * ph);
                }
                acc.add(inner.value() * *w2);
            }
            acc.value()
        })
        .collect();
    let mut acc = NeumaierSum::new();
    for z in parts {
        acc.add(z);
    }
    let wsum: f64 = times.iter().map(|t| t.2.abs()).sum();
    let tail = pref * wsum * (tab.window_tail * tf.total + tab.mass_p * tf.tail);
    check_tail(tail, eps, "second-order lattice window")?;
    Ok(DuhamelValue {
        value: acc.value() * pref,
        tail,
        meta: DuhamelMeta {
            l: Some(l),
            n: 2,
            r: params.r,
            alpha: Vec::new(),
        },
    })
}

/// `Q₂` with the time integrals in closed form:
/// `4π² h^{−4} r^{2d} h^d Σ_η w Σ_{m₂,Δ} |Ŵ(rΔ)|² [Φ(−ΔE)Φ(ΔE+2κ) A_{m₁}B_{m₂}
/// − P_{m₂}(Ψ(ΔE) + Ψ(−(ΔE+2κ)))]`, `m₁ = m₂ − Δ`, `κ = r^{d−1}Δ·η`.
fn q2_direct(tab: &Tables, tf: &Transfers, params: &ScalingParams, eps: f64) -> Result<(Complex64, f64)> {
    let d = params.d;
    let rd = params.r_dm1();
    let big_t = params.time_box();
    let ne = tab.ne();
    let dmax = tf.max_abs;
    let span = (2 * dmax + 1) as usize;
    // e^{2πi r^{d−1} Δⱼ ηⱼ T} per axis
    let phase_tabs: Vec<Vec<Complex64>> = tab
        .grid
        .axes
        .iter()
        .map(|ax| {
            let mut t = Vec::with_capacity(span * ax.len());
            for dl in -dmax..=dmax {
                for x in &ax.nodes {
                    t.push(e(rd * dl as f64 * x * big_t));
                }
            }
            t
        })
        .collect();
    let mut axis_idx = vec![0usize; ne * d];
    let mut etas = vec![0.0; ne * d];
    for k in 0..ne {
        tab.grid.axis_index(k, &mut axis_idx[k * d..(k + 1) * d]);
        tab.grid.node(k, &mut etas[k * d..(k + 1) * d]);
    }
    let parts: Vec<Complex64> = (0..tab.points.len())
        .into_par_iter()
        .map(|i2| {
            let m2 = &tab.points[i2];
            let (ra2, rb2) = (tab.row_a(i2), tab.row_b(i2));
            let p2: Vec<Complex64> = ra2.iter().zip(rb2).map(|(a, b)| a * b).collect();
            let e2 = tab.energies[i2];
            let mut m1 = vec![0i64; d];
            let mut acc = NeumaierSum::new();
            for (dl, w2) in tf.deltas.iter().zip(&tf.w2) {
                for j in 0..d {
                    m1[j] = m2[j] - dl[j];
                }
                let de = e2 - tab.energy(&m1);
                let ra1 = tab.index(&m1).map(|i1| tab.row_a(i1));
                let psi_de = psi_time(de, big_t);
                let phi_mde = phi_time(-de, big_t);
                let base = e(0.5 * de * big_t);
                let offs: Vec<usize> = (0..d).map(|j| (dl[j] + dmax) as usize * tab.grid.axes[j].len()).collect();
                let mut inner = NeumaierSum::new();
                for k in 0..ne {
                    let idx = &axis_idx[k * d..(k + 1) * d];
                    let eta = &etas[k * d..(k + 1) * d];
                    let mut kappa = 0.0;
                    let mut eikt = base;
                    for j in 0..d {
                        kappa += dl[j] as f64 * eta[j];
                        eikt *= phase_tabs[j][offs[j] + idx[j]];
                    }
                    // k₁ = π(ΔE + 2κ)
                    let k1 = PI * (de + 2.0 * rd * kappa);
                    let mut term = -p2[k] * (psi_de + psi_with(-k1, big_t, eikt.conj()));
                    if let Some(ra1) = ra1 {
                        term += phi_mde * phi_with(k1, big_t, eikt) * ra1[k] * rb2[k];
                    }
                    inner.add(term);
                }
                acc.add(inner.value() * *w2);
            }
            acc.value()
        })
        .collect();
    let mut acc = NeumaierSum::new();
    for z in parts {
        acc.add(z);
    }
    let h = params.h;
    let pref = 4.0 * PI * PI * h.powi(-4) * params.r.powi(2 * d as i32) * h.powi(d as i32);
    // |Ψ| ≤ T²/2, |Φ| ≤ T
    let tail = pref * 2.0 * big_t * big_t * (tab.window_tail * tf.total + tab.mass_p * tf.tail);
    check_tail(tail, eps, "second-order lattice window")?;
    Ok((acc.value() * pref, tail))
}

/// Largest `|ν|` among the phases `e(½νs)` of the second-order sums.
fn max_frequency(tab: &Tables, tf: &Transfers, params: &ScalingParams) -> f64 {
    let emax = tab.energies.iter().cloned().fold(0.0, f64::max);
    let dm = tf.max_abs as f64 * (params.d as f64).sqrt();
    let eta_max = tab
        .grid
        .axes
        .iter()
        .map(|a| a.nodes.iter().map(|x| x.abs()).fold(0.0, f64::max))
        .fold(0.0, f64::max);
    let reach = emax.sqrt() + dm;
    reach * reach + 2.0 * params.r_dm1() * dm * eta_max * (params.d as f64).sqrt()
}

/// `Q₂` from pointwise `𝓘_{ℓ,2}` on Gauss-Legendre grids over the two
/// triangles and the full square of the time box.
fn q2_time_quadrature(
    tab: &Tables,
    tf: &Transfers,
    params: &ScalingParams,
    settings: &DuhamelSettings,
    eps: f64,
) -> Result<(Complex64, f64)> {
    let big_t = params.time_box();
    let cycles = 0.5 * max_frequency(tab, tf, params) * big_t;
    let panel = big_t / (cycles * settings.time_panels_per_cycle).ceil().max(1.0);
    let rule = composite_gauss_legendre(0.0, big_t, &[], panel, settings.time_order);
    let mut lower = Vec::new();
    let mut upper = Vec::new();
    let mut square = Vec::new();
    for (s2, w2) in rule.nodes.iter().zip(&rule.weights) {
        let inner = composite_gauss_legendre(0.0, *s2, &[], panel, settings.time_order);
        for (s1, w1) in inner.nodes.iter().zip(&inner.weights) {
            lower.push((*s1, *s2, w1 * w2));
            upper.push((*s2, *s1, w1 * w2));
        }
        for (s1, w1) in rule.nodes.iter().zip(&rule.weights) {
            square.push((*s1, *s2, w1 * w2));
        }
    }
    let i22 = i2_from(tab, tf, Term::L2, &lower, params, f64::INFINITY)?;
    let i02 = i2_from(tab, tf, Term::L0, &upper, params, f64::INFINITY)?;
    let i12 = i2_from(tab, tf, Term::L1, &square, params, f64::INFINITY)?;
    let h = params.h;
    let pref = -4.0 * PI * PI * h.powi(-4);
    let tail = 4.0 * PI * PI * h.powi(-4) * (i22.tail + i02.tail + i12.tail);
    check_tail(tail, eps, "second-order lattice window")?;
    Ok(((i22.value - i12.value + i02.value) * pref, tail))
}

/// `Q₂` through horocycle averages,
/// `4π² [⟨Θ_{F_r}⟩_{light2} − ⟨Θ_{F_r}⟩_{light}]`.
fn q2_theta(
    tr: &PairTransforms,
    alpha: &QuasiMomentum,
    params: &ScalingParams,
    settings: &DuhamelSettings,
) -> Result<(Complex64, f64)> {
    let (d, r, t) = (params.d, params.r, params.t);
    let light = ThetaTestFunction::order2(TestKind::Light, tr, &settings.potential, t, settings.light2_inner_order)?;
    let light2 = ThetaTestFunction::order2(TestKind::Light2, tr, &settings.potential, t, settings.light2_inner_order)?;
    let y: Vec<f64> = alpha.alpha().iter().map(|a| -a).collect();
    let mut exp = HorocycleExperiment::new(y, r, d as f64 - 2.0, (-t, t))?;
    exp.panel_in_v = settings.theta_panel_in_v;
    exp.order = settings.theta_order;
    let m1 = horocycle_mean(&exp, |u| light.profile(u, r))?;
    let m2 = horocycle_mean(&exp, |u| light2.profile(u, r))?;
    let c = 4.0 * PI * PI;
    Ok(((m2.value - m1.value) * c, c * (m1.tail + m2.tail)))
}

/// `r → 0` limit of the theta route for `Q₂`:
/// `4π² [lim⟨Θ⟩_{light2} − lim⟨Θ⟩_{light}]` with the weight `1` on `[−t, t]`.
pub fn q2_theta_limit(
    pair: &SymbolPair,
    t: f64,
    potential: &GaussianPotential,
    quad: &ShellQuadrature,
    inner_order: usize,
) -> Result<Complex64> {
    let tr = PairTransforms::new(pair, t)?;
    let mut total = Complex64::new(0.0, 0.0);
    for (kind, sign) in [(TestKind::Light2, 1.0), (TestKind::Light, -1.0)] {
        let f = ThetaTestFunction::order2(kind, &tr, potential, t, inner_order)?;
        total += theta_limit_family(&f, |_| 1.0, (-t, t), quad)?.value() * sign;
    }
    Ok(total * (4.0 * PI * PI))
}

/// Expansion coefficient `Q_n` (`n ≤ 2`) of `⟨Π_α U Op(a) U†, Op(b)⟩` in
/// the coupling `λ`, with `a` transported for time `t` and the `λ/h²`
/// rescaling included, so `Q_n` carries `h^{−2n}`.
pub fn assemble_q(
    n: usize,
    pair: &SymbolPair,
    alpha: &QuasiMomentum,
    params: &ScalingParams,
    method: Method,
    settings: &DuhamelSettings,
) -> Result<DuhamelValue> {
    let tr = PairTransforms::new(pair, params.t)?;
    let win = duhamel_window(&tr, params, settings.eps_trunc)?;
    assemble_q_in(n, &tr, alpha, params, &win, method, settings)
}

/// [`assemble_q`] on a given window, for transforms already built.
pub fn assemble_q_in(
    n: usize,
    tr: &PairTransforms,
    alpha: &QuasiMomentum,
    params: &ScalingParams,
    win: &LatticeWindow,
    method: Method,
    settings: &DuhamelSettings,
) -> Result<DuhamelValue> {
    let (value, tail) = match (n, method) {
        (0, _) => {
            let v = i00_from(tr, alpha, params, win, settings)?;
            (v.value, v.tail)
        }
        (1, _) => {
            let tab = Tables::build(tr, alpha, params, win, settings.eta_order)?;
            // the leading-order integrands do not depend on s₁
            let rule = gauss_legendre(settings.time_order).mapped(0.0, params.time_box());
            let mut acc = NeumaierSum::new();
            let mut tail = 0.0;
            for (s, w) in rule.nodes.iter().zip(&rule.weights) {
                let i11 = i1_from(&tab, Term::L1, *s, alpha, params, win, settings)?;
                let i01 = i1_from(&tab, Term::L0, *s, alpha, params, win, settings)?;
                acc.add((i01.value - i11.value) * *w);
                tail += w * (i11.tail + i01.tail);
            }
            let c = 2.0 * PI * params.h.powi(-2);
            (acc.value() * Complex64::new(0.0, c), tail * c)
        }
        (2, Method::Theta) => q2_theta(tr, alpha, params, settings)?,
        (2, m) => {
            let tab = Tables::build(tr, alpha, params, win, settings.eta_order)?;
            let tf = Transfers::new(params, &settings.potential, settings.eps_transfer);
            if m == Method::Direct {
                q2_direct(&tab, &tf, params, win.eps_trunc)?
            } else {
                q2_time_quadrature(&tab, &tf, params, settings, win.eps_trunc)?
            }
        }
        _ => {
            return Err(BoltzError::InvalidArgument(format!(
                "expansion coefficients are available for n ≤ 2, got {n}"
            )))
        }
    };
    Ok(DuhamelValue {
        value,
        tail,
        meta: meta(None, n, params, alpha),
    })
}

/// `Q₀ + λQ₁ + λ²Q₂` for each coupling.
pub fn expansion(q: &[DuhamelValue; 3], lambdas: &[f64]) -> Vec<Complex64> {
    lambdas
        .iter()
        .map(|&l| q[0].value + q[1].value * l + q[2].value * (l * l))
        .collect()
}
