//! Quasi-momenta, Diophantine diagnostics, lattice windows, Bloch-projected
//! pairings and the Floquet-Bloch matrix oracle.

use std::f64::consts::PI;

use ndarray::Array2;
use ndarray_linalg::{Eigh, UPLO};
use num_complex::Complex64;

use crate::error::{BoltzError, Result};
use crate::lattice::upper_gamma_half_integer;
use crate::numerics::{gaussian_line_rule, tensor_rule, NeumaierSum};
use crate::phasespace::ScalingParams;
use crate::symbolcalc::{Block, ComplexGaussian, GaussianPotential};

/// `frac(√2, √3)` for `d = 2`, `frac(√2, √3, √5)` for `d = 3`.
pub fn preset_alpha(d: usize) -> Result<Vec<f64>> {
    let roots = [2f64, 3.0, 5.0];
    if !(2..=3).contains(&d) {
        return Err(BoltzError::InvalidArgument(format!(
            "no quasi-momentum preset for d = {d}"
        )));
    }
    Ok(roots[..d].iter().map(|x| x.sqrt().fract()).collect())
}

/// Quasi-momentum `α ∈ [0,1)ᵈ`, optionally with its Diophantine diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct QuasiMomentum {
    alpha: Vec<f64>,
    estimate: Option<DiophantineEstimate>,
}

impl QuasiMomentum {
    pub fn new(alpha: Vec<f64>) -> Result<Self> {
        if alpha.is_empty() {
            return Err(BoltzError::InvalidArgument("empty quasi-momentum".into()));
        }
        if let Some(a) = alpha.iter().find(|a| !(0.0..1.0).contains(*a)) {
            return Err(BoltzError::InvalidArgument(format!(
                "quasi-momentum components must lie in [0, 1), got {a}"
            )));
        }
        Ok(Self {
            alpha,
            estimate: None,
        })
    }

    pub fn preset(d: usize) -> Result<Self> {
        Self::new(preset_alpha(d)?)
    }

    /// Attach a Diophantine estimate computed up to denominator `q_max`.
    pub fn estimated(mut self, q_max: u64) -> Result<Self> {
        self.estimate = Some(diophantine_estimate(&self.alpha, q_max)?);
        Ok(self)
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn d(&self) -> usize {
        self.alpha.len()
    }

    pub fn estimate(&self) -> Option<&DiophantineEstimate> {
        self.estimate.as_ref()
    }

    pub fn kappa_hat(&self) -> Option<f64> {
        self.estimate.as_ref().map(|e| e.kappa_hat)
    }

    pub fn independent(&self) -> Option<bool> {
        self.estimate.as_ref().map(|e| e.independent)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiophantineEstimate {
    /// Fitted type; infinite when some `qα` is integral.
    pub kappa_hat: f64,
    /// `(1, αᵀ)` passed the integer-relation screen.
    pub independent: bool,
    /// The relation `k₀ + Σ kⱼαⱼ ≈ 0` found, if any.
    pub relation: Option<Vec<i64>>,
    /// Best-approximation records `(q, max_j ‖qαⱼ‖)` used in the fit.
    pub records: Vec<(u64, f64)>,
}

/// Height and tolerance of the integer-relation screen.
pub const RELATION_HEIGHT: i64 = 24;
pub const RELATION_TOL: f64 = 1e-10;

fn dist_to_int(x: f64) -> f64 {
    (x - x.round()).abs()
}

/// Least-squares fit of `max_j ‖qαⱼ‖ ≈ C q^{1−κ}` over the successive
/// best-approximation records with `q ≥ 10`, clamped below at the
/// Dirichlet value `1 + 1/d`. Also screens `(1, αᵀ)` for integer
/// relations of height up to [`RELATION_HEIGHT`].
pub fn diophantine_estimate(alpha: &[f64], q_max: u64) -> Result<DiophantineEstimate> {
    if q_max < 10 {
        return Err(BoltzError::InvalidArgument(format!("q_max must be at least 10, got {q_max}")));
    }
    let d = alpha.len();
    let relation = integer_relation(alpha, RELATION_HEIGHT, RELATION_TOL);
    let mut records = Vec::new();
    let mut best = f64::INFINITY;
    for q in 1..=q_max {
        let delta = alpha
            .iter()
            .map(|a| dist_to_int(q as f64 * a))
            .fold(0.0, f64::max);
        if delta < best {
            best = delta;
            records.push((q, delta));
            if delta < 1e-13 {
                break;
            }
        }
    }
    let exact = records.last().is_some_and(|r| r.1 < 1e-13);
    let kappa_hat = if exact {
        f64::INFINITY
    } else {
        let pts: Vec<(f64, f64)> = records
            .iter()
            .filter(|r| r.0 >= 10)
            .map(|&(q, dl)| ((q as f64).ln(), dl.ln()))
            .collect();
        let dirichlet = 1.0 + 1.0 / d as f64;
        if pts.len() < 2 {
            dirichlet
        } else {
            let n = pts.len() as f64;
            let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
            let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
            let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
            let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
            (1.0 - sxy / sxx).max(dirichlet)
        }
    };
    Ok(DiophantineEstimate {
        kappa_hat,
        independent: relation.is_none() && !exact,
        relation,
        records,
    })
}

/// Search for `(k₀, k)` with `0 < ‖k‖_∞ ≤ height` and `|k₀ + k·α| < tol`.
pub fn integer_relation(alpha: &[f64], height: i64, tol: f64) -> Option<Vec<i64>> {
    let d = alpha.len();
    let span = (2 * height + 1) as usize;
    let total = span.pow(d as u32);
    for idx in 0..total {
        let mut rest = idx;
        let mut k = Vec::with_capacity(d + 1);
        k.push(0);
        for _ in 0..d {
            k.push((rest % span) as i64 - height);
            rest /= span;
        }
        if k[1..].iter().all(|&x| x == 0) {
            continue;
        }
        let s: f64 = k[1..].iter().zip(alpha).map(|(&c, a)| c as f64 * a).sum();
        k[0] = -s.round() as i64;
        if (s + k[0] as f64).abs() < tol {
            return Some(k);
        }
    }
    None
}

/// Ball of lattice points `‖m + shift − center‖ ≤ radius` in lattice units.
#[derive(Debug, Clone, PartialEq)]
pub struct LatticeWindow {
    pub center: Vec<f64>,
    pub radius: f64,
    pub eps_trunc: f64,
    /// How the radius was chosen.
    pub formula: String,
}

/// Extra lattice units added to every automatically chosen radius.
pub const WINDOW_MARGIN: f64 = 5.0;

impl LatticeWindow {
    pub fn new(center: Vec<f64>, radius: f64, eps_trunc: f64) -> Result<Self> {
        if !(radius >= 0.0) || !(eps_trunc > 0.0) {
            return Err(BoltzError::InvalidArgument(format!(
                "window needs radius ≥ 0 and positive tolerance, got {radius}, {eps_trunc}"
            )));
        }
        Ok(Self {
            center,
            radius,
            eps_trunc,
            formula: "explicit".into(),
        })
    }

    /// Window for a momentum profile of width `σ` peaked at `p` (physical
    /// momentum units) and lattice spacing `h`:
    /// centre `p/h`, radius `(σ/h)√(ln(1/ε)/π) + ‖p‖/h + 5`.
    pub fn for_profile(p: &[f64], sigma: f64, h: f64, eps_trunc: f64) -> Result<Self> {
        if !(sigma > 0.0 && h > 0.0) {
            return Err(BoltzError::InvalidArgument("window needs positive width and spacing".into()));
        }
        let pn = p.iter().map(|x| x * x).sum::<f64>().sqrt();
        let radius = sigma / h * ((1.0 / eps_trunc).ln() / PI).sqrt() + pn / h + WINDOW_MARGIN;
        Ok(Self {
            center: p.iter().map(|x| x / h).collect(),
            radius,
            eps_trunc,
            formula: format!("(σ/h)·sqrt(ln(1/ε)/π) + ‖p‖/h + {WINDOW_MARGIN} with σ = {sigma:.6}, h = {h}"),
        })
    }

    pub fn d(&self) -> usize {
        self.center.len()
    }

    pub fn doubled(&self) -> Self {
        Self {
            radius: 2.0 * self.radius,
            formula: format!("2 × [{}]", self.formula),
            ..self.clone()
        }
    }

    pub fn with_radius(&self, radius: f64) -> Self {
        Self {
            radius,
            formula: format!("radius {radius}"),
            ..self.clone()
        }
    }

    /// Lattice points `m` with `‖m + shift − center‖ ≤ radius`, in
    /// lexicographic order.
    pub fn points(&self, shift: &[f64]) -> Vec<Vec<i64>> {
        let d = self.d();
        let c: Vec<f64> = self.center.iter().zip(shift).map(|(c, s)| c - s).collect();
        let r2 = self.radius * self.radius;
        let mut out: Vec<Vec<i64>> = vec![Vec::new()];
        for i in 0..d {
            let lo = (c[i] - self.radius).ceil() as i64;
            let hi = (c[i] + self.radius).floor() as i64;
            let mut next = Vec::new();
            for p in &out {
                let used: f64 = p.iter().zip(&c).map(|(&m, c)| (m as f64 - c).powi(2)).sum();
                for m in lo..=hi {
                    if used + (m as f64 - c[i]).powi(2) <= r2 {
                        let mut q = p.clone();
                        q.push(m);
                        next.push(q);
                    }
                }
            }
            out = next;
        }
        out
    }

    /// Bound on the mass of a Gaussian profile `exp(−π‖y − c‖²/s²)` (`c`,
    /// `s` in lattice units, total mass `mass`) that falls outside the
    /// window, less a slack of `slack` lattice units.
    pub fn gaussian_tail(&self, mass: f64, c: &[f64], s: f64, slack: f64) -> f64 {
        let d = self.d();
        let off = self.center.iter().zip(c).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let inner = (self.radius - (d as f64).sqrt() / 2.0 - off - slack).max(0.0);
        mass * upper_gamma_half_integer(d, PI * inner * inner / (s * s))
    }
}

/// Value with a truncation estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlochValue {
    pub value: Complex64,
    pub tail: f64,
}

/// Default Gauss-Hermite order per `η` axis.
pub const ETA_ORDER: usize = 24;

/// `P(η, y) = ã(η, y) · conj(b̂(η, y))` with `ã, b̂` the partial Fourier
/// transforms in position.
fn pairing_density(a: &ComplexGaussian, b: &ComplexGaussian) -> Result<ComplexGaussian> {
    a.partial_fourier(Block::First)?
        .product(&b.partial_fourier(Block::First)?.conj())
}

/// Tensor Gauss-Hermite rule in `η` adapted to the envelope of `g(η, ·)`.
pub(crate) fn eta_rule(env_center: &[f64], width: f64, order: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
    let d = env_center.len();
    let line = gaussian_line_rule(order, width);
    let (mut pts, w) = tensor_rule(&vec![line; d]);
    for p in pts.iter_mut() {
        for (x, c) in p.iter_mut().zip(env_center) {
            *x += c;
        }
    }
    (pts, w)
}

/// `⟨Π_α Op_{r,h}(a), Op_{r,h}(b)⟩_HS = h^d Σ_m ∫ ã(η, Y) conj(b̂(η, Y)) dη`,
/// `Y = h(m + α − ½r^{d−1}η)`. With `r = h = 1` this is the unscaled
/// pairing `Σ_m ∫ Â(m+α, y) conj(B̂(m+α, y)) dy`.
pub fn bloch_pairing(
    a: &ComplexGaussian,
    b: &ComplexGaussian,
    alpha: &QuasiMomentum,
    params: &ScalingParams,
    win: &LatticeWindow,
    eta_order: usize,
) -> Result<BlochValue> {
    let d = params.d;
    if alpha.d() != d || win.d() != d || a.dim() != 2 * d || b.dim() != 2 * d {
        return Err(BoltzError::Dimension {
            expected: d,
            found: alpha.d(),
        });
    }
    let p = pairing_density(a, b)?;
    let env = p.envelope();
    let (etas, wts) = eta_rule(&env.center[..d], env.width, eta_order);
    let (h, rd) = (params.h, params.r_dm1());
    let pts = win.points(alpha.alpha());
    let mut acc = NeumaierSum::new();
    let mut z = vec![0.0; 2 * d];
    for (eta, w) in etas.iter().zip(&wts) {
        let mut inner = NeumaierSum::new();
        for m in &pts {
            for i in 0..d {
                z[i] = eta[i];
                z[d + i] = h * (m[i] as f64 + alpha.alpha()[i] - 0.5 * rd * eta[i]);
            }
            inner.add(p.eval_unchecked(&z));
        }
        acc.add(inner.value() * *w);
    }
    // |P| ≤ peak·exp(−π‖ζ − c‖²/width²) over (η, y); the y-marginal in
    // lattice units has width width/h
    // lattice units has width width/h; the sampling shift ½r^{d−1}η is
    // covered by a slack of a few widths
    let s = env.width / h;
    let mass = env.peak * env.width.powi(d as i32) * s.powi(d as i32);
    let c: Vec<f64> = env.center[d..].iter().map(|y| y / h).collect();
    let eta_c = env.center[..d].iter().map(|x| x * x).sum::<f64>().sqrt();
    let slack = 0.5 * rd * (eta_c + 4.0 * env.width);
    let tail = h.powi(d as i32) * win.gaussian_tail(mass, &c, s, slack);
    if tail > win.eps_trunc {
        return Err(BoltzError::Truncation {
            tail,
            tolerance: win.eps_trunc,
            context: format!("Bloch pairing window radius {}", win.radius),
        });
    }
    Ok(BlochValue {
        value: acc.value() * h.powi(d as i32),
        tail,
    })
}

/// Window adapted to the momentum profile of `ã·conj(b̂)`.
pub fn pairing_window(
    a: &ComplexGaussian,
    b: &ComplexGaussian,
    params: &ScalingParams,
    eps_trunc: f64,
) -> Result<LatticeWindow> {
    let d = params.d;
    let env = pairing_density(a, b)?.envelope();
    LatticeWindow::for_profile(&env.center[d..], env.width, params.h, eps_trunc)
}

/// Oracle settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleSettings {
    /// Midpoint nodes per axis of the `η` cell `[−½r^{1−d}, ½r^{1−d}]ᵈ`.
    pub cell_nodes: usize,
    /// Largest allowed relative kernel weight on the window boundary.
    pub boundary_tol: f64,
}

impl Default for OracleSettings {
    fn default() -> Self {
        Self {
            cell_nodes: 14,
            boundary_tol: 1e-9,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleValue {
    pub value: Complex64,
    /// Largest kernel entry on the outermost window shell relative to the
    /// largest entry overall.
    pub boundary_mass: f64,
}

/// `H_{m,m'} = ½‖m+β‖² δ + λ' r^d Ŵ(r(m−m'))` on the window around `β`.
pub fn bloch_hamiltonian(
    points: &[Vec<i64>],
    beta: &[f64],
    params: &ScalingParams,
    potential: &GaussianPotential,
) -> Array2<f64> {
    let n = points.len();
    let d = params.d;
    let coupling = params.lambda_prime() * params.r.powi(d as i32);
    let mut h = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        let e: f64 = points[i].iter().zip(beta).map(|(&m, b)| (m as f64 + b).powi(2)).sum();
        h[[i, i]] = 0.5 * e;
        if coupling != 0.0 {
            for j in 0..n {
                let q: f64 = points[i]
                    .iter()
                    .zip(&points[j])
                    .map(|(&a, &b)| ((a - b) as f64 * params.r).powi(2))
                    .sum();
                h[[i, j]] += coupling * potential.fourier_norm_sq(q, d);
            }
        }
    }
    h
}

/// Eigen-decomposition `H = V diag(E) Vᵀ` of a real symmetric matrix.
pub fn eigh_real(h: &Array2<f64>) -> Result<(Vec<f64>, Array2<f64>)> {
    let (e, v) = h
        .eigh(UPLO::Lower)
        .map_err(|err| BoltzError::LinearAlgebra(format!("eigh failed: {err}")))?;
    Ok((e.to_vec(), v))
}

/// `U = exp(−2πi H T)` as a dense complex matrix.
pub fn propagator(h: &Array2<f64>, time: f64) -> Result<Array2<Complex64>> {
    let (e, v) = eigh_real(h)?;
    let n = e.len();
    let mut u = Array2::<Complex64>::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            let mut s = Complex64::new(0.0, 0.0);
            for k in 0..n {
                s += Complex64::from_polar(v[[i, k]] * v[[j, k]], -2.0 * PI * e[k] * time);
            }
            u[[i, j]] = s;
        }
    }
    Ok(u)
}

struct Fiber {
    points: Vec<Vec<i64>>,
    energies: Vec<f64>,
    vectors: Array2<f64>,
}

fn fiber(win: &LatticeWindow, beta: &[f64], params: &ScalingParams, potential: &GaussianPotential) -> Result<Fiber> {
    let points = win.points(beta);
    if points.is_empty() {
        return Err(BoltzError::Window {
            mass: 1.0,
            threshold: 0.0,
        });
    }
    let h = bloch_hamiltonian(&points, beta, params, potential);
    let (energies, vectors) = eigh_real(&h)?;
    Ok(Fiber {
        points,
        energies,
        vectors,
    })
}

/// Kernel of `Op(D_{r,h}s)` between fibres `α` and `β` (without the
/// constant prefactor), split into real and imaginary parts.
fn kernel(
    st: &ComplexGaussian,
    pa: &[Vec<i64>],
    pb: &[Vec<i64>],
    alpha: &[f64],
    beta: &[f64],
    eta: &[f64],
    params: &ScalingParams,
) -> (Array2<f64>, Array2<f64>, f64) {
    let d = params.d;
    let (na, nb) = (pa.len(), pb.len());
    let inv_rd = 1.0 / params.r_dm1();
    let mut re = Array2::<f64>::zeros((na, nb));
    let mut im = Array2::<f64>::zeros((na, nb));
    let mut z = vec![0.0; 2 * d];
    for i in 0..na {
        for j in 0..nb {
            for k in 0..d {
                let ma = pa[i][k] as f64;
                let mb = pb[j][k] as f64;
                z[k] = inv_rd * (ma - mb) + eta[k];
                z[d + k] = 0.5 * params.h * (ma + mb + alpha[k] + beta[k]);
            }
            let v = st.eval_unchecked(&z);
            re[[i, j]] = v.re;
            im[[i, j]] = v.im;
        }
    }
    let max_all = re.iter().zip(im.iter()).map(|(a, b)| a.hypot(*b)).fold(0.0, f64::max);
    (re, im, max_all)
}

fn boundary_weight(
    re: &Array2<f64>,
    im: &Array2<f64>,
    pa: &[Vec<i64>],
    pb: &[Vec<i64>],
    win: &LatticeWindow,
    alpha: &[f64],
    beta: &[f64],
) -> f64 {
    let shell = (win.radius - 1.5).max(0.0);
    let far = |m: &[i64], s: &[f64]| {
        m.iter()
            .zip(s)
            .zip(&win.center)
            .map(|((&m, s), c)| (m as f64 + s - c).powi(2))
            .sum::<f64>()
            .sqrt()
            > shell
    };
    let mut w: f64 = 0.0;
    for i in 0..pa.len() {
        for j in 0..pb.len() {
            if far(&pa[i], alpha) || far(&pb[j], beta) {
                w = w.max(re[[i, j]].hypot(im[[i, j]]));
            }
        }
    }
    w
}

/// `Vaᵀ X Vb`.
fn conjugate(va: &Array2<f64>, x: &Array2<f64>, vb: &Array2<f64>) -> Array2<f64> {
    va.t().dot(x).dot(vb)
}

/// `⟨Π_α U Op(D_{r,h}a) U†, Op(D_{r,h}b)⟩_HS` with `U = exp(−2πiHT')`,
/// `T' = t·h·r^{1−d}`, evaluated on a finite momentum window for each
/// coupling in `lambdas`. The intermediate quasi-momentum
/// `β = α − r^{d−1}η` runs over the midpoint rule on its cell.
pub fn matrix_oracle(
    alpha: &QuasiMomentum,
    params: &ScalingParams,
    lambdas: &[f64],
    a: &ComplexGaussian,
    b: &ComplexGaussian,
    potential: &GaussianPotential,
    win: &LatticeWindow,
    settings: &OracleSettings,
) -> Result<Vec<OracleValue>> {
    let d = params.d;
    if alpha.d() != d || win.d() != d {
        return Err(BoltzError::Dimension {
            expected: d,
            found: alpha.d(),
        });
    }
    let at = a.partial_fourier(Block::First)?;
    let bt = b.partial_fourier(Block::First)?;
    let time = params.time_box();
    let al = alpha.alpha();
    let fa: Vec<Fiber> = lambdas
        .iter()
        .map(|&l| fiber(win, al, &params.with_lambda(l), potential))
        .collect::<Result<_>>()?;
    let n = settings.cell_nodes.max(1);
    let cell = 1.0 / params.r_dm1();
    let nodes: Vec<f64> = (0..n).map(|k| (k as f64 + 0.5) / n as f64 * cell - 0.5 * cell).collect();
    let weight = (cell / n as f64).powi(d as i32);
    let mut totals = vec![NeumaierSum::new(); lambdas.len()];
    let mut boundary: f64 = 0.0;
    let mut peak: f64 = 0.0;
    let mut idx = vec![0usize; d];
    loop {
        let eta: Vec<f64> = idx.iter().map(|&k| nodes[k]).collect();
        let beta: Vec<f64> = al.iter().zip(&eta).map(|(a, e)| a - params.r_dm1() * e).collect();
        let points_b = win.points(&beta);
        let (are, aim, amax) = kernel(&at, &fa[0].points, &points_b, al, &beta, &eta, params);
        let (bre, bim, bmax) = kernel(&bt, &fa[0].points, &points_b, al, &beta, &eta, params);
        peak = peak.max(amax).max(bmax);
        boundary = boundary
            .max(boundary_weight(&are, &aim, &fa[0].points, &points_b, win, al, &beta))
            .max(boundary_weight(&bre, &bim, &fa[0].points, &points_b, win, al, &beta));
        for (li, &l) in lambdas.iter().enumerate() {
            let fb = fiber(win, &beta, &params.with_lambda(l), potential)?;
            let va = &fa[li].vectors;
            let vb = &fb.vectors;
            let (t_are, t_aim) = (conjugate(va, &are, vb), conjugate(va, &aim, vb));
            let (t_bre, t_bim) = (conjugate(va, &bre, vb), conjugate(va, &bim, vb));
            let mut acc = NeumaierSum::new();
            for (j, ej) in fa[li].energies.iter().enumerate() {
                for (k, ek) in fb.energies.iter().enumerate() {
                    let ph = Complex64::from_polar(1.0, -2.0 * PI * (ej - ek) * time);
                    let x = Complex64::new(t_are[[j, k]], t_aim[[j, k]]);
                    let y = Complex64::new(t_bre[[j, k]], -t_bim[[j, k]]);
                    acc.add(ph * x * y);
                }
            }
            totals[li].add(acc.value() * weight);
        }
        // advance the multi-index
        let mut k = 0;
        while k < d {
            idx[k] += 1;
            if idx[k] < n {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
        if k == d {
            break;
        }
    }
    let rel = if peak > 0.0 { boundary / peak } else { 0.0 };
    if rel > settings.boundary_tol {
        return Err(BoltzError::Window {
            mass: rel,
            threshold: settings.boundary_tol,
        });
    }
    let hd = params.h.powi(d as i32);
    Ok(totals
        .iter()
        .map(|t| OracleValue {
            value: t.value() * hd,
            boundary_mass: rel,
        })
        .collect())
}
