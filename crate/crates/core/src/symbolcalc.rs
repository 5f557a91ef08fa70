//! Complex Gaussians `f(z) = c · exp(−π zᵀMz + wᵀz)` and their exact
//! transforms: integrals, partial Fourier transforms, the metaplectic
//! family `f_φ`, products and linear changes of variables.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{BoltzError, Result};
use ndarray_linalg::EigValsh;

use crate::smallmat::{real_cholesky, real_min_cholesky_pivot, CMat, SymmetricLdl};

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };
const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

/// Complex-Gaussian test function over `ℝⁿ`.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexGaussian {
    c: Complex64,
    m: CMat,
    w: Vec<Complex64>,
}

/// Which half of a `2d`-dimensional argument a partial transform acts on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Block {
    First,
    Second,
}

impl ComplexGaussian {
    /// Checked constructor: `M` must be exactly symmetric with
    /// positive-definite real part.
    pub fn new(c: Complex64, m: CMat, w: Vec<Complex64>) -> Result<Self> {
        if !m.is_square() {
            return Err(BoltzError::Dimension {
                expected: m.rows(),
                found: m.cols(),
            });
        }
        if w.len() != m.rows() {
            return Err(BoltzError::Dimension {
                expected: m.rows(),
                found: w.len(),
            });
        }
        if !m.is_exactly_symmetric() {
            return Err(BoltzError::InvalidArgument(
                "quadratic form must be symmetric".into(),
            ));
        }
        let pivot = real_min_cholesky_pivot(m.rows(), &m.real_part());
        if !(pivot > 0.0) {
            return Err(BoltzError::NotPositiveDefinite(format!(
                "smallest Cholesky pivot of Re M is {pivot:.3e}"
            )));
        }
        Ok(Self { c, m, w })
    }

    /// `c · exp(−π Σ zⱼ²/σⱼ² + wᵀz)` with widths σⱼ.
    pub fn diagonal(c: Complex64, widths: &[f64], w: Vec<Complex64>) -> Result<Self> {
        let diag: Vec<f64> = widths.iter().map(|s| 1.0 / (s * s)).collect();
        Self::new(c, CMat::from_real_diag(&diag), w)
    }

    /// `exp(−π‖z‖²)` in `n` dimensions.
    pub fn standard(n: usize) -> Self {
        Self {
            c: Complex64::new(1.0, 0.0),
            m: CMat::identity(n),
            w: vec![ZERO; n],
        }
    }

    pub fn dim(&self) -> usize {
        self.w.len()
    }

    pub fn amplitude(&self) -> Complex64 {
        self.c
    }

    pub fn quadratic(&self) -> &CMat {
        &self.m
    }

    pub fn linear(&self) -> &[Complex64] {
        &self.w
    }

    pub fn eval(&self, z: &[f64]) -> Result<Complex64> {
        if z.len() != self.dim() {
            return Err(BoltzError::Dimension {
                expected: self.dim(),
                found: z.len(),
            });
        }
        Ok(self.eval_unchecked(z))
    }

    #[inline]
    pub fn eval_unchecked(&self, z: &[f64]) -> Complex64 {
        let n = self.dim();
        let mut quad = ZERO;
        let mut lin = ZERO;
        for i in 0..n {
            let zi = z[i];
            let mut row = self.m[(i, i)] * zi;
            for j in 0..i {
                row += 2.0 * self.m[(i, j)] * z[j];
            }
            quad += row * zi;
            lin += self.w[i] * zi;
        }
        self.c * (-PI * quad + lin).exp()
    }

    pub fn eval_complex(&self, z: &[Complex64]) -> Result<Complex64> {
        if z.len() != self.dim() {
            return Err(BoltzError::Dimension {
                expected: self.dim(),
                found: z.len(),
            });
        }
        let quad = self.m.quad_form(z);
        let lin: Complex64 = self.w.iter().zip(z).map(|(a, b)| a * b).sum();
        Ok(self.c * (-PI * quad + lin).exp())
    }

    /// `∫ f = c · det(M)^{−1/2} · exp(wᵀM⁻¹w / 4π)`.
    pub fn integral(&self) -> Complex64 {
        if self.c == ZERO {
            return ZERO;
        }
        let ldl = SymmetricLdl::factor(&self.m)
            .expect("Re M is positive definite by construction");
        let minv_w = ldl.solve(&self.w);
        let expo: Complex64 = self.w.iter().zip(&minv_w).map(|(a, b)| a * b).sum();
        self.c * ldl.det_inv_sqrt() * (expo / (4.0 * PI)).exp()
    }

    /// Real envelope `|f(z)| = |c| exp(−π zᵀ(Re M)z + (Re w)ᵀz)`: its peak
    /// location, the widest axis `1/√λ_min(Re M)` and the mass `∫ |f|`.
    pub fn envelope(&self) -> Envelope {
        let n = self.dim();
        let re_m: Vec<f64> = self.m.real_part();
        let re_w: Vec<f64> = self.w.iter().map(|z| z.re).collect();
        let arr = ndarray::Array2::from_shape_vec((n, n), re_m.clone()).expect("square");
        let lambda_min = arr
            .eigvalsh(ndarray_linalg::UPLO::Lower)
            .map(|v| v.iter().cloned().fold(f64::INFINITY, f64::min))
            .unwrap_or(f64::NAN);
        let l = real_cholesky(n, &re_m).expect("Re M is positive definite by construction");
        let center: Vec<f64> = cholesky_solve(n, &l, &re_w).iter().map(|v| v / (2.0 * PI)).collect();
        let log_det: f64 = (0..n).map(|i| 2.0 * l[i * n + i].ln()).sum();
        let quad: f64 = 0.5 * re_w.iter().zip(&center).map(|(a, b)| a * b).sum::<f64>();
        Envelope {
            center,
            width: 1.0 / lambda_min.sqrt(),
            mass: self.c.norm() * (quad - 0.5 * log_det).exp(),
            peak: self.c.norm() * quad.exp(),
        }
    }

    /// Squared L² norm, `∫ |f|²`.
    pub fn norm_sq(&self) -> f64 {
        self.product(&self.conj())
            .expect("product of Gaussians stays Gaussian")
            .integral()
            .re
    }

    pub fn conj(&self) -> Self {
        Self {
            c: self.c.conj(),
            m: self.m.conj(),
            w: self.w.iter().map(|z| z.conj()).collect(),
        }
    }

    pub fn scaled(&self, s: Complex64) -> Self {
        Self {
            c: self.c * s,
            m: self.m.clone(),
            w: self.w.clone(),
        }
    }

    /// Pointwise product of two Gaussians on the same space.
    pub fn product(&self, other: &Self) -> Result<Self> {
        if other.dim() != self.dim() {
            return Err(BoltzError::Dimension {
                expected: self.dim(),
                found: other.dim(),
            });
        }
        Self::new(
            self.c * other.c,
            self.m.add(&other.m),
            self.w.iter().zip(&other.w).map(|(a, b)| a + b).collect(),
        )
    }

    /// `f(z₁) g(z₂)` on the direct sum of the argument spaces.
    pub fn tensor(&self, other: &Self) -> Self {
        let (n1, n2) = (self.dim(), other.dim());
        let m = CMat::from_fn(n1 + n2, n1 + n2, |i, j| {
            if i < n1 && j < n1 {
                self.m[(i, j)]
            } else if i >= n1 && j >= n1 {
                other.m[(i - n1, j - n1)]
            } else {
                ZERO
            }
        });
        let mut w = self.w.clone();
        w.extend_from_slice(&other.w);
        Self {
            c: self.c * other.c,
            m,
            w,
        }
    }

    /// `z ↦ f(P z)` for a real `n × k` matrix `P` (row-major), giving a
    /// Gaussian over `ℝᵏ`. `P` must have full column rank.
    pub fn pullback(&self, p: &[f64], k: usize) -> Result<Self> {
        let n = self.dim();
        if p.len() != n * k {
            return Err(BoltzError::Dimension {
                expected: n * k,
                found: p.len(),
            });
        }
        let pm = CMat::from_fn(n, k, |i, j| Complex64::new(p[i * k + j], 0.0));
        let m = pm.transpose().mul(&self.m).mul(&pm).symmetrized();
        let w = pm.transpose().mul_vec(&self.w);
        Self::new(self.c, m, w)
    }

    /// `z ↦ f(z − z₀)`.
    pub fn shifted(&self, z0: &[f64]) -> Self {
        let z0c: Vec<Complex64> = z0.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        let mz0 = self.m.mul_vec(&z0c);
        let quad: Complex64 = z0c.iter().zip(&mz0).map(|(a, b)| a * b).sum();
        let lin: Complex64 = self.w.iter().zip(&z0c).map(|(a, b)| a * b).sum();
        Self {
            c: self.c * (-PI * quad - lin).exp(),
            m: self.m.clone(),
            w: self.w.iter().zip(&mz0).map(|(a, b)| a + 2.0 * PI * b).collect(),
        }
    }

    /// `z ↦ f(z) · e(q·z)`.
    pub fn with_phase(&self, q: &[f64]) -> Self {
        Self {
            c: self.c,
            m: self.m.clone(),
            w: self
                .w
                .iter()
                .zip(q)
                .map(|(a, b)| a + 2.0 * PI * I * b)
                .collect(),
        }
    }

    /// `z ↦ f(−z)`.
    pub fn reflected(&self) -> Self {
        Self {
            c: self.c,
            m: self.m.clone(),
            w: self.w.iter().map(|z| -z).collect(),
        }
    }

    /// Fix the coordinates listed in `fixed` to the given real values and
    /// return the Gaussian in the remaining coordinates (in order).
    pub fn section(&self, fixed: &[usize], values: &[f64]) -> Result<Self> {
        let n = self.dim();
        let free: Vec<usize> = (0..n).filter(|i| !fixed.contains(i)).collect();
        let vals: Vec<Complex64> = values.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        let mff = self.m.select(&free, &free);
        let mfx = self.m.select(&free, fixed);
        let mxx = self.m.select(fixed, fixed);
        let cross = mfx.mul_vec(&vals);
        let w: Vec<Complex64> = free
            .iter()
            .zip(&cross)
            .map(|(&i, cr)| self.w[i] - 2.0 * PI * cr)
            .collect();
        let fixed_quad = mxx.quad_form(&vals);
        let fixed_lin: Complex64 = fixed.iter().zip(&vals).map(|(&i, v)| self.w[i] * v).sum();
        Self::new(self.c * (-PI * fixed_quad + fixed_lin).exp(), mff, w)
    }

    /// Integrate out the coordinates in `out`, keeping the rest in order.
    pub fn marginal(&self, out: &[usize]) -> Result<Self> {
        let n = self.dim();
        let keep: Vec<usize> = (0..n).filter(|i| !out.contains(i)).collect();
        let a = self.m.select(out, out);
        let b = self.m.select(out, &keep);
        let c = self.m.select(&keep, &keep);
        let wx: Vec<Complex64> = out.iter().map(|&i| self.w[i]).collect();
        let wz: Vec<Complex64> = keep.iter().map(|&i| self.w[i]).collect();
        let (amp, m, w) = schur_integrate(&a, &b, &c, &wx, &wz)?;
        Self::new(self.c * amp, m, w)
    }

    /// Partial Fourier transform `∫ f(x, y) e(−x·η) dx` in the chosen
    /// half of the variables; the transformed half keeps its position.
    pub fn partial_fourier(&self, block: Block) -> Result<Self> {
        let n = self.dim();
        if n % 2 != 0 {
            return Err(BoltzError::InvalidArgument(
                "partial Fourier transform needs an even dimension".into(),
            ));
        }
        let d = n / 2;
        let (x_idx, y_idx): (Vec<usize>, Vec<usize>) = match block {
            Block::First => ((0..d).collect(), (d..n).collect()),
            Block::Second => ((d..n).collect(), (0..d).collect()),
        };
        // joint variables: x (integrated) and ζ = (η, y)
        let a = self.m.select(&x_idx, &x_idx);
        let mut b = CMat::zeros(d, 2 * d);
        let mut c = CMat::zeros(2 * d, 2 * d);
        for i in 0..d {
            b[(i, i)] = I;
            for j in 0..d {
                b[(i, d + j)] = self.m[(x_idx[i], y_idx[j])];
                c[(d + i, d + j)] = self.m[(y_idx[i], y_idx[j])];
            }
        }
        let wx: Vec<Complex64> = x_idx.iter().map(|&i| self.w[i]).collect();
        let mut wz = vec![ZERO; d];
        wz.extend(y_idx.iter().map(|&i| self.w[i]));
        let (amp, m, w) = schur_integrate(&a, &b, &c, &wx, &wz)?;
        let out = match block {
            Block::First => Self::new(self.c * amp, m, w)?,
            Block::Second => {
                // reorder (η, y) back to (y, η)
                let perm: Vec<usize> = (d..n).chain(0..d).collect();
                let mm = m.select(&perm, &perm);
                let ww = perm.iter().map(|&i| w[i]).collect();
                Self::new(self.c * amp, mm, ww)?
            }
        };
        Ok(out)
    }

    /// The metaplectic family `f_φ` on `ℝᵈ × ℝᵈ`:
    /// `f_φ(y) = |sin φ|^{−d} ∫ e((½(‖y₁‖²+‖x₁‖²−‖y₂‖²−‖x₂‖²)cos φ − y₁·x₁ + y₂·x₂)/sin φ) f(x) dx`,
    /// with `f_0 = f` and `f_π = f(−·)`.
    pub fn metaplectic(&self, phi: f64) -> Result<Self> {
        MetaplecticKernel::new(self, phi)?.apply(self)
    }
}

/// Peak, widest scale and `L¹` mass of `|f|` for a complex Gaussian.
#[derive(Debug, Clone, PartialEq)]
pub struct Envelope {
    pub center: Vec<f64>,
    pub width: f64,
    pub mass: f64,
    pub peak: f64,
}

fn cholesky_solve(n: usize, l: &[f64], b: &[f64]) -> Vec<f64> {
    let mut y = b.to_vec();
    for i in 0..n {
        for k in 0..i {
            y[i] -= l[i * n + k] * y[k];
        }
        y[i] /= l[i * n + i];
    }
    for i in (0..n).rev() {
        for k in (i + 1)..n {
            y[i] -= l[k * n + i] * y[k];
        }
        y[i] /= l[i * n + i];
    }
    y
}

/// `∫ exp(−π(xᵀAx + 2xᵀBζ + ζᵀCζ) + w_xᵀx + w_ζᵀζ) dx` as
/// `(amplitude, M', w')` of a Gaussian in ζ.
fn schur_integrate(
    a: &CMat,
    b: &CMat,
    c: &CMat,
    wx: &[Complex64],
    wz: &[Complex64],
) -> Result<(Complex64, CMat, Vec<Complex64>)> {
    let ldl = SymmetricLdl::factor(a)?;
    let ainv_b = ldl.solve_mat(b);
    let ainv_wx = ldl.solve(wx);
    let m = c.sub(&b.transpose().mul(&ainv_b)).symmetrized();
    let bt_ainv_wx = ainv_b.transpose().mul_vec(wx);
    let w: Vec<Complex64> = wz.iter().zip(&bt_ainv_wx).map(|(p, q)| p - q).collect();
    let expo: Complex64 = wx.iter().zip(&ainv_wx).map(|(p, q)| p * q).sum();
    Ok((ldl.det_inv_sqrt() * (expo / (4.0 * PI)).exp(), m, w))
}

/// Precomputed pieces of `f ↦ f_φ` for a fixed quadratic form and angle,
/// reusable for many linear terms and amplitudes.
#[derive(Debug, Clone)]
pub struct MetaplecticKernel {
    mode: MetaplecticMode,
}

#[derive(Debug, Clone)]
enum MetaplecticMode {
    Identity,
    Parity,
    General {
        ldl: SymmetricLdl,
        m_phi: CMat,
        jsign: Vec<f64>,
        sin_phi: f64,
        prefactor: Complex64,
    },
}

impl MetaplecticKernel {
    pub fn new(f: &ComplexGaussian, phi: f64) -> Result<Self> {
        let n = f.dim();
        if n % 2 != 0 {
            return Err(BoltzError::InvalidArgument(
                "metaplectic transform needs an even dimension".into(),
            ));
        }
        let d = n / 2;
        let tau = 2.0 * PI;
        let phi = phi.rem_euclid(tau);
        let (s, co) = phi.sin_cos();
        // exact branches at multiples of π; sin φ is never exactly 0 in
        // floating point, so use a small angular tolerance instead
        let near = |target: f64| {
            let dist = (phi - target).abs();
            dist.min(tau - dist) < 1e-12
        };
        if near(0.0) {
            return Ok(Self {
                mode: MetaplecticMode::Identity,
            });
        }
        if near(PI) {
            return Ok(Self {
                mode: MetaplecticMode::Parity,
            });
        }
        let cot = co / s;
        let jsign: Vec<f64> = (0..n).map(|i| if i < d { 1.0 } else { -1.0 }).collect();
        // A = M − i cot φ J, B = i J / sin φ, C = −i cot φ J
        let mut a = f.m.clone();
        for i in 0..n {
            a[(i, i)] -= I * cot * jsign[i];
        }
        let ldl = SymmetricLdl::factor(&a)?;
        let ainv = ldl.inverse();
        // M_φ = −i cot J + J A⁻¹ J / sin² φ
        let mut m_phi = CMat::from_fn(n, n, |i, j| ainv[(i, j)] * (jsign[i] * jsign[j] / (s * s)));
        for i in 0..n {
            m_phi[(i, i)] -= I * cot * jsign[i];
        }
        let m_phi = m_phi.symmetrized();
        let prefactor = Complex64::new(s.abs().powf(-(d as f64)), 0.0) * ldl.det_inv_sqrt();
        Ok(Self {
            mode: MetaplecticMode::General {
                ldl,
                m_phi,
                jsign,
                sin_phi: s,
                prefactor,
            },
        })
    }

    /// Apply to a Gaussian sharing the quadratic form used to build the kernel.
    pub fn apply(&self, f: &ComplexGaussian) -> Result<ComplexGaussian> {
        match &self.mode {
            MetaplecticMode::Identity => Ok(f.clone()),
            MetaplecticMode::Parity => Ok(f.reflected()),
            MetaplecticMode::General {
                ldl,
                m_phi,
                jsign,
                sin_phi,
                prefactor,
            } => {
                let ainv_w = ldl.solve(&f.w);
                let expo: Complex64 = f.w.iter().zip(&ainv_w).map(|(p, q)| p * q).sum();
                // w_φ = −(i / sin φ) J A⁻¹ w
                let w: Vec<Complex64> = ainv_w
                    .iter()
                    .zip(jsign)
                    .map(|(v, s)| -I * v * (*s / *sin_phi))
                    .collect();
                let c = f.c * prefactor * (expo / (4.0 * PI)).exp();
                ComplexGaussian::new(c, m_phi.clone(), w).map_err(|e| {
                    BoltzError::Internal(format!("metaplectic transform lost definiteness: {e}"))
                })
            }
        }
    }
}

/// Accumulator for a product of Gaussian factors, each evaluated at an
/// affine image `P z + s` of a common variable `z ∈ ℝᵏ`. Individual
/// factors may be degenerate in `z`; only the finished product has to
/// have a positive-definite real part.
#[derive(Debug, Clone)]
pub struct GaussianProduct {
    c: Complex64,
    m: CMat,
    w: Vec<Complex64>,
}

impl GaussianProduct {
    pub fn new(k: usize) -> Self {
        Self {
            c: Complex64::new(1.0, 0.0),
            m: CMat::zeros(k, k),
            w: vec![ZERO; k],
        }
    }

    pub fn dim(&self) -> usize {
        self.w.len()
    }

    /// Multiply by `g(P z + s)` with `P` an `n × k` row-major matrix.
    pub fn factor(&mut self, g: &ComplexGaussian, p: &[f64], s: &[f64]) -> Result<&mut Self> {
        let (n, k) = (g.dim(), self.dim());
        if p.len() != n * k || s.len() != n {
            return Err(BoltzError::Dimension {
                expected: n * k,
                found: p.len(),
            });
        }
        let sc: Vec<Complex64> = s.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        let ms = g.m.mul_vec(&sc);
        let quad: Complex64 = sc.iter().zip(&ms).map(|(a, b)| a * b).sum();
        let lin: Complex64 = g.w.iter().zip(&sc).map(|(a, b)| a * b).sum();
        self.c *= g.c * (-PI * quad + lin).exp();
        for a in 0..k {
            for i in 0..n {
                let pia = p[i * k + a];
                if pia == 0.0 {
                    continue;
                }
                self.w[a] += pia * (g.w[i] - 2.0 * PI * ms[i]);
                for j in 0..n {
                    let gij = g.m[(i, j)];
                    for b in 0..k {
                        let pjb = p[j * k + b];
                        if pjb != 0.0 {
                            self.m[(a, b)] += pia * gij * pjb;
                        }
                    }
                }
            }
        }
        Ok(self)
    }

    /// Multiply by `e(zᵀ B z)` for a real `k × k` matrix `B` (row-major).
    pub fn quadratic_phase(&mut self, b: &[f64]) -> &mut Self {
        let k = self.dim();
        for i in 0..k {
            for j in 0..k {
                let sym = 0.5 * (b[i * k + j] + b[j * k + i]);
                if sym != 0.0 {
                    self.m[(i, j)] -= 2.0 * I * sym;
                }
            }
        }
        self
    }

    /// Multiply by `e(q·z)`.
    pub fn linear_phase(&mut self, q: &[f64]) -> &mut Self {
        for (w, x) in self.w.iter_mut().zip(q) {
            *w += 2.0 * PI * I * x;
        }
        self
    }

    pub fn scale(&mut self, s: Complex64) -> &mut Self {
        self.c *= s;
        self
    }

    pub fn finish(&self) -> Result<ComplexGaussian> {
        ComplexGaussian::new(self.c, self.m.symmetrized(), self.w.clone())
    }
}

/// Gaussian single-site potential `W(x) = A exp(−π‖x‖²/σ²)` with
/// `Ŵ(ξ) = A σᵈ exp(−π σ² ‖ξ‖²)`. The default is `A = σ = 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianPotential {
    pub amplitude: f64,
    pub width: f64,
}

impl Default for GaussianPotential {
    fn default() -> Self {
        Self {
            amplitude: 1.0,
            width: 1.0,
        }
    }
}

impl GaussianPotential {
    /// `Ŵ(s·y)`.
    #[inline]
    pub fn fourier(&self, scale: f64, y: &[f64]) -> f64 {
        let norm_sq: f64 = y.iter().map(|v| v * v).sum();
        self.fourier_norm_sq(scale * scale * norm_sq, y.len())
    }

    /// `Ŵ` at a point with squared norm `q`.
    #[inline]
    pub fn fourier_norm_sq(&self, q: f64, d: usize) -> f64 {
        let sigma = self.width;
        self.amplitude * sigma.powi(d as i32) * (-PI * sigma * sigma * q).exp()
    }

    /// `|Ŵ|²` as a Gaussian in the momentum transfer, as `(amplitude², width/√2)`.
    pub fn fourier_squared_width(&self) -> f64 {
        1.0 / (self.width * 2f64.sqrt())
    }
}

/// `Ŵ(s·y)` for the default potential `W(x) = exp(−π‖x‖²)`.
pub fn potential_fourier(scale: f64, y: &[f64]) -> f64 {
    GaussianPotential::default().fourier(scale, y)
}

/// Observable pair `(a, b)` over position × momentum.
#[derive(Debug, Clone, PartialEq)]
pub struct SymbolPair {
    pub a: ComplexGaussian,
    pub b: ComplexGaussian,
    pub d: usize,
}

impl SymbolPair {
    pub fn new(a: ComplexGaussian, b: ComplexGaussian) -> Result<Self> {
        if a.dim() != b.dim() || a.dim() % 2 != 0 {
            return Err(BoltzError::Dimension {
                expected: a.dim(),
                found: b.dim(),
            });
        }
        let d = a.dim() / 2;
        Ok(Self { a, b, d })
    }

    /// `a = b = exp(−π(‖x‖²+‖y‖²))`.
    pub fn isotropic(d: usize) -> Self {
        let g = ComplexGaussian::standard(2 * d);
        Self {
            a: g.clone(),
            b: g,
            d,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{gauss_legendre, tensor_rule};
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn random_gaussian(n: usize, seed: &[f64]) -> ComplexGaussian {
        // diagonal-dominant real part, small imaginary coupling
        let m = CMat::from_fn(n, n, |i, j| {
            let k = (i * n + j).min(j * n + i) % seed.len();
            if i == j {
                c(1.0 + seed[k].abs(), 0.7 * seed[(k + 1) % seed.len()])
            } else {
                c(0.15 * seed[k], 0.2 * seed[(k + 2) % seed.len()])
            }
        });
        let w = (0..n)
            .map(|i| c(0.3 * seed[i % seed.len()], 0.8 * seed[(i + 3) % seed.len()]))
            .collect();
        ComplexGaussian::new(c(0.9, 0.2), m.symmetrized(), w).unwrap()
    }

    /// Composite Gauss-Legendre over a box, as an independent oracle.
    fn box_quadrature(n: usize, half: f64, panels: usize, f: impl Fn(&[f64]) -> Complex64) -> Complex64 {
        let base = gauss_legendre(12);
        let step = 2.0 * half / panels as f64;
        let mut nodes = Vec::new();
        let mut weights = Vec::new();
        for p in 0..panels {
            let r = base.mapped(-half + p as f64 * step, -half + (p + 1) as f64 * step);
            nodes.extend(r.nodes);
            weights.extend(r.weights);
        }
        let rule = crate::numerics::QuadratureRule { nodes, weights };
        let rules = vec![rule; n];
        let (pts, ws) = tensor_rule(&rules);
        pts.iter().zip(ws).map(|(p, w)| w * f(p)).sum()
    }

    #[test]
    fn eval_examples() {
        let f = ComplexGaussian::standard(1);
        assert_eq!(f.eval(&[0.0]).unwrap(), c(1.0, 0.0));
        assert!((f.eval(&[1.0]).unwrap().re - 0.043_213_918_263_772_25).abs() < 1e-15);
        let g = ComplexGaussian::diagonal(c(1.0, 0.0), &[0.5f64.sqrt()], vec![ZERO]).unwrap();
        assert!((g.eval(&[1.0]).unwrap().re - (-2.0 * PI).exp()).abs() < 1e-15);
        assert!(f.eval(&[1.0, 2.0]).is_err());
    }

    #[test]
    fn integral_examples() {
        assert!((ComplexGaussian::standard(1).integral() - 1.0).norm() < 1e-15);
        let g = ComplexGaussian::new(c(1.0, 0.0), CMat::from_real_diag(&[2.0]), vec![ZERO]).unwrap();
        assert!((g.integral().re - 0.5f64.sqrt()).abs() < 1e-15);
        let h = ComplexGaussian::new(
            c(1.0, 0.0),
            CMat::identity(2),
            vec![c(0.0, 2.0 * PI), ZERO],
        )
        .unwrap();
        let expected = (-PI).exp();
        assert!((h.integral() - expected).norm() < 1e-15);
        let oracle = box_quadrature(2, 6.0, 24, |z| h.eval_unchecked(z));
        assert!((oracle - expected).norm() < 1e-12);
    }

    #[test]
    fn integral_matches_quadrature_for_rotating_phase() {
        let f = random_gaussian(2, &[0.3, -0.8, 0.5, 1.1, -0.2]);
        let oracle = box_quadrature(2, 7.0, 40, |z| f.eval_unchecked(z));
        assert!((f.integral() - oracle).norm() < 1e-10 * oracle.norm().max(1.0));
    }

    #[test]
    fn partial_fourier_examples() {
        let a = ComplexGaussian::standard(2);
        let at = a.partial_fourier(Block::First).unwrap();
        for z in [[0.3, -0.4], [1.0, 0.5]] {
            assert!((at.eval(&z).unwrap() - a.eval(&z).unwrap()).norm() < 1e-14);
        }
        let shifted = a.shifted(&[1.0, 0.0]).partial_fourier(Block::First).unwrap();
        for (eta, y) in [(0.3, 0.2), (-0.7, 1.1)] {
            let expect = crate::numerics::e(-eta) * (-PI * (eta * eta + y * y)).exp();
            assert!((shifted.eval(&[eta, y]).unwrap() - expect).norm() < 1e-14);
        }
        let wide = ComplexGaussian::new(c(1.0, 0.0), CMat::from_real_diag(&[2.0, 1.0]), vec![ZERO; 2])
            .unwrap()
            .partial_fourier(Block::First)
            .unwrap();
        for (eta, y) in [(0.0, 0.0), (0.4, 0.1), (-1.2, 0.7), (2.0, -0.3), (0.9, 1.4)] {
            let expect = 0.5f64.sqrt() * (-PI * eta * eta / 2.0 - PI * y * y).exp();
            let got = wide.eval(&[eta, y]).unwrap();
            assert!((got - expect).norm() <= 1e-10 * expect.abs());
            // quadrature oracle in x
            let oracle = box_quadrature(1, 6.0, 40, |x| {
                ComplexGaussian::new(c(1.0, 0.0), CMat::from_real_diag(&[2.0, 1.0]), vec![ZERO; 2])
                    .unwrap()
                    .eval_unchecked(&[x[0], y])
                    * crate::numerics::e(-x[0] * eta)
            });
            assert!((got - oracle).norm() <= 1e-10 * expect.abs().max(1e-3));
        }
    }

    #[test]
    fn fourier_involution_gives_parity() {
        let f = random_gaussian(4, &[0.4, -0.3, 0.9, 0.1, -0.6, 0.25, 0.8]);
        // second transform with the opposite sign is the inverse; the same
        // sign twice yields the reflection in the transformed block
        let twice = f
            .partial_fourier(Block::First)
            .unwrap()
            .partial_fourier(Block::First)
            .unwrap();
        let pts = [
            [0.1, 0.2, -0.3, 0.4],
            [-0.5, 0.7, 0.2, -0.1],
            [1.1, -0.2, 0.3, 0.9],
            [0.0, 0.0, 0.0, 0.0],
            [-0.8, -0.9, 0.6, 0.5],
            [0.33, 0.12, -0.77, 0.05],
            [0.6, -0.6, 0.6, -0.6],
            [1.3, 0.4, -0.2, 0.1],
            [-0.1, 1.0, 0.45, -0.35],
            [0.2, -1.2, 0.0, 0.8],
        ];
        for p in pts {
            let reflected = [-p[0], -p[1], p[2], p[3]];
            let want = f.eval(&reflected).unwrap();
            let got = twice.eval(&p).unwrap();
            assert!((got - want).norm() <= 1e-12 * want.norm().max(1e-300));
        }
    }

    #[test]
    fn metaplectic_parity_and_self_duality() {
        for d in 1..=3 {
            let f = ComplexGaussian::standard(2 * d);
            let pi = f.metaplectic(PI).unwrap();
            assert_eq!(pi, f);
            let half = f.metaplectic(PI / 2.0).unwrap();
            let z: Vec<f64> = (0..2 * d).map(|i| 0.3 * i as f64 - 0.4).collect();
            assert!((half.eval(&z).unwrap() - f.eval(&z).unwrap()).norm() < 1e-13);
        }
    }

    #[test]
    fn metaplectic_quarter_turn_matches_oscillatory_quadrature() {
        let f = ComplexGaussian::new(c(1.0, 0.0), CMat::from_real_diag(&[2.0, 2.0]), vec![ZERO; 2]).unwrap();
        let phi = PI / 4.0;
        let got = f.metaplectic(phi).unwrap().eval(&[0.0, 0.0]).unwrap();
        let (s, co) = phi.sin_cos();
        let oracle = box_quadrature(2, 4.5, 60, |x| {
            let phase = (0.5 * (x[0] * x[0] - x[1] * x[1]) * co) / s;
            crate::numerics::e(phase) * f.eval_unchecked(x)
        }) / s.abs();
        assert!((got - oracle).norm() <= 1e-8 * oracle.norm(), "{got} vs {oracle}");
    }

    #[test]
    fn metaplectic_general_point_matches_quadrature() {
        let f = random_gaussian(2, &[0.5, -0.2, 0.3, 0.6, -0.4]);
        let phi = 2.2;
        let y = [0.4, -0.3];
        let got = f.metaplectic(phi).unwrap().eval(&y).unwrap();
        let (s, co) = phi.sin_cos();
        let oracle = box_quadrature(2, 6.0, 60, |x| {
            let phase = (0.5 * (y[0] * y[0] + x[0] * x[0] - y[1] * y[1] - x[1] * x[1]) * co
                - y[0] * x[0]
                + y[1] * x[1])
                / s;
            crate::numerics::e(phase) * f.eval_unchecked(x)
        }) / s.abs();
        assert!((got - oracle).norm() <= 1e-8 * oracle.norm().max(1e-6), "{got} vs {oracle}");
    }

    #[test]
    fn metaplectic_decay_is_uniform_in_angle() {
        let f = random_gaussian(2, &[0.2, 0.5, -0.4, 0.3]);
        let mut worst_rate = f64::INFINITY;
        for k in 1..72 {
            if k == 36 {
                continue;
            }
            let g = f.metaplectic(k as f64 * PI / 36.0).unwrap();
            let re: Vec<f64> = g.quadratic().real_part();
            let lam = real_min_cholesky_pivot(2, &re);
            worst_rate = worst_rate.min(lam);
            let at0 = g.eval(&[0.0, 0.0]).unwrap().norm();
            let at3 = g.eval(&[3.0, 0.0]).unwrap().norm();
            assert!(at3 < at0 * (-0.5f64 * 9.0).exp() * 50.0);
        }
        assert!(worst_rate > 0.05);
    }

    #[test]
    fn poisson_summation_in_low_dimensions() {
        for d in 1..=3usize {
            let widths: Vec<f64> = (0..d).map(|j| 0.8 + 0.15 * j as f64).collect();
            let w: Vec<Complex64> = (0..d).map(|j| c(0.2 * j as f64, 0.5)).collect();
            let f = ComplexGaussian::diagonal(c(1.0, 0.0), &widths, w).unwrap();
            // f̂(ξ) = ∫ f(x) e(−x·ξ) dx, via the partial transform of f ⊗ 1-like trick:
            // evaluate the closed form through with_phase and integral
            let alpha: Vec<f64> = (0..d).map(|j| (0.37 + 0.21 * j as f64) % 1.0).collect();
            let range = -8i64..=8;
            let mut lhs = ZERO;
            let mut rhs = ZERO;
            let mut idx = vec![0i64; d];
            let count = 17usize.pow(d as u32);
            for flat in 0..count {
                let mut r = flat;
                for j in 0..d {
                    idx[j] = (r % 17) as i64 + *range.start();
                    r /= 17;
                }
                let shifted: Vec<f64> = idx.iter().zip(&alpha).map(|(m, a)| *m as f64 + a).collect();
                lhs += f.eval(&shifted).unwrap();
                let xi: Vec<f64> = idx.iter().map(|m| -(*m as f64)).collect();
                let fhat = f.with_phase(&xi).integral();
                let phase: f64 = idx.iter().zip(&alpha).map(|(m, a)| *m as f64 * a).sum();
                rhs += fhat * crate::numerics::e(phase);
            }
            assert!((lhs - rhs).norm() < 1e-10, "d={d}: {lhs} vs {rhs}");
        }
    }

    #[test]
    fn potential_examples() {
        assert_eq!(potential_fourier(1.0, &[0.0, 0.0]), 1.0);
        assert!((potential_fourier(1.0, &[1.0, 0.0]) - (-PI).exp()).abs() < 1e-16);
        assert!((potential_fourier(0.1, &[0.0, 1.0]) - 0.969_072_426_304_579).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn transforms_preserve_positive_real_part(
            s in proptest::collection::vec(-1.0f64..1.0, 8),
            phi in 0.01f64..6.27,
        ) {
            let f = random_gaussian(4, &s);
            let ft = f.partial_fourier(Block::First).unwrap();
            prop_assert!(real_min_cholesky_pivot(4, &ft.quadratic().real_part()) > 0.0);
            let fs = f.partial_fourier(Block::Second).unwrap();
            prop_assert!(real_min_cholesky_pivot(4, &fs.quadratic().real_part()) > 0.0);
            let fm = f.metaplectic(phi).unwrap();
            prop_assert!(real_min_cholesky_pivot(4, &fm.quadratic().real_part()) > 0.0);
        }

        #[test]
        fn pullback_of_free_flow_is_a_group(t1 in -3.0f64..3.0, t2 in -3.0f64..3.0) {
            let f = random_gaussian(2, &[0.3, 0.1, -0.5, 0.7]);
            let flow = |t: f64| vec![1.0, -t, 0.0, 1.0];
            let step = f.pullback(&flow(t1), 2).unwrap().pullback(&flow(t2), 2).unwrap();
            let joint = f.pullback(&flow(t1 + t2), 2).unwrap();
            for z in [[0.2, 0.3], [-1.0, 0.5]] {
                let (a, b) = (step.eval(&z).unwrap(), joint.eval(&z).unwrap());
                prop_assert!((a - b).norm() <= 1e-12 * b.norm().max(1e-300));
            }
        }
    }

    #[test]
    fn envelope_of_shifted_gaussian() {
        let g = ComplexGaussian::diagonal(c(2.0, 0.0), &[1.0, 0.5], vec![c(0.0, 0.3), c(0.0, -1.0)])
            .unwrap()
            .shifted(&[0.4, -0.7]);
        let env = g.envelope();
        assert!((env.center[0] - 0.4).abs() < 1e-12 && (env.center[1] + 0.7).abs() < 1e-12);
        assert!((env.width - 1.0).abs() < 1e-12);
        assert!((env.peak - 2.0).abs() < 1e-12);
        assert!((env.mass - 2.0 * 0.5).abs() < 1e-12, "{}", env.mass);
    }
}
