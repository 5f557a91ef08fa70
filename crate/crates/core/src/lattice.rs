//! Gaussian sums over shifted integer lattices,
//! `Σ_{n ∈ ℤᵏ + s} exp(−π nᵀQn + Lᵀn)`, by ellipsoid enumeration.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{BoltzError, Result};
use crate::numerics::NeumaierSum;
use crate::smallmat::{real_cholesky, CMat};

/// Upper bound on enumerated points before a sum is refused.
pub const MAX_TERMS: usize = 50_000_000;

/// A truncated lattice sum with an estimate of the discarded mass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatticeSum {
    pub value: Complex64,
    pub tail: f64,
    pub terms: usize,
}

impl LatticeSum {
    pub fn zero() -> Self {
        Self {
            value: Complex64::new(0.0, 0.0),
            tail: 0.0,
            terms: 0,
        }
    }

    /// Product of independent factor sums, with first-order error propagation.
    pub fn times(&self, other: &LatticeSum) -> LatticeSum {
        LatticeSum {
            value: self.value * other.value,
            tail: self.tail * other.value.norm() + other.tail * self.value.norm() + self.tail * other.tail,
            terms: self.terms.max(1) * other.terms.max(1),
        }
    }
}

/// Regularized upper incomplete gamma `Γ(s, x)/Γ(s)` for `s ∈ ½ℕ`, `s > 0`.
pub fn upper_gamma_half_integer(s2: usize, x: f64) -> f64 {
    assert!(s2 >= 1, "order must be positive");
    if x <= 0.0 {
        return 1.0;
    }
    // Q(s+1, x) = Q(s, x) + xˢ e^{−x} / Γ(s+1)
    let (mut q, mut s, mut term) = if s2 % 2 == 0 {
        let q = (-x).exp();
        (q, 1.0, q * x)
    } else {
        let q = libm::erfc(x.sqrt());
        let t = (x / PI).sqrt() * (-x).exp() * 2.0;
        (q, 0.5, t)
    };
    // `term` holds xˢ e^{−x} / Γ(s+1) for the current s
    let target = s2 as f64 / 2.0;
    while s < target - 1e-12 {
        q += term;
        s += 1.0;
        term *= x / s;
    }
    q.min(1.0)
}

/// Connected components of the nonzero pattern of a symmetric matrix.
pub fn components(q: &CMat) -> Vec<Vec<usize>> {
    let k = q.rows();
    let mut label: Vec<usize> = (0..k).collect();
    fn find(label: &mut [usize], i: usize) -> usize {
        let mut r = i;
        while label[r] != r {
            r = label[r];
        }
        let mut j = i;
        while label[j] != r {
            let next = label[j];
            label[j] = r;
            j = next;
        }
        r
    }
    for i in 0..k {
        for j in 0..i {
            if q[(i, j)] != Complex64::new(0.0, 0.0) || q[(j, i)] != Complex64::new(0.0, 0.0) {
                let (a, b) = (find(&mut label, i), find(&mut label, j));
                if a != b {
                    label[a.max(b)] = a.min(b);
                }
            }
        }
    }
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut root_of: Vec<Option<usize>> = vec![None; k];
    for i in 0..k {
        let r = find(&mut label, i);
        match root_of[r] {
            Some(g) => groups[g].push(i),
            None => {
                root_of[r] = Some(groups.len());
                groups.push(vec![i]);
            }
        }
    }
    groups
}

/// Gaussian lattice sum, split into independent factors whenever `Q` is
/// block diagonal up to a permutation.
pub fn gaussian_lattice_sum(q: &CMat, l: &[Complex64], shift: &[f64], eps: f64) -> Result<LatticeSum> {
    let k = q.rows();
    if l.len() != k || shift.len() != k {
        return Err(BoltzError::Dimension {
            expected: k,
            found: l.len(),
        });
    }
    let groups = components(q);
    if groups.len() == 1 {
        return enumerate(q, l, shift, eps);
    }
    let mut total = LatticeSum {
        value: Complex64::new(1.0, 0.0),
        tail: 0.0,
        terms: 1,
    };
    for g in &groups {
        let qs = q.select(g, g);
        let ls: Vec<Complex64> = g.iter().map(|&i| l[i]).collect();
        let ss: Vec<f64> = g.iter().map(|&i| shift[i]).collect();
        total = total.times(&enumerate(&qs, &ls, &ss, eps)?);
    }
    Ok(total)
}

/// Single-block enumeration over the ellipsoid where terms exceed `eps`
/// times the peak modulus.
pub fn enumerate(q: &CMat, l: &[Complex64], shift: &[f64], eps: f64) -> Result<LatticeSum> {
    let k = q.rows();
    let a = q.real_part();
    let chol = real_cholesky(k, &a).ok_or_else(|| {
        BoltzError::NotPositiveDefinite("lattice sum quadratic form".into())
    })?;
    // centre c = A⁻¹ Re L / 2π, via the Cholesky factor A = C Cᵀ
    let rl: Vec<f64> = l.iter().map(|z| z.re / (2.0 * PI)).collect();
    let centre = cholesky_solve(k, &chol, &rl);
    let peak_log = PI * (0..k).map(|i| centre[i] * rl[i] * 2.0 * PI).sum::<f64>() / (2.0 * PI);
    // |term(n)| = exp(peak_log − π (n−c)ᵀA(n−c)); the radius is padded by
    // the cell half-diameter δ so the tail bound below stays at ~eps
    let trace: f64 = (0..k).map(|i| a[i * k + i]).sum();
    let delta = 0.5 * trace.sqrt();
    let rho = ((1.0 / eps).ln() / PI).sqrt() + delta;
    let rho2 = rho * rho;
    // U = Cᵀ (upper triangular), (n−c)ᵀA(n−c) = ‖U (n−c)‖²
    let u = |i: usize, j: usize| chol[j * k + i];
    let mut acc = NeumaierSum::new();
    let mut terms = 0usize;
    let mut n = vec![0.0; k];
    // partial[i] = Σ_{j>i} contributions to ‖U z‖² from rows > i
    let mut partial = vec![0.0; k + 1];
    let mut upper = vec![0.0; k];
    let mut idx = vec![0i64; k];
    // row offsets: (Uz)_i = U_ii z_i + Σ_{j>i} U_ij z_j
    let mut level = k;
    let mut descending = true;
    loop {
        if descending {
            if level == 0 {
                // full point
                terms += 1;
                if terms > MAX_TERMS {
                    return Err(BoltzError::Truncation {
                        tail: f64::INFINITY,
                        tolerance: eps,
                        context: format!("lattice enumeration exceeded {MAX_TERMS} points"),
                    });
                }
                let mut quad = Complex64::new(0.0, 0.0);
                let mut lin = Complex64::new(0.0, 0.0);
                for i in 0..k {
                    let mut row = q[(i, i)] * n[i];
                    for j in 0..i {
                        row += 2.0 * q[(i, j)] * n[j];
                    }
                    quad += row * n[i];
                    lin += l[i] * n[i];
                }
                acc.add((-PI * quad + lin).exp());
                descending = false;
                continue;
            }
            let i = level - 1;
            let mut off = 0.0;
            for j in (i + 1)..k {
                off += u(i, j) * (n[j] - centre[j]);
            }
            let rem = rho2 - partial[i + 1];
            if rem < 0.0 {
                descending = false;
                continue;
            }
            let half = rem.sqrt() / u(i, i);
            // z_i = n_i − c_i must satisfy |U_ii z_i + off| ≤ √rem
            let mid = centre[i] - off / u(i, i);
            let lo = (mid - half - shift[i]).ceil() as i64;
            let hi = (mid + half - shift[i]).floor() as i64;
            if lo > hi {
                descending = false;
                continue;
            }
            idx[i] = lo;
            upper[i] = hi as f64;
            n[i] = lo as f64 + shift[i];
            let zi = u(i, i) * (n[i] - centre[i]) + off;
            partial[i] = partial[i + 1] + zi * zi;
            level = i;
        } else {
            // advance the lowest active level
            if level >= k {
                break;
            }
            let i = level;
            if (idx[i] as f64) < upper[i] {
                idx[i] += 1;
                n[i] = idx[i] as f64 + shift[i];
                let mut off = 0.0;
                for j in (i + 1)..k {
                    off += u(i, j) * (n[j] - centre[j]);
                }
                let zi = u(i, i) * (n[i] - centre[i]) + off;
                partial[i] = partial[i + 1] + zi * zi;
                descending = true;
            } else {
                level += 1;
            }
        }
    }
    let det_u: f64 = (0..k).map(|i| u(i, i)).product();
    let tail = upper_gamma_half_integer(k, PI * (rho - delta) * (rho - delta)) / det_u;
    Ok(LatticeSum {
        value: acc.value(),
        tail: tail * peak_log.exp(),
        terms,
    })
}

fn cholesky_solve(k: usize, c: &[f64], b: &[f64]) -> Vec<f64> {
    // C y = b, then Cᵀ x = y
    let mut y = vec![0.0; k];
    for i in 0..k {
        let mut s = b[i];
        for j in 0..i {
            s -= c[i * k + j] * y[j];
        }
        y[i] = s / c[i * k + i];
    }
    let mut x = vec![0.0; k];
    for i in (0..k).rev() {
        let mut s = y[i];
        for j in (i + 1)..k {
            s -= c[j * k + i] * x[j];
        }
        x[i] = s / c[i * k + i];
    }
    x
}
