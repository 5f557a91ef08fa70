//! Quadrature rules and reproducible summation.
//!
//! Every reduction in the crate goes through [`NeumaierSum`] or
//! [`blocked_sum`], so results do not depend on the rayon thread count.

use std::f64::consts::PI;
use std::ops::Range;

use num_complex::Complex64;
use rayon::prelude::*;

/// Block length for [`blocked_sum`]. Fixed so that the reduction tree
/// is a function of the problem size only.
pub const REDUCTION_BLOCK: usize = 256;

/// Compensated (Kahan-Babuska-Neumaier) accumulator for complex values.
#[derive(Debug, Clone, Copy, Default)]
pub struct NeumaierSum {
    re: f64,
    re_c: f64,
    im: f64,
    im_c: f64,
}

#[inline]
fn two_sum_step(sum: &mut f64, comp: &mut f64, x: f64) {
    let t = *sum + x;
    if sum.abs() >= x.abs() {
        *comp += (*sum - t) + x;
    } else {
        *comp += (x - t) + *sum;
    }
    *sum = t;
}

impl NeumaierSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, z: Complex64) {
        two_sum_step(&mut self.re, &mut self.re_c, z.re);
        two_sum_step(&mut self.im, &mut self.im_c, z.im);
    }

    #[inline]
    pub fn add_real(&mut self, x: f64) {
        two_sum_step(&mut self.re, &mut self.re_c, x);
    }

    pub fn merge(&mut self, other: &NeumaierSum) {
        self.add(Complex64::new(other.re, other.im));
        self.add(Complex64::new(other.re_c, other.im_c));
    }

    pub fn value(&self) -> Complex64 {
        Complex64::new(self.re + self.re_c, self.im + self.im_c)
    }
}

impl FromIterator<Complex64> for NeumaierSum {
    fn from_iter<I: IntoIterator<Item = Complex64>>(iter: I) -> Self {
        let mut acc = NeumaierSum::new();
        for z in iter {
            acc.add(z);
        }
        acc
    }
}

/// Sum `term(i)` for `i` in `range`, in parallel, with a reduction order
/// fixed by [`REDUCTION_BLOCK`]. Bitwise identical for any thread count.
pub fn blocked_sum<F>(range: Range<usize>, term: F) -> Complex64
where
    F: Fn(usize) -> Complex64 + Sync,
{
    let start = range.start;
    let len = range.end.saturating_sub(start);
    if len == 0 {
        return Complex64::new(0.0, 0.0);
    }
    let blocks = len.div_ceil(REDUCTION_BLOCK);
    let partials: Vec<NeumaierSum> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let lo = start + b * REDUCTION_BLOCK;
            let hi = (lo + REDUCTION_BLOCK).min(start + len);
            (lo..hi).map(&term).collect()
        })
        .collect();
    let mut total = NeumaierSum::new();
    for p in &partials {
        total.merge(p);
    }
    total.value()
}

/// Nodes and weights of a one-dimensional quadrature rule.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Affine map of a rule on [-1, 1] onto [a, b].
    pub fn mapped(&self, a: f64, b: f64) -> QuadratureRule {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        QuadratureRule {
            nodes: self.nodes.iter().map(|x| mid + half * x).collect(),
            weights: self.weights.iter().map(|w| w * half).collect(),
        }
    }
}

/// Gauss-Legendre rule with `n` nodes on [-1, 1].
pub fn gauss_legendre(n: usize) -> QuadratureRule {
    assert!(n >= 1, "Gauss-Legendre needs at least one node");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        dp = if d != 0.0 { d } else { dp };
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    QuadratureRule { nodes, weights }
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Gauss-Hermite rule for the weight `exp(-x^2)` with `n` nodes.
pub fn gauss_hermite(n: usize) -> QuadratureRule {
    assert!(n >= 1, "Gauss-Hermite needs at least one node");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    let nf = n as f64;
    let mut z = 0.0;
    for i in 0..m {
        // Initial guesses follow the classical asymptotic placement.
        z = match i {
            0 => (2.0 * nf + 1.0).sqrt() - 1.85575 * (2.0 * nf + 1.0).powf(-1.0 / 6.0),
            1 => z - 1.14 * nf.powf(0.426) / z,
            2 => 1.86 * z - 0.86 * nodes[0],
            3 => 1.91 * z - 0.91 * nodes[1],
            _ => 2.0 * z - nodes[i - 2],
        };
        let mut pp = 0.0;
        for _ in 0..200 {
            let (p, d) = hermite_orthonormal(n, z);
            pp = d;
            let dz = p / d;
            z -= dz;
            if dz.abs() <= 1e-15 * z.abs().max(1.0) {
                break;
            }
        }
        let (_, d) = hermite_orthonormal(n, z);
        pp = if d != 0.0 { d } else { pp };
        nodes[i] = z;
        weights[i] = 2.0 / (pp * pp);
    }
    let mut rule_nodes = vec![0.0; n];
    let mut rule_weights = vec![0.0; n];
    for i in 0..m {
        rule_nodes[i] = -nodes[i];
        rule_nodes[n - 1 - i] = nodes[i];
        rule_weights[i] = weights[i];
        rule_weights[n - 1 - i] = weights[i];
    }
    if n % 2 == 1 {
        rule_nodes[n / 2] = 0.0;
    }
    QuadratureRule {
        nodes: rule_nodes,
        weights: rule_weights,
    }
}

/// Orthonormal Hermite polynomial of degree `n` and its derivative.
fn hermite_orthonormal(n: usize, x: f64) -> (f64, f64) {
    let pim4 = PI.powf(-0.25);
    let mut p1 = pim4;
    let mut p2 = 0.0;
    for j in 1..=n {
        let jf = j as f64;
        let p3 = p2;
        p2 = p1;
        p1 = x * (2.0 / jf).sqrt() * p2 - ((jf - 1.0) / jf).sqrt() * p3;
    }
    let d = (2.0 * n as f64).sqrt() * p2;
    (p1, d)
}

/// Rule for integrals of the form `∫ g(x) dx` over the real line where
/// `g` carries a Gaussian factor close to `exp(-π x² / width²)`.
/// Nodes are rescaled Gauss-Hermite nodes and the weights absorb the
/// Hermite weight, so the rule is applied to `g` directly.
pub fn gaussian_line_rule(n: usize, width: f64) -> QuadratureRule {
    let gh = gauss_hermite(n);
    let scale = width / PI.sqrt();
    QuadratureRule {
        nodes: gh.nodes.iter().map(|x| x * scale).collect(),
        weights: gh
            .nodes
            .iter()
            .zip(&gh.weights)
            .map(|(x, w)| w * (x * x).exp() * scale)
            .collect(),
    }
}

/// Composite Gauss-Legendre on [a, b] with panel breakpoints `breaks`
/// (sorted, inside [a, b]); panels are no longer than `max_panel`.
pub fn composite_gauss_legendre(
    a: f64,
    b: f64,
    breaks: &[f64],
    max_panel: f64,
    order: usize,
) -> QuadratureRule {
    let base = gauss_legendre(order);
    let mut cuts = vec![a];
    for &x in breaks {
        if x > a && x < b {
            cuts.push(x);
        }
    }
    cuts.push(b);
    let mut nodes = Vec::new();
    let mut weights = Vec::new();
    for pair in cuts.windows(2) {
        let (lo, hi) = (pair[0], pair[1]);
        let panels = ((hi - lo) / max_panel).ceil().max(1.0) as usize;
        let step = (hi - lo) / panels as f64;
        for p in 0..panels {
            let pa = lo + p as f64 * step;
            let pb = if p + 1 == panels { hi } else { pa + step };
            let r = base.mapped(pa, pb);
            nodes.extend(r.nodes);
            weights.extend(r.weights);
        }
    }
    QuadratureRule { nodes, weights }
}

/// Tensor product of one-dimensional rules, flattened row-major.
pub fn tensor_rule(rules: &[QuadratureRule]) -> (Vec<Vec<f64>>, Vec<f64>) {
    let mut points: Vec<Vec<f64>> = vec![Vec::new()];
    let mut weights = vec![1.0];
    for rule in rules {
        let mut next_points = Vec::with_capacity(points.len() * rule.len());
        let mut next_weights = Vec::with_capacity(points.len() * rule.len());
        for (p, w) in points.iter().zip(&weights) {
            for (x, v) in rule.nodes.iter().zip(&rule.weights) {
                let mut q = p.clone();
                q.push(*x);
                next_points.push(q);
                next_weights.push(w * v);
            }
        }
        points = next_points;
        weights = next_weights;
    }
    (points, weights)
}

/// `e(x) = exp(2πix)`.
#[inline]
pub fn e(x: f64) -> Complex64 {
    Complex64::from_polar(1.0, 2.0 * PI * x)
}
