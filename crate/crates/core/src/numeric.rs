//! Small numerical kernels: double-double arithmetic, Gauss-Legendre rules,
//! compensated summation and real-root isolation for low-degree polynomials.

use std::ops::{Add, Mul, Neg, Sub};
use std::sync::OnceLock;

/// An unevaluated sum `hi + lo` carrying roughly 106 bits of precision.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct Dd {
    pub hi: f64,
    pub lo: f64,
}

#[inline]
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

#[inline]
fn quick_two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    (s, b - (s - a))
}

impl Dd {
    /// The square root of two to double-double precision.
    pub const SQRT2: Dd = Dd {
        hi: std::f64::consts::SQRT_2,
        lo: -9.667_293_313_452_913e-17,
    };

    pub const ZERO: Dd = Dd { hi: 0.0, lo: 0.0 };

    pub fn from_f64(x: f64) -> Dd {
        Dd { hi: x, lo: 0.0 }
    }

    /// `num / den` rounded to double-double precision.
    pub fn ratio(num: f64, den: f64) -> Dd {
        let q = num / den;
        let rem = (-q).mul_add(den, num);
        let (hi, lo) = quick_two_sum(q, rem / den);
        Dd { hi, lo }
    }

    pub fn to_f64(self) -> f64 {
        self.hi + self.lo
    }

    pub fn abs(self) -> Dd {
        if self.hi < 0.0 {
            -self
        } else {
            self
        }
    }
}

impl Add for Dd {
    type Output = Dd;
    fn add(self, b: Dd) -> Dd {
        let (s, e) = two_sum(self.hi, b.hi);
        let (t, f) = two_sum(self.lo, b.lo);
        let (s, e) = quick_two_sum(s, e + t);
        let (hi, lo) = quick_two_sum(s, e + f);
        Dd { hi, lo }
    }
}

impl Neg for Dd {
    type Output = Dd;
    fn neg(self) -> Dd {
        Dd {
            hi: -self.hi,
            lo: -self.lo,
        }
    }
}

impl Sub for Dd {
    type Output = Dd;
    fn sub(self, b: Dd) -> Dd {
        self + (-b)
    }
}

impl Mul for Dd {
    type Output = Dd;
    fn mul(self, b: Dd) -> Dd {
        let p = self.hi * b.hi;
        let e = self.hi.mul_add(b.hi, -p);
        let e = e + (self.hi * b.lo + self.lo * b.hi);
        let (hi, lo) = quick_two_sum(p, e);
        Dd { hi, lo }
    }
}

/// Evaluates a polynomial with coefficients in descending degree order.
pub fn horner_dd(coeffs: &[Dd], x: Dd) -> Dd {
    coeffs.iter().fold(Dd::ZERO, |acc, &c| acc * x + c)
}

/// Compensated Horner evaluation of an `f64` polynomial (descending degree).
pub fn horner_compensated(coeffs: &[f64], x: f64) -> f64 {
    let coeffs: Vec<Dd> = coeffs.iter().map(|&c| Dd::from_f64(c)).collect();
    horner_dd(&coeffs, Dd::from_f64(x)).to_f64()
}

/// Neumaier-compensated running sum.
#[derive(Clone, Copy, Debug, Default)]
pub struct KahanSum {
    sum: f64,
    comp: f64,
}

impl KahanSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Largest Gauss-Legendre rule provided by [`gauss_legendre`].
pub const MAX_GL_NODES: usize = 8;

/// Nodes and weights of the `n`-point Gauss-Legendre rule on `[-1, 1]`.
///
/// The rule integrates polynomials of degree `2n - 1` exactly.
pub fn gauss_legendre(n: usize) -> &'static (Vec<f64>, Vec<f64>) {
    static RULES: OnceLock<Vec<(Vec<f64>, Vec<f64>)>> = OnceLock::new();
    let rules = RULES.get_or_init(|| (0..=MAX_GL_NODES).map(build_rule).collect());
    assert!(
        (1..=MAX_GL_NODES).contains(&n),
        "Gauss-Legendre rule with {n} nodes not tabulated"
    );
    &rules[n]
}

fn build_rule(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
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
        nodes[i] = x;
        weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    (nodes, weights)
}

fn legendre(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let n = n as f64;
    (p1, n * (x * p1 - p0) / (x * x - 1.0))
}

/// Real roots of a polynomial given by double-double coefficients in
/// descending degree order, sorted from largest to smallest.
///
/// Roots are isolated between consecutive critical points (found
/// recursively from the derivative) and refined by bisection.
pub fn real_roots(coeffs: &[Dd]) -> Vec<f64> {
    let coeffs: Vec<Dd> = coeffs
        .iter()
        .copied()
        .skip_while(|c| c.hi == 0.0 && c.lo == 0.0)
        .collect();
    let degree = coeffs.len().saturating_sub(1);
    if degree == 0 {
        return Vec::new();
    }
    let lead = coeffs[0].to_f64().abs();
    let bound = 1.0
        + coeffs[1..]
            .iter()
            .map(|c| c.to_f64().abs() / lead)
            .fold(0.0, f64::max);
    let deriv: Vec<Dd> = coeffs[..degree]
        .iter()
        .enumerate()
        .map(|(i, &c)| c * Dd::from_f64((degree - i) as f64))
        .collect();
    let mut marks = vec![-bound];
    let mut crit = real_roots(&deriv);
    crit.reverse();
    marks.extend(crit.into_iter().filter(|c| c.abs() < bound));
    marks.push(bound);
    let eval = |x: f64| horner_dd(&coeffs, Dd::from_f64(x)).to_f64();
    let mut roots = Vec::new();
    for w in marks.windows(2) {
        let (mut lo, mut hi) = (w[0], w[1]);
        let (flo, fhi) = (eval(lo), eval(hi));
        if flo == 0.0 {
            if roots.last() != Some(&lo) {
                roots.push(lo);
            }
            continue;
        }
        if fhi == 0.0 || flo.signum() == fhi.signum() {
            continue;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            let fm = eval(mid);
            if fm == 0.0 {
                lo = mid;
                hi = mid;
                break;
            }
            if fm.signum() == flo.signum() {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        roots.push(0.5 * (lo + hi));
    }
    if let Some(&last) = marks.last() {
        if eval(last) == 0.0 {
            roots.push(last);
        }
    }
    roots.sort_by(|a, b| b.total_cmp(a));
    roots.dedup();
    roots
}

/// Volume of the bounded polytope `{ x in R^d : a . x <= b }` given as
/// rows `(a, b)`.
///
/// The last coordinate is integrated out piecewise between consecutive
/// vertex heights, where the section volume is a polynomial of degree
/// `d - 1`, using a Gauss-Legendre rule that is exact for it.
pub fn polytope_volume(rows: &[(Vec<f64>, f64)], d: usize) -> f64 {
    if d == 0 {
        let feasible = rows.iter().all(|(_, b)| *b >= -POLYTOPE_TOL);
        return if feasible { 1.0 } else { 0.0 };
    }
    if d == 1 {
        let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
        for (a, b) in rows {
            if a[0] > 0.0 {
                hi = hi.min(b / a[0]);
            } else if a[0] < 0.0 {
                lo = lo.max(b / a[0]);
            } else if *b < -POLYTOPE_TOL {
                return 0.0;
            }
        }
        return (hi - lo).max(0.0);
    }
    let mut heights = vertex_heights(rows, d);
    heights.sort_by(f64::total_cmp);
    heights.dedup_by(|a, b| (*a - *b).abs() <= POLYTOPE_TOL);
    if heights.len() < 2 {
        return 0.0;
    }
    let (nodes, weights) = gauss_legendre(d.div_ceil(2));
    let mut total = KahanSum::default();
    let mut child: Vec<(Vec<f64>, f64)> = rows
        .iter()
        .map(|(a, b)| (a[..d - 1].to_vec(), *b))
        .collect();
    for w in heights.windows(2) {
        let (mid, half) = (0.5 * (w[0] + w[1]), 0.5 * (w[1] - w[0]));
        for (x, wt) in nodes.iter().zip(weights) {
            let t = mid + half * x;
            for ((_, cb), (a, b)) in child.iter_mut().zip(rows) {
                *cb = b - a[d - 1] * t;
            }
            total.add(wt * half * polytope_volume(&child, d - 1));
        }
    }
    total.value()
}

const POLYTOPE_TOL: f64 = 1e-11;

/// Last coordinates of the vertices of `{ a . x <= b }` in `R^d`.
fn vertex_heights(rows: &[(Vec<f64>, f64)], d: usize) -> Vec<f64> {
    let n = rows.len();
    let mut heights = Vec::new();
    if n < d {
        return heights;
    }
    let mut subset: Vec<usize> = (0..d).collect();
    let mut mat = vec![vec![0.0; d + 1]; d];
    loop {
        for (row, &ri) in mat.iter_mut().zip(&subset) {
            row[..d].copy_from_slice(&rows[ri].0[..d]);
            row[d] = rows[ri].1;
        }
        if let Some(x) = solve_dense(&mut mat, d) {
            let feasible = rows.iter().all(|(a, b)| {
                let lhs: f64 = a[..d].iter().zip(&x).map(|(a, x)| a * x).sum();
                lhs <= b + POLYTOPE_TOL * (1.0 + b.abs())
            });
            if feasible {
                heights.push(x[d - 1]);
            }
        }
        let mut i = d;
        let mut advanced = false;
        while i > 0 {
            i -= 1;
            if subset[i] < n - d + i {
                subset[i] += 1;
                for j in i + 1..d {
                    subset[j] = subset[j - 1] + 1;
                }
                advanced = true;
                break;
            }
        }
        if !advanced {
            return heights;
        }
    }
}

/// Solves the `d x d` system stored with its right-hand side in column `d`.
fn solve_dense(m: &mut [Vec<f64>], d: usize) -> Option<Vec<f64>> {
    for col in 0..d {
        let piv = (col..d).max_by(|&a, &b| m[a][col].abs().total_cmp(&m[b][col].abs()))?;
        if m[piv][col].abs() < 1e-12 {
            return None;
        }
        m.swap(piv, col);
        for row in 0..d {
            if row != col {
                let f = m[row][col] / m[col][col];
                if f != 0.0 {
                    for k in col..=d {
                        let v = m[col][k];
                        m[row][k] -= f * v;
                    }
                }
            }
        }
    }
    Some((0..d).map(|i| m[i][d] / m[i][i]).collect())
}
