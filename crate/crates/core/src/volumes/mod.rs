//! Sell-at-least-one volumes `v(p_1, ..., p_r)`.
//!
//! `v(p)` is the probability that a bidder with i.i.d. uniform values on
//! `[0,1]^r` buys at least one item when every bundle of size `s` costs
//! `p_s`. The complementary no-sale region is
//! `W(p) = { x : sum of the s largest coordinates <= p_s for all s }`.
//!
//! Two exact evaluators are provided:
//!
//! * the price recursion
//!   `v(p) = int_0^{p_1} v(q(t)) dt + 1 - p_1`, `q_s(t) = min(p_s, p_{s+1} - t)`,
//!   which is a single polynomial on the *canonical cone*
//!   `p_1 >= p_2 - p_1 >= ... >= p_r - p_{r-1} >= 0`, `p_1 <= 1`, and is
//!   integrated exactly piece by piece with Gauss-Legendre rules;
//! * a slicing recursion in gap coordinates `g_i = y_i - y_{i+1}` of the
//!   sorted point `y`, where `W` becomes
//!   `{ g >= 0 : sum_l min(s, l) g_l <= p_s }` with volume `|W| = r! |P|`.
//!   Slices of that polytope stay in the same family, and the slice volume
//!   is a polynomial in the slicing parameter between the parameter values
//!   at which a degenerate vertex appears. Those values are roots of linear
//!   determinant conditions and become the quadrature breakpoints.
//!
//! Inputs are first reduced by the duplication rule: `p_s` is replaced by
//! `min_{j >= s} p_j`, which leaves `W` unchanged.

mod appendix;

pub use appendix::{appendix_polynomial, AppendixPolynomial, RootRule};

use crate::error::{Result, SjaError};
use crate::mc::{hypercube_mean, McEstimate};
use crate::numeric::{gauss_legendre, KahanSum};
use serde::{Deserialize, Serialize};

/// Default cap on the order `r` accepted by [`slice_volume`].
pub const DEFAULT_ORDER_CAP: usize = 8;

/// Relative slack used when classifying a price vector as canonical.
const CANONICAL_SLACK: f64 = 1e-12;

/// A validated bundle-price sequence `p_1, ..., p_r` with every value in `[0, r]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PriceSeq {
    values: Vec<f64>,
}

impl PriceSeq {
    /// Validates `values` (nonempty, finite, each in `[0, r]`).
    pub fn new(values: Vec<f64>) -> Result<Self> {
        let order = values.len();
        if order == 0 {
            return Err(SjaError::InvalidParameter(
                "price sequence must contain at least one price".into(),
            ));
        }
        for (index, &value) in values.iter().enumerate() {
            if !value.is_finite() || value < 0.0 || value > order as f64 {
                return Err(SjaError::PriceOutOfRange {
                    index,
                    value,
                    order,
                });
            }
        }
        Ok(Self { values })
    }

    /// The order `r`.
    pub fn order(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Applies the duplication rule `p_s <- min_{j >= s} p_j` in place.
pub fn apply_duplication_rule(p: &mut [f64]) {
    for s in (0..p.len().saturating_sub(1)).rev() {
        if p[s + 1] < p[s] {
            p[s] = p[s + 1];
        }
    }
}

/// Returns the duplication-normalized copy of `p`.
pub fn duplication_normalized(p: &[f64]) -> Vec<f64> {
    let mut q = p.to_vec();
    apply_duplication_rule(&mut q);
    q
}

/// Duplication rule, clamping to `p_s >= 0`, and `p_1 <= 1`.
///
/// Returns `false` when `p_1 <= 0`, in which case every point sells.
fn reduce(p: &mut [f64]) -> bool {
    apply_duplication_rule(p);
    for x in p.iter_mut() {
        if *x < 0.0 {
            *x = 0.0;
        }
    }
    if p[0] > 1.0 {
        p[0] = 1.0;
    }
    p[0] > 0.0
}

/// Whether a reduced sequence lies in the canonical cone.
pub fn is_canonical(p: &[f64]) -> bool {
    if p.is_empty() || p[0] > 1.0 {
        return false;
    }
    let mut prev = p[0];
    for s in 1..p.len() {
        let d = p[s] - p[s - 1];
        let slack = CANONICAL_SLACK * (1.0 + p[s].abs());
        if d < -slack || d > prev + slack {
            return false;
        }
        prev = d;
    }
    true
}

/// `v(p)` on the canonical cone by the exact price recursion.
fn canonical_volume(p: &[f64]) -> f64 {
    let r = p.len();
    if p[0] <= 0.0 {
        return 1.0;
    }
    if r == 1 {
        return 1.0 - p[0];
    }
    let mut breaks = [0.0f64; DEFAULT_ORDER_CAP + 2];
    for (i, s) in (1..r).rev().enumerate() {
        breaks[i + 1] = (p[s] - p[s - 1]).clamp(0.0, p[0]);
    }
    breaks[r] = p[0];
    let (nodes, weights) = gauss_legendre(r.div_ceil(2));
    let mut total = KahanSum::default();
    total.add(1.0 - p[0]);
    let mut q = [0.0f64; DEFAULT_ORDER_CAP];
    for w in breaks[..=r].windows(2) {
        let (a, b) = (w[0], w[1]);
        if b <= a {
            continue;
        }
        let (mid, half) = (0.5 * (a + b), 0.5 * (b - a));
        for (x, wt) in nodes.iter().zip(weights) {
            let t = mid + half * x;
            for s in 0..r - 1 {
                q[s] = p[s].min(p[s + 1] - t);
            }
            let child = &mut q[..r - 1];
            let inner = if reduce(child) {
                canonical_volume(child)
            } else {
                1.0
            };
            total.add(wt * half * inner);
        }
    }
    total.value()
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|i| i as f64).product()
}

/// Volume of `{ g >= 0 : sum_l min(s, l) g_l <= p_s, s = 1..d }`.
///
/// With `shortcut`, canonical subproblems switch to [`canonical_volume`].
fn gap_volume(p: &[f64], shortcut: bool) -> f64 {
    let d = p.len();
    let mut q = [0.0f64; DEFAULT_ORDER_CAP];
    q[..d].copy_from_slice(p);
    let q = &mut q[..d];
    apply_duplication_rule(q);
    if q[0] <= 0.0 {
        return 0.0;
    }
    if d == 1 {
        return q[0];
    }
    if shortcut && q[0] <= 1.0 && is_canonical(q) {
        return (1.0 - canonical_volume(q)) / factorial(d);
    }
    let reach = (0..d)
        .map(|s| q[s] / (s + 1) as f64)
        .fold(f64::INFINITY, f64::min);
    let mut breaks = vec![0.0];
    breaks.extend(kink_events(q, reach));
    breaks.push(reach);
    let (nodes, weights) = gauss_legendre(d.div_ceil(2));
    let mut total = KahanSum::default();
    let mut child = [0.0f64; DEFAULT_ORDER_CAP];
    for w in breaks.windows(2) {
        let (a, b) = (w[0], w[1]);
        if b <= a {
            continue;
        }
        let (mid, half) = (0.5 * (a + b), 0.5 * (b - a));
        for (x, wt) in nodes.iter().zip(weights) {
            let t = mid + half * x;
            for s in 0..d - 1 {
                child[s] = q[s] - (s + 1) as f64 * t;
            }
            child[d - 2] = child[d - 2].min(q[d - 1] - d as f64 * t);
            total.add(wt * half * gap_volume(&child[..d - 1], shortcut));
        }
    }
    total.value()
}

/// Parameter values in `(0, reach)` at which the slice of the gap polytope
/// at `g_d = t` acquires a degenerate vertex.
fn kink_events(p: &[f64], reach: f64) -> Vec<f64> {
    let d = p.len();
    let n = d - 1;
    // Slice constraints in R^n as (coefficients, rhs at t=0, rhs slope in t).
    let mut rows: Vec<([f64; DEFAULT_ORDER_CAP], f64, f64)> = Vec::with_capacity(2 * d);
    for s in 1..=d {
        let mut a = [0.0; DEFAULT_ORDER_CAP];
        for (l, coef) in a.iter_mut().enumerate().take(n) {
            *coef = s.min(l + 1) as f64;
        }
        rows.push((a, p[s - 1], -(s as f64)));
    }
    for l in 0..n {
        let mut a = [0.0; DEFAULT_ORDER_CAP];
        a[l] = -1.0;
        rows.push((a, 0.0, 0.0));
    }
    let scale = 1.0 + p.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let mut events = Vec::new();
    let mut subset: Vec<usize> = (0..d).collect();
    let mut mat = [[0.0f64; DEFAULT_ORDER_CAP + 1]; DEFAULT_ORDER_CAP + 1];
    loop {
        let fill = |mat: &mut [[f64; DEFAULT_ORDER_CAP + 1]; DEFAULT_ORDER_CAP + 1], t: f64| {
            for (i, &ri) in subset.iter().enumerate() {
                let (a, b0, slope) = &rows[ri];
                mat[i][..n].copy_from_slice(&a[..n]);
                mat[i][n] = b0 + slope * t;
            }
        };
        fill(&mut mat, 0.0);
        let alpha = determinant(&mut mat, d);
        fill(&mut mat, 1.0);
        let beta = determinant(&mut mat, d) - alpha;
        if beta.abs() > 1e-12 * (alpha.abs() + beta.abs()) && beta != 0.0 {
            let t = -alpha / beta;
            let margin = 1e-13 * reach.max(1e-300);
            if t > margin && t < reach - margin && degenerate_vertex_feasible(&rows, &subset, n, t, scale) {
                events.push(t);
            }
        }
        if !next_combination(&mut subset, rows.len()) {
            break;
        }
    }
    events.sort_by(f64::total_cmp);
    events.dedup_by(|a, b| (*a - *b).abs() <= 1e-13 * reach);
    events
}

fn next_combination(c: &mut [usize], n: usize) -> bool {
    let k = c.len();
    let mut i = k;
    while i > 0 {
        i -= 1;
        if c[i] < n - k + i {
            c[i] += 1;
            for j in i + 1..k {
                c[j] = c[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// Determinant of the leading `n x n` block by partial-pivot elimination.
fn determinant(m: &mut [[f64; DEFAULT_ORDER_CAP + 1]; DEFAULT_ORDER_CAP + 1], n: usize) -> f64 {
    let mut det = 1.0;
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&a, &b| m[a][col].abs().total_cmp(&m[b][col].abs()))
            .unwrap_or(col);
        if m[piv][col] == 0.0 {
            return 0.0;
        }
        if piv != col {
            m.swap(piv, col);
            det = -det;
        }
        det *= m[col][col];
        for row in col + 1..n {
            let f = m[row][col] / m[col][col];
            if f != 0.0 {
                for k in col..n {
                    m[row][k] -= f * m[col][k];
                }
            }
        }
    }
    det
}

/// Solves the concurrent system at parameter `t` and checks that the common
/// point satisfies every slice constraint.
fn degenerate_vertex_feasible(
    rows: &[([f64; DEFAULT_ORDER_CAP], f64, f64)],
    subset: &[usize],
    n: usize,
    t: f64,
    scale: f64,
) -> bool {
    if n == 0 {
        return true;
    }
    let mut best: Option<([f64; DEFAULT_ORDER_CAP], f64)> = None;
    for skip in 0..subset.len() {
        let mut m = [[0.0f64; DEFAULT_ORDER_CAP + 1]; DEFAULT_ORDER_CAP + 1];
        for (i, &ri) in subset.iter().filter(|&&ri| ri != subset[skip]).enumerate() {
            let (a, b0, slope) = &rows[ri];
            m[i][..n].copy_from_slice(&a[..n]);
            m[i][n] = b0 + slope * t;
        }
        if let Some((y, quality)) = solve_square(m, n) {
            if best.as_ref().is_none_or(|(_, q)| quality > *q) {
                best = Some((y, quality));
            }
        }
    }
    let Some((y, _)) = best else {
        return false;
    };
    let tol = 1e-9 * scale;
    rows.iter().all(|(a, b0, slope)| {
        let lhs: f64 = a[..n].iter().zip(&y[..n]).map(|(a, y)| a * y).sum();
        lhs <= b0 + slope * t + tol
    })
}

/// Solves the `n x n` system stored with its right-hand side in column `n`.
/// Returns the solution and the smallest absolute pivot.
fn solve_square(
    mut m: [[f64; DEFAULT_ORDER_CAP + 1]; DEFAULT_ORDER_CAP + 1],
    n: usize,
) -> Option<([f64; DEFAULT_ORDER_CAP], f64)> {
    let mut min_pivot = f64::INFINITY;
    for col in 0..n {
        let piv = (col..n).max_by(|&a, &b| m[a][col].abs().total_cmp(&m[b][col].abs()))?;
        if m[piv][col].abs() < 1e-12 {
            return None;
        }
        min_pivot = min_pivot.min(m[piv][col].abs());
        m.swap(piv, col);
        for row in 0..n {
            if row != col {
                let f = m[row][col] / m[col][col];
                for k in col..=n {
                    m[row][k] -= f * m[col][k];
                }
            }
        }
    }
    let mut y = [0.0; DEFAULT_ORDER_CAP];
    for i in 0..n {
        y[i] = m[i][n] / m[i][i];
    }
    Some((y, min_pivot))
}

/// `v(p)` for an unvalidated price slice of any order up to the cap.
pub(crate) fn volume_unchecked(p: &[f64]) -> f64 {
    let r = p.len();
    let mut q = [0.0f64; DEFAULT_ORDER_CAP];
    q[..r].copy_from_slice(p);
    let q = &mut q[..r];
    if !reduce(q) {
        return 1.0;
    }
    if is_canonical(q) {
        canonical_volume(q)
    } else {
        1.0 - factorial(r) * gap_volume(q, true)
    }
}

/// Volume of `{ g >= 0 : sum_l min(s, l) g_l <= t_s, s = 1..d }`.
pub(crate) fn gap_polytope_volume(t: &[f64]) -> f64 {
    gap_volume(t, true)
}

/// The sell-at-least-one volume `v(p_1, ..., p_r)`.
///
/// Orders above [`DEFAULT_ORDER_CAP`] are rejected.
pub fn slice_volume(prices: &PriceSeq) -> Result<f64> {
    slice_volume_capped(prices, DEFAULT_ORDER_CAP)
}

/// [`slice_volume`] with an explicit order cap (never above the default).
pub fn slice_volume_capped(prices: &PriceSeq, cap: usize) -> Result<f64> {
    let order = prices.order();
    let cap = cap.min(DEFAULT_ORDER_CAP);
    if order > cap {
        return Err(SjaError::RecursionDepthUnsupported { order, cap });
    }
    Ok(volume_unchecked(prices.values()).clamp(0.0, 1.0))
}

/// `v(p)` through the gap-coordinate slicing recursion alone, without
/// switching to the canonical polynomial path at any level.
///
/// Slower than [`slice_volume`]; intended as an independent cross-check.
pub fn slice_volume_by_slicing(prices: &PriceSeq) -> Result<f64> {
    let order = prices.order();
    if order > DEFAULT_ORDER_CAP {
        return Err(SjaError::RecursionDepthUnsupported {
            order,
            cap: DEFAULT_ORDER_CAP,
        });
    }
    let mut q = prices.values().to_vec();
    if !reduce(&mut q) {
        return Ok(1.0);
    }
    Ok((1.0 - factorial(order) * gap_volume(&q, false)).clamp(0.0, 1.0))
}

/// Whether at least one item sells to valuation `x` at bundle prices `p`:
/// some `s` has the `s` largest coordinates summing strictly above `p_s`.
pub fn sells(p: &[f64], x: &[f64]) -> bool {
    let mut y = [0.0f64; 64];
    let y = &mut y[..x.len()];
    y.copy_from_slice(x);
    y.sort_unstable_by(|a, b| b.total_cmp(a));
    let mut sum = 0.0;
    for (s, yi) in y.iter().enumerate().take(p.len()) {
        sum += yi;
        if sum > p[s] {
            return true;
        }
    }
    false
}

/// Monte-Carlo estimate of `v(p)` from `samples` uniform draws.
pub fn mc_sale_probability(prices: &PriceSeq, samples: u64, seed: u64) -> Result<McEstimate> {
    if samples == 0 {
        return Err(SjaError::InvalidParameter("samples must be at least 1".into()));
    }
    if prices.order() > 64 {
        return Err(SjaError::InvalidParameter("order above 64 not sampled".into()));
    }
    let p = prices.values();
    Ok(hypercube_mean(prices.order(), samples, seed, |x| {
        if sells(p, x) {
            1.0
        } else {
            0.0
        }
    }))
}
