//! SIM-bodies `q * Lambda(alpha_1, ..., alpha_r)`: the points `x >= 0` whose
//! every subset of `s` coordinates sums to at most `q` times the sum of the
//! `s` largest `alpha`s.

use crate::error::{Result, SjaError};
use crate::volumes::volume_unchecked;
use serde::{Deserialize, Serialize};

/// Relative slack of the membership test.
const MEMBERSHIP_SLACK: f64 = 1e-12;

/// A SIM-body with sorted parameters `alpha_1 <= ... <= alpha_r` and scale `q`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimBody {
    alphas: Vec<f64>,
    scale: f64,
}

impl SimBody {
    /// `Lambda(alphas)`; the parameters are sorted non-decreasingly.
    pub fn new(alphas: Vec<f64>) -> Result<Self> {
        Self::with_scale(alphas, 1.0)
    }

    /// `scale * Lambda(alphas)`.
    pub fn with_scale(mut alphas: Vec<f64>, scale: f64) -> Result<Self> {
        if alphas.is_empty() {
            return Err(SjaError::InvalidParameter("SIM-body needs at least one parameter".into()));
        }
        if alphas.iter().any(|a| !(a.is_finite() && *a > 0.0)) {
            return Err(SjaError::InvalidParameter("SIM-body parameters must be positive".into()));
        }
        if !(scale.is_finite() && scale > 0.0) {
            return Err(SjaError::InvalidParameter("SIM-body scale must be positive".into()));
        }
        alphas.sort_by(f64::total_cmp);
        Ok(Self { alphas, scale })
    }

    pub fn dim(&self) -> usize {
        self.alphas.len()
    }

    pub fn alphas(&self) -> &[f64] {
        &self.alphas
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// `q * Lambda` for this body scaled by a further factor `q`.
    pub fn scaled(&self, q: f64) -> Result<Self> {
        Self::with_scale(self.alphas.clone(), self.scale * q)
    }

    /// Width `w = q * alpha_r`, the length of every axis projection.
    pub fn width(&self) -> f64 {
        self.scale * self.alphas[self.dim() - 1]
    }

    /// Bounds `T_s = q * (alpha_r + ... + alpha_{r-s+1})` on the sum of the
    /// `s` largest coordinates.
    pub fn tail_sums(&self) -> Vec<f64> {
        self.alphas
            .iter()
            .rev()
            .scan(0.0, |acc, a| {
                *acc += a;
                Some(*acc * self.scale)
            })
            .collect()
    }

    /// The projection along any axis, `q * Lambda(alpha_2, ..., alpha_r)`;
    /// `None` for a one-dimensional body.
    pub fn projection(&self) -> Option<SimBody> {
        (self.dim() > 1).then(|| SimBody {
            alphas: self.alphas[1..].to_vec(),
            scale: self.scale,
        })
    }
}

/// Whether `x` lies in the body (only the `s` largest coordinates matter
/// for each subset size `s`).
pub fn sim_membership(body: &SimBody, x: &[f64]) -> Result<bool> {
    if x.len() != body.dim() {
        return Err(SjaError::DimensionMismatch {
            expected: body.dim(),
            got: x.len(),
        });
    }
    if x.iter().any(|v| *v < 0.0 || !v.is_finite()) {
        return Ok(false);
    }
    let mut y = x.to_vec();
    y.sort_by(|a, b| b.total_cmp(a));
    let mut sum = 0.0;
    Ok(y.iter().zip(body.tail_sums()).all(|(yi, bound)| {
        sum += yi;
        sum <= bound * (1.0 + MEMBERSHIP_SLACK)
    }))
}

/// Exact volume of the body.
///
/// With `w` the width and `T` the tail sums, `|Lambda| = w^r (1 - v(T / w))`
/// where `v` is the sell-at-least-one volume; `T / w` is always canonical.
pub fn sim_volume(body: &SimBody) -> f64 {
    let w = body.width();
    let prices: Vec<f64> = body.tail_sums().iter().map(|t| t / w).collect();
    w.powi(body.dim() as i32) * (1.0 - volume_unchecked(&prices))
}

/// `delta_k = |Lambda| - k * sum_j |Lambda_{[r] \ j}|`; the `(r-1)`-dimensional
/// projections all equal `q * Lambda(alpha_2, ..., alpha_r)`, and a point
/// has unit zero-dimensional volume.
pub fn sim_deficiency(body: &SimBody, k: f64) -> f64 {
    let proj = body.projection().map_or(1.0, |p| sim_volume(&p));
    sim_volume(body) - k * body.dim() as f64 * proj
}

#[cfg(test)]
mod tests {
    use super::*;

    const S2: f64 = std::f64::consts::SQRT_2;

    #[test]
    fn two_dimensional_volume_closed_form() {
        let b = SimBody::new(vec![1.0, 1.0 + S2]).unwrap();
        assert!((sim_volume(&b) - (2.0 + 2.0 * S2)).abs() < 1e-13);
    }

    #[test]
    fn segment_volume_is_its_length() {
        let b = SimBody::new(vec![0.7]).unwrap();
        assert!((sim_volume(&b) - 0.7).abs() < 1e-15);
    }

    #[test]
    fn extreme_point_is_member_and_outer_point_is_not() {
        let b = SimBody::new(vec![1.0, 1.0 + S2]).unwrap();
        assert!(sim_membership(&b, &[1.0, 1.0 + S2]).unwrap());
        assert!(!sim_membership(&b, &[1.0 + S2, 1.0 + S2]).unwrap());
        let c = SimBody::new(vec![1.0, 2.0, 3.0]).unwrap();
        assert!(sim_membership(&c, &[1.0, 1.0, 1.0]).unwrap());
        assert!(sim_membership(&c, &[1.0]).is_err());
    }
}
