//! The deterministic symmetric mechanism induced by bundle prices
//! `p_1..p_m` (with `p_0 = 0`): the buyer with valuation `x` receives the
//! bundle `J` maximizing `sum_{j in J} x_j - p_{|J|}`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SjaError};
use crate::mc::{chunk_rng, hypercube_mean};
use crate::numeric::polytope_volume;
use crate::pricing::{normalize, solve_prices, PriceProfile, DEFAULT_TOL};
use crate::volumes::{gap_polytope_volume, volume_unchecked, DEFAULT_ORDER_CAP};

/// Largest number of items a mechanism may have.
pub const MAX_ITEMS: usize = 64;

/// Largest number of items for exact revenue and subdomain volumes.
pub const EXACT_ITEMS_LIMIT: usize = 3;

/// Step length used by the coordinate-increment checks.
pub const SPOTCHECK_STEP: f64 = 1e-3;

/// Absolute tolerance of the spot checks.
pub const SPOTCHECK_TOL: f64 = 1e-9;

/// Expected SJA revenue for two items, frozen from a `10^8`-sample
/// Monte-Carlo run (seed 0) with standard error below `1e-4`.
pub const SJA_M2_REVENUE_MC: f64 = 0.549_262_8;

/// Standard error of [`SJA_M2_REVENUE_MC`].
pub const SJA_M2_REVENUE_MC_STDERR: f64 = 3.93e-5;

/// A deterministic mechanism with bundle prices depending only on the
/// bundle size.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mechanism {
    prices: Vec<f64>,
    profile: Option<PriceProfile>,
}

/// Allocation and payment for one valuation profile. Items are 0-based and
/// listed in increasing order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    pub utility: f64,
    pub bundle: Vec<usize>,
    pub payment: f64,
}

/// How revenue and subdomain volumes are computed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    Exact,
    MonteCarlo { samples: u64, seed: u64 },
}

/// A value with a standard error when it was sampled.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub stderr: Option<f64>,
}

impl Mechanism {
    /// A mechanism charging `prices[r - 1]` for any bundle of `r` items.
    pub fn new(prices: Vec<f64>) -> Result<Self> {
        if prices.is_empty() || prices.len() > MAX_ITEMS {
            return Err(SjaError::InvalidParameter(format!(
                "number of items must be in 1..={MAX_ITEMS}, got {}",
                prices.len()
            )));
        }
        if let Some((i, p)) = prices.iter().enumerate().find(|(_, p)| !p.is_finite() || **p < 0.0) {
            return Err(SjaError::InvalidParameter(format!(
                "price p_{} = {p} must be finite and nonnegative",
                i + 1
            )));
        }
        Ok(Self {
            prices,
            profile: None,
        })
    }

    /// The mechanism charging the prices of `profile`.
    pub fn from_profile(profile: &PriceProfile) -> Result<Self> {
        let mut mech = Self::new(profile.p.clone())?;
        mech.profile = Some(profile.clone());
        Ok(mech)
    }

    /// The normalized Straight-Jacket Auction for `m` items.
    pub fn sja(m: usize) -> Result<Self> {
        Self::from_profile(&normalize(&solve_prices(m, DEFAULT_TOL)?))
    }

    /// Every bundle priced at `price`, so only the grand bundle is ever
    /// strictly worth buying.
    pub fn grand_bundle(m: usize, price: f64) -> Result<Self> {
        Self::new(vec![price; m])
    }

    /// Each item sold separately at `1/2`.
    pub fn separate_sale(m: usize) -> Result<Self> {
        Self::new((1..=m).map(|r| r as f64 / 2.0).collect())
    }

    pub fn items(&self) -> usize {
        self.prices.len()
    }

    pub fn prices(&self) -> &[f64] {
        &self.prices
    }

    /// `p_r` with `p_0 = 0`.
    pub fn price(&self, r: usize) -> f64 {
        if r == 0 {
            0.0
        } else {
            self.prices[r - 1]
        }
    }

    /// The price profile the mechanism was built from, if any.
    pub fn profile(&self) -> Option<&PriceProfile> {
        self.profile.as_ref()
    }
}

/// Sorts item indices by value, largest first, ties toward smaller indices,
/// and returns the best prefix size and its utility.
fn best_prefix(prices: &[f64], x: &[f64], order: &mut [usize]) -> (usize, f64) {
    for (i, o) in order.iter_mut().enumerate() {
        *o = i;
    }
    order.sort_by(|&a, &b| x[b].total_cmp(&x[a]).then(a.cmp(&b)));
    let (mut best, mut best_u) = (0, 0.0);
    let mut sum = 0.0;
    for (r, &i) in order.iter().enumerate() {
        sum += x[i];
        let u = sum - prices[r];
        if u > best_u {
            best = r + 1;
            best_u = u;
        }
    }
    (best, best_u)
}

fn check_point(m: usize, x: &[f64]) -> Result<()> {
    if x.len() != m {
        return Err(SjaError::DimensionMismatch {
            expected: m,
            got: x.len(),
        });
    }
    if let Some((j, v)) = x.iter().enumerate().find(|(_, v)| !(0.0..=1.0).contains(*v)) {
        return Err(SjaError::DomainViolation(format!(
            "coordinate {j} = {v} lies outside [0, 1]"
        )));
    }
    Ok(())
}

/// Utility, allocated bundle and payment at valuation `x`.
///
/// Ties go to the smaller bundle, then to the lexicographically smallest
/// item set.
pub fn evaluate(mech: &Mechanism, x: &[f64]) -> Result<Outcome> {
    let m = mech.items();
    check_point(m, x)?;
    let mut order = vec![0; m];
    let (size, utility) = best_prefix(&mech.prices, x, &mut order);
    let mut bundle = order[..size].to_vec();
    bundle.sort_unstable();
    Ok(Outcome {
        utility,
        bundle,
        payment: mech.price(size),
    })
}

/// Utility alone, without validation or allocation.
fn utility_of(prices: &[f64], x: &[f64]) -> f64 {
    let mut buf = [0usize; MAX_ITEMS];
    best_prefix(prices, x, &mut buf[..x.len()]).1
}

/// Allocated items as a bit mask, and the utility, at an unvalidated point.
pub(crate) fn allocation_mask(prices: &[f64], x: &[f64]) -> (u64, f64) {
    let mut buf = [0usize; MAX_ITEMS];
    let order = &mut buf[..x.len()];
    let (size, utility) = best_prefix(prices, x, order);
    (order[..size].iter().fold(0u64, |acc, &i| acc | 1 << i), utility)
}

/// Probability that the allocated bundle has exactly `r` items, for each
/// `r = 0..=m`, by exact integration over the sorted chamber.
fn bundle_size_distribution(prices: &[f64]) -> Vec<f64> {
    let m = prices.len();
    let price = |r: usize| if r == 0 { 0.0 } else { prices[r - 1] };
    let fact: f64 = (1..=m).map(|i| i as f64).product();
    (0..=m)
        .map(|r| {
            let mut rows = Vec::new();
            let mut a = vec![0.0; m];
            a[0] = 1.0;
            rows.push((a, 1.0));
            let mut a = vec![0.0; m];
            a[m - 1] = -1.0;
            rows.push((a, 0.0));
            for i in 0..m - 1 {
                let mut a = vec![0.0; m];
                a[i] = -1.0;
                a[i + 1] = 1.0;
                rows.push((a, 0.0));
            }
            for s in (0..=m).filter(|&s| s != r) {
                // S_s - S_r <= p_s - p_r
                let mut a = vec![0.0; m];
                for c in a.iter_mut().take(s.max(r)).skip(s.min(r)) {
                    *c = if s > r { 1.0 } else { -1.0 };
                }
                rows.push((a, price(s) - price(r)));
            }
            fact * polytope_volume(&rows, m)
        })
        .collect()
}

/// Expected payment under uniform valuations on `[0,1]^m`.
///
/// The exact method integrates the allocation regions and is available for
/// `m <= 3`.
pub fn expected_revenue(mech: &Mechanism, method: Method) -> Result<Estimate> {
    let m = mech.items();
    match method {
        Method::Exact => {
            if m > EXACT_ITEMS_LIMIT {
                return Err(SjaError::ExactUnsupported {
                    m,
                    limit: EXACT_ITEMS_LIMIT,
                });
            }
            let dist = bundle_size_distribution(&mech.prices);
            let value = dist.iter().enumerate().map(|(r, q)| mech.price(r) * q).sum();
            Ok(Estimate {
                value,
                stderr: None,
            })
        }
        Method::MonteCarlo { samples, seed } => {
            check_samples(samples)?;
            let prices = &mech.prices;
            let est = hypercube_mean(m, samples, seed, |x| {
                let mut buf = [0usize; MAX_ITEMS];
                let (size, _) = best_prefix(prices, x, &mut buf[..m]);
                if size == 0 {
                    0.0
                } else {
                    prices[size - 1]
                }
            });
            Ok(Estimate {
                value: est.estimate,
                stderr: Some(est.stderr),
            })
        }
    }
}

fn check_samples(samples: u64) -> Result<()> {
    if samples == 0 {
        Err(SjaError::InvalidParameter("samples must be at least 1".into()))
    } else {
        Ok(())
    }
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Volume of `U_J`, the region where exactly the bundle `J` (0-based items)
/// is allocated.
///
/// Exact volumes are available for `J` empty or `J = [m]` with `m` up to the
/// volume order cap, and for every `J` when `m <= 3`.
pub fn subdomain_volume(mech: &Mechanism, bundle: &[usize], method: Method) -> Result<Estimate> {
    let m = mech.items();
    let mut j: Vec<usize> = bundle.to_vec();
    j.sort_unstable();
    j.dedup();
    if j.len() != bundle.len() || j.last().is_some_and(|&i| i >= m) {
        return Err(SjaError::InvalidParameter(format!(
            "bundle {bundle:?} is not a set of items in 0..{m}"
        )));
    }
    let r = j.len();
    match method {
        Method::Exact => {
            let value = if r == 0 && m <= DEFAULT_ORDER_CAP {
                1.0 - volume_unchecked(&mech.prices).clamp(0.0, 1.0)
            } else if r == m && m <= DEFAULT_ORDER_CAP {
                // Sorted chamber with w = 1 - y: the t largest w sum to at
                // most t - (p_m - p_{m-t}).
                let t: Vec<f64> = (1..=m)
                    .map(|t| t as f64 - (mech.price(m) - mech.price(m - t)))
                    .collect();
                let fact: f64 = (1..=m).map(|i| i as f64).product();
                fact * gap_polytope_volume(&t)
            } else if m <= EXACT_ITEMS_LIMIT {
                bundle_size_distribution(&mech.prices)[r] / binomial(m, r)
            } else {
                return Err(SjaError::ExactUnsupported {
                    m,
                    limit: EXACT_ITEMS_LIMIT,
                });
            };
            Ok(Estimate {
                value,
                stderr: None,
            })
        }
        Method::MonteCarlo { samples, seed } => {
            check_samples(samples)?;
            let prices = &mech.prices;
            let est = hypercube_mean(m, samples, seed, |x| {
                let mut buf = [0usize; MAX_ITEMS];
                let (size, _) = best_prefix(prices, x, &mut buf[..m]);
                let chosen = &mut buf[..size];
                chosen.sort_unstable();
                if *chosen == j[..] {
                    1.0
                } else {
                    0.0
                }
            });
            Ok(Estimate {
                value: est.estimate,
                stderr: Some(est.stderr),
            })
        }
    }
}

/// Counts of failed checks from [`truthfulness_spotcheck`].
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpotcheckReport {
    pub samples: u64,
    pub ir_violations: u64,
    pub convexity_violations: u64,
    pub increment_violations: u64,
    pub integrality_checked: u64,
    pub integrality_violations: u64,
}

impl SpotcheckReport {
    pub fn pass(&self) -> bool {
        self.ir_violations == 0
            && self.convexity_violations == 0
            && self.increment_violations == 0
            && self.integrality_violations == 0
    }
}

/// Checks individual rationality, convexity along random segments and the
/// coordinate increments `u(x + d e_j) - u(x)` of the mechanism's utility.
pub fn truthfulness_spotcheck(mech: &Mechanism, samples: u64, seed: u64) -> SpotcheckReport {
    let prices = mech.prices.clone();
    spotcheck_utility(mech.items(), |x| utility_of(&prices, x), samples, seed)
}

/// [`truthfulness_spotcheck`] for an arbitrary utility function on
/// `[0,1]^m`.
///
/// On each sample:
/// * `u(x) >= 0`;
/// * `u((x + y)/2) <= (u(x) + u(y))/2`;
/// * `u(x + d e_j) - u(x)` lies in `[0, d]`;
/// * where `u` is affine on that step, the increment is `0` or `d`.
pub fn spotcheck_utility<U>(m: usize, u: U, samples: u64, seed: u64) -> SpotcheckReport
where
    U: Fn(&[f64]) -> f64,
{
    let mut rng = chunk_rng(seed, 0);
    let mut report = SpotcheckReport {
        samples,
        ..Default::default()
    };
    let (mut x, mut y, mut mid) = (vec![0.0; m], vec![0.0; m], vec![0.0; m]);
    let d = SPOTCHECK_STEP;
    for _ in 0..samples {
        for i in 0..m {
            x[i] = rng.random::<f64>();
            y[i] = rng.random::<f64>();
            mid[i] = 0.5 * (x[i] + y[i]);
        }
        let (ux, uy) = (u(&x), u(&y));
        if ux < -SPOTCHECK_TOL {
            report.ir_violations += 1;
        }
        if u(&mid) > 0.5 * (ux + uy) + SPOTCHECK_TOL {
            report.convexity_violations += 1;
        }
        let j = rng.random_range(0..m);
        x[j] *= 1.0 - d;
        let base = u(&x);
        let xj = x[j];
        let mut at = |s: f64| {
            x[j] = xj + s * d;
            let v = u(&x);
            x[j] = xj;
            v
        };
        let (q1, q2, q3, top) = (at(0.25), at(0.5), at(0.75), at(1.0));
        let inc = top - base;
        if inc < -SPOTCHECK_TOL || inc > d + SPOTCHECK_TOL {
            report.increment_violations += 1;
        }
        let affine = [(q1, 0.25), (q2, 0.5), (q3, 0.75)]
            .iter()
            .all(|(q, s)| (q - (base + s * inc)).abs() <= SPOTCHECK_TOL);
        if affine {
            report.integrality_checked += 1;
            if inc.abs() > 10.0 * SPOTCHECK_TOL && (inc - d).abs() > 10.0 * SPOTCHECK_TOL {
                report.integrality_violations += 1;
            }
        }
    }
    report
}

/// Cumulative distribution function of the sum of `m` independent
/// uniforms on `[0,1]`.
pub fn irwin_hall_cdf(m: usize, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= m as f64 {
        return 1.0;
    }
    let fact: f64 = (1..=m).map(|i| i as f64).product();
    let mut sum = 0.0;
    for k in 0..=(x.floor() as usize).min(m) {
        let term = binomial(m, k) * (x - k as f64).powi(m as i32);
        sum += if k % 2 == 0 { term } else { -term };
    }
    (sum / fact).clamp(0.0, 1.0)
}

/// The revenue-maximizing grand-bundle price and its revenue
/// `P (1 - F_m(P))`.
pub fn optimal_grand_bundle_price(m: usize) -> (f64, f64) {
    let rev = |p: f64| p * (1.0 - irwin_hall_cdf(m, p));
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (0.0, m as f64);
    for _ in 0..200 {
        let c = b - ratio * (b - a);
        let d = a + ratio * (b - a);
        if rev(c) < rev(d) {
            a = c;
        } else {
            b = d;
        }
    }
    let p = 0.5 * (a + b);
    (p, rev(p))
}

/// Both sides of the two-item deficiency decomposition on a midpoint grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecompositionReport {
    pub grid: usize,
    pub k: f64,
    /// `delta_k` of the sell-at-least-one region.
    pub total: f64,
    /// Integrated slice deficiencies of `U_{1}` and `U_{2}`.
    pub singles: [f64; 2],
    /// `delta_k(U_{12})`.
    pub pair: f64,
}

impl DecompositionReport {
    /// `total - (singles + pair)`.
    pub fn residual(&self) -> f64 {
        self.total - (self.singles[0] + self.singles[1] + self.pair)
    }
}

/// Evaluates both sides of `delta_k(V) = sum_L int delta_k(slice of U_L)`
/// for a two-item mechanism on a `grid x grid` midpoint lattice.
pub fn decomposition_check_m2(mech: &Mechanism, k: f64, grid: usize) -> Result<DecompositionReport> {
    if mech.items() != 2 {
        return Err(SjaError::InvalidParameter(format!(
            "decomposition check needs 2 items, got {}",
            mech.items()
        )));
    }
    if grid == 0 {
        return Err(SjaError::InvalidParameter("grid must be positive".into()));
    }
    let h = 1.0 / grid as f64;
    // Cell labels: 0 = nothing, 1 = {1}, 2 = {2}, 3 = {1,2}.
    let mut label = vec![0u8; grid * grid];
    for i in 0..grid {
        for j in 0..grid {
            let x = [(i as f64 + 0.5) * h, (j as f64 + 0.5) * h];
            let out = evaluate(mech, &x)?;
            label[i * grid + j] = out.bundle.iter().map(|&b| 1u8 << b).sum();
        }
    }
    let at = |i: usize, j: usize| label[i * grid + j];
    let count = |pred: &dyn Fn(u8) -> bool| {
        let cells = label.iter().filter(|&&l| pred(l)).count() as f64 * h * h;
        let rows_x1 = (0..grid).filter(|&i| (0..grid).any(|j| pred(at(i, j)))).count() as f64 * h;
        let rows_x2 = (0..grid).filter(|&j| (0..grid).any(|i| pred(at(i, j)))).count() as f64 * h;
        (cells, rows_x1, rows_x2)
    };
    let (v, v1, v2) = count(&|l| l != 0);
    let (u, u1, u2) = count(&|l| l == 3);
    let slice_term = |lab: u8, along_first: bool| {
        let mut total = 0.0;
        for t in 0..grid {
            let len = (0..grid)
                .filter(|&s| {
                    let l = if along_first { at(s, t) } else { at(t, s) };
                    l == lab
                })
                .count() as f64
                * h;
            let nonempty = if len > 0.0 { 1.0 } else { 0.0 };
            total += h * (len - k * nonempty);
        }
        total
    };
    Ok(DecompositionReport {
        grid,
        k,
        total: v - k * (v1 + v2),
        singles: [slice_term(1, true), slice_term(2, false)],
        pair: u - k * (u1 + u2),
    })
}
