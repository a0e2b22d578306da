//! Maximum-deficiency search over downwards-closed symmetric lattice
//! sub-bodies, and structural checks on voxel bodies.
//!
//! A downwards-closed symmetric lattice body is a union of permutation
//! orbits of cells; it is determined by its set of orbit representatives
//! (cells with non-increasing coordinates), which must be an order ideal of
//! the representative poset. For such bodies every projection
//! `A_{[m] \ j}` equals the slice `x_j = 0`, so the deficiency is
//! `h^m * count - k * m * h^(m-1) * count_0` with `count_0` the number of
//! cells whose first coordinate is zero.

use super::voxel::VoxelBody;
use crate::error::{Result, SjaError};
use crate::mc::chunk_rng;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;

/// Search strategy of [`deficiency_search`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SearchMode {
    /// Every nonempty downwards-closed symmetric sub-body.
    Exhaustive,
    /// Greedy single-orbit additions and removals from two starting bodies.
    Local,
}

/// Largest grid accepted by exhaustive search, per dimension (index = dim).
pub const EXHAUSTIVE_GRID_LIMIT: [usize; 4] = [usize::MAX, usize::MAX, 24, 8];

/// Result of [`deficiency_search`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeficiencySearch {
    pub mode: SearchMode,
    pub k: f64,
    /// Maximum deficiency found, `-inf` when the family is empty.
    pub best: f64,
    pub witness: Option<VoxelBody>,
    /// Number of sub-bodies evaluated.
    pub evaluated: u64,
    /// Grid-dependent discretization slack, see [`grid_slack_bound`].
    pub slack_bound: f64,
    pub family: String,
}

/// Slack between lattice and continuous deficiencies: the volume of one
/// boundary layer of cells plus `k` times the projection area of one layer,
/// `m g^(m-1) h^m + k m (m-1) g^(m-2) h^(m-1)` for grid `g` and cell side `h`.
pub fn grid_slack_bound(container: &VoxelBody, k: f64) -> f64 {
    let m = container.dim() as i32;
    let g = container.grid() as f64;
    let h = container.cell_size();
    let layer = m as f64 * g.powi(m - 1) * h.powi(m);
    let proj = if m >= 2 {
        m as f64 * (m - 1) as f64 * g.powi(m - 2) * h.powi(m - 1)
    } else {
        0.0
    };
    layer + k * proj
}

struct Orbits {
    reps: Vec<Vec<usize>>,
    size: Vec<u64>,
    zero: Vec<u64>,
    lower: Vec<Vec<usize>>,
    upper: Vec<Vec<usize>>,
}

fn factorial(n: usize) -> u64 {
    (1..=n as u64).product()
}

fn multiset_perms(cell: &[usize]) -> u64 {
    let mut sorted = cell.to_vec();
    sorted.sort_unstable();
    let mut denom = 1;
    let mut i = 0;
    while i < sorted.len() {
        let j = (i..sorted.len()).find(|&j| sorted[j] != sorted[i]).unwrap_or(sorted.len());
        denom *= factorial(j - i);
        i = j;
    }
    factorial(cell.len()) / denom
}

fn orbits(container: &VoxelBody) -> Orbits {
    let mut reps: Vec<Vec<usize>> = (0..container.len())
        .filter(|&i| container.occupancy()[i])
        .map(|i| container.cell(i))
        .filter(|c| c.windows(2).all(|w| w[0] >= w[1]))
        .collect();
    reps.sort_by(|a, b| {
        a.iter().sum::<usize>().cmp(&b.iter().sum::<usize>()).then_with(|| a.cmp(b))
    });
    let pos = |c: &[usize]| reps.binary_search_by(|r| {
        r.iter().sum::<usize>().cmp(&c.iter().sum::<usize>()).then_with(|| r.as_slice().cmp(c))
    });
    let n = reps.len();
    let mut lower = vec![Vec::new(); n];
    let mut upper = vec![Vec::new(); n];
    for (i, r) in reps.iter().enumerate() {
        for a in 0..r.len() {
            if r[a] == 0 {
                continue;
            }
            let mut c = r.clone();
            c[a] -= 1;
            c.sort_unstable_by(|x, y| y.cmp(x));
            if let Ok(j) = pos(&c) {
                if !lower[i].contains(&j) {
                    lower[i].push(j);
                    upper[j].push(i);
                }
            }
        }
    }
    let size = reps.iter().map(|r| multiset_perms(r)).collect();
    let zero = reps
        .iter()
        .map(|r| {
            if r.last() == Some(&0) {
                multiset_perms(&r[..r.len() - 1])
            } else {
                0
            }
        })
        .collect();
    Orbits { reps, size, zero, lower, upper }
}

struct Best {
    delta: f64,
    count: u64,
    chosen: Vec<bool>,
}

fn body_from(container: &VoxelBody, orb: &Orbits, chosen: &[bool]) -> VoxelBody {
    let mut b = VoxelBody::empty(container.dim(), container.grid(), container.cell_size())
        .expect("container parameters are valid");
    for (i, r) in orb.reps.iter().enumerate() {
        if chosen[i] {
            for_each_perm(r, |c| b.set(c, true));
        }
    }
    b
}

fn for_each_perm(rep: &[usize], mut f: impl FnMut(&[usize])) {
    let mut c = rep.to_vec();
    c.sort_unstable();
    loop {
        f(&c);
        // next lexicographic permutation
        let Some(i) = (0..c.len().saturating_sub(1)).rev().find(|&i| c[i] < c[i + 1]) else {
            return;
        };
        let j = (i + 1..c.len()).rev().find(|&j| c[j] > c[i]).expect("successor exists");
        c.swap(i, j);
        c[i + 1..].reverse();
    }
}

struct Ctx<'a> {
    container: &'a VoxelBody,
    orb: &'a Orbits,
    vol_unit: f64,
    proj_unit: f64,
    best: Option<Best>,
    evaluated: u64,
}

impl Ctx<'_> {
    fn delta(&self, count: u64, zero: u64) -> f64 {
        count as f64 * self.vol_unit - self.proj_unit * zero as f64
    }

    fn offer(&mut self, count: u64, zero: u64, chosen: &[bool]) {
        if count == 0 {
            return;
        }
        self.evaluated += 1;
        let delta = self.delta(count, zero);
        let better = match &self.best {
            None => true,
            Some(b) => {
                let tol = 1e-12 * (1.0 + b.delta.abs());
                if delta > b.delta + tol {
                    true
                } else if delta < b.delta - tol {
                    false
                } else if count != b.count {
                    count > b.count
                } else {
                    let x = body_from(self.container, self.orb, chosen);
                    let y = body_from(self.container, self.orb, &b.chosen);
                    x.occupancy().cmp(y.occupancy()) == Ordering::Less
                }
            }
        };
        if better {
            self.best = Some(Best {
                delta,
                count,
                chosen: chosen.to_vec(),
            });
        }
    }
}

fn enumerate(ctx: &mut Ctx, i: usize, chosen: &mut Vec<bool>, count: u64, zero: u64) {
    if i == ctx.orb.reps.len() {
        ctx.offer(count, zero, chosen);
        return;
    }
    enumerate(ctx, i + 1, chosen, count, zero);
    if ctx.orb.lower[i].iter().all(|&j| chosen[j]) {
        chosen[i] = true;
        enumerate(ctx, i + 1, chosen, count + ctx.orb.size[i], zero + ctx.orb.zero[i]);
        chosen[i] = false;
    }
}

fn local(ctx: &mut Ctx, start: Vec<bool>) {
    let orb = ctx.orb;
    let mut chosen = start;
    let mut count: u64 = (0..chosen.len()).filter(|&i| chosen[i]).map(|i| orb.size[i]).sum();
    let mut zero: u64 = (0..chosen.len()).filter(|&i| chosen[i]).map(|i| orb.zero[i]).sum();
    ctx.offer(count, zero, &chosen);
    loop {
        let cur = if count == 0 { f64::NEG_INFINITY } else { ctx.delta(count, zero) };
        let mut best_move: Option<(usize, f64)> = None;
        for i in 0..chosen.len() {
            let (c2, z2) = if chosen[i] {
                if orb.upper[i].iter().any(|&u| chosen[u]) {
                    continue;
                }
                (count - orb.size[i], zero - orb.zero[i])
            } else {
                if !orb.lower[i].iter().all(|&l| chosen[l]) {
                    continue;
                }
                (count + orb.size[i], zero + orb.zero[i])
            };
            if c2 == 0 {
                continue;
            }
            let d = ctx.delta(c2, z2);
            if d > cur + 1e-12 && best_move.is_none_or(|(_, bd)| d > bd) {
                best_move = Some((i, d));
            }
        }
        let Some((i, _)) = best_move else { break };
        if chosen[i] {
            count -= orb.size[i];
            zero -= orb.zero[i];
        } else {
            count += orb.size[i];
            zero += orb.zero[i];
        }
        chosen[i] = !chosen[i];
        ctx.offer(count, zero, &chosen);
    }
}

/// Maximizes `delta_k` over nonempty downwards-closed symmetric lattice
/// sub-bodies of `container`.
///
/// The container itself must be downwards closed and symmetric. Exhaustive
/// mode is limited to the grids in [`EXHAUSTIVE_GRID_LIMIT`]. Ties prefer
/// the larger volume, then the lexicographically smallest occupancy vector.
pub fn deficiency_search(container: &VoxelBody, k: f64, mode: SearchMode) -> Result<DeficiencySearch> {
    if !(k > 0.0) {
        return Err(SjaError::InvalidParameter("k must be positive".into()));
    }
    if !container.is_downwards_closed() || !container.is_symmetric() {
        return Err(SjaError::InvalidParameter(
            "container must be downwards closed and symmetric".into(),
        ));
    }
    let dim = container.dim();
    if mode == SearchMode::Exhaustive {
        let limit = EXHAUSTIVE_GRID_LIMIT.get(dim).copied().unwrap_or(0);
        if container.grid() > limit {
            return Err(SjaError::SearchSpaceTooLarge(format!(
                "exhaustive search supports grid <= {limit} in dimension {dim}, got {}",
                container.grid()
            )));
        }
    }
    let orb = orbits(container);
    let h = container.cell_size();
    let mut ctx = Ctx {
        container,
        orb: &orb,
        vol_unit: h.powi(dim as i32),
        proj_unit: k * dim as f64 * h.powi(dim as i32 - 1),
        best: None,
        evaluated: 0,
    };
    let n = orb.reps.len();
    match mode {
        SearchMode::Exhaustive => {
            let mut chosen = vec![false; n];
            enumerate(&mut ctx, 0, &mut chosen, 0, 0);
        }
        SearchMode::Local => {
            if n > 0 {
                let mut seed = vec![false; n];
                seed[0] = true;
                local(&mut ctx, seed);
                local(&mut ctx, vec![true; n]);
            }
        }
    }
    let (best, witness) = match ctx.best.take() {
        Some(b) => (b.delta, Some(body_from(container, &orb, &b.chosen))),
        None => (f64::NEG_INFINITY, None),
    };
    Ok(DeficiencySearch {
        mode,
        k,
        best,
        witness,
        evaluated: ctx.evaluated,
        slack_bound: grid_slack_bound(container, k),
        family: "nonempty downwards-closed symmetric lattice sub-bodies".into(),
    })
}

/// Outcome of [`structure_checks`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StructureReport {
    pub deficiency: f64,
    pub symmetric: bool,
    pub downwards_closed: bool,
    /// `|A|^(m-1) <= prod_j |A_{[m] \ j}|`.
    pub loomis_whitney: bool,
    pub loomis_whitney_lhs: f64,
    pub loomis_whitney_rhs: f64,
    /// For symmetric downwards-closed bodies with `delta_k >= 0`: whether
    /// the chain point `(k, 2k, ..., mk)` lies in the body.
    pub chain_point: Option<bool>,
    /// Same precondition: `w(A) >= k m`.
    pub width_bound: Option<bool>,
    /// Same precondition: `|A| >= (k m)^m`.
    pub volume_bound: Option<bool>,
    pub supermodular_pairs: usize,
    pub supermodular_failures: usize,
}

impl StructureReport {
    pub fn pass(&self) -> bool {
        self.loomis_whitney
            && self.chain_point != Some(false)
            && self.width_bound != Some(false)
            && self.volume_bound != Some(false)
            && self.supermodular_failures == 0
    }
}

/// Loomis-Whitney, chain-point, width/volume lower bounds, and
/// supermodularity of `delta_k` on `pairs` random pairs of sub-bodies.
pub fn structure_checks(body: &VoxelBody, k: f64, pairs: usize, seed: u64) -> StructureReport {
    let m = body.dim();
    let vol = body.volume();
    let lhs = if m >= 1 { vol.powi(m as i32 - 1) } else { 1.0 };
    let rhs: f64 = (0..m).map(|j| body.project_without(j).volume()).product();
    let loomis_whitney = lhs <= rhs * (1.0 + 1e-12) + 1e-300;
    let deficiency = body.deficiency(k);
    let symmetric = body.is_symmetric();
    let downwards_closed = body.is_downwards_closed();
    let applicable = symmetric && downwards_closed && deficiency >= 0.0 && !body.is_empty();
    let km = k * m as f64;
    let chain: Vec<f64> = (1..=m).map(|i| k * i as f64).collect();
    let chain_point = applicable.then(|| body.contains_point(&chain));
    let width_bound = applicable.then(|| body.width() >= km * (1.0 - 1e-12));
    let volume_bound = applicable.then(|| vol >= km.powi(m as i32) * (1.0 - 1e-12));

    let mut rng = chunk_rng(seed, 0);
    let occupied: Vec<usize> = (0..body.len()).filter(|&i| body.occupancy()[i]).collect();
    let mut failures = 0;
    for _ in 0..pairs {
        let mut a = vec![false; body.len()];
        let mut b = vec![false; body.len()];
        for &i in &occupied {
            a[i] = rng.random::<bool>();
            b[i] = rng.random::<bool>();
        }
        let mk = |occ| VoxelBody::from_occupancy(m, body.grid(), body.cell_size(), occ).expect("same lattice");
        let (a, b) = (mk(a), mk(b));
        let lhs = a.union(&b).deficiency(k) + a.intersection(&b).deficiency(k);
        let rhs = a.deficiency(k) + b.deficiency(k);
        if lhs < rhs - 1e-9 * (1.0 + rhs.abs()) {
            failures += 1;
        }
    }
    StructureReport {
        deficiency,
        symmetric,
        downwards_closed,
        loomis_whitney,
        loomis_whitney_lhs: lhs,
        loomis_whitney_rhs: rhs,
        chain_point,
        width_bound,
        volume_bound,
        supermodular_pairs: pairs,
        supermodular_failures: failures,
    }
}
