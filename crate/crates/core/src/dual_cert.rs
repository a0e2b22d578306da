//! Discretized dual solutions for `m` uniform items and their certification
//! against the primal mechanism.
//!
//! The unit cube is cut into `N^m` cells of side `eps' = 1/N`. Every axis-`j`
//! line of cells is extended beyond `x_j = 1` by `N/(m+1)` boundary rows (the
//! layer `B`) and `g(m) = ceil(sqrt(m) + 1)` further rows (the layer `B*`).
//! A matching between the cells that sell something and the boundary rows
//! colors each matched cell with the direction of its line; the functions
//! `z_j` then grow at rate `m+1` through color-`j` cells and stay flat
//! elsewhere.
//!
//! All boundary rows of one line have the same neighbors, so the matching is
//! computed on lines with capacities and expanded to individual rows
//! afterwards.

use std::io::Write;

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Result, SjaError};
use crate::mc::chunk_rng;
use crate::mechanism::{allocation_mask, expected_revenue, Mechanism, Method};
use crate::numeric::KahanSum;

/// Largest item count certified without an explicit override.
pub const CERTIFY_ITEMS_LIMIT: usize = 3;

/// Largest number of cells a certification grid may have.
pub const MAX_CERT_CELLS: usize = 1 << 26;

/// Slack allowed below zero in the duality gap.
pub const WEAK_DUALITY_TOL: f64 = 1e-9;

/// How lattice points on region boundaries are assigned a bundle.
pub const TIE_BREAKING: &str = "smaller bundle first, then lexicographically smallest item set";

/// Default Monte-Carlo budget for the primal revenue above the exact limit.
pub const DEFAULT_REVENUE_SAMPLES: u64 = 10_000_000;

/// The `eps'`-lattice of the unit cube.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct CertGrid {
    m: usize,
    n: usize,
}

impl CertGrid {
    /// A grid of `n` cells per axis for `m` items; `n` must be a positive
    /// multiple of `m + 1`.
    pub fn new(m: usize, n: usize) -> Result<Self> {
        if m == 0 || m > 63 {
            return Err(SjaError::InvalidParameter(format!(
                "number of items must be in 1..=63, got {m}"
            )));
        }
        if n == 0 || !n.is_multiple_of(m + 1) {
            return Err(SjaError::GridMisaligned { n, modulus: m + 1 });
        }
        if (n as f64).powi(m as i32) > MAX_CERT_CELLS as f64 {
            return Err(SjaError::SearchSpaceTooLarge(format!(
                "{n}^{m} cells exceed the limit of {MAX_CERT_CELLS}"
            )));
        }
        Ok(Self { m, n })
    }

    pub fn items(&self) -> usize {
        self.m
    }

    /// Cells per axis `N`.
    pub fn cells_per_axis(&self) -> usize {
        self.n
    }

    /// `eps' = 1/N`.
    pub fn eps_prime(&self) -> f64 {
        1.0 / self.n as f64
    }

    /// `k = 1/(m+1)`.
    pub fn k(&self) -> f64 {
        1.0 / (self.m as f64 + 1.0)
    }

    /// `g(m) = ceil(sqrt(m) + 1)`.
    pub fn g(&self) -> usize {
        ((self.m as f64).sqrt() + 1.0).ceil() as usize
    }

    /// Rows of the layer `B` on each line, `N/(m+1)`.
    pub fn boundary_rows(&self) -> usize {
        self.n / (self.m + 1)
    }

    /// Complementarity tolerance `eps = g(m) m (m+1) eps'`.
    pub fn eps(&self) -> f64 {
        self.g() as f64 * self.m as f64 * (self.m as f64 + 1.0) * self.eps_prime()
    }

    /// Bound `(3m+1) eps` on the duality gap.
    pub fn gap_bound(&self) -> f64 {
        (3.0 * self.m as f64 + 1.0) * self.eps()
    }

    pub fn cell_count(&self) -> usize {
        self.n.pow(self.m as u32)
    }

    /// Number of axis-parallel lines of cells, `m N^(m-1)`.
    pub fn line_count(&self) -> usize {
        self.m * self.n.pow(self.m as u32 - 1)
    }

    /// Cell coordinates of a linear cell index (axis 0 varies fastest).
    pub fn cell_coords(&self, index: usize) -> Vec<usize> {
        let mut rest = index;
        (0..self.m)
            .map(|_| {
                let c = rest % self.n;
                rest /= self.n;
                c
            })
            .collect()
    }

    /// Linear index of cell coordinates.
    pub fn cell_index(&self, coords: &[usize]) -> usize {
        coords.iter().rev().fold(0, |acc, &c| acc * self.n + c)
    }

    /// The axis-`j` line through a cell.
    pub fn line_of(&self, j: usize, cell: usize) -> usize {
        let stride = self.n.pow(j as u32);
        let lo = cell % stride;
        let hi = cell / (stride * self.n);
        j * self.n.pow(self.m as u32 - 1) + lo + hi * stride
    }

    /// Direction of a line and its cells in increasing order along it.
    pub fn line_cells(&self, line: usize) -> (usize, Vec<usize>) {
        let per_axis = self.n.pow(self.m as u32 - 1);
        let (j, rest) = (line / per_axis, line % per_axis);
        let stride = self.n.pow(j as u32);
        let (lo, hi) = (rest % stride, rest / stride);
        let base = lo + hi * stride * self.n;
        (j, (0..self.n).map(|t| base + t * stride).collect())
    }
}

/// Mechanism data sampled at the corners and the center of one cell.
#[derive(Clone, Copy, Debug, Default)]
struct CellProbe {
    /// Items allocated at some probe.
    alloc_any: u64,
    /// Items left unallocated at some probe.
    unalloc_any: u64,
    /// Utility at the upper corner, the largest value on the cell.
    u_top: f64,
}

fn probe_cells(prices: &[f64], grid: &CertGrid) -> Vec<CellProbe> {
    let (m, h) = (grid.m, grid.eps_prime());
    let full = if m == 64 { u64::MAX } else { (1u64 << m) - 1 };
    (0..grid.cell_count())
        .into_par_iter()
        .map(|cell| {
            let c = grid.cell_coords(cell);
            let mut x = vec![0.0; m];
            let mut probe = CellProbe::default();
            for corner in 0..=(1usize << m) {
                for i in 0..m {
                    x[i] = if corner == 1 << m {
                        (c[i] as f64 + 0.5) * h
                    } else {
                        (c[i] + (corner >> i & 1)) as f64 * h
                    };
                }
                let (mask, u) = allocation_mask(prices, &x);
                probe.alloc_any |= mask;
                probe.unalloc_any |= !mask & full;
                if corner == (1 << m) - 1 {
                    probe.u_top = u;
                }
            }
            probe
        })
        .collect()
}

/// Bipartite graph between the cover cells (cells where some probe sells)
/// and the boundary rows of every line.
///
/// A cover cell is adjacent to all rows of the axis-`j` line through it
/// whenever item `j` is allocated at one of its probes.
#[derive(Clone, Debug)]
pub struct MatchingGraph {
    grid: CertGrid,
    prices: Vec<f64>,
    probes: Vec<CellProbe>,
    cover: Vec<usize>,
    adj: Vec<Vec<u32>>,
    deleted: Vec<bool>,
}

impl MatchingGraph {
    pub fn grid(&self) -> &CertGrid {
        &self.grid
    }

    /// Cell indices of the cover, in increasing order.
    pub fn cover_cells(&self) -> &[usize] {
        &self.cover
    }

    /// Lines adjacent to the `i`-th cover cell.
    pub fn neighbors(&self, i: usize) -> &[u32] {
        &self.adj[i]
    }

    /// Rows of the layer `B` over all remaining lines.
    pub fn b_nodes(&self) -> usize {
        self.active_lines() * self.grid.boundary_rows()
    }

    /// Rows of `B` and `B*` over all remaining lines.
    pub fn boundary_nodes(&self) -> usize {
        self.active_lines() * (self.grid.boundary_rows() + self.grid.g())
    }

    /// Number of cell-to-row edges.
    pub fn edge_count(&self) -> usize {
        let rows = self.grid.boundary_rows() + self.grid.g();
        self.adj.iter().map(|a| a.len() * rows).sum()
    }

    fn active_lines(&self) -> usize {
        self.deleted.iter().filter(|d| !**d).count()
    }

    /// Removes every boundary row of `line` from the graph.
    pub fn delete_line(&mut self, line: usize) {
        if line < self.deleted.len() {
            self.deleted[line] = true;
            let l = line as u32;
            for a in &mut self.adj {
                a.retain(|&r| r != l);
            }
        }
    }

    fn caps(&self, per_line: usize) -> Vec<u32> {
        self.deleted
            .iter()
            .map(|&d| if d { 0 } else { per_line as u32 })
            .collect()
    }
}

/// Builds the graph for `mech` on `grid`.
pub fn build_matching_graph(mech: &Mechanism, grid: &CertGrid) -> Result<MatchingGraph> {
    if mech.items() != grid.m {
        return Err(SjaError::DimensionMismatch {
            expected: grid.m,
            got: mech.items(),
        });
    }
    let probes = probe_cells(mech.prices(), grid);
    let mut cover = Vec::new();
    let mut adj = Vec::new();
    for (cell, p) in probes.iter().enumerate() {
        if p.alloc_any != 0 {
            cover.push(cell);
            adj.push(
                (0..grid.m)
                    .filter(|&j| p.alloc_any >> j & 1 == 1)
                    .map(|j| grid.line_of(j, cell) as u32)
                    .collect(),
            );
        }
    }
    Ok(MatchingGraph {
        grid: *grid,
        prices: mech.prices().to_vec(),
        probes,
        cover,
        adj,
        deleted: vec![false; grid.line_count()],
    })
}

const UNSEEN: u32 = u32::MAX;

/// A matching of left nodes into lines with capacities. `slots[r]` lists the
/// left nodes occupying the rows of line `r`, in row order.
#[derive(Clone, Debug)]
struct CapMatching {
    left: Vec<Option<(u32, u32)>>,
    slots: Vec<Vec<u32>>,
}

impl CapMatching {
    fn size(&self) -> usize {
        self.slots.iter().map(Vec::len).sum()
    }
}

/// Breadth-first layering from the unmatched left nodes. Returns whether a
/// line with a free row is reachable.
fn layer(
    adj: &[Vec<u32>],
    caps: &[u32],
    mt: &CapMatching,
    dist: &mut [u32],
    line_dist: &mut [u32],
) -> bool {
    dist.fill(UNSEEN);
    line_dist.fill(UNSEEN);
    let mut queue = std::collections::VecDeque::new();
    for (u, m) in mt.left.iter().enumerate() {
        if m.is_none() {
            dist[u] = 0;
            queue.push_back(u);
        }
    }
    let mut found = false;
    while let Some(u) = queue.pop_front() {
        for &r in &adj[u] {
            let r = r as usize;
            if line_dist[r] != UNSEEN {
                continue;
            }
            line_dist[r] = dist[u];
            if (mt.slots[r].len() as u32) < caps[r] {
                found = true;
            } else {
                for &w in &mt.slots[r] {
                    if dist[w as usize] == UNSEEN {
                        dist[w as usize] = dist[u] + 1;
                        queue.push_back(w as usize);
                    }
                }
            }
        }
    }
    found
}

/// Maximum matching of left nodes into capacitated lines by phases of
/// shortest augmenting paths.
fn max_cap_matching(adj: &[Vec<u32>], caps: &[u32]) -> CapMatching {
    let lines = caps.len();
    let mut mt = CapMatching {
        left: vec![None; adj.len()],
        slots: vec![Vec::new(); lines],
    };
    let mut dist = vec![UNSEEN; adj.len()];
    let mut line_dist = vec![UNSEEN; lines];
    let mut it_left = vec![0usize; adj.len()];
    let mut it_line = vec![0usize; lines];
    while layer(adj, caps, &mt, &mut dist, &mut line_dist) {
        it_left.fill(0);
        it_line.fill(0);
        for s in 0..adj.len() {
            if mt.left[s].is_some() {
                continue;
            }
            let mut stack = vec![s];
            let mut via: Vec<usize> = Vec::new();
            while let Some(&u) = stack.last() {
                let mut next = None;
                while it_left[u] < adj[u].len() {
                    let r = adj[u][it_left[u]] as usize;
                    if line_dist[r] != dist[u] {
                        it_left[u] += 1;
                        continue;
                    }
                    if (mt.slots[r].len() as u32) < caps[r] {
                        next = Some((r, None));
                        break;
                    }
                    while it_line[r] < mt.slots[r].len() {
                        let w = mt.slots[r][it_line[r]] as usize;
                        if dist[w] == dist[u] + 1 {
                            next = Some((r, Some(w)));
                            break;
                        }
                        it_line[r] += 1;
                    }
                    if next.is_some() {
                        break;
                    }
                    it_left[u] += 1;
                }
                match next {
                    Some((r, None)) => {
                        // Shift every node on the path one line forward.
                        let slot = mt.slots[r].len() as u32;
                        mt.slots[r].push(u as u32);
                        let mut carry = mt.left[u].replace((r as u32, slot));
                        for &w in stack[..via.len()].iter().rev() {
                            let (lr, ls) = carry.expect("path node must be matched");
                            mt.slots[lr as usize][ls as usize] = w as u32;
                            carry = mt.left[w].replace((lr, ls));
                        }
                        break;
                    }
                    Some((r, Some(w))) => {
                        via.push(r);
                        stack.push(w);
                    }
                    None => {
                        dist[u] = UNSEEN;
                        stack.pop();
                        via.pop();
                    }
                }
            }
        }
    }
    mt
}

/// Cover cells reachable from unmatched cells by alternating paths, and the
/// number of rows on the lines they reach.
fn cover_witness(adj: &[Vec<u32>], caps: &[u32], mt: &CapMatching) -> (Vec<usize>, usize) {
    let mut dist = vec![UNSEEN; adj.len()];
    let mut line_dist = vec![UNSEEN; caps.len()];
    layer(adj, caps, mt, &mut dist, &mut line_dist);
    let set = (0..adj.len()).filter(|&u| dist[u] != UNSEEN).collect();
    let rows = (0..caps.len())
        .filter(|&r| line_dist[r] != UNSEEN)
        .map(|r| caps[r] as usize)
        .sum();
    (set, rows)
}

/// Lines reachable from lines with free rows by alternating paths, the
/// number of rows on them and the number of cells adjacent to them.
fn boundary_witness(adj: &[Vec<u32>], caps: &[u32], mt: &CapMatching) -> (Vec<usize>, usize, usize) {
    let lines = caps.len();
    let mut rev: Vec<Vec<u32>> = vec![Vec::new(); lines];
    for (u, a) in adj.iter().enumerate() {
        for &r in a {
            rev[r as usize].push(u as u32);
        }
    }
    let mut seen_line = vec![false; lines];
    let mut seen_left = vec![false; adj.len()];
    let mut queue: std::collections::VecDeque<usize> = (0..lines)
        .filter(|&r| (mt.slots[r].len() as u32) < caps[r])
        .collect();
    for &r in &queue {
        seen_line[r] = true;
    }
    while let Some(r) = queue.pop_front() {
        for &u in &rev[r] {
            let u = u as usize;
            if seen_left[u] {
                continue;
            }
            seen_left[u] = true;
            if let Some((r2, _)) = mt.left[u] {
                let r2 = r2 as usize;
                if !seen_line[r2] {
                    seen_line[r2] = true;
                    queue.push_back(r2);
                }
            }
        }
    }
    let set: Vec<usize> = (0..lines).filter(|&r| seen_line[r]).collect();
    let rows = set.iter().map(|&r| caps[r] as usize).sum();
    let cells = seen_left.iter().filter(|s| **s).count();
    (set, rows, cells)
}

/// A matching saturating every cover cell and every row of `B`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Matching {
    /// Line and row matched to each cover cell, in cover order. Rows below
    /// `N/(m+1)` belong to `B`, the rest to `B*`.
    pub assignment: Vec<(usize, usize)>,
    /// Size of the matching saturating the cover.
    pub cover_matching_size: usize,
    /// Size of the matching saturating `B`.
    pub boundary_matching_size: usize,
}

/// Computes a maximum matching saturating the cover, a maximum matching
/// saturating `B`, and combines them component by component.
///
/// Fails with a Hall violation when either side cannot be saturated.
pub fn double_saturating_matching(graph: &MatchingGraph) -> Result<Matching> {
    let grid = &graph.grid;
    let (b, g) = (grid.boundary_rows(), grid.g());
    let caps1 = graph.caps(b + g);
    let m1 = max_cap_matching(&graph.adj, &caps1);
    if m1.size() < graph.adj.len() {
        let (set, rows) = cover_witness(&graph.adj, &caps1, &m1);
        return Err(SjaError::HallViolation {
            side: "cover".into(),
            size: set.len(),
            neighbors: rows,
            witness: set.iter().map(|&u| graph.cover[u]).collect(),
        });
    }
    let caps2 = graph.caps(b);
    let m2 = max_cap_matching(&graph.adj, &caps2);
    let needed: usize = caps2.iter().map(|&c| c as usize).sum();
    if m2.size() < needed {
        let (set, rows, cells) = boundary_witness(&graph.adj, &caps2, &m2);
        return Err(SjaError::HallViolation {
            side: "boundary".into(),
            size: rows,
            neighbors: cells,
            witness: set,
        });
    }
    let assignment = combine(&m1, &m2, graph.adj.len(), b + g);
    Ok(Matching {
        assignment,
        cover_matching_size: m1.size(),
        boundary_matching_size: m2.size(),
    })
}

/// Chooses, in every connected component of the union of the two
/// matchings, the one that covers all its nodes that must be covered.
fn combine(m1: &CapMatching, m2: &CapMatching, left: usize, rows: usize) -> Vec<(usize, usize)> {
    let row_node = |r: u32, s: u32| left + r as usize * rows + s as usize;
    let nodes = left + m1.slots.len() * rows;
    let mut p1 = vec![usize::MAX; nodes];
    let mut p2 = vec![usize::MAX; nodes];
    for u in 0..left {
        if let Some((r, s)) = m1.left[u] {
            p1[u] = row_node(r, s);
            p1[row_node(r, s)] = u;
        }
        if let Some((r, s)) = m2.left[u] {
            p2[u] = row_node(r, s);
            p2[row_node(r, s)] = u;
        }
    }
    let mut seen = vec![false; nodes];
    let mut out = vec![(0, 0); left];
    let mut comp = Vec::new();
    for start in 0..left {
        if seen[start] {
            continue;
        }
        comp.clear();
        let mut stack = vec![start];
        seen[start] = true;
        while let Some(v) = stack.pop() {
            comp.push(v);
            for w in [p1[v], p2[v]] {
                if w != usize::MAX && !seen[w] {
                    seen[w] = true;
                    stack.push(w);
                }
            }
        }
        let use_first = comp.iter().any(|&v| v < left && p2[v] == usize::MAX);
        for &v in comp.iter().filter(|&&v| v < left) {
            let (r, s) = if use_first {
                m1.left[v].expect("cover is saturated")
            } else {
                m2.left[v].expect("component is covered by the second matching")
            };
            out[v] = (r as usize, s as usize);
        }
    }
    out
}

/// A color in `0..=m` for every cell; color `j` for `j >= 1` means `z_j`
/// grows through the cell.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct GridColoring {
    grid: CertGrid,
    colors: Vec<u8>,
}

/// Whether every axis-`j` line holds enough color-`j` cells.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct FeasibilityReport {
    pub feasible: bool,
    pub required: usize,
    pub min_count: usize,
    pub deficient_lines: usize,
    /// First cell of the first deficient line.
    pub first_deficient: Option<Vec<usize>>,
}

impl GridColoring {
    /// A coloring from explicit per-cell colors.
    pub fn new(grid: CertGrid, colors: Vec<u8>) -> Result<Self> {
        if colors.len() != grid.cell_count() {
            return Err(SjaError::DimensionMismatch {
                expected: grid.cell_count(),
                got: colors.len(),
            });
        }
        if let Some(c) = colors.iter().find(|&&c| c as usize > grid.m) {
            return Err(SjaError::InvalidParameter(format!(
                "color {c} exceeds the number of items {}",
                grid.m
            )));
        }
        Ok(Self { grid, colors })
    }

    /// Every cell colored `color`.
    pub fn uniform(grid: CertGrid, color: u8) -> Result<Self> {
        Self::new(grid, vec![color; grid.cell_count()])
    }

    pub fn grid(&self) -> &CertGrid {
        &self.grid
    }

    pub fn colors(&self) -> &[u8] {
        &self.colors
    }

    pub fn color_at(&self, coords: &[usize]) -> u8 {
        self.colors[self.grid.cell_index(coords)]
    }

    /// Counts color-`j` cells on every axis-`j` line.
    pub fn feasibility(&self) -> FeasibilityReport {
        let required = self.grid.boundary_rows();
        let mut report = FeasibilityReport {
            feasible: true,
            required,
            min_count: usize::MAX,
            deficient_lines: 0,
            first_deficient: None,
        };
        for line in 0..self.grid.line_count() {
            let (j, cells) = self.grid.line_cells(line);
            let count = cells
                .iter()
                .filter(|&&c| self.colors[c] as usize == j + 1)
                .count();
            report.min_count = report.min_count.min(count);
            if count < required {
                report.feasible = false;
                report.deficient_lines += 1;
                if report.first_deficient.is_none() {
                    report.first_deficient = Some(self.grid.cell_coords(cells[0]));
                }
            }
        }
        report
    }

    /// A random feasibility-preserving perturbation: color-0 cells receive
    /// random colors, and color-`j` cells trade places with color-0 cells on
    /// the same axis-`j` line.
    pub fn perturbed(&self, moves: usize, seed: u64) -> GridColoring {
        let mut rng = chunk_rng(seed, 0);
        let mut colors = self.colors.clone();
        let cells = colors.len();
        let n = self.grid.n;
        for _ in 0..moves {
            let cell = rng.random_range(0..cells);
            match colors[cell] {
                0 => colors[cell] = rng.random_range(1..=self.grid.m as u8),
                c => {
                    let j = c as usize - 1;
                    let (_, line) = self.grid.line_cells(self.grid.line_of(j, cell));
                    let other = line[rng.random_range(0..n)];
                    if colors[other] == 0 {
                        colors.swap(cell, other);
                    }
                }
            }
        }
        GridColoring {
            grid: self.grid,
            colors,
        }
    }

    /// Writes one CSV row per cell: the cell coordinates and its color.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let export = |e: csv::Error| SjaError::Export(e.to_string());
        let mut header: Vec<String> = (1..=self.grid.m).map(|j| format!("c{j}")).collect();
        header.push("color".into());
        w.write_record(&header).map_err(export)?;
        for (cell, &color) in self.colors.iter().enumerate() {
            let mut row: Vec<String> = self
                .grid
                .cell_coords(cell)
                .iter()
                .map(usize::to_string)
                .collect();
            row.push(color.to_string());
            w.write_record(&row).map_err(export)?;
        }
        w.flush().map_err(|e| SjaError::Export(e.to_string()))
    }
}

/// Colors each matched cover cell with the direction of its line and checks
/// feasibility.
pub fn coloring_from_matching(graph: &MatchingGraph, matching: &Matching) -> Result<GridColoring> {
    let grid = graph.grid;
    let per_axis = grid.n.pow(grid.m as u32 - 1);
    let mut colors = vec![0u8; grid.cell_count()];
    for (&cell, &(line, _)) in graph.cover.iter().zip(&matching.assignment) {
        colors[cell] = (line / per_axis + 1) as u8;
    }
    let coloring = GridColoring { grid, colors };
    let report = coloring.feasibility();
    if !report.feasible {
        return Err(SjaError::CertificateViolation {
            condition: "feasibility".into(),
            cell: report.first_deficient.unwrap_or_default(),
            value: report.min_count as f64,
            bound: report.required as f64,
        });
    }
    Ok(coloring)
}

/// The dual objective and the values `z_j(1, .)` reached on the far faces.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DualObjective {
    pub objective: f64,
    pub z_top_min: f64,
    pub z_top_max: f64,
}

/// Integrates the functions `z_j` reconstructed from a coloring.
///
/// Along each axis-`j` line, `z_j` starts at 0 and grows linearly by
/// `(m+1) eps'` through every color-`j` cell, so the integral over a cell is
/// `(z at its lower face + (m+1) eps'/2 [color = j]) eps'^m`.
pub fn dual_objective(coloring: &GridColoring) -> DualObjective {
    let grid = &coloring.grid;
    let h = grid.eps_prime();
    let rise = (grid.m as f64 + 1.0) * h;
    let vol = h.powi(grid.m as i32);
    let per_line: Vec<(f64, f64)> = (0..grid.line_count())
        .into_par_iter()
        .map(|line| {
            let (j, cells) = grid.line_cells(line);
            let mut z = 0.0;
            let mut sum = KahanSum::default();
            for c in cells {
                if coloring.colors[c] as usize == j + 1 {
                    sum.add(z + 0.5 * rise);
                    z += rise;
                } else {
                    sum.add(z);
                }
            }
            (sum.value() * vol, z)
        })
        .collect();
    let mut total = KahanSum::default();
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for (s, z) in per_line {
        total.add(s);
        lo = lo.min(z);
        hi = hi.max(z);
    }
    DualObjective {
        objective: total.value(),
        z_top_min: lo,
        z_top_max: hi,
    }
}

/// Largest value of each complementarity product over the lattice.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct Residuals {
    /// `u(x) (m + 1 - sum_j dz_j/dx_j)`.
    pub slope_slack: f64,
    /// `-u(0, x_-j) z_j(0, x_-j)`.
    pub lower_boundary: f64,
    /// `u(1, x_-j) (z_j(1, x_-j) - 1)`.
    pub upper_boundary: f64,
    /// `z_j(x) (1 - du/dx_j)`.
    pub unallocated_growth: f64,
    #[serde(skip)]
    worst: [Vec<usize>; 4],
}

impl Residuals {
    pub const NAMES: [&'static str; 4] = [
        "slope_slack",
        "lower_boundary",
        "upper_boundary",
        "unallocated_growth",
    ];

    /// The four maxima in the order of [`Self::NAMES`].
    pub fn values(&self) -> [f64; 4] {
        [
            self.slope_slack,
            self.lower_boundary,
            self.upper_boundary,
            self.unallocated_growth,
        ]
    }

    fn record(&mut self, which: usize, value: f64, cell: &[usize]) {
        let slot = match which {
            0 => &mut self.slope_slack,
            1 => &mut self.lower_boundary,
            2 => &mut self.upper_boundary,
            _ => &mut self.unallocated_growth,
        };
        if value > *slot || self.worst[which].is_empty() {
            *slot = value.max(*slot);
            self.worst[which] = cell.to_vec();
        }
    }
}

fn residuals(graph: &MatchingGraph, coloring: &GridColoring) -> Residuals {
    let grid = &graph.grid;
    let m = grid.m;
    let h = grid.eps_prime();
    let rise = (m as f64 + 1.0) * h;
    let mut res = Residuals::default();
    for (cell, p) in graph.probes.iter().enumerate() {
        let slack = if coloring.colors[cell] == 0 {
            m as f64 + 1.0
        } else {
            0.0
        };
        res.record(0, p.u_top * slack, &grid.cell_coords(cell));
    }
    let mut x = vec![0.0; m];
    for line in 0..grid.line_count() {
        let (j, cells) = grid.line_cells(line);
        let first = grid.cell_coords(cells[0]);
        for i in 0..m {
            x[i] = if i == j { 0.0 } else { (first[i] + 1) as f64 * h };
        }
        let u_low = allocation_mask(&graph.prices, &x).1;
        res.record(1, -u_low * 0.0, &first);
        let mut z = 0.0;
        for &c in &cells {
            if coloring.colors[c] as usize == j + 1 {
                z += rise;
            }
            if graph.probes[c].unalloc_any >> j & 1 == 1 {
                res.record(3, z, &grid.cell_coords(c));
            }
        }
        x[j] = 1.0;
        let u_high = allocation_mask(&graph.prices, &x).1;
        let last = grid.cell_coords(cells[cells.len() - 1]);
        res.record(2, u_high * (z - 1.0), &last);
    }
    res
}

/// Options for [`build_certificate`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CertifyOptions {
    /// Allows more than [`CERTIFY_ITEMS_LIMIT`] items.
    pub force_large: bool,
    /// Monte-Carlo samples for the primal revenue when it cannot be
    /// computed exactly.
    pub revenue_samples: u64,
    pub seed: u64,
}

impl Default for CertifyOptions {
    fn default() -> Self {
        Self {
            force_large: false,
            revenue_samples: DEFAULT_REVENUE_SAMPLES,
            seed: 0,
        }
    }
}

/// A discretized dual solution checked against the primal mechanism.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DualCertificate {
    pub m: usize,
    #[serde(rename = "N")]
    pub n: usize,
    pub eps_prime: f64,
    pub g: usize,
    pub objective: f64,
    pub revenue: f64,
    pub revenue_stderr: Option<f64>,
    pub gap: f64,
    pub eps: f64,
    pub bound: f64,
    pub feasible: bool,
    pub z_top_min: f64,
    pub residuals: Residuals,
    pub cover_cells: usize,
    pub boundary_nodes: usize,
    pub b_nodes: usize,
    pub tie_breaking: String,
    pub pass: bool,
    #[serde(skip)]
    pub coloring: GridColoring,
}

impl DualCertificate {
    /// The first failed check, if any.
    pub fn verify(&self) -> Result<()> {
        if !self.feasible {
            let report = self.coloring.feasibility();
            return Err(SjaError::CertificateViolation {
                condition: "feasibility".into(),
                cell: report.first_deficient.unwrap_or_default(),
                value: report.min_count as f64,
                bound: report.required as f64,
            });
        }
        for (i, v) in self.residuals.values().iter().enumerate() {
            if *v > self.eps * (1.0 + 1e-12) {
                return Err(SjaError::CertificateViolation {
                    condition: Residuals::NAMES[i].into(),
                    cell: self.residuals.worst[i].clone(),
                    value: *v,
                    bound: self.eps,
                });
            }
        }
        let slack = WEAK_DUALITY_TOL + 4.0 * self.revenue_stderr.unwrap_or(0.0);
        if self.gap < -slack {
            return Err(SjaError::CertificateViolation {
                condition: "weak_duality".into(),
                cell: Vec::new(),
                value: -self.gap,
                bound: slack,
            });
        }
        if self.gap > self.bound {
            return Err(SjaError::CertificateViolation {
                condition: "gap_bound".into(),
                cell: Vec::new(),
                value: self.gap,
                bound: self.bound,
            });
        }
        Ok(())
    }

    /// The certificate as pretty-printed JSON, without the coloring.
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| SjaError::Export(e.to_string()))
    }
}

/// Runs the pipeline and records every check without failing on them.
pub fn build_certificate(
    mech: &Mechanism,
    grid: &CertGrid,
    opts: CertifyOptions,
) -> Result<DualCertificate> {
    let m = grid.m;
    if m > CERTIFY_ITEMS_LIMIT && !opts.force_large {
        return Err(SjaError::InvalidParameter(format!(
            "certification of {m} items exceeds the default limit {CERTIFY_ITEMS_LIMIT}; force it explicitly"
        )));
    }
    let graph = build_matching_graph(mech, grid)?;
    let matching = double_saturating_matching(&graph)?;
    let coloring = coloring_from_matching(&graph, &matching)?;
    certificate_for_coloring(&graph, coloring, mech, opts)
}

/// Certifies an arbitrary coloring on the graph's grid against `mech`.
pub fn certificate_for_coloring(
    graph: &MatchingGraph,
    coloring: GridColoring,
    mech: &Mechanism,
    opts: CertifyOptions,
) -> Result<DualCertificate> {
    let grid = graph.grid;
    let method = if grid.m <= crate::mechanism::EXACT_ITEMS_LIMIT {
        Method::Exact
    } else {
        Method::MonteCarlo {
            samples: opts.revenue_samples,
            seed: opts.seed,
        }
    };
    let revenue = expected_revenue(mech, method)?;
    let dual = dual_objective(&coloring);
    let feasible = coloring.feasibility().feasible;
    let residuals = residuals(graph, &coloring);
    let mut cert = DualCertificate {
        m: grid.m,
        n: grid.n,
        eps_prime: grid.eps_prime(),
        g: grid.g(),
        objective: dual.objective,
        revenue: revenue.value,
        revenue_stderr: revenue.stderr,
        gap: dual.objective - revenue.value,
        eps: grid.eps(),
        bound: grid.gap_bound(),
        feasible,
        z_top_min: dual.z_top_min,
        residuals,
        cover_cells: graph.cover.len(),
        boundary_nodes: graph.boundary_nodes(),
        b_nodes: graph.b_nodes(),
        tie_breaking: TIE_BREAKING.into(),
        pass: false,
        coloring,
    };
    cert.pass = cert.verify().is_ok();
    Ok(cert)
}

/// Runs the pipeline and fails on the first violated check.
pub fn certify(mech: &Mechanism, grid: &CertGrid) -> Result<DualCertificate> {
    let cert = build_certificate(mech, grid, CertifyOptions::default())?;
    cert.verify()?;
    Ok(cert)
}

/// Outcome of [`hall_spotcheck`].
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct HallSampleReport {
    pub samples: u64,
    pub violations: u64,
}

/// Samples node sets `S` inside single slices of a region `U_J` (cover cells
/// sharing the allocated item set `J` and all coordinates outside `J`) and
/// checks `|S| <= |N(S)|`.
pub fn hall_spotcheck(graph: &MatchingGraph, samples: u64, seed: u64) -> HallSampleReport {
    let mut rng = chunk_rng(seed, 0);
    let grid = &graph.grid;
    let rows = grid.boundary_rows() + grid.g();
    let mut report = HallSampleReport {
        samples,
        violations: 0,
    };
    if graph.cover.is_empty() {
        return report;
    }
    for _ in 0..samples {
        let pick = rng.random_range(0..graph.cover.len());
        let mask = graph.probes[graph.cover[pick]].alloc_any;
        let fixed = grid.cell_coords(graph.cover[pick]);
        let slice: Vec<usize> = (0..graph.cover.len())
            .filter(|&i| {
                let cell = graph.cover[i];
                graph.probes[cell].alloc_any == mask
                    && grid
                        .cell_coords(cell)
                        .iter()
                        .enumerate()
                        .all(|(a, &c)| mask >> a & 1 == 1 || c == fixed[a])
            })
            .collect();
        let chosen: Vec<usize> = slice
            .into_iter()
            .filter(|&i| i == pick || rng.random_bool(0.5))
            .collect();
        let mut lines: Vec<u32> = chosen.iter().flat_map(|&i| graph.adj[i].clone()).collect();
        lines.sort_unstable();
        lines.dedup();
        if chosen.len() > lines.len() * rows {
            report.violations += 1;
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    fn half() -> Mechanism {
        Mechanism::new(vec![0.5]).unwrap()
    }

    #[test]
    fn grid_parameters() {
        let g = CertGrid::new(2, 105).unwrap();
        assert_eq!(g.g(), 3);
        assert_eq!(g.boundary_rows(), 35);
        assert!((g.gap_bound() - 1.2).abs() < 1e-12);
        assert_eq!(CertGrid::new(1, 10).unwrap().g(), 2);
        assert_eq!(CertGrid::new(4, 10).unwrap().g(), 3);
        assert!(matches!(
            CertGrid::new(2, 100),
            Err(SjaError::GridMisaligned { n: 100, modulus: 3 })
        ));
    }

    #[test]
    fn line_indexing_round_trips() {
        let g = CertGrid::new(3, 4).unwrap();
        for line in 0..g.line_count() {
            let (j, cells) = g.line_cells(line);
            for (t, &c) in cells.iter().enumerate() {
                assert_eq!(g.line_of(j, c), line);
                assert_eq!(g.cell_coords(c)[j], t);
            }
        }
    }

    #[test]
    fn single_item_two_cells() {
        let grid = CertGrid::new(1, 2).unwrap();
        let graph = build_matching_graph(&half(), &grid).unwrap();
        assert_eq!(graph.cover_cells(), &[1]);
        let matching = double_saturating_matching(&graph).unwrap();
        let coloring = coloring_from_matching(&graph, &matching).unwrap();
        assert_eq!(coloring.colors(), &[0, 1]);
        assert!((dual_objective(&coloring).objective - 0.25).abs() < 1e-15);
    }

    #[test]
    fn single_item_matching_fills_top_half_in_order() {
        let grid = CertGrid::new(1, 20).unwrap();
        let graph = build_matching_graph(&half(), &grid).unwrap();
        let matching = double_saturating_matching(&graph).unwrap();
        assert_eq!(graph.cover_cells(), &(10..20).collect::<Vec<_>>()[..]);
        for (i, &(line, row)) in matching.assignment.iter().enumerate() {
            assert_eq!((line, row), (0, i));
        }
    }

    #[test]
    fn deleted_line_gives_hall_violation() {
        let grid = CertGrid::new(1, 4).unwrap();
        let mut graph = build_matching_graph(&half(), &grid).unwrap();
        graph.delete_line(0);
        match double_saturating_matching(&graph) {
            Err(SjaError::HallViolation { side, size, neighbors, witness }) => {
                assert_eq!(side, "cover");
                assert!(size > neighbors);
                assert_eq!(witness, vec![2, 3]);
            }
            other => panic!("expected Hall violation, got {other:?}"),
        }
    }

    #[test]
    fn all_zero_coloring_is_infeasible() {
        let grid = CertGrid::new(2, 6).unwrap();
        let report = GridColoring::uniform(grid, 0).unwrap().feasibility();
        assert!(!report.feasible);
        assert_eq!(report.deficient_lines, grid.line_count());
    }

    #[test]
    fn capacitated_matching_needs_augmenting_paths() {
        // Left 0 can use lines 0 or 1, left 1 only line 0; both lines hold one.
        let adj = vec![vec![0, 1], vec![0]];
        let mt = max_cap_matching(&adj, &[1, 1]);
        assert_eq!(mt.size(), 2);
        assert_eq!(mt.left[1], Some((0, 0)));
        assert_eq!(mt.left[0], Some((1, 0)));
    }
}
