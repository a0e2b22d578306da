//! Voxel bodies: boolean occupancy lattices over `{0, ..., grid-1}^dim` with
//! cubic cells of side `cell_size`.
//!
//! Cell `c` occupies `[c_i * h, (c_i + 1) * h]` on every axis `i` and is
//! stored at flat index `sum_i c_i * grid^i`.

use super::sim::{sim_membership, SimBody};
use crate::error::{Result, SjaError};
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;

/// Largest lattice (in cells) a voxel body may allocate.
pub const MAX_CELLS: usize = 1 << 28;

/// How a continuous body is rasterized.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Voxelization {
    /// Cells entirely inside the body.
    Inner,
    /// Cells whose center lies inside the body.
    Center,
    /// Cells meeting the body.
    Outer,
}

/// A boolean occupancy lattice.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VoxelBody {
    dim: usize,
    grid: usize,
    cell_size: f64,
    occupancy: Vec<bool>,
}

fn lattice_len(dim: usize, grid: usize) -> Result<usize> {
    let mut len: usize = 1;
    for _ in 0..dim {
        len = len
            .checked_mul(grid)
            .filter(|&l| l <= MAX_CELLS)
            .ok_or_else(|| SjaError::InvalidParameter(format!("lattice {grid}^{dim} too large")))?;
    }
    Ok(len)
}

impl VoxelBody {
    /// An empty body.
    pub fn empty(dim: usize, grid: usize, cell_size: f64) -> Result<Self> {
        if grid == 0 {
            return Err(SjaError::InvalidParameter("grid must be positive".into()));
        }
        if !(cell_size.is_finite() && cell_size > 0.0) {
            return Err(SjaError::InvalidParameter("cell size must be positive".into()));
        }
        Ok(Self {
            dim,
            grid,
            cell_size,
            occupancy: vec![false; lattice_len(dim, grid)?],
        })
    }

    /// A fully occupied body.
    pub fn full(dim: usize, grid: usize, cell_size: f64) -> Result<Self> {
        let mut b = Self::empty(dim, grid, cell_size)?;
        b.occupancy.fill(true);
        Ok(b)
    }

    /// A body whose cell `c` is occupied iff `f(c)`.
    pub fn from_fn(
        dim: usize,
        grid: usize,
        cell_size: f64,
        mut f: impl FnMut(&[usize]) -> bool,
    ) -> Result<Self> {
        let mut b = Self::empty(dim, grid, cell_size)?;
        let mut cell = vec![0; dim];
        for idx in 0..b.occupancy.len() {
            b.decode_into(idx, &mut cell);
            b.occupancy[idx] = f(&cell);
        }
        Ok(b)
    }

    /// A body built from a flat occupancy vector.
    pub fn from_occupancy(dim: usize, grid: usize, cell_size: f64, occupancy: Vec<bool>) -> Result<Self> {
        let b = Self::empty(dim, grid, cell_size)?;
        if occupancy.len() != b.occupancy.len() {
            return Err(SjaError::DimensionMismatch {
                expected: b.occupancy.len(),
                got: occupancy.len(),
            });
        }
        Ok(Self { occupancy, ..b })
    }

    /// Rasterizes a SIM-body on `[0, w]^r` (`w` its width) with `grid` cells per axis.
    pub fn from_sim(body: &SimBody, grid: usize, mode: Voxelization) -> Result<Self> {
        let h = body.width() / grid as f64;
        let dim = body.dim();
        let mut probe = vec![0.0; dim];
        Self::from_fn(dim, grid, h, |c| {
            for (p, &ci) in probe.iter_mut().zip(c) {
                *p = match mode {
                    Voxelization::Inner => (ci + 1) as f64 * h,
                    Voxelization::Center => (ci as f64 + 0.5) * h,
                    Voxelization::Outer => ci as f64 * h,
                };
            }
            sim_membership(body, &probe).unwrap_or(false)
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn grid(&self) -> usize {
        self.grid
    }

    pub fn cell_size(&self) -> f64 {
        self.cell_size
    }

    pub fn occupancy(&self) -> &[bool] {
        &self.occupancy
    }

    /// Number of lattice cells, `grid^dim`.
    pub fn len(&self) -> usize {
        self.occupancy.len()
    }

    pub fn is_empty(&self) -> bool {
        !self.occupancy.iter().any(|&o| o)
    }

    pub fn index(&self, cell: &[usize]) -> usize {
        cell.iter().rev().fold(0, |acc, &c| acc * self.grid + c)
    }

    fn decode_into(&self, mut idx: usize, cell: &mut [usize]) {
        for c in cell.iter_mut() {
            *c = idx % self.grid;
            idx /= self.grid;
        }
    }

    /// Coordinates of flat index `idx`.
    pub fn cell(&self, idx: usize) -> Vec<usize> {
        let mut c = vec![0; self.dim];
        self.decode_into(idx, &mut c);
        c
    }

    pub fn get(&self, cell: &[usize]) -> bool {
        self.occupancy[self.index(cell)]
    }

    pub fn set(&mut self, cell: &[usize], value: bool) {
        let i = self.index(cell);
        self.occupancy[i] = value;
    }

    /// Number of occupied cells.
    pub fn count(&self) -> usize {
        self.occupancy.iter().filter(|&&o| o).count()
    }

    /// `count * cell_size^dim`.
    pub fn volume(&self) -> f64 {
        self.count() as f64 * self.cell_size.powi(self.dim as i32)
    }

    /// Projection onto the axes in `keep` (in the given order).
    pub fn project(&self, keep: &[usize]) -> VoxelBody {
        let mut out = VoxelBody::empty(keep.len(), self.grid, self.cell_size)
            .expect("projection of a valid body is valid");
        let mut cell = vec![0; self.dim];
        let mut sub = vec![0; keep.len()];
        for idx in 0..self.occupancy.len() {
            if self.occupancy[idx] {
                self.decode_into(idx, &mut cell);
                for (s, &a) in sub.iter_mut().zip(keep) {
                    *s = cell[a];
                }
                let j = out.index(&sub);
                out.occupancy[j] = true;
            }
        }
        out
    }

    /// Projection deleting axis `j`.
    pub fn project_without(&self, j: usize) -> VoxelBody {
        let keep: Vec<usize> = (0..self.dim).filter(|&a| a != j).collect();
        self.project(&keep)
    }

    /// Slice fixing axes `axes` at lattice indices `at`; the remaining axes
    /// keep their relative order.
    pub fn slice(&self, axes: &[usize], at: &[usize]) -> VoxelBody {
        let keep: Vec<usize> = (0..self.dim).filter(|a| !axes.contains(a)).collect();
        let mut out = VoxelBody::empty(keep.len(), self.grid, self.cell_size)
            .expect("slice of a valid body is valid");
        let mut cell = vec![0; self.dim];
        let mut sub = vec![0; keep.len()];
        for idx in 0..self.occupancy.len() {
            if !self.occupancy[idx] {
                continue;
            }
            self.decode_into(idx, &mut cell);
            if axes.iter().zip(at).all(|(&a, &t)| cell[a] == t) {
                for (s, &a) in sub.iter_mut().zip(&keep) {
                    *s = cell[a];
                }
                let j = out.index(&sub);
                out.occupancy[j] = true;
            }
        }
        out
    }

    /// `delta_k = |A| - k * sum_j |A_{[m] \ j}|`.
    pub fn deficiency(&self, k: f64) -> f64 {
        let proj: f64 = (0..self.dim).map(|j| self.project_without(j).volume()).sum();
        self.volume() - k * proj
    }

    fn check_compatible(&self, other: &VoxelBody) {
        assert!(
            self.dim == other.dim && self.grid == other.grid,
            "voxel bodies must share dimension and grid"
        );
    }

    pub fn union(&self, other: &VoxelBody) -> VoxelBody {
        self.check_compatible(other);
        let occupancy = self.occupancy.iter().zip(&other.occupancy).map(|(a, b)| *a || *b).collect();
        VoxelBody { occupancy, ..self.clone() }
    }

    pub fn intersection(&self, other: &VoxelBody) -> VoxelBody {
        self.check_compatible(other);
        let occupancy = self.occupancy.iter().zip(&other.occupancy).map(|(a, b)| *a && *b).collect();
        VoxelBody { occupancy, ..self.clone() }
    }

    pub fn is_subset_of(&self, other: &VoxelBody) -> bool {
        self.check_compatible(other);
        self.occupancy.iter().zip(&other.occupancy).all(|(a, b)| !*a || *b)
    }

    /// Whether every cell below an occupied cell is occupied.
    pub fn is_downwards_closed(&self) -> bool {
        let mut stride = 1;
        for _ in 0..self.dim {
            for idx in 0..self.occupancy.len() {
                if self.occupancy[idx] && (idx / stride) % self.grid > 0 && !self.occupancy[idx - stride] {
                    return false;
                }
            }
            stride *= self.grid;
        }
        true
    }

    /// The body with axes relabelled so that new axis `i` is old axis `perm[i]`.
    pub fn permute_axes(&self, perm: &[usize]) -> VoxelBody {
        let mut out = VoxelBody {
            occupancy: vec![false; self.occupancy.len()],
            ..self.clone()
        };
        let mut cell = vec![0; self.dim];
        let mut moved = vec![0; self.dim];
        for idx in 0..self.occupancy.len() {
            if self.occupancy[idx] {
                self.decode_into(idx, &mut cell);
                for (i, &p) in perm.iter().enumerate() {
                    moved[i] = cell[p];
                }
                let j = out.index(&moved);
                out.occupancy[j] = true;
            }
        }
        out
    }

    /// Whether the body is invariant under every permutation of the axes.
    pub fn is_symmetric(&self) -> bool {
        (0..self.dim.saturating_sub(1)).all(|i| {
            let mut perm: Vec<usize> = (0..self.dim).collect();
            perm.swap(i, i + 1);
            self.permute_axes(&perm) == *self
        })
    }

    /// Width: the length of the projection onto axis 0.
    pub fn width(&self) -> f64 {
        if self.dim == 0 {
            return 0.0;
        }
        self.project(&[0]).volume()
    }

    /// Slides the occupied cells of every axis-`j` line to the start of the line.
    pub fn compress_axis(&mut self, j: usize) {
        let stride = self.grid.pow(j as u32);
        for base in 0..self.occupancy.len() {
            if !(base / stride).is_multiple_of(self.grid) {
                continue;
            }
            let n = (0..self.grid).filter(|&t| self.occupancy[base + t * stride]).count();
            for t in 0..self.grid {
                self.occupancy[base + t * stride] = t < n;
            }
        }
    }

    /// The compaction `chi`: axis compressions repeated until nothing moves.
    ///
    /// The result is downwards closed, has the same volume, and no larger
    /// projections; downwards-closed bodies are fixed.
    pub fn compact_chi(&self) -> VoxelBody {
        let mut cur = self.clone();
        loop {
            let before = cur.occupancy.clone();
            for j in 0..self.dim {
                cur.compress_axis(j);
            }
            if cur.occupancy == before {
                return cur;
            }
        }
    }

    /// Whether the closed union of occupied cells contains the point `x`.
    pub fn contains_point(&self, x: &[f64]) -> bool {
        if x.len() != self.dim {
            return false;
        }
        let mut choices: Vec<Vec<usize>> = Vec::with_capacity(self.dim);
        for &xi in x {
            let u = xi / self.cell_size;
            if u < 0.0 || u > self.grid as f64 {
                return false;
            }
            let f = u.floor() as usize;
            let mut c = Vec::new();
            if f < self.grid {
                c.push(f);
            }
            if u == u.floor() && f > 0 {
                c.push(f - 1);
            }
            choices.push(c);
        }
        let mut cell = vec![0; self.dim];
        fn rec(b: &VoxelBody, choices: &[Vec<usize>], cell: &mut [usize], i: usize) -> bool {
            if i == choices.len() {
                return b.get(cell);
            }
            choices[i].iter().any(|&c| {
                cell[i] = c;
                rec(b, choices, cell, i + 1)
            })
        }
        rec(self, &choices, &mut cell, 0)
    }

    /// Run-length-encoded text form.
    ///
    /// ```text
    /// voxel-body v1
    /// dim 2
    /// grid 3
    /// cell_size 0.5
    /// runs 0 4 5
    /// ```
    ///
    /// `runs` alternates run lengths starting with an unoccupied run (which
    /// may be zero) over the flat index order.
    pub fn to_rle(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "voxel-body v1");
        let _ = writeln!(out, "dim {}", self.dim);
        let _ = writeln!(out, "grid {}", self.grid);
        let _ = writeln!(out, "cell_size {:?}", self.cell_size);
        out.push_str("runs");
        let mut current = false;
        let mut run = 0usize;
        for &o in &self.occupancy {
            if o == current {
                run += 1;
            } else {
                let _ = write!(out, " {run}");
                current = o;
                run = 1;
            }
        }
        let _ = writeln!(out, " {run}");
        out
    }

    /// Parses the text produced by [`Self::to_rle`].
    pub fn from_rle(text: &str) -> Result<Self> {
        let bad = |msg: &str| SjaError::InvalidParameter(format!("malformed voxel RLE: {msg}"));
        let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
        if lines.next() != Some("voxel-body v1") {
            return Err(bad("missing header"));
        }
        let mut field = |name: &str| -> Result<String> {
            let line = lines.next().ok_or_else(|| bad("truncated"))?;
            line.strip_prefix(name)
                .map(|rest| rest.trim().to_string())
                .ok_or_else(|| bad(name))
        };
        let dim: usize = field("dim")?.parse().map_err(|_| bad("dim"))?;
        let grid: usize = field("grid")?.parse().map_err(|_| bad("grid"))?;
        let cell_size: f64 = field("cell_size")?.parse().map_err(|_| bad("cell_size"))?;
        let runs = field("runs")?;
        let mut body = VoxelBody::empty(dim, grid, cell_size)?;
        let mut pos = 0usize;
        let mut value = false;
        for tok in runs.split_whitespace() {
            let n: usize = tok.parse().map_err(|_| bad("run length"))?;
            if pos + n > body.occupancy.len() {
                return Err(bad("runs exceed lattice"));
            }
            body.occupancy[pos..pos + n].fill(value);
            pos += n;
            value = !value;
        }
        if pos != body.occupancy.len() {
            return Err(bad("runs do not cover lattice"));
        }
        Ok(body)
    }
}
