//! SIM-bodies, voxel bodies, deficiencies, the `chi` compaction map and
//! deficiency searches.

mod search;
mod sim;
mod voxel;

pub use search::{
    deficiency_search, grid_slack_bound, structure_checks, DeficiencySearch, SearchMode,
    StructureReport, EXHAUSTIVE_GRID_LIMIT,
};
pub use sim::{sim_deficiency, sim_membership, sim_volume, SimBody};
pub use voxel::{VoxelBody, Voxelization, MAX_CELLS};

/// Anything with a `k`-deficiency.
pub trait Deficiency {
    /// `|A| - k * sum_j |A_{[m] \ j}|`.
    fn deficiency(&self, k: f64) -> f64;
}

impl Deficiency for SimBody {
    fn deficiency(&self, k: f64) -> f64 {
        sim_deficiency(self, k)
    }
}

impl Deficiency for VoxelBody {
    fn deficiency(&self, k: f64) -> f64 {
        VoxelBody::deficiency(self, k)
    }
}

/// `delta_k` of a SIM-body or voxel body.
pub fn deficiency<B: Deficiency + ?Sized>(body: &B, k: f64) -> f64 {
    body.deficiency(k)
}

/// Applies [`VoxelBody::compact_chi`].
pub fn compact_chi(body: &VoxelBody) -> VoxelBody {
    body.compact_chi()
}
