//! Nodal and element patches measured in element layers.

use super::mesh::Mesh;
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct PatchTopology {
    pub s: usize,
    /// Sorted node ids within `s` layers of each node.
    pub node_patches: Vec<Vec<usize>>,
    /// Sorted union of the node patches of each element's nodes.
    pub element_patches: Vec<Vec<usize>>,
}

/// Patches on a structured mesh; in 2-D a layer is one step of grid
/// Chebyshev distance, so interior patches are `(2s+1)²` blocks.
pub fn build_patch_topology(mesh: &Mesh, s: usize) -> Result<PatchTopology> {
    let grid = mesh.grid().ok_or_else(|| Error::Unsupported("patch topology requires a structured mesh".into()))?;
    let node_patches: Vec<Vec<usize>> = (0..mesh.n_nodes())
        .map(|n| {
            let [i, j] = mesh.structured_index(n).unwrap();
            let (i0, i1) = (i.saturating_sub(s), (i + s).min(grid.nx - 1));
            let (j0, j1) = (j.saturating_sub(s), (j + s).min(grid.ny - 1));
            (j0..=j1).flat_map(|jj| (i0..=i1).map(move |ii| jj * grid.nx + ii)).collect()
        })
        .collect();
    let element_patches = mesh
        .elements()
        .iter()
        .map(|conn| {
            let mut u: Vec<usize> = conn.iter().flat_map(|&n| node_patches[n].iter().copied()).collect();
            u.sort_unstable();
            u.dedup();
            u
        })
        .collect();
    Ok(PatchTopology { s, node_patches, element_patches })
}
