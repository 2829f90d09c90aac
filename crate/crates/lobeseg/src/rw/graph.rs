//! The 6-connected weighted voxel graph over the lung mask.

use super::{RwConfig, RwError};
use crate::volume::{GridMeta, MaskVolume, ScalarVolume};
use std::sync::OnceLock;

pub(crate) const NO_NODE: u32 = u32::MAX;

/// Gaussian edge affinity on probability differences, floored so the graph
/// never disconnects numerically: `max(exp(-beta * (p_i - p_j)^2), floor)`.
pub fn edge_weight(p_i: f64, p_j: f64, cfg: &RwConfig) -> f64 {
    let d = p_i - p_j;
    (-cfg.beta * d * d).exp().max(cfg.weight_floor)
}

/// Sparse symmetric graph over in-lung voxels with face-neighbor edges.
///
/// Nodes are a dense renumbering of the lung voxels in scan order; edges never
/// touch a voxel outside the lung. Adjacency is stored in compressed rows with
/// per-node weighted degree.
pub struct LungGraph {
    meta: GridMeta,
    node_of_voxel: Vec<u32>,
    voxel_of_node: Vec<usize>,
    offsets: Vec<usize>,
    nbr_nodes: Vec<u32>,
    nbr_weights: Vec<f64>,
    degree: Vec<f64>,
    components: OnceLock<(Vec<u32>, usize)>,
}

impl LungGraph {
    /// Builds the graph with weights from the boundary probability volume.
    pub fn build(
        prob: &ScalarVolume,
        lung: &MaskVolume,
        cfg: &RwConfig,
    ) -> Result<Self, RwError> {
        prob.meta().ensure_matches(lung.meta())?;
        cfg.validate()?;
        let p = prob.data();
        Self::build_with(lung, |a, b| edge_weight(p[a], p[b], cfg))
    }

    /// Builds the graph with an arbitrary symmetric weight function over
    /// unordered voxel pairs. The function is always called with
    /// `a < b` (flat indices), so any map keyed by the ordered pair works.
    pub fn build_with(
        lung: &MaskVolume,
        weight_of: impl Fn(usize, usize) -> f64,
    ) -> Result<Self, RwError> {
        let meta = *lung.meta();
        let inside = lung.data();
        let mut node_of_voxel = vec![NO_NODE; meta.len()];
        let mut voxel_of_node = Vec::new();
        for (v, &m) in inside.iter().enumerate() {
            if m {
                node_of_voxel[v] = voxel_of_node.len() as u32;
                voxel_of_node.push(v);
            }
        }
        let n = voxel_of_node.len();
        if n == 0 {
            return Err(RwError::EmptyLung);
        }

        let (nx, ny, nz) = meta.dims();
        let neighbor = |v: usize, d: usize| -> Option<usize> {
            let (x, y, z) = meta.coords(v);
            let j = match d {
                0 if x > 0 => v - 1,
                1 if x + 1 < nx => v + 1,
                2 if y > 0 => v - nx,
                3 if y + 1 < ny => v + nx,
                4 if z > 0 => v - nx * ny,
                5 if z + 1 < nz => v + nx * ny,
                _ => return None,
            };
            inside[j].then_some(j)
        };

        let mut offsets = vec![0usize; n + 1];
        for (i, &v) in voxel_of_node.iter().enumerate() {
            offsets[i + 1] = offsets[i] + (0..6).filter(|&d| neighbor(v, d).is_some()).count();
        }
        let total = offsets[n];
        let mut nbr_nodes = vec![0u32; total];
        let mut nbr_weights = vec![0.0f64; total];
        let mut degree = vec![0.0f64; n];
        for (i, &v) in voxel_of_node.iter().enumerate() {
            let mut cursor = offsets[i];
            let mut deg = 0.0;
            for d in 0..6 {
                if let Some(j) = neighbor(v, d) {
                    let w = weight_of(v.min(j), v.max(j));
                    nbr_nodes[cursor] = node_of_voxel[j];
                    nbr_weights[cursor] = w;
                    deg += w;
                    cursor += 1;
                }
            }
            degree[i] = deg;
        }

        Ok(Self {
            meta,
            node_of_voxel,
            voxel_of_node,
            offsets,
            nbr_nodes,
            nbr_weights,
            degree,
            components: OnceLock::new(),
        })
    }

    pub fn meta(&self) -> &GridMeta {
        &self.meta
    }

    pub fn node_count(&self) -> usize {
        self.voxel_of_node.len()
    }

    /// Unordered edge count.
    pub fn edge_count(&self) -> usize {
        self.nbr_nodes.len() / 2
    }

    #[inline]
    pub fn node_of(&self, voxel: usize) -> Option<u32> {
        match self.node_of_voxel[voxel] {
            NO_NODE => None,
            n => Some(n),
        }
    }

    #[inline]
    pub fn voxel_of(&self, node: u32) -> usize {
        self.voxel_of_node[node as usize]
    }

    /// Weighted degree (sum of incident edge weights).
    #[inline]
    pub fn degree(&self, node: u32) -> f64 {
        self.degree[node as usize]
    }

    /// Neighbors of `node` with edge weights.
    #[inline]
    pub fn neighbors(&self, node: u32) -> impl Iterator<Item = (u32, f64)> + '_ {
        let lo = self.offsets[node as usize];
        let hi = self.offsets[node as usize + 1];
        self.nbr_nodes[lo..hi]
            .iter()
            .copied()
            .zip(self.nbr_weights[lo..hi].iter().copied())
    }

    /// Unordered edges as `(low_node, high_node, weight)`.
    pub fn edges(&self) -> impl Iterator<Item = (u32, u32, f64)> + '_ {
        (0..self.node_count() as u32).flat_map(move |i| {
            self.neighbors(i)
                .filter(move |&(j, _)| j > i)
                .map(move |(j, w)| (i, j, w))
        })
    }

    /// Multiplies every edge weight by `c > 0` and rebuilds the degrees. The
    /// energy minimizer is invariant under this scaling.
    pub fn scale_weights(&mut self, c: f64) {
        assert!(c.is_finite() && c > 0.0, "scale factor must be positive");
        for w in &mut self.nbr_weights {
            *w *= c;
        }
        for i in 0..self.degree.len() {
            let lo = self.offsets[i];
            let hi = self.offsets[i + 1];
            self.degree[i] = self.nbr_weights[lo..hi].iter().sum();
        }
    }

    /// Face-connected components of the graph: per-node component ids in
    /// `0..count`, numbered in order of their lowest node index. Cached.
    pub fn components(&self) -> (&[u32], usize) {
        let (labels, count) = self.components.get_or_init(|| {
            let n = self.node_count();
            let mut comp = vec![u32::MAX; n];
            let mut count = 0u32;
            let mut stack = Vec::new();
            for s in 0..n as u32 {
                if comp[s as usize] != u32::MAX {
                    continue;
                }
                comp[s as usize] = count;
                stack.push(s);
                while let Some(i) = stack.pop() {
                    for (j, _) in self.neighbors(i) {
                        if comp[j as usize] == u32::MAX {
                            comp[j as usize] = count;
                            stack.push(j);
                        }
                    }
                }
                count += 1;
            }
            (comp, count as usize)
        });
        (labels, *count)
    }
}
