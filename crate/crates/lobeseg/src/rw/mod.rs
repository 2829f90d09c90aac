//! Random-walker lobe segmentation over the lung voxel graph.
//!
//! The walker treats the boundary probability volume as terrain: edges whose
//! endpoints differ in probability are penalized by a Gaussian affinity, so
//! walks rarely cross a probability ridge. Each lobe is solved as a Dirichlet
//! problem (its seed region held at 1, the other four at 0); the fifth field
//! is the complement of the first four, and each voxel takes the argmax lobe.

mod graph;
mod oracle;
mod solve;

pub use graph::{edge_weight, LungGraph};
pub use oracle::{brute_force_rw, brute_force_seeded, BRUTE_FORCE_NODE_CAP};
pub use solve::{nearest_seed_labels, solve_lobe, solve_seeded, SolveStats};

use crate::par;
use crate::seeding::{LobeId, SeedSet};
use crate::volume::{GridMeta, LabelVolume, MaskVolume, MetaMismatch, ScalarVolume};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RwError {
    #[error(transparent)]
    MetaMismatch(#[from] MetaMismatch),
    #[error("lung mask has no true voxel")]
    EmptyLung,
    #[error("solver did not converge: relative residual {residual:.3e} after {iterations} iterations")]
    SolverDiverged { residual: f64, iterations: usize },
    #[error("graph has {nodes} nodes, dense solve caps at {cap}")]
    TooLarge { nodes: usize, cap: usize },
    #[error("invalid seeds: {0}")]
    InvalidSeeds(String),
    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),
}

/// Walker parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RwConfig {
    /// Contrast parameter scaling how strongly probability differences
    /// suppress edge weights.
    pub beta: f64,
    /// Lower bound on edge weights; keeps the graph numerically connected.
    pub weight_floor: f64,
    /// Relative residual target for the conjugate-gradient solve.
    pub cg_tolerance: f64,
    pub cg_max_iterations: usize,
}

impl Default for RwConfig {
    fn default() -> Self {
        Self {
            beta: 100.0,
            weight_floor: 1e-6,
            cg_tolerance: 1e-8,
            cg_max_iterations: 5000,
        }
    }
}

impl RwConfig {
    pub fn validate(&self) -> Result<(), RwError> {
        if !(self.beta.is_finite() && self.beta >= 0.0) {
            return Err(RwError::InvalidConfig(format!(
                "beta must be finite and nonnegative, got {}",
                self.beta
            )));
        }
        if !(self.weight_floor.is_finite() && self.weight_floor > 0.0 && self.weight_floor <= 1.0)
        {
            return Err(RwError::InvalidConfig(format!(
                "weight floor must be in (0, 1], got {}",
                self.weight_floor
            )));
        }
        if !(self.cg_tolerance.is_finite() && self.cg_tolerance > 0.0 && self.cg_tolerance < 1.0) {
            return Err(RwError::InvalidConfig(format!(
                "cg tolerance must be in (0, 1), got {}",
                self.cg_tolerance
            )));
        }
        if self.cg_max_iterations == 0 {
            return Err(RwError::InvalidConfig("cg_max_iterations must be >= 1".into()));
        }
        Ok(())
    }
}

/// Convenience wrapper for [`LungGraph::build`].
pub fn build_graph(
    prob: &ScalarVolume,
    lung: &MaskVolume,
    cfg: &RwConfig,
) -> Result<LungGraph, RwError> {
    LungGraph::build(prob, lung, cfg)
}

/// Per-lobe pseudo-probability fields. The five fields sum to one at every
/// in-lung voxel because the fifth is constructed as the complement of the
/// other four.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityField {
    lobes: [ScalarVolume; 5],
}

impl ProbabilityField {
    pub fn lobe(&self, lobe: LobeId) -> &ScalarVolume {
        &self.lobes[lobe.label() as usize - 1]
    }

    pub fn meta(&self) -> &GridMeta {
        self.lobes[0].meta()
    }

    pub fn into_lobes(self) -> [ScalarVolume; 5] {
        self.lobes
    }
}

/// Convergence record for one solved lobe.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LobeSolveStats {
    pub lobe: LobeId,
    pub iterations: usize,
    pub residual: f64,
    /// Nodes assigned by the nearest-seed fallback instead of the solve.
    pub orphan_nodes: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegmentationResult {
    pub labels: LabelVolume,
    pub probabilities: ProbabilityField,
    /// Stats for the four solved lobes; the fifth field needs no solve.
    pub stats: Vec<LobeSolveStats>,
}

/// Full segmentation: solve the first four lobes, take the fifth by
/// complement, label by argmax (ties to the smaller lobe id), and force seed
/// voxels to their own lobe. Voxels outside the lung stay 0.
pub fn segment_lobes(
    prob: &ScalarVolume,
    lung: &MaskVolume,
    seeds: &SeedSet,
    cfg: &RwConfig,
) -> Result<SegmentationResult, RwError> {
    segment_lobes_mode(prob, lung, seeds, cfg, par::default_parallel())
}

/// Sequential reference implementation of [`segment_lobes`]; used by the
/// benches. Produces bit-identical results.
pub fn segment_lobes_seq(
    prob: &ScalarVolume,
    lung: &MaskVolume,
    seeds: &SeedSet,
    cfg: &RwConfig,
) -> Result<SegmentationResult, RwError> {
    segment_lobes_mode(prob, lung, seeds, cfg, false)
}

pub(crate) fn segment_lobes_mode(
    prob: &ScalarVolume,
    lung: &MaskVolume,
    seeds: &SeedSet,
    cfg: &RwConfig,
    parallel: bool,
) -> Result<SegmentationResult, RwError> {
    prob.meta().ensure_matches(lung.meta())?;
    lung.meta().ensure_matches(seeds.meta())?;
    let graph = LungGraph::build(prob, lung, cfg)?;
    let meta = *lung.meta();

    // the four independent solves share the read-only graph
    let solved: Vec<Result<(Vec<f64>, SolveStats), RwError>> =
        par::map_collect(4, parallel, |k| {
            solve::solve_lobe_mode(&graph, seeds, LobeId::ALL[k], cfg, parallel)
        });
    let mut fields: Vec<Vec<f64>> = Vec::with_capacity(5);
    let mut stats = Vec::with_capacity(4);
    for (k, outcome) in solved.into_iter().enumerate() {
        let (values, s) = outcome?;
        stats.push(LobeSolveStats {
            lobe: LobeId::ALL[k],
            iterations: s.iterations,
            residual: s.residual,
            orphan_nodes: s.orphan_nodes,
        });
        fields.push(values);
    }

    // The fifth field is the exact complement, so the five fields sum to one
    // at every node. It can undershoot zero by up to the solver tolerance
    // where the four solves overshoot; clamping here would break the
    // partition of unity, so the tiny negative values are kept.
    let n = graph.node_count();
    let mut last = vec![0.0f64; n];
    for i in 0..n {
        let sum = fields[0][i] + fields[1][i] + fields[2][i] + fields[3][i];
        last[i] = 1.0 - sum;
    }
    fields.push(last);

    let mut labels = LabelVolume::new(meta, 0);
    for i in 0..n {
        let mut best_k = 0usize;
        let mut best_v = fields[0][i];
        for (k, field) in fields.iter().enumerate().skip(1) {
            if field[i] > best_v {
                best_v = field[i];
                best_k = k;
            }
        }
        labels.data_mut()[graph.voxel_of(i as u32)] = best_k as u8 + 1;
    }
    for lobe in LobeId::ALL {
        for &voxel in seeds.region(lobe) {
            labels.data_mut()[voxel] = lobe.label();
        }
    }

    let probabilities = {
        let mut vols: Vec<ScalarVolume> = Vec::with_capacity(5);
        for field in &fields {
            let mut vol = ScalarVolume::new(meta, 0.0);
            for (node, &v) in field.iter().enumerate() {
                vol.data_mut()[graph.voxel_of(node as u32)] = v;
            }
            vols.push(vol);
        }
        ProbabilityField {
            lobes: vols.try_into().expect("five fields"),
        }
    };

    Ok(SegmentationResult {
        labels,
        probabilities,
        stats,
    })
}
