//! The seeded Dirichlet solve: fix probabilities on the seed nodes, minimize
//! the weighted quadratic energy over the rest, and read off per-node
//! foreground probabilities.
//!
//! The minimizer solves the reduced graph-Laplacian system over unseeded
//! nodes only, by conjugate gradients with Jacobi (diagonal) preconditioning.
//! Nodes in connected components that contain no seed at all have no defined
//! Dirichlet value; they fall back to the nearest seed region by
//! spacing-aware distance.

use super::graph::LungGraph;
use super::{RwConfig, RwError};
use crate::par;
use crate::seeding::{LobeId, SeedSet};
use crate::volume::{distance_transform_mode, GridMeta, LabelVolume, MaskVolume};

/// Convergence record for one lobe solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveStats {
    /// Conjugate-gradient iterations spent.
    pub iterations: usize,
    /// Final relative residual `|r| / |b|` (0 when the system was trivial).
    pub residual: f64,
    /// Unseeded nodes living in components without any seed; these bypass the
    /// solve and are assigned by nearest seed region.
    pub orphan_nodes: usize,
}

const ROW_CHUNK: usize = 1024;

struct Partition {
    /// Dirichlet value per node; None for unknowns.
    seed_val: Vec<Option<f64>>,
    /// Nodes to solve for (unseeded, in a seeded component).
    unknowns: Vec<u32>,
    /// Unseeded nodes in seedless components.
    orphans: Vec<u32>,
}

fn partition(graph: &LungGraph, foreground: &[u32], background: &[u32]) -> Partition {
    let n = graph.node_count();
    let mut seed_val: Vec<Option<f64>> = vec![None; n];
    for &s in foreground {
        debug_assert!(seed_val[s as usize].is_none(), "overlapping seeds");
        seed_val[s as usize] = Some(1.0);
    }
    for &s in background {
        debug_assert!(seed_val[s as usize].is_none(), "overlapping seeds");
        seed_val[s as usize] = Some(0.0);
    }
    let (comp, comp_count) = graph.components();
    let mut comp_seeded = vec![false; comp_count];
    for &s in foreground.iter().chain(background) {
        comp_seeded[comp[s as usize] as usize] = true;
    }
    let mut unknowns = Vec::new();
    let mut orphans = Vec::new();
    for i in 0..n as u32 {
        if seed_val[i as usize].is_some() {
            continue;
        }
        if comp_seeded[comp[i as usize] as usize] {
            unknowns.push(i);
        } else {
            orphans.push(i);
        }
    }
    Partition {
        seed_val,
        unknowns,
        orphans,
    }
}

/// Solves the Dirichlet problem for an arbitrary foreground/background seed
/// split and returns raw per-node probabilities (no clamping). Seeded nodes
/// carry exactly 1 or 0; orphan nodes come back as 0 and are counted in the
/// stats so callers can assign them.
pub fn solve_seeded(
    graph: &LungGraph,
    foreground: &[u32],
    background: &[u32],
    cfg: &RwConfig,
) -> Result<(Vec<f64>, SolveStats), RwError> {
    let (values, stats, _) =
        solve_partitioned(graph, foreground, background, cfg, par::default_parallel())?;
    Ok((values, stats))
}

pub(crate) fn solve_partitioned(
    graph: &LungGraph,
    foreground: &[u32],
    background: &[u32],
    cfg: &RwConfig,
    parallel: bool,
) -> Result<(Vec<f64>, SolveStats, Vec<u32>), RwError> {
    cfg.validate()?;
    let part = partition(graph, foreground, background);
    let mut values: Vec<f64> = part
        .seed_val
        .iter()
        .map(|v| v.unwrap_or(0.0))
        .collect();

    let m = part.unknowns.len();
    if m == 0 {
        let stats = SolveStats {
            iterations: 0,
            residual: 0.0,
            orphan_nodes: part.orphans.len(),
        };
        return Ok((values, stats, part.orphans));
    }

    // reduced system: row per unknown, seeded neighbors folded into the rhs
    let mut reduced_idx = vec![u32::MAX; graph.node_count()];
    for (ri, &node) in part.unknowns.iter().enumerate() {
        reduced_idx[node as usize] = ri as u32;
    }
    let mut roff = Vec::with_capacity(m + 1);
    roff.push(0usize);
    let mut rnbr: Vec<u32> = Vec::new();
    let mut rweight: Vec<f64> = Vec::new();
    let mut diag = vec![0.0f64; m];
    let mut b = vec![0.0f64; m];
    for (ri, &node) in part.unknowns.iter().enumerate() {
        diag[ri] = graph.degree(node);
        for (j, w) in graph.neighbors(node) {
            match part.seed_val[j as usize] {
                Some(v) => b[ri] += w * v,
                None => {
                    rnbr.push(reduced_idx[j as usize]);
                    rweight.push(w);
                }
            }
        }
        roff.push(rnbr.len());
    }

    let bnorm = par::norm2(&b, parallel);
    let stats;
    if bnorm == 0.0 {
        // every reachable seed is background; zero solves the system exactly
        stats = SolveStats {
            iterations: 0,
            residual: 0.0,
            orphan_nodes: part.orphans.len(),
        };
    } else {
        let matvec = |x: &[f64], out: &mut Vec<f64>| {
            par::for_each_chunk_mut(out, ROW_CHUNK, parallel, |ci, chunk| {
                let base = ci * ROW_CHUNK;
                for (k, o) in chunk.iter_mut().enumerate() {
                    let row = base + k;
                    let mut acc = diag[row] * x[row];
                    for t in roff[row]..roff[row + 1] {
                        acc -= rweight[t] * x[rnbr[t] as usize];
                    }
                    *o = acc;
                }
            });
        };

        const VEC_CHUNK: usize = 4096;
        let inv_diag: Vec<f64> = diag.iter().map(|d| 1.0 / d).collect();
        let apply_jacobi = |r: &[f64], z: &mut Vec<f64>| {
            par::for_each_chunk_mut(z, VEC_CHUNK, parallel, |ci, zc| {
                let base = ci * VEC_CHUNK;
                for (k, zi) in zc.iter_mut().enumerate() {
                    *zi = r[base + k] * inv_diag[base + k];
                }
            });
        };

        let mut x = vec![0.0f64; m];
        let mut r = b.clone();
        let mut z = vec![0.0f64; m];
        apply_jacobi(&r, &mut z);
        let mut p = z.clone();
        let mut ap = vec![0.0f64; m];
        let mut rz = par::dot(&r, &z, parallel);
        let mut converged = None;
        for it in 1..=cfg.cg_max_iterations {
            matvec(&p, &mut ap);
            let pap = par::dot(&p, &ap, parallel);
            if !pap.is_finite() || pap <= 0.0 {
                return Err(RwError::SolverDiverged {
                    residual: par::norm2(&r, parallel) / bnorm,
                    iterations: it,
                });
            }
            let alpha = rz / pap;
            par::for_each_chunk_mut(&mut x, VEC_CHUNK, parallel, |ci, xc| {
                let base = ci * VEC_CHUNK;
                for (k, xi) in xc.iter_mut().enumerate() {
                    *xi += alpha * p[base + k];
                }
            });
            par::for_each_chunk_mut(&mut r, VEC_CHUNK, parallel, |ci, rc| {
                let base = ci * VEC_CHUNK;
                for (k, ri) in rc.iter_mut().enumerate() {
                    *ri -= alpha * ap[base + k];
                }
            });
            let rnorm = par::norm2(&r, parallel);
            if rnorm <= cfg.cg_tolerance * bnorm {
                converged = Some((it, rnorm / bnorm));
                break;
            }
            apply_jacobi(&r, &mut z);
            let rz_next = par::dot(&r, &z, parallel);
            let beta = rz_next / rz;
            par::for_each_chunk_mut(&mut p, VEC_CHUNK, parallel, |ci, pc| {
                let base = ci * VEC_CHUNK;
                for (k, pi) in pc.iter_mut().enumerate() {
                    *pi = z[base + k] + beta * *pi;
                }
            });
            rz = rz_next;
        }
        let (iterations, residual) = converged.ok_or(RwError::SolverDiverged {
            residual: par::norm2(&r, parallel) / bnorm,
            iterations: cfg.cg_max_iterations,
        })?;
        for (ri, &node) in part.unknowns.iter().enumerate() {
            values[node as usize] = x[ri];
        }
        stats = SolveStats {
            iterations,
            residual,
            orphan_nodes: part.orphans.len(),
        };
    }
    Ok((values, stats, part.orphans))
}

/// Solves one lobe against the union of the other four and clamps the result
/// to `[0, 1]`. Orphan nodes receive 1 when their nearest seed region belongs
/// to `foreground` and 0 otherwise, keeping the five fields a partition of
/// unity.
pub fn solve_lobe(
    graph: &LungGraph,
    seeds: &SeedSet,
    foreground: LobeId,
    cfg: &RwConfig,
) -> Result<(Vec<f64>, SolveStats), RwError> {
    solve_lobe_mode(graph, seeds, foreground, cfg, par::default_parallel())
}

pub(crate) fn solve_lobe_mode(
    graph: &LungGraph,
    seeds: &SeedSet,
    foreground: LobeId,
    cfg: &RwConfig,
    parallel: bool,
) -> Result<(Vec<f64>, SolveStats), RwError> {
    graph.meta().ensure_matches(seeds.meta())?;
    let (fg, bg) = seed_nodes(graph, seeds, foreground)?;
    let (mut values, stats, orphans) = solve_partitioned(graph, &fg, &bg, cfg, parallel)?;
    if !orphans.is_empty() {
        let nearest = nearest_region_per_voxel(graph.meta(), seeds, parallel)?;
        for &node in &orphans {
            let voxel = graph.voxel_of(node);
            values[node as usize] = if nearest[voxel] == foreground.label() {
                1.0
            } else {
                0.0
            };
        }
    }
    for v in &mut values {
        *v = v.clamp(0.0, 1.0);
    }
    Ok((values, stats))
}

pub(crate) fn seed_nodes(
    graph: &LungGraph,
    seeds: &SeedSet,
    foreground: LobeId,
) -> Result<(Vec<u32>, Vec<u32>), RwError> {
    let to_nodes = |lobe: LobeId| -> Result<Vec<u32>, RwError> {
        seeds
            .region(lobe)
            .iter()
            .map(|&voxel| {
                graph.node_of(voxel).ok_or_else(|| {
                    RwError::InvalidSeeds(format!(
                        "seed voxel {voxel} of lobe {lobe} lies outside the lung graph"
                    ))
                })
            })
            .collect()
    };
    let fg = to_nodes(foreground)?;
    let mut bg = Vec::new();
    for lobe in LobeId::ALL {
        if lobe != foreground {
            bg.extend(to_nodes(lobe)?);
        }
    }
    Ok((fg, bg))
}

/// Nearest seed region per grid voxel by exact spacing-aware distance, ties
/// resolved toward the smaller lobe id. Used for orphan components and as the
/// no-walker baseline labeling.
pub(crate) fn nearest_region_per_voxel(
    meta: &GridMeta,
    seeds: &SeedSet,
    parallel: bool,
) -> Result<Vec<u8>, RwError> {
    let mut best = vec![f64::INFINITY; meta.len()];
    let mut label = vec![0u8; meta.len()];
    for lobe in LobeId::ALL {
        let mut mask = MaskVolume::new(*meta, false);
        for &i in seeds.region(lobe) {
            mask.data_mut()[i] = true;
        }
        let dt = distance_transform_mode(&mask, parallel)
            .map_err(|e| RwError::InvalidSeeds(format!("lobe {lobe}: {e}")))?;
        for (i, (&d, b)) in dt.data().iter().zip(best.iter_mut()).enumerate() {
            if d < *b {
                *b = d;
                label[i] = lobe.label();
            }
        }
    }
    Ok(label)
}

/// No-walker reference labeling: every lung voxel takes the lobe of its
/// nearest seed region.
pub fn nearest_seed_labels(lung: &MaskVolume, seeds: &SeedSet) -> Result<LabelVolume, RwError> {
    lung.meta().ensure_matches(seeds.meta())?;
    let nearest = nearest_region_per_voxel(lung.meta(), seeds, par::default_parallel())?;
    let data = lung
        .data()
        .iter()
        .zip(&nearest)
        .map(|(&inside, &l)| if inside { l } else { 0 })
        .collect();
    Ok(LabelVolume::from_data(*lung.meta(), data).expect("lengths match"))
}
