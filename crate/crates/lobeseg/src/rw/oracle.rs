//! Dense reference solver for small graphs. Assembles the full combinatorial
//! Laplacian and eliminates it directly, sharing no numerical machinery with
//! the conjugate-gradient path, so the two can check each other.

use super::graph::LungGraph;
use super::solve::seed_nodes;
use super::RwError;
use crate::seeding::{LobeId, SeedSet};

/// Node-count cap for the dense solve.
pub const BRUTE_FORCE_NODE_CAP: usize = 2000;

/// Dense Dirichlet solve for an arbitrary foreground/background split.
/// Unseeded nodes in seedless components come back as 0, matching
/// [`super::solve_seeded`].
pub fn brute_force_seeded(
    graph: &LungGraph,
    foreground: &[u32],
    background: &[u32],
) -> Result<Vec<f64>, RwError> {
    let n = graph.node_count();
    if n > BRUTE_FORCE_NODE_CAP {
        return Err(RwError::TooLarge {
            nodes: n,
            cap: BRUTE_FORCE_NODE_CAP,
        });
    }
    let mut seed_val: Vec<Option<f64>> = vec![None; n];
    for &s in foreground {
        seed_val[s as usize] = Some(1.0);
    }
    for &s in background {
        seed_val[s as usize] = Some(0.0);
    }
    let (comp, comp_count) = graph.components();
    let mut comp_seeded = vec![false; comp_count];
    for &s in foreground.iter().chain(background) {
        comp_seeded[comp[s as usize] as usize] = true;
    }
    let unknowns: Vec<u32> = (0..n as u32)
        .filter(|&i| seed_val[i as usize].is_none() && comp_seeded[comp[i as usize] as usize])
        .collect();
    let mut reduced = vec![usize::MAX; n];
    for (ri, &node) in unknowns.iter().enumerate() {
        reduced[node as usize] = ri;
    }

    let m = unknowns.len();
    let mut a = vec![0.0f64; m * m];
    let mut b = vec![0.0f64; m];
    for (ri, &node) in unknowns.iter().enumerate() {
        a[ri * m + ri] = graph.degree(node);
        for (j, w) in graph.neighbors(node) {
            match seed_val[j as usize] {
                Some(v) => b[ri] += w * v,
                None => a[ri * m + reduced[j as usize]] -= w,
            }
        }
    }
    let x = gaussian_solve(&mut a, &mut b)?;

    let mut values: Vec<f64> = seed_val.iter().map(|v| v.unwrap_or(0.0)).collect();
    for (ri, &node) in unknowns.iter().enumerate() {
        values[node as usize] = x[ri];
    }
    Ok(values)
}

/// Dense reference for the per-lobe solve. No orphan fallback: callers must
/// make sure every component holds a seed.
pub fn brute_force_rw(
    graph: &LungGraph,
    seeds: &SeedSet,
    foreground: LobeId,
) -> Result<Vec<f64>, RwError> {
    graph.meta().ensure_matches(seeds.meta())?;
    let (fg, bg) = seed_nodes(graph, seeds, foreground)?;
    brute_force_seeded(graph, &fg, &bg)
}

/// In-place Gaussian elimination with partial pivoting.
fn gaussian_solve(a: &mut [f64], b: &mut [f64]) -> Result<Vec<f64>, RwError> {
    let m = b.len();
    debug_assert_eq!(a.len(), m * m);
    for col in 0..m {
        let pivot_row = (col..m)
            .max_by(|&r1, &r2| {
                a[r1 * m + col]
                    .abs()
                    .partial_cmp(&a[r2 * m + col].abs())
                    .unwrap()
            })
            .unwrap();
        let pivot = a[pivot_row * m + col];
        if pivot.abs() < f64::EPSILON {
            return Err(RwError::InvalidSeeds(
                "reduced system is singular; a component has no seed".into(),
            ));
        }
        if pivot_row != col {
            for k in 0..m {
                a.swap(col * m + k, pivot_row * m + k);
            }
            b.swap(col, pivot_row);
        }
        for row in col + 1..m {
            let factor = a[row * m + col] / a[col * m + col];
            if factor == 0.0 {
                continue;
            }
            for k in col..m {
                a[row * m + k] -= factor * a[col * m + k];
            }
            b[row] -= factor * b[col];
        }
    }
    let mut x = vec![0.0f64; m];
    for row in (0..m).rev() {
        let mut acc = b[row];
        for k in row + 1..m {
            acc -= a[row * m + k] * x[k];
        }
        x[row] = acc / a[row * m + row];
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::{GridMeta, MaskVolume};

    fn chain_graph(weights: &[f64]) -> LungGraph {
        let n = weights.len() + 1;
        let meta = GridMeta::new((n, 1, 1), (1.0, 1.0, 1.0)).unwrap();
        let lung = MaskVolume::new(meta, true);
        LungGraph::build_with(&lung, |a, _| weights[a]).unwrap()
    }

    #[test]
    fn chain_midpoint_is_half() {
        let g = chain_graph(&[1.0, 1.0]);
        let y = brute_force_seeded(&g, &[0], &[2]).unwrap();
        assert!((y[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn single_node_between_two_seeds() {
        // weights w1 to the foreground, w2 to the background: y = w1/(w1+w2)
        let (w1, w2) = (0.3, 1.7);
        let g = chain_graph(&[w1, w2]);
        let y = brute_force_seeded(&g, &[0], &[2]).unwrap();
        assert!((y[1] - w1 / (w1 + w2)).abs() < 1e-12);
    }

    #[test]
    fn cap_is_enforced() {
        let meta = GridMeta::new((13, 13, 13), (1.0, 1.0, 1.0)).unwrap();
        let lung = MaskVolume::new(meta, true);
        let g = LungGraph::build_with(&lung, |_, _| 1.0).unwrap();
        assert!(matches!(
            brute_force_seeded(&g, &[0], &[1]),
            Err(RwError::TooLarge { nodes: 2197, .. })
        ));
    }
}
