//! Brute-force reference implementations used by the acceptance suite. These
//! share no code with the library paths they check.

use lobeseg::volume::{Connectivity, GridMeta, MaskVolume};

pub fn neighbors_of(
    meta: &GridMeta,
    x: usize,
    y: usize,
    z: usize,
    conn: Connectivity,
) -> Vec<usize> {
    let (nx, ny, nz) = meta.dims();
    conn.offsets()
        .into_iter()
        .filter_map(|(dx, dy, dz)| {
            let (xx, yy, zz) = (
                x as i64 + dx as i64,
                y as i64 + dy as i64,
                z as i64 + dz as i64,
            );
            if xx < 0 || yy < 0 || zz < 0 || xx >= nx as i64 || yy >= ny as i64 || zz >= nz as i64 {
                None
            } else {
                Some(meta.index(xx as usize, yy as usize, zz as usize))
            }
        })
        .collect()
}

/// Per-voxel erosion by definition: survive iff all in-bounds neighbors are
/// true and no neighbor falls outside the volume.
pub fn brute_erode(mask: &MaskVolume, conn: Connectivity) -> Vec<bool> {
    let meta = *mask.meta();
    let full_degree = conn.offsets().len();
    (0..meta.len())
        .map(|i| {
            if !mask.data()[i] {
                return false;
            }
            let (x, y, z) = meta.coords(i);
            let nbrs = neighbors_of(&meta, x, y, z, conn);
            nbrs.len() == full_degree && nbrs.iter().all(|&j| mask.data()[j])
        })
        .collect()
}

/// Component labels by min-label propagation to a fixpoint, renumbered by
/// (size descending, first voxel ascending) to match the library convention.
pub fn brute_components(mask: &MaskVolume, conn: Connectivity) -> (Vec<u32>, usize) {
    let meta = *mask.meta();
    let n = meta.len();
    let mut label: Vec<usize> = (0..n)
        .map(|i| if mask.data()[i] { i } else { usize::MAX })
        .collect();
    loop {
        let mut changed = false;
        for i in 0..n {
            if label[i] == usize::MAX {
                continue;
            }
            let (x, y, z) = meta.coords(i);
            for j in neighbors_of(&meta, x, y, z, conn) {
                if label[j] != usize::MAX && label[j] < label[i] {
                    label[i] = label[j];
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }
    // canonical ordering: roots are component minima already
    let mut roots: Vec<usize> = label
        .iter()
        .copied()
        .filter(|&l| l != usize::MAX)
        .collect();
    roots.sort_unstable();
    roots.dedup();
    let mut sizes: Vec<(usize, usize)> = roots
        .iter()
        .map(|&r| (label.iter().filter(|&&l| l == r).count(), r))
        .collect();
    sizes.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    let mut renumber = std::collections::HashMap::new();
    for (new, &(_, root)) in sizes.iter().enumerate() {
        renumber.insert(root, new as u32 + 1);
    }
    let out = label
        .iter()
        .map(|&l| {
            if l == usize::MAX {
                0
            } else {
                renumber[&l]
            }
        })
        .collect();
    (out, sizes.len())
}

/// Exact distances by scanning every true voxel for every voxel.
pub fn brute_distance_transform(mask: &MaskVolume) -> Vec<f64> {
    let meta = *mask.meta();
    let truths: Vec<(f64, f64, f64)> = (0..meta.len())
        .filter(|&i| mask.data()[i])
        .map(|i| {
            let (x, y, z) = meta.coords(i);
            meta.position_mm(x, y, z)
        })
        .collect();
    (0..meta.len())
        .map(|i| {
            let (x, y, z) = meta.coords(i);
            let p = meta.position_mm(x, y, z);
            truths
                .iter()
                .map(|q| {
                    ((p.0 - q.0).powi(2) + (p.1 - q.1).powi(2) + (p.2 - q.2).powi(2)).sqrt()
                })
                .fold(f64::INFINITY, f64::min)
        })
        .collect()
}

fn brute_surface(mask: &MaskVolume) -> Vec<(f64, f64, f64)> {
    let meta = *mask.meta();
    (0..meta.len())
        .filter(|&i| {
            if !mask.data()[i] {
                return false;
            }
            let (x, y, z) = meta.coords(i);
            let nbrs = neighbors_of(&meta, x, y, z, Connectivity::Face6);
            nbrs.len() < 6 || nbrs.iter().any(|&j| !mask.data()[j])
        })
        .map(|i| {
            let (x, y, z) = meta.coords(i);
            meta.position_mm(x, y, z)
        })
        .collect()
}

/// Symmetric mean surface distance by all-pairs scan over surface voxels.
pub fn brute_avg_surface_distance(pred: &MaskVolume, gt: &MaskVolume) -> f64 {
    let sp = brute_surface(pred);
    let sg = brute_surface(gt);
    let d = |p: &(f64, f64, f64), s: &[(f64, f64, f64)]| {
        s.iter()
            .map(|q| ((p.0 - q.0).powi(2) + (p.1 - q.1).powi(2) + (p.2 - q.2).powi(2)).sqrt())
            .fold(f64::INFINITY, f64::min)
    };
    let total: f64 = sp.iter().map(|p| d(p, &sg)).sum::<f64>()
        + sg.iter().map(|q| d(q, &sp)).sum::<f64>();
    total / (sp.len() + sg.len()) as f64
}
