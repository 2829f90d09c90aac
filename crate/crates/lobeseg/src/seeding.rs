//! Seed-region generation: threshold the boundary probability, invert it
//! inside the lung, and iteratively erode until exactly five sufficiently
//! large connected regions remain. Region centroids then identify which
//! region is which lobe.
//!
//! Axis convention (shared with the file format): z grows toward the
//! patient's head and x toward the patient's left. The left lung is the lung
//! with the larger x centroid; within a lung, upper lobes have larger z
//! centroids.

use crate::volume::{
    connected_components, erode_mode, ComponentMap, Connectivity, GridMeta, LabelVolume,
    MaskVolume, MetaMismatch, ScalarVolume,
};
use crate::{par, volume::VolumeError};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SeedingError {
    #[error(transparent)]
    MetaMismatch(#[from] MetaMismatch),
    #[error(
        "never found exactly {target} seed regions: closest count was {best_count} \
         within {iterations} erosion iterations"
    )]
    SeedCountNeverFive {
        target: usize,
        iterations: usize,
        best_count: usize,
    },
    #[error("cannot split lung into left and right: {0}")]
    LungPartition(String),
    #[error("invalid seed labels: {0}")]
    InvalidSeeds(String),
}

/// The five lobes, numbered to match `LabelVolume` codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[repr(u8)]
pub enum LobeId {
    /// Left upper
    LU = 1,
    /// Left lower
    LL = 2,
    /// Right upper
    RU = 3,
    /// Right middle
    RM = 4,
    /// Right lower
    RL = 5,
}

impl LobeId {
    pub const ALL: [LobeId; 5] = [LobeId::LU, LobeId::LL, LobeId::RU, LobeId::RM, LobeId::RL];

    pub fn label(self) -> u8 {
        self as u8
    }

    pub fn from_label(label: u8) -> Option<LobeId> {
        Self::ALL.get(label.checked_sub(1)? as usize).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            LobeId::LU => "LU",
            LobeId::LL => "LL",
            LobeId::RU => "RU",
            LobeId::RM => "RM",
            LobeId::RL => "RL",
        }
    }
}

impl std::fmt::Display for LobeId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Thresholding and erosion-loop parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeedingConfig {
    /// Probability threshold for the boundary mask; compared inclusively.
    pub theta: f64,
    /// Erosion budget before giving up.
    pub max_erosions: usize,
    /// Components smaller than this are ignored as noise.
    pub min_seed_voxels: usize,
}

impl Default for SeedingConfig {
    fn default() -> Self {
        Self {
            theta: 0.5,
            max_erosions: 64,
            min_seed_voxels: 50,
        }
    }
}

/// Five disjoint seed regions with lobe identities, plus the erosion count
/// that produced them. Regions are flat voxel indices in ascending order.
#[derive(Debug, Clone, PartialEq)]
pub struct SeedSet {
    meta: GridMeta,
    regions: [Vec<usize>; 5],
    erosion_iterations: usize,
}

impl SeedSet {
    pub fn meta(&self) -> &GridMeta {
        &self.meta
    }

    pub fn region(&self, lobe: LobeId) -> &[usize] {
        &self.regions[lobe.label() as usize - 1]
    }

    pub fn erosion_iterations(&self) -> usize {
        self.erosion_iterations
    }

    pub fn total_voxels(&self) -> usize {
        self.regions.iter().map(Vec::len).sum()
    }

    /// Renders the seed regions as a label volume (0 where unseeded).
    pub fn to_label_volume(&self) -> LabelVolume {
        let mut labels = LabelVolume::new(self.meta, 0);
        for lobe in LobeId::ALL {
            for &i in self.region(lobe) {
                labels.data_mut()[i] = lobe.label();
            }
        }
        labels
    }

    /// Rebuilds a seed set from a label volume previously produced by
    /// [`SeedSet::to_label_volume`]. The erosion count is not stored in the
    /// volume and comes back as 0.
    pub fn from_label_volume(labels: &LabelVolume) -> Result<Self, SeedingError> {
        labels
            .validate_labels()
            .map_err(|e| SeedingError::InvalidSeeds(e.to_string()))?;
        let mut regions: [Vec<usize>; 5] = Default::default();
        for (i, &l) in labels.data().iter().enumerate() {
            if l > 0 {
                regions[l as usize - 1].push(i);
            }
        }
        if let Some(empty) = LobeId::ALL.iter().find(|l| regions[l.label() as usize - 1].is_empty()) {
            return Err(SeedingError::InvalidSeeds(format!(
                "lobe {empty} has no seed voxels"
            )));
        }
        Ok(Self {
            meta: *labels.meta(),
            regions,
            erosion_iterations: 0,
        })
    }
}

/// Voxels inside the lung whose boundary probability reaches `theta`
/// (inclusive comparison).
pub fn boundary_mask(
    prob: &ScalarVolume,
    lung: &MaskVolume,
    theta: f64,
) -> Result<MaskVolume, SeedingError> {
    prob.meta().ensure_matches(lung.meta())?;
    let data = prob
        .data()
        .iter()
        .zip(lung.data())
        .map(|(&p, &inside)| inside && p >= theta)
        .collect();
    Ok(MaskVolume::from_data(*lung.meta(), data).expect("lengths match by construction"))
}

/// Lung voxels not claimed by the boundary mask.
pub fn interior_mask(
    boundary: &MaskVolume,
    lung: &MaskVolume,
) -> Result<MaskVolume, SeedingError> {
    boundary.meta().ensure_matches(lung.meta())?;
    let data = boundary
        .data()
        .iter()
        .zip(lung.data())
        .map(|(&b, &inside)| inside && !b)
        .collect();
    Ok(MaskVolume::from_data(*lung.meta(), data).expect("lengths match by construction"))
}

/// Erodes `interior` until the face-connected components of size at least
/// `min_seed_voxels` number exactly `target`, and returns those components
/// (largest first) together with the erosion count that produced them.
///
/// Iteration 0 is the unclipped interior, so the returned regions are the
/// largest that satisfy the count. Smaller components are ignored as noise,
/// not counted.
pub fn find_seed_regions(
    interior: &MaskVolume,
    cfg: &SeedingConfig,
    target: usize,
) -> Result<(Vec<Vec<usize>>, usize), SeedingError> {
    find_seed_regions_mode(interior, cfg, target, par::default_parallel())
}

pub(crate) fn find_seed_regions_mode(
    interior: &MaskVolume,
    cfg: &SeedingConfig,
    target: usize,
    parallel: bool,
) -> Result<(Vec<Vec<usize>>, usize), SeedingError> {
    let mut current = interior.clone();
    let mut best_count = 0usize;
    let mut iterations = 0usize;
    for n in 0..=cfg.max_erosions {
        iterations = n;
        let components = connected_components(&current, Connectivity::Face6);
        let qualifying = count_qualifying(&components, cfg.min_seed_voxels);
        if qualifying.abs_diff(target) < best_count.abs_diff(target) || n == 0 {
            best_count = qualifying;
        }
        if qualifying == target {
            let regions = (1..=target as u32)
                .map(|label| components.voxels_of(label))
                .collect();
            return Ok((regions, n));
        }
        if !current.any() {
            break;
        }
        current = erode_mode(&current, Connectivity::Face6, parallel);
    }
    Err(SeedingError::SeedCountNeverFive {
        target,
        iterations,
        best_count,
    })
}

fn count_qualifying(components: &ComponentMap, min_voxels: usize) -> usize {
    // components are ordered by size descending, so qualifying ones are a prefix
    (1..=components.count() as u32)
        .take_while(|&l| components.size(l).unwrap_or(0) >= min_voxels)
        .count()
}

/// Runs the erosion loop for five regions and assigns lobe identities.
///
/// `interior` must be a subset of `lung`; use [`boundary_mask`] and
/// [`interior_mask`] to derive it.
pub fn generate_seeds(
    interior: &MaskVolume,
    lung: &MaskVolume,
    cfg: &SeedingConfig,
) -> Result<SeedSet, SeedingError> {
    generate_seeds_mode(interior, lung, cfg, par::default_parallel())
}

/// Sequential reference implementation of [`generate_seeds`].
pub fn generate_seeds_seq(
    interior: &MaskVolume,
    lung: &MaskVolume,
    cfg: &SeedingConfig,
) -> Result<SeedSet, SeedingError> {
    generate_seeds_mode(interior, lung, cfg, false)
}

pub(crate) fn generate_seeds_mode(
    interior: &MaskVolume,
    lung: &MaskVolume,
    cfg: &SeedingConfig,
    parallel: bool,
) -> Result<SeedSet, SeedingError> {
    interior.meta().ensure_matches(lung.meta())?;
    debug_assert!(interior.is_subset_of(lung), "interior must lie inside the lung");
    let (regions, iterations) = find_seed_regions_mode(interior, cfg, 5, parallel)?;
    let five: [Vec<usize>; 5] = regions.try_into().expect("exactly five regions");
    let identified = identify_lobes(five, lung)?;
    Ok(SeedSet {
        meta: *lung.meta(),
        regions: identified,
        erosion_iterations: iterations,
    })
}

/// Assigns lobe identities to five seed regions.
///
/// The lung splits into left and right as its two largest face-connected
/// components, the one with the larger x centroid being the patient's left.
/// Each region goes to the side holding the majority of its voxels; the left
/// side must receive exactly two regions and the right three. Within the left
/// lung the higher-z region is LU; on the right, descending z gives RU, RM,
/// RL.
pub fn identify_lobes(
    regions: [Vec<usize>; 5],
    lung: &MaskVolume,
) -> Result<[Vec<usize>; 5], SeedingError> {
    if let Some(i) = regions.iter().position(Vec::is_empty) {
        return Err(SeedingError::LungPartition(format!("seed region {i} is empty")));
    }
    let meta = lung.meta();
    let components = connected_components(lung, Connectivity::Face6);
    if components.count() < 2 {
        return Err(SeedingError::LungPartition(format!(
            "lung mask has {} face-connected component(s), need at least 2",
            components.count()
        )));
    }
    let cx1 = components.centroid(1).map_err(lung_partition)?.0;
    let cx2 = components.centroid(2).map_err(lung_partition)?.0;
    let (left_label, right_label) = if cx1 > cx2 { (1u32, 2u32) } else { (2u32, 1u32) };

    let mut left: Vec<&Vec<usize>> = Vec::new();
    let mut right: Vec<&Vec<usize>> = Vec::new();
    for region in &regions {
        let mut on_left = 0usize;
        let mut on_right = 0usize;
        for &i in region {
            let l = components.labels()[i];
            if l == left_label {
                on_left += 1;
            } else if l == right_label {
                on_right += 1;
            }
        }
        if on_left > on_right {
            left.push(region);
        } else if on_right > on_left {
            right.push(region);
        } else {
            return Err(SeedingError::LungPartition(format!(
                "a seed region straddles the lungs ({on_left} voxels left, {on_right} right)"
            )));
        }
    }
    if left.len() != 2 || right.len() != 3 {
        return Err(SeedingError::LungPartition(format!(
            "expected 2 left / 3 right seed regions, got {} / {}",
            left.len(),
            right.len()
        )));
    }

    // order by z centroid descending; ties fall back to the first voxel index
    let sort_desc = |rs: &mut Vec<&Vec<usize>>| {
        rs.sort_by(|a, b| {
            let za = region_centroid(meta, a).2;
            let zb = region_centroid(meta, b).2;
            zb.partial_cmp(&za)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then_with(|| a[0].cmp(&b[0]))
        });
    };
    sort_desc(&mut left);
    sort_desc(&mut right);

    Ok([
        left[0].clone(),  // LU
        left[1].clone(),  // LL
        right[0].clone(), // RU
        right[1].clone(), // RM
        right[2].clone(), // RL
    ])
}

fn lung_partition(e: VolumeError) -> SeedingError {
    SeedingError::LungPartition(e.to_string())
}

/// Mean voxel coordinates of a region given as flat indices.
pub(crate) fn region_centroid(meta: &GridMeta, region: &[usize]) -> (f64, f64, f64) {
    let mut sum = (0.0, 0.0, 0.0);
    for &i in region {
        let (x, y, z) = meta.coords(i);
        sum.0 += x as f64;
        sum.1 += y as f64;
        sum.2 += z as f64;
    }
    let n = region.len().max(1) as f64;
    (sum.0 / n, sum.1 / n, sum.2 / n)
}
