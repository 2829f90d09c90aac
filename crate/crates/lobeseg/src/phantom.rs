//! Synthetic lung phantoms: a boundary-probability volume, a lung mask, and
//! ground-truth lobe labels, so the seeding and walker stages can be exercised
//! and scored end to end without a trained network.
//!
//! Two disjoint ellipsoidal "lungs" sit in the left and right halves of the
//! grid (patient left is the larger-x half). One tilted, sinusoidally
//! perturbed surface splits the left lung into upper and lower lobes; two such
//! surfaces split the right lung into three. The boundary probability is a
//! Gaussian ridge over the distance to the discretized inter-lobe surface,
//! with optional coherent gaps (disc-shaped patches removed from the surface)
//! and additive Gaussian noise.
//!
//! Reproducibility: all randomness comes from a ChaCha8 stream keyed by
//! `rng_seed` via `seed_from_u64`, with Gaussian noise drawn through the
//! ziggurat sampler, so a config generates the same phantom on every platform.

use crate::par;
use crate::volume::{distance_transform_mode, GridMeta, LabelVolume, MaskVolume, ScalarVolume};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PhantomError {
    #[error("phantom needs dims of at least {min} per axis, got {nx}x{ny}x{nz}")]
    DimsTooSmall {
        nx: usize,
        ny: usize,
        nz: usize,
        min: usize,
    },
    #[error("invalid phantom config: {0}")]
    InvalidConfig(String),
}

pub const MIN_DIM: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhantomConfig {
    pub dims: (usize, usize, usize),
    /// Voxel spacing in millimeters.
    pub spacing: (f64, f64, f64),
    /// Gaussian ridge half-width of the boundary probability, in millimeters.
    pub ridge_sigma: f64,
    /// Fraction of each fissure surface removed as coherent disc patches.
    pub gap_frac: f64,
    /// Additive Gaussian noise standard deviation on the probabilities.
    pub noise_sigma: f64,
    pub rng_seed: u64,
}

impl Default for PhantomConfig {
    fn default() -> Self {
        Self {
            dims: (64, 64, 64),
            spacing: (1.0, 1.0, 1.0),
            ridge_sigma: 1.5,
            gap_frac: 0.0,
            noise_sigma: 0.0,
            rng_seed: 42,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhantomCase {
    pub prob: ScalarVolume,
    pub lung: MaskVolume,
    pub gt: LabelVolume,
    /// Discrete surface elements (label-boundary face midpoints) before gaps.
    pub fissure_voxel_count: usize,
    /// Surface elements removed by the gap patches.
    pub zeroed_voxel_count: usize,
}

// Geometry constants, as fractions of the physical grid extent. The lung
// centers and x semi-axis leave a 2+ voxel gap between the lungs at any
// supported grid size, so the lung mask always has two components.
const LUNG_CENTER_X_FRAC: [f64; 2] = [0.26, 0.74]; // right, left
const SEMI_AXIS_FRAC: (f64, f64, f64) = (0.22, 0.43, 0.46);
/// Fissure base heights: left oblique, right oblique (lower), right horizontal-ish (upper).
const FISSURE_Z_FRAC: [f64; 3] = [0.03, -0.16, 0.16];
const FISSURE_PHASE: [f64; 3] = [0.3, 1.1, 2.3];
const TILT: f64 = 0.2;
const AMP_FRAC: f64 = 0.07; // of the z extent
const CROSS_AMP: f64 = 0.6; // x-direction ripple relative to the y one
const WAVES: f64 = 3.0; // sinusoid cycles across each lateral extent
/// Radius of the disc patches removed from the fissure surface, in millimeters.
const GAP_PATCH_RADIUS_MM: f64 = 7.0;

struct Geometry {
    extent: (f64, f64, f64),
}

impl Geometry {
    fn new(meta: &GridMeta) -> Self {
        let (nx, ny, nz) = meta.dims();
        let (sx, sy, sz) = meta.spacing();
        Self {
            extent: (nx as f64 * sx, ny as f64 * sy, nz as f64 * sz),
        }
    }

    /// 0 = patient right (low x), 1 = patient left (high x); None outside.
    fn lung_side(&self, p: (f64, f64, f64)) -> Option<usize> {
        let (lx, ly, lz) = self.extent;
        let (ax, ay, az) = (
            SEMI_AXIS_FRAC.0 * lx,
            SEMI_AXIS_FRAC.1 * ly,
            SEMI_AXIS_FRAC.2 * lz,
        );
        for (side, &cxf) in LUNG_CENTER_X_FRAC.iter().enumerate() {
            let d = ((p.0 - cxf * lx) / ax).powi(2)
                + ((p.1 - 0.5 * ly) / ay).powi(2)
                + ((p.2 - 0.5 * lz) / az).powi(2);
            if d <= 1.0 {
                return Some(side);
            }
        }
        None
    }

    /// Height of splitting surface `f` above the grid floor at `(x, y)` mm.
    fn surface_z(&self, f: usize, x: f64, y: f64) -> f64 {
        let (lx, ly, lz) = self.extent;
        let amp = AMP_FRAC * lz;
        let phase = FISSURE_PHASE[f];
        0.5 * lz
            + FISSURE_Z_FRAC[f] * lz
            + TILT * (y - 0.5 * ly)
            + amp * (std::f64::consts::TAU * WAVES * y / ly + phase).sin()
            + amp * CROSS_AMP * (std::f64::consts::TAU * WAVES * x / lx + 1.7 * phase).sin()
    }

    fn label(&self, p: (f64, f64, f64)) -> u8 {
        match self.lung_side(p) {
            None => 0,
            Some(1) => {
                // left lung: upper lobe above the oblique fissure
                if p.2 > self.surface_z(0, p.0, p.1) {
                    1
                } else {
                    2
                }
            }
            Some(_) => {
                if p.2 > self.surface_z(2, p.0, p.1) {
                    3
                } else if p.2 > self.surface_z(1, p.0, p.1) {
                    4
                } else {
                    5
                }
            }
        }
    }
}

/// Generates a phantom case; a pure function of the config.
pub fn generate(cfg: &PhantomConfig) -> Result<PhantomCase, PhantomError> {
    generate_mode(cfg, par::default_parallel())
}

/// Sequential reference implementation of [`generate`]; bit-identical output.
pub fn generate_seq(cfg: &PhantomConfig) -> Result<PhantomCase, PhantomError> {
    generate_mode(cfg, false)
}

pub(crate) fn generate_mode(
    cfg: &PhantomConfig,
    parallel: bool,
) -> Result<PhantomCase, PhantomError> {
    let (nx, ny, nz) = cfg.dims;
    if nx < MIN_DIM || ny < MIN_DIM || nz < MIN_DIM {
        return Err(PhantomError::DimsTooSmall {
            nx,
            ny,
            nz,
            min: MIN_DIM,
        });
    }
    if !(0.0..=1.0).contains(&cfg.gap_frac) {
        return Err(PhantomError::InvalidConfig(format!(
            "gap_frac must be in [0, 1], got {}",
            cfg.gap_frac
        )));
    }
    if !(cfg.noise_sigma.is_finite() && cfg.noise_sigma >= 0.0) {
        return Err(PhantomError::InvalidConfig(format!(
            "noise_sigma must be nonnegative, got {}",
            cfg.noise_sigma
        )));
    }
    if !(cfg.ridge_sigma.is_finite() && cfg.ridge_sigma > 0.0) {
        return Err(PhantomError::InvalidConfig(format!(
            "ridge_sigma must be positive, got {}",
            cfg.ridge_sigma
        )));
    }
    let meta = GridMeta::new(cfg.dims, cfg.spacing)
        .map_err(|e| PhantomError::InvalidConfig(e.to_string()))?;
    let geo = Geometry::new(&meta);
    let (sx, sy, sz) = meta.spacing();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);

    // ground truth and lung mask
    let mut labels = vec![0u8; meta.len()];
    par::for_each_chunk_mut(&mut labels, nx * ny, parallel, |z, plane| {
        for y in 0..ny {
            for x in 0..nx {
                plane[x + nx * y] = geo.label(meta.position_mm(x, y, z));
            }
        }
    });
    let lung_data: Vec<bool> = labels.iter().map(|&l| l > 0).collect();
    let gt = LabelVolume::from_data(meta, labels).expect("length matches");
    let lung = MaskVolume::from_data(meta, lung_data).expect("length matches");

    // the discrete fissure surface: midpoints of faces between differing
    // in-lung labels, held on a half-stepped (doubled) grid
    let mut points: Vec<([usize; 3], usize)> = Vec::new();
    let push_pair = |points: &mut Vec<([usize; 3], usize)>,
                     a: u8,
                     b: u8,
                     xa: usize,
                     ya: usize,
                     za: usize,
                     axis: usize| {
        if a == 0 || b == 0 || a == b {
            return;
        }
        let fissure = match a.min(b) {
            1 => 0,
            3 => 2,
            _ => 1,
        };
        let mut p = [2 * xa, 2 * ya, 2 * za];
        p[axis] += 1;
        points.push((p, fissure));
    };
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                let here = gt.get(x, y, z);
                if x + 1 < nx {
                    push_pair(&mut points, here, gt.get(x + 1, y, z), x, y, z, 0);
                }
                if y + 1 < ny {
                    push_pair(&mut points, here, gt.get(x, y + 1, z), x, y, z, 1);
                }
                if z + 1 < nz {
                    push_pair(&mut points, here, gt.get(x, y, z + 1), x, y, z, 2);
                }
            }
        }
    }
    let fissure_voxel_count = points.len();

    // carve coherent gaps: per fissure, remove disc patches until the target
    // fraction of its surface elements is gone
    let mut keep = vec![true; points.len()];
    let mut zeroed_voxel_count = 0usize;
    if cfg.gap_frac > 0.0 {
        let half = (sx / 2.0, sy / 2.0, sz / 2.0);
        let pos_mm = |p: &[usize; 3]| {
            (
                p[0] as f64 * half.0,
                p[1] as f64 * half.1,
                p[2] as f64 * half.2,
            )
        };
        let r2 = GAP_PATCH_RADIUS_MM * GAP_PATCH_RADIUS_MM;
        for fissure in 0..3 {
            let members: Vec<usize> = (0..points.len())
                .filter(|&i| points[i].1 == fissure)
                .collect();
            let target = (cfg.gap_frac * members.len() as f64).round() as usize;
            let mut alive = members;
            let mut removed = 0usize;
            while removed < target && !alive.is_empty() {
                let pick = alive[rng.random_range(0..alive.len())];
                let c = pos_mm(&points[pick].0);
                let mut patch: Vec<(f64, usize)> = alive
                    .iter()
                    .filter_map(|&i| {
                        let p = pos_mm(&points[i].0);
                        let d2 = (p.0 - c.0).powi(2)
                            + (p.1 - c.1).powi(2)
                            + (p.2 - c.2).powi(2);
                        (d2 <= r2).then_some((d2, i))
                    })
                    .collect();
                // trim the last patch to the target so the removed fraction
                // tracks gap_frac instead of overshooting by a patch
                let need = target - removed;
                if patch.len() > need {
                    patch.sort_by(|a, b| {
                        a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1))
                    });
                    patch.truncate(need);
                }
                for &(_, i) in &patch {
                    keep[i] = false;
                }
                removed += patch.len();
                alive.retain(|&i| keep[i]);
            }
            zeroed_voxel_count += removed;
        }
    }

    // exact distance to the surviving surface, sampled back on voxel centers
    let doubled_meta = GridMeta::new(
        (2 * nx, 2 * ny, 2 * nz),
        (sx / 2.0, sy / 2.0, sz / 2.0),
    )
    .map_err(|e| PhantomError::InvalidConfig(e.to_string()))?;
    let mut surface = MaskVolume::new(doubled_meta, false);
    let mut any_surface = false;
    for (i, (p, _)) in points.iter().enumerate() {
        if keep[i] {
            surface.data_mut()[doubled_meta.index(p[0], p[1], p[2])] = true;
            any_surface = true;
        }
    }
    let mut prob = vec![0.0f64; meta.len()];
    if any_surface {
        let dt = distance_transform_mode(&surface, parallel).expect("surface is nonempty");
        let denom = 2.0 * cfg.ridge_sigma * cfg.ridge_sigma;
        par::for_each_chunk_mut(&mut prob, nx * ny, parallel, |z, plane| {
            for y in 0..ny {
                for x in 0..nx {
                    let d = dt.get(2 * x, 2 * y, 2 * z);
                    plane[x + nx * y] = (-d * d / denom).exp();
                }
            }
        });
    }

    if cfg.noise_sigma > 0.0 {
        let normal = Normal::new(0.0, cfg.noise_sigma)
            .map_err(|e| PhantomError::InvalidConfig(e.to_string()))?;
        for v in &mut prob {
            *v = (*v + normal.sample(&mut rng)).clamp(0.0, 1.0);
        }
    }

    Ok(PhantomCase {
        prob: ScalarVolume::from_data(meta, prob).expect("length matches"),
        lung,
        gt,
        fissure_voxel_count,
        zeroed_voxel_count,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::Connectivity;

    #[test]
    fn default_phantom_is_deterministic() {
        let cfg = PhantomConfig {
            dims: (32, 32, 32),
            noise_sigma: 0.02,
            gap_frac: 0.2,
            ..PhantomConfig::default()
        };
        let a = generate(&cfg).unwrap();
        let b = generate(&cfg).unwrap();
        assert_eq!(a, b);
        let c = generate_seq(&cfg).unwrap();
        assert_eq!(a, c, "parallel and sequential runs must agree bitwise");
    }

    #[test]
    fn small_dims_are_rejected() {
        let cfg = PhantomConfig {
            dims: (8, 8, 8),
            ..PhantomConfig::default()
        };
        assert!(matches!(
            generate(&cfg),
            Err(PhantomError::DimsTooSmall { .. })
        ));
    }

    #[test]
    fn bad_config_is_rejected() {
        let bad_gap = PhantomConfig {
            gap_frac: 1.5,
            ..PhantomConfig::default()
        };
        assert!(matches!(
            generate(&bad_gap),
            Err(PhantomError::InvalidConfig(_))
        ));
        let bad_sigma = PhantomConfig {
            ridge_sigma: 0.0,
            ..PhantomConfig::default()
        };
        assert!(matches!(
            generate(&bad_sigma),
            Err(PhantomError::InvalidConfig(_))
        ));
    }

    #[test]
    fn labels_partition_the_lung() {
        let cfg = PhantomConfig {
            dims: (48, 48, 48),
            ..PhantomConfig::default()
        };
        let case = generate(&cfg).unwrap();
        let mut counts = [0usize; 6];
        for (i, &l) in case.gt.data().iter().enumerate() {
            assert_eq!(l > 0, case.lung.data()[i], "labels exactly on lung voxels");
            counts[l as usize] += 1;
        }
        for k in 1..=5 {
            assert!(counts[k] > 0, "lobe {k} must be nonempty");
        }
        // patient left (larger x) carries labels 1 and 2
        let meta = case.gt.meta();
        let (nx, _, _) = meta.dims();
        for (i, &l) in case.gt.data().iter().enumerate() {
            let (x, _, _) = meta.coords(i);
            if l == 1 || l == 2 {
                assert!(x >= nx / 2);
            } else if l >= 3 {
                assert!(x < nx / 2);
            }
        }
    }

    #[test]
    fn probabilities_are_valid_and_ridge_covers_interfaces() {
        let cfg = PhantomConfig {
            dims: (48, 48, 48),
            ..PhantomConfig::default()
        };
        let case = generate(&cfg).unwrap();
        case.prob.validate_probabilities().unwrap();
        // every face voxel of an inter-lobe interface sits within half a voxel
        // of a surface element, so its probability is bounded below
        let meta = case.gt.meta();
        let (sx, sy, sz) = meta.spacing();
        let min_spacing = sx.min(sy).min(sz);
        let bound = (-0.5 * (0.5 * min_spacing / cfg.ridge_sigma).powi(2)).exp();
        let (nx, ny, nz) = meta.dims();
        let mut interface_voxels = 0usize;
        for z in 0..nz {
            for y in 0..ny {
                for x in 0..nx {
                    let here = case.gt.get(x, y, z);
                    if here == 0 {
                        continue;
                    }
                    let mut is_face = false;
                    for (dx, dy, dz) in Connectivity::Face6.offsets() {
                        let (xx, yy, zz) = (
                            x as i64 + dx as i64,
                            y as i64 + dy as i64,
                            z as i64 + dz as i64,
                        );
                        if xx < 0 || yy < 0 || zz < 0
                            || xx >= nx as i64 || yy >= ny as i64 || zz >= nz as i64
                        {
                            continue;
                        }
                        let there = case.gt.get(xx as usize, yy as usize, zz as usize);
                        if there != 0 && there != here {
                            is_face = true;
                        }
                    }
                    if is_face {
                        interface_voxels += 1;
                        let p = case.prob.get(x, y, z);
                        assert!(
                            p >= bound - 1e-12,
                            "face voxel ({x},{y},{z}) has prob {p} < bound {bound}"
                        );
                    }
                }
            }
        }
        assert!(interface_voxels > 500, "phantom should have real fissures");
    }

    #[test]
    fn gap_half_removes_about_half_the_surface() {
        let cfg = PhantomConfig {
            dims: (48, 48, 48),
            gap_frac: 0.5,
            ..PhantomConfig::default()
        };
        let case = generate(&cfg).unwrap();
        let ratio = case.zeroed_voxel_count as f64 / case.fissure_voxel_count as f64;
        assert!(
            (0.40..=0.60).contains(&ratio),
            "zeroed ratio {ratio} out of band"
        );
    }

    #[test]
    fn interfaces_stay_near_the_analytic_surfaces() {
        let cfg = PhantomConfig {
            dims: (48, 48, 48),
            ..PhantomConfig::default()
        };
        let case = generate(&cfg).unwrap();
        let meta = case.gt.meta();
        let geo = Geometry::new(meta);
        let (sx, sy, sz) = meta.spacing();
        let max_spacing = sx.max(sy).max(sz);
        let (nx, ny, nz) = meta.dims();
        let offsets = Connectivity::Vertex26.offsets();
        for z in 0..nz {
            for y in 0..ny {
                for x in 0..nx {
                    let here = case.gt.get(x, y, z);
                    if here == 0 {
                        continue;
                    }
                    let near_other = offsets.iter().any(|&(dx, dy, dz)| {
                        let (xx, yy, zz) = (
                            x as i64 + dx as i64,
                            y as i64 + dy as i64,
                            z as i64 + dz as i64,
                        );
                        if xx < 0 || yy < 0 || zz < 0
                            || xx >= nx as i64 || yy >= ny as i64 || zz >= nz as i64
                        {
                            return false;
                        }
                        let l = case.gt.get(xx as usize, yy as usize, zz as usize);
                        l != 0 && l != here
                    });
                    if !near_other {
                        continue;
                    }
                    // upper-bound the distance to each analytic surface by
                    // sampling surface points on a patch around the voxel
                    let p = meta.position_mm(x, y, z);
                    let mut best = f64::INFINITY;
                    for f in 0..3 {
                        for iy in -12i32..=12 {
                            for ix in -12i32..=12 {
                                let qx = p.0 + ix as f64 * sx * 0.25;
                                let qy = p.1 + iy as f64 * sy * 0.25;
                                let qz = geo.surface_z(f, qx, qy);
                                let d = ((p.0 - qx).powi(2)
                                    + (p.1 - qy).powi(2)
                                    + (p.2 - qz).powi(2))
                                .sqrt();
                                best = best.min(d);
                            }
                        }
                    }
                    assert!(
                        best <= 3.0f64.sqrt() * max_spacing + 1e-9,
                        "interface voxel ({x},{y},{z}) is {best} mm from every surface"
                    );
                }
            }
        }
    }
}
