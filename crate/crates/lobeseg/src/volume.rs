//! Core 3D grid types plus the morphology and distance primitives the rest of
//! the pipeline is built on: erosion, connected components, centroids, an exact
//! Euclidean distance transform, and surface extraction.
//!
//! Volumes are dense flat arrays in x-fastest order
//! (`index = x + nx * (y + ny * z)`) with physical voxel spacing in
//! millimeters. Voxel `(x, y, z)` sits at physical position
//! `(x * sx, y * sy, z * sz)`; distances are always between voxel centers.
//! All types are immutable after construction and safe to share across
//! threads; operations allocate fresh outputs.

use crate::par;
use thiserror::Error;

/// Grid mismatch between two volumes that were expected to share a grid.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("grid mismatch: {left} vs {right}")]
pub struct MetaMismatch {
    pub left: String,
    pub right: String,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum VolumeError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("data length {got} does not match voxel count {want}")]
    LengthMismatch { got: usize, want: usize },
    #[error(transparent)]
    MetaMismatch(#[from] MetaMismatch),
    #[error("no component carries label {0}")]
    UnknownLabel(u32),
    #[error("mask has no true voxel")]
    EmptyMask,
    #[error("label {0} is outside 0..=5")]
    InvalidLabel(u8),
}

/// Voxel counts and physical spacing of a 3D grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridMeta {
    dims: (usize, usize, usize),
    spacing: (f64, f64, f64),
}

impl GridMeta {
    pub fn new(dims: (usize, usize, usize), spacing: (f64, f64, f64)) -> Result<Self, VolumeError> {
        let (nx, ny, nz) = dims;
        if nx == 0 || ny == 0 || nz == 0 {
            return Err(VolumeError::InvalidGrid(format!(
                "all dims must be >= 1, got {nx}x{ny}x{nz}"
            )));
        }
        nx.checked_mul(ny)
            .and_then(|v| v.checked_mul(nz))
            .ok_or_else(|| {
                VolumeError::InvalidGrid(format!("voxel count {nx}x{ny}x{nz} overflows usize"))
            })?;
        for s in [spacing.0, spacing.1, spacing.2] {
            if !(s.is_finite() && s > 0.0) {
                return Err(VolumeError::InvalidGrid(format!(
                    "spacing must be finite and positive, got {s}"
                )));
            }
        }
        Ok(Self { dims, spacing })
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        self.dims
    }

    pub fn spacing(&self) -> (f64, f64, f64) {
        self.spacing
    }

    /// Total voxel count.
    pub fn len(&self) -> usize {
        self.dims.0 * self.dims.1 * self.dims.2
    }

    pub fn is_empty(&self) -> bool {
        false // dims are validated to be >= 1
    }

    /// Flat index of voxel `(x, y, z)`.
    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        debug_assert!(x < self.dims.0 && y < self.dims.1 && z < self.dims.2);
        x + self.dims.0 * (y + self.dims.1 * z)
    }

    /// Voxel coordinates of a flat index.
    #[inline]
    pub fn coords(&self, index: usize) -> (usize, usize, usize) {
        let (nx, ny, _) = self.dims;
        let x = index % nx;
        let y = (index / nx) % ny;
        let z = index / (nx * ny);
        (x, y, z)
    }

    /// Physical position of a voxel center in millimeters.
    #[inline]
    pub fn position_mm(&self, x: usize, y: usize, z: usize) -> (f64, f64, f64) {
        (
            x as f64 * self.spacing.0,
            y as f64 * self.spacing.1,
            z as f64 * self.spacing.2,
        )
    }

    pub fn ensure_matches(&self, other: &GridMeta) -> Result<(), MetaMismatch> {
        if self == other {
            Ok(())
        } else {
            Err(MetaMismatch {
                left: format!("{:?} @ {:?}", self.dims, self.spacing),
                right: format!("{:?} @ {:?}", other.dims, other.spacing),
            })
        }
    }
}

macro_rules! grid_volume {
    ($(#[$doc:meta])* $name:ident, $elem:ty) => {
        $(#[$doc])*
        #[derive(Debug, Clone, PartialEq)]
        pub struct $name {
            meta: GridMeta,
            data: Vec<$elem>,
        }

        impl $name {
            pub fn new(meta: GridMeta, fill: $elem) -> Self {
                let n = meta.len();
                Self { meta, data: vec![fill; n] }
            }

            pub fn from_data(meta: GridMeta, data: Vec<$elem>) -> Result<Self, VolumeError> {
                if data.len() != meta.len() {
                    return Err(VolumeError::LengthMismatch { got: data.len(), want: meta.len() });
                }
                Ok(Self { meta, data })
            }

            pub fn from_fn(meta: GridMeta, f: impl Fn(usize, usize, usize) -> $elem) -> Self {
                let (nx, ny, nz) = meta.dims();
                let mut data = Vec::with_capacity(meta.len());
                for z in 0..nz {
                    for y in 0..ny {
                        for x in 0..nx {
                            data.push(f(x, y, z));
                        }
                    }
                }
                Self { meta, data }
            }

            pub fn meta(&self) -> &GridMeta {
                &self.meta
            }

            pub fn data(&self) -> &[$elem] {
                &self.data
            }

            pub fn into_data(self) -> Vec<$elem> {
                self.data
            }

            pub(crate) fn data_mut(&mut self) -> &mut [$elem] {
                &mut self.data
            }

            #[inline]
            pub fn get(&self, x: usize, y: usize, z: usize) -> $elem {
                self.data[self.meta.index(x, y, z)]
            }
        }
    };
}

grid_volume!(
    /// Dense 3D grid of 64-bit floats; holds boundary probabilities and
    /// distance fields.
    ScalarVolume,
    f64
);
grid_volume!(
    /// Dense 3D boolean grid; holds the lung mask and masks derived from it.
    MaskVolume,
    bool
);
grid_volume!(
    /// Dense 3D grid of lobe labels. 0 is background, 1..=5 are the five lobes.
    LabelVolume,
    u8
);

impl ScalarVolume {
    /// Checks that every value is a finite probability in `[0, 1]`.
    pub fn validate_probabilities(&self) -> Result<(), VolumeError> {
        for (i, &v) in self.data.iter().enumerate() {
            if !(v.is_finite() && (0.0..=1.0).contains(&v)) {
                return Err(VolumeError::InvalidGrid(format!(
                    "probability {v} at flat index {i} is outside [0, 1]"
                )));
            }
        }
        Ok(())
    }
}

impl MaskVolume {
    pub fn count_true(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn any(&self) -> bool {
        self.data.iter().any(|&b| b)
    }

    /// True iff every true voxel of `self` is also true in `other`.
    pub fn is_subset_of(&self, other: &MaskVolume) -> bool {
        self.meta == other.meta
            && self
                .data
                .iter()
                .zip(&other.data)
                .all(|(&a, &b)| !a || b)
    }
}

impl LabelVolume {
    /// Validates that every label is in 0..=5.
    pub fn validate_labels(&self) -> Result<(), VolumeError> {
        match self.data.iter().find(|&&l| l > 5) {
            Some(&l) => Err(VolumeError::InvalidLabel(l)),
            None => Ok(()),
        }
    }
}

/// Neighborhood used by morphology and component labeling.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Connectivity {
    /// The six face neighbors (unit axis steps).
    Face6,
    /// All 26 neighbors of the unit cube.
    Vertex26,
}

impl Connectivity {
    pub fn offsets(&self) -> Vec<(i32, i32, i32)> {
        match self {
            Connectivity::Face6 => vec![
                (-1, 0, 0),
                (1, 0, 0),
                (0, -1, 0),
                (0, 1, 0),
                (0, 0, -1),
                (0, 0, 1),
            ],
            Connectivity::Vertex26 => {
                let mut v = Vec::with_capacity(26);
                for dz in -1..=1 {
                    for dy in -1..=1 {
                        for dx in -1..=1 {
                            if (dx, dy, dz) != (0, 0, 0) {
                                v.push((dx, dy, dz));
                            }
                        }
                    }
                }
                v
            }
        }
    }
}

#[inline]
fn offset_index(
    meta: &GridMeta,
    x: usize,
    y: usize,
    z: usize,
    d: (i32, i32, i32),
) -> Option<usize> {
    let (nx, ny, nz) = meta.dims();
    let xx = x as i64 + d.0 as i64;
    let yy = y as i64 + d.1 as i64;
    let zz = z as i64 + d.2 as i64;
    if xx < 0 || yy < 0 || zz < 0 || xx >= nx as i64 || yy >= ny as i64 || zz >= nz as i64 {
        None
    } else {
        Some(meta.index(xx as usize, yy as usize, zz as usize))
    }
}

/// Morphological erosion: a voxel survives iff it is true and every
/// `conn`-neighbor is true, with out-of-bounds treated as false. Regions that
/// touch the volume edge therefore shrink away from it.
pub fn erode(mask: &MaskVolume, conn: Connectivity) -> MaskVolume {
    erode_mode(mask, conn, par::default_parallel())
}

/// Sequential reference implementation of [`erode`]; used by the benches.
pub fn erode_seq(mask: &MaskVolume, conn: Connectivity) -> MaskVolume {
    erode_mode(mask, conn, false)
}

pub(crate) fn erode_mode(mask: &MaskVolume, conn: Connectivity, parallel: bool) -> MaskVolume {
    let meta = *mask.meta();
    let (nx, ny, _) = meta.dims();
    let offsets = conn.offsets();
    let input = mask.data();
    let mut out = vec![false; meta.len()];
    par::for_each_chunk_mut(&mut out, nx * ny, parallel, |z, plane| {
        for y in 0..ny {
            for x in 0..nx {
                let i = x + nx * y;
                if !input[meta.index(x, y, z)] {
                    continue;
                }
                plane[i] = offsets.iter().all(|&d| {
                    offset_index(&meta, x, y, z, d).is_some_and(|j| input[j])
                });
            }
        }
    });
    MaskVolume { meta, data: out }
}

/// Connected-component labeling of the true voxels.
///
/// Components are numbered `1..=count` in decreasing voxel-count order, ties
/// broken by the smaller first (lowest) flat index. Voxels outside the mask
/// map to 0.
#[derive(Debug, Clone)]
pub struct ComponentMap {
    meta: GridMeta,
    labels: Vec<u32>,
    sizes: Vec<usize>,
}

impl ComponentMap {
    pub fn meta(&self) -> &GridMeta {
        &self.meta
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn count(&self) -> usize {
        self.sizes.len()
    }

    /// Voxel count of component `label` (labels start at 1).
    pub fn size(&self, label: u32) -> Result<usize, VolumeError> {
        self.sizes
            .get((label as usize).wrapping_sub(1))
            .copied()
            .ok_or(VolumeError::UnknownLabel(label))
    }

    /// Flat voxel indices of component `label`, in ascending order.
    pub fn voxels_of(&self, label: u32) -> Vec<usize> {
        self.labels
            .iter()
            .enumerate()
            .filter_map(|(i, &l)| (l == label).then_some(i))
            .collect()
    }

    /// Arithmetic mean of the voxel coordinates carrying `label`.
    pub fn centroid(&self, label: u32) -> Result<(f64, f64, f64), VolumeError> {
        let mut sum = (0.0, 0.0, 0.0);
        let mut n = 0usize;
        for (i, &l) in self.labels.iter().enumerate() {
            if l == label {
                let (x, y, z) = self.meta.coords(i);
                sum.0 += x as f64;
                sum.1 += y as f64;
                sum.2 += z as f64;
                n += 1;
            }
        }
        if n == 0 {
            return Err(VolumeError::UnknownLabel(label));
        }
        let n = n as f64;
        Ok((sum.0 / n, sum.1 / n, sum.2 / n))
    }
}

pub fn connected_components(mask: &MaskVolume, conn: Connectivity) -> ComponentMap {
    let meta = *mask.meta();
    let offsets = conn.offsets();
    let input = mask.data();
    let mut raw = vec![0u32; meta.len()];
    // (size, first flat index) per raw label, in discovery order; discovery
    // order scans ascending flat indices, so the seed voxel is the component
    // minimum.
    let mut found: Vec<(usize, usize)> = Vec::new();
    let mut stack: Vec<usize> = Vec::new();
    for start in 0..meta.len() {
        if !input[start] || raw[start] != 0 {
            continue;
        }
        let label = found.len() as u32 + 1;
        let mut size = 0usize;
        raw[start] = label;
        stack.push(start);
        while let Some(i) = stack.pop() {
            size += 1;
            let (x, y, z) = meta.coords(i);
            for &d in &offsets {
                if let Some(j) = offset_index(&meta, x, y, z, d) {
                    if input[j] && raw[j] == 0 {
                        raw[j] = label;
                        stack.push(j);
                    }
                }
            }
        }
        found.push((size, start));
    }
    // order: size descending, then first voxel ascending
    let mut order: Vec<usize> = (0..found.len()).collect();
    order.sort_by(|&a, &b| {
        found[b]
            .0
            .cmp(&found[a].0)
            .then(found[a].1.cmp(&found[b].1))
    });
    let mut remap = vec![0u32; found.len() + 1];
    for (new_label, &old) in order.iter().enumerate() {
        remap[old + 1] = new_label as u32 + 1;
    }
    let labels: Vec<u32> = raw.iter().map(|&l| remap[l as usize]).collect();
    let sizes: Vec<usize> = order.iter().map(|&o| found[o].0).collect();
    ComponentMap { meta, labels, sizes }
}

/// Exact Euclidean distance transform in millimeters.
///
/// Each voxel receives the distance from its center to the center of the
/// nearest true voxel, honoring anisotropic spacing. Computed with the
/// separable squared-distance lower-envelope algorithm, one pass per axis, so
/// the result is exact rather than a chamfer approximation.
pub fn distance_transform(mask: &MaskVolume) -> Result<ScalarVolume, VolumeError> {
    distance_transform_mode(mask, par::default_parallel())
}

/// Sequential reference implementation of [`distance_transform`].
pub fn distance_transform_seq(mask: &MaskVolume) -> Result<ScalarVolume, VolumeError> {
    distance_transform_mode(mask, false)
}

pub(crate) fn distance_transform_mode(
    mask: &MaskVolume,
    parallel: bool,
) -> Result<ScalarVolume, VolumeError> {
    if !mask.any() {
        return Err(VolumeError::EmptyMask);
    }
    let meta = *mask.meta();
    let (nx, ny, nz) = meta.dims();
    let (sx, sy, sz) = meta.spacing();
    // finite sentinel above any attainable squared distance; keeps the
    // envelope arithmetic NaN-free on all-background lines
    let diag2 = (nx as f64 * sx).powi(2) + (ny as f64 * sy).powi(2) + (nz as f64 * sz).powi(2);
    let big = diag2 + 1.0;

    let mut sq: Vec<f64> = mask
        .data()
        .iter()
        .map(|&m| if m { 0.0 } else { big })
        .collect();

    // x pass: lines are contiguous
    par::for_each_chunk_mut(&mut sq, nx, parallel, |_, line| {
        let f = line.to_vec();
        dt1d(&f, line, sx);
    });

    // y pass
    {
        let lines = par::map_collect(nx * nz, parallel, |li| {
            let (x, z) = (li % nx, li / nx);
            let f: Vec<f64> = (0..ny).map(|y| sq[meta.index(x, y, z)]).collect();
            let mut out = vec![0.0; ny];
            dt1d(&f, &mut out, sy);
            out
        });
        for (li, line) in lines.iter().enumerate() {
            let (x, z) = (li % nx, li / nx);
            for (y, &v) in line.iter().enumerate() {
                sq[meta.index(x, y, z)] = v;
            }
        }
    }

    // z pass
    {
        let lines = par::map_collect(nx * ny, parallel, |li| {
            let (x, y) = (li % nx, li / nx);
            let f: Vec<f64> = (0..nz).map(|z| sq[meta.index(x, y, z)]).collect();
            let mut out = vec![0.0; nz];
            dt1d(&f, &mut out, sz);
            out
        });
        for (li, line) in lines.iter().enumerate() {
            let (x, y) = (li % nx, li / nx);
            for (z, &v) in line.iter().enumerate() {
                sq[meta.index(x, y, z)] = v;
            }
        }
    }

    par::for_each_chunk_mut(&mut sq, nx * ny, parallel, |_, plane| {
        for v in plane {
            *v = v.sqrt();
        }
    });
    Ok(ScalarVolume { meta, data: sq })
}

/// 1D squared-distance transform along a sampled line with grid step `step`:
/// `out[i] = min_j f[j] + ((i - j) * step)^2`.
fn dt1d(f: &[f64], out: &mut [f64], step: f64) {
    let n = f.len();
    debug_assert_eq!(out.len(), n);
    if n == 1 {
        out[0] = f[0];
        return;
    }
    let mut v = vec![0usize; n]; // parabola roots
    let mut z = vec![0.0f64; n + 1]; // envelope boundaries
    let mut k = 0usize;
    v[0] = 0;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    let pos = |i: usize| i as f64 * step;
    for q in 1..n {
        let mut s;
        loop {
            let p = v[k];
            s = ((f[q] + pos(q) * pos(q)) - (f[p] + pos(p) * pos(p)))
                / (2.0 * pos(q) - 2.0 * pos(p));
            if s <= z[k] {
                if k == 0 {
                    // new parabola dominates everywhere seen so far
                    s = f64::NEG_INFINITY;
                    break;
                }
                k -= 1;
            } else {
                break;
            }
        }
        k += 1;
        v[k] = q;
        z[k] = s;
        z[k + 1] = f64::INFINITY;
    }
    k = 0;
    for i in 0..n {
        while z[k + 1] < pos(i) {
            k += 1;
        }
        let d = pos(i) - pos(v[k]);
        out[i] = d * d + f[v[k]];
    }
}

/// True voxels that touch the mask's outside: at least one face neighbor is
/// false or out of bounds. Returned as ascending flat indices.
pub fn surface_voxels(mask: &MaskVolume) -> Vec<usize> {
    let meta = mask.meta();
    let offsets = Connectivity::Face6.offsets();
    let data = mask.data();
    let mut surface = Vec::new();
    for (i, &m) in data.iter().enumerate() {
        if !m {
            continue;
        }
        let (x, y, z) = meta.coords(i);
        let exposed = offsets
            .iter()
            .any(|&d| offset_index(meta, x, y, z, d).is_none_or(|j| !data[j]));
        if exposed {
            surface.push(i);
        }
    }
    surface
}
