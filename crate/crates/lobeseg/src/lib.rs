//! Five-lobe lung segmentation from a lobar-boundary probability volume.
//!
//! The pipeline takes a per-voxel probability that a voxel lies on a boundary
//! between lobes (typically produced by a slice-wise neural network) together
//! with a lung mask, and produces a five-lobe label volume:
//!
//! 1. [`seeding`] thresholds the boundary probability, inverts it inside the
//!    lung, and iteratively erodes until exactly five sufficiently large
//!    connected regions remain; centroids identify which region is which lobe.
//! 2. [`rw`] builds a 6-connected graph over the lung voxels with Gaussian
//!    edge affinities on probability differences and solves one Dirichlet
//!    problem per lobe (the fifth by complement), labeling each voxel by the
//!    argmax pseudo-probability.
//! 3. [`metrics`] scores a labeling against ground truth with per-lobe
//!    Jaccard, a pixel-weighted overall Jaccard, and symmetric average
//!    surface distance.
//!
//! [`phantom`] generates synthetic cases (probability volume, lung mask,
//! ground truth) with controllable fissure gaps and noise so everything above
//! can be exercised end to end; [`io`] reads and writes the volumes bit
//! exactly and emits CSV reports.
//!
//! The `parallel` feature (on by default) runs the data-parallel inner loops
//! on rayon. Disabling it falls back to sequential loops with bit-identical
//! results; `*_seq` variants of the hot entry points are exported for the
//! comparison benches.

pub mod io;
pub mod metrics;
mod par;
pub mod phantom;
pub mod rw;
pub mod seeding;
pub mod volume;

pub use metrics::LobeScores;
pub use phantom::{PhantomCase, PhantomConfig};
pub use rw::{RwConfig, SegmentationResult};
pub use seeding::{LobeId, SeedSet, SeedingConfig};
pub use volume::{GridMeta, LabelVolume, MaskVolume, ScalarVolume};
