//! Synthetic multi-coil data: phantoms, coil maps, k-space simulation,
//! Cartesian masks, and the CKS array file format.

pub mod cks;
mod coils;
mod dataset;
mod kspace;
mod mask;
mod phantom;

pub use cks::{read_array, write_array};
pub use coils::{gen_coil_sens, simulate_kspace, CoilSensitivities};
pub use dataset::{parse_manifest, DataConfig, Dataset, Record, Split};
pub use kspace::KSpace;
pub use mask::{make_mask, undersample, MaskPattern, SampleMask};
pub use phantom::{gen_phantom, pixel_coord, Ellipse, PhantomSpec, RealImage};
