//! Unrolled white-box transformer for multi-coil k-space interpolation.
//!
//! The crate is organized bottom-up:
//!
//! * [`ctensor`] complex arrays, centered FFT, Hermitian Cholesky kernels
//! * [`data`] synthetic phantoms, coil maps, Cartesian masks, the CKS file format
//! * [`oracle`] exact structured-low-rank penalty, its gradient, and the
//!   softmax-approximation gap
//! * [`spirit`] SPIRiT kernel calibration and the local-predictability gradient
//! * [`attention`] window partitions, relative position bias, SSA and MSSA
//! * [`unroll`] the cascaded stage update and checkpoints
//! * [`training`] reverse-mode gradients, ADAM, and the training loop
//! * [`metrics`] RSS combination, NMSE, PSNR, SSIM, PGM export
//! * [`verify`] the named numerical self-check suite

pub mod attention;
pub mod ctensor;
pub mod data;
pub mod error;
pub mod metrics;
pub mod oracle;
pub mod par;
pub mod rng;
pub mod spirit;
pub mod training;
pub mod unroll;
pub mod verify;

pub use error::{Error, Result};
