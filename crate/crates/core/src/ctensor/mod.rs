//! Complex dense arrays and the small numerical kernels built on them.

mod array;
mod fft;
mod linalg;

pub use array::{CArray, CMatrix, RMatrix, C64};
pub use fft::{fft2_centered, ifft2_centered};
pub use linalg::{
    cholesky, cholesky_logdet, hermitian_eigvals, hermitian_solve, softmax_cols, HermitianMatrix,
};

pub(crate) use array::re_dot;
pub(crate) use linalg::softmax_cols_in_place;
