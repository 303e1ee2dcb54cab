//! Centered, orthonormal 2D FFT over the two leading axes of an array.
//!
//! Arrays are `[n1, n2]` or `[n1, n2, nc]`; the trailing coil axis is
//! transformed independently. The zero frequency sits at index `n/2` along
//! each axis, and the transform is unitary.

use std::f64::consts::PI;

use super::array::{CArray, C64};
use crate::error::{Error, Result};

#[derive(Clone, Copy, PartialEq, Eq)]
enum Direction {
    Forward,
    Inverse,
}

/// In-place iterative radix-2 transform, unnormalized.
fn fft_in_place(buf: &mut [C64], dir: Direction) {
    let n = buf.len();
    if n <= 1 {
        return;
    }
    debug_assert!(n.is_power_of_two());
    let bits = n.trailing_zeros();
    for i in 0..n {
        let j = i.reverse_bits() >> (usize::BITS - bits);
        if j > i {
            buf.swap(i, j);
        }
    }
    let sign = match dir {
        Direction::Forward => -1.0,
        Direction::Inverse => 1.0,
    };
    let mut len = 2;
    while len <= n {
        let theta = sign * 2.0 * PI / len as f64;
        let half = len / 2;
        let twiddles: Vec<C64> = (0..half)
            .map(|k| C64::from_polar(1.0, theta * k as f64))
            .collect();
        for start in (0..n).step_by(len) {
            for k in 0..half {
                let a = buf[start + k];
                let b = buf[start + k + half] * twiddles[k];
                buf[start + k] = a + b;
                buf[start + k + half] = a - b;
            }
        }
        len <<= 1;
    }
}

/// Centered unitary transform of one line: `shift(fft(shift(x))) / sqrt(n)`.
fn centered_line(line: &mut [C64], scratch: &mut [C64], dir: Direction) {
    let n = line.len();
    let h = n / 2;
    for i in 0..n {
        scratch[i] = line[(i + h) % n];
    }
    fft_in_place(scratch, dir);
    let s = 1.0 / (n as f64).sqrt();
    for i in 0..n {
        line[(i + h) % n] = scratch[i] * s;
    }
}

fn transform(x: &CArray, dir: Direction) -> Result<CArray> {
    let shape = x.shape();
    let (n1, n2, nc) = match *shape {
        [a, b] => (a, b, 1),
        [a, b, c] => (a, b, c),
        _ => {
            return Err(Error::InvalidArgument(format!(
                "2D FFT needs a rank-2 or rank-3 array, got shape {shape:?}"
            )))
        }
    };
    for n in [n1, n2] {
        if !n.is_power_of_two() {
            return Err(Error::UnsupportedSize(n));
        }
    }
    let mut out = x.clone();
    let data = out.data_mut();
    let mut line = vec![C64::new(0.0, 0.0); n1.max(n2)];
    let mut scratch = line.clone();
    for c in 0..nc {
        for r in 0..n1 {
            for j in 0..n2 {
                line[j] = data[(r * n2 + j) * nc + c];
            }
            centered_line(&mut line[..n2], &mut scratch[..n2], dir);
            for j in 0..n2 {
                data[(r * n2 + j) * nc + c] = line[j];
            }
        }
        for j in 0..n2 {
            for r in 0..n1 {
                line[r] = data[(r * n2 + j) * nc + c];
            }
            centered_line(&mut line[..n1], &mut scratch[..n1], dir);
            for r in 0..n1 {
                data[(r * n2 + j) * nc + c] = line[r];
            }
        }
    }
    Ok(out)
}

/// Image to k-space.
pub fn fft2_centered(x: &CArray) -> Result<CArray> {
    transform(x, Direction::Forward)
}

/// K-space to image.
pub fn ifft2_centered(x: &CArray) -> Result<CArray> {
    transform(x, Direction::Inverse)
}
