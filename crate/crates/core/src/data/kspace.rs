use crate::ctensor::{CArray, C64};
use crate::error::{Error, Result};

/// Multi-coil k-space, shape `[n1, n2, nc]` with the coil index fastest.
#[derive(Clone, Debug, PartialEq)]
pub struct KSpace {
    values: CArray,
}

impl KSpace {
    pub fn new(values: CArray) -> Result<Self> {
        match *values.shape() {
            [_, _, nc] if nc >= 1 => Ok(KSpace { values }),
            _ => Err(Error::InvalidArgument(format!(
                "k-space must have shape [n1, n2, nc>=1], got {:?}",
                values.shape()
            ))),
        }
    }

    pub fn zeros(n1: usize, n2: usize, nc: usize) -> Self {
        KSpace {
            values: CArray::zeros(&[n1, n2, nc]),
        }
    }

    pub fn from_vec(n1: usize, n2: usize, nc: usize, data: Vec<C64>) -> Result<Self> {
        Self::new(CArray::from_vec(&[n1, n2, nc], data)?)
    }

    pub fn n1(&self) -> usize {
        self.values.shape()[0]
    }

    pub fn n2(&self) -> usize {
        self.values.shape()[1]
    }

    pub fn nc(&self) -> usize {
        self.values.shape()[2]
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.n1(), self.n2(), self.nc())
    }

    pub fn values(&self) -> &CArray {
        &self.values
    }

    pub fn into_values(self) -> CArray {
        self.values
    }

    pub fn data(&self) -> &[C64] {
        self.values.data()
    }

    pub fn data_mut(&mut self) -> &mut [C64] {
        self.values.data_mut()
    }

    #[inline]
    pub fn index(&self, r: usize, c: usize, coil: usize) -> usize {
        (r * self.n2() + c) * self.nc() + coil
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize, coil: usize) -> C64 {
        self.data()[self.index(r, c, coil)]
    }

    pub fn check_same_shape(&self, other: &KSpace) -> Result<()> {
        other.values.check_shape(self.values.shape())
    }

    pub fn scale(&self, s: f64) -> KSpace {
        KSpace {
            values: self.values.scale(s),
        }
    }

    pub fn axpy(&self, alpha: f64, other: &KSpace) -> Result<KSpace> {
        Ok(KSpace {
            values: self.values.axpy(alpha, &other.values)?,
        })
    }

    pub fn sub(&self, other: &KSpace) -> Result<KSpace> {
        self.axpy(-1.0, other)
    }

    pub fn dot(&self, other: &KSpace) -> Result<C64> {
        self.values.dot(&other.values)
    }

    pub fn norm_sqr(&self) -> f64 {
        self.values.norm_sqr()
    }

    pub fn norm(&self) -> f64 {
        self.values.norm()
    }
}
