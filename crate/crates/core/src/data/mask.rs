use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use rand::seq::index::sample;

use super::kspace::KSpace;
use crate::ctensor::{CArray, C64};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MaskPattern {
    Random,
    Uniform,
}

impl fmt::Display for MaskPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MaskPattern::Random => "random",
            MaskPattern::Uniform => "uniform",
        })
    }
}

impl FromStr for MaskPattern {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random" => Ok(MaskPattern::Random),
            "uniform" => Ok(MaskPattern::Uniform),
            _ => Err(Error::InvalidArgument(format!("unknown mask pattern '{s}'"))),
        }
    }
}

/// Cartesian phase-encode line mask: a column is either sampled on every row
/// and coil or not at all.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SampleMask {
    pub n1: usize,
    pub n2: usize,
    sampled: Vec<bool>,
    acs: Range<usize>,
}

impl SampleMask {
    pub fn new(n1: usize, n2: usize, sampled: Vec<bool>, acs: Range<usize>) -> Result<Self> {
        if sampled.len() != n2 {
            return Err(Error::shape(&[n2], &[sampled.len()]));
        }
        if acs.end > n2 || acs.start > acs.end {
            return Err(Error::InvalidArgument(format!("ACS range {acs:?} outside {n2} columns")));
        }
        if acs.clone().any(|c| !sampled[c]) {
            return Err(Error::InvalidArgument("ACS columns must be sampled".into()));
        }
        Ok(SampleMask { n1, n2, sampled, acs })
    }

    pub fn full(n1: usize, n2: usize) -> Self {
        SampleMask {
            n1,
            n2,
            sampled: vec![true; n2],
            acs: 0..n2,
        }
    }

    pub fn is_sampled(&self, col: usize) -> bool {
        self.sampled[col]
    }

    pub fn column_flags(&self) -> &[bool] {
        &self.sampled
    }

    pub fn sampled_cols(&self) -> Vec<usize> {
        (0..self.n2).filter(|&c| self.sampled[c]).collect()
    }

    pub fn sampled_count(&self) -> usize {
        self.sampled.iter().filter(|&&s| s).count()
    }

    pub fn acs_cols(&self) -> Range<usize> {
        self.acs.clone()
    }

    /// Effective acceleration `n2 / sampled`.
    pub fn acceleration(&self) -> f64 {
        self.n2 as f64 / self.sampled_count() as f64
    }

    /// `[n1, n2]` array: real part 1 on sampled columns, imaginary part 1 on
    /// ACS columns.
    pub fn to_array(&self) -> CArray {
        let mut a = CArray::zeros(&[self.n1, self.n2]);
        let d = a.data_mut();
        for r in 0..self.n1 {
            for c in 0..self.n2 {
                let re = if self.sampled[c] { 1.0 } else { 0.0 };
                let im = if self.acs.contains(&c) { 1.0 } else { 0.0 };
                d[r * self.n2 + c] = C64::new(re, im);
            }
        }
        a
    }

    /// Inverse of [`SampleMask::to_array`]. When no imaginary ACS flags are
    /// present the ACS block is taken as the run of sampled columns around
    /// the center column.
    pub fn from_array(a: &CArray) -> Result<Self> {
        let [n1, n2] = *a.shape() else {
            return Err(Error::Format(format!("mask must be rank 2, got {:?}", a.shape())));
        };
        if n1 == 0 || n2 == 0 {
            return Err(Error::Format("empty mask".into()));
        }
        let d = a.data();
        let mut sampled = vec![false; n2];
        let mut flagged = vec![false; n2];
        for c in 0..n2 {
            let z = d[c];
            if z.re != 0.0 && z.re != 1.0 {
                return Err(Error::Format(format!("mask value {} is not 0/1", z.re)));
            }
            sampled[c] = z.re == 1.0;
            flagged[c] = z.im != 0.0;
            for r in 1..n1 {
                if d[r * n2 + c] != z {
                    return Err(Error::Format(format!("mask column {c} is not constant over rows")));
                }
            }
        }
        let acs = if flagged.iter().any(|&f| f) {
            let start = flagged.iter().position(|&f| f).unwrap();
            let end = n2 - flagged.iter().rev().position(|&f| f).unwrap();
            if flagged[start..end].iter().any(|&f| !f) {
                return Err(Error::Format("ACS flags are not contiguous".into()));
            }
            start..end
        } else {
            let mid = n2 / 2;
            if !sampled[mid] {
                mid..mid
            } else {
                let mut start = mid;
                while start > 0 && sampled[start - 1] {
                    start -= 1;
                }
                let mut end = mid + 1;
                while end < n2 && sampled[end] {
                    end += 1;
                }
                start..end
            }
        };
        SampleMask::new(n1, n2, sampled, acs)
    }
}

/// Centered ACS block plus `round(n2/af) - acs` further columns, random or
/// equispaced.
pub fn make_mask(
    pattern: MaskPattern,
    af: f64,
    acs: usize,
    n1: usize,
    n2: usize,
    seed: u64,
) -> Result<SampleMask> {
    if !(af >= 1.0) || !af.is_finite() {
        return Err(Error::InvalidArgument(format!("acceleration must be >= 1, got {af}")));
    }
    if acs > n2 {
        return Err(Error::InvalidArgument(format!("ACS {acs} exceeds {n2} columns")));
    }
    let total = ((n2 as f64 / af).round() as usize).min(n2);
    if total < acs {
        return Err(Error::InfeasibleMask { sampled: total, acs });
    }
    let start = n2 / 2 - acs / 2;
    let acs_range = start..start + acs;
    let mut sampled = vec![false; n2];
    for c in acs_range.clone() {
        sampled[c] = true;
    }
    let outside: Vec<usize> = (0..n2).filter(|c| !acs_range.contains(c)).collect();
    let extra = total - acs;
    match pattern {
        MaskPattern::Random => {
            let mut rng = crate::rng::stream(seed, "mask");
            for i in sample(&mut rng, outside.len(), extra) {
                sampled[outside[i]] = true;
            }
        }
        MaskPattern::Uniform => {
            let step = outside.len() as f64 / extra.max(1) as f64;
            for i in 0..extra {
                let idx = (((i as f64) + 0.5) * step).floor() as usize;
                sampled[outside[idx.min(outside.len() - 1)]] = true;
            }
        }
    }
    SampleMask::new(n1, n2, sampled, acs_range)
}

/// Zeroes unsampled columns.
pub fn undersample(k: &KSpace, mask: &SampleMask) -> Result<KSpace> {
    let (n1, n2, nc) = k.dims();
    if (mask.n1, mask.n2) != (n1, n2) {
        return Err(Error::shape(&[n1, n2], &[mask.n1, mask.n2]));
    }
    let mut out = k.clone();
    let d = out.data_mut();
    for r in 0..n1 {
        for c in 0..n2 {
            if !mask.sampled[c] {
                d[(r * n2 + c) * nc..(r * n2 + c + 1) * nc].fill(C64::new(0.0, 0.0));
            }
        }
    }
    Ok(out)
}
