//! CKS binary array format.
//!
//! ```text
//! bytes 0..4   magic "CKSP"
//! u32 LE       version = 1
//! u32 LE       ndim
//! ndim x u64 LE  dimensions
//! payload      row-major complex values, each (re, im) as f64 LE
//! ```

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::ctensor::{CArray, C64};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"CKSP";
pub const VERSION: u32 = 1;
const MAX_NDIM: usize = 16;

pub fn encode(x: &CArray) -> Vec<u8> {
    let mut out = Vec::with_capacity(12 + 8 * x.shape().len() + 16 * x.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(x.shape().len() as u32).to_le_bytes());
    for &d in x.shape() {
        out.extend_from_slice(&(d as u64).to_le_bytes());
    }
    for z in x.data() {
        out.extend_from_slice(&z.re.to_le_bytes());
        out.extend_from_slice(&z.im.to_le_bytes());
    }
    out
}

fn take<'a>(buf: &mut &'a [u8], n: usize, what: &str) -> Result<&'a [u8]> {
    if buf.len() < n {
        return Err(Error::Format(format!("file ends inside {what}")));
    }
    let (head, tail) = buf.split_at(n);
    *buf = tail;
    Ok(head)
}

pub fn decode(bytes: &[u8]) -> Result<CArray> {
    let mut buf = bytes;
    if take(&mut buf, 4, "magic")? != MAGIC {
        return Err(Error::Format("bad magic, expected CKSP".into()));
    }
    let version = u32::from_le_bytes(take(&mut buf, 4, "version")?.try_into().unwrap());
    if version != VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let ndim = u32::from_le_bytes(take(&mut buf, 4, "ndim")?.try_into().unwrap()) as usize;
    if ndim > MAX_NDIM {
        return Err(Error::Format(format!("ndim {ndim} exceeds {MAX_NDIM}")));
    }
    let mut shape = Vec::with_capacity(ndim);
    let mut count: u64 = 1;
    for _ in 0..ndim {
        let d = u64::from_le_bytes(take(&mut buf, 8, "dimensions")?.try_into().unwrap());
        count = count
            .checked_mul(d)
            .ok_or_else(|| Error::Format("dimension product overflows".into()))?;
        shape.push(usize::try_from(d).map_err(|_| Error::Format("dimension overflows usize".into()))?);
    }
    let expected = count
        .checked_mul(16)
        .ok_or_else(|| Error::Format("payload size overflows".into()))?;
    if buf.len() as u64 != expected {
        return Err(Error::Truncated {
            expected,
            found: buf.len() as u64,
        });
    }
    let data = buf
        .chunks_exact(16)
        .map(|c| {
            C64::new(
                f64::from_le_bytes(c[..8].try_into().unwrap()),
                f64::from_le_bytes(c[8..].try_into().unwrap()),
            )
        })
        .collect();
    CArray::from_vec(&shape, data)
}

pub fn write_array(path: impl AsRef<Path>, x: &CArray) -> Result<()> {
    let mut f = fs::File::create(path)?;
    f.write_all(&encode(x))?;
    Ok(())
}

pub fn read_array(path: impl AsRef<Path>) -> Result<CArray> {
    decode(&fs::read(path)?)
}
