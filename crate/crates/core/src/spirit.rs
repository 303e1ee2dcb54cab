//! SPIRiT kernel calibration and the local-predictability operator.
//!
//! The kernel `G` predicts every k-space sample from its `kw x kw x nc`
//! neighborhood, excluding the sample itself. It is calibrated once per slice
//! from the fully sampled ACS block and stays fixed afterwards.

use std::fs;
use std::path::{Path, PathBuf};

use crate::ctensor::{hermitian_solve, CArray, CMatrix, HermitianMatrix, C64};
use crate::data::{cks, KSpace, SampleMask};
use crate::error::{Error, Result};
use crate::par;

/// Interpolation weights, shape `[nc_out, nc_in, kw, kw]`.
#[derive(Clone, Debug, PartialEq)]
pub struct SpiritKernel {
    weights: CArray,
    kw: usize,
    nc: usize,
    tikhonov: f64,
}

impl SpiritKernel {
    /// Checks shape, odd width, and that every self-coil center tap is zero.
    pub fn new(weights: CArray, tikhonov: f64) -> Result<Self> {
        let (nc, kw) = match *weights.shape() {
            [a, b, k1, k2] if a == b && k1 == k2 && a > 0 => (a, k1),
            _ => {
                return Err(Error::InvalidArgument(format!(
                    "kernel must have shape [nc, nc, kw, kw], got {:?}",
                    weights.shape()
                )))
            }
        };
        if kw % 2 == 0 {
            return Err(Error::InvalidArgument(format!("kernel width must be odd, got {kw}")));
        }
        let ker = SpiritKernel {
            weights,
            kw,
            nc,
            tikhonov,
        };
        let h = kw / 2;
        for c in 0..nc {
            if ker.tap(c, c, h, h) != C64::new(0.0, 0.0) {
                return Err(Error::InvalidArgument(format!("center tap of coil {c} must be zero")));
            }
        }
        Ok(ker)
    }

    pub fn zeros(nc: usize, kw: usize) -> Result<Self> {
        Self::new(CArray::zeros(&[nc, nc, kw, kw]), 0.0)
    }

    pub fn kw(&self) -> usize {
        self.kw
    }

    pub fn nc(&self) -> usize {
        self.nc
    }

    pub fn tikhonov(&self) -> f64 {
        self.tikhonov
    }

    pub fn weights(&self) -> &CArray {
        &self.weights
    }

    #[inline]
    pub fn tap(&self, out: usize, inp: usize, i: usize, j: usize) -> C64 {
        self.weights.data()[((out * self.nc + inp) * self.kw + i) * self.kw + j]
    }

    /// Writes the weights as CKS at `path` and a one-line sidecar at
    /// `path.json`.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        cks::write_array(path, &self.weights)?;
        let meta = serde_json::json!({"kw": self.kw, "nc": self.nc, "tikhonov": self.tikhonov});
        fs::write(sidecar(path), format!("{meta}\n"))?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let weights = cks::read_array(path)?;
        let meta = fs::read_to_string(sidecar(path))?;
        let meta: serde_json::Value =
            serde_json::from_str(&meta).map_err(|e| Error::Format(format!("kernel sidecar: {e}")))?;
        let bad = |name: &str| Error::Format(format!("bad or missing {name} in kernel sidecar"));
        let kw = meta["kw"].as_u64().ok_or_else(|| bad("kw"))? as usize;
        let nc = meta["nc"].as_u64().ok_or_else(|| bad("nc"))? as usize;
        let tikhonov = meta["tikhonov"].as_f64().ok_or_else(|| bad("tikhonov"))?;
        let ker = SpiritKernel::new(weights, tikhonov)?;
        if ker.kw != kw || ker.nc != nc {
            return Err(Error::Format(format!(
                "sidecar says kw={kw} nc={nc}, weights have kw={} nc={}",
                ker.kw, ker.nc
            )));
        }
        Ok(ker)
    }
}

fn sidecar(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

/// Calibrates `G` from the ACS block of `k` by ridge regression.
///
/// `tikhonov` is relative: the ridge added to the normal equations is
/// `tikhonov * mean(diag(A^H A))`.
pub fn calibrate(k: &KSpace, mask: &SampleMask, kw: usize, tikhonov: f64) -> Result<SpiritKernel> {
    let (n1, n2, nc) = k.dims();
    if mask.n1 != n1 || mask.n2 != n2 {
        return Err(Error::shape(&[mask.n1, mask.n2], &[n1, n2]));
    }
    if kw == 0 || kw % 2 == 0 {
        return Err(Error::InvalidArgument(format!("kernel width must be odd, got {kw}")));
    }
    if !(tikhonov >= 0.0) {
        return Err(Error::InvalidArgument(format!("tikhonov must be >= 0, got {tikhonov}")));
    }
    let acs = mask.acs_cols();
    if acs.len() < kw || n1 < kw {
        return Err(Error::Calibration(format!(
            "ACS block {}x{} is smaller than the {kw}x{kw} kernel",
            n1,
            acs.len()
        )));
    }
    let h = kw / 2;
    let taps = kw * kw * nc;
    let rows: Vec<(usize, usize)> = (h..n1 - h)
        .flat_map(|r| (acs.start + h..acs.end - h).map(move |c| (r, c)))
        .collect();
    let mut a = CMatrix::zeros(rows.len(), taps);
    for (row, &(r, c)) in rows.iter().enumerate() {
        for coil in 0..nc {
            for i in 0..kw {
                for j in 0..kw {
                    a.data[row * taps + (coil * kw + i) * kw + j] = k.get(r + i - h, c + j - h, coil);
                }
            }
        }
    }
    let ata = a.adj_matmul(&a)?;
    let mean_diag = (0..taps).map(|i| ata.get(i, i).re).sum::<f64>() / taps as f64;
    let ridge = tikhonov * mean_diag;

    let solved = par::map_range(nc, |out| -> Result<Vec<C64>> {
        let center = (out * kw + h) * kw + h;
        let keep: Vec<usize> = (0..taps).filter(|&t| t != center).collect();
        let mut normal = CMatrix::from_fn(keep.len(), keep.len(), |i, j| ata.get(keep[i], keep[j]));
        for i in 0..keep.len() {
            let d = normal.get(i, i);
            normal.set(i, i, C64::new(d.re + ridge, 0.0));
        }
        let normal = HermitianMatrix::new(normal.hermitian_part())?;
        let rhs = CMatrix::from_fn(keep.len(), 1, |i, _| ata.get(keep[i], center));
        let g = hermitian_solve(&normal, &rhs).map_err(|e| Error::Calibration(e.to_string()))?;
        let mut full = vec![C64::new(0.0, 0.0); taps];
        for (i, &t) in keep.iter().enumerate() {
            full[t] = g.data[i];
        }
        Ok(full)
    });
    let mut weights = Vec::with_capacity(nc * taps);
    for w in solved {
        weights.extend(w?);
    }
    SpiritKernel::new(CArray::from_vec(&[nc, nc, kw, kw], weights)?, tikhonov)
}

fn check(k: &KSpace, g: &SpiritKernel) -> Result<()> {
    if k.nc() != g.nc {
        return Err(Error::shape(&[k.n1(), k.n2(), g.nc], &[k.n1(), k.n2(), k.nc()]));
    }
    Ok(())
}

fn correlate(k: &KSpace, g: &SpiritKernel, adjoint: bool) -> KSpace {
    let (n1, n2, nc) = k.dims();
    let kw = g.kw;
    let h = kw as isize / 2;
    let rows = par::map_range(n1, |r| {
        let mut out = vec![C64::new(0.0, 0.0); n2 * nc];
        for i in 0..kw {
            // adjoint: correlation with the conjugate-flipped kernel
            let di = i as isize - h;
            let rr = if adjoint { r as isize - di } else { r as isize + di };
            if rr < 0 || rr >= n1 as isize {
                continue;
            }
            let rr = rr as usize;
            for j in 0..kw {
                let dj = j as isize - h;
                let (lo, hi) = if adjoint {
                    (dj.max(0) as usize, (n2 as isize + dj.min(0)) as usize)
                } else {
                    ((-dj).max(0) as usize, (n2 as isize - dj.max(0)) as usize)
                };
                for c in lo..hi {
                    let cc = if adjoint { (c as isize - dj) as usize } else { (c as isize + dj) as usize };
                    let src = &k.data()[(rr * n2 + cc) * nc..(rr * n2 + cc + 1) * nc];
                    let dst = &mut out[c * nc..(c + 1) * nc];
                    for (o, d) in dst.iter_mut().enumerate() {
                        let mut acc = C64::new(0.0, 0.0);
                        for (p, s) in src.iter().enumerate() {
                            acc += if adjoint {
                                g.tap(p, o, i, j).conj() * s
                            } else {
                                g.tap(o, p, i, j) * s
                            };
                        }
                        *d += acc;
                    }
                }
            }
        }
        out
    });
    KSpace::from_vec(n1, n2, nc, rows.concat()).expect("correlation preserves shape")
}

/// `G k`: output coil `c` is `sum_c' correlate(k_c', w[c][c'])` with zero
/// padding outside the grid.
pub fn apply_g(k: &KSpace, g: &SpiritKernel) -> Result<KSpace> {
    check(k, g)?;
    Ok(correlate(k, g, false))
}

/// `G^H k`.
pub fn apply_g_adjoint(k: &KSpace, g: &SpiritKernel) -> Result<KSpace> {
    check(k, g)?;
    Ok(correlate(k, g, true))
}

/// `(G - I) k`.
pub fn residual(k: &KSpace, g: &SpiritKernel) -> Result<KSpace> {
    apply_g(k, g)?.sub(k)
}

/// `(G - I)^H (G - I) k`, the gradient of `||(G - I) k||^2 / 2`.
pub fn glp(k: &KSpace, g: &SpiritKernel) -> Result<KSpace> {
    let r = residual(k, g)?;
    apply_g_adjoint(&r, g)?.sub(&r)
}

/// `||(G - I) k|| / ||k||`.
pub fn consistency(k: &KSpace, g: &SpiritKernel) -> Result<f64> {
    Ok(residual(k, g)?.norm() / k.norm())
}
