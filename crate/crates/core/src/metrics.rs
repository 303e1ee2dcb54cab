//! Image-domain scores on root-sum-of-squares magnitude images, and the
//! 16-bit PGM export.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::ctensor::ifft2_centered;
use crate::data::KSpace;
use crate::error::{Error, Result};

/// Nonnegative real image, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct MagnitudeImage {
    pub n1: usize,
    pub n2: usize,
    data: Vec<f64>,
}

impl MagnitudeImage {
    pub fn new(n1: usize, n2: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n1 * n2 {
            return Err(Error::shape(&[n1 * n2], &[data.len()]));
        }
        if data.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidArgument("magnitude image must be finite and nonnegative".into()));
        }
        Ok(MagnitudeImage { n1, n2, data })
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.n2 + c]
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(0.0, f64::max)
    }

    fn check(&self, other: &MagnitudeImage) -> Result<()> {
        if (self.n1, self.n2) != (other.n1, other.n2) {
            return Err(Error::shape(&[self.n1, self.n2], &[other.n1, other.n2]));
        }
        Ok(())
    }
}

/// Inverse FFT per coil, then `sqrt(sum_c |x_c|^2)` per pixel.
pub fn rss(k: &KSpace) -> Result<MagnitudeImage> {
    let (n1, n2, nc) = k.dims();
    let img = ifft2_centered(k.values())?;
    let data = img
        .data()
        .chunks(nc)
        .map(|px| px.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt())
        .collect();
    MagnitudeImage::new(n1, n2, data)
}

fn sq_dist(a: &MagnitudeImage, b: &MagnitudeImage) -> f64 {
    a.data.iter().zip(&b.data).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// `100 ||test - ref||^2 / ||ref||^2`.
pub fn nmse(reference: &MagnitudeImage, test: &MagnitudeImage) -> Result<f64> {
    reference.check(test)?;
    let denom: f64 = reference.data.iter().map(|v| v * v).sum();
    if denom == 0.0 {
        return Err(Error::InvalidArgument("reference image is zero".into()));
    }
    Ok(100.0 * sq_dist(reference, test) / denom)
}

/// `10 log10(max(ref)^2 / MSE)`, `+inf` when the images are equal.
pub fn psnr(reference: &MagnitudeImage, test: &MagnitudeImage) -> Result<f64> {
    reference.check(test)?;
    let mse = sq_dist(reference, test) / reference.data.len() as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    let peak = reference.max();
    Ok(10.0 * (peak * peak / mse).log10())
}

const SSIM_WIN: usize = 11;
const SSIM_SIGMA: f64 = 1.5;

fn gaussian_taps() -> [f64; SSIM_WIN] {
    let mut w = [0.0; SSIM_WIN];
    let c = (SSIM_WIN / 2) as f64;
    for (i, v) in w.iter_mut().enumerate() {
        let d = i as f64 - c;
        *v = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let s: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= s);
    w
}

/// Separable Gaussian filter over valid positions only.
fn filter_valid(x: &[f64], n1: usize, n2: usize) -> Vec<f64> {
    let w = gaussian_taps();
    let (o1, o2) = (n1 - SSIM_WIN + 1, n2 - SSIM_WIN + 1);
    let mut rows = vec![0.0; n1 * o2];
    for r in 0..n1 {
        for c in 0..o2 {
            rows[r * o2 + c] = (0..SSIM_WIN).map(|j| w[j] * x[r * n2 + c + j]).sum();
        }
    }
    let mut out = vec![0.0; o1 * o2];
    for r in 0..o1 {
        for c in 0..o2 {
            out[r * o2 + c] = (0..SSIM_WIN).map(|i| w[i] * rows[(r + i) * o2 + c]).sum();
        }
    }
    out
}

/// Mean local SSIM with an 11x11 Gaussian window (sigma 1.5), `K1 = 0.01`,
/// `K2 = 0.03`, and dynamic range `max(ref)` (1 if the reference is zero).
pub fn ssim(reference: &MagnitudeImage, test: &MagnitudeImage) -> Result<f64> {
    reference.check(test)?;
    let (n1, n2) = (reference.n1, reference.n2);
    if n1 < SSIM_WIN || n2 < SSIM_WIN {
        return Err(Error::InvalidArgument(format!(
            "image {n1}x{n2} is smaller than the {SSIM_WIN}x{SSIM_WIN} window"
        )));
    }
    let l = match reference.max() {
        m if m > 0.0 => m,
        _ => 1.0,
    };
    let c1 = (0.01 * l) * (0.01 * l);
    let c2 = (0.03 * l) * (0.03 * l);
    let x = &reference.data;
    let y = &test.data;
    let prod = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(u, v)| u * v).collect::<Vec<_>>();
    let mx = filter_valid(x, n1, n2);
    let my = filter_valid(y, n1, n2);
    let mxx = filter_valid(&prod(x, x), n1, n2);
    let myy = filter_valid(&prod(y, y), n1, n2);
    let mxy = filter_valid(&prod(x, y), n1, n2);
    let mut total = 0.0;
    for i in 0..mx.len() {
        let (ux, uy) = (mx[i], my[i]);
        let vx = mxx[i] - ux * ux;
        let vy = myy[i] - uy * uy;
        let cxy = mxy[i] - ux * uy;
        total += ((2.0 * ux * uy + c1) * (2.0 * cxy + c2)) / ((ux * ux + uy * uy + c1) * (vx + vy + c2));
    }
    Ok(total / mx.len() as f64)
}

/// Scores of one reconstructed slice.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricRow {
    pub slice: String,
    pub mask: String,
    pub af: f64,
    /// Percent.
    pub nmse: f64,
    /// dB; `+inf` for a perfect match.
    pub psnr: f64,
    /// Percent.
    pub ssim: f64,
}

impl MetricRow {
    pub fn evaluate(slice: &str, mask: &str, af: f64, reference: &MagnitudeImage, test: &MagnitudeImage) -> Result<Self> {
        Ok(MetricRow {
            slice: slice.to_string(),
            mask: mask.to_string(),
            af,
            nmse: nmse(reference, test)?,
            psnr: psnr(reference, test)?,
            ssim: 100.0 * ssim(reference, test)?,
        })
    }
}

pub const METRICS_CSV_HEADER: &str = "slice,mask,af,nmse_pct,psnr_db,ssim_pct";

/// Header plus one line per row.
pub fn metrics_csv(rows: &[MetricRow]) -> String {
    let mut out = String::from(METRICS_CSV_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(out, "{},{},{},{:.6},{:.6},{:.6}", r.slice, r.mask, r.af, r.nmse, r.psnr, r.ssim);
    }
    out
}

/// Binary P5 with maxval 65535, scaled so that `peak` maps to 65535.
pub fn encode_pgm(img: &MagnitudeImage, peak: f64) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n65535\n", img.n2, img.n1).into_bytes();
    let scale = if peak > 0.0 { 65535.0 / peak } else { 0.0 };
    for &v in &img.data {
        let q = (v * scale).round().clamp(0.0, 65535.0) as u16;
        out.extend_from_slice(&q.to_be_bytes());
    }
    out
}

pub fn write_pgm(path: impl AsRef<Path>, img: &MagnitudeImage, peak: f64) -> Result<()> {
    fs::write(path, encode_pgm(img, peak))?;
    Ok(())
}
