use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::kspace::KSpace;
use super::phantom::{pixel_coord, RealImage};
use crate::ctensor::{fft2_centered, CArray, C64};
use crate::error::{Error, Result};

/// Complex coil maps, `[n1, n2, nc]`, root-sum-of-squares normalized to 1.
#[derive(Clone, Debug, PartialEq)]
pub struct CoilSensitivities {
    maps: CArray,
}

impl CoilSensitivities {
    /// Normalizes arbitrary nonvanishing maps so that `sum_c |s_c|^2 = 1`.
    pub fn normalized(mut maps: CArray) -> Result<Self> {
        let [n1, n2, nc] = *maps.shape() else {
            return Err(Error::InvalidArgument("coil maps must be rank 3".into()));
        };
        let data = maps.data_mut();
        for p in 0..n1 * n2 {
            let px = &mut data[p * nc..(p + 1) * nc];
            let rss: f64 = px.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            if !(rss > 0.0) {
                return Err(Error::InvalidArgument(format!("coil maps vanish at pixel {p}")));
            }
            for z in px.iter_mut() {
                *z /= rss;
            }
        }
        Ok(CoilSensitivities { maps })
    }

    pub fn maps(&self) -> &CArray {
        &self.maps
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        let s = self.maps.shape();
        (s[0], s[1], s[2])
    }
}

/// Smooth maps: each coil is a Gaussian bump centered just outside the field
/// of view at a distinct angle, with a random linear phase ramp.
pub fn gen_coil_sens(nc: usize, n1: usize, n2: usize, seed: u64) -> Result<CoilSensitivities> {
    if nc == 0 {
        return Err(Error::InvalidArgument("need at least one coil".into()));
    }
    let mut rng = crate::rng::stream(seed, "coils");
    let offset = rng.random_range(0.0..2.0 * PI);
    struct Coil {
        cx: f64,
        cy: f64,
        width: f64,
        phase0: f64,
        ramp: (f64, f64),
    }
    let coils: Vec<Coil> = (0..nc)
        .map(|c| {
            let ang = offset + 2.0 * PI * c as f64 / nc as f64;
            let radius = rng.random_range(1.1..1.3);
            Coil {
                cx: radius * ang.cos(),
                cy: radius * ang.sin(),
                width: rng.random_range(0.7..1.0),
                phase0: rng.random_range(-PI..PI),
                ramp: (rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5)),
            }
        })
        .collect();
    let mut maps = CArray::zeros(&[n1, n2, nc]);
    let data = maps.data_mut();
    for r in 0..n1 {
        let y = pixel_coord(r, n1);
        for col in 0..n2 {
            let x = pixel_coord(col, n2);
            for (c, coil) in coils.iter().enumerate() {
                let d2 = (x - coil.cx).powi(2) + (y - coil.cy).powi(2);
                let mag = (-d2 / (2.0 * coil.width * coil.width)).exp();
                let phase = coil.phase0 + coil.ramp.0 * x + coil.ramp.1 * y;
                data[(r * n2 + col) * nc + c] = C64::from_polar(mag, phase);
            }
        }
    }
    CoilSensitivities::normalized(maps)
}

/// Per coil `k_c = fft2_centered(image * s_c) + n`, with circular complex
/// Gaussian noise of standard deviation `noise_std` (`E|n|^2 = noise_std^2`).
pub fn simulate_kspace(
    image: &RealImage,
    sens: &CoilSensitivities,
    noise_std: f64,
    seed: u64,
) -> Result<KSpace> {
    let (n1, n2, nc) = sens.dims();
    if (image.n1, image.n2) != (n1, n2) {
        return Err(Error::shape(&[n1, n2], &[image.n1, image.n2]));
    }
    if !(noise_std >= 0.0) {
        return Err(Error::InvalidArgument("noise_std must be >= 0".into()));
    }
    let mut coil_images = sens.maps().clone();
    for (i, z) in coil_images.data_mut().iter_mut().enumerate() {
        *z *= image.data[i / nc];
    }
    let mut k = fft2_centered(&coil_images)?;
    if noise_std > 0.0 {
        let mut rng = crate::rng::stream(seed, "kspace-noise");
        let s = noise_std / 2f64.sqrt();
        for z in k.data_mut() {
            let re: f64 = StandardNormal.sample(&mut rng);
            let im: f64 = StandardNormal.sample(&mut rng);
            *z += C64::new(re * s, im * s);
        }
    }
    KSpace::new(k)
}
