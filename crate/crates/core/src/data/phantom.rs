use rand::Rng;

use crate::error::{Error, Result};

/// Real-valued `n1 x n2` image, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct RealImage {
    pub n1: usize,
    pub n2: usize,
    pub data: Vec<f64>,
}

impl RealImage {
    pub fn zeros(n1: usize, n2: usize) -> Self {
        RealImage {
            n1,
            n2,
            data: vec![0.0; n1 * n2],
        }
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.n2 + c]
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// One ellipse in normalized coordinates: the grid spans `[-1, 1]` on both
/// axes, `x` along columns and `y` along rows.
#[derive(Clone, Debug, PartialEq)]
pub struct Ellipse {
    pub center: (f64, f64),
    pub axes: (f64, f64),
    /// Rotation in radians.
    pub angle: f64,
    pub intensity: f64,
}

impl Ellipse {
    pub fn contains(&self, x: f64, y: f64) -> bool {
        let (dx, dy) = (x - self.center.0, y - self.center.1);
        let (s, c) = self.angle.sin_cos();
        let u = dx * c + dy * s;
        let v = -dx * s + dy * c;
        (u / self.axes.0).powi(2) + (v / self.axes.1).powi(2) <= 1.0
    }
}

/// Later ellipses overwrite earlier ones, so pixel values are always one of
/// the listed intensities or zero.
#[derive(Clone, Debug, PartialEq)]
pub struct PhantomSpec {
    pub ellipses: Vec<Ellipse>,
    pub n1: usize,
    pub n2: usize,
    /// Complex noise standard deviation for k-space simulation.
    pub noise_std: f64,
    /// Uniform random shift of every ellipse center, normalized units.
    pub jitter: f64,
}

impl PhantomSpec {
    /// Overwrite-style Shepp-Logan layout (absolute, not additive, intensities).
    pub fn shepp_logan(n1: usize, n2: usize) -> Self {
        let e = |cx: f64, cy: f64, a: f64, b: f64, deg: f64, i: f64| Ellipse {
            center: (cx, cy),
            axes: (a, b),
            angle: deg.to_radians(),
            intensity: i,
        };
        PhantomSpec {
            ellipses: vec![
                e(0.0, 0.0, 0.69, 0.92, 0.0, 1.0),
                e(0.0, -0.0184, 0.6624, 0.874, 0.0, 0.2),
                e(0.22, 0.0, 0.11, 0.31, -18.0, 0.0),
                e(-0.22, 0.0, 0.16, 0.41, 18.0, 0.0),
                e(0.0, 0.35, 0.21, 0.25, 0.0, 0.3),
                e(0.0, 0.1, 0.046, 0.046, 0.0, 0.3),
                e(0.0, -0.1, 0.046, 0.046, 0.0, 0.3),
                e(-0.08, -0.605, 0.046, 0.023, 0.0, 0.3),
                e(0.0, -0.605, 0.023, 0.023, 0.0, 0.3),
                e(0.06, -0.605, 0.023, 0.046, 0.0, 0.3),
            ],
            n1,
            n2,
            noise_std: 0.0,
            jitter: 0.0,
        }
    }

    /// Random anatomy-like layout: a bright outer body with several inner
    /// structures of varied contrast.
    pub fn random<R: Rng>(n1: usize, n2: usize, count: usize, rng: &mut R) -> Self {
        let mut ellipses = Vec::with_capacity(count + 1);
        let body = Ellipse {
            center: (rng.random_range(-0.08..0.08), rng.random_range(-0.08..0.08)),
            axes: (rng.random_range(0.6..0.85), rng.random_range(0.7..0.9)),
            angle: rng.random_range(-0.3..0.3),
            intensity: rng.random_range(0.5..0.8),
        };
        ellipses.push(body);
        for _ in 0..count {
            ellipses.push(Ellipse {
                center: (rng.random_range(-0.45..0.45), rng.random_range(-0.5..0.5)),
                axes: (rng.random_range(0.05..0.3), rng.random_range(0.05..0.3)),
                angle: rng.random_range(0.0..std::f64::consts::PI),
                intensity: rng.random_range(0.0..1.0),
            });
        }
        PhantomSpec {
            ellipses,
            n1,
            n2,
            noise_std: 0.0,
            jitter: 0.0,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.ellipses.is_empty() {
            return Err(Error::InvalidArgument("phantom needs at least one ellipse".into()));
        }
        if self.n1 == 0 || self.n2 == 0 {
            return Err(Error::InvalidArgument("phantom grid must be non-empty".into()));
        }
        for e in &self.ellipses {
            if !(e.axes.0 > 0.0 && e.axes.1 > 0.0) {
                return Err(Error::InvalidArgument(format!("ellipse axes must be positive: {e:?}")));
            }
            if !e.intensity.is_finite() || e.intensity < 0.0 {
                return Err(Error::InvalidArgument(format!("ellipse intensity must be finite and >= 0: {e:?}")));
            }
        }
        if !(self.noise_std >= 0.0) || !(self.jitter >= 0.0) {
            return Err(Error::InvalidArgument("noise_std and jitter must be >= 0".into()));
        }
        Ok(())
    }
}

/// Normalized coordinate of pixel index `i` on an axis of length `n`.
pub fn pixel_coord(i: usize, n: usize) -> f64 {
    (2 * i + 1) as f64 / n as f64 - 1.0
}

/// Rasterizes the phantom. `seed` only matters when `spec.jitter > 0`.
pub fn gen_phantom(spec: &PhantomSpec, seed: u64) -> Result<RealImage> {
    spec.validate()?;
    let mut rng = crate::rng::stream(seed, "phantom/jitter");
    let ellipses: Vec<Ellipse> = spec
        .ellipses
        .iter()
        .map(|e| {
            let mut e = e.clone();
            if spec.jitter > 0.0 {
                e.center.0 += rng.random_range(-spec.jitter..spec.jitter);
                e.center.1 += rng.random_range(-spec.jitter..spec.jitter);
            }
            e
        })
        .collect();
    let mut img = RealImage::zeros(spec.n1, spec.n2);
    for r in 0..spec.n1 {
        let y = pixel_coord(r, spec.n1);
        for c in 0..spec.n2 {
            let x = pixel_coord(c, spec.n2);
            if let Some(e) = ellipses.iter().rev().find(|e| e.contains(x, y)) {
                img.data[r * spec.n2 + c] = e.intensity;
            }
        }
    }
    Ok(img)
}
