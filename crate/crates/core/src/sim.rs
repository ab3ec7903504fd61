//! Synthetic phantoms, noisy radial Fourier measurements and artifact injection.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{Image, StructureMask};
use crate::operators::{FourierOperator, LinearOperator, SamplingPattern};

/// How many bump structures to place and what they look like.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StructureSpec {
    pub count: usize,
    /// Disk radius in pixels.
    pub radius: f64,
    /// Peak height added at the disk centre (may be negative).
    pub amplitude: f64,
}

impl Default for StructureSpec {
    fn default() -> Self {
        Self {
            count: 1,
            radius: 3.0,
            amplitude: 0.3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Phantom {
    pub image: Image,
    /// The same phantom without any structure.
    pub base: Image,
    pub structures: Vec<(StructureMask, f64)>,
    pub seed: u64,
}

struct Ellipse {
    cu: f64,
    cv: f64,
    a: f64,
    b: f64,
    angle: f64,
    value: f64,
    ramp_u: f64,
    ramp_v: f64,
}

// Coordinates normalised to [-1, 1]; u runs along columns, v along rows.
const ELLIPSES: [Ellipse; 4] = [
    Ellipse { cu: 0.0, cv: 0.0, a: 0.85, b: 0.7, angle: 0.0, value: 0.35, ramp_u: 0.05, ramp_v: 0.0 },
    Ellipse { cu: -0.1, cv: 0.05, a: 0.55, b: 0.45, angle: 0.3, value: 0.2, ramp_u: 0.0, ramp_v: 0.08 },
    Ellipse { cu: 0.4, cv: -0.35, a: 0.15, b: 0.1, angle: -0.4, value: 0.25, ramp_u: 0.0, ramp_v: 0.0 },
    Ellipse { cu: -0.4, cv: 0.35, a: 0.12, b: 0.2, angle: 0.0, value: -0.15, ramp_u: 0.0, ramp_v: 0.0 },
];

/// Structure-free piecewise-smooth base image.
pub fn base_phantom(n: usize) -> Image {
    let h = n as f64 / 2.0;
    Image::from_fn(n, |i, j| {
        let (u, v) = ((j as f64 - h) / h, (i as f64 - h) / h);
        let mut val = 0.0;
        for e in &ELLIPSES {
            let (s, c) = e.angle.sin_cos();
            let (du, dv) = (u - e.cu, v - e.cv);
            let (p, q) = (c * du + s * dv, -s * du + c * dv);
            if (p / e.a).powi(2) + (q / e.b).powi(2) <= 1.0 {
                val += e.value + e.ramp_u * du + e.ramp_v * dv;
            }
        }
        val.clamp(0.0, 1.0)
    })
}

fn laplacian_at(x: &Image, i: usize, j: usize) -> f64 {
    let n = x.n();
    if i == 0 || j == 0 || i + 1 >= n || j + 1 >= n {
        return f64::INFINITY;
    }
    x.get(i - 1, j) + x.get(i + 1, j) + x.get(i, j - 1) + x.get(i, j + 1) - 4.0 * x.get(i, j)
}

/// Smooth bump `(1 - (d/r)^2)^2` for `d < r`, zero elsewhere.
fn bump(d: f64, r: f64) -> f64 {
    if d >= r {
        0.0
    } else {
        let t = 1.0 - (d / r).powi(2);
        t * t
    }
}

/// Base phantom plus `spec.count` bump structures placed at seeded random
/// positions inside flat (linear) regions of the base, away from the border
/// and from each other.
pub fn generate_phantom(n: usize, spec: &StructureSpec, seed: u64) -> Result<Phantom> {
    if n < 32 {
        return Err(Error::Config(format!("phantom side must be >= 32, got {n}")));
    }
    if !(spec.radius >= 1.0) {
        return Err(Error::Config(format!("structure radius must be >= 1, got {}", spec.radius)));
    }
    let base = base_phantom(n);
    let mut image = base.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let r = spec.radius;
    let guard = r + 2.0;
    let lo = guard.ceil() as usize;
    if 2 * lo + 1 > n {
        return Err(Error::Config(format!("structure radius {r} too large for {n}x{n}")));
    }
    let mut centres: Vec<(f64, f64)> = Vec::new();
    let mut structures = Vec::new();
    for s in 0..spec.count {
        let mut placed = None;
        for _ in 0..2000 {
            let ci = rng.random_range(lo..n - lo) as f64;
            let cj = rng.random_range(lo..n - lo) as f64;
            if centres
                .iter()
                .any(|&(a, b)| ((a - ci).powi(2) + (b - cj).powi(2)).sqrt() <= 2.0 * guard)
            {
                continue;
            }
            if base.get(ci as usize, cj as usize) < 0.1 {
                continue;
            }
            let flat = (0..n * n).all(|k| {
                let (i, j) = (k / n, k % n);
                let d = ((i as f64 - ci).powi(2) + (j as f64 - cj).powi(2)).sqrt();
                d > r + 1.0 || laplacian_at(&base, i, j).abs() <= 1e-9
            });
            if flat {
                placed = Some((ci, cj));
                break;
            }
        }
        let (ci, cj) = placed.ok_or_else(|| {
            Error::Config(format!("could not place structure {s} of radius {r} disjointly"))
        })?;
        centres.push((ci, cj));
        let mask = StructureMask::disk(n, ci, cj, r)?;
        for &k in mask.index_set() {
            let (i, j) = ((k / n) as f64, (k % n) as f64);
            let d = ((i - ci).powi(2) + (j - cj).powi(2)).sqrt();
            let v = image.as_slice()[k] + spec.amplitude * bump(d, r);
            image.as_mut_slice()[k] = v.clamp(0.0, 1.0);
        }
        structures.push((mask, spec.amplitude));
    }
    Ok(Phantom {
        image,
        base,
        structures,
        seed,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedData {
    pub y: Vec<Complex64>,
    pub delta: f64,
    pub epsilon: f64,
    pub isnr: f64,
    pub pattern: SamplingPattern,
    pub seed: u64,
}

/// `delta = ||Phi x|| / M * 10^(-isnr/20)`.
pub fn noise_level(clean: &[Complex64], isnr: f64) -> f64 {
    crate::linalg::norm_c(clean) / clean.len() as f64 * 10f64.powf(-isnr / 20.0)
}

/// Data-ball radius `delta * sqrt(M + 2 sqrt(M))`.
pub fn data_radius(delta: f64, m: usize) -> f64 {
    let m = m as f64;
    delta * (m + 2.0 * m.sqrt()).sqrt()
}

fn check_isnr(isnr: f64) -> Result<()> {
    if (0.0..=60.0).contains(&isnr) {
        Ok(())
    } else {
        Err(Error::Config(format!("iSNR must lie in [0, 60] dB, got {isnr}")))
    }
}

/// `y = Phi x + w` with iid complex Gaussian `w`, each component of
/// standard deviation `delta / sqrt(2)`.
pub fn simulate_measurements(
    x: &Image,
    phi: &FourierOperator,
    isnr: f64,
    seed: u64,
) -> Result<SimulatedData> {
    let mut data = simulate_noiseless(x, phi, isnr)?;
    let normal = Normal::new(0.0, data.delta / std::f64::consts::SQRT_2)
        .map_err(|e| Error::Domain(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for z in data.y.iter_mut() {
        let re = normal.sample(&mut rng);
        let im = normal.sample(&mut rng);
        *z += Complex64::new(re, im);
    }
    data.seed = seed;
    Ok(data)
}

/// `y = Phi x` exactly; `delta` and `epsilon` are still those of `isnr`.
pub fn simulate_noiseless(x: &Image, phi: &FourierOperator, isnr: f64) -> Result<SimulatedData> {
    check_isnr(isnr)?;
    let y = phi.apply(x.as_slice())?;
    let delta = noise_level(&y, isnr);
    if !(delta > 0.0) {
        return Err(Error::Domain("zero signal gives a zero noise level".into()));
    }
    Ok(SimulatedData {
        epsilon: data_radius(delta, y.len()),
        y,
        delta,
        isnr,
        pattern: phi.pattern().clone(),
        seed: 0,
    })
}

/// Adds a checkerboard pattern under a smooth envelope inside `mask`.
///
/// Pixels outside the mask are untouched; pixels inside are clamped to [0, 1].
pub fn inject_artifact(x: &Image, mask: &StructureMask, amplitude: f64) -> Result<Image> {
    mask.check_image(x, "inject_artifact")?;
    let mut out = x.clone();
    if mask.is_empty() || amplitude == 0.0 {
        return Ok(out);
    }
    let n = x.n();
    let idx = mask.index_set();
    let (mut ci, mut cj) = (0.0, 0.0);
    for &k in idx {
        ci += (k / n) as f64;
        cj += (k % n) as f64;
    }
    ci /= idx.len() as f64;
    cj /= idx.len() as f64;
    let dist = |k: usize| (((k / n) as f64 - ci).powi(2) + ((k % n) as f64 - cj).powi(2)).sqrt();
    let reach = idx.iter().map(|&k| dist(k)).fold(0.0, f64::max) + 1.0;
    for &k in idx {
        let sign = if (k / n + k % n) % 2 == 0 { 1.0 } else { -1.0 };
        let v = x.as_slice()[k] + amplitude * sign * bump(dist(k), reach);
        out.as_mut_slice()[k] = v.clamp(0.0, 1.0);
    }
    Ok(out)
}
