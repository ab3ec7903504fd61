//! Radially subsampled, unitary 2D Fourier measurement operator.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use super::{LinearOperator, OperatorKind};
use crate::error::{check_len, Error, Result};

/// Frequency-selection grid for radial line sampling.
///
/// `mask` is stored in centred layout: row `v + n/2`, column `u + n/2`
/// holds frequency `(v, u)` with the DC bin at `(n/2, n/2)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SamplingPattern {
    pub n: usize,
    pub angles: usize,
    pub mask: Vec<bool>,
    pub m_count: usize,
}

/// Side length at which acquisition-angle counts are calibrated.
pub const REFERENCE_SIDE: usize = 128;

impl SamplingPattern {
    /// Rasterizes `angles` lines through the frequency origin at angles
    /// `k pi / angles`, then closes the set under `f -> -f`.
    pub fn radial(n: usize, angles: usize) -> Result<Self> {
        if n < 4 || !n.is_power_of_two() {
            return Err(Error::Config(format!(
                "Fourier side length must be a power of two >= 4, got {n}"
            )));
        }
        if angles == 0 {
            return Err(Error::Config("at least one sampling angle is required".into()));
        }
        let half = (n / 2) as i64;
        let mut fft_mask = vec![false; n * n];
        let mut mark = |v: i64, u: i64| {
            if (-half..half).contains(&v) && (-half..half).contains(&u) {
                let (r, c) = (v.rem_euclid(n as i64) as usize, u.rem_euclid(n as i64) as usize);
                fft_mask[r * n + c] = true;
                let (rm, cm) = ((n - r) % n, (n - c) % n);
                fft_mask[rm * n + cm] = true;
            }
        };
        // Unit radial steps out to the grid corners; f64::round is
        // half-away-from-zero, so each rasterized line is point-symmetric.
        let reach = (half as f64 * std::f64::consts::SQRT_2).ceil() as i64;
        for k in 0..angles {
            let theta = std::f64::consts::PI * k as f64 / angles as f64;
            let (s, c) = theta.sin_cos();
            for t in -reach..=reach {
                let r = t as f64;
                mark((r * s).round() as i64, (r * c).round() as i64);
            }
        }
        Ok(Self::from_fft_mask(n, angles, &fft_mask))
    }

    /// Pattern for a scanner that acquires `acquisition_angles` half-lines,
    /// i.e. `ceil(acquisition_angles / 2)` full lines through the origin.
    pub fn from_acquisition_angles(n: usize, acquisition_angles: usize) -> Result<Self> {
        Self::radial(n, acquisition_angles.div_ceil(2))
    }

    /// Pattern at side `n` whose ratio `M / N` is closest to that of
    /// `acquisition_angles` at the 128 x 128 reference grid.
    ///
    /// Lets small grids reproduce the undersampling levels of the reference
    /// configuration; at `n = 128` it is identical to
    /// [`from_acquisition_angles`](Self::from_acquisition_angles).
    pub fn reference_equivalent(n: usize, acquisition_angles: usize) -> Result<Self> {
        let reference = Self::from_acquisition_angles(REFERENCE_SIDE, acquisition_angles)?;
        if n == REFERENCE_SIDE {
            return Ok(reference);
        }
        let target = reference.ratio();
        let mut best = Self::radial(n, 1)?;
        // Ratio is nondecreasing in the line count up to saturation.
        for lines in 2..=4 * n {
            let cand = Self::radial(n, lines)?;
            let stop = cand.ratio() >= target || cand.m_count == n * n;
            if (cand.ratio() - target).abs() < (best.ratio() - target).abs() {
                best = cand;
            }
            if stop {
                break;
            }
        }
        Ok(best)
    }

    /// Every frequency sampled.
    pub fn full(n: usize) -> Result<Self> {
        if n < 4 || !n.is_power_of_two() {
            return Err(Error::Config(format!(
                "Fourier side length must be a power of two >= 4, got {n}"
            )));
        }
        Ok(Self::from_fft_mask(n, 0, &vec![true; n * n]))
    }

    fn from_fft_mask(n: usize, angles: usize, fft_mask: &[bool]) -> Self {
        let half = n / 2;
        let mut mask = vec![false; n * n];
        for r in 0..n {
            for c in 0..n {
                if fft_mask[r * n + c] {
                    mask[((r + half) % n) * n + (c + half) % n] = true;
                }
            }
        }
        let m_count = mask.iter().filter(|&&b| b).count();
        Self {
            n,
            angles,
            mask,
            m_count,
        }
    }

    /// Flat indices (in unshifted FFT order) of the sampled frequencies, ascending.
    pub fn fft_indices(&self) -> Vec<usize> {
        let n = self.n;
        let half = n / 2;
        let mut idx: Vec<usize> = (0..n * n)
            .filter(|&k| self.mask[k])
            .map(|k| {
                let (row, col) = (k / n, k % n);
                ((row + half) % n) * n + (col + half) % n
            })
            .collect();
        idx.sort_unstable();
        idx
    }

    /// Undersampling ratio `M / N`.
    pub fn ratio(&self) -> f64 {
        self.m_count as f64 / (self.n * self.n) as f64
    }
}

/// `Phi = S F` with `F` the unitary 2D DFT and `S` a row selection.
#[derive(Clone)]
pub struct FourierOperator {
    n: usize,
    pattern: SamplingPattern,
    selected: Vec<usize>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for FourierOperator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FourierOperator")
            .field("n", &self.n)
            .field("m", &self.selected.len())
            .finish()
    }
}

impl FourierOperator {
    pub fn new(pattern: &SamplingPattern) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            n: pattern.n,
            pattern: pattern.clone(),
            selected: pattern.fft_indices(),
            forward: planner.plan_fft_forward(pattern.n),
            inverse: planner.plan_fft_inverse(pattern.n),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn pattern(&self) -> &SamplingPattern {
        &self.pattern
    }

    /// Flat FFT-order index of each measurement.
    pub fn selected(&self) -> &[usize] {
        &self.selected
    }

    fn fft2(&self, buf: &mut [Complex64], fft: &dyn Fft<f64>) {
        let n = self.n;
        fft.process(buf);
        transpose(buf, n);
        fft.process(buf);
        transpose(buf, n);
        let scale = 1.0 / n as f64;
        buf.iter_mut().for_each(|z| *z *= scale);
    }

    /// Unitary 2D DFT of a real image, all frequencies.
    pub fn full_spectrum(&self, x: &[f64]) -> Result<Vec<Complex64>> {
        check_len("FourierOperator::full_spectrum", self.n * self.n, x.len())?;
        let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.fft2(&mut buf, self.forward.as_ref());
        Ok(buf)
    }
}

fn transpose(buf: &mut [Complex64], n: usize) {
    for i in 0..n {
        for j in i + 1..n {
            buf.swap(i * n + j, j * n + i);
        }
    }
}

impl LinearOperator for FourierOperator {
    type Scalar = Complex64;

    fn kind(&self) -> OperatorKind {
        OperatorKind::FourierMasked
    }

    fn in_len(&self) -> usize {
        self.n * self.n
    }

    fn out_len(&self) -> usize {
        self.selected.len()
    }

    fn apply(&self, x: &[f64]) -> Result<Vec<Complex64>> {
        check_len("FourierOperator::apply", self.in_len(), x.len())?;
        let spectrum = self.full_spectrum(x)?;
        Ok(self.selected.iter().map(|&k| spectrum[k]).collect())
    }

    fn adjoint(&self, v: &[Complex64]) -> Result<Vec<f64>> {
        check_len("FourierOperator::adjoint", self.out_len(), v.len())?;
        let mut buf = vec![Complex64::new(0.0, 0.0); self.n * self.n];
        for (&k, &z) in self.selected.iter().zip(v) {
            buf[k] = z;
        }
        self.fft2(&mut buf, self.inverse.as_ref());
        Ok(buf.into_iter().map(|z| z.re).collect())
    }
}

/// Radial-line subsampled Fourier operator and its sampling pattern.
pub fn make_radial_fourier(n: usize, angles: usize) -> Result<(FourierOperator, SamplingPattern)> {
    let pattern = SamplingPattern::radial(n, angles)?;
    Ok((FourierOperator::new(&pattern), pattern))
}
