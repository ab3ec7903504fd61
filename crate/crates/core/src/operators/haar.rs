//! Orthonormal multi-level 2D Haar transform.

use super::{LinearOperator, OperatorKind};
use crate::error::{check_len, Error, Result};

const INV_SQRT2: f64 = std::f64::consts::FRAC_1_SQRT_2;

/// Full-depth separable Haar decomposition; the adjoint is the inverse.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HaarOperator {
    n: usize,
    levels: usize,
}

impl HaarOperator {
    pub fn new(n: usize) -> Result<Self> {
        if n < 2 || !n.is_power_of_two() {
            return Err(Error::Config(format!(
                "Haar transform needs a power-of-two side length, got {n}"
            )));
        }
        Ok(Self {
            n,
            levels: n.trailing_zeros() as usize,
        })
    }

    pub fn levels(&self) -> usize {
        self.levels
    }
}

// One analysis step on `len` entries read with the given stride.
fn analyze(buf: &mut [f64], scratch: &mut [f64], start: usize, stride: usize, len: usize) {
    let half = len / 2;
    for k in 0..half {
        let a = buf[start + 2 * k * stride];
        let b = buf[start + (2 * k + 1) * stride];
        scratch[k] = (a + b) * INV_SQRT2;
        scratch[half + k] = (a - b) * INV_SQRT2;
    }
    for k in 0..len {
        buf[start + k * stride] = scratch[k];
    }
}

fn synthesize(buf: &mut [f64], scratch: &mut [f64], start: usize, stride: usize, len: usize) {
    let half = len / 2;
    for k in 0..half {
        let s = buf[start + k * stride];
        let d = buf[start + (half + k) * stride];
        scratch[2 * k] = (s + d) * INV_SQRT2;
        scratch[2 * k + 1] = (s - d) * INV_SQRT2;
    }
    for k in 0..len {
        buf[start + k * stride] = scratch[k];
    }
}

impl LinearOperator for HaarOperator {
    type Scalar = f64;

    fn kind(&self) -> OperatorKind {
        OperatorKind::Haar
    }

    fn in_len(&self) -> usize {
        self.n * self.n
    }

    fn out_len(&self) -> usize {
        self.n * self.n
    }

    fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_len("HaarOperator::apply", self.in_len(), x.len())?;
        let n = self.n;
        let mut buf = x.to_vec();
        let mut scratch = vec![0.0; n];
        let mut size = n;
        while size >= 2 {
            for i in 0..size {
                analyze(&mut buf, &mut scratch, i * n, 1, size);
            }
            for j in 0..size {
                analyze(&mut buf, &mut scratch, j, n, size);
            }
            size /= 2;
        }
        Ok(buf)
    }

    fn adjoint(&self, v: &[f64]) -> Result<Vec<f64>> {
        check_len("HaarOperator::adjoint", self.out_len(), v.len())?;
        let n = self.n;
        let mut buf = v.to_vec();
        let mut scratch = vec![0.0; n];
        let mut size = 2;
        while size <= n {
            for j in 0..size {
                synthesize(&mut buf, &mut scratch, j, n, size);
            }
            for i in 0..size {
                synthesize(&mut buf, &mut scratch, i * n, 1, size);
            }
            size *= 2;
        }
        Ok(buf)
    }
}
