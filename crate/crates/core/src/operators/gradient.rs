//! Anisotropic first differences with replicate-edge boundary.

use super::{LinearOperator, OperatorKind};
use crate::error::{check_len, Error, Result};

/// Stacks horizontal differences (first `n^2` outputs) and vertical
/// differences (next `n^2`). The last column/row difference is zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GradientOperator {
    n: usize,
}

pub fn make_gradient_op(n: usize) -> Result<GradientOperator> {
    if n < 2 {
        return Err(Error::Config(format!("gradient operator needs n >= 2, got {n}")));
    }
    Ok(GradientOperator { n })
}

impl LinearOperator for GradientOperator {
    type Scalar = f64;

    fn kind(&self) -> OperatorKind {
        OperatorKind::Gradient
    }

    fn in_len(&self) -> usize {
        self.n * self.n
    }

    fn out_len(&self) -> usize {
        2 * self.n * self.n
    }

    fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_len("GradientOperator::apply", self.in_len(), x.len())?;
        let n = self.n;
        let nn = n * n;
        let mut out = vec![0.0; 2 * nn];
        for i in 0..n {
            for j in 0..n {
                let k = i * n + j;
                if j + 1 < n {
                    out[k] = x[k + 1] - x[k];
                }
                if i + 1 < n {
                    out[nn + k] = x[k + n] - x[k];
                }
            }
        }
        Ok(out)
    }

    fn adjoint(&self, v: &[f64]) -> Result<Vec<f64>> {
        check_len("GradientOperator::adjoint", self.out_len(), v.len())?;
        let n = self.n;
        let nn = n * n;
        let (h, w) = v.split_at(nn);
        let mut out = vec![0.0; nn];
        for i in 0..n {
            for j in 0..n {
                let k = i * n + j;
                let mut acc = 0.0;
                if j + 1 < n {
                    acc -= h[k];
                }
                if j >= 1 {
                    acc += h[k - 1];
                }
                if i + 1 < n {
                    acc -= w[k];
                }
                if i >= 1 {
                    acc += w[k - n];
                }
                out[k] = acc;
            }
        }
        Ok(out)
    }
}
