use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::LinearOperator;
use crate::error::{Error, Result};
use crate::linalg::{dot, norm};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub seed: u64,
}

impl PowerOptions {
    pub fn with_seed(seed: u64) -> Self {
        Self {
            tol: 1e-6,
            max_iter: 500,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PowerEstimate {
    /// Final Rayleigh quotient (largest eigenvalue estimate).
    pub eigenvalue: f64,
    /// Rayleigh quotient after each iteration.
    pub quotients: Vec<f64>,
    pub converged: bool,
}

/// Power iteration for a symmetric positive semi-definite map on `R^dim`.
///
/// Stops when successive Rayleigh quotients differ by less than
/// `tol` relative, or after `max_iter` applications.
pub fn power_iteration(
    dim: usize,
    mut map: impl FnMut(&[f64]) -> Result<Vec<f64>>,
    opts: &PowerOptions,
) -> Result<PowerEstimate> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
    let nv = norm(&v);
    if dim == 0 || nv == 0.0 {
        return Ok(PowerEstimate {
            eigenvalue: 0.0,
            quotients: Vec::new(),
            converged: true,
        });
    }
    v.iter_mut().for_each(|e| *e /= nv);

    let mut quotients = Vec::new();
    let mut converged = false;
    for _ in 0..opts.max_iter.max(1) {
        let w = map(&v)?;
        let q = dot(&v, &w);
        if !q.is_finite() {
            return Err(Error::Divergence {
                iteration: quotients.len(),
                what: "non-finite Rayleigh quotient in power iteration".into(),
            });
        }
        let nw = norm(&w);
        let prev = quotients.last().copied();
        quotients.push(q);
        if nw == 0.0 {
            converged = true;
            break;
        }
        if let Some(p) = prev {
            if (q - p).abs() <= opts.tol * q.abs() {
                converged = true;
                break;
            }
        }
        v = w.into_iter().map(|e| e / nw).collect();
    }
    Ok(PowerEstimate {
        eigenvalue: quotients.last().copied().unwrap_or(0.0).max(0.0),
        quotients,
        converged,
    })
}

/// Largest singular value of `op`, via power iteration on `A^T A`.
pub fn spectral_norm<A: LinearOperator + ?Sized>(op: &A, opts: &PowerOptions) -> Result<f64> {
    let est = power_iteration(op.in_len(), |x| op.normal(x), opts)?;
    Ok(est.eigenvalue.sqrt())
}
