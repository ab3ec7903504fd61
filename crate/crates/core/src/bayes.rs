//! Conservative credible region built around a MAP estimate.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::image::Image;
use crate::linalg::{distance_c, norm_l1};
use crate::operators::LinearOperator;

/// Default relative tolerance for region membership.
pub const DEFAULT_REL_TOL: f64 = 1e-3;

/// Objective-level threshold
/// `lambda ||Psi x_map||_1 + N (sqrt(16 ln(3/alpha) / N) + 1)`.
///
/// Requires `alpha` in `(4 exp(-N/3), 1)`.
pub fn eta_alpha(map_reg_value: f64, n_pixels: usize, alpha: f64) -> Result<f64> {
    let n = n_pixels as f64;
    let lower = 4.0 * (-n / 3.0).exp();
    if n_pixels == 0 || !(alpha > lower && alpha < 1.0) {
        return Err(Error::Domain(format!(
            "alpha = {alpha} outside ({lower:e}, 1) for N = {n_pixels}"
        )));
    }
    Ok(map_reg_value + n * ((16.0 * (3.0 / alpha).ln() / n).sqrt() + 1.0))
}

/// `{x : ||Phi x - y|| <= epsilon, ||Psi x||_1 <= eta_alpha / lambda, x in [0,1]^N}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CredibleRegion {
    pub epsilon: f64,
    pub l1_radius: f64,
    pub lambda: f64,
    pub eta_alpha: f64,
    pub alpha: f64,
    pub box_lo: f64,
    pub box_hi: f64,
}

impl CredibleRegion {
    pub fn new(epsilon: f64, lambda: f64, eta_alpha: f64, alpha: f64) -> Result<Self> {
        if !(lambda > 0.0) || !(epsilon >= 0.0) || !(eta_alpha >= 0.0) {
            return Err(Error::Config(format!(
                "invalid region: epsilon={epsilon}, lambda={lambda}, eta={eta_alpha}"
            )));
        }
        Ok(Self {
            epsilon,
            l1_radius: eta_alpha / lambda,
            lambda,
            eta_alpha,
            alpha,
            box_lo: 0.0,
            box_hi: 1.0,
        })
    }

    /// Region attached to a feasible MAP estimate.
    pub fn from_map<P>(x_map: &Image, psi: &P, lambda: f64, epsilon: f64, alpha: f64) -> Result<Self>
    where
        P: LinearOperator<Scalar = f64> + ?Sized,
    {
        let reg = lambda * norm_l1(&psi.apply(x_map.as_slice())?);
        let eta = eta_alpha(reg, x_map.len(), alpha)?;
        Self::new(epsilon, lambda, eta, alpha)
    }
}

/// Slacks reported by [`in_credible_region`]: ratios to the allowed bound
/// (1 means exactly on the boundary) and the largest box violation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Membership {
    pub inside: bool,
    pub data_residual: f64,
    pub data_slack: f64,
    pub l1_norm: f64,
    pub l1_slack: f64,
    pub box_violation: f64,
}

pub fn in_credible_region<F, P>(
    x: &Image,
    region: &CredibleRegion,
    phi: &F,
    psi: &P,
    y: &[Complex64],
    rel_tol: f64,
) -> Result<Membership>
where
    F: LinearOperator<Scalar = Complex64> + ?Sized,
    P: LinearOperator<Scalar = f64> + ?Sized,
{
    check_len("in_credible_region", phi.out_len(), y.len())?;
    let data_residual = distance_c(&phi.apply(x.as_slice())?, y);
    let l1_norm = norm_l1(&psi.apply(x.as_slice())?);
    Ok(membership(x, region, data_residual, l1_norm, rel_tol))
}

pub(crate) fn membership(
    x: &Image,
    region: &CredibleRegion,
    data_residual: f64,
    l1_norm: f64,
    rel_tol: f64,
) -> Membership {
    let ratio = |v: f64, bound: f64| {
        if bound > 0.0 {
            v / bound
        } else if v == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    };
    let data_slack = ratio(data_residual, region.epsilon);
    let l1_slack = ratio(l1_norm, region.l1_radius);
    let box_violation = x
        .as_slice()
        .iter()
        .map(|&v| (region.box_lo - v).max(v - region.box_hi).max(0.0))
        .fold(0.0, f64::max);
    let inside = data_residual <= region.epsilon * (1.0 + rel_tol)
        && l1_norm <= region.l1_radius * (1.0 + rel_tol)
        && box_violation <= rel_tol
        && x.is_finite();
    Membership {
        inside,
        data_residual,
        data_slack,
        l1_norm,
        l1_slack,
        box_violation,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eta_examples() {
        let e = eta_alpha(0.0, 16, 0.05).unwrap();
        let expect = 16.0 * ((60f64).ln().sqrt() + 1.0);
        assert!((e - expect).abs() < 1e-12);
        assert!((e - 48.37).abs() < 0.01);
        assert!((eta_alpha(3.5, 16, 0.05).unwrap() - e - 3.5).abs() < 1e-12);
        let big = eta_alpha(0.0, 4096, 0.01).unwrap();
        let expect = 4096.0 * ((16.0 * (300f64).ln() / 4096.0).sqrt() + 1.0);
        assert!((big - expect).abs() < 1e-9);
    }

    #[test]
    fn eta_monotonicity() {
        let alphas = [0.001, 0.01, 0.05, 0.1, 0.5, 0.9];
        for w in alphas.windows(2) {
            assert!(eta_alpha(1.0, 256, w[0]).unwrap() > eta_alpha(1.0, 256, w[1]).unwrap());
        }
        for n in [64usize, 128, 1024, 4096] {
            assert!(eta_alpha(1.0, n, 0.01).unwrap() < eta_alpha(1.0, n + 1, 0.01).unwrap());
        }
    }

    #[test]
    fn alpha_domain() {
        assert!(matches!(eta_alpha(0.0, 16, 1.0), Err(Error::Domain(_))));
        assert!(eta_alpha(0.0, 16, 0.0).is_err());
        // 4 exp(-1) > 1 for N = 3: empty admissible interval.
        assert!(eta_alpha(0.0, 3, 0.5).is_err());
    }
}
