//! Primal-dual (Condat-Vu) solver for the constrained MAP problem
//!
//! `min_x  lambda ||Psi x||_1  s.t.  ||Phi x - y|| <= epsilon,  x in [0,1]^N`.

use std::io::Write;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::image::Image;
use crate::linalg::{distance, distance_c, norm, norm_l1};
use crate::operators::{spectral_norm, LinearOperator, PowerOptions};
use crate::prox::{moreau_dual_step, project_box_in_place, soft_threshold, Ball2};

/// Ratio `mu2 / (mu1 ||Psi||^2 / ||Phi||^2)` used by [`PdStepsizes::balanced`].
pub const DATA_DUAL_WEIGHT: f64 = 16.0;

/// `(||Psi||^2, ||Phi||^2)` by power iteration.
pub fn operator_norms_sq<F, P>(phi: &F, psi: &P, seed: u64) -> Result<(f64, f64)>
where
    F: LinearOperator<Scalar = Complex64> + ?Sized,
    P: LinearOperator<Scalar = f64> + ?Sized,
{
    let opts = PowerOptions::with_seed(seed);
    let psi_n = spectral_norm(psi, &opts)?;
    let phi_n = spectral_norm(phi, &opts)?;
    Ok((psi_n * psi_n, phi_n * phi_n))
}

/// Stepsizes for a two-dual-variable primal-dual scheme with cached operator norms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PdStepsizes {
    pub mu1: f64,
    pub mu2: f64,
    pub sigma: f64,
    pub norm_psi_sq: f64,
    pub norm_phi_sq: f64,
}

impl PdStepsizes {
    /// `sigma = 0.99 / (mu1 ||Psi||^2 + mu2 ||Phi||^2 + extra)`.
    pub fn saturating(mu1: f64, mu2: f64, norm_psi_sq: f64, norm_phi_sq: f64, extra: f64) -> Self {
        Self {
            mu1,
            mu2,
            sigma: 0.99 / (mu1 * norm_psi_sq + mu2 * norm_phi_sq + extra),
            norm_psi_sq,
            norm_phi_sq,
        }
    }

    /// `mu1 = 1` and a data-branch step `mu2 = DATA_DUAL_WEIGHT ||Psi||^2 / ||Phi||^2`.
    ///
    /// The data ball is very thin relative to the signal, and with equal dual
    /// steps its multiplier grows too slowly to reach feasibility in a few
    /// thousand iterations.
    pub fn balanced(norm_psi_sq: f64, norm_phi_sq: f64, extra: f64) -> Self {
        let mu2 = DATA_DUAL_WEIGHT * norm_psi_sq / norm_phi_sq.max(f64::MIN_POSITIVE);
        Self::saturating(1.0, mu2, norm_psi_sq, norm_phi_sq, extra)
    }

    /// [`balanced`](Self::balanced) stepsizes with norms from power iteration.
    pub fn estimate<F, P>(phi: &F, psi: &P, seed: u64) -> Result<Self>
    where
        F: LinearOperator<Scalar = Complex64> + ?Sized,
        P: LinearOperator<Scalar = f64> + ?Sized,
    {
        let (psi_sq, phi_sq) = operator_norms_sq(phi, psi, seed)?;
        Ok(Self::balanced(psi_sq, phi_sq, 0.0))
    }

    /// `sigma^-1 - mu1 ||Psi||^2 - mu2 ||Phi||^2`.
    pub fn margin(&self) -> f64 {
        1.0 / self.sigma - self.mu1 * self.norm_psi_sq - self.mu2 * self.norm_phi_sq
    }

    /// Requires `margin() > bound` and positive stepsizes.
    pub fn check(&self, bound: f64) -> Result<()> {
        let ok = self.sigma > 0.0 && self.mu1 > 0.0 && self.mu2 > 0.0 && self.margin() > bound;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "stepsizes violate convergence condition: margin {} <= {bound} (sigma={}, mu1={}, mu2={})",
                self.margin(),
                self.sigma,
                self.mu1,
                self.mu2
            )))
        }
    }
}

/// One row per iteration.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SolverTrace {
    pub iter: Vec<usize>,
    pub data_residual: Vec<f64>,
    pub reg_value: Vec<f64>,
    pub rel_change: Vec<f64>,
}

impl SolverTrace {
    pub fn len(&self) -> usize {
        self.iter.len()
    }

    pub fn is_empty(&self) -> bool {
        self.iter.is_empty()
    }

    pub(crate) fn push(&mut self, iter: usize, data_residual: f64, reg_value: f64, rel_change: f64) {
        self.iter.push(iter);
        self.data_residual.push(data_residual);
        self.reg_value.push(reg_value);
        self.rel_change.push(rel_change);
    }

    /// CSV with header `iter,data_residual,reg_value,rel_change`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let io = |e: csv::Error| Error::Io(std::io::Error::other(e));
        out.write_record(["iter", "data_residual", "reg_value", "rel_change"]).map_err(io)?;
        for k in 0..self.len() {
            out.write_record([
                self.iter[k].to_string(),
                self.data_residual[k].to_string(),
                self.reg_value[k].to_string(),
                self.rel_change[k].to_string(),
            ])
            .map_err(io)?;
        }
        out.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MapOptions {
    pub max_iter: usize,
    /// Relative-change threshold.
    pub tol: f64,
    /// Allowed relative excess of the data residual over `epsilon` at termination.
    pub feas_tol: f64,
    /// Number of trailing iterations that must all meet the data constraint.
    pub feas_window: usize,
    /// Seed for the power iterations when `stepsizes` is `None`.
    pub seed: u64,
    pub stepsizes: Option<PdStepsizes>,
}

impl Default for MapOptions {
    fn default() -> Self {
        Self {
            max_iter: 20_000,
            tol: 1e-5,
            feas_tol: 1e-3,
            feas_window: 50,
            seed: 0,
            stepsizes: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MapResult {
    pub x: Image,
    pub trace: SolverTrace,
    pub iterations: usize,
    /// Stopping rule met before `max_iter`.
    pub converged: bool,
    pub stepsizes: PdStepsizes,
}

impl MapResult {
    pub fn final_residual(&self) -> f64 {
        self.trace.data_residual.last().copied().unwrap_or(f64::NAN)
    }
}

pub(crate) fn rel_change(new: &[f64], old: &[f64]) -> f64 {
    let d = distance(new, old);
    let base = norm(old);
    if base > 0.0 {
        d / base
    } else if d == 0.0 {
        0.0
    } else {
        f64::INFINITY
    }
}

/// `Phi^T clamp`-style backprojection start point.
pub fn backprojection<F>(phi: &F, y: &[Complex64], n: usize) -> Result<Image>
where
    F: LinearOperator<Scalar = Complex64> + ?Sized,
{
    let mut x = phi.adjoint(y)?;
    project_box_in_place(&mut x, 0.0, 1.0);
    Image::new(n, x)
}

/// Runs the primal-dual iteration until the relative change drops below
/// `opts.tol` with the data constraint met to `opts.feas_tol` over the last
/// `opts.feas_window` iterations, or `opts.max_iter` iterations. Returns the last box-projected iterate.
#[allow(clippy::too_many_arguments)]
pub fn solve_map<F, P>(
    y: &[Complex64],
    phi: &F,
    psi: &P,
    lambda: f64,
    epsilon: f64,
    opts: &MapOptions,
    x0: Option<&Image>,
) -> Result<MapResult>
where
    F: LinearOperator<Scalar = Complex64> + ?Sized,
    P: LinearOperator<Scalar = f64> + ?Sized,
{
    check_len("solve_map", phi.out_len(), y.len())?;
    let n_pix = phi.in_len();
    let n = (n_pix as f64).sqrt().round() as usize;
    if !(lambda > 0.0) || !(epsilon >= 0.0) {
        return Err(Error::Config(format!("invalid lambda {lambda} or epsilon {epsilon}")));
    }
    let steps = match opts.stepsizes {
        Some(s) => s,
        None => PdStepsizes::estimate(phi, psi, opts.seed)?,
    };
    steps.check(0.0)?;
    let PdStepsizes { mu1, mu2, sigma, .. } = steps;

    let mut x = match x0 {
        Some(x0) => {
            check_len("solve_map x0", n_pix, x0.len())?;
            x0.as_slice().to_vec()
        }
        None => backprojection(phi, y, n)?.into_vec(),
    };
    project_box_in_place(&mut x, 0.0, 1.0);

    let ball = Ball2::new(y.to_vec(), epsilon);
    let mut v1 = vec![0.0; psi.out_len()];
    let mut v2 = vec![Complex64::new(0.0, 0.0); y.len()];
    let mut psi_x = psi.apply(&x)?;
    let mut phi_x = phi.apply(&x)?;
    let mut psi_bar = psi_x.clone();
    let mut phi_bar = phi_x.clone();
    let mut trace = SolverTrace::default();
    let mut converged = false;
    let mut iterations = 0;
    let mut feasible_run = 0usize;

    for k in 0..opts.max_iter {
        let w1: Vec<f64> = v1.iter().zip(&psi_bar).map(|(v, p)| v + mu1 * p).collect();
        v1 = moreau_dual_step(&w1, mu1, |z| soft_threshold(z, lambda / mu1));
        let w2: Vec<Complex64> = v2.iter().zip(&phi_bar).map(|(v, p)| v + p * mu2).collect();
        v2 = moreau_dual_step(&w2, mu2, |z| ball.project(z));

        let g1 = psi.adjoint(&v1)?;
        let g2 = phi.adjoint(&v2)?;
        let mut x_new: Vec<f64> = (0..n_pix).map(|i| x[i] - sigma * (g1[i] + g2[i])).collect();
        project_box_in_place(&mut x_new, 0.0, 1.0);
        if x_new.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence {
                iteration: k,
                what: "non-finite MAP iterate".into(),
            });
        }

        let psi_new = psi.apply(&x_new)?;
        let phi_new = phi.apply(&x_new)?;
        psi_bar = psi_new.iter().zip(&psi_x).map(|(a, b)| 2.0 * a - b).collect();
        phi_bar = phi_new.iter().zip(&phi_x).map(|(a, b)| a * 2.0 - b).collect();

        let change = rel_change(&x_new, &x);
        let residual = distance_c(&phi_new, y);
        trace.push(k + 1, residual, lambda * norm_l1(&psi_new), change);
        x = x_new;
        psi_x = psi_new;
        phi_x = phi_new;
        iterations = k + 1;
        if residual <= epsilon * (1.0 + opts.feas_tol) {
            feasible_run += 1;
        } else {
            feasible_run = 0;
        }
        if change <= opts.tol && feasible_run >= opts.feas_window.max(1) {
            converged = true;
            break;
        }
    }

    Ok(MapResult {
        x: Image::new(n, x)?,
        trace,
        iterations,
        converged,
        stepsizes: steps,
    })
}
