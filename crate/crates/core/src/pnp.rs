//! Plug-and-play hypothesis test: minimize `h(x) = zeta/2 ||x - G(x)||^2`
//! over the credible region and compare the residual with that of the MAP.

use std::io::Write;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::bayes::{membership, CredibleRegion, Membership, DEFAULT_REL_TOL};
use crate::error::{check_len, Error, Result};
use crate::image::Image;
use crate::inpaint::Inpainter;
use crate::linalg::{distance_c, norm, norm_l1};
use crate::map_solver::{operator_norms_sq, rel_change};
use crate::operators::{LinearOperator, PowerOptions};
use crate::prox::{moreau_dual_step, project_box_in_place, project_l1_ball, Ball2};

/// `mu1 ||Psi||^2` as a fraction of `beta`.
pub const PSI_DUAL_SHARE: f64 = 0.1;
/// `mu2 ||Phi||^2` as a fraction of `beta`.
pub const PHI_DUAL_SHARE: f64 = 0.5;

/// Default test tolerance on `rho_alpha`.
pub const DEFAULT_TAU: f64 = 0.02;
/// Default credible-region confidence parameter.
pub const DEFAULT_ALPHA: f64 = 0.01;

/// `h(x)`, `grad h(x)` and `G(x)`.
#[derive(Debug, Clone)]
pub struct HGrad {
    pub h: f64,
    pub grad: Image,
    pub gx: Image,
}

/// `grad h(x) = zeta (r - J_G(x)^T r)` with `r = x - G(x)`: one forward and one VJP.
pub fn h_and_grad<G: Inpainter + ?Sized>(g: &G, x: &Image, zeta: f64) -> Result<HGrad> {
    let pass = g.forward(x)?;
    let r: Vec<f64> = x
        .as_slice()
        .iter()
        .zip(pass.output.as_slice())
        .map(|(a, b)| a - b)
        .collect();
    let r_img = Image::new(x.n(), r)?;
    let jt = g.vjp(&pass, &r_img)?;
    let grad: Vec<f64> = r_img
        .as_slice()
        .iter()
        .zip(jt.as_slice())
        .map(|(r, j)| zeta * (r - j))
        .collect();
    let rn = r_img.norm();
    Ok(HGrad {
        h: 0.5 * zeta * rn * rn,
        grad: Image::new(x.n(), grad)?,
        gx: pass.output,
    })
}

pub fn grad_h<G: Inpainter + ?Sized>(g: &G, x: &Image, zeta: f64) -> Result<Image> {
    Ok(h_and_grad(g, x, zeta)?.grad)
}

/// Power iteration on `v -> (grad h(z + d v) - grad h(z)) / d` with
/// `d = 1e-4 ||z|| / ||v||`, tracking `||H v||` for unit `v`.
fn hessian_norm<G: Inpainter + ?Sized>(g: &G, z: &Image, zeta: f64, opts: &PowerOptions) -> Result<f64> {
    let n = z.n();
    let base = grad_h(g, z, zeta)?;
    let zn = z.norm().max(1e-12);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let unit = Normal::new(0.0, 1.0).map_err(|e| Error::Domain(e.to_string()))?;
    let mut v: Vec<f64> = (0..z.len()).map(|_| unit.sample(&mut rng)).collect();
    let vn = norm(&v);
    v.iter_mut().for_each(|e| *e /= vn);
    let mut est = 0.0;
    for it in 0..opts.max_iter.max(1) {
        let d = 1e-4 * zn;
        let zp: Vec<f64> = z.as_slice().iter().zip(&v).map(|(a, b)| a + d * b).collect();
        let gp = grad_h(g, &Image::new(n, zp)?, zeta)?;
        let hv: Vec<f64> = gp
            .as_slice()
            .iter()
            .zip(base.as_slice())
            .map(|(a, b)| (a - b) / d)
            .collect();
        let next = norm(&hv);
        if !next.is_finite() {
            return Err(Error::Divergence {
                iteration: it,
                what: "non-finite Hessian-vector product".into(),
            });
        }
        if next == 0.0 {
            return Ok(0.0);
        }
        let done = it > 0 && (next - est).abs() <= opts.tol * next;
        est = next;
        if done {
            break;
        }
        v = hv.into_iter().map(|e| e / next).collect();
    }
    Ok(est)
}

/// Safety factor applied to the largest probed Hessian norm.
pub const BETA_SAFETY: f64 = 1.1;

/// Lipschitz estimate of `grad h`: the largest Hessian spectral norm over
/// `count` seeded Gaussian perturbations of `G(x_map)` (entrywise std
/// `sigma_perturb`), times [`BETA_SAFETY`].
pub fn estimate_beta<G: Inpainter + ?Sized>(
    g: &G,
    x_map: &Image,
    zeta: f64,
    sigma_perturb: f64,
    count: usize,
    seed: u64,
    power: &PowerOptions,
) -> Result<f64> {
    if count == 0 {
        return Err(Error::Config("beta estimation needs at least one perturbation".into()));
    }
    let gx = g.apply(x_map)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, sigma_perturb).map_err(|e| Error::Config(e.to_string()))?;
    let mut best: f64 = 0.0;
    for i in 0..count {
        let z: Vec<f64> = gx.as_slice().iter().map(|&v| v + noise.sample(&mut rng)).collect();
        let opts = PowerOptions {
            seed: power.seed.wrapping_add(i as u64),
            ..*power
        };
        best = best.max(hessian_norm(g, &Image::new(x_map.n(), z)?, zeta, &opts)?);
    }
    Ok(BETA_SAFETY * best)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PnpParams {
    pub zeta: f64,
    pub beta: f64,
    pub mu1: f64,
    pub mu2: f64,
    pub sigma: f64,
    pub norm_psi_sq: f64,
    pub norm_phi_sq: f64,
    pub perturb_std: f64,
    pub perturb_count: usize,
    pub seed: u64,
}

impl PnpParams {
    /// Estimates `beta` (`perturb_std = 0.01`, four perturbations) and the
    /// operator norms, then applies [`with_beta`](Self::with_beta).
    pub fn estimate<G, F, P>(g: &G, x_map: &Image, phi: &F, psi: &P, zeta: f64, seed: u64) -> Result<Self>
    where
        G: Inpainter + ?Sized,
        F: LinearOperator<Scalar = Complex64> + ?Sized,
        P: LinearOperator<Scalar = f64> + ?Sized,
    {
        let (perturb_std, perturb_count) = (0.01, 4);
        let beta = estimate_beta(g, x_map, zeta, perturb_std, perturb_count, seed, &PowerOptions::with_seed(seed))?;
        let (psi_sq, phi_sq) = operator_norms_sq(phi, psi, seed)?;
        Ok(Self::with_beta(zeta, beta, psi_sq, phi_sq, perturb_std, perturb_count, seed))
    }

    /// Dual steps proportional to `beta`: `mu1 ||Psi||^2 = 0.1 beta`,
    /// `mu2 ||Phi||^2 = 0.5 beta`, `sigma = 0.99 / (beta/2 + mu1 ||Psi||^2 + mu2 ||Phi||^2)`.
    /// Since `beta` is linear in `zeta`, the iterates do not depend on `zeta`.
    /// A vanishing `beta` falls back to unit scale.
    pub fn with_beta(
        zeta: f64,
        beta: f64,
        norm_psi_sq: f64,
        norm_phi_sq: f64,
        perturb_std: f64,
        perturb_count: usize,
        seed: u64,
    ) -> Self {
        let scale = if beta > 0.0 { beta } else { 1.0 };
        let mu1 = PSI_DUAL_SHARE * scale / norm_psi_sq.max(f64::MIN_POSITIVE);
        let mu2 = PHI_DUAL_SHARE * scale / norm_phi_sq.max(f64::MIN_POSITIVE);
        Self {
            zeta,
            beta,
            mu1,
            mu2,
            sigma: 0.99 / (beta / 2.0 + mu1 * norm_psi_sq + mu2 * norm_phi_sq),
            norm_psi_sq,
            norm_phi_sq,
            perturb_std,
            perturb_count,
            seed,
        }
    }

    pub fn check(&self) -> Result<()> {
        let margin = 1.0 / self.sigma - self.mu1 * self.norm_psi_sq - self.mu2 * self.norm_phi_sq;
        if self.sigma > 0.0 && self.mu1 > 0.0 && self.mu2 > 0.0 && margin > self.beta / 2.0 {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "stepsizes violate 1/sigma - mu1|Psi|^2 - mu2|Phi|^2 > beta/2: margin {margin}, beta {}",
                self.beta
            )))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PnpOptions {
    pub max_iter: usize,
    /// Relative-change threshold of the stopping rule.
    pub tol: f64,
    /// Region membership tolerance.
    pub rel_tol: f64,
}

impl Default for PnpOptions {
    fn default() -> Self {
        Self {
            max_iter: 5000,
            tol: 1e-3,
            rel_tol: DEFAULT_REL_TOL,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PnpTrace {
    pub iter: Vec<usize>,
    pub h_value: Vec<f64>,
    pub grad_norm: Vec<f64>,
    pub data_slack: Vec<f64>,
    pub l1_slack: Vec<f64>,
    pub rel_change: Vec<f64>,
}

impl PnpTrace {
    pub fn len(&self) -> usize {
        self.iter.len()
    }

    pub fn is_empty(&self) -> bool {
        self.iter.is_empty()
    }

    /// CSV with header `iter,h_value,grad_norm,data_slack,l1_slack,rel_change`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let io = |e: csv::Error| Error::Io(std::io::Error::other(e));
        out.write_record(["iter", "h_value", "grad_norm", "data_slack", "l1_slack", "rel_change"])
            .map_err(io)?;
        for k in 0..self.len() {
            out.write_record([
                self.iter[k].to_string(),
                self.h_value[k].to_string(),
                self.grad_norm[k].to_string(),
                self.data_slack[k].to_string(),
                self.l1_slack[k].to_string(),
                self.rel_change[k].to_string(),
            ])
            .map_err(io)?;
        }
        out.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct PnpResult {
    pub x: Image,
    /// `G(x)` at the returned point.
    pub gx: Image,
    pub h_value: f64,
    pub grad_norm: f64,
    pub membership: Membership,
    pub iterations: usize,
    pub converged: bool,
    pub trace: PnpTrace,
}

/// Primal-dual iteration for `min h(x)` over the credible region, started
/// at `G(x_map)`.
///
/// Stops once the iterate lies in the region (to `opts.rel_tol`) and moved
/// by at most `opts.tol` relative, or after `opts.max_iter` iterations.
#[allow(clippy::too_many_arguments)]
pub fn solve_pnp_buqo<G, F, P>(
    x_map: &Image,
    y: &[Complex64],
    region: &CredibleRegion,
    g: &G,
    phi: &F,
    psi: &P,
    params: &PnpParams,
    opts: &PnpOptions,
) -> Result<PnpResult>
where
    G: Inpainter + ?Sized,
    F: LinearOperator<Scalar = Complex64> + ?Sized,
    P: LinearOperator<Scalar = f64> + ?Sized,
{
    check_len("solve_pnp_buqo", phi.out_len(), y.len())?;
    params.check()?;
    let n = x_map.n();
    let n_pix = x_map.len();
    let PnpParams { mu1, mu2, sigma, zeta, .. } = *params;
    let ball = Ball2::new(y.to_vec(), region.epsilon);

    let mut x = g.apply(x_map)?.into_vec();
    project_box_in_place(&mut x, 0.0, 1.0);
    let mut psi_x = psi.apply(&x)?;
    let mut phi_x = phi.apply(&x)?;
    let mut psi_bar = psi_x.clone();
    let mut phi_bar = phi_x.clone();
    let mut v1 = vec![0.0; psi.out_len()];
    let mut v2 = vec![Complex64::new(0.0, 0.0); y.len()];
    let mut hg = h_and_grad(g, &Image::new(n, x.clone())?, zeta)?;
    let mut trace = PnpTrace::default();

    let mut mem = membership(
        &Image::new(n, x.clone())?,
        region,
        distance_c(&phi_x, y),
        norm_l1(&psi_x),
        opts.rel_tol,
    );
    let mut iterations = 0;
    let mut converged = false;

    for k in 0..opts.max_iter {
        let w1: Vec<f64> = v1.iter().zip(&psi_bar).map(|(v, p)| v + mu1 * p).collect();
        v1 = moreau_dual_step(&w1, mu1, |z| project_l1_ball(z, region.l1_radius));
        let w2: Vec<Complex64> = v2.iter().zip(&phi_bar).map(|(v, p)| v + p * mu2).collect();
        v2 = moreau_dual_step(&w2, mu2, |z| ball.project(z));

        let g1 = psi.adjoint(&v1)?;
        let g2 = phi.adjoint(&v2)?;
        let gh = hg.grad.as_slice();
        let mut x_new: Vec<f64> = (0..n_pix)
            .map(|i| x[i] - sigma * (gh[i] + g1[i] + g2[i]))
            .collect();
        project_box_in_place(&mut x_new, 0.0, 1.0);
        if x_new.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence {
                iteration: k,
                what: "non-finite PnP iterate".into(),
            });
        }
        let psi_new = psi.apply(&x_new)?;
        let phi_new = phi.apply(&x_new)?;
        psi_bar = psi_new.iter().zip(&psi_x).map(|(a, b)| 2.0 * a - b).collect();
        phi_bar = phi_new.iter().zip(&phi_x).map(|(a, b)| a * 2.0 - b).collect();

        let change = rel_change(&x_new, &x);
        let x_img = Image::new(n, x_new.clone())?;
        hg = h_and_grad(g, &x_img, zeta)?;
        if !hg.h.is_finite() {
            return Err(Error::Divergence {
                iteration: k,
                what: "non-finite h".into(),
            });
        }
        mem = membership(&x_img, region, distance_c(&phi_new, y), norm_l1(&psi_new), opts.rel_tol);
        trace.iter.push(k + 1);
        trace.h_value.push(hg.h);
        trace.grad_norm.push(hg.grad.norm());
        trace.data_slack.push(mem.data_slack);
        trace.l1_slack.push(mem.l1_slack);
        trace.rel_change.push(change);

        x = x_new;
        psi_x = psi_new;
        phi_x = phi_new;
        iterations = k + 1;
        if mem.inside && change <= opts.tol {
            converged = true;
            break;
        }
    }

    let grad_norm = hg.grad.norm();
    Ok(PnpResult {
        x: Image::new(n, x)?,
        gx: hg.gx,
        h_value: hg.h,
        grad_norm,
        membership: mem,
        iterations,
        converged,
        trace,
    })
}

/// `||x_test - G(x_test)|| / ||x_map - G(x_map)||`.
pub fn rho_alpha<G: Inpainter + ?Sized>(x_map: &Image, x_test: &Image, g: &G) -> Result<f64> {
    x_map.check_same(x_test, "rho_alpha")?;
    let den = x_map.distance(&g.apply(x_map)?);
    if !(den > 0.0) {
        return Err(Error::DegenerateStructure(
            "the MAP is a fixed point of the inpainting operator; no structure to test".into(),
        ));
    }
    Ok((x_test.distance(&g.apply(x_test)?) / den).max(0.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    /// The structure is supported by the data at level alpha.
    #[serde(rename = "reject_H0")]
    RejectH0,
    /// The test cannot conclude; never read as acceptance of H0.
    Inconclusive,
}

impl Decision {
    pub fn as_str(self) -> &'static str {
        match self {
            Decision::RejectH0 => "reject_H0",
            Decision::Inconclusive => "inconclusive",
        }
    }
}

/// Rejects `H0` iff `rho > tau`.
pub fn decide(rho: f64, tau: f64, alpha: f64) -> Result<Decision> {
    if !(tau > 0.0 && tau < 1.0) {
        return Err(Error::Config(format!("tau must lie in (0, 1), got {tau}")));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Config(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    if !(rho >= 0.0) {
        return Err(Error::Domain(format!("rho must be non-negative, got {rho}")));
    }
    Ok(if rho > tau {
        Decision::RejectH0
    } else {
        Decision::Inconclusive
    })
}
