//! Two-image hypothesis test: find the closest pair `(x_C, x_S)` with `x_C`
//! in the credible region and `x_S` in a structure-free set built from a
//! linear inpainting rule.

use std::io::Write;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::bayes::{membership, CredibleRegion, Membership, DEFAULT_REL_TOL};
use crate::error::{check_len, Error, Result};
use crate::image::{Image, StructureMask};
use crate::inpaint::LinearInpainter;
use crate::linalg::{distance, distance_c, norm, norm_inf, norm_l1};
use crate::map_solver::{operator_norms_sq, rel_change};
use crate::operators::{spectral_norm, LinearOperator, OperatorKind, PowerOptions};
use crate::pnp::{decide, Decision};
use crate::prox::{moreau_dual_step, project_box, project_box_in_place, project_l1_ball, Ball2};

/// `Lbar x = M x - L M^c x`, mapping images to mask-length vectors.
pub struct StructureDefect<'a, L: LinearInpainter + ?Sized> {
    l: &'a L,
    mask: StructureMask,
}

impl<'a, L: LinearInpainter + ?Sized> StructureDefect<'a, L> {
    pub fn new(l: &'a L) -> Self {
        Self {
            mask: l.inpaint_mask().clone(),
            l,
        }
    }
}

impl<L: LinearInpainter + ?Sized> LinearOperator for StructureDefect<'_, L> {
    type Scalar = f64;

    fn kind(&self) -> OperatorKind {
        OperatorKind::Composite
    }
    fn in_len(&self) -> usize {
        self.mask.pixels().len()
    }
    fn out_len(&self) -> usize {
        self.mask.n_m()
    }

    fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_len("StructureDefect::apply", self.in_len(), x.len())?;
        let comp: Vec<f64> = self.mask.complement_set().iter().map(|&k| x[k]).collect();
        let fill = self.l.apply(&comp)?;
        Ok(self.mask.index_set().iter().zip(fill).map(|(&k, f)| x[k] - f).collect())
    }

    fn adjoint(&self, u: &[f64]) -> Result<Vec<f64>> {
        check_len("StructureDefect::adjoint", self.out_len(), u.len())?;
        let mut out = vec![0.0; self.in_len()];
        for (&k, &v) in self.mask.index_set().iter().zip(u) {
            out[k] = v;
        }
        for (&k, b) in self.mask.complement_set().iter().zip(self.l.adjoint(u)?) {
            out[k] = -b;
        }
        Ok(out)
    }
}

/// Structure-free set `S = {x in [0,1]^N : |Lbar x|_inf <= tau, ||M x - center|| <= theta}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuqoParams {
    pub gamma: f64,
    pub tau_box: f64,
    pub center: Vec<f64>,
    pub theta: f64,
}

/// `center = L M^c x_map`, `theta = 0.1 ||M x_map - center||`, `tau = 0.01`, `gamma = 1`.
pub fn default_buqo_params<L: LinearInpainter + ?Sized>(x_map: &Image, l: &L) -> Result<BuqoParams> {
    let mask = l.inpaint_mask();
    mask.check_image(x_map, "default_buqo_params")?;
    if mask.is_empty() {
        return Err(Error::Config("empty structure mask".into()));
    }
    let xs = x_map.as_slice();
    let comp: Vec<f64> = mask.complement_set().iter().map(|&k| xs[k]).collect();
    let center = l.apply(&comp)?;
    let on_mask: Vec<f64> = mask.index_set().iter().map(|&k| xs[k]).collect();
    Ok(BuqoParams {
        gamma: 1.0,
        tau_box: 0.01,
        theta: 0.1 * distance(&on_mask, &center),
        center,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BuqoStepsizes {
    pub mu11: f64,
    pub mu12: f64,
    pub mu21: f64,
    pub mu22: f64,
    pub sigma: f64,
    pub norm_psi_sq: f64,
    pub norm_phi_sq: f64,
    pub norm_lbar_sq: f64,
}

impl BuqoStepsizes {
    /// Dual steps scaled so that `mu11 |Psi|^2 = 0.2 gamma`, `mu12 |Phi|^2 = gamma`,
    /// `mu21 |Lbar|^2 = gamma` and `mu22 = gamma`, with
    /// `sigma = 0.99 / (gamma/2 + mu11 |Psi|^2 + mu12 |Phi|^2 + mu21 |Lbar|^2 + mu22)`.
    /// Scaling every dual step with `gamma` makes the iterates independent of it.
    pub fn new(gamma: f64, norm_psi_sq: f64, norm_phi_sq: f64, norm_lbar_sq: f64) -> Self {
        let inv = |v: f64| if v > 0.0 { 1.0 / v } else { 1.0 };
        let mu11 = 0.2 * gamma * inv(norm_psi_sq);
        let mu12 = gamma * inv(norm_phi_sq);
        let mu21 = gamma * inv(norm_lbar_sq);
        let mu22 = gamma;
        let sum = gamma / 2.0 + mu11 * norm_psi_sq + mu12 * norm_phi_sq + mu21 * norm_lbar_sq + mu22;
        Self {
            mu11,
            mu12,
            mu21,
            mu22,
            sigma: 0.99 / sum,
            norm_psi_sq,
            norm_phi_sq,
            norm_lbar_sq,
        }
    }

    pub fn estimate<F, P, L>(phi: &F, psi: &P, lbar: &L, gamma: f64, seed: u64) -> Result<Self>
    where
        F: LinearOperator<Scalar = Complex64> + ?Sized,
        P: LinearOperator<Scalar = f64> + ?Sized,
        L: LinearOperator<Scalar = f64> + ?Sized,
    {
        let (psi_sq, phi_sq) = operator_norms_sq(phi, psi, seed)?;
        let lb = if lbar.out_len() == 0 {
            0.0
        } else {
            spectral_norm(lbar, &PowerOptions::with_seed(seed.wrapping_add(2)))?
        };
        Ok(Self::new(gamma, psi_sq, phi_sq, lb * lb))
    }

    pub fn check(&self, gamma: f64) -> Result<()> {
        let margin = 1.0 / self.sigma
            - self.mu11 * self.norm_psi_sq
            - self.mu12 * self.norm_phi_sq
            - self.mu21 * self.norm_lbar_sq
            - self.mu22;
        if self.sigma > 0.0 && margin > gamma / 2.0 {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "BUQO stepsizes violate the convergence bound: margin {margin}, gamma {gamma}"
            )))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BuqoOptions {
    pub max_iter: usize,
    pub tol: f64,
    pub rel_tol: f64,
    pub seed: u64,
}

impl Default for BuqoOptions {
    fn default() -> Self {
        Self {
            max_iter: 20_000,
            tol: 1e-3,
            rel_tol: DEFAULT_REL_TOL,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BuqoTrace {
    pub iter: Vec<usize>,
    pub distance: Vec<f64>,
    pub data_slack: Vec<f64>,
    pub l1_slack: Vec<f64>,
    pub defect_inf: Vec<f64>,
    pub rel_change: Vec<f64>,
}

impl BuqoTrace {
    pub fn len(&self) -> usize {
        self.iter.len()
    }

    pub fn is_empty(&self) -> bool {
        self.iter.is_empty()
    }

    /// CSV with header `iter,distance,data_slack,l1_slack,defect_inf,rel_change`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let io = |e: csv::Error| Error::Io(std::io::Error::other(e));
        out.write_record(["iter", "distance", "data_slack", "l1_slack", "defect_inf", "rel_change"])
            .map_err(io)?;
        for k in 0..self.len() {
            out.write_record([
                self.iter[k].to_string(),
                self.distance[k].to_string(),
                self.data_slack[k].to_string(),
                self.l1_slack[k].to_string(),
                self.defect_inf[k].to_string(),
                self.rel_change[k].to_string(),
            ])
            .map_err(io)?;
        }
        out.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct BuqoResult {
    pub x_c: Image,
    pub x_s: Image,
    pub distance: f64,
    pub rho: f64,
    pub decision: Decision,
    pub membership: Membership,
    /// `|Lbar x_S|_inf` at termination.
    pub defect_inf: f64,
    /// `||M x_S - center||` at termination.
    pub energy_dist: f64,
    pub iterations: usize,
    pub converged: bool,
    pub stepsizes: BuqoStepsizes,
    pub trace: BuqoTrace,
}

/// Primal-dual iteration for `min gamma/2 ||x_C - x_S||^2` over
/// `x_C in C` and `x_S in S`. Starts at `x_C = x_map` and `x_S` the
/// inpainted MAP, and reports `rho = ||x_C - x_S|| / ||x_map - x_S^0||`.
///
/// Stops when the joint relative change is at most `opts.tol` while both
/// images satisfy their constraints to `opts.rel_tol`.
#[allow(clippy::too_many_arguments)]
pub fn solve_buqo<F, P, L>(
    x_map: &Image,
    y: &[Complex64],
    region: &CredibleRegion,
    l: &L,
    phi: &F,
    psi: &P,
    params: &BuqoParams,
    tau: f64,
    opts: &BuqoOptions,
) -> Result<BuqoResult>
where
    F: LinearOperator<Scalar = Complex64> + ?Sized,
    P: LinearOperator<Scalar = f64> + ?Sized,
    L: LinearInpainter + ?Sized,
{
    check_len("solve_buqo", phi.out_len(), y.len())?;
    let mask = l.inpaint_mask().clone();
    mask.check_image(x_map, "solve_buqo")?;
    check_len("solve_buqo center", mask.n_m(), params.center.len())?;
    if mask.is_empty() {
        return Err(Error::Config("empty structure mask".into()));
    }
    if !(params.gamma > 0.0 && params.tau_box >= 0.0 && params.theta >= 0.0) {
        return Err(Error::Config("gamma must be positive, tau and theta non-negative".into()));
    }
    let n = x_map.n();
    let n_pix = x_map.len();
    let lbar = StructureDefect::new(l);
    let steps = BuqoStepsizes::estimate(phi, psi, &lbar, params.gamma, opts.seed)?;
    steps.check(params.gamma)?;
    let BuqoStepsizes {
        mu11,
        mu12,
        mu21,
        mu22,
        sigma,
        ..
    } = steps;
    let gamma = params.gamma;
    let data_ball = Ball2::new(y.to_vec(), region.epsilon);
    let energy_ball = Ball2::new(params.center.clone(), params.theta);
    let on_mask = |x: &[f64]| -> Vec<f64> { mask.index_set().iter().map(|&k| x[k]).collect() };

    let mut xc = x_map.as_slice().to_vec();
    let mut xs = xc.clone();
    for (&k, &c) in mask.index_set().iter().zip(&params.center) {
        xs[k] = c;
    }
    project_box_in_place(&mut xs, 0.0, 1.0);
    let initial_gap = distance(&xc, &xs);

    let mut psi_c = psi.apply(&xc)?;
    let mut phi_c = phi.apply(&xc)?;
    let mut lb_s = lbar.apply(&xs)?;
    let mut m_s = on_mask(&xs);
    let (mut psi_bar, mut phi_bar, mut lb_bar, mut m_bar) =
        (psi_c.clone(), phi_c.clone(), lb_s.clone(), m_s.clone());
    let mut v1 = vec![0.0; psi.out_len()];
    let mut v2 = vec![Complex64::new(0.0, 0.0); y.len()];
    let mut u1 = vec![0.0; mask.n_m()];
    let mut u2 = vec![0.0; mask.n_m()];
    let mut trace = BuqoTrace::default();
    let mut iterations = 0;
    let mut converged = false;
    let tau_box = params.tau_box;

    for k in 0..opts.max_iter {
        let w: Vec<f64> = v1.iter().zip(&psi_bar).map(|(v, p)| v + mu11 * p).collect();
        v1 = moreau_dual_step(&w, mu11, |z| project_l1_ball(z, region.l1_radius));
        let w: Vec<Complex64> = v2.iter().zip(&phi_bar).map(|(v, p)| v + p * mu12).collect();
        v2 = moreau_dual_step(&w, mu12, |z| data_ball.project(z));
        let w: Vec<f64> = u1.iter().zip(&lb_bar).map(|(v, p)| v + mu21 * p).collect();
        u1 = moreau_dual_step(&w, mu21, |z| project_box(z, -tau_box, tau_box));
        let w: Vec<f64> = u2.iter().zip(&m_bar).map(|(v, p)| v + mu22 * p).collect();
        u2 = moreau_dual_step(&w, mu22, |z| energy_ball.project(z));

        let g1 = psi.adjoint(&v1)?;
        let g2 = phi.adjoint(&v2)?;
        let h1 = lbar.adjoint(&u1)?;
        let mut c_new: Vec<f64> = (0..n_pix)
            .map(|i| xc[i] - sigma * (gamma * (xc[i] - xs[i]) + g1[i] + g2[i]))
            .collect();
        let mut s_new: Vec<f64> = (0..n_pix)
            .map(|i| xs[i] - sigma * (gamma * (xs[i] - xc[i]) + h1[i]))
            .collect();
        for (&kk, &u) in mask.index_set().iter().zip(&u2) {
            s_new[kk] -= sigma * u;
        }
        project_box_in_place(&mut c_new, 0.0, 1.0);
        project_box_in_place(&mut s_new, 0.0, 1.0);
        if c_new.iter().chain(&s_new).any(|v| !v.is_finite()) {
            return Err(Error::Divergence {
                iteration: k,
                what: "non-finite BUQO iterate".into(),
            });
        }

        let psi_n = psi.apply(&c_new)?;
        let phi_n = phi.apply(&c_new)?;
        let lb_n = lbar.apply(&s_new)?;
        let m_n = on_mask(&s_new);
        psi_bar = psi_n.iter().zip(&psi_c).map(|(a, b)| 2.0 * a - b).collect();
        phi_bar = phi_n.iter().zip(&phi_c).map(|(a, b)| a * 2.0 - b).collect();
        lb_bar = lb_n.iter().zip(&lb_s).map(|(a, b)| 2.0 * a - b).collect();
        m_bar = m_n.iter().zip(&m_s).map(|(a, b)| 2.0 * a - b).collect();

        let num = distance(&c_new, &xc).hypot(distance(&s_new, &xs));
        let den = norm(&xc).hypot(norm(&xs));
        let change = if den > 0.0 { num / den } else { rel_change(&c_new, &xc) };

        xc = c_new;
        xs = s_new;
        psi_c = psi_n;
        phi_c = phi_n;
        lb_s = lb_n;
        m_s = m_n;
        iterations = k + 1;

        let mem = membership(
            &Image::new(n, xc.clone())?,
            region,
            distance_c(&phi_c, y),
            norm_l1(&psi_c),
            opts.rel_tol,
        );
        let defect = norm_inf(&lb_s);
        let edist = distance(&m_s, &params.center);
        trace.iter.push(iterations);
        trace.distance.push(distance(&xc, &xs));
        trace.data_slack.push(mem.data_slack);
        trace.l1_slack.push(mem.l1_slack);
        trace.defect_inf.push(defect);
        trace.rel_change.push(change);

        let s_ok = defect <= tau_box * (1.0 + opts.rel_tol) + 1e-12
            && edist <= params.theta * (1.0 + opts.rel_tol) + 1e-12;
        if change <= opts.tol && mem.inside && s_ok {
            converged = true;
            break;
        }
    }

    let x_c = Image::new(n, xc)?;
    let x_s = Image::new(n, xs)?;
    let mem = membership(&x_c, region, distance_c(&phi_c, y), norm_l1(&psi_c), opts.rel_tol);
    let dist = x_c.distance(&x_s);
    // A MAP that already lies in S has nothing to test.
    let rho = if initial_gap > 0.0 { dist / initial_gap } else { 0.0 };
    Ok(BuqoResult {
        decision: decide(rho, tau, region.alpha)?,
        defect_inf: norm_inf(&lb_s),
        energy_dist: distance(&m_s, &params.center),
        x_c,
        x_s,
        distance: dist,
        rho,
        membership: mem,
        iterations,
        converged,
        stepsizes: steps,
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inpaint::build_onion_inpainter;
    use crate::linalg::dot;

    #[test]
    fn defect_adjoint() {
        let mask = StructureMask::disk(9, 4.0, 4.0, 2.0).unwrap();
        let l = build_onion_inpainter(&mask).unwrap();
        let op = StructureDefect::new(&l);
        let x: Vec<f64> = (0..81).map(|i| ((i * 37) % 17) as f64 / 17.0 - 0.4).collect();
        let u: Vec<f64> = (0..mask.n_m()).map(|i| (i as f64 * 0.7).sin()).collect();
        let lhs = dot(&op.apply(&x).unwrap(), &u);
        let rhs = dot(&x, &op.adjoint(&u).unwrap());
        assert!((lhs - rhs).abs() < 1e-12 * (1.0 + lhs.abs()));
    }

    #[test]
    fn defect_vanishes_on_inpainted_images() {
        let mask = StructureMask::disk(9, 4.0, 4.0, 2.0).unwrap();
        let l = build_onion_inpainter(&mask).unwrap();
        let x = Image::from_fn(9, |i, j| (i as f64 * 0.3).cos() * (j as f64 * 0.2).sin());
        let gx = crate::inpaint::Inpainter::apply(&l, &x).unwrap();
        let d = StructureDefect::new(&l).apply(gx.as_slice()).unwrap();
        assert!(norm_inf(&d) < 1e-14);
    }
}
