//! End-to-end steps shared by the commands and the acceptance suite.

use num_complex::Complex64;
use pnp_buqo::bayes::{in_credible_region, CredibleRegion};
use pnp_buqo::buqo::{default_buqo_params, solve_buqo, BuqoOptions};
use pnp_buqo::inpaint::{CnnWeights, InpainterKind, InpaintingOperator, Inpainter};
use pnp_buqo::map_solver::{solve_map, MapOptions, MapResult};
use pnp_buqo::operators::{make_gradient_op, FourierOperator, GradientOperator, SamplingPattern};
use pnp_buqo::pnp::{h_and_grad, rho_alpha, solve_pnp_buqo, Decision, PnpOptions, PnpParams};
use pnp_buqo::report::{TestMode, TestReport};
use pnp_buqo::sim::{generate_phantom, inject_artifact, simulate_measurements, Phantom, SimulatedData, StructureSpec};
use pnp_buqo::{Error, Image, Result, StructureMask};
use serde::{Deserialize, Serialize};

/// Everything needed to regenerate one simulated acquisition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimSpec {
    pub n: usize,
    /// Acquisition angles at the 128 x 128 reference grid.
    pub angles: usize,
    pub isnr: f64,
    pub amplitude: f64,
    pub phantom_seed: u64,
    /// Noise seed.
    pub seed: u64,
}

pub struct Simulation {
    pub phantom: Phantom,
    pub phi: FourierOperator,
    pub psi: GradientOperator,
    pub data: SimulatedData,
}

impl Simulation {
    /// The first structure mask.
    pub fn mask(&self) -> Result<&StructureMask> {
        self.phantom
            .structures
            .first()
            .map(|(m, _)| m)
            .ok_or_else(|| Error::DegenerateStructure("the phantom has no structure".into()))
    }
}

pub fn operators(n: usize, angles: usize) -> Result<(FourierOperator, GradientOperator)> {
    let pattern = SamplingPattern::reference_equivalent(n, angles)?;
    Ok((FourierOperator::new(&pattern), make_gradient_op(n)?))
}

pub fn simulate(spec: &SimSpec) -> Result<Simulation> {
    let structures = StructureSpec { amplitude: spec.amplitude, ..Default::default() };
    let phantom = generate_phantom(spec.n, &structures, spec.phantom_seed)?;
    let (phi, psi) = operators(spec.n, spec.angles)?;
    let data = simulate_measurements(&phantom.image, &phi, spec.isnr, spec.seed)?;
    Ok(Simulation { phantom, phi, psi, data })
}

/// MAP run; `feasible` is the acceptance check on the returned point.
pub struct MapOutcome {
    pub result: MapResult,
    pub residual: f64,
    pub feasible: bool,
}

pub fn map_estimate(
    y: &[Complex64],
    phi: &FourierOperator,
    psi: &GradientOperator,
    lambda: f64,
    epsilon: f64,
    opts: &MapOptions,
) -> Result<MapOutcome> {
    let result = solve_map(y, phi, psi, lambda, epsilon, opts, None)?;
    let residual = result.final_residual();
    let in_box = result.x.as_slice().iter().all(|v| (0.0..=1.0).contains(v));
    let feasible = in_box && residual <= epsilon * (1.0 + opts.feas_tol);
    Ok(MapOutcome { result, residual, feasible })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestSettings {
    pub mode: TestMode,
    pub op: InpainterKind,
    pub lambda: f64,
    pub alpha: f64,
    pub tau: f64,
    pub zeta: f64,
    pub gamma: f64,
    pub max_iter: Option<usize>,
    pub tol: Option<f64>,
    pub seed: u64,
}

impl Default for TestSettings {
    fn default() -> Self {
        Self {
            mode: TestMode::Pnp,
            op: InpainterKind::Harmonic,
            lambda: 1.0,
            alpha: pnp_buqo::pnp::DEFAULT_ALPHA,
            tau: pnp_buqo::pnp::DEFAULT_TAU,
            zeta: 1.0,
            gamma: 1.0,
            max_iter: None,
            tol: None,
            seed: 0,
        }
    }
}

pub struct TestOutcome {
    pub report: TestReport,
    /// `x_C` for BUQO, `x_test` for PnP.
    pub x_test: Image,
    pub g_x_test: Image,
    pub g_x_map: Image,
    pub trace_csv: Vec<u8>,
}

/// Runs the selected hypothesis test on a MAP estimate.
#[allow(clippy::too_many_arguments)]
pub fn run_test(
    x_map: &Image,
    y: &[Complex64],
    epsilon: f64,
    mask: &StructureMask,
    weights: Option<CnnWeights>,
    phi: &FourierOperator,
    psi: &GradientOperator,
    s: &TestSettings,
) -> Result<TestOutcome> {
    let g = InpaintingOperator::build(s.op, mask, weights)?;
    let region = CredibleRegion::from_map(x_map, psi, s.lambda, epsilon, s.alpha)?;
    let g_x_map = g.apply(x_map)?;
    let mut trace_csv = Vec::new();
    match s.mode {
        TestMode::Pnp => {
            let params = PnpParams::estimate(&g, x_map, phi, psi, s.zeta, s.seed)?;
            params.check()?;
            let mut opts = PnpOptions::default();
            if let Some(m) = s.max_iter {
                opts.max_iter = m;
            }
            if let Some(t) = s.tol {
                opts.tol = t;
            }
            let res = solve_pnp_buqo(x_map, y, &region, &g, phi, psi, &params, &opts)?;
            let rho = rho_alpha(x_map, &res.x, &g)?;
            res.trace.write_csv(&mut trace_csv)?;
            let report = TestReport::from_pnp(&res, rho, s.tau, &region, &params, s.op, s.seed)?;
            Ok(TestOutcome { report, g_x_test: res.gx.clone(), x_test: res.x, g_x_map, trace_csv })
        }
        TestMode::Buqo => {
            let l = g.linear().ok_or_else(|| {
                Error::Config("the buqo test needs a linear inpainter (onion or harmonic)".into())
            })?;
            let mut params = default_buqo_params(x_map, l)?;
            params.gamma = s.gamma;
            let mut opts = BuqoOptions { seed: s.seed, ..Default::default() };
            if let Some(m) = s.max_iter {
                opts.max_iter = m;
            }
            if let Some(t) = s.tol {
                opts.tol = t;
            }
            let res = solve_buqo(x_map, y, &region, l, phi, psi, &params, s.tau, &opts)?;
            let hg = h_and_grad(&g, &res.x_c, 1.0)?;
            res.trace.write_csv(&mut trace_csv)?;
            let report = TestReport::from_buqo(&res, hg.h, hg.grad.norm(), s.tau, &region, &params, s.op, s.seed);
            Ok(TestOutcome { report, x_test: res.x_c, g_x_test: hg.gx, g_x_map, trace_csv })
        }
    }
}

/// Membership check used by reports and tests.
pub fn region_membership(
    x: &Image,
    region: &CredibleRegion,
    phi: &FourierOperator,
    psi: &GradientOperator,
    y: &[Complex64],
) -> Result<pnp_buqo::bayes::Membership> {
    in_credible_region(x, region, phi, psi, y, pnp_buqo::bayes::DEFAULT_REL_TOL)
}

/// One sweep cell: simulate, estimate the MAP, run the test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub angles: usize,
    pub isnr: f64,
    pub seed: u64,
    pub rho_alpha: f64,
    pub decision: Decision,
    pub iterations: usize,
    pub map_iterations: usize,
    pub map_feasible: bool,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSpec {
    pub sim: SimSpec,
    /// Checkerboard amplitude injected into the MAP inside the mask; 0 disables.
    pub artifact: f64,
    pub map: MapOptions,
    pub test: TestSettings,
}

pub fn run_cell(cell: &CellSpec, weights: Option<&CnnWeights>) -> Result<CellResult> {
    let sim = simulate(&cell.sim)?;
    let mask = sim.mask()?.clone();
    let map = map_estimate(&sim.data.y, &sim.phi, &sim.psi, cell.test.lambda, sim.data.epsilon, &cell.map)?;
    let x_map = if cell.artifact != 0.0 {
        inject_artifact(&map.result.x, &mask, cell.artifact)?
    } else {
        map.result.x.clone()
    };
    let out = run_test(&x_map, &sim.data.y, sim.data.epsilon, &mask, weights.cloned(), &sim.phi, &sim.psi, &cell.test)?;
    Ok(CellResult {
        angles: cell.sim.angles,
        isnr: cell.sim.isnr,
        seed: cell.sim.seed,
        rho_alpha: out.report.rho_alpha,
        decision: out.report.decision,
        iterations: out.report.iterations,
        map_iterations: map.result.iterations,
        map_feasible: map.feasible,
        converged: out.report.converged,
    })
}
