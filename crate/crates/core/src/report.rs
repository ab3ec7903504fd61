//! Serializable summary of one hypothesis test.

use serde::{Deserialize, Serialize};

use crate::bayes::CredibleRegion;
use crate::buqo::{BuqoResult, BuqoStepsizes};
use crate::error::{Error, Result};
use crate::inpaint::InpainterKind;
use crate::pnp::{decide, Decision, PnpParams, PnpResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestMode {
    Buqo,
    Pnp,
}

impl std::str::FromStr for TestMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "buqo" => Ok(Self::Buqo),
            "pnp" => Ok(Self::Pnp),
            other => Err(Error::Config(format!("unknown test mode '{other}'"))),
        }
    }
}

/// Constraint slacks at the returned point, as ratios to their bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FinalSlacks {
    pub data_slack: f64,
    pub l1_slack: f64,
    pub box_violation: f64,
    pub h_value: f64,
    pub grad_norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum SolverEcho {
    Pnp {
        params: PnpParams,
    },
    Buqo {
        stepsizes: BuqoStepsizes,
        gamma: f64,
        tau_box: f64,
        theta: f64,
        /// `||x_C - x_S||` at termination.
        distance: f64,
        /// `|Lbar x_S|_inf` at termination.
        defect_inf: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub mode: TestMode,
    pub inpainter: InpainterKind,
    pub alpha: f64,
    pub tau: f64,
    pub rho_alpha: f64,
    pub decision: Decision,
    pub iterations: usize,
    pub converged: bool,
    pub slacks: FinalSlacks,
    pub region: CredibleRegion,
    pub solver: SolverEcho,
    pub seed: u64,
}

impl TestReport {
    #[allow(clippy::too_many_arguments)]
    pub fn from_pnp(
        result: &PnpResult,
        rho: f64,
        tau: f64,
        region: &CredibleRegion,
        params: &PnpParams,
        inpainter: InpainterKind,
        seed: u64,
    ) -> Result<Self> {
        Ok(Self {
            mode: TestMode::Pnp,
            inpainter,
            alpha: region.alpha,
            tau,
            rho_alpha: rho,
            decision: decide(rho, tau, region.alpha)?,
            iterations: result.iterations,
            converged: result.converged,
            slacks: FinalSlacks {
                data_slack: result.membership.data_slack,
                l1_slack: result.membership.l1_slack,
                box_violation: result.membership.box_violation,
                h_value: result.h_value,
                grad_norm: result.grad_norm,
            },
            region: *region,
            solver: SolverEcho::Pnp { params: *params },
            seed,
        })
    }

    /// `h_value` and `grad_norm` are those of `h` built on the linear rule at `x_C`.
    #[allow(clippy::too_many_arguments)]
    pub fn from_buqo(
        result: &BuqoResult,
        h_value: f64,
        grad_norm: f64,
        tau: f64,
        region: &CredibleRegion,
        params: &crate::buqo::BuqoParams,
        inpainter: InpainterKind,
        seed: u64,
    ) -> Self {
        Self {
            mode: TestMode::Buqo,
            inpainter,
            alpha: region.alpha,
            tau,
            rho_alpha: result.rho,
            decision: result.decision,
            iterations: result.iterations,
            converged: result.converged,
            slacks: FinalSlacks {
                data_slack: result.membership.data_slack,
                l1_slack: result.membership.l1_slack,
                box_violation: result.membership.box_violation,
                h_value,
                grad_norm,
            },
            region: *region,
            solver: SolverEcho::Buqo {
                stepsizes: result.stepsizes,
                gamma: params.gamma,
                tau_box: params.tau_box,
                theta: params.theta,
                distance: result.distance,
                defect_inf: result.defect_inf,
            },
            seed,
        }
    }
}
