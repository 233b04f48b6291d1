//! RES-CLF `V_ε(η) = ηᵀP_εη`, its Lie derivatives, controller-set membership,
//! the pointwise min-norm auxiliary input and the extra state-based damping `u_s`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::output_dynamics::OutputDynamics;
use crate::riccati::ResClfCertificate;

#[derive(Debug, Clone, PartialEq)]
pub struct ClfEvaluation {
    pub v: f64,
    /// `ηᵀ(FᵀP_ε + P_εF)η`
    pub lf_v: f64,
    /// `2ηᵀP_εG`, stored as a column.
    pub lg_v: DVector<f64>,
}

/// Decay rate used in a membership test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ConvergenceRate {
    /// ES-CLF with a fixed constant `c`.
    Constant(f64),
    /// RES-CLF rate `γ/ε` taken from the certificate.
    Rapid,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Membership {
    pub member: bool,
    /// `L_F V + L_G V·μ + rate·V`; non-positive for members.
    pub slack: f64,
}

/// Which auxiliary input the closed loop applies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ControllerMode {
    MinNorm,
    MinNormPlusDamping { eps_bar: f64 },
}

/// A certificate bound to its output dynamics, with the quadratic forms the
/// controller needs precomputed.
#[derive(Debug, Clone)]
pub struct RapidClf {
    pub cert: ResClfCertificate,
    pub dynamics: OutputDynamics,
    lf_form: DMatrix<f64>,
    pg: DMatrix<f64>,
}

impl RapidClf {
    pub fn new(cert: ResClfCertificate, dynamics: OutputDynamics) -> Result<Self> {
        if cert.dims != dynamics.dims {
            return Err(Error::DimensionMismatch {
                expected: dynamics.n(),
                got: cert.p.nrows(),
            });
        }
        let lf_form = dynamics.f.transpose() * &cert.p_eps + &cert.p_eps * &dynamics.f;
        let pg = &cert.p_eps * &dynamics.g;
        Ok(Self {
            cert,
            dynamics,
            lf_form,
            pg,
        })
    }

    fn check_eta(&self, eta: &DVector<f64>) -> Result<()> {
        if eta.len() != self.dynamics.n() {
            return Err(Error::DimensionMismatch {
                expected: self.dynamics.n(),
                got: eta.len(),
            });
        }
        Ok(())
    }

    pub fn value(&self, eta: &DVector<f64>) -> f64 {
        eta.dot(&(&self.cert.p_eps * eta))
    }

    pub fn evaluate(&self, eta: &DVector<f64>) -> Result<ClfEvaluation> {
        self.check_eta(eta)?;
        Ok(ClfEvaluation {
            v: self.value(eta),
            lf_v: eta.dot(&(&self.lf_form * eta)),
            lg_v: self.pg.tr_mul(eta) * 2.0,
        })
    }

    /// Smallest-norm element of `K_ε(η)`:
    /// with `ψ0 = L_F V + (γ/ε)V` and `ψ1 = L_G Vᵀ`, `μ = 0` when `ψ0 ≤ 0`,
    /// otherwise `μ = −(ψ0/‖ψ1‖²)ψ1`.
    pub fn min_norm_mu(&self, eta: &DVector<f64>) -> Result<DVector<f64>> {
        let e = self.evaluate(eta)?;
        let psi0 = e.lf_v + self.cert.rate() * e.v;
        if psi0 <= 0.0 {
            return Ok(DVector::zeros(self.dynamics.m()));
        }
        let denom = e.lg_v.norm_squared();
        if denom == 0.0 {
            return Err(Error::Infeasible { psi0 });
        }
        Ok(e.lg_v * (-psi0 / denom))
    }

    pub fn membership(
        &self,
        eta: &DVector<f64>,
        mu: &DVector<f64>,
        rate: ConvergenceRate,
    ) -> Result<Membership> {
        let e = self.evaluate(eta)?;
        if mu.len() != self.dynamics.m() {
            return Err(Error::DimensionMismatch {
                expected: self.dynamics.m(),
                got: mu.len(),
            });
        }
        let c = match rate {
            ConvergenceRate::Constant(c) => c,
            ConvergenceRate::Rapid => self.cert.rate(),
        };
        let slack = e.lf_v + e.lg_v.dot(mu) + c * e.v;
        Ok(Membership {
            member: slack <= 0.0,
            slack,
        })
    }

    /// `u_s = −(1/(2ε̄)) GᵀP_εη`, contributing `−(1/ε̄)‖GᵀP_εη‖²` to `V̇_ε`.
    pub fn u_s_damping(&self, eta: &DVector<f64>, eps_bar: f64) -> Result<DVector<f64>> {
        if !(eps_bar > 0.0 && eps_bar <= 1.0) {
            return Err(Error::OutOfRange(format!("eps_bar = {eps_bar} not in (0, 1]")));
        }
        self.check_eta(eta)?;
        Ok(self.pg.tr_mul(eta) * (-0.5 / eps_bar))
    }

    /// `(μ, u_s)` for the given controller; `u_s` is zero in min-norm mode.
    pub fn auxiliary_input(
        &self,
        eta: &DVector<f64>,
        mode: ControllerMode,
    ) -> Result<(DVector<f64>, DVector<f64>)> {
        let mu = self.min_norm_mu(eta)?;
        let us = match mode {
            ControllerMode::MinNorm => DVector::zeros(self.dynamics.m()),
            ControllerMode::MinNormPlusDamping { eps_bar } => self.u_s_damping(eta, eps_bar)?,
        };
        Ok((mu, us))
    }

    /// `‖P_εG‖₂`, the gain of the disturbance channel in `V̇_ε`.
    pub fn pg_norm(&self) -> f64 {
        self.pg.clone().svd(false, false).singular_values.max()
    }

    /// `GᵀP_ε`, whose null space is where `L_G V_ε` vanishes.
    pub fn gt_p_eps(&self) -> DMatrix<f64> {
        self.pg.transpose()
    }
}

pub fn evaluate_clf(
    cert: &ResClfCertificate,
    dynamics: &OutputDynamics,
    eta: &DVector<f64>,
) -> Result<ClfEvaluation> {
    RapidClf::new(cert.clone(), dynamics.clone())?.evaluate(eta)
}

pub fn min_norm_mu(
    cert: &ResClfCertificate,
    dynamics: &OutputDynamics,
    eta: &DVector<f64>,
) -> Result<DVector<f64>> {
    RapidClf::new(cert.clone(), dynamics.clone())?.min_norm_mu(eta)
}

pub fn membership(
    cert: &ResClfCertificate,
    dynamics: &OutputDynamics,
    eta: &DVector<f64>,
    mu: &DVector<f64>,
    rate: ConvergenceRate,
) -> Result<Membership> {
    RapidClf::new(cert.clone(), dynamics.clone())?.membership(eta, mu, rate)
}

/// Membership in the time-based set `K^t_ε`: the same test with `η_t` in place of `η`.
pub fn time_based_membership(
    cert: &ResClfCertificate,
    dynamics: &OutputDynamics,
    eta_t: &DVector<f64>,
    mu_t: &DVector<f64>,
) -> Result<Membership> {
    membership(cert, dynamics, eta_t, mu_t, ConvergenceRate::Rapid)
}

pub fn u_s_damping(
    cert: &ResClfCertificate,
    dynamics: &OutputDynamics,
    eta: &DVector<f64>,
    eps_bar: f64,
) -> Result<DVector<f64>> {
    RapidClf::new(cert.clone(), dynamics.clone())?.u_s_damping(eta, eps_bar)
}
