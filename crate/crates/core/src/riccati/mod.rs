//! Riccati synthesis of the RES-CLF certificate.
//!
//! `solve_care` runs Newton–Kleinman on `FᵀP + PF − PGGᵀP + Q = 0`. The
//! certificate then applies the block scaling
//! `M = diag(I_k1, (1/ε) I_k2, I_k2)`, under which `P_ε = MPM` and `Q_ε = MQM`
//! satisfy `FᵀP_ε + P_εF − (1/ε)P_εGGᵀP_ε + (1/ε)Q_ε = 0` identically.

mod eig;
mod lyapunov;

pub use eig::{asymmetry, sym_eig, SymEig};
pub use lyapunov::solve_lyapunov;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::output_dynamics::{OutputDims, OutputDynamics};
use crate::serde_mat;

pub const DEFAULT_MAX_NEWTON_ITERATIONS: usize = 100;
/// Required bound on both Riccati residuals (Frobenius norm).
pub const RESIDUAL_TOL: f64 = 1e-10;

/// `‖FᵀP + PF − PGGᵀP + Q‖_F`
pub fn care_residual(dyn_: &OutputDynamics, p: &DMatrix<f64>, q: &DMatrix<f64>) -> f64 {
    let pg = p * &dyn_.g;
    (dyn_.f.transpose() * p + p * &dyn_.f - &pg * pg.transpose() + q).norm()
}

/// `‖FᵀP_ε + P_εF − (1/ε)P_εGGᵀP_ε + (1/ε)Q_ε‖_F`
pub fn scaled_care_residual(
    dyn_: &OutputDynamics,
    p_eps: &DMatrix<f64>,
    q_eps: &DMatrix<f64>,
    eps: f64,
) -> f64 {
    let pg = p_eps * &dyn_.g;
    (dyn_.f.transpose() * p_eps + p_eps * &dyn_.f - (&pg * pg.transpose()) / eps + q_eps / eps)
        .norm()
}

/// Closed-form CARE solution for `Q = I`: identity on the `y1` block and
/// `[[√3, 1], [1, √3]]` on every `(y2_j, ẏ2_j)` pair.
pub fn identity_q_solution(dims: OutputDims) -> DMatrix<f64> {
    let (k1, k2) = (dims.k1, dims.k2);
    let n = dims.eta_dim();
    let s3 = 3f64.sqrt();
    let mut p = DMatrix::zeros(n, n);
    for i in 0..k1 {
        p[(i, i)] = 1.0;
    }
    for j in 0..k2 {
        let (a, b) = (k1 + j, k1 + k2 + j);
        p[(a, a)] = s3;
        p[(b, b)] = s3;
        p[(a, b)] = 1.0;
        p[(b, a)] = 1.0;
    }
    p
}

/// Checks symmetry (within `1e-12`) and positive definiteness.
pub fn validate_spd(q: &DMatrix<f64>) -> Result<()> {
    let asym = asymmetry(q);
    if asym > 1e-12 {
        return Err(Error::NotSymmetric(asym));
    }
    let e = sym_eig(q)?;
    if e.min() <= 0.0 {
        return Err(Error::NotPositiveDefinite(e.min()));
    }
    Ok(())
}

/// Whether every eigenvalue of `a` has negative real part.
pub fn is_hurwitz(a: &DMatrix<f64>) -> bool {
    a.clone().complex_eigenvalues().iter().all(|l| l.re < 0.0)
}

#[derive(Debug, Clone)]
pub struct CareSolution {
    pub p: DMatrix<f64>,
    pub residual: f64,
    pub iterations: usize,
    /// `trace(P_k)` for every Newton–Kleinman iterate, in order.
    pub trace_history: Vec<f64>,
}

pub fn solve_care(dyn_: &OutputDynamics, q: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    solve_care_with(dyn_, q, DEFAULT_MAX_NEWTON_ITERATIONS).map(|s| s.p)
}

/// Newton–Kleinman iteration seeded with the gain of [`identity_q_solution`],
/// which stabilizes `F − GK` for any dims.
pub fn solve_care_with(
    dyn_: &OutputDynamics,
    q: &DMatrix<f64>,
    max_iterations: usize,
) -> Result<CareSolution> {
    let n = dyn_.n();
    if q.nrows() != n || q.ncols() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: q.nrows(),
        });
    }
    validate_spd(q)?;

    let gt = dyn_.g.transpose();
    let mut p = identity_q_solution(dyn_.dims);
    let mut k = &gt * &p;
    let mut trace_history = Vec::new();
    let mut residual = f64::INFINITY;

    for it in 1..=max_iterations {
        let previous = residual;
        let a = &dyn_.f - &dyn_.g * &k;
        let c = q + k.transpose() * &k;
        let next = solve_lyapunov(&a, &c)?;
        let step = (&next - &p).norm();
        p = next;
        k = &gt * &p;
        residual = care_residual(dyn_, &p, q);
        trace_history.push(p.trace());
        let stalled = step <= 16.0 * f64::EPSILON * p.norm();
        // quadratic convergence ends at the rounding floor: stop once the
        // update is at machine precision or the residual stops improving
        let floor_reached = stalled || (residual <= 1e-2 * RESIDUAL_TOL && residual >= previous);
        if floor_reached && residual <= RESIDUAL_TOL {
            if !is_hurwitz(&(&dyn_.f - &dyn_.g * &k)) {
                return Err(Error::NoConvergence {
                    iterations: it,
                    residual,
                });
            }
            return Ok(CareSolution {
                p,
                residual,
                iterations: it,
                trace_history,
            });
        }
    }
    Err(Error::NoConvergence {
        iterations: max_iterations,
        residual,
    })
}

/// Result of the ε block scaling.
#[derive(Debug, Clone)]
pub struct EpsScaling {
    pub m: DMatrix<f64>,
    pub p_eps: DMatrix<f64>,
    pub q_eps: DMatrix<f64>,
}

/// `M = diag(I_k1, (1/ε) I_k2, I_k2)`, `P_ε = MPM`, `Q_ε = MQM`.
pub fn scale_epsilon(
    p: &DMatrix<f64>,
    q: &DMatrix<f64>,
    dims: OutputDims,
    eps: f64,
) -> Result<EpsScaling> {
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(Error::OutOfRange(format!("eps = {eps} not in (0, 1]")));
    }
    let n = dims.eta_dim();
    if p.nrows() != n || q.nrows() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: p.nrows(),
        });
    }
    let mut m = DMatrix::identity(n, n);
    for j in 0..dims.k2 {
        m[(dims.k1 + j, dims.k1 + j)] = 1.0 / eps;
    }
    let p_eps = &m * p * &m;
    let q_eps = &m * q * &m;
    Ok(EpsScaling { m, p_eps, q_eps })
}

/// RES-CLF certificate: Riccati solution, its ε-scaled form and the constants
/// `γ = λ_min(Q)/λ_max(P)`, `c1 = λ_min(P)`, `c2 = λ_max(P)`, `c3 = γ`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResClfCertificate {
    pub dims: OutputDims,
    pub eps: f64,
    #[serde(with = "serde_mat::matrix")]
    pub p: DMatrix<f64>,
    #[serde(with = "serde_mat::matrix")]
    pub q: DMatrix<f64>,
    #[serde(with = "serde_mat::matrix")]
    pub m: DMatrix<f64>,
    #[serde(with = "serde_mat::matrix")]
    pub p_eps: DMatrix<f64>,
    #[serde(with = "serde_mat::matrix")]
    pub q_eps: DMatrix<f64>,
    pub gamma: f64,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub care_residual: f64,
    pub scaled_care_residual: f64,
    pub newton_iterations: usize,
}

impl ResClfCertificate {
    /// Convergence rate `γ/ε` of the RES-CLF.
    pub fn rate(&self) -> f64 {
        self.gamma / self.eps
    }

    /// Smallest eigenvalue of `Q − γP` (non-negative up to rounding).
    pub fn gamma_margin(&self) -> Result<f64> {
        Ok(sym_eig(&(&self.q - &self.p * self.gamma))?.min())
    }
}

pub fn certificate(dyn_: &OutputDynamics, q: &DMatrix<f64>, eps: f64) -> Result<ResClfCertificate> {
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(Error::OutOfRange(format!("eps = {eps} not in (0, 1]")));
    }
    let sol = solve_care_with(dyn_, q, DEFAULT_MAX_NEWTON_ITERATIONS)?;
    let p = sol.p;
    let scaled = scale_epsilon(&p, q, dyn_.dims, eps)?;
    let ep = sym_eig(&p)?;
    let eq = sym_eig(q)?;
    let gamma = eq.min() / ep.max();
    let scaled_care_residual = scaled_care_residual(dyn_, &scaled.p_eps, &scaled.q_eps, eps);
    Ok(ResClfCertificate {
        dims: dyn_.dims,
        eps,
        q: q.clone(),
        m: scaled.m,
        p_eps: scaled.p_eps,
        q_eps: scaled.q_eps,
        gamma,
        c1: ep.min(),
        c2: ep.max(),
        c3: gamma,
        care_residual: sol.residual,
        scaled_care_residual,
        newton_iterations: sol.iterations,
        p,
    })
}
