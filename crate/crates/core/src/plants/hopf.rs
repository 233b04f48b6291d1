//! Output dynamics coupled to Hopf-oscillator zero dynamics:
//!
//! ```text
//! η̇ = Fη + G(μ + d + u_s)
//! ż = Ψ₀(z) + Cη,   Ψ₀(z) = (−ω z₂ + λ z₁(r0² − ‖z‖²), ω z₁ + λ z₂(r0² − ‖z‖²))
//! ```
//!
//! With `η ≡ 0` the circle `‖z‖ = r0` is an exponentially stable periodic
//! orbit of period `2π/ω`. On the partial zero dynamics the velocity outputs
//! contract as `ẏ1 = −y1_rate · y1`.

use std::f64::consts::TAU;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::output_dynamics::{split_eta, OutputDims, OutputDynamics};
use crate::serde_mat;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HopfPlant {
    pub dims: OutputDims,
    pub omega: f64,
    pub lambda_h: f64,
    pub r0: f64,
    /// `C`, of shape `2 × (k1 + 2k2)`.
    #[serde(with = "serde_mat::matrix")]
    pub coupling: DMatrix<f64>,
    pub y1_rate: f64,
    /// Half-width `r` of the analysis annulus `‖z‖ ∈ [r0 − r, r0 + r]`.
    pub annulus: f64,
}

impl HopfPlant {
    pub fn new(
        dims: OutputDims,
        omega: f64,
        lambda_h: f64,
        r0: f64,
        coupling: DMatrix<f64>,
        y1_rate: f64,
    ) -> Result<Self> {
        if !(lambda_h > 0.0) {
            return Err(Error::Config(format!("lambda_h = {lambda_h} must be positive")));
        }
        if !(r0 > 0.0) {
            return Err(Error::Config(format!("r0 = {r0} must be positive")));
        }
        if !omega.is_finite() || !(y1_rate > 0.0) {
            return Err(Error::Config("omega must be finite and y1_rate positive".into()));
        }
        if coupling.nrows() != 2 || coupling.ncols() != dims.eta_dim() {
            return Err(Error::Config(format!(
                "coupling must be 2 x {}, got {} x {}",
                dims.eta_dim(),
                coupling.nrows(),
                coupling.ncols()
            )));
        }
        Ok(Self {
            dims,
            omega,
            lambda_h,
            r0,
            coupling,
            y1_rate,
            annulus: 0.5 * r0,
        })
    }

    /// ω = 1, λ = 1, r0 = 1, every coupling entry 0.2, y1 contraction rate 1.
    pub fn with_defaults(dims: OutputDims) -> Self {
        Self::new(
            dims,
            1.0,
            1.0,
            1.0,
            DMatrix::from_element(2, dims.eta_dim(), 0.2),
            1.0,
        )
        .expect("default Hopf parameters are valid")
    }

    pub fn period(&self) -> f64 {
        TAU / self.omega.abs()
    }

    pub fn psi0(&self, z: &DVector<f64>) -> DVector<f64> {
        let radial = self.lambda_h * (self.r0 * self.r0 - z.norm_squared());
        DVector::from_vec(vec![
            -self.omega * z[1] + radial * z[0],
            self.omega * z[0] + radial * z[1],
        ])
    }

    /// `Ψ(η, z) = Ψ₀(z) + Cη`
    pub fn psi(&self, eta: &DVector<f64>, z: &DVector<f64>) -> DVector<f64> {
        self.psi0(z) + &self.coupling * eta
    }

    /// `L_q`, the largest singular value of `C`.
    pub fn lipschitz_coupling(&self) -> f64 {
        spectral_norm(&self.coupling)
    }

    /// Spectral norm of the columns of `C` acting on `y1`.
    pub fn y1_coupling_norm(&self) -> f64 {
        if self.dims.k1 == 0 {
            return 0.0;
        }
        spectral_norm(&self.coupling.columns(0, self.dims.k1).into_owned())
    }

    /// Point on the orbit at time `t` starting from angle `phase`.
    pub fn orbit_point(&self, phase: f64, t: f64) -> DVector<f64> {
        let a = phase + self.omega * t;
        DVector::from_vec(vec![self.r0 * a.cos(), self.r0 * a.sin()])
    }

    pub fn in_annulus(&self, z: &DVector<f64>) -> bool {
        let r = z.norm();
        r >= self.r0 - self.annulus && r <= self.r0 + self.annulus
    }

    /// `‖(y1, z)‖_{O_Z} = |‖z‖ − r0| + ‖y1‖`
    pub fn zero_dynamics_distance(&self, y1: &DVector<f64>, z: &DVector<f64>) -> f64 {
        (z.norm() - self.r0).abs() + y1.norm()
    }

    /// Partial zero dynamics `(ẏ1, ż) = (−y1_rate·y1, Ψ(y1, 0, z))`.
    pub fn partial_zero_dynamics(
        &self,
        y1: &DVector<f64>,
        z: &DVector<f64>,
    ) -> (DVector<f64>, DVector<f64>) {
        let mut eta = DVector::zeros(self.dims.eta_dim());
        eta.rows_mut(0, self.dims.k1).copy_from(y1);
        (y1 * -self.y1_rate, self.psi(&eta, z))
    }

    /// `V_Z = (‖z‖² − r0²)² + ‖y1‖²` without the annulus check.
    pub fn vz_value(&self, y1: &DVector<f64>, z: &DVector<f64>) -> f64 {
        let s = z.norm_squared() - self.r0 * self.r0;
        s * s + y1.norm_squared()
    }

    /// Constants of the converse-Lyapunov inequalities on the annulus.
    ///
    /// With `a = |‖z‖ − r0|`, `b = ‖y1‖` and `s = ‖z‖² − r0²`:
    /// `(2r0 − r)a ≤ |s| ≤ (2r0 + r)a`, and along the partial zero dynamics
    /// `V̇_Z ≤ −κ V_Z` with `κ = 4λ(r0 − r)²` when `k1 = 0` and
    /// `κ = min(2λ(r0 − r)², 2(y1_rate − ‖C_y1‖²/λ))` otherwise (the cross
    /// term `4 s zᵀC_y1 y1` is split by Young's inequality).
    pub fn zero_dynamics_constants(&self) -> Result<ZeroDynamicsConstants> {
        let (r0, r, lam) = (self.r0, self.annulus, self.lambda_h);
        if !(r > 0.0 && r < r0) {
            return Err(Error::Config(format!("annulus half-width {r} not in (0, r0)")));
        }
        let inner = 2.0 * r0 - r;
        let outer = 2.0 * r0 + r;
        let mut c4 = (inner * inner).min(1.0);
        let kappa = if self.dims.k1 == 0 {
            4.0 * lam * (r0 - r).powi(2)
        } else {
            // (a + b)² ≤ 2(a² + b²)
            c4 *= 0.5;
            let cy = self.y1_coupling_norm();
            let y1_margin = self.y1_rate - cy * cy / lam;
            if y1_margin <= 0.0 {
                return Err(Error::Config(format!(
                    "y1_rate {} must exceed ‖C_y1‖²/λ = {}",
                    self.y1_rate,
                    cy * cy / lam
                )));
            }
            (2.0 * lam * (r0 - r).powi(2)).min(2.0 * y1_margin)
        };
        Ok(ZeroDynamicsConstants {
            c4,
            c5: (outer * outer).max(1.0),
            c6: kappa * c4,
            c7: (4.0 * (r0 + r) * outer).max(2.0),
        })
    }
}

fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone().svd(false, false).singular_values.max()
}

/// Bounds `c4 d² ≤ V_Z ≤ c5 d²`, `V̇_Z ≤ −c6 d²`, `‖∇V_Z‖ ≤ c7 d` with
/// `d = ‖(y1, z)‖_{O_Z}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZeroDynamicsConstants {
    pub c4: f64,
    pub c5: f64,
    pub c6: f64,
    pub c7: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConverseLyapunov {
    pub value: f64,
    pub grad_y1: DVector<f64>,
    pub grad_z: DVector<f64>,
}

impl ConverseLyapunov {
    pub fn gradient_norm(&self) -> f64 {
        (self.grad_y1.norm_squared() + self.grad_z.norm_squared()).sqrt()
    }

    /// `∂V_Z/∂y1 · ẏ1 + ∂V_Z/∂z · ż`
    pub fn derivative_along(&self, y1_dot: &DVector<f64>, z_dot: &DVector<f64>) -> f64 {
        self.grad_y1.dot(y1_dot) + self.grad_z.dot(z_dot)
    }
}

/// `(η̇, ż)` for the given effective auxiliary input (μ plus disturbance and damping).
pub fn hopf_vector_field(
    plant: &HopfPlant,
    dynamics: &OutputDynamics,
    eta: &DVector<f64>,
    z: &DVector<f64>,
    mu_effective: &DVector<f64>,
) -> Result<(DVector<f64>, DVector<f64>)> {
    if eta.len() != dynamics.n() || mu_effective.len() != dynamics.m() || z.len() != 2 {
        return Err(Error::DimensionMismatch {
            expected: dynamics.n(),
            got: eta.len(),
        });
    }
    Ok((dynamics.rhs(eta, mu_effective), plant.psi(eta, z)))
}

/// Distance to the orbit `O = Π₀(O_Z)` in the norm `‖y1‖ + ‖η₂‖ + ‖z‖`.
pub fn orbit_distance(eta: &DVector<f64>, z: &DVector<f64>, plant: &HopfPlant) -> Result<f64> {
    let parts = split_eta(eta, plant.dims)?;
    Ok(plant.zero_dynamics_distance(&parts.y1, z) + parts.eta2.norm())
}

/// `V_Z`, its gradient and the constants `c4..c7`; rejects points outside the annulus.
pub fn vz_converse_lyapunov(
    y1: &DVector<f64>,
    z: &DVector<f64>,
    plant: &HopfPlant,
) -> Result<(ConverseLyapunov, ZeroDynamicsConstants)> {
    if y1.len() != plant.dims.k1 {
        return Err(Error::DimensionMismatch {
            expected: plant.dims.k1,
            got: y1.len(),
        });
    }
    if !plant.in_annulus(z) {
        return Err(Error::OutsideAnnulus {
            norm: z.norm(),
            lo: plant.r0 - plant.annulus,
            hi: plant.r0 + plant.annulus,
        });
    }
    let s = z.norm_squared() - plant.r0 * plant.r0;
    let lyap = ConverseLyapunov {
        value: plant.vz_value(y1, z),
        grad_y1: y1 * 2.0,
        grad_z: z * (4.0 * s),
    };
    Ok((lyap, plant.zero_dynamics_constants()?))
}
