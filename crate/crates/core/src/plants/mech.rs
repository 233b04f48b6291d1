//! Unit-inertia two-link mechanism `q̈ = B u` with a Bezier virtual constraint.
//!
//! Configuration `q = (q1, q2)`, state `x = (q1, q2, q̇1, q̇2)`. The phase
//! variable is `τ(q) = (q1 − q1⁻)/(q1⁺ − q1⁻)` and the outputs are
//!
//! * `y1 = q̇1 − v_d` (only when `k1 = 1`; both joints are actuated),
//! * `y2 = q2 − b(τ)` with `b` a degree-5 Bezier polynomial.
//!
//! When `k1 = 0` only `q2` is actuated and `q1` coasts. Zero-dynamics
//! coordinates are `z = (q1, q̇1)` for `k1 = 0` and `z = q1` for `k1 = 1`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::bezier::Bezier;
use crate::clf::{ControllerMode, RapidClf};
use crate::error::{Error, Result};
use crate::output_dynamics::OutputDims;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MechPlant {
    pub dims: OutputDims,
    pub q1_minus: f64,
    pub q1_plus: f64,
    pub desired: Bezier,
    pub v_d: f64,
}

/// Phase value and its first two time derivatives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseInput {
    pub tau: f64,
    pub tau_dot: f64,
    pub tau_ddot: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LinearizationMode {
    /// Desired outputs evaluated at `τ(q)`.
    State,
    /// Desired outputs evaluated at an externally supplied phase.
    Time(PhaseInput),
}

/// Control computed from an estimated phase, with the quantities it was built from.
#[derive(Debug, Clone)]
pub struct PhaseBasedControl {
    pub u: DVector<f64>,
    pub eta_t: DVector<f64>,
    pub mu_t: DVector<f64>,
    pub u_s: DVector<f64>,
    pub phase: PhaseInput,
}

impl MechPlant {
    pub fn new(
        dims: OutputDims,
        q1_minus: f64,
        q1_plus: f64,
        alpha: Vec<f64>,
        v_d: f64,
    ) -> Result<Self> {
        if dims.k2 != 1 || dims.k1 > 1 {
            return Err(Error::Config(format!(
                "mech plant supports k2 = 1 with k1 in {{0, 1}}, got k1={}, k2={}",
                dims.k1, dims.k2
            )));
        }
        if !(q1_plus > q1_minus) {
            return Err(Error::Config("q1_plus must exceed q1_minus".into()));
        }
        if alpha.len() != 6 {
            return Err(Error::Config(format!(
                "expected 6 Bezier coefficients (degree 5), got {}",
                alpha.len()
            )));
        }
        Ok(Self {
            dims,
            q1_minus,
            q1_plus,
            desired: Bezier::new(alpha),
            v_d,
        })
    }

    pub fn with_defaults(dims: OutputDims) -> Result<Self> {
        Self::new(dims, 0.0, 1.0, vec![0.0, 0.05, 0.25, 0.25, 0.05, 0.0], 1.0)
    }

    fn span(&self) -> f64 {
        self.q1_plus - self.q1_minus
    }

    pub fn input_dim(&self) -> usize {
        self.dims.input_dim()
    }

    pub fn tau(&self, q1: f64) -> f64 {
        (q1 - self.q1_minus) / self.span()
    }

    fn check_state(&self, x: &DVector<f64>) -> Result<()> {
        if x.len() != 4 {
            return Err(Error::DimensionMismatch {
                expected: 4,
                got: x.len(),
            });
        }
        Ok(())
    }

    /// `(τ(q), τ̇)` from the state.
    pub fn state_phase(&self, x: &DVector<f64>) -> (f64, f64) {
        (self.tau(x[0]), x[2] / self.span())
    }

    /// η with the desired outputs evaluated at the given phase and phase rate.
    pub fn outputs_at_phase(&self, x: &DVector<f64>, tau: f64, tau_dot: f64) -> DVector<f64> {
        let y2 = x[1] - self.desired.value(tau);
        let y2_dot = x[3] - self.desired.d1(tau) * tau_dot;
        if self.dims.k1 == 1 {
            DVector::from_vec(vec![x[2] - self.v_d, y2, y2_dot])
        } else {
            DVector::from_vec(vec![y2, y2_dot])
        }
    }

    /// State-based η.
    pub fn outputs(&self, x: &DVector<f64>) -> DVector<f64> {
        let (tau, tau_dot) = self.state_phase(x);
        self.outputs_at_phase(x, tau, tau_dot)
    }

    /// `Φ(x) = (η, z)`.
    pub fn phi(&self, x: &DVector<f64>) -> Result<(DVector<f64>, DVector<f64>)> {
        self.check_state(x)?;
        let z = if self.dims.k1 == 1 {
            DVector::from_vec(vec![x[0]])
        } else {
            DVector::from_vec(vec![x[0], x[2]])
        };
        Ok((self.outputs(x), z))
    }

    pub fn phi_inverse(&self, eta: &DVector<f64>, z: &DVector<f64>) -> Result<DVector<f64>> {
        if eta.len() != self.dims.eta_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dims.eta_dim(),
                got: eta.len(),
            });
        }
        let (q1, dq1, y2, y2_dot) = if self.dims.k1 == 1 {
            (z[0], eta[0] + self.v_d, eta[1], eta[2])
        } else {
            (z[0], z[1], eta[0], eta[1])
        };
        let tau = self.tau(q1);
        let tau_dot = dq1 / self.span();
        let q2 = y2 + self.desired.value(tau);
        let dq2 = y2_dot + self.desired.d1(tau) * tau_dot;
        Ok(DVector::from_vec(vec![q1, q2, dq1, dq2]))
    }

    /// `q̈` produced by input `u`.
    pub fn acceleration(&self, u: &DVector<f64>) -> (f64, f64) {
        if self.dims.k1 == 1 {
            (u[0], u[1])
        } else {
            (0.0, u[0])
        }
    }

    /// `ẋ` under input `u`.
    pub fn state_derivative(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        let (a1, a2) = self.acceleration(u);
        DVector::from_vec(vec![x[2], x[3], a1, a2])
    }

    /// Drift `[L_f y1; L_f² y2]` and decoupling matrix `[L_g y1; L_g L_f y2]`
    /// of the state-based outputs.
    pub fn drift_and_decoupling(&self, x: &DVector<f64>) -> (DVector<f64>, DMatrix<f64>) {
        let (tau, tau_dot) = self.state_phase(x);
        let b1 = self.desired.d1(tau);
        let b2 = self.desired.d2(tau);
        let l2 = -b2 * tau_dot * tau_dot;
        if self.dims.k1 == 1 {
            let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, -b1 / self.span(), 1.0]);
            (DVector::from_vec(vec![0.0, l2]), a)
        } else {
            (DVector::from_vec(vec![l2]), DMatrix::identity(1, 1))
        }
    }

    /// Output-space input `v` realized by `u`: `η̇ = Fη + Gv` for the state-based η.
    pub fn realized_auxiliary(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        let (drift, a) = self.drift_and_decoupling(x);
        drift + a * u
    }

    /// Time-based controller driven by the phase estimate `τ̂ = τ(q) + e`.
    ///
    /// The estimate's rate and acceleration follow the state (`τ̂̇ = q̇1/Δ`,
    /// `τ̂̈ = q̈1/Δ`); only the phase value carries the error. Since `L_g yᵃ` is
    /// the identity, `q̈1` is fixed by the velocity-output channel before the
    /// pose-output channel is evaluated.
    pub fn phase_based_control(
        &self,
        clf: &RapidClf,
        mode: ControllerMode,
        x: &DVector<f64>,
        phase_error: f64,
    ) -> Result<PhaseBasedControl> {
        self.check_state(x)?;
        let (tau, tau_dot) = self.state_phase(x);
        let tau_hat = tau + phase_error;
        let eta_t = self.outputs_at_phase(x, tau_hat, tau_dot);
        let (mu_t, u_s) = clf.auxiliary_input(&eta_t, mode)?;
        let v = &mu_t + &u_s;
        let q1_acc = if self.dims.k1 == 1 { v[0] } else { 0.0 };
        let phase = PhaseInput {
            tau: tau_hat,
            tau_dot,
            tau_ddot: q1_acc / self.span(),
        };
        let u = mech_feedback_linearize(self, x, LinearizationMode::Time(phase), &v)?;
        Ok(PhaseBasedControl {
            u,
            eta_t,
            mu_t,
            u_s,
            phase,
        })
    }
}

/// Input `u` that realizes auxiliary input `mu` on the selected outputs.
///
/// State mode inverts the decoupling matrix of the state-based outputs. Time
/// mode uses `u = (L_g yᵃ)⁻¹(−L_f yᵃ + [ẏ1ᵈ; ÿ2ᵈ] + μ)` where
/// `ÿ2ᵈ = b''(τ)τ̇² + b'(τ)τ̈`; here `L_g yᵃ = I`, `L_f yᵃ = 0` and `ẏ1ᵈ = 0`.
pub fn mech_feedback_linearize(
    plant: &MechPlant,
    x: &DVector<f64>,
    mode: LinearizationMode,
    mu: &DVector<f64>,
) -> Result<DVector<f64>> {
    plant.check_state(x)?;
    if mu.len() != plant.input_dim() {
        return Err(Error::DimensionMismatch {
            expected: plant.input_dim(),
            got: mu.len(),
        });
    }
    match mode {
        LinearizationMode::State => {
            let (drift, a) = plant.drift_and_decoupling(x);
            a.lu()
                .solve(&(mu - drift))
                .ok_or(Error::Singular("decoupling matrix"))
        }
        LinearizationMode::Time(p) => {
            let b = &plant.desired;
            let y2_dd = b.d2(p.tau) * p.tau_dot * p.tau_dot + b.d1(p.tau) * p.tau_ddot;
            if plant.dims.k1 == 1 {
                Ok(DVector::from_vec(vec![mu[0], y2_dd + mu[1]]))
            } else {
                Ok(DVector::from_vec(vec![y2_dd + mu[0]]))
            }
        }
    }
}

/// Disturbance `d` seen by the state-based output dynamics when the
/// controller runs on `τ̂ = τ(q) + e`: `η̇ = Fη + G(μ(η) + d)`.
pub fn derive_phase_disturbance(
    plant: &MechPlant,
    clf: &RapidClf,
    mode: ControllerMode,
    x: &DVector<f64>,
    phase_error: f64,
) -> Result<DVector<f64>> {
    plant.check_state(x)?;
    let tau_hat = plant.tau(x[0]) + phase_error;
    if !(0.0..=1.0).contains(&tau_hat) {
        return Err(Error::OutOfRange(format!(
            "estimated phase {tau_hat} outside [0, 1]"
        )));
    }
    if phase_error == 0.0 {
        return Ok(DVector::zeros(plant.input_dim()));
    }
    let ctrl = plant.phase_based_control(clf, mode, x, phase_error)?;
    let realized = plant.realized_auxiliary(x, &ctrl.u);
    let (mu, us) = clf.auxiliary_input(&plant.outputs(x), mode)?;
    Ok(realized - mu - us)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::output_dynamics::build_fg;
    use crate::riccati::certificate;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn setup(k1: usize, eps: f64) -> (MechPlant, RapidClf) {
        let dims = OutputDims::new(k1, 1).unwrap();
        let d = build_fg(dims).unwrap();
        let q = DMatrix::identity(d.n(), d.n());
        let clf = RapidClf::new(certificate(&d, &q, eps).unwrap(), d).unwrap();
        (MechPlant::with_defaults(dims).unwrap(), clf)
    }

    fn random_state(rng: &mut ChaCha8Rng) -> DVector<f64> {
        DVector::from_vec(vec![
            rng.random_range(0.1..0.9),
            rng.random_range(-0.5..0.5),
            rng.random_range(0.5..1.5),
            rng.random_range(-1.0..1.0),
        ])
    }

    #[test]
    fn rejects_unsupported_dims() {
        assert!(MechPlant::with_defaults(OutputDims::new(2, 1).unwrap()).is_err());
        assert!(MechPlant::with_defaults(OutputDims::new(1, 0).unwrap()).is_err());
        let dims = OutputDims::new(1, 1).unwrap();
        assert!(MechPlant::new(dims, 0.0, 1.0, vec![0.0; 4], 1.0).is_err());
    }

    #[test]
    fn phi_roundtrip() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for k1 in [0, 1] {
            let (p, _) = setup(k1, 0.2);
            for _ in 0..500 {
                let x = random_state(&mut rng);
                let (eta, z) = p.phi(&x).unwrap();
                assert_eq!(eta.len() + z.len(), 4);
                let back = p.phi_inverse(&eta, &z).unwrap();
                assert!((back - &x).amax() < 1e-10);
            }
        }
    }

    #[test]
    fn output_dynamics_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for k1 in [0, 1] {
            let (p, clf) = setup(k1, 0.3);
            for _ in 0..100 {
                let x = random_state(&mut rng);
                let mu = DVector::from_fn(p.input_dim(), |_, _| rng.random_range(-2.0..2.0));
                let u = mech_feedback_linearize(&p, &x, LinearizationMode::State, &mu).unwrap();
                let xdot = p.state_derivative(&x, &u);
                let eta = p.outputs(&x);
                let expected = clf.dynamics.rhs(&eta, &mu);
                let mut errs = Vec::new();
                for h in [1e-3, 5e-4] {
                    // η along a straight line in the direction of ẋ with
                    // q̈ held fixed: second-order Taylor step
                    let step = |s: f64| {
                        let mut y = &x + &xdot * s;
                        y[0] = x[0] + x[2] * s + 0.5 * xdot[2] * s * s;
                        y[1] = x[1] + x[3] * s + 0.5 * xdot[3] * s * s;
                        y
                    };
                    let fd = (p.outputs(&step(h)) - p.outputs(&step(-h))) / (2.0 * h);
                    errs.push((fd - &expected).amax());
                }
                assert!(errs[0] < 1e-4, "{errs:?}");
                // O(h²): halving h cuts the error by ~4 (or it is at rounding level)
                assert!(errs[1] <= errs[0] / 3.0 || errs[0] < 1e-9, "{errs:?}");
            }
        }
    }

    #[test]
    fn zero_dynamics_surface_is_invariant_under_zero_mu() {
        let (p, _) = setup(1, 0.2);
        let eta = DVector::from_vec(vec![0.0, 0.0, 0.0]);
        let x = p.phi_inverse(&eta, &DVector::from_vec(vec![0.2])).unwrap();
        let mu = DVector::zeros(2);
        let u = mech_feedback_linearize(&p, &x, LinearizationMode::State, &mu).unwrap();
        let v = p.realized_auxiliary(&x, &u);
        assert!(v.amax() < 1e-14);
    }

    #[test]
    fn time_mode_matches_state_mode_without_phase_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for k1 in [0, 1] {
            let (p, clf) = setup(k1, 0.1);
            for _ in 0..200 {
                let x = random_state(&mut rng);
                let eta = p.outputs(&x);
                let (mu, _) = clf.auxiliary_input(&eta, ControllerMode::MinNorm).unwrap();
                let u_state = mech_feedback_linearize(&p, &x, LinearizationMode::State, &mu).unwrap();
                let ctrl = p
                    .phase_based_control(&clf, ControllerMode::MinNorm, &x, 0.0)
                    .unwrap();
                assert_eq!(ctrl.eta_t, eta);
                assert!((&ctrl.u - &u_state).amax() <= 1e-12 * (1.0 + u_state.amax()));
            }
        }
    }

    #[test]
    fn phase_disturbance_basics() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let (p, clf) = setup(1, 0.2);
        let mode = ControllerMode::MinNorm;
        for _ in 0..200 {
            let x = random_state(&mut rng);
            assert!(derive_phase_disturbance(&p, &clf, mode, &x, 0.0)
                .unwrap()
                .iter()
                .all(|&v| v == 0.0));
            // η̇ of the realized closed loop equals Fη + G(μ + d)
            let e = 0.03;
            let d = derive_phase_disturbance(&p, &clf, mode, &x, e).unwrap();
            let ctrl = p.phase_based_control(&clf, mode, &x, e).unwrap();
            let eta = p.outputs(&x);
            let (mu, _) = clf.auxiliary_input(&eta, mode).unwrap();
            let lhs = clf.dynamics.rhs(&eta, &p.realized_auxiliary(&x, &ctrl.u));
            let rhs = clf.dynamics.rhs(&eta, &(mu + &d));
            assert!((lhs - rhs).amax() < 1e-12);
        }
    }

    #[test]
    fn phase_out_of_range() {
        let (p, clf) = setup(1, 0.2);
        let x = DVector::from_vec(vec![0.98, 0.0, 1.0, 0.0]);
        assert!(derive_phase_disturbance(&p, &clf, ControllerMode::MinNorm, &x, 0.05).is_err());
    }

    #[test]
    fn phase_disturbance_lipschitz_in_error() {
        // ‖d(e)‖ ≤ L_ff |e| with L_ff sampled from the η̇-field's sensitivity to τ̂
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let (p, clf) = setup(1, 0.2);
        let mode = ControllerMode::MinNorm;
        for _ in 0..50 {
            let x = random_state(&mut rng);
            let tau = p.tau(x[0]);
            let mut l_ff = 0.0f64;
            let grid: Vec<f64> = (0..=40).map(|i| -0.05 + 0.1 * i as f64 / 40.0).collect();
            let fields: Vec<DVector<f64>> = grid
                .iter()
                .map(|&e| {
                    let c = p.phase_based_control(&clf, mode, &x, e).unwrap();
                    p.realized_auxiliary(&x, &c.u)
                })
                .collect();
            for i in 0..grid.len() {
                for j in (i + 1)..grid.len() {
                    l_ff = l_ff.max((&fields[i] - &fields[j]).norm() / (grid[j] - grid[i]));
                }
            }
            for e in [0.01, -0.02, 0.04] {
                if !(0.0..=1.0).contains(&(tau + e)) {
                    continue;
                }
                let d = derive_phase_disturbance(&p, &clf, mode, &x, e).unwrap();
                assert!(d.norm() <= 1.05 * l_ff * e.abs(), "{} > {}", d.norm(), l_ff * e.abs());
            }
        }
    }

    #[test]
    fn phase_disturbance_odd_to_first_order() {
        let (p, clf) = setup(1, 0.2);
        let mode = ControllerMode::MinNorm;
        // a state where ψ0 keeps its sign for small phase perturbations
        let x = DVector::from_vec(vec![0.4, 0.3, 1.2, -0.4]);
        for e in [1e-3, 5e-4] {
            let plus = derive_phase_disturbance(&p, &clf, mode, &x, e).unwrap();
            let minus = derive_phase_disturbance(&p, &clf, mode, &x, -e).unwrap();
            let asym = (&plus + &minus).norm();
            assert!(asym <= 50.0 * e * e * (1.0 + plus.norm() / e), "{asym}");
        }
    }
}
