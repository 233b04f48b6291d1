//! Fixed-step RK4 integration of closed-loop systems.

use std::io::Write;

use nalgebra::DVector;

use crate::clf::{ControllerMode, RapidClf};
use crate::disturbance::DisturbanceSignal;
use crate::error::{Error, Result};
use crate::output_dynamics::split_eta;
use crate::plants::{derive_phase_disturbance, orbit_distance, HopfPlant, MechPlant};

pub const DEFAULT_DT: f64 = 1e-3;
pub const DEFAULT_HORIZON: f64 = 50.0;
pub const MAX_STEPS: f64 = 1e7;

/// Quantities recorded at one sample.
#[derive(Debug, Clone)]
pub struct Observation {
    pub eta: DVector<f64>,
    pub z: DVector<f64>,
    pub d: DVector<f64>,
    pub v_eps: f64,
    pub v_z: f64,
    pub v_c: f64,
    pub dist: f64,
    /// Distance of `(y1, z)` to the zero-dynamics orbit.
    pub zero_dist: f64,
    pub mu: DVector<f64>,
    pub us: DVector<f64>,
}

pub trait ClosedLoop: Sync {
    fn state_dim(&self) -> usize;
    fn derivative(&self, t: f64, x: &DVector<f64>) -> Result<DVector<f64>>;
    fn observe(&self, t: f64, x: &DVector<f64>) -> Result<Observation>;
    /// Weight of `V_Z` in `V_c`, if the plant has a composite function.
    fn sigma(&self) -> Option<f64>;
}

/// Output dynamics driven by the RES-CLF controller plus an exogenous
/// disturbance, coupled to Hopf zero dynamics. State `[η; z]`.
#[derive(Debug, Clone)]
pub struct HopfClosedLoop {
    pub plant: HopfPlant,
    pub clf: RapidClf,
    pub mode: ControllerMode,
    pub disturbance: DisturbanceSignal,
    pub sigma: f64,
}

impl HopfClosedLoop {
    pub fn new(
        plant: HopfPlant,
        clf: RapidClf,
        mode: ControllerMode,
        disturbance: DisturbanceSignal,
        sigma: f64,
    ) -> Result<Self> {
        if plant.dims != clf.dynamics.dims {
            return Err(Error::Config("plant and controller dimensions differ".into()));
        }
        if disturbance.is_phase_driven() {
            return Err(Error::Config(
                "the hopf plant takes exogenous disturbances only".into(),
            ));
        }
        disturbance.validate()?;
        let dim = disturbance.sample(0.0)?.len();
        if dim != clf.dynamics.m() {
            return Err(Error::DimensionMismatch {
                expected: clf.dynamics.m(),
                got: dim,
            });
        }
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::OutOfRange(format!("sigma = {sigma} must be positive")));
        }
        Ok(Self {
            plant,
            clf,
            mode,
            disturbance,
            sigma,
        })
    }

    pub fn initial_state(&self, eta0: &DVector<f64>, z0: &DVector<f64>) -> Result<DVector<f64>> {
        let n = self.clf.dynamics.n();
        if eta0.len() != n || z0.len() != 2 {
            return Err(Error::DimensionMismatch {
                expected: n + 2,
                got: eta0.len() + z0.len(),
            });
        }
        Ok(DVector::from_iterator(
            n + 2,
            eta0.iter().chain(z0.iter()).copied(),
        ))
    }

    fn split(&self, x: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        let n = self.clf.dynamics.n();
        (x.rows(0, n).into_owned(), x.rows(n, 2).into_owned())
    }
}

impl ClosedLoop for HopfClosedLoop {
    fn state_dim(&self) -> usize {
        self.clf.dynamics.n() + 2
    }

    fn derivative(&self, t: f64, x: &DVector<f64>) -> Result<DVector<f64>> {
        let (eta, z) = self.split(x);
        let (mu, us) = self.clf.auxiliary_input(&eta, self.mode)?;
        let d = self.disturbance.sample(t)?;
        let eta_dot = self.clf.dynamics.rhs(&eta, &(mu + us + d));
        let z_dot = self.plant.psi(&eta, &z);
        Ok(DVector::from_iterator(
            x.len(),
            eta_dot.iter().chain(z_dot.iter()).copied(),
        ))
    }

    fn observe(&self, t: f64, x: &DVector<f64>) -> Result<Observation> {
        let (eta, z) = self.split(x);
        let (mu, us) = self.clf.auxiliary_input(&eta, self.mode)?;
        let y1 = split_eta(&eta, self.plant.dims)?.y1;
        let v_eps = self.clf.value(&eta);
        let v_z = self.plant.vz_value(&y1, &z);
        Ok(Observation {
            d: self.disturbance.sample(t)?,
            v_eps,
            v_z,
            v_c: self.sigma * v_z + v_eps,
            dist: orbit_distance(&eta, &z, &self.plant)?,
            zero_dist: self.plant.zero_dynamics_distance(&y1, &z),
            eta,
            z,
            mu,
            us,
        })
    }

    fn sigma(&self) -> Option<f64> {
        Some(self.sigma)
    }
}

/// Mechanical plant under the phase-based controller with phase error `e(t)`.
///
/// `V_Z` and `V_c` are not defined for this plant and are recorded as NaN;
/// `dist` is `‖η‖`, the distance to the zero-dynamics surface.
#[derive(Debug, Clone)]
pub struct MechClosedLoop {
    pub plant: MechPlant,
    pub clf: RapidClf,
    pub mode: ControllerMode,
    pub phase_error: DisturbanceSignal,
}

impl MechClosedLoop {
    pub fn new(
        plant: MechPlant,
        clf: RapidClf,
        mode: ControllerMode,
        phase_error: DisturbanceSignal,
    ) -> Result<Self> {
        if plant.dims != clf.dynamics.dims {
            return Err(Error::Config("plant and controller dimensions differ".into()));
        }
        match phase_error {
            DisturbanceSignal::PhaseErrorDriven { .. } | DisturbanceSignal::Zero { .. } => {}
            _ => {
                return Err(Error::Config(
                    "the mech plant is disturbed through its phase estimate only".into(),
                ))
            }
        }
        Ok(Self {
            plant,
            clf,
            mode,
            phase_error,
        })
    }
}

impl ClosedLoop for MechClosedLoop {
    fn state_dim(&self) -> usize {
        4
    }

    fn derivative(&self, t: f64, x: &DVector<f64>) -> Result<DVector<f64>> {
        let e = self.phase_error.phase_error(t);
        let ctrl = self.plant.phase_based_control(&self.clf, self.mode, x, e)?;
        Ok(self.plant.state_derivative(x, &ctrl.u))
    }

    fn observe(&self, t: f64, x: &DVector<f64>) -> Result<Observation> {
        let (eta, z) = self.plant.phi(x)?;
        let (mu, us) = self.clf.auxiliary_input(&eta, self.mode)?;
        let e = self.phase_error.phase_error(t);
        let d = derive_phase_disturbance(&self.plant, &self.clf, self.mode, x, e)?;
        Ok(Observation {
            v_eps: self.clf.value(&eta),
            v_z: f64::NAN,
            v_c: f64::NAN,
            dist: eta.norm(),
            zero_dist: f64::NAN,
            eta,
            z,
            d,
            mu,
            us,
        })
    }

    fn sigma(&self) -> Option<f64> {
        None
    }
}

/// Samples of one integration on the uniform grid `t_i = i·dt`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord {
    pub dt: f64,
    pub sigma: Option<f64>,
    pub times: Vec<f64>,
    pub states: Vec<DVector<f64>>,
    pub eta: Vec<DVector<f64>>,
    pub z: Vec<DVector<f64>>,
    pub d: Vec<DVector<f64>>,
    pub v_eps: Vec<f64>,
    pub v_z: Vec<f64>,
    pub v_c: Vec<f64>,
    pub orbit_distance: Vec<f64>,
    pub zero_distance: Vec<f64>,
    pub mu: Vec<DVector<f64>>,
    pub us: Vec<DVector<f64>>,
}

impl TrajectoryRecord {
    fn with_capacity(dt: f64, sigma: Option<f64>, n: usize) -> Self {
        Self {
            dt,
            sigma,
            times: Vec::with_capacity(n),
            states: Vec::with_capacity(n),
            eta: Vec::with_capacity(n),
            z: Vec::with_capacity(n),
            d: Vec::with_capacity(n),
            v_eps: Vec::with_capacity(n),
            v_z: Vec::with_capacity(n),
            v_c: Vec::with_capacity(n),
            orbit_distance: Vec::with_capacity(n),
            zero_distance: Vec::with_capacity(n),
            mu: Vec::with_capacity(n),
            us: Vec::with_capacity(n),
        }
    }

    fn push(&mut self, t: f64, x: DVector<f64>, o: Observation) {
        self.times.push(t);
        self.states.push(x);
        self.eta.push(o.eta);
        self.z.push(o.z);
        self.d.push(o.d);
        self.v_eps.push(o.v_eps);
        self.v_z.push(o.v_z);
        self.v_c.push(o.v_c);
        self.orbit_distance.push(o.dist);
        self.zero_distance.push(o.zero_dist);
        self.mu.push(o.mu);
        self.us.push(o.us);
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn horizon(&self) -> f64 {
        self.times.last().copied().unwrap_or(0.0)
    }

    pub fn eta_norms(&self) -> Vec<f64> {
        self.eta.iter().map(|e| e.norm()).collect()
    }

    /// Largest recorded `‖d(t)‖`.
    pub fn d_sup(&self) -> f64 {
        self.d.iter().map(|d| d.norm()).fold(0.0, f64::max)
    }

    pub fn csv_header(&self) -> String {
        let mut cols = vec!["t".to_string()];
        let dims = |v: &[DVector<f64>]| v.first().map_or(0, |x| x.len());
        for (prefix, n) in [("eta", dims(&self.eta)), ("z", dims(&self.z)), ("d", dims(&self.d))] {
            cols.extend((0..n).map(|i| format!("{prefix}_{i}")));
        }
        cols.extend(["V_eps", "V_Z", "V_c", "dist"].map(String::from));
        cols.join(",")
    }

    /// Header line and one row per sample, newline-terminated.
    pub fn csv_body(&self) -> String {
        let mut out = self.csv_header();
        out.push('\n');
        for i in 0..self.len() {
            let mut row = vec![self.times[i]];
            row.extend(self.eta[i].iter());
            row.extend(self.z[i].iter());
            row.extend(self.d[i].iter());
            row.extend([self.v_eps[i], self.v_z[i], self.v_c[i], self.orbit_distance[i]]);
            let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            out.push_str(&line.join(","));
            out.push('\n');
        }
        out
    }

    /// Writes `# <comment>` lines followed by the CSV body.
    pub fn write_csv<W: Write>(&self, mut w: W, comments: &[String]) -> Result<()> {
        for c in comments {
            writeln!(w, "# {c}")?;
        }
        w.write_all(self.csv_body().as_bytes())?;
        Ok(())
    }
}

fn ensure_finite(t: f64, x: &DVector<f64>, stage: &str) -> Result<()> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite {
            t,
            detail: format!("{stage}: {x:?}"),
        })
    }
}

/// Classical RK4 from `x0` over `[0, horizon]` with step `dt`.
pub fn integrate(
    sys: &dyn ClosedLoop,
    x0: &DVector<f64>,
    horizon: f64,
    dt: f64,
) -> Result<TrajectoryRecord> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::OutOfRange(format!("dt = {dt} must be positive")));
    }
    if !(horizon >= dt) {
        return Err(Error::OutOfRange(format!("horizon {horizon} shorter than dt {dt}")));
    }
    let ratio = horizon / dt;
    if ratio > MAX_STEPS {
        return Err(Error::OutOfRange(format!("{ratio} steps exceed the limit of 1e7")));
    }
    if x0.len() != sys.state_dim() {
        return Err(Error::DimensionMismatch {
            expected: sys.state_dim(),
            got: x0.len(),
        });
    }
    ensure_finite(0.0, x0, "initial state")?;
    let steps = ratio.round() as usize;
    let mut rec = TrajectoryRecord::with_capacity(dt, sys.sigma(), steps + 1);
    let mut x = x0.clone();
    rec.push(0.0, x.clone(), sys.observe(0.0, &x)?);
    for i in 0..steps {
        let t = i as f64 * dt;
        let k1 = sys.derivative(t, &x)?;
        let k2 = sys.derivative(t + 0.5 * dt, &(&x + &k1 * (0.5 * dt)))?;
        let k3 = sys.derivative(t + 0.5 * dt, &(&x + &k2 * (0.5 * dt)))?;
        let k4 = sys.derivative(t + dt, &(&x + &k3 * dt))?;
        x += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
        let t_next = (i + 1) as f64 * dt;
        ensure_finite(t_next, &x, "state")?;
        rec.push(t_next, x.clone(), sys.observe(t_next, &x)?);
    }
    Ok(rec)
}

/// `max ‖η(t)‖` over `t ≥ settle_fraction · horizon`.
pub fn ultimate_bound(record: &TrajectoryRecord, settle_fraction: f64) -> Result<f64> {
    ultimate_max(record, settle_fraction, &record.eta_norms())
}

/// `max` of `values` over the samples with `t ≥ settle_fraction · horizon`.
pub fn ultimate_max(record: &TrajectoryRecord, settle_fraction: f64, values: &[f64]) -> Result<f64> {
    if !(settle_fraction > 0.0 && settle_fraction < 1.0) {
        return Err(Error::OutOfRange(format!(
            "settle_fraction = {settle_fraction} not in (0, 1)"
        )));
    }
    if record.is_empty() {
        return Err(Error::InsufficientData("empty trajectory record".into()));
    }
    let t0 = settle_fraction * record.horizon();
    Ok(record
        .times
        .iter()
        .zip(values)
        .filter(|(t, _)| **t >= t0)
        .map(|(_, v)| *v)
        .fold(0.0, f64::max))
}

/// Recorded `sup ‖d‖`, re-simulating with halved steps until two successive
/// estimates agree to `tol` (at most `max_halvings` times). Used for
/// disturbances that depend on the state.
pub fn refined_sup_norm(
    sys: &dyn ClosedLoop,
    x0: &DVector<f64>,
    horizon: f64,
    dt: f64,
    tol: f64,
    max_halvings: usize,
) -> Result<f64> {
    let mut step = dt;
    let mut prev = integrate(sys, x0, horizon, step)?.d_sup();
    for _ in 0..max_halvings {
        step *= 0.5;
        let next = integrate(sys, x0, horizon, step)?.d_sup();
        if (next - prev).abs() <= tol {
            return Ok(next);
        }
        prev = next;
    }
    Ok(prev)
}

/// Maximum state deviation of the runs at `dt` and `dt/2` from a run at
/// `dt/64`, compared on the coarse grid, and their ratio.
pub fn richardson_ratio(
    sys: &dyn ClosedLoop,
    x0: &DVector<f64>,
    horizon: f64,
    dt: f64,
) -> Result<(f64, f64, f64)> {
    let coarse = integrate(sys, x0, horizon, dt)?;
    let half = integrate(sys, x0, horizon, dt / 2.0)?;
    let fine = integrate(sys, x0, horizon, dt / 64.0)?;
    let err = |rec: &TrajectoryRecord, stride: usize| {
        (0..coarse.len())
            .map(|i| (&rec.states[i * stride] - &fine.states[i * 64]).amax())
            .fold(0.0, f64::max)
    };
    let e1 = err(&coarse, 1);
    let e2 = err(&half, 2);
    Ok((e1, e2, e1 / e2))
}
