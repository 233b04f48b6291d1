//! Phase-to-state stability checks over recorded trajectories.
//!
//! Every bound is computed from the certificate and plant constants passed in.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::plants::ZeroDynamicsConstants;
use crate::riccati::ResClfCertificate;
use crate::simulator::{ultimate_bound, ultimate_max, TrajectoryRecord};

/// Largest admissible relative deviation from the fitted linear gain.
pub const LINEAR_ENVELOPE: f64 = 0.25;
/// Largest admissible asymptotic-gain intercept.
pub const AG_INTERCEPT_TOL: f64 = 1e-4;
/// Zero stability requires decay below this fraction of the initial distance.
pub const ZS_DECAY_FRACTION: f64 = 1e-6;
/// Derivative checks allow this fraction of the trace maximum.
pub const DERIVATIVE_TOL: f64 = 1e-6;
/// Minimum horizon, in units of the time constant `ε/γ`.
pub const HORIZON_TIME_CONSTANTS: f64 = 20.0;
/// Absolute slack, relative to the trace maximum, for pointwise inequalities.
pub const ROUNDOFF_SLACK: f64 = 1e-12;

/// `4c₂/(γc₁ε) · d_inf`
pub fn lemma3_bound(cert: &ResClfCertificate, d_inf: f64) -> f64 {
    lemma3_coefficient(cert) * d_inf
}

pub fn lemma3_coefficient(cert: &ResClfCertificate) -> f64 {
    4.0 * cert.c2 / (cert.gamma * cert.c1 * cert.eps)
}

/// `2ε̄c₂/(c₁²ε²) · d_inf`
pub fn lemma4_bound(cert: &ResClfCertificate, eps_bar: f64, d_inf: f64) -> f64 {
    lemma4_coefficient(cert, eps_bar) * d_inf
}

pub fn lemma4_coefficient(cert: &ResClfCertificate, eps_bar: f64) -> f64 {
    2.0 * eps_bar * cert.c2 / (cert.c1 * cert.c1 * cert.eps * cert.eps)
}

/// Half the largest `σ` with `c₆c₁(γ/ε) − σc₇²L_q²/4 > 0`; 1 when `L_q = 0`.
pub fn choose_sigma(
    cert: &ResClfCertificate,
    consts: &ZeroDynamicsConstants,
    l_q: f64,
) -> Result<f64> {
    let ZeroDynamicsConstants { c4, c5, c6, c7 } = *consts;
    if [c4, c5, c6, c7].iter().any(|c| !(*c > 0.0 && c.is_finite())) {
        return Err(Error::OutOfRange(format!(
            "zero-dynamics constants must be positive: {consts:?}"
        )));
    }
    if !(l_q >= 0.0 && l_q.is_finite()) {
        return Err(Error::OutOfRange(format!("L_q = {l_q} must be non-negative")));
    }
    if l_q == 0.0 {
        return Ok(1.0);
    }
    Ok(0.5 * 4.0 * c6 * cert.c1 * cert.rate() / (c7 * c7 * l_q * l_q))
}

/// `σc₇²L_q²/4` divided by `c₆c₁γ/ε`; the σ condition holds when this is below 1.
pub fn sigma_margin_ratio(
    cert: &ResClfCertificate,
    consts: &ZeroDynamicsConstants,
    l_q: f64,
    sigma: f64,
) -> f64 {
    sigma * consts.c7 * consts.c7 * l_q * l_q / (4.0 * consts.c6 * cert.c1 * cert.rate())
}

/// `(min{σc₄, c₁}, max{σc₅, c₂/ε²})`
pub fn composite_bounds(
    cert: &ResClfCertificate,
    sigma: f64,
    consts: &ZeroDynamicsConstants,
) -> (f64, f64) {
    (
        (sigma * consts.c4).min(cert.c1),
        (sigma * consts.c5).max(cert.c2 / (cert.eps * cert.eps)),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SandwichCheck {
    pub ok: bool,
    pub samples: usize,
    /// Smallest `V_c / (lower · r²)` with `r² = dist² + ‖η‖²`.
    pub min_lower_ratio: f64,
    /// Largest `V_c / (upper · r²)`.
    pub max_upper_ratio: f64,
}

/// `lower·(dist² + ‖η‖²) ≤ V_c ≤ upper·(dist² + ‖η‖²)` at every sample, with
/// `dist` the zero-dynamics orbit distance, up to `1e-12 · max V_c`. Ratios
/// are reported over the samples where `lower·r²` exceeds that slack.
pub fn check_sandwich(record: &TrajectoryRecord, lower: f64, upper: f64) -> Result<SandwichCheck> {
    if record.sigma.is_none() {
        return Err(Error::Config("record has no composite Lyapunov trace".into()));
    }
    let tol = ROUNDOFF_SLACK * record.v_c.iter().copied().fold(0.0, f64::max);
    let mut out = SandwichCheck {
        ok: true,
        samples: record.len(),
        min_lower_ratio: f64::INFINITY,
        max_upper_ratio: 0.0,
    };
    for i in 0..record.len() {
        let r2 = record.zero_distance[i].powi(2) + record.eta[i].norm_squared();
        let vc = record.v_c[i];
        out.ok &= vc >= lower * r2 - tol && vc <= upper * r2 + tol;
        if lower * r2 > tol {
            out.min_lower_ratio = out.min_lower_ratio.min(vc / (lower * r2));
            out.max_upper_ratio = out.max_upper_ratio.max(vc / (upper * r2));
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZeroStability {
    pub zs_ok: bool,
    pub initial_distance: f64,
    pub final_distance: f64,
    /// `δ₂` of the fitted envelope `δ₁e^{−δ₂t}`; absent when the start is on the orbit.
    pub decay_rate: Option<f64>,
    pub envelope_coefficient: Option<f64>,
}

/// Log-linear fit of the orbit distance of a `d ≡ 0` run.
pub fn check_zero_stability(record: &TrajectoryRecord) -> Result<ZeroStability> {
    if record.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "{} samples, need at least 3",
            record.len()
        )));
    }
    if record.d.iter().any(|d| d.iter().any(|v| *v != 0.0)) {
        return Err(Error::Config("zero stability needs a record with d ≡ 0".into()));
    }
    let dist = &record.orbit_distance;
    let d0 = dist[0];
    let tail_start = record.len() - (record.len() / 10).max(1);
    let tail_max = dist[tail_start..].iter().copied().fold(0.0, f64::max);
    let final_distance = *dist.last().unwrap();
    if d0 <= 1e-12 {
        return Ok(ZeroStability {
            zs_ok: dist.iter().all(|d| *d <= ZS_DECAY_FRACTION),
            initial_distance: d0,
            final_distance,
            decay_rate: None,
            envelope_coefficient: None,
        });
    }
    let floor = decay_floor(d0);
    let decay_rate = fit_decay_rate(&record.times, dist);
    let envelope_coefficient = decay_rate.map(|rate| {
        record
            .times
            .iter()
            .zip(dist)
            .filter(|(_, d)| **d > floor)
            .map(|(t, d)| d * (rate * t).exp() / d0)
            .fold(0.0, f64::max)
    });
    Ok(ZeroStability {
        zs_ok: tail_max <= ZS_DECAY_FRACTION * d0 && final_distance <= ZS_DECAY_FRACTION * d0,
        initial_distance: d0,
        final_distance,
        decay_rate,
        envelope_coefficient,
    })
}

/// Exponential decay rate from a least-squares fit of `ln v` against `t`,
/// using the samples above `max(1e-10·v₀, 1e-14)`.
pub fn fit_decay_rate(times: &[f64], values: &[f64]) -> Option<f64> {
    let floor = decay_floor(*values.first()?);
    let pts: Vec<(f64, f64)> = times
        .iter()
        .zip(values)
        .filter(|(_, v)| **v > floor)
        .map(|(t, v)| (*t, v.ln()))
        .collect();
    (pts.len() >= 3).then(|| -least_squares(&pts).0)
}

fn decay_floor(v0: f64) -> f64 {
    (1e-10 * v0).max(1e-14)
}

/// `(slope, intercept)` of the ordinary least-squares line.
fn least_squares(pts: &[(f64, f64)]) -> (f64, f64) {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return (0.0, my);
    }
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GainFit {
    pub gain: f64,
    pub intercept: f64,
    /// Largest `|m − gain·a| / (gain·a)` over the nonzero amplitudes.
    pub max_relative_deviation: f64,
    pub ok: bool,
}

/// Least-squares line through `(‖d‖∞, measured ultimate value)` pairs.
pub fn check_asymptotic_gain(amplitudes: &[f64], measured: &[f64]) -> Result<GainFit> {
    if amplitudes.len() != measured.len() {
        return Err(Error::DimensionMismatch {
            expected: amplitudes.len(),
            got: measured.len(),
        });
    }
    if amplitudes.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "{} runs, need at least 3",
            amplitudes.len()
        )));
    }
    if !amplitudes.contains(&0.0) {
        return Err(Error::InsufficientData("amplitude grid must include 0".into()));
    }
    let pts: Vec<(f64, f64)> = amplitudes.iter().copied().zip(measured.iter().copied()).collect();
    let (gain, intercept) = least_squares(&pts);
    let mut max_dev: f64 = 0.0;
    for &(a, m) in &pts {
        if a > 0.0 {
            max_dev = max_dev.max((m - gain * a).abs() / (gain * a));
        }
    }
    let all_zero = amplitudes.iter().all(|a| *a == 0.0);
    let gain_ok = gain.is_finite() && (gain > 0.0 || all_zero);
    Ok(GainFit {
        gain,
        intercept,
        max_relative_deviation: if all_zero { 0.0 } else { max_dev },
        ok: gain_ok && intercept.abs() <= AG_INTERCEPT_TOL && max_dev <= LINEAR_ENVELOPE,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LyapunovCheck {
    pub vc_decrease_ok: bool,
    /// Samples with `‖η‖` at or above the threshold.
    pub checked_samples: usize,
    pub threshold: f64,
    /// Largest central-difference `V̇_c` over the checked samples.
    pub max_vc_dot: Option<f64>,
    pub vc_tolerance: f64,
    pub e_iss_form_ok: bool,
    /// Largest `V̇_ε + (γ/ε)V_ε − 2‖η‖‖P_εG‖ d_inf`.
    pub max_e_iss_excess: f64,
    pub e_iss_tolerance: f64,
}

/// Central-difference `V̇_c ≤ tol` where `‖η‖ ≥ (2ε̄c₂/(c₁²ε²)) d_inf`, and
/// `V̇_ε ≤ −(γ/ε)V_ε + 2‖η‖‖P_εG‖ d_inf` at every interior sample.
pub fn check_iss_lyapunov(
    record: &TrajectoryRecord,
    cert: &ResClfCertificate,
    eps_bar: f64,
    d_inf: f64,
    pg_norm: f64,
) -> Result<LyapunovCheck> {
    if record.sigma.is_none() {
        return Err(Error::Config("record carries no sigma".into()));
    }
    if record.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "{} samples, need at least 3",
            record.len()
        )));
    }
    let h = 2.0 * record.dt;
    let threshold = lemma4_bound(cert, eps_bar, d_inf);
    let vc_tol = DERIVATIVE_TOL * record.v_c.iter().copied().fold(0.0, f64::max);
    let ve_tol = DERIVATIVE_TOL * record.v_eps.iter().copied().fold(0.0, f64::max);
    let mut out = LyapunovCheck {
        vc_decrease_ok: true,
        checked_samples: 0,
        threshold,
        max_vc_dot: None,
        vc_tolerance: vc_tol,
        e_iss_form_ok: true,
        max_e_iss_excess: f64::NEG_INFINITY,
        e_iss_tolerance: ve_tol,
    };
    for i in 1..record.len() - 1 {
        let eta_norm = record.eta[i].norm();
        if eta_norm >= threshold {
            let vc_dot = (record.v_c[i + 1] - record.v_c[i - 1]) / h;
            out.checked_samples += 1;
            out.max_vc_dot = Some(out.max_vc_dot.map_or(vc_dot, |m| m.max(vc_dot)));
        }
        let ve_dot = (record.v_eps[i + 1] - record.v_eps[i - 1]) / h;
        let excess =
            ve_dot + cert.rate() * record.v_eps[i] - 2.0 * eta_norm * pg_norm * d_inf;
        out.max_e_iss_excess = out.max_e_iss_excess.max(excess);
    }
    out.vc_decrease_ok = out.max_vc_dot.is_none_or(|m| m <= vc_tol);
    out.e_iss_form_ok = out.max_e_iss_excess <= ve_tol;
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckOutcome {
    pub name: String,
    pub mandatory: bool,
    pub passed: bool,
}

/// Recorded runs and constants from which an [`IssReport`] is assembled.
pub struct CertifyInputs<'a> {
    pub cert: &'a ResClfCertificate,
    pub eps_bar: f64,
    pub constants: ZeroDynamicsConstants,
    pub l_q: f64,
    pub sigma: f64,
    pub pg_norm: f64,
    pub settle_fraction: f64,
    /// Run from the nominal initial condition with `d ≡ 0`.
    pub zero_run: &'a TrajectoryRecord,
    /// Run with the configured disturbance.
    pub disturbed_run: &'a TrajectoryRecord,
    pub d_inf: f64,
    /// Gain-grid runs with their `‖d‖∞`; must include a zero amplitude.
    pub gain_runs: &'a [(f64, TrajectoryRecord)],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IssReport {
    pub eps: f64,
    pub eps_bar: f64,
    pub gamma: f64,
    pub c1: f64,
    pub c2: f64,
    pub d_inf: f64,
    pub horizon: f64,
    pub horizon_ok: bool,
    pub eta_ultimate_measured: f64,
    pub eta_bound_lemma3: f64,
    pub eta_bound_lemma4: f64,
    pub lemma3_ok: bool,
    pub lemma4_ok: bool,
    pub sigma: f64,
    pub sigma_margin_ratio: f64,
    pub sigma_condition_ok: bool,
    pub composite_lower: f64,
    pub composite_upper: f64,
    pub sandwich: SandwichCheck,
    pub zero_stability: ZeroStability,
    pub zs_ok: bool,
    pub e_iss_rate_measured: Option<f64>,
    pub gain_amplitudes: Vec<f64>,
    pub gain_ultimate_distance: Vec<f64>,
    pub gain_ultimate_eta: Vec<f64>,
    pub ag_fit: GainFit,
    pub ag_gain_estimate: f64,
    pub ag_eta_fit: GainFit,
    pub ag_eta_gain_within_lemma3: bool,
    pub lyapunov_zero_run: LyapunovCheck,
    pub lyapunov_disturbed_run: LyapunovCheck,
    pub vc_decrease_ok: bool,
    pub e_iss_form_ok: bool,
    pub checks: Vec<CheckOutcome>,
    pub all_mandatory_passed: bool,
}

impl IssReport {
    pub fn assemble(inp: &CertifyInputs<'_>) -> Result<Self> {
        let cert = inp.cert;
        let sf = inp.settle_fraction;
        let horizon = inp.disturbed_run.horizon();
        let eta_ultimate = ultimate_bound(inp.disturbed_run, sf)?;
        let bound3 = lemma3_bound(cert, inp.d_inf);
        let bound4 = lemma4_bound(cert, inp.eps_bar, inp.d_inf);
        let margin = sigma_margin_ratio(cert, &inp.constants, inp.l_q, inp.sigma);
        let (lower, upper) = composite_bounds(cert, inp.sigma, &inp.constants);

        let mut sandwich = check_sandwich(inp.zero_run, lower, upper)?;
        let s2 = check_sandwich(inp.disturbed_run, lower, upper)?;
        sandwich = SandwichCheck {
            ok: sandwich.ok && s2.ok,
            samples: sandwich.samples + s2.samples,
            min_lower_ratio: sandwich.min_lower_ratio.min(s2.min_lower_ratio),
            max_upper_ratio: sandwich.max_upper_ratio.max(s2.max_upper_ratio),
        };

        let zs = check_zero_stability(inp.zero_run)?;

        let mut amps = Vec::new();
        let mut dists = Vec::new();
        let mut etas = Vec::new();
        let mut lemma3_ok = eta_ultimate <= bound3;
        for (a, rec) in inp.gain_runs {
            let eta_u = ultimate_bound(rec, sf)?;
            // the d ≡ 0 run is covered by the zero-stability check
            if *a > 0.0 {
                lemma3_ok &= eta_u <= lemma3_bound(cert, *a);
            }
            amps.push(*a);
            dists.push(ultimate_max(rec, sf, &rec.orbit_distance)?);
            etas.push(eta_u);
        }
        let ag_fit = check_asymptotic_gain(&amps, &dists)?;
        let ag_eta_fit = check_asymptotic_gain(&amps, &etas)?;
        let eta_gain_ok = ag_eta_fit.gain <= lemma3_coefficient(cert);

        let ly0 = check_iss_lyapunov(inp.zero_run, cert, inp.eps_bar, 0.0, inp.pg_norm)?;
        let ly1 = check_iss_lyapunov(inp.disturbed_run, cert, inp.eps_bar, inp.d_inf, inp.pg_norm)?;
        let vc_ok = ly0.vc_decrease_ok && ly1.vc_decrease_ok;
        let e_iss_ok = ly0.e_iss_form_ok && ly1.e_iss_form_ok;
        let horizon_ok = horizon >= HORIZON_TIME_CONSTANTS / cert.rate();
        let envelope_ok = zs.initial_distance <= 1e-12 || zs.decay_rate.is_some_and(|r| r > 0.0);

        let check = |name: &str, mandatory: bool, passed: bool| CheckOutcome {
            name: name.to_string(),
            mandatory,
            passed,
        };
        let checks = vec![
            check("horizon", true, horizon_ok),
            check("lemma3_bound", true, lemma3_ok),
            check("lemma4_bound", false, eta_ultimate <= bound4),
            check("sigma_condition", true, margin < 1.0),
            check("composite_sandwich", true, sandwich.ok),
            check("zero_stability", true, zs.zs_ok),
            check("e_iss_envelope", true, envelope_ok),
            check("asymptotic_gain", true, ag_fit.ok),
            check("eta_gain_within_lemma3", true, eta_gain_ok),
            check("vc_decrease", true, vc_ok),
            check("e_iss_form", true, e_iss_ok),
        ];
        let all = checks.iter().all(|c| c.passed || !c.mandatory);
        Ok(Self {
            eps: cert.eps,
            eps_bar: inp.eps_bar,
            gamma: cert.gamma,
            c1: cert.c1,
            c2: cert.c2,
            d_inf: inp.d_inf,
            horizon,
            horizon_ok,
            eta_ultimate_measured: eta_ultimate,
            eta_bound_lemma3: bound3,
            eta_bound_lemma4: bound4,
            lemma3_ok,
            lemma4_ok: eta_ultimate <= bound4,
            sigma: inp.sigma,
            sigma_margin_ratio: margin,
            sigma_condition_ok: margin < 1.0,
            composite_lower: lower,
            composite_upper: upper,
            sandwich,
            zs_ok: zs.zs_ok,
            e_iss_rate_measured: zs.decay_rate,
            zero_stability: zs,
            gain_amplitudes: amps,
            gain_ultimate_distance: dists,
            gain_ultimate_eta: etas,
            ag_gain_estimate: ag_fit.gain,
            ag_fit,
            ag_eta_fit,
            ag_eta_gain_within_lemma3: eta_gain_ok,
            lyapunov_zero_run: ly0,
            lyapunov_disturbed_run: ly1,
            vc_decrease_ok: vc_ok,
            e_iss_form_ok: e_iss_ok,
            checks,
            all_mandatory_passed: all,
        })
    }

    /// Human-readable summary table.
    pub fn table(&self) -> String {
        let mut s = String::new();
        let mut row = |k: &str, v: String| s.push_str(&format!("{k:<28} {v}\n"));
        row("eps", format!("{}", self.eps));
        row("eps_bar", format!("{}", self.eps_bar));
        row("gamma / c1 / c2", format!("{:.6} / {:.6} / {:.6}", self.gamma, self.c1, self.c2));
        row("d_inf", format!("{:.6e}", self.d_inf));
        row("eta ultimate (measured)", format!("{:.6e}", self.eta_ultimate_measured));
        row("eta bound (lemma 3)", format!("{:.6e}", self.eta_bound_lemma3));
        row("eta bound (lemma 4)", format!("{:.6e}", self.eta_bound_lemma4));
        row("sigma", format!("{:.6e} (margin ratio {:.3})", self.sigma, self.sigma_margin_ratio));
        row("composite bounds", format!("[{:.6e}, {:.6e}]", self.composite_lower, self.composite_upper));
        row(
            "decay rate",
            self.e_iss_rate_measured.map_or("n/a".into(), |r| format!("{r:.6}")),
        );
        row("AG gain (orbit distance)", format!("{:.6e}", self.ag_gain_estimate));
        row("AG gain (eta)", format!("{:.6e}", self.ag_eta_fit.gain));
        s.push('\n');
        for c in &self.checks {
            let verdict = if c.passed { "PASS" } else { "FAIL" };
            let kind = if c.mandatory { "" } else { " (informational)" };
            s.push_str(&format!("{:<28} {verdict}{kind}\n", c.name));
        }
        s.push_str(&format!(
            "{:<28} {}\n",
            "overall",
            if self.all_mandatory_passed { "PASS" } else { "FAIL" }
        ));
        s
    }
}
