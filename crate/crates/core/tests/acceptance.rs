//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on failure.

use std::f64::consts::TAU;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use phasestab::certify::{
    check_iss_lyapunov, check_sandwich, choose_sigma, composite_bounds, lemma3_bound,
    lemma3_coefficient, sigma_margin_ratio, AG_INTERCEPT_TOL,
};
use phasestab::clf::{ControllerMode, RapidClf};
use phasestab::commands::{certify_at, cmd_certify};
use phasestab::config::RunConfig;
use phasestab::disturbance::DisturbanceSignal;
use phasestab::output_dynamics::{build_fg, OutputDims};
use phasestab::plants::{
    mech_feedback_linearize, vz_converse_lyapunov, HopfPlant, LinearizationMode, MechPlant,
};
use phasestab::riccati::{
    care_residual, certificate, identity_q_solution, is_hurwitz, scale_epsilon,
    scaled_care_residual, solve_care,
};
use phasestab::simulator::{
    integrate, refined_sup_norm, richardson_ratio, ultimate_bound, HopfClosedLoop,
    MechClosedLoop,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

type Outcome = Result<String, String>;

fn dims_grid() -> Vec<OutputDims> {
    let mut out = Vec::new();
    for k1 in 0..=3 {
        for k2 in 0..=3 {
            if k1 + k2 >= 1 {
                out.push(OutputDims::new(k1, k2).unwrap());
            }
        }
    }
    out
}

fn random_spd(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    let a = DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
    &a * a.transpose() / n as f64 + DMatrix::identity(n, n) * 0.1
}

fn random_qs(dims: OutputDims) -> Vec<DMatrix<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(1000 + 10 * dims.k1 as u64 + dims.k2 as u64);
    (0..200).map(|_| random_spd(&mut rng, dims.eta_dim())).collect()
}

fn hopf_clf(dims: OutputDims, eps: f64) -> RapidClf {
    let d = build_fg(dims).unwrap();
    let q = DMatrix::identity(d.n(), d.n());
    RapidClf::new(certificate(&d, &q, eps).unwrap(), d).unwrap()
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let results: Vec<(f64, bool)> = dims_grid()
        .into_par_iter()
        .map(|dims| {
            let dyn_ = build_fg(dims).unwrap();
            let mut worst: f64 = 0.0;
            let mut hurwitz = true;
            for q in random_qs(dims) {
                match solve_care(&dyn_, &q) {
                    Ok(p) => {
                        worst = worst.max(care_residual(&dyn_, &p, &q));
                        let a = &dyn_.f - &dyn_.g * dyn_.g.transpose() * &p;
                        hurwitz &= is_hurwitz(&a);
                    }
                    Err(_) => return (f64::INFINITY, false),
                }
            }
            (worst, hurwitz)
        })
        .collect();
    let elapsed = start.elapsed().as_secs_f64();
    let worst = results.iter().map(|r| r.0).fold(0.0, f64::max);
    let hurwitz = results.iter().all(|r| r.1);
    let dims = OutputDims::new(0, 1).unwrap();
    let dyn_ = build_fg(dims).unwrap();
    let p = solve_care(&dyn_, &DMatrix::identity(2, 2)).unwrap();
    let closed = (p - identity_q_solution(dims)).amax();
    let msg = format!(
        "15 dims x 200 Q: max residual {worst:.2e}, Hurwitz {hurwitz}; closed-form error {closed:.2e}; {elapsed:.2} s"
    );
    if worst <= 1e-10 && hurwitz && closed <= 1e-12 && elapsed < 10.0 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn criterion_2() -> Outcome {
    let eps_grid = [0.05, 0.1, 0.5, 1.0];
    let worst = dims_grid()
        .into_par_iter()
        .map(|dims| {
            let dyn_ = build_fg(dims).unwrap();
            let mut worst: f64 = 0.0;
            for q in random_qs(dims) {
                let p = solve_care(&dyn_, &q).unwrap();
                for eps in eps_grid {
                    let s = scale_epsilon(&p, &q, dims, eps).unwrap();
                    worst = worst.max(scaled_care_residual(&dyn_, &s.p_eps, &s.q_eps, eps));
                }
            }
            worst
        })
        .reduce(|| 0.0, f64::max);
    let msg = format!("eps in {eps_grid:?}, 15 dims x 200 Q: max scaled residual {worst:.2e}");
    if worst <= 1e-10 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn criterion_3() -> Outcome {
    let dims = OutputDims::new(0, 1).unwrap();
    let mut worst: f64 = 0.0;
    for eps in [0.1, 0.5] {
        let clf = hopf_clf(dims, eps);
        let rate = clf.cert.rate();
        let sys = HopfClosedLoop::new(
            HopfPlant::with_defaults(dims),
            clf,
            ControllerMode::MinNorm,
            DisturbanceSignal::Zero { dim: 1 },
            1.0,
        )
        .unwrap();
        let x0 = sys
            .initial_state(&DVector::from_vec(vec![0.5, 0.0]), &DVector::from_vec(vec![1.2, 0.0]))
            .unwrap();
        let rec = integrate(&sys, &x0, 20.0, 1e-3).unwrap();
        let v0 = rec.v_eps[0];
        for (t, v) in rec.times.iter().zip(&rec.v_eps) {
            let envelope = v0 * (-rate * t).exp();
            if envelope > 1e-300 {
                worst = worst.max(v / envelope);
            }
        }
    }
    let msg = format!("eps in {{0.1, 0.5}}: max V_eps(t) / (V_eps(0) e^(-gamma t / eps)) = {worst:.6}");
    if worst <= 1.0 + 1e-3 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn criterion_4() -> Outcome {
    let start = Instant::now();
    let dims = OutputDims::new(0, 1).unwrap();
    let eps = 0.1;
    let amps = [0.01, 0.05, 0.1];
    let kinds = ["sinusoid", "random"];
    let jobs: Vec<(&str, f64)> = kinds
        .iter()
        .flat_map(|k| amps.iter().map(move |a| (*k, *a)))
        .collect();
    let results: Vec<(&str, f64, f64, f64)> = jobs
        .par_iter()
        .map(|&(kind, a)| {
            let signal = match kind {
                "sinusoid" => DisturbanceSignal::Sinusoid {
                    dim: 1,
                    amplitude: a,
                    frequency: 0.5,
                },
                _ => DisturbanceSignal::PiecewiseConstantRandom {
                    dim: 1,
                    amplitude: a,
                    dwell: 0.5,
                    seed: 7,
                },
            };
            let horizon = 20.0;
            let d_inf = signal.sup_norm(horizon).unwrap();
            let clf = hopf_clf(dims, eps);
            let bound = lemma3_bound(&clf.cert, d_inf);
            let sys = HopfClosedLoop::new(
                HopfPlant::with_defaults(dims),
                clf,
                ControllerMode::MinNorm,
                signal,
                1.0,
            )
            .unwrap();
            let x0 = sys
                .initial_state(&DVector::from_vec(vec![0.5, 0.0]), &DVector::from_vec(vec![1.2, 0.0]))
                .unwrap();
            let rec = integrate(&sys, &x0, horizon, 1e-3).unwrap();
            (kind, d_inf, ultimate_bound(&rec, 0.5).unwrap(), bound)
        })
        .collect();
    let elapsed = start.elapsed().as_secs_f64();
    let within = results.iter().all(|r| r.2 <= r.3);
    let mut max_dev: f64 = 0.0;
    for kind in kinds {
        let rows: Vec<_> = results.iter().filter(|r| r.0 == kind).collect();
        let base = rows[0].2 / rows[0].1;
        for r in &rows {
            max_dev = max_dev.max((r.2 / r.1 / base - 1.0).abs());
        }
    }
    let max_ratio = results.iter().map(|r| r.2 / r.3).fold(0.0, f64::max);
    let msg = format!(
        "6 runs: max measured/bound {max_ratio:.3e}, max deviation from linear {:.2}%; {elapsed:.2} s",
        100.0 * max_dev
    );
    if within && max_dev <= 0.25 && elapsed < 60.0 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn criterion_5() -> Outcome {
    let dims = OutputDims::new(0, 1).unwrap();
    let eps = 0.1;
    let eps_bar = 0.1;
    let clf = hopf_clf(dims, eps);
    let plant = HopfPlant::with_defaults(dims);
    let consts = plant.zero_dynamics_constants().unwrap();
    let l_q = plant.lipschitz_coupling();
    let sigma = choose_sigma(&clf.cert, &consts, l_q).unwrap();
    let margin = sigma_margin_ratio(&clf.cert, &consts, l_q, sigma);
    let (lower, upper) = composite_bounds(&clf.cert, sigma, &consts);
    let pg = clf.pg_norm();
    let cert = clf.cert.clone();
    let cases = [
        (DisturbanceSignal::Zero { dim: 1 }, [1.2, 0.0]),
        (DisturbanceSignal::Zero { dim: 1 }, [1.0, 0.0]),
        (
            DisturbanceSignal::Sinusoid {
                dim: 1,
                amplitude: 0.05,
                frequency: 0.5,
            },
            [0.7, 0.3],
        ),
    ];
    let mut vc_ok = true;
    let mut checked = 0;
    let mut sandwich_ok = true;
    let mut samples = 0;
    for (signal, z0) in cases {
        let horizon = 20.0;
        let d_inf = signal.sup_norm(horizon).unwrap();
        let sys = HopfClosedLoop::new(
            plant.clone(),
            clf.clone(),
            ControllerMode::MinNormPlusDamping { eps_bar },
            signal,
            sigma,
        )
        .unwrap();
        let x0 = sys
            .initial_state(&DVector::from_vec(vec![0.5, 0.0]), &DVector::from_row_slice(&z0))
            .unwrap();
        let rec = integrate(&sys, &x0, horizon, 1e-3).unwrap();
        let ly = check_iss_lyapunov(&rec, &cert, eps_bar, d_inf, pg).unwrap();
        vc_ok &= ly.vc_decrease_ok;
        checked += ly.checked_samples;
        let s = check_sandwich(&rec, lower, upper).unwrap();
        sandwich_ok &= s.ok;
        samples += s.samples;
    }
    let msg = format!(
        "sigma {sigma:.4e} (margin ratio {margin:.3}); V_c decrease on {checked} samples: {vc_ok}; sandwich on {samples} samples: {sandwich_ok}"
    );
    if vc_ok && sandwich_ok && samples >= 10_000 && (margin - 0.5).abs() <= 1e-12 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn criterion_6() -> Outcome {
    let mut violations = 0;
    let mut points = 0;
    for k1 in [0usize, 1] {
        let plant = HopfPlant::with_defaults(OutputDims::new(k1, 1).unwrap());
        let consts = plant.zero_dynamics_constants().unwrap();
        let (lo, hi) = (plant.r0 - plant.annulus, plant.r0 + plant.annulus);
        let (n_r, n_y) = if k1 == 0 { (100, 1) } else { (20, 5) };
        for i in 0..n_r {
            let r = lo + (hi - lo) * (i as f64 + 0.5) / n_r as f64;
            for yi in 0..n_y {
                let y1 = if k1 == 0 {
                    DVector::zeros(0)
                } else {
                    DVector::from_element(1, -0.5 + yi as f64 / (n_y - 1) as f64)
                };
                for j in 0..100 {
                    let a = TAU * j as f64 / 100.0;
                    let z = DVector::from_vec(vec![r * a.cos(), r * a.sin()]);
                    let (v, _) = vz_converse_lyapunov(&y1, &z, &plant).unwrap();
                    let dist = plant.zero_dynamics_distance(&y1, &z);
                    let d2 = dist * dist;
                    let (y1_dot, z_dot) = plant.partial_zero_dynamics(&y1, &z);
                    let vdot = v.derivative_along(&y1_dot, &z_dot);
                    let tol = 1e-12 * (1.0 + v.value);
                    let ok = consts.c4 * d2 <= v.value + tol
                        && v.value <= consts.c5 * d2 + tol
                        && vdot <= -consts.c6 * d2 + tol
                        && v.gradient_norm() <= consts.c7 * dist + tol;
                    violations += usize::from(!ok);
                    points += 1;
                }
            }
        }
    }
    let msg = format!("{points} annulus points (k1 = 0 and k1 = 1): {violations} violations");
    if violations == 0 && points >= 10_000 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn criterion_7() -> Outcome {
    let cfg = RunConfig::default();
    let r = certify_at(&cfg, cfg.eps).map_err(|e| e.to_string())?.report;
    let zs = r.zero_stability;
    let ratio = zs.final_distance / zs.initial_distance;
    let coef = lemma3_coefficient(&hopf_clf(cfg.dims().unwrap(), cfg.eps).cert);
    let gain_ok = r.ag_fit.gain.is_finite() && r.ag_fit.gain > 0.0;
    let msg = format!(
        "decay to {ratio:.2e} of initial; AG gain {:.4e}, intercept {:.2e}; eta gain {:.4e} <= lemma coefficient {coef:.4e}",
        r.ag_fit.gain, r.ag_fit.intercept, r.ag_eta_fit.gain
    );
    if r.zs_ok
        && ratio <= 1e-6
        && gain_ok
        && r.ag_fit.intercept.abs() <= AG_INTERCEPT_TOL
        && r.ag_eta_fit.gain <= coef
    {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn criterion_8() -> Outcome {
    let mut worst_u: f64 = 0.0;
    let mut worst_dev: f64 = 0.0;
    let mut sups = Vec::new();
    for k1 in [0usize, 1] {
        let dims = OutputDims::new(k1, 1).unwrap();
        let clf = hopf_clf(dims, 0.1);
        let plant = MechPlant::with_defaults(dims).unwrap();
        let eta0 = if k1 == 1 { vec![0.1, 0.05, 0.0] } else { vec![0.05, 0.0] };
        let z0 = if k1 == 1 { vec![0.05] } else { vec![0.05, 1.0] };
        let x0 = plant
            .phi_inverse(&DVector::from_vec(eta0), &DVector::from_vec(z0.clone()))
            .unwrap();
        // scaling runs start on the zero-dynamics surface
        let x_on = plant
            .phi_inverse(&DVector::zeros(dims.eta_dim()), &DVector::from_vec(z0))
            .unwrap();
        let mode = ControllerMode::MinNorm;
        let nominal = MechClosedLoop::new(
            plant.clone(),
            clf.clone(),
            mode,
            DisturbanceSignal::Zero { dim: 1 },
        )
        .unwrap();
        let rec = integrate(&nominal, &x0, 0.8, 1e-3).unwrap();
        for x in rec.states.iter().step_by(10) {
            let eta = plant.outputs(x);
            let (mu, _) = clf.auxiliary_input(&eta, mode).unwrap();
            let u_state = mech_feedback_linearize(&plant, x, LinearizationMode::State, &mu).unwrap();
            let u_time = plant.phase_based_control(&clf, mode, x, 0.0).unwrap().u;
            worst_u = worst_u.max((u_state - u_time).amax());
        }
        let errors = [0.01, 0.02, 0.04];
        let mut d_inf = Vec::new();
        for e in errors {
            let sys = MechClosedLoop::new(
                plant.clone(),
                clf.clone(),
                mode,
                DisturbanceSignal::PhaseErrorDriven {
                    amplitude: e,
                    frequency: 0.0,
                },
            )
            .unwrap();
            d_inf.push(refined_sup_norm(&sys, &x_on, 0.8, 1e-3, 1e-6, 3).unwrap());
        }
        let base = d_inf[0] / errors[0];
        for (d, e) in d_inf.iter().zip(errors) {
            worst_dev = worst_dev.max((d / e / base - 1.0).abs());
        }
        sups.push(d_inf);
    }
    let msg = format!(
        "max |u_time - u_state| {worst_u:.2e}; d_inf at e = 0.01, 0.02, 0.04: {:?}; max deviation from linear {:.2}%",
        sups.iter()
            .map(|v| v.iter().map(|d| format!("{d:.4e}")).collect::<Vec<_>>())
            .collect::<Vec<_>>(),
        100.0 * worst_dev
    );
    if worst_u <= 1e-12 && worst_dev <= 0.25 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn criterion_9() -> Outcome {
    let dims = OutputDims::new(0, 1).unwrap();
    let sys = HopfClosedLoop::new(
        HopfPlant::with_defaults(dims),
        hopf_clf(dims, 0.1),
        ControllerMode::MinNorm,
        DisturbanceSignal::Zero { dim: 1 },
        1.0,
    )
    .unwrap();
    let x0 = sys
        .initial_state(&DVector::zeros(2), &DVector::from_vec(vec![1.4, 0.3]))
        .unwrap();
    let (e1, e2, ratio) = richardson_ratio(&sys, &x0, 5.0, 0.05).map_err(|e| e.to_string())?;
    let msg = format!("errors {e1:.3e} (dt = 0.05), {e2:.3e} (dt = 0.025): ratio {ratio:.2}");
    if (12.0..=20.0).contains(&ratio) {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn criterion_10() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let overrides = vec![
        format!("output_dir={}", serde_json::to_string(&dir.path()).unwrap()),
        "disturbance.kind=random".to_string(),
        "seed=42".to_string(),
    ];
    let cfg = RunConfig::from_json_with_overrides("{}", &overrides).map_err(|e| e.to_string())?;
    let read_all = |files: &[std::path::PathBuf]| -> Vec<Vec<u8>> {
        files.iter().map(|f| std::fs::read(f).unwrap()).collect()
    };
    let first = cmd_certify(&cfg).map_err(|e| e.to_string())?;
    let a = read_all(&first.files);
    let second = cmd_certify(&cfg).map_err(|e| e.to_string())?;
    let b = read_all(&second.files);
    let bytes: usize = a.iter().map(Vec::len).sum();
    let msg = format!("{} files, {bytes} bytes compared", a.len());
    if a == b && first.files == second.files {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("CARE correctness", criterion_1),
        ("eps-scaled CARE", criterion_2),
        ("RES-CLF decrease", criterion_3),
        ("ultimate bound and linear scaling", criterion_4),
        ("composite Lyapunov decrease", criterion_5),
        ("converse-Lyapunov inequalities", criterion_6),
        ("zero stability and asymptotic gain", criterion_7),
        ("time-based vs state-based control", criterion_8),
        ("integrator order", criterion_9),
        ("determinism", criterion_10),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(f).unwrap_or_else(|_| Err("panicked".into()));
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(msg) => println!("PASS {:>2} {name}: {msg} [{secs:.2} s]", i + 1),
            Err(msg) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {msg} [{secs:.2} s]", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
