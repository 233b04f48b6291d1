//! Command pipelines behind the `phasestab` binary.
//!
//! Every file written embeds the resolved configuration and a SHA-256 hash of
//! its content.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DVector;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::certify::{
    choose_sigma, lemma3_bound, lemma4_bound, CertifyInputs, IssReport,
};
use crate::clf::RapidClf;
use crate::config::{DisturbanceKind, PlantKind, RunConfig};
use crate::disturbance::DisturbanceSignal;
use crate::error::{Error, Result};
use crate::output_dynamics::build_fg;
use crate::riccati::{certificate, is_hurwitz, ResClfCertificate, RESIDUAL_TOL};
use crate::simulator::{
    integrate, ultimate_bound, ultimate_max, HopfClosedLoop, MechClosedLoop, TrajectoryRecord,
};

/// What a command produced.
#[derive(Debug, Clone)]
pub struct CommandOutcome {
    /// `false` when a mandatory check failed.
    pub passed: bool,
    pub files: Vec<PathBuf>,
    /// Text for standard output.
    pub summary: String,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// JSON document `{config, result, sha256}` where the hash covers the
/// compact serialization of `{config, result}`.
pub fn json_envelope<T: Serialize>(cfg: &RunConfig, result: &T) -> Result<String> {
    let mut doc = json!({ "config": cfg, "result": result });
    let hash = sha256_hex(&serde_json::to_vec(&doc)?);
    doc.as_object_mut()
        .expect("envelope is an object")
        .insert("sha256".into(), Value::String(hash));
    let mut text = serde_json::to_string_pretty(&doc)?;
    text.push('\n');
    Ok(text)
}

/// CSV with `# config:` and `# sha256:` comment lines; the hash covers the
/// header and data rows.
pub fn csv_document(cfg: &RunConfig, record: &TrajectoryRecord) -> Result<String> {
    let body = record.csv_body();
    let mut out = Vec::new();
    record.write_csv(
        &mut out,
        &[
            format!("config: {}", cfg.to_compact_json()?),
            format!("sha256: {}", sha256_hex(body.as_bytes())),
        ],
    )?;
    Ok(String::from_utf8(out).expect("CSV is UTF-8"))
}

fn plain_csv_document(cfg: &RunConfig, body: &str) -> Result<String> {
    Ok(format!(
        "# config: {}\n# sha256: {}\n{body}",
        cfg.to_compact_json()?,
        sha256_hex(body.as_bytes())
    ))
}

fn write_files(dir: &Path, files: &[(&str, String)]) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    files
        .iter()
        .map(|(name, text)| {
            let path = dir.join(name);
            fs::write(&path, text)?;
            Ok(path)
        })
        .collect()
}

fn synthesize(cfg: &RunConfig, eps: f64) -> Result<RapidClf> {
    let dynamics = build_fg(cfg.dims()?)?;
    let cert = certificate(&dynamics, &cfg.q_matrix()?, eps)?;
    RapidClf::new(cert, dynamics)
}

#[derive(Debug, Serialize)]
struct SynthResult<'a> {
    certificate: &'a ResClfCertificate,
    closed_loop_hurwitz: bool,
    rate: f64,
}

pub fn cmd_synth(cfg: &RunConfig) -> Result<CommandOutcome> {
    let clf = synthesize(cfg, cfg.eps)?;
    let cert = &clf.cert;
    let a = &clf.dynamics.f - &clf.dynamics.g * clf.dynamics.g.transpose() * &cert.p;
    let hurwitz = is_hurwitz(&a);
    let result = SynthResult {
        certificate: cert,
        closed_loop_hurwitz: hurwitz,
        rate: cert.rate(),
    };
    let files = write_files(
        Path::new(&cfg.output_dir),
        &[("certificate.json", json_envelope(cfg, &result)?)],
    )?;
    let summary = format!(
        "gamma = {:.12}\nc1 = {:.12}\nc2 = {:.12}\ncare residual = {:.3e}\nscaled care residual = {:.3e}\n",
        cert.gamma, cert.c1, cert.c2, cert.care_residual, cert.scaled_care_residual
    );
    Ok(CommandOutcome {
        passed: hurwitz
            && cert.care_residual <= RESIDUAL_TOL
            && cert.scaled_care_residual <= RESIDUAL_TOL,
        files,
        summary,
    })
}

/// A Hopf closed loop built from the configuration at `eps`.
pub struct HopfRun {
    pub system: HopfClosedLoop,
    pub x0: DVector<f64>,
    pub sigma: f64,
}

impl HopfRun {
    pub fn new(cfg: &RunConfig, eps: f64, disturbance: DisturbanceSignal) -> Result<Self> {
        let clf = synthesize(cfg, eps)?;
        let plant = cfg.hopf_plant()?;
        let sigma = match cfg.sigma_override {
            Some(s) => s,
            None => choose_sigma(
                &clf.cert,
                &plant.zero_dynamics_constants()?,
                plant.lipschitz_coupling(),
            )?,
        };
        let system =
            HopfClosedLoop::new(plant, clf, cfg.controller_mode(), disturbance, sigma)?;
        let z0 = DVector::from_column_slice(&cfg.hopf.z0);
        let x0 = system.initial_state(&cfg.hopf_eta0()?, &z0)?;
        Ok(Self { system, x0, sigma })
    }

    pub fn run(&self, cfg: &RunConfig) -> Result<TrajectoryRecord> {
        integrate(&self.system, &self.x0, cfg.integrator.horizon, cfg.integrator.dt)
    }
}

fn mech_run(cfg: &RunConfig) -> Result<(MechClosedLoop, DVector<f64>)> {
    let clf = synthesize(cfg, cfg.eps)?;
    let plant = cfg.mech_plant()?;
    let x0 = cfg.mech_x0(&plant)?;
    let signal = cfg.disturbance_signal(clf.dynamics.m());
    Ok((MechClosedLoop::new(plant, clf, cfg.controller_mode(), signal)?, x0))
}

#[derive(Debug, Serialize)]
struct SimulationSummary {
    plant: PlantKind,
    samples: usize,
    dt: f64,
    horizon: f64,
    sigma: Option<f64>,
    d_sup_recorded: f64,
    final_orbit_distance: f64,
    final_v_eps: f64,
    eta_ultimate: f64,
}

pub fn cmd_simulate(cfg: &RunConfig) -> Result<CommandOutcome> {
    let record = match cfg.plant {
        PlantKind::Hopf => {
            let run = HopfRun::new(cfg, cfg.eps, cfg.disturbance_signal(cfg.dims()?.input_dim()))?;
            run.run(cfg)?
        }
        PlantKind::Mech => {
            let (sys, x0) = mech_run(cfg)?;
            integrate(&sys, &x0, cfg.mech.horizon, cfg.integrator.dt)?
        }
    };
    let summary = SimulationSummary {
        plant: cfg.plant,
        samples: record.len(),
        dt: record.dt,
        horizon: record.horizon(),
        sigma: record.sigma,
        d_sup_recorded: record.d_sup(),
        final_orbit_distance: *record.orbit_distance.last().expect("non-empty record"),
        final_v_eps: *record.v_eps.last().expect("non-empty record"),
        eta_ultimate: ultimate_bound(&record, cfg.settle_fraction)?,
    };
    let files = write_files(
        Path::new(&cfg.output_dir),
        &[
            ("trajectory.csv", csv_document(cfg, &record)?),
            ("summary.json", json_envelope(cfg, &summary)?),
        ],
    )?;
    Ok(CommandOutcome {
        passed: true,
        files,
        summary: format!(
            "samples = {}\nfinal orbit distance = {:.6e}\neta ultimate = {:.6e}\n",
            summary.samples, summary.final_orbit_distance, summary.eta_ultimate
        ),
    })
}

/// Disturbance used for the gain grid: the configured kind, or a sinusoid
/// when the configured kind is `zero`.
fn gain_signal(cfg: &RunConfig, dim: usize) -> DisturbanceSignal {
    match cfg.disturbance.kind {
        DisturbanceKind::Zero => DisturbanceSignal::Sinusoid {
            dim,
            amplitude: 0.0,
            frequency: cfg.disturbance.frequency,
        },
        _ => cfg.disturbance_signal(dim),
    }
}

/// Gain-grid amplitudes: zero followed by the configured levels, ascending.
fn gain_amplitudes(cfg: &RunConfig) -> Vec<f64> {
    let mut amps: Vec<f64> = std::iter::once(0.0)
        .chain(cfg.sweep.amplitudes.iter().copied().filter(|a| *a > 0.0))
        .collect();
    amps.sort_by(f64::total_cmp);
    amps.dedup();
    amps
}

/// Runs and records of one certification at `eps`.
pub struct Certification {
    pub report: IssReport,
    pub disturbed_run: TrajectoryRecord,
}

/// Simulates the zero-disturbance, configured-disturbance and gain-grid runs
/// concurrently and assembles the report.
pub fn certify_at(cfg: &RunConfig, eps: f64) -> Result<Certification> {
    if cfg.plant != PlantKind::Hopf {
        return Err(Error::Config(
            "certify supports plant = hopf; use simulate for the mech plant".into(),
        ));
    }
    let m = cfg.dims()?.input_dim();
    let horizon = cfg.integrator.horizon;
    let configured = cfg.disturbance_signal(m);
    let gain = gain_signal(cfg, m);
    let amps = gain_amplitudes(cfg);
    if amps.len() < 3 {
        return Err(Error::Config(
            "sweep.amplitudes needs at least two positive levels".into(),
        ));
    }

    let mut signals = vec![DisturbanceSignal::Zero { dim: m }, configured.clone()];
    let mut d_infs = vec![0.0, configured.sup_norm(horizon)?];
    for &a in amps.iter().filter(|a| **a > 0.0) {
        let s = gain.with_amplitude(a);
        d_infs.push(s.sup_norm(horizon)?);
        signals.push(s);
    }
    let runs: Vec<HopfRun> = signals
        .into_iter()
        .map(|s| HopfRun::new(cfg, eps, s))
        .collect::<Result<_>>()?;
    let mut records: Vec<TrajectoryRecord> = runs
        .par_iter()
        .map(|r| r.run(cfg))
        .collect::<Result<_>>()?;

    let base = &runs[0];
    let plant = &base.system.plant;
    let gain_runs: Vec<(f64, TrajectoryRecord)> = std::iter::once((0.0, records[0].clone()))
        .chain(d_infs[2..].iter().copied().zip(records.drain(2..)))
        .collect();
    let disturbed = records.pop().expect("configured run");
    let zero = records.pop().expect("zero run");
    let report = IssReport::assemble(&CertifyInputs {
        cert: &base.system.clf.cert,
        eps_bar: cfg.eps_bar,
        constants: plant.zero_dynamics_constants()?,
        l_q: plant.lipschitz_coupling(),
        sigma: base.sigma,
        pg_norm: base.system.clf.pg_norm(),
        settle_fraction: cfg.settle_fraction,
        zero_run: &zero,
        disturbed_run: &disturbed,
        d_inf: d_infs[1],
        gain_runs: &gain_runs,
    })?;
    Ok(Certification {
        report,
        disturbed_run: disturbed,
    })
}

pub fn cmd_certify(cfg: &RunConfig) -> Result<CommandOutcome> {
    let c = certify_at(cfg, cfg.eps)?;
    let table = c.report.table();
    let files = write_files(
        Path::new(&cfg.output_dir),
        &[
            ("report.json", json_envelope(cfg, &c.report)?),
            ("report.txt", table.clone()),
            ("trajectory.csv", csv_document(cfg, &c.disturbed_run)?),
        ],
    )?;
    Ok(CommandOutcome {
        passed: c.report.all_mandatory_passed,
        files,
        summary: table,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct EpsSweepRow {
    pub eps: f64,
    pub d_inf: f64,
    pub eta_ultimate: f64,
    pub eta_bound_lemma3: f64,
    pub eta_bound_lemma4: f64,
    pub all_mandatory_passed: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct AmplitudeSweepRow {
    pub d_inf: f64,
    pub eta_ultimate: f64,
    pub orbit_distance_ultimate: f64,
    pub eta_bound_lemma3: f64,
    pub eta_bound_lemma4: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepResult {
    /// Sorted by ascending ε.
    pub eps_rows: Vec<EpsSweepRow>,
    /// Sorted by ascending `‖d‖∞`.
    pub amplitude_rows: Vec<AmplitudeSweepRow>,
    pub reports: Vec<IssReport>,
    /// Smaller ε gives a strictly smaller measured η ultimate bound.
    pub eps_monotone: bool,
}

pub fn sweep(cfg: &RunConfig) -> Result<SweepResult> {
    if cfg.sweep.eps.is_empty() {
        return Err(Error::Config("sweep.eps is empty".into()));
    }
    let mut eps_grid = cfg.sweep.eps.clone();
    eps_grid.sort_by(f64::total_cmp);
    eps_grid.dedup();
    let mut certs: Vec<(f64, IssReport)> = eps_grid
        .par_iter()
        .map(|&e| certify_at(cfg, e).map(|c| (e, c.report)))
        .collect::<Result<_>>()?;
    certs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let eps_rows: Vec<EpsSweepRow> = certs
        .iter()
        .map(|(e, r)| EpsSweepRow {
            eps: *e,
            d_inf: r.d_inf,
            eta_ultimate: r.eta_ultimate_measured,
            eta_bound_lemma3: r.eta_bound_lemma3,
            eta_bound_lemma4: r.eta_bound_lemma4,
            all_mandatory_passed: r.all_mandatory_passed,
        })
        .collect();
    let eps_monotone = eps_rows
        .windows(2)
        .all(|w| w[0].eta_ultimate < w[1].eta_ultimate);

    let m = cfg.dims()?.input_dim();
    let gain = gain_signal(cfg, m);
    let horizon = cfg.integrator.horizon;
    let mut amplitude_rows: Vec<AmplitudeSweepRow> = gain_amplitudes(cfg)
        .par_iter()
        .map(|&a| -> Result<AmplitudeSweepRow> {
            let signal = if a == 0.0 {
                DisturbanceSignal::Zero { dim: m }
            } else {
                gain.with_amplitude(a)
            };
            let d_inf = signal.sup_norm(horizon)?;
            let run = HopfRun::new(cfg, cfg.eps, signal)?;
            let rec = run.run(cfg)?;
            let cert = &run.system.clf.cert;
            Ok(AmplitudeSweepRow {
                d_inf,
                eta_ultimate: ultimate_bound(&rec, cfg.settle_fraction)?,
                orbit_distance_ultimate: ultimate_max(&rec, cfg.settle_fraction, &rec.orbit_distance)?,
                eta_bound_lemma3: lemma3_bound(cert, d_inf),
                eta_bound_lemma4: lemma4_bound(cert, cfg.eps_bar, d_inf),
            })
        })
        .collect::<Result<_>>()?;
    amplitude_rows.sort_by(|a, b| a.d_inf.total_cmp(&b.d_inf));
    Ok(SweepResult {
        eps_rows,
        amplitude_rows,
        reports: certs.into_iter().map(|(_, r)| r).collect(),
        eps_monotone,
    })
}

pub fn cmd_sweep(cfg: &RunConfig) -> Result<CommandOutcome> {
    let res = sweep(cfg)?;
    let mut eps_csv = String::from("eps,d_inf,eta_ultimate,eta_bound_lemma3,eta_bound_lemma4\n");
    for r in &res.eps_rows {
        eps_csv.push_str(&format!(
            "{},{},{},{},{}\n",
            r.eps, r.d_inf, r.eta_ultimate, r.eta_bound_lemma3, r.eta_bound_lemma4
        ));
    }
    let mut amp_csv = String::from(
        "d_inf,eta_ultimate,orbit_distance_ultimate,eta_bound_lemma3,eta_bound_lemma4\n",
    );
    for r in &res.amplitude_rows {
        amp_csv.push_str(&format!(
            "{},{},{},{},{}\n",
            r.d_inf, r.eta_ultimate, r.orbit_distance_ultimate, r.eta_bound_lemma3, r.eta_bound_lemma4
        ));
    }
    let files = write_files(
        Path::new(&cfg.output_dir),
        &[
            ("sweep.json", json_envelope(cfg, &res)?),
            ("sweep_eps.csv", plain_csv_document(cfg, &eps_csv)?),
            ("sweep_amplitude.csv", plain_csv_document(cfg, &amp_csv)?),
        ],
    )?;
    let mut summary = String::from("eps        eta_ultimate   lemma3_bound   checks\n");
    for r in &res.eps_rows {
        summary.push_str(&format!(
            "{:<10} {:<14.6e} {:<14.6e} {}\n",
            r.eps,
            r.eta_ultimate,
            r.eta_bound_lemma3,
            if r.all_mandatory_passed { "PASS" } else { "FAIL" }
        ));
    }
    summary.push_str(&format!(
        "monotone in eps: {}\n",
        if res.eps_monotone { "yes" } else { "no" }
    ));
    Ok(CommandOutcome {
        passed: res.eps_monotone && res.eps_rows.iter().all(|r| r.all_mandatory_passed),
        files,
        summary,
    })
}
