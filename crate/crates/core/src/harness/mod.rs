//! Configuration-driven experiment runner.

mod config;
mod plots;
mod presets;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use config::*;
pub use plots::emit_plots;
pub use presets::{preset, PRESETS};

use crate::dynamics::{closure_oracle_evolve, evolve, MemorySystem, PlateParams, Schedule};
use crate::energy::{check_differential_inequalities, decay_report, lyapunov_series, reports_to_csv};
use crate::error::{Error, Result};
use crate::kernels::KernelSpec;
use crate::probe::{logspace, resolvent_scan};
use crate::singular_limit::{compare_trajectories, envelope_constants, envelope_excess, limit_trajectory, sweep_to_csv};
use crate::spectral::{dirichlet_eigenvalues, project_initial_data, ModalCoefficients, PhaseVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OutputKind {
    Trajectory,
    OracleComparison,
    EnergySeries,
    DecayTable,
    DifferenceSeries,
    SweepTable,
    EnvelopeTable,
    ScanTable,
    Validation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputRecord {
    /// Relative to the output directory.
    pub path: PathBuf,
    pub kind: OutputKind,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub name: String,
    pub ok: bool,
    #[serde(default)]
    pub message: Option<String>,
    pub wall_time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    #[serde(default)]
    pub preset: Option<String>,
    /// SHA-256 of the canonical TOML form of the configuration.
    pub config_hash: String,
    pub version: String,
    pub seed: u64,
    pub threads: usize,
    pub wall_time: f64,
    pub ok: bool,
    pub steps: Vec<StepRecord>,
    pub outputs: Vec<OutputRecord>,
    pub metrics: BTreeMap<String, f64>,
    pub summary: Vec<String>,
}

impl Manifest {
    pub const FILE: &'static str = "manifest.json";

    pub fn read(dir: &Path) -> Result<Self> {
        let path = dir.join(Self::FILE);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Config {
            path: path.display().to_string(),
            message: e.to_string(),
        })
    }

    pub fn metric(&self, key: &str) -> Option<f64> {
        self.metrics.get(key).copied()
    }
}

/// Result of [`run`]: the manifest is produced even when a step fails.
#[derive(Debug)]
pub struct RunOutcome {
    pub manifest: Manifest,
    pub error: Option<Error>,
}

impl RunOutcome {
    pub fn into_result(self) -> Result<Manifest> {
        match self.error {
            None => Ok(self.manifest),
            Some(e) => Err(e),
        }
    }
}

pub fn config_hash(config: &ExperimentConfig) -> String {
    let digest = Sha256::digest(config.to_toml().as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

struct Collector {
    dir: PathBuf,
    outputs: Vec<OutputRecord>,
    metrics: BTreeMap<String, f64>,
    summary: Vec<String>,
}

impl Collector {
    fn write(&mut self, name: &str, kind: OutputKind, label: impl Into<String>, contents: &str) -> Result<()> {
        let path = self.dir.join(name);
        fs::write(&path, contents).map_err(|e| Error::io(&path, e))?;
        self.outputs.push(OutputRecord {
            path: name.into(),
            kind,
            label: label.into(),
        });
        Ok(())
    }

    fn metric(&mut self, key: impl Into<String>, value: f64) {
        self.metrics.insert(key.into(), value);
    }
}

fn label(p: &PlateParams) -> String {
    format!("sigma={} tau={} epsilon={}", p.sigma, p.tau, p.epsilon)
}

fn datum(config: &ExperimentConfig, params: PlateParams) -> Result<PhaseVector> {
    let d = config.domain.expect("validated");
    let init = config.initial.expect("validated");
    let system = Arc::new(MemorySystem::plate(&config.model, params)?);
    let modes = dirichlet_eigenvalues(d.domain, d.modes)?;
    let c = ModalCoefficients::from_preset(init.preset, d.modes, &system, init.history);
    project_initial_data(&c, &modes, system, config.integrator.expect("validated").order)
}

fn simulate(config: &ExperimentConfig, schedule: Schedule, out: &mut Collector) -> Result<()> {
    let order = config.integrator.expect("validated").order;
    for (i, p) in config.points()?.iter().enumerate() {
        let z = datum(config, *p)?;
        let tr = evolve(&z, schedule)?;
        out.write(&format!("trajectory_{i}.csv"), OutputKind::Trajectory, label(p), &tr.to_csv(order))?;
        out.metric(format!("max_step_increase[{i}]"), tr.max_step_increase());
        if config.simulate.oracle {
            let oracle = closure_oracle_evolve(&z, schedule)?;
            let mut csv = String::from("t,mode,u,u_oracle,v,v_oracle,theta,theta_oracle\n");
            let (mut err, mut scale) = (0.0f64, 0.0f64);
            for (k, t) in tr.times.iter().enumerate() {
                for n in 0..tr.gammas.len() {
                    let (s, o) = (&tr.samples[n][k], &oracle.states[n][k]);
                    for (a, b) in [(s.u, o[0]), (s.v, o[1]), (s.theta, o[2])] {
                        err = err.max((a - b).abs());
                        scale = scale.max(b.abs());
                    }
                    csv.push_str(&format!(
                        "{t:.6},{n},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e}\n",
                        s.u, o[0], s.v, o[1], s.theta, o[2]
                    ));
                }
            }
            out.write(&format!("oracle_{i}.csv"), OutputKind::OracleComparison, label(p), &csv)?;
            let rel = err / scale;
            out.metric(format!("oracle_error[{i}]"), rel);
            out.summary.push(format!("{}: oracle relative Linf gap {rel:.3e}", label(p)));
        }
    }
    Ok(())
}

fn decay(config: &ExperimentConfig, schedule: Schedule, out: &mut Collector) -> Result<()> {
    let fc = &config.functional;
    let order = config.integrator.expect("validated").order;
    let mut reports = Vec::new();
    for (i, p) in config.points()?.iter().enumerate() {
        let z = datum(config, *p)?;
        let tr = evolve(&z, schedule)?;
        let mut report = decay_report(&tr, fc)?;
        let check = check_differential_inequalities(&tr, fc)?;
        if order != 0.0 {
            let fit = crate::energy::fit_decay_rate(&tr.times, &tr.energy_series(order), fc.window)?;
            report.rate = fit.rate;
            report.prefactor = fit.prefactor;
            report.r_squared = fit.r_squared;
            report.truncated = fit.truncated;
        }
        report.order = order;
        let values = lyapunov_series(&tr, fc);
        let energy = tr.energy_series(order);
        let mut csv = String::from("t,energy,f1,f2\n");
        for ((t, e), v) in tr.times.iter().zip(&energy).zip(&values) {
            csv.push_str(&format!("{t:.6},{e:.12e},{:.12e},{:.12e}\n", v.f1, v.f2));
        }
        out.write(&format!("energy_{i}.csv"), OutputKind::EnergySeries, label(p), &csv)?;
        out.metric(format!("rate[{i}]"), report.rate);
        out.metric(format!("d0_hat[{i}]"), check.d0_hat);
        if let Some(l) = check.lambda_hat {
            out.metric(format!("lambda_hat[{i}]"), l);
        }
        out.metric(format!("max_step_increase[{i}]"), tr.max_step_increase());
        out.metric(format!("equivalence_min[{i}]"), check.equivalence.0);
        out.metric(format!("equivalence_max[{i}]"), check.equivalence.1);
        out.summary.push(format!(
            "{}: rate {:.4} (R² {:.4}), d0 {:.3e}, Lambda {}",
            label(p),
            report.rate,
            report.r_squared,
            check.d0_hat,
            check.lambda_hat.map_or("n/a".into(), |l| format!("{l:.3e}"))
        ));
        reports.push(report);
    }
    out.write("decay.csv", OutputKind::DecayTable, "decay reports", &reports_to_csv(&reports))
}

fn limit_sweep(config: &ExperimentConfig, schedule: Schedule, out: &mut Collector) -> Result<()> {
    let order = config.integrator.expect("validated").order;
    let points = config.points()?;
    let lc = config.limit;
    if lc.t0 > schedule.t_end {
        return Err(Error::Config {
            path: "limit.t0".into(),
            message: "cut time beyond the horizon".into(),
        });
    }
    let mut limit = None;
    let mut runs = Vec::new();
    for (i, p) in points.iter().enumerate() {
        let z = datum(config, *p)?;
        let lim = match &limit {
            Some(l) => l,
            None => limit.insert(limit_trajectory(&z, schedule)?),
        };
        let run = compare_trajectories(&z, lim, &config.model.scalar, order, lc.t0, lc.reconstruct)?;
        let mut csv = String::from("t,difference,triplet,eta_mu,eta_nu,xi,upsilon");
        if run.reconstructed.is_some() {
            csv.push_str(",difference_reconstructed");
        }
        csv.push('\n');
        for (k, t) in run.times.iter().enumerate() {
            let h = &run.histories[k];
            csv.push_str(&format!(
                "{t:.6},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e}",
                run.difference[k],
                run.triplet[k],
                h.eta_mu,
                h.eta_nu,
                h.xi,
                run.upsilon.at(*t)
            ));
            if let Some(r) = &run.reconstructed {
                csv.push_str(&format!(",{:.12e}", r[k]));
            }
            csv.push('\n');
        }
        out.write(&format!("difference_{i}.csv"), OutputKind::DifferenceSeries, label(p), &csv)?;
        out.metric(format!("sup_d[{i}]"), run.sup_all);
        out.metric(format!("sup_d_after[{i}]"), run.sup_after);
        out.metric(format!("k_r[{i}]"), run.k_r);
        out.metric(format!("upsilon_t0[{i}]"), run.upsilon.sup_after(lc.t0));
        runs.push(run);
    }
    out.write("sweep.csv", OutputKind::SweepTable, "comparison sweep", &sweep_to_csv(&runs))?;
    let scalar = &config.model.scalar;
    let per_run: Vec<[f64; 3]> = runs.iter().map(|r| envelope_constants(r, scalar)).collect();
    let fitted = per_run.iter().fold([0.0f64; 3], |acc, k| [0, 1, 2].map(|j| acc[j].max(k[j])));
    let mut csv = String::from("sigma,tau,epsilon,k_eta_mu,k_eta_nu,k_xi,excess\n");
    for (r, k) in runs.iter().zip(&per_run) {
        let p = r.params;
        csv.push_str(&format!(
            "{},{},{},{:.9e},{:.9e},{:.9e},{:.3e}\n",
            p.sigma,
            p.tau,
            p.epsilon,
            k[0],
            k[1],
            k[2],
            envelope_excess(r, scalar, fitted)
        ));
    }
    out.write("envelopes.csv", OutputKind::EnvelopeTable, "history envelopes", &csv)?;
    for (j, name) in ["eta_mu", "eta_nu", "xi"].iter().enumerate() {
        out.metric(format!("envelope_k_{name}"), fitted[j]);
    }
    let krs: Vec<f64> = runs.iter().map(|r| r.k_r).filter(|k| k.is_finite()).collect();
    if !krs.is_empty() {
        let (lo, hi) = krs.iter().fold((f64::INFINITY, 0.0f64), |(a, b), k| (a.min(*k), b.max(*k)));
        out.summary.push(format!("K_R in [{lo:.4}, {hi:.4}] over {} points", krs.len()));
    }
    Ok(())
}

fn pruss_scan(config: &ExperimentConfig, out: &mut Collector) -> Result<()> {
    let pc = config.probe.expect("validated");
    let grids = pc.residual_nodes.map(|n| (n, config.model.policy));
    let report = resolvent_scan(&pc.params, &pc.gammas.values(), grids)?;
    out.write("scan.csv", OutputKind::ScanTable, "resolvent scan", &report.to_csv())?;
    let s = report.norm_slope;
    out.metric("norm_slope", s.slope);
    out.summary.push(format!(
        "slope of log|z| vs log gamma: {:.4} (95% CI [{:.4}, {:.4}]), predicted {:.4}",
        s.slope, s.ci.0, s.ci.1, s.predicted
    ));
    if let Some(g) = report.gamma_lambda_slope {
        out.metric("gamma_lambda_slope", g.slope);
        out.summary.push(format!(
            "slope of log|gamma Lambda| vs log gamma: {:.4} (95% CI [{:.4}, {:.4}]), predicted {:.4}",
            g.slope, g.ci.0, g.ci.1, g.predicted
        ));
    }
    out.metric("ratio_decreasing", f64::from(u8::from(report.ratio_decreasing)));
    out.metric("skipped_modes", report.skipped.len() as f64);
    let adm = &report.admissibility;
    if !(adm.zero_strain_memory || adm.with_strain_memory) {
        out.summary.push(format!("parameters not admissible: {}", adm.reasons.join("; ")));
    }
    Ok(())
}

fn kernel_check(config: &ExperimentConfig, out: &mut Collector) -> Result<()> {
    let m = &config.model;
    let mut csv = String::from("kernel,relaxation,condition,margin,pass\n");
    let mut all = true;
    let mut seen: Vec<(&str, KernelSpec)> = Vec::new();
    let mut points = config.points()?;
    if points.is_empty() {
        points.push(PlateParams::new(1.0, 1.0, 1.0)?);
    }
    for p in points {
        if p.epsilon > 0.0 {
            seen.push(("mu", m.mu_base()?.rescaled(p.epsilon)?));
        }
        if p.sigma > 0.0 {
            seen.push(("beta", m.beta_base()?.rescaled(p.sigma)?));
        }
        if let Some(nu) = m.scalar.relaxation_kernel(p.tau)? {
            seen.push(("nu", nu));
        }
    }
    seen.dedup_by(|a, b| a.0 == b.0 && a.1 == b.1);
    for (name, k) in &seen {
        let grid = logspace(-6.0, k.tail_cutoff(m.policy.tail_tol).log10(), 400);
        let report = k.validate_assumptions(k.decay, &grid)?;
        all &= report.all_pass();
        for c in &report.checks {
            csv.push_str(&format!("{name},{},{},{:e},{}\n", k.relaxation, c.condition, c.margin, c.pass()));
        }
    }
    out.write("validation.csv", OutputKind::Validation, "kernel assumptions", &csv)?;
    out.metric("all_pass", f64::from(u8::from(all)));
    out.summary.push(format!(
        "{} kernels checked, {}",
        seen.len(),
        if all { "all conditions hold" } else { "some conditions fail" }
    ));
    Ok(())
}

/// Runs the experiment and writes its CSVs and `manifest.json` into `out`.
pub fn run(config: &ExperimentConfig, out: &Path, preset: Option<&str>) -> RunOutcome {
    let start = Instant::now();
    let mut collector = Collector {
        dir: out.to_path_buf(),
        outputs: Vec::new(),
        metrics: BTreeMap::new(),
        summary: Vec::new(),
    };
    let mut steps = Vec::new();
    let mut step = |name: &str, f: &mut dyn FnMut(&mut Collector) -> Result<()>, c: &mut Collector| -> Result<()> {
        let t = Instant::now();
        let r = f(c);
        steps.push(StepRecord {
            name: name.into(),
            ok: r.is_ok(),
            message: r.as_ref().err().map(ToString::to_string),
            wall_time: t.elapsed().as_secs_f64(),
        });
        r
    };
    let result = step(
        "prepare",
        &mut |_c| {
            config.validate()?;
            fs::create_dir_all(out).map_err(|e| Error::io(out, e))
        },
        &mut collector,
    )
    .and_then(|_| {
        step(
            config.command.name(),
            &mut |c| match config.command {
                Command::Simulate => simulate(config, config.schedule()?, c),
                Command::Decay => decay(config, config.schedule()?, c),
                Command::LimitSweep => limit_sweep(config, config.schedule()?, c),
                Command::PrussScan => pruss_scan(config, c),
                Command::KernelCheck => kernel_check(config, c),
            },
            &mut collector,
        )
    });
    let manifest = Manifest {
        command: config.command.name().into(),
        preset: preset.map(String::from),
        config_hash: config_hash(config),
        version: env!("CARGO_PKG_VERSION").into(),
        seed: config.seed,
        threads: rayon::current_num_threads(),
        wall_time: start.elapsed().as_secs_f64(),
        ok: result.is_ok(),
        steps,
        outputs: collector.outputs,
        metrics: collector.metrics,
        summary: collector.summary,
    };
    let mut error = result.err();
    if out.is_dir() {
        let path = out.join(Manifest::FILE);
        let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        if let Err(e) = fs::write(&path, json) {
            error.get_or_insert(Error::io(path, e));
        }
    }
    RunOutcome { manifest, error }
}
