use std::f64::consts::PI;

use statrs::function::gamma::gamma;

use super::config::*;
use crate::dynamics::PlateModel;
use crate::energy::FunctionalConfig;
use crate::error::{Error, Result};
use crate::kernels::BaseKernel;
use crate::probe::AbstractParams;
use crate::spectral::{Domain, HistoryProfile, InitialPreset};

pub const PRESETS: [&str; 6] = ["thm-edec", "thm-gp1", "thm-gp2", "thm-a2", "thm-a3", "oracle-crosscheck"];

fn interval(modes: usize) -> Option<DomainConfig> {
    Some(DomainConfig {
        domain: Domain::Interval { length: PI },
        modes,
    })
}

fn dyadic() -> Vec<f64> {
    (2..=6).map(|k| 0.5f64.powi(k)).collect()
}

/// `κ s^(-ω) e^(-δ s)` with unit mass.
fn unit_mass(exponent: f64, decay: f64) -> BaseKernel {
    BaseKernel::power_exponential(decay.powf(1.0 - exponent) / gamma(1.0 - exponent), exponent, decay)
}

fn base(command: Command) -> ExperimentConfig {
    ExperimentConfig {
        command,
        seed: 0,
        output: None,
        domain: None,
        model: PlateModel::default(),
        initial: None,
        integrator: None,
        grid: None,
        functional: FunctionalConfig::default(),
        simulate: SimulateConfig::default(),
        limit: LimitConfig::default(),
        probe: None,
    }
}

fn limit_sweep(grid: ParamGrid, history: Option<HistoryProfile>) -> ExperimentConfig {
    ExperimentConfig {
        domain: interval(8),
        initial: Some(InitialConfig {
            // regular data for m = 0: coefficients n^-(m+6)
            preset: InitialPreset::SpectralDecay { p: 6.0 },
            history,
        }),
        integrator: Some(IntegratorConfig {
            dt: None,
            t_end: 10.0,
            stride: 16,
            order: 0.0,
        }),
        grid: Some(grid),
        limit: LimitConfig {
            t0: 0.5,
            reconstruct: false,
        },
        ..base(Command::LimitSweep)
    }
}

pub fn preset(name: &str) -> Result<ExperimentConfig> {
    let cfg = match name {
        "thm-edec" => ExperimentConfig {
            domain: interval(16),
            initial: Some(InitialConfig {
                preset: InitialPreset::SpectralDecay { p: 2.0 },
                history: None,
            }),
            integrator: Some(IntegratorConfig {
                dt: Some(1e-3),
                t_end: 20.0,
                stride: 10,
                order: 0.0,
            }),
            grid: Some(ParamGrid {
                sigma: vec![0.5],
                tau: vec![0.0, 0.25, 0.5, 1.0],
                epsilon: vec![0.5],
                mode: GridMode::Product,
            }),
            ..base(Command::Decay)
        },
        "thm-gp1" => {
            let d = dyadic();
            limit_sweep(
                ParamGrid {
                    sigma: d.clone(),
                    tau: d.clone(),
                    epsilon: d,
                    mode: GridMode::Diagonal,
                },
                Some(HistoryProfile { eta: 1.0, xi: 1.0 }),
            )
        }
        "thm-gp2" => limit_sweep(
            ParamGrid {
                sigma: dyadic(),
                tau: vec![0.0],
                epsilon: dyadic(),
                mode: GridMode::Product,
            },
            None,
        ),
        "thm-a2" => ExperimentConfig {
            probe: Some(ProbeConfig {
                params: AbstractParams {
                    alpha: 1.0,
                    sigma: 1.0,
                    mu: BaseKernel::power_exponential(1.0, 0.25, 1.0),
                    beta: None,
                },
                gammas: GammaRange {
                    from: 1.0,
                    to: 4.0,
                    count: 20,
                },
                residual_nodes: None,
            }),
            ..base(Command::PrussScan)
        },
        "thm-a3" => ExperimentConfig {
            probe: Some(ProbeConfig {
                params: AbstractParams {
                    alpha: 1.0,
                    sigma: 0.75,
                    mu: unit_mass(0.3, 20.0),
                    beta: Some(unit_mass(0.05, 20.0)),
                },
                // the asymptotic regime needs λ well past the kernel decay rate
                gammas: GammaRange {
                    from: 1.0,
                    to: 6.0,
                    count: 20,
                },
                residual_nodes: Some(400),
            }),
            ..base(Command::PrussScan)
        },
        "oracle-crosscheck" => ExperimentConfig {
            domain: interval(1),
            initial: Some(InitialConfig {
                preset: InitialPreset::SingleMode {
                    mode: 0,
                    amplitude: 1.0,
                },
                history: None,
            }),
            integrator: Some(IntegratorConfig {
                dt: Some(1e-3),
                t_end: 10.0,
                stride: 10,
                order: 0.0,
            }),
            grid: Some(ParamGrid {
                sigma: vec![1.0],
                tau: vec![0.0],
                epsilon: vec![1.0],
                mode: GridMode::Product,
            }),
            simulate: SimulateConfig { oracle: true },
            ..base(Command::Simulate)
        },
        other => {
            return Err(Error::Config {
                path: "preset".into(),
                message: format!("unknown preset `{other}`; known: {}", PRESETS.join(", ")),
            })
        }
    };
    cfg.validate()?;
    Ok(cfg)
}
