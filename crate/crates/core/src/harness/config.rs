use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::dynamics::{PlateModel, PlateParams, Schedule};
use crate::energy::FunctionalConfig;
use crate::error::{Error, Result};
use crate::probe::{logspace, AbstractParams};
use crate::spectral::{Domain, HistoryProfile, InitialPreset};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Simulate,
    Decay,
    LimitSweep,
    PrussScan,
    KernelCheck,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Decay => "decay",
            Command::LimitSweep => "limit-sweep",
            Command::PrussScan => "pruss-scan",
            Command::KernelCheck => "kernel-check",
        }
    }
}

impl std::str::FromStr for Command {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        toml::Value::String(s.into()).try_into().map_err(|_| Error::Config {
            path: "command".into(),
            message: format!("unknown command `{s}`"),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DomainConfig {
    #[serde(flatten)]
    pub domain: Domain,
    pub modes: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InitialConfig {
    #[serde(flatten)]
    pub preset: InitialPreset,
    #[serde(default)]
    pub history: Option<HistoryProfile>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorConfig {
    /// Time step; the smallest `default_dt` over the grid when absent.
    #[serde(default)]
    pub dt: Option<f64>,
    pub t_end: f64,
    #[serde(default = "default_stride")]
    pub stride: usize,
    /// Norm order `m` of reported quantities.
    #[serde(default)]
    pub order: f64,
}

fn default_stride() -> usize {
    10
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GridMode {
    /// Every combination of the three lists.
    #[default]
    Product,
    /// The lists zipped; they must have equal lengths.
    Diagonal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamGrid {
    pub sigma: Vec<f64>,
    pub tau: Vec<f64>,
    pub epsilon: Vec<f64>,
    #[serde(default)]
    pub mode: GridMode,
}

impl ParamGrid {
    pub fn points(&self) -> Result<Vec<PlateParams>> {
        let bad = |message: String| Error::Config {
            path: "grid".into(),
            message,
        };
        if self.sigma.is_empty() || self.tau.is_empty() || self.epsilon.is_empty() {
            return Err(bad("every parameter list needs at least one value".into()));
        }
        let raw: Vec<(f64, f64, f64)> = match self.mode {
            GridMode::Product => {
                let mut v = Vec::new();
                for &s in &self.sigma {
                    for &t in &self.tau {
                        for &e in &self.epsilon {
                            v.push((s, t, e));
                        }
                    }
                }
                v
            }
            GridMode::Diagonal => {
                let n = self.sigma.len();
                if self.tau.len() != n || self.epsilon.len() != n {
                    return Err(bad("diagonal grids need lists of equal length".into()));
                }
                (0..n).map(|i| (self.sigma[i], self.tau[i], self.epsilon[i])).collect()
            }
        };
        raw.into_iter()
            .map(|(s, t, e)| PlateParams::new(s, t, e).map_err(|err| bad(err.to_string())))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    /// Also run the exponential-kernel closure oracle and report the gap.
    #[serde(default)]
    pub oracle: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LimitConfig {
    pub t0: f64,
    /// Also measure the gap to the limit with reconstructed histories.
    #[serde(default)]
    pub reconstruct: bool,
}

impl Default for LimitConfig {
    fn default() -> Self {
        LimitConfig {
            t0: 0.5,
            reconstruct: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GammaRange {
    /// Decimal exponents of the first and last eigenvalue.
    pub from: f64,
    pub to: f64,
    pub count: usize,
}

impl GammaRange {
    pub fn values(&self) -> Vec<f64> {
        logspace(self.from, self.to, self.count)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeConfig {
    pub params: AbstractParams,
    pub gammas: GammaRange,
    /// History nodes for the discrete residual; none skips it.
    #[serde(default)]
    pub residual_nodes: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub command: Command,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub domain: Option<DomainConfig>,
    #[serde(default)]
    pub model: PlateModel,
    #[serde(default)]
    pub initial: Option<InitialConfig>,
    #[serde(default)]
    pub integrator: Option<IntegratorConfig>,
    #[serde(default)]
    pub grid: Option<ParamGrid>,
    #[serde(default)]
    pub functional: FunctionalConfig,
    #[serde(default)]
    pub simulate: SimulateConfig,
    #[serde(default)]
    pub limit: LimitConfig,
    #[serde(default)]
    pub probe: Option<ProbeConfig>,
}

fn missing(section: &str, command: Command) -> Error {
    Error::Config {
        path: section.into(),
        message: format!("section required by `{}`", command.name()),
    }
}

impl ExperimentConfig {
    /// Parses TOML, reporting the key path of the first offending value.
    pub fn from_toml(text: &str) -> Result<Self> {
        let value: toml::Value = toml::from_str(text).map_err(|e| Error::Config {
            path: String::new(),
            message: e.message().to_string(),
        })?;
        Self::from_value(value)
    }

    pub fn from_value(value: toml::Value) -> Result<Self> {
        let config: ExperimentConfig = serde_path_to_error::deserialize(value).map_err(|e| Error::Config {
            path: e.path().to_string(),
            message: e.inner().to_string(),
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configs serialize to TOML")
    }

    pub fn validate(&self) -> Result<()> {
        let cmd = self.command;
        let needs_run = matches!(cmd, Command::Simulate | Command::Decay | Command::LimitSweep);
        if needs_run {
            let d = self.domain.ok_or_else(|| missing("domain", cmd))?;
            if d.modes == 0 {
                return Err(Error::Config {
                    path: "domain.modes".into(),
                    message: "need at least one mode".into(),
                });
            }
            self.initial.ok_or_else(|| missing("initial", cmd))?;
            let i = self.integrator.ok_or_else(|| missing("integrator", cmd))?;
            if !(i.t_end > 0.0) || i.stride == 0 || i.dt.is_some_and(|dt| !(dt > 0.0)) {
                return Err(Error::Config {
                    path: "integrator".into(),
                    message: "need t_end > 0, dt > 0 and stride >= 1".into(),
                });
            }
        }
        if needs_run {
            self.grid.as_ref().ok_or_else(|| missing("grid", cmd))?.points()?;
        }
        if let Some(g) = &self.grid {
            g.points()?;
        }
        if cmd == Command::Decay {
            self.functional.validate().map_err(|e| Error::Config {
                path: "functional".into(),
                message: e.to_string(),
            })?;
        }
        if cmd == Command::PrussScan {
            let p = self.probe.ok_or_else(|| missing("probe", cmd))?;
            if p.gammas.count < 4 {
                return Err(Error::Config {
                    path: "probe.gammas.count".into(),
                    message: "a slope fit needs at least 4 modes".into(),
                });
            }
        }
        if self.limit.t0 < 0.0 {
            return Err(Error::Config {
                path: "limit.t0".into(),
                message: "cut time must be nonnegative".into(),
            });
        }
        Ok(())
    }

    /// Parameter points; empty for commands without a grid.
    pub fn points(&self) -> Result<Vec<PlateParams>> {
        self.grid.as_ref().map_or(Ok(Vec::new()), ParamGrid::points)
    }

    /// One schedule shared by every grid point: the given `dt`, or the
    /// smallest default over the grid.
    pub fn schedule(&self) -> Result<Schedule> {
        let i = self.integrator.ok_or_else(|| missing("integrator", self.command))?;
        let dt = match i.dt {
            Some(dt) => dt,
            None => self.points()?.iter().map(PlateParams::default_dt).fold(1e-3, f64::min),
        };
        Schedule::new(dt, i.t_end, i.stride)
    }
}

/// Recursively overlays `over` onto `base`; tables merge, everything else replaces.
pub fn merge_toml(base: &mut toml::Value, over: toml::Value) {
    match (base, over) {
        (toml::Value::Table(b), toml::Value::Table(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge_toml(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (b, o) => *b = o,
    }
}

/// Builds a configuration from an optional preset, an optional TOML overlay
/// and an optional command override, in that order of precedence (lowest first).
pub fn load_config(preset: Option<&str>, overlay: Option<&str>, command: Option<Command>) -> Result<ExperimentConfig> {
    let mut value = match preset {
        Some(name) => toml::Value::try_from(super::preset(name)?).expect("configs serialize to TOML"),
        None => toml::Value::Table(Default::default()),
    };
    if let Some(text) = overlay {
        let over: toml::Value = toml::from_str(text).map_err(|e| Error::Config {
            path: String::new(),
            message: e.message().to_string(),
        })?;
        merge_toml(&mut value, over);
    }
    if let (Some(c), toml::Value::Table(t)) = (command, &mut value) {
        t.insert("command".into(), toml::Value::String(c.name().into()));
    }
    ExperimentConfig::from_value(value)
}
