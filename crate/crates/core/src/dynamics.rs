//! Per-mode linear systems and their time integration.
//!
//! Every mode with eigenvalue `γ` evolves independently:
//!
//! ```text
//! u' = v
//! v' = -γ² Σ w^β ξ - γ² u + γ^c ϑ            (- γ² v   without strain memory)
//! ϑ' = -φ ϑ - Σ w^ν η - γ^a Σ w^μ η - γ^c v   (- γ ϑ    without heat-flux memory)
//! η' = Dη + ϑ
//! ξ' = Dξ + v
//! ```
//!
//! with `D` the upwind transport of [`crate::history`]. The plate has
//! `c = a = 1`; the abstract system with pure memory damping uses `c = σ`,
//! `a = α` and no instantaneous terms.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::history::{build_history_grid, build_shared_grids, GridPolicy, HistoryGrid, HistorySlice};
use crate::kernels::{BaseKernel, KernelFamily, KernelSpec, ScalarModel};
use crate::spectral::PhaseVector;

/// Relaxation parameters `(σ, τ, ε)`, each in `[0, 1]`; zero collapses the
/// corresponding memory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlateParams {
    pub sigma: f64,
    pub tau: f64,
    pub epsilon: f64,
}

impl PlateParams {
    pub const LIMIT: PlateParams = PlateParams {
        sigma: 0.0,
        tau: 0.0,
        epsilon: 0.0,
    };

    pub fn new(sigma: f64, tau: f64, epsilon: f64) -> Result<Self> {
        let p = PlateParams { sigma, tau, epsilon };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, x) in [("sigma", self.sigma), ("tau", self.tau), ("epsilon", self.epsilon)] {
            if !(0.0..=1.0).contains(&x) {
                return Err(Error::domain(format!("{name} = {x} outside [0, 1]")));
            }
        }
        Ok(())
    }

    pub fn is_limit(&self) -> bool {
        self.sigma == 0.0 && self.tau == 0.0 && self.epsilon == 0.0
    }

    /// `min(1e-3, ε/20, σ/20)` over the active parameters.
    pub fn default_dt(&self) -> f64 {
        [self.epsilon, self.sigma]
            .iter()
            .filter(|x| **x > 0.0)
            .map(|x| x / 20.0)
            .fold(1e-3, f64::min)
    }
}

/// Base kernels and discretization shared by every parameter point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlateModel {
    pub mu: BaseKernel,
    pub beta: BaseKernel,
    pub scalar: ScalarModel,
    pub history_nodes: usize,
    pub policy: GridPolicy,
}

impl Default for PlateModel {
    fn default() -> Self {
        PlateModel {
            mu: BaseKernel::UNIT_EXPONENTIAL,
            beta: BaseKernel::UNIT_EXPONENTIAL,
            scalar: ScalarModel::default(),
            history_nodes: 400,
            policy: GridPolicy::default(),
        }
    }
}

fn family_of(b: &BaseKernel) -> KernelFamily {
    if b.exponent == 0.0 {
        KernelFamily::Exponential
    } else {
        KernelFamily::PowerExponential
    }
}

impl PlateModel {
    pub fn mu_base(&self) -> Result<KernelSpec> {
        KernelSpec::base(family_of(&self.mu), self.mu.amplitude, self.mu.exponent, self.mu.decay)
    }

    pub fn beta_base(&self) -> Result<KernelSpec> {
        KernelSpec::base(
            family_of(&self.beta),
            self.beta.amplitude,
            self.beta.exponent,
            self.beta.decay,
        )
    }
}

/// One mode of the state. Absent history components are empty slices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModalState {
    pub gamma: f64,
    pub u: f64,
    pub v: f64,
    pub theta: f64,
    pub eta: HistorySlice,
    pub xi: HistorySlice,
}

impl ModalState {
    pub fn zeros(system: &MemorySystem, gamma: f64) -> Self {
        ModalState {
            gamma,
            u: 0.0,
            v: 0.0,
            theta: 0.0,
            eta: HistorySlice::zeros(system.eta_len()),
            xi: HistorySlice::zeros(system.xi_len()),
        }
    }

    pub fn dim(&self) -> usize {
        3 + self.eta.len() + self.xi.len()
    }

    /// Flattened `(u, v, ϑ, η…, ξ…)`.
    pub fn to_vector(&self) -> Vec<f64> {
        let mut z = Vec::with_capacity(self.dim());
        z.extend([self.u, self.v, self.theta]);
        z.extend_from_slice(&self.eta.0);
        z.extend_from_slice(&self.xi.0);
        z
    }

    pub fn from_vector(gamma: f64, z: &[f64], eta_len: usize) -> Self {
        ModalState {
            gamma,
            u: z[0],
            v: z[1],
            theta: z[2],
            eta: HistorySlice(z[3..3 + eta_len].to_vec()),
            xi: HistorySlice(z[3 + eta_len..].to_vec()),
        }
    }

    pub fn combine(&self, a: f64, other: &ModalState, b: f64) -> Result<ModalState> {
        if self.eta.len() != other.eta.len() || self.xi.len() != other.xi.len() {
            return Err(Error::Shape("modal states have different history lengths".into()));
        }
        let mix = |x: &[f64], y: &[f64]| HistorySlice(x.iter().zip(y).map(|(p, q)| a * p + b * q).collect());
        Ok(ModalState {
            gamma: self.gamma,
            u: a * self.u + b * other.u,
            v: a * self.v + b * other.v,
            theta: a * self.theta + b * other.theta,
            eta: mix(&self.eta.0, &other.eta.0),
            xi: mix(&self.xi.0, &other.xi.0),
        })
    }
}

/// The parameter-dependent but mode-independent part of the generator.
#[derive(Debug, Clone, Serialize)]
pub struct MemorySystem {
    /// Plate parameters, or `None` for the abstract system.
    pub params: Option<PlateParams>,
    pub coupling_power: f64,
    pub memory_power: f64,
    /// `φ(τ)`.
    pub damping: f64,
    /// Power `p` of the instantaneous term `-γ^p ϑ`, present when the heat-flux
    /// memory has collapsed.
    pub conduction_power: Option<f64>,
    /// Instantaneous `-γ² v`, present when the strain memory has collapsed.
    pub viscous: bool,
    pub mu: Option<HistoryGrid>,
    pub nu: Option<HistoryGrid>,
    pub beta: Option<HistoryGrid>,
}

impl MemorySystem {
    pub fn plate(model: &PlateModel, params: PlateParams) -> Result<Self> {
        params.validate()?;
        model.scalar.validate()?;
        let mut eta_kernels = Vec::new();
        if params.epsilon > 0.0 {
            eta_kernels.push(model.mu_base()?.rescaled(params.epsilon)?);
        }
        let nu = if params.tau > 0.0 {
            model.scalar.relaxation_kernel(params.tau)?
        } else {
            None
        };
        eta_kernels.extend(nu);
        let mut grids = if eta_kernels.is_empty() {
            Vec::new()
        } else {
            build_shared_grids(&eta_kernels, model.history_nodes, model.policy)?
        };
        let nu_grid = if nu.is_some() { grids.pop() } else { None };
        let mu_grid = grids.pop();
        let beta = if params.sigma > 0.0 {
            let k = model.beta_base()?.rescaled(params.sigma)?;
            Some(build_history_grid(&k, model.history_nodes, model.policy)?)
        } else {
            None
        };
        Ok(MemorySystem {
            params: Some(params),
            coupling_power: 1.0,
            memory_power: 1.0,
            damping: model.scalar.phi.eval(params.tau),
            conduction_power: (params.epsilon == 0.0).then_some(1.0),
            viscous: params.sigma == 0.0,
            mu: mu_grid,
            nu: nu_grid,
            beta,
        })
    }

    /// The memory-free limit system.
    pub fn limit() -> Self {
        MemorySystem {
            params: Some(PlateParams::LIMIT),
            coupling_power: 1.0,
            memory_power: 1.0,
            damping: 0.0,
            conduction_power: Some(1.0),
            viscous: true,
            mu: None,
            nu: None,
            beta: None,
        }
    }

    /// Thermoelastic system damped only through memory: coupling `A^σ`,
    /// heat-flux memory acting through `A^α`, optional strain memory.
    pub fn abstract_system(
        alpha: f64,
        sigma: f64,
        mu: &KernelSpec,
        beta: Option<&KernelSpec>,
        nodes: usize,
        policy: GridPolicy,
    ) -> Result<Self> {
        Ok(MemorySystem {
            params: None,
            coupling_power: sigma,
            memory_power: alpha,
            damping: 0.0,
            conduction_power: None,
            viscous: false,
            mu: Some(build_history_grid(mu, nodes, policy)?),
            nu: None,
            beta: beta.map(|b| build_history_grid(b, nodes, policy)).transpose()?,
        })
    }

    pub fn eta_grid(&self) -> Option<&HistoryGrid> {
        self.mu.as_ref().or(self.nu.as_ref())
    }

    pub fn eta_len(&self) -> usize {
        self.eta_grid().map_or(0, HistoryGrid::len)
    }

    pub fn xi_len(&self) -> usize {
        self.beta.as_ref().map_or(0, HistoryGrid::len)
    }

    pub fn dim(&self) -> usize {
        3 + self.eta_len() + self.xi_len()
    }

    /// Weights `γ^a w^μ_j + w^ν_j` with which `η` enters the `ϑ` row; they
    /// are also the order-0 energy weights of `η`.
    pub fn eta_weights(&self, gamma: f64) -> Vec<f64> {
        let n = self.eta_len();
        let ga = gamma.powf(self.memory_power);
        (0..n)
            .map(|j| {
                self.mu.as_ref().map_or(0.0, |g| ga * g.weights[j])
                    + self.nu.as_ref().map_or(0.0, |g| g.weights[j])
            })
            .collect()
    }

    fn conduction(&self, gamma: f64) -> f64 {
        self.conduction_power.map_or(0.0, |p| gamma.powf(p))
    }

    fn viscosity(&self, gamma: f64) -> f64 {
        if self.viscous {
            gamma * gamma
        } else {
            0.0
        }
    }

    /// Squared norm of one mode in the scale of order `m`.
    pub fn modal_norm_sq(&self, s: &ModalState, order: f64) -> f64 {
        let g = s.gamma;
        let g2 = g * g;
        let mut e = g2 * s.u * s.u + s.v * s.v + s.theta * s.theta;
        if !s.eta.is_empty() {
            e += self
                .eta_weights(g)
                .iter()
                .zip(&s.eta.0)
                .map(|(w, x)| w * x * x)
                .sum::<f64>();
        }
        if let Some(b) = &self.beta {
            e += g2 * b.integrate_sq(&s.xi.0);
        }
        g.powf(order) * e
    }

    /// Per-component order-0 energy weights of the flattened state.
    pub fn energy_weights(&self, gamma: f64) -> Vec<f64> {
        let mut w = vec![gamma * gamma, 1.0, 1.0];
        w.extend(self.eta_weights(gamma));
        if let Some(b) = &self.beta {
            w.extend(b.weights.iter().map(|x| gamma * gamma * x));
        }
        w
    }

    pub fn check_state(&self, s: &ModalState) -> Result<()> {
        if s.eta.len() != self.eta_len() || s.xi.len() != self.xi_len() {
            return Err(Error::Assembly(format!(
                "state carries ({}, {}) history nodes, system expects ({}, {})",
                s.eta.len(),
                s.xi.len(),
                self.eta_len(),
                self.xi_len()
            )));
        }
        if !(s.gamma > 0.0 && s.gamma.is_finite()) {
            return Err(Error::domain(format!("eigenvalue {} must be positive", s.gamma)));
        }
        Ok(())
    }

    pub fn mode_operator(&self, gamma: f64) -> ModeOperator {
        assemble_mode_operator(self, gamma)
    }
}

/// Dense matrix of the generator restricted to one mode, with the diagonal
/// energy weights of the order-0 inner product.
#[derive(Debug, Clone)]
pub struct ModeOperator {
    pub gamma: f64,
    pub matrix: DMatrix<f64>,
    pub weights: DVector<f64>,
}

pub fn assemble_mode_operator(system: &MemorySystem, gamma: f64) -> ModeOperator {
    let ne = system.eta_len();
    let nx = system.xi_len();
    let n = 3 + ne + nx;
    let g2 = gamma * gamma;
    let gc = gamma.powf(system.coupling_power);
    let mut l = DMatrix::zeros(n, n);
    l[(0, 1)] = 1.0;
    l[(1, 0)] = -g2;
    l[(1, 1)] = -system.viscosity(gamma);
    l[(1, 2)] = gc;
    l[(2, 1)] = -gc;
    l[(2, 2)] = -system.damping - system.conduction(gamma);
    let eta_w = system.eta_weights(gamma);
    let mut transport = |offset: usize, spacing: &[f64], source: usize| {
        for (j, h) in spacing.iter().enumerate() {
            l[(offset + j, offset + j)] = -1.0 / h;
            if j > 0 {
                l[(offset + j, offset + j - 1)] = 1.0 / h;
            }
            l[(offset + j, source)] = 1.0;
        }
    };
    if let Some(g) = system.eta_grid() {
        transport(3, &g.spacing, 2);
    }
    if let Some(b) = &system.beta {
        transport(3 + ne, &b.spacing, 1);
    }
    for (j, w) in eta_w.iter().enumerate() {
        l[(2, 3 + j)] = -w;
    }
    if let Some(b) = &system.beta {
        for (j, w) in b.weights.iter().enumerate() {
            l[(1, 3 + ne + j)] = -g2 * w;
        }
    }
    ModeOperator {
        gamma,
        matrix: l,
        weights: DVector::from_vec(system.energy_weights(gamma)),
    }
}

impl ModeOperator {
    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    pub fn apply(&self, z: &[f64]) -> Vec<f64> {
        (&self.matrix * DVector::from_column_slice(z)).as_slice().to_vec()
    }

    pub fn apply_complex(&self, z: &[Complex64]) -> Vec<Complex64> {
        let n = self.dim();
        (0..n)
            .map(|i| (0..n).map(|j| z[j] * self.matrix[(i, j)]).sum())
            .collect()
    }

    /// `⟨Lz, z⟩` in the weighted inner product.
    pub fn quadratic_form(&self, z: &[f64]) -> f64 {
        let lz = self.apply(z);
        lz.iter().zip(z).zip(self.weights.iter()).map(|((a, b), w)| w * a * b).sum()
    }

    pub fn norm_sq(&self, z: &[f64]) -> f64 {
        z.iter().zip(self.weights.iter()).map(|(x, w)| w * x * x).sum()
    }
}

/// Implicit-midpoint stepper for one mode. Each step solves
/// `(I - h L) y = z_n`, `h = dt/2`, and sets `z_{n+1} = 2y - z_n`; the
/// history blocks are lower bidiagonal, so the solve reduces to two forward
/// sweeps and a 2×2 system for `(v, ϑ)`.
#[derive(Debug, Clone)]
pub struct ModeStepper {
    gamma: f64,
    h: f64,
    gc: f64,
    eta_w: Vec<f64>,
    eta_ratio: Vec<f64>,
    eta_g: Vec<f64>,
    xi_w: Vec<f64>,
    xi_ratio: Vec<f64>,
    xi_g: Vec<f64>,
    a11: f64,
    a22: f64,
    det: f64,
}

/// `x_j = (b_j + ρ_j x_{j-1}) / (1 + ρ_j)`, the solve of `(I - hD) x = b`.
pub(crate) fn sweep(ratio: &[f64], b: &mut [f64]) {
    let mut prev = 0.0;
    for (x, r) in b.iter_mut().zip(ratio) {
        *x = (*x + r * prev) / (1.0 + r);
        prev = *x;
    }
}

impl ModeStepper {
    pub fn new(system: &MemorySystem, gamma: f64, dt: f64) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::domain("time step must be positive"));
        }
        let h = 0.5 * dt;
        let g2 = gamma * gamma;
        let gc = gamma.powf(system.coupling_power);
        let ratios = |grid: Option<&HistoryGrid>| -> Vec<f64> {
            grid.map_or(Vec::new(), |g| g.spacing.iter().map(|d| h / d).collect())
        };
        let eta_ratio = ratios(system.eta_grid());
        let xi_ratio = ratios(system.beta.as_ref());
        let unit_response = |ratio: &[f64]| {
            let mut g = vec![h; ratio.len()];
            sweep(ratio, &mut g);
            g
        };
        let eta_g = unit_response(&eta_ratio);
        let xi_g = unit_response(&xi_ratio);
        let eta_w = system.eta_weights(gamma);
        let xi_w: Vec<f64> = system.beta.as_ref().map_or(Vec::new(), |b| b.weights.clone());
        let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
        let s_eta = dot(&eta_w, &eta_g);
        let s_xi = dot(&xi_w, &xi_g);
        let a11 = 1.0 + h * g2 * s_xi + h * system.viscosity(gamma) + h * h * g2;
        let a22 = 1.0 + h * (system.damping + system.conduction(gamma)) + h * s_eta;
        let det = a11 * a22 + h * h * gc * gc;
        if !(det.is_finite() && det > 0.0) {
            return Err(Error::SingularStep { mode: 0 });
        }
        Ok(ModeStepper {
            gamma,
            h,
            gc,
            eta_w,
            eta_ratio,
            eta_g,
            xi_w,
            xi_ratio,
            xi_g,
            a11,
            a22,
            det,
        })
    }

    pub fn step(&self, s: &mut ModalState) {
        let h = self.h;
        let g2 = self.gamma * self.gamma;
        let (u0, v0, t0) = (s.u, s.v, s.theta);
        // y = (I - hD)^{-1} z_n + h·(ϑ_y, v_y)·g, written into the slices
        let mut eta_y = s.eta.0.clone();
        sweep(&self.eta_ratio, &mut eta_y);
        let mut xi_y = s.xi.0.clone();
        sweep(&self.xi_ratio, &mut xi_y);
        let a_eta: f64 = self.eta_w.iter().zip(&eta_y).map(|(w, x)| w * x).sum();
        let a_xi: f64 = self.xi_w.iter().zip(&xi_y).map(|(w, x)| w * x).sum();
        let r_v = v0 - h * g2 * a_xi - h * g2 * u0;
        let r_t = t0 - h * a_eta;
        let vy = (r_v * self.a22 + h * self.gc * r_t) / self.det;
        let ty = (self.a11 * r_t - h * self.gc * r_v) / self.det;
        let uy = u0 + h * vy;
        s.u = 2.0 * uy - u0;
        s.v = 2.0 * vy - v0;
        s.theta = 2.0 * ty - t0;
        for ((x, y), g) in s.eta.0.iter_mut().zip(&eta_y).zip(&self.eta_g) {
            *x = 2.0 * (y + ty * g) - *x;
        }
        for ((x, y), g) in s.xi.0.iter_mut().zip(&xi_y).zip(&self.xi_g) {
            *x = 2.0 * (y + vy * g) - *x;
        }
    }
}

/// Uniform time stepping with samples every `stride` steps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub dt: f64,
    pub t_end: f64,
    pub stride: usize,
}

impl Schedule {
    pub fn new(dt: f64, t_end: f64, stride: usize) -> Result<Self> {
        let s = Schedule { dt, t_end, stride };
        s.steps()?;
        Ok(s)
    }

    /// Number of steps; `t_end` must be a multiple of `dt` up to rounding.
    pub fn steps(&self) -> Result<usize> {
        if !(self.dt > 0.0 && self.t_end >= 0.0 && self.stride >= 1) {
            return Err(Error::domain("schedule needs dt > 0, t_end >= 0, stride >= 1"));
        }
        let n = (self.t_end / self.dt).round();
        if (n * self.dt - self.t_end).abs() > 1e-9 * self.t_end.max(self.dt) {
            return Err(Error::domain(format!(
                "t_end = {} is not a multiple of dt = {}",
                self.t_end, self.dt
            )));
        }
        Ok(n as usize)
    }

    pub fn sample_times(&self) -> Result<Vec<f64>> {
        let n = self.steps()?;
        Ok((0..=n).step_by(self.stride).map(|k| k as f64 * self.dt).collect())
    }
}

/// Quantities of one mode at one sample time from which every reported
/// functional is computed.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ModeSample {
    pub u: f64,
    pub v: f64,
    pub theta: f64,
    /// `Σ w^μ η`, `Σ w^μ η²`.
    pub mu_int: f64,
    pub mu_sq: f64,
    pub nu_int: f64,
    pub nu_sq: f64,
    /// `Σ w^β ξ`, `Σ w^β ξ²`.
    pub beta_int: f64,
    pub beta_sq: f64,
}

impl ModeSample {
    pub fn of(system: &MemorySystem, s: &ModalState) -> Self {
        let pair = |g: Option<&HistoryGrid>, x: &[f64]| g.map_or((0.0, 0.0), |g| (g.integrate(x), g.integrate_sq(x)));
        let (mu_int, mu_sq) = pair(system.mu.as_ref(), &s.eta.0);
        let (nu_int, nu_sq) = pair(system.nu.as_ref(), &s.eta.0);
        let (beta_int, beta_sq) = pair(system.beta.as_ref(), &s.xi.0);
        ModeSample {
            u: s.u,
            v: s.v,
            theta: s.theta,
            mu_int,
            mu_sq,
            nu_int,
            nu_sq,
            beta_int,
            beta_sq,
        }
    }

    /// Squared norm of order `m`.
    pub fn energy(&self, system: &MemorySystem, gamma: f64, order: f64) -> f64 {
        let g2 = gamma * gamma;
        gamma.powf(order)
            * (g2 * self.u * self.u
                + self.v * self.v
                + self.theta * self.theta
                + gamma.powf(system.memory_power) * self.mu_sq
                + self.nu_sq
                + g2 * self.beta_sq)
    }
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub system: Arc<MemorySystem>,
    pub gammas: Vec<f64>,
    pub times: Vec<f64>,
    /// `samples[mode][k]` at `times[k]`.
    pub samples: Vec<Vec<ModeSample>>,
    /// Total order-0 energy after every step, starting with the initial one.
    pub step_energy: Vec<f64>,
    pub final_state: PhaseVector,
    pub schedule: Schedule,
}

impl Trajectory {
    pub fn energy_series(&self, order: f64) -> Vec<f64> {
        (0..self.times.len())
            .map(|k| {
                self.gammas
                    .iter()
                    .zip(&self.samples)
                    .map(|(g, s)| s[k].energy(&self.system, *g, order))
                    .sum()
            })
            .collect()
    }

    /// Largest relative energy increase over a single step, `0` if none.
    pub fn max_step_increase(&self) -> f64 {
        self.step_energy
            .windows(2)
            .map(|w| (w[1] - w[0]) / w[0].max(f64::MIN_POSITIVE))
            .fold(0.0, f64::max)
    }

    /// Rows `t,mode,u,v,theta,eta_norm,xi_norm,energy` at order `m`.
    pub fn to_csv(&self, order: f64) -> String {
        let mut out = String::from("t,mode,u,v,theta,eta_norm,xi_norm,energy\n");
        for (k, t) in self.times.iter().enumerate() {
            for (n, (g, s)) in self.gammas.iter().zip(&self.samples).enumerate() {
                let x = &s[k];
                let gm = g.powf(order);
                let eta = (gm * (g.powf(self.system.memory_power) * x.mu_sq + x.nu_sq)).sqrt();
                let xi = (gm * g * g * x.beta_sq).sqrt();
                out.push_str(&format!(
                    "{t:.6},{n},{:.12e},{:.12e},{:.12e},{eta:.12e},{xi:.12e},{:.12e}\n",
                    x.u,
                    x.v,
                    x.theta,
                    x.energy(&self.system, *g, order)
                ));
            }
        }
        out
    }
}

/// Evolves every mode with the implicit midpoint rule.
pub fn evolve(state: &PhaseVector, schedule: Schedule) -> Result<Trajectory> {
    let system = state.system.clone();
    let steps = schedule.steps()?;
    for s in &state.modes {
        system.check_state(s)?;
    }
    let runs: Vec<(Vec<ModeSample>, Vec<f64>, ModalState)> = state
        .modes
        .par_iter()
        .enumerate()
        .map(|(mode, s0)| {
            let stepper = ModeStepper::new(&system, s0.gamma, schedule.dt)
                .map_err(|_| Error::SingularStep { mode })?;
            let mut s = s0.clone();
            let mut samples = Vec::with_capacity(steps / schedule.stride + 1);
            let mut energy = Vec::with_capacity(steps + 1);
            samples.push(ModeSample::of(&system, &s));
            energy.push(system.modal_norm_sq(&s, 0.0));
            for k in 1..=steps {
                stepper.step(&mut s);
                energy.push(system.modal_norm_sq(&s, 0.0));
                if k % schedule.stride == 0 {
                    samples.push(ModeSample::of(&system, &s));
                }
            }
            if !s.u.is_finite() || !s.v.is_finite() || !s.theta.is_finite() {
                return Err(Error::SingularStep { mode });
            }
            Ok((samples, energy, s))
        })
        .collect::<Result<_>>()?;
    let mut step_energy = vec![0.0; steps + 1];
    let mut samples = Vec::with_capacity(runs.len());
    let mut finals = Vec::with_capacity(runs.len());
    for (s, e, f) in runs {
        for (acc, x) in step_energy.iter_mut().zip(&e) {
            *acc += x;
        }
        samples.push(s);
        finals.push(f);
    }
    Ok(Trajectory {
        system: system.clone(),
        gammas: state.gammas(),
        times: schedule.sample_times()?,
        samples,
        step_energy,
        final_state: PhaseVector {
            system,
            modes: finals,
            order: state.order,
        },
        schedule,
    })
}

/// [`evolve`] for a state of the memory-free limit system.
pub fn evolve_limit(state: &PhaseVector, schedule: Schedule) -> Result<Trajectory> {
    let s = &state.system;
    if s.eta_len() + s.xi_len() > 0 || !s.viscous || s.conduction_power.is_none() {
        return Err(Error::domain("evolve_limit needs a state of the limit system"));
    }
    evolve(state, schedule)
}

/// Reduced generator for exponential kernels: each history enters only
/// through `E_k = ∫ k η`, and `E_k' = -δ E_k + k(0)/δ · source` exactly.
/// Variables are `(u, v, ϑ, E_μ, E_ν, E_β)`, keeping only those present.
pub fn reduced_matrix(system: &MemorySystem, gamma: f64) -> Result<DMatrix<f64>> {
    let kernels = [
        (system.mu.as_ref(), 2usize, gamma.powf(system.memory_power), 2usize),
        (system.nu.as_ref(), 2, 1.0, 2),
        (system.beta.as_ref(), 1, gamma * gamma, 1),
    ];
    let present: Vec<_> = kernels.iter().filter(|k| k.0.is_some()).collect();
    for (g, ..) in &present {
        let k = g.unwrap().kernel;
        if k.exponent != 0.0 {
            return Err(Error::UnsupportedOracle(format!(
                "{:?} kernel with singular exponent {}",
                k.family, k.exponent
            )));
        }
    }
    let n = 3 + present.len();
    let gc = gamma.powf(system.coupling_power);
    let mut l = DMatrix::zeros(n, n);
    l[(0, 1)] = 1.0;
    l[(1, 0)] = -gamma * gamma;
    l[(1, 1)] = -system.viscosity(gamma);
    l[(1, 2)] = gc;
    l[(2, 1)] = -gc;
    l[(2, 2)] = -system.damping - system.conduction(gamma);
    for (i, (grid, row, factor, source)) in present.iter().enumerate() {
        let k = grid.unwrap().kernel;
        let e = 3 + i;
        l[(*row, e)] = -factor;
        l[(e, e)] = -k.decay;
        l[(e, *source)] = k.moment(0)?;
    }
    Ok(l)
}

/// Exact evolution of the reduced system, sampled on the schedule's grid.
#[derive(Debug, Clone)]
pub struct ClosureTrajectory {
    pub gammas: Vec<f64>,
    pub times: Vec<f64>,
    /// `states[mode][k]`: `(u, v, ϑ, E…)` at `times[k]`.
    pub states: Vec<Vec<Vec<f64>>>,
}

pub fn closure_oracle_evolve(state: &PhaseVector, schedule: Schedule) -> Result<ClosureTrajectory> {
    let system = &state.system;
    let times = schedule.sample_times()?;
    let step = schedule.dt * schedule.stride as f64;
    let states = state
        .modes
        .iter()
        .map(|s| {
            system.check_state(s)?;
            let l = reduced_matrix(system, s.gamma)?;
            let propagator = (l * step).exp();
            let x = ModeSample::of(system, s);
            let mut z = vec![s.u, s.v, s.theta];
            if system.mu.is_some() {
                z.push(x.mu_int);
            }
            if system.nu.is_some() {
                z.push(x.nu_int);
            }
            if system.beta.is_some() {
                z.push(x.beta_int);
            }
            let mut z = DVector::from_vec(z);
            let mut out = Vec::with_capacity(times.len());
            out.push(z.as_slice().to_vec());
            for _ in 1..times.len() {
                z = &propagator * z;
                out.push(z.as_slice().to_vec());
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    Ok(ClosureTrajectory {
        gammas: state.gammas(),
        times,
        states,
    })
}

/// Largest real part of the spectrum of the reduced generator of one mode.
pub fn spectral_abscissa(system: &MemorySystem, gamma: f64) -> Result<f64> {
    let l = reduced_matrix(system, gamma)?;
    Ok(l.complex_eigenvalues().iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max))
}
