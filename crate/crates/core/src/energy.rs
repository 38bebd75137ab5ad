//! Energy, the perturbed Lyapunov functionals and decay-rate estimation.

use serde::{Deserialize, Serialize};

use crate::dynamics::{MemorySystem, ModeSample, PlateParams, Trajectory};
use crate::error::{Error, Result};
use crate::spectral::PhaseVector;

/// Squared norm of order `m` of a state.
pub fn energy(state: &PhaseVector, order: f64) -> f64 {
    state
        .modes
        .iter()
        .map(|s| state.system.modal_norm_sq(s, order))
        .sum()
}

/// Weights of the perturbed functionals and the fit window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FunctionalConfig {
    pub rho_flat: f64,
    pub rho_sharp: f64,
    /// Weight of the energy in `F₂ = N ℰ + K₃`.
    pub n_weight: f64,
    pub window: (f64, f64),
}

impl Default for FunctionalConfig {
    fn default() -> Self {
        FunctionalConfig {
            rho_flat: 0.01,
            rho_sharp: 0.02,
            n_weight: 10.0,
            window: (1.0, 15.0),
        }
    }
}

impl FunctionalConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 < self.rho_flat && self.rho_flat < self.rho_sharp) {
            return Err(Error::domain("need 0 < rho_flat < rho_sharp"));
        }
        if !(self.n_weight > 0.0) {
            return Err(Error::domain("N must be positive"));
        }
        if !(self.window.0 < self.window.1) {
            return Err(Error::domain("empty fit window"));
        }
        Ok(())
    }
}

/// Values of the functionals at one time. Components that need a collapsed
/// history are reported as zero and listed in `missing`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LyapunovValues {
    pub energy: f64,
    pub theta_flat: f64,
    pub theta_sharp: f64,
    pub f1: f64,
    pub k: f64,
    pub k2: f64,
    pub k3: f64,
    pub f2: f64,
    pub f: f64,
    pub missing: Vec<&'static str>,
}

fn relaxation(system: &MemorySystem) -> PlateParams {
    system.params.unwrap_or(PlateParams::LIMIT)
}

/// Functionals from per-mode samples.
pub fn lyapunov_from_samples<'a>(
    system: &MemorySystem,
    modes: impl Iterator<Item = (f64, &'a ModeSample)>,
    config: &FunctionalConfig,
) -> LyapunovValues {
    let p = relaxation(system);
    let (mut e, mut tf, mut ts, mut k, mut k_au) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (gamma, x) in modes {
        e += x.energy(system, gamma, 0.0);
        tf += x.u * x.v;
        // pairing in L²_β(H⁰): no power of γ
        ts -= p.sigma * x.v * x.beta_int;
        k -= p.epsilon * x.theta * x.mu_int;
        k_au += p.epsilon * gamma * x.u * x.mu_int;
    }
    let mut missing = Vec::new();
    if system.beta.is_none() {
        missing.push("theta_sharp");
    }
    if system.mu.is_none() {
        missing.extend(["k", "k2"]);
    }
    let k2 = k - k_au;
    let k3 = 4.0 * ts + k2 + tf;
    let f1 = e + config.rho_flat * tf + config.rho_sharp * ts;
    let f2 = config.n_weight * e + k3;
    LyapunovValues {
        energy: e,
        theta_flat: tf,
        theta_sharp: ts,
        f1,
        k,
        k2,
        k3,
        f2,
        f: f1 + f2,
        missing,
    }
}

pub fn lyapunov_values(state: &PhaseVector, config: &FunctionalConfig) -> LyapunovValues {
    let samples: Vec<ModeSample> = state
        .modes
        .iter()
        .map(|s| ModeSample::of(&state.system, s))
        .collect();
    lyapunov_from_samples(
        &state.system,
        state.modes.iter().map(|m| m.gamma).zip(&samples),
        config,
    )
}

/// Functionals at every sample of a trajectory.
pub fn lyapunov_series(tr: &Trajectory, config: &FunctionalConfig) -> Vec<LyapunovValues> {
    (0..tr.times.len())
        .map(|k| {
            lyapunov_from_samples(
                &tr.system,
                tr.gammas.iter().copied().zip(tr.samples.iter().map(|s| &s[k])),
                config,
            )
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecayReport {
    pub params: Option<PlateParams>,
    pub order: f64,
    pub rate: f64,
    /// `ς` in `ℰ(t) ≈ ς ℰ(0) e^(-rate·t)`.
    pub prefactor: f64,
    pub window: (f64, f64),
    pub r_squared: f64,
    /// Set when the energy underflowed and the window was cut short.
    pub truncated: bool,
    pub lambda_hat: Option<f64>,
    pub d0_hat: Option<f64>,
    pub residual: f64,
}

impl DecayReport {
    pub const CSV_HEADER: &'static str = "sigma,tau,epsilon,m,rate,prefactor,lambda_hat,d0_hat,residual,r2";

    pub fn csv_row(&self) -> String {
        let p = self.params.unwrap_or(PlateParams::LIMIT);
        let opt = |x: Option<f64>| x.map_or(String::from("nan"), |v| format!("{v:.9e}"));
        format!(
            "{},{},{},{},{:.9e},{:.9e},{},{},{:.3e},{:.12}",
            p.sigma,
            p.tau,
            p.epsilon,
            self.order,
            self.rate,
            self.prefactor,
            opt(self.lambda_hat),
            opt(self.d0_hat),
            self.residual,
            self.r_squared
        )
    }
}

pub fn reports_to_csv(reports: &[DecayReport]) -> String {
    let mut out = format!("{}\n", DecayReport::CSV_HEADER);
    for r in reports {
        out.push_str(&r.csv_row());
        out.push('\n');
    }
    out
}

/// Least squares on `(t, log ℰ)` over `window`.
pub fn fit_decay_rate(times: &[f64], energy: &[f64], window: (f64, f64)) -> Result<DecayReport> {
    if times.len() != energy.len() || times.is_empty() {
        return Err(Error::Shape("times and energy differ in length".into()));
    }
    let e0 = energy[0];
    let mut truncated = false;
    let mut pts = Vec::new();
    for (&t, &e) in times.iter().zip(energy) {
        if t < window.0 - 1e-12 || t > window.1 + 1e-12 {
            continue;
        }
        if !(e > f64::MIN_POSITIVE * 1e10) {
            truncated = true;
            break;
        }
        pts.push((t, e.ln()));
    }
    if pts.len() < 3 {
        return Err(Error::Fit(format!(
            "only {} usable samples in [{}, {}]",
            pts.len(),
            window.0,
            window.1
        )));
    }
    let (slope, intercept, r2) = least_squares(&pts);
    Ok(DecayReport {
        params: None,
        order: 0.0,
        rate: -slope,
        prefactor: intercept.exp() / e0,
        window: (pts[0].0, pts[pts.len() - 1].0),
        r_squared: r2,
        truncated,
        lambda_hat: None,
        d0_hat: None,
        residual: 0.0,
    })
}

/// `(slope, intercept, R²)` of the ordinary least-squares line.
pub fn least_squares(pts: &[(f64, f64)]) -> (f64, f64, f64) {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    (slope, intercept, r2)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InequalityCheck {
    /// Largest `Λ` with `F₁' + (Λ/2) φ F₁ ≤ 0` at every interior sample;
    /// `None` when `φ(τ) = 0`.
    pub lambda_hat: Option<f64>,
    /// Largest `d₀` with `F₂' + d₀ F₂ ≤ 0` at every interior sample.
    pub d0_hat: f64,
    /// Largest relative violation left at the reported constants clipped
    /// to be nonnegative.
    pub residual: f64,
    /// `max_t F₁'/F₁` when `φ(τ) = 0`.
    pub f1_growth: f64,
    /// `min` and `max` of `ℰ/F₁`.
    pub equivalence: (f64, f64),
    pub f2_positive: bool,
}

/// Centered-difference check of the two differential inequalities along a
/// sampled trajectory.
pub fn check_differential_inequalities(tr: &Trajectory, config: &FunctionalConfig) -> Result<InequalityCheck> {
    config.validate()?;
    if tr.times.len() < 3 {
        return Err(Error::domain("need at least three samples for centered differences"));
    }
    let values = lyapunov_series(tr, config);
    let phi = tr.system.damping;
    let n = values.len();
    let mut lambda = f64::INFINITY;
    let mut growth = f64::NEG_INFINITY;
    let mut d0 = f64::INFINITY;
    let mut f2_positive = true;
    for k in 1..n - 1 {
        let dt = tr.times[k + 1] - tr.times[k - 1];
        let df1 = (values[k + 1].f1 - values[k - 1].f1) / dt;
        let df2 = (values[k + 1].f2 - values[k - 1].f2) / dt;
        let (f1, f2) = (values[k].f1, values[k].f2);
        if !(f1 > 0.0 && f2 > 0.0) {
            f2_positive &= f2 > 0.0;
            continue;
        }
        growth = growth.max(df1 / f1);
        if phi > 0.0 {
            lambda = lambda.min(-2.0 * df1 / (phi * f1));
        }
        d0 = d0.min(-df2 / f2);
    }
    let lambda_hat = (phi > 0.0).then_some(lambda);
    let mut residual = 0.0f64;
    for k in 1..n - 1 {
        let dt = tr.times[k + 1] - tr.times[k - 1];
        let (f1, f2) = (values[k].f1, values[k].f2);
        if !(f1 > 0.0 && f2 > 0.0) {
            continue;
        }
        let df1 = (values[k + 1].f1 - values[k - 1].f1) / dt;
        let df2 = (values[k + 1].f2 - values[k - 1].f2) / dt;
        let l = lambda_hat.unwrap_or(0.0).max(0.0);
        residual = residual.max((df1 + 0.5 * l * phi * f1) / f1);
        residual = residual.max((df2 + d0.max(0.0) * f2) / f2);
    }
    let ratios = values.iter().filter(|v| v.f1 > 0.0).map(|v| v.energy / v.f1);
    let equivalence = ratios.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| (lo.min(r), hi.max(r)));
    Ok(InequalityCheck {
        lambda_hat,
        d0_hat: d0,
        residual: residual.max(0.0),
        f1_growth: growth,
        equivalence,
        f2_positive,
    })
}

/// Decay fit and inequality check for one trajectory.
pub fn decay_report(tr: &Trajectory, config: &FunctionalConfig) -> Result<DecayReport> {
    let mut report = fit_decay_rate(&tr.times, &tr.energy_series(0.0), config.window)?;
    let check = check_differential_inequalities(tr, config)?;
    report.params = tr.system.params;
    report.lambda_hat = check.lambda_hat;
    report.d0_hat = Some(check.d0_hat);
    report.residual = check.residual;
    Ok(report)
}
