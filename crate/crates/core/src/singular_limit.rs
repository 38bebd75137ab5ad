//! Comparison of the relaxed plate with its memory-free limit.

use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::dynamics::{
    evolve, evolve_limit, sweep, MemorySystem, ModalState, ModeSample, PlateParams, Schedule, Trajectory,
};
use crate::error::{Error, Result};
use crate::history::{HistoryGrid, HistorySlice};
use crate::kernels::ScalarModel;
use crate::spectral::PhaseVector;

/// `𝕃`: the limit state with zero histories on the grids of `system`.
pub fn lift(limit: &PhaseVector, system: Arc<MemorySystem>) -> PhaseVector {
    let modes = limit
        .modes
        .iter()
        .map(|s| {
            let mut z = ModalState::zeros(&system, s.gamma);
            z.u = s.u;
            z.v = s.v;
            z.theta = s.theta;
            z
        })
        .collect();
    PhaseVector {
        system,
        modes,
        order: limit.order,
    }
}

/// `ℙ`: drops the histories.
pub fn project(z: &PhaseVector) -> PhaseVector {
    lift(z, Arc::new(MemorySystem::limit()))
}

/// `ℚ_{τ,ε}`: the thermal histories, one slice per mode.
pub fn thermal_history(z: &PhaseVector) -> Vec<HistorySlice> {
    z.modes.iter().map(|s| s.eta.clone()).collect()
}

/// `ℚ_σ`: the displacement histories, one slice per mode.
pub fn displacement_history(z: &PhaseVector) -> Vec<HistorySlice> {
    z.modes.iter().map(|s| s.xi.clone()).collect()
}

/// `(Π♭, Π♯)`.
pub fn pi_bounds(params: PlateParams, scalar: &ScalarModel) -> Result<(f64, f64)> {
    params.validate()?;
    let psi = scalar.psi.eval(params.tau);
    let phi = scalar.phi.eval(params.tau);
    Ok((
        params.epsilon.powf(0.25) + params.sigma.powf(0.25) + psi.powf(0.25),
        psi.sqrt() + phi.sqrt(),
    ))
}

/// History norms of order `m`: `‖η‖` in `L²_μ(H^{m+1})`, `‖η‖` in
/// `L²_ν(H^m)` and `‖ξ‖` in `L²_β(H^{m+2})`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct HistoryNorms {
    pub eta_mu: f64,
    pub eta_nu: f64,
    pub xi: f64,
}

impl HistoryNorms {
    pub fn of<'a>(
        system: &MemorySystem,
        modes: impl Iterator<Item = (f64, &'a ModeSample)>,
        order: f64,
    ) -> Self {
        let (mut a, mut b, mut c) = (0.0, 0.0, 0.0);
        for (g, x) in modes {
            let gm = g.powf(order);
            a += gm * g.powf(system.memory_power) * x.mu_sq;
            b += gm * x.nu_sq;
            c += gm * g * g * x.beta_sq;
        }
        HistoryNorms {
            eta_mu: a.sqrt(),
            eta_nu: b.sqrt(),
            xi: c.sqrt(),
        }
    }

    /// Norm of the whole history pair.
    pub fn total(&self) -> f64 {
        (self.eta_mu.powi(2) + self.eta_nu.powi(2) + self.xi.powi(2)).sqrt()
    }
}

/// The decaying part `Υ^m` of the comparison bound for one initial datum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Upsilon {
    pub initial: HistoryNorms,
    /// `δ₁/ε`, `δ₃` and `δ₂/σ`; zero where the memory is absent.
    pub rates: [f64; 3],
}

impl Upsilon {
    pub fn new(z: &PhaseVector, order: f64) -> Self {
        let sys = &z.system;
        let samples: Vec<ModeSample> = z.modes.iter().map(|s| ModeSample::of(sys, s)).collect();
        let initial = HistoryNorms::of(sys, z.modes.iter().map(|s| s.gamma).zip(&samples), order);
        let rate = |g: &Option<HistoryGrid>| g.as_ref().map_or(0.0, |g| g.kernel.decay);
        Upsilon {
            initial,
            rates: [rate(&sys.mu), rate(&sys.nu), rate(&sys.beta)],
        }
    }

    pub fn at(&self, t: f64) -> f64 {
        let [a, b, c] = self.rates;
        self.initial.eta_mu * (-a * t / 4.0).exp()
            + self.initial.eta_nu * (-b * t / 4.0).exp()
            + self.initial.xi * (-c * t / 4.0).exp()
    }

    /// `sup_{t ≥ t₀} Υ(t)`; every term is nonincreasing so this is `Υ(t₀)`.
    pub fn sup_after(&self, t0: f64) -> f64 {
        self.at(t0)
    }
}

/// `Υ^m(t)` for the histories of `z`.
pub fn upsilon(t: f64, z: &PhaseVector, order: f64) -> Result<f64> {
    if !(t >= 0.0) {
        return Err(Error::domain("upsilon needs t >= 0"));
    }
    Ok(Upsilon::new(z, order).at(t))
}

/// Source `(ϑ, u_t)` driving the history transport, per mode.
#[derive(Debug, Clone, PartialEq)]
pub struct LimitSource {
    pub gammas: Vec<f64>,
    pub times: Vec<f64>,
    pub theta: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

impl From<&Trajectory> for LimitSource {
    fn from(tr: &Trajectory) -> Self {
        LimitSource {
            gammas: tr.gammas.clone(),
            times: tr.times.clone(),
            theta: tr.samples.iter().map(|s| s.iter().map(|x| x.theta).collect()).collect(),
            v: tr.samples.iter().map(|s| s.iter().map(|x| x.v).collect()).collect(),
        }
    }
}

impl LimitSource {
    fn interpolate(series: &[f64], times: &[f64], t: f64) -> f64 {
        let k = times.partition_point(|x| *x <= t).clamp(1, times.len() - 1);
        let (t0, t1) = (times[k - 1], times[k]);
        let w = ((t - t0) / (t1 - t0)).clamp(0.0, 1.0);
        series[k - 1] * (1.0 - w) + series[k] * w
    }
}

/// Histories rebuilt along the limit trajectory, sampled at the source times.
#[derive(Debug, Clone)]
pub struct ReconstructedHistories {
    pub times: Vec<f64>,
    /// `samples[mode][k]`, with `(u, v)` left at zero and `ϑ` copied from the source.
    pub samples: Vec<Vec<ModeSample>>,
    /// Set when the source spacing differed from `dt` and was interpolated.
    pub interpolated: bool,
}

fn transport_step(ratio: &[f64], x: &mut [f64], h: f64, source: f64, work: &mut Vec<f64>) {
    work.clear();
    work.extend(x.iter().map(|e| e + h * source));
    sweep(ratio, work);
    for (a, y) in x.iter_mut().zip(work.iter()) {
        *a = 2.0 * y - *a;
    }
}

/// Integrates `η_t = Tη + ϑ`, `ξ_t = Tξ + u_t` on the grids of `system`
/// with the limit solution as source.
pub fn reconstruct_limit_histories(
    source: &LimitSource,
    eta0: &[HistorySlice],
    xi0: &[HistorySlice],
    system: &MemorySystem,
    dt: f64,
) -> Result<ReconstructedHistories> {
    let n = source.gammas.len();
    if eta0.len() != n || xi0.len() != n || source.theta.len() != n || source.v.len() != n {
        return Err(Error::Shape("histories and source disagree on the number of modes".into()));
    }
    if source.times.len() < 2 {
        return Err(Error::domain("source needs at least two samples"));
    }
    if !(dt > 0.0) {
        return Err(Error::domain("time step must be positive"));
    }
    let interpolated = source.times.windows(2).any(|w| ((w[1] - w[0]) - dt).abs() > 1e-9 * dt);
    let h = 0.5 * dt;
    let ratio = |g: Option<&HistoryGrid>| g.map_or(Vec::new(), |g| g.spacing.iter().map(|d| h / d).collect::<Vec<_>>());
    let eta_ratio = ratio(system.eta_grid());
    let xi_ratio = ratio(system.beta.as_ref());
    let t_end = *source.times.last().unwrap();
    let steps = ((t_end - source.times[0]) / dt).round() as usize;
    let samples = (0..n)
        .into_par_iter()
        .map(|mode| {
            let mut s = ModalState::zeros(system, source.gammas[mode]);
            if eta0[mode].len() != s.eta.len() || xi0[mode].len() != s.xi.len() {
                return Err(Error::Shape(format!("mode {mode}: history slice does not fit the grid")));
            }
            s.eta = eta0[mode].clone();
            s.xi = xi0[mode].clone();
            let at = |series: &[f64], t: f64| LimitSource::interpolate(series, &source.times, t);
            let theta = &source.theta[mode];
            let v = &source.v[mode];
            let mut out = Vec::with_capacity(source.times.len());
            let mut work = Vec::new();
            s.theta = theta[0];
            out.push(ModeSample::of(system, &s));
            let mut next = 1;
            for k in 0..steps {
                let t = source.times[0] + (k as f64 + 0.5) * dt;
                let (st, sv) = if interpolated {
                    (at(theta, t), at(v, t))
                } else {
                    (0.5 * (theta[k] + theta[k + 1]), 0.5 * (v[k] + v[k + 1]))
                };
                transport_step(&eta_ratio, &mut s.eta.0, h, st, &mut work);
                transport_step(&xi_ratio, &mut s.xi.0, h, sv, &mut work);
                let t1 = source.times[0] + (k + 1) as f64 * dt;
                if next < source.times.len() && (source.times[next] - t1).abs() <= 0.5 * dt {
                    s.theta = theta[next];
                    out.push(ModeSample::of(system, &s));
                    next += 1;
                }
            }
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ReconstructedHistories {
        times: source.times.clone(),
        samples,
        interpolated,
    })
}

/// One parameter point of a comparison.
#[derive(Debug, Clone, Serialize)]
pub struct ComparisonRun {
    pub params: PlateParams,
    pub order: f64,
    pub t0: f64,
    pub times: Vec<f64>,
    /// `‖S(t)z - 𝕃 S₀(t) ℙ z‖` of order `m`.
    pub difference: Vec<f64>,
    /// The `(u, u_t, ϑ)` part of the difference.
    pub triplet: Vec<f64>,
    pub histories: Vec<HistoryNorms>,
    /// Difference against the limit with reconstructed histories, if requested.
    pub reconstructed: Option<Vec<f64>>,
    pub upsilon: Upsilon,
    pub pi: (f64, f64),
    /// `sup D` over `[t₀, T]` and over `[0, T]`.
    pub sup_after: f64,
    pub sup_all: f64,
    /// `sup_t (D - Υ)₊ / Π♭` and `sup_t (D - Υ)₊ / Π♯`, each the constant
    /// needed if the other bound term were absent.
    pub k_r: f64,
    pub q_rt: f64,
}

impl ComparisonRun {
    /// `sup_{[t₀,T]} D / (Υ + Π♭)`.
    pub fn bound_ratio(&self) -> f64 {
        self.times
            .iter()
            .zip(&self.difference)
            .filter(|(t, _)| **t >= self.t0)
            .map(|(t, d)| d / (self.upsilon.at(*t) + self.pi.0))
            .fold(0.0, f64::max)
    }

    /// The τ = 0 bound `‖η₀‖e^(-δ₁t/4ε) + ‖ξ₀‖e^(-δ₂t/4σ) + K(ε^¼ + σ^¼)`.
    pub fn gp2_bound(&self, t: f64, k: f64) -> f64 {
        let p = self.params;
        self.upsilon.at(t) + k * (p.epsilon.powf(0.25) + p.sigma.powf(0.25))
    }

    pub const CSV_HEADER: &'static str = "sigma,tau,epsilon,m,t0,sup_d,upsilon_t0,pi_flat,pi_sharp,k_r,q_rt";

    pub fn csv_row(&self) -> String {
        let p = self.params;
        format!(
            "{},{},{},{},{},{:.9e},{:.9e},{:.9e},{:.9e},{:.9e},{:.9e}",
            p.sigma,
            p.tau,
            p.epsilon,
            self.order,
            self.t0,
            self.sup_after,
            self.upsilon.sup_after(self.t0),
            self.pi.0,
            self.pi.1,
            self.k_r,
            self.q_rt
        )
    }
}

pub fn sweep_to_csv(runs: &[ComparisonRun]) -> String {
    let mut out = format!("{}\n", ComparisonRun::CSV_HEADER);
    for r in runs {
        out.push_str(&r.csv_row());
        out.push('\n');
    }
    out
}

/// The limit trajectory from `ℙz`, computed once per datum.
pub fn limit_trajectory(z: &PhaseVector, schedule: Schedule) -> Result<Trajectory> {
    evolve_limit(&project(z), schedule)
}

/// Runs the relaxed system from `z` and measures its distance to the
/// shared `limit` trajectory, which must use the same schedule.
pub fn compare_trajectories(
    z: &PhaseVector,
    limit: &Trajectory,
    scalar: &ScalarModel,
    order: f64,
    t0: f64,
    reconstruct: bool,
) -> Result<ComparisonRun> {
    let schedule = limit.schedule;
    if !(t0 >= 0.0) || t0 > schedule.t_end {
        return Err(Error::domain(format!("cut time {t0} outside [0, {}]", schedule.t_end)));
    }
    if limit.gammas != z.gammas() {
        return Err(Error::Shape("limit trajectory has different modes".into()));
    }
    let system = &z.system;
    let params = system
        .params
        .ok_or_else(|| Error::domain("comparison needs a plate system"))?;
    let tr = evolve(z, schedule)?;
    let upsilon = Upsilon::new(z, order);
    let pi = pi_bounds(params, scalar)?;
    let triplet_sq = |k: usize, other: &[Vec<ModeSample>]| -> f64 {
        tr.gammas
            .iter()
            .enumerate()
            .map(|(n, g)| {
                let (a, b) = (&tr.samples[n][k], &other[n][k]);
                g.powf(order) * (g * g * (a.u - b.u).powi(2) + (a.v - b.v).powi(2) + (a.theta - b.theta).powi(2))
            })
            .sum()
    };
    let mut difference = Vec::with_capacity(tr.times.len());
    let mut triplet = Vec::with_capacity(tr.times.len());
    let mut histories = Vec::with_capacity(tr.times.len());
    for k in 0..tr.times.len() {
        let h = HistoryNorms::of(system, tr.gammas.iter().copied().zip(tr.samples.iter().map(|s| &s[k])), order);
        let t2 = triplet_sq(k, &limit.samples);
        triplet.push(t2.sqrt());
        difference.push((t2 + h.total().powi(2)).sqrt());
        histories.push(h);
    }
    let reconstructed = if reconstruct {
        // the transport is linear: the history gap to the reconstructed limit
        // solves it from rest, driven by the gap in (ϑ, u_t)
        let gap = |f: fn(&ModeSample) -> f64| -> Vec<Vec<f64>> {
            tr.samples
                .iter()
                .zip(&limit.samples)
                .map(|(a, b)| a.iter().zip(b).map(|(x, y)| f(x) - f(y)).collect())
                .collect()
        };
        let source = LimitSource {
            gammas: tr.gammas.clone(),
            times: tr.times.clone(),
            theta: gap(|x| x.theta),
            v: gap(|x| x.v),
        };
        let zeros = |w: usize| vec![HistorySlice::zeros(w); tr.gammas.len()];
        let rec = reconstruct_limit_histories(&source, &zeros(system.eta_len()), &zeros(system.xi_len()), system, schedule.dt)?;
        Some(
            (0..tr.times.len())
                .map(|k| {
                    let h = HistoryNorms::of(system, tr.gammas.iter().copied().zip(rec.samples.iter().map(|s| &s[k])), order);
                    (triplet[k].powi(2) + h.total().powi(2)).sqrt()
                })
                .collect(),
        )
    } else {
        None
    };
    let sup_over = |from: f64| {
        tr.times
            .iter()
            .zip(&difference)
            .filter(|(t, _)| **t >= from)
            .map(|(_, d)| *d)
            .fold(0.0, f64::max)
    };
    let excess = tr
        .times
        .iter()
        .zip(&difference)
        .map(|(t, d)| (d - upsilon.at(*t)).max(0.0))
        .fold(0.0, f64::max);
    let ratio = |p: f64| if p > 0.0 { excess / p } else { f64::NAN };
    Ok(ComparisonRun {
        params,
        order,
        t0,
        times: tr.times.clone(),
        sup_after: sup_over(t0),
        sup_all: sup_over(0.0),
        difference,
        triplet,
        histories,
        reconstructed,
        upsilon,
        pi,
        k_r: ratio(pi.0),
        q_rt: ratio(pi.1),
    })
}

/// Constants of the history envelopes
/// `‖η^t‖_μ ≤ ‖η₀‖_μ e^(-δ₁t/4ε) + K√ε`, `‖η^t‖_ν ≤ ‖η₀‖_ν e^(-δ₃t/4) + K√ψ`
/// and `‖ξ^t‖ ≤ ‖ξ₀‖ e^(-δ₂t/4σ) + K√σ`, as the smallest `K` each run needs.
pub fn envelope_constants(run: &ComparisonRun, scalar: &ScalarModel) -> [f64; 3] {
    let p = run.params;
    let scales = [p.epsilon.sqrt(), scalar.psi.eval(p.tau).sqrt(), p.sigma.sqrt()];
    let mut k = [0.0f64; 3];
    for (t, h) in run.times.iter().zip(&run.histories) {
        let u = &run.upsilon;
        let decay = |i: usize| (-u.rates[i] * t / 4.0).exp();
        let measured = [h.eta_mu, h.eta_nu, h.xi];
        let initial = [u.initial.eta_mu, u.initial.eta_nu, u.initial.xi];
        for i in 0..3 {
            if scales[i] > 0.0 {
                k[i] = k[i].max((measured[i] - initial[i] * decay(i)).max(0.0) / scales[i]);
            }
        }
    }
    k
}

/// Largest excess of a run's history norms over the envelopes with constants
/// `k`; nonpositive when every envelope holds.
pub fn envelope_excess(run: &ComparisonRun, scalar: &ScalarModel, k: [f64; 3]) -> f64 {
    let p = run.params;
    let scales = [p.epsilon.sqrt(), scalar.psi.eval(p.tau).sqrt(), p.sigma.sqrt()];
    let u = &run.upsilon;
    let initial = [u.initial.eta_mu, u.initial.eta_nu, u.initial.xi];
    run.times
        .iter()
        .zip(&run.histories)
        .flat_map(|(t, h)| {
            let measured = [h.eta_mu, h.eta_nu, h.xi];
            (0..3).map(move |i| measured[i] - initial[i] * (-u.rates[i] * t / 4.0).exp() - k[i] * scales[i])
        })
        .fold(f64::NEG_INFINITY, f64::max)
}
