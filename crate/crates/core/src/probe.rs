//! Resolvent probe for the abstract memory system: explicit pairs with
//! `(iλ - L) z = z̃`, `‖z̃‖` bounded and `‖z‖` unbounded along the modes.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::dynamics::MemorySystem;
use crate::energy::least_squares;
use crate::error::{Error, Result};
use crate::history::GridPolicy;
use crate::kernels::{BaseKernel, KernelFamily, KernelSpec};

/// Parameters of the abstract system; `beta = None` means `β ≡ 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AbstractParams {
    pub alpha: f64,
    pub sigma: f64,
    pub mu: BaseKernel,
    #[serde(default)]
    pub beta: Option<BaseKernel>,
}

/// Which non-exponential-decay theorem covers a parameter point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Admissibility {
    pub zero_strain_memory: bool,
    pub with_strain_memory: bool,
    pub reasons: Vec<String>,
}

fn power_kernel(b: &BaseKernel) -> Result<KernelSpec> {
    let family = if b.exponent == 0.0 {
        KernelFamily::Exponential
    } else {
        KernelFamily::PowerExponential
    };
    KernelSpec::base(family, b.amplitude, b.exponent, b.decay)
}

impl AbstractParams {
    pub fn mu_kernel(&self) -> Result<KernelSpec> {
        power_kernel(&self.mu)
    }

    pub fn beta_kernel(&self) -> Result<Option<KernelSpec>> {
        self.beta.as_ref().map(power_kernel).transpose()
    }

    /// `k₀ = ∫μ`.
    pub fn k0(&self) -> Result<f64> {
        self.mu_kernel()?.moment(0)
    }

    /// `h₀ = ∫β`, zero without strain memory.
    pub fn h0(&self) -> Result<f64> {
        self.beta_kernel()?.map_or(Ok(0.0), |b| b.moment(0))
    }

    pub fn admissibility(&self) -> Admissibility {
        // the boundary cases are admissible; absorb rounding in `ω₁ - (2σ-α)/2`
        const TOL: f64 = 1e-12;
        let (a, s, w1) = (self.alpha, self.sigma, self.mu.exponent);
        let mut reasons = Vec::new();
        let mut check = |ok: bool, what: String| {
            if !ok {
                reasons.push(what);
            }
            ok
        };
        let base = check((0.0..2.0).contains(&a), format!("alpha = {a} outside [0, 2)"))
            & check(s >= 0.0, format!("sigma = {s} negative"))
            & check(
                (0.0..(2.0 - a) / 2.0).contains(&w1),
                format!("omega1 = {w1} outside [0, (2 - alpha)/2)"),
            );
        let zero = base & check(self.beta.is_none(), "strain memory present".into());
        let with = match self.beta {
            None => false,
            Some(b) => {
                let w2 = b.exponent;
                let lo = (2.0 * s - a) / 2.0;
                base & check(s < 1.0, format!("sigma = {s} not below 1"))
                    & check(a <= 2.0 * s, format!("alpha = {a} above 2 sigma"))
                    & check(w1 >= lo - TOL, format!("omega1 = {w1} below (2 sigma - alpha)/2 = {lo}"))
                    & check(
                        (0.0..=w1 - lo + TOL).contains(&w2),
                        format!("omega2 = {w2} outside [0, omega1 - (2 sigma - alpha)/2]"),
                    )
            }
        };
        Admissibility {
            zero_strain_memory: zero,
            with_strain_memory: with,
            reasons,
        }
    }

    /// Abstract system discretized on `nodes`-point history grids.
    pub fn system(&self, nodes: usize, policy: GridPolicy) -> Result<MemorySystem> {
        MemorySystem::abstract_system(
            self.alpha,
            self.sigma,
            &self.mu_kernel()?,
            self.beta_kernel()?.as_ref(),
            nodes,
            policy,
        )
    }
}

/// Root of `λ⁴ - Bλ² + C = 0` used by the probe, with audit data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Frequency {
    pub lambda: f64,
    /// The other positive root.
    pub lambda_small: f64,
    pub b: f64,
    pub c: f64,
    /// `|λ⁴ - Bλ² + C|` at `lambda`.
    pub residual: f64,
    /// `(1 + h₀)γ² - λ²` at the larger and smaller root.
    pub denominators: (f64, f64),
}

pub fn mode_frequency(gamma: f64, params: &AbstractParams) -> Result<Frequency> {
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::domain("mode eigenvalue must be positive"));
    }
    let k0 = params.k0()?;
    let h0 = params.h0()?;
    let b = (1.0 + h0) * gamma * gamma + gamma.powf(2.0 * params.sigma) + k0 * gamma.powf(params.alpha);
    let c = k0 * (1.0 + h0) * gamma.powf(params.alpha + 2.0);
    let disc = b * b - 4.0 * c;
    if disc < 0.0 {
        return Err(Error::domain(format!("quartic has no real root at gamma = {gamma}")));
    }
    let large = 0.5 * (b + disc.sqrt());
    // product of the roots is C; avoids cancellation in the small one
    let small = c / large;
    let lambda = large.sqrt();
    let residual = (large * large - b * large + c).abs();
    let denom = |l2: f64| (1.0 + h0) * gamma * gamma - l2;
    let denominators = (denom(large), denom(small));
    if denominators.0.abs() < 1e-12 * (1.0 + h0) * gamma * gamma {
        return Err(Error::DegenerateMode { gamma });
    }
    Ok(Frequency {
        lambda,
        lambda_small: small.sqrt(),
        b,
        c,
        residual,
        denominators,
    })
}

/// Test pair `(z, z̃)` for one mode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProbePair {
    pub gamma: f64,
    pub alpha: f64,
    pub frequency: Frequency,
    pub r: Complex64,
    pub p: Complex64,
    pub q: Complex64,
    /// `Λ`, the amplitude of `ξ̃`.
    pub cap_lambda: Complex64,
    pub norm_z: f64,
    pub norm_z_tilde: f64,
}

impl ProbePair {
    pub fn lambda(&self) -> f64 {
        self.frequency.lambda
    }

    pub fn ratio(&self) -> f64 {
        self.norm_z_tilde / self.norm_z
    }

    fn profile(&self, amplitude: Complex64, s: f64) -> Complex64 {
        let il = Complex64::new(0.0, self.lambda());
        amplitude * (1.0 - (-il * s).exp()) / il
    }

    /// `φ(s)`, the thermal history of `z`.
    pub fn phi(&self, s: f64) -> Complex64 {
        self.profile(self.r + self.gamma.powf(-self.alpha / 2.0), s)
    }

    /// `ψ(s)`, the strain history of `z`.
    pub fn psi(&self, s: f64) -> Complex64 {
        self.profile(self.q + self.cap_lambda, s)
    }

    /// Constant value of `η̃`.
    pub fn eta_tilde(&self) -> f64 {
        self.gamma.powf(-self.alpha / 2.0)
    }
}

pub fn build_probe_pair(gamma: f64, params: &AbstractParams) -> Result<ProbePair> {
    let frequency = mode_frequency(gamma, params)?;
    let lambda = frequency.lambda;
    let mu = params.mu_kernel()?;
    let beta = params.beta_kernel()?;
    let k0 = mu.moment(0)?;
    let c = mu.laplace_transform(lambda);
    let (h0, b) = match &beta {
        Some(k) => (k.moment(0)?, k.laplace_transform(lambda)),
        None => (0.0, Complex64::new(0.0, 0.0)),
    };
    let ga2 = gamma.powf(params.alpha / 2.0);
    let r = (k0 - c) / (ga2 * c);
    let p = gamma.powf(params.sigma) * r / frequency.denominators.0;
    let il = Complex64::new(0.0, lambda);
    let q = il * p;
    let cap_lambda = if beta.is_some() {
        let gap = h0 - b;
        if gap.norm() < 1e-14 {
            return Err(Error::Branch { lambda });
        }
        il * p * b / gap
    } else {
        // with β ≡ 0 the strain equation holds for any Λ
        Complex64::new(0.0, 0.0)
    };
    let l2 = lambda * lambda;
    let g2 = gamma * gamma;
    let eta_sq = gamma.powf(params.alpha) * (r + 1.0 / ga2).norm_sqr() * 2.0 * (k0 - c.re) / l2;
    let xi_sq = if beta.is_some() {
        g2 * (q + cap_lambda).norm_sqr() * 2.0 * (h0 - b.re) / l2
    } else {
        0.0
    };
    let norm_z = (g2 * p.norm_sqr() + q.norm_sqr() + r.norm_sqr() + eta_sq + xi_sq).sqrt();
    let norm_z_tilde = (k0 + h0 * g2 * cap_lambda.norm_sqr()).sqrt();
    Ok(ProbePair {
        gamma,
        alpha: params.alpha,
        frequency,
        r,
        p,
        q,
        cap_lambda,
        norm_z,
        norm_z_tilde,
    })
}

/// `‖z̃‖²` recomputed by quadrature of the kernel masses.
pub fn z_tilde_norm_sq_by_quadrature(pair: &ProbePair, params: &AbstractParams) -> Result<f64> {
    let k0 = params.mu_kernel()?.moment_by_quadrature(0)?;
    let h0 = params.beta_kernel()?.map_or(Ok(0.0), |b| b.moment_by_quadrature(0))?;
    Ok(k0 * pair.gamma.powf(params.alpha) * pair.eta_tilde().powi(2)
        + h0 * (pair.gamma * pair.cap_lambda).norm_sqr())
}

/// `‖(iλ - L_h) z_h - z̃_h‖ / ‖z̃_h‖` with both sides sampled at the history
/// nodes of `system`, in the weighted norm of the discrete space.
pub fn residual_check(pair: &ProbePair, params: &AbstractParams, system: &MemorySystem) -> Result<f64> {
    let mu = params.mu_kernel()?;
    let grid_mu = system
        .mu
        .as_ref()
        .ok_or_else(|| Error::Shape("system has no thermal memory".into()))?;
    let beta = params.beta_kernel()?;
    let same = |a: &KernelSpec, b: &KernelSpec| {
        a.family == b.family && a.amplitude == b.amplitude && a.exponent == b.exponent && a.decay == b.decay
    };
    let beta_ok = match (&beta, &system.beta) {
        (None, None) => true,
        (Some(k), Some(g)) => same(k, &g.kernel),
        _ => false,
    };
    if !same(&mu, &grid_mu.kernel) || !beta_ok || system.memory_power != params.alpha || system.coupling_power != params.sigma
    {
        return Err(Error::Shape("grids were built for different kernels or powers".into()));
    }
    let op = system.mode_operator(pair.gamma);
    let mut z = vec![pair.p, pair.q, pair.r];
    z.extend(grid_mu.nodes.iter().map(|s| pair.phi(*s)));
    let mut target = vec![Complex64::new(0.0, 0.0); 3];
    target.extend(std::iter::repeat_n(Complex64::new(pair.eta_tilde(), 0.0), grid_mu.len()));
    if let Some(g) = &system.beta {
        z.extend(g.nodes.iter().map(|s| pair.psi(*s)));
        target.extend(std::iter::repeat_n(pair.cap_lambda, g.len()));
    }
    let lz = op.apply_complex(&z);
    let il = Complex64::new(0.0, pair.lambda());
    let w = op.weights.as_slice();
    let (mut num, mut den) = (0.0, 0.0);
    for j in 0..z.len() {
        num += w[j] * (il * z[j] - lz[j] - target[j]).norm_sqr();
        den += w[j] * target[j].norm_sqr();
    }
    if den == 0.0 {
        return Ok(num.sqrt());
    }
    Ok((num / den).sqrt())
}

/// Least-squares slope with a 95% Student-t interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub ci: (f64, f64),
    pub predicted: f64,
}

impl SlopeFit {
    fn fit(x: &[f64], y: &[f64], predicted: f64) -> Result<Self> {
        let pts: Vec<(f64, f64)> = x.iter().map(|v| v.ln()).zip(y.iter().map(|v| v.ln())).collect();
        if pts.len() < 4 {
            return Err(Error::Fit(format!("{} points are too few for a slope", pts.len())));
        }
        let (slope, intercept, _) = least_squares(&pts);
        let n = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        let sse: f64 = pts.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum();
        let se = (sse / (n - 2.0) / sxx).sqrt();
        let t = StudentsT::new(0.0, 1.0, n - 2.0)
            .map_err(|e| Error::Fit(e.to_string()))?
            .inverse_cdf(0.975);
        Ok(SlopeFit {
            slope,
            ci: (slope - t * se, slope + t * se),
            predicted,
        })
    }

    /// `|slope - predicted| ≤ tol·|predicted|`, or `≤ tol` when the prediction is zero.
    pub fn matches(&self, tol: f64) -> bool {
        // exponent sums like 0.05 - 0.3 + 0.75 - 0.5 land near, not on, zero
        let scale = if self.predicted.abs() < 1e-12 { 1.0 } else { self.predicted.abs() };
        (self.slope - self.predicted).abs() <= tol * scale
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ScanRow {
    pub pair: ProbePair,
    /// Discrete residual, when grids were supplied.
    pub residual: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ScanReport {
    pub params: AbstractParams,
    pub admissibility: Admissibility,
    pub rows: Vec<ScanRow>,
    /// Modes dropped as degenerate.
    pub skipped: Vec<f64>,
    /// `log ‖z‖` against `log γ`, predicted `1 - ω₁ - α/2`.
    pub norm_slope: SlopeFit,
    /// `log |γΛ|` against `log γ`, predicted `ω₂ - ω₁ + σ - α/2`.
    pub gamma_lambda_slope: Option<SlopeFit>,
    pub ratio_decreasing: bool,
}

impl ScanReport {
    pub const CSV_HEADER: &'static str =
        "gamma,lambda,norm_z,norm_z_tilde,ratio,quartic_residual,discrete_residual,denominator_large,denominator_small";

    pub fn to_csv(&self) -> String {
        let mut out = format!("{}\n", Self::CSV_HEADER);
        for row in &self.rows {
            let p = &row.pair;
            out.push_str(&format!(
                "{:.9e},{:.12e},{:.12e},{:.12e},{:.12e},{:.3e},{},{:.9e},{:.9e}\n",
                p.gamma,
                p.lambda(),
                p.norm_z,
                p.norm_z_tilde,
                p.ratio(),
                p.frequency.residual,
                row.residual.map_or(String::from("nan"), |r| format!("{r:.6e}")),
                p.frequency.denominators.0,
                p.frequency.denominators.1
            ));
        }
        out
    }
}

/// `n` points from `10^a` to `10^b`, evenly spaced in the exponent.
pub fn logspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![10f64.powf(a)],
        _ => (0..n)
            .map(|k| 10f64.powf(a + (b - a) * k as f64 / (n - 1) as f64))
            .collect(),
    }
}

/// Probe pairs over increasing `gammas`; `grids` adds the discrete residual
/// on a system discretized with that many history nodes.
pub fn resolvent_scan(
    params: &AbstractParams,
    gammas: &[f64],
    grids: Option<(usize, GridPolicy)>,
) -> Result<ScanReport> {
    if gammas.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::domain("gammas must be strictly increasing"));
    }
    let system = grids.map(|(n, policy)| params.system(n, policy)).transpose()?;
    let results: Vec<(f64, Result<ScanRow>)> = gammas
        .par_iter()
        .map(|&g| {
            let row = build_probe_pair(g, params).and_then(|pair| {
                let residual = system.as_ref().map(|s| residual_check(&pair, params, s)).transpose()?;
                Ok(ScanRow { pair, residual })
            });
            (g, row)
        })
        .collect();
    let mut rows = Vec::new();
    let mut skipped = Vec::new();
    for (g, r) in results {
        match r {
            Ok(row) => rows.push(row),
            Err(Error::DegenerateMode { .. }) => skipped.push(g),
            Err(e) => return Err(e),
        }
    }
    let gs: Vec<f64> = rows.iter().map(|r| r.pair.gamma).collect();
    let norms: Vec<f64> = rows.iter().map(|r| r.pair.norm_z).collect();
    let norm_slope = SlopeFit::fit(&gs, &norms, 1.0 - params.mu.exponent - params.alpha / 2.0)?;
    let gamma_lambda_slope = match params.beta {
        Some(b) => {
            let gl: Vec<f64> = rows.iter().map(|r| (r.pair.gamma * r.pair.cap_lambda).norm()).collect();
            Some(SlopeFit::fit(
                &gs,
                &gl,
                b.exponent - params.mu.exponent + params.sigma - params.alpha / 2.0,
            )?)
        }
        None => None,
    };
    let ratio_decreasing = rows.windows(2).all(|w| w[1].pair.ratio() < w[0].pair.ratio());
    Ok(ScanReport {
        params: *params,
        admissibility: params.admissibility(),
        rows,
        skipped,
        norm_slope,
        gamma_lambda_slope,
        ratio_decreasing,
    })
}
