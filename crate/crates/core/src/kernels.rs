//! Memory kernels and their rescaled families.
//!
//! Every kernel handled here has the form `κ · s^(-ω) · e^(-δ s)`:
//!
//! * [`KernelFamily::Exponential`] has `ω = 0`,
//! * [`KernelFamily::PowerExponential`] is weakly singular at the origin
//!   with `0 ≤ ω < 1`,
//! * [`KernelFamily::ConcaveAffineExp`] is the thermal relaxation kernel
//!   `ν_τ(s) = ψ(τ) ω_a² e^(-ω_a s)`, i.e. minus the second derivative of
//!   `a_τ(s) = φ(τ) + ψ(τ)(1 - e^(-ω_a s))`.
//!
//! Because of the common form, moments and Laplace transforms have closed
//! forms in terms of the Gamma function. The quadrature routes
//! ([`KernelSpec::moment_by_quadrature`],
//! [`KernelSpec::laplace_transform_by_quadrature`]) exist so the closed
//! forms can be checked independently.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::{gamma, gamma_ur};

use crate::error::{Error, Result};
use crate::quadrature::{self, Tolerance};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelFamily {
    Exponential,
    PowerExponential,
    ConcaveAffineExp,
}

/// A member of a kernel family, `s ↦ κ s^(-ω) e^(-δ s)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub family: KernelFamily,
    pub amplitude: f64,
    pub exponent: f64,
    pub decay: f64,
    /// The relaxation parameter (ε, σ or τ) this member was built for; `1`
    /// for an unscaled base kernel.
    pub relaxation: f64,
}

/// Unscaled kernel parameters `(κ, ω, δ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaseKernel {
    pub amplitude: f64,
    #[serde(default)]
    pub exponent: f64,
    pub decay: f64,
}

impl BaseKernel {
    /// `e^(-s)`: unit mass, unit first moment, `δ = 1`.
    pub const UNIT_EXPONENTIAL: BaseKernel = BaseKernel {
        amplitude: 1.0,
        exponent: 0.0,
        decay: 1.0,
    };

    pub fn power_exponential(amplitude: f64, exponent: f64, decay: f64) -> Self {
        BaseKernel {
            amplitude,
            exponent,
            decay,
        }
    }
}

/// `c · τ^p`, continuous on `[0, 1]` and vanishing at zero for `p > 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalarFn {
    pub coefficient: f64,
    pub power: f64,
}

impl ScalarFn {
    pub const IDENTITY: ScalarFn = ScalarFn {
        coefficient: 1.0,
        power: 1.0,
    };

    pub fn eval(&self, tau: f64) -> f64 {
        if tau == 0.0 {
            0.0
        } else {
            self.coefficient * tau.powf(self.power)
        }
    }
}

/// The scalar functions `φ`, `ψ` and the rate `ω_a` of the model thermal
/// relaxation kernel `a_τ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalarModel {
    pub phi: ScalarFn,
    pub psi: ScalarFn,
    pub omega_a: f64,
}

impl Default for ScalarModel {
    fn default() -> Self {
        ScalarModel {
            phi: ScalarFn::IDENTITY,
            psi: ScalarFn::IDENTITY,
            omega_a: 1.0,
        }
    }
}

impl ScalarModel {
    pub fn validate(&self) -> Result<()> {
        for (name, f) in [("phi", &self.phi), ("psi", &self.psi)] {
            if !(f.coefficient >= 0.0 && f.power > 0.0) {
                return Err(Error::domain(format!(
                    "{name} must be nonnegative and vanish at zero (c >= 0, p > 0)"
                )));
            }
        }
        if !(self.omega_a > 0.0) {
            return Err(Error::domain("omega_a must be positive"));
        }
        Ok(())
    }

    /// `a_τ(s) = φ(τ) + ψ(τ)(1 - e^(-ω_a s))`.
    pub fn relaxation_function(&self, tau: f64, s: f64) -> f64 {
        self.phi.eval(tau) + self.psi.eval(tau) * (1.0 - (-self.omega_a * s).exp())
    }

    /// `ν_τ = -a_τ''`, or `None` when it vanishes identically (`ψ(τ) = 0`).
    pub fn relaxation_kernel(&self, tau: f64) -> Result<Option<KernelSpec>> {
        self.validate()?;
        check_relaxation(tau, true)?;
        let psi = self.psi.eval(tau);
        if psi == 0.0 {
            return Ok(None);
        }
        Ok(Some(KernelSpec {
            family: KernelFamily::ConcaveAffineExp,
            amplitude: psi * self.omega_a * self.omega_a,
            exponent: 0.0,
            decay: self.omega_a,
            relaxation: tau,
        }))
    }
}

/// Family-specific construction input for [`build_kernel_family`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BaseParams {
    Memory(BaseKernel),
    Thermal(ScalarModel),
}

fn check_relaxation(value: f64, allow_zero: bool) -> Result<()> {
    let ok = if allow_zero {
        (0.0..=1.0).contains(&value)
    } else {
        value > 0.0 && value <= 1.0
    };
    if ok {
        Ok(())
    } else {
        Err(Error::domain(format!(
            "relaxation parameter {value} outside {}",
            if allow_zero { "[0, 1]" } else { "(0, 1]" }
        )))
    }
}

/// Builds the family member for relaxation parameter `relaxation ∈ (0, 1]`.
///
/// Memory families are rescaled as `ε⁻² μ(s/ε)`, which keeps the first
/// moment fixed and multiplies the mass by `1/ε`. The thermal family is
/// `ν_τ` from the scalar model.
pub fn build_kernel_family(
    family: KernelFamily,
    base: BaseParams,
    relaxation: f64,
) -> Result<KernelSpec> {
    check_relaxation(relaxation, false)?;
    match (family, base) {
        (KernelFamily::ConcaveAffineExp, BaseParams::Thermal(model)) => model
            .relaxation_kernel(relaxation)?
            .ok_or_else(|| Error::domain("psi vanishes at this tau; kernel is identically zero")),
        (KernelFamily::ConcaveAffineExp, BaseParams::Memory(_)) => Err(Error::domain(
            "concave_affine_exp kernels are built from a scalar model",
        )),
        (_, BaseParams::Thermal(_)) => Err(Error::domain(
            "memory kernel families need (amplitude, exponent, decay) parameters",
        )),
        (family, BaseParams::Memory(b)) => {
            KernelSpec::base(family, b.amplitude, b.exponent, b.decay)?.rescaled(relaxation)
        }
    }
}

impl KernelSpec {
    pub fn base(family: KernelFamily, amplitude: f64, exponent: f64, decay: f64) -> Result<Self> {
        if family == KernelFamily::Exponential && exponent != 0.0 {
            return Err(Error::domain("exponential family has no singular exponent"));
        }
        if !(0.0..1.0).contains(&exponent) {
            return Err(Error::NonIntegrable(format!(
                "s^(-{exponent}) is not integrable at the origin (need 0 <= omega < 1)"
            )));
        }
        if !(amplitude > 0.0 && decay > 0.0 && amplitude.is_finite() && decay.is_finite()) {
            return Err(Error::domain("amplitude and decay must be positive and finite"));
        }
        Ok(KernelSpec {
            family,
            amplitude,
            exponent,
            decay,
            relaxation: 1.0,
        })
    }

    pub fn unit_exponential() -> Self {
        KernelSpec::base(KernelFamily::Exponential, 1.0, 0.0, 1.0).unwrap()
    }

    /// `ε⁻² k(s/ε)` applied to this kernel.
    pub fn rescaled(&self, eps: f64) -> Result<Self> {
        check_relaxation(eps, false)?;
        Ok(KernelSpec {
            amplitude: self.amplitude * eps.powf(self.exponent - 2.0),
            decay: self.decay / eps,
            relaxation: eps,
            ..*self
        })
    }

    pub fn value(&self, s: f64) -> f64 {
        let e = (-self.decay * s).exp();
        if self.exponent == 0.0 {
            self.amplitude * e
        } else {
            self.amplitude * s.powf(-self.exponent) * e
        }
    }

    pub fn derivative(&self, s: f64) -> f64 {
        -self.value(s) * (self.exponent / s + self.decay)
    }

    /// Length scale `1/δ` on which the kernel mass is concentrated.
    pub fn scale(&self) -> f64 {
        1.0 / self.decay
    }

    /// `∫₀^∞ s^order · k(s) ds` in closed form.
    pub fn moment(&self, order: u32) -> Result<f64> {
        if order > 2 {
            return Err(Error::domain("moment order must be 0, 1 or 2"));
        }
        let a = order as f64 + 1.0 - self.exponent;
        if a <= 0.0 {
            return Err(Error::NonIntegrable(format!("moment of order {order}")));
        }
        let gamma_a = if self.exponent == 0.0 {
            [1.0, 1.0, 2.0][order as usize]
        } else {
            gamma(a)
        };
        Ok(self.amplitude * gamma_a / self.decay.powf(a))
    }

    /// Same moment by adaptive quadrature: substitution `t = s^(1-ω)` on the
    /// singular panel `[0, 1/δ]`, dyadic panels beyond.
    pub fn moment_by_quadrature(&self, order: u32) -> Result<f64> {
        if order > 2 {
            return Err(Error::domain("moment order must be 0, 1 or 2"));
        }
        let k = order as i32;
        self.integrate_against(|s| s.powi(k), 0.0)
    }

    /// Fraction of the total mass lying beyond `s`.
    pub fn tail_fraction(&self, s: f64) -> f64 {
        if s <= 0.0 {
            return 1.0;
        }
        if self.exponent == 0.0 {
            (-self.decay * s).exp()
        } else {
            gamma_ur(1.0 - self.exponent, self.decay * s)
        }
    }

    /// Smallest `S` (to bisection precision) whose tail fraction is below `tol`.
    pub fn tail_cutoff(&self, tol: f64) -> f64 {
        if self.exponent == 0.0 {
            return -tol.ln() / self.decay;
        }
        let (mut lo, mut hi) = (0.0, self.scale());
        while self.tail_fraction(hi) > tol {
            hi *= 2.0;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.tail_fraction(mid) > tol {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 1e-14 * hi {
                break;
            }
        }
        hi
    }

    /// `∫₀^∞ k(s) e^(-iλs) ds = κ Γ(1-ω) (δ + iλ)^(ω-1)`, principal branch.
    pub fn laplace_transform(&self, lambda: f64) -> Complex64 {
        let z = Complex64::new(self.decay, lambda);
        if self.exponent == 0.0 {
            return self.amplitude / z;
        }
        self.amplitude * gamma(1.0 - self.exponent) * z.powf(self.exponent - 1.0)
    }

    pub fn laplace_transform_by_quadrature(&self, lambda: f64) -> Result<Complex64> {
        let re = self.integrate_against(|s| (lambda * s).cos(), lambda)?;
        let im = self.integrate_against(|s| -(lambda * s).sin(), lambda)?;
        Ok(Complex64::new(re, im))
    }

    /// `∫₀^∞ k(s) g(s) ds` for a bounded smooth `g` oscillating at frequency
    /// at most `lambda`.
    fn integrate_against<G: Fn(f64) -> f64>(&self, g: G, lambda: f64) -> Result<f64> {
        let scale = self.scale();
        let mut split = scale;
        if lambda > 0.0 {
            split = split.min(1.0 / lambda);
        }
        let tol = Tolerance {
            abs: 1e-13 * self.moment(0)?,
            rel: 1e-12,
            max_panels: 2_000_000,
        };
        // singular panel, t = s^(1-ω), ds = s^ω/(1-ω) dt
        let q = 1.0 - self.exponent;
        let head = quadrature::integrate(
            |t: f64| {
                let s = t.powf(1.0 / q);
                self.amplitude * (-self.decay * s).exp() * g(s) / q
            },
            &[0.0, split.powf(q)],
            tol,
        )?;
        let upper = 80.0 * scale;
        let step = if lambda > 0.0 {
            (std::f64::consts::PI / lambda).min(scale)
        } else {
            scale
        };
        let mut breaks = vec![split];
        let mut x = split;
        while x < upper {
            x = (x + step).min(upper);
            breaks.push(x);
        }
        let tail = quadrature::integrate(|s| self.value(s) * g(s), &breaks, tol)?;
        Ok(head + tail)
    }

    /// Checks the standing kernel hypotheses on a sample grid against the
    /// decay constant `delta`.
    pub fn validate_assumptions(&self, delta: f64, grid: &[f64]) -> Result<ValidationReport> {
        validate_assumptions(self, delta, grid)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionCheck {
    pub condition: &'static str,
    /// Worst violation margin; the condition holds iff `margin <= 0`.
    pub margin: f64,
}

impl ConditionCheck {
    pub fn pass(&self) -> bool {
        self.margin <= 0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub checks: Vec<ConditionCheck>,
    pub second_moment: f64,
}

impl ValidationReport {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(ConditionCheck::pass)
    }

    pub fn get(&self, condition: &str) -> Option<&ConditionCheck> {
        self.checks.iter().find(|c| c.condition == condition)
    }

    /// `condition,margin,pass` rows with a header line.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("condition,margin,pass\n");
        for c in &self.checks {
            out.push_str(&format!("{},{:e},{}\n", c.condition, c.margin, c.pass()));
        }
        out
    }
}

pub fn validate_assumptions(
    kernel: &KernelSpec,
    delta: f64,
    grid: &[f64],
) -> Result<ValidationReport> {
    if grid.is_empty() {
        return Err(Error::domain("empty sample grid"));
    }
    if grid.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
        return Err(Error::domain("sample grid must be strictly positive and finite"));
    }
    if !(delta > 0.0) {
        return Err(Error::domain("delta must be positive"));
    }
    let worst = |f: &dyn Fn(f64) -> f64| grid.iter().map(|&s| f(s)).fold(f64::NEG_INFINITY, f64::max);
    let nonneg = worst(&|s| -kernel.value(s));
    let monotone = worst(&|s| kernel.derivative(s));
    let dominated = worst(&|s| kernel.derivative(s) + delta * kernel.value(s));
    let second_moment = kernel.moment(2)?;
    let checks = vec![
        ConditionCheck {
            condition: "nonnegative",
            margin: nonneg,
        },
        ConditionCheck {
            condition: "nonincreasing",
            margin: monotone,
        },
        ConditionCheck {
            condition: "exponential_domination",
            margin: dominated,
        },
        ConditionCheck {
            condition: "integrable",
            margin: kernel.exponent - 1.0,
        },
        ConditionCheck {
            condition: "second_moment_finite",
            margin: if second_moment.is_finite() && second_moment > 0.0 {
                -second_moment
            } else {
                f64::INFINITY
            },
        },
    ];
    Ok(ValidationReport {
        checks,
        second_moment,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn log_grid() -> Vec<f64> {
        (0..200).map(|i| 1e-4 * 1.08f64.powi(i)).collect()
    }

    #[test]
    fn rescaled_exponential_matches_substitution() {
        let k = KernelSpec::unit_exponential().rescaled(0.5).unwrap();
        for s in [0.0, 0.3, 2.0] {
            assert_relative_eq!(k.value(s), 4.0 * (-2.0 * s).exp(), max_relative = 1e-15);
        }
        assert_relative_eq!(k.moment(0).unwrap(), 2.0, max_relative = 1e-14);
        let id = KernelSpec::unit_exponential().rescaled(1.0).unwrap();
        assert_eq!(id.amplitude, 1.0);
        assert_eq!(id.decay, 1.0);
    }

    #[test]
    fn normalizations_hold() {
        let k = KernelSpec::unit_exponential().rescaled(0.25).unwrap();
        assert_relative_eq!(k.moment(1).unwrap(), 1.0, max_relative = 1e-12);
        let k = KernelSpec::unit_exponential().rescaled(0.1).unwrap();
        assert_relative_eq!(k.moment(0).unwrap(), 10.0, max_relative = 1e-12);
    }

    #[test]
    fn bad_relaxation_and_exponent_are_rejected() {
        let base = BaseParams::Memory(BaseKernel::UNIT_EXPONENTIAL);
        assert!(matches!(
            build_kernel_family(KernelFamily::Exponential, base, 0.0),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            build_kernel_family(KernelFamily::Exponential, base, 1.5),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            KernelSpec::base(KernelFamily::PowerExponential, 1.0, 1.0, 1.0),
            Err(Error::NonIntegrable(_))
        ));
    }

    #[test]
    fn validation_of_unit_exponential() {
        let k = KernelSpec::unit_exponential();
        let report = validate_assumptions(&k, 1.0, &log_grid()).unwrap();
        assert!(report.all_pass());
        assert_eq!(report.get("exponential_domination").unwrap().margin, 0.0);

        let report = validate_assumptions(&k, 2.0, &log_grid()).unwrap();
        assert!(!report.get("exponential_domination").unwrap().pass());
        assert!(report.to_csv().starts_with("condition,margin,pass\n"));

        assert!(validate_assumptions(&k, 1.0, &[]).is_err());
    }

    #[test]
    fn singular_kernel_validates_with_gamma_second_moment() {
        let k = KernelSpec::base(KernelFamily::PowerExponential, 1.0, 0.5, 1.0).unwrap();
        let report = validate_assumptions(&k, 1.0, &log_grid()).unwrap();
        assert!(report.all_pass(), "{report:?}");
        let gamma_5_2 = 0.75 * std::f64::consts::PI.sqrt();
        assert_relative_eq!(report.second_moment, gamma_5_2, max_relative = 1e-12);
        assert_relative_eq!(k.moment_by_quadrature(2).unwrap(), gamma_5_2, max_relative = 1e-9);
    }

    #[test]
    fn singular_mass_is_gamma_half() {
        let k = KernelSpec::base(KernelFamily::PowerExponential, 1.0, 0.5, 1.0).unwrap();
        let sqrt_pi = std::f64::consts::PI.sqrt();
        assert_relative_eq!(k.moment(0).unwrap(), sqrt_pi, max_relative = 1e-12);
        assert_relative_eq!(k.moment_by_quadrature(0).unwrap(), sqrt_pi, max_relative = 1e-9);
        assert_relative_eq!(k.laplace_transform(0.0).re, sqrt_pi, max_relative = 1e-12);
    }

    #[test]
    fn unit_exponential_transform_at_zero() {
        let c = KernelSpec::unit_exponential().laplace_transform(0.0);
        assert_relative_eq!(c.re, 1.0);
        assert!(c.im.abs() < 1e-15);
    }

    #[test]
    fn singular_transform_plateaus_like_inverse_sqrt() {
        let k = KernelSpec::base(KernelFamily::PowerExponential, 1.0, 0.5, 1.0).unwrap();
        let sqrt_pi = std::f64::consts::PI.sqrt();
        let plateau: Vec<f64> = [1e2, 1e3, 1e4]
            .iter()
            .map(|&l| k.laplace_transform(l).norm() * l.sqrt())
            .collect();
        for (p, l) in plateau.iter().zip([1e2f64, 1e3, 1e4]) {
            // |δ + iλ|^(-1/2) λ^(1/2) = (1 + 1/λ²)^(-1/4)
            let exact = sqrt_pi * (1.0f64 + 1.0 / (l * l)).powf(-0.25);
            assert_relative_eq!(*p, exact, max_relative = 1e-12);
        }
        assert!((plateau[2] - sqrt_pi).abs() < (plateau[0] - sqrt_pi).abs());
        assert!((plateau[2] / sqrt_pi - 1.0).abs() < 1e-8);
    }

    #[test]
    fn relaxation_kernel_properties() {
        let model = ScalarModel::default();
        assert!(model.relaxation_kernel(0.0).unwrap().is_none());
        let nu = model.relaxation_kernel(0.5).unwrap().unwrap();
        assert_relative_eq!(nu.moment(0).unwrap(), 0.5, max_relative = 1e-14);
        assert_relative_eq!(model.relaxation_function(0.5, 0.0), 0.5);
        // -a'' equals the kernel
        let (tau, s, h) = (0.5, 0.7, 1e-4);
        let second = (model.relaxation_function(tau, s + h) - 2.0 * model.relaxation_function(tau, s)
            + model.relaxation_function(tau, s - h))
            / (h * h);
        assert_relative_eq!(-second, nu.value(s), max_relative = 1e-6);
    }

    #[test]
    fn tail_cutoff_brackets_tolerance() {
        let k = KernelSpec::base(KernelFamily::PowerExponential, 1.0, 0.3, 2.0).unwrap();
        let s = k.tail_cutoff(1e-8);
        assert!(k.tail_fraction(s) <= 1e-8);
        assert!(k.tail_fraction(0.999 * s) > 1e-8);
    }
}
