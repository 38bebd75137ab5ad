use approx::assert_relative_eq;
use memoplate::kernels::{build_kernel_family, BaseKernel, BaseParams, KernelFamily, KernelSpec, ScalarModel};
use proptest::prelude::*;

fn singular() -> KernelSpec {
    KernelSpec::base(KernelFamily::PowerExponential, 0.7, 0.3, 2.0).unwrap()
}

#[test]
fn transforms_agree_with_quadrature_across_frequencies() {
    for k in [KernelSpec::unit_exponential(), singular(), singular().rescaled(0.125).unwrap()] {
        for lambda in [0.0, 0.5, 3.0, 40.0, 700.0, 1e4] {
            let exact = k.laplace_transform(lambda);
            let quad = k.laplace_transform_by_quadrature(lambda).unwrap();
            let rel = (exact - quad).norm() / exact.norm();
            assert!(rel < 1e-6, "{k:?} at {lambda}: {rel:e}");
        }
    }
}

#[test]
fn thermal_kernel_mass_is_psi_times_rate() {
    let model = ScalarModel {
        omega_a: 2.5,
        ..ScalarModel::default()
    };
    for tau in [0.1, 0.5, 1.0] {
        let nu = model.relaxation_kernel(tau).unwrap().unwrap();
        assert_relative_eq!(nu.moment(0).unwrap(), model.psi.eval(tau) * 2.5, max_relative = 1e-12);
        let grid: Vec<f64> = (1..200).map(|i| 0.05 * i as f64).collect();
        assert!(grid.windows(2).all(|w| nu.value(w[1]) <= nu.value(w[0])));
    }
    assert!(model.relaxation_kernel(0.0).unwrap().is_none());
}

#[test]
fn family_builder_rescales_memory_kernels() {
    let base = BaseParams::Memory(BaseKernel::power_exponential(0.7, 0.3, 2.0));
    let k = build_kernel_family(KernelFamily::PowerExponential, base, 0.25).unwrap();
    assert_eq!(k, singular().rescaled(0.25).unwrap());
    let thermal = build_kernel_family(KernelFamily::ConcaveAffineExp, BaseParams::Thermal(ScalarModel::default()), 0.5);
    assert_eq!(thermal.unwrap().amplitude, 0.5);
}

proptest! {
    #[test]
    fn rescaling_keeps_first_moment_and_scales_mass(eps in 1e-4f64..1.0, omega in 0.0f64..0.9, delta in 0.1f64..10.0) {
        let family = if omega == 0.0 { KernelFamily::Exponential } else { KernelFamily::PowerExponential };
        let k = KernelSpec::base(family, 1.3, omega, delta).unwrap();
        let r = k.rescaled(eps).unwrap();
        let m1 = k.moment(1).unwrap();
        prop_assert!(((r.moment(1).unwrap() - m1) / m1).abs() < 1e-8);
        let m0 = k.moment(0).unwrap();
        prop_assert!((r.moment(0).unwrap() * eps / m0 - 1.0).abs() < 1e-8);
    }

    #[test]
    fn rescaled_values_follow_the_substitution(eps in 0.01f64..1.0, s in 0.01f64..5.0) {
        let k = singular();
        let r = k.rescaled(eps).unwrap();
        let want = k.value(s / eps) / (eps * eps);
        prop_assert!((r.value(s) - want).abs() <= 1e-12 * want.abs().max(1e-300));
    }

    #[test]
    fn tail_fraction_is_monotone(a in 0.0f64..20.0, b in 0.0f64..20.0) {
        let k = singular();
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        prop_assert!(k.tail_fraction(hi) <= k.tail_fraction(lo));
    }
}
