use approx::assert_relative_eq;
use memoplate::history::GridPolicy;
use memoplate::kernels::BaseKernel;
use memoplate::probe::{build_probe_pair, logspace, residual_check, resolvent_scan, z_tilde_norm_sq_by_quadrature, AbstractParams};
use statrs::function::gamma::gamma;

fn unit_mass(exponent: f64, decay: f64) -> BaseKernel {
    BaseKernel::power_exponential(decay.powf(1.0 - exponent) / gamma(1.0 - exponent), exponent, decay)
}

fn a2(decay: f64) -> AbstractParams {
    AbstractParams {
        alpha: 1.0,
        sigma: 1.0,
        mu: unit_mass(0.25, decay),
        beta: None,
    }
}

fn a3() -> AbstractParams {
    AbstractParams {
        alpha: 1.0,
        sigma: 0.75,
        mu: unit_mass(0.3, 20.0),
        beta: Some(unit_mass(0.05, 20.0)),
    }
}

#[test]
fn admissibility_of_the_two_regimes() {
    assert!(a2(1.0).admissibility().zero_strain_memory);
    let adm = a3().admissibility();
    assert!(adm.with_strain_memory && !adm.zero_strain_memory, "{adm:?}");
    let bad = AbstractParams {
        beta: Some(unit_mass(0.2, 20.0)),
        ..a3()
    };
    assert!(!bad.admissibility().with_strain_memory);
}

#[test]
fn target_norm_matches_quadrature() {
    for params in [a2(1.0), a3()] {
        for g in [10.0, 1e3] {
            let pair = build_probe_pair(g, &params).unwrap();
            let quad = z_tilde_norm_sq_by_quadrature(&pair, &params).unwrap();
            assert_relative_eq!(pair.norm_z_tilde.powi(2), quad, max_relative = 1e-8);
        }
    }
    let pair = build_probe_pair(100.0, &a2(1.0)).unwrap();
    assert_eq!(pair.cap_lambda.norm(), 0.0);
    assert_relative_eq!(pair.norm_z_tilde, a2(1.0).k0().unwrap().sqrt(), max_relative = 1e-12);
}

#[test]
fn discrete_residual_halves_under_refinement() {
    // unit mass and a decay well below λ(10) ≈ 10 keep the history profile resolved
    let params = a2(10.0);
    let pair = build_probe_pair(10.0, &params).unwrap();
    let res: Vec<f64> = [400, 800]
        .iter()
        .map(|&m| residual_check(&pair, &params, &params.system(m, GridPolicy::default()).unwrap()).unwrap())
        .collect();
    assert!(res[0] < 0.05, "{res:?}");
    let ratio = res[0] / res[1];
    assert!((1.4..=2.6).contains(&ratio), "{res:?}");
}

#[test]
fn residual_of_the_strain_memory_pair() {
    let params = a3();
    let pair = build_probe_pair(10.0, &params).unwrap();
    let r = residual_check(&pair, &params, &params.system(400, GridPolicy::default()).unwrap()).unwrap();
    assert!(r < 0.05, "{r}");
}

#[test]
fn scan_rows_are_sorted_and_complete() {
    let report = resolvent_scan(&a2(1.0), &logspace(1.0, 3.0, 9), None).unwrap();
    assert_eq!(report.rows.len(), 9);
    assert!(report.rows.windows(2).all(|w| w[0].pair.gamma < w[1].pair.gamma));
    assert!(report.rows.iter().all(|r| r.residual.is_none()));
    assert_eq!(report.to_csv().lines().count(), 10);
}
