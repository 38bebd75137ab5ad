use std::sync::Arc;

use approx::assert_relative_eq;
use memoplate::dynamics::{
    assemble_mode_operator, evolve, evolve_limit, spectral_abscissa, MemorySystem, PlateModel, PlateParams, Schedule,
};
use memoplate::spectral::{project_initial_data, HistoryProfile, InitialPreset, ModalCoefficients, ModeSet, PhaseVector};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn system(sigma: f64, tau: f64, epsilon: f64, nodes: usize) -> Arc<MemorySystem> {
    let model = PlateModel {
        history_nodes: nodes,
        ..PlateModel::default()
    };
    Arc::new(MemorySystem::plate(&model, PlateParams::new(sigma, tau, epsilon).unwrap()).unwrap())
}

fn datum(system: &Arc<MemorySystem>, gammas: &[f64], preset: InitialPreset) -> PhaseVector {
    let c = ModalCoefficients::from_preset(preset, gammas.len(), system, Some(HistoryProfile { eta: 0.7, xi: -0.4 }));
    project_initial_data(&c, &ModeSet::from_gammas(gammas.to_vec()).unwrap(), system.clone(), 0.0).unwrap()
}

fn max_gap(a: &PhaseVector, b: &PhaseVector) -> f64 {
    a.modes
        .iter()
        .zip(&b.modes)
        .flat_map(|(x, y)| x.to_vector().into_iter().zip(y.to_vector()).map(|(p, q)| (p - q).abs()))
        .fold(0.0, f64::max)
}

#[test]
fn evolution_is_linear() {
    let sys = system(0.5, 0.5, 0.5, 48);
    let gammas = [1.0, 4.0, 9.0];
    let a = datum(&sys, &gammas, InitialPreset::SpectralDecay { p: 1.0 });
    let b = datum(&sys, &gammas, InitialPreset::SingleMode { mode: 1, amplitude: -2.0 });
    let sch = Schedule::new(1e-3, 0.5, 50).unwrap();
    let mixed = evolve(&a.combine(0.3, &b, -1.7).unwrap(), sch).unwrap().final_state;
    let ea = evolve(&a, sch).unwrap().final_state;
    let eb = evolve(&b, sch).unwrap().final_state;
    assert!(max_gap(&mixed, &ea.combine(0.3, &eb, -1.7).unwrap()) < 1e-12);
}

#[test]
fn modes_evolve_independently() {
    let sys = system(0.25, 1.0, 0.5, 48);
    let gammas = [1.0, 4.0, 9.0];
    let z = datum(&sys, &gammas, InitialPreset::SpectralDecay { p: 1.0 });
    let sch = Schedule::new(1e-3, 0.3, 30).unwrap();
    let all = evolve(&z, sch).unwrap();
    for (n, mode) in z.modes.iter().enumerate() {
        let alone = PhaseVector {
            modes: vec![mode.clone()],
            ..z.clone()
        };
        let one = evolve(&alone, sch).unwrap();
        assert_eq!(one.samples[0], all.samples[n]);
    }
}

#[test]
fn energy_never_increases_and_decays_per_mode() {
    let sys = system(0.5, 0.25, 0.5, 64);
    let gammas = [1.0, 4.0, 9.0, 16.0];
    let z = datum(&sys, &gammas, InitialPreset::SpectralDecay { p: 0.5 });
    let tr = evolve(&z, Schedule::new(1e-3, 3.0, 100).unwrap()).unwrap();
    assert!(tr.max_step_increase() <= 1e-12);
    for (g, s) in gammas.iter().zip(&tr.samples) {
        let first = s[0].energy(&sys, *g, 0.0);
        let last = s.last().unwrap().energy(&sys, *g, 0.0);
        assert!(last < 0.5 * first, "mode {g}: {first} -> {last}");
    }
}

#[test]
fn limit_trajectory_matches_matrix_exponential() {
    let sys = Arc::new(MemorySystem::limit());
    let c = ModalCoefficients {
        u: vec![1.0],
        v: vec![-0.5],
        theta: vec![0.3],
        ..Default::default()
    };
    let z = project_initial_data(&c, &ModeSet::from_gammas(vec![1.0]).unwrap(), sys, 0.0).unwrap();
    let tr = evolve_limit(&z, Schedule::new(1e-3, 5.0, 10).unwrap()).unwrap();
    let l = DMatrix::from_row_slice(3, 3, &[0.0, 1.0, 0.0, -1.0, -1.0, 1.0, 0.0, -1.0, -1.0]);
    for (k, t) in tr.times.iter().enumerate() {
        let e = (&l * *t).exp() * DVector::from_vec(vec![1.0, -0.5, 0.3]);
        let s = &tr.samples[0][k];
        for (a, b) in [(s.u, e[0]), (s.v, e[1]), (s.theta, e[2])] {
            assert!((a - b).abs() < 1e-6, "t = {t}: {a} vs {b}");
        }
    }
    assert!(evolve_limit(&datum(&system(0.5, 0.0, 0.5, 16), &[1.0], InitialPreset::SpectralDecay { p: 1.0 }), Schedule::new(1e-3, 0.01, 1).unwrap()).is_err());
}

#[test]
fn limit_block_abscissa() {
    // real root of λ³ + 2λ² + 3λ + 1 for γ = 1
    let a = spectral_abscissa(&MemorySystem::limit(), 1.0).unwrap();
    assert_relative_eq!(a, -0.430159709001948, max_relative = 1e-10);
    assert_relative_eq!(a.powi(3) + 2.0 * a * a + 3.0 * a + 1.0, 0.0, epsilon = 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn generator_is_dissipative(seed in proptest::collection::vec(-1.0f64..1.0, 3 + 2 * 24), gamma in 0.5f64..50.0, which in 0usize..3) {
        let sys = match which {
            0 => system(0.5, 0.5, 0.5, 24),
            1 => system(1.0, 0.0, 0.125, 24),
            _ => system(0.25, 1.0, 0.0, 24),
        };
        let op = assemble_mode_operator(&sys, gamma);
        let z: Vec<f64> = seed.iter().take(op.dim()).copied().collect();
        prop_assert!(op.quadratic_form(&z) <= 1e-12 * op.norm_sq(&z));
    }
}
