use std::sync::Arc;

use memoplate::dynamics::{MemorySystem, PlateModel, PlateParams, Schedule};
use memoplate::kernels::ScalarModel;
use memoplate::singular_limit::{compare_trajectories, envelope_constants, envelope_excess, lift, limit_trajectory, project, upsilon, Upsilon};
use memoplate::spectral::{dirichlet_eigenvalues, project_initial_data, Domain, HistoryProfile, InitialPreset, ModalCoefficients, PhaseVector};
use proptest::prelude::*;

fn datum(params: PlateParams, history: Option<HistoryProfile>) -> PhaseVector {
    let model = PlateModel {
        history_nodes: 200,
        ..PlateModel::default()
    };
    let sys = Arc::new(MemorySystem::plate(&model, params).unwrap());
    let modes = dirichlet_eigenvalues(Domain::Interval { length: std::f64::consts::PI }, 4).unwrap();
    let c = ModalCoefficients::from_preset(InitialPreset::SpectralDecay { p: 6.0 }, 4, &sys, history);
    project_initial_data(&c, &modes, sys, 0.0).unwrap()
}

#[test]
fn gap_shrinks_with_the_relaxation_parameters() {
    let scalar = ScalarModel::default();
    let schedule = Schedule::new(0.0625 / 20.0, 2.0, 16).unwrap();
    let mut sups = Vec::new();
    let mut limit = None;
    for x in [0.25, 0.0625] {
        let z = datum(PlateParams::new(x, 0.0, x).unwrap(), None);
        let lim = limit.get_or_insert_with(|| limit_trajectory(&z, schedule).unwrap());
        let run = compare_trajectories(&z, lim, &scalar, 0.0, 0.5, false).unwrap();
        assert_eq!(run.difference[0], 0.0);
        assert!(run.k_r.is_finite() && run.k_r > 0.0);
        sups.push(run.sup_all);
    }
    assert!(sups[1] < sups[0], "{sups:?}");
}

#[test]
fn history_envelopes_hold_with_fitted_constants() {
    let scalar = ScalarModel::default();
    let p = PlateParams::new(0.25, 0.25, 0.25).unwrap();
    let z = datum(p, Some(HistoryProfile { eta: 1.0, xi: 1.0 }));
    let schedule = Schedule::new(p.default_dt(), 2.0, 16).unwrap();
    let lim = limit_trajectory(&z, schedule).unwrap();
    let run = compare_trajectories(&z, &lim, &scalar, 0.0, 0.5, true).unwrap();
    let k = envelope_constants(&run, &scalar);
    assert!(envelope_excess(&run, &scalar, k) <= 1e-12);
    assert!(run.reconstructed.as_ref().is_some_and(|r| r.len() == run.times.len()));
    assert!(compare_trajectories(&z, &lim, &scalar, 0.0, 3.0, false).is_err());
}

#[test]
fn upsilon_decays_from_the_initial_history_norms() {
    let z = datum(PlateParams::new(0.5, 0.5, 0.5).unwrap(), Some(HistoryProfile { eta: 1.0, xi: -1.0 }));
    let u = Upsilon::new(&z, 0.0);
    let h = u.initial;
    assert!((u.at(0.0) - (h.eta_mu + h.eta_nu + h.xi)).abs() < 1e-14);
    let samples: Vec<f64> = (0..50).map(|k| u.at(0.1 * k as f64)).collect();
    assert!(samples.windows(2).all(|w| w[1] < w[0]));
    assert_eq!(u.sup_after(1.0), u.at(1.0));
    assert!(upsilon(-1.0, &z, 0.0).is_err());
}

proptest! {
    #[test]
    fn projection_inverts_lifting(u in -5.0f64..5.0, v in -5.0f64..5.0, t in -5.0f64..5.0) {
        let limit = Arc::new(MemorySystem::limit());
        let c = ModalCoefficients { u: vec![u, -u], v: vec![v, 0.0], theta: vec![t, 1.0], ..Default::default() };
        let modes = dirichlet_eigenvalues(Domain::Interval { length: 2.0 }, 2).unwrap();
        let w = project_initial_data(&c, &modes, limit, 0.0).unwrap();
        let sys = datum(PlateParams::new(0.5, 0.5, 0.5).unwrap(), None).system;
        let lifted = lift(&w, sys);
        prop_assert!(lifted.modes.iter().all(|m| m.eta.0.iter().chain(&m.xi.0).all(|x| *x == 0.0)));
        let back = project(&lifted);
        for (a, b) in back.modes.iter().zip(&w.modes) {
            prop_assert_eq!(a.to_vector(), b.to_vector());
        }
    }
}
