//! Dirichlet spectra of separable domains and modal phase vectors.

use std::f64::consts::PI;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::dynamics::{MemorySystem, ModalState};
use crate::error::{Error, Result};
use crate::history::HistorySlice;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Domain {
    Interval { length: f64 },
    Rectangle { lx: f64, ly: f64 },
}

/// The first `N` eigenvalues of `A = -Δ` with their multi-indices.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModeSet {
    pub domain: Domain,
    pub gammas: Vec<f64>,
    /// `(j, k)`; `k = 0` on an interval.
    pub indices: Vec<(usize, usize)>,
}

pub fn dirichlet_eigenvalues(domain: Domain, n: usize) -> Result<ModeSet> {
    if n == 0 {
        return Err(Error::domain("mode count must be at least 1"));
    }
    let (gammas, indices) = match domain {
        Domain::Interval { length } => {
            check_side(length)?;
            (1..=n)
                .map(|j| ((j as f64 * PI / length).powi(2), (j, 0)))
                .unzip()
        }
        Domain::Rectangle { lx, ly } => {
            check_side(lx)?;
            check_side(ly)?;
            // the first n eigenvalues all have j, k ≤ n
            let mut all: Vec<(f64, usize, usize)> = (1..=n)
                .flat_map(|j| {
                    (1..=n).map(move |k| {
                        ((j as f64 * PI / lx).powi(2) + (k as f64 * PI / ly).powi(2), j, k)
                    })
                })
                .collect();
            all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
            all.truncate(n);
            all.into_iter().map(|(g, j, k)| (g, (j, k))).unzip()
        }
    };
    Ok(ModeSet {
        domain,
        gammas,
        indices,
    })
}

fn check_side(l: f64) -> Result<()> {
    if l > 0.0 && l.is_finite() {
        Ok(())
    } else {
        Err(Error::domain(format!("side length must be positive, got {l}")))
    }
}

impl ModeSet {
    pub fn len(&self) -> usize {
        self.gammas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gammas.is_empty()
    }

    /// Synthetic eigenvalue list, for scans not tied to a domain.
    pub fn from_gammas(gammas: Vec<f64>) -> Result<Self> {
        if gammas.is_empty() || gammas.iter().any(|g| !(*g > 0.0 && g.is_finite())) {
            return Err(Error::domain("eigenvalues must be positive and finite"));
        }
        let indices = (1..=gammas.len()).map(|j| (j, 0)).collect();
        Ok(ModeSet {
            domain: Domain::Interval { length: PI },
            gammas,
            indices,
        })
    }

    /// L²-normalized eigenfunction of mode `n` at `(x, y)`; `y` is ignored on
    /// an interval. For plotting only.
    pub fn mode_shape(&self, n: usize, x: f64, y: f64) -> f64 {
        let (j, k) = self.indices[n];
        match self.domain {
            Domain::Interval { length } => (2.0 / length).sqrt() * (j as f64 * PI * x / length).sin(),
            Domain::Rectangle { lx, ly } => {
                2.0 / (lx * ly).sqrt()
                    * (j as f64 * PI * x / lx).sin()
                    * (k as f64 * PI * y / ly).sin()
            }
        }
    }

    /// `Σ c_n w_n(x, y)`.
    pub fn reconstruct(&self, coefficients: &[f64], x: f64, y: f64) -> f64 {
        coefficients
            .iter()
            .enumerate()
            .map(|(n, c)| c * self.mode_shape(n, x, y))
            .sum()
    }
}

/// A full state: one [`ModalState`] per mode, measured in the scale of
/// order `m`.
#[derive(Debug, Clone)]
pub struct PhaseVector {
    pub system: Arc<MemorySystem>,
    pub modes: Vec<ModalState>,
    pub order: f64,
}

impl PhaseVector {
    pub fn zeros(system: Arc<MemorySystem>, gammas: &[f64], order: f64) -> Self {
        let modes = gammas.iter().map(|&g| ModalState::zeros(&system, g)).collect();
        PhaseVector {
            system,
            modes,
            order,
        }
    }

    pub fn norm_sq(&self) -> f64 {
        self.modes
            .iter()
            .map(|s| self.system.modal_norm_sq(s, self.order))
            .sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn gammas(&self) -> Vec<f64> {
        self.modes.iter().map(|m| m.gamma).collect()
    }

    /// `a·self + b·other`; both must live on the same system and modes.
    pub fn combine(&self, a: f64, other: &PhaseVector, b: f64) -> Result<PhaseVector> {
        if self.modes.len() != other.modes.len() {
            return Err(Error::Shape("phase vectors have different mode counts".into()));
        }
        let modes = self
            .modes
            .iter()
            .zip(&other.modes)
            .map(|(x, y)| x.combine(a, y, b))
            .collect::<Result<_>>()?;
        Ok(PhaseVector {
            system: self.system.clone(),
            modes,
            order: self.order,
        })
    }
}

/// Named initial data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum InitialPreset {
    /// `u = v = ϑ = amplitude` on mode `mode` (0-based), zero elsewhere.
    SingleMode { mode: usize, amplitude: f64 },
    /// `u_n = v_n = ϑ_n = n^(-p)`.
    SpectralDecay { p: f64 },
}

/// History profile `η₀(s) = a·(1 - e^(-s))`, scaled per mode like the
/// other coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistoryProfile {
    #[serde(default)]
    pub eta: f64,
    #[serde(default)]
    pub xi: f64,
}

/// Explicit modal data. History samples are per mode, on the system grids.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ModalCoefficients {
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub theta: Vec<f64>,
    pub eta: Option<Vec<HistorySlice>>,
    pub xi: Option<Vec<HistorySlice>>,
}

impl ModalCoefficients {
    pub fn from_preset(
        preset: InitialPreset,
        n: usize,
        system: &MemorySystem,
        history: Option<HistoryProfile>,
    ) -> Self {
        let scale: Vec<f64> = (0..n)
            .map(|i| match preset {
                InitialPreset::SingleMode { mode, amplitude } => {
                    if i == mode {
                        amplitude
                    } else {
                        0.0
                    }
                }
                InitialPreset::SpectralDecay { p } => ((i + 1) as f64).powf(-p),
            })
            .collect();
        let profile = |grid: Option<&crate::history::HistoryGrid>, a: f64| {
            grid.filter(|_| a != 0.0).map(|g| {
                scale
                    .iter()
                    .map(|c| HistorySlice::from_fn(g, |s| c * a * (1.0 - (-s).exp())))
                    .collect()
            })
        };
        let h = history.unwrap_or(HistoryProfile { eta: 0.0, xi: 0.0 });
        ModalCoefficients {
            u: scale.clone(),
            v: scale.clone(),
            theta: scale.clone(),
            eta: profile(system.eta_grid(), h.eta),
            xi: profile(system.beta.as_ref(), h.xi),
        }
    }
}

pub fn project_initial_data(
    coefficients: &ModalCoefficients,
    modes: &ModeSet,
    system: Arc<MemorySystem>,
    order: f64,
) -> Result<PhaseVector> {
    let n = modes.len();
    for (name, len) in [
        ("u", coefficients.u.len()),
        ("v", coefficients.v.len()),
        ("theta", coefficients.theta.len()),
    ] {
        if len != n {
            return Err(Error::Shape(format!("{name} has {len} coefficients for {n} modes")));
        }
    }
    let histories = |slices: &Option<Vec<HistorySlice>>, width: usize, name: &str| -> Result<Vec<HistorySlice>> {
        match slices {
            None => Ok(vec![HistorySlice::zeros(width); n]),
            Some(_) if width == 0 => Err(Error::Shape(format!(
                "{name} history given but the system carries none"
            ))),
            Some(s) if s.len() != n => Err(Error::Shape(format!(
                "{name} history has {} slices for {n} modes",
                s.len()
            ))),
            Some(s) => {
                if let Some(bad) = s.iter().find(|x| x.len() != width) {
                    return Err(Error::Shape(format!(
                        "{name} slice has {} entries, grid has {width} nodes",
                        bad.len()
                    )));
                }
                Ok(s.clone())
            }
        }
    };
    let eta = histories(&coefficients.eta, system.eta_len(), "eta")?;
    let xi = histories(&coefficients.xi, system.xi_len(), "xi")?;
    let states = (0..n)
        .map(|i| ModalState {
            gamma: modes.gammas[i],
            u: coefficients.u[i],
            v: coefficients.v[i],
            theta: coefficients.theta[i],
            eta: eta[i].clone(),
            xi: xi[i].clone(),
        })
        .collect();
    Ok(PhaseVector {
        system,
        modes: states,
        order,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{PlateModel, PlateParams};
    use approx::assert_relative_eq;

    #[test]
    fn interval_spectrum() {
        let m = dirichlet_eigenvalues(Domain::Interval { length: PI }, 3).unwrap();
        assert_eq!(m.gammas, vec![1.0, 4.0, 9.0]);
        let m = dirichlet_eigenvalues(Domain::Interval { length: 1.0 }, 1).unwrap();
        assert_relative_eq!(m.gammas[0], PI * PI, max_relative = 1e-15);
    }

    #[test]
    fn square_spectrum_with_ties() {
        let m = dirichlet_eigenvalues(Domain::Rectangle { lx: PI, ly: PI }, 4).unwrap();
        for (g, want) in m.gammas.iter().zip([2.0, 5.0, 5.0, 8.0]) {
            assert_relative_eq!(*g, want, max_relative = 1e-14);
        }
        assert_eq!(m.indices[1], (1, 2));
        assert_eq!(m.indices[2], (2, 1));
    }

    #[test]
    fn zero_modes_rejected() {
        assert!(dirichlet_eigenvalues(Domain::Interval { length: 1.0 }, 0).is_err());
        assert!(dirichlet_eigenvalues(Domain::Rectangle { lx: 1.0, ly: -1.0 }, 2).is_err());
    }

    #[test]
    fn mode_shapes_are_normalized() {
        let m = dirichlet_eigenvalues(Domain::Rectangle { lx: 2.0, ly: 1.0 }, 3).unwrap();
        let n = 200;
        for mode in 0..3 {
            let mut s = 0.0;
            for i in 0..n {
                for j in 0..n {
                    let x = (i as f64 + 0.5) * 2.0 / n as f64;
                    let y = (j as f64 + 0.5) / n as f64;
                    s += m.mode_shape(mode, x, y).powi(2);
                }
            }
            assert_relative_eq!(s * 2.0 / (n * n) as f64, 1.0, max_relative = 1e-6);
        }
    }

    fn limit_system() -> Arc<MemorySystem> {
        Arc::new(MemorySystem::plate(&PlateModel::default(), PlateParams::LIMIT).unwrap())
    }

    #[test]
    fn projected_norms() {
        let sys = limit_system();
        let modes = ModeSet::from_gammas(vec![1.0, 4.0]).unwrap();
        let zero = ModalCoefficients {
            u: vec![0.0; 2],
            v: vec![0.0; 2],
            theta: vec![0.0; 2],
            ..Default::default()
        };
        assert_eq!(project_initial_data(&zero, &modes, sys.clone(), 0.0).unwrap().norm(), 0.0);
        let one = ModalCoefficients {
            u: vec![0.0, 1.0],
            ..zero.clone()
        };
        let z = project_initial_data(&one, &modes, sys.clone(), 0.0).unwrap();
        assert_eq!(z.norm_sq(), 16.0);
        let bad = ModalCoefficients {
            u: vec![0.0],
            ..zero
        };
        assert!(matches!(
            project_initial_data(&bad, &modes, sys, 0.0),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn constant_history_contributes_kernel_mass() {
        let model = PlateModel::default();
        let sys = Arc::new(
            MemorySystem::plate(
                &model,
                PlateParams {
                    sigma: 0.0,
                    tau: 0.0,
                    epsilon: 1.0,
                },
            )
            .unwrap(),
        );
        let modes = ModeSet::from_gammas(vec![1.0]).unwrap();
        let c = ModalCoefficients {
            u: vec![0.0],
            v: vec![0.0],
            theta: vec![0.0],
            eta: Some(vec![HistorySlice(vec![1.0; sys.eta_len()])]),
            xi: None,
        };
        let z = project_initial_data(&c, &modes, sys, 0.0).unwrap();
        assert_relative_eq!(z.norm_sq(), 1.0, max_relative = 1e-4);
    }

    #[test]
    fn raising_order_scales_by_gamma_squared() {
        let sys = limit_system();
        let modes = ModeSet::from_gammas(vec![3.0]).unwrap();
        let c = ModalCoefficients {
            u: vec![0.7],
            v: vec![-1.1],
            theta: vec![0.4],
            ..Default::default()
        };
        let a = project_initial_data(&c, &modes, sys.clone(), 0.0).unwrap().norm_sq();
        let b = project_initial_data(&c, &modes, sys, 2.0).unwrap().norm_sq();
        assert_relative_eq!(b, 9.0 * a, max_relative = 1e-14);
    }
}
