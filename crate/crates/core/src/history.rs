//! Discretization of the history variable `s`.
//!
//! A [`HistoryGrid`] carries nodes `0 < s₁ < … < s_M` and nonnegative
//! weights with `Σ w_j f(s_j) ≈ ∫ k(s) f(s) ds` for functions vanishing at
//! `s = 0`. The weights integrate the piecewise-linear interpolant of `f`
//! through `(0, 0), (s₁, f₁), …`, except that the whole mass of the first
//! cell is lumped on `s₁` so the weights sum to the kernel mass.
//!
//! The transport generator `η ↦ -η_s` with zero inflow is realized by the
//! first-order upwind difference. With these weights the ratio
//! `w_j / (s_j - s_{j-1})` is nonincreasing in `j`, which makes the discrete
//! generator dissipative in the weighted inner product for every slice.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::KernelSpec;
use crate::quadrature;

/// Node-placement policy.
///
/// Spacings grow geometrically from the first cell near `s = 0` and follow
/// the kernel tail further out (see [`build_shared_grids`]). Ratio and first
/// cell are quoted at the reference resolution of 400 nodes and shrink
/// proportionally as the node count grows, so refining the grid refines it
/// everywhere.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridPolicy {
    pub ratio: f64,
    /// Away from the origin the spacing grows like `K(s)^(-grading)`, `K`
    /// the fraction of kernel mass beyond `s`.
    pub grading: f64,
    /// First cell width in units of the shortest kernel scale.
    pub first_cell: f64,
    /// Tail mass beyond the cutoff, relative to the total.
    pub tail_tol: f64,
    /// Required relative accuracy of the weight sum.
    pub mass_tol: f64,
}

impl Default for GridPolicy {
    fn default() -> Self {
        GridPolicy {
            ratio: 1.05,
            grading: 1.0,
            first_cell: 1e-3,
            tail_tol: 1e-8,
            mass_tol: 1e-4,
        }
    }
}

const REFERENCE_NODES: f64 = 400.0;

/// Values of one history component of one mode at the grid nodes; the
/// boundary value at `s = 0` is implicitly zero.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct HistorySlice(pub Vec<f64>);

impl HistorySlice {
    pub fn zeros(n: usize) -> Self {
        HistorySlice(vec![0.0; n])
    }

    pub fn from_fn(grid: &HistoryGrid, f: impl Fn(f64) -> f64) -> Self {
        HistorySlice(grid.nodes.iter().map(|&s| f(s)).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HistoryGrid {
    pub nodes: Vec<f64>,
    /// `s_j - s_{j-1}` with `s_0 = 0`.
    pub spacing: Vec<f64>,
    pub weights: Vec<f64>,
    pub kernel: KernelSpec,
    pub policy: GridPolicy,
    pub s_max: f64,
    /// Relative error of the weight sum against the kernel mass.
    pub mass_error: f64,
}

/// Builds a grid for a single kernel.
pub fn build_history_grid(kernel: &KernelSpec, nodes: usize, policy: GridPolicy) -> Result<HistoryGrid> {
    let mut grids = build_shared_grids(&[*kernel], nodes, policy)?;
    Ok(grids.remove(0))
}

/// Builds grids sharing one set of nodes, resolving the shortest scale and
/// the longest tail among `kernels`; one weight set per kernel.
pub fn build_shared_grids(
    kernels: &[KernelSpec],
    nodes: usize,
    policy: GridPolicy,
) -> Result<Vec<HistoryGrid>> {
    if nodes < 8 {
        return Err(Error::domain(format!("history grid needs at least 8 nodes, got {nodes}")));
    }
    if kernels.is_empty() {
        return Err(Error::domain("no kernel to build a history grid for"));
    }
    if !(policy.ratio >= 1.0 && policy.grading >= 0.0 && policy.first_cell > 0.0 && policy.tail_tol > 0.0) {
        return Err(Error::domain("invalid grid policy"));
    }
    let s_max = kernels
        .iter()
        .map(|k| k.tail_cutoff(policy.tail_tol))
        .fold(0.0, f64::max);
    let scale = kernels.iter().map(KernelSpec::scale).fold(f64::INFINITY, f64::min);
    let refine = REFERENCE_NODES / nodes as f64;
    let ratio = 1.0 + (policy.ratio - 1.0) * refine;
    let first = (policy.first_cell * scale * refine).min(s_max / nodes as f64);
    // every kernel's mass is checked on its own, so their tails count equally
    let tail = |s: f64| kernels.iter().map(|k| k.tail_fraction(s)).sum::<f64>() / kernels.len() as f64;
    let spacing = graded_spacing(first, ratio, policy.grading, nodes, s_max, &tail);
    let mut node_vec = Vec::with_capacity(nodes);
    let mut s = 0.0;
    for h in &spacing {
        s += h;
        node_vec.push(s);
    }
    // pin the last node to the cutoff against summation drift
    *node_vec.last_mut().unwrap() = s_max;
    let spacing: Vec<f64> = node_vec
        .iter()
        .scan(0.0, |prev, &x| {
            let h = x - *prev;
            *prev = x;
            Some(h)
        })
        .collect();
    if spacing.iter().any(|h| !(*h > 0.0)) {
        return Err(Error::domain("degenerate history grid spacing"));
    }

    kernels
        .iter()
        .map(|kernel| {
            let weights = hat_weights(kernel, &node_vec)?;
            let mass = kernel.moment(0)?;
            let mass_error = (weights.iter().sum::<f64>() - mass).abs() / mass;
            if mass_error > policy.mass_tol {
                return Err(Error::Resolution {
                    nodes,
                    requested: policy.mass_tol,
                    achieved: mass_error,
                });
            }
            Ok(HistoryGrid {
                nodes: node_vec.clone(),
                spacing: spacing.clone(),
                weights,
                kernel: *kernel,
                policy,
                s_max,
                mass_error,
            })
        })
        .collect()
}

/// March `s_{j+1} = s_j + Δ(s_j)` for `n` steps with
/// `Δ(s) = min(first + (ratio - 1)·s, c·K(s)^(-grading))`, choosing `c` so
/// the last node lands on `total`. `K` is the mean tail fraction of the kernels:
/// upwind damping committed at `s` is felt by all the kernel mass beyond it.
fn graded_spacing(
    first: f64,
    ratio: f64,
    grading: f64,
    n: usize,
    total: f64,
    tail: &dyn Fn(f64) -> f64,
) -> Vec<f64> {
    let march = |geo: f64, c: f64| -> Vec<f64> {
        let mut s = 0.0;
        (0..n)
            .map(|_| {
                let h = (geo * (first + (ratio - 1.0) * s)).min(c / tail(s).max(1e-300).powf(grading));
                s += h;
                h
            })
            .collect()
    };
    let reach = |v: &[f64]| v.iter().sum::<f64>();
    let bisect = |f: &dyn Fn(f64) -> f64, mut lo: f64, mut hi: f64| {
        for _ in 0..200 {
            let mid = (lo * hi).sqrt();
            if f(mid) < total {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi / lo - 1.0 < 1e-14 {
                break;
            }
        }
        hi
    };
    let mut h = if reach(&march(1.0, f64::INFINITY)) < total {
        // too few nodes for the geometric part alone: steepen it
        let mut hi = 2.0;
        while reach(&march(hi, f64::INFINITY)) < total {
            hi *= 2.0;
        }
        let geo = bisect(&|g| reach(&march(g, f64::INFINITY)), 1.0, hi);
        march(geo, f64::INFINITY)
    } else {
        let mut hi = total;
        while reach(&march(1.0, hi)) < total {
            hi *= 2.0;
        }
        let c = bisect(&|c| reach(&march(1.0, c)), 1e-300_f64.max(total * 1e-12), hi);
        march(1.0, c)
    };
    let scale = total / reach(&h);
    h.iter_mut().for_each(|x| *x *= scale);
    h
}

fn hat_weights(kernel: &KernelSpec, nodes: &[f64]) -> Result<Vec<f64>> {
    let rule = quadrature::gauss_legendre(16);
    let n = nodes.len();
    let mut weights = vec![0.0; n];
    // first cell: lump the whole mass on s₁, singular part via t = s^(1-ω)
    let q = 1.0 - kernel.exponent;
    weights[0] = quadrature::fixed(
        |t| {
            let s = t.powf(1.0 / q);
            kernel.amplitude * (-kernel.decay * s).exp() / q
        },
        0.0,
        nodes[0].powf(q),
        &rule,
    );
    for j in 1..n {
        let (a, b) = (nodes[j - 1], nodes[j]);
        let h = b - a;
        let left = quadrature::fixed(|s| kernel.value(s) * (b - s) / h, a, b, &rule);
        let right = quadrature::fixed(|s| kernel.value(s) * (s - a) / h, a, b, &rule);
        weights[j - 1] += left;
        weights[j] += right;
    }
    if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
        return Err(Error::domain("kernel produced invalid history weights"));
    }
    // enforce nonincreasing w_j / h_j against rounding
    let mut prev = f64::INFINITY;
    for j in 0..n {
        let h = nodes[j] - if j == 0 { 0.0 } else { nodes[j - 1] };
        let c = (weights[j] / h).min(prev);
        weights[j] = c * h;
        prev = c;
    }
    Ok(weights)
}

impl HistoryGrid {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn weight_sum(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Same nodes, weights for another kernel.
    pub fn reweighted(&self, kernel: &KernelSpec) -> Result<HistoryGrid> {
        let weights = hat_weights(kernel, &self.nodes)?;
        let mass = kernel.moment(0)?;
        let mass_error = (weights.iter().sum::<f64>() - mass).abs() / mass;
        Ok(HistoryGrid {
            weights,
            kernel: *kernel,
            mass_error,
            ..self.clone()
        })
    }

    pub fn max_spacing(&self) -> f64 {
        self.spacing.iter().copied().fold(0.0, f64::max)
    }

    /// `Σ w_j f_j`.
    pub fn integrate(&self, values: &[f64]) -> f64 {
        self.weights.iter().zip(values).map(|(w, f)| w * f).sum()
    }

    /// `Σ w_j f_j²`.
    pub fn integrate_sq(&self, values: &[f64]) -> f64 {
        self.weights.iter().zip(values).map(|(w, f)| w * f * f).sum()
    }

    /// `(node, weight)` rows for audit.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("node,weight\n");
        for (s, w) in self.nodes.iter().zip(&self.weights) {
            out.push_str(&format!("{s:.17e},{w:.17e}\n"));
        }
        out
    }

    pub(crate) fn check_slice(&self, slice: &[f64]) -> Result<()> {
        if slice.len() != self.len() {
            return Err(Error::Shape(format!(
                "history slice has {} entries, grid has {} nodes",
                slice.len(),
                self.len()
            )));
        }
        Ok(())
    }
}

/// Upwind `-η_s` with inflow `η(0) = 0`, written into `out`.
pub fn upwind_into(spacing: &[f64], eta: &[f64], out: &mut [f64]) {
    let mut prev = 0.0;
    for ((o, &e), &h) in out.iter_mut().zip(eta).zip(spacing) {
        *o = -(e - prev) / h;
        prev = e;
    }
}

pub fn translation_apply(grid: &HistoryGrid, slice: &HistorySlice) -> Result<HistorySlice> {
    grid.check_slice(&slice.0)?;
    let mut out = vec![0.0; slice.len()];
    upwind_into(&grid.spacing, &slice.0, &mut out);
    Ok(HistorySlice(out))
}

/// `sqrt(γ^p Σ w_j η_j²)` where `power_weight = γ^p`.
pub fn weighted_norm(grid: &HistoryGrid, slice: &HistorySlice, power_weight: f64) -> Result<f64> {
    grid.check_slice(&slice.0)?;
    Ok((power_weight * grid.integrate_sq(&slice.0)).sqrt())
}

/// `Σ w_j (Tη)_j η_j`, the weighted pairing of the generator with its argument.
pub fn dissipation_pairing(grid: &HistoryGrid, slice: &HistorySlice) -> Result<f64> {
    let t = translation_apply(grid, slice)?;
    Ok(grid.weights.iter().zip(&t.0).zip(&slice.0).map(|((w, a), b)| w * a * b).sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::KernelFamily;
    use approx::assert_relative_eq;

    fn unit_grid(m: usize) -> HistoryGrid {
        build_history_grid(&KernelSpec::unit_exponential(), m, GridPolicy::default()).unwrap()
    }

    #[test]
    fn unit_exponential_weight_sum() {
        let g = unit_grid(400);
        assert!((g.weight_sum() - 1.0).abs() <= 1e-4);
        assert!(g.nodes.windows(2).all(|w| w[1] > w[0]));
        assert!(g.weights.iter().all(|w| *w >= 0.0));
        let ones = HistorySlice(vec![1.0; g.len()]);
        assert_relative_eq!(weighted_norm(&g, &ones, 1.0).unwrap(), 1.0, max_relative = 1e-4);
    }

    #[test]
    fn cutoff_scales_with_relaxation() {
        let base = unit_grid(400).s_max;
        let k = KernelSpec::unit_exponential().rescaled(0.125).unwrap();
        let g = build_history_grid(&k, 400, GridPolicy::default()).unwrap();
        let ratio = g.s_max / (0.125 * base);
        assert!((0.5..=2.0).contains(&ratio), "{ratio}");
        assert_relative_eq!(g.weight_sum(), 8.0, max_relative = 1e-4);
    }

    #[test]
    fn singular_kernel_mass() {
        let k = KernelSpec::base(KernelFamily::PowerExponential, 1.0, 0.5, 1.0).unwrap();
        let g = build_history_grid(&k, 400, GridPolicy::default()).unwrap();
        assert_relative_eq!(g.weight_sum(), std::f64::consts::PI.sqrt(), max_relative = 1e-3);
    }

    #[test]
    fn too_few_nodes_rejected() {
        let err = build_history_grid(&KernelSpec::unit_exponential(), 4, GridPolicy::default());
        assert!(matches!(err, Err(Error::Domain(_))));
    }

    #[test]
    fn unreachable_mass_tolerance_reports_achieved() {
        let policy = GridPolicy {
            tail_tol: 1e-2,
            mass_tol: 1e-6,
            ..GridPolicy::default()
        };
        match build_history_grid(&KernelSpec::unit_exponential(), 50, policy) {
            Err(Error::Resolution { achieved, .. }) => assert!(achieved > 1e-6),
            other => panic!("expected resolution error, got {other:?}"),
        }
    }

    #[test]
    fn transport_of_simple_profiles() {
        let g = unit_grid(100);
        let zero = translation_apply(&g, &HistorySlice::zeros(g.len())).unwrap();
        assert!(zero.0.iter().all(|v| *v == 0.0));

        let affine = HistorySlice::from_fn(&g, |s| s);
        let t = translation_apply(&g, &affine).unwrap();
        for v in &t.0 {
            assert_relative_eq!(*v, -1.0, max_relative = 1e-9);
        }

        let c = 2.5;
        let t = translation_apply(&g, &HistorySlice(vec![c; g.len()])).unwrap();
        assert_eq!(t.0[0], -c / g.nodes[0]);
        assert!(t.0[1..].iter().all(|v| *v == 0.0));
    }

    #[test]
    fn norm_is_homogeneous() {
        let g = unit_grid(64);
        let eta = HistorySlice::from_fn(&g, |s| (s * 1.3).sin());
        let scaled = HistorySlice(eta.0.iter().map(|v| -3.0 * v).collect());
        let a = weighted_norm(&g, &eta, 2.0).unwrap();
        let b = weighted_norm(&g, &scaled, 2.0).unwrap();
        assert_relative_eq!(b, 3.0 * a, max_relative = 1e-15);
        assert_eq!(weighted_norm(&g, &HistorySlice::zeros(64), 1.0).unwrap(), 0.0);
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let g = unit_grid(32);
        assert!(matches!(
            translation_apply(&g, &HistorySlice::zeros(31)),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn weight_to_spacing_ratio_is_nonincreasing() {
        let k = KernelSpec::base(KernelFamily::PowerExponential, 1.0, 0.3, 2.0).unwrap();
        for g in [unit_grid(400), build_history_grid(&k, 200, GridPolicy::default()).unwrap()] {
            let c: Vec<f64> = g.weights.iter().zip(&g.spacing).map(|(w, h)| w / h).collect();
            assert!(c.windows(2).all(|w| w[1] <= w[0]));
        }
    }

    #[test]
    fn csv_dump_has_one_row_per_node() {
        let g = unit_grid(16);
        let csv = g.to_csv();
        assert_eq!(csv.lines().count(), 17);
    }
}
