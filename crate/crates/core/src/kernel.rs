//! Radial interaction kernels and the assembled nonlocal operator.
//!
//! Weights use the midpoint rule `W[x][y] = J(x - y) * mu[y]` with a zero
//! diagonal. On uniform grids this gives exact reciprocity
//! `mu[x] W[x][y] = mu[y] W[y][x]`, which is what makes the discrete strip
//! dynamics conserve mass exactly.

use std::f64::consts::PI;
use std::sync::{Arc, OnceLock};

use crate::error::{Error, Result};
use crate::geometry::Grid;
use crate::linalg::LinearSolver;
use crate::sparse::Csr;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KernelFamily {
    /// `cnorm * (R - |z|)` on `|z| < R`.
    Tent { radius: f64 },
    /// `cnorm * (R^2 - |z|^2)^2` on `|z| < R`.
    Bump { radius: f64 },
    /// `cnorm / |z|^(n + p s)`, unbounded at the origin.
    Singular { s: f64, p: f64 },
}

impl KernelFamily {
    pub fn name(&self) -> &'static str {
        match self {
            KernelFamily::Tent { .. } => "tent",
            KernelFamily::Bump { .. } => "bump",
            KernelFamily::Singular { .. } => "singular",
        }
    }

    pub fn radius(&self) -> Option<f64> {
        match *self {
            KernelFamily::Tent { radius } | KernelFamily::Bump { radius } => Some(radius),
            KernelFamily::Singular { .. } => None,
        }
    }

    pub fn is_singular(&self) -> bool {
        matches!(self, KernelFamily::Singular { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelSpec {
    pub family: KernelFamily,
    pub cnorm: f64,
}

impl KernelSpec {
    pub fn tent(radius: f64, dim: usize) -> Result<Self> {
        let family = KernelFamily::Tent { radius };
        Ok(Self {
            family,
            cnorm: normalization(&family, dim)?,
        })
    }

    pub fn bump(radius: f64, dim: usize) -> Result<Self> {
        let family = KernelFamily::Bump { radius };
        Ok(Self {
            family,
            cnorm: normalization(&family, dim)?,
        })
    }

    /// Singular kernel with the fractional-Laplacian constant set to 1.
    pub fn singular(s: f64, p: f64) -> Result<Self> {
        if !(s > 0.0 && s < 1.0) {
            return Err(Error::invalid(format!(
                "singular exponent s must be in (0,1), got {s}"
            )));
        }
        if !(p > 1.0) {
            return Err(Error::NonConvexExponent(p));
        }
        Ok(Self {
            family: KernelFamily::Singular { s, p },
            cnorm: 1.0,
        })
    }

    pub fn with_constant(mut self, cnorm: f64) -> Self {
        self.cnorm = cnorm;
        self
    }
}

/// Constant making a compactly supported kernel integrate to one over `R^dim`.
/// Returns 1 for the singular family.
pub fn normalization(family: &KernelFamily, dim: usize) -> Result<f64> {
    let radius = match family.radius() {
        Some(r) => r,
        None => return Ok(1.0),
    };
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(Error::invalid(format!(
            "kernel radius must be > 0, got {radius}"
        )));
    }
    let c = match (family, dim) {
        (KernelFamily::Tent { .. }, 1) => 1.0 / radius.powi(2),
        (KernelFamily::Tent { .. }, 2) => 3.0 / (PI * radius.powi(3)),
        (KernelFamily::Bump { .. }, 1) => 15.0 / (16.0 * radius.powi(5)),
        (KernelFamily::Bump { .. }, 2) => 3.0 / (PI * radius.powi(6)),
        _ => return Err(Error::invalid(format!("unsupported dimension {dim}"))),
    };
    Ok(c)
}

pub fn eval_kernel(spec: &KernelSpec, z: &[f64]) -> Result<f64> {
    let rho = z.iter().map(|c| c * c).sum::<f64>().sqrt();
    eval_radial(spec, rho, z.len())
}

fn eval_radial(spec: &KernelSpec, rho: f64, dim: usize) -> Result<f64> {
    match spec.family {
        KernelFamily::Tent { radius } => Ok(if rho < radius {
            spec.cnorm * (radius - rho)
        } else {
            0.0
        }),
        KernelFamily::Bump { radius } => Ok(if rho < radius {
            spec.cnorm * (radius * radius - rho * rho).powi(2)
        } else {
            0.0
        }),
        KernelFamily::Singular { s, p } => {
            if rho == 0.0 {
                return Err(Error::SingularAtOrigin);
            }
            Ok(spec.cnorm / rho.powf(dim as f64 + p * s))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdgeMode {
    /// Every pair except strip-strip pairs.
    ExcludeStripStrip,
    /// Every pair.
    Full,
}

/// Quadrature weights of a kernel on a grid, split into interior/strip blocks.
///
/// Block matrices are indexed by the local position of a node inside its
/// class (see [`Grid::local_index`]).
#[derive(Debug)]
pub struct NonlocalOperator {
    grid: Arc<Grid>,
    spec: KernelSpec,
    edge_mode: EdgeMode,
    weights: Csr,
    w_ii: Csr,
    w_is: Csr,
    w_si: Csr,
    w_ss: Csr,
    d_omega_s: Vec<f64>,
    d_full: Vec<f64>,
    linear_ext: OnceLock<Option<LinearSolver>>,
}

impl NonlocalOperator {
    pub fn assemble(grid: Arc<Grid>, spec: KernelSpec, edge_mode: EdgeMode) -> Result<Self> {
        let n = grid.len();
        let dim = grid.dim();
        let mu = grid.mu();
        let mut rows = Vec::with_capacity(n);
        for x in 0..n {
            let mut row = Vec::new();
            for (y, &m) in mu.iter().enumerate() {
                if y == x {
                    continue;
                }
                let j = eval_radial(&spec, grid.distance(x, y), dim)?;
                if j != 0.0 {
                    row.push((y, j * m));
                }
            }
            rows.push(row);
        }
        let weights = Csr::from_rows(n, rows);
        if weights.nnz() == 0 {
            return Err(Error::EmptySupport);
        }
        Ok(Self::from_csr(grid, spec, edge_mode, weights))
    }

    /// Builds an operator from an explicit dense weight matrix `W[x][y]`
    /// (diagonal ignored). Intended for hand-made fixtures.
    pub fn from_weights(
        grid: Arc<Grid>,
        spec: KernelSpec,
        edge_mode: EdgeMode,
        dense: &[Vec<f64>],
    ) -> Result<Self> {
        let n = grid.len();
        if dense.len() != n || dense.iter().any(|r| r.len() != n) {
            return Err(Error::invalid("weight matrix must be n x n"));
        }
        let rows = dense
            .iter()
            .enumerate()
            .map(|(x, r)| {
                r.iter()
                    .enumerate()
                    .filter(|&(y, &w)| y != x && w != 0.0)
                    .map(|(y, &w)| (y, w))
                    .collect()
            })
            .collect();
        let weights = Csr::from_rows(n, rows);
        if weights.nnz() == 0 {
            return Err(Error::EmptySupport);
        }
        if dense.iter().flatten().any(|&w| w < 0.0 || !w.is_finite()) {
            return Err(Error::invalid("weights must be finite and nonnegative"));
        }
        Ok(Self::from_csr(grid, spec, edge_mode, weights))
    }

    fn from_csr(grid: Arc<Grid>, spec: KernelSpec, edge_mode: EdgeMode, weights: Csr) -> Self {
        let strip = grid.strip_indices();
        let interior = grid.interior_indices();
        let block = |rows: &[usize], want_strip: bool, ncols: usize| {
            let r = rows
                .iter()
                .map(|&x| {
                    weights
                        .row(x)
                        .filter(|&(y, _)| grid.is_strip(y) == want_strip)
                        .map(|(y, w)| (grid.local_index(y), w))
                        .collect()
                })
                .collect();
            Csr::from_rows(ncols, r)
        };
        let w_ii = block(interior, false, interior.len());
        let w_is = block(interior, true, strip.len());
        let w_si = block(strip, false, interior.len());
        let w_ss = block(strip, true, strip.len());
        let d_omega_s = (0..strip.len()).map(|k| w_si.row_sum(k)).collect();
        let d_full = (0..grid.len())
            .map(|x| {
                weights
                    .row(x)
                    .filter(|&(y, _)| edge_active(&grid, edge_mode, x, y))
                    .map(|(_, w)| w)
                    .sum()
            })
            .collect();
        Self {
            grid,
            spec,
            edge_mode,
            weights,
            w_ii,
            w_is,
            w_si,
            w_ss,
            d_omega_s,
            d_full,
            linear_ext: OnceLock::new(),
        }
    }

    /// Same weights, different edge set.
    pub fn with_edge_mode(&self, edge_mode: EdgeMode) -> Self {
        Self::from_csr(
            self.grid.clone(),
            self.spec,
            edge_mode,
            self.weights.clone(),
        )
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn grid_arc(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn spec(&self) -> &KernelSpec {
        &self.spec
    }

    pub fn edge_mode(&self) -> EdgeMode {
        self.edge_mode
    }

    /// All weights `W[x][y]`, indexed by global node.
    pub fn weights(&self) -> &Csr {
        &self.weights
    }

    pub fn w_ii(&self) -> &Csr {
        &self.w_ii
    }

    pub fn w_is(&self) -> &Csr {
        &self.w_is
    }

    pub fn w_si(&self) -> &Csr {
        &self.w_si
    }

    pub fn w_ss(&self) -> &Csr {
        &self.w_ss
    }

    /// `sum_{y in interior} W[x][y]` for each strip node `x`.
    pub fn d_omega_s(&self) -> &[f64] {
        &self.d_omega_s
    }

    /// Row sums over the active edge set, per node.
    pub fn d_full(&self) -> &[f64] {
        &self.d_full
    }

    pub fn is_active(&self, x: usize, y: usize) -> bool {
        edge_active(&self.grid, self.edge_mode, x, y)
    }

    /// Active neighbours of `x` with their weights.
    pub fn active_row(&self, x: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.weights
            .row(x)
            .filter(move |&(y, _)| self.is_active(x, y))
    }

    pub(crate) fn linear_extension(&self) -> Result<&LinearSolver> {
        self.linear_ext
            .get_or_init(|| LinearSolver::interior(self).ok())
            .as_ref()
            .ok_or(Error::SingularSystem)
    }
}

fn edge_active(grid: &Grid, mode: EdgeMode, x: usize, y: usize) -> bool {
    mode == EdgeMode::Full || !(grid.is_strip(x) && grid.is_strip(y))
}

/// `(L u)[x] = mu[x] * sum_{(x,y) active} W[x][y] (u[x] - u[y])`.
pub fn apply_graph_laplacian(op: &NonlocalOperator, u: &[f64]) -> Vec<f64> {
    let mu = op.grid().mu();
    (0..op.grid().len())
        .map(|x| {
            let s: f64 = op.active_row(x).map(|(y, w)| w * (u[x] - u[y])).sum();
            mu[x] * s
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::geometry::DomainBox;
    use proptest::prelude::*;

    fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
        let h = (b - a) / n as f64;
        let mut s = f(a) + f(b);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            s += w * f(a + i as f64 * h);
        }
        s * h / 3.0
    }

    #[test]
    fn tent_values() {
        let k = KernelSpec::tent(0.5, 1).unwrap();
        assert_eq!(eval_kernel(&k, &[0.0]).unwrap(), 2.0);
        assert_eq!(eval_kernel(&k, &[0.6]).unwrap(), 0.0);
        assert_eq!(eval_kernel(&k, &[-0.6]).unwrap(), 0.0);
    }

    #[test]
    fn singular_values() {
        let k = KernelSpec::singular(0.5, 2.0).unwrap();
        assert_eq!(eval_kernel(&k, &[0.5]).unwrap(), 4.0);
        assert!(matches!(
            eval_kernel(&k, &[0.0]),
            Err(Error::SingularAtOrigin)
        ));
        assert!(KernelSpec::singular(1.2, 2.0).is_err());
    }

    #[test]
    fn normalization_constants() {
        let n = |f, d| normalization(&f, d).unwrap();
        assert_eq!(n(KernelFamily::Tent { radius: 1.0 }, 1), 1.0);
        assert_eq!(n(KernelFamily::Tent { radius: 2.0 }, 1), 0.25);
        assert_eq!(n(KernelFamily::Singular { s: 0.5, p: 2.0 }, 1), 1.0);
        // oracle: radial quadrature of the unnormalised profile
        let bump2 = simpson(|r| (1.0 - r * r).powi(2) * 2.0 * PI * r, 0.0, 1.0, 2000);
        assert!((n(KernelFamily::Bump { radius: 1.0 }, 2) - 1.0 / bump2).abs() < 1e-10);
        assert!((1.0 / bump2 - 0.954930).abs() < 1e-6);
        for radius in [0.3, 1.0, 1.7] {
            let t1 = simpson(|z| radius - z.abs(), -radius, radius, 2000);
            let t2 = simpson(|r| (radius - r) * 2.0 * PI * r, 0.0, radius, 2000);
            let b1 = simpson(|z| (radius * radius - z * z).powi(2), -radius, radius, 2000);
            let b2 = simpson(
                |r| (radius * radius - r * r).powi(2) * 2.0 * PI * r,
                0.0,
                radius,
                2000,
            );
            for (f, d, mass) in [
                (KernelFamily::Tent { radius }, 1, t1),
                (KernelFamily::Tent { radius }, 2, t2),
                (KernelFamily::Bump { radius }, 1, b1),
                (KernelFamily::Bump { radius }, 2, b2),
            ] {
                assert!((n(f, d) * mass - 1.0).abs() < 1e-9, "{f:?} dim {d}");
            }
        }
    }

    #[test]
    fn tent_support_couples_only_neighbours() {
        let g = Arc::new(Grid::build(DomainBox::unit(1).unwrap(), 0.25, 0.25).unwrap());
        let k = KernelSpec::tent(0.3, 1).unwrap();
        let op = NonlocalOperator::assemble(g.clone(), k, EdgeMode::ExcludeStripStrip).unwrap();
        for x in 0..4 {
            for y in 0..4 {
                let w = op.weights().get(x, y);
                if (x as i64 - y as i64).abs() == 1 {
                    assert!(w > 0.0);
                } else {
                    assert_eq!(w, 0.0);
                }
            }
        }
        let tiny = KernelSpec::tent(0.2, 1).unwrap();
        assert!(matches!(
            NonlocalOperator::assemble(g, tiny, EdgeMode::Full),
            Err(Error::EmptySupport)
        ));
    }

    #[test]
    fn toy3_blocks() {
        let op = fixtures::toy3(EdgeMode::ExcludeStripStrip);
        assert_eq!(op.w_is().to_dense(), vec![vec![1.0, 1.0]]);
        assert_eq!(op.d_full()[0], 2.0);
        assert_eq!(op.d_omega_s(), &[1.0, 1.0]);
        // strip-strip weights exist but are inactive
        assert_eq!(op.w_ss().get(0, 1), 1.0);
        assert_eq!(&op.d_full()[1..], op.d_omega_s());
        let full = op.with_edge_mode(EdgeMode::Full);
        assert_eq!(&full.d_full()[1..], &[2.0, 2.0]);
    }

    #[test]
    fn toy3_laplacian() {
        let op = fixtures::toy3(EdgeMode::ExcludeStripStrip);
        assert_eq!(
            apply_graph_laplacian(&op, &[0.0, 1.0, -1.0]),
            vec![0.0, 1.0, -1.0]
        );
        assert_eq!(
            apply_graph_laplacian(&op, &[0.0, 1.0, 1.0]),
            vec![-2.0, 1.0, 1.0]
        );
        assert_eq!(apply_graph_laplacian(&op, &[3.0, 3.0, 3.0]), vec![0.0; 3]);
    }

    #[test]
    fn discrete_mass_close_to_one() {
        for (k, dim, h) in [
            (KernelSpec::tent(0.4, 1).unwrap(), 1, 0.05),
            (KernelSpec::bump(0.4, 1).unwrap(), 1, 0.05),
            (KernelSpec::tent(0.4, 2).unwrap(), 2, 0.05),
            (KernelSpec::bump(0.4, 2).unwrap(), 2, 0.05),
        ] {
            let g = Arc::new(Grid::build(DomainBox::unit(dim).unwrap(), h, 0.1).unwrap());
            let op = NonlocalOperator::assemble(g.clone(), k, EdgeMode::Full).unwrap();
            // node closest to the centre
            let c = (0..g.len())
                .max_by(|&a, &b| g.bdist()[a].total_cmp(&g.bdist()[b]))
                .unwrap();
            // add the self term that the zero diagonal omits
            let own = eval_kernel(&k, &vec![0.0; dim]).unwrap() * g.mu()[c];
            let total = op.weights().row_sum(c) + own;
            assert!((total - 1.0).abs() < 0.05, "{k:?}: {total}");
        }
    }

    fn random_op(seed: u64, dim: usize, singular: bool, full: bool) -> NonlocalOperator {
        let h = if dim == 1 { 1.0 / 24.0 } else { 1.0 / 8.0 };
        let g = Arc::new(Grid::build(DomainBox::unit(dim).unwrap(), h, 0.2).unwrap());
        let k = if singular {
            KernelSpec::singular(0.5, 2.0).unwrap()
        } else if seed.is_multiple_of(2) {
            KernelSpec::tent(0.3, dim).unwrap()
        } else {
            KernelSpec::bump(0.3, dim).unwrap()
        };
        let mode = if full {
            EdgeMode::Full
        } else {
            EdgeMode::ExcludeStripStrip
        };
        NonlocalOperator::assemble(g, k, mode).unwrap()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn reciprocity(seed in 0u64..4, dim in 1usize..3, singular in any::<bool>()) {
            let op = random_op(seed, dim, singular, false);
            let mu = op.grid().mu();
            for x in 0..op.grid().len() {
                for (y, w) in op.weights().row(x) {
                    let back = op.weights().get(y, x);
                    let (a, b) = (w * mu[x], back * mu[y]);
                    prop_assert!((a - b).abs() <= 1e-15 * a.abs());
                }
            }
        }

        #[test]
        fn quadratic_form_and_constants(
            u in proptest::collection::vec(-1.0f64..1.0, 24),
            singular in any::<bool>(),
            full in any::<bool>(),
        ) {
            let op = random_op(0, 1, singular, full);
            let mu = op.grid().mu();
            let lu = apply_graph_laplacian(&op, &u);
            let lhs: f64 = u.iter().zip(&lu).map(|(a, b)| a * b).sum();
            let mut rhs = 0.0;
            for x in 0..u.len() {
                for (y, w) in op.active_row(x) {
                    rhs += 0.5 * mu[x] * w * (u[y] - u[x]).powi(2);
                }
            }
            prop_assert!((lhs - rhs).abs() <= 1e-12 * rhs.abs().max(1e-300));
            prop_assert!(lhs >= -1e-14);
            let zero = apply_graph_laplacian(&op, &vec![0.7; u.len()]);
            prop_assert!(zero.iter().all(|v| v.abs() < 1e-12));
        }
    }
}
