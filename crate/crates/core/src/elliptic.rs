//! Extension of strip data into the interior.
//!
//! Given strip values `g`, the interior values solve the stationary nonlocal
//! equation `sum_y W[x][y] phi_p(u[y] - u[x]) = 0` at every interior `x`, with
//! `phi_p(d) = |d|^(p-2) d`. For `p = 2` this is a linear system; otherwise the
//! interior values minimise the p-energy
//!
//! ```text
//! E_p(u) = 1/(2p) * sum_{ordered active (x,y)} mu[x] W[x][y] |u[y] - u[x]|^p
//! ```
//!
//! with the strip pinned to `g`.

use std::ops::{Deref, DerefMut};

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::geometry::Grid;
use crate::kernel::NonlocalOperator;
use crate::linalg::solve_spd_shifted;

/// Regularisation of `|d|` inside gradients and Hessians when `1 < p < 2`.
pub const MODULUS_EPS: f64 = 1e-10;

macro_rules! field_newtype {
    ($name:ident) => {
        #[derive(Debug, Clone, PartialEq, Default)]
        pub struct $name(pub Vec<f64>);

        impl Deref for $name {
            type Target = Vec<f64>;
            fn deref(&self) -> &Vec<f64> {
                &self.0
            }
        }

        impl DerefMut for $name {
            fn deref_mut(&mut self) -> &mut Vec<f64> {
                &mut self.0
            }
        }

        impl From<Vec<f64>> for $name {
            fn from(v: Vec<f64>) -> Self {
                Self(v)
            }
        }

        impl $name {
            pub fn into_vec(self) -> Vec<f64> {
                self.0
            }

            pub fn sup_norm(&self) -> f64 {
                self.0.iter().fold(0.0, |m, v| m.max(v.abs()))
            }
        }
    };
}

field_newtype!(StripField);
field_newtype!(FullField);

impl StripField {
    pub fn constant(grid: &Grid, c: f64) -> Self {
        Self(vec![c; grid.strip_indices().len()])
    }

    /// Restriction of a full field to the strip nodes.
    pub fn from_full(grid: &Grid, u: &[f64]) -> Self {
        Self(grid.strip_indices().iter().map(|&i| u[i]).collect())
    }

    pub(crate) fn check(&self, grid: &Grid) -> Result<()> {
        if self.len() != grid.strip_indices().len() {
            return Err(Error::invalid(format!(
                "strip field has {} values, grid has {} strip nodes",
                self.len(),
                grid.strip_indices().len()
            )));
        }
        if self.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("strip field has non-finite entries"));
        }
        Ok(())
    }
}

impl FullField {
    /// Strip values placed on the strip, `fill` on the interior.
    pub fn scatter(grid: &Grid, g: &[f64], fill: f64) -> Self {
        let mut u = vec![fill; grid.len()];
        for (k, &i) in grid.strip_indices().iter().enumerate() {
            u[i] = g[k];
        }
        Self(u)
    }

    pub fn strip_part(&self, grid: &Grid) -> StripField {
        StripField::from_full(grid, self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyReport {
    pub energy: f64,
    /// Sup-norm of the stationarity residual over the free nodes.
    pub grad_norm: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-12,
            max_iter: 200,
        }
    }
}

fn check_exponent(p: f64) -> Result<()> {
    if p > 1.0 && p.is_finite() {
        Ok(())
    } else {
        Err(Error::NonConvexExponent(p))
    }
}

#[inline]
fn phi(d: f64, p: f64) -> f64 {
    if p == 2.0 {
        d
    } else if p < 2.0 {
        (d * d + MODULUS_EPS * MODULUS_EPS).powf(0.5 * (p - 2.0)) * d
    } else {
        d.abs().powf(p - 2.0) * d
    }
}

#[inline]
pub(crate) fn phi_exact(d: f64, p: f64) -> f64 {
    if d == 0.0 {
        0.0
    } else {
        d.abs().powf(p - 2.0) * d
    }
}

#[inline]
fn phi_prime(d: f64, p: f64) -> f64 {
    if p == 2.0 {
        1.0
    } else if p < 2.0 {
        let e2 = MODULUS_EPS * MODULUS_EPS;
        (d * d + e2).powf(0.5 * (p - 4.0)) * ((p - 1.0) * d * d + e2)
    } else {
        (p - 1.0) * d.abs().powf(p - 2.0)
    }
}

#[inline]
fn modulus_pow(d: f64, p: f64, regularized: bool) -> f64 {
    if regularized && p < 2.0 {
        let e2 = MODULUS_EPS * MODULUS_EPS;
        (d * d + e2).powf(0.5 * p) - e2.powf(0.5 * p)
    } else if p == 2.0 {
        d * d
    } else {
        d.abs().powf(p)
    }
}

fn energy_impl(op: &NonlocalOperator, u: &[f64], p: f64, regularized: bool) -> f64 {
    let mu = op.grid().mu();
    let mut total = 0.0;
    for x in 0..u.len() {
        let row: f64 = op
            .active_row(x)
            .map(|(y, w)| w * modulus_pow(u[y] - u[x], p, regularized))
            .sum();
        total += mu[x] * row;
    }
    total / (2.0 * p)
}

/// p-energy over the operator's active edge set.
pub fn energy(op: &NonlocalOperator, u: &[f64], p: f64) -> f64 {
    energy_impl(op, u, p, false)
}

/// Gradient of [`energy`] with respect to every nodal value.
///
/// For `1 < p < 2` the modulus is regularised by [`MODULUS_EPS`].
pub fn energy_gradient(op: &NonlocalOperator, u: &[f64], p: f64) -> FullField {
    let mu = op.grid().mu();
    let mut g = vec![0.0; u.len()];
    for x in 0..u.len() {
        for (y, w) in op.active_row(x) {
            let t = 0.5 * mu[x] * w * phi(u[y] - u[x], p);
            g[y] += t;
            g[x] -= t;
        }
    }
    FullField(g)
}

/// Sup over interior nodes of `|sum_{y != x} W[x][y] phi_p(u[y] - u[x])|`.
pub fn interior_residual(op: &NonlocalOperator, u: &[f64], p: f64) -> f64 {
    op.grid()
        .interior_indices()
        .iter()
        .map(|&x| {
            op.weights()
                .row(x)
                .map(|(y, w)| w * phi_exact(u[y] - u[x], p))
                .sum::<f64>()
                .abs()
        })
        .fold(0.0, f64::max)
}

// Constants extend to themselves exactly; skip the solve to keep them bit-exact.
fn constant_value(g: &[f64]) -> Option<f64> {
    let first = *g.first()?;
    g.iter().all(|&v| v == first).then_some(first)
}

/// Linear extension: `(D_I - W_II) u_I = W_IS g`, strip values copied from `g`.
pub fn extend_linear(op: &NonlocalOperator, g: &[f64]) -> Result<FullField> {
    let grid = op.grid();
    StripField(g.to_vec()).check(grid)?;
    if let Some(c) = constant_value(g) {
        return Ok(FullField(vec![c; grid.len()]));
    }
    let mut u = FullField::scatter(grid, g, 0.0);
    if grid.interior_indices().is_empty() {
        return Ok(u);
    }
    let rhs = op.w_is().mul_vec(g);
    let ui = op.linear_extension()?.solve(&rhs)?;
    for (k, &i) in grid.interior_indices().iter().enumerate() {
        u[i] = ui[k];
    }
    Ok(u)
}

/// Nonlinear extension by minimising the p-energy over the interior values.
pub fn extend_plaplace(
    op: &NonlocalOperator,
    g: &[f64],
    p: f64,
    opts: SolverOptions,
) -> Result<(FullField, EnergyReport)> {
    extend_plaplace_from(op, g, p, opts, None)
}

/// As [`extend_plaplace`], starting from `guess` (a full field) when given.
pub(crate) fn extend_plaplace_from(
    op: &NonlocalOperator,
    g: &[f64],
    p: f64,
    opts: SolverOptions,
    guess: Option<&[f64]>,
) -> Result<(FullField, EnergyReport)> {
    check_exponent(p)?;
    let grid = op.grid();
    StripField(g.to_vec()).check(grid)?;
    let gmax = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if let Some(c) = constant_value(g) {
        let report = EnergyReport {
            energy: 0.0,
            grad_norm: 0.0,
            iterations: 0,
            converged: true,
        };
        return Ok((FullField(vec![c; grid.len()]), report));
    }
    let mut u = match guess {
        Some(v) if v.len() == grid.len() => {
            let mut u = FullField(v.to_vec());
            for (k, &i) in grid.strip_indices().iter().enumerate() {
                u[i] = g[k];
            }
            u
        }
        _ => match extend_linear(op, g) {
            Ok(u) => u,
            Err(_) => {
                let mean = g.iter().sum::<f64>() / g.len() as f64;
                FullField::scatter(grid, g, mean)
            }
        },
    };
    if grid.interior_indices().is_empty() {
        let e = energy(op, &u, p);
        return Ok((
            u,
            EnergyReport {
                energy: e,
                grad_norm: 0.0,
                iterations: 0,
                converged: true,
            },
        ));
    }
    let problem = Problem {
        op,
        p,
        free: grid.interior_indices(),
        prox: None,
    };
    let mut report = problem.minimize(&mut u, opts.tol * (1.0 + gmax), opts.max_iter)?;
    report.energy = energy(op, &u, p);
    Ok((u, report))
}

/// Quadratic pull of strip values towards `center` with weight `mu / (2 dt)`.
pub(crate) struct Proximal<'a> {
    pub center: &'a [f64],
    pub inv_dt: f64,
}

/// Convex objective `E_p(v) [+ prox]` minimised over the `free` node values.
pub(crate) struct Problem<'a> {
    pub op: &'a NonlocalOperator,
    pub p: f64,
    pub free: &'a [usize],
    pub prox: Option<Proximal<'a>>,
}

impl Problem<'_> {
    fn objective(&self, v: &[f64]) -> f64 {
        let mut f = energy_impl(self.op, v, self.p, true);
        if let Some(px) = &self.prox {
            let grid = self.op.grid();
            let mu = grid.mu();
            let s: f64 = grid
                .strip_indices()
                .iter()
                .zip(px.center)
                .map(|(&x, c)| mu[x] * (v[x] - c).powi(2))
                .sum();
            f += 0.5 * px.inv_dt * s;
        }
        f
    }

    fn gradient(&self, v: &[f64]) -> Vec<f64> {
        let mut g = energy_gradient(self.op, v, self.p).into_vec();
        if let Some(px) = &self.prox {
            let grid = self.op.grid();
            let mu = grid.mu();
            for (&x, c) in grid.strip_indices().iter().zip(px.center) {
                g[x] += px.inv_dt * mu[x] * (v[x] - c);
            }
        }
        g
    }

    fn residual(&self, g: &[f64]) -> f64 {
        let mu = self.op.grid().mu();
        self.free
            .iter()
            .map(|&x| (g[x] / mu[x]).abs())
            .fold(0.0, f64::max)
    }

    fn hessian(&self, v: &[f64], slot: &[usize]) -> DMatrix<f64> {
        let n = self.free.len();
        let mu = self.op.grid().mu();
        let mut h = DMatrix::zeros(n, n);
        for x in 0..v.len() {
            let sx = slot[x];
            for (y, w) in self.op.active_row(x) {
                let sy = slot[y];
                if sx == usize::MAX && sy == usize::MAX {
                    continue;
                }
                let c = 0.5 * mu[x] * w * phi_prime(v[y] - v[x], self.p);
                if sx != usize::MAX {
                    h[(sx, sx)] += c;
                }
                if sy != usize::MAX {
                    h[(sy, sy)] += c;
                }
                if sx != usize::MAX && sy != usize::MAX {
                    h[(sx, sy)] -= c;
                    h[(sy, sx)] -= c;
                }
            }
        }
        if let Some(px) = &self.prox {
            for &x in self.op.grid().strip_indices() {
                if slot[x] != usize::MAX {
                    h[(slot[x], slot[x])] += px.inv_dt * mu[x];
                }
            }
        }
        h
    }

    /// Damped Newton with Armijo backtracking; converged when the residual
    /// `max |grad[x] / mu[x]|` over free nodes is at most `tol`.
    pub(crate) fn minimize(
        &self,
        v: &mut [f64],
        tol: f64,
        max_iter: usize,
    ) -> Result<EnergyReport> {
        let mut slot = vec![usize::MAX; v.len()];
        for (k, &x) in self.free.iter().enumerate() {
            slot[x] = k;
        }
        let mut g = self.gradient(v);
        let mut res = self.residual(&g);
        let mut f = self.objective(v);
        let mut trial = v.to_vec();
        for it in 0..max_iter {
            if res <= tol {
                return Ok(EnergyReport {
                    energy: f,
                    grad_norm: res,
                    iterations: it,
                    converged: true,
                });
            }
            let gf: Vec<f64> = self.free.iter().map(|&x| g[x]).collect();
            let h = self.hessian(v, &slot);
            let mut dir: Vec<f64> = solve_spd_shifted(h, &gf).into_iter().map(|d| -d).collect();
            let mut slope: f64 = dir.iter().zip(&gf).map(|(d, g)| d * g).sum();
            if !(slope < 0.0) || dir.iter().any(|d| !d.is_finite()) {
                let mu = self.op.grid().mu();
                dir = self.free.iter().map(|&x| -g[x] / mu[x]).collect();
                slope = dir.iter().zip(&gf).map(|(d, g)| d * g).sum();
            }
            let mut t = 1.0;
            let mut accepted = false;
            while t > 1e-14 {
                trial.copy_from_slice(v);
                for (k, &x) in self.free.iter().enumerate() {
                    trial[x] += t * dir[k];
                }
                let f_try = self.objective(&trial);
                let armijo = f_try <= f + 1e-4 * t * slope;
                let g_try;
                let res_try;
                if armijo {
                    g_try = self.gradient(&trial);
                    res_try = self.residual(&g_try);
                } else {
                    // objective differences drown in roundoff near the minimum
                    g_try = self.gradient(&trial);
                    res_try = self.residual(&g_try);
                    if !(res_try < 0.5 * res && f_try <= f + 1e-12 * f.abs().max(1e-300)) {
                        t *= 0.5;
                        continue;
                    }
                }
                v.copy_from_slice(&trial);
                g = g_try;
                res = res_try;
                f = f_try;
                accepted = true;
                break;
            }
            if !accepted {
                break;
            }
        }
        if res <= tol {
            return Ok(EnergyReport {
                energy: f,
                grad_norm: res,
                iterations: max_iter,
                converged: true,
            });
        }
        Err(Error::NoConvergence {
            iterations: max_iter,
            residual: res,
            best: Some(Box::new(FullField(v.to_vec()))),
        })
    }
}
