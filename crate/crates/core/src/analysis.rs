//! Spectral gap, Rayleigh quotients, decay fits and norm diagnostics.
//!
//! The gap convention puts a factor 1/2 on the energy numerator,
//!
//! ```text
//! Q(g) = 1/2 sum_{ordered active (x,y)} mu[x] W[x][y] |u[y] - u[x]|^p / sum_strip mu |g|^p
//! ```
//!
//! with `u` the extension of `g`. For `p = 2` this equals `g.S g / g.M g` with
//! `S` the strip Schur complement, so `|u - mean|_2^2` decays at rate `2 beta`.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::elliptic::{
    energy, energy_gradient, extend_linear, extend_plaplace_from, phi_exact, FullField,
    SolverOptions, StripField, MODULUS_EPS,
};
use crate::error::{Error, Result};
use crate::evolution::{DiagRow, Trajectory};
use crate::geometry::Grid;
use crate::kernel::NonlocalOperator;

/// `sum_strip mu[x] u[x]`.
pub fn mass(grid: &Grid, u: &[f64]) -> f64 {
    let mu = grid.mu();
    grid.strip_indices()
        .iter()
        .zip(u)
        .map(|(&i, v)| mu[i] * v)
        .sum()
}

/// mu-weighted L^q distance of strip values to their mean; `q = inf` gives the sup.
pub fn lq_distance_to_mean(grid: &Grid, u: &[f64], q: f64) -> f64 {
    let mu = grid.mu();
    let strip = grid.strip_indices();
    let total: f64 = strip.iter().map(|&i| mu[i]).sum();
    let mean = mass(grid, u) / total;
    if q.is_infinite() {
        return u.iter().fold(0.0, |m, v| m.max((v - mean).abs()));
    }
    let s: f64 = strip
        .iter()
        .zip(u)
        .map(|(&i, v)| mu[i] * (v - mean).abs().powf(q))
        .sum();
    s.powf(1.0 / q)
}

fn strip_mean(grid: &Grid, g: &[f64]) -> f64 {
    mass(grid, g) / grid.strip_mu().iter().sum::<f64>()
}

fn lp_norm(smu: &[f64], g: &[f64], p: f64) -> f64 {
    smu.iter()
        .zip(g)
        .map(|(m, v)| m * v.abs().powf(p))
        .sum::<f64>()
        .powf(1.0 / p)
}

/// `S = L_SS - L_SI L_II^{-1} L_IS` of the mu-weighted active-edge Laplacian,
/// in strip-local indexing. With an empty interior `S = L_SS`.
pub fn schur_complement(op: &NonlocalOperator) -> Result<DMatrix<f64>> {
    let grid = op.grid();
    let mu = grid.mu();
    let strip = grid.strip_indices();
    let interior = grid.interior_indices();
    let (ns, ni) = (strip.len(), interior.len());
    let mut lss = DMatrix::zeros(ns, ns);
    let mut lsi = DMatrix::zeros(ns, ni);
    let mut lii = DMatrix::zeros(ni, ni);
    for (a, &x) in strip.iter().enumerate() {
        lss[(a, a)] = mu[x] * op.d_full()[x];
        for (y, w) in op.active_row(x) {
            let b = grid.local_index(y);
            if grid.is_strip(y) {
                lss[(a, b)] -= mu[x] * w;
            } else {
                lsi[(a, b)] -= mu[x] * w;
            }
        }
    }
    for (a, &x) in interior.iter().enumerate() {
        lii[(a, a)] = mu[x] * op.d_full()[x];
        for (y, w) in op.active_row(x) {
            if !grid.is_strip(y) {
                lii[(a, grid.local_index(y))] -= mu[x] * w;
            }
        }
    }
    let s = if ni == 0 {
        lss
    } else {
        let lu = lii.lu();
        let lis = lsi.transpose();
        let x = lu.solve(&lis).ok_or(Error::SingularInterior)?;
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::SingularInterior);
        }
        lss - &lsi * x
    };
    Ok((&s + s.transpose()) * 0.5)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GapMethod {
    SchurEig,
    VariationalDescent,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GapResult {
    pub beta: f64,
    /// Mean-zero optimiser, unit mu-weighted L^p norm.
    pub mode: StripField,
    pub method: GapMethod,
}

/// Generalised eigenpairs of `(S, M)` on the mu-mean-zero subspace, ascending.
/// Eigenvectors are M-orthonormal, mean-zero, with a positive leading entry.
pub fn mean_zero_eigenpairs(op: &NonlocalOperator) -> Result<Vec<(f64, StripField)>> {
    let grid = op.grid();
    let ns = grid.strip_indices().len();
    if ns < 2 {
        return Err(Error::TooFewStripNodes);
    }
    let s = schur_complement(op)?;
    let smu = grid.strip_mu();
    let root: Vec<f64> = smu.iter().map(|m| m.sqrt()).collect();
    let mut a = DMatrix::from_fn(ns, ns, |i, j| s[(i, j)] / (root[i] * root[j]));
    // constants map to q = M^{1/2} 1; push that direction above the spectrum
    let qn = root.iter().map(|v| v * v).sum::<f64>().sqrt();
    let q = DVector::from_iterator(ns, root.iter().map(|v| v / qn));
    let p = DMatrix::identity(ns, ns) - &q * q.transpose();
    let shift = a.diagonal().iter().map(|v| v.abs()).sum::<f64>() + 1.0;
    a = &p * a * &p + &q * q.transpose() * shift;
    a = (&a + a.transpose()) * 0.5;
    let eig = SymmetricEigen::new(a);
    let mut order: Vec<usize> = (0..ns).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let mut out = Vec::with_capacity(ns - 1);
    for &k in order.iter().take(ns - 1) {
        let col = eig.eigenvectors.column(k);
        let mut v: Vec<f64> = (0..ns).map(|i| col[i] / root[i]).collect();
        let mean = strip_mean(grid, &v);
        v.iter_mut().for_each(|x| *x -= mean);
        let norm = lp_norm(&smu, &v, 2.0);
        let lead = v
            .iter()
            .copied()
            .find(|x| x.abs() > 1e-12 * norm)
            .unwrap_or(1.0);
        let sign = if lead < 0.0 { -1.0 } else { 1.0 };
        v.iter_mut().for_each(|x| *x *= sign / norm);
        out.push((eig.eigenvalues[k].max(0.0), StripField(v)));
    }
    Ok(out)
}

/// Smallest eigenvalue of the `(S, M)` pencil on mean-zero strip data.
pub fn spectral_gap_beta(op: &NonlocalOperator) -> Result<GapResult> {
    let (beta, mode) = mean_zero_eigenpairs(op)?.swap_remove(0);
    Ok(GapResult {
        beta,
        mode,
        method: GapMethod::SchurEig,
    })
}

fn extend_p(op: &NonlocalOperator, g: &[f64], p: f64, guess: Option<&[f64]>) -> Result<FullField> {
    if p == 2.0 {
        extend_linear(op, g)
    } else {
        extend_plaplace_from(op, g, p, SolverOptions::default(), guess).map(|(u, _)| u)
    }
}

/// Gap quotient of a mean-zero strip field.
pub fn rayleigh_quotient(op: &NonlocalOperator, g: &StripField, p: f64) -> Result<f64> {
    let grid = op.grid();
    g.check(grid)?;
    if !(p > 1.0) {
        return Err(Error::NonConvexExponent(p));
    }
    let gmax = g.sup_norm();
    if gmax == 0.0 {
        return Err(Error::ConstantField);
    }
    let mean = strip_mean(grid, g);
    if mean.abs() > 1e-9 * gmax {
        return Err(Error::NotMeanZero { mean });
    }
    let u = extend_p(op, g, p, None)?;
    Ok(p * energy(op, &u, p) / lp_norm(&grid.strip_mu(), g, p).powf(p))
}

struct QuotientEval {
    value: f64,
    /// Euclidean gradient with respect to strip values.
    grad: Vec<f64>,
    full: FullField,
}

fn quotient_with_gradient(
    op: &NonlocalOperator,
    g: &[f64],
    p: f64,
    guess: Option<&[f64]>,
) -> Result<QuotientEval> {
    let grid = op.grid();
    let smu = grid.strip_mu();
    let full = extend_p(op, g, p, guess)?;
    let num = p * energy(op, &full, p);
    let den = lp_norm(&smu, g, p).powf(p);
    let value = num / den;
    let eg = energy_gradient(op, &full, p);
    let e2 = MODULUS_EPS * MODULUS_EPS;
    let grad = grid
        .strip_indices()
        .iter()
        .zip(g)
        .zip(&smu)
        .map(|((&x, v), m)| {
            let dden = if p < 2.0 {
                p * m * (v * v + e2).powf(0.5 * (p - 2.0)) * v
            } else {
                p * m * v.abs().powf(p - 2.0) * v
            };
            (p * eg[x] - value * dden) / den
        })
        .collect();
    Ok(QuotientEval { value, grad, full })
}

/// Seed of restart `k`, derived from the run seed.
pub fn restart_seed(seed: u64, k: usize) -> u64 {
    seed ^ (k as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Projected gradient descent of the p-quotient over mean-zero, unit-norm strip
/// data. The returned value is an upper bound on the true infimum.
pub fn estimate_beta_p(
    op: &NonlocalOperator,
    p: f64,
    restarts: usize,
    tol: f64,
    seed: u64,
) -> Result<GapResult> {
    if restarts == 0 {
        return Err(Error::invalid("restarts must be at least 1"));
    }
    if !(p > 1.0) {
        return Err(Error::NonConvexExponent(p));
    }
    let grid = op.grid();
    let ns = grid.strip_indices().len();
    if ns < 2 {
        return Err(Error::TooFewStripNodes);
    }
    let smu = grid.strip_mu();
    let total: f64 = smu.iter().sum();
    let normalize = |g: &mut Vec<f64>| {
        let mean = g.iter().zip(&smu).map(|(v, m)| v * m).sum::<f64>() / total;
        g.iter_mut().for_each(|v| *v -= mean);
        let n = lp_norm(&smu, g, p);
        g.iter_mut().for_each(|v| *v /= n);
    };
    let max_iter = 20_000;
    let mut best: Option<(f64, Vec<f64>, bool)> = None;
    for k in 0..restarts {
        let mut rng = ChaCha8Rng::seed_from_u64(restart_seed(seed, k));
        let mut g: Vec<f64> = (0..ns).map(|_| rng.random_range(-1.0..1.0)).collect();
        normalize(&mut g);
        let mut cur = quotient_with_gradient(op, &g, p, None)?;
        let mut step = 1.0 / (cur.value.abs() + 1.0);
        let mut converged = false;
        for _ in 0..max_iter {
            // Riemannian direction in the mu inner product, projected to mean zero
            let mut dir: Vec<f64> = cur.grad.iter().zip(&smu).map(|(d, m)| -d / m).collect();
            let dm = dir.iter().zip(&smu).map(|(v, m)| v * m).sum::<f64>() / total;
            dir.iter_mut().for_each(|v| *v -= dm);
            let gnorm = lp_norm(&smu, &dir, 2.0);
            if gnorm <= tol {
                converged = true;
                break;
            }
            let slope: f64 = dir.iter().zip(&cur.grad).map(|(a, b)| a * b).sum();
            let mut accepted = false;
            while step > 1e-16 {
                let mut trial: Vec<f64> = g.iter().zip(&dir).map(|(a, d)| a + step * d).collect();
                normalize(&mut trial);
                let next = quotient_with_gradient(op, &trial, p, Some(&cur.full))?;
                if next.value <= cur.value + 1e-4 * step * slope {
                    g = trial;
                    cur = next;
                    accepted = true;
                    step *= 2.0;
                    break;
                }
                step *= 0.5;
            }
            if !accepted {
                // no further decrease representable
                converged = gnorm <= tol.sqrt();
                break;
            }
        }
        let better = match &best {
            None => true,
            Some((q, _, _)) => cur.value < *q,
        };
        if better {
            best = Some((cur.value, g, converged));
        } else if converged {
            if let Some(b) = best.as_mut() {
                b.2 = true;
            }
        }
    }
    let (beta, mode, converged) = best.expect("at least one restart");
    if !converged {
        return Err(Error::NoConvergence {
            iterations: max_iter,
            residual: f64::NAN,
            best: None,
        });
    }
    Ok(GapResult {
        beta,
        mode: StripField(mode),
        method: GapMethod::VariationalDescent,
    })
}

/// Quotients of normalised two-bump fields `f_n` whose bumps shrink like `1/n`
/// around the two strip nodes nearest the outer boundary (distance `R` from
/// the interior when `r = R`).
pub fn counterexample_sequence(
    op: &NonlocalOperator,
    n_list: &[usize],
) -> Result<Vec<(usize, f64)>> {
    let grid = op.grid();
    let radius = op
        .spec()
        .family
        .radius()
        .ok_or_else(|| Error::invalid("counterexample needs a compactly supported kernel"))?;
    if (grid.r() - radius).abs() > 1e-12 * radius {
        return Err(Error::invalid(format!(
            "counterexample needs r = R, got r = {} and R = {radius}",
            grid.r()
        )));
    }
    let (x0, x1) = bump_centres(grid)?;
    let strip = grid.strip_indices();
    let smu = grid.strip_mu();
    let mut out = Vec::with_capacity(n_list.len());
    for &n in n_list {
        if n == 0 {
            return Err(Error::invalid("n must be positive"));
        }
        let rad = 1.0 / n as f64;
        if rad < grid.h() / 2.0 {
            return Err(Error::EmptyBump { radius: rad });
        }
        let inside =
            |c: usize| -> Vec<bool> { strip.iter().map(|&y| grid.distance(y, c) < rad).collect() };
        let (b0, b1) = (inside(x0), inside(x1));
        let m0: f64 = b0
            .iter()
            .zip(&smu)
            .filter(|(b, _)| **b)
            .map(|(_, m)| m)
            .sum();
        let m1: f64 = b1
            .iter()
            .zip(&smu)
            .filter(|(b, _)| **b)
            .map(|(_, m)| m)
            .sum();
        if m0 == 0.0 || m1 == 0.0 {
            return Err(Error::EmptyBump { radius: rad });
        }
        let mut f: Vec<f64> = (0..strip.len())
            .map(|k| {
                let plus = if b0[k] { 1.0 / m0 } else { 0.0 };
                let minus = if b1[k] { 1.0 / m1 } else { 0.0 };
                plus - minus
            })
            .collect();
        let mean = strip_mean(grid, &f);
        f.iter_mut().for_each(|v| *v -= mean);
        let norm = lp_norm(&smu, &f, 2.0);
        if norm == 0.0 {
            return Err(Error::ConstantField);
        }
        f.iter_mut().for_each(|v| *v /= norm);
        out.push((n, rayleigh_quotient(op, &StripField(f), 2.0)?));
    }
    Ok(out)
}

/// Two strip nodes of minimal boundary distance, as far apart as possible.
pub fn bump_centres(grid: &Grid) -> Result<(usize, usize)> {
    let strip = grid.strip_indices();
    if strip.len() < 2 {
        return Err(Error::TooFewStripNodes);
    }
    let bd = grid.bdist();
    let dmin = strip.iter().map(|&i| bd[i]).fold(f64::INFINITY, f64::min);
    let candidates: Vec<usize> = strip
        .iter()
        .copied()
        .filter(|&i| bd[i] <= dmin + 1e-12 * dmin.max(1.0))
        .collect();
    let x0 = candidates[0];
    let x1 = candidates
        .iter()
        .copied()
        .skip(1)
        .fold(None, |acc: Option<usize>, c| match acc {
            Some(b) if grid.distance(b, x0) >= grid.distance(c, x0) => Some(b),
            _ => Some(c),
        })
        .ok_or(Error::TooFewStripNodes)?;
    Ok((x0, x1))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecayModel {
    /// `y ~ exp(-rate t)`.
    Exponential,
    /// `y ~ t^(-rate)`.
    Polynomial,
}

impl DecayModel {
    pub fn name(self) -> &'static str {
        match self {
            DecayModel::Exponential => "exponential",
            DecayModel::Polynomial => "polynomial",
        }
    }
}

impl FromStr for DecayModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exponential" | "exp" => Ok(DecayModel::Exponential),
            "polynomial" | "poly" => Ok(DecayModel::Polynomial),
            _ => Err(Error::invalid(format!("unknown decay model `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayFit {
    pub model: DecayModel,
    pub rate: f64,
    pub window: (f64, f64),
    pub r2: f64,
}

/// A diagnostic column, optionally raised to a power (`"d2^2"`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Column {
    pub name: DiagName,
    pub power: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DiagName {
    Mass,
    D1,
    D2,
    Dp,
    Dq,
    Dinf,
    Energy,
}

impl DiagName {
    pub const ALL: [DiagName; 7] = [
        DiagName::Mass,
        DiagName::D1,
        DiagName::D2,
        DiagName::Dp,
        DiagName::Dq,
        DiagName::Dinf,
        DiagName::Energy,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            DiagName::Mass => "mass",
            DiagName::D1 => "d1",
            DiagName::D2 => "d2",
            DiagName::Dp => "dp",
            DiagName::Dq => "dq",
            DiagName::Dinf => "dinf",
            DiagName::Energy => "energy",
        }
    }

    pub fn pick(self, row: &DiagRow) -> f64 {
        match self {
            DiagName::Mass => row.mass,
            DiagName::D1 => row.d1,
            DiagName::D2 => row.d2,
            DiagName::Dp => row.dp,
            DiagName::Dq => row.dq,
            DiagName::Dinf => row.dinf,
            DiagName::Energy => row.energy,
        }
    }
}

impl Column {
    pub fn new(name: DiagName) -> Self {
        Self { name, power: 1.0 }
    }

    pub fn pow(name: DiagName, power: f64) -> Self {
        Self { name, power }
    }

    pub fn value(&self, row: &DiagRow) -> f64 {
        let v = self.name.pick(row);
        if self.power == 1.0 {
            v
        } else {
            v.powf(self.power)
        }
    }
}

impl FromStr for Column {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (base, power) = match s.split_once('^') {
            Some((b, e)) => (
                b,
                e.parse::<f64>()
                    .map_err(|_| Error::invalid(format!("bad column power in `{s}`")))?,
            ),
            None => (s, 1.0),
        };
        let name = DiagName::ALL
            .into_iter()
            .find(|n| n.as_str() == base)
            .ok_or_else(|| Error::invalid(format!("unknown column `{base}`")))?;
        Ok(Self { name, power })
    }
}

impl fmt::Display for Column {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.power == 1.0 {
            f.write_str(self.name.as_str())
        } else {
            write!(f, "{}^{}", self.name.as_str(), self.power)
        }
    }
}

pub fn fit_decay(
    traj: &Trajectory,
    column: Column,
    model: DecayModel,
    window: (f64, f64),
) -> Result<DecayFit> {
    let y: Vec<f64> = traj.diag.iter().map(|r| column.value(r)).collect();
    fit_decay_series(&traj.times, &y, model, window)
}

/// Least-squares slope of `-log y` against `t` (exponential) or `log t` (polynomial),
/// using samples with `t` in the closed window.
pub fn fit_decay_series(
    t: &[f64],
    y: &[f64],
    model: DecayModel,
    window: (f64, f64),
) -> Result<DecayFit> {
    let (lo, hi) = window;
    if !(lo < hi) {
        return Err(Error::invalid(format!("fit window [{lo}, {hi}] is empty")));
    }
    let slack = 1e-12 * hi.abs().max(1.0);
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (&ti, &yi) in t.iter().zip(y) {
        if ti < lo - slack || ti > hi + slack {
            continue;
        }
        if !(yi > 0.0) {
            return Err(Error::NonPositiveData);
        }
        let x = match model {
            DecayModel::Exponential => ti,
            DecayModel::Polynomial => {
                if !(ti > 0.0) {
                    return Err(Error::NonPositiveData);
                }
                ti.ln()
            }
        };
        xs.push(x);
        ys.push(-yi.ln());
    }
    if xs.len() < 10 {
        return Err(Error::WindowTooSmall { count: xs.len() });
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_tot: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let ss_res: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    let r2 = if ss_tot > 0.0 {
        (1.0 - ss_res / ss_tot).clamp(0.0, 1.0)
    } else {
        1.0
    };
    Ok(DecayFit {
        model,
        rate: slope,
        window,
        r2,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpotCheck {
    pub passed: bool,
    /// Most negative product seen (0 if none negative).
    pub worst: f64,
    pub samples: usize,
}

/// Sign check of `(a-b)(phi_q(a)-phi_q(b)) >= 0` and
/// `phi_p(a-b)(phi_q(a)-phi_q(b)) >= 0` on random pairs.
pub fn monotonicity_spot_check(p: f64, q: f64, samples: usize, seed: u64) -> Result<SpotCheck> {
    if !(p >= 1.0 && q >= 1.0) {
        return Err(Error::invalid(format!(
            "need p, q >= 1, got p = {p}, q = {q}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..samples {
        let a: f64 = rng.random_range(-10.0..10.0);
        let b: f64 = rng.random_range(-10.0..10.0);
        let (first, second) = monotone_products(a, b, p, q);
        worst = worst.min(first).min(second);
    }
    Ok(SpotCheck {
        passed: worst >= -1e-12,
        worst,
        samples,
    })
}

pub fn monotone_products(a: f64, b: f64, p: f64, q: f64) -> (f64, f64) {
    let dq = phi_exact(a, q) - phi_exact(b, q);
    ((a - b) * dq, phi_exact(a - b, p) * dq)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::geometry::DomainBox;
    use crate::kernel::{EdgeMode, KernelSpec};
    use std::sync::Arc;

    fn grid_op(dim: usize, h: f64, r: f64, radius: f64) -> NonlocalOperator {
        let g = Arc::new(Grid::build(DomainBox::unit(dim).unwrap(), h, r).unwrap());
        NonlocalOperator::assemble(
            g,
            KernelSpec::tent(radius, dim).unwrap(),
            EdgeMode::ExcludeStripStrip,
        )
        .unwrap()
    }

    #[test]
    fn mass_and_distances() {
        let op = fixtures::toy3(EdgeMode::ExcludeStripStrip);
        let g = op.grid();
        assert_eq!(mass(g, &[1.0, -1.0]), 0.0);
        assert!((lq_distance_to_mean(g, &[1.0, -1.0], 2.0) - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(mass(g, &[1.0, 0.0]), 1.0);
        assert_eq!(lq_distance_to_mean(g, &[1.0, 0.0], 1.0), 1.0);
        assert_eq!(lq_distance_to_mean(g, &[1.0, 0.0], f64::INFINITY), 0.5);
        for q in [1.0, 2.0, 3.5, f64::INFINITY] {
            assert_eq!(lq_distance_to_mean(g, &[3.0, 3.0], q), 0.0);
        }
        assert_eq!(mass(g, &[3.0, 3.0]), 6.0);
    }

    #[test]
    fn toy3_schur_and_gap() {
        let op = fixtures::toy3(EdgeMode::ExcludeStripStrip);
        let s = schur_complement(&op).unwrap();
        assert!((s - DMatrix::from_row_slice(2, 2, &[0.5, -0.5, -0.5, 0.5])).amax() < 1e-15);
        let gap = spectral_gap_beta(&op).unwrap();
        assert!((gap.beta - 1.0).abs() < 1e-12);
        let r = 0.5f64.sqrt();
        assert!((gap.mode[0] - r).abs() < 1e-12 && (gap.mode[1] + r).abs() < 1e-12);
        assert_eq!(gap.method, GapMethod::SchurEig);
    }

    #[test]
    fn strip_pair_gap_uses_half_weighted_energy() {
        let op = fixtures::strip_pair(EdgeMode::Full);
        let gap = spectral_gap_beta(&op).unwrap();
        // Q(a,-a) = 1/2 * (2 * (2a)^2) / (2 a^2) = 2
        assert!((gap.beta - 2.0).abs() < 1e-12);
        assert!(
            (rayleigh_quotient(&op, &StripField(vec![1.0, -1.0]), 2.0).unwrap() - 2.0).abs()
                < 1e-15
        );
    }

    #[test]
    fn quotient_examples() {
        let op = fixtures::toy3(EdgeMode::ExcludeStripStrip);
        let g = StripField(vec![1.0, -1.0]);
        assert!((rayleigh_quotient(&op, &g, 2.0).unwrap() - 1.0).abs() < 1e-15);
        assert!((rayleigh_quotient(&op, &g, 4.0).unwrap() - 1.0).abs() < 1e-12);
        let scaled = StripField(vec![-3.5, 3.5]);
        assert!((rayleigh_quotient(&op, &scaled, 2.0).unwrap() - 1.0).abs() < 1e-14);
        assert!(matches!(
            rayleigh_quotient(&op, &StripField(vec![1.0, 0.0]), 2.0),
            Err(Error::NotMeanZero { .. })
        ));
        assert!(matches!(
            rayleigh_quotient(&op, &StripField(vec![0.0, 0.0]), 2.0),
            Err(Error::ConstantField)
        ));
    }

    #[test]
    fn gap_result_invariants() {
        let op = grid_op(1, 1.0 / 32.0, 0.125, 0.25);
        let gap = spectral_gap_beta(&op).unwrap();
        let g = op.grid();
        assert!(strip_mean(g, &gap.mode).abs() < 1e-12);
        assert!((lp_norm(&g.strip_mu(), &gap.mode, 2.0) - 1.0).abs() < 1e-12);
        for c in [1.0, -1.0, 2.0] {
            let m = StripField(gap.mode.iter().map(|v| c * v).collect());
            assert!((rayleigh_quotient(&op, &m, 2.0).unwrap() - gap.beta).abs() < 1e-8);
        }
    }

    #[test]
    fn variational_matches_eigensolve() {
        let op = fixtures::toy3(EdgeMode::ExcludeStripStrip);
        let est = estimate_beta_p(&op, 2.0, 3, 1e-9, 7).unwrap();
        assert!((est.beta - 1.0).abs() < 1e-6);
        let est4 = estimate_beta_p(&op, 4.0, 3, 1e-9, 7).unwrap();
        assert!(est4.beta <= 1.0 + 1e-6);
        assert_eq!(est4.method, GapMethod::VariationalDescent);
        assert!(matches!(
            estimate_beta_p(&op, 2.0, 0, 1e-9, 7),
            Err(Error::InvalidArgument(_))
        ));

        for (dim, h) in [(1, 1.0 / 32.0), (2, 1.0 / 10.0)] {
            let op = grid_op(dim, h, 0.2, 0.4);
            let exact = spectral_gap_beta(&op).unwrap().beta;
            let est = estimate_beta_p(&op, 2.0, 2, 1e-8, 1).unwrap().beta;
            assert!((exact - est).abs() < 1e-6, "dim {dim}: {exact} vs {est}");
        }
    }

    #[test]
    fn gap_positive_when_strip_narrower_than_kernel() {
        for (dim, h, radius) in [
            (1, 1.0 / 32.0, 0.25),
            (1, 1.0 / 64.0, 0.3),
            (2, 1.0 / 16.0, 0.25),
            (2, 1.0 / 20.0, 0.3),
        ] {
            let op = grid_op(dim, h, radius / 2.0, radius);
            assert!(op.d_omega_s().iter().all(|d| *d > 0.0));
            assert!(spectral_gap_beta(&op).unwrap().beta > 1e-8);
        }
    }

    #[test]
    fn counterexample_decreases() {
        let op = grid_op(1, 1.0 / 128.0, 0.25, 0.25);
        let seq = counterexample_sequence(&op, &[4, 8, 16, 32]).unwrap();
        assert!(seq.windows(2).all(|w| w[1].1 < w[0].1));
        assert!(seq[3].1 / seq[0].1 <= 0.2);
        assert!(matches!(
            counterexample_sequence(&op, &[1000]),
            Err(Error::EmptyBump { .. })
        ));
        let narrow = grid_op(1, 1.0 / 128.0, 0.125, 0.25);
        assert!(counterexample_sequence(&narrow, &[4]).is_err());
    }

    #[test]
    fn counterexample_whole_strip_bump() {
        // radius 1/2 swallows each half of the strip
        let op = grid_op(1, 1.0 / 16.0, 0.25, 0.25);
        let (x0, x1) = bump_centres(op.grid()).unwrap();
        assert_eq!((x0, x1), (0, 15));
        let seq = counterexample_sequence(&op, &[2]).unwrap();
        let g = op.grid();
        let n = g.strip_indices().len();
        let mut f: Vec<f64> = (0..n)
            .map(|k| {
                let y = g.strip_indices()[k];
                let a = if g.distance(y, x0) < 0.5 { 1.0 } else { 0.0 };
                let b = if g.distance(y, x1) < 0.5 { 1.0 } else { 0.0 };
                a - b
            })
            .collect();
        let norm = lp_norm(&g.strip_mu(), &f, 2.0);
        f.iter_mut().for_each(|v| *v /= norm);
        let q = rayleigh_quotient(&op, &StripField(f), 2.0).unwrap();
        assert!((seq[0].1 - q).abs() < 1e-12);
    }

    #[test]
    fn decay_fits() {
        let t: Vec<f64> = (0..=50).map(|k| k as f64 * 0.1).collect();
        let y: Vec<f64> = t.iter().map(|t| (-2.0 * t).exp()).collect();
        let fit = fit_decay_series(&t, &y, DecayModel::Exponential, (0.0, 5.0)).unwrap();
        assert!((fit.rate - 2.0).abs() < 1e-9);
        assert!((fit.r2 - 1.0).abs() < 1e-12);
        let t: Vec<f64> = (1..=100).map(|k| k as f64).collect();
        let y: Vec<f64> = t.iter().map(|t| 1.0 / t).collect();
        let fit = fit_decay_series(&t, &y, DecayModel::Polynomial, (1.0, 100.0)).unwrap();
        assert!((fit.rate - 1.0).abs() < 1e-9);
        assert!(matches!(
            fit_decay_series(&t, &y, DecayModel::Polynomial, (1.0, 5.0)),
            Err(Error::WindowTooSmall { count: 5 })
        ));
        let mut bad = y.clone();
        bad[3] = 0.0;
        assert!(matches!(
            fit_decay_series(&t, &bad, DecayModel::Exponential, (1.0, 100.0)),
            Err(Error::NonPositiveData)
        ));
    }

    #[test]
    fn toy3_trajectory_rate() {
        use crate::evolution::{evolve, Integrator, ProblemSpec, Variant};
        let op = fixtures::toy3(EdgeMode::ExcludeStripStrip);
        let spec = ProblemSpec::new(Variant::LinearP, 2.0).unwrap();
        let tr = evolve(
            &op,
            &spec,
            &StripField(vec![1.0, -1.0]),
            1.0,
            1e-3,
            Integrator::Explicit,
        )
        .unwrap();
        let fit = fit_decay(
            &tr,
            "d2^2".parse().unwrap(),
            DecayModel::Exponential,
            (0.0, 1.0),
        )
        .unwrap();
        assert!((fit.rate - 2.0).abs() < 0.02 * 2.0);
    }

    #[test]
    fn column_parsing() {
        let c: Column = "d2^2".parse().unwrap();
        assert_eq!(c, Column::pow(DiagName::D2, 2.0));
        assert_eq!(c.to_string(), "d2^2");
        assert_eq!(
            "dinf".parse::<Column>().unwrap(),
            Column::new(DiagName::Dinf)
        );
        assert!("d7".parse::<Column>().is_err());
    }

    #[test]
    fn monotonicity() {
        assert_eq!(monotone_products(1.5, 1.5, 3.0, 3.0), (0.0, 0.0));
        assert_eq!(monotone_products(2.0, 1.0, 3.0, 3.0).0, 3.0);
        for p in [1.5, 2.0, 3.0, 4.0] {
            for q in [1.5, 2.0, 3.0, 4.0] {
                assert!(monotonicity_spot_check(p, q, 10_000, 17).unwrap().passed);
            }
        }
        assert!(monotonicity_spot_check(0.5, 2.0, 10, 1).is_err());
    }
}
