//! Time stepping of the strip dynamics.
//!
//! At every instant the interior is slaved to the strip through the extension
//! operator; the strip then moves by
//!
//! ```text
//! du/dt (x) = sum_{y active} W[x][y] phi_p(u_hat[y] - u[x]),   x in strip
//! ```
//!
//! where the active neighbours of a strip node are the interior nodes, plus
//! the other strip nodes for the starred variants.

use std::fmt;
use std::str::FromStr;

use log::warn;

use crate::analysis::{lq_distance_to_mean, mass};
use crate::elliptic::{
    energy, extend_linear, extend_plaplace_from, phi_exact, FullField, Problem, Proximal,
    SolverOptions, StripField,
};
use crate::error::{Error, Result};
use crate::kernel::{EdgeMode, NonlocalOperator};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    LinearP,
    LinearPStar,
    PLaplaceP,
    PLaplacePStar,
    SingularP3,
}

impl Variant {
    pub const ALL: [Variant; 5] = [
        Variant::LinearP,
        Variant::LinearPStar,
        Variant::PLaplaceP,
        Variant::PLaplacePStar,
        Variant::SingularP3,
    ];

    pub fn edge_mode(self) -> EdgeMode {
        match self {
            Variant::LinearPStar | Variant::PLaplacePStar => EdgeMode::Full,
            _ => EdgeMode::ExcludeStripStrip,
        }
    }

    pub fn is_linear(self) -> bool {
        matches!(self, Variant::LinearP | Variant::LinearPStar)
    }

    pub fn name(self) -> &'static str {
        match self {
            Variant::LinearP => "linear-p",
            Variant::LinearPStar => "linear-p-star",
            Variant::PLaplaceP => "plaplace-p",
            Variant::PLaplacePStar => "plaplace-p-star",
            Variant::SingularP3 => "singular-p3",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown variant `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProblemSpec {
    pub variant: Variant,
    p: f64,
    /// Exponent of the `dq` diagnostic column.
    pub q: f64,
    pub solver: SolverOptions,
}

impl ProblemSpec {
    /// Linear variants ignore `p` and use 2.
    pub fn new(variant: Variant, p: f64) -> Result<Self> {
        let p = if variant.is_linear() { 2.0 } else { p };
        if !(p > 1.0 && p.is_finite()) {
            return Err(Error::NonConvexExponent(p));
        }
        Ok(Self {
            variant,
            p,
            q: 2.0,
            solver: SolverOptions::default(),
        })
    }

    pub fn with_q(mut self, q: f64) -> Self {
        self.q = q;
        self
    }

    pub fn with_solver(mut self, solver: SolverOptions) -> Self {
        self.solver = solver;
        self
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn edge_mode(&self) -> EdgeMode {
        self.variant.edge_mode()
    }

    /// Checks the operator has the edge set and kernel family this variant needs.
    pub fn check(&self, op: &NonlocalOperator) -> Result<()> {
        if op.edge_mode() != self.edge_mode() {
            return Err(Error::invalid(format!(
                "variant {} needs edge mode {:?}, operator has {:?}",
                self.variant,
                self.edge_mode(),
                op.edge_mode()
            )));
        }
        let singular = op.spec().family.is_singular();
        match self.variant {
            Variant::SingularP3 if !singular => {
                Err(Error::invalid("singular-p3 needs a singular kernel"))
            }
            Variant::LinearP | Variant::LinearPStar if singular => {
                Err(Error::invalid("linear variants need a smooth kernel"))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiagRow {
    pub mass: f64,
    pub d1: f64,
    pub d2: f64,
    pub dp: f64,
    pub dq: f64,
    pub dinf: f64,
    pub energy: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<StripField>,
    pub diag: Vec<DiagRow>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn last(&self) -> Option<&StripField> {
        self.states.last()
    }

    fn push(&mut self, t: f64, state: StripField, row: DiagRow) {
        self.times.push(t);
        self.states.push(state);
        self.diag.push(row);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Integrator {
    Explicit,
    Implicit,
}

impl FromStr for Integrator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "explicit" => Ok(Integrator::Explicit),
            "implicit" => Ok(Integrator::Implicit),
            _ => Err(Error::invalid(format!("unknown integrator `{s}`"))),
        }
    }
}

/// Interior-slaved full field for strip values `u`.
pub(crate) fn extension(
    op: &NonlocalOperator,
    spec: &ProblemSpec,
    u: &[f64],
    guess: Option<&[f64]>,
) -> Result<FullField> {
    if spec.p == 2.0 {
        extend_linear(op, u)
    } else {
        extend_plaplace_from(op, u, spec.p, spec.solver, guess).map(|(f, _)| f)
    }
}

fn rhs_from_extension(op: &NonlocalOperator, p: f64, full: &[f64]) -> StripField {
    let grid = op.grid();
    StripField(
        grid.strip_indices()
            .iter()
            .map(|&x| {
                op.active_row(x)
                    .map(|(y, w)| w * phi_exact(full[y] - full[x], p))
                    .sum()
            })
            .collect(),
    )
}

pub fn rhs(op: &NonlocalOperator, spec: &ProblemSpec, u: &StripField) -> Result<StripField> {
    spec.check(op)?;
    let full = extension(op, spec, u, None)?;
    Ok(rhs_from_extension(op, spec.p, &full))
}

/// Largest `dt` of the forward-Euler advisory, `1 / max_x d(x)` over strip rows.
pub fn stability_limit(op: &NonlocalOperator) -> f64 {
    let dmax = op
        .grid()
        .strip_indices()
        .iter()
        .map(|&x| op.d_full()[x])
        .fold(0.0, f64::max);
    1.0 / dmax
}

pub fn step_explicit(
    op: &NonlocalOperator,
    spec: &ProblemSpec,
    u: &StripField,
    dt: f64,
) -> Result<StripField> {
    spec.check(op)?;
    check_dt(op, dt)?;
    let full = extension(op, spec, u, None)?;
    Ok(explicit_update(op, spec, u, &full, dt))
}

fn explicit_update(
    op: &NonlocalOperator,
    spec: &ProblemSpec,
    u: &[f64],
    full: &[f64],
    dt: f64,
) -> StripField {
    let f = rhs_from_extension(op, spec.p, full);
    StripField(u.iter().zip(f.iter()).map(|(a, b)| a + dt * b).collect())
}

fn check_dt(op: &NonlocalOperator, dt: f64) -> Result<()> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::invalid(format!("dt must be > 0, got {dt}")));
    }
    let limit = stability_limit(op);
    if dt > limit {
        warn!("dt = {dt} exceeds the explicit stability advisory {limit:.4e}");
    }
    Ok(())
}

/// One backward-Euler step: the strip part of the minimiser of
/// `dt * E_p(v) + 1/2 sum_strip mu (v - u)^2` over all nodal values.
pub fn step_implicit(
    op: &NonlocalOperator,
    spec: &ProblemSpec,
    u: &StripField,
    dt: f64,
) -> Result<StripField> {
    spec.check(op)?;
    let full = implicit_full(op, spec, u, dt, None)?;
    Ok(full.strip_part(op.grid()))
}

fn implicit_full(
    op: &NonlocalOperator,
    spec: &ProblemSpec,
    u: &[f64],
    dt: f64,
    guess: Option<&[f64]>,
) -> Result<FullField> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::invalid(format!("dt must be > 0, got {dt}")));
    }
    let grid = op.grid();
    StripField(u.to_vec()).check(grid)?;
    let mut v = match guess {
        Some(g) => FullField(g.to_vec()),
        None => extension(op, spec, u, None)?,
    };
    let free: Vec<usize> = (0..grid.len()).collect();
    let problem = Problem {
        op,
        p: spec.p,
        free: &free,
        prox: Some(Proximal {
            center: u,
            inv_dt: 1.0 / dt,
        }),
    };
    let umax = u.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    problem.minimize(&mut v, spec.solver.tol * (1.0 + umax), spec.solver.max_iter)?;
    Ok(v)
}

fn diag_row(op: &NonlocalOperator, spec: &ProblemSpec, u: &[f64], full: &[f64]) -> DiagRow {
    let g = op.grid();
    DiagRow {
        mass: mass(g, u),
        d1: lq_distance_to_mean(g, u, 1.0),
        d2: lq_distance_to_mean(g, u, 2.0),
        dp: lq_distance_to_mean(g, u, spec.p),
        dq: lq_distance_to_mean(g, u, spec.q),
        dinf: lq_distance_to_mean(g, u, f64::INFINITY),
        energy: energy(op, full, spec.p),
    }
}

fn step_count(t_end: f64, dt: f64) -> Result<usize> {
    if !(t_end > 0.0 && dt > 0.0) {
        return Err(Error::invalid("t_end and dt must be positive"));
    }
    let n = (t_end / dt).round();
    if n < 1.0 || (n * dt - t_end).abs() > 1e-9 * t_end.max(1.0) {
        return Err(Error::invalid(format!(
            "dt = {dt} does not divide t_end = {t_end}"
        )));
    }
    Ok(n as usize)
}

pub fn evolve(
    op: &NonlocalOperator,
    spec: &ProblemSpec,
    u0: &StripField,
    t_end: f64,
    dt: f64,
    integrator: Integrator,
) -> Result<Trajectory> {
    spec.check(op)?;
    u0.check(op.grid())?;
    let steps = step_count(t_end, dt)?;
    if integrator == Integrator::Explicit {
        check_dt(op, dt)?;
    }
    let mut traj = Trajectory::default();
    let mut u = u0.clone();
    let mut full = extension(op, spec, &u, None)?;
    traj.push(0.0, u.clone(), diag_row(op, spec, &u, &full));
    for k in 1..=steps {
        let advanced = match integrator {
            Integrator::Explicit => {
                let next = explicit_update(op, spec, &u, &full, dt);
                extension(op, spec, &next, Some(&full)).map(|f| (next, f))
            }
            Integrator::Implicit => {
                implicit_full(op, spec, &u, dt, Some(&full)).map(|f| (f.strip_part(op.grid()), f))
            }
        };
        match advanced {
            Ok((next, next_full)) => {
                u = next;
                full = next_full;
            }
            Err(e) => {
                return Err(Error::Aborted {
                    partial: Box::new(traj),
                    source: Box::new(e),
                })
            }
        }
        traj.push(k as f64 * dt, u.clone(), diag_row(op, spec, &u, &full));
    }
    Ok(traj)
}

/// Fixed-point iteration of the integral form
/// `u(t) = u0 + int_0^t rhs(u(s)) ds` on `nt` equispaced nodes of `[0, window]`,
/// with composite-trapezoid quadrature. Linear variants only.
pub fn picard_solve(
    op: &NonlocalOperator,
    spec: &ProblemSpec,
    u0: &StripField,
    window: f64,
    nt: usize,
    tol: f64,
    max_iter: usize,
) -> Result<Trajectory> {
    spec.check(op)?;
    if !spec.variant.is_linear() {
        return Err(Error::invalid(
            "Picard iteration is defined for linear variants only",
        ));
    }
    if !(window > 0.0 && window.is_finite()) {
        return Err(Error::invalid(format!("window must be > 0, got {window}")));
    }
    if nt < 11 {
        return Err(Error::invalid(format!(
            "need at least 11 time nodes, got {nt}"
        )));
    }
    let grid = op.grid();
    u0.check(grid)?;
    let smu = grid.strip_mu();
    let norm = |a: &[f64], b: &[f64]| {
        a.iter()
            .zip(b)
            .zip(&smu)
            .map(|((x, y), m)| m * (x - y).powi(2))
            .sum::<f64>()
            .sqrt()
    };
    let zero = vec![0.0; u0.len()];
    let threshold = tol * (1.0 + norm(u0, &zero));
    let step = window / (nt - 1) as f64;
    let mut slices: Vec<Vec<f64>> = vec![u0.to_vec(); nt];
    let mut last_change = f64::INFINITY;
    for _ in 0..max_iter {
        let f: Vec<Vec<f64>> = slices
            .iter()
            .map(|s| {
                let full = extend_linear(op, s)?;
                Ok(rhs_from_extension(op, 2.0, &full).into_vec())
            })
            .collect::<Result<_>>()?;
        let mut next = Vec::with_capacity(nt);
        next.push(u0.to_vec());
        for k in 1..nt {
            let prev: &Vec<f64> = &next[k - 1];
            let v: Vec<f64> = (0..u0.len())
                .map(|i| prev[i] + 0.5 * step * (f[k - 1][i] + f[k][i]))
                .collect();
            next.push(v);
        }
        last_change = next
            .iter()
            .zip(&slices)
            .map(|(a, b)| norm(a, b))
            .fold(0.0, f64::max);
        slices = next;
        if !last_change.is_finite() {
            break;
        }
        if last_change <= threshold {
            let mut traj = Trajectory::default();
            for (k, s) in slices.into_iter().enumerate() {
                let full = extend_linear(op, &s)?;
                let row = diag_row(op, spec, &s, &full);
                traj.push(k as f64 * step, StripField(s), row);
            }
            return Ok(traj);
        }
    }
    Err(Error::NoContraction {
        iterations: max_iter,
        last_change,
    })
}
