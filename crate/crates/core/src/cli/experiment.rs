//! Building operators and initial data from a config, running and checking experiments.

use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::{ExperimentConfig, InitialPreset, Resolved};
use super::csv::{trajectory_csv, write_atomic};
use super::svg::{emit_svg, PlotStyle, Series};
use crate::analysis::{
    bump_centres, fit_decay, mean_zero_eigenpairs, schur_complement, spectral_gap_beta, DecayFit,
};
use crate::elliptic::{SolverOptions, StripField};
use crate::error::{Error, Result};
use crate::evolution::{
    evolve, picard_solve, rhs, stability_limit, Integrator, ProblemSpec, Trajectory,
};
use crate::fixtures;
use crate::geometry::{DomainBox, Grid, GridOptions};
use crate::kernel::{EdgeMode, KernelSpec, NonlocalOperator};

/// A validated config with its operator and problem assembled.
#[derive(Debug)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub resolved: Resolved,
    pub op: NonlocalOperator,
    pub spec: ProblemSpec,
}

pub fn build_grid(cfg: &ExperimentConfig) -> Result<Grid> {
    let domain = DomainBox::new(&cfg.lo, &cfg.hi)?;
    Grid::build_with(
        domain,
        cfg.h,
        cfg.r,
        GridOptions {
            allow_empty_interior: cfg.allow_empty_interior,
        },
    )
}

pub fn build_kernel(cfg: &ExperimentConfig) -> Result<KernelSpec> {
    match cfg.kernel.as_str() {
        "tent" => KernelSpec::tent(cfg.kernel_radius, cfg.dim),
        "bump" => KernelSpec::bump(cfg.kernel_radius, cfg.dim),
        "singular" => KernelSpec::singular(cfg.kernel_s, cfg.p),
        other => Err(Error::config("kernel", format!("unknown family `{other}`"))),
    }
}

pub fn build_operator(cfg: &ExperimentConfig, mode: EdgeMode) -> Result<NonlocalOperator> {
    if cfg.is_toy3() {
        return Ok(fixtures::toy3(mode));
    }
    let grid = Arc::new(build_grid(cfg)?);
    NonlocalOperator::assemble(grid, build_kernel(cfg)?, mode)
}

impl Experiment {
    pub fn new(cfg: &ExperimentConfig) -> Result<Self> {
        let resolved = cfg.validate()?;
        let spec = ProblemSpec::new(resolved.variant, cfg.p)?
            .with_q(cfg.q)
            .with_solver(SolverOptions {
                tol: cfg.tol,
                max_iter: cfg.max_iter,
            });
        let op = build_operator(cfg, spec.edge_mode())?;
        spec.check(&op)?;
        Ok(Self {
            config: cfg.clone(),
            resolved,
            op,
            spec,
        })
    }

    pub fn initial_data(&self) -> Result<StripField> {
        initial_data(&self.op, self.resolved.initial, self.config.seed)
    }
}

/// Compact bump of height one and radius `rho` around node `c`, on strip nodes.
fn bump_at(grid: &Grid, c: usize, rho: f64) -> Vec<f64> {
    grid.strip_indices()
        .iter()
        .map(|&y| {
            let d = grid.distance(y, c) / rho;
            (1.0 - d * d).max(0.0)
        })
        .collect()
}

/// Strip values for an initial-condition preset. `random` draws i.i.d.
/// uniform values on `[-1, 1]` from a ChaCha8 stream seeded with the preset's
/// own seed if it has one, else with `seed`.
pub fn initial_data(op: &NonlocalOperator, preset: InitialPreset, seed: u64) -> Result<StripField> {
    let grid = op.grid();
    let ns = grid.strip_indices().len();
    let rho = grid.r().max(grid.h());
    let field = match preset {
        InitialPreset::Constant(c) => vec![c; ns],
        InitialPreset::Random(own) => {
            let mut rng = ChaCha8Rng::seed_from_u64(own.unwrap_or(seed));
            (0..ns).map(|_| rng.random_range(-1.0..=1.0)).collect()
        }
        InitialPreset::Bump => {
            let (x0, _) = bump_centres(grid)?;
            bump_at(grid, x0, rho)
        }
        InitialPreset::TwoBump => {
            let (x0, x1) = bump_centres(grid)?;
            let rho = rho.min(0.5 * grid.distance(x0, x1));
            bump_at(grid, x0, rho)
                .into_iter()
                .zip(bump_at(grid, x1, rho))
                .map(|(a, b)| a - b)
                .collect()
        }
        InitialPreset::Eigenmode(k) => {
            let pairs = mean_zero_eigenpairs(op)?;
            if k > pairs.len() {
                return Err(Error::config(
                    "initial",
                    format!("eigenmode({k}) requested, only {} available", pairs.len()),
                ));
            }
            pairs
                .into_iter()
                .nth(k - 1)
                .map(|(_, v)| v.0)
                .unwrap_or_default()
        }
    };
    Ok(StripField(field))
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub trajectory: Trajectory,
    pub mass_drift: f64,
    pub fit: Option<DecayFit>,
}

impl RunSummary {
    /// One `key=value` line for logs and scripts.
    pub fn line(&self) -> String {
        let last = self.trajectory.diag.last();
        let mut s = format!(
            "steps={},t_end={:.6e},mass_drift={:.3e}",
            self.trajectory.len().saturating_sub(1),
            self.trajectory.times.last().copied().unwrap_or(0.0),
            self.mass_drift
        );
        if let Some(d) = last {
            s.push_str(&format!(
                ",d1={:.6e},d2={:.6e},dp={:.6e},dq={:.6e},dinf={:.6e}",
                d.d1, d.d2, d.dp, d.dq, d.dinf
            ));
        }
        if let Some(f) = &self.fit {
            s.push_str(&format!(
                ",fit={},rate={:.6e},r2={:.6}",
                f.model.name(),
                f.rate,
                f.r2
            ));
        }
        s
    }
}

/// Plot of the `d2` and `dinf` columns; logarithmic when every value is positive.
pub fn trajectory_svg(traj: &Trajectory, title: &str) -> Result<String> {
    let series = vec![
        Series {
            label: "d2".into(),
            x: traj.times.clone(),
            y: traj.diag.iter().map(|d| d.d2).collect(),
        },
        Series {
            label: "dinf".into(),
            x: traj.times.clone(),
            y: traj.diag.iter().map(|d| d.dinf).collect(),
        },
    ];
    let log_y = series.iter().all(|s| s.y.iter().all(|&v| v > 0.0));
    let style = PlotStyle {
        title: title.into(),
        y_label: "distance to mean".into(),
        log_y,
        ..Default::default()
    };
    emit_svg(&series, &style)
}

/// Evolves the configured problem and writes the CSV and SVG artefacts named in the config.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunSummary> {
    let exp = Experiment::new(cfg)?;
    let u0 = exp.initial_data()?;
    let traj = evolve(
        &exp.op,
        &exp.spec,
        &u0,
        cfg.t_end,
        cfg.dt,
        exp.resolved.integrator,
    )?;
    let m0 = traj.diag[0].mass;
    let mass_drift = traj
        .diag
        .iter()
        .map(|d| (d.mass - m0).abs())
        .fold(0.0, f64::max);
    let fit = match exp.resolved.fit {
        Some((column, model, window)) => Some(fit_decay(&traj, column, model, window)?),
        None => None,
    };
    if let Some(path) = &cfg.out {
        write_atomic(path, &trajectory_csv(&traj))?;
    }
    if let Some(path) = &cfg.svg {
        let title = format!("{} ({})", exp.spec.variant, cfg.integrator);
        write_atomic(path, &trajectory_svg(&traj, &title)?)?;
    }
    Ok(RunSummary {
        trajectory: traj,
        mass_drift,
        fit,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CheckStatus {
    Pass,
    Fail,
    Warn,
    Info,
}

impl CheckStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            CheckStatus::Pass => "PASS",
            CheckStatus::Fail => "FAIL",
            CheckStatus::Warn => "WARN",
            CheckStatus::Info => "INFO",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub status: CheckStatus,
    pub detail: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub checks: Vec<Check>,
}

impl ValidationReport {
    fn push(&mut self, name: &'static str, status: CheckStatus, detail: impl Into<String>) {
        self.checks.push(Check {
            name,
            status,
            detail: detail.into(),
        });
    }

    fn verdict(&mut self, name: &'static str, ok: bool, detail: impl Into<String>) {
        let status = if ok {
            CheckStatus::Pass
        } else {
            CheckStatus::Fail
        };
        self.push(name, status, detail);
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.status != CheckStatus::Fail)
    }

    pub fn get(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            writeln!(f, "{} {}: {}", c.status.as_str(), c.name, c.detail)?;
        }
        write!(
            f,
            "overall: {}",
            if self.passed() { "pass" } else { "fail" }
        )
    }
}

fn strip_l2(grid: &Grid, a: &[f64], b: &[f64]) -> f64 {
    grid.strip_mu()
        .iter()
        .zip(a.iter().zip(b))
        .map(|(m, (x, y))| m * (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Horizon of the cross-check runs.
const CHECK_HORIZON: f64 = 0.1;

/// Cross-checks on the configured problem over a short horizon. Problems found
/// are reported as failed checks, never as errors.
pub fn validate(cfg: &ExperimentConfig) -> ValidationReport {
    let mut report = ValidationReport::default();
    let exp = match Experiment::new(cfg) {
        Ok(e) => e,
        Err(e) => {
            report.push("config", CheckStatus::Fail, e.to_string());
            return report;
        }
    };
    report.push(
        "config",
        CheckStatus::Pass,
        format!("variant {}", exp.spec.variant),
    );
    let u0 = match exp.initial_data() {
        Ok(u) => u,
        Err(e) => {
            report.push("initial-data", CheckStatus::Fail, e.to_string());
            return report;
        }
    };
    let (op, spec) = (&exp.op, &exp.spec);
    let grid = op.grid();

    let limit = stability_limit(op);
    if cfg.dt > limit {
        report.push(
            "stability",
            CheckStatus::Warn,
            format!(
                "stability advisory: dt = {:.3e} exceeds 1/max d = {limit:.3e}",
                cfg.dt
            ),
        );
    } else {
        report.push(
            "stability",
            CheckStatus::Pass,
            format!("dt = {:.3e} <= {limit:.3e}", cfg.dt),
        );
    }

    let horizon = CHECK_HORIZON.min(cfg.t_end);
    let steps = (horizon / cfg.dt.min(0.5 * limit)).ceil().max(1.0);
    let dt = horizon / steps;
    let explicit = evolve(op, spec, &u0, horizon, dt, Integrator::Explicit);
    match &explicit {
        Ok(traj) => {
            let m0 = traj.diag[0].mass;
            let drift = traj
                .diag
                .iter()
                .map(|d| (d.mass - m0).abs())
                .fold(0.0, f64::max);
            let bound = 1e-10 * (1.0 + m0.abs());
            report.verdict(
                "mass-drift",
                drift <= bound,
                format!("{drift:.3e} <= {bound:.1e}"),
            );
        }
        Err(e) => report.push("mass-drift", CheckStatus::Fail, e.to_string()),
    }

    if spec.p() == 2.0 {
        if let Ok(traj) = &explicit {
            integrator_agreement(&mut report, op, spec, &u0, traj, horizon, dt, limit);
        }
        match schur_agreement(op, spec, &u0) {
            Ok(rel) => report.verdict(
                "schur-path",
                rel <= 1e-10,
                format!("relative difference {rel:.3e}"),
            ),
            Err(e) => report.push("schur-path", CheckStatus::Fail, e.to_string()),
        }
    } else {
        report.push(
            "integrators",
            CheckStatus::Info,
            "skipped: Picard needs a linear problem",
        );
    }

    let radius = op.spec().family.radius();
    match spectral_gap_beta(op) {
        Ok(gap) => match radius {
            Some(rad) if !cfg.is_toy3() && (grid.r() - rad).abs() <= 1e-12 * rad => report.push(
                "gap",
                CheckStatus::Info,
                format!("r = R, near-zero gap expected; beta = {:.6e}", gap.beta),
            ),
            _ => report.verdict("gap", gap.beta > 1e-10, format!("beta = {:.6e}", gap.beta)),
        },
        Err(e) => report.push("gap", CheckStatus::Fail, e.to_string()),
    }
    report
}

#[allow(clippy::too_many_arguments)]
fn integrator_agreement(
    report: &mut ValidationReport,
    op: &NonlocalOperator,
    spec: &ProblemSpec,
    u0: &StripField,
    explicit: &Trajectory,
    horizon: f64,
    dt: f64,
    limit: f64,
) {
    let grid = op.grid();
    let scale = strip_l2(grid, u0, &vec![0.0; u0.len()]).max(f64::MIN_POSITIVE);
    // first-order schemes differ by about t dt lambda^2 |u0|, lambda <= 2 max d
    let lambda = 2.0 / limit;
    let nt = ((horizon * lambda / 0.5).ceil() as usize + 1).max(11);
    let step = dt.max(horizon / (nt - 1) as f64);
    let tol = horizon * step * lambda * lambda * scale + 1e-12 * (1.0 + scale);
    let end_explicit = explicit.last().cloned().unwrap_or_default();
    let implicit = evolve(op, spec, u0, horizon, dt, Integrator::Implicit);
    let picard = if spec.variant.is_linear() {
        Some(picard_solve(op, spec, u0, horizon, nt, 1e-13, 500))
    } else {
        None
    };
    let mut worst = 0.0f64;
    let mut failure = None;
    match implicit {
        Ok(tr) => worst = worst.max(strip_l2(grid, &end_explicit, tr.last().unwrap_or(u0))),
        Err(e) => failure = Some(format!("implicit: {e}")),
    }
    match picard {
        Some(Ok(tr)) => worst = worst.max(strip_l2(grid, &end_explicit, tr.last().unwrap_or(u0))),
        Some(Err(e)) => failure = Some(format!("picard: {e}")),
        None => {}
    }
    match failure {
        Some(msg) => report.push("integrators", CheckStatus::Fail, msg),
        None => report.verdict(
            "integrators",
            worst <= tol,
            format!("max difference at t = {horizon} is {worst:.3e} <= {tol:.3e}"),
        ),
    }
}

/// Relative sup difference between the extension-path rhs and `-M^{-1} S u`.
fn schur_agreement(op: &NonlocalOperator, spec: &ProblemSpec, u: &StripField) -> Result<f64> {
    let s = schur_complement(op)?;
    let smu = op.grid().strip_mu();
    let f = rhs(op, spec, u)?;
    let su = &s * nalgebra::DVector::from_column_slice(u);
    let mut diff = 0.0f64;
    let mut size = 0.0f64;
    for k in 0..u.len() {
        let reduced = -su[k] / smu[k];
        diff = diff.max((f[k] - reduced).abs());
        size = size.max(reduced.abs()).max(f[k].abs());
    }
    Ok(if size == 0.0 { diff } else { diff / size })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::mass;

    fn toy3_cfg() -> ExperimentConfig {
        ExperimentConfig {
            fixture: Some("toy3".into()),
            initial: "two-bump".into(),
            t_end: 1.0,
            dt: 1e-3,
            ..Default::default()
        }
    }

    #[test]
    fn toy3_run_matches_exact_decay() {
        let s = run_experiment(&toy3_cfg()).unwrap();
        let d2 = s.trajectory.diag.last().unwrap().d2;
        let exact = 2f64.sqrt() * (-1.0f64).exp();
        assert!((d2 - exact).abs() < 1e-3, "{d2} vs {exact}");
        assert!(s.mass_drift < 1e-14);
    }

    #[test]
    fn constants_stay_put() {
        for variant in ["linear-p", "linear-p-star", "plaplace-p", "plaplace-p-star"] {
            let cfg = ExperimentConfig {
                variant: variant.into(),
                p: 3.0,
                h: 1.0 / 16.0,
                t_end: 0.1,
                dt: 0.01,
                initial: "constant(2.5)".into(),
                ..Default::default()
            };
            let s = run_experiment(&cfg).unwrap();
            for d in &s.trajectory.diag {
                assert_eq!(d.d2, 0.0, "{variant}");
                assert_eq!(d.dinf, 0.0, "{variant}");
            }
        }
    }

    #[test]
    fn toy3_validates() {
        let report = validate(&toy3_cfg());
        assert!(report.passed(), "{report}");
        for name in ["mass-drift", "integrators", "schur-path", "gap"] {
            assert_eq!(
                report.get(name).unwrap().status,
                CheckStatus::Pass,
                "{report}"
            );
        }
    }

    #[test]
    fn huge_dt_raises_advisory() {
        let cfg = ExperimentConfig {
            dt: 2.0,
            t_end: 2.0,
            ..toy3_cfg()
        };
        let report = validate(&cfg);
        let c = report.get("stability").unwrap();
        assert_eq!(c.status, CheckStatus::Warn);
        assert!(c.detail.contains("stability advisory"));
    }

    #[test]
    fn strip_equal_to_radius_reports_info() {
        let cfg = ExperimentConfig {
            r: 0.25,
            allow_r_equals_radius: true,
            h: 1.0 / 32.0,
            t_end: 0.1,
            dt: 0.01,
            ..Default::default()
        };
        let report = validate(&cfg);
        let c = report.get("gap").unwrap();
        assert_eq!(c.status, CheckStatus::Info, "{report}");
        assert!(c.detail.contains("near-zero gap expected"));
    }

    #[test]
    fn invalid_config_is_a_failed_check() {
        let cfg = ExperimentConfig {
            kernel: "singular".into(),
            ..Default::default()
        };
        let report = validate(&cfg);
        assert!(!report.passed());
        assert_eq!(report.checks.len(), 1);
    }

    #[test]
    fn presets_are_mean_zero_where_expected() {
        let cfg = ExperimentConfig {
            h: 1.0 / 32.0,
            ..Default::default()
        };
        let exp = Experiment::new(&cfg).unwrap();
        let g = exp.op.grid();
        for preset in [
            InitialPreset::TwoBump,
            InitialPreset::Eigenmode(1),
            InitialPreset::Eigenmode(3),
        ] {
            let u = initial_data(&exp.op, preset, 0).unwrap();
            assert!(mass(g, &u).abs() < 1e-12, "{preset:?}");
        }
        let b = initial_data(&exp.op, InitialPreset::Bump, 0).unwrap();
        assert!(mass(g, &b) > 0.0);
        let r1 = initial_data(&exp.op, InitialPreset::Random(None), 5).unwrap();
        let r2 = initial_data(&exp.op, InitialPreset::Random(Some(5)), 99).unwrap();
        assert_eq!(r1, r2);
        assert!(r1.iter().all(|v| v.abs() <= 1.0));
    }
}
