//! JSON experiment configuration.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::analysis::{Column, DecayModel};
use crate::error::{Error, Result};
use crate::evolution::{Integrator, Variant};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    /// `"toy3"` replaces the grid and kernel by the three-node fixture.
    pub fixture: Option<String>,
    pub dim: usize,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub h: f64,
    pub r: f64,
    /// `tent`, `bump` or `singular`.
    pub kernel: String,
    pub kernel_radius: f64,
    pub kernel_s: f64,
    pub variant: String,
    pub p: f64,
    pub q: f64,
    pub t_end: f64,
    pub dt: f64,
    pub integrator: String,
    /// `bump`, `two-bump`, `random`, `random(seed)`, `eigenmode(k)` or `constant(c)`.
    pub initial: String,
    pub seed: u64,
    pub tol: f64,
    pub max_iter: usize,
    pub allow_empty_interior: bool,
    /// Permits `r = R`; `r > R` is always rejected.
    pub allow_r_equals_radius: bool,
    pub out: Option<PathBuf>,
    pub svg: Option<PathBuf>,
    /// Column fitted after the run, e.g. `"d2^2"`.
    pub fit_column: Option<String>,
    pub fit_model: Option<String>,
    pub fit_window: Option<[f64; 2]>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            fixture: None,
            dim: 1,
            lo: vec![0.0],
            hi: vec![1.0],
            h: 1.0 / 64.0,
            r: 0.125,
            kernel: "tent".into(),
            kernel_radius: 0.25,
            kernel_s: 0.5,
            variant: "linear-p".into(),
            p: 2.0,
            q: 2.0,
            t_end: 1.0,
            dt: 1e-3,
            integrator: "explicit".into(),
            initial: "random".into(),
            seed: 0,
            tol: 1e-12,
            max_iter: 200,
            allow_empty_interior: false,
            allow_r_equals_radius: false,
            out: None,
            svg: None,
            fit_column: None,
            fit_model: None,
            fit_window: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitialPreset {
    Bump,
    TwoBump,
    Random(Option<u64>),
    Eigenmode(usize),
    Constant(f64),
}

impl FromStr for InitialPreset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::config("initial", format!("unrecognised preset `{s}`"));
        let (name, arg) = match s.split_once('(') {
            Some((n, rest)) => (
                n.trim(),
                Some(rest.strip_suffix(')').ok_or_else(bad)?.trim()),
            ),
            None => (s.trim(), None),
        };
        match (name, arg) {
            ("bump", None) => Ok(InitialPreset::Bump),
            ("two-bump", None) => Ok(InitialPreset::TwoBump),
            ("random", None) => Ok(InitialPreset::Random(None)),
            ("random", Some(a)) => Ok(InitialPreset::Random(Some(a.parse().map_err(|_| bad())?))),
            ("eigenmode", Some(a)) => {
                let k: usize = a.parse().map_err(|_| bad())?;
                if k == 0 {
                    return Err(Error::config("initial", "eigenmode index starts at 1"));
                }
                Ok(InitialPreset::Eigenmode(k))
            }
            ("constant", Some(a)) => {
                let c: f64 = a.parse().map_err(|_| bad())?;
                if !c.is_finite() {
                    return Err(bad());
                }
                Ok(InitialPreset::Constant(c))
            }
            _ => Err(bad()),
        }
    }
}

/// Validated, typed view of an [`ExperimentConfig`].
#[derive(Debug, Clone, PartialEq)]
pub struct Resolved {
    pub variant: Variant,
    pub integrator: Integrator,
    pub initial: InitialPreset,
    pub fit: Option<(Column, DecayModel, (f64, f64))>,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::config("<document>", e.to_string()))
    }

    pub fn is_toy3(&self) -> bool {
        self.fixture.as_deref() == Some("toy3")
    }

    pub fn validate(&self) -> Result<Resolved> {
        let variant: Variant = self
            .variant
            .parse()
            .map_err(|_| Error::config("variant", format!("unknown variant `{}`", self.variant)))?;
        let integrator: Integrator = self.integrator.parse().map_err(|_| {
            Error::config(
                "integrator",
                format!("unknown integrator `{}`", self.integrator),
            )
        })?;
        let initial: InitialPreset = self.initial.parse()?;
        if let Some(f) = &self.fixture {
            if f != "toy3" {
                return Err(Error::config("fixture", format!("unknown fixture `{f}`")));
            }
            if variant == Variant::SingularP3 {
                return Err(Error::config("variant", "toy3 fixture has a smooth kernel"));
            }
        } else {
            if self.dim != 1 && self.dim != 2 {
                return Err(Error::config("dim", "must be 1 or 2"));
            }
            if self.lo.len() != self.dim || self.hi.len() != self.dim {
                return Err(Error::config("lo", "lo and hi need `dim` entries"));
            }
            if !(self.h > 0.0) {
                return Err(Error::config("h", "must be > 0"));
            }
            if !(self.r > 0.0) {
                return Err(Error::config("r", "must be > 0"));
            }
            let singular = match self.kernel.as_str() {
                "tent" | "bump" => false,
                "singular" => true,
                other => return Err(Error::config("kernel", format!("unknown family `{other}`"))),
            };
            if singular != (variant == Variant::SingularP3) {
                return Err(Error::config(
                    "kernel",
                    "singular kernel goes with the singular-p3 variant and only with it",
                ));
            }
            if singular {
                if !(self.kernel_s > 0.0 && self.kernel_s < 1.0) {
                    return Err(Error::config("kernel_s", "must lie in (0,1)"));
                }
            } else {
                let radius = self.kernel_radius;
                if !(radius > 0.0) {
                    return Err(Error::config("kernel_radius", "must be > 0"));
                }
                let equal = (self.r - radius).abs() <= 1e-12 * radius;
                if self.r > radius && !equal {
                    return Err(Error::config(
                        "r",
                        "strip width must not exceed the kernel radius",
                    ));
                }
                if equal && !self.allow_r_equals_radius {
                    return Err(Error::config("r", "r = R needs allow_r_equals_radius"));
                }
            }
        }
        if !variant.is_linear() && !(self.p > 1.0) {
            return Err(Error::config("p", "must be > 1"));
        }
        if !(self.q >= 1.0) {
            return Err(Error::config("q", "must be >= 1"));
        }
        if !(self.t_end > 0.0) {
            return Err(Error::config("t_end", "must be > 0"));
        }
        if !(self.dt > 0.0) {
            return Err(Error::config("dt", "must be > 0"));
        }
        let n = (self.t_end / self.dt).round();
        if n < 1.0 || (n * self.dt - self.t_end).abs() > 1e-9 * self.t_end.max(1.0) {
            return Err(Error::config("dt", "must divide t_end"));
        }
        if !(self.tol > 0.0) {
            return Err(Error::config("tol", "must be > 0"));
        }
        if self.max_iter == 0 {
            return Err(Error::config("max_iter", "must be positive"));
        }
        let fit = match (&self.fit_column, &self.fit_model) {
            (None, None) => None,
            (Some(c), Some(m)) => {
                let column: Column = c
                    .parse()
                    .map_err(|_| Error::config("fit_column", c.clone()))?;
                let model: DecayModel = m
                    .parse()
                    .map_err(|_| Error::config("fit_model", m.clone()))?;
                let [lo, hi] = self.fit_window.unwrap_or([0.0, self.t_end]);
                if !(lo < hi) {
                    return Err(Error::config("fit_window", "need lo < hi"));
                }
                Some((column, model, (lo, hi)))
            }
            _ => {
                return Err(Error::config(
                    "fit_model",
                    "fit_column and fit_model go together",
                ))
            }
        };
        Ok(Resolved {
            variant,
            integrator,
            initial,
            fit,
        })
    }
}
