//! SDE problems `dX = a(t, X) dt + b(t, X) dW`, the builtin test problems and
//! their closed-form moment references.

use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};

/// Drift callback: writes `a(t, x)` into `out`.
pub type DriftFn = dyn Fn(f64, &[f64], &mut [f64]) + Send + Sync;
/// Diffusion callback: writes column `k` of `b(t, x)` into `out`.
pub type DiffusionFn = dyn Fn(f64, &[f64], usize, &mut [f64]) + Send + Sync;

/// Scalar functional `f` of the state.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Functional {
    IdentityComponent(usize),
    SquareComponent(usize),
    /// `Σ coeffs[j] · x[component]^j`.
    Polynomial { component: usize, coeffs: Vec<f64> },
}

impl Functional {
    pub fn evaluate(&self, x: &[f64]) -> f64 {
        match self {
            Functional::IdentityComponent(i) => x[*i],
            Functional::SquareComponent(i) => x[*i] * x[*i],
            Functional::Polynomial { component, coeffs } => {
                let v = x[*component];
                coeffs.iter().rev().fold(0.0, |acc, c| acc * v + c)
            }
        }
    }

    pub fn component(&self) -> usize {
        match self {
            Functional::IdentityComponent(i) | Functional::SquareComponent(i) => *i,
            Functional::Polynomial { component, .. } => *component,
        }
    }
}

impl fmt::Display for Functional {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Functional::IdentityComponent(i) => write!(f, "x[{i}]"),
            Functional::SquareComponent(i) => write!(f, "x[{i}]^2"),
            Functional::Polynomial { component, coeffs } => {
                write!(f, "poly(x[{component}]; {coeffs:?})")
            }
        }
    }
}

/// Where a reference value comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    PaperStated,
    DerivedClosedForm,
}

impl Provenance {
    pub fn as_str(self) -> &'static str {
        match self {
            Provenance::PaperStated => "paper_stated",
            Provenance::DerivedClosedForm => "derived_closed_form",
        }
    }
}

/// Exact `t ↦ E f(X(t))` for one functional.
#[derive(Clone)]
pub struct ReferenceSolution {
    pub functional: Functional,
    pub provenance: Provenance,
    value: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
}

impl ReferenceSolution {
    pub fn new(
        functional: Functional,
        provenance: Provenance,
        value: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self { functional, provenance, value: Arc::new(value) }
    }

    pub fn value(&self, t: f64) -> f64 {
        (self.value)(t)
    }
}

impl fmt::Debug for ReferenceSolution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ReferenceSolution")
            .field("functional", &self.functional)
            .field("provenance", &self.provenance)
            .finish_non_exhaustive()
    }
}

/// An Itô SDE on `[t0, t_end]` with `dim_state`-dimensional state and
/// `dim_noise`-dimensional Wiener noise.
///
/// The callbacks must be pure: paths are simulated concurrently.
#[derive(Clone)]
pub struct SdeProblem {
    pub label: String,
    pub dim_state: usize,
    pub dim_noise: usize,
    pub x0: Vec<f64>,
    pub t0: f64,
    pub t_end: f64,
    drift: Arc<DriftFn>,
    diffusion: Arc<DiffusionFn>,
    references: Vec<ReferenceSolution>,
}

impl fmt::Debug for SdeProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SdeProblem")
            .field("label", &self.label)
            .field("dim_state", &self.dim_state)
            .field("dim_noise", &self.dim_noise)
            .field("x0", &self.x0)
            .field("t0", &self.t0)
            .field("t_end", &self.t_end)
            .field("references", &self.references)
            .finish_non_exhaustive()
    }
}

impl SdeProblem {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        label: impl Into<String>,
        dim_state: usize,
        dim_noise: usize,
        x0: Vec<f64>,
        t0: f64,
        t_end: f64,
        drift: impl Fn(f64, &[f64], &mut [f64]) + Send + Sync + 'static,
        diffusion: impl Fn(f64, &[f64], usize, &mut [f64]) + Send + Sync + 'static,
    ) -> Result<Self> {
        if dim_state == 0 || dim_noise == 0 {
            return Err(Error::Precondition("state and noise dimensions must be positive".into()));
        }
        if x0.len() != dim_state {
            return Err(Error::Precondition(format!(
                "initial value has {} components, expected {dim_state}",
                x0.len()
            )));
        }
        if !(t0 < t_end) {
            return Err(Error::Precondition(format!("need t0 < T, got [{t0}, {t_end}]")));
        }
        Ok(Self {
            label: label.into(),
            dim_state,
            dim_noise,
            x0,
            t0,
            t_end,
            drift: Arc::new(drift),
            diffusion: Arc::new(diffusion),
            references: Vec::new(),
        })
    }

    /// Attaches a reference; it must agree with `f(x0)` at `t0`.
    pub fn with_reference(mut self, r: ReferenceSolution) -> Result<Self> {
        let at_start = r.value(self.t0);
        let want = r.functional.evaluate(&self.x0);
        if (at_start - want).abs() > 1e-12 * want.abs().max(1.0) {
            return Err(Error::Precondition(format!(
                "reference for {} gives {at_start} at t0, expected {want}",
                r.functional
            )));
        }
        self.references.push(r);
        Ok(self)
    }

    /// Replaces the time horizon, keeping every reference.
    pub fn with_horizon(mut self, t_end: f64) -> Result<Self> {
        if !(self.t0 < t_end) {
            return Err(Error::Precondition(format!("need t0 < T, got [{}, {t_end}]", self.t0)));
        }
        self.t_end = t_end;
        Ok(self)
    }

    #[inline]
    pub fn drift(&self, t: f64, x: &[f64], out: &mut [f64]) {
        (self.drift)(t, x, out)
    }

    #[inline]
    pub fn diffusion_column(&self, t: f64, x: &[f64], k: usize, out: &mut [f64]) {
        (self.diffusion)(t, x, k, out)
    }

    /// Full diffusion matrix, row-major `d × m`.
    pub fn diffusion(&self, t: f64, x: &[f64]) -> Vec<f64> {
        let (d, m) = (self.dim_state, self.dim_noise);
        let mut out = vec![0.0; d * m];
        let mut col = vec![0.0; d];
        for k in 0..m {
            self.diffusion_column(t, x, k, &mut col);
            for i in 0..d {
                out[i * m + k] = col[i];
            }
        }
        out
    }

    pub fn references(&self) -> &[ReferenceSolution] {
        &self.references
    }

    /// Picks the reference for `f`, preferring `preferred` provenance and
    /// falling back to whatever exists.
    pub fn reference(&self, f: &Functional, preferred: Provenance) -> Option<&ReferenceSolution> {
        let mut matching = self.references.iter().filter(|r| &r.functional == f);
        let first = matching.clone().next();
        matching.find(|r| r.provenance == preferred).or(first)
    }
}

/// `dX = a X dt + b X dW`, `X(0) = x0` on `[0, T]`.
pub fn linear_problem(a: f64, b: f64, x0: f64, t_end: f64) -> Result<SdeProblem> {
    SdeProblem::new(
        "linear",
        1,
        1,
        vec![x0],
        0.0,
        t_end,
        move |_, x, out| out[0] = a * x[0],
        move |_, x, _, out| out[0] = b * x[0],
    )?
    .with_reference(ReferenceSolution::new(
        Functional::IdentityComponent(0),
        Provenance::PaperStated,
        move |t| x0 * (a * t).exp(),
    ))?
    .with_reference(ReferenceSolution::new(
        Functional::SquareComponent(0),
        Provenance::DerivedClosedForm,
        move |t| x0 * x0 * ((2.0 * a + b * b) * t).exp(),
    ))
}

pub const SYSTEM2D_DRIFT: [[f64; 2]; 2] = [[-273.0 / 512.0, 0.0], [-1.0 / 160.0, -785.0 / 512.0]];

/// Exponent of `E[(X¹)²]` for the 2-d system: `2·a₁₁ + 2·(1/16)²`.
pub const SYSTEM2D_SECOND_MOMENT_RATE: f64 = -271.0 / 256.0;

/// Two-dimensional linear system with non-commutative two-dimensional noise
/// on `[0, 4]`, `X(0) = (1, 1)`.
pub fn system2d_problem() -> SdeProblem {
    let c21 = (1.0 - 2.0 * 2.0f64.sqrt()) / 4.0;
    let [[a11, a12], [a21, a22]] = SYSTEM2D_DRIFT;
    let f = Functional::SquareComponent(0);
    SdeProblem::new(
        "system2d",
        2,
        2,
        vec![1.0, 1.0],
        0.0,
        4.0,
        move |_, x, out| {
            out[0] = a11 * x[0] + a12 * x[1];
            out[1] = a21 * x[0] + a22 * x[1];
        },
        move |_, x, k, out| match k {
            0 => {
                out[0] = x[0] / 16.0;
                out[1] = c21 * x[1];
            }
            _ => {
                out[0] = x[0] / 16.0;
                out[1] = x[0] / 10.0 + x[1] / 16.0;
            }
        },
    )
    .and_then(|p| {
        p.with_reference(ReferenceSolution::new(f.clone(), Provenance::PaperStated, |t| {
            (-t).exp()
        }))
    })
    .and_then(|p| {
        p.with_reference(ReferenceSolution::new(f, Provenance::DerivedClosedForm, |t| {
            (SYSTEM2D_SECOND_MOMENT_RATE * t).exp()
        }))
    })
    .expect("system2d is well formed")
}

/// The ODE `x' = λx` posed as an SDE with zero diffusion.
pub fn ode_problem(lambda: f64, x0: f64, t_end: f64) -> Result<SdeProblem> {
    SdeProblem::new(
        "ode",
        1,
        1,
        vec![x0],
        0.0,
        t_end,
        move |_, x, out| out[0] = lambda * x[0],
        |_, _, _, out| out[0] = 0.0,
    )?
    .with_reference(ReferenceSolution::new(
        Functional::IdentityComponent(0),
        Provenance::DerivedClosedForm,
        move |t| x0 * (lambda * t).exp(),
    ))?
    .with_reference(ReferenceSolution::new(
        Functional::SquareComponent(0),
        Provenance::DerivedClosedForm,
        move |t| x0 * x0 * (2.0 * lambda * t).exp(),
    ))
}
