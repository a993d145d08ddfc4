use std::collections::BTreeSet;
use std::fmt;
use std::path::PathBuf;

use anyhow::{bail, Context};
use clap::ValueEnum;
use csrk_core::sde_model::{linear_problem, ode_problem, system2d_problem};
use csrk_core::stats::CiMethod;
use csrk_core::tableau::{catalog, ConditionId};
use csrk_core::{builtin_scheme, parse_tableau, CsrkTableau, Functional, McConfig, Provenance, SdeProblem};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum CommandKind {
    /// List the builtin schemes, or describe one.
    Schemes,
    /// Check order conditions.
    Check,
    /// Simulate one path with dense output.
    Simulate,
    /// Monte Carlo error table.
    ErrorTable,
    /// Error table plus log-log plot columns.
    Converge,
    /// Monte Carlo errors inside every step.
    Dense,
    /// Exact one-step errors.
    LocalOrder,
    /// Exact global errors.
    ExactOrder,
}

impl CommandKind {
    pub fn name(self) -> &'static str {
        match self {
            CommandKind::Schemes => "schemes",
            CommandKind::Check => "check",
            CommandKind::Simulate => "simulate",
            CommandKind::ErrorTable => "error-table",
            CommandKind::Converge => "converge",
            CommandKind::Dense => "dense",
            CommandKind::LocalOrder => "local-order",
            CommandKind::ExactOrder => "exact-order",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ProblemName {
    Linear,
    #[value(name = "system2d")]
    System2d,
    Ode,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum ReferenceChoice {
    #[value(name = "paper_stated")]
    PaperStated,
    Derived,
}

impl ReferenceChoice {
    pub fn provenance(self) -> Provenance {
        match self {
            ReferenceChoice::PaperStated => Provenance::PaperStated,
            ReferenceChoice::Derived => Provenance::DerivedClosedForm,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum CiChoice {
    Normal,
    BatchedT,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemeSource {
    Builtin(String),
    File(PathBuf),
}

impl SchemeSource {
    pub fn load(&self) -> anyhow::Result<CsrkTableau> {
        match self {
            SchemeSource::Builtin(name) => Ok(builtin_scheme(name)?),
            SchemeSource::File(path) => {
                let text = std::fs::read_to_string(path)
                    .with_context(|| format!("reading scheme file {}", path.display()))?;
                parse_tableau(&text).with_context(|| format!("in {}", path.display()))
            }
        }
    }
}

/// A registry problem with its parameters resolved.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "lowercase")]
pub enum ProblemSpec {
    Linear {
        a: f64,
        b: f64,
        x0: f64,
        #[serde(rename = "T")]
        t_end: f64,
    },
    System2d,
    Ode {
        lambda: f64,
        x0: f64,
        #[serde(rename = "T")]
        t_end: f64,
    },
}

impl ProblemSpec {
    pub fn build(&self) -> anyhow::Result<SdeProblem> {
        Ok(match *self {
            ProblemSpec::Linear { a, b, x0, t_end } => linear_problem(a, b, x0, t_end)?,
            ProblemSpec::System2d => system2d_problem(),
            ProblemSpec::Ode { lambda, x0, t_end } => ode_problem(lambda, x0, t_end)?,
        })
    }

    pub fn t_end(&self) -> f64 {
        match *self {
            ProblemSpec::Linear { t_end, .. } | ProblemSpec::Ode { t_end, .. } => t_end,
            ProblemSpec::System2d => 4.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McSettings {
    #[serde(rename = "M")]
    pub samples: u64,
    pub seed: u64,
    pub confidence: f64,
    pub ci: CiChoice,
    pub chunk_size: usize,
}

impl McSettings {
    pub fn to_config(&self, threads: Option<usize>) -> McConfig {
        let ci = match self.ci {
            CiChoice::Normal => CiMethod::Normal,
            CiChoice::BatchedT => CiMethod::BatchedT,
        };
        McConfig::new(self.samples, self.seed)
            .with_confidence(self.confidence)
            .with_chunk_size(self.chunk_size)
            .with_ci(ci)
            .with_threads(threads)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckSettings {
    pub tol: f64,
    pub grid_points: usize,
    /// `declared`, `all`, or a list of condition ids.
    pub conditions: ConditionSelection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConditionSelection {
    Declared,
    All,
    Listed(Vec<ConditionId>),
}

impl ConditionSelection {
    pub fn parse(items: &[String]) -> anyhow::Result<Self> {
        match items {
            [one] if one == "declared" => Ok(ConditionSelection::Declared),
            [one] if one == "all" => Ok(ConditionSelection::All),
            _ => {
                let ids = items
                    .iter()
                    .map(|s| s.trim().parse::<ConditionId>())
                    .collect::<csrk_core::Result<Vec<_>>>()?;
                Ok(ConditionSelection::Listed(ids))
            }
        }
    }

    pub fn ids(&self, scheme: &CsrkTableau) -> BTreeSet<ConditionId> {
        match self {
            ConditionSelection::Declared => scheme.meta().declared_conditions.clone(),
            ConditionSelection::All => catalog().iter().map(|c| c.id).collect(),
            ConditionSelection::Listed(ids) => ids.iter().copied().collect(),
        }
    }
}

/// A fully resolved run. Fields a command does not use stay `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub command: CommandKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scheme: Option<SchemeSource>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub problem: Option<ProblemSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h_list: Option<Vec<f64>>,
    #[serde(default, rename = "N_list", skip_serializing_if = "Option::is_none")]
    pub n_list: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_eval: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta_list: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub monte_carlo: Option<McSettings>,
    /// A seed for commands that are not Monte Carlo estimates.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<ReferenceChoice>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outcome_cap: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub check: Option<CheckSettings>,
    #[serde(default)]
    pub allow_short_step: bool,
    /// Worker threads; `None` uses the available parallelism. Never changes results.
    #[serde(default)]
    pub threads: Option<usize>,
    #[serde(default)]
    pub format: OutputFormat,
    #[serde(default)]
    pub output: Option<PathBuf>,
}

impl RunConfig {
    pub fn scheme(&self) -> anyhow::Result<CsrkTableau> {
        match &self.scheme {
            Some(src) => src.load(),
            None => bail!("`{}` needs --scheme or --scheme-file", self.command.name()),
        }
    }

    pub fn problem(&self) -> anyhow::Result<SdeProblem> {
        match &self.problem {
            Some(p) => p.build(),
            None => bail!("`{}` does not take a problem", self.command.name()),
        }
    }

    pub fn functional(&self) -> anyhow::Result<Functional> {
        match &self.f {
            Some(s) => Ok(parse_functional(s)?),
            None => bail!("`{}` does not take a functional", self.command.name()),
        }
    }
}

/// Parses `x`, `x2`, `x^2`, `x[i]` or `x[i]^2` (components from 0).
pub fn parse_functional(s: &str) -> Result<Functional, UsageError> {
    let s = s.trim();
    let bad = || UsageError::new(format!("unknown functional `{s}`; use x, x2, x[i] or x[i]^2"), ["--f"]);
    match s {
        "x" => return Ok(Functional::IdentityComponent(0)),
        "x2" | "x^2" => return Ok(Functional::SquareComponent(0)),
        _ => {}
    }
    let rest = s.strip_prefix("x[").ok_or_else(bad)?;
    let (idx, tail) = rest.split_once(']').ok_or_else(bad)?;
    let i: usize = idx.trim().parse().map_err(|_| bad())?;
    match tail {
        "" => Ok(Functional::IdentityComponent(i)),
        "^2" => Ok(Functional::SquareComponent(i)),
        _ => Err(bad()),
    }
}

/// A rejected combination of command-line flags.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UsageError {
    pub message: String,
    pub flags: Vec<String>,
}

impl UsageError {
    pub fn new<I, S>(message: impl Into<String>, flags: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self { message: message.into(), flags: flags.into_iter().map(Into::into).collect() }
    }
}

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.message)?;
        if !self.flags.is_empty() {
            write!(f, " (offending flags: {})", self.flags.join(", "))?;
        }
        Ok(())
    }
}

impl std::error::Error for UsageError {}
