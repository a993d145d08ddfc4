use std::path::PathBuf;

use clap::Parser;
use csrk_core::stats::{DEFAULT_CHUNK_SIZE, DEFAULT_CONFIDENCE};
use csrk_core::tableau::{DEFAULT_GRID_POINTS, DEFAULT_TOLERANCE};

use crate::config::{
    parse_functional, CheckSettings, CiChoice, CommandKind, ConditionSelection, McSettings,
    OutputFormat, ProblemName, ProblemSpec, ReferenceChoice, RunConfig, SchemeSource, UsageError,
};

pub const THREADS_ENV: &str = "CSRK_THREADS";
pub const DEFAULT_SAMPLES: u64 = 100_000;
pub const DEFAULT_SEED: u64 = 42;
/// Leaf cap for `local-order` and `exact-order`; 3¹⁶ outcomes fit.
pub const DEFAULT_CLI_OUTCOME_CAP: u64 = 100_000_000;

#[derive(Debug, Parser)]
#[command(
    name = "csrk",
    version,
    about = "Continuous stochastic Runge-Kutta schemes for weak approximation of Ito SDEs",
    allow_negative_numbers = true
)]
pub struct Cli {
    #[arg(value_enum)]
    pub command: CommandKind,

    /// Builtin scheme name (see `csrk schemes`).
    #[arg(long)]
    pub scheme: Option<String>,
    /// JSON scheme document.
    #[arg(long, value_name = "PATH")]
    pub scheme_file: Option<PathBuf>,

    #[arg(long, value_enum)]
    pub problem: Option<ProblemName>,
    #[arg(long)]
    pub a: Option<f64>,
    #[arg(long)]
    pub b: Option<f64>,
    #[arg(long)]
    pub x0: Option<f64>,
    #[arg(long = "T", value_name = "T")]
    pub t_end: Option<f64>,
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Functional: x, x2, x[i] or x[i]^2.
    #[arg(long)]
    pub f: Option<String>,

    #[arg(long)]
    pub h: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    pub h_list: Option<Vec<f64>>,
    #[arg(long = "N-list", value_name = "N", value_delimiter = ',')]
    pub n_list: Option<Vec<usize>>,
    #[arg(long)]
    pub t_eval: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    pub theta_list: Option<Vec<f64>>,
    /// Accept a step list that does not divide the horizon; the last step is shortened.
    #[arg(long)]
    pub allow_short_step: bool,

    /// Monte Carlo sample count.
    #[arg(long = "M", value_name = "M")]
    pub samples: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub confidence: Option<f64>,
    #[arg(long, value_enum)]
    pub ci: Option<CiChoice>,
    #[arg(long)]
    pub chunk_size: Option<usize>,
    /// Worker threads. Results do not depend on it.
    #[arg(long, env = THREADS_ENV)]
    pub threads: Option<usize>,

    #[arg(long, value_enum)]
    pub reference: Option<ReferenceChoice>,
    #[arg(long)]
    pub outcome_cap: Option<u64>,

    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub grid_points: Option<usize>,
    /// `declared`, `all`, or condition ids such as `at_one:13`.
    #[arg(long, value_delimiter = ',')]
    pub conditions: Option<Vec<String>>,

    #[arg(long, value_enum, default_value = "csv")]
    pub format: OutputFormat,
    /// Write the document here instead of standard output.
    #[arg(long, value_name = "PATH")]
    pub output: Option<PathBuf>,
}

const PROBLEM_FLAGS: &[&str] = &["--problem", "--a", "--b", "--x0", "--T", "--lambda"];
const MC_FLAGS: &[&str] = &["--M", "--seed", "--confidence", "--ci", "--chunk-size"];

fn allowed(cmd: CommandKind) -> Vec<&'static str> {
    let mut v = vec!["--scheme", "--scheme-file"];
    match cmd {
        CommandKind::Schemes => {}
        CommandKind::Check => v.extend(["--tol", "--grid-points", "--conditions"]),
        CommandKind::Simulate => {
            v.extend(PROBLEM_FLAGS);
            v.extend(["--h", "--theta-list", "--seed", "--allow-short-step"]);
        }
        CommandKind::ErrorTable | CommandKind::Converge => {
            v.extend(PROBLEM_FLAGS);
            v.extend(MC_FLAGS);
            v.extend(["--f", "--h-list", "--t-eval", "--reference", "--allow-short-step"]);
        }
        CommandKind::Dense => {
            v.extend(PROBLEM_FLAGS);
            v.extend(MC_FLAGS);
            v.extend(["--f", "--h", "--theta-list", "--reference"]);
        }
        CommandKind::LocalOrder => {
            v.extend(PROBLEM_FLAGS);
            v.extend(["--f", "--h-list", "--theta-list", "--reference", "--outcome-cap"]);
        }
        CommandKind::ExactOrder => {
            v.extend(PROBLEM_FLAGS);
            v.extend(["--f", "--N-list", "--t-eval", "--reference", "--outcome-cap"]);
        }
    }
    v
}

fn uses(cmd: CommandKind, flag: &str) -> bool {
    allowed(cmd).contains(&flag)
}

impl Cli {
    /// Flags given on the command line, `--threads`, `--format` and `--output` excepted.
    pub fn given_flags(&self) -> Vec<&'static str> {
        let mut v = Vec::new();
        let mut add = |set: bool, flag: &'static str| {
            if set {
                v.push(flag)
            }
        };
        add(self.scheme.is_some(), "--scheme");
        add(self.scheme_file.is_some(), "--scheme-file");
        add(self.problem.is_some(), "--problem");
        add(self.a.is_some(), "--a");
        add(self.b.is_some(), "--b");
        add(self.x0.is_some(), "--x0");
        add(self.t_end.is_some(), "--T");
        add(self.lambda.is_some(), "--lambda");
        add(self.f.is_some(), "--f");
        add(self.h.is_some(), "--h");
        add(self.h_list.is_some(), "--h-list");
        add(self.n_list.is_some(), "--N-list");
        add(self.t_eval.is_some(), "--t-eval");
        add(self.theta_list.is_some(), "--theta-list");
        add(self.allow_short_step, "--allow-short-step");
        add(self.samples.is_some(), "--M");
        add(self.seed.is_some(), "--seed");
        add(self.confidence.is_some(), "--confidence");
        add(self.ci.is_some(), "--ci");
        add(self.chunk_size.is_some(), "--chunk-size");
        add(self.reference.is_some(), "--reference");
        add(self.outcome_cap.is_some(), "--outcome-cap");
        add(self.tol.is_some(), "--tol");
        add(self.grid_points.is_some(), "--grid-points");
        add(self.conditions.is_some(), "--conditions");
        v
    }

    /// Validates the flag combination and fills in defaults.
    pub fn into_config(self) -> Result<RunConfig, UsageError> {
        let cmd = self.command;
        let given = self.given_flags();
        let unused: Vec<&str> = given.iter().copied().filter(|f| !uses(cmd, f)).collect();
        if !unused.is_empty() {
            return Err(UsageError::new(format!("flags not used by `{}`", cmd.name()), unused));
        }
        if self.scheme.is_some() && self.scheme_file.is_some() {
            return Err(UsageError::new("give one scheme source", ["--scheme", "--scheme-file"]));
        }
        let scheme = match (self.scheme.clone(), self.scheme_file.clone()) {
            (Some(n), _) => Some(SchemeSource::Builtin(n)),
            (None, Some(p)) => Some(SchemeSource::File(p)),
            (None, None) => None,
        };
        if scheme.is_none() && !matches!(cmd, CommandKind::Schemes | CommandKind::Check) {
            return Err(UsageError::new(
                format!("`{}` needs a scheme", cmd.name()),
                ["--scheme", "--scheme-file"],
            ));
        }

        let problem = if uses(cmd, "--problem") { Some(self.problem_spec()?) } else { None };
        let t_end = problem.as_ref().map(ProblemSpec::t_end);
        let name = self.problem.unwrap_or(ProblemName::Linear);

        let f = if uses(cmd, "--f") {
            let raw = self.f.clone().unwrap_or_else(|| {
                if name == ProblemName::System2d { "x2".into() } else { "x".into() }
            });
            Some(parse_functional(&raw)?.to_string())
        } else {
            None
        };

        let h = match cmd {
            CommandKind::Simulate | CommandKind::Dense => {
                let h = self.h.unwrap_or(t_end.unwrap_or(1.0) / 8.0);
                positive(h, "--h")?;
                Some(h)
            }
            _ => None,
        };
        let h_list = match cmd {
            CommandKind::ErrorTable | CommandKind::Converge => Some(self.h_list.clone().unwrap_or_else(|| {
                let top = if name == ProblemName::System2d { 1 } else { -1 };
                (0..4).map(|k| 2f64.powi(top - k)).collect()
            })),
            CommandKind::LocalOrder => {
                Some(self.h_list.clone().unwrap_or_else(|| (3..=7).map(|k| 0.5f64.powi(k)).collect()))
            }
            _ => None,
        };
        if let Some(list) = &h_list {
            if list.is_empty() {
                return Err(UsageError::new("the step list is empty", ["--h-list"]));
            }
            for &h in list {
                positive(h, "--h-list")?;
            }
        }
        let n_list = if cmd == CommandKind::ExactOrder {
            let list = self.n_list.clone().unwrap_or_else(|| vec![4, 8, 16]);
            if list.is_empty() || list.contains(&0) {
                return Err(UsageError::new("step counts must be positive", ["--N-list"]));
            }
            Some(list)
        } else {
            None
        };
        let t_eval = match cmd {
            CommandKind::ErrorTable | CommandKind::Converge | CommandKind::ExactOrder => {
                Some(self.t_eval.or(t_end).expect("these commands have a problem"))
            }
            _ => None,
        };
        let theta_list = match cmd {
            CommandKind::Simulate => self.theta_list.clone(),
            CommandKind::Dense => Some(self.theta_list.clone().unwrap_or_else(|| vec![0.0, 0.25, 0.5, 0.75, 1.0])),
            CommandKind::LocalOrder => Some(self.theta_list.clone().unwrap_or_else(|| vec![1.0])),
            _ => None,
        };
        if let Some(list) = &theta_list {
            if list.is_empty() || list.iter().any(|th| !(0.0..=1.0).contains(th)) {
                return Err(UsageError::new("theta values must lie in [0, 1]", ["--theta-list"]));
            }
        }

        let monte_carlo = if uses(cmd, "--M") {
            let ci = self.ci.unwrap_or(CiChoice::Normal);
            let mc = McSettings {
                samples: self.samples.unwrap_or(DEFAULT_SAMPLES),
                seed: self.seed.unwrap_or(DEFAULT_SEED),
                confidence: self.confidence.unwrap_or(DEFAULT_CONFIDENCE),
                ci,
                chunk_size: self.chunk_size.unwrap_or(DEFAULT_CHUNK_SIZE),
            };
            if mc.samples == 0 {
                return Err(UsageError::new("the sample count must be positive", ["--M"]));
            }
            if !(mc.confidence > 0.0 && mc.confidence < 1.0) {
                return Err(UsageError::new("confidence must lie in (0, 1)", ["--confidence"]));
            }
            if mc.chunk_size == 0 {
                return Err(UsageError::new("chunk size must be positive", ["--chunk-size"]));
            }
            if ci == CiChoice::BatchedT
                && (!mc.samples.is_multiple_of(mc.chunk_size as u64) || mc.samples / (mc.chunk_size as u64) < 2)
            {
                return Err(UsageError::new(
                    "batched-t needs M to be a multiple (at least 2) of the chunk size",
                    ["--ci", "--M", "--chunk-size"],
                ));
            }
            Some(mc)
        } else {
            None
        };
        let seed = if cmd == CommandKind::Simulate { Some(self.seed.unwrap_or(DEFAULT_SEED)) } else { None };

        let outcome_cap =
            uses(cmd, "--outcome-cap").then(|| self.outcome_cap.unwrap_or(DEFAULT_CLI_OUTCOME_CAP));
        let check = if cmd == CommandKind::Check {
            let grid_points = self.grid_points.unwrap_or(DEFAULT_GRID_POINTS);
            if grid_points < 2 {
                return Err(UsageError::new("a theta grid needs at least 2 points", ["--grid-points"]));
            }
            let tol = self.tol.unwrap_or(DEFAULT_TOLERANCE);
            positive(tol, "--tol")?;
            let conditions = match &self.conditions {
                Some(items) => ConditionSelection::parse(items)
                    .map_err(|e| UsageError::new(e.to_string(), ["--conditions"]))?,
                None => ConditionSelection::Declared,
            };
            Some(CheckSettings { tol, grid_points, conditions })
        } else {
            None
        };
        if self.threads == Some(0) {
            return Err(UsageError::new("thread count must be positive", ["--threads"]));
        }

        Ok(RunConfig {
            command: cmd,
            scheme,
            problem,
            f,
            h,
            h_list,
            n_list,
            t_eval,
            theta_list,
            monte_carlo,
            seed,
            reference: self.reference,
            outcome_cap,
            check,
            allow_short_step: self.allow_short_step,
            threads: self.threads,
            format: self.format,
            output: self.output,
        })
    }

    fn problem_spec(&self) -> Result<ProblemSpec, UsageError> {
        let name = self.problem.unwrap_or(ProblemName::Linear);
        let foreign: Vec<&str> = match name {
            ProblemName::Linear => vec![(self.lambda.is_some(), "--lambda")],
            ProblemName::System2d => vec![
                (self.a.is_some(), "--a"),
                (self.b.is_some(), "--b"),
                (self.x0.is_some(), "--x0"),
                (self.t_end.is_some(), "--T"),
                (self.lambda.is_some(), "--lambda"),
            ],
            ProblemName::Ode => vec![(self.a.is_some(), "--a"), (self.b.is_some(), "--b")],
        }
        .into_iter()
        .filter_map(|(set, flag)| set.then_some(flag))
        .collect();
        if !foreign.is_empty() {
            let label = match name {
                ProblemName::Linear => "linear",
                ProblemName::System2d => "system2d",
                ProblemName::Ode => "ode",
            };
            return Err(UsageError::new(format!("flags not accepted by problem {label}"), foreign));
        }
        let spec = match name {
            ProblemName::Linear => ProblemSpec::Linear {
                a: self.a.unwrap_or(1.5),
                b: self.b.unwrap_or(0.1),
                x0: self.x0.unwrap_or(0.1),
                t_end: self.t_end.unwrap_or(2.0),
            },
            ProblemName::System2d => ProblemSpec::System2d,
            ProblemName::Ode => ProblemSpec::Ode {
                lambda: self.lambda.unwrap_or(1.0),
                x0: self.x0.unwrap_or(1.0),
                t_end: self.t_end.unwrap_or(1.0),
            },
        };
        positive(spec.t_end(), "--T")?;
        Ok(spec)
    }
}

fn positive(v: f64, flag: &str) -> Result<(), UsageError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(UsageError::new(format!("{flag} must be positive and finite, got {v}"), [flag]))
    }
}
