//! Weak-error estimation: Monte Carlo means with confidence intervals, exact
//! expectations by enumerating the discrete noise, and empirical orders.
//!
//! Monte Carlo paths are grouped into chunks of consecutive path indices. Each
//! chunk keeps its own running mean and sum of squared deviations; chunks are
//! merged in ascending order afterwards. Path `p` always draws from
//! [`path_stream`]`(seed, p)`, so an estimate depends on `(seed, M, chunk size)`
//! and not on how many threads ran it.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

use crate::error::{Error, Result};
use crate::increments::{enumerate, outcome_count, path_stream, StepIncrements};
use crate::integrator::{Integrator, StageCache, TimeGrid};
use crate::sde_model::{Functional, ReferenceSolution, SdeProblem};
use crate::tableau::{CsrkTableau, WeightValues};

pub const DEFAULT_CHUNK_SIZE: usize = 4096;
pub const DEFAULT_CONFIDENCE: f64 = 0.90;
/// Leaf limit for [`exact_weak_expectation`].
pub const DEFAULT_OUTCOME_CAP: u64 = 10_000_000;

/// Two-sided normal quantiles for the common levels, pinned to the last digit.
const PINNED_Z: [(f64, f64); 3] = [
    (0.90, 1.6448536269514722),
    (0.95, 1.959963984540054),
    (0.99, 2.5758293035489004),
];

/// `z` with `P(|Z| ≤ z) = confidence` for a standard normal `Z`.
pub fn normal_quantile(confidence: f64) -> Result<f64> {
    check_confidence(confidence)?;
    if let Some(&(_, z)) = PINNED_Z.iter().find(|(c, _)| *c == confidence) {
        return Ok(z);
    }
    let n = Normal::standard();
    Ok(n.inverse_cdf(0.5 + confidence / 2.0))
}

fn check_confidence(confidence: f64) -> Result<()> {
    if confidence > 0.0 && confidence < 1.0 {
        Ok(())
    } else {
        Err(Error::Precondition(format!("confidence must lie in (0, 1), got {confidence}")))
    }
}

/// How the confidence half-width is formed.
#[derive(Debug, Default, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CiMethod {
    /// Normal quantile times the standard error of the sample mean.
    #[default]
    Normal,
    /// Student-t over chunk means; needs `M` to be a multiple of the chunk size.
    BatchedT,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McConfig {
    pub samples: u64,
    pub seed: u64,
    pub confidence: f64,
    pub chunk_size: usize,
    /// `None` runs on the global rayon pool.
    pub threads: Option<usize>,
    pub ci: CiMethod,
}

impl McConfig {
    pub fn new(samples: u64, seed: u64) -> Self {
        Self {
            samples,
            seed,
            confidence: DEFAULT_CONFIDENCE,
            chunk_size: DEFAULT_CHUNK_SIZE,
            threads: None,
            ci: CiMethod::Normal,
        }
    }

    pub fn with_confidence(mut self, confidence: f64) -> Self {
        self.confidence = confidence;
        self
    }

    pub fn with_threads(mut self, threads: Option<usize>) -> Self {
        self.threads = threads;
        self
    }

    pub fn with_chunk_size(mut self, chunk_size: usize) -> Self {
        self.chunk_size = chunk_size;
        self
    }

    pub fn with_ci(mut self, ci: CiMethod) -> Self {
        self.ci = ci;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.samples < 2 {
            return Err(Error::Precondition(format!("need M >= 2, got {}", self.samples)));
        }
        if self.chunk_size == 0 {
            return Err(Error::Precondition("chunk size must be positive".into()));
        }
        if self.threads == Some(0) {
            return Err(Error::Precondition("thread count must be positive".into()));
        }
        if self.ci == CiMethod::BatchedT {
            let chunks = self.samples.div_ceil(self.chunk_size as u64);
            if !self.samples.is_multiple_of(self.chunk_size as u64) || chunks < 2 {
                return Err(Error::Precondition(format!(
                    "batched-t needs M to be at least two whole chunks of {}, got M = {}",
                    self.chunk_size, self.samples
                )));
            }
        }
        check_confidence(self.confidence)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloEstimate {
    pub mean: f64,
    pub variance_of_mean: f64,
    pub half_width: f64,
    pub samples: u64,
    pub seed: u64,
    pub eval_time: f64,
    pub confidence: f64,
}

/// Running mean and sum of squared deviations.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Welford {
    pub count: u64,
    pub mean: f64,
    pub m2: f64,
}

impl Welford {
    #[inline]
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
    }

    /// Pairwise combination of two disjoint samples.
    pub fn merge(&mut self, other: &Welford) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = *other;
            return;
        }
        let n = self.count + other.count;
        let delta = other.mean - self.mean;
        let w = other.count as f64 / n as f64;
        self.mean += delta * w;
        self.m2 += other.m2 + delta * delta * self.count as f64 * w;
        self.count = n;
    }

    pub fn sample_variance(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            (self.m2 / (self.count - 1) as f64).max(0.0)
        }
    }
}

/// Query of one path: the dense value of step `step` at the given weights.
struct Query {
    step: usize,
    weights: WeightValues,
}

fn with_pool<T: Send>(threads: Option<usize>, job: impl FnOnce() -> T + Send) -> Result<T> {
    match threads {
        None => Ok(job()),
        Some(k) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(k)
                .build()
                .map_err(|e| Error::Precondition(format!("thread pool: {e}")))?;
            Ok(pool.install(job))
        }
    }
}

fn attach_path(e: Error, step: usize, path: u64) -> Error {
    match e {
        Error::NumericalBlowup { t_n, stage, family, .. } => {
            Error::NumericalBlowup { t_n, stage, family, step: Some(step), path: Some(path) }
        }
        other => other,
    }
}

/// Runs paths `range` and accumulates `f` at every query.
#[allow(clippy::too_many_arguments)]
fn run_chunk(
    scheme: &CsrkTableau,
    problem: &SdeProblem,
    grid: &TimeGrid,
    f: &Functional,
    queries: &[Query],
    seed: u64,
    range: std::ops::Range<u64>,
) -> Result<Vec<Welford>> {
    let mut integ = Integrator::new(scheme, problem);
    let node_w = integ.node_weights().clone();
    let mut cache = integ.new_cache();
    let last = queries.iter().map(|q| q.step).max().unwrap_or(0);
    let mut acc = vec![Welford::default(); queries.len()];
    let mut inc = StepIncrements::new(problem.dim_noise, grid.step_size(0));
    let mut y = vec![0.0; problem.dim_state];
    let mut out = vec![0.0; problem.dim_state];
    for p in range {
        let mut rng = path_stream(seed, p);
        y.copy_from_slice(&problem.x0);
        let mut qi = 0;
        for n in 0..=last {
            let h = grid.step_size(n);
            inc.resample(h, &mut rng);
            integ
                .step_into(grid.node(n), &y, h, &inc, &mut cache)
                .map_err(|e| attach_path(e, n, p))?;
            while qi < queries.len() && queries[qi].step == n {
                cache.evaluate_into(&queries[qi].weights, &mut out);
                acc[qi].push(f.evaluate(&out));
                qi += 1;
            }
            if n < last {
                cache.evaluate_into(&node_w, &mut y);
            }
        }
    }
    Ok(acc)
}

/// Per-chunk accumulators for every query, chunks in path order.
fn run_paths(
    scheme: &CsrkTableau,
    problem: &SdeProblem,
    grid: &TimeGrid,
    f: &Functional,
    queries: &[Query],
    cfg: &McConfig,
) -> Result<Vec<Vec<Welford>>> {
    let chunk = cfg.chunk_size as u64;
    let n_chunks = cfg.samples.div_ceil(chunk);
    with_pool(cfg.threads, || {
        (0..n_chunks)
            .into_par_iter()
            .map(|c| {
                let range = c * chunk..((c + 1) * chunk).min(cfg.samples);
                run_chunk(scheme, problem, grid, f, queries, cfg.seed, range)
            })
            .collect::<Result<Vec<_>>>()
    })?
}

fn summarize(chunks: &[Vec<Welford>], qi: usize, cfg: &McConfig, t: f64) -> Result<MonteCarloEstimate> {
    let mut total = Welford::default();
    for c in chunks {
        total.merge(&c[qi]);
    }
    let m = total.count as f64;
    let (variance_of_mean, half_width) = match cfg.ci {
        CiMethod::Normal => {
            let v = total.sample_variance() / m;
            (v, normal_quantile(cfg.confidence)? * v.sqrt())
        }
        CiMethod::BatchedT => {
            let mut batch = Welford::default();
            for c in chunks {
                batch.push(c[qi].mean);
            }
            let b = batch.count as f64;
            let v = batch.sample_variance() / b;
            let t_dist = StudentsT::new(0.0, 1.0, b - 1.0)
                .map_err(|e| Error::Precondition(format!("student-t: {e}")))?;
            (v, t_dist.inverse_cdf(0.5 + cfg.confidence / 2.0) * v.sqrt())
        }
    };
    Ok(MonteCarloEstimate {
        mean: total.mean,
        variance_of_mean,
        half_width,
        samples: total.count,
        seed: cfg.seed,
        eval_time: t,
        confidence: cfg.confidence,
    })
}

/// Monte Carlo estimates of `E f(Y(t))` for several times from one set of paths.
pub fn mc_expectations(
    scheme: &CsrkTableau,
    problem: &SdeProblem,
    grid: &TimeGrid,
    f: &Functional,
    times: &[f64],
    cfg: &McConfig,
) -> Result<Vec<MonteCarloEstimate>> {
    cfg.validate()?;
    if times.is_empty() {
        return Ok(Vec::new());
    }
    check_functional(problem, f)?;
    let mut located = times
        .iter()
        .enumerate()
        .map(|(i, &t)| grid.locate(t).map(|(n, th)| (n, th, i)))
        .collect::<Result<Vec<_>>>()?;
    located.sort_by_key(|a| (a.0, a.2));
    let queries = located
        .iter()
        .map(|&(step, th, _)| Ok(Query { step, weights: scheme.weights_at(th)? }))
        .collect::<Result<Vec<_>>>()?;
    let chunks = run_paths(scheme, problem, grid, f, &queries, cfg)?;
    let mut out = vec![None; times.len()];
    for (qi, &(_, _, i)) in located.iter().enumerate() {
        out[i] = Some(summarize(&chunks, qi, cfg, times[i])?);
    }
    Ok(out.into_iter().map(|e| e.expect("every time is summarized")).collect())
}

/// Monte Carlo estimate of `E f(Y(t_eval))`.
pub fn mc_expectation(
    scheme: &CsrkTableau,
    problem: &SdeProblem,
    grid: &TimeGrid,
    f: &Functional,
    t_eval: f64,
    cfg: &McConfig,
) -> Result<MonteCarloEstimate> {
    Ok(mc_expectations(scheme, problem, grid, f, &[t_eval], cfg)?.remove(0))
}

fn check_functional(problem: &SdeProblem, f: &Functional) -> Result<()> {
    if f.component() < problem.dim_state {
        Ok(())
    } else {
        Err(Error::Precondition(format!(
            "functional {f} reads component {} of a {}-dimensional state",
            f.component(),
            problem.dim_state
        )))
    }
}

struct Enumerator<'a, 'p> {
    integ: Integrator<'a>,
    grid: &'p TimeGrid,
    f: &'p Functional,
    outcomes: Vec<Vec<(StepIncrements, f64)>>,
    node_w: WeightValues,
    final_w: WeightValues,
}

struct Level {
    cache: StageCache,
    y: Vec<f64>,
}

impl Enumerator<'_, '_> {
    fn visit(&mut self, levels: &mut [Level], n: usize, y: &[f64], p: f64) -> Result<f64> {
        let (lvl, rest) = levels.split_first_mut().expect("one level per step");
        let last = n + 1 == self.outcomes.len();
        let (t_n, h) = (self.grid.node(n), self.grid.step_size(n));
        let mut sum = 0.0;
        for j in 0..self.outcomes[n].len() {
            let q = self.outcomes[n][j].1;
            self.integ
                .step_into(t_n, y, h, &self.outcomes[n][j].0, &mut lvl.cache)
                .map_err(|e| attach_step(e, n))?;
            if last {
                lvl.cache.evaluate_into(&self.final_w, &mut lvl.y);
                sum += p * q * self.f.evaluate(&lvl.y);
            } else {
                lvl.cache.evaluate_into(&self.node_w, &mut lvl.y);
                sum += self.visit(rest, n + 1, &lvl.y, p * q)?;
            }
        }
        Ok(sum)
    }
}

fn attach_step(e: Error, step: usize) -> Error {
    match e {
        Error::NumericalBlowup { t_n, stage, family, path, .. } => {
            Error::NumericalBlowup { t_n, stage, family, step: Some(step), path }
        }
        other => other,
    }
}

/// Exact `E f(Y)` over every noise outcome on `grid`, with the last step
/// evaluated at `theta_eval`.
///
/// The joint outcome tree is walked depth first and only one stage cache per
/// level is kept. Fails with [`Error::Capacity`] when the number of leaves
/// would exceed `outcome_cap`.
pub fn exact_weak_expectation(
    scheme: &CsrkTableau,
    problem: &SdeProblem,
    grid: &TimeGrid,
    f: &Functional,
    theta_eval: f64,
    outcome_cap: u64,
) -> Result<f64> {
    check_functional(problem, f)?;
    let final_w = scheme.weights_at(theta_eval)?;
    let m = problem.dim_noise;
    let steps = grid.steps();
    let required = outcome_count(m).powi(steps as i32);
    if required > outcome_cap as f64 {
        return Err(Error::Capacity { required, cap: outcome_cap });
    }
    let outcomes = (0..steps)
        .map(|n| enumerate(m, grid.step_size(n), u64::MAX).map(|e| e.outcomes))
        .collect::<Result<Vec<_>>>()?;
    let integ = Integrator::new(scheme, problem);
    let mut levels: Vec<Level> = (0..steps)
        .map(|_| Level { cache: integ.new_cache(), y: vec![0.0; problem.dim_state] })
        .collect();
    let node_w = integ.node_weights().clone();
    let mut e = Enumerator { integ, grid, f, outcomes, node_w, final_w };
    e.visit(&mut levels, 0, &problem.x0, 1.0)
}

/// Exact `E f(Y(t))`, using only the steps up to the one containing `t`.
pub fn exact_weak_expectation_at(
    scheme: &CsrkTableau,
    problem: &SdeProblem,
    grid: &TimeGrid,
    f: &Functional,
    t: f64,
    outcome_cap: u64,
) -> Result<f64> {
    let (n, theta) = grid.locate(t)?;
    let grid = grid.truncated(n + 1)?;
    exact_weak_expectation(scheme, problem, &grid, f, theta, outcome_cap)
}

/// One row of an error table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorRecord {
    pub h: f64,
    pub mean_error: f64,
    pub variance_of_mean: f64,
    pub half_width: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub samples: u64,
    /// The grid's last step is shorter than `h`.
    pub shortened: bool,
}

impl ErrorRecord {
    pub fn from_estimate(h: f64, est: &MonteCarloEstimate, exact: f64, shortened: bool) -> Self {
        let mean_error = est.mean - exact;
        Self {
            h,
            mean_error,
            variance_of_mean: est.variance_of_mean,
            half_width: est.half_width,
            ci_low: mean_error - est.half_width,
            ci_high: mean_error + est.half_width,
            samples: est.samples,
            shortened,
        }
    }
}

/// Monte Carlo errors `u_{M,h} − E f(X(t_eval))` for each step size.
#[allow(clippy::too_many_arguments)]
pub fn error_table(
    scheme: &CsrkTableau,
    problem: &SdeProblem,
    f: &Functional,
    reference: &ReferenceSolution,
    t_eval: f64,
    h_list: &[f64],
    cfg: &McConfig,
    allow_short_final_step: bool,
) -> Result<Vec<ErrorRecord>> {
    check_reference(f, reference)?;
    let exact = reference.value(t_eval);
    h_list
        .iter()
        .map(|&h| {
            let grid = TimeGrid::with_step(problem.t0, problem.t_end, h, allow_short_final_step)?;
            let est = mc_expectation(scheme, problem, &grid, f, t_eval, cfg)?;
            Ok(ErrorRecord::from_estimate(h, &est, exact, grid.is_shortened()))
        })
        .collect()
}

fn check_reference(f: &Functional, reference: &ReferenceSolution) -> Result<()> {
    if &reference.functional == f {
        Ok(())
    } else {
        Err(Error::MissingReference(format!("{f} (reference is for {})", reference.functional)))
    }
}

/// Error of the dense value at `tₙ + θhₙ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseErrorRecord {
    pub step: usize,
    pub theta: f64,
    pub t: f64,
    pub record: ErrorRecord,
}

/// Errors at every step and every θ of `theta_list`, from one set of paths.
pub fn dense_error_profile(
    scheme: &CsrkTableau,
    problem: &SdeProblem,
    f: &Functional,
    reference: &ReferenceSolution,
    h: f64,
    theta_list: &[f64],
    cfg: &McConfig,
) -> Result<Vec<DenseErrorRecord>> {
    check_reference(f, reference)?;
    if let Some(&th) = theta_list.iter().find(|th| !(0.0..=1.0).contains(*th)) {
        return Err(Error::ThetaOutOfRange(th));
    }
    let grid = TimeGrid::with_step(problem.t0, problem.t_end, h, false)?;
    let mut cells = Vec::new();
    for n in 0..grid.steps() {
        for &th in theta_list {
            cells.push((n, th, grid.node(n) + th * grid.step_size(n)));
        }
    }
    // the affine time can round across a node; query by (step, θ) directly
    cfg.validate()?;
    check_functional(problem, f)?;
    let queries = cells
        .iter()
        .map(|&(step, th, _)| Ok(Query { step, weights: scheme.weights_at(th)? }))
        .collect::<Result<Vec<_>>>()?;
    let chunks = run_paths(scheme, problem, &grid, f, &queries, cfg)?;
    cells
        .iter()
        .enumerate()
        .map(|(qi, &(step, theta, t))| {
            let est = summarize(&chunks, qi, cfg, t)?;
            let record = ErrorRecord::from_estimate(grid.step_size(step), &est, reference.value(t), false);
            Ok(DenseErrorRecord { step, theta, t, record })
        })
        .collect()
}

/// Least-squares fit of `log₂|err| = slope·log₂h + intercept`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderEstimate {
    /// `(h, |error|)` pairs used in the fit.
    pub pairs: Vec<(f64, f64)>,
    /// Step sizes dropped because their error was zero or not finite.
    pub excluded: Vec<f64>,
    pub slope: f64,
    pub intercept: f64,
}

/// Empirical order from `(h, error)` pairs; the sign of the error is ignored.
pub fn empirical_order(pairs: &[(f64, f64)]) -> Result<OrderEstimate> {
    let mut used = Vec::new();
    let mut excluded = Vec::new();
    for &(h, e) in pairs {
        let e = e.abs();
        if e > 0.0 && e.is_finite() && h > 0.0 {
            used.push((h, e));
        } else {
            excluded.push(h);
        }
    }
    if used.len() < 2 {
        return Err(Error::Estimation(used.len()));
    }
    let n = used.len() as f64;
    let xs: Vec<f64> = used.iter().map(|p| p.0.log2()).collect();
    let ys: Vec<f64> = used.iter().map(|p| p.1.log2()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::Precondition("order estimation needs distinct step sizes".into()));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    Ok(OrderEstimate { pairs: used, excluded, slope, intercept: my - slope * mx })
}

pub fn empirical_order_records(records: &[ErrorRecord]) -> Result<OrderEstimate> {
    let pairs: Vec<(f64, f64)> = records.iter().map(|r| (r.h, r.mean_error)).collect();
    empirical_order(&pairs)
}
