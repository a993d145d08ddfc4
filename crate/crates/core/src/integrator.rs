//! One CSRK step, dense evaluation inside the step, and whole paths.
//!
//! A step evaluates the drift at the `H⁽⁰⁾` stages, diffusion column `k` at the
//! `H⁽ᵏ⁾` stages and, for `k ≠ l`, column `k` at the `Ĥ⁽ˡ⁾` stages. Those values
//! are kept in a [`StageCache`]; `Y(tₙ + θh)` for any θ is then a weighted sum
//! over the cache and never calls drift or diffusion again.

use rand::Rng;

use crate::error::{Error, Result, StageFamily};
use crate::increments::StepIncrements;
use crate::sde_model::SdeProblem;
use crate::tableau::{CsrkTableau, Matrix, WeightValues};

/// Relative slack when deciding whether `h` divides the horizon.
const GRID_DIVISIBILITY_TOL: f64 = 1e-9;

/// Discretisation `t₀ < t₁ < … < t_N = T`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    nodes: Vec<f64>,
    shortened: bool,
}

impl TimeGrid {
    /// `n` equal steps; the last node is `t_end` exactly.
    pub fn uniform(t0: f64, t_end: f64, n: usize) -> Result<Self> {
        if n == 0 || !(t0 < t_end) {
            return Err(Error::InvalidGrid(format!("need n >= 1 and t0 < T (n = {n})")));
        }
        let h = (t_end - t0) / n as f64;
        let mut nodes: Vec<f64> = (0..n).map(|i| t0 + i as f64 * h).collect();
        nodes.push(t_end);
        Ok(Self { nodes, shortened: false })
    }

    /// Equidistant grid with step `h`. If `h` does not divide `T − t₀` the grid
    /// is rejected unless `allow_short_final_step`, in which case the last step
    /// is shortened and [`TimeGrid::is_shortened`] reports it.
    pub fn with_step(t0: f64, t_end: f64, h: f64, allow_short_final_step: bool) -> Result<Self> {
        if !(h > 0.0) || !(t0 < t_end) {
            return Err(Error::InvalidGrid(format!("need h > 0 and t0 < T, got h = {h}")));
        }
        let span = t_end - t0;
        let ratio = span / h;
        let n = ratio.round();
        if (ratio - n).abs() <= GRID_DIVISIBILITY_TOL * ratio.max(1.0) && n >= 1.0 {
            return Self::uniform(t0, t_end, n as usize);
        }
        if !allow_short_final_step {
            return Err(Error::InvalidGrid(format!(
                "h = {h} does not divide the horizon [{t0}, {t_end}]"
            )));
        }
        let full = ratio.floor() as usize;
        let mut nodes: Vec<f64> = (0..=full).map(|i| t0 + i as f64 * h).collect();
        nodes.push(t_end);
        Ok(Self { nodes, shortened: true })
    }

    pub fn from_nodes(nodes: Vec<f64>) -> Result<Self> {
        if nodes.len() < 2 || nodes.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidGrid("nodes must be strictly increasing, at least two".into()));
        }
        Ok(Self { nodes, shortened: false })
    }

    pub fn steps(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    #[inline]
    pub fn node(&self, n: usize) -> f64 {
        self.nodes[n]
    }

    #[inline]
    pub fn step_size(&self, n: usize) -> f64 {
        self.nodes[n + 1] - self.nodes[n]
    }

    pub fn t0(&self) -> f64 {
        self.nodes[0]
    }

    pub fn t_end(&self) -> f64 {
        *self.nodes.last().unwrap()
    }

    pub fn max_step(&self) -> f64 {
        (0..self.steps()).map(|n| self.step_size(n)).fold(0.0, f64::max)
    }

    pub fn is_shortened(&self) -> bool {
        self.shortened
    }

    /// Step index and θ for time `t`: steps are `[tₙ, tₙ₊₁)` and `T` belongs to
    /// the final step with θ = 1.
    pub fn locate(&self, t: f64) -> Result<(usize, f64)> {
        let (t0, t_end) = (self.t0(), self.t_end());
        if !(t0..=t_end).contains(&t) {
            return Err(Error::TimeOutOfRange { t, t0, t_end });
        }
        let last = self.steps() - 1;
        if t == t_end {
            return Ok((last, 1.0));
        }
        // first node strictly greater than t, minus one
        let n = self.nodes.partition_point(|&x| x <= t) - 1;
        let n = n.min(last);
        let theta = ((t - self.nodes[n]) / self.step_size(n)).clamp(0.0, 1.0);
        Ok((n, theta))
    }

    /// The first `n` steps of the grid.
    pub fn truncated(&self, n: usize) -> Result<Self> {
        if n == 0 || n > self.steps() {
            return Err(Error::InvalidGrid(format!("cannot keep {n} of {} steps", self.steps())));
        }
        Ok(Self { nodes: self.nodes[..=n].to_vec(), shortened: self.shortened && n == self.steps() })
    }
}

/// Function evaluations of one step.
#[derive(Debug, Clone, PartialEq)]
pub struct StageCache {
    t_n: f64,
    h: f64,
    sqrt_h: f64,
    y_n: Vec<f64>,
    increments: StepIncrements,
    s: usize,
    d: usize,
    m: usize,
    /// `a(tₙ + cᵢ⁽⁰⁾h, Hᵢ⁽⁰⁾)`, `s × d`.
    a_vals: Vec<f64>,
    /// `bᵏ(tₙ + cᵢ⁽¹⁾h, Hᵢ⁽ᵏ⁾)`, `s × m × d`.
    b_diag: Vec<f64>,
    /// `bᵏ(tₙ + cᵢ⁽²⁾h, Ĥᵢ⁽ˡ⁾)` at `[i][k][l]`, `s × m × m × d`; empty when the
    /// scheme has no cross family or `m = 1`.
    b_cross: Vec<f64>,
}

impl StageCache {
    fn empty(s: usize, d: usize, m: usize, cross: bool) -> Self {
        Self {
            t_n: 0.0,
            h: 0.0,
            sqrt_h: 0.0,
            y_n: vec![0.0; d],
            increments: StepIncrements::new(m, 0.0),
            s,
            d,
            m,
            a_vals: vec![0.0; s * d],
            b_diag: vec![0.0; s * m * d],
            b_cross: if cross { vec![0.0; s * m * m * d] } else { Vec::new() },
        }
    }

    pub fn t_n(&self) -> f64 {
        self.t_n
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn y_n(&self) -> &[f64] {
        &self.y_n
    }

    pub fn increments(&self) -> &StepIncrements {
        &self.increments
    }

    pub fn drift_value(&self, i: usize) -> &[f64] {
        &self.a_vals[i * self.d..(i + 1) * self.d]
    }

    pub fn diffusion_value(&self, i: usize, k: usize) -> &[f64] {
        let o = (i * self.m + k) * self.d;
        &self.b_diag[o..o + self.d]
    }

    /// Column `k` at stage `Ĥᵢ⁽ˡ⁾`, if the cross family was evaluated.
    pub fn cross_value(&self, i: usize, k: usize, l: usize) -> Option<&[f64]> {
        if self.b_cross.is_empty() || k == l {
            return None;
        }
        let o = ((i * self.m + k) * self.m + l) * self.d;
        Some(&self.b_cross[o..o + self.d])
    }

    fn has_cross(&self) -> bool {
        !self.b_cross.is_empty()
    }

    /// `Y(tₙ + θh)`.
    pub fn evaluate_dense(&self, scheme: &CsrkTableau, theta: f64) -> Result<Vec<f64>> {
        let w = scheme.weights_at(theta)?;
        let mut out = vec![0.0; self.d];
        self.evaluate_into(&w, &mut out);
        Ok(out)
    }

    /// `Y(tₙ + θh)` for pre-evaluated weights. θ = 0 copies `yₙ` bit for bit.
    pub fn evaluate_into(&self, w: &WeightValues, out: &mut [f64]) {
        out.copy_from_slice(&self.y_n);
        if w.theta == 0.0 {
            return;
        }
        let (s, d, m) = (self.s, self.d, self.m);
        let inc = &self.increments;
        let inv_sqrt_h = 1.0 / self.sqrt_h;
        for i in 0..s {
            let c = w.alpha[i] * self.h;
            if c != 0.0 {
                axpy(out, c, &self.a_vals[i * d..(i + 1) * d]);
            }
        }
        for i in 0..s {
            let (b1, b2) = (w.beta[0][i], w.beta[1][i]);
            if b1 == 0.0 && b2 == 0.0 {
                continue;
            }
            for k in 0..m {
                let c = b1 * inc.single(k) + b2 * inc.double(k, k) * inv_sqrt_h;
                if c != 0.0 {
                    axpy(out, c, self.diffusion_value(i, k));
                }
            }
        }
        if self.has_cross() {
            for i in 0..s {
                let (b3, b4) = (w.beta[2][i], w.beta[3][i]);
                if b3 == 0.0 && b4 == 0.0 {
                    continue;
                }
                for k in 0..m {
                    for l in (0..m).filter(|&l| l != k) {
                        let c = b3 * inc.single(k) + b4 * inc.double(k, l) * inv_sqrt_h;
                        if c != 0.0 {
                            let o = ((i * m + k) * m + l) * d;
                            axpy(out, c, &self.b_cross[o..o + d]);
                        }
                    }
                }
            }
        }
    }
}

#[inline]
fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

fn check_finite(v: &[f64], t_n: f64, stage: usize, family: StageFamily) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NumericalBlowup { t_n, stage, family, step: None, path: None })
    }
}

/// Nonzero strictly-lower entries of a coefficient matrix, row by row.
type SparseRows = Vec<Vec<(usize, f64)>>;

fn sparse_rows(m: &Matrix) -> SparseRows {
    (0..m.dim())
        .map(|i| (0..i).filter_map(|j| Some((j, m.get(i, j))).filter(|e| e.1 != 0.0)).collect())
        .collect()
}

/// Reusable stepping engine for one (scheme, problem) pair.
pub struct Integrator<'a> {
    scheme: &'a CsrkTableau,
    problem: &'a SdeProblem,
    cross: bool,
    node_weights: WeightValues,
    a_rows: [SparseRows; 3],
    b_rows: [SparseRows; 3],
    stage: Vec<f64>,
    base: Vec<f64>,
}

impl<'a> Integrator<'a> {
    pub fn new(scheme: &'a CsrkTableau, problem: &'a SdeProblem) -> Self {
        let cross = scheme.uses_cross_family() && problem.dim_noise > 1;
        Self {
            scheme,
            problem,
            cross,
            node_weights: scheme.weights_at(1.0).expect("theta = 1 is in range"),
            a_rows: [0, 1, 2].map(|q| sparse_rows(scheme.a(q))),
            b_rows: [0, 1, 2].map(|q| sparse_rows(scheme.b(q))),
            stage: vec![0.0; problem.dim_state],
            base: vec![0.0; problem.dim_state],
        }
    }

    pub fn scheme(&self) -> &'a CsrkTableau {
        self.scheme
    }

    pub fn problem(&self) -> &'a SdeProblem {
        self.problem
    }

    /// Weights at θ = 1.
    pub fn node_weights(&self) -> &WeightValues {
        &self.node_weights
    }

    pub fn new_cache(&self) -> StageCache {
        StageCache::empty(
            self.scheme.stages(),
            self.problem.dim_state,
            self.problem.dim_noise,
            self.cross,
        )
    }

    /// Fills `cache` with the stage evaluations of the step from `(t_n, y_n)`.
    pub fn step_into(
        &mut self,
        t_n: f64,
        y_n: &[f64],
        h: f64,
        inc: &StepIncrements,
        cache: &mut StageCache,
    ) -> Result<()> {
        let (sch, prob) = (self.scheme, self.problem);
        let (s, d, m) = (sch.stages(), prob.dim_state, prob.dim_noise);
        if !(h > 0.0) || inc.h() != h || inc.dim() != m || y_n.len() != d {
            return Err(Error::Precondition(format!(
                "step needs h > 0 matching the increments (h = {h}, increments h = {})",
                inc.h()
            )));
        }
        let sqrt_h = h.sqrt();
        cache.t_n = t_n;
        cache.h = h;
        cache.sqrt_h = sqrt_h;
        cache.y_n.copy_from_slice(y_n);
        cache.increments.assign(inc);
        let (stage, base) = (&mut self.stage, &mut self.base);

        for i in 0..s {
            // H_i^(0)
            stage.copy_from_slice(y_n);
            for &(j, c) in &self.a_rows[0][i] {
                axpy(stage, c * h, &cache.a_vals[j * d..(j + 1) * d]);
            }
            for &(j, c) in &self.b_rows[0][i] {
                for r in 0..m {
                    let o = (j * m + r) * d;
                    axpy(stage, c * inc.single(r), &cache.b_diag[o..o + d]);
                }
            }
            let out = &mut cache.a_vals[i * d..(i + 1) * d];
            prob.drift(t_n + sch.c(0)[i] * h, stage, out);
            check_finite(out, t_n, i, StageFamily::Drift)?;

            // H_i^(k): the drift part is shared by every k
            base.copy_from_slice(y_n);
            for &(j, c) in &self.a_rows[1][i] {
                axpy(base, c * h, &cache.a_vals[j * d..(j + 1) * d]);
            }
            for k in 0..m {
                stage.copy_from_slice(base);
                for &(j, c) in &self.b_rows[1][i] {
                    let o = (j * m + k) * d;
                    axpy(stage, c * sqrt_h, &cache.b_diag[o..o + d]);
                }
                let o = (i * m + k) * d;
                let out = &mut cache.b_diag[o..o + d];
                prob.diffusion_column(t_n + sch.c(1)[i] * h, stage, k, out);
                check_finite(out, t_n, i, StageFamily::Diffusion)?;
            }

            // Ĥ_i^(l), feeding column k ≠ l
            if self.cross {
                base.copy_from_slice(y_n);
                for &(j, c) in &self.a_rows[2][i] {
                    axpy(base, c * h, &cache.a_vals[j * d..(j + 1) * d]);
                }
                for l in 0..m {
                    stage.copy_from_slice(base);
                    for &(j, c) in &self.b_rows[2][i] {
                        let o = (j * m + l) * d;
                        axpy(stage, c * sqrt_h, &cache.b_diag[o..o + d]);
                    }
                    for k in (0..m).filter(|&k| k != l) {
                        let o = ((i * m + k) * m + l) * d;
                        let out = &mut cache.b_cross[o..o + d];
                        prob.diffusion_column(t_n + sch.c(2)[i] * h, stage, k, out);
                        check_finite(out, t_n, i, StageFamily::CrossDiffusion)?;
                    }
                }
            }
        }
        Ok(())
    }
}

/// Computes the stage cache of a single step.
pub fn compute_step(
    scheme: &CsrkTableau,
    problem: &SdeProblem,
    t_n: f64,
    y_n: &[f64],
    h: f64,
    inc: &StepIncrements,
) -> Result<StageCache> {
    let mut integ = Integrator::new(scheme, problem);
    let mut cache = integ.new_cache();
    integ.step_into(t_n, y_n, h, inc, &mut cache)?;
    Ok(cache)
}

/// A simulated path with its per-step caches; queryable at any `t ∈ [t₀, T]`.
#[derive(Debug, Clone)]
pub struct ContinuousPath<'a> {
    grid: TimeGrid,
    scheme: &'a CsrkTableau,
    caches: Vec<StageCache>,
    nodes: Vec<Vec<f64>>,
}

impl<'a> ContinuousPath<'a> {
    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn caches(&self) -> &[StageCache] {
        &self.caches
    }

    /// Node states `Y(t₀), …, Y(t_N)`.
    pub fn nodes(&self) -> &[Vec<f64>] {
        &self.nodes
    }

    /// Dense value at time `t`.
    pub fn query(&self, t: f64) -> Result<Vec<f64>> {
        let (n, theta) = self.grid.locate(t)?;
        self.caches[n].evaluate_dense(self.scheme, theta)
    }
}

/// Simulates one path over `grid`, drawing fresh increments for every step.
pub fn simulate_path<'a, R: Rng + ?Sized>(
    scheme: &'a CsrkTableau,
    problem: &SdeProblem,
    grid: &TimeGrid,
    rng: &mut R,
) -> Result<ContinuousPath<'a>> {
    let mut integ = Integrator::new(scheme, problem);
    let mut y = problem.x0.clone();
    let mut nodes = vec![y.clone()];
    let mut caches = Vec::with_capacity(grid.steps());
    let mut inc = StepIncrements::new(problem.dim_noise, grid.step_size(0));
    for n in 0..grid.steps() {
        let h = grid.step_size(n);
        inc.resample(h, rng);
        let mut cache = integ.new_cache();
        integ.step_into(grid.node(n), &y, h, &inc, &mut cache).map_err(|e| match e {
            Error::NumericalBlowup { t_n, stage, family, path, .. } => {
                Error::NumericalBlowup { t_n, stage, family, step: Some(n), path }
            }
            other => other,
        })?;
        cache.evaluate_into(integ.node_weights(), &mut y);
        nodes.push(y.clone());
        caches.push(cache);
    }
    Ok(ContinuousPath { grid: grid.clone(), scheme, caches, nodes })
}
