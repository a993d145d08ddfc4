use anyhow::{anyhow, Context};
use csrk_core::stats::{dense_error_profile, exact_weak_expectation_at};
use csrk_core::tableau::{check_conditions_for, to_document, uniform_theta_grid};
use csrk_core::{
    builtin_scheme, empirical_order, error_table, exact_weak_expectation, path_stream, simulate_path,
    CsrkTableau, Error, Functional, OrderEstimate, Provenance, ReferenceSolution, SdeProblem, TimeGrid,
    BUILTIN_NAMES,
};

use crate::config::{CommandKind, ReferenceChoice, RunConfig};
use crate::output::{render, Cell, Document, Header, Rendered};

/// Result of one run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Outcome {
    pub rendered: Rendered,
    /// False when `check` found a failing condition.
    pub success: bool,
}

pub fn run(cfg: &RunConfig) -> anyhow::Result<Outcome> {
    let mut reference = None;
    let mut success = true;
    let doc = match cfg.command {
        CommandKind::Schemes => schemes(cfg)?,
        CommandKind::Check => {
            let (doc, pass) = check(cfg)?;
            success = pass;
            doc
        }
        CommandKind::Simulate => simulate(cfg)?,
        CommandKind::ErrorTable | CommandKind::Converge => {
            let (doc, r) = errors(cfg)?;
            reference = Some(r);
            doc
        }
        CommandKind::Dense => {
            let (doc, r) = dense(cfg)?;
            reference = Some(r);
            doc
        }
        CommandKind::LocalOrder => {
            let (doc, r) = local_order(cfg)?;
            reference = Some(r);
            doc
        }
        CommandKind::ExactOrder => {
            let (doc, r) = exact_order(cfg)?;
            reference = Some(r);
            doc
        }
    };
    let header = Header { config: cfg.clone(), reference };
    Ok(Outcome { rendered: render(&header, &doc, cfg.format), success })
}

/// The reference for `f`: the requested provenance exactly, or the derived
/// closed form when available and the stated one otherwise.
pub fn select_reference(
    problem: &SdeProblem,
    f: &Functional,
    choice: Option<ReferenceChoice>,
) -> anyhow::Result<ReferenceSolution> {
    let found = match choice {
        Some(c) => problem
            .references()
            .iter()
            .find(|r| &r.functional == f && r.provenance == c.provenance()),
        None => problem.reference(f, Provenance::DerivedClosedForm),
    };
    found.cloned().ok_or_else(|| {
        let have: Vec<String> = problem
            .references()
            .iter()
            .map(|r| format!("{} {}", r.provenance.as_str(), r.functional))
            .collect();
        let want = match choice {
            Some(c) => format!("{f} ({})", c.provenance().as_str()),
            None => f.to_string(),
        };
        anyhow!(Error::MissingReference(want)).context(format!(
            "problem {} has references: {}",
            problem.label,
            have.join(", ")
        ))
    })
}

fn reference_tag(r: &ReferenceSolution) -> String {
    format!("{} {}", r.provenance.as_str(), r.functional)
}

fn schemes(cfg: &RunConfig) -> anyhow::Result<Document> {
    let list: Vec<CsrkTableau> = match &cfg.scheme {
        Some(src) => vec![src.load()?],
        None => BUILTIN_NAMES.iter().map(|n| builtin_scheme(n)).collect::<csrk_core::Result<_>>()?,
    };
    let mut doc = Document::new([
        "name",
        "stages",
        "p_deterministic",
        "p_stochastic",
        "uses_cross_family",
        "declared_conditions",
    ]);
    for t in &list {
        let meta = t.meta();
        doc.push(vec![
            t.name().into(),
            t.stages().into(),
            meta.p_deterministic.into(),
            meta.p_stochastic.into(),
            t.uses_cross_family().into(),
            meta.declared_conditions.len().into(),
        ]);
    }
    if let [t] = list.as_slice() {
        if cfg.scheme.is_some() {
            doc.extra = Some(serde_json::to_value(to_document(t))?);
        }
    }
    Ok(doc)
}

fn check(cfg: &RunConfig) -> anyhow::Result<(Document, bool)> {
    let settings = cfg.check.as_ref().context("check settings missing")?;
    let list: Vec<CsrkTableau> = match &cfg.scheme {
        Some(src) => vec![src.load()?],
        None => BUILTIN_NAMES.iter().map(|n| builtin_scheme(n)).collect::<csrk_core::Result<_>>()?,
    };
    let grid = uniform_theta_grid(settings.grid_points);
    let mut doc = Document::new(["scheme", "condition", "residual", "worst_theta", "pass", "description"]);
    let mut verdicts = Vec::new();
    let (mut checked, mut failed) = (0usize, 0usize);
    for t in &list {
        let ids = settings.conditions.ids(t);
        let report = check_conditions_for(t, &ids, &grid, settings.tol)?;
        for r in &report.records {
            doc.push(vec![
                t.name().into(),
                r.id.to_string().into(),
                r.residual.into(),
                r.worst_theta.into(),
                r.pass.into(),
                r.description.clone().into(),
            ]);
        }
        checked += report.records.len();
        failed += report.failures().count();
        verdicts.push((t.name().to_string(), report.pass));
    }
    doc.note("tolerance", settings.tol);
    doc.note("conditions_checked", checked);
    doc.note("failures", failed);
    for (name, pass) in verdicts {
        doc.note(format!("pass[{name}]"), pass);
    }
    Ok((doc, failed == 0))
}

fn simulate(cfg: &RunConfig) -> anyhow::Result<Document> {
    let scheme = cfg.scheme()?;
    let problem = cfg.problem()?;
    let h = cfg.h.context("simulate needs a step size")?;
    let grid = TimeGrid::with_step(problem.t0, problem.t_end, h, cfg.allow_short_step)?;
    let seed = cfg.seed.unwrap_or_default();
    let path = simulate_path(&scheme, &problem, &grid, &mut path_stream(seed, 0))?;

    let mut thetas: Vec<f64> = vec![0.0];
    thetas.extend(cfg.theta_list.iter().flatten().copied().filter(|&th| th < 1.0));
    thetas.sort_by(f64::total_cmp);
    thetas.dedup();

    let mut columns = vec!["step".to_string(), "theta".into(), "t".into()];
    columns.extend((0..problem.dim_state).map(|i| format!("y[{i}]")));
    let mut doc = Document::new(columns);
    let row = |n: usize, th: f64, t: f64, y: &[f64]| {
        let mut r: Vec<Cell> = vec![n.into(), th.into(), t.into()];
        r.extend(y.iter().map(|&v| Cell::Num(v)));
        r
    };
    for (n, cache) in path.caches().iter().enumerate() {
        for &th in &thetas {
            let y = cache.evaluate_dense(&scheme, th)?;
            doc.push(row(n, th, grid.node(n) + th * grid.step_size(n), &y));
        }
    }
    let last = grid.steps() - 1;
    doc.push(row(last, 1.0, grid.t_end(), &path.nodes()[grid.steps()]));
    doc.note("steps", grid.steps());
    doc.note("shortened", grid.is_shortened());
    Ok(doc)
}

fn note_order(doc: &mut Document, key: &str, fit: csrk_core::Result<OrderEstimate>) {
    match fit {
        Ok(o) => {
            doc.note(format!("{key}slope"), o.slope);
            doc.note(format!("{key}intercept"), o.intercept);
            doc.note(format!("{key}fitted_points"), o.pairs.len());
            let excluded: Vec<String> = o.excluded.iter().map(|h| format!("{h:.16e}")).collect();
            doc.note(format!("{key}excluded_h"), excluded.join(";"));
        }
        Err(e) => {
            eprintln!("warning: {e}");
            doc.note(format!("{key}slope"), f64::NAN);
        }
    }
}

fn errors(cfg: &RunConfig) -> anyhow::Result<(Document, String)> {
    let scheme = cfg.scheme()?;
    let problem = cfg.problem()?;
    let f = cfg.functional()?;
    let reference = select_reference(&problem, &f, cfg.reference)?;
    let mc = cfg.monte_carlo.context("Monte Carlo settings missing")?.to_config(cfg.threads);
    let t_eval = cfg.t_eval.context("t_eval missing")?;
    let h_list = cfg.h_list.as_deref().context("h list missing")?;
    let records = error_table(&scheme, &problem, &f, &reference, t_eval, h_list, &mc, cfg.allow_short_step)?;

    let plot = cfg.command == CommandKind::Converge;
    let mut columns = vec![
        "h",
        "mean_error",
        "variance_of_mean",
        "ci_low",
        "ci_high",
        "half_width",
        "samples",
        "shortened",
    ];
    if plot {
        columns.extend(["log2_h", "log2_abs_error"]);
    }
    let mut doc = Document::new(columns);
    for r in &records {
        let mut row: Vec<Cell> = vec![
            r.h.into(),
            r.mean_error.into(),
            r.variance_of_mean.into(),
            r.ci_low.into(),
            r.ci_high.into(),
            r.half_width.into(),
            r.samples.into(),
            r.shortened.into(),
        ];
        if plot {
            row.extend([r.h.log2().into(), r.mean_error.abs().log2().into()]);
        }
        doc.push(row);
    }
    doc.note("t_eval", t_eval);
    doc.note("reference_value", reference.value(t_eval));
    doc.note("confidence", mc.confidence);
    let pairs: Vec<(f64, f64)> = records.iter().map(|r| (r.h, r.mean_error)).collect();
    note_order(&mut doc, "", empirical_order(&pairs));
    Ok((doc, reference_tag(&reference)))
}

fn dense(cfg: &RunConfig) -> anyhow::Result<(Document, String)> {
    let scheme = cfg.scheme()?;
    let problem = cfg.problem()?;
    let f = cfg.functional()?;
    let reference = select_reference(&problem, &f, cfg.reference)?;
    let mc = cfg.monte_carlo.context("Monte Carlo settings missing")?.to_config(cfg.threads);
    let h = cfg.h.context("step size missing")?;
    let thetas = cfg.theta_list.as_deref().context("theta list missing")?;
    let records = dense_error_profile(&scheme, &problem, &f, &reference, h, thetas, &mc)?;

    let mut doc = Document::new([
        "t",
        "theta",
        "step",
        "mean_error",
        "variance_of_mean",
        "ci_low",
        "ci_high",
        "half_width",
        "samples",
    ]);
    for d in &records {
        let r = &d.record;
        doc.push(vec![
            d.t.into(),
            d.theta.into(),
            d.step.into(),
            r.mean_error.into(),
            r.variance_of_mean.into(),
            r.ci_low.into(),
            r.ci_high.into(),
            r.half_width.into(),
            r.samples.into(),
        ]);
    }
    doc.note("h", h);
    doc.note("confidence", mc.confidence);
    Ok((doc, reference_tag(&reference)))
}

fn local_order(cfg: &RunConfig) -> anyhow::Result<(Document, String)> {
    let scheme = cfg.scheme()?;
    let problem = cfg.problem()?;
    let f = cfg.functional()?;
    let reference = select_reference(&problem, &f, cfg.reference)?;
    let cap = cfg.outcome_cap.context("outcome cap missing")?;
    let h_list = cfg.h_list.as_deref().context("h list missing")?;
    let thetas = cfg.theta_list.as_deref().context("theta list missing")?;

    let mut doc = Document::new(["h", "theta", "scheme_value", "reference_value", "error"]);
    let mut fits = Vec::new();
    for &th in thetas {
        let mut pairs = Vec::new();
        for &h in h_list {
            let grid = TimeGrid::uniform(problem.t0, problem.t0 + h, 1)?;
            let value = exact_weak_expectation(&scheme, &problem, &grid, &f, th, cap)?;
            let exact = reference.value(problem.t0 + th * h);
            doc.push(vec![h.into(), th.into(), value.into(), exact.into(), (value - exact).into()]);
            pairs.push((h, value - exact));
        }
        fits.push((th, empirical_order(&pairs)));
    }
    for (th, fit) in fits {
        note_order(&mut doc, &format!("theta={th}:"), fit);
    }
    Ok((doc, reference_tag(&reference)))
}

fn exact_order(cfg: &RunConfig) -> anyhow::Result<(Document, String)> {
    let scheme = cfg.scheme()?;
    let problem = cfg.problem()?;
    let f = cfg.functional()?;
    let reference = select_reference(&problem, &f, cfg.reference)?;
    let cap = cfg.outcome_cap.context("outcome cap missing")?;
    let t_eval = cfg.t_eval.context("t_eval missing")?;
    let n_list = cfg.n_list.as_deref().context("N list missing")?;
    let exact = reference.value(t_eval);

    let mut doc = Document::new(["N", "h", "scheme_value", "reference_value", "error"]);
    let mut pairs = Vec::new();
    for &n in n_list {
        let grid = TimeGrid::uniform(problem.t0, problem.t_end, n)?;
        let h = grid.max_step();
        let value = exact_weak_expectation_at(&scheme, &problem, &grid, &f, t_eval, cap)?;
        doc.push(vec![n.into(), h.into(), value.into(), exact.into(), (value - exact).into()]);
        pairs.push((h, value - exact));
    }
    doc.note("t_eval", t_eval);
    note_order(&mut doc, "", empirical_order(&pairs));
    Ok((doc, reference_tag(&reference)))
}
