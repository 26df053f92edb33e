//! Batch front end: JSON problem files in, verification reports out.
//!
//! Exit status is 0 when every verdict passes, 2 when a verdict fails and 1
//! on unreadable or invalid input.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::calculus::{
    advective_term, compose, epsilon_delta_witness, gradient, point_assignment, total_derivative,
    velocity, Curve, PathFunction, ScalarField, Smoothness, ToleranceConfig, TIME,
};
use crate::cases::{
    solve_e_case, solve_f_case, solve_p_case, verify_composition, CaseSolution, CurvePath,
    Diagnostics, SkewMatrix,
};
use crate::error::Error;
use crate::expr::{equivalence, Assignment, Expr};
use crate::filters::{
    ball_filter_limit, filter_limit, general_function_limit, image_filter, is_filter,
    principal_filter, ElementMap, FiniteSpace, Partition, Subset,
};
use crate::genfun::{
    coherence_check, direct_prolongation, FunctionalElement, GeneralFunction, Metadata, Region,
};
use crate::geometry::{exterior_derivative, hamilton_jacobi_residual, pairing, skew_field};
use crate::sampling;

pub const TASKS: [(&str, &str); 10] = [
    (
        "derive",
        "gradient, velocity, composition and total derivative of E along p",
    ),
    (
        "solve-e",
        "integral curve and path function from a field and a skew matrix",
    ),
    (
        "solve-p",
        "field and path function from a C2 curve, a skew matrix and T(t)",
    ),
    ("solve-f", "curve and field family from a path function"),
    (
        "verify",
        "check f(t) = E(p(t), t) and df/dt = (V·∇)E + ∂E/∂t",
    ),
    (
        "pairing",
        "pair dE with the skew vector field and compare with ∂E/∂t",
    ),
    ("hj", "Hamilton–Jacobi residual of an action S"),
    (
        "prolong",
        "pairwise direct prolongation of functional elements",
    ),
    (
        "filter",
        "filter axioms, limits and image filters on finite sets",
    ),
    (
        "ball-limit",
        "shrinking-ball limit of the total-derivative bracket",
    ),
];

/// Fixed bar for comparing two numerical realizations of the same limit.
pub const LIMIT_AGREEMENT: f64 = 1e-6;
/// Default number of sample times for closed-form checks and series.
pub const DEFAULT_SAMPLES: usize = 16;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("cannot write {path}: {source}")]
    Write {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("malformed problem file: {0}")]
    Json(#[from] serde_json::Error),
    #[error("series file: {0}")]
    Csv(#[from] csv::Error),
    #[error("task {task}: missing field `{field}`")]
    Missing { task: String, field: &'static str },
    #[error("field `{field}`: {source}")]
    Field { field: &'static str, source: Error },
    #[error("unknown task `{0}` (see list-tasks)")]
    UnknownTask(String),
    #[error(transparent)]
    Library(#[from] Error),
}

fn field_err(field: &'static str) -> impl FnOnce(Error) -> CliError {
    move |source| CliError::Field { field, source }
}

#[derive(Debug, Parser)]
#[command(
    name = "pathcalc",
    version,
    about = "Fields, curves and path functions, checked numerically"
)]
pub struct Args {
    /// Print the available tasks and exit.
    #[arg(long)]
    pub list_tasks: bool,
    #[command(subcommand)]
    pub command: Option<Command>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a problem file.
    Run {
        file: PathBuf,
        /// Write the machine-readable report here.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override the identity tolerance.
        #[arg(long)]
        tol: Option<f64>,
        /// Override the integration step.
        #[arg(long)]
        step: Option<f64>,
        /// Write the sampled series as CSV here.
        #[arg(long)]
        series: Option<PathBuf>,
    },
    /// List the available tasks.
    ListTasks,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ElementSpec {
    pub expr: String,
    pub coords: Option<Vec<String>>,
    pub lower: Option<Vec<f64>>,
    pub upper: Option<Vec<f64>>,
    pub center: Option<Vec<f64>>,
    pub radius: Option<f64>,
    pub points: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    pub task: String,
    pub dimension: Option<usize>,
    #[serde(rename = "E")]
    pub field: Option<String>,
    pub curve: Option<Vec<String>>,
    /// `C1` or `C2`.
    pub smoothness: Option<String>,
    pub f: Option<String>,
    #[serde(rename = "T")]
    pub offset: Option<String>,
    #[serde(rename = "G")]
    pub invariant: Option<String>,
    #[serde(rename = "S")]
    pub action: Option<String>,
    #[serde(rename = "H")]
    pub hamiltonian: Option<String>,
    pub b: Option<Vec<Vec<f64>>>,
    pub t0: Option<f64>,
    pub t1: Option<f64>,
    /// Single evaluation time for `derive` and `ball-limit`.
    pub t: Option<f64>,
    pub x0: Option<Vec<f64>>,
    pub step: Option<f64>,
    pub tol: Option<f64>,
    pub epsilon: Option<f64>,
    pub samples: Option<usize>,
    pub dof: Option<usize>,
    pub constants: Option<BTreeMap<String, f64>>,
    pub elements: Option<Vec<ElementSpec>>,
    #[serde(rename = "D")]
    pub domain: Option<Vec<String>>,
    #[serde(rename = "K")]
    pub codomain: Option<Vec<String>>,
    pub blocks: Option<Vec<Vec<String>>>,
    pub map: Option<BTreeMap<String, String>>,
    pub family: Option<Vec<Vec<String>>>,
    pub generator: Option<Vec<String>>,
    pub limit: Option<Vec<String>>,
    pub block: Option<usize>,
    pub target: Option<Vec<String>>,
    pub expect: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Verdict {
    pub name: String,
    pub residual: f64,
    pub threshold: f64,
    pub pass: bool,
}

impl Verdict {
    pub fn at_most(name: &str, residual: f64, threshold: f64) -> Self {
        Verdict {
            name: name.to_string(),
            residual,
            threshold,
            pass: residual <= threshold,
        }
    }

    fn holds(name: &str, ok: bool) -> Self {
        Verdict::at_most(name, if ok { 0.0 } else { 1.0 }, 0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SeriesRow {
    pub t: f64,
    pub x: Vec<f64>,
    pub f: f64,
    pub e_of_p: f64,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub task: String,
    pub tolerance: f64,
    pub outputs: Map<String, Value>,
    pub verdicts: Vec<Verdict>,
    #[serde(skip)]
    pub series: Vec<SeriesRow>,
    #[serde(skip)]
    pub spatial_dim: usize,
}

impl Report {
    fn new(task: &str, tolerance: f64) -> Self {
        Report {
            task: task.to_string(),
            tolerance,
            outputs: Map::new(),
            verdicts: vec![],
            series: vec![],
            spatial_dim: 0,
        }
    }

    fn put(&mut self, key: &str, value: impl Into<Value>) {
        self.outputs.insert(key.to_string(), value.into());
    }

    pub fn passed(&self) -> bool {
        self.verdicts.iter().all(|v| v.pass)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    pub fn human(&self) -> String {
        let mut s = format!("task: {}\ntolerance: {:e}\n", self.task, self.tolerance);
        for (key, value) in &self.outputs {
            s += &format!("{key}: {value}\n");
        }
        for v in &self.verdicts {
            s += &format!(
                "{} {}: residual {:.3e} (threshold {:.3e})\n",
                if v.pass { "PASS" } else { "FAIL" },
                v.name,
                v.residual,
                v.threshold
            );
        }
        s += &format!(
            "{} of {} verdicts passed\n",
            self.verdicts.iter().filter(|v| v.pass).count(),
            self.verdicts.len()
        );
        s
    }
}

/// Flag overrides for a run.
#[derive(Debug, Clone, Copy, Default)]
pub struct Overrides {
    pub tol: Option<f64>,
    pub step: Option<f64>,
}

pub fn load_problem(path: &Path) -> Result<ProblemFile, CliError> {
    let text = fs::read_to_string(path).map_err(|source| CliError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(serde_json::from_str(&text)?)
}

fn need<'a, T>(
    p: &ProblemFile,
    value: &'a Option<T>,
    field: &'static str,
) -> Result<&'a T, CliError> {
    value.as_ref().ok_or_else(|| CliError::Missing {
        task: p.task.clone(),
        field,
    })
}

fn expr(text: &str, field: &'static str) -> Result<Expr, CliError> {
    text.parse::<Expr>()
        .map_err(|e| field_err(field)(Error::from(e)))
}

fn show_all(exprs: &[Expr]) -> Value {
    exprs.iter().map(|e| Value::from(e.to_string())).collect()
}

fn uniform(t0: f64, t1: f64, count: usize) -> Vec<f64> {
    match count {
        0 => vec![],
        1 => vec![t0],
        n => (0..n)
            .map(|k| t0 + (t1 - t0) * k as f64 / (n - 1) as f64)
            .collect(),
    }
}

struct Context<'a> {
    p: &'a ProblemFile,
    cfg: ToleranceConfig,
    tol: f64,
}

impl Context<'_> {
    fn curve(&self) -> Result<Curve, CliError> {
        let components = need(self.p, &self.p.curve, "curve")?;
        let mut curve = Curve::parse(components).map_err(field_err("curve"))?;
        match self.p.smoothness.as_deref() {
            None | Some("C2") => {}
            Some("C1") => curve = curve.with_smoothness(Smoothness::C1),
            Some(other) => {
                return Err(field_err("smoothness")(Error::invalid(format!(
                    "expected C1 or C2, got `{other}`"
                ))))
            }
        }
        Ok(curve)
    }

    fn dimension(&self) -> Result<usize, CliError> {
        if let Some(n) = self.p.dimension {
            return Ok(n);
        }
        if let Some(c) = &self.p.curve {
            return Ok(c.len() + 1);
        }
        if let Some(x0) = &self.p.x0 {
            return Ok(x0.len() + 1);
        }
        if let Some(b) = &self.p.b {
            return Ok(b.len() + 1);
        }
        Err(CliError::Missing {
            task: self.p.task.clone(),
            field: "dimension",
        })
    }

    fn field(&self) -> Result<ScalarField, CliError> {
        let text = need(self.p, &self.p.field, "E")?;
        ScalarField::parse(self.dimension()?, text).map_err(field_err("E"))
    }

    fn skew(&self) -> Result<SkewMatrix, CliError> {
        SkewMatrix::new(need(self.p, &self.p.b, "b")?.clone()).map_err(field_err("b"))
    }

    fn span(&self) -> (f64, f64) {
        (self.p.t0.unwrap_or(0.0), self.p.t1.unwrap_or(1.0))
    }

    fn samples(&self) -> usize {
        self.p.samples.unwrap_or(DEFAULT_SAMPLES)
    }

    fn space(
        &self,
        value: &Option<Vec<String>>,
        field: &'static str,
    ) -> Result<FiniteSpace, CliError> {
        FiniteSpace::new(need(self.p, value, field)?.clone()).map_err(field_err(field))
    }
}

/// Runs one problem and returns its report; input problems are errors,
/// failed checks are verdicts.
pub fn run_problem(p: &ProblemFile, overrides: Overrides) -> Result<Report, CliError> {
    let mut cfg = ToleranceConfig::default();
    cfg.eq_tol = overrides.tol.or(p.tol).unwrap_or(cfg.eq_tol);
    cfg.ode_step = overrides.step.or(p.step).unwrap_or(cfg.ode_step);
    cfg.validate()?;
    let ctx = Context {
        p,
        cfg,
        tol: cfg.eq_tol,
    };
    let mut report = Report::new(&p.task, ctx.tol);
    match p.task.as_str() {
        "derive" => derive(&ctx, &mut report)?,
        "solve-e" => {
            let field = ctx.field()?;
            let x0 = need(p, &p.x0, "x0")?;
            let (t0, t1) = ctx.span();
            let sol = solve_e_case(&field, &ctx.skew()?, x0, t0, t1, &cfg)?;
            case_report(&ctx, &mut report, &sol)?;
        }
        "solve-p" => {
            let offset = match &p.offset {
                Some(text) => expr(text, "T")?,
                None => Expr::zero(),
            };
            let sol = solve_p_case(&ctx.curve()?, &ctx.skew()?, &offset, ctx.span(), &cfg)?;
            case_report(&ctx, &mut report, &sol)?;
        }
        "solve-f" => {
            let f = PathFunction::parse(need(p, &p.f, "f")?).map_err(field_err("f"))?;
            let g = p.invariant.as_deref().map(|g| expr(g, "G")).transpose()?;
            let x0 = need(p, &p.x0, "x0")?;
            let sol = solve_f_case(&f, ctx.dimension()?, x0, g.as_ref(), ctx.span(), &cfg)?;
            case_report(&ctx, &mut report, &sol)?;
        }
        "verify" => {
            let field = ctx.field()?;
            let curve = ctx.curve()?;
            let path = PathFunction::parse(need(p, &p.f, "f")?).map_err(field_err("f"))?;
            let sol = CaseSolution {
                field,
                curve: CurvePath::Closed(curve),
                path,
                diagnostics: Diagnostics {
                    t_span: ctx.span(),
                    ..Diagnostics::default()
                },
            };
            composition_report(&ctx, &mut report, &sol)?;
        }
        "pairing" => {
            let field = ctx.field()?;
            let w = exterior_derivative(&field);
            let x = skew_field(&field, &ctx.skew()?)?;
            let paired = pairing(&w, &x)?;
            let eq = equivalence(&paired, &field.time_partial());
            report.put("dE", show_all(w.coeffs()));
            report.put("X", show_all(x.components()));
            report.put("pairing", paired.to_string());
            report.put("time_partial", field.time_partial().to_string());
            report.verdicts.push(Verdict::at_most(
                "pairing_equals_time_partial",
                eq.max_deviation,
                ctx.tol,
            ));
        }
        "hj" => {
            let s = expr(need(p, &p.action, "S")?, "S")?;
            let h = expr(need(p, &p.hamiltonian, "H")?, "H")?;
            let constants: Assignment = p
                .constants
                .iter()
                .flatten()
                .map(|(k, v)| (k.clone(), *v))
                .collect();
            let residual = hamilton_jacobi_residual(&s, &h, p.dof.unwrap_or(1), &constants)?;
            let points = sampling::uniform_assignments(&residual.free_vars(), 32, -2.0, 2.0, 0x4a);
            let mut worst: f64 = 0.0;
            for at in &points {
                worst = worst.max(residual.evaluate(at).map_err(Error::from)?.abs());
            }
            report.put("residual", residual.to_string());
            report
                .verdicts
                .push(Verdict::at_most("hamilton_jacobi_residual", worst, ctx.tol));
        }
        "prolong" => prolong(&ctx, &mut report)?,
        "filter" => filter(&ctx, &mut report)?,
        "ball-limit" => {
            let field = ctx.field()?;
            let curve = ctx.curve()?;
            let t = p.t.unwrap_or(0.0);
            let limit = ball_filter_limit(&field, &curve, t, &cfg)?;
            let direct = total_derivative(&field, &curve, t)?;
            report.put("limit", limit.limit);
            report.put("center_value", limit.center_value);
            report.put("total_derivative", direct);
            report.put(
                "trace",
                limit
                    .trace
                    .iter()
                    .map(|b| json!({"radius": b.radius, "max_deviation": b.max_deviation}))
                    .collect::<Vec<_>>(),
            );
            let scale = direct.abs().max(1.0);
            report.verdicts.push(Verdict::at_most(
                "ball_limit_matches_total_derivative",
                (limit.limit - direct).abs() / scale,
                LIMIT_AGREEMENT,
            ));
        }
        other => return Err(CliError::UnknownTask(other.to_string())),
    }
    Ok(report)
}

fn derive(ctx: &Context, report: &mut Report) -> Result<(), CliError> {
    let field = ctx.field()?;
    let curve = ctx.curve()?;
    let path = compose(&field, &curve)?;
    let f = path.as_expr().expect("composition is closed-form").clone();
    report.put("gradient", show_all(&gradient(&field)));
    report.put("velocity", show_all(&velocity(&curve)));
    report.put("composition", f.to_string());
    report.put("time_partial", field.time_partial().to_string());

    let times = match ctx.p.t {
        Some(t) => vec![t],
        None => {
            let (t0, t1) = ctx.span();
            uniform(t0, t1, ctx.samples())
        }
    };
    let mut rows = vec![];
    let (mut chain, mut split): (f64, f64) = (0.0, 0.0);
    for &t in &times {
        let total = total_derivative(&field, &curve, t)?;
        let advective = advective_term(&field, &curve, t)?;
        let at = point_assignment(&curve.position(t)?, t);
        let partial = field.time_partial().evaluate(&at).map_err(Error::from)?;
        let fd = f
            .finite_difference(TIME, &Assignment::new().with(TIME, t), ctx.cfg.fd_step)
            .map_err(Error::from)?;
        chain = chain.max((total - fd).abs() / fd.abs().max(1.0));
        split = split.max((total - advective - partial).abs());
        rows.push(json!({"t": t, "total": total, "advective": advective, "time_partial": partial, "finite_difference": fd}));
        let x = curve.position(t)?;
        let e = field.evaluate(&x, t)?;
        let fv = path.evaluate(t)?;
        report.series.push(SeriesRow {
            t,
            x,
            f: fv,
            e_of_p: e,
            residual: (fv - e).abs(),
        });
    }
    report.spatial_dim = curve.spatial_dim();
    report.put("samples", rows);
    report.verdicts.push(Verdict::at_most(
        "chain_rule_vs_finite_difference",
        chain,
        LIMIT_AGREEMENT,
    ));
    report.verdicts.push(Verdict::at_most(
        "total_equals_advective_plus_time_partial",
        split,
        ctx.tol,
    ));

    if let Some(eps) = ctx.p.epsilon {
        let t = times.first().copied().unwrap_or(0.0);
        match epsilon_delta_witness(&field, &curve, t, eps, &ctx.cfg) {
            Ok(delta) => {
                report.put("delta", delta);
                report
                    .verdicts
                    .push(Verdict::holds("epsilon_delta_witness", true));
            }
            Err(Error::NoWitness { .. }) => report
                .verdicts
                .push(Verdict::holds("epsilon_delta_witness", false)),
            Err(e) => return Err(e.into()),
        }
    }
    Ok(())
}

fn case_report(ctx: &Context, report: &mut Report, sol: &CaseSolution) -> Result<(), CliError> {
    let d = &sol.diagnostics;
    report.put("field", sol.field.body().to_string());
    match &sol.curve {
        CurvePath::Closed(c) => report.put("curve", show_all(c.components())),
        CurvePath::Sampled(s) => {
            report.put("curve_nodes", s.times.len());
            report.put("curve_end", s.points.last().cloned().unwrap_or_default());
        }
    }
    match &sol.path {
        PathFunction::Closed(e) => report.put("path", e.to_string()),
        PathFunction::Sampled(table) => {
            let last = table.len() - 1;
            let picks: Vec<Value> = uniform(0.0, last as f64, ctx.samples().min(table.len()))
                .into_iter()
                .map(|k| {
                    let (t, f) = table[k.round() as usize];
                    json!([t, f])
                })
                .collect();
            report.put("path_samples", picks);
        }
    }
    report.put("t_span", vec![d.t_span.0, d.t_span.1]);
    report.put("step", d.step);
    report.put("max_composition_residual", d.max_composition_residual);
    report.put("max_equation_residual", d.max_equation_residual);
    report.verdicts.push(Verdict::at_most(
        "composition_residual",
        d.max_composition_residual,
        ctx.tol,
    ));
    report.verdicts.push(Verdict::at_most(
        "defining_equation_residual",
        d.max_equation_residual,
        ctx.tol,
    ));
    if let Some(g) = d.gradient_residual {
        report.put("gradient_residual", g);
        report.verdicts.push(Verdict::at_most(
            "gradient_matches_skew_velocity",
            g,
            ctx.tol,
        ));
    }
    if let Some(offset) = d.composition_offset {
        report.put("composition_offset", offset);
    }
    report.spatial_dim = sol.curve.spatial_dim();
    report.series = series_rows(sol, ctx.samples())?;
    Ok(())
}

/// Every grid node for sampled curves, `samples` uniform times otherwise.
pub fn series_rows(sol: &CaseSolution, samples: usize) -> Result<Vec<SeriesRow>, Error> {
    let offset = sol.diagnostics.composition_offset.unwrap_or(0.0);
    let row = |t: f64, x: Vec<f64>| -> Result<SeriesRow, Error> {
        let e = sol.field.evaluate(&x, t)?;
        let f = sol.path.evaluate(t)?;
        Ok(SeriesRow {
            t,
            x,
            f,
            e_of_p: e,
            residual: (f + offset - e).abs(),
        })
    };
    match &sol.curve {
        CurvePath::Sampled(s) => s
            .times
            .iter()
            .zip(&s.points)
            .map(|(&t, x)| row(t, x.clone()))
            .collect(),
        CurvePath::Closed(c) => {
            let (t0, t1) = sol.diagnostics.t_span;
            uniform(t0, t1, samples)
                .into_iter()
                .map(|t| row(t, c.position(t)?))
                .collect()
        }
    }
}

fn composition_report(
    ctx: &Context,
    report: &mut Report,
    sol: &CaseSolution,
) -> Result<(), CliError> {
    let r = verify_composition(sol, ctx.samples())?;
    report.put("samples", r.samples);
    report.put("max_composition_residual", r.max_composition_residual);
    report.put("max_derivative_residual", r.max_derivative_residual);
    report.verdicts.push(Verdict::at_most(
        "composition_residual",
        r.max_composition_residual,
        ctx.tol,
    ));
    report.verdicts.push(Verdict::at_most(
        "derivative_residual",
        r.max_derivative_residual,
        ctx.tol,
    ));
    report.spatial_dim = sol.curve.spatial_dim();
    report.series = series_rows(sol, ctx.samples())?;
    Ok(())
}

fn region(spec: &ElementSpec) -> Result<Region, Error> {
    match (
        &spec.lower,
        &spec.upper,
        &spec.center,
        spec.radius,
        &spec.points,
    ) {
        (Some(lo), Some(hi), None, None, None) => Region::new_box(lo.clone(), hi.clone()),
        (None, None, Some(c), Some(r), None) => Region::ball(c.clone(), r),
        (None, None, None, None, Some(pts)) => Region::points(pts.clone()),
        _ => Err(Error::invalid(
            "an element needs exactly one of lower+upper, center+radius or points",
        )),
    }
}

fn prolong(ctx: &Context, report: &mut Report) -> Result<(), CliError> {
    let specs = need(ctx.p, &ctx.p.elements, "elements")?;
    let mut elements = Vec::with_capacity(specs.len());
    for spec in specs {
        let region = region(spec).map_err(field_err("elements"))?;
        let e = expr(&spec.expr, "elements")?;
        let element = match &spec.coords {
            Some(coords) => FunctionalElement::new(e, coords.clone(), region),
            None => FunctionalElement::on(e, region),
        }
        .map_err(field_err("elements"))?;
        elements.push(element);
    }
    let gf = GeneralFunction::new(elements, Metadata::default()).map_err(field_err("elements"))?;
    let mut pairs = vec![];
    for i in 0..gf.elements().len() {
        for j in i + 1..gf.elements().len() {
            let r = direct_prolongation(&gf.elements()[i], &gf.elements()[j], ctx.tol)?;
            pairs.push(json!({"pair": [i, j], "prolongs": r.prolongs, "max_deviation": r.max_deviation, "samples": r.samples}));
        }
    }
    let coherence = coherence_check(&gf, ctx.tol)?;
    report.put("pairs", pairs);
    report.put(
        "incoherent_pairs",
        coherence
            .incoherent_pairs
            .iter()
            .map(|(i, j)| json!([i, j]))
            .collect::<Vec<_>>(),
    );
    report.verdicts.push(Verdict {
        name: "elements_coherent".into(),
        residual: coherence.worst_deviation,
        threshold: ctx.tol,
        pass: coherence.coherent(),
    });
    Ok(())
}

fn filter(ctx: &Context, report: &mut Report) -> Result<(), CliError> {
    let p = ctx.p;
    let d = ctx.space(&p.domain, "D")?;
    let subset =
        |labels: &Vec<String>, field: &'static str| d.subset(labels).map_err(field_err(field));
    let show = |space: &FiniteSpace, s: Subset| Value::from(space.label_list(s));
    let mut did_something = false;

    if let Some(family) = &p.family {
        did_something = true;
        let members = family
            .iter()
            .map(|m| subset(m, "family"))
            .collect::<Result<_, _>>()?;
        let check = is_filter(&members, &d);
        report.put("family_check", check.describe(&d));
        report
            .verdicts
            .push(Verdict::holds("family_is_filter", check.is_valid()));
    }

    let partition = match &p.blocks {
        Some(blocks) => {
            did_something = true;
            let blocks = blocks
                .iter()
                .map(|b| subset(b, "blocks"))
                .collect::<Result<Vec<_>, _>>()?;
            let partition = Partition::new(&d, blocks).map_err(field_err("blocks"))?;
            let mut all = true;
            let mut principal = vec![];
            for g in partition.blocks() {
                let filter = principal_filter(&d, *g)?;
                let members = filter.members()?;
                all &= is_filter(&members, &d).is_valid();
                principal.push(json!({"generator": show(&d, *g), "members": members.len()}));
            }
            report.put("principal_filters", principal);
            report
                .verdicts
                .push(Verdict::holds("principal_filters_satisfy_axioms", all));
            Some(partition)
        }
        None => None,
    };

    if let Some(g) = &p.generator {
        did_something = true;
        let g = subset(g, "generator")?;
        let h = principal_filter(&d, g).map_err(field_err("generator"))?;
        report.put(
            "principal_members",
            h.members().map(|m| m.len()).unwrap_or(0),
        );
        if let Some(limit) = &p.limit {
            let target = subset(limit, "limit")?;
            let is_limit = filter_limit(&h, &d, target).map_err(field_err("limit"))?;
            report.put("is_limit", is_limit);
            if let Some(expected) = p.expect {
                report.verdicts.push(Verdict::holds(
                    "limit_matches_expectation",
                    is_limit == expected,
                ));
            }
        }
    }

    if let Some(map) = &p.map {
        did_something = true;
        let partition = partition.ok_or_else(|| CliError::Missing {
            task: p.task.clone(),
            field: "blocks",
        })?;
        let k = ctx.space(&p.codomain, "K")?;
        let per_block: Vec<BTreeMap<String, String>> = partition
            .blocks()
            .iter()
            .map(|b| {
                d.label_list(*b)
                    .into_iter()
                    .filter_map(|l| map.get(l).map(|to| (l.to_string(), to.clone())))
                    .collect()
            })
            .collect();
        let m = ElementMap::new(partition, k.clone(), per_block).map_err(field_err("map"))?;
        let mut images = vec![];
        let mut all = true;
        for (i, g) in m.partition().blocks().iter().enumerate() {
            let image = image_filter(&m, i, &principal_filter(&d, *g)?, &k)?;
            all &= is_filter(&image.members()?, &k).is_valid();
            images.push(show(
                &k,
                image.generator().expect("image filters are principal"),
            ));
        }
        report.put("images", images);
        report
            .verdicts
            .push(Verdict::holds("image_filters_satisfy_axioms", all));
        if let Some(target) = &p.target {
            let a = k.subset(target).map_err(field_err("target"))?;
            let block =
                p.block.unwrap_or(1).checked_sub(1).ok_or_else(|| {
                    field_err("block")(Error::invalid("blocks are numbered from 1"))
                })?;
            let is_limit = general_function_limit(&m, block, a)?;
            report.put("general_function_limit", is_limit);
            if let Some(expected) = p.expect {
                report.verdicts.push(Verdict::holds(
                    "general_limit_matches_expectation",
                    is_limit == expected,
                ));
            }
        }
    }

    if !did_something {
        return Err(CliError::Missing {
            task: p.task.clone(),
            field: "family, blocks, generator or map",
        });
    }
    Ok(())
}

pub const SERIES_HEADER_TAIL: [&str; 3] = ["f", "E_of_p", "residual"];

/// CSV with header `t, x1..x<m>, f, E_of_p, residual`.
pub fn emit_series(rows: &[SeriesRow], spatial_dim: usize, path: &Path) -> Result<(), CliError> {
    let file = fs::File::create(path).map_err(|source| CliError::Write {
        path: path.to_path_buf(),
        source,
    })?;
    let mut w = csv::Writer::from_writer(file);
    let mut header = vec!["t".to_string()];
    header.extend((1..=spatial_dim).map(|i| format!("x{i}")));
    header.extend(SERIES_HEADER_TAIL.iter().map(|s| s.to_string()));
    w.write_record(&header)?;
    for r in rows {
        let mut record = vec![r.t.to_string()];
        record.extend(r.x.iter().map(f64::to_string));
        record.extend([r.f, r.e_of_p, r.residual].iter().map(f64::to_string));
        w.write_record(&record)?;
    }
    w.flush().map_err(|source| CliError::Write {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(())
}

pub fn read_series(path: &Path) -> Result<Vec<SeriesRow>, CliError> {
    let mut r = csv::Reader::from_path(path)?;
    let width = r.headers()?.len();
    let spatial = width.saturating_sub(4);
    let mut rows = vec![];
    for record in r.records() {
        let record = record?;
        let values = record
            .iter()
            .map(|s| {
                s.parse::<f64>()
                    .map_err(|e| Error::invalid(format!("series value `{s}`: {e}")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        rows.push(SeriesRow {
            t: values[0],
            x: values[1..1 + spatial].to_vec(),
            f: values[1 + spatial],
            e_of_p: values[2 + spatial],
            residual: values[3 + spatial],
        });
    }
    Ok(rows)
}

/// Parses `argv`, runs, writes to the given streams and returns the exit
/// status.
pub fn main_with<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args = match Args::try_parse_from(argv) {
        Ok(a) => a,
        Err(e) => {
            if e.use_stderr() {
                let _ = write!(err, "{e}");
                return 1;
            }
            let _ = write!(out, "{e}");
            return 0;
        }
    };
    match (args.list_tasks, args.command) {
        (true, _) | (false, Some(Command::ListTasks)) => {
            for (name, what) in TASKS {
                let _ = writeln!(out, "{name:<11} {what}");
            }
            0
        }
        (
            false,
            Some(Command::Run {
                file,
                out: report_path,
                tol,
                step,
                series,
            }),
        ) => {
            match run_file(
                &file,
                Overrides { tol, step },
                report_path.as_deref(),
                series.as_deref(),
            ) {
                Ok(report) => {
                    let _ = out.write_all(report.human().as_bytes());
                    if report.passed() {
                        0
                    } else {
                        2
                    }
                }
                Err(e) => {
                    let _ = writeln!(err, "error: {e}");
                    1
                }
            }
        }
        (false, None) => {
            let _ = writeln!(err, "error: expected a subcommand (run or list-tasks)");
            1
        }
    }
}

pub fn run_file(
    file: &Path,
    overrides: Overrides,
    report_path: Option<&Path>,
    series_path: Option<&Path>,
) -> Result<Report, CliError> {
    let problem = load_problem(file)?;
    let report = run_problem(&problem, overrides)?;
    if let Some(path) = report_path {
        fs::write(path, report.to_json()).map_err(|source| CliError::Write {
            path: path.to_path_buf(),
            source,
        })?;
    }
    if let Some(path) = series_path {
        emit_series(&report.series, report.spatial_dim, path)?;
    }
    Ok(report)
}
