//! Acceptance suite: one PASS/FAIL line per criterion. Exits non-zero if any
//! criterion fails.

mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::PI;
use std::path::Path;
use std::process::Command;

use rand::Rng;

use pathcalc::calculus::{
    advective_term, compose, curve_point, point_assignment, total_derivative, Bracket, Curve,
    PathFunction, ScalarField, ToleranceConfig,
};
use pathcalc::cases::{solve_e_case, solve_f_case, solve_p_case, CurvePath, SkewMatrix};
use pathcalc::expr::{equivalence, Assignment, Expr, EQUIVALENCE_POINTS};
use pathcalc::filters::{
    filter_limit, image_filter, is_filter, principal_filter, stronger_than, ElementMap,
    FiniteSpace, Partition, Subset,
};
use pathcalc::genfun::{direct_prolongation, FunctionalElement, Region};
use pathcalc::geometry::{
    exterior_derivative, hamilton_jacobi_residual, line_integral_along, pairing, poincare_cartan,
    skew_field, LINE_STEPS,
};
use pathcalc::sampling::{seeded_rng, uniform_assignments};

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

const CHAIN_RULE_REL: f64 = 1e-6;
const SAMPLE_TIMES: usize = 16;

fn chain_rule_bridge() -> Outcome {
    let corpus = common::corpus();
    let mut worst: f64 = 0.0;
    for case in &corpus {
        let f = compose(&case.field, &case.curve).map_err(|e| e.to_string())?;
        let f = f.as_expr().unwrap().clone();
        for t in common::times(case.span, SAMPLE_TIMES) {
            let total = total_derivative(&case.field, &case.curve, t)
                .map_err(|e| format!("{}: {e}", case.name))?;
            let fd = f
                .finite_difference("t", &Assignment::new().with("t", t), 1e-6)
                .map_err(|e| format!("{}: {e}", case.name))?;
            worst = worst.max((total - fd).abs() / fd.abs().max(1.0));
        }
    }
    check(
        corpus.len() >= 10 && worst <= CHAIN_RULE_REL,
        format!("{} pairs x {SAMPLE_TIMES} times, max relative gap {worst:.2e} (bar {CHAIN_RULE_REL:e})", corpus.len()),
    )
}

const ADVECTIVE_NONZERO: f64 = 0.1;
const EXACT: f64 = 1e-12;

fn misconception_refuted() -> Outcome {
    let mut largest: f64 = 0.0;
    let mut split: f64 = 0.0;
    for case in common::corpus() {
        let bracket = Bracket::new(&case.field, &case.curve).unwrap();
        let decomposed = bracket.advective().clone() + bracket.time_partial().clone();
        let eq = equivalence(&decomposed, bracket.expr());
        split = split.max(eq.max_deviation);
        for t in common::times(case.span, SAMPLE_TIMES) {
            let adv = advective_term(&case.field, &case.curve, t).unwrap();
            let total = total_derivative(&case.field, &case.curve, t).unwrap();
            let at = point_assignment(&case.curve.position(t).unwrap(), t);
            let partial = case.field.time_partial().evaluate(&at).unwrap();
            largest = largest.max(adv.abs());
            split = split.max((total - adv - partial).abs());
        }
    }
    let pure_time = ScalarField::parse(2, "t").unwrap();
    let mut pure: f64 = 0.0;
    for curve in [&["t"][..], &["t^2"], &["sin(t)"]] {
        let curve = Curve::parse(curve).unwrap();
        for t in common::times((0.0, 2.0), SAMPLE_TIMES) {
            pure = pure.max(advective_term(&pure_time, &curve, t).unwrap().abs());
        }
    }
    check(
        largest > ADVECTIVE_NONZERO && pure <= EXACT && split <= EXACT,
        format!("largest advective term {largest:.3}, pure-time advective {pure:.1e}, decomposition gap {split:.1e}"),
    )
}

#[allow(clippy::needless_range_loop)]
fn random_skew(rng: &mut impl Rng, order: usize) -> SkewMatrix {
    let mut rows = vec![vec![0.0; order]; order];
    for i in 0..order {
        for j in i + 1..order {
            let v: f64 = rng.gen_range(-2.0..2.0);
            rows[i][j] = v;
            rows[j][i] = -v;
        }
    }
    SkewMatrix::new(rows).unwrap()
}

fn random_polynomial(rng: &mut impl Rng, spatial: usize) -> Expr {
    let mut vars: Vec<String> = (1..=spatial).map(|i| format!("x{i}")).collect();
    vars.push("t".into());
    let terms = rng.gen_range(2..6);
    Expr::sum((0..terms).map(|_| {
        let coeff = Expr::Const(rng.gen_range(-3i32..=3) as f64 + 0.5);
        let factors = rng.gen_range(1..4);
        (0..factors).fold(coeff, |acc, _| {
            let v = Expr::var(vars[rng.gen_range(0..vars.len())].clone());
            acc * v.powi(rng.gen_range(1..4))
        })
    }))
}

/// `Σ b_ij g_j g_i` summed term by term from numeric gradient values, scaled
/// by the sum of the absolute terms.
fn naive_form(b: &SkewMatrix, g: &[f64]) -> f64 {
    let (mut total, mut scale) = (0.0, 0.0);
    for i in 0..b.order() {
        for j in 0..b.order() {
            let term = b.get(i, j) * g[j] * g[i];
            total += term;
            scale += term.abs();
        }
    }
    total.abs() / scale.max(1.0)
}

fn skew_annihilation() -> Outcome {
    let mut rng = seeded_rng(0xacc3);
    let mut symbolic = 0;
    let mut worst_form: f64 = 0.0;
    let mut worst_naive: f64 = 0.0;
    let mut worst_pairing: f64 = 0.0;
    for k in 0..20 {
        let order = 1 + k % 4;
        let b = random_skew(&mut rng, order);
        let field = ScalarField::new(order + 1, random_polynomial(&mut rng, order)).unwrap();
        let grad = pathcalc::calculus::gradient(&field);
        let form = b.quadratic_form(&grad);
        if form.is_const(0.0) {
            symbolic += 1;
        }
        let vars = field.coordinates().into_iter().collect();
        for at in uniform_assignments(&vars, EQUIVALENCE_POINTS, -2.0, 2.0, k as u64) {
            if !form.is_const(0.0) {
                worst_form = worst_form.max(form.evaluate(&at).unwrap().abs());
            }
            let g: Vec<f64> = grad.iter().map(|d| d.evaluate(&at).unwrap()).collect();
            worst_naive = worst_naive.max(naive_form(&b, &g));
        }
        let paired = pairing(
            &exterior_derivative(&field),
            &skew_field(&field, &b).unwrap(),
        )
        .unwrap();
        let eq = equivalence(&paired, &field.time_partial());
        if eq.compared == 0 {
            return Err(format!("pairing comparison {k} had no defined points"));
        }
        worst_pairing = worst_pairing.max(eq.max_deviation);
    }
    check(
        worst_form <= EXACT && worst_naive <= EXACT && worst_pairing <= EXACT,
        format!(
            "20 fields: {symbolic} vanish symbolically, others at most {worst_form:.1e}; \
             term-by-term numeric sum {worst_naive:.1e} relative; pairing gap {worst_pairing:.1e}"
        ),
    )
}

const ORBIT_BAR: f64 = 1e-6;
const ORDER_RATIO: f64 = 12.0;

fn orbit(step: f64) -> Result<(f64, f64), String> {
    let field = ScalarField::parse(3, "x1^2+x2^2").unwrap();
    let cfg = ToleranceConfig {
        ode_step: step,
        ..ToleranceConfig::default()
    };
    let sol = solve_e_case(
        &field,
        &SkewMatrix::rotation(),
        &[1.0, 0.0],
        0.0,
        2.0 * PI,
        &cfg,
    )
    .map_err(|e| e.to_string())?;
    let CurvePath::Sampled(curve) = &sol.curve else {
        return Err("expected a sampled orbit".into());
    };
    let drift = curve
        .points
        .iter()
        .map(|p| (p[0].hypot(p[1]) - 1.0).abs())
        .fold(0.0, f64::max);
    Ok((drift, sol.diagnostics.max_composition_residual))
}

fn circle_orbit() -> Outcome {
    let (drift, composition) = orbit(1e-3)?;
    let (half_drift, _) = orbit(5e-4)?;
    let ratio = drift / half_drift;
    check(
        drift <= ORBIT_BAR && composition <= ORBIT_BAR && ratio >= ORDER_RATIO,
        format!("radius drift {drift:.2e}, max |f - E∘p| {composition:.2e}, drift ratio on halving {ratio:.1} (bar {ORDER_RATIO})"),
    )
}

const P_CASE_BAR: f64 = 1e-9;

fn p_case() -> Outcome {
    let cfg = ToleranceConfig::default();
    let mut rng = seeded_rng(0x9ca5e);
    let problems = [
        (
            Curve::parse(&["cos(t)", "sin(t)"]).unwrap(),
            SkewMatrix::rotation(),
            "0",
            (0.0, 2.0 * PI),
        ),
        (
            Curve::parse(&["t^2", "sin(t)", "exp(t/2)"]).unwrap(),
            random_skew(&mut rng, 3),
            "cos(t)",
            (0.0, 2.0),
        ),
        (
            Curve::parse(&["t", "t^3", "cos(2*t)", "1/(1+t^2)"]).unwrap(),
            random_skew(&mut rng, 4),
            "t^2",
            (-1.0, 1.0),
        ),
        (
            Curve::parse(&["t"]).unwrap(),
            SkewMatrix::zero(1),
            "t^2",
            (0.0, 1.0),
        ),
    ];
    let (mut gradient, mut equation): (f64, f64) = (0.0, 0.0);
    for (curve, b, offset, span) in problems {
        let offset: Expr = offset.parse().unwrap();
        let sol = solve_p_case(&curve, &b, &offset, span, &cfg).map_err(|e| e.to_string())?;
        gradient = gradient.max(sol.diagnostics.gradient_residual.unwrap());
        equation = equation.max(sol.diagnostics.max_equation_residual);
    }
    check(
        gradient <= EXACT && equation <= P_CASE_BAR,
        format!("4 curves: gradient vs Σ b_ij k_j gap {gradient:.1e}, max |df/dt - ∂E/∂t| {equation:.1e}"),
    )
}

const F_CASE_BAR: f64 = 1e-9;

fn f_case() -> Outcome {
    let cfg = ToleranceConfig::default();
    let f = PathFunction::parse("t^2 + sin(t)").unwrap();
    let quadratic: Expr = "xi1^2 - 0.5*xi1*xi2 + 2*xi2".parse().unwrap();
    let mut details = vec![];
    let mut ok = true;
    for g in [None, Some(&quadratic)] {
        let sol =
            solve_f_case(&f, 3, &[0.4, -0.3], g, (0.0, 1.0), &cfg).map_err(|e| e.to_string())?;
        let d = &sol.diagnostics;
        ok &= d.max_equation_residual <= F_CASE_BAR && d.max_composition_residual <= F_CASE_BAR;
        details.push(format!(
            "{}: PDE residual {:.1e}, E∘p - f spread {:.1e}",
            if g.is_some() { "quadratic G" } else { "G = 0" },
            d.max_equation_residual,
            d.max_composition_residual
        ));
    }
    check(ok, details.join("; "))
}

const LINE_BAR: f64 = 1e-8;

fn hamilton_jacobi() -> Outcome {
    let a = 1.3;
    let s: Expr = "a*q1 - a^2*t/2".parse().unwrap();
    let h: Expr = "p1^2/2".parse().unwrap();
    let consts = Assignment::new().with("a", a);
    let residual = hamilton_jacobi_residual(&s, &h, 1, &consts).map_err(|e| e.to_string())?;
    let vars = ["q1".to_string(), "t".to_string()].into();
    let mut worst: f64 = 0.0;
    for at in uniform_assignments(&vars, 32, -2.0, 2.0, 0x41) {
        worst = worst.max(residual.evaluate(&at).map_err(|e| e.to_string())?.abs());
    }

    let s = s.substitute("a", &Expr::Const(a));
    let momentum = s.differentiate("q1");
    let w = poincare_cartan(
        std::slice::from_ref(&momentum),
        &h.substitute("p1", &momentum),
    )
    .unwrap();
    let path: [Expr; 2] = [
        "sin(3*s) + s^2".parse().unwrap(),
        "s^3 - s".parse().unwrap(),
    ];
    let integral = line_integral_along(&w, &path, "s", (0.0, 1.5), LINE_STEPS).unwrap();
    let endpoint = |sv: f64| {
        let at = Assignment::new().with("s", sv);
        let q = path[0].evaluate(&at).unwrap();
        let t = path[1].evaluate(&at).unwrap();
        s.evaluate(&Assignment::new().with("q1", q).with("t", t))
            .unwrap()
    };
    let gap = (integral - (endpoint(1.5) - endpoint(0.0))).abs();
    check(
        worst <= EXACT && gap <= LINE_BAR,
        format!("free-particle residual {worst:.1e} at 32 points, ∫W - ΔS {gap:.1e} over {LINE_STEPS} steps"),
    )
}

const PROLONG_TOL: f64 = 1e-9;
const SQUARE_CUBE_GAP: f64 = 1.125;

fn prolongation() -> Outcome {
    let interval = |lo, hi| Region::interval(lo, hi).unwrap();
    let series = Expr::sum((0..=60).map(|k| Expr::var("x1").powi(k)));
    let series = FunctionalElement::on(series, interval(-0.5, 0.5)).unwrap();
    let closed = FunctionalElement::on("1/(1-x1)".parse().unwrap(), interval(0.25, 0.9)).unwrap();
    let geometric = direct_prolongation(&series, &closed, PROLONG_TOL).unwrap();

    let square = FunctionalElement::on("x1^2".parse().unwrap(), interval(0.0, 2.0)).unwrap();
    let cube = FunctionalElement::on("x1^3".parse().unwrap(), interval(1.0, 3.0)).unwrap();
    let mismatch = direct_prolongation(&square, &cube, PROLONG_TOL).unwrap();
    check(
        geometric.prolongs && !mismatch.prolongs && mismatch.max_deviation >= SQUARE_CUBE_GAP,
        format!(
            "geometric series deviation {:.1e} over {} samples; x² vs x³ deviation {:.3}",
            geometric.max_deviation, geometric.samples, mismatch.max_deviation
        ),
    )
}

fn nonempty_subsets(space: &FiniteSpace) -> Vec<Subset> {
    space.power_set().unwrap().skip(1).collect()
}

/// All set partitions of `{0..n}` as lists of blocks.
fn partitions(n: usize) -> Vec<Vec<Subset>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = vec![];
    for mut p in partitions(n - 1) {
        let new = Subset::singleton(n - 1);
        for k in 0..p.len() {
            let mut q = p.clone();
            q[k] = q[k].union(new);
            out.push(q);
        }
        p.push(new);
        out.push(p);
    }
    out
}

fn filter_calculus() -> Outcome {
    let mut lemma_checks = 0;
    for n in 1..=5 {
        let d = FiniteSpace::numbered(n).unwrap();
        for partition in partitions(n) {
            Partition::new(&d, partition.clone()).map_err(|e| e.to_string())?;
            for g in partition {
                let p = principal_filter(&d, g).unwrap();
                if !is_filter(&p.members().unwrap(), &d).is_valid() {
                    return Err(format!(
                        "principal filter of {} fails the axioms",
                        d.show(g)
                    ));
                }
                lemma_checks += 1;
            }
        }
    }

    let mut order_checks = 0;
    for n in 1..=5 {
        let d = FiniteSpace::numbered(n).unwrap();
        let filters: Vec<_> = nonempty_subsets(&d)
            .into_iter()
            .map(|g| principal_filter(&d, g).unwrap())
            .collect();
        for a in &filters {
            if !stronger_than(a, a).unwrap() {
                return Err("stronger-than is not reflexive".into());
            }
            for b in &filters {
                for c in &filters {
                    if stronger_than(a, b).unwrap()
                        && stronger_than(b, c).unwrap()
                        && !stronger_than(a, c).unwrap()
                    {
                        return Err("stronger-than is not transitive".into());
                    }
                    order_checks += 1;
                }
            }
        }
    }

    let mut limit_checks = 0;
    for n in 1..=5 {
        let d = FiniteSpace::numbered(n).unwrap();
        for g in nonempty_subsets(&d) {
            let h = principal_filter(&d, g).unwrap();
            let members = h.members().unwrap();
            for g2 in nonempty_subsets(&d) {
                let limit = filter_limit(&h, &d, g2).unwrap();
                let brute = principal_filter(&d, g2)
                    .unwrap()
                    .members()
                    .unwrap()
                    .iter()
                    .all(|a| members.iter().any(|b| b.is_subset_of(*a)));
                if limit != g.is_subset_of(g2) || limit != brute {
                    return Err(format!(
                        "limit of principal {} at {} is wrong",
                        d.show(g),
                        d.show(g2)
                    ));
                }
                limit_checks += 1;
            }
        }
    }

    let mut rng = seeded_rng(0xf117);
    let maps = 25;
    for _ in 0..maps {
        let n = rng.gen_range(1..=5);
        let d = FiniteSpace::numbered(n).unwrap();
        let all = partitions(n);
        let blocks = all[rng.gen_range(0..all.len())].clone();
        let k = FiniteSpace::new((0..rng.gen_range(1..=5)).map(|i| format!("k{i}"))).unwrap();
        let per_block: Vec<BTreeMap<String, String>> = blocks
            .iter()
            .map(|b| {
                d.label_list(*b)
                    .into_iter()
                    .map(|l| (l.to_string(), k.labels()[rng.gen_range(0..k.len())].clone()))
                    .collect()
            })
            .collect();
        let partition = Partition::new(&d, blocks.clone()).unwrap();
        let m = ElementMap::new(partition, k.clone(), per_block).unwrap();
        for (i, g) in blocks.iter().enumerate() {
            let image = image_filter(&m, i, &principal_filter(&d, *g).unwrap(), &k).unwrap();
            let members: BTreeSet<Subset> = image.members().unwrap();
            if !is_filter(&members, &k).is_valid() {
                return Err("an image filter fails the axioms".into());
            }
        }
    }
    Ok(format!(
        "{lemma_checks} principal filters, {order_checks} order triples, {limit_checks} limit pairs, {maps} random maps"
    ))
}

const BALL_BAR: f64 = 1e-6;

fn ball_bridge() -> Outcome {
    let cfg = ToleranceConfig::default();
    let mut worst: f64 = 0.0;
    let mut evaluations = 0;
    for case in common::corpus() {
        for t in common::times(case.span, SAMPLE_TIMES) {
            let limit = pathcalc::filters::ball_filter_limit(&case.field, &case.curve, t, &cfg)
                .map_err(|e| format!("{} at t = {t}: {e}", case.name))?;
            let direct = total_derivative(&case.field, &case.curve, t).unwrap();
            debug_assert_eq!(curve_point(&case.curve, t).unwrap().len(), case.field.dim());
            worst = worst.max((limit.limit - direct).abs() / direct.abs().max(1.0));
            evaluations += 1;
        }
    }
    check(
        worst <= BALL_BAR,
        format!(
            "{evaluations} limits, all traces monotone within 10%, max relative gap {worst:.1e}"
        ),
    )
}

const CLI_FILES: [&str; 3] = ["circle-solve-e.json", "circle-solve-p.json", "filter.json"];

fn cli_determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let problems = Path::new(env!("CARGO_MANIFEST_DIR")).join("problems");
    for name in CLI_FILES {
        let mut reports = vec![];
        for run in 0..2 {
            let out = dir.path().join(format!("{name}.{run}"));
            let status = Command::new(env!("CARGO_BIN_EXE_pathcalc"))
                .arg("run")
                .arg(problems.join(name))
                .arg("--out")
                .arg(&out)
                .output()
                .map_err(|e| e.to_string())?
                .status;
            if status.code() != Some(0) {
                return Err(format!("{name} exited with {status}"));
            }
            reports.push(std::fs::read(&out).map_err(|e| e.to_string())?);
        }
        if reports[0] != reports[1] {
            return Err(format!("{name}: reports differ between runs"));
        }
    }
    Ok(format!(
        "{} problem files exit 0 with byte-identical reports",
        CLI_FILES.len()
    ))
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 11] = [
        ("chain-rule bridge", chain_rule_bridge),
        ("advective term is not negligible", misconception_refuted),
        ("skew annihilation and pairing", skew_annihilation),
        ("E-case circle orbit", circle_orbit),
        ("p-case reconstruction", p_case),
        ("f-case characteristics", f_case),
        ("Hamilton-Jacobi and exactness", hamilton_jacobi),
        ("direct prolongation", prolongation),
        ("finite filter calculus", filter_calculus),
        ("shrinking-ball limit", ball_bridge),
        ("CLI determinism", cli_determinism),
    ];
    let mut failures = 0;
    for (k, (name, run)) in criteria.iter().enumerate() {
        match run() {
            Ok(detail) => println!("PASS {:>2} {name}: {detail}", k + 1),
            Err(detail) => {
                failures += 1;
                println!("FAIL {:>2} {name}: {detail}", k + 1);
            }
        }
    }
    println!(
        "{} of {} criteria passed",
        criteria.len() - failures,
        criteria.len()
    );
    if failures > 0 {
        std::process::exit(1);
    }
}
