//! Reconstructing a field/curve/path triple from one known member.
//!
//! * [`solve_e_case`]: given `E`, the curve is the integral curve of
//!   `dx_i/dt = Σ_j b_ij ∂E/∂x_j` for a skew `b`, and `f` integrates `∂E/∂t`
//!   along it.
//! * [`solve_p_case`]: given `p`, `E = Σ_i (Σ_j b_ij k_j(t)) x_i + T(t)` with
//!   `k_j = dx_j/dt`, and `f = E∘p`.
//! * [`solve_f_case`]: given `f`, every component moves with `H = df/dt` and
//!   `E = ∫H + G(ξ)` with characteristic coordinates `ξ_i = x_i - ∫H`.
//!
//! A skew `b` makes `Σ_{i,j} b_ij ∂_jE ∂_iE` vanish, which is what lets the
//! advective term drop out of the defining relation in the first two cases.

use std::collections::BTreeMap;

use crate::calculus::{
    self, compose, gradient, point_assignment, spatial_var, velocity, Curve, PathFunction,
    ScalarField, Smoothness, ToleranceConfig, TIME,
};
use crate::error::{Error, Result};
use crate::expr::{equivalence, Expr};
use crate::ode;

#[derive(Debug, Clone, PartialEq)]
pub struct SkewMatrix {
    order: usize,
    entries: Vec<f64>,
}

impl SkewMatrix {
    /// Rejects non-square, non-finite or non-skew input, naming the first
    /// offending `(i, j)` (1-based).
    #[allow(clippy::needless_range_loop)]
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let order = rows.len();
        if order == 0 {
            return Err(Error::invalid("skew matrix must have order at least 1"));
        }
        if let Some(bad) = rows.iter().find(|r| r.len() != order) {
            return Err(Error::DimensionMismatch {
                context: "skew matrix row",
                expected: order,
                found: bad.len(),
            });
        }
        for i in 0..order {
            for j in i..order {
                let (bij, bji) = (rows[i][j], rows[j][i]);
                if !bij.is_finite() || bij != -bji {
                    return Err(Error::NotSkew {
                        i: i + 1,
                        j: j + 1,
                        bij,
                        bji,
                    });
                }
            }
        }
        Ok(SkewMatrix {
            order,
            entries: rows.into_iter().flatten().map(|v| v + 0.0).collect(),
        })
    }

    pub fn zero(order: usize) -> Self {
        SkewMatrix {
            order,
            entries: vec![0.0; order * order],
        }
    }

    /// Standard symplectic block `[[0, 1], [-1, 0]]`.
    pub fn rotation() -> Self {
        SkewMatrix {
            order: 2,
            entries: vec![0.0, 1.0, -1.0, 0.0],
        }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// Entry `b_ij`, 0-based.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.order + j]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.entries
            .chunks(self.order)
            .map(<[f64]>::to_vec)
            .collect()
    }

    /// `(Σ_j b_ij v_j)_i`, skipping zero entries.
    pub fn apply_exprs(&self, v: &[Expr]) -> Vec<Expr> {
        (0..self.order)
            .map(|i| {
                Expr::sum((0..self.order).filter_map(|j| {
                    let b = self.get(i, j);
                    if b == 0.0 {
                        None
                    } else if b == 1.0 {
                        Some(v[j].clone())
                    } else if b == -1.0 {
                        Some(-v[j].clone())
                    } else {
                        Some(Expr::Const(b) * v[j].clone())
                    }
                }))
                .simplify()
            })
            .collect()
    }

    /// `Σ_{i,j} b_ij v_j v_i`, collected per monomial `v_i v_j` (i ≤ j) with
    /// coefficient `b_ij + b_ji` (or `b_ii` on the diagonal).
    pub fn quadratic_form(&self, v: &[Expr]) -> Expr {
        let n = self.order;
        Expr::sum((0..n).flat_map(|i| {
            (i..n).map(move |j| {
                let c = if i == j {
                    self.get(i, i)
                } else {
                    self.get(i, j) + self.get(j, i)
                };
                Expr::Const(c) * (v[i].clone() * v[j].clone())
            })
        }))
        .simplify()
    }
}

/// A curve known only on an integration grid; off-grid positions are
/// linearly interpolated.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledCurve {
    pub times: Vec<f64>,
    pub points: Vec<Vec<f64>>,
    pub velocities: Vec<Vec<f64>>,
}

impl SampledCurve {
    pub fn position(&self, time: f64) -> Result<Vec<f64>> {
        let (lo, hi) = (self.times[0], *self.times.last().unwrap());
        if time < lo || time > hi {
            return Err(Error::invalid(format!("t = {time} outside [{lo}, {hi}]")));
        }
        let k = self.times.partition_point(|t| *t <= time);
        if k == self.times.len() || k == 0 {
            return Ok(self.points[k.saturating_sub(1)].clone());
        }
        let (t0, t1) = (self.times[k - 1], self.times[k]);
        let w = (time - t0) / (t1 - t0);
        Ok(self.points[k - 1]
            .iter()
            .zip(&self.points[k])
            .map(|(a, b)| a + w * (b - a))
            .collect())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum CurvePath {
    Closed(Curve),
    Sampled(SampledCurve),
}

impl CurvePath {
    pub fn position(&self, time: f64) -> Result<Vec<f64>> {
        match self {
            CurvePath::Closed(c) => c.position(time),
            CurvePath::Sampled(s) => s.position(time),
        }
    }

    pub fn spatial_dim(&self) -> usize {
        match self {
            CurvePath::Closed(c) => c.spatial_dim(),
            CurvePath::Sampled(s) => s.points.first().map_or(0, Vec::len),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Diagnostics {
    /// Largest `|f(t) - E(p(t), t)|` over the checked times.
    pub max_composition_residual: f64,
    /// Largest residual of the case's defining equation over the checked times.
    pub max_equation_residual: f64,
    pub t_span: (f64, f64),
    /// Integration or sampling step.
    pub step: f64,
    /// {p}-case: largest deviation of `∂E/∂x_i` from `Σ_j b_ij k_j`.
    pub gradient_residual: Option<f64>,
    /// {f}-case: `E∘p - f` at `t0`; the composition residual is measured
    /// after removing it.
    pub composition_offset: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CaseSolution {
    pub field: ScalarField,
    pub curve: CurvePath,
    pub path: PathFunction,
    pub diagnostics: Diagnostics,
}

impl CaseSolution {
    pub fn with_path(mut self, path: PathFunction) -> Self {
        self.path = path;
        self
    }
}

/// `H(t) = df/dt`, the per-component integral `∫_{t0}^t H`, and the field
/// that is constant along characteristics apart from that integral.
#[derive(Debug, Clone, PartialEq)]
pub struct CharacteristicData {
    pub rate: Expr,
    pub integral: Expr,
    /// `ξ_i = x_i - ∫H`.
    pub invariants: Vec<Expr>,
    pub invariant_function: Option<Expr>,
}

fn expect_order(b: &SkewMatrix, spatial_dim: usize) -> Result<()> {
    if b.order() != spatial_dim {
        return Err(Error::DimensionMismatch {
            context: "skew matrix order vs spatial dimension",
            expected: spatial_dim,
            found: b.order(),
        });
    }
    Ok(())
}

fn uniform_times(span: (f64, f64), count: usize) -> Vec<f64> {
    match count {
        0 => vec![],
        1 => vec![span.0],
        _ => (0..count)
            .map(|k| span.0 + (span.1 - span.0) * k as f64 / (count - 1) as f64)
            .collect(),
    }
}

/// Number of sample times used by the closed-form cases.
pub const CASE_SAMPLES: usize = 16;

/// {E}-case: integral curve of the skew gradient field by RK4, `f` by
/// Simpson quadrature of `∂E/∂t` along it, pinned so `f(t0) = E(x0, t0)`.
pub fn solve_e_case(
    field: &ScalarField,
    b: &SkewMatrix,
    x0: &[f64],
    t0: f64,
    t1: f64,
    cfg: &ToleranceConfig,
) -> Result<CaseSolution> {
    cfg.validate()?;
    let m = field.spatial_dim();
    expect_order(b, m)?;
    if x0.len() != m {
        return Err(Error::DimensionMismatch {
            context: "initial point",
            expected: m,
            found: x0.len(),
        });
    }
    let vector_field = b.apply_exprs(&gradient(field));
    let time_partial = field.time_partial();

    let rhs = |t: f64, x: &[f64], out: &mut [f64]| -> Result<()> {
        let at = point_assignment(x, t);
        for (slot, component) in out.iter_mut().zip(&vector_field) {
            *slot = component.evaluate(&at)?;
        }
        Ok(())
    };
    let n_steps = ode::step_count(t0, t1, cfg.ode_step);
    let traj = ode::rk4(rhs, t0, x0, t1, n_steps)?;
    let h = traj.step();

    let mut rates = Vec::with_capacity(traj.times.len());
    let mut values = Vec::with_capacity(traj.times.len());
    let mut velocities = Vec::with_capacity(traj.times.len());
    let mut advective: f64 = 0.0;
    let grad = gradient(field);
    for (&t, x) in traj.times.iter().zip(&traj.states) {
        let at = point_assignment(x, t);
        rates.push(time_partial.evaluate(&at)?);
        values.push(field.body().evaluate(&at)?);
        let v = vector_field
            .iter()
            .map(|c| c.evaluate(&at))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        let mut adv = 0.0;
        for (vi, gi) in v.iter().zip(&grad) {
            adv += vi * gi.evaluate(&at)?;
        }
        advective = advective.max(adv.abs());
        velocities.push(v);
    }

    let start = values[0];
    let integral = ode::cumulative_simpson(&rates, h);
    let table: Vec<(f64, f64)> = traj
        .times
        .iter()
        .zip(&integral)
        .map(|(&t, &i)| (t, start + i))
        .collect();
    let composition = table
        .iter()
        .zip(&values)
        .map(|((_, f), e)| (f - e).abs())
        .fold(0.0, f64::max);

    Ok(CaseSolution {
        field: field.clone(),
        curve: CurvePath::Sampled(SampledCurve {
            times: traj.times,
            points: traj.states,
            velocities,
        }),
        path: PathFunction::sampled(table)?,
        diagnostics: Diagnostics {
            max_composition_residual: composition,
            max_equation_residual: advective,
            t_span: (t0, t1),
            step: h,
            ..Diagnostics::default()
        },
    })
}

/// {p}-case: `E = Σ_i (Σ_j b_ij k_j(t)) x_i + T(t)` and `f = E∘p`,
/// checked at [`CASE_SAMPLES`] times in `span`.
pub fn solve_p_case(
    curve: &Curve,
    b: &SkewMatrix,
    offset: &Expr,
    span: (f64, f64),
    cfg: &ToleranceConfig,
) -> Result<CaseSolution> {
    cfg.validate()?;
    if curve.smoothness() != Smoothness::C2 {
        return Err(Error::invalid("the {p}-case needs a C2 curve"));
    }
    expect_order(b, curve.spatial_dim())?;
    if let Some(name) = offset.free_vars().into_iter().find(|v| v != TIME) {
        return Err(Error::ForeignVariable {
            context: "T(t)",
            name,
        });
    }
    let coefficients = b.apply_exprs(&velocity(curve));
    let body = Expr::sum(
        coefficients
            .iter()
            .enumerate()
            .map(|(i, c)| c.clone() * Expr::var(spatial_var(i + 1))),
    ) + offset.clone();
    let field = ScalarField::new(curve.dim(), body.simplify())?;
    let path = compose(&field, curve)?;

    let gradient_residual = gradient(&field)
        .iter()
        .zip(&coefficients)
        .map(|(g, c)| {
            let eq = equivalence(g, c);
            if eq.compared == 0 {
                f64::INFINITY
            } else {
                eq.max_deviation
            }
        })
        .fold(0.0, f64::max);

    let time_partial = field.time_partial();
    let mut composition: f64 = 0.0;
    let mut equation: f64 = 0.0;
    for t in uniform_times(span, CASE_SAMPLES) {
        let at = point_assignment(&curve.position(t)?, t);
        composition = composition.max((path.evaluate(t)? - field.body().evaluate(&at)?).abs());
        equation = equation.max((path.derivative(t)? - time_partial.evaluate(&at)?).abs());
    }

    Ok(CaseSolution {
        field,
        curve: CurvePath::Closed(curve.clone()),
        path,
        diagnostics: Diagnostics {
            max_composition_residual: composition,
            max_equation_residual: equation,
            t_span: span,
            step: (span.1 - span.0) / (CASE_SAMPLES - 1) as f64,
            gradient_residual: Some(gradient_residual),
            composition_offset: None,
        },
    })
}

/// Names under which `G` may refer to the `i`-th characteristic coordinate.
pub fn invariant_names(i: usize) -> [String; 2] {
    [format!("xi{i}"), format!("ξ{i}")]
}

/// `H(t)`, `∫_{t0}^t H = f(t) - f(t0)` and `ξ_i` for a closed-form `f`.
pub fn characteristics(
    path: &PathFunction,
    spatial_dim: usize,
    t0: f64,
    invariant_function: Option<&Expr>,
) -> Result<CharacteristicData> {
    let f = path.as_expr().ok_or_else(|| {
        Error::invalid("the {f}-case needs f in closed form, not a sampled table")
    })?;
    if let Some(g) = invariant_function {
        let allowed: Vec<String> = (1..=spatial_dim).flat_map(invariant_names).collect();
        if let Some(name) = g.free_vars().into_iter().find(|v| !allowed.contains(v)) {
            return Err(Error::ForeignVariable {
                context: "invariant function G",
                name,
            });
        }
    }
    let rate = f.differentiate(TIME);
    let integral = (f.clone() - Expr::Const(path.evaluate(t0)?)).simplify();
    let invariants = (1..=spatial_dim)
        .map(|i| (Expr::var(spatial_var(i)) - integral.clone()).simplify())
        .collect();
    Ok(CharacteristicData {
        rate,
        integral,
        invariants,
        invariant_function: invariant_function.cloned(),
    })
}

/// `H Σ_i ∂E/∂x_i + ∂E/∂t - H`.
pub fn characteristic_residual(field: &ScalarField, rate: &Expr) -> Expr {
    let divergence_free = Expr::sum(gradient(field));
    (rate.clone() * divergence_free + field.time_partial() - rate.clone()).simplify()
}

/// Grid of `POINTS_PER_AXIS^n` points over `[x0 - 1, x0 + 1] × [t0, t1]`
/// (seeded random points once that would exceed `MAX_GRID`).
const POINTS_PER_AXIS: usize = 10;
const MAX_GRID: usize = 100_000;

fn residual_grid(x0: &[f64], span: (f64, f64)) -> Vec<Vec<f64>> {
    let mut axes: Vec<(f64, f64)> = x0.iter().map(|&c| (c - 1.0, c + 1.0)).collect();
    axes.push(span);
    let total = POINTS_PER_AXIS.checked_pow(axes.len() as u32);
    match total {
        Some(total) if total <= MAX_GRID => (0..total)
            .map(|mut idx| {
                axes.iter()
                    .map(|&(lo, hi)| {
                        let k = idx % POINTS_PER_AXIS;
                        idx /= POINTS_PER_AXIS;
                        lo + (hi - lo) * k as f64 / (POINTS_PER_AXIS - 1) as f64
                    })
                    .collect()
            })
            .collect(),
        _ => {
            use rand::Rng;
            let mut rng = crate::sampling::seeded_rng(0xf_ca5e);
            (0..MAX_GRID)
                .map(|_| {
                    axes.iter()
                        .map(|&(lo, hi)| rng.gen_range(lo..=hi))
                        .collect()
                })
                .collect()
        }
    }
}

/// {f}-case: `x_i(t) = x0_i + ∫H`, `E = ∫H + G(ξ)`; the characteristic PDE
/// residual is checked on a grid around `x0` over `span`.
pub fn solve_f_case(
    path: &PathFunction,
    dim: usize,
    x0: &[f64],
    invariant_function: Option<&Expr>,
    span: (f64, f64),
    cfg: &ToleranceConfig,
) -> Result<CaseSolution> {
    cfg.validate()?;
    if dim < 2 {
        return Err(Error::DimensionMismatch {
            context: "{f}-case dimension (need n >= 2)",
            expected: 2,
            found: dim,
        });
    }
    let m = dim - 1;
    if x0.len() != m {
        return Err(Error::DimensionMismatch {
            context: "initial point",
            expected: m,
            found: x0.len(),
        });
    }
    let data = characteristics(path, m, span.0, invariant_function)?;
    let components = x0
        .iter()
        .map(|&c| (Expr::Const(c) + data.integral.clone()).simplify())
        .collect();
    let curve = Curve::new(components, Smoothness::C1)?;

    let mut body = data.integral.clone();
    if let Some(g) = &data.invariant_function {
        let map: BTreeMap<String, Expr> = data
            .invariants
            .iter()
            .enumerate()
            .flat_map(|(i, xi)| invariant_names(i + 1).map(|name| (name, xi.clone())))
            .collect();
        body = body + g.substitute_all(&map);
    }
    let field = ScalarField::new(dim, body.simplify())?;

    let residual = characteristic_residual(&field, &data.rate);
    let mut pde: f64 = 0.0;
    for point in residual_grid(x0, span) {
        let (space, time) = point.split_at(m);
        let value = residual.evaluate(&point_assignment(space, time[0]))?;
        pde = pde.max(value.abs());
    }

    let composed = compose(&field, &curve)?;
    let offset = composed.evaluate(span.0)? - path.evaluate(span.0)?;
    let mut spread: f64 = 0.0;
    for t in uniform_times(span, CASE_SAMPLES) {
        spread = spread.max((composed.evaluate(t)? - path.evaluate(t)? - offset).abs());
    }

    Ok(CaseSolution {
        field,
        curve: CurvePath::Closed(curve),
        path: path.clone(),
        diagnostics: Diagnostics {
            max_composition_residual: spread,
            max_equation_residual: pde,
            t_span: span,
            step: (span.1 - span.0) / (POINTS_PER_AXIS - 1) as f64,
            gradient_residual: None,
            composition_offset: Some(offset),
        },
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompositionReport {
    pub samples: usize,
    pub max_composition_residual: f64,
    pub max_derivative_residual: f64,
    /// `(t, f(t), E(p(t), t))` at each checked time.
    pub rows: Vec<(f64, f64, f64)>,
}

/// Checks `f(t) = E(p(t), t)` and `df/dt = (V·∇)E + ∂E/∂t` at `sample_count`
/// times. Sampled curves are only checked at grid nodes.
pub fn verify_composition(sol: &CaseSolution, sample_count: usize) -> Result<CompositionReport> {
    let field = &sol.field;
    let grad = gradient(field);
    let time_partial = field.time_partial();
    let mut rows = Vec::with_capacity(sample_count);
    let mut composition: f64 = 0.0;
    let mut derivative: f64 = 0.0;

    let mut check = |t: f64, x: &[f64], v: &[f64]| -> Result<()> {
        let at = point_assignment(x, t);
        let e = field.body().evaluate(&at)?;
        let f = sol.path.evaluate(t)?;
        let mut total = time_partial.evaluate(&at)?;
        for (vi, gi) in v.iter().zip(&grad) {
            total += vi * gi.evaluate(&at)?;
        }
        composition = composition.max((f - e).abs());
        derivative = derivative.max((sol.path.derivative(t)? - total).abs());
        rows.push((t, f, e));
        Ok(())
    };

    match &sol.curve {
        CurvePath::Closed(curve) => {
            let speed = velocity(curve);
            for t in uniform_times(sol.diagnostics.t_span, sample_count) {
                let at = calculus::point_assignment(&[], t);
                let v = speed
                    .iter()
                    .map(|c| c.evaluate(&at))
                    .collect::<std::result::Result<Vec<_>, _>>()?;
                check(t, &curve.position(t)?, &v)?;
            }
        }
        CurvePath::Sampled(s) => {
            let last = s.times.len() - 1;
            let nodes: Vec<usize> = match sample_count {
                0 => vec![],
                1 => vec![0],
                c => (0..c)
                    .map(|k| ((k * last) as f64 / (c - 1) as f64).round() as usize)
                    .collect(),
            };
            for k in nodes {
                check(s.times[k], &s.points[k], &s.velocities[k])?;
            }
        }
    }
    Ok(CompositionReport {
        samples: rows.len(),
        max_composition_residual: composition,
        max_derivative_residual: derivative,
        rows,
    })
}
