//! Fields on `R^n`, curves in `R^{n-1}` parameterized by `t`, and path
//! functions of `t` alone.
//!
//! These are three different kinds of object and the types keep them apart:
//! a [`PathFunction`] can only be obtained from a [`ScalarField`] through
//! [`compose`], and no operation here accepts a path function where a field
//! is expected. The bridge between their derivatives is [`total_derivative`],
//! the value on the curve of `Σ_i (dx_i/dt) ∂E/∂x_i + ∂E/∂t`.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::expr::{Assignment, Expr};
use crate::sampling;

pub const TIME: &str = "t";

/// Name of the `i`-th spatial coordinate, 1-based.
pub fn spatial_var(i: usize) -> String {
    format!("x{i}")
}

/// Assignment binding `x1..x{m}` to `point` and `t` to `time`.
pub fn point_assignment(point: &[f64], time: f64) -> Assignment {
    let mut at: Assignment = point
        .iter()
        .enumerate()
        .map(|(i, &x)| (spatial_var(i + 1), x))
        .collect();
    at.set(TIME, time);
    at
}

/// `E(x1, ..., x{n-1}, t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    dim: usize,
    body: Expr,
}

impl ScalarField {
    /// `dim` counts the time coordinate, so a field on the plane over time
    /// has `dim = 3`.
    pub fn new(dim: usize, body: Expr) -> Result<Self> {
        if dim < 2 {
            return Err(Error::DimensionMismatch {
                context: "scalar field (need n >= 2)",
                expected: 2,
                found: dim,
            });
        }
        let allowed: Vec<String> = (1..dim).map(spatial_var).collect();
        if let Some(name) = body
            .free_vars()
            .into_iter()
            .find(|v| v != TIME && !allowed.contains(v))
        {
            return Err(Error::ForeignVariable {
                context: "scalar field",
                name,
            });
        }
        Ok(ScalarField { dim, body })
    }

    pub fn parse(dim: usize, text: &str) -> Result<Self> {
        Self::new(dim, crate::expr::parse(text)?)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn spatial_dim(&self) -> usize {
        self.dim - 1
    }

    pub fn body(&self) -> &Expr {
        &self.body
    }

    /// `x1, ..., x{n-1}, t`.
    pub fn coordinates(&self) -> Vec<String> {
        let mut names: Vec<String> = (1..self.dim).map(spatial_var).collect();
        names.push(TIME.to_string());
        names
    }

    pub fn evaluate(&self, point: &[f64], time: f64) -> Result<f64> {
        self.check_point(point)?;
        Ok(self.body.evaluate(&point_assignment(point, time))?)
    }

    pub fn time_partial(&self) -> Expr {
        self.body.differentiate(TIME)
    }

    fn check_point(&self, point: &[f64]) -> Result<()> {
        if point.len() != self.spatial_dim() {
            return Err(Error::DimensionMismatch {
                context: "field evaluation point",
                expected: self.spatial_dim(),
                found: point.len(),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Smoothness {
    C1,
    C2,
}

/// `t ↦ (x1(t), ..., x{n-1}(t))`.
#[derive(Debug, Clone, PartialEq)]
pub struct Curve {
    components: Vec<Expr>,
    smoothness: Smoothness,
}

impl Curve {
    pub fn new(components: Vec<Expr>, smoothness: Smoothness) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::invalid("a curve needs at least one component"));
        }
        for c in &components {
            if let Some(name) = c.free_vars().into_iter().find(|v| v != TIME) {
                return Err(Error::ForeignVariable {
                    context: "curve component",
                    name,
                });
            }
        }
        Ok(Curve {
            components,
            smoothness,
        })
    }

    pub fn parse<S: AsRef<str>>(components: &[S]) -> Result<Self> {
        let exprs = components
            .iter()
            .map(|c| crate::expr::parse(c.as_ref()))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        Self::new(exprs, Smoothness::C2)
    }

    pub fn with_smoothness(mut self, smoothness: Smoothness) -> Self {
        self.smoothness = smoothness;
        self
    }

    pub fn components(&self) -> &[Expr] {
        &self.components
    }

    pub fn smoothness(&self) -> Smoothness {
        self.smoothness
    }

    /// Dimension of the ambient space including `t`.
    pub fn dim(&self) -> usize {
        self.components.len() + 1
    }

    pub fn spatial_dim(&self) -> usize {
        self.components.len()
    }

    pub fn position(&self, time: f64) -> Result<Vec<f64>> {
        let at = Assignment::new().with(TIME, time);
        self.components
            .iter()
            .map(|c| c.evaluate(&at).map_err(Error::from))
            .collect()
    }
}

/// `f(t)`, either in closed form or as a table with linear interpolation.
#[derive(Debug, Clone, PartialEq)]
pub enum PathFunction {
    Closed(Expr),
    Sampled(Vec<(f64, f64)>),
}

impl PathFunction {
    pub fn closed(body: Expr) -> Result<Self> {
        if let Some(name) = body.free_vars().into_iter().find(|v| v != TIME) {
            return Err(Error::ForeignVariable {
                context: "path function",
                name,
            });
        }
        Ok(PathFunction::Closed(body))
    }

    pub fn parse(text: &str) -> Result<Self> {
        Self::closed(crate::expr::parse(text)?)
    }

    /// Times must be finite and strictly increasing.
    pub fn sampled(table: Vec<(f64, f64)>) -> Result<Self> {
        if table.is_empty() {
            return Err(Error::invalid("sampled path function has no samples"));
        }
        if table.iter().any(|(t, f)| !t.is_finite() || !f.is_finite()) {
            return Err(Error::invalid(
                "sampled path function has non-finite entries",
            ));
        }
        if table.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(Error::invalid("sample times must be strictly increasing"));
        }
        Ok(PathFunction::Sampled(table))
    }

    pub fn as_expr(&self) -> Option<&Expr> {
        match self {
            PathFunction::Closed(e) => Some(e),
            PathFunction::Sampled(_) => None,
        }
    }

    pub fn evaluate(&self, time: f64) -> Result<f64> {
        match self {
            PathFunction::Closed(e) => Ok(e.evaluate(&Assignment::new().with(TIME, time))?),
            PathFunction::Sampled(table) => {
                let (lo, hi) = (table[0].0, table[table.len() - 1].0);
                if time < lo || time > hi {
                    return Err(Error::invalid(format!(
                        "t = {time} is outside the sampled range [{lo}, {hi}]"
                    )));
                }
                let k = table.partition_point(|(t, _)| *t <= time);
                if k == 0 {
                    return Ok(table[0].1);
                }
                let (t0, f0) = table[k - 1];
                if k == table.len() || t0 == time {
                    return Ok(f0);
                }
                let (t1, f1) = table[k];
                Ok(f0 + (f1 - f0) * (time - t0) / (t1 - t0))
            }
        }
    }

    /// `df/dt`. Symbolic for closed forms; for tables a second-order
    /// difference at nodes and the chord slope between them.
    pub fn derivative(&self, time: f64) -> Result<f64> {
        match self {
            PathFunction::Closed(e) => Ok(e
                .differentiate(TIME)
                .evaluate(&Assignment::new().with(TIME, time))?),
            PathFunction::Sampled(table) => {
                if table.len() < 2 {
                    return Err(Error::invalid("need two samples for a derivative"));
                }
                let k = table.partition_point(|(t, _)| *t < time);
                if k < table.len() && table[k].0 == time {
                    return Ok(table_derivative(table, k));
                }
                if k == 0 || k == table.len() {
                    return Err(Error::invalid(format!(
                        "t = {time} is outside the sampled range"
                    )));
                }
                let ((t0, f0), (t1, f1)) = (table[k - 1], table[k]);
                Ok((f1 - f0) / (t1 - t0))
            }
        }
    }

    /// `f + c`.
    pub fn offset(&self, c: f64) -> PathFunction {
        match self {
            PathFunction::Closed(e) => PathFunction::Closed(e.clone() + Expr::Const(c)),
            PathFunction::Sampled(table) => {
                PathFunction::Sampled(table.iter().map(|&(t, f)| (t, f + c)).collect())
            }
        }
    }
}

fn table_derivative(table: &[(f64, f64)], k: usize) -> f64 {
    let n = table.len();
    let slope = |a: usize, b: usize| (table[b].1 - table[a].1) / (table[b].0 - table[a].0);
    if n == 2 {
        return slope(0, 1);
    }
    // Three-point Lagrange derivative at node k of the stencil (a, b, c).
    let (a, b, c) = match k {
        0 => (0, 1, 2),
        k if k == n - 1 => (n - 3, n - 2, n - 1),
        k => (k - 1, k, k + 1),
    };
    let (ta, tb, tc) = (table[a].0, table[b].0, table[c].0);
    let (fa, fb, fc) = (table[a].1, table[b].1, table[c].1);
    let x = table[k].0;
    fa * (2.0 * x - tb - tc) / ((ta - tb) * (ta - tc))
        + fb * (2.0 * x - ta - tc) / ((tb - ta) * (tb - tc))
        + fc * (2.0 * x - ta - tb) / ((tc - ta) * (tc - tb))
}

/// Numerical controls. `fd_step` is relative; `ball_radius0` and `shrink`
/// drive both the ε-δ search and the shrinking-ball limit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ToleranceConfig {
    pub fd_step: f64,
    pub eq_tol: f64,
    pub ode_step: f64,
    pub ball_radius0: f64,
    pub shrink: f64,
}

impl Default for ToleranceConfig {
    fn default() -> Self {
        ToleranceConfig {
            fd_step: 1e-6,
            eq_tol: 1e-9,
            ode_step: 1e-3,
            ball_radius0: 0.1,
            shrink: 0.5,
        }
    }
}

impl ToleranceConfig {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("fd_step", self.fd_step),
            ("eq_tol", self.eq_tol),
            ("ode_step", self.ode_step),
            ("ball_radius0", self.ball_radius0),
            ("shrink", self.shrink),
        ];
        for (name, value) in fields {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::invalid(format!(
                    "{name} must be positive, got {value}"
                )));
            }
        }
        if self.shrink >= 1.0 {
            return Err(Error::invalid("shrink factor must be below 1"));
        }
        Ok(())
    }
}

fn check_dims(field: &ScalarField, curve: &Curve) -> Result<()> {
    if field.dim() != curve.dim() {
        return Err(Error::DimensionMismatch {
            context: "field and curve",
            expected: field.dim(),
            found: curve.dim(),
        });
    }
    Ok(())
}

/// `∂E/∂x_i` for `i = 1..n-1`.
pub fn gradient(field: &ScalarField) -> Vec<Expr> {
    (1..field.dim())
        .map(|i| field.body().differentiate(&spatial_var(i)))
        .collect()
}

/// `dx_i/dt` componentwise.
pub fn velocity(curve: &Curve) -> Vec<Expr> {
    curve
        .components()
        .iter()
        .map(|c| c.differentiate(TIME))
        .collect()
}

/// `f = E∘p`, by substituting the curve components for `x_i`.
pub fn compose(field: &ScalarField, curve: &Curve) -> Result<PathFunction> {
    check_dims(field, curve)?;
    let map: BTreeMap<String, Expr> = curve
        .components()
        .iter()
        .enumerate()
        .map(|(i, c)| (spatial_var(i + 1), c.clone()))
        .collect();
    PathFunction::closed(field.body().substitute_all(&map).simplify())
}

/// `(V·∇)E + ∂E/∂t` as a function on `R^n`, with `V_i` the curve velocity
/// extended off the curve through its `t` argument.
#[derive(Debug, Clone, PartialEq)]
pub struct Bracket {
    advective: Expr,
    time_partial: Expr,
    full: Expr,
    spatial_dim: usize,
}

impl Bracket {
    pub fn new(field: &ScalarField, curve: &Curve) -> Result<Self> {
        check_dims(field, curve)?;
        // Unsimplified: `0 * (1/x1^2)` still fails at `x1 = 0`.
        let advective = Expr::sum(
            velocity(curve)
                .into_iter()
                .zip(gradient(field))
                .map(|(v, g)| v * g),
        );
        let time_partial = field.time_partial();
        let full = advective.clone() + time_partial.clone();
        Ok(Bracket {
            advective,
            time_partial,
            full,
            spatial_dim: field.spatial_dim(),
        })
    }

    pub fn advective(&self) -> &Expr {
        &self.advective
    }

    pub fn time_partial(&self) -> &Expr {
        &self.time_partial
    }

    pub fn expr(&self) -> &Expr {
        &self.full
    }

    /// Value at `r̂ = (x1, ..., x{n-1}, t)`.
    pub fn at(&self, point: &[f64]) -> Result<f64> {
        let (space, time) = point.split_at(self.spatial_dim);
        Ok(self.full.evaluate(&point_assignment(space, time[0]))?)
    }

    /// Largest `|bracket(r̂) - bracket(center)|` and the mean over `count`
    /// deterministic points of the open ball. Any undefined sample is an error.
    pub fn ball_stats(&self, center: &[f64], radius: f64, count: usize) -> Result<BallStats> {
        let center_value = self.at(center)?;
        let mut max_deviation: f64 = 0.0;
        let mut sum = 0.0;
        let points = sampling::unit_ball_points(center.len(), count);
        for offset in &points {
            let p: Vec<f64> = center
                .iter()
                .zip(offset)
                .map(|(c, o)| c + radius * o)
                .collect();
            let value = self.at(&p)?;
            max_deviation = max_deviation.max((value - center_value).abs());
            sum += value;
        }
        Ok(BallStats {
            center_value,
            max_deviation,
            mean: sum / points.len() as f64,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BallStats {
    pub center_value: f64,
    pub max_deviation: f64,
    pub mean: f64,
}

/// `r̂ = (p(t), t)`.
pub fn curve_point(curve: &Curve, time: f64) -> Result<Vec<f64>> {
    let mut point = curve.position(time)?;
    point.push(time);
    Ok(point)
}

/// `df/dt` at `t`, evaluated as `(V·∇)E + ∂E/∂t` on the curve.
pub fn total_derivative(field: &ScalarField, curve: &Curve, time: f64) -> Result<f64> {
    Bracket::new(field, curve)?.at(&curve_point(curve, time)?)
}

/// `(V·∇)E` on the curve.
pub fn advective_term(field: &ScalarField, curve: &Curve, time: f64) -> Result<f64> {
    let bracket = Bracket::new(field, curve)?;
    let at = point_assignment(&curve.position(time)?, time);
    Ok(bracket.advective().evaluate(&at)?)
}

pub const WITNESS_SAMPLES: usize = 64;
pub const WITNESS_FLOOR: f64 = 1e-12;

/// Finds `δ` such that the bracket stays within `epsilon` of its value at
/// `p(t)` on a sampled ball of radius `δ`, halving from `ball_radius0`.
pub fn epsilon_delta_witness(
    field: &ScalarField,
    curve: &Curve,
    time: f64,
    epsilon: f64,
    cfg: &ToleranceConfig,
) -> Result<f64> {
    if epsilon.is_nan() || epsilon <= 0.0 {
        return Err(Error::invalid("epsilon must be positive"));
    }
    cfg.validate()?;
    let bracket = Bracket::new(field, curve)?;
    let center = curve_point(curve, time)?;
    // A singular center has no witness at any radius.
    bracket.at(&center)?;
    let mut delta = cfg.ball_radius0;
    while delta >= WITNESS_FLOOR {
        if let Ok(stats) = bracket.ball_stats(&center, delta, WITNESS_SAMPLES) {
            if stats.max_deviation < epsilon {
                return Ok(delta);
            }
        }
        delta /= 2.0;
    }
    Err(Error::NoWitness {
        epsilon,
        floor: WITNESS_FLOOR,
    })
}
