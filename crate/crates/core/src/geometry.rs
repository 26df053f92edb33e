//! One-forms, vector fields and their pairing, with Hamilton–Jacobi and
//! Poincaré–Cartan checks.

use std::collections::BTreeMap;

use crate::calculus::{gradient, ScalarField, TIME};
use crate::cases::SkewMatrix;
use crate::error::{Error, Result};
use crate::expr::{Assignment, BinOp, Expr, Func};

#[derive(Debug, Clone, PartialEq)]
pub struct OneForm {
    coords: Vec<String>,
    coeffs: Vec<Expr>,
}

impl OneForm {
    pub fn new(coords: Vec<String>, coeffs: Vec<Expr>) -> Result<Self> {
        if coords.len() != coeffs.len() {
            return Err(Error::DimensionMismatch {
                context: "one-form coefficients",
                expected: coords.len(),
                found: coeffs.len(),
            });
        }
        Ok(OneForm { coords, coeffs })
    }

    pub fn coords(&self) -> &[String] {
        &self.coords
    }

    pub fn coeffs(&self) -> &[Expr] {
        &self.coeffs
    }

    /// Coefficient of `d<name>`, if `name` is one of the coordinates.
    pub fn coeff(&self, name: &str) -> Option<&Expr> {
        self.coords
            .iter()
            .position(|c| c == name)
            .map(|k| &self.coeffs[k])
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|c| c.simplify().is_const(0.0))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    coords: Vec<String>,
    components: Vec<Expr>,
}

impl VectorField {
    pub fn new(coords: Vec<String>, components: Vec<Expr>) -> Result<Self> {
        if coords.len() != components.len() {
            return Err(Error::DimensionMismatch {
                context: "vector field components",
                expected: coords.len(),
                found: components.len(),
            });
        }
        Ok(VectorField { coords, components })
    }

    pub fn coords(&self) -> &[String] {
        &self.coords
    }

    pub fn components(&self) -> &[Expr] {
        &self.components
    }
}

/// `dE = Σ ∂E/∂x_i dx_i + ∂E/∂t dt`.
pub fn exterior_derivative(field: &ScalarField) -> OneForm {
    let mut coeffs = gradient(field);
    coeffs.push(field.time_partial());
    OneForm {
        coords: field.coordinates(),
        coeffs,
    }
}

/// `X = Σ_{i,j} b_ij ∂E/∂x_j ∂/∂x_i + ∂/∂t`.
pub fn skew_field(field: &ScalarField, b: &SkewMatrix) -> Result<VectorField> {
    if b.order() != field.spatial_dim() {
        return Err(Error::DimensionMismatch {
            context: "skew matrix order vs spatial dimension",
            expected: field.spatial_dim(),
            found: b.order(),
        });
    }
    let mut components = b.apply_exprs(&gradient(field));
    components.push(Expr::one());
    Ok(VectorField {
        coords: field.coordinates(),
        components,
    })
}

/// `⟨w, X⟩ = Σ_k w_k X_k`. Each product is split into summand pairs, and
/// pairs with the same two factors (in either order) are collected before
/// summing, so `c·a·b - c·b·a` cancels exactly.
pub fn pairing(w: &OneForm, x: &VectorField) -> Result<Expr> {
    if w.coords != x.coords {
        return Err(Error::invalid(format!(
            "one-form over ({}) cannot pair with a vector field over ({})",
            w.coords.join(", "),
            x.coords.join(", ")
        )));
    }
    let mut collected: BTreeMap<(String, String), (Vec<f64>, Expr)> = BTreeMap::new();
    for (a, b) in w.coeffs.iter().zip(&x.components) {
        for (ca, ta) in summands(a) {
            for (cb, tb) in summands(b) {
                let (sa, sb) = (ta.to_string(), tb.to_string());
                let key = if sa <= sb { (sa, sb) } else { (sb, sa) };
                collected
                    .entry(key)
                    .or_insert_with(|| (Vec::new(), ta.clone() * tb.clone()))
                    .0
                    .push(ca * cb);
            }
        }
    }
    Ok(Expr::sum(
        collected
            .into_values()
            .map(|(coeffs, product)| Expr::Const(cancelled_sum(coeffs)) * product),
    )
    .simplify())
}

/// Top-level summands of `e` with their constant factors pulled out.
fn summands(e: &Expr) -> Vec<(f64, Expr)> {
    let scaled =
        |c: f64, terms: Vec<(f64, Expr)>| terms.into_iter().map(|(k, t)| (c * k, t)).collect();
    match e {
        Expr::Const(c) => vec![(*c, Expr::one())],
        Expr::Unary(Func::Neg, a) => scaled(-1.0, summands(a)),
        Expr::Binary(BinOp::Add, a, b) => [summands(a), summands(b)].concat(),
        Expr::Binary(BinOp::Sub, a, b) => [summands(a), scaled(-1.0, summands(b))].concat(),
        Expr::Binary(BinOp::Mul, a, b) => match (a.as_const(), b.as_const()) {
            (Some(c), _) => scaled(c, summands(b)),
            (_, Some(c)) => scaled(c, summands(a)),
            _ => vec![(1.0, e.clone())],
        },
        _ => vec![(1.0, e.clone())],
    }
}

/// Sum after dropping every pair `c, -c`.
fn cancelled_sum(mut coeffs: Vec<f64>) -> f64 {
    let mut kept: Vec<f64> = Vec::with_capacity(coeffs.len());
    while let Some(c) = coeffs.pop() {
        match coeffs.iter().position(|&d| d == -c) {
            Some(k) => {
                coeffs.swap_remove(k);
            }
            None => kept.push(c),
        }
    }
    kept.iter().sum()
}

pub fn position_var(i: usize) -> String {
    format!("q{i}")
}

pub fn momentum_var(i: usize) -> String {
    format!("p{i}")
}

fn check_vars(context: &'static str, e: &Expr, allowed: &[String]) -> Result<()> {
    match e.free_vars().into_iter().find(|v| !allowed.contains(v)) {
        Some(name) => Err(Error::ForeignVariable { context, name }),
        None => Ok(()),
    }
}

/// `∂S/∂t + H(p_i := ∂S/∂q_i, q, t)` for `m` degrees of freedom. Names bound
/// in `constants` are substituted into both `S` and `H` first.
pub fn hamilton_jacobi_residual(
    action: &Expr,
    hamiltonian: &Expr,
    dof: usize,
    constants: &Assignment,
) -> Result<Expr> {
    let bind: BTreeMap<String, Expr> = constants
        .iter()
        .map(|(k, v)| (k.to_string(), Expr::Const(v)))
        .collect();
    let action = action.substitute_all(&bind);
    let hamiltonian = hamiltonian.substitute_all(&bind);

    let positions: Vec<String> = (1..=dof).map(position_var).collect();
    let mut allowed = positions.clone();
    allowed.push(TIME.to_string());
    check_vars("action S", &action, &allowed)?;
    allowed.extend((1..=dof).map(momentum_var));
    check_vars("Hamiltonian H", &hamiltonian, &allowed)?;

    let momenta: BTreeMap<String, Expr> = positions
        .iter()
        .enumerate()
        .map(|(i, q)| (momentum_var(i + 1), action.differentiate(q)))
        .collect();
    Ok((action.differentiate(TIME) + hamiltonian.substitute_all(&momenta)).simplify())
}

/// `W = Σ p_i dq_i - H dt` over `(q1, ..., qm, t)`.
pub fn poincare_cartan(momenta: &[Expr], hamiltonian: &Expr) -> Result<OneForm> {
    if momenta.is_empty() {
        return Err(Error::invalid(
            "Poincaré–Cartan form needs at least one momentum",
        ));
    }
    let mut coords: Vec<String> = (1..=momenta.len()).map(position_var).collect();
    coords.push(TIME.to_string());
    let mut coeffs = momenta.to_vec();
    coeffs.push((-hamiltonian.clone()).simplify());
    OneForm::new(coords, coeffs)
}

/// Default number of steps for [`line_integral_along`].
pub const LINE_STEPS: usize = 1000;

/// Trapezoid rule for `∫ w` over a polyline through `points` (each point
/// lists the form's coordinates in order):
/// `Σ_k ½ (w(γ_k) + w(γ_{k+1})) · (γ_{k+1} - γ_k)`.
pub fn line_integral(w: &OneForm, points: &[Vec<f64>]) -> Result<f64> {
    let dim = w.coords.len();
    let coefficients_at = |p: &[f64]| -> Result<Vec<f64>> {
        if p.len() != dim {
            return Err(Error::DimensionMismatch {
                context: "path point",
                expected: dim,
                found: p.len(),
            });
        }
        let at: Assignment = w.coords.iter().cloned().zip(p.iter().copied()).collect();
        Ok(w.coeffs
            .iter()
            .map(|c| c.evaluate(&at))
            .collect::<std::result::Result<_, _>>()?)
    };
    let mut total = 0.0;
    let mut prev = match points.first() {
        Some(p) => coefficients_at(p)?,
        None => return Ok(0.0),
    };
    for pair in points.windows(2) {
        let next = coefficients_at(&pair[1])?;
        for k in 0..dim {
            total += 0.5 * (prev[k] + next[k]) * (pair[1][k] - pair[0][k]);
        }
        prev = next;
    }
    Ok(total)
}

/// Samples the path `γ(s)` (one expression in `param` per coordinate of
/// `w`) at `steps + 1` uniform parameter values and applies
/// [`line_integral`].
pub fn line_integral_along(
    w: &OneForm,
    path: &[Expr],
    param: &str,
    span: (f64, f64),
    steps: usize,
) -> Result<f64> {
    if path.len() != w.coords.len() {
        return Err(Error::DimensionMismatch {
            context: "path components",
            expected: w.coords.len(),
            found: path.len(),
        });
    }
    let steps = steps.max(1);
    let points = (0..=steps)
        .map(|k| {
            let s = span.0 + (span.1 - span.0) * k as f64 / steps as f64;
            let at = Assignment::new().with(param, s);
            path.iter()
                .map(|c| c.evaluate(&at).map_err(Error::from))
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    line_integral(w, &points)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::{equivalence, parse};

    fn e(text: &str) -> Expr {
        parse(text).unwrap()
    }

    #[test]
    fn exterior_derivative_examples() {
        let w = exterior_derivative(&ScalarField::parse(2, "x1^2+t").unwrap());
        assert_eq!(w.coords(), ["x1", "t"]);
        let shown: Vec<String> = w.coeffs().iter().map(Expr::to_string).collect();
        assert_eq!(shown, ["2 * x1", "1"]);
        assert!(exterior_derivative(&ScalarField::parse(3, "4.5").unwrap()).is_zero());

        let field = ScalarField::parse(3, "x1*x2").unwrap();
        let w = exterior_derivative(&field);
        let at = Assignment::new()
            .with("x1", 0.5)
            .with("x2", -0.7)
            .with("t", 0.0);
        for (k, var) in ["x1", "x2", "t"].iter().enumerate() {
            let fd = field.body().finite_difference(var, &at, 1e-6).unwrap();
            assert!((w.coeffs()[k].evaluate(&at).unwrap() - fd).abs() < 1e-7);
        }
    }

    #[test]
    fn skew_field_examples() {
        let field = ScalarField::parse(3, "x1^2+x2^2").unwrap();
        let x = skew_field(&field, &SkewMatrix::rotation()).unwrap();
        let shown: Vec<String> = x.components().iter().map(Expr::to_string).collect();
        assert_eq!(shown, ["2 * x2", "-(2 * x1)", "1"]);

        let x = skew_field(&field, &SkewMatrix::zero(2)).unwrap();
        let shown: Vec<String> = x.components().iter().map(Expr::to_string).collect();
        assert_eq!(shown, ["0", "0", "1"]);

        let x = skew_field(
            &ScalarField::parse(2, "x1^3*t").unwrap(),
            &SkewMatrix::zero(1),
        )
        .unwrap();
        let shown: Vec<String> = x.components().iter().map(Expr::to_string).collect();
        assert_eq!(shown, ["0", "1"]);

        assert!(skew_field(&field, &SkewMatrix::zero(1)).is_err());
    }

    #[test]
    fn pairing_of_gradient_with_skew_field_is_time_partial() {
        let field = ScalarField::parse(3, "x1^2+x2^2+t*x1").unwrap();
        let b = SkewMatrix::new(vec![vec![0.0, 1.5], vec![-1.5, 0.0]]).unwrap();
        let paired = pairing(
            &exterior_derivative(&field),
            &skew_field(&field, &b).unwrap(),
        )
        .unwrap();
        assert!(equivalence(&paired, &field.time_partial()).holds(1e-12));
    }

    #[test]
    fn pairing_basics() {
        let coords = vec!["x1".to_string(), "t".to_string()];
        let zero = OneForm::new(coords.clone(), vec![Expr::zero(), Expr::zero()]).unwrap();
        let x = VectorField::new(coords.clone(), vec![e("x1"), Expr::one()]).unwrap();
        assert_eq!(pairing(&zero, &x).unwrap(), Expr::zero());
        let dt = OneForm::new(coords, vec![Expr::zero(), Expr::one()]).unwrap();
        assert_eq!(pairing(&dt, &x).unwrap(), Expr::one());

        let other = VectorField::new(vec!["q1".into(), "t".into()], vec![e("1"), e("1")]).unwrap();
        assert!(pairing(&dt, &other).is_err());
    }

    #[test]
    fn free_particle_action() {
        let h = e("p1^2/2");
        let consts = Assignment::new().with("a", 1.3);
        let r = hamilton_jacobi_residual(&e("a*q1 - a^2*t/2"), &h, 1, &consts).unwrap();
        assert_eq!(r, Expr::zero());

        let r = hamilton_jacobi_residual(&e("q1 - t/2"), &h, 1, &Assignment::new()).unwrap();
        assert_eq!(r, Expr::zero());

        let r = hamilton_jacobi_residual(&e("7"), &Expr::zero(), 1, &Assignment::new()).unwrap();
        assert_eq!(r, Expr::zero());

        let r = hamilton_jacobi_residual(&e("q1^2"), &h, 1, &Assignment::new()).unwrap();
        let at = Assignment::new().with("q1", 1.0).with("t", 0.0);
        assert_eq!(r.evaluate(&at).unwrap(), 2.0);
    }

    #[test]
    fn hamilton_jacobi_rejects_unbound_names() {
        let err = hamilton_jacobi_residual(&e("a*q1"), &e("p1^2/2"), 1, &Assignment::new());
        assert!(matches!(err, Err(Error::ForeignVariable { .. })));
        let err = hamilton_jacobi_residual(&e("q1"), &e("p2^2"), 1, &Assignment::new());
        assert!(matches!(err, Err(Error::ForeignVariable { .. })));
    }

    #[test]
    fn poincare_cartan_examples() {
        let w = poincare_cartan(&[Expr::one()], &e("1/2")).unwrap();
        assert_eq!(w.coords(), ["q1", "t"]);
        assert_eq!(w.coeff("t").unwrap().as_const(), Some(-0.5));
        // Along q1 = t the integrand is 1 - 1/2.
        let value =
            line_integral_along(&w, &[e("s"), e("s")], "s", (0.0, 1.0), LINE_STEPS).unwrap();
        assert!((value - 0.5).abs() < 1e-15);

        let w = poincare_cartan(&[e("q2"), e("q1")], &Expr::zero()).unwrap();
        assert_eq!(w.coeff("t"), Some(&Expr::zero()));
        assert!(poincare_cartan(&[], &Expr::zero()).is_err());
    }

    #[test]
    fn action_makes_form_exact_along_a_curved_path() {
        let a = 1.3;
        let s = e("a*q1 - a^2*t/2").substitute("a", &Expr::Const(a));
        let momenta = [s.differentiate("q1")];
        let h = e("p1^2/2").substitute("p1", &momenta[0]);
        let w = poincare_cartan(&momenta, &h).unwrap();
        let path = [e("sin(3*s) + s^2"), e("s^3 - s")];
        let integral = line_integral_along(&w, &path, "s", (0.0, 1.5), LINE_STEPS).unwrap();
        let end = |s_val: f64| {
            let at = Assignment::new().with("s", s_val);
            let q = path[0].evaluate(&at).unwrap();
            let t = path[1].evaluate(&at).unwrap();
            s.evaluate(&Assignment::new().with("q1", q).with("t", t))
                .unwrap()
        };
        assert!((integral - (end(1.5) - end(0.0))).abs() <= 1e-8);
    }
}
