#![allow(dead_code)]

use pathcalc::calculus::{Curve, ScalarField};

/// Field/curve pairs shared by the integration tests and the acceptance
/// suite, each with a time window where everything is defined.
pub struct Case {
    pub name: &'static str,
    pub field: ScalarField,
    pub curve: Curve,
    pub span: (f64, f64),
}

fn case(name: &'static str, field: &str, curve: &[&str], span: (f64, f64)) -> Case {
    Case {
        name,
        field: ScalarField::parse(curve.len() + 1, field).unwrap(),
        curve: Curve::parse(curve).unwrap(),
        span,
    }
}

pub fn corpus() -> Vec<Case> {
    vec![
        case("square along identity", "x1^2", &["t"], (0.0, 3.0)),
        case(
            "circle",
            "x1^2+x2^2",
            &["cos(t)", "sin(t)"],
            (0.0, std::f64::consts::TAU),
        ),
        case("pure time", "t", &["t"], (0.0, 2.0)),
        case("linear", "x1", &["t"], (-1.0, 1.0)),
        case("square plus time", "x1^2+t", &["t"], (0.0, 2.0)),
        case("modulated", "x1*sin(t)", &["t^2"], (0.0, 2.0)),
        case(
            "exponential product",
            "exp(x1)*x2",
            &["sin(t)", "t^3"],
            (-1.0, 1.0),
        ),
        case(
            "three dimensions",
            "x1*x2*x3 + t^2",
            &["t", "cos(t)", "exp(-t)"],
            (0.0, 2.0),
        ),
        case(
            "logarithm",
            "log(1 + x1^2) + t*x2",
            &["t", "t^2"],
            (-1.0, 1.0),
        ),
        case(
            "travelling wave",
            "sqrt(1 + x1^2) * cos(x2 - t)",
            &["2*t", "sin(3*t)"],
            (0.0, 1.5),
        ),
        case("harmonic", "x1^3 - 3*x1*x2^2", &["cos(t)", "t"], (0.0, 1.0)),
        case(
            "quotient",
            "x1/(2 + x2) - t/x1",
            &["1 + t^2", "t"],
            (0.0, 2.0),
        ),
    ]
}

pub fn times(span: (f64, f64), count: usize) -> Vec<f64> {
    (0..count)
        .map(|k| span.0 + (span.1 - span.0) * k as f64 / (count - 1) as f64)
        .collect()
}
