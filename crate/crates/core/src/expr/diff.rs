use super::{Assignment, BinOp, Expr, Func};

impl Expr {
    /// Exact symbolic derivative with respect to `var`, lightly simplified.
    pub fn differentiate(&self, var: &str) -> Expr {
        self.derive(var).simplify()
    }

    fn derive(&self, var: &str) -> Expr {
        match self {
            Expr::Const(_) => Expr::zero(),
            Expr::Var(name) => {
                if name == var {
                    Expr::one()
                } else {
                    Expr::zero()
                }
            }
            Expr::Unary(func, arg) => {
                let inner = arg.derive(var);
                let u = (**arg).clone();
                match func {
                    Func::Neg => -inner,
                    Func::Sin => u.cos() * inner,
                    Func::Cos => -(u.sin()) * inner,
                    Func::Exp => u.exp() * inner,
                    Func::Log => inner / u,
                    Func::Sqrt => inner / (Expr::Const(2.0) * u.sqrt()),
                }
            }
            Expr::Binary(op, lhs, rhs) => {
                let (u, g) = ((**lhs).clone(), (**rhs).clone());
                match op {
                    BinOp::Add => lhs.derive(var) + rhs.derive(var),
                    BinOp::Sub => lhs.derive(var) - rhs.derive(var),
                    BinOp::Mul => lhs.derive(var) * g + u * rhs.derive(var),
                    BinOp::Div => (lhs.derive(var) * g.clone() - u * rhs.derive(var)) / g.powi(2),
                    BinOp::Pow => {
                        let base_varies = u.depends_on(var);
                        let exp_varies = g.depends_on(var);
                        match (base_varies, exp_varies) {
                            (false, false) => Expr::zero(),
                            (true, false) => {
                                let lowered = match g.as_const() {
                                    Some(c) => Expr::Const(c - 1.0),
                                    None => g.clone() - Expr::one(),
                                };
                                g * u.clone().pow(lowered) * lhs.derive(var)
                            }
                            (false, true) => self.clone() * u.log() * rhs.derive(var),
                            (true, true) => {
                                self.clone()
                                    * (rhs.derive(var) * u.clone().log() + g * lhs.derive(var) / u)
                            }
                        }
                    }
                }
            }
        }
    }

    /// Constant folding plus `x+0`, `x*1`, `x*0`, `x-x`, `x^1` style rewrites,
    /// repeated until nothing changes.
    pub fn simplify(&self) -> Expr {
        let mut current = self.clone();
        loop {
            let next = current.simplify_once();
            if next == current {
                return current;
            }
            current = next;
        }
    }

    fn simplify_once(&self) -> Expr {
        match self {
            Expr::Const(c) if *c == 0.0 => Expr::zero(),
            Expr::Const(_) | Expr::Var(_) => self.clone(),
            Expr::Unary(func, arg) => {
                let arg = arg.simplify_once();
                if let Some(c) = arg.as_const() {
                    if let Ok(v) = func.apply(c) {
                        return Expr::Const(v + 0.0);
                    }
                }
                match (func, arg) {
                    (Func::Neg, Expr::Unary(Func::Neg, inner)) => *inner,
                    (func, arg) => Expr::unary(*func, arg),
                }
            }
            Expr::Binary(op, lhs, rhs) => {
                let lhs = lhs.simplify_once();
                let rhs = rhs.simplify_once();
                if let (Some(a), Some(b)) = (lhs.as_const(), rhs.as_const()) {
                    if let Ok(v) = op.apply(a, b) {
                        return Expr::Const(v + 0.0);
                    }
                }
                let zero = |e: &Expr| e.is_const(0.0);
                let one = |e: &Expr| e.is_const(1.0);
                match op {
                    BinOp::Add if zero(&rhs) => lhs,
                    BinOp::Add if zero(&lhs) => rhs,
                    BinOp::Sub if zero(&rhs) => lhs,
                    BinOp::Sub if zero(&lhs) => -rhs,
                    BinOp::Sub if lhs == rhs => Expr::zero(),
                    BinOp::Mul if zero(&lhs) || zero(&rhs) => Expr::zero(),
                    BinOp::Mul if one(&rhs) => lhs,
                    BinOp::Mul if one(&lhs) => rhs,
                    BinOp::Div if one(&rhs) => lhs,
                    BinOp::Div if zero(&lhs) => Expr::zero(),
                    BinOp::Pow if one(&rhs) => lhs,
                    BinOp::Pow if zero(&rhs) => Expr::one(),
                    _ => Expr::binary(*op, lhs, rhs),
                }
            }
        }
    }

    /// Central finite difference of `self` in `var` at `at`, step
    /// `h = rel_step * max(1, |at[var]|)`.
    pub fn finite_difference(
        &self,
        var: &str,
        at: &Assignment,
        rel_step: f64,
    ) -> Result<f64, super::EvalError> {
        let x = at
            .get(var)
            .ok_or_else(|| super::EvalError::Unbound(var.to_string()))?;
        let h = rel_step * x.abs().max(1.0);
        let mut plus = at.clone();
        plus.set(var, x + h);
        let mut minus = at.clone();
        minus.set(var, x - h);
        Ok((self.evaluate(&plus)? - self.evaluate(&minus)?) / (2.0 * h))
    }
}

#[cfg(test)]
mod tests {
    use crate::expr::{parse, Assignment, Expr};

    fn d(text: &str, var: &str) -> Expr {
        parse(text).unwrap().differentiate(var)
    }

    #[test]
    fn power_rule_and_independence() {
        assert_eq!(d("x1^2", "x1").to_string(), "2 * x1");
        assert_eq!(d("x1", "t"), Expr::zero());
        assert_eq!(d("t", "t"), Expr::one());
    }

    #[test]
    fn sin_of_product_matches_finite_difference() {
        let e = parse("sin(x1*x2)").unwrap();
        let at = Assignment::new().with("x1", 0.7).with("x2", 1.3);
        let exact = e.differentiate("x1").evaluate(&at).unwrap();
        let fd = e.finite_difference("x1", &at, 1e-6).unwrap();
        assert!((exact - fd).abs() < 1e-7, "{exact} vs {fd}");
        assert!((exact - 1.3 * (0.7f64 * 1.3).cos()).abs() < 1e-15);
    }

    #[test]
    fn simplify_examples() {
        assert_eq!(parse("x1*0 + t").unwrap().simplify().to_string(), "t");
        assert_eq!(parse("2+3").unwrap().simplify().to_string(), "5");
        assert_eq!(parse("x1 - x1").unwrap().simplify(), Expr::zero());
        assert_eq!(parse("(x1*1)^1").unwrap().simplify().to_string(), "x1");
        assert_eq!(parse("--x1").unwrap().simplify().to_string(), "x1");
        // log(-1) cannot fold; it stays symbolic instead of becoming NaN.
        assert_eq!(parse("log(-1)").unwrap().simplify().to_string(), "log(-1)");
    }

    #[test]
    fn derivative_of_product_simplifies_to_other_factor() {
        assert_eq!(d("x1*x2", "x1").to_string(), "x2");
    }

    #[test]
    fn sqrt_derivative_is_undefined_at_zero() {
        let de = d("sqrt(x1)", "x1");
        assert!(de.evaluate(&Assignment::new().with("x1", 0.0)).is_err());
        assert_eq!(
            de.evaluate(&Assignment::new().with("x1", 4.0)).unwrap(),
            0.25
        );
    }

    #[test]
    fn variable_exponent_rules() {
        let at = Assignment::new().with("x1", 1.7).with("t", 0.4);
        for text in [
            "2^x1",
            "x1^x1",
            "x1^t",
            "x1^(t+1)",
            "exp(x1)^2",
            "log(x1)/x1",
        ] {
            let e = parse(text).unwrap();
            let exact = e.differentiate("x1").evaluate(&at).unwrap();
            let fd = e.finite_difference("x1", &at, 1e-6).unwrap();
            assert!(
                (exact - fd).abs() <= 1e-6 * exact.abs().max(1.0),
                "{text}: {exact} vs {fd}"
            );
        }
    }
}
