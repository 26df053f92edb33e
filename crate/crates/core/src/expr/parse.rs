//! Recursive-descent parser for the expression grammar.
//!
//! ```text
//! expr    := term (('+' | '-') term)*
//! term    := unary (('*' | '/') unary)*
//! unary   := '-' unary | power
//! power   := primary ('^' exponent)?
//! exponent:= '-' exponent | power
//! primary := number | ident | func '(' expr ')' | '(' expr ')'
//! ```

use thiserror::Error;

use super::{BinOp, Expr, Func};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("syntax error at byte {offset}: expected {expected}, found {found}")]
pub struct ParseError {
    pub offset: usize,
    pub expected: String,
    pub found: String,
}

pub fn parse(text: &str) -> Result<Expr, ParseError> {
    let mut parser = Parser { src: text, pos: 0 };
    let expr = parser.expr()?;
    parser.skip_ws();
    if parser.pos < text.len() {
        return Err(parser.error("operator or end of input"));
    }
    Ok(expr)
}

struct Parser<'a> {
    src: &'a str,
    pos: usize,
}

impl Parser<'_> {
    fn rest(&self) -> &str {
        &self.src[self.pos..]
    }

    fn peek(&self) -> Option<char> {
        self.rest().chars().next()
    }

    fn skip_ws(&mut self) {
        let trimmed = self.rest().trim_start();
        self.pos = self.src.len() - trimmed.len();
    }

    fn error(&self, expected: &str) -> ParseError {
        let found = match self.peek() {
            Some(c) => format!("`{c}`"),
            None => "end of input".to_string(),
        };
        ParseError {
            offset: self.pos,
            expected: expected.to_string(),
            found,
        }
    }

    fn eat(&mut self, c: char) -> bool {
        self.skip_ws();
        if self.peek() == Some(c) {
            self.pos += c.len_utf8();
            true
        } else {
            false
        }
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        loop {
            let op = if self.eat('+') {
                BinOp::Add
            } else if self.eat('-') {
                BinOp::Sub
            } else {
                return Ok(lhs);
            };
            lhs = Expr::binary(op, lhs, self.term()?);
        }
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            let op = if self.eat('*') {
                BinOp::Mul
            } else if self.eat('/') {
                BinOp::Div
            } else {
                return Ok(lhs);
            };
            lhs = Expr::binary(op, lhs, self.unary()?);
        }
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        if self.eat('-') {
            Ok(-self.unary()?)
        } else {
            self.power()
        }
    }

    fn power(&mut self) -> Result<Expr, ParseError> {
        let base = self.primary()?;
        if self.eat('^') {
            Ok(base.pow(self.exponent()?))
        } else {
            Ok(base)
        }
    }

    fn exponent(&mut self) -> Result<Expr, ParseError> {
        if self.eat('-') {
            Ok(-self.exponent()?)
        } else {
            self.power()
        }
    }

    fn primary(&mut self) -> Result<Expr, ParseError> {
        self.skip_ws();
        match self.peek() {
            Some(c) if c.is_ascii_digit() || c == '.' => self.number(),
            Some(c) if c.is_alphabetic() || c == '_' => {
                let name = self.ident();
                match Func::from_name(&name) {
                    Some(func) => {
                        if !self.eat('(') {
                            return Err(self.error(&format!("`(` after `{name}`")));
                        }
                        let arg = self.expr()?;
                        if !self.eat(')') {
                            return Err(self.error("`)`"));
                        }
                        Ok(Expr::unary(func, arg))
                    }
                    None => Ok(Expr::Var(name)),
                }
            }
            Some('(') => {
                self.pos += 1;
                let inner = self.expr()?;
                if !self.eat(')') {
                    return Err(self.error("`)`"));
                }
                Ok(inner)
            }
            _ => Err(self.error("number, variable, function or `(`")),
        }
    }

    fn ident(&mut self) -> String {
        let start = self.pos;
        let len = self
            .rest()
            .char_indices()
            .find(|&(_, c)| !(c.is_alphanumeric() || c == '_'))
            .map_or(self.rest().len(), |(i, _)| i);
        self.pos += len;
        self.src[start..self.pos].to_string()
    }

    fn number(&mut self) -> Result<Expr, ParseError> {
        let start = self.pos;
        let bytes = self.src.as_bytes();
        let mut end = self.pos;
        let digits = |mut i: usize| {
            while i < bytes.len() && bytes[i].is_ascii_digit() {
                i += 1;
            }
            i
        };
        end = digits(end);
        if end < bytes.len() && bytes[end] == b'.' {
            end = digits(end + 1);
        }
        if end < bytes.len() && (bytes[end] == b'e' || bytes[end] == b'E') {
            let mut exp = end + 1;
            if exp < bytes.len() && (bytes[exp] == b'+' || bytes[exp] == b'-') {
                exp += 1;
            }
            let exp_end = digits(exp);
            if exp_end > exp {
                end = exp_end;
            }
        }
        let text = &self.src[start..end];
        match text.parse::<f64>() {
            Ok(value) if value.is_finite() => {
                self.pos = end;
                Ok(Expr::Const(value))
            }
            _ => Err(ParseError {
                offset: start,
                expected: "number".into(),
                found: format!("`{text}`"),
            }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(name: &str) -> Expr {
        Expr::var(name)
    }

    fn c(value: f64) -> Expr {
        Expr::Const(value)
    }

    #[test]
    fn precedence_and_associativity() {
        assert_eq!(
            parse("x1^2 + sin(t)").unwrap(),
            v("x1").pow(c(2.0)) + v("t").sin()
        );
        assert_eq!(parse("0").unwrap(), c(0.0));
        assert_eq!(parse("x1 - x2 - t").unwrap(), (v("x1") - v("x2")) - v("t"));
        assert_eq!(parse("x1 / x2 / t").unwrap(), (v("x1") / v("x2")) / v("t"));
        assert_eq!(
            parse("x1 ^ x2 ^ t").unwrap(),
            v("x1").pow(v("x2").pow(v("t")))
        );
        assert_eq!(parse("-x1^2").unwrap(), -(v("x1").pow(c(2.0))));
        assert_eq!(parse("2*-x1").unwrap(), c(2.0) * -v("x1"));
        assert_eq!(parse("x1^-2").unwrap(), v("x1").pow(-c(2.0)));
        assert_eq!(
            parse("(x1 + x2) * t").unwrap(),
            (v("x1") + v("x2")) * v("t")
        );
        assert_eq!(parse("neg(t)").unwrap(), -v("t"));
    }

    #[test]
    fn numbers() {
        assert_eq!(parse("1e-6").unwrap(), c(1e-6));
        assert_eq!(parse(".5").unwrap(), c(0.5));
        assert_eq!(parse("2.5E+3").unwrap(), c(2500.0));
        // `e` without digits is not an exponent; `2e` leaves `e` unparsed.
        assert!(parse("2e").is_err());
    }

    #[test]
    fn whitespace_is_insignificant() {
        assert_eq!(parse(" x1 *\tx2\n").unwrap(), parse("x1*x2").unwrap());
    }

    #[test]
    fn errors_carry_offset_and_expectation() {
        let err = parse("").unwrap_err();
        assert_eq!(err.offset, 0);
        assert_eq!(err.found, "end of input");

        let err = parse("x1 + * 2").unwrap_err();
        assert_eq!(err.offset, 5);
        assert!(err.expected.contains("number"));

        let err = parse("sin x1").unwrap_err();
        assert_eq!(err.offset, 4);
        assert!(err.expected.contains("`(`"));

        let err = parse("(x1 + 2").unwrap_err();
        assert_eq!(err.offset, 7);
        assert_eq!(err.expected, "`)`");

        let err = parse("x1 x2").unwrap_err();
        assert_eq!(err.offset, 3);
    }

    #[test]
    fn unicode_identifiers() {
        assert_eq!(parse("ξ1^2").unwrap(), v("ξ1").pow(c(2.0)));
    }
}
