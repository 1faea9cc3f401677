//! A small expression language for modulations, matrix fields and forcing terms.
//!
//! Grammar: numbers, `pi`, the variables `x`, `y`, `t`, binary `+ - * /`, unary minus,
//! parentheses and the functions `sin`, `cos`, `exp`, `sqrt`.

#[allow(unused_imports)]
use num_traits::Float;
use alloc::boxed::Box;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Var {
    X,
    Y,
    T,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Const(f64),
    Var(Var),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Sin(Box<Expr>),
    Cos(Box<Expr>),
    Exp(Box<Expr>),
    Sqrt(Box<Expr>),
}

impl Expr {
    pub fn constant(c: f64) -> Expr {
        Expr::Const(c)
    }

    pub fn parse(src: &str) -> Result<Expr> {
        let tokens = tokenize(src)?;
        let mut p = Parser { tokens, pos: 0 };
        let e = p.sum()?;
        if p.pos != p.tokens.len() {
            return Err(Error::Input(format!(
                "unexpected trailing input in expression `{src}`"
            )));
        }
        Ok(e.simplify())
    }

    pub fn eval(&self, x: f64, y: f64, t: f64) -> f64 {
        match self {
            Expr::Const(c) => *c,
            Expr::Var(Var::X) => x,
            Expr::Var(Var::Y) => y,
            Expr::Var(Var::T) => t,
            Expr::Neg(a) => -a.eval(x, y, t),
            Expr::Add(a, b) => a.eval(x, y, t) + b.eval(x, y, t),
            Expr::Sub(a, b) => a.eval(x, y, t) - b.eval(x, y, t),
            Expr::Mul(a, b) => a.eval(x, y, t) * b.eval(x, y, t),
            Expr::Div(a, b) => a.eval(x, y, t) / b.eval(x, y, t),
            Expr::Sin(a) => a.eval(x, y, t).sin(),
            Expr::Cos(a) => a.eval(x, y, t).cos(),
            Expr::Exp(a) => a.eval(x, y, t).exp(),
            Expr::Sqrt(a) => a.eval(x, y, t).sqrt(),
        }
    }

    /// Returns the value if the expression does not depend on any variable.
    pub fn as_const(&self) -> Option<f64> {
        match self {
            Expr::Const(c) => Some(*c),
            _ => None,
        }
    }

    pub fn depends_on(&self, v: Var) -> bool {
        match self {
            Expr::Const(_) => false,
            Expr::Var(w) => *w == v,
            Expr::Neg(a) | Expr::Sin(a) | Expr::Cos(a) | Expr::Exp(a) | Expr::Sqrt(a) => {
                a.depends_on(v)
            }
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) => {
                a.depends_on(v) || b.depends_on(v)
            }
        }
    }

    /// Symbolic partial derivative, simplified.
    pub fn diff(&self, v: Var) -> Expr {
        use Expr::*;
        let d = |e: &Expr| Box::new(e.diff(v));
        let b = |e: &Expr| Box::new(e.clone());
        let out = match self {
            Const(_) => Const(0.0),
            Var(w) => Const(if *w == v { 1.0 } else { 0.0 }),
            Neg(a) => Neg(d(a)),
            Add(p, q) => Add(d(p), d(q)),
            Sub(p, q) => Sub(d(p), d(q)),
            Mul(p, q) => Add(Box::new(Mul(d(p), b(q))), Box::new(Mul(b(p), d(q)))),
            Div(p, q) => Div(
                Box::new(Sub(Box::new(Mul(d(p), b(q))), Box::new(Mul(b(p), d(q))))),
                Box::new(Mul(b(q), b(q))),
            ),
            Sin(a) => Mul(Box::new(Cos(b(a))), d(a)),
            Cos(a) => Neg(Box::new(Mul(Box::new(Sin(b(a))), d(a)))),
            Exp(a) => Mul(Box::new(Exp(b(a))), d(a)),
            Sqrt(a) => Div(d(a), Box::new(Mul(Box::new(Const(2.0)), Box::new(Sqrt(b(a)))))),
        };
        out.simplify()
    }

    /// Constant folding and removal of neutral elements.
    pub fn simplify(self) -> Expr {
        use Expr::*;
        match self {
            Const(_) | Var(_) => self,
            Neg(a) => match a.simplify() {
                Const(c) => Const(-c),
                Neg(inner) => *inner,
                s => Neg(Box::new(s)),
            },
            Add(p, q) => match (p.simplify(), q.simplify()) {
                (Const(a), Const(b)) => Const(a + b),
                (Const(z), e) | (e, Const(z)) if z == 0.0 => e,
                (a, b) => Add(Box::new(a), Box::new(b)),
            },
            Sub(p, q) => match (p.simplify(), q.simplify()) {
                (Const(a), Const(b)) => Const(a - b),
                (e, Const(z)) if z == 0.0 => e,
                (Const(z), e) if z == 0.0 => Neg(Box::new(e)).simplify(),
                (a, b) => Sub(Box::new(a), Box::new(b)),
            },
            Mul(p, q) => match (p.simplify(), q.simplify()) {
                (Const(a), Const(b)) => Const(a * b),
                (Const(z), _) | (_, Const(z)) if z == 0.0 => Const(0.0),
                (Const(o), e) | (e, Const(o)) if o == 1.0 => e,
                (a, b) => Mul(Box::new(a), Box::new(b)),
            },
            Div(p, q) => match (p.simplify(), q.simplify()) {
                (Const(a), Const(b)) => Const(a / b),
                (Const(z), _) if z == 0.0 => Const(0.0),
                (e, Const(o)) if o == 1.0 => e,
                (a, b) => Div(Box::new(a), Box::new(b)),
            },
            Sin(a) => match a.simplify() {
                Const(c) => Const(c.sin()),
                s => Sin(Box::new(s)),
            },
            Cos(a) => match a.simplify() {
                Const(c) => Const(c.cos()),
                s => Cos(Box::new(s)),
            },
            Exp(a) => match a.simplify() {
                Const(c) => Const(c.exp()),
                s => Exp(Box::new(s)),
            },
            Sqrt(a) => match a.simplify() {
                Const(c) => Const(c.sqrt()),
                s => Sqrt(Box::new(s)),
            },
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Const(c) => write!(f, "{c:?}"),
            Expr::Var(Var::X) => f.write_str("x"),
            Expr::Var(Var::Y) => f.write_str("y"),
            Expr::Var(Var::T) => f.write_str("t"),
            Expr::Neg(a) => write!(f, "(-{a})"),
            Expr::Add(a, b) => write!(f, "({a} + {b})"),
            Expr::Sub(a, b) => write!(f, "({a} - {b})"),
            Expr::Mul(a, b) => write!(f, "({a} * {b})"),
            Expr::Div(a, b) => write!(f, "({a} / {b})"),
            Expr::Sin(a) => write!(f, "sin({a})"),
            Expr::Cos(a) => write!(f, "cos({a})"),
            Expr::Exp(a) => write!(f, "exp({a})"),
            Expr::Sqrt(a) => write!(f, "sqrt({a})"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Token {
    Num(f64),
    Ident(String),
    Op(char),
}

fn tokenize(src: &str) -> Result<Vec<Token>> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || c == '.' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                i += 1;
            }
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                let mut k = i + 1;
                if k < chars.len() && (chars[k] == '+' || chars[k] == '-') {
                    k += 1;
                }
                if k < chars.len() && chars[k].is_ascii_digit() {
                    i = k;
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let s: String = chars[start..i].iter().collect();
            let v = s
                .parse::<f64>()
                .map_err(|_| Error::Input(format!("bad number `{s}` in expression")))?;
            out.push(Token::Num(v));
        } else if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            out.push(Token::Ident(chars[start..i].iter().collect()));
        } else if "+-*/()".contains(c) {
            out.push(Token::Op(c));
            i += 1;
        } else {
            return Err(Error::Input(format!(
                "unexpected character `{c}` in expression `{src}`"
            )));
        }
    }
    Ok(out)
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn eat_op(&mut self, op: char) -> bool {
        if self.peek() == Some(&Token::Op(op)) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn sum(&mut self) -> Result<Expr> {
        let mut lhs = self.product()?;
        loop {
            if self.eat_op('+') {
                lhs = Expr::Add(Box::new(lhs), Box::new(self.product()?));
            } else if self.eat_op('-') {
                lhs = Expr::Sub(Box::new(lhs), Box::new(self.product()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn product(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        loop {
            if self.eat_op('*') {
                lhs = Expr::Mul(Box::new(lhs), Box::new(self.unary()?));
            } else if self.eat_op('/') {
                lhs = Expr::Div(Box::new(lhs), Box::new(self.unary()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn unary(&mut self) -> Result<Expr> {
        if self.eat_op('-') {
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        if self.eat_op('+') {
            return self.unary();
        }
        self.atom()
    }

    fn atom(&mut self) -> Result<Expr> {
        let tok = self
            .peek()
            .cloned()
            .ok_or_else(|| Error::Input("expression ended unexpectedly".into()))?;
        self.pos += 1;
        match tok {
            Token::Num(v) => Ok(Expr::Const(v)),
            Token::Op('(') => {
                let e = self.sum()?;
                if !self.eat_op(')') {
                    return Err(Error::Input("missing `)` in expression".into()));
                }
                Ok(e)
            }
            Token::Ident(name) => match name.as_str() {
                "x" => Ok(Expr::Var(Var::X)),
                "y" => Ok(Expr::Var(Var::Y)),
                "t" => Ok(Expr::Var(Var::T)),
                "pi" => Ok(Expr::Const(core::f64::consts::PI)),
                "sin" | "cos" | "exp" | "sqrt" => {
                    if !self.eat_op('(') {
                        return Err(Error::Input(format!("`{name}` must be followed by `(`")));
                    }
                    let arg = Box::new(self.sum()?);
                    if !self.eat_op(')') {
                        return Err(Error::Input("missing `)` in expression".into()));
                    }
                    Ok(match name.as_str() {
                        "sin" => Expr::Sin(arg),
                        "cos" => Expr::Cos(arg),
                        "exp" => Expr::Exp(arg),
                        _ => Expr::Sqrt(arg),
                    })
                }
                other => Err(Error::Input(format!("unknown identifier `{other}`"))),
            },
            Token::Op(c) => Err(Error::Input(format!("unexpected `{c}` in expression"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_precedence_and_unary_minus() {
        let e = Expr::parse("1 + 2*x - -y/4").unwrap();
        assert_eq!(e.eval(3.0, 2.0, 0.0), 1.0 + 6.0 + 0.5);
    }

    #[test]
    fn constants_fold() {
        assert_eq!(Expr::parse("2*(3+1)").unwrap(), Expr::Const(8.0));
        assert_eq!(Expr::parse("1.5e-1").unwrap(), Expr::Const(0.15));
    }

    #[test]
    fn rejects_bad_input() {
        assert!(Expr::parse("sin x").is_err());
        assert!(Expr::parse("1 +").is_err());
        assert!(Expr::parse("z").is_err());
        assert!(Expr::parse("(1").is_err());
        assert!(Expr::parse("1 $ 2").is_err());
    }

    #[test]
    fn derivative_matches_finite_differences() {
        let e = Expr::parse("exp(0.3*x)*sin(2*y) + x*x/(1+y*y) + cos(x*y) - t + sqrt(2+x)").unwrap();
        let (x, y) = (0.37, -0.81);
        let h = 1e-6;
        let dx = e.diff(Var::X).eval(x, y, 0.0);
        let dy = e.diff(Var::Y).eval(x, y, 0.0);
        let fx = (e.eval(x + h, y, 0.0) - e.eval(x - h, y, 0.0)) / (2.0 * h);
        let fy = (e.eval(x, y + h, 0.0) - e.eval(x, y - h, 0.0)) / (2.0 * h);
        assert!((dx - fx).abs() < 1e-7);
        assert!((dy - fy).abs() < 1e-7);
        assert_eq!(e.diff(Var::T), Expr::Const(-1.0));
    }

    #[test]
    fn display_roundtrips() {
        let e = Expr::parse("1 + 0.5*sin(x) - exp(-y)").unwrap();
        let back = Expr::parse(&alloc::format!("{e}")).unwrap();
        assert_eq!(e.eval(0.2, 0.4, 0.0), back.eval(0.2, 0.4, 0.0));
    }
}
