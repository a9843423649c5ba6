//! A small text language for qubit states and observables.
//!
//! States are sums of kets with complex coefficients, optionally followed by
//! parameter bindings:
//!
//! ```text
//! state    := sum [ ";" binding { ("," | ";") binding } ]
//! sum      := [sign] term { sign term }
//! term     := { factor ["*" | "/"] } ket
//! ket      := word over {u, d}, one letter per particle (u = ↑, d = ↓)
//! binding  := name "=" expr
//! expr     := standard arithmetic over numbers, `i`, `pi`, bound names,
//!             + - * / ^ and sin cos tan asin acos atan sqrt exp ln abs conj
//! ```
//!
//! A `u`/`d` word that ends a term is the ket; anywhere else it is a name.
//! So `(1+e)ud + d*uu; e=-0.05, d=0.11` has kets `ud` and `uu` and uses `d`
//! as a coefficient.
//!
//! Observables are real combinations and products of single-qubit Paulis:
//!
//! ```text
//! obs      := [sign] oterm { sign oterm }
//! oterm    := ofactor { ["*"] ofactor }
//! ofactor  := number | "I" | pauli particle | "(" obs ")"
//! pauli    := "x" | "y" | "z"
//! particle := "A" | "B" | "C" | ...
//! ```
//!
//! e.g. `zA+zB`, `zA*zB`, `2xA - 0.5 zA*zB + I`. On a single qubit the
//! particle letter may be dropped: `z`, `x + y`.

use std::collections::BTreeMap;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::hilbert::{spin_operator, Axis, HermitianOperator, SpinKind, StateVector, C64};

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Sym(char),
    End,
}

#[derive(Clone, Debug)]
struct Token {
    tok: Tok,
    pos: usize,
}

fn parse_err(pos: usize, msg: impl Into<String>) -> Error {
    Error::Parse { pos, msg: msg.into() }
}

fn tokenize(src: &str) -> Result<Vec<Token>> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || (c == '.' && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit())) {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                i += 1;
            }
            // Exponent only when followed by digits, so `2e` stays number-then-name.
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                let mut j = i + 1;
                if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                    j += 1;
                }
                if j < chars.len() && chars[j].is_ascii_digit() {
                    i = j;
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let text: String = chars[start..i].iter().collect();
            let v: f64 = text.parse().map_err(|_| parse_err(start, format!("bad number `{text}`")))?;
            out.push(Token { tok: Tok::Num(v), pos: start });
        } else if c.is_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            out.push(Token { tok: Tok::Ident(chars[start..i].iter().collect()), pos: start });
        } else if "+-*/^(),;=".contains(c) {
            out.push(Token { tok: Tok::Sym(c), pos: i });
            i += 1;
        } else {
            return Err(parse_err(i, format!("unexpected character `{c}`")));
        }
    }
    out.push(Token { tok: Tok::End, pos: chars.len() });
    Ok(out)
}

#[derive(Clone, Debug)]
enum Expr {
    Const(C64),
    Name(String, usize),
    Neg(Box<Expr>),
    Bin(char, Box<Expr>, Box<Expr>),
    Call(String, Box<Expr>),
}

const FUNCTIONS: [&str; 12] = ["sin", "cos", "tan", "asin", "acos", "atan", "sqrt", "exp", "ln", "abs", "conj", "re"];

impl Expr {
    fn eval(&self, env: &BTreeMap<String, C64>) -> Result<C64> {
        Ok(match self {
            Expr::Const(c) => *c,
            Expr::Name(n, pos) => match n.as_str() {
                "i" => C64::new(0.0, 1.0),
                "pi" => C64::new(std::f64::consts::PI, 0.0),
                _ => *env.get(n).ok_or_else(|| parse_err(*pos, format!("unbound name `{n}`")))?,
            },
            Expr::Neg(e) => -e.eval(env)?,
            Expr::Bin(op, a, b) => {
                let (x, y) = (a.eval(env)?, b.eval(env)?);
                match op {
                    '+' => x + y,
                    '-' => x - y,
                    '*' => x * y,
                    '/' => x / y,
                    '^' => {
                        if y.im == 0.0 && y.re.fract() == 0.0 && y.re.abs() < 64.0 {
                            x.powi(y.re as i32)
                        } else {
                            x.powc(y)
                        }
                    }
                    _ => unreachable!(),
                }
            }
            Expr::Call(f, a) => {
                let x = a.eval(env)?;
                match f.as_str() {
                    "sin" => x.sin(),
                    "cos" => x.cos(),
                    "tan" => x.tan(),
                    "asin" => x.asin(),
                    "acos" => x.acos(),
                    "atan" => x.atan(),
                    "sqrt" => x.sqrt(),
                    "exp" => x.exp(),
                    "ln" => x.ln(),
                    "abs" => C64::new(x.norm(), 0.0),
                    "conj" => x.conj(),
                    "re" => C64::new(x.re, 0.0),
                    _ => unreachable!(),
                }
            }
        })
    }
}

fn is_ket_word(s: &str) -> bool {
    !s.is_empty() && s.chars().all(|c| c == 'u' || c == 'd')
}

struct Parser {
    toks: Vec<Token>,
    at: usize,
}

impl Parser {
    fn new(src: &str) -> Result<Self> {
        Ok(Parser { toks: tokenize(src)?, at: 0 })
    }

    fn peek(&self) -> &Tok {
        &self.toks[self.at].tok
    }

    fn peek_at(&self, k: usize) -> &Tok {
        &self.toks[(self.at + k).min(self.toks.len() - 1)].tok
    }

    fn pos(&self) -> usize {
        self.toks[self.at].pos
    }

    fn bump(&mut self) -> Token {
        let t = self.toks[self.at].clone();
        if self.at + 1 < self.toks.len() {
            self.at += 1;
        }
        t
    }

    fn eat(&mut self, c: char) -> bool {
        if *self.peek() == Tok::Sym(c) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, c: char) -> Result<()> {
        if self.eat(c) {
            Ok(())
        } else {
            Err(parse_err(self.pos(), format!("expected `{c}`")))
        }
    }

    fn starts_factor(&self) -> bool {
        matches!(self.peek(), Tok::Num(_) | Tok::Ident(_) | Tok::Sym('('))
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.product()?;
        loop {
            let op = match self.peek() {
                Tok::Sym(c @ ('+' | '-')) => *c,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.product()?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn product(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Tok::Sym(c @ ('*' | '/')) => {
                    let c = *c;
                    self.bump();
                    c
                }
                _ if self.starts_factor() => '*',
                _ => return Ok(lhs),
            };
            let rhs = self.unary()?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn unary(&mut self) -> Result<Expr> {
        if self.eat('-') {
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        if self.eat('+') {
            return self.unary();
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr> {
        let base = self.atom()?;
        if self.eat('^') {
            let exp = self.unary()?;
            return Ok(Expr::Bin('^', Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr> {
        let t = self.bump();
        match t.tok {
            Tok::Num(v) => Ok(Expr::Const(C64::new(v, 0.0))),
            Tok::Ident(name) => {
                if FUNCTIONS.contains(&name.as_str()) && *self.peek() == Tok::Sym('(') {
                    self.bump();
                    let arg = self.expr()?;
                    self.expect(')')?;
                    Ok(Expr::Call(name, Box::new(arg)))
                } else {
                    Ok(Expr::Name(name, t.pos))
                }
            }
            Tok::Sym('(') => {
                let e = self.expr()?;
                self.expect(')')?;
                Ok(e)
            }
            Tok::End => Err(parse_err(t.pos, "unexpected end of input")),
            Tok::Sym(c) => Err(parse_err(t.pos, format!("unexpected `{c}`"))),
        }
    }

    /// True when the next token is a ket word that closes the current term.
    fn at_ket(&self) -> bool {
        match self.peek() {
            Tok::Ident(w) if is_ket_word(w) => {
                matches!(self.peek_at(1), Tok::Sym('+' | '-' | ';') | Tok::End)
            }
            _ => false,
        }
    }

    fn state_term(&mut self, negate: bool) -> Result<(Expr, String, usize)> {
        let mut coeff: Option<Expr> = None;
        loop {
            if self.at_ket() {
                let t = self.bump();
                let Tok::Ident(ket) = t.tok else { unreachable!() };
                let mut c = coeff.unwrap_or(Expr::Const(C64::new(1.0, 0.0)));
                if negate {
                    c = Expr::Neg(Box::new(c));
                }
                return Ok((c, ket, t.pos));
            }
            if !self.starts_factor() {
                return Err(parse_err(self.pos(), "expected a ket such as `ud`"));
            }
            let f = self.power()?;
            coeff = Some(match coeff {
                None => f,
                Some(c) => Expr::Bin('*', Box::new(c), Box::new(f)),
            });
            if self.eat('/') {
                let d = self.power()?;
                coeff = Some(Expr::Bin('/', Box::new(coeff.unwrap()), Box::new(d)));
            } else {
                self.eat('*');
            }
        }
    }
}

/// A parsed state with the parameter values it was evaluated at.
#[derive(Clone, Debug)]
pub struct ParsedState {
    pub state: StateVector,
    pub params: BTreeMap<String, C64>,
}

/// Parses and evaluates a qubit state. `extra` bindings are applied before
/// the inline ones, which take precedence.
pub fn parse_state_with(src: &str, extra: &BTreeMap<String, C64>) -> Result<ParsedState> {
    let mut p = Parser::new(src)?;
    let mut terms = Vec::new();
    let mut first = true;
    loop {
        let mut negate = false;
        if first {
            negate = p.eat('-');
            if !negate {
                p.eat('+');
            }
        } else if p.eat('-') {
            negate = true;
        } else if !p.eat('+') {
            break;
        }
        first = false;
        terms.push(p.state_term(negate)?);
    }
    let mut env = extra.clone();
    if p.eat(';') {
        loop {
            let pos = p.pos();
            let name = match p.bump().tok {
                Tok::Ident(n) => n,
                _ => return Err(parse_err(pos, "expected a parameter name")),
            };
            if name == "i" || name == "pi" || FUNCTIONS.contains(&name.as_str()) {
                return Err(parse_err(pos, format!("`{name}` is reserved")));
            }
            p.expect('=')?;
            let v = p.expr()?.eval(&env)?;
            env.insert(name, v);
            if !(p.eat(',') || p.eat(';')) {
                break;
            }
        }
    }
    if *p.peek() != Tok::End {
        return Err(parse_err(p.pos(), "unexpected trailing input"));
    }
    let n = terms[0].1.len();
    let dims = vec![2; n];
    let mut amps = vec![C64::new(0.0, 0.0); 1 << n];
    for (coeff, ket, pos) in &terms {
        if ket.len() != n {
            return Err(parse_err(*pos, format!("ket `{ket}` has {} particles, expected {n}", ket.len())));
        }
        let idx = ket.chars().fold(0usize, |acc, c| (acc << 1) | usize::from(c == 'd'));
        amps[idx] += coeff.eval(&env)?;
    }
    if amps.iter().any(|a| !a.re.is_finite() || !a.im.is_finite()) {
        return Err(parse_err(0, "state amplitudes are not finite"));
    }
    Ok(ParsedState { state: StateVector::new(dims, amps)?, params: env })
}

pub fn parse_state(src: &str) -> Result<ParsedState> {
    parse_state_with(src, &BTreeMap::new())
}

struct ObsParser<'a> {
    p: Parser,
    dims: &'a [usize],
}

impl ObsParser<'_> {
    fn n(&self) -> usize {
        self.dims.iter().product()
    }

    fn sum(&mut self) -> Result<DMatrix<C64>> {
        let mut acc = DMatrix::zeros(self.n(), self.n());
        let mut sign = if self.p.eat('-') {
            -1.0
        } else {
            self.p.eat('+');
            1.0
        };
        loop {
            acc += self.term()? * C64::new(sign, 0.0);
            sign = if self.p.eat('+') {
                1.0
            } else if self.p.eat('-') {
                -1.0
            } else {
                return Ok(acc);
            };
        }
    }

    fn term(&mut self) -> Result<DMatrix<C64>> {
        let mut acc = self.factor()?;
        loop {
            if self.p.eat('*') || self.p.starts_factor() {
                acc *= self.factor()?;
            } else {
                return Ok(acc);
            }
        }
    }

    fn factor(&mut self) -> Result<DMatrix<C64>> {
        let t = self.p.bump();
        let id = || DMatrix::<C64>::identity(self.n(), self.n());
        match t.tok {
            Tok::Num(v) => Ok(id() * C64::new(v, 0.0)),
            Tok::Sym('(') => {
                let m = self.sum()?;
                self.p.expect(')')?;
                Ok(m)
            }
            Tok::Ident(w) if w == "I" => Ok(id()),
            Tok::Ident(w) => {
                let mut cs = w.chars();
                let one = self.dims.len() == 1;
                let (Some(axis), Some(part), None) = (cs.next(), cs.next().or(one.then_some('A')), cs.next()) else {
                    return Err(parse_err(t.pos, format!("unknown operator `{w}`")));
                };
                let axis: Axis = axis
                    .to_string()
                    .parse()
                    .map_err(|_| parse_err(t.pos, format!("unknown Pauli axis in `{w}`")))?;
                if !part.is_ascii_uppercase() {
                    return Err(parse_err(t.pos, format!("particle label in `{w}` must be A, B, …")));
                }
                let k = (part as u8 - b'A') as usize;
                if k >= self.dims.len() {
                    return Err(parse_err(
                        t.pos,
                        format!("`{w}` addresses particle {part} but the state has {} particle(s)", self.dims.len()),
                    ));
                }
                Ok(spin_operator(SpinKind::Pauli, axis).embed(self.dims, k)?.matrix().clone())
            }
            Tok::End => Err(parse_err(t.pos, "unexpected end of input")),
            Tok::Sym(c) => Err(parse_err(t.pos, format!("unexpected `{c}`"))),
        }
    }
}

/// Parses an observable on qubits with the given per-particle dimensions.
pub fn parse_observable(src: &str, dims: &[usize]) -> Result<HermitianOperator> {
    if dims.iter().any(|&d| d != 2) {
        return Err(Error::invalid("observables in this language act on qubits only"));
    }
    let mut op = ObsParser { p: Parser::new(src)?, dims };
    let m = op.sum()?;
    if *op.p.peek() != Tok::End {
        return Err(parse_err(op.p.pos(), "unexpected trailing input"));
    }
    HermitianOperator::new(dims.to_vec(), m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tsvf::{weak_value, TwoStateVector};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn parses_the_two_qubit_family() {
        let s = parse_state("(1+e)ud+(-1+e)du+d*uu; e=-0.05, d=0.11").unwrap();
        let a = s.state.amplitudes();
        assert_eq!(s.state.dims(), &[2, 2]);
        assert_abs_diff_eq!((a[0] - c(0.11, 0.0)).norm(), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!((a[1] - c(0.95, 0.0)).norm(), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!((a[2] - c(-1.05, 0.0)).norm(), 0.0, epsilon = 1e-15);
        assert_eq!(a[3], c(0.0, 0.0));
        assert_abs_diff_eq!(s.params["d"].re, 0.11);
    }

    #[test]
    fn weak_values_from_text() {
        let pre = parse_state("(1+e)ud+(-1+e)du+d*uu; e=-0.05, d=0.11").unwrap().state;
        let post = parse_state("ud+du+uu+dd").unwrap().state;
        let tsv = TwoStateVector::new(pre, post).unwrap();
        let sum = parse_observable("zA+zB", &[2, 2]).unwrap();
        let prod = parse_observable("zA*zB", &[2, 2]).unwrap();
        assert_abs_diff_eq!((weak_value(&tsv, &sum).unwrap() - c(22.0, 0.0)).norm(), 0.0, epsilon = 1e-11);
        assert_abs_diff_eq!((weak_value(&tsv, &prod).unwrap() - c(21.0, 0.0)).norm(), 0.0, epsilon = 1e-11);
        let up = parse_state("u").unwrap().state;
        let tsv = TwoStateVector::new(up.clone(), up).unwrap();
        let z = parse_observable("zA", &[2]).unwrap();
        assert_eq!(parse_observable("z", &[2]).unwrap().matrix(), z.matrix());
        assert_abs_diff_eq!((weak_value(&tsv, &z).unwrap() - c(1.0, 0.0)).norm(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn complex_coefficients_and_functions() {
        let s = parse_state("sin(t)u + i*cos(t)d; t=pi/6").unwrap();
        let a = s.state.amplitudes();
        assert_abs_diff_eq!(a[0].re, 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(a[1].im, 3f64.sqrt() / 2.0, epsilon = 1e-15);
        let s = parse_state("-2ud + 3e-1 du").unwrap();
        assert_eq!(s.state.amplitudes()[1], c(-2.0, 0.0));
        assert_abs_diff_eq!(s.state.amplitudes()[2].re, 0.3, epsilon = 1e-15);
        let s = parse_state("(3+i)t uu - i t/2 ud; t=2").unwrap();
        assert_eq!(s.state.amplitudes()[0], c(6.0, 2.0));
        assert_eq!(s.state.amplitudes()[1], c(0.0, -1.0));
        let s = parse_state("uu + x^2 dd; x = 3").unwrap();
        assert_eq!(s.state.amplitudes()[3], c(9.0, 0.0));
    }

    #[test]
    fn repeated_kets_accumulate() {
        let s = parse_state("ud + 2ud - du").unwrap();
        assert_eq!(s.state.amplitudes()[1], c(3.0, 0.0));
    }

    #[test]
    fn state_errors_carry_positions() {
        let e = parse_state("ud + u").unwrap_err();
        assert!(matches!(e, Error::Parse { pos: 5, .. }), "{e:?}");
        let e = parse_state("(1+e)ud").unwrap_err();
        assert!(matches!(e, Error::Parse { pos: 3, .. }), "{e:?}");
        assert!(matches!(parse_state("2*(ud"), Err(Error::Parse { .. })));
        assert!(matches!(parse_state("ud + $"), Err(Error::Parse { pos: 5, .. })));
        assert!(matches!(parse_state("ud; i=2"), Err(Error::Parse { .. })));
        assert!(matches!(parse_state("3"), Err(Error::Parse { .. })));
    }

    #[test]
    fn observable_forms() {
        let dims = [2, 2];
        let zz = parse_observable("zA*zB", &dims).unwrap();
        let zz2 = parse_observable("zA zB", &dims).unwrap();
        assert_eq!(zz.matrix(), zz2.matrix());
        let mix = parse_observable("2xA - 0.5 zA*zB + I", &dims).unwrap();
        let want = crate::hilbert::sigma_x().embed(&dims, 0).unwrap().scale(2.0).sub(&zz.scale(0.5)).unwrap();
        let want = want.add(&HermitianOperator::identity(dims.to_vec()).unwrap()).unwrap();
        assert_abs_diff_eq!((mix.matrix() - want.matrix()).norm(), 0.0, epsilon = 1e-15);
        let grouped = parse_observable("(zA+zB)*(zA+zB)", &dims).unwrap();
        assert_abs_diff_eq!(grouped.matrix()[(0, 0)].re, 4.0);
        assert!(matches!(parse_observable("zA*xA", &dims), Err(Error::NotHermitian { .. })));
        assert!(matches!(parse_observable("zC", &dims), Err(Error::Parse { pos: 0, .. })));
        assert!(matches!(parse_observable("wA", &dims), Err(Error::Parse { .. })));
        assert!(matches!(parse_observable("zA +", &dims), Err(Error::Parse { pos: 4, .. })));
    }

    proptest! {
        #[test]
        fn real_coefficients_round_trip(a in -5.0..5.0f64, b in -5.0..5.0f64) {
            let src = format!("({a:e})ud + ({b:e})du");
            let s = parse_state(&src).unwrap();
            prop_assert_eq!(s.state.amplitudes()[1].re, a);
            prop_assert_eq!(s.state.amplitudes()[2].re, b);
        }
    }
}
