//! Real scalar functions of time with exact derivatives and antiderivatives.
//!
//! Every function is kept in the canonical form `Σ cₖ t^pₖ · sₖ(ωₖ t + δₖ)`
//! where `sₖ` is `1`, `sin` or `cos`. That family is closed under `d/dt` and,
//! up to [`MAX_POWER`], under `∫₀ᵗ`. Construction by multiplication is limited
//! to one level of products of non-constant factors.
//!
//! Textual syntax (used by config files):
//!
//! ```text
//! expr  := term (('+' | '-') term)*
//! term  := unary (('*' | '/') unary)*        division by constants only
//! unary := '-' unary | power
//! power := atom ('^' integer)?
//! atom  := number | 't' | 'pi' | ('sin' | 'cos') '(' affine ')' | '(' expr ')'
//! ```
//!
//! e.g. `"0.5"`, `"2*t"`, `"0.3*sin(2*t + 0.1)"`, `"t*cos(t)"`.

use std::fmt;

use crate::error::{Error, Result};

/// Highest power of `t` kept in the family.
pub const MAX_POWER: u32 = 6;

#[derive(Clone, Copy, Debug, PartialEq)]
enum Osc {
    One,
    Sin { w: f64, d: f64 },
    Cos { w: f64, d: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct Term {
    coef: f64,
    power: u32,
    osc: Osc,
}

impl Term {
    fn eval(&self, t: f64) -> f64 {
        let s = match self.osc {
            Osc::One => 1.0,
            Osc::Sin { w, d } => (w * t + d).sin(),
            Osc::Cos { w, d } => (w * t + d).cos(),
        };
        self.coef * t.powi(self.power as i32) * s
    }
}

/// Makes `ω > 0` and folds `ω = 0` oscillators into constants.
fn normalized(coef: f64, power: u32, osc: Osc) -> Term {
    match osc {
        Osc::Sin { w, d } if w == 0.0 => Term { coef: coef * d.sin(), power, osc: Osc::One },
        Osc::Cos { w, d } if w == 0.0 => Term { coef: coef * d.cos(), power, osc: Osc::One },
        Osc::Sin { w, d } if w < 0.0 => Term { coef: -coef, power, osc: Osc::Sin { w: -w, d: -d } },
        Osc::Cos { w, d } if w < 0.0 => Term { coef, power, osc: Osc::Cos { w: -w, d: -d } },
        _ => Term { coef, power, osc },
    }
}

/// A member of the closed family of time functions.
#[derive(Clone, Debug, PartialEq)]
pub struct TimeFunction {
    terms: Vec<Term>,
    /// Product nesting used to build this value (0 or 1).
    depth: u8,
    label: Option<String>,
}

impl TimeFunction {
    fn from_terms(terms: Vec<Term>, depth: u8) -> Self {
        let mut out: Vec<Term> = Vec::new();
        for t in terms {
            let t = normalized(t.coef, t.power, t.osc);
            if let Some(existing) = out.iter_mut().find(|e| e.power == t.power && e.osc == t.osc) {
                existing.coef += t.coef;
            } else {
                out.push(t);
            }
        }
        out.retain(|t| t.coef != 0.0);
        Self { terms: out, depth, label: None }
    }

    pub fn constant(c: f64) -> Self {
        Self::from_terms(vec![Term { coef: c, power: 0, osc: Osc::One }], 0)
    }

    pub fn zero() -> Self {
        Self::constant(0.0)
    }

    /// `a·t + b`.
    pub fn linear(a: f64, b: f64) -> Self {
        Self::from_terms(
            vec![Term { coef: a, power: 1, osc: Osc::One }, Term { coef: b, power: 0, osc: Osc::One }],
            0,
        )
    }

    /// `amp·sin(ω t + δ)`.
    pub fn sin(amp: f64, omega: f64, phase: f64) -> Self {
        Self::from_terms(vec![Term { coef: amp, power: 0, osc: Osc::Sin { w: omega, d: phase } }], 0)
    }

    /// `amp·cos(ω t + δ)`.
    pub fn cos(amp: f64, omega: f64, phase: f64) -> Self {
        Self::from_terms(vec![Term { coef: amp, power: 0, osc: Osc::Cos { w: omega, d: phase } }], 0)
    }

    pub fn parse(src: &str) -> Result<Self> {
        let mut p = Parser { src, pos: 0 };
        let out = p.expr()?;
        p.skip_ws();
        if p.pos != src.len() {
            return Err(p.err("unexpected trailing input"));
        }
        Ok(out.f.with_label(src.trim()))
    }

    pub fn with_label(mut self, label: &str) -> Self {
        self.label = Some(label.to_string());
        self
    }

    pub fn label(&self) -> String {
        self.label.clone().unwrap_or_else(|| self.to_string())
    }

    pub fn depth(&self) -> u8 {
        self.depth
    }

    pub fn is_constant(&self) -> bool {
        self.terms.iter().all(|t| t.power == 0 && t.osc == Osc::One)
    }

    pub fn eval(&self, t: f64) -> f64 {
        self.terms.iter().map(|term| term.eval(t)).sum()
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut terms = self.terms.clone();
        terms.extend_from_slice(&other.terms);
        Self::from_terms(terms, self.depth.max(other.depth))
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.scale(-1.0))
    }

    pub fn scale(&self, s: f64) -> Self {
        let terms = self.terms.iter().map(|t| Term { coef: t.coef * s, ..*t }).collect();
        Self::from_terms(terms, self.depth)
    }

    /// Product of two members; rejected when it would nest products of
    /// non-constant factors more than one level deep.
    pub fn mul(&self, other: &Self) -> Result<Self> {
        let depth = if self.is_constant() || other.is_constant() {
            self.depth.max(other.depth)
        } else {
            self.depth.max(other.depth) + 1
        };
        if depth > 1 {
            return Err(Error::OutsideFamily(format!(
                "product of ({self}) and ({other}) nests products more than one level deep"
            )));
        }
        let mut terms = Vec::new();
        for a in &self.terms {
            for b in &other.terms {
                terms.extend(term_product(a, b));
            }
        }
        if terms.iter().any(|t| t.power > MAX_POWER) {
            return Err(Error::OutsideFamily(format!("power of t above {MAX_POWER}")));
        }
        Ok(Self::from_terms(terms, depth))
    }

    /// Exact `d/dt`.
    pub fn derivative(&self) -> Self {
        let mut terms = Vec::new();
        for t in &self.terms {
            if t.power > 0 {
                terms.push(Term { coef: t.coef * t.power as f64, power: t.power - 1, osc: t.osc });
            }
            match t.osc {
                Osc::One => {}
                Osc::Sin { w, d } => terms.push(Term { coef: t.coef * w, power: t.power, osc: Osc::Cos { w, d } }),
                Osc::Cos { w, d } => terms.push(Term { coef: -t.coef * w, power: t.power, osc: Osc::Sin { w, d } }),
            }
        }
        Self::from_terms(terms, self.depth)
    }

    /// Exact `∫₀ᵗ f(s) ds`; zero at `t = 0`.
    pub fn antiderivative(&self) -> Result<Self> {
        let mut terms = Vec::new();
        for t in &self.terms {
            integrate_term(t.coef, t.power, t.osc, &mut terms)?;
        }
        let mut g = Self::from_terms(terms, self.depth);
        let g0 = g.eval(0.0);
        if g0 != 0.0 {
            g = g.add(&Self::constant(-g0));
        }
        // removes rounding residue left by the constant shift
        let g0 = g.eval(0.0);
        if g0 != 0.0 {
            if let Some(c) = g.terms.iter_mut().find(|t| t.power == 0 && t.osc == Osc::One) {
                c.coef -= g0;
            }
        }
        Ok(g)
    }
}

fn term_product(a: &Term, b: &Term) -> Vec<Term> {
    let coef = a.coef * b.coef;
    let power = a.power + b.power;
    let t = |coef: f64, osc: Osc| Term { coef, power, osc };
    match (a.osc, b.osc) {
        (Osc::One, o) | (o, Osc::One) => vec![t(coef, o)],
        (Osc::Sin { w: w1, d: d1 }, Osc::Sin { w: w2, d: d2 }) => vec![
            t(0.5 * coef, Osc::Cos { w: w1 - w2, d: d1 - d2 }),
            t(-0.5 * coef, Osc::Cos { w: w1 + w2, d: d1 + d2 }),
        ],
        (Osc::Cos { w: w1, d: d1 }, Osc::Cos { w: w2, d: d2 }) => vec![
            t(0.5 * coef, Osc::Cos { w: w1 - w2, d: d1 - d2 }),
            t(0.5 * coef, Osc::Cos { w: w1 + w2, d: d1 + d2 }),
        ],
        (Osc::Sin { w: w1, d: d1 }, Osc::Cos { w: w2, d: d2 })
        | (Osc::Cos { w: w2, d: d2 }, Osc::Sin { w: w1, d: d1 }) => vec![
            t(0.5 * coef, Osc::Sin { w: w1 + w2, d: d1 + d2 }),
            t(0.5 * coef, Osc::Sin { w: w1 - w2, d: d1 - d2 }),
        ],
    }
}

/// Appends an antiderivative of `coef·t^k·osc` (integration by parts).
fn integrate_term(coef: f64, k: u32, osc: Osc, out: &mut Vec<Term>) -> Result<()> {
    match osc {
        Osc::One => {
            if k + 1 > MAX_POWER {
                return Err(Error::OutsideFamily(format!(
                    "antiderivative of t^{k} exceeds the maximum power {MAX_POWER}"
                )));
            }
            out.push(Term { coef: coef / (k + 1) as f64, power: k + 1, osc: Osc::One });
        }
        // ∫ tᵏ sin = −tᵏ cos/ω + (k/ω) ∫ tᵏ⁻¹ cos
        Osc::Sin { w, d } => {
            out.push(Term { coef: -coef / w, power: k, osc: Osc::Cos { w, d } });
            if k > 0 {
                integrate_term(coef * k as f64 / w, k - 1, Osc::Cos { w, d }, out)?;
            }
        }
        // ∫ tᵏ cos = tᵏ sin/ω − (k/ω) ∫ tᵏ⁻¹ sin
        Osc::Cos { w, d } => {
            out.push(Term { coef: coef / w, power: k, osc: Osc::Sin { w, d } });
            if k > 0 {
                integrate_term(-coef * k as f64 / w, k - 1, Osc::Sin { w, d }, out)?;
            }
        }
    }
    Ok(())
}

impl fmt::Display for TimeFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        for (i, t) in self.terms.iter().enumerate() {
            if i > 0 {
                write!(f, " + ")?;
            }
            write!(f, "{}", t.coef)?;
            match t.power {
                0 => {}
                1 => write!(f, "*t")?,
                p => write!(f, "*t^{p}")?,
            }
            match t.osc {
                Osc::One => {}
                Osc::Sin { w, d } => write!(f, "*sin({w}*t + {d})")?,
                Osc::Cos { w, d } => write!(f, "*cos({w}*t + {d})")?,
            }
        }
        Ok(())
    }
}

impl std::str::FromStr for TimeFunction {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::parse(s)
    }
}

struct Parsed {
    f: TimeFunction,
}

struct Parser<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Parser<'a> {
    fn err(&self, reason: &str) -> Error {
        Error::Parse { input: self.src.to_string(), reason: format!("{reason} at byte {}", self.pos) }
    }

    fn skip_ws(&mut self) {
        while self.src[self.pos..].starts_with(char::is_whitespace) {
            self.pos += self.src[self.pos..].chars().next().map_or(1, char::len_utf8);
        }
    }

    fn peek(&mut self) -> Option<char> {
        self.skip_ws();
        self.src[self.pos..].chars().next()
    }

    fn eat(&mut self, c: char) -> bool {
        if self.peek() == Some(c) {
            self.pos += c.len_utf8();
            true
        } else {
            false
        }
    }

    fn expr(&mut self) -> Result<Parsed> {
        let mut acc = self.term()?;
        loop {
            if self.eat('+') {
                let rhs = self.term()?;
                acc.f = acc.f.add(&rhs.f);
            } else if self.eat('-') {
                let rhs = self.term()?;
                acc.f = acc.f.sub(&rhs.f);
            } else {
                return Ok(acc);
            }
        }
    }

    fn term(&mut self) -> Result<Parsed> {
        let mut acc = self.unary()?;
        loop {
            if self.eat('*') {
                let rhs = self.unary()?;
                acc.f = acc.f.mul(&rhs.f)?;
            } else if self.eat('/') {
                let rhs = self.unary()?;
                if !rhs.f.is_constant() {
                    return Err(Error::OutsideFamily("division by a non-constant function".into()));
                }
                let c = rhs.f.eval(0.0);
                if c == 0.0 {
                    return Err(self.err("division by zero"));
                }
                acc.f = acc.f.scale(1.0 / c);
            } else {
                return Ok(acc);
            }
        }
    }

    fn unary(&mut self) -> Result<Parsed> {
        if self.eat('-') {
            let inner = self.unary()?;
            return Ok(Parsed { f: inner.f.scale(-1.0) });
        }
        if self.eat('+') {
            return self.unary();
        }
        self.power()
    }

    fn power(&mut self) -> Result<Parsed> {
        let base = self.atom()?;
        if !self.eat('^') {
            return Ok(base);
        }
        self.skip_ws();
        let start = self.pos;
        while self.src[self.pos..].starts_with(|c: char| c.is_ascii_digit()) {
            self.pos += 1;
        }
        let k: u32 = self.src[start..self.pos].parse().map_err(|_| self.err("expected integer exponent"))?;
        if base.f.is_constant() {
            return Ok(Parsed { f: TimeFunction::constant(base.f.eval(0.0).powi(k as i32)) });
        }
        let mut out = TimeFunction::constant(1.0);
        for _ in 0..k {
            out = out.mul(&base.f)?;
        }
        Ok(Parsed { f: out })
    }

    fn atom(&mut self) -> Result<Parsed> {
        match self.peek() {
            Some('(') => {
                self.pos += 1;
                let inner = self.expr()?;
                if !self.eat(')') {
                    return Err(self.err("expected ')'"));
                }
                Ok(inner)
            }
            Some(c) if c.is_ascii_digit() || c == '.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() => {
                let start = self.pos;
                while self.src[self.pos..].starts_with(|c: char| c.is_ascii_alphanumeric() || c == '_') {
                    self.pos += 1;
                }
                let name = &self.src[start..self.pos];
                match name {
                    "t" => Ok(Parsed { f: TimeFunction::linear(1.0, 0.0) }),
                    "pi" => Ok(Parsed { f: TimeFunction::constant(std::f64::consts::PI) }),
                    "sin" | "cos" => {
                        if !self.eat('(') {
                            return Err(self.err("expected '(' after function name"));
                        }
                        let arg = self.expr()?;
                        if !self.eat(')') {
                            return Err(self.err("expected ')'"));
                        }
                        let (w, d) = affine_coefficients(&arg.f).ok_or_else(|| {
                            Error::OutsideFamily(format!("argument of {name} must be affine in t, got {}", arg.f))
                        })?;
                        let f = if name == "sin" {
                            TimeFunction::sin(1.0, w, d)
                        } else {
                            TimeFunction::cos(1.0, w, d)
                        };
                        Ok(Parsed { f })
                    }
                    other => Err(Error::OutsideFamily(format!("unknown function or symbol '{other}'"))),
                }
            }
            _ => Err(self.err("expected number, 't', function or '('")),
        }
    }

    fn number(&mut self) -> Result<Parsed> {
        let start = self.pos;
        let bytes = self.src.as_bytes();
        while self.pos < bytes.len() && (bytes[self.pos].is_ascii_digit() || bytes[self.pos] == b'.') {
            self.pos += 1;
        }
        if self.pos < bytes.len() && (bytes[self.pos] == b'e' || bytes[self.pos] == b'E') {
            let save = self.pos;
            self.pos += 1;
            if self.pos < bytes.len() && (bytes[self.pos] == b'+' || bytes[self.pos] == b'-') {
                self.pos += 1;
            }
            let digits = self.pos;
            while self.pos < bytes.len() && bytes[self.pos].is_ascii_digit() {
                self.pos += 1;
            }
            if self.pos == digits {
                self.pos = save;
            }
        }
        let v: f64 = self.src[start..self.pos].parse().map_err(|_| self.err("malformed number"))?;
        Ok(Parsed { f: TimeFunction::constant(v) })
    }
}

/// `(ω, δ)` when `f = ω t + δ`.
fn affine_coefficients(f: &TimeFunction) -> Option<(f64, f64)> {
    let (mut w, mut d) = (0.0, 0.0);
    for t in &f.terms {
        match (t.power, t.osc) {
            (0, Osc::One) => d += t.coef,
            (1, Osc::One) => w += t.coef,
            _ => return None,
        }
    }
    Some((w, d))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn central_diff(f: &TimeFunction, t: f64, h: f64) -> f64 {
        (f.eval(t + h) - f.eval(t - h)) / (2.0 * h)
    }

    #[test]
    fn eval_examples() {
        assert_eq!(TimeFunction::constant(3.0).eval(7.0), 3.0);
        assert!((TimeFunction::parse("sin(2*t)").unwrap().eval(PI / 4.0) - 1.0).abs() < 1e-15);
        assert_eq!(TimeFunction::parse("2*t + sin(t)").unwrap().eval(0.0), 0.0);
    }

    #[test]
    fn derivative_examples() {
        assert!(TimeFunction::constant(4.0).derivative().terms.is_empty());
        let lin = TimeFunction::linear(2.5, 0.0).derivative();
        assert!(lin.is_constant() && lin.eval(3.0) == 2.5);
        let s = TimeFunction::sin(1.0, 2.0, 0.0);
        let fd = central_diff(&s, 1.0, 1e-5);
        assert!((s.derivative().eval(1.0) - fd).abs() < 1e-9);
        assert!((s.derivative().eval(1.0) - 2.0 * 2f64.cos()).abs() < 1e-15);
    }

    #[test]
    fn antiderivative_examples() {
        let g = TimeFunction::constant(1.5).antiderivative().unwrap();
        assert!((g.eval(2.0) - 3.0).abs() < 1e-15);
        let g = TimeFunction::cos(1.0, 1.0, 0.0).antiderivative().unwrap();
        for t in [0.3, 1.0, 4.0] {
            assert!((g.eval(t) - t.sin()).abs() < 1e-15);
        }
        let g = TimeFunction::linear(2.0, 0.0).antiderivative().unwrap();
        assert!((g.eval(3.0) - 9.0).abs() < 1e-14);
    }

    #[test]
    fn antiderivative_of_products() {
        let f = TimeFunction::parse("t*sin(2*t + 0.3) - 0.5*cos(t)*sin(3*t)").unwrap();
        let g = f.antiderivative().unwrap();
        assert_eq!(g.eval(0.0), 0.0);
        for k in 0..20 {
            let t = -3.0 + 0.37 * k as f64;
            assert!((g.derivative().eval(t) - f.eval(t)).abs() < 1e-12);
        }
    }

    #[test]
    fn deep_products_rejected() {
        assert!(matches!(TimeFunction::parse("t*t*t"), Err(Error::OutsideFamily(_))));
        assert!(matches!(TimeFunction::parse("t*sin(t)*cos(t)"), Err(Error::OutsideFamily(_))));
        assert!(TimeFunction::parse("t^2").is_ok());
        assert!(TimeFunction::parse("3*t*sin(t)").is_ok());
    }

    #[test]
    fn parse_rejections() {
        assert!(matches!(TimeFunction::parse("sin(t*t)"), Err(Error::OutsideFamily(_))));
        assert!(matches!(TimeFunction::parse("1/t"), Err(Error::OutsideFamily(_))));
        assert!(matches!(TimeFunction::parse("exp(t)"), Err(Error::OutsideFamily(_))));
        assert!(matches!(TimeFunction::parse("2*"), Err(Error::Parse { .. })));
        assert!(matches!(TimeFunction::parse("(1"), Err(Error::Parse { .. })));
        assert!(matches!(TimeFunction::parse("1 2"), Err(Error::Parse { .. })));
    }

    #[test]
    fn parse_forms() {
        let f = TimeFunction::parse("0.785398").unwrap();
        assert!(f.is_constant());
        assert_eq!(f.label(), "0.785398");
        let f = TimeFunction::parse("-2*t + 1e-1").unwrap();
        assert!((f.eval(1.0) + 1.9).abs() < 1e-15);
        let f = TimeFunction::parse("pi/2 - cos(-t)").unwrap();
        assert!((f.eval(0.7) - (PI / 2.0 - 0.7f64.cos())).abs() < 1e-15);
        let f = TimeFunction::parse("sin(0*t + 0.5)").unwrap();
        assert!(f.is_constant());
    }

    #[test]
    fn power_cap_on_antiderivative() {
        let f = TimeFunction::parse("t^2").unwrap();
        let mut g = f;
        for _ in 0..4 {
            g = g.antiderivative().unwrap();
        }
        assert!(g.antiderivative().is_err());
    }
}
