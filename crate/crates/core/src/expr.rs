//! Closed-form Przanowski functions as data: a small expression language
//! over the fixed vocabulary {w, z, wb, zb, lam, eps}, parsed to an AST and
//! evaluated straight into jets.
//!
//! Precedence is `^` > unary `-` > `*`,`/` > `+`,`-`, binaries
//! left-associative, and `^` takes a literal exponent only.  Complex
//! literals are single tokens written contiguously, e.g. `3+4i` or `1e-2i`;
//! with spaces, `3 + 4i` is an addition of two literals (same value,
//! different tree).  The identifier vocabulary is closed — any other name is
//! a lex error, so typos cannot silently evaluate.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::jets::{Jet, JetError, Point4, Var};

/// Expression tree for a Przanowski function and its building blocks.
#[derive(Clone, Debug, PartialEq)]
pub enum Ast {
    Coord(Var),
    /// The cosmological constant Λ of the evaluation point.
    Lam,
    /// The sign ε = sign(Λ).
    Eps,
    Lit(Complex64),
    Add(Box<Ast>, Box<Ast>),
    Sub(Box<Ast>, Box<Ast>),
    Mul(Box<Ast>, Box<Ast>),
    Div(Box<Ast>, Box<Ast>),
    /// Power with a constant literal exponent.
    Pow(Box<Ast>, Complex64),
    Neg(Box<Ast>),
    Ln(Box<Ast>),
    Exp(Box<Ast>),
    Sqrt(Box<Ast>),
}

#[derive(Debug, Error)]
pub enum ExprError {
    #[error("lex error at byte {offset}: {message}")]
    Lex { offset: usize, message: String },
    #[error("parse error at byte {offset}: expected {expected}, found {found}")]
    Parse {
        offset: usize,
        expected: &'static str,
        found: String,
    },
    #[error("evaluation error in `{subexpr}`: {reason}")]
    Eval { subexpr: String, reason: String },
}

// ---------------------------------------------------------------------------
// Lexer
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Num(Complex64),
    Ident(&'static str),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    End,
}

const IDENTS: [&str; 9] = ["w", "z", "wb", "zb", "lam", "eps", "ln", "exp", "sqrt"];

struct Lexer<'a> {
    src: &'a [u8],
    pos: usize,
}

impl<'a> Lexer<'a> {
    fn new(src: &'a str) -> Self {
        Lexer { src: src.as_bytes(), pos: 0 }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    /// Reads an unsigned float starting at `pos`; returns (value, end) or
    /// None when `pos` does not start a number.
    fn read_unsigned(&self, mut pos: usize) -> Option<(f64, usize)> {
        let start = pos;
        while pos < self.src.len() && self.src[pos].is_ascii_digit() {
            pos += 1;
        }
        if pos < self.src.len() && self.src[pos] == b'.' {
            pos += 1;
            while pos < self.src.len() && self.src[pos].is_ascii_digit() {
                pos += 1;
            }
        }
        if pos == start {
            return None;
        }
        // Optional exponent: e / E, optional sign, at least one digit.
        if pos < self.src.len() && (self.src[pos] == b'e' || self.src[pos] == b'E') {
            let mut epos = pos + 1;
            if epos < self.src.len() && (self.src[epos] == b'+' || self.src[epos] == b'-') {
                epos += 1;
            }
            if epos < self.src.len() && self.src[epos].is_ascii_digit() {
                while epos < self.src.len() && self.src[epos].is_ascii_digit() {
                    epos += 1;
                }
                pos = epos;
            }
        }
        let text = std::str::from_utf8(&self.src[start..pos]).unwrap();
        Some((text.parse().unwrap(), pos))
    }

    fn next(&mut self) -> Result<(Tok, usize), ExprError> {
        self.skip_ws();
        let at = self.pos;
        if at >= self.src.len() {
            return Ok((Tok::End, at));
        }
        let b = self.src[at];
        // Numbers, including the contiguous complex forms "3+4i" and "4i".
        if b.is_ascii_digit() || b == b'.' {
            let (re, end) = self.read_unsigned(at).ok_or_else(|| ExprError::Lex {
                offset: at,
                message: "malformed number".into(),
            })?;
            // Pure imaginary "4i"?
            if end < self.src.len() && self.src[end] == b'i' {
                self.pos = end + 1;
                return Ok((Tok::Num(Complex64::new(0.0, re)), at));
            }
            // Contiguous complex "A±Bi" (no whitespace anywhere inside)?
            if end < self.src.len() && (self.src[end] == b'+' || self.src[end] == b'-') {
                let sign = if self.src[end] == b'+' { 1.0 } else { -1.0 };
                if let Some((im, iend)) = self.read_unsigned(end + 1) {
                    if iend < self.src.len() && self.src[iend] == b'i' {
                        self.pos = iend + 1;
                        return Ok((Tok::Num(Complex64::new(re, sign * im)), at));
                    }
                }
            }
            self.pos = end;
            return Ok((Tok::Num(Complex64::new(re, 0.0)), at));
        }
        if b.is_ascii_alphabetic() {
            let mut end = at;
            while end < self.src.len() && self.src[end].is_ascii_alphanumeric() {
                end += 1;
            }
            let word = std::str::from_utf8(&self.src[at..end]).unwrap();
            let name = IDENTS
                .iter()
                .find(|&&k| k == word)
                .ok_or_else(|| ExprError::Lex {
                    offset: at,
                    message: format!("unknown identifier `{word}` (vocabulary: {})", IDENTS.join(", ")),
                })?;
            self.pos = end;
            return Ok((Tok::Ident(name), at));
        }
        let tok = match b {
            b'+' => Tok::Plus,
            b'-' => Tok::Minus,
            b'*' => Tok::Star,
            b'/' => Tok::Slash,
            b'^' => Tok::Caret,
            b'(' => Tok::LParen,
            b')' => Tok::RParen,
            _ => {
                return Err(ExprError::Lex {
                    offset: at,
                    message: format!("unexpected character `{}`", b as char),
                })
            }
        };
        self.pos = at + 1;
        Ok((tok, at))
    }
}

// ---------------------------------------------------------------------------
// Parser (recursive descent, one token of lookahead)
// ---------------------------------------------------------------------------

struct Parser {
    toks: Vec<(Tok, usize)>,
    at: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.at].0
    }

    fn offset(&self) -> usize {
        self.toks[self.at].1
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.at].0.clone();
        if self.at + 1 < self.toks.len() {
            self.at += 1;
        }
        t
    }

    fn found(&self) -> String {
        format!("{:?}", self.peek())
    }

    fn expr(&mut self) -> Result<Ast, ExprError> {
        let mut lhs = self.term()?;
        loop {
            match self.peek() {
                Tok::Plus => {
                    self.bump();
                    lhs = Ast::Add(Box::new(lhs), Box::new(self.term()?));
                }
                Tok::Minus => {
                    self.bump();
                    lhs = Ast::Sub(Box::new(lhs), Box::new(self.term()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<Ast, ExprError> {
        let mut lhs = self.unary()?;
        loop {
            match self.peek() {
                Tok::Star => {
                    self.bump();
                    lhs = Ast::Mul(Box::new(lhs), Box::new(self.unary()?));
                }
                Tok::Slash => {
                    self.bump();
                    lhs = Ast::Div(Box::new(lhs), Box::new(self.unary()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    // `^` binds tighter than unary minus, so -w^2 is -(w^2).
    fn unary(&mut self) -> Result<Ast, ExprError> {
        if matches!(self.peek(), Tok::Minus) {
            self.bump();
            return Ok(Ast::Neg(Box::new(self.unary()?)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Ast, ExprError> {
        let base = self.atom()?;
        if matches!(self.peek(), Tok::Caret) {
            self.bump();
            let neg = if matches!(self.peek(), Tok::Minus) {
                self.bump();
                true
            } else {
                false
            };
            match self.bump() {
                Tok::Num(c) => {
                    let e = if neg { -c } else { c };
                    return Ok(Ast::Pow(Box::new(base), e));
                }
                _ => {
                    return Err(ExprError::Parse {
                        offset: self.offset(),
                        expected: "literal exponent after `^`",
                        found: self.found(),
                    })
                }
            }
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Ast, ExprError> {
        let offset = self.offset();
        match self.bump() {
            Tok::Num(c) => Ok(Ast::Lit(c)),
            Tok::Ident("w") => Ok(Ast::Coord(Var::W)),
            Tok::Ident("z") => Ok(Ast::Coord(Var::Z)),
            Tok::Ident("wb") => Ok(Ast::Coord(Var::Wb)),
            Tok::Ident("zb") => Ok(Ast::Coord(Var::Zb)),
            Tok::Ident("lam") => Ok(Ast::Lam),
            Tok::Ident("eps") => Ok(Ast::Eps),
            Tok::Ident(func @ ("ln" | "exp" | "sqrt")) => {
                if !matches!(self.bump(), Tok::LParen) {
                    return Err(ExprError::Parse {
                        offset,
                        expected: "`(` after function name",
                        found: self.found(),
                    });
                }
                let arg = Box::new(self.expr()?);
                if !matches!(self.bump(), Tok::RParen) {
                    return Err(ExprError::Parse {
                        offset,
                        expected: "closing `)`",
                        found: self.found(),
                    });
                }
                Ok(match func {
                    "ln" => Ast::Ln(arg),
                    "exp" => Ast::Exp(arg),
                    _ => Ast::Sqrt(arg),
                })
            }
            Tok::LParen => {
                let inner = self.expr()?;
                if !matches!(self.bump(), Tok::RParen) {
                    return Err(ExprError::Parse {
                        offset,
                        expected: "closing `)`",
                        found: self.found(),
                    });
                }
                Ok(inner)
            }
            other => Err(ExprError::Parse {
                offset,
                expected: "literal, identifier, function call or `(`",
                found: format!("{other:?}"),
            }),
        }
    }
}

/// Parses a source string to an AST.
pub fn parse(source: &str) -> Result<Ast, ExprError> {
    let mut lexer = Lexer::new(source);
    let mut toks = Vec::new();
    loop {
        let (tok, at) = lexer.next()?;
        let end = tok == Tok::End;
        toks.push((tok, at));
        if end {
            break;
        }
    }
    let mut parser = Parser { toks, at: 0 };
    let ast = parser.expr()?;
    if !matches!(parser.peek(), Tok::End) {
        return Err(ExprError::Parse {
            offset: parser.offset(),
            expected: "end of input",
            found: parser.found(),
        });
    }
    Ok(ast)
}

// ---------------------------------------------------------------------------
// Printing
// ---------------------------------------------------------------------------

fn fmt_literal(c: Complex64) -> String {
    if c.im == 0.0 {
        format!("{}", c.re)
    } else if c.re == 0.0 {
        format!("{}i", c.im)
    } else if c.im < 0.0 {
        format!("{}-{}i", c.re, -c.im)
    } else {
        format!("{}+{}i", c.re, c.im)
    }
}

fn fmt_exponent(c: Complex64) -> String {
    if c.re < 0.0 || (c.re == 0.0 && c.im < 0.0) {
        format!("-{}", fmt_literal(-c))
    } else {
        fmt_literal(c)
    }
}

/// Fully parenthesised text that reparses to a structurally identical AST.
///
/// Literals print in the contiguous complex form, so they lex back as single
/// tokens; a literal with negative real part prints through a unary minus,
/// i.e. the printed normal form is the one the parser itself produces.
pub fn print_canonical(ast: &Ast) -> String {
    match ast {
        Ast::Coord(Var::W) => "w".into(),
        Ast::Coord(Var::Z) => "z".into(),
        Ast::Coord(Var::Wb) => "wb".into(),
        Ast::Coord(Var::Zb) => "zb".into(),
        Ast::Lam => "lam".into(),
        Ast::Eps => "eps".into(),
        Ast::Lit(c) => {
            if c.re < 0.0 || (c.re == 0.0 && c.im < 0.0) {
                format!("(-{})", fmt_literal(-c))
            } else {
                fmt_literal(*c)
            }
        }
        Ast::Add(a, b) => format!("({} + {})", print_canonical(a), print_canonical(b)),
        Ast::Sub(a, b) => format!("({} - {})", print_canonical(a), print_canonical(b)),
        Ast::Mul(a, b) => format!("({} * {})", print_canonical(a), print_canonical(b)),
        Ast::Div(a, b) => format!("({} / {})", print_canonical(a), print_canonical(b)),
        Ast::Pow(a, c) => format!("({} ^ {})", print_canonical(a), fmt_exponent(*c)),
        Ast::Neg(a) => format!("(-{})", print_canonical(a)),
        Ast::Ln(a) => format!("ln({})", print_canonical(a)),
        Ast::Exp(a) => format!("exp({})", print_canonical(a)),
        Ast::Sqrt(a) => format!("sqrt({})", print_canonical(a)),
    }
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

/// Guard below which divisors and ln/sqrt arguments count as domain
/// violations rather than evaluable values.
const EVAL_SINGULAR_FLOOR: f64 = 1e-13;

fn eval_err(ast: &Ast, reason: impl Into<String>) -> ExprError {
    ExprError::Eval { subexpr: print_canonical(ast), reason: reason.into() }
}

fn lift_jet_err(ast: &Ast, err: JetError) -> ExprError {
    eval_err(ast, err.to_string())
}

/// Evaluates an AST to a jet of the given order at the given point.
///
/// ε evaluates to sign(Λ) — the built-in families all satisfy ε = sign Λ and
/// [`ManifoldSpec`] validation enforces it for user files.
pub fn eval_jet(ast: &Ast, at: Point4, order: usize) -> Result<Jet, ExprError> {
    match ast {
        Ast::Coord(v) => Ok(Jet::variable(at, order, *v)),
        Ast::Lam => Ok(Jet::constant(at, order, Complex64::new(at.lambda, 0.0))),
        Ast::Eps => Ok(Jet::constant(at, order, Complex64::new(at.lambda.signum(), 0.0))),
        Ast::Lit(c) => Ok(Jet::constant(at, order, *c)),
        Ast::Add(a, b) => Ok(&eval_jet(a, at, order)? + &eval_jet(b, at, order)?),
        Ast::Sub(a, b) => Ok(&eval_jet(a, at, order)? - &eval_jet(b, at, order)?),
        Ast::Mul(a, b) => Ok(&eval_jet(a, at, order)? * &eval_jet(b, at, order)?),
        Ast::Div(a, b) => {
            let num = eval_jet(a, at, order)?;
            let den = eval_jet(b, at, order)?;
            if den.value().norm() < EVAL_SINGULAR_FLOOR {
                return Err(eval_err(ast, "division by a value below 1e-13 in modulus"));
            }
            crate::jets::jet_arith(&num, &den, crate::jets::ArithOp::Div)
                .map_err(|e| lift_jet_err(ast, e))
        }
        Ast::Pow(a, c) => {
            let base = eval_jet(a, at, order)?;
            base.powc(*c).map_err(|e| lift_jet_err(ast, e))
        }
        Ast::Neg(a) => Ok(eval_jet(a, at, order)?.scaled(Complex64::new(-1.0, 0.0))),
        Ast::Ln(a) => {
            let arg = eval_jet(a, at, order)?;
            if arg.value().norm() < EVAL_SINGULAR_FLOOR {
                return Err(eval_err(ast, "ln argument below 1e-13 in modulus"));
            }
            arg.ln().map_err(|e| lift_jet_err(ast, e))
        }
        Ast::Exp(a) => Ok(eval_jet(a, at, order)?.exp()),
        Ast::Sqrt(a) => {
            let arg = eval_jet(a, at, order)?;
            if arg.value().norm() < EVAL_SINGULAR_FLOOR {
                return Err(eval_err(ast, "sqrt argument below 1e-13 in modulus"));
            }
            arg.sqrt().map_err(|e| lift_jet_err(ast, e))
        }
    }
}

/// The symbol-level conjugate: literals conjugated, w ↔ wb and z ↔ zb
/// swapped.  On a real-slice point this evaluates to the complex conjugate
/// of the original (all function branches stay principal on the sample
/// domains in use).
pub fn conjugate_swap(ast: &Ast) -> Ast {
    match ast {
        Ast::Coord(Var::W) => Ast::Coord(Var::Wb),
        Ast::Coord(Var::Wb) => Ast::Coord(Var::W),
        Ast::Coord(Var::Z) => Ast::Coord(Var::Zb),
        Ast::Coord(Var::Zb) => Ast::Coord(Var::Z),
        Ast::Lam => Ast::Lam,
        Ast::Eps => Ast::Eps,
        Ast::Lit(c) => Ast::Lit(c.conj()),
        Ast::Add(a, b) => Ast::Add(Box::new(conjugate_swap(a)), Box::new(conjugate_swap(b))),
        Ast::Sub(a, b) => Ast::Sub(Box::new(conjugate_swap(a)), Box::new(conjugate_swap(b))),
        Ast::Mul(a, b) => Ast::Mul(Box::new(conjugate_swap(a)), Box::new(conjugate_swap(b))),
        Ast::Div(a, b) => Ast::Div(Box::new(conjugate_swap(a)), Box::new(conjugate_swap(b))),
        Ast::Pow(a, c) => Ast::Pow(Box::new(conjugate_swap(a)), c.conj()),
        Ast::Neg(a) => Ast::Neg(Box::new(conjugate_swap(a))),
        Ast::Ln(a) => Ast::Ln(Box::new(conjugate_swap(a))),
        Ast::Exp(a) => Ast::Exp(Box::new(conjugate_swap(a))),
        Ast::Sqrt(a) => Ast::Sqrt(Box::new(conjugate_swap(a))),
    }
}

// ---------------------------------------------------------------------------
// Manifold specifications
// ---------------------------------------------------------------------------

/// Per-coordinate sample box: real and imaginary ranges for w and z.
/// The barred coordinates are taken as complex conjugates when sampling.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct Domain {
    pub w_re: [f64; 2],
    pub w_im: [f64; 2],
    pub z_re: [f64; 2],
    pub z_im: [f64; 2],
}

impl Domain {
    /// Maps a unit-cube sample u ∈ [0,1]⁴ to (w, z) in the box.  Callers
    /// bring their own randomness; the mapping itself is deterministic.
    pub fn point_from_unit(&self, u: [f64; 4]) -> (Complex64, Complex64) {
        let lerp = |r: [f64; 2], t: f64| r[0] + (r[1] - r[0]) * t;
        (
            Complex64::new(lerp(self.w_re, u[0]), lerp(self.w_im, u[1])),
            Complex64::new(lerp(self.z_re, u[2]), lerp(self.z_im, u[3])),
        )
    }

    fn validate(&self) -> Result<(), ManifoldError> {
        for (name, r) in [
            ("w_re", self.w_re),
            ("w_im", self.w_im),
            ("z_re", self.z_re),
            ("z_im", self.z_im),
        ] {
            if !r[0].is_finite() || !r[1].is_finite() || r[0] > r[1] {
                return Err(ManifoldError::BadDomain(format!(
                    "range {name} = [{}, {}] is not a finite lo ≤ hi interval",
                    r[0], r[1]
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum ManifoldError {
    #[error("cosmological constant must be nonzero")]
    LambdaZero,
    #[error("eps = {eps} must be ±1 and equal to sign(lambda) = {sign}")]
    EpsMismatch { eps: f64, sign: f64 },
    #[error("invalid domain: {0}")]
    BadDomain(String),
    #[error("invalid K expression: {0}")]
    BadExpr(#[from] ExprError),
    #[error("manifold file is not valid JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unknown builtin manifold `{0}` (available: s4, h4, cp2, bergmann)")]
    UnknownBuiltin(String),
}

/// A candidate Przanowski metric: the function K as an expression, the
/// cosmological constant, and a sample box on which everything is regular.
#[derive(Clone, Debug)]
pub struct ManifoldSpec {
    pub name: String,
    pub lambda: f64,
    pub eps: f64,
    pub k_expr: Ast,
    pub domain: Domain,
    pub reality: bool,
}

/// On-disk form of a [`ManifoldSpec`]: JSON with the expression as text.
#[derive(Serialize, Deserialize)]
struct ManifoldFile {
    name: String,
    lambda: f64,
    eps: f64,
    #[serde(rename = "K")]
    k: String,
    domain: Domain,
    reality: bool,
}

impl ManifoldSpec {
    pub fn new(
        name: &str,
        lambda: f64,
        eps: f64,
        k_source: &str,
        domain: Domain,
        reality: bool,
    ) -> Result<Self, ManifoldError> {
        if lambda == 0.0 || !lambda.is_finite() {
            return Err(ManifoldError::LambdaZero);
        }
        if eps != lambda.signum() {
            return Err(ManifoldError::EpsMismatch { eps, sign: lambda.signum() });
        }
        domain.validate()?;
        Ok(ManifoldSpec {
            name: name.to_string(),
            lambda,
            eps,
            k_expr: parse(k_source)?,
            domain,
            reality,
        })
    }

    pub fn from_json(text: &str) -> Result<Self, ManifoldError> {
        let file: ManifoldFile = serde_json::from_str(text)?;
        ManifoldSpec::new(&file.name, file.lambda, file.eps, &file.k, file.domain, file.reality)
    }

    pub fn to_json(&self) -> String {
        let file = ManifoldFile {
            name: self.name.clone(),
            lambda: self.lambda,
            eps: self.eps,
            k: print_canonical(&self.k_expr),
            domain: self.domain,
            reality: self.reality,
        };
        serde_json::to_string_pretty(&file).expect("manifold serialisation")
    }

    /// The four closed-form families, each with a sample box on which the
    /// metric is nondegenerate and every ln argument stays on the principal
    /// branch:
    ///
    /// * `s4`, `h4` — K = (2/Λ)ln(ww̄ / (1 − εww̄(1+zz̄))) with ε = Λ = ∓1;
    /// * `cp2`, `bergmann` — K = −(1/Λ)ln((1 − εww̄ − εzz̄)(zz̄ − ε)) with
    ///   ε = Λ = ∓1 (the Bergmann box sits in ww̄ > 1 − zz̄ where the ln
    ///   argument is positive).
    pub fn builtin(name: &str) -> Result<Self, ManifoldError> {
        let round_k = "(2/lam)*ln(w*wb/(1 - eps*w*wb*(1+z*zb)))";
        let flag_k = "-(1/lam)*ln((1 - eps*w*wb - eps*z*zb)*(z*zb - eps))";
        let (lambda, k, domain) = match name {
            "s4" => (
                -1.0,
                round_k,
                Domain {
                    w_re: [0.2, 0.7],
                    w_im: [-0.2, 0.2],
                    z_re: [-0.4, 0.4],
                    z_im: [-0.4, 0.4],
                },
            ),
            "h4" => (
                1.0,
                round_k,
                Domain {
                    w_re: [0.2, 0.5],
                    w_im: [-0.2, 0.2],
                    z_re: [-0.4, 0.4],
                    z_im: [-0.4, 0.4],
                },
            ),
            "cp2" => (
                -1.0,
                flag_k,
                Domain {
                    w_re: [0.3, 0.8],
                    w_im: [-0.2, 0.2],
                    z_re: [-0.4, 0.4],
                    z_im: [-0.4, 0.4],
                },
            ),
            "bergmann" => (
                1.0,
                flag_k,
                Domain {
                    w_re: [1.1, 1.6],
                    w_im: [-0.2, 0.2],
                    z_re: [-0.28, 0.28],
                    z_im: [-0.28, 0.28],
                },
            ),
            other => return Err(ManifoldError::UnknownBuiltin(other.to_string())),
        };
        ManifoldSpec::new(name, lambda, lambda.signum(), k, domain, true)
    }

    /// Real-slice sample point from a unit-cube sample.
    pub fn point_from_unit(&self, u: [f64; 4]) -> Point4 {
        let (w, z) = self.domain.point_from_unit(u);
        Point4::real_slice(w, z, self.lambda)
    }

    /// The K-jet at a point — the single entry point every geometric
    /// computation goes through.
    pub fn k_jet(&self, at: Point4, order: usize) -> Result<Jet, ExprError> {
        eval_jet(&self.k_expr, at, order)
    }
}
