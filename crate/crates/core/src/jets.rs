//! Truncated Taylor jets over the four complex coordinates (w, z, w̄, z̄).
//!
//! A [`Jet`] stores, at a fixed base point, the scaled partial derivatives
//! c_α = ∂^α f / α! of a complex-valued function for every multi-index
//! α = (i, j, k, l) with |α| ≤ order.  Arithmetic on jets is exact Taylor
//! arithmetic truncated at the stored order, so every derivative a downstream
//! computation reads off a jet is exact (no finite-difference error).  Orders
//! up to 4 are supported: the metric needs two derivatives of the Przanowski
//! function, curvature two more.
//!
//! The four coordinates are treated as independent holomorphic variables;
//! reality (w̄ = conj w) is a property of *base points*, never of the
//! arithmetic.

use num_complex::Complex64;
use thiserror::Error;

/// Highest supported truncation order.
pub const MAX_ORDER: usize = 4;

const NUM_VARS: usize = 4;

/// Monomial count for a full jet of the given order: C(order + 4, 4).
pub const fn coeff_count(order: usize) -> usize {
    (order + 1) * (order + 2) * (order + 3) * (order + 4) / 24
}

const NUM_MONOMIALS: usize = coeff_count(MAX_ORDER);

/// The four jet variables, in storage order.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Var {
    W = 0,
    Z = 1,
    Wb = 2,
    Zb = 3,
}

impl Var {
    pub const ALL: [Var; 4] = [Var::W, Var::Z, Var::Wb, Var::Zb];
}

/// Exponent tuple (i, j, k, l) for w^i z^j w̄^k z̄^l.
pub type MultiIndex = [u8; NUM_VARS];

/// All multi-indices with |α| ≤ 4 in graded order: total degree first, then
/// lexicographic with w ≻ z ≻ w̄ ≻ z̄ (so each degree block starts at w^deg).
static MONOMIALS: [MultiIndex; NUM_MONOMIALS] = build_monomials();

/// Inverse of `MONOMIALS`: base-5 encoded multi-index → storage position.
static POSITION: [u8; 625] = build_positions();

/// Product table: `PROD[a][b]` is the position of MONOMIALS[a] + MONOMIALS[b],
/// or `INVALID` when the total degree exceeds `MAX_ORDER`.
static PROD: [[u8; NUM_MONOMIALS]; NUM_MONOMIALS] = build_products();

const INVALID: u8 = u8::MAX;

const fn encode(m: MultiIndex) -> usize {
    ((m[0] as usize * 5 + m[1] as usize) * 5 + m[2] as usize) * 5 + m[3] as usize
}

const fn build_monomials() -> [MultiIndex; NUM_MONOMIALS] {
    let mut table = [[0u8; NUM_VARS]; NUM_MONOMIALS];
    let mut pos = 0;
    let mut deg = 0;
    while deg <= MAX_ORDER {
        let mut i = deg + 1;
        while i > 0 {
            i -= 1;
            let mut j = deg - i + 1;
            while j > 0 {
                j -= 1;
                let mut k = deg - i - j + 1;
                while k > 0 {
                    k -= 1;
                    let l = deg - i - j - k;
                    table[pos] = [i as u8, j as u8, k as u8, l as u8];
                    pos += 1;
                }
            }
        }
        deg += 1;
    }
    table
}

const fn build_positions() -> [u8; 625] {
    let mut table = [INVALID; 625];
    let mut p = 0;
    while p < NUM_MONOMIALS {
        table[encode(MONOMIALS_FOR_CONST[p])] = p as u8;
        p += 1;
    }
    table
}

// `static` items cannot reference each other during const evaluation, so the
// monomial table is materialised once more for the two derived tables.
const MONOMIALS_FOR_CONST: [MultiIndex; NUM_MONOMIALS] = build_monomials();

const fn build_products() -> [[u8; NUM_MONOMIALS]; NUM_MONOMIALS] {
    let positions = build_positions();
    let mut table = [[INVALID; NUM_MONOMIALS]; NUM_MONOMIALS];
    let mut a = 0;
    while a < NUM_MONOMIALS {
        let ma = MONOMIALS_FOR_CONST[a];
        let mut b = 0;
        while b < NUM_MONOMIALS {
            let mb = MONOMIALS_FOR_CONST[b];
            let deg = (ma[0] + mb[0] + ma[1] + mb[1] + ma[2] + mb[2] + ma[3] + mb[3]) as usize;
            if deg <= MAX_ORDER {
                let sum = [ma[0] + mb[0], ma[1] + mb[1], ma[2] + mb[2], ma[3] + mb[3]];
                table[a][b] = positions[encode(sum)];
            }
            b += 1;
        }
        a += 1;
    }
    table
}

/// Storage position of a multi-index, if its degree is within `MAX_ORDER`.
pub fn monomial_position(m: MultiIndex) -> Option<usize> {
    if m.iter().any(|&e| e > MAX_ORDER as u8) {
        return None;
    }
    match POSITION[encode(m)] {
        INVALID => None,
        p => Some(p as usize),
    }
}

/// The multi-index stored at a position (inverse of [`monomial_position`]).
pub fn monomial_at(pos: usize) -> MultiIndex {
    MONOMIALS[pos]
}

fn degree_of(m: MultiIndex) -> usize {
    m.iter().map(|&e| e as usize).sum()
}

/// A point of the complexified coordinate chart, plus the cosmological
/// constant Λ the metric formulas need alongside the coordinates.
///
/// On a "real slice" point `wb = conj(w)` and `zb = conj(z)`; nothing in the
/// jet arithmetic assumes this.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Point4 {
    pub w: Complex64,
    pub z: Complex64,
    pub wb: Complex64,
    pub zb: Complex64,
    pub lambda: f64,
}

impl Point4 {
    pub fn new(w: Complex64, z: Complex64, wb: Complex64, zb: Complex64, lambda: f64) -> Self {
        Point4 { w, z, wb, zb, lambda }
    }

    /// Point with w̄ = conj w, z̄ = conj z.
    pub fn real_slice(w: Complex64, z: Complex64, lambda: f64) -> Self {
        Point4 { w, z, wb: w.conj(), zb: z.conj(), lambda }
    }

    pub fn coord(&self, var: Var) -> Complex64 {
        match var {
            Var::W => self.w,
            Var::Z => self.z,
            Var::Wb => self.wb,
            Var::Zb => self.zb,
        }
    }
}

/// Errors from jet construction and arithmetic.
#[derive(Debug, Error)]
pub enum JetError {
    #[error("jet operands live at different base points")]
    BaseMismatch,
    #[error("jet operands have different orders ({0} and {1})")]
    OrderMismatch(usize, usize),
    #[error("requested order {0} exceeds the supported maximum {MAX_ORDER}")]
    OrderTooHigh(usize),
    #[error("division by a jet whose value coefficient is zero")]
    SingularPoint,
    #[error("{0} of a jet whose value coefficient is zero (branch point)")]
    BranchPoint(&'static str),
    #[error("derivative of order {requested} exceeds stored jet order {stored}")]
    InsufficientOrder { requested: usize, stored: usize },
    #[error("coefficient vector has length {got}, expected {expected}")]
    CoeffLength { got: usize, expected: usize },
}

/// Truncated Taylor expansion of a complex function at a [`Point4`].
///
/// `coeffs[p]` is ∂^α f / α! for α = `monomial_at(p)`.
#[derive(Clone, Debug)]
pub struct Jet {
    base: Point4,
    order: usize,
    coeffs: Vec<Complex64>,
}

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

impl Jet {
    /// The jet of the constant function `value`.
    pub fn constant(base: Point4, order: usize, value: Complex64) -> Self {
        assert!(order <= MAX_ORDER, "jet order {order} exceeds {MAX_ORDER}");
        let mut coeffs = vec![ZERO; coeff_count(order)];
        coeffs[0] = value;
        Jet { base, order, coeffs }
    }

    /// The zero jet.
    pub fn zero(base: Point4, order: usize) -> Self {
        Jet::constant(base, order, ZERO)
    }

    /// The jet of the coordinate function `var` (value at base, slope one).
    pub fn variable(base: Point4, order: usize, var: Var) -> Self {
        let mut jet = Jet::constant(base, order, base.coord(var));
        if order >= 1 {
            jet.coeffs[1 + var as usize] = ONE;
        }
        jet
    }

    /// The jet of (x − x₀)^α: a single Taylor coefficient 1 at `alpha`.
    /// Useful as a probe function with one prescribed derivative.
    pub fn monomial(base: Point4, order: usize, alpha: MultiIndex) -> Result<Self, JetError> {
        if order > MAX_ORDER {
            return Err(JetError::OrderTooHigh(order));
        }
        let pos = monomial_position(alpha).filter(|_| degree_of(alpha) <= order).ok_or(
            JetError::InsufficientOrder { requested: degree_of(alpha), stored: order },
        )?;
        let mut jet = Jet::zero(base, order);
        jet.coeffs[pos] = ONE;
        Ok(jet)
    }

    /// Builds a jet from a raw coefficient vector in storage order.
    pub fn from_coeffs(base: Point4, order: usize, coeffs: Vec<Complex64>) -> Result<Self, JetError> {
        if order > MAX_ORDER {
            return Err(JetError::OrderTooHigh(order));
        }
        let expected = coeff_count(order);
        if coeffs.len() != expected {
            return Err(JetError::CoeffLength { got: coeffs.len(), expected });
        }
        Ok(Jet { base, order, coeffs })
    }

    pub fn base(&self) -> Point4 {
        self.base
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    /// The function value f(base).
    pub fn value(&self) -> Complex64 {
        self.coeffs[0]
    }

    /// Scaled coefficient ∂^α f / α!.  Panics if |α| exceeds the stored
    /// order — such coefficients are unknown, not zero.
    pub fn coeff(&self, alpha: MultiIndex) -> Complex64 {
        let deg = degree_of(alpha);
        assert!(
            deg <= self.order,
            "coefficient of degree {deg} requested from an order-{} jet",
            self.order
        );
        self.coeffs[monomial_position(alpha).expect("multi-index within order")]
    }

    /// The actual partial derivative ∂^α f = α! · c_α.
    pub fn derivative(&self, alpha: MultiIndex) -> Complex64 {
        let fact: f64 = alpha.iter().map(|&e| FACTORIAL[e as usize]).product();
        self.coeff(alpha) * fact
    }

    /// Copy truncated to `new_order` ≤ current order.
    pub fn truncated(&self, new_order: usize) -> Jet {
        assert!(new_order <= self.order);
        Jet {
            base: self.base,
            order: new_order,
            coeffs: self.coeffs[..coeff_count(new_order)].to_vec(),
        }
    }

    fn common_order(&self, rhs: &Jet) -> usize {
        assert!(
            self.base == rhs.base,
            "jet arithmetic across different base points"
        );
        self.order.min(rhs.order)
    }

    fn add_impl(&self, rhs: &Jet, sign: f64) -> Jet {
        let order = self.common_order(rhs);
        let n = coeff_count(order);
        let coeffs = (0..n).map(|p| self.coeffs[p] + sign * rhs.coeffs[p]).collect();
        Jet { base: self.base, order, coeffs }
    }

    fn mul_impl(&self, rhs: &Jet) -> Jet {
        let order = self.common_order(rhs);
        let n = coeff_count(order);
        let mut coeffs = vec![ZERO; n];
        for a in 0..n.min(coeff_count(self.order)) {
            let ca = self.coeffs[a];
            if ca == ZERO {
                continue;
            }
            for b in 0..n {
                let p = PROD[a][b] as usize;
                if p < n {
                    coeffs[p] += ca * rhs.coeffs[b];
                }
            }
        }
        Jet { base: self.base, order, coeffs }
    }

    /// Taylor division: coefficients of a/b by recursion on degree,
    /// c_γ = (a_γ − Σ_{0<β≤γ} b_β c_{γ−β}) / b₀.
    fn div_impl(&self, rhs: &Jet) -> Result<Jet, JetError> {
        let order = self.common_order(rhs);
        let b0 = rhs.coeffs[0];
        if b0 == ZERO {
            return Err(JetError::SingularPoint);
        }
        let n = coeff_count(order);
        let mut coeffs = vec![ZERO; n];
        for g in 0..n {
            let gamma = MONOMIALS[g];
            let mut acc = self.coeffs[g];
            for d in 0..g {
                let delta = MONOMIALS[d];
                if delta.iter().zip(gamma.iter()).all(|(x, y)| x <= y) {
                    let beta = [
                        gamma[0] - delta[0],
                        gamma[1] - delta[1],
                        gamma[2] - delta[2],
                        gamma[3] - delta[3],
                    ];
                    acc -= rhs.coeffs[POSITION[encode(beta)] as usize] * coeffs[d];
                }
            }
            coeffs[g] = acc / b0;
        }
        Ok(Jet { base: self.base, order, coeffs })
    }

    /// Integer power by repeated truncated multiplication.
    pub fn powi(&self, n: i64) -> Result<Jet, JetError> {
        if n < 0 {
            let inv = Jet::constant(self.base, self.order, ONE).div_impl(self)?;
            return inv.powi(-n);
        }
        let mut acc = Jet::constant(self.base, self.order, ONE);
        let mut sq = self.clone();
        let mut k = n;
        while k > 0 {
            if k & 1 == 1 {
                acc = acc.mul_impl(&sq);
            }
            k >>= 1;
            if k > 0 {
                sq = sq.mul_impl(&sq);
            }
        }
        Ok(acc)
    }

    /// Horner evaluation of Σ d_k (self − value)^k — the univariate series
    /// composition underlying every elementary function.
    fn compose(&self, d: &[Complex64]) -> Jet {
        let mut hat = self.clone();
        hat.coeffs[0] = ZERO;
        let mut r = Jet::constant(self.base, self.order, d[d.len() - 1]);
        for k in (0..d.len() - 1).rev() {
            r = r.mul_impl(&hat);
            r.coeffs[0] += d[k];
        }
        r
    }

    /// e^f.
    pub fn exp(&self) -> Jet {
        let e0 = self.value().exp();
        let d: Vec<Complex64> = (0..=self.order).map(|k| e0 / FACTORIAL[k]).collect();
        self.compose(&d)
    }

    /// Principal-branch ln f.  Errors when the value coefficient vanishes.
    pub fn ln(&self) -> Result<Jet, JetError> {
        let u0 = self.value();
        if u0 == ZERO {
            return Err(JetError::BranchPoint("ln"));
        }
        let mut d = vec![u0.ln()];
        let mut inv_pow = ONE;
        for k in 1..=self.order {
            inv_pow /= u0;
            let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
            d.push(sign * inv_pow / k as f64);
        }
        Ok(self.compose(&d))
    }

    /// Principal-branch √f.  Errors when the value coefficient vanishes.
    pub fn sqrt(&self) -> Result<Jet, JetError> {
        let u0 = self.value();
        if u0 == ZERO {
            return Err(JetError::BranchPoint("sqrt"));
        }
        self.powc_inner(Complex64::new(0.5, 0.0), "sqrt")
    }

    /// f^c for a constant exponent.  Integer exponents reduce to repeated
    /// multiplication (valid at zero values), half-integers route through the
    /// principal square root, anything else through exp(c·ln f).
    pub fn powc(&self, c: Complex64) -> Result<Jet, JetError> {
        if c.im == 0.0 {
            let n = c.re.round();
            if (c.re - n).abs() < 1e-12 {
                return self.powi(n as i64);
            }
            let half = (2.0 * c.re).round();
            if (2.0 * c.re - half).abs() < 1e-12 {
                let root = self.sqrt()?;
                return root.powi(half as i64);
            }
        }
        self.powc_inner(c, "pow")
    }

    /// Series for f^c via generalised binomial coefficients,
    /// d_k = C(c, k) u₀^{c−k}.
    fn powc_inner(&self, c: Complex64, what: &'static str) -> Result<Jet, JetError> {
        let u0 = self.value();
        if u0 == ZERO {
            return Err(JetError::BranchPoint(what));
        }
        let lead = u0.powc(c);
        let mut d = vec![lead];
        let mut binom = ONE;
        let mut inv_pow = ONE;
        for k in 1..=self.order {
            binom *= (c - (k as f64 - 1.0)) / k as f64;
            inv_pow /= u0;
            d.push(lead * binom * inv_pow);
        }
        Ok(self.compose(&d))
    }

    /// Single partial derivative: an order-(n−1) jet of ∂f/∂var.
    pub fn partial(&self, var: Var) -> Result<Jet, JetError> {
        if self.order == 0 {
            return Err(JetError::InsufficientOrder { requested: 1, stored: 0 });
        }
        let order = self.order - 1;
        let n = coeff_count(order);
        let e_var = 1 + var as usize; // position of the degree-1 monomial of `var`
        let mut coeffs = vec![ZERO; n];
        for (p, c) in coeffs.iter_mut().enumerate() {
            let src = PROD[p][e_var] as usize;
            let mult = MONOMIALS[p][var as usize] as f64 + 1.0;
            *c = mult * self.coeffs[src];
        }
        Ok(Jet { base: self.base, order, coeffs })
    }
}

const FACTORIAL: [f64; MAX_ORDER + 1] = [1.0, 1.0, 2.0, 6.0, 24.0];

// Operator sugar for references.  Addition and subtraction truncate to the
// smaller operand order; multiplication likewise.  Division and the
// elementary functions stay as named fallible methods.
impl std::ops::Add for &Jet {
    type Output = Jet;
    fn add(self, rhs: &Jet) -> Jet {
        self.add_impl(rhs, 1.0)
    }
}

impl std::ops::Sub for &Jet {
    type Output = Jet;
    fn sub(self, rhs: &Jet) -> Jet {
        self.add_impl(rhs, -1.0)
    }
}

impl std::ops::Mul for &Jet {
    type Output = Jet;
    fn mul(self, rhs: &Jet) -> Jet {
        self.mul_impl(rhs)
    }
}

impl std::ops::Neg for &Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        self.scaled(-ONE)
    }
}

impl std::ops::Add for Jet {
    type Output = Jet;
    fn add(self, rhs: Jet) -> Jet {
        &self + &rhs
    }
}

impl std::ops::Sub for Jet {
    type Output = Jet;
    fn sub(self, rhs: Jet) -> Jet {
        &self - &rhs
    }
}

impl std::ops::Mul for Jet {
    type Output = Jet;
    fn mul(self, rhs: Jet) -> Jet {
        &self * &rhs
    }
}

impl Jet {
    /// c·f for a complex scalar.
    pub fn scaled(&self, c: Complex64) -> Jet {
        Jet {
            base: self.base,
            order: self.order,
            coeffs: self.coeffs.iter().map(|&x| c * x).collect(),
        }
    }

    /// f + c for a complex scalar.
    pub fn plus_scalar(&self, c: Complex64) -> Jet {
        let mut out = self.clone();
        out.coeffs[0] += c;
        out
    }
}

/// The four arithmetic operations for the strict [`jet_arith`] entry point.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ArithOp {
    Add,
    Sub,
    Mul,
    Div,
}

/// Strict binary arithmetic: both jets must share base *and* order.
/// The operator impls above are the permissive workhorse (they truncate to
/// the common order); this is the contract-checked API.
pub fn jet_arith(a: &Jet, b: &Jet, op: ArithOp) -> Result<Jet, JetError> {
    if a.base != b.base {
        return Err(JetError::BaseMismatch);
    }
    if a.order != b.order {
        return Err(JetError::OrderMismatch(a.order, b.order));
    }
    match op {
        ArithOp::Add => Ok(a + b),
        ArithOp::Sub => Ok(a - b),
        ArithOp::Mul => Ok(a * b),
        ArithOp::Div => a.div_impl(b),
    }
}

/// Elementary functions for [`jet_elementary`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ElementaryFn {
    Exp,
    Ln,
    Sqrt,
    Pow(Complex64),
}

/// Composition with an elementary function via its univariate Taylor series.
pub fn jet_elementary(a: &Jet, f: ElementaryFn) -> Result<Jet, JetError> {
    match f {
        ElementaryFn::Exp => Ok(a.exp()),
        ElementaryFn::Ln => a.ln(),
        ElementaryFn::Sqrt => a.sqrt(),
        ElementaryFn::Pow(c) => a.powc(c),
    }
}

/// Repeated partial derivative in one direction; the result has order
/// `a.order() − times`.
pub fn jet_partial(a: &Jet, direction: Var, times: usize) -> Result<Jet, JetError> {
    if times > a.order {
        return Err(JetError::InsufficientOrder { requested: times, stored: a.order });
    }
    let mut out = a.clone();
    for _ in 0..times {
        out = out.partial(direction)?;
    }
    Ok(out)
}
