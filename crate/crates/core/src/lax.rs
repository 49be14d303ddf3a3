//! The Lax pair of the Przanowski system: two vector fields, polynomial in
//! an auxiliary fibre parameter ξ, that commute exactly when the equation
//! holds.  The commutator is computed with exact ξ-polynomial algebra
//! (coordinate derivatives via jets, ξ-derivatives symbolically) and checked
//! against the closed-form decomposition
//!
//!   [l₀, l₁] = A ∇_{01'} + B ∇_{11'} + (C₁ξ + C₂ξ² + C₃ξ³) ∂_ξ,
//!
//! in which A and B carry the combination K̃ + K_wK_w̄e^{ΛK} — the equation's
//! residual — as an overall factor.

use crate::expr::ManifoldSpec;
use crate::geometry::{GeomError, KDerivs, DEGENERACY_FLOOR, GAUGE_FLOOR};
use crate::jets::{Jet, JetError, Point4, Var};
use num_complex::Complex64;

/// Largest ξ-degree that can appear: the fields themselves stop at ξ², and
/// their commutator at ξ⁴.
pub const XI_DEGREE_BOUND: usize = 4;

/// Index of the ∂_ξ direction in [`XiPolyVectorField::dirs`]; the four
/// coordinate directions use the `Var` discriminants 0..=3.
pub const XI_DIR: usize = 4;

/// Polynomial in ξ whose coefficients are jets at a common base point.
#[derive(Clone, Debug)]
pub struct XiJetPoly {
    coeffs: [Jet; XI_DEGREE_BOUND + 1],
}

impl XiJetPoly {
    pub fn zero(base: Point4, order: usize) -> Self {
        XiJetPoly {
            coeffs: std::array::from_fn(|_| Jet::zero(base, order)),
        }
    }

    /// Builds a polynomial by placing jets at the given ξ-degrees.
    pub fn from_terms(base: Point4, order: usize, terms: &[(usize, Jet)]) -> Self {
        let mut p = XiJetPoly::zero(base, order);
        for (degree, jet) in terms {
            p.coeffs[*degree] = jet.clone();
        }
        p
    }

    pub fn coeff(&self, degree: usize) -> &Jet {
        &self.coeffs[degree]
    }

    /// The coefficient values at the base point, lowest degree first.
    pub fn values(&self) -> [Complex64; XI_DEGREE_BOUND + 1] {
        std::array::from_fn(|d| self.coeffs[d].value())
    }

    pub fn max_value_norm(&self) -> f64 {
        self.coeffs
            .iter()
            .map(|c| c.value().norm())
            .fold(0.0, f64::max)
    }

    fn add(&self, other: &Self) -> Self {
        XiJetPoly {
            coeffs: std::array::from_fn(|d| &self.coeffs[d] + &other.coeffs[d]),
        }
    }

    fn sub(&self, other: &Self) -> Self {
        XiJetPoly {
            coeffs: std::array::from_fn(|d| &self.coeffs[d] - &other.coeffs[d]),
        }
    }

    /// ξ-polynomial product.  Products beyond the degree bound would be
    /// silently wrong, so they are rejected outright.
    fn mul(&self, other: &Self) -> Self {
        let base = self.coeffs[0].base();
        let order = self.coeffs[0].order().min(other.coeffs[0].order());
        let mut out = XiJetPoly::zero(base, order);
        for i in 0..=XI_DEGREE_BOUND {
            for j in 0..=XI_DEGREE_BOUND {
                let product = &self.coeffs[i] * &other.coeffs[j];
                if i + j > XI_DEGREE_BOUND {
                    assert!(
                        product.value().norm() == 0.0,
                        "ξ-degree overflow: nonzero coefficient at degree {}",
                        i + j
                    );
                    continue;
                }
                let sum = &out.coeffs[i + j] + &product;
                out.coeffs[i + j] = sum;
            }
        }
        out
    }

    /// Coordinate partial applied to every coefficient jet.
    fn partial(&self, var: Var) -> Result<Self, JetError> {
        let mut coeffs = Vec::with_capacity(XI_DEGREE_BOUND + 1);
        for c in &self.coeffs {
            coeffs.push(c.partial(var)?);
        }
        Ok(XiJetPoly {
            coeffs: coeffs.try_into().unwrap(),
        })
    }

    /// Symbolic d/dξ.
    fn dxi(&self) -> Self {
        let base = self.coeffs[0].base();
        let order = self.coeffs[0].order();
        let mut out = XiJetPoly::zero(base, order);
        for d in 1..=XI_DEGREE_BOUND {
            out.coeffs[d - 1] = self.coeffs[d].scaled(Complex64::new(d as f64, 0.0));
        }
        out
    }
}

/// A vector field with ξ-polynomial coefficients: `dirs[0..=3]` multiply
/// ∂_w, ∂_z, ∂_w̄, ∂_z̄ (in `Var` order), `dirs[XI_DIR]` multiplies ∂_ξ.
#[derive(Clone, Debug)]
pub struct XiPolyVectorField {
    pub at: Point4,
    pub dirs: [XiJetPoly; 5],
}

impl XiPolyVectorField {
    /// All coefficient values: `table[direction][ξ-degree]`.
    pub fn value_table(&self) -> [[Complex64; XI_DEGREE_BOUND + 1]; 5] {
        std::array::from_fn(|i| self.dirs[i].values())
    }

    pub fn max_coefficient(&self) -> f64 {
        self.dirs
            .iter()
            .map(|p| p.max_value_norm())
            .fold(0.0, f64::max)
    }
}

/// The closed-form commutator decomposition: ξ-polynomials A, B multiplying
/// ∇_{01'} and ∇_{11'}, and the ∂_ξ coefficients C₁, C₂, C₃ of degrees 1–3.
#[derive(Clone, Debug)]
pub struct CommutatorDecomp {
    pub at: Point4,
    pub a: [Complex64; XI_DEGREE_BOUND + 1],
    pub b: [Complex64; XI_DEGREE_BOUND + 1],
    pub c1: Complex64,
    pub c2: Complex64,
    pub c3: Complex64,
}

impl CommutatorDecomp {
    pub fn max_coefficient(&self) -> f64 {
        self.a
            .iter()
            .chain(self.b.iter())
            .chain([&self.c1, &self.c2, &self.c3])
            .map(|c| c.norm())
            .fold(0.0, f64::max)
    }

    /// Expands the decomposition back onto the coordinate directions using
    /// the background's ∇_{01'}, ∇_{11'} coefficients, giving a value table
    /// directly comparable with [`XiPolyVectorField::value_table`].
    pub fn value_table(&self, kd: &KDerivs) -> [[Complex64; XI_DEGREE_BOUND + 1]; 5] {
        let tk = kd.tilde_k.value();
        let n01 = [-kd.kwzb.value() / tk, kd.kwwb.value() / tk];
        let n11 = [-kd.kzzb_c.value() / tk, kd.kzwb.value() / tk];
        let mut table = [[Complex64::new(0.0, 0.0); XI_DEGREE_BOUND + 1]; 5];
        for d in 0..=XI_DEGREE_BOUND {
            table[Var::Wb as usize][d] = self.a[d] * n01[0] + self.b[d] * n11[0];
            table[Var::Zb as usize][d] = self.a[d] * n01[1] + self.b[d] * n11[1];
        }
        table[XI_DIR][1] = self.c1;
        table[XI_DIR][2] = self.c2;
        table[XI_DIR][3] = self.c3;
        table
    }
}

/// `KDerivs` plus the reciprocal jets every Lax formula needs, with the
/// gauge (K_w, K_w̄) and degeneracy (K̃) floors enforced.
struct LaxIngredients {
    kd: KDerivs,
    inv_tk: Jet,
    inv_kw: Jet,
    inv_kwb: Jet,
}

fn lax_ingredients(k: &Jet, lambda: f64) -> Result<LaxIngredients, GeomError> {
    let kd = KDerivs::from_k(k, lambda)?;
    let tk_mag = kd.tilde_k.value().norm();
    if tk_mag < DEGENERACY_FLOOR {
        return Err(GeomError::DegenerateMetric(tk_mag));
    }
    let gauge_mag = kd.kw.value().norm().min(kd.kwb.value().norm());
    if gauge_mag < GAUGE_FLOOR {
        return Err(GeomError::GaugeSingularity(gauge_mag));
    }
    let inv_tk = kd.tilde_k.powi(-1)?;
    let inv_kw = kd.kw.powi(-1)?;
    let inv_kwb = kd.kwb.powi(-1)?;
    Ok(LaxIngredients {
        kd,
        inv_tk,
        inv_kw,
        inv_kwb,
    })
}

/// The ∂_ξ coefficient functions of the pair: l₀ carries ξx₀, l₁ carries
/// ξy₁ + ξ²y₂.
fn xi_row_coefficients(ing: &LaxIngredients) -> Result<(Jet, Jet, Jet), JetError> {
    let kd = &ing.kd;
    let x0 = &(&(&kd.tilde_k.partial(Var::W)? + &(&(&kd.exp_lam_k * &kd.kw) * &kd.kwwb))
        * &ing.inv_tk)
        - &(&kd.kwwb * &ing.inv_kwb);
    let y1 = &(&(&kd.tilde_k.partial(Var::Z)? + &(&(&kd.exp_lam_k * &kd.kw) * &kd.kzwb))
        * &ing.inv_tk)
        - &(&kd.kzwb * &ing.inv_kwb);
    let y2 = &ing.inv_kw - &(&(&kd.exp_lam_k * &kd.kwb) * &ing.inv_tk);
    Ok((x0, y1, y2))
}

/// The Lax fields for an arbitrary K-jet (order ≥ 3; order 4 leaves the
/// commutator coefficients with usable jets).  In ascending ξ-degree,
///
///   l₀ = ∂_w − ξ(K_{wz̄}/K̃)∂_w̄ + ξ(K_{ww̄}/K̃)∂_z̄
///        + ξ[(∂_wK̃ + e^{ΛK}K_wK_{ww̄})/K̃ − K_{ww̄}/K_w̄]∂_ξ,
///   l₁ = ∂_z − ξ((K_{zz̄} + (2/Λ)e^{ΛK})/K̃)∂_w̄ + ξ(K_{zw̄}/K̃)∂_z̄
///        + [ξ((∂_zK̃ + e^{ΛK}K_wK_{zw̄})/K̃ − K_{zw̄}/K_w̄)
///           + ξ²(1/K_w − e^{ΛK}K_w̄/K̃)]∂_ξ.
pub fn lax_fields_from_jet(
    k: &Jet,
    lambda: f64,
) -> Result<(XiPolyVectorField, XiPolyVectorField), GeomError> {
    let ing = lax_ingredients(k, lambda)?;
    let (x0, y1, y2) = xi_row_coefficients(&ing)?;
    let kd = &ing.kd;
    let inv_tk = &ing.inv_tk;
    let base = k.base();
    let order = k.order();
    let one = Jet::constant(base, order, Complex64::new(1.0, 0.0));
    let zero = || XiJetPoly::zero(base, order);

    let l0 = XiPolyVectorField {
        at: base,
        dirs: [
            XiJetPoly::from_terms(base, order, &[(0, one.clone())]),
            zero(),
            XiJetPoly::from_terms(base, order, &[(1, -&(&kd.kwzb * inv_tk))]),
            XiJetPoly::from_terms(base, order, &[(1, &kd.kwwb * inv_tk)]),
            XiJetPoly::from_terms(base, order, &[(1, x0)]),
        ],
    };

    let l1 = XiPolyVectorField {
        at: base,
        dirs: [
            zero(),
            XiJetPoly::from_terms(base, order, &[(0, one)]),
            XiJetPoly::from_terms(base, order, &[(1, -&(&kd.kzzb_c * inv_tk))]),
            XiJetPoly::from_terms(base, order, &[(1, &kd.kzwb * inv_tk)]),
            XiJetPoly::from_terms(base, order, &[(1, y1), (2, y2)]),
        ],
    };
    Ok((l0, l1))
}

/// The Lax fields of a manifold spec at a point, from the order-4 K-jet.
pub fn lax_fields_at(
    spec: &ManifoldSpec,
    at: Point4,
) -> Result<(XiPolyVectorField, XiPolyVectorField), GeomError> {
    let k = spec.k_jet(at, 4)?;
    lax_fields_from_jet(&k, spec.lambda)
}

/// [x, y] with exact ξ-polynomial algebra: coordinate derivatives hit the
/// coefficient jets, the ∂_ξ part acts symbolically on ξ-degrees.
pub fn lax_commutator(
    x: &XiPolyVectorField,
    y: &XiPolyVectorField,
) -> Result<XiPolyVectorField, JetError> {
    assert_eq!(x.at, y.at, "commutator of fields at different base points");
    let dirs = {
        let mut out: Vec<XiJetPoly> = Vec::with_capacity(5);
        for m in 0..5 {
            let mut acc = XiJetPoly::zero(x.at, x.dirs[m].coeff(0).order());
            for var in Var::ALL {
                let k = var as usize;
                acc = acc.add(&x.dirs[k].mul(&y.dirs[m].partial(var)?));
                acc = acc.sub(&y.dirs[k].mul(&x.dirs[m].partial(var)?));
            }
            acc = acc.add(&x.dirs[XI_DIR].mul(&y.dirs[m].dxi()));
            acc = acc.sub(&y.dirs[XI_DIR].mul(&x.dirs[m].dxi()));
            out.push(acc);
        }
        out
    };
    Ok(XiPolyVectorField {
        at: x.at,
        dirs: dirs.try_into().unwrap(),
    })
}

/// Applies a ξ-polynomial vector field to a ξ-polynomial scalar: coordinate
/// directions differentiate the coefficient jets, the ∂_ξ direction acts
/// symbolically on ξ-degrees.  This is how a Lax operator acts on candidate
/// twistor functions.
pub fn field_apply(field: &XiPolyVectorField, f: &XiJetPoly) -> Result<XiJetPoly, JetError> {
    let mut acc = XiJetPoly::zero(field.at, f.coeff(0).order().saturating_sub(1));
    for var in Var::ALL {
        acc = acc.add(&field.dirs[var as usize].mul(&f.partial(var)?));
    }
    acc = acc.add(&field.dirs[XI_DIR].mul(&f.dxi()));
    Ok(acc)
}

/// The closed-form commutator coefficients.  A and B carry the equation's
/// residual combination P = K̃ + K_wK_w̄e^{ΛK} as an overall factor:
///
///   A = (ξK_wK_{zw̄} − ξ²K_w̄) P / (K̃K_wK_w̄),   B = −ξK_{ww̄} P / (K̃K_w̄).
///
/// The ∂_ξ coefficients follow from the fields' own ξ-row functions — x₀
/// (from l₀) and y₁, y₂ (from l₁) as in [`lax_fields_from_jet`]:
///
///   C₁ = ∂_w y₁ − ∂_z x₀,
///   C₂ = ∂_w y₂ + ∇_{01'} y₁ − ∇_{11'} x₀ + x₀y₂,
///   C₃ = ∇_{01'} y₂ = −(1/K_w) ∇_{01'}(e^{ΛK}K_wK_w̄/K̃),
///
/// where the C₃ contraction uses ∇_{01'}K_w = 0.  Each C is a derivative of
/// the residual data, so A and B vanish pointwise wherever the pointwise
/// residual does while the C's need it to vanish to first order.
pub fn closed_form_commutator_from_jet(k: &Jet, lambda: f64) -> Result<CommutatorDecomp, GeomError> {
    let ing = lax_ingredients(k, lambda)?;
    let (x0, y1, y2) = xi_row_coefficients(&ing)?;
    let kd = &ing.kd;
    let inv_tk = &ing.inv_tk;

    let nabla_01 = |f: &Jet| -> Result<Jet, JetError> {
        Ok(inv_tk * &(&(-&(&kd.kwzb * &f.partial(Var::Wb)?)) + &(&kd.kwwb * &f.partial(Var::Zb)?)))
    };
    let nabla_11 = |f: &Jet| -> Result<Jet, JetError> {
        Ok(inv_tk
            * &(&(-&(&kd.kzzb_c * &f.partial(Var::Wb)?)) + &(&kd.kzwb * &f.partial(Var::Zb)?)))
    };

    let prz_comb = &kd.tilde_k + &(&(&kd.kw * &kd.kwb) * &kd.exp_lam_k);
    let shared = &(inv_tk * &ing.inv_kw) * &ing.inv_kwb;
    let a1 = (&(&(&kd.kw * &kd.kzwb) * &shared) * &prz_comb).value();
    let a2 = (-&(&(&kd.kwb * &shared) * &prz_comb)).value();
    let b1 = (-&(&(&(&kd.kwwb * inv_tk) * &ing.inv_kwb) * &prz_comb)).value();

    let c1 = (&y1.partial(Var::W)? - &x0.partial(Var::Z)?).value();
    let c2 = (&(&y2.partial(Var::W)? + &(&nabla_01(&y1)? - &nabla_11(&x0)?)) + &(&x0 * &y2))
        .value();
    let c3 = nabla_01(&y2)?.value();

    let zero = Complex64::new(0.0, 0.0);
    Ok(CommutatorDecomp {
        at: k.base(),
        a: [zero, a1, a2, zero, zero],
        b: [zero, b1, zero, zero, zero],
        c1,
        c2,
        c3,
    })
}

/// Closed-form commutator decomposition for a manifold spec at a point.
pub fn closed_form_commutator_at(
    spec: &ManifoldSpec,
    at: Point4,
) -> Result<CommutatorDecomp, GeomError> {
    let k = spec.k_jet(at, 4)?;
    closed_form_commutator_from_jet(&k, spec.lambda)
}

/// Expresses a directly computed commutator in the {∇_{01'}, ∇_{11'}, ξⁱ∂_ξ}
/// basis by solving, at each ξ-degree, the 2×2 system relating ∂_w̄/∂_z̄
/// components to the ∇ coefficients (its determinant is −1/K̃, so the solve
/// is exactly as regular as the metric).  The ∂_w, ∂_z components and the
/// ξ⁰/ξ⁴ parts of ∂_ξ are not represented in the basis; callers assert they
/// vanish.
pub fn decompose_commutator(
    kd: &KDerivs,
    comm: &XiPolyVectorField,
) -> Result<CommutatorDecomp, GeomError> {
    let tk = kd.tilde_k.value();
    if tk.norm() < DEGENERACY_FLOOR {
        return Err(GeomError::DegenerateMetric(tk.norm()));
    }
    // Columns of the 2×2 matrix: (∂_w̄, ∂_z̄) components of ∇_{01'}, ∇_{11'}.
    let m = [
        [-kd.kwzb.value() / tk, -kd.kzzb_c.value() / tk],
        [kd.kwwb.value() / tk, kd.kzwb.value() / tk],
    ];
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    let wb = comm.dirs[Var::Wb as usize].values();
    let zb = comm.dirs[Var::Zb as usize].values();
    let mut a = [Complex64::new(0.0, 0.0); XI_DEGREE_BOUND + 1];
    let mut b = a;
    for d in 0..=XI_DEGREE_BOUND {
        a[d] = (wb[d] * m[1][1] - zb[d] * m[0][1]) / det;
        b[d] = (zb[d] * m[0][0] - wb[d] * m[1][0]) / det;
    }
    let xi = comm.dirs[XI_DIR].values();
    Ok(CommutatorDecomp {
        at: comm.at,
        a,
        b,
        c1: xi[1],
        c2: xi[2],
        c3: xi[3],
    })
}
