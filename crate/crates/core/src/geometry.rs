//! Pointwise Przanowski geometry: null tetrad, dual vectors, self-dual
//! two-forms, primed connection, curvature spinors, Lee forms and the Hodge
//! star.
//!
//! Everything is derived from the order-4 jet of K at one point of the
//! complexified chart.  Coordinates are ordered (w, z, w̄, z̄); spinor
//! conventions are fixed once:
//!
//! * ε_{01} = ε_{0'1'} = ε^{01} = ε^{0'1'} = 1, lowering ψ_{A'} = ψ^{B'}ε_{B'A'},
//!   raising ψ^{A'} = ε^{A'B'}ψ_{B'};
//! * Σ^{A'B'} = ½ ε_{AB} e^{AA'} ∧ e^{BB'} (self-dual),
//!   Σ^{AB} = ½ ε_{A'B'} e^{AA'} ∧ e^{BB'} (anti-self-dual);
//! * the volume form is −K̃ dw∧dz∧dw̄∧dz̄, the sign fixed by requiring the
//!   Σ^{A'B'} to be +1-eigenforms of the star (the defining calibration —
//!   see the orientation test below).
//!
//! With these choices the Einstein condition reads R_{A'B'} = Λ Σ_{A'B'}
//! with Σ_{0'0'} = Σ^{1'1'}, Σ_{0'1'} = −Σ^{0'1'}, Σ_{1'1'} = Σ^{0'0'}.

use num_complex::Complex64;
use thiserror::Error;

use crate::expr::{ExprError, ManifoldSpec};
use crate::forms::{d1, wedge11, Form1, Form2, StarMetric};
use crate::jets::{Jet, JetError, Point4, Var};
use crate::linalg::{lu_factor, LinalgError};

/// Modulus of K̃ below which the metric counts as degenerate.
pub const DEGENERACY_FLOOR: f64 = 1e-12;

/// Modulus of K_w (or K_w̄) below which the tetrad gauge breaks down.
pub const GAUGE_FLOOR: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum GeomError {
    #[error("degenerate metric: |K̃| = {0:.3e} at the sample point")]
    DegenerateMetric(f64),
    #[error("gauge singularity: |K_w| or |K_w̄| = {0:.3e} at the sample point")]
    GaugeSingularity(f64),
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error(transparent)]
    Jet(#[from] JetError),
    #[error("structure-equation solve failed: {0}")]
    Structure(#[from] LinalgError),
}

/// Everything the tetrad gauge determines at one point, with jet-valued
/// components so downstream exterior derivatives are exact.
pub struct FrameData {
    pub at: Point4,
    pub lambda: f64,
    /// Order-4 jet of K.
    pub k: Jet,
    /// e^{ΛK} (order 4).
    pub exp_lam_k: Jet,
    /// First derivatives K_w, K_z, K_w̄, K_z̄ (order 3).
    pub k1: [Jet; 4],
    /// K̃ = K_{wz̄}K_{zw̄} − K_{ww̄}(K_{zz̄} + (2/Λ)e^{ΛK}) (order 2).
    pub tilde_k: Jet,
    /// Null tetrad e[A][A'] (components of order 2).
    pub e: [[Form1; 2]; 2],
    /// Dual vectors ∇[A][A'] as coordinate components (order 2).
    pub nabla: [[[Jet; 4]; 2]; 2],
    /// Self-dual two-forms Σ^{A'B'} (symmetric in A'B').
    pub sigma: [[Form2; 2]; 2],
    /// Anti-self-dual two-forms Σ^{AB} (symmetric in AB).
    pub sigma_unprimed: [[Form2; 2]; 2],
    /// Primed connection Γ_{A'B'} from the closed-form expressions
    /// (components of order 1).
    pub gamma_primed: [[Form1; 2]; 2],
    /// Metric components g_{μν} (order 2).
    pub g: [[Jet; 4]; 4],
    /// Inverse metric (order 2).
    pub g_inv: [[Jet; 4]; 4],
    /// Volume coefficient: vol = vol_coeff · dw∧dz∧dw̄∧dz̄, equal to −K̃.
    pub vol_coeff: Jet,
}

/// K-derivative bundle shared by the frame constructor and the operators
/// module: value-level shortcuts into the jet of K.
pub struct KDerivs {
    pub k: Jet,
    pub exp_lam_k: Jet,
    pub kw: Jet,
    pub kz: Jet,
    pub kwb: Jet,
    pub kzb: Jet,
    pub kwwb: Jet,
    pub kwzb: Jet,
    pub kzwb: Jet,
    pub kzzb: Jet,
    /// K_{zz̄} + (2/Λ)e^{ΛK}.
    pub kzzb_c: Jet,
    pub tilde_k: Jet,
}

impl KDerivs {
    /// Splits a K-jet (order ≥ 2) into the derivative jets the Przanowski
    /// formulas use.  Jets of order n yield first derivatives of order n−1
    /// and second derivatives of order n−2.
    pub fn from_k(k: &Jet, lambda: f64) -> Result<Self, JetError> {
        let kw = k.partial(Var::W)?;
        let kz = k.partial(Var::Z)?;
        let kwb = k.partial(Var::Wb)?;
        let kzb = k.partial(Var::Zb)?;
        let kwwb = kw.partial(Var::Wb)?;
        let kwzb = kw.partial(Var::Zb)?;
        let kzwb = kz.partial(Var::Wb)?;
        let kzzb = kz.partial(Var::Zb)?;
        let exp_lam_k = k.scaled(Complex64::new(lambda, 0.0)).exp();
        let c = exp_lam_k.scaled(Complex64::new(2.0 / lambda, 0.0));
        let kzzb_c = &kzzb + &c;
        let tilde_k = &(&kwzb * &kzwb) - &(&kwwb * &kzzb_c);
        Ok(KDerivs {
            k: k.clone(),
            exp_lam_k,
            kw,
            kz,
            kwb,
            kzb,
            kwwb,
            kwzb,
            kzwb,
            kzzb,
            kzzb_c,
            tilde_k,
        })
    }
}

impl FrameData {
    /// Builds the frame from an explicit order-4 K-jet.
    pub fn from_k_jet(k: Jet, lambda: f64) -> Result<Self, GeomError> {
        let at = k.base();
        let d = KDerivs::from_k(&k, lambda)?;
        let tk_mag = d.tilde_k.value().norm();
        if tk_mag < DEGENERACY_FLOOR {
            return Err(GeomError::DegenerateMetric(tk_mag));
        }

        let ord = d.kwwb.order(); // order 2 for an order-4 K
        let zero = Jet::zero(at, ord);
        let one = Jet::constant(at, ord, Complex64::new(1.0, 0.0));
        let t = |j: &Jet| j.truncated(ord);

        // Null tetrad: e^{00'} = dw, e^{10'} = dz,
        // e^{01'} = −K_{zw̄} dw̄ − (K_{zz̄} + (2/Λ)e^{ΛK}) dz̄,
        // e^{11'} = K_{ww̄} dw̄ + K_{wz̄} dz̄.
        let e00 = Form1 { c: [one.clone(), zero.clone(), zero.clone(), zero.clone()] };
        let e10 = Form1 { c: [zero.clone(), one.clone(), zero.clone(), zero.clone()] };
        let e01 = Form1 {
            c: [zero.clone(), zero.clone(), -&t(&d.kzwb), -&t(&d.kzzb_c)],
        };
        let e11 = Form1 { c: [zero.clone(), zero.clone(), t(&d.kwwb), t(&d.kwzb)] };
        let e = [[e00, e01], [e10, e11]];

        // Dual vectors (vf): ∇_{00'} = ∂_w, ∇_{10'} = ∂_z,
        // ∇_{01'} = (1/K̃)(−K_{wz̄} ∂_w̄ + K_{ww̄} ∂_z̄),
        // ∇_{11'} = (1/K̃)(−(K_{zz̄}+c) ∂_w̄ + K_{zw̄} ∂_z̄).
        let div = |num: &Jet| -> Result<Jet, GeomError> {
            Ok(crate::jets::jet_arith(&t(num), &t(&d.tilde_k), crate::jets::ArithOp::Div)?)
        };
        let nabla = [
            [
                [one.clone(), zero.clone(), zero.clone(), zero.clone()],
                [zero.clone(), zero.clone(), -&div(&d.kwzb)?, div(&d.kwwb)?],
            ],
            [
                [zero.clone(), one.clone(), zero.clone(), zero.clone()],
                [zero.clone(), zero.clone(), -&div(&d.kzzb_c)?, div(&d.kzwb)?],
            ],
        ];

        // Σ^{A'B'} = ½ ε_{AB} e^{AA'}∧e^{BB'} = ½(e^{0A'}∧e^{1B'} − e^{1A'}∧e^{0B'}),
        // Σ^{AB} = ½ ε_{A'B'} e^{AA'}∧e^{BB'} = ½(e^{A0'}∧e^{B1'} − e^{A1'}∧e^{B0'}).
        let half = Complex64::new(0.5, 0.0);
        let sigma: [[Form2; 2]; 2] = std::array::from_fn(|ap| {
            std::array::from_fn(|bp| {
                wedge11(&e[0][ap], &e[1][bp])
                    .sub(&wedge11(&e[1][ap], &e[0][bp]))
                    .scaled(half)
            })
        });
        let sigma_unprimed: [[Form2; 2]; 2] = std::array::from_fn(|a| {
            std::array::from_fn(|b| {
                wedge11(&e[a][0], &e[b][1])
                    .sub(&wedge11(&e[a][1], &e[b][0]))
                    .scaled(half)
            })
        });

        // Metric g = 2(K_{ww̄} dw dw̄ + K_{wz̄} dw dz̄ + K_{zw̄} dz dw̄
        //             + (K_{zz̄}+c) dz dz̄) — symmetric components.
        let mut g: [[Jet; 4]; 4] = std::array::from_fn(|_| std::array::from_fn(|_| zero.clone()));
        g[0][2] = t(&d.kwwb);
        g[2][0] = t(&d.kwwb);
        g[0][3] = t(&d.kwzb);
        g[3][0] = t(&d.kwzb);
        g[1][2] = t(&d.kzwb);
        g[2][1] = t(&d.kzwb);
        g[1][3] = t(&d.kzzb_c);
        g[3][1] = t(&d.kzzb_c);

        // Inverse: for the off-diagonal block form g = [[0, M], [Mᵀ, 0]]
        // with M = [[K_{ww̄}, K_{wz̄}], [K_{zw̄}, K_{zz̄}+c]], det M = −K̃.
        let minv = {
            let det = -&t(&d.tilde_k);
            let idiv = |num: &Jet| crate::jets::jet_arith(num, &det, crate::jets::ArithOp::Div);
            [
                [idiv(&t(&d.kzzb_c))?, idiv(&-&t(&d.kwzb))?],
                [idiv(&-&t(&d.kzwb))?, idiv(&t(&d.kwwb))?],
            ]
        };
        let mut g_inv: [[Jet; 4]; 4] =
            std::array::from_fn(|_| std::array::from_fn(|_| zero.clone()));
        for i in 0..2 {
            for j in 0..2 {
                g_inv[2 + i][j] = minv[i][j].clone(); // lower-left: M⁻¹
                g_inv[j][2 + i] = minv[i][j].clone(); // upper-right: (Mᵀ)⁻¹ = (M⁻¹)ᵀ
            }
        }

        let vol_coeff = -&t(&d.tilde_k);

        // Primed connection, closed form (uses Przanowski's equation):
        //   Γ_{0'0'} = −∇_{A0'}(ln K_w̄) e^{A1'},
        //   Γ_{1'1'} =  ∇_{A1'}(ln K_w)  e^{A0'},
        //   Γ_{0'1'} = ½[∇_{A0'}(ln K̃ − ln K_w̄) e^{A0'} + ∇_{A1'}(ln K_w) e^{A1'}].
        let kw_mag = d.kw.value().norm().min(d.kwb.value().norm());
        if kw_mag < GAUGE_FLOOR {
            return Err(GeomError::GaugeSingularity(kw_mag));
        }
        let ln_kw = d.kw.ln()?;
        let ln_kwb = d.kwb.ln()?;
        let ln_tk = d.tilde_k.ln()?;
        let apply = |aa: usize, app: usize, f: &Jet| -> Jet {
            nabla_apply_raw(&nabla, aa, app, f)
        };
        let mut gamma_00 = Form1::zero(at, ord - 1);
        let mut gamma_11 = Form1::zero(at, ord - 1);
        let mut gamma_01 = Form1::zero(at, ord - 1);
        for a in 0..2 {
            gamma_00 = gamma_00.sub(&form_scaled_trunc(&e[a][1], &apply(a, 0, &ln_kwb)));
            gamma_11 = gamma_11.add(&form_scaled_trunc(&e[a][0], &apply(a, 1, &ln_kw)));
            let first = apply(a, 0, &(&ln_tk - &ln_kwb));
            let second = apply(a, 1, &ln_kw);
            gamma_01 = gamma_01
                .add(&form_scaled_trunc(&e[a][0], &first).scaled(half))
                .add(&form_scaled_trunc(&e[a][1], &second).scaled(half));
        }
        let gamma_primed = [[gamma_00, gamma_01.clone()], [gamma_01, gamma_11]];

        Ok(FrameData {
            at,
            lambda,
            k: d.k,
            exp_lam_k: d.exp_lam_k,
            k1: [d.kw, d.kz, d.kwb, d.kzb],
            tilde_k: d.tilde_k,
            e,
            nabla,
            sigma,
            sigma_unprimed,
            gamma_primed,
            g,
            g_inv,
            vol_coeff,
        })
    }

    /// Directional derivative ∇_{AA'} f along the dual vectors.  The result
    /// order is one less than min(f, coefficient) order.
    pub fn nabla_apply(&self, a: usize, ap: usize, f: &Jet) -> Jet {
        nabla_apply_raw(&self.nabla, a, ap, f)
    }

    /// Hodge star against this frame's metric.
    pub fn star(&self) -> StarMetric<'_> {
        StarMetric { g_inv: &self.g_inv, vol: &self.vol_coeff }
    }

    /// ⟨∇_{AA'}, e^{BB'}⟩ pairing matrix entry, as a value.
    pub fn pairing(&self, a: usize, ap: usize, b: usize, bp: usize) -> Complex64 {
        self.e[b][bp]
            .contract_vector(&self.nabla[a][ap])
            .value()
    }
}

fn nabla_apply_raw(nabla: &[[[Jet; 4]; 2]; 2], a: usize, ap: usize, f: &Jet) -> Jet {
    let comps = &nabla[a][ap];
    let mut acc: Option<Jet> = None;
    for (mu, var) in [Var::W, Var::Z, Var::Wb, Var::Zb].into_iter().enumerate() {
        let term = &comps[mu] * &f.partial(var).expect("jet order ≥ 1");
        acc = Some(match acc {
            None => term,
            Some(prev) => &prev + &term,
        });
    }
    acc.expect("four coordinate directions")
}

/// One-form times a scalar jet, truncating consistently.
fn form_scaled_trunc(f: &Form1, s: &Jet) -> Form1 {
    f.jet_scaled(s)
}

/// Builds the frame from a manifold specification at a point (K evaluated to
/// order 4, the order curvature needs).
pub fn frame_at(spec: &ManifoldSpec, at: Point4) -> Result<FrameData, GeomError> {
    let k = spec.k_jet(at, 4)?;
    FrameData::from_k_jet(k, spec.lambda)
}

/// Which route computes the primed connection.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ConnectionMethod {
    /// The closed-form expressions (valid on Przanowski solutions).
    ClosedForm,
    /// Solve Cartan's first structure equation as a linear system for all
    /// six connection one-forms and return the primed triple — an
    /// independent oracle that never uses the field equation.
    StructureEquation,
}

/// The primed connection [Γ_{0'0'}, Γ_{0'1'}, Γ_{1'1'}] at a point.
pub fn connection_at(
    spec: &ManifoldSpec,
    at: Point4,
    method: ConnectionMethod,
) -> Result<[Form1; 3], GeomError> {
    let frame = frame_at(spec, at)?;
    match method {
        ConnectionMethod::ClosedForm => Ok([
            frame.gamma_primed[0][0].clone(),
            frame.gamma_primed[0][1].clone(),
            frame.gamma_primed[1][1].clone(),
        ]),
        ConnectionMethod::StructureEquation => {
            let full = structure_equation_connection(&frame)?;
            Ok([full.primed[0].clone(), full.primed[1].clone(), full.primed[2].clone()])
        }
    }
}

/// Both symmetric connection triples from the structure equation.
pub struct FullConnection {
    /// [Γ_{0'0'}, Γ_{0'1'}, Γ_{1'1'}].
    pub primed: [Form1; 3],
    /// [Γ_{00}, Γ_{01}, Γ_{11}].
    pub unprimed: [Form1; 3],
}

/// Solves Cartan's first structure equation
///   de^{AA'} + Γ^{A}{}_{B} ∧ e^{BA'} + Γ^{A'}{}_{B'} ∧ e^{AB'} = 0,
/// with Γ^{A}{}_{B} = ε^{AC}Γ_{CB} and symmetric Γ_{AB}, Γ_{A'B'}, as a
/// 24×24 linear system over jets (jet-valued unknowns: the solution carries
/// derivatives of the connection for free).
pub fn structure_equation_connection(frame: &FrameData) -> Result<FullConnection, GeomError> {
    let at = frame.at;
    let ord = frame.e[0][0].c[0].order() - 1; // order of de components
    let zero = Jet::zero(at, ord);

    // Unknown layout: 6 one-forms × 4 components.
    // Primed triple at slots 0..3 (0'0', 0'1', 1'1'), unprimed at 3..6.
    let unknowns = 24;
    let mut mat = vec![zero.clone(); unknowns * unknowns];
    let mut rhs = vec![zero.clone(); unknowns];

    // Symmetric-pair index: Γ_{XY} stored once; (0,0) → 0, (0,1)=(1,0) → 1,
    // (1,1) → 2.
    let sym = |x: usize, y: usize| x + y;

    // ε with upper indices: ε^{01} = 1.
    let eps_up = |x: usize, y: usize| -> f64 {
        match (x, y) {
            (0, 1) => 1.0,
            (1, 0) => -1.0,
            _ => 0.0,
        }
    };

    let mut row = 0;
    for a in 0..2 {
        for ap in 0..2 {
            let de = d1(&frame.e[a][ap]);
            for p in 0..6 {
                let (i, j) = crate::forms::PAIRS[p];
                // Equation: de_{ij} + Σ_B (ε^{AC}Γ_{CB})∧e^{BA'}|_{ij}
                //                   + Σ_{B'} (ε^{A'C'}Γ_{C'B'})∧e^{AB'}|_{ij} = 0.
                // (θ∧e)_{ij} = θ_i e_j − θ_j e_i is linear in θ components.
                rhs[row] = -&de.c[p];
                // Both Γ∧e terms contribute θ_i e_j − θ_j e_i, linear in the
                // unknown components θ_μ; two index pairs can hit the same
                // symmetric slot, so accumulate.
                let mut accumulate = |col_base: usize, e_form: &Form1, coeff: f64| {
                    let scale = Complex64::new(coeff, 0.0);
                    let at_i = row * unknowns + col_base + i;
                    let at_j = row * unknowns + col_base + j;
                    let add_i = &mat[at_i] + &e_form.c[j].truncated(ord).scaled(scale);
                    mat[at_i] = add_i;
                    let sub_j = &mat[at_j] - &e_form.c[i].truncated(ord).scaled(scale);
                    mat[at_j] = sub_j;
                };
                // Unprimed term: coefficient of Γ_{CB, μ}.
                for c3 in 0..2 {
                    for b in 0..2 {
                        let coeff = eps_up(a, c3);
                        if coeff != 0.0 {
                            accumulate((3 + sym(c3, b)) * 4, &frame.e[b][ap], coeff);
                        }
                    }
                }
                // Primed term.
                for cp in 0..2 {
                    for bp in 0..2 {
                        let coeff = eps_up(ap, cp);
                        if coeff != 0.0 {
                            accumulate(sym(cp, bp) * 4, &frame.e[a][bp], coeff);
                        }
                    }
                }
                row += 1;
            }
        }
    }
    debug_assert_eq!(row, unknowns);

    let solution = lu_factor(mat, unknowns)?.solve(&rhs);
    let pick = |slot: usize| -> Form1 {
        Form1 { c: std::array::from_fn(|mu| solution[slot * 4 + mu].clone()) }
    };
    Ok(FullConnection {
        primed: [pick(0), pick(1), pick(2)],
        unprimed: [pick(3), pick(4), pick(5)],
    })
}

/// Curvature spinors and their decomposition in the Σ-basis.
pub struct CurvatureDecomp {
    /// R_{A'B'} as value-level two-forms, indexed [0'0', 0'1', 1'1'].
    pub r_primed: [Form2; 3],
    /// Scalar curvature R (equal to 12Λ on Einstein backgrounds).
    pub scalar_r: Complex64,
    /// Self-dual Weyl spinor components (W_{0'0'0'0'}, …, W_{1'1'1'1'}).
    pub weyl_sd: [Complex64; 5],
    /// Trace-free Ricci spinor Φ_{A'B'CD}: rows (0'0', 0'1', 1'1'),
    /// columns (00, 01, 11).
    pub phi: [[Complex64; 3]; 3],
    /// max‖R_{A'B'} − ΛΣ_{A'B'}‖ / max‖ΛΣ‖ over the three spinor indices.
    pub einstein_residual: f64,
    /// How well the six-form basis reproduces R_{A'B'} (rounding-level on
    /// nondegenerate frames; a consistency diagnostic, not a residual).
    pub basis_residual: f64,
}

/// Curvature from the jet-valued closed-form connection:
/// R_{0'0'} = dΓ_{0'0'} + 2Γ_{0'0'}∧Γ_{0'1'},
/// R_{0'1'} = dΓ_{0'1'} + Γ_{0'0'}∧Γ_{1'1'},
/// R_{1'1'} = dΓ_{1'1'} + 2Γ_{0'1'}∧Γ_{1'1'}.
pub fn curvature_at(spec: &ManifoldSpec, at: Point4) -> Result<CurvatureDecomp, GeomError> {
    let frame = frame_at(spec, at)?;
    curvature_from_frame(&frame)
}

pub fn curvature_from_frame(frame: &FrameData) -> Result<CurvatureDecomp, GeomError> {
    let g00 = &frame.gamma_primed[0][0];
    let g01 = &frame.gamma_primed[0][1];
    let g11 = &frame.gamma_primed[1][1];
    let two = Complex64::new(2.0, 0.0);
    let r00 = d1(g00).add(&wedge11(g00, g01).scaled(two));
    let r01 = d1(g01).add(&wedge11(g00, g11));
    let r11 = d1(g11).add(&wedge11(g01, g11).scaled(two));
    let r_primed = [r00, r01, r11];

    // Decompose each R in the basis {Σ^{0'0'}, Σ^{0'1'}, Σ^{1'1'},
    // Σ^{00}, Σ^{01}, Σ^{11}} by solving a 6×6 per point.
    let basis: [&Form2; 6] = [
        &frame.sigma[0][0],
        &frame.sigma[0][1],
        &frame.sigma[1][1],
        &frame.sigma_unprimed[0][0],
        &frame.sigma_unprimed[0][1],
        &frame.sigma_unprimed[1][1],
    ];
    let mut mat = vec![Complex64::new(0.0, 0.0); 36];
    for (col, b) in basis.iter().enumerate() {
        for (rowc, v) in b.values().into_iter().enumerate() {
            mat[rowc * 6 + col] = v;
        }
    }
    let lu = lu_factor(mat, 6)?;
    let mut p = [[Complex64::new(0.0, 0.0); 6]; 3];
    let mut basis_residual = 0.0_f64;
    for (idx, r) in r_primed.iter().enumerate() {
        let rv = r.values();
        let coeffs = lu.solve(&rv);
        // Reconstruction check.
        for comp in 0..6 {
            let mut acc = Complex64::new(0.0, 0.0);
            for (col, b) in basis.iter().enumerate() {
                acc += coeffs[col] * b.values()[comp];
            }
            let scale = rv.iter().map(|x| x.norm()).fold(1.0, f64::max);
            basis_residual = basis_residual.max((acc - rv[comp]).norm() / scale);
        }
        p[idx].copy_from_slice(&coeffs);
    }

    // With R_{A'B'} = W_{A'B'C'D'}Σ^{C'D'} + (R/12)Σ_{A'B'} + Φ_{A'B'CD}Σ^{CD}
    // and the lowering Σ_{0'0'} = Σ^{1'1'}, Σ_{0'1'} = −Σ^{0'1'},
    // Σ_{1'1'} = Σ^{0'0'}:
    //   p[0'0'] = (W0, 2W1, W2 + R/12 | Φ_{0'0'··}),
    //   p[0'1'] = (W1, 2W2 − R/12, W3 | Φ_{0'1'··}),
    //   p[1'1'] = (W2 + R/12, 2W3, W4 | Φ_{1'1'··}).
    let a = (p[0][2] + p[2][0]) * 0.5;
    let b = p[1][1];
    let r_over_12 = (2.0 * a - b) / 3.0;
    let w2 = (a + b) / 3.0;
    let w1 = (p[0][1] * 0.5 + p[1][0]) * 0.5;
    let w3 = (p[1][2] + p[2][1] * 0.5) * 0.5;
    let weyl_sd = [p[0][0], w1, w2, w3, p[2][2]];
    let phi: [[Complex64; 3]; 3] =
        std::array::from_fn(|i| [p[i][3], p[i][4] * 0.5, p[i][5]]);

    // Direct Einstein residual on two-form components.
    let lam = Complex64::new(frame.lambda, 0.0);
    let sigma_lowered = [
        frame.sigma[1][1].scaled(lam),
        frame.sigma[0][1].scaled(-lam),
        frame.sigma[0][0].scaled(lam),
    ];
    let scale = sigma_lowered
        .iter()
        .map(|s| s.value_max())
        .fold(0.0, f64::max)
        .max(1e-300);
    let einstein_residual = r_primed
        .iter()
        .zip(sigma_lowered.iter())
        .map(|(r, s)| r.sub(s).value_max())
        .fold(0.0, f64::max)
        / scale;

    Ok(CurvatureDecomp {
        r_primed,
        scalar_r: r_over_12 * 12.0,
        weyl_sd,
        phi,
        einstein_residual,
        basis_residual,
    })
}

/// The one-forms A and B defined by
///   dΣ^{0'0'} = (B−A)∧Σ^{0'0'},  dΣ^{0'1'} = B∧Σ^{0'1'},
///   dΣ^{1'1'} = (B+A)∧Σ^{1'1'},
/// in closed form:
///   A = ∂(ln K̃ − 2 ln K_w̄) + ∂̄(2 ln K_w),
///   B = 2∂(ln K_w̄) + 2∂̄(ln K_w).
///
/// The B here is the unique one-form satisfying its defining relation
/// (wedging with the nondegenerate Σ^{0'1'} is injective on one-forms in
/// four dimensions); the relation is enforced by the tests below at 1e-10.
pub fn lee_forms_at(spec: &ManifoldSpec, at: Point4) -> Result<(Form1, Form1), GeomError> {
    let frame = frame_at(spec, at)?;
    lee_forms_from_frame(&frame)
}

pub fn lee_forms_from_frame(frame: &FrameData) -> Result<(Form1, Form1), GeomError> {
    let kw = &frame.k1[0];
    let kwb = &frame.k1[2];
    let kw_mag = kw.value().norm().min(kwb.value().norm());
    if kw_mag < GAUGE_FLOOR {
        return Err(GeomError::GaugeSingularity(kw_mag));
    }
    let ln_kw = kw.ln()?;
    let ln_kwb = kwb.ln()?;
    let ln_tk = frame.tilde_k.ln()?;

    // ∂ keeps the (dw, dz) components, ∂̄ the (dw̄, dz̄) ones.
    let two = Complex64::new(2.0, 0.0);
    let a_hol = &ln_tk - &ln_kwb.scaled(two); // ∂(ln K̃ − 2 ln K_w̄)
    let a = Form1 {
        c: [
            a_hol.partial(Var::W)?,
            a_hol.partial(Var::Z)?,
            ln_kw.partial(Var::Wb)?.scaled(two),
            ln_kw.partial(Var::Zb)?.scaled(two),
        ],
    };
    let b = Form1 {
        c: [
            ln_kwb.partial(Var::W)?.scaled(two),
            ln_kwb.partial(Var::Z)?.scaled(two),
            ln_kw.partial(Var::Wb)?.scaled(two),
            ln_kw.partial(Var::Zb)?.scaled(two),
        ],
    };
    Ok((a, b))
}
