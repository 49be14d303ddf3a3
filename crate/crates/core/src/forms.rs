//! Exterior algebra on the complexified chart, with jet coefficients.
//!
//! Forms are stored on the sorted coordinate basis in the order
//! (dw, dz, dw̄, dz̄) = (dx⁰, dx¹, dx², dx³): a two-form keeps its six
//! components on ordered pairs, a three-form its four components on ordered
//! triples, a four-form the single coefficient of dw∧dz∧dw̄∧dz̄.  Components
//! are jets, so the exterior derivative is exact (it differentiates the
//! component jets, dropping their order by one), and a plain value-level
//! form is simply one whose component jets have order 0.
//!
//! The Hodge star takes the inverse metric and the volume coefficient as
//! explicit jet arguments; the geometry module supplies them.  With the
//! volume form e·dw∧dz∧dw̄∧dz̄ satisfying e² = det g, the star squares to
//! (−1)^k(4−k) — the (complexified) Riemannian convention.

use num_complex::Complex64;

use crate::jets::{Jet, Point4, Var};

/// Ordered index pairs for two-form components.
pub const PAIRS: [(usize, usize); 6] = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)];

/// Ordered index triples for three-form components.
pub const TRIPLES: [(usize, usize, usize); 4] = [(0, 1, 2), (0, 1, 3), (0, 2, 3), (1, 2, 3)];

/// Position of the ordered pair (i, j), i < j, in [`PAIRS`].
pub fn pair_index(i: usize, j: usize) -> usize {
    PAIRS.iter().position(|&p| p == (i, j)).expect("ordered pair")
}

const VARS: [Var; 4] = [Var::W, Var::Z, Var::Wb, Var::Zb];

/// A one-form Σ aμ dxᵘ with jet coefficients.
#[derive(Clone, Debug)]
pub struct Form1 {
    pub c: [Jet; 4],
}

/// A two-form Σ_{i<j} F_{ij} dxⁱ∧dxʲ.
#[derive(Clone, Debug)]
pub struct Form2 {
    pub c: [Jet; 6],
}

/// A three-form on ordered triples.
#[derive(Clone, Debug)]
pub struct Form3 {
    pub c: [Jet; 4],
}

/// A four-form t · dw∧dz∧dw̄∧dz̄.
#[derive(Clone, Debug)]
pub struct Form4 {
    pub c: Jet,
}

fn zeros<const N: usize>(base: Point4, order: usize) -> [Jet; N] {
    std::array::from_fn(|_| Jet::zero(base, order))
}

macro_rules! componentwise {
    ($ty:ident, $n:expr) => {
        impl $ty {
            pub fn zero(base: Point4, order: usize) -> Self {
                $ty { c: zeros::<$n>(base, order) }
            }

            pub fn add(&self, rhs: &Self) -> Self {
                $ty { c: std::array::from_fn(|i| &self.c[i] + &rhs.c[i]) }
            }

            pub fn sub(&self, rhs: &Self) -> Self {
                $ty { c: std::array::from_fn(|i| &self.c[i] - &rhs.c[i]) }
            }

            pub fn scaled(&self, s: Complex64) -> Self {
                $ty { c: std::array::from_fn(|i| self.c[i].scaled(s)) }
            }

            /// Multiply every component by a scalar jet.
            pub fn jet_scaled(&self, s: &Jet) -> Self {
                $ty { c: std::array::from_fn(|i| &self.c[i] * s) }
            }

            /// Component values (the order-0 parts).
            pub fn values(&self) -> [Complex64; $n] {
                std::array::from_fn(|i| self.c[i].value())
            }

            /// Largest component-value modulus.
            pub fn value_max(&self) -> f64 {
                self.values().iter().map(|v| v.norm()).fold(0.0, f64::max)
            }
        }
    };
}

componentwise!(Form1, 4);
componentwise!(Form2, 6);
componentwise!(Form3, 4);

impl Form4 {
    pub fn zero(base: Point4, order: usize) -> Self {
        Form4 { c: Jet::zero(base, order) }
    }

    pub fn add(&self, rhs: &Self) -> Self {
        Form4 { c: &self.c + &rhs.c }
    }

    pub fn sub(&self, rhs: &Self) -> Self {
        Form4 { c: &self.c - &rhs.c }
    }

    pub fn scaled(&self, s: Complex64) -> Self {
        Form4 { c: self.c.scaled(s) }
    }

    pub fn value(&self) -> Complex64 {
        self.c.value()
    }
}

impl Form1 {
    /// One-form from a basis index: dxᵘ.
    pub fn coordinate(base: Point4, order: usize, mu: usize) -> Self {
        let mut f = Form1::zero(base, order);
        f.c[mu] = Jet::constant(base, order, Complex64::new(1.0, 0.0));
        f
    }

    /// Full antisymmetric matrix view is not needed for one-forms, but the
    /// pairing with a vector (components Vᵘ) is: V ⌟ a = Σ Vᵘ aμ.
    pub fn contract_vector(&self, v: &[Jet; 4]) -> Jet {
        let mut acc = &v[0] * &self.c[0];
        for mu in 1..4 {
            acc = &acc + &(&v[mu] * &self.c[mu]);
        }
        acc
    }
}

impl Form2 {
    /// Component F_{ij} for arbitrary index order (0 on the diagonal).
    pub fn component(&self, i: usize, j: usize) -> Jet {
        use std::cmp::Ordering;
        match i.cmp(&j) {
            Ordering::Less => self.c[pair_index(i, j)].clone(),
            Ordering::Greater => -&self.c[pair_index(j, i)],
            Ordering::Equal => self.c[0].zero_jet(),
        }
    }

    /// (V ⌟ F)_ν = Vᵘ F_{μν}.
    pub fn contract_vector(&self, v: &[Jet; 4]) -> Form1 {
        let base = self.c[0].base();
        let order = self.c[0].order().min(v[0].order());
        let mut out = Form1::zero(base, order);
        for nu in 0..4 {
            let mut acc = Jet::zero(base, order);
            for mu in 0..4 {
                if mu != nu {
                    acc = &acc + &(&v[mu] * &self.component(mu, nu));
                }
            }
            out.c[nu] = acc;
        }
        out
    }
}

impl Jet {
    /// A zero jet with this jet's base and order (used as a neutral element).
    pub fn zero_jet(&self) -> Jet {
        Jet::zero(self.base(), self.order())
    }
}

// ---------------------------------------------------------------------------
// Wedge products
// ---------------------------------------------------------------------------

/// a ∧ b for one-forms: (a∧b)_{ij} = aᵢbⱼ − aⱼbᵢ.
pub fn wedge11(a: &Form1, b: &Form1) -> Form2 {
    Form2 {
        c: std::array::from_fn(|p| {
            let (i, j) = PAIRS[p];
            &(&a.c[i] * &b.c[j]) - &(&a.c[j] * &b.c[i])
        }),
    }
}

/// a ∧ F for a one-form and a two-form.
pub fn wedge12(a: &Form1, f: &Form2) -> Form3 {
    Form3 {
        c: std::array::from_fn(|t| {
            let (i, j, k) = TRIPLES[t];
            let t1 = &a.c[i] * &f.c[pair_index(j, k)];
            let t2 = &a.c[j] * &f.c[pair_index(i, k)];
            let t3 = &a.c[k] * &f.c[pair_index(i, j)];
            &(&t1 - &t2) + &t3
        }),
    }
}

/// F ∧ G for two-forms (a four-form).
pub fn wedge22(f: &Form2, g: &Form2) -> Form4 {
    // Pairs and their complements: (01)(23), (02)(13), (03)(12) with signs
    // +, −, + in both orders.
    let term = |p: usize, q: usize| &f.c[p] * &g.c[q];
    let mut acc = term(0, 5);
    acc = &acc - &term(1, 4);
    acc = &acc + &term(2, 3);
    acc = &acc + &term(3, 2);
    acc = &acc - &term(4, 1);
    acc = &acc + &term(5, 0);
    Form4 { c: acc }
}

/// a ∧ T for a one-form and a three-form.
pub fn wedge13(a: &Form1, t: &Form3) -> Form4 {
    // dxᵘ ∧ dx^{complement of μ} = (−1)^μ vol-basis form.
    let mut acc = &a.c[0] * &t.c[3];
    acc = &acc - &(&a.c[1] * &t.c[2]);
    acc = &acc + &(&a.c[2] * &t.c[1]);
    acc = &acc - &(&a.c[3] * &t.c[0]);
    Form4 { c: acc }
}

// ---------------------------------------------------------------------------
// Exterior derivative (component jets lose one order)
// ---------------------------------------------------------------------------

/// d of a scalar: (df)_μ = ∂_μ f.
pub fn d0(f: &Jet) -> Form1 {
    Form1 { c: std::array::from_fn(|mu| f.partial(VARS[mu]).expect("jet order ≥ 1")) }
}

/// d of a one-form: (da)_{ij} = ∂ᵢaⱼ − ∂ⱼaᵢ.
pub fn d1(a: &Form1) -> Form2 {
    Form2 {
        c: std::array::from_fn(|p| {
            let (i, j) = PAIRS[p];
            let di_aj = a.c[j].partial(VARS[i]).expect("jet order ≥ 1");
            let dj_ai = a.c[i].partial(VARS[j]).expect("jet order ≥ 1");
            &di_aj - &dj_ai
        }),
    }
}

/// d of a two-form.
pub fn d2(f: &Form2) -> Form3 {
    Form3 {
        c: std::array::from_fn(|t| {
            let (i, j, k) = TRIPLES[t];
            let t1 = f.c[pair_index(j, k)].partial(VARS[i]).expect("jet order ≥ 1");
            let t2 = f.c[pair_index(i, k)].partial(VARS[j]).expect("jet order ≥ 1");
            let t3 = f.c[pair_index(i, j)].partial(VARS[k]).expect("jet order ≥ 1");
            &(&t1 - &t2) + &t3
        }),
    }
}

/// d of a three-form.
pub fn d3(t: &Form3) -> Form4 {
    let mut acc = t.c[3].partial(VARS[0]).expect("jet order ≥ 1");
    acc = &acc - &t.c[2].partial(VARS[1]).expect("jet order ≥ 1");
    acc = &acc + &t.c[1].partial(VARS[2]).expect("jet order ≥ 1");
    acc = &acc - &t.c[0].partial(VARS[3]).expect("jet order ≥ 1");
    Form4 { c: acc }
}

// ---------------------------------------------------------------------------
// Hodge star
// ---------------------------------------------------------------------------

/// Metric data the star needs: the inverse metric gᵘᵛ and the volume
/// coefficient e with vol = e·dw∧dz∧dw̄∧dz̄ and e² = det g.
pub struct StarMetric<'a> {
    pub g_inv: &'a [[Jet; 4]; 4],
    pub vol: &'a Jet,
}

impl StarMetric<'_> {
    fn raise1(&self, a: &Form1) -> [Jet; 4] {
        std::array::from_fn(|mu| {
            let mut acc = &self.g_inv[mu][0] * &a.c[0];
            for al in 1..4 {
                acc = &acc + &(&self.g_inv[mu][al] * &a.c[al]);
            }
            acc
        })
    }

    /// ∗ on one-forms: (∗a)_{νρσ} = e · ε_{μνρσ} aᵘ.
    pub fn star1(&self, a: &Form1) -> Form3 {
        let up = self.raise1(a);
        // Triple t omits index m = 3 − t; ε_{m,(triple)} = (−1)^m·(−1)^? —
        // worked out once: signs (−1, +1, −1, +1) over t = 0..3.
        const SGN: [f64; 4] = [-1.0, 1.0, -1.0, 1.0];
        Form3 {
            c: std::array::from_fn(|t| {
                let m = 3 - t;
                (&up[m] * self.vol).scaled(Complex64::new(SGN[t], 0.0))
            }),
        }
    }

    /// ∗ on two-forms: (∗F)_{ρσ} = e · ε_{abρσ} F^{ab} with (ab) the ordered
    /// complement of (ρσ).
    pub fn star2(&self, f: &Form2) -> Form2 {
        // F^{ab} = g^{aα} g^{bβ} F_{αβ}.
        let raised: [Jet; 6] = std::array::from_fn(|p| {
            let (a, b) = PAIRS[p];
            let base = f.c[0].base();
            let ord = f.c[0].order().min(self.g_inv[0][0].order());
            let mut acc = Jet::zero(base, ord);
            for al in 0..4 {
                for be in 0..4 {
                    if al == be {
                        continue;
                    }
                    acc = &acc + &(&(&self.g_inv[a][al] * &self.g_inv[b][be]) * &f.component(al, be));
                }
            }
            acc
        });
        // Complement pair index is 5 − p; ε_{a b ρ σ} over target pairs:
        // (+1, −1, +1, +1, −1, +1).
        const SGN: [f64; 6] = [1.0, -1.0, 1.0, 1.0, -1.0, 1.0];
        Form2 {
            c: std::array::from_fn(|p| {
                (&raised[5 - p] * self.vol).scaled(Complex64::new(SGN[p], 0.0))
            }),
        }
    }

    /// ∗ on three-forms: (∗T)_ν = e · ε_{abcν} T^{abc} with (abc) the
    /// ordered complement of ν.
    pub fn star3(&self, t: &Form3) -> Form1 {
        // T^{abc} for the ordered triple omitting ν: raise all three indices
        // against the full antisymmetric tensor built from the triple
        // components.
        let comp = |i: usize, j: usize, k: usize| -> Jet {
            // Antisymmetric tensor component T_{ijk} from sorted storage.
            let mut idx = [i, j, k];
            let mut sign = 1.0;
            // Tiny bubble sort tracking parity.
            for a in 0..2 {
                for b in 0..2 - a {
                    if idx[b] > idx[b + 1] {
                        idx.swap(b, b + 1);
                        sign = -sign;
                    }
                }
            }
            if idx[0] == idx[1] || idx[1] == idx[2] {
                return t.c[0].zero_jet();
            }
            let pos = TRIPLES
                .iter()
                .position(|&tr| tr == (idx[0], idx[1], idx[2]))
                .expect("sorted triple");
            t.c[pos].scaled(Complex64::new(sign, 0.0))
        };
        const SGN: [f64; 4] = [-1.0, 1.0, -1.0, 1.0];
        Form1 {
            c: std::array::from_fn(|nu| {
                let (a, b, c3) = TRIPLES[3 - nu];
                let base = t.c[0].base();
                let ord = t.c[0].order().min(self.g_inv[0][0].order());
                let mut acc = Jet::zero(base, ord);
                for al in 0..4 {
                    for be in 0..4 {
                        for ga in 0..4 {
                            let tc = comp(al, be, ga);
                            if tc.value().norm() == 0.0 && tc.coeffs().iter().all(|x| x.norm() == 0.0) {
                                continue;
                            }
                            let gg = &(&self.g_inv[a][al] * &self.g_inv[b][be]) * &self.g_inv[c3][ga];
                            acc = &acc + &(&gg * &tc);
                        }
                    }
                }
                (&acc * self.vol).scaled(Complex64::new(SGN[nu], 0.0))
            }),
        }
    }

    /// ∗ on four-forms: ∗(t·dw∧dz∧dw̄∧dz̄) = t / e.
    pub fn star4(&self, t: &Form4) -> Jet {
        crate::jets::jet_arith(
            &t.c.truncated(t.c.order().min(self.vol.order())),
            &self.vol.truncated(t.c.order().min(self.vol.order())),
            crate::jets::ArithOp::Div,
        )
        .expect("nondegenerate volume form")
    }

    /// ∗ on scalars: f · vol.
    pub fn star0(&self, f: &Jet) -> Form4 {
        Form4 { c: f * self.vol }
    }
}
