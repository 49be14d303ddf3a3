//! Round-trip and homomorphism properties of the expression module:
//! parse ∘ print_canonical is the identity on ASTs (in literal normal form,
//! which is what the parser itself produces), and printed copies evaluate to
//! identical jets.

use num_complex::Complex64;
use proptest::prelude::*;
use przanowski::expr::{eval_jet, parse, print_canonical, Ast, ManifoldSpec};
use przanowski::jets::{Point4, Var};

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// Literals in printable normal form: nonnegative real part, and
/// nonnegative imaginary part when the real part vanishes.  (A negative
/// literal prints through a unary minus, which reparses as `Neg(lit)` — the
/// parser never produces negative literals either.)
fn arb_literal() -> impl Strategy<Value = Complex64> {
    (0.0..4.0f64, -4.0..4.0f64).prop_map(|(re, im)| {
        if re == 0.0 {
            c(0.0, im.abs())
        } else {
            c(re, im)
        }
    })
}

fn arb_exponent() -> impl Strategy<Value = Complex64> {
    prop_oneof![
        (-3i32..4).prop_map(|n| c(n as f64, 0.0)),
        (-2.0..2.0f64).prop_map(|x| c(x, 0.0)),
        (-2.0..2.0f64, -2.0..2.0f64).prop_map(|(re, im)| c(re, im)),
    ]
}

fn arb_ast() -> impl Strategy<Value = Ast> {
    let leaf = prop_oneof![
        Just(Ast::Coord(Var::W)),
        Just(Ast::Coord(Var::Z)),
        Just(Ast::Coord(Var::Wb)),
        Just(Ast::Coord(Var::Zb)),
        Just(Ast::Lam),
        Just(Ast::Eps),
        arb_literal().prop_map(Ast::Lit),
    ];
    leaf.prop_recursive(8, 96, 3, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone())
                .prop_map(|(a, b)| Ast::Add(Box::new(a), Box::new(b))),
            (inner.clone(), inner.clone())
                .prop_map(|(a, b)| Ast::Sub(Box::new(a), Box::new(b))),
            (inner.clone(), inner.clone())
                .prop_map(|(a, b)| Ast::Mul(Box::new(a), Box::new(b))),
            (inner.clone(), inner.clone())
                .prop_map(|(a, b)| Ast::Div(Box::new(a), Box::new(b))),
            (inner.clone(), arb_exponent()).prop_map(|(a, e)| Ast::Pow(Box::new(a), e)),
            inner.clone().prop_map(|a| Ast::Neg(Box::new(a))),
            inner.clone().prop_map(|a| Ast::Ln(Box::new(a))),
            inner.clone().prop_map(|a| Ast::Exp(Box::new(a))),
            inner.prop_map(|a| Ast::Sqrt(Box::new(a))),
        ]
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]
    #[test]
    fn parse_print_is_identity(ast in arb_ast()) {
        let printed = print_canonical(&ast);
        let reparsed = parse(&printed)
            .unwrap_or_else(|e| panic!("printed form `{printed}` failed to reparse: {e}"));
        prop_assert_eq!(reparsed, ast);
    }
}

#[test]
fn printed_manifolds_evaluate_identically() {
    // The flag-manifold K printed and reparsed gives equal jets at 20
    // quasirandom domain points (and the round family likewise).
    for name in ["cp2", "s4"] {
        let spec = ManifoldSpec::builtin(name).unwrap();
        let printed = print_canonical(&spec.k_expr);
        let reparsed = parse(&printed).unwrap();
        for i in 0..20 {
            // Low-discrepancy points: enough to cover the box deterministically.
            let t = i as f64 / 20.0;
            let u = [
                (t * 1.0) % 1.0,
                (t * 2.618) % 1.0,
                (t * 5.236) % 1.0,
                (t * 7.854) % 1.0,
            ];
            let at = spec.point_from_unit(u);
            let a = eval_jet(&spec.k_expr, at, 2).unwrap();
            let b = eval_jet(&reparsed, at, 2).unwrap();
            for (x, y) in a.coeffs().iter().zip(b.coeffs()) {
                assert!(
                    (x - y).norm() < 1e-14,
                    "{name}: printed copy diverges at {at:?}"
                );
            }
        }
    }
}

#[test]
fn structural_shapes_match_sources() {
    // The two closed-form K sources parse to the trees their algebra demands.
    let round = parse("(2/lam)*ln(w*wb/(1 - eps*w*wb*(1+z*zb)))").unwrap();
    match &round {
        Ast::Mul(lhs, rhs) => {
            assert!(matches!(**lhs, Ast::Div(_, _)));
            assert!(matches!(**rhs, Ast::Ln(_)));
        }
        other => panic!("unexpected shape {other:?}"),
    }
    // Unary minus binds tighter than `*`, so the leading minus attaches to
    // the (1/lam) factor and the top node is the multiplication.
    let flag = parse("-(1/lam)*ln((1 - eps*w*wb - eps*z*zb)*(z*zb - eps))").unwrap();
    match &flag {
        Ast::Mul(lhs, rhs) => {
            assert!(matches!(**lhs, Ast::Neg(_)));
            assert!(matches!(**rhs, Ast::Ln(_)));
        }
        other => panic!("unexpected shape {other:?}"),
    }
}

#[test]
fn eval_matches_pointwise_closure() {
    // Jets of order 0 agree with direct complex evaluation of the same
    // formula, at a generic non-real point (the four coordinates really are
    // independent inputs).
    let ast = parse("(w + 2*zb)^3 / (1 + z*wb) + sqrt(4 + w) * exp(z)").unwrap();
    let at = Point4::new(c(0.3, 0.7), c(-0.4, 0.2), c(0.9, -0.1), c(0.2, 0.5), -1.0);
    let direct = (at.w + 2.0 * at.zb).powu(3) / (1.0 + at.z * at.wb)
        + (4.0 + at.w).sqrt() * at.z.exp();
    let jet = eval_jet(&ast, at, 0).unwrap();
    assert!((jet.value() - direct).norm() < 1e-14);
}
