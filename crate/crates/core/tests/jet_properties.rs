//! Property tests for the jet ring: field axioms hold coefficientwise, the
//! Leibniz rule connects arithmetic to differentiation, and every stored
//! coefficient of a composite jet agrees with a finite-difference probe of
//! the same function.

use num_complex::Complex64;
use proptest::prelude::*;
use przanowski::jets::{
    coeff_count, jet_partial, monomial_at, Jet, Point4, Var, MAX_ORDER,
};

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn max_coeff_diff(a: &Jet, b: &Jet) -> f64 {
    a.coeffs()
        .iter()
        .zip(b.coeffs())
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}

prop_compose! {
    fn arb_complex()(re in -1.0..1.0f64, im in -1.0..1.0f64) -> Complex64 {
        c(re, im)
    }
}

prop_compose! {
    /// A jet with unit-scale random coefficients at a fixed base point.
    fn arb_jet(order: usize)(
        coeffs in prop::collection::vec(arb_complex(), coeff_count(order))
    ) -> Jet {
        let base = Point4::new(c(0.4, 0.1), c(-0.3, 0.2), c(0.4, -0.1), c(-0.3, -0.2), 1.0);
        Jet::from_coeffs(base, order, coeffs).unwrap()
    }
}

proptest! {
    #[test]
    fn addition_commutes_and_associates(
        a in arb_jet(3), b in arb_jet(3), d in arb_jet(3)
    ) {
        prop_assert!(max_coeff_diff(&(&a + &b), &(&b + &a)) < 1e-12);
        let left = &(&a + &b) + &d;
        let right = &a + &(&b + &d);
        prop_assert!(max_coeff_diff(&left, &right) < 1e-12);
    }

    #[test]
    fn multiplication_commutes_and_associates(
        a in arb_jet(3), b in arb_jet(3), d in arb_jet(3)
    ) {
        prop_assert!(max_coeff_diff(&(&a * &b), &(&b * &a)) < 1e-12);
        let left = &(&a * &b) * &d;
        let right = &a * &(&b * &d);
        prop_assert!(max_coeff_diff(&left, &right) < 1e-12);
    }

    #[test]
    fn multiplication_distributes(
        a in arb_jet(4), b in arb_jet(4), d in arb_jet(4)
    ) {
        let left = &a * &(&b + &d);
        let right = &(&a * &b) + &(&a * &d);
        prop_assert!(max_coeff_diff(&left, &right) < 1e-12);
    }

    #[test]
    fn leibniz_rule_every_direction(a in arb_jet(4), b in arb_jet(4)) {
        for var in Var::ALL {
            let lhs = jet_partial(&(&a * &b), var, 1).unwrap();
            let rhs = &(&jet_partial(&a, var, 1).unwrap() * &b)
                + &(&a * &jet_partial(&b, var, 1).unwrap());
            prop_assert!(max_coeff_diff(&lhs, &rhs) < 1e-11);
        }
    }

    #[test]
    fn division_is_multiplicative_inverse(a in arb_jet(4), b in arb_jet(4)) {
        // Shift b's value away from zero so the division is well-posed.
        let b = b.plus_scalar(c(2.0, 0.5));
        let q = przanowski::jets::jet_arith(&a, &b, przanowski::jets::ArithOp::Div).unwrap();
        prop_assert!(max_coeff_diff(&(&q * &b), &a) < 1e-11);
    }
}

/// Central finite differences, one variable at a time, with the 4th-order
/// five-point stencil (f(-2h) − 8f(-h) + 8f(h) − f(2h)) / 12h.  The step is
/// dyadic so repeated shifting stays exactly representable.
fn fd_partial(f: &dyn Fn(Point4) -> Complex64, at: Point4, alpha: [u8; 4], h: f64) -> Complex64 {
    fn shift(p: Point4, var: usize, dx: f64) -> Point4 {
        let mut q = p;
        match var {
            0 => q.w += dx,
            1 => q.z += dx,
            2 => q.wb += dx,
            _ => q.zb += dx,
        }
        q
    }
    match alpha.iter().position(|&e| e > 0) {
        None => f(at),
        Some(v) => {
            let mut lower = alpha;
            lower[v] -= 1;
            let s = |dx: f64| fd_partial(f, shift(at, v, dx), lower, h);
            (s(-2.0 * h) - s(-h) * 8.0 + s(h) * 8.0 - s(2.0 * h)) / c(12.0 * h, 0.0)
        }
    }
}

/// Every coefficient of a nontrivial composite jet matches finite
/// differences at mixed tolerance 1e-5.
#[test]
fn composite_jet_matches_finite_differences_everywhere() {
    let f = |p: Point4| -> Complex64 {
        (c(0.3, 0.0) * p.w - c(0.2, 0.0) * p.z * p.zb).exp()
            + (p.w + 2.0 * p.z) * (p.wb - p.z)
            + (c(2.0, 0.0) + p.w * p.wb).ln()
    };
    let bases = [
        Point4::new(c(0.5, 0.1), c(0.2, -0.3), c(0.5, -0.1), c(0.2, 0.3), 1.0),
        Point4::new(c(-0.4, 0.2), c(0.7, 0.1), c(-0.4, -0.2), c(0.7, -0.1), -1.0),
    ];
    let h = (2.0_f64).powi(-6);
    for base in bases {
        let w = Jet::variable(base, MAX_ORDER, Var::W);
        let z = Jet::variable(base, MAX_ORDER, Var::Z);
        let wb = Jet::variable(base, MAX_ORDER, Var::Wb);
        let zb = Jet::variable(base, MAX_ORDER, Var::Zb);
        let jet = &(&(&w.scaled(c(0.3, 0.0)) - &(&z * &zb).scaled(c(0.2, 0.0))).exp()
            + &(&(&w + &z.scaled(c(2.0, 0.0))) * &(&wb - &z)))
            + &(&w * &wb).plus_scalar(c(2.0, 0.0)).ln().unwrap();
        for pos in 0..coeff_count(MAX_ORDER) {
            let alpha = monomial_at(pos);
            let fact: f64 = alpha.iter().map(|&e| [1.0, 1.0, 2.0, 6.0, 24.0][e as usize]).product();
            let exact = jet.coeffs()[pos] * fact;
            let fd = fd_partial(&f, base, alpha, h);
            let err = (exact - fd).norm();
            assert!(
                err < 1e-5 * (1.0 + exact.norm()),
                "coefficient {alpha:?}: jet {exact}, fd {fd}, err {err:.3e}"
            );
        }
    }
}
