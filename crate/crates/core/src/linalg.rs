//! Dense LU factorisation with partial pivoting, generic over the scalar.
//!
//! Three scalar types get used in practice: `f64` for the Newton solver's
//! real Jacobian, `Complex64` for pointwise basis decompositions (curvature
//! in the Σ-basis, cobasis changes), and [`Jet`] for the structure-equation
//! connection solve — solving a linear system whose entries are jets yields
//! a jet-valued solution, i.e. the solution *and* its derivatives at once.
//! That last use is why this is hand-rolled rather than delegated to a
//! matrix library: the scalars are not machine floats.

use num_complex::Complex64;
use thiserror::Error;

use crate::jets::Jet;

/// What LU needs from a scalar: ring operations, division, a magnitude for
/// pivoting, and a way to make a zero "like" an existing element (jets carry
/// a base point and order, so zero is not context-free).
pub trait LinScalar: Clone {
    fn zero_like(&self) -> Self;
    fn mag(&self) -> f64;
    fn add(&self, rhs: &Self) -> Self;
    fn sub(&self, rhs: &Self) -> Self;
    fn mul(&self, rhs: &Self) -> Self;
    /// None when the divisor is singular (zero, or zero value part).
    fn div(&self, rhs: &Self) -> Option<Self>;
}

impl LinScalar for f64 {
    fn zero_like(&self) -> Self {
        0.0
    }
    fn mag(&self) -> f64 {
        self.abs()
    }
    fn add(&self, rhs: &Self) -> Self {
        self + rhs
    }
    fn sub(&self, rhs: &Self) -> Self {
        self - rhs
    }
    fn mul(&self, rhs: &Self) -> Self {
        self * rhs
    }
    fn div(&self, rhs: &Self) -> Option<Self> {
        (*rhs != 0.0).then(|| self / rhs)
    }
}

impl LinScalar for Complex64 {
    fn zero_like(&self) -> Self {
        Complex64::new(0.0, 0.0)
    }
    fn mag(&self) -> f64 {
        self.norm()
    }
    fn add(&self, rhs: &Self) -> Self {
        self + rhs
    }
    fn sub(&self, rhs: &Self) -> Self {
        self - rhs
    }
    fn mul(&self, rhs: &Self) -> Self {
        self * rhs
    }
    fn div(&self, rhs: &Self) -> Option<Self> {
        (rhs.norm() != 0.0).then(|| self / rhs)
    }
}

impl LinScalar for Jet {
    fn zero_like(&self) -> Self {
        Jet::zero(self.base(), self.order())
    }
    fn mag(&self) -> f64 {
        self.value().norm()
    }
    fn add(&self, rhs: &Self) -> Self {
        self + rhs
    }
    fn sub(&self, rhs: &Self) -> Self {
        self - rhs
    }
    fn mul(&self, rhs: &Self) -> Self {
        self * rhs
    }
    fn div(&self, rhs: &Self) -> Option<Self> {
        crate::jets::jet_arith(self, rhs, crate::jets::ArithOp::Div).ok()
    }
}

#[derive(Debug, Error)]
pub enum LinalgError {
    #[error("singular linear system: pivot magnitude {pivot:.3e} at elimination step {step}")]
    Singular { pivot: f64, step: usize },
}

/// Row-major dense square matrix view used by the factorisation.
pub struct LuFactor<T> {
    n: usize,
    lu: Vec<T>,
    perm: Vec<usize>,
}

/// Relative pivot threshold: pivots below `RELATIVE_PIVOT_FLOOR` times the
/// largest initial magnitude are declared singular.
const RELATIVE_PIVOT_FLOOR: f64 = 1e-13;

/// Factors `a` (row-major, n×n) in place with partial pivoting.
pub fn lu_factor<T: LinScalar>(mut a: Vec<T>, n: usize) -> Result<LuFactor<T>, LinalgError> {
    assert_eq!(a.len(), n * n, "matrix length does not match dimension");
    let scale = a.iter().map(|x| x.mag()).fold(0.0_f64, f64::max).max(1e-300);
    let mut perm: Vec<usize> = (0..n).collect();
    for col in 0..n {
        // Pivot: the remaining row with the largest magnitude in this column.
        let (pr, pmag) = (col..n)
            .map(|r| (r, a[r * n + col].mag()))
            .max_by(|x, y| x.1.total_cmp(&y.1))
            .expect("non-empty pivot search");
        if pmag < RELATIVE_PIVOT_FLOOR * scale {
            return Err(LinalgError::Singular { pivot: pmag, step: col });
        }
        if pr != col {
            for c in 0..n {
                a.swap(col * n + c, pr * n + c);
            }
            perm.swap(col, pr);
        }
        let pivot = a[col * n + col].clone();
        for r in col + 1..n {
            let factor = match a[r * n + col].div(&pivot) {
                Some(f) => f,
                None => return Err(LinalgError::Singular { pivot: pmag, step: col }),
            };
            a[r * n + col] = factor.clone();
            for c in col + 1..n {
                let delta = factor.mul(&a[col * n + c]);
                a[r * n + c] = a[r * n + c].sub(&delta);
            }
        }
    }
    Ok(LuFactor { n, lu: a, perm })
}

impl<T: LinScalar> LuFactor<T> {
    /// Solves A x = b for one right-hand side.
    pub fn solve(&self, b: &[T]) -> Vec<T> {
        assert_eq!(b.len(), self.n);
        let n = self.n;
        let mut x: Vec<T> = self.perm.iter().map(|&p| b[p].clone()).collect();
        // Forward substitution with unit lower triangle.
        for r in 1..n {
            for c in 0..r {
                let delta = self.lu[r * n + c].mul(&x[c]);
                x[r] = x[r].sub(&delta);
            }
        }
        // Back substitution.
        for r in (0..n).rev() {
            for c in r + 1..n {
                let delta = self.lu[r * n + c].mul(&x[c]);
                x[r] = x[r].sub(&delta);
            }
            x[r] = x[r]
                .div(&self.lu[r * n + r])
                .expect("pivot validated during factorisation");
        }
        x
    }
}

/// One-shot solve of A x = b.
pub fn lu_solve<T: LinScalar>(a: Vec<T>, n: usize, b: &[T]) -> Result<Vec<T>, LinalgError> {
    Ok(lu_factor(a, n)?.solve(b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::jets::{Jet, Point4, Var};
    use approx::assert_relative_eq;

    #[test]
    fn solves_real_system() {
        // 3×3 with known solution (1, -2, 3).
        let a = vec![2.0, 1.0, -1.0, -3.0, -1.0, 2.0, -2.0, 1.0, 2.0];
        let x_true = [1.0, -2.0, 3.0];
        let b: Vec<f64> = (0..3)
            .map(|r| (0..3).map(|c| a[r * 3 + c] * x_true[c]).sum())
            .collect();
        let x = lu_solve(a, 3, &b).unwrap();
        for (got, want) in x.iter().zip(x_true.iter()) {
            assert_relative_eq!(got, want, max_relative = 1e-13);
        }
    }

    #[test]
    fn rejects_singular_matrix() {
        let a = vec![1.0, 2.0, 2.0, 4.0];
        assert!(matches!(
            lu_solve(a, 2, &[1.0, 1.0]),
            Err(LinalgError::Singular { .. })
        ));
    }

    #[test]
    fn solves_complex_system() {
        let i = Complex64::new(0.0, 1.0);
        let one = Complex64::new(1.0, 0.0);
        let a = vec![one + i, 2.0 * one, i, one - i];
        let x_true = [one - 2.0 * i, 3.0 * one + i];
        let b: Vec<Complex64> = (0..2)
            .map(|r| (0..2).map(|c| a[r * 2 + c] * x_true[c]).sum())
            .collect();
        let x = lu_solve(a, 2, &b).unwrap();
        for (got, want) in x.iter().zip(x_true.iter()) {
            assert!((got - want).norm() < 1e-13);
        }
    }

    #[test]
    fn solves_jet_system_with_derivatives() {
        // Entries are jets of functions of w; the solution jets must carry
        // the correct derivatives, which is the whole point of jet LU.
        let p = Point4::new(
            Complex64::new(1.5, 0.0),
            Complex64::new(0.0, 0.0),
            Complex64::new(0.0, 0.0),
            Complex64::new(0.0, 0.0),
            1.0,
        );
        let w = Jet::variable(p, 2, Var::W);
        let one = Jet::constant(p, 2, Complex64::new(1.0, 0.0));
        // A = [[w, 1], [1, w]], x = (exp(w), w²) ⇒ b = (w·e^w + w², e^w + w³).
        let a = vec![w.clone(), one.clone(), one.clone(), w.clone()];
        let x0 = w.exp();
        let x1 = (&w * &w).clone();
        let b = vec![&(&w * &x0) + &x1, &x0 + &(&x1 * &w)];
        let x = lu_solve(a, 2, &b).unwrap();
        for (got, want) in [(&x[0], &x0), (&x[1], &x1)] {
            for (g, w_) in got.coeffs().iter().zip(want.coeffs()) {
                assert!((g - w_).norm() < 1e-12, "{g} vs {w_}");
            }
        }
    }
}
