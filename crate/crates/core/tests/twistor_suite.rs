//! Twistor-side verification against the closed-form geometries: Przanowski
//! extraction from the contact-form sections across every builtin family,
//! its behaviour under holomorphic coordinate rescalings, the recursion
//! relations satisfied by calibrated series coefficients, one full
//! recursion-step integration checked against a closed-form continuation,
//! and the Lax-pair annihilation of the assembled series.

use num_complex::Complex64;
use przanowski::expr::{eval_jet, parse, ManifoldSpec};
use przanowski::lax::{field_apply, lax_fields_at, XiJetPoly};
use przanowski::twistor::{
    extract_przanowski, extract_przanowski_rescaled, integrability_residual, recursion_step,
    twistor_derivative, HolomorphicPatch, PsiField, RecursionState, TwistorLineFamily,
    ROUND_SERIES,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const FAMILIES: [&str; 4] = ["s4", "h4", "cp2", "bergmann"];

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// Deterministic interior sample points on the real slice of the spec's box.
fn sample_points(spec: &ManifoldSpec, n: usize, seed: u64) -> Vec<przanowski::jets::Point4> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let u: [f64; 4] = std::array::from_fn(|_| rng.gen_range(0.1..0.9));
            spec.point_from_unit(u)
        })
        .collect()
}

#[test]
fn extraction_recovers_the_potential_on_every_family() {
    for name in FAMILIES {
        let family = TwistorLineFamily::builtin(name).unwrap();
        let spec = ManifoldSpec::builtin(name).unwrap();
        for at in sample_points(&spec, 100, 0x5eed_7001) {
            let moduli = family.moduli_values([at.w, at.z, at.wb, at.zb]);
            let ext = extract_przanowski(&family, spec.lambda, moduli)
                .unwrap_or_else(|e| panic!("{name}: extraction failed at {at:?}: {e}"));
            let want = spec.k_jet(at, 0).unwrap().value();
            assert!(
                (ext.k - want).norm() < 1e-10,
                "{name}: K mismatch {:.2e} at {at:?}",
                (ext.k - want).norm()
            );
            assert!(
                ext.transverse < 1e-12,
                "{name}: transverse components {:.2e} at {at:?}",
                ext.transverse
            );
            // The extraction's own record of the Przanowski point closes the
            // identification roundtrip.
            for (got, want) in [
                (ext.point.w, at.w),
                (ext.point.z, at.z),
                (ext.point.wb, at.wb),
                (ext.point.zb, at.zb),
            ] {
                assert!((got - want).norm() < 1e-13, "{name}: point drift at {at:?}");
            }
        }
    }
}

#[test]
fn extraction_shifts_correctly_under_coordinate_rescaling() {
    for name in FAMILIES {
        let family = TwistorLineFamily::builtin(name).unwrap();
        let spec = ManifoldSpec::builtin(name).unwrap();
        for a in [c(1.3, 0.0), c(0.8, 0.3)] {
            let shift = -(a.ln() + a.conj().ln()) / spec.lambda;
            for at in sample_points(&spec, 10, 0x5eed_7002) {
                let moduli = family.moduli_values([at.w, at.z, at.wb, at.zb]);
                let base = extract_przanowski(&family, spec.lambda, moduli).unwrap();
                let resc = extract_przanowski_rescaled(&family, spec.lambda, moduli, a).unwrap();
                let defect = (resc.k - base.k - shift).norm();
                assert!(
                    defect < 1e-10,
                    "{name}: rescaling shift off by {defect:.2e} for a = {a}"
                );
            }
        }
    }
}

#[test]
fn series_coefficients_satisfy_the_recursion_relations() {
    for name in ["s4", "h4"] {
        let spec = ManifoldSpec::builtin(name).unwrap();
        for (seed, next) in ROUND_SERIES {
            let s0 = RecursionState { k: 0, n: 0, psi: PsiField::Expr(parse(seed).unwrap()) };
            let s1 = RecursionState { k: 0, n: 1, psi: PsiField::Expr(parse(next).unwrap()) };
            for at in sample_points(&spec, 50, 0x5eed_7003) {
                for a in 0..2 {
                    // d̃^{(1,0)}_{A0'}ψ₁ = −d̃^{(0,0)}_{A1'}ψ₀ …
                    let lhs = twistor_derivative(&spec, at, &s1, a, 0).unwrap();
                    let rhs = twistor_derivative(&spec, at, &s0, a, 1).unwrap();
                    let scale = lhs.norm().max(rhs.norm()).max(1.0);
                    assert!(
                        (lhs + rhs).norm() < 1e-9 * scale,
                        "{name}: step relation broken for ψ₀ = {seed}, A = {a}: {:.2e}",
                        (lhs + rhs).norm()
                    );
                    // … and the series terminates: d̃^{(1,0)}_{A1'}ψ₁ = 0.
                    let term = twistor_derivative(&spec, at, &s1, a, 1).unwrap();
                    assert!(
                        term.norm() < 1e-9 * scale,
                        "{name}: series fails to terminate for ψ₀ = {seed}, A = {a}: {:.2e}",
                        term.norm()
                    );
                }
            }
        }
    }
}

#[test]
fn series_terms_satisfy_the_weighted_integrability_condition() {
    for name in ["s4", "h4"] {
        let spec = ManifoldSpec::builtin(name).unwrap();
        for (seed, next) in ROUND_SERIES {
            // Every series term lies in the kernel of the weighted Laplacian
            // at its own weights — the second-order condition that makes the
            // next recursion step solvable.
            let states = [
                RecursionState { k: 0, n: 0, psi: PsiField::Expr(parse(seed).unwrap()) },
                RecursionState { k: 0, n: 1, psi: PsiField::Expr(parse(next).unwrap()) },
            ];
            for at in sample_points(&spec, 20, 0x5eed_7004) {
                for state in &states {
                    let lap = integrability_residual(&spec, at, state).unwrap();
                    assert!(
                        lap.norm() < 1e-8,
                        "{name}: weighted Laplacian {:.2e} on ψ_{} of {seed}",
                        lap.norm(),
                        state.n
                    );
                }
            }
        }
    }
}

#[test]
fn assembled_series_is_annihilated_by_the_lax_pair() {
    for name in ["s4", "h4"] {
        let spec = ManifoldSpec::builtin(name).unwrap();
        for (seed, next) in ROUND_SERIES {
            let psi0 = parse(seed).unwrap();
            let psi1 = parse(next).unwrap();
            for at in sample_points(&spec, 20, 0x5eed_7005) {
                let series = XiJetPoly::from_terms(
                    at,
                    3,
                    &[(0, eval_jet(&psi0, at, 3).unwrap()), (1, eval_jet(&psi1, at, 3).unwrap())],
                );
                let (l0, l1) = lax_fields_at(&spec, at).unwrap();
                for l in [&l0, &l1] {
                    let residual = field_apply(l, &series).unwrap();
                    let scale = l.max_coefficient() * series.max_value_norm().max(1.0);
                    assert!(
                        residual.max_value_norm() < 1e-9 * scale.max(1.0),
                        "{name}: Lax residual {:.2e} for ψ₀ = {seed}",
                        residual.max_value_norm()
                    );
                }
            }
        }
    }
}

#[test]
fn recursion_step_from_seed_w_matches_the_corner_normalised_coefficient() {
    // The continuation of ψ₀ = w is w̄z̄ up to the additive freedom; on a
    // patch with (w̄, z̄) frozen that freedom removes it entirely, so the
    // corner-normalised solution is identically zero.
    let spec = ManifoldSpec::builtin("s4").unwrap();
    let patch = HolomorphicPatch {
        corner: spec.point_from_unit([0.35, 0.5, 0.55, 0.5]),
        dw: c(0.012, 0.003),
        dz: c(0.010, -0.004),
        nw: 9,
        nz: 9,
    };
    let state = RecursionState { k: 0, n: 0, psi: PsiField::Expr(parse("w").unwrap()) };
    let step = recursion_step(&spec, &state, patch).unwrap();
    assert!(step.max_curl < 1e-8, "curl {:.2e}", step.max_curl);
    let field = match &step.state.psi {
        PsiField::Sampled(f) => f,
        PsiField::Expr(_) => panic!("expected sampled output"),
    };
    let corner = patch.corner;
    for i in 0..patch.nw {
        for j in 0..patch.nz {
            let at = patch.node(i, j);
            let oracle = at.wb * at.zb - corner.wb * corner.zb;
            let got = field.values[i * patch.nz + j];
            assert!(
                (got - oracle).norm() < 1e-6,
                "node ({i}, {j}): {got} vs {oracle}"
            );
        }
    }
}

#[test]
fn recursion_step_from_seed_one_vanishes_identically() {
    let spec = ManifoldSpec::builtin("s4").unwrap();
    let patch = HolomorphicPatch {
        corner: spec.point_from_unit([0.4, 0.5, 0.6, 0.45]),
        dw: c(0.01, 0.0),
        dz: c(0.01, 0.002),
        nw: 7,
        nz: 7,
    };
    let state = RecursionState { k: 0, n: 0, psi: PsiField::Expr(parse("1").unwrap()) };
    let step = recursion_step(&spec, &state, patch).unwrap();
    let field = match &step.state.psi {
        PsiField::Sampled(f) => f,
        PsiField::Expr(_) => panic!("expected sampled output"),
    };
    for v in &field.values {
        assert!(v.norm() < 1e-12, "stray value {v}");
    }
    // The step relation d̃^{(1,0)}_{A0'}ψ₁ = −d̃^{(0,0)}_{A1'}(1) holds with
    // ψ₁ ≡ 0 because a constant is killed by the unweighted derivatives.
    for i in [0, 3, 6] {
        for a in 0..2 {
            let rhs = twistor_derivative(&spec, patch.node(i, i), &state, a, 1).unwrap();
            assert!(rhs.norm() < 1e-12, "source term {:.2e}", rhs.norm());
        }
    }
}

#[test]
fn recursion_step_reproduces_the_closed_form_continuation() {
    // Seed ψ₀ = w̄ on the hyperbolic background: the continuation is
    // ψ₁ = −(εΛ/2)D²z with D = 1 − εww̄(1+zz̄), and pinning ψ₁ = 0 at the
    // corner subtracts the homogeneous solution (w₀/w)(D/D₀)² scaled by the
    // corner value, leaving ψ = −(εΛ/2)D²(z − z₀w₀/w).  The patch leaves
    // the real slice immediately, so this exercises genuinely complex
    // integration in both directions.
    let spec = ManifoldSpec::builtin("h4").unwrap();
    let corner = przanowski::jets::Point4::real_slice(c(0.30, 0.04), c(0.12, -0.08), spec.lambda);
    let patch = HolomorphicPatch {
        corner,
        dw: c(0.010, 0.002),
        dz: c(0.009, -0.003),
        nw: 13,
        nz: 13,
    };
    let state = RecursionState { k: 0, n: 0, psi: PsiField::Expr(parse("wb").unwrap()) };
    let step = recursion_step(&spec, &state, patch).unwrap();
    assert!(step.max_curl < 1e-8, "curl {:.2e}", step.max_curl);
    let field = match &step.state.psi {
        PsiField::Sampled(f) => f,
        PsiField::Expr(_) => panic!("expected sampled output"),
    };
    let eps = spec.eps;
    let half = 0.5 * eps * spec.lambda;
    let d_at = |at: przanowski::jets::Point4| {
        c(1.0, 0.0) - eps * at.w * at.wb * (c(1.0, 0.0) + at.z * at.zb)
    };
    for i in 0..patch.nw {
        for j in 0..patch.nz {
            let at = patch.node(i, j);
            let d = d_at(at);
            let oracle = -half * d * d * (at.z - corner.z * corner.w / at.w);
            let got = field.values[i * patch.nz + j];
            assert!(
                (got - oracle).norm() < 1e-6,
                "node ({i}, {j}): {got} vs {oracle}, diff {:.2e}",
                (got - oracle).norm()
            );
        }
    }
}
