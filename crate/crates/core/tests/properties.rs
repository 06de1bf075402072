mod common;

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use proptest::prelude::*;

use common::{law, problem, two_block_pulse};
use thermoevo::evolution::{discretize_law, solve, Scheme, Stepper};
use thermoevo::material::{assemble_material_law, zero_pattern, Family, ModelSpec};
use thermoevo::oracle::{compare, discrete_modes, spectral_solve_with};
use thermoevo::rational::{realize_state_space, RationalMatrixFunction};
use thermoevo::signal::{apply_symbol_fl, pre_support_leakage, WeightedSignal};
use thermoevo::spatial::{build_operators, is_exactly_skew, verify_skew_adjoint_seeded, Grid1D};
use thermoevo::wellposedness::{check_condition_rho, check_theorem_2, condition_matrix, Verdict};
use thermoevo::Error;

fn bump(t: f64, c: f64, w: f64) -> f64 {
    let r = (t - c) / w;
    if r.abs() < 1.0 {
        (-1.0 / (1.0 - r * r)).exp()
    } else {
        0.0
    }
}

/// Sum of compactly supported bumps in `[start, start + 3]`.
fn signal(params: &[(f64, f64, f64)], start: f64, rho: f64) -> WeightedSignal {
    WeightedSignal::scalar_fn(0.0, 1.0 / 128.0, 12 * 128 + 1, rho, |t| {
        params.iter().map(|&(c, w, a)| a * bump(t, start + 0.5 + 2.0 * c, 0.2 + 0.3 * w)).sum()
    })
    .unwrap()
}

fn bumps() -> impl Strategy<Value = Vec<(f64, f64, f64)>> {
    prop::collection::vec((0.0..1.0f64, 0.0..1.0f64, -2.0..2.0f64), 1..4)
}

fn family() -> impl Strategy<Value = Family> {
    prop::sample::select(Family::CATALOG.to_vec())
}

fn m0_inertia(m: &DMatrix<f64>) -> (usize, usize) {
    let e = SymmetricEigen::new(m.clone()).eigenvalues;
    let tol = 1e-10 * e.amax();
    (e.iter().filter(|v| **v > tol).count(), e.iter().filter(|v| **v < -tol).count())
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 48, ..ProptestConfig::default() })]

    #[test]
    fn weighted_norm_is_nonnegative_and_zero_only_for_zero(p in bumps(), rho in 0.5..5.0f64) {
        let f = signal(&p, 1.0, rho);
        let n = f.weighted_norm();
        prop_assert!(n >= 0.0);
        prop_assert_eq!(n == 0.0, f.max_abs() == 0.0);
        prop_assert_eq!(f.zeros_like(1).weighted_norm(), 0.0);
    }

    #[test]
    fn antiderivative_contracts(p in bumps(), rho in prop::sample::select(vec![1.0, 2.0, 5.0])) {
        let f = signal(&p, 1.0, rho);
        let dt = f.dt();
        prop_assert!(f.antiderivative().weighted_norm() <= f.weighted_norm() / rho * (1.0 + 10.0 * dt));
    }

    #[test]
    fn antiderivative_and_symbol_are_causal(p in bumps(), start in 2.0..4.0f64) {
        let f = signal(&p, start, 1.0);
        prop_assert!(pre_support_leakage(&f.antiderivative(), start) <= 1e-8);
        let r = RationalMatrixFunction::scalar(&[0.5, 1.0], &[1.0, 1.0]).unwrap();
        prop_assert!(pre_support_leakage(&apply_symbol_fl(&r, &f).unwrap(), start) <= 1e-6);
    }

    #[test]
    fn signal_operations_are_linear(p in bumps(), q in bumps(), a in -3.0..3.0f64, b in -3.0..3.0f64) {
        let (f, g) = (signal(&p, 1.0, 1.0), signal(&q, 1.0, 1.0));
        let combo = f.combine(a, &g, b).unwrap();
        let lhs = combo.antiderivative();
        let rhs = f.antiderivative().combine(a, &g.antiderivative(), b).unwrap();
        let scale = lhs.weighted_norm().max(rhs.weighted_norm()).max(1e-300);
        prop_assert!(lhs.combine(1.0, &rhs, -1.0).unwrap().weighted_norm() <= 1e-12 * scale);
        let r = RationalMatrixFunction::scalar(&[1.0, 0.3], &[2.0, 1.0]).unwrap();
        let lhs = apply_symbol_fl(&r, &combo).unwrap();
        let rhs = apply_symbol_fl(&r, &f).unwrap().combine(a, &apply_symbol_fl(&r, &g).unwrap(), b).unwrap();
        let scale = lhs.weighted_norm().max(rhs.weighted_norm()).max(1e-300);
        prop_assert!(lhs.combine(1.0, &rhs, -1.0).unwrap().weighted_norm() <= 1e-12 * scale);
    }

    #[test]
    fn eval_is_linear_in_numerator(
        n1 in prop::collection::vec(-2.0..2.0f64, 1..4),
        n2 in prop::collection::vec(-2.0..2.0f64, 1..4),
        d1 in 0.5..3.0f64,
        re in -0.5..0.5f64,
        im in -0.5..0.5f64,
    ) {
        let den = [d1, 1.0];
        let z = Complex64::new(re, im);
        let len = n1.len().max(n2.len());
        let pad = |v: &[f64]| { let mut v = v.to_vec(); v.resize(len, 0.0); v };
        let sum: Vec<f64> = pad(&n1).iter().zip(pad(&n2)).map(|(a, b)| a + 2.0 * b).collect();
        let f = |n: &[f64]| RationalMatrixFunction::scalar(n, &den).unwrap().eval(z);
        if let (Ok(a), Ok(b), Ok(c)) = (f(&n1), f(&n2), f(&sum)) {
            let cn = c.norm();
            prop_assert!((c - (a + b * Complex64::new(2.0, 0.0))).norm() <= 1e-12 * (1.0 + cn));
        }
    }

    #[test]
    fn realization_matches_transfer(
        poles in prop::collection::btree_set(1u32..12, 1..4),
        num in prop::collection::vec(-2.0..2.0f64, 1..4),
    ) {
        // denominator Π(p_i + z) with roots −p_i at least 0.5 apart
        let mut den = vec![1.0];
        for p in &poles {
            let p = *p as f64 / 2.0;
            let mut next = vec![0.0; den.len() + 1];
            for (i, c) in den.iter().enumerate() {
                next[i] += p * c;
                next[i + 1] += c;
            }
            den = next;
        }
        let mut num = num;
        num.truncate(den.len());
        let r = RationalMatrixFunction::scalar(&num, &den).unwrap();
        let s = realize_state_space(&r).unwrap();
        for k in 0..32 {
            let sv = Complex64::new(0.2 + 0.05 * k as f64, 0.9 * k as f64 - 12.0);
            let lhs = s.transfer(sv).unwrap()[(0, 0)];
            let rhs = r.eval(sv.inv()).unwrap()[(0, 0)];
            prop_assert!((lhs - rhs).norm() <= 1e-9 * rhs.norm().max(1e-12));
        }
    }

    #[test]
    fn denominator_vanishing_at_zero_is_rejected(a in -2.0..2.0f64, b in 0.1..2.0f64) {
        prop_assert!(matches!(RationalMatrixFunction::scalar(&[1.0, a], &[0.0, b]), Err(Error::NotAnalyticAtZero)));
    }

    #[test]
    fn m0_hermitian_and_congruent(
        f in family(),
        rho0 in 0.1..5.0f64, c in 0.1..5.0f64, gamma in -2.0..2.0f64, nu in 0.1..5.0f64,
    ) {
        let spec = common::spec(f, gamma, &[("rho0", rho0), ("C", c)]);
        let spec = if f == Family::GreenLindsay { spec } else {
            let mut m = spec.coefficients.clone();
            m.insert("nu".into(), thermoevo::material::CoefValue::Scalar(nu));
            ModelSpec::new(f, m).unwrap()
        };
        let law = assemble_material_law(&spec).unwrap();
        let cell = &law.cells()[0];
        let m0 = law.m0(0);
        prop_assert!((m0 - m0.transpose()).amax() <= 1e-14 * m0.amax());
        let (l, d) = cell.congruence_factors().unwrap();
        prop_assert!((l.transpose() * d * l - m0).amax() <= 1e-12 * m0.amax());
        let p = zero_pattern(&law);
        // M₁ lives on the (Θ,Θ) and (q,q) blocks only
        for i in 0..4 {
            for j in 0..4 {
                if p.m1[i][j] {
                    prop_assert!(i == j && i >= 2);
                }
            }
        }
    }

    #[test]
    fn satisfied_implies_positive_condition_above_rho_min(f in family(), gamma in -1.0..1.0f64, scale in 0.2..3.0f64) {
        let law = law(f, gamma, &[("rho0", scale)], 1);
        let r = check_theorem_2(&law);
        prop_assert_eq!(r.verdict, Verdict::Satisfied);
        prop_assert!(r.c_estimate > 0.0 && r.rho_min.is_finite());
        for k in 0..12 {
            let rho = r.rho_min * 1.7_f64.powi(k);
            prop_assert!(check_condition_rho(&law, rho).eigenvalue > 0.0);
        }
    }

    #[test]
    fn congruence_preserves_condition_inertia(
        f in family(), gamma in -2.0..2.0f64, rho in 0.01..20.0f64, nu in -1.0..2.0f64,
    ) {
        let mut cell = law(f, gamma, &[], 1).cells()[0].clone();
        if f != Family::GreenLindsay {
            cell.nu = nu;
        }
        let h = condition_matrix(&cell, rho).unwrap().map(|z| z.re);
        let (l, _) = cell.congruence_factors().unwrap();
        let li = l.clone().try_inverse().unwrap();
        let conj = li.transpose() * &h * &li;
        prop_assert_eq!(m0_inertia(&h), m0_inertia(&((&conj + conj.transpose()) * 0.5)));
    }

    #[test]
    fn operator_is_exactly_skew(n in 2usize..200, length in 0.1..10.0f64, seed in any::<u64>()) {
        let op = build_operators(&Grid1D::new(length, n).unwrap()).unwrap();
        prop_assert!(is_exactly_skew(&op.a_h));
        prop_assert!(verify_skew_adjoint_seeded(&op.a_h, 10, seed).max_relative <= 1e-12);
    }

    #[test]
    fn operator_spectrum_is_imaginary(n in 2usize..40) {
        let op = build_operators(&Grid1D::new(1.0, n).unwrap()).unwrap();
        let mut a = DMatrix::zeros(op.a_h.nrows(), op.a_h.ncols());
        for (i, j, v) in op.a_h.triplet_iter() {
            a[(i, j)] = *v;
        }
        let norm = a.norm();
        prop_assert!(a.complex_eigenvalues().iter().all(|z| z.re.abs() <= 1e-10 * norm));
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 12, ..ProptestConfig::default() })]

    #[test]
    fn solver_is_linear(a in -2.0..2.0f64, b in -2.0..2.0f64, f in family()) {
        let l = law(f, 0.5, &[], 8);
        let f1 = two_block_pulse(0.5, 0.1);
        let f2 = common::pulse(thermoevo::evolution::ForcingBlock::H, thermoevo::evolution::SpatialProfile::Mode(3), 0.8, 0.05);
        let p = |forcing| problem(l.clone(), forcing, 1.5, 1.0 / 64.0, Scheme::Trapezoidal, 1.0);
        let u1 = solve(&p(f1.clone())).unwrap().states;
        let u2 = solve(&p(f2.clone())).unwrap().states;
        let u = solve(&p(f1.scaled(a).plus(&f2.scaled(b)))).unwrap().states;
        let expect = u1 * a + u2 * b;
        prop_assert!((&u - &expect).amax() <= 1e-10 * expect.amax().max(1e-300));
    }

    #[test]
    fn backward_euler_dissipates_after_cutoff(f in prop::sample::select(vec![Family::Classical, Family::LordShulman, Family::GreenNaghdiI, Family::GreenNaghdiII]), gamma in -1.0..1.0f64) {
        let l = law(f, gamma, &[], 16);
        let p = problem(l.clone(), two_block_pulse(0.3, 0.03), 2.0, 1.0 / 128.0, Scheme::BackwardEuler, 1.0);
        let e = solve(&p).unwrap().energy(&discretize_law(&l, p.grid()).unwrap());
        let first = (0.6 * 128.0) as usize;
        for k in first..e.len() - 1 {
            prop_assert!(e[k + 1] <= e[k], "step {}: {} > {}", k, e[k + 1], e[k]);
        }
    }

    #[test]
    fn single_mode_forcing_stays_in_its_mode(k in 1usize..15, f in prop::sample::select(vec![Family::Classical, Family::LordShulman, Family::GreenNaghdiIII, Family::DplI])) {
        let l = law(f, 0.0, &[], 16);
        let forcing = common::pulse(thermoevo::evolution::ForcingBlock::H, thermoevo::evolution::SpatialProfile::Mode(k), 0.5, 0.1);
        let p = problem(l, forcing, 1.0, 1.0 / 32.0, Scheme::BackwardEuler, 1.0);
        let t = spectral_solve_with(&p, 8).unwrap();
        let m = discrete_modes(p.grid());
        let th = t.field(thermoevo::evolution::Field::ThetaBig).samples() * &m.sines;
        let total = th.norm_squared();
        let own = th.column(k - 1).norm_squared();
        prop_assert!(total - own <= 1e-12 * total);
    }
}

#[test]
fn step_matrix_factorizes_for_all_catalog_models_and_steps() {
    for f in Family::CATALOG {
        let l = law(f, 0.5, &[], 32);
        if check_theorem_2(&l).verdict != Verdict::Satisfied {
            continue;
        }
        for j in 6..=12 {
            let dt = 0.5_f64.powi(j);
            for scheme in [Scheme::BackwardEuler, Scheme::Trapezoidal] {
                let p = problem(l.clone(), two_block_pulse(0.5, 0.1), dt * 4.0, dt, scheme, 1.0);
                let s = Stepper::new(&p).unwrap_or_else(|e| panic!("{f} dt=2^-{j}: {e}"));
                assert!(s.pivot_ratio() > 0.0);
            }
        }
    }
}

#[test]
fn oracle_is_self_converged() {
    for f in [Family::Classical, Family::LordShulman, Family::GreenNaghdiII, Family::DplI] {
        let p = problem(law(f, 0.0, &[], 32), two_block_pulse(1.0, 0.1), 2.0, 1.0 / 256.0, Scheme::BackwardEuler, 2.0);
        let a = spectral_solve_with(&p, 64).unwrap();
        let b = spectral_solve_with(&p, 128).unwrap();
        let err = compare(&a, &b).unwrap().overall;
        assert!(err <= 1e-9, "{f}: {err:e}");
    }
}
