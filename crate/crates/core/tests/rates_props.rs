//! Entropic quantities checked against a dense block-diagonal density matrix on
//! `X_A ⊗ X_B ⊗ R` whose entropies are taken directly from nalgebra eigenvalues.

use faithsim::measurement::joint_outcome_model;
use faithsim::random::{random_density, random_outcome_function, random_povm};
use faithsim::rates::{conditional_rate_quantities, shannon_entropy};
use faithsim::scalar::Complex;
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn entropy(m: &DMatrix<Complex<f64>>) -> f64 {
    let h = (m + m.adjoint()) * Complex::new(0.5, 0.0);
    h.symmetric_eigenvalues()
        .iter()
        .filter(|&&l| l > 1e-15)
        .map(|&l| -l * l.log2())
        .sum()
}

/// Dense `Σ_{a,b} |a⟩⟨a| ⊗ |b⟩⟨b| ⊗ w_{ab}` restricted to the requested registers.
fn block(weights: &[DMatrix<Complex<f64>>], na: usize, nb: usize, keep_a: bool, keep_b: bool, keep_r: bool) -> DMatrix<Complex<f64>> {
    let dr = weights[0].nrows();
    let (sa, sb, sr) = (if keep_a { na } else { 1 }, if keep_b { nb } else { 1 }, if keep_r { dr } else { 1 });
    let mut out = DMatrix::zeros(sa * sb * sr, sa * sb * sr);
    for a in 0..na {
        for b in 0..nb {
            let w = &weights[a * nb + b];
            let ia = if keep_a { a } else { 0 };
            let ib = if keep_b { b } else { 0 };
            let base = (ia * sb + ib) * sr;
            if keep_r {
                let mut v = out.view_mut((base, base), (dr, dr));
                v += w;
            } else {
                out[(base, base)] += w.trace();
            }
        }
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn quantities_match_dense_oracle(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dim = rng.random_range(2..=3);
        let k = rng.random_range(2..=5);
        let rank = rng.random_range(1..=dim);
        let rho = random_density::<f64, _>(&mut rng, dim, rank);
        let povm = random_povm(&mut rng, dim, k);
        let ia = rng.random_range(1..=k);
        let ib = rng.random_range(1..=k);
        let ga = random_outcome_function(&mut rng, k, ia);
        let gb = random_outcome_function(&mut rng, k, ib);
        let jm = joint_outcome_model(&rho, &povm, &ga, &gb).unwrap();
        let q = conditional_rate_quantities(&jm).unwrap();
        let w: Vec<DMatrix<Complex<f64>>> = jm.cq.weighted.iter().map(|o| o.matrix().clone()).collect();
        let (na, nb) = (jm.a_size, jm.b_size);
        let s = |a, b, r| entropy(&block(&w, na, nb, a, b, r));
        let (h_a, h_b, h_ab) = (s(true, false, false), s(false, true, false), s(true, true, false));
        let h_r = s(false, false, true);
        let (h_ar, h_br, h_abr) = (s(true, false, true), s(false, true, true), s(true, true, true));
        let tol = 1e-8;
        prop_assert!((q.h_xa - h_a).abs() < tol);
        prop_assert!((q.h_xb - h_b).abs() < tol);
        prop_assert!((q.h_r - h_r).abs() < tol);
        prop_assert!((q.i_xa_r - (h_a + h_r - h_ar)).abs() < tol);
        prop_assert!((q.i_xb_r - (h_b + h_r - h_br)).abs() < tol);
        prop_assert!((q.i_xaxb_r - (h_ab + h_r - h_abr)).abs() < tol);
        prop_assert!((q.i_xb_r_given_xa - (h_ar + h_ab - h_a - h_abr).max(0.0)).abs() < tol);
        prop_assert!((q.i_xb_rxa - (h_b + h_ar - h_abr)).abs() < tol);
        prop_assert!((q.i_xa_xb - (h_a + h_b - h_ab).max(0.0)).abs() < tol);
        prop_assert!((q.h_r_given_xa - (h_ar - h_a)).abs() < tol);
        prop_assert!((q.i_xaxb_r - q.i_xa_r - q.i_xb_r_given_xa).abs() < tol);
        prop_assert!(q.chain_rule_gap < tol);
    }

    #[test]
    fn shannon_bounds(p in prop::collection::vec(0.0f64..1.0, 1..8)) {
        let total: f64 = p.iter().sum();
        prop_assume!(total > 1e-6);
        let p: Vec<f64> = p.iter().map(|x| x / total).collect();
        let h = shannon_entropy(&p).unwrap();
        prop_assert!(h >= 0.0 && h <= (p.len() as f64).log2() + 1e-12);
    }
}
