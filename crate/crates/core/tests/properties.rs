use std::sync::Arc;

use foliastab::ambient::{make_warped, WarpedSpec};
use foliastab::expr::Expr;
use foliastab::grid::{gauss_legendre, pairwise_sum, DiffScheme};
use foliastab::hypersurface::{
    build_leaf, curvature_fields, euclidean_for, sphere_immersion, warped_slice_immersion, Orientation,
};
use foliastab::leafcalc::{JacobiOperator, ScalarField};
use foliastab::stability::SignClass;
use foliastab::symcurv::{
    cayley_hamilton_residual, f_r_sequence, mean_curvatures, newton_by_recursion, newton_by_spectrum, sigma,
    trace_identities, CurvatureVector, ShapeMatrix,
};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn subset_sigma(k: usize, x: &[f64]) -> f64 {
    let n = x.len();
    (0u32..1 << n)
        .filter(|m| m.count_ones() as usize == k)
        .map(|m| (0..n).filter(|i| m & (1 << i) != 0).map(|i| x[i]).product::<f64>())
        .sum()
}

fn kappa(max_n: usize, bound: f64) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-bound..bound, 1..=max_n)
}

fn symmetric(max_n: usize) -> impl Strategy<Value = DMatrix<f64>> {
    (1..=max_n).prop_flat_map(|n| {
        prop::collection::vec(-1.0..1.0_f64, n * n).prop_map(move |v| {
            let m = DMatrix::from_vec(n, n, v);
            (&m + m.transpose()) * 0.5
        })
    })
}

proptest! {
    #[test]
    fn sigma_matches_subset_sums(x in kappa(12, 2.0)) {
        let abs: Vec<f64> = x.iter().map(|v| v.abs()).collect();
        for k in 0..=x.len() {
            let mag = subset_sigma(k, &abs).max(f64::MIN_POSITIVE);
            prop_assert!((sigma(k, &x) - subset_sigma(k, &x)).abs() <= 1e-12 * mag);
        }
    }

    #[test]
    fn recursion_agrees_with_spectrum_on_diagonals(x in kappa(8, 2.0)) {
        let n = x.len();
        let kv = CurvatureVector::new(x.clone()).unwrap();
        let towers = newton_by_recursion(&ShapeMatrix::from_diagonal(&x));
        let abs: Vec<f64> = x.iter().map(|v| v.abs()).collect();
        for (r, t) in towers.iter().enumerate() {
            let mu = newton_by_spectrum(&kv, r).unwrap().mu;
            for i in 0..n {
                let mut rest = abs.clone();
                rest.remove(i);
                let mag = subset_sigma(r, &rest).max(1.0);
                prop_assert!((t[(i, i)] - mu[i]).abs() <= 1e-10 * mag);
                for j in (0..n).filter(|&j| j != i) {
                    prop_assert!(t[(i, j)].abs() <= 1e-10 * mag);
                }
            }
        }
    }

    #[test]
    fn cayley_hamilton(a in symmetric(8)) {
        let (tn, scale) = cayley_hamilton_residual(&ShapeMatrix::new(a).unwrap());
        prop_assert!(tn <= 1e-9 * scale.max(1e-300));
    }

    #[test]
    fn trace_identities_hold(x in kappa(8, 2.0)) {
        let kv = CurvatureVector::new(x.clone()).unwrap();
        for r in 0..x.len() {
            let t = trace_identities(&kv, r).unwrap();
            prop_assert!(t.max_rel_residual <= 1e-10, "r = {}: {:?}", r, t);
            prop_assert!(t.c_r_residual <= 1e-9 * t.closed_t.abs().max(1.0));
        }
    }

    #[test]
    fn normalized_mean_curvatures(x in kappa(8, 2.0)) {
        let n = x.len();
        let m = mean_curvatures(&CurvatureVector::new(x.clone()).unwrap());
        let mut c = 1.0;
        for r in 0..=n {
            prop_assert!((m.h[r] * c - m.s[r]).abs() <= 1e-12 * m.s[r].abs().max(1.0));
            c = c * (n - r) as f64 / (r + 1) as f64;
        }
        prop_assert_eq!(m.s(n + 1), 0.0);
    }

    #[test]
    fn flat_ambient_f_r_is_s_r(x in kappa(8, 2.0)) {
        let s = mean_curvatures(&CurvatureVector::new(x.clone()).unwrap()).s;
        let f = f_r_sequence(&s, 0.0, x.len());
        for (a, b) in f.iter().zip(&s) {
            prop_assert!((a - b).abs() <= 1e-14 * b.abs().max(1.0));
        }
    }

    #[test]
    fn pairwise_sum_is_a_sum(v in prop::collection::vec(-1e3..1e3_f64, 0..300)) {
        let naive: f64 = v.iter().sum();
        let mag: f64 = v.iter().map(|x| x.abs()).sum();
        prop_assert!((pairwise_sum(&v) - naive).abs() <= 1e-13 * mag.max(1.0));
    }

    #[test]
    fn gauss_legendre_is_exact_for_polynomials(n in 1usize..40, deg in 0usize..80) {
        prop_assume!(deg < 2 * n);
        let (x, w) = gauss_legendre(n);
        let got: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(deg as i32)).sum();
        let want = if deg % 2 == 1 { 0.0 } else { 2.0 / (deg + 1) as f64 };
        prop_assert!((got - want).abs() <= 1e-13);
    }

    #[test]
    fn sign_class_is_scale_invariant(v in prop::collection::vec(-1.0..1.0_f64, 1..20), s in 1e-3..1e3_f64) {
        let scaled: Vec<f64> = v.iter().map(|x| x * s).collect();
        prop_assert_eq!(SignClass::of(&v, 0.0), SignClass::of(&scaled, 0.0));
        let flipped: Vec<f64> = v.iter().map(|x| -x).collect();
        let expect = match SignClass::of(&v, 0.0) {
            SignClass::NonNegative => SignClass::NonPositive,
            SignClass::NonPositive => SignClass::NonNegative,
            other => other,
        };
        prop_assert_eq!(SignClass::of(&flipped, 0.0), expect);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn round_sphere_mean_curvatures(radius in 0.2..5.0_f64, n in 1usize..=3) {
        let sizes = vec![8; n];
        let chart = euclidean_for(n + 1, radius);
        let leaf = build_leaf(&chart, &sphere_immersion(n, radius, 0.0, &sizes, DiffScheme::Spectral).unwrap(), Orientation::Natural).unwrap();
        let f = curvature_fields(&leaf, 0).unwrap();
        let binom = |k: usize| (0..k).fold(1.0, |a, i| a * (n - i) as f64 / (i + 1) as f64);
        for node in 0..leaf.len() {
            for k in 0..=n {
                let want = binom(k) / radius.powi(k as i32);
                prop_assert!((f.s[node][k] - want).abs() <= 1e-9 * want);
            }
        }
    }

    #[test]
    fn reversing_the_normal_flips_odd_mean_curvatures(a in 0.1..1.0_f64, b in -1.0..1.0_f64, t in -0.5..0.5_f64) {
        let spec = WarpedSpec::diagonal(
            vec![Expr::parse(&format!("{a}")).unwrap(), Expr::parse(&format!("{b}*tanh(t)")).unwrap()],
            (-1.0, 1.0),
        );
        let chart = make_warped(&spec).unwrap();
        let imm = warped_slice_immersion(&spec, t, &[8, 8], DiffScheme::Spectral).unwrap();
        let up = curvature_fields(&build_leaf(&chart, &imm, Orientation::Natural).unwrap(), 0).unwrap();
        let down = curvature_fields(&build_leaf(&chart, &imm, Orientation::Reversed).unwrap(), 0).unwrap();
        for (u, d) in up.s.iter().zip(&down.s) {
            for k in 0..u.len() {
                let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
                prop_assert!((u[k] - sign * d[k]).abs() <= 1e-12 * u[k].abs().max(1.0));
            }
        }
    }

    #[test]
    fn index_form_is_symmetric_on_spheres(p in -1.0..1.0_f64, q in -1.0..1.0_f64, r in 0usize..=2) {
        let chart = euclidean_for(3, 1.0);
        let leaf = Arc::new(build_leaf(&chart, &sphere_immersion(2, 1.0, 0.0, &[16, 16], DiffScheme::Spectral).unwrap(), Orientation::Natural).unwrap());
        let f = ScalarField::from_point_fn(&leaf, |x| x[0] + p * x[1] * x[2]).unwrap();
        let g = ScalarField::from_point_fn(&leaf, |x| x[2] * x[2] + q * x[0]).unwrap();
        let op = JacobiOperator::new(&leaf, r).unwrap();
        let fg = op.ir(&f, &g).unwrap();
        let gf = op.ir(&g, &f).unwrap();
        let norm = (f.inner(&f).unwrap() * g.inner(&g).unwrap()).sqrt();
        prop_assert!((fg - gf).abs() <= 1e-7 * norm);
    }
}
