//! Seeded random checks of the pointwise curvature algebra.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::symcurv::{
    cayley_hamilton_residual, char_poly_check, newton_by_recursion, newton_by_spectrum, trace_identities,
    CurvatureVector, ShapeMatrix,
};

/// Worst relative residuals over the sampled shape operators.
#[derive(Debug, Clone, Copy, Default, Serialize)]
pub struct AlgebraReport {
    pub samples: usize,
    /// `‖T_n‖ / max(1, ‖A‖^n)`.
    pub cayley_hamilton: f64,
    /// Largest relative trace-identity residual over all `r`.
    pub trace_identities: f64,
    /// `|det(tI − A) − Σ(−1)^r S_r t^{n−r}| / (|t| + ‖A‖)^n`.
    pub char_poly: f64,
    /// Eigenvalues of the recursive `T_r` against `μ_{i,r}`, relative to `max(1, ‖A‖^r)`.
    pub recursion_vs_spectrum: f64,
}

impl AlgebraReport {
    pub fn worst(&self) -> f64 {
        self.cayley_hamilton
            .max(self.trace_identities)
            .max(self.char_poly)
            .max(self.recursion_vs_spectrum)
    }
}

/// Random orthogonal conjugate of `diag(κ)`.
pub fn random_shape(rng: &mut impl Rng, kappa: &[f64]) -> ShapeMatrix {
    let n = kappa.len();
    let m = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
    let q = m.qr().q();
    let d = DMatrix::from_diagonal(&DVector::from_column_slice(kappa));
    ShapeMatrix::symmetrized(&(&q * d * q.transpose()))
}

/// `count` random curvature vectors with `n ≤ max_n` and entries in `[−3, 3]`.
pub fn run_algebra_suite(seed: u64, count: usize, max_n: usize) -> AlgebraReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rep = AlgebraReport {
        samples: count,
        ..Default::default()
    };
    for _ in 0..count {
        let n = rng.gen_range(1..=max_n);
        let kappa: Vec<f64> = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let kv = CurvatureVector::new(kappa.clone()).expect("finite");
        let a = random_shape(&mut rng, &kappa);
        let (tn, scale) = cayley_hamilton_residual(&a);
        rep.cayley_hamilton = rep.cayley_hamilton.max(tn / scale.max(1.0));
        let norm = a.matrix().norm();
        rep.char_poly = rep.char_poly.max(char_poly_check(&a) / (n as f64 / 2.0 + 1.0 + norm).powi(n as i32));
        let towers = newton_by_recursion(&a);
        for (r, t) in towers.iter().enumerate().take(n) {
            rep.trace_identities = rep.trace_identities.max(trace_identities(&kv, r).expect("r < n").max_rel_residual);
            let mut eig: Vec<f64> = ((t + t.transpose()) * 0.5).symmetric_eigen().eigenvalues.iter().copied().collect();
            eig.sort_by(f64::total_cmp);
            let mut mu = newton_by_spectrum(&kv, r).expect("r < n").mu;
            mu.sort_by(f64::total_cmp);
            let scale = norm.powi(r as i32).max(1.0);
            let d = eig.iter().zip(&mu).fold(0.0_f64, |m, (x, y)| m.max((x - y).abs()));
            rep.recursion_vs_spectrum = rep.recursion_vs_spectrum.max(d / scale);
        }
    }
    rep
}
