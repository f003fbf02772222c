//! Pointwise algebra of the shape operator: elementary symmetric functions of
//! the principal curvatures, r-th mean curvatures, and Newton transformations.
//!
//! Everything here is a pure function of a curvature vector or a small
//! symmetric matrix. The trace and characteristic-polynomial identities are
//! exposed as functions returning residuals so that callers (and the
//! acceptance suite) can check them on arbitrary input.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{GeomError, Result};

/// Principal curvatures `κ_1..κ_n` at one point of a hypersurface.
#[derive(Debug, Clone, PartialEq)]
pub struct CurvatureVector(Vec<f64>);

impl CurvatureVector {
    pub fn new(kappa: Vec<f64>) -> Result<Self> {
        if kappa.is_empty() {
            return Err(GeomError::InvalidInput("curvature vector must have n >= 1".into()));
        }
        if kappa.iter().any(|k| !k.is_finite()) {
            return Err(GeomError::InvalidInput("curvature vector has non-finite entries".into()));
        }
        Ok(Self(kappa))
    }

    pub fn kappa(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    /// Largest absolute principal curvature.
    pub fn max_abs(&self) -> f64 {
        self.0.iter().fold(0.0_f64, |m, k| m.max(k.abs()))
    }
}

/// Shape operator written in an orthonormal frame.
#[derive(Debug, Clone, PartialEq)]
pub struct ShapeMatrix(DMatrix<f64>);

/// Absolute symmetry tolerance for `O(1)` entries; scaled up for larger matrices.
pub const SYMMETRY_TOL: f64 = 1e-12;

impl ShapeMatrix {
    pub fn new(a: DMatrix<f64>) -> Result<Self> {
        if !a.is_square() || a.nrows() == 0 {
            return Err(GeomError::InvalidInput("shape matrix must be square and non-empty".into()));
        }
        let scale = a.amax().max(1.0);
        let asymmetry = (&a - a.transpose()).amax();
        let tolerance = SYMMETRY_TOL * scale;
        if asymmetry > tolerance {
            return Err(GeomError::NonSymmetricInput { asymmetry, tolerance });
        }
        Ok(Self(a))
    }

    /// Symmetrizes `a` before wrapping it. Use for matrices assembled from
    /// discretized data, where the asymmetry is a discretization artifact.
    pub fn symmetrized(a: &DMatrix<f64>) -> Self {
        Self((a + a.transpose()) * 0.5)
    }

    pub fn from_diagonal(kappa: &[f64]) -> Self {
        Self(DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(kappa)))
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    /// Eigenvalues in ascending order.
    pub fn principal_curvatures(&self) -> CurvatureVector {
        let eig = SymmetricEigen::new(self.0.clone());
        let mut k: Vec<f64> = eig.eigenvalues.iter().copied().collect();
        k.sort_by(|a, b| a.partial_cmp(b).unwrap());
        CurvatureVector(k)
    }
}

/// Elementary symmetric function `σ_r(x)`.
///
/// Uses the coefficient recurrence of `∏(t + x_i)`, which is `O(n²)` and
/// avoids the cancellation of subset enumeration.
pub fn sigma(r: usize, x: &[f64]) -> f64 {
    if r > x.len() {
        return 0.0;
    }
    sigma_all(x)[r]
}

/// All elementary symmetric functions `σ_0..σ_n` of `x`.
pub fn sigma_all(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mut e = vec![0.0; n + 1];
    e[0] = 1.0;
    for (i, &xi) in x.iter().enumerate() {
        for k in (1..=i + 1).rev() {
            e[k] += xi * e[k - 1];
        }
    }
    e
}

/// `σ_r` of `x` with entry `skip` removed.
pub fn sigma_without(r: usize, x: &[f64], skip: usize) -> f64 {
    let rest: Vec<f64> = x
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != skip)
        .map(|(_, &v)| v)
        .collect();
    sigma(r, &rest)
}

/// Binomial coefficient as a float.
pub fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// `S_0..S_n` together with the normalized `H_0..H_n`.
#[derive(Debug, Clone, PartialEq)]
pub struct MeanCurvatures {
    pub s: Vec<f64>,
    pub h: Vec<f64>,
}

impl MeanCurvatures {
    /// `S_r`, returning zero for `r > n`.
    pub fn s(&self, r: usize) -> f64 {
        self.s.get(r).copied().unwrap_or(0.0)
    }
}

pub fn mean_curvatures(kv: &CurvatureVector) -> MeanCurvatures {
    let n = kv.dim();
    let s = sigma_all(kv.kappa());
    let h = s
        .iter()
        .enumerate()
        .map(|(r, sr)| sr / binomial(n, r))
        .collect();
    MeanCurvatures { s, h }
}

/// Newton tower `T_0..T_n` of an arbitrary square matrix, with the
/// `S_r` generated along the way from `r S_r = Tr(A T_{r-1})`.
///
/// Works for mixed (non-symmetric) coordinate representations of the shape
/// operator as well, since it never diagonalizes.
pub fn newton_tower(a: &DMatrix<f64>) -> (Vec<f64>, Vec<DMatrix<f64>>) {
    let n = a.nrows();
    let id = DMatrix::<f64>::identity(n, n);
    let mut s = Vec::with_capacity(n + 1);
    let mut t = Vec::with_capacity(n + 1);
    s.push(1.0);
    t.push(id.clone());
    for r in 1..=n {
        let at_prev = a * &t[r - 1];
        let sr = at_prev.trace() / r as f64;
        s.push(sr);
        t.push(&id * sr - at_prev);
    }
    (s, t)
}

/// `T_0..T_n` by the recursion `T_r = S_r I − A T_{r−1}`.
pub fn newton_by_recursion(a: &ShapeMatrix) -> Vec<DMatrix<f64>> {
    newton_tower(a.matrix()).1
}

/// Cayley–Hamilton residual `‖T_n‖_F` together with the scale `‖A‖_F^n`
/// the residual is measured against.
pub fn cayley_hamilton_residual(a: &ShapeMatrix) -> (f64, f64) {
    let towers = newton_by_recursion(a);
    let n = a.dim();
    let tn = towers[n].norm();
    (tn, a.matrix().norm().powi(n as i32))
}

/// Eigenvalues of `T_r` read off the principal curvatures.
#[derive(Debug, Clone, PartialEq)]
pub struct NewtonSpectrum {
    pub r: usize,
    /// `μ_{i,r} = σ_r(κ without κ_i) = ∂σ_{r+1}/∂x_i`.
    pub mu: Vec<f64>,
    /// `S_0..S_n`.
    pub s: Vec<f64>,
}

impl NewtonSpectrum {
    pub fn is_positive_semidefinite(&self, tol: f64) -> bool {
        self.mu.iter().all(|&m| m >= -tol)
    }

    pub fn is_negative_semidefinite(&self, tol: f64) -> bool {
        self.mu.iter().all(|&m| m <= tol)
    }
}

pub fn newton_by_spectrum(kv: &CurvatureVector, r: usize) -> Result<NewtonSpectrum> {
    let n = kv.dim();
    if r > n {
        return Err(GeomError::InvalidInput(format!("r = {r} exceeds n = {n}")));
    }
    let k = kv.kappa();
    let mu = (0..n).map(|i| sigma_without(r, k, i)).collect();
    Ok(NewtonSpectrum {
        r,
        mu,
        s: sigma_all(k),
    })
}

/// Spectral traces of `T_r`, `A T_r`, `A² T_r` next to their closed forms.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceIdentities {
    pub tr_t: f64,
    pub tr_at: f64,
    pub tr_a2t: f64,
    /// `(n−r) S_r`
    pub closed_t: f64,
    /// `(r+1) S_{r+1}`
    pub closed_at: f64,
    /// `S_1 S_{r+1} − (r+2) S_{r+2}`
    pub closed_a2t: f64,
    /// Largest of the three residuals, each divided by the magnitude of the
    /// sum it came from (the same sum with `|κ_i|`).
    pub max_rel_residual: f64,
    /// `|(n−r) C(n,r) − (r+1) C(n,r+1)|`
    pub c_r_residual: f64,
}

pub fn trace_identities(kv: &CurvatureVector, r: usize) -> Result<TraceIdentities> {
    let n = kv.dim();
    let spec = newton_by_spectrum(kv, r)?;
    let k = kv.kappa();
    let s = |j: usize| spec.s.get(j).copied().unwrap_or(0.0);

    let tr_t: f64 = spec.mu.iter().sum();
    let tr_at: f64 = k.iter().zip(&spec.mu).map(|(ki, mi)| ki * mi).sum();
    let tr_a2t: f64 = k.iter().zip(&spec.mu).map(|(ki, mi)| ki * ki * mi).sum();

    let closed_t = (n - r) as f64 * s(r);
    let closed_at = (r + 1) as f64 * s(r + 1);
    let closed_a2t = s(1) * s(r + 1) - (r + 2) as f64 * s(r + 2);

    // magnitudes from the absolute curvatures bound the rounding error of each sum
    let abs_k: Vec<f64> = k.iter().map(|v| v.abs()).collect();
    let abs_mu: Vec<f64> = (0..n).map(|i| sigma_without(r, &abs_k, i)).collect();
    let abs_s = sigma_all(&abs_k);
    let mag_t: f64 = abs_mu.iter().sum::<f64>();
    let mag_at: f64 = abs_k.iter().zip(&abs_mu).map(|(a, b)| a * b).sum::<f64>();
    let mag_a2t: f64 = abs_k.iter().zip(&abs_mu).map(|(a, b)| a * a * b).sum::<f64>()
        + abs_s[1] * abs_s.get(r + 1).copied().unwrap_or(0.0);

    let rel = |d: f64, m: f64| if m > 0.0 { d.abs() / m } else { d.abs() };
    let max_rel_residual = rel(tr_t - closed_t, mag_t)
        .max(rel(tr_at - closed_at, mag_at))
        .max(rel(tr_a2t - closed_a2t, mag_a2t));

    let c_r_residual =
        ((n - r) as f64 * binomial(n, r) - (r + 1) as f64 * binomial(n, r + 1)).abs();

    Ok(TraceIdentities {
        tr_t,
        tr_at,
        tr_a2t,
        closed_t,
        closed_at,
        closed_a2t,
        max_rel_residual,
        c_r_residual,
    })
}

/// Compares `det(tI − A)` with `Σ (−1)^r S_r t^{n−r}` at `t ∈ {0, ±1, ±2, …}`
/// (n+1 points) and returns the largest absolute difference.
pub fn char_poly_check(a: &ShapeMatrix) -> f64 {
    let n = a.dim();
    let s = sigma_all(a.principal_curvatures().kappa());
    let id = DMatrix::<f64>::identity(n, n);
    let mut max_res = 0.0_f64;
    for j in 0..=n {
        let half = j.div_ceil(2) as f64;
        let t = if j % 2 == 1 { half } else { -half };
        let det = (&id * t - a.matrix()).determinant();
        let poly: f64 = (0..=n)
            .map(|r| {
                let sign = if r % 2 == 0 { 1.0 } else { -1.0 };
                sign * s[r] * t.powi((n - r) as i32)
            })
            .sum();
        max_res = max_res.max((det - poly).abs());
    }
    max_res
}

/// Coefficients `F_0..F_n` of the `𝒜_r` integrand in a space form of curvature `c`.
///
/// `F_0 = 1`, `F_1 = S_1`, `F_r = S_r + c(n−r+1)/(r−1) F_{r−2}`. The
/// recursion is run through `r = n` so that the top index is available.
pub fn f_r_sequence(s: &[f64], c: f64, n: usize) -> Vec<f64> {
    let sv = |r: usize| s.get(r).copied().unwrap_or(0.0);
    let mut f = Vec::with_capacity(n + 1);
    f.push(1.0);
    if n >= 1 {
        f.push(sv(1));
    }
    for r in 2..=n {
        let next = sv(r) + c * (n - r + 1) as f64 / (r - 1) as f64 * f[r - 2];
        f.push(next);
    }
    f
}
