//! `r`-stability: the sign criterion along a foliation, the spectrum of the
//! index form `I_r` over finite zero-mean bases, the integral identity that
//! links the two, and the functional `𝒜_r`.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::ambient::AmbientChart;
use crate::error::{GeomError, Result};
use crate::hypersurface::{build_leaf, curvature_fields, Definiteness, FoliationSlice, Immersion, LeafPatch, Orientation};
use crate::leafcalc::{ambient_class, case_applies, gradient, gram_matrix, mass_matrix, JacobiOperator, ScalarField};
use crate::symcurv::f_r_sequence;

/// Largest admissible condition number of the basis mass matrix.
pub const MAX_MASS_CONDITION: f64 = 1e8;
/// Relative threshold on Gram eigenvalues, `±tol·‖Q‖`.
pub const GRAM_TOL: f64 = 1e-8;
/// Bound on `|∫ f| / vol` for a zero-mean function.
pub const MEAN_TOL: f64 = 1e-10;

/// Linearly independent test functions on one leaf, optionally projected to mean zero.
#[derive(Debug, Clone)]
pub struct ZeroMeanBasis {
    pub functions: Vec<ScalarField>,
    /// `∫ f_i f_j`.
    pub gram_mass: DMatrix<f64>,
    /// Whether every function was projected to `∫ f = 0`.
    pub zero_mean: bool,
    /// Candidates rejected as (nearly) dependent.
    pub dropped: usize,
}

fn condition_number(m: &DMatrix<f64>) -> f64 {
    let eig = m.clone().symmetric_eigen().eigenvalues;
    let hi = eig.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    let lo = eig.iter().fold(f64::INFINITY, |a, &v| a.min(v));
    if lo <= 0.0 {
        f64::INFINITY
    } else {
        hi / lo
    }
}

impl ZeroMeanBasis {
    /// Projects `f ← f − (∫f)/vol` and keeps candidates greedily while the
    /// mass matrix stays well conditioned.
    pub fn new(leaf: &Arc<LeafPatch>, candidates: Vec<ScalarField>) -> Result<Self> {
        Self::build(leaf, candidates, true)
    }

    /// Same selection without the zero-mean projection.
    pub fn unconstrained(leaf: &Arc<LeafPatch>, candidates: Vec<ScalarField>) -> Result<Self> {
        Self::build(leaf, candidates, false)
    }

    fn build(leaf: &Arc<LeafPatch>, candidates: Vec<ScalarField>, zero_mean: bool) -> Result<Self> {
        let vol = leaf.volume();
        let mut functions: Vec<ScalarField> = Vec::new();
        let mut dropped = 0;
        for f in candidates {
            if f.leaf().id() != leaf.id() {
                return Err(GeomError::MismatchedLeaf);
            }
            let f = if zero_mean { f.zero_mean() } else { f };
            if f.inner(&f)? <= 1e-24 * vol {
                dropped += 1;
                continue;
            }
            functions.push(f);
            if condition_number(&mass_matrix(&functions)?) > MAX_MASS_CONDITION {
                functions.pop();
                dropped += 1;
            }
        }
        let gram_mass = mass_matrix(&functions)?;
        Ok(Self {
            functions,
            gram_mass,
            zero_mean,
            dropped,
        })
    }

    pub fn len(&self) -> usize {
        self.functions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.functions.is_empty()
    }

    /// `max |∫ f_i| / vol`.
    pub fn max_mean_defect(&self) -> f64 {
        self.functions
            .iter()
            .map(|f| f.integral().abs() / f.leaf().volume())
            .fold(0.0, f64::max)
    }

    /// The functions `Σ_j c_ji f_j` for the columns of `coeffs`.
    pub fn recombine(&self, coeffs: &DMatrix<f64>) -> Result<Vec<ScalarField>> {
        let leaf = self.functions[0].leaf();
        (0..coeffs.ncols())
            .map(|i| {
                let mut vals = vec![0.0; leaf.len()];
                for (j, f) in self.functions.iter().enumerate() {
                    for (v, fv) in vals.iter_mut().zip(f.values()) {
                        *v += coeffs[(j, i)] * fv;
                    }
                }
                ScalarField::new(leaf, vals)
            })
            .collect()
    }
}

/// Sign of `N(S_{r+1})` over a leaf.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SignClass {
    NonPositive,
    NonNegative,
    Mixed,
    /// Zero within tolerance everywhere (both signs hold).
    Zero,
}

impl SignClass {
    pub fn of(values: &[f64], tol: f64) -> Self {
        let pos = values.iter().all(|&v| v >= -tol);
        let neg = values.iter().all(|&v| v <= tol);
        match (pos, neg) {
            (true, true) => Self::Zero,
            (true, false) => Self::NonNegative,
            (false, true) => Self::NonPositive,
            (false, false) => Self::Mixed,
        }
    }

    pub fn allows_non_positive(self) -> bool {
        matches!(self, Self::NonPositive | Self::Zero)
    }

    pub fn allows_non_negative(self) -> bool {
        matches!(self, Self::NonNegative | Self::Zero)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    /// `I_r ≥ 0` on the tested subspace.
    StableNonNegative,
    /// `I_r ≤ 0` on the tested subspace.
    StableNonPositive,
    Unstable,
    Inconclusive,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::StableNonNegative => "r-stable (>=0)",
            Self::StableNonPositive => "r-stable (<=0)",
            Self::Unstable => "r-unstable",
            Self::Inconclusive => "inconclusive",
        })
    }
}

impl Verdict {
    /// Classifies a symmetric spectrum with the threshold `±tol·max|λ|`;
    /// a spectrum entirely below `floor` is inconclusive.
    pub fn of(spectrum: &[f64], tol: f64, floor: f64) -> Self {
        let norm = spectrum.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        if spectrum.is_empty() || norm <= floor {
            return Self::Inconclusive;
        }
        let eps = tol * norm;
        let has_neg = spectrum.iter().any(|&v| v < -eps);
        let has_pos = spectrum.iter().any(|&v| v > eps);
        match (has_neg, has_pos) {
            (true, true) => Self::Unstable,
            (false, true) => Self::StableNonNegative,
            (true, false) => Self::StableNonPositive,
            (false, false) => Self::Inconclusive,
        }
    }

    pub fn is_stable(self) -> bool {
        matches!(self, Self::StableNonNegative | Self::StableNonPositive)
    }
}

/// Sign criterion on one leaf of a foliation.
#[derive(Debug, Clone, Serialize)]
pub struct CriterionReport {
    pub r: usize,
    pub s: f64,
    pub r_tense: bool,
    pub t_r_sign: Definiteness,
    pub ns_r1_sign: SignClass,
    pub ns_r1_min: f64,
    pub ns_r1_max: f64,
    /// `r`-tense with `T_r ≥ 0, N(S_{r+1}) ≤ 0` or `T_r ≤ 0, N(S_{r+1}) ≥ 0`.
    pub criterion_met: bool,
    /// Ambient class guarantees `div T_r = 0` for this `r`.
    pub hypothesis_met: bool,
    pub ambient_class: String,
}

impl CriterionReport {
    /// The stability sign the criterion predicts.
    pub fn predicted(&self) -> Option<Verdict> {
        if !self.criterion_met {
            return None;
        }
        Some(match self.t_r_sign {
            Definiteness::PositiveSemidefinite if self.ns_r1_sign.allows_non_positive() => Verdict::StableNonNegative,
            _ => Verdict::StableNonPositive,
        })
    }
}

/// Tolerance for the sign of `N(S_{r+1})`.
fn ns_tol(leaf: &LeafPatch, r: usize) -> f64 {
    1e-8 * leaf.max_abs_curvature().powi(r as i32 + 2).max(1.0)
}

pub fn sign_criterion(slice: &FoliationSlice, r: usize) -> Result<CriterionReport> {
    let leaf = slice.leaf();
    let fields = curvature_fields(leaf, r)?;
    let ns = slice.normal_derivative_s_r1(r)?;
    let ns_r1_sign = SignClass::of(&ns, ns_tol(leaf, r));
    let t_r_sign = fields.t_r_sign();
    let signs_ok = match t_r_sign {
        Definiteness::PositiveSemidefinite => {
            ns_r1_sign.allows_non_positive()
                || (fields.mu.iter().flatten().all(|m| m.abs() <= 1e-10) && ns_r1_sign.allows_non_negative())
        }
        Definiteness::NegativeSemidefinite => ns_r1_sign.allows_non_negative(),
        Definiteness::Indefinite => false,
    };
    let class = ambient_class(leaf)?;
    Ok(CriterionReport {
        r,
        s: slice.s,
        r_tense: fields.r_tense,
        t_r_sign,
        ns_r1_sign,
        ns_r1_min: ns.iter().copied().fold(f64::INFINITY, f64::min),
        ns_r1_max: ns.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        criterion_met: fields.r_tense && signs_ok,
        hypothesis_met: case_applies(class, r),
        ambient_class: class.to_string(),
    })
}

/// Spectral test of `I_r` on one leaf.
#[derive(Debug, Clone, Serialize)]
pub struct StabilityReport {
    pub r: usize,
    /// Process-local identity of the leaf, not serialized.
    #[serde(skip)]
    pub leaf_id: u64,
    pub leaf: String,
    pub orientation: String,
    pub ambient_class: String,
    pub r_tense: bool,
    pub t_r_sign: Definiteness,
    pub ns_r1_sign: Option<SignClass>,
    pub criterion_met: Option<bool>,
    pub hypothesis_met: Option<bool>,
    pub zero_mean: bool,
    pub subspace_dim: usize,
    /// Eigenvalues of `Q_ij = I_r(f_i, f_j)`, ascending.
    pub gram_spectrum: Vec<f64>,
    pub gram_norm: f64,
    pub gram_asymmetry: f64,
    pub verdict: Verdict,
    pub summary: String,
}

impl StabilityReport {
    pub fn with_criterion(mut self, c: &CriterionReport) -> Self {
        self.ns_r1_sign = Some(c.ns_r1_sign);
        self.criterion_met = Some(c.criterion_met);
        self.hypothesis_met = Some(c.hypothesis_met);
        self
    }

    /// Criterion met but the spectrum disagrees with the predicted sign.
    pub fn contradicts_criterion(&self, c: &CriterionReport) -> bool {
        match c.predicted() {
            Some(Verdict::StableNonNegative) => !matches!(self.verdict, Verdict::StableNonNegative | Verdict::Inconclusive),
            Some(Verdict::StableNonPositive) => !matches!(self.verdict, Verdict::StableNonPositive | Verdict::Inconclusive),
            _ => false,
        }
    }
}

/// Eigenvalues (ascending) of the symmetrized Gram matrix of `I_r` and its asymmetry.
pub fn gram_spectrum(op: &JacobiOperator, basis: &ZeroMeanBasis) -> Result<(Vec<f64>, f64)> {
    let (q, asym) = gram_matrix(op, &basis.functions)?;
    let mut eig: Vec<f64> = q.symmetric_eigen().eigenvalues.iter().copied().collect();
    eig.sort_by(f64::total_cmp);
    Ok((eig, asym))
}

pub fn gram_stability(leaf: &Arc<LeafPatch>, r: usize, basis: &ZeroMeanBasis) -> Result<StabilityReport> {
    if basis.functions.iter().any(|f| f.leaf().id() != leaf.id()) {
        return Err(GeomError::MismatchedLeaf);
    }
    let op = JacobiOperator::new(leaf, r)?;
    let (spectrum, asym) = gram_spectrum(&op, basis)?;
    let mass_norm = basis.gram_mass.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let floor = 1e-12 * mass_norm * leaf.max_abs_curvature().powi(r as i32 + 2).max(1.0);
    let verdict = Verdict::of(&spectrum, GRAM_TOL, floor);
    let gram_norm = spectrum.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let class = ambient_class(leaf)?;
    let summary = match verdict {
        Verdict::Unstable => format!("r-unstable (r = {r}, indefinite on dim {})", basis.len()),
        Verdict::Inconclusive => format!("inconclusive: I_r vanishes on tested subspace (dim {}, r = {r})", basis.len()),
        v => format!("{v} on tested subspace (dim {}, r = {r})", basis.len()),
    };
    Ok(StabilityReport {
        r,
        leaf_id: leaf.id(),
        leaf: leaf.description.clone(),
        orientation: leaf.orientation.clone(),
        ambient_class: class.to_string(),
        r_tense: op.fields.r_tense,
        t_r_sign: op.fields.t_r_sign(),
        ns_r1_sign: None,
        criterion_met: None,
        hypothesis_met: None,
        zero_mean: basis.zero_mean,
        subspace_dim: basis.len(),
        gram_spectrum: spectrum,
        gram_norm,
        gram_asymmetry: asym,
        verdict,
        summary,
    })
}

/// Both sides of `∫⟨T_r(∇f + f w), ∇f + f w⟩ − f² N(S_{r+1}) = I_r(f, f)`, `w = ∇̄_N N`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct IdentityReport {
    pub lhs: f64,
    pub rhs: f64,
    pub residual: f64,
    pub scale: f64,
}

pub fn criterion_identity_residual(slice: &FoliationSlice, r: usize, f: &ScalarField) -> Result<IdentityReport> {
    let leaf = slice.leaf();
    let op = JacobiOperator::new(leaf, r)?;
    let rhs = op.ir(f, f)?;
    let ns = slice.normal_derivative_s_r1(r)?;
    let w = slice.nabla_n_n_tangent();
    let grad = gradient(f);
    let mut integrand = Vec::with_capacity(leaf.len());
    let mut sobolev = Vec::with_capacity(leaf.len());
    for node in 0..leaf.len() {
        let nd = &leaf.nodes[node];
        let fv = f.values()[node];
        let g = DVector::from_column_slice(&grad[node]);
        let v = &g + DVector::from_column_slice(&w[node]) * fv;
        let tv = &op.fields.t_r[node] * &v;
        let q = (tv.transpose() * &nd.metric * &v)[(0, 0)];
        integrand.push(q - fv * fv * ns[node]);
        sobolev.push(fv * fv + (g.transpose() * &nd.metric * &g)[(0, 0)]);
    }
    let lhs = leaf.integrate(&integrand);
    let scale = leaf.max_abs_curvature().powi(r as i32 + 2).max(1.0) * leaf.integrate(&sobolev).max(1.0);
    Ok(IdentityReport {
        lhs,
        rhs,
        residual: (lhs - rhs).abs(),
        scale,
    })
}

/// `𝒜_r = ∫ F_r` on a leaf of a space form of curvature `c`.
pub fn ar_functional(leaf: &LeafPatch, r: usize, c: f64) -> Result<f64> {
    if r > leaf.n {
        return Err(GeomError::InvalidInput(format!("r = {r} exceeds leaf dimension {}", leaf.n)));
    }
    let class = ambient_class(leaf)?;
    match class.space_form_curvature() {
        Some(fit) if (fit - c).abs() <= 1e-6 * c.abs().max(1.0) => {}
        Some(fit) => {
            return Err(GeomError::CaseNotApplicable(format!(
                "ambient has curvature {fit}, not {c}"
            )))
        }
        None => return Err(GeomError::CaseNotApplicable(format!("ambient is {class}, not a space form"))),
    }
    let fields = curvature_fields(leaf, 0)?;
    let vals: Vec<f64> = fields.s.iter().map(|s| f_r_sequence(s, c, leaf.n)[r]).collect();
    Ok(leaf.integrate(&vals))
}

/// Second difference of `𝒜_r` along `x + s f N` against `(r+1) I_r(f, f)`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct SecondVariationReport {
    pub step: f64,
    pub ar_second_difference: f64,
    pub expected: f64,
    pub discrepancy: f64,
}

pub fn second_variation_discrepancy(
    chart: &AmbientChart,
    imm: &Immersion,
    orientation: Orientation,
    r: usize,
    f: &dyn Fn(&Arc<LeafPatch>) -> Result<ScalarField>,
    step: f64,
) -> Result<SecondVariationReport> {
    let leaf = Arc::new(build_leaf(chart, imm, orientation)?);
    let c = ambient_class(&leaf)?
        .space_form_curvature()
        .ok_or_else(|| GeomError::CaseNotApplicable("ambient is not a space form".into()))?;
    let fv = f(&leaf)?;
    let expected = (r as f64 + 1.0) * JacobiOperator::new(&leaf, r)?.ir(&fv, &fv)?;
    let ar_at = |s: f64| -> Result<f64> {
        let mut moved = imm.clone();
        for (p, (nd, v)) in moved.points.iter_mut().zip(leaf.nodes.iter().zip(fv.values())) {
            for (x, nu) in p.iter_mut().zip(nd.normal.iter()) {
                *x += s * v * nu;
            }
        }
        ar_functional(&build_leaf(chart, &moved, orientation)?, r, c)
    };
    let a: Vec<f64> = [-2.0, -1.0, 0.0, 1.0, 2.0]
        .iter()
        .map(|o| ar_at(o * step))
        .collect::<Result<_>>()?;
    let d2 = (-a[0] + 16.0 * a[1] - 30.0 * a[2] + 16.0 * a[3] - a[4]) / (12.0 * step * step);
    Ok(SecondVariationReport {
        step,
        ar_second_difference: d2,
        expected,
        discrepancy: (d2 - expected).abs(),
    })
}
