//! Ambient vector fields: conformal classification, normal components and
//! the residual checks relating `J_r` to Killing and conformal fields.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use crate::ambient::{sample_points, AmbientChart};
use crate::error::{GeomError, Result};
use crate::expr::Expr;
use crate::hypersurface::{FoliationSlice, LeafPatch};
use crate::leafcalc::{gradient, gram_matrix, mass_matrix, JacobiOperator, ScalarField};

/// `|k|` bound for a Killing verdict.
pub const KILLING_K_TOL: f64 = 1e-8;
/// Bound on `|L_U g − 2k g|` (orthonormal frame) for a conformal verdict.
pub const CONFORMAL_TOL: f64 = 1e-7;
/// Step of the central difference for `N(k)`.
pub const NORMAL_K_STEP: f64 = 1e-4;
/// Step of the central differences for `∂U`.
pub const FIELD_FD_STEP: f64 = 1e-3;
/// Relative bound on `|J_r f|` for a Jacobi verdict.
pub const JACOBI_TOL: f64 = 5e-5;

pub type VectorFn = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum DeclaredKind {
    Unknown,
    Killing,
    Conformal,
}

/// A vector field on the ambient chart, in chart components.
#[derive(Clone)]
pub struct AmbientVectorField {
    pub name: String,
    pub declared_kind: DeclaredKind,
    value: VectorFn,
}

impl fmt::Debug for AmbientVectorField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("AmbientVectorField")
            .field("name", &self.name)
            .field("declared_kind", &self.declared_kind)
            .finish()
    }
}

impl AmbientVectorField {
    pub fn new(name: impl Into<String>, declared_kind: DeclaredKind, value: VectorFn) -> Self {
        Self {
            name: name.into(),
            declared_kind,
            value,
        }
    }

    pub fn zero(dim: usize) -> Self {
        Self::new("zero", DeclaredKind::Killing, Arc::new(move |_| vec![0.0; dim]))
    }

    /// `∂_axis`.
    pub fn translation(dim: usize, axis: usize) -> Self {
        Self::new(
            format!("translation({axis})"),
            DeclaredKind::Killing,
            Arc::new(move |_| {
                let mut v = vec![0.0; dim];
                v[axis] = 1.0;
                v
            }),
        )
    }

    /// `x^i ∂_j − x^j ∂_i`.
    pub fn rotation(dim: usize, i: usize, j: usize) -> Self {
        Self::new(
            format!("rotation({i},{j})"),
            DeclaredKind::Killing,
            Arc::new(move |p: &[f64]| {
                let mut v = vec![0.0; dim];
                v[j] += p[i];
                v[i] -= p[j];
                v
            }),
        )
    }

    /// `x^a ∂_a`.
    pub fn position() -> Self {
        Self::new("position", DeclaredKind::Conformal, Arc::new(|p: &[f64]| p.to_vec()))
    }

    /// `2⟨b,x⟩ x − |x|² b`, conformal in Euclidean space with `k = 2⟨b,x⟩`.
    pub fn special_conformal(b: Vec<f64>) -> Self {
        let name = format!(
            "special-conformal({})",
            b.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
        );
        Self::new(
            name,
            DeclaredKind::Conformal,
            Arc::new(move |p: &[f64]| {
                let bx: f64 = b.iter().zip(p).map(|(u, v)| u * v).sum();
                let xx: f64 = p.iter().map(|v| v * v).sum();
                p.iter().zip(&b).map(|(x, bi)| 2.0 * bx * x - xx * bi).collect()
            }),
        )
    }

    /// `f(t) ∂_t` on a warped chart.
    pub fn warped_normal(dim: usize, f: Expr) -> Self {
        Self::new(
            format!("warped-normal({f})"),
            DeclaredKind::Unknown,
            Arc::new(move |p: &[f64]| {
                let mut v = vec![0.0; dim];
                v[0] = f.eval(p[0]);
                v
            }),
        )
    }

    /// Catalog entry by name: `zero`, `position`, `translation(a)`,
    /// `rotation(i,j)`, `special-conformal(b0,…)`, `warped-normal(expr)`.
    /// Axis indices are chart coordinates counted from 0.
    pub fn parse(src: &str, dim: usize) -> Result<Self> {
        let src = src.trim();
        let bad = |msg: String| GeomError::InvalidInput(format!("vector field `{src}`: {msg}"));
        let (head, args) = match src.find('(') {
            Some(i) if src.ends_with(')') => (src[..i].trim(), Some(&src[i + 1..src.len() - 1])),
            Some(_) => return Err(bad("unbalanced parentheses".into())),
            None => (src, None),
        };
        let indices = |args: &str, count: usize| -> Result<Vec<usize>> {
            let idx: Vec<usize> = args
                .split(',')
                .map(|a| a.trim().parse::<usize>().map_err(|e| bad(e.to_string())))
                .collect::<Result<_>>()?;
            if idx.len() != count {
                return Err(bad(format!("expected {count} indices")));
            }
            if let Some(&i) = idx.iter().find(|&&i| i >= dim) {
                return Err(bad(format!("axis {i} out of range for dimension {dim}")));
            }
            Ok(idx)
        };
        match (head, args) {
            ("zero", None) => Ok(Self::zero(dim)),
            ("position", None) => Ok(Self::position()),
            ("translation", Some(a)) => Ok(Self::translation(dim, indices(a, 1)?[0])),
            ("rotation", Some(a)) => {
                let idx = indices(a, 2)?;
                if idx[0] == idx[1] {
                    return Err(bad("rotation axes must differ".into()));
                }
                Ok(Self::rotation(dim, idx[0], idx[1]))
            }
            ("special-conformal", Some(a)) => {
                let b: Vec<f64> = a
                    .split(',')
                    .map(|v| v.trim().parse::<f64>().map_err(|e| bad(e.to_string())))
                    .collect::<Result<_>>()?;
                if b.len() != dim {
                    return Err(bad(format!("expected {dim} components")));
                }
                Ok(Self::special_conformal(b))
            }
            ("warped-normal", Some(a)) => Ok(Self::warped_normal(dim, Expr::parse(a)?)),
            _ => Err(bad("unknown field".into())),
        }
    }

    pub fn eval(&self, p: &[f64]) -> DVector<f64> {
        DVector::from_vec((self.value)(p))
    }

    /// `J[(a, c)] = ∂_c U^a` by fourth-order central differences.
    pub fn jacobian(&self, p: &[f64]) -> DMatrix<f64> {
        let d = p.len();
        let h = FIELD_FD_STEP;
        let mut jac = DMatrix::zeros(d, d);
        let mut q = p.to_vec();
        for c in 0..d {
            let mut at = |s: f64| {
                q[c] = p[c] + s * h;
                let v = (self.value)(&q);
                q[c] = p[c];
                v
            };
            let (m2, m1, p1, p2) = (at(-2.0), at(-1.0), at(1.0), at(2.0));
            for a in 0..d {
                jac[(a, c)] = (m2[a] - 8.0 * m1[a] + 8.0 * p1[a] - p2[a]) / (12.0 * h);
            }
        }
        jac
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConformalVerdict {
    Killing,
    Conformal,
    NotConformal,
}

impl fmt::Display for ConformalVerdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Killing => "killing",
            Self::Conformal => "conformal",
            Self::NotConformal => "not-conformal",
        })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ConformalReport {
    pub samples: Vec<Vec<f64>>,
    /// Half the conformal factor at each sample.
    pub k: Vec<f64>,
    pub max_abs_k: f64,
    /// Largest entry of `L_U g − 2k g` in a metric-orthonormal frame.
    pub max_deviation: f64,
    pub verdict: ConformalVerdict,
}

/// `(L_U g)_ab = U^c ∂_c g_ab + g_cb ∂_a U^c + g_ac ∂_b U^c`, then
/// `k = tr(g⁻¹ L_U g) / (2 dim)` and the deviation from `2k g`.
pub fn conformal_at(chart: &AmbientChart, u: &AmbientVectorField, p: &[f64]) -> Result<(f64, f64)> {
    let jet = chart.jet(p)?;
    let d = chart.dim();
    let val = u.eval(p);
    let jac = u.jacobian(p);
    let g = &jet.g;
    let mut lie = DMatrix::zeros(d, d);
    for a in 0..d {
        for b in 0..d {
            let mut acc = 0.0;
            for c in 0..d {
                acc += val[c] * jet.dg[c][(a, b)] + g[(c, b)] * jac[(c, a)] + g[(a, c)] * jac[(c, b)];
            }
            lie[(a, b)] = acc;
        }
    }
    let chol = g
        .clone()
        .cholesky()
        .ok_or_else(|| GeomError::InvalidInput(format!("metric not positive definite at {p:?}")))?;
    let ginv = chol.inverse();
    let k = (&ginv * &lie).trace() / (2.0 * d as f64);
    let l = chol.l();
    let linv = l.clone().try_inverse().expect("invertible Cholesky factor");
    let dev = &linv * (&lie - g * (2.0 * k)) * linv.transpose();
    Ok((k, dev.amax()))
}

/// Conformal classification of `U` over sample points.
pub fn conformal_factor(chart: &AmbientChart, u: &AmbientVectorField, samples: &[Vec<f64>]) -> Result<ConformalReport> {
    if samples.len() < 10 {
        return Err(GeomError::InvalidInput(format!(
            "conformal classification needs at least 10 samples, got {}",
            samples.len()
        )));
    }
    let vals: Vec<(f64, f64)> = samples
        .par_iter()
        .map(|p| conformal_at(chart, u, p))
        .collect::<Result<_>>()?;
    let k: Vec<f64> = vals.iter().map(|v| v.0).collect();
    let max_abs_k = k.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let max_deviation = vals.iter().fold(0.0_f64, |m, v| m.max(v.1));
    let verdict = if max_deviation >= CONFORMAL_TOL {
        ConformalVerdict::NotConformal
    } else if max_abs_k < KILLING_K_TOL {
        ConformalVerdict::Killing
    } else {
        ConformalVerdict::Conformal
    };
    Ok(ConformalReport {
        samples: samples.to_vec(),
        k,
        max_abs_k,
        max_deviation,
        verdict,
    })
}

/// Chart samples plus up to ten leaf points, so the verdict covers the leaf.
pub fn leaf_samples(leaf: &LeafPatch) -> Vec<Vec<f64>> {
    let mut pts = sample_points(&leaf.chart, 10);
    let stride = (leaf.len() / 10).max(1);
    pts.extend(leaf.nodes.iter().step_by(stride).take(10).map(|nd| nd.point.clone()));
    pts
}

/// `f = ⟨U, N⟩` per node.
pub fn normal_component(leaf: &Arc<LeafPatch>, u: &AmbientVectorField) -> Result<ScalarField> {
    ScalarField::from_node_fn(leaf, |nd| nd.inner(&u.eval(&nd.point), &nd.normal))
}

fn induced_norm(metric: &DMatrix<f64>, v: &[f64]) -> f64 {
    let v = DVector::from_column_slice(v);
    (v.transpose() * metric * &v)[(0, 0)].max(0.0).sqrt()
}

/// `max(1, ‖A‖_∞^{r+2} ‖U‖_∞)` over the leaf.
pub fn residual_scale(leaf: &LeafPatch, u: &AmbientVectorField, r: usize) -> f64 {
    let u_max = leaf.nodes.iter().fold(0.0_f64, |m, nd| {
        let v = u.eval(&nd.point);
        m.max(nd.inner(&v, &v).max(0.0).sqrt())
    });
    (leaf.max_abs_curvature().powi(r as i32 + 2) * u_max).max(1.0)
}

/// `max |∇f + (∇̄_N U)^⊤ + A U^⊤|` with `f = ⟨U, N⟩`.
pub fn gradient_formula_residual(leaf: &Arc<LeafPatch>, u: &AmbientVectorField) -> Result<f64> {
    let f = normal_component(leaf, u)?;
    let grad = gradient(&f);
    let per_node: Vec<f64> = leaf
        .nodes
        .par_iter()
        .zip(&grad)
        .map(|(nd, gf)| {
            let val = u.eval(&nd.point);
            let gamma = leaf.chart.christoffels(&nd.point)?;
            let nv: Vec<f64> = nd.normal.iter().copied().collect();
            let uv: Vec<f64> = val.iter().copied().collect();
            let nabla_nu = u.jacobian(&nd.point) * &nd.normal + DVector::from_vec(gamma.contract(&nv, &uv));
            let t1 = nd.tangential(&nabla_nu);
            let au = &nd.shape * DVector::from_vec(nd.tangential(&val));
            let w: Vec<f64> = (0..leaf.n).map(|i| gf[i] + t1[i] + au[i]).collect();
            Ok(induced_norm(&nd.metric, &w))
        })
        .collect::<Result<_>>()?;
    Ok(per_node.into_iter().fold(0.0, f64::max))
}

/// Both sides of the conformal-field formula for `J_r f`.
#[derive(Debug, Clone, Serialize)]
pub struct ConformalIdentityReport {
    pub r: usize,
    pub field: String,
    pub verdict: ConformalVerdict,
    pub residual: f64,
    pub scale: f64,
    pub max_jr: f64,
    pub max_rhs: f64,
    pub max_abs_k: f64,
}

/// `U^⊤(S_{r+1})` per node.
fn tangential_derivative_s_r1(leaf: &LeafPatch, op: &JacobiOperator, u: &AmbientVectorField) -> Vec<f64> {
    let s = op.fields.s_r1_field();
    let ds: Vec<Vec<f64>> = (0..leaf.n).map(|i| leaf.diff(i, &s)).collect();
    leaf.nodes
        .iter()
        .enumerate()
        .map(|(node, nd)| {
            let ut = nd.tangential(&u.eval(&nd.point));
            (0..leaf.n).map(|i| ut[i] * ds[i][node]).sum()
        })
        .collect()
}

/// `max |J_r f + U^⊤(S_{r+1}) + (r+1) k S_{r+1} + N(k)(n−r) S_r|`.
///
/// `k` comes from the Lie derivative of the metric at each node and `N(k)`
/// from a central difference along the unit normal.
pub fn conformal_jacobi_residual(leaf: &Arc<LeafPatch>, u: &AmbientVectorField, r: usize) -> Result<ConformalIdentityReport> {
    let report = conformal_factor(&leaf.chart, u, &leaf_samples(leaf))?;
    if report.verdict == ConformalVerdict::NotConformal {
        return Err(GeomError::NotConformal {
            deviation: report.max_deviation,
        });
    }
    let op = JacobiOperator::new(leaf, r)?;
    let f = normal_component(leaf, u)?;
    let jf = op.jr(&f)?;
    let ut_s = tangential_derivative_s_r1(leaf, &op, u);
    let n = leaf.n as f64;
    let h = NORMAL_K_STEP;
    let rhs: Vec<f64> = leaf
        .nodes
        .par_iter()
        .enumerate()
        .map(|(node, nd)| {
            let (k, _) = conformal_at(&leaf.chart, u, &nd.point)?;
            let shifted = |s: f64| -> Vec<f64> { nd.point.iter().zip(nd.normal.iter()).map(|(x, v)| x + s * v).collect() };
            let (kp, _) = conformal_at(&leaf.chart, u, &shifted(h))?;
            let (km, _) = conformal_at(&leaf.chart, u, &shifted(-h))?;
            let nk = (kp - km) / (2.0 * h);
            Ok(-ut_s[node]
                - (r as f64 + 1.0) * k * op.fields.s_r1(node)
                - nk * (n - r as f64) * op.fields.s_r(node))
        })
        .collect::<Result<_>>()?;
    let residual = jf.values().iter().zip(&rhs).fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
    Ok(ConformalIdentityReport {
        r,
        field: u.name.clone(),
        verdict: report.verdict,
        residual,
        scale: residual_scale(leaf, u, r),
        max_jr: jf.max_abs(),
        max_rhs: rhs.iter().fold(0.0_f64, |m, v| m.max(v.abs())),
        max_abs_k: report.max_abs_k,
    })
}

/// `max |J_r f + U^⊤(S_{r+1})|` for a Killing field; needs no constancy of `S_{r+1}`.
pub fn killing_residual(leaf: &Arc<LeafPatch>, u: &AmbientVectorField, r: usize) -> Result<ConformalIdentityReport> {
    let report = conformal_factor(&leaf.chart, u, &leaf_samples(leaf))?;
    if report.verdict != ConformalVerdict::Killing {
        return Err(GeomError::PreconditionFailed(format!(
            "{} is {}, not Killing",
            u.name, report.verdict
        )));
    }
    let op = JacobiOperator::new(leaf, r)?;
    let jf = op.jr(&normal_component(leaf, u)?)?;
    let rhs: Vec<f64> = tangential_derivative_s_r1(leaf, &op, u).into_iter().map(|v| -v).collect();
    let residual = jf.values().iter().zip(&rhs).fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
    Ok(ConformalIdentityReport {
        r,
        field: u.name.clone(),
        verdict: report.verdict,
        residual,
        scale: residual_scale(leaf, u, r),
        max_jr: jf.max_abs(),
        max_rhs: rhs.iter().fold(0.0_f64, |m, v| m.max(v.abs())),
        max_abs_k: report.max_abs_k,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct JacobiCheck {
    pub field: String,
    pub r: usize,
    pub is_jacobi: bool,
    /// `max |J_r f|`.
    pub residual: f64,
    pub scale: f64,
}

/// Whether the normal part of a Killing field is annihilated by `J_r` on an
/// `r`-tense leaf.
pub fn jacobi_check(leaf: &Arc<LeafPatch>, u: &AmbientVectorField, r: usize) -> Result<JacobiCheck> {
    let op = JacobiOperator::new(leaf, r)?;
    if !op.fields.r_tense {
        return Err(GeomError::PreconditionFailed(format!(
            "S_{} varies over the leaf (deviation {:.3e})",
            r + 1,
            op.fields.s_r1_deviation
        )));
    }
    let report = conformal_factor(&leaf.chart, u, &leaf_samples(leaf))?;
    if report.verdict != ConformalVerdict::Killing {
        return Err(GeomError::PreconditionFailed(format!(
            "{} is {}, not Killing",
            u.name, report.verdict
        )));
    }
    let residual = op.jr(&normal_component(leaf, u)?)?.max_abs();
    let scale = residual_scale(leaf, u, r);
    Ok(JacobiCheck {
        field: u.name.clone(),
        r,
        is_jacobi: residual < JACOBI_TOL * scale,
        residual,
        scale,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct PreservingReport {
    pub field: String,
    pub r: usize,
    /// `max |∇f + f ∇̄_N N|`.
    pub cond_residual: f64,
    /// `max |J_r f|`.
    pub jacobi_residual: f64,
    pub scale: f64,
}

/// Bound on `N(S_{r+1})` for leaves to count as sharing one constant.
fn equicurved_tol(leaf: &LeafPatch, r: usize) -> f64 {
    1e-7 * leaf.max_abs_curvature().powi(r as i32 + 2).max(1.0)
}

fn check_equicurved(slice: &FoliationSlice, op: &JacobiOperator, r: usize) -> Result<()> {
    if !op.fields.r_tense {
        return Err(GeomError::LeavesNotEquicurved(format!(
            "S_{} varies over the leaf (deviation {:.3e})",
            r + 1,
            op.fields.s_r1_deviation
        )));
    }
    let ns = slice.normal_derivative_s_r1(r)?;
    let worst = ns.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    if worst > equicurved_tol(slice.leaf(), r) {
        return Err(GeomError::LeavesNotEquicurved(format!(
            "S_{} changes across leaves (|N(S)| up to {worst:.3e})",
            r + 1
        )));
    }
    Ok(())
}

/// `max |∇f + f ∇̄_N N|` per node, the infinitesimal leaf-preserving condition.
fn preserving_defect(slice: &FoliationSlice, f: &ScalarField) -> Vec<f64> {
    let leaf = slice.leaf();
    let w = slice.nabla_n_n_tangent();
    gradient(f)
        .iter()
        .zip(&w)
        .zip(&leaf.nodes)
        .zip(f.values())
        .map(|(((g, w), nd), fv)| {
            let v: Vec<f64> = g.iter().zip(w).map(|(a, b)| a + fv * b).collect();
            induced_norm(&nd.metric, &v)
        })
        .collect()
}

/// Leaf-preserving condition and Jacobi residual for `f = ⟨V, N⟩`.
pub fn foliation_preserving_residual(slice: &FoliationSlice, v: &AmbientVectorField, r: usize) -> Result<PreservingReport> {
    let leaf = slice.leaf();
    let op = JacobiOperator::new(leaf, r)?;
    check_equicurved(slice, &op, r)?;
    let f = normal_component(leaf, v)?;
    let cond_residual = preserving_defect(slice, &f).into_iter().fold(0.0, f64::max);
    Ok(PreservingReport {
        field: v.name.clone(),
        r,
        cond_residual,
        jacobi_residual: op.jr(&f)?.max_abs(),
        scale: residual_scale(leaf, v, r),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct KernelReport {
    pub r: usize,
    pub basis_dim: usize,
    /// Generalized eigenvalues of `Q c = λ M c`, ascending.
    pub eigenvalues: Vec<f64>,
    pub kernel_dim: usize,
    /// Largest `max |∇f + f ∇̄_N N|` over kernel functions with `∫ f² = 1`.
    pub max_cond_residual: f64,
    /// Largest `max |J_r f|` over the same functions.
    pub max_jr: f64,
}

/// Relative size below which a generalized eigenvalue counts as zero.
pub const KERNEL_TOL: f64 = 1e-6;

/// Kernel of the discrete `I_r` form over `basis` and the leaf-preserving
/// defect of each kernel function.
pub fn kernel_preservation(slice: &FoliationSlice, r: usize, basis: &[ScalarField]) -> Result<KernelReport> {
    let leaf = slice.leaf();
    let op = JacobiOperator::new(leaf, r)?;
    let (q, _) = gram_matrix(&op, basis)?;
    let m = mass_matrix(basis)?;
    let chol = m
        .cholesky()
        .ok_or_else(|| GeomError::InvalidInput("basis functions are linearly dependent".into()))?;
    let l = chol.l();
    let linv = l.clone().try_inverse().expect("invertible Cholesky factor");
    let c = &linv * &q * linv.transpose();
    let c = (&c + c.transpose()) * 0.5;
    let eig = c.symmetric_eigen();
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let eigenvalues: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let top = eigenvalues.iter().fold(0.0_f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
    let mut max_cond_residual = 0.0_f64;
    let mut max_jr = 0.0_f64;
    let mut kernel_dim = 0;
    for &i in &order {
        if eig.eigenvalues[i].abs() > KERNEL_TOL * top {
            continue;
        }
        kernel_dim += 1;
        let coef = linv.transpose() * eig.eigenvectors.column(i);
        let mut vals = vec![0.0; leaf.len()];
        for (cj, fj) in coef.iter().zip(basis) {
            for (v, fv) in vals.iter_mut().zip(fj.values()) {
                *v += cj * fv;
            }
        }
        let f = ScalarField::new(leaf, vals)?;
        let norm = f.inner(&f)?.sqrt();
        let f = f.scale(1.0 / norm);
        max_cond_residual = max_cond_residual.max(preserving_defect(slice, &f).into_iter().fold(0.0, f64::max));
        max_jr = max_jr.max(op.jr(&f)?.max_abs());
    }
    Ok(KernelReport {
        r,
        basis_dim: basis.len(),
        eigenvalues,
        kernel_dim,
        max_cond_residual,
        max_jr,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ambient::{make_warped, WarpedSpec};
    use crate::grid::DiffScheme;
    use crate::hypersurface::{
        build_leaf, cylinder_family, euclidean_for, sphere_immersion, warped_family, Orientation,
    };
    use crate::testfns::fourier_bump_basis;

    fn sphere(eps: f64, sizes: &[usize]) -> Arc<LeafPatch> {
        let chart = euclidean_for(3, 1.5);
        Arc::new(
            build_leaf(&chart, &sphere_immersion(2, 1.0, eps, sizes, DiffScheme::Spectral).unwrap(), Orientation::Natural)
                .unwrap(),
        )
    }

    fn exp_warped(n: usize, a: f64) -> AmbientChart {
        make_warped(&WarpedSpec::diagonal(vec![Expr::constant(a); n], (-1.0, 1.0))).unwrap()
    }

    #[test]
    fn euclidean_classification() {
        let chart = AmbientChart::euclidean(3, 2.0);
        let pts = sample_points(&chart, 12);
        let t = conformal_factor(&chart, &AmbientVectorField::translation(3, 2), &pts).unwrap();
        assert_eq!(t.verdict, ConformalVerdict::Killing);
        let rot = conformal_factor(&chart, &AmbientVectorField::rotation(3, 0, 1), &pts).unwrap();
        assert_eq!(rot.verdict, ConformalVerdict::Killing);
        let pos = conformal_factor(&chart, &AmbientVectorField::position(), &pts).unwrap();
        assert_eq!(pos.verdict, ConformalVerdict::Conformal);
        assert!(pos.k.iter().all(|k| (k - 1.0).abs() < 1e-10));
        let sc = conformal_factor(&chart, &AmbientVectorField::special_conformal(vec![0.0, 0.0, 1.0]), &pts).unwrap();
        assert_eq!(sc.verdict, ConformalVerdict::Conformal);
        for (p, k) in pts.iter().zip(&sc.k) {
            assert!((k - 2.0 * p[2]).abs() < 1e-9);
        }
        let shear = AmbientVectorField::new("shear", DeclaredKind::Unknown, Arc::new(|p: &[f64]| vec![p[1], 0.0, 0.0]));
        assert_eq!(conformal_factor(&chart, &shear, &pts).unwrap().verdict, ConformalVerdict::NotConformal);
        assert!(conformal_factor(&chart, &shear, &pts[..5]).is_err());
    }

    #[test]
    fn warped_fields() {
        let chart = exp_warped(2, 0.5);
        let pts = sample_points(&chart, 12);
        let tx = conformal_factor(&chart, &AmbientVectorField::translation(3, 1), &pts).unwrap();
        assert_eq!(tx.verdict, ConformalVerdict::Killing);
        // e^{-at} ∂_t is conformal with k = −a e^{−at}
        let u = AmbientVectorField::parse("warped-normal(exp(-0.5*t))", 3).unwrap();
        let rep = conformal_factor(&chart, &u, &pts).unwrap();
        assert_eq!(rep.verdict, ConformalVerdict::Conformal);
        for (p, k) in pts.iter().zip(&rep.k) {
            assert!((k + 0.5 * (-0.5 * p[0]).exp()).abs() < 1e-9, "{k}");
        }
        let s = AmbientVectorField::parse("warped-normal(sin(t))", 3).unwrap();
        assert_eq!(conformal_factor(&chart, &s, &pts).unwrap().verdict, ConformalVerdict::NotConformal);
    }

    #[test]
    fn catalog_parsing() {
        assert_eq!(AmbientVectorField::parse("rotation(0, 2)", 3).unwrap().name, "rotation(0,2)");
        assert!(AmbientVectorField::parse("rotation(1,1)", 3).is_err());
        assert!(AmbientVectorField::parse("translation(3)", 3).is_err());
        assert!(AmbientVectorField::parse("boost(1)", 3).is_err());
        assert!(AmbientVectorField::parse("special-conformal(1,2)", 3).is_err());
        let p = AmbientVectorField::parse("position", 3).unwrap();
        assert_eq!(p.eval(&[1.0, 2.0, 3.0]).as_slice(), &[1.0, 2.0, 3.0]);
    }

    #[test]
    fn normal_components_on_sphere() {
        let leaf = sphere(0.0, &[16, 16]);
        let f = normal_component(&leaf, &AmbientVectorField::translation(3, 2)).unwrap();
        for (v, nd) in f.values().iter().zip(&leaf.nodes) {
            assert!((v + nd.point[2]).abs() < 1e-12);
        }
        let f = normal_component(&leaf, &AmbientVectorField::position()).unwrap();
        assert!(f.values().iter().all(|v| (v + 1.0).abs() < 1e-12));
    }

    #[test]
    fn gradient_formula_on_sphere() {
        let leaf = sphere(0.0, &[16, 16]);
        for u in [
            AmbientVectorField::translation(3, 2),
            AmbientVectorField::position(),
            AmbientVectorField::zero(3),
            AmbientVectorField::rotation(3, 0, 2),
        ] {
            assert!(gradient_formula_residual(&leaf, &u).unwrap() < 1e-9, "{}", u.name);
        }
        let bumpy = sphere(0.1, &[32, 32]);
        let u = AmbientVectorField::special_conformal(vec![0.3, 0.0, 0.2]);
        assert!(gradient_formula_residual(&bumpy, &u).unwrap() < 1e-8);
    }

    #[test]
    fn position_field_on_unit_sphere() {
        let leaf = sphere(0.0, &[16, 16]);
        for r in 0..=2 {
            let rep = conformal_jacobi_residual(&leaf, &AmbientVectorField::position(), r).unwrap();
            let s_r1 = crate::symcurv::sigma(r + 1, &[1.0, 1.0]);
            assert!(rep.residual < 1e-9, "r={r}: {}", rep.residual);
            assert!((rep.max_jr - (r as f64 + 1.0) * s_r1).abs() < 1e-9);
        }
    }

    #[test]
    fn conformal_formula_on_perturbed_sphere() {
        let leaf = sphere(0.1, &[32, 32]);
        for u in [
            AmbientVectorField::position(),
            AmbientVectorField::special_conformal(vec![0.2, -0.1, 0.3]),
        ] {
            for r in 0..=1 {
                let rep = conformal_jacobi_residual(&leaf, &u, r).unwrap();
                assert!(rep.residual < 5e-5 * rep.scale, "{} r={r}: {}", u.name, rep.residual);
                assert!(rep.max_jr > 0.1);
            }
        }
        let shear = AmbientVectorField::new("shear", DeclaredKind::Unknown, Arc::new(|p: &[f64]| vec![p[1], 0.0, 0.0]));
        assert!(matches!(conformal_jacobi_residual(&leaf, &shear, 0), Err(GeomError::NotConformal { .. })));
    }

    #[test]
    fn killing_on_perturbed_sphere() {
        let leaf = sphere(0.1, &[32, 32]);
        for u in [AmbientVectorField::translation(3, 0), AmbientVectorField::rotation(3, 0, 1)] {
            for r in 0..=1 {
                let rep = killing_residual(&leaf, &u, r).unwrap();
                assert!(rep.residual < 5e-5 * rep.scale, "{} r={r}: {}", u.name, rep.residual);
                assert!(rep.max_rhs > 1e-3, "{} r={r}: {}", u.name, rep.max_rhs);
            }
            assert!(matches!(jacobi_check(&leaf, &u, 0), Err(GeomError::PreconditionFailed(_))));
        }
        assert!(matches!(
            killing_residual(&leaf, &AmbientVectorField::position(), 0),
            Err(GeomError::PreconditionFailed(_))
        ));
    }

    #[test]
    fn killing_fields_are_jacobi_on_round_sphere() {
        let leaf = sphere(0.0, &[16, 16]);
        for u in [
            AmbientVectorField::translation(3, 2),
            AmbientVectorField::translation(3, 0),
            AmbientVectorField::rotation(3, 1, 2),
        ] {
            for r in 0..=2 {
                let c = jacobi_check(&leaf, &u, r).unwrap();
                assert!(c.is_jacobi && c.residual < 1e-9, "{} r={r}: {}", u.name, c.residual);
            }
        }
    }

    #[test]
    fn warped_normal_preserves_exp_foliation() {
        let chart = exp_warped(2, 0.7);
        let fam = warped_family(&chart, vec![16, 16], DiffScheme::Spectral, Orientation::Natural).unwrap();
        let slice = FoliationSlice::new(fam, 0.2).unwrap();
        let v = AmbientVectorField::parse("warped-normal(sin(t))", 3).unwrap();
        for r in 0..=1 {
            let rep = foliation_preserving_residual(&slice, &v, r).unwrap();
            assert!(rep.cond_residual < 1e-8, "{}", rep.cond_residual);
            assert!(rep.jacobi_residual < 5e-5 * rep.scale);
        }
        let tangent = AmbientVectorField::translation(3, 1);
        let rep = foliation_preserving_residual(&slice, &tangent, 1).unwrap();
        assert!(rep.cond_residual < 1e-13 && rep.jacobi_residual < 1e-13);
    }

    #[test]
    fn kernel_of_exp_foliation_is_preserving() {
        let chart = exp_warped(2, 0.7);
        let fam = warped_family(&chart, vec![16, 16], DiffScheme::Spectral, Orientation::Natural).unwrap();
        let slice = FoliationSlice::new(fam, 0.0).unwrap();
        let mut basis = vec![ScalarField::constant(slice.leaf(), 1.0)];
        basis.extend(fourier_bump_basis(slice.leaf(), 2).unwrap());
        for r in 0..=1 {
            let rep = kernel_preservation(&slice, r, &basis).unwrap();
            assert_eq!(rep.kernel_dim, 1);
            assert!(rep.max_cond_residual < 1e-8 && rep.max_jr < 1e-8);
            assert!(rep.eigenvalues[1] > 0.1);
        }
    }

    #[test]
    fn cylinder_translation_is_negative_control() {
        let fam = cylinder_family(2, 1, 4.0, vec![16, 16], DiffScheme::Spectral, Orientation::Natural, 3.0);
        let slice = FoliationSlice::new(fam, 1.0).unwrap();
        let axis = AmbientVectorField::translation(3, 2);
        let rep = foliation_preserving_residual(&slice, &axis, 1).unwrap();
        assert!(rep.cond_residual < 1e-12);
        let e0 = AmbientVectorField::translation(3, 0);
        let rep = foliation_preserving_residual(&slice, &e0, 1).unwrap();
        assert!(rep.cond_residual > 0.1);
    }
}
