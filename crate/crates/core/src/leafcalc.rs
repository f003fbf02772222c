//! Calculus on a leaf: gradients, covariant Hessians, divergences, and the
//! operators `L_r f = Tr(T_r ∘ Hess f)` and
//! `J_r f = L_r f + Tr(A² T_r) f + Tr(R̄(N) T_r) f`.

use std::sync::Arc;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use crate::ambient::{classify, sample_points, AmbientClass};
use crate::error::{GeomError, Result};
use crate::hypersurface::{curvature_fields, CurvatureFields, LeafNode, LeafPatch};

/// A function sampled at the nodes of a leaf.
#[derive(Debug, Clone)]
pub struct ScalarField {
    leaf: Arc<LeafPatch>,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn new(leaf: &Arc<LeafPatch>, values: Vec<f64>) -> Result<Self> {
        if values.len() != leaf.len() {
            return Err(GeomError::InvalidInput(format!(
                "field has {} values, leaf has {} nodes",
                values.len(),
                leaf.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(GeomError::InvalidInput(format!("field value at node {i} is not finite")));
        }
        Ok(Self { leaf: leaf.clone(), values })
    }

    pub fn constant(leaf: &Arc<LeafPatch>, c: f64) -> Self {
        Self {
            leaf: leaf.clone(),
            values: vec![c; leaf.len()],
        }
    }

    /// Samples `f(ambient point)`.
    pub fn from_point_fn(leaf: &Arc<LeafPatch>, f: impl Fn(&[f64]) -> f64) -> Result<Self> {
        Self::new(leaf, leaf.nodes.iter().map(|nd| f(&nd.point)).collect())
    }

    /// Samples `f(parameter coordinates)`.
    pub fn from_param_fn(leaf: &Arc<LeafPatch>, f: impl Fn(&[f64]) -> f64) -> Result<Self> {
        Self::new(leaf, (0..leaf.len()).map(|i| f(&leaf.grid.coords(i))).collect())
    }

    /// Samples `f(node geometry)`.
    pub fn from_node_fn(leaf: &Arc<LeafPatch>, f: impl Fn(&LeafNode) -> f64) -> Result<Self> {
        Self::new(leaf, leaf.nodes.iter().map(f).collect())
    }

    pub fn leaf(&self) -> &Arc<LeafPatch> {
        &self.leaf
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn same_leaf(&self, other: &Self) -> bool {
        self.leaf.id() == other.leaf.id()
    }

    fn check_same(&self, other: &Self) -> Result<()> {
        if self.same_leaf(other) {
            Ok(())
        } else {
            Err(GeomError::MismatchedLeaf)
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            leaf: self.leaf.clone(),
            values: self.values.iter().map(|v| f(*v)).collect(),
        }
    }

    pub fn zip_with(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        self.check_same(other)?;
        Ok(Self {
            leaf: self.leaf.clone(),
            values: self.values.iter().zip(&other.values).map(|(a, b)| f(*a, *b)).collect(),
        })
    }

    pub fn scale(&self, c: f64) -> Self {
        self.map(|v| c * v)
    }

    pub fn integral(&self) -> f64 {
        self.leaf.integrate(&self.values)
    }

    /// `∫ f g`
    pub fn inner(&self, other: &Self) -> Result<f64> {
        self.check_same(other)?;
        let prod: Vec<f64> = self.values.iter().zip(&other.values).map(|(a, b)| a * b).collect();
        Ok(self.leaf.integrate(&prod))
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// `f − (∫f)/vol`
    pub fn zero_mean(&self) -> Self {
        let mean = self.integral() / self.leaf.volume();
        self.map(|v| v - mean)
    }
}

/// Parameter partials `∂_i f`, one array per axis.
pub fn partials(f: &ScalarField) -> Vec<Vec<f64>> {
    let leaf = f.leaf();
    (0..leaf.n).map(|i| leaf.diff(i, f.values())).collect()
}

fn at(partials: &[Vec<f64>], node: usize) -> Vec<f64> {
    partials.iter().map(|p| p[node]).collect()
}

/// `∇f^i = G^{ij} ∂_j f` per node.
pub fn gradient(f: &ScalarField) -> Vec<Vec<f64>> {
    let leaf = f.leaf();
    let d = partials(f);
    (0..leaf.len())
        .map(|node| {
            let g = &leaf.nodes[node].metric_inv;
            let p = at(&d, node);
            (0..leaf.n).map(|i| (0..leaf.n).map(|j| g[(i, j)] * p[j]).sum()).collect()
        })
        .collect()
}

/// Covariant Hessian `Hess_ij = ∂_i∂_j f − Γ^k_ij ∂_k f` (lowered) per node.
pub fn covariant_hessian_lower(f: &ScalarField) -> Vec<DMatrix<f64>> {
    let leaf = f.leaf();
    let n = leaf.n;
    let d = partials(f);
    let mut dd = vec![vec![Vec::new(); n]; n];
    for i in 0..n {
        for j in i..n {
            dd[i][j] = leaf.diff(i, &d[j]);
        }
    }
    (0..leaf.len())
        .into_par_iter()
        .map(|node| {
            DMatrix::from_fn(n, n, |i, j| {
                let (a, b) = if i <= j { (i, j) } else { (j, i) };
                let mut v = dd[a][b][node];
                for k in 0..n {
                    v -= leaf.gamma(node, k, i, j) * d[k][node];
                }
                v
            })
        })
        .collect()
}

/// Covariant Hessian as a `(1,1)` tensor `Hess^i_j = G^{ik} Hess_kj`.
pub fn covariant_hessian(f: &ScalarField) -> Vec<DMatrix<f64>> {
    let leaf = f.leaf().clone();
    covariant_hessian_lower(f)
        .into_iter()
        .zip(&leaf.nodes)
        .map(|(h, nd)| &nd.metric_inv * h)
        .collect()
}

/// `div V = ∂_i V^i + Γ^i_ik V^k` for a leaf vector field in coordinates.
pub fn divergence(leaf: &LeafPatch, v: &[Vec<f64>]) -> Vec<f64> {
    let n = leaf.n;
    let comps: Vec<Vec<f64>> = (0..n).map(|i| v.iter().map(|x| x[i]).collect()).collect();
    let mut out = vec![0.0; leaf.len()];
    for (i, c) in comps.iter().enumerate() {
        for (o, d) in out.iter_mut().zip(leaf.diff(i, c)) {
            *o += d;
        }
    }
    for (node, o) in out.iter_mut().enumerate() {
        for i in 0..n {
            for k in 0..n {
                *o += leaf.gamma(node, i, i, k) * v[node][k];
            }
        }
    }
    out
}

/// `(div T)^k = G^{ij} (∇_i T)^k_j` for a mixed tensor field.
pub fn tensor_divergence(leaf: &LeafPatch, t: &[DMatrix<f64>]) -> Vec<Vec<f64>> {
    let n = leaf.n;
    // dt[i][k*n + j] = ∂_i T^k_j
    let dt: Vec<Vec<Vec<f64>>> = (0..n)
        .map(|i| {
            (0..n * n)
                .map(|kj| {
                    let comp: Vec<f64> = t.iter().map(|m| m[(kj / n, kj % n)]).collect();
                    leaf.diff(i, &comp)
                })
                .collect()
        })
        .collect();
    (0..leaf.len())
        .into_par_iter()
        .map(|node| {
            let g = &leaf.nodes[node].metric_inv;
            let tm = &t[node];
            (0..n)
                .map(|k| {
                    let mut acc = 0.0;
                    for i in 0..n {
                        for j in 0..n {
                            let mut cov = dt[i][k * n + j][node];
                            for l in 0..n {
                                cov += leaf.gamma(node, k, i, l) * tm[(l, j)] - leaf.gamma(node, l, i, j) * tm[(k, l)];
                            }
                            acc += g[(i, j)] * cov;
                        }
                    }
                    acc
                })
                .collect()
        })
        .collect()
}

/// Which expression of `L_r` produced a sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum OperatorForm {
    Trace,
    Divergence,
}

/// `L_r f` and `J_r f` on one leaf.
#[derive(Debug, Clone)]
pub struct OperatorSample {
    pub r: usize,
    pub lr: ScalarField,
    pub jr: ScalarField,
    pub form_used: OperatorForm,
}

/// The stability operator `J_r` of a leaf, with its potential precomputed.
#[derive(Debug, Clone)]
pub struct JacobiOperator {
    leaf: Arc<LeafPatch>,
    pub r: usize,
    pub fields: CurvatureFields,
    /// `Tr(A² T_r)` per node.
    pub tr_a2t: Vec<f64>,
    /// `Tr(R̄(N) T_r)` per node.
    pub tr_rt: Vec<f64>,
}

impl JacobiOperator {
    pub fn new(leaf: &Arc<LeafPatch>, r: usize) -> Result<Self> {
        let fields = curvature_fields(leaf, r)?;
        let (tr_a2t, tr_rt) = leaf
            .nodes
            .iter()
            .zip(&fields.t_r)
            .map(|(nd, t)| ((&nd.shape * &nd.shape * t).trace(), (&nd.normal_curvature * t).trace()))
            .unzip();
        Ok(Self {
            leaf: leaf.clone(),
            r,
            fields,
            tr_a2t,
            tr_rt,
        })
    }

    pub fn leaf(&self) -> &Arc<LeafPatch> {
        &self.leaf
    }

    fn check(&self, f: &ScalarField) -> Result<()> {
        if f.leaf().id() == self.leaf.id() {
            Ok(())
        } else {
            Err(GeomError::MismatchedLeaf)
        }
    }

    /// Zeroth-order coefficient `Tr(A² T_r) + Tr(R̄(N) T_r)` per node.
    pub fn potential(&self) -> Vec<f64> {
        self.tr_a2t.iter().zip(&self.tr_rt).map(|(a, b)| a + b).collect()
    }

    /// `L_r f = Tr(T_r ∘ Hess f)`.
    pub fn lr_trace(&self, f: &ScalarField) -> Result<ScalarField> {
        self.check(f)?;
        let hess = covariant_hessian(f);
        let vals = hess.iter().zip(&self.fields.t_r).map(|(h, t)| (t * h).trace()).collect();
        ScalarField::new(&self.leaf, vals)
    }

    /// `L_r f = div(T_r ∇f) − ⟨div T_r, ∇f⟩`.
    pub fn lr_divergence(&self, f: &ScalarField) -> Result<ScalarField> {
        self.check(f)?;
        let grad = gradient(f);
        let d = partials(f);
        let t_grad: Vec<Vec<f64>> = grad
            .iter()
            .zip(&self.fields.t_r)
            .map(|(g, t)| (t * nalgebra::DVector::from_column_slice(g)).iter().copied().collect())
            .collect();
        let div = divergence(&self.leaf, &t_grad);
        let div_t = self.div_t();
        let vals = (0..self.leaf.len())
            .map(|node| div[node] - (0..self.leaf.n).map(|k| div_t[node][k] * d[k][node]).sum::<f64>())
            .collect();
        ScalarField::new(&self.leaf, vals)
    }

    /// `div T_r` in leaf coordinates.
    pub fn div_t(&self) -> Vec<Vec<f64>> {
        tensor_divergence(&self.leaf, &self.fields.t_r)
    }

    /// Largest `|div T_r|` in the induced metric.
    pub fn max_div_t(&self) -> f64 {
        self.div_t()
            .iter()
            .zip(&self.leaf.nodes)
            .map(|(v, nd)| {
                let v = nalgebra::DVector::from_column_slice(v);
                (v.transpose() * &nd.metric * &v)[(0, 0)].max(0.0).sqrt()
            })
            .fold(0.0, f64::max)
    }

    pub fn jr(&self, f: &ScalarField) -> Result<ScalarField> {
        let lr = self.lr_trace(f)?;
        self.jr_from_lr(f, &lr)
    }

    fn jr_from_lr(&self, f: &ScalarField, lr: &ScalarField) -> Result<ScalarField> {
        let pot = self.potential();
        let vals = (0..self.leaf.len())
            .map(|i| lr.values()[i] + pot[i] * f.values()[i])
            .collect();
        ScalarField::new(&self.leaf, vals)
    }

    pub fn apply(&self, f: &ScalarField, form: OperatorForm) -> Result<OperatorSample> {
        let lr = match form {
            OperatorForm::Trace => self.lr_trace(f)?,
            OperatorForm::Divergence => self.lr_divergence(f)?,
        };
        let jr = self.jr_from_lr(f, &lr)?;
        Ok(OperatorSample {
            r: self.r,
            lr,
            jr,
            form_used: form,
        })
    }

    /// `I_r(f, g) = −∫ f J_r g`.
    pub fn ir(&self, f: &ScalarField, g: &ScalarField) -> Result<f64> {
        if !f.same_leaf(g) {
            return Err(GeomError::MismatchedLeaf);
        }
        let jg = self.jr(g)?;
        Ok(-f.inner(&jg)?)
    }

    /// `∫ ⟨T_r ∇f, ∇g⟩`.
    pub fn energy(&self, f: &ScalarField, g: &ScalarField) -> Result<f64> {
        self.check(f)?;
        self.check(g)?;
        let gf = gradient(f);
        let dg = partials(g);
        let vals: Vec<f64> = (0..self.leaf.len())
            .map(|node| {
                let tg = &self.fields.t_r[node] * nalgebra::DVector::from_column_slice(&gf[node]);
                (0..self.leaf.n).map(|k| tg[k] * dg[k][node]).sum()
            })
            .collect();
        Ok(self.leaf.integrate(&vals))
    }

    /// Residuals of `∫ L_r f = 0` and `∫ f L_r f = −∫ ⟨T_r ∇f, ∇f⟩`.
    ///
    /// Both need `div T_r = 0`, which holds for `r = 0` always, for `r = 1`
    /// in Einstein ambients and for every `r` in space forms.
    pub fn divergence_free_residuals(&self, f: &ScalarField) -> Result<(f64, f64)> {
        self.check(f)?;
        let class = ambient_class(&self.leaf)?;
        if !case_applies(class, self.r) {
            return Err(GeomError::CaseNotApplicable(format!(
                "r = {} needs {} ambient, found {class}",
                self.r,
                if self.r == 1 { "an Einstein" } else { "a space-form" }
            )));
        }
        let lr = self.lr_trace(f)?;
        let res1 = lr.integral().abs();
        let res2 = (f.inner(&lr)? + self.energy(f, f)?).abs();
        Ok((res1, res2))
    }
}

/// `Q_ij = I_r(f_i, f_j)`, symmetrized, with the largest asymmetry before symmetrization.
pub fn gram_matrix(op: &JacobiOperator, fs: &[ScalarField]) -> Result<(DMatrix<f64>, f64)> {
    let m = fs.len();
    let jf: Vec<ScalarField> = fs.par_iter().map(|f| op.jr(f)).collect::<Result<_>>()?;
    let mut q = DMatrix::zeros(m, m);
    for i in 0..m {
        for j in 0..m {
            q[(i, j)] = -fs[i].inner(&jf[j])?;
        }
    }
    let asym = (0..m)
        .flat_map(|i| (0..m).map(move |j| (i, j)))
        .fold(0.0_f64, |a, (i, j)| a.max((q[(i, j)] - q[(j, i)]).abs()));
    let sym = (&q + q.transpose()) * 0.5;
    Ok((sym, asym))
}

/// `M_ij = ∫ f_i f_j`.
pub fn mass_matrix(fs: &[ScalarField]) -> Result<DMatrix<f64>> {
    let m = fs.len();
    let mut out = DMatrix::zeros(m, m);
    for i in 0..m {
        for j in i..m {
            let v = fs[i].inner(&fs[j])?;
            out[(i, j)] = v;
            out[(j, i)] = v;
        }
    }
    Ok(out)
}

/// Whether `div T_r = 0` is guaranteed by the ambient class.
pub fn case_applies(class: AmbientClass, r: usize) -> bool {
    match r {
        0 => true,
        1 => class.is_einstein(),
        _ => matches!(class, AmbientClass::SpaceForm(_)),
    }
}

/// Classification of the ambient chart around a leaf.
pub fn ambient_class(leaf: &LeafPatch) -> Result<AmbientClass> {
    if leaf.chart.is_flat() {
        return Ok(AmbientClass::SpaceForm(0.0));
    }
    Ok(classify(&leaf.chart, &sample_points(&leaf.chart, 12))?.class)
}
