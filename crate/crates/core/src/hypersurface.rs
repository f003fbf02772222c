//! Leaves: immersed hypersurface patches sampled on parameter grids.
//!
//! A leaf is given by the ambient coordinates of its grid nodes. Tangents,
//! the normal derivative and leaf Christoffel symbols come from the grid's
//! differentiation matrices; everything else is pointwise algebra. The
//! shape operator is `A X = −(∇̄_X N)^⊤` for the chosen unit normal `N`.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use crate::ambient::{AmbientChart, WarpedSpec};
use crate::error::{GeomError, Result};
use crate::grid::{Axis, AxisKind, Density, DiffScheme, Grid};
use crate::symcurv::{mean_curvatures, newton_by_spectrum, newton_tower, sigma, CurvatureVector};

static NEXT_LEAF_ID: AtomicU64 = AtomicU64::new(1);

/// Sampled immersion of an `n`-dimensional leaf into an `(n+1)`-dimensional chart.
#[derive(Debug, Clone)]
pub struct Immersion {
    pub grid: Grid,
    /// Ambient coordinates of every node.
    pub points: Vec<Vec<f64>>,
    /// For each periodic leaf axis, the increment of the ambient coordinates
    /// over one period (zero when the immersion closes up).
    pub jumps: Vec<Vec<f64>>,
    /// Per-node ambient vectors on the designated side of the leaf.
    pub normal_hints: Vec<Vec<f64>>,
    /// How many times the parameter domain covers the leaf.
    pub multiplicity: f64,
    pub description: String,
    /// Name of the side the hints point to (e.g. "inward", "+dt").
    pub hint_label: String,
    pub shape: LeafShape,
}

/// What a leaf is, for picking test-function bases.
#[derive(Debug, Clone, PartialEq)]
pub enum LeafShape {
    /// Sphere (possibly perturbed) centered at the origin.
    Sphere { n: usize, radius: f64 },
    /// `S^r(R) × T^{n−r}`; the first `r + 1` ambient coordinates span the
    /// round factor.
    Cylinder { n: usize, r: usize, radius: f64, box_len: f64 },
    /// Graph over the standard leaf coordinates of a warped chart.
    WarpedGraph { n: usize },
    Custom,
}

/// Which side of the leaf the unit normal points to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Orientation {
    /// Along the constructor's natural side (inward for spheres and
    /// cylinders, `+∂_t` for warped slices).
    #[default]
    Natural,
    Reversed,
}

impl Orientation {
    pub fn sign(self) -> f64 {
        match self {
            Self::Natural => 1.0,
            Self::Reversed => -1.0,
        }
    }
}

/// Geometry at one node of a leaf.
#[derive(Debug, Clone)]
pub struct LeafNode {
    pub point: Vec<f64>,
    /// `(n+1) × n`; column `i` is `∂_i x`.
    pub tangents: DMatrix<f64>,
    pub normal: DVector<f64>,
    pub ambient_metric: DMatrix<f64>,
    /// Induced metric `G_ij`.
    pub metric: DMatrix<f64>,
    pub metric_inv: DMatrix<f64>,
    /// Lower Cholesky factor of the induced metric, `G = L Lᵀ`.
    pub chol: DMatrix<f64>,
    /// Second fundamental form `b_ij = ⟨A ∂_i, ∂_j⟩` (symmetrized).
    pub second_form: DMatrix<f64>,
    /// Mixed shape operator `A^i_j = G^{ik} b_kj`.
    pub shape: DMatrix<f64>,
    /// Shape operator in the orthonormal frame `L^{-T}`.
    pub shape_on: DMatrix<f64>,
    /// Principal curvatures, ascending.
    pub kappa: Vec<f64>,
    /// Mixed operator `X ↦ (R̄(X,N)N)^⊤`.
    pub normal_curvature: DMatrix<f64>,
    pub sqrt_det: f64,
    /// Quadrature weight including the area element and chart multiplicity.
    pub weight: f64,
}

impl LeafNode {
    /// Ambient vector of leaf-coordinate components `v^i`.
    pub fn push_forward(&self, v: &[f64]) -> DVector<f64> {
        &self.tangents * DVector::from_column_slice(v)
    }

    /// Ambient inner product.
    pub fn inner(&self, u: &DVector<f64>, v: &DVector<f64>) -> f64 {
        (u.transpose() * &self.ambient_metric * v)[(0, 0)]
    }

    /// Leaf components of the tangential part of an ambient vector.
    pub fn tangential(&self, u: &DVector<f64>) -> Vec<f64> {
        let cov = self.tangents.transpose() * &self.ambient_metric * u;
        (&self.metric_inv * cov).iter().copied().collect()
    }
}

/// Largest violations of the pointwise leaf invariants.
#[derive(Debug, Clone, Copy, Default, Serialize)]
pub struct LeafResiduals {
    /// `max |⟨N,N⟩ − 1|`
    pub normal_norm: f64,
    /// `max |⟨N, ∂_i x⟩| / |∂_i x|`
    pub normal_tangency: f64,
    /// `max |Â − Âᵀ|` before symmetrization.
    pub self_adjointness: f64,
}

#[derive(Debug, Clone)]
pub struct LeafPatch {
    id: u64,
    pub n: usize,
    pub grid: Grid,
    pub chart: AmbientChart,
    pub nodes: Vec<LeafNode>,
    /// Leaf Christoffel symbols per node, `Γ^k_ij` at `(k·n + i)·n + j`.
    pub christoffels: Vec<Vec<f64>>,
    pub residuals: LeafResiduals,
    pub multiplicity: f64,
    pub description: String,
    /// Side the unit normal points to.
    pub orientation: String,
    pub shape: LeafShape,
}

impl LeafPatch {
    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    #[inline]
    pub fn gamma(&self, node: usize, k: usize, i: usize, j: usize) -> f64 {
        self.christoffels[node][(k * self.n + i) * self.n + j]
    }

    pub fn kappa(&self, node: usize) -> CurvatureVector {
        CurvatureVector::new(self.nodes[node].kappa.clone()).expect("finite principal curvatures")
    }

    pub fn volume(&self) -> f64 {
        self.integrate(&vec![1.0; self.len()])
    }

    /// `∫_L u` by the leaf quadrature (pairwise summation).
    pub fn integrate(&self, values: &[f64]) -> f64 {
        assert_eq!(values.len(), self.len());
        let terms: Vec<f64> = values.iter().zip(&self.nodes).map(|(v, nd)| v * nd.weight).collect();
        crate::grid::pairwise_sum(&terms)
    }

    /// Parameter-space partial derivative `∂_axis` of nodal data.
    pub fn diff(&self, axis: usize, values: &[f64]) -> Vec<f64> {
        self.grid.diff(axis, values)
    }

    /// Largest principal curvature magnitude over the leaf.
    pub fn max_abs_curvature(&self) -> f64 {
        self.nodes
            .iter()
            .flat_map(|nd| nd.kappa.iter())
            .fold(0.0_f64, |m, k| m.max(k.abs()))
    }
}

fn cofactor_normal(t: &DMatrix<f64>) -> DVector<f64> {
    // ν_a = (−1)^a det(T with row a removed); ν annihilates every column of T
    let dim = t.nrows();
    let n = t.ncols();
    let mut nu = DVector::zeros(dim);
    for a in 0..dim {
        let minor = DMatrix::from_fn(n, n, |i, j| t[(if i < a { i } else { i + 1 }, j)]);
        let s = if a % 2 == 0 { 1.0 } else { -1.0 };
        nu[a] = s * minor.determinant();
    }
    nu
}

/// Builds a leaf from a sampled immersion.
pub fn build_leaf(chart: &AmbientChart, imm: &Immersion, orientation: Orientation) -> Result<LeafPatch> {
    let grid = &imm.grid;
    let n = grid.dim();
    let dim = n + 1;
    let len = grid.len();
    if chart.dim() != dim {
        return Err(GeomError::InvalidInput(format!(
            "leaf of dimension {n} needs a chart of dimension {}, got {}",
            dim,
            chart.dim()
        )));
    }
    if imm.points.len() != len || imm.normal_hints.len() != len || imm.jumps.len() != n {
        return Err(GeomError::InvalidInput("immersion arrays do not match the grid".into()));
    }
    for (node, p) in imm.points.iter().enumerate() {
        if !chart.contains(p) {
            return Err(GeomError::OutsideDomain { point: p.clone() });
        }
        if p.len() != dim {
            return Err(GeomError::InvalidInput(format!("node {node} has wrong coordinate count")));
        }
    }

    // tangents: differentiate the coordinates with the periodic jumps removed
    let mut tang = vec![vec![vec![0.0; len]; dim]; n];
    for (i, t_i) in tang.iter_mut().enumerate() {
        let ax = grid.axis(i);
        let (start, period) = match ax.kind {
            AxisKind::Periodic { start, period, .. } => (start, period),
            AxisKind::Interval { .. } => (0.0, 0.0),
        };
        for (a, t_ia) in t_i.iter_mut().enumerate() {
            let jump = if period > 0.0 { imm.jumps[i][a] } else { 0.0 };
            let data: Vec<f64> = (0..len)
                .map(|node| {
                    let u = grid.coords(node)[i];
                    imm.points[node][a] - if jump != 0.0 { jump * (u - start) / period } else { 0.0 }
                })
                .collect();
            let d = grid.diff(i, &data);
            *t_ia = d.into_iter().map(|v| v + if jump != 0.0 { jump / period } else { 0.0 }).collect();
        }
    }

    struct Stage1 {
        tangents: DMatrix<f64>,
        g: DMatrix<f64>,
        metric: DMatrix<f64>,
        chol: DMatrix<f64>,
        normal: DVector<f64>,
    }
    let sign = orientation.sign();
    let stage1: Vec<Result<Stage1>> = (0..len)
        .into_par_iter()
        .map(|node| {
            let tangents = DMatrix::from_fn(dim, n, |a, i| tang[i][a][node]);
            let g = chart.metric(&imm.points[node])?;
            let metric = tangents.transpose() * &g * &tangents;
            let chol = nalgebra::Cholesky::new(metric.clone())
                .ok_or(GeomError::DegenerateImmersion { node })?
                .l();
            let scale = metric.diagonal().amax();
            if !(chol.diagonal().iter().all(|d| d * d > 1e-14 * scale)) {
                return Err(GeomError::DegenerateImmersion { node });
            }
            let nu = cofactor_normal(&tangents);
            let ginv = g.clone().try_inverse().ok_or(GeomError::DegenerateImmersion { node })?;
            let mut normal = &ginv * &nu;
            let norm2 = nu.dot(&normal);
            if !(norm2 > 0.0) {
                return Err(GeomError::DegenerateImmersion { node });
            }
            normal /= norm2.sqrt();
            let hint = DVector::from_column_slice(&imm.normal_hints[node]);
            let side = (normal.transpose() * &g * hint)[(0, 0)];
            if side < 0.0 {
                normal = -normal;
            }
            normal *= sign;
            Ok(Stage1 {
                tangents,
                g,
                metric,
                chol,
                normal,
            })
        })
        .collect();
    let stage1: Vec<Stage1> = stage1.into_iter().collect::<Result<_>>()?;

    // ∂_i N^a along the grid
    let mut dnormal = vec![vec![vec![0.0; len]; dim]; n];
    for (i, dn_i) in dnormal.iter_mut().enumerate() {
        for (a, dn_ia) in dn_i.iter_mut().enumerate() {
            let comp: Vec<f64> = stage1.iter().map(|s| s.normal[a]).collect();
            *dn_ia = grid.diff(i, &comp);
        }
    }
    // ∂_k G_ij along the grid
    let mut dmetric = vec![vec![vec![0.0; len]; n * n]; n];
    for (k, dm_k) in dmetric.iter_mut().enumerate() {
        for i in 0..n {
            for j in i..n {
                let comp: Vec<f64> = stage1.iter().map(|s| s.metric[(i, j)]).collect();
                let d = grid.diff(k, &comp);
                dm_k[i * n + j] = d.clone();
                dm_k[j * n + i] = d;
            }
        }
    }

    let built: Vec<Result<(LeafNode, Vec<f64>, [f64; 3])>> = stage1
        .into_par_iter()
        .enumerate()
        .map(|(node, s)| {
            let p = &imm.points[node];
            let gamma = chart.christoffels(p)?;
            let nvec: Vec<f64> = s.normal.iter().copied().collect();
            // ∇̄_{∂_i} N = ∂_i N + Γ(∂_i x, N)
            let mut cov_dn = DMatrix::zeros(dim, n);
            for i in 0..n {
                let ti: Vec<f64> = s.tangents.column(i).iter().copied().collect();
                let g_term = gamma.contract(&ti, &nvec);
                for a in 0..dim {
                    cov_dn[(a, i)] = dnormal[i][a][node] + g_term[a];
                }
            }
            // b_ij = −⟨∇̄_i N, ∂_j x⟩
            let b_raw = -(cov_dn.transpose() * &s.g * &s.tangents);
            let linv = s.chol.clone().try_inverse().ok_or(GeomError::DegenerateImmersion { node })?;
            let raw_on = &linv * &b_raw * linv.transpose();
            let asym = (&raw_on - raw_on.transpose()).amax();
            let b = (&b_raw + b_raw.transpose()) * 0.5;
            let metric_inv = s.metric.clone().try_inverse().ok_or(GeomError::DegenerateImmersion { node })?;
            let shape = &metric_inv * &b;
            let mut shape_on = &linv * &b * linv.transpose();
            shape_on = (&shape_on + shape_on.transpose()) * 0.5;
            let mut kappa: Vec<f64> = shape_on.clone().symmetric_eigen().eigenvalues.iter().copied().collect();
            kappa.sort_by(|x, y| x.total_cmp(y));

            // R̄(X,N)N restricted to the leaf, from Q_ac = R_{abcd} N^b N^d
            let normal_curvature = if chart.is_flat() {
                DMatrix::zeros(n, n)
            } else {
                let rs = chart.riemann(p)?;
                let low = rs.lowered();
                let mut q = DMatrix::zeros(dim, dim);
                for a in 0..dim {
                    for c in 0..dim {
                        let mut acc = 0.0;
                        for b_ in 0..dim {
                            for d in 0..dim {
                                acc += low[((a * dim + b_) * dim + c) * dim + d] * nvec[b_] * nvec[d];
                            }
                        }
                        q[(a, c)] = acc;
                    }
                }
                // rn_ji = ⟨R̄(∂_i,N)N, ∂_j⟩
                let rn = s.tangents.transpose() * q * &s.tangents;
                let rn = (&rn + rn.transpose()) * 0.5;
                &metric_inv * rn
            };

            let sqrt_det = s.chol.diagonal().product().abs();
            let density = grid.density(node);
            let weight = grid.quad_weight(node) * sqrt_det / density / imm.multiplicity;

            // leaf Christoffels from ∂G
            let mut chr = vec![0.0; n * n * n];
            for k in 0..n {
                for i in 0..n {
                    for j in i..n {
                        let mut v = 0.0;
                        for l in 0..n {
                            let low = 0.5
                                * (dmetric[i][j * n + l][node] + dmetric[j][i * n + l][node]
                                    - dmetric[l][i * n + j][node]);
                            v += metric_inv[(k, l)] * low;
                        }
                        chr[(k * n + i) * n + j] = v;
                        chr[(k * n + j) * n + i] = v;
                    }
                }
            }

            let nn = (s.normal.transpose() * &s.g * &s.normal)[(0, 0)];
            let mut tangency = 0.0_f64;
            for i in 0..n {
                let ti = s.tangents.column(i).into_owned();
                let len_i = (ti.transpose() * &s.g * &ti)[(0, 0)].sqrt();
                let d = (s.normal.transpose() * &s.g * &ti)[(0, 0)];
                tangency = tangency.max(d.abs() / len_i);
            }
            let residual_pack = [(nn - 1.0).abs(), tangency, asym];
            Ok((
                LeafNode {
                    point: p.clone(),
                    tangents: s.tangents,
                    normal: s.normal,
                    ambient_metric: s.g,
                    metric: s.metric,
                    metric_inv,
                    chol: s.chol,
                    second_form: b,
                    shape,
                    shape_on,
                    kappa,
                    normal_curvature,
                    sqrt_det,
                    weight,
                },
                chr,
                residual_pack,
            ))
        })
        .collect();
    let mut nodes = Vec::with_capacity(len);
    let mut christoffels = Vec::with_capacity(len);
    let mut residuals = LeafResiduals::default();
    for item in built {
        let (nd, chr, rp) = item?;
        residuals.normal_norm = residuals.normal_norm.max(rp[0]);
        residuals.normal_tangency = residuals.normal_tangency.max(rp[1]);
        residuals.self_adjointness = residuals.self_adjointness.max(rp[2]);
        nodes.push(nd);
        christoffels.push(chr);
    }
    let orientation = match orientation {
        Orientation::Natural => imm.hint_label.clone(),
        Orientation::Reversed => format!("opposite of {}", imm.hint_label),
    };
    Ok(LeafPatch {
        id: NEXT_LEAF_ID.fetch_add(1, Ordering::Relaxed),
        n,
        grid: grid.clone(),
        chart: chart.clone(),
        nodes,
        christoffels,
        residuals,
        multiplicity: imm.multiplicity,
        description: imm.description.clone(),
        orientation,
        shape: imm.shape.clone(),
    })
}

/// Sign character of a symmetric operator from its eigenvalues.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Definiteness {
    PositiveSemidefinite,
    NegativeSemidefinite,
    Indefinite,
}

impl Definiteness {
    /// Eigenvalues within `tol` of zero count for either sign; an all-zero
    /// spectrum reports positive semidefinite.
    pub fn of(eigenvalues: impl IntoIterator<Item = f64>, tol: f64) -> Self {
        let (mut pos, mut neg) = (true, true);
        for m in eigenvalues {
            pos &= m >= -tol;
            neg &= m <= tol;
        }
        match (pos, neg) {
            (true, _) => Self::PositiveSemidefinite,
            (false, true) => Self::NegativeSemidefinite,
            _ => Self::Indefinite,
        }
    }
}

/// Curvature tolerance for the definiteness of `T_r`.
pub const DEFINITENESS_TOL: f64 = 1e-10;

/// Per-node `S_r`, `H_r` and `T_r` on a leaf.
#[derive(Debug, Clone)]
pub struct CurvatureFields {
    pub r: usize,
    /// `S_0..S_n` per node.
    pub s: Vec<Vec<f64>>,
    /// `H_0..H_n` per node.
    pub h: Vec<Vec<f64>>,
    /// Mixed `T_r` per node.
    pub t_r: Vec<DMatrix<f64>>,
    /// Eigenvalues `μ_{i,r}` per node.
    pub mu: Vec<Vec<f64>>,
    pub s_r1_mean: f64,
    /// `max |S_{r+1} − mean|` over the leaf.
    pub s_r1_deviation: f64,
    /// `S_{r+1}` constant to `1e-8 (1 + |S_{r+1}|)`.
    pub r_tense: bool,
}

impl CurvatureFields {
    pub fn s_r(&self, node: usize) -> f64 {
        self.s[node].get(self.r).copied().unwrap_or(0.0)
    }

    pub fn s_r1(&self, node: usize) -> f64 {
        self.s[node].get(self.r + 1).copied().unwrap_or(0.0)
    }

    pub fn h_r(&self, node: usize) -> f64 {
        self.h[node].get(self.r).copied().unwrap_or(0.0)
    }

    pub fn s_r1_field(&self) -> Vec<f64> {
        (0..self.s.len()).map(|i| self.s_r1(i)).collect()
    }

    /// Definiteness of `T_r` over the whole leaf.
    pub fn t_r_sign(&self) -> Definiteness {
        Definiteness::of(self.mu.iter().flatten().copied(), DEFINITENESS_TOL)
    }
}

pub fn curvature_fields(leaf: &LeafPatch, r: usize) -> Result<CurvatureFields> {
    let n = leaf.n;
    if r > n {
        return Err(GeomError::InvalidInput(format!("r = {r} exceeds leaf dimension {n}")));
    }
    let per_node: Vec<(Vec<f64>, Vec<f64>, DMatrix<f64>, Vec<f64>)> = leaf
        .nodes
        .par_iter()
        .map(|nd| {
            let kv = CurvatureVector::new(nd.kappa.clone()).expect("finite principal curvatures");
            let mc = mean_curvatures(&kv);
            let t = newton_tower(&nd.shape).1.swap_remove(r);
            let mu = newton_by_spectrum(&kv, r).expect("r checked").mu;
            (mc.s, mc.h, t, mu)
        })
        .collect();
    let mut s = Vec::with_capacity(leaf.len());
    let mut h = Vec::with_capacity(leaf.len());
    let mut t_r = Vec::with_capacity(leaf.len());
    let mut mu = Vec::with_capacity(leaf.len());
    for (a, b, c, d) in per_node {
        s.push(a);
        h.push(b);
        t_r.push(c);
        mu.push(d);
    }
    let s_r1: Vec<f64> = s.iter().map(|v| v.get(r + 1).copied().unwrap_or(0.0)).collect();
    let s_r1_mean = crate::grid::pairwise_sum(&s_r1) / s_r1.len() as f64;
    let s_r1_deviation = s_r1.iter().fold(0.0_f64, |m, v| m.max((v - s_r1_mean).abs()));
    Ok(CurvatureFields {
        r,
        s,
        h,
        t_r,
        mu,
        s_r1_mean,
        s_r1_deviation,
        r_tense: s_r1_deviation < 1e-8 * (1.0 + s_r1_mean.abs()),
    })
}

// ---------------------------------------------------------------------------
// Immersion constructors

/// Unit sphere `S^m ⊂ ℝ^{m+1}` on its periodic double-cover chart.
fn unit_sphere_map(m: usize, u: &[f64]) -> Vec<f64> {
    match m {
        1 => vec![u[0].cos(), u[0].sin()],
        2 => {
            let (st, ct) = u[0].sin_cos();
            vec![st * u[1].cos(), st * u[1].sin(), ct]
        }
        3 => {
            let (se, ce) = u[0].sin_cos();
            vec![ce * u[1].cos(), ce * u[1].sin(), se * u[2].cos(), se * u[2].sin()]
        }
        _ => unreachable!("sphere dimension checked by caller"),
    }
}

fn sphere_axes(m: usize, sizes: &[usize], scheme: DiffScheme) -> Result<(Vec<Axis>, f64)> {
    use std::f64::consts::TAU;
    if sizes.len() != m {
        return Err(GeomError::InvalidGrid(format!("sphere S^{m} needs {m} axis sizes")));
    }
    match m {
        1 => Ok((vec![Axis::periodic(sizes[0], 0.0, TAU, Density::Uniform, scheme)?], 1.0)),
        2 => Ok((
            vec![
                Axis::periodic(sizes[0], 0.0, TAU, Density::AbsSin(1), scheme)?,
                Axis::periodic(sizes[1], 0.0, TAU, Density::Uniform, scheme)?,
            ],
            2.0,
        )),
        3 => Ok((
            vec![
                Axis::periodic(sizes[0], 0.0, TAU, Density::AbsSin(2), scheme)?,
                Axis::periodic(sizes[1], 0.0, TAU, Density::Uniform, scheme)?,
                Axis::periodic(sizes[2], 0.0, TAU, Density::Uniform, scheme)?,
            ],
            4.0,
        )),
        _ => Err(GeomError::InvalidInput(format!("sphere factors of dimension {m} are not supported (1..=3)"))),
    }
}

/// Radial factor of a perturbed sphere, `1 + ε (x̂_0 x̂_1 + x̂_m)`.
fn sphere_radial(m: usize, eps: f64, xhat: &[f64]) -> f64 {
    1.0 + eps * (xhat[0] * xhat[1] + xhat[m])
}

/// Sphere `S^n(R)` centered at the origin of `ℝ^{n+1}`, optionally with the
/// radial perturbation `R (1 + ε (x̂_0 x̂_1 + x̂_n))`. Hints point inward.
pub fn sphere_immersion(n: usize, radius: f64, eps: f64, sizes: &[usize], scheme: DiffScheme) -> Result<Immersion> {
    if !(radius > 0.0) {
        return Err(GeomError::InvalidInput("sphere radius must be positive".into()));
    }
    let (axes, multiplicity) = sphere_axes(n, sizes, scheme)?;
    let grid = Grid::new(axes)?;
    let mut points = Vec::with_capacity(grid.len());
    let mut hints = Vec::with_capacity(grid.len());
    for node in 0..grid.len() {
        let xhat = unit_sphere_map(n, &grid.coords(node));
        let rho = radius * sphere_radial(n, eps, &xhat);
        points.push(xhat.iter().map(|v| rho * v).collect());
        hints.push(xhat.iter().map(|v| -v).collect());
    }
    Ok(Immersion {
        jumps: vec![vec![0.0; n + 1]; n],
        grid,
        points,
        normal_hints: hints,
        multiplicity,
        description: if eps == 0.0 {
            format!("sphere S^{n}({radius})")
        } else {
            format!("perturbed sphere S^{n}({radius}), eps = {eps}")
        },
        hint_label: "inward".into(),
        shape: LeafShape::Sphere { n, radius },
    })
}

/// Cylinder `S^r(R) × T^{n−r}` in `ℝ^{n+1}`, the flat factor being a periodic
/// box of side `box_len`. Hints point toward the axis.
pub fn cylinder_immersion(
    n: usize,
    r: usize,
    radius: f64,
    box_len: f64,
    sizes: &[usize],
    scheme: DiffScheme,
) -> Result<Immersion> {
    if r == 0 || r > n {
        return Err(GeomError::InvalidInput(format!("cylinder needs 1 <= r <= n, got r = {r}, n = {n}")));
    }
    if !(radius > 0.0) || !(box_len > 0.0) {
        return Err(GeomError::InvalidInput("cylinder radius and box length must be positive".into()));
    }
    if sizes.len() != n {
        return Err(GeomError::InvalidGrid(format!("cylinder needs {n} axis sizes")));
    }
    let (mut axes, multiplicity) = sphere_axes(r, &sizes[..r], scheme)?;
    for &sz in &sizes[r..] {
        axes.push(Axis::periodic(sz, 0.0, box_len, Density::Uniform, scheme)?);
    }
    let grid = Grid::new(axes)?;
    let mut points = Vec::with_capacity(grid.len());
    let mut hints = Vec::with_capacity(grid.len());
    for node in 0..grid.len() {
        let u = grid.coords(node);
        let xhat = unit_sphere_map(r, &u[..r]);
        let mut p: Vec<f64> = xhat.iter().map(|v| radius * v).collect();
        p.extend_from_slice(&u[r..]);
        let mut h: Vec<f64> = xhat.iter().map(|v| -v).collect();
        h.extend(std::iter::repeat_n(0.0, n - r));
        points.push(p);
        hints.push(h);
    }
    let jumps = (0..n)
        .map(|i| {
            let mut j = vec![0.0; n + 1];
            if i >= r {
                j[i + 1] = box_len;
            }
            j
        })
        .collect();
    Ok(Immersion {
        grid,
        points,
        jumps,
        normal_hints: hints,
        multiplicity,
        description: format!("cylinder S^{r}({radius}) x T^{}({box_len})", n - r),
        hint_label: "inward".into(),
        shape: LeafShape::Cylinder { n, r, radius, box_len },
    })
}

fn warped_leaf_axes(spec: &WarpedSpec, sizes: &[usize], scheme: DiffScheme) -> Result<Vec<Axis>> {
    if sizes.len() != spec.n {
        return Err(GeomError::InvalidGrid(format!("warped leaf needs {} axis sizes", spec.n)));
    }
    sizes
        .iter()
        .enumerate()
        .map(|(i, &sz)| {
            if i == 0 && spec.horo_rate().is_some() {
                Axis::interval(sz, -spec.leaf_extent, spec.leaf_extent)
            } else {
                Axis::periodic(sz, 0.0, spec.torus_period, Density::Uniform, scheme)
            }
        })
        .collect()
}

/// Leaf `t = height(u)` of a warped chart over its standard leaf
/// coordinates. Hints point along `+∂_t`.
pub fn warped_graph_immersion(
    spec: &WarpedSpec,
    height: &dyn Fn(&[f64]) -> f64,
    sizes: &[usize],
    scheme: DiffScheme,
    description: String,
) -> Result<Immersion> {
    let grid = Grid::new(warped_leaf_axes(spec, sizes, scheme)?)?;
    let n = spec.n;
    let mut points = Vec::with_capacity(grid.len());
    for node in 0..grid.len() {
        let u = grid.coords(node);
        let mut p = vec![height(&u)];
        p.extend_from_slice(&u);
        points.push(p);
    }
    let mut hint = vec![0.0; n + 1];
    hint[0] = 1.0;
    let jumps = (0..n)
        .map(|i| {
            let mut j = vec![0.0; n + 1];
            if grid.axis(i).is_periodic() {
                j[i + 1] = spec.torus_period;
            }
            j
        })
        .collect();
    Ok(Immersion {
        normal_hints: vec![hint; grid.len()],
        grid,
        points,
        jumps,
        multiplicity: 1.0,
        description,
        hint_label: "+dt".into(),
        shape: LeafShape::WarpedGraph { n },
    })
}

/// Slice `{t} × L` of a warped chart.
pub fn warped_slice_immersion(spec: &WarpedSpec, t: f64, sizes: &[usize], scheme: DiffScheme) -> Result<Immersion> {
    warped_graph_immersion(spec, &|_| t, sizes, scheme, format!("warped slice t = {t}"))
}

/// Graph `t = s + ε sin(2π u_p / P)` over the first periodic leaf axis `u_p`.
pub fn warped_wave_immersion(
    spec: &WarpedSpec,
    s: f64,
    eps: f64,
    sizes: &[usize],
    scheme: DiffScheme,
) -> Result<Immersion> {
    let axis = if spec.horo_rate().is_some() { 1 } else { 0 };
    if axis >= spec.n {
        return Err(GeomError::InvalidInput("no periodic leaf axis to perturb along".into()));
    }
    let k = std::f64::consts::TAU / spec.torus_period;
    warped_graph_immersion(
        spec,
        &move |u| s + eps * (k * u[axis]).sin(),
        sizes,
        scheme,
        format!("perturbed warped slice t = {s} + {eps} sin(u)"),
    )
}

// ---------------------------------------------------------------------------
// Foliations

/// Leaf of a one-parameter family as a function of the parameter.
pub type LeafFamily = Arc<dyn Fn(f64) -> Result<LeafPatch> + Send + Sync>;

/// One leaf of a foliation together with its first-order transverse data.
///
/// The family `s ↦ x(s, u)` is sampled at `s, s ± h, s ± 2h` on a shared
/// parameter grid. Writing `∂_s x = α N + v` with `v` tangent,
/// `N(F) = (∂_s F − v(F)) / α` and `∇̄_N N = (∇̄_{∂_s x} N + A v) / α`.
#[derive(Clone)]
pub struct FoliationSlice {
    pub s: f64,
    pub step: f64,
    family: LeafFamily,
    leaves: [Arc<LeafPatch>; 5],
    alpha: Vec<f64>,
    /// Leaf components of the tangential part of `∂_s x`.
    shift: Vec<Vec<f64>>,
    nabla_nn: Vec<DVector<f64>>,
}

impl std::fmt::Debug for FoliationSlice {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FoliationSlice")
            .field("s", &self.s)
            .field("step", &self.step)
            .field("leaf", &self.leaves[2].description)
            .finish()
    }
}

/// Default parameter step of [`FoliationSlice`].
pub const SLICE_STEP: f64 = 1e-3;

fn fd5(vals: [f64; 5], h: f64) -> f64 {
    (vals[0] - 8.0 * vals[1] + 8.0 * vals[3] - vals[4]) / (12.0 * h)
}

impl FoliationSlice {
    pub fn new(family: LeafFamily, s: f64) -> Result<Self> {
        Self::with_step(family, s, SLICE_STEP)
    }

    pub fn with_step(family: LeafFamily, s: f64, step: f64) -> Result<Self> {
        let offsets = [-2.0, -1.0, 0.0, 1.0, 2.0];
        let built: Vec<Result<LeafPatch>> = offsets.par_iter().map(|o| family(s + o * step)).collect();
        let mut leaves = Vec::with_capacity(5);
        for b in built {
            leaves.push(Arc::new(b?));
        }
        let leaves: [Arc<LeafPatch>; 5] = leaves.try_into().expect("five leaves");
        let len = leaves[2].len();
        if leaves.iter().any(|l| l.len() != len) {
            return Err(GeomError::InvalidInput("family leaves must share one grid".into()));
        }
        let center = &leaves[2];
        let dim = center.n + 1;
        let per_node: Vec<Result<(f64, Vec<f64>, DVector<f64>)>> = (0..len)
            .into_par_iter()
            .map(|node| {
                let nd = &center.nodes[node];
                let ds_x = DVector::from_fn(dim, |a, _| {
                    fd5(std::array::from_fn(|k| leaves[k].nodes[node].point[a]), step)
                });
                let ds_n = DVector::from_fn(dim, |a, _| {
                    fd5(std::array::from_fn(|k| leaves[k].nodes[node].normal[a]), step)
                });
                let alpha = nd.inner(&ds_x, &nd.normal);
                if alpha.abs() < 1e-12 {
                    return Err(GeomError::InvalidInput(format!(
                        "family does not move transversally at node {node}"
                    )));
                }
                let v = nd.tangential(&ds_x);
                let gamma = center.chart.christoffels(&nd.point)?;
                let xs: Vec<f64> = ds_x.iter().copied().collect();
                let nv: Vec<f64> = nd.normal.iter().copied().collect();
                let cov = ds_n + DVector::from_vec(gamma.contract(&xs, &nv));
                let av = &nd.shape * DVector::from_column_slice(&v);
                let a_v = &nd.tangents * av;
                Ok((alpha, v, (cov + a_v) / alpha))
            })
            .collect();
        let mut alpha = Vec::with_capacity(len);
        let mut shift = Vec::with_capacity(len);
        let mut nabla_nn = Vec::with_capacity(len);
        for item in per_node {
            let (a, v, w) = item?;
            alpha.push(a);
            shift.push(v);
            nabla_nn.push(w);
        }
        Ok(Self {
            s,
            step,
            family,
            leaves,
            alpha,
            shift,
            nabla_nn,
        })
    }

    pub fn leaf(&self) -> &Arc<LeafPatch> {
        &self.leaves[2]
    }

    pub fn family(&self) -> &LeafFamily {
        &self.family
    }

    /// `⟨∂_s x, N⟩` per node.
    pub fn lapse(&self) -> &[f64] {
        &self.alpha
    }

    /// `N(F)` for a scalar field defined on every leaf of the family.
    pub fn normal_derivative(&self, field: &dyn Fn(&LeafPatch) -> Result<Vec<f64>>) -> Result<Vec<f64>> {
        let vals: Vec<Vec<f64>> = self.leaves.iter().map(|l| field(l)).collect::<Result<_>>()?;
        let leaf = self.leaf();
        let grads: Vec<Vec<f64>> = (0..leaf.n).map(|i| leaf.diff(i, &vals[2])).collect();
        Ok((0..leaf.len())
            .map(|node| {
                let ds = fd5(std::array::from_fn(|k| vals[k][node]), self.step);
                let along: f64 = (0..leaf.n).map(|i| self.shift[node][i] * grads[i][node]).sum();
                (ds - along) / self.alpha[node]
            })
            .collect())
    }

    /// `N(S_{r+1})` per node.
    pub fn normal_derivative_s_r1(&self, r: usize) -> Result<Vec<f64>> {
        self.normal_derivative(&|l: &LeafPatch| Ok(curvature_fields(l, r)?.s_r1_field()))
    }

    /// `∇̄_N N` per node as an ambient vector.
    pub fn nabla_n_n(&self) -> &[DVector<f64>] {
        &self.nabla_nn
    }

    /// `∇̄_N N` per node in leaf coordinates (it is tangent to the leaf).
    pub fn nabla_n_n_tangent(&self) -> Vec<Vec<f64>> {
        let leaf = self.leaf();
        self.nabla_nn
            .iter()
            .zip(&leaf.nodes)
            .map(|(w, nd)| nd.tangential(w))
            .collect()
    }

    /// Largest ambient norm of `∇̄_N N`.
    pub fn max_nabla_n_n(&self) -> f64 {
        let leaf = self.leaf();
        self.nabla_nn
            .iter()
            .zip(&leaf.nodes)
            .fold(0.0_f64, |m, (w, nd)| m.max(nd.inner(w, w).max(0.0).sqrt()))
    }
}

/// Foliation of a warped chart by the slices `t = const`.
pub fn warped_family(chart: &AmbientChart, sizes: Vec<usize>, scheme: DiffScheme, orientation: Orientation) -> Result<LeafFamily> {
    let spec = chart
        .warped_spec()
        .cloned()
        .ok_or_else(|| GeomError::InvalidInput("chart is not a warped product".into()))?;
    let chart = chart.clone();
    Ok(Arc::new(move |t| {
        build_leaf(&chart, &warped_slice_immersion(&spec, t, &sizes, scheme)?, orientation)
    }))
}

/// Foliation of a warped chart by the graphs `t = s + ε sin(u)`.
pub fn warped_wave_family(
    chart: &AmbientChart,
    eps: f64,
    sizes: Vec<usize>,
    scheme: DiffScheme,
    orientation: Orientation,
) -> Result<LeafFamily> {
    let spec = chart
        .warped_spec()
        .cloned()
        .ok_or_else(|| GeomError::InvalidInput("chart is not a warped product".into()))?;
    let chart = chart.clone();
    Ok(Arc::new(move |s| {
        build_leaf(&chart, &warped_wave_immersion(&spec, s, eps, &sizes, scheme)?, orientation)
    }))
}

/// Euclidean chart wide enough for spheres and cylinders up to `extent`.
pub fn euclidean_for(dim: usize, extent: f64) -> AmbientChart {
    AmbientChart::euclidean(dim, extent + 1.0)
}

/// Concentric spheres `R ↦ S^n(R)`.
pub fn sphere_family(n: usize, sizes: Vec<usize>, scheme: DiffScheme, orientation: Orientation, extent: f64) -> LeafFamily {
    let chart = euclidean_for(n + 1, extent);
    Arc::new(move |radius| build_leaf(&chart, &sphere_immersion(n, radius, 0.0, &sizes, scheme)?, orientation))
}

/// Concentric cylinders `R ↦ S^r(R) × T^{n−r}`.
pub fn cylinder_family(
    n: usize,
    r: usize,
    box_len: f64,
    sizes: Vec<usize>,
    scheme: DiffScheme,
    orientation: Orientation,
    extent: f64,
) -> LeafFamily {
    let chart = euclidean_for(n + 1, extent.max(box_len));
    Arc::new(move |radius| {
        build_leaf(&chart, &cylinder_immersion(n, r, radius, box_len, &sizes, scheme)?, orientation)
    })
}

/// Transverse data of a warped slice from the closed-form principal curvatures.
#[derive(Debug, Clone, Serialize)]
pub struct NormalData {
    pub t: f64,
    pub r: usize,
    pub kappa: Vec<f64>,
    pub s_r1: f64,
    /// `N(S_{r+1})`
    pub ds_r1: f64,
    pub mu: Vec<f64>,
    pub t_r_sign: Definiteness,
    /// `∇̄_N N` (ambient components); zero because `∂_t` is geodesic.
    pub nabla_n_n: Vec<f64>,
}

/// Step of the closed-form normal derivative.
pub const NORMAL_DATA_STEP: f64 = 1e-5;

pub fn foliation_normal_data(spec: &WarpedSpec, r: usize, t: f64, orientation: Orientation) -> Result<NormalData> {
    spec.validate()?;
    let n = spec.n;
    if r > n {
        return Err(GeomError::InvalidInput(format!("r = {r} exceeds leaf dimension {n}")));
    }
    let sign = orientation.sign();
    let kappa_at = |t: f64| -> Vec<f64> { spec.slice_curvatures(t).into_iter().map(|k| sign * k).collect() };
    let s_at = |t: f64| sigma(r + 1, &kappa_at(t));
    let central = |h: f64| (s_at(t + h) - s_at(t - h)) / (2.0 * h);
    let h = NORMAL_DATA_STEP;
    // Richardson: removes the h² term of the central difference
    let dsdt = (4.0 * central(h / 2.0) - central(h)) / 3.0;
    let kappa = kappa_at(t);
    let kv = CurvatureVector::new(kappa.clone())?;
    let mu = newton_by_spectrum(&kv, r)?.mu;
    Ok(NormalData {
        t,
        r,
        s_r1: sigma(r + 1, &kappa),
        ds_r1: sign * dsdt,
        t_r_sign: Definiteness::of(mu.iter().copied(), DEFINITENESS_TOL),
        mu,
        kappa,
        nabla_n_n: vec![0.0; n + 1],
    })
}

/// Default leaf grid of a warped chart.
pub fn default_warped_sizes(spec: &WarpedSpec) -> Vec<usize> {
    (0..spec.n)
        .map(|i| if i == 0 && spec.horo_rate().is_some() { 128 } else { 16 })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ambient::make_warped;
    use crate::expr::Expr;
    use crate::symcurv::binomial;
    use std::f64::consts::PI;

    fn sphere(n: usize, radius: f64, sizes: &[usize]) -> LeafPatch {
        let chart = euclidean_for(n + 1, 3.0);
        build_leaf(&chart, &sphere_immersion(n, radius, 0.0, sizes, DiffScheme::Spectral).unwrap(), Orientation::Natural)
            .unwrap()
    }

    fn max_kappa_error(leaf: &LeafPatch, expected: &[f64]) -> f64 {
        leaf.nodes
            .iter()
            .flat_map(|nd| nd.kappa.iter().zip(expected).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max)
    }

    #[test]
    fn unit_spheres() {
        let s1 = sphere(1, 2.0, &[16]);
        assert!(max_kappa_error(&s1, &[0.5]) < 1e-12);
        assert!((s1.volume() - 4.0 * PI).abs() < 1e-12);

        let s2 = sphere(2, 1.0, &[16, 16]);
        assert!(max_kappa_error(&s2, &[1.0, 1.0]) < 1e-10);
        assert!((s2.volume() - 4.0 * PI).abs() < 1e-12);
        assert!(s2.residuals.normal_norm < 1e-12);
        assert!(s2.residuals.normal_tangency < 1e-12);
        assert!(s2.residuals.self_adjointness < 1e-10);
        assert_eq!(s2.orientation, "inward");

        let s3 = sphere(3, 0.5, &[16, 16, 16]);
        assert!(max_kappa_error(&s3, &[2.0, 2.0, 2.0]) < 1e-9);
        assert!((s3.volume() - 2.0 * PI * PI * 0.125).abs() < 1e-12);
        let cf = curvature_fields(&s3, 2).unwrap();
        for node in 0..s3.len() {
            assert!((cf.h_r(node) - 4.0).abs() < 1e-8);
        }
        assert!(cf.r_tense);
    }

    #[test]
    fn reversed_orientation_flips_curvature() {
        let chart = euclidean_for(3, 2.0);
        let imm = sphere_immersion(2, 1.0, 0.0, &[16, 16], DiffScheme::Spectral).unwrap();
        let leaf = build_leaf(&chart, &imm, Orientation::Reversed).unwrap();
        assert!(max_kappa_error(&leaf, &[-1.0, -1.0]) < 1e-10);
        assert_eq!(leaf.orientation, "opposite of inward");
    }

    #[test]
    fn cylinders_are_r_minimal() {
        for (n, r, radius) in [(2, 1, 0.5), (3, 2, 2.0), (4, 3, 1.0), (3, 1, 1.0)] {
            let mut sizes = vec![16; r];
            sizes.extend(std::iter::repeat_n(8, n - r));
            let chart = euclidean_for(n + 1, 8.0);
            let imm = cylinder_immersion(n, r, radius, 5.0, &sizes, DiffScheme::Spectral).unwrap();
            let leaf = build_leaf(&chart, &imm, Orientation::Natural).unwrap();
            let cf = curvature_fields(&leaf, r).unwrap();
            for node in 0..leaf.len() {
                assert!(cf.s_r1(node).abs() < 1e-9);
                assert!((cf.s_r(node) * radius.powi(r as i32) - 1.0).abs() < 1e-8);
            }
            let area = match r {
                1 => 2.0 * PI * radius,
                2 => 4.0 * PI * radius * radius,
                _ => 2.0 * PI * PI * radius.powi(3),
            } * 5.0_f64.powi((n - r) as i32);
            assert!((leaf.volume() - area).abs() < 1e-10 * area);
        }
    }

    #[test]
    fn exp_warped_leaf_is_umbilic() {
        let a = 0.5;
        let spec = WarpedSpec::diagonal(vec![Expr::constant(a); 3], (-1.0, 1.0));
        let chart = make_warped(&spec).unwrap();
        let leaf = build_leaf(
            &chart,
            &warped_slice_immersion(&spec, 0.3, &[8, 8, 8], DiffScheme::Spectral).unwrap(),
            Orientation::Natural,
        )
        .unwrap();
        assert!(max_kappa_error(&leaf, &[a, a, a]) < 1e-12);
        // R̄(X,N)N = −a² X in the space form of curvature −a²
        for nd in &leaf.nodes {
            assert!((&nd.normal_curvature + DMatrix::identity(3, 3) * (a * a)).amax() < 1e-12);
        }
        let vol = (2.0 * PI).powi(3) * (-3.0 * a * 0.3_f64).exp();
        assert!((leaf.volume() - vol).abs() < 1e-10 * vol);
    }

    #[test]
    fn diagonal_warped_leaf_curvatures() {
        let phi = vec![
            Expr::parse("tanh(t)").unwrap(),
            Expr::parse("0.5 + 0.3*sin(t)").unwrap(),
            Expr::constant(-0.2),
        ];
        let spec = WarpedSpec::diagonal(phi.clone(), (-1.5, 1.5));
        let chart = make_warped(&spec).unwrap();
        for t in [-1.0, 0.2, 1.1] {
            let leaf = build_leaf(
                &chart,
                &warped_slice_immersion(&spec, t, &[8, 8, 8], DiffScheme::Spectral).unwrap(),
                Orientation::Natural,
            )
            .unwrap();
            let mut expect: Vec<f64> = phi.iter().map(|p| p.eval(t)).collect();
            expect.sort_by(f64::total_cmp);
            assert!(max_kappa_error(&leaf, &expect) < 1e-12);
            for r in 0..3 {
                let cf = curvature_fields(&leaf, r).unwrap();
                assert!(cf.r_tense);
                let want = sigma(r + 1, &expect);
                assert!((cf.s_r1_mean - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn cosh_leaf_over_hyperbolic_space() {
        let c = -0.64_f64;
        let s = (-c).sqrt();
        let warp = Expr::parse(&format!("cosh({s}*t)")).unwrap();
        let spec = WarpedSpec::isotropic(2, warp, c, (-1.5, 1.5));
        let chart = make_warped(&spec).unwrap();
        let t = 0.7;
        let leaf = build_leaf(
            &chart,
            &warped_slice_immersion(&spec, t, &[24, 8], DiffScheme::Spectral).unwrap(),
            Orientation::Natural,
        )
        .unwrap();
        let k = -s * (s * t).tanh();
        assert!(max_kappa_error(&leaf, &[k, k]) < 1e-10);
        for nd in &leaf.nodes {
            assert!((&nd.normal_curvature - DMatrix::identity(2, 2) * c).amax() < 1e-10);
        }
    }

    #[test]
    fn perturbed_sphere_is_not_r_tense() {
        let chart = euclidean_for(3, 3.0);
        let imm = sphere_immersion(2, 1.0, 0.1, &[32, 32], DiffScheme::Spectral).unwrap();
        let leaf = build_leaf(&chart, &imm, Orientation::Natural).unwrap();
        assert!(leaf.residuals.self_adjointness < 1e-8);
        assert!(leaf.residuals.normal_tangency < 1e-12);
        for r in 0..2 {
            let cf = curvature_fields(&leaf, r).unwrap();
            assert!(!cf.r_tense);
            assert!(cf.s_r1_deviation > 1e-3);
        }
    }

    #[test]
    fn fd4_curvature_converges_at_fourth_order() {
        let chart = euclidean_for(2, 3.0);
        let err = |m: usize| {
            let imm = sphere_immersion(1, 1.0, 0.2, &[m], DiffScheme::FiniteDiff4).unwrap();
            let fd = build_leaf(&chart, &imm, Orientation::Natural).unwrap();
            let imm = sphere_immersion(1, 1.0, 0.2, &[m], DiffScheme::Spectral).unwrap();
            let sp = build_leaf(&chart, &imm, Orientation::Natural).unwrap();
            fd.nodes
                .iter()
                .zip(&sp.nodes)
                .fold(0.0_f64, |e, (a, b)| e.max((a.kappa[0] - b.kappa[0]).abs()))
        };
        let ratio = err(64) / err(128);
        assert!(ratio > 12.0 && ratio < 20.0, "ratio {ratio}");
    }

    #[test]
    fn degenerate_immersion_is_rejected() {
        let chart = euclidean_for(3, 3.0);
        let mut imm = sphere_immersion(2, 1.0, 0.0, &[8, 8], DiffScheme::Spectral).unwrap();
        for p in &mut imm.points {
            *p = vec![0.1, 0.2, 0.3];
        }
        assert!(matches!(
            build_leaf(&chart, &imm, Orientation::Natural),
            Err(GeomError::DegenerateImmersion { .. })
        ));
    }

    #[test]
    fn concentric_spheres_normal_data() {
        // inward normal N = −∂_R: N(S_1) = n/R², ∇̄_N N = 0
        let n = 2;
        let fam = sphere_family(n, vec![16, 16], DiffScheme::Spectral, Orientation::Natural, 3.0);
        let radius = 1.3;
        let slice = FoliationSlice::new(fam, radius).unwrap();
        let ds = slice.normal_derivative_s_r1(0).unwrap();
        for v in ds {
            assert!((v - n as f64 / (radius * radius)).abs() < 1e-9, "{v}");
        }
        assert!(slice.max_nabla_n_n() < 1e-9);
    }

    #[test]
    fn warped_slices_have_geodesic_normals() {
        let phi = vec![Expr::parse("tanh(t)").unwrap(), Expr::parse("0.4 + 0.2*cos(t)").unwrap()];
        let spec = WarpedSpec::diagonal(phi, (-1.0, 1.0));
        let chart = make_warped(&spec).unwrap();
        let fam = warped_family(&chart, vec![8, 8], DiffScheme::Spectral, Orientation::Natural).unwrap();
        for t in [-0.5, 0.3] {
            let slice = FoliationSlice::new(fam.clone(), t).unwrap();
            assert!(slice.max_nabla_n_n() < 1e-8);
            for r in 0..2 {
                let closed = foliation_normal_data(&spec, r, t, Orientation::Natural).unwrap();
                let general = slice.normal_derivative_s_r1(r).unwrap();
                for v in general {
                    assert!((v - closed.ds_r1).abs() < 1e-8, "r={r} t={t}: {v} vs {}", closed.ds_r1);
                }
            }
        }
    }

    #[test]
    fn cosh_normal_data_matches_hand_derivative() {
        let c = -1.0_f64;
        let s = (-c).sqrt();
        let n = 3;
        let spec = WarpedSpec::isotropic(n, Expr::parse("cosh(t)").unwrap(), c, (-2.0, 2.0));
        for r in 0..n {
            for t in [0.25, 0.8, 1.5] {
                let nd = foliation_normal_data(&spec, r, t, Orientation::Natural).unwrap();
                let k = -s * (s * t).tanh();
                let dk = -s * s / (s * t).cosh().powi(2);
                let want = binomial(n, r + 1) * (r + 1) as f64 * k.powi(r as i32) * dk;
                assert!((nd.ds_r1 - want).abs() < 1e-9 * (1.0 + want.abs()), "r={r} t={t}");
                if r % 2 == 0 {
                    assert_eq!(nd.t_r_sign, Definiteness::PositiveSemidefinite);
                    assert!(nd.ds_r1 <= 0.0);
                }
                assert!(nd.nabla_n_n.iter().all(|v| *v == 0.0));
            }
        }
    }

    #[test]
    fn wave_graph_moves_curvature() {
        let spec = WarpedSpec::diagonal(vec![Expr::constant(0.5); 2], (-1.0, 1.0));
        let chart = make_warped(&spec).unwrap();
        let fam = warped_wave_family(&chart, 0.1, vec![16, 8], DiffScheme::Spectral, Orientation::Natural).unwrap();
        let slice = FoliationSlice::new(fam, 0.0).unwrap();
        let ds = slice.normal_derivative_s_r1(0).unwrap();
        let (lo, hi) = ds.iter().fold((f64::MAX, f64::MIN), |(a, b), v| (a.min(*v), b.max(*v)));
        assert!(lo < -1e-4 && hi > 1e-4, "N(S_1) in [{lo}, {hi}]");
        assert!(!curvature_fields(slice.leaf(), 0).unwrap().r_tense);
    }

    #[test]
    fn definiteness_classes() {
        assert_eq!(Definiteness::of([1.0, 0.0], 1e-10), Definiteness::PositiveSemidefinite);
        assert_eq!(Definiteness::of([-1.0, -1e-12], 1e-10), Definiteness::NegativeSemidefinite);
        assert_eq!(Definiteness::of([-1.0, 1.0], 1e-10), Definiteness::Indefinite);
        assert_eq!(Definiteness::of([0.0, 0.0], 1e-10), Definiteness::PositiveSemidefinite);
    }
}
