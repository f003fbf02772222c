//! Ambient Riemannian manifolds given by coordinate charts.
//!
//! A chart carries its metric and, optionally, a closed-form metric jet
//! (first and second partial derivatives). Christoffel symbols and the
//! curvature tensor are assembled from the jet; without a closed form, or
//! in finite-difference mode, the jet is replaced by 4th-order central
//! differences so the two paths can be checked against each other.
//!
//! Curvature convention: `R(X,Y)Z = ∇_X∇_Y Z − ∇_Y∇_X Z − ∇_[X,Y] Z`,
//! `R(∂_c,∂_d)∂_b = R^a_{bcd} ∂_a` and `R_{abcd} = g_{ae} R^e_{bcd}`, so
//! a space form of curvature `c` has `R_{abcd} = c (g_ac g_bd − g_ad g_bc)`.

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{GeomError, Result};
use crate::expr::Expr;
use crate::grid::gauss_legendre;

pub type MetricFn = Arc<dyn Fn(&[f64]) -> DMatrix<f64> + Send + Sync>;
pub type JetFn = Arc<dyn Fn(&[f64]) -> MetricJet + Send + Sync>;

/// One coordinate axis of a chart's domain box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChartAxis {
    pub lo: f64,
    pub hi: f64,
    pub periodic: bool,
}

impl ChartAxis {
    pub fn interval(lo: f64, hi: f64) -> Self {
        Self { lo, hi, periodic: false }
    }

    pub fn periodic(lo: f64, hi: f64) -> Self {
        Self { lo, hi, periodic: true }
    }

    pub fn span(&self) -> f64 {
        self.hi - self.lo
    }
}

/// Metric together with its first and second partial derivatives.
#[derive(Debug, Clone)]
pub struct MetricJet {
    pub g: DMatrix<f64>,
    /// `dg[c] = ∂_c g`
    pub dg: Vec<DMatrix<f64>>,
    /// `ddg[c][d] = ∂_c ∂_d g`
    pub ddg: Vec<Vec<DMatrix<f64>>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum DerivMode {
    ClosedForm,
    FiniteDifference,
}

/// Christoffel symbols `Γ^a_{bc}` at a point.
#[derive(Debug, Clone, PartialEq)]
pub struct Christoffel {
    dim: usize,
    data: Vec<f64>,
}

impl Christoffel {
    fn zeros(dim: usize) -> Self {
        Self { dim, data: vec![0.0; dim * dim * dim] }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, a: usize, b: usize, c: usize) -> f64 {
        self.data[(a * self.dim + b) * self.dim + c]
    }

    #[inline]
    fn set(&mut self, a: usize, b: usize, c: usize, v: f64) {
        let d = self.dim;
        self.data[(a * d + b) * d + c] = v;
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .fold(0.0_f64, |m, (x, y)| m.max((x - y).abs()))
    }

    /// `Γ^a_{bc} u^b v^c`
    pub fn contract(&self, u: &[f64], v: &[f64]) -> Vec<f64> {
        let d = self.dim;
        (0..d)
            .map(|a| {
                let mut acc = 0.0;
                for b in 0..d {
                    if u[b] == 0.0 {
                        continue;
                    }
                    for c in 0..d {
                        acc += self.get(a, b, c) * u[b] * v[c];
                    }
                }
                acc
            })
            .collect()
    }
}

/// Riemann tensor sample at a point.
#[derive(Debug, Clone)]
pub struct CurvatureTensorSample {
    pub point: Vec<f64>,
    pub metric: DMatrix<f64>,
    dim: usize,
    /// `R^a_{bcd}`
    riemann: Vec<f64>,
    pub ricci: DMatrix<f64>,
}

impl CurvatureTensorSample {
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn up(&self, a: usize, b: usize, c: usize, d: usize) -> f64 {
        let n = self.dim;
        self.riemann[((a * n + b) * n + c) * n + d]
    }

    /// `R_{abcd} = g_{ae} R^e_{bcd}`
    pub fn down(&self, a: usize, b: usize, c: usize, d: usize) -> f64 {
        (0..self.dim).map(|e| self.metric[(a, e)] * self.up(e, b, c, d)).sum()
    }

    /// All lowered components, indexed like `up`.
    pub fn lowered(&self) -> Vec<f64> {
        let n = self.dim;
        let mut out = vec![0.0; n * n * n * n];
        for a in 0..n {
            for b in 0..n {
                for c in 0..n {
                    for d in 0..n {
                        out[((a * n + b) * n + c) * n + d] = self.down(a, b, c, d);
                    }
                }
            }
        }
        out
    }

    /// `⟨R(X,Y)Z, W⟩`
    pub fn apply4(&self, w: &[f64], z: &[f64], x: &[f64], y: &[f64]) -> f64 {
        let n = self.dim;
        let mut acc = 0.0;
        for a in 0..n {
            for b in 0..n {
                if z[b] == 0.0 {
                    continue;
                }
                for c in 0..n {
                    if x[c] == 0.0 {
                        continue;
                    }
                    for d in 0..n {
                        if y[d] == 0.0 {
                            continue;
                        }
                        acc += self.down(a, b, c, d) * w[a] * z[b] * x[c] * y[d];
                    }
                }
            }
        }
        acc
    }

    /// Largest `|R^a_{bcd} + R^a_{bdc}|`.
    pub fn antisymmetry_residual(&self) -> f64 {
        let n = self.dim;
        let mut m = 0.0_f64;
        for a in 0..n {
            for b in 0..n {
                for c in 0..n {
                    for d in 0..n {
                        m = m.max((self.up(a, b, c, d) + self.up(a, b, d, c)).abs());
                    }
                }
            }
        }
        m
    }

    /// Largest first-Bianchi residual `|R^a_{bcd} + R^a_{cdb} + R^a_{dbc}|`.
    pub fn bianchi_residual(&self) -> f64 {
        let n = self.dim;
        let mut m = 0.0_f64;
        for a in 0..n {
            for b in 0..n {
                for c in 0..n {
                    for d in 0..n {
                        let s = self.up(a, b, c, d) + self.up(a, c, d, b) + self.up(a, d, b, c);
                        m = m.max(s.abs());
                    }
                }
            }
        }
        m
    }

    /// Sectional curvature of the plane spanned by coordinate vectors `∂_i, ∂_j`.
    pub fn sectional(&self, i: usize, j: usize) -> f64 {
        let g = &self.metric;
        let area = g[(i, i)] * g[(j, j)] - g[(i, j)] * g[(i, j)];
        self.down(i, j, i, j) / area
    }
}

/// A Riemannian metric on a coordinate box.
#[derive(Clone)]
pub struct AmbientChart {
    name: String,
    axes: Vec<ChartAxis>,
    metric: MetricFn,
    jet: Option<JetFn>,
    mode: DerivMode,
    fd_steps: Vec<f64>,
    warped: Option<WarpedSpec>,
    flat: bool,
}

impl fmt::Debug for AmbientChart {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("AmbientChart")
            .field("name", &self.name)
            .field("axes", &self.axes)
            .field("mode", &self.mode)
            .field("closed_form", &self.jet.is_some())
            .finish()
    }
}

/// Default finite-difference step as a fraction of the axis span.
pub const FD_STEP_FACTOR: f64 = 1e-3;

impl AmbientChart {
    pub fn new(name: impl Into<String>, axes: Vec<ChartAxis>, metric: MetricFn, jet: Option<JetFn>) -> Self {
        let fd_steps = axes.iter().map(|a| a.span() * FD_STEP_FACTOR).collect();
        let mode = if jet.is_some() {
            DerivMode::ClosedForm
        } else {
            DerivMode::FiniteDifference
        };
        Self {
            name: name.into(),
            axes,
            metric,
            jet,
            mode,
            fd_steps,
            warped: None,
            flat: false,
        }
    }

    /// Flat `ℝ^dim` on the box `[−half_width, half_width]^dim`.
    pub fn euclidean(dim: usize, half_width: f64) -> Self {
        let axes = vec![ChartAxis::interval(-half_width, half_width); dim];
        let metric: MetricFn = Arc::new(move |_| DMatrix::identity(dim, dim));
        let jet: JetFn = Arc::new(move |_| MetricJet {
            g: DMatrix::identity(dim, dim),
            dg: vec![DMatrix::zeros(dim, dim); dim],
            ddg: vec![vec![DMatrix::zeros(dim, dim); dim]; dim],
        });
        let mut chart = Self::new("euclidean", axes, metric, Some(jet));
        chart.flat = true;
        chart
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn axes(&self) -> &[ChartAxis] {
        &self.axes
    }

    pub fn mode(&self) -> DerivMode {
        self.mode
    }

    /// Flat charts skip curvature assembly.
    pub fn is_flat(&self) -> bool {
        self.flat
    }

    pub fn has_closed_form(&self) -> bool {
        self.jet.is_some()
    }

    pub fn warped_spec(&self) -> Option<&WarpedSpec> {
        self.warped.as_ref()
    }

    /// Switches between closed-form and finite-difference derivatives.
    /// Closed form is only honored when the chart has one.
    pub fn with_mode(mut self, mode: DerivMode) -> Self {
        self.mode = if self.jet.is_some() { mode } else { DerivMode::FiniteDifference };
        self
    }

    /// Overrides the finite-difference step on every axis.
    pub fn with_fd_steps(mut self, steps: Vec<f64>) -> Self {
        assert_eq!(steps.len(), self.dim());
        self.fd_steps = steps;
        self
    }

    pub fn with_fd_step_factor(mut self, factor: f64) -> Self {
        self.fd_steps = self.axes.iter().map(|a| a.span() * factor).collect();
        self
    }

    pub fn fd_steps(&self) -> &[f64] {
        &self.fd_steps
    }

    pub fn contains(&self, p: &[f64]) -> bool {
        p.len() == self.dim()
            && p.iter().zip(&self.axes).all(|(x, ax)| {
                x.is_finite() && (ax.periodic || (*x >= ax.lo - 1e-12 && *x <= ax.hi + 1e-12))
            })
    }

    fn check(&self, p: &[f64]) -> Result<()> {
        if self.contains(p) {
            Ok(())
        } else {
            Err(GeomError::OutsideDomain { point: p.to_vec() })
        }
    }

    pub fn metric(&self, p: &[f64]) -> Result<DMatrix<f64>> {
        self.check(p)?;
        Ok((self.metric)(p))
    }

    /// Metric without the domain check (for stencil points near the boundary).
    pub(crate) fn metric_unchecked(&self, p: &[f64]) -> DMatrix<f64> {
        (self.metric)(p)
    }

    /// Metric jet in the active derivative mode.
    pub fn jet(&self, p: &[f64]) -> Result<MetricJet> {
        self.check(p)?;
        match (&self.jet, self.mode) {
            (Some(j), DerivMode::ClosedForm) => Ok(j(p)),
            _ => Ok(self.fd_jet(p)),
        }
    }

    fn fd_first(&self, p: &[f64], c: usize, f: &dyn Fn(&[f64]) -> DMatrix<f64>) -> DMatrix<f64> {
        let h = self.fd_steps[c];
        let mut q = p.to_vec();
        let mut eval = |off: f64| {
            q[c] = p[c] + off * h;
            f(&q)
        };
        let (m2, m1, p1, p2) = (eval(-2.0), eval(-1.0), eval(1.0), eval(2.0));
        (m2 - p2 + (p1 - m1) * 8.0) / (12.0 * h)
    }

    fn fd_jet(&self, p: &[f64]) -> MetricJet {
        let n = self.dim();
        let metric = |q: &[f64]| self.metric_unchecked(q);
        let g = metric(p);
        let dg: Vec<_> = (0..n).map(|c| self.fd_first(p, c, &metric)).collect();
        let mut ddg = vec![vec![DMatrix::zeros(n, n); n]; n];
        for c in 0..n {
            for d in c..n {
                let m = if c == d {
                    let h = self.fd_steps[c];
                    let mut q = p.to_vec();
                    let mut eval = |off: f64| {
                        q[c] = p[c] + off * h;
                        metric(&q)
                    };
                    let (m2, m1, p1, p2) = (eval(-2.0), eval(-1.0), eval(1.0), eval(2.0));
                    ((m1 + p1) * 16.0 - m2 - p2 - &g * 30.0) / (12.0 * h * h)
                } else {
                    let inner = |q: &[f64]| self.fd_first(q, d, &metric);
                    self.fd_first(p, c, &inner)
                };
                ddg[c][d] = m.clone();
                ddg[d][c] = m;
            }
        }
        MetricJet { g, dg, ddg }
    }

    /// Christoffel symbols at `p`.
    pub fn christoffels(&self, p: &[f64]) -> Result<Christoffel> {
        self.check(p)?;
        match (&self.jet, self.mode) {
            (Some(j), DerivMode::ClosedForm) => Ok(christoffel_from_jet(&j(p))),
            _ => Ok(self.fd_christoffels(p)),
        }
    }

    fn fd_christoffels(&self, p: &[f64]) -> Christoffel {
        let n = self.dim();
        let metric = |q: &[f64]| self.metric_unchecked(q);
        let g = metric(p);
        let dg: Vec<_> = (0..n).map(|c| self.fd_first(p, c, &metric)).collect();
        christoffel_from_parts(&g, &dg)
    }

    /// Curvature tensor at `p`.
    ///
    /// Closed-form mode assembles it from the analytic jet; finite-difference
    /// mode differentiates finite-difference Christoffel symbols.
    pub fn riemann(&self, p: &[f64]) -> Result<CurvatureTensorSample> {
        self.check(p)?;
        let n = self.dim();
        let (g, gamma, dgamma) = match (&self.jet, self.mode) {
            (Some(j), DerivMode::ClosedForm) => {
                let jet = j(p);
                let gamma = christoffel_from_jet(&jet);
                let dgamma = christoffel_derivatives_from_jet(&jet);
                (jet.g, gamma, dgamma)
            }
            _ => {
                let gamma = self.fd_christoffels(p);
                let dgamma = (0..n)
                    .map(|e| {
                        let h = self.fd_steps[e];
                        let mut q = p.to_vec();
                        let mut eval = |off: f64| {
                            q[e] = p[e] + off * h;
                            self.fd_christoffels(&q)
                        };
                        let (m2, m1, p1, p2) = (eval(-2.0), eval(-1.0), eval(1.0), eval(2.0));
                        let mut out = Christoffel::zeros(n);
                        for i in 0..out.data.len() {
                            out.data[i] = (m2.data[i] - p2.data[i] + 8.0 * (p1.data[i] - m1.data[i])) / (12.0 * h);
                        }
                        out
                    })
                    .collect();
                (self.metric_unchecked(p), gamma, dgamma)
            }
        };
        Ok(assemble_riemann(p, g, &gamma, &dgamma))
    }
}

fn christoffel_from_parts(g: &DMatrix<f64>, dg: &[DMatrix<f64>]) -> Christoffel {
    let n = g.nrows();
    let ginv = g.clone().try_inverse().expect("metric must be invertible");
    let mut out = Christoffel::zeros(n);
    // lowered Γ_{d,bc} = ½(∂_b g_dc + ∂_c g_db − ∂_d g_bc)
    let mut low = vec![0.0; n * n * n];
    for d in 0..n {
        for b in 0..n {
            for c in 0..n {
                low[(d * n + b) * n + c] = 0.5 * (dg[b][(d, c)] + dg[c][(d, b)] - dg[d][(b, c)]);
            }
        }
    }
    for a in 0..n {
        for b in 0..n {
            for c in b..n {
                let v: f64 = (0..n).map(|d| ginv[(a, d)] * low[(d * n + b) * n + c]).sum();
                out.set(a, b, c, v);
                out.set(a, c, b, v);
            }
        }
    }
    out
}

pub fn christoffel_from_jet(jet: &MetricJet) -> Christoffel {
    christoffel_from_parts(&jet.g, &jet.dg)
}

/// `∂_e Γ^a_{bc}` for every `e`, from the analytic jet.
fn christoffel_derivatives_from_jet(jet: &MetricJet) -> Vec<Christoffel> {
    let n = jet.g.nrows();
    let ginv = jet.g.clone().try_inverse().expect("metric must be invertible");
    let mut low = vec![0.0; n * n * n];
    for d in 0..n {
        for b in 0..n {
            for c in 0..n {
                low[(d * n + b) * n + c] = 0.5 * (jet.dg[b][(d, c)] + jet.dg[c][(d, b)] - jet.dg[d][(b, c)]);
            }
        }
    }
    (0..n)
        .map(|e| {
            // ∂_e g^{-1} = −g^{-1} (∂_e g) g^{-1}
            let dginv = -(&ginv * &jet.dg[e] * &ginv);
            let mut out = Christoffel::zeros(n);
            for a in 0..n {
                for b in 0..n {
                    for c in b..n {
                        let mut v = 0.0;
                        for d in 0..n {
                            let dlow = 0.5 * (jet.ddg[e][b][(d, c)] + jet.ddg[e][c][(d, b)] - jet.ddg[e][d][(b, c)]);
                            v += dginv[(a, d)] * low[(d * n + b) * n + c] + ginv[(a, d)] * dlow;
                        }
                        out.set(a, b, c, v);
                        out.set(a, c, b, v);
                    }
                }
            }
            out
        })
        .collect()
}

fn assemble_riemann(p: &[f64], g: DMatrix<f64>, gamma: &Christoffel, dgamma: &[Christoffel]) -> CurvatureTensorSample {
    let n = g.nrows();
    let mut riemann = vec![0.0; n * n * n * n];
    for a in 0..n {
        for b in 0..n {
            for c in 0..n {
                for d in 0..n {
                    let mut v = dgamma[c].get(a, d, b) - dgamma[d].get(a, c, b);
                    for e in 0..n {
                        v += gamma.get(a, c, e) * gamma.get(e, d, b) - gamma.get(a, d, e) * gamma.get(e, c, b);
                    }
                    riemann[((a * n + b) * n + c) * n + d] = v;
                }
            }
        }
    }
    let mut ricci = DMatrix::zeros(n, n);
    for b in 0..n {
        for d in 0..n {
            ricci[(b, d)] = (0..n).map(|a| riemann[((a * n + b) * n + a) * n + d]).sum();
        }
    }
    CurvatureTensorSample {
        point: p.to_vec(),
        metric: g,
        dim: n,
        riemann,
        ricci,
    }
}

/// Outcome of [`classify`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "class", content = "value", rename_all = "kebab-case")]
pub enum AmbientClass {
    SpaceForm(f64),
    Einstein(f64),
    Generic,
}

impl AmbientClass {
    pub fn is_einstein(&self) -> bool {
        matches!(self, Self::SpaceForm(_) | Self::Einstein(_))
    }

    pub fn space_form_curvature(&self) -> Option<f64> {
        match self {
            Self::SpaceForm(c) => Some(*c),
            _ => None,
        }
    }
}

impl fmt::Display for AmbientClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::SpaceForm(c) => write!(f, "space-form({c:.6})"),
            Self::Einstein(l) => write!(f, "einstein({l:.6})"),
            Self::Generic => write!(f, "generic"),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ClassifyReport {
    pub class: AmbientClass,
    pub fitted_c: f64,
    pub space_form_residual: f64,
    pub fitted_lambda: f64,
    pub einstein_residual: f64,
    /// Per sample: sectional curvature of `(∂_0, ∂_1)` and, when the
    /// dimension allows, of `(∂_1, ∂_2)`.
    pub sectional_samples: Vec<(f64, Option<f64>)>,
}

/// Residual threshold for the space-form and Einstein tests.
pub const CLASSIFY_TOL: f64 = 1e-6;

/// Frame components `R̂_{ijkl}` in a metric-orthonormal frame.
fn orthonormal_components(sample: &CurvatureTensorSample) -> Vec<f64> {
    let n = sample.dim();
    let chol = nalgebra::Cholesky::new(sample.metric.clone()).expect("metric must be positive definite");
    // columns of E are orthonormal: Eᵀ g E = I with E = L^{-T}
    let e = chol.l().transpose().try_inverse().expect("invertible Cholesky factor");
    let mut cur = sample.lowered();
    for slot in 0..4 {
        let mut next = vec![0.0; cur.len()];
        let stride = n.pow(3 - slot as u32);
        for idx in 0..cur.len() {
            let digit = (idx / stride) % n;
            let base = idx - digit * stride;
            let mut v = 0.0;
            for a in 0..n {
                v += cur[base + a * stride] * e[(a, digit)];
            }
            next[idx] = v;
        }
        cur = next;
    }
    cur
}

pub fn classify(chart: &AmbientChart, samples: &[Vec<f64>]) -> Result<ClassifyReport> {
    if samples.len() < 10 {
        return Err(GeomError::InvalidInput("classify needs at least 10 sample points".into()));
    }
    let n = chart.dim();
    let mut frames = Vec::with_capacity(samples.len());
    let mut sectional_samples = Vec::with_capacity(samples.len());
    for p in samples {
        let s = chart.riemann(p)?;
        sectional_samples.push((s.sectional(0, 1), (n > 2).then(|| s.sectional(1, 2))));
        frames.push((orthonormal_components(&s), s));
    }
    let pform = |i: usize, j: usize, k: usize, l: usize| {
        let d = |a: usize, b: usize| if a == b { 1.0 } else { 0.0 };
        d(i, k) * d(j, l) - d(i, l) * d(j, k)
    };
    let (mut num, mut den) = (0.0, 0.0);
    for (r, _) in &frames {
        for (idx, v) in r.iter().enumerate() {
            let (i, j, k, l) = (idx / (n * n * n), (idx / (n * n)) % n, (idx / n) % n, idx % n);
            let p = pform(i, j, k, l);
            num += v * p;
            den += p * p;
        }
    }
    let fitted_c = if den > 0.0 { num / den } else { 0.0 };
    let mut space_form_residual = 0.0_f64;
    for (r, _) in &frames {
        for (idx, v) in r.iter().enumerate() {
            let (i, j, k, l) = (idx / (n * n * n), (idx / (n * n)) % n, (idx / n) % n, idx % n);
            space_form_residual = space_form_residual.max((v - fitted_c * pform(i, j, k, l)).abs());
        }
    }

    // Ricci in the orthonormal frame
    let mut lambdas = Vec::new();
    let mut ric_frames = Vec::new();
    for (r, _) in &frames {
        let mut ric = DMatrix::zeros(n, n);
        for j in 0..n {
            for l in 0..n {
                ric[(j, l)] = (0..n).map(|i| r[((i * n + j) * n + i) * n + l]).sum();
            }
        }
        lambdas.push(ric.trace() / n as f64);
        ric_frames.push(ric);
    }
    let fitted_lambda = lambdas.iter().sum::<f64>() / lambdas.len() as f64;
    let einstein_residual = ric_frames
        .iter()
        .map(|ric| (ric - DMatrix::<f64>::identity(n, n) * fitted_lambda).amax())
        .fold(0.0_f64, f64::max);

    let class = if space_form_residual < CLASSIFY_TOL {
        AmbientClass::SpaceForm(fitted_c)
    } else if einstein_residual < CLASSIFY_TOL {
        AmbientClass::Einstein(fitted_lambda)
    } else {
        AmbientClass::Generic
    };
    Ok(ClassifyReport {
        class,
        fitted_c,
        space_form_residual,
        fitted_lambda,
        einstein_residual,
        sectional_samples,
    })
}

/// Deterministic sample points spread through the chart's domain.
pub fn sample_points(chart: &AmbientChart, count: usize) -> Vec<Vec<f64>> {
    // low-discrepancy additive recurrence, kept away from the box faces
    let n = chart.dim();
    const PRIMES: [f64; 12] = [2.0, 3.0, 5.0, 7.0, 11.0, 13.0, 17.0, 19.0, 23.0, 29.0, 31.0, 37.0];
    let alphas: Vec<f64> = (0..n).map(|i| PRIMES[i % PRIMES.len()].sqrt().fract()).collect();
    (0..count)
        .map(|k| {
            chart
                .axes()
                .iter()
                .zip(&alphas)
                .map(|(ax, al)| {
                    let u = (0.5 + (k + 1) as f64 * al).fract();
                    ax.lo + ax.span() * (0.1 + 0.8 * u)
                })
                .collect()
        })
        .collect()
}

/// Warped-product metrics on `I × L`, with `t ∈ I` as coordinate 0.
#[derive(Debug, Clone)]
pub enum WarpedKind {
    /// `dt² + Σ e^{−2∫φ_i dt} (dx^i)²` over a flat torus.
    Diagonal { phi: Vec<Expr> },
    /// `dt² + w(t)² g_L` with `g_L` of constant curvature `leaf_curvature ≤ 0`.
    /// For negative curvature and `n ≥ 2`, `g_L = dy² + e^{2sy} Σ dx_k²`
    /// (horospherical coordinates, `s = √(−leaf_curvature)`), with `y` on
    /// `[−leaf_extent, leaf_extent]`.
    Isotropic { warp: Expr, leaf_curvature: f64 },
}

#[derive(Debug, Clone)]
pub struct WarpedSpec {
    pub n: usize,
    pub kind: WarpedKind,
    pub t_range: (f64, f64),
    pub torus_period: f64,
    pub leaf_extent: f64,
}

impl WarpedSpec {
    pub fn diagonal(phi: Vec<Expr>, t_range: (f64, f64)) -> Self {
        Self {
            n: phi.len(),
            kind: WarpedKind::Diagonal { phi },
            t_range,
            torus_period: 2.0 * std::f64::consts::PI,
            leaf_extent: 3.0,
        }
    }

    pub fn isotropic(n: usize, warp: Expr, leaf_curvature: f64, t_range: (f64, f64)) -> Self {
        Self {
            n,
            kind: WarpedKind::Isotropic { warp, leaf_curvature },
            t_range,
            torus_period: 2.0 * std::f64::consts::PI,
            leaf_extent: 3.0,
        }
    }

    /// The metric coefficient is read as `coefficient(t) g_L` rather than
    /// `w(t)² g_L`; internally `w = √coefficient`.
    pub fn isotropic_linear(n: usize, coefficient: Expr, leaf_curvature: f64, t_range: (f64, f64)) -> Self {
        Self::isotropic(n, coefficient.sqrt(), leaf_curvature, t_range)
    }

    /// `s = √(−leaf_curvature)` when the leaf uses horospherical coordinates.
    pub fn horo_rate(&self) -> Option<f64> {
        match &self.kind {
            WarpedKind::Isotropic { leaf_curvature, .. } if *leaf_curvature < 0.0 && self.n >= 2 => {
                Some((-leaf_curvature).sqrt())
            }
            _ => None,
        }
    }

    /// Principal curvatures of the slice `{t} × L` for the normal `+∂_t`.
    pub fn slice_curvatures(&self, t: f64) -> Vec<f64> {
        match &self.kind {
            WarpedKind::Diagonal { phi } => phi.iter().map(|p| p.eval(t)).collect(),
            WarpedKind::Isotropic { warp, .. } => {
                let k = -warp.derivative().eval(t) / warp.eval(t);
                vec![k; self.n]
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (t0, t1) = self.t_range;
        if !(t1 > t0) {
            return Err(GeomError::InvalidSpec("t-range must be increasing".into()));
        }
        if self.n == 0 {
            return Err(GeomError::InvalidSpec("leaf dimension must be >= 1".into()));
        }
        if !(self.torus_period > 0.0) || !(self.leaf_extent > 0.0) {
            return Err(GeomError::InvalidSpec("leaf period and extent must be positive".into()));
        }
        let ts = (0..=200).map(|k| t0 + (t1 - t0) * k as f64 / 200.0);
        match &self.kind {
            WarpedKind::Diagonal { phi } => {
                if phi.len() != self.n {
                    return Err(GeomError::InvalidSpec("need one φ per leaf direction".into()));
                }
                for t in ts {
                    if phi.iter().any(|p| !p.eval(t).is_finite()) {
                        return Err(GeomError::InvalidSpec(format!("φ is not finite at t = {t}")));
                    }
                }
            }
            WarpedKind::Isotropic { warp, leaf_curvature } => {
                if *leaf_curvature > 0.0 {
                    return Err(GeomError::InvalidSpec(
                        "positively curved leaves are not supported".into(),
                    ));
                }
                for t in ts {
                    let w = warp.eval(t);
                    if !(w > 0.0) || !w.is_finite() {
                        return Err(GeomError::InvalidSpec(format!("warping function w = {w} at t = {t}")));
                    }
                }
            }
        }
        Ok(())
    }
}

/// `∫_0^t f` by composite 16-point Gauss–Legendre.
fn antiderivative(f: &Expr, t: f64) -> f64 {
    if f.is_constant() {
        return f.eval(0.0) * t;
    }
    if t == 0.0 {
        return 0.0;
    }
    let (x, w) = gauss_legendre(16);
    let panels = ((t.abs() / 0.25).ceil() as usize).max(1);
    let len = t / panels as f64;
    let mut acc = 0.0;
    for p in 0..panels {
        let a = p as f64 * len;
        for (xi, wi) in x.iter().zip(&w) {
            acc += 0.5 * len * wi * f.eval(a + 0.5 * len * (xi + 1.0));
        }
    }
    acc
}

/// Builds the warped-product chart described by `spec`.
pub fn make_warped(spec: &WarpedSpec) -> Result<AmbientChart> {
    spec.validate()?;
    let n = spec.n;
    let dim = n + 1;
    let (t0, t1) = spec.t_range;
    let period = spec.torus_period;
    let mut axes = vec![ChartAxis::interval(t0, t1)];
    let (metric, jet): (MetricFn, JetFn) = match &spec.kind {
        WarpedKind::Diagonal { phi } => {
            axes.extend(std::iter::repeat_n(ChartAxis::periodic(0.0, period), n));
            let phi = Arc::new(phi.clone());
            let dphi: Arc<Vec<Expr>> = Arc::new(phi.iter().map(Expr::derivative).collect());
            let coeffs = {
                let phi = phi.clone();
                move |t: f64| -> Vec<f64> { phi.iter().map(|p| (-2.0 * antiderivative(p, t)).exp()).collect() }
            };
            let coeffs = Arc::new(coeffs);
            let metric: MetricFn = {
                let coeffs = coeffs.clone();
                Arc::new(move |p: &[f64]| {
                    let mut g = DMatrix::identity(dim, dim);
                    for (i, c) in coeffs(p[0]).into_iter().enumerate() {
                        g[(i + 1, i + 1)] = c;
                    }
                    g
                })
            };
            let jet: JetFn = Arc::new(move |p: &[f64]| {
                let t = p[0];
                let mut g = DMatrix::identity(dim, dim);
                let mut dg = vec![DMatrix::zeros(dim, dim); dim];
                let mut ddg = vec![vec![DMatrix::zeros(dim, dim); dim]; dim];
                for (i, c) in coeffs(t).into_iter().enumerate() {
                    let f = phi[i].eval(t);
                    let df = dphi[i].eval(t);
                    g[(i + 1, i + 1)] = c;
                    dg[0][(i + 1, i + 1)] = -2.0 * f * c;
                    ddg[0][0][(i + 1, i + 1)] = (4.0 * f * f - 2.0 * df) * c;
                }
                MetricJet { g, dg, ddg }
            });
            (metric, jet)
        }
        WarpedKind::Isotropic { warp, .. } => {
            let s = spec.horo_rate();
            if s.is_some() {
                axes.push(ChartAxis::interval(-spec.leaf_extent, spec.leaf_extent));
                axes.extend(std::iter::repeat_n(ChartAxis::periodic(0.0, period), n - 1));
            } else {
                axes.extend(std::iter::repeat_n(ChartAxis::periodic(0.0, period), n));
            }
            let w = Arc::new(warp.clone());
            let dw = Arc::new(warp.derivative());
            let ddw = Arc::new(dw.derivative());
            let metric: MetricFn = {
                let w = w.clone();
                Arc::new(move |p: &[f64]| {
                    let ww = w.eval(p[0]).powi(2);
                    let mut g = DMatrix::identity(dim, dim);
                    for i in 1..dim {
                        let e = match s {
                            Some(s) if i >= 2 => (2.0 * s * p[1]).exp(),
                            _ => 1.0,
                        };
                        g[(i, i)] = ww * e;
                    }
                    g
                })
            };
            let jet: JetFn = Arc::new(move |p: &[f64]| {
                let t = p[0];
                let (wv, dwv, ddwv) = (w.eval(t), dw.eval(t), ddw.eval(t));
                let big_w = wv * wv;
                let big_dw = 2.0 * wv * dwv;
                let big_ddw = 2.0 * (dwv * dwv + wv * ddwv);
                let mut g = DMatrix::identity(dim, dim);
                let mut dg = vec![DMatrix::zeros(dim, dim); dim];
                let mut ddg = vec![vec![DMatrix::zeros(dim, dim); dim]; dim];
                for i in 1..dim {
                    match s {
                        Some(s) if i >= 2 => {
                            let e = (2.0 * s * p[1]).exp();
                            g[(i, i)] = big_w * e;
                            dg[0][(i, i)] = big_dw * e;
                            dg[1][(i, i)] = big_w * 2.0 * s * e;
                            ddg[0][0][(i, i)] = big_ddw * e;
                            ddg[0][1][(i, i)] = big_dw * 2.0 * s * e;
                            ddg[1][0][(i, i)] = big_dw * 2.0 * s * e;
                            ddg[1][1][(i, i)] = big_w * 4.0 * s * s * e;
                        }
                        _ => {
                            g[(i, i)] = big_w;
                            dg[0][(i, i)] = big_dw;
                            ddg[0][0][(i, i)] = big_ddw;
                        }
                    }
                }
                MetricJet { g, dg, ddg }
            });
            (metric, jet)
        }
    };
    let name = match spec.kind {
        WarpedKind::Diagonal { .. } => "warped-diagonal",
        WarpedKind::Isotropic { .. } => "warped-isotropic",
    };
    let mut chart = AmbientChart::new(name, axes, metric, Some(jet));
    chart.warped = Some(spec.clone());
    Ok(chart)
}
