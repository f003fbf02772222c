//! Tensor-product parameter grids with differentiation and quadrature.
//!
//! Periodic axes use equispaced nodes, Fourier (or 4th-order central
//! difference) differentiation, and trapezoidal weights. An axis may carry a
//! `|sin(m u)|` density factor, which is how the area element of the
//! doubly-covered sphere charts degenerates; for those axes the weights
//! integrate `|sin(m u)| · g(u)` exactly for trigonometric `g` of degree
//! below `N/2` (a Fejér-type rule). Interval axes use Gauss–Legendre nodes,
//! weights, and polynomial collocation derivatives.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{GeomError, Result};

/// How derivatives along periodic axes are taken.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum DiffScheme {
    #[default]
    Spectral,
    FiniteDiff4,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Density {
    Uniform,
    /// Area element carries a factor `|sin(m u)|`; requires period `2π`.
    AbsSin(u32),
}

#[derive(Debug, Clone, PartialEq)]
pub enum AxisKind {
    Periodic { start: f64, period: f64, density: Density },
    Interval { lo: f64, hi: f64 },
}

#[derive(Debug, Clone)]
pub struct Axis {
    pub kind: AxisKind,
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    diff: DMatrix<f64>,
}

impl Axis {
    pub fn periodic(n: usize, start: f64, period: f64, density: Density, scheme: DiffScheme) -> Result<Self> {
        if n < 8 || n % 2 != 0 {
            return Err(GeomError::InvalidGrid(format!(
                "periodic axis needs an even node count >= 8, got {n}"
            )));
        }
        if !(period > 0.0) {
            return Err(GeomError::InvalidGrid("period must be positive".into()));
        }
        let h = period / n as f64;
        let offset = match density {
            Density::Uniform => 0.0,
            Density::AbsSin(m) => {
                if (period - 2.0 * std::f64::consts::PI).abs() > 1e-12 {
                    return Err(GeomError::InvalidGrid("|sin| density needs period 2π".into()));
                }
                if m == 0 || n % (4 * m as usize) != 0 {
                    return Err(GeomError::InvalidGrid(format!(
                        "|sin({m}u)| density needs n divisible by {}",
                        4 * m
                    )));
                }
                0.5
            }
        };
        let nodes: Vec<f64> = (0..n).map(|j| start + (j as f64 + offset) * h).collect();
        let weights = match density {
            Density::Uniform => vec![h; n],
            Density::AbsSin(m) => abs_sin_weights(&nodes, start, m),
        };
        let diff = match scheme {
            DiffScheme::Spectral => fourier_diff_matrix(n, period),
            DiffScheme::FiniteDiff4 => fd4_periodic_matrix(n, h),
        };
        Ok(Self {
            kind: AxisKind::Periodic { start, period, density },
            nodes,
            weights,
            diff,
        })
    }

    pub fn interval(n: usize, lo: f64, hi: f64) -> Result<Self> {
        if n < 4 {
            return Err(GeomError::InvalidGrid(format!("interval axis needs >= 4 nodes, got {n}")));
        }
        if !(hi > lo) {
            return Err(GeomError::InvalidGrid("interval must have hi > lo".into()));
        }
        let (x, w) = gauss_legendre(n);
        let half = 0.5 * (hi - lo);
        let mid = 0.5 * (hi + lo);
        let nodes: Vec<f64> = x.iter().map(|xi| mid + half * xi).collect();
        let weights: Vec<f64> = w.iter().map(|wi| half * wi).collect();
        // barycentric weights of Gauss–Legendre points: (−1)^j sqrt((1−x_j²) w_j)
        let bary: Vec<f64> = x
            .iter()
            .zip(&w)
            .enumerate()
            .map(|(j, (xi, wi))| {
                let s = ((1.0 - xi * xi) * wi).sqrt();
                if j % 2 == 0 { s } else { -s }
            })
            .collect();
        let diff = collocation_diff_matrix(&nodes, &bary);
        Ok(Self {
            kind: AxisKind::Interval { lo, hi },
            nodes,
            weights,
            diff,
        })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn is_periodic(&self) -> bool {
        matches!(self.kind, AxisKind::Periodic { .. })
    }

    pub fn period(&self) -> Option<f64> {
        match self.kind {
            AxisKind::Periodic { period, .. } => Some(period),
            AxisKind::Interval { .. } => None,
        }
    }

    /// Value of the extracted density factor at parameter `u`.
    pub fn density_at(&self, u: f64) -> f64 {
        match self.kind {
            AxisKind::Periodic { density: Density::AbsSin(m), .. } => (m as f64 * u).sin().abs(),
            _ => 1.0,
        }
    }

    pub fn diff_matrix(&self) -> &DMatrix<f64> {
        &self.diff
    }
}

/// `∫_0^{2π} |sin(m u)| cos(k u) du`.
fn abs_sin_moment(m: u32, k: usize) -> f64 {
    if k == 0 {
        return 4.0;
    }
    let two_m = 2 * m as usize;
    if k % two_m != 0 {
        return 0.0;
    }
    let j = (k / two_m) as f64;
    -4.0 / (4.0 * j * j - 1.0)
}

fn abs_sin_weights(nodes: &[f64], start: f64, m: u32) -> Vec<f64> {
    let n = nodes.len();
    nodes
        .iter()
        .map(|&u| {
            let v = u - start;
            let mut acc = abs_sin_moment(m, 0);
            for k in 1..n / 2 {
                acc += 2.0 * abs_sin_moment(m, k) * (k as f64 * v).cos();
            }
            acc / n as f64
        })
        .collect()
}

fn fourier_diff_matrix(n: usize, period: f64) -> DMatrix<f64> {
    let scale = 2.0 * std::f64::consts::PI / period;
    DMatrix::from_fn(n, n, |j, k| {
        if j == k {
            0.0
        } else {
            let d = j as isize - k as isize;
            let sign = if d.rem_euclid(2) == 0 { 1.0 } else { -1.0 };
            let x = d as f64 * std::f64::consts::PI / n as f64;
            scale * 0.5 * sign / x.tan()
        }
    })
}

fn fd4_periodic_matrix(n: usize, h: f64) -> DMatrix<f64> {
    let mut d = DMatrix::zeros(n, n);
    for j in 0..n {
        let idx = |o: isize| (j as isize + o).rem_euclid(n as isize) as usize;
        d[(j, idx(1))] += 8.0 / (12.0 * h);
        d[(j, idx(-1))] -= 8.0 / (12.0 * h);
        d[(j, idx(2))] -= 1.0 / (12.0 * h);
        d[(j, idx(-2))] += 1.0 / (12.0 * h);
    }
    d
}

fn collocation_diff_matrix(x: &[f64], bary: &[f64]) -> DMatrix<f64> {
    let n = x.len();
    let mut d = DMatrix::zeros(n, n);
    for j in 0..n {
        let mut diag = 0.0;
        for k in 0..n {
            if j != k {
                let v = (bary[k] / bary[j]) / (x[j] - x[k]);
                d[(j, k)] = v;
                diag -= v;
            }
        }
        d[(j, j)] = diag;
    }
    d
}

/// Gauss–Legendre nodes (ascending) and weights on `[−1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, z);
            dp = d;
            let dz = p / d;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, z);
        if d != 0.0 {
            dp = d;
        }
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

fn legendre_with_derivative(n: usize, z: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = z;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (z * p1 - p0) / (z * z - 1.0);
    (p1, d)
}

/// Row-major tensor grid (last axis varies fastest).
#[derive(Debug, Clone)]
pub struct Grid {
    axes: Vec<Axis>,
    strides: Vec<usize>,
    len: usize,
}

impl Grid {
    pub fn new(axes: Vec<Axis>) -> Result<Self> {
        if axes.is_empty() {
            return Err(GeomError::InvalidGrid("grid needs at least one axis".into()));
        }
        let mut strides = vec![1; axes.len()];
        for a in (0..axes.len() - 1).rev() {
            strides[a] = strides[a + 1] * axes[a + 1].len();
        }
        let len = axes.iter().map(Axis::len).product();
        Ok(Self { axes, strides, len })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn axes(&self) -> &[Axis] {
        &self.axes
    }

    pub fn axis(&self, a: usize) -> &Axis {
        &self.axes[a]
    }

    pub fn shape(&self) -> Vec<usize> {
        self.axes.iter().map(Axis::len).collect()
    }

    pub fn multi_index(&self, node: usize) -> Vec<usize> {
        self.strides
            .iter()
            .zip(&self.axes)
            .map(|(&s, ax)| (node / s) % ax.len())
            .collect()
    }

    /// Parameter coordinates of a node.
    pub fn coords(&self, node: usize) -> Vec<f64> {
        self.multi_index(node)
            .iter()
            .zip(&self.axes)
            .map(|(&i, ax)| ax.nodes[i])
            .collect()
    }

    /// Product of the per-axis quadrature weights.
    pub fn quad_weight(&self, node: usize) -> f64 {
        self.multi_index(node)
            .iter()
            .zip(&self.axes)
            .map(|(&i, ax)| ax.weights[i])
            .product()
    }

    /// Product of the per-axis density factors extracted into the weights.
    pub fn density(&self, node: usize) -> f64 {
        self.multi_index(node)
            .iter()
            .zip(&self.axes)
            .map(|(&i, ax)| ax.density_at(ax.nodes[i]))
            .product()
    }

    /// Partial derivative of nodal data along `axis`.
    pub fn diff(&self, axis: usize, data: &[f64]) -> Vec<f64> {
        assert_eq!(data.len(), self.len, "nodal data has wrong length");
        let ax = &self.axes[axis];
        let m = ax.len();
        let stride = self.strides[axis];
        let d = ax.diff_matrix();
        let mut out = vec![0.0; self.len];
        let mut line = vec![0.0; m];
        let block = stride * m;
        for base in (0..self.len).step_by(block) {
            for inner in 0..stride {
                let start = base + inner;
                for (k, l) in line.iter_mut().enumerate() {
                    *l = data[start + k * stride];
                }
                for j in 0..m {
                    let mut acc = 0.0;
                    for (k, l) in line.iter().enumerate() {
                        acc += d[(j, k)] * l;
                    }
                    out[start + j * stride] = acc;
                }
            }
        }
        out
    }
}

/// Pairwise (cascade) summation; deterministic for a fixed input order.
pub fn pairwise_sum(v: &[f64]) -> f64 {
    if v.len() <= 32 {
        return v.iter().sum();
    }
    let mid = v.len() / 2;
    pairwise_sum(&v[..mid]) + pairwise_sum(&v[mid..])
}
