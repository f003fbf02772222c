//! Test-function families on leaves.
//!
//! Tori get truncated Fourier modes, spheres get restrictions of harmonic
//! polynomials, cylinders get products of both, and interval axes get
//! Gaussian bumps times low-order polynomials so every function decays to
//! roundoff before the edge of the patch.

use std::f64::consts::TAU;
use std::sync::Arc;

use crate::error::Result;
use crate::grid::AxisKind;
use crate::hypersurface::{LeafPatch, LeafShape};
use crate::leafcalc::ScalarField;

/// Width of the Gaussian bump on interval axes, as a fraction of the half-length.
pub const BUMP_WIDTH: f64 = 0.0625;

/// Nonzero integer wave vectors in `[−k, k]^dim` up to sign (first nonzero
/// entry positive), in lexicographic order.
pub fn wave_vectors(dim: usize, k: i64) -> Vec<Vec<i64>> {
    let mut out = Vec::new();
    let side = (2 * k + 1) as usize;
    let total = side.pow(dim as u32);
    for code in 0..total {
        let mut c = code;
        let v: Vec<i64> = (0..dim)
            .map(|_| {
                let d = (c % side) as i64 - k;
                c /= side;
                d
            })
            .collect();
        match v.iter().find(|&&x| x != 0) {
            Some(&first) if first > 0 => out.push(v),
            _ => {}
        }
    }
    out
}

/// Phase `2π (u − start) / period` of every periodic axis, `None` for interval axes.
fn angles(leaf: &LeafPatch, u: &[f64]) -> Vec<Option<f64>> {
    leaf.grid
        .axes()
        .iter()
        .zip(u)
        .map(|(ax, &x)| match ax.kind {
            AxisKind::Periodic { start, period, .. } => Some(TAU * (x - start) / period),
            AxisKind::Interval { .. } => None,
        })
        .collect()
}

/// `cos(k·θ)` and `sin(k·θ)` for every wave vector over the periodic axes,
/// times `b_m(y) = ((y−c)/w)^m exp(−(y−c)²/(2w²))`, `m ≤ max_k`, on each
/// interval axis (the constant is omitted when there is no interval axis).
pub fn fourier_bump_basis(leaf: &Arc<LeafPatch>, max_k: usize) -> Result<Vec<ScalarField>> {
    let periodic: Vec<usize> = (0..leaf.n).filter(|&i| leaf.grid.axis(i).is_periodic()).collect();
    let interval: Vec<(usize, f64, f64)> = (0..leaf.n)
        .filter_map(|i| match leaf.grid.axis(i).kind {
            AxisKind::Interval { lo, hi } => Some((i, 0.5 * (lo + hi), BUMP_WIDTH * (hi - lo))),
            _ => None,
        })
        .collect();
    let mut waves: Vec<Option<(Vec<i64>, bool)>> = Vec::new();
    if !interval.is_empty() {
        waves.push(None);
    }
    for k in wave_vectors(periodic.len(), max_k as i64) {
        waves.push(Some((k.clone(), false)));
        waves.push(Some((k, true)));
    }
    let mut profiles: Vec<Vec<usize>> = vec![vec![]];
    for _ in &interval {
        profiles = profiles
            .into_iter()
            .flat_map(|p| {
                (0..=max_k).map(move |m| {
                    let mut q = p.clone();
                    q.push(m);
                    q
                })
            })
            .collect();
    }
    let mut out = Vec::new();
    for wave in &waves {
        for prof in &profiles {
            let f = ScalarField::from_param_fn(leaf, |u| {
                let th = angles(leaf, u);
                let mut v = match wave {
                    None => 1.0,
                    Some((k, is_sin)) => {
                        let ph: f64 = periodic.iter().zip(k).map(|(&i, &ki)| ki as f64 * th[i].unwrap()).sum();
                        if *is_sin { ph.sin() } else { ph.cos() }
                    }
                };
                for ((i, c, w), &m) in interval.iter().zip(prof) {
                    let z = (u[*i] - c) / w;
                    v *= z.powi(m as i32) * (-0.5 * z * z).exp();
                }
                v
            })?;
            out.push(f);
        }
    }
    Ok(out)
}

/// Harmonic polynomials of degree 1 and 2 in the unit position `x / |x|`
/// over the first `dim` ambient coordinates.
fn harmonic_factors(dim: usize, max_degree: usize) -> Vec<Box<dyn Fn(&[f64]) -> f64 + Send + Sync>> {
    let mut out: Vec<Box<dyn Fn(&[f64]) -> f64 + Send + Sync>> = Vec::new();
    if max_degree >= 1 {
        for a in 0..dim {
            out.push(Box::new(move |x: &[f64]| x[a]));
        }
    }
    if max_degree >= 2 {
        for a in 0..dim {
            for b in a + 1..dim {
                out.push(Box::new(move |x: &[f64]| x[a] * x[b]));
            }
        }
        for a in 0..dim - 1 {
            out.push(Box::new(move |x: &[f64]| x[a] * x[a] - x[a + 1] * x[a + 1]));
        }
    }
    out
}

fn unit_part(p: &[f64], dim: usize) -> Vec<f64> {
    let r = p[..dim].iter().map(|v| v * v).sum::<f64>().sqrt();
    p[..dim].iter().map(|v| v / r).collect()
}

/// Spherical harmonics of degree `1..=max_degree` (at most 2).
pub fn sphere_harmonics(leaf: &Arc<LeafPatch>, max_degree: usize) -> Result<Vec<ScalarField>> {
    let dim = leaf.n + 1;
    harmonic_factors(dim, max_degree.min(2))
        .iter()
        .map(|h| ScalarField::from_point_fn(leaf, |p| h(&unit_part(p, dim))))
        .collect()
}

/// Products of low harmonics on the round factor and Fourier modes along the
/// flat factor, without the constant.
pub fn cylinder_basis(leaf: &Arc<LeafPatch>, r: usize, box_len: f64, max_k: usize) -> Result<Vec<ScalarField>> {
    let n = leaf.n;
    let mut round: Vec<Box<dyn Fn(&[f64]) -> f64 + Send + Sync>> = vec![Box::new(|_: &[f64]| 1.0)];
    round.extend(harmonic_factors(r + 1, max_k.clamp(1, 2)));
    let mut flat: Vec<Box<dyn Fn(&[f64]) -> f64 + Send + Sync>> = vec![Box::new(|_: &[f64]| 1.0)];
    for k in wave_vectors(n - r, max_k as i64) {
        let k2 = k.clone();
        flat.push(Box::new(move |z: &[f64]| {
            (k.iter().zip(z).map(|(ki, zi)| *ki as f64 * zi).sum::<f64>() * TAU / box_len).cos()
        }));
        flat.push(Box::new(move |z: &[f64]| {
            (k2.iter().zip(z).map(|(ki, zi)| *ki as f64 * zi).sum::<f64>() * TAU / box_len).sin()
        }));
    }
    let mut out = Vec::new();
    for (i, a) in round.iter().enumerate() {
        for (j, b) in flat.iter().enumerate() {
            if i == 0 && j == 0 {
                continue;
            }
            out.push(ScalarField::from_point_fn(leaf, |p| {
                a(&unit_part(p, r + 1)) * b(&p[r + 1..])
            })?);
        }
    }
    Ok(out)
}

/// The natural family for the leaf's shape, with mode cutoff `max_k`.
pub fn default_basis(leaf: &Arc<LeafPatch>, max_k: usize) -> Result<Vec<ScalarField>> {
    match leaf.shape {
        LeafShape::Sphere { .. } => sphere_harmonics(leaf, max_k),
        LeafShape::Cylinder { r, box_len, .. } => cylinder_basis(leaf, r, box_len, max_k),
        LeafShape::WarpedGraph { .. } | LeafShape::Custom => fourier_bump_basis(leaf, max_k),
    }
}
