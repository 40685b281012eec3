//! Post-processing of discrete sigma-harmonic mappings: determinant fields,
//! power densities, dilatation quotients, gradient lower-bound measurements
//! and radial degeneration-rate fits.
//!
//! Determinants are computed from the exact per-element P1 gradients with no
//! nodal averaging, so sign counts are unambiguous.

use crate::characters::ExtremalArcs;
use crate::coefficients::CoefficientField;
use crate::geometry::BoundaryCurve;
use crate::solver::{DiscreteSolution, SigmaHarmonicMap};
use crate::{Mat2, Vec2};
use serde::Serialize;
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum JacobianError {
    #[error("the two solutions live on different meshes")]
    MeshMismatch,
    #[error("need at least {min} radius bins with {min_elems} elements each, got {got}")]
    InsufficientBins {
        min: usize,
        min_elems: usize,
        got: usize,
    },
    #[error("need at least {min} directions, got {got}")]
    TooFewDirections { min: usize, got: usize },
}

#[derive(Debug, Clone, Serialize)]
pub struct PowerLawFit {
    pub exponent: f64,
    pub r_squared: f64,
    pub bins_used: usize,
}

/// Per-element determinant diagnostics of a mapping.
#[derive(Debug, Clone, Serialize)]
pub struct JacobianReport {
    #[serde(skip)]
    pub dets: Vec<f64>,
    #[serde(skip)]
    pub centroids: Vec<Vec2>,
    #[serde(skip)]
    pub eigen_mins: Vec<f64>,
    /// (distance delta from the boundary, min det over elements at least
    /// delta inside); deltas are {0, 0.05, 0.1} times the domain diameter.
    pub interior_minima: Vec<(f64, f64)>,
    pub global_min: f64,
    pub sign_changes: usize,
    pub powerlaw_fit: Option<PowerLawFit>,
}

impl JacobianReport {
    /// Min det over elements at least `rel * diameter` inside the domain.
    pub fn interior_min_rel(&self, rel: f64) -> Option<f64> {
        let target = rel * self.interior_minima.last()?.0 / 0.1;
        self.interior_minima
            .iter()
            .find(|(d, _)| (d - target).abs() <= 1e-9 * target.max(1.0))
            .map(|&(_, m)| m)
    }
}

/// Computes per-element det DU (rows of DU are the component gradients),
/// interior minima at relative depths {0, 0.05, 0.1} of the diameter, the
/// count of non-positive elements, and the min eigenvalue of DU^T DU.
pub fn jacobian_field(map: &SigmaHarmonicMap) -> Result<JacobianReport, JacobianError> {
    if !Arc::ptr_eq(&map.u1.mesh, &map.u2.mesh)
        && map.u1.mesh.nodes.len() != map.u2.mesh.nodes.len()
    {
        return Err(JacobianError::MeshMismatch);
    }
    let mesh = map.mesh();
    let n_tri = mesh.triangles.len();
    let mut dets = Vec::with_capacity(n_tri);
    let mut centroids = Vec::with_capacity(n_tri);
    let mut eigen_mins = Vec::with_capacity(n_tri);
    let mut sign_changes = 0usize;
    for t in 0..n_tri {
        let du = map.du(t);
        let det = du.determinant();
        if det <= 0.0 {
            sign_changes += 1;
        }
        let gram = du.transpose() * du;
        let eig = gram.symmetric_eigenvalues();
        eigen_mins.push(eig[0].min(eig[1]));
        dets.push(det);
        centroids.push(mesh.centroid(t));
    }
    let diameter = mesh.domain_diameter();
    let boundary_dist: Vec<f64> = centroids
        .iter()
        .map(|&c| mesh.distance_to_boundary(c))
        .collect();
    let mut interior_minima = Vec::new();
    for rel in [0.0, 0.05, 0.1] {
        let delta = rel * diameter;
        let min = dets
            .iter()
            .zip(&boundary_dist)
            .filter(|(_, &d)| d >= delta)
            .map(|(&v, _)| v)
            .fold(f64::INFINITY, f64::min);
        interior_minima.push((delta, min));
    }
    let global_min = dets.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok(JacobianReport {
        dets,
        centroids,
        eigen_mins,
        interior_minima,
        global_min,
        sign_changes,
        powerlaw_fit: None,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct DirectionalBoundReport {
    /// min over all directions and elements of |DU xi|
    pub min_directional_gradient: f64,
    pub per_direction: Vec<f64>,
    /// max relative error of (det DU)^2 = det(DU^T DU) over elements
    pub det_identity_error: f64,
}

/// Min of |(DU) xi| = |grad u_xi| over a direction grid; also checks the
/// eigenvalue identity (det DU)^2 = lambda1 lambda2 per element.
pub fn directional_gradient_bound(
    map: &SigmaHarmonicMap,
    n_directions: usize,
) -> Result<DirectionalBoundReport, JacobianError> {
    if n_directions < 16 {
        return Err(JacobianError::TooFewDirections {
            min: 16,
            got: n_directions,
        });
    }
    let mesh = map.mesh();
    let mut per_direction = Vec::with_capacity(n_directions);
    for k in 0..n_directions {
        let a = std::f64::consts::TAU * k as f64 / n_directions as f64;
        let xi = Vec2::new(a.cos(), a.sin());
        let mut min = f64::INFINITY;
        for t in 0..mesh.triangles.len() {
            min = min.min((map.du(t) * xi).norm());
        }
        per_direction.push(min);
    }
    let mut det_identity_error: f64 = 0.0;
    for t in 0..mesh.triangles.len() {
        let du = map.du(t);
        let det = du.determinant();
        let gram_det = (du.transpose() * du).determinant();
        let scale = (det * det).abs().max(1e-300);
        det_identity_error = det_identity_error.max((det * det - gram_det).abs() / scale);
    }
    Ok(DirectionalBoundReport {
        min_directional_gradient: per_direction.iter().cloned().fold(f64::INFINITY, f64::min),
        per_direction,
        det_identity_error,
    })
}

/// Per-element power densities H_ij = sigma grad u_i . grad u_j.
pub fn power_density(map: &SigmaHarmonicMap, field: &CoefficientField) -> Vec<Mat2> {
    let mesh = map.mesh();
    (0..mesh.triangles.len())
        .map(|t| {
            let sigma = field.eval2(mesh.centroid(t));
            let g = [map.u1.element_gradients[t], map.u2.element_gradients[t]];
            Mat2::new(
                (sigma * g[0]).dot(&g[0]),
                (sigma * g[0]).dot(&g[1]),
                (sigma * g[1]).dot(&g[0]),
                (sigma * g[1]).dot(&g[1]),
            )
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct DilatationReport {
    /// Trace(DU^T DU) / (2 det DU) per element; None where det <= 0.
    #[serde(skip)]
    pub quotients: Vec<Option<f64>>,
    pub max_quotient: f64,
    pub flagged_nonpositive: usize,
}

/// Dilatation quotient per element; >= 1 by the arithmetic-geometric mean
/// inequality on the singular values, = 1 exactly for conformal elements.
pub fn dilatation_quotient(map: &SigmaHarmonicMap) -> DilatationReport {
    let mesh = map.mesh();
    let mut quotients = Vec::with_capacity(mesh.triangles.len());
    let mut flagged = 0usize;
    let mut max_q: f64 = 0.0;
    for t in 0..mesh.triangles.len() {
        let du = map.du(t);
        let det = du.determinant();
        if det <= 0.0 {
            flagged += 1;
            quotients.push(None);
            continue;
        }
        let q = (du.transpose() * du).trace() / (2.0 * det);
        max_q = max_q.max(q);
        quotients.push(Some(q));
    }
    DilatationReport {
        quotients,
        max_quotient: max_q,
        flagged_nonpositive: flagged,
    }
}

/// Minima of |grad u| near the extremal arcs, in the boundary layer, and
/// globally. Empirical surrogates for the non-constructive constants of the
/// gradient lower-bound theory.
#[derive(Debug, Clone, Serialize)]
pub struct GradientBoundReport {
    pub min_near_extremal_arcs: f64,
    pub min_in_boundary_layer: f64,
    pub global_min: f64,
    pub delta: f64,
    pub r: f64,
    pub elements_near_arcs: usize,
    pub elements_in_layer: usize,
}

/// Measures the three regional minima of |grad u_h|: within `delta` of the
/// extremal arcs, within `r` of the whole boundary, and globally.
pub fn verify_gradient_bounds(
    sol: &DiscreteSolution,
    curve: &BoundaryCurve,
    arcs: &ExtremalArcs,
    delta: f64,
    r: f64,
) -> GradientBoundReport {
    let mesh = &sol.mesh;
    let arc_points = |interval: (f64, f64)| -> Vec<Vec2> {
        let (a, mut b) = interval;
        if b < a {
            b += curve.total_length;
        }
        let steps = ((b - a) / (0.25 * delta).max(1e-6)).ceil() as usize;
        (0..=steps.max(1))
            .map(|k| curve.point_at(a + (b - a) * k as f64 / steps.max(1) as f64))
            .collect()
    };
    let mut targets = arc_points(arcs.gamma_min);
    targets.extend(arc_points(arcs.gamma_max));
    let mut min_arcs = f64::INFINITY;
    let mut min_layer = f64::INFINITY;
    let mut min_global = f64::INFINITY;
    let mut near_arcs = 0usize;
    let mut in_layer = 0usize;
    for t in 0..mesh.triangles.len() {
        let g = sol.element_gradients[t].norm();
        let c = mesh.centroid(t);
        min_global = min_global.min(g);
        let arc_dist = targets
            .iter()
            .map(|&p| (c - p).norm())
            .fold(f64::INFINITY, f64::min);
        if arc_dist <= delta {
            near_arcs += 1;
            min_arcs = min_arcs.min(g);
        }
        if mesh.distance_to_boundary(c) <= r {
            in_layer += 1;
            min_layer = min_layer.min(g);
        }
    }
    GradientBoundReport {
        min_near_extremal_arcs: min_arcs,
        min_in_boundary_layer: min_layer,
        global_min: min_global,
        delta,
        r,
        elements_near_arcs: near_arcs,
        elements_in_layer: in_layer,
    }
}

/// Least-squares slope of log(median det per radial bin) against log r over
/// `[r_lo, r_hi]` from `center` (log-spaced bins).
pub fn fit_degeneration_rate(
    report: &JacobianReport,
    center: Vec2,
    r_lo: f64,
    r_hi: f64,
    n_bins: usize,
) -> Result<PowerLawFit, JacobianError> {
    let edges: Vec<f64> = (0..=n_bins)
        .map(|k| r_lo * (r_hi / r_lo).powf(k as f64 / n_bins as f64))
        .collect();
    let mut bins: Vec<Vec<f64>> = vec![Vec::new(); n_bins];
    for (det, c) in report.dets.iter().zip(&report.centroids) {
        let r = (c - center).norm();
        if r < r_lo || r >= r_hi {
            continue;
        }
        let k = (((r / r_lo).ln() / (r_hi / r_lo).ln() * n_bins as f64).floor() as usize)
            .min(n_bins - 1);
        bins[k].push(*det);
    }
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (k, bin) in bins.iter_mut().enumerate() {
        if bin.len() < 10 {
            continue;
        }
        bin.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let median = bin[bin.len() / 2];
        if median <= 0.0 {
            continue;
        }
        let r_mid = (edges[k] * edges[k + 1]).sqrt();
        xs.push(r_mid.ln());
        ys.push(median.ln());
    }
    if xs.len() < 5 {
        return Err(JacobianError::InsufficientBins {
            min: 5,
            min_elems: 10,
            got: xs.len(),
        });
    }
    let n = xs.len() as f64;
    let mean_x = xs.iter().sum::<f64>() / n;
    let mean_y = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mean_x) * (x - mean_x)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mean_x) * (y - mean_y)).sum();
    let syy: f64 = ys.iter().map(|y| (y - mean_y) * (y - mean_y)).sum();
    let slope = sxy / sxx;
    let r_squared = if syy > 0.0 { (sxy * sxy) / (sxx * syy) } else { 1.0 };
    Ok(PowerLawFit {
        exponent: slope,
        r_squared,
        bins_used: xs.len(),
    })
}
