//! Closed-form and ODE-accurate reference mappings.
//!
//! Three families: the radially layered discontinuous conductivity with
//! mapping (|x|^{alpha-1} x1, |x|^{alpha-1} x2), the harmonic cubic
//! polynomial map whose Jacobian vanishes on a plane, and the layered 3D
//! mapping whose Jacobian determinant vanishes on a half-space without
//! vanishing globally. All Jacobians are analytic; residual checks run by
//! finite differences so the module verifies itself without a symbolic
//! engine.

use crate::coefficients::{family_jin_kazdan, CoefficientField, JinKazdanProfileKind};
use crate::{Mat2, Mat3, Vec2, Vec3};
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("gradient undefined at the origin for alpha = {alpha} < 1")]
    OriginDerivative { alpha: f64 },
    #[error("amplitude a0 = {a0} outside (0, 1)")]
    A0OutOfRange { a0: f64 },
    #[error("ODE integration produced a non-finite value at step {step}")]
    OdeStep { step: usize },
    #[error("ODE grid needs at least {min} points, got {got}")]
    GridTooCoarse { min: usize, got: usize },
    #[error("query x3 = {x3} outside the integrated range [0, {x3_max}]")]
    OutOfRange { x3: f64, x3_max: f64 },
}

/// Mapping value, Jacobian and determinant at a planar point.
#[derive(Debug, Clone, Copy)]
pub struct OracleEval2 {
    pub u: Vec2,
    pub du: Mat2,
    pub det: f64,
}

/// Mapping value, Jacobian and determinant at a spatial point.
#[derive(Debug, Clone, Copy)]
pub struct OracleEval3 {
    pub u: Vec3,
    pub du: Mat3,
    pub det: f64,
}

/// The degenerate radial mapping U = |x|^{alpha-1} (x1, x2):
/// DU = r^{alpha-1} (I + (alpha-1) rhat rhat^T), det DU = alpha r^{2(alpha-1)}.
pub fn meyers_eval(alpha: f64, p: Vec2) -> Result<OracleEval2, OracleError> {
    let r = p.norm();
    if r == 0.0 {
        if alpha < 1.0 {
            return Err(OracleError::OriginDerivative { alpha });
        }
        let du = if alpha == 1.0 {
            Mat2::identity()
        } else {
            Mat2::zeros()
        };
        return Ok(OracleEval2 {
            u: Vec2::new(0.0, 0.0),
            du,
            det: du.determinant(),
        });
    }
    let scale = r.powf(alpha - 1.0);
    let rhat = p / r;
    let du = (Mat2::identity() + (alpha - 1.0) * rhat * rhat.transpose()) * scale;
    Ok(OracleEval2 {
        u: p * scale,
        du,
        det: alpha * r.powf(2.0 * (alpha - 1.0)),
    })
}

/// Matching coefficient matrix for `meyers_eval` (shared with the field
/// family): sigma = alpha^{-1} rhat rhat^T + alpha rperp rperp^T.
fn meyers_sigma(alpha: f64, p: Vec2) -> Mat2 {
    let r2 = p.norm_squared();
    if r2 == 0.0 {
        return Mat2::new(1.0 / alpha, 0.0, 0.0, alpha);
    }
    Mat2::new(
        (p.x * p.x / alpha + alpha * p.y * p.y) / r2,
        (1.0 / alpha - alpha) * p.x * p.y / r2,
        (1.0 / alpha - alpha) * p.x * p.y / r2,
        (alpha * p.x * p.x + p.y * p.y / alpha) / r2,
    )
}

/// Finite-difference residual of div(sigma grad u_i) at `p` (max over the
/// two components), step 1e-5 * |p|.
pub fn meyers_residual(alpha: f64, p: Vec2) -> f64 {
    let h = 1e-5 * p.norm();
    let flux = |q: Vec2, comp: usize| -> Vec2 {
        let du = meyers_eval(alpha, q).expect("off-origin point");
        let grad = if comp == 0 {
            Vec2::new(du.du[(0, 0)], du.du[(0, 1)])
        } else {
            Vec2::new(du.du[(1, 0)], du.du[(1, 1)])
        };
        meyers_sigma(alpha, q) * grad
    };
    let mut worst: f64 = 0.0;
    for comp in 0..2 {
        let fx_p = flux(p + Vec2::new(h, 0.0), comp).x;
        let fx_m = flux(p - Vec2::new(h, 0.0), comp).x;
        let fy_p = flux(p + Vec2::new(0.0, h), comp).y;
        let fy_m = flux(p - Vec2::new(0.0, h), comp).y;
        let div = (fx_p - fx_m) / (2.0 * h) + (fy_p - fy_m) / (2.0 * h);
        worst = worst.max(div.abs());
    }
    worst
}

/// The harmonic polynomial map
/// U = (x1^3 - 3 x1 x3^2 + x2 x3, x2 - 3 x1 x3, x3),
/// a homeomorphism of R^3 with det DU = 3 x1^2 vanishing on {x1 = 0}.
pub fn wood_eval(p: Vec3) -> OracleEval3 {
    let (x, y, z) = (p.x, p.y, p.z);
    let u = Vec3::new(x * x * x - 3.0 * x * z * z + y * z, y - 3.0 * x * z, z);
    let du = Mat3::new(
        3.0 * x * x - 3.0 * z * z,
        z,
        -6.0 * x * z + y,
        -3.0 * z,
        1.0,
        -3.0 * x,
        0.0,
        0.0,
        1.0,
    );
    OracleEval3 {
        u,
        du,
        det: 3.0 * x * x,
    }
}

/// Finite-difference Laplacian of each component of the cubic map (all three
/// are harmonic polynomials, so the second differences are exact up to
/// roundoff).
pub fn wood_laplacian_residual(p: Vec3) -> f64 {
    let h = 1e-3;
    let mut worst: f64 = 0.0;
    for comp in 0..3 {
        let f = |q: Vec3| wood_eval(q).u[comp];
        let mut lap = -6.0 * f(p);
        for axis in 0..3 {
            let mut e = Vec3::zeros();
            e[axis] = h;
            lap += f(p + e) + f(p - e);
        }
        worst = worst.max((lap / (h * h)).abs());
    }
    worst
}

enum ProfileCase {
    /// 4th-order one-step integration of (b phi')' = 2a from rest at 0, with
    /// cubic Hermite dense output for phi and the flux psi = b phi'.
    Smooth {
        grid: Vec<f64>,
        phi: Vec<f64>,
        psi: Vec<f64>,
        a_fn: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
        x3_max: f64,
    },
    /// phi = a0 (1 - a0^2) x3^2 for x3 > 0.
    Piecewise,
}

/// The scalar profile of the layered 3D mapping: phi == 0 for x3 <= 0 and
/// phi' >= 0 everywhere.
pub struct JinKazdanProfile {
    pub a0: f64,
    case: ProfileCase,
}

impl JinKazdanProfile {
    pub fn is_smooth(&self) -> bool {
        matches!(self.case, ProfileCase::Smooth { .. })
    }

    pub fn phi(&self, x3: f64) -> f64 {
        if x3 <= 0.0 {
            return 0.0;
        }
        match &self.case {
            ProfileCase::Piecewise => self.a0 * (1.0 - self.a0 * self.a0) * x3 * x3,
            ProfileCase::Smooth {
                grid,
                phi,
                psi,
                a_fn,
                ..
            } => {
                // cubic Hermite using phi' = psi (1 - a^2) at the knots
                let (i, s, dx) = locate(grid, x3);
                let d0 = psi[i] * (1.0 - a_fn(grid[i]).powi(2));
                let d1 = psi[i + 1] * (1.0 - a_fn(grid[i + 1]).powi(2));
                hermite(phi[i], d0, phi[i + 1], d1, s, dx)
            }
        }
    }

    pub fn phi_prime(&self, x3: f64) -> f64 {
        if x3 <= 0.0 {
            return 0.0;
        }
        match &self.case {
            ProfileCase::Piecewise => 2.0 * self.a0 * (1.0 - self.a0 * self.a0) * x3,
            ProfileCase::Smooth {
                grid,
                psi,
                a_fn,
                ..
            } => {
                // phi' = psi (1 - a^2); psi interpolated with psi' = 2a
                let (i, s, dx) = locate(grid, x3);
                let psi_here = hermite(
                    psi[i],
                    2.0 * a_fn(grid[i]),
                    psi[i + 1],
                    2.0 * a_fn(grid[i + 1]),
                    s,
                    dx,
                );
                psi_here * (1.0 - a_fn(x3).powi(2))
            }
        }
    }
}

fn locate(grid: &[f64], x: f64) -> (usize, f64, f64) {
    let n = grid.len();
    let dx = grid[1] - grid[0];
    let i = (((x - grid[0]) / dx).floor() as usize).min(n - 2);
    ((i), ((x - grid[i]) / dx).clamp(0.0, 1.0), dx)
}

fn hermite(f0: f64, d0: f64, f1: f64, d1: f64, s: f64, dx: f64) -> f64 {
    let h00 = (1.0 + 2.0 * s) * (1.0 - s) * (1.0 - s);
    let h10 = s * (1.0 - s) * (1.0 - s);
    let h01 = s * s * (3.0 - 2.0 * s);
    let h11 = s * s * (s - 1.0);
    h00 * f0 + h10 * dx * d0 + h01 * f1 + h11 * dx * d1
}

/// Integrates (b phi')' = 2a with phi(0) = 0, (b phi')(0) = 0 by the
/// classical 4th-order one-step method on [0, x3_max]. Asserts phi' >= 0.
pub fn jin_kazdan_smooth(
    a_fn: impl Fn(f64) -> f64 + Send + Sync + 'static,
    a0: f64,
    x3_max: f64,
    n_grid: usize,
) -> Result<JinKazdanProfile, OracleError> {
    if !(0.0 < a0 && a0 < 1.0) {
        return Err(OracleError::A0OutOfRange { a0 });
    }
    if n_grid < 1000 {
        return Err(OracleError::GridTooCoarse {
            min: 1000,
            got: n_grid,
        });
    }
    let a_fn: Arc<dyn Fn(f64) -> f64 + Send + Sync> = Arc::new(a_fn);
    let dx = x3_max / n_grid as f64;
    let mut grid = Vec::with_capacity(n_grid + 1);
    let mut phi = Vec::with_capacity(n_grid + 1);
    let mut psi = Vec::with_capacity(n_grid + 1);
    grid.push(0.0);
    phi.push(0.0);
    psi.push(0.0);
    // state (phi, psi) with phi' = psi (1 - a^2), psi' = 2a
    let rhs = |x: f64, state: (f64, f64)| -> (f64, f64) {
        let a = a_fn(x);
        (state.1 * (1.0 - a * a), 2.0 * a)
    };
    let mut state = (0.0f64, 0.0f64);
    for k in 0..n_grid {
        let x = k as f64 * dx;
        let k1 = rhs(x, state);
        let k2 = rhs(x + 0.5 * dx, (state.0 + 0.5 * dx * k1.0, state.1 + 0.5 * dx * k1.1));
        let k3 = rhs(x + 0.5 * dx, (state.0 + 0.5 * dx * k2.0, state.1 + 0.5 * dx * k2.1));
        let k4 = rhs(x + dx, (state.0 + dx * k3.0, state.1 + dx * k3.1));
        state = (
            state.0 + dx / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0),
            state.1 + dx / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1),
        );
        if !(state.0.is_finite() && state.1.is_finite()) {
            return Err(OracleError::OdeStep { step: k });
        }
        grid.push((k + 1) as f64 * dx);
        phi.push(state.0);
        psi.push(state.1);
    }
    // a >= 0 makes the flux psi nondecreasing, hence phi' >= 0
    debug_assert!(psi.iter().all(|&v| v >= 0.0));
    Ok(JinKazdanProfile {
        a0,
        case: ProfileCase::Smooth {
            grid,
            phi,
            psi,
            a_fn,
            x3_max,
        },
    })
}

/// Piecewise-constant two-phase variant: phi = a0 (1 - a0^2) x3^2 for x3 > 0.
pub fn jin_kazdan_piecewise(a0: f64) -> Result<JinKazdanProfile, OracleError> {
    if !(0.0 < a0 && a0 < 1.0) {
        return Err(OracleError::A0OutOfRange { a0 });
    }
    Ok(JinKazdanProfile {
        a0,
        case: ProfileCase::Piecewise,
    })
}

/// The layered mapping U = (x1, x2, -x1 x2 + phi(x3)):
/// det DU = phi'(x3), zero on the half-space x3 <= 0.
pub fn jin_kazdan_eval(profile: &JinKazdanProfile, p: Vec3) -> Result<OracleEval3, OracleError> {
    if let ProfileCase::Smooth { x3_max, .. } = &profile.case {
        if p.z > *x3_max {
            return Err(OracleError::OutOfRange {
                x3: p.z,
                x3_max: *x3_max,
            });
        }
    }
    let phi = profile.phi(p.z);
    let dphi = profile.phi_prime(p.z);
    let u = Vec3::new(p.x, p.y, -p.x * p.y + phi);
    let du = Mat3::new(1.0, 0.0, 0.0, 0.0, 1.0, 0.0, -p.y, -p.x, dphi);
    Ok(OracleEval3 { u, du, det: dphi })
}

/// Matching coefficient field for a profile.
pub fn jin_kazdan_field(profile: &JinKazdanProfile) -> CoefficientField {
    let kind = if profile.is_smooth() {
        JinKazdanProfileKind::Smooth
    } else {
        JinKazdanProfileKind::PiecewiseConstant
    };
    family_jin_kazdan(profile.a0, kind).expect("a0 validated at profile construction")
}

/// Finite-difference residual of div(sigma grad u_i) at `p` for the layered
/// mapping (max over components), step 1e-5. Keep `p.z` away from the
/// interface x3 = 0 by more than the step.
pub fn jin_kazdan_residual(profile: &JinKazdanProfile, p: Vec3) -> Result<f64, OracleError> {
    let field = jin_kazdan_field(profile);
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for comp in 0..3 {
        let flux = |q: Vec3| -> Result<Vec3, OracleError> {
            let e = jin_kazdan_eval(profile, q)?;
            let grad = Vec3::new(e.du[(comp, 0)], e.du[(comp, 1)], e.du[(comp, 2)]);
            Ok(field.eval3(q) * grad)
        };
        let mut div = 0.0;
        for axis in 0..3 {
            let mut e = Vec3::zeros();
            e[axis] = h;
            div += (flux(p + e)?[axis] - flux(p - e)?[axis]) / (2.0 * h);
        }
        worst = worst.max(div.abs());
    }
    Ok(worst)
}

/// One sample of the unique-continuation contrast table.
#[derive(Debug, Clone, Copy)]
pub struct ContrastRow {
    pub point: Vec3,
    pub det: f64,
    pub trace: f64,
}

#[derive(Debug, Clone)]
pub struct UniqueContinuationReport {
    pub rows: Vec<ContrastRow>,
    /// det DU == 0 at every sample with x3 <= 0
    pub det_zero_on_nonpositive: bool,
    /// det DU > 0 at every sample with x3 >= min_positive_x3
    pub det_positive_on_positive: bool,
    pub min_trace: f64,
    pub min_positive_x3: f64,
}

/// Samples det DU and |DU|^2 = Trace(DU^T DU) on a grid straddling the
/// interface: the determinant vanishes identically on one side while the
/// trace stays >= 2 (the top identity block never degenerates), so |DU|^2
/// keeps the unique-continuation property the determinant loses.
///
/// `min_positive_x3` guards the strict-positivity check against the smooth
/// profile's amplitude underflowing to zero for x3 very close to 0.
pub fn unique_continuation_demo(
    profile: &JinKazdanProfile,
    n_per_axis: usize,
    extent: f64,
    min_positive_x3: f64,
) -> Result<UniqueContinuationReport, OracleError> {
    let mut rows = Vec::with_capacity(n_per_axis.pow(3));
    let mut det_zero = true;
    let mut det_pos = true;
    let mut min_trace = f64::INFINITY;
    let coords: Vec<f64> = (0..n_per_axis)
        .map(|i| -extent + 2.0 * extent * i as f64 / (n_per_axis - 1) as f64)
        .collect();
    for &x in &coords {
        for &y in &coords {
            for &z in &coords {
                let p = Vec3::new(x, y, z);
                let e = jin_kazdan_eval(profile, p)?;
                let trace = (e.du.transpose() * e.du).trace();
                if z <= 0.0 && e.det != 0.0 {
                    det_zero = false;
                }
                if z >= min_positive_x3 && e.det <= 0.0 {
                    det_pos = false;
                }
                min_trace = min_trace.min(trace);
                rows.push(ContrastRow {
                    point: p,
                    det: e.det,
                    trace,
                });
            }
        }
    }
    Ok(UniqueContinuationReport {
        rows,
        det_zero_on_nonpositive: det_zero,
        det_positive_on_positive: det_pos,
        min_trace,
        min_positive_x3,
    })
}

/// Finite-difference Jacobian of a 3D map, for cross-checking analytic DUs.
pub fn fd_jacobian3(f: impl Fn(Vec3) -> Vec3, p: Vec3, h: f64) -> Mat3 {
    let mut m = Mat3::zeros();
    for axis in 0..3 {
        let mut e = Vec3::zeros();
        e[axis] = h;
        let d = (f(p + e) - f(p - e)) / (2.0 * h);
        for row in 0..3 {
            m[(row, axis)] = d[row];
        }
    }
    m
}
