//! Certification of boundary data: quantitative unimodality for scalar data,
//! quantitative convexity for vector data, extremal arcs, and the
//! curvature-based predicted character.
//!
//! Characters use the linear modulus family omega(t) = c * t; the fitted
//! slope is the largest c for which the two derivative envelope inequalities
//! hold at every sample.

use crate::geometry::BoundaryCurve;
use crate::Vec2;
use serde::Serialize;
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CharacterError {
    #[error("datum needs at least {min} samples, got {got}")]
    TooFewSamples { min: usize, got: usize },
    #[error("datum needs at least {min} directions, got {got}")]
    TooFewDirections { min: usize, got: usize },
    #[error("datum is not periodic: wrap jump {jump:.3e}")]
    NotPeriodic { jump: f64 },
    #[error("not unimodal: {reason}")]
    NotUnimodal { reason: String },
    #[error("plateau ordering violated (t-ordering): {reason}")]
    PlateauOverlap { reason: String },
    #[error("range M - m = {range:.3e} below tolerance {tol:.3e}")]
    ZeroRange { range: f64, tol: f64 },
    #[error("direction {index} (angle {angle:.4}) failed: {inner}")]
    DirectionFailed {
        index: usize,
        angle: f64,
        inner: Box<CharacterError>,
    },
    #[error("curve is not strictly convex: min curvature {kappa_min:.3e}")]
    NotStrictlyConvex { kappa_min: f64 },
}

/// Scalar T-periodic boundary datum sampled on a uniform arclength grid,
/// with derivative samples and optional Hoelder data for d/ds phi.
#[derive(Clone)]
pub struct ScalarBoundaryDatum {
    pub ts: Vec<f64>,
    pub values: Vec<f64>,
    pub derivs: Vec<f64>,
    pub period: f64,
    pub holder: Option<(f64, f64)>,
    analytic: Option<Arc<dyn Fn(f64) -> f64 + Send + Sync>>,
}

impl std::fmt::Debug for ScalarBoundaryDatum {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ScalarBoundaryDatum")
            .field("samples", &self.ts.len())
            .field("period", &self.period)
            .field("analytic", &self.analytic.is_some())
            .finish()
    }
}

impl ScalarBoundaryDatum {
    /// Builds the datum from closures for phi and phi' evaluated on a uniform
    /// grid of `n` samples over [0, period).
    pub fn from_fn(
        period: f64,
        n: usize,
        phi: impl Fn(f64) -> f64 + Send + Sync + 'static,
        dphi: impl Fn(f64) -> f64,
    ) -> Self {
        let ts: Vec<f64> = (0..n).map(|i| period * i as f64 / n as f64).collect();
        let values = ts.iter().map(|&t| phi(t)).collect();
        let derivs = ts.iter().map(|&t| dphi(t)).collect();
        ScalarBoundaryDatum {
            ts,
            values,
            derivs,
            period,
            holder: None,
            analytic: Some(Arc::new(phi)),
        }
    }

    /// Builds the datum from raw samples; derivatives come from 4th-order
    /// centered differences on the periodic grid.
    pub fn from_samples(period: f64, values: Vec<f64>) -> Result<Self, CharacterError> {
        let n = values.len();
        if n < 8 {
            return Err(CharacterError::TooFewSamples { min: 8, got: n });
        }
        let dt = period / n as f64;
        let derivs = (0..n)
            .map(|i| {
                (values[(i + n - 2) % n] - 8.0 * values[(i + n - 1) % n]
                    + 8.0 * values[(i + 1) % n]
                    - values[(i + 2) % n])
                    / (12.0 * dt)
            })
            .collect();
        Ok(ScalarBoundaryDatum {
            ts: (0..n).map(|i| dt * i as f64).collect(),
            values,
            derivs,
            period,
            holder: None,
            analytic: None,
        })
    }

    pub fn with_holder(mut self, alpha: f64, e: f64) -> Self {
        self.holder = Some((alpha, e));
        self
    }

    /// Value at parameter t: the analytic closure when available, otherwise
    /// periodic linear interpolation of the samples.
    pub fn value_at(&self, t: f64) -> f64 {
        if let Some(f) = &self.analytic {
            return f(t);
        }
        let n = self.ts.len();
        let tt = t.rem_euclid(self.period);
        let dt = self.period / n as f64;
        let i = ((tt / dt).floor() as usize).min(n - 1);
        let w = ((tt - self.ts[i]) / dt).clamp(0.0, 1.0);
        let j = (i + 1) % n;
        self.values[i] * (1.0 - w) + self.values[j] * w
    }

    pub fn range(&self) -> (f64, f64) {
        let lo = self.values.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = self.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        (lo, hi)
    }
}

/// Vector T-periodic boundary datum (a parametrized closed curve in R^2).
#[derive(Clone)]
pub struct VectorBoundaryDatum {
    pub ts: Vec<f64>,
    pub points: Vec<Vec2>,
    pub dpoints: Vec<Vec2>,
    pub period: f64,
    analytic: Option<(
        Arc<dyn Fn(f64) -> Vec2 + Send + Sync>,
        Arc<dyn Fn(f64) -> Vec2 + Send + Sync>,
    )>,
}

impl std::fmt::Debug for VectorBoundaryDatum {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("VectorBoundaryDatum")
            .field("samples", &self.ts.len())
            .field("period", &self.period)
            .finish()
    }
}

impl VectorBoundaryDatum {
    pub fn from_fn(
        period: f64,
        n: usize,
        phi: impl Fn(f64) -> Vec2 + Send + Sync + 'static,
        dphi: impl Fn(f64) -> Vec2 + Send + Sync + 'static,
    ) -> Self {
        let ts: Vec<f64> = (0..n).map(|i| period * i as f64 / n as f64).collect();
        let points = ts.iter().map(|&t| phi(t)).collect();
        let dpoints = ts.iter().map(|&t| dphi(t)).collect();
        VectorBoundaryDatum {
            ts,
            points,
            dpoints,
            period,
            analytic: Some((Arc::new(phi), Arc::new(dphi))),
        }
    }

    /// The identity boundary map of a curve: Phi(t) = position at arclength t.
    pub fn identity_on(curve: &BoundaryCurve) -> Self {
        let c1 = curve.clone();
        let c2 = curve.clone();
        let ts: Vec<f64> = curve.samples.iter().map(|s| s.t).collect();
        let points = curve.samples.iter().map(|s| s.point).collect();
        let dpoints = curve.samples.iter().map(|s| s.tangent).collect();
        VectorBoundaryDatum {
            ts,
            points,
            dpoints,
            period: curve.total_length,
            analytic: Some((
                Arc::new(move |t| c1.point_at(t)),
                Arc::new(move |t| c2.tangent_at(t)),
            )),
        }
    }

    /// Scalar projection phi_xi = Phi . xi.
    pub fn project(&self, xi: Vec2) -> ScalarBoundaryDatum {
        let values = self.points.iter().map(|p| p.dot(&xi)).collect();
        let derivs = self.dpoints.iter().map(|p| p.dot(&xi)).collect();
        let analytic = self.analytic.as_ref().map(|(f, _)| {
            let f = f.clone();
            Arc::new(move |t: f64| f(t).dot(&xi)) as Arc<dyn Fn(f64) -> f64 + Send + Sync>
        });
        ScalarBoundaryDatum {
            ts: self.ts.clone(),
            values,
            derivs,
            period: self.period,
            holder: None,
            analytic,
        }
    }

    /// Component as a scalar datum (0 = x, 1 = y).
    pub fn component(&self, axis: usize) -> ScalarBoundaryDatum {
        self.project(if axis == 0 {
            Vec2::new(1.0, 0.0)
        } else {
            Vec2::new(0.0, 1.0)
        })
    }

    pub fn value_at(&self, t: f64) -> Vec2 {
        if let Some((f, _)) = &self.analytic {
            return f(t);
        }
        let n = self.ts.len();
        let tt = t.rem_euclid(self.period);
        let dt = self.period / n as f64;
        let i = ((tt / dt).floor() as usize).min(n - 1);
        let w = ((tt - self.ts[i]) / dt).clamp(0.0, 1.0);
        let j = (i + 1) % n;
        self.points[i] * (1.0 - w) + self.points[j] * w
    }
}

/// Character of unimodality {T, m, M, t1..t4, omega-slope}.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct UnimodalCharacter {
    pub t_period: f64,
    pub m: f64,
    pub big_m: f64,
    pub t1: f64,
    pub t2: f64,
    pub t3: f64,
    pub t4: f64,
    pub omega_slope: f64,
}

/// Character of convexity {T, D, omega-slope} plus the grid size used.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ConvexityCharacter {
    pub t_period: f64,
    pub d_range: f64,
    pub omega_slope: f64,
    pub directions_tested: usize,
}

/// Predicted character from curvature bounds {|Gamma|, 1/K, 2 kappa/pi}.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct CurvatureCharacter {
    pub t_period: f64,
    pub d_range: f64,
    pub omega_slope: f64,
    pub kappa_min: f64,
    pub kappa_max: f64,
}

/// Arcs of the boundary where a unimodal datum attains its extrema
/// (parameter intervals, possibly degenerate to points).
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ExtremalArcs {
    pub gamma_min: (f64, f64),
    pub gamma_max: (f64, f64),
}

/// Finds the single cyclic run of `true` flags; `None` if empty or split.
fn single_cyclic_run(flags: &[bool]) -> Option<(usize, usize)> {
    let n = flags.len();
    let count = flags.iter().filter(|&&b| b).count();
    if count == 0 {
        return None;
    }
    if count == n {
        return Some((0, n - 1));
    }
    let mut starts = Vec::new();
    for i in 0..n {
        if flags[i] && !flags[(i + n - 1) % n] {
            starts.push(i);
        }
    }
    if starts.len() != 1 {
        return None;
    }
    let start = starts[0];
    Some((start, (start + count - 1) % n))
}

/// Certifies quantitative unimodality with plateau tolerance `tol` (absolute,
/// on values): one min plateau, one max plateau, a single rising and a single
/// falling segment, and the fitted largest linear modulus slope.
pub fn certify_unimodal(
    datum: &ScalarBoundaryDatum,
    tol: f64,
) -> Result<UnimodalCharacter, CharacterError> {
    let n = datum.ts.len();
    if n < 64 {
        return Err(CharacterError::TooFewSamples { min: 64, got: n });
    }
    let jump = (datum.value_at(0.0) - datum.value_at(datum.period)).abs();
    if jump > tol.max(1e-9) {
        return Err(CharacterError::NotPeriodic { jump });
    }
    let (m, big_m) = datum.range();
    let range = big_m - m;
    if range <= tol {
        return Err(CharacterError::ZeroRange { range, tol });
    }
    let min_flags: Vec<bool> = datum.values.iter().map(|&v| v <= m + tol).collect();
    let max_flags: Vec<bool> = datum.values.iter().map(|&v| v >= big_m - tol).collect();
    let (min_s, min_e) =
        single_cyclic_run(&min_flags).ok_or_else(|| CharacterError::NotUnimodal {
            reason: "min plateau is empty or disconnected (multiple local minima)".into(),
        })?;
    let (max_s, max_e) =
        single_cyclic_run(&max_flags).ok_or_else(|| CharacterError::NotUnimodal {
            reason: "max plateau is empty or disconnected (multiple local maxima)".into(),
        })?;
    if min_flags.iter().zip(&max_flags).any(|(&a, &b)| a && b) {
        return Err(CharacterError::PlateauOverlap {
            reason: "a sample lies on both plateaus".into(),
        });
    }
    // normalize plateau parameters into t1 <= t2 < t3 <= t4 < t1 + T
    let period = datum.period;
    let t1 = datum.ts[min_s];
    let mut t2 = datum.ts[min_e];
    if t2 < t1 {
        t2 += period;
    }
    let mut t3 = datum.ts[max_s];
    while t3 <= t2 {
        t3 += period;
    }
    let mut t4 = datum.ts[max_e];
    while t4 < t3 {
        t4 += period;
    }
    if !(t1 <= t2 && t2 < t3 && t3 <= t4 && t4 < t1 + period) {
        return Err(CharacterError::PlateauOverlap {
            reason: format!("t1={t1:.4} t2={t2:.4} t3={t3:.4} t4={t4:.4} T={period:.4}"),
        });
    }
    // single rising and single falling segment: the derivative may not change
    // sign strictly inside either open arc (plateau samples are excluded, so
    // finite-difference overshoot at the plateau corners does not trip this)
    let dscale = datum.derivs.iter().fold(0.0f64, |acc, d| acc.max(d.abs()));
    let slack = 1e-7 * dscale.max(1e-300);
    for i in 0..n {
        if min_flags[i] || max_flags[i] {
            continue;
        }
        let mut t = datum.ts[i];
        while t <= t2 {
            t += period;
        }
        if t < t3 && datum.derivs[i] < -slack {
            return Err(CharacterError::NotUnimodal {
                reason: format!("descent inside the rising arc at t = {:.6}", datum.ts[i]),
            });
        }
        let mut tf = datum.ts[i];
        while tf <= t4 {
            tf += period;
        }
        if tf < t1 + period && datum.derivs[i] > slack {
            return Err(CharacterError::NotUnimodal {
                reason: format!("ascent inside the falling arc at t = {:.6}", datum.ts[i]),
            });
        }
    }
    // fit the largest omega slope over the two monotone arcs
    let mut c_fit = f64::INFINITY;
    for i in 0..n {
        if min_flags[i] || max_flags[i] {
            continue;
        }
        let mut t = datum.ts[i];
        while t <= t2 {
            t += period;
        }
        if t < t3 {
            // rising arc (t2, t3)
            let env = (t - t2).min(t3 - t);
            if env > 1e-12 * period {
                c_fit = c_fit.min(datum.derivs[i] / env);
            }
        }
        let mut tf = datum.ts[i];
        while tf <= t4 {
            tf += period;
        }
        if tf < t1 + period {
            // falling arc (t4, t1 + T)
            let env = (tf - t4).min(t1 + period - tf);
            if env > 1e-12 * period {
                c_fit = c_fit.min(-datum.derivs[i] / env);
            }
        }
    }
    if !c_fit.is_finite() || c_fit <= 0.0 {
        return Err(CharacterError::NotUnimodal {
            reason: format!("no positive linear modulus fits the derivative (c = {c_fit:.3e})"),
        });
    }
    Ok(UnimodalCharacter {
        t_period: period,
        m,
        big_m,
        t1,
        t2,
        t3,
        t4,
        omega_slope: c_fit,
    })
}

/// Certifies quantitative convexity by certifying unimodality of every
/// directional projection over a uniform angle grid. D and the slope are
/// minima over the grid (a conservative estimate of the true infimum).
pub fn certify_convex(
    phi: &VectorBoundaryDatum,
    n_directions: usize,
    tol: f64,
) -> Result<ConvexityCharacter, CharacterError> {
    if n_directions < 32 {
        return Err(CharacterError::TooFewDirections {
            min: 32,
            got: n_directions,
        });
    }
    let mut d_range = f64::INFINITY;
    let mut omega_slope = f64::INFINITY;
    for k in 0..n_directions {
        let angle = std::f64::consts::TAU * k as f64 / n_directions as f64;
        let xi = Vec2::new(angle.cos(), angle.sin());
        let proj = phi.project(xi);
        let character =
            certify_unimodal(&proj, tol).map_err(|inner| CharacterError::DirectionFailed {
                index: k,
                angle,
                inner: Box::new(inner),
            })?;
        d_range = d_range.min(character.big_m - character.m);
        omega_slope = omega_slope.min(character.omega_slope);
    }
    Ok(ConvexityCharacter {
        t_period: phi.period,
        d_range,
        omega_slope,
        directions_tested: n_directions,
    })
}

/// Predicted character from curvature bounds of an arclength-parametrized
/// C^2 curve: for 0 < kappa <= curvature <= K the curve is quantitatively
/// convex with character {|Gamma|, 1/K, (2 kappa / pi) t}.
pub fn curvature_character(
    curve: &BoundaryCurve,
    tol: f64,
) -> Result<CurvatureCharacter, CharacterError> {
    let ks = curve.curvature_samples();
    let kappa_min = ks.iter().cloned().fold(f64::INFINITY, f64::min);
    let kappa_max = ks.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if kappa_min <= tol {
        return Err(CharacterError::NotStrictlyConvex { kappa_min });
    }
    Ok(CurvatureCharacter {
        t_period: curve.total_length,
        d_range: 1.0 / kappa_max,
        omega_slope: 2.0 * kappa_min / std::f64::consts::PI,
        kappa_min,
        kappa_max,
    })
}

/// The plateau intervals of a certified character.
pub fn extremal_arcs(character: &UnimodalCharacter) -> ExtremalArcs {
    let period = character.t_period;
    ExtremalArcs {
        gamma_min: (
            character.t1.rem_euclid(period),
            character.t2.rem_euclid(period),
        ),
        gamma_max: (
            character.t3.rem_euclid(period),
            character.t4.rem_euclid(period),
        ),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{make_disk_domain, make_star_domain};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    const TAU: f64 = std::f64::consts::TAU;

    fn sine_datum(n: usize) -> ScalarBoundaryDatum {
        ScalarBoundaryDatum::from_fn(TAU, n, |t| t.sin(), |t| t.cos())
    }

    #[test]
    fn sine_is_unimodal_with_unit_range() {
        let c = certify_unimodal(&sine_datum(2048), 1e-6 * 2.0).unwrap();
        assert_relative_eq!(c.m, -1.0, epsilon = 1e-5);
        assert_relative_eq!(c.big_m, 1.0, epsilon = 1e-5);
        // plateaus essentially degenerate, centered at 3pi/2 and pi/2
        assert!(c.t2 - c.t1 < 0.02);
        assert!(c.t4 - c.t3 < 0.02);
        let min_center = (0.5 * (c.t1 + c.t2)).rem_euclid(TAU);
        let max_center = (0.5 * (c.t3 + c.t4)).rem_euclid(TAU);
        assert_relative_eq!(min_center, 1.5 * std::f64::consts::PI, epsilon = 0.02);
        assert_relative_eq!(max_center, 0.5 * std::f64::consts::PI, epsilon = 0.02);
    }

    #[test]
    fn sine_slope_close_to_two_over_pi() {
        // dense-sampling oracle: the min over the rising arc of
        // sin'(t) / envelope is attained at envelope distance pi/2 and
        // equals 2/pi
        let c = certify_unimodal(&sine_datum(4096), 1e-6 * 2.0).unwrap();
        assert!(c.omega_slope >= 0.99 * 2.0 / std::f64::consts::PI);
        assert!(c.omega_slope <= 1.01 * 2.0 / std::f64::consts::PI);
    }

    #[test]
    fn sine_2t_not_unimodal() {
        let d = ScalarBoundaryDatum::from_fn(TAU, 512, |t| (2.0 * t).sin(), |t| {
            2.0 * (2.0 * t).cos()
        });
        assert!(matches!(
            certify_unimodal(&d, 1e-6 * 2.0),
            Err(CharacterError::NotUnimodal { .. })
        ));
    }

    #[test]
    fn constant_datum_zero_range() {
        let d = ScalarBoundaryDatum::from_fn(TAU, 128, |_| 3.0, |_| 0.0);
        assert!(matches!(
            certify_unimodal(&d, 1e-6),
            Err(CharacterError::ZeroRange { .. })
        ));
    }

    #[test]
    fn trapezoid_plateau_lengths_recovered() {
        // flat bottom near t = 0, flat top of length 1 opposite
        let profile = |t: f64| {
            let t = t.rem_euclid(TAU);
            let rise_len = 0.5 * (TAU - 2.0);
            if t < 0.5 {
                0.0
            } else if t < 0.5 + rise_len {
                (t - 0.5) / rise_len
            } else if t < 1.5 + rise_len {
                1.0
            } else if t < 1.5 + 2.0 * rise_len {
                1.0 - (t - 1.5 - rise_len) / rise_len
            } else {
                0.0
            }
        };
        let d = ScalarBoundaryDatum::from_samples(
            TAU,
            (0..4096)
                .map(|i| profile(TAU * i as f64 / 4096.0))
                .collect(),
        )
        .unwrap();
        let c = certify_unimodal(&d, 1e-3).unwrap();
        let arcs = extremal_arcs(&c);
        let max_len = c.t4 - c.t3;
        assert!((max_len - 1.0).abs() < 0.05, "max plateau length {max_len}");
        assert!(arcs.gamma_min.1 < arcs.gamma_max.0 || arcs.gamma_max.1 < arcs.gamma_min.0);
    }

    #[test]
    fn circle_projections_have_range_two() {
        let domain = make_disk_domain(8192).unwrap();
        let phi = VectorBoundaryDatum::identity_on(&domain.boundary);
        let c = certify_convex(&phi, 64, 1e-7).unwrap();
        assert!((c.d_range - 2.0).abs() < 1e-6, "D = {}", c.d_range);
        assert_eq!(c.directions_tested, 64);
    }

    #[test]
    fn circle_curvature_character_matches_lemma() {
        let domain = make_disk_domain(4096).unwrap();
        let pred = curvature_character(&domain.boundary, 1e-9).unwrap();
        assert_relative_eq!(pred.kappa_min, 1.0, epsilon = 1e-6);
        assert_relative_eq!(pred.kappa_max, 1.0, epsilon = 1e-6);
        assert_relative_eq!(pred.d_range, 1.0, epsilon = 1e-6);
        assert_relative_eq!(pred.omega_slope, 2.0 / std::f64::consts::PI, epsilon = 1e-6);
        // the predicted D is a valid but not tight lower bound: measured D = 2
        let phi = VectorBoundaryDatum::identity_on(&domain.boundary);
        let measured = certify_convex(&phi, 64, 1e-7).unwrap();
        assert!(measured.d_range >= pred.d_range - 1e-9);
    }

    #[test]
    fn ellipse_curvature_character() {
        // ellipse with semi-axes (2, 1): curvature extremes b/a^2 = 1/4 and
        // a/b^2 = 2, so D = 1/K_max = 0.5
        let rho =
            |theta: f64| 2.0 / ((theta.cos().powi(2) + 4.0 * theta.sin().powi(2)).sqrt());
        let domain = make_star_domain(&rho, 8192).unwrap();
        let pred = curvature_character(&domain.boundary, 1e-9).unwrap();
        assert_relative_eq!(pred.kappa_min, 0.25, epsilon = 1e-4);
        assert_relative_eq!(pred.kappa_max, 2.0, epsilon = 1e-4);
        assert_relative_eq!(pred.d_range, 0.5, epsilon = 1e-4);
        let phi = VectorBoundaryDatum::identity_on(&domain.boundary);
        let measured = certify_convex(&phi, 64, 1e-7).unwrap();
        assert!(measured.d_range >= pred.d_range - 1e-9);
    }

    #[test]
    fn straight_segment_rejected_as_not_strictly_convex() {
        // stadium curve: two semicircles joined by straight segments
        let n = 1024;
        let half = 1.0;
        let total = 2.0 * std::f64::consts::PI + 4.0 * half;
        let mut samples = Vec::with_capacity(n);
        for i in 0..n {
            let t = total * i as f64 / n as f64;
            let (p, tau) = stadium_point(t, half);
            samples.push(crate::geometry::BoundarySample {
                t,
                point: p,
                tangent: tau,
            });
        }
        let curve = crate::geometry::BoundaryCurve::new(samples, total).unwrap();
        assert!(matches!(
            curvature_character(&curve, 1e-6),
            Err(CharacterError::NotStrictlyConvex { .. })
        ));
    }

    fn stadium_point(t: f64, half: f64) -> (Vec2, Vec2) {
        let pi = std::f64::consts::PI;
        if t < 2.0 * half {
            (Vec2::new(-half + t, -1.0), Vec2::new(1.0, 0.0))
        } else if t < 2.0 * half + pi {
            let a = t - 2.0 * half - 0.5 * pi;
            (
                Vec2::new(half + a.cos(), a.sin()),
                Vec2::new(-a.sin(), a.cos()),
            )
        } else if t < 4.0 * half + pi {
            let s = t - 2.0 * half - pi;
            (Vec2::new(half - s, 1.0), Vec2::new(-1.0, 0.0))
        } else {
            let a = t - 4.0 * half - pi + 0.5 * pi;
            (
                Vec2::new(-half + a.cos(), a.sin()),
                Vec2::new(-a.sin(), a.cos()),
            )
        }
    }

    #[test]
    fn figure_eight_projection_fails() {
        let phi = VectorBoundaryDatum::from_fn(
            TAU,
            1024,
            |t| Vec2::new(t.sin(), (2.0 * t).sin()),
            |t| Vec2::new(t.cos(), 2.0 * (2.0 * t).cos()),
        );
        assert!(matches!(
            certify_convex(&phi, 32, 1e-7),
            Err(CharacterError::DirectionFailed { .. })
        ));
    }

    #[test]
    fn convex_success_implies_every_projection_unimodal() {
        let domain = make_disk_domain(2048).unwrap();
        let phi = VectorBoundaryDatum::identity_on(&domain.boundary);
        certify_convex(&phi, 32, 1e-7).expect("circle must certify");
        for k in 0..32 {
            let a = TAU * k as f64 / 32.0;
            let proj = phi.project(Vec2::new(a.cos(), a.sin()));
            assert!(certify_unimodal(&proj, 1e-7).is_ok());
        }
    }

    #[test]
    fn rotation_equivariance_of_d() {
        let domain = make_star_domain(&|th: f64| 1.0 + 0.15 * th.cos(), 4096).unwrap();
        let phi = VectorBoundaryDatum::identity_on(&domain.boundary);
        let base = certify_convex(&phi, 64, 1e-7).unwrap();
        // rotate by one direction-grid step: D must be invariant
        let angle = TAU / 64.0;
        let (c, s) = (angle.cos(), angle.sin());
        let curve = domain.boundary.clone();
        let curve2 = domain.boundary.clone();
        let rotated = VectorBoundaryDatum::from_fn(
            phi.period,
            4096,
            move |t| {
                let p = curve.point_at(t);
                Vec2::new(c * p.x - s * p.y, s * p.x + c * p.y)
            },
            move |t| {
                let p = curve2.tangent_at(t);
                Vec2::new(c * p.x - s * p.y, s * p.x + c * p.y)
            },
        );
        let rot = certify_convex(&rotated, 64, 1e-7).unwrap();
        assert!((base.d_range - rot.d_range).abs() < 1e-6);
    }

    proptest! {
        /// Affine invariance: certify(a phi + b) succeeds iff certify(phi)
        /// does, with the range endpoints mapped accordingly.
        #[test]
        fn affine_invariance(a in 0.1f64..10.0, b in -5.0f64..5.0) {
            let base = sine_datum(512);
            let scaled = ScalarBoundaryDatum::from_fn(
                TAU, 512,
                move |t| a * t.sin() + b,
                move |t| a * t.cos(),
            );
            let c0 = certify_unimodal(&base, 1e-8).unwrap();
            let c1 = certify_unimodal(&scaled, 1e-8 * a).unwrap();
            prop_assert!((c1.m - (a * c0.m + b)).abs() < 1e-9 * a.max(1.0));
            prop_assert!((c1.big_m - (a * c0.big_m + b)).abs() < 1e-9 * a.max(1.0));
        }
    }
}
