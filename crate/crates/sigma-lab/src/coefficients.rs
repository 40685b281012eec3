//! Coefficient matrices sigma: ellipticity and Hoelder verification, complex
//! dilatations, and the built-in test families.
//!
//! A field is an immutable evaluation closure (2x2 planar or 3x3 spatial)
//! together with its declared ellipticity constant K, optional Hoelder data
//! and a symmetry flag. Evaluation is pure and safe to call concurrently.

use crate::{Mat2, Mat3, Vec2, Vec3};
use num_complex::Complex64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CoefficientError {
    #[error("matrix is numerically singular at sample {index}: det = {det:.3e}")]
    SingularMatrix { index: usize, det: f64 },
    #[error("ellipticity violated at sample {index}: worst ratio {ratio:.6e} < 1/K = {threshold:.6e}")]
    EllipticityViolation {
        index: usize,
        ratio: f64,
        threshold: f64,
    },
    #[error("amplitude a0 = {a0} outside (0, 1)")]
    A0OutOfRange { a0: f64 },
    #[error("dilatation bound violated: |mu|+|nu| = {sum:.12e} > (K-1)/(K+1) = {bound:.12e}")]
    DilatationBound { sum: f64, bound: f64 },
    #[error("field has dimension {got}, expected {expected}")]
    WrongDimension { got: usize, expected: usize },
    #[error("K target must exceed 1, got {k}")]
    KTargetTooSmall { k: f64 },
}

#[derive(Debug, Clone, Copy)]
pub struct HolderData {
    pub alpha: f64,
    pub e: f64,
}

#[derive(Clone)]
enum FieldKind {
    Planar(Arc<dyn Fn(Vec2) -> Mat2 + Send + Sync>),
    Spatial(Arc<dyn Fn(Vec3) -> Mat3 + Send + Sync>),
}

/// A position-dependent coefficient matrix with its certified metadata.
#[derive(Clone)]
pub struct CoefficientField {
    kind: FieldKind,
    pub k_ellipticity: f64,
    pub holder: Option<HolderData>,
    pub symmetric: bool,
    pub description: String,
    /// Points where the field is discontinuous (excluded from residual checks).
    pub singular_points: Vec<Vec2>,
}

impl std::fmt::Debug for CoefficientField {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CoefficientField")
            .field("dim", &self.dim())
            .field("k_ellipticity", &self.k_ellipticity)
            .field("symmetric", &self.symmetric)
            .field("description", &self.description)
            .finish()
    }
}

impl CoefficientField {
    pub fn new_planar(
        eval: impl Fn(Vec2) -> Mat2 + Send + Sync + 'static,
        k_ellipticity: f64,
        symmetric: bool,
        description: impl Into<String>,
    ) -> Self {
        CoefficientField {
            kind: FieldKind::Planar(Arc::new(eval)),
            k_ellipticity,
            holder: None,
            symmetric,
            description: description.into(),
            singular_points: Vec::new(),
        }
    }

    pub fn new_spatial(
        eval: impl Fn(Vec3) -> Mat3 + Send + Sync + 'static,
        k_ellipticity: f64,
        symmetric: bool,
        description: impl Into<String>,
    ) -> Self {
        CoefficientField {
            kind: FieldKind::Spatial(Arc::new(eval)),
            k_ellipticity,
            holder: None,
            symmetric,
            description: description.into(),
            singular_points: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        match &self.kind {
            FieldKind::Planar(_) => 2,
            FieldKind::Spatial(_) => 3,
        }
    }

    /// Evaluates a planar field. Panics if the field is spatial; callers that
    /// accept arbitrary fields should check `dim()` first.
    pub fn eval2(&self, p: Vec2) -> Mat2 {
        match &self.kind {
            FieldKind::Planar(f) => f(p),
            FieldKind::Spatial(_) => panic!("eval2 called on a 3x3 field"),
        }
    }

    pub fn eval3(&self, p: Vec3) -> Mat3 {
        match &self.kind {
            FieldKind::Spatial(f) => f(p),
            FieldKind::Planar(_) => panic!("eval3 called on a 2x2 field"),
        }
    }

    pub fn with_holder(mut self, alpha: f64, e: f64) -> Self {
        self.holder = Some(HolderData { alpha, e });
        self
    }
}

/// Complex dilatations (mu, nu) of a 2x2 coefficient matrix.
#[derive(Debug, Clone, Copy)]
pub struct BeltramiPair {
    pub mu: Complex64,
    pub nu: Complex64,
}

impl BeltramiPair {
    pub fn modulus_sum(&self) -> f64 {
        self.mu.norm() + self.nu.norm()
    }
}

/// Dilatations of the first-order system equivalent to div(sigma grad u)=0:
/// mu = (s22 - s11 - i(s12+s21)) / (1 + tr + det),
/// nu = (1 - det + i(s12-s21)) / (1 + tr + det).
///
/// The certified contract `|mu| + |nu| <= (K-1)/(K+1)` is checked against the
/// supplied K; it is sharp for symmetric sigma with eigenvalues in [1/K, K].
pub fn beltrami_dilatations(sigma: &Mat2, k: f64) -> Result<BeltramiPair, CoefficientError> {
    let tr = sigma[(0, 0)] + sigma[(1, 1)];
    let det = sigma.determinant();
    let denom = 1.0 + tr + det;
    let mu = Complex64::new(
        (sigma[(1, 1)] - sigma[(0, 0)]) / denom,
        -(sigma[(0, 1)] + sigma[(1, 0)]) / denom,
    );
    let nu = Complex64::new(
        (1.0 - det) / denom,
        (sigma[(0, 1)] - sigma[(1, 0)]) / denom,
    );
    let pair = BeltramiPair { mu, nu };
    let bound = (k - 1.0) / (k + 1.0);
    if pair.modulus_sum() > bound + 1e-12 {
        return Err(CoefficientError::DilatationBound {
            sum: pair.modulus_sum(),
            bound,
        });
    }
    Ok(pair)
}

#[derive(Debug, Clone)]
pub struct EllipticityReport {
    pub worst_ratio_forward: f64,
    pub worst_ratio_inverse: f64,
    pub worst_point_index: usize,
    pub passes: bool,
}

fn ellipticity_at2(sigma: &Mat2) -> Option<(f64, f64)> {
    let det = sigma.determinant();
    if det.abs() <= 1e-14 {
        return None;
    }
    let inv = sigma.try_inverse()?;
    let mut fwd = f64::INFINITY;
    let mut rev = f64::INFINITY;
    for k in 0..64 {
        let a = std::f64::consts::PI * 2.0 * k as f64 / 64.0;
        let xi = Vec2::new(a.cos(), a.sin());
        fwd = fwd.min((sigma * xi).dot(&xi));
        rev = rev.min((inv * xi).dot(&xi));
    }
    Some((fwd, rev))
}

fn fibonacci_sphere(n: usize) -> Vec<Vec3> {
    let golden = std::f64::consts::PI * (3.0 - 5.0f64.sqrt());
    (0..n)
        .map(|i| {
            let y = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
            let r = (1.0 - y * y).sqrt();
            let th = golden * i as f64;
            Vec3::new(r * th.cos(), y, r * th.sin())
        })
        .collect()
}

/// Verifies both ellipticity inequalities on the given sample points over a
/// 64-direction grid. Both worst ratios must be >= 1/K - 1e-10.
pub fn verify_ellipticity_2d(
    field: &CoefficientField,
    points: &[Vec2],
) -> Result<EllipticityReport, CoefficientError> {
    if field.dim() != 2 {
        return Err(CoefficientError::WrongDimension {
            got: field.dim(),
            expected: 2,
        });
    }
    let threshold = 1.0 / field.k_ellipticity - 1e-10;
    let mut worst_f = f64::INFINITY;
    let mut worst_r = f64::INFINITY;
    let mut worst_idx = 0usize;
    for (i, &p) in points.iter().enumerate() {
        let sigma = field.eval2(p);
        let (fwd, rev) = ellipticity_at2(&sigma).ok_or(CoefficientError::SingularMatrix {
            index: i,
            det: sigma.determinant(),
        })?;
        if fwd.min(rev) < worst_f.min(worst_r) {
            worst_idx = i;
        }
        worst_f = worst_f.min(fwd);
        worst_r = worst_r.min(rev);
    }
    let passes = worst_f >= threshold && worst_r >= threshold;
    if !passes {
        return Err(CoefficientError::EllipticityViolation {
            index: worst_idx,
            ratio: worst_f.min(worst_r),
            threshold,
        });
    }
    Ok(EllipticityReport {
        worst_ratio_forward: worst_f,
        worst_ratio_inverse: worst_r,
        worst_point_index: worst_idx,
        passes,
    })
}

/// 3D variant over a 64-direction Fibonacci sphere.
pub fn verify_ellipticity_3d(
    field: &CoefficientField,
    points: &[Vec3],
) -> Result<EllipticityReport, CoefficientError> {
    if field.dim() != 3 {
        return Err(CoefficientError::WrongDimension {
            got: field.dim(),
            expected: 3,
        });
    }
    let dirs = fibonacci_sphere(64);
    let threshold = 1.0 / field.k_ellipticity - 1e-10;
    let mut worst_f = f64::INFINITY;
    let mut worst_r = f64::INFINITY;
    let mut worst_idx = 0usize;
    for (i, &p) in points.iter().enumerate() {
        let sigma = field.eval3(p);
        let det = sigma.determinant();
        if det.abs() <= 1e-14 {
            return Err(CoefficientError::SingularMatrix { index: i, det });
        }
        let inv = sigma.try_inverse().ok_or(CoefficientError::SingularMatrix {
            index: i,
            det,
        })?;
        for xi in &dirs {
            let fwd = (sigma * xi).dot(xi);
            let rev = (inv * xi).dot(xi);
            if fwd.min(rev) < worst_f.min(worst_r) {
                worst_idx = i;
            }
            worst_f = worst_f.min(fwd);
            worst_r = worst_r.min(rev);
        }
    }
    let passes = worst_f >= threshold && worst_r >= threshold;
    if !passes {
        return Err(CoefficientError::EllipticityViolation {
            index: worst_idx,
            ratio: worst_f.min(worst_r),
            threshold,
        });
    }
    Ok(EllipticityReport {
        worst_ratio_forward: worst_f,
        worst_ratio_inverse: worst_r,
        worst_point_index: worst_idx,
        passes,
    })
}

/// Statistical Hoelder check: |sigma_ij(x)-sigma_ij(y)| <= E |x-y|^alpha over
/// random point pairs in the given box.
pub fn verify_holder_2d(
    field: &CoefficientField,
    lo: Vec2,
    hi: Vec2,
    n_pairs: usize,
    seed: u64,
) -> Option<f64> {
    let holder = field.holder?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..n_pairs {
        let x = Vec2::new(
            rng.random_range(lo.x..hi.x),
            rng.random_range(lo.y..hi.y),
        );
        let y = Vec2::new(
            rng.random_range(lo.x..hi.x),
            rng.random_range(lo.y..hi.y),
        );
        let d = (x - y).norm();
        if d < 1e-12 {
            continue;
        }
        let sx = field.eval2(x);
        let sy = field.eval2(y);
        for i in 0..2 {
            for j in 0..2 {
                let quot = (sx[(i, j)] - sy[(i, j)]).abs() / d.powf(holder.alpha);
                worst = worst.max(quot - holder.e - 1e-10);
            }
        }
    }
    Some(worst) // <= 0 means the bound held on every sampled pair
}

/// Constant isotropic field s * I.
pub fn family_constant(s: f64) -> CoefficientField {
    let k = s.max(1.0 / s);
    CoefficientField::new_planar(move |_| Mat2::identity() * s, k, true, format!("constant({s})"))
}

/// The radially layered discontinuous field with eigenvalues {alpha, 1/alpha}:
/// sigma = alpha^{-1} rhat rhat^T + alpha rperp rperp^T, discontinuous at the
/// origin for alpha != 1. Evaluation at the exact origin returns the limit
/// along the x1-axis, diag(1/alpha, alpha); generic mesh centroids never hit
/// the origin.
pub fn family_meyers(alpha: f64) -> CoefficientField {
    assert!(alpha > 0.0, "alpha must be positive");
    let eval = move |p: Vec2| {
        let r2 = p.norm_squared();
        if r2 == 0.0 {
            return Mat2::new(1.0 / alpha, 0.0, 0.0, alpha);
        }
        let (x, y) = (p.x, p.y);
        Mat2::new(
            (x * x / alpha + alpha * y * y) / r2,
            (1.0 / alpha - alpha) * x * y / r2,
            (1.0 / alpha - alpha) * x * y / r2,
            (alpha * x * x + y * y / alpha) / r2,
        )
    };
    let mut field = CoefficientField::new_planar(
        eval,
        alpha.max(1.0 / alpha),
        true,
        format!("meyers(alpha={alpha})"),
    );
    field.singular_points = vec![Vec2::new(0.0, 0.0)];
    field
}

/// Smooth amplitude profile for the layered 3D family: a0 * exp(-1/x3) for
/// x3 > 0, identically 0 for x3 <= 0 (C-infinity, range in (0, a0)).
pub fn jin_kazdan_amplitude(a0: f64) -> impl Fn(f64) -> f64 + Send + Sync + Clone {
    move |x3: f64| {
        if x3 > 0.0 {
            a0 * (-1.0 / x3).exp()
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JinKazdanProfileKind {
    Smooth,
    PiecewiseConstant,
}

/// The layered 3x3 family sigma = [[1, a, 0], [a, 1, 0], [0, 0, b]] with
/// b = 1/(1-a^2), a = a(x3). `Smooth` uses the default C-infinity profile,
/// `PiecewiseConstant` uses a == a0 for x3 > 0.
pub fn family_jin_kazdan(
    a0: f64,
    kind: JinKazdanProfileKind,
) -> Result<CoefficientField, CoefficientError> {
    if !(0.0 < a0 && a0 < 1.0) {
        return Err(CoefficientError::A0OutOfRange { a0 });
    }
    let smooth = jin_kazdan_amplitude(a0);
    let a_fn = move |x3: f64| match kind {
        JinKazdanProfileKind::Smooth => smooth(x3),
        JinKazdanProfileKind::PiecewiseConstant => {
            if x3 > 0.0 {
                a0
            } else {
                0.0
            }
        }
    };
    family_jin_kazdan_with(a_fn, a0, format!("jin_kazdan({kind:?}, a0={a0})"))
}

/// Same family with a caller-supplied amplitude profile (must vanish for
/// x3 <= 0 and stay within (0, a0) for x3 > 0).
pub fn family_jin_kazdan_with(
    a_fn: impl Fn(f64) -> f64 + Send + Sync + 'static,
    a0: f64,
    description: String,
) -> Result<CoefficientField, CoefficientError> {
    if !(0.0 < a0 && a0 < 1.0) {
        return Err(CoefficientError::A0OutOfRange { a0 });
    }
    let eval = move |p: Vec3| {
        let a = a_fn(p.z);
        let b = 1.0 / (1.0 - a * a);
        Mat3::new(1.0, a, 0.0, a, 1.0, 0.0, 0.0, 0.0, b)
    };
    // 2x2 block eigenvalues are 1 -+ a; the third axis carries b.
    let k = (1.0 / (1.0 - a0))
        .max(1.0 + a0)
        .max(1.0 / (1.0 - a0 * a0));
    Ok(CoefficientField::new_spatial(eval, k, true, description))
}

#[derive(Clone)]
struct TrigPoly {
    coeffs: Vec<(f64, f64, f64)>, // (kx, ky, amplitude)
    phases: Vec<f64>,
}

impl TrigPoly {
    fn random(rng: &mut ChaCha8Rng) -> Self {
        let modes: [(f64, f64); 8] = [
            (1.0, 0.0),
            (0.0, 1.0),
            (1.0, 1.0),
            (1.0, -1.0),
            (2.0, 0.0),
            (0.0, 2.0),
            (2.0, 1.0),
            (1.0, 2.0),
        ];
        let mut coeffs = Vec::with_capacity(modes.len());
        let mut phases = Vec::with_capacity(modes.len());
        let mut total = 0.0;
        for &(kx, ky) in &modes {
            let weight = 1.0 / (kx * kx + ky * ky);
            let a = rng.random_range(-1.0..1.0) * weight;
            coeffs.push((kx, ky, a));
            phases.push(rng.random_range(0.0..std::f64::consts::TAU));
            total += a.abs();
        }
        if total > 0.0 {
            for c in &mut coeffs {
                c.2 /= total; // now sup |p| <= 1
            }
        }
        TrigPoly { coeffs, phases }
    }

    fn eval(&self, p: Vec2) -> f64 {
        self.coeffs
            .iter()
            .zip(&self.phases)
            .map(|(&(kx, ky, a), &ph)| a * (kx * p.x + ky * p.y + ph).cos())
            .sum()
    }
}

/// Seeded smooth test family sigma = R(theta) diag(l1, l2) R(theta)^T + s J,
/// with low-order trigonometric eigenvalue/angle/skew fields, rescaled so the
/// declared K_target certifies ellipticity and the dilatation bound.
/// Deterministic in the seed.
pub fn family_smooth_random(
    seed: u64,
    k_target: f64,
    holder_alpha: f64,
    skew_amplitude: f64,
) -> Result<CoefficientField, CoefficientError> {
    if k_target <= 1.0 {
        return Err(CoefficientError::KTargetTooSmall { k: k_target });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p1 = TrigPoly::random(&mut rng);
    let p2 = TrigPoly::random(&mut rng);
    let pt = TrigPoly::random(&mut rng);
    let ps = TrigPoly::random(&mut rng);
    let rho = 0.7 * k_target.ln(); // eigenvalues within [K^-0.7, K^0.7]
    let symmetric_part = move |p: Vec2| -> Mat2 {
        let l1 = (rho * p1.eval(p)).exp();
        let l2 = (rho * p2.eval(p)).exp();
        let th = std::f64::consts::PI * pt.eval(p);
        let (c, s) = (th.cos(), th.sin());
        let r = Mat2::new(c, -s, s, c);
        r * Mat2::new(l1, 0.0, 0.0, l2) * r.transpose()
    };
    // scale the skew so that the inverse-ellipticity and dilatation contracts
    // hold with margin on a dense grid
    let mut scale = if skew_amplitude > 0.0 { 1.0 } else { 0.0 };
    if skew_amplitude > 0.0 {
        let bound = 0.98 * (k_target - 1.0) / (k_target + 1.0);
        let grid: Vec<Vec2> = (-12..=12)
            .flat_map(|i| (-12..=12).map(move |j| Vec2::new(i as f64 / 10.0, j as f64 / 10.0)))
            .collect();
        for _ in 0..60 {
            let mut ok = true;
            for &g in &grid {
                let q = symmetric_part(g);
                let s_val = scale * skew_amplitude * ps.eval(g);
                let sigma = q + Mat2::new(0.0, -s_val, s_val, 0.0);
                let lam_max = {
                    let tr = q.trace();
                    let d = ((tr * tr - 4.0 * q.determinant()).max(0.0)).sqrt();
                    0.5 * (tr + d)
                };
                let inv_ok =
                    q.determinant() / (q.determinant() + s_val * s_val) >= lam_max / k_target;
                let pair_ok = beltrami_pair_unchecked(&sigma).modulus_sum() <= bound;
                if !(inv_ok && pair_ok) {
                    ok = false;
                    break;
                }
            }
            if ok {
                break;
            }
            scale *= 0.8;
        }
    }
    let skew = scale * skew_amplitude;
    let eval = move |p: Vec2| -> Mat2 {
        let q = symmetric_part(p);
        let s_val = skew * ps.eval(p);
        q + Mat2::new(0.0, -s_val, s_val, 0.0)
    };
    // Hoelder constant from the sampled gradient (box [-1.2, 1.2]^2 covers the
    // unit disk with margin); Lipschitz rescaled for alpha < 1
    let mut max_grad: f64 = 0.0;
    for i in -12..=12 {
        for j in -12..=12 {
            let p = Vec2::new(i as f64 / 10.0, j as f64 / 10.0);
            let hstep = 1e-5;
            let dx = (eval(p + Vec2::new(hstep, 0.0)) - eval(p - Vec2::new(hstep, 0.0)))
                / (2.0 * hstep);
            let dy = (eval(p + Vec2::new(0.0, hstep)) - eval(p - Vec2::new(0.0, hstep)))
                / (2.0 * hstep);
            for r in 0..2 {
                for c in 0..2 {
                    max_grad = max_grad.max(dx[(r, c)].abs() + dy[(r, c)].abs());
                }
            }
        }
    }
    let diam = 2.4f64;
    let e = 1.1 * max_grad * diam.powf(1.0 - holder_alpha);
    Ok(CoefficientField::new_planar(
        eval,
        k_target,
        skew == 0.0,
        format!("smooth_random(seed={seed}, K={k_target}, alpha={holder_alpha}, skew={skew_amplitude})"),
    )
    .with_holder(holder_alpha, e))
}

fn beltrami_pair_unchecked(sigma: &Mat2) -> BeltramiPair {
    let tr = sigma[(0, 0)] + sigma[(1, 1)];
    let det = sigma.determinant();
    let denom = 1.0 + tr + det;
    BeltramiPair {
        mu: Complex64::new(
            (sigma[(1, 1)] - sigma[(0, 0)]) / denom,
            -(sigma[(0, 1)] + sigma[(1, 0)]) / denom,
        ),
        nu: Complex64::new(
            (1.0 - det) / denom,
            (sigma[(0, 1)] - sigma[(1, 0)]) / denom,
        ),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn disk_points(n: usize) -> Vec<Vec2> {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        (0..n)
            .map(|_| {
                let r = rng.random_range(0.05..1.0f64).sqrt();
                let a = rng.random_range(0.0..std::f64::consts::TAU);
                Vec2::new(r * a.cos(), r * a.sin())
            })
            .collect()
    }

    #[test]
    fn identity_field_has_unit_ratios() {
        let f = family_constant(1.0);
        let rep = verify_ellipticity_2d(&f, &disk_points(50)).unwrap();
        assert_relative_eq!(rep.worst_ratio_forward, 1.0, epsilon = 1e-12);
        assert_relative_eq!(rep.worst_ratio_inverse, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn diagonal_field_ratio_is_inverse_k() {
        let f = CoefficientField::new_planar(
            |_| Mat2::new(2.0, 0.0, 0.0, 0.5),
            2.0,
            true,
            "diag(2, 1/2)",
        );
        let rep = verify_ellipticity_2d(&f, &disk_points(10)).unwrap();
        // 64-direction grid includes the axis directions exactly
        assert_relative_eq!(rep.worst_ratio_forward, 0.5, epsilon = 1e-12);
    }

    #[test]
    fn meyers_ellipticity_passes_with_max_alpha_inv_alpha() {
        for alpha in [0.5, 2.0, 3.0] {
            let f = family_meyers(alpha);
            let rep = verify_ellipticity_2d(&f, &disk_points(200)).unwrap();
            assert!(rep.passes, "alpha = {alpha}");
        }
    }

    #[test]
    fn meyers_eigenvalues_are_alpha_and_inverse() {
        let alpha = 2.7;
        let f = family_meyers(alpha);
        for p in disk_points(100) {
            let sigma = f.eval2(p);
            let eig = sigma.symmetric_eigenvalues();
            let mut vals = [eig[0], eig[1]];
            vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
            assert_relative_eq!(vals[0], 1.0 / alpha, epsilon = 1e-12);
            assert_relative_eq!(vals[1], alpha, epsilon = 1e-12);
        }
    }

    #[test]
    fn meyers_alpha_one_is_identity() {
        let f = family_meyers(1.0);
        for p in disk_points(20) {
            assert!((f.eval2(p) - Mat2::identity()).norm() < 1e-14);
        }
    }

    #[test]
    fn meyers_rotation_covariance() {
        let f = family_meyers(2.0);
        for k in 0..8 {
            let th = 0.3 + k as f64;
            let (c, s) = (th.cos(), th.sin());
            let r = Mat2::new(c, -s, s, c);
            let p = Vec2::new(0.4, -0.2);
            let lhs = f.eval2(r * p);
            let rhs = r * f.eval2(p) * r.transpose();
            assert!((lhs - rhs).norm() < 1e-12);
        }
    }

    #[test]
    fn dilatations_identity_vanish() {
        let pair = beltrami_dilatations(&Mat2::identity(), 1.0).unwrap();
        assert_eq!(pair.mu, Complex64::new(0.0, 0.0));
        assert_eq!(pair.nu, Complex64::new(0.0, 0.0));
    }

    #[test]
    fn dilatations_scaled_identity() {
        // direct substitution: sigma = 2I gives mu = 0, nu = -1/3
        let pair = beltrami_dilatations(&(Mat2::identity() * 2.0), 2.0).unwrap();
        assert_relative_eq!(pair.mu.norm(), 0.0, epsilon = 1e-15);
        assert_relative_eq!(pair.nu.re, -1.0 / 3.0, epsilon = 1e-15);
        assert_relative_eq!(pair.modulus_sum(), 1.0 / 3.0, epsilon = 1e-15);
    }

    #[test]
    fn dilatations_meyers_on_axis() {
        let alpha = 2.0;
        let f = family_meyers(alpha);
        let pair = beltrami_dilatations(&f.eval2(Vec2::new(1.0, 0.0)), 2.0).unwrap();
        assert_relative_eq!(pair.mu.re, (alpha - 1.0) / (alpha + 1.0), epsilon = 1e-14);
        assert_relative_eq!(pair.mu.im, 0.0, epsilon = 1e-15);
        assert_relative_eq!(pair.nu.norm(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn meyers_k_symmetric_under_alpha_inversion() {
        let a = family_meyers(2.5);
        let b = family_meyers(1.0 / 2.5);
        assert_relative_eq!(a.k_ellipticity, b.k_ellipticity, epsilon = 1e-15);
    }

    #[test]
    fn jin_kazdan_identity_below_interface() {
        let f = family_jin_kazdan(0.5, JinKazdanProfileKind::PiecewiseConstant).unwrap();
        let sigma = f.eval3(Vec3::new(0.3, -0.4, -0.7));
        assert!((sigma - Mat3::identity()).norm() < 1e-15);
    }

    #[test]
    fn jin_kazdan_piecewise_b_value() {
        let f = family_jin_kazdan(0.5, JinKazdanProfileKind::PiecewiseConstant).unwrap();
        let sigma = f.eval3(Vec3::new(0.0, 0.0, 1.0));
        assert_relative_eq!(sigma[(2, 2)], 4.0 / 3.0, epsilon = 1e-15);
        assert_relative_eq!(sigma[(0, 1)], 0.5, epsilon = 1e-15);
    }

    #[test]
    fn jin_kazdan_ellipticity_finite() {
        let f = family_jin_kazdan(0.5, JinKazdanProfileKind::PiecewiseConstant).unwrap();
        assert_relative_eq!(f.k_ellipticity, 2.0, epsilon = 1e-15);
        let pts: Vec<Vec3> = (-10..=10)
            .map(|i| Vec3::new(0.1, -0.2, i as f64 / 5.0))
            .collect();
        assert!(verify_ellipticity_3d(&f, &pts).unwrap().passes);
    }

    #[test]
    fn jin_kazdan_a0_out_of_range() {
        assert!(matches!(
            family_jin_kazdan(1.2, JinKazdanProfileKind::Smooth),
            Err(CoefficientError::A0OutOfRange { .. })
        ));
    }

    #[test]
    fn smooth_random_deterministic() {
        let a = family_smooth_random(42, 2.0, 1.0, 0.5).unwrap();
        let b = family_smooth_random(42, 2.0, 1.0, 0.5).unwrap();
        for p in disk_points(50) {
            assert_eq!(a.eval2(p), b.eval2(p));
        }
    }

    #[test]
    fn smooth_random_zero_skew_is_symmetric() {
        let f = family_smooth_random(3, 2.0, 1.0, 0.0).unwrap();
        assert!(f.symmetric);
        for p in disk_points(50) {
            let s = f.eval2(p);
            assert!((s[(0, 1)] - s[(1, 0)]).abs() < 1e-14);
        }
    }

    #[test]
    fn smooth_random_dilatation_bound_all_seeds() {
        for seed in 0..10u64 {
            let f = family_smooth_random(seed, 2.0, 1.0, 0.6).unwrap();
            let bound = (2.0 - 1.0) / (2.0 + 1.0);
            for p in disk_points(1000) {
                let pair = beltrami_dilatations(&f.eval2(p), 2.0).unwrap();
                assert!(pair.modulus_sum() <= bound + 1e-12);
            }
        }
    }

    #[test]
    fn smooth_random_ellipticity_and_holder() {
        for seed in [0u64, 5, 9] {
            let f = family_smooth_random(seed, 2.0, 1.0, 0.4).unwrap();
            assert!(verify_ellipticity_2d(&f, &disk_points(300)).unwrap().passes);
            let worst = verify_holder_2d(
                &f,
                Vec2::new(-1.0, -1.0),
                Vec2::new(1.0, 1.0),
                10_000,
                1,
            )
            .unwrap();
            assert!(worst <= 0.0, "Hoelder excess {worst}");
        }
    }

    #[test]
    fn imaginary_parts_track_symmetry() {
        // Im mu = -(s12+s21)/denom, Im nu = (s12-s21)/denom
        let sigma = Mat2::new(1.2, 0.3, 0.1, 0.9);
        let pair = beltrami_pair_unchecked(&sigma);
        let denom = 1.0 + sigma.trace() + sigma.determinant();
        assert_relative_eq!(pair.mu.im, -(0.3 + 0.1) / denom, epsilon = 1e-15);
        assert_relative_eq!(pair.nu.im, (0.3 - 0.1) / denom, epsilon = 1e-15);
        let sym = Mat2::new(1.2, 0.25, 0.25, 0.9);
        assert_relative_eq!(beltrami_pair_unchecked(&sym).nu.im, 0.0, epsilon = 1e-15);
    }

    proptest! {
        /// For symmetric sigma with eigenvalues in [1/K, K] the dilatation sum
        /// stays within (K-1)/(K+1).
        #[test]
        fn symmetric_dilatation_bound(
            log_l1 in -1.0f64..1.0,
            log_l2 in -1.0f64..1.0,
            theta in 0.0f64..std::f64::consts::PI,
        ) {
            let k = std::f64::consts::E; // eigenvalues within [1/e, e]
            let (c, s) = (theta.cos(), theta.sin());
            let r = Mat2::new(c, -s, s, c);
            let sigma = r * Mat2::new(log_l1.exp(), 0.0, 0.0, log_l2.exp()) * r.transpose();
            let pair = beltrami_dilatations(&sigma, k).unwrap();
            prop_assert!(pair.modulus_sum() <= (k - 1.0) / (k + 1.0) + 1e-12);
        }
    }
}
