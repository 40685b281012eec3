//! Composite-energy bounds for multiphase layouts on the unit square.
//!
//! For a layout of isotropic phases sigma_i I with area fractions p_i and an
//! affine loading matrix A, the cell energy
//! F(A) = inf (1/|Omega|) integral Trace[(DU0 + A)^T sigma (DU0 + A)]
//! is bracketed by
//!
//! - `wiener_bound` (F0): the harmonic-mean closed form over test fields with
//!   prescribed mean,
//! - `translation_bound` (F1): adds the null-Lagrangian constraint that the
//!   mean Jacobian determinant equals det A,
//! - `improved_bound` (F2): further adds det B >= 0 per cell,
//! - `cell_energy_upper`: the FEM energy of the sigma-harmonic mapping with
//!   data A x (an upper estimate of the inner infimum).
//!
//! F1 and F2 reduce to finite-dimensional minimizations over per-cell
//! constant matrices; splitting each matrix into conformal/anticonformal
//! parts makes the fixed-multiplier inner problems diagonal, so F1 is a 1D
//! concave dual maximization and F2 a 3-unknown active-set Newton solve with
//! a duality certificate.

use crate::characters::VectorBoundaryDatum;
use crate::coefficients::CoefficientField;
use crate::geometry::{unit_square_boundary_point, unit_square_mesh};
use crate::solver::{mapping_energy, solve_mapping, SolveError};
use crate::{Mat2, Vec2};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum BoundsError {
    #[error("layout invalid: {reason}")]
    InvalidLayout { reason: String },
    #[error("det A = {det:.6e} < 0: no field with det B >= 0 a.e. can match the mean determinant")]
    Infeasible { det: f64 },
    #[error("mesh resolution {resolution} does not resolve the {grid_n}x{grid_n} cell grid")]
    ResolutionMismatch { resolution: usize, grid_n: usize },
    #[error("active-set iteration failed to converge: residual {residual:.3e} after {iterations} iterations")]
    MaxIterations { residual: f64, iterations: usize },
    #[error("bound ordering violated: {chain}")]
    OrderingViolation { chain: String },
    #[error(transparent)]
    Solve(#[from] SolveError),
}

/// Piecewise-constant isotropic multiphase layout on the n x n cell grid of
/// the unit square.
#[derive(Debug, Clone, Serialize)]
pub struct PhaseLayout {
    pub grid_n: usize,
    /// phase index per cell, row-major, length grid_n^2
    pub phase_of_cell: Vec<usize>,
    /// isotropic conductivity of each phase (sigma_i I)
    pub sigmas: Vec<f64>,
}

impl PhaseLayout {
    pub fn new(
        grid_n: usize,
        phase_of_cell: Vec<usize>,
        sigmas: Vec<f64>,
    ) -> Result<Self, BoundsError> {
        if phase_of_cell.len() != grid_n * grid_n {
            return Err(BoundsError::InvalidLayout {
                reason: format!(
                    "{} cells listed for a {grid_n}x{grid_n} grid",
                    phase_of_cell.len()
                ),
            });
        }
        if sigmas.iter().any(|&s| s <= 0.0) {
            return Err(BoundsError::InvalidLayout {
                reason: "all conductivities must be positive".into(),
            });
        }
        if phase_of_cell.iter().any(|&p| p >= sigmas.len()) {
            return Err(BoundsError::InvalidLayout {
                reason: "phase index out of range".into(),
            });
        }
        Ok(PhaseLayout {
            grid_n,
            phase_of_cell,
            sigmas,
        })
    }

    pub fn single_phase(grid_n: usize, sigma: f64) -> Self {
        PhaseLayout {
            phase_of_cell: vec![0; grid_n * grid_n],
            grid_n,
            sigmas: vec![sigma],
        }
    }

    /// Seeded random assignment of phases to cells.
    pub fn random(seed: u64, grid_n: usize, sigmas: Vec<f64>) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n_phases = sigmas.len();
        let phase_of_cell = (0..grid_n * grid_n)
            .map(|_| rng.random_range(0..n_phases))
            .collect();
        PhaseLayout {
            grid_n,
            phase_of_cell,
            sigmas,
        }
    }

    /// Exact area fractions from the cell counts.
    pub fn fractions(&self) -> Vec<f64> {
        let mut counts = vec![0usize; self.sigmas.len()];
        for &p in &self.phase_of_cell {
            counts[p] += 1;
        }
        counts
            .iter()
            .map(|&c| c as f64 / self.phase_of_cell.len() as f64)
            .collect()
    }

    pub fn cell_sigma(&self, cell: usize) -> f64 {
        self.sigmas[self.phase_of_cell[cell]]
    }

    fn cell_weight(&self) -> f64 {
        1.0 / (self.grid_n * self.grid_n) as f64
    }

    /// The layout as a planar coefficient field (sigma_i I per cell).
    pub fn field(&self) -> CoefficientField {
        let n = self.grid_n;
        let sigmas = self.sigmas.clone();
        let phases = self.phase_of_cell.clone();
        let n_phases = sigmas.len();
        let k = self
            .sigmas
            .iter()
            .map(|&s| s.max(1.0 / s))
            .fold(1.0f64, f64::max);
        CoefficientField::new_planar(
            move |p: Vec2| {
                let i = ((p.x * n as f64).floor() as isize).clamp(0, n as isize - 1) as usize;
                let j = ((p.y * n as f64).floor() as isize).clamp(0, n as isize - 1) as usize;
                Mat2::identity() * sigmas[phases[j * n + i]]
            },
            k,
            true,
            format!("piecewise_constant({n_phases} phases, grid {n})"),
        )
    }
}

/// Components of M = a I + b J + c E1 + d E2 with E1 = diag(1,-1) and
/// E2 = offdiag(1,1): the conformal part carries (a, b), the anticonformal
/// part (c, d); det M = (a^2 + b^2) - (c^2 + d^2).
pub fn conformal_split(m: &Mat2) -> (f64, f64, f64, f64) {
    (
        0.5 * (m[(0, 0)] + m[(1, 1)]),
        0.5 * (m[(1, 0)] - m[(0, 1)]),
        0.5 * (m[(0, 0)] - m[(1, 1)]),
        0.5 * (m[(0, 1)] + m[(1, 0)]),
    )
}

pub fn conformal_join(a: f64, b: f64, c: f64, d: f64) -> Mat2 {
    Mat2::new(a + c, -b + d, b + d, a - c)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SolveRegime {
    /// the determinant multiplier is interior: exact optimum
    Interior,
    /// multiplier pinned at the convexity boundary: value is a valid lower
    /// bound, minimizer infeasible in the determinant constraint
    ConvexityBoundary,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct ConstraintResiduals {
    /// Frobenius norm of mean(B) - A
    pub mean: f64,
    /// |mean det B - det A|
    pub mean_det: f64,
    /// smallest per-cell determinant of the minimizer
    pub min_cell_det: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct BoundResult {
    pub value: f64,
    #[serde(skip)]
    pub minimizer: Vec<Mat2>,
    pub constraint_residuals: ConstraintResiduals,
    /// determinant-constraint multiplier at the solution
    pub multiplier: f64,
    /// primal value certified optimal by the matching dual value
    pub certified: bool,
    pub regime: SolveRegime,
}

fn residuals_of(layout: &PhaseLayout, a: &Mat2, minimizer: &[Mat2]) -> ConstraintResiduals {
    let w = layout.cell_weight();
    let mut mean = Mat2::zeros();
    let mut mean_det = 0.0;
    let mut min_det = f64::INFINITY;
    for b in minimizer {
        mean += b * w;
        let det = b.determinant();
        mean_det += w * det;
        min_det = min_det.min(det);
    }
    ConstraintResiduals {
        mean: (mean - a).norm(),
        mean_det: (mean_det - a.determinant()).abs(),
        min_cell_det: min_det,
    }
}

/// Harmonic-mean lower bound: F0 = Trace[A^T (mean of sigma^{-1})^{-1} A].
pub fn wiener_bound(layout: &PhaseLayout, a: &Mat2) -> f64 {
    let fractions = layout.fractions();
    let harmonic: f64 = 1.0
        / fractions
            .iter()
            .zip(&layout.sigmas)
            .map(|(&p, &s)| p / s)
            .sum::<f64>();
    harmonic * (a.transpose() * a).trace()
}

/// Distinct phases with aggregated weights (cells of one phase share their
/// optimizer, so sums over cells collapse to sums over phases).
fn phase_weights(layout: &PhaseLayout) -> Vec<(f64, f64)> {
    layout
        .sigmas
        .iter()
        .enumerate()
        .map(|(i, &s)| {
            let w = layout
                .phase_of_cell
                .iter()
                .filter(|&&p| p == i)
                .count() as f64
                * layout.cell_weight();
            (s, w)
        })
        .filter(|&(_, w)| w > 0.0)
        .collect()
}

/// Translation bound F1: minimize the mean of Trace(B^T sigma B) subject to
/// mean B = A and mean det B = det A.
///
/// The dual function in the determinant multiplier t is
/// Phi(t) = 2 kappa_A / P(t) + 2 delta_A / Q(t) + 2 t det A with
/// P(t) = sum w/(s-t), Q(t) = sum w/(s+t); Phi is concave on |t| < min sigma
/// and Phi'(t) = 2 (det A - mean det B(t)), so the root of Phi' restores the
/// constraint. If no root exists in the admissible interval the supremum at
/// the boundary is returned (still a valid lower bound for F1).
pub fn translation_bound(layout: &PhaseLayout, a: &Mat2) -> Result<BoundResult, BoundsError> {
    let phases = phase_weights(layout);
    let (ac, bc, cc, dc) = conformal_split(a);
    let kappa = ac * ac + bc * bc;
    let delta = cc * cc + dc * dc;
    let det_a = a.determinant();
    let s_min = phases.iter().map(|&(s, _)| s).fold(f64::INFINITY, f64::min);
    let p_sum = |t: f64| phases.iter().map(|&(s, w)| w / (s - t)).sum::<f64>();
    let q_sum = |t: f64| phases.iter().map(|&(s, w)| w / (s + t)).sum::<f64>();
    let p2_sum = |t: f64| phases.iter().map(|&(s, w)| w / ((s - t) * (s - t))).sum::<f64>();
    let q2_sum = |t: f64| phases.iter().map(|&(s, w)| w / ((s + t) * (s + t))).sum::<f64>();
    // Phi'(t)/2 = det A - G(t)
    let dphi_half = |t: f64| {
        let p = p_sum(t);
        let q = q_sum(t);
        det_a - (kappa * p2_sum(t) / (p * p) - delta * q2_sum(t) / (q * q))
    };
    let margin = 1e-9 * s_min;
    let lo = -s_min + margin;
    let hi = s_min - margin;
    let (t_star, regime) = if dphi_half(lo) <= 0.0 {
        (lo, SolveRegime::ConvexityBoundary)
    } else if dphi_half(hi) >= 0.0 {
        (hi, SolveRegime::ConvexityBoundary)
    } else {
        let mut a_t = lo;
        let mut b_t = hi;
        for _ in 0..200 {
            let mid = 0.5 * (a_t + b_t);
            if dphi_half(mid) >= 0.0 {
                a_t = mid;
            } else {
                b_t = mid;
            }
        }
        (0.5 * (a_t + b_t), SolveRegime::Interior)
    };
    // minimizer per cell
    let p = p_sum(t_star);
    let q = q_sum(t_star);
    let a_conf = conformal_join(ac, bc, 0.0, 0.0);
    let a_anti = conformal_join(0.0, 0.0, cc, dc);
    let mut minimizer: Vec<Mat2> = layout
        .phase_of_cell
        .iter()
        .map(|&ph| {
            let s = layout.sigmas[ph];
            a_conf * (1.0 / ((s - t_star) * p)) + a_anti * (1.0 / ((s + t_star) * q))
        })
        .collect();
    let mut certified = regime == SolveRegime::Interior;
    if regime == SolveRegime::ConvexityBoundary {
        // At the convexity boundary one matrix part costs (almost) nothing in
        // the softest phase, so a zero-sum oscillation of that part across
        // its cells restores the mean-determinant constraint at O(margin)
        // extra energy; this is exact in the per-cell model whenever the
        // phase has at least two cells. The oscillating part is the
        // anticonformal one at the left boundary (it lowers determinants)
        // and the conformal one at the right (it raises them).
        let w = layout.cell_weight();
        let mean_det: f64 = minimizer.iter().map(|b| w * b.determinant()).sum();
        let excess = mean_det - det_a;
        let soft: Vec<usize> = (0..minimizer.len())
            .filter(|&c| layout.cell_sigma(c) == s_min)
            .collect();
        let n_osc = 2 * (soft.len() / 2);
        let needed_sq = 2.0 * excess.abs() / (w * n_osc.max(1) as f64);
        if n_osc >= 2 && (excess > 0.0) == (t_star < 0.0) {
            let direction = if excess > 0.0 {
                conformal_join(0.0, 0.0, (needed_sq / 2.0).sqrt(), 0.0)
            } else {
                conformal_join((needed_sq / 2.0).sqrt(), 0.0, 0.0, 0.0)
            };
            for (k, &cell) in soft.iter().take(n_osc).enumerate() {
                let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
                minimizer[cell] += direction * sign;
            }
            certified = true;
        }
    }
    let w = layout.cell_weight();
    let primal: f64 = minimizer
        .iter()
        .enumerate()
        .map(|(cell, b)| layout.cell_sigma(cell) * w * (b.transpose() * b).trace())
        .sum();
    let dual = 2.0 * kappa / p + 2.0 * delta / q + 2.0 * t_star * det_a;
    // an infeasible boundary minimizer reports the dual value (a valid lower
    // bound for F1); a feasible one reports its own energy
    let residuals = residuals_of(layout, a, &minimizer);
    let feasible = residuals.mean_det <= 1e-6 * det_a.abs().max(1.0);
    let value = if feasible { primal } else { dual };
    certified = certified && (!feasible || (primal - dual).abs() <= 1e-7 * primal.abs().max(1.0));
    Ok(BoundResult {
        value,
        minimizer,
        constraint_residuals: residuals,
        multiplier: t_star,
        certified,
        regime,
    })
}

/// Per-phase norms of the two parts of the F2 candidate at multipliers
/// (u, v, t): cells where the unconstrained candidate has negative
/// determinant are pinned to det = 0, which collapses both part norms to
/// (u+v)/(4s).
fn f2_candidate(s: f64, u: f64, v: f64, t: f64) -> (f64, f64, bool) {
    let active = u * (s + t) < v * (s - t);
    if active {
        let c = (u + v) / (4.0 * s);
        (c, c, true)
    } else {
        (u / (2.0 * (s - t)), v / (2.0 * (s + t)), false)
    }
}

/// Places vectors of prescribed norms so they sum to `target` (2D inverse
/// kinematics, greedy): each vector keeps the residual inside the annulus
/// reachable by the remaining norms. Returns `None` when the norms cannot
/// reach the target.
fn compose_vectors(norms: &[f64], target: [f64; 2]) -> Option<Vec<[f64; 2]>> {
    let total: f64 = norms.iter().sum();
    let maxn = norms.iter().cloned().fold(0.0f64, f64::max);
    let t_len = (target[0] * target[0] + target[1] * target[1]).sqrt();
    if t_len > total + 1e-12 || t_len < (2.0 * maxn - total) - 1e-12 {
        return None;
    }
    let mut rest: Vec<f64> = norms.to_vec();
    let mut residual = target;
    let mut out = Vec::with_capacity(norms.len());
    for k in 0..norms.len() {
        let n = rest[k];
        let tail: f64 = rest[k + 1..].iter().sum();
        let tail_max = rest[k + 1..].iter().cloned().fold(0.0f64, f64::max);
        let r_len = (residual[0] * residual[0] + residual[1] * residual[1]).sqrt();
        // after placing this vector the residual length must lie within the
        // annulus [lo, hi] reachable by the tail
        let lo = (2.0 * tail_max - tail).max(0.0);
        let hi = tail;
        // choose the angle between this vector and the residual by the
        // cosine law so the new residual length lands inside [lo, hi]
        let desired = r_len.clamp((n - hi).abs().max(lo), (n + hi).min(n + r_len));
        let target_len = if r_len - n >= lo && r_len - n <= hi {
            r_len - n // pointing straight at the residual suffices
        } else {
            desired.clamp(lo, hi)
        };
        let cos_angle = if r_len > 1e-300 && n > 1e-300 {
            ((r_len * r_len + n * n - target_len * target_len) / (2.0 * r_len * n))
                .clamp(-1.0, 1.0)
        } else {
            1.0
        };
        let sin_angle = (1.0 - cos_angle * cos_angle).max(0.0).sqrt();
        let dir = if r_len > 1e-300 {
            [residual[0] / r_len, residual[1] / r_len]
        } else {
            [1.0, 0.0]
        };
        let v = [
            n * (dir[0] * cos_angle - dir[1] * sin_angle),
            n * (dir[0] * sin_angle + dir[1] * cos_angle),
        ];
        residual = [residual[0] - v[0], residual[1] - v[1]];
        out.push(v);
        let _ = k;
    }
    let miss = (residual[0] * residual[0] + residual[1] * residual[1]).sqrt();
    if miss <= 1e-9 * (1.0 + t_len + total) {
        Some(out)
    } else {
        None
    }
}

/// Exact F2 candidate in the degenerate regime t = -sigma_p: phases softer
/// than p are pinned to det 0, phase p carries a tunable anticonformal mass
/// with freely oriented directions, stiffer phases stay purely conformal.
/// Returns a certified result when all constraints and multiplier signs fit.
fn degenerate_candidate(
    layout: &PhaseLayout,
    a: &Mat2,
    s_p: f64,
) -> Option<BoundResult> {
    let (ac, bc, cc, dc) = conformal_split(a);
    let norm_ac = (2.0 * (ac * ac + bc * bc)).sqrt();
    let norm_ad = (2.0 * (cc * cc + dc * dc)).sqrt();
    let det_a = a.determinant();
    if norm_ac <= 1e-14 {
        return None;
    }
    let t = -s_p;
    let w = layout.cell_weight();
    let n_cells = layout.phase_of_cell.len();
    // conformal norms: x = u / (2 (s - t)) for s >= s_p, u / (4 s) for s < s_p
    let x_of = |s: f64, u: f64| {
        if s < s_p {
            u / (4.0 * s)
        } else {
            u / (2.0 * (s - t))
        }
    };
    let mean_c_coeff: f64 = (0..n_cells)
        .map(|c| w * x_of(layout.cell_sigma(c), 1.0))
        .sum();
    let u = norm_ac / mean_c_coeff;
    // determinant budget: inactive cells contribute x^2/2, pinned softer
    // phases 0, and phase p cells (x_p^2 - y^2)/2 with y to be chosen
    let x_p = u / (4.0 * s_p);
    let mut det_fixed = 0.0;
    let mut n_p = 0usize;
    for c in 0..n_cells {
        let s = layout.cell_sigma(c);
        if s > s_p {
            let x = x_of(s, u);
            det_fixed += w * x * x / 2.0;
        } else if s == s_p {
            n_p += 1;
            det_fixed += w * x_p * x_p / 2.0;
        }
    }
    if n_p == 0 {
        return None;
    }
    // sum of w * y_c^2 over phase-p cells that brings the mean det to det A
    let y_mass = 2.0 * (det_fixed - det_a);
    if y_mass < -1e-12 {
        return None; // determinant target unreachable from this phase
    }
    let y_each = (y_mass.max(0.0) / (w * n_p as f64)).sqrt();
    if y_each > x_p * (1.0 + 1e-12) {
        return None; // would need negative determinants
    }
    // anticonformal norms per cell: pinned phases carry x(s), phase p y_each
    let mut d_norms = Vec::with_capacity(n_cells);
    let mut d_cells = Vec::with_capacity(n_cells);
    for c in 0..n_cells {
        let s = layout.cell_sigma(c);
        if s < s_p {
            d_norms.push(x_of(s, u));
            d_cells.push(c);
        } else if s == s_p {
            d_norms.push(y_each);
            d_cells.push(c);
        }
    }
    // direction spread meeting the mean constraint sum w D_c = A_D
    let target = [cc / w, dc / w];
    let placed = compose_vectors(&d_norms, target)?;
    // assemble the minimizer
    let chat = if norm_ac > 0.0 {
        conformal_join(ac, bc, 0.0, 0.0) / (norm_ac / std::f64::consts::SQRT_2)
    } else {
        Mat2::zeros()
    };
    let mut minimizer = vec![Mat2::zeros(); n_cells];
    for c in 0..n_cells {
        let s = layout.cell_sigma(c);
        minimizer[c] = chat * (x_of(s, u) / std::f64::consts::SQRT_2);
    }
    for (k, &c) in d_cells.iter().enumerate() {
        // anticonformal component with coordinates (c, d) has Frobenius
        // norm sqrt(2 (c^2 + d^2)); `placed` carries the (c, d) pair scaled
        // so its Euclidean norm is the Frobenius norm; convert back
        let cdir = placed[k][0] / std::f64::consts::SQRT_2;
        let ddir = placed[k][1] / std::f64::consts::SQRT_2;
        minimizer[c] += conformal_join(0.0, 0.0, cdir, ddir);
    }
    let value: f64 = minimizer
        .iter()
        .enumerate()
        .map(|(cell, b)| layout.cell_sigma(cell) * w * (b.transpose() * b).trace())
        .sum();
    let dual = 0.5 * u * norm_ac + 2.0 * t * det_a;
    let residuals = residuals_of(layout, a, &minimizer);
    let certified = residuals.mean <= 1e-7 * (1.0 + a.norm())
        && residuals.mean_det <= 1e-6 * det_a.abs().max(1.0)
        && residuals.min_cell_det >= -1e-9
        && (value - dual).abs() <= 1e-6 * value.abs().max(1.0);
    if !certified {
        return None;
    }
    Some(BoundResult {
        value,
        minimizer,
        constraint_residuals: residuals,
        multiplier: t,
        certified: true,
        regime: SolveRegime::ConvexityBoundary,
    })
}

/// Improved bound F2: same objective and mean constraints as F1 plus
/// det B >= 0 per cell. Solved by an active-set Newton iteration in the
/// three scalars (|Lambda_C|, |Lambda_D|, t) starting from the F1 solution;
/// the result carries a duality certificate when the KKT conditions hold.
pub fn improved_bound(layout: &PhaseLayout, a: &Mat2) -> Result<BoundResult, BoundsError> {
    let det_a = a.determinant();
    if det_a < -1e-12 {
        return Err(BoundsError::Infeasible { det: det_a });
    }
    let f1 = translation_bound(layout, a)?;
    let det_scale = det_a.abs().max(1.0);
    if f1.constraint_residuals.min_cell_det >= -1e-10
        && f1.constraint_residuals.mean_det <= 1e-6 * det_scale
    {
        // determinant constraint inactive: F2 = F1
        return Ok(f1);
    }
    let phases = phase_weights(layout);
    let (ac, bc, cc, dc) = conformal_split(a);
    let norm_ac = (2.0 * (ac * ac + bc * bc)).sqrt(); // Frobenius norms
    let norm_ad = (2.0 * (cc * cc + dc * dc)).sqrt();
    if norm_ac <= 1e-14 {
        // A has no conformal part: det A <= 0; feasible only for A = 0
        let zero = vec![Mat2::zeros(); layout.phase_of_cell.len()];
        let residuals = residuals_of(layout, a, &zero);
        return Ok(BoundResult {
            value: 0.0,
            minimizer: zero,
            constraint_residuals: residuals,
            multiplier: 0.0,
            certified: true,
            regime: SolveRegime::Interior,
        });
    }
    let s_min = phases.iter().map(|&(s, _)| s).fold(f64::INFINITY, f64::min);
    let residual = |x: [f64; 3]| -> [f64; 3] {
        let [u, v, t] = x;
        let mut r = [-norm_ac, -norm_ad, -det_a];
        for &(s, w) in &phases {
            let (ncc, ncd, _) = f2_candidate(s, u, v, t);
            r[0] += w * ncc;
            r[1] += w * ncd;
            r[2] += w * 0.5 * (ncc * ncc - ncd * ncd);
        }
        r
    };
    let s_max = phases.iter().map(|&(s, _)| s).fold(0.0f64, f64::max);
    // inactive cells automatically keep t above s (v-u)/(u+v) > -s, so only
    // the upper side needs a hard clamp
    let clamp = |x: &mut [f64; 3]| {
        x[0] = x[0].max(0.0);
        x[1] = x[1].max(0.0);
        x[2] = x[2].clamp(-10.0 * s_max, s_min * (1.0 - 1e-9));
    };
    let norm3 = |r: &[f64; 3]| (r[0] * r[0] + r[1] * r[1] + r[2] * r[2]).sqrt();
    let p0 = phases.iter().map(|&(s, w)| w / (s - f1.multiplier)).sum::<f64>();
    let q0 = phases.iter().map(|&(s, w)| w / (s + f1.multiplier)).sum::<f64>();
    let starts = [
        [2.0 * norm_ac / p0, 2.0 * norm_ad / q0, f1.multiplier],
        [norm_ac * s_min, norm_ad * s_min, 0.0],
        [norm_ac * s_min, norm_ad * s_min, -0.5 * s_min],
    ];
    let mut best: Option<[f64; 3]> = None;
    let mut last_residual = f64::INFINITY;
    'starts: for start in starts {
        let mut x = start;
        clamp(&mut x);
        for _ in 0..200 {
            let r = residual(x);
            last_residual = norm3(&r);
            if last_residual <= 1e-11 * (1.0 + norm_ac + norm_ad + det_a.abs()) {
                best = Some(x);
                break 'starts;
            }
            // finite-difference Jacobian
            let mut jac = [[0.0f64; 3]; 3];
            for col in 0..3 {
                let step = 1e-7 * (x[col].abs() + 1e-3);
                let mut xp = x;
                xp[col] += step;
                clamp(&mut xp);
                let rp = residual(xp);
                let actual = xp[col] - x[col];
                for row in 0..3 {
                    jac[row][col] = if actual.abs() > 0.0 {
                        (rp[row] - r[row]) / actual
                    } else {
                        0.0
                    };
                }
            }
            let Some(delta_x) = solve3(&jac, &r) else {
                continue 'starts;
            };
            // damped update with backtracking on the residual norm
            let mut lambda = 1.0;
            let mut improved = false;
            for _ in 0..40 {
                let mut xn = [
                    x[0] - lambda * delta_x[0],
                    x[1] - lambda * delta_x[1],
                    x[2] - lambda * delta_x[2],
                ];
                clamp(&mut xn);
                if norm3(&residual(xn)) < last_residual {
                    x = xn;
                    improved = true;
                    break;
                }
                lambda *= 0.5;
            }
            if !improved {
                continue 'starts;
            }
        }
    }
    let Some([u, v, t]) = best else {
        return Err(BoundsError::MaxIterations {
            residual: last_residual,
            iterations: 200,
        });
    };
    // rebuild the per-cell minimizer and check the KKT signs
    let dir_c = conformal_join(ac, bc, 0.0, 0.0) / (norm_ac / 2.0f64.sqrt()) / 2.0f64.sqrt();
    let dir_d = if norm_ad > 1e-14 {
        conformal_join(0.0, 0.0, cc, dc) / (norm_ad / 2.0f64.sqrt()) / 2.0f64.sqrt()
    } else {
        Mat2::zeros()
    };
    let mut kkt_ok = true;
    let minimizer: Vec<Mat2> = layout
        .phase_of_cell
        .iter()
        .map(|&ph| {
            let s = layout.sigmas[ph];
            let (ncc, ncd, active) = f2_candidate(s, u, v, t);
            if active {
                // pinned multiplier tau must not fall below t
                let tau = s * (v - u) / (u + v);
                if tau < t - 1e-9 {
                    kkt_ok = false;
                }
            }
            dir_c * ncc + dir_d * ncd
        })
        .collect();
    let w = layout.cell_weight();
    let value: f64 = minimizer
        .iter()
        .enumerate()
        .map(|(cell, b)| layout.cell_sigma(cell) * w * (b.transpose() * b).trace())
        .sum();
    // weak-duality certificate: g(u,v,t) = u|A_C|/2 + v|A_D|/2 + 2 t det A
    // equals the primal value at a KKT point
    let dual = 0.5 * u * norm_ac + 0.5 * v * norm_ad + 2.0 * t * det_a;
    let certified = kkt_ok && (dual - value).abs() <= 1e-7 * value.abs().max(1.0);
    let residuals = residuals_of(layout, a, &minimizer);
    Ok(BoundResult {
        value,
        minimizer,
        constraint_residuals: residuals,
        multiplier: t,
        certified,
        regime: SolveRegime::Interior,
    })
}

fn solve3(m: &[[f64; 3]; 3], b: &[f64; 3]) -> Option<[f64; 3]> {
    let mut a = *m;
    let mut x = *b;
    for col in 0..3 {
        let mut pivot = col;
        for row in (col + 1)..3 {
            if a[row][col].abs() > a[pivot][col].abs() {
                pivot = row;
            }
        }
        if a[pivot][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, pivot);
        x.swap(col, pivot);
        for row in (col + 1)..3 {
            let f = a[row][col] / a[col][col];
            for k in col..3 {
                a[row][k] -= f * a[col][k];
            }
            x[row] -= f * x[col];
        }
    }
    for col in (0..3).rev() {
        for k in (col + 1)..3 {
            x[col] -= a[col][k] * x[k];
        }
        x[col] /= a[col][col];
    }
    Some(x)
}

/// FEM upper estimate of the inner infimum: solves the two Dirichlet
/// problems with data (A x)_i on the resolved cell grid and returns the
/// discrete energy (converging to F(A) from above under refinement).
pub fn cell_energy_upper(
    layout: &PhaseLayout,
    a: &Mat2,
    resolution: usize,
) -> Result<f64, BoundsError> {
    if resolution == 0 || resolution % layout.grid_n != 0 {
        return Err(BoundsError::ResolutionMismatch {
            resolution,
            grid_n: layout.grid_n,
        });
    }
    let mesh = Arc::new(unit_square_mesh(resolution));
    let field = layout.field();
    let a_owned = *a;
    let phi = VectorBoundaryDatum::from_fn(
        4.0,
        4 * resolution,
        move |t| a_owned * unit_square_boundary_point(t),
        move |t| {
            // boundary tangent of the unit square, scaled by A
            let tt = t.rem_euclid(4.0);
            let tangent = if tt < 1.0 {
                Vec2::new(1.0, 0.0)
            } else if tt < 2.0 {
                Vec2::new(0.0, 1.0)
            } else if tt < 3.0 {
                Vec2::new(-1.0, 0.0)
            } else {
                Vec2::new(0.0, -1.0)
            };
            a_owned * tangent
        },
    );
    let map = solve_mapping(&mesh, &field, &phi)?;
    Ok(mapping_energy(&map, &field))
}

/// The full chain F0 <= F1 <= F2 <= F_upper for one instance.
#[derive(Debug, Clone, Serialize)]
pub struct BoundChain {
    pub f0: f64,
    pub f1: f64,
    pub f2: f64,
    pub f_upper: f64,
    pub f1_regime: SolveRegime,
    pub f2_certified: bool,
}

/// Computes all four bounds and asserts the ordering within
/// tol = 1e-6 + `upper_allowance` (the allowance covers the discretization
/// excess of the FEM upper estimate, which converges from above).
pub fn bound_chain_report(
    layout: &PhaseLayout,
    a: &Mat2,
    resolution: usize,
    upper_allowance: f64,
) -> Result<BoundChain, BoundsError> {
    let f0 = wiener_bound(layout, a);
    let f1 = translation_bound(layout, a)?;
    let f2 = improved_bound(layout, a)?;
    let f_upper = cell_energy_upper(layout, a, resolution)?;
    let chain = BoundChain {
        f0,
        f1: f1.value,
        f2: f2.value,
        f_upper,
        f1_regime: f1.regime,
        f2_certified: f2.certified,
    };
    let tol = 1e-6 + upper_allowance;
    let scale = f0.abs().max(1.0);
    if !(f0 <= chain.f1 + 1e-8 * scale
        && chain.f1 <= chain.f2 + 1e-8 * scale
        && chain.f2 <= f_upper + tol * scale)
    {
        return Err(BoundsError::OrderingViolation {
            chain: format!(
                "F0 = {f0:.9}, F1 = {:.9}, F2 = {:.9}, F_upper = {:.9}",
                chain.f1, chain.f2, chain.f_upper
            ),
        });
    }
    Ok(chain)
}

/// Searches candidate loading matrices for a strictly positive F2 - F1 gap
/// (occurs with three or more phases for suitable A). Returns the best
/// candidate found with both bounds certified.
pub fn search_f2_gap(
    layout: &PhaseLayout,
    candidates: &[Mat2],
) -> Option<(Mat2, f64, f64)> {
    let mut best: Option<(Mat2, f64, f64)> = None;
    for a in candidates {
        let Ok(f1) = translation_bound(layout, a) else {
            continue;
        };
        let Ok(f2) = improved_bound(layout, a) else {
            continue;
        };
        if !(f1.certified && f2.certified) {
            continue;
        }
        let gap = f2.value - f1.value;
        if gap > 1e-9 * f1.value.abs().max(1.0)
            && best
                .as_ref()
                .map(|&(_, b1, b2)| gap > b2 - b1)
                .unwrap_or(true)
        {
            best = Some((*a, f1.value, f2.value));
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn two_phase_checker(grid_n: usize) -> PhaseLayout {
        let cells = (0..grid_n * grid_n)
            .map(|c| (c % grid_n + c / grid_n) % 2)
            .collect();
        PhaseLayout::new(grid_n, cells, vec![1.0, 2.0]).unwrap()
    }

    fn three_phase_thirds() -> PhaseLayout {
        let cells = (0..9).map(|c| c % 3).collect();
        PhaseLayout::new(3, cells, vec![1.0, 2.0, 5.0]).unwrap()
    }

    #[test]
    fn fractions_sum_to_one() {
        let layout = three_phase_thirds();
        let f = layout.fractions();
        assert_eq!(f, vec![1.0 / 3.0; 3]);
    }

    #[test]
    fn wiener_single_phase_identity() {
        let layout = PhaseLayout::single_phase(2, 1.0);
        assert_relative_eq!(wiener_bound(&layout, &Mat2::identity()), 2.0, epsilon = 1e-15);
    }

    #[test]
    fn wiener_two_phase_harmonic_mean() {
        // phases {1, 2} with p = 1/2: harmonic mean 4/3; A = diag(1, 0)
        let layout = two_phase_checker(4);
        let a = Mat2::new(1.0, 0.0, 0.0, 0.0);
        assert_relative_eq!(wiener_bound(&layout, &a), 4.0 / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn wiener_quadratic_scaling() {
        let layout = two_phase_checker(4);
        let a = Mat2::new(0.3, -0.2, 0.8, 1.1);
        let f = wiener_bound(&layout, &a);
        assert_relative_eq!(wiener_bound(&layout, &(a * 3.0)), 9.0 * f, epsilon = 1e-10);
    }

    #[test]
    fn wiener_permutation_invariant_for_equal_fractions() {
        let cells_a = vec![0, 0, 1, 1];
        let cells_b = vec![1, 1, 0, 0];
        let la = PhaseLayout::new(2, cells_a, vec![1.0, 3.0]).unwrap();
        let lb = PhaseLayout::new(2, cells_b, vec![1.0, 3.0]).unwrap();
        let a = Mat2::new(1.0, 0.2, -0.1, 0.7);
        assert_relative_eq!(wiener_bound(&la, &a), wiener_bound(&lb, &a), epsilon = 1e-14);
    }

    #[test]
    fn single_phase_f1_equals_f0() {
        let layout = PhaseLayout::single_phase(2, 2.0);
        let a = Mat2::new(1.0, 0.3, -0.4, 0.9);
        let f0 = wiener_bound(&layout, &a);
        let f1 = translation_bound(&layout, &a).unwrap();
        assert_relative_eq!(f1.value, f0, epsilon = 1e-9);
        assert_relative_eq!(f1.value, 2.0 * (a.transpose() * a).trace(), epsilon = 1e-9);
        // constraint inactive at B == A
        assert!((f1.minimizer[0] - a).norm() < 1e-7);
    }

    #[test]
    fn f1_dominates_f0_and_meets_constraints() {
        let layout = two_phase_checker(4);
        for a in [
            Mat2::identity(),
            Mat2::new(1.0, 0.0, 0.0, 0.3),
            Mat2::new(0.8, 0.4, -0.2, 1.1),
        ] {
            let f0 = wiener_bound(&layout, &a);
            let f1 = translation_bound(&layout, &a).unwrap();
            assert!(f1.value >= f0 - 1e-8, "F1 {} < F0 {f0}", f1.value);
            if f1.regime == SolveRegime::Interior {
                assert!(f1.constraint_residuals.mean < 1e-8);
                assert!(f1.constraint_residuals.mean_det < 1e-6);
            }
        }
    }

    #[test]
    fn f1_matches_coarse_random_search_two_phase() {
        // independent sanity anchor: random feasible candidates can only do
        // worse than the closed-form optimum (2-cell model, B2 = 2A - B1
        // with the determinant constraint enforced within a band)
        let layout = PhaseLayout::new(1, vec![0], vec![1.0]).unwrap();
        let _ = layout; // the real 2-cell instance below
        let cells = vec![0, 1, 0, 1];
        let layout = PhaseLayout::new(2, cells, vec![1.0, 2.0]).unwrap();
        let a = Mat2::identity();
        let f1 = translation_bound(&layout, &a).unwrap();
        let det_a = a.determinant();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let mut best = f64::INFINITY;
        for _ in 0..200_000 {
            let b1 = Mat2::new(
                rng.random_range(-2.0..2.0),
                rng.random_range(-2.0..2.0),
                rng.random_range(-2.0..2.0),
                rng.random_range(-2.0..2.0),
            );
            let b2 = a * 2.0 - b1;
            if (0.5 * (b1.determinant() + b2.determinant()) - det_a).abs() > 0.02 {
                continue;
            }
            let value = 0.5
                * (1.0 * (b1.transpose() * b1).trace() + 2.0 * (b2.transpose() * b2).trace());
            best = best.min(value);
        }
        assert!(
            best >= f1.value - 0.05 * f1.value,
            "sampled candidate {best} undercuts F1 {}",
            f1.value
        );
        assert!(
            best <= f1.value * 1.10,
            "sampling never came close: best {best} vs F1 {}",
            f1.value
        );
    }

    #[test]
    fn f2_equals_f1_when_inactive() {
        // A = I is conformal: the F1 minimizer has det > 0 per cell
        let layout = two_phase_checker(4);
        let a = Mat2::identity();
        let f1 = translation_bound(&layout, &a).unwrap();
        let f2 = improved_bound(&layout, &a).unwrap();
        assert_relative_eq!(f2.value, f1.value, epsilon = 1e-10);
    }

    #[test]
    fn f2_infeasible_for_negative_det() {
        let layout = two_phase_checker(4);
        let a = Mat2::new(1.0, 0.0, 0.0, -1.0);
        assert!(matches!(
            improved_bound(&layout, &a),
            Err(BoundsError::Infeasible { .. })
        ));
    }

    #[test]
    fn f2_strictly_above_f1_for_three_phases() {
        let layout = three_phase_thirds();
        let candidates: Vec<Mat2> = (0..40)
            .map(|k| Mat2::new(1.0, 0.0, 0.0, 0.025 * k as f64))
            .collect();
        let (a, f1, f2) = search_f2_gap(&layout, &candidates)
            .expect("three phases admit a loading with a strict F2 - F1 gap");
        assert!(
            f2 > f1 * (1.0 + 1e-6),
            "gap too small at A = {a:?}: F1 = {f1}, F2 = {f2}"
        );
    }

    #[test]
    fn f2_certified_and_feasible_when_active() {
        let layout = three_phase_thirds();
        let a = Mat2::new(1.0, 0.0, 0.0, 0.25);
        let f1 = translation_bound(&layout, &a).unwrap();
        let f2 = improved_bound(&layout, &a).unwrap();
        if (f2.value - f1.value).abs() > 1e-10 {
            assert!(f2.certified);
            assert!(f2.constraint_residuals.mean < 1e-7);
            assert!(f2.constraint_residuals.mean_det < 1e-6);
            assert!(f2.constraint_residuals.min_cell_det >= -1e-10);
            assert!(f2.value >= f1.value - 1e-8);
        }
    }

    #[test]
    fn single_phase_chain_all_equal() {
        let layout = PhaseLayout::single_phase(2, 1.5);
        let a = Mat2::new(1.0, 0.2, 0.1, 0.8);
        let chain = bound_chain_report(&layout, &a, 16, 0.0).unwrap();
        assert_relative_eq!(chain.f0, chain.f1, epsilon = 1e-8);
        assert_relative_eq!(chain.f1, chain.f2, epsilon = 1e-8);
        assert_relative_eq!(chain.f2, chain.f_upper, epsilon = 1e-8);
    }

    #[test]
    fn upper_energy_exact_for_single_phase() {
        let layout = PhaseLayout::single_phase(4, 3.0);
        let a = Mat2::new(0.7, -0.3, 0.5, 1.2);
        let e = cell_energy_upper(&layout, &a, 8).unwrap();
        assert_relative_eq!(e, 3.0 * (a.transpose() * a).trace(), epsilon = 1e-8);
    }

    #[test]
    fn upper_energy_nonincreasing_under_refinement() {
        let layout = two_phase_checker(4);
        let a = Mat2::identity();
        let coarse = cell_energy_upper(&layout, &a, 8).unwrap();
        let fine = cell_energy_upper(&layout, &a, 16).unwrap();
        assert!(fine <= coarse + 1e-9, "coarse {coarse}, fine {fine}");
        assert!(coarse >= wiener_bound(&layout, &a) - 1e-8);
    }

    #[test]
    fn chain_holds_on_random_layouts() {
        for seed in 0..5u64 {
            let layout = PhaseLayout::random(seed, 4, vec![1.0, 2.0]);
            let chain = bound_chain_report(&layout, &Mat2::identity(), 16, 0.0).unwrap();
            assert!(chain.f0 <= chain.f1 + 1e-8);
        }
        for seed in 5..8u64 {
            let layout = PhaseLayout::random(seed, 3, vec![1.0, 2.0, 5.0]);
            let a = Mat2::new(1.0, 0.0, 0.0, 0.25);
            let chain = bound_chain_report(&layout, &a, 15, 0.0).unwrap();
            assert!(chain.f1 <= chain.f2 + 1e-8);
        }
    }

    #[test]
    fn resolution_mismatch_rejected() {
        let layout = three_phase_thirds();
        assert!(matches!(
            cell_energy_upper(&layout, &Mat2::identity(), 16),
            Err(BoundsError::ResolutionMismatch { .. })
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        /// All bounds are quadratic under scaling of A.
        #[test]
        fn bounds_scale_quadratically(c in 0.2f64..3.0) {
            let layout = two_phase_checker(2);
            let a = Mat2::new(1.0, 0.1, -0.2, 0.6);
            let f0 = wiener_bound(&layout, &a);
            let f1 = translation_bound(&layout, &a).unwrap().value;
            let scaled = a * c;
            prop_assert!((wiener_bound(&layout, &scaled) - c * c * f0).abs() < 1e-8 * f0.max(1.0));
            let f1s = translation_bound(&layout, &scaled).unwrap().value;
            prop_assert!((f1s - c * c * f1).abs() < 1e-7 * (c * c * f1).abs().max(1.0));
        }

        /// Conformal split round-trips and reproduces the determinant.
        #[test]
        fn conformal_split_roundtrip(
            m11 in -2.0f64..2.0, m12 in -2.0f64..2.0,
            m21 in -2.0f64..2.0, m22 in -2.0f64..2.0,
        ) {
            let m = Mat2::new(m11, m12, m21, m22);
            let (a, b, c, d) = conformal_split(&m);
            prop_assert!((conformal_join(a, b, c, d) - m).norm() < 1e-12);
            prop_assert!(((a * a + b * b - c * c - d * d) - m.determinant()).abs() < 1e-12);
        }
    }
}
