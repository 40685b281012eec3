//! Planar domains: closed boundary parametrizations, sampled C^{1,alpha}
//! regularity checks, and deterministic structured triangulations.
//!
//! Boundary curves are stored as dense arclength samples `(t, point, unit
//! tangent)`; the polygonal chain through the samples *is* the computational
//! domain. Meshing is a structured radial-ring construction for star-shaped
//! domains: rings of nodes along scaled copies of the boundary polygon and a
//! fan at the center. It is bit-identical on re-runs.

use crate::Vec2;
use serde::Serialize;
use std::fmt;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("boundary curve needs at least {min} samples, got {got}")]
    TooFewSamples { min: usize, got: usize },
    #[error("boundary parameters must be strictly increasing (sample {index})")]
    NonIncreasingParameter { index: usize },
    #[error("curve does not close up: wrap gap {gap:.3e} exceeds tolerance {tol:.3e}")]
    NotClosed { gap: f64, tol: f64 },
    #[error("tangent at sample {index} is not unit length: |tau| = {norm}")]
    NonUnitTangent { index: usize, norm: f64 },
    #[error("boundary polygon is not simple: segments {a} and {b} intersect")]
    SelfIntersection { a: usize, b: usize },
    #[error("radius function is not strictly positive: min rho = {min_rho}")]
    NonPositiveRadius { min_rho: f64 },
    #[error("fewer than {min} samples inside the rho0-window at boundary point {index}")]
    InsufficientSamples { min: usize, index: usize },
    #[error("regularity data (rho0, M0, alpha) not set on this domain")]
    MissingRegularity,
    #[error("target h {h} outside (0, {max_h}) for this domain")]
    InvalidTargetH { h: f64, max_h: f64 },
    #[error("scaling center (origin) is not strictly inside the boundary polygon")]
    CenterOutside,
    #[error("mesh quality target unreachable: best min angle {best_angle_deg:.2} deg after {attempts} attempts")]
    MeshQualityFailure { best_angle_deg: f64, attempts: usize },
    #[error("mesh is not conforming: edge ({a},{b}) shared by {count} triangles")]
    NonConforming { a: usize, b: usize, count: usize },
    #[error("triangle {index} has non-positive signed area {area:.3e}")]
    InvertedElement { index: usize, area: f64 },
    #[error("boundary node {node} lies off the boundary curve by {dist:.3e}")]
    BoundaryNodeOffCurve { node: usize, dist: f64 },
    #[error("mesh file parse error at line {line}: {message}")]
    MeshParse { line: usize, message: String },
}

/// One boundary sample: arclength parameter, position, unit tangent.
#[derive(Debug, Clone, Copy)]
pub struct BoundarySample {
    pub t: f64,
    pub point: Vec2,
    pub tangent: Vec2,
}

/// A simple closed curve given by ordered arclength samples.
#[derive(Debug, Clone)]
pub struct BoundaryCurve {
    pub samples: Vec<BoundarySample>,
    pub total_length: f64,
    pub closed: bool,
}

impl BoundaryCurve {
    /// Validates the invariants (increasing parameters, closure, unit
    /// tangents, simplicity) and wraps the samples.
    pub fn new(samples: Vec<BoundarySample>, total_length: f64) -> Result<Self, GeometryError> {
        if samples.len() < 3 {
            return Err(GeometryError::TooFewSamples {
                min: 3,
                got: samples.len(),
            });
        }
        for i in 1..samples.len() {
            if samples[i].t <= samples[i - 1].t {
                return Err(GeometryError::NonIncreasingParameter { index: i });
            }
        }
        let gap = (samples[0].point - samples[samples.len() - 1].point).norm();
        let seg = total_length - samples[samples.len() - 1].t + samples[0].t;
        // the last sample wraps to the first over a parameter gap `seg`
        let tol = 1e-10 * total_length;
        if gap > seg + tol || samples[samples.len() - 1].t >= total_length {
            return Err(GeometryError::NotClosed { gap, tol });
        }
        for (i, s) in samples.iter().enumerate() {
            let n = s.tangent.norm();
            if (n - 1.0).abs() > 1e-8 {
                return Err(GeometryError::NonUnitTangent { index: i, norm: n });
            }
        }
        let curve = BoundaryCurve {
            samples,
            total_length,
            closed: true,
        };
        curve.check_simple()?;
        Ok(curve)
    }

    fn check_simple(&self) -> Result<(), GeometryError> {
        let n = self.samples.len();
        let pts: Vec<Vec2> = self.samples.iter().map(|s| s.point).collect();
        for i in 0..n {
            let (a1, a2) = (pts[i], pts[(i + 1) % n]);
            let (alo_x, ahi_x) = (a1.x.min(a2.x), a1.x.max(a2.x));
            let (alo_y, ahi_y) = (a1.y.min(a2.y), a1.y.max(a2.y));
            for j in (i + 2)..n {
                if i == 0 && j == n - 1 {
                    continue; // adjacent around the wrap
                }
                let (b1, b2) = (pts[j], pts[(j + 1) % n]);
                if b1.x.max(b2.x) < alo_x
                    || b1.x.min(b2.x) > ahi_x
                    || b1.y.max(b2.y) < alo_y
                    || b1.y.min(b2.y) > ahi_y
                {
                    continue;
                }
                if segments_cross(a1, a2, b1, b2) {
                    return Err(GeometryError::SelfIntersection { a: i, b: j });
                }
            }
        }
        Ok(())
    }

    /// Position on the polygonal chain at parameter `t` (periodic).
    pub fn point_at(&self, t: f64) -> Vec2 {
        let (i, j, w) = self.segment_of(t);
        self.samples[i].point * (1.0 - w) + self.samples[j].point * w
    }

    /// Interpolated unit tangent at parameter `t` (periodic).
    pub fn tangent_at(&self, t: f64) -> Vec2 {
        let (i, j, w) = self.segment_of(t);
        let v = self.samples[i].tangent * (1.0 - w) + self.samples[j].tangent * w;
        let n = v.norm();
        if n > 0.0 {
            v / n
        } else {
            self.samples[i].tangent
        }
    }

    fn segment_of(&self, t: f64) -> (usize, usize, f64) {
        let tt = t.rem_euclid(self.total_length);
        let ts: Vec<f64> = self.samples.iter().map(|s| s.t).collect();
        let n = ts.len();
        let idx = match ts.binary_search_by(|v| v.partial_cmp(&tt).unwrap()) {
            Ok(k) => return (k, k, 0.0),
            Err(0) => n - 1, // before first sample parameter: wrap segment
            Err(k) => k - 1,
        };
        let j = (idx + 1) % n;
        let t0 = ts[idx];
        let t1 = if j == 0 {
            self.total_length + ts[0]
        } else {
            ts[j]
        };
        let tt = if tt < t0 { tt + self.total_length } else { tt };
        let w = if t1 > t0 { (tt - t0) / (t1 - t0) } else { 0.0 };
        (idx, j, w.clamp(0.0, 1.0))
    }

    /// Distance from `p` to the polygonal chain.
    pub fn distance_to(&self, p: Vec2) -> f64 {
        let n = self.samples.len();
        let mut best = f64::INFINITY;
        for i in 0..n {
            let a = self.samples[i].point;
            let b = self.samples[(i + 1) % n].point;
            best = best.min(point_segment_distance(p, a, b));
        }
        best
    }

    /// Maximum pairwise sample distance.
    pub fn diameter(&self) -> f64 {
        // bounding-box based lower estimate refined over hull-ish extremes is
        // overkill here; the sample counts stay small enough for O(n^2) only
        // on coarse curves, so use the rectangle extent (<= true diameter).
        let xs: Vec<f64> = self.samples.iter().map(|s| s.point.x).collect();
        let ys: Vec<f64> = self.samples.iter().map(|s| s.point.y).collect();
        let w = xs.iter().cloned().fold(f64::MIN, f64::max)
            - xs.iter().cloned().fold(f64::MAX, f64::min);
        let h = ys.iter().cloned().fold(f64::MIN, f64::max)
            - ys.iter().cloned().fold(f64::MAX, f64::min);
        w.max(h)
    }

    /// Signed curvature samples from 4th-order periodic differences of the
    /// tangent: kappa = Phi'' . (J Phi'), positive for counterclockwise
    /// strictly convex curves.
    pub fn curvature_samples(&self) -> Vec<f64> {
        let n = self.samples.len();
        let mut out = Vec::with_capacity(n);
        for i in 0..n {
            let tm2 = self.samples[(i + n - 2) % n].tangent;
            let tm1 = self.samples[(i + n - 1) % n].tangent;
            let tp1 = self.samples[(i + 1) % n].tangent;
            let tp2 = self.samples[(i + 2) % n].tangent;
            // uniform spacing assumed (constructors sample uniformly)
            let dt = self.total_length / n as f64;
            let dd = (tm2 - tm1 * 8.0 + tp1 * 8.0 - tp2) / (12.0 * dt);
            let tau = self.samples[i].tangent;
            let jtau = Vec2::new(-tau.y, tau.x);
            out.push(dd.dot(&jtau));
        }
        out
    }
}

fn segments_cross(a1: Vec2, a2: Vec2, b1: Vec2, b2: Vec2) -> bool {
    let d1 = orient(b1, b2, a1);
    let d2 = orient(b1, b2, a2);
    let d3 = orient(a1, a2, b1);
    let d4 = orient(a1, a2, b2);
    ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
}

fn orient(a: Vec2, b: Vec2, c: Vec2) -> f64 {
    (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x)
}

fn point_segment_distance(p: Vec2, a: Vec2, b: Vec2) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_squared();
    if len2 == 0.0 {
        return (p - a).norm();
    }
    let s = ((p - a).dot(&ab) / len2).clamp(0.0, 1.0);
    (p - (a + ab * s)).norm()
}

/// Quantitative C^{1,alpha} regularity data: window radius rho0, norm bound
/// M0, Hoelder exponent alpha.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct RegularityParams {
    pub rho0: f64,
    pub m0: f64,
    pub alpha: f64,
}

/// A planar domain: boundary curve plus optional regularity data.
#[derive(Debug, Clone)]
pub struct DomainSpec {
    pub boundary: BoundaryCurve,
    pub regularity: Option<RegularityParams>,
}

impl DomainSpec {
    pub fn with_regularity(mut self, rho0: f64, m0: f64, alpha: f64) -> Self {
        self.regularity = Some(RegularityParams { rho0, m0, alpha });
        self
    }
}

/// Unit disk sampled uniformly in arclength, counterclockwise.
pub fn make_disk_domain(n_boundary: usize) -> Result<DomainSpec, GeometryError> {
    if n_boundary < 16 {
        return Err(GeometryError::TooFewSamples {
            min: 16,
            got: n_boundary,
        });
    }
    let total = 2.0 * std::f64::consts::PI;
    let samples = (0..n_boundary)
        .map(|i| {
            let t = total * i as f64 / n_boundary as f64;
            BoundarySample {
                t,
                point: Vec2::new(t.cos(), t.sin()),
                tangent: Vec2::new(-t.sin(), t.cos()),
            }
        })
        .collect();
    Ok(DomainSpec {
        boundary: BoundaryCurve::new(samples, total)?,
        regularity: None,
    })
}

/// Star-shaped domain `theta -> rho(theta) (cos theta, sin theta)`,
/// reparametrized by arclength.
///
/// The speed is integrated with composite Simpson quadrature (8 subpoints per
/// output interval); the radius derivative uses 4th-order central differences,
/// so `radius_fn` must be smooth and 2*pi-periodic.
pub fn make_star_domain(
    radius_fn: &dyn Fn(f64) -> f64,
    n_boundary: usize,
) -> Result<DomainSpec, GeometryError> {
    if n_boundary < 16 {
        return Err(GeometryError::TooFewSamples {
            min: 16,
            got: n_boundary,
        });
    }
    let two_pi = 2.0 * std::f64::consts::PI;
    // positivity scan
    let mut min_rho = f64::INFINITY;
    for i in 0..(8 * n_boundary) {
        min_rho = min_rho.min(radius_fn(two_pi * i as f64 / (8 * n_boundary) as f64));
    }
    if min_rho <= 0.0 {
        return Err(GeometryError::NonPositiveRadius { min_rho });
    }
    let drho = |theta: f64| {
        let h = 1e-4;
        (8.0 * (radius_fn(theta + h) - radius_fn(theta - h))
            - (radius_fn(theta + 2.0 * h) - radius_fn(theta - 2.0 * h)))
            / (12.0 * h)
    };
    let speed = |theta: f64| {
        let r = radius_fn(theta);
        let rp = drho(theta);
        (r * r + rp * rp).sqrt()
    };
    // cumulative arclength on a fine Simpson grid: 8 panels per output interval
    let panels = 8 * n_boundary;
    let dtheta = two_pi / panels as f64;
    let mut cum = Vec::with_capacity(panels + 1);
    cum.push(0.0);
    let mut acc = 0.0;
    for k in 0..panels {
        let a = k as f64 * dtheta;
        acc += dtheta / 6.0 * (speed(a) + 4.0 * speed(a + 0.5 * dtheta) + speed(a + dtheta));
        cum.push(acc);
    }
    let total_length = acc;
    // invert s(theta) at the uniform arclength targets
    let mut samples = Vec::with_capacity(n_boundary);
    for i in 0..n_boundary {
        let target = total_length * i as f64 / n_boundary as f64;
        let k = match cum.binary_search_by(|v| v.partial_cmp(&target).unwrap()) {
            Ok(k) => k,
            Err(k) => k.saturating_sub(1),
        };
        // Newton refinement of theta with s'(theta) = speed(theta)
        let mut theta = if k + 1 < cum.len() && cum[k + 1] > cum[k] {
            k as f64 * dtheta + dtheta * (target - cum[k]) / (cum[k + 1] - cum[k])
        } else {
            k as f64 * dtheta
        };
        for _ in 0..4 {
            // local Simpson estimate of s(theta) from the bracketing knot
            let base = k as f64 * dtheta;
            let w = theta - base;
            let local = w / 6.0 * (speed(base) + 4.0 * speed(base + 0.5 * w) + speed(base + w));
            let s_here = cum[k] + local;
            theta -= (s_here - target) / speed(theta);
        }
        let r = radius_fn(theta);
        let rp = drho(theta);
        let (c, s) = (theta.cos(), theta.sin());
        let deriv = Vec2::new(rp * c - r * s, rp * s + r * c);
        samples.push(BoundarySample {
            t: target,
            point: Vec2::new(r * c, r * s),
            tangent: deriv / deriv.norm(),
        });
    }
    Ok(DomainSpec {
        boundary: BoundaryCurve::new(samples, total_length)?,
        regularity: None,
    })
}

/// Result of the sampled C^{1,alpha} verification.
#[derive(Debug, Clone, Serialize)]
pub struct RegularityReport {
    pub passes: bool,
    /// Worst (three-term norm) / (M0 * rho0) over all boundary points.
    pub worst_ratio: f64,
    pub worst_point_index: usize,
    /// Points whose window samples failed to form a graph over the tangent.
    pub graph_failures: usize,
}

/// Sampled verification of the local-graph C^{1,alpha} bound.
///
/// At every boundary sample the nearby samples are rotated into the tangent
/// frame, the local graph `psi` is read off, and
/// `sup|psi| + rho0 sup|psi'| + rho0^{1+alpha} [psi']_alpha <= M0 rho0`
/// is checked. The Hoelder seminorm is estimated by the max difference
/// quotient over sample pairs. This is a verification, not a proof.
pub fn check_c1alpha(domain: &DomainSpec) -> Result<RegularityReport, GeometryError> {
    let reg = domain.regularity.ok_or(GeometryError::MissingRegularity)?;
    let curve = &domain.boundary;
    let n = curve.samples.len();
    let mut worst_ratio: f64 = 0.0;
    let mut worst_index = 0usize;
    let mut graph_failures = 0usize;
    for p in 0..n {
        let center = curve.samples[p].point;
        let tau = curve.samples[p].tangent;
        let nu = Vec2::new(-tau.y, tau.x); // inward for counterclockwise curves
        // contiguous arc of samples around p staying inside the ball
        let mut lo = 0usize;
        while lo + 1 < n / 2 {
            let q = curve.samples[(p + n - lo - 1) % n].point;
            if (q - center).norm() <= reg.rho0 {
                lo += 1;
            } else {
                break;
            }
        }
        let mut hi = 0usize;
        while hi + 1 < n / 2 {
            let q = curve.samples[(p + hi + 1) % n].point;
            if (q - center).norm() <= reg.rho0 {
                hi += 1;
            } else {
                break;
            }
        }
        let count = lo + hi + 1;
        if count < 8 {
            return Err(GeometryError::InsufficientSamples { min: 8, index: p });
        }
        let mut xi = Vec::with_capacity(count);
        let mut eta = Vec::with_capacity(count);
        for k in 0..count {
            let q = curve.samples[(p + n - lo + k) % n].point;
            let d = q - center;
            xi.push(d.dot(&tau));
            eta.push(d.dot(&nu));
        }
        // graph check: xi strictly increasing along the arc
        let monotone = xi.windows(2).all(|w| w[1] > w[0]);
        if !monotone {
            graph_failures += 1;
            worst_ratio = f64::INFINITY;
            worst_index = p;
            continue;
        }
        let sup_psi = eta.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let mut slopes = Vec::with_capacity(count - 1);
        let mut mids = Vec::with_capacity(count - 1);
        for k in 0..count - 1 {
            slopes.push((eta[k + 1] - eta[k]) / (xi[k + 1] - xi[k]));
            mids.push(0.5 * (xi[k + 1] + xi[k]));
        }
        let sup_dpsi = slopes.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let mut seminorm: f64 = 0.0;
        for a in 0..slopes.len() {
            for b in (a + 1)..slopes.len() {
                let dq = (slopes[a] - slopes[b]).abs() / (mids[a] - mids[b]).abs().powf(reg.alpha);
                seminorm = seminorm.max(dq);
            }
        }
        let lhs = sup_psi + reg.rho0 * sup_dpsi + reg.rho0.powf(1.0 + reg.alpha) * seminorm;
        let ratio = lhs / (reg.m0 * reg.rho0);
        if ratio > worst_ratio {
            worst_ratio = ratio;
            worst_index = p;
        }
    }
    Ok(RegularityReport {
        passes: worst_ratio <= 1.0 + 1e-12,
        worst_ratio,
        worst_point_index: worst_index,
        graph_failures,
    })
}

/// Conforming triangulation with boundary parameters recorded.
#[derive(Debug, Clone)]
pub struct Mesh {
    pub nodes: Vec<Vec2>,
    pub triangles: Vec<[usize; 3]>,
    /// (node index, arclength parameter on the boundary curve)
    pub boundary_nodes: Vec<(usize, f64)>,
    /// measured max element diameter
    pub h: f64,
}

impl Mesh {
    pub fn triangle_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangles[t];
        0.5 * orient(self.nodes[a], self.nodes[b], self.nodes[c])
    }

    pub fn centroid(&self, t: usize) -> Vec2 {
        let [a, b, c] = self.triangles[t];
        (self.nodes[a] + self.nodes[b] + self.nodes[c]) / 3.0
    }

    pub fn min_angle_deg(&self) -> f64 {
        let mut best = f64::INFINITY;
        for tri in &self.triangles {
            let p = [
                self.nodes[tri[0]],
                self.nodes[tri[1]],
                self.nodes[tri[2]],
            ];
            for k in 0..3 {
                let a = p[(k + 1) % 3] - p[k];
                let b = p[(k + 2) % 3] - p[k];
                let ang = (a.dot(&b) / (a.norm() * b.norm())).clamp(-1.0, 1.0).acos();
                best = best.min(ang.to_degrees());
            }
        }
        best
    }

    pub fn max_element_diameter(&self) -> f64 {
        let mut h: f64 = 0.0;
        for tri in &self.triangles {
            for k in 0..3 {
                let e = (self.nodes[tri[k]] - self.nodes[tri[(k + 1) % 3]]).norm();
                h = h.max(e);
            }
        }
        h
    }

    /// The closed polygon through the boundary nodes, in parameter order.
    pub fn boundary_polygon(&self) -> Vec<Vec2> {
        let mut bn = self.boundary_nodes.clone();
        bn.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap());
        bn.iter().map(|&(i, _)| self.nodes[i]).collect()
    }

    /// Distance from `p` to the mesh boundary polygon.
    pub fn distance_to_boundary(&self, p: Vec2) -> f64 {
        let poly = self.boundary_polygon();
        let n = poly.len();
        let mut best = f64::INFINITY;
        for i in 0..n {
            best = best.min(point_segment_distance(p, poly[i], poly[(i + 1) % n]));
        }
        best
    }

    /// Max distance between boundary nodes (domain diameter).
    pub fn domain_diameter(&self) -> f64 {
        let poly = self.boundary_polygon();
        let mut d: f64 = 0.0;
        for i in 0..poly.len() {
            for j in (i + 1)..poly.len() {
                d = d.max((poly[i] - poly[j]).norm());
            }
        }
        d
    }

    /// Shoelace area of the boundary polygon.
    pub fn polygon_area(&self) -> f64 {
        let poly = self.boundary_polygon();
        let n = poly.len();
        let mut s = 0.0;
        for i in 0..n {
            let a = poly[i];
            let b = poly[(i + 1) % n];
            s += a.x * b.y - b.x * a.y;
        }
        0.5 * s
    }

    /// Checks orientation, conformity and boundary-node placement.
    pub fn validate(&self, curve: Option<&BoundaryCurve>) -> Result<(), GeometryError> {
        for (i, _) in self.triangles.iter().enumerate() {
            let area = self.triangle_area(i);
            if area <= 0.0 {
                return Err(GeometryError::InvertedElement { index: i, area });
            }
        }
        // conformity: interior edges shared by exactly 2, boundary edges by 1
        let mut edges: std::collections::BTreeMap<(usize, usize), usize> =
            std::collections::BTreeMap::new();
        for tri in &self.triangles {
            for k in 0..3 {
                let a = tri[k];
                let b = tri[(k + 1) % 3];
                let key = (a.min(b), a.max(b));
                *edges.entry(key).or_insert(0) += 1;
            }
        }
        let on_boundary: std::collections::BTreeSet<usize> =
            self.boundary_nodes.iter().map(|&(i, _)| i).collect();
        for (&(a, b), &count) in &edges {
            let boundary_edge = on_boundary.contains(&a) && on_boundary.contains(&b);
            if count > 2 || (count == 1 && !boundary_edge) {
                return Err(GeometryError::NonConforming { a, b, count });
            }
        }
        if let Some(curve) = curve {
            let tol = 1e-8 * curve.total_length;
            for &(node, _) in &self.boundary_nodes {
                let d = curve.distance_to(self.nodes[node]);
                if d > tol {
                    return Err(GeometryError::BoundaryNodeOffCurve { node, dist: d });
                }
            }
        }
        Ok(())
    }

    /// Line-oriented text format: header "nodes N triangles M", then node and
    /// triangle lines, then "b idx t" lines for boundary nodes.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        s.push_str(&format!(
            "nodes {} triangles {}\n",
            self.nodes.len(),
            self.triangles.len()
        ));
        for p in &self.nodes {
            s.push_str(&format!("{} {}\n", p.x, p.y));
        }
        for t in &self.triangles {
            s.push_str(&format!("{} {} {}\n", t[0], t[1], t[2]));
        }
        for &(i, t) in &self.boundary_nodes {
            s.push_str(&format!("b {} {}\n", i, t));
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self, GeometryError> {
        let mut lines = text.lines().enumerate();
        let (lno, header) = lines
            .next()
            .ok_or_else(|| GeometryError::MeshParse {
                line: 1,
                message: "empty file".into(),
            })?;
        let parts: Vec<&str> = header.split_whitespace().collect();
        let bad = |line: usize, message: &str| GeometryError::MeshParse {
            line: line + 1,
            message: message.to_string(),
        };
        if parts.len() != 4 || parts[0] != "nodes" || parts[2] != "triangles" {
            return Err(bad(lno, "expected header 'nodes N triangles M'"));
        }
        let n: usize = parts[1].parse().map_err(|_| bad(lno, "bad node count"))?;
        let m: usize = parts[3]
            .parse()
            .map_err(|_| bad(lno, "bad triangle count"))?;
        let mut nodes = Vec::with_capacity(n);
        for _ in 0..n {
            let (lno, line) = lines.next().ok_or_else(|| bad(0, "truncated node list"))?;
            let xy: Vec<&str> = line.split_whitespace().collect();
            if xy.len() != 2 {
                return Err(bad(lno, "node line must be 'x y'"));
            }
            let x: f64 = xy[0].parse().map_err(|_| bad(lno, "bad x"))?;
            let y: f64 = xy[1].parse().map_err(|_| bad(lno, "bad y"))?;
            nodes.push(Vec2::new(x, y));
        }
        let mut triangles = Vec::with_capacity(m);
        for _ in 0..m {
            let (lno, line) = lines
                .next()
                .ok_or_else(|| bad(0, "truncated triangle list"))?;
            let ijk: Vec<&str> = line.split_whitespace().collect();
            if ijk.len() != 3 {
                return Err(bad(lno, "triangle line must be 'i j k'"));
            }
            let mut t = [0usize; 3];
            for (slot, tok) in t.iter_mut().zip(&ijk) {
                *slot = tok.parse().map_err(|_| bad(lno, "bad index"))?;
                if *slot >= n {
                    return Err(bad(lno, "index out of range"));
                }
            }
            triangles.push(t);
        }
        let mut boundary_nodes = Vec::new();
        for (lno, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let toks: Vec<&str> = line.split_whitespace().collect();
            if toks.len() != 3 || toks[0] != "b" {
                return Err(bad(lno, "expected 'b idx t'"));
            }
            let idx: usize = toks[1].parse().map_err(|_| bad(lno, "bad index"))?;
            let t: f64 = toks[2].parse().map_err(|_| bad(lno, "bad parameter"))?;
            boundary_nodes.push((idx, t));
        }
        let mut mesh = Mesh {
            nodes,
            triangles,
            boundary_nodes,
            h: 0.0,
        };
        mesh.h = mesh.max_element_diameter();
        Ok(mesh)
    }
}

/// Structured radial-ring triangulation of a star-shaped domain.
///
/// Rings of nodes are placed along scaled copies of the boundary polygon
/// (scaling about the origin) with node counts proportional to the scale,
/// stitched by a deterministic parameter merge, and fanned at the center.
/// Retries a few ring counts if the 20-degree minimum angle or the
/// 1.5*target_h diameter bound is missed.
pub fn triangulate(domain: &DomainSpec, target_h: f64) -> Result<Mesh, GeometryError> {
    let curve = &domain.boundary;
    let diam = curve.diameter();
    if !(target_h > 0.0 && target_h < diam / 4.0) {
        return Err(GeometryError::InvalidTargetH {
            h: target_h,
            max_h: diam / 4.0,
        });
    }
    if !point_in_polygon(
        Vec2::new(0.0, 0.0),
        &curve.samples.iter().map(|s| s.point).collect::<Vec<_>>(),
    ) {
        return Err(GeometryError::CenterOutside);
    }
    let length = curve.total_length;
    let n_b = ((length / target_h).ceil() as usize).max(16);
    let r_ref = curve
        .samples
        .iter()
        .map(|s| s.point.norm())
        .fold(0.0f64, f64::max);
    let base_rings = ((r_ref / (0.866 * target_h)).ceil() as usize).max(2);
    let mut best: Option<(f64, Mesh)> = None;
    let candidates = [
        base_rings,
        base_rings + 1,
        base_rings.saturating_sub(1).max(2),
        base_rings + 2,
        base_rings + 3,
    ];
    for &rings in &candidates {
        let mesh = build_ring_mesh(curve, n_b, rings);
        let angle = mesh.min_angle_deg();
        let ok_h = mesh.h <= 1.5 * target_h;
        let ok_area = (0..mesh.triangles.len()).all(|i| mesh.triangle_area(i) > 0.0);
        if angle >= 20.0 && ok_h && ok_area {
            mesh.validate(Some(curve))?;
            return Ok(mesh);
        }
        let score = if ok_h && ok_area { angle } else { -1.0 };
        if best.as_ref().map(|(a, _)| score > *a).unwrap_or(true) {
            best = Some((score, mesh));
        }
    }
    Err(GeometryError::MeshQualityFailure {
        best_angle_deg: best.map(|(a, _)| a).unwrap_or(0.0),
        attempts: candidates.len(),
    })
}

fn build_ring_mesh(curve: &BoundaryCurve, n_b: usize, rings: usize) -> Mesh {
    let length = curve.total_length;
    let mut nodes = vec![Vec2::new(0.0, 0.0)]; // center
    let mut ring_ids: Vec<Vec<usize>> = Vec::with_capacity(rings);
    let mut ring_ts: Vec<Vec<f64>> = Vec::with_capacity(rings);
    for j in 1..=rings {
        let scale = j as f64 / rings as f64;
        let count = if j == rings {
            n_b
        } else {
            ((n_b as f64 * scale).ceil() as usize).clamp(8.min(n_b), n_b)
        };
        let mut ids = Vec::with_capacity(count);
        let mut ts = Vec::with_capacity(count);
        for i in 0..count {
            let t = length * i as f64 / count as f64;
            ids.push(nodes.len());
            nodes.push(curve.point_at(t) * scale);
            ts.push(t);
        }
        ring_ids.push(ids);
        ring_ts.push(ts);
    }
    let mut triangles = Vec::new();
    // center fan
    let first = &ring_ids[0];
    for k in 0..first.len() {
        triangles.push([0, first[k], first[(k + 1) % first.len()]]);
    }
    // annuli
    for j in 0..rings - 1 {
        stitch_rings(
            &mut triangles,
            &ring_ids[j],
            &ring_ts[j],
            &ring_ids[j + 1],
            &ring_ts[j + 1],
            length,
        );
    }
    let boundary_nodes: Vec<(usize, f64)> = ring_ids[rings - 1]
        .iter()
        .zip(&ring_ts[rings - 1])
        .map(|(&i, &t)| (i, t))
        .collect();
    let mut mesh = Mesh {
        nodes,
        triangles,
        boundary_nodes,
        h: 0.0,
    };
    mesh.h = mesh.max_element_diameter();
    mesh
}

/// Triangulates the annulus between two node rings by merging them in
/// parameter order. Produces exactly `inner.len() + outer.len()` triangles.
fn stitch_rings(
    triangles: &mut Vec<[usize; 3]>,
    inner_ids: &[usize],
    inner_ts: &[f64],
    outer_ids: &[usize],
    outer_ts: &[f64],
    period: f64,
) {
    let na = inner_ids.len();
    let nb = outer_ids.len();
    let ta = |i: usize| {
        if i < na {
            inner_ts[i]
        } else {
            inner_ts[i - na] + period
        }
    };
    let tb = |k: usize| {
        if k < nb {
            outer_ts[k]
        } else {
            outer_ts[k - nb] + period
        }
    };
    let mut i = 0usize;
    let mut k = 0usize;
    while i < na || k < nb {
        let advance_outer = if k >= nb {
            false
        } else if i >= na {
            true
        } else {
            tb(k + 1) <= ta(i + 1)
        };
        if advance_outer {
            triangles.push([inner_ids[i % na], outer_ids[k % nb], outer_ids[(k + 1) % nb]]);
            k += 1;
        } else {
            triangles.push([inner_ids[i % na], outer_ids[k % nb], inner_ids[(i + 1) % na]]);
            i += 1;
        }
    }
}

fn point_in_polygon(p: Vec2, poly: &[Vec2]) -> bool {
    let mut inside = false;
    let n = poly.len();
    for i in 0..n {
        let a = poly[i];
        let b = poly[(i + 1) % n];
        if (a.y > p.y) != (b.y > p.y) {
            let x = a.x + (p.y - a.y) / (b.y - a.y) * (b.x - a.x);
            if p.x < x {
                inside = !inside;
            }
        }
    }
    inside
}

/// Uniform right-triangle mesh of the unit square, `n` cells per side.
///
/// Boundary parameters run counterclockwise from (0,0): bottom [0,1),
/// right [1,2), top [2,3), left [3,4).
pub fn unit_square_mesh(n: usize) -> Mesh {
    let np = n + 1;
    let mut nodes = Vec::with_capacity(np * np);
    for j in 0..np {
        for i in 0..np {
            nodes.push(Vec2::new(i as f64 / n as f64, j as f64 / n as f64));
        }
    }
    let id = |i: usize, j: usize| j * np + i;
    let mut triangles = Vec::with_capacity(2 * n * n);
    for j in 0..n {
        for i in 0..n {
            let a = id(i, j);
            let b = id(i + 1, j);
            let c = id(i, j + 1);
            let d = id(i + 1, j + 1);
            triangles.push([a, b, d]);
            triangles.push([a, d, c]);
        }
    }
    let mut boundary_nodes = Vec::with_capacity(4 * n);
    for i in 0..n {
        boundary_nodes.push((id(i, 0), i as f64 / n as f64));
    }
    for j in 0..n {
        boundary_nodes.push((id(n, j), 1.0 + j as f64 / n as f64));
    }
    for i in 0..n {
        boundary_nodes.push((id(n - i, n), 2.0 + i as f64 / n as f64));
    }
    for j in 0..n {
        boundary_nodes.push((id(0, n - j), 3.0 + j as f64 / n as f64));
    }
    let mut mesh = Mesh {
        nodes,
        triangles,
        boundary_nodes,
        h: 0.0,
    };
    mesh.h = mesh.max_element_diameter();
    mesh
}

/// Position on the unit-square boundary at parameter `t` in [0,4).
pub fn unit_square_boundary_point(t: f64) -> Vec2 {
    let t = t.rem_euclid(4.0);
    if t < 1.0 {
        Vec2::new(t, 0.0)
    } else if t < 2.0 {
        Vec2::new(1.0, t - 1.0)
    } else if t < 3.0 {
        Vec2::new(3.0 - t, 1.0)
    } else {
        Vec2::new(0.0, 4.0 - t)
    }
}

impl fmt::Display for Mesh {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "mesh: {} nodes, {} triangles, {} boundary nodes, h = {:.4}",
            self.nodes.len(),
            self.triangles.len(),
            self.boundary_nodes.len(),
            self.h
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn disk_total_length_is_two_pi() {
        let d = make_disk_domain(16).unwrap();
        assert_relative_eq!(
            d.boundary.total_length,
            2.0 * std::f64::consts::PI,
            epsilon = 1e-6
        );
    }

    #[test]
    fn disk_tangents_are_unit() {
        let d = make_disk_domain(233).unwrap();
        for s in &d.boundary.samples {
            assert!((s.tangent.norm() - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn disk_polygon_is_simple() {
        // construction already runs the simplicity check; make it explicit
        assert!(make_disk_domain(64).is_ok());
    }

    #[test]
    fn star_with_unit_radius_matches_disk() {
        let star = make_star_domain(&|_| 1.0, 128).unwrap();
        let disk = make_disk_domain(128).unwrap();
        for (a, b) in star.boundary.samples.iter().zip(&disk.boundary.samples) {
            assert!((a.point - b.point).norm() < 1e-8);
        }
    }

    #[test]
    fn star_length_quadrature_self_consistent() {
        let rho = |theta: f64| 1.0 + 0.2 * theta.cos();
        let a = make_star_domain(&rho, 256).unwrap();
        let b = make_star_domain(&rho, 512).unwrap();
        assert!((a.boundary.total_length - b.boundary.total_length).abs() < 1e-6);
    }

    #[test]
    fn nonconvex_star_accepted() {
        let rho = |theta: f64| 1.0 + 0.9 * (2.0 * theta).cos();
        assert!(make_star_domain(&rho, 512).is_ok());
    }

    #[test]
    fn nonpositive_radius_rejected() {
        let rho = |theta: f64| theta.cos(); // negative for theta in (pi/2, 3pi/2)
        match make_star_domain(&rho, 64) {
            Err(GeometryError::NonPositiveRadius { .. }) => {}
            other => panic!("expected NonPositiveRadius, got {other:?}"),
        }
    }

    #[test]
    fn disk_c1alpha_passes_with_m0_2() {
        // Analytic oracle: the circle graph under the tangent frame is
        // psi(x) = 1 - sqrt(1 - x^2). Over the rho0 = 0.5 ball:
        //   sup|psi| ~ 0.134, sup|psi'| ~ 0.575, [psi']_1 = sup|psi''| ~ 1.53,
        // so the three-term sum ~ 0.80 <= M0 rho0 = 1.
        let d = make_disk_domain(512)
            .unwrap()
            .with_regularity(0.5, 2.0, 1.0);
        let rep = check_c1alpha(&d).unwrap();
        assert!(rep.passes, "worst ratio {}", rep.worst_ratio);
        assert!(rep.worst_ratio > 0.5 && rep.worst_ratio < 1.0);
    }

    #[test]
    fn disk_c1alpha_fails_with_tiny_m0() {
        let d = make_disk_domain(512)
            .unwrap()
            .with_regularity(0.5, 0.01, 1.0);
        let rep = check_c1alpha(&d).unwrap();
        assert!(!rep.passes);
    }

    #[test]
    fn c1alpha_monotone_in_m0() {
        let d = make_disk_domain(256)
            .unwrap()
            .with_regularity(0.4, 1.5, 1.0);
        let rep = check_c1alpha(&d).unwrap();
        assert!(rep.passes);
        let d2 = make_disk_domain(256)
            .unwrap()
            .with_regularity(0.4, 3.0, 1.0);
        assert!(check_c1alpha(&d2).unwrap().passes);
    }

    #[test]
    fn c1alpha_huge_window_fails_or_errors_without_crash() {
        let d = make_disk_domain(128)
            .unwrap()
            .with_regularity(5.0, 2.0, 1.0);
        match check_c1alpha(&d) {
            Ok(rep) => assert!(!rep.passes),
            Err(GeometryError::InsufficientSamples { .. }) => {}
            Err(e) => panic!("unexpected error {e:?}"),
        }
    }

    #[test]
    fn disk_mesh_invariants_hold() {
        let d = make_disk_domain(512).unwrap();
        let mesh = triangulate(&d, 0.2).unwrap();
        mesh.validate(Some(&d.boundary)).unwrap();
        assert!(mesh.min_angle_deg() >= 20.0);
        assert!(mesh.h <= 1.5 * 0.2);
        // area consistency
        let tri_area: f64 = (0..mesh.triangles.len()).map(|i| mesh.triangle_area(i)).sum();
        assert_relative_eq!(tri_area, mesh.polygon_area(), max_relative = 1e-10);
    }

    #[test]
    fn refinement_scaling_factor_in_range() {
        let d = make_disk_domain(1024).unwrap();
        let coarse = triangulate(&d, 0.2).unwrap();
        let fine = triangulate(&d, 0.1).unwrap();
        let factor = fine.nodes.len() as f64 / coarse.nodes.len() as f64;
        assert!(
            (3.5..=4.5).contains(&factor),
            "node growth factor {factor}"
        );
    }

    #[test]
    fn star_mesh_boundary_nodes_on_curve() {
        let rho = |theta: f64| 1.0 + 0.2 * theta.cos();
        let d = make_star_domain(&rho, 1024).unwrap();
        let mesh = triangulate(&d, 0.1).unwrap();
        mesh.validate(Some(&d.boundary)).unwrap();
    }

    #[test]
    fn meshing_is_deterministic() {
        let d = make_disk_domain(512).unwrap();
        let a = triangulate(&d, 0.15).unwrap();
        let b = triangulate(&d, 0.15).unwrap();
        assert_eq!(a.to_text(), b.to_text());
    }

    #[test]
    fn mesh_text_roundtrip() {
        let d = make_disk_domain(128).unwrap();
        let mesh = triangulate(&d, 0.3).unwrap();
        let text = mesh.to_text();
        let back = Mesh::from_text(&text).unwrap();
        assert_eq!(back.to_text(), text);
    }

    #[test]
    fn unit_square_mesh_valid() {
        let mesh = unit_square_mesh(8);
        mesh.validate(None).unwrap();
        let area: f64 = (0..mesh.triangles.len()).map(|i| mesh.triangle_area(i)).sum();
        assert_relative_eq!(area, 1.0, epsilon = 1e-12);
        assert_eq!(mesh.boundary_nodes.len(), 32);
    }

    #[test]
    fn circle_curvature_is_one() {
        let d = make_disk_domain(512).unwrap();
        let ks = d.boundary.curvature_samples();
        for k in ks {
            assert_relative_eq!(k, 1.0, epsilon = 1e-6);
        }
    }
}
