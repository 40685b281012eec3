//! P1 finite elements for the Dirichlet problem div(sigma grad u) = 0.
//!
//! The coefficient is evaluated at element centroids (one-point rule), the
//! Dirichlet rows are eliminated (strong imposition), and the reduced system
//! is solved to a 1e-10 relative residual: conjugate gradients for symmetric
//! sigma, BiCGSTAB otherwise, both with ILU(0). One assembly/factorization is
//! shared by the two components of a mapping solve.

use crate::characters::{ScalarBoundaryDatum, VectorBoundaryDatum};
use crate::coefficients::{beltrami_dilatations, CoefficientField};
use crate::geometry::Mesh;
use crate::linalg::{solve_bicgstab, solve_cg, Csr, Ilu0, LinalgError};
use crate::{rot90, Mat2, Vec2};
use num_complex::Complex64;
use std::collections::{BTreeMap, VecDeque};
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SolveError {
    #[error("coefficient field has dimension {got}, need 2")]
    FieldDimension { got: usize },
    #[error(transparent)]
    Linear(#[from] LinalgError),
    #[error("meshes of the two components differ")]
    MeshMismatch,
}

/// Gradients of the three P1 basis functions on a triangle, and twice the
/// signed area.
fn p1_gradients(p: [Vec2; 3]) -> ([Vec2; 3], f64) {
    let area2 = (p[1] - p[0]).x * (p[2] - p[0]).y - (p[1] - p[0]).y * (p[2] - p[0]).x;
    let r = rot90();
    let g = [
        r * (p[2] - p[1]) / area2,
        r * (p[0] - p[2]) / area2,
        r * (p[1] - p[0]) / area2,
    ];
    (g, area2)
}

/// Assembled reduced stiffness system for one (mesh, field) pair; reusable
/// across boundary data.
pub struct AssembledSystem {
    pub mesh: Arc<Mesh>,
    field_symmetric: bool,
    sigma_at_centroid: Vec<Mat2>,
    reduced: Csr,
    ilu: Ilu0,
    /// (interior row, boundary node, stiffness coefficient)
    coupling: Vec<(usize, usize, f64)>,
    interior_nodes: Vec<usize>,
    interior_index: Vec<Option<usize>>,
}

impl AssembledSystem {
    pub fn new(mesh: &Arc<Mesh>, field: &CoefficientField) -> Result<Self, SolveError> {
        if field.dim() != 2 {
            return Err(SolveError::FieldDimension { got: field.dim() });
        }
        let n = mesh.nodes.len();
        let mut is_boundary = vec![false; n];
        for &(i, _) in &mesh.boundary_nodes {
            is_boundary[i] = true;
        }
        let mut interior_index = vec![None; n];
        let mut interior_nodes = Vec::new();
        for i in 0..n {
            if !is_boundary[i] {
                interior_index[i] = Some(interior_nodes.len());
                interior_nodes.push(i);
            }
        }
        let mut triplets = Vec::new();
        let mut coupling = Vec::new();
        let mut sigma_at_centroid = Vec::with_capacity(mesh.triangles.len());
        for tri in &mesh.triangles {
            let pts = [
                mesh.nodes[tri[0]],
                mesh.nodes[tri[1]],
                mesh.nodes[tri[2]],
            ];
            let (g, area2) = p1_gradients(pts);
            let area = 0.5 * area2;
            let sigma = field.eval2((pts[0] + pts[1] + pts[2]) / 3.0);
            sigma_at_centroid.push(sigma);
            for (i, &ni) in tri.iter().enumerate() {
                let Some(row) = interior_index[ni] else {
                    continue;
                };
                for (j, &nj) in tri.iter().enumerate() {
                    // test gradient against sigma * trial gradient; no
                    // symmetrization for nonsymmetric sigma
                    let k_ij = area * (sigma * g[j]).dot(&g[i]);
                    match interior_index[nj] {
                        Some(col) => triplets.push((row, col, k_ij)),
                        None => coupling.push((row, nj, k_ij)),
                    }
                }
            }
        }
        let reduced = Csr::from_triplets(interior_nodes.len(), triplets);
        let ilu = Ilu0::new(&reduced)?;
        Ok(AssembledSystem {
            mesh: mesh.clone(),
            field_symmetric: field.symmetric,
            sigma_at_centroid,
            reduced,
            ilu,
            coupling,
            interior_nodes,
            interior_index,
        })
    }

    /// Solves for one scalar boundary datum, reusing the factorization.
    pub fn solve(&self, datum: &ScalarBoundaryDatum) -> Result<DiscreteSolution, SolveError> {
        let n = self.mesh.nodes.len();
        let mut nodal = vec![0.0; n];
        let mut boundary_values = Vec::with_capacity(self.mesh.boundary_nodes.len());
        for &(i, t) in &self.mesh.boundary_nodes {
            let v = datum.value_at(t);
            nodal[i] = v;
            boundary_values.push((i, v));
        }
        let m = self.interior_nodes.len();
        let mut rhs = vec![0.0; m];
        for &(row, bnode, coeff) in &self.coupling {
            rhs[row] -= coeff * nodal[bnode];
        }
        let mut x = vec![0.0; m];
        let stats = if self.field_symmetric {
            solve_cg(&self.reduced, &rhs, &mut x, &self.ilu, 1e-12, 50_000)?
        } else {
            solve_bicgstab(&self.reduced, &rhs, &mut x, &self.ilu, 1e-12, 50_000)?
        };
        for (k, &node) in self.interior_nodes.iter().enumerate() {
            nodal[node] = x[k];
        }
        let element_gradients = element_gradients(&self.mesh, &nodal);
        Ok(DiscreteSolution {
            mesh: self.mesh.clone(),
            nodal_values: nodal,
            element_gradients,
            boundary_values,
            residual_norm: stats.relative_residual,
        })
    }

    /// Relative residual of the reduced system at the given solution (an
    /// independent re-check of Galerkin consistency).
    pub fn residual_of(&self, sol: &DiscreteSolution) -> f64 {
        let m = self.interior_nodes.len();
        let mut x = vec![0.0; m];
        for (k, &node) in self.interior_nodes.iter().enumerate() {
            x[k] = sol.nodal_values[node];
        }
        let mut rhs = vec![0.0; m];
        for &(row, bnode, coeff) in &self.coupling {
            rhs[row] -= coeff * sol.nodal_values[bnode];
        }
        let bnorm = rhs.iter().map(|v| v * v).sum::<f64>().sqrt();
        if bnorm == 0.0 {
            return 0.0;
        }
        self.reduced.residual_norm(&x, &rhs) / bnorm
    }

    pub fn interior_index_of(&self, node: usize) -> Option<usize> {
        self.interior_index[node]
    }
}

fn element_gradients(mesh: &Mesh, nodal: &[f64]) -> Vec<Vec2> {
    mesh.triangles
        .iter()
        .map(|tri| {
            let pts = [
                mesh.nodes[tri[0]],
                mesh.nodes[tri[1]],
                mesh.nodes[tri[2]],
            ];
            let (g, _) = p1_gradients(pts);
            g[0] * nodal[tri[0]] + g[1] * nodal[tri[1]] + g[2] * nodal[tri[2]]
        })
        .collect()
}

/// Piecewise-linear solution with exact per-element gradients.
#[derive(Debug, Clone)]
pub struct DiscreteSolution {
    pub mesh: Arc<Mesh>,
    pub nodal_values: Vec<f64>,
    pub element_gradients: Vec<Vec2>,
    /// The imposed trace: (boundary node, value).
    pub boundary_values: Vec<(usize, f64)>,
    pub residual_norm: f64,
}

impl DiscreteSolution {
    /// Max violation of the discrete maximum principle surrogate:
    /// how far the solution leaves the boundary-datum range.
    pub fn max_principle_violation(&self) -> f64 {
        let bmin = self
            .boundary_values
            .iter()
            .map(|&(_, v)| v)
            .fold(f64::INFINITY, f64::min);
        let bmax = self
            .boundary_values
            .iter()
            .map(|&(_, v)| v)
            .fold(f64::NEG_INFINITY, f64::max);
        let umin = self.nodal_values.iter().cloned().fold(f64::INFINITY, f64::min);
        let umax = self
            .nodal_values
            .iter()
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max);
        (umax - bmax).max(bmin - umin).max(0.0)
    }

    /// Relative L2 error against a reference function (3-point edge-midpoint
    /// quadrature, exact for quadratics).
    pub fn l2_error(&self, exact: impl Fn(Vec2) -> f64) -> f64 {
        let mesh = &self.mesh;
        let mut err2 = 0.0;
        let mut ref2 = 0.0;
        for (t, tri) in mesh.triangles.iter().enumerate() {
            let area = mesh.triangle_area(t);
            for k in 0..3 {
                let a = tri[k];
                let b = tri[(k + 1) % 3];
                let mid = (mesh.nodes[a] + mesh.nodes[b]) * 0.5;
                let uh = 0.5 * (self.nodal_values[a] + self.nodal_values[b]);
                let ue = exact(mid);
                err2 += area / 3.0 * (uh - ue) * (uh - ue);
                ref2 += area / 3.0 * ue * ue;
            }
        }
        (err2 / ref2.max(1e-300)).sqrt()
    }
}

/// Two scalar solutions sharing one mesh: a discrete sigma-harmonic mapping.
#[derive(Debug, Clone)]
pub struct SigmaHarmonicMap {
    pub u1: DiscreteSolution,
    pub u2: DiscreteSolution,
}

impl SigmaHarmonicMap {
    pub fn mesh(&self) -> &Arc<Mesh> {
        &self.u1.mesh
    }

    /// Per-element Jacobian with rows grad u1, grad u2.
    pub fn du(&self, element: usize) -> Mat2 {
        let g1 = self.u1.element_gradients[element];
        let g2 = self.u2.element_gradients[element];
        Mat2::new(g1.x, g1.y, g2.x, g2.y)
    }
}

/// Assembles and solves a single Dirichlet problem.
pub fn assemble_and_solve(
    mesh: &Arc<Mesh>,
    field: &CoefficientField,
    datum: &ScalarBoundaryDatum,
) -> Result<DiscreteSolution, SolveError> {
    AssembledSystem::new(mesh, field)?.solve(datum)
}

/// Solves the two component problems of a vector datum with one shared
/// assembly and factorization.
pub fn solve_mapping(
    mesh: &Arc<Mesh>,
    field: &CoefficientField,
    phi: &VectorBoundaryDatum,
) -> Result<SigmaHarmonicMap, SolveError> {
    let system = AssembledSystem::new(mesh, field)?;
    let u1 = system.solve(&phi.component(0))?;
    let u2 = system.solve(&phi.component(1))?;
    Ok(SigmaHarmonicMap { u1, u2 })
}

/// Conjugate potential integrated along mesh edges.
#[derive(Debug, Clone)]
pub struct StreamFunction {
    pub nodal_values: Vec<f64>,
    /// Max circulation mismatch of the edge-averaged flux over triangle
    /// loops (the independent cycles of the planar mesh).
    pub loop_residual: f64,
}

/// Integrates the stream relation grad(stream) = J sigma grad(u): per-element
/// fluxes are averaged on each shared edge, integrated along a breadth-first
/// spanning tree, and normalized to vanish at the first boundary node.
pub fn stream_function(sol: &DiscreteSolution, field: &CoefficientField) -> StreamFunction {
    let mesh = &sol.mesh;
    let n = mesh.nodes.len();
    let j = rot90();
    let flux: Vec<Vec2> = (0..mesh.triangles.len())
        .map(|t| {
            let sigma = field.eval2(mesh.centroid(t));
            j * (sigma * sol.element_gradients[t])
        })
        .collect();
    // edge -> adjacent triangles
    let mut edge_tris: BTreeMap<(usize, usize), Vec<usize>> = BTreeMap::new();
    for (t, tri) in mesh.triangles.iter().enumerate() {
        for k in 0..3 {
            let a = tri[k];
            let b = tri[(k + 1) % 3];
            edge_tris.entry((a.min(b), a.max(b))).or_default().push(t);
        }
    }
    // increment along a -> b for edge key (a, b), a < b
    let mut increments: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for (&(a, b), tris) in &edge_tris {
        let q = tris.iter().map(|&t| flux[t]).sum::<Vec2>() / tris.len() as f64;
        increments.insert((a, b), q.dot(&(mesh.nodes[b] - mesh.nodes[a])));
    }
    // breadth-first spanning tree rooted at the most interior node: paths to
    // adjacent nodes then split late, so fundamental cycles stay thin and
    // quadrature drift does not concentrate on a seam
    let mut adjacency: Vec<Vec<usize>> = vec![Vec::new(); n];
    for &(a, b) in edge_tris.keys() {
        adjacency[a].push(b);
        adjacency[b].push(a);
    }
    let root = (0..n)
        .max_by(|&a, &b| {
            mesh.distance_to_boundary(mesh.nodes[a])
                .partial_cmp(&mesh.distance_to_boundary(mesh.nodes[b]))
                .unwrap()
                .then(b.cmp(&a))
        })
        .unwrap_or(0);
    let mut values = vec![0.0; n];
    let mut seen = vec![false; n];
    seen[root] = true;
    let mut queue = VecDeque::from([root]);
    while let Some(a) = queue.pop_front() {
        for &b in &adjacency[a] {
            if !seen[b] {
                seen[b] = true;
                let inc = if a < b {
                    increments[&(a, b)]
                } else {
                    -increments[&(b, a)]
                };
                values[b] = values[a] + inc;
                queue.push_back(b);
            }
        }
    }
    // normalize: the stream vanishes at the first boundary node
    if let Some(&(first_boundary, _)) = mesh.boundary_nodes.first() {
        let offset = values[first_boundary];
        for v in &mut values {
            *v -= offset;
        }
    }
    // circulation mismatch around each triangle
    let mut loop_residual: f64 = 0.0;
    for tri in &mesh.triangles {
        let mut circ = 0.0;
        for k in 0..3 {
            let a = tri[k];
            let b = tri[(k + 1) % 3];
            circ += if a < b {
                increments[&(a, b)]
            } else {
                -increments[&(b, a)]
            };
        }
        loop_residual = loop_residual.max(circ.abs());
    }
    StreamFunction {
        nodal_values: values,
        loop_residual,
    }
}

/// Net circulation of the edge-averaged flux along a closed node loop
/// (consecutive nodes must share mesh edges).
pub fn loop_circulation(
    sol: &DiscreteSolution,
    field: &CoefficientField,
    loop_nodes: &[usize],
) -> f64 {
    let mesh = &sol.mesh;
    let j = rot90();
    let flux: Vec<Vec2> = (0..mesh.triangles.len())
        .map(|t| {
            let sigma = field.eval2(mesh.centroid(t));
            j * (sigma * sol.element_gradients[t])
        })
        .collect();
    let mut edge_tris: BTreeMap<(usize, usize), Vec<usize>> = BTreeMap::new();
    for (t, tri) in mesh.triangles.iter().enumerate() {
        for k in 0..3 {
            let a = tri[k];
            let b = tri[(k + 1) % 3];
            edge_tris.entry((a.min(b), a.max(b))).or_default().push(t);
        }
    }
    let mut circ = 0.0;
    for k in 0..loop_nodes.len() {
        let a = loop_nodes[k];
        let b = loop_nodes[(k + 1) % loop_nodes.len()];
        let key = (a.min(b), a.max(b));
        let tris = &edge_tris[&key];
        let q = tris.iter().map(|&t| flux[t]).sum::<Vec2>() / tris.len() as f64;
        circ += q.dot(&(mesh.nodes[b] - mesh.nodes[a]));
    }
    circ
}

#[derive(Debug, Clone)]
pub struct FirstOrderReport {
    /// Max over admissible elements of |f_zbar - mu f_z - nu conj(f_z)|
    /// relative to |f_z|.
    pub max_relative_residual: f64,
    pub elements_checked: usize,
}

/// Residual of the first-order system satisfied by f = u + i*stream, measured
/// on elements whose centroids stay `2h` away from the boundary and from the
/// field's singular points.
pub fn check_first_order_system(
    sol: &DiscreteSolution,
    stream: &StreamFunction,
    field: &CoefficientField,
) -> FirstOrderReport {
    check_first_order_system_in(sol, stream, field, |_| true)
}

/// Same residual restricted to centroids accepted by `region` (on top of the
/// boundary / singular-point exclusions).
pub fn check_first_order_system_in(
    sol: &DiscreteSolution,
    stream: &StreamFunction,
    field: &CoefficientField,
    region: impl Fn(Vec2) -> bool,
) -> FirstOrderReport {
    let mesh = &sol.mesh;
    let grad_stream = element_gradients(mesh, &stream.nodal_values);
    let margin = 2.0 * mesh.h;
    let mut worst: f64 = 0.0;
    let mut checked = 0usize;
    for t in 0..mesh.triangles.len() {
        let c = mesh.centroid(t);
        if !region(c) {
            continue;
        }
        if mesh.distance_to_boundary(c) <= margin {
            continue;
        }
        if field
            .singular_points
            .iter()
            .any(|&s| (c - s).norm() <= margin)
        {
            continue;
        }
        let gu = sol.element_gradients[t];
        let gv = grad_stream[t];
        let f_z = Complex64::new(gu.x + gv.y, gv.x - gu.y) * 0.5;
        let f_zbar = Complex64::new(gu.x - gv.y, gv.x + gu.y) * 0.5;
        let sigma = field.eval2(c);
        let Ok(pair) = beltrami_dilatations(&sigma, field.k_ellipticity) else {
            continue;
        };
        let res = f_zbar - pair.mu * f_z - pair.nu * f_z.conj();
        if f_z.norm() > 1e-14 {
            worst = worst.max(res.norm() / f_z.norm());
            checked += 1;
        }
    }
    FirstOrderReport {
        max_relative_residual: worst,
        elements_checked: checked,
    }
}

/// Discrete energy (1/|Omega|) integral of Trace[(DU)^T sigma DU] for a
/// mapping (sum of the two component Dirichlet energies).
pub fn mapping_energy(map: &SigmaHarmonicMap, field: &CoefficientField) -> f64 {
    let mesh = map.mesh();
    let mut total = 0.0;
    let mut measure = 0.0;
    for t in 0..mesh.triangles.len() {
        let area = mesh.triangle_area(t);
        let sigma = field.eval2(mesh.centroid(t));
        let g1 = map.u1.element_gradients[t];
        let g2 = map.u2.element_gradients[t];
        total += area * ((sigma * g1).dot(&g1) + (sigma * g2).dot(&g2));
        measure += area;
    }
    total / measure
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::characters::ScalarBoundaryDatum;
    use crate::coefficients::{family_constant, family_meyers, family_smooth_random};
    use crate::geometry::{make_disk_domain, triangulate};
    use crate::oracles::meyers_eval;
    use approx::assert_relative_eq;

    fn disk_mesh(h: f64) -> Arc<Mesh> {
        let d = make_disk_domain(4096).unwrap();
        Arc::new(triangulate(&d, h).unwrap())
    }

    fn coordinate_datum(mesh: &Arc<Mesh>, axis: usize) -> ScalarBoundaryDatum {
        let curve = make_disk_domain(4096).unwrap().boundary;
        ScalarBoundaryDatum::from_fn(
            curve.total_length,
            mesh.boundary_nodes.len().max(256),
            move |t| {
                let p = curve.point_at(t);
                if axis == 0 {
                    p.x
                } else {
                    p.y
                }
            },
            |_| 0.0,
        )
    }

    #[test]
    fn linear_datum_reproduced_exactly() {
        let mesh = disk_mesh(0.2);
        let field = family_constant(1.0);
        let datum = coordinate_datum(&mesh, 0);
        let sol = assemble_and_solve(&mesh, &field, &datum).unwrap();
        assert!(sol.residual_norm <= 1e-10);
        for (i, p) in mesh.nodes.iter().enumerate() {
            assert_relative_eq!(sol.nodal_values[i], p.x, epsilon = 1e-9);
        }
        for g in &sol.element_gradients {
            assert!((g - Vec2::new(1.0, 0.0)).norm() < 1e-9);
        }
    }

    #[test]
    fn harmonic_quadratic_converges_at_order_two() {
        let d = make_disk_domain(4096).unwrap();
        let curve = d.boundary.clone();
        let field = family_constant(1.0);
        let mut errs = Vec::new();
        let hs = [0.2, 0.1, 0.05];
        for &h in &hs {
            let mesh = Arc::new(triangulate(&d, h).unwrap());
            let curve = curve.clone();
            let datum = ScalarBoundaryDatum::from_fn(
                curve.total_length,
                512,
                move |t| {
                    let p = curve.point_at(t);
                    p.x * p.x - p.y * p.y
                },
                |_| 0.0,
            );
            let sol = assemble_and_solve(&mesh, &field, &datum).unwrap();
            errs.push(sol.l2_error(|p| p.x * p.x - p.y * p.y));
        }
        let order01 = (errs[0] / errs[1]).log2();
        let order12 = (errs[1] / errs[2]).log2();
        assert!(
            order01 > 1.6 && order12 > 1.6,
            "orders {order01:.2}, {order12:.2}, errors {errs:?}"
        );
    }

    #[test]
    fn meyers_alpha2_accuracy() {
        let mesh = disk_mesh(0.05);
        let field = family_meyers(2.0);
        let datum = coordinate_datum(&mesh, 0);
        let sol = assemble_and_solve(&mesh, &field, &datum).unwrap();
        let err = sol.l2_error(|p| meyers_eval(2.0, p).unwrap().u.x);
        assert!(err < 0.05, "relative L2 error {err}");
    }

    #[test]
    fn maximum_principle_surrogate() {
        let mesh = disk_mesh(0.1);
        let field = family_smooth_random(4, 2.0, 1.0, 0.0).unwrap();
        let datum = coordinate_datum(&mesh, 1);
        let sol = assemble_and_solve(&mesh, &field, &datum).unwrap();
        assert!(sol.max_principle_violation() <= 1e-9);
    }

    #[test]
    fn nonsymmetric_field_solves_and_stays_bounded() {
        let mesh = disk_mesh(0.1);
        let field = family_smooth_random(11, 2.0, 1.0, 0.7).unwrap();
        assert!(!field.symmetric);
        let datum = coordinate_datum(&mesh, 0);
        let sol = assemble_and_solve(&mesh, &field, &datum).unwrap();
        assert!(sol.residual_norm <= 1e-10);
        assert!(sol.max_principle_violation() <= 1e-6);
    }

    #[test]
    fn linearity_of_the_solve() {
        let mesh = disk_mesh(0.15);
        let field = family_smooth_random(2, 2.0, 1.0, 0.0).unwrap();
        let system = AssembledSystem::new(&mesh, &field).unwrap();
        let d1 = coordinate_datum(&mesh, 0);
        let d2 = coordinate_datum(&mesh, 1);
        let curve = make_disk_domain(4096).unwrap().boundary;
        let combo = ScalarBoundaryDatum::from_fn(
            curve.total_length,
            512,
            move |t| {
                let p = curve.point_at(t);
                2.0 * p.x - 3.0 * p.y
            },
            |_| 0.0,
        );
        let s1 = system.solve(&d1).unwrap();
        let s2 = system.solve(&d2).unwrap();
        let sc = system.solve(&combo).unwrap();
        for i in 0..mesh.nodes.len() {
            let expect = 2.0 * s1.nodal_values[i] - 3.0 * s2.nodal_values[i];
            assert!((sc.nodal_values[i] - expect).abs() < 1e-8);
        }
    }

    #[test]
    fn shared_factorization_bit_identical_to_fresh_solves() {
        let mesh = disk_mesh(0.15);
        let field = family_meyers(2.0);
        let domain = make_disk_domain(4096).unwrap();
        let phi = crate::characters::VectorBoundaryDatum::identity_on(&domain.boundary);
        let map = solve_mapping(&mesh, &field, &phi).unwrap();
        let fresh1 = assemble_and_solve(&mesh, &field, &phi.component(0)).unwrap();
        let fresh2 = assemble_and_solve(&mesh, &field, &phi.component(1)).unwrap();
        assert_eq!(map.u1.nodal_values, fresh1.nodal_values);
        assert_eq!(map.u2.nodal_values, fresh2.nodal_values);
    }

    #[test]
    fn galerkin_residual_small() {
        let mesh = disk_mesh(0.15);
        let field = family_meyers(0.5);
        let system = AssembledSystem::new(&mesh, &field).unwrap();
        let sol = system.solve(&coordinate_datum(&mesh, 0)).unwrap();
        assert!(system.residual_of(&sol) <= 1e-10);
    }

    #[test]
    fn stream_of_linear_solution_is_coordinate() {
        let mesh = disk_mesh(0.2);
        let field = family_constant(1.0);
        let sol = assemble_and_solve(&mesh, &field, &coordinate_datum(&mesh, 0)).unwrap();
        let stream = stream_function(&sol, &field);
        assert!(stream.loop_residual <= 1e-12);
        let offset = stream.nodal_values[0] - mesh.nodes[0].y;
        for (i, p) in mesh.nodes.iter().enumerate() {
            assert!((stream.nodal_values[i] - p.y - offset).abs() < 1e-9);
        }
    }

    #[test]
    fn stream_loop_residual_decreases_under_refinement() {
        let d = make_disk_domain(4096).unwrap();
        let field = family_smooth_random(6, 2.0, 1.0, 0.0).unwrap();
        let mut residuals = Vec::new();
        for &h in &[0.2, 0.1, 0.05] {
            let mesh = Arc::new(triangulate(&d, h).unwrap());
            let curve = d.boundary.clone();
            let datum = ScalarBoundaryDatum::from_fn(
                curve.total_length,
                512,
                move |t| curve.point_at(t).x,
                |_| 0.0,
            );
            let sol = assemble_and_solve(&mesh, &field, &datum).unwrap();
            residuals.push(stream_function(&sol, &field).loop_residual);
        }
        assert!(residuals[0] / residuals[1] >= 1.5, "{residuals:?}");
        assert!(residuals[1] / residuals[2] >= 1.5, "{residuals:?}");
    }

    #[test]
    fn first_order_system_exact_for_identity_sigma() {
        let mesh = disk_mesh(0.15);
        let field = family_constant(1.0);
        let sol = assemble_and_solve(&mesh, &field, &coordinate_datum(&mesh, 0)).unwrap();
        let stream = stream_function(&sol, &field);
        let report = check_first_order_system(&sol, &stream, &field);
        assert!(report.elements_checked > 0);
        assert!(report.max_relative_residual <= 1e-10);
    }

    #[test]
    fn first_order_residual_decreases_for_smooth_sigma() {
        let d = make_disk_domain(4096).unwrap();
        let field = family_smooth_random(8, 2.0, 1.0, 0.0).unwrap();
        let mut residuals = Vec::new();
        for &h in &[0.2, 0.1] {
            let mesh = Arc::new(triangulate(&d, h).unwrap());
            let curve = d.boundary.clone();
            let datum = ScalarBoundaryDatum::from_fn(
                curve.total_length,
                512,
                move |t| curve.point_at(t).x,
                |_| 0.0,
            );
            let sol = assemble_and_solve(&mesh, &field, &datum).unwrap();
            let stream = stream_function(&sol, &field);
            residuals.push(check_first_order_system(&sol, &stream, &field).max_relative_residual);
        }
        assert!(residuals[1] < residuals[0], "{residuals:?}");
    }

    #[test]
    fn meyers_first_order_residual_small_on_annulus() {
        let mesh = disk_mesh(0.02);
        let field = family_meyers(2.0);
        let sol = assemble_and_solve(&mesh, &field, &coordinate_datum(&mesh, 0)).unwrap();
        let stream = stream_function(&sol, &field);
        let report = check_first_order_system_in(&sol, &stream, &field, |c| {
            (0.3..0.8).contains(&c.norm())
        });
        assert!(report.elements_checked > 500);
        assert!(report.max_relative_residual <= 0.05, "{report:?}");
    }
}
