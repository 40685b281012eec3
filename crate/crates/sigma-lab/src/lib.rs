//! Numerical laboratory for sigma-harmonic mappings in the plane.
//!
//! A sigma-harmonic mapping is a vector map `U = (u1, u2)` whose components
//! each solve the divergence-form equation `div(sigma grad u_i) = 0` for the
//! same coefficient matrix `sigma`. This crate provides the pieces needed to
//! study such mappings quantitatively:
//!
//! - [`geometry`]: boundary curves, C^{1,alpha} regularity checks, and
//!   deterministic structured triangulations of star-shaped domains.
//! - [`characters`]: certification of quantitative unimodality of scalar
//!   boundary data and quantitative convexity of vector boundary data.
//! - [`coefficients`]: coefficient matrices with ellipticity/Hoelder
//!   verification, complex dilatations, and the built-in test families.
//! - [`solver`]: P1 finite elements for the Dirichlet problem, stream
//!   functions, and the first-order (Beltrami) system residual.
//! - [`jacobian`]: Jacobian determinant fields, power densities, dilatation
//!   quotients, gradient lower-bound measurements, degeneration-rate fits.
//! - [`oracles`]: closed-form or ODE-accurate reference mappings (the
//!   radially-degenerate conductivity, the cubic polynomial map, and the
//!   layered 3D map without unique continuation of `det DU`).
//! - [`bounds`]: composite-energy bounds for multiphase layouts (harmonic
//!   mean bound, translation bound, determinant-constrained bound, and the
//!   FEM upper estimate of the cell energy).

pub mod bounds;
pub mod characters;
pub mod coefficients;
pub mod geometry;
pub mod jacobian;
pub mod linalg;
pub mod oracles;
pub mod solver;

/// 2-vector used for planar points, gradients and directions.
pub type Vec2 = nalgebra::Vector2<f64>;
/// 3-vector used by the spatial (3D) oracles.
pub type Vec3 = nalgebra::Vector3<f64>;
/// 2x2 coefficient / Jacobian matrix.
pub type Mat2 = nalgebra::Matrix2<f64>;
/// 3x3 coefficient / Jacobian matrix.
pub type Mat3 = nalgebra::Matrix3<f64>;

/// Counterclockwise rotation by 90 degrees.
pub fn rot90() -> Mat2 {
    Mat2::new(0.0, -1.0, 1.0, 0.0)
}
