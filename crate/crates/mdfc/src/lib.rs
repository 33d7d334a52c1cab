//! Single-phase Darcy flow on fractured porous media, discretized
//! mixed-dimensionally: a 2D matrix, 1D fracture branches, and 0D
//! intersection points, coupled through piecewise-constant mortar fluxes on
//! interface grids that are independent of the subdomain grids.
//!
//! Module map:
//! - [`linalg`]: dense/sparse matrices, LU factorization, symmetric
//!   eigensolver. Self-contained except for large sparse factorizations,
//!   which delegate to a fill-reducing external engine.
//! - [`mesh`]: mixed-dimensional meshes. Structured generation with
//!   conforming fracture splitting, a plain-text mesh format, validation,
//!   legacy VTK output.
//! - [`mortar`]: interface grids, trace/load projections, the signed
//!   incidence (divergence) operator, perpendicular-permeability mass.
//! - [`disc`]: interchangeable subdomain discretizations (two-point flux,
//!   P1 Lagrange, hybridized lowest-order Raviart-Thomas, and the
//!   pressure-only operator for points and sealed fractures).
//! - [`assembly`]: flowing/blocking classification, the monolithic block
//!   system, the flux-only Schur system, and both solvers.
//! - [`harness`]: case configs, built-in geometries, refinement and
//!   stability studies, CSV/VTK reporting.

pub mod assembly;
pub mod disc;
pub mod harness;
pub mod linalg;
pub mod mesh;
pub mod mortar;
