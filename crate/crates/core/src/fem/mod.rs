//! Axisymmetric (azimuthal order 0) linear-elasticity modal analysis of
//! pillar-supported disks and toroids.
//!
//! The pipeline is [`generate_mesh`] → [`assemble`] →
//! [`SystemMatrices::constrain`] → [`solve_eigenmodes`] →
//! [`ModeSolution::from_eigenpair`]; [`modal_analysis`] chains all of them.

pub mod assemble;
pub mod eigen;
pub mod element;
pub mod geometry;
pub mod material;
pub mod mesh;
pub mod mode;
pub mod sparse;

pub use assemble::{assemble, material_map, BoundaryConditions, ConstrainedSystem, DofMap, MaterialMap, SystemMatrices};
pub use eigen::{solve_eigenmodes, EigenPair, EigenSolution, SolverOptions, SolverPath};
pub use geometry::{ResonatorGeometry, Spokes};
pub use material::Material;
pub use mesh::{generate_mesh, Mesh, MeshLayout, Region};
pub use mode::{clamp_overlap, modal_analysis, mode_energy, ModeSolution, ModeSummary};
pub use sparse::CsrMatrix;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FemError {
    #[error("invalid material: {0}")]
    InvalidMaterial(String),
    #[error("inconsistent geometry: {0}")]
    Geometry(String),
    #[error("element {element} is degenerate (Jacobian determinant {det_j:e})")]
    SingularElement { element: usize, det_j: f64 },
    #[error("mesh has no clamp-plane edges")]
    EmptyClamp,
    #[error("no material assigned to region `{0}`")]
    MissingMaterial(String),
    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),
    #[error("shift coincides with an eigenvalue: pivot {pivot:e} at reordered index {pivot_index}")]
    SingularShift { pivot_index: usize, pivot: f64 },
    #[error(
        "eigensolver did not converge: {converged} of {requested} modes below tolerance \
         (worst residual {worst_residual:e}, subspace {subspace}, {attempts} attempts)"
    )]
    ConvergenceFailure { requested: usize, converged: usize, worst_residual: f64, subspace: usize, attempts: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("invalid request: {0}")]
    InvalidRequest(String),
}
