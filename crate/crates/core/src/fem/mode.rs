//! Mode post-processing: nodal displacement fields, mechanical energy and
//! the clamp-plane displacement overlap, plus CSV/JSON export.

use serde::Serialize;
use std::f64::consts::PI;
use std::io::{self, Write};

use super::assemble::{assemble, BoundaryConditions, DofMap, MaterialMap};
use super::eigen::{solve_eigenmodes, EigenPair, SolverOptions};
use super::element::GAUSS_2;
use super::mesh::Mesh;
use super::sparse::CsrMatrix;
use super::FemError;

/// One eigenmode on the full mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeSolution {
    /// Angular eigenfrequency (rad/s).
    pub omega: f64,
    /// `(u_r, u_z)` per node (m, M-normalized unless rescaled).
    pub displacement: Vec<[f64; 2]>,
    /// `ω² φᵀMφ / 2` at the stored normalization (J).
    pub mechanical_energy: f64,
    /// `∫ u_z² dA` over the clamp plane (m⁴).
    pub clamp_overlap: f64,
    /// Share of `φᵀMφ` carried by the radial component.
    pub radial_fraction: f64,
}

/// Mechanical energy `E = ω² φᵀMφ / 2`: the peak kinetic energy of the
/// oscillation `u(t) = φ cos ωt`, equal to the peak strain energy.
pub fn mode_energy(omega: f64, displacement: &[[f64; 2]], mass: &CsrMatrix) -> Result<f64, FemError> {
    let flat = flatten(displacement);
    if flat.len() != mass.dim() {
        return Err(FemError::ShapeMismatch { expected: mass.dim(), got: flat.len() });
    }
    Ok(0.5 * omega * omega * mass.quad_form(&flat, &flat))
}

/// `∫ |u_z|² dA` over the tagged clamp edges with the ring weight `2πr`,
/// using 2-point Gauss quadrature per edge.
pub fn clamp_overlap(displacement: &[[f64; 2]], mesh: &Mesh) -> Result<f64, FemError> {
    if displacement.len() != mesh.nodes.len() {
        return Err(FemError::ShapeMismatch { expected: mesh.nodes.len(), got: displacement.len() });
    }
    if mesh.clamp_edges.is_empty() {
        return Err(FemError::EmptyClamp);
    }
    let mut total = 0.0;
    for &[a, b] in &mesh.clamp_edges {
        let (pa, pb) = (mesh.nodes[a], mesh.nodes[b]);
        let len = ((pb[0] - pa[0]).powi(2) + (pb[1] - pa[1]).powi(2)).sqrt();
        for &s in &GAUSS_2 {
            let t = 0.5 * (1.0 + s);
            let r = pa[0] + t * (pb[0] - pa[0]);
            let uz = displacement[a][1] + t * (displacement[b][1] - displacement[a][1]);
            total += uz * uz * 2.0 * PI * r * 0.5 * len;
        }
    }
    Ok(total)
}

fn flatten(displacement: &[[f64; 2]]) -> Vec<f64> {
    displacement.iter().flat_map(|d| [d[0], d[1]]).collect()
}

impl ModeSolution {
    /// Expands a reduced eigenpair onto the mesh and evaluates its energy and
    /// clamp overlap.
    pub fn from_eigenpair(pair: &EigenPair, dofs: &DofMap, mesh: &Mesh, mass: &CsrMatrix) -> Result<Self, FemError> {
        let full = dofs.expand(&pair.vector);
        let displacement: Vec<[f64; 2]> = full.chunks_exact(2).map(|c| [c[0], c[1]]).collect();
        let omega = pair.omega();
        let mut radial = full.clone();
        radial.iter_mut().skip(1).step_by(2).for_each(|x| *x = 0.0);
        let total_mass_norm = mass.quad_form(&full, &full);
        Ok(ModeSolution {
            omega,
            mechanical_energy: mode_energy(omega, &displacement, mass)?,
            clamp_overlap: clamp_overlap(&displacement, mesh)?,
            radial_fraction: mass.quad_form(&radial, &radial) / total_mass_norm,
            displacement,
        })
    }

    pub fn frequency_hz(&self) -> f64 {
        self.omega / (2.0 * PI)
    }

    /// Same mode with the displacement multiplied by `alpha`; energy and
    /// overlap scale by `alpha²`.
    pub fn scaled(&self, alpha: f64) -> ModeSolution {
        ModeSolution {
            displacement: self.displacement.iter().map(|d| [alpha * d[0], alpha * d[1]]).collect(),
            mechanical_energy: alpha * alpha * self.mechanical_energy,
            clamp_overlap: alpha * alpha * self.clamp_overlap,
            ..self.clone()
        }
    }

    pub fn summary(&self) -> ModeSummary {
        ModeSummary {
            frequency_hz: self.frequency_hz(),
            omega_rad_per_s: self.omega,
            mechanical_energy_j: self.mechanical_energy,
            clamp_overlap_m4: self.clamp_overlap,
            radial_fraction: self.radial_fraction,
        }
    }

    /// CSV with header `node_id,r,z,u_r,u_z`.
    pub fn write_csv<W: Write>(&self, mesh: &Mesh, mut w: W) -> io::Result<()> {
        writeln!(w, "node_id,r,z,u_r,u_z")?;
        for (i, (p, u)) in mesh.nodes.iter().zip(&self.displacement).enumerate() {
            writeln!(w, "{i},{:e},{:e},{:e},{:e}", p[0], p[1], u[0], u[1])?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModeSummary {
    pub frequency_hz: f64,
    pub omega_rad_per_s: f64,
    pub mechanical_energy_j: f64,
    pub clamp_overlap_m4: f64,
    pub radial_fraction: f64,
}

/// Assembles, constrains and solves for the `n_modes` modes nearest the
/// angular frequency `target_omega`.
pub fn modal_analysis(
    mesh: &Mesh,
    materials: &MaterialMap,
    bc: BoundaryConditions,
    n_modes: usize,
    target_omega: f64,
    opts: &SolverOptions,
) -> Result<Vec<ModeSolution>, FemError> {
    let system = assemble(mesh, materials)?;
    let constrained = system.constrain(mesh, bc);
    let sol = solve_eigenmodes(&constrained.stiffness, &constrained.mass, n_modes, target_omega * target_omega, opts)?;
    sol.pairs.iter().map(|p| ModeSolution::from_eigenpair(p, &constrained.dofs, mesh, &system.mass)).collect()
}
