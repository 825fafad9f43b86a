//! Global stiffness and mass assembly and Dirichlet constraint elimination.

use rayon::prelude::*;
use std::collections::BTreeMap;

use super::element;
use super::geometry::ResonatorGeometry;
use super::material::Material;
use super::mesh::{Mesh, Region};
use super::sparse::CsrMatrix;
use super::FemError;

pub type MaterialMap = BTreeMap<Region, Material>;

/// Region → material map for a resonator: silica membrane, silicon pillar
/// and, with spokes, silica scaled by the spoke fill fraction.
pub fn material_map(silica: &Material, silicon: &Material, geometry: &ResonatorGeometry) -> MaterialMap {
    let mut m = MaterialMap::new();
    m.insert(Region::Silica, *silica);
    m.insert(Region::Silicon, *silicon);
    if let Some(sp) = &geometry.spokes {
        m.insert(Region::Spokes, silica.scaled(sp.fill_fraction()));
    }
    m
}

/// Unconstrained global operators. DOF `2n` is `u_r` and `2n + 1` is `u_z`
/// of node `n`.
#[derive(Debug, Clone)]
pub struct SystemMatrices {
    pub stiffness: CsrMatrix,
    pub mass: CsrMatrix,
}

/// Assembles `K` and `M`. Element matrices are computed in parallel and
/// summed in element order, so the result does not depend on thread count.
pub fn assemble(mesh: &Mesh, materials: &MaterialMap) -> Result<SystemMatrices, FemError> {
    for r in &mesh.regions {
        if *r != Region::Void && !materials.contains_key(r) {
            return Err(FemError::MissingMaterial(r.name().to_string()));
        }
    }
    for m in materials.values() {
        m.validate()?;
    }
    let locals: Vec<Option<(element::ElementMatrix, element::ElementMatrix)>> = (0..mesh.elements.len())
        .into_par_iter()
        .map(|e| {
            let region = mesh.regions[e];
            if region == Region::Void {
                return Ok(None);
            }
            let coords = mesh.element_coords(e);
            if let Some(&d) = element::jacobian_dets(&coords).iter().find(|&&d| !(d > 0.0)) {
                return Err(FemError::SingularElement { element: e, det_j: d });
            }
            let mat = &materials[&region];
            Ok(Some((element::stiffness(&coords, mat), element::mass(&coords, mat))))
        })
        .collect::<Result<_, _>>()?;

    let n = mesh.n_dofs();
    let mut kt = Vec::with_capacity(64 * mesh.elements.len());
    let mut mt = Vec::with_capacity(64 * mesh.elements.len());
    for (conn, local) in mesh.elements.iter().zip(&locals) {
        let Some((ke, me)) = local else { continue };
        let dofs: [usize; 8] = std::array::from_fn(|i| 2 * conn[i / 2] + i % 2);
        for a in 0..8 {
            for b in 0..8 {
                kt.push((dofs[a], dofs[b], ke[(a, b)]));
                if me[(a, b)] != 0.0 {
                    mt.push((dofs[a], dofs[b], me[(a, b)]));
                }
            }
        }
    }
    Ok(SystemMatrices { stiffness: CsrMatrix::from_triplets(n, &kt), mass: CsrMatrix::from_triplets(n, &mt) })
}

/// Which tagged boundaries are fixed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BoundaryConditions {
    /// Fix both displacement components on the pillar base.
    pub fix_base: bool,
    /// Fix `u_r` on the symmetry axis (required for regularity at `r = 0`).
    pub fix_axis: bool,
}

impl Default for BoundaryConditions {
    fn default() -> Self {
        BoundaryConditions { fix_base: true, fix_axis: true }
    }
}

impl BoundaryConditions {
    /// Only the axis condition; the structure floats freely along z.
    pub fn free() -> Self {
        BoundaryConditions { fix_base: false, fix_axis: true }
    }
}

/// Map from reduced (free) DOFs back to the global numbering.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DofMap {
    pub free: Vec<usize>,
    pub n_total: usize,
}

impl DofMap {
    pub fn n_free(&self) -> usize {
        self.free.len()
    }

    /// Scatters a reduced vector into a global one with zeros on fixed DOFs.
    pub fn expand(&self, reduced: &[f64]) -> Vec<f64> {
        let mut full = vec![0.0; self.n_total];
        for (&g, &v) in self.free.iter().zip(reduced) {
            full[g] = v;
        }
        full
    }
}

#[derive(Debug, Clone)]
pub struct ConstrainedSystem {
    pub stiffness: CsrMatrix,
    pub mass: CsrMatrix,
    pub dofs: DofMap,
}

impl SystemMatrices {
    /// Eliminates fixed DOFs and DOFs that carry no mass (nodes touching
    /// only void elements).
    pub fn constrain(&self, mesh: &Mesh, bc: BoundaryConditions) -> ConstrainedSystem {
        let n = self.mass.dim();
        let mut fixed = vec![false; n];
        if bc.fix_base {
            for &node in &mesh.base_nodes {
                fixed[2 * node] = true;
                fixed[2 * node + 1] = true;
            }
        }
        if bc.fix_axis {
            for &node in &mesh.axis_nodes {
                fixed[2 * node] = true;
            }
        }
        let free: Vec<usize> = (0..n).filter(|&d| !fixed[d] && self.mass.get(d, d) > 0.0).collect();
        ConstrainedSystem {
            stiffness: self.stiffness.submatrix(&free),
            mass: self.mass.submatrix(&free),
            dofs: DofMap { free, n_total: n },
        }
    }
}
