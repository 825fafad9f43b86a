//! Structured quadrilateral meshes of axisymmetric cross-sections.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::io::{self, Write};

use super::element;
use super::geometry::{ResonatorGeometry, TORUS_CAP_ANGLE_DEG};
use super::FemError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Region {
    Silica,
    Silicon,
    /// Spoke annulus: silica with stiffness and mass reduced by the fill fraction.
    Spokes,
    /// Carries no material.
    Void,
}

impl Region {
    pub fn name(self) -> &'static str {
        match self {
            Region::Silica => "silica",
            Region::Silicon => "silicon",
            Region::Spokes => "spokes",
            Region::Void => "void",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    /// `(r, z)` coordinates (m).
    pub nodes: Vec<[f64; 2]>,
    /// Counter-clockwise node indices per element.
    pub elements: Vec<[usize; 4]>,
    pub regions: Vec<Region>,
    /// Nodes fixed in both directions (pillar base).
    pub base_nodes: Vec<usize>,
    /// Nodes on the symmetry axis `r = 0`.
    pub axis_nodes: Vec<usize>,
    /// Boundary edges forming the clamp plane.
    pub clamp_edges: Vec<[usize; 2]>,
}

/// Node grid with `(ni + 1) × (nk + 1)` points; index `i` runs along r.
struct Grid {
    ni: usize,
    nk: usize,
    ids: Vec<usize>,
}

impl Grid {
    fn id(&self, i: usize, k: usize) -> usize {
        self.ids[k * (self.ni + 1) + i]
    }
}

impl Mesh {
    fn empty() -> Self {
        Mesh {
            nodes: Vec::new(),
            elements: Vec::new(),
            regions: Vec::new(),
            base_nodes: Vec::new(),
            axis_nodes: Vec::new(),
            clamp_edges: Vec::new(),
        }
    }

    /// Adds a structured block. `coord(i, k)` gives node positions; nodes
    /// already present in `shared` (keyed by `(i, k)`) are reused.
    fn add_block<F, S>(&mut self, ni: usize, nk: usize, coord: F, shared: S, region: &dyn Fn(usize, usize) -> Region) -> Grid
    where
        F: Fn(usize, usize) -> [f64; 2],
        S: Fn(usize, usize) -> Option<usize>,
    {
        let mut ids = Vec::with_capacity((ni + 1) * (nk + 1));
        for k in 0..=nk {
            for i in 0..=ni {
                let id = match shared(i, k) {
                    Some(id) => id,
                    None => {
                        self.nodes.push(coord(i, k));
                        self.nodes.len() - 1
                    }
                };
                ids.push(id);
            }
        }
        let grid = Grid { ni, nk, ids };
        for k in 0..nk {
            for i in 0..ni {
                self.elements.push([grid.id(i, k), grid.id(i + 1, k), grid.id(i + 1, k + 1), grid.id(i, k + 1)]);
                self.regions.push(region(i, k));
            }
        }
        grid
    }

    fn tag_axis(&mut self) {
        self.axis_nodes = (0..self.nodes.len()).filter(|&n| self.nodes[n][0] == 0.0).collect();
    }

    /// Uniform rectangle `[r0, r1] × [z0, z1]`. The bottom row is tagged as
    /// both the fixed base and the clamp plane.
    pub fn rectangle(r0: f64, r1: f64, z0: f64, z1: f64, nr: usize, nz: usize, region: Region) -> Result<Mesh, FemError> {
        if nr == 0 || nz == 0 || !(r1 > r0) || !(z1 > z0) || r0 < 0.0 {
            return Err(FemError::Geometry("rectangle needs positive extent, r0 ≥ 0 and at least one element per side".into()));
        }
        let mut mesh = Mesh::empty();
        let grid = mesh.add_block(
            nr,
            nz,
            |i, k| [r0 + (r1 - r0) * i as f64 / nr as f64, z0 + (z1 - z0) * k as f64 / nz as f64],
            |_, _| None,
            &|_, _| region,
        );
        mesh.base_nodes = (0..=nr).map(|i| grid.id(i, 0)).collect();
        mesh.clamp_edges = (0..nr).map(|i| [grid.id(i, 0), grid.id(i + 1, 0)]).collect();
        mesh.tag_axis();
        mesh.validate()?;
        Ok(mesh)
    }

    /// Checks element Jacobians, region coverage and boundary tags.
    pub fn validate(&self) -> Result<(), FemError> {
        if self.regions.len() != self.elements.len() {
            return Err(FemError::Geometry("region tags do not cover all elements".into()));
        }
        for (e, conn) in self.elements.iter().enumerate() {
            let coords = self.element_coords(e);
            if conn.iter().any(|&n| n >= self.nodes.len()) {
                return Err(FemError::Geometry(format!("element {e} references a missing node")));
            }
            let dets = element::jacobian_dets(&coords);
            if let Some(&d) = dets.iter().find(|&&d| !(d > 0.0)) {
                return Err(FemError::SingularElement { element: e, det_j: d });
            }
        }
        if self.clamp_edges.is_empty() {
            return Err(FemError::EmptyClamp);
        }
        Ok(())
    }

    pub fn element_coords(&self, e: usize) -> [[f64; 2]; 4] {
        let c = self.elements[e];
        [self.nodes[c[0]], self.nodes[c[1]], self.nodes[c[2]], self.nodes[c[3]]]
    }

    pub fn n_dofs(&self) -> usize {
        2 * self.nodes.len()
    }

    /// Writes the mesh as plain text: a node table, an element table with
    /// region names, then the boundary tags.
    pub fn write_text<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "# resonator-q mesh, units m")?;
        writeln!(w, "nodes {}", self.nodes.len())?;
        for (i, n) in self.nodes.iter().enumerate() {
            writeln!(w, "{i} {:.17e} {:.17e}", n[0], n[1])?;
        }
        writeln!(w, "elements {}", self.elements.len())?;
        for (i, (e, r)) in self.elements.iter().zip(&self.regions).enumerate() {
            writeln!(w, "{i} {} {} {} {} {}", e[0], e[1], e[2], e[3], r.name())?;
        }
        let list = |v: &[usize]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ");
        writeln!(w, "base_nodes {}", self.base_nodes.len())?;
        writeln!(w, "{}", list(&self.base_nodes))?;
        writeln!(w, "axis_nodes {}", self.axis_nodes.len())?;
        writeln!(w, "{}", list(&self.axis_nodes))?;
        writeln!(w, "clamp_edges {}", self.clamp_edges.len())?;
        for e in &self.clamp_edges {
            writeln!(w, "{} {}", e[0], e[1])?;
        }
        Ok(())
    }
}

fn segments(len: f64, h: f64, refinement: usize) -> usize {
    refinement * ((len / h - 1e-9).ceil() as usize).max(1)
}

/// Element counts of the structured resonator mesh.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MeshLayout {
    /// Radial elements under the pillar.
    pub clamp: usize,
    /// Radial elements of each free-membrane segment (before, inside and
    /// after the spoke annulus; the latter two are zero without spokes).
    pub membrane: [usize; 3],
    /// Radial elements over the inner and outer halves of the torus.
    pub torus: [usize; 2],
    /// Elements through the silica thickness.
    pub levels: usize,
    /// Elements along the pillar height.
    pub pillar_levels: usize,
}

impl MeshLayout {
    pub fn new(g: &ResonatorGeometry, refinement: usize) -> Self {
        let h = g.thickness;
        let s = refinement;
        let edge = g.membrane_outer_radius();
        let membrane = match &g.spokes {
            None => [segments(edge - g.pillar_radius, h, s), 0, 0],
            Some(sp) => {
                let seg = |a: f64, b: f64| if b - a > 1e-12 * g.major_radius { segments(b - a, h, s) } else { 0 };
                [seg(g.pillar_radius, sp.inner_radius), seg(sp.inner_radius, sp.outer_radius), seg(sp.outer_radius, edge)]
            }
        };
        let (torus, levels) = if g.minor_radius > 0.0 {
            let a = g.minor_radius;
            let cap = TORUS_CAP_ANGLE_DEG.to_radians();
            ([segments(0.5 * PI * a, h, s), segments(cap * a, h, s)], segments(2.0 * a, h, s))
        } else {
            ([0, 0], s)
        };
        MeshLayout { clamp: segments(g.pillar_radius, h, s), membrane, torus, levels, pillar_levels: segments(g.pillar_height, h, s) }
    }

    pub fn radial_elements(&self) -> usize {
        self.clamp + self.membrane.iter().sum::<usize>() + self.torus.iter().sum::<usize>()
    }

    pub fn element_count(&self) -> usize {
        self.radial_elements() * self.levels + self.clamp * self.pillar_levels
    }

    pub fn node_count(&self) -> usize {
        (self.radial_elements() + 1) * (self.levels + 1) + (self.clamp + 1) * self.pillar_levels
    }
}

/// Meshes the silica disk/torus cross-section plus the conical silicon
/// pillar. Element size is the membrane thickness divided by `refinement`,
/// so doubling `refinement` quadruples the element count.
pub fn generate_mesh(geometry: &ResonatorGeometry, refinement: usize) -> Result<Mesh, FemError> {
    geometry.validate()?;
    if refinement == 0 {
        return Err(FemError::Geometry("refinement must be at least 1".into()));
    }
    let g = geometry;
    let layout = MeshLayout::new(g, refinement);
    let t = g.thickness;
    let zc = 0.5 * t;

    // radial stations with segment index
    let mut stations: Vec<f64> = Vec::with_capacity(layout.radial_elements() + 1);
    let mut col_region: Vec<Region> = Vec::new();
    let push_uniform = |stations: &mut Vec<f64>, col_region: &mut Vec<Region>, a: f64, b: f64, n: usize, reg: Region| {
        for j in 1..=n {
            stations.push(a + (b - a) * j as f64 / n as f64);
            col_region.push(reg);
        }
    };
    stations.push(0.0);
    push_uniform(&mut stations, &mut col_region, 0.0, g.pillar_radius, layout.clamp, Region::Silica);
    let edge = g.membrane_outer_radius();
    match &g.spokes {
        None => push_uniform(&mut stations, &mut col_region, g.pillar_radius, edge, layout.membrane[0], Region::Silica),
        Some(sp) => {
            push_uniform(&mut stations, &mut col_region, g.pillar_radius, sp.inner_radius, layout.membrane[0], Region::Silica);
            push_uniform(&mut stations, &mut col_region, sp.inner_radius, sp.outer_radius, layout.membrane[1], Region::Spokes);
            push_uniform(&mut stations, &mut col_region, sp.outer_radius, edge, layout.membrane[2], Region::Silica);
        }
    }
    let a = g.minor_radius;
    let rc = g.torus_center();
    if a > 0.0 {
        let n_in = layout.torus[0];
        for j in 1..=n_in {
            let phi = 0.5 * PI * j as f64 / n_in as f64;
            stations.push(rc - a * phi.cos());
            col_region.push(Region::Silica);
        }
        let n_out = layout.torus[1];
        let cap = TORUS_CAP_ANGLE_DEG.to_radians();
        for j in 1..=n_out {
            let th = cap * j as f64 / n_out as f64;
            stations.push(rc + a * th.sin());
            col_region.push(Region::Silica);
        }
    }
    let profile = |r: f64| -> (f64, f64) {
        if a > 0.0 && r > rc - a {
            let half = (a * a - (r - rc) * (r - rc)).max(0.0).sqrt();
            ((zc - half).min(0.0), (zc + half).max(t))
        } else {
            (0.0, t)
        }
    };

    let mut mesh = Mesh::empty();
    let ni = stations.len() - 1;
    let nk = layout.levels;
    let silica = mesh.add_block(
        ni,
        nk,
        |i, k| {
            let r = stations[i];
            let (lo, hi) = profile(r);
            [r, lo + (hi - lo) * k as f64 / nk as f64]
        },
        |_, _| None,
        &|i, _| col_region[i],
    );

    // pillar: rows k = 0 (base) .. np (interface, shared with the silica)
    let nc = layout.clamp;
    let np = layout.pillar_levels;
    let tan = g.pillar_sidewall_deg.to_radians().tan();
    let hp = g.pillar_height;
    let pillar = mesh.add_block(
        nc,
        np,
        |i, k| {
            let z = -hp + hp * k as f64 / np as f64;
            let r_edge = g.pillar_radius + (-z) * tan;
            [r_edge * i as f64 / nc as f64, z]
        },
        |i, k| if k == np { Some(silica.id(i, 0)) } else { None },
        &|_, _| Region::Silicon,
    );
    mesh.base_nodes = (0..=nc).map(|i| pillar.id(i, 0)).collect();
    mesh.clamp_edges = (0..nc).map(|i| [silica.id(i, 0), silica.id(i + 1, 0)]).collect();
    mesh.tag_axis();
    debug_assert_eq!(pillar.ni, nc);
    debug_assert_eq!(silica.nk, nk);
    mesh.validate()?;
    Ok(mesh)
}
