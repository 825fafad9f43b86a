//! Four-node bilinear axisymmetric ring element with 2×2 Gauss quadrature.
//!
//! Local node order is counter-clockwise in the (r, z) plane:
//! `(−1,−1), (1,−1), (1,1), (−1,1)`. Each node carries `(u_r, u_z)`.
//! Strains are `[ε_rr, ε_zz, ε_θθ, γ_rz]` with `ε_θθ = u_r/r`, and every
//! integral carries the `2πr` ring weight.

use nalgebra::{SMatrix, SVector};
use std::f64::consts::PI;

use super::material::Material;

pub type ElementMatrix = SMatrix<f64, 8, 8>;

const XI: [f64; 4] = [-1.0, 1.0, 1.0, -1.0];
const ETA: [f64; 4] = [-1.0, -1.0, 1.0, 1.0];

/// 2-point Gauss-Legendre abscissae on [−1, 1]; both weights are 1.
pub const GAUSS_2: [f64; 2] = [-0.577_350_269_189_625_8, 0.577_350_269_189_625_8];

pub fn shape(xi: f64, eta: f64) -> [f64; 4] {
    let mut n = [0.0; 4];
    for a in 0..4 {
        n[a] = 0.25 * (1.0 + XI[a] * xi) * (1.0 + ETA[a] * eta);
    }
    n
}

fn shape_derivs(xi: f64, eta: f64) -> ([f64; 4], [f64; 4]) {
    let mut dxi = [0.0; 4];
    let mut deta = [0.0; 4];
    for a in 0..4 {
        dxi[a] = 0.25 * XI[a] * (1.0 + ETA[a] * eta);
        deta[a] = 0.25 * ETA[a] * (1.0 + XI[a] * xi);
    }
    (dxi, deta)
}

/// Quadrature-point data: shape values, global derivatives, radius and
/// the volume weight `2π r detJ`.
pub struct QuadPoint {
    pub n: [f64; 4],
    pub dr: [f64; 4],
    pub dz: [f64; 4],
    pub r: f64,
    pub det_j: f64,
    pub weight: f64,
}

pub fn quad_points(coords: &[[f64; 2]; 4]) -> [QuadPoint; 4] {
    let mk = |xi: f64, eta: f64| {
        let n = shape(xi, eta);
        let (dxi, deta) = shape_derivs(xi, eta);
        let (mut j11, mut j12, mut j21, mut j22) = (0.0, 0.0, 0.0, 0.0);
        let mut r = 0.0;
        for a in 0..4 {
            j11 += dxi[a] * coords[a][0];
            j12 += dxi[a] * coords[a][1];
            j21 += deta[a] * coords[a][0];
            j22 += deta[a] * coords[a][1];
            r += n[a] * coords[a][0];
        }
        let det_j = j11 * j22 - j12 * j21;
        let mut dr = [0.0; 4];
        let mut dz = [0.0; 4];
        for a in 0..4 {
            dr[a] = (j22 * dxi[a] - j12 * deta[a]) / det_j;
            dz[a] = (-j21 * dxi[a] + j11 * deta[a]) / det_j;
        }
        QuadPoint { n, dr, dz, r, det_j, weight: 2.0 * PI * r * det_j }
    };
    [mk(GAUSS_2[0], GAUSS_2[0]), mk(GAUSS_2[1], GAUSS_2[0]), mk(GAUSS_2[1], GAUSS_2[1]), mk(GAUSS_2[0], GAUSS_2[1])]
}

/// Jacobian determinants at the four quadrature points.
pub fn jacobian_dets(coords: &[[f64; 2]; 4]) -> [f64; 4] {
    let q = quad_points(coords);
    [q[0].det_j, q[1].det_j, q[2].det_j, q[3].det_j]
}

pub fn strain_matrix(q: &QuadPoint) -> SMatrix<f64, 4, 8> {
    let mut b = SMatrix::<f64, 4, 8>::zeros();
    for a in 0..4 {
        let c = 2 * a;
        b[(0, c)] = q.dr[a];
        b[(1, c + 1)] = q.dz[a];
        b[(2, c)] = q.n[a] / q.r;
        b[(3, c)] = q.dz[a];
        b[(3, c + 1)] = q.dr[a];
    }
    b
}

pub fn stiffness(coords: &[[f64; 2]; 4], material: &Material) -> ElementMatrix {
    let d = material.constitutive();
    let mut k = ElementMatrix::zeros();
    for q in quad_points(coords).iter() {
        let b = strain_matrix(q);
        k += b.transpose() * d * b * q.weight;
    }
    k
}

/// Consistent mass matrix.
pub fn mass(coords: &[[f64; 2]; 4], material: &Material) -> ElementMatrix {
    let mut m = ElementMatrix::zeros();
    for q in quad_points(coords).iter() {
        for a in 0..4 {
            for b in 0..4 {
                let v = material.density * q.n[a] * q.n[b] * q.weight;
                m[(2 * a, 2 * b)] += v;
                m[(2 * a + 1, 2 * b + 1)] += v;
            }
        }
    }
    m
}

/// Strain energy `½ uᵀ K u` of one element for nodal displacements `u`.
pub fn strain_energy(coords: &[[f64; 2]; 4], material: &Material, u: &SVector<f64, 8>) -> f64 {
    let d = material.constitutive();
    let mut e = 0.0;
    for q in quad_points(coords).iter() {
        let eps = strain_matrix(q) * u;
        e += 0.5 * eps.dot(&(d * eps)) * q.weight;
    }
    e
}
