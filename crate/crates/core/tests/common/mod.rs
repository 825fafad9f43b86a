//! Independent oracles shared by the integration and acceptance tests.
#![allow(dead_code)]

use std::f64::consts::PI;

use resonator_q::fem::{modal_analysis, BoundaryConditions, Material, MaterialMap, Mesh, ModeSolution, Region, SolverOptions};

/// Composite Simpson rule with `n` (even) panels.
pub fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(a + i as f64 * h);
    }
    s * h / 3.0
}

/// Bessel function of the first kind from its integral representation
/// `Jₙ(x) = (1/π) ∫₀^π cos(nτ − x sin τ) dτ`.
pub fn bessel_j(n: u32, x: f64) -> f64 {
    simpson(|t| (n as f64 * t - x * t.sin()).cos(), 0.0, PI, 2000) / PI
}

pub fn bisect(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let mut fa = f(a);
    assert!(fa * f(b) < 0.0, "root not bracketed");
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        let fm = f(m);
        if fm == 0.0 {
            return m;
        }
        if fa * fm < 0.0 {
            b = m;
        } else {
            a = m;
            fa = fm;
        }
    }
    0.5 * (a + b)
}

/// First root of `λ J₀(λ) = (1 − ν) J₁(λ)`.
pub fn disk_contour_root(nu: f64) -> f64 {
    bisect(|l| l * bessel_j(0, l) - (1.0 - nu) * bessel_j(1, l), 1.0, 3.0)
}

/// Observed order from three solutions at mesh sizes h, h/2, h/4.
pub fn observed_order(f: [f64; 3]) -> f64 {
    ((f[0] - f[1]) / (f[1] - f[2])).abs().log2()
}

pub fn single(region: Region, material: Material) -> MaterialMap {
    let mut m = MaterialMap::new();
    m.insert(region, material);
    m
}

pub const ROD_RADIUS: f64 = 1e-3;
pub const ROD_LENGTH: f64 = 20e-3;

pub fn rod_material() -> Material {
    Material::new(73e9, 0.0, 2203.0).unwrap()
}

/// Exact first longitudinal frequency of the fixed-free rod (Hz).
pub fn rod_exact_hz() -> f64 {
    rod_material().sound_speed() / (4.0 * ROD_LENGTH)
}

/// First longitudinal mode of a slender fixed-free cylinder (Hz).
pub fn rod_frequency_hz(refinement: usize) -> f64 {
    let mesh = Mesh::rectangle(0.0, ROD_RADIUS, 0.0, ROD_LENGTH, refinement, 10 * refinement, Region::Silica).unwrap();
    let modes =
        modal_analysis(&mesh, &single(Region::Silica, rod_material()), BoundaryConditions::default(), 1, 0.0, &SolverOptions::default())
            .unwrap();
    modes[0].frequency_hz()
}

pub const DISK_RADIUS: f64 = 100e-6;
pub const DISK_THICKNESS: f64 = 1e-6;

/// Plane-stress radial contour frequency of the free disk (Hz).
pub fn disk_exact_hz() -> f64 {
    let m = Material::silica();
    let cp = (m.youngs_modulus / (m.density * (1.0 - m.poisson_ratio.powi(2)))).sqrt();
    disk_contour_root(m.poisson_ratio) * cp / DISK_RADIUS / (2.0 * PI)
}

/// Free thin disk: modes near `target_hz`; returns the most radial one.
pub fn disk_modes(refinement: usize, target_hz: f64, n_modes: usize) -> Vec<ModeSolution> {
    let mesh = Mesh::rectangle(0.0, DISK_RADIUS, 0.0, DISK_THICKNESS, 16 * refinement, refinement, Region::Silica).unwrap();
    modal_analysis(
        &mesh,
        &single(Region::Silica, Material::silica()),
        BoundaryConditions::free(),
        n_modes,
        2.0 * PI * target_hz,
        &SolverOptions::default(),
    )
    .unwrap()
}

pub fn disk_contour_hz(refinement: usize) -> f64 {
    let modes = disk_modes(refinement, disk_exact_hz(), 4);
    let best = modes.iter().max_by(|a, b| a.radial_fraction.total_cmp(&b.radial_fraction)).unwrap();
    best.frequency_hz()
}
