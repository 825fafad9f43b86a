//! Isotropic linear-elastic materials.

use nalgebra::Matrix4;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use super::FemError;

const DEFAULT_MATERIALS: &str = include_str!("../../data/materials.json");

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Material {
    /// Young's modulus (Pa).
    pub youngs_modulus: f64,
    pub poisson_ratio: f64,
    /// Mass density (kg/m³).
    pub density: f64,
    /// Sound speed (m/s); defaults to `sqrt(E/ρ)` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sound_speed: Option<f64>,
}

impl Material {
    pub fn new(youngs_modulus: f64, poisson_ratio: f64, density: f64) -> Result<Self, FemError> {
        let m = Material { youngs_modulus, poisson_ratio, density, sound_speed: None };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<(), FemError> {
        if !(self.youngs_modulus > 0.0 && self.youngs_modulus.is_finite()) {
            return Err(FemError::InvalidMaterial(format!("Young's modulus {} must be positive", self.youngs_modulus)));
        }
        if !(0.0..0.5).contains(&self.poisson_ratio) {
            return Err(FemError::InvalidMaterial(format!("Poisson ratio {} outside [0, 0.5)", self.poisson_ratio)));
        }
        if !(self.density > 0.0 && self.density.is_finite()) {
            return Err(FemError::InvalidMaterial(format!("density {} must be positive", self.density)));
        }
        if let Some(c) = self.sound_speed {
            if !(c > 0.0) {
                return Err(FemError::InvalidMaterial(format!("sound speed {c} must be positive")));
            }
        }
        Ok(())
    }

    /// Speed of sound used for acoustic radiation; `sqrt(E/ρ)` unless supplied.
    pub fn sound_speed(&self) -> f64 {
        self.sound_speed.unwrap_or_else(|| (self.youngs_modulus / self.density).sqrt())
    }

    /// Same material with stiffness and density both multiplied by `fill`.
    pub fn scaled(&self, fill: f64) -> Material {
        Material { youngs_modulus: self.youngs_modulus * fill, density: self.density * fill, ..*self }
    }

    pub fn lame(&self) -> (f64, f64) {
        let (e, nu) = (self.youngs_modulus, self.poisson_ratio);
        let lambda = e * nu / ((1.0 + nu) * (1.0 - 2.0 * nu));
        let mu = e / (2.0 * (1.0 + nu));
        (lambda, mu)
    }

    /// Axisymmetric constitutive matrix for strains `[ε_rr, ε_zz, ε_θθ, γ_rz]`.
    pub fn constitutive(&self) -> Matrix4<f64> {
        let (l, m) = self.lame();
        let d = l + 2.0 * m;
        Matrix4::new(
            d, l, l, 0.0, //
            l, d, l, 0.0, //
            l, l, d, 0.0, //
            0.0, 0.0, 0.0, m,
        )
    }

    pub fn silica() -> Material {
        Self::defaults().remove("silica").expect("bundled silica entry")
    }

    pub fn silicon() -> Material {
        Self::defaults().remove("silicon").expect("bundled silicon entry")
    }

    /// Materials shipped in `data/materials.json`.
    pub fn defaults() -> BTreeMap<String, Material> {
        serde_json::from_str(DEFAULT_MATERIALS).expect("bundled materials.json parses")
    }
}
