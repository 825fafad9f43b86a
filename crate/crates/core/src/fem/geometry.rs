//! Parametric cross-section of a pillar-supported disk or toroid.

use serde::{Deserialize, Serialize};

use super::FemError;

/// The outer cap of the torus beyond this polar angle (measured from the
/// equatorial plane) is not meshed; it keeps the outermost element column
/// from collapsing to a point.
pub const TORUS_CAP_ANGLE_DEG: f64 = 75.0;

/// Spokes connecting the central disk to the rim, represented as an
/// azimuthally averaged annulus of reduced stiffness and mass.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Spokes {
    pub count: u32,
    /// Spoke width (m).
    pub width: f64,
    /// Radius where the spokes leave the central disk (m).
    pub inner_radius: f64,
    /// Radius where the spokes join the rim (m).
    pub outer_radius: f64,
}

impl Spokes {
    /// Fraction of the annulus circumference covered by spokes at its mean radius.
    pub fn fill_fraction(&self) -> f64 {
        let r_mid = 0.5 * (self.inner_radius + self.outer_radius);
        self.count as f64 * self.width / (2.0 * std::f64::consts::PI * r_mid)
    }
}

fn default_pillar_height() -> f64 {
    10.0e-6
}

fn default_sidewall() -> f64 {
    30.0
}

/// Cross-section of the resonator in the (r, z) half-plane. The silica
/// membrane occupies `0 ≤ z ≤ thickness`, the silicon pillar sits below
/// `z = 0` and is fixed at `z = −pillar_height`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResonatorGeometry {
    /// Outer radius of the silica structure, `R` (m).
    pub major_radius: f64,
    /// Minor radius of the rim torus (m); zero for a plain disk.
    #[serde(default)]
    pub minor_radius: f64,
    /// Silica membrane thickness (m).
    pub thickness: f64,
    /// Radius of the pillar top at the silica interface (m).
    pub pillar_radius: f64,
    #[serde(default = "default_pillar_height")]
    pub pillar_height: f64,
    /// Pillar sidewall angle from vertical (degrees); the pillar widens downward.
    #[serde(default = "default_sidewall")]
    pub pillar_sidewall_deg: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spokes: Option<Spokes>,
}

impl ResonatorGeometry {
    pub fn disk(major_radius: f64, thickness: f64, pillar_radius: f64) -> Self {
        ResonatorGeometry {
            major_radius,
            minor_radius: 0.0,
            thickness,
            pillar_radius,
            pillar_height: default_pillar_height(),
            pillar_sidewall_deg: default_sidewall(),
            spokes: None,
        }
    }

    /// Relative undercut `u = L/R` with `L = R − pillar_radius`.
    pub fn undercut(&self) -> f64 {
        (self.major_radius - self.pillar_radius) / self.major_radius
    }

    /// Same geometry with the pillar radius set from a relative undercut.
    pub fn with_undercut(&self, u: f64) -> Self {
        ResonatorGeometry { pillar_radius: self.major_radius * (1.0 - u), ..*self }
    }

    /// Centre radius of the torus cross-section.
    pub fn torus_center(&self) -> f64 {
        self.major_radius - self.minor_radius
    }

    /// Radius where the flat membrane ends (torus inner edge, or `R`).
    pub fn membrane_outer_radius(&self) -> f64 {
        if self.minor_radius > 0.0 {
            self.major_radius - 2.0 * self.minor_radius
        } else {
            self.major_radius
        }
    }

    pub fn validate(&self) -> Result<(), FemError> {
        let bad = |m: String| Err(FemError::Geometry(m));
        if !(self.major_radius > 0.0) || !(self.thickness > 0.0) {
            return bad("radius and thickness must be positive".into());
        }
        if !(self.minor_radius >= 0.0) {
            return bad("torus minor radius must be nonnegative".into());
        }
        if self.minor_radius > 0.0 && 2.0 * self.minor_radius <= self.thickness {
            return bad(format!("torus diameter {} must exceed the membrane thickness {}", 2.0 * self.minor_radius, self.thickness));
        }
        let edge = self.membrane_outer_radius();
        if !(edge > 0.0) {
            return bad("torus is larger than the disk".into());
        }
        if !(self.pillar_radius > 0.0 && self.pillar_radius < edge) {
            return bad(format!("pillar radius {} must lie in (0, {edge}) so the membrane is undercut", self.pillar_radius));
        }
        if !(self.pillar_height > 0.0) {
            return bad("pillar height must be positive".into());
        }
        if !(0.0..80.0).contains(&self.pillar_sidewall_deg) {
            return bad("pillar sidewall angle must lie in [0°, 80°)".into());
        }
        if let Some(s) = &self.spokes {
            if s.count == 0 || !(s.width > 0.0) {
                return bad("spokes need a positive count and width".into());
            }
            if !(s.inner_radius >= self.pillar_radius && s.inner_radius < s.outer_radius && s.outer_radius <= edge) {
                return bad(format!(
                    "spoke annulus [{}, {}] must lie within the free membrane [{}, {edge}]",
                    s.inner_radius, s.outer_radius, self.pillar_radius
                ));
            }
            let f = s.fill_fraction();
            if !(f > 0.0 && f <= 1.0) {
                return bad(format!("spoke fill fraction {f} must lie in (0, 1]"));
            }
        }
        Ok(())
    }
}
