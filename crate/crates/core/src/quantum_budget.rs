//! Design calculators for quantum-limited operation: cavity linewidth,
//! radiation-pressure back-action relative to thermal noise, and the
//! occupancy reachable by resolved-sideband cooling.
//!
//! Powers are the power impinging on the cavity; no coupling efficiency is
//! applied.

use crate::units::{BOLTZMANN, HBAR, SPEED_OF_LIGHT};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BudgetError {
    #[error("invalid design: {0}")]
    Domain(String),
}

/// Cavity-optomechanical operating point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptomechanicalDesign {
    /// Geometry factor: 1 for a linear cavity, π for a ring.
    pub xi: f64,
    /// Optical wavelength (m).
    pub lambda: f64,
    /// Effective mass (kg).
    pub m_eff: f64,
    /// Mechanical angular frequency (rad/s).
    pub omega_m: f64,
    pub finesse: f64,
    /// m
    pub cavity_radius: f64,
    pub refractive_index: f64,
    /// K
    pub bath_temperature: f64,
    pub mechanical_q: f64,
}

impl OptomechanicalDesign {
    /// Cryogenic toroid example: 5 ng, 20 MHz, Q = 80,000 at 300 mK.
    pub fn cryogenic_toroid() -> Self {
        Self {
            xi: PI,
            lambda: 1e-6,
            m_eff: 5e-12,
            omega_m: 2.0 * PI * 20e6,
            finesse: 300_000.0,
            cavity_radius: 35e-6,
            refractive_index: 1.45,
            bath_temperature: 0.3,
            mechanical_q: 80_000.0,
        }
    }

    pub fn validate(&self) -> Result<(), BudgetError> {
        let fields = [
            ("xi", self.xi),
            ("lambda", self.lambda),
            ("m_eff", self.m_eff),
            ("omega_m", self.omega_m),
            ("finesse", self.finesse),
            ("cavity_radius", self.cavity_radius),
            ("bath_temperature", self.bath_temperature),
            ("mechanical_q", self.mechanical_q),
        ];
        for (name, v) in fields {
            if !(v > 0.0 && v.is_finite()) {
                return Err(BudgetError::Domain(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.refractive_index >= 1.0 && self.refractive_index.is_finite()) {
            return Err(BudgetError::Domain(format!("refractive_index must be at least 1, got {}", self.refractive_index)));
        }
        Ok(())
    }
}

/// `κ = c/(n R 𝓕)` (rad/s).
pub fn cavity_linewidth(d: &OptomechanicalDesign) -> Result<f64, BudgetError> {
    d.validate()?;
    Ok(SPEED_OF_LIGHT / (d.refractive_index * d.cavity_radius * d.finesse))
}

/// Back-action to thermal spectral density ratio per watt of input power.
fn ratio_per_watt(d: &OptomechanicalDesign) -> Result<f64, BudgetError> {
    let kappa = cavity_linewidth(d)?;
    let sideband = 1.0 + 4.0 * d.omega_m * d.omega_m / (kappa * kappa);
    let c_medium = SPEED_OF_LIGHT / d.refractive_index;
    Ok(4.0 * d.xi * d.xi / sideband * HBAR * d.mechanical_q * d.finesse * d.finesse
        / (d.lambda * c_medium * PI * BOLTZMANN * d.bath_temperature * d.m_eff * d.omega_m))
}

/// `S_ba/S_th` at the mechanical resonance for input power `power` (W).
pub fn backaction_ratio(d: &OptomechanicalDesign, power: f64) -> Result<f64, BudgetError> {
    if !(power >= 0.0 && power.is_finite()) {
        return Err(BudgetError::Domain(format!("power must be nonnegative, got {power}")));
    }
    Ok(ratio_per_watt(d)? * power)
}

/// Input power at which back-action equals thermal noise (W).
pub fn power_for_unity(d: &OptomechanicalDesign) -> Result<f64, BudgetError> {
    Ok(1.0 / ratio_per_watt(d)?)
}

/// `n = (k_B T/Q)/(ħ Γ_c)` for cooling rate `gamma_c` (rad/s).
pub fn cooling_occupancy(t: f64, q: f64, gamma_c: f64) -> Result<f64, BudgetError> {
    for (name, v) in [("temperature", t), ("Q", q), ("cooling rate", gamma_c)] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(BudgetError::Domain(format!("{name} must be positive, got {v}")));
        }
    }
    Ok(BOLTZMANN * t / q / (HBAR * gamma_c))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CoolingReport {
    pub occupancy: f64,
    pub omega_m_over_kappa: f64,
    /// The occupancy formula presumes `Ω_m > κ`; false flags a design
    /// outside that regime.
    pub resolved_sideband: bool,
}

pub fn cooling_report(d: &OptomechanicalDesign, gamma_c: f64) -> Result<CoolingReport, BudgetError> {
    let kappa = cavity_linewidth(d)?;
    let occupancy = cooling_occupancy(d.bath_temperature, d.mechanical_q, gamma_c)?;
    Ok(CoolingReport { occupancy, omega_m_over_kappa: d.omega_m / kappa, resolved_sideband: d.omega_m > kappa })
}
