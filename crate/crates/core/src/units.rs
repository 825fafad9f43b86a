//! Physical constants and unit conversions.
//!
//! Frequencies are stored as angular rates (rad/s) everywhere inside the
//! crate; conversion to ordinary frequency happens only at I/O boundaries.

use std::f64::consts::PI;

/// Boltzmann constant (J/K).
pub const BOLTZMANN: f64 = 1.380_649e-23;
/// Reduced Planck constant (J·s).
pub const HBAR: f64 = 1.054_571_817e-34;
/// Speed of light in vacuum (m/s).
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

#[inline]
pub fn hz_to_rad(f_hz: f64) -> f64 {
    2.0 * PI * f_hz
}

#[inline]
pub fn rad_to_hz(omega: f64) -> f64 {
    omega / (2.0 * PI)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn conversion_round_trip() {
        let f = 38.0e6;
        assert!((rad_to_hz(hz_to_rad(f)) - f).abs() < 1e-6);
        assert!((hz_to_rad(1.0) - 2.0 * PI).abs() < 1e-15);
    }
}
