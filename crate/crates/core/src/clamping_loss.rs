//! Clamping loss: the dimensionless parameter
//!
//! ```text
//! D = ( cρ/E_mech · Ω_m · ∫_Ap |Δz|² dA )⁻¹
//! ```
//!
//! of a mode radiating into the support through the clamp plane `A_p`, the
//! radiated power `P = cρ Ω_m² ∫|Δz|² dA`, the empirical calibration
//! `Q ≈ a·D` and the saturation model `Q⁻¹ = 1/(aD) + 1/Q_sat`.
//!
//! `c` and `ρ` are those of the radiating silica membrane.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fem::{Material, ModeSolution};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ClampingError {
    #[error("mechanical energy must be positive, got {0:e} J")]
    NonPositiveEnergy(f64),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("degenerate data: {0}")]
    DegenerateData(String),
    #[error("fitted 1/Q vs 1/D slope {slope:e} is not positive; data inconsistent with the saturation model")]
    NegativeSlope { slope: f64 },
}

/// Clamping-loss estimate of one mode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClampLossEstimate {
    /// `D`, or `None` when the clamp plane does not move (no clamping loss).
    pub d_value: Option<f64>,
    pub unbounded: bool,
    /// `P / E_mech` (W/J, i.e. 1/s).
    pub radiated_power_at_unit_energy: f64,
    /// Angular frequency (rad/s).
    pub omega: f64,
}

impl ClampLossEstimate {
    /// Predicted clamping-limited Q for a calibration slope `a`.
    pub fn predicted_q(&self, a: f64) -> Option<f64> {
        self.d_value.map(|d| a * d)
    }
}

/// Evaluates `D` and `P/E_mech` for a mode using `material`'s `c` and `ρ`.
pub fn compute_d(mode: &ModeSolution, material: &Material) -> Result<ClampLossEstimate, ClampingError> {
    compute_d_raw(mode.omega, mode.mechanical_energy, mode.clamp_overlap, material)
}

/// Same as [`compute_d`] from the three mode scalars.
pub fn compute_d_raw(
    omega: f64,
    mechanical_energy: f64,
    clamp_overlap: f64,
    material: &Material,
) -> Result<ClampLossEstimate, ClampingError> {
    if !(mechanical_energy > 0.0) || !mechanical_energy.is_finite() {
        return Err(ClampingError::NonPositiveEnergy(mechanical_energy));
    }
    if !(omega > 0.0) || !omega.is_finite() {
        return Err(ClampingError::InvalidInput(format!("angular frequency {omega} must be positive")));
    }
    if !(clamp_overlap >= 0.0) || !clamp_overlap.is_finite() {
        return Err(ClampingError::InvalidInput(format!("clamp overlap {clamp_overlap} must be nonnegative")));
    }
    material.validate().map_err(|e| ClampingError::InvalidInput(e.to_string()))?;
    let c_rho = material.sound_speed() * material.density;
    let power = c_rho * omega * omega * clamp_overlap;
    let d_value = if clamp_overlap == 0.0 { None } else { Some(1.0 / (c_rho / mechanical_energy * omega * clamp_overlap)) };
    Ok(ClampLossEstimate { d_value, unbounded: d_value.is_none(), radiated_power_at_unit_energy: power / mechanical_energy, omega })
}

fn check_pairs(pairs: &[(f64, f64)], min: usize) -> Result<(), ClampingError> {
    if pairs.len() < min {
        return Err(ClampingError::DegenerateData(format!("need at least {min} (D, Q) pairs, got {}", pairs.len())));
    }
    for &(d, q) in pairs {
        if !(d > 0.0 && d.is_finite() && q > 0.0 && q.is_finite()) {
            return Err(ClampingError::InvalidInput(format!("D = {d} and Q = {q} must be finite and positive")));
        }
    }
    Ok(())
}

/// Zero-intercept fit `Q = a·D`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LinearCalibration {
    pub a: f64,
    /// Standard error of `a` from the residual variance.
    pub a_std_error: f64,
    /// `Q − a·D` per pair.
    pub residuals: Vec<f64>,
    /// RMS of `(Q − a·D)/Q`.
    pub relative_rms: f64,
}

pub fn calibrate_linear(pairs: &[(f64, f64)]) -> Result<LinearCalibration, ClampingError> {
    check_pairs(pairs, 2)?;
    let d0 = pairs[0].0;
    if pairs.iter().all(|&(d, _)| (d - d0).abs() <= 1e-12 * d0) {
        return Err(ClampingError::DegenerateData("all D values are equal".into()));
    }
    let sdd: f64 = pairs.iter().map(|&(d, _)| d * d).sum();
    let sdq: f64 = pairs.iter().map(|&(d, q)| d * q).sum();
    let a = sdq / sdd;
    let residuals: Vec<f64> = pairs.iter().map(|&(d, q)| q - a * d).collect();
    let n = pairs.len() as f64;
    let ss: f64 = residuals.iter().map(|r| r * r).sum();
    let a_std_error = if pairs.len() > 1 { (ss / (n - 1.0) / sdd).sqrt() } else { 0.0 };
    let relative_rms = (pairs.iter().zip(&residuals).map(|(&(_, q), r)| (r / q).powi(2)).sum::<f64>() / n).sqrt();
    Ok(LinearCalibration { a, a_std_error, residuals, relative_rms })
}

/// Fit of `Q⁻¹ = 1/(aD) + 1/Q_sat`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SaturationFit {
    pub a: f64,
    /// `None` when the fitted intercept is not positive (no saturation).
    pub q_sat: Option<f64>,
    pub q_sat_unbounded: bool,
    /// Fitted `1/Q_sat` before clipping.
    pub intercept: f64,
    /// `(Q⁻¹_model − Q⁻¹)/Q⁻¹` per point.
    pub residuals: Vec<f64>,
}

impl SaturationFit {
    pub fn predicted_q(&self, d: f64) -> f64 {
        let inv = 1.0 / (self.a * d) + self.q_sat.map_or(0.0, |q| 1.0 / q);
        1.0 / inv
    }
}

/// Weighted linear least squares of `y = s·x + b` with weights `w`;
/// returns `(s, b, standard error of b)`.
fn weighted_line(x: &[f64], y: &[f64], w: &[f64]) -> Option<(f64, f64, f64)> {
    let (mut sw, mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for i in 0..x.len() {
        sw += w[i];
        sx += w[i] * x[i];
        sy += w[i] * y[i];
        sxx += w[i] * x[i] * x[i];
        sxy += w[i] * x[i] * y[i];
    }
    let det = sw * sxx - sx * sx;
    if !(det.abs() > 1e-14 * sw * sxx) {
        return None;
    }
    let slope = (sw * sxy - sx * sy) / det;
    let intercept = (sxx * sy - sx * sxy) / det;
    let dof = x.len().saturating_sub(2).max(1) as f64;
    let s2 = (0..x.len()).map(|i| w[i] * (y[i] - slope * x[i] - intercept).powi(2)).sum::<f64>() / dof;
    Some((slope, intercept, (s2 * sxx / det).sqrt()))
}

/// Fits the saturation model in the damping domain, `y = 1/Q` against
/// `x = 1/D`, with relative weights `1/y²`. When the intercept is not
/// significantly positive (below twice its standard error, or at round-off
/// level), `Q_sat` is reported unbounded and `a` is refitted through the
/// origin.
pub fn fit_saturation(points: &[(f64, f64)]) -> Result<SaturationFit, ClampingError> {
    check_pairs(points, 3)?;
    let dmin = points.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let dmax = points.iter().map(|p| p.0).fold(0.0, f64::max);
    if dmax < 5.0 * dmin {
        return Err(ClampingError::DegenerateData(format!("D spans only a factor {:.3}; at least 5 is required", dmax / dmin)));
    }
    let x: Vec<f64> = points.iter().map(|p| 1.0 / p.0).collect();
    let y: Vec<f64> = points.iter().map(|p| 1.0 / p.1).collect();
    let w: Vec<f64> = y.iter().map(|v| 1.0 / (v * v)).collect();
    let (slope, intercept, intercept_se) =
        weighted_line(&x, &y, &w).ok_or_else(|| ClampingError::DegenerateData("1/D values are collinear".into()))?;
    if !(slope > 0.0) {
        return Err(ClampingError::NegativeSlope { slope });
    }
    let ymin = y.iter().copied().fold(f64::INFINITY, f64::min);
    let (slope, q_sat) = if intercept > (2.0 * intercept_se).max(1e-9 * ymin) {
        (slope, Some(1.0 / intercept))
    } else {
        let sxx: f64 = (0..x.len()).map(|i| w[i] * x[i] * x[i]).sum();
        let sxy: f64 = (0..x.len()).map(|i| w[i] * x[i] * y[i]).sum();
        (sxy / sxx, None)
    };
    let a = 1.0 / slope;
    let b = q_sat.map_or(0.0, |q| 1.0 / q);
    let residuals = x.iter().zip(&y).map(|(xi, yi)| (slope * xi + b - yi) / yi).collect();
    Ok(SaturationFit { a, q_sat, q_sat_unbounded: q_sat.is_none(), intercept, residuals })
}

/// `(D, Q)` pairs following `Q⁻¹ = 1/(aD) + 1/Q_sat` with multiplicative
/// Gaussian scatter of relative size `noise` on Q.
pub fn synthesize_saturation_pairs(
    a: f64,
    q_sat: Option<f64>,
    ds: &[f64],
    noise: f64,
    seed: u64,
) -> Result<Vec<(f64, f64)>, ClampingError> {
    use rand::SeedableRng;
    use rand_distr::{Distribution, Normal};
    if !(a > 0.0 && a.is_finite()) || q_sat.is_some_and(|q| !(q > 0.0)) {
        return Err(ClampingError::InvalidInput("a and Q_sat must be positive".into()));
    }
    let normal = Normal::new(0.0, noise.max(0.0)).map_err(|e| ClampingError::InvalidInput(e.to_string()))?;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let fit = SaturationFit { a, q_sat, q_sat_unbounded: q_sat.is_none(), intercept: q_sat.map_or(0.0, |q| 1.0 / q), residuals: vec![] };
    Ok(ds
        .iter()
        .map(|&d| {
            let eps = if noise > 0.0 { normal.sample(&mut rng) } else { 0.0 };
            (d, fit.predicted_q(d) * (1.0 + eps))
        })
        .collect())
}

#[derive(Deserialize)]
struct DqRow {
    d: f64,
    q: f64,
}

/// Reads `d,q` rows (`#` lines are comments).
pub fn pairs_from_csv(text: &str) -> Result<Vec<(f64, f64)>, ClampingError> {
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_reader(text.as_bytes());
    let mut out = Vec::new();
    for (i, row) in rdr.deserialize::<DqRow>().enumerate() {
        let r = row.map_err(|e| ClampingError::InvalidInput(format!("row {}: {e}", i + 1)))?;
        if !(r.d > 0.0 && r.q > 0.0 && r.d.is_finite() && r.q.is_finite()) {
            return Err(ClampingError::InvalidInput(format!("row {}: D and Q must be positive", i + 1)));
        }
        out.push((r.d, r.q));
    }
    Ok(out)
}
