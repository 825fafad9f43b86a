//! Intrinsic dissipation of fused silica: relaxation of two-level systems
//! (TLS) and the anharmonic (Akhiezer-type) phonon contribution, together
//! with a temperature fit that adds a constant clamping background.
//!
//! Barrier heights and the asymmetry cutoff are carried in kelvin, so the
//! Boltzmann factor is simply `V/T`.

use crate::optim::{levenberg_marquardt, LmOptions, Termination};
use crate::quadrature::{integrate, QuadratureError};
use serde::{Deserialize, Serialize};
use statrs::function::erf::erf;
use std::path::Path;
use thiserror::Error;

/// Upper bound on thermoelastic damping quoted for these resonators. It is
/// not modeled and is well below every other contribution.
pub const THERMOELASTIC_UPPER_BOUND: f64 = 1e-7;

const DEFAULT_TABLES: &str = include_str!("../data/silica_tables.csv");

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IntrinsicLossError {
    #[error("invalid input: {0}")]
    Domain(String),
    #[error("TLS integral did not converge: requested relative tolerance {requested:e}, achieved {achieved:e}")]
    Quadrature { requested: f64, achieved: f64 },
    #[error("temperature {t} K outside table coverage [{min}, {max}] K")]
    OutOfRange { t: f64, min: f64, max: f64 },
    #[error("material table: {0}")]
    Table(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("temperature fit did not converge ({termination:?} after {iterations} iterations, cost {cost:e}, last parameters {params:?})")]
    ConvergenceFailure { termination: Termination, iterations: usize, cost: f64, params: Vec<f64> },
}

/// Parameters of the TLS relaxation model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TlsParams {
    /// Exponent of the barrier-height distribution.
    pub zeta: f64,
    /// Barrier scale (K).
    pub v0: f64,
    /// Ratio of `v0` to the asymmetry cutoff `Δc`.
    pub v0_over_delta_c: f64,
    /// log10 of the attempt time τ₀ (s).
    pub log10_tau0: f64,
    /// Dimensionless amplitude.
    pub c_tls: f64,
}

impl TlsParams {
    /// Fused-silica values from the low-temperature fit (34 MHz mode).
    pub fn silica() -> Self {
        Self { zeta: 0.28, v0: 667.0, v0_over_delta_c: 7.7, log10_tau0: -12.1, c_tls: 1.8e-3 }
    }

    /// Same material, with the attempt time from the high-temperature fit of
    /// the 38 MHz mode.
    pub fn silica_high_temperature() -> Self {
        Self { log10_tau0: -12.05, ..Self::silica() }
    }

    /// Literature means for vitreous silica, useful as fit starting points.
    pub fn literature_means() -> Self {
        Self { log10_tau0: -12.2, c_tls: 1.45e-3, ..Self::silica() }
    }

    pub fn tau0(&self) -> f64 {
        10f64.powf(self.log10_tau0)
    }

    pub fn delta_c(&self) -> f64 {
        self.v0 / self.v0_over_delta_c
    }

    pub fn validate(&self) -> Result<(), IntrinsicLossError> {
        let bad = |m: &str| Err(IntrinsicLossError::Domain(m.to_string()));
        if !(self.zeta >= 0.0 && self.zeta < 1.0) {
            return bad("zeta must lie in [0, 1)");
        }
        if !(self.v0 > 0.0 && self.v0.is_finite()) {
            return bad("v0 must be positive");
        }
        if !(self.v0_over_delta_c > 0.0 && self.v0_over_delta_c.is_finite()) {
            return bad("v0_over_delta_c must be positive");
        }
        if !self.log10_tau0.is_finite() {
            return bad("log10_tau0 must be finite");
        }
        if !(self.c_tls > 0.0 && self.c_tls.is_finite()) {
            return bad("c_tls must be positive");
        }
        Ok(())
    }
}

/// Numerical settings of the TLS integral.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TlsQuadrature {
    pub rel_tol: f64,
    /// Upper integration limit in units of `v0`.
    pub cutoff_v0: f64,
    pub max_segments: usize,
}

impl Default for TlsQuadrature {
    fn default() -> Self {
        Self { rel_tol: 1e-8, cutoff_v0: 12.0, max_segments: 4000 }
    }
}

fn check_point(t: f64, omega: f64) -> Result<(), IntrinsicLossError> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(IntrinsicLossError::Domain(format!("temperature must be positive, got {t}")));
    }
    if !(omega > 0.0 && omega.is_finite()) {
        return Err(IntrinsicLossError::Domain(format!("angular frequency must be positive, got {omega}")));
    }
    Ok(())
}

/// TLS damping with the default quadrature settings.
pub fn q_tls_inverse(t: f64, omega: f64, params: &TlsParams) -> Result<f64, IntrinsicLossError> {
    q_tls_inverse_with(t, omega, params, &TlsQuadrature::default())
}

/// Integrand of the barrier integral after the substitution
/// `w = (V/V0)^(1-ζ)`, which absorbs the `V^-ζ` endpoint singularity. The
/// Debye factor `Ωτ e^(V/T)/(1 + Ω²τ² e^(2V/T))` is written as
/// `1/(2 cosh(V/T + ln Ωτ₀))` to avoid overflow.
pub(crate) fn tls_integrand(w: f64, t: f64, ln_omega_tau0: f64, params: &TlsParams) -> f64 {
    let v = params.v0 * w.powf(1.0 / (1.0 - params.zeta));
    let x = v / params.v0;
    let arg = v / t + ln_omega_tau0;
    let gauss = (-0.5 * x * x).exp();
    if arg.abs() > 700.0 {
        return 0.0;
    }
    gauss * 0.5 / arg.cosh()
}

/// Prefactor turning the `w` integral into `Q⁻¹`.
pub(crate) fn tls_prefactor(t: f64, params: &TlsParams) -> f64 {
    let erf_term = erf(std::f64::consts::SQRT_2 * t / params.delta_c());
    params.c_tls * erf_term / t * params.v0 / (1.0 - params.zeta)
}

pub fn q_tls_inverse_with(t: f64, omega: f64, params: &TlsParams, quad: &TlsQuadrature) -> Result<f64, IntrinsicLossError> {
    check_point(t, omega)?;
    params.validate()?;
    if !(quad.cutoff_v0 > 0.0) {
        return Err(IntrinsicLossError::Domain("cutoff must be positive".into()));
    }
    let ln_wt = omega.ln() + params.log10_tau0 * std::f64::consts::LN_10;
    let p = 1.0 - params.zeta;
    let w_of = |v: f64| (v / params.v0).powf(p);
    let w_max = quad.cutoff_v0.powf(p);

    // The Debye factor peaks at V* = T ln(1/Ωτ₀) with width ~T; pinning
    // breakpoints around it keeps narrow low-temperature peaks resolved.
    let v_star = -t * ln_wt;
    let mut breaks = vec![0.0];
    for k in [-30.0, -3.0, 0.0, 3.0, 30.0] {
        let v = v_star + k * t;
        if v > 0.0 {
            let w = w_of(v);
            if w < w_max && w > *breaks.last().unwrap() {
                breaks.push(w);
            }
        }
    }
    breaks.push(w_max);

    let mut total: f64 = 0.0;
    let mut abs_err = 0.0;
    let mut pieces = Vec::with_capacity(breaks.len());
    for win in breaks.windows(2) {
        let r = integrate(|w| tls_integrand(w, t, ln_wt, params), win[0], win[1], quad.rel_tol, 0.0, quad.max_segments);
        match r {
            Ok(q) => pieces.push(q),
            Err(QuadratureError::ToleranceNotReached { .. }) => {
                // retry with an absolute floor set by the running total
                let floor = quad.rel_tol * 1e-3 * total.max(1e-300);
                let q = integrate(|w| tls_integrand(w, t, ln_wt, params), win[0], win[1], quad.rel_tol, floor, quad.max_segments)
                    .map_err(|e| quad_error(e, quad.rel_tol))?;
                pieces.push(q);
            }
            Err(e) => return Err(quad_error(e, quad.rel_tol)),
        }
        total += pieces.last().unwrap().value;
    }
    for q in &pieces {
        abs_err += q.abs_error;
    }
    if total > 0.0 && abs_err > quad.rel_tol * total * 10.0 {
        return Err(IntrinsicLossError::Quadrature { requested: quad.rel_tol, achieved: abs_err / total });
    }
    Ok((tls_prefactor(t, params) * total).max(0.0))
}

fn quad_error(e: QuadratureError, requested: f64) -> IntrinsicLossError {
    match e {
        QuadratureError::ToleranceNotReached { achieved, .. } => IntrinsicLossError::Quadrature { requested, achieved },
        QuadratureError::NonFinite { x } => {
            IntrinsicLossError::Quadrature { requested, achieved: if x.is_nan() { f64::NAN } else { f64::INFINITY } }
        }
    }
}

/// Temperature-dependent material data for the anharmonic term.
#[derive(Debug, Clone, PartialEq)]
pub struct MaterialTables {
    pub temperatures: Vec<f64>,
    /// Volumetric specific heat (J/(K·m³)).
    pub cv: Vec<f64>,
    /// Sound velocity (m/s).
    pub v_sound: Vec<f64>,
    /// Thermal-phonon lifetime (s).
    pub tau_th: Vec<f64>,
    /// kg/m³
    pub density: f64,
    pub grueneisen_sq: f64,
    /// `v_D³ / v³`.
    pub debye_ratio: f64,
}

/// Interpolated table values at one temperature.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TableSample {
    pub cv: f64,
    pub v_sound: f64,
    pub tau_th: f64,
}

#[derive(Deserialize)]
struct TableRow {
    t_k: f64,
    cv_j_per_k_m3: f64,
    v_m_per_s: f64,
    tau_th_s: f64,
}

impl MaterialTables {
    /// Bundled fused-silica tables.
    pub fn silica() -> Self {
        Self::from_csv_str(DEFAULT_TABLES).expect("bundled silica tables are valid")
    }

    pub fn from_csv_path(path: &Path) -> Result<Self, IntrinsicLossError> {
        let text = std::fs::read_to_string(path).map_err(|e| IntrinsicLossError::Table(format!("{}: {e}", path.display())))?;
        Self::from_csv_str(&text)
    }

    /// Parses `t_k,cv_j_per_k_m3,v_m_per_s,tau_th_s` rows; `#` lines are
    /// comments. Silica defaults are used for density, γ² and the Debye ratio.
    pub fn from_csv_str(text: &str) -> Result<Self, IntrinsicLossError> {
        let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_reader(text.as_bytes());
        let mut rows = Vec::new();
        for rec in rdr.deserialize::<TableRow>() {
            rows.push(rec.map_err(|e| IntrinsicLossError::Table(e.to_string()))?);
        }
        let tables = Self {
            temperatures: rows.iter().map(|r| r.t_k).collect(),
            cv: rows.iter().map(|r| r.cv_j_per_k_m3).collect(),
            v_sound: rows.iter().map(|r| r.v_m_per_s).collect(),
            tau_th: rows.iter().map(|r| r.tau_th_s).collect(),
            density: 2203.0,
            grueneisen_sq: 3.6,
            debye_ratio: 0.322,
        };
        tables.validate()?;
        Ok(tables)
    }

    pub fn validate(&self) -> Result<(), IntrinsicLossError> {
        let n = self.temperatures.len();
        if n < 2 {
            return Err(IntrinsicLossError::Table("need at least two rows".into()));
        }
        if self.cv.len() != n || self.v_sound.len() != n || self.tau_th.len() != n {
            return Err(IntrinsicLossError::Table("columns have different lengths".into()));
        }
        if self.temperatures.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(IntrinsicLossError::Table("temperatures must be strictly increasing".into()));
        }
        let all_pos = |v: &[f64]| v.iter().all(|x| *x > 0.0 && x.is_finite());
        if !(all_pos(&self.temperatures) && all_pos(&self.cv) && all_pos(&self.v_sound) && all_pos(&self.tau_th)) {
            return Err(IntrinsicLossError::Table("all tabulated values must be positive".into()));
        }
        for (name, x) in [("density", self.density), ("grueneisen_sq", self.grueneisen_sq), ("debye_ratio", self.debye_ratio)] {
            if !(x > 0.0 && x.is_finite()) {
                return Err(IntrinsicLossError::Table(format!("{name} must be positive")));
            }
        }
        Ok(())
    }

    pub fn range(&self) -> (f64, f64) {
        (self.temperatures[0], *self.temperatures.last().unwrap())
    }

    pub fn sample(&self, t: f64) -> Result<TableSample, IntrinsicLossError> {
        let (min, max) = self.range();
        if !(t >= min && t <= max) {
            return Err(IntrinsicLossError::OutOfRange { t, min, max });
        }
        Ok(TableSample {
            cv: pchip(&self.temperatures, &self.cv, t),
            v_sound: pchip(&self.temperatures, &self.v_sound, t),
            tau_th: pchip(&self.temperatures, &self.tau_th, t),
        })
    }
}

/// Monotone piecewise-cubic Hermite interpolation (Fritsch-Carlson slopes).
/// Never overshoots the data between neighbouring nodes.
fn pchip(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    let n = xs.len();
    let i = match xs.partition_point(|&xi| xi <= x) {
        0 => 0,
        k if k >= n => n - 2,
        k => k - 1,
    };
    let h: Vec<f64> = xs.windows(2).map(|w| w[1] - w[0]).collect();
    let d: Vec<f64> = ys.windows(2).zip(&h).map(|(w, h)| (w[1] - w[0]) / h).collect();
    let slope = |k: usize| -> f64 {
        if k == 0 {
            end_slope(h[0], h.get(1).copied(), d[0], d.get(1).copied())
        } else if k == n - 1 {
            end_slope(h[n - 2], if n > 2 { Some(h[n - 3]) } else { None }, d[n - 2], if n > 2 { Some(d[n - 3]) } else { None })
        } else if d[k - 1] * d[k] <= 0.0 {
            0.0
        } else {
            let w1 = 2.0 * h[k] + h[k - 1];
            let w2 = h[k] + 2.0 * h[k - 1];
            (w1 + w2) / (w1 / d[k - 1] + w2 / d[k])
        }
    };
    let (m0, m1) = (slope(i), slope(i + 1));
    let s = (x - xs[i]) / h[i];
    let (s2, s3) = (s * s, s * s * s);
    let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
    let h10 = s3 - 2.0 * s2 + s;
    let h01 = -2.0 * s3 + 3.0 * s2;
    let h11 = s3 - s2;
    h00 * ys[i] + h10 * h[i] * m0 + h01 * ys[i + 1] + h11 * h[i] * m1
}

/// Three-point end slope, limited to keep monotonicity.
fn end_slope(h0: f64, h1: Option<f64>, d0: f64, d1: Option<f64>) -> f64 {
    let (Some(h1), Some(d1)) = (h1, d1) else { return d0 };
    let m = ((2.0 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
    if m * d0 <= 0.0 {
        0.0
    } else if d0 * d1 <= 0.0 && m.abs() > 3.0 * d0.abs() {
        3.0 * d0
    } else {
        m
    }
}

/// Anharmonic damping `γ² C_v v T/(2ρ v_D³) · Ωτ/(1 + Ω²τ²)`.
pub fn q_anh_inverse(t: f64, omega: f64, tables: &MaterialTables) -> Result<f64, IntrinsicLossError> {
    check_point(t, omega)?;
    let s = tables.sample(t)?;
    Ok(anharmonic_formula(t, omega, s, tables))
}

fn anharmonic_formula(t: f64, omega: f64, s: TableSample, tables: &MaterialTables) -> f64 {
    let vd3 = tables.debye_ratio * s.v_sound.powi(3);
    let wt = omega * s.tau_th;
    tables.grueneisen_sq * s.cv * s.v_sound * t / (2.0 * tables.density * vd3) * wt / (1.0 + wt * wt)
}

/// Per-mechanism damping contributions and their sum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LossBudget {
    pub temperature_k: f64,
    pub omega: f64,
    pub tls: f64,
    pub anharmonic: f64,
    pub clamping: f64,
    pub gas: f64,
    pub total: f64,
}

impl LossBudget {
    pub fn q_total(&self) -> f64 {
        1.0 / self.total
    }

    /// Adds a gas-damping contribution and updates the total.
    pub fn with_gas(mut self, gas: f64) -> Self {
        self.gas = gas;
        self.total = self.tls + self.anharmonic + self.clamping + self.gas;
        self
    }
}

pub fn total_damping(
    t: f64,
    omega: f64,
    tls: &TlsParams,
    tables: &MaterialTables,
    q_cl_inverse: f64,
) -> Result<LossBudget, IntrinsicLossError> {
    if !(q_cl_inverse >= 0.0 && q_cl_inverse.is_finite()) {
        return Err(IntrinsicLossError::Domain(format!("clamping damping must be nonnegative, got {q_cl_inverse}")));
    }
    let q_tls = q_tls_inverse(t, omega, tls)?;
    let q_anh = q_anh_inverse(t, omega, tables)?;
    Ok(LossBudget {
        temperature_k: t,
        omega,
        tls: q_tls,
        anharmonic: q_anh,
        clamping: q_cl_inverse,
        gas: 0.0,
        total: q_tls + q_anh + q_cl_inverse,
    })
}

/// Which of the three temperature-fit parameters are free.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TemperatureFitOptions {
    pub fit_log10_tau0: bool,
    pub fit_c_tls: bool,
    pub fit_background: bool,
    /// Starting value of the background damping.
    pub initial_q_cl_inverse: Option<f64>,
    pub min_points: usize,
    /// Minimum spanned temperature range (K).
    pub min_span_k: f64,
    pub lm: LmOptions,
}

impl Default for TemperatureFitOptions {
    fn default() -> Self {
        Self {
            fit_log10_tau0: true,
            fit_c_tls: true,
            fit_background: true,
            initial_q_cl_inverse: None,
            min_points: 6,
            min_span_k: 50.0,
            lm: LmOptions { max_iterations: 300, ..LmOptions::default() },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TemperaturePointResidual {
    pub t_k: f64,
    pub q_measured: f64,
    pub q_inverse_model: f64,
    /// `(model − measured)/measured` in the damping domain.
    pub relative: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TemperatureFitResult {
    pub tls: TlsParams,
    pub q_cl_inverse: f64,
    pub residuals: Vec<TemperaturePointResidual>,
    /// Sum of squared relative residuals.
    pub cost: f64,
    pub iterations: usize,
    pub termination: Termination,
    /// One-sigma errors of (log10 τ₀, C, q_cl⁻¹) for the free parameters.
    pub std_errors: Option<[Option<f64>; 3]>,
    /// True when the unconstrained background came out negative and was
    /// pinned at zero.
    pub background_clipped: bool,
}

/// Fits log10 τ₀, C and a constant background to measured `(T, Q)` pairs
/// with ζ, V₀ and V₀/Δc held at `priors`. The anharmonic term has no free
/// parameters. Residuals are relative, in the damping domain.
pub fn fit_temperature(
    data: &[(f64, f64)],
    omega: f64,
    tables: &MaterialTables,
    priors: &TlsParams,
    opts: &TemperatureFitOptions,
) -> Result<TemperatureFitResult, IntrinsicLossError> {
    priors.validate()?;
    if !(omega > 0.0 && omega.is_finite()) {
        return Err(IntrinsicLossError::Domain("angular frequency must be positive".into()));
    }
    if data.len() < opts.min_points {
        return Err(IntrinsicLossError::InsufficientData(format!("{} points, need at least {}", data.len(), opts.min_points)));
    }
    for &(t, q) in data {
        check_point(t, omega)?;
        if !(q > 0.0 && q.is_finite()) {
            return Err(IntrinsicLossError::Domain(format!("Q must be positive, got {q} at {t} K")));
        }
    }
    let tmin = data.iter().map(|d| d.0).fold(f64::INFINITY, f64::min);
    let tmax = data.iter().map(|d| d.0).fold(f64::NEG_INFINITY, f64::max);
    if tmax - tmin < opts.min_span_k {
        return Err(IntrinsicLossError::InsufficientData(format!(
            "temperatures span {:.1} K, need at least {} K",
            tmax - tmin,
            opts.min_span_k
        )));
    }
    let anh: Vec<f64> = data.iter().map(|&(t, _)| q_anh_inverse(t, omega, tables)).collect::<Result<_, _>>()?;
    let y: Vec<f64> = data.iter().map(|d| 1.0 / d.1).collect();
    let ymin = y.iter().copied().fold(f64::INFINITY, f64::min);
    // background in units of the smallest damping keeps the Jacobian balanced
    let bg_scale = ymin;
    let bg0 = opts.initial_q_cl_inverse.unwrap_or(0.1 * ymin) / bg_scale;

    let run = |fit_bg: bool, bg_start: f64| -> Result<(Vec<f64>, crate::optim::LmReport), IntrinsicLossError> {
        let full0 = [priors.log10_tau0, priors.c_tls.ln(), bg_start];
        let free = [opts.fit_log10_tau0, opts.fit_c_tls, fit_bg];
        let idx: Vec<usize> = (0..3).filter(|&i| free[i]).collect();
        let x0: Vec<f64> = idx.iter().map(|&i| full0[i]).collect();
        let expand = |x: &[f64]| {
            let mut full = full0;
            for (k, &i) in idx.iter().enumerate() {
                full[i] = x[k];
            }
            full
        };
        let mut quad_err: Option<IntrinsicLossError> = None;
        let residual = |x: &[f64], out: &mut [f64]| {
            let p = expand(x);
            let params = TlsParams { log10_tau0: p[0], c_tls: p[1].exp(), ..*priors };
            for (k, &(t, _)) in data.iter().enumerate() {
                out[k] = match q_tls_inverse(t, omega, &params) {
                    Ok(v) => (v + anh[k] + p[2] * bg_scale - y[k]) / y[k],
                    Err(e) => {
                        quad_err.get_or_insert(e);
                        f64::NAN
                    }
                };
            }
        };
        if idx.is_empty() {
            let mut r = vec![0.0; data.len()];
            let mut residual = residual;
            residual(&[], &mut r);
            let cost = r.iter().map(|v| v * v).sum();
            let report = crate::optim::LmReport {
                params: vec![],
                residuals: r,
                cost,
                iterations: 0,
                termination: Termination::SmallStep,
                covariance: None,
            };
            return Ok((full0.to_vec(), report));
        }
        let report =
            levenberg_marquardt(residual, &x0, data.len(), &opts.lm).map_err(|e| IntrinsicLossError::InsufficientData(e.to_string()))?;
        if !report.cost.is_finite() {
            return Err(quad_err.unwrap_or(IntrinsicLossError::Domain("non-finite residuals".into())));
        }
        let full = expand(&report.params).to_vec();
        Ok((full, report))
    };

    let (mut full, mut report) = run(opts.fit_background, bg0)?;
    let mut clipped = false;
    if full[2] < 0.0 {
        clipped = true;
        (full, report) = run(false, 0.0)?;
    }
    if !report.converged() {
        return Err(IntrinsicLossError::ConvergenceFailure {
            termination: report.termination,
            iterations: report.iterations,
            cost: report.cost,
            params: vec![full[0], full[1].exp(), full[2] * bg_scale],
        });
    }
    let tls = TlsParams { log10_tau0: full[0], c_tls: full[1].exp(), ..*priors };
    let q_cl = (full[2] * bg_scale).max(0.0);

    let free = [opts.fit_log10_tau0, opts.fit_c_tls, opts.fit_background && !clipped];
    let std_errors = report.covariance.as_ref().map(|cov| {
        let mut out = [None; 3];
        let mut k = 0;
        for i in 0..3 {
            if free[i] {
                let s = cov[(k, k)].max(0.0).sqrt();
                out[i] = Some(match i {
                    1 => s * tls.c_tls,
                    2 => s * bg_scale,
                    _ => s,
                });
                k += 1;
            }
        }
        out
    });
    let residuals = data
        .iter()
        .zip(&report.residuals)
        .zip(&y)
        .map(|((&(t, q), &r), &yk)| TemperaturePointResidual { t_k: t, q_measured: q, q_inverse_model: yk * (1.0 + r), relative: r })
        .collect();
    Ok(TemperatureFitResult {
        tls,
        q_cl_inverse: q_cl,
        residuals,
        cost: report.cost,
        iterations: report.iterations,
        termination: report.termination,
        std_errors,
        background_clipped: clipped,
    })
}

/// Noise-free or noisy `(T, Q)` data from the full model; `noise` is the
/// relative standard deviation applied multiplicatively to the damping.
pub fn synthesize_temperature_series(
    temperatures: &[f64],
    omega: f64,
    tls: &TlsParams,
    tables: &MaterialTables,
    q_cl_inverse: f64,
    noise: f64,
    seed: u64,
) -> Result<Vec<(f64, f64)>, IntrinsicLossError> {
    use rand::SeedableRng;
    use rand_distr::{Distribution, Normal};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, noise.max(0.0)).map_err(|e| IntrinsicLossError::Domain(e.to_string()))?;
    temperatures
        .iter()
        .map(|&t| {
            let b = total_damping(t, omega, tls, tables, q_cl_inverse)?;
            let eps = if noise > 0.0 { normal.sample(&mut rng) } else { 0.0 };
            Ok((t, 1.0 / (b.total * (1.0 + eps))))
        })
        .collect()
}

#[derive(Deserialize)]
struct TemperatureRow {
    t_k: f64,
    q: f64,
}

/// Reads a `t_k,q` temperature series (`#` lines are comments).
pub fn temperature_series_from_csv(text: &str) -> Result<Vec<(f64, f64)>, IntrinsicLossError> {
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_reader(text.as_bytes());
    rdr.deserialize::<TemperatureRow>()
        .enumerate()
        .map(|(i, r)| {
            let r = r.map_err(|e| IntrinsicLossError::Domain(format!("row {}: {e}", i + 1)))?;
            Ok((r.t_k, r.q))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::units::hz_to_rad;
    use proptest::prelude::*;

    fn w38() -> f64 {
        hz_to_rad(38e6)
    }

    fn w34() -> f64 {
        hz_to_rad(34e6)
    }

    /// Composite trapezoid over the transformed domain.
    fn brute_force(t: f64, omega: f64, p: &TlsParams, n: usize) -> f64 {
        let ln_wt = omega.ln() + p.log10_tau0 * std::f64::consts::LN_10;
        let wmax = 12f64.powf(1.0 - p.zeta);
        let h = wmax / n as f64;
        let mut s = 0.5 * (tls_integrand(0.0, t, ln_wt, p) + tls_integrand(wmax, t, ln_wt, p));
        for i in 1..n {
            s += tls_integrand(i as f64 * h, t, ln_wt, p);
        }
        tls_prefactor(t, p) * s * h
    }

    /// Direct evaluation in the original variable V, written from scratch.
    fn direct_v_integral(t: f64, omega: f64, p: &TlsParams) -> f64 {
        let tau0 = p.tau0();
        let n = 400_000;
        // split at V = 1 K to handle V^-ζ with a power-law substitution there
        let mut s = 0.0;
        let vmax = 12.0 * p.v0;
        let h = vmax / n as f64;
        for i in 0..n {
            let v = (i as f64 + 0.5) * h;
            let e = (v / t).min(700.0).exp();
            let debye = omega * tau0 * e / (1.0 + (omega * tau0 * e).powi(2));
            s += (v / p.v0).powf(-p.zeta) * (-(v * v) / (2.0 * p.v0 * p.v0)).exp() * debye * h;
        }
        p.c_tls * erf(2f64.sqrt() * t / p.delta_c()) / t * s
    }

    #[test]
    fn matches_brute_force_at_room_temperature() {
        let p = TlsParams::silica();
        let a = q_tls_inverse(300.0, w38(), &p).unwrap();
        let b = brute_force(300.0, w38(), &p, 1_000_000);
        assert!(((a - b) / b).abs() < 1e-6, "{a} vs {b}");
        // untransformed midpoint rule is cruder but independent of the substitution
        let c = direct_v_integral(300.0, w38(), &p);
        assert!(((a - c) / c).abs() < 1e-3, "{a} vs {c}");
    }

    #[test]
    fn peak_near_fifty_kelvin() {
        let p = TlsParams::silica();
        let mut best = (0.0, 0.0);
        for k in 10..=150 {
            let t = k as f64;
            let q = q_tls_inverse(t, w34(), &p).unwrap();
            if q > best.1 {
                best = (t, q);
            }
        }
        assert!((40.0..=60.0).contains(&best.0), "peak at {} K", best.0);
    }

    #[test]
    fn vanishes_at_low_temperature() {
        let p = TlsParams::silica();
        let peak = q_tls_inverse(50.0, w34(), &p).unwrap();
        let q01 = q_tls_inverse(0.1, w34(), &p).unwrap();
        let bf = brute_force(0.1, w34(), &p, 1_000_000);
        assert!(((q01 - bf) / bf).abs() < 1e-6, "{q01} vs {bf}");
        // the decay is slow: a few percent of the peak at 0.1 K
        assert!(q01 / peak < 0.03);
        let q = q_tls_inverse(1e-3, w34(), &p).unwrap();
        assert!(q / peak < 1e-3, "ratio {}", q / peak);
        let q = q_tls_inverse(1e-5, w34(), &p).unwrap();
        assert!(q / peak < 1e-4);
    }

    #[test]
    fn cutoff_doubling_is_invisible() {
        let p = TlsParams::silica();
        for t in [0.5, 5.0, 50.0, 300.0, 600.0] {
            let a = q_tls_inverse(t, w38(), &p).unwrap();
            let b = q_tls_inverse_with(t, w38(), &p, &TlsQuadrature { cutoff_v0: 24.0, ..Default::default() }).unwrap();
            assert!(((a - b) / a).abs() < 1e-7, "T = {t}: {a} vs {b}");
        }
    }

    #[test]
    fn omega_tau_scaling_invariance() {
        let p = TlsParams::silica();
        for k in [0.1, 3.0, 20.0] {
            let q = TlsParams { log10_tau0: p.log10_tau0 - f64::log10(k), ..p };
            for t in [2.0, 60.0, 400.0] {
                let a = q_tls_inverse(t, w38(), &p).unwrap();
                let b = q_tls_inverse(t, k * w38(), &q).unwrap();
                assert!(((a - b) / a).abs() < 1e-9, "k = {k}, T = {t}");
            }
        }
    }

    #[test]
    fn domain_errors() {
        let p = TlsParams::silica();
        assert!(matches!(q_tls_inverse(0.0, w38(), &p), Err(IntrinsicLossError::Domain(_))));
        assert!(matches!(q_tls_inverse(-3.0, w38(), &p), Err(IntrinsicLossError::Domain(_))));
        assert!(matches!(q_tls_inverse(10.0, 0.0, &p), Err(IntrinsicLossError::Domain(_))));
        let bad = TlsParams { zeta: 1.0, ..p };
        assert!(q_tls_inverse(10.0, w38(), &bad).is_err());
        let tables = MaterialTables::silica();
        assert!(matches!(q_anh_inverse(1.0, w38(), &tables), Err(IntrinsicLossError::OutOfRange { .. })));
        assert!(matches!(q_anh_inverse(700.0, w38(), &tables), Err(IntrinsicLossError::OutOfRange { .. })));
    }

    #[test]
    fn tables_load_and_reject_garbage() {
        let t = MaterialTables::silica();
        assert!(t.temperatures.len() >= 10);
        assert_eq!(t.range().0, 5.0);
        assert!(MaterialTables::from_csv_str("t_k,cv_j_per_k_m3,v_m_per_s,tau_th_s\n1,2,3,4\n").is_err());
        assert!(MaterialTables::from_csv_str("t_k,cv_j_per_k_m3,v_m_per_s,tau_th_s\n1,2,3,4\n2,-1,3,4\n").is_err());
        assert!(MaterialTables::from_csv_str("t_k,cv_j_per_k_m3,v_m_per_s,tau_th_s\n2,2,3,4\n1,2,3,4\n").is_err());
        assert!(MaterialTables::from_csv_str("foo,bar\n1,2\n").is_err());
    }

    #[test]
    fn pchip_reproduces_nodes_and_stays_bounded() {
        let t = MaterialTables::silica();
        for (i, &ti) in t.temperatures.iter().enumerate() {
            let s = t.sample(ti).unwrap();
            assert_eq!(s.cv, t.cv[i]);
            assert_eq!(s.tau_th, t.tau_th[i]);
        }
        for w in 0..t.temperatures.len() - 1 {
            for k in 1..20 {
                let x = t.temperatures[w] + (t.temperatures[w + 1] - t.temperatures[w]) * k as f64 / 20.0;
                let s = t.sample(x).unwrap();
                for (col, v) in [(&t.cv, s.cv), (&t.v_sound, s.v_sound), (&t.tau_th, s.tau_th)] {
                    let lo = col[w].min(col[w + 1]);
                    let hi = col[w].max(col[w + 1]);
                    assert!(v >= lo - 1e-12 * hi && v <= hi + 1e-12 * hi);
                }
            }
        }
    }

    #[test]
    fn anharmonic_hand_evaluation() {
        let t = MaterialTables::silica();
        let i = t.temperatures.iter().position(|&x| x == 300.0).unwrap();
        let (cv, v, tau) = (t.cv[i], t.v_sound[i], t.tau_th[i]);
        let omega = w38();
        let hand = 3.6 * cv * v * 300.0 / (2.0 * 2203.0 * 0.322 * v * v * v) * (omega * tau) / (1.0 + (omega * tau).powi(2));
        let got = q_anh_inverse(300.0, omega, &t).unwrap();
        assert!(((got - hand) / hand).abs() < 1e-12);
    }

    #[test]
    fn anharmonic_debye_factor_limits() {
        let t = MaterialTables::silica();
        let s = t.sample(300.0).unwrap();
        // Ωτ = 1: Debye factor is exactly one half
        let omega = 1.0 / s.tau_th;
        let prefactor = t.grueneisen_sq * s.cv * s.v_sound * 300.0 / (2.0 * t.density * t.debye_ratio * s.v_sound.powi(3));
        let q = q_anh_inverse(300.0, omega, &t).unwrap();
        assert!((q / prefactor - 0.5).abs() < 1e-14);
        // Ωτ ≪ 1: linear in Ω
        let a = q_anh_inverse(300.0, w38(), &t).unwrap();
        let b = q_anh_inverse(300.0, w38() / 2.0, &t).unwrap();
        assert!((a / b - 2.0).abs() < 0.02);
    }

    #[test]
    fn budget_with_only_background() {
        let t = MaterialTables::silica();
        // vanishing TLS amplitude and a frequency where Ωτ_th is negligible
        let tls = TlsParams { c_tls: 1e-300, ..TlsParams::silica() };
        let b = total_damping(300.0, 1e-30, &tls, &t, 1.0 / 140_000.0).unwrap();
        assert!(b.tls < 1e-200 && b.anharmonic < 1e-30);
        assert!((b.q_total() - 140_000.0).abs() < 1e-6);
    }

    #[test]
    fn budget_is_additive() {
        let t = MaterialTables::silica();
        let p = TlsParams::silica_high_temperature();
        for temp in [20.0, 150.0, 295.0, 410.0] {
            let b = total_damping(temp, w38(), &p, &t, 1.0 / 140_000.0).unwrap();
            let sum = b.tls + b.anharmonic + b.clamping + b.gas;
            assert!(((b.total - sum) / sum).abs() <= 1e-15);
            assert!(b.total >= b.tls && b.total >= b.anharmonic && b.total >= b.clamping);
        }
        assert!(total_damping(300.0, w38(), &p, &t, -1.0).is_err());
    }

    #[test]
    fn room_temperature_and_410k_quality_factors() {
        let t = MaterialTables::silica();
        let p = TlsParams::silica_high_temperature();
        let q295 = total_damping(295.0, w38(), &p, &t, 1.0 / 140_000.0).unwrap().q_total();
        let q410 = total_damping(410.0, w38(), &p, &t, 1.0 / 140_000.0).unwrap().q_total();
        assert!((0.7 * 32_000.0..=1.4 * 32_000.0).contains(&q295), "{q295}");
        assert!((0.7 * 80_000.0..=1.4 * 80_000.0).contains(&q410), "{q410}");
    }

    fn fit_temps() -> Vec<f64> {
        vec![20.0, 40.0, 60.0, 80.0, 100.0, 130.0, 160.0, 200.0, 240.0, 280.0, 320.0, 360.0, 400.0]
    }

    #[test]
    fn noiseless_fit_recovers_parameters() {
        let t = MaterialTables::silica();
        let truth = TlsParams::silica();
        let data = synthesize_temperature_series(&fit_temps(), w34(), &truth, &t, 1.0 / 140_000.0, 0.0, 0).unwrap();
        let fit = fit_temperature(&data, w34(), &t, &TlsParams::literature_means(), &Default::default()).unwrap();
        assert!((fit.tls.log10_tau0 / truth.log10_tau0 - 1.0).abs() < 1e-6);
        assert!((fit.tls.c_tls / truth.c_tls - 1.0).abs() < 1e-6);
        assert!((fit.q_cl_inverse * 140_000.0 - 1.0).abs() < 1e-6);
    }

    #[test]
    fn noisy_fit_within_tolerances() {
        let t = MaterialTables::silica();
        let truth = TlsParams::silica();
        let temps: Vec<f64> = (0..30).map(|i| 15.0 + 13.0 * i as f64).collect();
        let data = synthesize_temperature_series(&temps, w34(), &truth, &t, 1.0 / 140_000.0, 0.03, 7).unwrap();
        let fit = fit_temperature(&data, w34(), &t, &TlsParams::literature_means(), &Default::default()).unwrap();
        assert!((fit.tls.log10_tau0 - truth.log10_tau0).abs() < 0.15);
        assert!((fit.tls.c_tls / truth.c_tls - 1.0).abs() < 0.25);
        assert!((fit.q_cl_inverse * 140_000.0 - 1.0).abs() < 0.30, "{}", fit.q_cl_inverse * 140_000.0);
        assert!(fit.std_errors.is_some());
    }

    #[test]
    fn null_background_is_recovered() {
        let t = MaterialTables::silica();
        let data = synthesize_temperature_series(&fit_temps(), w34(), &TlsParams::silica(), &t, 0.0, 0.0, 0).unwrap();
        let fit = fit_temperature(&data, w34(), &t, &TlsParams::literature_means(), &Default::default()).unwrap();
        let ymin = data.iter().map(|d| 1.0 / d.1).fold(f64::INFINITY, f64::min);
        assert!(fit.q_cl_inverse < 0.1 * ymin);
        assert!(fit.q_cl_inverse >= 0.0);
    }

    #[test]
    fn full_fit_beats_every_single_parameter_restriction() {
        let t = MaterialTables::silica();
        let data = synthesize_temperature_series(&fit_temps(), w34(), &TlsParams::silica(), &t, 1.0 / 140_000.0, 0.03, 3).unwrap();
        let priors = TlsParams::literature_means();
        let full = fit_temperature(&data, w34(), &t, &priors, &Default::default()).unwrap();
        for k in 0..3 {
            let opts = TemperatureFitOptions { fit_log10_tau0: k == 0, fit_c_tls: k == 1, fit_background: k == 2, ..Default::default() };
            let restricted = fit_temperature(&data, w34(), &t, &priors, &opts).unwrap();
            assert!(full.cost < restricted.cost, "param {k}: {} vs {}", full.cost, restricted.cost);
        }
    }

    #[test]
    fn fit_rejects_thin_data() {
        let t = MaterialTables::silica();
        let p = TlsParams::silica();
        let few = synthesize_temperature_series(&[50.0, 100.0, 150.0], w34(), &p, &t, 0.0, 0.0, 0).unwrap();
        assert!(matches!(fit_temperature(&few, w34(), &t, &p, &Default::default()), Err(IntrinsicLossError::InsufficientData(_))));
        let narrow: Vec<f64> = (0..8).map(|i| 100.0 + 5.0 * i as f64).collect();
        let d = synthesize_temperature_series(&narrow, w34(), &p, &t, 0.0, 0.0, 0).unwrap();
        assert!(matches!(fit_temperature(&d, w34(), &t, &p, &Default::default()), Err(IntrinsicLossError::InsufficientData(_))));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]
        #[test]
        fn damping_is_nonnegative(t in 5.0f64..600.0, f_mhz in 1.0f64..200.0) {
            let w = hz_to_rad(f_mhz * 1e6);
            prop_assert!(q_tls_inverse(t, w, &TlsParams::silica()).unwrap() >= 0.0);
            prop_assert!(q_anh_inverse(t, w, &MaterialTables::silica()).unwrap() >= 0.0);
        }

        #[test]
        fn tls_nonnegative_down_to_one_kelvin(t in 1.0f64..600.0, f_mhz in 1.0f64..200.0) {
            prop_assert!(q_tls_inverse(t, hz_to_rad(f_mhz * 1e6), &TlsParams::silica()).unwrap() >= 0.0);
        }
    }
}
