//! Thermal-noise spectra, Lorentzian peak fits, gas damping versus
//! pressure and the shot-noise limited displacement sensitivity.
//!
//! Spectra use the double-sided-equivalent convention
//! `S_x(Ω) = (4 k_B T Γ/m)/((Ω_m² − Ω²)² + Γ²Ω²)` in m²/Hz, so that the
//! integral over positive frequency in Hz equals `k_B T/(m Ω_m²)`.

use crate::optim::{levenberg_marquardt, LmOptions, Termination};
use crate::units::{hz_to_rad, BOLTZMANN, HBAR, SPEED_OF_LIGHT};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpectrumError {
    #[error("invalid input: {0}")]
    Domain(String),
    #[error("no resonance peak found in the window: {0}")]
    NoPeak(String),
    #[error("peak fit did not converge ({termination:?} after {iterations} iterations, cost {cost:e})")]
    ConvergenceFailure { termination: Termination, iterations: usize, cost: f64 },
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("spectrum file: {0}")]
    Io(String),
}

/// A measured or synthesized displacement spectrum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumTrace {
    /// Strictly increasing frequency grid (Hz).
    pub frequencies: Vec<f64>,
    /// Displacement spectral density (m²/Hz).
    pub psd: Vec<f64>,
    pub noise_floor: Option<f64>,
}

#[derive(Deserialize)]
struct SpectrumRow {
    f_hz: f64,
    psd_m2_per_hz: f64,
}

impl SpectrumTrace {
    pub fn validate(&self) -> Result<(), SpectrumError> {
        if self.frequencies.len() != self.psd.len() {
            return Err(SpectrumError::Domain("frequency and psd columns differ in length".into()));
        }
        if self.frequencies.len() < 2 {
            return Err(SpectrumError::Domain("spectrum needs at least two bins".into()));
        }
        if self.frequencies.windows(2).any(|w| !(w[1] > w[0])) || !self.frequencies[0].is_finite() {
            return Err(SpectrumError::Domain("frequency grid must be strictly increasing".into()));
        }
        if self.psd.iter().any(|p| !(*p >= 0.0 && p.is_finite())) {
            return Err(SpectrumError::Domain("psd values must be finite and nonnegative".into()));
        }
        Ok(())
    }

    /// Reads `f_hz,psd_m2_per_hz` rows; `#` lines are comments.
    pub fn from_csv_path(path: &Path) -> Result<Self, SpectrumError> {
        let text = std::fs::read_to_string(path).map_err(|e| SpectrumError::Io(format!("{}: {e}", path.display())))?;
        Self::from_csv_str(&text)
    }

    pub fn from_csv_str(text: &str) -> Result<Self, SpectrumError> {
        let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_reader(text.as_bytes());
        let mut trace = SpectrumTrace { frequencies: vec![], psd: vec![], noise_floor: None };
        for row in rdr.deserialize::<SpectrumRow>() {
            let row = row.map_err(|e| SpectrumError::Io(e.to_string()))?;
            trace.frequencies.push(row.f_hz);
            trace.psd.push(row.psd_m2_per_hz);
        }
        trace.validate()?;
        Ok(trace)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), SpectrumError> {
        let mut w = csv::Writer::from_writer(out);
        let io = |e: csv::Error| SpectrumError::Io(e.to_string());
        w.write_record(["f_hz", "psd_m2_per_hz"]).map_err(io)?;
        for (f, p) in self.frequencies.iter().zip(&self.psd) {
            w.write_record([format!("{f:.17e}"), format!("{p:.17e}")]).map_err(io)?;
        }
        w.flush().map_err(|e| SpectrumError::Io(e.to_string()))
    }
}

/// Physical parameters of one thermally driven mode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThermalPeak {
    /// rad/s
    pub omega_m: f64,
    /// Energy decay rate (rad/s), equal to the full width at half maximum in Ω.
    pub gamma_m: f64,
    /// Effective mass (kg).
    pub m_eff: f64,
    /// K
    pub temperature: f64,
}

impl ThermalPeak {
    pub fn validate(&self) -> Result<(), SpectrumError> {
        for (name, v) in [("omega_m", self.omega_m), ("gamma_m", self.gamma_m), ("m_eff", self.m_eff), ("temperature", self.temperature)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(SpectrumError::Domain(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }

    /// Line shape at angular frequency `omega` (m²/Hz).
    pub fn psd(&self, omega: f64) -> f64 {
        let num = 4.0 * BOLTZMANN * self.temperature * self.gamma_m / self.m_eff;
        lorentzian(num, self.omega_m, self.gamma_m, omega)
    }

    /// `⟨x²⟩ = k_B T/(m Ω_m²)`.
    pub fn variance(&self) -> f64 {
        BOLTZMANN * self.temperature / (self.m_eff * self.omega_m * self.omega_m)
    }
}

fn lorentzian(num: f64, omega_m: f64, gamma: f64, omega: f64) -> f64 {
    let d = (omega_m - omega) * (omega_m + omega);
    num / (d * d + gamma * gamma * omega * omega)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthOptions {
    /// Constant added to every bin (m²/Hz).
    pub noise_floor: f64,
    /// Number of averaged periodograms; each bin is scaled by a
    /// Gamma(n, 1/n) variate. `None` disables the scatter.
    pub averages: Option<u32>,
    pub seed: u64,
}

impl Default for SynthOptions {
    fn default() -> Self {
        Self { noise_floor: 0.0, averages: None, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SynthWarning {
    /// The resonance lies outside the grid.
    PeakOutsideGrid,
    /// The grid spans fewer than ±2 linewidths around the resonance.
    NarrowGrid,
    /// Bins near the resonance are wider than the linewidth.
    CoarseGrid,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthesizedSpectrum {
    pub trace: SpectrumTrace,
    pub warnings: Vec<SynthWarning>,
}

/// Synthesizes a thermal-noise spectrum on `grid_hz`. The scatter models the
/// chi-squared statistics of an averaged periodogram, multiplying the peak
/// and the floor alike.
pub fn synth_thermal_spectrum(peak: &ThermalPeak, grid_hz: &[f64], opts: &SynthOptions) -> Result<SynthesizedSpectrum, SpectrumError> {
    peak.validate()?;
    if !(opts.noise_floor >= 0.0 && opts.noise_floor.is_finite()) {
        return Err(SpectrumError::Domain("noise floor must be nonnegative".into()));
    }
    let scatter = match opts.averages {
        None => None,
        Some(0) => return Err(SpectrumError::Domain("averages must be at least 1".into())),
        Some(n) => Some(Gamma::new(n as f64, 1.0 / n as f64).map_err(|e| SpectrumError::Domain(e.to_string()))?),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let psd = grid_hz
        .iter()
        .map(|&f| {
            let s = peak.psd(hz_to_rad(f)) + opts.noise_floor;
            match &scatter {
                Some(g) => s * g.sample(&mut rng),
                None => s,
            }
        })
        .collect();
    let trace = SpectrumTrace { frequencies: grid_hz.to_vec(), psd, noise_floor: Some(opts.noise_floor) };
    trace.validate()?;
    Ok(SynthesizedSpectrum { warnings: grid_warnings(peak, grid_hz), trace })
}

fn grid_warnings(peak: &ThermalPeak, grid: &[f64]) -> Vec<SynthWarning> {
    let f0 = peak.omega_m / (2.0 * std::f64::consts::PI);
    let width = peak.gamma_m / (2.0 * std::f64::consts::PI);
    let (lo, hi) = (grid[0], grid[grid.len() - 1]);
    let mut w = Vec::new();
    if f0 < lo || f0 > hi {
        w.push(SynthWarning::PeakOutsideGrid);
        return w;
    }
    if f0 - 2.0 * width < lo || f0 + 2.0 * width > hi {
        w.push(SynthWarning::NarrowGrid);
    }
    let i = grid.partition_point(|&f| f < f0).clamp(1, grid.len() - 1);
    if grid[i] - grid[i - 1] > width {
        w.push(SynthWarning::CoarseGrid);
    }
    w
}

/// Result of a single-peak fit.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PeakFit {
    pub omega_m: f64,
    pub gamma_m: f64,
    /// Always exactly `omega_m / gamma_m`.
    pub q: f64,
    /// Numerator of the line shape (m²/Hz·(rad/s)³).
    pub amplitude: f64,
    /// Constant background (m²/Hz).
    pub background: f64,
    /// Root-mean-square deviance residual per bin.
    pub residual_rms: f64,
    pub bins: usize,
    pub iterations: usize,
    pub termination: Termination,
}

impl PeakFit {
    pub fn frequency_hz(&self) -> f64 {
        self.omega_m / (2.0 * std::f64::consts::PI)
    }

    pub fn model(&self, f_hz: f64) -> f64 {
        lorentzian(self.amplitude, self.omega_m, self.gamma_m, hz_to_rad(f_hz)) + self.background
    }
}

/// Signed square-root deviance of a Gamma-distributed observation `y` with
/// mean `mu`. The sum of squares is the Whittle log-likelihood up to
/// constants, which is the correct objective for periodogram scatter and
/// reduces to relative least squares for small deviations.
fn deviance(y: f64, mu: f64) -> f64 {
    if !(mu > 0.0) {
        return f64::NAN;
    }
    if y <= 0.0 {
        // an empty bin carries only the linear term
        return -(2.0f64).sqrt();
    }
    let r = y / mu;
    let d2 = 2.0 * ((r - 1.0) - r.ln());
    d2.max(0.0).sqrt().copysign(r - 1.0)
}

/// Fits `A/((Ω_m² − Ω²)² + Γ²Ω²) + B` to the bins of `trace` inside
/// `window_hz`. The start point comes from the highest (lightly smoothed) bin
/// and the half-maximum crossings around it.
pub fn fit_lorentzian(trace: &SpectrumTrace, window_hz: (f64, f64)) -> Result<PeakFit, SpectrumError> {
    trace.validate()?;
    let (lo, hi) = window_hz;
    if !(hi > lo) {
        return Err(SpectrumError::Domain(format!("empty window [{lo}, {hi}] Hz")));
    }
    let idx: Vec<usize> = (0..trace.frequencies.len()).filter(|&i| (lo..=hi).contains(&trace.frequencies[i])).collect();
    if idx.len() < 8 {
        return Err(SpectrumError::InsufficientData(format!("{} bins in the window, need at least 8", idx.len())));
    }
    let f: Vec<f64> = idx.iter().map(|&i| trace.frequencies[i]).collect();
    let y: Vec<f64> = idx.iter().map(|&i| trace.psd[i]).collect();
    let n = f.len();

    let half = 2usize.min(n / 8);
    let smooth: Vec<f64> = (0..n)
        .map(|i| {
            let a = i.saturating_sub(half);
            let b = (i + half + 1).min(n);
            y[a..b].iter().sum::<f64>() / (b - a) as f64
        })
        .collect();
    let (imax, &smax) = smooth.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap();
    let mut sorted = smooth.clone();
    sorted.sort_by(f64::total_cmp);
    let bg0 = sorted[n / 10];
    if imax == 0 || imax == n - 1 {
        return Err(SpectrumError::NoPeak("maximum sits on the window edge".into()));
    }
    if !(smax > 3.0 * bg0) || smax <= 0.0 {
        return Err(SpectrumError::NoPeak(format!("peak {smax:e} is not above the background {bg0:e}")));
    }
    let level = bg0 + 0.5 * (smax - bg0);
    let left = (0..imax).rev().find(|&i| smooth[i] < level).map(|i| f[i]).unwrap_or(f[0]);
    let right = (imax + 1..n).find(|&i| smooth[i] < level).map(|i| f[i]).unwrap_or(f[n - 1]);
    let mut fwhm_hz = right - left;
    let min_bin = f.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
    fwhm_hz = fwhm_hz.max(min_bin);

    let om0 = hz_to_rad(f[imax]);
    let g0 = hz_to_rad(fwhm_hz);
    let h0 = smax - bg0;
    let omegas: Vec<f64> = f.iter().map(|&v| hz_to_rad(v)).collect();
    let unpack = |x: &[f64]| {
        let om = om0 + x[0] * g0;
        let g = g0 * x[1].exp();
        let h = h0 * x[2].exp();
        (om, g, h * g * g * om * om, x[3] * h0)
    };
    let residual = |x: &[f64], out: &mut [f64]| {
        let (om, g, a, b) = unpack(x);
        for k in 0..n {
            out[k] = deviance(y[k], lorentzian(a, om, g, omegas[k]) + b);
        }
    };
    let x0 = [0.0, 0.0, 0.0, bg0.max(0.0) / h0];
    let opts = LmOptions { max_iterations: 400, ..LmOptions::default() };
    let report = levenberg_marquardt(residual, &x0, n, &opts).map_err(|e| SpectrumError::InsufficientData(e.to_string()))?;
    if !report.converged() || !report.cost.is_finite() {
        return Err(SpectrumError::ConvergenceFailure {
            termination: report.termination,
            iterations: report.iterations,
            cost: report.cost,
        });
    }
    let (omega_m, gamma_m, amplitude, background) = unpack(&report.params);
    if !(omega_m > 0.0 && gamma_m > 0.0) {
        return Err(SpectrumError::NoPeak("fit converged to a nonphysical line shape".into()));
    }
    Ok(PeakFit {
        omega_m,
        gamma_m,
        q: omega_m / gamma_m,
        amplitude,
        background,
        residual_rms: (report.cost / n as f64).sqrt(),
        bins: n,
        iterations: report.iterations,
        termination: report.termination,
    })
}

/// Outcome of comparing the Q factors measured on the red and blue sides of
/// the optical resonance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RedBlueCheck {
    /// `|Q_red − Q_blue|` over their mean.
    pub relative_difference: f64,
    pub consistent: bool,
}

/// Symmetric-detuning consistency check: radiation-pressure backaction
/// shifts the two linewidths in opposite directions, so agreement within
/// `tolerance` (0.05 is customary) shows the backaction is negligible.
pub fn red_blue_check(q_red: f64, q_blue: f64, tolerance: f64) -> Result<RedBlueCheck, SpectrumError> {
    if !(q_red > 0.0 && q_blue > 0.0 && tolerance >= 0.0) {
        return Err(SpectrumError::Domain("Q values must be positive and the tolerance nonnegative".into()));
    }
    let rel = (q_red - q_blue).abs() / (0.5 * (q_red + q_blue));
    Ok(RedBlueCheck { relative_difference: rel, consistent: rel <= tolerance })
}

/// Piecewise gas-damping model: `Q⁻¹ = Q_int⁻¹ + c_mol·p` below the
/// crossover and `Q_int⁻¹ + c_vis·√p` above, with `c_vis = c_mol·√p_c` so the
/// two branches meet. Pressures in mbar.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GasModel {
    pub q_intrinsic_inverse: f64,
    pub c_mol: f64,
    /// `None` when every point lies in the molecular regime.
    pub crossover_mbar: Option<f64>,
}

impl GasModel {
    pub fn c_vis(&self) -> Option<f64> {
        self.crossover_mbar.map(|pc| self.c_mol * pc.sqrt())
    }

    pub fn gas_term(&self, p: f64) -> f64 {
        match self.crossover_mbar {
            Some(pc) if p > pc => self.c_mol * (pc * p).sqrt(),
            _ => self.c_mol * p,
        }
    }

    pub fn q_inverse(&self, p: f64) -> f64 {
        self.q_intrinsic_inverse + self.gas_term(p)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GasFit {
    pub model: GasModel,
    pub q_intrinsic: f64,
    pub c_mol: f64,
    pub c_vis: Option<f64>,
    pub crossover_mbar: Option<f64>,
    /// Gas term at 1 mbar relative to the intrinsic damping.
    pub gas_fraction_at_1mbar: f64,
    /// True when the gas term at 1 mbar is below 1% of the intrinsic damping.
    pub negligible_below_1mbar: bool,
    /// Gas share of the total fitted damping for each point below 1 mbar.
    pub low_pressure_fractions: Vec<(f64, f64)>,
    /// Relative residuals in the damping domain.
    pub residuals: Vec<f64>,
    pub cost: f64,
}

/// Fits the piecewise gas model to `(pressure_mbar, Q)` points. For each
/// candidate crossover the model is linear in `(Q_int⁻¹, c_mol)`, solved by
/// nonnegative weighted least squares; the crossover is scanned on a log grid
/// (seeded with `crossover_guess`) and refined by golden section.
pub fn fit_gas_damping(points: &[(f64, f64)], crossover_guess: Option<f64>) -> Result<GasFit, SpectrumError> {
    if points.len() < 4 {
        return Err(SpectrumError::InsufficientData(format!("{} points, need at least 4", points.len())));
    }
    for &(p, q) in points {
        if !(p > 0.0 && p.is_finite() && q > 0.0 && q.is_finite()) {
            return Err(SpectrumError::Domain(format!("pressure and Q must be positive, got ({p}, {q})")));
        }
    }
    let pmin = points.iter().map(|x| x.0).fold(f64::INFINITY, f64::min);
    let pmax = points.iter().map(|x| x.0).fold(0.0, f64::max);
    if pmax / pmin < 10.0 {
        return Err(SpectrumError::InsufficientData(format!("pressures span a factor {:.2}, need at least 10", pmax / pmin)));
    }
    let y: Vec<f64> = points.iter().map(|x| 1.0 / x.1).collect();

    let solve = |pc: Option<f64>| -> (GasModel, f64) {
        let basis: Vec<f64> = points
            .iter()
            .map(|&(p, _)| match pc {
                Some(pc) if p > pc => (pc * p).sqrt(),
                _ => p,
            })
            .collect();
        let (q0, c) = nonneg_line(&basis, &y);
        let model = GasModel { q_intrinsic_inverse: q0, c_mol: c, crossover_mbar: pc };
        let cost = points.iter().zip(&y).map(|(&(p, _), &yk)| ((model.q_inverse(p) - yk) / yk).powi(2)).sum();
        (model, cost)
    };

    let (lmin, lmax) = (pmin.ln(), pmax.ln());
    let mut best = solve(None);
    let mut best_l = f64::INFINITY;
    let mut candidates: Vec<f64> = (0..=200).map(|k| lmin + (lmax - lmin) * k as f64 / 200.0).collect();
    if let Some(g) = crossover_guess.filter(|g| *g > 0.0) {
        candidates.push(g.ln().clamp(lmin, lmax));
    }
    for &l in &candidates {
        let r = solve(Some(l.exp()));
        if r.1 < best.1 * (1.0 - 1e-12) {
            best = r;
            best_l = l;
        }
    }
    if best_l.is_finite() {
        let step = (lmax - lmin) / 200.0;
        let (l, _, _) =
            crate::optim::golden_section(|l| solve(Some(l.exp())).1, (best_l - step).max(lmin), (best_l + step).min(lmax), 1e-10, 200);
        let r = solve(Some(l.exp()));
        if r.1 <= best.1 {
            best = r;
        }
    }
    let (mut model, cost) = best;
    // a crossover at or above the highest pressure means no viscous data
    if model.crossover_mbar.is_some_and(|pc| pc >= pmax * (1.0 - 1e-9)) {
        model.crossover_mbar = None;
    }
    let q0 = model.q_intrinsic_inverse;
    let gas1 = model.gas_term(1.0);
    let frac = if q0 > 0.0 { gas1 / q0 } else { f64::INFINITY };
    let residuals = points.iter().zip(&y).map(|(&(p, _), &yk)| (model.q_inverse(p) - yk) / yk).collect();
    let low_pressure_fractions = points.iter().filter(|x| x.0 < 1.0).map(|&(p, _)| (p, model.gas_term(p) / model.q_inverse(p))).collect();
    Ok(GasFit {
        q_intrinsic: if q0 > 0.0 { 1.0 / q0 } else { f64::INFINITY },
        c_mol: model.c_mol,
        c_vis: model.c_vis(),
        crossover_mbar: model.crossover_mbar,
        gas_fraction_at_1mbar: frac,
        negligible_below_1mbar: frac < 0.01,
        low_pressure_fractions,
        residuals,
        cost,
        model,
    })
}

/// Weighted (relative) least squares for `y ≈ a + b·x` with `a, b ≥ 0`.
fn nonneg_line(x: &[f64], y: &[f64]) -> (f64, f64) {
    let w: Vec<f64> = y.iter().map(|v| 1.0 / (v * v)).collect();
    let s = |f: &dyn Fn(usize) -> f64| (0..x.len()).map(|i| w[i] * f(i)).sum::<f64>();
    let (s1, sx, sxx, sy, sxy) = (s(&|_| 1.0), s(&|i| x[i]), s(&|i| x[i] * x[i]), s(&|i| y[i]), s(&|i| x[i] * y[i]));
    let det = s1 * sxx - sx * sx;
    if det > 0.0 {
        let a = (sxx * sy - sx * sxy) / det;
        let b = (s1 * sxy - sx * sy) / det;
        if a >= 0.0 && b >= 0.0 {
            return (a, b);
        }
    }
    let cost = |a: f64, b: f64| (0..x.len()).map(|i| w[i] * (a + b * x[i] - y[i]).powi(2)).sum::<f64>();
    let only_a = ((sy / s1).max(0.0), 0.0);
    let only_b = (0.0, if sxx > 0.0 { (sxy / sxx).max(0.0) } else { 0.0 });
    if cost(only_a.0, only_a.1) <= cost(only_b.0, only_b.1) {
        only_a
    } else {
        only_b
    }
}

/// Shot-noise limited displacement sensitivity (m/√Hz) of a cavity with
/// finesse `finesse` read out at optical wavelength `lambda` with power
/// `power`, at mechanical angular frequency `omega_m` and cavity energy
/// decay rate `kappa`.
pub fn shot_noise_sensitivity(lambda: f64, finesse: f64, power: f64, omega_m: f64, kappa: f64) -> Result<f64, SpectrumError> {
    for (name, v) in [("wavelength", lambda), ("finesse", finesse), ("power", power), ("kappa", kappa)] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(SpectrumError::Domain(format!("{name} must be positive, got {v}")));
        }
    }
    if !(omega_m >= 0.0 && omega_m.is_finite()) {
        return Err(SpectrumError::Domain(format!("mechanical frequency must be nonnegative, got {omega_m}")));
    }
    let omega_opt = 2.0 * std::f64::consts::PI * SPEED_OF_LIGHT / lambda;
    let sideband = (1.0 + 4.0 * omega_m * omega_m / (kappa * kappa)).sqrt();
    Ok(lambda / (8.0 * std::f64::consts::PI * finesse) * (HBAR * omega_opt / power).sqrt() * sideband)
}

/// `(p, Q)` samples of `model` with multiplicative Gaussian scatter of
/// relative size `noise` on the damping.
pub fn synthesize_pressure_series(model: &GasModel, pressures: &[f64], noise: f64, seed: u64) -> Result<Vec<(f64, f64)>, SpectrumError> {
    let normal = rand_distr::Normal::new(0.0, noise.max(0.0)).map_err(|e| SpectrumError::Domain(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    pressures
        .iter()
        .map(|&p| {
            if !(p > 0.0 && p.is_finite()) {
                return Err(SpectrumError::Domain(format!("pressure {p} must be positive")));
            }
            let eps = if noise > 0.0 { normal.sample(&mut rng) } else { 0.0 };
            Ok((p, 1.0 / (model.q_inverse(p) * (1.0 + eps))))
        })
        .collect()
}

#[derive(Deserialize)]
struct PressureRow {
    p_mbar: f64,
    q: f64,
}

/// Reads a `p_mbar,q` pressure series (`#` lines are comments).
pub fn pressure_series_from_csv(text: &str) -> Result<Vec<(f64, f64)>, SpectrumError> {
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_reader(text.as_bytes());
    rdr.deserialize::<PressureRow>()
        .enumerate()
        .map(|(i, r)| {
            let r = r.map_err(|e| SpectrumError::Io(format!("row {}: {e}", i + 1)))?;
            Ok((r.p_mbar, r.q))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
        (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()
    }

    fn peak(f0: f64, q: f64) -> ThermalPeak {
        let om = hz_to_rad(f0);
        ThermalPeak { omega_m: om, gamma_m: om / q, m_eff: 10e-12, temperature: 300.0 }
    }

    fn around(p: &ThermalPeak, widths: f64, n: usize) -> Vec<f64> {
        let f0 = p.omega_m / (2.0 * PI);
        let w = p.gamma_m / (2.0 * PI);
        linspace(f0 - widths * w, f0 + widths * w, n)
    }

    #[test]
    fn on_resonance_value() {
        let p = peak(24e6, 50_000.0);
        let f0 = p.omega_m / (2.0 * PI);
        let s = synth_thermal_spectrum(&p, &[f0 - 1.0, f0, f0 + 1.0], &SynthOptions::default()).unwrap();
        let expect = 4.0 * BOLTZMANN * p.temperature / (p.m_eff * p.gamma_m * p.omega_m * p.omega_m);
        assert!(((s.trace.psd[1] - expect) / expect).abs() < 1e-12);
    }

    #[test]
    fn area_matches_equipartition() {
        let p = peak(5e6, 20.0);
        let grid = linspace(1.0, 400e6, 400_001);
        let s = synth_thermal_spectrum(&p, &grid, &SynthOptions::default()).unwrap();
        let area: f64 = grid.windows(2).zip(s.trace.psd.windows(2)).map(|(f, v)| 0.5 * (f[1] - f[0]) * (v[0] + v[1])).sum();
        assert!((area / p.variance() - 1.0).abs() < 0.01, "{}", area / p.variance());
    }

    #[test]
    fn synthesis_is_deterministic_per_seed() {
        let p = peak(24e6, 1000.0);
        let grid = around(&p, 10.0, 500);
        let o = SynthOptions { averages: Some(1), seed: 9, noise_floor: 1e-36 };
        let a = synth_thermal_spectrum(&p, &grid, &o).unwrap();
        let b = synth_thermal_spectrum(&p, &grid, &o).unwrap();
        assert_eq!(a, b);
        let c = synth_thermal_spectrum(&p, &grid, &SynthOptions { seed: 10, ..o }).unwrap();
        assert_ne!(a.trace.psd, c.trace.psd);
    }

    #[test]
    fn grid_warnings_fire() {
        let p = peak(24e6, 1000.0);
        let w = synth_thermal_spectrum(&p, &linspace(1e6, 2e6, 10), &SynthOptions::default()).unwrap().warnings;
        assert_eq!(w, vec![SynthWarning::PeakOutsideGrid]);
        let w = synth_thermal_spectrum(&p, &linspace(23.99e6, 24.01e6, 5), &SynthOptions::default()).unwrap().warnings;
        assert_eq!(w, vec![SynthWarning::NarrowGrid]);
        let sharp = peak(24e6, 1e5);
        let w = synth_thermal_spectrum(&sharp, &linspace(23.99e6, 24.01e6, 5), &SynthOptions::default()).unwrap().warnings;
        assert_eq!(w, vec![SynthWarning::CoarseGrid]);
        assert!(synth_thermal_spectrum(&p, &around(&p, 10.0, 400), &SynthOptions::default()).unwrap().warnings.is_empty());
    }

    #[test]
    fn noiseless_round_trip() {
        let p = peak(24e6, 50_000.0);
        let grid = around(&p, 15.0, 1201);
        let s = synth_thermal_spectrum(&p, &grid, &SynthOptions::default()).unwrap();
        let fit = fit_lorentzian(&s.trace, (grid[0], grid[grid.len() - 1])).unwrap();
        assert!((fit.omega_m / p.omega_m - 1.0).abs() < 1e-3);
        assert!((fit.gamma_m / p.gamma_m - 1.0).abs() < 1e-3);
        assert!((fit.q / 50_000.0 - 1.0).abs() < 1e-3);
        assert_eq!(fit.q, fit.omega_m / fit.gamma_m);
    }

    #[test]
    fn scattered_high_q_peak() {
        let p = peak(24e6, 50_000.0);
        let grid = around(&p, 20.0, 4001);
        let floor = 0.01 * p.psd(p.omega_m);
        let s = synth_thermal_spectrum(&p, &grid, &SynthOptions { noise_floor: floor, averages: Some(1), seed: 4 }).unwrap();
        let fit = fit_lorentzian(&s.trace, (grid[0], grid[grid.len() - 1])).unwrap();
        assert!((fit.q / 50_000.0 - 1.0).abs() < 0.05, "{}", fit.q);
    }

    #[test]
    fn overlapping_peaks_fit_separately() {
        let a = peak(24e6, 20_000.0);
        let b = ThermalPeak { omega_m: a.omega_m + 10.0 * a.gamma_m, ..a };
        let fa = a.omega_m / (2.0 * PI);
        let w = a.gamma_m / (2.0 * PI);
        let grid = linspace(fa - 20.0 * w, fa + 30.0 * w, 5001);
        let psd = grid.iter().map(|&f| a.psd(hz_to_rad(f)) + b.psd(hz_to_rad(f))).collect();
        let trace = SpectrumTrace { frequencies: grid, psd, noise_floor: None };
        let qa = a.omega_m / a.gamma_m;
        let qb = b.omega_m / b.gamma_m;
        let fit_a = fit_lorentzian(&trace, (fa - 4.0 * w, fa + 4.0 * w)).unwrap();
        let fb = fa + 10.0 * w;
        let fit_b = fit_lorentzian(&trace, (fb - 4.0 * w, fb + 4.0 * w)).unwrap();
        assert!((fit_a.q / qa - 1.0).abs() < 0.02, "{}", fit_a.q / qa);
        assert!((fit_b.q / qb - 1.0).abs() < 0.02, "{}", fit_b.q / qb);
    }

    #[test]
    fn flat_window_has_no_peak() {
        let trace = SpectrumTrace { frequencies: linspace(1.0, 100.0, 100), psd: vec![1e-30; 100], noise_floor: None };
        assert!(matches!(fit_lorentzian(&trace, (1.0, 100.0)), Err(SpectrumError::NoPeak(_))));
        let rising = SpectrumTrace { frequencies: linspace(1.0, 100.0, 100), psd: linspace(1.0, 100.0, 100), noise_floor: None };
        assert!(matches!(fit_lorentzian(&rising, (1.0, 100.0)), Err(SpectrumError::NoPeak(_))));
        assert!(fit_lorentzian(&trace, (1.0, 5.0)).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let p = peak(24e6, 1000.0);
        let s = synth_thermal_spectrum(&p, &around(&p, 5.0, 50), &SynthOptions::default()).unwrap();
        let mut buf = Vec::new();
        s.trace.write_csv(&mut buf).unwrap();
        let back = SpectrumTrace::from_csv_str(std::str::from_utf8(&buf).unwrap()).unwrap();
        assert_eq!(back.frequencies, s.trace.frequencies);
        assert_eq!(back.psd, s.trace.psd);
        assert!(SpectrumTrace::from_csv_str("f_hz,psd_m2_per_hz\n2,1\n1,1\n").is_err());
    }

    #[test]
    fn red_blue() {
        assert!(red_blue_check(50_000.0, 51_000.0, 0.05).unwrap().consistent);
        assert!(!red_blue_check(50_000.0, 60_000.0, 0.05).unwrap().consistent);
    }

    fn gas_data(q0: f64, c: f64, pc: Option<f64>, ps: &[f64]) -> Vec<(f64, f64)> {
        let m = GasModel { q_intrinsic_inverse: 1.0 / q0, c_mol: c, crossover_mbar: pc };
        ps.iter().map(|&p| (p, 1.0 / m.q_inverse(p))).collect()
    }

    fn log_grid(a: f64, b: f64, n: usize) -> Vec<f64> {
        (0..n).map(|i| (a.ln() + (b.ln() - a.ln()) * i as f64 / (n - 1) as f64).exp()).collect()
    }

    #[test]
    fn gas_fit_recovers_both_regimes() {
        let ps = log_grid(1e-3, 1e3, 30);
        let data = gas_data(30_000.0, 1e-5, Some(20.0), &ps);
        let fit = fit_gas_damping(&data, Some(10.0)).unwrap();
        assert!((fit.q_intrinsic / 30_000.0 - 1.0).abs() < 1e-6);
        assert!((fit.c_mol / 1e-5 - 1.0).abs() < 1e-6);
        assert!((fit.crossover_mbar.unwrap() / 20.0 - 1.0).abs() < 1e-3);
        assert!((fit.c_vis.unwrap() / (1e-5 * 20f64.sqrt()) - 1.0).abs() < 1e-3);
    }

    #[test]
    fn negligible_flag_below_one_mbar() {
        let ps = log_grid(1e-3, 1e3, 30);
        // gas term at 1 mbar is 0.3% of the intrinsic damping
        let fit = fit_gas_damping(&gas_data(30_000.0, 1e-7, Some(50.0), &ps), None).unwrap();
        assert!(fit.negligible_below_1mbar);
        assert!(fit.low_pressure_fractions.iter().all(|x| x.1 < 0.01));
        let fit = fit_gas_damping(&gas_data(30_000.0, 1e-5, Some(50.0), &ps), None).unwrap();
        assert!(!fit.negligible_below_1mbar);
    }

    #[test]
    fn molecular_only_data() {
        let ps = log_grid(1e-2, 1e1, 20);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let noise = rand_distr::Normal::new(0.0, 0.002).unwrap();
        let data: Vec<(f64, f64)> =
            gas_data(30_000.0, 1e-4, None, &ps).into_iter().map(|(p, q)| (p, q * (1.0 + noise.sample(&mut rng)))).collect();
        let fit = fit_gas_damping(&data, None).unwrap();
        assert!(fit.c_vis.is_none() || fit.crossover_mbar.unwrap() > 5.0);
        // independent regression of log(gas term) against log p, at p where the gas term dominates
        let (xs, ys): (Vec<f64>, Vec<f64>) =
            data.iter().filter(|x| x.0 > 0.5).map(|&(p, q)| (p.ln(), (1.0 / (1.0 / q - fit.model.q_intrinsic_inverse)).ln())).unzip();
        let n = xs.len() as f64;
        let mx = xs.iter().sum::<f64>() / n;
        let my = ys.iter().sum::<f64>() / n;
        let slope = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>() / xs.iter().map(|x| (x - mx).powi(2)).sum::<f64>();
        assert!((slope + 1.0).abs() < 0.05, "{slope}");
    }

    #[test]
    fn gas_model_limits() {
        let m = GasModel { q_intrinsic_inverse: 1e-5, c_mol: 1e-6, crossover_mbar: Some(3.0) };
        assert_eq!(m.q_inverse(0.0), 1e-5);
        let pc = 3.0;
        assert!((m.q_inverse(pc * (1.0 + 1e-12)) - m.q_inverse(pc)).abs() < 1e-15);
        let mut last = 0.0;
        for p in log_grid(1e-4, 1e4, 200) {
            let v = m.q_inverse(p);
            assert!(v >= last);
            last = v;
        }
    }

    #[test]
    fn gas_fit_rejects_thin_data() {
        assert!(matches!(
            fit_gas_damping(&[(1.0, 1e4), (2.0, 1e4), (3.0, 1e4), (4.0, 1e4)], None),
            Err(SpectrumError::InsufficientData(_))
        ));
        assert!(matches!(fit_gas_damping(&[(1.0, 1e4), (200.0, 1e4)], None), Err(SpectrumError::InsufficientData(_))));
    }

    #[test]
    fn shot_noise_limits_and_example() {
        let lambda = 1064e-9;
        let bare = lambda / (8.0 * PI * 2e5) * (HBAR * 2.0 * PI * SPEED_OF_LIGHT / lambda / 3e-6).sqrt();
        let on = shot_noise_sensitivity(lambda, 2e5, 3e-6, 0.0, 1e7).unwrap();
        assert!(((on - bare) / bare).abs() < 1e-14);
        let q = shot_noise_sensitivity(lambda, 2e5, 12e-6, 0.0, 1e7).unwrap();
        assert!((q / on - 0.5).abs() < 1e-14);

        // κ = 2π·FSR/F for a 35 µm radius silica ring
        let fsr = SPEED_OF_LIGHT / (1.45 * 2.0 * PI * 35e-6);
        let kappa = 2.0 * PI * fsr / 2e5;
        let s = shot_noise_sensitivity(lambda, 2e5, 3e-6, hz_to_rad(50e6), kappa).unwrap();
        let hand = 5.28e-20 * (1.0 + 4.0 * (hz_to_rad(50e6) / kappa).powi(2)).sqrt();
        assert!(((s - hand) / hand).abs() < 0.01, "{s} vs {hand}");
        assert!(s > 1e-19 && s < 1e-17);
        assert!(shot_noise_sensitivity(lambda, 0.0, 3e-6, 0.0, 1.0).is_err());
        assert!(shot_noise_sensitivity(lambda, 1.0, 3e-6, -1.0, 1.0).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn noiseless_fit_is_identity(f0 in 1e6f64..200e6, q in 100.0f64..1e5, m in 1e-13f64..1e-9, t in 1.0f64..500.0) {
            let p = ThermalPeak { omega_m: hz_to_rad(f0), gamma_m: hz_to_rad(f0) / q, m_eff: m, temperature: t };
            let grid = around(&p, 12.0, 801);
            let s = synth_thermal_spectrum(&p, &grid, &SynthOptions::default()).unwrap();
            let fit = fit_lorentzian(&s.trace, (grid[0], grid[800])).unwrap();
            prop_assert!((fit.omega_m / p.omega_m - 1.0).abs() < 1e-3);
            prop_assert!((fit.gamma_m / p.gamma_m - 1.0).abs() < 1e-3);
            prop_assert!((fit.amplitude / (4.0 * BOLTZMANN * t * p.gamma_m / m) - 1.0).abs() < 1e-3);
        }

        #[test]
        fn shot_noise_monotone(f in 1e3f64..1e6, p in 1e-7f64..1e-3, om in 0.0f64..1e9) {
            let k = 1e8;
            let s = shot_noise_sensitivity(1.55e-6, f, p, om, k).unwrap();
            prop_assert!(shot_noise_sensitivity(1.55e-6, f * 1.1, p, om, k).unwrap() < s);
            prop_assert!(shot_noise_sensitivity(1.55e-6, f, p * 1.1, om, k).unwrap() < s);
            prop_assert!(shot_noise_sensitivity(1.55e-6, f, p, om + 1e6, k).unwrap() > s);
        }
    }
}
