//! Two coupled damped oscillators: a bare radial and a bare flexural mode
//! whose angular frequencies and quality factors depend linearly on the
//! relative undercut `u`, coupled at a constant rate `g`.
//!
//! The complex eigenvalues are
//!
//! ```text
//! λ± = (Ωr + Ωf)/2 + i(Γr + Γf)/4 ± sqrt( ((Ωr − Ωf)/2 + i(Γr − Γf)/4)² + g⁴/(4 Ωr Ωf) )
//! ```
//!
//! with `Γ = Ω/Q`. The coupled branches are `Ω± = Re λ±` and
//! `Q± = Re λ± / (2 Im λ±)`.
//!
//! Internally every frequency is angular (rad/s). The JSON and CSV
//! representations use ordinary frequency (Hz).

use crate::optim::{golden_section, levenberg_marquardt, LmOptions};
use crate::units::{hz_to_rad, rad_to_hz};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CoupledModeError {
    #[error("model undefined at u = {u}: {reason}")]
    Domain { u: f64, reason: String },
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("dispersion CSV: {0}")]
    Parse(String),
    #[error("fit is degenerate: {0}")]
    FitDegenerate(String),
    #[error("coupling-rate search failed: {reason} (objective at g = 0: {objective_at_zero:e}, best g/2π = {best_g_hz:e} Hz)")]
    ConvergenceFailure { reason: String, objective_at_zero: f64, best_g_hz: f64 },
}

/// Linear undercut dependence of one bare mode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(into = "TrendHz", from = "TrendHz")]
pub struct BareModeTrend {
    /// Angular frequency at zero undercut (rad/s).
    pub omega0: f64,
    /// Angular-frequency slope per unit undercut (rad/s).
    pub omega1: f64,
    pub q0: f64,
    pub q1: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TrendHz {
    f0_hz: f64,
    f1_hz: f64,
    q0: f64,
    q1: f64,
}

impl From<BareModeTrend> for TrendHz {
    fn from(t: BareModeTrend) -> Self {
        TrendHz { f0_hz: rad_to_hz(t.omega0), f1_hz: rad_to_hz(t.omega1), q0: t.q0, q1: t.q1 }
    }
}

impl From<TrendHz> for BareModeTrend {
    fn from(t: TrendHz) -> Self {
        BareModeTrend { omega0: hz_to_rad(t.f0_hz), omega1: hz_to_rad(t.f1_hz), q0: t.q0, q1: t.q1 }
    }
}

impl BareModeTrend {
    pub fn omega_at(&self, u: f64) -> f64 {
        self.omega0 + self.omega1 * u
    }

    pub fn q_at(&self, u: f64) -> f64 {
        self.q0 + self.q1 * u
    }

    /// Damping rate `Γ = Ω/Q` at `u`.
    pub fn gamma_at(&self, u: f64) -> f64 {
        self.omega_at(u) / self.q_at(u)
    }

    fn check(&self, u: f64, name: &str) -> Result<(), CoupledModeError> {
        let (w, q) = (self.omega_at(u), self.q_at(u));
        if !(w > 0.0 && w.is_finite()) {
            return Err(CoupledModeError::Domain { u, reason: format!("bare {name} frequency {w:e} rad/s is not positive") });
        }
        if !(q > 0.0 && q.is_finite()) {
            return Err(CoupledModeError::Domain { u, reason: format!("bare {name} Q {q:e} is not positive") });
        }
        Ok(())
    }
}

/// Two linearly tuned bare modes plus a constant coupling rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(into = "ModelHz", from = "ModelHz")]
pub struct CoupledModeModel {
    pub radial: BareModeTrend,
    pub flexural: BareModeTrend,
    /// Coupling rate (rad/s).
    pub g: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelHz {
    radial: BareModeTrend,
    flexural: BareModeTrend,
    g_hz: f64,
}

impl From<CoupledModeModel> for ModelHz {
    fn from(m: CoupledModeModel) -> Self {
        ModelHz { radial: m.radial, flexural: m.flexural, g_hz: rad_to_hz(m.g) }
    }
}

impl From<ModelHz> for CoupledModeModel {
    fn from(m: ModelHz) -> Self {
        CoupledModeModel { radial: m.radial, flexural: m.flexural, g: hz_to_rad(m.g_hz) }
    }
}

impl CoupledModeModel {
    /// A model shaped like the measured radial-breathing / flexural pair:
    /// the flexural mode tunes faster with undercut and crosses the radial
    /// mode near `u ≈ 0.42`, coupled at `g/2π = 14 MHz`.
    pub fn reference() -> Self {
        CoupledModeModel {
            radial: BareModeTrend { omega0: hz_to_rad(76.0e6), omega1: hz_to_rad(-12.0e6), q0: 4000.0, q1: 2000.0 },
            flexural: BareModeTrend { omega0: hz_to_rad(90.0e6), omega1: hz_to_rad(-45.0e6), q0: 120.0, q1: 60.0 },
            g: hz_to_rad(14.0e6),
        }
    }

    /// Swaps the roles of the two bare modes.
    pub fn swapped(&self) -> Self {
        CoupledModeModel { radial: self.flexural, flexural: self.radial, g: self.g }
    }
}

/// Label attached to a measured point. Either the coupled branch it was
/// recorded on, or the bare-mode character it was identified with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Branch {
    #[serde(rename = "upper")]
    Upper,
    #[serde(rename = "lower")]
    Lower,
    #[serde(rename = "radial-like", alias = "radial")]
    RadialLike,
    #[serde(rename = "flexural-like", alias = "flexural")]
    FlexuralLike,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BareMode {
    Radial,
    Flexural,
}

impl BareMode {
    fn other(self) -> Self {
        match self {
            BareMode::Radial => BareMode::Flexural,
            BareMode::Flexural => BareMode::Radial,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DispersionPoint {
    /// Relative undercut `L/R`.
    pub u: f64,
    /// Measured angular frequency (rad/s).
    pub omega: f64,
    pub q: f64,
    pub branch: Branch,
}

impl DispersionPoint {
    pub fn validate(&self) -> Result<(), CoupledModeError> {
        if !(0.0..1.0).contains(&self.u) {
            return Err(CoupledModeError::Domain { u: self.u, reason: "undercut must lie in [0, 1)".into() });
        }
        if !(self.omega > 0.0 && self.omega.is_finite()) || !(self.q > 0.0 && self.q.is_finite()) {
            return Err(CoupledModeError::Domain { u: self.u, reason: "frequency and Q must be positive".into() });
        }
        Ok(())
    }
}

/// Coupled eigenvalues `(λ+, λ−)`; `λ+` is the root with the larger real part.
pub fn coupled_eigenvalues(model: &CoupledModeModel, u: f64) -> Result<(Complex64, Complex64), CoupledModeError> {
    model.radial.check(u, "radial")?;
    model.flexural.check(u, "flexural")?;
    let (wr, wf) = (model.radial.omega_at(u), model.flexural.omega_at(u));
    let (gr, gf) = (model.radial.gamma_at(u), model.flexural.gamma_at(u));
    let mean = Complex64::new((wr + wf) / 2.0, (gr + gf) / 4.0);
    let half_diff = Complex64::new((wr - wf) / 2.0, (gr - gf) / 4.0);
    let g2 = model.g * model.g;
    let radicand = half_diff * half_diff + g2 * g2 / (4.0 * wr * wf);
    let root = radicand.sqrt();
    let (plus, minus) = (mean + root, mean - root);
    if plus.re <= 0.0 || minus.re <= 0.0 {
        return Err(CoupledModeError::Domain { u, reason: "coupling pushes a branch to nonpositive frequency".into() });
    }
    Ok((plus, minus))
}

/// Frequencies and quality factors of the two coupled branches.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CoupledBranches {
    pub omega_plus: f64,
    pub q_plus: f64,
    pub omega_minus: f64,
    pub q_minus: f64,
}

pub fn coupled_branches(model: &CoupledModeModel, u: f64) -> Result<CoupledBranches, CoupledModeError> {
    let (p, m) = coupled_eigenvalues(model, u)?;
    Ok(CoupledBranches { omega_plus: p.re, q_plus: p.re / (2.0 * p.im), omega_minus: m.re, q_minus: m.re / (2.0 * m.im) })
}

/// An undercut range far enough from the crossing that the branches follow
/// the bare modes. `upper` names the bare mode carried by the upper branch
/// inside the window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AsymptoticWindow {
    pub u_min: f64,
    pub u_max: f64,
    pub upper: BareMode,
}

impl AsymptoticWindow {
    fn contains(&self, u: f64) -> bool {
        u >= self.u_min && u <= self.u_max
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CrossingFitOptions {
    /// After the two-stage fit, refine all nine parameters jointly.
    pub refine_jointly: bool,
    /// Relative tolerance of the golden-section search over `g`.
    pub g_tolerance: f64,
}

impl Default for CrossingFitOptions {
    fn default() -> Self {
        Self { refine_jointly: true, g_tolerance: 1e-10 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PointResidual {
    pub u: f64,
    /// Model branch the point was matched to.
    pub matched: Branch,
    /// `(Ω_model − Ω_meas)/Ω_meas`.
    pub frequency: f64,
    /// `(Q_model − Q_meas)/Q_meas`.
    pub q: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CrossingFit {
    pub model: CoupledModeModel,
    /// Bare trends from the asymptotic windows alone.
    pub stage1: CoupledModeModel,
    /// Coupling rate from the single-parameter search (rad/s).
    pub stage2_g: f64,
    /// `sqrt(Σ residual²)` over both frequency and Q residuals.
    pub residual_norm: f64,
    pub residuals: Vec<PointResidual>,
}

fn linear_fit(xs: &[f64], ys: &[f64]) -> Option<(f64, f64)> {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if !(sxx > 1e-300) {
        return None;
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    Some((my - slope * mx, slope))
}

fn fit_trend(points: &[&DispersionPoint], name: &str) -> Result<BareModeTrend, CoupledModeError> {
    let us: Vec<f64> = points.iter().map(|p| p.u).collect();
    let distinct = {
        let mut s = us.clone();
        s.sort_by(f64::total_cmp);
        s.dedup();
        s.len()
    };
    if distinct < 2 {
        return Err(CoupledModeError::FitDegenerate(format!(
            "asymptotic windows contain {distinct} distinct undercut value(s) for the {name} mode; need at least 2"
        )));
    }
    let ws: Vec<f64> = points.iter().map(|p| p.omega).collect();
    let qs: Vec<f64> = points.iter().map(|p| p.q).collect();
    let (omega0, omega1) = linear_fit(&us, &ws).expect("distinct abscissae");
    let (q0, q1) = linear_fit(&us, &qs).expect("distinct abscissae");
    Ok(BareModeTrend { omega0, omega1, q0, q1 })
}

fn match_residual(model: &CoupledModeModel, p: &DispersionPoint) -> Result<PointResidual, CoupledModeError> {
    let b = coupled_branches(model, p.u)?;
    let up = ((b.omega_plus - p.omega) / p.omega, (b.q_plus - p.q) / p.q);
    let lo = ((b.omega_minus - p.omega) / p.omega, (b.q_minus - p.q) / p.q);
    Ok(if up.0.abs() <= lo.0.abs() {
        PointResidual { u: p.u, matched: Branch::Upper, frequency: up.0, q: up.1 }
    } else {
        PointResidual { u: p.u, matched: Branch::Lower, frequency: lo.0, q: lo.1 }
    })
}

fn objective(model: &CoupledModeModel, points: &[DispersionPoint]) -> f64 {
    let mut s = 0.0;
    for p in points {
        match match_residual(model, p) {
            Ok(r) => s += r.frequency * r.frequency + r.q * r.q,
            Err(_) => return f64::INFINITY,
        }
    }
    s
}

/// Fits the coupled-mode model to measured branch data.
///
/// Stage 1 fits linear bare trends to the points inside the asymptotic
/// windows. Stage 2 freezes those trends and minimizes the summed squared
/// relative residuals of frequency and Q over `g` alone, matching each point
/// to the nearest model branch at every evaluation. When
/// `refine_jointly` is set, a final Levenberg-Marquardt pass adjusts all nine
/// parameters from the stage-2 solution.
pub fn fit_avoided_crossing(
    points: &[DispersionPoint],
    windows: &[AsymptoticWindow],
    opts: &CrossingFitOptions,
) -> Result<CrossingFit, CoupledModeError> {
    for p in points {
        p.validate()?;
    }
    let count = |b: Branch| points.iter().filter(|p| p.branch == b).count();
    let (n_up, n_lo, n_r, n_f) = (count(Branch::Upper), count(Branch::Lower), count(Branch::RadialLike), count(Branch::FlexuralLike));
    let enough = (n_up >= 4 && n_lo >= 4) || (n_r >= 4 && n_f >= 4) || (n_up + n_r >= 4 && n_lo + n_f >= 4);
    if !enough {
        return Err(CoupledModeError::InsufficientData(format!(
            "need at least 4 points per branch (upper {n_up}, lower {n_lo}, radial-like {n_r}, flexural-like {n_f})"
        )));
    }
    if windows.is_empty() {
        return Err(CoupledModeError::FitDegenerate("no asymptotic windows given".into()));
    }

    // stage 1
    let mut radial_pts = Vec::new();
    let mut flexural_pts = Vec::new();
    for p in points {
        let Some(w) = windows.iter().find(|w| w.contains(p.u)) else { continue };
        let mode = match p.branch {
            Branch::Upper => w.upper,
            Branch::Lower => w.upper.other(),
            Branch::RadialLike => BareMode::Radial,
            Branch::FlexuralLike => BareMode::Flexural,
        };
        match mode {
            BareMode::Radial => radial_pts.push(p),
            BareMode::Flexural => flexural_pts.push(p),
        }
    }
    let radial = fit_trend(&radial_pts, "radial")?;
    let flexural = fit_trend(&flexural_pts, "flexural")?;
    let stage1 = CoupledModeModel { radial, flexural, g: 0.0 };
    for p in points {
        radial.check(p.u, "radial").map_err(|e| CoupledModeError::FitDegenerate(e.to_string()))?;
        flexural.check(p.u, "flexural").map_err(|e| CoupledModeError::FitDegenerate(e.to_string()))?;
    }

    // stage 2: coarse geometric scan from g = 0, then golden section
    let omega_mean = points.iter().map(|p| p.omega).sum::<f64>() / points.len() as f64;
    let eval_g = |g: f64| objective(&CoupledModeModel { g, ..stage1 }, points);
    let mut grid = vec![0.0];
    let mut g = omega_mean * 1e-4;
    while g <= omega_mean {
        grid.push(g);
        g *= 2.0;
    }
    let values: Vec<f64> = grid.iter().map(|&g| eval_g(g)).collect();
    let objective_at_zero = values[0];
    let best = values.iter().enumerate().filter(|(_, v)| v.is_finite()).min_by(|a, b| a.1.total_cmp(b.1)).map(|(i, _)| i);
    let Some(best) = best else {
        return Err(CoupledModeError::ConvergenceFailure {
            reason: "objective is non-finite over the whole search grid".into(),
            objective_at_zero,
            best_g_hz: f64::NAN,
        });
    };
    if best == grid.len() - 1 {
        return Err(CoupledModeError::ConvergenceFailure {
            reason: "objective still decreasing at g = mean frequency; no minimum bracketed".into(),
            objective_at_zero,
            best_g_hz: rad_to_hz(grid[best]),
        });
    }
    let lo = if best == 0 { 0.0 } else { grid[best - 1] };
    let hi = grid[best + 1];
    let (g2, _, _) = golden_section(eval_g, lo, hi, opts.g_tolerance, 400);
    let mut model = CoupledModeModel { g: g2, ..stage1 };

    // stage 3
    if opts.refine_jointly {
        let q_r = stage1.radial.q0.abs().max(1.0);
        let q_f = stage1.flexural.q0.abs().max(1.0);
        let scale = [omega_mean, omega_mean, q_r, q_r, omega_mean, omega_mean, q_f, q_f, omega_mean];
        let pack = |m: &CoupledModeModel| {
            let v = [
                m.radial.omega0,
                m.radial.omega1,
                m.radial.q0,
                m.radial.q1,
                m.flexural.omega0,
                m.flexural.omega1,
                m.flexural.q0,
                m.flexural.q1,
                m.g,
            ];
            let mut out = [0.0; 9];
            for i in 0..9 {
                out[i] = v[i] / scale[i];
            }
            out
        };
        let unpack = |x: &[f64]| CoupledModeModel {
            radial: BareModeTrend { omega0: x[0] * scale[0], omega1: x[1] * scale[1], q0: x[2] * scale[2], q1: x[3] * scale[3] },
            flexural: BareModeTrend { omega0: x[4] * scale[4], omega1: x[5] * scale[5], q0: x[6] * scale[6], q1: x[7] * scale[7] },
            g: (x[8] * scale[8]).abs(),
        };
        let residual = |x: &[f64], out: &mut [f64]| {
            let m = unpack(x);
            for (i, p) in points.iter().enumerate() {
                match match_residual(&m, p) {
                    Ok(r) => {
                        out[2 * i] = r.frequency;
                        out[2 * i + 1] = r.q;
                    }
                    Err(_) => {
                        out[2 * i] = f64::NAN;
                        out[2 * i + 1] = f64::NAN;
                    }
                }
            }
        };
        if let Ok(rep) = levenberg_marquardt(residual, &pack(&model), 2 * points.len(), &LmOptions::default()) {
            let refined = unpack(&rep.params);
            if objective(&refined, points) <= objective(&model, points) {
                model = refined;
            }
        }
    }

    let residuals = points.iter().map(|p| match_residual(&model, p)).collect::<Result<Vec<_>, _>>()?;
    let residual_norm = residuals.iter().map(|r| r.frequency * r.frequency + r.q * r.q).sum::<f64>().sqrt();
    Ok(CrossingFit { model, stage1, stage2_g: g2, residual_norm, residuals })
}

/// Samples both coupled branches of `model` at each `u` and applies
/// independent multiplicative Gaussian noise of relative size `noise` to
/// every frequency and Q. Points are labelled upper/lower.
pub fn synthesize_dispersion(
    model: &CoupledModeModel,
    us: &[f64],
    noise: f64,
    seed: u64,
) -> Result<Vec<DispersionPoint>, CoupledModeError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut jitter = |x: f64| if noise > 0.0 { x * (1.0 + noise * normal.sample(&mut rng)) } else { x };
    let mut out = Vec::with_capacity(2 * us.len());
    for &u in us {
        let b = coupled_branches(model, u)?;
        out.push(DispersionPoint { u, omega: jitter(b.omega_plus), q: jitter(b.q_plus), branch: Branch::Upper });
        out.push(DispersionPoint { u, omega: jitter(b.omega_minus), q: jitter(b.q_minus), branch: Branch::Lower });
    }
    Ok(out)
}

/// Default asymptotic windows for the reference model: below the crossing
/// the upper branch is flexural, above it radial.
pub fn reference_windows() -> Vec<AsymptoticWindow> {
    vec![
        AsymptoticWindow { u_min: 0.0, u_max: 0.25, upper: BareMode::Flexural },
        AsymptoticWindow { u_min: 0.62, u_max: 1.0, upper: BareMode::Radial },
    ]
}

#[derive(Serialize, Deserialize)]
struct DispersionRow {
    u: f64,
    f_hz: f64,
    q: f64,
    branch: Branch,
}

/// Reads `u,f_hz,q,branch` rows; `#` lines are comments.
pub fn dispersion_from_csv(text: &str) -> Result<Vec<DispersionPoint>, CoupledModeError> {
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_reader(text.as_bytes());
    let mut out = Vec::new();
    for (i, row) in rdr.deserialize::<DispersionRow>().enumerate() {
        let r = row.map_err(|e| CoupledModeError::Parse(format!("row {}: {e}", i + 1)))?;
        let p = DispersionPoint { u: r.u, omega: hz_to_rad(r.f_hz), q: r.q, branch: r.branch };
        p.validate()?;
        out.push(p);
    }
    if out.is_empty() {
        return Err(CoupledModeError::InsufficientData("dispersion file has no data rows".into()));
    }
    Ok(out)
}

pub fn dispersion_to_csv(points: &[DispersionPoint]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for p in points {
        w.serialize(DispersionRow { u: p.u, f_hz: rad_to_hz(p.omega), q: p.q, branch: p.branch }).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv output is UTF-8")
}
