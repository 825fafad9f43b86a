//! Run configuration: one JSON object with optional global keys and one
//! block per subcommand. Unknown keys are rejected with their dotted path.
//!
//! ```json
//! { "seed": 7, "out": "results", "budget": { "gamma_c_hz": 156000.0 } }
//! ```
//!
//! Relative file paths are resolved against the config file's directory.

use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

use super::error::{CliError, ErrorKind};
use super::Command;
use crate::coupled_modes::{reference_windows, AsymptoticWindow, CrossingFitOptions};
use crate::fem::{Material, ResonatorGeometry, SolverOptions};
use crate::intrinsic_loss::TlsParams;
use crate::quantum_budget::OptomechanicalDesign;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Output directory; not part of the echoed configuration.
    #[serde(default, skip_serializing)]
    pub out: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit_crossing: Option<FitCrossingConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clamping: Option<ClampingConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intrinsic_fit: Option<IntrinsicFitConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub budget: Option<BudgetConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spectrum_fit: Option<SpectrumFitConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gas_fit: Option<GasFitConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solve_modes: Option<SolveModesConfig>,
}

/// Parses a config file, reporting the dotted key path of the first error.
pub fn load(path: &Path) -> Result<RunConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::input(format!("cannot read config {}: {e}", path.display())))?;
    parse(&text)
}

pub fn parse(text: &str) -> Result<RunConfig, CliError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let key = e.path().to_string();
        let err = CliError::new(ErrorKind::Input, format!("invalid config: {}", e.inner()));
        if key == "." {
            err
        } else {
            err.at(key)
        }
    })
}

fn resolve(base: &Path, p: &mut Option<PathBuf>) {
    if let Some(path) = p {
        if path.is_relative() {
            *path = base.join(&*path);
        }
    }
}

impl RunConfig {
    pub fn resolve_paths(&mut self, base: &Path) {
        if let Some(c) = &mut self.fit_crossing {
            resolve(base, &mut c.input);
        }
        if let Some(c) = &mut self.clamping {
            if let Some(cal) = &mut c.calibration {
                resolve(base, &mut cal.input);
            }
        }
        if let Some(c) = &mut self.intrinsic_fit {
            resolve(base, &mut c.input);
            resolve(base, &mut c.tables);
        }
        if let Some(c) = &mut self.spectrum_fit {
            resolve(base, &mut c.input);
        }
        if let Some(c) = &mut self.gas_fit {
            resolve(base, &mut c.input);
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    /// The seed plus the block of `command` (with defaults filled in).
    pub fn echo(&self, command: Command) -> serde_json::Value {
        let block = |v: serde_json::Result<serde_json::Value>| v.unwrap_or(serde_json::Value::Null);
        let (key, value) = match command {
            Command::FitCrossing => ("fit_crossing", block(serde_json::to_value(self.fit_crossing.clone().unwrap_or_default()))),
            Command::Clamping => ("clamping", block(serde_json::to_value(self.clamping.clone().unwrap_or_default()))),
            Command::IntrinsicFit => ("intrinsic_fit", block(serde_json::to_value(self.intrinsic_fit.clone().unwrap_or_default()))),
            Command::Budget => ("budget", block(serde_json::to_value(self.budget.clone().unwrap_or_default()))),
            Command::SpectrumFit => ("spectrum_fit", block(serde_json::to_value(self.spectrum_fit.clone().unwrap_or_default()))),
            Command::GasFit => ("gas_fit", block(serde_json::to_value(self.gas_fit.clone().unwrap_or_default()))),
            Command::SolveModes => ("solve_modes", block(serde_json::to_value(self.solve_modes.clone().unwrap_or_default()))),
        };
        serde_json::json!({ "seed": self.seed(), key: value })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CurveSpec {
    pub min: Option<f64>,
    pub max: Option<f64>,
    pub points: usize,
}

impl Default for CurveSpec {
    fn default() -> Self {
        CurveSpec { min: None, max: None, points: 400 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitCrossingConfig {
    /// Dispersion CSV `u,f_hz,q,branch`.
    pub input: Option<PathBuf>,
    pub windows: Vec<AsymptoticWindow>,
    pub options: CrossingFitOptions,
    /// Undercut range of the emitted model curve.
    pub curve: CurveSpec,
}

impl Default for FitCrossingConfig {
    fn default() -> Self {
        FitCrossingConfig { input: None, windows: reference_windows(), options: CrossingFitOptions::default(), curve: CurveSpec::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MaterialsConfig {
    pub silica: Material,
    pub silicon: Material,
}

impl Default for MaterialsConfig {
    fn default() -> Self {
        MaterialsConfig { silica: Material::silica(), silicon: Material::silicon() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    /// Systems with fewer free DOFs are solved densely.
    pub dense_threshold: usize,
    pub tolerance: f64,
    /// Initial Lanczos subspace; zero chooses automatically.
    pub initial_subspace: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        let d = SolverOptions::default();
        SolverConfig { dense_threshold: d.dense_threshold, tolerance: d.tolerance, initial_subspace: d.initial_subspace }
    }
}

impl SolverConfig {
    pub fn options(&self, seed: u64) -> SolverOptions {
        SolverOptions { dense_threshold: self.dense_threshold, tolerance: self.tolerance, seed, initial_subspace: self.initial_subspace }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParameter {
    /// Relative undercut `u`; the pillar radius becomes `R(1 − u)`.
    Undercut,
    /// Outer radius of the spoke annulus (m).
    SpokeOuterRadius,
    /// Spoke width (m).
    SpokeWidth,
    /// Rim torus minor radius (m).
    MinorRadius,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSpec {
    pub parameter: SweepParameter,
    /// Explicit values; otherwise `steps + 1` values from `start` to `stop`.
    pub values: Option<Vec<f64>>,
    pub start: f64,
    pub stop: f64,
    pub steps: usize,
}

impl Default for SweepSpec {
    fn default() -> Self {
        SweepSpec { parameter: SweepParameter::Undercut, values: None, start: 0.9, stop: 0.3, steps: 30 }
    }
}

impl SweepSpec {
    pub fn values(&self) -> Vec<f64> {
        match &self.values {
            Some(v) => v.clone(),
            None if self.steps == 0 => vec![self.start],
            None => (0..=self.steps).map(|i| self.start + (self.stop - self.start) * i as f64 / self.steps as f64).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CalibrationModel {
    /// `Q = a·D`.
    Linear,
    /// `Q⁻¹ = 1/(aD) + 1/Q_sat`.
    Saturation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationConfig {
    /// CSV `d,q`.
    pub input: Option<PathBuf>,
    pub model: CalibrationModel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClampingConfig {
    pub geometry: ResonatorGeometry,
    pub materials: MaterialsConfig,
    pub refinement: usize,
    pub sweep: Option<SweepSpec>,
    /// Modes solved per sweep point.
    pub n_modes: usize,
    /// Starting frequency of the tracked mode (Hz).
    pub target_hz: f64,
    /// Relative frequency window for following the tracked mode.
    pub tracking_window: f64,
    /// Relative frequency gap below which a point is flagged as near a crossing.
    pub crossing_gap: f64,
    pub solver: SolverConfig,
    /// Slope of `Q = a·D` for predicted-Q columns.
    pub calibration_a: Option<f64>,
    pub calibration: Option<CalibrationConfig>,
}

impl Default for ClampingConfig {
    fn default() -> Self {
        ClampingConfig {
            geometry: ResonatorGeometry::disk(40e-6, 2e-6, 20e-6),
            materials: MaterialsConfig::default(),
            refinement: 2,
            sweep: None,
            n_modes: 5,
            target_hz: 47e6,
            tracking_window: 0.3,
            crossing_gap: 0.1,
            solver: SolverConfig::default(),
            calibration_a: None,
            calibration: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IntrinsicFitConfig {
    /// CSV `t_k,q`.
    pub input: Option<PathBuf>,
    pub frequency_hz: f64,
    /// ζ, V₀ and V₀/Δc are held fixed; τ₀ and C are starting values.
    pub priors: TlsParams,
    /// Material-table CSV; the bundled silica tables when absent.
    pub tables: Option<PathBuf>,
    pub fit_background: bool,
    /// Temperature range of the emitted model curve (K).
    pub curve: CurveSpec,
    /// Temperatures at which to report the full loss budget (K).
    pub evaluate_at_k: Vec<f64>,
}

impl Default for IntrinsicFitConfig {
    fn default() -> Self {
        IntrinsicFitConfig {
            input: None,
            frequency_hz: 34e6,
            priors: TlsParams::literature_means(),
            tables: None,
            fit_background: true,
            curve: CurveSpec::default(),
            evaluate_at_k: vec![],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BudgetSweep {
    PowerW,
    TemperatureK,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BudgetConfig {
    pub design: OptomechanicalDesign,
    /// Cooling rate Γ_c/2π (Hz).
    pub gamma_c_hz: f64,
    /// Input power for the headline ratio (W).
    pub power_w: f64,
    pub sweep: BudgetSweep,
    pub values: Vec<f64>,
}

impl Default for BudgetConfig {
    fn default() -> Self {
        BudgetConfig {
            design: OptomechanicalDesign::cryogenic_toroid(),
            gamma_c_hz: 0.156e6,
            power_w: 10e-6,
            sweep: BudgetSweep::PowerW,
            values: (0..=24).map(|i| 10f64.powf(-8.0 + i as f64 / 6.0)).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthesisConfig {
    pub frequency_hz: f64,
    pub q: f64,
    pub m_eff_kg: f64,
    pub temperature_k: f64,
    /// Floor relative to the peak height.
    pub relative_floor: f64,
    /// Averaged periodograms per bin; `null` disables the scatter.
    pub averages: Option<u32>,
    /// Half-span of the grid in linewidths.
    pub span_linewidths: f64,
    pub points: usize,
}

impl Default for SynthesisConfig {
    fn default() -> Self {
        SynthesisConfig {
            frequency_hz: 24e6,
            q: 50_000.0,
            m_eff_kg: 10e-12,
            temperature_k: 300.0,
            relative_floor: 0.01,
            averages: Some(1),
            span_linewidths: 20.0,
            points: 4001,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RedBlueConfig {
    pub q_red: f64,
    pub q_blue: f64,
    #[serde(default = "default_red_blue_tolerance")]
    pub tolerance: f64,
}

fn default_red_blue_tolerance() -> f64 {
    0.05
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpectrumFitConfig {
    /// Spectrum CSV `f_hz,psd_m2_per_hz`.
    pub input: Option<PathBuf>,
    /// Synthesize a trace instead of reading one.
    pub synthesize: Option<SynthesisConfig>,
    /// Fit windows `[f_lo, f_hi]` (Hz); the whole trace when empty.
    pub windows: Vec<[f64; 2]>,
    pub red_blue: Option<RedBlueConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GasFitConfig {
    /// CSV `p_mbar,q`.
    pub input: Option<PathBuf>,
    pub crossover_guess_mbar: Option<f64>,
    pub curve: CurveSpec,
}

impl Default for GasFitConfig {
    fn default() -> Self {
        GasFitConfig { input: None, crossover_guess_mbar: None, curve: CurveSpec { points: 200, ..CurveSpec::default() } }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolveModesConfig {
    pub geometry: ResonatorGeometry,
    pub materials: MaterialsConfig,
    pub refinement: usize,
    pub n_modes: usize,
    pub target_hz: f64,
    pub solver: SolverConfig,
    /// Leave the pillar base free (only the axis condition applies).
    pub free_base: bool,
    pub calibration_a: Option<f64>,
    pub export_mesh: bool,
    pub export_modes: bool,
}

impl Default for SolveModesConfig {
    fn default() -> Self {
        SolveModesConfig {
            geometry: ResonatorGeometry::disk(40e-6, 2e-6, 20e-6),
            materials: MaterialsConfig::default(),
            refinement: 2,
            n_modes: 6,
            target_hz: 47e6,
            solver: SolverConfig::default(),
            free_base: false,
            calibration_a: None,
            export_mesh: false,
            export_modes: true,
        }
    }
}
