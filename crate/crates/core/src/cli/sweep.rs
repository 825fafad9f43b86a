//! Clamping-loss geometry sweep: modal analysis plus `D` at each sweep
//! value, following one mode by its radial character.

use serde::Serialize;

use super::config::{ClampingConfig, SweepParameter};
use super::error::CliError;
use crate::clamping_loss::{compute_d, ClampLossEstimate};
use crate::fem::{generate_mesh, material_map, modal_analysis, BoundaryConditions, ModeSolution, ResonatorGeometry};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModeRecord {
    pub frequency_hz: f64,
    /// `None` when the clamp plane is at rest.
    pub d: Option<f64>,
    pub radial_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepPoint {
    pub value: f64,
    pub dofs: usize,
    pub modes: Vec<ModeRecord>,
    /// Index into `modes` of the followed mode.
    pub tracked: usize,
    pub tracked_frequency_hz: f64,
    pub tracked_d: Option<f64>,
    pub tracked_radial_fraction: f64,
    /// Smallest relative frequency distance from the tracked mode to any other.
    pub nearest_gap: f64,
    /// `nearest_gap` is below the configured crossing gap.
    pub flagged: bool,
    pub predicted_q: Option<f64>,
}

/// A contiguous run of flagged points.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CrossingRegion {
    pub start_value: f64,
    pub end_value: f64,
    pub min_d: Option<f64>,
    pub min_d_at: Option<f64>,
    /// Tracked D at the unflagged neighbours, when they exist.
    pub d_before: Option<f64>,
    pub d_after: Option<f64>,
    /// The minimum inside lies below both neighbours.
    pub is_dip: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepResult {
    pub parameter: SweepParameter,
    pub points: Vec<SweepPoint>,
    pub regions: Vec<CrossingRegion>,
    pub min_tracked_d: Option<f64>,
    pub max_tracked_d: Option<f64>,
    /// The tracked D both rises and falls along the sweep.
    pub non_monotonic: bool,
}

/// Applies one sweep value to `base`.
pub fn geometry_at(base: &ResonatorGeometry, parameter: SweepParameter, value: f64) -> Result<ResonatorGeometry, CliError> {
    let mut g = *base;
    let need_spokes = || CliError::input("sweeping a spoke parameter needs `geometry.spokes`").at("clamping.sweep.parameter");
    match parameter {
        SweepParameter::Undercut => {
            if !(0.0..1.0).contains(&value) {
                return Err(CliError::input(format!("undercut {value} outside [0, 1)")).at("clamping.sweep"));
            }
            g = g.with_undercut(value);
        }
        SweepParameter::SpokeOuterRadius => g.spokes.as_mut().ok_or_else(need_spokes)?.outer_radius = value,
        SweepParameter::SpokeWidth => g.spokes.as_mut().ok_or_else(need_spokes)?.width = value,
        SweepParameter::MinorRadius => g.minor_radius = value,
    }
    g.validate()?;
    Ok(g)
}

/// Modes near `target_hz` for one geometry, with their clamping estimates.
pub fn evaluate_geometry(
    cfg: &ClampingConfig,
    geometry: &ResonatorGeometry,
    target_hz: f64,
    seed: u64,
) -> Result<(usize, Vec<ModeSolution>, Vec<ClampLossEstimate>), CliError> {
    let mesh = generate_mesh(geometry, cfg.refinement)?;
    let materials = material_map(&cfg.materials.silica, &cfg.materials.silicon, geometry);
    let opts = cfg.solver.options(seed);
    let modes =
        modal_analysis(&mesh, &materials, BoundaryConditions::default(), cfg.n_modes, 2.0 * std::f64::consts::PI * target_hz, &opts)?;
    let estimates = modes.iter().map(|m| compute_d(m, &cfg.materials.silica)).collect::<Result<Vec<_>, _>>()?;
    Ok((mesh.n_dofs(), modes, estimates))
}

/// Index of the most radial mode within the tracking window around
/// `target_hz` (all modes when none falls inside).
pub fn pick_tracked(modes: &[ModeRecord], target_hz: f64, window: f64) -> usize {
    let inside: Vec<usize> = (0..modes.len()).filter(|&i| (modes[i].frequency_hz - target_hz).abs() <= window * target_hz).collect();
    let pool: Vec<usize> = if inside.is_empty() { (0..modes.len()).collect() } else { inside };
    pool.into_iter().max_by(|&a, &b| modes[a].radial_fraction.total_cmp(&modes[b].radial_fraction)).unwrap_or(0)
}

pub fn run_sweep(cfg: &ClampingConfig, values: &[f64], seed: u64) -> Result<SweepResult, CliError> {
    let spec = cfg.sweep.as_ref().ok_or_else(|| CliError::input("missing sweep block").at("clamping.sweep"))?;
    if values.is_empty() {
        return Err(CliError::input("sweep has no values").at("clamping.sweep"));
    }
    let mut target = cfg.target_hz;
    let mut points = Vec::with_capacity(values.len());
    for &value in values {
        let g = geometry_at(&cfg.geometry, spec.parameter, value)?;
        let (dofs, modes, est) = evaluate_geometry(cfg, &g, target, seed)?;
        let records: Vec<ModeRecord> = modes
            .iter()
            .zip(&est)
            .map(|(m, e)| ModeRecord { frequency_hz: m.frequency_hz(), d: e.d_value, radial_fraction: m.radial_fraction })
            .collect();
        let k = pick_tracked(&records, target, cfg.tracking_window);
        let ft = records[k].frequency_hz;
        let nearest_gap = records
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != k)
            .map(|(_, r)| (r.frequency_hz - ft).abs() / ft)
            .fold(f64::INFINITY, f64::min);
        target = ft;
        points.push(SweepPoint {
            value,
            dofs,
            tracked: k,
            tracked_frequency_hz: ft,
            tracked_d: records[k].d,
            tracked_radial_fraction: records[k].radial_fraction,
            nearest_gap,
            flagged: nearest_gap < cfg.crossing_gap,
            predicted_q: cfg.calibration_a.and_then(|a| records[k].d.map(|d| a * d)),
            modes: records,
        });
    }
    let regions = crossing_regions(&points);
    let ds: Vec<f64> = points.iter().filter_map(|p| p.tracked_d).collect();
    Ok(SweepResult {
        parameter: spec.parameter,
        min_tracked_d: ds.iter().copied().reduce(f64::min),
        max_tracked_d: ds.iter().copied().reduce(f64::max),
        non_monotonic: is_non_monotonic(&ds),
        regions,
        points,
    })
}

pub fn is_non_monotonic(xs: &[f64]) -> bool {
    let up = xs.windows(2).any(|w| w[1] > w[0]);
    let down = xs.windows(2).any(|w| w[1] < w[0]);
    up && down
}

pub fn crossing_regions(points: &[SweepPoint]) -> Vec<CrossingRegion> {
    let mut out = Vec::new();
    let mut i = 0;
    while i < points.len() {
        if !points[i].flagged {
            i += 1;
            continue;
        }
        let start = i;
        while i < points.len() && points[i].flagged {
            i += 1;
        }
        let run = &points[start..i];
        let min = run.iter().filter_map(|p| p.tracked_d.map(|d| (d, p.value))).min_by(|a, b| a.0.total_cmp(&b.0));
        let d_before = start.checked_sub(1).and_then(|j| points[j].tracked_d);
        let d_after = points.get(i).and_then(|p| p.tracked_d);
        let is_dip = match (min, d_before, d_after) {
            (Some((m, _)), Some(b), Some(a)) => m < b && m < a,
            _ => false,
        };
        out.push(CrossingRegion {
            start_value: run[0].value,
            end_value: run[run.len() - 1].value,
            min_d: min.map(|m| m.0),
            min_d_at: min.map(|m| m.1),
            d_before,
            d_after,
            is_dip,
        });
    }
    out
}
