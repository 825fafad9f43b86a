//! Per-command work, split into a cheap `prepare` step (load and check
//! every input; this is all `--validate-only` does) and `execute`.

use serde_json::json;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::config::*;
use super::error::{CliError, ErrorKind};
use super::sweep::{geometry_at, run_sweep};
use super::{Command, CommandOutput, RunConfig};
use crate::clamping_loss::{calibrate_linear, compute_d, fit_saturation, pairs_from_csv};
use crate::coupled_modes::{coupled_branches, dispersion_from_csv, fit_avoided_crossing, DispersionPoint};
use crate::fem::{generate_mesh, material_map, modal_analysis, BoundaryConditions};
use crate::intrinsic_loss::{fit_temperature, temperature_series_from_csv, total_damping, MaterialTables, TemperatureFitOptions};
use crate::noise_spectra::{
    fit_gas_damping, fit_lorentzian, pressure_series_from_csv, red_blue_check, synth_thermal_spectrum, SpectrumTrace, SynthOptions,
    ThermalPeak,
};
use crate::quantum_budget::{backaction_ratio, cavity_linewidth, cooling_report, power_for_unity};
use crate::units::{hz_to_rad, rad_to_hz};

pub(super) enum Prepared {
    FitCrossing(FitCrossingConfig, Vec<DispersionPoint>),
    Clamping(ClampingConfig, Option<Vec<f64>>, Option<Vec<(f64, f64)>>),
    IntrinsicFit(IntrinsicFitConfig, Vec<(f64, f64)>, MaterialTables),
    Budget(BudgetConfig),
    SpectrumFit(SpectrumFitConfig, Option<SpectrumTrace>),
    GasFit(GasFitConfig, Vec<(f64, f64)>),
    SolveModes(SolveModesConfig),
}

/// Shortest round-trip representation, in exponent form outside a
/// readable range.
pub(super) fn num(x: f64) -> String {
    let a = x.abs();
    if x == 0.0 || (1e-3..1e7).contains(&a) {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

fn read_input(path: &Option<PathBuf>, key: &str) -> Result<String, CliError> {
    let p = path.as_ref().ok_or_else(|| CliError::input("input file not configured").at(key))?;
    read_file(p, key)
}

fn read_file(p: &Path, key: &str) -> Result<String, CliError> {
    std::fs::read_to_string(p).map_err(|e| CliError::input(format!("cannot read {}: {e}", p.display())).at(key))
}

fn keyed<E: Into<CliError>>(key: &'static str) -> impl Fn(E) -> CliError {
    move |e| e.into().at(key)
}

fn positive(x: f64, key: &str) -> Result<(), CliError> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(CliError::input(format!("must be positive, got {x}")).at(key))
    }
}

fn check_modes(n_modes: usize, refinement: usize, target_hz: f64, block: &str) -> Result<(), CliError> {
    if n_modes == 0 {
        return Err(CliError::input("n_modes must be at least 1").at(format!("{block}.n_modes")));
    }
    if refinement == 0 {
        return Err(CliError::input("refinement must be at least 1").at(format!("{block}.refinement")));
    }
    positive(target_hz, &format!("{block}.target_hz"))
}

pub(super) fn prepare(command: Command, cfg: &RunConfig) -> Result<Prepared, CliError> {
    match command {
        Command::FitCrossing => {
            let c = cfg.fit_crossing.clone().unwrap_or_default();
            let text = read_input(&c.input, "fit_crossing.input")?;
            let points = dispersion_from_csv(&text).map_err(keyed("fit_crossing.input"))?;
            if c.curve.points < 2 {
                return Err(CliError::input("need at least 2 curve points").at("fit_crossing.curve.points"));
            }
            Ok(Prepared::FitCrossing(c, points))
        }
        Command::Clamping => {
            let c = cfg.clamping.clone().unwrap_or_default();
            if c.sweep.is_none() && c.calibration.is_none() {
                return Err(CliError::input("configure a `sweep`, a `calibration`, or both").at("clamping"));
            }
            let values = match &c.sweep {
                Some(s) => {
                    check_modes(c.n_modes, c.refinement, c.target_hz, "clamping")?;
                    c.materials.silica.validate().map_err(keyed("clamping.materials.silica"))?;
                    c.materials.silicon.validate().map_err(keyed("clamping.materials.silicon"))?;
                    let v = s.values();
                    for &x in &v {
                        geometry_at(&c.geometry, s.parameter, x)?;
                    }
                    Some(v)
                }
                None => None,
            };
            let pairs = match &c.calibration {
                Some(cal) => Some(
                    pairs_from_csv(&read_input(&cal.input, "clamping.calibration.input")?).map_err(keyed("clamping.calibration.input"))?,
                ),
                None => None,
            };
            Ok(Prepared::Clamping(c, values, pairs))
        }
        Command::IntrinsicFit => {
            let c = cfg.intrinsic_fit.clone().unwrap_or_default();
            let data = temperature_series_from_csv(&read_input(&c.input, "intrinsic_fit.input")?).map_err(keyed("intrinsic_fit.input"))?;
            if data.is_empty() {
                return Err(CliError::input("temperature file has no data rows").at("intrinsic_fit.input"));
            }
            let tables = match &c.tables {
                Some(p) => MaterialTables::from_csv_str(&read_file(p, "intrinsic_fit.tables")?).map_err(keyed("intrinsic_fit.tables"))?,
                None => MaterialTables::silica(),
            };
            c.priors.validate().map_err(keyed("intrinsic_fit.priors"))?;
            positive(c.frequency_hz, "intrinsic_fit.frequency_hz")?;
            let (lo, hi) = tables.range();
            if let Some(&(t, _)) = data.iter().find(|(t, _)| !(lo..=hi).contains(t)) {
                return Err(CliError::input(format!("temperature {t} K outside table coverage [{lo}, {hi}] K")).at("intrinsic_fit.input"));
            }
            Ok(Prepared::IntrinsicFit(c, data, tables))
        }
        Command::Budget => {
            let c = cfg.budget.clone().unwrap_or_default();
            c.design.validate().map_err(keyed("budget.design"))?;
            positive(c.gamma_c_hz, "budget.gamma_c_hz")?;
            if !(c.power_w >= 0.0) {
                return Err(CliError::input("power must be nonnegative").at("budget.power_w"));
            }
            if c.values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                return Err(CliError::input("sweep values must be finite and nonnegative").at("budget.values"));
            }
            Ok(Prepared::Budget(c))
        }
        Command::SpectrumFit => {
            let c = cfg.spectrum_fit.clone().unwrap_or_default();
            let trace = match (&c.input, &c.synthesize) {
                (Some(_), None) => {
                    let t =
                        SpectrumTrace::from_csv_str(&read_input(&c.input, "spectrum_fit.input")?).map_err(keyed("spectrum_fit.input"))?;
                    Some(t)
                }
                (None, Some(s)) => {
                    for (k, v) in [
                        ("frequency_hz", s.frequency_hz),
                        ("q", s.q),
                        ("m_eff_kg", s.m_eff_kg),
                        ("temperature_k", s.temperature_k),
                        ("span_linewidths", s.span_linewidths),
                    ] {
                        positive(v, &format!("spectrum_fit.synthesize.{k}"))?;
                    }
                    if s.points < 8 {
                        return Err(CliError::input("need at least 8 points").at("spectrum_fit.synthesize.points"));
                    }
                    None
                }
                _ => return Err(CliError::input("configure exactly one of `input` and `synthesize`").at("spectrum_fit")),
            };
            for (i, w) in c.windows.iter().enumerate() {
                if !(w[1] > w[0]) {
                    return Err(CliError::input("window must be [low, high] with low < high").at(format!("spectrum_fit.windows[{i}]")));
                }
            }
            Ok(Prepared::SpectrumFit(c, trace))
        }
        Command::GasFit => {
            let c = cfg.gas_fit.clone().unwrap_or_default();
            let data = pressure_series_from_csv(&read_input(&c.input, "gas_fit.input")?).map_err(keyed("gas_fit.input"))?;
            if data.is_empty() {
                return Err(CliError::input("pressure file has no data rows").at("gas_fit.input"));
            }
            Ok(Prepared::GasFit(c, data))
        }
        Command::SolveModes => {
            let c = cfg.solve_modes.clone().unwrap_or_default();
            c.geometry.validate().map_err(keyed("solve_modes.geometry"))?;
            c.materials.silica.validate().map_err(keyed("solve_modes.materials.silica"))?;
            c.materials.silicon.validate().map_err(keyed("solve_modes.materials.silicon"))?;
            check_modes(c.n_modes, c.refinement, c.target_hz, "solve_modes")?;
            Ok(Prepared::SolveModes(c))
        }
    }
}

pub(super) fn execute(prepared: Prepared, cfg: &RunConfig) -> Result<CommandOutput, CliError> {
    let seed = cfg.seed();
    match prepared {
        Prepared::FitCrossing(c, points) => fit_crossing(&c, &points),
        Prepared::Clamping(c, values, pairs) => clamping(&c, values, pairs, seed),
        Prepared::IntrinsicFit(c, data, tables) => intrinsic_fit(&c, &data, &tables),
        Prepared::Budget(c) => budget(&c),
        Prepared::SpectrumFit(c, trace) => spectrum_fit(&c, trace, seed),
        Prepared::GasFit(c, data) => gas_fit(&c, &data),
        Prepared::SolveModes(c) => solve_modes(&c, seed),
    }
}

fn to_json<T: serde::Serialize>(v: &T) -> Result<serde_json::Value, CliError> {
    serde_json::to_value(v).map_err(CliError::internal)
}

fn pretty<T: serde::Serialize>(v: &T) -> Result<Vec<u8>, CliError> {
    let mut b = serde_json::to_vec_pretty(v).map_err(CliError::internal)?;
    b.push(b'\n');
    Ok(b)
}

fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    if n < 2 {
        return vec![a];
    }
    (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()
}

fn fit_crossing(c: &FitCrossingConfig, points: &[DispersionPoint]) -> Result<CommandOutput, CliError> {
    let fit = fit_avoided_crossing(points, &c.windows, &c.options)?;
    let mut out = CommandOutput::default();

    let mut res = String::from("u,matched,frequency_rel,q_rel\n");
    for r in &fit.residuals {
        let label = serde_json::to_value(r.matched).map_err(CliError::internal)?;
        let _ = writeln!(res, "{},{},{},{}", num(r.u), label.as_str().unwrap_or(""), num(r.frequency), num(r.q));
    }

    let umin = points.iter().map(|p| p.u).fold(f64::INFINITY, f64::min);
    let umax = points.iter().map(|p| p.u).fold(f64::NEG_INFINITY, f64::max);
    let (lo, hi) = (c.curve.min.unwrap_or(umin), c.curve.max.unwrap_or(umax));
    let mut curve = String::from("u,f_plus_hz,q_plus,f_minus_hz,q_minus,f_radial_hz,f_flexural_hz\n");
    let mut skipped = 0;
    for u in linspace(lo, hi, c.curve.points) {
        match coupled_branches(&fit.model, u) {
            Ok(b) => {
                let _ = writeln!(
                    curve,
                    "{},{},{},{},{},{},{}",
                    num(u),
                    num(rad_to_hz(b.omega_plus)),
                    num(b.q_plus),
                    num(rad_to_hz(b.omega_minus)),
                    num(b.q_minus),
                    num(rad_to_hz(fit.model.radial.omega_at(u))),
                    num(rad_to_hz(fit.model.flexural.omega_at(u)))
                );
            }
            Err(_) => skipped += 1,
        }
    }
    if skipped > 0 {
        out.warnings.push(format!("{skipped} curve points skipped where a bare trend is not positive"));
    }
    out.results = json!({
        "g_hz": rad_to_hz(fit.model.g),
        "stage2_g_hz": rad_to_hz(fit.stage2_g),
        "residual_norm": fit.residual_norm,
        "points": points.len(),
        "model": to_json(&fit.model)?,
        "stage1_model": to_json(&fit.stage1)?,
    });
    out.summary = Some(format!("g/2π = {:.4} MHz, residual norm {:.3e}", rad_to_hz(fit.model.g) / 1e6, fit.residual_norm));
    out.file("model.json", pretty(&fit.model)?);
    out.file("residuals.csv", res);
    out.file("curve.csv", curve);
    Ok(out)
}

fn clamping(c: &ClampingConfig, values: Option<Vec<f64>>, pairs: Option<Vec<(f64, f64)>>, seed: u64) -> Result<CommandOutput, CliError> {
    let mut out = CommandOutput::default();
    let mut results = serde_json::Map::new();
    let mut summary = String::new();
    if let Some(values) = values {
        let sweep = run_sweep(c, &values, seed)?;
        let mut csv = String::from("value,dofs,tracked_f_hz,tracked_d,tracked_radial_fraction,nearest_gap,flagged,predicted_q");
        for k in 0..c.n_modes {
            let _ = write!(csv, ",mode{k}_f_hz,mode{k}_d");
        }
        csv.push('\n');
        for p in &sweep.points {
            let _ = write!(
                csv,
                "{},{},{},{},{},{},{},{}",
                num(p.value),
                p.dofs,
                num(p.tracked_frequency_hz),
                opt(p.tracked_d),
                num(p.tracked_radial_fraction),
                num(p.nearest_gap),
                p.flagged,
                opt(p.predicted_q)
            );
            for k in 0..c.n_modes {
                match p.modes.get(k) {
                    Some(m) => {
                        let _ = write!(csv, ",{},{}", num(m.frequency_hz), opt(m.d));
                    }
                    None => csv.push_str(",,"),
                }
            }
            csv.push('\n');
        }
        let dips = sweep.regions.iter().filter(|r| r.is_dip).count();
        let _ = writeln!(
            summary,
            "{} sweep points, tracked D in [{}, {}], {} flagged region(s), {} dip(s)",
            sweep.points.len(),
            opt(sweep.min_tracked_d),
            opt(sweep.max_tracked_d),
            sweep.regions.len(),
            dips
        );
        if sweep.points.iter().any(|p| p.tracked_d.is_none()) {
            out.warnings.push("some tracked modes leave the clamp plane at rest (unbounded D)".into());
        }
        results.insert("sweep".into(), to_json(&sweep)?);
        out.file("sweep.csv", csv);
    }
    if let Some(pairs) = pairs {
        let model = c.calibration.as_ref().map(|x| x.model).unwrap_or(CalibrationModel::Linear);
        let fit = match model {
            CalibrationModel::Linear => {
                let f = calibrate_linear(&pairs)?;
                let _ = writeln!(summary, "Q = a·D with a = {:.4} ± {:.4}", f.a, f.a_std_error);
                to_json(&f)?
            }
            CalibrationModel::Saturation => {
                let f = fit_saturation(&pairs)?;
                let _ = writeln!(summary, "a = {:.4}, Q_sat = {}", f.a, opt(f.q_sat));
                to_json(&f)?
            }
        };
        let cal = json!({ "model": model, "fit": fit });
        out.file("calibration.json", pretty(&cal)?);
        results.insert("calibration".into(), cal);
    }
    out.results = serde_json::Value::Object(results);
    out.summary = Some(summary.trim_end().to_string());
    Ok(out)
}

fn intrinsic_fit(c: &IntrinsicFitConfig, data: &[(f64, f64)], tables: &MaterialTables) -> Result<CommandOutput, CliError> {
    let omega = hz_to_rad(c.frequency_hz);
    let opts = TemperatureFitOptions { fit_background: c.fit_background, ..Default::default() };
    let fit = fit_temperature(data, omega, tables, &c.priors, &opts)?;
    let mut out = CommandOutput::default();
    if fit.background_clipped {
        out.warnings.push("fitted background was negative and is pinned at zero".into());
    }

    let mut res = String::from("t_k,q_measured,q_inverse_model,relative\n");
    for r in &fit.residuals {
        let _ = writeln!(res, "{},{},{},{}", num(r.t_k), num(r.q_measured), num(r.q_inverse_model), num(r.relative));
    }

    let (tlo, thi) = tables.range();
    let dmin = data.iter().map(|d| d.0).fold(f64::INFINITY, f64::min);
    let dmax = data.iter().map(|d| d.0).fold(f64::NEG_INFINITY, f64::max);
    let lo = c.curve.min.unwrap_or(dmin).max(tlo);
    let hi = c.curve.max.unwrap_or(dmax).min(thi);
    let mut curve = String::from("t_k,tls,anharmonic,clamping,total,q_total\n");
    for t in linspace(lo, hi, c.curve.points) {
        let b = total_damping(t, omega, &fit.tls, tables, fit.q_cl_inverse)?;
        let _ =
            writeln!(curve, "{},{},{},{},{},{}", num(t), num(b.tls), num(b.anharmonic), num(b.clamping), num(b.total), num(b.q_total()));
    }
    let budgets = c
        .evaluate_at_k
        .iter()
        .map(|&t| {
            let b = total_damping(t, omega, &fit.tls, tables, fit.q_cl_inverse)?;
            Ok(json!({ "budget": to_json(&b)?, "q_total": b.q_total() }))
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    out.summary = Some(format!(
        "log10 τ0 = {:.4}, C = {:.4e}, 1/Q_cl = {:.4e} ({} points)",
        fit.tls.log10_tau0,
        fit.tls.c_tls,
        fit.q_cl_inverse,
        data.len()
    ));
    out.results = json!({ "fit": to_json(&fit)?, "budgets": budgets });
    out.file("fit.json", pretty(&fit)?);
    out.file("residuals.csv", res);
    out.file("curve.csv", curve);
    Ok(out)
}

fn budget(c: &BudgetConfig) -> Result<CommandOutput, CliError> {
    let d = &c.design;
    let kappa = cavity_linewidth(d)?;
    let p_star = power_for_unity(d)?;
    let ratio = backaction_ratio(d, c.power_w)?;
    let cooling = cooling_report(d, hz_to_rad(c.gamma_c_hz))?;
    let mut out = CommandOutput::default();
    if !cooling.resolved_sideband {
        out.warnings
            .push(format!("Ω_m/κ = {:.3}: outside the resolved-sideband regime assumed by the occupancy", cooling.omega_m_over_kappa));
    }
    let mut csv = String::new();
    match c.sweep {
        BudgetSweep::PowerW => {
            csv.push_str("power_w,backaction_ratio\n");
            for &p in &c.values {
                let _ = writeln!(csv, "{},{}", num(p), num(backaction_ratio(d, p)?));
            }
        }
        BudgetSweep::TemperatureK => {
            csv.push_str("temperature_k,backaction_ratio,power_for_unity_w,occupancy\n");
            for &t in &c.values {
                let dt = crate::quantum_budget::OptomechanicalDesign { bath_temperature: t, ..*d };
                let r = cooling_report(&dt, hz_to_rad(c.gamma_c_hz)).map_err(keyed("budget.values"))?;
                let _ = writeln!(
                    csv,
                    "{},{},{},{}",
                    num(t),
                    num(backaction_ratio(&dt, c.power_w)?),
                    num(power_for_unity(&dt)?),
                    num(r.occupancy)
                );
            }
        }
    }
    let mut table = String::new();
    let _ = writeln!(table, "{:<34} {:>14}", "quantity", "value");
    let _ = writeln!(table, "{:<34} {:>14.6e}", "kappa/2π (Hz)", rad_to_hz(kappa));
    let _ = writeln!(table, "{:<34} {:>14.6e}", format!("S_ba/S_th at {} W", num(c.power_w)), ratio);
    let _ = writeln!(table, "{:<34} {:>14.6e}", "P* for S_ba = S_th (W)", p_star);
    let _ = writeln!(table, "{:<34} {:>14.6}", "cooling occupancy n", cooling.occupancy);
    let _ = write!(table, "{:<34} {:>14}", "resolved sideband (Ω_m > κ)", cooling.resolved_sideband);
    out.results = json!({
        "kappa_rad_per_s": kappa,
        "kappa_hz": rad_to_hz(kappa),
        "power_w": c.power_w,
        "backaction_ratio": ratio,
        "power_for_unity_w": p_star,
        "gamma_c_hz": c.gamma_c_hz,
        "cooling": to_json(&cooling)?,
    });
    out.summary = Some(table);
    out.file("budget.csv", csv);
    Ok(out)
}

fn spectrum_fit(c: &SpectrumFitConfig, trace: Option<SpectrumTrace>, seed: u64) -> Result<CommandOutput, CliError> {
    let mut out = CommandOutput::default();
    let trace = match (trace, &c.synthesize) {
        (Some(t), _) => t,
        (None, Some(s)) => {
            let omega = hz_to_rad(s.frequency_hz);
            let peak = ThermalPeak { omega_m: omega, gamma_m: omega / s.q, m_eff: s.m_eff_kg, temperature: s.temperature_k };
            let width = s.frequency_hz / s.q;
            let grid = linspace(s.frequency_hz - s.span_linewidths * width, s.frequency_hz + s.span_linewidths * width, s.points);
            if grid[0] <= 0.0 {
                return Err(CliError::input("grid reaches zero frequency; reduce span_linewidths").at("spectrum_fit.synthesize"));
            }
            let floor = s.relative_floor * peak.psd(omega);
            let syn = synth_thermal_spectrum(&peak, &grid, &SynthOptions { noise_floor: floor, averages: s.averages, seed })
                .map_err(keyed("spectrum_fit.synthesize"))?;
            for w in &syn.warnings {
                out.warnings.push(format!("synthesis: {}", to_json(w)?.as_str().unwrap_or("warning")));
            }
            syn.trace
        }
        (None, None) => return Err(CliError::new(ErrorKind::Internal, "spectrum source vanished after validation")),
    };
    let windows: Vec<(f64, f64)> = if c.windows.is_empty() {
        vec![(trace.frequencies[0], trace.frequencies[trace.frequencies.len() - 1])]
    } else {
        c.windows.iter().map(|w| (w[0], w[1])).collect()
    };
    let fits = windows
        .iter()
        .enumerate()
        .map(|(i, &w)| fit_lorentzian(&trace, w).map_err(|e| CliError::from(e).at(format!("spectrum_fit.windows[{i}]"))))
        .collect::<Result<Vec<_>, _>>()?;
    let mut curve = String::from("f_hz,psd_m2_per_hz,model_m2_per_hz\n");
    for (&f, &p) in trace.frequencies.iter().zip(&trace.psd) {
        let model = windows.iter().zip(&fits).find(|((lo, hi), _)| f >= *lo && f <= *hi).map(|(_, fit)| fit.model(f));
        let _ = writeln!(curve, "{},{},{}", num(f), num(p), opt(model));
    }
    let mut summary = String::new();
    for (i, f) in fits.iter().enumerate() {
        let _ = writeln!(summary, "peak {i}: f = {:.6} MHz, Q = {:.1}", f.frequency_hz() / 1e6, f.q);
    }
    let red_blue = match &c.red_blue {
        Some(rb) => {
            let chk = red_blue_check(rb.q_red, rb.q_blue, rb.tolerance).map_err(keyed("spectrum_fit.red_blue"))?;
            if !chk.consistent {
                out.warnings
                    .push(format!("red/blue Q differ by {:.1}%: back-action may bias the linewidth", 100.0 * chk.relative_difference));
            }
            Some(to_json(&chk)?)
        }
        None => None,
    };
    out.results = json!({ "fits": to_json(&fits)?, "bins": trace.frequencies.len(), "red_blue": red_blue });
    out.summary = Some(summary.trim_end().to_string());
    out.file("fits.json", pretty(&fits)?);
    out.file("curve.csv", curve);
    Ok(out)
}

fn gas_fit(c: &GasFitConfig, data: &[(f64, f64)]) -> Result<CommandOutput, CliError> {
    let fit = fit_gas_damping(data, c.crossover_guess_mbar)?;
    let pmin = data.iter().map(|d| d.0).fold(f64::INFINITY, f64::min);
    let pmax = data.iter().map(|d| d.0).fold(f64::NEG_INFINITY, f64::max);
    let (lo, hi) = (c.curve.min.unwrap_or(pmin), c.curve.max.unwrap_or(pmax));
    positive(lo, "gas_fit.curve.min")?;
    let mut curve = String::from("p_mbar,q_model,q_inverse_model,gas_fraction\n");
    for l in linspace(lo.ln(), hi.ln(), c.curve.points) {
        let p = l.exp();
        let qi = fit.model.q_inverse(p);
        let _ = writeln!(curve, "{},{},{},{}", num(p), num(1.0 / qi), num(qi), num(fit.model.gas_term(p) / qi));
    }
    let mut out = CommandOutput::default();
    if fit.c_vis.is_none() {
        out.warnings.push("no viscous-regime data: viscous coefficient and crossover not determined".into());
    }
    out.summary = Some(format!(
        "Q_int = {:.1}, c_mol = {:.4e}/mbar, crossover = {} mbar, gas negligible below 1 mbar: {}",
        fit.q_intrinsic,
        fit.c_mol,
        opt(fit.crossover_mbar),
        fit.negligible_below_1mbar
    ));
    out.results = to_json(&fit)?;
    out.file("gas_fit.json", pretty(&fit)?);
    out.file("curve.csv", curve);
    Ok(out)
}

fn solve_modes(c: &SolveModesConfig, seed: u64) -> Result<CommandOutput, CliError> {
    let mesh = generate_mesh(&c.geometry, c.refinement)?;
    let materials = material_map(&c.materials.silica, &c.materials.silicon, &c.geometry);
    let bc = if c.free_base { BoundaryConditions::free() } else { BoundaryConditions::default() };
    let modes = modal_analysis(&mesh, &materials, bc, c.n_modes, hz_to_rad(c.target_hz), &c.solver.options(seed))?;
    let mut out = CommandOutput::default();
    let mut list = Vec::new();
    let mut summary = String::from("mode  f (MHz)        radial   D\n");
    for (k, m) in modes.iter().enumerate() {
        let est = compute_d(m, &c.materials.silica)?;
        list.push(json!({
            "index": k,
            "summary": to_json(&m.summary())?,
            "d": est.d_value,
            "unbounded": est.unbounded,
            "radiated_power_at_unit_energy": est.radiated_power_at_unit_energy,
            "predicted_q": c.calibration_a.and_then(|a| est.predicted_q(a)),
        }));
        let _ = writeln!(summary, "{k:<5} {:<14.6} {:<8.3} {}", m.frequency_hz() / 1e6, m.radial_fraction, opt(est.d_value));
        if c.export_modes {
            let mut buf = Vec::new();
            m.write_csv(&mesh, &mut buf).map_err(CliError::internal)?;
            out.file(&format!("mode_{k}.csv"), buf);
        }
    }
    if c.export_mesh {
        let mut buf = Vec::new();
        mesh.write_text(&mut buf).map_err(CliError::internal)?;
        out.file("mesh.txt", buf);
    }
    out.results = json!({ "nodes": mesh.nodes.len(), "elements": mesh.elements.len(), "dofs": mesh.n_dofs(), "modes": list });
    out.file("modes.json", pretty(&out.results)?);
    out.summary = Some(summary.trim_end().to_string());
    Ok(out)
}
