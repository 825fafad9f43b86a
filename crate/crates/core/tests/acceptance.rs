//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! nonzero when any gated criterion fails. Tolerances are fixed below.

mod common;

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use resonator_q::clamping_loss::{compute_d, compute_d_raw, fit_saturation, synthesize_saturation_pairs};
use resonator_q::cli::config::{ClampingConfig, SolverConfig, SweepSpec};
use resonator_q::cli::sweep::run_sweep;
use resonator_q::coupled_modes::{fit_avoided_crossing, reference_windows, synthesize_dispersion, CoupledModeModel, CrossingFitOptions};
use resonator_q::fem::{
    assemble, clamp_overlap, generate_mesh, material_map, modal_analysis, mode_energy, BoundaryConditions, Material, ModeSolution,
    ResonatorGeometry, SolverOptions, Spokes,
};
use resonator_q::intrinsic_loss::{
    fit_temperature, q_tls_inverse, synthesize_temperature_series, total_damping, MaterialTables, TemperatureFitOptions, TlsParams,
};
use resonator_q::noise_spectra::{
    fit_gas_damping, fit_lorentzian, synth_thermal_spectrum, synthesize_pressure_series, GasModel, SynthOptions, ThermalPeak,
};
use resonator_q::quantum_budget::{cooling_occupancy, power_for_unity, OptomechanicalDesign};
use resonator_q::units::hz_to_rad;

// criterion 1
const UNITY_POWER_W: f64 = 10e-6;
const UNITY_POWER_TOL: f64 = 0.15;
const OCCUPANCY_RANGE: (f64, f64) = (0.45, 0.55);
const BUDGET_MAX_TIME: Duration = Duration::from_millis(100);
// criterion 2
const CROSSING_G_TOL: f64 = 0.03;
const CROSSING_EXACT_TOL: f64 = 1e-6;
const CROSSING_NOISE: f64 = 0.01;
const CROSSING_MAX_TIME: Duration = Duration::from_secs(10);
// criterion 3
const FEM_FREQ_TOL: f64 = 0.01;
const FEM_MIN_ORDER: f64 = 1.8;
const FEM_MAX_TIME: Duration = Duration::from_secs(120);
// criterion 4
const D_SCALING_TOL: f64 = 1e-10;
const D_FORMULA_TOL: f64 = 1e-12;
const SATURATION_NOISE: f64 = 0.05;
const Q_SAT_TOL: f64 = 0.15;
// criterion 5
const TLS_ORACLE_POINTS: usize = 1_000_000;
const TLS_ORACLE_TOL: f64 = 1e-6;
const TLS_PEAK_K: f64 = 50.0;
const TLS_PEAK_TOL_K: f64 = 15.0;
// criterion 6
const TEMPERATURE_NOISE: f64 = 0.03;
const TAU0_TOL: f64 = 0.15;
const C_TLS_TOL: f64 = 0.25;
const Q_CL_TOL: f64 = 0.30;
const Q_410K_RANGE: (f64, f64) = (0.7 * 80_000.0, 1.4 * 80_000.0);
// criterion 7
const LORENTZ_EXACT_TOL: f64 = 1e-3;
const LORENTZ_Q_TOL: f64 = 0.05;
/// Averages per bin of the "realistic" spectrum-analyzer trace.
const LORENTZ_AVERAGES: u32 = 16;
const GAS_NOISE: f64 = 0.03;
const GAS_EXPONENT_TOL: f64 = 0.05;

/// Seeds for the statistical checks; every seed must pass.
const SEEDS: [u64; 5] = [1, 2, 3, 4, 5];

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict { pass, detail: detail.into() }
}

fn rel(a: f64, b: f64) -> f64 {
    (a / b - 1.0).abs()
}

fn quantum_budget() -> Verdict {
    let start = Instant::now();
    let d = OptomechanicalDesign::cryogenic_toroid();
    let p = power_for_unity(&d).unwrap();
    let n = cooling_occupancy(0.3, 80_000.0, hz_to_rad(0.156e6)).unwrap();
    let elapsed = start.elapsed();
    let pass =
        rel(p, UNITY_POWER_W) <= UNITY_POWER_TOL && (OCCUPANCY_RANGE.0..=OCCUPANCY_RANGE.1).contains(&n) && elapsed < BUDGET_MAX_TIME;
    verdict(pass, format!("P(unity) = {:.3} µW, n = {n:.3}, {:.2} ms", p * 1e6, elapsed.as_secs_f64() * 1e3))
}

fn crossing_fit() -> Verdict {
    let start = Instant::now();
    let truth = CoupledModeModel::reference();
    let us: Vec<f64> = (0..=36).map(|i| 0.05 + 0.9 * i as f64 / 36.0).collect();
    let windows = reference_windows();
    let opts = CrossingFitOptions::default();

    let exact = fit_avoided_crossing(&synthesize_dispersion(&truth, &us, 0.0, 0).unwrap(), &windows, &opts).unwrap();
    let params = |m: &CoupledModeModel| {
        [
            m.radial.omega0,
            m.radial.omega1,
            m.radial.q0,
            m.radial.q1,
            m.flexural.omega0,
            m.flexural.omega1,
            m.flexural.q0,
            m.flexural.q1,
            m.g,
        ]
    };
    let worst_exact = params(&exact.model).iter().zip(params(&truth)).map(|(a, b)| rel(*a, b)).fold(0.0, f64::max);

    let mut worst_g: f64 = 0.0;
    for seed in SEEDS {
        let data = synthesize_dispersion(&truth, &us, CROSSING_NOISE, seed).unwrap();
        let fit = fit_avoided_crossing(&data, &windows, &opts).unwrap();
        worst_g = worst_g.max(rel(fit.model.g, truth.g));
    }
    let elapsed = start.elapsed();
    let pass = worst_g <= CROSSING_G_TOL && worst_exact <= CROSSING_EXACT_TOL && elapsed < CROSSING_MAX_TIME;
    verdict(
        pass,
        format!(
            "worst g error {:.2}% over {} seeds, noiseless max rel {worst_exact:.1e}, {:.2} s",
            worst_g * 100.0,
            SEEDS.len(),
            elapsed.as_secs_f64()
        ),
    )
}

fn fem_oracles() -> Verdict {
    let t = Instant::now();
    let rod: Vec<f64> = [1, 2, 4].iter().map(|&s| common::rod_frequency_hz(s)).collect();
    let rod_time = t.elapsed();
    let t = Instant::now();
    let disk: Vec<f64> = [1, 2, 4].iter().map(|&s| common::disk_contour_hz(s)).collect();
    let disk_time = t.elapsed();
    let rod_err = rel(rod[2], common::rod_exact_hz());
    let disk_err = rel(disk[2], common::disk_exact_hz());
    let rod_order = common::observed_order([rod[0], rod[1], rod[2]]);
    let disk_order = common::observed_order([disk[0], disk[1], disk[2]]);
    let pass = rod_err <= FEM_FREQ_TOL
        && disk_err <= FEM_FREQ_TOL
        && rod_order >= FEM_MIN_ORDER
        && disk_order >= FEM_MIN_ORDER
        && rod_time < FEM_MAX_TIME
        && disk_time < FEM_MAX_TIME;
    verdict(
        pass,
        format!(
            "rod {:.4}% (order {rod_order:.2}, {:.2} s), disk {:.4}% (order {disk_order:.2}, {:.2} s)",
            rod_err * 100.0,
            rod_time.as_secs_f64(),
            disk_err * 100.0,
            disk_time.as_secs_f64()
        ),
    )
}

fn clamping_properties() -> Verdict {
    // scaling: D recomputed from scaled displacements
    let g = ResonatorGeometry::disk(40e-6, 2e-6, 20e-6).with_undercut(0.6);
    let mesh = generate_mesh(&g, 1).unwrap();
    let silica = Material::silica();
    let mats = material_map(&silica, &Material::silicon(), &g);
    let mass = assemble(&mesh, &mats).unwrap().mass;
    let modes = modal_analysis(&mesh, &mats, BoundaryConditions::default(), 3, hz_to_rad(47e6), &SolverOptions::default()).unwrap();
    let mut worst_scaling: f64 = 0.0;
    for m in &modes {
        let d0 = compute_d(m, &silica).unwrap().d_value.unwrap();
        for k in -5..=5 {
            let alpha = 10f64.powi(k);
            let disp: Vec<[f64; 2]> = m.displacement.iter().map(|u| [alpha * u[0], alpha * u[1]]).collect();
            let e = mode_energy(m.omega, &disp, &mass).unwrap();
            let ov = clamp_overlap(&disp, &mesh).unwrap();
            let d = compute_d_raw(m.omega, e, ov, &silica).unwrap().d_value.unwrap();
            worst_scaling = worst_scaling.max(rel(d, d0));
        }
    }

    // hand-built modes against the closed form E/(cρΩ∫|Δz|²)
    let mut worst_formula: f64 = 0.0;
    for (omega, energy, overlap) in [(2.9e8, 3.1e-12, 4.0e-22), (1.0e6, 1.0, 1.0e-9), (6.3e9, 2.5e-20, 7.7e-30)] {
        let mode = ModeSolution { omega, displacement: vec![], mechanical_energy: energy, clamp_overlap: overlap, radial_fraction: 1.0 };
        let direct = energy / ((silica.youngs_modulus / silica.density).sqrt() * silica.density * omega * overlap);
        worst_formula = worst_formula.max(rel(compute_d(&mode, &silica).unwrap().d_value.unwrap(), direct));
    }

    let ds: Vec<f64> = (0..12).map(|i| 10f64.powf(2.5 + 3.0 * i as f64 / 11.0)).collect();
    let mut worst_qsat: f64 = 0.0;
    for seed in SEEDS {
        let pairs = synthesize_saturation_pairs(3.0, Some(50_000.0), &ds, SATURATION_NOISE, seed).unwrap();
        let q = fit_saturation(&pairs).unwrap().q_sat.unwrap_or(f64::INFINITY);
        worst_qsat = worst_qsat.max(rel(q, 50_000.0));
    }
    let pass = worst_scaling <= D_SCALING_TOL && worst_formula <= D_FORMULA_TOL && worst_qsat <= Q_SAT_TOL;
    verdict(
        pass,
        format!("scaling {worst_scaling:.1e} over 1e-5..1e5, formula {worst_formula:.1e}, worst Q_sat error {:.1}%", worst_qsat * 100.0),
    )
}

/// Brute-force trapezoid of the barrier integral in `s = (V/V0)^(1/4)`,
/// which makes the integrand finite at `V = 0`.
fn tls_trapezoid(t: f64, omega: f64, p: &TlsParams) -> f64 {
    let ln_wt = (omega * p.tau0()).ln();
    let f = |s: f64| {
        let x = s.powi(4);
        let v = p.v0 * x;
        4.0 * p.v0 * s.powf(3.0 - 4.0 * p.zeta) * (-0.5 * x * x).exp() * 0.5 / (v / t + ln_wt).cosh()
    };
    let s_max = 12f64.powf(0.25);
    let h = s_max / TLS_ORACLE_POINTS as f64;
    let mut sum = 0.5 * (f(0.0) + f(s_max));
    for i in 1..TLS_ORACLE_POINTS {
        sum += f(i as f64 * h);
    }
    let erf_term = statrs::function::erf::erf(2f64.sqrt() * t / p.delta_c());
    p.c_tls * erf_term / t * sum * h
}

fn tls_quadrature() -> Verdict {
    let p = TlsParams::silica();
    let mut worst: f64 = 0.0;
    for (t, f) in [(5.0, 34e6), (50.0, 34e6), (300.0, 38e6)] {
        let om = hz_to_rad(f);
        worst = worst.max(rel(q_tls_inverse(t, om, &p).unwrap(), tls_trapezoid(t, om, &p)));
    }
    let om = hz_to_rad(34e6);
    let (t_peak, _) = (10..=1500).map(|i| i as f64 * 0.1).map(|t| (t, q_tls_inverse(t, om, &p).unwrap())).fold((0.0, 0.0), |best, x| {
        if x.1 > best.1 {
            x
        } else {
            best
        }
    });
    let pass = worst <= TLS_ORACLE_TOL && (t_peak - TLS_PEAK_K).abs() <= TLS_PEAK_TOL_K;
    verdict(pass, format!("max deviation from trapezoid {worst:.1e}, peak at {t_peak:.1} K"))
}

fn temperature_fit() -> (Verdict, Verdict) {
    let tables = MaterialTables::silica();
    let truth = TlsParams::silica();
    let q_cl = 1.0 / 140_000.0;
    let om = hz_to_rad(34e6);
    let temps: Vec<f64> = (1..=30).map(|i| 10.0 * i as f64).collect();
    let (mut e_tau, mut e_c, mut e_cl): (f64, f64, f64) = (0.0, 0.0, 0.0);
    for seed in SEEDS {
        let data = synthesize_temperature_series(&temps, om, &truth, &tables, q_cl, TEMPERATURE_NOISE, seed).unwrap();
        let fit = fit_temperature(&data, om, &tables, &TlsParams::literature_means(), &TemperatureFitOptions::default()).unwrap();
        e_tau = e_tau.max((fit.tls.log10_tau0 - truth.log10_tau0).abs());
        e_c = e_c.max(rel(fit.tls.c_tls, truth.c_tls));
        e_cl = e_cl.max(rel(fit.q_cl_inverse, q_cl));
    }
    let pass = e_tau <= TAU0_TOL && e_c <= C_TLS_TOL && e_cl <= Q_CL_TOL;
    let main = verdict(pass, format!("worst |Δlog10 τ0| = {e_tau:.3}, C {:.1}%, 1/Q_cl {:.1}%", e_c * 100.0, e_cl * 100.0));

    let b = total_damping(410.0, hz_to_rad(38e6), &TlsParams::silica_high_temperature(), &tables, q_cl).unwrap();
    let q = b.q_total();
    let cond = verdict((Q_410K_RANGE.0..=Q_410K_RANGE.1).contains(&q), format!("Q(410 K, 38 MHz) = {q:.0} with the bundled tables"));
    (main, cond)
}

fn spectrum_pipeline() -> Verdict {
    let om = hz_to_rad(24e6);
    let peak = ThermalPeak { omega_m: om, gamma_m: om / 50_000.0, m_eff: 10e-12, temperature: 300.0 };
    let width = 24e6 / 50_000.0;
    let grid: Vec<f64> = (0..4001).map(|i| 24e6 - 20.0 * width + 40.0 * width * i as f64 / 4000.0).collect();
    let window = (grid[0], grid[grid.len() - 1]);

    let clean = synth_thermal_spectrum(&peak, &grid, &SynthOptions { noise_floor: 0.0, averages: None, seed: 0 }).unwrap();
    let fit = fit_lorentzian(&clean.trace, window).unwrap();
    let exact = rel(fit.q, 50_000.0).max(rel(fit.omega_m, om)).max(rel(fit.gamma_m, peak.gamma_m));

    let mut worst_q: f64 = 0.0;
    for seed in SEEDS {
        let opts = SynthOptions { noise_floor: 0.01 * peak.psd(om), averages: Some(LORENTZ_AVERAGES), seed };
        let noisy = synth_thermal_spectrum(&peak, &grid, &opts).unwrap();
        worst_q = worst_q.max(rel(fit_lorentzian(&noisy.trace, window).unwrap().q, 50_000.0));
    }

    // regime exponents of Q_gas ∝ p^k from free power-law fits
    // both regimes span 1.5 decades where gas damping dominates tenfold
    let model = GasModel { q_intrinsic_inverse: 1e-6, c_mol: 1e-4, crossover_mbar: Some(10.0) };
    let ps: Vec<f64> = (0..=48).map(|i| 10f64.powf(-3.0 + 6.0 * i as f64 / 48.0)).collect();
    let (mut e_mol, mut e_vis): (f64, f64) = (0.0, 0.0);
    for seed in SEEDS {
        let data = synthesize_pressure_series(&model, &ps, GAS_NOISE, seed).unwrap();
        let fit = fit_gas_damping(&data, None).unwrap();
        let pc = fit.crossover_mbar.unwrap_or(f64::INFINITY);
        let q0 = fit.model.q_intrinsic_inverse;
        let slope = |lo: f64, hi: f64| {
            let pts: Vec<(f64, f64)> =
                data.iter().filter(|(p, _)| *p >= lo && *p <= hi).map(|(p, q)| (p.ln(), -(1.0 / q - q0).ln())).collect();
            log_slope(&pts)
        };
        e_mol = e_mol.max((slope(0.1, pc / 3.0) + 1.0).abs());
        e_vis = e_vis.max((slope(3.0 * pc, 1e3) + 0.5).abs());
    }
    let pass = exact <= LORENTZ_EXACT_TOL && worst_q <= LORENTZ_Q_TOL && e_mol <= GAS_EXPONENT_TOL && e_vis <= GAS_EXPONENT_TOL;
    verdict(
        pass,
        format!(
            "noiseless {exact:.1e}, worst Q error {:.2}% ({LORENTZ_AVERAGES} averages), exponent errors molecular {e_mol:.3}, viscous {e_vis:.3}",
            worst_q * 100.0
        ),
    )
}

fn log_slope(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len() as f64;
    let (mx, my) = (pts.iter().map(|p| p.0).sum::<f64>() / n, pts.iter().map(|p| p.1).sum::<f64>() / n);
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if pts.len() < 3 {
        return f64::NAN;
    }
    sxy / sxx
}

fn geometry_claims() -> Verdict {
    let sweep_cfg = |geometry: ResonatorGeometry, start: f64, stop: f64, steps: usize| ClampingConfig {
        geometry,
        sweep: Some(SweepSpec { start, stop, steps, ..Default::default() }),
        solver: SolverConfig { dense_threshold: 0, ..Default::default() },
        ..Default::default()
    };
    let disk = ResonatorGeometry::disk(40e-6, 2e-6, 20e-6);
    let cfg = sweep_cfg(disk, 0.9, 0.3, 30);
    let sweep = run_sweep(&cfg, &cfg.sweep.as_ref().unwrap().values(), 0).unwrap();
    let dip = sweep.regions.iter().find(|r| r.is_dip);

    let mut spoked = disk;
    spoked.spokes = Some(Spokes { count: 4, width: 2e-6, inner_radius: 12e-6, outer_radius: 34e-6 });
    let plain = sweep_cfg(disk, 0.9, 0.72, 9);
    let with = sweep_cfg(spoked, 0.9, 0.72, 9);
    let plain_min = run_sweep(&plain, &plain.sweep.as_ref().unwrap().values(), 0).unwrap().min_tracked_d.unwrap_or(0.0);
    let with_min = run_sweep(&with, &with.sweep.as_ref().unwrap().values(), 0).unwrap().min_tracked_d.unwrap_or(0.0);

    let pass = sweep.non_monotonic && dip.is_some() && with_min > plain_min;
    let dip_text = dip.map_or("no dip in a flagged region".to_string(), |r| {
        format!(
            "dip D = {:.0} at u = {:.3} (neighbours {:.0}, {:.0})",
            r.min_d.unwrap(),
            r.min_d_at.unwrap(),
            r.d_before.unwrap(),
            r.d_after.unwrap()
        )
    });
    verdict(
        pass,
        format!("non-monotonic: {}, {dip_text}; min D with spokes {with_min:.3e} vs without {plain_min:.3e}", sweep.non_monotonic),
    )
}

fn config_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data/configs")
}

fn run_cli(command: &str, config: &Path, out: &Path) -> Result<(), String> {
    let status = Command::new(env!("CARGO_BIN_EXE_resonator-q"))
        .args([command, "--config"])
        .arg(config)
        .arg("--out")
        .arg(out)
        .output()
        .map_err(|e| e.to_string())?;
    if status.status.success() {
        Ok(())
    } else {
        Err(format!("{command} failed: {}", String::from_utf8_lossy(&status.stderr)))
    }
}

fn strip_wall_time(bytes: &[u8]) -> serde_json::Value {
    let mut v: serde_json::Value = serde_json::from_slice(bytes).expect("report.json parses");
    v.as_object_mut().unwrap().remove("wall_time_s");
    v
}

fn determinism() -> Verdict {
    let runs = [
        ("fit-crossing", "fit_crossing.json"),
        ("clamping", "clamping.json"),
        ("intrinsic-fit", "intrinsic_fit.json"),
        ("budget", "budget.json"),
        ("spectrum-fit", "spectrum_fit.json"),
        ("spectrum-fit", "spectrum_synth.json"),
        ("gas-fit", "gas_fit.json"),
        ("solve-modes", "solve_modes.json"),
    ];
    let tmp = tempfile::tempdir().unwrap();
    let mut mismatches = Vec::new();
    let mut files = 0;
    for (command, config) in runs {
        let cfg = config_dir().join(config);
        let (a, b) = (tmp.path().join(format!("{config}.a")), tmp.path().join(format!("{config}.b")));
        if let Err(e) = run_cli(command, &cfg, &a).and_then(|_| run_cli(command, &cfg, &b)) {
            return verdict(false, e);
        }
        let mut names: Vec<_> = std::fs::read_dir(&a).unwrap().map(|e| e.unwrap().file_name()).collect();
        names.sort();
        for name in names {
            let (x, y) = (std::fs::read(a.join(&name)).unwrap(), std::fs::read(b.join(&name)).ok());
            let same = match (name.to_str(), y) {
                (Some("report.json"), Some(y)) => strip_wall_time(&x) == strip_wall_time(&y),
                (_, Some(y)) => x == y,
                (_, None) => false,
            };
            files += 1;
            if !same {
                mismatches.push(format!("{config}:{}", name.to_string_lossy()));
            }
        }
    }
    verdict(mismatches.is_empty(), format!("{} runs, {files} files compared, mismatches: {mismatches:?}", runs.len()))
}

fn main() {
    let (temp, conditional) = temperature_fit();
    let results = [
        ("1 quantum budget", quantum_budget()),
        ("2 avoided-crossing fit", crossing_fit()),
        ("3 FEM oracles", fem_oracles()),
        ("4 clamping parameter", clamping_properties()),
        ("5 TLS quadrature", tls_quadrature()),
        ("6 temperature fit", temp),
        ("7 spectrum pipeline", spectrum_pipeline()),
        ("8 geometry claims", geometry_claims()),
        ("9 CLI determinism", determinism()),
    ];
    let mut failed = 0;
    for (name, v) in &results {
        println!("[{}] {name}: {}", if v.pass { "PASS" } else { "FAIL" }, v.detail);
        failed += usize::from(!v.pass);
    }
    // table-dependent prediction, reported but not gated
    println!(
        "[{}] 6 (conditional, not gated) high-temperature prediction: {}",
        if conditional.pass { "PASS" } else { "FAIL" },
        conditional.detail
    );
    println!("acceptance: {}/{} criteria pass", results.len() - failed, results.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
