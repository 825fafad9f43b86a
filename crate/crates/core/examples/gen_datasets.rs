//! Regenerates the synthetic datasets under `data/datasets`.
//!
//! ```text
//! cargo run --example gen_datasets
//! ```

use std::fmt::Write as _;
use std::path::Path;

use resonator_q::clamping_loss::synthesize_saturation_pairs;
use resonator_q::coupled_modes::{dispersion_to_csv, synthesize_dispersion, CoupledModeModel};
use resonator_q::intrinsic_loss::{synthesize_temperature_series, MaterialTables, TlsParams};
use resonator_q::noise_spectra::{synth_thermal_spectrum, synthesize_pressure_series, GasModel, SynthOptions, ThermalPeak};
use resonator_q::units::hz_to_rad;

fn write(dir: &Path, name: &str, text: &str) {
    std::fs::write(dir.join(name), text).unwrap_or_else(|e| panic!("writing {name}: {e}"));
    println!("wrote {}", dir.join(name).display());
}

fn main() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("data/datasets");
    std::fs::create_dir_all(&dir).expect("create dataset directory");

    // undercut dispersion of the coupled radial/flexural pair, 1% scatter
    let us: Vec<f64> = (0..=36).map(|i| 0.05 + 0.9 * i as f64 / 36.0).collect();
    let pts = synthesize_dispersion(&CoupledModeModel::reference(), &us, 0.01, 1).unwrap();
    write(&dir, "dispersion.csv", &dispersion_to_csv(&pts));

    // Q(T) at 34 MHz from the TLS + anharmonic + clamping model, 3% scatter
    let temps: Vec<f64> = (1..=30).map(|i| 10.0 * i as f64).collect();
    let series =
        synthesize_temperature_series(&temps, hz_to_rad(34e6), &TlsParams::silica(), &MaterialTables::silica(), 1.0 / 140_000.0, 0.03, 2)
            .unwrap();
    let mut csv = String::from("t_k,q\n");
    for (t, q) in series {
        let _ = writeln!(csv, "{t},{q}");
    }
    write(&dir, "temperature.csv", &csv);

    // room-temperature thermal peak at 24 MHz, Q = 50,000, 16 averages
    let om = hz_to_rad(24e6);
    let peak = ThermalPeak { omega_m: om, gamma_m: om / 50_000.0, m_eff: 10e-12, temperature: 300.0 };
    let width = 24e6 / 50_000.0;
    let grid: Vec<f64> = (0..4001).map(|i| 24e6 - 20.0 * width + 40.0 * width * i as f64 / 4000.0).collect();
    let opts = SynthOptions { noise_floor: 0.01 * peak.psd(om), averages: Some(16), seed: 3 };
    let spec = synth_thermal_spectrum(&peak, &grid, &opts).unwrap();
    let mut buf = Vec::new();
    spec.trace.write_csv(&mut buf).unwrap();
    write(&dir, "spectrum.csv", std::str::from_utf8(&buf).unwrap());

    // Q(p): molecular below 100 mbar, viscous above, 3% scatter
    let gas = GasModel { q_intrinsic_inverse: 1.0 / 40_000.0, c_mol: 2e-7, crossover_mbar: Some(100.0) };
    let ps: Vec<f64> = (0..=24).map(|i| 10f64.powf(-3.0 + 6.0 * i as f64 / 24.0)).collect();
    let mut csv = String::from("p_mbar,q\n");
    for (p, q) in synthesize_pressure_series(&gas, &ps, 0.03, 4).unwrap() {
        let _ = writeln!(csv, "{p},{q}");
    }
    write(&dir, "pressure.csv", &csv);

    // measured Q against simulated D, saturating at 50,000 with a = 3
    let ds: Vec<f64> = (0..12).map(|i| 10f64.powf(2.5 + 3.0 * i as f64 / 11.0)).collect();
    let mut csv = String::from("d,q\n");
    for (d, q) in synthesize_saturation_pairs(3.0, Some(50_000.0), &ds, 0.05, 5).unwrap() {
        let _ = writeln!(csv, "{d},{q}");
    }
    write(&dir, "dq.csv", &csv);
}
