//! Communication link DG3-DG4 fails while loads change, then comes back.
//! Compares the event-triggered controller with the distributed PI baseline.
//!
//! `cargo run --release --example link_outage`

use std::path::PathBuf;

use mgrid::scenario::metrics::peak_error;
use mgrid::scenario::{load_scenario, run, ControlMode};

fn main() -> Result<(), mgrid::Error> {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("scenarios/4dg_scenario4.json");
    let base = load_scenario(&path)?;
    println!("{:<10} {}", "mode", "peak |v_od - v_ref| during the outage per DG (V)");
    for mode in [ControlMode::Etdmpc, ControlMode::TimeTriggered, ControlMode::Pi] {
        let mut s = base.clone();
        s.mode = mode;
        let out = run(&s)?;
        let peaks: Vec<String> =
            (0..out.n_dg()).map(|k| format!("{:.3}", peak_error(&out.voltage_trace(k), out.v_ref, 2.0, 6.0))).collect();
        let finals: Vec<String> = (0..out.n_dg())
            .map(|k| format!("{:.2}", out.voltage_trace(k).last().map_or(f64::NAN, |p| p.1)))
            .collect();
        println!("{:<10} [{}], final v_od [{}]", mode.as_str(), peaks.join(", "), finals.join(", "));
    }
    Ok(())
}
