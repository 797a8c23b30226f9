//! Sweeps the optimization and communication thresholds on the four-DG
//! scenario and prints the reduction tables.
//!
//! `cargo run --release --example threshold_sweep`

use std::path::PathBuf;

use mgrid::scenario::load_scenario;
use mgrid::scenario::sweep::{sweep, sweep_csv, SweepKey};

fn main() -> Result<(), mgrid::Error> {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("scenarios/4dg_scenario1.json");
    let base = load_scenario(&path)?;
    let grid = [0.05, 0.1, 0.15, 0.2];
    for key in [SweepKey::EOpt, SweepKey::ECom] {
        let r = sweep(&base, key, &grid)?;
        println!("{}", sweep_csv(&r));
    }
    let r = sweep(&base, SweepKey::Horizon, &[2.0, 4.0, 6.0, 8.0, 10.0])?;
    println!("{}", sweep_csv(&r));
    Ok(())
}
