//! Six-DG feeder on the IEEE 13-node layout: load steps, plug-and-play and
//! a breaker reconfiguration with a link outage.
//!
//! `cargo run --release --example ieee13`

use std::path::PathBuf;

use mgrid::scenario::{load_scenario, metrics, run};

fn main() -> Result<(), mgrid::Error> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("scenarios");
    for file in ["ieee13_scalability.json", "ieee13_reconfig.json"] {
        let s = load_scenario(&dir.join(file))?;
        let out = run(&s)?;
        let m = metrics(&out);
        println!("{}: {}", s.name, s.description);
        for e in &m.settling {
            let st = e.settling_time.map_or("never".into(), |v| format!("{v:.2} s"));
            println!("  {:<26} at {:.2} s settles in {st}", e.label, e.t);
        }
        let fin: Vec<String> =
            (0..out.n_dg()).map(|k| format!("{:.2}", out.voltage_trace(k).last().map_or(f64::NAN, |p| p.1))).collect();
        println!("  final v_od [{}]", fin.join(", "));
        let r = &m.reductions;
        println!(
            "  computation reduction {:.2}%, communication reduction {:.2}%, worst steady-state error {:.3}%",
            r.avg_computation,
            r.avg_communication,
            100.0 * m.max_steady_state_error
        );
    }
    Ok(())
}
