//! Runs the four-DG load-change and plug-and-play scenario with the
//! event-triggered controller and prints the voltage table and reductions.
//!
//! `cargo run --release --example scenario1 [out_dir]`

use std::path::{Path, PathBuf};

use mgrid::scenario::{export_csv, load_scenario, metrics, run};

fn main() -> Result<(), mgrid::Error> {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("scenarios/4dg_scenario1.json");
    let s = load_scenario(&path)?;
    let out = run(&s)?;
    let m = metrics(&out);

    print!("{:>6}", "t (s)");
    for name in &out.dg_names {
        print!("{name:>10}");
    }
    println!();
    let every = (0.25 / out.ts).round() as usize;
    for (i, rows) in out.timeseries.chunks(out.n_dg()).enumerate().filter(|(i, _)| i % every == 0) {
        print!("{:>6.2}", i as f64 * out.ts);
        for r in rows {
            if r.online {
                print!("{:>10.2}", r.v_od);
            } else {
                print!("{:>10}", "off");
            }
        }
        println!();
    }
    for e in &m.settling {
        let st = e.settling_time.map_or("never".into(), |s| format!("{s:.2} s"));
        println!("{:<24} at {:.2} s settles in {st}", e.label, e.t);
    }
    let r = &m.reductions;
    println!("computation reduction {:.2}%, communication reduction {:.2}%", r.avg_computation, r.avg_communication);
    println!("worst steady-state error {:.3}%", 100.0 * m.max_steady_state_error);

    if let Some(dir) = std::env::args().nth(1) {
        export_csv(&out, &m, Path::new(&dir))?;
        println!("logs written to {dir}");
    }
    Ok(())
}
