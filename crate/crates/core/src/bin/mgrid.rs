//! Command-line front end: `simulate` and `sweep`.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::info;

use mgrid::scenario::export::metrics_json;
use mgrid::scenario::sweep::{parse_grid, sweep, sweep_csv, SweepKey};
use mgrid::scenario::{export_csv, load_scenario, metrics, run, ControlMode};
use mgrid::Error;

const EXIT_INVALID: u8 = 2;
const EXIT_DIVERGED: u8 = 3;

#[derive(Parser)]
#[command(name = "mgrid", version, about = "Islanded microgrid secondary voltage control simulator")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum Mode {
    Etdmpc,
    TimeTriggered,
    Pi,
}

impl From<Mode> for ControlMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Etdmpc => ControlMode::Etdmpc,
            Mode::TimeTriggered => ControlMode::TimeTriggered,
            Mode::Pi => ControlMode::Pi,
        }
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one scenario and write CSV logs plus metrics.json.
    Simulate {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum)]
        mode: Option<Mode>,
        #[arg(long)]
        e_opt: Option<f64>,
        #[arg(long)]
        e_com: Option<f64>,
        #[arg(long)]
        noise_sigma: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        duration: Option<f64>,
    },
    /// Run a scenario over a grid of one parameter and tabulate reductions.
    Sweep {
        #[arg(long)]
        scenario: PathBuf,
        /// `key=v1,v2,...` with key one of e_opt, e_com, horizon, ts_mpc.
        #[arg(long)]
        grid: String,
        #[arg(long)]
        out: PathBuf,
    },
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Divergence(_) => EXIT_DIVERGED,
        Error::Io { .. } => 1,
        Error::Config(_) | Error::Parse { .. } => EXIT_INVALID,
    }
}

fn write_file(path: PathBuf, text: &str) -> Result<(), Error> {
    std::fs::write(&path, text).map_err(|source| Error::Io { path, source })
}

fn simulate(cmd: Cmd) -> Result<u8, Error> {
    let Cmd::Simulate { scenario, out, mode, e_opt, e_com, noise_sigma, seed, duration } = cmd else {
        unreachable!()
    };
    let mut s = load_scenario(&scenario)?;
    if let Some(m) = mode {
        s.mode = m.into();
    }
    if let Some(v) = e_opt {
        s.thresholds.e_opt = v;
    }
    if let Some(v) = e_com {
        s.thresholds.e_com = v;
    }
    if let Some(v) = noise_sigma {
        s.noise_sigma = v;
    }
    if let Some(v) = seed {
        s.seed = v;
    }
    if let Some(v) = duration {
        s.duration = v;
    }
    s.compile()?;
    info!("running {} in {} mode for {} s", s.name, s.mode.as_str(), s.duration);
    let o = run(&s)?;
    let m = metrics(&o);
    export_csv(&o, &m, &out)?;
    let red = &m.reductions;
    println!(
        "{}: computation reduction {:.2}%, communication reduction {:.2}%, max steady-state error {:.4}%",
        s.name,
        red.avg_computation,
        red.avg_communication,
        100.0 * m.max_steady_state_error
    );
    if let Some(d) = &o.divergence {
        eprintln!("plant diverged: {d}");
        return Ok(EXIT_DIVERGED);
    }
    Ok(0)
}

fn run_sweep(cmd: Cmd) -> Result<u8, Error> {
    let Cmd::Sweep { scenario, grid, out } = cmd else { unreachable!() };
    let s = load_scenario(&scenario)?;
    let (key, values) = parse_grid(&grid)?;
    info!("sweeping {} over {} values", key.as_str(), values.len());
    if key == SweepKey::TsMpc {
        println!("ts_mpc sweep: ts stays at {} s, so r = ts_mpc / ts varies", s.control.ts);
    }
    let r = sweep(&s, key, &values)?;
    std::fs::create_dir_all(&out).map_err(|source| Error::Io { path: out.clone(), source })?;
    let table = sweep_csv(&r);
    write_file(out.join("sweep.csv"), &table)?;
    for (p, v) in r.points.iter().zip(&values) {
        write_file(out.join(format!("metrics_{}_{}.json", key.as_str(), mgrid::scenario::fmt_num(*v))), &metrics_json(&p.metrics))?;
    }
    print!("{table}");
    if let Some(p) = r.points.iter().find(|p| p.metrics.divergence.is_some()) {
        eprintln!("plant diverged at {}={}", key.as_str(), p.value);
        return Ok(EXIT_DIVERGED);
    }
    Ok(0)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("MGRID_LOG", "warn")).init();
    let cli = Cli::parse();
    let res = match cli.cmd {
        c @ Cmd::Simulate { .. } => simulate(c),
        c @ Cmd::Sweep { .. } => run_sweep(c),
    };
    match res {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
