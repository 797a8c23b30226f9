//! Built-in test systems.
//!
//! `4dg` is the four-bus radial system with its standard line, load and DG
//! parameters. `ieee13` is a six-DG islanded feeder on the IEEE 13-node
//! layout with stand-in impedances built from the 4-bus line and load
//! values, and a breaker between nodes 671 and 692.

use super::schema::{CommSpec, DgSpec, LineSpec, LoadSpec, SystemSpec};

pub const SYSTEMS: [&str; 2] = ["4dg", "ieee13"];

fn line(name: &str, from: &str, to: &str, r: f64, l: f64) -> LineSpec {
    LineSpec { name: name.into(), from: from.into(), to: to.into(), r, l, closed: true, breaker: false }
}

fn load(name: &str, bus: &str, r: f64, l: f64, connected: bool) -> LoadSpec {
    LoadSpec { name: name.into(), bus: bus.into(), r, l, connected }
}

fn dg(name: &str, bus: &str, preset: &str) -> DgSpec {
    DgSpec { name: name.into(), bus: bus.into(), preset: preset.into(), params: Default::default() }
}

fn strs(v: &[&str]) -> Vec<String> {
    v.iter().map(|s| s.to_string()).collect()
}

pub fn four_dg() -> SystemSpec {
    SystemSpec {
        builtin: None,
        buses: strs(&["1", "2", "3", "4"]),
        lines: vec![
            line("Line1", "1", "2", 0.23, 318e-6),
            line("Line2", "2", "3", 0.35, 1847e-6),
            line("Line3", "3", "4", 0.23, 318e-6),
        ],
        // Load3 is split into two equal halves so that half of it can be
        // switched; Load2 starts disconnected.
        loads: vec![
            load("Load1", "1", 2.0, 6.4e-3, true),
            load("Load2", "2", 4.0, 9.6e-3, false),
            load("Load3a", "3", 12.0, 25.6e-3, true),
            load("Load3b", "3", 12.0, 25.6e-3, true),
            load("Load4", "4", 6.0, 12.8e-3, true),
        ],
        dgs: vec![dg("DG1", "1", "dg1"), dg("DG2", "2", "dg2"), dg("DG3", "3", "dg3"), dg("DG4", "4", "dg4")],
    }
}

fn chain(names: &[&str]) -> Vec<[String; 2]> {
    names.windows(2).map(|w| [w[0].to_string(), w[1].to_string()]).collect()
}

pub fn four_dg_comm() -> CommSpec {
    CommSpec { edges: chain(&["DG1", "DG2", "DG3", "DG4"]), pinned: strs(&["DG1"]) }
}

pub fn ieee13() -> SystemSpec {
    let short = (0.23, 318e-6);
    let long = (0.35, 1847e-6);
    let l = |name: &str, a: &str, b: &str, z: (f64, f64)| line(name, a, b, z.0, z.1);
    let mut lines = vec![
        l("L650_632", "650", "632", long),
        l("L632_633", "632", "633", short),
        l("L633_634", "633", "634", short),
        l("L632_645", "632", "645", short),
        l("L645_646", "645", "646", short),
        l("L632_671", "632", "671", long),
        l("L671_680", "671", "680", short),
        l("L671_684", "671", "684", short),
        l("L684_611", "684", "611", short),
        l("L684_652", "684", "652", short),
        l("L671_692", "671", "692", short),
        l("L692_675", "692", "675", short),
    ];
    lines[10].breaker = true;
    SystemSpec {
        builtin: None,
        buses: strs(&["650", "632", "633", "634", "645", "646", "671", "680", "684", "611", "652", "692", "675"]),
        lines,
        loads: vec![
            load("Load634", "634", 6.0, 12.8e-3, true),
            load("Load645a", "645", 8.0, 19.2e-3, true),
            load("Load645b", "645", 8.0, 19.2e-3, true),
            load("Load646", "646", 12.0, 25.6e-3, true),
            load("Load671", "671", 6.0, 12.8e-3, true),
            load("Load611", "611", 12.0, 25.6e-3, true),
            load("Load652", "652", 12.0, 25.6e-3, true),
            load("Load692", "692", 12.0, 25.6e-3, true),
            load("Load675a", "675", 6.0, 12.8e-3, true),
            load("Load675b", "675", 12.0, 25.6e-3, false),
        ],
        dgs: vec![
            dg("DG1", "634", "dg1"),
            dg("DG2", "646", "dg2"),
            dg("DG3", "680", "dg3"),
            dg("DG4", "611", "dg4"),
            dg("DG5", "652", "dg4"),
            dg("DG6", "675", "dg1"),
        ],
    }
}

pub fn ieee13_comm() -> CommSpec {
    let mut edges = chain(&["DG1", "DG2", "DG3", "DG4", "DG5", "DG6"]);
    edges.push(["DG6".into(), "DG1".into()]);
    CommSpec { edges, pinned: strs(&["DG1"]) }
}

pub fn system(name: &str) -> Option<SystemSpec> {
    match name {
        "4dg" => Some(four_dg()),
        "ieee13" => Some(ieee13()),
        _ => None,
    }
}

pub fn comm(name: &str) -> Option<CommSpec> {
    match name {
        "4dg" => Some(four_dg_comm()),
        "ieee13" => Some(ieee13_comm()),
        _ => None,
    }
}
