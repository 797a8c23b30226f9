//! JSON scenario format and its validation into a runnable form.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::agent::PiGains;
use crate::comm::{CommGraph, LinkSchedule};
use crate::error::{ConfigError, Error};
use crate::observer::{KernelParams, ObserverWindow};
use crate::physics::{Closure, DgParams, Line, Load, NetworkModel, PlantConfig};
use crate::physics::dg::OMEGA_50HZ;
use crate::trigger::TriggerThresholds;

use super::builtin;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub system: SystemSpec,
    /// Defaults to the built-in system's graph.
    #[serde(default)]
    pub comm: Option<CommSpec>,
    #[serde(default)]
    pub mode: ControlMode,
    #[serde(default)]
    pub thresholds: TriggerThresholds,
    #[serde(default)]
    pub control: ControlSpec,
    #[serde(default)]
    pub events: Vec<EventSpec>,
    /// Standard deviation of the additive measurement noise on `v_od` (V).
    #[serde(default)]
    pub noise_sigma: f64,
    #[serde(default)]
    pub seed: u64,
    pub duration: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControlMode {
    #[default]
    Etdmpc,
    #[serde(alias = "time_triggered_dmpc", alias = "time-triggered")]
    TimeTriggered,
    #[serde(alias = "pi_baseline")]
    Pi,
}

impl ControlMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            ControlMode::Etdmpc => "etdmpc",
            ControlMode::TimeTriggered => "time_triggered",
            ControlMode::Pi => "pi",
        }
    }
}

/// Either `{"builtin": "4dg"}` or an explicit system.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub builtin: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub buses: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub lines: Vec<LineSpec>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub loads: Vec<LoadSpec>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub dgs: Vec<DgSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LineSpec {
    pub name: String,
    pub from: String,
    pub to: String,
    pub r: f64,
    pub l: f64,
    #[serde(default = "yes")]
    pub closed: bool,
    #[serde(default)]
    pub breaker: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoadSpec {
    pub name: String,
    pub bus: String,
    pub r: f64,
    pub l: f64,
    #[serde(default = "yes")]
    pub connected: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DgSpec {
    pub name: String,
    pub bus: String,
    /// `dg1`, `dg2`, `dg3` or `dg4`.
    #[serde(default = "default_preset")]
    pub preset: String,
    #[serde(default)]
    pub params: DgPatch,
}

/// Per-field overrides of a preset.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DgPatch {
    pub m_p: Option<f64>,
    pub n_q: Option<f64>,
    pub r_f: Option<f64>,
    pub l_f: Option<f64>,
    pub c_f: Option<f64>,
    pub r_c: Option<f64>,
    pub l_c: Option<f64>,
    pub k_pv: Option<f64>,
    pub k_iv: Option<f64>,
    pub k_pc: Option<f64>,
    pub k_ic: Option<f64>,
    pub omega_c: Option<f64>,
    pub f_frame: Option<f64>,
    pub omega_b: Option<f64>,
}

impl DgPatch {
    pub fn apply(&self, mut p: DgParams) -> DgParams {
        let set = |dst: &mut f64, v: Option<f64>| {
            if let Some(v) = v {
                *dst = v;
            }
        };
        set(&mut p.m_p, self.m_p);
        set(&mut p.n_q, self.n_q);
        set(&mut p.r_f, self.r_f);
        set(&mut p.l_f, self.l_f);
        set(&mut p.c_f, self.c_f);
        set(&mut p.r_c, self.r_c);
        set(&mut p.l_c, self.l_c);
        set(&mut p.k_pv, self.k_pv);
        set(&mut p.k_iv, self.k_iv);
        set(&mut p.k_pc, self.k_pc);
        set(&mut p.k_ic, self.k_ic);
        set(&mut p.omega_c, self.omega_c);
        set(&mut p.f_frame, self.f_frame);
        set(&mut p.omega_b, self.omega_b);
        p
    }
}

/// Undirected communication edges between DG names, plus the DGs that
/// hear the leader.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CommSpec {
    pub edges: Vec<[String; 2]>,
    pub pinned: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ControlSpec {
    pub v_ref: f64,
    /// Half-width of the hard voltage band relative to `v_ref`.
    pub band: f64,
    pub horizon: usize,
    pub ts: f64,
    pub ts_mpc: f64,
    pub dt: f64,
    /// Input weight relative to the unit output weight.
    pub rho: f64,
    pub kernel: KernelParams,
    pub window: ObserverWindow,
    pub pi: PiGains,
    /// Re-optimize when the neighbor-average target drifts by `e_opt`.
    pub neighbor_retrigger: bool,
    /// Step controllers concurrently within an instant.
    pub parallel: bool,
    pub closure: Closure,
}

impl Default for ControlSpec {
    fn default() -> Self {
        Self {
            v_ref: 311.0,
            band: 0.03,
            horizon: 10,
            ts: 0.01,
            ts_mpc: 0.05,
            dt: 5e-5,
            rho: 1e-6,
            kernel: KernelParams::default(),
            window: ObserverWindow::default(),
            pi: PiGains::default(),
            neighbor_retrigger: true,
            parallel: false,
            closure: Closure::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    LoadConnect,
    LoadDisconnect,
    DgUnplug,
    DgPlug,
    LinkDown,
    LinkUp,
    BreakerOpen,
    BreakerClose,
    SecondaryOn,
}

impl EventKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            EventKind::LoadConnect => "load_connect",
            EventKind::LoadDisconnect => "load_disconnect",
            EventKind::DgUnplug => "dg_unplug",
            EventKind::DgPlug => "dg_plug",
            EventKind::LinkDown => "link_down",
            EventKind::LinkUp => "link_up",
            EventKind::BreakerOpen => "breaker_open",
            EventKind::BreakerClose => "breaker_close",
            EventKind::SecondaryOn => "secondary_on",
        }
    }
}

/// `target` names a load, a DG, a breaker line or a link `"DG3-DG4"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EventSpec {
    pub t: f64,
    pub kind: EventKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<String>,
}

fn yes() -> bool {
    true
}

fn default_preset() -> String {
    "dg1".into()
}

/// Typed event resolved to indices.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Action {
    Load { idx: usize, connected: bool },
    Dg { idx: usize, online: bool },
    /// Undirected link; both directions are scheduled.
    Link { a: usize, b: usize, up: bool },
    Breaker { idx: usize, closed: bool },
    SecondaryOn,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimedAction {
    pub t: f64,
    /// First integration step at or after `t`.
    pub step: u64,
    pub action: Action,
    pub label: String,
}

/// Everything the conductor needs, with names resolved.
#[derive(Debug, Clone)]
pub struct Compiled {
    pub plant: PlantConfig,
    pub dg_names: Vec<String>,
    pub graph: CommGraph,
    pub links: LinkSchedule,
    pub actions: Vec<TimedAction>,
    pub n_steps: u64,
    pub steps_per_ts: u64,
    pub steps_per_mpc: u64,
    pub window_steps: u64,
    pub ratio: usize,
}

fn bad(key: impl Into<String>, reason: impl Into<String>) -> ConfigError {
    ConfigError::Scenario { key: key.into(), reason: reason.into() }
}

fn integer_ratio(a: f64, b: f64) -> Option<u64> {
    let r = a / b;
    let n = r.round();
    (n >= 1.0 && (r - n).abs() < 1e-6).then_some(n as u64)
}

pub fn load_scenario(path: &Path) -> Result<Scenario, Error> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let s: Scenario =
        serde_json::from_str(&text).map_err(|e| Error::Parse { path: path.to_path_buf(), source: e })?;
    s.compile()?;
    Ok(s)
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self, Error> {
        let s: Scenario =
            serde_json::from_str(text).map_err(|e| Error::Parse { path: "<inline>".into(), source: e })?;
        s.compile()?;
        Ok(s)
    }

    /// The explicit system, expanding a built-in reference.
    pub fn resolved_system(&self) -> Result<SystemSpec, ConfigError> {
        match &self.system.builtin {
            Some(name) => {
                let explicit = !(self.system.buses.is_empty()
                    && self.system.lines.is_empty()
                    && self.system.loads.is_empty()
                    && self.system.dgs.is_empty());
                if explicit {
                    return Err(bad("system", "`builtin` excludes explicit buses, lines, loads and dgs"));
                }
                builtin::system(name).ok_or_else(|| bad("system.builtin", format!("unknown system `{name}`")))
            }
            None => Ok(self.system.clone()),
        }
    }

    pub fn resolved_comm(&self) -> Result<CommSpec, ConfigError> {
        match (&self.comm, &self.system.builtin) {
            (Some(c), _) => Ok(c.clone()),
            (None, Some(name)) => {
                builtin::comm(name).ok_or_else(|| bad("system.builtin", format!("unknown system `{name}`")))
            }
            (None, None) => Err(bad("comm", "required for an explicit system")),
        }
    }

    /// Validates every field and resolves names.
    pub fn compile(&self) -> Result<Compiled, ConfigError> {
        let c = &self.control;
        let sys = self.resolved_system()?;
        let comm = self.resolved_comm()?;

        if !(self.duration >= 0.0 && self.duration.is_finite()) {
            return Err(bad("duration", "must be finite and >= 0"));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(bad("noise_sigma", "must be finite and >= 0"));
        }
        self.thresholds.validate()?;
        c.kernel.validate()?;
        for (key, v) in [("control.v_ref", c.v_ref), ("control.dt", c.dt), ("control.ts", c.ts), ("control.ts_mpc", c.ts_mpc)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(bad(key, "must be positive"));
            }
        }
        if !(c.band > 0.0 && c.band < 1.0) {
            return Err(bad("control.band", "must lie in (0, 1)"));
        }
        if !(c.rho > 0.0 && c.rho.is_finite()) {
            return Err(bad("control.rho", "must be positive"));
        }
        if c.horizon == 0 {
            return Err(bad("control.horizon", "must be at least 1"));
        }
        let steps_per_ts = integer_ratio(c.ts, c.dt).ok_or_else(|| bad("control.ts", "must be an integer multiple of dt"))?;
        let ratio = integer_ratio(c.ts_mpc, c.ts).ok_or_else(|| bad("control.ts_mpc", "must be an integer multiple of ts"))?;
        let steps_per_mpc = steps_per_ts * ratio;
        c.window.validate(c.ts_mpc)?;
        let window_steps = integer_ratio(c.window.length(), c.dt)
            .ok_or_else(|| bad("control.window", "length must be an integer multiple of dt"))?;
        match c.closure {
            Closure::Kirchhoff { kappa } if !(kappa > 0.0) => return Err(bad("control.closure.kappa", "must be positive")),
            Closure::VirtualResistor { r_n } if !(r_n > 0.0) => return Err(bad("control.closure.r_n", "must be positive")),
            _ => {}
        }

        // Network and DGs.
        if sys.dgs.is_empty() {
            return Err(bad("system.dgs", "at least one DG is required"));
        }
        let bus = |key: String, name: &str| {
            sys.buses.iter().position(|b| b == name).ok_or_else(|| bad(key, format!("unknown bus `{name}`")))
        };
        let mut lines = Vec::new();
        for (k, l) in sys.lines.iter().enumerate() {
            lines.push(Line {
                name: l.name.clone(),
                from: bus(format!("system.lines[{k}].from"), &l.from)?,
                to: bus(format!("system.lines[{k}].to"), &l.to)?,
                r: l.r,
                l: l.l,
                closed: l.closed,
                breaker: l.breaker,
            });
        }
        let mut loads = Vec::new();
        for (k, l) in sys.loads.iter().enumerate() {
            loads.push(Load {
                name: l.name.clone(),
                bus: bus(format!("system.loads[{k}].bus"), &l.bus)?,
                r: l.r,
                l: l.l,
                connected: l.connected,
            });
        }
        let mut dgs = Vec::new();
        let mut dg_bus = Vec::new();
        let mut dg_names = Vec::new();
        for (k, d) in sys.dgs.iter().enumerate() {
            let base = DgParams::preset(&d.preset)
                .ok_or_else(|| bad(format!("system.dgs[{k}].preset"), format!("unknown preset `{}`", d.preset)))?;
            let p = d.params.apply(base);
            p.validate(&d.name)?;
            dgs.push(p);
            dg_bus.push(bus(format!("system.dgs[{k}].bus"), &d.bus)?);
            if dg_names.contains(&d.name) {
                return Err(bad(format!("system.dgs[{k}].name"), "duplicate DG name"));
            }
            dg_names.push(d.name.clone());
        }
        let network = NetworkModel { buses: sys.buses.clone(), lines, loads, closure: c.closure };
        let plant = PlantConfig { dgs, dg_bus, network, omega_n: OMEGA_50HZ, reference_dg: 0 };
        plant.validate()?;

        let n = dg_names.len();
        let dg_idx = |key: String, name: &str| {
            dg_names.iter().position(|d| d == name).ok_or_else(|| bad(key, format!("unknown DG `{name}`")))
        };
        let mut edges = Vec::new();
        for (k, [a, b]) in comm.edges.iter().enumerate() {
            let (a, b) = (dg_idx(format!("comm.edges[{k}]"), a)?, dg_idx(format!("comm.edges[{k}]"), b)?);
            if a == b {
                return Err(bad(format!("comm.edges[{k}]"), "self loop"));
            }
            edges.push((a, b));
        }
        let mut pinned = Vec::new();
        for (k, p) in comm.pinned.iter().enumerate() {
            pinned.push(dg_idx(format!("comm.pinned[{k}]"), p)?);
        }
        let graph = CommGraph::undirected(n, &edges, &pinned)?;

        // Events.
        let mut actions = Vec::new();
        let mut last_t = f64::NEG_INFINITY;
        let mut secondary_seen = false;
        let mut online = vec![true; n];
        let mut closed: Vec<bool> = plant.network.lines.iter().map(|l| l.closed).collect();
        let mut load_on: Vec<bool> = plant.network.loads.iter().map(|l| l.connected).collect();
        let mut link_down: Vec<(usize, usize, f64)> = Vec::new();
        let mut links = LinkSchedule::default();
        for (k, e) in self.events.iter().enumerate() {
            let key = format!("events[{k}]");
            if !e.t.is_finite() || e.t < 0.0 {
                return Err(bad(format!("{key}.t"), "must be finite and >= 0"));
            }
            if e.t < last_t {
                return Err(bad(format!("{key}.t"), "events must be sorted by time"));
            }
            if e.t > self.duration {
                return Err(bad(format!("{key}.t"), "event lies beyond the duration"));
            }
            last_t = e.t;
            let target = || {
                e.target.as_deref().ok_or_else(|| bad(format!("{key}.target"), format!("required for {}", e.kind.as_str())))
            };
            let action = match e.kind {
                EventKind::LoadConnect | EventKind::LoadDisconnect => {
                    let name = target()?;
                    let idx = plant
                        .network
                        .loads
                        .iter()
                        .position(|l| l.name == name)
                        .ok_or_else(|| bad(format!("{key}.target"), format!("unknown load `{name}`")))?;
                    load_on[idx] = e.kind == EventKind::LoadConnect;
                    let buses: Vec<usize> = (0..n).filter(|&i| online[i]).map(|i| plant.dg_bus[i]).collect();
                    check_energized(&plant, &closed, &load_on, &buses, &key)?;
                    Action::Load { idx, connected: load_on[idx] }
                }
                EventKind::DgUnplug | EventKind::DgPlug => {
                    let idx = dg_idx(format!("{key}.target"), target()?)?;
                    if idx == plant.reference_dg {
                        return Err(bad(format!("{key}.target"), "the reference DG cannot be unplugged or replugged"));
                    }
                    online[idx] = e.kind == EventKind::DgPlug;
                    graph.check_spanning_tree(&online).map_err(|err| bad(format!("{key}"), err.to_string()))?;
                    let buses: Vec<usize> = (0..n).filter(|&i| online[i]).map(|i| plant.dg_bus[i]).collect();
                    check_energized(&plant, &closed, &load_on, &buses, &key)?;
                    Action::Dg { idx, online: online[idx] }
                }
                EventKind::LinkDown | EventKind::LinkUp => {
                    let name = target()?;
                    let (a, b) = name
                        .split_once('-')
                        .ok_or_else(|| bad(format!("{key}.target"), "links are written `DGa-DGb`"))?;
                    let (a, b) = (dg_idx(format!("{key}.target"), a.trim())?, dg_idx(format!("{key}.target"), b.trim())?);
                    if graph.adjacency[a][b] <= 0.0 {
                        return Err(bad(format!("{key}.target"), format!("`{name}` is not a communication edge")));
                    }
                    let up = e.kind == EventKind::LinkUp;
                    let open = link_down.iter().position(|&(x, y, _)| (x, y) == (a.min(b), a.max(b)));
                    match (up, open) {
                        (false, None) => link_down.push((a.min(b), a.max(b), e.t)),
                        (true, Some(p)) => {
                            let (_, _, start) = link_down.remove(p);
                            if e.t > start {
                                links.add_outage(a, b, start, e.t);
                                links.add_outage(b, a, start, e.t);
                            }
                        }
                        (false, Some(_)) => return Err(bad(key, "link is already down")),
                        (true, None) => return Err(bad(key, "link is not down")),
                    }
                    Action::Link { a, b, up }
                }
                EventKind::BreakerOpen | EventKind::BreakerClose => {
                    let name = target()?;
                    let idx = plant
                        .network
                        .lines
                        .iter()
                        .position(|l| l.name == name)
                        .ok_or_else(|| bad(format!("{key}.target"), format!("unknown line `{name}`")))?;
                    if !plant.network.lines[idx].breaker {
                        return Err(bad(format!("{key}.target"), format!("line `{name}` has no breaker")));
                    }
                    closed[idx] = e.kind == EventKind::BreakerClose;
                    let buses: Vec<usize> = (0..n).filter(|&i| online[i]).map(|i| plant.dg_bus[i]).collect();
                    check_energized(&plant, &closed, &load_on, &buses, &key)?;
                    Action::Breaker { idx, closed: closed[idx] }
                }
                EventKind::SecondaryOn => {
                    if secondary_seen {
                        return Err(bad(key, "secondary_on may appear at most once"));
                    }
                    secondary_seen = true;
                    Action::SecondaryOn
                }
            };
            let step = ((e.t / c.dt) - 1e-9).ceil().max(0.0) as u64;
            let label = match &e.target {
                Some(t) => format!("{} {}", e.kind.as_str(), t),
                None => e.kind.as_str().to_string(),
            };
            actions.push(TimedAction { t: e.t, step, action, label });
        }
        for (a, b, start) in link_down {
            let end = self.duration + 1.0;
            links.add_outage(a, b, start, end);
            links.add_outage(b, a, start, end);
        }
        links.validate()?;

        let n_steps = (self.duration / c.dt).round() as u64;
        Ok(Compiled {
            plant,
            dg_names,
            graph,
            links,
            actions,
            n_steps,
            steps_per_ts,
            steps_per_mpc,
            window_steps,
            ratio: ratio as usize,
        })
    }
}

fn check_energized(
    plant: &PlantConfig,
    closed: &[bool],
    load_on: &[bool],
    dg_buses: &[usize],
    key: &str,
) -> Result<(), ConfigError> {
    let mut net = plant.network.clone();
    for (l, &c) in net.lines.iter_mut().zip(closed) {
        l.closed = c;
    }
    for (l, &c) in net.loads.iter_mut().zip(load_on) {
        l.connected = c;
    }
    net.check_energized(dg_buses).map_err(|e| bad(key, e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal(events: &str, duration: f64) -> String {
        format!(r#"{{"name": "t", "system": {{"builtin": "4dg"}}, "events": {events}, "duration": {duration}}}"#)
    }

    #[test]
    fn empty_events_are_valid() {
        let s = Scenario::from_json(&minimal("[]", 1.0)).unwrap();
        let c = s.compile().unwrap();
        assert_eq!(c.n_steps, 20_000);
        assert_eq!((c.steps_per_ts, c.steps_per_mpc, c.window_steps, c.ratio), (200, 1000, 800, 5));
    }

    #[test]
    fn unknown_event_kind_rejected() {
        let e = Scenario::from_json(&minimal(r#"[{"t": 1, "kind": "meteor"}]"#, 2.0)).unwrap_err();
        assert!(e.to_string().contains("meteor"), "{e}");
    }

    #[test]
    fn unknown_key_named() {
        let text = r#"{"name": "t", "system": {"builtin": "4dg"}, "duraton": 1}"#;
        let e = Scenario::from_json(text).unwrap_err();
        assert!(e.to_string().contains("duraton"), "{e}");
    }

    #[test]
    fn unsorted_and_late_events_rejected() {
        let ev = r#"[{"t": 2, "kind": "secondary_on"}, {"t": 1, "kind": "load_connect", "target": "Load2"}]"#;
        assert!(Scenario::from_json(&minimal(ev, 3.0)).is_err());
        assert!(Scenario::from_json(&minimal(r#"[{"t": 5, "kind": "secondary_on"}]"#, 3.0)).is_err());
    }

    #[test]
    fn reference_dg_cannot_unplug() {
        let ev = r#"[{"t": 1, "kind": "dg_unplug", "target": "DG1"}]"#;
        assert!(Scenario::from_json(&minimal(ev, 3.0)).is_err());
    }

    #[test]
    fn unplug_that_disconnects_graph_rejected() {
        // Removing DG2 from the chain cuts DG3 and DG4 off the leader.
        let ev = r#"[{"t": 1, "kind": "dg_unplug", "target": "DG2"}]"#;
        let e = Scenario::from_json(&minimal(ev, 3.0)).unwrap_err();
        assert!(e.to_string().contains("reachable"), "{e}");
    }

    #[test]
    fn link_events_build_schedule() {
        let ev = r#"[{"t": 2, "kind": "link_down", "target": "DG3-DG4"}, {"t": 6, "kind": "link_up", "target": "DG3-DG4"}]"#;
        let c = Scenario::from_json(&minimal(ev, 7.0)).unwrap().compile().unwrap();
        assert!(c.links.is_down(2, 3, 2.0) && c.links.is_down(3, 2, 5.99));
        assert!(!c.links.is_down(2, 3, 6.0));
        let bad = r#"[{"t": 2, "kind": "link_down", "target": "DG1-DG4"}]"#;
        assert!(Scenario::from_json(&minimal(bad, 7.0)).is_err());
    }

    #[test]
    fn event_steps_round_up() {
        let ev = r#"[{"t": 1.00001, "kind": "secondary_on"}]"#;
        let c = Scenario::from_json(&minimal(ev, 2.0)).unwrap().compile().unwrap();
        assert_eq!(c.actions[0].step, 20_001);
        let ev = r#"[{"t": 1.0, "kind": "secondary_on"}]"#;
        let c = Scenario::from_json(&minimal(ev, 2.0)).unwrap().compile().unwrap();
        assert_eq!(c.actions[0].step, 20_000);
    }

    #[test]
    fn secondary_on_at_most_once() {
        let ev = r#"[{"t": 1, "kind": "secondary_on"}, {"t": 2, "kind": "secondary_on"}]"#;
        assert!(Scenario::from_json(&minimal(ev, 3.0)).is_err());
    }

    #[test]
    fn window_longer_than_period_rejected() {
        let text = r#"{"name": "t", "system": {"builtin": "4dg"}, "duration": 1,
            "control": {"window": {"t_eps": 0.04, "dt_active": 0.02}}}"#;
        assert!(Scenario::from_json(text).is_err());
    }
}
