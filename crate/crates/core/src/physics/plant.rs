//! Whole-microgrid state, derivative assembly and the fixed-step integrator.

use serde::{Deserialize, Serialize};

use super::dg::{
    dg_derivatives, droop_outputs, frame_transform, DgInput, DgParams, DgState, FrameDirection, DG_STATES,
    DG_STATE_NAMES,
};
use super::network::{BranchKind, NetworkModel, Topology};
use crate::error::{ConfigError, PlantError};
use crate::linearize::compute_f;

/// Scratch space for [`rk4_step`].
#[derive(Debug, Clone, Default)]
pub struct Rk4Scratch {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
}

/// Classical fourth-order Runge-Kutta step of `x' = f(t, x)`.
pub fn rk4_step<F>(mut f: F, t: f64, x: &mut [f64], dt: f64, s: &mut Rk4Scratch)
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    let n = x.len();
    for v in [&mut s.k1, &mut s.k2, &mut s.k3, &mut s.k4, &mut s.tmp] {
        v.resize(n, 0.0);
    }
    f(t, x, &mut s.k1);
    for k in 0..n {
        s.tmp[k] = x[k] + 0.5 * dt * s.k1[k];
    }
    f(t + 0.5 * dt, &s.tmp, &mut s.k2);
    for k in 0..n {
        s.tmp[k] = x[k] + 0.5 * dt * s.k2[k];
    }
    f(t + 0.5 * dt, &s.tmp, &mut s.k3);
    for k in 0..n {
        s.tmp[k] = x[k] + dt * s.k3[k];
    }
    f(t + dt, &s.tmp, &mut s.k4);
    for k in 0..n {
        x[k] += dt / 6.0 * (s.k1[k] + 2.0 * s.k2[k] + 2.0 * s.k3[k] + s.k4[k]);
    }
}

/// Voltage setpoint source for one DG, held across an integration step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum VoltageCommand {
    /// Constant `V_n`.
    Fixed(f64),
    /// `V_n(t) = (xi - f(x(t)) - bias) / g_nominal`, evaluated continuously.
    Linearizing { xi: f64, bias: f64, g_nominal: f64 },
}

/// Instantaneous signals of one DG.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DgSignals {
    pub v_od: f64,
    pub v_oq: f64,
    pub p: f64,
    pub q: f64,
    pub omega: f64,
    pub v_n: f64,
    /// Model nonlinearity at this instant.
    pub f_model: f64,
    /// `v_od'` from the true state.
    pub v_od_dot: f64,
    /// Bus voltage in the DG frame.
    pub v_b: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantState {
    pub t: f64,
    pub dgs: Vec<DgState>,
    pub online: Vec<bool>,
    pub line_i: Vec<[f64; 2]>,
    pub load_i: Vec<[f64; 2]>,
}

#[derive(Debug, Clone)]
pub struct PlantConfig {
    pub dgs: Vec<DgParams>,
    pub dg_bus: Vec<usize>,
    pub network: NetworkModel,
    pub omega_n: f64,
    /// DG whose droop frequency defines the common frame.
    pub reference_dg: usize,
}

impl PlantConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.dgs.is_empty() || self.dgs.len() != self.dg_bus.len() {
            return Err(ConfigError::Network("each DG needs exactly one bus".into()));
        }
        for (k, p) in self.dgs.iter().enumerate() {
            p.validate(&format!("DG{}", k + 1))?;
        }
        self.network.validate()?;
        if self.dg_bus.iter().any(|&b| b >= self.network.n_bus()) {
            return Err(ConfigError::Network("DG attached to an unknown bus".into()));
        }
        if self.reference_dg >= self.dgs.len() {
            return Err(ConfigError::Network("reference DG out of range".into()));
        }
        self.network.check_energized(&self.dg_bus)
    }
}

pub struct Plant {
    pub cfg: PlantConfig,
    state: PlantState,
    topo: Topology,
    scratch: Rk4Scratch,
    flat: Vec<f64>,
}

fn rotate(v: [f64; 2], delta: f64, dir: FrameDirection) -> [f64; 2] {
    frame_transform(v, delta, dir)
}

impl Plant {
    /// Starts every DG at its unloaded equilibrium at `v_n0` with all network
    /// currents zero.
    pub fn new(cfg: PlantConfig, v_n0: f64) -> Result<Self, ConfigError> {
        cfg.validate()?;
        let dgs = cfg.dgs.iter().map(|p| DgState::no_load_equilibrium(p, v_n0)).collect();
        let state = PlantState {
            t: 0.0,
            dgs,
            online: vec![true; cfg.dgs.len()],
            line_i: vec![[0.0; 2]; cfg.network.lines.len()],
            load_i: vec![[0.0; 2]; cfg.network.loads.len()],
        };
        Self::from_state(cfg, state)
    }

    pub fn from_state(cfg: PlantConfig, state: PlantState) -> Result<Self, ConfigError> {
        cfg.validate()?;
        let topo = build_topology(&cfg, &state.online);
        Ok(Self { cfg, state, topo, scratch: Rk4Scratch::default(), flat: Vec::new() })
    }

    pub fn state(&self) -> &PlantState {
        &self.state
    }

    pub fn n_dg(&self) -> usize {
        self.cfg.dgs.len()
    }

    pub fn topology(&self) -> &Topology {
        &self.topo
    }

    fn pack(&self, x: &mut Vec<f64>) {
        let s = &self.state;
        x.clear();
        for d in &s.dgs {
            x.extend_from_slice(&d.to_array());
        }
        for i in s.line_i.iter().chain(&s.load_i) {
            x.extend_from_slice(i);
        }
    }

    fn unpack(&mut self, x: &[f64]) {
        let n = self.n_dg();
        for (k, d) in self.state.dgs.iter_mut().enumerate() {
            *d = DgState::from_slice(&x[k * DG_STATES..]);
        }
        let mut off = n * DG_STATES;
        for i in self.state.line_i.iter_mut().chain(self.state.load_i.iter_mut()) {
            *i = [x[off], x[off + 1]];
            off += 2;
        }
    }

    /// Frequency of the common reference frame.
    pub fn omega_com(&self) -> f64 {
        let r = self.cfg.reference_dg;
        self.cfg.omega_n - self.cfg.dgs[r].m_p * self.state.dgs[r].p
    }

    /// Advances the plant by `dt` with the commands held.
    pub fn step(&mut self, cmds: &[VoltageCommand], dt: f64) -> Result<(), PlantError> {
        let mut x = std::mem::take(&mut self.flat);
        self.pack(&mut x);
        let mut scratch = std::mem::take(&mut self.scratch);
        {
            let ctx = DerivCtx { cfg: &self.cfg, topo: &self.topo, online: &self.state.online };
            rk4_step(|_, x, dx| ctx.derivative(x, cmds, dx, None), self.state.t, &mut x, dt, &mut scratch);
        }
        self.scratch = scratch;
        let t_next = self.state.t + dt;
        self.check_finite(&x, t_next)?;
        self.unpack(&x);
        self.flat = x;
        self.state.t = t_next;
        Ok(())
    }

    fn check_finite(&self, x: &[f64], t: f64) -> Result<(), PlantError> {
        let n = self.n_dg();
        if let Some(pos) = x.iter().position(|v| !v.is_finite()) {
            if pos < n * DG_STATES {
                let index = pos % DG_STATES;
                return Err(PlantError::NonFiniteDg { t, dg: pos / DG_STATES + 1, index, name: DG_STATE_NAMES[index] });
            }
            let k = (pos - n * DG_STATES) / 2;
            let nl = self.cfg.network.lines.len();
            let branch = if k < nl {
                format!("line {}", self.cfg.network.lines[k].name)
            } else {
                format!("load {}", self.cfg.network.loads[k - nl].name)
            };
            return Err(PlantError::NonFiniteNetwork { t, branch });
        }
        Ok(())
    }

    /// Signals of every DG at the current state under `cmds`.
    pub fn signals(&self, cmds: &[VoltageCommand]) -> Vec<DgSignals> {
        let mut x = Vec::new();
        self.pack(&mut x);
        let mut dx = vec![0.0; x.len()];
        let mut sig = vec![DgSignals::default(); self.n_dg()];
        let ctx = DerivCtx { cfg: &self.cfg, topo: &self.topo, online: &self.state.online };
        ctx.derivative(&x, cmds, &mut dx, Some(&mut sig));
        sig
    }

    /// Time derivative of the packed state; exposed for oracle tests.
    pub fn derivative(&self, cmds: &[VoltageCommand]) -> Vec<f64> {
        let mut x = Vec::new();
        self.pack(&mut x);
        let mut dx = vec![0.0; x.len()];
        let ctx = DerivCtx { cfg: &self.cfg, topo: &self.topo, online: &self.state.online };
        ctx.derivative(&x, cmds, &mut dx, None);
        dx
    }

    /// Bus voltages in the common frame.
    pub fn bus_voltages(&self) -> Vec<[f64; 2]> {
        let ctx = DerivCtx { cfg: &self.cfg, topo: &self.topo, online: &self.state.online };
        let mut x = Vec::new();
        self.pack(&mut x);
        let (cur, src) = ctx.branch_signals(&x);
        self.topo.bus_voltages(&self.cfg.network.closure, &cur, &src, self.omega_com())
    }

    /// Rebuilds the active branch set. Currents of opened branches are
    /// zeroed by the caller; the resulting KCL residual is relaxed by the
    /// closure so that DG output currents stay continuous.
    fn retopologize(&mut self) {
        self.topo = build_topology(&self.cfg, &self.state.online);
    }

    pub fn set_load(&mut self, idx: usize, connected: bool) {
        let load = &mut self.cfg.network.loads[idx];
        if load.connected == connected {
            return;
        }
        load.connected = connected;
        self.state.load_i[idx] = [0.0; 2];
        self.retopologize();
    }

    pub fn set_line(&mut self, idx: usize, closed: bool) {
        let line = &mut self.cfg.network.lines[idx];
        if line.closed == closed {
            return;
        }
        line.closed = closed;
        self.state.line_i[idx] = [0.0; 2];
        self.retopologize();
    }

    /// Opens the DG's output branch; the DG keeps running at no load.
    pub fn unplug(&mut self, dg: usize) -> Result<(), ConfigError> {
        if dg == self.cfg.reference_dg {
            return Err(ConfigError::Network("the reference DG cannot be unplugged".into()));
        }
        if !self.state.online[dg] {
            return Ok(());
        }
        self.state.online[dg] = false;
        let d = &mut self.state.dgs[dg];
        d.i_od = 0.0;
        d.i_oq = 0.0;
        self.retopologize();
        Ok(())
    }

    /// Reconnects a DG with its frame aligned to the present bus voltage.
    pub fn plug(&mut self, dg: usize) {
        if self.state.online[dg] {
            return;
        }
        let v = self.bus_voltages()[self.cfg.dg_bus[dg]];
        let d = &mut self.state.dgs[dg];
        if v[0].hypot(v[1]) > 1e-9 {
            d.delta = v[1].atan2(v[0]);
        }
        d.i_od = 0.0;
        d.i_oq = 0.0;
        self.state.online[dg] = true;
        self.retopologize();
    }

    pub fn is_online(&self, dg: usize) -> bool {
        self.state.online[dg]
    }
}

fn build_topology(cfg: &PlantConfig, online: &[bool]) -> Topology {
    let dgs: Vec<Option<(usize, f64, f64)>> = cfg
        .dgs
        .iter()
        .zip(&cfg.dg_bus)
        .zip(online)
        .map(|((p, &b), &on)| on.then_some((b, p.r_c, p.l_c)))
        .collect();
    Topology::build(&cfg.network, &dgs)
}

struct DerivCtx<'a> {
    cfg: &'a PlantConfig,
    topo: &'a Topology,
    online: &'a [bool],
}

impl DerivCtx<'_> {
    fn branch_signals(&self, x: &[f64]) -> (Vec<[f64; 2]>, Vec<[f64; 2]>) {
        let n = self.cfg.dgs.len();
        let nl = self.cfg.network.lines.len();
        let mut cur = Vec::with_capacity(self.topo.branches.len());
        let mut src = Vec::with_capacity(self.topo.branches.len());
        for b in &self.topo.branches {
            match b.kind {
                BranchKind::Dg(k) => {
                    let o = k * DG_STATES;
                    let delta = x[o];
                    cur.push(rotate([x[o + 11], x[o + 12]], delta, FrameDirection::ToCommon));
                    src.push(rotate([x[o + 9], x[o + 10]], delta, FrameDirection::ToCommon));
                }
                BranchKind::Line(k) => {
                    let o = n * DG_STATES + 2 * k;
                    cur.push([x[o], x[o + 1]]);
                    src.push([0.0; 2]);
                }
                BranchKind::Load(k) => {
                    let o = n * DG_STATES + 2 * (nl + k);
                    cur.push([x[o], x[o + 1]]);
                    src.push([0.0; 2]);
                }
            }
        }
        (cur, src)
    }

    fn derivative(&self, x: &[f64], cmds: &[VoltageCommand], dx: &mut [f64], mut sig: Option<&mut [DgSignals]>) {
        let cfg = self.cfg;
        let n = cfg.dgs.len();
        let nl = cfg.network.lines.len();
        dx.iter_mut().for_each(|v| *v = 0.0);

        let r = cfg.reference_dg;
        let omega_com = cfg.omega_n - cfg.dgs[r].m_p * x[r * DG_STATES + 1];

        let (cur, src) = self.branch_signals(x);
        let v_bus = self.topo.bus_voltages(&cfg.network.closure, &cur, &src, omega_com);

        for k in 0..n {
            let o = k * DG_STATES;
            let p = &cfg.dgs[k];
            let s = DgState::from_slice(&x[o..o + DG_STATES]);
            let v_b = if self.online[k] {
                rotate(v_bus[cfg.dg_bus[k]], s.delta, FrameDirection::ToLocal)
            } else {
                [s.v_od, s.v_oq]
            };
            let (omega, _) = droop_outputs(p, s.p, s.q, &DgInput { omega_n: cfg.omega_n, v_n: 0.0 });
            let f_model = compute_f(&s, p, v_b[0], omega);
            let v_n = match cmds[k] {
                VoltageCommand::Fixed(v) => v,
                VoltageCommand::Linearizing { xi, bias, g_nominal } => (xi - f_model - bias) / g_nominal,
            };
            if let Some(sig) = sig.as_deref_mut() {
                sig[k] = DgSignals {
                    v_od: s.v_od,
                    v_oq: s.v_oq,
                    p: s.p,
                    q: s.q,
                    omega,
                    v_n,
                    f_model,
                    v_od_dot: omega * s.v_oq + (s.i_ld - s.i_od) / p.c_f,
                    v_b,
                };
            }
            let mut d = dg_derivatives(p, &s, &DgInput { omega_n: cfg.omega_n, v_n }, v_b, omega_com);
            if !self.online[k] {
                // Open output branch: the inverter idles at no load.
                d[0] = 0.0;
                d[11] = 0.0;
                d[12] = 0.0;
            }
            if k == r {
                d[0] = 0.0;
            }
            dx[o..o + DG_STATES].copy_from_slice(&d);
        }

        for (b, (i, u)) in self.topo.branches.iter().zip(cur.iter().zip(&src)) {
            let o = match b.kind {
                BranchKind::Dg(_) => continue,
                BranchKind::Line(k) => n * DG_STATES + 2 * k,
                BranchKind::Load(k) => n * DG_STATES + 2 * (nl + k),
            };
            let d = Topology::branch_derivative(b, *i, *u, &v_bus, omega_com);
            dx[o] = d[0];
            dx[o + 1] = d[1];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::physics::dg::OMEGA_50HZ;
    use crate::physics::network::{Closure, Line, Load};

    #[test]
    fn zero_field_leaves_state() {
        let mut x = vec![1.0, -2.0, 3.5];
        let mut s = Rk4Scratch::default();
        rk4_step(|_, _, dx| dx.iter_mut().for_each(|v| *v = 0.0), 0.0, &mut x, 0.1, &mut s);
        assert_eq!(x, vec![1.0, -2.0, 3.5]);
    }

    #[test]
    fn fourth_order_convergence() {
        let err = |dt: f64| {
            let mut x = vec![1.0];
            let mut s = Rk4Scratch::default();
            let steps = (1.0 / dt).round() as usize;
            for k in 0..steps {
                rk4_step(|_, x, dx| dx[0] = -x[0], k as f64 * dt, &mut x, dt, &mut s);
            }
            (x[0] - (-1.0f64).exp()).abs()
        };
        let ratio = err(0.1) / err(0.05);
        assert!((ratio - 16.0).abs() < 1.0, "{ratio}");
        let ratio = err(0.05) / err(0.025);
        assert!((ratio - 16.0).abs() < 1.0, "{ratio}");
    }

    #[test]
    fn lossless_lc_conserves_energy() {
        let (l, c) = (1.35e-3, 47e-6);
        let mut x = vec![10.0, 0.0];
        let e0 = 0.5 * l * x[0] * x[0] + 0.5 * c * x[1] * x[1];
        let dt = 1e-5;
        let mut s = Rk4Scratch::default();
        for k in 0..10_000 {
            rk4_step(
                |_, x, dx| {
                    dx[0] = -x[1] / l;
                    dx[1] = x[0] / c;
                },
                k as f64 * dt,
                &mut x,
                dt,
                &mut s,
            );
        }
        let e1 = 0.5 * l * x[0] * x[0] + 0.5 * c * x[1] * x[1];
        assert!((e1 - e0).abs() / e0 < 1e-6, "{}", (e1 - e0) / e0);
    }

    fn two_dg_unloaded() -> PlantConfig {
        PlantConfig {
            dgs: vec![DgParams::dg1(), DgParams::dg2()],
            dg_bus: vec![0, 1],
            network: NetworkModel {
                buses: vec!["1".into(), "2".into()],
                lines: vec![Line { name: "l".into(), from: 0, to: 1, r: 0.23, l: 318e-6, closed: true, breaker: false }],
                loads: vec![Load { name: "x".into(), bus: 1, r: 2.0, l: 6.4e-3, connected: false }],
                closure: Closure::default(),
            },
            omega_n: OMEGA_50HZ,
            reference_dg: 0,
        }
    }

    #[test]
    fn unloaded_equilibrium_is_fixed_point() {
        let plant = Plant::new(two_dg_unloaded(), 311.0).unwrap();
        let cmds = [VoltageCommand::Fixed(311.0); 2];
        let dx = plant.derivative(&cmds);
        let worst = dx.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        assert!(worst < 1e-9, "{worst}");
    }

    #[test]
    fn reference_angle_stays_zero() {
        let mut cfg = two_dg_unloaded();
        cfg.network.loads[0].connected = true;
        let mut plant = Plant::new(cfg, 311.0).unwrap();
        let cmds = [VoltageCommand::Fixed(311.0); 2];
        for _ in 0..2000 {
            plant.step(&cmds, 5e-5).unwrap();
        }
        assert_eq!(plant.state().dgs[0].delta, 0.0);
        assert!(plant.state().dgs[1].delta != 0.0);
    }

    #[test]
    fn reference_cannot_unplug() {
        let mut plant = Plant::new(two_dg_unloaded(), 311.0).unwrap();
        assert!(plant.unplug(0).is_err());
        assert!(plant.unplug(1).is_ok());
        assert!(!plant.is_online(1));
    }

    #[test]
    fn unplugged_dg_idles_at_no_load() {
        let mut cfg = two_dg_unloaded();
        cfg.network.loads[0].connected = true;
        let mut plant = Plant::new(cfg, 311.0).unwrap();
        let cmds = [VoltageCommand::Fixed(311.0); 2];
        for _ in 0..4000 {
            plant.step(&cmds, 5e-5).unwrap();
        }
        let loaded = plant.state().dgs[1];
        assert!(loaded.i_ld.abs() > 5.0);
        plant.unplug(1).unwrap();
        let delta = plant.state().dgs[1].delta;
        for _ in 0..10_000 {
            plant.step(&cmds, 5e-5).unwrap();
        }
        let s = plant.state().dgs[1];
        let idle = DgState::no_load_equilibrium(&plant.cfg.dgs[1], 311.0);
        assert_eq!((s.i_od, s.i_oq, s.delta), (0.0, 0.0, delta));
        assert!(s.i_ld.abs() < 0.05 * loaded.i_ld.abs(), "{}", s.i_ld);
        assert!((s.v_od - 311.0).abs() < 0.5, "{}", s.v_od);
        assert!((s.i_lq - idle.i_lq).abs() < 0.1);
        plant.plug(1);
        assert!(plant.is_online(1));
    }
}
