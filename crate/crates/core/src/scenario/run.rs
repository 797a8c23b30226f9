//! Simulation conductor: plant at `dt`, observers over scheduled windows,
//! controllers at their instants and two-phase messaging.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::agent::{Decision, DmpcAgent, PiAgent, QpStats};
use crate::comm::{deliver, DeliveryRecord, PredictionMessage};
use crate::dmpc::{PredictionModel, QpWeights};
use crate::error::{Error, PlantError};
use crate::linearize::compute_g;
use crate::observer::{Estimate, IntermittentObserver};
use crate::physics::{DgSignals, Plant, VoltageCommand};
use crate::trigger::{TriggerLog, TriggerReason, TriggerRecord};

use super::schema::{Action, Compiled, ControlMode, Scenario};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeseriesRow {
    pub t: f64,
    pub dg: usize,
    pub v_od: f64,
    pub v_oq: f64,
    pub p: f64,
    pub q: f64,
    pub omega: f64,
    pub v_n: f64,
    pub xi: f64,
    pub f_hat: f64,
    pub z0_hat: f64,
    pub z1_hat: f64,
    pub online: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObserverRow {
    pub t: f64,
    pub dg: usize,
    pub f_hat: f64,
    pub z0_hat: f64,
    pub z1_hat: f64,
    pub cond_gamma: f64,
    pub flagged: bool,
    /// `v_od` and the model-plus-residual `v_od''` at the same instant, kept
    /// for diagnostics.
    pub v_od: f64,
    pub v_od_dot: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QpRow {
    pub step: u64,
    pub dg: usize,
    pub stats: QpStats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AppliedEvent {
    pub t: f64,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOutput {
    pub scenario: String,
    pub mode: ControlMode,
    pub dg_names: Vec<String>,
    pub v_ref: f64,
    pub band: f64,
    pub ts: f64,
    pub ts_mpc: f64,
    pub duration: f64,
    pub secondary_on: Option<f64>,
    pub events: Vec<AppliedEvent>,
    pub timeseries: Vec<TimeseriesRow>,
    pub triggers: TriggerLog,
    pub deliveries: Vec<DeliveryRecord>,
    pub observer: Vec<ObserverRow>,
    pub qp: Vec<QpRow>,
    /// Set when the plant diverged; the logs stop there.
    pub divergence: Option<String>,
}

impl RunOutput {
    pub fn n_dg(&self) -> usize {
        self.dg_names.len()
    }

    /// `(t, v_od)` samples of one DG while it is online.
    pub fn voltage_trace(&self, dg: usize) -> Vec<(f64, f64)> {
        self.timeseries.iter().filter(|r| r.dg == dg && r.online).map(|r| (r.t, r.v_od)).collect()
    }
}

enum Controllers {
    Dmpc(Vec<DmpcAgent>),
    Pi(Vec<PiAgent>),
}

struct Conductor<'a> {
    s: &'a Scenario,
    c: Compiled,
    plant: Plant,
    cmds: Vec<VoltageCommand>,
    ctrl: Controllers,
    obs: Vec<IntermittentObserver>,
    est: Vec<Estimate>,
    /// Residual `v_od'' - (g V_n + f_model)` used as the linearizing bias.
    bias: Vec<f64>,
    xi: Vec<f64>,
    g_nom: Vec<f64>,
    noise: Option<(ChaCha8Rng, Normal<f64>)>,
    y_meas: Vec<f64>,
    secondary: bool,
    out: RunOutput,
}

/// Runs a scenario. Configuration errors are returned as `Err`; a plant
/// divergence yields partial output with `divergence` set.
pub fn run(s: &Scenario) -> Result<RunOutput, Error> {
    let c = s.compile()?;
    let mut cd = Conductor::new(s, c)?;
    cd.run();
    Ok(cd.out)
}

impl<'a> Conductor<'a> {
    fn new(s: &'a Scenario, c: Compiled) -> Result<Self, Error> {
        let ctl = &s.control;
        let n = c.dg_names.len();
        let plant = Plant::new(c.plant.clone(), ctl.v_ref)?;
        let ctrl = match s.mode {
            ControlMode::Pi => Controllers::Pi(
                (0..n).map(|i| PiAgent::new(i, n, c.graph.neighbors(i).unwrap(), ctl.pi, ctl.v_ref)).collect(),
            ),
            _ => {
                let pm = PredictionModel::new(ctl.ts, ctl.horizon, c.ratio);
                let w = QpWeights::diagonal(
                    ctl.horizon,
                    ctl.rho,
                    ctl.v_ref * (1.0 - ctl.band),
                    ctl.v_ref * (1.0 + ctl.band),
                );
                Controllers::Dmpc(
                    (0..n)
                        .map(|i| {
                            DmpcAgent::new(
                                i,
                                n,
                                c.graph.neighbors(i).unwrap(),
                                pm.clone(),
                                w.clone(),
                                s.thresholds,
                                ctl.v_ref,
                            )
                            .with_neighbor_retrigger(ctl.neighbor_retrigger)
                        })
                        .collect(),
                )
            }
        };
        let noise = (s.noise_sigma > 0.0)
            .then(|| (ChaCha8Rng::seed_from_u64(s.seed), Normal::new(0.0, s.noise_sigma).expect("sigma checked")));
        let g_nom = c.plant.dgs.iter().map(compute_g).collect();
        let est = vec![Estimate { f_hat: 0.0, z0_hat: ctl.v_ref, z1_hat: 0.0, cond_gamma: f64::NAN }; n];
        let out = RunOutput {
            scenario: s.name.clone(),
            mode: s.mode,
            dg_names: c.dg_names.clone(),
            v_ref: ctl.v_ref,
            band: ctl.band,
            ts: ctl.ts,
            ts_mpc: ctl.ts_mpc,
            duration: s.duration,
            secondary_on: None,
            events: Vec::new(),
            timeseries: Vec::new(),
            triggers: TriggerLog::default(),
            deliveries: Vec::new(),
            observer: Vec::new(),
            qp: Vec::new(),
            divergence: None,
        };
        Ok(Self {
            s,
            plant,
            cmds: vec![VoltageCommand::Fixed(ctl.v_ref); n],
            ctrl,
            obs: (0..n).map(|_| IntermittentObserver::new(ctl.kernel, ctl.window)).collect(),
            est,
            bias: vec![0.0; n],
            xi: vec![0.0; n],
            g_nom,
            noise,
            y_meas: vec![0.0; n],
            secondary: false,
            out,
            c,
        })
    }

    fn n(&self) -> usize {
        self.c.dg_names.len()
    }

    fn online(&self) -> Vec<bool> {
        self.plant.state().online.clone()
    }

    fn run(&mut self) {
        let dt = self.s.control.dt;
        let mut next_action = 0;
        for step in 0..self.c.n_steps {
            while next_action < self.c.actions.len() && self.c.actions[next_action].step <= step {
                let a = self.c.actions[next_action].clone();
                self.apply(a.action, step);
                self.out.events.push(AppliedEvent { t: a.t, label: a.label });
                next_action += 1;
            }
            if let Err(e) = self.fine_step(step) {
                log::warn!("{e}");
                self.out.divergence = Some(e.to_string());
                return;
            }
            if let Err(e) = self.plant.step(&self.cmds, dt) {
                log::warn!("{e}");
                self.out.divergence = Some(e.to_string());
                return;
            }
        }
    }

    fn apply(&mut self, action: Action, step: u64) {
        let t = step as f64 * self.s.control.dt;
        log::info!("t={t:.4}: {action:?}");
        match action {
            Action::Load { idx, connected } => self.plant.set_load(idx, connected),
            Action::Breaker { idx, closed } => self.plant.set_line(idx, closed),
            Action::Link { a, b, up } => {
                // Both ends resynchronize once the link is back.
                if let (true, Controllers::Dmpc(agents)) = (up, &mut self.ctrl) {
                    agents[a].force();
                    agents[b].force();
                }
            }
            Action::SecondaryOn => {
                self.secondary = true;
                self.out.secondary_on = Some(t);
            }
            Action::Dg { idx, online } => {
                if online {
                    self.plant.plug(idx);
                    self.obs[idx].disturb();
                } else {
                    self.plant.unplug(idx).expect("validated at compile time");
                    self.obs[idx] = IntermittentObserver::new(self.s.control.kernel, self.s.control.window);
                }
                self.cmds[idx] = VoltageCommand::Fixed(self.s.control.v_ref);
                self.bias[idx] = 0.0;
                self.xi[idx] = 0.0;
                match &mut self.ctrl {
                    Controllers::Dmpc(a) => {
                        a[idx].reset();
                        if !online {
                            a.iter_mut().for_each(|x| x.forget_sender(idx));
                        }
                    }
                    Controllers::Pi(a) => {
                        a[idx].reset();
                        if !online {
                            a.iter_mut().for_each(|x| x.forget_sender(idx));
                        }
                    }
                }
            }
        }
    }

    /// Observer input `g V_n + f_model`: the modeled `v_od''` without the
    /// residual.
    fn u_obs(&self, k: usize, s: &DgSignals) -> f64 {
        self.g_nom[k] * s.v_n + s.f_model
    }

    fn fallback(&self, s: &DgSignals, y: f64) -> Estimate {
        Estimate { f_hat: 0.0, z0_hat: y, z1_hat: s.v_od_dot, cond_gamma: f64::NAN }
    }

    fn fine_step(&mut self, step: u64) -> Result<(), PlantError> {
        let n = self.n();
        let dt = self.s.control.dt;
        let t = step as f64 * dt;
        let per_mpc = self.c.steps_per_mpc;
        let is_instant = step % per_mpc == 0;
        let opens_window = (step + self.c.window_steps) % per_mpc == 0;
        let logs = step % self.c.steps_per_ts == 0;
        let online = self.online();

        if let Some((rng, dist)) = self.noise.as_mut() {
            for k in 0..n {
                self.y_meas[k] = dist.sample(rng);
            }
        }
        let needs_signals = is_instant || logs || opens_window || self.obs.iter().any(|o| o.is_open());
        if !needs_signals {
            return Ok(());
        }
        let sig = self.plant.signals(&self.cmds);
        let noisy: Vec<f64> = (0..n)
            .map(|k| sig[k].v_od + if self.noise.is_some() { self.y_meas[k] } else { 0.0 })
            .collect();

        for k in 0..n {
            if online[k] && self.obs[k].is_open() {
                let u = self.u_obs(k, &sig[k]);
                self.obs[k].sample(noisy[k], u, dt);
            }
        }

        if is_instant {
            let kstep = step / per_mpc;
            for k in (0..n).filter(|&k| online[k]) {
                let fb = self.fallback(&sig[k], noisy[k]);
                let r = if self.obs[k].is_open() {
                    self.obs[k].close(fb)
                } else {
                    crate::observer::WindowResult { estimate: fb, flagged: true }
                };
                self.est[k] = r.estimate;
                self.bias[k] = r.estimate.f_hat;
                self.out.observer.push(ObserverRow {
                    t,
                    dg: k,
                    f_hat: sig[k].f_model + r.estimate.f_hat,
                    z0_hat: r.estimate.z0_hat,
                    z1_hat: r.estimate.z1_hat,
                    cond_gamma: r.estimate.cond_gamma,
                    flagged: r.flagged,
                    v_od: sig[k].v_od,
                    v_od_dot: sig[k].v_od_dot,
                });
            }
            if self.secondary && !matches!(self.ctrl, Controllers::Pi(_)) {
                self.dmpc_instant(kstep, t, &online);
            }
        }
        if self.secondary && logs {
            if let Controllers::Pi(_) = self.ctrl {
                self.pi_instant(step / self.c.steps_per_ts, t, &online, &noisy);
            }
        }

        // Commands may have changed: re-evaluate what depends on them.
        let sig = if self.secondary && (is_instant || logs) { self.plant.signals(&self.cmds) } else { sig };
        if opens_window {
            for k in (0..n).filter(|&k| online[k]) {
                let u = self.u_obs(k, &sig[k]);
                self.obs[k].open(noisy[k], u);
            }
        }
        if logs {
            for k in 0..n {
                self.out.timeseries.push(TimeseriesRow {
                    t,
                    dg: k,
                    v_od: sig[k].v_od,
                    v_oq: sig[k].v_oq,
                    p: sig[k].p,
                    q: sig[k].q,
                    omega: sig[k].omega,
                    v_n: sig[k].v_n,
                    xi: self.xi[k],
                    f_hat: sig[k].f_model + self.bias[k],
                    z0_hat: self.est[k].z0_hat,
                    z1_hat: self.est[k].z1_hat,
                    online: online[k],
                });
            }
            if step % (200 * self.c.steps_per_ts) == 0 {
                log::debug!(
                    "t={t:.2} v_od=[{}]",
                    sig.iter().map(|s| format!("{:.3}", s.v_od)).collect::<Vec<_>>().join(", ")
                );
            }
        }
        Ok(())
    }

    fn dmpc_instant(&mut self, kstep: u64, t: f64, online: &[bool]) {
        let forced = self.s.mode == ControlMode::TimeTriggered;
        let parallel = self.s.control.parallel;
        let Controllers::Dmpc(agents) = &mut self.ctrl else { unreachable!() };
        let ys: Vec<[f64; 2]> = self.est.iter().map(|e| [e.z0_hat, e.z1_hat]).collect();
        let decide = |a: &mut DmpcAgent| -> Option<Decision> {
            online[a.id].then(|| a.decide(kstep, ys[a.id], online, forced))
        };
        let decisions: Vec<Option<Decision>> = if parallel {
            agents.par_iter_mut().map(decide).collect()
        } else {
            agents.iter_mut().map(decide).collect()
        };
        let mut msgs: Vec<PredictionMessage> = Vec::new();
        for (k, d) in decisions.into_iter().enumerate() {
            let Some(d) = d else { continue };
            self.out.triggers.rows.push(TriggerRecord {
                step: kstep,
                dg: k,
                opt_fired: d.opt_fired,
                com_fired: d.com_fired,
                reason: d.reason,
            });
            if let Some(q) = d.qp {
                self.out.qp.push(QpRow { step: kstep, dg: k, stats: q });
            }
            if let Some(m) = d.message {
                msgs.push(m);
            }
            self.xi[k] = d.xi;
            self.cmds[k] = VoltageCommand::Linearizing { xi: d.xi, bias: self.bias[k], g_nominal: self.g_nom[k] };
        }
        let (inbox, log) = deliver(&msgs, &self.c.graph, &self.c.links, t, online);
        for (k, msgs) in inbox.iter().enumerate() {
            for m in msgs {
                agents[k].receive(m);
            }
        }
        self.out.deliveries.extend(log);
    }

    fn pi_instant(&mut self, kstep: u64, t: f64, online: &[bool], meas: &[f64]) {
        let dt = self.s.control.ts;
        let Controllers::Pi(agents) = &mut self.ctrl else { unreachable!() };
        let mut msgs = Vec::new();
        for a in agents.iter_mut().filter(|a| online[a.id]) {
            let v_n = a.step(meas[a.id], online, dt);
            self.cmds[a.id] = VoltageCommand::Fixed(v_n);
            self.out.triggers.rows.push(TriggerRecord {
                step: kstep,
                dg: a.id,
                opt_fired: true,
                com_fired: true,
                reason: TriggerReason::Forced,
            });
            msgs.push(PredictionMessage { sender: a.id, issued_at: kstep, payload: vec![meas[a.id]] });
        }
        let (inbox, log) = deliver(&msgs, &self.c.graph, &self.c.links, t, online);
        for (k, msgs) in inbox.iter().enumerate() {
            for m in msgs {
                agents[k].receive(m.sender, m.payload[0]);
            }
        }
        self.out.deliveries.extend(log);
    }
}
