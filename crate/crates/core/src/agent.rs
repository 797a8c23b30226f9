//! Per-DG secondary controllers: the event-triggered DMPC agent and the
//! distributed PI baseline.
//!
//! A controller instant runs in two phases. Every agent first decides from
//! what it received before the instant, then messages are routed and stored
//! for the next instant.

use serde::{Deserialize, Serialize};

use crate::comm::{Neighbor, PredictionMessage};
use crate::dmpc::{neighbor_average, predict_outputs, shift_sequence, solve_voltage_qp, ControlSequence, OutputPrediction, PredictionModel, QpWeights};
use crate::trigger::{comm_trigger, holdover_prediction, opt_trigger_reason, TriggerReason, TriggerThresholds};

/// What one agent did at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct Decision {
    pub opt_fired: bool,
    pub com_fired: bool,
    pub reason: TriggerReason,
    pub xi: f64,
    pub message: Option<PredictionMessage>,
    pub qp: Option<QpStats>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QpStats {
    pub kkt_residual: f64,
    pub iterations: usize,
    pub fallback: bool,
    pub slack: f64,
}

#[derive(Debug, Clone)]
pub struct DmpcAgent {
    pub id: usize,
    pub neighbors: Vec<Neighbor>,
    pm: PredictionModel,
    weights: QpWeights,
    thresholds: TriggerThresholds,
    v_ref: f64,
    seq: Option<ControlSequence>,
    /// Prediction made at the last optimization.
    y_opt: Option<OutputPrediction>,
    /// Last transmitted prediction.
    y_sent: Option<OutputPrediction>,
    received: Vec<Option<OutputPrediction>>,
    force_next: bool,
    /// Neighbor-average target of the last optimization.
    target_opt: Option<OutputPrediction>,
    neighbor_retrigger: bool,
}

impl DmpcAgent {
    pub fn new(
        id: usize,
        n_dg: usize,
        neighbors: Vec<Neighbor>,
        pm: PredictionModel,
        weights: QpWeights,
        thresholds: TriggerThresholds,
        v_ref: f64,
    ) -> Self {
        Self {
            id,
            neighbors,
            pm,
            weights,
            thresholds,
            v_ref,
            seq: None,
            y_opt: None,
            y_sent: None,
            received: vec![None; n_dg],
            force_next: true,
            target_opt: None,
            neighbor_retrigger: true,
        }
    }

    /// Whether a drift of the neighbor-average target by `e_opt` also
    /// triggers an optimization. On by default.
    pub fn with_neighbor_retrigger(mut self, on: bool) -> Self {
        self.neighbor_retrigger = on;
        self
    }

    /// Makes the next instant optimize and transmit unconditionally.
    pub fn force(&mut self) {
        self.force_next = true;
    }

    /// Forgets everything, e.g. while the DG is unplugged.
    pub fn reset(&mut self) {
        self.seq = None;
        self.y_opt = None;
        self.y_sent = None;
        self.target_opt = None;
        self.force_next = true;
    }

    pub fn forget_sender(&mut self, dg: usize) {
        self.received[dg] = None;
    }

    pub fn receive(&mut self, msg: &PredictionMessage) {
        self.received[msg.sender] = Some(msg.prediction());
    }

    pub fn current_xi(&self) -> f64 {
        self.seq.as_ref().map_or(0.0, |s| s.xi[0])
    }

    /// Neighbor predictions aligned to steps `k+1 ..= k+H`.
    pub fn neighbor_predictions(&self, k: u64, online: &[bool]) -> Vec<Vec<f64>> {
        let h = self.pm.horizon;
        let mut out = Vec::with_capacity(self.neighbors.len());
        for nb in &self.neighbors {
            match *nb {
                Neighbor::Dg(j) if online[j] => {
                    if let Some(p) = &self.received[j] {
                        out.push(holdover_prediction(p, k.saturating_sub(p.issued_at)).y);
                    }
                }
                Neighbor::Dg(_) => {}
                Neighbor::Leader => out.push(vec![self.v_ref; h]),
            }
        }
        out
    }

    /// Runs the triggers at instant `k` with output estimate `y` and, if
    /// they fire, optimizes and prepares a message.
    pub fn decide(&mut self, k: u64, y: [f64; 2], online: &[bool], forced: bool) -> Decision {
        let forced = forced || self.force_next || self.seq.is_none();
        self.force_next = false;
        let h = self.pm.horizon;

        let nbs = self.neighbor_predictions(k, online);
        let refs: Vec<&[f64]> = nbs.iter().map(|v| v.as_slice()).collect();
        let target = neighbor_average(&self.pm, y, &refs);
        let mut reason = if forced {
            TriggerReason::Forced
        } else {
            let y_opt = self.y_opt.as_ref().expect("prediction exists after first solve");
            let idx = (k - y_opt.issued_at - 1) as usize;
            let pred = y_opt.y.get(idx).copied().unwrap_or(f64::INFINITY);
            opt_trigger_reason(y[0], pred, k, y_opt.issued_at, h, self.thresholds.e_opt)
        };
        if reason == TriggerReason::None && self.neighbor_retrigger {
            if let Some(t) = &self.target_opt {
                let held = holdover_prediction(t, k - t.issued_at);
                if comm_trigger(target.as_slice(), &held.y, self.thresholds.e_opt) {
                    reason = TriggerReason::Neighbor;
                }
            }
        }

        let mut qp = None;
        let seq = if reason != TriggerReason::None {
            let warm = self.seq.as_ref().map(|s| shift_sequence(s, (k - s.issued_at) as usize).xi);
            let out = solve_voltage_qp(y, &refs, &self.weights, &self.pm, warm.as_deref());
            qp = Some(QpStats {
                kkt_residual: out.kkt_residual,
                iterations: out.iterations,
                fallback: out.fallback,
                slack: out.slack_lo.max(out.slack_hi),
            });
            let seq = ControlSequence { xi: out.xi, issued_at: k };
            self.target_opt = Some(OutputPrediction { y: target.as_slice().to_vec(), issued_at: k });
            self.y_opt =
                Some(OutputPrediction { y: predict_outputs(&self.pm.f, &self.pm.g, y, &seq.xi), issued_at: k });
            seq
        } else {
            let s = self.seq.as_ref().unwrap();
            shift_sequence(s, (k - s.issued_at) as usize)
        };
        let y_now = OutputPrediction { y: predict_outputs(&self.pm.f, &self.pm.g, y, &seq.xi), issued_at: k };
        self.seq = Some(seq);

        let com_fired = forced
            || match &self.y_sent {
                None => true,
                Some(s) => {
                    let held = holdover_prediction(s, k - s.issued_at);
                    comm_trigger(&y_now.y, &held.y, self.thresholds.e_com)
                }
            };
        let message = com_fired.then(|| PredictionMessage { sender: self.id, issued_at: k, payload: y_now.y.clone() });
        if com_fired {
            self.y_sent = Some(y_now);
        }
        Decision {
            opt_fired: reason != TriggerReason::None,
            com_fired,
            reason,
            xi: self.current_xi(),
            message,
            qp,
        }
    }
}

/// Gains of the PI baseline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PiGains {
    pub kp: f64,
    pub ki: f64,
    /// Output clamp relative to the reference.
    pub clamp: f64,
}

impl Default for PiGains {
    fn default() -> Self {
        Self { kp: 0.2, ki: 20.0, clamp: 0.2 }
    }
}

/// Distributed PI on the neighbor-averaged voltage error.
#[derive(Debug, Clone)]
pub struct PiAgent {
    pub id: usize,
    pub neighbors: Vec<Neighbor>,
    gains: PiGains,
    v_ref: f64,
    integral: f64,
    received: Vec<Option<f64>>,
}

impl PiAgent {
    pub fn new(id: usize, n_dg: usize, neighbors: Vec<Neighbor>, gains: PiGains, v_ref: f64) -> Self {
        Self { id, neighbors, gains, v_ref, integral: 0.0, received: vec![None; n_dg] }
    }

    pub fn receive(&mut self, sender: usize, v: f64) {
        self.received[sender] = Some(v);
    }

    pub fn forget_sender(&mut self, dg: usize) {
        self.received[dg] = None;
    }

    pub fn reset(&mut self) {
        self.integral = 0.0;
    }

    /// Mean of `v_j - v_i` over neighbors with data, the leader counting
    /// as `v_ref`.
    pub fn averaged_error(&self, v: f64, online: &[bool]) -> f64 {
        let mut sum = 0.0;
        let mut n = 0usize;
        for nb in &self.neighbors {
            let vj = match *nb {
                Neighbor::Dg(j) if online[j] => self.received[j],
                Neighbor::Dg(_) => None,
                Neighbor::Leader => Some(self.v_ref),
            };
            if let Some(vj) = vj {
                sum += vj - v;
                n += 1;
            }
        }
        if n == 0 {
            0.0
        } else {
            sum / n as f64
        }
    }

    /// One update over `dt` returning the new `V_n`.
    pub fn step(&mut self, v: f64, online: &[bool], dt: f64) -> f64 {
        pi_baseline_step(self.averaged_error(v, online), &mut self.integral, &self.gains, self.v_ref, dt)
    }
}

/// `V_n = v_ref + k_p e + I`, with `I' = k_i e` and both `I` and the output
/// deviation clamped to `clamp * v_ref`.
pub fn pi_baseline_step(e: f64, integral: &mut f64, g: &PiGains, v_ref: f64, dt: f64) -> f64 {
    let lim = g.clamp * v_ref;
    *integral = (*integral + g.ki * e * dt).clamp(-lim, lim);
    v_ref + (g.kp * e + *integral).clamp(-lim, lim)
}
