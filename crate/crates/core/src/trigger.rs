//! Optimization and communication trigger rules, holdover of stale
//! predictions and trigger accounting.

use serde::{Deserialize, Serialize};

use crate::dmpc::OutputPrediction;
use crate::error::ConfigError;

/// Thresholds in volts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TriggerThresholds {
    pub e_opt: f64,
    pub e_com: f64,
}

impl Default for TriggerThresholds {
    fn default() -> Self {
        Self { e_opt: 0.1, e_com: 0.1 }
    }
}

impl TriggerThresholds {
    /// Zero thresholds are accepted: every step then fires both events.
    pub fn validate(&self) -> Result<(), ConfigError> {
        for (key, v) in [("e_opt", self.e_opt), ("e_com", self.e_com)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(ConfigError::Scenario { key: key.into(), reason: "must be finite and >= 0".into() });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TriggerReason {
    Forced,
    Horizon,
    Error,
    /// The neighbor-average target drifted from the one last optimized
    /// against.
    Neighbor,
    None,
}

impl TriggerReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            TriggerReason::Forced => "forced",
            TriggerReason::Horizon => "horizon",
            TriggerReason::Error => "error",
            TriggerReason::Neighbor => "neighbor",
            TriggerReason::None => "none",
        }
    }
}

/// One row per DG per active controller step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TriggerRecord {
    pub step: u64,
    pub dg: usize,
    pub opt_fired: bool,
    pub com_fired: bool,
    pub reason: TriggerReason,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TriggerLog {
    pub rows: Vec<TriggerRecord>,
}

pub fn opt_trigger(y_meas: f64, y_pred: f64, k: u64, k_m: u64, horizon: usize, e_opt: f64) -> bool {
    opt_trigger_reason(y_meas, y_pred, k, k_m, horizon, e_opt) != TriggerReason::None
}

/// Which clause of the optimization rule fires, if any.
pub fn opt_trigger_reason(y_meas: f64, y_pred: f64, k: u64, k_m: u64, horizon: usize, e_opt: f64) -> TriggerReason {
    if (y_meas - y_pred).abs() >= e_opt {
        TriggerReason::Error
    } else if k >= k_m + horizon as u64 {
        TriggerReason::Horizon
    } else {
        TriggerReason::None
    }
}

pub fn comm_trigger(y_now: &[f64], y_holdover: &[f64], e_com: f64) -> bool {
    let gap = y_now.iter().zip(y_holdover).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    gap >= e_com
}

/// Shifts a stale prediction forward, repeating its terminal value.
pub fn holdover_prediction(last: &OutputPrediction, elapsed: u64) -> OutputPrediction {
    let h = last.y.len();
    let tail = *last.y.last().expect("prediction must be nonempty");
    let y = (0..h)
        .map(|j| {
            let src = j as u64 + elapsed;
            if src < h as u64 {
                last.y[src as usize]
            } else {
                tail
            }
        })
        .collect();
    OutputPrediction { y, issued_at: last.issued_at + elapsed }
}

/// Reductions in percent relative to firing at every step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reductions {
    pub computation: Vec<f64>,
    pub communication: Vec<f64>,
    pub avg_computation: f64,
    pub avg_communication: f64,
    pub steps: Vec<u64>,
    pub optimizations: Vec<u64>,
    pub transmissions: Vec<u64>,
}

pub fn reduction_percent(fires: u64, n_steps: u64) -> f64 {
    assert!(n_steps > 0, "reduction needs at least one step");
    100.0 * (1.0 - fires as f64 / n_steps as f64)
}

/// Per-DG and average reductions. A DG's step count is the number of log
/// rows it has, so unplugged intervals do not count.
pub fn reduction_metrics(log: &TriggerLog, n_dgs: usize) -> Reductions {
    let mut steps = vec![0u64; n_dgs];
    let mut opt = vec![0u64; n_dgs];
    let mut com = vec![0u64; n_dgs];
    for r in &log.rows {
        steps[r.dg] += 1;
        opt[r.dg] += r.opt_fired as u64;
        com[r.dg] += r.com_fired as u64;
    }
    let pct = |f: &[u64]| -> Vec<f64> {
        f.iter().zip(&steps).map(|(&f, &s)| if s == 0 { 0.0 } else { reduction_percent(f, s) }).collect()
    };
    let computation = pct(&opt);
    let communication = pct(&com);
    let mean = |v: &[f64]| if v.is_empty() { 0.0 } else { v.iter().sum::<f64>() / v.len() as f64 };
    Reductions {
        avg_computation: mean(&computation),
        avg_communication: mean(&communication),
        computation,
        communication,
        steps,
        optimizations: opt,
        transmissions: com,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pred(y: &[f64]) -> OutputPrediction {
        OutputPrediction { y: y.to_vec(), issued_at: 0 }
    }

    #[test]
    fn opt_trigger_examples() {
        assert!(!opt_trigger(311.05, 311.0, 3, 0, 10, 0.1));
        assert!(opt_trigger(311.05, 311.0, 10, 0, 10, 0.1));
        assert!(opt_trigger(0.1, 0.0, 3, 0, 10, 0.1));
        assert_eq!(opt_trigger_reason(0.1, 0.0, 3, 0, 10, 0.1), TriggerReason::Error);
        assert_eq!(opt_trigger_reason(0.0, 0.0, 12, 2, 10, 0.1), TriggerReason::Horizon);
    }

    #[test]
    fn comm_trigger_examples() {
        let a = [1.0, 2.0, 3.0];
        assert!(!comm_trigger(&a, &a, 0.1));
        assert!(comm_trigger(&[1.0, 2.2, 3.0], &a, 0.1));
        assert!(!comm_trigger(&[1.099, 2.099, 3.099], &a, 0.1));
    }

    #[test]
    fn holdover_examples() {
        let y = pred(&[1.0, 2.0, 3.0]);
        assert_eq!(holdover_prediction(&y, 1).y, vec![2.0, 3.0, 3.0]);
        assert_eq!(holdover_prediction(&y, 0).y, y.y);
        assert_eq!(holdover_prediction(&y, 3).y, vec![3.0; 3]);
        assert_eq!(holdover_prediction(&y, 50).y, vec![3.0; 3]);
    }

    #[test]
    fn reduction_examples() {
        assert_eq!(reduction_percent(100, 100), 0.0);
        assert_eq!(reduction_percent(0, 100), 100.0);
        assert!((reduction_percent(23, 100) - 77.0).abs() < 1e-12);
        let mut log = TriggerLog::default();
        for (dg, fires) in [(0, 23), (1, 20), (2, 32), (3, 34)] {
            for step in 0..100 {
                log.rows.push(TriggerRecord {
                    step,
                    dg,
                    opt_fired: step < fires,
                    com_fired: true,
                    reason: TriggerReason::None,
                });
            }
        }
        let r = reduction_metrics(&log, 4);
        assert!((r.avg_computation - 72.75).abs() < 1e-9);
        assert_eq!(r.avg_communication, 0.0);
    }

    #[test]
    fn zero_thresholds_always_fire() {
        assert!(opt_trigger(311.0, 311.0, 1, 0, 10, 0.0));
        assert!(comm_trigger(&[311.0], &[311.0], 0.0));
    }

    proptest! {
        #[test]
        fn holdover_composes(y in proptest::collection::vec(-1e3f64..1e3, 1..12), a in 0u64..15, b in 0u64..15) {
            let p = pred(&y);
            prop_assert_eq!(holdover_prediction(&holdover_prediction(&p, a), b).y, holdover_prediction(&p, a + b).y);
        }
    }
}
