//! Run summaries: trigger reductions, tracking error, band excursions,
//! settling times and solver statistics.

use serde::{Deserialize, Serialize};

use crate::trigger::{reduction_metrics, Reductions};

use super::run::RunOutput;

/// Longest allowed stay outside the voltage band (s).
pub const EXCURSION_LIMIT: f64 = 0.166;
/// Samples this long after an event are excluded from steady-state figures.
pub const SETTLE_GUARD: f64 = 0.5;
/// Width of the settling band relative to `v_ref`.
pub const SETTLING_BAND: f64 = 0.02;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventSettling {
    pub t: f64,
    pub label: String,
    /// Time after the event until every online DG stays inside the band
    /// up to the next event; `None` if it never does.
    pub settling_time: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct QpSummary {
    pub solves: usize,
    pub max_kkt_residual: f64,
    pub fallbacks: usize,
    pub max_iterations: usize,
    pub slack_used: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ObserverSummary {
    pub windows: usize,
    pub flagged: usize,
    pub max_condition: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub scenario: String,
    pub mode: String,
    pub reductions: Reductions,
    /// RMS of `v_od - v_ref` per DG after secondary activation, excluding
    /// the guard interval after each event (V).
    pub rms_error: Vec<f64>,
    /// Per DG, the mean relative error over the run's last 0.2 s.
    pub steady_state_error: Vec<f64>,
    pub max_steady_state_error: f64,
    /// Per DG, the worst relative error over the last 0.05 s before each
    /// event after activation and before the end of the run.
    pub pre_event_error: Vec<f64>,
    pub max_pre_event_error: f64,
    /// Largest `|v_od - v_ref|` after secondary activation (V).
    pub peak_error: f64,
    /// Longest contiguous stay outside the band per DG (s).
    pub excursion: Vec<f64>,
    pub longest_excursion: f64,
    pub excursion_within_limit: bool,
    pub settling: Vec<EventSettling>,
    pub qp: QpSummary,
    pub observer: ObserverSummary,
    pub divergence: Option<String>,
}

/// Event times after secondary activation that bound steady intervals.
fn boundaries(out: &RunOutput) -> Vec<(f64, String)> {
    let Some(on) = out.secondary_on else { return Vec::new() };
    let mut b = vec![(on, "secondary_on".to_string())];
    for e in &out.events {
        if e.t > on + 1e-12 {
            b.push((e.t, e.label.clone()));
        }
    }
    b
}

/// Samples `(t, v_od)` of DG `dg` while online.
fn trace(out: &RunOutput, dg: usize) -> Vec<(f64, f64)> {
    out.timeseries.iter().filter(|r| r.dg == dg && r.online).map(|r| (r.t, r.v_od)).collect()
}

/// Longest contiguous stay of `trace` outside `[lo, hi]` from `t0` on,
/// measured from the first sample outside to the first sample back inside.
pub fn longest_excursion(trace: &[(f64, f64)], lo: f64, hi: f64, t0: f64) -> f64 {
    let mut longest = 0.0f64;
    let mut start: Option<f64> = None;
    let mut last_t = t0;
    for &(t, v) in trace.iter().filter(|(t, _)| *t >= t0) {
        let outside = v < lo || v > hi;
        match (outside, start) {
            (true, None) => start = Some(t),
            (false, Some(s)) => {
                longest = longest.max(t - s);
                start = None;
            }
            _ => {}
        }
        last_t = t;
    }
    if let Some(s) = start {
        longest = longest.max(last_t - s);
    }
    longest
}

/// Earliest time after `t_event` from which every sample up to `t_end`
/// lies within `band * v_ref` of `v_ref`, relative to `t_event`.
pub fn settling_time(trace: &[(f64, f64)], v_ref: f64, band: f64, t_event: f64, t_end: f64) -> Option<f64> {
    let window: Vec<&(f64, f64)> = trace.iter().filter(|(t, _)| *t >= t_event && *t < t_end).collect();
    if window.is_empty() {
        return None;
    }
    let lim = band * v_ref;
    match window.iter().rposition(|(_, v)| (v - v_ref).abs() > lim) {
        None => Some(0.0),
        Some(p) if p + 1 < window.len() => Some(window[p + 1].0 - t_event),
        Some(_) => None,
    }
}

/// Largest `|v - v_ref|` over `[t0, t1)`.
pub fn peak_error(trace: &[(f64, f64)], v_ref: f64, t0: f64, t1: f64) -> f64 {
    trace.iter().filter(|(t, _)| *t >= t0 && *t < t1).fold(0.0f64, |m, (_, v)| m.max((v - v_ref).abs()))
}

pub fn metrics(out: &RunOutput) -> Metrics {
    let n = out.n_dg();
    let v_ref = out.v_ref;
    let bounds = boundaries(out);
    let end = out.duration;
    let traces: Vec<Vec<(f64, f64)>> = (0..n).map(|k| trace(out, k)).collect();
    let t_on = out.secondary_on.unwrap_or(f64::INFINITY);

    let guarded = |t: f64| bounds.iter().any(|(b, _)| t >= *b && t < b + SETTLE_GUARD);
    let rms_error: Vec<f64> = traces
        .iter()
        .map(|tr| {
            let e: Vec<f64> = tr.iter().filter(|(t, _)| *t >= t_on && !guarded(*t)).map(|(_, v)| v - v_ref).collect();
            if e.is_empty() {
                0.0
            } else {
                (e.iter().map(|x| x * x).sum::<f64>() / e.len() as f64).sqrt()
            }
        })
        .collect();

    let steady_state_error: Vec<f64> = traces
        .iter()
        .map(|tr| {
            let e: Vec<f64> =
                tr.iter().filter(|(t, _)| *t >= end - 0.2 && *t >= t_on).map(|(_, v)| (v - v_ref).abs()).collect();
            if e.is_empty() {
                0.0
            } else {
                e.iter().sum::<f64>() / e.len() as f64 / v_ref
            }
        })
        .collect();

    let pre_event_error: Vec<f64> = traces
        .iter()
        .map(|tr| {
            let mut worst = 0.0f64;
            for (k, (a, _)) in bounds.iter().enumerate() {
                let b = bounds.get(k + 1).map_or(end, |x| x.0);
                let from = (b - 0.05).max(*a);
                worst = worst.max(peak_error(tr, v_ref, from, b) / v_ref);
            }
            worst
        })
        .collect();

    let lo = v_ref * (1.0 - out.band);
    let hi = v_ref * (1.0 + out.band);
    let excursion: Vec<f64> = traces.iter().map(|tr| longest_excursion(tr, lo, hi, t_on)).collect();
    let longest = excursion.iter().copied().fold(0.0, f64::max);

    let settling = bounds
        .iter()
        .enumerate()
        .map(|(k, (a, label))| {
            let b = bounds.get(k + 1).map_or(end, |x| x.0);
            let worst = traces.iter().try_fold(0.0f64, |m, tr| {
                let has = tr.iter().any(|(t, _)| *t >= *a && *t < b);
                if !has {
                    return Some(m);
                }
                settling_time(tr, v_ref, SETTLING_BAND, *a, b).map(|s| m.max(s))
            });
            EventSettling { t: *a, label: label.clone(), settling_time: worst }
        })
        .collect();

    let qp = QpSummary {
        solves: out.qp.len(),
        max_kkt_residual: out.qp.iter().map(|q| q.stats.kkt_residual).fold(0.0, f64::max),
        fallbacks: out.qp.iter().filter(|q| q.stats.fallback).count(),
        max_iterations: out.qp.iter().map(|q| q.stats.iterations).max().unwrap_or(0),
        slack_used: out.qp.iter().filter(|q| q.stats.slack > 0.0).count(),
    };
    let observer = ObserverSummary {
        windows: out.observer.len(),
        flagged: out.observer.iter().filter(|o| o.flagged).count(),
        max_condition: out.observer.iter().map(|o| o.cond_gamma).filter(|c| c.is_finite()).fold(0.0, f64::max),
    };

    Metrics {
        scenario: out.scenario.clone(),
        mode: out.mode.as_str().to_string(),
        reductions: reduction_metrics(&out.triggers, n),
        max_steady_state_error: steady_state_error.iter().copied().fold(0.0, f64::max),
        steady_state_error,
        max_pre_event_error: pre_event_error.iter().copied().fold(0.0, f64::max),
        pre_event_error,
        rms_error,
        peak_error: traces.iter().map(|tr| peak_error(tr, v_ref, t_on, f64::INFINITY)).fold(0.0, f64::max),
        excursion,
        longest_excursion: longest,
        excursion_within_limit: longest < EXCURSION_LIMIT,
        settling,
        qp,
        observer,
        divergence: out.divergence.clone(),
    }
}

/// Peak tracking errors of two runs over the same interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub peak_a: f64,
    pub peak_b: f64,
    /// `peak_b > peak_a`.
    pub a_better: bool,
}

pub fn compare_runs(a: &RunOutput, b: &RunOutput, t0: f64, t1: f64) -> Comparison {
    let peak = |o: &RunOutput| {
        (0..o.n_dg()).map(|k| peak_error(&trace(o, k), o.v_ref, t0, t1)).fold(0.0f64, f64::max)
    };
    let (pa, pb) = (peak(a), peak(b));
    Comparison { peak_a: pa, peak_b: pb, a_better: pb > pa }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_trace_has_no_excursion() {
        let tr: Vec<(f64, f64)> = (0..100).map(|k| (k as f64 * 0.01, 311.0)).collect();
        assert_eq!(longest_excursion(&tr, 301.67, 320.33, 0.0), 0.0);
        assert_eq!(settling_time(&tr, 311.0, 0.02, 0.0, 1.0), Some(0.0));
    }

    #[test]
    fn excursion_and_settling() {
        let tr: Vec<(f64, f64)> =
            (0..100).map(|k| (k as f64 * 0.01, if (10..25).contains(&k) { 290.0 } else { 311.0 })).collect();
        assert!((longest_excursion(&tr, 301.67, 320.33, 0.0) - 0.15).abs() < 1e-9);
        assert!((settling_time(&tr, 311.0, 0.02, 0.05, 1.0).unwrap() - 0.2).abs() < 1e-9);
        assert!((peak_error(&tr, 311.0, 0.0, 1.0) - 21.0).abs() < 1e-12);
        let tail: Vec<(f64, f64)> = (0..10).map(|k| (k as f64, 250.0)).collect();
        assert_eq!(settling_time(&tail, 311.0, 0.02, 0.0, 10.0), None);
    }
}
