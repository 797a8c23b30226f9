//! Parameter sweeps over one scenario key, tabulating per-DG reductions.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ConfigError, Error};

use super::export::fmt_num;
use super::metrics::{metrics, Metrics};
use super::run::run;
use super::schema::Scenario;

/// Keys a sweep may vary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepKey {
    EOpt,
    ECom,
    Horizon,
    /// Varies the controller period with `ts` fixed, i.e. the ratio `r`.
    TsMpc,
}

impl SweepKey {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "e_opt" => Some(SweepKey::EOpt),
            "e_com" => Some(SweepKey::ECom),
            "horizon" => Some(SweepKey::Horizon),
            "ts_mpc" => Some(SweepKey::TsMpc),
            _ => None,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            SweepKey::EOpt => "e_opt",
            SweepKey::ECom => "e_com",
            SweepKey::Horizon => "horizon",
            SweepKey::TsMpc => "ts_mpc",
        }
    }

    pub fn apply(&self, s: &mut Scenario, v: f64) -> Result<(), ConfigError> {
        match self {
            SweepKey::EOpt => s.thresholds.e_opt = v,
            SweepKey::ECom => s.thresholds.e_com = v,
            SweepKey::Horizon => {
                if v < 1.0 || v.fract() != 0.0 {
                    return Err(ConfigError::Scenario { key: "horizon".into(), reason: "must be a positive integer".into() });
                }
                s.control.horizon = v as usize;
            }
            SweepKey::TsMpc => {
                s.control.ts_mpc = v;
                // Keep the observer window inside the shorter periods.
                let w = &mut s.control.window;
                if w.length() > v {
                    w.t_eps = 0.4 * v;
                    w.dt_active = 0.4 * v;
                }
            }
        }
        Ok(())
    }
}

/// Parses `key=v1,v2,...`.
pub fn parse_grid(spec: &str) -> Result<(SweepKey, Vec<f64>), ConfigError> {
    let err = |r: &str| ConfigError::Scenario { key: "grid".into(), reason: r.into() };
    let (k, vals) = spec.split_once('=').ok_or_else(|| err("expected key=v1,v2,..."))?;
    let key = SweepKey::parse(k.trim()).ok_or_else(|| err("key must be e_opt, e_com, horizon or ts_mpc"))?;
    let vals: Result<Vec<f64>, _> = vals.split(',').map(|v| v.trim().parse::<f64>()).collect();
    let vals = vals.map_err(|_| err("values must be numbers"))?;
    if vals.is_empty() {
        return Err(err("no values"));
    }
    Ok((key, vals))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub value: f64,
    pub metrics: Metrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub key: SweepKey,
    pub dg_names: Vec<String>,
    pub points: Vec<SweepPoint>,
}

/// Runs every grid point, in parallel. Results are in grid order.
pub fn sweep(base: &Scenario, key: SweepKey, values: &[f64]) -> Result<SweepResult, Error> {
    let mut scenarios = Vec::with_capacity(values.len());
    for &v in values {
        let mut s = base.clone();
        key.apply(&mut s, v)?;
        s.compile()?;
        scenarios.push(s);
    }
    let outs: Result<Vec<_>, Error> = scenarios.par_iter().map(run).collect();
    let outs = outs?;
    let dg_names = outs.first().map(|o| o.dg_names.clone()).unwrap_or_default();
    let points = values.iter().zip(&outs).map(|(&value, o)| SweepPoint { value, metrics: metrics(o) }).collect();
    Ok(SweepResult { key, dg_names, points })
}

/// One row per grid value: per-DG and average computation and
/// communication reductions in percent.
pub fn sweep_csv(r: &SweepResult) -> String {
    let mut s = String::from(r.key.as_str());
    for kind in ["computation", "communication"] {
        for d in &r.dg_names {
            let _ = write!(s, ",{kind}_{d}");
        }
        let _ = write!(s, ",{kind}_avg");
    }
    s.push_str(",max_steady_state_error,longest_excursion\n");
    for p in &r.points {
        let red = &p.metrics.reductions;
        let _ = write!(s, "{}", fmt_num(p.value));
        for (v, avg) in [(&red.computation, red.avg_computation), (&red.communication, red.avg_communication)] {
            for x in v {
                let _ = write!(s, ",{}", fmt_num(*x));
            }
            let _ = write!(s, ",{}", fmt_num(avg));
        }
        let _ = writeln!(
            s,
            ",{},{}",
            fmt_num(p.metrics.max_steady_state_error),
            fmt_num(p.metrics.longest_excursion)
        );
    }
    s
}
