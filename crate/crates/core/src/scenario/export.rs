//! CSV and JSON export with fixed nine-significant-digit numbers.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::Error;

use super::metrics::Metrics;
use super::run::RunOutput;

/// Formats with nine significant digits, switching to exponent notation
/// outside `[1e-5, 1e9)`.
pub fn fmt_num(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    if !v.is_finite() {
        return if v.is_nan() { "nan".into() } else if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let exp = v.abs().log10().floor() as i32;
    if (-5..9).contains(&exp) {
        let decimals = (8 - exp).max(0) as usize;
        let s = format!("{v:.decimals$}");
        // Rounding can carry into a new digit, e.g. 9.999999999 -> 10.00000000.
        let s = if s.contains('.') { s.trim_end_matches('0').trim_end_matches('.').to_string() } else { s };
        if s == "-0" {
            "0".into()
        } else {
            s
        }
    } else {
        let s = format!("{v:.8e}");
        let (m, e) = s.split_once('e').expect("exponent form");
        let m = if m.contains('.') { m.trim_end_matches('0').trim_end_matches('.') } else { m };
        format!("{m}e{e}")
    }
}

fn write(path: &Path, text: &str) -> Result<(), Error> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn timeseries_csv(out: &RunOutput) -> String {
    let mut s = String::from("t,dg,v_od,v_oq,P,Q,omega,V_n,xi,f_hat,z0_hat,z1_hat\n");
    for r in &out.timeseries {
        let nums = [r.v_od, r.v_oq, r.p, r.q, r.omega, r.v_n, r.xi, r.f_hat, r.z0_hat, r.z1_hat];
        let _ = write!(s, "{},{}", fmt_num(r.t), r.dg + 1);
        for v in nums {
            let _ = write!(s, ",{}", fmt_num(v));
        }
        s.push('\n');
    }
    s
}

pub fn triggers_csv(out: &RunOutput) -> String {
    let mut s = String::from("step,dg,opt_fired,com_fired,reason\n");
    for r in &out.triggers.rows {
        let _ = writeln!(s, "{},{},{},{},{}", r.step, r.dg + 1, r.opt_fired as u8, r.com_fired as u8, r.reason.as_str());
    }
    s
}

pub fn delivery_csv(out: &RunOutput) -> String {
    let mut s = String::from("step,edge,delivered\n");
    for r in &out.deliveries {
        let _ = writeln!(s, "{},{}->{},{}", r.step, out.dg_names[r.from], out.dg_names[r.to], r.delivered as u8);
    }
    s
}

pub fn observer_csv(out: &RunOutput) -> String {
    let mut s = String::from("t,dg,f_hat,z0_hat,z1_hat,cond_gamma,flagged\n");
    for r in &out.observer {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{}",
            fmt_num(r.t),
            r.dg + 1,
            fmt_num(r.f_hat),
            fmt_num(r.z0_hat),
            fmt_num(r.z1_hat),
            fmt_num(r.cond_gamma),
            r.flagged as u8
        );
    }
    s
}

/// Rounds every float in a JSON tree to nine significant digits.
fn round_json(v: &mut serde_json::Value) {
    match v {
        serde_json::Value::Number(n) if n.is_f64() => {
            let x: f64 = fmt_num(n.as_f64().unwrap()).parse().unwrap_or(f64::NAN);
            *v = serde_json::Number::from_f64(x).map_or(serde_json::Value::Null, serde_json::Value::Number);
        }
        serde_json::Value::Array(a) => a.iter_mut().for_each(round_json),
        serde_json::Value::Object(o) => o.values_mut().for_each(round_json),
        _ => {}
    }
}

pub fn metrics_json(m: &Metrics) -> String {
    let mut v = serde_json::to_value(m).expect("metrics serialize");
    round_json(&mut v);
    serde_json::to_string_pretty(&v).expect("json") + "\n"
}

/// Writes `timeseries.csv`, `triggers.csv`, `delivery.csv`, `observer.csv`
/// and `metrics.json` into `dir`, creating it if needed.
pub fn export_csv(out: &RunOutput, m: &Metrics, dir: &Path) -> Result<(), Error> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write(&dir.join("timeseries.csv"), &timeseries_csv(out))?;
    write(&dir.join("triggers.csv"), &triggers_csv(out))?;
    write(&dir.join("delivery.csv"), &delivery_csv(out))?;
    write(&dir.join("observer.csv"), &observer_csv(out))?;
    write(&dir.join("metrics.json"), &metrics_json(m))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nine_significant_digits() {
        assert_eq!(fmt_num(311.0), "311");
        assert_eq!(fmt_num(310.123456789), "310.123457");
        assert_eq!(fmt_num(-0.000123456789123), "-0.000123456789");
        assert_eq!(fmt_num(7.35e9), "7.35e9");
        assert_eq!(fmt_num(1.0 / 3.0), "0.333333333");
        assert_eq!(fmt_num(0.0), "0");
        assert_eq!(fmt_num(1e-7), "1e-7");
        assert_eq!(fmt_num(f64::NAN), "nan");
    }

    #[test]
    fn round_trip_precision() {
        for v in [311.0123456789, -2.5e-3, 1234567.891, 6.02214076e23] {
            let back: f64 = fmt_num(v).parse().unwrap();
            assert!(((back - v) / v).abs() < 1e-8, "{v}");
        }
    }
}
