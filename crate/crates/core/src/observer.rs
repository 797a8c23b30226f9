//! Intermittent non-asymptotic observer for the double-integrator channel
//! `y'' = f + u`.
//!
//! Three exponential kernels `K_h(t, tau) = exp(-w_h (t - tau)) rho(tau)`
//! with `rho(tau) = (1 - exp(-varpi tau))^2` vanish at `tau = 0` together
//! with their first derivative, so the Volterra integrals below carry no
//! information about the initial state. Integrating `K_h y''` by parts gives
//! one linear equation per kernel in `(f, y(t), y'(t))`.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::ConfigError;

pub const CONDITION_CAP: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelParams {
    pub omega: [f64; 3],
    pub varpi: f64,
}

impl Default for KernelParams {
    fn default() -> Self {
        Self { omega: [1.0, 2.0, 3.0], varpi: 2.5 }
    }
}

impl KernelParams {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |r: &str| Err(ConfigError::Kernel(r.into()));
        if !(self.varpi > 0.0 && self.varpi.is_finite()) {
            return bad("varpi must be positive");
        }
        if self.omega.iter().any(|w| !(*w > 0.0 && w.is_finite())) {
            return bad("decay rates must be positive");
        }
        let w = self.omega;
        if w[0] == w[1] || w[0] == w[2] || w[1] == w[2] {
            return bad("decay rates must be pairwise distinct");
        }
        Ok(())
    }

    /// `(rho, rho', rho'')` at `t`.
    pub fn rise(&self, t: f64) -> (f64, f64, f64) {
        let e = (-self.varpi * t).exp();
        let v = self.varpi;
        ((1.0 - e).powi(2), 2.0 * (1.0 - e) * v * e, 2.0 * v * v * e * (2.0 * e - 1.0))
    }
}

/// `(K(t,t), K^1(t,t))` where `K^1` is the derivative in the integration
/// variable, `d/dtau K(t, tau)` at `tau = t`.
pub fn kernel_trace(kp: &KernelParams, h: usize, t_loc: f64) -> (f64, f64) {
    let w = kp.omega[h];
    let (r, r1, _) = kp.rise(t_loc);
    (r, w * r + r1)
}

/// Second `tau`-derivative of the kernel on the diagonal.
pub fn kernel_second(kp: &KernelParams, h: usize, t_loc: f64) -> f64 {
    let w = kp.omega[h];
    let (r, r1, r2) = kp.rise(t_loc);
    w * w * r + 2.0 * w * r1 + r2
}

/// Running Volterra integrals for the three kernels.
#[derive(Debug, Clone, PartialEq)]
pub struct VolterraBank {
    pub kp: KernelParams,
    /// `[V_K y]`
    pub v_y: [f64; 3],
    /// `[V_{K''} y]`
    pub v_y2: [f64; 3],
    pub v_u: [f64; 3],
    pub v_w: [f64; 3],
    pub t_loc: f64,
    /// Subtracted from every `y` sample when the bank is centered.
    pub y_offset: f64,
    centered: bool,
    last: Option<(f64, f64)>,
}

impl VolterraBank {
    pub fn new(kp: KernelParams) -> Self {
        Self {
            kp,
            v_y: [0.0; 3],
            v_y2: [0.0; 3],
            v_u: [0.0; 3],
            v_w: [0.0; 3],
            t_loc: 0.0,
            y_offset: 0.0,
            centered: false,
            last: None,
        }
    }

    /// Integrates `y - y(0)` instead of `y`. A constant offset leaves
    /// `y''` unchanged, so only `z0` needs the offset added back, and the
    /// integrals no longer carry the signal's absolute level.
    pub fn centered(kp: KernelParams) -> Self {
        Self { centered: true, ..Self::new(kp) }
    }

    /// Feeds the next sample. The first sample fixes the window start;
    /// later ones advance every integral by one RK4 step over `dt`, with the
    /// signals interpolated linearly between samples.
    pub fn push(&mut self, y: f64, u: f64, dt: f64) {
        if self.centered && self.last.is_none() {
            self.y_offset = y;
        }
        let y = y - self.y_offset;
        let Some((y0, u0)) = self.last.replace((y, u)) else {
            return;
        };
        let kp = self.kp;
        let t0 = self.t_loc;
        let rhs = |s: f64, v: &[[f64; 4]; 3]| -> [[f64; 4]; 3] {
            let a = (s - t0) / dt;
            let ys = y0 + (y - y0) * a;
            let us = u0 + (u - u0) * a;
            let (r, _, _) = kp.rise(s);
            let mut d = [[0.0; 4]; 3];
            for h in 0..3 {
                let w = kp.omega[h];
                let q = kernel_second(&kp, h, s);
                d[h] = [r * ys - w * v[h][0], q * ys - w * v[h][1], r * us - w * v[h][2], r - w * v[h][3]];
            }
            d
        };
        let mut v = [[0.0; 4]; 3];
        for h in 0..3 {
            v[h] = [self.v_y[h], self.v_y2[h], self.v_u[h], self.v_w[h]];
        }
        let axpy = |x: &[[f64; 4]; 3], k: &[[f64; 4]; 3], c: f64| {
            let mut o = *x;
            for h in 0..3 {
                for j in 0..4 {
                    o[h][j] += c * k[h][j];
                }
            }
            o
        };
        let k1 = rhs(t0, &v);
        let k2 = rhs(t0 + 0.5 * dt, &axpy(&v, &k1, 0.5 * dt));
        let k3 = rhs(t0 + 0.5 * dt, &axpy(&v, &k2, 0.5 * dt));
        let k4 = rhs(t0 + dt, &axpy(&v, &k3, dt));
        for h in 0..3 {
            for j in 0..4 {
                v[h][j] += dt / 6.0 * (k1[h][j] + 2.0 * k2[h][j] + 2.0 * k3[h][j] + k4[h][j]);
            }
            self.v_y[h] = v[h][0];
            self.v_y2[h] = v[h][1];
            self.v_u[h] = v[h][2];
            self.v_w[h] = v[h][3];
        }
        self.t_loc = t0 + dt;
    }

    pub fn samples_seen(&self) -> bool {
        self.last.is_some()
    }

    /// Assembles and solves at the current sample.
    pub fn solve(&self) -> Result<Estimate, f64> {
        let (lam, gam) = assemble_system(self);
        let mut e = estimate(&lam, &gam)?;
        e.z0_hat += self.y_offset;
        Ok(e)
    }
}

/// `Lambda_h = -[V_{K''} y] + [V_K u]` and
/// `Gamma_h = [-[V_K 1], -K^1(t,t), K(t,t)]`, so that
/// `Gamma [f, y(t), y'(t)]^T = Lambda`.
pub fn assemble_system(bank: &VolterraBank) -> (Vector3<f64>, Matrix3<f64>) {
    let t = bank.t_loc;
    let mut lam = Vector3::zeros();
    let mut gam = Matrix3::zeros();
    for h in 0..3 {
        let (k, k1) = kernel_trace(&bank.kp, h, t);
        lam[h] = -bank.v_y2[h] + bank.v_u[h];
        gam[(h, 0)] = -bank.v_w[h];
        gam[(h, 1)] = -k1;
        gam[(h, 2)] = k;
    }
    (lam, gam)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub f_hat: f64,
    pub z0_hat: f64,
    pub z1_hat: f64,
    pub cond_gamma: f64,
}

pub fn condition_number(gam: &Matrix3<f64>) -> f64 {
    let sv = gam.singular_values();
    let (hi, lo) = (sv.max(), sv.min());
    if lo > 0.0 {
        hi / lo
    } else {
        f64::INFINITY
    }
}

/// Solves `Gamma x = Lambda`. `Err` carries the condition number when the
/// system is singular, ill-conditioned or non-finite.
pub fn estimate(lam: &Vector3<f64>, gam: &Matrix3<f64>) -> Result<Estimate, f64> {
    let cond = condition_number(gam);
    if !(cond <= CONDITION_CAP) {
        return Err(cond);
    }
    let x = gam.lu().solve(lam).ok_or(cond)?;
    if x.iter().any(|v| !v.is_finite()) {
        return Err(cond);
    }
    Ok(Estimate { f_hat: x[0], z0_hat: x[1], z1_hat: x[2], cond_gamma: cond })
}

/// Hold time and active span of one observer window, in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObserverWindow {
    pub t_eps: f64,
    pub dt_active: f64,
}

impl Default for ObserverWindow {
    fn default() -> Self {
        Self { t_eps: 0.02, dt_active: 0.02 }
    }
}

impl ObserverWindow {
    pub fn length(&self) -> f64 {
        self.t_eps + self.dt_active
    }

    pub fn validate(&self, ts_mpc: f64) -> Result<(), ConfigError> {
        if !(self.t_eps > 0.0 && self.dt_active > 0.0) {
            return Err(ConfigError::ObserverWindow("t_eps and dt_active must be positive".into()));
        }
        if self.length() > ts_mpc + 1e-12 {
            return Err(ConfigError::ObserverWindow(format!(
                "t_eps + dt_active = {} exceeds the controller period {}",
                self.length(),
                ts_mpc
            )));
        }
        Ok(())
    }
}

/// One `[enable, disable]` interval per controller instant. `clip_from`
/// clips windows to start no earlier than the given time; clipped windows
/// are returned with `true`.
pub fn schedule_windows(
    instants: &[f64],
    w: &ObserverWindow,
    ts_mpc: f64,
    clip_from: Option<f64>,
) -> Result<Vec<(f64, f64, bool)>, ConfigError> {
    w.validate(ts_mpc)?;
    let mut out: Vec<(f64, f64, bool)> = Vec::with_capacity(instants.len());
    for &tk in instants {
        let mut start = tk - w.length();
        let mut clipped = false;
        if let Some(c) = clip_from {
            if start < c {
                start = c.min(tk);
                clipped = true;
            }
        }
        if let Some(&(_, prev_end, _)) = out.last() {
            if start < prev_end - 1e-12 {
                return Err(ConfigError::ObserverWindow(format!("window at t={tk} overlaps the previous one")));
            }
        }
        out.push((start, tk, clipped));
    }
    Ok(out)
}

/// Result of closing one window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowResult {
    pub estimate: Estimate,
    pub flagged: bool,
}

/// One DG's observer: opens a fresh bank per window and solves at its
/// final sample, falling back to the previous valid estimate on failure.
#[derive(Debug, Clone)]
pub struct IntermittentObserver {
    pub kp: KernelParams,
    pub window: ObserverWindow,
    bank: Option<VolterraBank>,
    disturbed: bool,
    last_valid: Option<Estimate>,
}

impl IntermittentObserver {
    pub fn new(kp: KernelParams, window: ObserverWindow) -> Self {
        Self { kp, window, bank: None, disturbed: false, last_valid: None }
    }

    pub fn is_open(&self) -> bool {
        self.bank.is_some()
    }

    /// Resets the bank; the given sample is the window's first.
    pub fn open(&mut self, y: f64, u: f64) {
        let mut b = VolterraBank::centered(self.kp);
        b.push(y, u, 0.0);
        self.bank = Some(b);
        self.disturbed = false;
    }

    pub fn sample(&mut self, y: f64, u: f64, dt: f64) {
        if let Some(b) = self.bank.as_mut() {
            b.push(y, u, dt);
        }
    }

    /// Marks the open window as unusable, e.g. after a structural event.
    pub fn disturb(&mut self) {
        self.disturbed = true;
    }

    /// Solves at the final sample. `fallback` is used when no earlier valid
    /// estimate exists.
    pub fn close(&mut self, fallback: Estimate) -> WindowResult {
        let bank = self.bank.take();
        let solved = match bank {
            Some(b) if b.t_loc > 0.0 && !self.disturbed => b.solve(),
            _ => Err(f64::NAN),
        };
        match solved {
            Ok(e) => {
                self.last_valid = Some(e);
                WindowResult { estimate: e, flagged: false }
            }
            Err(cond) => {
                let mut e = self.last_valid.unwrap_or(fallback);
                e.cond_gamma = cond;
                WindowResult { estimate: e, flagged: true }
            }
        }
    }

    pub fn last_valid(&self) -> Option<Estimate> {
        self.last_valid
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    const DT: f64 = 5e-5;

    fn run_bank(n: usize, y: impl Fn(f64) -> f64, u: impl Fn(f64) -> f64) -> Vec<VolterraBank> {
        run_with(VolterraBank::new(KernelParams::default()), n, y, u)
    }

    fn run_with(mut b: VolterraBank, n: usize, y: impl Fn(f64) -> f64, u: impl Fn(f64) -> f64) -> Vec<VolterraBank> {
        b.push(y(0.0), u(0.0), DT);
        let mut out = Vec::with_capacity(n);
        for i in 1..=n {
            let t = i as f64 * DT;
            b.push(y(t), u(t), DT);
            out.push(b.clone());
        }
        out
    }

    fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
        let h = (b - a) / n as f64;
        let mut s = f(a) + f(b);
        for i in 1..n {
            s += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        s * h / 3.0
    }

    #[test]
    fn kernel_trace_examples() {
        let kp = KernelParams::default();
        assert_eq!(kernel_trace(&kp, 0, 0.0), (0.0, 0.0));
        let (k, k1) = kernel_trace(&kp, 1, 1.0);
        assert_relative_eq!(k, 0.842_57, epsilon = 1e-5);
        let e = (-2.5f64).exp();
        assert_relative_eq!(k1, 2.0 * k + 2.0 * (1.0 - e) * 2.5 * e, epsilon = 1e-12);
        assert_relative_eq!(k1, 2.061_871, epsilon = 1e-6);
        let (k, k1) = kernel_trace(&kp, 2, 50.0);
        assert_relative_eq!(k, 1.0, epsilon = 1e-12);
        assert_relative_eq!(k1, 3.0, epsilon = 1e-12);
    }

    #[test]
    fn rejects_repeated_rates() {
        assert!(KernelParams { omega: [1.0, 1.0, 3.0], varpi: 2.5 }.validate().is_err());
        assert!(KernelParams { omega: [1.0, 2.0, -3.0], varpi: 2.5 }.validate().is_err());
        assert!(KernelParams::default().validate().is_ok());
    }

    #[test]
    fn zero_signals_leave_only_w() {
        let b = run_bank(200, |_| 0.0, |_| 0.0).pop().unwrap();
        assert!(b.v_y.iter().chain(&b.v_u).chain(&b.v_y2).all(|v| *v == 0.0));
        assert!(b.v_w.iter().all(|v| *v > 0.0));
        let (lam, _) = assemble_system(&b);
        assert_eq!(lam, Vector3::zeros());
    }

    #[test]
    fn constant_signal_is_scaled_w() {
        let b = run_bank(400, |_| 3.5, |_| 0.0).pop().unwrap();
        for h in 0..3 {
            assert_relative_eq!(b.v_y[h], 3.5 * b.v_w[h], max_relative = 1e-12);
        }
    }

    #[test]
    fn v_w_matches_quadrature() {
        let kp = KernelParams::default();
        let n = (1.0 / DT) as usize;
        let b = run_bank(n, |_| 0.0, |_| 0.0).pop().unwrap();
        let q = simpson(|tau| (-(1.0 - tau)).exp() * kp.rise(tau).0, 0.0, 1.0, 20_000);
        assert!((b.v_w[0] - q).abs() < 1e-8, "{} vs {}", b.v_w[0], q);
    }

    #[test]
    fn second_kernel_integral_matches_quadrature() {
        let kp = KernelParams::default();
        let y = |t: f64| 1.0 + (7.0 * t).sin() + 0.3 * t * t;
        let n = 4000;
        let b = run_bank(n, y, |_| 0.0).pop().unwrap();
        let t = n as f64 * DT;
        for h in 0..3 {
            let w = kp.omega[h];
            let q = simpson(|tau| (-w * (t - tau)).exp() * kernel_second(&kp, h, tau) * y(tau), 0.0, t, 20_000);
            assert!((b.v_y2[h] - q).abs() < 1e-8 * q.abs().max(1.0), "h={h}: {} vs {}", b.v_y2[h], q);
        }
    }

    #[test]
    fn gamma_vanishes_at_start() {
        let b = VolterraBank::new(KernelParams::default());
        let (_, gam) = assemble_system(&b);
        assert_eq!(gam, Matrix3::zeros());
        assert!(estimate(&Vector3::zeros(), &gam).is_err());
    }

    #[test]
    fn joint_scaling() {
        let y = |t: f64| 2.0 + t;
        let u = |t: f64| (3.0 * t).cos();
        let a = run_bank(600, y, u).pop().unwrap();
        let b = run_bank(600, |t| 4.0 * y(t), |t| 4.0 * u(t)).pop().unwrap();
        let (la, ga) = assemble_system(&a);
        let (lb, gb) = assemble_system(&b);
        for h in 0..3 {
            assert_relative_eq!(lb[h], 4.0 * la[h], max_relative = 1e-12);
            assert_eq!(ga[(h, 1)], gb[(h, 1)]);
            assert_eq!(ga[(h, 2)], gb[(h, 2)]);
        }
    }

    fn max_rel_error(
        bank: VolterraBank,
        f: f64,
        y: impl Fn(f64) -> f64,
        yd: impl Fn(f64) -> f64,
        u: impl Fn(f64) -> f64,
    ) -> f64 {
        let w = ObserverWindow::default();
        let banks = run_with(bank, (w.length() / DT).round() as usize, &y, u);
        let mut worst = 0.0f64;
        for b in banks.iter().filter(|b| b.t_loc > w.t_eps + 1e-12) {
            let e = b.solve().unwrap();
            let t = b.t_loc;
            for (est, tru) in [(e.f_hat, f), (e.z0_hat, y(t)), (e.z1_hat, yd(t))] {
                worst = worst.max((est - tru).abs() / tru.abs());
            }
        }
        worst
    }

    #[test]
    fn deadbeat_double_integrator() {
        let kp = KernelParams::default();
        for bank in [VolterraBank::new(kp), VolterraBank::centered(kp)] {
            let worst = max_rel_error(bank, 5.0, |t| 1.0 + 2.5 * t * t, |t| 5.0 * t, |_| 0.0);
            assert!(worst < 1e-6, "worst relative error {worst}");
        }
    }

    #[test]
    fn deadbeat_with_input() {
        let f = -7.0;
        let y = move |t: f64| 2.0 - t + f * t * t / 2.0 + 3.0 * (t / 40.0 - (40.0 * t).sin() / 1600.0);
        let yd = move |t: f64| -1.0 + f * t + 3.0 * (1.0 / 40.0 - (40.0 * t).cos() / 40.0);
        let kp = KernelParams::default();
        for bank in [VolterraBank::new(kp), VolterraBank::centered(kp)] {
            let worst = max_rel_error(bank, f, y, yd, |t| 3.0 * (40.0 * t).sin());
            assert!(worst < 1e-6, "worst relative error {worst}");
        }
    }

    #[test]
    fn zero_problem_estimates_zero() {
        let b = run_bank(800, |_| 0.0, |_| 0.0).pop().unwrap();
        let (lam, gam) = assemble_system(&b);
        let e = estimate(&lam, &gam).unwrap();
        assert_eq!((e.f_hat, e.z0_hat, e.z1_hat), (0.0, 0.0, 0.0));
        assert!(e.cond_gamma.is_finite());
    }

    #[test]
    fn restart_independence() {
        let f = 5.0;
        let y = |t: f64| 1.0 + 0.5 * t + 0.5 * f * t * t;
        let at_end = |t0: f64| {
            let bank = run_with(VolterraBank::centered(KernelParams::default()), 800, |s| y(t0 + s), |_| 0.0);
            let e = bank.last().unwrap().solve().unwrap();
            (e.f_hat, e.z0_hat - y(t0 + 0.04))
        };
        let (f0, r0) = at_end(0.0);
        let (f1, r1) = at_end(0.37);
        assert!((f0 - f1).abs() < 1e-8 * f.abs(), "{f0} vs {f1}");
        assert!((r0 - r1).abs() < 1e-8);
    }

    #[test]
    fn schedule_examples() {
        let w = ObserverWindow::default();
        let s = schedule_windows(&[1.0, 1.05], &w, 0.05, None).unwrap();
        assert_relative_eq!(s[0].0, 0.96, epsilon = 1e-12);
        assert_eq!(s[0].1, 1.0);
        let s = schedule_windows(&[1.0], &w, 0.05, Some(0.99)).unwrap();
        assert_eq!(s[0], (0.99, 1.0, true));
        let long = ObserverWindow { t_eps: 0.04, dt_active: 0.02 };
        assert!(schedule_windows(&[1.0, 1.05], &long, 0.05, None).is_err());
    }

    #[test]
    fn disturbed_window_falls_back() {
        let mut obs = IntermittentObserver::new(KernelParams::default(), ObserverWindow::default());
        let fb = Estimate { f_hat: 0.0, z0_hat: 311.0, z1_hat: 0.0, cond_gamma: f64::NAN };
        obs.open(1.0, 0.0);
        for i in 1..=800 {
            let t = i as f64 * DT;
            obs.sample(1.0 + 2.5 * t * t, 0.0, DT);
        }
        let good = obs.close(fb);
        assert!(!good.flagged);
        obs.open(0.0, 0.0);
        obs.sample(1.0, 0.0, DT);
        obs.disturb();
        let r = obs.close(fb);
        assert!(r.flagged);
        assert_eq!(r.estimate.f_hat, good.estimate.f_hat);
    }

    #[test]
    fn noise_monte_carlo_beats_differencing() {
        use rand::SeedableRng;
        use rand_distr::{Distribution, Normal};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let noise = Normal::new(0.0, 0.01).unwrap();
        let n = 800;
        let (mut se_obs, mut se_fd, mut count) = (0.0, 0.0, 0usize);
        for _ in 0..100 {
            let ys: Vec<f64> =
                (0..=n).map(|i| 1.0 + 2.5 * (i as f64 * DT).powi(2) + noise.sample(&mut rng)).collect();
            let mut b = VolterraBank::centered(KernelParams::default());
            b.push(ys[0], 0.0, DT);
            for i in 1..=n {
                b.push(ys[i], 0.0, DT);
                let t = i as f64 * DT;
                if t > 0.02 + 1e-12 {
                    let e = b.solve().unwrap();
                    se_obs += (e.z1_hat - 5.0 * t).powi(2);
                    se_fd += ((ys[i] - ys[i - 1]) / DT - 5.0 * t).powi(2);
                    count += 1;
                }
            }
        }
        let rmse_obs = (se_obs / count as f64).sqrt();
        let rmse_fd = (se_fd / count as f64).sqrt();
        assert!(rmse_obs * 5.0 < rmse_fd, "observer {rmse_obs} vs differencing {rmse_fd}");
    }
}
