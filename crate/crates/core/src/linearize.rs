//! Feedback linearization of the `v_od` channel.
//!
//! With `y1 = v_od`, the plant satisfies `y1'' = f(x) + g * V_n`, where `f`
//! collects the inner-loop, filter and network terms and `g` is a constant.

use crate::physics::dg::{DgParams, DgState};

/// `y1 = v_od`, `y2 = d v_od / dt`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearizedOutput {
    pub y1: f64,
    pub y2: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NonlinearityEval {
    pub f: f64,
    pub g: f64,
    /// Lumped uncertainty `f + (g - g_nominal) * V_n`.
    pub f_prime: f64,
}

/// Output and its derivative computed from the true state.
pub fn linearized_output(s: &DgState, p: &DgParams, omega: f64) -> LinearizedOutput {
    LinearizedOutput {
        y1: s.v_od,
        y2: omega * s.v_oq + (s.i_ld - s.i_od) / p.c_f,
    }
}

/// The state-dependent part of `v_od''`.
///
/// `v_bd` is the bus d-axis voltage in the DG frame and `omega` the droop
/// frequency at the same instant. The `f_frame` term comes from the
/// output-current feed-forward of the voltage loop. The `d omega / dt * v_oq`
/// term is not included; it is negligible while `v_oq` stays small and is
/// absorbed by the observer.
pub fn compute_f(s: &DgState, p: &DgParams, v_bd: f64, omega: f64) -> f64 {
    let cl = p.c_f * p.l_f;
    let clc = p.c_f * p.l_c;
    (-omega * omega - (p.k_pc * p.k_pv + 1.0) / cl - 1.0 / clc) * s.v_od
        - p.omega_b * p.k_pc / p.l_f * s.v_oq
        + (p.r_c / clc + p.f_frame * p.k_pc / cl) * s.i_od
        - 2.0 * omega / p.c_f * s.i_oq
        - (p.r_f + p.k_pc) / cl * s.i_ld
        + (2.0 * omega - p.omega_b) / p.c_f * s.i_lq
        - p.k_pc * p.k_pv * p.n_q / cl * s.q
        + p.k_pc * p.k_iv / cl * s.phi_d
        + p.k_ic / cl * s.gamma_d
        + v_bd / clc
}

pub fn compute_g(p: &DgParams) -> f64 {
    p.input_gain()
}

/// Maps the auxiliary input back to the physical voltage setpoint.
pub fn auxiliary_to_actual(xi: f64, f_hat: f64, g: f64) -> f64 {
    (xi - f_hat) / g
}

pub fn evaluate(s: &DgState, p: &DgParams, v_bd: f64, omega: f64, g_nominal: f64, v_n: f64) -> NonlinearityEval {
    let f = compute_f(s, p, v_bd, omega);
    let g = compute_g(p);
    NonlinearityEval { f, g, f_prime: f + (g - g_nominal) * v_n }
}
