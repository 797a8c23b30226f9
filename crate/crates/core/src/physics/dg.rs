//! Inverter-based DG: droop layer, cascaded voltage/current loops, LC filter
//! and output impedance, expressed in the DG's own rotating dq frame.

use serde::{Deserialize, Serialize};

use crate::error::ConfigError;

/// Rated angular frequency of a 50 Hz system (rad/s).
pub const OMEGA_50HZ: f64 = 2.0 * std::f64::consts::PI * 50.0;

/// Electrical and control parameters of one DG.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DgParams {
    /// Frequency droop gain (rad/s per W).
    pub m_p: f64,
    /// Voltage droop gain (V per var).
    pub n_q: f64,
    pub r_f: f64,
    pub l_f: f64,
    pub c_f: f64,
    pub r_c: f64,
    pub l_c: f64,
    pub k_pv: f64,
    pub k_iv: f64,
    pub k_pc: f64,
    pub k_ic: f64,
    /// Power measurement low-pass cutoff (rad/s).
    pub omega_c: f64,
    /// Output-current feed-forward gain of the voltage loop.
    pub f_frame: f64,
    /// Rated angular frequency used by the inner-loop decoupling terms (rad/s).
    pub omega_b: f64,
}

impl DgParams {
    /// DG1 of the 4-bus test system.
    pub fn dg1() -> Self {
        Self {
            m_p: 6.28e-5,
            n_q: 0.5e-3,
            k_pv: 0.05,
            k_iv: 390.0,
            k_pc: 10.5,
            k_ic: 1.6e4,
            ..Self::common()
        }
    }

    /// DG2 of the 4-bus test system.
    pub fn dg2() -> Self {
        Self {
            m_p: 9.42e-5,
            n_q: 0.75e-3,
            k_pv: 0.05,
            k_iv: 390.0,
            k_pc: 10.5,
            k_ic: 1.6e4,
            ..Self::common()
        }
    }

    /// DG3 and DG4 of the 4-bus test system share one parameter set.
    pub fn dg3() -> Self {
        Self {
            m_p: 12.56e-5,
            n_q: 1e-3,
            k_pv: 0.1,
            k_iv: 420.0,
            k_pc: 15.0,
            k_ic: 2e4,
            ..Self::common()
        }
    }

    fn common() -> Self {
        Self {
            m_p: 0.0,
            n_q: 0.0,
            r_f: 0.1,
            l_f: 1.35e-3,
            c_f: 47e-6,
            r_c: 0.02,
            l_c: 2e-3,
            k_pv: 0.0,
            k_iv: 0.0,
            k_pc: 0.0,
            k_ic: 0.0,
            omega_c: 31.41,
            f_frame: 0.75,
            omega_b: OMEGA_50HZ,
        }
    }

    /// Looks up a named preset (`dg1`, `dg2`, `dg3`, `dg4`).
    pub fn preset(name: &str) -> Option<Self> {
        match name.to_ascii_lowercase().as_str() {
            "dg1" => Some(Self::dg1()),
            "dg2" => Some(Self::dg2()),
            "dg3" | "dg4" => Some(Self::dg3()),
            _ => None,
        }
    }

    /// Gain of the voltage setpoint in the second derivative of `v_od`.
    pub fn input_gain(&self) -> f64 {
        self.k_pc * self.k_pv / (self.c_f * self.l_f)
    }

    pub fn validate(&self, dg: &str) -> Result<(), ConfigError> {
        let err = |reason: &str| ConfigError::DgParams {
            dg: dg.to_string(),
            reason: reason.to_string(),
        };
        let all = [
            self.m_p, self.n_q, self.r_f, self.l_f, self.c_f, self.r_c, self.l_c, self.k_pv,
            self.k_iv, self.k_pc, self.k_ic, self.omega_c, self.f_frame, self.omega_b,
        ];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(err("all parameters must be finite"));
        }
        for (name, v) in [
            ("l_f", self.l_f),
            ("c_f", self.c_f),
            ("l_c", self.l_c),
            ("m_p", self.m_p),
            ("n_q", self.n_q),
            ("omega_c", self.omega_c),
        ] {
            if v <= 0.0 {
                return Err(err(&format!("{name} must be positive")));
            }
        }
        if self.input_gain() <= 0.0 {
            return Err(err("k_pc*k_pv/(c_f*l_f) must be positive"));
        }
        Ok(())
    }
}

/// Number of continuous states per DG.
pub const DG_STATES: usize = 13;

/// Names of the DG states in storage order.
pub const DG_STATE_NAMES: [&str; DG_STATES] = [
    "delta", "p", "q", "phi_d", "phi_q", "gamma_d", "gamma_q", "i_ld", "i_lq", "v_od", "v_oq",
    "i_od", "i_oq",
];

/// The 13 continuous states of one DG, local dq frame.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct DgState {
    pub delta: f64,
    pub p: f64,
    pub q: f64,
    pub phi_d: f64,
    pub phi_q: f64,
    pub gamma_d: f64,
    pub gamma_q: f64,
    pub i_ld: f64,
    pub i_lq: f64,
    pub v_od: f64,
    pub v_oq: f64,
    pub i_od: f64,
    pub i_oq: f64,
}

impl DgState {
    pub fn to_array(&self) -> [f64; DG_STATES] {
        [
            self.delta,
            self.p,
            self.q,
            self.phi_d,
            self.phi_q,
            self.gamma_d,
            self.gamma_q,
            self.i_ld,
            self.i_lq,
            self.v_od,
            self.v_oq,
            self.i_od,
            self.i_oq,
        ]
    }

    pub fn from_slice(x: &[f64]) -> Self {
        Self {
            delta: x[0],
            p: x[1],
            q: x[2],
            phi_d: x[3],
            phi_q: x[4],
            gamma_d: x[5],
            gamma_q: x[6],
            i_ld: x[7],
            i_lq: x[8],
            v_od: x[9],
            v_oq: x[10],
            i_od: x[11],
            i_oq: x[12],
        }
    }

    pub fn write_to(&self, out: &mut [f64]) {
        out[..DG_STATES].copy_from_slice(&self.to_array());
    }

    /// Unloaded equilibrium at output voltage `v_n` and frequency `omega_b`:
    /// zero output current, filter inductor carrying only the capacitor current,
    /// integrators matched.
    pub fn no_load_equilibrium(p: &DgParams, v_n: f64) -> Self {
        let i_lq = p.omega_b * p.c_f * v_n;
        Self {
            v_od: v_n,
            i_lq,
            gamma_d: v_n / p.k_ic,
            gamma_q: p.r_f * i_lq / p.k_ic,
            ..Self::default()
        }
    }
}

/// Setpoints handed from the secondary layer to primary control.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DgInput {
    pub omega_n: f64,
    pub v_n: f64,
}

/// Droop laws: returns the DG frequency and the d-axis voltage reference.
/// The q-axis reference is identically zero.
pub fn droop_outputs(p: &DgParams, active_power: f64, reactive_power: f64, input: &DgInput) -> (f64, f64) {
    (
        input.omega_n - p.m_p * active_power,
        input.v_n - p.n_q * reactive_power,
    )
}

/// Rotation direction between a DG frame and the common frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FrameDirection {
    ToCommon,
    ToLocal,
}

/// Rotates a dq pair by `+delta` (to common) or `-delta` (to local).
pub fn frame_transform(v: [f64; 2], delta: f64, direction: FrameDirection) -> [f64; 2] {
    let (s, c) = delta.sin_cos();
    match direction {
        FrameDirection::ToCommon => [v[0] * c - v[1] * s, v[0] * s + v[1] * c],
        FrameDirection::ToLocal => [v[0] * c + v[1] * s, -v[0] * s + v[1] * c],
    }
}

/// Time derivatives of the 13 DG states.
///
/// `v_b` is the connection-bus voltage already rotated into the DG frame and
/// `omega_com` the frequency of the common reference frame. The inverter
/// bridge is ideal: the bridge voltage equals the current-loop output.
pub fn dg_derivatives(
    p: &DgParams,
    s: &DgState,
    input: &DgInput,
    v_b: [f64; 2],
    omega_com: f64,
) -> [f64; DG_STATES] {
    let (omega, v_od_ref) = droop_outputs(p, s.p, s.q, input);
    let v_oq_ref = 0.0;

    let p_inst = s.v_od * s.i_od + s.v_oq * s.i_oq;
    let q_inst = s.v_oq * s.i_od - s.v_od * s.i_oq;

    let e_vd = v_od_ref - s.v_od;
    let e_vq = v_oq_ref - s.v_oq;
    let i_ld_ref = p.f_frame * s.i_od - p.omega_b * p.c_f * s.v_oq + p.k_pv * e_vd + p.k_iv * s.phi_d;
    let i_lq_ref = p.f_frame * s.i_oq + p.omega_b * p.c_f * s.v_od + p.k_pv * e_vq + p.k_iv * s.phi_q;
    let e_id = i_ld_ref - s.i_ld;
    let e_iq = i_lq_ref - s.i_lq;
    let v_id = -p.omega_b * p.l_f * s.i_lq + p.k_pc * e_id + p.k_ic * s.gamma_d;
    let v_iq = p.omega_b * p.l_f * s.i_ld + p.k_pc * e_iq + p.k_ic * s.gamma_q;

    [
        omega - omega_com,
        p.omega_c * (p_inst - s.p),
        p.omega_c * (q_inst - s.q),
        e_vd,
        e_vq,
        e_id,
        e_iq,
        (-p.r_f * s.i_ld + v_id - s.v_od) / p.l_f + omega * s.i_lq,
        (-p.r_f * s.i_lq + v_iq - s.v_oq) / p.l_f - omega * s.i_ld,
        omega * s.v_oq + (s.i_ld - s.i_od) / p.c_f,
        -omega * s.v_od + (s.i_lq - s.i_oq) / p.c_f,
        (-p.r_c * s.i_od + s.v_od - v_b[0]) / p.l_c + omega * s.i_oq,
        (-p.r_c * s.i_oq + s.v_oq - v_b[1]) / p.l_c - omega * s.i_od,
    ]
}

/// Analytic Jacobian of [`dg_derivatives`] with respect to the 13 states,
/// `v_b` and the setpoints held fixed. Row `i`, column `j` is
/// `d(dx_i)/d(x_j)`.
pub fn dg_jacobian(p: &DgParams, s: &DgState, input: &DgInput) -> [[f64; DG_STATES]; DG_STATES] {
    type Grad = [f64; DG_STATES];
    let (omega, _) = droop_outputs(p, s.p, s.q, input);
    let unit = |k: usize| -> Grad {
        let mut g = [0.0; DG_STATES];
        g[k] = 1.0;
        g
    };
    let lin = |terms: &[(f64, &Grad)]| -> Grad {
        let mut g = [0.0; DG_STATES];
        for (c, v) in terms {
            for k in 0..DG_STATES {
                g[k] += c * v[k];
            }
        }
        g
    };
    let [_, xp, xq, phd, phq, gmd, gmq, ild, ilq, vod, voq, iod, ioq] = std::array::from_fn(unit);
    let d_omega = lin(&[(-p.m_p, &xp)]);
    let e_vd = lin(&[(-p.n_q, &xq), (-1.0, &vod)]);
    let e_vq = lin(&[(-1.0, &voq)]);
    let i_ld_ref = lin(&[(p.f_frame, &iod), (-p.omega_b * p.c_f, &voq), (p.k_pv, &e_vd), (p.k_iv, &phd)]);
    let i_lq_ref = lin(&[(p.f_frame, &ioq), (p.omega_b * p.c_f, &vod), (p.k_pv, &e_vq), (p.k_iv, &phq)]);
    let e_id = lin(&[(1.0, &i_ld_ref), (-1.0, &ild)]);
    let e_iq = lin(&[(1.0, &i_lq_ref), (-1.0, &ilq)]);
    let v_id = lin(&[(-p.omega_b * p.l_f, &ilq), (p.k_pc, &e_id), (p.k_ic, &gmd)]);
    let v_iq = lin(&[(p.omega_b * p.l_f, &ild), (p.k_pc, &e_iq), (p.k_ic, &gmq)]);
    let wc = p.omega_c;
    [
        d_omega,
        lin(&[(wc * s.i_od, &vod), (wc * s.v_od, &iod), (wc * s.i_oq, &voq), (wc * s.v_oq, &ioq), (-wc, &xp)]),
        lin(&[(wc * s.i_od, &voq), (wc * s.v_oq, &iod), (-wc * s.i_oq, &vod), (-wc * s.v_od, &ioq), (-wc, &xq)]),
        e_vd,
        e_vq,
        e_id,
        e_iq,
        lin(&[(-p.r_f / p.l_f, &ild), (1.0 / p.l_f, &v_id), (-1.0 / p.l_f, &vod), (omega, &ilq), (s.i_lq, &d_omega)]),
        lin(&[(-p.r_f / p.l_f, &ilq), (1.0 / p.l_f, &v_iq), (-1.0 / p.l_f, &voq), (-omega, &ild), (-s.i_ld, &d_omega)]),
        lin(&[(omega, &voq), (s.v_oq, &d_omega), (1.0 / p.c_f, &ild), (-1.0 / p.c_f, &iod)]),
        lin(&[(-omega, &vod), (-s.v_od, &d_omega), (1.0 / p.c_f, &ilq), (-1.0 / p.c_f, &ioq)]),
        lin(&[(-p.r_c / p.l_c, &iod), (1.0 / p.l_c, &vod), (omega, &ioq), (s.i_oq, &d_omega)]),
        lin(&[(-p.r_c / p.l_c, &ioq), (1.0 / p.l_c, &voq), (-omega, &iod), (-s.i_od, &d_omega)]),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn droop_zero_power() {
        let input = DgInput { omega_n: 314.159, v_n: 311.0 };
        let (w, v) = droop_outputs(&DgParams::dg1(), 0.0, 0.0, &input);
        assert_eq!((w, v), (314.159, 311.0));
    }

    #[test]
    fn droop_dg1_gains() {
        let p = DgParams::dg1();
        let input = DgInput { omega_n: 314.159, v_n: 311.0 };
        let (w, _) = droop_outputs(&p, 10_000.0, 0.0, &input);
        assert_relative_eq!(w, 313.531, epsilon = 1e-9);
        let (_, v) = droop_outputs(&p, 0.0, 2000.0, &input);
        assert_relative_eq!(v, 310.0, epsilon = 1e-12);
    }

    #[test]
    fn origin_is_equilibrium() {
        let p = DgParams::dg1();
        let input = DgInput { omega_n: 0.0, v_n: 0.0 };
        let d = dg_derivatives(&p, &DgState::default(), &input, [0.0, 0.0], 0.0);
        assert!(d.iter().all(|v| *v == 0.0), "{d:?}");
    }

    #[test]
    fn matched_frequency_gives_zero_angle_rate() {
        let p = DgParams::dg2();
        let s = DgState { p: 5000.0, ..Default::default() };
        let input = DgInput { omega_n: OMEGA_50HZ, v_n: 311.0 };
        let (w, _) = droop_outputs(&p, s.p, s.q, &input);
        let d = dg_derivatives(&p, &s, &input, [0.0, 0.0], w);
        assert_eq!(d[0], 0.0);
    }

    #[test]
    fn no_load_equilibrium_is_stationary() {
        for p in [DgParams::dg1(), DgParams::dg2(), DgParams::dg3()] {
            let s = DgState::no_load_equilibrium(&p, 311.0);
            let input = DgInput { omega_n: p.omega_b, v_n: 311.0 };
            let d = dg_derivatives(&p, &s, &input, [311.0, 0.0], p.omega_b);
            for (k, v) in d.iter().enumerate() {
                assert!(v.abs() < 1e-9, "state {} derivative {v}", DG_STATE_NAMES[k]);
            }
        }
    }

    #[test]
    fn frame_examples() {
        assert_eq!(frame_transform([1.0, 0.0], 0.0, FrameDirection::ToCommon), [1.0, 0.0]);
        let r = frame_transform([1.0, 0.0], std::f64::consts::FRAC_PI_2, FrameDirection::ToCommon);
        assert!(r[0].abs() < 1e-15 && (r[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn presets_validate() {
        for name in ["dg1", "dg2", "dg3", "dg4"] {
            DgParams::preset(name).unwrap().validate(name).unwrap();
        }
        let bad = DgParams { k_pv: 0.0, ..DgParams::dg1() };
        assert!(bad.validate("x").is_err());
    }

    proptest! {
        #[test]
        fn frame_transform_is_isometry(d in -100.0f64..100.0, q in -100.0f64..100.0, ang in -10.0f64..10.0) {
            let out = frame_transform([d, q], ang, FrameDirection::ToCommon);
            let n_in = d.hypot(q);
            prop_assert!((out[0].hypot(out[1]) - n_in).abs() <= 1e-12 * (1.0 + n_in));
            let back = frame_transform(out, ang, FrameDirection::ToLocal);
            prop_assert!((back[0] - d).abs() < 1e-12 * (1.0 + n_in));
            prop_assert!((back[1] - q).abs() < 1e-12 * (1.0 + n_in));
        }
    }
}
