//! Euler-discretized double integrator and the reduced two-time-scale
//! prediction operators.

use nalgebra::{DMatrix, DVector, Matrix2, RowVector2, Vector2};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiscreteModel {
    pub a: Matrix2<f64>,
    pub b: Vector2<f64>,
    pub c: RowVector2<f64>,
    pub ts: f64,
}

pub fn build_discrete_model(ts: f64) -> DiscreteModel {
    DiscreteModel {
        a: Matrix2::new(1.0, ts, 0.0, 1.0),
        b: Vector2::new(0.0, ts),
        c: RowVector2::new(1.0, 0.0),
        ts,
    }
}

/// Prediction of `y_o` at every `r`-th fine step over `h` controller steps,
/// with each controller input held for `r` fine steps.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionModel {
    pub model: DiscreteModel,
    pub horizon: usize,
    pub ratio: usize,
    pub f: DMatrix<f64>,
    pub g: DMatrix<f64>,
}

impl PredictionModel {
    pub fn new(ts: f64, horizon: usize, ratio: usize) -> Self {
        let model = build_discrete_model(ts);
        let (f, g) = build_prediction_matrices(&model, horizon, ratio);
        Self { model, horizon, ratio, f, g }
    }

    pub fn ts_mpc(&self) -> f64 {
        self.model.ts * self.ratio as f64
    }
}

/// Returns `(F, G)` with `Y = F y + G Xi`.
pub fn build_prediction_matrices(m: &DiscreteModel, horizon: usize, ratio: usize) -> (DMatrix<f64>, DMatrix<f64>) {
    assert!(horizon >= 1 && ratio >= 1, "horizon and ratio must be positive");
    let n_fine = horizon * ratio;
    // markov[j] = C A^j B, powers[j] = C A^j
    let mut markov = Vec::with_capacity(n_fine);
    let mut powers = Vec::with_capacity(n_fine + 1);
    let mut ak = Matrix2::identity();
    for _ in 0..=n_fine {
        powers.push(m.c * ak);
        markov.push((m.c * ak * m.b)[0]);
        ak *= m.a;
    }
    let mut f = DMatrix::zeros(horizon, 2);
    let mut g = DMatrix::zeros(horizon, horizon);
    for h in 0..horizon {
        let row = (h + 1) * ratio;
        f[(h, 0)] = powers[row][0];
        f[(h, 1)] = powers[row][1];
        // y(row) = sum_{i<row} C A^{row-1-i} B xi_fine(i), xi_fine(i) = Xi[i / ratio]
        for i in 0..row {
            g[(h, i / ratio)] += markov[row - 1 - i];
        }
    }
    (f, g)
}

pub fn predict_outputs(f: &DMatrix<f64>, g: &DMatrix<f64>, y: [f64; 2], xi: &[f64]) -> Vec<f64> {
    let y = DVector::from_column_slice(&y);
    let xi = DVector::from_column_slice(xi);
    (f * y + g * xi).iter().copied().collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn euler_matrices() {
        let m = build_discrete_model(0.01);
        assert_eq!(m.a, Matrix2::new(1.0, 0.01, 0.0, 1.0));
        assert_eq!(m.b, Vector2::new(0.0, 0.01));
        let tiny = build_discrete_model(1e-14);
        assert!((tiny.a - Matrix2::identity()).norm() < 1e-13);
        let a5 = m.a.pow(5);
        assert!((a5 - Matrix2::new(1.0, 0.05, 0.0, 1.0)).norm() < 1e-15);
    }

    #[test]
    fn hand_expanded_case() {
        let (f, g) = build_prediction_matrices(&build_discrete_model(0.01), 1, 2);
        assert!((f[(0, 0)] - 1.0).abs() < 1e-15 && (f[(0, 1)] - 0.02).abs() < 1e-15);
        // C A B + C B with C B = 0 for the Euler model.
        assert!((g[(0, 0)] - 1e-4).abs() < 1e-15);
    }

    #[test]
    fn unit_ratio_is_plain_prediction() {
        let m = build_discrete_model(0.01);
        let (f, g) = build_prediction_matrices(&m, 4, 1);
        for h in 0..4 {
            let p = m.c * m.a.pow(h as u32 + 1);
            assert_eq!(f[(h, 0)], p[0]);
            assert!((f[(h, 1)] - p[1]).abs() < 1e-15);
            for j in 0..4 {
                let want = if j <= h { (m.c * m.a.pow((h - j) as u32) * m.b)[0] } else { 0.0 };
                assert!((g[(h, j)] - want).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn structure_of_g() {
        let (_, g) = build_prediction_matrices(&build_discrete_model(0.01), 10, 5);
        for h in 0..10 {
            assert!(g[(h, h)] > 0.0);
            for j in h + 1..10 {
                assert_eq!(g[(h, j)], 0.0);
            }
        }
    }

    #[test]
    fn predict_examples() {
        let pm = PredictionModel::new(0.01, 10, 5);
        let y = predict_outputs(&pm.f, &pm.g, [311.0, 0.0], &[0.0; 10]);
        assert!(y.iter().all(|v| *v == 311.0));
        let y = predict_outputs(&pm.f, &pm.g, [0.0, 1.0], &[0.0; 10]);
        for (h, v) in y.iter().enumerate() {
            assert!((v - 0.05 * (h + 1) as f64).abs() < 1e-14);
        }
    }
}
