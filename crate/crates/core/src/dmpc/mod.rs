//! Two-time-scale prediction, the consensus-tracking QP and receding-horizon
//! bookkeeping.

pub mod model;
pub mod qp;

pub use model::{build_discrete_model, build_prediction_matrices, predict_outputs, DiscreteModel, PredictionModel};
pub use qp::{neighbor_average, solve_voltage_qp, QpOutcome, QpWeights};

use serde::{Deserialize, Serialize};

/// Planned auxiliary inputs `xi(k..k+H-1 | k)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlSequence {
    pub xi: Vec<f64>,
    pub issued_at: u64,
}

/// Predicted outputs `y_o(k+1..k+H | k)` at controller steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputPrediction {
    pub y: Vec<f64>,
    pub issued_at: u64,
}

/// Drops the first `m` entries and pads with zeros. `m >= H` gives all zeros.
pub fn shift_sequence(seq: &ControlSequence, m: usize) -> ControlSequence {
    let h = seq.xi.len();
    let mut xi = vec![0.0; h];
    if m < h {
        xi[..h - m].copy_from_slice(&seq.xi[m..]);
    }
    ControlSequence { xi, issued_at: seq.issued_at + m as u64 }
}

pub fn first_input(seq: &ControlSequence) -> f64 {
    seq.xi[0]
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn seq(xi: &[f64]) -> ControlSequence {
        ControlSequence { xi: xi.to_vec(), issued_at: 0 }
    }

    #[test]
    fn shift_examples() {
        assert_eq!(shift_sequence(&seq(&[1.0, 2.0, 3.0]), 1).xi, vec![2.0, 3.0, 0.0]);
        assert_eq!(shift_sequence(&seq(&[1.0, 2.0, 3.0]), 2).xi, vec![3.0, 0.0, 0.0]);
        assert_eq!(shift_sequence(&seq(&[1.0, 2.0, 3.0]), 3).xi, vec![0.0; 3]);
        assert_eq!(shift_sequence(&seq(&[1.0, 2.0, 3.0]), 7).xi, vec![0.0; 3]);
    }

    #[test]
    fn first_input_examples() {
        let s = seq(&[1.0, 2.0, 3.0]);
        assert_eq!(first_input(&s), 1.0);
        assert_eq!(first_input(&shift_sequence(&s, 1)), 2.0);
        assert_eq!(first_input(&seq(&[0.0; 3])), 0.0);
    }

    proptest! {
        #[test]
        fn shift_is_a_semigroup(xi in proptest::collection::vec(-1e3f64..1e3, 1..12), a in 0usize..12, b in 0usize..12) {
            let s = seq(&xi);
            prop_assert_eq!(shift_sequence(&shift_sequence(&s, a), b).xi, shift_sequence(&s, a + b).xi);
        }
    }
}
