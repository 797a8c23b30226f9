//! Two-time-scale prediction operators and one tracking QP solve.
//!
//! `cargo run --release --example dmpc_prediction`

use mgrid::dmpc::{predict_outputs, solve_voltage_qp, PredictionModel, QpWeights};

fn main() {
    let pm = PredictionModel::new(0.01, 10, 5);
    println!("{:>3} {:>8} {:>8}   G row", "h", "F[h,0]", "F[h,1]");
    for h in 0..pm.horizon {
        let g: Vec<String> = pm.g.row(h).iter().map(|v| format!("{:.4}", v)).collect();
        println!("{:>3} {:>8.3} {:>8.3}   {}", h + 1, pm.f[(h, 0)], pm.f[(h, 1)], g.join(" "));
    }

    let y = [306.0, 0.0];
    let leader = vec![311.0; 10];
    let neighbor: Vec<f64> = (1..=10).map(|h| 306.0 + 0.4 * h as f64).collect();
    let refs: Vec<&[f64]> = vec![&leader, &neighbor];
    let w = QpWeights::diagonal(10, 1e-6, 311.0 * 0.97, 311.0 * 1.03);
    let out = solve_voltage_qp(y, &refs, &w, &pm, None);
    println!(
        "iterations {}, KKT residual {:.2e}, fallback {}",
        out.iterations, out.kkt_residual, out.fallback
    );
    let pred = predict_outputs(&pm.f, &pm.g, y, &out.xi);
    println!("{:>3} {:>12} {:>10} {:>10}", "h", "xi", "y_pred", "target");
    for h in 0..10 {
        println!("{:>3} {:>12.3} {:>10.3} {:>10.3}", h + 1, out.xi[h], pred[h], 0.5 * (leader[h] + neighbor[h]));
    }
}
