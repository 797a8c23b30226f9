//! Volterra observer on a double integrator with constant unknown drift:
//! exact estimates once the kernels have risen, and a comparison with
//! finite differencing under measurement noise.
//!
//! `cargo run --release --example observer_deadbeat`

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use mgrid::observer::{KernelParams, VolterraBank};

const DT: f64 = 5e-5;

fn main() {
    let f = -40.0;
    let u = |t: f64| 10.0 * (50.0 * t).sin();
    // y'' = f + u with y(0) = 3, y'(0) = 2.
    let y = move |t: f64| 3.0 + 2.0 * t + f * t * t / 2.0 + 10.0 * (t / 50.0 - (50.0 * t).sin() / 2500.0);
    let yd = move |t: f64| 2.0 + f * t + 10.0 * (1.0 / 50.0 - (50.0 * t).cos() / 50.0);

    let mut bank = VolterraBank::centered(KernelParams::default());
    bank.push(y(0.0), u(0.0), DT);
    println!("{:>7} {:>12} {:>12} {:>12} {:>12}", "t (ms)", "f_hat", "z0 error", "z1 error", "cond");
    for i in 1..=800 {
        let t = i as f64 * DT;
        bank.push(y(t), u(t), DT);
        if i % 100 == 0 {
            match bank.solve() {
                Ok(e) => println!(
                    "{:>7.1} {:>12.6} {:>12.2e} {:>12.2e} {:>12.2e}",
                    t * 1e3,
                    e.f_hat,
                    e.z0_hat - y(t),
                    e.z1_hat - yd(t),
                    e.cond_gamma
                ),
                Err(c) => println!("{:>7.1} singular (cond {c:.2e})", t * 1e3),
            }
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let noise = Normal::new(0.0, 0.01 * y(0.0)).unwrap();
    let ys: Vec<f64> = (0..=800).map(|i| y(i as f64 * DT) + noise.sample(&mut rng)).collect();
    let mut bank = VolterraBank::centered(KernelParams::default());
    bank.push(ys[0], u(0.0), DT);
    let (mut se_obs, mut se_fd, mut n) = (0.0, 0.0, 0);
    for i in 1..=800 {
        let t = i as f64 * DT;
        bank.push(ys[i], u(t), DT);
        if t > 0.02 {
            let e = bank.solve().unwrap();
            se_obs += (e.z1_hat - yd(t)).powi(2);
            se_fd += ((ys[i] - ys[i - 1]) / DT - yd(t)).powi(2);
            n += 1;
        }
    }
    println!(
        "with 1% noise: observer z1 RMSE {:.4}, two-point differencing RMSE {:.4}",
        (se_obs / n as f64).sqrt(),
        (se_fd / n as f64).sqrt()
    );
}
