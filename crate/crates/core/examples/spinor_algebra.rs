//! The five-channel coefficient matrix and its agreement with the spinor
//! construction `β σ·M⊥ + A` over random draws.

use ngi::spinor::{coefficient_matrix, forward_s_vector, kappa_hat, spinor_components, Channel, Spin};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> ngi::Result<()> {
    let theta = 0.05;
    println!("coefficient matrix at theta = {theta}:\n{}", coefficient_matrix(theta)?.to_text());

    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    let start = std::time::Instant::now();
    for _ in 0..1000 {
        let theta = rng.random_range(1e-3..std::f64::consts::FRAC_PI_2 - 1e-3);
        let beta = rng.random_range(0.1..2.0);
        let m = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
        let a = rng.random_range(-1.0..1.0);
        let s = forward_s_vector(m[0], m[1], m[2], a, theta, beta)?;
        for (k, ch) in Channel::ALL.iter().enumerate() {
            let (up, down) = spinor_components(a, m, kappa_hat(theta, ch.position())?, beta);
            let v = if ch.spin() == Spin::Up { up } else { down };
            worst = worst.max((v - s[k]).norm());
        }
    }
    println!("1000 draws: max |matrix - spinor| = {worst:.2e} in {:?}", start.elapsed());
    Ok(())
}
