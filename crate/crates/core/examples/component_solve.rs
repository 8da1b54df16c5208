//! Per-pixel least-squares recovery of (Mx, My, Mz, A) from five S-images,
//! noiseless and with complex Gaussian noise.

use ndarray::Array2;
use ngi::reconstruct::solve_components;
use ngi::spinor::forward_s_vector;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn main() -> ngi::Result<()> {
    let (n, theta, beta) = (64, 0.3, 0.9);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let truth = [(); 4].map(|_| Array2::from_shape_fn((n, n), |_| rng.random_range(-1.0..1.0)));
    let mut images = [(); 5].map(|_| Array2::<Complex64>::zeros((n, n)));
    for ((i, l), _) in truth[0].indexed_iter() {
        let s = forward_s_vector(truth[0][[i, l]], truth[1][[i, l]], truth[2][[i, l]], truth[3][[i, l]], theta, beta)?;
        for k in 0..5 {
            images[k][[i, l]] = s[k];
        }
    }
    let sol = solve_components(&images, theta, beta)?;
    let err = (0..4)
        .flat_map(|c| sol.component(c).iter().zip(truth[c].iter()).map(|(a, b)| (a - b).abs()).collect::<Vec<_>>())
        .fold(0.0, f64::max);
    println!("noiseless: max error {err:.2e}, condition number {:.3}", sol.condition_number);

    for sigma in [1e-4, 3e-4, 1e-3] {
        let noisy = images.clone().map(|im| {
            im.mapv(|v| {
                let re: f64 = StandardNormal.sample(&mut rng);
                let im: f64 = StandardNormal.sample(&mut rng);
                v + Complex64::new(re, im) * sigma
            })
        });
        let s = solve_components(&noisy, theta, beta)?;
        let rms = (0..4)
            .map(|c| s.component(c).iter().zip(truth[c].iter()).map(|(a, b)| (a - b).powi(2)).sum::<f64>())
            .sum::<f64>()
            / (4 * n * n) as f64;
        println!("sigma {sigma:.0e}: rms component error {:.3e}", rms.sqrt());
    }
    Ok(())
}
