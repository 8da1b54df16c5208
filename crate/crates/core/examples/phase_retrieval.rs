//! HIO/ER phase retrieval of a binary phantom from its noiseless Fourier
//! modulus, scored modulo translation, global phase and conjugate flip.

use ndarray::Array2;
use ngi::fourier::Fft2;
use ngi::phantom::binary_phantom;
use ngi::reconstruct::phase::fftshift;
use ngi::reconstruct::{phase_retrieve_array, register_and_score, PhaseParams, SupportMask};
use num_complex::Complex64;

fn main() -> ngi::Result<()> {
    let seed: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(0);
    let phantom = binary_phantom(32);
    let mut truth = Array2::<Complex64>::zeros((64, 64));
    for ((i, l), v) in phantom.indexed_iter() {
        truth[[i, l]] = Complex64::new(*v, 0.0);
    }
    let mut f = truth.clone();
    Fft2::new(64, 64).forward(&mut f);
    let mag = fftshift(&f.mapv(|v| v.norm()));
    let support = SupportMask::rect((64, 64), (0, 0), (32, 32))?;
    let t = std::time::Instant::now();
    let out = phase_retrieve_array(&mag, &support, &PhaseParams { seed, ..Default::default() })?;
    println!("8 restarts x 2000 iterations in {:?}", t.elapsed());
    for (k, r) in out.restarts.iter().enumerate() {
        let s = register_and_score(&r.object, &truth)?;
        println!(
            "restart {k}: Fourier residual {:.2e}, NRMSE {:.4}, flipped {}, shift {:?}",
            r.residual, s.nrmse, s.flipped, s.shift
        );
    }
    Ok(())
}
