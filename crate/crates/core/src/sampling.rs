//! Seeded random sources shared by the samplers.
//!
//! Every randomized routine derives an independent ChaCha stream from
//! `(seed, stream)`, so results never depend on how work is split across
//! threads.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::exterior::OrientedPlane;
use crate::linalg;

pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub fn gaussian_matrix<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

/// Rotation-invariant random oriented k-plane: a QR-orthonormalized
/// Gaussian frame.
pub fn random_plane<R: Rng>(n: usize, k: usize, rng: &mut R) -> OrientedPlane {
    loop {
        let w = gaussian_matrix(n, k, rng);
        if let Ok(p) = OrientedPlane::from_frame(&w) {
            return p;
        }
    }
}

/// Random orthonormal `n×d` matrix.
pub fn random_orthonormal<R: Rng>(n: usize, d: usize, rng: &mut R) -> DMatrix<f64> {
    loop {
        let w = linalg::orthonormalize(&gaussian_matrix(n, d, rng));
        let g = w.transpose() * &w;
        if (g - DMatrix::identity(d, d)).amax() < 1e-10 {
            return w;
        }
    }
}
