//! Seeded random matrices and vectors.
//!
//! Every generator takes an explicit RNG so callers control reproducibility;
//! [`seeded`] gives the ChaCha stream used throughout the crate.

use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::spd::{SpdMatrix, SymMatrix};

pub fn seeded(seed: u64) -> ChaCha8Rng {
    rand::SeedableRng::seed_from_u64(seed)
}

pub fn gaussian_matrix<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
}

pub fn gaussian_vector<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

pub fn random_unit_vector<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<f64> {
    loop {
        let v = gaussian_vector(rng, n);
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-12 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

/// Orthonormal `rows×cols` frame from the QR factorization of a Gaussian
/// matrix, with the diagonal of R forced positive.
pub fn random_orthonormal<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> DMatrix<f64> {
    assert!(cols <= rows, "cannot fit {cols} orthonormal columns in R^{rows}");
    orthonormalize(gaussian_matrix(rng, rows, cols))
}

pub(crate) fn orthonormalize(m: DMatrix<f64>) -> DMatrix<f64> {
    let cols = m.ncols();
    let qr = m.qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..cols {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

/// `G Gᵀ / k + floor·I` for a Gaussian `k×k` matrix `G`.
pub fn random_spd<R: Rng + ?Sized>(rng: &mut R, k: usize, floor: f64) -> SpdMatrix {
    loop {
        let g = gaussian_matrix(rng, k, k);
        let mut m = &g * g.transpose() / k as f64;
        for i in 0..k {
            m[(i, i)] += floor;
        }
        if let Ok(spd) = SpdMatrix::from_matrix(m) {
            return spd;
        }
    }
}

/// PSD matrix of the given rank, `G Gᵀ` with `G` Gaussian `k×rank`.
pub fn random_psd<R: Rng + ?Sized>(rng: &mut R, k: usize, rank: usize) -> SymMatrix {
    let g = gaussian_matrix(rng, k, rank);
    SymMatrix::new(&g * g.transpose()).expect("finite")
}
