//! Cyclic Jacobi eigensolver for dense symmetric matrices.
//!
//! Jacobi is slower than tridiagonal QR for large `k`, but it is accurate to
//! high relative precision on the small, well-scaled operators this crate
//! handles, and its fixed sweep order makes results reproducible bit for bit.

use nalgebra::DMatrix;

const MAX_SWEEPS: usize = 100;

/// Eigenvalues in ascending order and the matching orthonormal eigenvectors
/// stored as columns.
///
/// Each eigenvector is normalized so that its largest-magnitude component is
/// positive (first such index on ties).
#[derive(Clone, Debug, PartialEq)]
pub struct EigenDecomposition {
    pub values: Vec<f64>,
    pub vectors: DMatrix<f64>,
}

impl EigenDecomposition {
    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn min(&self) -> f64 {
        self.values[0]
    }

    pub fn max(&self) -> f64 {
        self.values[self.values.len() - 1]
    }

    /// Column `i` as an owned vector.
    pub fn vector(&self, i: usize) -> Vec<f64> {
        self.vectors.column(i).iter().copied().collect()
    }

    /// `V diag(f(λ)) Vᵀ`.
    pub fn map_spectrum(&self, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
        let k = self.dim();
        let mut scaled = self.vectors.clone();
        for (j, &lambda) in self.values.iter().enumerate() {
            let fj = f(lambda);
            for i in 0..k {
                scaled[(i, j)] *= fj;
            }
        }
        let mut out = &scaled * self.vectors.transpose();
        symmetrize_in_place(&mut out);
        out
    }

    /// `V Λ Vᵀ`.
    pub fn reconstruct(&self) -> DMatrix<f64> {
        self.map_spectrum(|x| x)
    }
}

pub(crate) fn symmetrize_in_place(m: &mut DMatrix<f64>) {
    let k = m.nrows();
    for i in 0..k {
        for j in (i + 1)..k {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
}

/// Eigendecomposition of a symmetric matrix. The input must be square,
/// finite, and symmetric; only those properties are assumed.
pub fn jacobi_eigen(input: &DMatrix<f64>) -> EigenDecomposition {
    let n = input.nrows();
    debug_assert_eq!(n, input.ncols());

    // row-major working copies
    let mut a: Vec<f64> = (0..n * n).map(|idx| input[(idx / n, idx % n)]).collect();
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }

    let scale: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    if scale > 0.0 {
        for sweep in 0..MAX_SWEEPS {
            let mut off = 0.0;
            for p in 0..n {
                for q in (p + 1)..n {
                    off += a[p * n + q] * a[p * n + q];
                }
            }
            if off.sqrt() <= f64::EPSILON * 1e-2 * scale {
                break;
            }
            for p in 0..n {
                for q in (p + 1)..n {
                    let apq = a[p * n + q];
                    if apq == 0.0 {
                        continue;
                    }
                    let app = a[p * n + p];
                    let aqq = a[q * n + q];
                    let g = 100.0 * apq.abs();
                    // off-diagonal already negligible against both pivots
                    if sweep > 3 && app.abs() + g == app.abs() && aqq.abs() + g == aqq.abs() {
                        a[p * n + q] = 0.0;
                        a[q * n + p] = 0.0;
                        continue;
                    }
                    let diff = aqq - app;
                    let t = if diff.abs() + g == diff.abs() {
                        apq / diff
                    } else {
                        let theta = 0.5 * diff / apq;
                        let t = 1.0 / (theta.abs() + (theta * theta + 1.0).sqrt());
                        if theta < 0.0 {
                            -t
                        } else {
                            t
                        }
                    };
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let s = t * c;
                    let tau = s / (1.0 + c);

                    a[p * n + p] = app - t * apq;
                    a[q * n + q] = aqq + t * apq;
                    a[p * n + q] = 0.0;
                    a[q * n + p] = 0.0;
                    for r in 0..n {
                        if r == p || r == q {
                            continue;
                        }
                        let arp = a[r * n + p];
                        let arq = a[r * n + q];
                        let new_rp = arp - s * (arq + tau * arp);
                        let new_rq = arq + s * (arp - tau * arq);
                        a[r * n + p] = new_rp;
                        a[p * n + r] = new_rp;
                        a[r * n + q] = new_rq;
                        a[q * n + r] = new_rq;
                    }
                    for r in 0..n {
                        let vrp = v[r * n + p];
                        let vrq = v[r * n + q];
                        v[r * n + p] = vrp - s * (vrq + tau * vrp);
                        v[r * n + q] = vrq + s * (vrp - tau * vrq);
                    }
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[i * n + i].total_cmp(&a[j * n + j]).then(i.cmp(&j)));

    let values: Vec<f64> = order.iter().map(|&i| a[i * n + i]).collect();
    let mut vectors = DMatrix::zeros(n, n);
    for (col, &src) in order.iter().enumerate() {
        let mut best = 0;
        let mut best_abs = -1.0;
        for r in 0..n {
            let x = v[r * n + src].abs();
            if x > best_abs {
                best_abs = x;
                best = r;
            }
        }
        let sign = if v[best * n + src] < 0.0 { -1.0 } else { 1.0 };
        for r in 0..n {
            vectors[(r, col)] = sign * v[r * n + src];
        }
    }
    EigenDecomposition { values, vectors }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn max_abs(m: &DMatrix<f64>) -> f64 {
        m.iter().fold(0.0f64, |acc, x| acc.max(x.abs()))
    }

    #[test]
    fn identity_has_unit_spectrum() {
        let eig = jacobi_eigen(&DMatrix::identity(3, 3));
        assert_eq!(eig.values, vec![1.0, 1.0, 1.0]);
        let vtv = eig.vectors.transpose() * &eig.vectors;
        assert!(max_abs(&(vtv - DMatrix::identity(3, 3))) <= 1e-15);
    }

    #[test]
    fn diagonal_sorted_ascending() {
        let a = DMatrix::from_row_slice(2, 2, &[4.0, 0.0, 0.0, 1.0]);
        let eig = jacobi_eigen(&a);
        assert_eq!(eig.values, vec![1.0, 4.0]);
        // e2 then e1, sign convention makes the dominant entry positive
        assert_eq!(eig.vector(0), vec![0.0, 1.0]);
        assert_eq!(eig.vector(1), vec![1.0, 0.0]);
    }

    #[test]
    fn random_symmetric_reconstructs() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for n in [1usize, 2, 5, 9, 20] {
            let mut a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-3.0..3.0));
            a = &a + a.transpose();
            let eig = jacobi_eigen(&a);
            let err = max_abs(&(eig.reconstruct() - &a));
            assert!(err <= 1e-8 * (1.0 + max_abs(&a)), "n={n} err={err}");
            let vtv = eig.vectors.transpose() * &eig.vectors;
            assert!(max_abs(&(vtv - DMatrix::identity(n, n))) <= 1e-10);
            assert!(eig.values.windows(2).all(|w| w[0] <= w[1]));
        }
    }

    #[test]
    fn sign_convention_dominant_component_positive() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut a = DMatrix::from_fn(6, 6, |_, _| rng.random_range(-1.0..1.0));
        a = &a + a.transpose();
        let eig = jacobi_eigen(&a);
        for j in 0..6 {
            let col = eig.vector(j);
            let dominant = col.iter().copied().fold(0.0f64, |m, x| if x.abs() > m.abs() { x } else { m });
            assert!(dominant > 0.0);
        }
    }

    #[test]
    fn zero_matrix() {
        let eig = jacobi_eigen(&DMatrix::zeros(3, 3));
        assert_eq!(eig.values, vec![0.0; 3]);
    }
}
