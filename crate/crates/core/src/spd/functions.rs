use super::{pd_tolerance, EigenDecomposition, SpdMatrix, SymMatrix};
use crate::error::{Error, Result};

/// Default relative ridge of the trace-scaled lift used before comparing
/// model summaries.
pub const DEFAULT_EPS_REG: f64 = 1e-4;

/// Default eigenvalue floor for estimated noise covariances.
pub const DEFAULT_EPS_SPD: f64 = 1e-6;

fn clamped(a: &SpdMatrix) -> impl Fn(f64) -> f64 {
    let tol = pd_tolerance(a.as_sym());
    move |x| x.max(tol)
}

pub fn matrix_log(a: &SpdMatrix) -> SymMatrix {
    let clamp = clamped(a);
    let m = a.eigen().map_spectrum(|x| clamp(x).ln());
    SymMatrix::new(m).expect("log of a finite SPD spectrum is finite")
}

pub fn matrix_sqrt(a: &SpdMatrix) -> SpdMatrix {
    let clamp = clamped(a);
    spectral(a.eigen(), |x| clamp(x).sqrt())
}

pub fn matrix_inv_sqrt(a: &SpdMatrix) -> SpdMatrix {
    let clamp = clamped(a);
    spectral(a.eigen(), |x| 1.0 / clamp(x).sqrt())
}

pub fn matrix_inverse(a: &SpdMatrix) -> SpdMatrix {
    let clamp = clamped(a);
    spectral(a.eigen(), |x| 1.0 / clamp(x))
}

/// Matrix exponential of a symmetric matrix (always SPD).
pub fn matrix_exp(a: &SymMatrix) -> Result<SpdMatrix> {
    let eig = a.eigen();
    if eig.max() > 700.0 {
        return Err(Error::InvalidMatrix(format!(
            "exponential overflows (largest eigenvalue {})",
            eig.max()
        )));
    }
    Ok(spectral(&eig, f64::exp))
}

fn spectral(eig: &EigenDecomposition, f: impl Fn(f64) -> f64) -> SpdMatrix {
    let values: Vec<f64> = eig.values.iter().map(|&x| f(x)).collect();
    // f is monotone on every call site, so ascending order is kept or reversed
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&i, &j| values[i].total_cmp(&values[j]).then(i.cmp(&j)));
    let sorted_values = order.iter().map(|&i| values[i]).collect();
    let vectors = eig.vectors.select_columns(order.iter());
    SpdMatrix::from_spectrum(sorted_values, vectors).expect("positive spectrum")
}

/// Trace-scaled SPD lift `A + ε·(Tr A / k)·I` of a PSD summary.
///
/// Negative eigenvalues down to `-1e-9·Tr A` are accepted as round-off.
pub fn spd_lift(a: &SymMatrix, eps_reg: f64) -> Result<SpdMatrix> {
    if !(eps_reg > 0.0) || !eps_reg.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "eps_reg must be positive, got {eps_reg}"
        )));
    }
    let trace = a.trace();
    if !(trace > 0.0) {
        return Err(Error::ZeroSummary { trace });
    }
    let eig = a.eigen();
    if eig.min() < -1e-9 * trace {
        return Err(Error::NotPsd {
            min_eigenvalue: eig.min(),
        });
    }
    let k = a.dim();
    let shift = eps_reg * trace / k as f64;
    let mut data = a.as_matrix().clone();
    for i in 0..k {
        data[(i, i)] += shift;
    }
    let sym = SymMatrix::new(data)?;
    let values: Vec<f64> = eig.values.iter().map(|x| x + shift).collect();
    let tol = pd_tolerance(&sym);
    if values[0] <= tol {
        return Err(Error::NotPositiveDefinite {
            min_eigenvalue: values[0],
            tolerance: tol,
        });
    }
    Ok(SpdMatrix::from_parts(
        sym,
        EigenDecomposition {
            values,
            vectors: eig.vectors,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random::random_spd;
    use nalgebra::DMatrix;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rel_frob(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
        (a - b).norm() / b.norm()
    }

    #[test]
    fn log_of_identity_is_zero() {
        let l = matrix_log(&SpdMatrix::identity(3));
        assert_eq!(l.max_abs(), 0.0);
    }

    #[test]
    fn sqrt_of_diagonal() {
        let a = SpdMatrix::from_diagonal(&[4.0, 9.0]).unwrap();
        let r = matrix_sqrt(&a);
        assert!((r.as_matrix() - DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 3.0])).abs().max() < 1e-15);
    }

    #[test]
    fn round_trips() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for k in [1usize, 2, 4, 7, 12] {
            let a = random_spd(&mut rng, k, 1e-2);
            let inv_sqrt = matrix_inv_sqrt(&a);
            let whitened = inv_sqrt.as_matrix() * a.as_matrix() * inv_sqrt.as_matrix();
            assert!(rel_frob(&whitened, &DMatrix::identity(k, k)) < 1e-8);

            let r = matrix_sqrt(&a);
            assert!(rel_frob(&(r.as_matrix() * r.as_matrix()), a.as_matrix()) < 1e-8);

            let back = matrix_exp(&matrix_log(&a)).unwrap();
            assert!(rel_frob(back.as_matrix(), a.as_matrix()) < 1e-8);

            let inv = matrix_inverse(&a);
            assert!(rel_frob(&(inv.as_matrix() * a.as_matrix()), &DMatrix::identity(k, k)) < 1e-8);
        }
    }

    #[test]
    fn lift_examples() {
        let lifted = spd_lift(&SymMatrix::identity(2), 0.1).unwrap();
        assert!((lifted.as_matrix() - DMatrix::identity(2, 2) * 1.1).abs().max() < 1e-15);

        let lifted = spd_lift(&SymMatrix::from_diagonal(&[2.0, 0.0]).unwrap(), 1e-4).unwrap();
        assert!((lifted.as_sym().get(0, 0) - 2.0001).abs() < 1e-15);
        assert!((lifted.as_sym().get(1, 1) - 0.0001).abs() < 1e-18);
        assert_eq!(DEFAULT_EPS_REG, 1e-4);
    }

    #[test]
    fn lift_errors() {
        assert!(matches!(
            spd_lift(&SymMatrix::zeros(3), 1e-4),
            Err(Error::ZeroSummary { .. })
        ));
        assert!(matches!(
            spd_lift(&SymMatrix::from_diagonal(&[2.0, -0.5]).unwrap(), 1e-4),
            Err(Error::NotPsd { .. })
        ));
        assert!(spd_lift(&SymMatrix::identity(2), 0.0).is_err());
    }

    #[test]
    fn lift_is_scale_equivariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let a = random_spd(&mut rng, 5, 0.0).into_sym();
        for c in [0.01, 3.0, 250.0] {
            let lhs = spd_lift(&a.scaled(c), 1e-4).unwrap();
            let rhs = spd_lift(&a, 1e-4).unwrap();
            let diff = (lhs.as_matrix() - rhs.as_matrix() * c).abs().max();
            assert!(diff <= 1e-12 * c * a.max_abs());
        }
    }
}
