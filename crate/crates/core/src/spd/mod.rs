//! Symmetric and SPD operators, spectral functions, manifold distances, and
//! the certificates that tie a distance to bounds on task values.

mod distance;
mod eigen;
mod functions;
mod serial;
pub use serial::format_f64;

pub use distance::{
    airm_distance, certificate_bounds, dinf_distance, dinf_variational_check,
    log_euclidean_distance, relative_eigen, sras_score, Certificate, VariationalCheck,
};
pub use eigen::{jacobi_eigen, EigenDecomposition};
pub use functions::{
    matrix_exp, matrix_inv_sqrt, matrix_inverse, matrix_log, matrix_sqrt, spd_lift,
    DEFAULT_EPS_REG, DEFAULT_EPS_SPD,
};

use nalgebra::DMatrix;

use crate::error::{Error, Result};
pub(crate) use eigen::symmetrize_in_place;

/// Relative scale of the positive-definiteness tolerance: `tol_pd = 1e-12·Tr/k`.
pub const PD_RELATIVE_TOLERANCE: f64 = 1e-12;

/// A dense `k×k` symmetric matrix with finite entries.
///
/// Construction symmetrizes the input as `(A + Aᵀ)/2`, so `entries[i][j]`
/// and `entries[j][i]` are bit-identical afterwards.
#[derive(Clone, Debug, PartialEq)]
pub struct SymMatrix {
    data: DMatrix<f64>,
}

impl SymMatrix {
    pub fn new(mut data: DMatrix<f64>) -> Result<Self> {
        if data.nrows() != data.ncols() {
            return Err(Error::InvalidMatrix(format!(
                "expected a square matrix, got {}x{}",
                data.nrows(),
                data.ncols()
            )));
        }
        if data.nrows() == 0 {
            return Err(Error::InvalidMatrix("dimension must be at least 1".into()));
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidMatrix("non-finite entry".into()));
        }
        symmetrize_in_place(&mut data);
        Ok(Self { data })
    }

    pub fn from_row_major(k: usize, entries: &[f64]) -> Result<Self> {
        if entries.len() != k * k {
            return Err(Error::DimMismatch {
                expected: k * k,
                found: entries.len(),
            });
        }
        Self::new(DMatrix::from_row_slice(k, k, entries))
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let k = rows.len();
        if let Some(bad) = rows.iter().find(|r| r.len() != k) {
            return Err(Error::DimMismatch {
                expected: k,
                found: bad.len(),
            });
        }
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        Self::from_row_major(k, &flat)
    }

    pub fn identity(k: usize) -> Self {
        Self {
            data: DMatrix::identity(k, k),
        }
    }

    pub fn zeros(k: usize) -> Self {
        Self {
            data: DMatrix::zeros(k, k),
        }
    }

    pub fn from_diagonal(diag: &[f64]) -> Result<Self> {
        let k = diag.len();
        let mut data = DMatrix::zeros(k, k);
        for (i, &d) in diag.iter().enumerate() {
            data[(i, i)] = d;
        }
        Self::new(data)
    }

    /// `v vᵀ`.
    pub fn outer(v: &[f64]) -> Result<Self> {
        let k = v.len();
        Self::new(DMatrix::from_fn(k, k, |i, j| v[i] * v[j]))
    }

    pub fn dim(&self) -> usize {
        self.data.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[(i, j)]
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.data
    }

    pub fn trace(&self) -> f64 {
        self.data.trace()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |m, x| m.max(x.abs()))
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.norm()
    }

    /// Row-major copy of the entries.
    pub fn to_row_major(&self) -> Vec<f64> {
        let k = self.dim();
        (0..k * k).map(|idx| self.data[(idx / k, idx % k)]).collect()
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        let k = self.dim();
        (0..k)
            .map(|i| (0..k).map(|j| self.data[(i, j)]).collect())
            .collect()
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            data: &self.data * c,
        }
    }

    pub fn add(&self, other: &SymMatrix) -> Result<Self> {
        check_dims(self.dim(), other.dim())?;
        Ok(Self {
            data: &self.data + &other.data,
        })
    }

    pub fn sub(&self, other: &SymMatrix) -> Result<Self> {
        check_dims(self.dim(), other.dim())?;
        Ok(Self {
            data: &self.data - &other.data,
        })
    }

    /// `X A Xᵀ` for a `m×k` matrix `X`.
    pub fn congruence(&self, x: &DMatrix<f64>) -> Result<Self> {
        check_dims(self.dim(), x.ncols())?;
        Self::new(x * &self.data * x.transpose())
    }

    /// `Tr(C A)`.
    pub fn trace_product(&self, other: &SymMatrix) -> Result<f64> {
        check_dims(self.dim(), other.dim())?;
        Ok(self.data.component_mul(&other.data).sum())
    }

    pub fn quadratic_form(&self, v: &[f64]) -> Result<f64> {
        check_dims(self.dim(), v.len())?;
        let k = self.dim();
        let mut acc = 0.0;
        for i in 0..k {
            let mut row = 0.0;
            for j in 0..k {
                row += self.data[(i, j)] * v[j];
            }
            acc += v[i] * row;
        }
        Ok(acc)
    }

    pub fn eigen(&self) -> EigenDecomposition {
        jacobi_eigen(&self.data)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigen().min()
    }

    /// Mean of several matrices of equal dimension.
    pub fn mean<'a>(items: impl IntoIterator<Item = &'a SymMatrix>) -> Result<Self> {
        let mut iter = items.into_iter();
        let first = iter
            .next()
            .ok_or_else(|| Error::InvalidArgument("mean of an empty list".into()))?;
        let mut acc = first.data.clone();
        let mut count = 1usize;
        for m in iter {
            check_dims(first.dim(), m.dim())?;
            acc += &m.data;
            count += 1;
        }
        Self::new(acc / count as f64)
    }
}

/// A symmetric matrix whose smallest eigenvalue exceeds `1e-12·Tr/k`.
///
/// The eigendecomposition is computed once at construction and reused by
/// every spectral function.
#[derive(Clone, Debug)]
pub struct SpdMatrix {
    sym: SymMatrix,
    eig: EigenDecomposition,
}

impl PartialEq for SpdMatrix {
    fn eq(&self, other: &Self) -> bool {
        self.sym == other.sym
    }
}

impl SpdMatrix {
    pub fn new(sym: SymMatrix) -> Result<Self> {
        let eig = sym.eigen();
        let tol = pd_tolerance(&sym);
        if !(sym.trace() > 0.0) || eig.min() <= tol {
            return Err(Error::NotPositiveDefinite {
                min_eigenvalue: eig.min(),
                tolerance: tol,
            });
        }
        Ok(Self { sym, eig })
    }

    pub fn from_matrix(data: DMatrix<f64>) -> Result<Self> {
        Self::new(SymMatrix::new(data)?)
    }

    pub fn from_diagonal(diag: &[f64]) -> Result<Self> {
        Self::new(SymMatrix::from_diagonal(diag)?)
    }

    pub fn identity(k: usize) -> Self {
        let sym = SymMatrix::identity(k);
        let eig = sym.eigen();
        Self { sym, eig }
    }

    /// Builds from a spectral decomposition whose eigenvalues are already
    /// known to be positive.
    pub(crate) fn from_spectrum(values: Vec<f64>, vectors: DMatrix<f64>) -> Result<Self> {
        let eig = EigenDecomposition { values, vectors };
        let data = eig.reconstruct();
        let sym = SymMatrix::new(data)?;
        if eig.min() <= 0.0 {
            return Err(Error::NotPositiveDefinite {
                min_eigenvalue: eig.min(),
                tolerance: 0.0,
            });
        }
        Ok(Self { sym, eig })
    }

    pub(crate) fn from_parts(sym: SymMatrix, eig: EigenDecomposition) -> Self {
        Self { sym, eig }
    }

    pub fn dim(&self) -> usize {
        self.sym.dim()
    }

    pub fn as_sym(&self) -> &SymMatrix {
        &self.sym
    }

    pub fn into_sym(self) -> SymMatrix {
        self.sym
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        self.sym.as_matrix()
    }

    pub fn eigen(&self) -> &EigenDecomposition {
        &self.eig
    }

    pub fn trace(&self) -> f64 {
        self.sym.trace()
    }

    pub fn scaled(&self, c: f64) -> Result<Self> {
        if !(c > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "SPD scale factor must be positive, got {c}"
            )));
        }
        let values = self.eig.values.iter().map(|x| x * c).collect();
        Ok(Self {
            sym: self.sym.scaled(c),
            eig: EigenDecomposition {
                values,
                vectors: self.eig.vectors.clone(),
            },
        })
    }
}

pub(crate) fn pd_tolerance(sym: &SymMatrix) -> f64 {
    PD_RELATIVE_TOLERANCE * sym.trace().abs() / sym.dim() as f64
}

pub(crate) fn check_dims(expected: usize, found: usize) -> Result<()> {
    if expected != found {
        Err(Error::DimMismatch { expected, found })
    } else {
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constructor_symmetrizes() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 4.0, 3.0]);
        let s = SymMatrix::new(m).unwrap();
        assert_eq!(s.get(0, 1), 3.0);
        assert_eq!(s.get(0, 1).to_bits(), s.get(1, 0).to_bits());
    }

    #[test]
    fn rejects_non_finite_and_non_square() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, f64::NAN, 0.0, 1.0]);
        assert!(matches!(SymMatrix::new(m), Err(Error::InvalidMatrix(_))));
        let m = DMatrix::<f64>::zeros(2, 3);
        assert!(matches!(SymMatrix::new(m), Err(Error::InvalidMatrix(_))));
        assert!(matches!(
            SymMatrix::from_row_major(2, &[1.0; 3]),
            Err(Error::DimMismatch { .. })
        ));
    }

    #[test]
    fn spd_rejects_singular_and_indefinite() {
        assert!(matches!(
            SpdMatrix::from_diagonal(&[1.0, 0.0]),
            Err(Error::NotPositiveDefinite { .. })
        ));
        assert!(matches!(
            SpdMatrix::from_diagonal(&[1.0, -1.0]),
            Err(Error::NotPositiveDefinite { .. })
        ));
        // below 1e-12·Tr/k
        assert!(SpdMatrix::from_diagonal(&[1.0, 1e-13]).is_err());
        assert!(SpdMatrix::from_diagonal(&[1.0, 1e-11]).is_ok());
    }

    #[test]
    fn trace_product_and_quadratic_form() {
        let a = SymMatrix::from_rows(&[vec![2.0, 1.0], vec![1.0, 3.0]]).unwrap();
        let c = SymMatrix::outer(&[1.0, -1.0]).unwrap();
        assert_eq!(a.trace_product(&c).unwrap(), 3.0);
        assert_eq!(a.quadratic_form(&[1.0, -1.0]).unwrap(), 3.0);
    }
}
