//! Activation-space similarity baselines and pointwise local-geometry controls.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::spd::{
    airm_distance, check_dims, format_f64, matrix_inv_sqrt, relative_eigen, SpdMatrix, SymMatrix,
};

/// `n×m` responses: rows are stimuli, columns are units.
#[derive(Clone, Debug, PartialEq)]
pub struct ActivationMatrix {
    data: DMatrix<f64>,
}

impl ActivationMatrix {
    pub fn new(data: DMatrix<f64>) -> Result<Self> {
        if data.nrows() < 2 || data.ncols() == 0 {
            return Err(Error::InsufficientData(format!(
                "activation matrix needs n ≥ 2 rows and ≥ 1 column, got {}x{}",
                data.nrows(),
                data.ncols()
            )));
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidMatrix("non-finite activation".into()));
        }
        Ok(Self { data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let m = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != m) {
            return Err(Error::DimMismatch {
                expected: m,
                found: bad.len(),
            });
        }
        Self::new(DMatrix::from_fn(rows.len(), m, |i, j| rows[i][j]))
    }

    pub fn n(&self) -> usize {
        self.data.nrows()
    }

    pub fn m(&self) -> usize {
        self.data.ncols()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.data
    }

    /// Column means subtracted.
    pub fn centered(&self) -> DMatrix<f64> {
        let mut c = self.data.clone();
        for mut col in c.column_iter_mut() {
            let mean = col.mean();
            col.add_scalar_mut(-mean);
        }
        c
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for row in self.data.row_iter() {
            let f: Vec<String> = row.iter().map(|&x| format_f64(x)).collect();
            out.push_str(&f.join(","));
            out.push('\n');
        }
        out
    }

    /// Rows of comma-separated numbers; a non-numeric first line is a header.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut rows = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let parsed: std::result::Result<Vec<f64>, _> =
                line.split(',').map(|f| f.trim().parse::<f64>()).collect();
            match parsed {
                Ok(r) => rows.push(r),
                Err(_) if i == 0 => continue,
                Err(e) => return Err(Error::Parse(format!("line {}: {e}", i + 1))),
            }
        }
        Self::from_rows(&rows)
    }
}

fn check_rows(x: &ActivationMatrix, y: &ActivationMatrix) -> Result<()> {
    check_dims(x.n(), y.n())
}

/// `‖XcᵀYc‖²_F / (‖XcᵀXc‖_F ‖YcᵀYc‖_F)`.
pub fn linear_cka(x: &ActivationMatrix, y: &ActivationMatrix) -> Result<f64> {
    check_rows(x, y)?;
    let xc = x.centered();
    let yc = y.centered();
    let xx = (xc.transpose() * &xc).norm();
    let yy = (yc.transpose() * &yc).norm();
    if !(xx > 0.0 && yy > 0.0) {
        return Err(Error::DegenerateActivations("zero centered activations".into()));
    }
    let xy = (xc.transpose() * &yc).norm_squared();
    Ok((xy / (xx * yy)).clamp(0.0, 1.0))
}

/// Linear CKA on raw activations without centering, sensitive to offsets.
pub fn linear_cka_uncentered(x: &ActivationMatrix, y: &ActivationMatrix) -> Result<f64> {
    check_rows(x, y)?;
    let (xr, yr) = (x.as_matrix(), y.as_matrix());
    let xx = (xr.transpose() * xr).norm();
    let yy = (yr.transpose() * yr).norm();
    if !(xx > 0.0 && yy > 0.0) {
        return Err(Error::DegenerateActivations("zero activations".into()));
    }
    Ok((xr.transpose() * yr).norm_squared() / (xx * yy))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Bandwidth {
    /// Median pairwise Euclidean distance of each matrix's rows.
    Median,
    Fixed(f64),
}

fn pairwise_sq_distances(x: &DMatrix<f64>) -> DMatrix<f64> {
    let n = x.nrows();
    DMatrix::from_fn(n, n, |i, j| (x.row(i) - x.row(j)).norm_squared())
}

/// Median of the off-diagonal pairwise distances.
pub fn median_distance(x: &ActivationMatrix) -> f64 {
    let d2 = pairwise_sq_distances(x.as_matrix());
    let n = x.n();
    let mut d: Vec<f64> = (0..n)
        .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
        .map(|(i, j)| d2[(i, j)].sqrt())
        .collect();
    d.sort_by(f64::total_cmp);
    let mid = d.len() / 2;
    if d.len() % 2 == 1 {
        d[mid]
    } else {
        (d[mid - 1] + d[mid]) / 2.0
    }
}

/// `K_ij = exp(−‖x_i − x_j‖² / 2σ²)`.
pub fn rbf_gram(x: &ActivationMatrix, bandwidth: Bandwidth) -> Result<DMatrix<f64>> {
    let sigma = match bandwidth {
        Bandwidth::Median => median_distance(x),
        Bandwidth::Fixed(s) => s,
    };
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::DegenerateActivations(format!("RBF bandwidth {sigma} is not positive")));
    }
    Ok(pairwise_sq_distances(x.as_matrix()).map(|d2| (-d2 / (2.0 * sigma * sigma)).exp()))
}

fn double_center(mut k: DMatrix<f64>) -> DMatrix<f64> {
    let n = k.nrows();
    let row_means: Vec<f64> = (0..n).map(|i| k.row(i).mean()).collect();
    let col_means: Vec<f64> = (0..n).map(|j| k.column(j).mean()).collect();
    let grand = row_means.iter().sum::<f64>() / n as f64;
    for i in 0..n {
        for j in 0..n {
            k[(i, j)] += grand - row_means[i] - col_means[j];
        }
    }
    k
}

/// CKA on doubly centered RBF Gram matrices.
pub fn rbf_cka(x: &ActivationMatrix, y: &ActivationMatrix, bandwidth: Bandwidth) -> Result<f64> {
    check_rows(x, y)?;
    let kx = double_center(rbf_gram(x, bandwidth)?);
    let ky = double_center(rbf_gram(y, bandwidth)?);
    let xx = kx.norm();
    let yy = ky.norm();
    if !(xx > 0.0 && yy > 0.0) {
        return Err(Error::DegenerateActivations("constant RBF Gram matrix".into()));
    }
    Ok((kx.component_mul(&ky).sum() / (xx * yy)).clamp(0.0, 1.0))
}

fn zero_pad_cols(m: DMatrix<f64>, cols: usize) -> DMatrix<f64> {
    let (r, c) = m.shape();
    if c >= cols {
        return m;
    }
    m.resize(r, cols, 0.0)
}

/// `min_Q ‖Xc/‖Xc‖ − Yc Q/‖Yc‖‖_F` over orthogonal `Q`, equal to
/// `√(2 − 2‖X̂ᵀŶ‖_*)`. Narrower matrices are zero-padded.
pub fn procrustes_distance(x: &ActivationMatrix, y: &ActivationMatrix) -> Result<f64> {
    check_rows(x, y)?;
    let width = x.m().max(y.m());
    let xc = zero_pad_cols(x.centered(), width);
    let yc = zero_pad_cols(y.centered(), width);
    let (nx, ny) = (xc.norm(), yc.norm());
    if !(nx > 0.0 && ny > 0.0) {
        return Err(Error::DegenerateActivations("zero centered activations".into()));
    }
    let cross = (xc / nx).transpose() * (yc / ny);
    let nuclear: f64 = cross.singular_values().iter().sum();
    Ok((2.0 - 2.0 * nuclear).max(0.0).sqrt())
}

/// Default ridge for CCA, relative to `Tr(C)/m` of each covariance.
pub const DEFAULT_CCA_RIDGE: f64 = 1e-6;

fn covariance_whitener(c: DMatrix<f64>, ridge: Option<f64>) -> Result<DMatrix<f64>> {
    let m = c.nrows();
    let mut c = c;
    match ridge {
        Some(eps) => {
            let shift = eps * c.trace() / m as f64;
            for i in 0..m {
                c[(i, i)] += shift;
            }
        }
        None => {
            let eig = SymMatrix::new(c.clone())?.eigen();
            let tol = 1e-10 * eig.max().max(0.0) * m as f64;
            let rank = eig.values.iter().filter(|&&v| v > tol).count();
            if rank < m {
                return Err(Error::RankDeficient { requested: m, rank });
            }
        }
    }
    let spd = SpdMatrix::from_matrix(c).map_err(|_| Error::RankDeficient {
        requested: m,
        rank: 0,
    })?;
    Ok(matrix_inv_sqrt(&spd).as_matrix().clone())
}

/// Mean squared canonical correlation over `min(m_x, m_y)` pairs. With
/// `ridge = None` rank-deficient covariances are rejected.
pub fn cca_r2(x: &ActivationMatrix, y: &ActivationMatrix, ridge: Option<f64>) -> Result<f64> {
    check_rows(x, y)?;
    let n = x.n() as f64;
    let xc = x.centered();
    let yc = y.centered();
    let wx = covariance_whitener(xc.transpose() * &xc / n, ridge)?;
    let wy = covariance_whitener(yc.transpose() * &yc / n, ridge)?;
    let cxy = xc.transpose() * &yc / n;
    let t = wx * cxy * wy;
    let s = t.singular_values();
    let r = x.m().min(y.m());
    let mut sv: Vec<f64> = s.iter().map(|v| v.min(1.0)).collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    Ok(sv.iter().take(r).map(|v| v * v).sum::<f64>() / r as f64)
}

/// Mean of per-image AIRM distances between paired lifted metrics.
pub fn pw_airm(a: &[SpdMatrix], b: &[SpdMatrix]) -> Result<f64> {
    check_dims(a.len(), b.len())?;
    if a.is_empty() {
        return Err(Error::InvalidArgument("no pointwise metrics".into()));
    }
    let total = a
        .iter()
        .zip(b)
        .map(|(x, y)| airm_distance(x, y))
        .sum::<Result<f64>>()?;
    Ok(total / a.len() as f64)
}

/// `1 − √(λ_min/λ_max)` of the generalized eigenvalues of `(A, B)`.
pub fn msa_spectral_ratio(a: &SpdMatrix, b: &SpdMatrix) -> Result<f64> {
    let eig = relative_eigen(a, b)?;
    Ok((1.0 - (eig.min() / eig.max()).sqrt()).max(0.0))
}

pub fn msa_pointwise(a: &[SpdMatrix], b: &[SpdMatrix]) -> Result<f64> {
    check_dims(a.len(), b.len())?;
    if a.is_empty() {
        return Err(Error::InvalidArgument("no pointwise metrics".into()));
    }
    let total = a
        .iter()
        .zip(b)
        .map(|(x, y)| msa_spectral_ratio(x, y))
        .sum::<Result<f64>>()?;
    Ok(total / a.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random::{gaussian_matrix, random_orthonormal, random_spd, seeded};
    use proptest::prelude::*;

    fn act(m: DMatrix<f64>) -> ActivationMatrix {
        ActivationMatrix::new(m).unwrap()
    }

    #[test]
    fn linear_cka_invariances() {
        let mut rng = seeded(1);
        let x = act(gaussian_matrix(&mut rng, 30, 5));
        assert!((linear_cka(&x, &x).unwrap() - 1.0).abs() < 1e-12);
        let q = random_orthonormal(&mut rng, 5, 5);
        let xq = act(x.as_matrix() * q);
        assert!((linear_cka(&x, &xq).unwrap() - 1.0).abs() < 1e-12);
        let mut shifted = x.as_matrix() * 3.5;
        for (j, mut col) in shifted.column_iter_mut().enumerate() {
            col.add_scalar_mut(j as f64 - 2.0);
        }
        assert!((linear_cka(&x, &act(shifted)).unwrap() - 1.0).abs() < 1e-12);
        let zero = act(DMatrix::from_element(30, 2, 1.0));
        assert!(matches!(linear_cka(&x, &zero), Err(Error::DegenerateActivations(_))));
    }

    #[test]
    fn rbf_cka_properties() {
        let mut rng = seeded(2);
        let x = gaussian_matrix(&mut rng, 12, 3);
        let y = gaussian_matrix(&mut rng, 12, 4);
        let (ax, ay) = (act(x.clone()), act(y.clone()));
        assert!((rbf_cka(&ax, &ax, Bandwidth::Median).unwrap() - 1.0).abs() < 1e-12);
        let base = rbf_cka(&ax, &ay, Bandwidth::Median).unwrap();
        let perm: Vec<usize> = (0..12).rev().collect();
        let px = act(x.select_rows(&perm));
        let py = act(y.select_rows(&perm));
        assert!((rbf_cka(&px, &py, Bandwidth::Median).unwrap() - base).abs() < 1e-12);
        assert!((0.0..=1.0).contains(&base));
    }

    #[test]
    fn rbf_gram_three_points() {
        // pairwise distances 3, 4, 5: median 4
        let x = act(DMatrix::from_row_slice(3, 2, &[0.0, 0.0, 3.0, 0.0, 0.0, 4.0]));
        assert_eq!(median_distance(&x), 4.0);
        let k = rbf_gram(&x, Bandwidth::Median).unwrap();
        assert!((k[(0, 1)] - (-9.0f64 / 32.0).exp()).abs() < 1e-15);
        assert!((k[(0, 2)] - (-0.5f64).exp()).abs() < 1e-15);
        assert!((k[(1, 2)] - (-25.0f64 / 32.0).exp()).abs() < 1e-15);
        assert_eq!(k[(1, 1)], 1.0);
    }

    #[test]
    fn procrustes_and_cca_identities() {
        let mut rng = seeded(3);
        let x = act(gaussian_matrix(&mut rng, 25, 4));
        assert!(procrustes_distance(&x, &x).unwrap() < 1e-7);
        let q = random_orthonormal(&mut rng, 4, 4);
        assert!(procrustes_distance(&x, &act(x.as_matrix() * q)).unwrap() < 1e-7);
        assert!((cca_r2(&x, &x, None).unwrap() - 1.0).abs() < 1e-10);
        let y = act(gaussian_matrix(&mut rng, 25, 4));
        let d = procrustes_distance(&x, &y).unwrap();
        assert!(d > 0.1 && d <= 2f64.sqrt());
    }

    #[test]
    fn cca_shared_and_independent_direction() {
        // u, v, w mutually orthogonal and centered
        let n = 8;
        let u: Vec<f64> = (0..n).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let v: Vec<f64> = (0..n).map(|i| if (i / 2) % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let w: Vec<f64> = (0..n).map(|i| if (i / 4) % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let x = act(DMatrix::from_fn(n, 2, |i, j| if j == 0 { u[i] } else { v[i] }));
        let y = act(DMatrix::from_fn(n, 2, |i, j| if j == 0 { u[i] } else { w[i] }));
        assert!((cca_r2(&x, &y, None).unwrap() - 0.5).abs() < 1e-12);
        let deficient = act(DMatrix::from_fn(n, 2, |i, _| u[i]));
        assert!(matches!(cca_r2(&deficient, &y, None), Err(Error::RankDeficient { .. })));
        let r = cca_r2(&deficient, &y, Some(DEFAULT_CCA_RIDGE)).unwrap();
        assert!(r > 0.49 && r <= 0.5 + 1e-9, "{r}");
    }

    #[test]
    fn pw_airm_cases() {
        let mut rng = seeded(4);
        let a: Vec<SpdMatrix> = (0..3).map(|_| random_spd(&mut rng, 3, 0.1)).collect();
        assert!(pw_airm(&a, &a).unwrap().abs() < 1e-12);
        let b: Vec<SpdMatrix> = (0..3).map(|_| random_spd(&mut rng, 3, 0.1)).collect();
        assert_eq!(pw_airm(&a[..1], &b[..1]).unwrap(), airm_distance(&a[0], &b[0]).unwrap());
        // distances 1 and 3 at k = 1
        let one = SpdMatrix::from_diagonal(&[1.0]).unwrap();
        let e1 = SpdMatrix::from_diagonal(&[1f64.exp()]).unwrap();
        let e3 = SpdMatrix::from_diagonal(&[3f64.exp()]).unwrap();
        let mean = pw_airm(&[one.clone(), one], &[e1, e3]).unwrap();
        assert!((mean - 2.0).abs() < 1e-12);
        assert!(pw_airm(&a, &b[..2]).is_err());
    }

    #[test]
    fn spectral_ratio_cases() {
        let i2 = SpdMatrix::identity(2);
        assert_eq!(msa_spectral_ratio(&i2, &i2).unwrap(), 0.0);
        let b = SpdMatrix::from_diagonal(&[1.0, 4.0]).unwrap();
        assert!((msa_spectral_ratio(&i2, &b).unwrap() - 0.5).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn conformal_blindness(seed in 0u64..1000, log_c in -6.9f64..6.9) {
            let a = random_spd(&mut seeded(seed), 4, 0.1);
            let c = log_c.exp();
            let ca = a.scaled(c).unwrap();
            prop_assert!(msa_spectral_ratio(&a, &ca).unwrap().abs() < 1e-12);
            let d = airm_distance(&a, &ca).unwrap();
            prop_assert!((d - 2.0 * log_c.abs()).abs() < 1e-10 * (1.0 + log_c.abs()));
        }
    }

    #[test]
    fn extreme_spectrum_collapse() {
        // same relative condition number, different interior spectra
        let a = SpdMatrix::identity(3);
        let b1 = SpdMatrix::from_diagonal(&[1.0, 1.5, 4.0]).unwrap();
        let b2 = SpdMatrix::from_diagonal(&[1.0, 3.5, 4.0]).unwrap();
        let s1 = msa_spectral_ratio(&a, &b1).unwrap();
        let s2 = msa_spectral_ratio(&a, &b2).unwrap();
        assert!((s1 - s2).abs() < 1e-15);
        assert!((airm_distance(&a, &b1).unwrap() - airm_distance(&a, &b2).unwrap()).abs() > 0.1);
    }

    #[test]
    fn csv_with_and_without_header() {
        let x = act(DMatrix::from_row_slice(2, 2, &[1.0, 2.5, -3.0, 0.125]));
        assert_eq!(ActivationMatrix::from_csv(&x.to_csv()).unwrap(), x);
        let with_header = format!("u0,u1\n{}", x.to_csv());
        assert_eq!(ActivationMatrix::from_csv(&with_header).unwrap(), x);
        assert!(ActivationMatrix::from_csv("1,2\n3,x\n").is_err());
    }
}
