use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::random::{gaussian_matrix, orthonormalize, seeded};
use crate::spd::{format_f64, SymMatrix};

const ORTHONORMAL_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FamilyKind {
    Random,
    Pca,
    CoordinateSelection,
    User,
}

/// Orthonormal `d×k` basis spanning the admissible perturbations.
#[derive(Clone, Debug, PartialEq)]
pub struct PerturbationFamily {
    id: String,
    basis: DMatrix<f64>,
    kind: FamilyKind,
    parent_id: Option<String>,
    explained_variance: Option<f64>,
}

/// `max |PᵀP − I|`.
pub fn orthonormality_defect(basis: &DMatrix<f64>) -> f64 {
    let k = basis.ncols();
    (basis.transpose() * basis - DMatrix::identity(k, k)).amax()
}

impl PerturbationFamily {
    pub fn new(id: impl Into<String>, basis: DMatrix<f64>, kind: FamilyKind) -> Result<Self> {
        if basis.ncols() == 0 || basis.ncols() > basis.nrows() {
            return Err(Error::InvalidArgument(format!(
                "family basis must be d×k with 1 ≤ k ≤ d, got {}×{}",
                basis.nrows(),
                basis.ncols()
            )));
        }
        let deviation = orthonormality_defect(&basis);
        if !(deviation <= ORTHONORMAL_TOL) {
            return Err(Error::NotOrthonormal { deviation });
        }
        Ok(Self {
            id: id.into(),
            basis,
            kind,
            parent_id: None,
            explained_variance: None,
        })
    }

    /// The identity family on `R^d`.
    pub fn identity(d: usize) -> Self {
        Self::new(format!("identity-d{d}"), DMatrix::identity(d, d), FamilyKind::User)
            .expect("identity is orthonormal")
    }

    /// Coordinate-selection family picking the listed axes of `R^d`.
    pub fn coordinates(d: usize, axes: &[usize]) -> Result<Self> {
        let mut basis = DMatrix::zeros(d, axes.len());
        for (col, &axis) in axes.iter().enumerate() {
            if axis >= d {
                return Err(Error::InvalidArgument(format!("axis {axis} outside R^{d}")));
            }
            basis[(axis, col)] = 1.0;
        }
        let names: Vec<String> = axes.iter().map(|a| a.to_string()).collect();
        Self::new(
            format!("coords-d{d}-{}", names.join("_")),
            basis,
            FamilyKind::CoordinateSelection,
        )
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn ambient_dim(&self) -> usize {
        self.basis.nrows()
    }

    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    pub fn kind(&self) -> FamilyKind {
        self.kind
    }

    pub fn parent_id(&self) -> Option<&str> {
        self.parent_id.as_deref()
    }

    /// Cumulative explained variance of the retained directions (PCA only).
    pub fn explained_variance(&self) -> Option<f64> {
        self.explained_variance
    }

    /// `P v` for a family-coordinate vector `v`.
    pub fn embed(&self, v: &[f64]) -> Result<Vec<f64>> {
        crate::spd::check_dims(self.dim(), v.len())?;
        Ok((0..self.ambient_dim())
            .map(|i| (0..self.dim()).map(|j| self.basis[(i, j)] * v[j]).sum())
            .collect())
    }

    /// Nested restriction to the leading `k` columns.
    pub fn restrict(&self, k: usize) -> Result<Self> {
        if k == 0 || k > self.dim() {
            return Err(Error::InvalidRestriction {
                requested: k,
                available: self.dim(),
            });
        }
        Ok(Self {
            id: format!("{}/k{k}", self.id),
            basis: self.basis.columns(0, k).into_owned(),
            kind: self.kind,
            parent_id: Some(self.id.clone()),
            explained_variance: None,
        })
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for i in 0..self.ambient_dim() {
            let row: Vec<String> = (0..self.dim()).map(|j| format_f64(self.basis[(i, j)])).collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }

    /// Parses `d` rows of `k` columns and checks orthonormality.
    pub fn from_csv(id: impl Into<String>, text: &str) -> Result<Self> {
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let row = line
                .split(',')
                .map(|f| {
                    f.trim()
                        .parse::<f64>()
                        .map_err(|e| Error::Parse(format!("line {}: '{}': {e}", lineno + 1, f.trim())))
                })
                .collect::<Result<Vec<f64>>>()?;
            if let Some(first) = rows.first() {
                if first.len() != row.len() {
                    return Err(Error::Parse(format!(
                        "line {}: expected {} columns, found {}",
                        lineno + 1,
                        first.len(),
                        row.len()
                    )));
                }
            }
            rows.push(row);
        }
        if rows.is_empty() {
            return Err(Error::Parse("family file is empty".into()));
        }
        let basis = DMatrix::from_fn(rows.len(), rows[0].len(), |i, j| rows[i][j]);
        Self::new(id, basis, FamilyKind::User)
    }
}

/// Random parent family on `R^d` with `k_max` columns: QR of a seeded
/// Gaussian matrix with the diagonal of R made positive.
pub fn make_random_family(d: usize, k_max: usize, seed: u64) -> Result<PerturbationFamily> {
    if k_max == 0 || k_max > d {
        return Err(Error::InvalidRestriction {
            requested: k_max,
            available: d,
        });
    }
    let mut rng = seeded(seed);
    let basis = orthonormalize(gaussian_matrix(&mut rng, d, k_max));
    PerturbationFamily::new(format!("random-d{d}-k{k_max}-s{seed}"), basis, FamilyKind::Random)
}

/// Top-`k` principal directions of the dataset covariance `E[(x−μ)(x−μ)ᵀ]`
/// (biased, `1/n` normalization).
pub fn make_pca_family(data: &Dataset, k: usize) -> Result<PerturbationFamily> {
    let n = data.len();
    if n < 2 {
        return Err(Error::InsufficientData(format!(
            "PCA needs at least 2 samples, got {n}"
        )));
    }
    let d = data.dim();
    if k == 0 || k > d {
        return Err(Error::InvalidRestriction {
            requested: k,
            available: d,
        });
    }
    let mut mean = vec![0.0; d];
    for s in data.samples() {
        for (m, x) in mean.iter_mut().zip(s) {
            *m += x;
        }
    }
    for m in mean.iter_mut() {
        *m /= n as f64;
    }
    let mut cov = DMatrix::zeros(d, d);
    for s in data.samples() {
        let centered: Vec<f64> = s.iter().zip(&mean).map(|(x, m)| x - m).collect();
        for i in 0..d {
            for j in 0..d {
                cov[(i, j)] += centered[i] * centered[j];
            }
        }
    }
    cov /= n as f64;
    let eig = SymMatrix::new(cov)?.eigen();
    let total: f64 = eig.values.iter().map(|x| x.max(0.0)).sum();
    let top = eig.max();
    let rank_tol = 1e-12 * top.max(0.0) * d as f64;
    let rank = eig.values.iter().filter(|&&x| x > rank_tol).count();
    if k > rank || !(total > 0.0) {
        return Err(Error::RankDeficient { requested: k, rank });
    }
    let mut basis = DMatrix::zeros(d, k);
    let mut retained = 0.0;
    for col in 0..k {
        let src = d - 1 - col;
        basis.set_column(col, &eig.vectors.column(src));
        retained += eig.values[src];
    }
    let mut family = PerturbationFamily::new(format!("pca-d{d}-k{k}"), basis, FamilyKind::Pca)?;
    family.explained_variance = Some(retained / total);
    Ok(family)
}

/// Cosines of the principal angles between two spans, descending.
pub fn principal_cosines(a: &PerturbationFamily, b: &PerturbationFamily) -> Result<Vec<f64>> {
    crate::spd::check_dims(a.ambient_dim(), b.ambient_dim())?;
    let m = a.basis().transpose() * b.basis();
    let mut s: Vec<f64> = m.svd(false, false).singular_values.iter().copied().collect();
    s.sort_by(|x, y| y.total_cmp(x));
    Ok(s)
}
