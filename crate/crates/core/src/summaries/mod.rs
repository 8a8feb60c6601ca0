//! Projected expected pullback and Fisher operators.
//!
//! A summary is the `k×k` average of `(J(x)P)ᵀ M (J(x)P)` over a dataset,
//! with `M = I` for the pullback and `M = Σ⁻¹` for the Fisher operator.

mod family;

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use family::{
    make_pca_family, make_random_family, orthonormality_defect, principal_cosines, FamilyKind,
    PerturbationFamily,
};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::repmap::DifferentiableMap;
use crate::spd::{check_dims, SpdMatrix, SymMatrix};

/// Samples per accumulation chunk. Chunk sums are combined by a fixed
/// pairwise tree, so the result does not depend on the thread count.
pub const DEFAULT_CHUNK_SIZE: usize = 64;

const PSD_SLACK: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SummaryKind {
    #[serde(rename = "G")]
    Pullback,
    #[serde(rename = "F")]
    Fisher,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum NoiseModel {
    Isotropic { sigma: f64 },
    Full { cov: SpdMatrix },
}

impl NoiseModel {
    pub fn isotropic(sigma: f64) -> Result<Self> {
        let n = NoiseModel::Isotropic { sigma };
        n.validate()?;
        Ok(n)
    }

    fn validate(&self) -> Result<()> {
        match self {
            NoiseModel::Isotropic { sigma } if !(*sigma > 0.0 && sigma.is_finite()) => Err(
                Error::InvalidArgument(format!("noise sigma must be positive, got {sigma}")),
            ),
            _ => Ok(()),
        }
    }
}

/// A `k×k` PSD sensitivity operator with its provenance.
#[derive(Clone, Debug, PartialEq)]
pub struct SensitivitySummary {
    kind: SummaryKind,
    operator: SymMatrix,
    n_samples: usize,
    family_id: String,
    noise: Option<NoiseModel>,
    class_label: Option<usize>,
}

impl SensitivitySummary {
    pub fn from_operator(
        kind: SummaryKind,
        operator: SymMatrix,
        n_samples: usize,
        family_id: impl Into<String>,
        noise: Option<NoiseModel>,
        class_label: Option<usize>,
    ) -> Result<Self> {
        if n_samples == 0 {
            return Err(Error::EmptyDataset);
        }
        if let Some(noise) = &noise {
            noise.validate()?;
        }
        check_psd(&operator)?;
        Ok(Self {
            kind,
            operator,
            n_samples,
            family_id: family_id.into(),
            noise,
            class_label,
        })
    }

    pub fn kind(&self) -> SummaryKind {
        self.kind
    }

    pub fn operator(&self) -> &SymMatrix {
        &self.operator
    }

    pub fn dim(&self) -> usize {
        self.operator.dim()
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn family_id(&self) -> &str {
        &self.family_id
    }

    pub fn noise(&self) -> Option<&NoiseModel> {
        self.noise.as_ref()
    }

    pub fn class_label(&self) -> Option<usize> {
        self.class_label
    }

    pub fn with_class_label(mut self, label: Option<usize>) -> Self {
        self.class_label = label;
        self
    }

    /// `γ = Tr/k` and `shape = operator / Tr`.
    pub fn gain_shape(&self) -> Result<(f64, SymMatrix)> {
        gain_shape(&self.operator)
    }

    /// Sample-weighted average of two summaries over the same family.
    pub fn merge(&self, other: &SensitivitySummary) -> Result<SensitivitySummary> {
        check_compatible(self, other)?;
        let (na, nb) = (self.n_samples as f64, other.n_samples as f64);
        let n = na + nb;
        let op = SymMatrix::new(
            self.operator.as_matrix() * (na / n) + other.operator.as_matrix() * (nb / n),
        )?;
        let label = if self.class_label == other.class_label {
            self.class_label
        } else {
            None
        };
        Ok(SensitivitySummary {
            operator: op,
            n_samples: self.n_samples + other.n_samples,
            class_label: label,
            ..self.clone()
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("summary serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }
}

fn check_psd(op: &SymMatrix) -> Result<()> {
    let min = op.min_eigenvalue();
    if min < -PSD_SLACK * op.trace().abs().max(f64::MIN_POSITIVE) {
        return Err(Error::NotPsd { min_eigenvalue: min });
    }
    Ok(())
}

pub(crate) fn check_compatible(a: &SensitivitySummary, b: &SensitivitySummary) -> Result<()> {
    check_dims(a.dim(), b.dim())?;
    if a.family_id != b.family_id {
        return Err(Error::FamilyMismatch(a.family_id.clone(), b.family_id.clone()));
    }
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct SummaryJson {
    kind: SummaryKind,
    k: usize,
    n_samples: usize,
    family_id: String,
    noise: Option<NoiseModel>,
    class_label: Option<usize>,
    operator: Vec<Vec<f64>>,
}

impl Serialize for SensitivitySummary {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        SummaryJson {
            kind: self.kind,
            k: self.dim(),
            n_samples: self.n_samples,
            family_id: self.family_id.clone(),
            noise: self.noise.clone(),
            class_label: self.class_label,
            operator: self.operator.to_rows(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for SensitivitySummary {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let raw = SummaryJson::deserialize(d)?;
        if raw.operator.len() != raw.k {
            return Err(D::Error::custom(format!(
                "operator has {} rows but k = {}",
                raw.operator.len(),
                raw.k
            )));
        }
        let op = SymMatrix::from_rows(&raw.operator).map_err(D::Error::custom)?;
        SensitivitySummary::from_operator(
            raw.kind,
            op,
            raw.n_samples,
            raw.family_id,
            raw.noise,
            raw.class_label,
        )
        .map_err(D::Error::custom)
    }
}

/// Second-moment matrix `C = E[zzᵀ]` of family coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct TaskCovariance {
    c: SymMatrix,
    normalized: bool,
}

impl TaskCovariance {
    pub fn new(c: SymMatrix) -> Result<Self> {
        check_psd(&c)?;
        let normalized = (c.trace() - 1.0).abs() <= 1e-12;
        Ok(Self { c, normalized })
    }

    /// `C / Tr(C)`.
    pub fn normalized(c: SymMatrix) -> Result<Self> {
        check_psd(&c)?;
        let t = c.trace();
        if !(t > 0.0) {
            return Err(Error::ZeroSummary { trace: t });
        }
        Ok(Self {
            c: c.scaled(1.0 / t),
            normalized: true,
        })
    }

    pub fn identity(k: usize) -> Self {
        Self {
            c: SymMatrix::identity(k),
            normalized: k == 1,
        }
    }

    /// `v vᵀ`.
    pub fn rank_one(v: &[f64]) -> Result<Self> {
        Self::new(SymMatrix::outer(v)?)
    }

    pub fn matrix(&self) -> &SymMatrix {
        &self.c
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn dim(&self) -> usize {
        self.c.dim()
    }

    /// `QᵀCQ`, the same task expressed in rotated family coordinates.
    pub fn rotated(&self, q: &DMatrix<f64>) -> Result<Self> {
        check_orthonormal_square(q)?;
        Ok(Self {
            c: self.c.congruence(&q.transpose())?,
            normalized: self.normalized,
        })
    }
}

/// `Tr(C · operator)`.
pub fn task_value(summary: &SensitivitySummary, c: &TaskCovariance) -> Result<f64> {
    summary.operator.trace_product(&c.c)
}

/// `γ = Tr(A)/k`, `shape = A/Tr(A)`.
pub fn gain_shape(op: &SymMatrix) -> Result<(f64, SymMatrix)> {
    let k = op.dim();
    let t = op.trace();
    if !(t > 0.0) {
        return Err(Error::ZeroSummary { trace: t });
    }
    if k < 2 {
        return Err(Error::ShapeUndefined(
            "a 1×1 operator has a single shape; use k ≥ 2".into(),
        ));
    }
    Ok((t / k as f64, op.scaled(1.0 / t)))
}

fn check_orthonormal_square(q: &DMatrix<f64>) -> Result<()> {
    if q.nrows() != q.ncols() {
        return Err(Error::InvalidMatrix(format!(
            "rotation must be square, got {}x{}",
            q.nrows(),
            q.ncols()
        )));
    }
    let deviation = orthonormality_defect(q);
    if !(deviation <= 1e-10) {
        return Err(Error::NotOrthonormal { deviation });
    }
    Ok(())
}

/// Re-expresses a summary in the rotated family `P Q`: operator `QᵀGQ`.
pub fn basis_rotate(summary: &SensitivitySummary, q: &DMatrix<f64>) -> Result<SensitivitySummary> {
    check_dims(summary.dim(), q.nrows())?;
    check_orthonormal_square(q)?;
    let op = summary.operator.congruence(&q.transpose())?;
    Ok(SensitivitySummary {
        operator: op,
        family_id: format!("{}/rotated", summary.family_id),
        ..summary.clone()
    })
}

/// Options shared by the accumulators.
#[derive(Clone, Copy, Debug)]
pub struct AccumulateOptions {
    pub chunk_size: usize,
}

impl Default for AccumulateOptions {
    fn default() -> Self {
        Self {
            chunk_size: DEFAULT_CHUNK_SIZE,
        }
    }
}

enum Whitening {
    None,
    Cholesky(DMatrix<f64>),
}

fn per_sample<M: DifferentiableMap + ?Sized>(
    map: &M,
    x: &[f64],
    basis: &DMatrix<f64>,
    whitening: &Whitening,
) -> Result<DMatrix<f64>> {
    let jp = map.jacobian_columns(x, basis)?;
    let jp = match whitening {
        Whitening::None => jp,
        Whitening::Cholesky(l) => l
            .solve_lower_triangular(&jp)
            .ok_or_else(|| Error::InvalidMatrix("singular Cholesky factor".into()))?,
    };
    Ok(jp.transpose() * jp)
}

/// Fixed pairwise reduction: adjacent partial sums are combined level by level.
fn tree_sum(mut parts: Vec<DMatrix<f64>>) -> Option<DMatrix<f64>> {
    while parts.len() > 1 {
        let mut next = Vec::with_capacity(parts.len().div_ceil(2));
        let mut it = parts.into_iter();
        while let Some(a) = it.next() {
            match it.next() {
                Some(b) => next.push(a + b),
                None => next.push(a),
            }
        }
        parts = next;
    }
    parts.pop()
}

fn accumulate_sum<M: DifferentiableMap + ?Sized>(
    map: &M,
    samples: &[Vec<f64>],
    family: &PerturbationFamily,
    whitening: &Whitening,
    opts: AccumulateOptions,
) -> Result<DMatrix<f64>> {
    if samples.is_empty() {
        return Err(Error::EmptyDataset);
    }
    check_dims(map.input_dim(), family.ambient_dim())?;
    let chunk = opts.chunk_size.max(1);
    let basis = family.basis();
    let k = family.dim();
    let parts = samples
        .par_chunks(chunk)
        .map(|block| {
            let mut acc = DMatrix::zeros(k, k);
            for x in block {
                check_dims(map.input_dim(), x.len())?;
                acc += per_sample(map, x, basis, whitening)?;
            }
            Ok(acc)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(tree_sum(parts).expect("non-empty"))
}

pub fn accumulate_pullback<M: DifferentiableMap + ?Sized>(
    map: &M,
    data: &Dataset,
    family: &PerturbationFamily,
) -> Result<SensitivitySummary> {
    accumulate_pullback_with(map, data, family, AccumulateOptions::default())
}

pub fn accumulate_pullback_with<M: DifferentiableMap + ?Sized>(
    map: &M,
    data: &Dataset,
    family: &PerturbationFamily,
    opts: AccumulateOptions,
) -> Result<SensitivitySummary> {
    let sum = accumulate_sum(map, data.samples(), family, &Whitening::None, opts)?;
    let n = data.len();
    SensitivitySummary::from_operator(
        SummaryKind::Pullback,
        SymMatrix::new(sum / n as f64)?,
        n,
        family.id(),
        None,
        None,
    )
}

pub fn accumulate_fisher<M: DifferentiableMap + ?Sized>(
    map: &M,
    data: &Dataset,
    family: &PerturbationFamily,
    noise: &NoiseModel,
) -> Result<SensitivitySummary> {
    accumulate_fisher_with(map, data, family, noise, AccumulateOptions::default())
}

pub fn accumulate_fisher_with<M: DifferentiableMap + ?Sized>(
    map: &M,
    data: &Dataset,
    family: &PerturbationFamily,
    noise: &NoiseModel,
    opts: AccumulateOptions,
) -> Result<SensitivitySummary> {
    noise.validate()?;
    let n = data.len();
    let op = match noise {
        NoiseModel::Isotropic { sigma } => {
            let sum = accumulate_sum(map, data.samples(), family, &Whitening::None, opts)?;
            (sum / n as f64) * (1.0 / (sigma * sigma))
        }
        NoiseModel::Full { cov } => {
            check_dims(map.output_dim(), cov.dim())?;
            let chol = cov.as_matrix().clone().cholesky().ok_or(Error::NotPositiveDefinite {
                min_eigenvalue: cov.eigen().min(),
                tolerance: 0.0,
            })?;
            let whitening = Whitening::Cholesky(chol.l());
            accumulate_sum(map, data.samples(), family, &whitening, opts)? / n as f64
        }
    };
    SensitivitySummary::from_operator(
        SummaryKind::Fisher,
        SymMatrix::new(op)?,
        n,
        family.id(),
        Some(noise.clone()),
        None,
    )
}

/// Per-class summaries plus the sample-weighted pooled summary.
#[derive(Clone, Debug)]
pub struct ClassConditional {
    pub per_class: BTreeMap<usize, SensitivitySummary>,
    /// Expected classes with no samples.
    pub missing: Vec<usize>,
    pub pooled: SensitivitySummary,
}

/// Class-conditional summaries of a labeled dataset. With `noise` the
/// Fisher operator is accumulated, otherwise the pullback. `n_classes`
/// enumerates the expected labels so absent ones are reported.
pub fn class_conditional_summaries<M: DifferentiableMap + ?Sized>(
    map: &M,
    data: &Dataset,
    family: &PerturbationFamily,
    noise: Option<&NoiseModel>,
    n_classes: Option<usize>,
) -> Result<ClassConditional> {
    let labels = data
        .labels()
        .ok_or_else(|| Error::InvalidArgument("dataset has no labels".into()))?;
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut present: Vec<usize> = labels.to_vec();
    present.sort_unstable();
    present.dedup();
    if let Some(nc) = n_classes {
        if let Some(&bad) = present.iter().find(|&&c| c >= nc) {
            return Err(Error::ClassOutOfRange {
                class: bad,
                n_classes: nc,
            });
        }
    }
    let missing = match n_classes {
        Some(nc) => (0..nc).filter(|c| present.binary_search(c).is_err()).collect(),
        None => Vec::new(),
    };
    let mut per_class = BTreeMap::new();
    for &c in &present {
        let subset = data.filter_label(c);
        let s = match noise {
            Some(noise) => accumulate_fisher(map, &subset, family, noise)?,
            None => accumulate_pullback(map, &subset, family)?,
        };
        per_class.insert(c, s.with_class_label(Some(c)));
    }
    let pooled = pooled_average(per_class.values())?;
    Ok(ClassConditional {
        per_class,
        missing,
        pooled,
    })
}

/// `Σ_y (n_y/n) G_y`.
pub fn pooled_average<'a>(
    parts: impl IntoIterator<Item = &'a SensitivitySummary>,
) -> Result<SensitivitySummary> {
    let parts: Vec<&SensitivitySummary> = parts.into_iter().collect();
    let first = *parts.first().ok_or(Error::EmptyDataset)?;
    let n: usize = parts.iter().map(|s| s.n_samples).sum();
    let k = first.dim();
    let mut acc = DMatrix::zeros(k, k);
    for s in &parts {
        check_compatible(first, s)?;
        acc += s.operator.as_matrix() * (s.n_samples as f64 / n as f64);
    }
    SensitivitySummary::from_operator(
        first.kind,
        SymMatrix::new(acc)?,
        n,
        first.family_id.clone(),
        first.noise.clone(),
        None,
    )
}

/// The `k(k+1)/2` PSD trace probes `e_i e_iᵀ` and `(e_i+e_j)(e_i+e_j)ᵀ`, as
/// `(i, j, C)` with `i ≤ j`.
pub fn trace_probes(k: usize) -> Vec<(usize, usize, TaskCovariance)> {
    let mut out = Vec::with_capacity(k * (k + 1) / 2);
    for i in 0..k {
        for j in i..k {
            let mut v = vec![0.0; k];
            v[i] += 1.0;
            if j != i {
                v[j] += 1.0;
            }
            out.push((i, j, TaskCovariance::rank_one(&v).expect("finite")));
        }
    }
    out
}

/// Inverts [`trace_probes`]: `G_ii = v_ii`, `G_ij = (v_ij − v_ii − v_jj)/2`.
pub fn reconstruct_from_probes(k: usize, values: &[(usize, usize, f64)]) -> Result<SymMatrix> {
    check_dims(k * (k + 1) / 2, values.len())?;
    let mut v = DMatrix::from_element(k, k, f64::NAN);
    for &(i, j, t) in values {
        if i >= k || j >= k {
            return Err(Error::InvalidArgument(format!("probe index ({i},{j}) outside {k}")));
        }
        v[(i.min(j), i.max(j))] = t;
    }
    let mut g = DMatrix::zeros(k, k);
    for i in 0..k {
        g[(i, i)] = v[(i, i)];
    }
    for i in 0..k {
        for j in i + 1..k {
            let off = (v[(i, j)] - v[(i, i)] - v[(j, j)]) / 2.0;
            g[(i, j)] = off;
            g[(j, i)] = off;
        }
    }
    SymMatrix::new(g).map_err(|_| Error::InvalidArgument("probe set is incomplete".into()))
}
