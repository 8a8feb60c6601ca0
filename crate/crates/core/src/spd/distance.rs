use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{check_dims, matrix_inv_sqrt, matrix_log, EigenDecomposition, SpdMatrix, SymMatrix};
use crate::error::{Error, Result};
use crate::random::{gaussian_matrix, seeded};

/// Eigendecomposition of the relative operator `A^{-1/2} B A^{-1/2}`.
///
/// Its eigenvalues are the generalized eigenvalues of the pair `(B, A)`.
pub fn relative_eigen(a: &SpdMatrix, b: &SpdMatrix) -> Result<EigenDecomposition> {
    check_dims(a.dim(), b.dim())?;
    if a == b {
        // identical operators: the relative operator is exactly I
        let k = a.dim();
        return Ok(EigenDecomposition {
            values: vec![1.0; k],
            vectors: nalgebra::DMatrix::identity(k, k),
        });
    }
    let w = matrix_inv_sqrt(a);
    let m = w.as_matrix() * b.as_matrix() * w.as_matrix();
    let mut eig = SymMatrix::new(m)?.eigen();
    for v in eig.values.iter_mut() {
        *v = v.max(f64::MIN_POSITIVE);
    }
    Ok(eig)
}

/// Affine-invariant distance `‖log(A^{-1/2} B A^{-1/2})‖_F`.
pub fn airm_distance(a: &SpdMatrix, b: &SpdMatrix) -> Result<f64> {
    let eig = relative_eigen(a, b)?;
    Ok(eig.values.iter().map(|l| l.ln().powi(2)).sum::<f64>().sqrt())
}

/// Operator-norm log-spectral distance `max_i |log λ_i(A^{-1/2} B A^{-1/2})|`.
pub fn dinf_distance(a: &SpdMatrix, b: &SpdMatrix) -> Result<f64> {
    let eig = relative_eigen(a, b)?;
    Ok(eig.min().ln().abs().max(eig.max().ln().abs()))
}

/// `‖log A − log B‖_F`.
pub fn log_euclidean_distance(a: &SpdMatrix, b: &SpdMatrix) -> Result<f64> {
    check_dims(a.dim(), b.dim())?;
    Ok(matrix_log(a).sub(&matrix_log(b))?.frobenius_norm())
}

/// Result of comparing two lifted summaries.
///
/// `sras_score = exp(−airm_distance/√k)`. The AIRM distance `d` certifies
/// `e^{−d}·Tr(CA) ≤ Tr(CB) ≤ e^{d}·Tr(CA)` for every PSD probe `C`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub airm_distance: f64,
    pub dinf_distance: f64,
    pub sras_score: f64,
    pub family_dim: usize,
}

impl Certificate {
    /// `e^{−d}` and `e^{d}`.
    pub fn bound_factors(&self) -> (f64, f64) {
        ((-self.airm_distance).exp(), self.airm_distance.exp())
    }
}

pub fn sras_score(a: &SpdMatrix, b: &SpdMatrix) -> Result<Certificate> {
    let eig = relative_eigen(a, b)?;
    let logs: Vec<f64> = eig.values.iter().map(|l| l.ln()).collect();
    let d = logs.iter().map(|x| x * x).sum::<f64>().sqrt();
    let dinf = logs.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let k = a.dim();
    Ok(Certificate {
        airm_distance: d,
        dinf_distance: dinf,
        sras_score: (-d / (k as f64).sqrt()).exp(),
        family_dim: k,
    })
}

/// Bounds on the task value of the second summary given the task value
/// `Tr(C·A)` of the first.
pub fn certificate_bounds(cert: &Certificate, task_value_a: f64) -> Result<(f64, f64)> {
    if !(task_value_a >= 0.0) || !task_value_a.is_finite() {
        return Err(Error::InvalidTaskValue(task_value_a));
    }
    let (lo, hi) = cert.bound_factors();
    Ok((lo * task_value_a, hi * task_value_a))
}

#[derive(Clone, Debug)]
pub struct VariationalCheck {
    /// Largest `|log Tr(CB)/Tr(CA)|` over sampled and analytic probes.
    pub supremum: f64,
    /// Largest value over the random probes alone.
    pub sampled_max: f64,
    /// The maximizing probe.
    pub attaining: SymMatrix,
}

/// Estimates `sup_{C⪰0} |log Tr(CB)/Tr(CA)|` from `trials` random PSD probes
/// plus the two rank-one probes `A^{-1/2} u uᵀ A^{-1/2}` built from the
/// extreme eigenvectors `u` of the relative operator.
pub fn dinf_variational_check(
    a: &SpdMatrix,
    b: &SpdMatrix,
    trials: usize,
    seed: u64,
) -> Result<VariationalCheck> {
    check_dims(a.dim(), b.dim())?;
    let k = a.dim();
    let eig = relative_eigen(a, b)?;
    let w = matrix_inv_sqrt(a);

    let log_ratio = |c: &SymMatrix| -> Result<f64> {
        let tb = c.trace_product(b.as_sym())?;
        let ta = c.trace_product(a.as_sym())?;
        Ok((tb / ta).ln().abs())
    };

    let mut best: Option<(f64, SymMatrix)> = None;
    for idx in [0, k - 1] {
        let u = eig.vectors.column(idx);
        let wu: Vec<f64> = (w.as_matrix() * u).iter().copied().collect();
        let c = SymMatrix::outer(&wu)?;
        let value = log_ratio(&c)?;
        if best.as_ref().map_or(true, |(v, _)| value > *v) {
            best = Some((value, c));
        }
    }

    let mut rng = seeded(seed);
    let mut sampled_max = 0.0f64;
    for _ in 0..trials {
        let rank = rng.random_range(1..=k);
        let g = gaussian_matrix(&mut rng, k, rank);
        let c = SymMatrix::new(&g * g.transpose())?;
        let value = log_ratio(&c)?;
        sampled_max = sampled_max.max(value);
        if best.as_ref().map_or(true, |(v, _)| value > *v) {
            best = Some((value, c));
        }
    }

    let (supremum, attaining) = best.expect("at least the analytic probes");
    Ok(VariationalCheck {
        supremum,
        sampled_max,
        attaining,
    })
}
