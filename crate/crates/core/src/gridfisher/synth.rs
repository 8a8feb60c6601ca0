//! Synthetic tuned populations on a condition grid: von Mises tuning in
//! orientation and phase, Gaussian tuning in log spatial frequency, and
//! additive Gaussian trial noise.

use std::f64::consts::TAU;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use super::{
    operator_from_means, AxisKind, ConditionGrid, ConditionMeans, ExperimentRecord, GridAxis,
};
use crate::error::{Error, Result};
use crate::random::seeded;
use crate::spd::{SpdMatrix, SymMatrix};

/// Tuning of one cell. The orientation preference drifts with spatial
/// frequency and the phase preference winds with orientation, so every
/// pair of axes is coupled.
#[derive(Clone, Debug, PartialEq)]
pub struct CellTuning {
    pub amplitude: f64,
    pub baseline: f64,
    pub theta_pref: f64,
    pub theta_kappa: f64,
    pub rho_pref: f64,
    pub rho_width: f64,
    pub phi_pref: f64,
    pub phi_kappa: f64,
    /// Orientation preference shift per octave.
    pub theta_drift: f64,
    /// Integer number of phase periods per orientation period.
    pub phase_winding: f64,
    /// Phase preference shift per octave.
    pub phase_drift: f64,
}

impl CellTuning {
    /// A cell that responds with `baseline` everywhere.
    pub fn flat(baseline: f64) -> Self {
        Self {
            amplitude: 0.0,
            baseline,
            theta_pref: 0.0,
            theta_kappa: 0.0,
            rho_pref: 0.0,
            rho_width: 1.0,
            phi_pref: 0.0,
            phi_kappa: 0.0,
            theta_drift: 0.0,
            phase_winding: 0.0,
            phase_drift: 0.0,
        }
    }

    pub fn response(&self, s: [f64; 3], theta_period: f64, phi_period: f64) -> f64 {
        let [theta, rho, phi] = s;
        let dr = rho - self.rho_pref;
        let dtheta = theta - self.theta_pref;
        let ang = TAU * (dtheta - self.theta_drift * dr) / theta_period;
        let shift = self.phase_winding * (phi_period / theta_period) * dtheta + self.phase_drift * dr;
        let ph = TAU * (phi - self.phi_pref - shift) / phi_period;
        let vm_theta = (self.theta_kappa * (ang.cos() - 1.0)).exp();
        let gauss = (-dr * dr / (2.0 * self.rho_width * self.rho_width)).exp();
        let vm_phi = (self.phi_kappa * (ph.cos() - 1.0)).exp();
        self.baseline + self.amplitude * vm_theta * gauss * vm_phi
    }
}

/// Cells with known tuning and a known trial-noise covariance.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticPopulation {
    pub cells: Vec<CellTuning>,
    pub noise: SpdMatrix,
}

fn period(grid: &ConditionGrid, a: GridAxis) -> f64 {
    let axis = grid.axis(a);
    match axis.kind {
        AxisKind::Circular => axis.period.expect("validated"),
        AxisKind::Linear => f64::INFINITY,
    }
}

impl SyntheticPopulation {
    pub fn new(cells: Vec<CellTuning>, noise: SpdMatrix) -> Result<Self> {
        if cells.is_empty() {
            return Err(Error::InvalidArgument("population has no cells".into()));
        }
        if noise.dim() != cells.len() {
            return Err(Error::DimMismatch {
                expected: cells.len(),
                found: noise.dim(),
            });
        }
        Ok(Self { cells, noise })
    }

    pub fn n_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn mean(&self, grid: &ConditionGrid, condition: usize) -> Vec<f64> {
        let s = grid.values(condition);
        let (pt, pp) = (period(grid, GridAxis::Theta), period(grid, GridAxis::Phi));
        self.cells.iter().map(|c| c.response(s, pt, pp)).collect()
    }

    /// Exact tuning means at every condition.
    pub fn exact_means(&self, grid: &ConditionGrid) -> ConditionMeans {
        let nc = grid.n_conditions();
        let mut means = DMatrix::zeros(nc, self.n_cells());
        for c in 0..nc {
            for (j, v) in self.mean(grid, c).into_iter().enumerate() {
                means[(c, j)] = v;
            }
        }
        ConditionMeans {
            means,
            counts: vec![1; nc],
        }
    }

    /// The grid Fisher operator of the noiseless means under the true noise
    /// covariance; the population-level target of the estimator.
    pub fn analytic_fisher(&self, grid: &ConditionGrid) -> Result<SymMatrix> {
        Ok(operator_from_means(&self.exact_means(grid), grid, Some(&self.noise))?.0)
    }

    /// Noiseless-means counterpart with identity noise.
    pub fn analytic_pullback(&self, grid: &ConditionGrid) -> Result<SymMatrix> {
        Ok(operator_from_means(&self.exact_means(grid), grid, None)?.0)
    }

    /// `trials_per_condition` noisy trials at every condition; `noise_scale`
    /// multiplies the noise standard deviation (0 gives noiseless trials).
    pub fn sample_record<R: Rng + ?Sized>(
        &self,
        grid: &ConditionGrid,
        trials_per_condition: usize,
        noise_scale: f64,
        ids: (&str, &str, &str),
        rng: &mut R,
    ) -> Result<ExperimentRecord> {
        let l = self
            .noise
            .as_matrix()
            .clone()
            .cholesky()
            .ok_or_else(|| Error::InvalidMatrix("noise covariance has no Cholesky factor".into()))?
            .l();
        let n = self.n_cells();
        let mut trials = Vec::with_capacity(grid.n_conditions() * trials_per_condition);
        for c in 0..grid.n_conditions() {
            let mu = DVector::from_vec(self.mean(grid, c));
            for _ in 0..trials_per_condition {
                let z = DVector::from_iterator(n, (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)));
                let r = &mu + (&l * z) * noise_scale;
                trials.push((c, r.iter().copied().collect()));
            }
        }
        ExperimentRecord::new(ids.0, ids.1, ids.2, trials)
    }
}

fn uniform<R: Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

fn rho_range(grid: &ConditionGrid) -> (f64, f64) {
    let v = &grid.axis(GridAxis::Rho).values;
    (v[0], v[v.len() - 1])
}

/// Heterogeneous tuned population with coupled axes and correlated noise.
pub fn tuned_population(grid: &ConditionGrid, n_cells: usize, seed: u64) -> Result<SyntheticPopulation> {
    let mut rng = seeded(seed);
    let (pt, pp) = (period(grid, GridAxis::Theta), period(grid, GridAxis::Phi));
    let (rlo, rhi) = rho_range(grid);
    let mid = (rlo + rhi) / 2.0;
    let span = rhi - rlo;
    let cells: Vec<CellTuning> = (0..n_cells)
        .map(|_| CellTuning {
            amplitude: uniform(&mut rng, 4.0, 8.0),
            baseline: uniform(&mut rng, 1.0, 2.0),
            theta_pref: uniform(&mut rng, 0.0, pt),
            theta_kappa: uniform(&mut rng, 1.0, 2.0),
            rho_pref: mid + span * uniform(&mut rng, -0.2, 0.2),
            rho_width: span * uniform(&mut rng, 0.25, 0.4),
            phi_pref: uniform(&mut rng, 0.0, pp),
            phi_kappa: uniform(&mut rng, 0.5, 1.0),
            theta_drift: 0.3 * pt / span,
            phase_winding: 1.0,
            phase_drift: 0.3 * pp / span,
        })
        .collect();
    let sd: Vec<f64> = (0..n_cells).map(|_| uniform(&mut rng, 0.8, 1.5)).collect();
    let rho = 0.2;
    let cov = DMatrix::from_fn(n_cells, n_cells, |i, j| {
        let c = if i == j { 1.0 } else { rho };
        c * sd[i] * sd[j]
    });
    SyntheticPopulation::new(cells, SpdMatrix::from_matrix(cov)?)
}

/// Parameters of the donor cohort generator.
#[derive(Clone, Debug, PartialEq)]
pub struct CohortConfig {
    pub n_donors: usize,
    pub experiments_per_donor: usize,
    /// Cells of each of the two types.
    pub cells_per_type: usize,
    pub trials_per_condition: usize,
    pub labels: [String; 2],
    pub quiet_sd: f64,
    pub noisy_sd: f64,
    /// Relative spread of the per-donor response gain.
    pub donor_gain_jitter: f64,
}

impl Default for CohortConfig {
    fn default() -> Self {
        Self {
            n_donors: 4,
            experiments_per_donor: 3,
            cells_per_type: 12,
            trials_per_condition: 20,
            labels: ["A".into(), "B".into()],
            quiet_sd: 0.5,
            noisy_sd: 3.0,
            donor_gain_jitter: 0.15,
        }
    }
}

/// Experiments mixing orientation-selective and frequency-selective cells.
/// Tuning statistics do not depend on the label; the label decides which
/// cell type carries the large trial noise, so only the noise-whitened
/// operator differs in shape between labels. Labels alternate within and
/// across donors.
pub fn donor_cohort(
    grid: &ConditionGrid,
    cfg: &CohortConfig,
    seed: u64,
) -> Result<Vec<(SyntheticPopulation, ExperimentRecord)>> {
    let mut rng = seeded(seed);
    let (pt, pp) = (period(grid, GridAxis::Theta), period(grid, GridAxis::Phi));
    let (rlo, rhi) = rho_range(grid);
    let span = rhi - rlo;
    let mut out = Vec::new();
    for d in 0..cfg.n_donors {
        let gain = 1.0 + cfg.donor_gain_jitter * uniform(&mut rng, -1.0, 1.0);
        for e in 0..cfg.experiments_per_donor {
            let label_idx = (d + e) % 2;
            let mut cells = Vec::with_capacity(2 * cfg.cells_per_type);
            let mut sd = Vec::with_capacity(2 * cfg.cells_per_type);
            for kind in 0..2 {
                for _ in 0..cfg.cells_per_type {
                    let theta_selective = kind == 0;
                    cells.push(CellTuning {
                        amplitude: gain * uniform(&mut rng, 3.0, 5.0),
                        baseline: uniform(&mut rng, 0.5, 1.5),
                        theta_pref: uniform(&mut rng, 0.0, pt),
                        theta_kappa: if theta_selective { uniform(&mut rng, 1.5, 2.5) } else { 0.1 },
                        rho_pref: rlo + span * uniform(&mut rng, 0.3, 0.7),
                        rho_width: if theta_selective { 4.0 * span } else { span * uniform(&mut rng, 0.25, 0.35) },
                        phi_pref: uniform(&mut rng, 0.0, pp),
                        phi_kappa: 0.3,
                        theta_drift: 0.1 * pt / span,
                        phase_winding: 0.0,
                        phase_drift: 0.0,
                    });
                    let noisy = (kind == 0) == (label_idx == 0);
                    sd.push(if noisy { cfg.noisy_sd } else { cfg.quiet_sd });
                }
            }
            let var: Vec<f64> = sd.iter().map(|s| s * s).collect();
            let pop = SyntheticPopulation::new(cells, SpdMatrix::from_diagonal(&var)?)?;
            let id = format!("e{d}-{e}");
            let donor = format!("d{d}");
            let record = pop.sample_record(
                grid,
                cfg.trials_per_condition,
                1.0,
                (&id, &donor, &cfg.labels[label_idx]),
                &mut rng,
            )?;
            out.push((pop, record));
        }
    }
    Ok(out)
}
