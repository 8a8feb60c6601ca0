//! Fisher summaries of recorded populations on a stimulus condition grid.
//!
//! Condition means are differenced along the grid axes to give a local
//! `n_cells × 3` Jacobian `Dμ(s)`, which is whitened by a shrinkage noise
//! covariance and averaged over grid points into a `3×3` operator.

mod synth;

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use synth::{
    donor_cohort, tuned_population, CellTuning, CohortConfig, SyntheticPopulation,
};

use crate::error::{Error, Result};
use crate::random::seeded;
use crate::spd::{
    check_dims, format_f64, sras_score, spd_lift, symmetrize_in_place, SpdMatrix, SymMatrix,
    DEFAULT_EPS_SPD,
};
use crate::summaries::{gain_shape, SensitivitySummary, SummaryKind};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GridAxis {
    Theta,
    Rho,
    Phi,
}

impl GridAxis {
    pub const ALL: [GridAxis; 3] = [GridAxis::Theta, GridAxis::Rho, GridAxis::Phi];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            GridAxis::Theta => "theta",
            GridAxis::Rho => "rho",
            GridAxis::Phi => "phi",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        GridAxis::ALL
            .into_iter()
            .find(|a| a.name() == s.trim())
            .ok_or_else(|| Error::InvalidArgument(format!("unknown grid axis '{s}'")))
    }

    /// Comma-separated axis list such as `theta,rho`.
    pub fn parse_list(s: &str) -> Result<Vec<Self>> {
        s.split(',').filter(|t| !t.trim().is_empty()).map(Self::parse).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AxisKind {
    Circular,
    Linear,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub name: String,
    pub kind: AxisKind,
    pub values: Vec<f64>,
    pub period: Option<f64>,
}

impl Axis {
    pub fn circular(name: &str, values: Vec<f64>, period: f64) -> Self {
        Self {
            name: name.into(),
            kind: AxisKind::Circular,
            values,
            period: Some(period),
        }
    }

    pub fn linear(name: &str, values: Vec<f64>) -> Self {
        Self {
            name: name.into(),
            kind: AxisKind::Linear,
            values,
            period: None,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    fn validate(&self) -> Result<()> {
        if self.values.is_empty() || self.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!("axis {} needs finite values", self.name)));
        }
        if self.values.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidArgument(format!(
                "axis {} values must be strictly increasing",
                self.name
            )));
        }
        match (self.kind, self.period) {
            (AxisKind::Circular, Some(p)) if p > 0.0 && p.is_finite() => {
                if self.values[self.values.len() - 1] - self.values[0] >= p {
                    return Err(Error::InvalidArgument(format!(
                        "axis {} values span a full period",
                        self.name
                    )));
                }
                Ok(())
            }
            (AxisKind::Circular, _) => Err(Error::InvalidArgument(format!(
                "circular axis {} needs a positive period",
                self.name
            ))),
            (AxisKind::Linear, _) => Ok(()),
        }
    }
}

/// Product grid over orientation, log₂ spatial frequency, and phase.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GridJson", into = "GridJson")]
pub struct ConditionGrid {
    axes: [Axis; 3],
}

#[derive(Serialize, Deserialize)]
struct GridJson {
    axes: Vec<Axis>,
}

impl TryFrom<GridJson> for ConditionGrid {
    type Error = Error;

    fn try_from(raw: GridJson) -> Result<Self> {
        let axes: [Axis; 3] = raw
            .axes
            .try_into()
            .map_err(|v: Vec<Axis>| Error::Parse(format!("grid needs 3 axes, got {}", v.len())))?;
        ConditionGrid::new(axes)
    }
}

impl From<ConditionGrid> for GridJson {
    fn from(g: ConditionGrid) -> Self {
        GridJson { axes: g.axes.to_vec() }
    }
}

impl ConditionGrid {
    pub fn new(axes: [Axis; 3]) -> Result<Self> {
        for (axis, expected) in axes.iter().zip(GridAxis::ALL) {
            if axis.name != expected.name() {
                return Err(Error::InvalidArgument(format!(
                    "axis {} should be named {}",
                    axis.name,
                    expected.name()
                )));
            }
            axis.validate()?;
        }
        if axes[GridAxis::Rho.index()].kind != AxisKind::Linear {
            return Err(Error::InvalidArgument("rho must be a linear axis".into()));
        }
        Ok(Self { axes })
    }

    /// Six orientations over a π period, five octave-spaced spatial
    /// frequencies, four phases over a unit period.
    pub fn standard() -> Self {
        let theta = (0..6).map(|i| i as f64 * std::f64::consts::PI / 6.0).collect();
        let rho = [0.02f64, 0.04, 0.08, 0.16, 0.32].iter().map(|f| f.log2()).collect();
        let phi = vec![0.0, 0.25, 0.5, 0.75];
        Self::new([
            Axis::circular("theta", theta, std::f64::consts::PI),
            Axis::linear("rho", rho),
            Axis::circular("phi", phi, 1.0),
        ])
        .expect("standard grid is valid")
    }

    pub fn axis(&self, a: GridAxis) -> &Axis {
        &self.axes[a.index()]
    }

    pub fn shape(&self) -> [usize; 3] {
        [self.axes[0].len(), self.axes[1].len(), self.axes[2].len()]
    }

    pub fn n_conditions(&self) -> usize {
        self.shape().iter().product()
    }

    /// `((i_θ·n_ρ) + i_ρ)·n_φ + i_φ`.
    pub fn index(&self, idx: [usize; 3]) -> usize {
        let [_, nr, np] = self.shape();
        (idx[0] * nr + idx[1]) * np + idx[2]
    }

    pub fn coords(&self, condition: usize) -> [usize; 3] {
        let [_, nr, np] = self.shape();
        [condition / (nr * np), (condition / np) % nr, condition % np]
    }

    pub fn values(&self, condition: usize) -> [f64; 3] {
        let c = self.coords(condition);
        [
            self.axes[0].values[c[0]],
            self.axes[1].values[c[1]],
            self.axes[2].values[c[2]],
        ]
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("grid serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }
}

/// Trial-level responses of one experiment.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentRecord {
    pub id: String,
    pub donor: String,
    pub label: String,
    n_cells: usize,
    trials: Vec<(usize, Vec<f64>)>,
}

impl ExperimentRecord {
    pub fn new(
        id: impl Into<String>,
        donor: impl Into<String>,
        label: impl Into<String>,
        trials: Vec<(usize, Vec<f64>)>,
    ) -> Result<Self> {
        let n_cells = trials.first().map_or(0, |t| t.1.len());
        if n_cells == 0 {
            return Err(Error::InsufficientData("experiment has no responses".into()));
        }
        for (c, r) in &trials {
            check_dims(n_cells, r.len())?;
            if r.iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidArgument(format!("non-finite response at condition {c}")));
            }
        }
        Ok(Self {
            id: id.into(),
            donor: donor.into(),
            label: label.into(),
            n_cells,
            trials,
        })
    }

    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    pub fn trials(&self) -> &[(usize, Vec<f64>)] {
        &self.trials
    }

    /// The same trials restricted to the listed cells.
    pub fn select_cells(&self, cells: &[usize]) -> Result<Self> {
        if let Some(&bad) = cells.iter().find(|&&c| c >= self.n_cells) {
            return Err(Error::InvalidArgument(format!("cell {bad} outside {}", self.n_cells)));
        }
        let trials = self
            .trials
            .iter()
            .map(|(c, r)| (*c, cells.iter().map(|&i| r[i]).collect()))
            .collect();
        Self::new(self.id.clone(), self.donor.clone(), self.label.clone(), trials)
    }

    fn with_trials(&self, trials: Vec<(usize, Vec<f64>)>) -> Self {
        Self {
            trials,
            ..self.clone()
        }
    }
}

/// Writes `experiment_id,donor_id,label,condition_index,r0,...` rows.
pub fn trials_to_csv(records: &[ExperimentRecord]) -> String {
    let width = records.iter().map(|r| r.n_cells).max().unwrap_or(0);
    let mut out = String::from("experiment_id,donor_id,label,condition_index");
    for i in 0..width {
        out.push_str(&format!(",r{i}"));
    }
    out.push('\n');
    for r in records {
        for (c, resp) in &r.trials {
            out.push_str(&format!("{},{},{},{c}", r.id, r.donor, r.label));
            for x in resp {
                out.push(',');
                out.push_str(&format_f64(*x));
            }
            out.push('\n');
        }
    }
    out
}

/// Parses a trials table; experiments keep their order of first appearance.
pub fn trials_from_csv(text: &str) -> Result<Vec<ExperimentRecord>> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    match lines.next() {
        Some((_, h)) if h.starts_with("experiment_id,donor_id,label,condition_index") => {}
        _ => return Err(Error::Parse("line 1: expected trials header".into())),
    }
    let mut order: Vec<String> = Vec::new();
    let mut groups: BTreeMap<String, (String, String, Vec<(usize, Vec<f64>)>, usize)> = BTreeMap::new();
    for (i, line) in lines {
        let lineno = i + 1;
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        if f.len() < 5 {
            return Err(Error::Parse(format!("line {lineno}: expected at least 5 fields")));
        }
        let cond: usize = f[3]
            .parse()
            .map_err(|_| Error::Parse(format!("line {lineno}: bad condition index '{}'", f[3])))?;
        let resp = f[4..]
            .iter()
            .map(|x| {
                x.parse::<f64>()
                    .map_err(|e| Error::Parse(format!("line {lineno}: '{x}': {e}")))
            })
            .collect::<Result<Vec<f64>>>()?;
        let entry = groups.entry(f[0].to_string()).or_insert_with(|| {
            order.push(f[0].to_string());
            (f[1].to_string(), f[2].to_string(), Vec::new(), resp.len())
        });
        if entry.0 != f[1] || entry.1 != f[2] {
            return Err(Error::Parse(format!(
                "line {lineno}: experiment {} changes donor or label",
                f[0]
            )));
        }
        if entry.3 != resp.len() {
            return Err(Error::Parse(format!(
                "line {lineno}: expected {} responses, found {}",
                entry.3,
                resp.len()
            )));
        }
        entry.2.push((cond, resp));
    }
    order
        .into_iter()
        .map(|id| {
            let (donor, label, trials, _) = groups.remove(&id).expect("grouped");
            ExperimentRecord::new(id, donor, label, trials)
        })
        .collect()
}

/// Per-condition trial means; rows of conditions without trials are zero and flagged.
#[derive(Clone, Debug, PartialEq)]
pub struct ConditionMeans {
    pub means: DMatrix<f64>,
    pub counts: Vec<usize>,
}

impl ConditionMeans {
    pub fn is_present(&self, condition: usize) -> bool {
        self.counts[condition] > 0
    }

    pub fn missing(&self) -> Vec<usize> {
        (0..self.counts.len()).filter(|&c| self.counts[c] == 0).collect()
    }

    fn row(&self, condition: usize) -> nalgebra::DVector<f64> {
        self.means.row(condition).transpose()
    }
}

pub fn condition_means(record: &ExperimentRecord, grid: &ConditionGrid) -> Result<ConditionMeans> {
    let nc = grid.n_conditions();
    let mut sums = DMatrix::zeros(nc, record.n_cells);
    let mut counts = vec![0usize; nc];
    for (c, r) in &record.trials {
        if *c >= nc {
            return Err(Error::InvalidArgument(format!(
                "condition index {c} outside a grid of {nc}"
            )));
        }
        counts[*c] += 1;
        for (j, x) in r.iter().enumerate() {
            sums[(*c, j)] += x;
        }
    }
    if counts.iter().all(|&n| n == 0) {
        return Err(Error::InsufficientData("no condition has trials".into()));
    }
    for (c, &n) in counts.iter().enumerate() {
        if n > 0 {
            let mut row = sums.row_mut(c);
            row /= n as f64;
        }
    }
    Ok(ConditionMeans { means: sums, counts })
}

/// Shrinkage estimate of the trial-to-trial noise covariance.
#[derive(Clone, Debug, PartialEq)]
pub struct PooledCovariance {
    pub sigma: SpdMatrix,
    pub shrinkage: f64,
    pub n_residuals: usize,
}

/// Ledoit–Wolf shrinkage towards `μI` of the covariance of centered rows.
/// Returns the shrunk matrix and its intensity; zero dispersion gives intensity 1.
pub fn ledoit_wolf(residuals: &DMatrix<f64>) -> Result<(DMatrix<f64>, f64)> {
    let (n, p) = residuals.shape();
    if n < 2 {
        return Err(Error::InsufficientData(format!("{n} residuals; need at least 2")));
    }
    let mut x = residuals.clone();
    for mut col in x.column_iter_mut() {
        let m = col.mean();
        col.add_scalar_mut(-m);
    }
    let s = x.transpose() * &x / n as f64;
    let mu = s.trace() / p as f64;
    let mut target_gap = s.clone();
    for i in 0..p {
        target_gap[(i, i)] -= mu;
    }
    let delta = target_gap.norm_squared() / p as f64;
    let fourth: f64 = x.row_iter().map(|r| r.norm_squared().powi(2)).sum();
    let beta_bar = ((fourth - n as f64 * s.norm_squared()) / (n as f64 * n as f64 * p as f64)).max(0.0);
    let shrinkage = if delta > 0.0 { beta_bar.min(delta) / delta } else { 1.0 };
    let mut out = s * (1.0 - shrinkage);
    for i in 0..p {
        out[(i, i)] += shrinkage * mu;
    }
    Ok((out, shrinkage))
}

/// Residuals around the condition means, shrunk, shifted by `eps_spd·I`,
/// and floored at `eps_spd`.
pub fn pooled_shrinkage_covariance(
    record: &ExperimentRecord,
    means: &ConditionMeans,
    eps_spd: f64,
) -> Result<PooledCovariance> {
    if !(eps_spd > 0.0) {
        return Err(Error::InvalidArgument(format!("eps_spd must be positive, got {eps_spd}")));
    }
    let n = record.trials.len();
    let p = record.n_cells;
    let mut residuals = DMatrix::zeros(n, p);
    for (t, (c, r)) in record.trials.iter().enumerate() {
        for j in 0..p {
            residuals[(t, j)] = r[j] - means.means[(*c, j)];
        }
    }
    let (mut shrunk, shrinkage) = ledoit_wolf(&residuals)?;
    symmetrize_in_place(&mut shrunk);
    for i in 0..p {
        shrunk[(i, i)] += eps_spd;
    }
    let eig = SymMatrix::new(shrunk)?.eigen();
    let values = eig.values.iter().map(|v| v.max(eps_spd)).collect();
    let sigma = SpdMatrix::from_spectrum(values, eig.vectors)?;
    Ok(PooledCovariance {
        sigma,
        shrinkage,
        n_residuals: n,
    })
}

fn check_axis_sizes(grid: &ConditionGrid) -> Result<()> {
    for a in GridAxis::ALL {
        let axis = grid.axis(a);
        let needed = match axis.kind {
            AxisKind::Circular => 2,
            AxisKind::Linear => 3,
        };
        if axis.len() < needed {
            return Err(Error::GridTooSmall {
                axis: a.name().into(),
                len: axis.len(),
                needed,
            });
        }
    }
    Ok(())
}

/// Neighbour indices and the spacing between them along one axis, or
/// `None` at a linear endpoint.
fn neighbours(axis: &Axis, i: usize) -> Option<(usize, usize, f64)> {
    let n = axis.len();
    match axis.kind {
        AxisKind::Circular => {
            let period = axis.period.expect("validated");
            let next = (i + 1) % n;
            let prev = (i + n - 1) % n;
            let fwd = (axis.values[next] - axis.values[i]).rem_euclid(period);
            let back = (axis.values[i] - axis.values[prev]).rem_euclid(period);
            Some((prev, next, fwd + back))
        }
        AxisKind::Linear => {
            if i == 0 || i + 1 >= n {
                None
            } else {
                Some((i - 1, i + 1, axis.values[i + 1] - axis.values[i - 1]))
            }
        }
    }
}

/// Centered differences `(∂θ, ∂ρ, ∂φ)` of the condition means at grid point
/// `at`. `None` when a needed neighbour is a linear endpoint or has no trials.
pub fn finite_difference_jacobian(
    means: &ConditionMeans,
    grid: &ConditionGrid,
    at: [usize; 3],
) -> Result<Option<DMatrix<f64>>> {
    check_axis_sizes(grid)?;
    check_dims(grid.n_conditions(), means.counts.len())?;
    let n_cells = means.means.ncols();
    let mut jac = DMatrix::zeros(n_cells, 3);
    for a in GridAxis::ALL {
        let ai = a.index();
        let Some((prev, next, span)) = neighbours(grid.axis(a), at[ai]) else {
            return Ok(None);
        };
        let mut lo = at;
        let mut hi = at;
        lo[ai] = prev;
        hi[ai] = next;
        let (lo, hi) = (grid.index(lo), grid.index(hi));
        if !means.is_present(lo) || !means.is_present(hi) {
            return Ok(None);
        }
        jac.set_column(ai, &((means.row(hi) - means.row(lo)) / span));
    }
    Ok(Some(jac))
}

/// Average of `DμᵀΣ⁻¹Dμ` over grid points with a complete stencil, or of
/// `DμᵀDμ` when `cov` is `None`. Returns the operator and the point count.
pub fn operator_from_means(
    means: &ConditionMeans,
    grid: &ConditionGrid,
    cov: Option<&SpdMatrix>,
) -> Result<(SymMatrix, usize)> {
    let chol = match cov {
        Some(c) => {
            check_dims(means.means.ncols(), c.dim())?;
            Some(
                c.as_matrix()
                    .clone()
                    .cholesky()
                    .ok_or(Error::NotPositiveDefinite {
                        min_eigenvalue: c.eigen().min(),
                        tolerance: 0.0,
                    })?
                    .l(),
            )
        }
        None => None,
    };
    let mut acc = DMatrix::zeros(3, 3);
    let mut valid = 0usize;
    for cond in 0..grid.n_conditions() {
        if !means.is_present(cond) {
            continue;
        }
        let Some(d) = finite_difference_jacobian(means, grid, grid.coords(cond))? else {
            continue;
        };
        let w = match &chol {
            Some(l) => l
                .solve_lower_triangular(&d)
                .ok_or_else(|| Error::InvalidMatrix("singular Cholesky factor".into()))?,
            None => d,
        };
        acc += w.transpose() * w;
        valid += 1;
    }
    if valid == 0 {
        return Err(Error::InsufficientData("no grid point has a complete stencil".into()));
    }
    Ok((SymMatrix::new(acc / valid as f64)?, valid))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseMode {
    /// Whitened by the shrinkage covariance.
    Fisher,
    /// Identity in place of `Σ⁻¹`.
    Naive,
}

impl NoiseMode {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "fisher" => Ok(NoiseMode::Fisher),
            "naive" => Ok(NoiseMode::Naive),
            _ => Err(Error::InvalidArgument(format!("unknown noise mode '{s}'"))),
        }
    }
}

pub const GRID_FAMILY_ID: &str = "grid:theta,rho,phi";

#[derive(Clone, Debug)]
pub struct ExperimentOperator {
    pub summary: SensitivitySummary,
    pub covariance: Option<PooledCovariance>,
    pub valid_points: usize,
}

/// `F_e` (fisher) or `G_e` (naive) of one experiment.
pub fn experiment_operators(
    record: &ExperimentRecord,
    grid: &ConditionGrid,
    mode: NoiseMode,
    eps_spd: f64,
) -> Result<ExperimentOperator> {
    let means = condition_means(record, grid)?;
    let covariance = match mode {
        NoiseMode::Fisher => Some(pooled_shrinkage_covariance(record, &means, eps_spd)?),
        NoiseMode::Naive => None,
    };
    let (op, valid) = operator_from_means(&means, grid, covariance.as_ref().map(|c| &c.sigma))?;
    let kind = match mode {
        NoiseMode::Fisher => SummaryKind::Fisher,
        NoiseMode::Naive => SummaryKind::Pullback,
    };
    let summary = SensitivitySummary::from_operator(kind, op, record.trials.len(), GRID_FAMILY_ID, None, None)?;
    Ok(ExperimentOperator {
        summary,
        covariance,
        valid_points: valid,
    })
}

/// Coordinate-selection restriction `P_QᵀFP_Q`, optionally trace-normalized.
pub fn family_restriction(
    summary: &SensitivitySummary,
    axes: &[GridAxis],
    shape_only: bool,
) -> Result<SensitivitySummary> {
    check_dims(3, summary.dim())?;
    let mut q: Vec<GridAxis> = axes.to_vec();
    q.sort();
    q.dedup();
    if q.is_empty() {
        return Err(Error::InvalidArgument("empty axis family".into()));
    }
    if shape_only && q.len() == 1 {
        return Err(Error::ShapeUndefined(
            "one-dimensional shape-only families are not reported".into(),
        ));
    }
    let op = summary.operator().as_matrix();
    let sub = DMatrix::from_fn(q.len(), q.len(), |i, j| op[(q[i].index(), q[j].index())]);
    let mut sub = SymMatrix::new(sub)?;
    if shape_only {
        sub = gain_shape(&sub)?.1;
    }
    let names: Vec<&str> = q.iter().map(|a| a.name()).collect();
    let family_id = format!("grid:{}{}", names.join(","), if shape_only { ":shape" } else { "" });
    SensitivitySummary::from_operator(
        summary.kind(),
        sub,
        summary.n_samples(),
        family_id,
        summary.noise().cloned(),
        summary.class_label(),
    )
}

fn stream_seed(seed: u64, stream: u64) -> u64 {
    seed ^ stream.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Entrywise mean of operators recomputed on `n_subsamples` random cell
/// subsets of size `n_match` drawn without replacement.
pub fn matched_subsample_operators(
    record: &ExperimentRecord,
    grid: &ConditionGrid,
    mode: NoiseMode,
    n_match: usize,
    n_subsamples: usize,
    seed: u64,
    eps_spd: f64,
) -> Result<SensitivitySummary> {
    if record.n_cells < n_match || n_match == 0 {
        return Err(Error::InsufficientData(format!(
            "experiment {} has {} cells, fewer than the matched count {n_match}",
            record.id, record.n_cells
        )));
    }
    if n_subsamples == 0 {
        return Err(Error::InvalidArgument("need at least one subsample".into()));
    }
    let ops = (0..n_subsamples as u64)
        .into_par_iter()
        .map(|s| {
            let mut rng = seeded(stream_seed(seed, s));
            let mut cells = rand::seq::index::sample(&mut rng, record.n_cells, n_match).into_vec();
            cells.sort_unstable();
            let sub = record.select_cells(&cells)?;
            experiment_operators(&sub, grid, mode, eps_spd).map(|o| o.summary)
        })
        .collect::<Result<Vec<_>>>()?;
    let mean = SymMatrix::mean(ops.iter().map(|s| s.operator()))?;
    SensitivitySummary::from_operator(
        ops[0].kind(),
        mean,
        ops[0].n_samples(),
        GRID_FAMILY_ID,
        None,
        None,
    )
}

/// S-RAS between two half operators after the trace-scaled lift.
pub fn split_half_score(a: &SymMatrix, b: &SymMatrix, eps_reg: f64) -> Result<f64> {
    Ok(sras_score(&spd_lift(a, eps_reg)?, &spd_lift(b, eps_reg)?)?.sras_score)
}

/// Splits the trials of one experiment at random into two halves per condition.
pub fn split_trials(record: &ExperimentRecord, seed: u64) -> Result<(ExperimentRecord, ExperimentRecord)> {
    let mut by_condition: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (t, (c, _)) in record.trials.iter().enumerate() {
        by_condition.entry(*c).or_default().push(t);
    }
    let mut rng = seeded(seed);
    let (mut a, mut b) = (Vec::new(), Vec::new());
    for idx in by_condition.values_mut() {
        if idx.len() < 2 {
            continue;
        }
        idx.shuffle(&mut rng);
        let half = idx.len() / 2;
        a.extend(idx[..half].iter().map(|&t| record.trials[t].clone()));
        b.extend(idx[half..].iter().map(|&t| record.trials[t].clone()));
    }
    if a.is_empty() {
        return Err(Error::InsufficientData(format!(
            "experiment {} has no condition with 2 trials",
            record.id
        )));
    }
    Ok((record.with_trials(a), record.with_trials(b)))
}

/// Mean S-RAS between operators of random trial halves over `n_repeats` splits.
#[allow(clippy::too_many_arguments)]
pub fn split_half_reliability(
    record: &ExperimentRecord,
    grid: &ConditionGrid,
    mode: NoiseMode,
    axes: &[GridAxis],
    n_repeats: usize,
    seed: u64,
    eps_reg: f64,
    eps_spd: f64,
) -> Result<f64> {
    if n_repeats == 0 {
        return Err(Error::InvalidArgument("need at least one split".into()));
    }
    let scores = (0..n_repeats as u64)
        .into_par_iter()
        .map(|r| {
            let (a, b) = split_trials(record, stream_seed(seed, r))?;
            let fa = family_restriction(&experiment_operators(&a, grid, mode, eps_spd)?.summary, axes, false)?;
            let fb = family_restriction(&experiment_operators(&b, grid, mode, eps_spd)?.summary, axes, false)?;
            split_half_score(fa.operator(), fb.operator(), eps_reg)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(scores.iter().sum::<f64>() / scores.len() as f64)
}

/// Default numerical floor for the noise covariance.
pub const GRID_EPS_SPD: f64 = DEFAULT_EPS_SPD;
