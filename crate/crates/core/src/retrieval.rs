//! Pairwise similarity matrices, layer-identification metrics, and
//! donor-distinct nearest-neighbour retrieval.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{
    cca_r2, linear_cka, msa_pointwise, procrustes_distance, pw_airm, rbf_cka, ActivationMatrix,
    Bandwidth,
};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::random::seeded;
use crate::repmap::{DifferentiableMap, RepMap};
use crate::spd::{
    airm_distance, format_f64, log_euclidean_distance, spd_lift, SpdMatrix, SymMatrix,
};
use crate::summaries::{accumulate_pullback, PerturbationFamily};

/// Scores with higher meaning more similar; distances are converted before storage.
#[derive(Clone, Debug, PartialEq)]
pub struct SimilarityMatrix {
    pub row_ids: Vec<String>,
    pub col_ids: Vec<String>,
    pub values: DMatrix<f64>,
}

impl SimilarityMatrix {
    pub fn new(row_ids: Vec<String>, col_ids: Vec<String>, values: DMatrix<f64>) -> Result<Self> {
        if values.nrows() != row_ids.len() || values.ncols() != col_ids.len() {
            return Err(Error::DimMismatch {
                expected: row_ids.len() * col_ids.len(),
                found: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidMatrix("non-finite similarity".into()));
        }
        Ok(Self {
            row_ids,
            col_ids,
            values,
        })
    }

    /// Square matrix with the same ids on both axes.
    pub fn square(ids: Vec<String>, values: DMatrix<f64>) -> Result<Self> {
        Self::new(ids.clone(), ids, values)
    }

    pub fn is_square(&self) -> bool {
        self.values.is_square()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("id");
        for c in &self.col_ids {
            out.push(',');
            out.push_str(c);
        }
        out.push('\n');
        for (i, r) in self.row_ids.iter().enumerate() {
            out.push_str(r);
            for j in 0..self.values.ncols() {
                out.push(',');
                out.push_str(&format_f64(self.values[(i, j)]));
            }
            out.push('\n');
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Comparator {
    Sras,
    CkaLin,
    CkaRbf,
    Procrustes,
    Cca,
    PwAirm,
    Msa,
}

impl Comparator {
    pub const ALL: [Comparator; 7] = [
        Comparator::Sras,
        Comparator::CkaLin,
        Comparator::CkaRbf,
        Comparator::Procrustes,
        Comparator::Cca,
        Comparator::PwAirm,
        Comparator::Msa,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Comparator::Sras => "sras",
            Comparator::CkaLin => "cka-lin",
            Comparator::CkaRbf => "cka-rbf",
            Comparator::Procrustes => "procrustes",
            Comparator::Cca => "cca",
            Comparator::PwAirm => "pw-airm",
            Comparator::Msa => "msa",
        }
    }
}

impl fmt::Display for Comparator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Comparator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Comparator::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown comparator '{s}'")))
    }
}

/// Inputs shared by every layer comparison.
#[derive(Clone, Debug)]
pub struct MatchConfig {
    pub family: PerturbationFamily,
    pub data: Dataset,
    pub eps_reg: f64,
    pub bandwidth: Bandwidth,
    pub cca_ridge: Option<f64>,
}

enum LayerFeature {
    Lifted(SpdMatrix),
    Pointwise(Vec<SpdMatrix>),
    Activations(ActivationMatrix),
}

fn pointwise_metrics<M: DifferentiableMap + ?Sized>(
    map: &M,
    cfg: &MatchConfig,
) -> Result<Vec<SpdMatrix>> {
    cfg.data
        .samples()
        .iter()
        .map(|x| {
            let jp = map.jacobian_columns(x, cfg.family.basis())?;
            spd_lift(&SymMatrix::new(jp.transpose() * jp)?, cfg.eps_reg)
        })
        .collect()
}

fn layer_features(
    model: &RepMap,
    layers: &[usize],
    comparator: Comparator,
    cfg: &MatchConfig,
) -> Result<Vec<LayerFeature>> {
    layers
        .iter()
        .map(|&l| {
            let view = model.at_layer(l)?;
            Ok(match comparator {
                Comparator::Sras => {
                    let g = accumulate_pullback(&view, &cfg.data, &cfg.family)?;
                    LayerFeature::Lifted(spd_lift(g.operator(), cfg.eps_reg)?)
                }
                Comparator::PwAirm | Comparator::Msa => {
                    LayerFeature::Pointwise(pointwise_metrics(&view, cfg)?)
                }
                _ => {
                    let rows = cfg
                        .data
                        .samples()
                        .iter()
                        .map(|x| model.forward(x, Some(l)))
                        .collect::<Result<Vec<_>>>()?;
                    LayerFeature::Activations(ActivationMatrix::from_rows(&rows)?)
                }
            })
        })
        .collect()
}

fn feature_similarity(
    a: &LayerFeature,
    b: &LayerFeature,
    comparator: Comparator,
    cfg: &MatchConfig,
) -> Result<f64> {
    let root_k = (cfg.family.dim() as f64).sqrt();
    match (a, b) {
        (LayerFeature::Lifted(x), LayerFeature::Lifted(y)) => {
            Ok((-airm_distance(x, y)? / root_k).exp())
        }
        (LayerFeature::Pointwise(x), LayerFeature::Pointwise(y)) => match comparator {
            Comparator::PwAirm => Ok((-pw_airm(x, y)? / root_k).exp()),
            _ => Ok(1.0 - msa_pointwise(x, y)?),
        },
        (LayerFeature::Activations(x), LayerFeature::Activations(y)) => match comparator {
            Comparator::CkaLin => linear_cka(x, y),
            Comparator::CkaRbf => rbf_cka(x, y, cfg.bandwidth),
            Comparator::Procrustes => Ok(-procrustes_distance(x, y)?),
            _ => cca_r2(x, y, cfg.cca_ridge),
        },
        _ => unreachable!("features built with one comparator"),
    }
}

fn layer_ids(layers: &[usize]) -> Vec<String> {
    layers.iter().map(|l| format!("L{l}")).collect()
}

fn features_similarity(
    fa: &[LayerFeature],
    fb: &[LayerFeature],
    layers: &[usize],
    comparator: Comparator,
    cfg: &MatchConfig,
) -> Result<SimilarityMatrix> {
    let n = layers.len();
    let mut values = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            values[(i, j)] = feature_similarity(&fa[i], &fb[j], comparator, cfg)?;
        }
    }
    SimilarityMatrix::square(layer_ids(layers), values)
}

/// `L×L` similarity between the listed layers of two models.
pub fn compare_models(
    a: &RepMap,
    b: &RepMap,
    layers: &[usize],
    comparator: Comparator,
    cfg: &MatchConfig,
) -> Result<SimilarityMatrix> {
    let fa = layer_features(a, layers, comparator, cfg)?;
    let fb = layer_features(b, layers, comparator, cfg)?;
    features_similarity(&fa, &fb, layers, comparator, cfg)
}

#[derive(Clone, Debug)]
pub struct PairMatrix {
    pub a: usize,
    pub b: usize,
    pub matrix: SimilarityMatrix,
}

#[derive(Clone, Debug)]
pub struct LayerMatching {
    pub pairs: Vec<PairMatrix>,
    pub average: SimilarityMatrix,
}

/// Similarity matrices for every unordered model pair and their entrywise mean.
pub fn layer_similarity_matrix(
    bank: &[RepMap],
    layers: &[usize],
    comparator: Comparator,
    cfg: &MatchConfig,
) -> Result<LayerMatching> {
    if bank.len() < 2 {
        return Err(Error::InvalidArgument("layer matching needs at least two models".into()));
    }
    if layers.is_empty() {
        return Err(Error::InvalidArgument("no layers selected".into()));
    }
    let features = bank
        .par_iter()
        .map(|m| layer_features(m, layers, comparator, cfg))
        .collect::<Result<Vec<_>>>()?;
    let index_pairs: Vec<(usize, usize)> = (0..bank.len())
        .flat_map(|a| (a + 1..bank.len()).map(move |b| (a, b)))
        .collect();
    let pairs = index_pairs
        .par_iter()
        .map(|&(a, b)| {
            let matrix = features_similarity(&features[a], &features[b], layers, comparator, cfg)?;
            Ok(PairMatrix { a, b, matrix })
        })
        .collect::<Result<Vec<_>>>()?;
    let average = average_matrix(&pairs.iter().map(|p| &p.matrix).collect::<Vec<_>>())?;
    Ok(LayerMatching { pairs, average })
}

pub fn average_matrix(ms: &[&SimilarityMatrix]) -> Result<SimilarityMatrix> {
    let first = ms.first().ok_or_else(|| Error::InvalidArgument("no matrices".into()))?;
    let mut acc = DMatrix::zeros(first.values.nrows(), first.values.ncols());
    for m in ms {
        if m.values.shape() != acc.shape() {
            return Err(Error::DimMismatch {
                expected: acc.len(),
                found: m.values.len(),
            });
        }
        acc += &m.values;
    }
    SimilarityMatrix::new(first.row_ids.clone(), first.col_ids.clone(), acc / ms.len() as f64)
}

/// Row and column hits of one square matrix: `(hits, total, ties)`. A hit
/// requires the diagonal to be the strict maximum.
fn identification_counts(m: &DMatrix<f64>) -> (usize, usize, usize) {
    let n = m.nrows();
    let mut hits = 0;
    let mut ties = 0;
    for axis in 0..2 {
        for i in 0..n {
            let get = |j: usize| if axis == 0 { m[(i, j)] } else { m[(j, i)] };
            let max = (0..n).map(get).fold(f64::NEG_INFINITY, f64::max);
            let winners = (0..n).filter(|&j| get(j) == max).count();
            if winners > 1 {
                ties += 1;
            }
            if winners == 1 && get(i) == max {
                hits += 1;
            }
        }
    }
    (hits, 2 * n, ties)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Identification {
    pub accuracy: f64,
    /// Rows and columns whose maximum was shared by several entries.
    pub ties: usize,
}

/// Mean over matrices of the row/column identification rate, in percent.
pub fn identification_accuracy(matrices: &[&SimilarityMatrix]) -> Result<Identification> {
    if matrices.is_empty() {
        return Err(Error::InvalidArgument("no matrices".into()));
    }
    let mut acc = 0.0;
    let mut ties = 0;
    for m in matrices {
        if !m.is_square() {
            return Err(Error::InvalidMatrix("identification needs square matrices".into()));
        }
        let (h, t, tied) = identification_counts(&m.values);
        acc += h as f64 / t as f64;
        ties += tied;
    }
    Ok(Identification {
        accuracy: 100.0 * acc / matrices.len() as f64,
        ties,
    })
}

/// `D(Δ)`: mean similarity over entries with `|i − j| = Δ`.
pub fn decay_curve(m: &SimilarityMatrix) -> Result<Vec<f64>> {
    if !m.is_square() {
        return Err(Error::InvalidMatrix("decay needs a square matrix".into()));
    }
    let n = m.values.nrows();
    Ok((0..n)
        .map(|delta| {
            let mut sum = 0.0;
            let mut count = 0;
            for i in 0..n {
                for j in 0..n {
                    if i.abs_diff(j) == delta {
                        sum += m.values[(i, j)];
                        count += 1;
                    }
                }
            }
            sum / count as f64
        })
        .collect())
}

/// Mean over rows and columns of `S_ii − max_{j≠i} S_ij`.
pub fn top1_margin(matrices: &[&SimilarityMatrix]) -> Result<f64> {
    let mut total = 0.0;
    let mut count = 0usize;
    for m in matrices {
        if !m.is_square() {
            return Err(Error::InvalidMatrix("margin needs square matrices".into()));
        }
        let n = m.values.nrows();
        if n < 2 {
            continue;
        }
        for i in 0..n {
            let row = (0..n).filter(|&j| j != i).map(|j| m.values[(i, j)]).fold(f64::NEG_INFINITY, f64::max);
            let col = (0..n).filter(|&j| j != i).map(|j| m.values[(j, i)]).fold(f64::NEG_INFINITY, f64::max);
            total += 2.0 * m.values[(i, i)] - row - col;
            count += 2;
        }
    }
    if count == 0 {
        return Err(Error::InvalidArgument("margin needs matrices with at least 2 rows".into()));
    }
    Ok(total / count as f64)
}

/// Mann–Whitney AUC of positives against negatives, ties at midrank.
pub fn auc(positives: &[f64], negatives: &[f64]) -> Option<f64> {
    if positives.is_empty() || negatives.is_empty() {
        return None;
    }
    let mut all: Vec<(f64, bool)> = positives
        .iter()
        .map(|&v| (v, true))
        .chain(negatives.iter().map(|&v| (v, false)))
        .collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < all.len() {
        let mut j = i;
        while j + 1 < all.len() && all[j + 1].0 == all[i].0 {
            j += 1;
        }
        let midrank = (i + j) as f64 / 2.0 + 1.0;
        rank_sum += midrank * all[i..=j].iter().filter(|e| e.1).count() as f64;
        i = j + 1;
    }
    let (np, nn) = (positives.len() as f64, negatives.len() as f64);
    Some((rank_sum - np * (np + 1.0) / 2.0) / (np * nn))
}

/// AUC of pooled diagonal entries against pooled off-diagonal entries.
pub fn diag_auc(matrices: &[&SimilarityMatrix]) -> Result<f64> {
    let mut pos = Vec::new();
    let mut neg = Vec::new();
    for m in matrices {
        if !m.is_square() {
            return Err(Error::InvalidMatrix("diag AUC needs square matrices".into()));
        }
        let n = m.values.nrows();
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    pos.push(m.values[(i, j)]);
                } else {
                    neg.push(m.values[(i, j)]);
                }
            }
        }
    }
    auc(&pos, &neg).ok_or_else(|| Error::InvalidArgument("diag AUC needs off-diagonal entries".into()))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairDetail {
    pub a: usize,
    pub b: usize,
    pub accuracy: f64,
    pub margin: f64,
    pub diag_auc: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RetrievalReport {
    pub accuracy: f64,
    pub ties: usize,
    pub mean_margin: f64,
    pub diag_auc: f64,
    pub decay: Vec<f64>,
    pub per_pair: Vec<PairDetail>,
}

pub fn layer_report(matching: &LayerMatching) -> Result<RetrievalReport> {
    let ms: Vec<&SimilarityMatrix> = matching.pairs.iter().map(|p| &p.matrix).collect();
    let id = identification_accuracy(&ms)?;
    let per_pair = matching
        .pairs
        .iter()
        .map(|p| {
            Ok(PairDetail {
                a: p.a,
                b: p.b,
                accuracy: identification_accuracy(&[&p.matrix])?.accuracy,
                margin: top1_margin(&[&p.matrix])?,
                diag_auc: diag_auc(&[&p.matrix])?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RetrievalReport {
        accuracy: id.accuracy,
        ties: id.ties,
        mean_margin: top1_margin(&ms)?,
        diag_auc: diag_auc(&ms)?,
        decay: decay_curve(&matching.average)?,
        per_pair,
    })
}

/// One experiment-level operator with its donor and label.
#[derive(Clone, Debug)]
pub struct RetrievalRecord {
    pub id: String,
    pub donor: String,
    pub label: String,
    pub operator: SpdMatrix,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OperatorComparator {
    /// `exp(−d_AIRM/√k)`.
    Sras,
    /// `exp(−d_LE/√k)`.
    LogEuclidean,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QueryOutcome {
    pub id: String,
    pub nearest: String,
    pub similarity: f64,
    pub correct: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DonorReport {
    /// Fraction of answered queries whose nearest donor-distinct candidate shares the label.
    pub top1: Option<f64>,
    pub n_queries: usize,
    /// Queries without any donor-distinct candidate.
    pub excluded: Vec<String>,
    /// Same-label vs different-label AUC over donor-distinct pairs.
    pub diag_auc: Option<f64>,
    pub queries: Vec<QueryOutcome>,
}

/// Pairwise operator similarities of the records.
pub fn record_similarities(records: &[RetrievalRecord], comparator: OperatorComparator) -> Result<DMatrix<f64>> {
    let n = records.len();
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
    let values = pairs
        .par_iter()
        .map(|&(i, j)| {
            let (a, b) = (&records[i].operator, &records[j].operator);
            let root_k = (a.dim() as f64).sqrt();
            let d = match comparator {
                OperatorComparator::Sras => airm_distance(a, b)?,
                OperatorComparator::LogEuclidean => log_euclidean_distance(a, b)?,
            };
            Ok((-d / root_k).exp())
        })
        .collect::<Result<Vec<f64>>>()?;
    let mut sim = DMatrix::from_element(n, n, 1.0);
    for (&(i, j), v) in pairs.iter().zip(values) {
        sim[(i, j)] = v;
        sim[(j, i)] = v;
    }
    Ok(sim)
}

/// Donor-distinct top-1 from a precomputed similarity matrix. Ties go to
/// the candidate listed first.
pub fn donor_distinct_from_similarity(
    ids: &[String],
    donors: &[String],
    labels: &[String],
    sim: &DMatrix<f64>,
) -> Result<DonorReport> {
    let n = ids.len();
    if donors.len() != n || labels.len() != n || sim.nrows() != n || sim.ncols() != n {
        return Err(Error::DimMismatch {
            expected: n,
            found: donors.len().min(labels.len()).min(sim.nrows()),
        });
    }
    let mut queries = Vec::new();
    let mut excluded = Vec::new();
    let mut pos = Vec::new();
    let mut neg = Vec::new();
    for q in 0..n {
        let mut best: Option<usize> = None;
        for c in 0..n {
            if donors[c] == donors[q] {
                continue;
            }
            if c > q {
                if labels[c] == labels[q] {
                    pos.push(sim[(q, c)]);
                } else {
                    neg.push(sim[(q, c)]);
                }
            }
            if best.is_none_or(|b| sim[(q, c)] > sim[(q, b)]) {
                best = Some(c);
            }
        }
        match best {
            Some(b) => queries.push(QueryOutcome {
                id: ids[q].clone(),
                nearest: ids[b].clone(),
                similarity: sim[(q, b)],
                correct: labels[b] == labels[q],
            }),
            None => excluded.push(ids[q].clone()),
        }
    }
    let top1 = if queries.is_empty() {
        None
    } else {
        Some(queries.iter().filter(|q| q.correct).count() as f64 / queries.len() as f64)
    };
    Ok(DonorReport {
        top1,
        n_queries: queries.len(),
        excluded,
        diag_auc: auc(&pos, &neg),
        queries,
    })
}

fn record_columns(records: &[RetrievalRecord]) -> (Vec<String>, Vec<String>, Vec<String>) {
    (
        records.iter().map(|r| r.id.clone()).collect(),
        records.iter().map(|r| r.donor.clone()).collect(),
        records.iter().map(|r| r.label.clone()).collect(),
    )
}

pub fn donor_distinct_top1(records: &[RetrievalRecord], comparator: OperatorComparator) -> Result<DonorReport> {
    if let Some(r) = records.iter().find(|r| r.operator.dim() != records[0].operator.dim()) {
        return Err(Error::DimMismatch {
            expected: records[0].operator.dim(),
            found: r.operator.dim(),
        });
    }
    let sim = record_similarities(records, comparator)?;
    let (ids, donors, labels) = record_columns(records);
    donor_distinct_from_similarity(&ids, &donors, &labels, &sim)
}

/// Mean top-1 accuracy after shuffling labels across records.
pub fn shuffled_label_top1(
    records: &[RetrievalRecord],
    comparator: OperatorComparator,
    n_shuffles: usize,
    seed: u64,
) -> Result<Option<f64>> {
    let sim = record_similarities(records, comparator)?;
    let (ids, donors, mut labels) = record_columns(records);
    let mut rng = seeded(seed);
    let mut total = 0.0;
    let mut count = 0usize;
    for _ in 0..n_shuffles {
        labels.shuffle(&mut rng);
        if let Some(t) = donor_distinct_from_similarity(&ids, &donors, &labels, &sim)?.top1 {
            total += t;
            count += 1;
        }
    }
    Ok((count > 0).then(|| total / count as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random::{gaussian_vector, random_spd};
    use crate::repmap::{Dense, Layer};

    fn sim(values: DMatrix<f64>) -> SimilarityMatrix {
        let ids = (0..values.nrows()).map(|i| i.to_string()).collect();
        SimilarityMatrix::square(ids, values).unwrap()
    }

    #[test]
    fn identification_cases() {
        let id = sim(DMatrix::identity(4, 4));
        assert_eq!(identification_accuracy(&[&id]).unwrap().accuracy, 100.0);
        let anti = sim(DMatrix::from_fn(8, 8, |i, j| if i + j == 7 { 1.0 } else { 0.0 }));
        assert_eq!(identification_accuracy(&[&anti]).unwrap().accuracy, 0.0);
        // a diagonal tied with another entry is not a hit
        let tied = sim(DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0]));
        let r = identification_accuracy(&[&tied]).unwrap();
        assert_eq!(r.accuracy, 50.0);
        assert_eq!(r.ties, 2);
    }

    #[test]
    fn random_scores_near_chance() {
        let mut rng = seeded(1);
        let ms: Vec<SimilarityMatrix> =
            (0..400).map(|_| sim(DMatrix::from_vec(8, 8, gaussian_vector(&mut rng, 64)))).collect();
        let refs: Vec<&SimilarityMatrix> = ms.iter().collect();
        let acc = identification_accuracy(&refs).unwrap().accuracy;
        assert!((acc - 12.5).abs() < 2.0, "{acc}");
    }

    #[test]
    fn metric_examples() {
        let constant = sim(DMatrix::from_element(3, 3, 0.7));
        assert!(decay_curve(&constant).unwrap().iter().all(|d| (d - 0.7).abs() < 1e-15));
        assert_eq!(top1_margin(&[&constant]).unwrap(), 0.0);
        assert_eq!(diag_auc(&[&constant]).unwrap(), 0.5);
        let id = sim(DMatrix::identity(3, 3));
        assert_eq!(top1_margin(&[&id]).unwrap(), 1.0);
        assert_eq!(diag_auc(&[&id]).unwrap(), 1.0);
        let banded = sim(DMatrix::from_fn(3, 3, |i, j| [1.0, 0.5, 0.2][i.abs_diff(j)]));
        let d = decay_curve(&banded).unwrap();
        assert_eq!(d, vec![1.0, 0.5, 0.2]);
        assert_eq!(top1_margin(&[&banded]).unwrap(), 0.5);
        assert_eq!(diag_auc(&[&banded]).unwrap(), 1.0);
    }

    #[test]
    fn monotone_transforms_preserve_metrics() {
        let mut rng = seeded(4);
        let m = sim(DMatrix::from_vec(5, 5, gaussian_vector(&mut rng, 25)).map(|x| x.abs() + 0.1));
        let t = sim(m.values.map(|x| (-x.recip()).exp()));
        assert_eq!(
            identification_accuracy(&[&m]).unwrap(),
            identification_accuracy(&[&t]).unwrap()
        );
        assert_eq!(diag_auc(&[&m]).unwrap(), diag_auc(&[&t]).unwrap());
    }

    fn linear_bank() -> (Vec<RepMap>, MatchConfig) {
        let dense = |w: &[f64]| Layer::Dense(Dense::new(DMatrix::from_row_slice(2, 2, w), vec![0.0; 2]).unwrap());
        let a = RepMap::new(2, vec![dense(&[1.0, 0.0, 0.0, 1.0]), dense(&[2.0, 0.0, 0.0, 1.0])], false).unwrap();
        let b = RepMap::new(2, vec![dense(&[1.0, 0.0, 0.0, 2.0]), dense(&[1.0, 0.0, 0.0, 1.0])], false).unwrap();
        let mut rng = seeded(3);
        let cfg = MatchConfig {
            family: PerturbationFamily::identity(2),
            data: Dataset::new((0..5).map(|_| gaussian_vector(&mut rng, 2)).collect()).unwrap(),
            eps_reg: 1e-4,
            bandwidth: Bandwidth::Median,
            cca_ridge: Some(1e-6),
        };
        (vec![a, b], cfg)
    }

    #[test]
    fn self_comparison_has_unit_diagonal() {
        let (bank, cfg) = linear_bank();
        let m = compare_models(&bank[0], &bank[0], &[1, 2], Comparator::Sras, &cfg).unwrap();
        for i in 0..2 {
            assert!((m.values[(i, i)] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn linear_bank_closed_form() {
        let (bank, cfg) = linear_bank();
        let m = compare_models(&bank[0], &bank[1], &[1, 2], Comparator::Sras, &cfg).unwrap();
        // G per layer: a = (I, diag(4,1)), b = (diag(1,4), diag(1,4)); lift adds ε·Tr/2
        let lift = |d: [f64; 2]| {
            let s = 1e-4 * (d[0] + d[1]) / 2.0;
            [d[0] + s, d[1] + s]
        };
        let ga = [lift([1.0, 1.0]), lift([4.0, 1.0])];
        let gb = [lift([1.0, 4.0]), lift([1.0, 4.0])];
        for i in 0..2 {
            for j in 0..2 {
                let d = ((gb[j][0] / ga[i][0]).ln().powi(2) + (gb[j][1] / ga[i][1]).ln().powi(2)).sqrt();
                assert!((m.values[(i, j)] - (-d / 2f64.sqrt()).exp()).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn average_of_pairs() {
        let (mut bank, cfg) = linear_bank();
        bank.push(bank[0].with_final_bias_shift(&[1.0, 1.0]).unwrap());
        for c in Comparator::ALL {
            let out = layer_similarity_matrix(&bank, &[1, 2], c, &cfg).unwrap();
            assert_eq!(out.pairs.len(), 3);
            let refs: Vec<&SimilarityMatrix> = out.pairs.iter().map(|p| &p.matrix).collect();
            let avg = average_matrix(&refs).unwrap();
            assert_eq!(avg, out.average);
            let report = layer_report(&out).unwrap();
            assert!((0.0..=100.0).contains(&report.accuracy));
            assert_eq!(report.decay.len(), 2);
        }
    }

    fn record(id: &str, donor: &str, label: &str, op: SpdMatrix) -> RetrievalRecord {
        RetrievalRecord {
            id: id.into(),
            donor: donor.into(),
            label: label.into(),
            operator: op,
        }
    }

    #[test]
    fn donor_distinct_cases() {
        let x = SpdMatrix::from_diagonal(&[1.0, 2.0]).unwrap();
        let y = SpdMatrix::from_diagonal(&[3.0, 0.5]).unwrap();
        let recs = vec![
            record("a", "d1", "x", x.clone()),
            record("b", "d1", "y", y.clone()),
            record("c", "d2", "x", x.clone()),
            record("d", "d2", "y", y.clone()),
        ];
        let r = donor_distinct_top1(&recs, OperatorComparator::Sras).unwrap();
        assert_eq!(r.top1, Some(1.0));
        assert_eq!(r.diag_auc, Some(1.0));
        let single: Vec<_> = recs.iter().map(|r| RetrievalRecord { donor: "d".into(), ..r.clone() }).collect();
        let r = donor_distinct_top1(&single, OperatorComparator::Sras).unwrap();
        assert_eq!(r.top1, None);
        assert_eq!(r.excluded.len(), 4);
    }

    #[test]
    fn random_labels_hit_chance() {
        // operators cluster by donor, labels unrelated to operators
        let mut rng = seeded(7);
        let mut recs = Vec::new();
        for d in 0..6 {
            let base = random_spd(&mut rng, 3, 0.5);
            for e in 0..4 {
                let label = if (d + e) % 2 == 0 { "x" } else { "y" };
                recs.push(record(&format!("{d}-{e}"), &format!("d{d}"), label, base.clone()));
            }
        }
        let chance = shuffled_label_top1(&recs, OperatorComparator::Sras, 400, 1).unwrap().unwrap();
        assert!((chance - 0.5).abs() < 0.05, "{chance}");
    }

    #[test]
    fn auc_midrank() {
        assert_eq!(auc(&[1.0], &[1.0]), Some(0.5));
        assert_eq!(auc(&[2.0, 1.0], &[1.0, 0.0]), Some(0.875));
        assert_eq!(auc(&[], &[1.0]), None);
    }

    #[test]
    fn comparator_names_round_trip() {
        for c in Comparator::ALL {
            assert_eq!(c.name().parse::<Comparator>().unwrap(), c);
        }
        assert!("nope".parse::<Comparator>().is_err());
    }

    #[test]
    fn csv_layout() {
        let m = sim(DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.25, 1.0]));
        assert_eq!(m.to_csv(), "id,0,1\n0,1.0,0.5\n1,0.25,1.0\n");
    }
}
