//! Group contrasts of class-conditional summaries, their extremal
//! directions, and finite-probe scoring on a classifier margin.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::random::{random_unit_vector, seeded};
use crate::repmap::MarginModel;
use crate::spd::{check_dims, format_f64, SymMatrix};
use crate::summaries::{gain_shape, PerturbationFamily, SensitivitySummary};

pub const DEFAULT_AMPLITUDES: [f64; 2] = [0.5, 1.0];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ContrastKind {
    Full,
    Shape,
}

/// `mean_A − mean_B` of class-conditional summaries (possibly trace-normalized).
#[derive(Clone, Debug, PartialEq)]
pub struct ContrastOperator {
    pub delta: SymMatrix,
    pub class_label: Option<usize>,
    pub group_ids: (String, String),
    pub kind: ContrastKind,
    pub family_id: String,
}

impl ContrastOperator {
    pub fn dim(&self) -> usize {
        self.delta.dim()
    }

    pub fn with_group_ids(mut self, a: impl Into<String>, b: impl Into<String>) -> Self {
        self.group_ids = (a.into(), b.into());
        self
    }
}

fn group_mean(group: &[SensitivitySummary], shape_only: bool) -> Result<SymMatrix> {
    let ops = group
        .iter()
        .map(|s| {
            if shape_only {
                // 1×1 shapes are all identical; keep the normalized scalar.
                let t = s.operator().trace();
                if !(t > 0.0) {
                    return Err(Error::ZeroSummary { trace: t });
                }
                if s.dim() == 1 {
                    return Ok(s.operator().scaled(1.0 / t));
                }
                gain_shape(s.operator()).map(|(_, shape)| shape)
            } else {
                Ok(s.operator().clone())
            }
        })
        .collect::<Result<Vec<_>>>()?;
    SymMatrix::mean(&ops)
}

/// Contrast of group A against group B.
pub fn group_contrast(
    a: &[SensitivitySummary],
    b: &[SensitivitySummary],
    shape_only: bool,
) -> Result<ContrastOperator> {
    let first = a
        .first()
        .or(b.first())
        .ok_or_else(|| Error::InvalidArgument("contrast groups are empty".into()))?;
    if a.is_empty() || b.is_empty() {
        return Err(Error::InvalidArgument("both contrast groups need a summary".into()));
    }
    for s in a.iter().chain(b) {
        check_dims(first.dim(), s.dim())?;
        if s.family_id() != first.family_id() {
            return Err(Error::FamilyMismatch(
                first.family_id().to_string(),
                s.family_id().to_string(),
            ));
        }
        if s.class_label() != first.class_label() {
            return Err(Error::InvalidArgument(format!(
                "mixed class labels {:?} and {:?} in one contrast",
                first.class_label(),
                s.class_label()
            )));
        }
    }
    let delta = group_mean(a, shape_only)?.sub(&group_mean(b, shape_only)?)?;
    Ok(ContrastOperator {
        delta,
        class_label: first.class_label(),
        group_ids: ("A".into(), "B".into()),
        kind: if shape_only {
            ContrastKind::Shape
        } else {
            ContrastKind::Full
        },
        family_id: first.family_id().to_string(),
    })
}

/// Contrast after reassigning the pooled summaries: `assignment[i]` puts
/// summary `i` of `a ++ b` into group A.
pub fn contrast_from_assignment(
    a: &[SensitivitySummary],
    b: &[SensitivitySummary],
    assignment: &[bool],
    shape_only: bool,
) -> Result<ContrastOperator> {
    check_dims(a.len() + b.len(), assignment.len())?;
    let (mut ga, mut gb) = (Vec::new(), Vec::new());
    for (s, &in_a) in a.iter().chain(b).zip(assignment) {
        if in_a {
            ga.push(s.clone());
        } else {
            gb.push(s.clone());
        }
    }
    group_contrast(&ga, &gb, shape_only)
}

/// Label-permutation null: group sizes are kept, memberships shuffled.
pub fn permuted_contrast(
    a: &[SensitivitySummary],
    b: &[SensitivitySummary],
    shape_only: bool,
    seed: u64,
) -> Result<ContrastOperator> {
    let mut assignment: Vec<bool> = (0..a.len() + b.len()).map(|i| i < a.len()).collect();
    assignment.shuffle(&mut seeded(seed));
    contrast_from_assignment(a, b, &assignment, shape_only)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Side {
    #[serde(rename = "+")]
    Plus,
    #[serde(rename = "-")]
    Minus,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeDirection {
    #[serde(rename = "sign")]
    pub side: Side,
    pub v: Vec<f64>,
    pub lambda: f64,
}

/// Finite probe directions in family coordinates with their amplitudes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ProbeSetJson")]
pub struct ProbeSet {
    pub k: usize,
    pub family_id: String,
    pub sides: Vec<ProbeDirection>,
    pub amplitudes: Vec<f64>,
}

#[derive(Deserialize)]
struct ProbeSetJson {
    k: usize,
    family_id: String,
    sides: Vec<ProbeDirection>,
    amplitudes: Vec<f64>,
}

impl TryFrom<ProbeSetJson> for ProbeSet {
    type Error = Error;

    fn try_from(raw: ProbeSetJson) -> Result<Self> {
        ProbeSet::new(raw.k, raw.family_id, raw.sides, raw.amplitudes)
    }
}

impl ProbeSet {
    pub fn new(
        k: usize,
        family_id: impl Into<String>,
        sides: Vec<ProbeDirection>,
        amplitudes: Vec<f64>,
    ) -> Result<Self> {
        for d in &sides {
            check_dims(k, d.v.len())?;
            let norm = d.v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if (norm - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidProbeSet(format!("direction has norm {norm}")));
            }
        }
        if let Some(a) = amplitudes.iter().find(|a| !(a.is_finite() && **a >= 0.0)) {
            return Err(Error::InvalidProbeSet(format!("amplitude {a} is not a non-negative real")));
        }
        Ok(Self {
            k,
            family_id: family_id.into(),
            sides,
            amplitudes,
        })
    }

    pub fn side(&self, side: Side) -> impl Iterator<Item = &ProbeDirection> {
        self.sides.iter().filter(move |d| d.side == side)
    }

    pub fn with_amplitudes(mut self, amplitudes: Vec<f64>) -> Result<Self> {
        self.amplitudes = amplitudes;
        Self::new(self.k, self.family_id, self.sides, self.amplitudes)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("probe set serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }
}

fn normalized(v: Vec<f64>) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / n).collect()
}

/// `+` side from the `r` largest eigenvalues (descending), `−` side from the
/// `r` smallest (ascending).
pub fn top_contrast_directions(contrast: &ContrastOperator, r_per_side: usize) -> Result<ProbeSet> {
    let k = contrast.dim();
    if r_per_side == 0 || r_per_side > k {
        return Err(Error::InvalidRank {
            requested: r_per_side,
            dim: k,
        });
    }
    let eig = contrast.delta.eigen();
    let mut sides = Vec::with_capacity(2 * r_per_side);
    for i in 0..r_per_side {
        let idx = k - 1 - i;
        sides.push(ProbeDirection {
            side: Side::Plus,
            v: normalized(eig.vector(idx)),
            lambda: eig.values[idx],
        });
    }
    for i in 0..r_per_side {
        sides.push(ProbeDirection {
            side: Side::Minus,
            v: normalized(eig.vector(i)),
            lambda: eig.values[i],
        });
    }
    ProbeSet::new(k, contrast.family_id.clone(), sides, DEFAULT_AMPLITUDES.to_vec())
}

/// `vᵀΔv / vᵀv`.
pub fn rayleigh_quotient(delta: &SymMatrix, v: &[f64]) -> Result<f64> {
    let nn: f64 = v.iter().map(|x| x * x).sum();
    Ok(delta.quadratic_form(v)? / nn)
}

/// `(λ_max(mean Δ_x), mean λ_max(Δ_x))`; the first never exceeds the second.
pub fn shared_vs_pointwise_gap(contrasts: &[SymMatrix]) -> Result<(f64, f64)> {
    if contrasts.is_empty() {
        return Err(Error::InvalidArgument("no contrasts given".into()));
    }
    let shared = SymMatrix::mean(contrasts)?.eigen().max();
    let pointwise =
        contrasts.iter().map(|d| d.eigen().max()).sum::<f64>() / contrasts.len() as f64;
    Ok((shared, pointwise))
}

/// Side means and their difference.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeScore {
    pub r_plus: f64,
    pub r_minus: f64,
    pub score: f64,
}

/// `s = R⁺ − R⁻` where `R` averages `M(x) − M(x + σ·a·P·v)` over a side's
/// directions, the amplitudes, and `σ = ±1`.
pub fn probe_score<M: MarginModel + ?Sized>(
    model: &M,
    x: &[f64],
    true_class: usize,
    probes: &ProbeSet,
    family: &PerturbationFamily,
) -> Result<ProbeScore> {
    if probes.amplitudes.is_empty() {
        return Err(Error::InvalidProbeSet("amplitude set is empty".into()));
    }
    check_dims(family.dim(), probes.k)?;
    check_dims(family.ambient_dim(), x.len())?;
    let base = model.margin(x, true_class)?;
    let side_mean = |side: Side| -> Result<f64> {
        let mut total = 0.0;
        let mut count = 0usize;
        for d in probes.side(side) {
            let dir = family.embed(&d.v)?;
            for &a in &probes.amplitudes {
                for sigma in [1.0, -1.0] {
                    let xp: Vec<f64> = x.iter().zip(&dir).map(|(xi, di)| xi + sigma * a * di).collect();
                    total += base - model.margin(&xp, true_class)?;
                    count += 1;
                }
            }
        }
        if count == 0 {
            return Err(Error::InvalidProbeSet(format!("{side:?} side has no directions")));
        }
        Ok(total / count as f64)
    };
    let r_plus = side_mean(Side::Plus)?;
    let r_minus = side_mean(Side::Minus)?;
    Ok(ProbeScore {
        r_plus,
        r_minus,
        score: r_plus - r_minus,
    })
}

#[derive(Clone, Debug)]
pub enum ControlKind {
    /// Seeded random unit directions ranked by their contrast quotient.
    Random { n_candidates: usize },
    /// Leading eigenvectors of the pooled summary ranked by contrast quotient.
    Pooled { n_candidates: usize },
    /// Extremal directions of a contrast built from permuted group labels.
    Permuted(ContrastOperator),
}

impl ControlKind {
    pub fn name(&self) -> &'static str {
        match self {
            ControlKind::Random { .. } => "random",
            ControlKind::Pooled { .. } => "pooled",
            ControlKind::Permuted(_) => "permuted",
        }
    }
}

fn rank_candidates(
    contrast: &ContrastOperator,
    candidates: Vec<Vec<f64>>,
    r: usize,
) -> Result<ProbeSet> {
    if 2 * r > candidates.len() || r == 0 {
        return Err(Error::InvalidRank {
            requested: r,
            dim: candidates.len() / 2,
        });
    }
    let mut scored = candidates
        .into_iter()
        .map(|v| Ok((rayleigh_quotient(&contrast.delta, &v)?, v)))
        .collect::<Result<Vec<_>>>()?;
    // stable sort keeps candidate order on ties
    scored.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut sides = Vec::with_capacity(2 * r);
    for (lambda, v) in scored.iter().take(r) {
        sides.push(ProbeDirection {
            side: Side::Plus,
            v: normalized(v.clone()),
            lambda: *lambda,
        });
    }
    for (lambda, v) in scored.iter().rev().take(r) {
        sides.push(ProbeDirection {
            side: Side::Minus,
            v: normalized(v.clone()),
            lambda: *lambda,
        });
    }
    ProbeSet::new(contrast.dim(), contrast.family_id.clone(), sides, DEFAULT_AMPLITUDES.to_vec())
}

/// Control probe sets with `r` directions per side.
pub fn control_probes(
    contrast: &ContrastOperator,
    pooled: &SymMatrix,
    kind: &ControlKind,
    r_per_side: usize,
    seed: u64,
) -> Result<ProbeSet> {
    let k = contrast.dim();
    check_dims(k, pooled.dim())?;
    match kind {
        ControlKind::Random { n_candidates } => {
            let mut rng = seeded(seed);
            let cands = (0..*n_candidates).map(|_| random_unit_vector(&mut rng, k)).collect();
            rank_candidates(contrast, cands, r_per_side)
        }
        ControlKind::Pooled { n_candidates } => {
            if *n_candidates > k {
                return Err(Error::InvalidRank {
                    requested: *n_candidates,
                    dim: k,
                });
            }
            let eig = pooled.eigen();
            let cands = (0..*n_candidates).map(|i| eig.vector(k - 1 - i)).collect();
            rank_candidates(contrast, cands, r_per_side)
        }
        ControlKind::Permuted(permuted) => {
            check_dims(k, permuted.dim())?;
            top_contrast_directions(permuted, r_per_side)
        }
    }
}

/// One row of a probe score table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub model_id: String,
    pub image_id: String,
    pub class: usize,
    pub probe_kind: String,
    pub score: f64,
}

pub fn scores_to_csv(rows: &[ScoreRow]) -> String {
    let mut out = String::from("model_id,image_id,class,probe_kind,score\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.model_id,
            r.image_id,
            r.class,
            r.probe_kind,
            format_f64(r.score)
        ));
    }
    out
}

pub fn scores_from_csv(text: &str) -> Result<Vec<ScoreRow>> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    match lines.next() {
        Some((_, h)) if h.trim() == "model_id,image_id,class,probe_kind,score" => {}
        _ => return Err(Error::Parse("line 1: expected score table header".into())),
    }
    lines
        .map(|(i, line)| {
            let f: Vec<&str> = line.split(',').map(str::trim).collect();
            if f.len() != 5 {
                return Err(Error::Parse(format!("line {}: expected 5 fields", i + 1)));
            }
            let bad = |what: &str| Error::Parse(format!("line {}: bad {what}", i + 1));
            Ok(ScoreRow {
                model_id: f[0].to_string(),
                image_id: f[1].to_string(),
                class: f[2].parse().map_err(|_| bad("class"))?,
                probe_kind: f[3].to_string(),
                score: f[4].parse().map_err(|_| bad("score"))?,
            })
        })
        .collect()
}
