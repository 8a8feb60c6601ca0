use std::path::{Path, PathBuf};

use anyhow::Result;
use clap::ValueEnum;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use sras_core::probes::{
    control_probes, group_contrast, permuted_contrast, probe_score, scores_to_csv, top_contrast_directions,
    ControlKind, ProbeSet, ScoreRow, DEFAULT_AMPLITUDES,
};
use sras_core::repmap::{DifferentiableMap, RepMap};
use sras_core::spd::SymMatrix;

use crate::io::{input_error, json_value, stem, Inputs, Output, RunConfig};
use crate::summarize::load_family;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Control {
    Random,
    Pooled,
    Permuted,
}

#[derive(clap::Args, Debug, Serialize)]
pub struct Args {
    /// Summary JSONs of group A.
    #[arg(long, num_args = 1.., required = true)]
    group_a: Vec<PathBuf>,
    /// Summary JSONs of group B.
    #[arg(long, num_args = 1.., required = true)]
    group_b: Vec<PathBuf>,
    /// Directions per side.
    #[arg(long, default_value_t = 1)]
    r: usize,
    /// Contrast trace-normalized summaries.
    #[arg(long)]
    shape_only: bool,
    /// Control probe sets to build alongside the contrast probes.
    #[arg(long, value_enum, value_delimiter = ',')]
    control: Vec<Control>,
    /// Candidate directions of the random and pooled controls (default: 64 random, k pooled).
    #[arg(long)]
    n_candidates: Option<usize>,
    /// Probe amplitudes in family coordinates.
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_AMPLITUDES.to_vec())]
    amplitudes: Vec<f64>,
    /// Classifier model JSONs to score the probes on.
    #[arg(long, num_args = 1..)]
    models: Vec<PathBuf>,
    /// Labeled dataset CSV for scoring.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Family CSV used to build the summaries; identity when omitted.
    #[arg(long)]
    family: Option<PathBuf>,
    /// Keep only the leading k family directions.
    #[arg(long)]
    k: Option<usize>,
}

fn mean(xs: &[f64]) -> Option<f64> {
    (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
}

pub fn run(args: &Args, config: &RunConfig, out: &Path) -> Result<()> {
    let mut inputs = Inputs::default();
    let a = args.group_a.iter().map(|p| inputs.summary(p)).collect::<Result<Vec<_>>>()?;
    let b = args.group_b.iter().map(|p| inputs.summary(p)).collect::<Result<Vec<_>>>()?;
    let contrast = group_contrast(&a, &b, args.shape_only)?.with_group_ids(
        args.group_a.iter().map(|p| stem(p)).collect::<Vec<_>>().join("+"),
        args.group_b.iter().map(|p| stem(p)).collect::<Vec<_>>().join("+"),
    );
    let k = contrast.dim();
    let main = top_contrast_directions(&contrast, args.r)?.with_amplitudes(args.amplitudes.clone())?;
    let mut sets: Vec<(String, ProbeSet)> = vec![("contrast".into(), main)];

    let mean_of = |g: &[sras_core::summaries::SensitivitySummary]| -> Result<SymMatrix> {
        let ops: Vec<SymMatrix> = g.iter().map(|s| s.operator().clone()).collect();
        Ok(SymMatrix::mean(&ops)?)
    };
    let pooled = mean_of(&a)?.add(&mean_of(&b)?)?;
    for (i, c) in args.control.iter().enumerate() {
        let seed = config.seed.wrapping_add(i as u64);
        let kind = match c {
            Control::Random => ControlKind::Random {
                n_candidates: args.n_candidates.unwrap_or(64),
            },
            Control::Pooled => ControlKind::Pooled {
                n_candidates: args.n_candidates.unwrap_or(k),
            },
            Control::Permuted => ControlKind::Permuted(permuted_contrast(&a, &b, args.shape_only, seed)?),
        };
        let set = control_probes(&contrast, &pooled, &kind, args.r, seed)?.with_amplitudes(args.amplitudes.clone())?;
        sets.push((kind.name().to_string(), set));
    }

    let mut rows: Vec<ScoreRow> = Vec::new();
    if !args.models.is_empty() {
        let data_path = args
            .data
            .as_ref()
            .ok_or_else(|| input_error("scoring with --models needs --data"))?;
        let models: Vec<(String, RepMap)> = args
            .models
            .iter()
            .map(|p| Ok((stem(p), inputs.model(p)?)))
            .collect::<Result<_>>()?;
        let data = inputs.dataset(data_path)?;
        let labels = data
            .labels()
            .ok_or_else(|| input_error(format!("{} has no label column", data_path.display())))?
            .to_vec();
        let d = models[0].1.input_dim();
        let family = load_family(&mut inputs, args.family.as_deref(), d, args.k)?;
        if family.id() != contrast.family_id {
            eprintln!(
                "WARNING: family mismatch: summaries use '{}', scoring uses '{}'",
                contrast.family_id,
                family.id()
            );
        }
        // clean-correct samples of the contrast's class
        let jobs: Vec<(usize, usize)> = (0..models.len())
            .flat_map(|m| (0..data.len()).map(move |i| (m, i)))
            .filter(|&(m, i)| contrast.class_label.is_none_or(|c| c == labels[i]) && {
                models[m].1.predict(data.sample(i)).map(|p| p == labels[i]).unwrap_or(false)
            })
            .collect();
        for (name, set) in &sets {
            let scored = jobs
                .par_iter()
                .map(|&(m, i)| {
                    let s = probe_score(&models[m].1, data.sample(i), labels[i], set, &family)?;
                    Ok(ScoreRow {
                        model_id: models[m].0.clone(),
                        image_id: i.to_string(),
                        class: labels[i],
                        probe_kind: name.clone(),
                        score: s.score,
                    })
                })
                .collect::<sras_core::Result<Vec<_>>>()?;
            rows.extend(scored);
        }
    }

    let eig = contrast.delta.eigen();
    let mut summary_rows = Vec::new();
    let mut output = Output::new(out, "probes", config, args, &inputs)?;
    for (name, set) in &sets {
        let file = if name == "contrast" {
            "probes.json".to_string()
        } else {
            format!("probes-{name}.json")
        };
        output.json(&file, json_value(&set.to_json())?)?;
        let scores: Vec<f64> = rows.iter().filter(|r| &r.probe_kind == name).map(|r| r.score).collect();
        summary_rows.push(json!({
            "probe_kind": name,
            "file": file,
            "n_scores": scores.len(),
            "mean_score": mean(&scores),
        }));
        match mean(&scores) {
            Some(m) => println!("{name}: {} scores, mean {m:.6e}", scores.len()),
            None if rows.is_empty() => println!("{name}: written to {file}"),
            None => println!("{name}: no clean-correct samples (empty)"),
        }
    }
    if !rows.is_empty() {
        output.text("scores.csv", &scores_to_csv(&rows))?;
    }
    output.json(
        "contrast.json",
        json!({
            "kind": contrast.kind,
            "class_label": contrast.class_label,
            "group_ids": [contrast.group_ids.0, contrast.group_ids.1],
            "family_id": contrast.family_id,
            "k": k,
            "delta": contrast.delta.to_rows(),
            "eigenvalues": eig.values,
        }),
    )?;
    output.json(
        "report.json",
        json!({
            "n_group_a": a.len(),
            "n_group_b": b.len(),
            "lambda_max": eig.max(),
            "lambda_min": eig.min(),
            "probe_sets": summary_rows,
        }),
    )?;
    println!("contrast eigenvalues {:?}", eig.values);
    Ok(())
}
