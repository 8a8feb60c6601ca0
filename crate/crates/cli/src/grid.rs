use std::path::{Path, PathBuf};

use anyhow::Result;
use clap::ValueEnum;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use sras_core::gridfisher::{
    experiment_operators, family_restriction, matched_subsample_operators, split_half_reliability, trials_from_csv,
    ConditionGrid, GridAxis, NoiseMode,
};
use sras_core::retrieval::{
    donor_distinct_top1, record_similarities, shuffled_label_top1, OperatorComparator, RetrievalRecord,
    SimilarityMatrix,
};
use sras_core::spd::spd_lift;

use crate::io::{input_error, json_value, Inputs, Output, RunConfig};

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Fisher,
    Naive,
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Metric {
    Sras,
    LogEuclidean,
}

#[derive(clap::Args, Debug, Serialize)]
pub struct Args {
    /// Trials CSV with one or more experiments.
    #[arg(long)]
    trials: PathBuf,
    /// Grid JSON; the 6×5×4 orientation/frequency/phase grid when omitted.
    #[arg(long)]
    grid: Option<PathBuf>,
    /// fisher whitens by the shrinkage noise covariance, naive uses the identity.
    #[arg(long, value_enum, default_value_t = Mode::Fisher)]
    mode: Mode,
    /// Stimulus axes kept in the operator.
    #[arg(long, default_value = "theta,rho,phi")]
    family: String,
    /// Trace-normalize the restricted operators.
    #[arg(long)]
    shape_only: bool,
    /// Cells per matched subsample; the full population when omitted.
    #[arg(long = "match")]
    n_match: Option<usize>,
    /// Matched subsamples averaged per experiment.
    #[arg(long, default_value_t = 100)]
    subsamples: usize,
    #[arg(long, value_enum, default_value_t = Metric::Sras)]
    comparator: Metric,
    /// Label shuffles of the chance control.
    #[arg(long, default_value_t = 200)]
    shuffles: usize,
    /// Split-half repetitions per experiment; 0 skips reliability.
    #[arg(long, default_value_t = 0)]
    split_half: usize,
}

struct Computed {
    record: RetrievalRecord,
    summary_json: String,
    valid_points: Option<usize>,
    shrinkage: Option<f64>,
    reliability: Option<f64>,
}

fn file_safe(id: &str) -> String {
    id.chars()
        .map(|c| if c.is_ascii_alphanumeric() || "-_.".contains(c) { c } else { '_' })
        .collect()
}

pub fn run(args: &Args, config: &RunConfig, out: &Path) -> Result<()> {
    let mut inputs = Inputs::default();
    let records = trials_from_csv(&inputs.read(&args.trials)?)?;
    let grid = match &args.grid {
        Some(p) => ConditionGrid::from_json(&inputs.read(p)?)?,
        None => ConditionGrid::standard(),
    };
    let axes = GridAxis::parse_list(&args.family)?;
    let mode = match args.mode {
        Mode::Fisher => NoiseMode::Fisher,
        Mode::Naive => NoiseMode::Naive,
    };
    let comparator = match args.comparator {
        Metric::Sras => OperatorComparator::Sras,
        Metric::LogEuclidean => OperatorComparator::LogEuclidean,
    };
    let mut seen = std::collections::BTreeSet::new();
    if let Some(r) = records.iter().find(|r| !seen.insert(file_safe(&r.id))) {
        return Err(input_error(format!("experiment id '{}' is not unique", r.id)));
    }
    if args.n_match == Some(0) || (args.n_match.is_some() && args.subsamples == 0) {
        return Err(input_error("--match and --subsamples must be positive"));
    }

    let computed = records
        .par_iter()
        .enumerate()
        .map(|(i, r)| {
            let seed = config.seed.wrapping_add(i as u64);
            let (summary, valid_points, shrinkage) = match args.n_match {
                Some(m) => (
                    matched_subsample_operators(r, &grid, mode, m, args.subsamples, seed, config.eps_spd)?,
                    None,
                    None,
                ),
                None => {
                    let op = experiment_operators(r, &grid, mode, config.eps_spd)?;
                    (op.summary, Some(op.valid_points), op.covariance.map(|c| c.shrinkage))
                }
            };
            let restricted = family_restriction(&summary, &axes, args.shape_only)?;
            let reliability = if args.split_half > 0 {
                Some(split_half_reliability(
                    r,
                    &grid,
                    mode,
                    &axes,
                    args.split_half,
                    seed,
                    config.eps_reg,
                    config.eps_spd,
                )?)
            } else {
                None
            };
            Ok(Computed {
                record: RetrievalRecord {
                    id: r.id.clone(),
                    donor: r.donor.clone(),
                    label: r.label.clone(),
                    operator: spd_lift(restricted.operator(), config.eps_reg)?,
                },
                summary_json: restricted.to_json(),
                valid_points,
                shrinkage,
                reliability,
            })
        })
        .collect::<sras_core::Result<Vec<_>>>()?;

    let retrieval: Vec<RetrievalRecord> = computed.iter().map(|c| c.record.clone()).collect();
    let report = donor_distinct_top1(&retrieval, comparator)?;
    let shuffled = shuffled_label_top1(&retrieval, comparator, args.shuffles, config.seed)?;
    let ids: Vec<String> = retrieval.iter().map(|r| r.id.clone()).collect();
    let sim = SimilarityMatrix::square(ids, record_similarities(&retrieval, comparator)?)?;

    let mut output = Output::new(out, "grid-fisher", config, args, &inputs)?;
    let mut experiments = Vec::new();
    for c in &computed {
        let file = format!("operators/{}.json", file_safe(&c.record.id));
        output.json(&file, json_value(&c.summary_json)?)?;
        experiments.push(json!({
            "id": c.record.id,
            "donor": c.record.donor,
            "label": c.record.label,
            "file": file,
            "valid_points": c.valid_points,
            "shrinkage": c.shrinkage,
            "split_half_reliability": c.reliability,
        }));
    }
    output.text("similarity.csv", &sim.to_csv())?;
    let mut labels: Vec<&str> = retrieval.iter().map(|r| r.label.as_str()).collect();
    labels.sort_unstable();
    labels.dedup();
    output.json(
        "report.json",
        json!({
            "mode": args.mode,
            "family": axes.iter().map(|a| a.name()).collect::<Vec<_>>(),
            "shape_only": args.shape_only,
            "n_experiments": retrieval.len(),
            "labels": labels,
            "top1": report.top1,
            "n_queries": report.n_queries,
            "excluded": report.excluded,
            "diag_auc": report.diag_auc,
            "shuffled_top1": shuffled,
            "queries": report.queries,
            "experiments": experiments,
        }),
    )?;
    let fmt = |x: Option<f64>| x.map_or("n/a".to_string(), |v| format!("{v:.4}"));
    println!(
        "{} experiments, donor-distinct top-1 {} ({} queries), shuffled-label control {}, AUC {}",
        retrieval.len(),
        fmt(report.top1),
        report.n_queries,
        fmt(shuffled),
        fmt(report.diag_auc)
    );
    if !report.excluded.is_empty() {
        println!("no donor-distinct candidate for {:?}", report.excluded);
    }
    Ok(())
}
