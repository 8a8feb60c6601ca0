use std::path::{Path, PathBuf};

use anyhow::Result;
use serde::Serialize;
use serde_json::json;

use sras_core::baselines::Bandwidth;
use sras_core::repmap::{DifferentiableMap, RepMap};
use sras_core::retrieval::{layer_report, layer_similarity_matrix, Comparator, MatchConfig};
use sras_core::spd::format_f64;
use sras_core::summaries::make_random_family;

use crate::io::{input_error, stem, Inputs, Output, RunConfig};

#[derive(clap::Args, Debug, Serialize)]
pub struct Args {
    /// Model JSONs of the bank (at least two).
    #[arg(long, num_args = 2.., required = true)]
    bank: Vec<PathBuf>,
    /// Layer indices to match, e.g. 2,4,6,8.
    #[arg(long, value_delimiter = ',', required = true)]
    layers: Vec<usize>,
    #[arg(long, default_value = "sras")]
    comparator: String,
    /// Dataset CSV the layers are probed on.
    #[arg(long)]
    data: PathBuf,
    /// Family CSV; a seeded random family of dimension --k when omitted.
    #[arg(long)]
    family: Option<PathBuf>,
    /// Family dimension (restricts a family file to its leading k columns).
    #[arg(long)]
    k: Option<usize>,
    /// RBF-CKA bandwidth: "median" or a positive number.
    #[arg(long, default_value = "median")]
    bandwidth: String,
    /// CCA ridge (default 1e-6).
    #[arg(long)]
    cca_ridge: Option<f64>,
}

fn parse_bandwidth(s: &str) -> Result<Bandwidth> {
    if s == "median" {
        return Ok(Bandwidth::Median);
    }
    match s.parse::<f64>() {
        Ok(b) if b > 0.0 => Ok(Bandwidth::Fixed(b)),
        _ => Err(input_error(format!("bandwidth '{s}' is neither 'median' nor a positive number"))),
    }
}

pub fn run(args: &Args, config: &RunConfig, out: &Path) -> Result<()> {
    let comparator: Comparator = args.comparator.parse()?;
    let bandwidth = parse_bandwidth(&args.bandwidth)?;
    let mut inputs = Inputs::default();
    let ids: Vec<String> = args.bank.iter().map(|p| stem(p)).collect();
    let mut seen = std::collections::BTreeSet::new();
    if let Some(dup) = ids.iter().find(|id| !seen.insert(id.as_str())) {
        return Err(input_error(format!("two bank models share the file name '{dup}'")));
    }
    let bank: Vec<RepMap> = args.bank.iter().map(|p| inputs.model(p)).collect::<Result<_>>()?;
    let data = inputs.dataset(&args.data)?;
    let d = bank[0].input_dim();
    let family = match (&args.family, args.k) {
        (Some(p), k) => {
            let f = inputs.family(p)?;
            match k {
                Some(k) => f.restrict(k)?,
                None => f,
            }
        }
        (None, Some(k)) => make_random_family(d, k, config.seed)?,
        (None, None) => return Err(input_error("match-layers needs --family or --k")),
    };
    let cfg = MatchConfig {
        family,
        data,
        eps_reg: config.eps_reg,
        bandwidth,
        cca_ridge: args.cca_ridge,
    };
    let matching = layer_similarity_matrix(&bank, &args.layers, comparator, &cfg)?;
    let report = layer_report(&matching)?;

    let mut output = Output::new(out, "match-layers", config, args, &inputs)?;
    let mut pair_files = Vec::new();
    for p in &matching.pairs {
        let name = format!("pair-{}-{}.csv", ids[p.a], ids[p.b]);
        output.text(&name, &p.matrix.to_csv())?;
        pair_files.push(json!({"a": ids[p.a], "b": ids[p.b], "file": name}));
    }
    output.text("average.csv", &matching.average.to_csv())?;
    let mut decay = String::from("delta,similarity\n");
    for (i, v) in report.decay.iter().enumerate() {
        decay.push_str(&format!("{i},{}\n", format_f64(*v)));
    }
    output.text("decay.csv", &decay)?;
    output.json(
        "report.json",
        json!({
            "comparator": comparator.name(),
            "family_id": cfg.family.id(),
            "models": ids,
            "layers": args.layers,
            "accuracy": report.accuracy,
            "ties": report.ties,
            "mean_margin": report.mean_margin,
            "diag_auc": report.diag_auc,
            "decay": report.decay,
            "per_pair": report.per_pair,
            "pair_files": pair_files,
        }),
    )?;
    println!(
        "{}: accuracy {:.2}% over {} pairs (chance {:.2}%), ties {}, diag AUC {:.4}",
        comparator.name(),
        report.accuracy,
        matching.pairs.len(),
        100.0 / args.layers.len() as f64,
        report.ties,
        report.diag_auc
    );
    println!("decay {:?}", report.decay);
    Ok(())
}
