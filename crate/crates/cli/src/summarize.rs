use std::path::{Path, PathBuf};

use anyhow::Result;
use clap::ValueEnum;
use serde::Serialize;

use sras_core::repmap::DifferentiableMap;
use sras_core::spd::SpdMatrix;
use sras_core::summaries::{
    accumulate_fisher_with, accumulate_pullback_with, class_conditional_summaries, AccumulateOptions, NoiseModel,
    PerturbationFamily, SensitivitySummary,
};

use crate::io::{input_error, json_value, Inputs, Output, RunConfig};

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    Pullback,
    Fisher,
}

#[derive(clap::Args, Debug, Serialize)]
pub struct Args {
    /// Model JSON.
    #[arg(long)]
    model: PathBuf,
    /// Dataset CSV.
    #[arg(long)]
    data: PathBuf,
    /// Family CSV (d rows, k orthonormal columns); identity when omitted.
    #[arg(long)]
    family: Option<PathBuf>,
    /// Keep only the leading k family directions.
    #[arg(long)]
    k: Option<usize>,
    /// Representation layer (number of applied layers); full stack when omitted.
    #[arg(long)]
    layer: Option<usize>,
    #[arg(long, value_enum, default_value_t = Kind::Pullback)]
    kind: Kind,
    /// Isotropic output-noise standard deviation (fisher).
    #[arg(long, conflicts_with = "noise_cov")]
    sigma: Option<f64>,
    /// Output-noise covariance CSV (fisher).
    #[arg(long)]
    noise_cov: Option<PathBuf>,
    /// Also write one summary per label of the dataset.
    #[arg(long)]
    class_conditional: bool,
    /// Number of classes expected when splitting by label.
    #[arg(long, requires = "class_conditional")]
    n_classes: Option<usize>,
    /// Output file name.
    #[arg(long, default_value = "summary.json")]
    output: String,
}

pub fn load_family(inputs: &mut Inputs, path: Option<&Path>, d: usize, k: Option<usize>) -> Result<PerturbationFamily> {
    let family = match path {
        Some(p) => inputs.family(p)?,
        None => PerturbationFamily::identity(d),
    };
    Ok(match k {
        Some(k) => family.restrict(k)?,
        None => family,
    })
}

fn class_file(output: &str, class: usize) -> String {
    match output.strip_suffix(".json") {
        Some(s) => format!("{s}-class{class}.json"),
        None => format!("{output}-class{class}"),
    }
}

pub fn run(args: &Args, config: &RunConfig, out: &Path) -> Result<()> {
    let mut inputs = Inputs::default();
    let model = inputs.model(&args.model)?;
    let data = inputs.dataset(&args.data)?;
    let family = load_family(&mut inputs, args.family.as_deref(), model.input_dim(), args.k)?;
    let noise = match args.kind {
        Kind::Pullback => {
            if args.sigma.is_some() || args.noise_cov.is_some() {
                return Err(input_error("noise options only apply to --kind fisher"));
            }
            None
        }
        Kind::Fisher => Some(match (&args.sigma, &args.noise_cov) {
            (Some(s), _) => NoiseModel::isotropic(*s)?,
            (None, Some(p)) => NoiseModel::Full {
                cov: SpdMatrix::from_csv(&inputs.read(p)?)?,
            },
            (None, None) => return Err(input_error("--kind fisher needs --sigma or --noise-cov")),
        }),
    };
    if data.is_empty() {
        return Err(sras_core::Error::EmptyDataset.into());
    }
    let view;
    let map: &dyn DifferentiableMap = match args.layer {
        Some(l) => {
            view = model.at_layer(l)?;
            &view
        }
        None => &model,
    };
    let opts = AccumulateOptions {
        chunk_size: config.chunk_size,
    };
    let summary = match &noise {
        Some(n) => accumulate_fisher_with(map, &data, &family, n, opts)?,
        None => accumulate_pullback_with(map, &data, &family, opts)?,
    };
    let mut output = Output::new(out, "summarize", config, args, &inputs)?;
    output.json(&args.output, json_value(&summary.to_json())?)?;
    report(&args.output, &summary);
    if args.class_conditional {
        let cc = class_conditional_summaries(map, &data, &family, noise.as_ref(), args.n_classes)?;
        for (c, s) in &cc.per_class {
            let name = class_file(&args.output, *c);
            output.json(&name, json_value(&s.to_json())?)?;
            report(&name, s);
        }
        if !cc.missing.is_empty() {
            println!("classes without samples: {:?}", cc.missing);
        }
    }
    Ok(())
}

fn report(name: &str, s: &SensitivitySummary) {
    let kind = match s.kind() {
        sras_core::summaries::SummaryKind::Pullback => "G",
        sras_core::summaries::SummaryKind::Fisher => "F",
    };
    let class = s.class_label().map(|c| format!(" class {c}")).unwrap_or_default();
    println!(
        "{name}: {kind} k={} n={} trace={:.6e} family={}{class}",
        s.dim(),
        s.n_samples(),
        s.operator().trace(),
        s.family_id()
    );
}
