use std::path::Path;

use anyhow::Result;
use serde::Serialize;
use serde_json::json;

use sras_core::data::Dataset;
use sras_core::gridfisher::{donor_cohort, trials_to_csv, CohortConfig, ConditionGrid, ExperimentRecord};
use sras_core::random::{gaussian_matrix, gaussian_vector, seeded};
use sras_core::repmap::{tanh_stack, Dense, DifferentiableMap, Layer, RepMap, BANK_GAINS};
use sras_core::summaries::make_random_family;

use crate::io::{input_error, Inputs, Output, RunConfig};

#[derive(clap::Subcommand, Debug, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Tanh networks sharing per-depth weight statistics, a dataset and a random family.
    Bank(BankArgs),
    /// Two-label experiments from several donors on a condition grid.
    Cohort(CohortArgs),
}

#[derive(clap::Args, Debug, Serialize)]
pub struct BankArgs {
    #[arg(long, default_value_t = 4)]
    n_models: usize,
    #[arg(long, default_value_t = 8)]
    input_dim: usize,
    #[arg(long, default_value_t = 16)]
    width: usize,
    /// Add a linear classifier head with this many classes; labels come from the first model.
    #[arg(long)]
    classes: Option<usize>,
    #[arg(long, default_value_t = 64)]
    n_samples: usize,
    /// Dimension of the random family written to family.csv.
    #[arg(long, default_value_t = 4)]
    k: usize,
}

#[derive(clap::Args, Debug, Serialize)]
pub struct CohortArgs {
    #[arg(long, default_value_t = 4)]
    donors: usize,
    #[arg(long, default_value_t = 3)]
    experiments: usize,
    /// Cells of each of the two tuning types.
    #[arg(long, default_value_t = 12)]
    cells_per_type: usize,
    #[arg(long, default_value_t = 20)]
    trials: usize,
}

pub fn run(cmd: &Command, config: &RunConfig, out: &Path) -> Result<()> {
    match cmd {
        Command::Bank(a) => bank(a, config, out),
        Command::Cohort(a) => cohort(a, config, out),
    }
}

fn with_head(net: RepMap, width: usize, classes: usize, seed: u64) -> Result<RepMap> {
    let mut rng = seeded(seed);
    let w = gaussian_matrix(&mut rng, classes, width) / (width as f64).sqrt();
    let b = gaussian_vector(&mut rng, classes).into_iter().map(|x| 0.1 * x).collect();
    let mut layers = net.layers().to_vec();
    layers.push(Layer::Dense(Dense::new(w, b)?));
    Ok(RepMap::new(net.input_dim(), layers, true)?)
}

fn bank(a: &BankArgs, config: &RunConfig, out: &Path) -> Result<()> {
    if a.n_models == 0 || a.input_dim == 0 || a.width == 0 || a.n_samples == 0 {
        return Err(input_error("bank sizes must be positive"));
    }
    if a.classes.is_some_and(|c| c < 2) {
        return Err(input_error("--classes needs at least two classes"));
    }
    let models = (0..a.n_models as u64)
        .map(|i| {
            let seed = config.seed.wrapping_mul(1000).wrapping_add(i);
            let net = tanh_stack(a.input_dim, a.width, &BANK_GAINS, seed)?;
            match a.classes {
                Some(c) => with_head(net, a.width, c, seed ^ 0x5eed),
                None => Ok(net),
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let mut rng = seeded(config.seed);
    let samples: Vec<Vec<f64>> = (0..a.n_samples).map(|_| gaussian_vector(&mut rng, a.input_dim)).collect();
    let data = match a.classes {
        Some(_) => {
            let labels = samples.iter().map(|x| models[0].predict(x)).collect::<sras_core::Result<Vec<_>>>()?;
            Dataset::with_labels(samples, labels)?
        }
        None => Dataset::new(samples)?,
    };
    let family = make_random_family(a.input_dim, a.k, config.seed)?;

    let mut output = Output::new(out, "synth bank", config, a, &Inputs::default())?;
    let mut files = Vec::new();
    for (i, m) in models.iter().enumerate() {
        let name = format!("model-{i}.json");
        output.text(&name, &serde_json::to_string(m)?)?;
        files.push(name);
    }
    output.text("data.csv", &data.to_csv())?;
    output.text("family.csv", &family.to_csv())?;
    let layers: Vec<usize> = (1..=BANK_GAINS.len()).map(|l| 2 * l).collect();
    output.json(
        "synth.json",
        json!({"models": files, "data": "data.csv", "family": "family.csv", "representation_layers": layers}),
    )?;
    println!("wrote {} models, {} samples and a k={} family to {}", a.n_models, a.n_samples, a.k, out.display());
    Ok(())
}

fn cohort(a: &CohortArgs, config: &RunConfig, out: &Path) -> Result<()> {
    if a.donors == 0 || a.experiments == 0 || a.cells_per_type == 0 || a.trials == 0 {
        return Err(input_error("cohort sizes must be positive"));
    }
    let grid = ConditionGrid::standard();
    let cfg = CohortConfig {
        n_donors: a.donors,
        experiments_per_donor: a.experiments,
        cells_per_type: a.cells_per_type,
        trials_per_condition: a.trials,
        ..CohortConfig::default()
    };
    let cohort = donor_cohort(&grid, &cfg, config.seed)?;
    let records: Vec<ExperimentRecord> = cohort.into_iter().map(|(_, r)| r).collect();
    let mut output = Output::new(out, "synth cohort", config, a, &Inputs::default())?;
    output.text("trials.csv", &trials_to_csv(&records))?;
    output.text("grid.json", &format!("{}\n", grid.to_json()))?;
    output.json(
        "synth.json",
        json!({"trials": "trials.csv", "grid": "grid.json", "experiments": records.len(), "labels": cfg.labels}),
    )?;
    println!("wrote {} experiments to {}", records.len(), out.display());
    Ok(())
}
