use std::path::{Path, PathBuf};

use anyhow::Result;
use serde::Serialize;
use serde_json::json;

use sras_core::spd::{log_euclidean_distance, spd_lift, sras_score};

use crate::io::{Inputs, Output, RunConfig};

#[derive(clap::Args, Debug, Serialize)]
pub struct Args {
    /// First summary JSON.
    a: PathBuf,
    /// Second summary JSON.
    b: PathBuf,
    /// Output file name.
    #[arg(long, default_value = "certificate.json")]
    output: String,
}

pub fn run(args: &Args, config: &RunConfig, out: &Path) -> Result<()> {
    let mut inputs = Inputs::default();
    let a = inputs.summary(&args.a)?;
    let b = inputs.summary(&args.b)?;
    if a.dim() != b.dim() {
        return Err(sras_core::Error::DimMismatch {
            expected: a.dim(),
            found: b.dim(),
        }
        .into());
    }
    let warning = (a.family_id() != b.family_id()).then(|| {
        format!(
            "family mismatch: '{}' vs '{}'; the comparison is relative to different perturbation families and is not meaningful",
            a.family_id(),
            b.family_id()
        )
    });
    if a.kind() != b.kind() {
        eprintln!("note: comparing a {:?} summary with a {:?} summary", a.kind(), b.kind());
    }
    let la = spd_lift(a.operator(), config.eps_reg)?;
    let lb = spd_lift(b.operator(), config.eps_reg)?;
    let cert = sras_score(&la, &lb)?;
    let (lo, hi) = cert.bound_factors();
    let d_le = log_euclidean_distance(&la, &lb)?;
    let value = json!({
        "k": a.dim(),
        "family_ids": [a.family_id(), b.family_id()],
        "family_match": warning.is_none(),
        "warning": warning,
        "d_airm": cert.airm_distance,
        "d_inf": cert.dinf_distance,
        "d_log_euclidean": d_le,
        "s_ras": cert.sras_score,
        "bound_factors": {"lower": lo, "upper": hi},
    });
    let mut output = Output::new(out, "compare", config, args, &inputs)?;
    output.json(&args.output, value)?;
    if let Some(w) = &warning {
        eprintln!("WARNING: {w}");
    }
    println!(
        "k={} d_AIRM={:.6e} d_inf={:.6e} S-RAS={:.6} bounds=[{:.6}, {:.6}]×Tr(CA)",
        a.dim(),
        cert.airm_distance,
        cert.dinf_distance,
        cert.sras_score,
        lo,
        hi
    );
    Ok(())
}
