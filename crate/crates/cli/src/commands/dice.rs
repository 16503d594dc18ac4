use resboot_core::metrics::{dice, LabelVolume};
use serde_json::json;

use crate::args::DiceArgs;
use crate::config::layer;
use crate::error::{usage, CliResult};
use crate::io::{emit, load_volume, required};

pub fn run(args: DiceArgs) -> CliResult<()> {
    let a = layer(&args, args.config.as_deref(), "dice")?;
    let va = LabelVolume::from_volume(&load_volume(required(&a.a, "a")?)?);
    let vb = LabelVolume::from_volume(&load_volume(required(&a.b, "b")?)?);
    let labels = a.labels.clone().unwrap_or_else(|| (0..va.n_labels()).collect());
    if labels.is_empty() {
        return Err(usage("empty label list"));
    }
    let scores = labels
        .iter()
        .map(|&l| dice(&va, &vb, l))
        .collect::<Result<Vec<_>, _>>()?;
    let mean = scores.iter().sum::<f64>() / scores.len() as f64;
    if a.json {
        let per_label: Vec<_> = labels
            .iter()
            .zip(&scores)
            .map(|(l, d)| json!({ "label": l, "dice": d }))
            .collect();
        emit(&json!({ "labels": per_label, "mean_dice": mean }).to_string())?;
    } else {
        for (l, d) in labels.iter().zip(&scores) {
            emit(&format!("label {l}\t{d:.6}"))?;
        }
        emit(&format!("mean\t{mean:.6}"))?;
    }
    Ok(())
}
