use resboot_core::basis::{shore_dictionary, DEFAULT_RADIAL_ORDER, DEFAULT_ZETA};
use resboot_core::bootstrap::estimate_noise_sigma;
use resboot_core::fitting::{build_fit_operator, fit_scan};
use resboot_core::gradients::DEFAULT_B0_THRESHOLD;
use serde_json::json;

use crate::args::FitArgs;
use crate::config::layer;
use crate::error::CliResult;
use crate::io::{load_mask, load_scheme, load_volume, parse_dtype, prepare_out_dir, required, save, save_json};
use crate::manifest::RunManifest;

pub fn run(args: FitArgs) -> CliResult<()> {
    let mut a = layer(&args, args.config.as_deref(), "fit")?;
    a.b0_threshold.get_or_insert(DEFAULT_B0_THRESHOLD);
    a.ridge.get_or_insert(0.0);
    a.radial_order.get_or_insert(DEFAULT_RADIAL_ORDER);
    a.zeta.get_or_insert(DEFAULT_ZETA);
    a.dtype.get_or_insert("float32".into());
    let dwi_path = required(&a.dwi, "dwi")?;
    let bvals = required(&a.bvals, "bvals")?;
    let bvecs = required(&a.bvecs, "bvecs")?;
    let out_dir = required(&a.out_dir, "out-dir")?;
    let dtype = parse_dtype(a.dtype.as_deref().unwrap())?;

    let scheme = load_scheme(bvals, bvecs, a.b0_threshold)?;
    let dictionary = shore_dictionary(&scheme, a.radial_order.unwrap(), a.zeta.unwrap())?;
    let op = build_fit_operator(&dictionary, a.ridge.unwrap())?;
    let dwi = load_volume(dwi_path)?;
    let mask = load_mask(a.mask.as_deref(), dwi.spatial_dims())?;
    let fits = fit_scan(&op, &dictionary, &dwi, &mask)?;

    let h = op.hat_diag();
    let noise = if mask.is_empty() {
        None
    } else {
        Some(estimate_noise_sigma(&fits, &mask)?)
    };
    let report = json!({
        "dw_channels": dictionary.n_rows(),
        "atoms": dictionary.n_atoms(),
        "ridge": op.ridge(),
        "fitted_voxels": fits.len(),
        "hat_diag": {
            "sum": h.iter().sum::<f64>(),
            "min": h.iter().copied().fold(f64::INFINITY, f64::min),
            "max": h.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            "mean": h.iter().sum::<f64>() / h.len() as f64,
        },
        "channels": dictionary.channels(),
        "residual_variance": noise.as_ref().map(|n| n.per_channel.iter().map(|s| s * s).collect::<Vec<_>>()),
        "sigma_hat": noise.as_ref().map(|n| n.pooled),
    });

    prepare_out_dir(out_dir)?;
    let mut manifest = RunManifest::new("fit", &a);
    manifest.add_input("dwi", dwi_path)?;
    manifest.add_input("bvals", bvals)?;
    manifest.add_input("bvecs", bvecs)?;
    if let Some(m) = &a.mask {
        manifest.add_input("mask", m)?;
    }
    manifest.outputs.push(save(
        &fits.coefficient_volume(&dwi)?,
        out_dir,
        "coefficients.nii",
        dtype,
    )?);
    manifest
        .outputs
        .push(save(&fits.fitted_volume(&dwi)?, out_dir, "fitted.nii", dtype)?);
    manifest
        .outputs
        .push(save(&fits.residual_volume(&dwi)?, out_dir, "residuals.nii", dtype)?);
    manifest.outputs.push(save_json(&report, out_dir, "fit_report.json")?);
    manifest.report = report;
    manifest.write(out_dir)
}
