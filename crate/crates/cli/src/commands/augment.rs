use std::fs;
use std::path::Path;

use resboot_core::basis::{shore_dictionary, DEFAULT_RADIAL_ORDER, DEFAULT_ZETA};
use resboot_core::bootstrap::{bootstrap_scan, estimate_noise_sigma, BootstrapPlan, DEFAULT_SCALES};
use resboot_core::fitting::{build_fit_operator, fit_scan};
use resboot_core::gradients::DEFAULT_B0_THRESHOLD;
use serde_json::json;

use crate::args::AugmentArgs;
use crate::config::layer;
use crate::error::{usage, CliResult};
use crate::io::{load_mask, load_scheme, load_volume, parse_dtype, prepare_out_dir, required, save};
use crate::manifest::RunManifest;

pub fn output_name(scale: f64, replicate: usize) -> String {
    format!("boot_r{scale}_rep{replicate}.nii")
}

fn copy_into(src: &Path, dir: &Path) -> CliResult<String> {
    let name = src
        .file_name()
        .ok_or_else(|| usage(format!("{} is not a file", src.display())))?
        .to_string_lossy()
        .into_owned();
    let dst = dir.join(&name);
    if fs::canonicalize(src).ok() != fs::canonicalize(&dst).ok() {
        fs::copy(src, &dst)?;
    }
    Ok(name)
}

pub fn run(args: AugmentArgs) -> CliResult<()> {
    let mut a = layer(&args, args.config.as_deref(), "augment")?;
    a.b0_threshold.get_or_insert(DEFAULT_B0_THRESHOLD);
    a.scales.get_or_insert(DEFAULT_SCALES.to_vec());
    a.replicates.get_or_insert(1);
    a.seed.get_or_insert(0);
    a.ridge.get_or_insert(0.0);
    a.radial_order.get_or_insert(DEFAULT_RADIAL_ORDER);
    a.zeta.get_or_insert(DEFAULT_ZETA);
    a.dtype.get_or_insert("float32".into());
    let dwi_path = required(&a.dwi, "dwi")?;
    let bvals = required(&a.bvals, "bvals")?;
    let bvecs = required(&a.bvecs, "bvecs")?;
    let out_dir = required(&a.out_dir, "out-dir")?;
    let dtype = parse_dtype(a.dtype.as_deref().unwrap())?;

    let plan = BootstrapPlan {
        scales: a.scales.clone().unwrap(),
        seed: a.seed.unwrap(),
        replicates_per_scale: a.replicates.unwrap(),
        clip_at_zero: a.clip_at_zero,
        center_residuals: a.center_residuals,
    };
    plan.validate()?;
    let mut names: Vec<String> = plan.outputs().iter().map(|&(_, r, k)| output_name(r, k)).collect();
    names.sort();
    if names.windows(2).any(|w| w[0] == w[1]) {
        return Err(usage("duplicate scaling factors"));
    }

    let scheme = load_scheme(bvals, bvecs, a.b0_threshold)?;
    scheme.check_bootstrap_ready()?;
    let dictionary = shore_dictionary(&scheme, a.radial_order.unwrap(), a.zeta.unwrap())?;
    let op = build_fit_operator(&dictionary, a.ridge.unwrap())?;
    let dwi = load_volume(dwi_path)?;
    let mask = load_mask(a.mask.as_deref(), dwi.spatial_dims())?;
    let fits = fit_scan(&op, &dictionary, &dwi, &mask)?;
    let outputs = bootstrap_scan(&dwi, &scheme, &fits, &plan, &mask)?;
    let noise = if mask.is_empty() {
        None
    } else {
        Some(estimate_noise_sigma(&fits, &mask)?)
    };

    prepare_out_dir(out_dir)?;
    let mut manifest = RunManifest::new("augment", &a);
    manifest.seed = Some(plan.seed);
    manifest.add_input("dwi", dwi_path)?;
    manifest.add_input("bvals", bvals)?;
    manifest.add_input("bvecs", bvecs)?;
    if let Some(m) = &a.mask {
        manifest.add_input("mask", m)?;
    }
    let mut scans = Vec::new();
    for out in &outputs {
        let name = save(&out.volume, out_dir, &output_name(out.scale, out.replicate), dtype)?;
        scans.push(json!({
            "file": name,
            "scale": out.scale,
            "replicate": out.replicate,
            "added_noise_sigma": noise.as_ref().map(|n| out.scale * n.pooled),
        }));
        manifest.outputs.push(name);
    }
    manifest.outputs.push(copy_into(bvals, out_dir)?);
    manifest.outputs.push(copy_into(bvecs, out_dir)?);
    manifest.report = json!({
        "sigma_hat": noise,
        "masked_voxels": mask.count(),
        "atoms": dictionary.n_atoms(),
        "dw_channels": dictionary.n_rows(),
        "scans": scans,
    });
    manifest.write(out_dir)
}
