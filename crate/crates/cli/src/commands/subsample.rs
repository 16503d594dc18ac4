use resboot_core::gradients::{ShellRequest, SubsampleStrategy, DEFAULT_B0_THRESHOLD, DEFAULT_SHELL_TOLERANCE};
use serde_json::json;

use crate::args::SubsampleArgs;
use crate::config::layer;
use crate::error::{usage, CliResult};
use crate::io::{load_scheme, load_volume, parse_dtype, prepare_out_dir, required, save, save_scheme};
use crate::manifest::RunManifest;

pub fn parse_shell(text: &str) -> CliResult<ShellRequest> {
    let bad = || usage(format!("shell request `{text}` is not bvalue:count"));
    let (b, n) = text.split_once(':').ok_or_else(bad)?;
    Ok(ShellRequest {
        bvalue: b.trim().parse().map_err(|_| bad())?,
        count: n.trim().parse().map_err(|_| bad())?,
    })
}

pub fn run(args: SubsampleArgs) -> CliResult<()> {
    let mut a = layer(&args, args.config.as_deref(), "subsample")?;
    a.b0_threshold.get_or_insert(DEFAULT_B0_THRESHOLD);
    let bvals = required(&a.bvals, "bvals")?.clone();
    let bvecs = required(&a.bvecs, "bvecs")?.clone();
    let out_dir = required(&a.out_dir, "out-dir")?.clone();
    let requests = required(&a.shells, "shells")?
        .iter()
        .map(|s| parse_shell(s))
        .collect::<CliResult<Vec<_>>>()?;

    let scheme = load_scheme(&bvals, &bvecs, a.b0_threshold)?;
    let b0_count = *a.b0_count.get_or_insert(scheme.n_b0());
    let strategy = match &a.indices {
        Some(ix) => SubsampleStrategy::Indices(ix.clone()),
        None => SubsampleStrategy::FarthestPoint,
    };
    let sub = scheme.subsample(&requests, b0_count, &strategy)?;
    let volume = a.dwi.as_deref().map(load_volume).transpose()?;
    if let Some(v) = &volume {
        a.dtype.get_or_insert(v.dtype().name().into());
    }

    prepare_out_dir(&out_dir)?;
    let mut manifest = RunManifest::new("subsample", &a);
    manifest.add_input("bvals", &bvals)?;
    manifest.add_input("bvecs", &bvecs)?;
    if let (Some(path), Some(v)) = (&a.dwi, &volume) {
        manifest.add_input("dwi", path)?;
        let dtype = parse_dtype(a.dtype.as_deref().unwrap())?;
        manifest
            .outputs
            .push(save(&v.gather_channels(&sub.index_map)?, &out_dir, "dwi.nii", dtype)?);
    }
    manifest.outputs.extend(save_scheme(&sub.scheme, &out_dir, "dwi")?);
    let shells: Vec<_> = sub
        .scheme
        .detect_shells(DEFAULT_SHELL_TOLERANCE)
        .into_iter()
        .map(|s| json!({ "bvalue": s.nominal_bvalue, "count": s.channel_indices.len() }))
        .collect();
    manifest.report = json!({
        "channels": sub.scheme.len(),
        "b0_channels": sub.scheme.n_b0(),
        "dw_channels": sub.scheme.n_dw(),
        "shells": shells,
        "index_map": sub.index_map,
    });
    manifest.write(&out_dir)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shell_syntax() {
        let r = parse_shell("1000:12").unwrap();
        assert_eq!((r.bvalue, r.count), (1000.0, 12));
        assert!(parse_shell("1000").is_err());
        assert!(parse_shell("a:3").is_err());
        assert!(parse_shell("1000:-1").is_err());
    }
}
