use resboot_core::basis::{shore_dictionary, DEFAULT_RADIAL_ORDER, DEFAULT_ZETA};
use resboot_core::bootstrap::estimate_noise_sigma;
use resboot_core::fitting::{build_fit_operator, fit_scan};
use resboot_core::metrics::snr_report;
use serde_json::json;

use crate::args::StatsArgs;
use crate::config::layer;
use crate::error::{usage, CliResult};
use crate::io::{emit, load_mask, load_scheme, load_volume, required};

pub fn run(args: StatsArgs) -> CliResult<()> {
    let a = layer(&args, args.config.as_deref(), "stats")?;
    let dwi = load_volume(required(&a.dwi, "dwi")?)?;
    let mask = load_mask(a.mask.as_deref(), dwi.spatial_dims())?;

    let (sigma, source) = match (a.sigma, &a.bvals, &a.bvecs) {
        (Some(s), _, _) => (s, "given"),
        (None, Some(bvals), Some(bvecs)) => {
            let scheme = load_scheme(bvals, bvecs, a.b0_threshold)?;
            let dictionary = shore_dictionary(
                &scheme,
                a.radial_order.unwrap_or(DEFAULT_RADIAL_ORDER),
                a.zeta.unwrap_or(DEFAULT_ZETA),
            )?;
            let op = build_fit_operator(&dictionary, a.ridge.unwrap_or(0.0))?;
            let fits = fit_scan(&op, &dictionary, &dwi, &mask)?;
            (estimate_noise_sigma(&fits, &mask)?.pooled, "estimated")
        }
        _ => return Err(usage("give --sigma, or --bvals and --bvecs to estimate it")),
    };
    let report = snr_report(&dwi, &mask, sigma)?;
    if a.json {
        emit(
            &json!({
                "sigma": sigma,
                "sigma_source": source,
                "masked_voxels": mask.count(),
                "mean_snr": report.mean,
                "per_channel_snr": report.per_channel,
            })
            .to_string(),
        )?;
    } else {
        emit(&format!("sigma\t{sigma:.6}\t({source})"))?;
        emit(&format!("voxels\t{}", mask.count()))?;
        emit(&format!("mean_snr\t{:.6}", report.mean))?;
    }
    Ok(())
}
