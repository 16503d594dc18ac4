//! Scaled residual bootstrap.
//!
//! Each DW sample of a voxel is replaced by `ŷ_i + r·ε̃_i`, where `ε̃_i` is
//! drawn with replacement from that voxel's own corrected residuals. The
//! b0 channels are resampled around their mean with the same `r`.
//! Every (scale, replicate, voxel) triple owns an independent random
//! stream, so outputs are identical for any traversal order or worker count.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fitting::{FitStore, VoxelFitRef};
use crate::gradients::GradientScheme;
use crate::rng::{voxel_stream, Substream};
use crate::volumes::{Mask, Volume4D};

pub const DEFAULT_SCALES: [f64; 3] = [2.0, 3.0, 4.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapPlan {
    pub scales: Vec<f64>,
    pub seed: u64,
    pub replicates_per_scale: usize,
    /// Replace negative outputs with zero.
    #[serde(default)]
    pub clip_at_zero: bool,
    /// Subtract each voxel's mean corrected residual before resampling.
    #[serde(default)]
    pub center_residuals: bool,
}

impl Default for BootstrapPlan {
    fn default() -> Self {
        BootstrapPlan {
            scales: DEFAULT_SCALES.to_vec(),
            seed: 0,
            replicates_per_scale: 1,
            clip_at_zero: false,
            center_residuals: false,
        }
    }
}

impl BootstrapPlan {
    pub fn validate(&self) -> Result<()> {
        if self.scales.is_empty() {
            return Err(Error::InvalidParameter("no scaling factors".into()));
        }
        if let Some(r) = self.scales.iter().find(|r| !(**r >= 0.0 && r.is_finite())) {
            return Err(Error::InvalidParameter(format!(
                "scaling factor {r} must be finite and >= 0"
            )));
        }
        if self.replicates_per_scale == 0 {
            return Err(Error::InvalidParameter("replicates per scale must be >= 1".into()));
        }
        Ok(())
    }

    /// (scale index, scale, replicate) for every output scan, in output order.
    pub fn outputs(&self) -> Vec<(usize, f64, usize)> {
        self.scales
            .iter()
            .enumerate()
            .flat_map(|(i, &r)| (0..self.replicates_per_scale).map(move |k| (i, r, k)))
            .collect()
    }
}

/// Draws `out.len()` samples uniformly with replacement from `pool`.
pub fn resample<R: Rng + ?Sized>(pool: &[f64], rng: &mut R, out: &mut [f64]) {
    for o in out.iter_mut() {
        *o = pool[rng.random_range(0..pool.len())];
    }
}

/// The additive term `r·ε̃` for one voxel.
pub fn bootstrap_noise<R: Rng + ?Sized>(residuals: &[f64], r: f64, rng: &mut R) -> Vec<f64> {
    let mut drawn = vec![0.0; residuals.len()];
    if !residuals.is_empty() {
        resample(residuals, rng, &mut drawn);
    }
    drawn.iter_mut().for_each(|e| *e *= r);
    drawn
}

/// `ỹ = ŷ + r·ε̃` with `ε̃` resampled from the voxel's corrected residuals.
pub fn bootstrap_voxel<R: Rng + ?Sized>(fit: VoxelFitRef<'_>, r: f64, rng: &mut R) -> Vec<f64> {
    if r == 0.0 {
        return fit.fitted.to_vec();
    }
    let noise = bootstrap_noise(fit.corrected_residuals, r, rng);
    fit.fitted.iter().zip(noise).map(|(y, e)| y + e).collect()
}

/// Resamples b0 signals around their mean: `ỹ⁰_j = ȳ⁰ + r·ε̃⁰_j`.
/// A single b0 has nothing to resample and is returned unchanged.
pub fn bootstrap_b0_voxel<R: Rng + ?Sized>(b0: &[f64], r: f64, rng: &mut R) -> Result<Vec<f64>> {
    match b0.len() {
        0 => Err(Error::Scheme("b0 bootstrap needs at least one b0 channel".into())),
        1 => Ok(b0.to_vec()),
        n => {
            let mean = b0.iter().sum::<f64>() / n as f64;
            let pool: Vec<f64> = b0.iter().map(|y| y - mean).collect();
            let mut drawn = vec![0.0; n];
            resample(&pool, rng, &mut drawn);
            Ok(drawn.into_iter().map(|e| mean + r * e).collect())
        }
    }
}

#[derive(Debug, Clone)]
pub struct BootstrapOutput {
    pub scale_index: usize,
    pub scale: f64,
    pub replicate: usize,
    pub volume: Volume4D,
}

/// Channel bookkeeping shared by every replicate of one scan.
struct Layout {
    dw: Vec<usize>,
    b0: Vec<usize>,
}

fn layout(scan: &Volume4D, scheme: &GradientScheme, fits: &FitStore, mask: &Mask) -> Result<Layout> {
    scheme.check_bootstrap_ready()?;
    mask.check_matches(scan)?;
    if scan.channels() != scheme.len() {
        return Err(Error::Dimension(format!(
            "scan has {} channels, scheme has {}",
            scan.channels(),
            scheme.len()
        )));
    }
    let dw = scheme.dw_indices();
    if fits.channels() != dw.as_slice() {
        return Err(Error::Dimension(
            "fit store channels do not match the scheme's DW channels".into(),
        ));
    }
    fits.check_covers(mask)?;
    Ok(Layout {
        dw,
        b0: scheme.b0_indices(),
    })
}

/// One augmented scan. Unmasked voxels are copied verbatim; b0 channels
/// keep their original positions.
pub fn bootstrap_replicate(
    scan: &Volume4D,
    scheme: &GradientScheme,
    fits: &FitStore,
    plan: &BootstrapPlan,
    scale_index: usize,
    replicate: usize,
    mask: &Mask,
) -> Result<Volume4D> {
    plan.validate()?;
    let r = *plan
        .scales
        .get(scale_index)
        .ok_or_else(|| Error::InvalidParameter(format!("scale index {scale_index} out of range")))?;
    let layout = layout(scan, scheme, fits, mask)?;
    Ok(replicate_unchecked(
        scan,
        fits,
        plan,
        &layout,
        scale_index,
        r,
        replicate,
        mask,
    ))
}

#[allow(clippy::too_many_arguments)]
fn replicate_unchecked(
    scan: &Volume4D,
    fits: &FitStore,
    plan: &BootstrapPlan,
    layout: &Layout,
    scale_index: usize,
    r: f64,
    replicate: usize,
    mask: &Mask,
) -> Volume4D {
    let mut out = scan.clone();
    let nc = scan.channels();
    out.data_mut()
        .par_chunks_mut(nc)
        .enumerate()
        .filter(|(v, _)| mask.contains(*v))
        .for_each(|(v, signal)| {
            let fit = fits.get(v).expect("coverage checked");
            let stream = |sub| voxel_stream(plan.seed, scale_index as u64, replicate as u64, v as u64, sub);

            let centered;
            let fit = if plan.center_residuals {
                let mean = fit.corrected_residuals.iter().sum::<f64>() / fit.corrected_residuals.len() as f64;
                centered = fit.corrected_residuals.iter().map(|e| e - mean).collect::<Vec<_>>();
                VoxelFitRef {
                    corrected_residuals: &centered,
                    ..fit
                }
            } else {
                fit
            };
            let dw = bootstrap_voxel(fit, r, &mut stream(Substream::Dw));
            for (&ch, y) in layout.dw.iter().zip(dw) {
                signal[ch] = y;
            }

            let b0: Vec<f64> = layout.b0.iter().map(|&ch| signal[ch]).collect();
            let b0 = bootstrap_b0_voxel(&b0, r, &mut stream(Substream::B0)).expect("scheme has b0");
            for (&ch, y) in layout.b0.iter().zip(b0) {
                signal[ch] = y;
            }
            if plan.clip_at_zero {
                signal.iter_mut().for_each(|y| *y = y.max(0.0));
            }
        });
    out
}

/// Every (scale, replicate) output of `plan`, in plan order.
pub fn bootstrap_scan(
    scan: &Volume4D,
    scheme: &GradientScheme,
    fits: &FitStore,
    plan: &BootstrapPlan,
    mask: &Mask,
) -> Result<Vec<BootstrapOutput>> {
    plan.validate()?;
    let layout = layout(scan, scheme, fits, mask)?;
    Ok(plan
        .outputs()
        .into_iter()
        .map(|(scale_index, scale, replicate)| BootstrapOutput {
            scale_index,
            scale,
            replicate,
            volume: replicate_unchecked(scan, fits, plan, &layout, scale_index, scale, replicate, mask),
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseEstimate {
    /// sqrt of the mean squared corrected residual over voxels and channels.
    pub pooled: f64,
    /// Same, averaged over voxels only, one entry per fitted channel.
    pub per_channel: Vec<f64>,
    pub voxels: usize,
}

pub fn estimate_noise_sigma(fits: &FitStore, mask: &Mask) -> Result<NoiseEstimate> {
    fits.check_covers(mask)?;
    let voxels = mask.indices();
    if voxels.is_empty() {
        return Err(Error::InvalidParameter("noise estimate over an empty mask".into()));
    }
    let nd = fits.n_rows();
    // sequential in mask order: the sum must not depend on the schedule
    let mut total = vec![0.0; nd];
    for &v in &voxels {
        let fit = fits.get(v).expect("coverage checked");
        for (t, e) in total.iter_mut().zip(fit.corrected_residuals) {
            *t += e * e;
        }
    }
    let n = voxels.len() as f64;
    let per_channel: Vec<f64> = total.iter().map(|t| (t / n).sqrt()).collect();
    let pooled = (total.iter().sum::<f64>() / (n * nd as f64)).sqrt();
    Ok(NoiseEstimate {
        pooled,
        per_channel,
        voxels: voxels.len(),
    })
}
