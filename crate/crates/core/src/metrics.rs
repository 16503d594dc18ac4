//! Overlap and SNR summaries.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volumes::{Mask, Volume4D};

/// One boolean channel per label, channel-fastest like [`Volume4D`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelVolume {
    dims: [usize; 4],
    data: Vec<bool>,
}

impl LabelVolume {
    pub fn new(dims: [usize; 4], data: Vec<bool>) -> Result<Self> {
        if dims.contains(&0) {
            return Err(Error::Dimension(format!("label dims {dims:?}")));
        }
        if data.len() != dims.iter().product::<usize>() {
            return Err(Error::Dimension(format!(
                "label data length {} for dims {dims:?}",
                data.len()
            )));
        }
        Ok(LabelVolume { dims, data })
    }

    /// Nonzero samples are members.
    pub fn from_volume(volume: &Volume4D) -> Self {
        LabelVolume {
            dims: volume.dims(),
            data: volume.data().iter().map(|&v| v != 0.0).collect(),
        }
    }

    pub fn dims(&self) -> [usize; 4] {
        self.dims
    }

    pub fn n_labels(&self) -> usize {
        self.dims[3]
    }

    pub fn get(&self, voxel: usize, label: usize) -> bool {
        self.data[label + self.dims[3] * voxel]
    }

    fn check_pair(&self, other: &LabelVolume) -> Result<()> {
        if self.dims != other.dims {
            return Err(Error::Dimension(format!(
                "label volumes {:?} vs {:?}",
                self.dims, other.dims
            )));
        }
        Ok(())
    }
}

/// 2|A∩B| / (|A| + |B|); two empty sets agree perfectly (1.0).
pub fn dice(a: &LabelVolume, b: &LabelVolume, label: usize) -> Result<f64> {
    a.check_pair(b)?;
    if label >= a.n_labels() {
        return Err(Error::InvalidParameter(format!(
            "label {label} out of range for {} labels",
            a.n_labels()
        )));
    }
    let nl = a.n_labels();
    let (mut na, mut nb, mut both) = (0u64, 0u64, 0u64);
    for (x, y) in a
        .data
        .iter()
        .skip(label)
        .step_by(nl)
        .zip(b.data.iter().skip(label).step_by(nl))
    {
        na += *x as u64;
        nb += *y as u64;
        both += (*x && *y) as u64;
    }
    if na + nb == 0 {
        return Ok(1.0);
    }
    Ok(2.0 * both as f64 / (na + nb) as f64)
}

pub fn mean_dice(a: &LabelVolume, b: &LabelVolume, labels: &[usize]) -> Result<f64> {
    if labels.is_empty() {
        return Err(Error::InvalidParameter("empty label list".into()));
    }
    let total = labels.iter().map(|&l| dice(a, b, l)).sum::<Result<f64>>()?;
    Ok(total / labels.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnrReport {
    pub per_channel: Vec<f64>,
    pub mean: f64,
}

/// Per-channel mean signal inside `mask` divided by `sigma`.
pub fn snr_report(volume: &Volume4D, mask: &Mask, sigma: f64) -> Result<SnrReport> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidParameter(format!("sigma must be positive, got {sigma}")));
    }
    mask.check_matches(volume)?;
    let voxels = mask.indices();
    if voxels.is_empty() {
        return Err(Error::InvalidParameter("SNR over an empty mask".into()));
    }
    let nc = volume.channels();
    let mut sums = vec![0.0; nc];
    for &v in &voxels {
        for (s, y) in sums.iter_mut().zip(volume.voxel(v)) {
            *s += y;
        }
    }
    let n = voxels.len() as f64;
    let per_channel: Vec<f64> = sums.iter().map(|s| s / n / sigma).collect();
    let mean = per_channel.iter().sum::<f64>() / nc as f64;
    Ok(SnrReport { per_channel, mean })
}
