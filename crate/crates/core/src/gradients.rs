//! Diffusion gradient schemes in the FSL bvals/bvecs convention.
//!
//! A scheme lists one (b-value, direction) pair per acquisition channel.
//! Channels with `b <= b0_threshold` form the b0 class; all others are
//! diffusion weighted (DW) and carry unit directions.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_B0_THRESHOLD: f64 = 50.0;
pub const DEFAULT_SHELL_TOLERANCE: f64 = 50.0;

/// Directions whose norm falls in this band are renormalized; anything
/// else on a DW channel is treated as a corrupt file.
const NORM_ACCEPT: (f64, f64) = (0.9, 1.1);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientScheme {
    bvalues: Vec<f64>,
    directions: Vec<[f64; 3]>,
    b0_threshold: f64,
}

/// Channels sharing one nominal b-value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Shell {
    pub nominal_bvalue: f64,
    pub channel_indices: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShellRequest {
    pub bvalue: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SubsampleStrategy {
    /// Greedy max-min antipodal angle, seeded with the first direction of each shell.
    FarthestPoint,
    /// Original channel indices of the DW channels to keep.
    Indices(Vec<usize>),
}

/// A reduced scheme and, for each of its channels, the originating channel.
#[derive(Debug, Clone, PartialEq)]
pub struct Subsample {
    pub scheme: GradientScheme,
    pub index_map: Vec<usize>,
}

impl GradientScheme {
    pub fn new(bvalues: Vec<f64>, directions: Vec<[f64; 3]>, b0_threshold: f64) -> Result<Self> {
        if bvalues.is_empty() {
            return Err(Error::Scheme("empty scheme".into()));
        }
        if bvalues.len() != directions.len() {
            return Err(Error::Scheme(format!(
                "{} b-values but {} directions",
                bvalues.len(),
                directions.len()
            )));
        }
        if !b0_threshold.is_finite() || b0_threshold < 0.0 {
            return Err(Error::InvalidParameter(format!("b0 threshold {b0_threshold}")));
        }
        let mut directions = directions;
        for (i, (&b, dir)) in bvalues.iter().zip(directions.iter_mut()).enumerate() {
            if !b.is_finite() || b < 0.0 {
                return Err(Error::Scheme(format!("channel {i}: invalid b-value {b}")));
            }
            if dir.iter().any(|c| !c.is_finite()) {
                return Err(Error::Scheme(format!("channel {i}: non-finite direction")));
            }
            if b <= b0_threshold {
                continue;
            }
            let norm = dir.iter().map(|c| c * c).sum::<f64>().sqrt();
            if !(NORM_ACCEPT.0..=NORM_ACCEPT.1).contains(&norm) {
                return Err(Error::Scheme(format!(
                    "channel {i}: DW direction norm {norm:.4} outside [{}, {}]",
                    NORM_ACCEPT.0, NORM_ACCEPT.1
                )));
            }
            for c in dir.iter_mut() {
                *c /= norm;
            }
        }
        Ok(GradientScheme {
            bvalues,
            directions,
            b0_threshold,
        })
    }

    /// Parses FSL text: `bvals` is one row, `bvecs` three rows (x, y, z).
    /// A column-per-channel bvals file and an N×3 bvecs file are accepted too.
    pub fn parse(bvals_text: &str, bvecs_text: &str, b0_threshold: f64) -> Result<Self> {
        let bvalues: Vec<f64> = bvals_text.split_whitespace().map(parse_number).collect::<Result<_>>()?;
        if bvalues.is_empty() {
            return Err(Error::Parse("empty bvals".into()));
        }
        let rows: Vec<Vec<f64>> = bvecs_text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| l.split_whitespace().map(parse_number).collect::<Result<Vec<_>>>())
            .collect::<Result<_>>()?;
        if rows.is_empty() {
            return Err(Error::Parse("empty bvecs".into()));
        }
        let directions: Vec<[f64; 3]> = if rows.len() == 3 {
            let n = rows[0].len();
            if rows.iter().any(|r| r.len() != n) {
                return Err(Error::Parse("bvecs rows have different lengths".into()));
            }
            (0..n).map(|i| [rows[0][i], rows[1][i], rows[2][i]]).collect()
        } else if rows.iter().all(|r| r.len() == 3) {
            rows.iter().map(|r| [r[0], r[1], r[2]]).collect()
        } else {
            return Err(Error::Parse(format!("bvecs must have 3 rows, found {}", rows.len())));
        };
        if directions.len() != bvalues.len() {
            return Err(Error::Parse(format!(
                "length mismatch: {} bvals vs {} bvecs columns",
                bvalues.len(),
                directions.len()
            )));
        }
        Self::new(bvalues, directions, b0_threshold)
    }

    /// Renders the scheme back to (bvals, bvecs) text.
    pub fn to_fsl(&self) -> (String, String) {
        let join = |it: &mut dyn Iterator<Item = f64>| {
            let mut s = String::new();
            for (k, v) in it.enumerate() {
                if k > 0 {
                    s.push(' ');
                }
                let _ = write!(s, "{v}");
            }
            s.push('\n');
            s
        };
        let bvals = join(&mut self.bvalues.iter().copied());
        let mut bvecs = String::new();
        for axis in 0..3 {
            bvecs.push_str(&join(&mut self.directions.iter().map(|d| d[axis])));
        }
        (bvals, bvecs)
    }

    pub fn len(&self) -> usize {
        self.bvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bvalues.is_empty()
    }

    pub fn bvalues(&self) -> &[f64] {
        &self.bvalues
    }

    pub fn directions(&self) -> &[[f64; 3]] {
        &self.directions
    }

    pub fn b0_threshold(&self) -> f64 {
        self.b0_threshold
    }

    pub fn is_b0(&self, channel: usize) -> bool {
        self.bvalues[channel] <= self.b0_threshold
    }

    pub fn b0_indices(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.is_b0(i)).collect()
    }

    pub fn dw_indices(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| !self.is_b0(i)).collect()
    }

    pub fn n_b0(&self) -> usize {
        (0..self.len()).filter(|&i| self.is_b0(i)).count()
    }

    pub fn n_dw(&self) -> usize {
        self.len() - self.n_b0()
    }

    /// Bootstrap needs both a b0 baseline and something to fit.
    pub fn check_bootstrap_ready(&self) -> Result<()> {
        if self.n_dw() == 0 {
            return Err(Error::Scheme("no DW channel".into()));
        }
        if self.n_b0() == 0 {
            return Err(Error::Scheme("no b0 channel".into()));
        }
        Ok(())
    }

    /// The scheme restricted to `indices`, in the given order.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        if let Some(&bad) = indices.iter().find(|&&i| i >= self.len()) {
            return Err(Error::Scheme(format!(
                "channel {bad} out of range for {} channels",
                self.len()
            )));
        }
        Ok(GradientScheme {
            bvalues: indices.iter().map(|&i| self.bvalues[i]).collect(),
            directions: indices.iter().map(|&i| self.directions[i]).collect(),
            b0_threshold: self.b0_threshold,
        })
    }

    /// Groups DW channels into shells. A channel joins the current shell
    /// while it lies within `tolerance` of the shell's running mean.
    pub fn detect_shells(&self, tolerance: f64) -> Vec<Shell> {
        let mut dw = self.dw_indices();
        dw.sort_by(|&a, &b| self.bvalues[a].total_cmp(&self.bvalues[b]).then(a.cmp(&b)));

        let mut shells: Vec<Shell> = Vec::new();
        let mut sum = 0.0;
        for i in dw {
            let b = self.bvalues[i];
            match shells.last_mut() {
                Some(shell) if (b - sum / shell.channel_indices.len() as f64).abs() <= tolerance => {
                    shell.channel_indices.push(i);
                    sum += b;
                }
                _ => {
                    if let Some(shell) = shells.last_mut() {
                        shell.nominal_bvalue = sum / shell.channel_indices.len() as f64;
                    }
                    shells.push(Shell {
                        nominal_bvalue: b,
                        channel_indices: vec![i],
                    });
                    sum = b;
                }
            }
        }
        if let Some(shell) = shells.last_mut() {
            shell.nominal_bvalue = sum / shell.channel_indices.len() as f64;
        }
        for shell in &mut shells {
            shell.channel_indices.sort_unstable();
        }
        shells
    }

    /// Reduces the scheme to the requested per-shell DW counts plus the
    /// first `b0_count` b0 channels. Selected channels keep their original
    /// relative order.
    pub fn subsample(
        &self,
        requests: &[ShellRequest],
        b0_count: usize,
        strategy: &SubsampleStrategy,
    ) -> Result<Subsample> {
        let shells = self.detect_shells(DEFAULT_SHELL_TOLERANCE);
        let b0 = self.b0_indices();
        if b0_count > b0.len() {
            return Err(Error::InvalidParameter(format!(
                "requested {b0_count} b0 channels, only {} available",
                b0.len()
            )));
        }

        let mut matched: Vec<&Shell> = Vec::with_capacity(requests.len());
        for req in requests {
            let shell = shells
                .iter()
                .find(|s| (s.nominal_bvalue - req.bvalue).abs() <= DEFAULT_SHELL_TOLERANCE)
                .ok_or_else(|| Error::InvalidParameter(format!("no shell at b={}", req.bvalue)))?;
            if matched.iter().any(|m| std::ptr::eq(*m, shell)) {
                return Err(Error::InvalidParameter(format!(
                    "shell b={} requested twice",
                    req.bvalue
                )));
            }
            if req.count > shell.channel_indices.len() {
                return Err(Error::InvalidParameter(format!(
                    "requested {} channels at b={}, shell has {}",
                    req.count,
                    req.bvalue,
                    shell.channel_indices.len()
                )));
            }
            matched.push(shell);
        }

        let mut selected: Vec<usize> = b0[..b0_count].to_vec();
        match strategy {
            SubsampleStrategy::FarthestPoint => {
                for (req, shell) in requests.iter().zip(&matched) {
                    let picks = farthest_point(&self.directions, &shell.channel_indices, req.count);
                    selected.extend(picks);
                }
            }
            SubsampleStrategy::Indices(explicit) => {
                let mut per_shell = vec![0usize; matched.len()];
                for &i in explicit {
                    if i >= self.len() {
                        return Err(Error::InvalidParameter(format!("index {i} out of range")));
                    }
                    let k = matched
                        .iter()
                        .position(|s| s.channel_indices.binary_search(&i).is_ok())
                        .ok_or_else(|| {
                            Error::InvalidParameter(format!("index {i} is not a DW channel of a requested shell"))
                        })?;
                    per_shell[k] += 1;
                }
                for (req, &got) in requests.iter().zip(&per_shell) {
                    if got != req.count {
                        return Err(Error::InvalidParameter(format!(
                            "explicit indices give {got} channels at b={}, expected {}",
                            req.bvalue, req.count
                        )));
                    }
                }
                selected.extend_from_slice(explicit);
            }
        }

        selected.sort_unstable();
        if selected.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidParameter("duplicate channel index".into()));
        }
        let scheme = self.select(&selected)?;
        Ok(Subsample {
            scheme,
            index_map: selected,
        })
    }
}

fn parse_number(token: &str) -> Result<f64> {
    token
        .parse::<f64>()
        .map_err(|_| Error::Parse(format!("non-numeric token {token:?}")))
}

/// Angle between two axes, folding antipodes together: min(θ, π−θ).
pub fn antipodal_angle(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    let dot = a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
    dot.abs().min(1.0).acos()
}

fn farthest_point(directions: &[[f64; 3]], candidates: &[usize], count: usize) -> Vec<usize> {
    if count == 0 || candidates.is_empty() {
        return Vec::new();
    }
    let mut taken = vec![false; candidates.len()];
    let mut min_angle = vec![f64::INFINITY; candidates.len()];
    let mut picks = Vec::with_capacity(count);
    let mut next = 0;
    for _ in 0..count {
        taken[next] = true;
        picks.push(candidates[next]);
        let chosen = directions[candidates[next]];
        let mut best: Option<(usize, f64)> = None;
        for (k, &c) in candidates.iter().enumerate() {
            if taken[k] {
                continue;
            }
            min_angle[k] = min_angle[k].min(antipodal_angle(&chosen, &directions[c]));
            // strict comparison keeps the lowest index on ties
            if best.is_none_or(|(_, a)| min_angle[k] > a) {
                best = Some((k, min_angle[k]));
            }
        }
        match best {
            Some((k, _)) => next = k,
            None => break,
        }
    }
    picks
}
