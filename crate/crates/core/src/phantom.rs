//! Synthetic dMRI data with known ground truth.
//!
//! Multi-tensor phantoms produce `S(b, u) = s0 · Σ_c f_c · exp(−b·uᵀT_cu)`
//! with optional Gaussian or Rician noise. In-span phantoms draw random
//! dictionary coefficients so that the noise-free fit residual is zero.

use std::f64::consts::PI;

use nalgebra::DVector;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::Dictionary;
use crate::error::{Error, Result};
use crate::gradients::GradientScheme;
use crate::rng::{voxel_stream, Substream};
use crate::volumes::{Mask, Volume4D};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Compartment {
    pub direction: [f64; 3],
    /// mm²/s
    pub axial: f64,
    /// mm²/s
    pub radial: f64,
    pub fraction: f64,
}

impl Compartment {
    pub fn isotropic(diffusivity: f64, fraction: f64) -> Self {
        Compartment {
            direction: [0.0, 0.0, 1.0],
            axial: diffusivity,
            radial: diffusivity,
            fraction,
        }
    }

    pub fn stick(direction: [f64; 3], axial: f64, radial: f64, fraction: f64) -> Self {
        Compartment {
            direction,
            axial,
            radial,
            fraction,
        }
    }

    /// exp(−b·uᵀTu) for a prolate tensor around `direction`.
    pub fn attenuation(&self, b: f64, u: &[f64; 3]) -> f64 {
        let d = self.direction;
        let norm = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
        let cos = (d[0] * u[0] + d[1] * u[1] + d[2] * u[2]) / norm;
        let adc = self.radial + (self.axial - self.radial) * cos * cos;
        (-b * adc).exp()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseModel {
    None,
    Gaussian { sigma: f64 },
    Rician { sigma: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TissueLayout {
    /// The same compartments in every voxel.
    Uniform { compartments: Vec<Compartment> },
    /// x-oriented fibres in the low-x third, y-oriented fibres in the
    /// high-x third, an equal crossing in between; a free-water
    /// compartment everywhere.
    Crossing { axial: f64, radial: f64, free_water: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskShape {
    Full,
    /// Ellipsoid inscribed in the grid.
    Ellipsoid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhantomSpec {
    pub dims: [usize; 3],
    pub layout: TissueLayout,
    pub s0: f64,
    pub noise: NoiseModel,
    pub seed: u64,
    pub mask: MaskShape,
}

impl Default for PhantomSpec {
    fn default() -> Self {
        PhantomSpec {
            dims: [32, 32, 32],
            layout: TissueLayout::Crossing {
                axial: 1.7e-3,
                radial: 0.3e-3,
                free_water: 0.1,
            },
            s0: 1000.0,
            noise: NoiseModel::Gaussian { sigma: 20.0 },
            seed: 0,
            mask: MaskShape::Full,
        }
    }
}

pub const FREE_WATER_DIFFUSIVITY: f64 = 3.0e-3;

impl PhantomSpec {
    pub fn n_voxels(&self) -> usize {
        self.dims.iter().product()
    }

    fn compartments_at(&self, x: usize) -> Vec<Compartment> {
        match &self.layout {
            TissueLayout::Uniform { compartments } => compartments.clone(),
            &TissueLayout::Crossing {
                axial,
                radial,
                free_water,
            } => {
                let fibre = 1.0 - free_water;
                let third = self.dims[0] as f64 / 3.0;
                let xf = x as f64 + 0.5;
                let along_x = [1.0, 0.0, 0.0];
                let along_y = [0.0, 1.0, 0.0];
                let mut c = vec![Compartment::isotropic(FREE_WATER_DIFFUSIVITY, free_water)];
                if xf < third {
                    c.push(Compartment::stick(along_x, axial, radial, fibre));
                } else if xf > 2.0 * third {
                    c.push(Compartment::stick(along_y, axial, radial, fibre));
                } else {
                    c.push(Compartment::stick(along_x, axial, radial, fibre / 2.0));
                    c.push(Compartment::stick(along_y, axial, radial, fibre / 2.0));
                }
                c
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dims.contains(&0) {
            return Err(Error::InvalidParameter(format!("phantom dims {:?}", self.dims)));
        }
        if !(self.s0.is_finite() && self.s0 >= 0.0) {
            return Err(Error::InvalidParameter(format!("s0 = {}", self.s0)));
        }
        match self.noise {
            NoiseModel::Gaussian { sigma } | NoiseModel::Rician { sigma } if !(sigma >= 0.0 && sigma.is_finite()) => {
                return Err(Error::InvalidParameter(format!("noise sigma {sigma}")));
            }
            _ => {}
        }
        let check = |cs: &[Compartment]| -> Result<()> {
            let total: f64 = cs.iter().map(|c| c.fraction).sum();
            if (total - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidParameter(format!("volume fractions sum to {total}")));
            }
            for c in cs {
                if !(c.axial > 0.0 && c.radial > 0.0) {
                    return Err(Error::InvalidParameter("diffusivities must be positive".into()));
                }
                if c.fraction.is_nan() || c.fraction < 0.0 {
                    return Err(Error::InvalidParameter("negative volume fraction".into()));
                }
                if c.direction.iter().map(|v| v * v).sum::<f64>() == 0.0 {
                    return Err(Error::InvalidParameter("zero compartment direction".into()));
                }
            }
            Ok(())
        };
        match &self.layout {
            TissueLayout::Uniform { compartments } => check(compartments),
            TissueLayout::Crossing { .. } => (0..self.dims[0]).try_for_each(|x| check(&self.compartments_at(x))),
        }
    }

    pub fn mask(&self) -> Mask {
        let [nx, ny, nz] = self.dims;
        match self.mask {
            MaskShape::Full => Mask::full(self.dims),
            MaskShape::Ellipsoid => {
                let mut m = Mask::empty(self.dims);
                for z in 0..nz {
                    for y in 0..ny {
                        for x in 0..nx {
                            let r = |i: usize, n: usize| (i as f64 + 0.5 - n as f64 / 2.0) / (n as f64 / 2.0);
                            if r(x, nx).powi(2) + r(y, ny).powi(2) + r(z, nz).powi(2) <= 1.0 {
                                m.set(x + nx * (y + ny * z), true);
                            }
                        }
                    }
                }
                m
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct Phantom {
    pub signals: Volume4D,
    pub noise_free: Volume4D,
    pub mask: Mask,
}

pub fn generate(spec: &PhantomSpec, scheme: &GradientScheme) -> Result<Phantom> {
    spec.validate()?;
    let [nx, ny, nz] = spec.dims;
    let nc = scheme.len();
    let mut noise_free = Volume4D::zeros([nx, ny, nz, nc])?;

    noise_free
        .data_mut()
        .par_chunks_mut(nc)
        .enumerate()
        .for_each(|(v, signal)| {
            let comps = spec.compartments_at(v % nx);
            for (ch, s) in signal.iter_mut().enumerate() {
                *s = if scheme.is_b0(ch) {
                    spec.s0
                } else {
                    let b = scheme.bvalues()[ch];
                    let u = &scheme.directions()[ch];
                    spec.s0 * comps.iter().map(|c| c.fraction * c.attenuation(b, u)).sum::<f64>()
                };
            }
        });

    let mut signals = noise_free.clone();
    add_noise(&mut signals, spec.noise, spec.seed);
    Ok(Phantom {
        signals,
        noise_free,
        mask: spec.mask(),
    })
}

/// Adds noise in place. Per-voxel streams make the result independent of scheduling.
pub fn add_noise(volume: &mut Volume4D, noise: NoiseModel, seed: u64) {
    let nc = volume.channels();
    match noise {
        NoiseModel::None => {}
        NoiseModel::Gaussian { sigma: 0.0 } | NoiseModel::Rician { sigma: 0.0 } => {}
        NoiseModel::Gaussian { sigma } => {
            volume
                .data_mut()
                .par_chunks_mut(nc)
                .enumerate()
                .for_each(|(v, signal)| {
                    let mut rng = voxel_stream(seed, 0, 0, v as u64, Substream::Noise);
                    for s in signal.iter_mut() {
                        let n: f64 = StandardNormal.sample(&mut rng);
                        *s += sigma * n;
                    }
                });
        }
        NoiseModel::Rician { sigma } => {
            volume
                .data_mut()
                .par_chunks_mut(nc)
                .enumerate()
                .for_each(|(v, signal)| {
                    let mut rng = voxel_stream(seed, 0, 0, v as u64, Substream::Noise);
                    for s in signal.iter_mut() {
                        let n1: f64 = StandardNormal.sample(&mut rng);
                        let n2: f64 = StandardNormal.sample(&mut rng);
                        *s = ((*s + sigma * n1).powi(2) + (sigma * n2).powi(2)).sqrt();
                    }
                });
        }
    }
}

/// Per voxel `y = D·x` with `x ~ N(0, coefficient_scale²)` i.i.d.; one channel per dictionary row.
pub fn generate_in_span(
    dictionary: &Dictionary,
    dims: [usize; 3],
    seed: u64,
    coefficient_scale: f64,
) -> Result<Volume4D> {
    if dims.contains(&0) {
        return Err(Error::InvalidParameter(format!("phantom dims {dims:?}")));
    }
    let nd = dictionary.n_rows();
    let na = dictionary.n_atoms();
    let mut out = Volume4D::zeros([dims[0], dims[1], dims[2], nd])?;
    let d = dictionary.matrix();
    out.data_mut().par_chunks_mut(nd).enumerate().for_each(|(v, signal)| {
        let mut rng = voxel_stream(seed, 0, 0, v as u64, Substream::Coefficients);
        let x = DVector::from_iterator(
            na,
            (0..na).map(|_| coefficient_scale * Distribution::<f64>::sample(&StandardNormal, &mut rng)),
        );
        let y = d * x;
        signal.copy_from_slice(y.as_slice());
    });
    Ok(out)
}

/// A full scan whose DW channels are in the span of `dictionary` and whose
/// b0 channels equal `s0`.
pub fn in_span_scan(
    dictionary: &Dictionary,
    scheme: &GradientScheme,
    dims: [usize; 3],
    seed: u64,
    coefficient_scale: f64,
    s0: f64,
) -> Result<Volume4D> {
    let dw = generate_in_span(dictionary, dims, seed, coefficient_scale)?;
    let nc = scheme.len();
    let rows = dictionary.channels();
    if rows.iter().any(|&c| c >= nc) {
        return Err(Error::Dimension("dictionary rows do not belong to this scheme".into()));
    }
    let mut out = Volume4D::zeros([dims[0], dims[1], dims[2], nc])?;
    for v in 0..out.n_voxels() {
        let src = dw.voxel(v);
        let dst = out.voxel_mut(v);
        for ch in scheme.b0_indices() {
            dst[ch] = s0;
        }
        for (&ch, &y) in rows.iter().zip(src) {
            dst[ch] = y;
        }
    }
    Ok(out)
}

const HCP_B0_STRIDE: usize = 16;
const HCP_SHELLS: [f64; 3] = [1000.0, 2000.0, 3000.0];
const HCP_PER_SHELL: usize = 90;
/// Per-channel deviation from the nominal shell value, as in HCP bvals files.
const HCP_JITTER: [f64; 5] = [-10.0, -5.0, 0.0, 5.0, 10.0];

/// 288-channel scheme shaped like the HCP protocol: 18 b0 (b = 5) every
/// 16th channel and 90 directions on each of b = 1000/2000/3000, shells
/// interleaved. Directions follow a Fibonacci lattice on the hemisphere,
/// rotated per shell; b-values carry the small per-channel jitter that
/// real HCP schemes have.
pub fn hcp_like_scheme() -> GradientScheme {
    let golden = (1.0 + 5f64.sqrt()) / 2.0;
    let shell_dirs: Vec<Vec<[f64; 3]>> = (0..HCP_SHELLS.len())
        .map(|s| {
            let rot = 0.7 * s as f64;
            (0..HCP_PER_SHELL)
                .map(|k| {
                    let z = 1.0 - (k as f64 + 0.5) / HCP_PER_SHELL as f64;
                    let r = (1.0 - z * z).sqrt();
                    let phi = 2.0 * PI * k as f64 / golden + rot;
                    [r * phi.cos(), r * phi.sin(), z]
                })
                .collect()
        })
        .collect();

    let total = HCP_SHELLS.len() * HCP_PER_SHELL + HCP_SHELLS.len() * HCP_PER_SHELL / (HCP_B0_STRIDE - 1);
    let mut bvalues = Vec::with_capacity(total);
    let mut directions = Vec::with_capacity(total);
    let mut dw = 0;
    for p in 0..total {
        if p % HCP_B0_STRIDE == 0 {
            bvalues.push(5.0);
            directions.push([0.0; 3]);
        } else {
            let shell = dw % HCP_SHELLS.len();
            let k = dw / HCP_SHELLS.len();
            bvalues.push(HCP_SHELLS[shell] + HCP_JITTER[k % HCP_JITTER.len()]);
            directions.push(shell_dirs[shell][k]);
            dw += 1;
        }
    }
    GradientScheme::new(bvalues, directions, crate::gradients::DEFAULT_B0_THRESHOLD).expect("generated scheme is valid")
}
