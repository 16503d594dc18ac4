//! Least-squares projection onto a dictionary, leverages, and
//! leverage-corrected residuals.
//!
//! For design matrix `D` (N_d × N_a) the fit operator holds
//! `P = (DᵀD + λI)⁻¹Dᵀ` and the hat diagonal `h_ii = row_i(D)·P·e_i`.
//! Corrected residuals are `(y_i − ŷ_i) / sqrt(1 − h_ii)`, which restores
//! the noise variance that the projection removes from each channel.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::basis::Dictionary;
use crate::error::{Error, Result};
use crate::volumes::{Mask, Volume4D};

/// Relative singular-value cutoff for the pseudoinverse.
pub const SINGULAR_CUTOFF: f64 = 1e-12;
/// Leverages at or above `1 − LEVERAGE_MARGIN` are refused.
pub const LEVERAGE_MARGIN: f64 = 1e-9;
/// Largest N_d for which the full hat matrix may be formed.
pub const MAX_DENSE_HAT: usize = 1024;

#[derive(Debug, Clone)]
pub struct FitOperator {
    pinv: DMatrix<f64>,
    hat_diag: Vec<f64>,
    inv_sqrt_complement: Vec<f64>,
    ridge: f64,
}

impl FitOperator {
    pub fn new(dictionary: &Dictionary, ridge: f64) -> Result<Self> {
        build_fit_operator(dictionary, ridge)
    }

    /// N_a × N_d.
    pub fn pinv(&self) -> &DMatrix<f64> {
        &self.pinv
    }

    pub fn hat_diag(&self) -> &[f64] {
        &self.hat_diag
    }

    pub fn ridge(&self) -> f64 {
        self.ridge
    }

    pub fn n_rows(&self) -> usize {
        self.pinv.ncols()
    }

    pub fn n_atoms(&self) -> usize {
        self.pinv.nrows()
    }

    /// `H = D·P`, only for small N_d.
    pub fn hat_matrix(&self, dictionary: &Dictionary) -> Option<DMatrix<f64>> {
        (self.n_rows() <= MAX_DENSE_HAT).then(|| dictionary.matrix() * &self.pinv)
    }
}

pub fn build_fit_operator(dictionary: &Dictionary, ridge: f64) -> Result<FitOperator> {
    if !(ridge >= 0.0 && ridge.is_finite()) {
        return Err(Error::InvalidParameter(format!("ridge must be >= 0, got {ridge}")));
    }
    let d = dictionary.matrix();
    let (n_rows, n_atoms) = d.shape();
    if n_rows == 0 || n_atoms == 0 {
        return Err(Error::Dimension(format!("empty dictionary {n_rows}x{n_atoms}")));
    }
    if ridge == 0.0 && n_rows <= n_atoms {
        return Err(Error::Degenerate(format!(
            "{n_rows} DW channels for {n_atoms} atoms: the fit interpolates, every leverage \
             h_ii reaches 1 and the correction (y_i - yhat_i)/sqrt(1 - h_ii) is undefined; \
             lower the radial order or set a ridge"
        )));
    }

    let svd = d.clone().svd(true, true);
    let u = svd.u.as_ref().expect("u requested");
    let v_t = svd.v_t.as_ref().expect("v_t requested");
    let s = &svd.singular_values;
    let s_max = s.iter().cloned().fold(0.0, f64::max);
    if s_max == 0.0 {
        return Err(Error::Degenerate("dictionary is identically zero".into()));
    }

    let mut gain = Vec::with_capacity(s.len());
    for &sk in s.iter() {
        if ridge == 0.0 {
            if sk < SINGULAR_CUTOFF * s_max {
                return Err(Error::Degenerate(format!(
                    "DᵀD is singular: singular value ratio {:.3e} below cutoff {SINGULAR_CUTOFF:e}; \
                     the dictionary columns are linearly dependent on this scheme \
                     (set a ridge or lower the radial order)",
                    sk / s_max
                )));
            }
            gain.push(1.0 / sk);
        } else {
            gain.push(sk / (sk * sk + ridge));
        }
    }

    // P = V · diag(gain) · Uᵀ
    let mut v_scaled = v_t.transpose();
    for (k, g) in gain.iter().enumerate() {
        v_scaled.column_mut(k).scale_mut(*g);
    }
    let pinv = v_scaled * u.transpose();

    let hat_diag: Vec<f64> = (0..n_rows)
        .map(|i| (0..n_atoms).map(|k| d[(i, k)] * pinv[(k, i)]).sum())
        .collect();
    if let Some((i, &h)) = hat_diag.iter().enumerate().find(|(_, &h)| h >= 1.0 - LEVERAGE_MARGIN) {
        return Err(Error::Degenerate(format!(
            "leverage h[{i}] = {h:.12} is 1 to within {LEVERAGE_MARGIN:e}; the corrected \
             residual would divide by zero (lower the number of atoms or raise the ridge)"
        )));
    }
    let inv_sqrt_complement = hat_diag.iter().map(|h| 1.0 / (1.0 - h).sqrt()).collect();
    Ok(FitOperator {
        pinv,
        hat_diag,
        inv_sqrt_complement,
        ridge,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct VoxelFit {
    pub coefficients: Vec<f64>,
    pub fitted: Vec<f64>,
    pub corrected_residuals: Vec<f64>,
}

/// Borrowed view of one voxel's fit inside a [`FitStore`].
#[derive(Debug, Clone, Copy)]
pub struct VoxelFitRef<'a> {
    pub coefficients: &'a [f64],
    pub fitted: &'a [f64],
    pub corrected_residuals: &'a [f64],
}

impl VoxelFit {
    pub fn as_ref(&self) -> VoxelFitRef<'_> {
        VoxelFitRef {
            coefficients: &self.coefficients,
            fitted: &self.fitted,
            corrected_residuals: &self.corrected_residuals,
        }
    }
}

impl<'a> VoxelFitRef<'a> {
    pub fn to_owned(self) -> VoxelFit {
        VoxelFit {
            coefficients: self.coefficients.to_vec(),
            fitted: self.fitted.to_vec(),
            corrected_residuals: self.corrected_residuals.to_vec(),
        }
    }
}

pub fn fit_voxel(op: &FitOperator, dictionary: &Dictionary, y: &[f64]) -> Result<VoxelFit> {
    let mut fit = VoxelFit {
        coefficients: vec![0.0; op.n_atoms()],
        fitted: vec![0.0; op.n_rows()],
        corrected_residuals: vec![0.0; op.n_rows()],
    };
    fit_voxel_into(
        op,
        dictionary,
        y,
        &mut fit.coefficients,
        &mut fit.fitted,
        &mut fit.corrected_residuals,
    )?;
    Ok(fit)
}

fn fit_voxel_into(
    op: &FitOperator,
    dictionary: &Dictionary,
    y: &[f64],
    coefficients: &mut [f64],
    fitted: &mut [f64],
    residuals: &mut [f64],
) -> Result<()> {
    let n_rows = op.n_rows();
    if y.len() != n_rows || dictionary.n_rows() != n_rows {
        return Err(Error::Dimension(format!(
            "signal has {} samples, operator expects {n_rows}",
            y.len()
        )));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidData("non-finite signal sample".into()));
    }
    coefficients.fill(0.0);
    fitted.fill(0.0);
    if y.iter().all(|&v| v == 0.0) {
        residuals.fill(0.0);
        return Ok(());
    }

    // both matrices are column-major, so accumulate column by column
    for (i, &yi) in y.iter().enumerate() {
        for (c, p) in coefficients.iter_mut().zip(op.pinv.column(i).iter()) {
            *c += p * yi;
        }
    }
    let d = dictionary.matrix();
    for (k, &xk) in coefficients.iter().enumerate() {
        for (f, dk) in fitted.iter_mut().zip(d.column(k).iter()) {
            *f += dk * xk;
        }
    }
    for i in 0..n_rows {
        residuals[i] = (y[i] - fitted[i]) * op.inv_sqrt_complement[i];
    }
    Ok(())
}

/// Fits of every masked voxel, stored densely in mask order.
#[derive(Debug, Clone)]
pub struct FitStore {
    dims: [usize; 3],
    n_atoms: usize,
    n_rows: usize,
    channels: Vec<usize>,
    voxels: Vec<usize>,
    slot: Vec<usize>,
    coefficients: Vec<f64>,
    fitted: Vec<f64>,
    residuals: Vec<f64>,
}

const EMPTY: usize = usize::MAX;

impl FitStore {
    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn n_atoms(&self) -> usize {
        self.n_atoms
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    /// Scheme channel index of each fitted sample.
    pub fn channels(&self) -> &[usize] {
        &self.channels
    }

    pub fn len(&self) -> usize {
        self.voxels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.voxels.is_empty()
    }

    /// Linear indices of the fitted voxels, ascending.
    pub fn voxels(&self) -> &[usize] {
        &self.voxels
    }

    pub fn get(&self, voxel: usize) -> Option<VoxelFitRef<'_>> {
        let s = *self.slot.get(voxel)?;
        (s != EMPTY).then(|| self.at_slot(s))
    }

    fn at_slot(&self, s: usize) -> VoxelFitRef<'_> {
        let (na, nd) = (self.n_atoms, self.n_rows);
        VoxelFitRef {
            coefficients: &self.coefficients[s * na..(s + 1) * na],
            fitted: &self.fitted[s * nd..(s + 1) * nd],
            corrected_residuals: &self.residuals[s * nd..(s + 1) * nd],
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, VoxelFitRef<'_>)> {
        self.voxels.iter().enumerate().map(|(s, &v)| (v, self.at_slot(s)))
    }

    /// Fails unless every voxel in `mask` has a fit.
    pub fn check_covers(&self, mask: &Mask) -> Result<()> {
        if mask.dims() != self.dims {
            return Err(Error::Dimension(format!(
                "mask {:?} vs fit store {:?}",
                mask.dims(),
                self.dims
            )));
        }
        if let Some(v) = mask.indices().into_iter().find(|&v| self.slot[v] == EMPTY) {
            return Err(Error::Dimension(format!("fit store has no entry for masked voxel {v}")));
        }
        Ok(())
    }

    fn to_volume(
        &self,
        template: &Volume4D,
        width: usize,
        pick: impl Fn(VoxelFitRef<'_>) -> &[f64],
    ) -> Result<Volume4D> {
        let nvox = self.dims.iter().product::<usize>();
        let mut data = vec![0.0; nvox * width];
        for (v, fit) in self.iter() {
            data[v * width..(v + 1) * width].copy_from_slice(pick(fit));
        }
        template.like(width, data)
    }

    /// Coefficient volume with N_a channels; unfitted voxels are zero.
    pub fn coefficient_volume(&self, template: &Volume4D) -> Result<Volume4D> {
        self.to_volume(template, self.n_atoms, |f| f.coefficients)
    }

    pub fn fitted_volume(&self, template: &Volume4D) -> Result<Volume4D> {
        self.to_volume(template, self.n_rows, |f| f.fitted)
    }

    pub fn residual_volume(&self, template: &Volume4D) -> Result<Volume4D> {
        self.to_volume(template, self.n_rows, |f| f.corrected_residuals)
    }
}

/// Fits every masked voxel of a DW-only volume (channels in dictionary row order).
/// The result does not depend on the rayon worker count.
pub fn fit_volume(op: &FitOperator, dictionary: &Dictionary, dwi: &Volume4D, mask: &Mask) -> Result<FitStore> {
    mask.check_matches(dwi)?;
    let (na, nd) = (op.n_atoms(), op.n_rows());
    if dwi.channels() != nd {
        return Err(Error::Dimension(format!(
            "volume has {} channels, dictionary has {nd} rows",
            dwi.channels()
        )));
    }
    let voxels = mask.indices();
    let mut slot = vec![EMPTY; dwi.n_voxels()];
    for (s, &v) in voxels.iter().enumerate() {
        slot[v] = s;
    }
    let mut coefficients = vec![0.0; voxels.len() * na];
    let mut fitted = vec![0.0; voxels.len() * nd];
    let mut residuals = vec![0.0; voxels.len() * nd];

    coefficients
        .par_chunks_mut(na)
        .zip(fitted.par_chunks_mut(nd))
        .zip(residuals.par_chunks_mut(nd))
        .zip(voxels.par_iter())
        .try_for_each(|(((c, f), r), &v)| {
            fit_voxel_into(op, dictionary, dwi.voxel(v), c, f, r).map_err(|e| match e {
                Error::InvalidData(msg) => Error::InvalidData(format!("voxel {v}: {msg}")),
                other => other,
            })
        })?;

    Ok(FitStore {
        dims: mask.dims(),
        n_atoms: na,
        n_rows: nd,
        channels: dictionary.channels().to_vec(),
        voxels,
        slot,
        coefficients,
        fitted,
        residuals,
    })
}

/// Gathers the dictionary's DW channels from a full scan, then fits.
pub fn fit_scan(op: &FitOperator, dictionary: &Dictionary, scan: &Volume4D, mask: &Mask) -> Result<FitStore> {
    let dwi = scan.gather_channels(dictionary.channels())?;
    fit_volume(op, dictionary, &dwi, mask)
}
